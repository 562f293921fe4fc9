//! Multi-level systems: a mother base system whose good sets host copies of
//! lower-level systems with staggered startup times, carrying independent
//! variables whose sum the counting ratio dominates.

use std::collections::HashMap;
use std::sync::Arc;

use num_bigint::{BigInt, RandBigInt};
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{self, build_base, BaseParams, BaseSystem, LifeFunction, SamplingPolicy};
use crate::counting::{self, OrbitSpec};
use crate::error::{Error, Result};
use crate::interval_set::{Constraint, Family, PeriodicIntervalSet, DEFAULT_MAX_FAMILIES};
use crate::rational::{self, big, c99, pow2, pow2_int, ExactRational, GridInterval};
use crate::report::{Claim, ClaimKind, Relation, VerificationReport, Witness};
use crate::step::StepFunction;

type Q = ExactRational;

/// Affine life functions `ν_k(N) = N + c_k` of one gain constant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LifeTower {
    pub gain: u32,
    /// `c_1, c_2, …`
    pub coeffs: Vec<u64>,
}

impl LifeTower {
    /// `c_1 = 1`, `c_{k+1} = M·c_k + 20(M-1)`.
    pub fn new(gain: u32, k_max: u32) -> Result<Self> {
        if gain < 2 || k_max == 0 {
            return Err(Error::InvalidParams("life tower needs M ≥ 2 and k ≥ 1".into()));
        }
        let m = gain as u64;
        let mut coeffs = vec![1u64];
        while coeffs.len() < k_max as usize {
            let c = *coeffs.last().unwrap();
            let next = c
                .checked_mul(m)
                .and_then(|v| v.checked_add(20 * (m - 1)))
                .ok_or_else(|| Error::Budget {
                    reason: "life tower coefficient overflow".into(),
                    estimate: format!("c_{} > 2^64", coeffs.len() + 1),
                })?;
            coeffs.push(next);
        }
        Ok(Self { gain, coeffs })
    }

    /// `ν_k` for `k ≥ 1`.
    pub fn life(&self, k: u32) -> LifeFunction {
        LifeFunction::affine(self.coeffs[k as usize - 1])
    }

    /// `c_k` as a big integer, for sizes far beyond `u64`.
    pub fn coeff_big(gain: u32, k: &BigInt) -> BigInt {
        // c_k = (1 + 20) M^{k-1} - 20
        let m = BigInt::from(gain);
        let e: u32 = (k - 1u32).try_into().unwrap_or(u32::MAX);
        BigInt::from(21) * num_traits::pow(m, e as usize) - 20
    }
}

/// `ν_k(N)` by the recursive definition: run the schedule of `ν_{k-1}` from
/// `N` and apply `ν_{k-1}` to its last startup time.
pub fn compositional_life(gain: u32, k: u32, n: u64) -> Result<u64> {
    if k == 1 {
        return Ok(n + 1);
    }
    let mut cur = n;
    for _ in 1..gain {
        cur = compositional_life(gain, k - 1, cur)? + 20;
    }
    compositional_life(gain, k - 1, cur)
}

/// `X` takes values in `{0} ∪ {0.99·2^{-l+1}}` with
/// `μ(X = 0.99·2^{-l+1}) = 0.99·2^{-M+l-1}·μ(I)` for `l = 1..=M`.
pub fn distribution_targets(gain: u32, interval: &GridInterval) -> Vec<(Q, Q)> {
    (1..=gain as i64)
        .map(|l| (c99() * pow2(1 - l), c99() * pow2(l - gain as i64 - 1) * interval.length()))
        .collect()
}

pub fn is_distributed(x: &StepFunction, gain: u32, interval: &GridInterval) -> Result<bool> {
    let targets = distribution_targets(gain, interval);
    if x.level_count() > targets.len() {
        return Ok(false);
    }
    for (v, m) in targets {
        let got = x.levels().find(|(val, _)| **val == v).map(|(_, s)| s.measure()).transpose()?.unwrap_or_else(Q::zero);
        if got != m {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Points of `region` have an `n = 2^e`, `lo ≤ e ≤ hi`, satisfying the
/// counting bound.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessRegion {
    pub region: PeriodicIntervalSet,
    pub lo: u64,
    pub hi: u64,
}

/// Copies of one template on the atoms of one class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChildClass {
    /// `0` for atoms outside every good set of the mother
    pub class: u32,
    pub atoms: PeriodicIntervalSet,
    /// index into [`LevelSystem::templates`]
    pub template: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSystem {
    pub interval: GridInterval,
    pub level: u32,
    pub gain: u32,
    pub startup: u64,
    pub exit: u64,
    pub j0: u64,
    pub j: u64,
    pub f: StepFunction,
    /// `X_1, …, X_k`
    pub variables: Vec<StepFunction>,
    pub witnesses: Vec<WitnessRegion>,
    pub mother: Option<BaseSystem>,
    /// child systems on `[0, 2^-J_{0,0})`, shared between classes
    pub templates: Vec<Arc<LevelSystem>>,
    pub children: Vec<ChildClass>,
    /// Accept startup ≤ max(10, M) and M = 3.
    #[serde(default)]
    pub relaxed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelBudget {
    pub max_level: u32,
    /// largest admissible orbit exponent `J`
    pub max_j: u64,
    pub max_families: usize,
}

impl Default for LevelBudget {
    fn default() -> Self {
        Self { max_level: 3, max_j: 4096, max_families: DEFAULT_MAX_FAMILIES }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelParams {
    pub interval: GridInterval,
    pub level: u32,
    pub gain: u32,
    pub startup: u64,
    /// defaults to the least legal value
    #[serde(default)]
    pub j: Option<u64>,
    #[serde(default)]
    pub relaxed: bool,
}

impl LevelParams {
    pub fn new(interval: GridInterval, level: u32, gain: u32, startup: u64) -> Self {
        Self { interval, level, gain, startup, j: None, relaxed: false }
    }
}

/// Least grid exponent for a level system, without building it.
pub fn required_j0(tower: &LifeTower, level: u32, startup: u64, resolution: u64) -> Result<u64> {
    let mut memo = HashMap::new();
    required_j0_memo(tower, level, startup, resolution, &mut memo)
}

fn required_j0_memo(
    tower: &LifeTower,
    level: u32,
    startup: u64,
    resolution: u64,
    memo: &mut HashMap<(u32, u64, u64), u64>,
) -> Result<u64> {
    if let Some(v) = memo.get(&(level, startup, resolution)) {
        return Ok(*v);
    }
    let life = tower.life(level);
    let sched = base::schedule(&life, startup, tower.gain)?;
    let mother = base::min_j0(resolution, tower.gain, &life, *sched.last().unwrap())?;
    let mut out = mother;
    if level > 1 {
        for &s in &sched {
            out = out.max(required_j0_memo(tower, level - 1, s, mother, memo)?);
        }
    }
    memo.insert((level, startup, resolution), out);
    Ok(out)
}

struct Builder<'a> {
    tower: LifeTower,
    j: u64,
    relaxed: bool,
    budget: &'a LevelBudget,
    memo: HashMap<(u32, u64, u64), Arc<LevelSystem>>,
}

pub fn build_level(params: &LevelParams, budget: &LevelBudget) -> Result<LevelSystem> {
    if params.level == 0 {
        return Err(Error::InvalidParams("level must be at least 1".into()));
    }
    if params.level > budget.max_level {
        return Err(Error::Budget {
            reason: format!("level {} exceeds the configured maximum {}", params.level, budget.max_level),
            estimate: format!("~{}^{} distinct child shapes", params.gain, params.level - 1),
        });
    }
    if params.gain < 63 && (params.level as u64) >= 1u64 << params.gain {
        return Err(Error::InvalidParams("level must be below 2^M".into()));
    }
    let tower = LifeTower::new(params.gain, params.level)?;
    let j0 = required_j0(&tower, params.level, params.startup, params.interval.resolution)?;
    if j0 > budget.max_j {
        return Err(Error::Budget {
            reason: format!("grid exponent J_0 = {j0} exceeds the limit {}", budget.max_j),
            estimate: format!("J_0 = {j0} bits"),
        });
    }
    let j = params.j.unwrap_or(j0);
    if j < j0 {
        return Err(Error::InvalidParams(format!("orbit exponent {j} below J_0 = {j0}")));
    }
    let mut b = Builder { tower, j, relaxed: params.relaxed, budget, memo: HashMap::new() };
    let sys = b.build(params.level, params.startup, &params.interval)?;
    debug_assert_eq!(sys.j0, j0);
    Ok(sys)
}

impl Builder<'_> {
    fn check_size(&self, what: &str, s: &PeriodicIntervalSet) -> Result<()> {
        if s.family_count() > self.budget.max_families {
            return Err(Error::Budget {
                reason: format!("{what} needs {} families", s.family_count()),
                estimate: format!("limit {}", self.budget.max_families),
            });
        }
        Ok(())
    }

    fn template(&mut self, level: u32, startup: u64, resolution: u64) -> Result<Arc<LevelSystem>> {
        if let Some(t) = self.memo.get(&(level, startup, resolution)) {
            return Ok(t.clone());
        }
        let t = Arc::new(self.build(level, startup, &GridInterval::origin(resolution))?);
        self.memo.insert((level, startup, resolution), t.clone());
        Ok(t)
    }

    fn base(&self, level: u32, startup: u64, support: u64, interval: &GridInterval) -> Result<BaseSystem> {
        let mut p = BaseParams::new(self.tower.gain, self.tower.life(level), startup, support, interval.clone());
        p.j = Some(self.j);
        p.relaxed = self.relaxed;
        build_base(p)
    }

    fn build(&mut self, level: u32, startup: u64, interval: &GridInterval) -> Result<LevelSystem> {
        if level == 1 {
            return self.level1(startup, interval);
        }
        let gain = self.tower.gain;
        let mother = self.base(level, startup, level as u64 - 1, interval)?;
        let j00 = mother.j0;
        let atom = -(j00 as i64);
        let exits = mother.exits();

        // class l ≥ 1: atoms of Γ_{l,0}; class 0: the rest of I_0
        let mut classes: Vec<(u32, PeriodicIntervalSet, u64)> = Vec::new();
        let covered = PeriodicIntervalSet::disjoint_union(mother.gammas.iter().cloned());
        let rest = PeriodicIntervalSet::window(interval.start(), interval.end()).difference(&covered)?;
        classes.push((0, rest, startup));
        for (idx, g) in mother.gammas.iter().enumerate() {
            classes.push((idx as u32 + 1, g.clone(), mother.schedule[idx]));
        }

        let mut templates: Vec<Arc<LevelSystem>> = Vec::new();
        let mut children = Vec::new();
        let mut f_parts = vec![mother.f.clone()];
        let mut variables: Vec<Vec<(Q, PeriodicIntervalSet)>> = vec![Vec::new(); level as usize];
        let mut witnesses = Vec::new();
        let targets = distribution_targets(gain, interval);

        for (class, atoms, child_startup) in &classes {
            if atoms.is_empty() {
                continue;
            }
            let t = self.template(level - 1, *child_startup, j00)?;
            let tidx = match templates.iter().position(|x| Arc::ptr_eq(x, &t)) {
                Some(i) => i,
                None => {
                    templates.push(t.clone());
                    templates.len() - 1
                }
            };
            let mut child_f = StepFunction::zero();
            for (v, s) in t.f.levels() {
                let lifted = PeriodicIntervalSet::lift(atoms, atom, s)?;
                self.check_size("lifted f", &lifted)?;
                child_f.add_disjoint(v.clone(), lifted)?;
            }
            f_parts.push(child_f);
            for (h, x) in t.variables.iter().enumerate() {
                for (v, s) in x.levels() {
                    variables[h].push((v.clone(), PeriodicIntervalSet::lift(atoms, atom, s)?));
                }
            }
            for w in &t.witnesses {
                witnesses.push(WitnessRegion { region: PeriodicIntervalSet::lift(atoms, atom, &w.region)?, lo: w.lo, hi: w.hi });
            }
            if *class >= 1 {
                // the new variable: a ρ-fraction of every joint cell of the
                // child variables, so it stays independent of them
                let (value, target) = &targets[*class as usize - 1];
                let rho = target / atoms.measure()?;
                let cells = joint_cells(&t.variables, &t.interval)?;
                let mut pattern = Vec::new();
                for cell in cells {
                    pattern.push(cell.scale_components(&rho)?);
                }
                let pattern = PeriodicIntervalSet::disjoint_union(pattern);
                let lifted = PeriodicIntervalSet::lift(atoms, atom, &pattern)?;
                self.check_size("new variable", &lifted)?;
                variables[level as usize - 1].push((value.clone(), lifted));
            }
            children.push(ChildClass { class: *class, atoms: atoms.clone(), template: tidx });
        }

        let f = StepFunction::disjoint_sum(f_parts)?;
        let variables = variables
            .into_iter()
            .map(|parts| {
                let mut x = StepFunction::zero();
                for (v, s) in parts {
                    x.add_disjoint(v, s)?;
                }
                Ok(x)
            })
            .collect::<Result<Vec<_>>>()?;
        let exit = exits[gain as usize - 1];
        let relaxed = self.relaxed;
        let subtree_j0 = templates.iter().map(|t| t.j0).fold(j00, u64::max);
        Ok(LevelSystem {
            interval: interval.clone(),
            level,
            gain,
            startup,
            exit,
            j0: subtree_j0,
            j: self.j,
            f,
            variables,
            witnesses,
            mother: Some(mother),
            templates,
            children,
            relaxed,
        })
    }

    fn level1(&mut self, startup: u64, interval: &GridInterval) -> Result<LevelSystem> {
        let sys = self.base(1, startup, 0, interval)?;
        let gain = self.tower.gain;
        let targets = distribution_targets(gain, interval);
        let exits = sys.exits();
        let mut x = StepFunction::zero();
        let mut witnesses = Vec::new();
        let mut chosen = Vec::new();
        for (idx, g) in sys.gammas.iter().enumerate() {
            let (value, target) = &targets[idx];
            let rho = target / g.measure()?;
            let sub = g.scale_components(&rho)?;
            x.add_disjoint(value.clone(), sub.clone())?;
            witnesses.push(WitnessRegion { region: sub.clone(), lo: sys.schedule[idx], hi: exits[idx] });
            chosen.push(sub);
        }
        let rest = PeriodicIntervalSet::window(interval.start(), interval.end())
            .difference(&PeriodicIntervalSet::disjoint_union(chosen))?;
        witnesses.push(WitnessRegion { region: rest, lo: startup, hi: startup });
        Ok(LevelSystem {
            interval: interval.clone(),
            level: 1,
            gain,
            startup,
            exit: exits[gain as usize - 1],
            j0: sys.j0,
            j: self.j,
            f: sys.f.clone(),
            variables: vec![x],
            witnesses,
            mother: Some(sys),
            templates: Vec::new(),
            children: Vec::new(),
            relaxed: self.relaxed,
        })
    }
}

/// Level set of `x` at `value`, or its zero set inside `interval` when
/// `value` is `None`.
pub fn level_set(x: &StepFunction, value: Option<&Q>, interval: &GridInterval) -> Result<PeriodicIntervalSet> {
    match value {
        Some(v) => Ok(x.levels().find(|(val, _)| *val == v).map(|(_, s)| s.clone()).unwrap_or_default()),
        None => PeriodicIntervalSet::window(interval.start(), interval.end()).difference(&x.support()),
    }
}

/// Nonempty joint level sets of the variables, zero sets included.
pub fn joint_cells(vars: &[StepFunction], interval: &GridInterval) -> Result<Vec<PeriodicIntervalSet>> {
    let mut cells = vec![PeriodicIntervalSet::window(interval.start(), interval.end())];
    for x in vars {
        let mut next = Vec::new();
        for cell in &cells {
            let mut covered = PeriodicIntervalSet::empty();
            for (_, s) in x.levels() {
                let part = cell.intersect(s)?;
                if !part.is_empty() {
                    covered = PeriodicIntervalSet::disjoint_union([covered, part.clone()]);
                    next.push(part);
                }
            }
            let zero = cell.difference(&covered)?;
            if !zero.is_empty() {
                next.push(zero);
            }
        }
        cells = next;
    }
    Ok(cells)
}

impl LevelSystem {
    pub fn orbit(&self) -> OrbitSpec {
        OrbitSpec::line(self.j)
    }

    /// `Σ_h X_h(x)`.
    pub fn variable_sum(&self, x: &Q) -> Q {
        self.variables.iter().map(|v| v.eval(x)).fold(Q::zero(), |a, b| a + b)
    }

    pub fn witness_for(&self, x: &Q) -> Option<&WitnessRegion> {
        self.witnesses.iter().find(|w| w.region.contains(x))
    }

    /// Copy with `X_target` replaced by `X_source`; a negative control for
    /// the independence check.
    pub fn with_variable_replaced(&self, target: usize, source: usize) -> LevelSystem {
        let mut out = self.clone();
        out.variables[target] = self.variables[source].clone();
        out
    }

    pub fn size_report(&self) -> SizeReport {
        SizeReport {
            level: self.level,
            startup: self.startup,
            j0: self.j0,
            j: self.j,
            f_families: self.f.levels().map(|(_, s)| s.family_count()).sum(),
            variable_families: self.variables.iter().map(|x| x.levels().map(|(_, s)| s.family_count()).sum()).collect(),
            witness_regions: self.witnesses.len(),
            children: self.templates.iter().map(|t| t.size_report()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeReport {
    pub level: u32,
    pub startup: u64,
    pub j0: u64,
    pub j: u64,
    pub f_families: usize,
    pub variable_families: Vec<usize>,
    pub witness_regions: usize,
    pub children: Vec<SizeReport>,
}

/// Random points of `set`, drawn by measure rank.
pub(crate) fn random_points(set: &PeriodicIntervalSet, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Q>> {
    let total = set.measure()?;
    if total.is_zero() {
        return Ok(Vec::new());
    }
    let scale = pow2_int(64);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let u = rng.gen_bigint_range(&BigInt::zero(), &scale);
        let m = (big(u) + rational::ratio(1, 2)) / big(scale.clone()) * &total;
        let t = set.quantile(&m)?;
        if set.contains(&t) {
            out.push(t);
        }
    }
    Ok(out)
}

pub fn verify_level(sys: &LevelSystem, policy: &SamplingPolicy) -> Result<VerificationReport> {
    let mut rep = VerificationReport::new("levelk");
    let k = sys.level;
    let gain = sys.gain;
    let mu = sys.interval.length();
    rep.info("level", k);
    rep.info("J", sys.j);
    rep.info("exit", sys.exit);

    rep.push(Claim::exact(
        "level.f.integral",
        "integral bookkeeping",
        sys.f.integral()?,
        Relation::Eq,
        big(BigInt::from(k)) * pow2(1 - gain as i64) * &mu,
    ));
    let cell = pow2(-(sys.j as i64));
    let residues = Constraint::single(gain as i64 - sys.j as i64, Q::zero(), big(BigInt::from(k)) * &cell)?;
    let outside = sys.f.support().difference(&PeriodicIntervalSet::from_family(Family::everything().with_constraint(residues)))?;
    rep.push(Claim::boolean("level.f.residues", "support residue classes", ClaimKind::Exact, outside.is_empty()));
    let window = PeriodicIntervalSet::window(sys.interval.start(), sys.interval.end());
    rep.push(Claim::boolean(
        "level.f.inside",
        "support inside the interval",
        ClaimKind::Exact,
        sys.f.support().difference(&window)?.is_empty(),
    ));

    for (h, x) in sys.variables.iter().enumerate() {
        for (l, (v, target)) in distribution_targets(gain, &sys.interval).into_iter().enumerate() {
            let got = level_set(x, Some(&v), &sys.interval)?.measure()?;
            rep.push(Claim::exact(
                format!("level.X{}.distribution.l{}", h + 1, l + 1),
                "distribution of the variables",
                got,
                Relation::Eq,
                target,
            ));
        }
        let allowed = x.levels().all(|(v, _)| distribution_targets(gain, &sys.interval).iter().any(|(a, _)| a == v));
        rep.push(Claim::boolean(format!("level.X{}.values", h + 1), "distribution of the variables", ClaimKind::Exact, allowed));
    }

    if let Some(mother) = sys.mother.as_ref().filter(|_| k >= 2) {
        for (l, (_, target)) in distribution_targets(gain, &sys.interval).into_iter().enumerate() {
            rep.push(Claim::exact(
                format!("level.superdistributed.l{}", l + 1),
                "untrimmed variable is superdistributed",
                mother.gammas[l].measure()?,
                Relation::Ge,
                target,
            ));
        }
    }

    rep.extend(verify_independence(sys, policy)?);
    rep.extend(verify_witnesses(sys, policy)?);
    Ok(rep)
}

/// Measures of joint level sets, with zero levels resolved by
/// inclusion–exclusion over the nonzero ones.
struct JointMeasure<'a> {
    /// `levels[h][i]`: set where `X_h` takes its `i`-th nonzero value
    levels: &'a [Vec<PeriodicIntervalSet>],
    whole: Q,
    memo: HashMap<Vec<Option<usize>>, Q>,
}

/// One coordinate of a joint event.
#[derive(Clone, Copy)]
enum Slot {
    Any,
    Zero,
    Value(usize),
}

impl JointMeasure<'_> {
    fn measure(&mut self, slots: &[Slot]) -> Result<Q> {
        if let Some(h) = slots.iter().position(|s| matches!(s, Slot::Zero)) {
            let mut v = slots.to_vec();
            v[h] = Slot::Any;
            let mut out = self.measure(&v)?;
            for i in 0..self.levels[h].len() {
                v[h] = Slot::Value(i);
                out -= self.measure(&v)?;
            }
            return Ok(out);
        }
        let key: Vec<Option<usize>> = slots
            .iter()
            .map(|s| match s {
                Slot::Value(i) => Some(*i),
                _ => None,
            })
            .collect();
        if let Some(m) = self.memo.get(&key) {
            return Ok(m.clone());
        }
        let mut set: Option<PeriodicIntervalSet> = None;
        for (h, slot) in key.iter().enumerate() {
            if let Some(i) = slot {
                let s = &self.levels[h][*i];
                set = Some(match set {
                    None => s.clone(),
                    Some(acc) => acc.intersect(s)?,
                });
            }
        }
        let m = match set {
            None => self.whole.clone(),
            Some(s) => s.measure()?,
        };
        self.memo.insert(key, m.clone());
        Ok(m)
    }
}

/// Product rule over the joint value tuples of the variables.
pub fn verify_independence(sys: &LevelSystem, policy: &SamplingPolicy) -> Result<VerificationReport> {
    let mut rep = VerificationReport::new("levelk.independence");
    let k = sys.variables.len();
    let mu = sys.interval.length();
    let values: Vec<Q> = distribution_targets(sys.gain, &sys.interval).into_iter().map(|(v, _)| v).collect();
    let levels: Vec<Vec<PeriodicIntervalSet>> = sys
        .variables
        .iter()
        .map(|x| values.iter().map(|v| level_set(x, Some(v), &sys.interval)).collect())
        .collect::<Result<_>>()?;
    let mut jm = JointMeasure { levels: &levels, whole: mu.clone(), memo: HashMap::new() };

    // slot index 0 is the zero value
    let width = values.len() + 1;
    let to_slot = |i: usize| if i == 0 { Slot::Zero } else { Slot::Value(i - 1) };
    let mut marg = vec![vec![Q::zero(); width]; k];
    for h in 0..k {
        for i in 0..width {
            let mut slots = vec![Slot::Any; k];
            slots[h] = to_slot(i);
            marg[h][i] = jm.measure(&slots)?;
        }
    }

    let total = (width as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    let exhaustive = total <= policy.tuple_budget as u128;
    let tuples: Vec<Vec<usize>> = if exhaustive {
        (0..total as usize)
            .map(|mut i| {
                (0..k)
                    .map(|_| {
                        let d = i % width;
                        i /= width;
                        d
                    })
                    .collect()
            })
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(policy.seed ^ 0x1dea);
        (0..policy.tuple_budget).map(|_| (0..k).map(|_| rand::Rng::gen_range(&mut rng, 0..width)).collect()).collect()
    };
    let kind = if exhaustive { ClaimKind::Exact } else { ClaimKind::Sampled };
    for t in tuples {
        let slots: Vec<Slot> = t.iter().map(|&i| to_slot(i)).collect();
        let lhs = jm.measure(&slots)?;
        let mut rhs = mu.clone();
        for (h, &i) in t.iter().enumerate() {
            rhs = rhs * &marg[h][i] / &mu;
        }
        let label: Vec<String> = t.iter().map(|i| i.to_string()).collect();
        rep.push(
            Claim::new("level.independence", "independence of the variables", kind, lhs, Relation::Eq, rhs)
                .with_witness(Witness::note(format!("levels ({})", label.join(",")))),
        );
    }
    Ok(rep)
}

/// The counting bound at sampled points, using the stored witness ranges.
pub fn verify_witnesses(sys: &LevelSystem, policy: &SamplingPolicy) -> Result<VerificationReport> {
    let mut rep = VerificationReport::new("levelk.witness");
    for (i, w) in sys.witnesses.iter().enumerate() {
        let ok = sys.startup <= w.lo && w.lo <= w.hi && w.hi <= sys.exit;
        rep.push(
            Claim::boolean("level.witness.range", "witness range inside the life window", ClaimKind::Exact, ok)
                .with_witness(Witness::note(format!("region {i}: [2^{}, 2^{}]", w.lo, w.hi))),
        );
    }
    let cover = PeriodicIntervalSet::disjoint_union(sys.witnesses.iter().map(|w| w.region.clone()));
    rep.push(Claim::exact(
        "level.witness.cover",
        "witness regions cover the interval",
        cover.measure()?,
        Relation::Eq,
        sys.interval.length(),
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed ^ 0x13);
    let window = PeriodicIntervalSet::window(sys.interval.start(), sys.interval.end());
    let mut xs = random_points(&window, policy.random_points, &mut rng)?;
    for w in &sys.witnesses {
        if let Some((s, _)) = w.region.runs(1)?.into_iter().next() {
            xs.push(s);
        }
        xs.extend(random_points(&w.region, 4, &mut rng)?);
    }
    let results: Vec<Claim> = xs
        .par_iter()
        .map(|x| {
            let target = sys.variable_sum(x);
            let Some(w) = sys.witness_for(x) else {
                return Ok(Claim::boolean("level.witness.count", "counting bound at a witness", ClaimKind::Sampled, false)
                    .with_witness(Witness::point(x.clone())));
            };
            let mut best: Option<(BigInt, Q)> = None;
            for n in base::window_ns(w.lo, w.hi) {
                let r = counting::ratio(&sys.f, sys.orbit(), x, &big(n.clone()))?;
                let better = best.as_ref().map_or(true, |(_, b)| &r > b);
                if better {
                    best = Some((n, r));
                }
                if best.as_ref().is_some_and(|(_, b)| b >= &target) {
                    break;
                }
            }
            let (n, r) = best.expect("three candidate n");
            Ok(Claim::sampled("level.witness.count", "counting bound at a witness", r, Relation::Ge, target)
                .with_witness(Witness::at(x.clone(), &n)))
        })
        .collect::<Result<_>>()?;
    for c in results {
        rep.push(c);
    }
    Ok(rep)
}

/// `N_n(f) = N_n(mother part) + Σ N_n(child parts)` at sampled points.
pub fn verify_additivity(sys: &LevelSystem, points: &[(Q, BigInt)]) -> Result<VerificationReport> {
    let mut rep = VerificationReport::new("levelk.additivity");
    let Some(mother) = sys.mother.as_ref().filter(|_| sys.level >= 2) else {
        return Ok(rep);
    };
    let atom = -(mother.j0 as i64);
    let mut parts = vec![mother.f.clone()];
    for c in &sys.children {
        let t = &sys.templates[c.template];
        let mut g = StepFunction::zero();
        for (v, s) in t.f.levels() {
            g.add_disjoint(v.clone(), PeriodicIntervalSet::lift(&c.atoms, atom, s)?)?;
        }
        parts.push(g);
    }
    for (x, n) in points {
        let nq = big(n.clone());
        let whole = counting::count_n(&sys.f, sys.orbit(), x, &nq)?;
        let mut sum = BigInt::zero();
        for p in &parts {
            sum += counting::count_n(p, sys.orbit(), x, &nq)?;
        }
        rep.push(
            Claim::sampled("level.additivity", "disjoint supports add counts", big(whole), Relation::Eq, big(sum))
                .with_witness(Witness::at(x.clone(), n)),
        );
    }
    Ok(rep)
}

/// Grid-aligned sample points `(x, 2^e)` for additivity checks.
pub fn sample_pairs(sys: &LevelSystem, count: usize, seed: u64) -> Result<Vec<(Q, BigInt)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let window = PeriodicIntervalSet::window(sys.interval.start(), sys.interval.end());
    let xs = random_points(&window, count, &mut rng)?;
    Ok(xs
        .into_iter()
        .map(|x| {
            let e = rand::Rng::gen_range(&mut rng, sys.startup..=sys.exit);
            (x, BigInt::one() << e as usize)
        })
        .collect())
}
