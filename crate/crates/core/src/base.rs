//! Single-scale counting systems: the nested dyadic cascade `B_M, …, B_1`
//! of a grid interval, the good sets `Γ_l ⊆ B_l` and the sparse function
//! `f` whose counting ratio is large on each `Γ_l` for its own window of `n`.

use std::collections::BTreeMap;

use num_bigint::{BigInt, RandBigInt};
use num_traits::{Signed, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counting::{self, OrbitSpec};
use crate::error::{Error, Result};
use crate::interval_set::{Constraint, Family, PeriodicIntervalSet};
use crate::rational::{self, big, c99, int, pow2, pow2_int, ratio, ExactRational, GridInterval};
use crate::report::{Claim, ClaimKind, Relation, VerificationReport, Witness};
use crate::step::StepFunction;

type Q = ExactRational;

/// A map `ν` with `ν(N) > N`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LifeFunction {
    /// `N ↦ N + c`
    Affine { c: u64 },
    Tabulated { table: BTreeMap<u64, u64> },
}

impl LifeFunction {
    pub fn affine(c: u64) -> Self {
        LifeFunction::Affine { c }
    }

    /// `N ↦ N + 1`
    pub fn successor() -> Self {
        Self::affine(1)
    }

    pub fn apply(&self, n: u64) -> Result<u64> {
        let v = match self {
            LifeFunction::Affine { c } => n
                .checked_add(*c)
                .ok_or_else(|| Error::Budget { reason: "life function overflow".into(), estimate: format!("{n}+{c}") })?,
            LifeFunction::Tabulated { table } => *table
                .get(&n)
                .ok_or_else(|| Error::InvalidParams(format!("life function has no value at {n}")))?,
        };
        if v <= n {
            return Err(Error::InvalidParams(format!("life function value {v} at {n} is not larger")));
        }
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LifeFunction::Affine { c } if *c == 0 => Err(Error::InvalidParams("affine life function needs c > 0".into())),
            LifeFunction::Tabulated { table } => {
                for (n, v) in table {
                    if v <= n {
                        return Err(Error::InvalidParams(format!("life function value {v} at {n} is not larger")));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Startup times `N_1 < … < N_M` with `N_l = 20 + ν(N_{l-1})`.
pub fn schedule(life: &LifeFunction, n1: u64, m: u32) -> Result<Vec<u64>> {
    let mut out = Vec::with_capacity(m as usize);
    out.push(n1);
    for _ in 1..m {
        let prev = *out.last().unwrap();
        let next = life
            .apply(prev)?
            .checked_add(20)
            .ok_or_else(|| Error::Budget { reason: "schedule overflow".into(), estimate: prev.to_string() })?;
        out.push(next);
    }
    Ok(out)
}

/// Least `J_0` with `2^10 · 2^ν(N_M) · 2^(M+10) · 2^-J_0 < 2^-R`.
pub fn min_j0(resolution: u64, m: u32, life: &LifeFunction, n_top: u64) -> Result<u64> {
    let v = life.apply(n_top)?;
    v.checked_add(m as u64 + 21 + resolution)
        .ok_or_else(|| Error::Budget { reason: "J_0 overflow".into(), estimate: v.to_string() })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseParams {
    /// gain constant `M`
    pub gain: u32,
    pub life: LifeFunction,
    /// startup time `N_1`
    pub startup: u64,
    /// support residue `S` modulo `2^M`
    pub support: u64,
    pub interval: GridInterval,
    /// orbit exponent; `None` means the least legal value `J_0`
    #[serde(default)]
    pub j: Option<u64>,
    /// Accept `M = 3` and `N_1 ≤ max(10, M)`.
    #[serde(default)]
    pub relaxed: bool,
}

impl BaseParams {
    pub fn new(gain: u32, life: LifeFunction, startup: u64, support: u64, interval: GridInterval) -> Self {
        Self { gain, life, startup, support, interval, j: None, relaxed: false }
    }

    pub fn validate(&self) -> Result<()> {
        self.life.validate()?;
        let min_gain = if self.relaxed { 3 } else { 4 };
        if self.gain < min_gain || self.gain > 60 {
            return Err(Error::InvalidParams(format!("gain constant must be in {min_gain}..=60, got {}", self.gain)));
        }
        if !self.relaxed && self.startup <= 10.max(self.gain as u64) {
            return Err(Error::InvalidParams(format!(
                "startup time must exceed max(10, M) = {}, got {}",
                10.max(self.gain),
                self.startup
            )));
        }
        if self.startup == 0 {
            return Err(Error::InvalidParams("startup time must be positive".into()));
        }
        if self.support >= 1u64 << self.gain {
            return Err(Error::InvalidParams(format!("support constant {} is not below 2^M", self.support)));
        }
        Ok(())
    }
}

/// Exponents shared by construction and verification.
#[derive(Clone, Debug)]
struct Scales {
    m: i64,
    j0: i64,
    /// `log2 L_l` for `l = 1..=M+1`, index `l-1`; `L_1` is unused
    block: Vec<i64>,
    /// `log2` of the erosion length for `Γ_l`, index `l-1`
    erosion: Vec<i64>,
}

impl Scales {
    fn new(p: &BaseParams, sched: &[u64], j0: u64) -> Result<Self> {
        let m = p.gain as i64;
        let j0 = j0 as i64;
        let mut block = vec![0; p.gain as usize + 1];
        for l in 2..=p.gain as usize {
            block[l - 1] = sched[l - 1] as i64 + m - j0;
        }
        block[p.gain as usize] = -(p.interval.resolution as i64);
        let mut erosion = Vec::with_capacity(p.gain as usize);
        for &n in sched {
            erosion.push(m + 10 + p.life.apply(n)? as i64 - j0);
        }
        Ok(Self { m, j0, block, erosion })
    }

    /// `log2 L_l` for `2 ≤ l ≤ M+1`.
    fn l(&self, l: usize) -> i64 {
        self.block[l - 1]
    }

    /// `x mod 2L_l ∈ [L_l, 2L_l)`: odd blocks at scale `l`.
    fn odd(&self, l: usize) -> Constraint {
        let e = self.l(l);
        Constraint::single(e + 1, pow2(e), pow2(e + 1)).expect("odd half of a period")
    }

    fn even(&self, l: usize) -> Constraint {
        let e = self.l(l);
        Constraint::single(e + 1, Q::zero(), pow2(e)).expect("even half of a period")
    }

    /// `log2` of the block length `h·2^-J = h_0·2^-J_0`.
    fn h_block(&self) -> i64 {
        self.m + 10 - self.j0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseSystem {
    pub params: BaseParams,
    pub schedule: Vec<u64>,
    pub j0: u64,
    pub j: u64,
    #[serde(with = "crate::rational::serde_bigint")]
    pub h0: BigInt,
    #[serde(with = "crate::rational::serde_bigint")]
    pub h: BigInt,
    /// `B_1, …, B_M`
    pub cascade: Vec<PeriodicIntervalSet>,
    /// `Γ_1, …, Γ_M`
    pub gammas: Vec<PeriodicIntervalSet>,
    pub f: StepFunction,
}

fn window(i: &GridInterval) -> Family {
    Family::window(i.start(), i.end())
}

/// The cascade `B_1..B_M` of `I`.
fn build_cascade(p: &BaseParams, sc: &Scales) -> Vec<PeriodicIntervalSet> {
    let m = p.gain as usize;
    let mut out = Vec::with_capacity(m);
    for level in 1..=m {
        let mut cs: Vec<Constraint> = ((level + 1).max(2)..=m).map(|i| sc.odd(i)).collect();
        if level >= 2 {
            cs.push(sc.even(level));
        }
        let w = window(&p.interval);
        out.push(PeriodicIntervalSet::from_family(cs.into_iter().fold(w, |f, c| f.with_constraint(c))));
    }
    out
}

/// `⋃_{i ≤ level} B_i`: the odd blocks of every coarser scale.
fn lower_union(p: &BaseParams, sc: &Scales, level: usize) -> PeriodicIntervalSet {
    let cs = (level + 1..=p.gain as usize).map(|i| sc.odd(i));
    PeriodicIntervalSet::from_family(cs.fold(window(&p.interval), |f, c| f.with_constraint(c)))
}

/// `Γ_l`: points of `B_l` whose right neighbourhood of the erosion length
/// stays inside the `L_{l+1}` block of `⋃_{i ≤ l} B_i` containing them.
fn build_gammas(cascade: &[PeriodicIntervalSet], sc: &Scales) -> Vec<PeriodicIntervalSet> {
    cascade
        .iter()
        .enumerate()
        .map(|(idx, b)| {
            let level = idx + 1;
            let outer = sc.l(level + 1);
            let keep = pow2(outer) - pow2(sc.erosion[idx]);
            let c = Constraint::single(outer, Q::zero(), keep).expect("erosion inside block");
            let fam = b.families()[0].with_constraint(c);
            PeriodicIntervalSet::from_family(fam)
        })
        .collect()
}

fn build_f(b1: &PeriodicIntervalSet, sc: &Scales, j: u64, residue: u64, h: &BigInt) -> Result<StepFunction> {
    let cell = pow2(-(j as i64));
    let start = big(BigInt::from(residue)) * &cell;
    let c = Constraint::single(sc.h_block(), start.clone(), start + cell)?;
    let support = PeriodicIntervalSet::from_disjoint(b1.families().iter().map(|f| f.with_constraint(c.clone())).collect());
    StepFunction::indicator(big(h.clone()), support)
}

pub fn build_base(params: BaseParams) -> Result<BaseSystem> {
    params.validate()?;
    let sched = schedule(&params.life, params.startup, params.gain)?;
    let j0 = min_j0(params.interval.resolution, params.gain, &params.life, *sched.last().unwrap())?;
    let j = params.j.unwrap_or(j0);
    if j < j0 {
        return Err(Error::InvalidParams(format!("orbit exponent {j} below J_0 = {j0}")));
    }
    let sc = Scales::new(&params, &sched, j0)?;
    let cascade = build_cascade(&params, &sc);
    let gammas = build_gammas(&cascade, &sc);
    let h0 = pow2_int(params.gain as u64 + 10);
    let h = pow2_int(params.gain as u64 + 10 + j - j0);
    let f = build_f(&cascade[0], &sc, j, params.support, &h)?;
    Ok(BaseSystem { params, schedule: sched, j0, j, h0, h, cascade, gammas, f })
}

impl BaseSystem {
    pub fn gain(&self) -> u32 {
        self.params.gain
    }

    pub fn orbit(&self) -> OrbitSpec {
        OrbitSpec::line(self.j)
    }

    /// `ν(N_l)` for `l = 1..=M`.
    pub fn exits(&self) -> Vec<u64> {
        self.schedule.iter().map(|&n| self.params.life.apply(n).expect("validated life function")).collect()
    }

    /// The same cascade with `f` placed on residue `residue` instead of `S`;
    /// a negative control for the counting bound.
    pub fn with_support_residue(&self, residue: u64) -> Result<BaseSystem> {
        let sc = Scales::new(&self.params, &self.schedule, self.j0)?;
        let mut out = self.clone();
        out.f = build_f(&self.cascade[0], &sc, self.j, residue, &self.h)?;
        Ok(out)
    }

    /// Log2 of the length of the blocks `I'` making up `⋃_{i ≤ level} B_i`.
    pub fn component_log2(&self, level: usize) -> i64 {
        let sc = Scales::new(&self.params, &self.schedule, self.j0).expect("built system");
        sc.l(level + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPolicy {
    pub seed: u64,
    /// component left endpoints checked per set
    pub endpoint_cap: usize,
    /// additional random grid points per set
    pub random_points: usize,
    /// value tuples checked exactly before switching to sampling
    pub tuple_budget: usize,
}

impl Default for SamplingPolicy {
    fn default() -> Self {
        Self { seed: 0x5eed_2024, endpoint_cap: 64, random_points: 100, tuple_budget: 4096 }
    }
}

/// Left endpoints of the first runs of `set` plus random cells of the
/// `2^-grid` grid inside it. `set` must be a union of such cells.
pub fn sample_points(set: &PeriodicIntervalSet, grid: u64, policy: &SamplingPolicy, salt: u64) -> Result<Vec<Q>> {
    let mut pts: Vec<Q> = set.runs(policy.endpoint_cap)?.into_iter().map(|(s, _)| s).collect();
    let cell = pow2(-(grid as i64));
    let cells = set.measure()? / &cell;
    debug_assert!(cells.is_integer());
    let cells = cells.to_integer();
    if cells.is_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(policy.seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        for _ in 0..policy.random_points {
            let u = rng.gen_bigint_range(&BigInt::zero(), &cells);
            let t = set.quantile(&((big(u) + ratio(1, 2)) * &cell))?;
            pts.push(big(rational::floor(&(&t / &cell))) * &cell);
        }
    }
    Ok(pts)
}

/// `2^a`, `2^floor((a+b)/2)`, `2^b`.
pub fn window_ns(a: u64, b: u64) -> Vec<BigInt> {
    vec![pow2_int(a), pow2_int((a + b) / 2), pow2_int(b)]
}

pub fn verify_base(sys: &BaseSystem, policy: &SamplingPolicy) -> Result<VerificationReport> {
    let p = &sys.params;
    let m = p.gain as usize;
    let mu_i = p.interval.length();
    let sc = Scales::new(p, &sys.schedule, sys.j0)?;
    let mut rep = VerificationReport::new("base");
    rep.info("schedule", format!("{:?}", sys.schedule));
    rep.info("J0", sys.j0);
    rep.info("J", sys.j);

    // J_0 is the least exponent with 2^10 · 2^ν(N_M) · h_0 · 2^-J_0 < 2^-R
    let top = p.life.apply(sys.schedule[m - 1])? as i64;
    let lhs = |j0: i64| pow2(10 + top + p.gain as i64 + 10 - j0);
    rep.push(Claim::exact("base.j0.admissible", "grid exponent bound", lhs(sys.j0 as i64), Relation::Lt, mu_i.clone()));
    rep.push(Claim::exact("base.j0.least", "grid exponent bound", lhs(sys.j0 as i64 - 1), Relation::Ge, mu_i.clone()));

    let meas: Vec<Q> = sys.cascade.iter().map(|b| b.measure()).collect::<Result<_>>()?;
    for (l, mb) in meas.iter().enumerate().skip(1) {
        let level = l + 1;
        rep.push(Claim::exact(
            format!("base.measure.B{level}"),
            "cascade measure",
            mb.clone(),
            Relation::Eq,
            &mu_i * pow2(level as i64 - m as i64 - 1),
        ));
    }
    rep.push(Claim::exact("base.measure.B1", "cascade measure", meas[0].clone(), Relation::Eq, &mu_i * pow2(1 - m as i64)));

    let union = sys.cascade.iter().skip(1).try_fold(sys.cascade[0].clone(), |acc, b| acc.union(b))?;
    rep.push(Claim::exact("base.partition.measure", "cascade partition", union.measure()?, Relation::Eq, mu_i.clone()));
    let mut disjoint = true;
    for a in 0..m {
        for b in a + 1..m {
            disjoint &= sys.cascade[a].intersect(&sys.cascade[b])?.is_empty();
        }
    }
    rep.push(Claim::boolean("base.partition.disjoint", "cascade partition", ClaimKind::Exact, disjoint));

    for (idx, g) in sys.gammas.iter().enumerate() {
        let level = idx + 1;
        let mg = g.measure()?;
        rep.push(Claim::exact(
            format!("base.gamma{level}.measure"),
            "good set measure",
            mg.clone(),
            Relation::Gt,
            c99() * pow2(level as i64 - m as i64 - 1) * &mu_i,
        ));
        rep.push(Claim::exact(
            format!("base.gamma{level}.erosion"),
            "good set erosion",
            mg.clone(),
            Relation::Gt,
            c99() * &meas[idx],
        ));
        rep.push(Claim::boolean(
            format!("base.gamma{level}.subset"),
            "good set inside cascade",
            ClaimKind::Exact,
            g.difference(&sys.cascade[idx])?.is_empty(),
        ));
        rep.push(Claim::boolean(
            format!("base.gamma{level}.grid"),
            "good set grid alignment",
            ClaimKind::Exact,
            on_grid(g, sys.j0),
        ));
    }

    // f
    let integral = sys.f.integral()?;
    rep.push(Claim::exact("base.f.integral", "integral of f", integral, Relation::Eq, &mu_i * pow2(1 - m as i64)));
    let support = sys.f.support();
    let upper = sys.cascade.iter().skip(1).try_fold(PeriodicIntervalSet::empty(), |acc, b| acc.union(b))?;
    rep.push(Claim::boolean(
        "base.f.vanishes_off_B1",
        "support of f",
        ClaimKind::Exact,
        support.intersect(&upper)?.is_empty(),
    ));
    let cell = pow2(-(sys.j as i64));
    let residue = Constraint::single(
        p.gain as i64 - sys.j as i64,
        big(BigInt::from(p.support)) * &cell,
        big(BigInt::from(p.support + 1)) * &cell,
    )?;
    let off_residue = support.difference(&PeriodicIntervalSet::from_family(Family::everything().with_constraint(residue)))?;
    rep.push(Claim::boolean("base.f.residue", "support residue class", ClaimKind::Exact, off_residue.is_empty()));
    let values_ok = sys.f.level_count() == 1 && sys.f.max_value() == big(sys.h.clone());
    rep.push(Claim::boolean("base.f.values", "values of f", ClaimKind::Exact, values_ok));
    if let Some((s, e)) = sys.cascade[0].runs(1)?.into_iter().next() {
        let comp = PeriodicIntervalSet::window(s, e);
        let hits = support.intersect(&comp)?.measure()? / &cell;
        rep.push(Claim::exact(
            "base.f.per_block",
            "value-h cells per block",
            hits,
            Relation::Eq,
            pow2(sys.schedule.get(1).copied().unwrap_or(sys.schedule[0]) as i64 - 10),
        ));
    }

    // equidistribution inside the blocks of ⋃_{i ≤ l} B_i
    for level in 2..=m {
        let u = lower_union(p, &sc, level);
        let below = lower_union(p, &sc, level - 1);
        for (s, e) in u.runs(3)? {
            let comp = PeriodicIntervalSet::window(s.clone(), e.clone());
            let half = (&e - &s) / int(2);
            rep.push(
                Claim::exact(
                    format!("base.equidistribution.B{level}"),
                    "equal distribution in blocks",
                    sys.cascade[level - 1].intersect(&comp)?.measure()?,
                    Relation::Eq,
                    half.clone(),
                )
                .with_witness(Witness::point(s.clone())),
            );
            rep.push(
                Claim::exact(
                    format!("base.equidistribution.below{level}"),
                    "equal distribution in blocks",
                    below.intersect(&comp)?.measure()?,
                    Relation::Eq,
                    half,
                )
                .with_witness(Witness::point(s)),
            );
        }
    }

    // structure does not depend on J
    let mut shifted = p.clone();
    shifted.j = Some(sys.j + 3);
    let other = build_base(shifted)?;
    rep.push(Claim::boolean(
        "base.j_independence",
        "cascade independent of J",
        ClaimKind::Exact,
        other.cascade == sys.cascade && other.gammas == sys.gammas,
    ));

    rep.extend(verify_counting(sys, policy)?);
    Ok(rep)
}

/// Every endpoint of `set` lies on the `2^-grid` grid.
pub fn on_grid(set: &PeriodicIntervalSet, grid: u64) -> bool {
    let g = pow2_int(grid);
    let ok = |q: &Q| (q * big(g.clone())).is_integer();
    set.families().iter().all(|f| {
        f.lo().map_or(true, ok)
            && f.hi().map_or(true, ok)
            && f.constraints().iter().all(|c| ok(&c.period()) && c.pieces.iter().all(|p| ok(&p.start) && ok(&p.end)))
    })
}

/// Sampled counting bound on each `Γ_l` and the window density of `B_1`.
pub fn verify_counting(sys: &BaseSystem, policy: &SamplingPolicy) -> Result<VerificationReport> {
    let mut rep = VerificationReport::new("base.counting");
    let exits = sys.exits();
    let step_len = pow2(-(sys.j as i64));
    for (idx, g) in sys.gammas.iter().enumerate() {
        let level = idx + 1;
        let bound = c99() * pow2(1 - level as i64);
        let xs = sample_points(g, sys.j0, policy, level as u64)?;
        let ns = window_ns(sys.schedule[idx], exits[idx]);
        let jobs: Vec<(Q, BigInt)> = xs.iter().flat_map(|x| ns.iter().map(move |n| (x.clone(), n.clone()))).collect();
        let results: Vec<(Q, BigInt, Q, Q)> = jobs
            .par_iter()
            .map(|(x, n)| {
                let r = counting::ratio(&sys.f, sys.orbit(), x, &big(n.clone()))?;
                let w = big(n * &sys.h) * &step_len;
                let dens = sys.cascade[0].intersect(&PeriodicIntervalSet::window(x.clone(), x + &w))?.measure()?;
                Ok((x.clone(), n.clone(), r, dens / w))
            })
            .collect::<Result<_>>()?;
        let density_bound = ratio(199, 200) * pow2(1 - level as i64);
        for (x, n, r, d) in results {
            rep.push(
                Claim::sampled(format!("base.count.gamma{level}"), "counting lower bound", r, Relation::Gt, bound.clone())
                    .with_witness(Witness::at(x.clone(), &n)),
            );
            rep.push(
                Claim::sampled(format!("base.density.gamma{level}"), "window density of B1", d, Relation::Gt, density_bound.clone())
                    .with_witness(Witness::at(x, &n)),
            );
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BaseParams {
        BaseParams::new(4, LifeFunction::successor(), 11, 0, GridInterval::unit())
    }

    #[test]
    fn schedules() {
        assert_eq!(schedule(&LifeFunction::successor(), 11, 4).unwrap(), vec![11, 32, 53, 74]);
        assert_eq!(schedule(&LifeFunction::successor(), 11, 2).unwrap(), vec![11, 32]);
        assert_eq!(schedule(&LifeFunction::affine(85), 11, 3).unwrap(), vec![11, 116, 221]);
    }

    #[test]
    fn tabulated_life_missing_value() {
        let t = LifeFunction::Tabulated { table: [(11, 12)].into_iter().collect() };
        assert!(schedule(&t, 11, 3).is_err());
        assert_eq!(schedule(&t, 11, 2).unwrap(), vec![11, 32]);
    }

    #[test]
    fn least_j0() {
        let l = LifeFunction::successor();
        assert_eq!(min_j0(0, 4, &l, 74).unwrap(), 100);
        assert_eq!(min_j0(3, 4, &l, 74).unwrap(), 103);
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = small();
        p.support = 16;
        assert!(build_base(p).is_err());
        let mut p = small();
        p.startup = 10;
        assert!(build_base(p).is_err());
        let mut p = small();
        p.gain = 3;
        assert!(build_base(p).is_err());
        let mut p = small();
        p.j = Some(99);
        assert!(build_base(p).is_err());
    }

    #[test]
    fn cascade_measures() {
        let sys = build_base(small()).unwrap();
        let ms: Vec<Q> = sys.cascade.iter().map(|b| b.measure().unwrap()).collect();
        assert_eq!(ms, vec![ratio(1, 8), ratio(1, 8), ratio(1, 4), ratio(1, 2)]);
        assert_eq!(sys.f.integral().unwrap(), ratio(1, 8));
    }
}
