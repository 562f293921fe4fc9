//! Continuous and discrete analogs of the counting maximal function. `A` and
//! the one-sided Hardy–Littlewood maximal function act on step functions;
//! finitely supported sequences get a counting supremum of their own.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval_set::PeriodicIntervalSet;
use crate::rational::{self, big, int, pow2, ExactRational};
use crate::report::{Claim, ClaimKind, Relation, VerificationReport, Witness};
use crate::step::StepFunction;

type Q = ExactRational;

/// Largest number of runs per level read from a step function.
pub const RUN_LIMIT: usize = 1 << 16;

/// Finitely supported nonnegative sequence on `ℤ`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiniteSequence {
    #[serde(with = "entries_serde")]
    entries: BTreeMap<i64, Q>,
}

mod entries_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &BTreeMap<i64, Q>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: BTreeMap<String, String> = m.iter().map(|(k, q)| (k.to_string(), rational::to_string(q))).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<i64, Q>, D::Error> {
        use serde::de::Error as _;
        let raw = BTreeMap::<String, String>::deserialize(d)?;
        let mut out = BTreeMap::new();
        for (k, v) in raw {
            let i: i64 = k.parse().map_err(D::Error::custom)?;
            let q = rational::parse(&v).map_err(D::Error::custom)?;
            if q.is_negative() {
                return Err(D::Error::custom("negative sequence entry"));
            }
            if !q.is_zero() {
                out.insert(i, q);
            }
        }
        Ok(out)
    }
}

impl FiniteSequence {
    pub fn new(entries: impl IntoIterator<Item = (i64, Q)>) -> Result<Self> {
        let mut m = BTreeMap::new();
        for (i, q) in entries {
            if q.is_negative() {
                return Err(Error::InvalidParams(format!("negative entry at {i}")));
            }
            if !q.is_zero() {
                m.insert(i, q);
            }
        }
        Ok(Self { entries: m })
    }

    /// Entries `a_1, a_2, …` from a list.
    pub fn from_slice(values: &[Q]) -> Result<Self> {
        Self::new(values.iter().enumerate().map(|(i, q)| (i as i64 + 1, q.clone())))
    }

    pub fn get(&self, i: i64) -> Q {
        self.entries.get(&i).cloned().unwrap_or_else(Q::zero)
    }

    pub fn support(&self) -> impl Iterator<Item = (&i64, &Q)> {
        self.entries.iter()
    }

    pub fn max(&self) -> Q {
        self.entries.values().max().cloned().unwrap_or_else(Q::zero)
    }
}

/// `max_{1 ≤ n ≤ K} #{k > 0 : a_{k+i}/k > 1/n} / n`.
pub fn seq_counting_sup(a: &FiniteSequence, i: i64, big_k: u64) -> Q {
    let later: Vec<(i64, &Q)> = a.entries.range(i + 1..).map(|(j, q)| (j - i, q)).collect();
    let mut best = Q::zero();
    for n in 1..=big_k {
        let nq = int(n as i64);
        // k < n·a_{k+i}; past k ≥ n·max a nothing counts
        let cap = &nq * a.max();
        let count = later.iter().take_while(|(k, _)| int(*k) < cap).filter(|(k, q)| &nq * *q > int(*k)).count();
        let r = int(count as i64) / &nq;
        if r > best {
            best = r;
        }
    }
    best
}

/// Double loop over `n` and `k`; oracle for [`seq_counting_sup`].
pub fn seq_counting_sup_brute(a: &FiniteSequence, i: i64, big_k: u64) -> Q {
    let mut best = Q::zero();
    for n in 1..=big_k {
        let mut count = 0i64;
        let k_max = rational::ceil(&(int(n as i64) * a.max()));
        let k_max: i64 = k_max.try_into().unwrap_or(i64::MAX);
        for k in 1..=k_max {
            let v = a.get(k + i);
            if v * int(n as i64) > int(k) {
                count += 1;
            }
        }
        let r = rational::ratio(count, n as i64);
        if r > best {
            best = r;
        }
    }
    best
}

/// Which of the two equivalent forms of `A` to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `m{0 < y < x : f(x − y)/y > λ}`
    Lag,
    /// `m{0 < y < x : f(y)/(x − y) > λ}`
    Lead,
}

/// `λ ↦ m(λ)` at its breakpoints, with the attained supremum of `λ·m(λ)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakpointProfile {
    /// `(λ, m(λ))`, λ decreasing
    pub breakpoints: Vec<(String, String)>,
    #[serde(with = "crate::rational::serde_rational")]
    pub value: Q,
    /// the supremum is the `λ → ∞` limit, the left value of `f` at `x`
    pub at_infinity: bool,
}

/// Runs of each level of `f` inside `[0, x)`.
fn level_runs(f: &StepFunction, x: &Q) -> Result<Vec<(Q, Vec<(Q, Q)>)>> {
    let window = PeriodicIntervalSet::window(Q::zero(), x.clone());
    let mut out = Vec::new();
    for (v, s) in f.levels() {
        let part = s.intersect(&window)?;
        let runs = part.runs(RUN_LIMIT + 1)?;
        if runs.len() > RUN_LIMIT {
            return Err(Error::Capacity { needed: runs.len(), limit: RUN_LIMIT });
        }
        if !runs.is_empty() {
            out.push((v.clone(), runs));
        }
    }
    Ok(out)
}

fn check_point(x: &Q) -> Result<()> {
    if !x.is_positive() || x > &int(1) {
        return Err(Error::InvalidParams(format!("x must lie in (0, 1], got {}", rational::to_string(x))));
    }
    Ok(())
}

/// `f(x−)`.
fn left_value(levels: &[(Q, Vec<(Q, Q)>)], x: &Q) -> Q {
    levels
        .iter()
        .find(|(_, runs)| runs.iter().any(|(a, b)| b == x && a < x))
        .map(|(v, _)| v.clone())
        .unwrap_or_else(Q::zero)
}

fn clamp(v: Q, lo: &Q, hi: &Q) -> Q {
    if &v < lo {
        lo.clone()
    } else if &v > hi {
        hi.clone()
    } else {
        v
    }
}

/// `m(1/s)` in either form.
fn mass(levels: &[(Q, Vec<(Q, Q)>)], x: &Q, s: &Q, dir: Direction) -> Q {
    let zero = Q::zero();
    let mut total = Q::zero();
    for (v, runs) in levels {
        let reach = v * s;
        for (a, b) in runs {
            let len = b - a;
            total += match dir {
                // y ∈ (x − b, x − a) with y < v·s
                Direction::Lag => clamp(reach.clone().min(x.clone()) - (x - b), &zero, &len),
                // y ∈ (a, b) with x − y < v·s
                Direction::Lead => clamp(b - a.clone().max(x - &reach), &zero, &len),
            };
        }
    }
    total
}

/// `A(f)(x) = sup_λ λ·m(λ)` by enumerating the breakpoints of `m`, where
/// `s = 1/λ` crosses `(x − a)/v` for a run end `a` of the level `v`.
pub fn a_op(f: &StepFunction, x: &Q, dir: Direction) -> Result<BreakpointProfile> {
    check_point(x)?;
    let levels = level_runs(f, x)?;
    let mut ss: Vec<Q> = Vec::new();
    for (v, runs) in &levels {
        ss.push(x / v);
        for (a, b) in runs {
            for e in [a, b] {
                let d = x - e;
                if d.is_positive() {
                    ss.push(d / v);
                }
            }
        }
    }
    ss.sort();
    ss.dedup();
    let limit = left_value(&levels, x);
    let mut best = limit.clone();
    let mut at_infinity = true;
    let mut breakpoints = Vec::with_capacity(ss.len());
    for s in ss.iter().rev() {
        let m = mass(&levels, x, s, dir);
        let val = &m / s;
        if val > best {
            best = val;
            at_infinity = false;
        }
        breakpoints.push((rational::to_string(&(int(1) / s)), rational::to_string(&m)));
    }
    breakpoints.reverse();
    Ok(BreakpointProfile { breakpoints, value: best, at_infinity })
}

/// `H(f)(x) = sup_{t>0} (1/t)·∫_{x−t}^{x} f` with `f` zero outside `[0, 1)`.
pub fn h_one_sided(f: &StepFunction, x: &Q) -> Result<Q> {
    check_point(x)?;
    let levels = level_runs(f, x)?;
    let mut ts: Vec<Q> = Vec::new();
    for (_, runs) in &levels {
        for (a, b) in runs {
            for e in [a, b] {
                let t = x - e;
                if t.is_positive() {
                    ts.push(t);
                }
            }
        }
    }
    ts.sort();
    ts.dedup();
    let zero = Q::zero();
    let mut best = left_value(&levels, x);
    for t in &ts {
        let lo = x - t;
        let mut integral = Q::zero();
        for (v, runs) in &levels {
            for (a, b) in runs {
                let len = clamp(b - a.clone().max(lo.clone()), &zero, &(b - a));
                integral += v * len;
            }
        }
        let avg = integral / t;
        if avg > best {
            best = avg;
        }
    }
    Ok(best)
}

/// `A(1_B)(x) = H(1_B)(x)` at every sample point.
pub fn verify_indicator_equality(b: &PeriodicIntervalSet, xs: &[Q]) -> Result<VerificationReport> {
    let mut rep = VerificationReport::new("analog.indicator-eq");
    let unit = PeriodicIntervalSet::window(Q::zero(), int(1));
    if !b.difference(&unit)?.is_empty() {
        return Err(Error::InvalidParams("the set must lie in [0, 1)".into()));
    }
    let f = StepFunction::indicator(int(1), b.clone())?;
    let claims: Vec<Claim> = xs
        .par_iter()
        .map(|x| {
            let a = a_op(&f, x, Direction::Lag)?.value;
            let h = h_one_sided(&f, x)?;
            Ok(Claim::exact("analog.indicator.equality", "A and H agree on indicators", a, Relation::Eq, h)
                .with_witness(Witness::point(x.clone())))
        })
        .collect::<Result<_>>()?;
    rep.claims.extend(claims);
    Ok(rep)
}

/// Grid points `(j + 1/2)·2^-g`, `j < 2^g`.
pub fn grid(g: u32) -> Vec<Q> {
    let step = pow2(-(g as i64));
    (0..1u64 << g).map(|j| (big(BigInt::from(j)) + rational::ratio(1, 2)) * &step).collect()
}

/// `max_λ λ^p · #{grid points with value > λ} · 2^-g`; over a sorted list
/// of values this is attained just below one of them.
fn grid_weak_constant(values: &[Q], p: u32, cell: &Q) -> Q {
    let mut sorted: Vec<&Q> = values.iter().filter(|v| v.is_positive()).collect();
    sorted.sort();
    let n = sorted.len();
    let mut best = Q::zero();
    for (i, v) in sorted.iter().enumerate() {
        // values ≥ v: n − i points
        let lam = (*v).clone();
        let c = num_traits::pow(lam, p as usize) * int((n - i) as i64) * cell;
        if c > best {
            best = c;
        }
    }
    best
}

/// Empirical restricted weak type constant of `A` on `1_B` over the grid of
/// `2^g` points, and the slack a grid of that size allows.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeakTypeReading {
    #[serde(with = "crate::rational::serde_rational")]
    pub constant: Q,
    #[serde(with = "crate::rational::serde_rational")]
    pub slack: Q,
    pub grid_log2: u32,
}

pub fn restricted_weak_type(b: &PeriodicIntervalSet, g: u32) -> Result<WeakTypeReading> {
    let mb = b.measure()?;
    if mb.is_zero() {
        return Ok(WeakTypeReading { constant: Q::zero(), slack: Q::zero(), grid_log2: g });
    }
    let f = StepFunction::indicator(int(1), b.clone())?;
    let xs = grid(g);
    let values: Vec<Q> = xs.par_iter().map(|x| a_op(&f, x, Direction::Lag).map(|p| p.value)).collect::<Result<_>>()?;
    let cell = pow2(-(g as i64));
    let constant = grid_weak_constant(&values, 1, &cell) / &mb;
    // {A(1_B) > λ} has at most one component per run of B, each misread by
    // at most one grid cell
    let runs = b.runs(RUN_LIMIT)?.len();
    let slack = int(runs as i64 + 1) * &cell / &mb;
    Ok(WeakTypeReading { constant, slack, grid_log2: g })
}

/// `max_λ λ²·m_grid{A(f) > λ} / ∫f²`, reported only.
pub fn weak_two_constant(f: &StepFunction, g: u32) -> Result<Q> {
    let l2 = f.levels().try_fold(Q::zero(), |acc, (v, s)| Ok::<_, Error>(acc + v * v * s.measure()?))?;
    if l2.is_zero() {
        return Ok(Q::zero());
    }
    let xs = grid(g);
    let values: Vec<Q> = xs.par_iter().map(|x| a_op(f, x, Direction::Lag).map(|p| p.value)).collect::<Result<_>>()?;
    Ok(grid_weak_constant(&values, 2, &pow2(-(g as i64))) / l2)
}

/// Union of random dyadic cells of size `2^-r` inside `[0, 1)`.
pub fn random_dyadic_set(rng: &mut ChaCha8Rng, r: u32) -> PeriodicIntervalSet {
    let cell = pow2(-(r as i64));
    let mut cells = Vec::new();
    let mut j = 0u64;
    while j < 1 << r {
        if rng.gen_bool(0.4) {
            let len = rng.gen_range(1..=4u64).min((1 << r) - j);
            cells.push(crate::interval_set::Family::window(
                big(BigInt::from(j)) * &cell,
                big(BigInt::from(j + len)) * &cell,
            ));
            j += len + 1;
        } else {
            j += 1;
        }
    }
    PeriodicIntervalSet::from_disjoint(cells)
}

/// Random step function on `[0, 1)` with dyadic level sets.
pub fn random_step_function(rng: &mut ChaCha8Rng, r: u32) -> StepFunction {
    let cell = pow2(-(r as i64));
    let mut by_value: BTreeMap<Q, Vec<crate::interval_set::Family>> = BTreeMap::new();
    for j in 0..1u64 << r {
        if rng.gen_bool(0.5) {
            let v = rational::ratio(rng.gen_range(1..=8), rng.gen_range(1..=4));
            by_value.entry(v).or_default().push(crate::interval_set::Family::window(
                big(BigInt::from(j)) * &cell,
                big(BigInt::from(j + 1)) * &cell,
            ));
        }
    }
    let mut f = StepFunction::zero();
    for (v, fams) in by_value {
        f.add_disjoint(v, PeriodicIntervalSet::from_disjoint(fams)).expect("positive values");
    }
    f
}

/// Random points of `(0, 1]` on the `2^-g` grid.
pub fn random_points(rng: &mut ChaCha8Rng, count: usize, g: u32) -> Vec<Q> {
    let step = pow2(-(g as i64));
    (0..count).map(|_| big(BigInt::from(rng.gen_range(1..=1u64 << g))) * &step).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalogSuite {
    pub sets: usize,
    pub points: usize,
    pub sequences: usize,
    pub grid_log2: u32,
    pub seed: u64,
}

impl Default for AnalogSuite {
    fn default() -> Self {
        Self { sets: 100, points: 100, sequences: 500, grid_log2: 12, seed: 0x5eed_2024 }
    }
}

/// Indicator identity plus the sequence oracle. Weak type readings come from
/// the first few sets only.
pub fn run_suite(cfg: &AnalogSuite) -> Result<VerificationReport> {
    let mut rep = VerificationReport::new("analog");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst_weak: Option<WeakTypeReading> = None;
    for i in 0..cfg.sets {
        let r = rng.gen_range(2..=8);
        let b = random_dyadic_set(&mut rng, r);
        let xs = random_points(&mut rng, cfg.points, 10);
        rep.extend(verify_indicator_equality(&b, &xs)?);
        if i < 4 {
            let w = restricted_weak_type(&b, cfg.grid_log2)?;
            rep.push(Claim::sampled(
                "analog.restricted_weak_type",
                "restricted weak type (1,1) of A",
                w.constant.clone(),
                Relation::Le,
                int(1) + &w.slack,
            ));
            if worst_weak.as_ref().map_or(true, |o| w.constant > o.constant) {
                worst_weak = Some(w);
            }
        }
    }
    if let Some(w) = worst_weak {
        rep.info("restricted_weak_type_constant", rational::to_string(&w.constant));
    }
    for _ in 0..cfg.sequences {
        let len = rng.gen_range(1..=100usize);
        let entries: Vec<(i64, Q)> = (0..len)
            .map(|_| (rng.gen_range(-50..=150i64), rational::ratio(rng.gen_range(0..=20), rng.gen_range(1..=6))))
            .collect();
        let a = FiniteSequence::new(entries)?;
        let i = rng.gen_range(-60..=60i64);
        let k = rng.gen_range(1..=100u64);
        rep.push(
            Claim::exact(
                "analog.seq.oracle",
                "sequence counting supremum",
                seq_counting_sup(&a, i, k),
                Relation::Eq,
                seq_counting_sup_brute(&a, i, k),
            )
            .with_witness(Witness::note(format!("i = {i}, K = {k}"))),
        );
    }
    let mut weak2 = Q::zero();
    for _ in 0..4 {
        let f = random_step_function(&mut rng, 5);
        let xs = random_points(&mut rng, 16, 10);
        for x in &xs {
            let lag = a_op(&f, x, Direction::Lag)?.value;
            let lead = a_op(&f, x, Direction::Lead)?.value;
            rep.push(
                Claim::exact("analog.reflection", "both forms of A agree", lag, Relation::Eq, lead)
                    .with_witness(Witness::point(x.clone())),
            );
        }
        let c = weak_two_constant(&f, 8)?;
        if c > weak2 {
            weak2 = c;
        }
    }
    rep.info("weak_2_2_empirical_constant", rational::to_string(&weak2));
    rep.push(Claim::boolean("analog.suite.nonempty", "suite ran", ClaimKind::Exact, !rep.claims.is_empty()));
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    #[test]
    fn delta_sequence() {
        let a = FiniteSequence::new([(1, int(1))]).unwrap();
        assert_eq!(seq_counting_sup(&a, 0, 10), ratio(1, 2));
        assert_eq!(seq_counting_sup_brute(&a, 0, 10), ratio(1, 2));
        assert_eq!(seq_counting_sup(&FiniteSequence::default(), 0, 10), Q::zero());
    }

    #[test]
    fn half_interval_average() {
        let b = PeriodicIntervalSet::window(Q::zero(), ratio(1, 2));
        let f = StepFunction::indicator(int(1), b).unwrap();
        assert_eq!(h_one_sided(&f, &ratio(3, 4)).unwrap(), ratio(2, 3));
        assert_eq!(a_op(&f, &ratio(3, 4), Direction::Lag).unwrap().value, ratio(2, 3));
        assert_eq!(h_one_sided(&f, &ratio(1, 4)).unwrap(), int(1));
    }

    #[test]
    fn full_interval_is_one() {
        let f = StepFunction::indicator(int(1), PeriodicIntervalSet::window(Q::zero(), int(1))).unwrap();
        for x in [ratio(1, 7), ratio(1, 2), int(1)] {
            assert_eq!(a_op(&f, &x, Direction::Lag).unwrap().value, int(1));
            assert_eq!(a_op(&f, &x, Direction::Lead).unwrap().value, int(1));
        }
        let z = StepFunction::zero();
        assert_eq!(a_op(&z, &ratio(1, 2), Direction::Lag).unwrap().value, Q::zero());
        assert_eq!(h_one_sided(&z, &ratio(1, 2)).unwrap(), Q::zero());
    }

    #[test]
    fn points_outside_rejected() {
        let z = StepFunction::zero();
        assert!(a_op(&z, &Q::zero(), Direction::Lag).is_err());
        assert!(h_one_sided(&z, &ratio(3, 2)).is_err());
    }
}
