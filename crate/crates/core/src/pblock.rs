//! p-blocks: a level-`2^p` system on `[0, 1)` under the rotation mod 1, the
//! exact moments of its variables, the Chebyshev tail step, the threshold
//! set `Λ_p` and the normalized blow-up certificate.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{self, SamplingPolicy};
use crate::counting::{self, OrbitSpec};
use crate::error::{Error, Result};
use crate::interval_set::PeriodicIntervalSet;
use crate::level::{self, build_level, LevelBudget, LevelParams, LevelSystem};
use crate::rational::{self, big, c99, floor, int, pow2, ExactRational, GridInterval};
use crate::report::{Claim, ClaimKind, Relation, VerificationReport, Witness};
use crate::step::StepFunction;

type Q = ExactRational;

/// Closed rational interval `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bracket {
    #[serde(with = "crate::rational::serde_rational")]
    pub lo: Q,
    #[serde(with = "crate::rational::serde_rational")]
    pub hi: Q,
}

impl Bracket {
    pub fn exact(v: Q) -> Self {
        Self { lo: v.clone(), hi: v }
    }

    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    pub fn width(&self) -> Q {
        &self.hi - &self.lo
    }

    pub fn contains(&self, q: &Q) -> bool {
        &self.lo <= q && q <= &self.hi
    }
}

/// `⌊log2 r⌋` for `r > 0`.
pub fn floor_log2(r: &Q) -> i64 {
    assert!(r.is_positive(), "log of a nonpositive number");
    let (n, d) = (r.numer(), r.denom());
    let t = n.bits() as i64 - d.bits() as i64;
    let below = if t >= 0 { n < &(d << t as usize) } else { &(n << (-t) as usize) < d };
    if below {
        t - 1
    } else {
        t
    }
}

/// Rational bounds on `log2 r` of width at most `2^-s`, exact for powers of
/// two. Repeated squaring on fixed-point values rounded down (lower chain)
/// and up (upper chain).
pub fn log2_bracket(r: &Q, s: u32) -> Bracket {
    let e = floor_log2(r);
    let y = r * pow2(-e);
    if y.is_one() {
        return Bracket::exact(int(e));
    }
    let k = s as usize + 64;
    let one = BigInt::one() << k;
    let two = BigInt::one() << (k + 1);
    let scaled = &y * big(one.clone());
    let mut lo = floor(&scaled);
    let mut hi = rational::ceil(&scaled);
    let (mut dlo, mut dhi) = (BigInt::zero(), BigInt::zero());
    for _ in 0..s {
        lo = (&lo * &lo) >> k;
        let sq = &hi * &hi;
        hi = (&sq + &one - 1u32) >> k;
        dlo <<= 1;
        dhi <<= 1;
        if lo >= two {
            dlo += 1u32;
            lo >>= 1;
        }
        if hi >= two {
            dhi += 1u32;
            hi = (hi + 1u32) >> 1;
        }
    }
    let scale = pow2(-(s as i64));
    Bracket { lo: int(e) + big(dlo) * &scale, hi: int(e) + big(dhi + 1u32) * &scale }
}

/// Brackets for `log2 p` and the quantities built from it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogBrackets {
    pub p: u64,
    pub log_p: Bracket,
    pub log_log_p: Bracket,
    pub log_sq_p: Bracket,
}

impl LogBrackets {
    /// `p ≥ 2`, width of `log2 p` at most `2^-s`.
    pub fn new(p: u64, s: u32) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidParams(format!("p must be at least 2, got {p}")));
        }
        let log_p = log2_bracket(&int(p as i64), s);
        let log_log_p = Bracket { lo: log2_bracket(&log_p.lo, s).lo, hi: log2_bracket(&log_p.hi, s).hi };
        let log_sq_p = Bracket { lo: &log_p.lo * &log_p.lo, hi: &log_p.hi * &log_p.hi };
        Ok(Self { p, log_p, log_log_p, log_sq_p })
    }
}

/// `M_p = ⌊p + log2 p + log2(log2² p)⌋`, refining the brackets until both
/// ends have the same floor.
pub fn m_p(p: u64) -> Result<u32> {
    let mut s = 16;
    while s <= 4096 {
        let b = LogBrackets::new(p, s)?;
        let lo = int(p as i64) + &b.log_p.lo + int(2) * &b.log_log_p.lo;
        let hi = int(p as i64) + &b.log_p.hi + int(2) * &b.log_log_p.hi;
        let (fl, fh) = (floor(&lo), floor(&hi));
        if fl == fh {
            return fl.to_u32().ok_or_else(|| Error::InvalidParams("M_p out of range".into()));
        }
        s *= 2;
    }
    Err(Error::InvalidParams(format!("could not separate M_{p} from an integer")))
}

/// Moments of an `(M − 0.99)`-distributed variable on a probability space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    #[serde(with = "crate::rational::serde_rational")]
    pub u: Q,
    #[serde(with = "crate::rational::serde_rational")]
    pub v0: Q,
    #[serde(with = "crate::rational::serde_rational")]
    pub v: Q,
}

pub fn exact_stats(gain: u32) -> Result<Stats> {
    if gain == 0 {
        return Err(Error::InvalidParams("M must be positive".into()));
    }
    let m = gain as i64;
    let mut u = Q::zero();
    let mut v0 = Q::zero();
    for l in 1..=m {
        let value = c99() * pow2(1 - l);
        let prob = c99() * pow2(l - m - 1);
        u += &value * &prob;
        v0 += &value * &value * &prob;
    }
    let v = &v0 - &u * &u;
    Ok(Stats { u, v0, v })
}

/// `q·v / (q·ε)²`.
pub fn chebyshev_bound(q: &BigInt, v: &Q, eps: &Q) -> Q {
    let qq = big(q.clone());
    let denom = &qq * eps;
    &qq * v / (&denom * &denom)
}

/// Law of a sum of `k` independent `(M − 0.99)`-distributed variables, on
/// the lattice of multiples of `0.99·2^{1-M}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SumDistribution {
    pub gain: u32,
    pub k: u32,
    /// `probs[i] = P(Σ = i·0.99·2^{1-M})`
    pub probs: Vec<Q>,
}

impl SumDistribution {
    pub fn new(gain: u32, k: u32) -> Result<Self> {
        if gain == 0 || gain > 24 {
            return Err(Error::InvalidParams("convolution needs 1 ≤ M ≤ 24".into()));
        }
        let m = gain as i64;
        // value 0.99·2^{1-l} is 2^{M-l} lattice steps
        let mut single = vec![Q::zero(); (1usize << (gain - 1)) + 1];
        let mut zero = int(1);
        for l in 1..=m {
            let prob = c99() * pow2(l - m - 1);
            zero -= &prob;
            single[1 << (m - l) as usize] = prob;
        }
        single[0] = zero;
        let atoms: Vec<(usize, Q)> = single.into_iter().enumerate().filter(|(_, p)| !p.is_zero()).collect();
        let mut probs = vec![int(1)];
        for _ in 0..k {
            let mut next = vec![Q::zero(); probs.len() + (1 << (gain - 1) as usize)];
            for (i, p) in probs.iter().enumerate() {
                if p.is_zero() {
                    continue;
                }
                for (a, q) in &atoms {
                    next[i + a] += p * q;
                }
            }
            probs = next;
        }
        Ok(Self { gain, k, probs })
    }

    pub fn step(&self) -> Q {
        c99() * pow2(1 - self.gain as i64)
    }

    pub fn mean(&self) -> Q {
        let step = self.step();
        self.probs.iter().enumerate().fold(Q::zero(), |acc, (i, p)| acc + p * big(BigInt::from(i)) * &step)
    }

    /// `P(|Σ − k·u| ≥ k·ε)`.
    pub fn deviation_tail(&self, u: &Q, eps: &Q) -> Q {
        let kq = int(self.k as i64);
        let centre = &kq * u;
        let radius = &kq * eps;
        let step = self.step();
        self.probs
            .iter()
            .enumerate()
            .filter(|(i, _)| (big(BigInt::from(*i)) * &step - &centre).abs() >= radius)
            .fold(Q::zero(), |acc, (_, p)| acc + p)
    }

    /// `P(Σ > t)`.
    pub fn upper_tail(&self, t: &Q) -> Q {
        let step = self.step();
        self.probs
            .iter()
            .enumerate()
            .filter(|(i, _)| &(big(BigInt::from(*i)) * &step) > t)
            .fold(Q::zero(), |acc, (_, p)| acc + p)
    }
}

/// `64·log2²p / p < 1/100`, decided with brackets. `None` if undecided at
/// every tried precision.
pub fn smallness_holds(p: u64) -> Result<Option<bool>> {
    let mut s = 16;
    while s <= 256 {
        let b = LogBrackets::new(p, s)?;
        let pq = int(p as i64);
        if int(6400) * &b.log_sq_p.hi < pq {
            return Ok(Some(true));
        }
        if int(6400) * &b.log_sq_p.lo >= pq {
            return Ok(Some(false));
        }
        s *= 2;
    }
    Ok(None)
}

/// Least `q` with `p = 2^q` passing [`smallness_holds`].
pub fn least_small_power_of_two() -> u32 {
    // log2 p = q exactly, so the test is 6400·q² < 2^q
    (1u32..).find(|&q| BigInt::from(6400u64 * (q as u64) * (q as u64)) < (BigInt::one() << q as usize)).unwrap()
}

/// Sizes of a level-`k` system, computed without building it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeEstimate {
    pub k: String,
    pub gain: u32,
    pub startup: String,
    /// exact least grid exponent, when `k` is small enough to iterate
    pub j0: Option<String>,
    /// bounds on the bit length of `J_0`
    pub j0_bits: (u64, u64),
    /// bit length of the top life coefficient `c_k`
    pub top_coeff_bits: (u64, u64),
    /// distinct child shapes `M^{k-1}`, as a power
    pub child_shapes: String,
}

/// `J_0` of a level-`k` system by running the recursion along the latest
/// startup at every depth.
pub fn j0_symbolic(gain: u32, k: u64, startup: &BigInt, resolution: &BigInt) -> BigInt {
    let m = BigInt::from(gain);
    let mut r = resolution.clone();
    let mut s = startup.clone();
    for kappa in (1..=k).rev() {
        let c = level::LifeTower::coeff_big(gain, &BigInt::from(kappa));
        let top = &s + (&m - 1u32) * (&c + 20u32);
        r = &r + &top + &c + &m + 21u32;
        s = top;
    }
    r
}

pub fn estimate_size(gain: u32, k: &BigInt, startup: &BigInt) -> SizeEstimate {
    let k_small = k.to_u64().filter(|&v| v <= 1 << 12);
    let j0 = k_small.map(|kk| j0_symbolic(gain, kk, startup, &BigInt::zero()));
    // c_k = 21·M^{k-1} − 20, bit length from a bracket of (k−1)·log2 M
    let lm = log2_bracket(&int(gain as i64), 64);
    let e = big(k - 1u32);
    let lo = floor(&(&e * &lm.lo + log2_bracket(&int(21), 64).lo - int(1)));
    let hi = floor(&(&e * &lm.hi + log2_bracket(&int(21), 64).hi)) + 1u32;
    let to_u = |b: BigInt| b.to_u64().unwrap_or(u64::MAX);
    let coeff = (to_u(lo.clone()).max(1), to_u(hi.clone()));
    let j0_bits = match &j0 {
        Some(j) => (j.bits(), j.bits()),
        None => {
            // c_k ≤ J_0 ≤ k·(startup + 2M·k·(c_k + 21))
            let extra = BigInt::from(2 * gain as u64 + 64).bits() + 2 * k.bits() + startup.bits() + 2;
            (coeff.0, coeff.1.saturating_add(extra))
        }
    };
    SizeEstimate {
        k: k.to_string(),
        gain,
        startup: startup.to_string(),
        j0: j0.map(|j| j.to_string()),
        j0_bits,
        top_coeff_bits: coeff,
        child_shapes: format!("{gain}^({k}-1)"),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PBlockParams {
    pub p: u64,
    /// Startup raised to `max(10, M) + 1` when `2^p` is too small, `M_2 = 3`
    /// accepted, and `μ(Λ_p)` reported instead of asserted.
    pub relaxed: bool,
    /// Build only the first `levels` of the `2^p` levels.
    #[serde(default)]
    pub levels: Option<u32>,
}

impl PBlockParams {
    pub fn new(p: u64, relaxed: bool) -> Self {
        Self { p, relaxed, levels: None }
    }
}

/// Parameters of a p-block derived without any construction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PBlockPlan {
    pub params: PBlockParams,
    pub gain: u32,
    /// `2^p`
    #[serde(with = "crate::rational::serde_bigint")]
    pub k: BigInt,
    pub startup: u64,
    pub logs: LogBrackets,
    /// conservative stand-in for `1/(4·log2²p)`, never below it
    #[serde(with = "crate::rational::serde_rational")]
    pub threshold: Q,
    pub stats: Stats,
    pub estimate: SizeEstimate,
}

const LOG_PRECISION: u32 = 64;

pub fn plan_pblock(params: &PBlockParams) -> Result<PBlockPlan> {
    let p = params.p;
    if p < 2 || (p < 3 && !params.relaxed) {
        return Err(Error::InvalidParams(format!("p must be at least 3 (2 in relaxed mode), got {p}")));
    }
    if p > 62 {
        return Err(Error::InvalidParams("p above 62 is not supported".into()));
    }
    let gain = m_p(p)?;
    let k = BigInt::one() << p as usize;
    let honest_startup = 1u64 << p;
    let floor_startup = 10.max(gain as u64) + 1;
    let startup = if params.relaxed { honest_startup.max(floor_startup) } else { honest_startup };
    let logs = LogBrackets::new(p, LOG_PRECISION)?;
    let threshold = int(1) / (int(4) * &logs.log_sq_p.lo);
    let stats = exact_stats(gain)?;
    let estimate = estimate_size(gain, &k, &BigInt::from(startup));
    if let Some(l) = params.levels {
        if l == 0 || BigInt::from(l) > k {
            return Err(Error::InvalidParams(format!("levels must be in 1..=2^{p}")));
        }
    }
    Ok(PBlockPlan { params: params.clone(), gain, k, startup, logs, threshold, stats, estimate })
}

impl PBlockPlan {
    /// `∫ f_p = 2^p · 2^{1-M_p}`.
    pub fn honest_integral(&self) -> Q {
        big(self.k.clone()) * pow2(1 - self.gain as i64)
    }

    /// `1/(8·log2²p·∫f)` bracketed.
    pub fn lambda(&self, integral: &Q) -> Bracket {
        let eight = int(8);
        Bracket {
            lo: int(1) / (&eight * &self.logs.log_sq_p.hi * integral),
            hi: int(1) / (&eight * &self.logs.log_sq_p.lo * integral),
        }
    }

    /// Exact claims that need no construction.
    pub fn verify(&self) -> Result<VerificationReport> {
        let mut rep = VerificationReport::new("pblock.plan");
        let p = self.params.p;
        let pq = int(p as i64);
        let b = &self.logs;
        let kq = big(self.k.clone());
        rep.info("p", p);
        rep.info("M_p", self.gain);
        rep.info("startup", self.startup);
        rep.info("threshold", rational::to_string(&self.threshold));
        rep.info("log2_p", format!("[{}, {}]", rational::to_string(&b.log_p.lo), rational::to_string(&b.log_p.hi)));

        let integral = self.honest_integral();
        rep.push(Claim::exact(
            "pblock.integral.lower",
            "integral of the p-block function",
            integral.clone(),
            Relation::Ge,
            int(1) / (&pq * &b.log_sq_p.lo),
        ));
        rep.push(Claim::exact(
            "pblock.integral.upper",
            "integral of the p-block function",
            integral.clone(),
            Relation::Le,
            int(4) / (&pq * &b.log_sq_p.hi),
        ));
        let s = &self.stats;
        rep.push(Claim::exact(
            "pblock.mean.closed_form",
            "mean of the p-block variables",
            s.u.clone(),
            Relation::Eq,
            c99() * c99() * int(self.gain as i64) * pow2(-(self.gain as i64)),
        ));
        rep.push(Claim::exact(
            "pblock.mean.lower",
            "mean of the p-block variables",
            s.u.clone(),
            Relation::Gt,
            pow2(-(p as i64) - 1) / &b.log_sq_p.lo,
        ));
        let var_cap = int(4) / (&kq * &pq * &b.log_sq_p.hi);
        rep.push(Claim::exact("pblock.variance.positive", "variance of the p-block variables", s.v.clone(), Relation::Gt, Q::zero()));
        rep.push(Claim::exact("pblock.variance.below_second", "variance of the p-block variables", s.v.clone(), Relation::Lt, s.v0.clone()));
        rep.push(Claim::exact("pblock.second_moment.upper", "variance of the p-block variables", s.v0.clone(), Relation::Le, var_cap.clone()));
        rep.push(Claim::exact("pblock.variance.upper", "variance of the p-block variables", s.v.clone(), Relation::Le, var_cap));

        // the Chebyshev step with ε = 1/(2^{p+2} log2²p), using the largest ε the bracket allows
        let eps = pow2(-(p as i64) - 2) / &b.log_sq_p.lo;
        let bound = chebyshev_bound(&self.k, &s.v, &eps);
        rep.push(Claim::exact(
            "pblock.chebyshev.bound",
            "Chebyshev tail at q = 2^p",
            bound.clone(),
            Relation::Le,
            int(64) * &b.log_sq_p.hi / &pq,
        ));
        rep.push(Claim::exact(
            "pblock.chebyshev.margin",
            "mean exceeds the threshold by the deviation",
            &kq * &s.u - &kq * &eps,
            Relation::Ge,
            self.threshold.clone(),
        ));
        let lam = self.lambda(&integral);
        rep.push(Claim::exact("pblock.lambda.lower", "blow-up constant", lam.lo.clone(), Relation::Ge, &pq / int(32)));
        rep.info("lambda", format!("[{}, {}]", rational::to_string(&lam.lo), rational::to_string(&lam.hi)));
        match smallness_holds(p)? {
            Some(v) => rep.info("smallness_64_log2sq_p_over_p_below_1_100", v),
            None => rep.info("smallness_64_log2sq_p_over_p_below_1_100", "undecided"),
        }
        rep.info("least_power_of_two_exponent_with_smallness", least_small_power_of_two());
        rep.info("size_estimate", serde_json::to_string(&self.estimate)?);
        Ok(rep)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PBlock {
    pub plan: PBlockPlan,
    pub system: LevelSystem,
    /// `{Σ_h X_h > threshold}`
    pub lambda_set: ThresholdSet,
    /// exit time `E_p`
    pub exit: u64,
}

fn budget_error(plan: &PBlockPlan, reason: String) -> Error {
    Error::Budget { reason, estimate: serde_json::to_string(&plan.estimate).unwrap_or_default() }
}

pub fn build_pblock(params: &PBlockParams, budget: &LevelBudget) -> Result<PBlock> {
    let plan = plan_pblock(params)?;
    let levels = match params.levels {
        Some(l) => l,
        None => match plan.k.to_u32().filter(|&k| k <= budget.max_level) {
            Some(k) => k,
            None => {
                return Err(budget_error(&plan, format!("2^{} levels exceed the configured maximum {}", params.p, budget.max_level)))
            }
        },
    };
    if levels > budget.max_level {
        return Err(budget_error(&plan, format!("{levels} levels exceed the configured maximum {}", budget.max_level)));
    }
    let j0 = j0_symbolic(plan.gain, levels as u64, &BigInt::from(plan.startup), &BigInt::zero());
    if j0 > BigInt::from(budget.max_j) {
        return Err(budget_error(&plan, format!("grid exponent J_0 = {j0} exceeds the limit {}", budget.max_j)));
    }
    let mut lp = LevelParams::new(GridInterval::unit(), levels, plan.gain, plan.startup);
    lp.relaxed = params.relaxed;
    let system = build_level(&lp, budget)?;
    let lambda_set = threshold_set(&system.variables, &system.interval, &plan.threshold)?;
    let exit = system.exit;
    Ok(PBlock { plan, system, lambda_set, exit })
}

/// `{x ∈ I : Σ_h X_h(x) > t}` for nonnegative variables.
///
/// Stored as a cover by intersections of positive level sets whose values
/// already exceed `t` (minimal such choices only), so no zero sets are ever
/// built. The measure comes from the joint level measures: the zero event of
/// each variable is expanded as `1 - Σ_v 1{X = v}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub cover: Vec<PeriodicIntervalSet>,
    #[serde(with = "crate::rational::serde_rational")]
    pub measure: Q,
}

impl ThresholdSet {
    pub fn contains(&self, x: &Q) -> bool {
        self.cover.iter().any(|c| c.contains(x))
    }

    /// Overlapping union, good for sampling and membership but not for
    /// measuring.
    pub fn as_multiset(&self) -> PeriodicIntervalSet {
        PeriodicIntervalSet::disjoint_union(self.cover.iter().cloned())
    }
}

pub fn threshold_set(vars: &[StepFunction], interval: &GridInterval, t: &Q) -> Result<ThresholdSet> {
    let window = PeriodicIntervalSet::window(interval.start(), interval.end());
    let levels: Vec<Vec<(Q, PeriodicIntervalSet)>> = vars
        .iter()
        .map(|x| x.levels().filter(|(v, _)| v.is_positive()).map(|(v, s)| Ok((v.clone(), s.intersect(&window)?))).collect())
        .collect::<Result<_>>()?;
    // every choice of a positive level (or none) per variable, with its
    // intersection; empty intersections prune the whole subtree
    let mut joint: Vec<(Vec<Option<usize>>, Q, Option<PeriodicIntervalSet>)> = vec![(Vec::new(), Q::zero(), None)];
    for lv in &levels {
        let mut next = Vec::with_capacity(joint.len() * (lv.len() + 1));
        for (choice, sum, set) in joint {
            for (i, (v, s)) in lv.iter().enumerate() {
                let part = match &set {
                    Some(c) => c.intersect(s)?,
                    None => s.clone(),
                };
                if !part.is_empty() {
                    let mut ch = choice.clone();
                    ch.push(Some(i));
                    next.push((ch, &sum + v, Some(part)));
                }
            }
            let mut ch = choice;
            ch.push(None);
            next.push((ch, sum, set));
        }
        joint = next;
    }
    let mut measure = Q::zero();
    let mut cover = Vec::new();
    for (choice, sum, set) in &joint {
        let g = match set {
            Some(c) => c.measure()?,
            None => window.measure()?,
        };
        // the atoms above t containing this term: keep a subset P of the
        // chosen levels, the rest came from expanding a zero event
        let vals: Vec<&Q> = choice.iter().enumerate().filter_map(|(h, c)| c.map(|i| &levels[h][i].0)).collect();
        let mut coeff = 0i64;
        for mask in 0u64..(1u64 << vals.len()) {
            let kept = vals.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).fold(Q::zero(), |a, (_, v)| a + *v);
            if &kept > t {
                let dropped = vals.len() as u32 - mask.count_ones();
                coeff += if dropped % 2 == 0 { 1 } else { -1 };
            }
        }
        measure += int(coeff) * g;
        if sum > t && set.is_some() {
            if vals.iter().all(|v| &(sum - *v) <= t) {
                cover.extend(set.clone());
            }
        }
    }
    Ok(ThresholdSet { cover, measure })
}

impl PBlock {
    pub fn orbit(&self) -> OrbitSpec {
        OrbitSpec::circle(self.system.j)
    }

    pub fn integral(&self) -> Result<Q> {
        self.system.f.integral()
    }

    pub fn levels(&self) -> u32 {
        self.system.variables.len() as u32
    }

    pub fn is_reduced(&self) -> bool {
        BigInt::from(self.levels()) != self.plan.k
    }

    /// Best ratio over the witness window of the region containing `x`,
    /// stopping at the first `n` reaching `target`.
    fn witness_ratio(&self, x: &Q, target: &Q) -> Result<Option<(BigInt, Q)>> {
        let Some(w) = self.system.witness_for(x) else {
            return Ok(None);
        };
        let mut best: Option<(BigInt, Q)> = None;
        for n in base::window_ns(w.lo, w.hi) {
            let r = counting::ratio(&self.system.f, self.orbit(), x, &big(n.clone()))?;
            if best.as_ref().map_or(true, |(_, b)| &r > b) {
                best = Some((n, r));
            }
            if best.as_ref().is_some_and(|(_, b)| b >= target) {
                break;
            }
        }
        Ok(best)
    }

    fn sample(&self, set: &PeriodicIntervalSet, policy: &SamplingPolicy, salt: u64) -> Result<Vec<Q>> {
        let mut rng = ChaCha8Rng::seed_from_u64(policy.seed ^ salt);
        let mut xs: Vec<Q> = set.runs(policy.endpoint_cap.min(4))?.into_iter().map(|(s, _)| s).collect();
        xs.extend(level::random_points(set, policy.random_points, &mut rng)?);
        Ok(xs)
    }
}

/// Claims on a constructed block.
pub fn verify_pblock(block: &PBlock, policy: &SamplingPolicy) -> Result<VerificationReport> {
    let mut rep = block.plan.verify()?;
    rep.command = "pblock".into();
    let plan = &block.plan;
    let levels = block.levels();
    rep.info("levels_built", levels);
    rep.info("reduced", block.is_reduced());
    rep.info("J", block.system.j);
    rep.info("exit", block.exit);

    rep.push(Claim::exact(
        "pblock.f.integral",
        "integral of the p-block function",
        block.integral()?,
        Relation::Eq,
        int(levels as i64) * pow2(1 - plan.gain as i64),
    ));
    for (h, x) in block.system.variables.iter().enumerate() {
        rep.push(Claim::exact(
            format!("pblock.X{}.mean", h + 1),
            "mean of the p-block variables",
            x.integral()?,
            Relation::Eq,
            plan.stats.u.clone(),
        ));
        let sq = x.levels().try_fold(Q::zero(), |acc, (v, s)| Ok::<_, Error>(acc + v * v * s.measure()?))?;
        rep.push(Claim::exact(
            format!("pblock.X{}.second_moment", h + 1),
            "variance of the p-block variables",
            sq,
            Relation::Eq,
            plan.stats.v0.clone(),
        ));
    }
    let exit_ok = BigInt::from(block.exit) > BigInt::from(plan.startup);
    rep.push(Claim::boolean("pblock.exit", "exit time after the startup", ClaimKind::Exact, exit_ok));

    let mu = block.lambda_set.measure.clone();
    let law = SumDistribution::new(plan.gain, levels)?;
    rep.push(Claim::exact(
        "pblock.lambda_set.measure",
        "threshold set measure equals the law of the sum",
        mu.clone(),
        Relation::Eq,
        law.upper_tail(&plan.threshold),
    ));
    if plan.params.relaxed || block.is_reduced() {
        rep.info("lambda_set_measure", rational::to_string(&mu));
    } else {
        rep.push(Claim::exact("pblock.lambda_set.large", "threshold set is large", mu, Relation::Gt, rational::ratio(99, 100)));
    }

    let whole = PeriodicIntervalSet::window(Q::zero(), int(1));
    let xs = block.sample(&whole, policy, 0x4c)?;
    for x in &xs {
        let inside = block.lambda_set.contains(x);
        let above = block.system.variable_sum(x) > plan.threshold;
        rep.push(
            Claim::boolean("pblock.lambda_set.membership", "threshold set matches pointwise sums", ClaimKind::Sampled, inside == above)
                .with_witness(Witness::point(x.clone())),
        );
    }
    let pairs = level::sample_pairs(&block.system, policy.random_points.min(32), policy.seed ^ 0x77)?;
    let wrap: Vec<Claim> = pairs
        .par_iter()
        .map(|(x, n)| {
            let nq = big(n.clone());
            let circle = counting::count_n(&block.system.f, block.orbit(), x, &nq)?;
            let line = counting::count_n(&block.system.f, block.system.orbit(), x, &nq)?;
            Ok(Claim::sampled("pblock.wrap.monotone", "rotation mod 1 keeps every count", big(circle), Relation::Ge, big(line))
                .with_witness(Witness::at(x.clone(), n)))
        })
        .collect::<Result<_>>()?;
    rep.claims.extend(wrap);

    let inside = block.sample(&block.lambda_set.as_multiset(), policy, 0x4d)?;
    let counts: Vec<Claim> = inside
        .par_iter()
        .map(|x| {
            let target = block.system.variable_sum(x);
            Ok(match block.witness_ratio(x, &target)? {
                Some((n, r)) => Claim::sampled("pblock.count", "counting ratio on the threshold set", r, Relation::Gt, plan.threshold.clone())
                    .with_witness(Witness::at(x.clone(), &n)),
                None => Claim::boolean("pblock.count", "counting ratio on the threshold set", ClaimKind::Sampled, false)
                    .with_witness(Witness::point(x.clone())),
            })
        })
        .collect::<Result<_>>()?;
    rep.claims.extend(counts);
    Ok(rep)
}

/// One verified point of the blow-up chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainWitness {
    #[serde(with = "crate::rational::serde_rational")]
    pub x: Q,
    /// witness for `f`
    #[serde(with = "crate::rational::serde_bigint")]
    pub n_prime: BigInt,
    /// `⌊n'·∫f⌋ + 1`, witness for `φ`
    #[serde(with = "crate::rational::serde_bigint")]
    pub n: BigInt,
    #[serde(with = "crate::rational::serde_rational")]
    pub ratio_f: Q,
    #[serde(with = "crate::rational::serde_rational")]
    pub ratio_phi: Q,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub p: u64,
    pub lambda: Bracket,
    /// measure of the threshold set on which the witnesses were drawn
    #[serde(with = "crate::rational::serde_rational")]
    pub measure: Q,
    pub witnesses: Vec<ChainWitness>,
}

/// Normalizes `f` to `φ = f/∫f` and replays the blow-up chain at sampled
/// points of the threshold set.
pub fn blowup_certificate(block: &PBlock, policy: &SamplingPolicy) -> Result<(Certificate, VerificationReport)> {
    let mut rep = VerificationReport::new("blowup");
    let integral = block.integral()?;
    if integral.is_zero() {
        return Err(Error::InvalidParams("the block function vanishes; it cannot be normalized".into()));
    }
    let plan = &block.plan;
    let p = plan.params.p;
    let lambda = plan.lambda(&integral);
    rep.info("p", p);
    rep.info("levels_built", block.levels());
    rep.info("lambda", format!("[{}, {}]", rational::to_string(&lambda.lo), rational::to_string(&lambda.hi)));
    rep.push(Claim::exact("blowup.lambda.lower", "blow-up constant", lambda.lo.clone(), Relation::Ge, int(p as i64) / int(32)));
    let phi = block.system.f.scale(&(int(1) / &integral))?;
    rep.push(Claim::exact("blowup.phi.integral", "normalized function has unit integral", phi.integral()?, Relation::Eq, int(1)));

    let xs = block.sample(&block.lambda_set.as_multiset(), policy, 0xb1)?;
    let orbit = block.orbit();
    let rows: Vec<(Vec<Claim>, Option<ChainWitness>)> = xs
        .par_iter()
        .map(|x| {
            let target = block.system.variable_sum(x);
            let Some((n_prime, ratio_f)) = block.witness_ratio(x, &target)? else {
                let c = Claim::boolean("blowup.witness", "threshold point has a witness", ClaimKind::Sampled, false)
                    .with_witness(Witness::point(x.clone()));
                return Ok((vec![c], None));
            };
            let np = big(n_prime.clone());
            let n = floor(&(&np * &integral)) + 1u32;
            let nq = big(n.clone());
            let ratio_phi = counting::ratio(&phi, orbit, x, &nq)?;
            let w = Witness::at(x.clone(), &n_prime);
            let claims = vec![
                Claim::sampled("blowup.witness", "counting ratio on the threshold set", ratio_f.clone(), Relation::Gt, plan.threshold.clone())
                    .with_witness(w.clone()),
                Claim::sampled(
                    "blowup.chain.rescale",
                    "rescaling step of the blow-up chain",
                    ratio_f.clone(),
                    Relation::Le,
                    &ratio_phi * (&integral + int(1) / &np),
                )
                .with_witness(w.clone()),
                Claim::exact("blowup.chain.slack", "rescaling slack", &integral + int(1) / &np, Relation::Le, int(2) * &integral)
                    .with_witness(w.clone()),
                Claim::sampled("blowup.chain.lambda", "normalized ratio exceeds the blow-up constant", ratio_phi.clone(), Relation::Gt, lambda.hi.clone())
                    .with_witness(Witness::at(x.clone(), &n)),
            ];
            Ok((claims, Some(ChainWitness { x: x.clone(), n_prime, n, ratio_f, ratio_phi })))
        })
        .collect::<Result<_>>()?;
    let mut witnesses = Vec::new();
    for (claims, w) in rows {
        rep.claims.extend(claims);
        witnesses.extend(w);
    }
    let measure = block.lambda_set.measure.clone();
    rep.info("witness_set_measure", rational::to_string(&measure));
    rep.info("verified_points", witnesses.len());
    Ok((Certificate { p, lambda, measure, witnesses }, rep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    #[test]
    fn gain_values() {
        assert_eq!(m_p(2).unwrap(), 3);
        assert_eq!(m_p(3).unwrap(), 5);
        assert_eq!(m_p(4).unwrap(), 8);
        assert_eq!(m_p(8).unwrap(), 14);
        assert!(m_p(1).is_err());
    }

    #[test]
    fn log_bracket_of_three() {
        let b = log2_bracket(&int(3), 20);
        assert!(b.lo < b.hi && b.width() <= pow2(-20));
        // 2^{1.5849} < 3 < 2^{1.585}
        assert!(b.lo >= ratio(15849, 10000) && b.hi <= ratio(15851, 10000));
        assert!(log2_bracket(&int(64), 8).is_exact());
        assert_eq!(log2_bracket(&ratio(1, 8), 8).lo, int(-3));
    }

    #[test]
    fn one_term_stats() {
        let s = exact_stats(1).unwrap();
        assert_eq!(s.u, ratio(9801, 20000));
        assert!(s.v.is_positive());
    }

    #[test]
    fn sum_law_is_a_probability() {
        let d = SumDistribution::new(3, 4).unwrap();
        assert_eq!(d.probs.iter().fold(Q::zero(), |a, b| a + b), int(1));
        assert_eq!(d.mean(), int(4) * exact_stats(3).unwrap().u);
    }

    #[test]
    fn smallness_threshold() {
        assert_eq!(least_small_power_of_two(), 22);
        assert_eq!(smallness_holds(1 << 21).unwrap(), Some(false));
        assert_eq!(smallness_holds(1 << 22).unwrap(), Some(true));
    }

    #[test]
    fn symbolic_j0_matches_recursion() {
        for (k, m) in [(1u32, 4u32), (2, 4), (3, 4), (3, 5)] {
            let tower = level::LifeTower::new(m, k).unwrap();
            let want = level::required_j0(&tower, k, 11, 0).unwrap();
            assert_eq!(j0_symbolic(m, k as u64, &BigInt::from(11), &BigInt::zero()), BigInt::from(want));
        }
    }
}
