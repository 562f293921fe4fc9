//! The counting function `N_n(f)(x) = #{k ≥ 1 : f(T^k x)/k > 1/n}` for
//! `T x = x + 2^-J`, optionally reduced mod 1.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval_set::PeriodicIntervalSet;
use crate::rational::{big, ceil, pow2, ExactRational};
use crate::step::StepFunction;

type Q = ExactRational;

/// Default largest `k` the brute-force oracle will iterate to.
pub const DEFAULT_ORACLE_CAP: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrbitSpec {
    /// step is `2^-j`
    pub j: u64,
    pub wrap: bool,
}

impl OrbitSpec {
    pub fn line(j: u64) -> Self {
        Self { j, wrap: false }
    }

    pub fn circle(j: u64) -> Self {
        Self { j, wrap: true }
    }
}

/// Exclusive bound on `k` for a level of height `v`: `k < n·v ⇔ k < ceil(n·v)`.
pub fn k_bound(n: &Q, v: &Q) -> BigInt {
    ceil(&(n * v))
}

/// `N_n(f)(x)`; `n` may be any positive rational.
pub fn count_n(f: &StepFunction, orbit: OrbitSpec, x: &Q, n: &Q) -> Result<BigInt> {
    let one = BigInt::one();
    let mut total = BigInt::zero();
    for (v, support) in f.levels() {
        let hi = k_bound(n, v);
        if hi > one {
            total += support.count_orbit_hits(orbit.j, x, &one, &hi, orbit.wrap)?;
        }
    }
    Ok(total)
}

pub fn count_n_int(f: &StepFunction, orbit: OrbitSpec, x: &Q, n: &BigInt) -> Result<BigInt> {
    count_n(f, orbit, x, &big(n.clone()))
}

/// `N_n(f)(x) / n`.
pub fn ratio(f: &StepFunction, orbit: OrbitSpec, x: &Q, n: &Q) -> Result<Q> {
    Ok(big(count_n(f, orbit, x, n)?) / n)
}

/// Maximal ratio over a finite sample of `n`, with the first maximizer.
/// A lower bound for the supremum over all `n`.
pub fn sup_ratio(f: &StepFunction, orbit: OrbitSpec, x: &Q, ns: &[BigInt]) -> Result<(BigInt, Q)> {
    if ns.is_empty() {
        return Err(Error::InvalidParams("empty n sample".into()));
    }
    let ratios: Vec<Q> = ns
        .par_iter()
        .map(|n| ratio(f, orbit, x, &big(n.clone())))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, r) in ratios.iter().enumerate() {
        if r > &ratios[best] {
            best = i;
        }
    }
    Ok((ns[best].clone(), ratios[best].clone()))
}

/// `2^a, 2^(a+1), …, 2^b`.
pub fn dyadic_ns(a: u64, b: u64) -> Vec<BigInt> {
    (a..=b).map(|e| BigInt::one() << (e as usize)).collect()
}

/// Membership test on a common integer denominator.
struct ScaledFamily {
    lo: Option<i128>,
    hi: Option<i128>,
    constraints: Vec<(i128, Vec<(i128, i128)>)>,
}

impl ScaledFamily {
    fn contains(&self, p: i128) -> bool {
        if self.lo.is_some_and(|lo| p < lo) || self.hi.is_some_and(|hi| p >= hi) {
            return false;
        }
        self.constraints.iter().all(|(period, pieces)| {
            let r = p.rem_euclid(*period);
            pieces.iter().any(|&(a, b)| a <= r && r < b)
        })
    }
}

struct ScaledLevel {
    /// `n·v = num/den`
    num: i128,
    den: i128,
    families: Vec<ScaledFamily>,
}

struct Scaled {
    x: i128,
    step: i128,
    unit: i128,
    levels: Vec<ScaledLevel>,
}

fn common_denominator(f: &StepFunction, x: &Q, j: u64) -> BigInt {
    let mut d = x.denom().clone();
    let mut add = |q: &Q| d = d.lcm(q.denom());
    add(&pow2(-(j as i64)));
    for (_, s) in f.levels() {
        for fam in s.families() {
            fam.lo().into_iter().chain(fam.hi()).for_each(&mut add);
            for c in fam.constraints() {
                add(&c.period());
                for p in &c.pieces {
                    add(&p.start);
                    add(&p.end);
                }
            }
        }
    }
    d
}

fn scale_all(f: &StepFunction, x: &Q, j: u64, n: &Q) -> Option<Scaled> {
    let d = big(common_denominator(f, x, j));
    let s = |q: &Q| -> Option<i128> {
        let v = q * &d;
        debug_assert!(v.is_integer());
        v.to_integer().to_i128()
    };
    let mut levels = Vec::new();
    for (v, set) in f.levels() {
        let nv = n * v;
        let mut families = Vec::new();
        for fam in set.families() {
            let lo = match fam.lo() {
                Some(q) => Some(s(q)?),
                None => None,
            };
            let hi = match fam.hi() {
                Some(q) => Some(s(q)?),
                None => None,
            };
            let mut constraints = Vec::new();
            for c in fam.constraints() {
                let pieces = c.pieces.iter().map(|p| Some((s(&p.start)?, s(&p.end)?))).collect::<Option<Vec<_>>>()?;
                constraints.push((s(&c.period())?, pieces));
            }
            families.push(ScaledFamily { lo, hi, constraints });
        }
        levels.push(ScaledLevel { num: nv.numer().to_i128()?, den: nv.denom().to_i128()?, families });
    }
    let unit: i128 = d.to_integer().to_i128()?;
    Some(Scaled { x: s(x)?, step: s(&pow2(-(j as i64)))?, unit, levels })
}

/// Direct loop over `k` evaluating `f(T^k x)` at every orbit point; the
/// test oracle for [`count_n`].
pub fn brute_force_n(f: &StepFunction, orbit: OrbitSpec, x: &Q, n: &Q, k_cap: &BigInt) -> Result<BigInt> {
    let k_max: BigInt = f.levels().map(|(v, _)| k_bound(n, v)).max().unwrap_or_else(BigInt::zero) - 1;
    if &k_max > k_cap {
        return Err(Error::OracleCap { needed: k_max.to_string(), cap: k_cap.to_string() });
    }
    let k_max = k_max.to_i64().unwrap_or(0).max(0);
    if let Some(sc) = scale_all(f, x, orbit.j, n) {
        let mut count = 0i64;
        let mut overflow = false;
        for k in 1..=k_max {
            let Some(mut p) = (k as i128).checked_mul(sc.step).and_then(|v| v.checked_add(sc.x)) else {
                overflow = true;
                break;
            };
            if orbit.wrap {
                p = p.rem_euclid(sc.unit);
            }
            for lv in &sc.levels {
                if lv.families.iter().any(|fam| fam.contains(p)) {
                    // f(p)/k > 1/n  ⇔  k·den < num
                    if let Some(lhs) = (k as i128).checked_mul(lv.den) {
                        if lhs < lv.num {
                            count += 1;
                        }
                    } else {
                        overflow = true;
                    }
                    break;
                }
            }
            if overflow {
                break;
            }
        }
        if !overflow {
            return Ok(BigInt::from(count));
        }
    }
    brute_force_exact(f, orbit, x, n, k_max)
}

fn brute_force_exact(f: &StepFunction, orbit: OrbitSpec, x: &Q, n: &Q, k_max: i64) -> Result<BigInt> {
    let step = pow2(-(orbit.j as i64));
    let one = Q::one();
    let mut count = BigInt::zero();
    for k in 1..=k_max {
        let mut p = x + &step * big(BigInt::from(k));
        if orbit.wrap {
            p = crate::rational::rem_euclid(&p, &one);
        }
        let kq = big(BigInt::from(k));
        if n * f.eval(&p) > kq {
            count += 1;
        }
    }
    Ok(count)
}

/// Sum of orbit hits of a set over `k ∈ [k_lo, k_hi)`, by direct iteration.
pub fn brute_force_hits(set: &PeriodicIntervalSet, orbit: OrbitSpec, x: &Q, k_lo: i64, k_hi: i64) -> BigInt {
    let step = pow2(-(orbit.j as i64));
    let one = Q::one();
    let mut count = 0u64;
    for k in k_lo..k_hi {
        let mut p = x + &step * big(BigInt::from(k));
        if orbit.wrap {
            p = crate::rational::rem_euclid(&p, &one);
        }
        if set.contains(&p) {
            count += 1;
        }
    }
    BigInt::from(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    #[test]
    fn zero_function_counts_nothing() {
        let f = StepFunction::zero();
        assert_eq!(count_n(&f, OrbitSpec::circle(3), &Q::zero(), &int(100)).unwrap(), BigInt::zero());
        let (n, r) = sup_ratio(&f, OrbitSpec::circle(3), &Q::zero(), &[BigInt::from(5), BigInt::from(9)]).unwrap();
        assert_eq!((n, r), (BigInt::from(5), Q::zero()));
    }

    #[test]
    fn full_support_counts_every_k_below_n() {
        let f = StepFunction::indicator(int(1), PeriodicIntervalSet::window(Q::zero(), int(1))).unwrap();
        for n in [1i64, 2, 17, 1000] {
            let c = count_n(&f, OrbitSpec::circle(5), &ratio(1, 3), &int(n)).unwrap();
            assert_eq!(c, BigInt::from(n - 1));
        }
    }

    #[test]
    fn ties_are_excluded() {
        // v = 1/2, n = 8: k < 4 hits, k = 4 is a tie
        let f = StepFunction::indicator(ratio(1, 2), PeriodicIntervalSet::window(Q::zero(), int(1))).unwrap();
        assert_eq!(count_n(&f, OrbitSpec::circle(2), &Q::zero(), &int(8)).unwrap(), BigInt::from(3));
    }

    #[test]
    fn oracle_cap_enforced() {
        let f = StepFunction::indicator(int(1), PeriodicIntervalSet::window(Q::zero(), int(1))).unwrap();
        let r = brute_force_n(&f, OrbitSpec::circle(2), &Q::zero(), &int(100), &BigInt::from(10));
        assert!(matches!(r, Err(Error::OracleCap { .. })));
    }
}
