//! Periodic interval sets.
//!
//! A [`Family`] is a window `[lo, hi)` (either side may be open-ended)
//! intersected with a chain of periodic constraints `x mod 2^e ∈ pattern`.
//! Periods are powers of two, so every period in a chain divides the
//! coarser ones and the indicator of a family is periodic under its largest
//! period. That lets measure, cumulative measure, its inverse and orbit
//! counting run level by level down the chain without ever enumerating
//! components.
//!
//! A [`PeriodicIntervalSet`] is a finite union of pairwise disjoint families.

use std::cmp::Ordering;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rational::{self, big, ceil, floor_div, pow2, DyadicRational, ExactRational};

type Q = ExactRational;

pub const DEFAULT_MAX_FAMILIES: usize = 1 << 14;

/// Half-open `[start, end)` inside one period.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Piece {
    pub start: Q,
    pub end: Q,
}

impl Piece {
    pub fn new(start: Q, end: Q) -> Self {
        Self { start, end }
    }
}

fn normalize_pieces(mut pieces: Vec<Piece>) -> Vec<Piece> {
    pieces.retain(|p| p.start < p.end);
    pieces.sort_by(|a, b| a.start.cmp(&b.start));
    let mut out: Vec<Piece> = Vec::with_capacity(pieces.len());
    for p in pieces {
        match out.last_mut() {
            Some(last) if p.start <= last.end => {
                if p.end > last.end {
                    last.end = p.end;
                }
            }
            _ => out.push(p),
        }
    }
    out
}

fn intersect_pieces(a: &[Piece], b: &[Piece]) -> Vec<Piece> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        let s = (&a[i].start).max(&b[j].start).clone();
        let e = (&a[i].end).min(&b[j].end).clone();
        if s < e {
            out.push(Piece::new(s, e));
        }
        if a[i].end < b[j].end {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

fn complement_pieces(a: &[Piece], period: &Q) -> Vec<Piece> {
    let mut out = Vec::new();
    let mut cursor = Q::zero();
    for p in a {
        if p.start > cursor {
            out.push(Piece::new(cursor.clone(), p.start.clone()));
        }
        cursor = p.end.clone();
    }
    if &cursor < period {
        out.push(Piece::new(cursor, period.clone()));
    }
    out
}

/// `x mod 2^log2_period ∈ ⋃ pieces`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub log2_period: i64,
    pub pieces: Vec<Piece>,
}

impl Constraint {
    pub fn new(log2_period: i64, pieces: Vec<Piece>) -> Result<Self> {
        let period = pow2(log2_period);
        let pieces = normalize_pieces(pieces);
        for p in &pieces {
            if p.start.is_negative() || p.end > period {
                return Err(Error::InvalidSet(format!(
                    "piece [{}, {}) outside period 2^{log2_period}",
                    rational::to_string(&p.start),
                    rational::to_string(&p.end)
                )));
            }
        }
        Ok(Self { log2_period, pieces })
    }

    /// `x mod 2^log2_period ∈ [start, end)`.
    pub fn single(log2_period: i64, start: Q, end: Q) -> Result<Self> {
        Self::new(log2_period, vec![Piece::new(start, end)])
    }

    pub fn period(&self) -> Q {
        pow2(self.log2_period)
    }

    pub fn contains(&self, x: &Q) -> bool {
        let r = rational::rem_euclid(x, &self.period());
        let idx = self.pieces.partition_point(|p| p.end <= r);
        idx < self.pieces.len() && self.pieces[idx].start <= r
    }

    fn complement(&self) -> Constraint {
        Constraint { log2_period: self.log2_period, pieces: complement_pieces(&self.pieces, &self.period()) }
    }

    fn translate(&self, t: &Q) -> Constraint {
        let period = self.period();
        let s = rational::rem_euclid(t, &period);
        let mut out = Vec::with_capacity(self.pieces.len() + 1);
        for p in &self.pieces {
            let a = &p.start + &s;
            let b = &p.end + &s;
            if b <= period {
                out.push(Piece::new(a, b));
            } else if a >= period {
                out.push(Piece::new(a - &period, b - &period));
            } else {
                out.push(Piece::new(a, period.clone()));
                out.push(Piece::new(Q::zero(), b - &period));
            }
        }
        Constraint { log2_period: self.log2_period, pieces: normalize_pieces(out) }
    }
}

#[derive(Clone, Debug)]
struct Level {
    period: Q,
    per_period: Q,
    /// `prefix[i]` = measure of pieces `0..i` within one period.
    prefix: Vec<Q>,
    /// cumulative measure of the deeper chain at each piece start
    base: Vec<Q>,
}

#[derive(Clone, Debug)]
struct ChainTable {
    levels: Vec<Level>,
}

fn cum(chain: &[Constraint], levels: &[Level], t: &Q) -> Q {
    if chain.is_empty() {
        return t.clone();
    }
    let lv = &levels[0];
    let q = floor_div(t, &lv.period);
    let r = t - big(q.clone()) * &lv.period;
    let pieces = &chain[0].pieces;
    let idx = pieces.partition_point(|p| p.end <= r);
    let mut acc = big(q) * &lv.per_period + &lv.prefix[idx];
    if idx < pieces.len() && pieces[idx].start < r {
        acc += cum(&chain[1..], &levels[1..], &r) - &lv.base[idx];
    }
    acc
}

/// Smallest `t` with `cum(t) = target`; `None` when the chain is empty.
fn inv(chain: &[Constraint], levels: &[Level], target: &Q) -> Option<Q> {
    if chain.is_empty() {
        return Some(target.clone());
    }
    let lv = &levels[0];
    if lv.per_period.is_zero() {
        return None;
    }
    let q = floor_div(target, &lv.per_period);
    let r = target - big(q.clone()) * &lv.per_period;
    let (q, r) = if r.is_zero() { (q - 1, lv.per_period.clone()) } else { (q, r) };
    let n = chain[0].pieces.len();
    let idx = (0..n).find(|&j| lv.prefix[j + 1] >= r)?;
    let need = &lv.base[idx] + (&r - &lv.prefix[idx]);
    let t = inv(&chain[1..], &levels[1..], &need)?;
    Some(big(q) * &lv.period + t)
}

fn build_table(chain: &[Constraint]) -> Vec<Level> {
    if chain.is_empty() {
        return Vec::new();
    }
    let rest = build_table(&chain[1..]);
    let mut prefix = vec![Q::zero()];
    let mut base = Vec::with_capacity(chain[0].pieces.len());
    for p in &chain[0].pieces {
        let fc = cum(&chain[1..], &rest, &p.start);
        let fd = cum(&chain[1..], &rest, &p.end);
        let next = prefix.last().unwrap() + (fd - &fc);
        prefix.push(next);
        base.push(fc);
    }
    let per_period = prefix.last().unwrap().clone();
    let mut levels = Vec::with_capacity(chain.len());
    levels.push(Level { period: chain[0].period(), per_period, prefix, base });
    levels.extend(rest);
    levels
}

/// Window `[lo, hi)` intersected with a chain of periodic constraints.
#[derive(Debug)]
pub struct Family {
    lo: Option<Q>,
    hi: Option<Q>,
    /// strictly decreasing periods
    chain: Vec<Constraint>,
    table: OnceLock<ChainTable>,
}

impl Clone for Family {
    fn clone(&self) -> Self {
        Self { lo: self.lo.clone(), hi: self.hi.clone(), chain: self.chain.clone(), table: OnceLock::new() }
    }
}

impl PartialEq for Family {
    fn eq(&self, other: &Self) -> bool {
        self.lo == other.lo && self.hi == other.hi && self.chain == other.chain
    }
}

impl Eq for Family {}

impl Family {
    pub fn new(lo: Option<Q>, hi: Option<Q>, constraints: Vec<Constraint>) -> Self {
        let mut f = Self { lo, hi, chain: Vec::new(), table: OnceLock::new() };
        for c in constraints {
            f.add_constraint(c);
        }
        f
    }

    pub fn window(lo: Q, hi: Q) -> Self {
        Self::new(Some(lo), Some(hi), Vec::new())
    }

    pub fn everything() -> Self {
        Self::new(None, None, Vec::new())
    }

    pub fn lo(&self) -> Option<&Q> {
        self.lo.as_ref()
    }

    pub fn hi(&self) -> Option<&Q> {
        self.hi.as_ref()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.chain
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_some() && self.hi.is_some()
    }

    fn add_constraint(&mut self, c: Constraint) {
        self.table = OnceLock::new();
        match self.chain.binary_search_by(|x| c.log2_period.cmp(&x.log2_period)) {
            Ok(i) => {
                let merged = intersect_pieces(&self.chain[i].pieces, &c.pieces);
                self.chain[i].pieces = merged;
            }
            Err(i) => self.chain.insert(i, c),
        }
    }

    pub fn with_constraint(&self, c: Constraint) -> Self {
        let mut f = self.clone();
        f.add_constraint(c);
        f
    }

    fn levels(&self) -> &[Level] {
        &self.table.get_or_init(|| ChainTable { levels: build_table(&self.chain) }).levels
    }

    /// Measure of the chain (ignoring the window) over `[0, t)`, signed.
    fn chain_cum(&self, t: &Q) -> Q {
        cum(&self.chain, self.levels(), t)
    }

    /// Measure of the chain over one period of its coarsest constraint.
    fn per_period(&self) -> Option<&Q> {
        self.levels().first().map(|l| &l.per_period)
    }

    pub fn contains(&self, x: &Q) -> bool {
        if let Some(lo) = &self.lo {
            if x < lo {
                return false;
            }
        }
        if let Some(hi) = &self.hi {
            if x >= hi {
                return false;
            }
        }
        self.chain.iter().all(|c| c.contains(x))
    }

    pub fn is_empty(&self) -> bool {
        if let (Some(lo), Some(hi)) = (&self.lo, &self.hi) {
            if lo >= hi {
                return true;
            }
        }
        if let Some(m) = self.per_period() {
            if m.is_zero() {
                return true;
            }
        }
        match (&self.lo, &self.hi) {
            (Some(lo), Some(hi)) => self.chain_cum(hi) == self.chain_cum(lo),
            _ => false,
        }
    }

    pub fn measure(&self) -> Result<Q> {
        match (&self.lo, &self.hi) {
            (Some(lo), Some(hi)) => {
                if lo >= hi {
                    Ok(Q::zero())
                } else {
                    Ok(self.chain_cum(hi) - self.chain_cum(lo))
                }
            }
            _ if self.is_empty() => Ok(Q::zero()),
            _ => Err(Error::Unbounded),
        }
    }

    /// Measure of `self ∩ (-∞, t)` for a bounded family.
    pub fn measure_below(&self, t: &Q) -> Result<Q> {
        let (lo, hi) = self.bounds()?;
        if t <= lo {
            return Ok(Q::zero());
        }
        let t = if t > hi { hi } else { t };
        Ok(self.chain_cum(t) - self.chain_cum(lo))
    }

    /// Smallest `t` with `measure_below(t) = m`, for `0 ≤ m ≤ measure`.
    pub fn quantile(&self, m: &Q) -> Result<Q> {
        let (lo, _) = self.bounds()?;
        if m.is_zero() {
            return Ok(lo.clone());
        }
        let target = self.chain_cum(lo) + m;
        inv(&self.chain, self.levels(), &target)
            .ok_or_else(|| Error::InvalidSet("quantile of an empty family".into()))
    }

    fn bounds(&self) -> Result<(&Q, &Q)> {
        match (&self.lo, &self.hi) {
            (Some(lo), Some(hi)) => Ok((lo, hi)),
            _ => Err(Error::Unbounded),
        }
    }

    pub fn intersect(&self, other: &Family) -> Family {
        let lo = match (&self.lo, &other.lo) {
            (Some(a), Some(b)) => Some(a.max(b).clone()),
            (a, b) => a.clone().or_else(|| b.clone()),
        };
        let hi = match (&self.hi, &other.hi) {
            (Some(a), Some(b)) => Some(a.min(b).clone()),
            (a, b) => a.clone().or_else(|| b.clone()),
        };
        let mut f = Family { lo, hi, chain: self.chain.clone(), table: OnceLock::new() };
        for c in &other.chain {
            f.add_constraint(c.clone());
        }
        f
    }

    /// Pairwise disjoint families covering the complement of `self` in ℝ.
    pub fn complement_parts(&self) -> Vec<Family> {
        let mut out = Vec::new();
        if let Some(lo) = &self.lo {
            out.push(Family::new(None, Some(lo.clone()), Vec::new()));
        }
        if let Some(hi) = &self.hi {
            out.push(Family::new(Some(hi.clone()), None, Vec::new()));
        }
        let window = Family::new(self.lo.clone(), self.hi.clone(), Vec::new());
        let mut prefix = window;
        for c in &self.chain {
            out.push(prefix.with_constraint(c.complement()));
            prefix = prefix.with_constraint(c.clone());
        }
        out
    }

    pub fn translate(&self, t: &Q) -> Family {
        Family {
            lo: self.lo.as_ref().map(|v| v + t),
            hi: self.hi.as_ref().map(|v| v + t),
            chain: self.chain.iter().map(|c| c.translate(t)).collect(),
            table: OnceLock::new(),
        }
    }

    /// Keeps the leftmost part of the family carrying a `rho` fraction of
    /// its measure.
    pub fn prefix_cut(&self, rho: &Q) -> Result<Family> {
        let total = self.measure()?;
        if rho.is_one() || total.is_zero() {
            return Ok(self.clone());
        }
        let t = self.quantile(&(rho * &total))?;
        Ok(Family { lo: self.lo.clone(), hi: Some(t), chain: self.chain.clone(), table: OnceLock::new() })
    }

    /// Rewrites the family in the index space of the orbit `x + m·2^-J`:
    /// the result contains the integer `m` iff `floor(x/2^-J)·2^-J + m·2^-J + φ`
    /// lies in `self`, where `φ = x mod 2^-J`.
    fn to_orbit_indices(&self, step: u64, phase: &Q) -> Result<Family> {
        let delta = pow2(-(step as i64));
        let idx = |v: &Q| big(ceil(&((v - phase) / &delta)));
        let mut chain = Vec::with_capacity(self.chain.len());
        for c in &self.chain {
            let e = c.log2_period + step as i64;
            if e < 0 {
                return Err(Error::GridMismatch { log2_period: c.log2_period, step });
            }
            let pieces = c.pieces.iter().map(|p| Piece::new(idx(&p.start), idx(&p.end))).collect();
            chain.push(Constraint { log2_period: e, pieces: normalize_pieces(pieces) });
        }
        Ok(Family {
            lo: self.lo.as_ref().map(idx),
            hi: self.hi.as_ref().map(idx),
            chain,
            table: OnceLock::new(),
        })
    }

    /// `#{k ∈ [k_lo, k_hi) : x + k·2^-step ∈ self}`.
    pub fn count_orbit(&self, step: u64, x: &Q, k_lo: &BigInt, k_hi: &BigInt) -> Result<BigInt> {
        if k_hi <= k_lo {
            return Ok(BigInt::zero());
        }
        let delta = pow2(-(step as i64));
        let k0 = floor_div(x, &delta);
        let phase = x - big(k0.clone()) * &delta;
        let fam = self.to_orbit_indices(step, &phase)?;
        let mut a = big(k_lo + &k0);
        let mut b = big(k_hi + &k0);
        if let Some(lo) = &fam.lo {
            if lo > &a {
                a = lo.clone();
            }
        }
        if let Some(hi) = &fam.hi {
            if hi < &b {
                b = hi.clone();
            }
        }
        if b <= a {
            return Ok(BigInt::zero());
        }
        let n = fam.chain_cum(&b) - fam.chain_cum(&a);
        debug_assert!(n.is_integer());
        Ok(n.to_integer())
    }

    /// Visits the maximal runs of a bounded family left to right, starting
    /// at `from`. The visitor returns `false` to stop. `step_budget` caps the
    /// number of recursion steps.
    pub fn for_each_run(
        &self,
        from: Option<&Q>,
        step_budget: usize,
        visit: &mut dyn FnMut(Q, Q) -> bool,
    ) -> Result<()> {
        let (lo, hi) = self.bounds()?;
        let a = match from {
            Some(f) if f > lo => f.clone(),
            _ => lo.clone(),
        };
        let mut pending: Option<(Q, Q)> = None;
        let mut stopped = false;
        let mut steps = 0usize;
        let mut emit = |s: Q, e: Q| -> bool {
            match &mut pending {
                Some((_, pe)) if *pe == s => {
                    *pe = e;
                    true
                }
                _ => {
                    let keep = match pending.take() {
                        Some((ps, pe)) => visit(ps, pe),
                        None => true,
                    };
                    pending = Some((s, e));
                    keep
                }
            }
        };
        fn walk(
            chain: &[Constraint],
            a: &Q,
            b: &Q,
            steps: &mut usize,
            budget: usize,
            emit: &mut dyn FnMut(Q, Q) -> bool,
        ) -> Result<bool> {
            *steps += 1;
            if *steps > budget {
                return Err(Error::Capacity { needed: *steps, limit: budget });
            }
            if chain.is_empty() {
                return Ok(emit(a.clone(), b.clone()));
            }
            let c = &chain[0];
            let period = c.period();
            let mut q = floor_div(a, &period);
            loop {
                let base = big(q.clone()) * &period;
                if &base >= b {
                    return Ok(true);
                }
                for p in &c.pieces {
                    let s = (&base + &p.start).max(a.clone());
                    let e = (&base + &p.end).min(b.clone());
                    if s < e && !walk(&chain[1..], &s, &e, steps, budget, emit)? {
                        return Ok(false);
                    }
                }
                q += 1;
            }
        }
        if a < *hi {
            stopped = !walk(&self.chain, &a, hi, &mut steps, step_budget, &mut emit)?;
        }
        if !stopped {
            if let Some((s, e)) = pending.take() {
                visit(s, e);
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        for w in self.chain.windows(2) {
            if w[0].log2_period <= w[1].log2_period {
                return Err(Error::InvalidSet("constraint periods must be strictly decreasing".into()));
            }
        }
        for c in &self.chain {
            let period = c.period();
            for w in c.pieces.windows(2) {
                if w[0].end > w[1].start {
                    return Err(Error::InvalidSet("overlapping pieces in a constraint".into()));
                }
            }
            for p in &c.pieces {
                if p.start >= p.end || p.start.is_negative() || p.end > period {
                    return Err(Error::InvalidSet("piece outside its period".into()));
                }
            }
        }
        Ok(())
    }
}

/// Finite union of pairwise disjoint [`Family`] values.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PeriodicIntervalSet {
    families: Vec<Family>,
}

impl PeriodicIntervalSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn window(lo: Q, hi: Q) -> Self {
        Self::from_family(Family::window(lo, hi))
    }

    pub fn from_family(f: Family) -> Self {
        if f.is_empty() {
            Self::empty()
        } else {
            Self { families: vec![f] }
        }
    }

    /// Builds a set from families the caller guarantees to be disjoint;
    /// empty families are dropped.
    pub fn from_disjoint(families: Vec<Family>) -> Self {
        Self { families: families.into_iter().filter(|f| !f.is_empty()).collect() }
    }

    /// Validated constructor for untrusted input: rejects overlapping families.
    pub fn from_families_checked(families: Vec<Family>) -> Result<Self> {
        for f in &families {
            f.validate()?;
        }
        let set = Self { families };
        set.validate()?;
        Ok(set)
    }

    pub fn families(&self) -> &[Family] {
        &self.families
    }

    pub fn is_empty(&self) -> bool {
        self.families.iter().all(|f| f.is_empty())
    }

    pub fn measure(&self) -> Result<Q> {
        self.families.iter().try_fold(Q::zero(), |acc, f| Ok(acc + f.measure()?))
    }

    pub fn measure_below(&self, t: &Q) -> Result<Q> {
        self.families.iter().try_fold(Q::zero(), |acc, f| Ok(acc + f.measure_below(t)?))
    }

    pub fn contains(&self, x: &Q) -> bool {
        self.families.iter().any(|f| f.contains(x))
    }

    pub fn intersect(&self, other: &Self) -> Result<Self> {
        self.intersect_capped(other, DEFAULT_MAX_FAMILIES)
    }

    pub fn intersect_capped(&self, other: &Self, limit: usize) -> Result<Self> {
        let mut out = Vec::new();
        for a in &self.families {
            for b in &other.families {
                let f = a.intersect(b);
                if !f.is_empty() {
                    out.push(f);
                    if out.len() > limit {
                        return Err(Error::Capacity { needed: out.len(), limit });
                    }
                }
            }
        }
        Ok(Self { families: out })
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.difference_capped(other, DEFAULT_MAX_FAMILIES)
    }

    pub fn difference_capped(&self, other: &Self, limit: usize) -> Result<Self> {
        let mut current = self.families.clone();
        for g in &other.families {
            let parts = g.complement_parts();
            let mut next = Vec::new();
            for f in &current {
                // families disjoint from g survive unchanged
                if f.intersect(g).is_empty() {
                    next.push(f.clone());
                    continue;
                }
                for p in &parts {
                    let h = f.intersect(p);
                    if !h.is_empty() {
                        next.push(h);
                    }
                }
                if next.len() > limit {
                    return Err(Error::Capacity { needed: next.len(), limit });
                }
            }
            current = next;
        }
        Ok(Self { families: current })
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        self.union_capped(other, DEFAULT_MAX_FAMILIES)
    }

    pub fn union_capped(&self, other: &Self, limit: usize) -> Result<Self> {
        let extra = other.difference_capped(self, limit)?;
        let mut families = self.families.clone();
        families.extend(extra.families);
        if families.len() > limit {
            return Err(Error::Capacity { needed: families.len(), limit });
        }
        Ok(Self { families })
    }

    /// Union of sets the caller knows to be pairwise disjoint.
    pub fn disjoint_union(sets: impl IntoIterator<Item = Self>) -> Self {
        Self { families: sets.into_iter().flat_map(|s| s.families).collect() }
    }

    pub fn translate(&self, t: &Q) -> Self {
        Self { families: self.families.iter().map(|f| f.translate(t)).collect() }
    }

    /// Copies `template ⊆ [0, 2^atom_log2)` into every atom
    /// `[i·2^atom_log2, (i+1)·2^atom_log2)` contained in `atoms`.
    pub fn lift(atoms: &Self, atom_log2: i64, template: &Self) -> Result<Self> {
        let size = pow2(atom_log2);
        let mut lifted = Vec::with_capacity(template.families.len());
        for t in &template.families {
            let (lo, hi) = t.bounds()?;
            if lo.is_negative() || hi > &size || t.chain.iter().any(|c| c.log2_period > atom_log2) {
                return Err(Error::InvalidSet("lift template must live inside one atom".into()));
            }
            let mut chain = t.chain.clone();
            chain.retain(|c| c.log2_period != atom_log2);
            let mut f = Family::new(None, None, chain);
            let mut window = Constraint::single(atom_log2, lo.clone(), hi.clone())?;
            if let Some(c) = t.chain.iter().find(|c| c.log2_period == atom_log2) {
                window.pieces = intersect_pieces(&window.pieces, &c.pieces);
            }
            f.add_constraint(window);
            lifted.push(f);
        }
        let mut out = Vec::new();
        for a in &atoms.families {
            for f in &lifted {
                let g = a.intersect(f);
                if !g.is_empty() {
                    out.push(g);
                }
            }
        }
        Ok(Self { families: out })
    }

    /// Subset carrying exactly `rho · measure(self)`: each family keeps its
    /// leftmost `rho` fraction.
    pub fn scale_components(&self, rho: &Q) -> Result<Self> {
        if !rho.is_positive() || rho > &Q::one() {
            return Err(Error::InvalidParams("scale factor must lie in (0, 1]".into()));
        }
        let families = self.families.iter().map(|f| f.prefix_cut(rho)).collect::<Result<Vec<_>>>()?;
        Ok(Self::from_disjoint(families))
    }

    /// `#{k ∈ [k_lo, k_hi) : x + k·2^-step ∈ self}` (taken mod 1 when `wrap`),
    /// evaluated in closed form.
    pub fn count_orbit_hits(
        &self,
        step: u64,
        x: &Q,
        k_lo: &BigInt,
        k_hi: &BigInt,
        wrap: bool,
    ) -> Result<BigInt> {
        let mut total = BigInt::zero();
        for f in &self.families {
            if wrap {
                let (lo, hi) = f.bounds()?;
                if lo.is_negative() || hi > &Q::one() {
                    return Err(Error::InvalidSet("wrapped counting needs a set inside [0, 1)".into()));
                }
                let mut g = Family::new(None, None, f.chain.clone());
                g.add_constraint(Constraint::single(0, lo.clone(), hi.clone())?);
                total += g.count_orbit(step, x, k_lo, k_hi)?;
            } else {
                total += f.count_orbit(step, x, k_lo, k_hi)?;
            }
        }
        Ok(total)
    }

    /// Left endpoints and ends of the first `limit` runs, in family order.
    pub fn runs(&self, limit: usize) -> Result<Vec<(Q, Q)>> {
        let mut out = Vec::new();
        for f in &self.families {
            if out.len() >= limit {
                break;
            }
            f.for_each_run(None, 64 * limit + 1024, &mut |s, e| {
                out.push((s, e));
                out.len() < limit
            })?;
        }
        out.truncate(limit);
        Ok(out)
    }

    /// Point `t` whose measure rank is `m`: smallest `t` with
    /// `measure(self ∩ (-∞, t)) = m`, searched family by family.
    pub fn quantile(&self, m: &Q) -> Result<Q> {
        let mut rest = m.clone();
        for f in &self.families {
            let fm = f.measure()?;
            if rest <= fm {
                return f.quantile(&rest);
            }
            rest -= fm;
        }
        Err(Error::InvalidParams("quantile beyond the set measure".into()))
    }

    pub fn validate(&self) -> Result<()> {
        for f in &self.families {
            f.validate()?;
        }
        for (i, a) in self.families.iter().enumerate() {
            for b in &self.families[i + 1..] {
                if !a.intersect(b).is_empty() {
                    return Err(Error::InvalidSet("families overlap".into()));
                }
            }
        }
        Ok(())
    }

    pub fn family_count(&self) -> usize {
        self.families.len()
    }
}

#[derive(Serialize, Deserialize)]
struct ConstraintRepr {
    period: DyadicRational,
    pieces: Vec<[String; 2]>,
}

#[derive(Serialize, Deserialize)]
struct FamilyRepr {
    #[serde(with = "crate::rational::serde_rational_opt", default)]
    start: Option<Q>,
    #[serde(with = "crate::rational::serde_rational_opt", default)]
    end: Option<Q>,
    constraints: Vec<ConstraintRepr>,
}

impl Serialize for Family {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FamilyRepr {
            start: self.lo.clone(),
            end: self.hi.clone(),
            constraints: self
                .chain
                .iter()
                .map(|c| ConstraintRepr {
                    period: DyadicRational::pow2(c.log2_period),
                    pieces: c
                        .pieces
                        .iter()
                        .map(|p| [rational::to_string(&p.start), rational::to_string(&p.end)])
                        .collect(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Family {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = FamilyRepr::deserialize(d)?;
        let mut chain = Vec::with_capacity(r.constraints.len());
        for c in r.constraints {
            let log2 = rational::log2_exact(&c.period.to_rational())
                .ok_or_else(|| D::Error::custom("constraint period must be a power of two"))?;
            let mut pieces = Vec::with_capacity(c.pieces.len());
            for [a, b] in c.pieces {
                let a = rational::parse(&a).map_err(D::Error::custom)?;
                let b = rational::parse(&b).map_err(D::Error::custom)?;
                pieces.push(Piece::new(a, b));
            }
            chain.push(Constraint { log2_period: log2, pieces });
        }
        let f = Family { lo: r.start, hi: r.end, chain, table: OnceLock::new() };
        f.validate().map_err(D::Error::custom)?;
        Ok(f)
    }
}

impl Serialize for PeriodicIntervalSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.families.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PeriodicIntervalSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let families = Vec::<Family>::deserialize(d)?;
        PeriodicIntervalSet::from_families_checked(families).map_err(serde::de::Error::custom)
    }
}

/// Orders runs by start; used by callers that merge run lists.
pub fn cmp_runs(a: &(Q, Q), b: &(Q, Q)) -> Ordering {
    a.0.cmp(&b.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    /// even (or odd) 2^-j grid intervals of [0, 1)
    fn parity_grid(j: i64, odd: bool) -> PeriodicIntervalSet {
        let cell = pow2(-j);
        let (s, e) = if odd { (cell.clone(), &cell * int(2)) } else { (Q::zero(), cell.clone()) };
        PeriodicIntervalSet::from_family(Family::new(
            Some(Q::zero()),
            Some(Q::one()),
            vec![Constraint::single(1 - j, s, e).unwrap()],
        ))
    }

    #[test]
    fn empty_union_is_identity() {
        let s = parity_grid(4, false);
        let u = PeriodicIntervalSet::empty().union(&s).unwrap();
        assert_eq!(u.measure().unwrap(), ratio(1, 2));
        assert_eq!(PeriodicIntervalSet::empty().measure().unwrap(), Q::zero());
    }

    #[test]
    fn even_and_odd_cells_partition_unit_interval() {
        let u = parity_grid(4, false).union(&parity_grid(4, true)).unwrap();
        assert_eq!(u.measure().unwrap(), int(1));
        assert!(parity_grid(4, false).intersect(&parity_grid(4, true)).unwrap().is_empty());
    }

    #[test]
    fn count_full_rotation_and_half_period() {
        let unit = PeriodicIntervalSet::window(Q::zero(), Q::one());
        let k = BigInt::from(1000);
        let n = unit.count_orbit_hits(7, &ratio(3, 10), &BigInt::zero(), &k, true).unwrap();
        assert_eq!(n, k);
        let j = 6u64;
        let even = parity_grid(j as i64, false);
        let n = even.count_orbit_hits(j, &Q::zero(), &BigInt::zero(), &(BigInt::one() << j), true).unwrap();
        assert_eq!(n, BigInt::one() << (j - 1));
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let s = parity_grid(10, false);
        let err = s.count_orbit_hits(4, &Q::zero(), &BigInt::zero(), &BigInt::from(10), false);
        assert!(matches!(err, Err(Error::GridMismatch { .. })));
    }

    #[test]
    fn scale_single_component() {
        let s = PeriodicIntervalSet::window(Q::zero(), ratio(1, 2));
        let t = s.scale_components(&ratio(99, 100)).unwrap();
        assert_eq!(t, PeriodicIntervalSet::window(Q::zero(), ratio(99, 200)));
        assert_eq!(s.scale_components(&Q::one()).unwrap(), s);
    }

    #[test]
    fn quantile_inverts_cumulative_measure() {
        let s = parity_grid(5, true);
        for num in [1i64, 7, 16, 31, 32] {
            let m = ratio(num, 64);
            let t = s.quantile(&m).unwrap();
            assert_eq!(s.measure_below(&t).unwrap(), m);
            assert!(s.measure_below(&(&t - ratio(1, 1 << 20))).unwrap() < m);
        }
    }

    #[test]
    fn runs_merge_adjacent_pieces() {
        let f = Family::new(
            Some(Q::zero()),
            Some(Q::one()),
            vec![Constraint::new(-1, vec![Piece::new(Q::zero(), ratio(1, 4)), Piece::new(ratio(1, 4), ratio(3, 8))])
                .unwrap()],
        );
        let runs = PeriodicIntervalSet::from_family(f).runs(10).unwrap();
        assert_eq!(runs, vec![(Q::zero(), ratio(3, 8)), (ratio(1, 2), ratio(7, 8))]);
    }

    #[test]
    fn translate_wraps_pieces() {
        let c = Constraint::single(0, ratio(1, 2), int(1)).unwrap().translate(&ratio(1, 4));
        assert_eq!(c.pieces, vec![Piece::new(Q::zero(), ratio(1, 4)), Piece::new(ratio(3, 4), int(1))]);
    }

    #[test]
    fn lift_copies_template_into_atoms() {
        let atoms = parity_grid(3, false);
        let template = PeriodicIntervalSet::window(Q::zero(), ratio(1, 32));
        let lifted = PeriodicIntervalSet::lift(&atoms, -3, &template).unwrap();
        assert_eq!(lifted.measure().unwrap(), ratio(4, 32));
        assert!(lifted.contains(&ratio(2, 8)));
        assert!(!lifted.contains(&ratio(1, 8)));
        assert!(!lifted.contains(&(ratio(2, 8) + ratio(1, 32))));
    }

    #[test]
    fn overlapping_families_rejected() {
        let a = Family::window(Q::zero(), ratio(1, 2));
        let b = Family::window(ratio(1, 4), Q::one());
        assert!(PeriodicIntervalSet::from_families_checked(vec![a, b]).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let s = parity_grid(4, true).union(&PeriodicIntervalSet::window(ratio(-3, 7), ratio(1, 9))).unwrap();
        let js = serde_json::to_string(&s).unwrap();
        let back: PeriodicIntervalSet = serde_json::from_str(&js).unwrap();
        assert_eq!(back, s);
    }
}
