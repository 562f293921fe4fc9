//! Nonnegative step functions with periodic level sets.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval_set::PeriodicIntervalSet;
use crate::rational::{self, ExactRational};

type Q = ExactRational;

/// `Σ value · 1_support` with pairwise disjoint supports and positive values.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepFunction {
    levels: BTreeMap<Q, PeriodicIntervalSet>,
}

impl StepFunction {
    pub fn zero() -> Self {
        Self::default()
    }

    /// `value · 1_support`.
    pub fn indicator(value: Q, support: PeriodicIntervalSet) -> Result<Self> {
        let mut f = Self::zero();
        f.add_disjoint(value, support)?;
        Ok(f)
    }

    /// Adds a level whose support the caller knows is disjoint from the
    /// current support.
    pub fn add_disjoint(&mut self, value: Q, support: PeriodicIntervalSet) -> Result<()> {
        if !value.is_positive() {
            return Err(Error::InvalidParams("step function values must be positive".into()));
        }
        if support.is_empty() {
            return Ok(());
        }
        match self.levels.remove(&value) {
            Some(old) => {
                let merged = PeriodicIntervalSet::disjoint_union([old, support]);
                self.levels.insert(value, merged);
            }
            None => {
                self.levels.insert(value, support);
            }
        }
        Ok(())
    }

    /// Sum of step functions with pairwise disjoint supports.
    pub fn disjoint_sum(parts: impl IntoIterator<Item = StepFunction>) -> Result<Self> {
        let mut f = Self::zero();
        for p in parts {
            for (v, s) in p.levels {
                f.add_disjoint(v, s)?;
            }
        }
        Ok(f)
    }

    pub fn levels(&self) -> impl Iterator<Item = (&Q, &PeriodicIntervalSet)> {
        self.levels.iter()
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn is_zero(&self) -> bool {
        self.levels.values().all(|s| s.is_empty())
    }

    pub fn eval(&self, x: &Q) -> Q {
        self.levels
            .iter()
            .find(|(_, s)| s.contains(x))
            .map(|(v, _)| v.clone())
            .unwrap_or_else(Q::zero)
    }

    pub fn integral(&self) -> Result<Q> {
        self.levels.iter().try_fold(Q::zero(), |acc, (v, s)| Ok(acc + v * s.measure()?))
    }

    pub fn support(&self) -> PeriodicIntervalSet {
        PeriodicIntervalSet::disjoint_union(self.levels.values().cloned())
    }

    /// `c · f` for `c > 0`.
    pub fn scale(&self, c: &Q) -> Result<Self> {
        if !c.is_positive() {
            return Err(Error::InvalidParams("scale factor must be positive".into()));
        }
        Ok(Self { levels: self.levels.iter().map(|(v, s)| (v * c, s.clone())).collect() })
    }

    pub fn max_value(&self) -> Q {
        self.levels.keys().next_back().cloned().unwrap_or_else(Q::zero)
    }

    /// Checks positivity and pairwise disjointness of the supports.
    pub fn validate(&self) -> Result<()> {
        let mut seen = PeriodicIntervalSet::empty();
        for (v, s) in &self.levels {
            if !v.is_positive() {
                return Err(Error::InvalidSet("nonpositive level value".into()));
            }
            s.validate()?;
            if !seen.intersect(s)?.is_empty() {
                return Err(Error::InvalidSet("level supports overlap".into()));
            }
            seen = PeriodicIntervalSet::disjoint_union([seen, s.clone()]);
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct LevelRepr {
    #[serde(with = "crate::rational::serde_rational")]
    value: Q,
    support: PeriodicIntervalSet,
}

impl Serialize for StepFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let reprs: Vec<LevelRepr> =
            self.levels.iter().map(|(v, sup)| LevelRepr { value: v.clone(), support: sup.clone() }).collect();
        reprs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for StepFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let reprs = Vec::<LevelRepr>::deserialize(d)?;
        let mut f = StepFunction::zero();
        for r in reprs {
            if f.levels.contains_key(&r.value) {
                return Err(D::Error::custom(format!("duplicate level {}", rational::to_string(&r.value))));
            }
            f.add_disjoint(r.value, r.support).map_err(D::Error::custom)?;
        }
        f.validate().map_err(D::Error::custom)?;
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    #[test]
    fn integral_and_eval() {
        let mut f = StepFunction::indicator(int(3), PeriodicIntervalSet::window(Q::zero(), ratio(1, 4))).unwrap();
        f.add_disjoint(ratio(1, 2), PeriodicIntervalSet::window(ratio(1, 2), int(1))).unwrap();
        assert_eq!(f.integral().unwrap(), ratio(3, 4) + ratio(1, 4));
        assert_eq!(f.eval(&ratio(1, 8)), int(3));
        assert_eq!(f.eval(&ratio(3, 8)), Q::zero());
        assert_eq!(f.eval(&ratio(7, 8)), ratio(1, 2));
        assert_eq!(f.max_value(), int(3));
    }

    #[test]
    fn overlapping_levels_rejected_on_load() {
        let js = r#"[{"value":"1/1","support":[{"start":"0/1","end":"1/2","constraints":[]}]},
                     {"value":"2/1","support":[{"start":"1/4","end":"1/1","constraints":[]}]}]"#;
        assert!(serde_json::from_str::<StepFunction>(js).is_err());
    }
}
