//! Machine-readable verification records.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::rational::{self, ExactRational};

type Q = ExactRational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClaimKind {
    Exact,
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Relation {
    pub fn holds(self, lhs: &Q, rhs: &Q) -> bool {
        match self {
            Relation::Eq => lhs == rhs,
            Relation::Lt => lhs < rhs,
            Relation::Le => lhs <= rhs,
            Relation::Gt => lhs > rhs,
            Relation::Ge => lhs >= rhs,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::Eq => "=",
            Relation::Lt => "<",
            Relation::Le => "<=",
            Relation::Gt => ">",
            Relation::Ge => ">=",
        }
    }
}

/// Point and parameter at which a sampled claim was checked.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    #[serde(with = "crate::rational::serde_rational_opt", default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Q>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Witness {
    pub fn at(x: Q, n: &BigInt) -> Self {
        Self { x: Some(x), n: Some(n.to_string()), note: None }
    }

    pub fn point(x: Q) -> Self {
        Self { x: Some(x), n: None, note: None }
    }

    pub fn note(note: impl Into<String>) -> Self {
        Self { x: None, n: None, note: Some(note.into()) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub claim_id: String,
    /// Which construction property the claim encodes.
    pub anchor: String,
    pub kind: ClaimKind,
    pub status: Status,
    #[serde(with = "crate::rational::serde_rational")]
    pub lhs: Q,
    pub relation: Relation,
    #[serde(with = "crate::rational::serde_rational")]
    pub rhs: Q,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub witnesses: Vec<Witness>,
}

impl Claim {
    pub fn new(
        claim_id: impl Into<String>,
        anchor: impl Into<String>,
        kind: ClaimKind,
        lhs: Q,
        relation: Relation,
        rhs: Q,
    ) -> Self {
        let status = if relation.holds(&lhs, &rhs) { Status::Pass } else { Status::Fail };
        Self { claim_id: claim_id.into(), anchor: anchor.into(), kind, status, lhs, relation, rhs, witnesses: Vec::new() }
    }

    pub fn exact(id: impl Into<String>, anchor: impl Into<String>, lhs: Q, relation: Relation, rhs: Q) -> Self {
        Self::new(id, anchor, ClaimKind::Exact, lhs, relation, rhs)
    }

    pub fn sampled(id: impl Into<String>, anchor: impl Into<String>, lhs: Q, relation: Relation, rhs: Q) -> Self {
        Self::new(id, anchor, ClaimKind::Sampled, lhs, relation, rhs)
    }

    /// A yes/no property recorded as `1 = 1` or `0 = 1`.
    pub fn boolean(id: impl Into<String>, anchor: impl Into<String>, kind: ClaimKind, ok: bool) -> Self {
        let lhs = if ok { rational::int(1) } else { rational::int(0) };
        Self::new(id, anchor, kind, lhs, Relation::Eq, rational::int(1))
    }

    pub fn with_witness(mut self, w: Witness) -> Self {
        self.witnesses.push(w);
        self
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

impl fmt::Display for Claim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed() { "PASS" } else { "FAIL" };
        write!(
            f,
            "{tag} {} [{}] {} {} {}",
            self.claim_id,
            match self.kind {
                ClaimKind::Exact => "exact",
                ClaimKind::Sampled => "sampled",
            },
            rational::to_string(&self.lhs),
            self.relation.symbol(),
            rational::to_string(&self.rhs)
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub command: String,
    pub claims: Vec<Claim>,
    /// Reported (not asserted) quantities.
    #[serde(default)]
    pub info: BTreeMap<String, String>,
}

impl VerificationReport {
    pub fn new(command: impl Into<String>) -> Self {
        Self { command: command.into(), ..Self::default() }
    }

    pub fn push(&mut self, claim: Claim) {
        self.claims.push(claim);
    }

    pub fn info(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        self.info.insert(key.into(), value.to_string());
    }

    pub fn extend(&mut self, other: VerificationReport) {
        self.claims.extend(other.claims);
        for (k, v) in other.info {
            self.info.insert(k, v);
        }
    }

    pub fn all_pass(&self) -> bool {
        self.claims.iter().all(Claim::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Claim> {
        self.claims.iter().filter(|c| !c.passed())
    }

    pub fn count(&self, kind: ClaimKind) -> usize {
        self.claims.iter().filter(|c| c.kind == kind).count()
    }

    /// Claims whose id starts with `prefix`.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a Claim> + 'a {
        self.claims.iter().filter(move |c| c.claim_id.starts_with(prefix))
    }

    pub fn summary(&self) -> String {
        let failed = self.failures().count();
        format!(
            "{}: {} claims ({} exact, {} sampled), {} failed",
            self.command,
            self.claims.len(),
            self.count(ClaimKind::Exact),
            self.count(ClaimKind::Sampled),
            failed
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    #[test]
    fn status_follows_relation() {
        assert!(Claim::exact("a", "x", int(1), Relation::Eq, int(1)).passed());
        assert!(!Claim::exact("a", "x", int(1), Relation::Gt, int(1)).passed());
        assert!(Claim::sampled("a", "x", ratio(1, 2), Relation::Le, int(1)).passed());
    }

    #[test]
    fn report_json_is_stable() {
        let mut r = VerificationReport::new("demo");
        r.push(Claim::exact("m", "measure", ratio(1, 2), Relation::Eq, ratio(2, 4)));
        r.info("note", 7);
        let a = serde_json::to_string(&r).unwrap();
        let b = serde_json::to_string(&serde_json::from_str::<VerificationReport>(&a).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("\"lhs\":\"1/2\""));
    }
}
