//! Run configuration, dispatch, versioned persistence, the randomized
//! oracle suite and text schematics.

use std::fs;
use std::path::{Path, PathBuf};

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analog::{self, AnalogSuite, Direction, FiniteSequence};
use crate::base::{build_base, verify_base, BaseParams, BaseSystem, LifeFunction, SamplingPolicy};
use crate::counting::{self, OrbitSpec, DEFAULT_ORACLE_CAP};
use crate::error::{Error, Result};
use crate::interval_set::{Constraint, Family, PeriodicIntervalSet, DEFAULT_MAX_FAMILIES};
use crate::level::{build_level, verify_level, LevelBudget, LevelParams};
use crate::pblock::{self, PBlockParams};
use crate::rational::{self, big, int, pow2, ExactRational, GridInterval};
use crate::report::{Claim, Relation, VerificationReport, Witness};
use crate::step::StepFunction;

type Q = ExactRational;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 0x5eed_2024;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budgets {
    pub max_families: usize,
    /// largest orbit exponent `J`
    pub max_j_bits: u64,
    pub oracle_cap: u64,
    pub max_level: u32,
}

impl Default for Budgets {
    fn default() -> Self {
        Self { max_families: DEFAULT_MAX_FAMILIES, max_j_bits: 4096, oracle_cap: DEFAULT_ORACLE_CAP, max_level: 3 }
    }
}

impl Budgets {
    pub fn level(&self) -> LevelBudget {
        LevelBudget { max_level: self.max_level, max_j: self.max_j_bits, max_families: self.max_families }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sampling {
    pub random_points: usize,
    pub endpoint_cap: usize,
    pub tuple_budget: usize,
}

impl Default for Sampling {
    fn default() -> Self {
        let p = SamplingPolicy::default();
        Self { random_points: p.random_points, endpoint_cap: p.endpoint_cap, tuple_budget: p.tuple_budget }
    }
}

/// Deliberate corruptions that must make a report fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeControl {
    /// place `f` on the residue `S + 1`
    ShiftResidue,
    /// replace `X_2` by a copy of `X_1`
    DuplicateVariable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    Base {
        #[serde(default = "default_gain")]
        gain: u32,
        #[serde(default = "default_startup")]
        startup: u64,
        #[serde(default)]
        support: u64,
        #[serde(default = "LifeFunction::successor")]
        life: LifeFunction,
        #[serde(default)]
        resolution: u64,
        #[serde(default)]
        index: i64,
        #[serde(default)]
        j: Option<u64>,
        #[serde(default)]
        relaxed: bool,
        #[serde(default)]
        negative_control: Option<NegativeControl>,
    },
    Levelk {
        #[serde(default = "default_level")]
        level: u32,
        #[serde(default = "default_gain")]
        gain: u32,
        #[serde(default = "default_startup")]
        startup: u64,
        #[serde(default)]
        relaxed: bool,
        #[serde(default)]
        negative_control: Option<NegativeControl>,
    },
    Pblock {
        p: u64,
        #[serde(default)]
        relaxed: bool,
        #[serde(default)]
        levels: Option<u32>,
        #[serde(default)]
        estimate_only: bool,
    },
    Blowup {
        p: u64,
        #[serde(default)]
        relaxed: bool,
        #[serde(default)]
        levels: Option<u32>,
    },
    Analog(AnalogCommand),
    OracleSuite {
        #[serde(default = "default_cases")]
        cases: usize,
        #[serde(default = "default_max_j")]
        max_j: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum AnalogCommand {
    /// `A(f)(x)` for a step function
    AOp {
        f: StepFunction,
        #[serde(with = "crate::rational::serde_rational")]
        x: Q,
        #[serde(default = "default_direction")]
        direction: Direction,
    },
    Hl {
        f: StepFunction,
        #[serde(with = "crate::rational::serde_rational")]
        x: Q,
    },
    Seq {
        /// `a_1, a_2, …` as `"num/den"` strings
        values: Vec<String>,
        #[serde(default)]
        i: i64,
        k: u64,
    },
    IndicatorEq {
        set: PeriodicIntervalSet,
        points: Vec<String>,
    },
    Suite(AnalogSuite),
}

fn default_gain() -> u32 {
    4
}
fn default_startup() -> u64 {
    11
}
fn default_level() -> u32 {
    2
}
fn default_cases() -> usize {
    1000
}
fn default_max_j() -> u64 {
    20
}
fn default_direction() -> Direction {
    Direction::Lag
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub command: Command,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self { command, seed: DEFAULT_SEED, budgets: Budgets::default(), sampling: Sampling::default(), output: None }
    }

    pub fn policy(&self) -> SamplingPolicy {
        SamplingPolicy {
            seed: self.seed,
            endpoint_cap: self.sampling.endpoint_cap,
            random_points: self.sampling.random_points,
            tuple_budget: self.sampling.tuple_budget,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Builds and verifies whatever the config names; a pure function of the
/// config.
pub fn run(cfg: &RunConfig) -> Result<VerificationReport> {
    let policy = cfg.policy();
    let mut rep = match &cfg.command {
        Command::Base { gain, startup, support, life, resolution, index, j, relaxed, negative_control } => {
            let mut p = BaseParams::new(*gain, life.clone(), *startup, *support, GridInterval::new(BigInt::from(*index), *resolution));
            p.j = *j;
            p.relaxed = *relaxed;
            let mut sys = build_base(p)?;
            if let Some(NegativeControl::ShiftResidue) = negative_control {
                let r = (support + 1) % (1u64 << gain);
                sys = sys.with_support_residue(r)?;
            }
            let mut rep = verify_base(&sys, &policy)?;
            rep.command = "base".into();
            rep
        }
        Command::Levelk { level, gain, startup, relaxed, negative_control } => {
            let mut p = LevelParams::new(GridInterval::unit(), *level, *gain, *startup);
            p.relaxed = *relaxed;
            let mut sys = build_level(&p, &cfg.budgets.level())?;
            if let Some(NegativeControl::DuplicateVariable) = negative_control {
                if sys.variables.len() < 2 {
                    return Err(Error::InvalidParams("duplicating a variable needs level ≥ 2".into()));
                }
                sys = sys.with_variable_replaced(1, 0);
            }
            verify_level(&sys, &policy)?
        }
        Command::Pblock { p, relaxed, levels, estimate_only } => {
            let params = PBlockParams { p: *p, relaxed: *relaxed, levels: *levels };
            if *estimate_only {
                let mut rep = pblock::plan_pblock(&params)?.verify()?;
                rep.command = "pblock".into();
                rep
            } else {
                let block = pblock::build_pblock(&params, &cfg.budgets.level())?;
                pblock::verify_pblock(&block, &policy)?
            }
        }
        Command::Blowup { p, relaxed, levels } => {
            let params = PBlockParams { p: *p, relaxed: *relaxed, levels: *levels };
            let block = pblock::build_pblock(&params, &cfg.budgets.level())?;
            let (cert, mut rep) = pblock::blowup_certificate(&block, &policy)?;
            rep.info("certificate", serde_json::to_string(&cert)?);
            rep
        }
        Command::Analog(a) => run_analog(a, cfg.seed)?,
        Command::OracleSuite { cases, max_j } => oracle_suite(*cases, *max_j, cfg.seed, cfg.budgets.oracle_cap)?,
    };
    rep.info("seed", cfg.seed);
    Ok(rep)
}

fn run_analog(a: &AnalogCommand, seed: u64) -> Result<VerificationReport> {
    let mut rep = VerificationReport::new("analog");
    match a {
        AnalogCommand::AOp { f, x, direction } => {
            let prof = analog::a_op(f, x, *direction)?;
            rep.info("value", rational::to_string(&prof.value));
            rep.info("profile", serde_json::to_string(&prof)?);
            let other = match direction {
                Direction::Lag => Direction::Lead,
                Direction::Lead => Direction::Lag,
            };
            rep.push(Claim::exact(
                "analog.reflection",
                "both forms of A agree",
                prof.value,
                Relation::Eq,
                analog::a_op(f, x, other)?.value,
            ));
        }
        AnalogCommand::Hl { f, x } => {
            let h = analog::h_one_sided(f, x)?;
            rep.info("value", rational::to_string(&h));
            rep.push(Claim::exact("analog.hl.nonnegative", "maximal average", h, Relation::Ge, Q::zero()));
        }
        AnalogCommand::Seq { values, i, k } => {
            let vals: Vec<Q> = values.iter().map(|s| rational::parse(s)).collect::<Result<_>>()?;
            let a = FiniteSequence::from_slice(&vals)?;
            let v = analog::seq_counting_sup(&a, *i, *k);
            rep.info("value", rational::to_string(&v));
            rep.push(Claim::exact(
                "analog.seq.oracle",
                "sequence counting supremum",
                v,
                Relation::Eq,
                analog::seq_counting_sup_brute(&a, *i, *k),
            ));
        }
        AnalogCommand::IndicatorEq { set, points } => {
            let xs: Vec<Q> = points.iter().map(|s| rational::parse(s)).collect::<Result<_>>()?;
            rep.extend(analog::verify_indicator_equality(set, &xs)?);
        }
        AnalogCommand::Suite(s) => {
            let mut s = s.clone();
            s.seed ^= seed;
            rep.extend(analog::run_suite(&s)?);
        }
    }
    Ok(rep)
}

/// Random small step function with periodic constraints, on the grid
/// `2^-j`.
pub fn random_instance(rng: &mut ChaCha8Rng, j: u64) -> StepFunction {
    let cell = pow2(-(j as i64));
    let mut f = StepFunction::zero();
    let mut used = PeriodicIntervalSet::empty();
    for _ in 0..rng.gen_range(1..=3) {
        let lo = rng.gen_range(0..1u64 << j);
        let hi = rng.gen_range(lo + 1..=(1u64 << j).min(lo + (1 << j.min(12))));
        let mut fam = Family::window(big(BigInt::from(lo)) * &cell, big(BigInt::from(hi)) * &cell);
        for _ in 0..rng.gen_range(0..=2) {
            let e = rng.gen_range(1..=j.min(6)) as i64;
            let slots = 1u64 << e;
            let a = rng.gen_range(0..slots);
            let b = rng.gen_range(a + 1..=slots);
            let period_log2 = e - j as i64;
            let c = Constraint::single(period_log2, big(BigInt::from(a)) * &cell, big(BigInt::from(b)) * &cell)
                .expect("pieces inside the period");
            fam = fam.with_constraint(c);
        }
        let s = PeriodicIntervalSet::from_family(fam).difference(&used).expect("small sets");
        if s.is_empty() {
            continue;
        }
        used = PeriodicIntervalSet::disjoint_union([used, s.clone()]);
        let v = rational::ratio(rng.gen_range(1..=40), rng.gen_range(1..=8));
        // levels may repeat; merge by value
        let _ = f.add_disjoint(v, s);
    }
    f
}

/// `count_n` against the direct loop on random small instances.
pub fn oracle_suite(cases: usize, max_j: u64, seed: u64, cap: u64) -> Result<VerificationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0a11);
    let mut inputs = Vec::with_capacity(cases);
    for _ in 0..cases {
        let j = rng.gen_range(1..=max_j.max(1));
        let f = random_instance(&mut rng, j);
        let wrap = rng.gen_bool(0.5);
        let x = big(BigInt::from(rng.gen_range(0..1u64 << j))) * pow2(-(j as i64))
            + if rng.gen_bool(0.3) { rational::ratio(1, 3) * pow2(-(j as i64)) } else { Q::zero() };
        // keep n·max f ≤ 10^6
        let top = f.max_value();
        let n_cap = if top.is_zero() { int(1000) } else { int(1_000_000) / &top };
        let n_cap = rational::floor(&n_cap).to_u64().unwrap_or(1).max(1);
        let n = rng.gen_range(1..=n_cap);
        inputs.push((f, OrbitSpec { j, wrap }, x, n));
    }
    let cap = BigInt::from(cap);
    let claims: Vec<Claim> = inputs
        .par_iter()
        .map(|(f, orbit, x, n)| {
            let nq = int(*n as i64);
            let fast = counting::count_n(f, *orbit, x, &nq)?;
            let slow = counting::brute_force_n(f, *orbit, x, &nq, &cap)?;
            Ok(Claim::exact("oracle.count", "counting engine against direct iteration", big(fast), Relation::Eq, big(slow))
                .with_witness(Witness::at(x.clone(), &BigInt::from(*n))))
        })
        .collect::<Result<_>>()?;
    let mut rep = VerificationReport::new("oracle-suite");
    rep.claims.extend(claims);
    rep.info("cases", cases);
    Ok(rep)
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    schema_version: u32,
    kind: String,
    payload: T,
}

/// Writes `value` under a versioned envelope, via a temporary file and a
/// rename.
pub fn save<T: Serialize>(path: &Path, kind: &str, value: &T) -> Result<()> {
    let env = Envelope { schema_version: SCHEMA_VERSION, kind: kind.to_string(), payload: value };
    let text = serde_json::to_string(&env)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn from_envelope<T: DeserializeOwned>(text: &str, kind: &str) -> Result<T> {
    let raw: serde_json::Value = serde_json::from_str(text)?;
    let version = raw.get("schema_version").and_then(|v| v.as_u64()).ok_or_else(|| Error::Parse("missing schema_version".into()))?;
    if version != SCHEMA_VERSION as u64 {
        return Err(Error::SchemaVersion { found: version as u32, expected: SCHEMA_VERSION });
    }
    let found = raw.get("kind").and_then(|v| v.as_str()).unwrap_or_default();
    if found != kind {
        return Err(Error::Parse(format!("expected a {kind} file, found {found}")));
    }
    let env: Envelope<T> = serde_json::from_value(raw)?;
    Ok(env.payload)
}

pub fn to_envelope<T: Serialize>(kind: &str, value: &T) -> Result<String> {
    Ok(serde_json::to_string(&Envelope { schema_version: SCHEMA_VERSION, kind: kind.to_string(), payload: value })?)
}

pub fn load<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    from_envelope(&fs::read_to_string(path)?, kind)
}

/// Line style of a schematic row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Style {
    Dashed,
    Dotted,
    Solid,
}

impl Style {
    fn glyph(self) -> char {
        match self {
            Style::Dashed => '-',
            Style::Dotted => '.',
            Style::Solid => '#',
        }
    }
}

/// A labelled bar whose filled length is `width · fraction`.
#[derive(Clone, Debug)]
pub struct Row {
    pub label: String,
    pub fraction: Q,
    pub style: Style,
    /// cells to mark, for rows that show positions instead of a length
    pub marks: Option<Vec<bool>>,
}

pub fn render_rows(rows: &[Row], width: usize) -> String {
    let label_w = rows.iter().map(|r| r.label.chars().count()).max().unwrap_or(0);
    let mut out = String::new();
    out.push_str(&format!("{:label_w$} +{}+\n", "", "-".repeat(width)));
    for r in rows {
        let bar: String = match &r.marks {
            Some(m) => m.iter().map(|&b| if b { r.style.glyph() } else { ' ' }).collect(),
            None => {
                let filled = rational::floor(&(&r.fraction * int(width as i64) + rational::ratio(1, 2)))
                    .to_usize()
                    .unwrap_or(0)
                    .min(width);
                format!("{}{}", r.style.glyph().to_string().repeat(filled), " ".repeat(width - filled))
            }
        };
        out.push_str(&format!("{:label_w$} |{bar}| {}\n", r.label, rational::to_string(&r.fraction)));
    }
    out.push_str(&format!("{:label_w$} +{}+\n", "", "-".repeat(width)));
    out
}

/// Schematic of a base system: one row per `B_l`, top scale first, with
/// length proportional to its measure, then the start of the first block
/// `I'` of `B_1` magnified to one period of `f`, cells meeting the support
/// of `f` marked.
pub fn render_layout(sys: Option<&BaseSystem>, width: usize) -> Result<String> {
    let Some(sys) = sys else {
        return Ok(render_rows(&[], width));
    };
    let mu = sys.params.interval.length();
    let m = sys.gain() as usize;
    let mut rows = Vec::new();
    for l in (1..=m).rev() {
        let style = match m - l {
            0 => Style::Dashed,
            1 => Style::Dotted,
            _ => Style::Solid,
        };
        rows.push(Row { label: format!("B_{l}"), fraction: sys.cascade[l - 1].measure()? / &mu, style, marks: None });
    }
    if let Some((a, _)) = sys.cascade[0].runs(1)?.into_iter().next() {
        // one period of the support of f inside I'
        let len = pow2(sys.gain() as i64 + 10 - sys.j0 as i64);
        let cell = &len / int(width as i64);
        let support = sys.f.support();
        let mut marks = Vec::with_capacity(width);
        for c in 0..width {
            let lo = &a + &cell * int(c as i64);
            let w = PeriodicIntervalSet::window(lo.clone(), lo + &cell);
            marks.push(!support.intersect(&w)?.is_empty());
        }
        let frac = sys.f.support().intersect(&PeriodicIntervalSet::window(a.clone(), &a + &len))?.measure()? / &len;
        rows.push(Row { label: "I' (f)".into(), fraction: frac, style: Style::Solid, marks: Some(marks) });
    }
    Ok(render_rows(&rows, width))
}
