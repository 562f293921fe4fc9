use std::fs;
use std::io::{ErrorKind, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ergocount::analog::{AnalogSuite, Direction};
use ergocount::harness::{self, AnalogCommand, Command, NegativeControl, RunConfig};
use ergocount::{build_base, BaseParams, GridInterval, LifeFunction, VerificationReport};

#[derive(Parser)]
#[command(name = "ergocount", about = "Build and verify counting-function counterexample systems exactly")]
struct Cli {
    /// JSON run configuration, used instead of a subcommand
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// write the JSON report here instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Option<Cmd>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Base system with its exact and sampled claims
    Base {
        #[arg(long, default_value_t = 4)]
        gain: u32,
        #[arg(long, default_value_t = 11)]
        startup: u64,
        #[arg(long, default_value_t = 0)]
        support: u64,
        /// affine life function N ↦ N + c
        #[arg(long, default_value_t = 1)]
        life: u64,
        #[arg(long, default_value_t = 0)]
        resolution: u64,
        #[arg(long)]
        j: Option<u64>,
        #[arg(long)]
        relaxed: bool,
        /// move f to the residue S + 1
        #[arg(long)]
        corrupt_support: bool,
    },
    /// Level-k system
    Levelk {
        #[arg(long, default_value_t = 2)]
        level: u32,
        #[arg(long, default_value_t = 4)]
        gain: u32,
        #[arg(long, default_value_t = 11)]
        startup: u64,
        #[arg(long)]
        relaxed: bool,
        /// replace X_2 by X_1
        #[arg(long)]
        duplicate_variable: bool,
    },
    /// p-block construction with its moment claims
    Pblock {
        #[arg(long)]
        p: u64,
        #[arg(long)]
        relaxed: bool,
        /// build only this many levels
        #[arg(long)]
        levels: Option<u32>,
        #[arg(long)]
        estimate_only: bool,
    },
    /// Normalized blow-up certificate of a p-block
    Blowup {
        #[arg(long)]
        p: u64,
        #[arg(long)]
        relaxed: bool,
        #[arg(long)]
        levels: Option<u32>,
    },
    /// Continuous and discrete analog operators
    Analog {
        #[arg(value_enum)]
        op: AnalogOp,
        /// JSON input: a step function for a-op/hl, an array of "num/den"
        /// strings for seq, a set for indicator-eq
        #[arg(long)]
        input: Option<PathBuf>,
        /// evaluation point(s), "num/den"
        #[arg(long)]
        x: Vec<String>,
        #[arg(long, default_value_t = 0)]
        i: i64,
        #[arg(long, default_value_t = 100)]
        k: u64,
        #[arg(long)]
        lead: bool,
    },
    /// Counting engine against direct iteration on random instances
    OracleSuite {
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        #[arg(long, default_value_t = 20)]
        max_j: u64,
    },
    /// Text schematic of a base system
    Render {
        #[arg(long, default_value_t = 4)]
        gain: u32,
        #[arg(long, default_value_t = 11)]
        startup: u64,
        #[arg(long, default_value_t = 64)]
        width: usize,
        /// draw an empty canvas
        #[arg(long)]
        empty: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AnalogOp {
    AOp,
    Hl,
    Seq,
    IndicatorEq,
    Suite,
}

fn read_json(path: &Option<PathBuf>) -> Result<serde_json::Value> {
    let p = path.as_ref().context("--input is required")?;
    Ok(serde_json::from_str(&fs::read_to_string(p)?)?)
}

fn single_x(xs: &[String]) -> Result<ergocount::ExactRational> {
    match xs {
        [x] => Ok(ergocount::rational::parse(x)?),
        _ => bail!("exactly one --x is required"),
    }
}

fn command_of(cmd: Cmd) -> Result<Command> {
    Ok(match cmd {
        Cmd::Base { gain, startup, support, life, resolution, j, relaxed, corrupt_support } => Command::Base {
            gain,
            startup,
            support,
            life: LifeFunction::affine(life),
            resolution,
            index: 0,
            j,
            relaxed,
            negative_control: corrupt_support.then_some(NegativeControl::ShiftResidue),
        },
        Cmd::Levelk { level, gain, startup, relaxed, duplicate_variable } => Command::Levelk {
            level,
            gain,
            startup,
            relaxed,
            negative_control: duplicate_variable.then_some(NegativeControl::DuplicateVariable),
        },
        Cmd::Pblock { p, relaxed, levels, estimate_only } => Command::Pblock { p, relaxed, levels, estimate_only },
        Cmd::Blowup { p, relaxed, levels } => Command::Blowup { p, relaxed, levels },
        Cmd::OracleSuite { cases, max_j } => Command::OracleSuite { cases, max_j },
        Cmd::Analog { op, input, x, i, k, lead } => Command::Analog(match op {
            AnalogOp::AOp => AnalogCommand::AOp {
                f: serde_json::from_value(read_json(&input)?)?,
                x: single_x(&x)?,
                direction: if lead { Direction::Lead } else { Direction::Lag },
            },
            AnalogOp::Hl => AnalogCommand::Hl { f: serde_json::from_value(read_json(&input)?)?, x: single_x(&x)? },
            AnalogOp::Seq => AnalogCommand::Seq { values: serde_json::from_value(read_json(&input)?)?, i, k },
            AnalogOp::IndicatorEq => AnalogCommand::IndicatorEq { set: serde_json::from_value(read_json(&input)?)?, points: x },
            AnalogOp::Suite => AnalogCommand::Suite(AnalogSuite::default()),
        }),
        Cmd::Render { .. } => unreachable!("handled before dispatch"),
    })
}

fn emit(text: &str, out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(p) => {
            let tmp = p.with_extension("tmp");
            fs::write(&tmp, text)?;
            fs::rename(&tmp, p)?;
        }
        None => {
            // a closed pipe (e.g. `| head`) is not an error
            if let Err(e) = writeln!(std::io::stdout().lock(), "{text}") {
                if e.kind() != ErrorKind::BrokenPipe {
                    return Err(e.into());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    if let Some(Cmd::Render { gain, startup, width, empty }) = &cli.cmd {
        let text = if *empty {
            harness::render_layout(None, *width)?
        } else {
            let sys = build_base(BaseParams::new(*gain, LifeFunction::successor(), *startup, 0, GridInterval::unit()))?;
            harness::render_layout(Some(&sys), *width)?
        };
        emit(&text, &cli.out)?;
        return Ok(true);
    }
    let mut cfg = match (&cli.config, cli.cmd) {
        (Some(path), None) => RunConfig::from_json(&fs::read_to_string(path)?)?,
        (None, Some(cmd)) => RunConfig::new(command_of(cmd)?),
        (Some(_), Some(_)) => bail!("give either --config or a subcommand, not both"),
        (None, None) => bail!("nothing to run; see --help"),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli.out.or_else(|| cfg.output.clone());
    let report: VerificationReport = harness::run(&cfg)?;
    for c in report.failures() {
        eprintln!("{c}");
    }
    eprintln!("{}", report.summary());
    emit(&serde_json::to_string_pretty(&report)?, &out)?;
    Ok(report.all_pass())
}
