//! Command-line front end: parses arguments, runs one command and writes a
//! JSON report to standard output with a short human summary on standard
//! error.
//!
//! Exit codes are 0 on success, 1 for data or computation errors, 2 for
//! usage errors and 3 when `verify` finds a failing gating check.

mod commands;
pub mod report;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use causaltest::covariate::DEFAULT_TOL;
use causaltest::finitepop::DEFAULT_SAMPLES;
use causaltest::oracle::{Fault, Intensity};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use report::{TestReport, VerifyReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "causaltest", version, about = "Threshold tests for causal inference from observational 2x2 tables")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Threshold T from a count table or a marginal summary.
    Threshold(TableInput),
    /// Full test: threshold against the twin-based randomness bound.
    Test(TestArgs),
    /// Finite-population threshold T_n by multinomial resampling.
    Fpc(FpcArgs),
    /// Covariate-adjusted threshold T_c from stratified counts.
    Adjust(AdjustArgs),
    /// Run the oracle property suite.
    Verify(VerifyArgs),
    /// Tabulate microdata and report what was read.
    IngestCheck(IngestArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TableInput {
    /// Counts x01,x11,x00,x10 (first digit exposure, second outcome).
    #[arg(long)]
    pub table: Option<String>,
    /// Subject-level CSV, tabulated with --spec.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// TOML microdata spec for --csv.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Exposure prevalence P(e=1) for a marginal summary.
    #[arg(long)]
    pub pe: Option<f64>,
    /// Outcome prevalence P(d=1) for a marginal summary.
    #[arg(long)]
    pub pd: Option<f64>,
    /// Association measure KIND=VALUE with KIND one of rd, rr, or.
    #[arg(long)]
    pub measure: Option<String>,
    /// Add 0.5 to every cell before computing measures.
    #[arg(long)]
    pub haldane: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvidenceArgs {
    /// Probandwise concordance for the exposure, e.g. 0.67 or 67%.
    #[arg(long)]
    pub bc_e: Option<String>,
    /// Pairwise concordance for the exposure.
    #[arg(long)]
    pub pc_e: Option<String>,
    /// Probandwise concordance for the outcome.
    #[arg(long)]
    pub bc_d: Option<String>,
    /// Pairwise concordance for the outcome.
    #[arg(long)]
    pub pc_d: Option<String>,
    /// Override the exposure prevalence used with the concordance.
    #[arg(long)]
    pub prev_e: Option<f64>,
    /// Override the outcome prevalence used with the concordance.
    #[arg(long)]
    pub prev_d: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SamplingArgs {
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: u64,
    /// Omit to draw a seed from system entropy; the seed is echoed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub input: TableInput,
    #[command(flatten)]
    pub evidence: EvidenceArgs,
    /// Also compute T_n and test against it.
    #[arg(long)]
    pub fpc: bool,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FpcArgs {
    #[command(flatten)]
    pub input: TableInput,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AdjustArgs {
    /// One stratum LABEL=x01,x11,x00,x10; repeat for each stratum.
    #[arg(long)]
    pub stratum: Vec<String>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Relabel strata OLD=NEW before solving; repeatable.
    #[arg(long)]
    pub merge: Vec<String>,
    /// Solver tolerance on τ relative to σ²_e σ²_d.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[command(flatten)]
    pub evidence: EvidenceArgs,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "full")]
    pub intensity: Intensity,
    /// Corrupt the build under test to exercise the failure path.
    #[arg(long, hide = true)]
    pub inject_fault: Option<Fault>,
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub spec: PathBuf,
}

#[derive(Debug)]
pub(crate) enum CliError {
    Usage(String),
    Io(String),
    Data(causaltest::Error),
}

impl From<causaltest::Error> for CliError {
    fn from(e: causaltest::Error) -> Self {
        CliError::Data(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) | CliError::Data(_) => EXIT_DATA,
        }
    }
}

fn emit<T: Serialize>(out: &mut dyn Write, value: &T) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)
}

fn summarize(err: &mut dyn Write, r: &TestReport) {
    for w in &r.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    if let Some(t) = &r.threshold {
        let _ = writeln!(err, "T = {:.4} (phi = {:.4})", t.t, t.phi);
    }
    if let Some(f) = &r.finite_population {
        let _ = writeln!(
            err,
            "T_n = {:.4} at alpha = {} ({} of {} samples accepted, seed {})",
            f.result.t_n, f.result.config.alpha, f.result.accepted_count, f.result.config.num_samples, f.result.config.seed
        );
    }
    if let Some(a) = &r.adjusted {
        let _ = writeln!(err, "T_c = {:.4} (gap {:.2e}, adjusted RR {:.4})", a.t_c, a.solver_gap, a.adjusted_rr);
    }
    if let Some(l) = &r.randomness {
        let _ = writeln!(err, "l_eta = {:.4}", l.l_eta);
    }
    if r.randomness.is_some() || r.command == "test" {
        let _ = writeln!(err, "verdict: {:?}", r.verdict);
    }
}

fn summarize_verify(err: &mut dyn Write, r: &VerifyReport) {
    for c in &r.suite.checks {
        let tag = match (c.passed, c.gating) {
            (true, _) => "ok  ",
            (false, true) => "FAIL",
            (false, false) => "warn",
        };
        let _ = writeln!(err, "{tag} {} ({}/{} failed)", c.name, c.failures, c.trials);
    }
    let _ = writeln!(
        err,
        "{} gating checks, {} failed",
        r.gating_checks, r.gating_failures
    );
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
            } else {
                let _ = write!(out, "{rendered}");
            }
            return code;
        }
    };
    let result = match &cli.command {
        Command::Verify(a) => match commands::cmd_verify(a) {
            Ok((r, drawn)) => {
                if let Some(s) = drawn {
                    let _ = writeln!(err, "warning: no --seed given; using seed {s} from system entropy");
                }
                summarize_verify(err, &r);
                if emit(out, &r).is_err() {
                    return EXIT_DATA;
                }
                return if r.gating_failures == 0 { EXIT_OK } else { EXIT_VERIFY };
            }
            Err(e) => Err(e),
        },
        Command::Threshold(a) => commands::cmd_threshold(a),
        Command::Test(a) => commands::cmd_test(a),
        Command::Fpc(a) => commands::cmd_fpc(a),
        Command::Adjust(a) => commands::cmd_adjust(a),
        Command::IngestCheck(a) => commands::cmd_ingest_check(a),
    };
    match result {
        Ok(r) => {
            summarize(err, &r);
            if emit(out, &r).is_err() {
                return EXIT_DATA;
            }
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code()
        }
    }
}
