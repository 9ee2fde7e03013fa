//! Command-line frontend.
//!
//! Exit status: 0 on success, 1 when a suite reports violations, 2 on usage
//! or input errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::error::{Error, Result};
use crate::io::read_operator;
use crate::norms::{opnorm, sampling_oracle, SolverConfig};
use crate::operators::{tong_sequence, BlockOperator, BlockPattern};
use crate::spaces::{Exponent, SpaceSpec};
use crate::verify::{
    suite_chain, suite_delta, suite_embedding, suite_solver, suite_tong, CaseSelection,
    ChainParams, DeltaParams, EmbeddingParams, Ensemble, SolverParams, SuiteRun, TongParams,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATIONS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "OPLAB_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "oplab",
    version,
    about = "Block operators on lp-sums of l1 blocks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Operator norm bounds of an operator read from JSON
    Opnorm(OpnormArgs),
    /// Print the sign-flip averaging trace of an operator
    Tong(TongArgs),
    /// Run the truncated chain check
    Chain(ChainArgs),
    /// Run a randomized property suite
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Random restarts per selection
    #[arg(long, default_value_t = SolverConfig::default().restarts)]
    restarts: usize,
    /// Ascent iteration cap per restart
    #[arg(long, default_value_t = SolverConfig::default().max_iters)]
    max_iters: usize,
    /// Relative ascent stopping tolerance
    #[arg(long, default_value_t = SolverConfig::default().tol)]
    tol: f64,
    /// Add the grid certificate for inner problems of dimension ≤ 3
    #[arg(long)]
    grid_cert: bool,
    #[arg(long, default_value_t = SolverConfig::default().grid_resolution)]
    grid_resolution: usize,
}

impl SolverArgs {
    fn config(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            restarts: self.restarts,
            max_iters: self.max_iters,
            tol: self.tol,
            seed,
            grid_cert: self.grid_cert,
            grid_resolution: self.grid_resolution,
        }
    }
}

#[derive(Debug, Args)]
struct OpnormArgs {
    /// Operator JSON file
    #[arg(long)]
    input: PathBuf,
    /// Measure domain and codomain in this space instead of the file's
    #[arg(long, value_parser = parse_space)]
    space: Option<SpaceSpec>,
    /// Measure the codomain in this space
    #[arg(long, value_parser = parse_space)]
    codomain: Option<SpaceSpec>,
    /// Also run the sampling oracle with this many samples
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct TongArgs {
    /// Operator JSON file
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = parse_space)]
    space: Option<SpaceSpec>,
    /// Print the expected block pattern of each step and the entries departing from it
    #[arg(long)]
    print_mask: bool,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Write the JSON report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write one CSV row per case here
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Report a wall time of 0 so reports are byte-comparable
    #[arg(long)]
    no_timing: bool,
}

#[derive(Debug, Args)]
struct CaseArgs {
    #[arg(long, default_value_t = 100)]
    cases: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replay a single case index
    #[arg(long)]
    case: Option<usize>,
}

impl CaseArgs {
    fn selection(&self) -> CaseSelection {
        CaseSelection {
            cases: self.cases,
            seed: self.seed,
            only: self.case,
        }
    }
}

#[derive(Debug, Args)]
struct ChainArgs {
    /// Number of blocks
    #[arg(long, default_value_t = 8)]
    m: usize,
    #[arg(long, default_value = "2", value_parser = parse_exponent)]
    p: Exponent,
    #[command(flatten)]
    cases: CaseArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteName {
    Embedding,
    Delta,
    Tong,
    Solver,
    Chain,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EnsembleArg {
    Uniform,
    HeavyTailed,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    suite: SuiteName,
    /// Outer exponents, cycled over cases
    #[arg(long, value_delimiter = ',', value_parser = parse_exponent)]
    p: Vec<Exponent>,
    /// Maximum number of blocks
    #[arg(long, default_value_t = 3)]
    blocks_max: usize,
    /// Maximum block dimension (default 8 for the embedding suite, 3 otherwise)
    #[arg(long)]
    dim_max: Option<usize>,
    /// Number of blocks for the chain suite
    #[arg(long, default_value_t = 8)]
    m: usize,
    /// Use blocks of dimension 1 in the solver suite
    #[arg(long)]
    scalar_blocks: bool,
    /// Sampling oracle draws per case in the solver suite
    #[arg(long, default_value_t = 256)]
    samples: usize,
    #[arg(long, value_enum, default_value_t = EnsembleArg::Uniform)]
    ensemble: EnsembleArg,
    #[command(flatten)]
    cases: CaseArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: OutputArgs,
}

pub fn parse_space(s: &str) -> Result<SpaceSpec> {
    s.parse()
}

fn parse_exponent(s: &str) -> Result<Exponent> {
    s.parse()
}

/// Runs the command line `args` (program name first) and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    let pool = match thread_pool() {
        Ok(pool) => pool,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };
    // output is buffered so the work can run on the pool's threads
    let (mut out_buf, mut err_buf) = (Vec::new(), Vec::new());
    let result = pool.install(|| dispatch(cli.command, &mut out_buf, &mut err_buf));
    let _ = out.write_all(&out_buf);
    let _ = err.write_all(&err_buf);
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let n: usize = value
            .trim()
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| {
                Error::parse(THREADS_ENV, format!("`{value}` is not a positive integer"))
            })?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Opnorm(args) => cmd_opnorm(args, out),
        Command::Tong(args) => cmd_tong(args, out),
        Command::Chain(args) => {
            let params = ChainParams {
                m: args.m,
                p: args.p,
                cfg: args.solver.config(0),
            };
            let run = suite_chain(&params, args.cases.selection())?;
            emit(run, &args.output, out, err)
        }
        Command::Verify(args) => cmd_verify(args, out, err),
    }
}

fn load(
    input: &Path,
    space: Option<&SpaceSpec>,
    codomain: Option<&SpaceSpec>,
) -> Result<BlockOperator> {
    let t = read_operator(input)?;
    let domain = space.cloned().unwrap_or_else(|| t.domain().clone());
    let codomain = codomain
        .or(space)
        .cloned()
        .unwrap_or_else(|| t.codomain().clone());
    t.with_spaces(domain, codomain)
}

fn write_line(out: &mut dyn Write, line: &str) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::InvalidInput(format!("cannot write output: {e}")))
}

fn cmd_opnorm(args: OpnormArgs, out: &mut dyn Write) -> Result<i32> {
    let t = load(&args.input, args.space.as_ref(), args.codomain.as_ref())?;
    let cfg = args.solver.config(args.seed);
    let est = opnorm(&t, &cfg)?;
    let mut value = json!({
        "lower": est.lower,
        "upper": est.upper,
        "method": est.method.as_str(),
        "witness": est.witness.as_slice(),
    });
    if let Some(samples) = args.samples {
        let (sampled, _) = sampling_oracle(&t, samples, args.seed);
        value["sampled"] = json!(sampled);
    }
    write_line(out, &value.to_string())?;
    Ok(EXIT_OK)
}

fn rows(t: &BlockOperator) -> Vec<Vec<f64>> {
    t.dense().rows().into_iter().map(|r| r.to_vec()).collect()
}

fn cmd_tong(args: TongArgs, out: &mut dyn Write) -> Result<i32> {
    let t = load(&args.input, args.space.as_ref(), None)?;
    let trace = tong_sequence(&t)?;
    let m = t.domain().num_blocks();
    let defects = trace.agreement_defects(0.0);
    for (n, s) in trace.steps.iter().enumerate() {
        let mut line = json!({"step": n + 1, "matrix": rows(s)});
        if args.print_mask {
            let mask: Vec<String> = (0..m)
                .map(|i| {
                    (0..m)
                        .map(|j| BlockPattern::expected(n + 1, i, j).symbol())
                        .collect()
                })
                .collect();
            let step_defects: Vec<_> = defects
                .iter()
                .filter(|d| d.step == n)
                .map(|d| json!({"i": d.i + 1, "j": d.j + 1, "deviation": d.deviation}))
                .collect();
            line["mask"] = json!(mask);
            line["defects"] = json!(step_defects);
        }
        write_line(out, &line.to_string())?;
    }
    Ok(EXIT_OK)
}

fn default_exponents(suite: SuiteName) -> Vec<Exponent> {
    let parse = |s: &str| s.parse::<Exponent>().expect("valid literal");
    match suite {
        SuiteName::Embedding => vec![Exponent::ONE],
        SuiteName::Delta => ["1", "1.5", "2", "3", "inf"].map(parse).to_vec(),
        SuiteName::Tong | SuiteName::Solver => ["1", "1.5", "2", "inf"].map(parse).to_vec(),
        SuiteName::Chain => vec![Exponent::TWO],
    }
}

fn cmd_verify(args: VerifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let exponents = if args.p.is_empty() {
        default_exponents(args.suite)
    } else {
        args.p.clone()
    };
    let ensemble = match args.ensemble {
        EnsembleArg::Uniform => Ensemble::Uniform,
        EnsembleArg::HeavyTailed => Ensemble::HeavyTailed,
    };
    let sel = args.cases.selection();
    let cfg = args.solver.config(0);
    let dim_max = args
        .dim_max
        .unwrap_or(if matches!(args.suite, SuiteName::Embedding) {
            8
        } else {
            3
        });
    let run = match args.suite {
        SuiteName::Embedding => suite_embedding(
            &EmbeddingParams {
                n_max: dim_max,
                ensemble,
            },
            sel,
        )?,
        SuiteName::Delta => suite_delta(
            &DeltaParams {
                exponents,
                m_max: args.blocks_max,
                n_max: dim_max,
                cfg,
                ensemble,
            },
            sel,
        )?,
        SuiteName::Tong => suite_tong(
            &TongParams {
                exponents,
                m_max: args.blocks_max,
                n_max: dim_max,
                cfg,
                ensemble,
            },
            sel,
        )?,
        SuiteName::Solver => suite_solver(
            &SolverParams {
                exponents,
                m_max: args.blocks_max,
                n_max: dim_max,
                scalar_blocks: args.scalar_blocks,
                samples: args.samples,
                cfg,
                ensemble,
            },
            sel,
        )?,
        SuiteName::Chain => suite_chain(
            &ChainParams {
                m: args.m,
                p: exponents[0],
                cfg,
            },
            sel,
        )?,
    };
    emit(run, &args.output, out, err)
}

fn emit(
    mut run: SuiteRun,
    output: &OutputArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    if output.no_timing {
        run.report.wall_time_s = 0.0;
    }
    let json = run.report.to_json();
    match &output.out {
        Some(path) => {
            std::fs::write(path, format!("{json}\n")).map_err(|e| {
                Error::InvalidInput(format!("cannot write {}: {e}", path.display()))
            })?;
            let _ = writeln!(
                err,
                "{}: {} cases, {} violations, max slack {}",
                run.report.suite,
                run.report.cases,
                run.report.violations.len(),
                run.report.max_slack
            );
        }
        None => write_line(out, &json)?,
    }
    if let Some(path) = &output.csv {
        let file = std::fs::File::create(path)
            .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display())))?;
        run.write_csv(file)
            .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(exit_status(&run.report))
}

/// Exit status for a finished suite.
pub fn exit_status(report: &crate::verify::VerificationReport) -> i32 {
    if report.passed() {
        EXIT_OK
    } else {
        EXIT_VIOLATIONS
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_with(
            std::iter::once("oplab").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn parse_space_examples() {
        let s = parse_space("p=inf;blocks=1,2,3").unwrap();
        assert!(s.outer().is_inf());
        assert_eq!(s.block_dims(), &[1, 2, 3]);
        let s = parse_space("p=1.5;blocks=4").unwrap();
        assert_eq!(s.outer(), Exponent::finite(1.5).unwrap());
        assert_eq!(s.block_dims(), &[4]);
        let e = parse_space("p=0.5;blocks=1").unwrap_err();
        assert!(e.to_string().contains("p must be ≥ 1"));
        assert!(parse_space("p=2;blocks=").is_err());
        assert!(parse_space("p=2;blocks=1.5")
            .unwrap_err()
            .to_string()
            .starts_with("blocks"));
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_capture(&[]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["frobnicate"]).0, EXIT_USAGE);
        let (code, _, err) =
            run_capture(&["opnorm", "--input", "x.json", "--space", "p=0.5;blocks=1"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("p must be ≥ 1"), "{err}");
        let (code, _, err) = run_capture(&["opnorm", "--input", "/nonexistent/T.json"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("cannot read"), "{err}");
        assert_eq!(run_capture(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn verify_prints_report() {
        let (code, out, _) = run_capture(&[
            "verify",
            "embedding",
            "--cases",
            "5",
            "--seed",
            "3",
            "--no-timing",
        ]);
        assert_eq!(code, EXIT_OK);
        let report: crate::verify::VerificationReport = serde_json::from_str(&out).unwrap();
        assert_eq!(report.cases, 5);
        assert_eq!(report.wall_time_s, 0.0);
    }
}
