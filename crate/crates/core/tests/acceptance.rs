//! Acceptance criteria, run sequentially with one PASS/FAIL line each.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use oplab::norms::SolverConfig;
use oplab::verify::{
    suite_chain, suite_delta, suite_embedding, suite_solver, suite_tong, CaseSelection,
    ChainParams, DeltaParams, EmbeddingParams, Ensemble, SolverParams, SuiteRun, TongParams,
};
use oplab::{Exponent, Result};

const TOTAL_LIMIT: Duration = Duration::from_secs(300);

fn exps(list: &[&str]) -> Vec<Exponent> {
    list.iter().map(|s| s.parse().unwrap()).collect()
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn suites(runs: Vec<Result<SuiteRun>>, limit: Duration, elapsed: Duration) -> Outcome {
    let mut cases = 0;
    let mut violations = Vec::new();
    let mut max_slack = f64::NEG_INFINITY;
    for run in runs {
        match run {
            Ok(run) => {
                cases += run.report.cases;
                max_slack = max_slack.max(run.report.max_slack);
                violations.extend(run.report.violations);
            }
            Err(e) => {
                return Outcome {
                    passed: false,
                    detail: format!("suite error: {e}"),
                }
            }
        }
    }
    let in_time = elapsed <= limit;
    let mut detail = format!(
        "{cases} cases, {} violations, max slack {max_slack:e}, {:.2} s (limit {} s)",
        violations.len(),
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    if let Some(v) = violations.first() {
        detail.push_str(&format!("; first: {} (slack {:e})", v.desc, v.slack));
    }
    Outcome {
        passed: violations.is_empty() && in_time,
        detail,
    }
}

fn timed<F: FnOnce() -> Vec<Result<SuiteRun>>>(limit: Duration, f: F) -> Outcome {
    let start = Instant::now();
    let runs = f();
    suites(runs, limit, start.elapsed())
}

fn embedding() -> Outcome {
    timed(Duration::from_secs(5), || {
        vec![suite_embedding(
            &EmbeddingParams {
                n_max: 8,
                ensemble: Ensemble::Uniform,
            },
            CaseSelection::new(1000, 1),
        )]
    })
}

fn delta() -> Outcome {
    let cfg = SolverConfig::default();
    timed(Duration::from_secs(60), || {
        vec![
            suite_delta(
                &DeltaParams {
                    exponents: exps(&["1", "inf"]),
                    m_max: 4,
                    n_max: 3,
                    cfg: cfg.clone(),
                    ensemble: Ensemble::Uniform,
                },
                CaseSelection::new(500, 2),
            ),
            suite_delta(
                &DeltaParams {
                    exponents: exps(&["1.5", "2", "3"]),
                    m_max: 3,
                    n_max: 3,
                    cfg: cfg.clone(),
                    ensemble: Ensemble::Uniform,
                },
                CaseSelection::new(300, 3),
            ),
        ]
    })
}

fn tong() -> Outcome {
    timed(Duration::from_secs(180), || {
        vec![suite_tong(
            &TongParams {
                exponents: exps(&["1", "1.5", "2", "inf"]),
                m_max: 4,
                n_max: 3,
                cfg: SolverConfig::default(),
                ensemble: Ensemble::Uniform,
            },
            CaseSelection::new(1000, 4),
        )]
    })
}

fn solver() -> Outcome {
    let base = SolverParams {
        exponents: exps(&["2"]),
        m_max: 4,
        n_max: 1,
        scalar_blocks: true,
        samples: 256,
        cfg: SolverConfig::default(),
        ensemble: Ensemble::Uniform,
    };
    timed(Duration::from_secs(60), || {
        vec![
            suite_solver(&base, CaseSelection::new(200, 5)),
            suite_solver(
                &SolverParams {
                    exponents: exps(&["1", "inf"]),
                    n_max: 3,
                    scalar_blocks: false,
                    ..base.clone()
                },
                CaseSelection::new(500, 6),
            ),
            // the sampling bound everywhere else
            suite_solver(
                &SolverParams {
                    exponents: exps(&["1.5", "3"]),
                    m_max: 3,
                    n_max: 3,
                    scalar_blocks: false,
                    ..base.clone()
                },
                CaseSelection::new(100, 7),
            ),
        ]
    })
}

fn chain() -> Outcome {
    timed(Duration::from_secs(10), || {
        vec![suite_chain(
            &ChainParams {
                m: 8,
                p: Exponent::TWO,
                cfg: SolverConfig::default(),
            },
            CaseSelection::new(16, 8),
        )]
    })
}

fn determinism() -> Outcome {
    let max = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .to_string();
    let invocations: [&[&str]; 5] = [
        &["verify", "embedding", "--cases", "300", "--seed", "21"],
        &["verify", "delta", "--cases", "120", "--seed", "22"],
        &[
            "verify",
            "tong",
            "--p",
            "1,1.5,2,inf",
            "--blocks-max",
            "4",
            "--cases",
            "60",
            "--seed",
            "23",
        ],
        &[
            "verify",
            "solver",
            "--cases",
            "120",
            "--seed",
            "24",
            "--ensemble",
            "heavy-tailed",
        ],
        &["chain", "--m", "8", "--cases", "8", "--seed", "25"],
    ];
    let dir = std::env::temp_dir().join(format!("oplab-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let mut mismatches = Vec::new();
    let mut bytes = 0;
    for (k, args) in invocations.iter().enumerate() {
        let mut outputs = Vec::new();
        for threads in ["1", "4", max.as_str()] {
            let out = dir.join(format!("{k}-{threads}.json"));
            let status = Command::new(env!("CARGO_BIN_EXE_oplab"))
                .args(*args)
                .args(["--no-timing", "--out", out.to_str().unwrap()])
                .env("OPLAB_THREADS", threads)
                .stderr(std::process::Stdio::null())
                .status()
                .expect("binary runs");
            if status.code() != Some(0) {
                mismatches.push(format!(
                    "{} exited {:?} with {threads} threads",
                    args.join(" "),
                    status.code()
                ));
            }
            outputs.push(std::fs::read(&out).unwrap_or_default());
        }
        bytes += outputs[0].len();
        if outputs.iter().any(|o| o != &outputs[0] || o.is_empty()) {
            mismatches.push(format!("{} differs across thread counts", args.join(" ")));
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    Outcome {
        passed: mismatches.is_empty(),
        detail: if mismatches.is_empty() {
            format!(
                "{} suites byte-identical under 1, 4 and {max} threads ({bytes} report bytes per thread count)",
                invocations.len()
            )
        } else {
            mismatches.join("; ")
        },
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 6] = [
        ("1 embedding isometry", embedding),
        ("2 diagonal embedding", delta),
        ("3 averaging recursion", tong),
        ("4 solver cross-checks", solver),
        ("5 chain", chain),
        ("6 determinism", determinism),
    ];
    let mut all = true;
    for (name, f) in criteria {
        let outcome = f();
        all &= outcome.passed;
        println!(
            "{} [{name}] {}",
            if outcome.passed { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    let total = start.elapsed();
    let in_time = total <= TOTAL_LIMIT;
    all &= in_time;
    println!(
        "{} [total wall time] {:.1} s (limit {} s)",
        if in_time { "PASS" } else { "FAIL" },
        total.as_secs_f64(),
        TOTAL_LIMIT.as_secs()
    );
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
