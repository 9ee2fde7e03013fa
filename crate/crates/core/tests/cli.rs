use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use oplab::cli::{exit_status, EXIT_OK, EXIT_USAGE, EXIT_VIOLATIONS};
use oplab::norms::SolverConfig;
use oplab::verify::{suite_tong_with, CaseSelection, Ensemble, TongParams, VerificationReport};
use oplab::{BlockOperator, Exponent, Result, TongTrace};

// σ_max([[1,2],[3,4]]) from an SVD computed outside this crate
const SIGMA_MAX_1234: f64 = 5.464985704219043;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn oplab(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_oplab"));
    cmd.args(args).env_remove("OPLAB_THREADS");
    if let Some(n) = threads {
        cmd.env("OPLAB_THREADS", n);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn opnorm_euclidean_example() {
    let input = data("T.json");
    let o = oplab(
        &[
            "opnorm",
            "--space",
            "p=2;blocks=1,1",
            "--input",
            input.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let lower = v["lower"].as_f64().unwrap();
    let upper = v["upper"].as_f64().unwrap();
    assert!(
        (lower - SIGMA_MAX_1234).abs() <= 1e-6 * SIGMA_MAX_1234,
        "{lower}"
    );
    assert!(upper >= SIGMA_MAX_1234 * (1.0 - 1e-6));
    assert_eq!(v["method"], "extreme-enum");
}

#[test]
fn opnorm_exact_rules_through_space_override() {
    let input = data("T.json");
    let run = |space: &str| {
        let o = oplab(
            &[
                "opnorm",
                "--space",
                space,
                "--input",
                input.to_str().unwrap(),
            ],
            None,
        );
        assert_eq!(o.status.code(), Some(EXIT_OK), "{}", stderr(&o));
        let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        (v["lower"].as_f64().unwrap(), v["upper"].as_f64().unwrap())
    };
    assert_eq!(run("p=1;blocks=1,1"), (6.0, 6.0));
    assert_eq!(run("p=inf;blocks=1,1"), (7.0, 7.0));
    let o = oplab(
        &[
            "opnorm",
            "--space",
            "p=2;blocks=2",
            "--input",
            input.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(EXIT_USAGE));
}

#[test]
fn tong_print_mask_example() {
    let input = data("T.json");
    let o = oplab(
        &["tong", "--input", input.to_str().unwrap(), "--print-mask"],
        None,
    );
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", stderr(&o));
    let lines: Vec<serde_json::Value> = stdout(&o)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(
        lines[0]["matrix"],
        serde_json::json!([[-1.0, 0.0], [0.0, 4.0]])
    );
    assert_eq!(
        lines[1]["matrix"],
        serde_json::json!([[-1.0, 0.0], [0.0, -4.0]])
    );
    assert_eq!(lines[0]["mask"], serde_json::json!(["D0", "0T"]));
    assert_eq!(lines[1]["mask"], serde_json::json!(["D0", "0D"]));
    assert_eq!(lines[1]["defects"], serde_json::json!([]));
}

#[test]
fn verify_tong_example_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let csv = dir.path().join("cases.csv");
    let o = oplab(
        &[
            "verify",
            "tong",
            "--p",
            "1,2,inf",
            "--blocks-max",
            "3",
            "--cases",
            "1000",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
            "--csv",
            csv.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", stderr(&o));
    let report: VerificationReport =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report.suite, "tong");
    assert_eq!(report.seed, 7);
    assert_eq!(report.cases, 1000);
    assert!(report.violations.is_empty());
    assert!(report.max_slack <= 0.0);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1001);
}

#[test]
fn malformed_inputs_exit_two_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text = std::fs::read_to_string(data("T.json")).unwrap();
    std::fs::write(
        &bad,
        text.replacen(r#""blocks": [1, 1]"#, r#""blocks": [1, "x"]"#, 1),
    )
    .unwrap();
    let o = oplab(&["opnorm", "--input", bad.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(EXIT_USAGE));
    assert!(stderr(&o).contains("domain.blocks[1]"), "{}", stderr(&o));

    let o = oplab(
        &["opnorm", "--input", "x.json", "--space", "p=0.5;blocks=1"],
        None,
    );
    assert_eq!(o.status.code(), Some(EXIT_USAGE));
    assert!(stderr(&o).contains("p must be ≥ 1"), "{}", stderr(&o));

    let o = oplab(&["verify", "tong", "--p", "1,abc"], None);
    assert_eq!(o.status.code(), Some(EXIT_USAGE));

    let o = oplab(&["verify", "embedding", "--cases", "3"], Some("zero"));
    assert_eq!(o.status.code(), Some(EXIT_USAGE));
    assert!(stderr(&o).contains("OPLAB_THREADS"), "{}", stderr(&o));
}

#[test]
fn reports_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for threads in [Some("1"), Some("4"), None] {
        let out = dir
            .path()
            .join(format!("r{}.json", threads.unwrap_or("max")));
        let o = oplab(
            &[
                "verify",
                "solver",
                "--p",
                "1.5,2,inf",
                "--cases",
                "24",
                "--seed",
                "11",
                "--no-timing",
                "--out",
                out.to_str().unwrap(),
            ],
            threads,
        );
        assert_eq!(o.status.code(), Some(EXIT_OK), "{}", stderr(&o));
        reports.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2]);
}

#[test]
fn single_case_replay() {
    let full = oplab(
        &[
            "verify",
            "delta",
            "--cases",
            "8",
            "--seed",
            "5",
            "--no-timing",
        ],
        None,
    );
    let one = oplab(
        &[
            "verify",
            "delta",
            "--cases",
            "8",
            "--seed",
            "5",
            "--case",
            "6",
            "--no-timing",
        ],
        None,
    );
    let full: VerificationReport = serde_json::from_str(&stdout(&full)).unwrap();
    let one: VerificationReport = serde_json::from_str(&stdout(&one)).unwrap();
    assert_eq!(full.cases, 8);
    assert_eq!(one.cases, 1);
    assert!(one.violations.is_empty());
}

#[test]
fn chain_subcommand_reports_scope_note() {
    let o = oplab(
        &[
            "chain",
            "--m",
            "5",
            "--cases",
            "3",
            "--seed",
            "2",
            "--no-timing",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", stderr(&o));
    let report: VerificationReport = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report.suite, "chain");
    assert!(report
        .notes
        .iter()
        .any(|n| n.contains("out of scope: cited result")));
}

/// A trace whose step flips the wrong grid column.
fn off_by_one_trace(t: &BlockOperator) -> Result<TongTrace> {
    let m = t.domain().num_blocks();
    let mut steps: Vec<BlockOperator> = Vec::new();
    for idx in 0..m {
        let cur = steps.last().unwrap_or(t).clone();
        let wrong = (idx + 1) % m;
        let k = cur.flip_block_column(wrong)?;
        let r = cur.flip_block_row(idx)?;
        steps.push(BlockOperator::lincomb(0.5, &k, 0.5, &r)?);
    }
    Ok(TongTrace {
        source: t.clone(),
        steps,
    })
}

#[test]
fn broken_flip_gives_violation_exit_status() {
    let params = TongParams {
        exponents: vec![Exponent::ONE, Exponent::INF],
        m_max: 3,
        n_max: 2,
        cfg: SolverConfig::default(),
        ensemble: Ensemble::Uniform,
    };
    let run = suite_tong_with(&params, CaseSelection::new(40, 3), off_by_one_trace).unwrap();
    assert!(!run.report.violations.is_empty());
    assert!(run.report.max_slack > 0.0);
    assert_eq!(exit_status(&run.report), EXIT_VIOLATIONS);

    let run = suite_tong_with(
        &params,
        CaseSelection::new(40, 3),
        oplab::operators::tong_sequence,
    )
    .unwrap();
    assert_eq!(exit_status(&run.report), EXIT_OK);
}
