//! Randomized property suites.
//!
//! Each suite generates its cases from `derive_seed(seed, case_index)`, runs
//! them data-parallel, and reduces the outcomes in case order, so a report
//! depends only on its parameters. Every assertion is either an identity that
//! holds exactly, or an inequality implied by `lower ≤ ‖T‖ ≤ upper` together
//! with a norm inequality of the construction under test.
//!
//! Slack is the amount by which a check failed beyond its tolerance; a
//! passing check has slack `≤ 0`. Tolerances quoted as absolute are applied
//! to magnitudes of order one and scale with `max(1, |value|)`, which matters
//! only for the heavy-tailed ensemble.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::{
    extreme_enumeration, linf_row_rule, linf_sign_enumeration, opnorm, opnorm_l1_exact,
    opnorm_linf_exact, sampling_oracle, NormEstimate, SolverConfig,
};
use crate::operators::{
    delta, embed_l1, first_column, tong_sequence, xi, BlockOperator, TongTrace,
};
use crate::seeding::{derive_seed, rng_from};
use crate::spaces::{BlockVector, Exponent, Sign, SpaceSpec};

pub const EXACT_TOL: f64 = 1e-12;
pub const INTERVAL_SLACK: f64 = 1e-9;
pub const ORACLE_REL_TOL: f64 = 1e-6;
/// Tolerance on the negated copies in the averaging trace.
pub const COPY_TOL: f64 = 1e-15;

/// Report line for the out-of-scope infinite-dimensional endpoint of the chain.
pub const CHAIN_SCOPE_NOTE: &str =
    "complemented l1 inside the l_inf-sum and the failure of the Grothendieck property: out of scope: cited result";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub case_seed: u64,
    pub desc: String,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub suite: String,
    pub seed: u64,
    pub cases: u64,
    pub violations: Vec<Violation>,
    pub max_slack: f64,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Measured quantities of one case, for the CSV output.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseRecord {
    pub index: usize,
    pub case_seed: u64,
    pub label: String,
    pub checks: usize,
    pub violations: usize,
    pub max_slack: f64,
    pub quantities: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRun {
    pub report: VerificationReport,
    pub records: Vec<CaseRecord>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    case: usize,
    case_seed: u64,
    label: &'a str,
    checks: usize,
    violations: usize,
    max_slack: f64,
    quantities: String,
}

impl SuiteRun {
    pub fn write_csv<W: Write>(&self, writer: W) -> std::result::Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(writer);
        for r in &self.records {
            out.serialize(CsvRow {
                case: r.index,
                case_seed: r.case_seed,
                label: &r.label,
                checks: r.checks,
                violations: r.violations,
                max_slack: r.max_slack,
                quantities: r
                    .quantities
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join(";"),
            })?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Entry distribution for generated operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ensemble {
    /// i.i.d. uniform on `[−scale, scale]`
    #[default]
    Uniform,
    /// `scale · tan(π(u − ½))` with `u` uniform on `(0, 1)`
    HeavyTailed,
}

/// Which cases of a suite to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaseSelection {
    pub cases: usize,
    pub seed: u64,
    /// Replay a single case index in isolation.
    pub only: Option<usize>,
}

impl CaseSelection {
    pub fn new(cases: usize, seed: u64) -> Self {
        CaseSelection {
            cases,
            seed,
            only: None,
        }
    }

    fn indices(&self) -> Vec<usize> {
        match self.only {
            Some(k) => vec![k],
            None => (0..self.cases).collect(),
        }
    }
}

/// Seeded operator with i.i.d. uniform entries on `[−scale, scale]`.
pub fn gen_operator(spec: &SpaceSpec, seed: u64, scale: f64) -> Result<BlockOperator> {
    gen_operator_with(spec, spec, seed, scale, Ensemble::Uniform)
}

pub fn gen_operator_with(
    domain: &SpaceSpec,
    codomain: &SpaceSpec,
    seed: u64,
    scale: f64,
    ensemble: Ensemble,
) -> Result<BlockOperator> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidInput(format!(
            "scale must be a positive real, got {scale}"
        )));
    }
    let mut rng = rng_from(seed);
    let (rows, cols) = (codomain.dim(), domain.dim());
    let mut values = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        values.push(draw(&mut rng, scale, ensemble));
    }
    let matrix = Array2::from_shape_vec((rows, cols), values).expect("shape matches");
    BlockOperator::from_dense(domain.clone(), codomain.clone(), matrix)
}

fn draw(rng: &mut impl Rng, scale: f64, ensemble: Ensemble) -> f64 {
    match ensemble {
        Ensemble::Uniform => rng.gen_range(-scale..=scale),
        Ensemble::HeavyTailed => {
            let u: f64 = rng.gen_range(f64::EPSILON..1.0 - f64::EPSILON);
            scale * (std::f64::consts::PI * (u - 0.5)).tan()
        }
    }
}

fn gen_vector(spec: &SpaceSpec, rng: &mut impl Rng, ensemble: Ensemble) -> BlockVector {
    let data = (0..spec.dim()).map(|_| draw(rng, 1.0, ensemble)).collect();
    BlockVector::from_flat(spec.clone(), data).expect("finite draws")
}

fn random_dims(rng: &mut impl Rng, m_max: usize, n_max: usize) -> Vec<usize> {
    let m = rng.gen_range(1..=m_max);
    (0..m).map(|_| rng.gen_range(1..=n_max)).collect()
}

/// Accumulates the checks of one case.
struct Case {
    index: usize,
    case_seed: u64,
    label: String,
    checks: usize,
    /// Largest slack of the tolerance checks; passing exact checks add none.
    max_slack: Option<f64>,
    violations: Vec<Violation>,
    quantities: BTreeMap<String, f64>,
}

impl Case {
    fn new(index: usize, case_seed: u64, label: String) -> Self {
        Case {
            index,
            case_seed,
            label,
            checks: 0,
            max_slack: None,
            violations: Vec::new(),
            quantities: BTreeMap::new(),
        }
    }

    fn record(&mut self, name: &str, value: f64) {
        self.quantities.insert(name.to_string(), value);
    }

    fn slack(&mut self, slack: f64, what: &dyn Fn() -> String) {
        self.checks += 1;
        let slack = if slack.is_nan() {
            f64::MAX
        } else {
            slack.max(f64::MIN)
        };
        self.max_slack = Some(self.max_slack.map_or(slack, |m| m.max(slack)));
        if slack > 0.0 {
            self.violations.push(Violation {
                case_seed: self.case_seed,
                desc: format!("case {} ({}): {}", self.index, self.label, what()),
                slack,
            });
        }
    }

    /// `lhs ≤ rhs + tol`
    fn le(&mut self, lhs: f64, rhs: f64, tol: f64, what: &dyn Fn() -> String) {
        self.slack(lhs - rhs - tol, what);
    }

    /// `|a − b| ≤ tol`
    fn close(&mut self, a: f64, b: f64, tol: f64, what: &dyn Fn() -> String) {
        self.slack((a - b).abs() - tol, what);
    }

    /// An exact identity; a failure has slack `deviation` (at least the
    /// smallest positive double).
    fn exact(&mut self, ok: bool, deviation: f64, what: &dyn Fn() -> String) {
        if ok {
            self.checks += 1;
        } else {
            self.slack(deviation.max(f64::MIN_POSITIVE), what);
        }
    }

    fn holds(&mut self, ok: bool, what: &dyn Fn() -> String) {
        self.exact(ok, 1.0, what);
    }

    /// A library call that must succeed.
    fn ok<T>(&mut self, r: Result<T>, what: &str) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.slack(f64::MAX, &|| format!("{what} failed: {e}"));
                None
            }
        }
    }

    fn witness_valid(&mut self, t: &BlockOperator, est: &NormEstimate, name: &str) {
        let wn = est.witness.norm();
        self.close(wn, 1.0, EXACT_TOL, &|| format!("{name}: witness norm {wn}"));
        if let Ok(image) = t.apply(&est.witness) {
            let value = image.norm();
            self.le(
                est.lower,
                value,
                INTERVAL_SLACK * est.lower.max(1.0),
                &|| format!("{name}: witness image {value} below lower {}", est.lower),
            );
        }
        self.le(est.lower, est.upper, 0.0, &|| {
            format!("{name}: lower {} above upper {}", est.lower, est.upper)
        });
        if est.method.is_exact() {
            self.le(
                est.upper - est.lower,
                0.0,
                EXACT_TOL * est.lower.max(1.0),
                &|| {
                    format!(
                        "{name}: exact interval [{}, {}] not tight",
                        est.lower, est.upper
                    )
                },
            );
        }
    }

    fn finish(self) -> CaseRecord {
        CaseRecord {
            index: self.index,
            case_seed: self.case_seed,
            label: self.label,
            checks: self.checks,
            violations: self.violations.len(),
            max_slack: self.max_slack.unwrap_or(0.0),
            quantities: self.quantities,
        }
    }
}

fn tol(base: f64, magnitude: f64) -> f64 {
    base * magnitude.abs().max(1.0)
}

fn run_suite<F>(name: &str, sel: CaseSelection, notes: Vec<String>, case_fn: F) -> SuiteRun
where
    F: Fn(usize, u64) -> Case + Sync,
{
    let start = Instant::now();
    let outcomes: Vec<Case> = sel
        .indices()
        .into_par_iter()
        .map(|index| case_fn(index, derive_seed(sel.seed, index as u64)))
        .collect();

    let mut violations = Vec::new();
    let mut max_slack: Option<f64> = None;
    let mut records = Vec::with_capacity(outcomes.len());
    for mut case in outcomes {
        if let Some(s) = case.max_slack {
            max_slack = Some(max_slack.map_or(s, |m| m.max(s)));
        }
        violations.append(&mut case.violations);
        records.push(case.finish());
    }
    SuiteRun {
        report: VerificationReport {
            suite: name.to_string(),
            seed: sel.seed,
            cases: records.len() as u64,
            violations,
            max_slack: max_slack.unwrap_or(0.0),
            wall_time_s: start.elapsed().as_secs_f64(),
            notes,
        },
        records,
    }
}

fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn exponent_label(dims: &[usize], p: Exponent) -> String {
    format!("p={p}, blocks={dims:?}")
}

// ---------------------------------------------------------------------------
// embedding

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingParams {
    pub n_max: usize,
    pub ensemble: Ensemble,
}

/// Rank-one embedding `ℓ₁ⁿ → B(ℓ₁ⁿ)`: isometric, with `T ↦ T e₁` a norm-one
/// left inverse. Case 0 uses `a = 0`.
pub fn suite_embedding(params: &EmbeddingParams, sel: CaseSelection) -> Result<SuiteRun> {
    if params.n_max == 0 {
        return Err(Error::InvalidInput("n_max must be ≥ 1".into()));
    }
    Ok(run_suite(
        "embedding",
        sel,
        Vec::new(),
        |index, case_seed| {
            let mut rng = rng_from(case_seed);
            let n = rng.gen_range(1..=params.n_max);
            let spec = SpaceSpec::l1(n).expect("n ≥ 1");
            let mut case = Case::new(index, case_seed, format!("n={n}"));
            let a = if index == 0 {
                BlockVector::zeros(spec.clone())
            } else {
                gen_vector(&spec, &mut rng, params.ensemble)
            };
            let a_norm = l1_norm(a.as_slice());
            case.record("a_l1", a_norm);

            let Some(embedded) = case.ok(embed_l1(&a), "embed_l1") else {
                return case;
            };
            if let Some((value, _)) = case.ok(opnorm_l1_exact(&embedded), "column rule") {
                case.record("embedded_norm", value);
                case.close(value, a_norm, tol(EXACT_TOL, a_norm), &|| {
                    format!("‖embed(a)‖ = {value} but ‖a‖₁ = {a_norm}")
                });
            }
            if let Some(back) = case.ok(first_column(&embedded), "first_column") {
                let dev = back
                    .as_slice()
                    .iter()
                    .zip(a.as_slice())
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                case.exact(back == a, dev, &|| {
                    "first_column(embed(a)) differs from a".to_string()
                });
            }

            let t = gen_operator_with(
                &spec,
                &spec,
                derive_seed(case_seed, 1),
                1.0,
                params.ensemble,
            )
            .expect("valid scale");
            if let (Some(col), Some((value, _))) = (
                case.ok(first_column(&t), "first_column"),
                case.ok(opnorm_l1_exact(&t), "column rule"),
            ) {
                let c = l1_norm(col.as_slice());
                case.le(c, value, tol(EXACT_TOL, value), &|| {
                    format!("‖T e₁‖₁ = {c} exceeds ‖T‖ = {value}")
                });
            }
            case
        },
    ))
}

// ---------------------------------------------------------------------------
// diagonal embedding

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaParams {
    pub exponents: Vec<Exponent>,
    pub m_max: usize,
    pub n_max: usize,
    pub cfg: SolverConfig,
    pub ensemble: Ensemble,
}

/// `‖Δ(T₁, …, T_m)‖ = maxᵢ ‖Tᵢ‖`: exact for outer exponents 1 and ∞, an
/// interval containment (with the basis witnesses reaching the maximum)
/// otherwise; `Ξ∘Δ = id` exactly. Case 0 uses zero blocks.
pub fn suite_delta(params: &DeltaParams, sel: CaseSelection) -> Result<SuiteRun> {
    validate_grid(&params.exponents, params.m_max, params.n_max)?;
    params.cfg.validate()?;
    Ok(run_suite("delta", sel, Vec::new(), |index, case_seed| {
        let mut rng = rng_from(case_seed);
        let p = params.exponents[index % params.exponents.len()];
        let dims = random_dims(&mut rng, params.m_max, params.n_max);
        let mut case = Case::new(index, case_seed, exponent_label(&dims, p));
        let blocks: Vec<BlockOperator> = dims
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let s = SpaceSpec::l1(n).expect("n ≥ 1");
                if index == 0 {
                    return BlockOperator::zeros(s.clone(), s);
                }
                gen_operator_with(
                    &s,
                    &s,
                    derive_seed(case_seed, 1 + i as u64),
                    1.0,
                    params.ensemble,
                )
                .expect("valid scale")
            })
            .collect();
        let block_max = blocks
            .iter()
            .map(|b| opnorm_l1_exact(b).expect("single block").0)
            .fold(0.0, f64::max);
        case.record("max_block_norm", block_max);

        let Some(d) = case.ok(delta(&blocks, p), "delta") else {
            return case;
        };
        if let Some(back) = case.ok(xi(&d), "xi") {
            case.holds(back == blocks, &|| "xi(delta(Ts)) differs from Ts".into());
        }
        let cfg = SolverConfig {
            seed: derive_seed(case_seed, 0),
            ..params.cfg.clone()
        };
        let Some(est) = case.ok(opnorm(&d, &cfg), "opnorm") else {
            return case;
        };
        case.record("lower", est.lower);
        case.record("upper", est.upper);
        case.witness_valid(&d, &est, "Δ");
        let t = tol(EXACT_TOL, block_max);
        if est.method.is_exact() {
            case.close(est.lower, block_max, t, &|| {
                format!("‖Δ(Ts)‖ = {} but max block norm {block_max}", est.lower)
            });
        } else {
            case.le(block_max, est.lower, t, &|| {
                format!("lower {} below max block norm {block_max}", est.lower)
            });
            case.le(
                est.lower,
                block_max,
                tol(INTERVAL_SLACK, block_max),
                &|| format!("lower {} above max block norm {block_max}", est.lower),
            );
            case.le(
                block_max,
                est.upper,
                tol(INTERVAL_SLACK, block_max),
                &|| format!("upper {} below max block norm {block_max}", est.upper),
            );
        }
        case
    }))
}

fn validate_grid(exponents: &[Exponent], m_max: usize, n_max: usize) -> Result<()> {
    if exponents.is_empty() {
        return Err(Error::InvalidInput(
            "at least one exponent is required".into(),
        ));
    }
    if m_max == 0 || n_max == 0 {
        return Err(Error::InvalidInput(
            "block count and block size bounds must be ≥ 1".into(),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// averaging recursion

#[derive(Debug, Clone, PartialEq)]
pub struct TongParams {
    pub exponents: Vec<Exponent>,
    pub m_max: usize,
    pub n_max: usize,
    pub cfg: SolverConfig,
    pub ensemble: Ensemble,
}

/// The trace `S⁽¹⁾, …, S⁽ᵐ⁾` of a random `T`: agreement masks, norm
/// non-increase, flip isometry, and `maxᵢ ‖T_ii‖ ≤ ‖T‖`. Case 0 is the zero
/// operator.
pub fn suite_tong(params: &TongParams, sel: CaseSelection) -> Result<SuiteRun> {
    suite_tong_with(params, sel, tong_sequence)
}

/// [`suite_tong`] with the trace construction supplied by the caller.
pub fn suite_tong_with<F>(params: &TongParams, sel: CaseSelection, trace_fn: F) -> Result<SuiteRun>
where
    F: Fn(&BlockOperator) -> Result<TongTrace> + Sync,
{
    validate_grid(&params.exponents, params.m_max, params.n_max)?;
    params.cfg.validate()?;
    Ok(run_suite("tong", sel, Vec::new(), |index, case_seed| {
        let mut rng = rng_from(case_seed);
        let p = params.exponents[index % params.exponents.len()];
        let dims = random_dims(&mut rng, params.m_max, params.n_max);
        let mut case = Case::new(index, case_seed, exponent_label(&dims, p));
        let spec = SpaceSpec::new(p, dims).expect("valid dims");
        let t = if index == 0 {
            BlockOperator::zeros(spec.clone(), spec.clone())
        } else {
            gen_operator_with(
                &spec,
                &spec,
                derive_seed(case_seed, 1),
                1.0,
                params.ensemble,
            )
            .expect("valid scale")
        };
        tong_case(&mut case, &t, params, case_seed, &trace_fn);
        case
    }))
}

fn tong_case<F>(
    case: &mut Case,
    t: &BlockOperator,
    params: &TongParams,
    case_seed: u64,
    trace_fn: &F,
) where
    F: Fn(&BlockOperator) -> Result<TongTrace>,
{
    let m = t.domain().num_blocks();
    let Some(trace) = case.ok(trace_fn(t), "tong_sequence") else {
        return;
    };
    case.holds(trace.steps.len() == m, &|| {
        format!("trace has {} steps, expected {m}", trace.steps.len())
    });
    for d in trace.agreement_defects(COPY_TOL) {
        case.exact(false, d.deviation, &|| {
            format!(
                "S({}) entry ({}, {}) departs from pattern {:?} by {}",
                d.step + 1,
                d.i + 1,
                d.j + 1,
                d.expected,
                d.deviation
            )
        });
    }

    let cfg = SolverConfig {
        seed: derive_seed(case_seed, 0),
        ..params.cfg.clone()
    };
    let Some(t_est) = case.ok(opnorm(t, &cfg), "opnorm(T)") else {
        return;
    };
    case.record("T_lower", t_est.lower);
    case.record("T_upper", t_est.upper);
    case.witness_valid(t, &t_est, "T");
    let exact = t_est.method.is_exact();

    for (n, s) in trace.steps.iter().enumerate() {
        let Some(s_est) = case.ok(opnorm(s, &cfg), "opnorm(S)") else {
            continue;
        };
        case.witness_valid(s, &s_est, "S");
        if exact {
            case.le(
                s_est.upper,
                t_est.lower,
                tol(EXACT_TOL, t_est.lower),
                &|| {
                    format!(
                        "‖S({})‖ = {} exceeds ‖T‖ = {}",
                        n + 1,
                        s_est.upper,
                        t_est.lower
                    )
                },
            );
        } else {
            case.le(
                s_est.lower,
                t_est.upper,
                tol(INTERVAL_SLACK, t_est.upper),
                &|| {
                    format!(
                        "lower(S({})) = {} exceeds upper(T) = {}",
                        n + 1,
                        s_est.lower,
                        t_est.upper
                    )
                },
            );
        }
    }

    if exact {
        for (name, flipped) in [
            ("T_k", t.flip_block_column(0)),
            ("T_r", t.flip_block_row(0)),
        ] {
            let Some(f) = case.ok(flipped, name) else {
                continue;
            };
            if let Some(f_est) = case.ok(opnorm(&f, &cfg), name) {
                case.close(
                    f_est.lower,
                    t_est.lower,
                    tol(EXACT_TOL, t_est.lower),
                    &|| {
                        format!(
                            "‖{name}‖ = {} differs from ‖T‖ = {}",
                            f_est.lower, t_est.lower
                        )
                    },
                );
            }
        }
    }

    if let Some(diag) = case.ok(xi(t), "xi") {
        let diag_max = diag
            .iter()
            .map(|b| opnorm_l1_exact(b).expect("single block").0)
            .fold(0.0, f64::max);
        case.record("xi_norm", diag_max);
        case.le(diag_max, t_est.lower, tol(EXACT_TOL, diag_max), &|| {
            format!("‖Ξ(T)‖ = {diag_max} exceeds lower(T) = {}", t_est.lower)
        });
    }
}

// ---------------------------------------------------------------------------
// solver cross-checks

#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    pub exponents: Vec<Exponent>,
    pub m_max: usize,
    pub n_max: usize,
    /// All block dimensions 1.
    pub scalar_blocks: bool,
    pub samples: usize,
    pub cfg: SolverConfig,
    pub ensemble: Ensemble,
}

/// Cross-checks of the norm solvers against independent oracles: brute-force
/// extreme-point enumeration for exponents 1 and ∞, power iteration for the
/// Euclidean scalar case, sampling everywhere; plus homogeneity and
/// invariance of the interval solver under column flips. Case 0 is the zero
/// operator.
pub fn suite_solver(params: &SolverParams, sel: CaseSelection) -> Result<SuiteRun> {
    validate_grid(&params.exponents, params.m_max, params.n_max)?;
    params.cfg.validate()?;
    Ok(run_suite("solver", sel, Vec::new(), |index, case_seed| {
        let mut rng = rng_from(case_seed);
        let p = params.exponents[index % params.exponents.len()];
        let dims = if params.scalar_blocks {
            vec![1; rng.gen_range(1..=params.m_max)]
        } else {
            random_dims(&mut rng, params.m_max, params.n_max)
        };
        let mut case = Case::new(index, case_seed, exponent_label(&dims, p));
        let spec = SpaceSpec::new(p, dims).expect("valid dims");
        let t = if index == 0 {
            BlockOperator::zeros(spec.clone(), spec.clone())
        } else {
            gen_operator_with(
                &spec,
                &spec,
                derive_seed(case_seed, 1),
                1.0,
                params.ensemble,
            )
            .expect("valid scale")
        };
        let scale_choices = [-2.5, 0.5, 3.0, -0.125];
        let c = scale_choices[rng.gen_range(0..scale_choices.len())];
        solver_case(&mut case, &t, params, case_seed, c);
        case
    }))
}

fn solver_case(case: &mut Case, t: &BlockOperator, params: &SolverParams, case_seed: u64, c: f64) {
    let p = t.domain().outer();
    let cfg = SolverConfig {
        seed: derive_seed(case_seed, 0),
        ..params.cfg.clone()
    };
    let Some(est) = case.ok(opnorm(t, &cfg), "opnorm") else {
        return;
    };
    case.record("lower", est.lower);
    case.record("upper", est.upper);
    case.witness_valid(t, &est, "T");

    let (sampled, _) = sampling_oracle(t, params.samples, derive_seed(case_seed, 2));
    case.record("sampled", sampled);
    case.le(sampled, est.upper, tol(INTERVAL_SLACK, est.upper), &|| {
        format!("sampling oracle {sampled} exceeds upper {}", est.upper)
    });

    if let Some(diag) = case.ok(xi(t), "xi") {
        let diag_max = diag
            .iter()
            .map(|b| opnorm_l1_exact(b).expect("single block").0)
            .fold(0.0, f64::max);
        case.le(diag_max, est.lower, tol(EXACT_TOL, diag_max), &|| {
            format!(
                "max diagonal block norm {diag_max} exceeds lower {}",
                est.lower
            )
        });
    }

    if p.is_one() {
        let brute = brute_force_signed_basis(t);
        case.record("brute_force", brute);
        if let Some((rule, _)) = case.ok(opnorm_l1_exact(t), "column rule") {
            case.close(rule, brute, tol(EXACT_TOL, brute), &|| {
                format!("column rule {rule} differs from enumeration {brute}")
            });
        }
    } else if p.is_inf() {
        let brute = brute_force_linf(t);
        case.record("brute_force", brute);
        if let Some((value, _)) = case.ok(opnorm_linf_exact(t), "ℓ∞ rule") {
            case.close(value, brute, tol(EXACT_TOL, brute), &|| {
                format!("ℓ∞ rule {value} differs from enumeration {brute}")
            });
        }
        if t.domain().num_blocks() <= 10 {
            if let Ok((row, _)) = linf_row_rule(t) {
                if let Some((full, _)) = case.ok(linf_sign_enumeration(t), "sign enumeration") {
                    case.close(row, full, tol(EXACT_TOL, full), &|| {
                        format!("row rule {row} differs from sign enumeration {full}")
                    });
                }
            }
        }
    } else {
        if p == Exponent::TWO
            && t.domain().block_dims().iter().all(|&n| n == 1)
            && t.is_endomorphism()
        {
            let sigma = largest_singular_value(&t.dense().to_owned());
            case.record("sigma_max", sigma);
            case.close(est.lower, sigma, ORACLE_REL_TOL * sigma, &|| {
                format!("lower {} misses σ_max {sigma}", est.lower)
            });
            case.le(sigma * (1.0 - ORACLE_REL_TOL), est.upper, 0.0, &|| {
                format!("upper {} below σ_max {sigma}", est.upper)
            });
        }
        let Some(base) = case.ok(extreme_enumeration(t, &cfg), "extreme_enumeration") else {
            return;
        };
        for j in 0..t.domain().num_blocks() {
            let flipped = t.flip_block_column(j).expect("index in range");
            if let Some(f) = case.ok(extreme_enumeration(&flipped, &cfg), "extreme_enumeration") {
                case.close(
                    f.lower,
                    base.lower,
                    tol(INTERVAL_SLACK, base.lower),
                    &|| {
                        format!(
                            "column flip {} moved lower from {} to {}",
                            j + 1,
                            base.lower,
                            f.lower
                        )
                    },
                );
            }
        }
    }

    if let Some(scaled) = case.ok(t.scaled(c), "scaling") {
        if let Some(s) = case.ok(opnorm(&scaled, &cfg), "opnorm(cT)") {
            let (lo, hi) = (c.abs() * est.lower, c.abs() * est.upper);
            case.close(s.lower, lo, tol(INTERVAL_SLACK, lo), &|| {
                format!("lower(cT) = {} vs |c|·lower(T) = {lo}", s.lower)
            });
            case.close(s.upper, hi, tol(INTERVAL_SLACK, hi), &|| {
                format!("upper(cT) = {} vs |c|·upper(T) = {hi}", s.upper)
            });
        }
    }
}

/// Brute-force maximum of `‖T(±e)‖` over signed basis vectors, built as
/// vectors and applied; independent of the column rule.
pub fn brute_force_signed_basis(t: &BlockOperator) -> f64 {
    let spec = t.domain();
    let mut best = 0.0f64;
    for b in 0..spec.num_blocks() {
        for k in 0..spec.block_dims()[b] {
            for sign in [Sign::Plus, Sign::Minus] {
                let x = BlockVector::basis(spec.clone(), b, k, sign).expect("index in range");
                best = best.max(t.apply(&x).expect("domain matches").norm());
            }
        }
    }
    best
}

/// Brute-force maximum of `‖Tx‖` over every extreme point of the unit ball of
/// an `ℓ∞`-sum domain: all selections and all `2^m` sign vectors.
pub fn brute_force_linf(t: &BlockOperator) -> f64 {
    let spec = t.domain();
    let dims = spec.block_dims();
    let m = dims.len();
    let mut coords = vec![0usize; m];
    let mut best = 0.0f64;
    loop {
        for mask in 0..(1u64 << m) {
            let blocks: Vec<Vec<f64>> = dims
                .iter()
                .enumerate()
                .map(|(i, &n)| {
                    let mut blk = vec![0.0; n];
                    blk[coords[i]] = if (mask >> i) & 1 == 1 { -1.0 } else { 1.0 };
                    blk
                })
                .collect();
            let x = BlockVector::new(spec.clone(), blocks).expect("valid blocks");
            best = best.max(t.apply(&x).expect("domain matches").norm());
        }
        // odometer over selections
        let mut i = m;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            coords[i] += 1;
            if coords[i] < dims[i] {
                break;
            }
            coords[i] = 0;
        }
    }
}

/// Largest singular value by power iteration on the Gram matrix `TᵀT`.
pub fn largest_singular_value(t: &Array2<f64>) -> f64 {
    let gram = t.t().dot(t);
    let n = gram.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut x = ndarray::Array1::from_iter((0..n).map(|j| 1.0 + j as f64 / (n as f64 + 1.0)));
    let mut rayleigh = 0.0f64;
    for _ in 0..200_000 {
        let norm = x.dot(&x).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        x /= norm;
        let gx = gram.dot(&x);
        let next = x.dot(&gx);
        let settled = (next - rayleigh).abs() <= 1e-16 * next.abs();
        rayleigh = next;
        x = gx;
        if settled {
            break;
        }
    }
    rayleigh.max(0.0).sqrt()
}

// ---------------------------------------------------------------------------
// chain

#[derive(Debug, Clone, PartialEq)]
pub struct ChainParams {
    pub m: usize,
    pub p: Exponent,
    pub cfg: SolverConfig,
}

/// The truncated composite `ℓ₁^m → D_m → B(E_m)`. Case 0 uses `a = e₁`.
///
/// `D_m = (⊕_{n≤m} B(ℓ₁ⁿ))_{ℓ∞}` receives `(aₙ·e₁⊗e₁*)ₙ`; `F_m` receives
/// `(aₙ e₁)ₙ`; `Δ` maps both into operators on `E_m = (⊕_{n≤m} ℓ₁ⁿ)_{ℓp}`.
/// Each isometric leg is checked to have distortion one, and every recovery
/// map is checked to return its input exactly.
pub fn suite_chain(params: &ChainParams, sel: CaseSelection) -> Result<SuiteRun> {
    if params.m == 0 {
        return Err(Error::InvalidInput("m must be ≥ 1".into()));
    }
    params.cfg.validate()?;
    let m = params.m;
    Ok(run_suite(
        "chain",
        sel,
        vec![CHAIN_SCOPE_NOTE.to_string()],
        |index, case_seed| {
            let mut rng = rng_from(case_seed);
            let mut case = Case::new(index, case_seed, format!("m={m}, p={}", params.p));
            let a: Vec<f64> = if index == 0 {
                (0..m).map(|n| if n == 0 { 1.0 } else { 0.0 }).collect()
            } else {
                (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect()
            };
            chain_case(&mut case, &a, params, case_seed);
            case
        },
    ))
}

fn distortion(measured: f64, expected: f64) -> f64 {
    if expected == 0.0 {
        if measured == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        measured / expected
    }
}

fn chain_case(case: &mut Case, a: &[f64], params: &ChainParams, case_seed: u64) {
    let m = a.len();
    let sup = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    case.record("sup_a", sup);

    // D_m leg: (a_n e₁⊗e₁*)_n, normed by the sup of block operator norms
    let d_elem: Vec<BlockOperator> = (0..m)
        .map(|n| {
            let spec = SpaceSpec::l1(n + 1).expect("n ≥ 1");
            let mut col = vec![0.0; n + 1];
            col[0] = a[n];
            embed_l1(&BlockVector::from_flat(spec, col).expect("finite")).expect("single block")
        })
        .collect();
    let d_norm = d_elem
        .iter()
        .map(|b| opnorm_l1_exact(b).expect("single block").0)
        .fold(0.0, f64::max);
    case.record("D_norm", d_norm);
    let dist = distortion(d_norm, sup);
    case.close(dist, 1.0, INTERVAL_SLACK, &|| {
        format!("‖(aₙ e₁⊗e₁*)‖_D = {d_norm} vs max|aₙ| = {sup}")
    });

    let Some(diag) = case.ok(delta(&d_elem, params.p), "delta") else {
        return;
    };
    if let Some(back) = case.ok(xi(&diag), "xi") {
        case.holds(back == d_elem, &|| "Ξ∘Δ ≠ id on D_m".into());
        let recovered: Vec<f64> = back
            .iter()
            .map(|b| first_column(b).expect("single block").as_slice()[0])
            .collect();
        case.holds(recovered == a, &|| {
            "recovered coordinates differ from a".into()
        });
    }

    // F_m leg: (a_n e₁)_n in the ℓ∞-sum of ℓ₁ⁿ
    let f_spec = SpaceSpec::new(Exponent::INF, (1..=m).collect()).expect("valid dims");
    let mut f_data = vec![0.0; f_spec.dim()];
    for (n, &v) in a.iter().enumerate() {
        f_data[f_spec.block_range(n).start] = v;
    }
    let f = BlockVector::from_flat(f_spec, f_data).expect("finite");
    let f_norm = f.norm();
    case.record("F_norm", f_norm);
    let dist = distortion(f_norm, sup);
    case.close(dist, 1.0, INTERVAL_SLACK, &|| {
        format!("‖(aₙ e₁)‖_F = {f_norm} vs max|aₙ| = {sup}")
    });

    // B(E_m) leg: Δ of the embedded blocks of f
    let embedded: Option<Vec<BlockOperator>> = f
        .blocks()
        .map(|blk| {
            let v = BlockVector::from_flat(SpaceSpec::l1(blk.len()).ok()?, blk.to_vec()).ok()?;
            embed_l1(&v).ok()
        })
        .collect();
    let Some(embedded) = embedded else {
        case.holds(false, &|| "embedding of F_m blocks failed".into());
        return;
    };
    let Some(op) = case.ok(delta(&embedded, params.p), "delta") else {
        return;
    };
    let cfg = SolverConfig {
        seed: derive_seed(case_seed, 0),
        ..params.cfg.clone()
    };
    let Some(est) = case.ok(opnorm(&op, &cfg), "opnorm") else {
        return;
    };
    case.record("B_lower", est.lower);
    case.record("B_upper", est.upper);
    case.witness_valid(&op, &est, "Δ(embed(f))");
    let dist = distortion(est.lower, sup);
    case.record("B_distortion", dist);
    case.close(dist, 1.0, INTERVAL_SLACK, &|| {
        format!("lower ‖Δ(embed(f))‖ = {} vs max|aₙ| = {sup}", est.lower)
    });
    case.le(sup, est.upper, tol(INTERVAL_SLACK, sup), &|| {
        format!("upper ‖Δ(embed(f))‖ = {} below max|aₙ| = {sup}", est.upper)
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg() -> SolverConfig {
        SolverConfig {
            restarts: 4,
            ..Default::default()
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let spec: SpaceSpec = "p=2;blocks=2,1".parse().unwrap();
        let a = gen_operator(&spec, 7, 1.0).unwrap();
        let b = gen_operator(&spec, 7, 1.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_operator(&spec, 8, 1.0).unwrap());
        assert!(a.dense().iter().all(|v| v.abs() <= 1.0));
        let tiny = gen_operator(&spec, 7, 1e-300).unwrap();
        assert!(tiny.dense().iter().all(|v| v.abs() <= 1e-300));
        assert!(gen_operator(&spec, 7, 0.0).is_err());
        assert!(gen_operator(&spec, 7, -1.0).is_err());
    }

    #[test]
    fn embedding_small() {
        let run = suite_embedding(
            &EmbeddingParams {
                n_max: 1,
                ensemble: Ensemble::Uniform,
            },
            CaseSelection::new(50, 3),
        )
        .unwrap();
        assert!(run.report.passed(), "{:?}", run.report.violations);
        assert_eq!(run.report.cases, 50);
        assert_eq!(run.records[0].quantities["a_l1"], 0.0);
        assert!(suite_embedding(
            &EmbeddingParams {
                n_max: 0,
                ensemble: Ensemble::Uniform
            },
            CaseSelection::new(1, 0)
        )
        .is_err());
    }

    #[test]
    fn broken_trace_is_caught() {
        let params = TongParams {
            exponents: vec![Exponent::ONE, Exponent::INF],
            m_max: 3,
            n_max: 2,
            cfg: quick_cfg(),
            ensemble: Ensemble::Uniform,
        };
        // averages T_k with T itself instead of T_r
        let broken = |t: &BlockOperator| -> Result<TongTrace> {
            let mut steps: Vec<BlockOperator> = Vec::new();
            for idx in 0..t.domain().num_blocks() {
                let cur = steps.last().unwrap_or(t).clone();
                let k = cur.flip_block_column(idx)?;
                steps.push(BlockOperator::lincomb(
                    0.5,
                    &k,
                    0.5,
                    &cur.flip_block_column(idx)?.flip_block_column(idx)?,
                )?);
            }
            Ok(TongTrace {
                source: t.clone(),
                steps,
            })
        };
        let run = suite_tong_with(&params, CaseSelection::new(20, 1), broken).unwrap();
        assert!(!run.report.passed());
        assert!(run.report.max_slack > 0.0);

        let good = suite_tong_with(&params, CaseSelection::new(20, 1), tong_sequence).unwrap();
        assert!(good.report.passed(), "{:?}", good.report.violations);
        assert!(good.report.max_slack <= 0.0);
    }

    #[test]
    fn single_case_replay_matches() {
        let params = TongParams {
            exponents: vec![Exponent::ONE, Exponent::finite(1.5).unwrap()],
            m_max: 3,
            n_max: 2,
            cfg: quick_cfg(),
            ensemble: Ensemble::Uniform,
        };
        let full = suite_tong(&params, CaseSelection::new(6, 9)).unwrap();
        let one = suite_tong(
            &params,
            CaseSelection {
                only: Some(3),
                ..CaseSelection::new(6, 9)
            },
        )
        .unwrap();
        assert_eq!(one.records.len(), 1);
        assert_eq!(one.records[0], full.records[3]);
    }

    #[test]
    fn power_iteration_oracle() {
        let t = ndarray::array![[1.0, 2.0], [3.0, 4.0]];
        assert!((largest_singular_value(&t) - 5.464985704219043).abs() <= 1e-12);
        assert_eq!(largest_singular_value(&Array2::zeros((3, 3))), 0.0);
    }

    #[test]
    fn brute_force_oracles() {
        let spec: SpaceSpec = "p=inf;blocks=1,1".parse().unwrap();
        let t =
            BlockOperator::from_dense(spec.clone(), spec, ndarray::array![[1.0, 2.0], [3.0, 4.0]])
                .unwrap();
        assert_eq!(brute_force_linf(&t), 7.0);
        assert_eq!(brute_force_signed_basis(&t), 4.0);
    }

    #[test]
    fn chain_single_block() {
        let run = suite_chain(
            &ChainParams {
                m: 1,
                p: Exponent::TWO,
                cfg: quick_cfg(),
            },
            CaseSelection::new(3, 5),
        )
        .unwrap();
        assert!(run.report.passed(), "{:?}", run.report.violations);
        assert_eq!(run.report.notes, vec![CHAIN_SCOPE_NOTE.to_string()]);
    }

    #[test]
    fn report_json_shape() {
        let report = VerificationReport {
            suite: "tong".into(),
            seed: 7,
            cases: 2,
            violations: vec![Violation {
                case_seed: 11,
                desc: "x".into(),
                slack: 0.5,
            }],
            max_slack: 0.5,
            wall_time_s: 0.25,
            notes: Vec::new(),
        };
        let v: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        assert_eq!(
            keys,
            [
                "cases",
                "max_slack",
                "seed",
                "suite",
                "violations",
                "wall_time_s"
            ]
        );
        assert_eq!(v["violations"][0]["case_seed"], 11);
        let back: VerificationReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn csv_has_one_row_per_case() {
        let run = suite_embedding(
            &EmbeddingParams {
                n_max: 4,
                ensemble: Ensemble::HeavyTailed,
            },
            CaseSelection::new(5, 1),
        )
        .unwrap();
        let mut buf = Vec::new();
        run.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("case,case_seed,label,checks,violations,max_slack,quantities"));
    }
}
