//! Operator norms of block operators.
//!
//! * Domain exponent 1: the domain is `ℓ₁^N`, so the norm is the largest
//!   codomain norm of a column (exact).
//! * Domain exponent ∞: the unit ball is the product of the block `ℓ₁` balls.
//!   Its extreme points are the vectors whose every block is a signed basis
//!   vector, and `x ↦ ‖Tx‖` is convex, so enumerating those points is exact.
//!   When the codomain is `ℓ∞` of scalars the enumeration collapses to a row
//!   rule.
//! * Domain exponent `p ∈ (1, ∞)`: every extreme point of the unit ball has
//!   blocks of the form `tᵢ·e_{kᵢ}` with `‖t‖_p = 1`. For each selection
//!   `(k₁, …, k_m)` the remaining problem is `max ‖A t‖` over the `ℓp` ball of
//!   `ℝᵐ`, where column `i` of `A` is `T e_{kᵢ}` in block `i`. Signs live in `t`.
//!   That problem is nonconvex and is solved by ascent, so the result is an
//!   interval: the best value found and a Hölder (optionally grid) bound.
//!
//! Every estimate also evaluates all signed basis vectors of the domain.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operators::BlockOperator;
use crate::seeding::{derive_seed, rng_from};
use crate::spaces::{BlockVector, Exponent, SpaceSpec};

/// Largest number of selections `Π nᵢ` the extreme-point solver accepts.
pub const MAX_SELECTIONS: u64 = 1_000_000;
/// Largest block count for the `ℓ∞`-domain sign enumeration.
pub const MAX_SIGN_BLOCKS: usize = 24;
/// Largest number of extreme points the `ℓ∞`-domain enumeration visits.
pub const MAX_SIGN_POINTS: u64 = 1 << 30;
/// Up to this many active columns every random start is run in all of its
/// sign patterns; above it only the drawn pattern is used.
pub const MIRROR_MAX_DIM: usize = 5;
/// Grid certificates are only attempted up to this many active columns.
pub const GRID_MAX_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub restarts: usize,
    pub max_iters: usize,
    /// Relative improvement below which an ascent run stops.
    pub tol: f64,
    pub seed: u64,
    pub grid_cert: bool,
    pub grid_resolution: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            restarts: 32,
            max_iters: 10_000,
            tol: 1e-10,
            seed: 0,
            grid_cert: false,
            grid_resolution: 64,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Config("tol must be a positive real".into()));
        }
        if self.grid_resolution == 0 {
            return Err(Error::Config("grid_resolution must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    #[serde(rename = "exact-l1")]
    ExactL1,
    #[serde(rename = "exact-linf")]
    ExactLinf,
    #[serde(rename = "extreme-enum")]
    ExtremeEnum,
    #[serde(rename = "sampling")]
    Sampling,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::ExactL1 => "exact-l1",
            Method::ExactLinf => "exact-linf",
            Method::ExtremeEnum => "extreme-enum",
            Method::Sampling => "sampling",
        }
    }

    pub fn is_exact(self) -> bool {
        matches!(self, Method::ExactL1 | Method::ExactLinf)
    }
}

/// Certified bracket `lower ≤ ‖T‖ ≤ upper` with a unit vector attaining `lower`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormEstimate {
    pub lower: f64,
    pub upper: f64,
    pub witness: BlockVector,
    pub method: Method,
}

/// Result of [`inner_max_lp`].
#[derive(Debug, Clone, PartialEq)]
pub struct InnerMax {
    pub lower: f64,
    /// Unit vector of `ℓp` in `ℝᵐ` attaining `lower`.
    pub witness: Vec<f64>,
    pub upper: f64,
}

/// Operator norm of `T` with the exponent-specific method, always merged with
/// the best signed basis vector of the domain.
pub fn opnorm(t: &BlockOperator, cfg: &SolverConfig) -> Result<NormEstimate> {
    cfg.validate()?;
    let outer = t.domain().outer();
    let mut est = if outer.is_one() {
        let (value, witness) = opnorm_l1_exact(t)?;
        exact(value, witness, Method::ExactL1)
    } else if outer.is_inf() {
        let (value, witness) = opnorm_linf_exact(t)?;
        exact(value, witness, Method::ExactLinf)
    } else {
        extreme_enumeration(t, cfg)?
    };
    let (basis_value, basis_witness) = best_signed_basis(t);
    if basis_value > est.lower {
        est.lower = basis_value;
        est.witness = basis_witness;
    }
    est.upper = est.upper.max(est.lower);
    Ok(est)
}

fn exact(value: f64, witness: BlockVector, method: Method) -> NormEstimate {
    NormEstimate {
        lower: value,
        upper: value,
        witness,
        method,
    }
}

/// Best `‖T(±e)‖` over the signed basis vectors of the domain. Ties go to the
/// lowest `(block, coord)`, `+` before `−`.
pub fn best_signed_basis(t: &BlockOperator) -> (f64, BlockVector) {
    let domain = t.domain();
    let mut best = (f64::NEG_INFINITY, 0usize);
    for k in 0..domain.dim() {
        let value = t.codomain().norm_of(&t.column(k));
        if value > best.0 {
            best = (value, k);
        }
    }
    let mut witness = BlockVector::zeros(domain.clone()).into_vec();
    witness[best.1] = 1.0;
    (
        best.0,
        BlockVector::from_flat(domain.clone(), witness).expect("unit basis vector"),
    )
}

/// Column rule for an `ℓ₁^N` domain (outer exponent 1, or a single block).
pub fn opnorm_l1_exact(t: &BlockOperator) -> Result<(f64, BlockVector)> {
    let domain = t.domain();
    if !domain.outer().is_one() && domain.num_blocks() > 1 {
        return Err(Error::Dispatch(format!(
            "column rule needs an ℓ₁ domain, got `{domain}`"
        )));
    }
    Ok(best_signed_basis(t))
}

/// Exact norm for an `ℓ∞`-sum domain.
pub fn opnorm_linf_exact(t: &BlockOperator) -> Result<(f64, BlockVector)> {
    if !t.domain().outer().is_inf() {
        return Err(Error::Dispatch(format!(
            "sign enumeration needs an ℓ∞ domain, got `{}`",
            t.domain()
        )));
    }
    if is_scalar_linf(t.codomain()) {
        linf_row_rule(t)
    } else {
        linf_sign_enumeration(t)
    }
}

/// `ℓ∞` of scalars: all blocks one-dimensional, and the outer exponent is ∞
/// or there is only one block.
fn is_scalar_linf(spec: &SpaceSpec) -> bool {
    spec.block_dims().iter().all(|&n| n == 1) && (spec.outer().is_inf() || spec.num_blocks() == 1)
}

/// Row rule for a scalar `ℓ∞` codomain: `max_r Σᵢ maxₖ |T[r, (i, k)]|`.
pub fn linf_row_rule(t: &BlockOperator) -> Result<(f64, BlockVector)> {
    if !t.domain().outer().is_inf() || !is_scalar_linf(t.codomain()) {
        return Err(Error::Dispatch(
            "row rule needs an ℓ∞ domain and a scalar ℓ∞ codomain".into(),
        ));
    }
    let domain = t.domain();
    let matrix = t.dense();
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (r, row) in matrix.rows().into_iter().enumerate() {
        let value: f64 = (0..domain.num_blocks())
            .map(|b| {
                row.slice(ndarray::s![domain.block_range(b)])
                    .iter()
                    .fold(0.0f64, |m, v| m.max(v.abs()))
            })
            .sum();
        if value > best.0 {
            best = (value, r);
        }
    }
    let row = matrix.row(best.1);
    let mut x = vec![0.0; domain.dim()];
    for b in 0..domain.num_blocks() {
        let range = domain.block_range(b);
        let mut pick = range.start;
        for k in range {
            if row[k].abs() > row[pick].abs() {
                pick = k;
            }
        }
        x[pick] = if row[pick] < 0.0 { -1.0 } else { 1.0 };
    }
    Ok((best.0, BlockVector::from_flat(domain.clone(), x)?))
}

fn selection_count(dims: &[usize], limit: u64) -> Result<u64> {
    let mut count = 1u64;
    for &n in dims {
        count = count.saturating_mul(n as u64);
        if count > limit {
            return Err(Error::SizeLimit(format!(
                "{} block selections exceed the limit {limit}",
                dims.iter().map(|&n| n as u128).product::<u128>()
            )));
        }
    }
    Ok(count)
}

/// Mixed-radix decoding of a selection index into one coordinate per block,
/// first block most significant.
fn decode_selection(dims: &[usize], mut index: u64, out: &mut [usize]) {
    for (slot, &n) in out.iter_mut().zip(dims).rev() {
        *slot = (index % n as u64) as usize;
        index /= n as u64;
    }
}

/// Full enumeration over `Σᵢ σᵢ e^{(i)}_{kᵢ}` for an `ℓ∞`-sum domain.
/// Since `‖T(−x)‖ = ‖Tx‖`, the first sign is fixed to `+`.
pub fn linf_sign_enumeration(t: &BlockOperator) -> Result<(f64, BlockVector)> {
    let domain = t.domain();
    if !domain.outer().is_inf() {
        return Err(Error::Dispatch(format!(
            "sign enumeration needs an ℓ∞ domain, got `{domain}`"
        )));
    }
    let m = domain.num_blocks();
    if m > MAX_SIGN_BLOCKS {
        return Err(Error::SizeLimit(format!(
            "{m} blocks exceed the sign-enumeration limit {MAX_SIGN_BLOCKS}"
        )));
    }
    let masks = 1u64 << (m - 1);
    let selections = selection_count(domain.block_dims(), MAX_SIGN_POINTS / masks)?;
    let codomain = t.codomain();
    let columns: Vec<Vec<f64>> = (0..domain.dim()).map(|k| t.column(k)).collect();

    let per_selection: Vec<(f64, u64)> = (0..selections)
        .into_par_iter()
        .map(|s| {
            let mut coords = vec![0usize; m];
            decode_selection(domain.block_dims(), s, &mut coords);
            let cols: Vec<&[f64]> = coords
                .iter()
                .enumerate()
                .map(|(i, &k)| columns[domain.block_range(i).start + k].as_slice())
                .collect();
            let mut y = vec![0.0; codomain.dim()];
            let mut best = (f64::NEG_INFINITY, 0u64);
            for mask in 0..masks {
                y.iter_mut().for_each(|v| *v = 0.0);
                for (i, col) in cols.iter().enumerate() {
                    let negative = i > 0 && (mask >> (i - 1)) & 1 == 1;
                    for (acc, &c) in y.iter_mut().zip(col.iter()) {
                        if negative {
                            *acc -= c;
                        } else {
                            *acc += c;
                        }
                    }
                }
                let value = codomain.norm_of(&y);
                if value > best.0 {
                    best = (value, mask);
                }
            }
            best
        })
        .collect();

    let (mut best_value, mut best_sel, mut best_mask) = (f64::NEG_INFINITY, 0u64, 0u64);
    for (s, &(value, mask)) in per_selection.iter().enumerate() {
        if value > best_value {
            (best_value, best_sel, best_mask) = (value, s as u64, mask);
        }
    }
    let mut coords = vec![0usize; m];
    decode_selection(domain.block_dims(), best_sel, &mut coords);
    let mut x = vec![0.0; domain.dim()];
    for (i, &k) in coords.iter().enumerate() {
        let negative = i > 0 && (best_mask >> (i - 1)) & 1 == 1;
        x[domain.block_range(i).start + k] = if negative { -1.0 } else { 1.0 };
    }
    Ok((best_value, BlockVector::from_flat(domain.clone(), x)?))
}

/// Per-selection upper bound and, when searched, the inner lower bound and weights.
type SelectionOutcome = (f64, Option<(f64, Vec<f64>)>);

/// Interval estimate for a domain exponent `p ∈ (1, ∞)` by enumerating block
/// selections and solving the `ℓp`-ball problem for each.
pub fn extreme_enumeration(t: &BlockOperator, cfg: &SolverConfig) -> Result<NormEstimate> {
    cfg.validate()?;
    let domain = t.domain();
    let p = domain.outer();
    if !p.is_intermediate() {
        return Err(Error::Dispatch(format!(
            "extreme-point enumeration needs 1 < p < ∞, got `{domain}`"
        )));
    }
    selection_count(domain.block_dims(), MAX_SELECTIONS)?;
    let codomain = t.codomain();
    let (basis_value, basis_witness) = best_signed_basis(t);
    let global = block_norm_bound(t);
    if global <= basis_value * ROUNDING_ALLOWANCE {
        // the basis candidates already meet a certified upper bound
        return Ok(NormEstimate {
            lower: basis_value,
            upper: global.max(basis_value),
            witness: basis_witness,
            method: Method::ExtremeEnum,
        });
    }

    // Selections that differ only in which zero column they pick define the
    // same inner problem, so each block offers its nonzero columns plus one
    // shared zero choice.
    let columns: Vec<Vec<f64>> = (0..domain.dim()).map(|k| t.column(k)).collect();
    let choices: Vec<Vec<Option<usize>>> = (0..domain.num_blocks())
        .map(|i| {
            let range = domain.block_range(i);
            let mut c: Vec<Option<usize>> = range
                .clone()
                .filter(|&k| columns[k].iter().any(|&v| v != 0.0))
                .map(Some)
                .collect();
            if c.len() < range.len() {
                c.push(None);
            }
            c
        })
        .collect();
    let reduced_dims: Vec<usize> = choices.iter().map(Vec::len).collect();
    let selections = selection_count(&reduced_dims, MAX_SELECTIONS)?;
    let active_columns = |s: u64| -> Vec<usize> {
        let mut coords = vec![0usize; reduced_dims.len()];
        decode_selection(&reduced_dims, s, &mut coords);
        coords
            .iter()
            .zip(&choices)
            .filter_map(|(&c, ch)| ch[c])
            .collect()
    };

    // A selection whose Hölder bound cannot beat the basis candidates is not
    // searched. The threshold is fixed before the parallel loop, so skipping
    // does not depend on scheduling.
    let outcomes: Vec<SelectionOutcome> = (0..selections)
        .into_par_iter()
        .map(|s| {
            let active = active_columns(s);
            let mut a = Array2::zeros((codomain.dim(), active.len()));
            for (i, &k) in active.iter().enumerate() {
                a.column_mut(i)
                    .assign(&ndarray::ArrayView1::from(columns[k].as_slice()));
            }
            let holder = holder_bound(a.view(), p, codomain);
            if holder <= basis_value {
                return (holder, None);
            }
            let inner = solve_inner(a.view(), p, codomain, cfg, derive_seed(cfg.seed, s));
            (inner.upper, Some((inner.lower, inner.witness)))
        })
        .collect();

    let mut upper = basis_value;
    let mut best: Option<(f64, u64, &[f64])> = None;
    for (s, (sel_upper, found)) in outcomes.iter().enumerate() {
        upper = upper.max(*sel_upper);
        if let Some((value, tvec)) = found {
            if *value > best.map_or(basis_value, |b| b.0) {
                best = Some((*value, s as u64, tvec));
            }
        }
    }

    let (lower, witness) = match best {
        None => (basis_value, basis_witness),
        Some((_, s, tvec)) => {
            let mut x = vec![0.0; domain.dim()];
            for (&k, &v) in active_columns(s).iter().zip(tvec) {
                x[k] = v;
            }
            let x = BlockVector::from_flat(domain.clone(), x)?;
            let value = codomain.norm_of(&t.apply_slice(x.as_slice()));
            if value >= basis_value {
                (value, x)
            } else {
                (basis_value, basis_witness)
            }
        }
    };

    let upper = upper.min(global);
    Ok(NormEstimate {
        lower,
        upper: upper.max(lower),
        witness,
        method: Method::ExtremeEnum,
    })
}

/// Upper bound through the nonnegative matrix `B` of block norms,
/// `B_ij = ‖T_ij‖_{ℓ₁→ℓ₁}`. Since `‖(Tx)ᵢ‖₁ ≤ Σⱼ B_ij ‖xⱼ‖₁` and the outer norms
/// are monotone, `‖T‖ ≤ ‖B‖_{ℓp→ℓq}` with `p`, `q` the outer exponents.
///
/// For `q = p` the bound on `‖B‖_p` is the Schur test with weights taken from
/// a positive vector `x`: with `y = Bx`,
/// `‖B‖_p ≤ maxⱼ ((Bᵀ y^{p−1})ⱼ / xⱼ^{p−1})^{1/p}`.
/// This holds for every positive `x` and is attained at the maximizer, which
/// the nonlinear power iteration approaches. Other `q` reduce to `q = p` via
/// the inclusion constant `‖I‖_{ℓp→ℓq}`, except `q ∈ {1, ∞}` where `‖B‖_{p→q}`
/// has a closed form on nonnegative matrices.
pub fn block_norm_bound(t: &BlockOperator) -> f64 {
    let (dom, cod) = (t.domain(), t.codomain());
    let (m, mc) = (dom.num_blocks(), cod.num_blocks());
    let mut b = Array2::<f64>::zeros((mc, m));
    for i in 0..mc {
        for j in 0..m {
            let blk = t.block(i, j).expect("grid index in range");
            b[(i, j)] = blk
                .columns()
                .into_iter()
                .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max);
        }
    }
    let p = dom.outer();
    let q = cod.outer();
    if q.is_inf() {
        let pd = p.dual();
        return b
            .rows()
            .into_iter()
            .map(|r| pd.combine(&r.to_vec(), false))
            .fold(0.0, f64::max)
            * ROUNDING_ALLOWANCE;
    }
    if q.is_one() {
        let colsums: Vec<f64> = b.columns().into_iter().map(|c| c.sum()).collect();
        return p.dual().combine(&colsums, false) * ROUNDING_ALLOWANCE;
    }
    let Some(pv) = p.value() else {
        // ℓ∞ domain: ‖B‖_{∞→q} = ‖B·1‖_q for nonnegative B
        let rowsums: Vec<f64> = b.rows().into_iter().map(|r| r.sum()).collect();
        return q.combine(&rowsums, false) * ROUNDING_ALLOWANCE;
    };
    let qv = q.value().expect("finite codomain exponent");
    let inclusion = if qv >= pv {
        1.0
    } else {
        (mc as f64).powf(1.0 / qv - 1.0 / pv)
    };
    let same = if pv == 1.0 {
        b.columns().into_iter().map(|c| c.sum()).fold(0.0, f64::max)
    } else {
        schur_bound(b.view(), pv)
    };
    same * inclusion * ROUNDING_ALLOWANCE
}

/// Relative inflation absorbing floating-point error in computed bounds.
const ROUNDING_ALLOWANCE: f64 = 1.0 + 64.0 * f64::EPSILON;

fn schur_bound(b: ArrayView2<f64>, p: f64) -> f64 {
    let m = b.ncols();
    let certificate = |x: &[f64]| -> f64 {
        let y: Vec<f64> = b
            .rows()
            .into_iter()
            .map(|r| r.iter().zip(x).map(|(a, v)| a * v).sum())
            .collect();
        let yp: Vec<f64> = y.iter().map(|v| v.powf(p - 1.0)).collect();
        let mut worst = 0.0f64;
        for (j, col) in b.columns().into_iter().enumerate() {
            let num: f64 = col.iter().zip(&yp).map(|(a, v)| a * v).sum();
            if num == 0.0 {
                continue;
            }
            worst = worst.max(num / x[j].powf(p - 1.0));
        }
        worst.powf(1.0 / p)
    };
    let ones = vec![1.0; m];
    let mut best = certificate(&ones);
    // nonlinear power iteration x ← (Bᵀ (Bx)^{p−1})^{1/(p−1)}, kept positive
    let mut x = ones;
    for _ in 0..200 {
        let y: Vec<f64> = b
            .rows()
            .into_iter()
            .map(|r| r.iter().zip(&x).map(|(a, v)| a * v).sum())
            .collect();
        let yp: Vec<f64> = y.iter().map(|v| v.powf(p - 1.0)).collect();
        let mut next: Vec<f64> = b
            .columns()
            .into_iter()
            .map(|c| {
                c.iter()
                    .zip(&yp)
                    .map(|(a, v)| a * v)
                    .sum::<f64>()
                    .powf(1.0 / (p - 1.0))
            })
            .collect();
        let scale = next.iter().copied().fold(0.0, f64::max);
        if scale == 0.0 || !scale.is_finite() {
            break;
        }
        next.iter_mut().for_each(|v| *v = (*v / scale).max(1e-150));
        x = next;
    }
    best = best.min(certificate(&x));
    best
}

/// `‖(‖a₁‖, …, ‖a_m‖)‖_{p*}` over the columns of `a`, measured in `codomain`.
pub fn holder_bound(a: ArrayView2<f64>, p: Exponent, codomain: &SpaceSpec) -> f64 {
    let norms: Vec<f64> = a
        .columns()
        .into_iter()
        .map(|c| codomain.norm_of(&c.to_vec()))
        .collect();
    p.dual().combine(&norms, false)
}

/// Approximates `max { ‖A t‖ : ‖t‖_p ≤ 1 }` for `1 < p < ∞`.
///
/// Returns the best value found by ascent (a certified lower bound with its
/// maximizer) and an upper bound: the Hölder column bound, tightened by a grid
/// certificate when `cfg.grid_cert` is set and at most three columns are
/// nonzero.
pub fn inner_max_lp(
    a: ArrayView2<f64>,
    p: Exponent,
    codomain: &SpaceSpec,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<InnerMax> {
    cfg.validate()?;
    if !p.is_intermediate() {
        return Err(Error::Dispatch(format!(
            "ℓp-ball ascent needs 1 < p < ∞, got p={p}"
        )));
    }
    if a.nrows() != codomain.dim() {
        return Err(Error::Shape(format!(
            "matrix has {} rows, codomain `{codomain}` has dimension {}",
            a.nrows(),
            codomain.dim()
        )));
    }
    if a.ncols() == 0 {
        return Err(Error::Shape("matrix has no columns".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has a non-finite entry".into()));
    }
    Ok(solve_inner(a, p, codomain, cfg, seed))
}

fn solve_inner(
    a: ArrayView2<f64>,
    p: Exponent,
    codomain: &SpaceSpec,
    cfg: &SolverConfig,
    seed: u64,
) -> InnerMax {
    let m = a.ncols();
    // zero columns carry no weight at the optimum
    let active: Vec<usize> = (0..m)
        .filter(|&j| a.column(j).iter().any(|&v| v != 0.0))
        .collect();
    if active.is_empty() {
        let mut witness = vec![0.0; m];
        witness[0] = 1.0;
        return InnerMax {
            lower: 0.0,
            witness,
            upper: 0.0,
        };
    }
    let problem = Problem::new(a, &active, p, codomain);
    let holder = problem.holder();

    let (lower, t) = problem.search(cfg, seed);
    let mut upper = holder;
    if cfg.grid_cert && active.len() <= GRID_MAX_DIM {
        upper = upper.min(problem.grid_bound(cfg.grid_resolution, holder));
    }

    let mut witness = vec![0.0; m];
    for (slot, &j) in active.iter().enumerate() {
        witness[j] = t[slot];
    }
    InnerMax {
        lower,
        witness,
        upper: upper.max(lower),
    }
}

/// Dense `ℓp`-ball problem restricted to the active columns.
struct Problem<'a> {
    /// Active columns, each of codomain length.
    cols: Vec<Vec<f64>>,
    p: f64,
    exponent: Exponent,
    codomain: &'a SpaceSpec,
}

impl<'a> Problem<'a> {
    fn new(a: ArrayView2<f64>, active: &[usize], p: Exponent, codomain: &'a SpaceSpec) -> Self {
        Problem {
            cols: active.iter().map(|&j| a.column(j).to_vec()).collect(),
            p: p.value().expect("finite exponent"),
            exponent: p,
            codomain,
        }
    }

    fn dim(&self) -> usize {
        self.cols.len()
    }

    fn holder(&self) -> f64 {
        let norms: Vec<f64> = self.cols.iter().map(|c| self.codomain.norm_of(c)).collect();
        self.exponent.dual().combine(&norms, false)
    }

    fn image(&self, t: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (col, &w) in self.cols.iter().zip(t) {
            if w == 0.0 {
                continue;
            }
            for (acc, &c) in y.iter_mut().zip(col) {
                *acc += w * c;
            }
        }
    }

    fn value(&self, t: &[f64], y: &mut [f64]) -> f64 {
        self.image(t, y);
        self.codomain.norm_of(y)
    }

    fn normalize(&self, t: &mut [f64]) -> bool {
        let n = self
            .exponent
            .combine(&t.iter().map(|v| v.abs()).collect::<Vec<_>>(), false);
        if n == 0.0 || !n.is_finite() {
            return false;
        }
        t.iter_mut().for_each(|v| *v /= n);
        true
    }

    /// Maximizer of `⟨g, s⟩` over the unit `ℓp` ball.
    fn dual_map(&self, g: &[f64], s: &mut [f64]) -> bool {
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return false;
        }
        let power = 1.0 / (self.p - 1.0);
        for (si, &gi) in s.iter_mut().zip(g) {
            let mag = (gi.abs() / scale).powf(power);
            *si = if gi < 0.0 { -mag } else { mag };
        }
        self.normalize(s)
    }

    /// Monotone ascent from `t` (already on the unit sphere). Each step moves
    /// to the sphere point that maximizes the linearization at the current
    /// point; by convexity and homogeneity the value never decreases.
    fn ascend(&self, t: &mut Vec<f64>, max_iters: usize, tol: f64) -> f64 {
        let d = self.dim();
        let n = self.codomain.dim();
        let mut y = vec![0.0; n];
        let mut u = vec![0.0; n];
        let mut g = vec![0.0; d];
        let mut s = vec![0.0; d];
        let mut y_next = vec![0.0; n];
        let mut f = self.value(t, &mut y);
        if f == 0.0 {
            return 0.0;
        }
        for _ in 0..max_iters {
            self.codomain.norming_functional(&y, &mut u);
            for (gi, col) in g.iter_mut().zip(&self.cols) {
                *gi = col.iter().zip(&u).map(|(c, w)| c * w).sum();
            }
            if !self.dual_map(&g, &mut s) {
                break;
            }
            let f_next = self.value(&s, &mut y_next);
            if f_next.is_nan() || f_next <= f {
                break;
            }
            let gain = f_next - f;
            std::mem::swap(t, &mut s);
            std::mem::swap(&mut y, &mut y_next);
            f = f_next;
            if gain <= tol * f {
                break;
            }
        }
        f
    }

    /// Uniform point on the unit `ℓp` sphere: `|tᵢ|^p ~ Gamma(1/p)` with
    /// independent signs, then normalized.
    fn sphere_sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let gamma = Gamma::new(1.0 / self.p, 1.0).expect("positive shape");
        loop {
            let mut t: Vec<f64> = (0..self.dim())
                .map(|_| {
                    let mag = gamma.sample(rng).powf(1.0 / self.p);
                    if rng.gen::<bool>() {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect();
            if self.normalize(&mut t) {
                return t;
            }
        }
    }

    /// Ascent from every `+eᵢ` and from `cfg.restarts` sphere samples, each
    /// sample run in all sign patterns (first sign fixed) when the dimension
    /// is at most [`MIRROR_MAX_DIM`]. Because one ascent step commutes with
    /// flipping coordinate signs, the set of values reached is invariant
    /// under negating columns of `A`.
    fn search(&self, cfg: &SolverConfig, seed: u64) -> (f64, Vec<f64>) {
        let d = self.dim();
        let mut best = (f64::NEG_INFINITY, Vec::new());
        let mut consider = |value: f64, t: Vec<f64>| {
            if value > best.0 {
                best = (value, t);
            }
        };

        for i in 0..d {
            let mut t = vec![0.0; d];
            t[i] = 1.0;
            let value = self.ascend(&mut t, cfg.max_iters, cfg.tol);
            consider(value, t);
        }

        let mut rng = rng_from(seed);
        let mirrored = d <= MIRROR_MAX_DIM;
        for _ in 0..cfg.restarts {
            let mut sample = self.sphere_sample(&mut rng);
            let mut value_at_start = self.value(&sample, &mut vec![0.0; self.codomain.dim()]);
            // At t with At = 0 there is no useful subgradient: draw again.
            let mut redraws = 0;
            while value_at_start == 0.0 && redraws < 8 {
                sample = self.sphere_sample(&mut rng);
                value_at_start = self.value(&sample, &mut vec![0.0; self.codomain.dim()]);
                redraws += 1;
            }
            if !mirrored {
                let mut t = sample;
                let value = self.ascend(&mut t, cfg.max_iters, cfg.tol);
                consider(value, t);
                continue;
            }
            let magnitudes: Vec<f64> = sample.iter().map(|v| v.abs()).collect();
            for mask in 0..(1u64 << (d - 1)) {
                let mut t: Vec<f64> = magnitudes
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        if i > 0 && (mask >> (i - 1)) & 1 == 1 {
                            -v
                        } else {
                            v
                        }
                    })
                    .collect();
                let value = self.ascend(&mut t, cfg.max_iters, cfg.tol);
                consider(value, t);
            }
        }
        best
    }

    /// Grid certificate for `d ≤ 3` columns.
    ///
    /// Every sphere point is `c/‖c‖_p` for some `c` on the surface of the cube
    /// `[−1, 1]^d`. Grid the faces `cᵢ = 1` (the faces `cᵢ = −1` are their
    /// negatives) with spacing `h = 2/R`. If `g` is the grid point nearest to
    /// `c`, then `‖c − g‖_p ≤ δ = (d−1)^{1/p}·h/2`, so
    /// `‖A c‖/‖c‖_p ≤ (‖A g‖ + L·δ)/(‖g‖_p − δ)` with `L` the Hölder bound.
    fn grid_bound(&self, resolution: usize, lipschitz: f64) -> f64 {
        let d = self.dim();
        if d == 1 {
            return lipschitz;
        }
        let h = 2.0 / resolution as f64;
        let delta = ((d - 1) as f64).powf(1.0 / self.p) * h / 2.0;
        let ticks: Vec<f64> = (0..=resolution).map(|k| -1.0 + k as f64 * h).collect();
        let mut y = vec![0.0; self.codomain.dim()];
        let mut worst = 0.0f64;
        let mut g = vec![0.0; d];
        let points = ticks.len().pow((d - 1) as u32);
        for fixed in 0..d {
            for idx in 0..points {
                let mut rest = idx;
                for (slot, gi) in g.iter_mut().enumerate() {
                    if slot == fixed {
                        *gi = 1.0;
                    } else {
                        *gi = ticks[rest % ticks.len()];
                        rest /= ticks.len();
                    }
                }
                let g_norm = self
                    .exponent
                    .combine(&g.iter().map(|v| v.abs()).collect::<Vec<_>>(), false);
                if g_norm <= delta {
                    return lipschitz;
                }
                let bound = (self.value(&g, &mut y) + lipschitz * delta) / (g_norm - delta);
                worst = worst.max(bound);
            }
        }
        // round-off allowance on the certificate itself
        worst * ROUNDING_ALLOWANCE
    }
}

/// Best `‖Tx‖/‖x‖` over all signed basis vectors and `samples` random
/// vectors with Laplace coordinates, so a lower bound by construction. The
/// witness is the best vector scaled onto the unit sphere of the domain.
pub fn sampling_oracle(t: &BlockOperator, samples: usize, seed: u64) -> (f64, BlockVector) {
    let domain = t.domain();
    let (mut best_value, basis_witness) = best_signed_basis(t);
    let mut best_x: Option<Vec<f64>> = None;
    let mut rng = rng_from(seed);
    for _ in 0..samples {
        let mut x: Vec<f64> = (0..domain.dim())
            .map(|_| {
                let e: f64 = Exp1.sample(&mut rng);
                if rng.gen::<bool>() {
                    e
                } else {
                    -e
                }
            })
            .collect();
        let n = domain.norm_of(&x);
        if n == 0.0 {
            continue;
        }
        let value = t.codomain().norm_of(&t.apply_slice(&x)) / n;
        if value > best_value {
            x.iter_mut().for_each(|v| *v /= n);
            best_value = value;
            best_x = Some(x);
        }
    }
    let witness = match best_x {
        Some(x) => BlockVector::from_flat(domain.clone(), x).expect("finite sample"),
        None => basis_witness,
    };
    (best_value, witness)
}
