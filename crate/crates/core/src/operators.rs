//! Block operators between mixed-norm spaces and the constructions built on
//! them: the rank-one embedding of `ℓ₁ⁿ` into `B(ℓ₁ⁿ)`, the diagonal embedding
//! `Δ`, its left inverse `Ξ`, block sign flips and the averaging recursion
//! that clears off-diagonal blocks one row/column pair at a time.
//!
//! An operator is stored as one dense `codomain.dim() × domain.dim()` matrix;
//! the grid entry `T_ij` is the sub-matrix cut out by codomain block `i` and
//! domain block `j`.

use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::spaces::{BlockVector, Exponent, SpaceSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct BlockOperator {
    domain: SpaceSpec,
    codomain: SpaceSpec,
    matrix: Array2<f64>,
}

impl BlockOperator {
    pub fn zeros(domain: SpaceSpec, codomain: SpaceSpec) -> Self {
        let matrix = Array2::zeros((codomain.dim(), domain.dim()));
        BlockOperator {
            domain,
            codomain,
            matrix,
        }
    }

    pub fn identity(spec: SpaceSpec) -> Self {
        let matrix = Array2::eye(spec.dim());
        BlockOperator {
            domain: spec.clone(),
            codomain: spec,
            matrix,
        }
    }

    /// Wraps a dense matrix; fails on a shape mismatch or a non-finite entry.
    pub fn from_dense(domain: SpaceSpec, codomain: SpaceSpec, matrix: Array2<f64>) -> Result<Self> {
        if matrix.dim() != (codomain.dim(), domain.dim()) {
            return Err(Error::Shape(format!(
                "matrix is {}×{}, spaces need {}×{}",
                matrix.nrows(),
                matrix.ncols(),
                codomain.dim(),
                domain.dim()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "operator has a non-finite entry".into(),
            ));
        }
        Ok(BlockOperator {
            domain,
            codomain,
            matrix,
        })
    }

    /// Overwrites grid entry `(i, j)`.
    pub fn set_block(&mut self, i: usize, j: usize, block: ArrayView2<f64>) -> Result<()> {
        let rows = self.codomain.block_dim(i)?;
        let cols = self.domain.block_dim(j)?;
        if block.dim() != (rows, cols) {
            return Err(Error::Shape(format!(
                "entry ({}, {}) must be {rows}×{cols}, got {}×{}",
                i + 1,
                j + 1,
                block.nrows(),
                block.ncols()
            )));
        }
        if block.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "entry ({}, {}) has a non-finite value",
                i + 1,
                j + 1
            )));
        }
        let (r, c) = (self.codomain.block_range(i), self.domain.block_range(j));
        self.matrix.slice_mut(s![r, c]).assign(&block);
        Ok(())
    }

    pub fn domain(&self) -> &SpaceSpec {
        &self.domain
    }

    pub fn codomain(&self) -> &SpaceSpec {
        &self.codomain
    }

    pub fn dense(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    /// Grid entry `T_ij`.
    pub fn block(&self, i: usize, j: usize) -> Result<ArrayView2<'_, f64>> {
        self.codomain.block_dim(i)?;
        self.domain.block_dim(j)?;
        let (r, c) = (self.codomain.block_range(i), self.domain.block_range(j));
        Ok(self.matrix.slice(s![r, c]))
    }

    /// Same domain and codomain.
    pub fn is_endomorphism(&self) -> bool {
        self.domain == self.codomain
    }

    fn require_endomorphism(&self) -> Result<()> {
        if self.is_endomorphism() {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "operator must act on a single space, got `{}` -> `{}`",
                self.domain, self.codomain
            )))
        }
    }

    /// Same operator measured in other spaces with identical block dimensions.
    pub fn with_spaces(&self, domain: SpaceSpec, codomain: SpaceSpec) -> Result<Self> {
        if domain.block_dims() != self.domain.block_dims()
            || codomain.block_dims() != self.codomain.block_dims()
        {
            return Err(Error::Shape(format!(
                "block dimensions of `{domain}` -> `{codomain}` do not match `{}` -> `{}`",
                self.domain, self.codomain
            )));
        }
        Ok(BlockOperator {
            domain,
            codomain,
            matrix: self.matrix.clone(),
        })
    }

    /// Block `i` of the result is `Σ_j T_ij x_j`.
    pub fn apply(&self, x: &BlockVector) -> Result<BlockVector> {
        if x.spec() != &self.domain {
            return Err(Error::Shape(format!(
                "vector lives in `{}`, operator domain is `{}`",
                x.spec(),
                self.domain
            )));
        }
        let image = self.apply_slice(x.as_slice());
        BlockVector::from_flat(self.codomain.clone(), image)
    }

    pub(crate) fn apply_slice(&self, x: &[f64]) -> Vec<f64> {
        self.matrix
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Image of the flat basis vector `e_k` of the domain.
    pub(crate) fn column(&self, k: usize) -> Vec<f64> {
        self.matrix.column(k).to_vec()
    }

    /// Entrywise `a·A + b·B`.
    pub fn lincomb(a: f64, lhs: &BlockOperator, b: f64, rhs: &BlockOperator) -> Result<Self> {
        if lhs.domain != rhs.domain || lhs.codomain != rhs.codomain {
            return Err(Error::Shape(format!(
                "cannot combine `{}` -> `{}` with `{}` -> `{}`",
                lhs.domain, lhs.codomain, rhs.domain, rhs.codomain
            )));
        }
        let mut matrix = lhs.matrix.clone();
        matrix.zip_mut_with(&rhs.matrix, |u, &v| *u = a * *u + b * v);
        BlockOperator::from_dense(lhs.domain.clone(), lhs.codomain.clone(), matrix)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        BlockOperator::from_dense(
            self.domain.clone(),
            self.codomain.clone(),
            self.matrix.mapv(|v| c * v),
        )
    }

    /// Negates every grid entry in block column `j`, i.e. `T ∘ J_j`.
    pub fn flip_block_column(&self, j: usize) -> Result<Self> {
        self.domain.block_dim(j)?;
        let mut out = self.clone();
        out.matrix
            .slice_mut(s![.., self.domain.block_range(j)])
            .mapv_inplace(|v| -v);
        Ok(out)
    }

    /// Negates every grid entry in block row `i`, i.e. `J_i ∘ T`.
    pub fn flip_block_row(&self, i: usize) -> Result<Self> {
        self.codomain.block_dim(i)?;
        let mut out = self.clone();
        out.matrix
            .slice_mut(s![self.codomain.block_range(i), ..])
            .mapv_inplace(|v| -v);
        Ok(out)
    }
}

fn require_single_block(spec: &SpaceSpec, what: &str) -> Result<usize> {
    match spec.block_dims() {
        [n] => Ok(*n),
        dims => Err(Error::Shape(format!(
            "{what} must be a single ℓ₁ block, got {} blocks",
            dims.len()
        ))),
    }
}

/// `a ↦ Σ_k a_k e_k ⊗ e₁*`: the operator on `ℓ₁ⁿ` whose first column is `a`.
pub fn embed_l1(a: &BlockVector) -> Result<BlockOperator> {
    let n = require_single_block(a.spec(), "embedded vector")?;
    let mut matrix = Array2::zeros((n, n));
    matrix
        .column_mut(0)
        .assign(&ndarray::ArrayView1::from(a.as_slice()));
    BlockOperator::from_dense(a.spec().clone(), a.spec().clone(), matrix)
}

/// `T ↦ T e₁`, the norm-one left inverse of [`embed_l1`].
pub fn first_column(t: &BlockOperator) -> Result<BlockVector> {
    require_single_block(t.domain(), "operator domain")?;
    require_single_block(t.codomain(), "operator codomain")?;
    t.require_endomorphism()?;
    BlockVector::from_flat(t.codomain().clone(), t.column(0))
}

/// `Δ(T₁, …, T_m) = diag(T₁, …, T_m)` acting on `(⊕ᵢ ℓ₁^{nᵢ})_{outer}`.
///
/// Each `Tᵢ` must be a square single-block operator; its own outer exponent
/// is irrelevant for a single block and is ignored.
pub fn delta(blocks: &[BlockOperator], outer: Exponent) -> Result<BlockOperator> {
    let mut dims = Vec::with_capacity(blocks.len());
    for (i, b) in blocks.iter().enumerate() {
        let rows = require_single_block(b.codomain(), "diagonal block codomain")?;
        let cols = require_single_block(b.domain(), "diagonal block domain")?;
        if rows != cols {
            return Err(Error::Shape(format!(
                "diagonal block {} is {rows}×{cols}, expected square",
                i + 1
            )));
        }
        dims.push(rows);
    }
    let spec = SpaceSpec::new(outer, dims)?;
    let mut out = BlockOperator::zeros(spec.clone(), spec);
    for (i, b) in blocks.iter().enumerate() {
        out.set_block(i, i, b.dense())?;
    }
    Ok(out)
}

/// `Ξ(T) = (T₁₁, …, T_mm)`, each returned as an operator on `ℓ₁^{nᵢ}`.
pub fn xi(t: &BlockOperator) -> Result<Vec<BlockOperator>> {
    t.require_endomorphism()?;
    (0..t.domain().num_blocks())
        .map(|i| {
            let spec = SpaceSpec::l1(t.domain().block_dims()[i])?;
            BlockOperator::from_dense(spec.clone(), spec, t.block(i, i)?.to_owned())
        })
        .collect()
}

/// `(T_k + T_r)/2` with the column and row flips taken at block `idx`.
///
/// The result keeps `T` outside row and column `idx`, negates `T_{idx,idx}`
/// and zeroes the rest of that row and column.
pub fn tong_step(t: &BlockOperator, idx: usize) -> Result<BlockOperator> {
    t.require_endomorphism()?;
    let by_column = t.flip_block_column(idx)?;
    let by_row = t.flip_block_row(idx)?;
    BlockOperator::lincomb(0.5, &by_column, 0.5, &by_row)
}

/// The operators `S⁽¹⁾, …, S⁽ᵐ⁾` with `S⁽¹⁾ = tong_step(T, 1)` and
/// `S⁽ⁿ⁺¹⁾ = tong_step(S⁽ⁿ⁾, n+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TongTrace {
    pub source: BlockOperator,
    pub steps: Vec<BlockOperator>,
}

pub fn tong_sequence(t: &BlockOperator) -> Result<TongTrace> {
    t.require_endomorphism()?;
    let mut steps: Vec<BlockOperator> = Vec::with_capacity(t.domain().num_blocks());
    for idx in 0..t.domain().num_blocks() {
        let next = tong_step(steps.last().unwrap_or(t), idx)?;
        steps.push(next);
    }
    Ok(TongTrace {
        source: t.clone(),
        steps,
    })
}

/// What grid entry `(i, j)` of `S⁽ⁿ⁾` must equal, in terms of the source `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockPattern {
    /// `−T_ii`
    Negated,
    Zero,
    /// `T_ij` unchanged
    Original,
}

impl BlockPattern {
    /// Pattern of `S⁽ⁿ⁾` where `cleared` is `n` (zero-based blocks `< n` are done).
    pub fn expected(cleared: usize, i: usize, j: usize) -> Self {
        if i < cleared || j < cleared {
            if i == j {
                BlockPattern::Negated
            } else {
                BlockPattern::Zero
            }
        } else {
            BlockPattern::Original
        }
    }

    pub fn symbol(self) -> char {
        match self {
            BlockPattern::Negated => 'D',
            BlockPattern::Zero => '0',
            BlockPattern::Original => 'T',
        }
    }
}

/// A grid entry of a trace step that departs from its expected pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementDefect {
    /// Zero-based step index; the step is `S⁽ˢᵗᵉᵖ⁺¹⁾`.
    pub step: usize,
    pub i: usize,
    pub j: usize,
    pub expected: BlockPattern,
    /// Largest absolute entry deviation from the expected block.
    pub deviation: f64,
}

impl TongTrace {
    /// Entrywise comparison of every step against its expected pattern.
    ///
    /// `Zero` entries must be exactly zero; `Negated` and `Original` entries
    /// may deviate by at most `copy_tol` in absolute value.
    pub fn agreement_defects(&self, copy_tol: f64) -> Vec<AgreementDefect> {
        let m = self.source.domain().num_blocks();
        let mut defects = Vec::new();
        for (step, s_n) in self.steps.iter().enumerate() {
            for i in 0..m {
                for j in 0..m {
                    let expected = BlockPattern::expected(step + 1, i, j);
                    let got = s_n.block(i, j).expect("grid index in range");
                    let src = self.source.block(i, j).expect("grid index in range");
                    let deviation = got
                        .iter()
                        .zip(src.iter())
                        .map(|(&g, &t)| match expected {
                            BlockPattern::Zero => g.abs(),
                            BlockPattern::Negated => (g + t).abs(),
                            BlockPattern::Original => (g - t).abs(),
                        })
                        .fold(0.0, |acc: f64, d| {
                            if d.is_nan() {
                                f64::INFINITY
                            } else {
                                acc.max(d)
                            }
                        });
                    let tol = if expected == BlockPattern::Zero {
                        0.0
                    } else {
                        copy_tol
                    };
                    if deviation > tol {
                        defects.push(AgreementDefect {
                            step,
                            i,
                            j,
                            expected,
                            deviation,
                        });
                    }
                }
            }
        }
        defects
    }
}
