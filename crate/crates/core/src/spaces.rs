//! Finite mixed-norm sequence spaces `(⊕ᵢ ℓ₁^{nᵢ})_{ℓp}`.
//!
//! A [`SpaceSpec`] fixes the outer exponent and the block dimensions. A
//! [`BlockVector`] stores its coordinates contiguously, block after block.
//! The norm of a vector is the outer `ℓp` norm of the vector of block `ℓ₁`
//! norms.
//!
//! The Rust API uses zero-based block and coordinate indices. The textual
//! and JSON formats use one-based indices.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Above this total dimension, norm accumulation uses compensated summation.
const COMPENSATED_SUM_THRESHOLD: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Repr {
    Finite(f64),
    Inf,
}

/// An exponent `p ∈ [1, ∞]`. Infinity is a distinct variant, never a float sentinel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponent(Repr);

impl Exponent {
    pub const ONE: Exponent = Exponent(Repr::Finite(1.0));
    pub const TWO: Exponent = Exponent(Repr::Finite(2.0));
    pub const INF: Exponent = Exponent(Repr::Inf);

    /// A finite exponent. Fails unless `p` is a finite real with `p ≥ 1`.
    pub fn finite(p: f64) -> Result<Self> {
        if !p.is_finite() {
            return Err(Error::InvalidInput(format!(
                "finite exponent expected, got {p}"
            )));
        }
        if p < 1.0 {
            return Err(Error::InvalidInput("p must be ≥ 1".into()));
        }
        Ok(Exponent(Repr::Finite(p)))
    }

    /// The finite value, or `None` for infinity.
    pub fn value(self) -> Option<f64> {
        match self.0 {
            Repr::Finite(p) => Some(p),
            Repr::Inf => None,
        }
    }

    pub fn is_inf(self) -> bool {
        matches!(self.0, Repr::Inf)
    }

    pub fn is_one(self) -> bool {
        self.0 == Repr::Finite(1.0)
    }

    /// True for `1 < p < ∞`.
    pub fn is_intermediate(self) -> bool {
        matches!(self.0, Repr::Finite(p) if p > 1.0)
    }

    /// The conjugate exponent: `1 ↔ ∞`, otherwise `p/(p−1)`.
    pub fn dual(self) -> Exponent {
        match self.0 {
            Repr::Inf => Exponent::ONE,
            Repr::Finite(1.0) => Exponent::INF,
            Repr::Finite(p) => Exponent(Repr::Finite(p / (p - 1.0))),
        }
    }

    /// `ℓp` norm of a vector of nonnegative reals.
    pub(crate) fn combine(self, values: &[f64], compensated: bool) -> f64 {
        match self.0 {
            Repr::Inf => values.iter().copied().fold(0.0, f64::max),
            Repr::Finite(1.0) => sum(values.iter().copied(), compensated),
            Repr::Finite(p) => {
                let scale = values.iter().copied().fold(0.0, f64::max);
                if scale == 0.0 {
                    return 0.0;
                }
                let acc = sum(values.iter().map(|v| (v / scale).powf(p)), compensated);
                scale * acc.powf(1.0 / p)
            }
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Repr::Finite(p) => write!(f, "{p}"),
            Repr::Inf => f.write_str("inf"),
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(Exponent::INF);
        }
        let is_decimal = !s.is_empty()
            && s.chars()
                .all(|c| c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '+' | '-'));
        let p: f64 = match s.parse() {
            Ok(p) if is_decimal => p,
            _ => {
                return Err(Error::parse(
                    "p",
                    format!("expected a decimal number or `inf`, got `{s}`"),
                ))
            }
        };
        Exponent::finite(p).map_err(|e| match e {
            Error::InvalidInput(msg) => Error::parse("p", msg),
            other => other,
        })
    }
}

/// Plain or Neumaier-compensated summation.
pub(crate) fn sum(values: impl Iterator<Item = f64>, compensated: bool) -> f64 {
    if !compensated {
        return values.sum();
    }
    let mut total = 0.0f64;
    let mut carry = 0.0f64;
    for v in values {
        let t = total + v;
        if total.abs() >= v.abs() {
            carry += (total - t) + v;
        } else {
            carry += (v - t) + total;
        }
        total = t;
    }
    total + carry
}

/// Shape of a finite `ℓp`-sum of `ℓ₁` blocks.
#[derive(Debug, Clone)]
pub struct SpaceSpec {
    outer: Exponent,
    dims: Vec<usize>,
    offsets: Vec<usize>,
}

impl PartialEq for SpaceSpec {
    fn eq(&self, other: &Self) -> bool {
        self.outer == other.outer && self.dims == other.dims
    }
}

impl SpaceSpec {
    pub fn new(outer: Exponent, dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidInput(
                "a space needs at least one block".into(),
            ));
        }
        if let Some(pos) = dims.iter().position(|&n| n == 0) {
            return Err(Error::InvalidInput(format!(
                "block {} has dimension 0",
                pos + 1
            )));
        }
        let mut offsets = Vec::with_capacity(dims.len() + 1);
        let mut acc = 0usize;
        offsets.push(0);
        for &n in &dims {
            acc = acc
                .checked_add(n)
                .ok_or_else(|| Error::InvalidInput("total dimension overflows".into()))?;
            offsets.push(acc);
        }
        Ok(SpaceSpec {
            outer,
            dims,
            offsets,
        })
    }

    /// The single-block space `ℓ₁ⁿ`.
    pub fn l1(n: usize) -> Result<Self> {
        SpaceSpec::new(Exponent::ONE, vec![n])
    }

    pub fn outer(&self) -> Exponent {
        self.outer
    }

    pub fn with_outer(&self, outer: Exponent) -> Self {
        SpaceSpec {
            outer,
            ..self.clone()
        }
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_blocks(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self) -> usize {
        self.offsets[self.dims.len()]
    }

    pub fn block_dim(&self, block: usize) -> Result<usize> {
        self.dims
            .get(block)
            .copied()
            .ok_or_else(|| Error::range("block", block, self.dims.len()))
    }

    /// Flat coordinate range of a block.
    pub fn block_range(&self, block: usize) -> std::ops::Range<usize> {
        self.offsets[block]..self.offsets[block + 1]
    }

    /// Flat position of `(block, coord)`.
    pub fn flat_index(&self, block: usize, coord: usize) -> Result<usize> {
        let n = self.block_dim(block)?;
        if coord >= n {
            return Err(Error::range("coordinate", coord, n));
        }
        Ok(self.offsets[block] + coord)
    }

    pub(crate) fn compensated(&self) -> bool {
        self.dim() > COMPENSATED_SUM_THRESHOLD
    }

    /// Block `ℓ₁` norms of a flat coordinate slice.
    pub(crate) fn block_l1_norms(&self, coords: &[f64]) -> Vec<f64> {
        let compensated = self.compensated();
        (0..self.num_blocks())
            .map(|b| {
                sum(
                    coords[self.block_range(b)].iter().map(|v| v.abs()),
                    compensated,
                )
            })
            .collect()
    }

    /// Mixed norm of a flat coordinate slice of length `dim()`.
    pub fn norm_of(&self, coords: &[f64]) -> f64 {
        debug_assert_eq!(coords.len(), self.dim());
        self.outer
            .combine(&self.block_l1_norms(coords), self.compensated())
    }

    /// Writes a norming functional of `y` into `out`: a vector `u` with dual
    /// norm at most one and `⟨u, y⟩ = ‖y‖`. Leaves `out` zero when `y = 0`.
    pub(crate) fn norming_functional(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|u| *u = 0.0);
        let b = self.block_l1_norms(y);
        let weights: Vec<f64> = match self.outer.0 {
            Repr::Finite(1.0) => vec![1.0; b.len()],
            Repr::Inf => {
                let mut w = vec![0.0; b.len()];
                // lowest block among the maximal ones
                let mut best = 0;
                for (i, &v) in b.iter().enumerate() {
                    if v > b[best] {
                        best = i;
                    }
                }
                if b[best] > 0.0 {
                    w[best] = 1.0;
                }
                w
            }
            Repr::Finite(p) => {
                let total = self.outer.combine(&b, self.compensated());
                if total == 0.0 {
                    return;
                }
                b.iter().map(|&v| (v / total).powf(p - 1.0)).collect()
            }
        };
        for (block, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for k in self.block_range(block) {
                out[k] = w * sign(y[k]);
            }
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl fmt::Display for SpaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p={};blocks=", self.outer)?;
        for (i, n) in self.dims.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{n}")?;
        }
        Ok(())
    }
}

impl FromStr for SpaceSpec {
    type Err = Error;

    /// Parses `p=<decimal|inf>;blocks=<n1>,<n2>,...`.
    fn from_str(s: &str) -> Result<Self> {
        let mut outer = None;
        let mut dims = None;
        for part in s.split(';') {
            let part = part.trim();
            let (key, value) = part.split_once('=').ok_or_else(|| {
                Error::parse("space", format!("expected key=value, got `{part}`"))
            })?;
            match key.trim() {
                "p" => outer = Some(value.parse::<Exponent>()?),
                "blocks" => {
                    let parsed = value
                        .split(',')
                        .map(|tok| {
                            let tok = tok.trim();
                            match tok.parse::<usize>() {
                                Ok(0) => {
                                    Err(Error::parse("blocks", "block dimensions must be ≥ 1"))
                                }
                                Ok(n) => Ok(n),
                                Err(_) => Err(Error::parse(
                                    "blocks",
                                    format!("`{tok}` is not a positive integer"),
                                )),
                            }
                        })
                        .collect::<Result<Vec<_>>>()?;
                    dims = Some(parsed);
                }
                other => {
                    return Err(Error::parse("space", format!("unknown key `{other}`")));
                }
            }
        }
        let outer = outer.ok_or_else(|| Error::parse("p", "missing"))?;
        let dims = dims.ok_or_else(|| Error::parse("blocks", "missing"))?;
        SpaceSpec::new(outer, dims).map_err(|e| Error::parse("blocks", e.to_string()))
    }
}

/// Sign of a basis vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// An element of the space described by a [`SpaceSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    spec: SpaceSpec,
    data: Vec<f64>,
}

impl BlockVector {
    /// Builds a vector from per-block coordinate lists.
    pub fn new(spec: SpaceSpec, blocks: Vec<Vec<f64>>) -> Result<Self> {
        if blocks.len() != spec.num_blocks() {
            return Err(Error::Shape(format!(
                "expected {} blocks, got {}",
                spec.num_blocks(),
                blocks.len()
            )));
        }
        for (i, (blk, &n)) in blocks.iter().zip(spec.block_dims()).enumerate() {
            if blk.len() != n {
                return Err(Error::Shape(format!(
                    "block {} has length {}, expected {n}",
                    i + 1,
                    blk.len()
                )));
            }
        }
        BlockVector::from_flat(spec, blocks.into_iter().flatten().collect())
    }

    /// Builds a vector from its flat coordinates.
    pub fn from_flat(spec: SpaceSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != spec.dim() {
            return Err(Error::Shape(format!(
                "expected {} coordinates, got {}",
                spec.dim(),
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "coordinate {} is not finite",
                pos + 1
            )));
        }
        Ok(BlockVector { spec, data })
    }

    pub fn zeros(spec: SpaceSpec) -> Self {
        let data = vec![0.0; spec.dim()];
        BlockVector { spec, data }
    }

    /// The vector `sign · e_coord` placed in `block`.
    pub fn basis(spec: SpaceSpec, block: usize, coord: usize, sign: Sign) -> Result<Self> {
        let at = spec.flat_index(block, coord)?;
        let mut v = BlockVector::zeros(spec);
        v.data[at] = sign.value();
        Ok(v)
    }

    pub fn spec(&self) -> &SpaceSpec {
        &self.spec
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn block(&self, block: usize) -> Result<&[f64]> {
        self.spec.block_dim(block)?;
        Ok(&self.data[self.spec.block_range(block)])
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.spec.num_blocks()).map(move |b| &self.data[self.spec.block_range(b)])
    }

    /// The mixed norm `(Σᵢ ‖xᵢ‖₁^p)^{1/p}`, or `maxᵢ ‖xᵢ‖₁` for `p = ∞`.
    pub fn norm(&self) -> f64 {
        self.spec.norm_of(&self.data)
    }

    /// `a·x + b·y`.
    pub fn lincomb(a: f64, x: &BlockVector, b: f64, y: &BlockVector) -> Result<Self> {
        if x.spec != y.spec {
            return Err(Error::Shape(format!(
                "cannot combine vectors of `{}` and `{}`",
                x.spec, y.spec
            )));
        }
        let data = x
            .data
            .iter()
            .zip(&y.data)
            .map(|(u, v)| a * u + b * v)
            .collect();
        BlockVector::from_flat(x.spec.clone(), data)
    }

    /// `J_block x`: the same vector with one block negated.
    pub fn with_block_negated(&self, block: usize) -> Result<Self> {
        self.spec.block_dim(block)?;
        let mut out = self.clone();
        for v in &mut out.data[self.spec.block_range(block)] {
            *v = -*v;
        }
        Ok(out)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        BlockVector::from_flat(self.spec.clone(), self.data.iter().map(|v| c * v).collect())
    }
}
