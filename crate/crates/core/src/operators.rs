//! Paraproducts, multiplication operators, Haar multipliers and their
//! compositions, realized as dense matrices acting on cell values.
//!
//! A rank-one term `u ⊗ v` (the map `f ↦ ⟨f, v⟩ u`) has matrix `2^-L u vᵀ`.
//! Because the inner-product weight is uniform, adjoints are transposes and
//! operator norms are plain spectral norms of these matrices.
//!
//! Random-sign families are kept as `A₀ + Σ_J σ_J A_J` with each piece held
//! in factored form `A_J = left · rightᵀ`; every piece built here is rank one.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dyadic::{haar_function, DyadicInterval, GridFunction, HaarKind, TruncatedGrid};
use crate::error::{Error, Result};
use crate::symbols::{coeffs_from_function, CoefSequence};

/// Largest depth for which dense `2^L × 2^L` operators are built.
pub const MAX_DENSE_DEPTH: u32 = 11;

pub(crate) fn require_dense(grid: &TruncatedGrid) -> Result<()> {
    if grid.depth() > MAX_DENSE_DEPTH {
        return Err(Error::Bounds {
            depth: grid.depth(),
            min: 1,
            max: MAX_DENSE_DEPTH,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator {
    matrix: DMatrix<f64>,
}

impl LinearOperator {
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Shape {
                expected: matrix.nrows(),
                actual: matrix.ncols(),
            });
        }
        Ok(Self { matrix })
    }

    pub fn identity(grid: &TruncatedGrid) -> Self {
        Self {
            matrix: DMatrix::identity(grid.cells(), grid.cells()),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        if f.len() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                actual: f.len(),
            });
        }
        let v = &self.matrix * DVector::from_column_slice(f.values());
        Ok(GridFunction::new(v.as_slice().to_vec()))
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.transpose(),
        }
    }

    /// `self ∘ inner`.
    pub fn then_after(&self, inner: &Self) -> Result<Self> {
        check_dims(self.dim(), inner.dim())?;
        Ok(Self {
            matrix: &self.matrix * &inner.matrix,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self {
            matrix: &self.matrix + &other.matrix,
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: &self.matrix * factor,
        }
    }

    /// Largest entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.matrix
            .iter()
            .zip(other.matrix.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Shape {
            expected: a,
            actual: b,
        })
    }
}

/// A choice of `±1` for every interval of `D_L`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignAssignment {
    depth: u32,
    signs: Vec<i8>,
}

impl SignAssignment {
    pub fn all_plus(depth: u32) -> Self {
        Self {
            depth,
            signs: vec![1; (1usize << depth) - 1],
        }
    }

    pub fn from_fn(depth: u32, f: impl Fn(DyadicInterval) -> bool) -> Self {
        let n = (1usize << depth) - 1;
        Self {
            depth,
            signs: (0..n)
                .map(|idx| if f(DyadicInterval::from_index(idx)) { 1 } else { -1 })
                .collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(depth: u32, rng: &mut R) -> Self {
        let n = (1usize << depth) - 1;
        Self {
            depth,
            signs: (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect(),
        }
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn get(&self, interval: &DyadicInterval) -> f64 {
        f64::from(self.signs[interval.index()])
    }

    pub fn negated(&self) -> Self {
        Self {
            depth: self.depth,
            signs: self.signs.iter().map(|s| -s).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SignMode {
    /// Every term carries `+1`.
    Deterministic,
    Fixed(SignAssignment),
    /// Independent uniform signs, kept symbolic.
    Randomized,
}

/// `Σ_I s_I b_I h^{output}_I ⊗ h^{input}_I`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParaproductSpec {
    pub output: HaarKind,
    pub input: HaarKind,
    pub symbol: CoefSequence,
    pub signs: SignMode,
}

impl ParaproductSpec {
    pub fn new(output: HaarKind, input: HaarKind, symbol: CoefSequence) -> Self {
        Self {
            output,
            input,
            symbol,
            signs: SignMode::Deterministic,
        }
    }

    pub fn with_signs(mut self, signs: SignAssignment) -> Self {
        self.signs = SignMode::Fixed(signs);
        self
    }

    pub fn randomized(mut self) -> Self {
        self.signs = SignMode::Randomized;
        self
    }

    pub fn is_randomized(&self) -> bool {
        matches!(self.signs, SignMode::Randomized)
    }

    pub fn adjoint(&self) -> Self {
        Self {
            output: self.input,
            input: self.output,
            ..self.clone()
        }
    }

    fn check(&self, grid: &TruncatedGrid) -> Result<()> {
        if self.symbol.depth() != grid.depth() {
            return Err(Error::DepthMismatch {
                left: self.symbol.depth(),
                right: grid.depth(),
            });
        }
        if let SignMode::Fixed(s) = &self.signs {
            if s.depth() != grid.depth() {
                return Err(Error::DepthMismatch {
                    left: s.depth(),
                    right: grid.depth(),
                });
            }
        }
        require_dense(grid)
    }
}

/// One signed term `A_J = left · rightᵀ` of a randomized operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub interval: DyadicInterval,
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
}

impl Piece {
    pub fn rank_one(interval: DyadicInterval, left: DVector<f64>, right: DVector<f64>) -> Self {
        let n = left.len();
        Self {
            interval,
            left: DMatrix::from_column_slice(n, 1, left.as_slice()),
            right: DMatrix::from_column_slice(n, 1, right.as_slice()),
        }
    }

    pub fn from_operator(interval: DyadicInterval, op: &LinearOperator) -> Self {
        Self {
            interval,
            left: op.matrix.clone(),
            right: DMatrix::identity(op.dim(), op.dim()),
        }
    }

    pub fn to_operator(&self) -> LinearOperator {
        LinearOperator {
            matrix: &self.left * self.right.transpose(),
        }
    }

    pub fn apply(&self, f: &DVector<f64>) -> DVector<f64> {
        &self.left * (self.right.transpose() * f)
    }

    fn adjoint(&self) -> Self {
        Self {
            interval: self.interval,
            left: self.right.clone(),
            right: self.left.clone(),
        }
    }
}

/// `T(σ) = A₀ + Σ_J σ_J A_J`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomizedOperator {
    dim: usize,
    base: Option<DMatrix<f64>>,
    pieces: Vec<Piece>,
}

impl RandomizedOperator {
    pub fn new(dim: usize, base: Option<LinearOperator>, pieces: Vec<Piece>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &pieces {
            if !seen.insert(p.interval) {
                return Err(Error::Precondition(format!(
                    "piece interval {} repeated",
                    p.interval
                )));
            }
            if p.left.nrows() != dim || p.right.nrows() != dim || p.left.ncols() != p.right.ncols() {
                return Err(Error::Shape {
                    expected: dim,
                    actual: p.left.nrows(),
                });
            }
        }
        if let Some(b) = &base {
            check_dims(dim, b.dim())?;
        }
        Ok(Self {
            dim,
            base: base.map(LinearOperator::into_matrix),
            pieces,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn base(&self) -> Option<&DMatrix<f64>> {
        self.base.as_ref()
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    /// Fixes the signs; intervals without a piece are ignored.
    pub fn realize(&self, signs: &SignAssignment) -> LinearOperator {
        self.realize_with(|i| signs.get(i))
    }

    pub fn realize_with(&self, sign: impl Fn(&DyadicInterval) -> f64) -> LinearOperator {
        let mut m = self
            .base
            .clone()
            .unwrap_or_else(|| DMatrix::zeros(self.dim, self.dim));
        for p in &self.pieces {
            m += (&p.left * p.right.transpose()) * sign(&p.interval);
        }
        LinearOperator { matrix: m }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            dim: self.dim,
            base: self.base.as_ref().map(|b| b.transpose()),
            pieces: self.pieces.iter().map(Piece::adjoint).collect(),
        }
    }

    /// `outer ∘ self`.
    fn after(&self, outer: &LinearOperator) -> Self {
        Self {
            dim: self.dim,
            base: self.base.as_ref().map(|b| &outer.matrix * b),
            pieces: self
                .pieces
                .iter()
                .map(|p| Piece {
                    interval: p.interval,
                    left: &outer.matrix * &p.left,
                    right: p.right.clone(),
                })
                .collect(),
        }
    }

    /// `self ∘ inner`.
    fn before(&self, inner: &LinearOperator) -> Self {
        let inner_t = inner.matrix.transpose();
        Self {
            dim: self.dim,
            base: self.base.as_ref().map(|b| b * &inner.matrix),
            pieces: self
                .pieces
                .iter()
                .map(|p| Piece {
                    interval: p.interval,
                    left: p.left.clone(),
                    right: &inner_t * &p.right,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    Fixed(LinearOperator),
    Randomized(RandomizedOperator),
}

impl Operator {
    pub fn dim(&self) -> usize {
        match self {
            Self::Fixed(a) => a.dim(),
            Self::Randomized(r) => r.dim(),
        }
    }

    pub fn adjoint(&self) -> Self {
        match self {
            Self::Fixed(a) => Self::Fixed(a.adjoint()),
            Self::Randomized(r) => Self::Randomized(r.adjoint()),
        }
    }

    pub fn into_randomized(self) -> RandomizedOperator {
        match self {
            Self::Fixed(a) => RandomizedOperator {
                dim: a.dim(),
                base: Some(a.matrix),
                pieces: Vec::new(),
            },
            Self::Randomized(r) => r,
        }
    }
}

/// `outer ∘ inner`; at most one side may carry random signs.
pub fn compose(outer: &Operator, inner: &Operator) -> Result<Operator> {
    check_dims(outer.dim(), inner.dim())?;
    match (outer, inner) {
        (Operator::Fixed(a), Operator::Fixed(b)) => Ok(Operator::Fixed(a.then_after(b)?)),
        (Operator::Fixed(a), Operator::Randomized(r)) => Ok(Operator::Randomized(r.after(a))),
        (Operator::Randomized(r), Operator::Fixed(b)) => Ok(Operator::Randomized(r.before(b))),
        (Operator::Randomized(_), Operator::Randomized(_)) => Err(Error::UnsupportedComposition),
    }
}

fn kind_vector(grid: &TruncatedGrid, i: &DyadicInterval, kind: HaarKind) -> Result<DVector<f64>> {
    Ok(DVector::from_vec(haar_function(grid, i, kind)?.into_values()))
}

/// Fixed-sign (or unsigned) paraproduct as a dense matrix.
pub fn paraproduct(grid: &TruncatedGrid, desc: &ParaproductSpec) -> Result<LinearOperator> {
    desc.check(grid)?;
    let n = grid.cells();
    let w = grid.cell_width();
    let mut m = DMatrix::zeros(n, n);
    for (i, b) in desc.symbol.nonzero() {
        let sign = match &desc.signs {
            SignMode::Deterministic => 1.0,
            SignMode::Fixed(s) => s.get(&i),
            SignMode::Randomized => {
                return Err(Error::Precondition(
                    "signs are randomized: use randomized_paraproduct".into(),
                ))
            }
        };
        let u = haar_function(grid, &i, desc.output)?;
        let v = haar_function(grid, &i, desc.input)?;
        // Both legs are supported on I, so only that block is touched.
        let range = grid.cell_range(&i);
        let c = sign * b * w;
        for r in range.clone() {
            let ur = c * u.values()[r];
            for col in range.clone() {
                m[(r, col)] += ur * v.values()[col];
            }
        }
    }
    Ok(LinearOperator { matrix: m })
}

/// One piece `b_I h^{output}_I ⊗ h^{input}_I` per nonzero `b_I`, no deterministic part.
pub fn randomized_paraproduct(
    grid: &TruncatedGrid,
    desc: &ParaproductSpec,
) -> Result<RandomizedOperator> {
    desc.check(grid)?;
    if !desc.is_randomized() {
        return Err(Error::Precondition(
            "signs are not randomized: use paraproduct".into(),
        ));
    }
    let w = grid.cell_width();
    let pieces = desc
        .symbol
        .nonzero()
        .map(|(i, b)| {
            Ok(Piece::rank_one(
                i,
                kind_vector(grid, &i, desc.output)? * (b * w),
                kind_vector(grid, &i, desc.input)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    RandomizedOperator::new(grid.cells(), None, pieces)
}

/// Dispatches on the sign mode.
pub fn build(grid: &TruncatedGrid, desc: &ParaproductSpec) -> Result<Operator> {
    if desc.is_randomized() {
        randomized_paraproduct(grid, desc).map(Operator::Randomized)
    } else {
        paraproduct(grid, desc).map(Operator::Fixed)
    }
}

/// `M_b φ = b · φ`.
pub fn multiplication(grid: &TruncatedGrid, b: &GridFunction) -> Result<LinearOperator> {
    require_dense(grid)?;
    grid.check(b)?;
    Ok(LinearOperator {
        matrix: DMatrix::from_diagonal(&DVector::from_column_slice(b.values())),
    })
}

/// `Σ_I s_I h_I ⊗ h_I` over `D_L`.
pub fn haar_multiplier(grid: &TruncatedGrid, mode: &SignMode) -> Result<Operator> {
    let ones = CoefSequence::from_values(grid.depth(), vec![1.0; grid.interval_count()])?;
    let desc = ParaproductSpec {
        output: HaarKind::Haar,
        input: HaarKind::Haar,
        symbol: ones,
        signs: mode.clone(),
    };
    build(grid, &desc)
}

/// Moves the random Haar multiplier onto the outer paraproduct's Haar input leg:
/// `P_outer T_σ P_inner = P^σ_outer P_inner`.
pub fn absorb_signs(
    grid: &TruncatedGrid,
    outer: &ParaproductSpec,
    inner: &ParaproductSpec,
) -> Result<RandomizedOperator> {
    if outer.input != HaarKind::Haar {
        return Err(Error::RuleNotApplicable);
    }
    let signed = randomized_paraproduct(grid, &outer.clone().randomized())?;
    let rest = paraproduct(grid, inner)?;
    Ok(compose(&Operator::Randomized(signed), &Operator::Fixed(rest))?.into_randomized())
}

/// Mirror rule: the multiplier lands on the inner paraproduct's Haar output leg,
/// `P_outer T_σ P_inner = P_outer P^σ_inner`.
pub fn absorb_signs_inward(
    grid: &TruncatedGrid,
    outer: &ParaproductSpec,
    inner: &ParaproductSpec,
) -> Result<RandomizedOperator> {
    if inner.output != HaarKind::Haar {
        return Err(Error::RuleNotApplicable);
    }
    let rest = paraproduct(grid, outer)?;
    let signed = randomized_paraproduct(grid, &inner.clone().randomized())?;
    Ok(compose(&Operator::Fixed(rest), &Operator::Randomized(signed))?.into_randomized())
}

/// `M_b φ = P^{0,1}_{b⁰}φ + P^{1,0}_{b⁰}φ + P^{0,0}_{b¹}φ + ⟨b⟩⟨φ⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplicationExpansion {
    /// Haar output, indicator input, symbol `b⁰`.
    pub haar_out: ParaproductSpec,
    /// Indicator output, Haar input, symbol `b⁰`.
    pub indicator_out: ParaproductSpec,
    /// Haar on both legs, symbol `b¹`.
    pub diagonal: ParaproductSpec,
    /// `⟨b⟩`; multiplies `⟨φ⟩ · 1`.
    pub mean: f64,
}

impl MultiplicationExpansion {
    pub fn terms(&self) -> [&ParaproductSpec; 3] {
        [&self.haar_out, &self.indicator_out, &self.diagonal]
    }

    pub fn apply(&self, grid: &TruncatedGrid, phi: &GridFunction) -> Result<GridFunction> {
        let mut out = grid.constant(self.mean * phi.mean());
        for desc in self.terms() {
            out.add_scaled(&paraproduct(grid, desc)?.apply(phi)?, 1.0);
        }
        Ok(out)
    }
}

pub fn expand_multiplication(grid: &TruncatedGrid, b: &GridFunction) -> Result<MultiplicationExpansion> {
    let b0 = coeffs_from_function(grid, b, HaarKind::Haar)?;
    let b1 = coeffs_from_function(grid, b, HaarKind::Indicator)?;
    Ok(MultiplicationExpansion {
        haar_out: ParaproductSpec::new(HaarKind::Haar, HaarKind::Indicator, b0.clone()),
        indicator_out: ParaproductSpec::new(HaarKind::Indicator, HaarKind::Haar, b0),
        diagonal: ParaproductSpec::new(HaarKind::Haar, HaarKind::Haar, b1),
        mean: b.mean(),
    })
}
