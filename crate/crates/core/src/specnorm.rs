//! Norms: the deterministic spectral norm, the exact second-moment norm of a
//! random-sign family, and a Monte Carlo first-moment estimate.
//!
//! Independent signs kill every cross term, so
//! `𝔼‖T(σ)f‖² = ‖A₀f‖² + Σ_J ‖A_J f‖²`, a quadratic form whose top
//! eigenvalue gives the second-moment norm without sampling.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self_adjoint_evd, self_adjoint_evd_scratch, ComputeEigenvectors};
use faer::diag::Diag;
use faer::{Mat, Par};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::ensembles::trial_rng;
use crate::error::{Error, Result};
use crate::operators::{LinearOperator, RandomizedOperator};

/// Lane used for sign samples within a trial stream.
const SIGN_LANE: u8 = 2;

/// Largest piece count accepted by [`exhaustive_sign_average`].
pub const MAX_EXHAUSTIVE_PIECES: usize = 20;

/// Self-adjoint eigendecomposition, sequential so results do not depend on
/// the thread count. Eigenvalues come back in nondecreasing order.
fn symmetric_evd(sym: &DMatrix<f64>, vectors: bool) -> Option<(Vec<f64>, Option<Mat<f64>>)> {
    let n = sym.nrows();
    let a = Mat::from_fn(n, n, |i, j| sym[(i, j)]);
    let mut s = Diag::<f64>::zeros(n);
    let mut u = vectors.then(|| Mat::<f64>::zeros(n, n));
    let compute = if vectors { ComputeEigenvectors::Yes } else { ComputeEigenvectors::No };
    let mut buf = MemBuffer::new(self_adjoint_evd_scratch::<f64>(n, compute, Par::Seq, Default::default()));
    self_adjoint_evd(
        a.as_ref(),
        s.as_mut(),
        u.as_mut().map(|u| u.as_mut()),
        Par::Seq,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .ok()?;
    Some((s.column_vector().iter().copied().collect(), u))
}

fn lambda_max(sym: &DMatrix<f64>) -> f64 {
    if sym.nrows() == 0 {
        return 0.0;
    }
    let top = match symmetric_evd(sym, false) {
        Some((values, _)) => values.last().copied().unwrap_or(0.0),
        // Every matrix passed here is positive semidefinite.
        None => sym.singular_values().max(),
    };
    top.max(0.0)
}

/// Largest singular value.
pub fn operator_norm(a: &LinearOperator) -> Result<f64> {
    let m = a.matrix();
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("operator has non-finite entries".into()));
    }
    Ok(lambda_max(&(m.transpose() * m)).sqrt())
}

/// `A₀ᵀA₀ + Σ_J A_Jᵀ A_J`.
pub fn gram_sum(r: &RandomizedOperator) -> DMatrix<f64> {
    let n = r.dim();
    let mut g = match r.base() {
        Some(b) => b.transpose() * b,
        None => DMatrix::zeros(n, n),
    };
    for p in r.pieces() {
        let inner = p.left.transpose() * &p.left;
        let right = &p.right;
        if right.ncols() == 1 {
            // Rank one: ‖left‖² · right rightᵀ.
            g.ger(inner[(0, 0)], &right.column(0), &right.column(0), 1.0);
        } else {
            g += right * inner * right.transpose();
        }
    }
    g
}

/// `√λ_max` of the Gram sum.
pub fn second_moment_norm(r: &RandomizedOperator) -> f64 {
    lambda_max(&gram_sum(r)).sqrt()
}

/// Largest eigenvalue and a unit eigenvector of a symmetric matrix.
pub fn top_eigenpair(sym: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let n = sym.nrows();
    if n == 0 {
        return Err(Error::Shape { expected: 1, actual: 0 });
    }
    let (values, u) = symmetric_evd(sym, true).ok_or_else(|| Error::Numeric("eigensolver did not converge".into()))?;
    let u = u.expect("eigenvectors requested");
    Ok((values[n - 1], DVector::from_fn(n, |i, _| u[(i, n - 1)])))
}

fn check_len(r: &RandomizedOperator, f: &DVector<f64>) -> Result<()> {
    if f.len() != r.dim() {
        return Err(Error::Shape {
            expected: r.dim(),
            actual: f.len(),
        });
    }
    Ok(())
}

/// `‖A₀f‖² + Σ_J ‖A_J f‖²` at a fixed vector, in Euclidean norms
/// (multiply by the cell width for `L²` values).
pub fn second_moment_at(r: &RandomizedOperator, f: &DVector<f64>) -> Result<f64> {
    check_len(r, f)?;
    let base = r.base().map_or(0.0, |b| (b * f).norm_squared());
    Ok(base + r.pieces().iter().map(|p| p.apply(f).norm_squared()).sum::<f64>())
}

/// Average of `‖T(σ)f‖²` over all `2^m` sign patterns.
pub fn exhaustive_sign_average(r: &RandomizedOperator, f: &DVector<f64>) -> Result<f64> {
    check_len(r, f)?;
    let m = r.piece_count();
    if m > MAX_EXHAUSTIVE_PIECES {
        return Err(Error::Precondition(format!(
            "{m} pieces exceed the exhaustive limit of {MAX_EXHAUSTIVE_PIECES}"
        )));
    }
    let base = r.base().map_or_else(|| DVector::zeros(f.len()), |b| b * f);
    let images: Vec<DVector<f64>> = r.pieces().iter().map(|p| p.apply(f)).collect();
    let patterns = 1u64 << m;
    let total: f64 = (0..patterns)
        .map(|mask| {
            let mut v = base.clone();
            for (j, img) in images.iter().enumerate() {
                let s = if mask >> j & 1 == 1 { 1.0 } else { -1.0 };
                v.axpy(s, img, 1.0);
            }
            v.norm_squared()
        })
        .sum();
    Ok(total / patterns as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

/// Mean of `‖T(σ)f*‖` over sampled signs, `f*` the top Gram eigenvector.
///
/// A lower estimate of `sup_f 𝔼‖T(σ)f‖`, and at most the second-moment
/// norm up to sampling error.
pub fn mc_first_moment_norm(r: &RandomizedOperator, trials: usize, seed: u64) -> Result<MomentEstimate> {
    if trials == 0 {
        return Err(Error::Precondition("trials must be at least 1".into()));
    }
    if r.dim() == 0 {
        return Err(Error::Shape { expected: 1, actual: 0 });
    }
    let (_, f) = top_eigenpair(&gram_sum(r))?;
    let base = r.base().map_or_else(|| DVector::zeros(f.len()), |b| b * &f);
    let images: Vec<DVector<f64>> = r.pieces().iter().map(|p| p.apply(&f)).collect();
    let samples: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t, SIGN_LANE);
            let mut v = base.clone();
            for img in &images {
                let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                v.axpy(s, img, 1.0);
            }
            v.norm()
        })
        .collect();
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let stderr = if samples.len() > 1 {
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(MomentEstimate { mean, stderr, trials })
}
