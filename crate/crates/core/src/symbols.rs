//! Symbol sequences `{b_I}` on the truncated grid and the Carleson-type
//! functionals that characterize paraproduct compositions.
//!
//! Every supremum ranges over `J ∈ D_L`. Tree sums are computed in a single
//! bottom-up (or top-down) pass over the canonical layout.

use serde::{Deserialize, Serialize};

use crate::dyadic::{
    haar_coefficients, haar_synthesis, local_square_integrals, make_grid, DyadicInterval,
    GridFunction, HaarKind, TruncatedGrid,
};
use crate::error::{Error, Result};

/// Real coefficients indexed by `D_L`; intervals without an entry are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefSequence {
    depth: u32,
    values: Vec<f64>,
}

impl CoefSequence {
    pub fn zeros(depth: u32) -> Result<Self> {
        let grid = make_grid(depth)?;
        Ok(Self {
            depth,
            values: vec![0.0; grid.interval_count()],
        })
    }

    /// Rejects intervals outside `D_L` and repeated intervals.
    pub fn from_entries(
        depth: u32,
        entries: impl IntoIterator<Item = (DyadicInterval, f64)>,
    ) -> Result<Self> {
        let mut seq = Self::zeros(depth)?;
        let mut seen = vec![false; seq.values.len()];
        for (interval, value) in entries {
            if interval.level() >= depth {
                return Err(Error::Resolution { interval, depth });
            }
            let idx = interval.index();
            if std::mem::replace(&mut seen[idx], true) {
                return Err(Error::Precondition(format!("duplicate entry for {interval}")));
            }
            seq.values[idx] = value;
        }
        Ok(seq)
    }

    /// Canonical-order values; the length must be `2^depth - 1`.
    pub fn from_values(depth: u32, values: Vec<f64>) -> Result<Self> {
        let grid = make_grid(depth)?;
        if values.len() != grid.interval_count() {
            return Err(Error::Shape {
                expected: grid.interval_count(),
                actual: values.len(),
            });
        }
        Ok(Self { depth, values })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, interval: &DyadicInterval) -> f64 {
        if interval.level() < self.depth {
            self.values[interval.index()]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, interval: &DyadicInterval, value: f64) -> Result<()> {
        if interval.level() >= self.depth {
            return Err(Error::Resolution {
                interval: *interval,
                depth: self.depth,
            });
        }
        self.values[interval.index()] = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (DyadicInterval, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(idx, v)| (DyadicInterval::from_index(idx), *v))
    }

    pub fn nonzero(&self) -> impl Iterator<Item = (DyadicInterval, f64)> + '_ {
        self.iter().filter(|(_, v)| *v != 0.0)
    }

    pub fn map(&self, f: impl Fn(DyadicInterval, f64) -> f64) -> Self {
        Self {
            depth: self.depth,
            values: self.iter().map(|(i, v)| f(i, v)).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|_, v| v * factor)
    }

    /// Entrywise product `{b_I β_I}`.
    pub fn product(&self, other: &Self) -> Result<Self> {
        same_depth(self, other)?;
        Ok(Self {
            depth: self.depth,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        })
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub(crate) fn same_depth(a: &CoefSequence, b: &CoefSequence) -> Result<()> {
    if a.depth == b.depth {
        Ok(())
    } else {
        Err(Error::DepthMismatch {
            left: a.depth,
            right: b.depth,
        })
    }
}

/// `{⟨b, h^kind_I⟩ / √|I|}`.
pub fn coeffs_from_function(
    grid: &TruncatedGrid,
    b: &GridFunction,
    kind: HaarKind,
) -> Result<CoefSequence> {
    let raw = haar_coefficients(grid, b, kind)?;
    let values = raw
        .into_iter()
        .enumerate()
        .map(|(idx, c)| c / DyadicInterval::from_index(idx).length().sqrt())
        .collect();
    CoefSequence::from_values(grid.depth(), values)
}

/// Mean-zero function whose Haar symbol is `seq`: `Σ_I c_I √|I| h_I`.
pub fn synthesize(grid: &TruncatedGrid, seq: &CoefSequence) -> Result<GridFunction> {
    if seq.depth != grid.depth() {
        return Err(Error::DepthMismatch {
            left: seq.depth,
            right: grid.depth(),
        });
    }
    let coeffs: Vec<f64> = seq.iter().map(|(i, c)| c * i.length().sqrt()).collect();
    haar_synthesis(grid, 0.0, &coeffs)
}

/// `S(J) = Σ_{I ⊆ J} b_I² |I|` for every `J`, by one bottom-up pass.
pub fn containment_sums(seq: &CoefSequence) -> Vec<f64> {
    let mut sums: Vec<f64> = seq.iter().map(|(i, v)| v * v * i.length()).collect();
    let n = sums.len();
    for idx in (0..n).rev() {
        let (l, r) = (2 * idx + 1, 2 * idx + 2);
        if r < n {
            sums[idx] += sums[l] + sums[r];
        }
    }
    sums
}

/// `sup_J [ |J|^{-1} Σ_{I ⊆ J} b_I² |I| ]^{1/2}`.
pub fn carleson_norm(seq: &CoefSequence) -> f64 {
    containment_sums(seq)
        .iter()
        .enumerate()
        .map(|(idx, s)| s / DyadicInterval::from_index(idx).length())
        .fold(0.0, f64::max)
        .sqrt()
}

/// `Σ_{I ⊊ J} b_I² |I|` for every `J`.
pub fn strict_below_sums(seq: &CoefSequence) -> Vec<f64> {
    let full = containment_sums(seq);
    let n = full.len();
    (0..n)
        .map(|idx| {
            let (l, r) = (2 * idx + 1, 2 * idx + 2);
            if r < n {
                full[l] + full[r]
            } else {
                0.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weighting {
    /// `w(I) = |I|`
    TimesMeasure,
    /// `w(I) = 1/|I|`
    OverMeasure,
}

/// `Σ_{I ⊋ J} b_I² w(I)` for every `J`, by one top-down pass.
pub fn strict_above_sums(seq: &CoefSequence, weighting: Weighting) -> Vec<f64> {
    let n = seq.values.len();
    let mut above = vec![0.0; n];
    for idx in 0..n {
        let len = DyadicInterval::from_index(idx).length();
        let w = match weighting {
            Weighting::TimesMeasure => len,
            Weighting::OverMeasure => len.recip(),
        };
        let carried = above[idx] + seq.values[idx].powi(2) * w;
        for child in [2 * idx + 1, 2 * idx + 2] {
            if child < n {
                above[child] = carried;
            }
        }
    }
    above
}

fn sup_sqrt(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, f64::max).sqrt()
}

/// `‖{b_I β_I}‖_Carleson`.
pub fn rhs_10_01(b: &CoefSequence, beta: &CoefSequence) -> Result<f64> {
    Ok(carleson_norm(&b.product(beta)?))
}

/// `sup_J [ (β_J²/|J|) Σ_{I ⊊ J} b_I² |I| ]^{1/2}`.
pub fn rhs_01_00(b: &CoefSequence, beta: &CoefSequence) -> Result<f64> {
    same_depth(b, beta)?;
    let below = strict_below_sums(b);
    Ok(sup_sqrt(
        beta.iter()
            .map(|(j, bj)| bj * bj * below[j.index()] / j.length()),
    ))
}

/// `sup_J [ (β_J²/|J|) Σ_{I ⊋ J} b_I² |I| ]^{1/2}`, weighted as displayed.
///
/// The second moment of `P^{0,0}_b P^{σ,1,0}_β` is *not* this quantity; it
/// is [`rhs_01_00p_exact`]. This form is kept for reporting.
pub fn rhs_01_00p(b: &CoefSequence, beta: &CoefSequence) -> Result<f64> {
    same_depth(b, beta)?;
    let above = strict_above_sums(b, Weighting::TimesMeasure);
    Ok(sup_sqrt(
        beta.iter()
            .map(|(j, bj)| bj * bj * above[j.index()] / j.length()),
    ))
}

/// `sup_J [ β_J² |J| Σ_{I ⊋ J} b_I² / |I| ]^{1/2}`.
///
/// `⟨h¹_J, h_I⟩² = |J|/|I|` for `J ⊊ I`, so this is the exact second-moment
/// norm of `P^{0,0}_b P^{σ,1,0}_β`.
pub fn rhs_01_00p_exact(b: &CoefSequence, beta: &CoefSequence) -> Result<f64> {
    same_depth(b, beta)?;
    let above = strict_above_sums(b, Weighting::OverMeasure);
    Ok(sup_sqrt(
        beta.iter()
            .map(|(j, bj)| bj * bj * above[j.index()] * j.length()),
    ))
}

/// The sequence `c_J = [ (β_J²/|J|) Σ_{I ⊊ J} b_I² |I| ]^{1/2}`.
pub fn nested_sequence(b: &CoefSequence, beta: &CoefSequence) -> Result<CoefSequence> {
    same_depth(b, beta)?;
    let below = strict_below_sums(b);
    Ok(beta.map(|j, bj| (bj * bj * below[j.index()] / j.length()).sqrt()))
}

/// `‖ c_J ‖_Carleson` for the nested sequence above.
pub fn rhs_01_01(b: &CoefSequence, beta: &CoefSequence) -> Result<f64> {
    Ok(carleson_norm(&nested_sequence(b, beta)?))
}

/// The explicit supremum from the mixed case:
/// `sup_J (β_J²/|J|) Σ_{I⊊J} b_I²|I| + β_J² b_J² + β_J²|J| Σ_{I⊋J} b_I²/|I|`, square-rooted.
pub fn rhs_01_10(b: &CoefSequence, beta: &CoefSequence) -> Result<f64> {
    same_depth(b, beta)?;
    let below = strict_below_sums(b);
    let above = strict_above_sums(b, Weighting::OverMeasure);
    Ok(sup_sqrt(beta.iter().map(|(j, bj)| {
        let idx = j.index();
        let len = j.length();
        let bb = b.values[idx];
        bj * bj * (below[idx] / len + bb * bb + len * above[idx])
    })))
}

/// The four terms on the right of the two-weight equivalence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoWeightRhs {
    /// `sup_I |⟨b,h¹_I⟩|/|I| · [∫_I β²]^{1/2}`
    pub sup_b: f64,
    /// `sup_I |⟨β,h¹_I⟩|/|I| · [∫_I b²]^{1/2}`
    pub sup_beta: f64,
    /// `‖ ⟨b,h_J⟩/|J| · [∫_J β²]^{1/2} ‖_Carleson`
    pub carleson_b: f64,
    /// `‖ ⟨β,h_J⟩/|J| · [∫_J b²]^{1/2} ‖_Carleson`
    pub carleson_beta: f64,
    pub total: f64,
}

pub fn two_weight_rhs(
    grid: &TruncatedGrid,
    b: &GridFunction,
    beta: &GridFunction,
) -> Result<TwoWeightRhs> {
    let b1 = haar_coefficients(grid, b, HaarKind::Indicator)?;
    let beta1 = haar_coefficients(grid, beta, HaarKind::Indicator)?;
    let b0 = haar_coefficients(grid, b, HaarKind::Haar)?;
    let beta0 = haar_coefficients(grid, beta, HaarKind::Haar)?;
    let b_sq = local_square_integrals(grid, b)?;
    let beta_sq = local_square_integrals(grid, beta)?;

    let lens: Vec<f64> = grid.intervals().map(|i| i.length()).collect();
    let sup = |coef: &[f64], mass: &[f64]| {
        (0..lens.len())
            .map(|k| coef[k].abs() / lens[k] * mass[k].sqrt())
            .fold(0.0, f64::max)
    };
    let weighted = |coef: &[f64], mass: &[f64]| {
        let values = (0..lens.len())
            .map(|k| coef[k] / lens[k] * mass[k].sqrt())
            .collect();
        CoefSequence::from_values(grid.depth(), values).map(|s| carleson_norm(&s))
    };

    let sup_b = sup(&b1, &beta_sq);
    let sup_beta = sup(&beta1, &b_sq);
    let carleson_b = weighted(&b0, &beta_sq)?;
    let carleson_beta = weighted(&beta0, &b_sq)?;
    Ok(TwoWeightRhs {
        sup_b,
        sup_beta,
        carleson_b,
        carleson_beta,
        total: sup_b + sup_beta + carleson_b + carleson_beta,
    })
}
