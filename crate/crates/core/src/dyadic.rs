//! The truncated dyadic grid on `[0,1)` and the Haar system.
//!
//! A grid of depth `L` resolves step functions on `2^L` equal cells. The
//! Haar family lives on levels `0..L`, since a Haar function needs both
//! halves of its support to be unions of cells; normalized indicators also
//! exist at level `L`. All inner products carry the uniform cell weight
//! `2^-L`, so grid quantities coincide with integrals of step functions.
//!
//! Intervals are laid out level-major, position-minor: the interval
//! `(k, n)` has canonical index `2^k - 1 + n`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_DEPTH: u32 = 1;
pub const MAX_DEPTH: u32 = 24;

/// `[n 2^-k, (n+1) 2^-k)` with `k = level`, `n = position`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicInterval {
    level: u32,
    position: usize,
}

impl DyadicInterval {
    /// Panics when `position >= 2^level`.
    pub fn new(level: u32, position: usize) -> Self {
        Self::try_new(level, position).expect("dyadic position out of range")
    }

    pub fn try_new(level: u32, position: usize) -> Result<Self> {
        if level >= usize::BITS - 1 || position >= (1usize << level) {
            return Err(Error::Precondition(format!(
                "position {position} is not below 2^{level}"
            )));
        }
        Ok(Self { level, position })
    }

    pub const fn root() -> Self {
        Self {
            level: 0,
            position: 0,
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn position(&self) -> usize {
        self.position
    }

    /// `|I| = 2^-level`.
    pub fn length(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    pub fn left_end(&self) -> f64 {
        self.position as f64 * self.length()
    }

    pub fn index(&self) -> usize {
        (1usize << self.level) - 1 + self.position
    }

    pub fn from_index(index: usize) -> Self {
        let level = (index + 1).ilog2();
        Self {
            level,
            position: index + 1 - (1usize << level),
        }
    }

    pub fn parent(&self) -> Option<Self> {
        (self.level > 0).then(|| Self {
            level: self.level - 1,
            position: self.position / 2,
        })
    }

    pub fn left_child(&self) -> Self {
        Self {
            level: self.level + 1,
            position: 2 * self.position,
        }
    }

    pub fn right_child(&self) -> Self {
        Self {
            level: self.level + 1,
            position: 2 * self.position + 1,
        }
    }

    pub fn children(&self) -> [Self; 2] {
        [self.left_child(), self.right_child()]
    }

    /// Non-strict containment `self ⊆ other`.
    pub fn is_inside(&self, other: &Self) -> bool {
        self.level >= other.level && self.position >> (self.level - other.level) == other.position
    }

    pub fn is_strictly_inside(&self, other: &Self) -> bool {
        self.level > other.level && self.is_inside(other)
    }

    /// All strict ancestors, nearest first.
    pub fn ancestors(&self) -> impl Iterator<Item = Self> {
        std::iter::successors(self.parent(), |j| j.parent())
    }
}

impl fmt::Display for DyadicInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.level, self.position)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Equal,
    FirstInsideSecond,
    SecondInsideFirst,
    Disjoint,
}

pub fn relation(i: &DyadicInterval, j: &DyadicInterval) -> Relation {
    if i == j {
        Relation::Equal
    } else if i.is_inside(j) {
        Relation::FirstInsideSecond
    } else if j.is_inside(i) {
        Relation::SecondInsideFirst
    } else {
        Relation::Disjoint
    }
}

/// Sign of `h_J` on `I`, for `I ⊊ J`: `-1` on the left half, `+1` on the right.
pub fn tau(i: &DyadicInterval, j: &DyadicInterval) -> Result<f64> {
    if !i.is_strictly_inside(j) {
        return Err(Error::NotStrictlyContained {
            inner: *i,
            outer: *j,
        });
    }
    // Bit of I's position that selects the half of J.
    let bit = (i.position >> (i.level - j.level - 1)) & 1;
    Ok(if bit == 0 { -1.0 } else { 1.0 })
}

/// Which Haar-type function sits on a leg of a rank-one term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HaarKind {
    /// The mean-zero Haar function `h_I`.
    Haar,
    /// The normalized indicator `|h_I| = |I|^{-1/2} 1_I`.
    Indicator,
}

impl HaarKind {
    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Self::Haar),
            1 => Some(Self::Indicator),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Self::Haar => 0,
            Self::Indicator => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruncatedGrid {
    depth: u32,
}

pub fn make_grid(depth: u32) -> Result<TruncatedGrid> {
    if !(MIN_DEPTH..=MAX_DEPTH).contains(&depth) {
        return Err(Error::Bounds {
            depth,
            min: MIN_DEPTH,
            max: MAX_DEPTH,
        });
    }
    Ok(TruncatedGrid { depth })
}

impl TruncatedGrid {
    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn cells(&self) -> usize {
        1usize << self.depth
    }

    pub fn cell_width(&self) -> f64 {
        (-(self.depth as f64)).exp2()
    }

    /// `|D_L| = 2^L - 1`.
    pub fn interval_count(&self) -> usize {
        self.cells() - 1
    }

    /// D_L in canonical order.
    pub fn intervals(&self) -> impl Iterator<Item = DyadicInterval> {
        (0..self.interval_count()).map(DyadicInterval::from_index)
    }

    pub fn contains(&self, interval: &DyadicInterval) -> bool {
        interval.level < self.depth
    }

    pub(crate) fn require(&self, interval: &DyadicInterval) -> Result<()> {
        if self.contains(interval) {
            Ok(())
        } else {
            Err(Error::Resolution {
                interval: *interval,
                depth: self.depth,
            })
        }
    }

    /// Cell range covered by `interval` (requires level ≤ depth).
    pub fn cell_range(&self, interval: &DyadicInterval) -> std::ops::Range<usize> {
        let width = 1usize << (self.depth - interval.level);
        interval.position * width..(interval.position + 1) * width
    }

    pub fn zeros(&self) -> GridFunction {
        GridFunction::new(vec![0.0; self.cells()])
    }

    pub fn constant(&self, value: f64) -> GridFunction {
        GridFunction::new(vec![value; self.cells()])
    }

    pub(crate) fn check(&self, f: &GridFunction) -> Result<()> {
        if f.len() == self.cells() {
            Ok(())
        } else {
            Err(Error::Shape {
                expected: self.cells(),
                actual: f.len(),
            })
        }
    }
}

/// Step function at resolution `2^-L`, one value per cell from left to right.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `⟨f, 1⟩`, the integral over `[0,1)`.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    pub fn add_scaled(&mut self, other: &Self, factor: f64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += factor * b;
        }
    }
}

pub fn haar(grid: &TruncatedGrid, interval: &DyadicInterval) -> Result<GridFunction> {
    grid.require(interval)?;
    let mut f = grid.zeros();
    let range = grid.cell_range(interval);
    let mid = range.start + range.len() / 2;
    let height = interval.length().sqrt().recip();
    for (cell, v) in f.values[range.clone()].iter_mut().enumerate() {
        *v = if range.start + cell < mid { -height } else { height };
    }
    Ok(f)
}

pub fn haar_one(grid: &TruncatedGrid, interval: &DyadicInterval) -> Result<GridFunction> {
    if interval.level > grid.depth {
        return Err(Error::Resolution {
            interval: *interval,
            depth: grid.depth,
        });
    }
    let mut f = grid.zeros();
    let height = interval.length().sqrt().recip();
    f.values[grid.cell_range(interval)].fill(height);
    Ok(f)
}

pub fn haar_function(
    grid: &TruncatedGrid,
    interval: &DyadicInterval,
    kind: HaarKind,
) -> Result<GridFunction> {
    match kind {
        HaarKind::Haar => haar(grid, interval),
        HaarKind::Indicator => haar_one(grid, interval),
    }
}

pub fn inner(grid: &TruncatedGrid, f: &GridFunction, g: &GridFunction) -> Result<f64> {
    grid.check(f)?;
    grid.check(g)?;
    let dot: f64 = f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum();
    Ok(dot * grid.cell_width())
}

pub fn norm(grid: &TruncatedGrid, f: &GridFunction) -> Result<f64> {
    inner(grid, f, f).map(f64::sqrt)
}

/// Cell-value sums over every interval of levels `0..=L`, level by level.
fn block_sums(grid: &TruncatedGrid, values: &[f64]) -> Vec<Vec<f64>> {
    let depth = grid.depth as usize;
    let mut levels = vec![Vec::new(); depth + 1];
    levels[depth] = values.to_vec();
    for k in (0..depth).rev() {
        levels[k] = levels[k + 1].chunks(2).map(|c| c[0] + c[1]).collect();
    }
    levels
}

/// `⟨f, h^kind_I⟩` for every `I ∈ D_L`, in canonical order, via one tree pass.
pub fn haar_coefficients(
    grid: &TruncatedGrid,
    f: &GridFunction,
    kind: HaarKind,
) -> Result<Vec<f64>> {
    grid.check(f)?;
    let sums = block_sums(grid, &f.values);
    let w = grid.cell_width();
    Ok(grid
        .intervals()
        .map(|i| {
            let k = i.level as usize;
            let scale = w / i.length().sqrt();
            match kind {
                HaarKind::Haar => {
                    let below = &sums[k + 1];
                    scale * (below[2 * i.position + 1] - below[2 * i.position])
                }
                HaarKind::Indicator => scale * sums[k][i.position],
            }
        })
        .collect())
}

/// `∫_I f² dx` for every `I ∈ D_L`, in canonical order.
pub fn local_square_integrals(grid: &TruncatedGrid, f: &GridFunction) -> Result<Vec<f64>> {
    grid.check(f)?;
    let squares: Vec<f64> = f.values.iter().map(|v| v * v).collect();
    let sums = block_sums(grid, &squares);
    let w = grid.cell_width();
    Ok(grid
        .intervals()
        .map(|i| w * sums[i.level as usize][i.position])
        .collect())
}

/// Inverse of the Haar analysis: `mean + Σ_I coeffs[I] h_I`.
pub fn haar_synthesis(grid: &TruncatedGrid, mean: f64, coeffs: &[f64]) -> Result<GridFunction> {
    if coeffs.len() != grid.interval_count() {
        return Err(Error::Shape {
            expected: grid.interval_count(),
            actual: coeffs.len(),
        });
    }
    // Push values top-down: each child inherits the parent's value ± the
    // Haar step height.
    let mut current = vec![mean];
    for k in 0..grid.depth {
        let offset = (1usize << k) - 1;
        let height = (k as f64 / 2.0).exp2();
        let mut next = Vec::with_capacity(current.len() * 2);
        for (n, v) in current.iter().enumerate() {
            let c = coeffs[offset + n] * height;
            next.push(v - c);
            next.push(v + c);
        }
        current = next;
    }
    Ok(GridFunction::new(current))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(make_grid(1).unwrap().intervals().collect::<Vec<_>>(), vec![DyadicInterval::root()]);
        assert_eq!(make_grid(2).unwrap().interval_count(), 3);
        assert_eq!(make_grid(10).unwrap().intervals().count(), 1023);
        assert!(matches!(make_grid(0), Err(Error::Bounds { .. })));
        assert!(matches!(make_grid(25), Err(Error::Bounds { .. })));
    }

    #[test]
    fn canonical_order_is_level_major() {
        let g = make_grid(3).unwrap();
        let ivs: Vec<_> = g.intervals().collect();
        assert_eq!(ivs[0], DyadicInterval::new(0, 0));
        assert_eq!(ivs[1], DyadicInterval::new(1, 0));
        assert_eq!(ivs[2], DyadicInterval::new(1, 1));
        assert_eq!(ivs[6], DyadicInterval::new(2, 3));
        for (idx, i) in ivs.iter().enumerate() {
            assert_eq!(i.index(), idx);
        }
    }

    #[test]
    fn haar_values() {
        let g = make_grid(2).unwrap();
        let h = haar(&g, &DyadicInterval::root()).unwrap();
        assert_eq!(h.values(), &[-1.0, -1.0, 1.0, 1.0]);
        let h10 = haar(&g, &DyadicInterval::new(1, 0)).unwrap();
        assert!(close(h10.values()[0], -SQRT2) && close(h10.values()[1], SQRT2));
        assert_eq!(&h10.values()[2..], &[0.0, 0.0]);
        assert!(close(inner(&g, &h10, &h10).unwrap(), 1.0));
        assert!(matches!(
            haar(&g, &DyadicInterval::new(2, 0)),
            Err(Error::Resolution { .. })
        ));
    }

    #[test]
    fn indicator_values() {
        let g = make_grid(2).unwrap();
        let h1 = haar_one(&g, &DyadicInterval::new(1, 0)).unwrap();
        assert!(close(h1.values()[0], SQRT2) && close(h1.values()[1], SQRT2));
        let root = haar_one(&g, &DyadicInterval::root()).unwrap();
        assert!(close(inner(&g, &h1, &root).unwrap(), 0.5f64.sqrt()));
        // level L is admitted for indicators, level L+1 is not
        assert!(haar_one(&g, &DyadicInterval::new(2, 3)).is_ok());
        assert!(haar_one(&g, &DyadicInterval::new(3, 0)).is_err());
        for i in g.intervals() {
            let a = haar_one(&g, &i).unwrap();
            let b = haar(&g, &i).unwrap();
            assert!(close(inner(&g, &a, &b).unwrap(), 0.0));
        }
    }

    #[test]
    fn inner_examples() {
        let g = make_grid(2).unwrap();
        let h00 = haar(&g, &DyadicInterval::root()).unwrap();
        let h10 = haar(&g, &DyadicInterval::new(1, 0)).unwrap();
        assert!(close(inner(&g, &h00, &h10).unwrap(), 0.0));
        assert!(close(inner(&g, &h00, &h00).unwrap(), 1.0));
        let one = g.constant(1.0);
        let h1 = haar_one(&g, &DyadicInterval::new(1, 0)).unwrap();
        assert!(close(inner(&g, &one, &h1).unwrap(), 0.5f64.sqrt()));
        let short = GridFunction::new(vec![1.0; 3]);
        assert!(matches!(inner(&g, &one, &short), Err(Error::Shape { .. })));
    }

    #[test]
    fn tau_examples() {
        let root = DyadicInterval::root();
        assert_eq!(tau(&DyadicInterval::new(1, 0), &root).unwrap(), -1.0);
        assert_eq!(tau(&DyadicInterval::new(1, 1), &root).unwrap(), 1.0);
        assert_eq!(tau(&DyadicInterval::new(2, 1), &root).unwrap(), -1.0);
        assert_eq!(tau(&DyadicInterval::new(3, 5), &DyadicInterval::new(1, 1)).unwrap(), -1.0);
        assert!(tau(&root, &root).is_err());
        assert!(tau(&DyadicInterval::new(1, 0), &DyadicInterval::new(1, 1)).is_err());
    }

    #[test]
    fn relation_examples() {
        let i = |k, n| DyadicInterval::new(k, n);
        assert_eq!(relation(&i(1, 0), &i(0, 0)), Relation::FirstInsideSecond);
        assert_eq!(relation(&i(1, 0), &i(1, 1)), Relation::Disjoint);
        assert_eq!(relation(&i(2, 3), &i(1, 1)), Relation::FirstInsideSecond);
        assert_eq!(relation(&i(0, 0), &i(2, 3)), Relation::SecondInsideFirst);
        assert_eq!(relation(&i(2, 3), &i(2, 3)), Relation::Equal);
    }

    #[test]
    fn parent_child_round_trip() {
        let g = make_grid(6).unwrap();
        for i in g.intervals() {
            for c in i.children() {
                assert_eq!(c.parent(), Some(i));
                assert!(c.is_strictly_inside(&i));
            }
            assert_eq!(DyadicInterval::from_index(i.index()), i);
        }
        assert_eq!(DyadicInterval::root().parent(), None);
    }

    #[test]
    fn nested_or_disjoint() {
        let g = make_grid(5).unwrap();
        for i in g.intervals() {
            for j in g.intervals() {
                let (a0, a1) = (i.left_end(), i.left_end() + i.length());
                let (b0, b1) = (j.left_end(), j.left_end() + j.length());
                let overlap = a0 < b1 && b0 < a1;
                let nested = i.is_inside(&j) || j.is_inside(&i);
                assert_eq!(overlap, nested, "{i} {j}");
                assert_eq!(i.is_inside(&j), a0 >= b0 && a1 <= b1);
            }
        }
    }

    #[test]
    fn orthonormal_system() {
        for depth in 1..=6 {
            let g = make_grid(depth).unwrap();
            let hs: Vec<_> = g.intervals().map(|i| haar(&g, &i).unwrap()).collect();
            for (a, ha) in hs.iter().enumerate() {
                for (b, hb) in hs.iter().enumerate() {
                    let expected = if a == b { 1.0 } else { 0.0 };
                    assert!(close(inner(&g, ha, hb).unwrap(), expected));
                }
            }
        }
    }

    #[test]
    fn indicator_pairings() {
        let g = make_grid(6).unwrap();
        for i in g.intervals() {
            for j in g.intervals() {
                let v = inner(&g, &haar_one(&g, &i).unwrap(), &haar_one(&g, &j).unwrap()).unwrap();
                let expected = match relation(&i, &j) {
                    Relation::Equal => 1.0,
                    Relation::FirstInsideSecond => (i.length() / j.length()).sqrt(),
                    Relation::SecondInsideFirst => (j.length() / i.length()).sqrt(),
                    Relation::Disjoint => 0.0,
                };
                assert!(close(v, expected));
            }
        }
    }

    #[test]
    fn haar_is_constant_on_strict_subintervals() {
        let g = make_grid(6).unwrap();
        for j in g.intervals() {
            let hj = haar(&g, &j).unwrap();
            for i in g.intervals().filter(|i| i.is_strictly_inside(&j)) {
                let expected = tau(&i, &j).unwrap() / j.length().sqrt();
                for cell in g.cell_range(&i) {
                    assert!(close(hj.values()[cell], expected));
                }
            }
        }
    }

    #[test]
    fn fast_coefficients_match_inner_products() {
        let g = make_grid(5).unwrap();
        let f = GridFunction::new((0..32).map(|c| ((c * 7 % 11) as f64).sin()).collect());
        for kind in [HaarKind::Haar, HaarKind::Indicator] {
            let fast = haar_coefficients(&g, &f, kind).unwrap();
            for i in g.intervals() {
                let direct = inner(&g, &f, &haar_function(&g, &i, kind).unwrap()).unwrap();
                assert!(close(fast[i.index()], direct));
            }
        }
        let sq = local_square_integrals(&g, &f).unwrap();
        for i in g.intervals() {
            let direct: f64 =
                g.cell_range(&i).map(|c| f.values()[c].powi(2)).sum::<f64>() * g.cell_width();
            assert!(close(sq[i.index()], direct));
        }
    }

    #[test]
    fn synthesis_inverts_analysis() {
        let g = make_grid(7).unwrap();
        let f = GridFunction::new((0..128).map(|c| (c as f64 * 0.37).cos() + 0.2).collect());
        let coeffs = haar_coefficients(&g, &f, HaarKind::Haar).unwrap();
        let back = haar_synthesis(&g, f.mean(), &coeffs).unwrap();
        assert!(back.sub(&f).sup_norm() <= 1e-12);
    }
}
