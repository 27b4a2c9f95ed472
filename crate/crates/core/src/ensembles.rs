//! Random symbol ensembles and deterministic seed splitting.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dyadic::{DyadicInterval, GridFunction, TruncatedGrid};
use crate::error::{Error, Result};
use crate::symbols::{synthesize, CoefSequence};

/// Independent stream for one `(trial, lane)` pair under a master seed.
///
/// Lanes separate the draws a single trial needs (first symbol, second
/// symbol, sign samples, ...), so results do not depend on scheduling.
pub fn trial_rng(master: u64, trial: u64, lane: u8) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((trial << 8) | u64::from(lane));
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ensemble {
    /// iid standard normal on every interval.
    Gaussian,
    /// Each interval kept with probability `density`, normal value.
    Sparse { density: f64 },
    /// Normal values on the leftmost tower `(0,0) ⊃ (1,0) ⊃ … ⊃ (L−1,0)`.
    Chain,
}

pub const DEFAULT_DENSITY: f64 = 0.1;

impl Ensemble {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Sparse { .. } => "sparse",
            Self::Chain => "chain",
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, depth: u32, rng: &mut R) -> Result<CoefSequence> {
        let mut seq = CoefSequence::zeros(depth)?;
        match *self {
            Self::Gaussian => {
                let values = (0..seq.values().len()).map(|_| rng.sample(StandardNormal)).collect();
                seq = CoefSequence::from_values(depth, values)?;
            }
            Self::Sparse { density } => {
                if !(0.0..=1.0).contains(&density) {
                    return Err(Error::Precondition(format!("density {density} outside [0, 1]")));
                }
                for idx in 0..seq.values().len() {
                    if rng.random_bool(density) {
                        seq.set(&DyadicInterval::from_index(idx), rng.sample(StandardNormal))?;
                    }
                }
            }
            Self::Chain => {
                for level in 0..depth {
                    seq.set(&DyadicInterval::new(level, 0), rng.sample(StandardNormal))?;
                }
            }
        }
        Ok(seq)
    }

    /// Mean-zero function whose Haar coefficients are a fresh draw.
    pub fn draw_function<R: Rng + ?Sized>(&self, grid: &TruncatedGrid, rng: &mut R) -> Result<GridFunction> {
        synthesize(grid, &self.draw(grid.depth(), rng)?)
    }
}

impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ensemble {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "sparse" => Ok(Self::Sparse { density: DEFAULT_DENSITY }),
            "chain" => Ok(Self::Chain),
            other => Err(Error::Precondition(format!("unknown ensemble `{other}`"))),
        }
    }
}
