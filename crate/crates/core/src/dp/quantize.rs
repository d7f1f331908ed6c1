use alloc::vec::Vec;

use rand::Rng;

use crate::error::{invalid, Result};
use crate::math;

/// Largest supported bit width; wider grids exceed `f64` resolution.
pub const MAX_BITS: u32 = 52;

/// Unbiased stochastic rounding onto the `2^J`-point grid
/// `r_j = -D + j * 2D / (2^J - 1)`, `j = 0, ..., 2^J - 1`.
///
/// Inputs are clipped to `[-D, D]` first. A value between two neighbouring
/// grid points is rounded to the upper one with probability proportional to
/// its distance from the lower one, so the output is unbiased on `[-D, D]`
/// and never further than one grid spacing from the clipped input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    range: f64,
    bits: u32,
}

impl Quantizer {
    pub fn new(range: f64, bits: u32) -> Result<Self> {
        if !(range > 0.0) || !range.is_finite() {
            return Err(invalid("quantizer range must be positive and finite"));
        }
        if bits == 0 || bits > MAX_BITS {
            return Err(invalid("quantizer bit width must lie in 1..=52"));
        }
        Ok(Quantizer { range, bits })
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn levels(&self) -> u64 {
        1u64 << self.bits
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.range / (self.levels() - 1) as f64
    }

    /// Grid point with index `code`.
    pub fn decode(&self, code: u64) -> f64 {
        let top = self.levels() - 1;
        if code >= top {
            self.range
        } else {
            -self.range + code as f64 * self.spacing()
        }
    }

    /// Random grid index for `w`.
    pub fn encode<R: Rng + ?Sized>(&self, w: f64, rng: &mut R) -> u64 {
        let top = self.levels() - 1;
        let w = w.clamp(-self.range, self.range);
        let t = (w + self.range) / self.spacing();
        let lo = (math::floor(t) as u64).min(top - 1);
        let frac = t - lo as f64;
        let u: f64 = rng.random();
        if u < frac {
            lo + 1
        } else {
            lo
        }
    }

    pub fn quantize<R: Rng + ?Sized>(&self, w: f64, rng: &mut R) -> f64 {
        self.decode(self.encode(w, rng))
    }

    /// The two grid points around `clip(w)` and the probability of the upper one.
    pub fn neighbours(&self, w: f64) -> (f64, f64, f64) {
        let top = self.levels() - 1;
        let w = w.clamp(-self.range, self.range);
        let t = (w + self.range) / self.spacing();
        let lo = (math::floor(t) as u64).min(top - 1);
        (
            self.decode(lo),
            self.decode(lo + 1),
            (t - lo as f64).clamp(0.0, 1.0),
        )
    }
}

/// Quantizes every coordinate of `w` independently.
pub fn stochastic_quantize<R: Rng + ?Sized>(
    w: &[f64],
    range: f64,
    bits: u32,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let q = Quantizer::new(range, bits)?;
    Ok(w.iter().map(|&x| q.quantize(x, rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stage};

    #[test]
    fn one_bit_grid() {
        let q = Quantizer::new(1.0, 1).unwrap();
        assert_eq!((q.decode(0), q.decode(1)), (-1.0, 1.0));
        assert_eq!(q.neighbours(0.5), (-1.0, 1.0, 0.75));
    }

    #[test]
    fn two_bit_grid() {
        let q = Quantizer::new(3.0, 2).unwrap();
        let grid: Vec<f64> = (0..4).map(|j| q.decode(j)).collect();
        assert_eq!(grid, [-3.0, -1.0, 1.0, 3.0]);
        assert_eq!(q.neighbours(0.0), (-1.0, 1.0, 0.5));
    }

    #[test]
    fn endpoints_are_fixed() {
        let q = Quantizer::new(2.5, 3).unwrap();
        let mut rng = stream(1, 0, 0, Stage::Test);
        for _ in 0..100 {
            assert_eq!(q.quantize(2.5, &mut rng), 2.5);
            assert_eq!(q.quantize(-2.5, &mut rng), -2.5);
            assert_eq!(q.quantize(40.0, &mut rng), 2.5);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Quantizer::new(0.0, 3).is_err());
        assert!(Quantizer::new(1.0, 0).is_err());
        assert!(Quantizer::new(1.0, 53).is_err());
    }
}
