//! Axis-aligned boxes used as the region Ω.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxBounds", into = "BoxBounds")]
pub struct BoxRegion {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BoxBounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl TryFrom<BoxBounds> for BoxRegion {
    type Error = Error;

    fn try_from(b: BoxBounds) -> Result<Self> {
        BoxRegion::new(b.lo, b.hi)
    }
}

impl From<BoxRegion> for BoxBounds {
    fn from(b: BoxRegion) -> Self {
        BoxBounds { lo: b.lo, hi: b.hi }
    }
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        if lo.is_empty() {
            return Err(Error::InvalidArgument("box must have dimension at least 1".into()));
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::InvalidArgument(format!(
                    "box side {} is empty or unbounded: [{l}, {h}]",
                    i + 1
                )));
            }
        }
        Ok(BoxRegion { lo, hi })
    }

    /// `[-r, r]^m`.
    pub fn cube(m: usize, r: f64) -> Result<Self> {
        Self::new(vec![-r; m], vec![r; m])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    /// Closed-box membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.lo).zip(&self.hi).all(|((v, l), h)| l <= v && v <= h)
    }

    /// Largest absolute coordinate value per axis.
    pub fn abs_bounds(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| l.abs().max(h.abs()))
            .collect()
    }

    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| rng.random_range(l..=h))
            .collect()
    }

    /// Tensor grid with `n ≥ 2` points per axis, including the faces.
    pub fn grid(&self, n: usize) -> Vec<Vec<f64>> {
        let n = n.max(2);
        let m = self.dim();
        let total = n.pow(m as u32);
        (0..total)
            .map(|mut idx| {
                (0..m)
                    .map(|j| {
                        let k = idx % n;
                        idx /= n;
                        self.lo[j] + (self.hi[j] - self.lo[j]) * k as f64 / (n - 1) as f64
                    })
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn membership_and_grid() {
        let b = BoxRegion::cube(2, 1.0).unwrap();
        assert!(b.contains(&[1.0, -1.0]));
        assert!(!b.contains(&[1.0001, 0.0]));
        assert!(!b.contains(&[0.0]));
        let g = b.grid(3);
        assert_eq!(g.len(), 9);
        assert!(g.contains(&vec![0.0, 0.0]) && g.contains(&vec![-1.0, 1.0]));
        assert!(BoxRegion::new(vec![0.0], vec![0.0]).is_err());
        assert!(serde_json::from_str::<BoxRegion>(r#"{"lo":[1.0],"hi":[0.0]}"#).is_err());
    }
}
