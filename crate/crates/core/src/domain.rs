use crate::error::{Error, Result};

/// Axis-aligned closed box `[lower_g, upper_g]` per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if lower.is_empty() {
            return Err(Error::invalid("box domain needs at least one dimension"));
        }
        for (g, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::invalid(format!("dimension {g}: need finite lower < upper, got [{l}, {u}]")));
            }
        }
        Ok(BoxDomain { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        BoxDomain { lower: vec![0.0; dim], upper: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn edge(&self, g: usize) -> f64 {
        self.upper[g] - self.lower[g]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(g, v)| *v >= self.lower[g] && *v <= self.upper[g])
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (g, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[g], self.upper[g]);
        }
    }

    /// Maps a point to the unit hypercube. Border coordinates map to exactly 0 or 1.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(g, v)| {
                if *v == self.upper[g] {
                    1.0
                } else {
                    (v - self.lower[g]) / self.edge(g)
                }
            })
            .collect()
    }

    /// Inverse of [`to_unit`](Self::to_unit). Unit coordinates 0 and 1 map exactly to the borders.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(g, v)| {
                if *v >= 1.0 {
                    self.upper[g]
                } else if *v <= 0.0 {
                    self.lower[g]
                } else {
                    (self.lower[g] + v * self.edge(g)).clamp(self.lower[g], self.upper[g])
                }
            })
            .collect()
    }
}
