use super::normalize;
use crate::error::{Error, Result};

/// Residual projection `u = normalize(x + W x)` over frozen base vectors.
/// `W` is held in double precision, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterParams {
    dim: usize,
    w: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Forward {
    pub input: Vec<f64>,
    pub norm: f64,
    pub unit: Vec<f64>,
}

impl AdapterParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            w: vec![0.0; dim * dim],
        }
    }

    pub fn from_matrix(dim: usize, w: Vec<f64>) -> Result<Self> {
        if w.len() != dim * dim {
            return Err(Error::InvalidArgument(format!(
                "adapter matrix has {} entries (expected {})",
                w.len(),
                dim * dim
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("adapter matrix".into()));
        }
        Ok(Self { dim, w })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[f64] {
        &self.w
    }

    pub fn matrix_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    pub fn is_zero(&self) -> bool {
        self.w.iter().all(|&v| v == 0.0)
    }

    pub fn forward(&self, x: &[f32]) -> Result<Forward> {
        if x.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "vector of dimension {} given to a {}-d adapter",
                x.len(),
                self.dim
            )));
        }
        let input: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let mut raw = input.clone();
        for (i, r) in raw.iter_mut().enumerate() {
            let row = &self.w[i * self.dim..(i + 1) * self.dim];
            *r += row.iter().zip(&input).map(|(a, b)| a * b).sum::<f64>();
        }
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let unit = normalize(&raw).map_err(|_| Error::DegenerateAdapter)?;
        Ok(Forward { input, norm, unit })
    }

    pub fn adapt(&self, x: &[f32]) -> Result<Vec<f32>> {
        Ok(self.forward(x)?.unit.into_iter().map(|v| v as f32).collect())
    }
}
