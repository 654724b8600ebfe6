//! Gradients with respect to the adapter matrix.
//!
//! Every objective here is a function of dot products `u_a . u_b` between
//! adapted unit vectors. Given dL/d(u_a . u_b) for a set of pairs, the
//! gradient reaching each vector is projected onto the tangent space of the
//! sphere at `u`, scaled by 1/|x + Wx|, and accumulated into dW as an outer
//! product with the base input `x`.

use crate::embedding::{AdapterParams, Forward};
use crate::error::Result;

pub(crate) struct PairGraph {
    pub forwards: Vec<Forward>,
    grads: Vec<Vec<f64>>,
}

impl PairGraph {
    pub fn new(params: &AdapterParams, inputs: &[&[f32]]) -> Result<Self> {
        let forwards = inputs.iter().map(|x| params.forward(x)).collect::<Result<Vec<_>>>()?;
        let grads = vec![vec![0.0; params.dim()]; forwards.len()];
        Ok(Self { forwards, grads })
    }

    pub fn sim(&self, a: usize, b: usize) -> f64 {
        dot(&self.forwards[a].unit, &self.forwards[b].unit)
    }

    /// Record dL/d(u_a . u_b) = g.
    pub fn push(&mut self, a: usize, b: usize, g: f64) {
        if g == 0.0 {
            return;
        }
        let dim = self.grads[a].len();
        for k in 0..dim {
            let ua = self.forwards[a].unit[k];
            let ub = self.forwards[b].unit[k];
            self.grads[a][k] += g * ub;
            self.grads[b][k] += g * ua;
        }
    }

    /// Dense dW, row-major.
    pub fn weight_gradient(&self) -> Vec<f64> {
        let dim = self.grads.first().map_or(0, Vec::len);
        let mut dw = vec![0.0; dim * dim];
        for (f, gu) in self.forwards.iter().zip(&self.grads) {
            if gu.iter().all(|&v| v == 0.0) {
                continue;
            }
            let radial = dot(&f.unit, gu);
            for r in 0..dim {
                let a = (gu[r] - radial * f.unit[r]) / f.norm;
                if a == 0.0 {
                    continue;
                }
                let row = &mut dw[r * dim..(r + 1) * dim];
                for (w, x) in row.iter_mut().zip(&f.input) {
                    *w += a * x;
                }
            }
        }
        dw
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
