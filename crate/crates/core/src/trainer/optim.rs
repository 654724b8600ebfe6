use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

pub(crate) enum Optimizer {
    Sgd { lr: f64 },
    Adam { lr: f64, t: i32, m: Vec<f64>, v: Vec<f64> },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, size: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam => Optimizer::Adam {
                lr,
                t: 0,
                m: vec![0.0; size],
                v: vec![0.0; size],
            },
        }
    }

    pub fn step(&mut self, w: &mut [f64], grad: &[f64]) {
        match self {
            Optimizer::Sgd { lr } => {
                for (wi, gi) in w.iter_mut().zip(grad) {
                    *wi -= *lr * gi;
                }
            }
            Optimizer::Adam { lr, t, m, v } => {
                *t += 1;
                let c1 = 1.0 - BETA1.powi(*t);
                let c2 = 1.0 - BETA2.powi(*t);
                for i in 0..w.len() {
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
                    w[i] -= *lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPSILON);
                }
            }
        }
    }
}
