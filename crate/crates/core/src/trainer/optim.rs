use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Optimizer {
    Sgd,
    Momentum { beta: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Optimizer {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        match *self {
            Optimizer::Sgd => Ok(()),
            Optimizer::Momentum { beta } if unit(beta) => Ok(()),
            Optimizer::Adam { beta1, beta2, eps } if unit(beta1) && unit(beta2) && eps > 0.0 => Ok(()),
            _ => invalid(format!("optimizer hyper-parameters out of range: {self:?}")),
        }
    }
}

/// Optimizer state over one flat parameter vector.
#[derive(Debug, Clone)]
pub(crate) struct OptState {
    opt: Optimizer,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptState {
    pub(crate) fn new(opt: Optimizer, lr: f64, n: usize) -> Self {
        let v = if matches!(opt, Optimizer::Adam { .. }) { vec![0.0; n] } else { Vec::new() };
        OptState { opt, lr, m: vec![0.0; n], v, t: 0 }
    }

    pub(crate) fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        match self.opt {
            Optimizer::Sgd => {
                for (x, g) in theta.iter_mut().zip(grad) {
                    *x -= self.lr * g;
                }
            }
            Optimizer::Momentum { beta } => {
                for ((x, g), m) in theta.iter_mut().zip(grad).zip(self.m.iter_mut()) {
                    *m = beta * *m + g;
                    *x -= self.lr * *m;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for (((x, g), m), v) in theta.iter_mut().zip(grad).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *x -= self.lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
    }
}
