use std::path::Path;

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};
use crate::model::{read_arrays, write_arrays, Gradients};

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(lr: f64, params: &[&Array2<f64>]) -> Self {
        let zeros = || params.iter().map(|p| Array2::zeros(p.dim())).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: Vec<&mut Array2<f64>>, grads: &Gradients) {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params.into_iter().zip(&grads.0).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }

    /// Moment estimates followed by a 1x1 array holding the step count.
    pub fn save(&self, path: &Path) -> Result<()> {
        let t = Array2::from_elem((1, 1), self.t as f64);
        let mut arrays: Vec<&Array2<f64>> = self.m.iter().chain(&self.v).collect();
        arrays.push(&t);
        write_arrays(path, &arrays)
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        let mut arrays = read_arrays(path)?;
        let n = self.m.len();
        let t = arrays.pop();
        let shapes_ok = arrays.len() == 2 * n
            && arrays
                .iter()
                .zip(self.m.iter().chain(&self.v))
                .all(|(a, b)| a.dim() == b.dim());
        let t = match t {
            Some(t) if shapes_ok && t.dim() == (1, 1) => t[[0, 0]] as u64,
            _ => return Err(Error::format(path, 0, "optimizer state does not match the model")),
        };
        self.v = arrays.split_off(n);
        self.m = arrays;
        self.t = t;
        Ok(())
    }
}
