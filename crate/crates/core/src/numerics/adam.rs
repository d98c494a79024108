//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use super::dense::DenseMatrix;
use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first_moment: Vec<DenseMatrix>,
    second_moment: Vec<DenseMatrix>,
}

impl AdamState {
    pub fn new(learning_rate: f64, store: &ParamStore) -> Self {
        let zeros: Vec<DenseMatrix> = store
            .entries()
            .iter()
            .map(|e| DenseMatrix::zeros(e.value.rows(), e.value.cols()))
            .collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[DenseMatrix]) -> Result<()> {
        if grads.len() != store.len() || grads.len() != self.first_moment.len() {
            return Err(Error::Shape(format!(
                "adam: {} parameters, {} gradients, {} moment buffers",
                store.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        for ((p, g), m) in store.values_mut().zip(grads).zip(&self.first_moment) {
            p.check_same_shape(g, "adam gradient")?;
            p.check_same_shape(m, "adam moment")?;
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.learning_rate);

        for (((p, g), m), v) in store
            .values_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            let params = p.as_mut_slice();
            let ms = m.as_mut_slice();
            let vs = v.as_mut_slice();
            for (k, &gk) in g.as_slice().iter().enumerate() {
                ms[k] = b1 * ms[k] + (1.0 - b1) * gk;
                vs[k] = b2 * vs[k] + (1.0 - b2) * gk * gk;
                let m_hat = ms[k] / bc1;
                let v_hat = vs[k] / bc2;
                params[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut store = ParamStore::new();
        store.add("w", DenseMatrix::from_rows(&[vec![1.0, -2.0]]).unwrap());
        let before = store.clone();
        let mut adam = AdamState::new(0.01, &store);
        for _ in 0..5 {
            adam.step(&mut store, &[DenseMatrix::zeros(1, 2)]).unwrap();
        }
        assert_eq!(store, before);
    }

    #[test]
    fn one_step_descends_on_square() {
        let mut store = ParamStore::new();
        let id = store.add("w", DenseMatrix::filled(1, 1, 1.0));
        let mut adam = AdamState::new(0.01, &store);
        let w = store.get(id).get(0, 0);
        adam.step(&mut store, &[DenseMatrix::filled(1, 1, 2.0 * w)])
            .unwrap();
        let w1 = store.get(id).get(0, 0);
        assert!(w1 * w1 < w * w);
    }

    #[test]
    fn converges_on_convex_quadratic() {
        // f(w) = sum_i c_i (w_i - t_i)^2, minimum at t.
        let c = [1.0, 3.0, 0.5];
        let t = [0.7, -1.2, 2.0];
        let mut store = ParamStore::new();
        let id = store.add("w", DenseMatrix::zeros(1, 3));
        let mut adam = AdamState::new(0.1, &store);
        let grad =
            |w: &DenseMatrix| DenseMatrix::from_fn(1, 3, |_, j| 2.0 * c[j] * (w.get(0, j) - t[j]));
        for _ in 0..500 {
            let g = grad(store.get(id));
            adam.step(&mut store, &[g]).unwrap();
        }
        let g = grad(store.get(id));
        assert!(g.norm() < 1e-3, "gradient norm {}", g.norm());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut store = ParamStore::new();
        store.add("w", DenseMatrix::zeros(2, 2));
        let mut adam = AdamState::new(0.01, &store);
        assert!(adam.step(&mut store, &[DenseMatrix::zeros(1, 2)]).is_err());
        assert!(adam.step(&mut store, &[]).is_err());
    }
}
