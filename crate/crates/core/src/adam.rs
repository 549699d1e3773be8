//! Bias-corrected Adam over a list of parameter tensors.

use crate::autodiff::{AutodiffError, Result, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
    t: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zeroed moments mirroring `shapes` (one entry per parameter tensor).
    pub fn new(lr: f64, param_lens: &[usize]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr,
            t: 0,
            first: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
            second: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_params(lr: f64, params: &[&Tensor]) -> Self {
        let lens: Vec<usize> = params.iter().map(|p| p.len()).collect();
        Self::new(lr, &lens)
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Applies one Adam update. All gradients are checked for finiteness
    /// before any parameter is touched.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(AutodiffError::Dimension {
                op: "adam",
                detail: format!(
                    "{} params, {} grads, {} moment slots",
                    params.len(),
                    grads.len(),
                    self.first.len()
                ),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.first[i].len() {
                return Err(AutodiffError::Dimension {
                    op: "adam",
                    detail: format!("param {i}: {} values, grad {}", p.len(), g.len()),
                });
            }
        }
        if !(self.lr > 0.0) {
            return Err(AutodiffError::Graph(format!("learning rate must be positive, got {}", self.lr)));
        }
        if grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(AutodiffError::NonFinite("gradient".into()));
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for (k, w) in p.data_mut().iter_mut().enumerate() {
                let gk = g[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = Tensor::vector(vec![1.0, -2.0, 3.5]);
        let mut adam = AdamState::for_params(0.01, &[&p]);
        for _ in 0..3 {
            adam.step(&mut [&mut p], &[vec![0.0; 3]]).unwrap();
        }
        assert_eq!(p.data(), &[1.0, -2.0, 3.5]);
        assert_eq!(adam.step_count(), 3);
    }

    #[test]
    fn single_step_matches_reference_recurrence() {
        // Hand-rolled Adam recurrence for one scalar, independent of the
        // implementation's loop structure.
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8f64, 0.001f64);
        let g = 1.0;
        let m = (1.0 - b1) * g;
        let v = (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1);
        let v_hat = v / (1.0 - b2);
        let expected = 1.0 - lr * m_hat / (v_hat.sqrt() + eps);

        let mut p = Tensor::scalar(1.0);
        let mut adam = AdamState::for_params(lr, &[&p]);
        adam.step(&mut [&mut p], &[vec![g]]).unwrap();
        assert!((p.data()[0] - expected).abs() < 1e-15);
        assert!((p.data()[0] - 0.999).abs() < 1e-10);
    }

    #[test]
    fn converges_on_square() {
        let mut p = Tensor::scalar(3.0);
        let mut adam = AdamState::for_params(0.1, &[&p]);
        for _ in 0..200 {
            let grad = 2.0 * p.data()[0];
            adam.step(&mut [&mut p], &[vec![grad]]).unwrap();
        }
        assert!(p.data()[0].abs() < 0.1, "x = {}", p.data()[0]);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_update() {
        let mut p = Tensor::vector(vec![1.0, 2.0]);
        let mut adam = AdamState::for_params(0.1, &[&p]);
        let err = adam.step(&mut [&mut p], &[vec![1.0, f64::NAN]]).unwrap_err();
        assert!(matches!(err, AutodiffError::NonFinite(_)));
        assert_eq!(p.data(), &[1.0, 2.0]);
        assert_eq!(adam.step_count(), 0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Tensor::vector(vec![1.0, 2.0]);
        let mut adam = AdamState::for_params(0.1, &[&p]);
        assert!(adam.step(&mut [&mut p], &[vec![1.0]]).is_err());
    }
}
