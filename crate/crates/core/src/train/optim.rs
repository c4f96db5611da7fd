use crate::autodiff::ParamSet;
use crate::linalg::DenseMatrix;

/// Adam with bias correction. Moments are kept per parameter in
/// [`ParamSet`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<DenseMatrix>,
    v: Vec<DenseMatrix>,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| DenseMatrix::zeros(p.value.n_rows(), p.value.n_cols()))
                .collect::<Vec<_>>()
        };
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, params: &mut ParamSet) {
        assert_eq!(
            params.len(),
            self.m.len(),
            "optimizer built for a different parameter set"
        );
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let grad = p.grad.values();
            let value = p.value.values_mut();
            for (((x, &g), mi), vi) in value
                .iter_mut()
                .zip(grad)
                .zip(m.values_mut())
                .zip(v.values_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *x -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            p.zero_grad();
        }
    }
}
