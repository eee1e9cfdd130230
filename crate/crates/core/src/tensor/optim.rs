use super::{DenseMatrix, ParamStore};

pub fn sgd_step(store: &mut ParamStore, lr: f64) {
    for p in store.iter_mut() {
        let grad = p.grad.as_slice().to_vec();
        for (v, g) in p.value.as_mut_slice().iter_mut().zip(grad) {
            *v -= lr * g;
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    first: Vec<DenseMatrix>,
    second: Vec<DenseMatrix>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self::with_betas(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore) {
        if self.first.len() != store.len() {
            self.first = store
                .iter()
                .map(|p| DenseMatrix::zeros(p.value.rows(), p.value.cols()))
                .collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for ((p, m), v) in store.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let grad = p.grad.as_slice();
            let values = p.value.as_mut_slice();
            let ms = m.as_mut_slice();
            let vs = v.as_mut_slice();
            for k in 0..values.len() {
                let g = grad[k];
                ms[k] = self.beta1 * ms[k] + (1.0 - self.beta1) * g;
                vs[k] = self.beta2 * vs[k] + (1.0 - self.beta2) * g * g;
                let m_hat = ms[k] / c1;
                let v_hat = vs[k] / c2;
                values[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(value: f64, grad: f64) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.insert("p", DenseMatrix::filled(1, 1, value)).unwrap();
        s.get_mut(id).grad = DenseMatrix::filled(1, 1, grad);
        s
    }

    #[test]
    fn sgd_single_step() {
        let mut s = store_with(1.0, 1.0);
        sgd_step(&mut s, 0.1);
        assert!((s.by_name("p").unwrap().value.get(0, 0) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_grad_leaves_params() {
        let mut s = store_with(1.5, 0.0);
        sgd_step(&mut s, 0.1);
        let mut adam = Adam::new(0.01);
        adam.step(&mut s);
        assert_eq!(s.by_name("p").unwrap().value.get(0, 0), 1.5);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        // m_hat = g and v_hat = g^2 after one step, so the update is lr * g / (|g| + eps)
        for g in [1e-3, 1.0, 1e4] {
            let mut s = store_with(0.0, g);
            let mut adam = Adam::new(1e-3);
            adam.step(&mut s);
            let moved = s.by_name("p").unwrap().value.get(0, 0).abs();
            let expected = 1e-3 * g / (g + 1e-8);
            assert!((moved - expected).abs() < 1e-12, "g={g}: {moved}");
            assert!((moved - 1e-3).abs() < 1e-7);
        }
    }
}
