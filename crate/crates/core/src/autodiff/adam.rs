//! Adam optimizer over a [`ParamStore`].

use super::param::{ParamError, ParamStore};

/// Adam with bias-corrected first and second moments. Moment buffers are
/// keyed by parameter index, so one optimizer instance must stay paired with
/// the store it was built for.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    /// Standard defaults: `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let m = store.iter().map(|(_, p)| vec![0.0; p.len()]).collect();
        let v = store.iter().map(|(_, p)| vec![0.0; p.len()]).collect();
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m, v }
    }

    /// Number of completed steps.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update to every trainable parameter. Fails without
    /// touching anything if some trainable parameter has no gradient — that
    /// means the caller forgot a backward pass (or the graph never used the
    /// parameter), and silently treating it as zero would hide the bug.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<(), ParamError> {
        assert_eq!(self.m.len(), store.len(), "optimizer built for a different store");
        for (_, p) in store.iter() {
            if p.trainable && p.grad.is_none() {
                return Err(ParamError::MissingGrad { name: p.name.clone() });
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (id, p) in store.iter_mut() {
            if !p.trainable {
                continue;
            }
            let grad = p.grad.as_ref().expect("checked above");
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            for i in 0..grad.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p.values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_about_lr() {
        // With bias correction, step 1 moves each coordinate by
        // lr * g / (|g| + eps') ≈ lr * sign(g).
        let mut store = ParamStore::new();
        let id = store.add("w", vec![2], vec![1.0, -1.0], true);
        store.accumulate_grad(id, &[0.5, -3.0]);
        let mut opt = Adam::new(&store, 0.1);
        opt.step(&mut store).unwrap();
        let w = &store.get(id).values;
        assert!((w[0] - (1.0 - 0.1)).abs() < 1e-6);
        assert!((w[1] - (-1.0 + 0.1)).abs() < 1e-6);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn missing_grad_is_an_error() {
        let mut store = ParamStore::new();
        store.add("w", vec![1], vec![0.0], true);
        let mut opt = Adam::new(&store, 0.1);
        let err = opt.step(&mut store).unwrap_err();
        assert!(matches!(err, ParamError::MissingGrad { .. }));
        assert_eq!(opt.steps(), 0, "failed step must not consume a timestep");
    }

    #[test]
    fn frozen_params_are_skipped() {
        let mut store = ParamStore::new();
        let w = store.add("w", vec![1], vec![2.0], true);
        let frozen = store.add("c", vec![1], vec![5.0], false);
        store.accumulate_grad(w, &[1.0]);
        let mut opt = Adam::new(&store, 0.5);
        opt.step(&mut store).unwrap();
        assert_eq!(store.get(frozen).values, vec![5.0]);
        assert!(store.get(w).values[0] < 2.0);
    }

    #[test]
    fn converges_on_a_quadratic() {
        // Minimize (w - 3)^2 by hand-fed gradients.
        let mut store = ParamStore::new();
        let id = store.add("w", vec![1], vec![0.0], true);
        let mut opt = Adam::new(&store, 0.05);
        for _ in 0..2000 {
            let w = store.get(id).values[0];
            store.zero_grad();
            store.accumulate_grad(id, &[2.0 * (w - 3.0)]);
            opt.step(&mut store).unwrap();
        }
        assert!((store.get(id).values[0] - 3.0).abs() < 1e-3);
    }
}
