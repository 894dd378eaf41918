use crate::error::{Error, Result};
use crate::tensor::ParameterStore;

/// AdamW with bias-corrected moments and decoupled weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: ParameterStore,
    pub v: ParameterStore,
    pub step: u64,
}

impl AdamW {
    pub fn new(params: &ParameterStore) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    /// One update. Parameters are left untouched if any gradient is
    /// non-finite.
    pub fn step(
        &mut self,
        params: &mut ParameterStore,
        grads: &ParameterStore,
        lr: f64,
        weight_decay: f64,
    ) -> Result<()> {
        if !grads.same_layout(params) || !self.m.same_layout(params) {
            return Err(Error::Contract("gradient layout does not match parameters".into()));
        }
        if let Some(name) = grads.first_non_finite() {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads.tensor(i).data();
            let m = self.m.tensor_mut(i).data_mut();
            for (m, g) in m.iter_mut().zip(g) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            }
            let v = self.v.tensor_mut(i).data_mut();
            for (v, g) in v.iter_mut().zip(g) {
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            }
            let (m, v) = (self.m.tensor(i).data(), self.v.tensor(i).data());
            for ((p, m), v) in params.tensor_mut(i).data_mut().iter_mut().zip(m).zip(v) {
                *p -= lr * weight_decay * *p;
                *p -= lr * (m / bc1) / ((v / bc2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// One-cycle learning rate: cosine warm-up from `max_lr / div` to `max_lr`
/// over the first `warmup` fraction of steps, then cosine decay to
/// `max_lr / final_div`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OneCycle {
    pub total_steps: usize,
    pub max_lr: f64,
    pub warmup: f64,
    pub div: f64,
    pub final_div: f64,
}

impl OneCycle {
    pub fn new(total_steps: usize, max_lr: f64) -> Self {
        OneCycle {
            total_steps,
            max_lr,
            warmup: 0.3,
            div: 25.0,
            final_div: 1e4,
        }
    }

    pub fn lr(&self, step: usize) -> Result<f64> {
        if step > self.total_steps || self.total_steps == 0 {
            return Err(Error::Argument(format!(
                "step {step} outside [0, {}]",
                self.total_steps
            )));
        }
        let cos = |from: f64, to: f64, pct: f64| to + (from - to) * (1.0 + (std::f64::consts::PI * pct).cos()) / 2.0;
        let initial = self.max_lr / self.div;
        let last = self.max_lr / self.final_div;
        let peak = self.warmup * self.total_steps as f64;
        let s = step as f64;
        Ok(if s <= peak {
            cos(initial, self.max_lr, if peak > 0.0 { s / peak } else { 1.0 })
        } else {
            cos(self.max_lr, last, (s - peak) / (self.total_steps as f64 - peak))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store(values: &[f64]) -> ParameterStore {
        let mut s = ParameterStore::new();
        s.insert("w", Tensor::from_vec(values.to_vec())).unwrap();
        s
    }

    #[test]
    fn first_step_is_signed_lr() {
        let lr = 1e-3;
        let mut p = store(&[0.5, -2.0, 3.0]);
        let g = store(&[4.0, -0.01, 1e-3]);
        let before = p.to_flat();
        AdamW::new(&p).step(&mut p, &g, lr, 0.0).unwrap();
        for ((a, b), g) in p.to_flat().iter().zip(&before).zip(g.to_flat()) {
            let delta = a - b;
            assert!((delta + lr * g / (g.abs() + 1e-8)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = store(&[0.5, -2.0]);
        let mut opt = AdamW::new(&p);
        for _ in 0..5 {
            opt.step(&mut p, &store(&[0.0, 0.0]), 0.01, 0.0).unwrap();
        }
        assert_eq!(p.to_flat(), vec![0.5, -2.0]);
    }

    #[test]
    fn decoupled_decay_factor() {
        let mut p = store(&[0.5, -2.0]);
        AdamW::new(&p).step(&mut p, &store(&[0.0, 0.0]), 0.1, 0.01).unwrap();
        assert_eq!(p.to_flat(), vec![0.5 * (1.0 - 0.001), -2.0 * (1.0 - 0.001)]);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = store(&[1.0]);
        let err = AdamW::new(&p).step(&mut p, &store(&[f64::NAN]), 0.1, 0.0).unwrap_err();
        assert!(err.to_string().contains('w'));
        assert_eq!(p.to_flat(), vec![1.0]);
    }

    #[test]
    fn schedule_endpoints() {
        let s = OneCycle::new(1000, 1e-3);
        assert!((s.lr(0).unwrap() - 1e-3 / 25.0).abs() < 1e-18);
        assert!((s.lr(300).unwrap() - 1e-3).abs() < 1e-18);
        assert!((s.lr(1000).unwrap() - 1e-7).abs() < 1e-18);
        assert!(s.lr(1001).is_err());
    }

    #[test]
    fn schedule_is_unimodal() {
        let s = OneCycle::new(777, 1e-3);
        let lrs: Vec<f64> = (0..=777).map(|i| s.lr(i).unwrap()).collect();
        let peak = lrs.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(lrs[..=peak].windows(2).all(|w| w[0] <= w[1]));
        assert!(lrs[peak..].windows(2).all(|w| w[0] >= w[1]));
        assert!(lrs[777] < lrs[0]);
        // continuity
        assert!(lrs.windows(2).all(|w| (w[1] - w[0]).abs() < 2e-5));
    }
}
