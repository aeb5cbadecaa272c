use ndarray::{ArrayD, Zip};
use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config(format!("{path}.lr"), "must be positive"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("{path}.{name}"), "must be in [0, 1)"));
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::config(format!("{path}.eps"), "must be positive"));
        }
        Ok(())
    }
}

/// Moment estimates, one pair per parameter in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<ArrayD<f64>>,
    pub v: Vec<ArrayD<f64>>,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<ArrayD<f64>> = store.iter().map(|(_, p)| ArrayD::zeros(p.raw_dim())).collect();
        AdamState {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step(store: &mut ParamStore, grads: &[ArrayD<f64>], state: &mut AdamState) -> Result<()> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(Error::dim(format!(
            "adam: {} parameters, {} gradients, {} moments",
            store.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((id, g), m) in store.ids().zip(grads).zip(&state.m) {
        if g.shape() != store.get(id).shape() || m.shape() != g.shape() {
            return Err(Error::dim(format!("adam: shape mismatch for `{}`", store.name(id))));
        }
    }
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let ids: Vec<_> = store.ids().collect();
    for (k, id) in ids.into_iter().enumerate() {
        Zip::from(store.get_mut(id))
            .and(&grads[k])
            .and(&mut state.m[k])
            .and(&mut state.v[k])
            .for_each(|p, &g, m, v| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use ndarray::{ArrayD, IxDyn};

    use super::*;

    fn scalar_store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", ArrayD::from_elem(IxDyn(&[1]), v));
        s
    }

    #[test]
    fn zero_grad_keeps_params() {
        let mut s = scalar_store(1.5);
        let mut st = AdamState::new(&s, AdamConfig::default());
        adam_step(&mut s, &[ArrayD::zeros(IxDyn(&[1]))], &mut st).unwrap();
        assert_eq!(s.get(s.ids().next().unwrap())[0], 1.5);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_closed_form() {
        let mut s = scalar_store(0.0);
        let cfg = AdamConfig::default();
        let mut st = AdamState::new(&s, cfg);
        adam_step(&mut s, &[ArrayD::from_elem(IxDyn(&[1]), 1.0)], &mut st).unwrap();
        let expect = -cfg.lr / (1.0 + cfg.eps);
        assert!((s.get(s.ids().next().unwrap())[0] - expect).abs() < 1e-18);
    }

    #[test]
    fn deterministic_trajectory() {
        let run = || {
            let mut s = scalar_store(2.0);
            let mut st = AdamState::new(&s, AdamConfig::default());
            let id = s.ids().next().unwrap();
            let mut traj = Vec::new();
            for _ in 0..50 {
                let x = s.get(id)[0];
                adam_step(&mut s, &[ArrayD::from_elem(IxDyn(&[1]), 2.0 * x)], &mut st).unwrap();
                traj.push(s.get(id)[0].to_bits());
            }
            traj
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch() {
        let mut s = scalar_store(0.0);
        let mut st = AdamState::new(&s, AdamConfig::default());
        assert!(adam_step(&mut s, &[ArrayD::zeros(IxDyn(&[2]))], &mut st).is_err());
        assert!(adam_step(&mut s, &[], &mut st).is_err());
    }
}
