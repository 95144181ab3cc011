use serde::{Deserialize, Serialize};

use super::{GradSet, NnError, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay applied to weight tensors (not biases) each step.
    #[serde(default)]
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.lr * self.weight_decay < 1.0;
        if ok {
            Ok(())
        } else {
            Err(NnError::Spec(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self { m: zeros.clone(), v: zeros, t: 0, config }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut ParamSet, grads: &GradSet, state: &mut AdamState) -> Result<(), NnError> {
    adam_step_except(params, grads, state, None)
}

/// [`adam_step`] that leaves tensors whose name starts with `frozen`
/// (and their moments) untouched.
pub fn adam_step_except(
    params: &mut ParamSet,
    grads: &GradSet,
    state: &mut AdamState,
    frozen: Option<&str>,
) -> Result<(), NnError> {
    state.config.validate()?;
    if !grads.same_layout(params) || state.m.len() != params.tensors().len() {
        return Err(NnError::Shape("gradients or optimizer state do not mirror parameters".into()));
    }
    if params.tensors().iter().zip(&state.m).any(|(t, m)| t.len() != m.len()) {
        return Err(NnError::Shape("optimizer moments do not mirror parameters".into()));
    }
    let AdamConfig { lr, beta1, beta2, eps, weight_decay } = state.config;
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for (((p, g), m), v) in params.tensors_mut().iter_mut().zip(&grads.tensors).zip(&mut state.m).zip(&mut state.v) {
        if frozen.is_some_and(|f| p.name.starts_with(f)) {
            continue;
        }
        let decay = if p.name.ends_with(".bias") { 1.0 } else { 1.0 - lr * weight_decay };
        for i in 0..p.data.len() {
            let gi = g.data[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p.data[i] = p.data[i] * decay - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
