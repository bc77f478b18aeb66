use alloc::collections::BTreeMap;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use super::{NumericsError, ParamStore, Tensor2};

/// AdamW hyper-parameters (decoupled weight decay).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamW {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Optimizer state: step counter and first/second moment estimates per parameter.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OptState {
    pub config: AdamW,
    pub step: u64,
    pub m: BTreeMap<String, Tensor2>,
    pub v: BTreeMap<String, Tensor2>,
}

impl OptState {
    pub fn new(config: AdamW) -> Self {
        Self {
            config,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

/// One AdamW update of every parameter that has a gradient in `grads`.
/// Parameters without a gradient are left untouched.
pub fn adamw_step(
    params: &mut ParamStore,
    grads: &BTreeMap<String, Tensor2>,
    state: &mut OptState,
) -> Result<(), NumericsError> {
    let cfg = state.config;
    if !(cfg.lr > 0.0) {
        return Err(NumericsError::InvalidHyperParameter("lr must be > 0"));
    }
    for (name, g) in grads {
        let p = params
            .get(name)
            .ok_or_else(|| NumericsError::UnknownParam(name.clone()))?;
        if p.shape() != g.shape() {
            return Err(NumericsError::shape("adamw_step", p.shape(), g.shape()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    for (name, g) in grads {
        let p = params.get_mut(name).expect("checked above");
        let (r, c) = p.shape();
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| Tensor2::zeros(r, c));
        let v = state
            .v
            .entry(name.clone())
            .or_insert_with(|| Tensor2::zeros(r, c));
        let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
        for i in 0..pd.len() {
            let gi = g.data()[i];
            md[i] = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * gi;
            vd[i] = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = md[i] / bc1;
            let v_hat = vd[i] / bc2;
            pd[i] -= cfg.lr * (m_hat / (libm::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * pd[i]);
        }
    }
    Ok(())
}
