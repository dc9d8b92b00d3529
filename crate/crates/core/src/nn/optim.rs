use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Gradients, Network, NnError, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(NnError::InvalidConfig("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(NnError::InvalidConfig("betas must be in [0, 1)"));
        }
        Ok(())
    }
}

/// One bias-corrected Adam update of a flat parameter slice. `t` is the
/// 1-based step number.
pub fn adam_update<S: Real>(params: &mut [S], grads: &[S], m: &mut [S], v: &mut [S], t: u64, cfg: &AdamConfig) {
    let b1 = S::from_f64(cfg.beta1);
    let b2 = S::from_f64(cfg.beta2);
    let one = S::one();
    let c1 = 1.0 - libm_powi(cfg.beta1, t);
    let c2 = 1.0 - libm_powi(cfg.beta2, t);
    // lr * mhat / (sqrt(vhat) + eps) with mhat = m/c1, vhat = v/c2
    let step = S::from_f64(cfg.learning_rate / c1);
    let inv_c2 = S::from_f64(1.0 / c2);
    let eps = S::from_f64(cfg.epsilon);
    for (((p, &g), mi), vi) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *mi = b1 * *mi + (one - b1) * g;
        *vi = b2 * *vi + (one - b2) * g * g;
        *p = *p - step * *mi / ((*vi * inv_c2).sqrt() + eps);
    }
}

fn libm_powi(base: f64, exp: u64) -> f64 {
    let mut acc = 1.0;
    let mut b = base;
    let mut e = exp;
    while e > 0 {
        if e & 1 == 1 {
            acc *= b;
        }
        b *= b;
        e >>= 1;
    }
    acc
}

struct Moments<S> {
    m_w: Vec<S>,
    v_w: Vec<S>,
    m_b: Vec<S>,
    v_b: Vec<S>,
}

/// Adam optimizer state for one network.
pub struct Adam<S> {
    pub config: AdamConfig,
    t: u64,
    moments: Vec<Option<Moments<S>>>,
}

impl<S: Real> Adam<S> {
    pub fn new(net: &Network<S>, config: AdamConfig) -> Result<Self, NnError> {
        config.validate()?;
        let moments = net
            .params()
            .iter()
            .map(|p| {
                p.as_ref().map(|p| Moments {
                    m_w: super::kernels::zeros(p.weights.len()),
                    v_w: super::kernels::zeros(p.weights.len()),
                    m_b: super::kernels::zeros(p.bias.len()),
                    v_b: super::kernels::zeros(p.bias.len()),
                })
            })
            .collect();
        Ok(Self { config, t: 0, moments })
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update. Frozen layers are left untouched.
    pub fn step(&mut self, net: &mut Network<S>, grads: &Gradients<S>) -> Result<(), NnError> {
        if grads.layers.len() != self.moments.len() {
            return Err(NnError::ShapeMismatch { expected: self.moments.len(), actual: grads.layers.len() });
        }
        self.t += 1;
        for (i, (g, mom)) in grads.layers.iter().zip(self.moments.iter_mut()).enumerate() {
            if net.is_frozen(i) {
                continue;
            }
            let (Some(g), Some(mom)) = (g, mom) else { continue };
            let p = net.layer_params_mut(i).ok_or(NnError::InvalidArchitecture("missing parameters"))?;
            if p.weights.len() != g.weights.len() || p.bias.len() != g.bias.len() {
                return Err(NnError::ShapeMismatch { expected: p.len(), actual: g.len() });
            }
            adam_update(&mut p.weights, &g.weights, &mut mom.m_w, &mut mom.v_w, self.t, &self.config);
            adam_update(&mut p.bias, &g.bias, &mut mom.m_b, &mut mom.v_b, self.t, &self.config);
        }
        Ok(())
    }
}
