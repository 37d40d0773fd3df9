//! Parameter updates: Adam and plain SGD.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::{to_f32_grid, Gradients, NetParams};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Optimizer {
    #[default]
    Adam,
    Sgd,
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Optimizer::Adam => "adam",
            Optimizer::Sgd => "sgd",
        })
    }
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adam" => Ok(Optimizer::Adam),
            "sgd" => Ok(Optimizer::Sgd),
            other => Err(Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

/// First and second moment estimates, flattened in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &NetParams) -> Self {
        let n = params.param_count();
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

fn check_step(params: &NetParams, grads: &Gradients, learning_rate: f64) -> Result<()> {
    if !(learning_rate.is_finite() && learning_rate > 0.0) {
        return Err(Error::param(
            "learning_rate",
            format!("must be finite and > 0, got {learning_rate}"),
        ));
    }
    let same = grads.weights.len() == params.layers.len()
        && params
            .layers
            .iter()
            .zip(grads.weights.iter().zip(&grads.biases))
            .all(|(l, (w, b))| l.weights.len() == w.len() && l.bias.len() == b.len());
    if !same {
        return Err(Error::Shape("gradient shapes do not match parameters".into()));
    }
    if !grads.is_finite() {
        let flat = grads.flat();
        let i = flat.iter().position(|g| !g.is_finite()).unwrap_or(0);
        return Err(Error::NonFinite(format!(
            "gradient entry {i} is {}; step rejected",
            flat[i]
        )));
    }
    Ok(())
}

fn for_each_param(params: &mut NetParams, mut f: impl FnMut(usize, &mut f64)) {
    let mut i = 0;
    for layer in &mut params.layers {
        for p in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
            f(i, p);
            i += 1;
        }
    }
}

/// One bias-corrected Adam update in place. Parameters stay on the `f32` grid.
pub fn adam_step(
    params: &mut NetParams,
    grads: &Gradients,
    state: &mut AdamState,
    learning_rate: f64,
) -> Result<()> {
    check_step(params, grads, learning_rate)?;
    if state.m.len() != params.param_count() || state.v.len() != state.m.len() {
        return Err(Error::Shape("optimizer state does not match parameters".into()));
    }
    let g = grads.flat();
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let (m, v) = (&mut state.m, &mut state.v);
    for_each_param(params, |i, p| {
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        *p = to_f32_grid(*p - learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS));
    });
    Ok(())
}

/// Plain gradient descent in place.
pub fn sgd_step(params: &mut NetParams, grads: &Gradients, learning_rate: f64) -> Result<()> {
    check_step(params, grads, learning_rate)?;
    let g = grads.flat();
    for_each_param(params, |i, p| *p = to_f32_grid(*p - learning_rate * g[i]));
    Ok(())
}
