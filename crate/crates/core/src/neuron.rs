//! Hard-reset integrate-and-fire dynamics.
//!
//! One step of a layer is
//!
//! ```text
//! u(t) = (1 - s(t-1)) * u(t-1) + I(t)
//! s(t) = H(u(t) - v_th)
//! ```
//!
//! where `I(t)` is the synaptic drive `W s_in(t) + b` and `H` fires on
//! equality. Training replaces `dH/dx` with the arctangent surrogate
//! `alpha / (2 (1 + (pi/2 * alpha * x)^2))`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{DType, Tensor, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuronError {
    #[error("invalid neuron config: {0}")]
    InvalidConfig(String),
    #[error("spike operands must be in {{0, 1}}")]
    NotBinary,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = NeuronError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuronConfig {
    pub v_th: f64,
    /// Surrogate sharpness.
    pub alpha: f64,
}

impl Default for NeuronConfig {
    fn default() -> Self {
        Self {
            v_th: 1.0,
            alpha: 2.0,
        }
    }
}

impl NeuronConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_th > 0.0) || !(self.alpha > 0.0) {
            return Err(NeuronError::InvalidConfig(format!(
                "v_th and alpha must be positive, got v_th={} alpha={}",
                self.v_th, self.alpha
            )));
        }
        Ok(())
    }
}

#[inline]
pub fn heaviside_scalar(x: f64, v_th: f64) -> f64 {
    if x - v_th >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Arctangent surrogate derivative at `x = u - v_th`.
#[inline]
pub fn atan_surrogate(x: f64, alpha: f64) -> f64 {
    let z = FRAC_PI_2 * alpha * x;
    alpha / (2.0 * (1.0 + z * z))
}

/// Smooth primitive of [`atan_surrogate`]: `1/2 + atan(pi/2 * alpha * x) / pi`.
#[inline]
pub fn atan_relaxed(x: f64, alpha: f64) -> f64 {
    0.5 + (FRAC_PI_2 * alpha * x).atan() / PI
}

/// `1` where `x - v_th >= 0`, else `0`.
pub fn heaviside(x: &Tensor, v_th: f64) -> Tensor {
    let bits = x
        .to_real_vec()
        .into_iter()
        .map(|v| heaviside_scalar(v, v_th) as u8)
        .collect();
    Tensor::from_bits(x.shape(), bits).expect("heaviside output is binary")
}

pub fn surrogate_grad(x: &Tensor, alpha: f64) -> Tensor {
    let g = x
        .to_real_vec()
        .into_iter()
        .map(|v| atan_surrogate(v, alpha))
        .collect();
    Tensor::from_real(x.shape(), g).expect("same shape")
}

/// Membrane potentials and last emitted spikes of one IF layer.
#[derive(Debug, Clone, PartialEq)]
pub struct IfLayerState {
    u: Tensor,
    s_prev: Tensor,
}

impl IfLayerState {
    /// Resting state: zero potential, no previous spike.
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            u: Tensor::zeros(shape, DType::Real64),
            s_prev: Tensor::zeros(shape, DType::Bit),
        }
    }

    pub fn new(u: Tensor, s_prev: Tensor) -> Result<Self> {
        if u.shape() != s_prev.shape() {
            return Err(TensorError::ShapeMismatch {
                left: u.shape().to_vec(),
                right: s_prev.shape().to_vec(),
            }
            .into());
        }
        let s_prev = s_prev.to_bits().map_err(|_| NeuronError::NotBinary)?;
        Ok(Self {
            u: u.to_real(),
            s_prev,
        })
    }

    pub fn potential(&self) -> &Tensor {
        &self.u
    }

    pub fn last_spikes(&self) -> &Tensor {
        &self.s_prev
    }
}

/// Advances one timestep. Returns the new state and the spikes it emitted.
pub fn if_step(
    state: &IfLayerState,
    input_current: &Tensor,
    cfg: &NeuronConfig,
) -> Result<(IfLayerState, Tensor)> {
    if input_current.shape() != state.u.shape() {
        return Err(TensorError::ShapeMismatch {
            left: state.u.shape().to_vec(),
            right: input_current.shape().to_vec(),
        }
        .into());
    }
    let u_old = state.u.as_real().expect("real potential");
    let s_old = state.s_prev.as_bits().expect("bit spikes");
    let drive = input_current.to_real_vec();
    let mut u = Vec::with_capacity(u_old.len());
    let mut s = Vec::with_capacity(u_old.len());
    for i in 0..u_old.len() {
        let v = (1.0 - s_old[i] as f64) * u_old[i] + drive[i];
        u.push(v);
        s.push(heaviside_scalar(v, cfg.v_th) as u8);
    }
    let shape = state.u.shape();
    let spikes = Tensor::from_bits(shape, s)?;
    let next = IfLayerState {
        u: Tensor::from_real(shape, u)?,
        s_prev: spikes.clone(),
    };
    Ok((next, spikes))
}

/// Element-wise combiner of a spiking residual block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SewMode {
    Add,
    And,
    Iand,
}

impl SewMode {
    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            SewMode::Add => a + b,
            SewMode::And => a * b,
            SewMode::Iand => (1.0 - a) * b,
        }
    }

    /// Partial derivatives `(d/da, d/db)` of [`SewMode::apply`].
    #[inline]
    pub fn partials(self, a: f64, b: f64) -> (f64, f64) {
        match self {
            SewMode::Add => (1.0, 1.0),
            SewMode::And => (b, a),
            SewMode::Iand => (-b, 1.0 - a),
        }
    }
}

/// Combines branch spikes `s_a` with shortcut spikes `s_b`.
///
/// `Add` keeps integer counts in `{0, 1, 2}` (int64); `And`/`Iand` return bits.
pub fn sew_combine(s_a: &Tensor, s_b: &Tensor, mode: SewMode) -> Result<Tensor> {
    if s_a.shape() != s_b.shape() {
        return Err(TensorError::ShapeMismatch {
            left: s_a.shape().to_vec(),
            right: s_b.shape().to_vec(),
        }
        .into());
    }
    let a = s_a.to_bits().map_err(|_| NeuronError::NotBinary)?;
    let b = s_b.to_bits().map_err(|_| NeuronError::NotBinary)?;
    let (a, b) = (a.as_bits().unwrap(), b.as_bits().unwrap());
    let out: Vec<i64> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| mode.apply(x as f64, y as f64) as i64)
        .collect();
    let t = Tensor::from_int(s_a.shape(), out)?;
    Ok(match mode {
        SewMode::Add => t,
        SewMode::And | SewMode::Iand => t.to_bits()?,
    })
}
