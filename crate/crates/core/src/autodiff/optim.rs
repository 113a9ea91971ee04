//! Adam with decoupled weight decay, and SGD with momentum.

use serde::{Deserialize, Serialize};

use super::{ModelError, Parameters, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Hyperparameters. Defaults are the Adam setting (`lr = 1e-3`,
/// `λ = 1e-3`, `β = (0.9, 0.999)`); [`OptimizerConfig::sgd`] gives the SGD
/// defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    #[serde(default)]
    pub lr: Option<f64>,
    #[serde(default)]
    pub weight_decay: Option<f64>,
    #[serde(default)]
    pub betas: Option<(f64, f64)>,
    #[serde(default)]
    pub momentum: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adam()
    }
}

impl OptimizerConfig {
    pub fn adam() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr: None,
            weight_decay: None,
            betas: None,
            momentum: None,
            eps: None,
        }
    }

    pub fn sgd() -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            ..Self::adam()
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr.unwrap_or(match self.kind {
            OptimizerKind::Adam => 1e-3,
            OptimizerKind::Sgd => 1e-2,
        })
    }

    pub fn weight_decay(&self) -> f64 {
        self.weight_decay.unwrap_or(1e-3)
    }

    pub fn betas(&self) -> (f64, f64) {
        self.betas.unwrap_or((0.9, 0.999))
    }

    pub fn momentum(&self) -> f64 {
        self.momentum.unwrap_or(0.9)
    }

    pub fn eps(&self) -> f64 {
        self.eps.unwrap_or(1e-8)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let (b1, b2) = self.betas();
        if !(self.lr() > 0.0) {
            return Err(format!("lr must be positive, got {}", self.lr()));
        }
        if !(self.weight_decay() >= 0.0) {
            return Err("weight_decay must be >= 0".into());
        }
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(format!("betas must lie in [0, 1), got ({b1}, {b2})"));
        }
        if !(0.0..1.0).contains(&self.momentum()) {
            return Err("momentum must lie in [0, 1)".into());
        }
        if !(self.eps() > 0.0) {
            return Err("eps must be positive".into());
        }
        Ok(())
    }
}

/// Optimizer hyperparameters plus per-parameter moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub momentum: f64,
    pub eps: f64,
    step_count: u64,
    /// Adam first moment, or the SGD momentum buffer.
    first: Vec<Vec<f64>>,
    /// Adam second moment; unused by SGD.
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(config: &OptimizerConfig, params: &Parameters) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self {
            kind: config.kind,
            lr: config.lr(),
            weight_decay: config.weight_decay(),
            betas: config.betas(),
            momentum: config.momentum(),
            eps: config.eps(),
            step_count: 0,
            second: match config.kind {
                OptimizerKind::Adam => zeros.clone(),
                OptimizerKind::Sgd => Vec::new(),
            },
            first: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Moment buffer lengths, one per parameter (first moment / momentum).
    pub fn buffer_lens(&self) -> Vec<usize> {
        self.first.iter().map(Vec::len).collect()
    }

    fn check(&self, params: &Parameters) -> Result<()> {
        let ok = self.first.len() == params.len()
            && self.first.iter().zip(params.iter()).all(|(m, p)| m.len() == p.value.len());
        if ok {
            Ok(())
        } else {
            Err(ModelError::ParamMismatch(
                "optimizer buffers do not match parameters".into(),
            ))
        }
    }

    /// Applies one update of whichever kind this state was built for.
    pub fn step(&mut self, params: &mut Parameters) -> Result<()> {
        match self.kind {
            OptimizerKind::Adam => self.adam_step(params),
            OptimizerKind::Sgd => self.sgd_step(params),
        }
    }

    /// Bias-corrected Adam; weight decay shrinks values by `1 - lr·λ`
    /// before the moment update is applied.
    pub fn adam_step(&mut self, params: &mut Parameters) -> Result<()> {
        if self.kind != OptimizerKind::Adam {
            return Err(ModelError::OptimizerKind {
                expected: OptimizerKind::Adam,
                actual: self.kind,
            });
        }
        self.check(params)?;
        self.step_count += 1;
        let (b1, b2) = self.betas;
        let t = self.step_count as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let decay = 1.0 - self.lr * self.weight_decay;
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let grads = p.grad.as_real().expect("real gradient").to_vec();
            for (((x, g), mi), vi) in p.values_mut().iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (1.0 - b1) * g;
                *vi = b2 * *vi + (1.0 - b2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *x *= decay;
                *x -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    /// `m ← μ·m + g; x ← x − lr·(m + λ·x)`.
    pub fn sgd_step(&mut self, params: &mut Parameters) -> Result<()> {
        if self.kind != OptimizerKind::Sgd {
            return Err(ModelError::OptimizerKind {
                expected: OptimizerKind::Sgd,
                actual: self.kind,
            });
        }
        self.check(params)?;
        self.step_count += 1;
        for (p, m) in params.iter_mut().zip(&mut self.first) {
            let grads = p.grad.as_real().expect("real gradient").to_vec();
            for ((x, g), mi) in p.values_mut().iter_mut().zip(grads).zip(m.iter_mut()) {
                *mi = self.momentum * *mi + g;
                *x -= self.lr * (*mi + self.weight_decay * *x);
            }
        }
        Ok(())
    }
}
