use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flame::StateLayout;

/// Regression target of the flow objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// The interpolant point `t·x_Δ + (1−t)·ε₀`.
    Interpolant,
    /// The straight-path velocity `x_Δ − ε₀`.
    #[default]
    Rectified,
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interpolant" => Ok(Self::Interpolant),
            "rectified" => Ok(Self::Rectified),
            other => Err(Error::Invalid(format!("unknown loss mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub n_backbone_blocks: usize,
    pub hidden_dim: usize,
    pub n_attention_heads: usize,
    /// Blocks per prediction head.
    pub branch_blocks: usize,
    /// Feed-forward width as a multiple of `hidden_dim`.
    pub ffn_mult: usize,
    pub linguistic_dim: usize,
    pub emotion_dim: usize,
    pub state: StateLayout,
    /// Size of the timestep grid sampled during training; 0 draws t continuously.
    pub train_steps: usize,
    pub infer_steps: usize,
    pub loss_mode: LossMode,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_backbone_blocks: 6,
            hidden_dim: 768,
            n_attention_heads: 12,
            branch_blocks: 2,
            ffn_mult: 4,
            linguistic_dim: 768,
            emotion_dim: 768,
            state: StateLayout::FLAME,
            train_steps: 512,
            infer_steps: 32,
            loss_mode: LossMode::Rectified,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Desk-scale configuration used by tests and the toy pipeline.
    pub fn toy() -> Self {
        Self {
            n_backbone_blocks: 2,
            hidden_dim: 64,
            n_attention_heads: 4,
            branch_blocks: 1,
            ffn_mult: 4,
            linguistic_dim: 16,
            emotion_dim: 8,
            ..Self::default()
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state.total()
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.n_attention_heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        self.state.validate()?;
        let dims = [
            ("hidden_dim", self.hidden_dim),
            ("n_attention_heads", self.n_attention_heads),
            ("ffn_mult", self.ffn_mult),
            ("linguistic_dim", self.linguistic_dim),
            ("emotion_dim", self.emotion_dim),
            ("infer_steps", self.infer_steps),
            ("state.psi", self.state.psi),
            ("state.beta + state.delta", self.state.beta + self.state.delta),
        ];
        for (name, value) in dims {
            if value == 0 {
                return Err(Error::Invalid(format!("{name} must be at least 1")));
            }
        }
        if self.hidden_dim % self.n_attention_heads != 0 {
            return Err(Error::Invalid(format!(
                "hidden_dim {} is not divisible by {} attention heads",
                self.hidden_dim, self.n_attention_heads
            )));
        }
        if self.hidden_dim % 2 != 0 {
            return Err(Error::Invalid(
                "hidden_dim must be even for the timestep embedding".into(),
            ));
        }
        Ok(())
    }
}

/// Optimizer and schedule settings for [`train`](super::train).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// Peak rate of the one-cycle schedule.
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Fraction of the run spent warming up.
    pub pct_start: f64,
    pub div_factor: f64,
    pub final_div_factor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 128,
            learning_rate: 1e-4,
            weight_decay: 0.01,
            pct_start: 0.3,
            div_factor: 25.0,
            final_div_factor: 1e4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Settings for the desk-scale toy corpus: a larger peak rate and batch
    /// than the full-scale defaults, sized to converge within 500 steps.
    pub fn toy() -> Self {
        Self {
            steps: 500,
            batch_size: 48,
            learning_rate: 5e-3,
            seed: 7,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::Invalid("steps and batch_size must be at least 1".into()));
        }
        let finite_positive = |v: f64| v.is_finite() && v > 0.0;
        if !finite_positive(self.learning_rate)
            || !finite_positive(self.div_factor)
            || !finite_positive(self.final_div_factor)
        {
            return Err(Error::Invalid(
                "learning rate and schedule factors must be positive".into(),
            ));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Invalid("weight_decay must be non-negative".into()));
        }
        if !(self.pct_start > 0.0 && self.pct_start < 1.0) {
            return Err(Error::Invalid("pct_start must lie in (0, 1)".into()));
        }
        Ok(())
    }
}
