use ndarray::{Array1, Array2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::LossMode;
use super::network::predict_velocity;
use super::weights::ModelWeights;
use super::ConditioningBundle;
use crate::error::{Error, Result};
use crate::flame::{ParamSequence, StateLayout};

/// Regression target at time `t` for the given mode.
pub fn flow_target(x_delta: &Array2<f64>, eps0: &Array2<f64>, t: f64, mode: LossMode) -> Result<Array2<f64>> {
    if x_delta.dim() != eps0.dim() {
        return Err(Error::Invalid(format!(
            "target shape {:?} differs from noise shape {:?}",
            x_delta.dim(),
            eps0.dim()
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Invalid(format!("flow time {t} outside [0, 1]")));
    }
    Ok(match mode {
        LossMode::Interpolant => Zip::from(x_delta).and(eps0).map_collect(|x, e| t * x + (1.0 - t) * e),
        LossMode::Rectified => x_delta - eps0,
    })
}

/// Mean squared error between a predicted velocity and the mode's target.
pub fn flow_loss(
    v_hat: &Array2<f64>,
    x_delta: &Array2<f64>,
    eps0: &Array2<f64>,
    t: f64,
    mode: LossMode,
) -> Result<f64> {
    let target = flow_target(x_delta, eps0, t, mode)?;
    if v_hat.dim() != target.dim() {
        return Err(Error::Invalid(format!(
            "prediction shape {:?} differs from target shape {:?}",
            v_hat.dim(),
            target.dim()
        )));
    }
    if target.is_empty() {
        return Err(Error::Empty("flow loss input"));
    }
    let sum: f64 = Zip::from(v_hat)
        .and(&target)
        .fold(0.0, |acc, v, y| acc + (v - y) * (v - y));
    Ok(sum / target.len() as f64)
}

/// Anything that yields a velocity for the Euler sampler.
pub trait VelocityField {
    fn layout(&self) -> StateLayout;

    fn velocity(
        &self,
        eps: &Array2<f64>,
        x_ref: &Array1<f64>,
        cond: &ConditioningBundle,
        t: f64,
    ) -> Result<Array2<f64>>;
}

impl VelocityField for ModelWeights {
    fn layout(&self) -> StateLayout {
        self.config().state
    }

    fn velocity(
        &self,
        eps: &Array2<f64>,
        x_ref: &Array1<f64>,
        cond: &ConditioningBundle,
        t: f64,
    ) -> Result<Array2<f64>> {
        predict_velocity(self, eps, x_ref, cond, t)
    }
}

/// Standard normal starting state drawn from `seed`.
pub fn initial_noise(n_frames: usize, dim: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((n_frames, dim), || StandardNormal.sample(&mut rng))
}

/// Forward Euler from seeded noise: `ε ← ε + v(ε, k/T)/T` for k = 1..=T.
///
/// The result is a differential sequence anchored at `x_ref`, one row per
/// conditioning frame.
pub fn generate(
    field: &impl VelocityField,
    x_ref: &Array1<f64>,
    cond: &ConditioningBundle,
    t_inf: usize,
    seed: u64,
) -> Result<ParamSequence> {
    if t_inf == 0 {
        return Err(Error::Invalid("T_inf must be at least 1".into()));
    }
    let layout = field.layout();
    let mut eps = initial_noise(cond.n_frames(), layout.total(), seed);
    let dt = 1.0 / t_inf as f64;
    for k in 1..=t_inf {
        let v = field.velocity(&eps, x_ref, cond, k as f64 / t_inf as f64)?;
        if v.dim() != eps.dim() {
            return Err(Error::shape("velocity rows x cols", eps.len(), v.len()));
        }
        eps.scaled_add(dt, &v);
    }
    if eps.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("generated sequence".into()));
    }
    ParamSequence::differential(eps, cond.fps(), layout, x_ref.clone())
}
