use ndarray::{Array1, Array2, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{LossMode, ModelConfig, TrainConfig};
use super::flow::flow_target;
use super::network::{check_inputs, Net, Query};
use super::weights::ModelWeights;
use super::ConditioningBundle;
use crate::autodiff::Var;
use crate::error::{Error, Result};

/// One training triple: reference frame, differential targets and conditioning.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub x_ref: Array1<f64>,
    pub x_delta: Array2<f64>,
    pub cond: ConditioningBundle,
}

impl TrainingSample {
    pub fn new(x_ref: Array1<f64>, x_delta: Array2<f64>, cond: ConditioningBundle) -> Result<Self> {
        if x_delta.nrows() != cond.n_frames() {
            return Err(Error::shape("target frames", cond.n_frames(), x_delta.nrows()));
        }
        if x_delta.ncols() != x_ref.len() {
            return Err(Error::shape("target columns", x_ref.len(), x_delta.ncols()));
        }
        if x_delta.iter().chain(x_ref.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training sample".into()));
        }
        Ok(Self { x_ref, x_delta, cond })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: ModelWeights,
    /// Mean batch loss before each update.
    pub loss_history: Vec<f64>,
}

struct Draw<'a> {
    sample: &'a TrainingSample,
    t: f64,
    eps0: Array2<f64>,
}

/// Builds a net over every draw and appends the mean per-draw flow loss.
fn batch_loss<'w>(
    weights: &'w ModelWeights,
    trainable: bool,
    draws: &[Draw],
    mode: LossMode,
) -> Result<(Net<'w>, Var)> {
    let lengths: Vec<usize> = draws.iter().map(|d| d.sample.x_delta.nrows()).collect();
    let mut net = Net::new(weights, trainable, &lengths);
    let mut noised = Vec::with_capacity(draws.len());
    let mut targets = Vec::with_capacity(draws.len());
    for d in draws {
        let t = d.t;
        noised.push(
            Zip::from(&d.sample.x_delta)
                .and(&d.eps0)
                .map_collect(|x, e| t * x + (1.0 - t) * e),
        );
        targets.push(flow_target(&d.sample.x_delta, &d.eps0, t, mode)?);
    }
    let queries: Vec<Query> = draws
        .iter()
        .zip(&noised)
        .map(|(d, eps_t)| Query {
            eps_t,
            x_ref: &d.sample.x_ref,
            cond: &d.sample.cond,
            t: d.t,
        })
        .collect();
    let v = net.velocity(&queries);
    let segments = net.segments().to_vec();
    let mut total: Option<Var> = None;
    for (r, target) in segments.into_iter().zip(targets) {
        let vs = if draws.len() == 1 {
            v
        } else {
            net.tape.slice_rows(v, r.start, r.end)
        };
        let y = net.tape.constant(target);
        let diff = net.tape.sub(vs, y);
        let l = net.tape.mean_square(diff);
        total = Some(match total {
            Some(acc) => net.tape.add(acc, l),
            None => l,
        });
    }
    let total = total.ok_or(Error::Empty("training batch"))?;
    let loss = if draws.len() == 1 {
        total
    } else {
        net.tape.scale(total, 1.0 / draws.len() as f64)
    };
    Ok((net, loss))
}

fn collect_grads(net: &Net, grads: &mut crate::autodiff::Gradients, weights: &ModelWeights) -> Vec<Array2<f64>> {
    (0..weights.len())
        .map(|i| match grads.take(net.param(i)) {
            Some(g) if g.is_standard_layout() => g,
            Some(g) => g.as_standard_layout().into_owned(),
            None => Array2::zeros(weights.tensor(i).dim()),
        })
        .collect()
}

fn check_sample(weights: &ModelWeights, sample: &TrainingSample, eps0: &Array2<f64>) -> Result<()> {
    check_inputs(weights, &sample.x_delta, &sample.x_ref, &sample.cond)?;
    if eps0.dim() != sample.x_delta.dim() {
        return Err(Error::shape("noise rows x cols", sample.x_delta.len(), eps0.len()));
    }
    Ok(())
}

/// Flow loss of a single sample with fixed time and noise.
pub fn sample_loss(
    weights: &ModelWeights,
    sample: &TrainingSample,
    t: f64,
    eps0: &Array2<f64>,
    mode: LossMode,
) -> Result<f64> {
    check_sample(weights, sample, eps0)?;
    let draw = Draw {
        sample,
        t,
        eps0: eps0.clone(),
    };
    let (net, loss) = batch_loss(weights, false, &[draw], mode)?;
    Ok(net.tape.scalar(loss))
}

/// Flow loss and its gradient with respect to every weight tensor, in weight order.
pub fn loss_and_gradients(
    weights: &ModelWeights,
    sample: &TrainingSample,
    t: f64,
    eps0: &Array2<f64>,
    mode: LossMode,
) -> Result<(f64, Vec<Array2<f64>>)> {
    check_sample(weights, sample, eps0)?;
    let draw = Draw {
        sample,
        t,
        eps0: eps0.clone(),
    };
    let (net, loss) = batch_loss(weights, true, &[draw], mode)?;
    let mut grads = net.tape.backward(loss);
    Ok((net.tape.scalar(loss), collect_grads(&net, &mut grads, weights)))
}

/// One-cycle learning-rate and momentum schedule with cosine annealing.
#[derive(Debug, Clone, Copy)]
pub struct OneCycle {
    pub max_lr: f64,
    pub total_steps: usize,
    pub pct_start: f64,
    pub div_factor: f64,
    pub final_div_factor: f64,
    pub base_momentum: f64,
    pub max_momentum: f64,
}

fn cos_anneal(start: f64, end: f64, pct: f64) -> f64 {
    end + (start - end) / 2.0 * ((std::f64::consts::PI * pct).cos() + 1.0)
}

impl OneCycle {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            max_lr: cfg.learning_rate,
            total_steps: cfg.steps,
            pct_start: cfg.pct_start,
            div_factor: cfg.div_factor,
            final_div_factor: cfg.final_div_factor,
            base_momentum: 0.85,
            max_momentum: 0.95,
        }
    }

    /// Learning rate and first-moment decay at zero-based `step`.
    pub fn at(&self, step: usize) -> (f64, f64) {
        let initial = self.max_lr / self.div_factor;
        let min = initial / self.final_div_factor;
        let warm_end = self.pct_start * self.total_steps as f64 - 1.0;
        let last = (self.total_steps as f64 - 1.0).max(warm_end + 1.0);
        let s = step as f64;
        if warm_end > 0.0 && s <= warm_end {
            let pct = s / warm_end;
            (
                cos_anneal(initial, self.max_lr, pct),
                cos_anneal(self.max_momentum, self.base_momentum, pct),
            )
        } else {
            let from = warm_end.max(0.0);
            let pct = ((s - from) / (last - from)).clamp(0.0, 1.0);
            (
                cos_anneal(self.max_lr, min, pct),
                cos_anneal(self.base_momentum, self.max_momentum, pct),
            )
        }
    }
}

struct AdamW {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    beta1_pow: f64,
    beta2_pow: f64,
}

const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamW {
    fn new(weights: &ModelWeights) -> Self {
        let zeros = || weights.tensors().iter().map(|t| Array2::zeros(t.dim())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            beta1_pow: 1.0,
            beta2_pow: 1.0,
        }
    }

    fn step(&mut self, params: &mut [Array2<f64>], grads: &[Array2<f64>], lr: f64, beta1: f64, weight_decay: f64) {
        self.beta1_pow *= beta1;
        self.beta2_pow *= BETA2;
        let bc1 = 1.0 - self.beta1_pow;
        let bc2 = 1.0 - self.beta2_pow;
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *p *= 1.0 - lr * weight_decay;
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
            });
        }
    }
}

/// Trains freshly initialized weights for `model`; see [`train_with`].
pub fn train(dataset: &[TrainingSample], model: &ModelConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(ModelWeights::init(model)?, dataset, cfg, |_, _| {})
}

/// Minibatch AdamW under a one-cycle schedule.
///
/// Each sample in a batch draws its own time from the `train_steps` grid
/// (k/T for k = 1..=T, or U(0,1) when the grid size is 0) and its own noise.
/// `on_step(step, loss)` observes the batch loss before the update.
pub fn train_with(
    mut weights: ModelWeights,
    dataset: &[TrainingSample],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    for s in dataset {
        check_inputs(&weights, &s.x_delta, &s.x_ref, &s.cond)?;
    }
    let model = weights.config().clone();
    let schedule = OneCycle::from_config(cfg);
    let mut opt = AdamW::new(&weights);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let batch = cfg.batch_size;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut cursor = order.len();
    let mut history = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let mut picks = Vec::with_capacity(batch);
        while picks.len() < batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            picks.push(order[cursor]);
            cursor += 1;
        }

        let draws: Vec<Draw> = picks
            .iter()
            .map(|&i| {
                let sample = &dataset[i];
                let t = if model.train_steps == 0 {
                    rng.random::<f64>()
                } else {
                    rng.random_range(1..=model.train_steps) as f64 / model.train_steps as f64
                };
                let eps0 = Array2::from_shape_simple_fn(sample.x_delta.dim(), || StandardNormal.sample(&mut rng));
                Draw { sample, t, eps0 }
            })
            .collect();
        let (net, total) = batch_loss(&weights, true, &draws, model.loss_mode)?;
        let loss = net.tape.scalar(total);
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        history.push(loss);
        on_step(step, loss);
        if step % 50 == 0 || step + 1 == cfg.steps {
            log::debug!("step {step}: loss {loss:.6}");
        }

        let mut grads = net.tape.backward(total);
        let grads = collect_grads(&net, &mut grads, &weights);
        drop(net);
        let (lr, beta1) = schedule.at(step);
        opt.step(weights.tensors_mut(), &grads, lr, beta1, cfg.weight_decay);
    }
    Ok(TrainOutcome {
        weights,
        loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{FeatureTrack, TrackKind};
    use crate::flame::StateLayout;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            hidden_dim: 16,
            n_attention_heads: 2,
            n_backbone_blocks: 1,
            linguistic_dim: 4,
            emotion_dim: 2,
            state: StateLayout::new(2, 3, 2),
            ..ModelConfig::toy()
        }
    }

    fn constant_sample(cfg: &ModelConfig, n: usize) -> TrainingSample {
        let s = cfg.state_dim();
        let x_delta = Array2::from_shape_fn((n, s), |(_, j)| 0.5 + 0.1 * j as f64);
        let cond = ConditioningBundle::new(
            FeatureTrack::new(
                Array2::from_elem((n, cfg.linguistic_dim), 0.3),
                25.0,
                TrackKind::Linguistic,
            )
            .unwrap(),
            FeatureTrack::new(Array2::from_elem((n, 1), 0.2), 25.0, TrackKind::Amplitude).unwrap(),
            FeatureTrack::new(Array2::from_elem((n, cfg.emotion_dim), -0.1), 25.0, TrackKind::Emotion).unwrap(),
        )
        .unwrap();
        TrainingSample::new(Array1::zeros(s), x_delta, cond).unwrap()
    }

    #[test]
    fn one_cycle_matches_reference_points() {
        let s = OneCycle {
            max_lr: 1.0,
            total_steps: 11,
            pct_start: 0.3,
            div_factor: 25.0,
            final_div_factor: 1e4,
            base_momentum: 0.85,
            max_momentum: 0.95,
        };
        // warm-up ends at 0.3·11 − 1 = 2.3
        assert!((s.at(0).0 - 0.04).abs() < 1e-15);
        assert!((s.at(0).1 - 0.95).abs() < 1e-15);
        let peak_pct: f64 = 2.0 / 2.3;
        let expected = 1.0 + (0.04 - 1.0) / 2.0 * ((std::f64::consts::PI * peak_pct).cos() + 1.0);
        assert!((s.at(2).0 - expected).abs() < 1e-15);
        assert!((s.at(10).0 - 0.04 / 1e4).abs() < 1e-15);
        assert!((s.at(10).1 - 0.95).abs() < 1e-15);
        let lrs: Vec<f64> = (3..11).map(|i| s.at(i).0).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn overfits_a_constant_target() {
        let cfg = ModelConfig {
            loss_mode: LossMode::Interpolant,
            train_steps: 0,
            ..tiny_config()
        };
        let data = vec![constant_sample(&cfg, 3)];
        let train_cfg = TrainConfig {
            steps: 200,
            batch_size: 1,
            learning_rate: 1e-2,
            seed: 3,
            ..TrainConfig::default()
        };
        // the interpolant target depends on ε₀, so overfit the noise-free limit t = 1
        let cfg = ModelConfig { train_steps: 1, ..cfg };
        let out = train(&data, &cfg, &train_cfg).unwrap();
        let first = out.loss_history[0];
        let last = *out.loss_history.last().unwrap();
        assert!(last < 0.01 * first, "loss {first} -> {last}");
    }

    #[test]
    fn training_is_reproducible() {
        let cfg = tiny_config();
        let data = vec![constant_sample(&cfg, 3), constant_sample(&cfg, 2)];
        let train_cfg = TrainConfig {
            steps: 5,
            batch_size: 2,
            learning_rate: 1e-3,
            seed: 1,
            ..TrainConfig::default()
        };
        let a = train(&data, &cfg, &train_cfg).unwrap();
        let b = train(&data, &cfg, &train_cfg).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        assert_eq!(a.weights.tensors(), b.weights.tensors());
        assert_eq!(a.loss_history.len(), 5);
    }

    #[test]
    fn rejects_empty_dataset_and_reports_divergence() {
        let cfg = tiny_config();
        assert!(matches!(
            train(&[], &cfg, &TrainConfig::default()),
            Err(Error::Empty(_))
        ));
        let data = vec![constant_sample(&cfg, 3)];
        let mut w = ModelWeights::init(&cfg).unwrap();
        w.get_mut("identity.out.fc2.b").unwrap().fill(1e200);
        let r = train_with(
            w,
            &data,
            &TrainConfig {
                steps: 2,
                ..TrainConfig::default()
            },
            |_, _| {},
        );
        assert!(matches!(r, Err(Error::Diverged { step: 0, .. })), "{r:?}");
    }

    #[test]
    fn gradients_match_finite_differences_on_a_tiny_model() {
        let cfg = tiny_config();
        let mut w = ModelWeights::init(&cfg).unwrap();
        w.randomize(5, 0.4);
        let sample = constant_sample(&cfg, 3);
        let eps0 = crate::model::initial_noise(3, cfg.state_dim(), 2);
        let (_, grads) = loss_and_gradients(&w, &sample, 0.35, &eps0, LossMode::Rectified).unwrap();
        let h = 1e-5;
        for i in (0..w.len()).step_by(3) {
            let probe = [0, w.tensor(i).len() - 1];
            for &j in &probe {
                let mut plus = w.clone();
                plus.tensor_mut(i).as_slice_mut().unwrap()[j] += h;
                let mut minus = w.clone();
                minus.tensor_mut(i).as_slice_mut().unwrap()[j] -= h;
                let lp = sample_loss(&plus, &sample, 0.35, &eps0, LossMode::Rectified).unwrap();
                let lm = sample_loss(&minus, &sample, 0.35, &eps0, LossMode::Rectified).unwrap();
                let numeric = (lp - lm) / (2.0 * h);
                let analytic = grads[i].as_slice().unwrap()[j];
                assert!(
                    (numeric - analytic).abs() <= 1e-6 + 1e-4 * numeric.abs(),
                    "{}[{j}]: analytic {analytic} numeric {numeric}",
                    w.names()[i]
                );
            }
        }
    }
}
