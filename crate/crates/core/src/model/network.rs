//! Forward pass of the flow transformer, expressed on the autodiff tape so the
//! same code serves inference, training and gradient checks.

use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::weights::{Attention, Block, Head, Linear, Mlp, ModelWeights, Norm};
use super::ConditioningBundle;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

/// Scales t ∈ [0, 1] onto the range the sinusoid frequencies are tuned for.
const TIME_SCALE: f64 = 1000.0;

/// Sinusoidal timestep embedding: `[sin(t·s·ω_i) | cos(t·s·ω_i)]`, ω_i = 10000^(−i/half).
pub fn timestep_embedding(t: f64, dim: usize) -> Array1<f64> {
    let half = dim / 2;
    let mut out = Array1::zeros(dim);
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        let arg = t * TIME_SCALE * freq;
        out[i] = arg.sin();
        out[half + i] = arg.cos();
    }
    out
}

pub(crate) struct Net<'w> {
    pub tape: Tape,
    params: Vec<Var>,
    weights: &'w ModelWeights,
    /// Row range of each stacked sequence.
    segments: Vec<Range<usize>>,
    /// One-hot map from per-sequence rows to frame rows; absent for a single sequence.
    spread: Option<Var>,
}

/// One sequence of a (possibly batched) velocity evaluation.
pub(crate) struct Query<'a> {
    pub eps_t: &'a Array2<f64>,
    pub x_ref: &'a Array1<f64>,
    pub cond: &'a ConditioningBundle,
    pub t: f64,
}

/// Tape handles of one velocity evaluation, split by head.
pub(crate) struct HeadOutputs {
    pub beta: Var,
    pub delta: Var,
    pub jaw: Var,
    pub head: Var,
    pub psi: Var,
}

fn stack(parts: Vec<ArrayView2<f64>>) -> Array2<f64> {
    ndarray::concatenate(Axis(0), &parts).expect("stacked parts share a width")
}

impl<'w> Net<'w> {
    /// Loads every weight onto a fresh tape for sequences of the given frame
    /// counts, stacked row-wise; `trainable` decides whether weights receive gradients.
    pub fn new(weights: &'w ModelWeights, trainable: bool, lengths: &[usize]) -> Self {
        let mut tape = Tape::new();
        let params = weights
            .tensors()
            .iter()
            .map(|t| {
                if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        let mut start = 0;
        let segments: Vec<Range<usize>> = lengths
            .iter()
            .map(|n| {
                start += n;
                start - n..start
            })
            .collect();
        let spread = (segments.len() > 1).then(|| {
            let mut p = Array2::zeros((start, segments.len()));
            for (b, r) in segments.iter().enumerate() {
                p.slice_mut(s![r.clone(), b]).fill(1.0);
            }
            tape.constant(p)
        });
        Self {
            tape,
            params,
            weights,
            segments,
            spread,
        }
    }

    pub fn param(&self, index: usize) -> Var {
        self.params[index]
    }

    pub fn segments(&self) -> &[Range<usize>] {
        &self.segments
    }

    /// Repeats row b of a per-sequence matrix over sequence b's frames.
    fn spread(&mut self, rows: Var) -> Var {
        match self.spread {
            Some(p) => self.tape.matmul(p, rows),
            None => {
                let n = self.segments.first().map_or(0, |r| r.len());
                self.tape.broadcast_rows(rows, n)
            }
        }
    }

    fn linear(&mut self, x: Var, l: Linear) -> Var {
        let y = self.tape.matmul(x, self.params[l.w]);
        self.tape.add_row(y, self.params[l.b])
    }

    fn norm(&mut self, x: Var, n: Norm) -> Var {
        let z = self.tape.layer_norm(x);
        let z = self.tape.mul_row(z, self.params[n.gain]);
        self.tape.add_row(z, self.params[n.bias])
    }

    fn mlp(&mut self, x: Var, m: Mlp) -> Var {
        let h = self.linear(x, m.fc1);
        let h = self.tape.gelu(h);
        self.linear(h, m.fc2)
    }

    fn attention(&mut self, queries: Var, kv: Var, a: Attention) -> Var {
        let q = self.linear(queries, a.q);
        let k = self.linear(kv, a.k);
        let v = self.linear(kv, a.v);
        let heads = self.weights.config().n_attention_heads;
        let merged = if self.segments.len() == 1 {
            let (nq, nk) = (self.tape.value(q).nrows(), self.tape.value(k).nrows());
            self.tape.attention(
                q,
                k,
                v,
                heads,
                std::slice::from_ref(&(0..nq)),
                std::slice::from_ref(&(0..nk)),
            )
        } else {
            let segs = self.segments.clone();
            self.tape.attention(q, k, v, heads, &segs, &segs)
        };
        self.linear(merged, a.o)
    }

    /// `kv = None` in a block with cross-attention takes the amplitude-free
    /// path: with no values the sublayer contributes only its output bias.
    fn block(&mut self, mut x: Var, block: &Block, kv: Option<Var>) -> Var {
        if let Some((n, a)) = block.self_attn {
            let z = self.norm(x, n);
            let y = self.attention(z, z, a);
            x = self.tape.add(x, y);
        }
        if let Some((n, a)) = block.cross {
            x = match kv {
                Some(c) => {
                    let z = self.norm(x, n);
                    let y = self.attention(z, c, a);
                    self.tape.add(x, y)
                }
                None => self.tape.add_row(x, self.params[a.o.b]),
            };
        }
        let (n, m) = block.ffn;
        let z = self.norm(x, n);
        let y = self.mlp(z, m);
        self.tape.add(x, y)
    }

    fn head(&mut self, mut x: Var, head: &Head, kv: Option<Var>) -> Var {
        for block in &head.blocks {
            x = self.block(x, block, kv);
        }
        let z = self.norm(x, head.norm);
        self.mlp(z, head.out)
    }

    /// `MLP_a(ε_t) + MLP_b(x_ref)` with each reference row spread over its frames.
    pub fn embed(&mut self, eps_t: Var, x_ref: Var) -> Var {
        let arch = &self.weights.arch;
        let (noise, reference) = (arch.embed_noise, arch.embed_ref);
        let a = self.mlp(eps_t, noise);
        let r = self.mlp(x_ref, reference);
        let r = self.spread(r);
        self.tape.add(a, r)
    }

    /// `times` holds one flow time per sequence.
    pub fn backbone(&mut self, x: Var, linguistic: Var, times: &[f64]) -> Var {
        let h = self.weights.config().hidden_dim;
        let mut emb = Array2::zeros((times.len(), h));
        for (mut row, &t) in emb.rows_mut().into_iter().zip(times) {
            row.assign(&timestep_embedding(t, h));
        }
        let emb = self.tape.constant(emb);
        let time = self.weights.arch.time;
        let temb = self.mlp(emb, time);
        let temb = self.spread(temb);
        let mut x = self.tape.add(x, temb);
        let weights = self.weights;
        for block in &weights.arch.backbone {
            x = self.block(x, block, Some(linguistic));
        }
        x
    }

    pub fn identity_head(&mut self, h: Var) -> (Var, Var) {
        let weights = self.weights;
        let out = self.head(h, &weights.arch.identity, None);
        let beta = weights.config().state.beta;
        let total = self.tape.value(out).ncols();
        (
            self.tape.slice_cols(out, 0, beta),
            self.tape.slice_cols(out, beta, total),
        )
    }

    /// Returns (jaw, head) velocities; `amplitude = None` is the ablation path.
    pub fn pose_head(&mut self, h: Var, amplitude: Option<Var>) -> (Var, Var) {
        let weights = self.weights;
        let out = self.head(h, &weights.arch.pose, amplitude);
        (self.tape.slice_cols(out, 0, 3), self.tape.slice_cols(out, 3, 6))
    }

    pub fn expression_head(&mut self, h: Var, emotion: Option<Var>) -> Var {
        let weights = self.weights;
        self.head(h, &weights.arch.expression, emotion)
    }

    pub fn heads(&mut self, h: Var, amplitude: Var, emotion: Var) -> HeadOutputs {
        let (beta, delta) = self.identity_head(h);
        let (jaw, head) = self.pose_head(h, Some(amplitude));
        let psi = self.expression_head(h, Some(emotion));
        HeadOutputs {
            beta,
            delta,
            jaw,
            head,
            psi,
        }
    }

    /// Canonical `[β | head | jaw | ψ | δ]` assembly.
    pub fn assemble(&mut self, o: &HeadOutputs) -> Var {
        let parts: Vec<Var> = [o.beta, o.head, o.jaw, o.psi, o.delta]
            .into_iter()
            .filter(|v| self.tape.value(*v).ncols() > 0)
            .collect();
        self.tape.concat_cols(&parts)
    }

    /// Velocities of all queries, stacked in query order. The queries must
    /// match the frame counts the net was built for.
    pub fn velocity(&mut self, queries: &[Query]) -> Var {
        debug_assert_eq!(queries.len(), self.segments.len());
        let eps = stack(queries.iter().map(|q| q.eps_t.view()).collect());
        let refs = stack(queries.iter().map(|q| q.x_ref.view().insert_axis(Axis(0))).collect());
        let ling = stack(queries.iter().map(|q| q.cond.linguistic.values().view()).collect());
        let amp = stack(queries.iter().map(|q| q.cond.amplitude.values().view()).collect());
        let emo = stack(queries.iter().map(|q| q.cond.emotion.values().view()).collect());
        let times: Vec<f64> = queries.iter().map(|q| q.t).collect();
        let (e, r) = (self.tape.constant(eps), self.tape.constant(refs));
        let (l, a, m) = (
            self.tape.constant(ling),
            self.tape.constant(amp),
            self.tape.constant(emo),
        );
        let x = self.embed(e, r);
        let h = self.backbone(x, l, &times);
        let outs = self.heads(h, a, m);
        self.assemble(&outs)
    }
}

fn check_cols(context: &'static str, m: &Array2<f64>, cols: usize) -> Result<()> {
    if m.ncols() != cols {
        return Err(Error::shape(context, cols, m.ncols()));
    }
    if m.nrows() == 0 {
        return Err(Error::Empty(context));
    }
    Ok(())
}

fn check_rows(context: &'static str, m: &Array2<f64>, rows: usize) -> Result<()> {
    if m.nrows() != rows {
        return Err(Error::shape(context, rows, m.nrows()));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Invalid(format!("flow time {t} outside [0, 1]")));
    }
    Ok(())
}

fn ref_row(x_ref: &Array1<f64>) -> Array2<f64> {
    x_ref.clone().insert_axis(ndarray::Axis(0))
}

/// State embedding: per-frame noise MLP plus the broadcast reference MLP.
pub fn embed_state(weights: &ModelWeights, eps_t: &Array2<f64>, x_ref: &Array1<f64>) -> Result<Array2<f64>> {
    let s = weights.config().state_dim();
    check_cols("eps_t columns", eps_t, s)?;
    if x_ref.len() != s {
        return Err(Error::shape("x_ref length", s, x_ref.len()));
    }
    let mut net = Net::new(weights, false, &[eps_t.nrows()]);
    let e = net.tape.constant(eps_t.clone());
    let r = net.tape.constant(ref_row(x_ref));
    let out = net.embed(e, r);
    Ok(net.tape.value(out).clone())
}

pub fn backbone(
    weights: &ModelWeights,
    x_tilde: &Array2<f64>,
    linguistic: &Array2<f64>,
    t: f64,
) -> Result<Array2<f64>> {
    let cfg = weights.config();
    check_cols("backbone input columns", x_tilde, cfg.hidden_dim)?;
    check_cols("linguistic columns", linguistic, cfg.linguistic_dim)?;
    check_rows("linguistic frames", linguistic, x_tilde.nrows())?;
    check_time(t)?;
    let mut net = Net::new(weights, false, &[x_tilde.nrows()]);
    let x = net.tape.constant(x_tilde.clone());
    let l = net.tape.constant(linguistic.clone());
    let out = net.backbone(x, l, &[t]);
    Ok(net.tape.value(out).clone())
}

/// Returns `(v_beta, v_delta)`.
pub fn identity_head(weights: &ModelWeights, h: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    check_cols("hidden columns", h, weights.config().hidden_dim)?;
    let mut net = Net::new(weights, false, &[h.nrows()]);
    let x = net.tape.constant(h.clone());
    let (b, d) = net.identity_head(x);
    Ok((net.tape.value(b).clone(), net.tape.value(d).clone()))
}

/// Returns `(v_jaw, v_head)`.
pub fn pose_head(
    weights: &ModelWeights,
    h: &Array2<f64>,
    amplitude: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_cols("hidden columns", h, weights.config().hidden_dim)?;
    check_cols("amplitude columns", amplitude, 1)?;
    check_rows("amplitude frames", amplitude, h.nrows())?;
    let mut net = Net::new(weights, false, &[h.nrows()]);
    let x = net.tape.constant(h.clone());
    let a = net.tape.constant(amplitude.clone());
    let (jaw, head) = net.pose_head(x, Some(a));
    Ok((net.tape.value(jaw).clone(), net.tape.value(head).clone()))
}

/// Pose head with its amplitude cross-attention removed (value path absent).
pub fn pose_head_ablated(weights: &ModelWeights, h: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    check_cols("hidden columns", h, weights.config().hidden_dim)?;
    let mut net = Net::new(weights, false, &[h.nrows()]);
    let x = net.tape.constant(h.clone());
    let (jaw, head) = net.pose_head(x, None);
    Ok((net.tape.value(jaw).clone(), net.tape.value(head).clone()))
}

pub fn expression_head(weights: &ModelWeights, h: &Array2<f64>, emotion: &Array2<f64>) -> Result<Array2<f64>> {
    let cfg = weights.config();
    check_cols("hidden columns", h, cfg.hidden_dim)?;
    check_cols("emotion columns", emotion, cfg.emotion_dim)?;
    check_rows("emotion frames", emotion, h.nrows())?;
    let mut net = Net::new(weights, false, &[h.nrows()]);
    let x = net.tape.constant(h.clone());
    let e = net.tape.constant(emotion.clone());
    let psi = net.expression_head(x, Some(e));
    Ok(net.tape.value(psi).clone())
}

/// Expression head with its emotion cross-attention removed.
pub fn expression_head_ablated(weights: &ModelWeights, h: &Array2<f64>) -> Result<Array2<f64>> {
    check_cols("hidden columns", h, weights.config().hidden_dim)?;
    let mut net = Net::new(weights, false, &[h.nrows()]);
    let x = net.tape.constant(h.clone());
    let psi = net.expression_head(x, None);
    Ok(net.tape.value(psi).clone())
}

pub(crate) fn check_inputs(
    weights: &ModelWeights,
    eps_t: &Array2<f64>,
    x_ref: &Array1<f64>,
    cond: &ConditioningBundle,
) -> Result<()> {
    let cfg = weights.config();
    let s = cfg.state_dim();
    check_cols("eps_t columns", eps_t, s)?;
    if x_ref.len() != s {
        return Err(Error::shape("x_ref length", s, x_ref.len()));
    }
    check_rows("conditioning frames", eps_t, cond.n_frames())?;
    check_cols("linguistic columns", cond.linguistic.values(), cfg.linguistic_dim)?;
    check_cols("emotion columns", cond.emotion.values(), cfg.emotion_dim)?;
    Ok(())
}

/// Velocity field over the full state, in canonical parameter order.
pub fn predict_velocity(
    weights: &ModelWeights,
    eps_t: &Array2<f64>,
    x_ref: &Array1<f64>,
    cond: &ConditioningBundle,
    t: f64,
) -> Result<Array2<f64>> {
    check_inputs(weights, eps_t, x_ref, cond)?;
    check_time(t)?;
    let mut net = Net::new(weights, false, &[eps_t.nrows()]);
    let v = net.velocity(&[Query { eps_t, x_ref, cond, t }]);
    Ok(net.tape.value(v).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{FeatureTrack, TrackKind};
    use crate::model::ModelConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn small_config() -> ModelConfig {
        ModelConfig {
            hidden_dim: 16,
            n_attention_heads: 2,
            linguistic_dim: 5,
            emotion_dim: 3,
            state: crate::flame::StateLayout::new(4, 5, 3),
            ..ModelConfig::toy()
        }
    }

    fn randn(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
    }

    fn bundle(cfg: &ModelConfig, n: usize, seed: u64) -> ConditioningBundle {
        ConditioningBundle::new(
            FeatureTrack::new(randn(n, cfg.linguistic_dim, seed), 25.0, TrackKind::Linguistic).unwrap(),
            FeatureTrack::new(randn(n, 1, seed + 1).mapv(f64::abs), 25.0, TrackKind::Amplitude).unwrap(),
            FeatureTrack::new(randn(n, cfg.emotion_dim, seed + 2), 25.0, TrackKind::Emotion).unwrap(),
        )
        .unwrap()
    }

    fn random_weights(cfg: &ModelConfig) -> ModelWeights {
        let mut w = ModelWeights::init(cfg).unwrap();
        w.randomize(11, 0.3);
        w
    }

    fn gelu(x: f64) -> f64 {
        0.5 * x * (1.0 + (0.797_884_560_802_865_4 * (x + 0.044_715 * x.powi(3))).tanh())
    }

    /// Row-at-a-time MLP with explicit loops.
    fn mlp_row(w: &ModelWeights, name: &str, x: &[f64]) -> Vec<f64> {
        let layer = |x: &[f64], l: &str| {
            let wm = w.get(&format!("{name}.{l}.w")).unwrap();
            let b = w.get(&format!("{name}.{l}.b")).unwrap();
            (0..wm.ncols())
                .map(|j| b[[0, j]] + (0..wm.nrows()).map(|i| x[i] * wm[[i, j]]).sum::<f64>())
                .collect::<Vec<_>>()
        };
        let h: Vec<f64> = layer(x, "fc1").into_iter().map(gelu).collect();
        layer(&h, "fc2")
    }

    #[test]
    fn timestep_embedding_layout() {
        let e = timestep_embedding(0.0, 8);
        assert_eq!(e.as_slice().unwrap(), &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        assert_ne!(timestep_embedding(0.25, 8), timestep_embedding(0.5, 8));
    }

    #[test]
    fn embed_state_matches_per_row_oracle() {
        let cfg = small_config();
        let w = random_weights(&cfg);
        let eps = randn(4, cfg.state_dim(), 3);
        let x_ref = randn(1, cfg.state_dim(), 4).row(0).to_owned();
        let out = embed_state(&w, &eps, &x_ref).unwrap();
        let r = mlp_row(&w, "embed.ref", x_ref.as_slice().unwrap());
        for (i, row) in eps.rows().into_iter().enumerate() {
            let a = mlp_row(&w, "embed.noise", &row.to_vec());
            for j in 0..cfg.hidden_dim {
                assert!((out[[i, j]] - (a[j] + r[j])).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn embed_state_zero_maps_and_reference_broadcast() {
        let cfg = small_config();
        let mut w = random_weights(&cfg);
        let x_ref = randn(1, cfg.state_dim(), 4).row(0).to_owned();
        // ε contribution removed: every row must be the same reference term
        w.zero_prefix("embed.noise");
        let out = embed_state(&w, &randn(5, cfg.state_dim(), 3), &x_ref).unwrap();
        for i in 1..5 {
            assert_eq!(out.row(i), out.row(0));
        }
        w.zero_prefix("embed.ref");
        let out = embed_state(&w, &randn(5, cfg.state_dim(), 3), &x_ref).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn embed_state_rejects_bad_shapes() {
        let cfg = small_config();
        let w = ModelWeights::init(&cfg).unwrap();
        let x_ref = Array1::zeros(cfg.state_dim());
        assert!(embed_state(&w, &Array2::zeros((3, 7)), &x_ref).is_err());
        assert!(embed_state(&w, &Array2::zeros((3, cfg.state_dim())), &Array1::zeros(2)).is_err());
    }

    #[test]
    fn backbone_single_frame_is_finite_and_deterministic() {
        let cfg = small_config();
        let w = random_weights(&cfg);
        let x = randn(1, cfg.hidden_dim, 5);
        let l = randn(1, cfg.linguistic_dim, 6);
        let a = backbone(&w, &x, &l, 0.3).unwrap();
        let b = backbone(&w, &x, &l, 0.3).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn backbone_is_equivariant_to_conditioning_column_permutation() {
        let cfg = small_config();
        let mut w = random_weights(&cfg);
        let x = randn(6, cfg.hidden_dim, 5);
        let l = randn(6, cfg.linguistic_dim, 6);
        let base = backbone(&w, &x, &l, 0.7).unwrap();
        let perm = [3, 0, 4, 1, 2];
        let lp = Array2::from_shape_fn(l.dim(), |(i, j)| l[[i, perm[j]]]);
        for b in 0..cfg.n_backbone_blocks {
            for p in ["k", "v"] {
                let name = format!("backbone.{b}.cross_attn.{p}.w");
                let m = w.get(&name).unwrap().clone();
                let mp = Array2::from_shape_fn(m.dim(), |(i, j)| m[[perm[i], j]]);
                *w.get_mut(&name).unwrap() = mp;
            }
        }
        let permuted = backbone(&w, &x, &lp, 0.7).unwrap();
        for (a, b) in base.iter().zip(permuted.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn backbone_depends_on_time() {
        let cfg = small_config();
        let w = random_weights(&cfg);
        let x = randn(3, cfg.hidden_dim, 5);
        let l = randn(3, cfg.linguistic_dim, 6);
        assert_ne!(backbone(&w, &x, &l, 0.2).unwrap(), backbone(&w, &x, &l, 0.6).unwrap());
    }

    #[test]
    fn heads_have_exact_split_sizes_and_start_at_zero() {
        let cfg = ModelConfig::toy();
        let w = ModelWeights::init(&cfg).unwrap();
        let h = randn(3, cfg.hidden_dim, 1);
        let (b, d) = identity_head(&w, &h).unwrap();
        assert_eq!((b.dim(), d.dim()), ((3, 100), (3, 128)));
        let (jaw, head) = pose_head(&w, &h, &Array2::ones((3, 1))).unwrap();
        assert_eq!((jaw.dim(), head.dim()), ((3, 3), (3, 3)));
        let psi = expression_head(&w, &h, &randn(3, cfg.emotion_dim, 2)).unwrap();
        assert_eq!(psi.dim(), (3, 50));
        for m in [&b, &d, &jaw, &head, &psi] {
            assert!(m.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn identity_head_single_frame_oracle() {
        // one frame: attention weights are all 1 so the block is a plain residual MLP chain
        let cfg = small_config();
        let w = random_weights(&cfg);
        let h = randn(1, cfg.hidden_dim, 9);
        let (b, d) = identity_head(&w, &h).unwrap();
        let ln = |x: &[f64], name: &str| {
            let g = w.get(&format!("{name}.gain")).unwrap();
            let bias = w.get(&format!("{name}.bias")).unwrap();
            let n = x.len() as f64;
            let mean = x.iter().sum::<f64>() / n;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            x.iter()
                .enumerate()
                .map(|(j, v)| (v - mean) / (var + 1e-5).sqrt() * g[[0, j]] + bias[[0, j]])
                .collect::<Vec<_>>()
        };
        let affine = |x: &[f64], name: &str| {
            let wm = w.get(&format!("{name}.w")).unwrap();
            let bias = w.get(&format!("{name}.b")).unwrap();
            (0..wm.ncols())
                .map(|j| bias[[0, j]] + (0..wm.nrows()).map(|i| x[i] * wm[[i, j]]).sum::<f64>())
                .collect::<Vec<_>>()
        };
        let mut x = h.row(0).to_vec();
        for blk in 0..cfg.branch_blocks {
            let p = format!("identity.{blk}");
            let z = ln(&x, &format!("{p}.self_norm"));
            let v = affine(&z, &format!("{p}.self_attn.v"));
            let o = affine(&v, &format!("{p}.self_attn.o"));
            x.iter_mut().zip(&o).for_each(|(a, b)| *a += b);
            let z = ln(&x, &format!("{p}.ffn_norm"));
            let f = mlp_row(&w, &format!("{p}.ffn"), &z);
            x.iter_mut().zip(&f).for_each(|(a, b)| *a += b);
        }
        let z = ln(&x, "identity.out_norm");
        let out = mlp_row(&w, "identity.out", &z);
        let got: Vec<f64> = b.iter().chain(d.iter()).cloned().collect();
        for (g, e) in got.iter().zip(&out) {
            assert!((g - e).abs() < 1e-9, "{g} vs {e}");
        }
    }

    #[test]
    fn zero_amplitude_matches_ablation_when_value_bias_is_zero() {
        let cfg = small_config();
        let mut w = random_weights(&cfg);
        for b in 0..cfg.branch_blocks {
            w.get_mut(&format!("pose.{b}.cross_attn.v.b")).unwrap().fill(0.0);
        }
        let h = randn(4, cfg.hidden_dim, 2);
        let (jaw, head) = pose_head(&w, &h, &Array2::zeros((4, 1))).unwrap();
        let (jaw_a, head_a) = pose_head_ablated(&w, &h).unwrap();
        for (a, b) in jaw.iter().chain(head.iter()).zip(jaw_a.iter().chain(head_a.iter())) {
            assert!((a - b).abs() < 1e-12);
        }
        let amp = randn(4, 1, 8).mapv(f64::abs);
        let (j1, _) = pose_head(&w, &h, &amp).unwrap();
        let (j2, _) = pose_head(&w, &h, &(&amp * 2.0)).unwrap();
        assert_ne!(j1, j2);
    }

    #[test]
    fn zero_emotion_matches_ablation_when_value_bias_is_zero() {
        let cfg = small_config();
        let mut w = random_weights(&cfg);
        for b in 0..cfg.branch_blocks {
            w.get_mut(&format!("expression.{b}.cross_attn.v.b")).unwrap().fill(0.0);
        }
        let h = randn(4, cfg.hidden_dim, 2);
        let psi = expression_head(&w, &h, &Array2::zeros((4, cfg.emotion_dim))).unwrap();
        let psi_a = expression_head_ablated(&w, &h).unwrap();
        for (a, b) in psi.iter().zip(psi_a.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let e = randn(4, cfg.emotion_dim, 8);
        assert_ne!(
            expression_head(&w, &h, &e).unwrap(),
            expression_head(&w, &h, &(&e * 2.0)).unwrap()
        );
    }

    #[test]
    fn velocity_assembly_places_each_head() {
        let cfg = small_config();
        let lay = cfg.state;
        let w = random_weights(&cfg);
        let eps = randn(3, cfg.state_dim(), 1);
        let x_ref = randn(1, cfg.state_dim(), 2).row(0).to_owned();
        let cond = bundle(&cfg, 3, 5);
        let v = predict_velocity(&w, &eps, &x_ref, &cond, 0.4).unwrap();
        assert_eq!(v.dim(), (3, cfg.state_dim()));

        let x = embed_state(&w, &eps, &x_ref).unwrap();
        let h = backbone(&w, &x, cond.linguistic.values(), 0.4).unwrap();
        let (b, d) = identity_head(&w, &h).unwrap();
        let (jaw, head) = pose_head(&w, &h, cond.amplitude.values()).unwrap();
        let psi = expression_head(&w, &h, cond.emotion.values()).unwrap();
        assert_eq!(v.slice(s![.., lay.beta_range()]), b);
        assert_eq!(v.slice(s![.., lay.head_range()]), head);
        assert_eq!(v.slice(s![.., lay.jaw_range()]), jaw);
        assert_eq!(v.slice(s![.., lay.psi_range()]), psi);
        assert_eq!(v.slice(s![.., lay.delta_range()]), d);

        let mut wz = w.clone();
        wz.zero_prefix("pose.out.fc2");
        let vz = predict_velocity(&wz, &eps, &x_ref, &cond, 0.4).unwrap();
        assert!(vz.slice(s![.., lay.theta_range()]).iter().all(|v| *v == 0.0));
        assert_eq!(vz.slice(s![.., lay.psi_range()]), v.slice(s![.., lay.psi_range()]));
    }

    #[test]
    fn stacked_batch_matches_separate_evaluations() {
        let cfg = small_config();
        let w = random_weights(&cfg);
        let (c1, c2) = (bundle(&cfg, 3, 5), bundle(&cfg, 5, 6));
        let (e1, e2) = (randn(3, cfg.state_dim(), 1), randn(5, cfg.state_dim(), 2));
        let (r1, r2) = (
            randn(1, cfg.state_dim(), 3).row(0).to_owned(),
            randn(1, cfg.state_dim(), 4).row(0).to_owned(),
        );
        let mut net = Net::new(&w, false, &[3, 5]);
        let v = net.velocity(&[
            Query {
                eps_t: &e1,
                x_ref: &r1,
                cond: &c1,
                t: 0.25,
            },
            Query {
                eps_t: &e2,
                x_ref: &r2,
                cond: &c2,
                t: 0.75,
            },
        ]);
        let v = net.tape.value(v);
        let v1 = predict_velocity(&w, &e1, &r1, &c1, 0.25).unwrap();
        let v2 = predict_velocity(&w, &e2, &r2, &c2, 0.75).unwrap();
        for (a, b) in v.slice(s![0..3, ..]).iter().zip(v1.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in v.slice(s![3..8, ..]).iter().zip(v2.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn predict_velocity_validates() {
        let cfg = small_config();
        let w = ModelWeights::init(&cfg).unwrap();
        let cond = bundle(&cfg, 3, 5);
        let x_ref = Array1::zeros(cfg.state_dim());
        assert!(predict_velocity(&w, &Array2::zeros((4, cfg.state_dim())), &x_ref, &cond, 0.5).is_err());
        assert!(predict_velocity(&w, &Array2::zeros((3, cfg.state_dim())), &x_ref, &cond, 1.5).is_err());
        let v = predict_velocity(&w, &Array2::zeros((3, cfg.state_dim())), &x_ref, &cond, 0.5).unwrap();
        assert!(v.iter().all(|x| *x == 0.0));
    }
}
