use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Linear {
    /// in × out
    pub w: usize,
    /// 1 × out
    pub b: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Norm {
    pub gain: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
}

/// Pre-norm residual block. `cross` is present in backbone blocks and in the
/// conditioned head stacks; `self_attn` in backbone blocks and the identity stack.
#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub self_attn: Option<(Norm, Attention)>,
    pub cross: Option<(Norm, Attention)>,
    pub ffn: (Norm, Mlp),
}

#[derive(Debug, Clone)]
pub(crate) struct Head {
    pub blocks: Vec<Block>,
    pub norm: Norm,
    pub out: Mlp,
}

#[derive(Debug, Clone)]
pub(crate) struct Architecture {
    pub embed_noise: Mlp,
    pub embed_ref: Mlp,
    pub time: Mlp,
    pub backbone: Vec<Block>,
    pub identity: Head,
    pub pose: Head,
    pub expression: Head,
}

/// Learnable tensors of the flow transformer, stored by name in a fixed order.
#[derive(Debug, Clone)]
pub struct ModelWeights {
    config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Array2<f64>>,
    pub(crate) arch: Architecture,
}

#[derive(Clone, Copy, PartialEq)]
enum Init {
    FanIn,
    Zeros,
    Ones,
}

struct Builder {
    names: Vec<String>,
    tensors: Vec<Array2<f64>>,
    rng: ChaCha8Rng,
}

impl Builder {
    fn tensor(&mut self, name: String, rows: usize, cols: usize, init: Init) -> usize {
        let t = match init {
            Init::Zeros => Array2::zeros((rows, cols)),
            Init::Ones => Array2::ones((rows, cols)),
            Init::FanIn => {
                let bound = 1.0 / (rows as f64).sqrt();
                Array2::from_shape_simple_fn((rows, cols), || self.rng.random_range(-bound..bound))
            }
        };
        self.names.push(name);
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    fn linear(&mut self, name: &str, input: usize, output: usize, init: Init) -> Linear {
        Linear {
            w: self.tensor(format!("{name}.w"), input, output, init),
            b: self.tensor(format!("{name}.b"), 1, output, Init::Zeros),
        }
    }

    fn norm(&mut self, name: &str, dim: usize) -> Norm {
        Norm {
            gain: self.tensor(format!("{name}.gain"), 1, dim, Init::Ones),
            bias: self.tensor(format!("{name}.bias"), 1, dim, Init::Zeros),
        }
    }

    fn mlp(&mut self, name: &str, input: usize, hidden: usize, output: usize, zero_out: bool) -> Mlp {
        Mlp {
            fc1: self.linear(&format!("{name}.fc1"), input, hidden, Init::FanIn),
            fc2: self.linear(
                &format!("{name}.fc2"),
                hidden,
                output,
                if zero_out { Init::Zeros } else { Init::FanIn },
            ),
        }
    }

    fn attention(&mut self, name: &str, hidden: usize, kv_dim: usize) -> Attention {
        Attention {
            q: self.linear(&format!("{name}.q"), hidden, hidden, Init::FanIn),
            k: self.linear(&format!("{name}.k"), kv_dim, hidden, Init::FanIn),
            v: self.linear(&format!("{name}.v"), kv_dim, hidden, Init::FanIn),
            o: self.linear(&format!("{name}.o"), hidden, hidden, Init::FanIn),
        }
    }

    fn block(&mut self, name: &str, cfg: &ModelConfig, self_attn: bool, cross_dim: Option<usize>) -> Block {
        let h = cfg.hidden_dim;
        let self_attn = self_attn.then(|| {
            (
                self.norm(&format!("{name}.self_norm"), h),
                self.attention(&format!("{name}.self_attn"), h, h),
            )
        });
        let cross = cross_dim.map(|kv| {
            (
                self.norm(&format!("{name}.cross_norm"), h),
                self.attention(&format!("{name}.cross_attn"), h, kv),
            )
        });
        let ffn = (
            self.norm(&format!("{name}.ffn_norm"), h),
            self.mlp(&format!("{name}.ffn"), h, h * cfg.ffn_mult, h, false),
        );
        Block { self_attn, cross, ffn }
    }

    fn head(&mut self, name: &str, cfg: &ModelConfig, self_attn: bool, cross_dim: Option<usize>, out: usize) -> Head {
        let h = cfg.hidden_dim;
        let blocks = (0..cfg.branch_blocks)
            .map(|i| self.block(&format!("{name}.{i}"), cfg, self_attn, cross_dim))
            .collect();
        Head {
            blocks,
            norm: self.norm(&format!("{name}.out_norm"), h),
            out: self.mlp(&format!("{name}.out"), h, h, out, true),
        }
    }
}

impl ModelWeights {
    /// Fan-in uniform initialization with zeroed output layers, seeded by `config.seed`.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut b = Builder {
            names: Vec::new(),
            tensors: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        };
        let h = config.hidden_dim;
        let s = config.state_dim();
        let layout = config.state;
        let arch = Architecture {
            embed_noise: b.mlp("embed.noise", s, h, h, false),
            embed_ref: b.mlp("embed.ref", s, h, h, false),
            time: b.mlp("embed.time", h, h, h, false),
            backbone: (0..config.n_backbone_blocks)
                .map(|i| b.block(&format!("backbone.{i}"), config, true, Some(config.linguistic_dim)))
                .collect(),
            identity: b.head("identity", config, true, None, layout.beta + layout.delta),
            pose: b.head("pose", config, false, Some(1), 6),
            expression: b.head("expression", config, false, Some(config.emotion_dim), layout.psi),
        };
        Ok(Self {
            config: config.clone(),
            names: b.names,
            tensors: b.tensors,
            arch,
        })
    }

    /// Rebuilds the architecture for `config` and installs `tensors` in manifest order.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<(String, Array2<f64>)>) -> Result<Self> {
        let mut w = Self::init(config)?;
        if tensors.len() != w.tensors.len() {
            return Err(Error::shape("checkpoint tensor count", w.tensors.len(), tensors.len()));
        }
        for (i, (name, t)) in tensors.into_iter().enumerate() {
            if name != w.names[i] {
                return Err(Error::Invalid(format!(
                    "checkpoint tensor {i} is `{name}`, expected `{}`",
                    w.names[i]
                )));
            }
            w.set(i, t)?;
        }
        Ok(w)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Array2<f64>] {
        &self.tensors
    }

    pub fn tensor(&self, index: usize) -> &Array2<f64> {
        &self.tensors[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    /// Mutable access for in-place edits that keep the shape.
    pub fn tensor_mut(&mut self, index: usize) -> &mut Array2<f64> {
        &mut self.tensors[index]
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        self.index_of(name).map(move |i| &mut self.tensors[i])
    }

    pub fn set(&mut self, index: usize, value: Array2<f64>) -> Result<()> {
        let expected = self.tensors[index].dim();
        if value.dim() != expected {
            return Err(Error::Invalid(format!(
                "tensor `{}` has shape {:?}, expected {expected:?}",
                self.names[index],
                value.dim()
            )));
        }
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor `{}`", self.names[index])));
        }
        self.tensors[index] = value;
        Ok(())
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// Replaces every entry with a draw from U(−scale, scale); used to probe
    /// the network away from its zero-output initialization.
    pub fn randomize(&mut self, seed: u64, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in &mut self.tensors {
            t.mapv_inplace(|_| rng.random_range(-scale..scale));
        }
    }

    /// Sets every tensor whose name starts with `prefix` to zero.
    pub fn zero_prefix(&mut self, prefix: &str) -> usize {
        let mut n = 0;
        for (name, t) in self.names.iter().zip(&mut self.tensors) {
            if name.starts_with(prefix) {
                t.fill(0.0);
                n += 1;
            }
        }
        n
    }

    pub fn zero_all(&mut self) {
        for t in &mut self.tensors {
            t.fill(0.0);
        }
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.tensors
    }
}
