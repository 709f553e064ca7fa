use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use talkhead_core::io::read_sequence;
use talkhead_core::model::{
    load_manifest, train_with, write_checkpoint, LossMode, ModelConfig, ModelWeights, TrainConfig, TrainingManifest,
};

use crate::{display, ensure_parent, provenance, GlobalArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Desk-scale model and schedule.
    Toy,
    /// Full-size architecture and optimizer defaults.
    Full,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Training manifest (JSON with a `samples` list).
    #[arg(long)]
    pub manifest: PathBuf,
    /// JSON `{"model": {...}, "train": {...}}`; keys override the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Toy)]
    pub preset: Preset,
    /// Output checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-step loss as `step,loss` rows.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// `rectified` (default) or `interpolant`.
    #[arg(long)]
    pub loss_mode: Option<LossMode>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunConfig {
    model: ModelConfig,
    train: TrainConfig,
}

/// Recursively overlays `patch` onto `base`.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

fn resolve_config(g: &GlobalArgs, a: &TrainArgs) -> Result<RunConfig> {
    let preset = match a.preset {
        Preset::Toy => RunConfig {
            model: ModelConfig::toy(),
            train: TrainConfig::toy(),
        },
        Preset::Full => RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        },
    };
    let mut value = serde_json::to_value(&preset)?;
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let patch: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        merge(&mut value, patch);
    }
    let mut cfg: RunConfig = serde_json::from_value(value).context("invalid training config")?;
    if let Some(s) = a.steps {
        cfg.train.steps = s;
    }
    if let Some(b) = a.batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(lr) = a.lr {
        cfg.train.learning_rate = lr;
    }
    if let Some(m) = a.loss_mode {
        cfg.model.loss_mode = m;
    }
    if let Some(seed) = g.seed {
        cfg.train.seed = seed;
        cfg.model.seed = seed;
    }
    Ok(cfg)
}

pub fn train(g: &GlobalArgs, a: TrainArgs) -> Result<()> {
    let mut cfg = resolve_config(g, &a)?;
    let dataset = load_manifest(&a.manifest).with_context(|| format!("loading {}", a.manifest.display()))?;

    // state layout and feature widths come from the data
    let manifest: TrainingManifest = serde_json::from_slice(&std::fs::read(&a.manifest)?)?;
    let base = a.manifest.parent().unwrap_or(std::path::Path::new("."));
    let first = &manifest.samples[0].reference;
    let first = if first.is_absolute() {
        first.clone()
    } else {
        base.join(first)
    };
    cfg.model.state = read_sequence(&first)?.dims();
    cfg.model.linguistic_dim = dataset[0].cond.linguistic.dim();
    cfg.model.emotion_dim = dataset[0].cond.emotion.dim();
    for (i, s) in dataset.iter().enumerate() {
        if s.x_ref.len() != cfg.model.state.total()
            || s.cond.linguistic.dim() != cfg.model.linguistic_dim
            || s.cond.emotion.dim() != cfg.model.emotion_dim
        {
            bail!("sample {i} does not match the dimensions of sample 0");
        }
    }

    let weights = ModelWeights::init(&cfg.model)?;
    log::info!(
        "training {} parameters on {} samples for {} steps",
        weights.n_parameters(),
        dataset.len(),
        cfg.train.steps
    );
    let every = (cfg.train.steps / 10).max(1);
    let outcome = train_with(weights, &dataset, &cfg.train, |step, loss| {
        if step % every == 0 {
            log::info!("step {step}: loss {loss:.6}");
        }
    })?;

    let last = outcome.loss_history.last().copied();
    let mut meta = provenance("train", Some(cfg.train.seed), &cfg)?;
    meta["manifest"] = display(&a.manifest).into();
    meta["first_loss"] = outcome.loss_history.first().copied().into();
    meta["final_loss"] = last.into();
    ensure_parent(&a.out)?;
    write_checkpoint(&a.out, &outcome.weights, Some(meta)).with_context(|| format!("writing {}", a.out.display()))?;

    if let Some(path) = &a.loss_csv {
        ensure_parent(path)?;
        let mut out = String::from("step,loss\n");
        for (i, l) in outcome.loss_history.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, l));
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(l) = last {
        log::info!("final loss {l:.6}");
    }
    Ok(())
}
