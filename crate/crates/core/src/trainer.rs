//! Training and evaluation drivers: AdamW with decoupled weight decay,
//! warmup-cosine learning-rate schedule, the batched training loop, and the
//! evaluation protocol over models, baselines, egomotion strata, and
//! corruption ablations.

use std::collections::BTreeMap;

use crate::baselines::{cvm_predict, static_fit, static_predict};
use crate::context::{
    corrupt_vision, dummy_text, grid_vision_tokens, hashed_text_tokens, load_precomputed_tokens,
    RawContext, TextProvenance, VisionProvenance, CONTEXT_FRAMES,
};
use crate::dataio::bundle::{ClipRecord, Dataset, FRAME_ELEMS};
use crate::dataio::normalize::fit_minmax;
use crate::dataio::windows::{Sample, WindowConfig};
use crate::dataio::split_samples;
use crate::error::{Error, Result};
use crate::forecaster::{build, forward, forward_in_graph, ForecasterModel, ModelConfig, ParamKind};
use crate::geometry::NUM_JOINTS;
use crate::metrics::{
    aggregate_report, sample_metrics, Averaging, Report, ReportConfig, SampleMetrics,
};
use crate::nnkernel::{fnv1a64, mix64, Graph, Prng};
use crate::objectives::{attach_loss, LossWeights, PairSet};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_ratio: f64,
    pub min_lr: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; 0 disables.
    pub grad_clip: f64,
    pub loss_weights: LossWeights,
    pub seed: u64,
    /// Validation-report interval in steps; 0 disables.
    pub eval_interval: usize,
    /// Parameters whose names start with any of these prefixes are frozen
    /// (reproduces the frozen-encoder regime with precomputed tokens).
    pub freeze_prefixes: Vec<String>,
    pub window: WindowConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch_size: 8,
            base_lr: 2e-3,
            warmup_ratio: 0.05,
            min_lr: 0.0,
            weight_decay: 0.01,
            grad_clip: 1.0,
            loss_weights: LossWeights::default(),
            seed: 0,
            eval_interval: 0,
            freeze_prefixes: Vec::new(),
            window: WindowConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::config("steps and batch_size must be >= 1".to_string()));
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return Err(Error::config(format!(
                "warmup ratio must be in [0, 1), got {}",
                self.warmup_ratio
            )));
        }
        self.loss_weights.validate()
    }

    pub fn warmup_steps(&self) -> usize {
        (self.warmup_ratio * self.steps as f64).round() as usize
    }
}

/// Learning rate at a step: linear warmup to the base rate over
/// round(warmup_ratio * steps) steps, then cosine decay to `min_lr`.
pub fn lr_at(step: usize, config: &TrainConfig) -> f64 {
    let warmup = config.warmup_steps();
    if step < warmup {
        return config.base_lr * (step + 1) as f64 / warmup as f64;
    }
    if config.steps <= warmup {
        return config.base_lr;
    }
    let progress = (step - warmup) as f64 / (config.steps - warmup) as f64;
    config.min_lr
        + (config.base_lr - config.min_lr) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Per-parameter first/second moments plus the step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    pub step: u64,
    pub skipped_nonfinite: u64,
}

impl OptimizerState {
    pub fn new(model: &ForecasterModel) -> Self {
        let shapes: Vec<usize> = model.params.entries().map(|(_, _, t)| t.len()).collect();
        OptimizerState {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            skipped_nonfinite: 0,
        }
    }
}

/// One AdamW update with decoupled weight decay. Decay skips biases and
/// layer-norm parameters; frozen parameters are untouched. Non-finite
/// gradients skip the whole step and bump the counter.
pub fn adamw_step(
    model: &mut ForecasterModel,
    grads: &[Vec<f64>],
    state: &mut OptimizerState,
    lr: f64,
    config: &TrainConfig,
) -> Result<()> {
    if grads.len() != model.params.len() {
        return Err(Error::validation(format!(
            "gradient count {} != parameter count {}",
            grads.len(),
            model.params.len()
        )));
    }
    if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
        state.skipped_nonfinite += 1;
        return Ok(());
    }

    // optional global-norm clip over every trainable gradient
    let mut scale = 1.0;
    if config.grad_clip > 0.0 {
        let mut norm_sq = 0.0;
        for g in grads {
            for v in g {
                norm_sq += v * v;
            }
        }
        let norm = norm_sq.sqrt();
        if norm > config.grad_clip {
            scale = config.grad_clip / norm;
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - ADAM_BETA1.powi(t);
    let bias2 = 1.0 - ADAM_BETA2.powi(t);

    for (i, (name, kind, tensor)) in model.params.entries_mut().enumerate() {
        if config.freeze_prefixes.iter().any(|p| name.starts_with(p.as_str())) {
            continue;
        }
        let decay = match kind {
            ParamKind::Bias | ParamKind::LnBias | ParamKind::LnGain => 0.0,
            ParamKind::Weight | ParamKind::Queries => config.weight_decay,
        };
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        let g = &grads[i];
        let theta = tensor.data_mut();
        for j in 0..theta.len() {
            let gj = g[j] * scale;
            m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * gj;
            v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * gj * gj;
            let m_hat = m[j] / bias1;
            let v_hat = v[j] / bias2;
            theta[j] -= lr * (m_hat / (v_hat.sqrt() + ADAM_EPS) + decay * theta[j]);
        }
    }
    Ok(())
}

/// One training-log record (JSON-lines friendly).
#[derive(Debug, Clone, serde::Serialize)]
pub struct LogRecord {
    pub step: usize,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_abs: f64,
    pub loss_rel: f64,
    pub loss_pair: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val: Option<Report>,
}

pub fn logs_to_jsonl(logs: &[LogRecord]) -> String {
    let mut out = String::new();
    for record in logs {
        out.push_str(&serde_json::to_string(record).expect("log record json"));
        out.push('\n');
    }
    out
}

/// Corruption ablations applied when building eval contexts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    None,
    NoisyVision,
    DummyText,
    Both,
}

impl Ablation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoisyVision => "noisy_vision",
            Ablation::DummyText => "dummy_text",
            Ablation::Both => "both",
        }
    }

    fn corrupt_vision(&self) -> bool {
        matches!(self, Ablation::NoisyVision | Ablation::Both)
    }

    fn corrupt_text(&self) -> bool {
        matches!(self, Ablation::DummyText | Ablation::Both)
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Ablation::None),
            "noisy_vision" => Ok(Ablation::NoisyVision),
            "dummy_text" => Ok(Ablation::DummyText),
            "both" => Ok(Ablation::Both),
            other => Err(Error::validation(format!("unknown ablation {other:?}"))),
        }
    }
}

/// Build the raw context for one sample. Clean vision prefers precomputed
/// tokens, then stored frames, then a black-frame fallback; the noisy-vision
/// ablation featurizes seeded Gaussian-noise frames instead. Clean text
/// hashes the clip description; the dummy-text ablation substitutes words
/// drawn from `vocab`.
pub fn build_context(
    record: &ClipRecord,
    sample: &Sample,
    config: &ModelConfig,
    ablation: Ablation,
    seed: u64,
    vocab: &[String],
) -> Result<RawContext> {
    let sample_seed = mix64(seed ^ fnv1a64(sample.id().as_bytes()));

    let (visual, vision_provenance) = if ablation.corrupt_vision() {
        let noise = corrupt_vision(CONTEXT_FRAMES, mix64(sample_seed ^ 1));
        (grid_vision_tokens(&noise)?, VisionProvenance::Noise)
    } else if record.vision_tokens.is_some() {
        let absolute: Vec<usize> = sample
            .context_frame_indices
            .iter()
            .map(|&i| sample.start + i)
            .collect();
        (
            load_precomputed_tokens(record, &absolute)?,
            VisionProvenance::Precomputed,
        )
    } else if record.frames.is_some() {
        let mut frames = Vec::with_capacity(CONTEXT_FRAMES * FRAME_ELEMS);
        for &i in &sample.context_frame_indices {
            frames.extend_from_slice(record.frame(sample.start + i).unwrap());
        }
        (grid_vision_tokens(&frames)?, VisionProvenance::ToyGrid)
    } else {
        // no imagery in the bundle: black frames keep the shape contract
        let black = vec![0.0f32; CONTEXT_FRAMES * FRAME_ELEMS];
        (grid_vision_tokens(&black)?, VisionProvenance::ToyGrid)
    };
    if visual.shape()[1] != config.d_feat_vision {
        return Err(Error::validation(format!(
            "visual token width {} != model d_feat_vision {}",
            visual.shape()[1],
            config.d_feat_vision
        )));
    }

    let (text_tokens, text_provenance) = if ablation.corrupt_text() {
        let text = dummy_text(vocab, mix64(sample_seed ^ 2))?;
        (
            hashed_text_tokens(&text, config.d_feat_text, 16)?,
            TextProvenance::Dummy,
        )
    } else {
        (
            hashed_text_tokens(&sample.text, config.d_feat_text, 16)?,
            TextProvenance::HashedText,
        )
    };

    Ok(RawContext {
        visual,
        text: text_tokens,
        frame_indices: sample.context_frame_indices.clone(),
        vision_provenance: vision_provenance,
        text_provenance,
    })
}

/// Sorted unique whitespace-separated words over every clip text in the
/// dataset; the vocabulary the dummy-text ablation samples from.
pub fn task_vocabulary(dataset: &Dataset) -> Result<Vec<String>> {
    let mut words = std::collections::BTreeSet::new();
    for id in dataset.all_clip_ids() {
        let record = dataset.load_clip(&id)?;
        for w in record.text.to_lowercase().split_whitespace() {
            words.insert(w.to_string());
        }
    }
    Ok(words.into_iter().collect())
}

/// Train a forecaster on the dataset's train split. Deterministic given the
/// seeds: epoch order comes from a per-epoch derived splitmix64 stream, and
/// gradients accumulate in fixed sample order.
pub fn train(
    dataset: &Dataset,
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<(ForecasterModel, Vec<LogRecord>)> {
    config.validate()?;
    model_config.validate()?;

    let (samples, _) = split_samples(dataset, "train", &config.window)?;
    if samples.is_empty() {
        return Err(Error::validation("train split has no usable samples".to_string()));
    }
    let stats = fit_minmax(&samples)?;
    let mut model = build(model_config)?;
    model.norm_stats = stats;

    // clean contexts are fixed per sample; build them once
    let mut records: BTreeMap<String, ClipRecord> = BTreeMap::new();
    for id in dataset.clip_ids("train")? {
        records.insert(id.clone(), dataset.load_clip(id)?);
    }
    let contexts: Vec<RawContext> = samples
        .iter()
        .map(|s| build_context(&records[&s.clip_id], s, model_config, Ablation::None, 0, &[]))
        .collect::<Result<_>>()?;

    let pairs = PairSet::intra_hand_full();
    let mut optimizer = OptimizerState::new(&model);
    let mut logs = Vec::with_capacity(config.steps);

    let mut epoch = 0u64;
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0usize;
    let next_index = |epoch: &mut u64, order: &mut Vec<usize>, cursor: &mut usize| {
        if *cursor >= order.len() {
            let mut fresh: Vec<usize> = (0..samples.len()).collect();
            Prng::new(mix64(config.seed ^ *epoch)).shuffle(&mut fresh);
            *order = fresh;
            *cursor = 0;
            *epoch += 1;
        }
        let i = order[*cursor];
        *cursor += 1;
        i
    };

    for step in 0..config.steps {
        let batch: Vec<usize> = (0..config.batch_size)
            .map(|_| next_index(&mut epoch, &mut order, &mut cursor))
            .collect();

        // one tape per step: parameters bound once, every sample's forward
        // and loss share them, so backward accumulates the batch gradient
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let mut loss_sum = None;
        let mut totals = (0.0, 0.0, 0.0, 0.0);
        for &idx in &batch {
            let sample = &samples[idx];
            let pred = forward_in_graph(&mut g, &bound, &model, sample, &contexts[idx])?;
            let (loss_node, breakdown) = attach_loss(
                &mut g,
                pred,
                &sample.fut_poses,
                &sample.fut_mask,
                &config.loss_weights,
                &pairs,
            )?;
            if !breakdown.total.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss at step {step}, sample {}",
                    sample.id()
                )));
            }
            totals.0 += breakdown.total;
            totals.1 += breakdown.abs;
            totals.2 += breakdown.rel;
            totals.3 += breakdown.pair;
            loss_sum = Some(match loss_sum {
                None => loss_node,
                Some(acc) => g.add(acc, loss_node)?,
            });
        }
        let mean_loss = g.scale(loss_sum.unwrap(), 1.0 / config.batch_size as f64)?;
        g.backward(mean_loss)?;
        let grads: Vec<Vec<f64>> = bound.ids.iter().map(|&id| g.grad(id).to_vec()).collect();
        drop(g);

        let lr = lr_at(step, config);
        adamw_step(&mut model, &grads, &mut optimizer, lr, config)?;

        let b = config.batch_size as f64;
        let mut record = LogRecord {
            step,
            lr,
            loss_total: totals.0 / b,
            loss_abs: totals.1 / b,
            loss_rel: totals.2 / b,
            loss_pair: totals.3 / b,
            val: None,
        };
        if config.eval_interval > 0 && (step + 1) % config.eval_interval == 0 {
            let options = EvalOptions {
                split: "val".to_string(),
                window: config.window,
                ..EvalOptions::default()
            };
            record.val = Some(evaluate(Predictor::Model(&model), dataset, &options)?);
        }
        logs.push(record);
    }

    Ok((model, logs))
}

/// What produces predictions during evaluation.
pub enum Predictor<'a> {
    Model(&'a ForecasterModel),
    Static,
    Cvm,
}

impl Predictor<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Predictor::Model(_) => "model",
            Predictor::Static => "static",
            Predictor::Cvm => "cvm",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub split: String,
    pub strata_fraction: Option<f64>,
    pub ablation: Ablation,
    pub seed: u64,
    pub jobs: usize,
    pub averaging: Averaging,
    pub window: WindowConfig,
    /// CVM velocity window (>= 2).
    pub velocity_window: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            split: "test".to_string(),
            strata_fraction: None,
            ablation: Ablation::None,
            seed: 0,
            jobs: 1,
            averaging: Averaging::Micro,
            window: WindowConfig::default(),
            velocity_window: 2,
        }
    }
}

fn and_mask(fut_mask: &[bool], joint_valid: &[bool]) -> Vec<bool> {
    fut_mask
        .iter()
        .enumerate()
        .map(|(tj, &m)| m && joint_valid[tj % NUM_JOINTS])
        .collect()
}

/// Evaluate a predictor on one split. Baselines ignore the context (and
/// therefore the ablation) by construction; the static baseline is fitted on
/// the dataset's train split.
pub fn evaluate(predictor: Predictor<'_>, dataset: &Dataset, options: &EvalOptions) -> Result<Report> {
    let (samples, _) = split_samples(dataset, &options.split, &options.window)?;
    if samples.is_empty() {
        return Err(Error::validation(format!(
            "split {:?} has no usable samples",
            options.split
        )));
    }
    let mut records: BTreeMap<String, ClipRecord> = BTreeMap::new();
    for id in dataset.clip_ids(&options.split)? {
        records.insert(id.clone(), dataset.load_clip(id)?);
    }

    let static_model = match predictor {
        Predictor::Static => {
            let (train_samples, _) = split_samples(dataset, "train", &options.window)?;
            Some(static_fit(&train_samples)?)
        }
        _ => None,
    };
    let vocab = match (&predictor, options.ablation.corrupt_text()) {
        (Predictor::Model(_), true) => task_vocabulary(dataset)?,
        _ => Vec::new(),
    };

    let eval_one = |sample: &Sample| -> Result<SampleMetrics> {
        let (pred, joint_valid) = match &predictor {
            Predictor::Model(model) => {
                let ctx = build_context(
                    &records[&sample.clip_id],
                    sample,
                    &model.config,
                    options.ablation,
                    options.seed,
                    &vocab,
                )?;
                (forward(model, sample, &ctx)?, vec![true; NUM_JOINTS])
            }
            Predictor::Static => {
                let (pred, valid) =
                    static_predict(static_model.as_ref().unwrap(), options.window.t_fut);
                (pred, valid)
            }
            Predictor::Cvm => cvm_predict(
                &sample.obs_poses,
                &sample.obs_mask,
                options.window.t_fut,
                options.velocity_window,
            )?,
        };
        let mask = and_mask(&sample.fut_mask, &joint_valid);
        sample_metrics(sample.id(), &pred, &sample.fut_poses, &mask, sample.egomotion)
    };

    let jobs = options.jobs.max(1).min(samples.len());
    let per_sample: Vec<SampleMetrics> = if jobs <= 1 {
        samples.iter().map(eval_one).collect::<Result<_>>()?
    } else {
        // contiguous chunks, joined in order: the result is identical to the
        // sequential pass regardless of the job count
        let chunk = samples.len().div_ceil(jobs);
        std::thread::scope(|scope| {
            let handles: Vec<_> = samples
                .chunks(chunk)
                .map(|part| scope.spawn(|| part.iter().map(eval_one).collect::<Result<Vec<_>>>()))
                .collect();
            let mut all = Vec::with_capacity(samples.len());
            for h in handles {
                all.extend(h.join().expect("eval worker panicked")?);
            }
            Ok::<_, Error>(all)
        })?
    };

    let config = ReportConfig {
        predictor: predictor.name().to_string(),
        split: options.split.clone(),
        ablation: options.ablation.as_str().to_string(),
        strata_fraction: options.strata_fraction,
        seed: options.seed,
        averaging: options.averaging,
        canonical_mode: options.window.mode.as_str().to_string(),
    };
    aggregate_report(&per_sample, options.strata_fraction, options.averaging, config)
}
