//! The forecasting model: a state encoder over observed hand poses, shared
//! adapters for the multimodal context, a cross-attention encoder, and a
//! learned-query action decoder, with deterministic initialization and a
//! binary checkpoint container.
//!
//! Architecture per sample:
//!
//! ```text
//! obs poses (canonical) -> normalize -> zero masked -> [t_obs, 3J + J]
//!   -> W_s, b_s, temporal enc                      = S   [t_obs, D]
//! raw context -> adapters + encodings -> concat    = C   [L_v+L_t, D]
//! encoder: N_e x (cross-attend S->C + FFN, self-attend + FFN) = Z
//! decoder: learned queries + temporal enc,
//!          N_d x (self-attend, cross-attend ->Z + FFN)
//!   -> output head [D, 3J] -> denormalize          = P?  [t_fut, J, 3]
//! ```
//!
//! All weights draw from a single splitmix64 stream in declaration order, so
//! a seed pins every parameter bitwise. Checkpoints store parameters as
//! little-endian binary32 in the same order; saving quantizes the in-memory
//! model identically, which keeps a saved model and its reload bitwise equal.

use std::collections::HashMap;
use std::path::Path;

use crate::context::{adapt_and_fuse_in_graph, AdapterParams, RawContext};
use crate::dataio::normalize::{denorm_coefficients, normalize, NormStats};
use crate::dataio::windows::Sample;
use crate::error::{Error, Result};
use crate::geometry::NUM_JOINTS;
use crate::nnkernel::attention::{attention_block, attn_sublayer, AttnParams, FfnParams};
use crate::nnkernel::encoding::encoding_table;
use crate::nnkernel::{Graph, NodeId, Prng, Tensor};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"EGGH";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    /// Shared latent width.
    pub d: usize,
    pub heads: usize,
    pub enc_blocks: usize,
    pub dec_blocks: usize,
    pub d_feat_vision: usize,
    pub d_feat_text: usize,
    pub t_obs: usize,
    pub t_fut: usize,
    pub joints: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 64,
            heads: 4,
            enc_blocks: 2,
            dec_blocks: 2,
            d_feat_vision: crate::context::GRID_TOKEN_DIM,
            d_feat_text: 16,
            t_obs: 20,
            t_fut: 10,
            joints: NUM_JOINTS,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.d % self.heads != 0 {
            return Err(Error::config(format!(
                "latent width {} not divisible by {} heads",
                self.d, self.heads
            )));
        }
        if self.joints != NUM_JOINTS {
            return Err(Error::config(format!(
                "joint count must be {NUM_JOINTS}, got {}",
                self.joints
            )));
        }
        let positive = [
            self.d,
            self.enc_blocks,
            self.dec_blocks,
            self.d_feat_vision,
            self.d_feat_text,
            self.t_obs,
            self.t_fut,
        ];
        if positive.iter().any(|&v| v == 0) {
            return Err(Error::config("all model dimensions must be >= 1".to_string()));
        }
        Ok(())
    }

    /// Width of the per-frame state vector: zeroed coordinates plus validity
    /// flags.
    pub fn state_width(&self) -> usize {
        self.joints * 3 + self.joints
    }

    pub fn output_width(&self) -> usize {
        self.joints * 3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    LnGain,
    LnBias,
    Queries,
}

/// Named parameter tensors in a fixed declaration order (the checkpoint
/// contract).
#[derive(Debug, Clone)]
pub struct ParameterStore {
    entries: Vec<(String, ParamKind, Tensor)>,
    index: HashMap<String, usize>,
}

impl ParameterStore {
    pub fn num_params(&self) -> usize {
        self.entries.iter().map(|(_, _, t)| t.len()).sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self.entries[self.index[name]].2
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, ParamKind, &Tensor)> {
        self.entries.iter().map(|(n, k, t)| (n.as_str(), *k, t))
    }

    pub fn entries_mut(&mut self) -> impl Iterator<Item = (&str, ParamKind, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, k, t)| (n.as_str(), *k, t))
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].2
    }

    pub fn quantize_f32(&mut self) {
        for (_, _, t) in &mut self.entries {
            t.quantize_f32();
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, _, t)| t.is_finite())
    }
}

/// The declaration list: every parameter's name, shape, and init kind, in
/// checkpoint order.
fn declarations(config: &ModelConfig) -> Vec<(String, ParamKind, Vec<usize>)> {
    let d = config.d;
    let mut decls: Vec<(String, ParamKind, Vec<usize>)> = Vec::new();
    let mut push = |name: String, kind: ParamKind, shape: Vec<usize>| {
        decls.push((name, kind, shape));
    };

    push("state.w".into(), ParamKind::Weight, vec![config.state_width(), d]);
    push("state.b".into(), ParamKind::Bias, vec![d]);
    push("adapt.visual.w".into(), ParamKind::Weight, vec![config.d_feat_vision, d]);
    push("adapt.visual.b".into(), ParamKind::Bias, vec![d]);
    push("adapt.text.w".into(), ParamKind::Weight, vec![config.d_feat_text, d]);
    push("adapt.text.b".into(), ParamKind::Bias, vec![d]);

    let push_attn = |prefix: String, decls: &mut Vec<(String, ParamKind, Vec<usize>)>| {
        decls.push((format!("{prefix}.ln.g"), ParamKind::LnGain, vec![d]));
        decls.push((format!("{prefix}.ln.b"), ParamKind::LnBias, vec![d]));
        for w in ["wq", "wk", "wv", "wo"] {
            decls.push((format!("{prefix}.{w}"), ParamKind::Weight, vec![d, d]));
            decls.push((format!("{prefix}.{}", w.replace('w', "b")), ParamKind::Bias, vec![d]));
        }
    };
    let push_ffn = |prefix: String, decls: &mut Vec<(String, ParamKind, Vec<usize>)>| {
        decls.push((format!("{prefix}.ln.g"), ParamKind::LnGain, vec![d]));
        decls.push((format!("{prefix}.ln.b"), ParamKind::LnBias, vec![d]));
        decls.push((format!("{prefix}.w1"), ParamKind::Weight, vec![d, 4 * d]));
        decls.push((format!("{prefix}.b1"), ParamKind::Bias, vec![4 * d]));
        decls.push((format!("{prefix}.w2"), ParamKind::Weight, vec![4 * d, d]));
        decls.push((format!("{prefix}.b2"), ParamKind::Bias, vec![d]));
    };

    for i in 0..config.enc_blocks {
        push_attn(format!("enc{i}.cross"), &mut decls);
        push_ffn(format!("enc{i}.crossffn"), &mut decls);
        push_attn(format!("enc{i}.self"), &mut decls);
        push_ffn(format!("enc{i}.selfffn"), &mut decls);
    }

    decls.push(("dec.queries".into(), ParamKind::Queries, vec![config.t_fut, d]));

    for i in 0..config.dec_blocks {
        push_attn(format!("dec{i}.self"), &mut decls);
        push_attn(format!("dec{i}.cross"), &mut decls);
        push_ffn(format!("dec{i}.ffn"), &mut decls);
    }

    decls.push(("head.w".into(), ParamKind::Weight, vec![d, config.output_width()]));
    decls.push(("head.b".into(), ParamKind::Bias, vec![config.output_width()]));
    decls
}

#[derive(Debug, Clone)]
pub struct ForecasterModel {
    pub config: ModelConfig,
    pub params: ParameterStore,
    pub norm_stats: NormStats,
}

/// Initialize a model from its config: weights uniform(-s, s) with
/// s = sqrt(1 / fan_in), biases zero, layer-norm gain 1 / bias 0, future
/// queries Gaussian(0, 0.02^2). Only weights and queries consume PRNG draws,
/// in declaration order.
pub fn build(config: &ModelConfig) -> Result<ForecasterModel> {
    config.validate()?;
    let mut prng = Prng::new(config.seed);
    let mut entries = Vec::new();
    let mut index = HashMap::new();
    for (name, kind, shape) in declarations(config) {
        let n: usize = shape.iter().product();
        let data = match kind {
            ParamKind::Weight => {
                let s = (1.0 / shape[0] as f64).sqrt();
                (0..n).map(|_| prng.uniform_in(-s, s)).collect()
            }
            ParamKind::Bias | ParamKind::LnBias => vec![0.0; n],
            ParamKind::LnGain => vec![1.0; n],
            ParamKind::Queries => (0..n).map(|_| 0.02 * prng.next_gaussian()).collect(),
        };
        index.insert(name.clone(), entries.len());
        entries.push((name, kind, Tensor::new(shape, data)?));
    }
    Ok(ForecasterModel {
        config: config.clone(),
        params: ParameterStore { entries, index },
        norm_stats: NormStats {
            min: [0.0; 3],
            max: [1.0; 3],
        },
    })
}

/// Parameter nodes bound into a graph, parallel to the store's order.
pub struct BoundParams<'m> {
    model: &'m ForecasterModel,
    pub ids: Vec<NodeId>,
}

impl<'m> BoundParams<'m> {
    pub fn id(&self, name: &str) -> NodeId {
        self.ids[self.model.params.index[name]]
    }

    fn attn(&self, prefix: &str) -> AttnParams {
        AttnParams {
            ln_g: self.id(&format!("{prefix}.ln.g")),
            ln_b: self.id(&format!("{prefix}.ln.b")),
            w_q: self.id(&format!("{prefix}.wq")),
            b_q: self.id(&format!("{prefix}.bq")),
            w_k: self.id(&format!("{prefix}.wk")),
            b_k: self.id(&format!("{prefix}.bk")),
            w_v: self.id(&format!("{prefix}.wv")),
            b_v: self.id(&format!("{prefix}.bv")),
            w_o: self.id(&format!("{prefix}.wo")),
            b_o: self.id(&format!("{prefix}.bo")),
        }
    }

    fn ffn(&self, prefix: &str) -> FfnParams {
        FfnParams {
            ln_g: self.id(&format!("{prefix}.ln.g")),
            ln_b: self.id(&format!("{prefix}.ln.b")),
            w1: self.id(&format!("{prefix}.w1")),
            b1: self.id(&format!("{prefix}.b1")),
            w2: self.id(&format!("{prefix}.w2")),
            b2: self.id(&format!("{prefix}.b2")),
        }
    }
}

impl ForecasterModel {
    /// Insert every parameter as a graph input, in declaration order.
    pub fn bind<'m>(&'m self, g: &mut Graph) -> BoundParams<'m> {
        let ids = self
            .params
            .entries
            .iter()
            .map(|(_, _, t)| g.input(t.clone()))
            .collect();
        BoundParams { model: self, ids }
    }
}

/// Flatten normalized observed poses into the state matrix
/// [t_obs, 3J + J]: coordinates with masked slots zeroed, then the validity
/// flags as 0/1.
pub fn state_input_matrix(
    obs_normalized: &[f64],
    obs_mask: &[bool],
    config: &ModelConfig,
) -> Result<Tensor> {
    let j = config.joints;
    if obs_normalized.len() != config.t_obs * j * 3 || obs_mask.len() != config.t_obs * j {
        return Err(Error::validation(format!(
            "state input: expected [{}][{j}] poses/mask, got {} and {}",
            config.t_obs,
            obs_normalized.len(),
            obs_mask.len()
        )));
    }
    let width = config.state_width();
    let mut data = Vec::with_capacity(config.t_obs * width);
    for t in 0..config.t_obs {
        for jj in 0..j {
            let valid = obs_mask[t * j + jj];
            for k in 0..3 {
                data.push(if valid {
                    obs_normalized[(t * j + jj) * 3 + k]
                } else {
                    0.0
                });
            }
        }
        for jj in 0..j {
            data.push(obs_mask[t * j + jj] as u8 as f64);
        }
    }
    Tensor::new(vec![config.t_obs, width], data)
}

/// State encoder: linear projection of the state matrix plus sinusoidal
/// temporal encodings indexed by frame.
pub fn encode_state_in_graph(
    g: &mut Graph,
    state_input: NodeId,
    bound: &BoundParams<'_>,
    config: &ModelConfig,
) -> Result<NodeId> {
    let projected = g.linear(state_input, bound.id("state.w"), bound.id("state.b"))?;
    let positions: Vec<usize> = (0..config.t_obs).collect();
    let enc = g.input(encoding_table(&positions, config.d));
    g.add(projected, enc)
}

/// Eager state encoding for tests: S = f_s(P) W_s + b_s + E(time).
pub fn encode_state(
    obs_normalized: &[f64],
    obs_mask: &[bool],
    model: &ForecasterModel,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let bound = model.bind(&mut g);
    let input = g.input(state_input_matrix(obs_normalized, obs_mask, &model.config)?);
    let s = encode_state_in_graph(&mut g, input, &bound, &model.config)?;
    Ok(g.value(s).clone())
}

/// Full forward pass inside an existing graph. Returns the denormalized
/// prediction node, shape [t_fut, 3J] in canonical meters.
pub fn forward_in_graph(
    g: &mut Graph,
    bound: &BoundParams<'_>,
    model: &ForecasterModel,
    sample: &Sample,
    ctx: &RawContext,
) -> Result<NodeId> {
    let config = &model.config;
    if sample.obs_poses.len() != config.t_obs * config.joints * 3 {
        return Err(Error::validation(format!(
            "sample obs length {} does not match config t_obs {}",
            sample.obs_poses.len(),
            config.t_obs
        )));
    }

    // context tokens in the shared space
    let adapters = AdapterParams {
        w_v: bound.id("adapt.visual.w"),
        b_v: bound.id("adapt.visual.b"),
        w_t: bound.id("adapt.text.w"),
        b_t: bound.id("adapt.text.b"),
    };
    let context = adapt_and_fuse_in_graph(g, ctx, &adapters)?;

    // state tokens
    let obs_normalized = normalize(&sample.obs_poses, &model.norm_stats);
    let state = g.input(state_input_matrix(&obs_normalized, &sample.obs_mask, config)?);
    let mut x = encode_state_in_graph(g, state, bound, config)?;

    // encoder: cross-attend to the fused context, then self-attend
    for i in 0..config.enc_blocks {
        x = attention_block(
            g,
            x,
            Some(context),
            &bound.attn(&format!("enc{i}.cross")),
            &bound.ffn(&format!("enc{i}.crossffn")),
            config.heads,
        )?;
        x = attention_block(
            g,
            x,
            None,
            &bound.attn(&format!("enc{i}.self")),
            &bound.ffn(&format!("enc{i}.selfffn")),
            config.heads,
        )?;
    }
    let memory = x;

    // decoder: learned queries with temporal positions continuing the
    // observation timeline
    let positions: Vec<usize> = (0..config.t_fut).map(|k| config.t_obs + k).collect();
    let q_enc = g.input(encoding_table(&positions, config.d));
    let mut q = g.add(bound.id("dec.queries"), q_enc)?;
    for i in 0..config.dec_blocks {
        q = attn_sublayer(g, q, None, &bound.attn(&format!("dec{i}.self")), config.heads)?;
        q = attention_block(
            g,
            q,
            Some(memory),
            &bound.attn(&format!("dec{i}.cross")),
            &bound.ffn(&format!("dec{i}.ffn")),
            config.heads,
        )?;
    }

    // output head in normalized space, then the affine denormalization
    let pred_norm = g.linear(q, bound.id("head.w"), bound.id("head.b"))?;
    let (scale, offset) = denorm_coefficients(&model.norm_stats);
    let scale = g.input(Tensor::new(vec![config.output_width()], scale)?);
    let offset = g.input(Tensor::new(vec![config.output_width()], offset)?);
    let scaled = g.mul(pred_norm, scale)?;
    g.add(scaled, offset)
}

/// Predict the future window for one sample: [t_fut * joints * 3] canonical
/// meters. Pure function of (parameters, sample, context).
pub fn forward(model: &ForecasterModel, sample: &Sample, ctx: &RawContext) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let bound = model.bind(&mut g);
    let pred = forward_in_graph(&mut g, &bound, model, sample, ctx)?;
    Ok(g.value(pred).data().to_vec())
}

// ---------------------------------------------------------------------------
// Checkpoint container: magic, version, length-prefixed JSON header, then
// binary32 payload. Shared by the forecaster and the static baseline.
// ---------------------------------------------------------------------------

#[derive(serde::Serialize, serde::Deserialize)]
struct Header {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<ModelConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    counts: Option<Vec<u64>>,
}

pub(crate) fn write_container(path: &Path, header_json: &str, payload: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(12 + header_json.len() + payload.len() * 4);
    bytes.extend_from_slice(&CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(header_json.as_bytes());
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_container(path: &Path) -> Result<(String, Vec<f32>)> {
    let bytes = std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    if bytes.len() < 12 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: 12,
            actual: bytes.len() as u64,
        });
    }
    if bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::MagicMismatch {
            path: path.to_path_buf(),
            found: [bytes[0], bytes[1], bytes[2], bytes[3]],
        });
    }
    let version = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]);
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            found: version,
        });
    }
    let json_len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    if bytes.len() < 12 + json_len {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: (12 + json_len) as u64,
            actual: bytes.len() as u64,
        });
    }
    let header = String::from_utf8(bytes[12..12 + json_len].to_vec()).map_err(|e| {
        Error::Integrity {
            path: path.to_path_buf(),
            detail: format!("header is not UTF-8: {e}"),
        }
    })?;
    let body = &bytes[12 + json_len..];
    if body.len() % 4 != 0 {
        return Err(Error::Integrity {
            path: path.to_path_buf(),
            detail: format!("payload length {} is not a multiple of 4", body.len()),
        });
    }
    let payload = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((header, payload))
}

/// Quantize the model to its at-rest binary32 precision and write the
/// checkpoint. Quantizing in place keeps the in-memory model's forward
/// bitwise equal to the reloaded model's.
pub fn save_checkpoint(model: &mut ForecasterModel, path: &Path) -> Result<()> {
    model.params.quantize_f32();
    model.norm_stats.quantize_f32();

    let header = serde_json::to_string(&Header {
        kind: "forecaster".to_string(),
        config: Some(model.config.clone()),
        counts: None,
    })
    .expect("header json");

    let mut payload: Vec<f32> = Vec::with_capacity(model.params.num_params() + 6);
    for (_, _, t) in &model.params.entries {
        payload.extend(t.data().iter().map(|&v| v as f32));
    }
    for k in 0..3 {
        payload.push(model.norm_stats.min[k] as f32);
    }
    for k in 0..3 {
        payload.push(model.norm_stats.max[k] as f32);
    }
    write_container(path, &header, &payload)
}

/// Load a forecaster checkpoint. The parameter byte count must match the
/// config exactly; mismatches are integrity errors, not silent misreads.
pub fn load_checkpoint(path: &Path) -> Result<ForecasterModel> {
    let (header_json, payload) = read_container(path)?;
    let header: Header = serde_json::from_str(&header_json).map_err(|e| Error::Integrity {
        path: path.to_path_buf(),
        detail: format!("header parse error: {e}"),
    })?;
    if header.kind != "forecaster" {
        return Err(Error::Integrity {
            path: path.to_path_buf(),
            detail: format!("expected a forecaster checkpoint, found kind {:?}", header.kind),
        });
    }
    let config = header.config.ok_or_else(|| Error::Integrity {
        path: path.to_path_buf(),
        detail: "forecaster header missing config".to_string(),
    })?;
    config.validate()?;

    let decls = declarations(&config);
    let expected: usize = decls.iter().map(|(_, _, s)| s.iter().product::<usize>()).sum();
    if payload.len() < expected + 6 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: (expected + 6) as u64 * 4,
            actual: payload.len() as u64 * 4,
        });
    }
    if payload.len() != expected + 6 {
        return Err(Error::Integrity {
            path: path.to_path_buf(),
            detail: format!(
                "config implies {} parameter values (+6 normalization), file has {}",
                expected,
                payload.len()
            ),
        });
    }

    let mut entries = Vec::new();
    let mut index = HashMap::new();
    let mut off = 0;
    for (name, kind, shape) in decls {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = payload[off..off + n].iter().map(|&v| v as f64).collect();
        off += n;
        index.insert(name.clone(), entries.len());
        entries.push((name, kind, Tensor::new(shape, data)?));
    }
    let stats = NormStats {
        min: [
            payload[off] as f64,
            payload[off + 1] as f64,
            payload[off + 2] as f64,
        ],
        max: [
            payload[off + 3] as f64,
            payload[off + 4] as f64,
            payload[off + 5] as f64,
        ],
    };
    stats.validate()?;

    Ok(ForecasterModel {
        config,
        params: ParameterStore { entries, index },
        norm_stats: stats,
    })
}
