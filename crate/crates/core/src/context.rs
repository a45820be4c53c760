//! Multimodal context tokens: toy vision and text featurizers, the
//! precomputed-token ingestion path, shared-space adapters with sinusoidal
//! encodings, and the corruption ablations.
//!
//! The toy featurizers stand in for a frozen egocentric video-text encoder:
//! the fusion interface (adapters, encodings, concatenation) is the part the
//! forecaster depends on, so any upstream encoder that produces raw token
//! matrices can be plugged in through the precomputed-token path.

use crate::dataio::bundle::{ClipRecord, FRAME_ELEMS, FRAME_SIDE};
use crate::error::{Error, Result};
use crate::nnkernel::encoding::encoding_table;
use crate::nnkernel::{fnv1a64, Graph, NodeId, Prng, Tensor};

/// Grid cells per frame side (224 / 32).
pub const GRID_SIDE: usize = 7;
/// Tokens per frame from the grid featurizer.
pub const GRID_TOKENS_PER_FRAME: usize = GRID_SIDE * GRID_SIDE;
/// Feature width of a grid token: mean R, G, B plus normalized cell center.
pub const GRID_TOKEN_DIM: usize = 5;
/// Number of context frames fed to the visual featurizer.
pub const CONTEXT_FRAMES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisionProvenance {
    ToyGrid,
    Precomputed,
    Noise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextProvenance {
    HashedText,
    Dummy,
}

/// Raw (pre-adapter) context: one token matrix per modality plus the
/// observation-window frame index of each visual frame.
#[derive(Debug, Clone)]
pub struct RawContext {
    /// [L_v, D_v] raw visual tokens, frame-major.
    pub visual: Tensor,
    /// [L_t, D_t] raw text tokens, one per word.
    pub text: Tensor,
    /// Window-relative source frame per visual frame group.
    pub frame_indices: Vec<usize>,
    pub vision_provenance: VisionProvenance,
    pub text_provenance: TextProvenance,
}

/// Adapted and fused context tokens in the shared latent space.
#[derive(Debug, Clone)]
pub struct ContextTokens {
    /// [L_v, D] adapted visual tokens with temporal encodings.
    pub visual: Tensor,
    /// [L_t, D] adapted text tokens with positional encodings.
    pub textual: Tensor,
    /// [L_v + L_t, D]: visual tokens then text tokens.
    pub fused: Tensor,
    pub vision_provenance: VisionProvenance,
    pub text_provenance: TextProvenance,
}

/// Featurize one 224x224x3 frame into a 7x7 grid of tokens
/// (mean R, mean G, mean B, center u / 224, center v / 224), row-major.
pub fn grid_frame_tokens(frame: &[f32]) -> Result<Vec<f64>> {
    if frame.len() != FRAME_ELEMS {
        return Err(Error::validation(format!(
            "frame must have {} values, got {}",
            FRAME_ELEMS,
            frame.len()
        )));
    }
    let cell = FRAME_SIDE / GRID_SIDE;
    let mut tokens = Vec::with_capacity(GRID_TOKENS_PER_FRAME * GRID_TOKEN_DIM);
    for gy in 0..GRID_SIDE {
        for gx in 0..GRID_SIDE {
            let mut sums = [0.0f64; 3];
            for py in gy * cell..(gy + 1) * cell {
                for px in gx * cell..(gx + 1) * cell {
                    let o = (py * FRAME_SIDE + px) * 3;
                    sums[0] += frame[o] as f64;
                    sums[1] += frame[o + 1] as f64;
                    sums[2] += frame[o + 2] as f64;
                }
            }
            let n = (cell * cell) as f64;
            tokens.push(sums[0] / n);
            tokens.push(sums[1] / n);
            tokens.push(sums[2] / n);
            tokens.push((gx * cell + cell / 2) as f64 / FRAME_SIDE as f64);
            tokens.push((gy * cell + cell / 2) as f64 / FRAME_SIDE as f64);
        }
    }
    Ok(tokens)
}

/// Featurize the four context frames, frame-major: [4 * 49, 5].
pub fn grid_vision_tokens(frames: &[f32]) -> Result<Tensor> {
    if frames.len() != CONTEXT_FRAMES * FRAME_ELEMS {
        return Err(Error::validation(format!(
            "expected {CONTEXT_FRAMES} frames ({} values), got {}",
            CONTEXT_FRAMES * FRAME_ELEMS,
            frames.len()
        )));
    }
    let mut data = Vec::with_capacity(CONTEXT_FRAMES * GRID_TOKENS_PER_FRAME * GRID_TOKEN_DIM);
    for f in 0..CONTEXT_FRAMES {
        data.extend(grid_frame_tokens(&frames[f * FRAME_ELEMS..(f + 1) * FRAME_ELEMS])?);
    }
    Tensor::new(
        vec![CONTEXT_FRAMES * GRID_TOKENS_PER_FRAME, GRID_TOKEN_DIM],
        data,
    )
}

/// One deterministic pseudo-random unit vector per word, seeded by the
/// word's 64-bit FNV-1a hash. Lowercased, whitespace-split, truncated at
/// `max_words`; empty text yields one token from the empty-string hash.
pub fn hashed_text_tokens(text: &str, d_feat: usize, max_words: usize) -> Result<Tensor> {
    if d_feat == 0 || max_words == 0 {
        return Err(Error::validation("d_feat and max_words must be positive".to_string()));
    }
    let lower = text.to_lowercase();
    let mut words: Vec<&str> = lower.split_whitespace().take(max_words).collect();
    if words.is_empty() {
        words.push("");
    }
    let mut data = Vec::with_capacity(words.len() * d_feat);
    for word in &words {
        data.extend(word_token(word, d_feat));
    }
    Tensor::new(vec![words.len(), d_feat], data)
}

fn word_token(word: &str, d_feat: usize) -> Vec<f64> {
    let mut prng = Prng::new(fnv1a64(word.as_bytes()));
    let raw: Vec<f64> = (0..d_feat).map(|_| prng.next_gaussian()).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        // cannot happen with Box-Muller output, but keep the contract total
        let mut v = vec![0.0; d_feat];
        v[0] = 1.0;
        return v;
    }
    raw.into_iter().map(|v| v / norm).collect()
}

/// Read precomputed visual tokens for the given context frames
/// (absolute frame indices into the clip), concatenated frame-major.
pub fn load_precomputed_tokens(record: &ClipRecord, indices: &[usize]) -> Result<Tensor> {
    let vt = record.vision_tokens.as_ref().ok_or_else(|| {
        Error::validation(format!(
            "precomputed tokens unavailable for clip {}",
            record.clip_id
        ))
    })?;
    let t = record.num_frames();
    let mut data = Vec::with_capacity(indices.len() * vt.len_per_frame * vt.dim);
    for &idx in indices {
        if idx >= t {
            return Err(Error::validation(format!(
                "context frame index {idx} out of range (clip has {t} frames)"
            )));
        }
        let per_frame = vt.len_per_frame * vt.dim;
        data.extend(
            vt.tokens[idx * per_frame..(idx + 1) * per_frame]
                .iter()
                .map(|&v| v as f64),
        );
    }
    Tensor::new(vec![indices.len() * vt.len_per_frame, vt.dim], data)
}

/// Bound adapter parameter nodes.
#[derive(Debug, Clone, Copy)]
pub struct AdapterParams {
    pub w_v: NodeId,
    pub b_v: NodeId,
    pub w_t: NodeId,
    pub b_t: NodeId,
}

/// Build the fused context inside a graph: project both streams through
/// their adapters, add the temporal encoding (indexed by source frame) to
/// visual tokens and the positional encoding (indexed by word position) to
/// text tokens, then concatenate visual-first. Differentiable with respect
/// to the adapter parameters.
pub fn adapt_and_fuse_in_graph(
    g: &mut Graph,
    ctx: &RawContext,
    params: &AdapterParams,
) -> Result<NodeId> {
    let l_v = ctx.visual.shape()[0];
    let d_v = ctx.visual.shape()[1];
    if g.value(params.w_v).shape()[0] != d_v {
        return Err(Error::validation(format!(
            "visual adapter expects width {}, tokens have {d_v}",
            g.value(params.w_v).shape()[0]
        )));
    }
    let d_t = ctx.text.shape()[1];
    if g.value(params.w_t).shape()[0] != d_t {
        return Err(Error::validation(format!(
            "text adapter expects width {}, tokens have {d_t}",
            g.value(params.w_t).shape()[0]
        )));
    }
    if ctx.frame_indices.is_empty() || l_v % ctx.frame_indices.len() != 0 {
        return Err(Error::validation(format!(
            "visual token count {l_v} not divisible into {} frames",
            ctx.frame_indices.len()
        )));
    }
    let d = g.value(params.w_v).shape()[1];

    let v_raw = g.input(ctx.visual.clone());
    let t_raw = g.input(ctx.text.clone());
    let v_adapted = g.linear(v_raw, params.w_v, params.b_v)?;
    let t_adapted = g.linear(t_raw, params.w_t, params.b_t)?;

    // temporal encoding: every token of a frame group shares that frame's
    // source index
    let per_frame = l_v / ctx.frame_indices.len();
    let v_positions: Vec<usize> = ctx
        .frame_indices
        .iter()
        .flat_map(|&f| std::iter::repeat(f).take(per_frame))
        .collect();
    let v_enc = g.input(encoding_table(&v_positions, d));
    let v_hat = g.add(v_adapted, v_enc)?;

    let t_positions: Vec<usize> = (0..ctx.text.shape()[0]).collect();
    let t_enc = g.input(encoding_table(&t_positions, d));
    let t_hat = g.add(t_adapted, t_enc)?;

    g.concat_rows(&[v_hat, t_hat])
}

/// Eager wrapper around [`adapt_and_fuse_in_graph`] for inspection and
/// tests: runs the same graph once and extracts the token matrices.
pub fn adapt_and_fuse(
    ctx: &RawContext,
    w_v: &Tensor,
    b_v: &Tensor,
    w_t: &Tensor,
    b_t: &Tensor,
) -> Result<ContextTokens> {
    let mut g = Graph::new();
    let params = AdapterParams {
        w_v: g.input(w_v.clone()),
        b_v: g.input(b_v.clone()),
        w_t: g.input(w_t.clone()),
        b_t: g.input(b_t.clone()),
    };
    let fused = adapt_and_fuse_in_graph(&mut g, ctx, &params)?;
    let l_v = ctx.visual.shape()[0];
    let l_t = ctx.text.shape()[0];
    let visual = g.slice_rows(fused, 0, l_v)?;
    let textual = g.slice_rows(fused, l_v, l_t)?;
    Ok(ContextTokens {
        visual: g.value(visual).clone(),
        textual: g.value(textual).clone(),
        fused: g.value(fused).clone(),
        vision_provenance: ctx.vision_provenance,
        text_provenance: ctx.text_provenance,
    })
}

/// Gaussian-noise frames for the noisy-vision ablation: i.i.d.
/// N(0.5, 0.25^2) clamped to [0, 1], deterministic per seed.
pub fn corrupt_vision(n_frames: usize, seed: u64) -> Vec<f32> {
    let mut prng = Prng::new(seed);
    (0..n_frames * FRAME_ELEMS)
        .map(|_| (0.5 + 0.25 * prng.next_gaussian()).clamp(0.0, 1.0) as f32)
        .collect()
}

/// Randomized task text for the dummy-language ablation: 1-3 words sampled
/// uniformly with replacement from the vocabulary, deterministic per seed.
pub fn dummy_text(vocab: &[String], seed: u64) -> Result<String> {
    if vocab.is_empty() {
        return Err(Error::validation("dummy_text: empty vocabulary".to_string()));
    }
    let mut prng = Prng::new(seed);
    let n = 1 + prng.next_index(3);
    let words: Vec<&str> = (0..n)
        .map(|_| vocab[prng.next_index(vocab.len())].as_str())
        .collect();
    Ok(words.join(" "))
}
