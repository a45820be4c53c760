//! Pre-layer-norm attention building blocks assembled from graph primitives.
//!
//! An attention sublayer computes `x + MHA(LN(x), kv)`; a feed-forward
//! sublayer computes `x + FFN(LN(x))` with hidden width 4D and GELU. The
//! full [`attention_block`] chains the two. Cross-attention passes the
//! context as `kv`; self-attention (kv = None) attends over `LN(x)` itself.

use super::graph::{Graph, NodeId};
use crate::error::{Error, Result};

/// Node ids of one attention sublayer's parameters, bound into a graph.
#[derive(Debug, Clone, Copy)]
pub struct AttnParams {
    pub ln_g: NodeId,
    pub ln_b: NodeId,
    pub w_q: NodeId,
    pub b_q: NodeId,
    pub w_k: NodeId,
    pub b_k: NodeId,
    pub w_v: NodeId,
    pub b_v: NodeId,
    pub w_o: NodeId,
    pub b_o: NodeId,
}

/// Node ids of one feed-forward sublayer's parameters.
#[derive(Debug, Clone, Copy)]
pub struct FfnParams {
    pub ln_g: NodeId,
    pub ln_b: NodeId,
    pub w1: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
}

/// Multi-head scaled dot-product attention with residual connection:
/// `x + MHA(LN(x), kv)`. With `kv = None` the normalized queries attend
/// over themselves.
pub fn attn_sublayer(
    g: &mut Graph,
    x: NodeId,
    kv: Option<NodeId>,
    p: &AttnParams,
    heads: usize,
) -> Result<NodeId> {
    let d = g.value(x).cols();
    if heads == 0 || d % heads != 0 {
        return Err(Error::config(format!(
            "attention width {d} not divisible by {heads} heads"
        )));
    }
    let head_dim = d / heads;
    let scale = 1.0 / (head_dim as f64).sqrt();

    let xn = g.layer_norm(x, p.ln_g, p.ln_b)?;
    let kv_src = kv.unwrap_or(xn);
    let q = g.linear(xn, p.w_q, p.b_q)?;
    let k = g.linear(kv_src, p.w_k, p.b_k)?;
    let v = g.linear(kv_src, p.w_v, p.b_v)?;

    let mut head_outputs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice_cols(q, h * head_dim, head_dim)?;
        let kh = g.slice_cols(k, h * head_dim, head_dim)?;
        let vh = g.slice_cols(v, h * head_dim, head_dim)?;
        let kt = g.transpose(kh)?;
        let scores = g.matmul(qh, kt)?;
        let scaled = g.scale(scores, scale)?;
        let attn = g.softmax(scaled)?;
        head_outputs.push(g.matmul(attn, vh)?);
    }
    let merged = g.concat_cols(&head_outputs)?;
    let out = g.linear(merged, p.w_o, p.b_o)?;
    g.add(x, out)
}

/// Feed-forward sublayer with residual connection: `x + FFN(LN(x))`.
pub fn ffn_sublayer(g: &mut Graph, x: NodeId, p: &FfnParams) -> Result<NodeId> {
    let xn = g.layer_norm(x, p.ln_g, p.ln_b)?;
    let h = g.linear(xn, p.w1, p.b1)?;
    let a = g.gelu(h)?;
    let out = g.linear(a, p.w2, p.b2)?;
    g.add(x, out)
}

/// Full pre-layer-norm block: attention sublayer followed by feed-forward
/// sublayer.
pub fn attention_block(
    g: &mut Graph,
    x: NodeId,
    kv: Option<NodeId>,
    attn: &AttnParams,
    ffn: &FfnParams,
    heads: usize,
) -> Result<NodeId> {
    let mid = attn_sublayer(g, x, kv, attn, heads)?;
    ffn_sublayer(g, mid, ffn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkernel::prng::Prng;
    use crate::nnkernel::tensor::Tensor;

    fn rand_tensor(prng: &mut Prng, shape: Vec<usize>, scale: f64) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| prng.uniform_in(-scale, scale)).collect();
        Tensor::new(shape, data).unwrap()
    }

    fn bind_attn(g: &mut Graph, prng: &mut Prng, d: usize, zero_value_path: bool) -> AttnParams {
        let s = 1.0 / (d as f64).sqrt();
        AttnParams {
            ln_g: g.input(Tensor::new(vec![d], vec![1.0; d]).unwrap()),
            ln_b: g.input(Tensor::zeros(vec![d])),
            w_q: g.input(rand_tensor(prng, vec![d, d], s)),
            b_q: g.input(Tensor::zeros(vec![d])),
            w_k: g.input(rand_tensor(prng, vec![d, d], s)),
            b_k: g.input(Tensor::zeros(vec![d])),
            w_v: g.input(if zero_value_path {
                Tensor::zeros(vec![d, d])
            } else {
                rand_tensor(prng, vec![d, d], s)
            }),
            b_v: g.input(Tensor::zeros(vec![d])),
            w_o: g.input(rand_tensor(prng, vec![d, d], s)),
            b_o: g.input(Tensor::zeros(vec![d])),
        }
    }

    fn bind_ffn(g: &mut Graph, prng: &mut Prng, d: usize, zero_out_path: bool) -> FfnParams {
        let s = 1.0 / (d as f64).sqrt();
        FfnParams {
            ln_g: g.input(Tensor::new(vec![d], vec![1.0; d]).unwrap()),
            ln_b: g.input(Tensor::zeros(vec![d])),
            w1: g.input(rand_tensor(prng, vec![d, 4 * d], s)),
            b1: g.input(Tensor::zeros(vec![4 * d])),
            w2: g.input(if zero_out_path {
                Tensor::zeros(vec![4 * d, d])
            } else {
                rand_tensor(prng, vec![4 * d, d], s)
            }),
            b2: g.input(Tensor::zeros(vec![d])),
        }
    }

    #[test]
    fn zeroed_value_and_ffn_paths_pass_input_through() {
        let mut prng = Prng::new(11);
        let mut g = Graph::new();
        let d = 8;
        let x_t = rand_tensor(&mut prng, vec![5, d], 1.0);
        let x = g.input(x_t.clone());
        let attn = bind_attn(&mut g, &mut prng, d, true);
        let ffn = bind_ffn(&mut g, &mut prng, d, true);
        let y = attention_block(&mut g, x, None, &attn, &ffn, 2).unwrap();
        assert_eq!(g.value(y).data(), x_t.data());
    }

    #[test]
    fn single_key_attention_reduces_to_closed_form() {
        // With one kv token the softmax weight is exactly 1, so the output is
        // x + (LN(kv) W_v + b_v) W_o + b_o, broadcast to every query row.
        let mut prng = Prng::new(3);
        let mut g = Graph::new();
        let d = 4;
        let x_t = rand_tensor(&mut prng, vec![3, d], 1.0);
        let kv_t = rand_tensor(&mut prng, vec![1, d], 1.0);
        let x = g.input(x_t.clone());
        let kv = g.input(kv_t.clone());
        let attn = bind_attn(&mut g, &mut prng, d, false);
        let y = attn_sublayer(&mut g, x, Some(kv), &attn, 1).unwrap();

        let wv = g.value(attn.w_v).data().to_vec();
        let wo = g.value(attn.w_o).data().to_vec();
        // kv row through the value and output projections (biases are zero)
        let v: Vec<f64> = (0..d)
            .map(|j| (0..d).map(|p| kv_t.data()[p] * wv[p * d + j]).sum())
            .collect();
        let o: Vec<f64> = (0..d)
            .map(|j| (0..d).map(|p| v[p] * wo[p * d + j]).sum())
            .collect();
        for r in 0..3 {
            for c in 0..d {
                let expect = x_t.data()[r * d + c] + o[c];
                let got = g.value(y).data()[r * d + c];
                assert!((got - expect).abs() < 1e-12, "({r},{c}): {got} vs {expect}");
            }
        }
    }

    #[test]
    fn unmasked_attention_is_equivariant_to_kv_permutation() {
        let mut prng = Prng::new(21);
        let d = 6;
        let x_t = rand_tensor(&mut prng, vec![4, d], 1.0);
        let kv_t = rand_tensor(&mut prng, vec![5, d], 1.0);
        // reversed token order
        let mut kv_rev = Vec::new();
        for r in (0..5).rev() {
            kv_rev.extend_from_slice(&kv_t.data()[r * d..(r + 1) * d]);
        }
        let kv_rev_t = Tensor::new(vec![5, d], kv_rev).unwrap();

        let run = |kv_in: Tensor| {
            let mut prng = Prng::new(77);
            let mut g = Graph::new();
            let x = g.input(x_t.clone());
            let kv = g.input(kv_in);
            let attn = bind_attn(&mut g, &mut prng, d, false);
            let y = attn_sublayer(&mut g, x, Some(kv), &attn, 1).unwrap();
            g.value(y).data().to_vec()
        };
        let a = run(kv_t);
        let b = run(kv_rev_t);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
