//! Central finite-difference verification of reverse-mode gradients.
//!
//! Every check builds a scalar readout (a fixed random weighting of the
//! output) so that gradients are informative for every op, then compares the
//! tape's gradient against central differences entry by entry.

use super::attention::{attention_block, AttnParams, FfnParams};
use super::graph::{Graph, NodeId};
use super::prng::Prng;
use super::tensor::Tensor;
use crate::error::Result;

/// Step used by all central-difference probes.
pub const FD_STEP: f64 = 1e-5;

/// Relative-error floor: entries smaller than this are compared at this
/// scale, which keeps zero-gradient entries from blowing up the ratio.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct FdItem {
    pub name: String,
    pub max_rel_error: f64,
}

pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Max relative error between `analytic` and central differences of `eval`
/// around `x0`.
pub fn fd_max_rel_error(
    eval: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    analytic: &[f64],
    step: f64,
) -> f64 {
    let mut worst = 0.0f64;
    let mut xs = x0.to_vec();
    for i in 0..x0.len() {
        xs[i] = x0[i] + step;
        let up = eval(&xs);
        xs[i] = x0[i] - step;
        let down = eval(&xs);
        xs[i] = x0[i];
        let fd = (up - down) / (2.0 * step);
        worst = worst.max(rel_error(analytic[i], fd));
    }
    worst
}

/// Run one case: `build` maps a flat input node of length `n` to a scalar
/// node; the case is checked at a random point drawn from `seed`.
fn run_case(
    n: usize,
    seed: u64,
    build: &dyn Fn(&mut Graph, NodeId) -> Result<NodeId>,
) -> f64 {
    let mut prng = Prng::new(seed);
    let x0: Vec<f64> = (0..n).map(|_| prng.uniform_in(-1.0, 1.0)).collect();

    let forward = |xs: &[f64]| -> (Graph, NodeId, NodeId) {
        let mut g = Graph::new();
        let input = g.input(Tensor::new(vec![1, xs.len()], xs.to_vec()).unwrap());
        let out = build(&mut g, input).expect("gradcheck case must build");
        (g, input, out)
    };

    let (mut g, input, out) = forward(&x0);
    g.backward(out).expect("backward");
    let analytic = g.grad(input).to_vec();

    let mut eval = |xs: &[f64]| -> f64 {
        let (g, _, out) = forward(xs);
        g.value(out).item()
    };
    fd_max_rel_error(&mut eval, &x0, &analytic, FD_STEP)
}

/// Weighted scalar readout: mean of elementwise product with fixed
/// pseudo-random weights.
fn readout(g: &mut Graph, x: NodeId, seed: u64) -> Result<NodeId> {
    let mut prng = Prng::new(seed);
    let n = g.value(x).len();
    let shape = g.value(x).shape().to_vec();
    let w = Tensor::new(shape, (0..n).map(|_| prng.uniform_in(-1.0, 1.0)).collect())?;
    let w = g.input(w);
    let p = g.mul(x, w)?;
    let mask = vec![true; n];
    g.masked_mean(p, &mask)
}

fn slice_as(g: &mut Graph, flat: NodeId, start: usize, shape: &[usize]) -> Result<NodeId> {
    let len: usize = shape.iter().product();
    let s = g.slice_cols(flat, start, len)?;
    g.reshape(s, shape.to_vec())
}

/// Finite-difference check for every differentiable kernel op. Returns one
/// entry per op with its max relative error.
pub fn check_all_ops(seed: u64) -> Vec<FdItem> {
    let mut items = Vec::new();
    let mut push = |name: &str, n: usize, build: &dyn Fn(&mut Graph, NodeId) -> Result<NodeId>| {
        items.push(FdItem {
            name: name.to_string(),
            max_rel_error: run_case(n, seed ^ super::prng::fnv1a64(name.as_bytes()), build),
        });
    };

    push("add", 24, &|g, x| {
        let a = slice_as(g, x, 0, &[3, 4])?;
        let b = slice_as(g, x, 12, &[3, 4])?;
        let y = g.add(a, b)?;
        readout(g, y, 1)
    });
    push("add_broadcast", 16, &|g, x| {
        let a = slice_as(g, x, 0, &[3, 4])?;
        let b = slice_as(g, x, 12, &[4])?;
        let y = g.add(a, b)?;
        readout(g, y, 2)
    });
    push("sub", 24, &|g, x| {
        let a = slice_as(g, x, 0, &[3, 4])?;
        let b = slice_as(g, x, 12, &[3, 4])?;
        let y = g.sub(a, b)?;
        readout(g, y, 3)
    });
    push("mul", 24, &|g, x| {
        let a = slice_as(g, x, 0, &[3, 4])?;
        let b = slice_as(g, x, 12, &[3, 4])?;
        let y = g.mul(a, b)?;
        readout(g, y, 4)
    });
    push("mul_broadcast", 16, &|g, x| {
        let a = slice_as(g, x, 0, &[3, 4])?;
        let b = slice_as(g, x, 12, &[4])?;
        let y = g.mul(a, b)?;
        readout(g, y, 5)
    });
    push("matmul", 35, &|g, x| {
        let a = slice_as(g, x, 0, &[2, 7])?;
        let b = slice_as(g, x, 14, &[7, 3])?;
        let y = g.matmul(a, b)?;
        readout(g, y, 6)
    });
    push("transpose", 12, &|g, x| {
        let a = slice_as(g, x, 0, &[3, 4])?;
        let y = g.transpose(a)?;
        readout(g, y, 7)
    });
    push("reshape", 12, &|g, x| {
        let a = slice_as(g, x, 0, &[3, 4])?;
        let y = g.reshape(a, vec![2, 6])?;
        readout(g, y, 8)
    });
    push("concat_rows", 20, &|g, x| {
        let a = slice_as(g, x, 0, &[2, 4])?;
        let b = slice_as(g, x, 8, &[3, 4])?;
        let y = g.concat_rows(&[a, b])?;
        readout(g, y, 9)
    });
    push("concat_cols", 15, &|g, x| {
        let a = slice_as(g, x, 0, &[3, 2])?;
        let b = slice_as(g, x, 6, &[3, 3])?;
        let y = g.concat_cols(&[a, b])?;
        readout(g, y, 10)
    });
    push("slice_rows", 20, &|g, x| {
        let a = slice_as(g, x, 0, &[5, 4])?;
        let y = g.slice_rows(a, 1, 3)?;
        readout(g, y, 11)
    });
    push("slice_cols", 20, &|g, x| {
        let a = slice_as(g, x, 0, &[4, 5])?;
        let y = g.slice_cols(a, 2, 2)?;
        readout(g, y, 12)
    });
    push("softmax", 12, &|g, x| {
        let a = slice_as(g, x, 0, &[3, 4])?;
        let y = g.softmax(a)?;
        readout(g, y, 13)
    });
    push("layer_norm", 36, &|g, x| {
        let a = slice_as(g, x, 0, &[2, 9])?;
        // keep gains away from zero so the check point is generic
        let raw_gain = slice_as(g, x, 18, &[9])?;
        let offset = g.input(Tensor::new(vec![9], vec![1.5; 9]).unwrap());
        let gain = g.add(raw_gain, offset)?;
        let bias = slice_as(g, x, 27, &[9])?;
        let y = g.layer_norm(a, gain, bias)?;
        readout(g, y, 14)
    });
    push("gelu", 12, &|g, x| {
        let a = slice_as(g, x, 0, &[3, 4])?;
        let y = g.gelu(a)?;
        readout(g, y, 15)
    });
    push("masked_mean", 12, &|g, x| {
        let a = slice_as(g, x, 0, &[3, 4])?;
        let mask: Vec<bool> = (0..12).map(|i| i % 3 != 1).collect();
        let m = g.masked_mean(a, &mask)?;
        g.scale(m, 2.5)
    });
    push("scale", 12, &|g, x| {
        let a = slice_as(g, x, 0, &[3, 4])?;
        let y = g.scale(a, -1.7)?;
        readout(g, y, 16)
    });

    items
}

/// Block kinds accepted by [`grad_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckBlock {
    /// Single linear layer x·W + b.
    Linear,
    /// Full pre-layer-norm attention block (attention + feed-forward).
    Attention,
    /// Readout that uses none of the perturbed entries.
    Constant,
}

/// Randomized finite-difference check of one block; returns the max relative
/// error over all inputs and parameters.
pub fn grad_check(block: CheckBlock, seed: u64) -> f64 {
    match block {
        CheckBlock::Linear => {
            // x [3,5] (15) + w [5,4] (20) + b [4] -> 39 entries
            run_case(39, seed, &|g, flat| {
                let x = slice_as(g, flat, 0, &[3, 5])?;
                let w = slice_as(g, flat, 15, &[5, 4])?;
                let b = slice_as(g, flat, 35, &[4])?;
                let y = g.linear(x, w, b)?;
                readout(g, y, 20)
            })
        }
        CheckBlock::Attention => {
            let d = 6usize;
            let lq = 3usize;
            let lk = 4usize;
            // x, kv, attn params (2 ln vecs + 4 d*d mats + 4 d vecs),
            // ffn params (2 ln vecs + d*4d + 4d + 4d*d + d)
            let n_attn = 2 * d + 4 * d * d + 4 * d;
            let n_ffn = 2 * d + d * 4 * d + 4 * d + 4 * d * d + d;
            let n = lq * d + lk * d + n_attn + n_ffn;
            run_case(n, seed, &|g, flat| {
                let mut off = 0;
                let mut take = |g: &mut Graph, shape: &[usize]| -> Result<NodeId> {
                    let id = slice_as(g, flat, off, shape);
                    off += shape.iter().product::<usize>();
                    id
                };
                let x = take(g, &[lq, d])?;
                let kv = take(g, &[lk, d])?;
                // offset gains away from zero for a generic check point
                let raw_g1 = take(g, &[d])?;
                let ones = g.input(Tensor::new(vec![d], vec![1.0; d]).unwrap());
                let ln_g1 = g.add(raw_g1, ones)?;
                let attn = AttnParams {
                    ln_g: ln_g1,
                    ln_b: take(g, &[d])?,
                    w_q: take(g, &[d, d])?,
                    b_q: take(g, &[d])?,
                    w_k: take(g, &[d, d])?,
                    b_k: take(g, &[d])?,
                    w_v: take(g, &[d, d])?,
                    b_v: take(g, &[d])?,
                    w_o: take(g, &[d, d])?,
                    b_o: take(g, &[d])?,
                };
                let raw_g2 = take(g, &[d])?;
                let ones2 = g.input(Tensor::new(vec![d], vec![1.0; d]).unwrap());
                let ln_g2 = g.add(raw_g2, ones2)?;
                let ffn = FfnParams {
                    ln_g: ln_g2,
                    ln_b: take(g, &[d])?,
                    w1: take(g, &[d, 4 * d])?,
                    b1: take(g, &[4 * d])?,
                    w2: take(g, &[4 * d, d])?,
                    b2: take(g, &[d])?,
                };
                let y = attention_block(g, x, Some(kv), &attn, &ffn, 2)?;
                readout(g, y, 21)
            })
        }
        CheckBlock::Constant => {
            // The scalar readout ignores the input entirely; by convention the
            // error is 0 because both the gradient and the differences vanish.
            run_case(8, seed, &|g, _flat| {
                let c = g.input(Tensor::new(vec![1, 4], vec![0.3, -0.2, 0.9, 0.5]).unwrap());
                readout(g, c, 22)
            })
        }
    }
}
