//! Composite geometric training objective: absolute, wrist-relative, and
//! pairwise-distance terms with validity masking, plus exact gradients.
//!
//! All three losses average over *eligible* terms rather than the nominal
//! frame-times-joint count, so windows with missing annotations do not get
//! diluted losses. Windows with no eligible terms at all score 0 and raise a
//! warning flag instead of failing, since heavily occluded samples must not
//! abort training.
//!
//! Shapes throughout: `pred` and `gt` are `[T][42][3]` flattened row-major,
//! `mask` is `[T][42]` with `true` for annotated joints.

use crate::error::{Error, Result};
use crate::geometry::{JOINTS_PER_HAND, NUM_JOINTS, WRIST_LEFT, WRIST_RIGHT};
use crate::nnkernel::{Graph, NodeId};

/// Weights of the three loss components. Defaults (0.6, 0.2, 0.2).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub lambda_abs: f64,
    pub lambda_rel: f64,
    pub lambda_pair: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_abs: 0.6,
            lambda_rel: 0.2,
            lambda_pair: 0.2,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_abs < 0.0 || self.lambda_rel < 0.0 || self.lambda_pair < 0.0 {
            return Err(Error::validation("loss weights must be non-negative".to_string()));
        }
        Ok(())
    }
}

/// Joint index pairs for the pairwise-distance term. Intra-hand only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSet {
    pairs: Vec<(usize, usize)>,
}

impl PairSet {
    /// All C(21,2) = 210 pairs within each hand, 420 total.
    pub fn intra_hand_full() -> Self {
        let mut pairs = Vec::with_capacity(420);
        for hand in 0..2 {
            let base = hand * JOINTS_PER_HAND;
            for i in 0..JOINTS_PER_HAND {
                for j in (i + 1)..JOINTS_PER_HAND {
                    pairs.push((base + i, base + j));
                }
            }
        }
        PairSet { pairs }
    }

    /// Custom pair list; every pair must satisfy i < j within one hand.
    pub fn custom(pairs: Vec<(usize, usize)>) -> Result<Self> {
        for &(i, j) in &pairs {
            if i >= j || j >= NUM_JOINTS {
                return Err(Error::validation(format!("invalid pair ({i}, {j})")));
            }
            if (i < JOINTS_PER_HAND) != (j < JOINTS_PER_HAND) {
                return Err(Error::validation(format!(
                    "cross-hand pair ({i}, {j}) not allowed"
                )));
            }
        }
        Ok(PairSet { pairs })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

/// Per-term loss values plus empty-term warning flags.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub abs: f64,
    pub rel: f64,
    pub pair: f64,
    pub abs_empty: bool,
    pub rel_empty: bool,
    pub pair_empty: bool,
}

fn check_shapes(pred: &[f64], gt: &[f64], mask: &[bool]) -> Result<usize> {
    if pred.len() != gt.len() || pred.len() % (NUM_JOINTS * 3) != 0 || pred.is_empty() {
        return Err(Error::validation(format!(
            "pred/gt must be [T][{NUM_JOINTS}][3] with equal lengths, got {} and {}",
            pred.len(),
            gt.len()
        )));
    }
    let t = pred.len() / (NUM_JOINTS * 3);
    if mask.len() != t * NUM_JOINTS {
        return Err(Error::validation(format!(
            "mask must be [T][{NUM_JOINTS}], got len {}",
            mask.len()
        )));
    }
    Ok(t)
}

#[inline]
fn joint(data: &[f64], t: usize, j: usize) -> [f64; 3] {
    let o = (t * NUM_JOINTS + j) * 3;
    [data[o], data[o + 1], data[o + 2]]
}

#[inline]
fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Mean over valid (frame, joint) of the 3-coordinate l1 norm of the
/// prediction error. Returns the loss and the eligible-term count.
pub fn loss_abs(pred: &[f64], gt: &[f64], mask: &[bool]) -> Result<(f64, usize)> {
    let t_len = check_shapes(pred, gt, mask)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in 0..t_len {
        for j in 0..NUM_JOINTS {
            if !mask[t * NUM_JOINTS + j] {
                continue;
            }
            let p = joint(pred, t, j);
            let q = joint(gt, t, j);
            sum += (p[0] - q[0]).abs() + (p[1] - q[1]).abs() + (p[2] - q[2]).abs();
            count += 1;
        }
    }
    Ok(if count == 0 { (0.0, 0) } else { (sum / count as f64, count) })
}

/// Wrist-relative l1 loss: for each hand and frame whose wrist is valid,
/// residuals of non-wrist joint offsets from that hand's wrist. Hands and
/// frames with an invalid wrist contribute nothing to numerator or
/// denominator; wrist self-terms are excluded (they are identically zero).
pub fn loss_rel(pred: &[f64], gt: &[f64], mask: &[bool]) -> Result<(f64, usize)> {
    let t_len = check_shapes(pred, gt, mask)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in 0..t_len {
        for &wrist in &[WRIST_LEFT, WRIST_RIGHT] {
            if !mask[t * NUM_JOINTS + wrist] {
                continue;
            }
            let pw = joint(pred, t, wrist);
            let qw = joint(gt, t, wrist);
            for j in (wrist + 1)..(wrist + JOINTS_PER_HAND) {
                if !mask[t * NUM_JOINTS + j] {
                    continue;
                }
                let p = joint(pred, t, j);
                let q = joint(gt, t, j);
                for k in 0..3 {
                    sum += ((p[k] - pw[k]) - (q[k] - qw[k])).abs();
                }
                count += 1;
            }
        }
    }
    Ok(if count == 0 { (0.0, 0) } else { (sum / count as f64, count) })
}

/// Pairwise-distance regularizer: squared difference of intra-hand joint
/// distances, averaged over frames and pairs with both joints valid.
pub fn loss_pair(pred: &[f64], gt: &[f64], mask: &[bool], pairs: &PairSet) -> Result<(f64, usize)> {
    let t_len = check_shapes(pred, gt, mask)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in 0..t_len {
        for &(i, j) in pairs.pairs() {
            if !mask[t * NUM_JOINTS + i] || !mask[t * NUM_JOINTS + j] {
                continue;
            }
            let pd = dist(joint(pred, t, i), joint(pred, t, j));
            let qd = dist(joint(gt, t, i), joint(gt, t, j));
            sum += (pd - qd) * (pd - qd);
            count += 1;
        }
    }
    Ok(if count == 0 { (0.0, 0) } else { (sum / count as f64, count) })
}

/// Weighted sum of the three losses, with per-term breakdown for logging.
pub fn loss_total(
    pred: &[f64],
    gt: &[f64],
    mask: &[bool],
    weights: &LossWeights,
    pairs: &PairSet,
) -> Result<LossBreakdown> {
    weights.validate()?;
    let (abs, n_abs) = loss_abs(pred, gt, mask)?;
    let (rel, n_rel) = loss_rel(pred, gt, mask)?;
    let (pair, n_pair) = loss_pair(pred, gt, mask, pairs)?;
    Ok(LossBreakdown {
        total: weights.lambda_abs * abs + weights.lambda_rel * rel + weights.lambda_pair * pair,
        abs,
        rel,
        pair,
        abs_empty: n_abs == 0,
        rel_empty: n_rel == 0,
        pair_empty: n_pair == 0,
    })
}

/// sign with the l1 subgradient at 0 defined as 0.
#[inline]
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Exact (sub)gradient of [`loss_total`] with respect to `pred`, laid out
/// like `pred`. Entries at masked joints are exactly zero.
pub fn loss_gradient(
    pred: &[f64],
    gt: &[f64],
    mask: &[bool],
    weights: &LossWeights,
    pairs: &PairSet,
) -> Result<Vec<f64>> {
    weights.validate()?;
    let t_len = check_shapes(pred, gt, mask)?;
    let mut grad = vec![0.0; pred.len()];

    // absolute term
    let n_abs = mask.iter().filter(|&&m| m).count();
    if n_abs > 0 && weights.lambda_abs != 0.0 {
        let w = weights.lambda_abs / n_abs as f64;
        for (tj, &m) in mask.iter().enumerate() {
            if !m {
                continue;
            }
            let o = tj * 3;
            for k in 0..3 {
                grad[o + k] += w * sgn(pred[o + k] - gt[o + k]);
            }
        }
    }

    // wrist-relative term
    let mut n_rel = 0usize;
    for t in 0..t_len {
        for &wrist in &[WRIST_LEFT, WRIST_RIGHT] {
            if !mask[t * NUM_JOINTS + wrist] {
                continue;
            }
            n_rel += ((wrist + 1)..(wrist + JOINTS_PER_HAND))
                .filter(|&j| mask[t * NUM_JOINTS + j])
                .count();
        }
    }
    if n_rel > 0 && weights.lambda_rel != 0.0 {
        let w = weights.lambda_rel / n_rel as f64;
        for t in 0..t_len {
            for &wrist in &[WRIST_LEFT, WRIST_RIGHT] {
                if !mask[t * NUM_JOINTS + wrist] {
                    continue;
                }
                let ow = (t * NUM_JOINTS + wrist) * 3;
                for j in (wrist + 1)..(wrist + JOINTS_PER_HAND) {
                    if !mask[t * NUM_JOINTS + j] {
                        continue;
                    }
                    let oj = (t * NUM_JOINTS + j) * 3;
                    for k in 0..3 {
                        let r = (pred[oj + k] - pred[ow + k]) - (gt[oj + k] - gt[ow + k]);
                        let s = w * sgn(r);
                        grad[oj + k] += s;
                        grad[ow + k] -= s;
                    }
                }
            }
        }
    }

    // pairwise-distance term
    let mut n_pair = 0usize;
    for t in 0..t_len {
        for &(i, j) in pairs.pairs() {
            if mask[t * NUM_JOINTS + i] && mask[t * NUM_JOINTS + j] {
                n_pair += 1;
            }
        }
    }
    if n_pair > 0 && weights.lambda_pair != 0.0 {
        let w = weights.lambda_pair / n_pair as f64;
        for t in 0..t_len {
            for &(i, j) in pairs.pairs() {
                if !mask[t * NUM_JOINTS + i] || !mask[t * NUM_JOINTS + j] {
                    continue;
                }
                let oi = (t * NUM_JOINTS + i) * 3;
                let oj = (t * NUM_JOINTS + j) * 3;
                let p = [
                    pred[oi] - pred[oj],
                    pred[oi + 1] - pred[oj + 1],
                    pred[oi + 2] - pred[oj + 2],
                ];
                let pd = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                let qd = dist(joint(gt, t, i), joint(gt, t, j));
                if pd == 0.0 {
                    // direction subgradient at coincident joints defined as 0
                    continue;
                }
                let c = w * 2.0 * (pd - qd) / pd;
                for k in 0..3 {
                    grad[oi + k] += c * p[k];
                    grad[oj + k] -= c * p[k];
                }
            }
        }
    }

    Ok(grad)
}

/// Attach the composite loss to a tape: reads the prediction node's forward
/// value, computes the loss and its analytic gradient, and records them as a
/// scalar node so reverse mode propagates the exact gradient.
pub fn attach_loss(
    g: &mut Graph,
    pred: NodeId,
    gt: &[f64],
    mask: &[bool],
    weights: &LossWeights,
    pairs: &PairSet,
) -> Result<(NodeId, LossBreakdown)> {
    let pred_vals = g.value(pred).data().to_vec();
    let breakdown = loss_total(&pred_vals, gt, mask, weights, pairs)?;
    let grad = loss_gradient(&pred_vals, gt, mask, weights, pairs)?;
    let node = g.custom_scalar(pred, breakdown.total, grad)?;
    Ok((node, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkernel::gradcheck::fd_max_rel_error;
    use crate::nnkernel::Prng;

    fn random_case(prng: &mut Prng, t: usize, mask_rate: f64) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
        let n = t * NUM_JOINTS * 3;
        let gt: Vec<f64> = (0..n).map(|_| prng.uniform_in(-0.5, 0.5)).collect();
        let pred: Vec<f64> = gt.iter().map(|v| v + prng.uniform_in(0.05, 0.3)).collect();
        let mask: Vec<bool> = (0..t * NUM_JOINTS).map(|_| prng.next_f64() > mask_rate).collect();
        (pred, gt, mask)
    }

    #[test]
    fn zero_at_perfect_prediction() {
        let mut prng = Prng::new(1);
        let (_, gt, mask) = random_case(&mut prng, 3, 0.2);
        let pairs = PairSet::intra_hand_full();
        let b = loss_total(&gt, &gt, &mask, &LossWeights::default(), &pairs).unwrap();
        assert_eq!(b.total, 0.0);
        assert_eq!((b.abs, b.rel, b.pair), (0.0, 0.0, 0.0));
    }

    #[test]
    fn abs_constant_offset() {
        let t = 2;
        let gt = vec![0.25; t * NUM_JOINTS * 3];
        let mut pred = gt.clone();
        for chunk in pred.chunks_mut(3) {
            chunk[0] += 0.1;
        }
        let mask = vec![true; t * NUM_JOINTS];
        let (l, n) = loss_abs(&pred, &gt, &mask).unwrap();
        assert!((l - 0.1).abs() < 1e-12);
        assert_eq!(n, t * NUM_JOINTS);
    }

    #[test]
    fn rel_invariant_to_per_frame_translation() {
        let mut prng = Prng::new(2);
        let (_, gt, mask) = random_case(&mut prng, 4, 0.3);
        let mut pred = gt.clone();
        for t in 0..4 {
            let shift = [prng.uniform_in(-1.0, 1.0), 0.3, -0.2];
            for j in 0..NUM_JOINTS {
                let o = (t * NUM_JOINTS + j) * 3;
                for k in 0..3 {
                    pred[o + k] += shift[k];
                }
            }
        }
        let (l, _) = loss_rel(&pred, &gt, &mask).unwrap();
        assert!(l.abs() < 1e-12, "{l}");
    }

    #[test]
    fn rel_single_offset_joint() {
        // single frame, exact wrist, one finger joint offset by (0, 0.2, 0)
        let gt = vec![0.0; NUM_JOINTS * 3];
        let mut pred = gt.clone();
        pred[(5 * 3) + 1] = 0.2; // joint 5, y axis
        let mut mask = vec![false; NUM_JOINTS];
        mask[WRIST_LEFT] = true;
        mask[5] = true;
        let (l, n) = loss_rel(&pred, &gt, &mask).unwrap();
        assert_eq!(n, 1);
        assert!((l - 0.2).abs() < 1e-12);
    }

    #[test]
    fn rel_skips_frames_with_invalid_wrist() {
        let mut prng = Prng::new(3);
        let (pred, gt, mut mask) = random_case(&mut prng, 2, 0.0);
        // invalidate the left wrist in frame 0: left-hand joints of frame 0
        // must contribute nothing
        mask[WRIST_LEFT] = false;
        let (l_masked, n_masked) = loss_rel(&pred, &gt, &mask).unwrap();
        let mut pred2 = pred.clone();
        for j in 1..JOINTS_PER_HAND {
            pred2[j * 3] += 100.0;
        }
        let (l2, n2) = loss_rel(&pred2, &gt, &mask).unwrap();
        assert_eq!(l_masked.to_bits(), l2.to_bits());
        assert_eq!(n_masked, n2);
    }

    #[test]
    fn pair_invariant_to_rigid_motion() {
        use crate::geometry::{m_mul_v, rotation_about_axis};
        let mut prng = Prng::new(4);
        let (_, gt, mask) = random_case(&mut prng, 3, 0.2);
        let rot = rotation_about_axis([0.0, 0.0, 1.0], 0.83);
        let shift = [0.5, -0.25, 0.1];
        let mut pred = vec![0.0; gt.len()];
        for (i, chunk) in gt.chunks(3).enumerate() {
            let r = m_mul_v(&rot, [chunk[0], chunk[1], chunk[2]]);
            for k in 0..3 {
                pred[i * 3 + k] = r[k] + shift[k];
            }
        }
        let pairs = PairSet::intra_hand_full();
        let (l, _) = loss_pair(&pred, &gt, &mask, &pairs).unwrap();
        assert!(l.abs() < 1e-12, "{l}");
    }

    #[test]
    fn pair_single_pair_arithmetic() {
        // two-joint fragment: gt distance 1.0, pred distance 1.1
        let mut gt = vec![0.0; NUM_JOINTS * 3];
        gt[3] = 1.0; // joint 1 at x = 1
        let mut pred = gt.clone();
        pred[3] = 1.1;
        let mut mask = vec![false; NUM_JOINTS];
        mask[0] = true;
        mask[1] = true;
        let pairs = PairSet::intra_hand_full();
        let (l, n) = loss_pair(&pred, &gt, &mask, &pairs).unwrap();
        assert_eq!(n, 1);
        assert!((l - 0.01).abs() < 1e-12, "{l}");
    }

    #[test]
    fn total_projects_to_abs_with_unit_weight() {
        let mut prng = Prng::new(5);
        let (pred, gt, mask) = random_case(&mut prng, 2, 0.2);
        let pairs = PairSet::intra_hand_full();
        let w = LossWeights {
            lambda_abs: 1.0,
            lambda_rel: 0.0,
            lambda_pair: 0.0,
        };
        let b = loss_total(&pred, &gt, &mask, &w, &pairs).unwrap();
        let (abs, _) = loss_abs(&pred, &gt, &mask).unwrap();
        assert_eq!(b.total.to_bits(), abs.to_bits());
    }

    #[test]
    fn total_recomposes_from_parts() {
        let mut prng = Prng::new(6);
        let (pred, gt, mask) = random_case(&mut prng, 3, 0.25);
        let pairs = PairSet::intra_hand_full();
        let w = LossWeights::default();
        let b = loss_total(&pred, &gt, &mask, &w, &pairs).unwrap();
        let expect = 0.6 * b.abs + 0.2 * b.rel + 0.2 * b.pair;
        assert!((b.total - expect).abs() < 1e-15);
    }

    #[test]
    fn masked_joints_do_not_affect_losses_or_gradient() {
        let mut prng = Prng::new(7);
        let (pred, gt, mask) = random_case(&mut prng, 3, 0.4);
        let pairs = PairSet::intra_hand_full();
        let w = LossWeights::default();
        let b1 = loss_total(&pred, &gt, &mask, &w, &pairs).unwrap();
        let g1 = loss_gradient(&pred, &gt, &mask, &w, &pairs).unwrap();
        let mut pred2 = pred.clone();
        for (tj, &m) in mask.iter().enumerate() {
            if !m {
                for k in 0..3 {
                    pred2[tj * 3 + k] = prng.uniform_in(-100.0, 100.0);
                }
            }
        }
        let b2 = loss_total(&pred2, &gt, &mask, &w, &pairs).unwrap();
        let g2 = loss_gradient(&pred2, &gt, &mask, &w, &pairs).unwrap();
        assert_eq!(b1.total.to_bits(), b2.total.to_bits());
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (tj, &m) in mask.iter().enumerate() {
            if !m {
                for k in 0..3 {
                    assert_eq!(g1[tj * 3 + k], 0.0);
                }
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut prng = Prng::new(8);
        // offsets of at least 0.05 per coordinate keep the l1 terms away
        // from their kinks at the probe step of 1e-5
        let (pred, gt, mask) = random_case(&mut prng, 2, 0.2);
        let pairs = PairSet::intra_hand_full();
        let w = LossWeights::default();
        let analytic = loss_gradient(&pred, &gt, &mask, &w, &pairs).unwrap();
        let mut eval = |xs: &[f64]| loss_total(xs, &gt, &mask, &w, &pairs).unwrap().total;
        let err = fd_max_rel_error(&mut eval, &pred, &analytic, 1e-5);
        assert!(err < 1e-4, "max rel error {err}");
    }

    #[test]
    fn pair_gradient_zero_at_ground_truth() {
        let mut prng = Prng::new(9);
        let (_, gt, mask) = random_case(&mut prng, 2, 0.0);
        let pairs = PairSet::intra_hand_full();
        let w = LossWeights {
            lambda_abs: 0.0,
            lambda_rel: 0.0,
            lambda_pair: 1.0,
        };
        let g = loss_gradient(&gt, &gt, &mask, &w, &pairs).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scaling_law() {
        let mut prng = Prng::new(10);
        let (pred, gt, mask) = random_case(&mut prng, 3, 0.2);
        let pairs = PairSet::intra_hand_full();
        let s = 2.7;
        let preds: Vec<f64> = pred.iter().map(|v| v * s).collect();
        let gts: Vec<f64> = gt.iter().map(|v| v * s).collect();
        let (a1, _) = loss_abs(&pred, &gt, &mask).unwrap();
        let (a2, _) = loss_abs(&preds, &gts, &mask).unwrap();
        assert!((a2 - s * a1).abs() < 1e-9);
        let (r1, _) = loss_rel(&pred, &gt, &mask).unwrap();
        let (r2, _) = loss_rel(&preds, &gts, &mask).unwrap();
        assert!((r2 - s * r1).abs() < 1e-9);
        let (p1, _) = loss_pair(&pred, &gt, &mask, &pairs).unwrap();
        let (p2, _) = loss_pair(&preds, &gts, &mask, &pairs).unwrap();
        assert!((p2 - s * s * p1).abs() < 1e-9);
    }

    #[test]
    fn empty_terms_flag_instead_of_failing() {
        let gt = vec![0.0; NUM_JOINTS * 3];
        let pred = vec![1.0; NUM_JOINTS * 3];
        let mask = vec![false; NUM_JOINTS];
        let pairs = PairSet::intra_hand_full();
        let b = loss_total(&pred, &gt, &mask, &LossWeights::default(), &pairs).unwrap();
        assert_eq!(b.total, 0.0);
        assert!(b.abs_empty && b.rel_empty && b.pair_empty);
    }

    #[test]
    fn pair_set_shape() {
        let pairs = PairSet::intra_hand_full();
        assert_eq!(pairs.pairs().len(), 420);
        assert!(pairs.pairs().iter().all(|&(i, j)| i < j));
        assert!(PairSet::custom(vec![(0, 21)]).is_err());
        assert!(PairSet::custom(vec![(3, 2)]).is_err());
        assert!(PairSet::custom(vec![(2, 3), (25, 30)]).is_ok());
    }

    #[test]
    fn attach_loss_reverse_mode_equals_analytic_gradient() {
        use crate::nnkernel::Tensor;
        let mut prng = Prng::new(11);
        let (pred, gt, mask) = random_case(&mut prng, 2, 0.2);
        let pairs = PairSet::intra_hand_full();
        let w = LossWeights::default();
        let analytic = loss_gradient(&pred, &gt, &mask, &w, &pairs).unwrap();

        let mut g = Graph::new();
        let p = g.input(Tensor::new(vec![2, NUM_JOINTS * 3], pred.clone()).unwrap());
        let (node, _) = attach_loss(&mut g, p, &gt, &mask, &w, &pairs).unwrap();
        g.backward(node).unwrap();
        assert_eq!(g.grad(p), analytic.as_slice());
    }
}
