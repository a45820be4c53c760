//! Evaluation metrics: wrist-trajectory ADE/FDE, wrist-relative MPJPE and its
//! final-frame variant, egomotion stratification, and report aggregation.
//!
//! Pooled means are micro-averages over valid terms by default: each eligible
//! (frame, joint) term carries equal weight regardless of which sample it
//! came from. Macro averaging (equal weight per sample) is available as a
//! config flag and echoed in the report.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{JOINTS_PER_HAND, NUM_JOINTS, WRIST_LEFT, WRIST_RIGHT};

/// Term sums and counts for one evaluated sample. Sums, not means, so that
/// micro-averaged pooling is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMetrics {
    pub sample_id: String,
    pub ade_sum: f64,
    pub ade_terms: u64,
    pub fde_sum: f64,
    pub fde_terms: u64,
    pub mpjpe_sum: f64,
    pub mpjpe_terms: u64,
    pub mpjpe_f_sum: f64,
    pub mpjpe_f_terms: u64,
    pub egomotion: f64,
}

/// Wrist displacement errors. `pred`/`gt` are [T][42][3] flattened; `mask`
/// is [T][42] and marks terms eligible for evaluation.
///
/// ADE averages the Euclidean wrist error over every valid wrist-frame of
/// both wrists; FDE restricts to the final frame. Returns
/// (ade, fde, ade_terms, fde_terms) with absent metrics as `None` when no
/// term is eligible.
pub fn trajectory_errors(
    pred: &[f64],
    gt: &[f64],
    mask: &[bool],
) -> Result<(Option<f64>, Option<f64>, u64, u64)> {
    let t_len = check_shapes(pred, gt, mask)?;
    let mut ade_sum = 0.0;
    let mut ade_terms = 0u64;
    let mut fde_sum = 0.0;
    let mut fde_terms = 0u64;
    for t in 0..t_len {
        for &wrist in &[WRIST_LEFT, WRIST_RIGHT] {
            if !mask[t * NUM_JOINTS + wrist] {
                continue;
            }
            let d = euclid(pred, gt, t, wrist);
            ade_sum += d;
            ade_terms += 1;
            if t == t_len - 1 {
                fde_sum += d;
                fde_terms += 1;
            }
        }
    }
    let ade = (ade_terms > 0).then(|| ade_sum / ade_terms as f64);
    let fde = (fde_terms > 0).then(|| fde_sum / fde_terms as f64);
    Ok((ade, fde, ade_terms, fde_terms))
}

/// Wrist-relative pose errors. For each hand and frame with a valid wrist,
/// every valid non-wrist joint contributes the Euclidean norm of its
/// wrist-relative residual. MPJPE pools all eligible terms; MPJPE-F is the
/// final-frame restriction. Wrist joints are excluded from the numerator
/// (their wrist-relative error is identically zero).
pub fn pose_errors(
    pred: &[f64],
    gt: &[f64],
    mask: &[bool],
) -> Result<(Option<f64>, Option<f64>, u64, u64)> {
    let t_len = check_shapes(pred, gt, mask)?;
    let mut sum = 0.0;
    let mut terms = 0u64;
    let mut f_sum = 0.0;
    let mut f_terms = 0u64;
    for t in 0..t_len {
        for &wrist in &[WRIST_LEFT, WRIST_RIGHT] {
            if !mask[t * NUM_JOINTS + wrist] {
                continue;
            }
            for j in (wrist + 1)..(wrist + JOINTS_PER_HAND) {
                if !mask[t * NUM_JOINTS + j] {
                    continue;
                }
                let e = wrist_relative_residual(pred, gt, t, j, wrist);
                sum += e;
                terms += 1;
                if t == t_len - 1 {
                    f_sum += e;
                    f_terms += 1;
                }
            }
        }
    }
    let mpjpe = (terms > 0).then(|| sum / terms as f64);
    let mpjpe_f = (f_terms > 0).then(|| f_sum / f_terms as f64);
    Ok((mpjpe, mpjpe_f, terms, f_terms))
}

fn check_shapes(pred: &[f64], gt: &[f64], mask: &[bool]) -> Result<usize> {
    if pred.len() != gt.len() || pred.len() % (NUM_JOINTS * 3) != 0 || pred.is_empty() {
        return Err(Error::validation(format!(
            "pred/gt must be [T][{NUM_JOINTS}][3], got lengths {} and {}",
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
fn euclid(pred: &[f64], gt: &[f64], t: usize, j: usize) -> f64 {
    let o = (t * NUM_JOINTS + j) * 3;
    let dx = pred[o] - gt[o];
    let dy = pred[o + 1] - gt[o + 1];
    let dz = pred[o + 2] - gt[o + 2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

#[inline]
fn wrist_relative_residual(pred: &[f64], gt: &[f64], t: usize, j: usize, wrist: usize) -> f64 {
    let oj = (t * NUM_JOINTS + j) * 3;
    let ow = (t * NUM_JOINTS + wrist) * 3;
    let mut s = 0.0;
    for k in 0..3 {
        let r = (pred[oj + k] - pred[ow + k]) - (gt[oj + k] - gt[ow + k]);
        s += r * r;
    }
    s.sqrt()
}

/// Compute all four metrics for one sample.
pub fn sample_metrics(
    sample_id: String,
    pred: &[f64],
    gt: &[f64],
    mask: &[bool],
    egomotion: f64,
) -> Result<SampleMetrics> {
    let (ade, fde, ade_terms, fde_terms) = trajectory_errors(pred, gt, mask)?;
    let (mpjpe, mpjpe_f, mpjpe_terms, mpjpe_f_terms) = pose_errors(pred, gt, mask)?;
    Ok(SampleMetrics {
        sample_id,
        ade_sum: ade.map_or(0.0, |v| v * ade_terms as f64),
        ade_terms,
        fde_sum: fde.map_or(0.0, |v| v * fde_terms as f64),
        fde_terms,
        mpjpe_sum: mpjpe.map_or(0.0, |v| v * mpjpe_terms as f64),
        mpjpe_terms,
        mpjpe_f_sum: mpjpe_f.map_or(0.0, |v| v * mpjpe_f_terms as f64),
        mpjpe_f_terms,
        egomotion,
    })
}

/// Select the ceil(fraction * N) highest-scoring ids. Ties break by
/// ascending id so the selection is deterministic.
pub fn stratify_top_fraction(scores: &BTreeMap<String, f64>, fraction: f64) -> Result<Vec<String>> {
    if scores.is_empty() {
        return Err(Error::validation("stratify: no scores given".to_string()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::validation(format!(
            "stratify: fraction must be in (0, 1], got {fraction}"
        )));
    }
    let k = ((fraction * scores.len() as f64).ceil() as usize).max(1);
    let mut items: Vec<(&String, f64)> = scores.iter().map(|(id, &s)| (id, s)).collect();
    // descending score; BTreeMap iteration yields ascending ids and the sort
    // is stable, so ties resolve to the lexicographically smallest ids
    items.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    Ok(items.into_iter().take(k).map(|(id, _)| id.clone()).collect())
}

/// Averaging semantics for pooled metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Every eligible term weighs equally (default).
    Micro,
    /// Every sample weighs equally; samples without eligible terms are
    /// skipped per metric.
    Macro,
}

/// Settings echo embedded in every report.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReportConfig {
    pub predictor: String,
    pub split: String,
    pub ablation: String,
    pub strata_fraction: Option<f64>,
    pub seed: u64,
    pub averaging: Averaging,
    pub canonical_mode: String,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            predictor: String::new(),
            split: String::new(),
            ablation: "none".to_string(),
            strata_fraction: None,
            seed: 0,
            averaging: Averaging::Micro,
            canonical_mode: "yaw_only".to_string(),
        }
    }
}

/// Metric bundle. Serialized as JSON with these exact field names.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Report {
    pub report_version: u32,
    pub ade: Option<f64>,
    pub fde: Option<f64>,
    pub mpjpe: Option<f64>,
    pub mpjpe_f: Option<f64>,
    pub n_samples: u64,
    pub n_valid_wrist_frames: u64,
    pub n_valid_joint_frames: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strata: Option<BTreeMap<String, Report>>,
    pub config: ReportConfig,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}

fn pool(samples: &[&SampleMetrics], averaging: Averaging, config: ReportConfig) -> Report {
    let mut r = Report {
        report_version: 1,
        ade: None,
        fde: None,
        mpjpe: None,
        mpjpe_f: None,
        n_samples: samples.len() as u64,
        n_valid_wrist_frames: samples.iter().map(|s| s.ade_terms).sum(),
        n_valid_joint_frames: samples.iter().map(|s| s.mpjpe_terms).sum(),
        strata: None,
        config,
    };
    match averaging {
        Averaging::Micro => {
            let micro = |sum: f64, terms: u64| (terms > 0).then(|| sum / terms as f64);
            let fold = |f: &dyn Fn(&SampleMetrics) -> (f64, u64)| {
                samples
                    .iter()
                    .fold((0.0, 0u64), |a, s| {
                        let (v, n) = f(s);
                        (a.0 + v, a.1 + n)
                    })
            };
            let (s, n) = fold(&|s| (s.ade_sum, s.ade_terms));
            r.ade = micro(s, n);
            let (s, n) = fold(&|s| (s.fde_sum, s.fde_terms));
            r.fde = micro(s, n);
            let (s, n) = fold(&|s| (s.mpjpe_sum, s.mpjpe_terms));
            r.mpjpe = micro(s, n);
            let (s, n) = fold(&|s| (s.mpjpe_f_sum, s.mpjpe_f_terms));
            r.mpjpe_f = micro(s, n);
        }
        Averaging::Macro => {
            let per_sample = |f: &dyn Fn(&SampleMetrics) -> (f64, u64)| {
                let means: Vec<f64> = samples
                    .iter()
                    .map(|s| f(s))
                    .filter(|&(_, n)| n > 0)
                    .map(|(s, n)| s / n as f64)
                    .collect();
                (!means.is_empty()).then(|| means.iter().sum::<f64>() / means.len() as f64)
            };
            r.ade = per_sample(&|s| (s.ade_sum, s.ade_terms));
            r.fde = per_sample(&|s| (s.fde_sum, s.fde_terms));
            r.mpjpe = per_sample(&|s| (s.mpjpe_sum, s.mpjpe_terms));
            r.mpjpe_f = per_sample(&|s| (s.mpjpe_f_sum, s.mpjpe_f_terms));
        }
    }
    r
}

/// Aggregate per-sample metrics into a report, optionally with an egomotion
/// top-fraction stratification ("top" and "all" strata).
pub fn aggregate_report(
    samples: &[SampleMetrics],
    strata_fraction: Option<f64>,
    averaging: Averaging,
    config: ReportConfig,
) -> Result<Report> {
    let mut ordered: Vec<&SampleMetrics> = samples.iter().collect();
    ordered.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let mut report = pool(&ordered, averaging, config.clone());

    if let Some(fraction) = strata_fraction {
        let scores: BTreeMap<String, f64> = ordered
            .iter()
            .map(|s| (s.sample_id.clone(), s.egomotion))
            .collect();
        let top_ids = stratify_top_fraction(&scores, fraction)?;
        let top_set: std::collections::BTreeSet<&String> = top_ids.iter().collect();
        let top_members: Vec<&SampleMetrics> = ordered
            .iter()
            .copied()
            .filter(|s| top_set.contains(&s.sample_id))
            .collect();
        let mut strata = BTreeMap::new();
        strata.insert("top".to_string(), pool(&top_members, averaging, config.clone()));
        strata.insert("all".to_string(), pool(&ordered, averaging, config.clone()));
        report.strata = Some(strata);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkernel::Prng;

    fn random_case(prng: &mut Prng, t: usize) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
        let n = t * NUM_JOINTS * 3;
        let gt: Vec<f64> = (0..n).map(|_| prng.uniform_in(-0.5, 0.5)).collect();
        let pred: Vec<f64> = gt.iter().map(|v| v + prng.uniform_in(-0.2, 0.2)).collect();
        let mask: Vec<bool> = (0..t * NUM_JOINTS).map(|_| prng.next_f64() > 0.3).collect();
        (pred, gt, mask)
    }

    /// Naive double-loop oracle, independent of the implementation path.
    fn oracle(
        pred: &[f64],
        gt: &[f64],
        mask: &[bool],
        t_len: usize,
    ) -> (Option<f64>, Option<f64>, Option<f64>, Option<f64>) {
        let at = |d: &[f64], t: usize, j: usize, k: usize| d[t * NUM_JOINTS * 3 + j * 3 + k];
        let mut ade = Vec::new();
        let mut fde = Vec::new();
        let mut mp = Vec::new();
        let mut mpf = Vec::new();
        for t in 0..t_len {
            for hand in 0..2 {
                let w = hand * JOINTS_PER_HAND;
                if !mask[t * NUM_JOINTS + w] {
                    continue;
                }
                let mut d2 = 0.0;
                for k in 0..3 {
                    let d = at(pred, t, w, k) - at(gt, t, w, k);
                    d2 += d * d;
                }
                ade.push(d2.sqrt());
                if t == t_len - 1 {
                    fde.push(d2.sqrt());
                }
                for j in (w + 1)..(w + JOINTS_PER_HAND) {
                    if !mask[t * NUM_JOINTS + j] {
                        continue;
                    }
                    let mut e2 = 0.0;
                    for k in 0..3 {
                        let r = (at(pred, t, j, k) - at(pred, t, w, k))
                            - (at(gt, t, j, k) - at(gt, t, w, k));
                        e2 += r * r;
                    }
                    mp.push(e2.sqrt());
                    if t == t_len - 1 {
                        mpf.push(e2.sqrt());
                    }
                }
            }
        }
        let mean = |v: &Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        (mean(&ade), mean(&fde), mean(&mp), mean(&mpf))
    }

    #[test]
    fn perfect_prediction_scores_zero() {
        let mut prng = Prng::new(1);
        let (_, gt, mask) = random_case(&mut prng, 4);
        let (ade, fde, _, _) = trajectory_errors(&gt, &gt, &mask).unwrap();
        assert_eq!(ade, Some(0.0));
        assert_eq!(fde, Some(0.0));
    }

    #[test]
    fn four_term_hand_computation() {
        // T = 2, left wrist displacements {0, 1}, right wrist {0, 0}
        let t = 2;
        let gt = vec![0.0; t * NUM_JOINTS * 3];
        let mut pred = gt.clone();
        pred[(NUM_JOINTS + WRIST_LEFT) * 3] = 1.0; // frame 1, left wrist, x
        let mask = vec![true; t * NUM_JOINTS];
        let (ade, fde, a_terms, f_terms) = trajectory_errors(&pred, &gt, &mask).unwrap();
        assert_eq!(ade, Some(0.25));
        assert_eq!(fde, Some(0.5));
        assert_eq!((a_terms, f_terms), (4, 2));
    }

    #[test]
    fn fde_skips_wrists_invalid_at_final_frame() {
        let t = 2;
        let gt = vec![0.0; t * NUM_JOINTS * 3];
        let mut pred = gt.clone();
        pred[(NUM_JOINTS + WRIST_LEFT) * 3] = 0.3;
        pred[(NUM_JOINTS + WRIST_RIGHT) * 3] = 9.9; // must be ignored
        let mut mask = vec![true; t * NUM_JOINTS];
        mask[NUM_JOINTS + WRIST_RIGHT] = false;
        let (_, fde, _, f_terms) = trajectory_errors(&pred, &gt, &mask).unwrap();
        assert_eq!(f_terms, 1);
        assert!((fde.unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn pose_errors_invariant_to_per_frame_translation() {
        let mut prng = Prng::new(2);
        let (_, gt, mask) = random_case(&mut prng, 3);
        let mut pred = gt.clone();
        for t in 0..3 {
            let shift = [0.5 * t as f64, -0.2, 0.7];
            for j in 0..NUM_JOINTS {
                for k in 0..3 {
                    pred[(t * NUM_JOINTS + j) * 3 + k] += shift[k];
                }
            }
        }
        let (mpjpe, mpjpe_f, _, _) = pose_errors(&pred, &gt, &mask).unwrap();
        assert!(mpjpe.unwrap() < 1e-12);
        assert!(mpjpe_f.unwrap() < 1e-12);
    }

    #[test]
    fn single_offset_joint_contribution() {
        let gt = vec![0.0; NUM_JOINTS * 3];
        let mut pred = gt.clone();
        pred[7 * 3 + 2] = 0.05;
        let mut mask = vec![false; NUM_JOINTS];
        mask[WRIST_LEFT] = true;
        mask[7] = true;
        let (mpjpe, _, terms, _) = pose_errors(&pred, &gt, &mask).unwrap();
        assert_eq!(terms, 1);
        assert!((mpjpe.unwrap() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn all_non_wrist_joints_invalid_yields_absent_metric() {
        let gt = vec![0.0; NUM_JOINTS * 3];
        let mut mask = vec![false; NUM_JOINTS];
        mask[WRIST_LEFT] = true;
        mask[WRIST_RIGHT] = true;
        let (mpjpe, mpjpe_f, terms, f_terms) = pose_errors(&gt, &gt, &mask).unwrap();
        assert_eq!(mpjpe, None);
        assert_eq!(mpjpe_f, None);
        assert_eq!((terms, f_terms), (0, 0));
    }

    #[test]
    fn matches_double_loop_oracle() {
        let mut prng = Prng::new(3);
        for trial in 0..100 {
            let t = 1 + (trial % 10);
            let (pred, gt, mask) = random_case(&mut prng, t);
            let (ade, fde, _, _) = trajectory_errors(&pred, &gt, &mask).unwrap();
            let (mp, mpf, _, _) = pose_errors(&pred, &gt, &mask).unwrap();
            let (o_ade, o_fde, o_mp, o_mpf) = oracle(&pred, &gt, &mask, t);
            let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(x), Some(y)) => (x - y).abs() < 1e-9,
                (None, None) => true,
                _ => false,
            };
            assert!(close(ade, o_ade), "ade trial {trial}");
            assert!(close(fde, o_fde), "fde trial {trial}");
            assert!(close(mp, o_mp), "mpjpe trial {trial}");
            assert!(close(mpf, o_mpf), "mpjpe_f trial {trial}");
        }
    }

    #[test]
    fn single_frame_ade_equals_fde() {
        let mut prng = Prng::new(4);
        let (pred, gt, mask) = random_case(&mut prng, 1);
        let (ade, fde, _, _) = trajectory_errors(&pred, &gt, &mask).unwrap();
        assert_eq!(ade, fde);
    }

    #[test]
    fn metrics_ignore_invalid_joints_bitwise() {
        let mut prng = Prng::new(5);
        let (pred, gt, mask) = random_case(&mut prng, 3);
        let (a1, f1, _, _) = trajectory_errors(&pred, &gt, &mask).unwrap();
        let (m1, mf1, _, _) = pose_errors(&pred, &gt, &mask).unwrap();
        let mut pred2 = pred.clone();
        for (tj, &m) in mask.iter().enumerate() {
            if !m {
                for k in 0..3 {
                    pred2[tj * 3 + k] = 1e6;
                }
            }
        }
        let (a2, f2, _, _) = trajectory_errors(&pred2, &gt, &mask).unwrap();
        let (m2, mf2, _, _) = pose_errors(&pred2, &gt, &mask).unwrap();
        assert_eq!(a1.map(f64::to_bits), a2.map(f64::to_bits));
        assert_eq!(f1.map(f64::to_bits), f2.map(f64::to_bits));
        assert_eq!(m1.map(f64::to_bits), m2.map(f64::to_bits));
        assert_eq!(mf1.map(f64::to_bits), mf2.map(f64::to_bits));
    }

    #[test]
    fn stratify_selects_single_highest() {
        let scores: BTreeMap<String, f64> = (0..10).map(|i| (format!("s{i}"), i as f64)).collect();
        let top = stratify_top_fraction(&scores, 0.1).unwrap();
        assert_eq!(top, vec!["s9".to_string()]);
    }

    #[test]
    fn stratify_breaks_ties_by_ascending_id() {
        let scores: BTreeMap<String, f64> = (0..10).map(|i| (format!("s{i}"), 1.0)).collect();
        let top = stratify_top_fraction(&scores, 0.2).unwrap();
        assert_eq!(top, vec!["s0".to_string(), "s1".to_string()]);
    }

    #[test]
    fn stratify_matches_bruteforce_sort_oracle() {
        let mut prng = Prng::new(6);
        for _ in 0..50 {
            let n = 1 + prng.next_index(40);
            let scores: BTreeMap<String, f64> = (0..n)
                .map(|i| (format!("s{i:03}"), prng.next_index(5) as f64))
                .collect();
            let fraction = 0.05 + 0.9 * prng.next_f64();
            let got = stratify_top_fraction(&scores, fraction).unwrap();
            // brute-force oracle: repeatedly extract the best (score, then id)
            let k = ((fraction * n as f64).ceil() as usize).max(1);
            let mut remaining: Vec<(String, f64)> =
                scores.iter().map(|(a, &b)| (a.clone(), b)).collect();
            let mut expect = Vec::new();
            for _ in 0..k {
                let mut best = 0;
                for i in 1..remaining.len() {
                    let better = remaining[i].1 > remaining[best].1
                        || (remaining[i].1 == remaining[best].1
                            && remaining[i].0 < remaining[best].0);
                    if better {
                        best = i;
                    }
                }
                expect.push(remaining.remove(best).0);
            }
            assert_eq!(got, expect);
        }
    }

    fn sm(id: &str, err: f64, terms: u64, ego: f64) -> SampleMetrics {
        SampleMetrics {
            sample_id: id.to_string(),
            ade_sum: err * terms as f64,
            ade_terms: terms,
            fde_sum: err,
            fde_terms: 1,
            mpjpe_sum: err * terms as f64,
            mpjpe_terms: terms,
            mpjpe_f_sum: err,
            mpjpe_f_terms: 1,
            egomotion: ego,
        }
    }

    #[test]
    fn single_sample_report_echoes_sample() {
        let s = sm("a", 0.25, 4, 1.0);
        let r = aggregate_report(&[s], None, Averaging::Micro, ReportConfig::default()).unwrap();
        assert_eq!(r.ade, Some(0.25));
        assert_eq!(r.n_samples, 1);
    }

    #[test]
    fn weighted_mean_arithmetic() {
        // counts (1, 3) with per-term errors 0.1 and 0.2 -> pooled 0.175
        let a = sm("a", 0.1, 1, 0.0);
        let b = sm("b", 0.2, 3, 0.0);
        let r = aggregate_report(&[a, b], None, Averaging::Micro, ReportConfig::default()).unwrap();
        assert!((r.ade.unwrap() - 0.175).abs() < 1e-12);
        // macro averaging weighs the two samples equally
        let a = sm("a", 0.1, 1, 0.0);
        let b = sm("b", 0.2, 3, 0.0);
        let r = aggregate_report(&[a, b], None, Averaging::Macro, ReportConfig::default()).unwrap();
        assert!((r.ade.unwrap() - 0.15).abs() < 1e-12);
    }

    #[test]
    fn all_stratum_equals_parent() {
        let samples: Vec<SampleMetrics> = (0..10)
            .map(|i| sm(&format!("s{i}"), 0.1 * i as f64, 2, i as f64))
            .collect();
        let r = aggregate_report(&samples, Some(0.1), Averaging::Micro, ReportConfig::default())
            .unwrap();
        let strata = r.strata.as_ref().unwrap();
        assert!(strata.contains_key("top") && strata.contains_key("all"));
        let all = &strata["all"];
        assert_eq!(all.ade, r.ade);
        assert_eq!(all.n_samples, r.n_samples);
        assert_eq!(strata["top"].n_samples, 1);
        assert!(strata["top"].n_samples <= r.n_samples);
    }

    #[test]
    fn report_json_field_names() {
        let r = aggregate_report(
            &[sm("a", 0.1, 2, 0.5)],
            Some(1.0),
            Averaging::Micro,
            ReportConfig::default(),
        )
        .unwrap();
        let json = r.to_json();
        for key in [
            "\"report_version\": 1",
            "\"ade\"",
            "\"fde\"",
            "\"mpjpe\"",
            "\"mpjpe_f\"",
            "\"n_samples\"",
            "\"n_valid_wrist_frames\"",
            "\"n_valid_joint_frames\"",
            "\"strata\"",
            "\"config\"",
        ] {
            assert!(json.contains(key), "missing {key} in {json}");
        }
        let round: Report = serde_json::from_str(&json).unwrap();
        assert_eq!(round, r);
    }
}
