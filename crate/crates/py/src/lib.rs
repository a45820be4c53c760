//! Python bindings for the egghand forecasting toolkit.
//!
//! Thin functional wrappers over the Rust core: flat `list[float]` arrays
//! in, flat lists or JSON strings out. No math happens on the Python side.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use egghand_core::dataio::{
    self, synth_generate, Dataset, SynthConfig, WindowConfig,
};
use egghand_core::error::Error;
use egghand_core::forecaster::{load_checkpoint, save_checkpoint, ModelConfig};
use egghand_core::geometry::{self, JointSet, RigidTransform, NUM_JOINTS};
use egghand_core::metrics;
use egghand_core::nnkernel;
use egghand_core::objectives::{self, LossWeights, PairSet};
use egghand_core::trainer::{self, Ablation, EvalOptions, TrainConfig};

fn to_py(err: Error) -> PyErr {
    match err.exit_code() {
        1 => PyValueError::new_err(err.to_string()),
        2 => PyIOError::new_err(err.to_string()),
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn parse_transform(rotation: &[f64], translation: &[f64]) -> PyResult<RigidTransform> {
    if rotation.len() != 9 || translation.len() != 3 {
        return Err(PyValueError::new_err(
            "rotation must have 9 values (row-major), translation 3",
        ));
    }
    let r = [
        [rotation[0], rotation[1], rotation[2]],
        [rotation[3], rotation[4], rotation[5]],
        [rotation[6], rotation[7], rotation[8]],
    ];
    RigidTransform::new(r, [translation[0], translation[1], translation[2]]).map_err(to_py)
}

fn parse_extrinsics(flat: &[f64]) -> PyResult<Vec<RigidTransform>> {
    if flat.len() % 12 != 0 {
        return Err(PyValueError::new_err(
            "extrinsics must be T x 12 values (row-major [R|t])",
        ));
    }
    Ok(flat
        .chunks(12)
        .map(|e| {
            RigidTransform::from_parts(
                [
                    [e[0], e[1], e[2]],
                    [e[4], e[5], e[6]],
                    [e[8], e[9], e[10]],
                ],
                [e[3], e[7], e[11]],
            )
        })
        .collect())
}

/// Deterministic splitmix64 stream with Box-Muller Gaussians.
#[pyclass]
struct Prng {
    inner: nnkernel::Prng,
}

#[pymethods]
impl Prng {
    #[new]
    fn new(seed: u64) -> Self {
        Prng {
            inner: nnkernel::Prng::new(seed),
        }
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn next_f64(&mut self) -> f64 {
        self.inner.next_f64()
    }

    fn next_gaussian(&mut self) -> f64 {
        self.inner.next_gaussian()
    }
}

/// Apply a rigid transform (p_cam = R p + t) to flat [N*3] points.
#[pyfunction]
fn se3_apply(rotation: Vec<f64>, translation: Vec<f64>, points: Vec<f64>) -> PyResult<Vec<f64>> {
    let pose = parse_transform(&rotation, &translation)?;
    if points.len() % 3 != 0 {
        return Err(PyValueError::new_err("points must be N x 3"));
    }
    let pts: Vec<[f64; 3]> = points.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
    let out = geometry::se3_apply(&pose, &pts).map_err(to_py)?;
    Ok(out.into_iter().flatten().collect())
}

/// Invert a rigid transform; returns (rotation 9 values, translation 3).
#[pyfunction]
fn se3_inverse(rotation: Vec<f64>, translation: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let pose = parse_transform(&rotation, &translation)?;
    let inv = geometry::se3_inverse(&pose);
    Ok((
        inv.rotation.iter().flatten().copied().collect(),
        inv.translation.to_vec(),
    ))
}

/// Egomotion score over flat [T*12] extrinsics.
#[pyfunction]
fn egomotion_score(extrinsics: Vec<f64>) -> PyResult<f64> {
    Ok(geometry::egomotion_score(&parse_extrinsics(&extrinsics)?))
}

/// Canonicalize a window of world poses: poses [T*42*3], mask [T*42] bools,
/// extrinsics [T*12]. Returns (canonical poses, degenerate_yaw flag).
#[pyfunction]
#[pyo3(signature = (poses, mask, extrinsics, mode = "yaw_only"))]
fn canonicalize_clip(
    poses: Vec<f64>,
    mask: Vec<bool>,
    extrinsics: Vec<f64>,
    mode: &str,
) -> PyResult<(Vec<f64>, bool)> {
    let exts = parse_extrinsics(&extrinsics)?;
    let t = exts.len();
    if poses.len() != t * NUM_JOINTS * 3 || mask.len() != t * NUM_JOINTS {
        return Err(PyValueError::new_err(format!(
            "poses must be T*{NUM_JOINTS}*3 and mask T*{NUM_JOINTS} with T = {t}"
        )));
    }
    let joints: Vec<JointSet> = (0..t)
        .map(|f| {
            let positions = poses[f * NUM_JOINTS * 3..(f + 1) * NUM_JOINTS * 3]
                .chunks(3)
                .map(|c| [c[0], c[1], c[2]])
                .collect();
            let valid = mask[f * NUM_JOINTS..(f + 1) * NUM_JOINTS].to_vec();
            JointSet::new(positions, valid)
        })
        .collect::<Result<_, _>>()
        .map_err(to_py)?;
    let geo_mode = match mode {
        "full_camera" => geometry::CanonicalMode::FullCamera,
        "yaw_only" => geometry::CanonicalMode::YawOnly,
        other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    };
    let out = geometry::canonicalize_clip(&joints, &exts, geo_mode, dataio::UP_AXIS).map_err(to_py)?;
    let flat = out
        .joints
        .iter()
        .flat_map(|js| js.positions.iter().flatten().copied())
        .collect();
    Ok((flat, out.degenerate_yaw))
}

/// Uniformly sampled context frame indices.
#[pyfunction]
#[pyo3(signature = (t_obs, k = 4))]
fn sample_context_frames(t_obs: usize, k: usize) -> PyResult<Vec<usize>> {
    dataio::sample_context_frames(t_obs, k).map_err(to_py)
}

/// Composite loss breakdown as a dict with keys total/abs/rel/pair.
#[pyfunction]
#[pyo3(signature = (pred, gt, mask, lambda_abs = 0.6, lambda_rel = 0.2, lambda_pair = 0.2))]
fn loss_total<'py>(
    py: Python<'py>,
    pred: Vec<f64>,
    gt: Vec<f64>,
    mask: Vec<bool>,
    lambda_abs: f64,
    lambda_rel: f64,
    lambda_pair: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let weights = LossWeights {
        lambda_abs,
        lambda_rel,
        lambda_pair,
    };
    let pairs = PairSet::intra_hand_full();
    let b = objectives::loss_total(&pred, &gt, &mask, &weights, &pairs).map_err(to_py)?;
    let dict = PyDict::new(py);
    dict.set_item("total", b.total)?;
    dict.set_item("abs", b.abs)?;
    dict.set_item("rel", b.rel)?;
    dict.set_item("pair", b.pair)?;
    Ok(dict)
}

/// Exact (sub)gradient of the composite loss with respect to `pred`.
#[pyfunction]
#[pyo3(signature = (pred, gt, mask, lambda_abs = 0.6, lambda_rel = 0.2, lambda_pair = 0.2))]
fn loss_gradient(
    pred: Vec<f64>,
    gt: Vec<f64>,
    mask: Vec<bool>,
    lambda_abs: f64,
    lambda_rel: f64,
    lambda_pair: f64,
) -> PyResult<Vec<f64>> {
    let weights = LossWeights {
        lambda_abs,
        lambda_rel,
        lambda_pair,
    };
    let pairs = PairSet::intra_hand_full();
    objectives::loss_gradient(&pred, &gt, &mask, &weights, &pairs).map_err(to_py)
}

/// (ade, fde) wrist displacement errors; None when no term is eligible.
#[pyfunction]
fn trajectory_errors(
    pred: Vec<f64>,
    gt: Vec<f64>,
    mask: Vec<bool>,
) -> PyResult<(Option<f64>, Option<f64>)> {
    let (ade, fde, _, _) = metrics::trajectory_errors(&pred, &gt, &mask).map_err(to_py)?;
    Ok((ade, fde))
}

/// (mpjpe, mpjpe_f) wrist-relative pose errors.
#[pyfunction]
fn pose_errors(
    pred: Vec<f64>,
    gt: Vec<f64>,
    mask: Vec<bool>,
) -> PyResult<(Option<f64>, Option<f64>)> {
    let (mpjpe, mpjpe_f, _, _) = metrics::pose_errors(&pred, &gt, &mask).map_err(to_py)?;
    Ok((mpjpe, mpjpe_f))
}

/// Learning rate under the warmup-cosine schedule.
#[pyfunction]
#[pyo3(signature = (step, steps, base_lr = 1e-3, warmup_ratio = 0.05, min_lr = 0.0))]
fn lr_at(step: usize, steps: usize, base_lr: f64, warmup_ratio: f64, min_lr: f64) -> PyResult<f64> {
    let config = TrainConfig {
        steps,
        base_lr,
        warmup_ratio,
        min_lr,
        ..TrainConfig::default()
    };
    config.validate().map_err(to_py)?;
    Ok(trainer::lr_at(step, &config))
}

/// Generate a synthetic dataset.
#[pyfunction]
#[pyo3(signature = (out_dir, clips = 50, frames = 40, egomotion = 0.5, seed = 0, with_frames = false))]
fn synth(
    out_dir: PathBuf,
    clips: usize,
    frames: usize,
    egomotion: f64,
    seed: u64,
    with_frames: bool,
) -> PyResult<()> {
    let config = SynthConfig {
        n_clips: clips,
        frames_per_clip: frames,
        egomotion_level: egomotion,
        seed,
        with_frames,
        ..SynthConfig::default()
    };
    synth_generate(&config, &out_dir).map_err(to_py)
}

/// Train a forecaster; writes the checkpoint and returns the final loss.
#[pyfunction]
#[pyo3(signature = (data_dir, out_ckpt, steps = 2000, seed = 0, d = 64))]
fn train(data_dir: PathBuf, out_ckpt: PathBuf, steps: usize, seed: u64, d: usize) -> PyResult<f64> {
    let dataset = Dataset::open(&data_dir).map_err(to_py)?;
    let model_config = ModelConfig {
        d,
        seed,
        ..ModelConfig::default()
    };
    let train_config = TrainConfig {
        steps,
        seed,
        ..TrainConfig::default()
    };
    let (mut model, logs) = trainer::train(&dataset, &model_config, &train_config).map_err(to_py)?;
    save_checkpoint(&mut model, &out_ckpt).map_err(to_py)?;
    Ok(logs.last().map(|l| l.loss_total).unwrap_or(f64::NAN))
}

/// Evaluate a checkpoint or baseline; returns the report as a JSON string.
#[pyfunction]
#[pyo3(signature = (data_dir, model = None, baseline = None, split = "test", strata = None, ablate = None, seed = 0, jobs = 1))]
#[allow(clippy::too_many_arguments)]
fn evaluate(
    data_dir: PathBuf,
    model: Option<PathBuf>,
    baseline: Option<&str>,
    split: &str,
    strata: Option<f64>,
    ablate: Option<&str>,
    seed: u64,
    jobs: usize,
) -> PyResult<String> {
    let dataset = Dataset::open(&data_dir).map_err(to_py)?;
    let ablation = match ablate {
        None => Ablation::None,
        Some(s) => s.parse().map_err(to_py)?,
    };
    let options = EvalOptions {
        split: split.to_string(),
        strata_fraction: strata,
        ablation,
        seed,
        jobs,
        averaging: metrics::Averaging::Micro,
        window: WindowConfig::default(),
        velocity_window: 2,
    };
    let loaded;
    let predictor = match (&model, baseline) {
        (Some(path), None) => {
            loaded = load_checkpoint(path).map_err(to_py)?;
            trainer::Predictor::Model(&loaded)
        }
        (None, Some("static")) => trainer::Predictor::Static,
        (None, Some("cvm")) => trainer::Predictor::Cvm,
        _ => {
            return Err(PyValueError::new_err(
                "pass exactly one of model=... or baseline='static'|'cvm'",
            ))
        }
    };
    let report = trainer::evaluate(predictor, &dataset, &options).map_err(to_py)?;
    Ok(report.to_json())
}

/// Forecast one window; returns the prediction as a flat [t_fut*42*3] list.
#[pyfunction]
fn forecast(data_dir: PathBuf, clip: &str, window: usize, ckpt: PathBuf) -> PyResult<Vec<f64>> {
    let dataset = Dataset::open(&data_dir).map_err(to_py)?;
    let record = dataset.load_clip(clip).map_err(to_py)?;
    let model = load_checkpoint(&ckpt).map_err(to_py)?;
    let config = WindowConfig {
        stride: 1,
        ..WindowConfig::default()
    };
    let samples = dataio::make_windows(&record, &config).map_err(to_py)?;
    let sample = samples
        .into_iter()
        .find(|s| s.start == window)
        .ok_or_else(|| PyValueError::new_err(format!("no window at start {window}")))?;
    let ctx = trainer::build_context(&record, &sample, &model.config, Ablation::None, 0, &[])
        .map_err(to_py)?;
    egghand_core::forecaster::forward(&model, &sample, &ctx).map_err(to_py)
}

/// Run the kernel finite-difference suite; returns the max relative error.
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn gradcheck(seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for item in nnkernel::check_all_ops(seed) {
        worst = worst.max(item.max_rel_error);
    }
    for block in [
        nnkernel::CheckBlock::Linear,
        nnkernel::CheckBlock::Attention,
        nnkernel::CheckBlock::Constant,
    ] {
        worst = worst.max(nnkernel::grad_check(block, seed));
    }
    worst
}

#[pymodule]
fn egghand(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("NUM_JOINTS", NUM_JOINTS)?;
    m.add_class::<Prng>()?;
    m.add_function(wrap_pyfunction!(se3_apply, m)?)?;
    m.add_function(wrap_pyfunction!(se3_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(egomotion_score, m)?)?;
    m.add_function(wrap_pyfunction!(canonicalize_clip, m)?)?;
    m.add_function(wrap_pyfunction!(sample_context_frames, m)?)?;
    m.add_function(wrap_pyfunction!(loss_total, m)?)?;
    m.add_function(wrap_pyfunction!(loss_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(trajectory_errors, m)?)?;
    m.add_function(wrap_pyfunction!(pose_errors, m)?)?;
    m.add_function(wrap_pyfunction!(lr_at, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(forecast, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
