//! Command-line interface: dataset synthesis, training, evaluation,
//! forecasting, overlay export, gradient checks.
//!
//! Exit codes: 0 success, 1 validation error, 2 I/O error, 3 numerical
//! failure.

mod overlay;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use egghand_core::dataio::{synth_generate, Dataset, SynthConfig, WindowConfig};
use egghand_core::error::Error;
use egghand_core::forecaster::{load_checkpoint, save_checkpoint, ModelConfig};
use egghand_core::metrics::Averaging;
use egghand_core::nnkernel::{check_all_ops, grad_check, CheckBlock};
use egghand_core::trainer::{
    evaluate, logs_to_jsonl, train, Ablation, EvalOptions, Predictor, TrainConfig,
};

#[derive(Parser)]
#[command(name = "egghand", version, about = "Egocentric 3D hand-pose forecasting toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset of clip bundles.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        clips: usize,
        /// Frames per clip (>= 30).
        #[arg(long, default_value_t = 40)]
        frames: usize,
        /// Camera-walk intensity in [0, 1].
        #[arg(long, default_value_t = 0.5)]
        egomotion: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also store rendered 224x224 frames (large).
        #[arg(long, default_value_t = false)]
        with_frames: bool,
    },
    /// Train a forecaster on a dataset's train split.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Output checkpoint path; the metrics log goes to <out>.log.jsonl.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON file overriding model/train configuration fields.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate a model or baseline and write a report.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, conflicts_with = "baseline")]
        model: Option<PathBuf>,
        /// "static" or "cvm".
        #[arg(long)]
        baseline: Option<String>,
        #[arg(long, default_value = "test")]
        split: String,
        /// Stratification selector, e.g. "egomotion:0.1".
        #[arg(long)]
        strata: Option<String>,
        /// One of noisy_vision, dummy_text, both.
        #[arg(long)]
        ablate: Option<String>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Worker threads for per-sample evaluation.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Forecast one window of one clip and write the prediction as JSON.
    Forecast {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        clip: String,
        /// Window start frame (0-based; the window spans 30 frames).
        #[arg(long)]
        window: usize,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render observed and predicted poses as an SVG overlay.
    Overlay {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        clip: String,
        /// Prediction JSON produced by `forecast`.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Project through this frame's camera instead of the anchor view.
        #[arg(long)]
        frame: Option<usize>,
    },
    /// Run the finite-difference suite; exits nonzero on any violation.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the toolkit version.
    Version,
}

fn main() -> ExitCode {
    // flag misuse is a validation error (exit 1); --help/--version exit 0
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Optional config-file overrides for `train`.
#[derive(Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFileConfig {
    model: Option<ModelConfig>,
    train: Option<TrainConfig>,
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth {
            out,
            clips,
            frames,
            egomotion,
            seed,
            with_frames,
        } => {
            let config = SynthConfig {
                n_clips: clips,
                frames_per_clip: frames,
                egomotion_level: egomotion,
                seed,
                with_frames,
                ..SynthConfig::default()
            };
            synth_generate(&config, &out)?;
            println!(
                "wrote {} clips ({} frames each) to {}",
                clips,
                frames,
                out.display()
            );
            Ok(())
        }
        Command::Train {
            data,
            out,
            steps,
            seed,
            config,
        } => {
            let overrides: TrainFileConfig = match config {
                Some(path) => {
                    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
                    serde_json::from_slice(&bytes).map_err(|e| {
                        Error::validation(format!("config file {}: {e}", path.display()))
                    })?
                }
                None => TrainFileConfig::default(),
            };
            let mut model_config = overrides.model.unwrap_or_default();
            model_config.seed = seed;
            let mut train_config = overrides.train.unwrap_or_default();
            train_config.steps = steps;
            train_config.seed = seed;

            let dataset = Dataset::open(&data)?;
            let (mut model, logs) = train(&dataset, &model_config, &train_config)?;
            save_checkpoint(&mut model, &out)?;
            let log_path = out.with_extension("log.jsonl");
            std::fs::write(&log_path, logs_to_jsonl(&logs)).map_err(|e| Error::io(&log_path, e))?;
            let last = logs.last().expect("steps >= 1");
            println!(
                "trained {} steps; final loss {:.6}; checkpoint {}; log {}",
                steps,
                last.loss_total,
                out.display(),
                log_path.display()
            );
            Ok(())
        }
        Command::Eval {
            data,
            model,
            baseline,
            split,
            strata,
            ablate,
            report,
            seed,
            jobs,
        } => {
            let dataset = Dataset::open(&data)?;
            let strata_fraction = match strata.as_deref() {
                None => None,
                Some(s) => {
                    let fraction = s.strip_prefix("egomotion:").ok_or_else(|| {
                        Error::validation(format!("strata must look like egomotion:0.1, got {s:?}"))
                    })?;
                    Some(fraction.parse::<f64>().map_err(|e| {
                        Error::validation(format!("bad strata fraction {fraction:?}: {e}"))
                    })?)
                }
            };
            let ablation = match ablate.as_deref() {
                None => Ablation::None,
                Some(s) => s.parse()?,
            };
            let options = EvalOptions {
                split,
                strata_fraction,
                ablation,
                seed,
                jobs,
                averaging: Averaging::Micro,
                window: WindowConfig::default(),
                velocity_window: 2,
            };

            let loaded;
            let predictor = match (&model, baseline.as_deref()) {
                (Some(path), None) => {
                    loaded = load_checkpoint(path)?;
                    Predictor::Model(&loaded)
                }
                (None, Some("static")) => Predictor::Static,
                (None, Some("cvm")) => Predictor::Cvm,
                (None, Some(other)) => {
                    return Err(Error::validation(format!(
                        "unknown baseline {other:?} (expected static or cvm)"
                    )))
                }
                (None, None) => {
                    return Err(Error::validation(
                        "pass either --model CKPT or --baseline static|cvm".to_string(),
                    ))
                }
                (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
            };

            let result = evaluate(predictor, &dataset, &options)?;
            std::fs::write(&report, result.to_json()).map_err(|e| Error::io(&report, e))?;
            println!("wrote report to {}", report.display());
            Ok(())
        }
        Command::Forecast {
            data,
            clip,
            window,
            model,
            out,
        } => {
            let dataset = Dataset::open(&data)?;
            let record = dataset.load_clip(&clip)?;
            let model = load_checkpoint(&model)?;
            let window_config = WindowConfig::default();
            let span = window_config.t_obs + window_config.t_fut;
            if window + span > record.num_frames() {
                return Err(Error::validation(format!(
                    "window {window}..{} exceeds clip length {}",
                    window + span,
                    record.num_frames()
                )));
            }
            // windows exist at stride multiples; forecasting accepts any
            // start, so re-window with stride 1 and pick the requested one
            let stride_one = WindowConfig {
                stride: 1,
                ..window_config
            };
            let samples = egghand_core::dataio::make_windows(&record, &stride_one)?;
            let sample = samples
                .into_iter()
                .find(|s| s.start == window)
                .ok_or_else(|| Error::validation(format!("no window at start {window}")))?;
            let ctx = egghand_core::trainer::build_context(
                &record,
                &sample,
                &model.config,
                Ablation::None,
                0,
                &[],
            )?;
            let pred = egghand_core::forecaster::forward(&model, &sample, &ctx)?;

            #[derive(serde::Serialize)]
            struct ForecastOut<'a> {
                clip_id: &'a str,
                window: usize,
                pred: Vec<Vec<[f64; 3]>>,
                frame: &'a str,
                canonical_mode: &'a str,
            }
            let pred_nested: Vec<Vec<[f64; 3]>> = pred
                .chunks(42 * 3)
                .map(|frame| frame.chunks(3).map(|p| [p[0], p[1], p[2]]).collect())
                .collect();
            let payload = ForecastOut {
                clip_id: &clip,
                window,
                pred: pred_nested,
                frame: "canonical",
                canonical_mode: window_config.mode.as_str(),
            };
            std::fs::write(&out, serde_json::to_string_pretty(&payload).expect("forecast json"))
                .map_err(|e| Error::io(&out, e))?;
            println!("wrote forecast to {}", out.display());
            Ok(())
        }
        Command::Overlay {
            data,
            clip,
            pred,
            out,
            frame,
        } => {
            overlay::render(&data, &clip, &pred, &out, frame)?;
            println!("wrote overlay to {}", out.display());
            Ok(())
        }
        Command::Gradcheck { seed } => {
            let mut worst: f64 = 0.0;
            for item in check_all_ops(seed) {
                println!("op {:<14} max rel error {:.3e}", item.name, item.max_rel_error);
                worst = worst.max(item.max_rel_error);
            }
            for (name, block) in [
                ("linear", CheckBlock::Linear),
                ("attention", CheckBlock::Attention),
                ("constant", CheckBlock::Constant),
            ] {
                let err = grad_check(block, seed);
                println!("block {:<11} max rel error {:.3e}", name, err);
                worst = worst.max(err);
            }
            let obj = objectives_check(seed);
            println!("objectives     max rel error {:.3e}", obj);
            worst = worst.max(obj);
            println!("max rel error overall {worst:.3e}");
            if worst < 1e-4 {
                Ok(())
            } else {
                Err(Error::NonFinite(format!(
                    "gradient check failed: max relative error {worst:.3e} >= 1e-4"
                )))
            }
        }
        Command::Version => {
            println!("egghand {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}

/// Finite-difference check of the composite-loss gradient at a random
/// kink-free point.
fn objectives_check(seed: u64) -> f64 {
    use egghand_core::nnkernel::gradcheck::fd_max_rel_error;
    use egghand_core::nnkernel::Prng;
    use egghand_core::objectives::{loss_gradient, loss_total, LossWeights, PairSet};

    let mut prng = Prng::new(seed ^ 0xE66D);
    let t = 2;
    let n = t * 42 * 3;
    let gt: Vec<f64> = (0..n).map(|_| prng.uniform_in(-0.5, 0.5)).collect();
    let pred: Vec<f64> = gt.iter().map(|v| v + prng.uniform_in(0.05, 0.3)).collect();
    let mask: Vec<bool> = (0..t * 42).map(|_| prng.next_f64() > 0.2).collect();
    let pairs = PairSet::intra_hand_full();
    let weights = LossWeights::default();
    let analytic = loss_gradient(&pred, &gt, &mask, &weights, &pairs).expect("gradient");
    let mut eval = |xs: &[f64]| loss_total(xs, &gt, &mask, &weights, &pairs).unwrap().total;
    fd_max_rel_error(&mut eval, &pred, &analytic, 1e-5)
}
