//! Cross-module integration: synth -> windows -> train -> evaluate flows
//! that exercise contracts between modules.

use std::path::PathBuf;

use egghand_core::dataio::{synth_generate, Dataset, SynthConfig};
use egghand_core::forecaster::ModelConfig;
use egghand_core::trainer::{
    evaluate, lr_at, train, Ablation, EvalOptions, Predictor, TrainConfig,
};

fn work_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("egghand_pipe_{}_{name}", std::process::id()));
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_dataset(dir: &std::path::Path, seed: u64) -> Dataset {
    let config = SynthConfig {
        n_clips: 14,
        frames_per_clip: 35,
        egomotion_level: 0.5,
        seed,
        ..SynthConfig::default()
    };
    synth_generate(&config, dir).unwrap();
    Dataset::open(dir).unwrap()
}

fn tiny_model_config(seed: u64) -> ModelConfig {
    ModelConfig {
        d: 16,
        heads: 2,
        enc_blocks: 1,
        dec_blocks: 1,
        d_feat_text: 8,
        seed,
        ..ModelConfig::default()
    }
}

#[test]
fn baselines_ignore_context_ablations() {
    let dir = work_dir("baseline_ablation");
    let dataset = small_dataset(&dir, 31);
    for predictor in [Predictor::Static, Predictor::Cvm] {
        let name = predictor.name();
        let clean = evaluate(
            match predictor {
                Predictor::Static => Predictor::Static,
                _ => Predictor::Cvm,
            },
            &dataset,
            &EvalOptions::default(),
        )
        .unwrap();
        let ablated = evaluate(
            match predictor {
                Predictor::Static => Predictor::Static,
                _ => Predictor::Cvm,
            },
            &dataset,
            &EvalOptions {
                ablation: Ablation::Both,
                ..EvalOptions::default()
            },
        )
        .unwrap();
        // metric content identical; only the config echo differs
        assert_eq!(clean.ade, ablated.ade, "{name}");
        assert_eq!(clean.fde, ablated.fde, "{name}");
        assert_eq!(clean.mpjpe, ablated.mpjpe, "{name}");
        assert_eq!(clean.mpjpe_f, ablated.mpjpe_f, "{name}");
        assert_eq!(clean.n_samples, ablated.n_samples, "{name}");
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn evaluating_static_twice_is_identical() {
    let dir = work_dir("static_twice");
    let dataset = small_dataset(&dir, 32);
    let a = evaluate(Predictor::Static, &dataset, &EvalOptions::default()).unwrap();
    let b = evaluate(Predictor::Static, &dataset, &EvalOptions::default()).unwrap();
    assert_eq!(a, b);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn parallel_evaluation_matches_sequential() {
    let dir = work_dir("jobs");
    let dataset = small_dataset(&dir, 33);
    let sequential = evaluate(Predictor::Cvm, &dataset, &EvalOptions::default()).unwrap();
    let parallel = evaluate(
        Predictor::Cvm,
        &dataset,
        &EvalOptions {
            jobs: 4,
            ..EvalOptions::default()
        },
    )
    .unwrap();
    assert_eq!(sequential, parallel);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn identical_seeds_identical_loss_curves() {
    let dir = work_dir("loss_curves");
    let dataset = small_dataset(&dir, 34);
    let model_config = tiny_model_config(34);
    let train_config = TrainConfig {
        steps: 50,
        batch_size: 4,
        seed: 34,
        ..TrainConfig::default()
    };
    let (_, logs_a) = train(&dataset, &model_config, &train_config).unwrap();
    let (_, logs_b) = train(&dataset, &model_config, &train_config).unwrap();
    assert_eq!(logs_a.len(), logs_b.len());
    for (a, b) in logs_a.iter().zip(&logs_b) {
        assert_eq!(a.loss_total.to_bits(), b.loss_total.to_bits(), "step {}", a.step);
        assert_eq!(a.lr.to_bits(), b.lr.to_bits());
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn logged_lr_at_warmup_equals_base() {
    let dir = work_dir("warmup_echo");
    let dataset = small_dataset(&dir, 35);
    let train_config = TrainConfig {
        steps: 40,
        batch_size: 4,
        seed: 35,
        ..TrainConfig::default()
    };
    let warmup = train_config.warmup_steps();
    assert!(warmup > 0);
    let (_, logs) = train(&dataset, &tiny_model_config(35), &train_config).unwrap();
    assert_eq!(logs[warmup].lr, train_config.base_lr);
    assert_eq!(lr_at(warmup, &train_config), train_config.base_lr);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn degenerate_window_handling_skips_short_clips() {
    use egghand_core::dataio::{split_samples, WindowConfig};
    let dir = work_dir("short_clips");
    // 30-frame clips yield exactly one window each; a config that requires
    // more observation frames than available yields zero and counts the skip
    let config = SynthConfig {
        n_clips: 6,
        frames_per_clip: 30,
        egomotion_level: 0.2,
        seed: 36,
        ..SynthConfig::default()
    };
    synth_generate(&config, &dir).unwrap();
    let dataset = Dataset::open(&dir).unwrap();
    let (samples, summary) = split_samples(&dataset, "train", &WindowConfig::default()).unwrap();
    assert_eq!(samples.len(), summary.clips);
    assert_eq!(summary.skipped_short_clips, 0);

    let wide = WindowConfig {
        t_obs: 25,
        ..WindowConfig::default()
    };
    let (none, summary) = split_samples(&dataset, "train", &wide).unwrap();
    assert!(none.is_empty());
    assert_eq!(summary.skipped_short_clips, summary.clips);
    std::fs::remove_dir_all(&dir).ok();
}
