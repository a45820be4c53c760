//! Benchmark the full pipeline: synth -> train -> evaluate, with timings,
//! baseline comparison, and corruption ablations.
//!
//! Usage: bench [n_clips] [steps] [batch] [frames] [lr]

use std::time::Instant;

use egghand_core::dataio::{synth_generate, Dataset, SynthConfig};
use egghand_core::forecaster::ModelConfig;
use egghand_core::trainer::{evaluate, train, Ablation, EvalOptions, Predictor, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let arg = |i: usize, default: f64| -> f64 {
        args.get(i).map(|s| s.parse().expect("numeric arg")).unwrap_or(default)
    };
    let n_clips = arg(1, 200.0) as usize;
    let steps = arg(2, 2000.0) as usize;
    let batch = arg(3, 8.0) as usize;
    let frames = arg(4, 60.0) as usize;
    let lr = arg(5, 2e-3);

    let dir = std::env::temp_dir().join(format!("egghand_bench_{frames}_{}", (lr * 1e6) as u64));
    let t0 = Instant::now();
    let synth_config = SynthConfig {
        n_clips,
        frames_per_clip: frames,
        egomotion_level: 0.5,
        seed: 0,
        ..SynthConfig::default()
    };
    synth_generate(&synth_config, &dir).unwrap();
    println!("synth {n_clips} clips x {frames} frames: {:.1}s", t0.elapsed().as_secs_f64());

    let dataset = Dataset::open(&dir).unwrap();
    let model_config = ModelConfig::default();
    let train_config = TrainConfig {
        steps,
        batch_size: batch,
        base_lr: lr,
        seed: 0,
        ..TrainConfig::default()
    };

    let t1 = Instant::now();
    let (model, logs) = train(&dataset, &model_config, &train_config).unwrap();
    let train_time = t1.elapsed().as_secs_f64();
    println!(
        "train {steps} steps batch {batch}: {train_time:.1}s ({:.3} s/step)",
        train_time / steps as f64
    );
    println!(
        "loss[0] = {:.4}  loss[last] = {:.4}",
        logs[0].loss_total,
        logs.last().unwrap().loss_total
    );

    let t2 = Instant::now();
    let opts = EvalOptions::default();
    let rm = evaluate(Predictor::Model(&model), &dataset, &opts).unwrap();
    let rs = evaluate(Predictor::Static, &dataset, &opts).unwrap();
    let rc = evaluate(Predictor::Cvm, &dataset, &opts).unwrap();
    println!("eval: {:.1}s", t2.elapsed().as_secs_f64());
    for (name, r) in [("model", &rm), ("static", &rs), ("cvm", &rc)] {
        println!(
            "{name:8} ADE {:.4} FDE {:.4} MPJPE {:.4} MPJPE-F {:.4} (n={})",
            r.ade.unwrap(),
            r.fde.unwrap(),
            r.mpjpe.unwrap(),
            r.mpjpe_f.unwrap(),
            r.n_samples
        );
    }
    for ablation in [Ablation::DummyText, Ablation::NoisyVision, Ablation::Both] {
        let o = EvalOptions {
            ablation,
            ..EvalOptions::default()
        };
        let r = evaluate(Predictor::Model(&model), &dataset, &o).unwrap();
        println!(
            "ablate {:12} ADE {:.4} MPJPE {:.4}",
            ablation.as_str(),
            r.ade.unwrap(),
            r.mpjpe.unwrap()
        );
    }
    std::fs::remove_dir_all(&dir).ok();
}
