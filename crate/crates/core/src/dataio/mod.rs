//! Clip-bundle storage, window extraction, min-max normalization, and the
//! synthetic kinematic generator.

pub mod bundle;
pub mod normalize;
pub mod synth;
pub mod windows;

pub use bundle::{
    joint_names, read_clip_bundle, write_clip_bundle, ClipRecord, Dataset, VisionTokens,
    FORMAT_VERSION, FRAME_ELEMS, FRAME_SIDE,
};
pub use normalize::{denorm_coefficients, denormalize, fit_minmax, normalize, NormStats};
pub use synth::{split_of, synth_clip, synth_generate, SynthConfig, TaskFamily, SYNTH_INTRINSICS};
pub use windows::{
    make_windows, sample_context_frames, Sample, WindowCanonicalMode, WindowConfig, T_FUT, T_OBS,
    UP_AXIS,
};

use crate::error::Result;

/// Outcome counters for turning a split's clips into samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestSummary {
    pub clips: usize,
    pub skipped_short_clips: usize,
    pub samples: usize,
}

/// Load every clip of a split and window it, in ascending clip-id order
/// (sample ids therefore come out ascending too).
pub fn split_samples(
    dataset: &Dataset,
    split: &str,
    config: &WindowConfig,
) -> Result<(Vec<Sample>, IngestSummary)> {
    let mut ids = dataset.clip_ids(split)?.to_vec();
    ids.sort();
    let mut samples = Vec::new();
    let mut summary = IngestSummary::default();
    for id in &ids {
        let record = dataset.load_clip(id)?;
        let windows = make_windows(&record, config)?;
        summary.clips += 1;
        if windows.is_empty() {
            summary.skipped_short_clips += 1;
        }
        samples.extend(windows);
    }
    summary.samples = samples.len();
    Ok((samples, summary))
}
