//! Sinusoidal position encodings, interleaved sine/cosine with base 10000.
//!
//! Pure functions of (position, channel); regenerating them is bitwise
//! stable, which the cross-language reproducibility tests rely on.

use super::tensor::Tensor;

/// Encoding vector for a single position: channel pair i carries
/// sin(pos / 10000^(2i/d)) and cos(pos / 10000^(2i/d)).
pub fn encoding_row(position: usize, d: usize) -> Vec<f64> {
    let mut row = vec![0.0; d];
    let pos = position as f64;
    for i in 0..d / 2 {
        let angle = pos / 10000f64.powf(2.0 * i as f64 / d as f64);
        row[2 * i] = angle.sin();
        row[2 * i + 1] = angle.cos();
    }
    if d % 2 == 1 {
        let i = d / 2;
        let angle = pos / 10000f64.powf(2.0 * i as f64 / d as f64);
        row[d - 1] = angle.sin();
    }
    row
}

/// Stacked encodings for a list of positions, shape [len, d].
pub fn encoding_table(positions: &[usize], d: usize) -> Tensor {
    let mut data = Vec::with_capacity(positions.len() * d);
    for &p in positions {
        data.extend(encoding_row(p, d));
    }
    Tensor::new(vec![positions.len(), d], data).expect("encoding table shape")
}
