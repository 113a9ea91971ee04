use super::{DataError, Dataset, Result};
use crate::encoders::ImageBatch;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

pub const SYNTHETIC_SIDE: usize = 16;
const BLOB_SIDE: usize = 5;

/// `n` single-channel 16×16 images in `k` classes, labels assigned
/// round-robin.
///
/// The intensity range is cut into `k` bands of width `255 / k`. Every pixel
/// of a class-`c` image lies within `±0.35` band widths of band centre `c`,
/// with a randomly placed 5×5 blob at the top of that interval, so the mean
/// pixel alone separates the classes with a margin of `0.3` band widths.
pub fn synthetic_dataset(n: usize, k: usize, rng: &mut SeededRng) -> Result<Dataset> {
    if k < 2 || n < k {
        return Err(DataError::Invalid(format!(
            "synthetic dataset needs n >= k >= 2, got n={n} k={k}"
        )));
    }
    let side = SYNTHETIC_SIDE;
    let band = 255.0 / k as f64;
    let spread = 0.35 * band;
    let mut pixels = Vec::with_capacity(n * side * side);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % k;
        let centre = band * (class as f64 + 0.5);
        let by = rng.below(side - BLOB_SIDE + 1);
        let bx = rng.below(side - BLOB_SIDE + 1);
        for y in 0..side {
            for x in 0..side {
                let in_blob = (by..by + BLOB_SIDE).contains(&y) && (bx..bx + BLOB_SIDE).contains(&x);
                let v = if in_blob {
                    centre + spread
                } else {
                    centre + rng.symmetric(spread)
                };
                pixels.push(v.round().clamp(0.0, 255.0) as i64);
            }
        }
        labels.push(class);
    }
    let tensor = Tensor::from_int(&[n, 1, side, side], pixels).expect("shape matches");
    Dataset::new(format!("synthetic-{k}"), ImageBatch::new(tensor, 255)?, labels, k)
}
