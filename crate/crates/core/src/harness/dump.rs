//! Spike train dump: five little-endian `u64` extents `(T, N, C, H, W)`
//! followed by one byte (0 or 1) per element in row-major order.

use std::fs;
use std::path::Path;

use super::{HarnessError, Result};
use crate::encoders::SpikeTrain;
use crate::tensor::Tensor;

const HEADER_BYTES: usize = 5 * 8;

pub fn spike_dump_bytes(train: &SpikeTrain) -> Vec<u8> {
    let spikes = train.spikes();
    let bits = spikes.as_bits().expect("spike trains hold bits");
    let mut out = Vec::with_capacity(HEADER_BYTES + bits.len());
    for &extent in spikes.shape() {
        out.extend_from_slice(&(extent as u64).to_le_bytes());
    }
    out.extend_from_slice(bits);
    out
}

pub fn write_spike_dump(train: &SpikeTrain, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, spike_dump_bytes(train)).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a dump back into a `(T, N, C, H, W)` bit tensor.
pub fn parse_spike_dump(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let bad = |reason: String| HarnessError::Dump {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER_BYTES {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    let shape: Vec<usize> = bytes[..HEADER_BYTES]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let body = &bytes[HEADER_BYTES..];
    let expected = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| bad(format!("extents {shape:?} overflow")))?;
    if body.len() != expected {
        return Err(bad(format!("extents {shape:?} need {expected} bytes, found {}", body.len())));
    }
    Tensor::from_bits(&shape, body.to_vec()).map_err(|e| bad(e.to_string()))
}

pub fn read_spike_dump(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_spike_dump(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{hybrid_temporal_bit_encode, EncoderConfig, ImageBatch};

    fn train() -> SpikeTrain {
        let px = Tensor::from_int(&[2, 1, 1, 2], vec![0, 255, 128, 7]).unwrap();
        let img = ImageBatch::new(px, 255).unwrap();
        hybrid_temporal_bit_encode(&img, &EncoderConfig::default()).unwrap()
    }

    #[test]
    fn header_then_bits() {
        let t = train();
        let bytes = spike_dump_bytes(&t);
        assert_eq!(&bytes[..8], &17u64.to_le_bytes());
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(bytes.len(), 40 + 17 * 2 * 2);
        assert_eq!(parse_spike_dump(&bytes, Path::new("mem")).unwrap(), *t.spikes());
    }

    #[test]
    fn corrupt_dumps_are_rejected() {
        let bytes = spike_dump_bytes(&train());
        let p = Path::new("mem");
        assert!(matches!(parse_spike_dump(&bytes[..30], p), Err(HarnessError::Dump { .. })));
        assert!(matches!(parse_spike_dump(&bytes[..bytes.len() - 1], p), Err(HarnessError::Dump { .. })));
        let mut not_bits = bytes.clone();
        *not_bits.last_mut().unwrap() = 2;
        assert!(matches!(parse_spike_dump(&not_bits, p), Err(HarnessError::Dump { .. })));
        let mut huge = bytes;
        huge[..8].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(parse_spike_dump(&huge, p), Err(HarnessError::Dump { .. })));
    }
}
