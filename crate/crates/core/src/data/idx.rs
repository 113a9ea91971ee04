//! IDX container (MNIST, KMNIST, Fashion-MNIST), plain or gzip-compressed.
//!
//! Header: big-endian u32 magic (`0x0803` images, `0x0801` labels), then one
//! big-endian u32 per dimension, then raw unsigned bytes.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;

use super::{DataError, Dataset, Result};
use crate::encoders::ImageBatch;
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const IDX_CLASSES: usize = 10;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let raw = fs::read(path).map_err(io_err)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| DataError::Format {
                path: path.to_path_buf(),
                reason: format!("gzip: {e}"),
            })?;
        return Ok(out);
    }
    Ok(raw)
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap())
}

/// Checks magic and header, returning the dimension sizes and the payload.
fn parse<'a>(path: &Path, bytes: &'a [u8], magic: u32, rank: usize) -> Result<(Vec<usize>, &'a [u8])> {
    let header = 4 + 4 * rank;
    if bytes.len() < 4 {
        return Err(DataError::Length {
            path: path.to_path_buf(),
            expected: header,
            found: bytes.len(),
        });
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(DataError::Format {
            path: path.to_path_buf(),
            reason: format!("magic {found:#010x}, expected {magic:#010x}"),
        });
    }
    if bytes.len() < header {
        return Err(DataError::Length {
            path: path.to_path_buf(),
            expected: header,
            found: bytes.len(),
        });
    }
    let dims: Vec<usize> = (0..rank).map(|i| be_u32(bytes, 4 + 4 * i) as usize).collect();
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|payload| payload.checked_add(header))
        .ok_or_else(|| DataError::Format {
            path: path.to_path_buf(),
            reason: format!("dimensions {dims:?} overflow"),
        })?;
    if bytes.len() != expected {
        return Err(DataError::Length {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok((dims, &bytes[header..]))
}

/// Loads an image file and its label file into a `(N, 1, H, W)` dataset with
/// `x_max = 255` and 10 classes.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let image_bytes = read_file(ip)?;
    let label_bytes = read_file(lp)?;
    let (dims, pixels) = parse(ip, &image_bytes, IDX_IMAGES_MAGIC, 3)?;
    let (ldims, labels) = parse(lp, &label_bytes, IDX_LABELS_MAGIC, 1)?;
    if dims[0] != ldims[0] {
        return Err(DataError::Consistency(format!(
            "{} images in {} but {} labels in {}",
            dims[0],
            ip.display(),
            ldims[0],
            lp.display()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= IDX_CLASSES) {
        return Err(DataError::Format {
            path: lp.to_path_buf(),
            reason: format!("label {bad} outside [0, {IDX_CLASSES})"),
        });
    }
    let data = pixels.iter().map(|&b| b as i64).collect();
    let tensor = Tensor::from_int(&[dims[0], 1, dims[1], dims[2]], data).expect("length checked");
    let images = ImageBatch::new(tensor, 255)?;
    let name = ip
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, images, labels.iter().map(|&l| l as usize).collect(), IDX_CLASSES)
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(bytes).map_err(io_err)
}

/// Writes single-channel images with values in `[0, 255]` as an IDX image file.
pub fn write_idx_images(path: impl AsRef<Path>, images: &ImageBatch) -> Result<()> {
    let path = path.as_ref();
    let [c, h, w] = images.sample_shape();
    if c != 1 || images.x_max() > 255 {
        return Err(DataError::Invalid(
            "IDX images must be single-channel 8-bit".into(),
        ));
    }
    let mut bytes = Vec::with_capacity(16 + images.values().len());
    for v in [IDX_IMAGES_MAGIC, images.len() as u32, h as u32, w as u32] {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    bytes.extend(images.values().iter().map(|&v| v as u8));
    write_all(path, &bytes)
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        let b = u8::try_from(l).map_err(|_| DataError::Invalid(format!("label {l} exceeds a byte")))?;
        bytes.push(b);
    }
    write_all(path, &bytes)
}
