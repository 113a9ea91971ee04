//! CIFAR-10 binary batches: records of one label byte followed by 3072
//! pixel bytes (1024 red, 1024 green, 1024 blue, each 32×32 row-major).

use std::fs;
use std::path::{Path, PathBuf};

use super::{DataError, Dataset, Result};
use crate::encoders::ImageBatch;
use crate::tensor::Tensor;

pub const CIFAR_RECORD_BYTES: usize = 1 + 3 * 32 * 32;
const CIFAR_CLASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CifarPart {
    /// `data_batch_1.bin` … `data_batch_5.bin`.
    Train,
    /// `test_batch.bin`.
    Test,
}

impl CifarPart {
    fn files(self) -> Vec<String> {
        match self {
            CifarPart::Train => (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
            CifarPart::Test => vec!["test_batch.bin".into()],
        }
    }
}

fn parse_records(path: &Path, bytes: &[u8], labels: &mut Vec<usize>, pixels: &mut Vec<i64>) -> Result<()> {
    if bytes.len() % CIFAR_RECORD_BYTES != 0 {
        return Err(DataError::Length {
            path: path.to_path_buf(),
            expected: (bytes.len() / CIFAR_RECORD_BYTES + 1) * CIFAR_RECORD_BYTES,
            found: bytes.len(),
        });
    }
    for record in bytes.chunks_exact(CIFAR_RECORD_BYTES) {
        let label = record[0] as usize;
        if label >= CIFAR_CLASSES {
            return Err(DataError::Format {
                path: path.to_path_buf(),
                reason: format!("label {label} outside [0, {CIFAR_CLASSES})"),
            });
        }
        labels.push(label);
        pixels.extend(record[1..].iter().map(|&b| b as i64));
    }
    Ok(())
}

fn build(name: String, labels: Vec<usize>, pixels: Vec<i64>) -> Result<Dataset> {
    let n = labels.len();
    let tensor = Tensor::from_int(&[n, 3, 32, 32], pixels).expect("record length checked");
    Dataset::new(name, ImageBatch::new(tensor, 255)?, labels, CIFAR_CLASSES)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads one binary batch file.
pub fn load_cifar10_file(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let (mut labels, mut pixels) = (Vec::new(), Vec::new());
    parse_records(path, &read(path)?, &mut labels, &mut pixels)?;
    build("cifar10".into(), labels, pixels)
}

/// Loads the training or test part from `dir` (or its
/// `cifar-10-batches-bin` subdirectory). All files of the part must exist.
pub fn load_cifar10_binary(dir: impl AsRef<Path>, part: CifarPart) -> Result<Dataset> {
    let dir = dir.as_ref();
    let nested = dir.join("cifar-10-batches-bin");
    let root: PathBuf = if nested.is_dir() { nested } else { dir.to_path_buf() };
    let (mut labels, mut pixels) = (Vec::new(), Vec::new());
    for file in part.files() {
        let path = root.join(file);
        parse_records(&path, &read(&path)?, &mut labels, &mut pixels)?;
    }
    build("cifar10".into(), labels, pixels)
}

/// Writes a dataset of `(N, 3, 32, 32)` 8-bit images in the binary batch layout.
pub fn write_cifar10_file(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let path = path.as_ref();
    if ds.images.sample_shape() != [3, 32, 32] || ds.images.x_max() > 255 {
        return Err(DataError::Invalid(
            "CIFAR records hold 3×32×32 8-bit images".into(),
        ));
    }
    let per = 3 * 32 * 32;
    let mut bytes = Vec::with_capacity(ds.len() * CIFAR_RECORD_BYTES);
    for (i, &label) in ds.labels.iter().enumerate() {
        bytes.push(label as u8);
        bytes.extend(ds.images.values()[i * per..(i + 1) * per].iter().map(|&v| v as u8));
    }
    fs::write(path, bytes).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Record i: label `i % 10`, pixel byte k = `(k + 7i) % 256`.
    fn records(n: usize) -> Vec<u8> {
        let mut out = Vec::new();
        for i in 0..n {
            out.push((i % 10) as u8);
            out.extend((0..3072).map(|k| ((k + 7 * i) % 256) as u8));
        }
        out
    }

    #[test]
    fn two_record_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("data_batch_1.bin");
        fs::write(&p, records(2)).unwrap();
        let ds = load_cifar10_file(&p).unwrap();
        assert_eq!(ds.images.shape(), &[2, 3, 32, 32]);
        assert_eq!(ds.labels, vec![0, 1]);
        assert!(ds.labels.iter().all(|&l| l < 10));
        // Green plane of record 1 starts at byte 1024 of its pixel block.
        let px = ds.images.pixels();
        assert_eq!(px.get_f64(px.offset_of(&[1, 1, 0, 0])), ((1024 + 7) % 256) as f64);
    }

    #[test]
    fn truncated_record_is_length_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.bin");
        let mut bytes = records(2);
        bytes.pop();
        fs::write(&p, bytes).unwrap();
        assert!(matches!(load_cifar10_file(&p), Err(DataError::Length { .. })));
    }

    #[test]
    fn bad_label_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.bin");
        let mut bytes = records(1);
        bytes[0] = 10;
        fs::write(&p, bytes).unwrap();
        assert!(matches!(load_cifar10_file(&p), Err(DataError::Format { .. })));
    }

    #[test]
    fn directory_layout() {
        let dir = tempfile::tempdir().unwrap();
        let nested = dir.path().join("cifar-10-batches-bin");
        fs::create_dir(&nested).unwrap();
        for i in 1..=5 {
            fs::write(nested.join(format!("data_batch_{i}.bin")), records(i)).unwrap();
        }
        fs::write(nested.join("test_batch.bin"), records(3)).unwrap();
        assert_eq!(load_cifar10_binary(dir.path(), CifarPart::Train).unwrap().len(), 15);
        assert_eq!(load_cifar10_binary(&nested, CifarPart::Test).unwrap().len(), 3);
        fs::remove_file(nested.join("data_batch_4.bin")).unwrap();
        assert!(matches!(
            load_cifar10_binary(dir.path(), CifarPart::Train),
            Err(DataError::Io { .. })
        ));
    }

    #[test]
    fn write_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bin");
        fs::write(&p, records(4)).unwrap();
        let ds = load_cifar10_file(&p).unwrap();
        let q = dir.path().join("b.bin");
        write_cifar10_file(&q, &ds).unwrap();
        assert_eq!(fs::read(&q).unwrap(), records(4));
    }
}
