//! CIFAR-10 binary batches: records of one label byte followed by 3072 pixel
//! bytes (32×32 red plane, then green, then blue, each row-major).

use std::fs;
use std::path::Path;

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};

pub const CIFAR_RECORD_LEN: usize = 1 + 3 * 32 * 32;

fn parse(bytes: &[u8], split: Split) -> Result<Dataset> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(CIFAR_RECORD_LEN) {
        return Err(Error::Format(format!(
            "CIFAR batch length {} is not a positive multiple of {CIFAR_RECORD_LEN}",
            bytes.len()
        )));
    }
    let count = bytes.len() / CIFAR_RECORD_LEN;
    let mut images = Vec::with_capacity(count * (CIFAR_RECORD_LEN - 1));
    let mut labels = Vec::with_capacity(count);
    for rec in bytes.chunks_exact(CIFAR_RECORD_LEN) {
        let label = rec[0] as usize;
        if label >= 10 {
            return Err(Error::Format(format!("label byte {label} is not a CIFAR-10 class")));
        }
        labels.push(label);
        images.extend(rec[1..].iter().map(|&p| f32::from(p) / 255.0));
    }
    Dataset::new(images, labels, 10, 3, 32, 32, split)
}

/// Reads one CIFAR-10 binary batch file. Files named `test_batch*` are tagged
/// as the test split.
pub fn load_cifar_binary(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    let is_test = path
        .file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.starts_with("test_batch"));
    parse(&bytes, if is_test { Split::Test } else { Split::Train })
}

/// Reads the standard `cifar-10-batches-bin` directory: five training batches
/// (50,000 images) and one test batch (10,000 images).
pub fn load_cifar10_dir(dir: &Path) -> Result<(Dataset, Dataset)> {
    let mut bytes = Vec::new();
    for i in 1..=5 {
        bytes.extend(fs::read(dir.join(format!("data_batch_{i}.bin")))?);
    }
    let train = parse(&bytes, Split::Train)?;
    let test = load_cifar_binary(&dir.join("test_batch.bin"))?;
    if train.len() != 50_000 || test.len() != 10_000 {
        return Err(Error::Format(format!(
            "expected 50000/10000 images, found {}/{}",
            train.len(),
            test.len()
        )));
    }
    Ok((train, test))
}
