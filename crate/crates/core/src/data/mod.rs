//! Datasets, client partitioning and augmentation.

mod augment;
mod cifar;
mod partition;
mod synthetic;

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use augment::Augment;
pub use cifar::{load_cifar10_dir, load_cifar_binary, CIFAR_RECORD_LEN};
pub use partition::{dirichlet_partition, Partition};
pub use synthetic::{synthetic_dataset, SyntheticSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Labeled images stored sample-major `(N, C, H, W)` with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<f32>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub split: Split,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawHeader {
    count: usize,
    channels: usize,
    height: usize,
    width: usize,
    classes: usize,
    split: Split,
    dtype: String,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        images: Vec<f32>,
        labels: Vec<usize>,
        classes: usize,
        channels: usize,
        height: usize,
        width: usize,
        split: Split,
    ) -> Result<Self> {
        if images.len() != labels.len() * channels * height * width {
            return Err(Error::data(format!(
                "{} pixel values for {} images of {channels}x{height}x{width}",
                images.len(),
                labels.len()
            )));
        }
        if !height.is_multiple_of(8) || !width.is_multiple_of(8) || height == 0 || width == 0 {
            return Err(Error::data(format!("image size {height}x{width} not divisible by 8")));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::data(format!("label {bad} outside 0..{classes}")));
        }
        Ok(Dataset {
            images,
            labels,
            classes,
            channels,
            height,
            width,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.image_len();
        &self.images[i * n..(i + 1) * n]
    }

    /// Copies the selected samples into a contiguous batch.
    pub fn gather(&self, indices: &[usize]) -> (Vec<f32>, Vec<usize>) {
        let mut images = Vec::with_capacity(indices.len() * self.image_len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            images.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        (images, labels)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let (images, labels) = self.gather(indices);
        Dataset {
            images,
            labels,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Dataset {
        Dataset {
            images: Vec::new(),
            labels: Vec::new(),
            classes: self.classes,
            channels: self.channels,
            height: self.height,
            width: self.width,
            split: self.split,
        }
    }

    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by = vec![Vec::new(); self.classes];
        for (i, &y) in self.labels.iter().enumerate() {
            by[y].push(i);
        }
        by
    }

    /// Writes `<stem>.f32` (little-endian pixel array) and `<stem>.json` (header).
    pub fn export_raw(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut bytes = Vec::with_capacity(self.images.len() * 4);
        for v in &self.images {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::File::create(dir.join(format!("{stem}.f32")))?.write_all(&bytes)?;
        let header = RawHeader {
            count: self.len(),
            channels: self.channels,
            height: self.height,
            width: self.width,
            classes: self.classes,
            split: self.split,
            dtype: "f32le".into(),
            labels: self.labels.clone(),
        };
        fs::write(dir.join(format!("{stem}.json")), serde_json::to_vec_pretty(&header)?)?;
        Ok(())
    }

    pub fn import_raw(dir: &Path, stem: &str) -> Result<Self> {
        let header: RawHeader = serde_json::from_slice(&fs::read(dir.join(format!("{stem}.json")))?)?;
        if header.dtype != "f32le" {
            return Err(Error::Format(format!("unsupported dtype {}", header.dtype)));
        }
        let bytes = fs::read(dir.join(format!("{stem}.f32")))?;
        if bytes.len() % 4 != 0 {
            return Err(Error::Format("pixel file length not a multiple of 4".into()));
        }
        let images = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Dataset::new(
            images,
            header.labels,
            header.classes,
            header.channels,
            header.height,
            header.width,
            header.split,
        )
    }
}
