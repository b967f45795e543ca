//! CIFAR-10 binary batches: fixed 3073-byte records, one label byte followed
//! by the red, green and blue 32×32 planes.

use std::fs;
use std::path::Path;

use super::image::{Image, LabeledDataset};
use crate::error::{Error, Result};

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_CLASSES: usize = 10;
const PLANE: usize = CIFAR_SIDE * CIFAR_SIDE;
pub const CIFAR_RECORD_LEN: usize = 1 + 3 * PLANE;

/// Reads at most `limit` records (all of them when `limit` is `None`).
pub fn load_cifar10_binary(path: impl AsRef<Path>, limit: Option<usize>) -> Result<LabeledDataset> {
    let bytes = fs::read(path)?;
    parse_cifar10(&bytes, limit)
}

pub fn parse_cifar10(bytes: &[u8], limit: Option<usize>) -> Result<LabeledDataset> {
    let whole = bytes.len() / CIFAR_RECORD_LEN;
    if bytes.len() % CIFAR_RECORD_LEN != 0 {
        return Err(Error::Parse {
            offset: (whole * CIFAR_RECORD_LEN) as u64,
            reason: format!(
                "truncated record: {} trailing bytes, expected {CIFAR_RECORD_LEN}",
                bytes.len() % CIFAR_RECORD_LEN
            ),
        });
    }
    let count = limit.map_or(whole, |l| l.min(whole));
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for (r, record) in bytes.chunks_exact(CIFAR_RECORD_LEN).take(count).enumerate() {
        let label = record[0] as usize;
        if label >= CIFAR_CLASSES {
            return Err(Error::Parse {
                offset: (r * CIFAR_RECORD_LEN) as u64,
                reason: format!("label byte {label} is not a CIFAR-10 class"),
            });
        }
        let planes = &record[1..];
        let mut data = vec![0.0; 3 * PLANE];
        for p in 0..PLANE {
            for c in 0..3 {
                data[p * 3 + c] = planes[c * PLANE + p] as f64 / 255.0;
            }
        }
        images.push(Image::new(CIFAR_SIDE, CIFAR_SIDE, 3, data)?);
        labels.push(label);
    }
    LabeledDataset::new(images, labels, CIFAR_CLASSES)
}
