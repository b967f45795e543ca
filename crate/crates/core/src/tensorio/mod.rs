//! Dataset ingestion, image containers and artifact persistence.

mod bundle;
mod cifar;
mod image;
mod synth;

pub use bundle::{
    load_bundle, save_bundle, ArrayData, ArtifactBundle, Dtype, NdArray, FORMAT_VERSION, MAGIC,
};
pub use cifar::{load_cifar10_binary, parse_cifar10, CIFAR_CLASSES, CIFAR_RECORD_LEN, CIFAR_SIDE};
pub use image::{Image, LabeledDataset};
pub use synth::{generate, generate_synthetic_dataset, SynthParams, SHAPE_FAMILIES};

use crate::error::{shape_mismatch, Error, Result};

pub const DATASET_KIND: &str = "dataset";

impl LabeledDataset {
    /// Packs images as one `(N, H, W, C)` f64 array plus a label array.
    pub fn to_bundle(&self) -> Result<ArtifactBundle> {
        let (h, w, c) = self.image_shape().unwrap_or((0, 0, 0));
        let mut pixels = Vec::with_capacity(self.len() * h * w * c);
        for im in self.images() {
            pixels.extend_from_slice(im.data());
        }
        let mut bundle = ArtifactBundle::new();
        bundle
            .set_meta("kind", DATASET_KIND)
            .set_meta("class_count", self.class_count() as u64)
            .set_meta("count", self.len() as u64);
        bundle.insert("images", NdArray::f64(vec![self.len(), h, w, c], pixels)?);
        bundle.insert(
            "labels",
            NdArray::u64(
                vec![self.len()],
                self.labels().iter().map(|&l| l as u64).collect(),
            )?,
        );
        Ok(bundle)
    }

    /// Inverse of [`LabeledDataset::to_bundle`]; out-of-range pixels are
    /// rejected rather than clamped.
    pub fn from_bundle(bundle: &ArtifactBundle) -> Result<Self> {
        bundle.expect_kind(DATASET_KIND)?;
        let class_count = bundle.meta_usize("class_count")?;
        let (shape, pixels) = bundle.f64_array("images")?;
        let (lshape, labels) = bundle.u64_array("labels")?;
        if shape.len() != 4 || lshape.len() != 1 || lshape[0] != shape[0] {
            return Err(shape_mismatch(
                "images (N, H, W, C) with N labels",
                format!("{shape:?} and {lshape:?}"),
            ));
        }
        let (n, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
        let stride = h * w * c;
        let images = (0..n)
            .map(|i| Image::new(h, w, c, pixels[i * stride..(i + 1) * stride].to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let labels = labels
            .iter()
            .map(|&l| usize::try_from(l).map_err(|_| Error::Format("label overflow".into())))
            .collect::<Result<Vec<_>>>()?;
        LabeledDataset::new(images, labels, class_count)
    }
}
