use ndarray::{Array2, Array3, ArrayView3};

use crate::error::{invalid, shape_mismatch, Error, Result};

/// A height × width × channels image with interleaved (HWC) storage and
/// intensities in the unit interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    /// Builds an image, rejecting out-of-range or non-finite intensities.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return invalid("image dimensions must be positive");
        }
        if channels != 1 && channels != 3 {
            return invalid(format!("channels must be 1 or 3, got {channels}"));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(shape_mismatch(
                format!("{height}x{width}x{channels} = {expected} values"),
                data.len(),
            ));
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::OutOfRange { index, value });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds an image by clamping every value into `[0, 1]`.
    ///
    /// Non-finite values are still rejected.
    pub fn from_clamped(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::OutOfRange {
                index,
                value: data[index],
            });
        }
        let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Self::new(height, width, channels, data)
    }

    /// Clamps an `(H, W, C)` array into a valid image.
    pub fn from_array_clamped(array: &Array3<f64>) -> Result<Self> {
        let (h, w, c) = array.dim();
        Self::from_clamped(h, w, c, array.iter().copied().collect())
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    /// `(H, W, C)` view over the pixel data.
    pub fn view(&self) -> ArrayView3<'_, f64> {
        ArrayView3::from_shape((self.height, self.width, self.channels), &self.data)
            .expect("image storage matches its shape")
    }

    pub fn to_array(&self) -> Array3<f64> {
        self.view().to_owned()
    }

    /// Copies one channel out as an `(H, W)` plane.
    pub fn plane(&self, channel: usize) -> Array2<f64> {
        Array2::from_shape_fn((self.height, self.width), |(i, j)| self.get(i, j, channel))
    }
}

/// Images paired with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    images: Vec<Image>,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledDataset {
    pub fn new(images: Vec<Image>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(shape_mismatch(
                format!("{} labels", images.len()),
                labels.len(),
            ));
        }
        if class_count == 0 {
            return invalid("class_count must be positive");
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return invalid(format!(
                "label {bad} is not below class_count {class_count}"
            ));
        }
        if let Some(first) = images.first() {
            let shape = first.shape();
            if let Some(other) = images.iter().find(|im| im.shape() != shape) {
                return Err(shape_mismatch(
                    format!("{shape:?}"),
                    format!("{:?}", other.shape()),
                ));
            }
        }
        Ok(Self {
            images,
            labels,
            class_count,
        })
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `(H, W, C)` of the stored images, or `None` for an empty dataset.
    pub fn image_shape(&self) -> Option<(usize, usize, usize)> {
        self.images.first().map(Image::shape)
    }

    /// Indices of the samples carrying `class_id`, in storage order.
    pub fn indices_of_class(&self, class_id: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class_id)
            .map(|(i, _)| i)
            .collect()
    }

    /// Keeps the samples at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }
}
