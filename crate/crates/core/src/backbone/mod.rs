//! Image preprocessing and deep-feature extraction.
//!
//! Tensors are laid out height × width × channel (channel-minor), RGB order,
//! with the per-channel mean already subtracted from 0–255 pixel values.

mod mock;
pub mod onnx;

use std::path::PathBuf;

use image::imageops::FilterType;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureMode};

pub use mock::{mock_features, mock_vector, MockBackbone};
pub use onnx::OnnxBackbone;

/// ImageNet training means of the VGG family, RGB order.
pub const DEFAULT_MEANS: [f32; 3] = [123.68, 116.779, 103.939];
pub const DEFAULT_BATCH_SIZE: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    size: u32,
    values: Vec<f32>,
}

impl ImageTensor {
    pub fn from_hwc(size: u32, values: Vec<f32>) -> Result<Self> {
        let expected = size as usize * size as usize * 3;
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "{} values for a {size}×{size}×3 tensor",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidImage("non-finite tensor value".into()));
        }
        Ok(Self { size, values })
    }

    /// (height, width, channels)
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.size as usize, self.size as usize, 3)
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Channel-major copy (3 × H × W), as most exported networks expect.
    pub fn to_chw(&self) -> Vec<f32> {
        let hw = self.size as usize * self.size as usize;
        let mut out = vec![0.0; hw * 3];
        for (p, px) in self.values.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * hw + p] = px[c];
            }
        }
        out
    }
}

/// Resizing and normalization settings shared by every backbone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub conv_input_size: u32,
    pub fc2_input_size: u32,
    pub means: [f32; 3],
}

impl Default for Preprocessor {
    fn default() -> Self {
        Self {
            conv_input_size: FeatureMode::Conv8192.input_size(),
            fc2_input_size: FeatureMode::Fc2_4096.input_size(),
            means: DEFAULT_MEANS,
        }
    }
}

impl Preprocessor {
    pub fn input_size(&self, mode: FeatureMode) -> u32 {
        match mode {
            FeatureMode::Conv8192 => self.conv_input_size,
            FeatureMode::Fc2_4096 => self.fc2_input_size,
        }
    }

    /// Decode, squash to the mode's square size with bilinear filtering,
    /// force RGB, subtract channel means.
    pub fn preprocess(&self, image_bytes: &[u8], mode: FeatureMode) -> Result<ImageTensor> {
        let img = image::load_from_memory(image_bytes).map_err(|e| Error::Decode(e.to_string()))?;
        if img.width() == 0 || img.height() == 0 {
            return Err(Error::InvalidImage(format!(
                "zero-area image {}×{}",
                img.width(),
                img.height()
            )));
        }
        let size = self.input_size(mode);
        let rgb = img.to_rgb8();
        let resized = image::imageops::resize(&rgb, size, size, FilterType::Triangle);
        let values = resized
            .pixels()
            .flat_map(|p| {
                let [r, g, b] = p.0;
                [
                    r as f32 - self.means[0],
                    g as f32 - self.means[1],
                    b as f32 - self.means[2],
                ]
            })
            .collect();
        ImageTensor::from_hwc(size, values)
    }
}

/// Preprocess with default sizes (150 conv, 240 fc2) and means.
pub fn preprocess(image_bytes: &[u8], mode: FeatureMode) -> Result<ImageTensor> {
    Preprocessor::default().preprocess(image_bytes, mode)
}

/// A network that maps preprocessed tensors to feature rows.
pub trait Backbone: Send + Sync {
    fn name(&self) -> &'static str;

    /// Square input size this backbone expects for `mode`.
    fn input_size(&self, mode: FeatureMode) -> u32;

    /// One feature row per tensor, in order.
    fn forward(&self, batch: &[ImageTensor], mode: FeatureMode) -> Result<Vec<Vec<f32>>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    Pretrained,
    Mock,
}

impl std::str::FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrained" | "onnx" => Ok(BackboneKind::Pretrained),
            "mock" => Ok(BackboneKind::Mock),
            other => Err(Error::Config(format!("unknown backbone kind `{other}`"))),
        }
    }
}

/// Adapter configuration (`backbone.*` config keys).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub kind: BackboneKind,
    #[serde(default)]
    pub model_path: Option<PathBuf>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_means")]
    pub means: [f32; 3],
    /// Seed for the mock adapter.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_conv_size")]
    pub conv_input_size: u32,
    #[serde(default = "default_fc2_size")]
    pub fc2_input_size: u32,
}

fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}
fn default_means() -> [f32; 3] {
    DEFAULT_MEANS
}
fn default_conv_size() -> u32 {
    FeatureMode::Conv8192.input_size()
}
fn default_fc2_size() -> u32 {
    FeatureMode::Fc2_4096.input_size()
}

impl BackboneConfig {
    pub fn mock(seed: u64) -> Self {
        Self {
            kind: BackboneKind::Mock,
            model_path: None,
            batch_size: DEFAULT_BATCH_SIZE,
            means: DEFAULT_MEANS,
            seed,
            conv_input_size: default_conv_size(),
            fc2_input_size: default_fc2_size(),
        }
    }

    pub fn pretrained(model_path: impl Into<PathBuf>) -> Self {
        Self {
            kind: BackboneKind::Pretrained,
            model_path: Some(model_path.into()),
            ..Self::mock(0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, &self.model_path) {
            (BackboneKind::Pretrained, None) => {
                return Err(Error::Config("pretrained backbone requires model_path".into()))
            }
            (BackboneKind::Mock, Some(_)) => {
                return Err(Error::Config("mock backbone does not take a model_path".into()))
            }
            _ => {}
        }
        if self.batch_size == 0 {
            return Err(Error::Config("backbone.batch_size must be positive".into()));
        }
        if self.conv_input_size == 0 || self.fc2_input_size == 0 {
            return Err(Error::Config("input sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn preprocessor(&self) -> Preprocessor {
        Preprocessor {
            conv_input_size: self.conv_input_size,
            fc2_input_size: self.fc2_input_size,
            means: self.means,
        }
    }

    pub fn build(&self) -> Result<Box<dyn Backbone>> {
        self.validate()?;
        Ok(match self.kind {
            BackboneKind::Mock => Box::new(MockBackbone::new(self.seed).with_sizes(self.conv_input_size, self.fc2_input_size)),
            BackboneKind::Pretrained => Box::new(OnnxBackbone::load(
                self.model_path.as_ref().expect("validated"),
                self.conv_input_size,
                self.fc2_input_size,
            )?),
        })
    }
}

/// Runs `tensors` through `backbone` in batches, preserving input order.
pub fn extract_features(
    tensors: &[ImageTensor],
    backbone: &dyn Backbone,
    mode: FeatureMode,
    batch_size: usize,
) -> Result<FeatureMatrix> {
    let expected = backbone.input_size(mode);
    if let Some((i, t)) = tensors.iter().enumerate().find(|(_, t)| t.size() != expected) {
        return Err(Error::Dimension(format!(
            "tensor {i} is {0}×{0}×3, {mode} expects {expected}×{expected}×3",
            t.size()
        )));
    }
    let batches: Vec<Vec<Vec<f32>>> = tensors
        .par_chunks(batch_size.max(1))
        .map(|batch| backbone.forward(batch, mode))
        .collect::<Result<_>>()?;
    let mut out = FeatureMatrix::with_capacity(mode.dim(), tensors.len());
    for row in batches.into_iter().flatten() {
        if row.len() != mode.dim() {
            return Err(Error::Dimension(format!(
                "{} produced {} features, {mode} requires {}",
                backbone.name(),
                row.len(),
                mode.dim()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model(format!("{} produced a non-finite feature", backbone.name())));
        }
        out.push_row(&row)?;
    }
    Ok(out)
}

/// Spatial size after the five stride-2 pooling stages of the conv stack.
pub fn conv_output_side(input: u32) -> u32 {
    (0..5).fold(input, |s, _| s / 2)
}
