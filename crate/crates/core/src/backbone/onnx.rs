//! Pretrained adapters backed by ONNX files (executed with tract).
//!
//! Backbone contract: one float input `[1, 3, S, S]` (NCHW, mean-subtracted
//! RGB) and two named outputs, `conv_features` (8192 values at S = 150) and
//! `fc2` (4096 values at S = 240). Detector contract: input `[1, 3, S, S]`
//! RGB scaled to [0, 1]; outputs `scores` `[N]` and `boxes` `[N, 4]` as
//! normalized `xmin, ymin, xmax, ymax`.

use std::path::Path;
use std::sync::Arc;

use image::imageops::FilterType;
use tract_onnx::prelude::*;

use super::{Backbone, ImageTensor};
use crate::detection::{Detection, Detector};
use crate::error::{Error, Result};
use crate::features::FeatureMode;

pub const CONV_OUTPUT: &str = "conv_features";
pub const FC2_OUTPUT: &str = "fc2";
pub const SCORES_OUTPUT: &str = "scores";
pub const BOXES_OUTPUT: &str = "boxes";
pub const DEFAULT_DETECTOR_INPUT: u32 = 640;

type Plan = Arc<TypedRunnableModel>;

fn model_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Model(format!("{}: {e}", path.display()))
}

fn read_model(path: &Path) -> Result<InferenceModel> {
    if !path.is_file() {
        return Err(Error::Model(format!("model file {} not found", path.display())));
    }
    tract_onnx::onnx().model_for_path(path).map_err(|e| model_err(path, e))
}

fn plan(model: &InferenceModel, path: &Path, size: u32, outputs: &[&str]) -> Result<Plan> {
    let s = size as usize;
    let mut m = model.clone();
    m.select_outputs_by_name(outputs.iter().copied())
        .map_err(|e| model_err(path, format!("missing output tap: {e}")))?;
    m.with_input_fact(0, f32::fact([1, 3, s, s]).into())
        .and_then(|m| m.into_optimized())
        .and_then(|m| m.into_runnable())
        .map_err(|e| model_err(path, e))
}

fn run(plan: &Plan, size: u32, chw: Vec<f32>) -> Result<TVec<TValue>> {
    let s = size as usize;
    let input = Tensor::from_shape(&[1, 3, s, s], &chw).map_err(|e| Error::Model(e.to_string()))?;
    plan.run(tvec!(input.into())).map_err(|e| Error::Model(e.to_string()))
}

fn floats(v: &TValue) -> Result<Vec<f32>> {
    v.to_plain_array_view::<f32>()
        .map(|a| a.iter().copied().collect())
        .map_err(|e| Error::Model(format!("output is not f32: {e}")))
}

pub struct OnnxBackbone {
    conv: Plan,
    fc2: Plan,
    conv_size: u32,
    fc2_size: u32,
}

impl OnnxBackbone {
    pub fn load(path: impl AsRef<Path>, conv_size: u32, fc2_size: u32) -> Result<Self> {
        let path = path.as_ref();
        let model = read_model(path)?;
        Ok(Self {
            conv: plan(&model, path, conv_size, &[CONV_OUTPUT])?,
            fc2: plan(&model, path, fc2_size, &[FC2_OUTPUT])?,
            conv_size,
            fc2_size,
        })
    }
}

impl Backbone for OnnxBackbone {
    fn name(&self) -> &'static str {
        "onnx"
    }

    fn input_size(&self, mode: FeatureMode) -> u32 {
        match mode {
            FeatureMode::Conv8192 => self.conv_size,
            FeatureMode::Fc2_4096 => self.fc2_size,
        }
    }

    fn forward(&self, batch: &[ImageTensor], mode: FeatureMode) -> Result<Vec<Vec<f32>>> {
        let (plan, size) = match mode {
            FeatureMode::Conv8192 => (&self.conv, self.conv_size),
            FeatureMode::Fc2_4096 => (&self.fc2, self.fc2_size),
        };
        batch
            .iter()
            .map(|t| {
                let out = run(plan, size, t.to_chw())?;
                floats(&out[0])
            })
            .collect()
    }
}

pub struct OnnxDetector {
    plan: Plan,
    size: u32,
}

impl OnnxDetector {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::load_with_size(path, DEFAULT_DETECTOR_INPUT)
    }

    pub fn load_with_size(path: impl AsRef<Path>, size: u32) -> Result<Self> {
        let path = path.as_ref();
        let model = read_model(path)?;
        Ok(Self {
            plan: plan(&model, path, size, &[SCORES_OUTPUT, BOXES_OUTPUT])?,
            size,
        })
    }
}

impl Detector for OnnxDetector {
    fn detect(&self, page_bytes: &[u8]) -> Result<Vec<Detection>> {
        let img = image::load_from_memory(page_bytes).map_err(|e| Error::Decode(e.to_string()))?;
        let rgb = img.resize_exact(self.size, self.size, FilterType::Triangle).to_rgb8();
        let plane = (self.size * self.size) as usize;
        let mut chw = vec![0.0f32; 3 * plane];
        for (i, px) in rgb.pixels().enumerate() {
            for c in 0..3 {
                chw[c * plane + i] = f32::from(px[c]) / 255.0;
            }
        }
        let out = run(&self.plan, self.size, chw)?;
        let scores = floats(&out[0])?;
        let boxes = floats(&out[1])?;
        if boxes.len() != scores.len() * 4 {
            return Err(Error::Model(format!(
                "{} scores but {} box coordinates",
                scores.len(),
                boxes.len()
            )));
        }
        Ok(scores
            .iter()
            .zip(boxes.chunks_exact(4))
            .map(|(&s, b)| Detection {
                score: f64::from(s),
                bbox: [b[0], b[1], b[2], b[3]].map(f64::from),
                class_name: "handwriting".into(),
            })
            .collect())
    }
}
