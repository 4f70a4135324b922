use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{Backbone, ImageTensor};
use crate::error::Result;
use crate::features::{FeatureMode, FeatureVector};

/// Deterministic unit-norm pseudo-random vector keyed by (content, mode, seed).
pub fn mock_vector(bytes: &[u8], mode: FeatureMode, seed: u64) -> Vec<f32> {
    let mut h = Sha256::new();
    h.update(b"reviewlens-mock\0");
    h.update(mode.as_str().as_bytes());
    h.update(seed.to_le_bytes());
    h.update(bytes);
    let key: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(key);
    let raw: Vec<f64> = (0..mode.dim())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.into_iter().map(|v| (v / norm) as f32).collect()
}

pub fn mock_features(image_id: impl Into<String>, bytes: &[u8], mode: FeatureMode, seed: u64) -> FeatureVector {
    FeatureVector {
        image_id: image_id.into(),
        mode,
        values: mock_vector(bytes, mode, seed),
    }
}

/// Offline stand-in for the pretrained network: hashes each tensor's values.
#[derive(Debug, Clone)]
pub struct MockBackbone {
    seed: u64,
    conv_size: u32,
    fc2_size: u32,
}

impl MockBackbone {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            conv_size: FeatureMode::Conv8192.input_size(),
            fc2_size: FeatureMode::Fc2_4096.input_size(),
        }
    }

    pub fn with_sizes(mut self, conv: u32, fc2: u32) -> Self {
        self.conv_size = conv;
        self.fc2_size = fc2;
        self
    }
}

impl Backbone for MockBackbone {
    fn name(&self) -> &'static str {
        "mock"
    }

    fn input_size(&self, mode: FeatureMode) -> u32 {
        match mode {
            FeatureMode::Conv8192 => self.conv_size,
            FeatureMode::Fc2_4096 => self.fc2_size,
        }
    }

    fn forward(&self, batch: &[ImageTensor], mode: FeatureMode) -> Result<Vec<Vec<f32>>> {
        Ok(batch
            .iter()
            .map(|t| {
                let bytes: Vec<u8> = t.values().iter().flat_map(|v| v.to_le_bytes()).collect();
                mock_vector(&bytes, mode, self.seed)
            })
            .collect())
    }
}
