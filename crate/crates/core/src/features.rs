use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature extraction mode of the backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureMode {
    /// Flattened final convolutional map, 4×4×512 at a 150×150 input.
    #[serde(rename = "conv8192", alias = "conv")]
    Conv8192,
    /// Activations of the second fully connected layer.
    #[serde(rename = "fc2_4096", alias = "fc2")]
    Fc2_4096,
}

impl FeatureMode {
    pub const fn dim(self) -> usize {
        match self {
            FeatureMode::Conv8192 => 8192,
            FeatureMode::Fc2_4096 => 4096,
        }
    }

    /// Default square input size in pixels.
    pub const fn input_size(self) -> u32 {
        match self {
            FeatureMode::Conv8192 => 150,
            FeatureMode::Fc2_4096 => 240,
        }
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            FeatureMode::Conv8192 => "conv8192",
            FeatureMode::Fc2_4096 => "fc2_4096",
        }
    }
}

impl std::fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv" | "conv8192" => Ok(FeatureMode::Conv8192),
            "fc2" | "fc2_4096" => Ok(FeatureMode::Fc2_4096),
            other => Err(Error::Config(format!("unknown feature mode `{other}`"))),
        }
    }
}

/// A single image's feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub image_id: String,
    pub mode: FeatureMode,
    pub values: Vec<f32>,
}

/// Dense row-major matrix of `f32` feature rows sharing one dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        Self {
            dim,
            data: Vec::with_capacity(dim * rows),
        }
    }

    pub fn from_flat(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            if !data.is_empty() {
                return Err(Error::Dimension("zero-dimension matrix with data".into()));
            }
        } else if data.len() % dim != 0 {
            return Err(Error::Dimension(format!(
                "{} values do not divide into rows of {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f32]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut m = Self::with_capacity(dim, rows.len());
        for row in rows {
            m.push_row(row.as_ref())?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[f32]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::Dimension(format!(
                "row has {} values, matrix dimension is {}",
                row.len(),
                self.dim
            )));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        // chunks_exact panics on a zero chunk size
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Rows at the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut out = Self::with_capacity(self.dim, indices.len());
        for &i in indices {
            out.data.extend_from_slice(self.row(i));
        }
        out
    }
}
