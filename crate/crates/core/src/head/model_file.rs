//! Trained-head bundle: a directory holding `head.json` plus one `FVS1`
//! file per parameter tensor (`w1` as input×hidden, `b1` 1×hidden,
//! `w2` hidden×1, `b2` 1×1).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HeadParameters, HeadShape, TrainConfig, TrainHistory};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::store::{feature_store_read, feature_store_write};

pub const HEAD_SCHEMA_VERSION: u32 = 1;
const ENVELOPE: &str = "head.json";
const TENSORS: [&str; 4] = ["w1", "b1", "w2", "b2"];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedHead {
    pub config: TrainConfig,
    pub metrics: TrainHistory,
    pub params: HeadParameters,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    schema_version: u32,
    config: TrainConfig,
    metrics: TrainHistory,
    shape: HeadShape,
    tensors: Vec<String>,
}

fn tensor_file(name: &str) -> String {
    format!("{name}.fvs")
}

pub fn save_head(dir: impl AsRef<Path>, head: &TrainedHead) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let shape = head.params.shape();
    let layouts = [
        (shape.hidden, shape.input),
        (shape.hidden, 1),
        (1, shape.hidden),
        (1, 1),
    ];
    for ((name, values), (dim, rows)) in TENSORS.iter().zip(head.params.tensors()).zip(layouts) {
        let data: Vec<f32> = values.iter().map(|&v| v as f32).collect();
        let m = FeatureMatrix::from_flat(dim, data)?;
        let ids: Vec<String> = (0..rows).map(|r| r.to_string()).collect();
        feature_store_write(dir.join(tensor_file(name)), &ids, &m)?;
    }
    let envelope = Envelope {
        schema_version: HEAD_SCHEMA_VERSION,
        config: head.config.clone(),
        metrics: head.metrics.clone(),
        shape,
        tensors: TENSORS.iter().map(|t| tensor_file(t)).collect(),
    };
    let path = dir.join(ENVELOPE);
    std::fs::write(&path, serde_json::to_vec_pretty(&envelope)?).map_err(|e| Error::io(&path, e))
}

pub fn load_head(dir: impl AsRef<Path>) -> Result<TrainedHead> {
    let dir = dir.as_ref();
    let path = dir.join(ENVELOPE);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let env: Envelope = serde_json::from_slice(&bytes)?;
    if env.schema_version != HEAD_SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported head schema_version {}",
            env.schema_version
        )));
    }
    let mut tensors = Vec::with_capacity(4);
    for name in TENSORS {
        let (_, m) = feature_store_read(dir.join(tensor_file(name)))?;
        tensors.push(m.as_slice().iter().map(|&v| v as f64).collect::<Vec<f64>>());
    }
    let b2 = match tensors[3].as_slice() {
        [b] => *b,
        _ => return Err(Error::Dimension("b2 must hold exactly one value".into())),
    };
    let mut it = tensors.into_iter();
    let (w1, b1, w2) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
    Ok(TrainedHead {
        config: env.config,
        metrics: env.metrics,
        params: HeadParameters::from_parts(env.shape, w1, b1, w2, b2)?,
    })
}
