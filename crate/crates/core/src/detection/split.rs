use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::voc::AnnotationRow;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<AnnotationRow>,
    pub test: Vec<AnnotationRow>,
}

impl Split {
    /// Distinct filenames on one side, in first-appearance order.
    pub fn filenames(rows: &[AnnotationRow]) -> Vec<String> {
        let mut seen = HashSet::new();
        rows.iter()
            .filter(|r| seen.insert(r.filename.as_str()))
            .map(|r| r.filename.clone())
            .collect()
    }

    /// Newline-delimited filename list, as written to `train.txt`/`test.txt`.
    pub fn manifest_text(rows: &[AnnotationRow]) -> String {
        Self::filenames(rows).into_iter().map(|f| f + "\n").collect()
    }
}

/// Image-level train/test split: every row of a filename lands on the same
/// side. The test side gets `round(test_fraction × filenames)` filenames
/// drawn by a seeded shuffle; rows keep their input order on both sides.
pub fn split_rows(rows: &[AnnotationRow], test_fraction: f64, seed: u64) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test_fraction {test_fraction} must be in (0, 1)")));
    }
    if rows.is_empty() {
        return Err(Error::Validation("cannot split an empty annotation table".into()));
    }
    let mut names = Split::filenames(rows);
    let n_test = (test_fraction * names.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    names.shuffle(&mut rng);
    let test: HashSet<&str> = names[..n_test].iter().map(String::as_str).collect();
    let (test_rows, train_rows) = rows.iter().cloned().partition(|r| test.contains(r.filename.as_str()));
    Ok(Split {
        train: train_rows,
        test: test_rows,
    })
}
