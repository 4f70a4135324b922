//! K-means over feature rows: k-means++ seeding, Lloyd iterations, restarts.
//!
//! Points are processed in a canonical order (sorted by content) so that
//! permuting the input permutes the assignments and nothing else.

mod gallery;

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub use gallery::{export_cluster_gallery, ClusterGallery, GalleryCluster, GalleryMember};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iterations: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k: 8,
            restarts: 10,
            max_iterations: 300,
            tolerance: 1e-4,
            seed: 0,
        }
    }
}

impl ClusterConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if self.restarts == 0 || self.max_iterations == 0 {
            return Err(Error::Config("restarts and max_iterations must be positive".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config("tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub dim: usize,
    /// `k × dim`, row-major.
    pub centroids: Vec<f64>,
    pub inertia: f64,
    /// Cluster index per input point, in input order.
    pub assignments: Vec<usize>,
    pub iterations_run: usize,
}

impl ClusterModel {
    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }
}

/// Per-restart diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub seed: u64,
    pub inertia: f64,
    /// Inertia after each assignment step, first to last.
    pub inertia_per_iteration: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub model: ClusterModel,
    pub runs: Vec<RunTrace>,
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid by squared distance; ties go to the lowest index.
fn nearest(point: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn total_cmp_rows(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Points widened to f64 and arranged in canonical (content-sorted) order.
struct Canonical {
    dim: usize,
    data: Vec<f64>,
    /// `order[c]` is the input index of canonical point `c`.
    order: Vec<usize>,
    distinct: usize,
}

impl Canonical {
    fn new(points: &FeatureMatrix) -> Self {
        let dim = points.dim();
        let wide: Vec<Vec<f64>> = points
            .iter_rows()
            .map(|r| r.iter().map(|&v| v as f64).collect())
            .collect();
        let mut order: Vec<usize> = (0..wide.len()).collect();
        order.sort_by(|&a, &b| total_cmp_rows(&wide[a], &wide[b]).then(a.cmp(&b)));
        let distinct = order
            .windows(2)
            .filter(|w| total_cmp_rows(&wide[w[0]], &wide[w[1]]).is_ne())
            .count()
            + usize::from(!order.is_empty());
        let data = order.iter().flat_map(|&i| wide[i].iter().copied()).collect();
        Self {
            dim,
            data,
            order,
            distinct,
        }
    }

    fn len(&self) -> usize {
        self.order.len()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Number of distinct points (compared exactly), the upper bound on `k`.
pub fn distinct_points(points: &FeatureMatrix) -> usize {
    Canonical::new(points).distinct
}

fn check_distinct(distinct: usize, k: usize) -> Result<()> {
    if distinct < k {
        return Err(Error::DegenerateData(format!(
            "k = {k} exceeds the {distinct} distinct points"
        )));
    }
    Ok(())
}

fn seed_centroids(pts: &Canonical, k: usize, seed: u64) -> Vec<f64> {
    let n = pts.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = Vec::with_capacity(k * pts.dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(pts.point(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(pts.point(i), pts.point(first))).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        // with at least k distinct points the total is positive here
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            acc += d;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        let pick = pick.expect("a point at positive distance exists");
        centroids.extend_from_slice(pts.point(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(pts.point(i), pts.point(pick)));
        }
    }
    centroids
}

/// k-means++ seeding: first centroid uniform, each next one drawn with
/// probability proportional to squared distance from the nearest chosen one.
pub fn kmeanspp_init(points: &FeatureMatrix, k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    let pts = Canonical::new(points);
    check_distinct(pts.distinct, k)?;
    Ok(seed_centroids(&pts, k, seed)
        .chunks_exact(pts.dim)
        .map(<[f64]>::to_vec)
        .collect())
}

struct Run {
    centroids: Vec<f64>,
    labels: Vec<usize>,
    inertia: f64,
    iterations: usize,
    trace: Vec<f64>,
}

fn assign_all(pts: &Canonical, centroids: &[f64], labels: &mut [usize], dists: &mut [f64]) -> f64 {
    for i in 0..pts.len() {
        let (c, d) = nearest(pts.point(i), centroids, pts.dim);
        labels[i] = c;
        dists[i] = d;
    }
    dists.iter().sum()
}

fn lloyd(pts: &Canonical, config: &ClusterConfig, mut centroids: Vec<f64>) -> Run {
    let (n, dim) = (pts.len(), pts.dim);
    let k = centroids.len() / dim;
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let inertia = assign_all(pts, &centroids, &mut labels, &mut dists);
        trace.push(inertia);
        if iterations == config.max_iterations {
            break;
        }
        iterations += 1;

        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = labels[i];
            counts[c] += 1;
            for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(pts.point(i)) {
                *s += x;
            }
        }
        let mut next = centroids.clone();
        for c in 0..k {
            if counts[c] > 0 {
                for (dst, &s) in next[c * dim..(c + 1) * dim].iter_mut().zip(&sums[c * dim..]) {
                    *dst = s / counts[c] as f64;
                }
            }
        }
        // an emptied cluster takes over the point farthest from its centroid
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                .expect("nonempty");
            next[c * dim..(c + 1) * dim].copy_from_slice(pts.point(far));
            counts[labels[far]] -= 1;
            labels[far] = c;
            counts[c] = 1;
            dists[far] = 0.0;
        }
        let shift = next
            .chunks_exact(dim)
            .zip(centroids.chunks_exact(dim))
            .map(|(a, b)| sq_dist(a, b))
            .fold(0.0, f64::max)
            .sqrt();
        centroids = next;
        if shift < config.tolerance {
            let inertia = assign_all(pts, &centroids, &mut labels, &mut dists);
            trace.push(inertia);
            break;
        }
    }
    Run {
        inertia: *trace.last().unwrap(),
        centroids,
        labels,
        iterations,
        trace,
    }
}

/// Best-of-`restarts` k-means with the per-restart traces.
pub fn kmeans_fit_report(points: &FeatureMatrix, config: &ClusterConfig) -> Result<FitReport> {
    config.validate()?;
    if points.rows() == 0 {
        return Err(Error::DegenerateData("no points to cluster".into()));
    }
    let pts = Canonical::new(points);
    check_distinct(pts.distinct, config.k)?;
    let runs: Vec<(u64, Run)> = (0..config.restarts as u64)
        .into_par_iter()
        .map(|r| {
            let seed = config.seed.wrapping_add(r);
            (seed, lloyd(&pts, config, seed_centroids(&pts, config.k, seed)))
        })
        .collect();
    // lowest restart index wins ties
    let best = runs
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.1.inertia.total_cmp(&b.1.inertia).then(ia.cmp(ib)))
        .map(|(i, _)| i)
        .unwrap();
    let mut assignments = vec![0; pts.len()];
    for (c, &input) in pts.order.iter().enumerate() {
        assignments[input] = runs[best].1.labels[c];
    }
    let chosen = &runs[best].1;
    let model = ClusterModel {
        k: config.k,
        dim: pts.dim,
        centroids: chosen.centroids.clone(),
        inertia: chosen.inertia,
        assignments,
        iterations_run: chosen.iterations,
    };
    let runs = runs
        .into_iter()
        .map(|(seed, r)| RunTrace {
            seed,
            inertia: r.inertia,
            inertia_per_iteration: r.trace,
        })
        .collect();
    Ok(FitReport { model, runs })
}

pub fn kmeans_fit(points: &FeatureMatrix, config: &ClusterConfig) -> Result<ClusterModel> {
    kmeans_fit_report(points, config).map(|r| r.model)
}

/// Nearest-centroid labels (ties → lowest index) and Euclidean distances.
pub fn assign_points(model: &ClusterModel, points: &FeatureMatrix) -> Result<(Vec<usize>, Vec<f64>)> {
    if points.rows() > 0 && points.dim() != model.dim {
        return Err(Error::Dimension(format!(
            "points have {} dims, centroids {}",
            points.dim(),
            model.dim
        )));
    }
    Ok(points
        .iter_rows()
        .map(|r| {
            let wide: Vec<f64> = r.iter().map(|&v| v as f64).collect();
            let (c, d2) = nearest(&wide, &model.centroids, model.dim);
            (c, d2.sqrt())
        })
        .unzip())
}
