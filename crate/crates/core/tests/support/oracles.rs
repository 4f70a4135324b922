//! Independent reference computations for the property and acceptance tests.
//! Nothing here calls the code it checks.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use reviewlens_core::detection::{Detection, DocumentDetections, PageDetections, VocAnnotation, VocObject};
use reviewlens_core::head::HeadParameters;
use reviewlens_core::FeatureMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard-normal features with random labels (both classes present).
pub fn normal_batch(seed: u64, n: usize, dim: usize) -> (FeatureMatrix, Vec<bool>) {
    let mut r = rng(seed);
    let data: Vec<f32> = (0..n * dim).map(|_| StandardNormal.sample(&mut r)).collect();
    let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.5)).collect();
    labels[0] = true;
    labels[n - 1] = false;
    (FeatureMatrix::from_flat(dim, data).unwrap(), labels)
}

/// Balanced two-class set: class means ±0.1 in every coordinate, σ = 0.05.
/// Rows alternate positive, negative.
pub fn two_gaussians(seed: u64, n: usize, dim: usize) -> (FeatureMatrix, Vec<bool>) {
    let mut r = rng(seed);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let positive = i % 2 == 0;
        let mean = if positive { 0.1 } else { -0.1 };
        data.extend((0..dim).map(|_| (mean + noise.sample(&mut r)) as f32));
        labels.push(positive);
    }
    (FeatureMatrix::from_flat(dim, data).unwrap(), labels)
}

/// `softplus(z + d) - softplus(z - d)` without subtracting two rounded losses.
fn softplus_gap(z: f64, d: f64) -> f64 {
    let sig = 1.0 / (1.0 + (d - z).exp());
    (sig * (2.0 * d).exp_m1()).ln_1p()
}

/// `row_loss(z + d) - row_loss(z - d)` for the unclamped BCE, where the loss
/// is softplus(z) for a negative and softplus(-z) for a positive.
fn loss_gap(z: f64, d: f64, y: bool) -> f64 {
    if y {
        -softplus_gap(-z, d)
    } else {
        softplus_gap(z, d)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FdReport {
    pub checked: usize,
    /// Coordinates whose perturbation crosses a relu kink.
    pub skipped: usize,
    pub max_rel: f64,
}

impl FdReport {
    fn record(&mut self, analytic: f64, numeric: f64) {
        self.checked += 1;
        let scale = analytic.abs().max(numeric.abs());
        // both effectively zero: nothing to compare
        if scale < 1e-10 {
            return;
        }
        self.max_rel = self.max_rel.max((analytic - numeric).abs() / scale);
    }
}

/// Central finite differences for every head parameter.
///
/// The forward pass is done once here, naively and in f64. A perturbation
/// of one parameter only moves one hidden pre-activation (or the output
/// logit) per row, so each perturbed loss is an O(rows) update of the
/// cached values instead of a full forward pass.
pub fn finite_difference_check(params: &HeadParameters, x: &FeatureMatrix, y: &[bool], analytic: &HeadParameters, h: f64) -> FdReport {
    let shape = params.shape();
    let (d, hid, n) = (shape.input, shape.hidden, x.rows());
    let mut pre = vec![0.0f64; n * hid];
    for r in 0..n {
        let row = x.row(r);
        for j in 0..hid {
            let mut s = params.b1[j];
            for i in 0..d {
                s += row[i] as f64 * params.w1[i * hid + j];
            }
            pre[r * hid + j] = s;
        }
    }
    let relu = |v: f64| v.max(0.0);
    let z: Vec<f64> = (0..n)
        .map(|r| params.b2 + (0..hid).map(|j| relu(pre[r * hid + j]) * params.w2[j]).sum::<f64>())
        .collect();
    // keep clear of the probability clamp, where the loss is flat
    assert!(z.iter().all(|z| z.abs() < 15.0), "logits too large for an unclamped oracle");
    // central difference of the mean loss, given each row's logit shift for +h
    let diff = |shift: &dyn Fn(usize) -> f64| -> f64 {
        (0..n).map(|r| loss_gap(z[r], shift(r), y[r])).sum::<f64>() / n as f64 / (2.0 * h)
    };
    let mut report = FdReport::default();

    report.record(analytic.b2, diff(&|_| h));
    for j in 0..hid {
        report.record(analytic.w2[j], diff(&|r| h * relu(pre[r * hid + j])));
    }
    // with no kink in (pre - step, pre + step) the logit moves by w2 * step
    // on active units and not at all on inactive ones
    let active = |r: usize, j: usize| pre[r * hid + j] > 0.0;
    let crosses = |j: usize, step: &dyn Fn(usize) -> f64| (0..n).any(|r| pre[r * hid + j].abs() <= step(r).abs());
    for j in 0..hid {
        if crosses(j, &|_| h) {
            report.skipped += 1;
            continue;
        }
        report.record(analytic.b1[j], diff(&|r| if active(r, j) { params.w2[j] * h } else { 0.0 }));
    }
    for i in 0..d {
        for j in 0..hid {
            let step = |r: usize| h * x.row(r)[i] as f64;
            if crosses(j, &step) {
                report.skipped += 1;
                continue;
            }
            report.record(
                analytic.w1[i * hid + j],
                diff(&|r| if active(r, j) { params.w2[j] * step(r) } else { 0.0 }),
            );
        }
    }
    report
}

/// Minimum k-means objective over every assignment of points to at most `k`
/// groups, by enumerating all k^n labelings.
pub fn exhaustive_inertia(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let dim = points[0].len();
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; n];
    loop {
        let mut cost = 0.0;
        for c in 0..k {
            let members: Vec<&Vec<f64>> = (0..n).filter(|&p| labels[p] == c).map(|p| &points[p]).collect();
            if members.is_empty() {
                continue;
            }
            let centroid: Vec<f64> = (0..dim)
                .map(|t| members.iter().map(|m| m[t]).sum::<f64>() / members.len() as f64)
                .collect();
            cost += members
                .iter()
                .map(|m| m.iter().zip(&centroid).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .sum::<f64>();
        }
        best = best.min(cost);
        // next labeling, odometer style
        let mut pos = 0;
        loop {
            if pos == n {
                return best;
            }
            labels[pos] += 1;
            if labels[pos] < k {
                break;
            }
            labels[pos] = 0;
            pos += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tally {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

/// Counts outcomes one item at a time; positive means score ≥ cutoff.
pub fn tally(items: &[(f64, bool)], cutoff: f64) -> Tally {
    let mut t = Tally { tp: 0, fp: 0, fn_: 0, tn: 0 };
    for &(score, truth) in items {
        match (score >= cutoff, truth) {
            (true, true) => t.tp += 1,
            (true, false) => t.fp += 1,
            (false, true) => t.fn_ += 1,
            (false, false) => t.tn += 1,
        }
    }
    t
}

pub fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// (precision, recall, f1, accuracy) from a tally.
pub fn tally_metrics(t: Tally) -> (f64, f64, f64, f64) {
    let p = ratio(t.tp, t.tp + t.fp);
    let r = ratio(t.tp, t.tp + t.fn_);
    (p, r, f1(p, r), ratio(t.tp + t.tn, t.tp + t.fp + t.fn_ + t.tn))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// PascalVOC XML for an annotation, with some decoration the parser must skip.
pub fn voc_xml(a: &VocAnnotation) -> String {
    let mut s = String::from("<?xml version=\"1.0\"?>\n<annotation>\n  <folder>images</folder>\n");
    s += &format!("  <filename>{}</filename>\n", escape(&a.filename));
    s += &format!(
        "  <size><width>{}</width><height>{}</height><depth>3</depth></size>\n  <segmented>0</segmented>\n",
        a.width, a.height
    );
    for o in &a.objects {
        s += &format!(
            "  <object>\n    <name>{}</name>\n    <pose>Unspecified</pose>\n    <difficult>0</difficult>\n    \
             <bndbox><xmin>{}</xmin><ymin>{}</ymin><xmax>{}</xmax><ymax>{}</ymax></bndbox>\n  </object>\n",
            escape(&o.class_name),
            o.xmin,
            o.ymin,
            o.xmax,
            o.ymax
        );
    }
    s + "</annotation>\n"
}

fn token(r: &mut impl Rng) -> String {
    const CHARS: &[char] = &['a', 'b', 'z', 'Q', '0', '7', '_', '-', '.', ',', '"', '&', '<', ' ', 'é', '/'];
    loop {
        let len = r.random_range(1..10);
        let s: String = (0..len).map(|_| CHARS[r.random_range(0..CHARS.len())]).collect();
        if s.trim() == s {
            return s;
        }
    }
}

pub fn random_annotation(r: &mut impl Rng, index: usize) -> VocAnnotation {
    let width = r.random_range(1..2000);
    let height = r.random_range(1..2000);
    let objects = (0..r.random_range(0..5))
        .filter(|_| width > 1 && height > 1)
        .map(|_| {
            let xmin = r.random_range(0..width - 1);
            let ymin = r.random_range(0..height - 1);
            VocObject {
                class_name: token(r),
                xmin,
                ymin,
                xmax: r.random_range(xmin + 1..=width),
                ymax: r.random_range(ymin + 1..=height),
            }
        })
        .collect();
    VocAnnotation {
        filename: format!("{}-{index}.jpg", token(r)),
        width,
        height,
        objects,
    }
}

pub fn random_detection(r: &mut impl Rng) -> Detection {
    let x0 = r.random_range(0.0..0.9);
    let y0 = r.random_range(0.0..0.9);
    Detection {
        score: r.random_range(0.0..=1.0),
        bbox: [x0, y0, r.random_range(x0 + 0.01..=1.0), r.random_range(y0 + 0.01..=1.0)],
        class_name: "handwriting".into(),
    }
}

/// A valid document with 0–6 pages, some without detections.
pub fn random_document(r: &mut impl Rng, id: usize) -> DocumentDetections {
    let page_count = r.random_range(0..7u32);
    let mut indices: Vec<u32> = (0..page_count).collect();
    indices.shuffle(r);
    let pages = indices
        .into_iter()
        .take(r.random_range(0..=page_count as usize))
        .map(|page_index| PageDetections {
            page_index,
            detections: (0..r.random_range(0..4)).map(|_| random_detection(r)).collect(),
        })
        .collect();
    DocumentDetections {
        doc_id: format!("doc-{id}"),
        page_count,
        pages,
    }
}

/// Largest detection score by plain iteration, 0.0 when there is none.
pub fn max_score(doc: &DocumentDetections) -> f64 {
    let mut best = 0.0;
    for p in &doc.pages {
        for d in &p.detections {
            if d.score > best {
                best = d.score;
            }
        }
    }
    best
}
