//! Registration and segmentation quality metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Mask2;

/// One annotated point pair in the pixel frame shared by a photo and its
/// registered CT slice. Pairing is positional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotationPair {
    pub photo: [f64; 2],
    pub ct: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub slice: usize,
    pub pixel_size_mm: f64,
    pub pairs: Vec<AnnotationPair>,
}

impl AnnotationSet {
    pub fn new(slice: usize, pixel_size_mm: f64, pairs: Vec<AnnotationPair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidInput("annotation set has no pairs".into()));
        }
        if !(pixel_size_mm > 0.0 && pixel_size_mm.is_finite()) {
            return Err(Error::InvalidInput(format!("pixel size must be positive, got {pixel_size_mm}")));
        }
        if pairs.iter().any(|p| p.photo.iter().chain(&p.ct).any(|c| !c.is_finite())) {
            return Err(Error::InvalidInput("annotation points must be finite".into()));
        }
        Ok(AnnotationSet { slice, pixel_size_mm, pairs })
    }
}

/// Mean in-plane distance between paired points, in millimetres.
pub fn ipced(ann: &AnnotationSet) -> Result<f64> {
    if ann.pairs.is_empty() {
        return Err(Error::InvalidInput("annotation set has no pairs".into()));
    }
    let total: f64 = ann.pairs.iter().map(|p| (p.photo[0] - p.ct[0]).hypot(p.photo[1] - p.ct[1])).sum();
    Ok(total / ann.pairs.len() as f64 * ann.pixel_size_mm)
}

/// Mean IPCED over several slices' annotation sets, weighting every pair equally.
pub fn ipced_all(sets: &[AnnotationSet]) -> Result<f64> {
    let n: usize = sets.iter().map(|s| s.pairs.len()).sum();
    if n == 0 {
        return Err(Error::InvalidInput("no annotation pairs".into()));
    }
    let total: f64 = sets.iter().map(|s| ipced(s).map(|v| v * s.pairs.len() as f64)).sum::<Result<f64>>()?;
    Ok(total / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegMetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub edge_distance_mean: f64,
    pub edge_distance_std: f64,
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// 1-pixels with a 4-neighbour that is 0 or outside the image.
pub fn edge_pixels(mask: &Mask2) -> Vec<[usize; 2]> {
    let (w, h) = (mask.width(), mask.height());
    let mut out = Vec::new();
    for row in 0..h {
        for col in 0..w {
            if mask.get(col, row) == 1
                && (col == 0
                    || row == 0
                    || col + 1 == w
                    || row + 1 == h
                    || mask.get(col - 1, row) == 0
                    || mask.get(col + 1, row) == 0
                    || mask.get(col, row - 1) == 0
                    || mask.get(col, row + 1) == 0)
            {
                out.push([col, row]);
            }
        }
    }
    out
}

fn ratio(num: u64, den: u64, what: &str, warnings: &mut Vec<String>) -> f64 {
    if den == 0 {
        let msg = format!("{what} is 0/0, reported as 0");
        log::warn!("{msg}");
        warnings.push(msg);
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

pub fn seg_metrics(pred: &Mask2, truth: &Mask2, pixel_size_mm: f64) -> Result<SegMetricsReport> {
    if (pred.width(), pred.height()) != (truth.width(), truth.height()) {
        return Err(Error::DimensionMismatch(format!(
            "prediction is {}x{}, truth is {}x{}",
            pred.width(),
            pred.height(),
            truth.width(),
            truth.height()
        )));
    }
    if !(pixel_size_mm > 0.0 && pixel_size_mm.is_finite()) {
        return Err(Error::InvalidInput(format!("pixel size must be positive, got {pixel_size_mm}")));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        match (p, t) {
            (1, 1) => tp += 1,
            (0, 0) => tn += 1,
            (1, 0) => fp += 1,
            _ => fn_ += 1,
        }
    }
    let mut warnings = Vec::new();
    let accuracy = ratio(tp + tn, tp + tn + fp + fn_, "accuracy", &mut warnings);
    let precision = ratio(tp, tp + fp, "precision", &mut warnings);
    let recall = ratio(tp, tp + fn_, "recall", &mut warnings);

    let truth_edges = edge_pixels(truth);
    if truth_edges.is_empty() {
        return Err(Error::UndefinedMetric("truth mask has no edge pixels".into()));
    }
    let pred_edges = edge_pixels(pred);
    let dists: Vec<f64> = pred_edges
        .iter()
        .map(|&[c, r]| {
            let d2 = truth_edges
                .iter()
                .map(|&[tc, tr]| {
                    let (dx, dy) = (c as f64 - tc as f64, r as f64 - tr as f64);
                    dx * dx + dy * dy
                })
                .fold(f64::INFINITY, f64::min);
            d2.sqrt() * pixel_size_mm
        })
        .collect();
    let (edge_distance_mean, edge_distance_std) = if dists.is_empty() {
        let msg = "prediction has no edge pixels; edge distance reported as 0".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
        (0.0, 0.0)
    } else {
        mean_std(&dists)
    };
    Ok(SegMetricsReport { accuracy, precision, recall, edge_distance_mean, edge_distance_std, tp, tn, fp, fn_, warnings })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        MeanStd { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub count: usize,
    pub accuracy: MeanStd,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub edge_distance: MeanStd,
}

/// Per-column mean and population std; edge distance aggregates each report's mean.
pub fn aggregate_metrics(reports: &[SegMetricsReport]) -> Result<AggregateMetrics> {
    if reports.is_empty() {
        return Err(Error::InvalidInput("no reports to aggregate".into()));
    }
    let col = |f: fn(&SegMetricsReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(AggregateMetrics {
        count: reports.len(),
        accuracy: col(|r| r.accuracy),
        precision: col(|r| r.precision),
        recall: col(|r| r.recall),
        edge_distance: col(|r| r.edge_distance_mean),
    })
}
