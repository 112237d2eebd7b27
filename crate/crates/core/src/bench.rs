//! Boundary-based evaluation: precision, recall, weighted F against
//! ground-truth boundary maps, with greedy one-to-one pixel matching inside
//! a Euclidean tolerance.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::LabelMap;

/// Row-major boundary bitmap; `true` marks a boundary pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryMap {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl BoundaryMap {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch(format!(
                "bits length {} != {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn count(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }
}

/// Counts and derived precision/recall/F of one comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchResult {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

/// Marks a pixel as boundary iff its right or bottom 4-neighbor carries a
/// different label.
pub fn boundary_of(labels: &LabelMap) -> BoundaryMap {
    let mut bits = vec![false; labels.labels.len()];
    for y in 0..labels.height {
        for x in 0..labels.width {
            let l = labels.at(x, y);
            let boundary = (x + 1 < labels.width && labels.at(x + 1, y) != l)
                || (y + 1 < labels.height && labels.at(x, y + 1) != l);
            bits[y as usize * labels.width as usize + x as usize] = boundary;
        }
    }
    BoundaryMap {
        width: labels.width,
        height: labels.height,
        bits,
    }
}

/// Greedy one-to-one matching of predicted boundary pixels to ground-truth
/// boundary pixels within Euclidean distance `d_max`. Predictions are
/// visited row-major; each takes the nearest unmatched ground-truth pixel,
/// ties resolved in the ground truth's row-major order. Returns
/// (TP, FP, FN).
pub fn match_boundaries(
    pred: &BoundaryMap,
    gt: &BoundaryMap,
    d_max: f64,
) -> Result<(u64, u64, u64)> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::DimensionMismatch(format!(
            "pred {}x{} vs gt {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    // Candidate offsets within the tolerance, nearest first; equal distances
    // ordered by (dy, dx) so the earliest row-major ground-truth pixel wins.
    let reach = d_max.floor() as i64;
    let mut offsets: Vec<(i64, i64, i64)> = Vec::new();
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            let d2 = dy * dy + dx * dx;
            if (d2 as f64) <= d_max * d_max {
                offsets.push((d2, dy, dx));
            }
        }
    }
    offsets.sort_unstable();

    let w = pred.width as i64;
    let h = pred.height as i64;
    let mut matched = vec![false; gt.bits.len()];
    let mut tp = 0u64;
    for y in 0..h {
        for x in 0..w {
            if !pred.bits[(y * w + x) as usize] {
                continue;
            }
            for &(_, dy, dx) in &offsets {
                let (gx, gy) = (x + dx, y + dy);
                if gx < 0 || gx >= w || gy < 0 || gy >= h {
                    continue;
                }
                let idx = (gy * w + gx) as usize;
                if gt.bits[idx] && !matched[idx] {
                    matched[idx] = true;
                    tp += 1;
                    break;
                }
            }
        }
    }
    let fp = pred.count() - tp;
    let fn_ = gt.count() - tp;
    Ok((tp, fp, fn_))
}

/// Precision, recall, and the chi_0-weighted harmonic F. Undefined ratios
/// (zero denominators) are reported as 0, and F is 0 whenever P or R is.
pub fn prf(tp: u64, fp: u64, fn_: u64, chi_0: f64) -> BenchResult {
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let f_measure = if precision > 0.0 && recall > 0.0 {
        1.0 / (chi_0 / precision + (1.0 - chi_0) / recall)
    } else {
        0.0
    };
    BenchResult {
        tp,
        fp,
        fn_,
        precision,
        recall,
        f_measure,
    }
}
