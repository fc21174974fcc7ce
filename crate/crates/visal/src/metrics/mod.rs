//! Saliency evaluation metrics: Pearson correlation, histogram similarity,
//! earth mover's distance, fixation-thresholded ROC area, and
//! precision-recall curves.

mod emd;

pub use emd::{emd, EmdMode, EXACT_GRID_LIMIT};

use crate::error::{Error, Result};
use crate::image::{FixationMap, SaliencyMap};

/// Scalar metrics for one prediction/ground-truth pair, plus the PR sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub cc: f64,
    pub sim: f64,
    pub emd: f64,
    pub auc_j: f64,
    /// (precision, recall) per threshold, in sweep order.
    pub pr: Vec<(f64, f64)>,
}

fn check_dims(a: &SaliencyMap, b: &SaliencyMap, metric: &'static str) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::dim(format!(
            "{metric}: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

/// Pearson correlation coefficient over flattened pixels.
///
/// Undefined when either map is constant (zero variance).
pub fn cc(a: &SaliencyMap, b: &SaliencyMap) -> Result<f64> {
    check_dims(a, b, "cc")?;
    let n = a.data().len() as f64;
    let mean = |m: &SaliencyMap| m.data().iter().sum::<f64>() / n;
    let (ma, mb) = (mean(a), mean(b));
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::UndefinedMetric {
            metric: "cc",
            reason: "constant map has no correlation".to_string(),
        });
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

/// Histogram intersection of the two maps normalized to unit mass:
/// `sum_i min(a_i, b_i)`, in [0,1].
pub fn sim(a: &SaliencyMap, b: &SaliencyMap) -> Result<f64> {
    check_dims(a, b, "sim")?;
    let normalized = |m: &SaliencyMap| -> Result<Vec<f64>> {
        if m.data().iter().any(|&v| v < 0.0) {
            return Err(Error::UndefinedMetric {
                metric: "sim",
                reason: "negative values are not a distribution".to_string(),
            });
        }
        let total: f64 = m.data().iter().sum();
        if total <= 0.0 {
            return Err(Error::UndefinedMetric {
                metric: "sim",
                reason: "zero-mass map cannot be normalized".to_string(),
            });
        }
        Ok(m.data().iter().map(|&v| v / total).collect())
    };
    let (na, nb) = (normalized(a)?, normalized(b)?);
    Ok(na.iter().zip(&nb).map(|(&x, &y)| x.min(y)).sum())
}

/// ROC area with thresholds taken at the distinct saliency values of fixated
/// pixels: true-positive rate over fixations, false-positive rate over all
/// pixels, trapezoidal area with (0,0) and (1,1) endpoints.
pub fn auc_judd(s: &SaliencyMap, fx: &FixationMap) -> Result<f64> {
    if s.height() != fx.height() || s.width() != fx.width() {
        return Err(Error::dim(format!(
            "auc_judd: {}x{} vs {}x{}",
            s.height(),
            s.width(),
            fx.height(),
            fx.width()
        )));
    }
    let n_fix = fx.count();
    if n_fix == 0 {
        return Err(Error::UndefinedMetric {
            metric: "auc_judd",
            reason: "no fixations".to_string(),
        });
    }
    let mut fix_vals: Vec<f64> = Vec::with_capacity(n_fix);
    for y in 0..s.height() {
        for x in 0..s.width() {
            if fx.get(y, x) {
                fix_vals.push(s.get(y, x));
            }
        }
    }
    let mut thresholds = fix_vals.clone();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();

    let mut all_sorted: Vec<f64> = s.data().to_vec();
    all_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n_pix = all_sorted.len() as f64;
    // count of values >= t via binary search on the ascending sort
    let count_ge =
        |sorted: &[f64], t: f64| -> usize { sorted.len() - sorted.partition_point(|&v| v < t) };
    let mut fix_sorted = fix_vals.clone();
    fix_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // descending thresholds give ascending (fpr, tpr) points
    let mut points = vec![(0.0, 0.0)];
    for &t in &thresholds {
        let tpr = count_ge(&fix_sorted, t) as f64 / n_fix as f64;
        let fpr = count_ge(&all_sorted, t) as f64 / n_pix;
        points.push((fpr, tpr));
    }
    points.push((1.0, 1.0));

    let mut area = 0.0;
    for w in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        area += (x1 - x0) * (y0 + y1) / 2.0;
    }
    Ok(area)
}

/// Sweep `n_thresholds` uniformly spaced thresholds over [0,1], binarize the
/// saliency map at each (`>=`), and report (precision, recall) against the
/// fixation map. Precision is 1.0 by convention when nothing is predicted
/// positive.
pub fn pr_curve(
    s: &SaliencyMap,
    gt: &FixationMap,
    n_thresholds: usize,
) -> Result<Vec<(f64, f64)>> {
    if s.height() != gt.height() || s.width() != gt.width() {
        return Err(Error::dim(format!(
            "pr_curve: {}x{} vs {}x{}",
            s.height(),
            s.width(),
            gt.height(),
            gt.width()
        )));
    }
    if n_thresholds < 2 {
        return Err(Error::config(format!(
            "pr_curve needs at least 2 thresholds, got {n_thresholds}"
        )));
    }
    let n_pos = gt.count();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric {
            metric: "pr_curve",
            reason: "no positive ground-truth pixels".to_string(),
        });
    }
    let mut out = Vec::with_capacity(n_thresholds);
    for k in 0..n_thresholds {
        let t = k as f64 / (n_thresholds - 1) as f64;
        let mut tp = 0usize;
        let mut fp = 0usize;
        for y in 0..s.height() {
            for x in 0..s.width() {
                if s.get(y, x) >= t {
                    if gt.get(y, x) {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
        }
        let precision = if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = tp as f64 / n_pos as f64;
        out.push((precision, recall));
    }
    Ok(out)
}

/// All metrics for one prediction against a binary fixation ground truth,
/// which doubles as the target distribution for the distribution metrics.
pub fn evaluate_frame(
    s: &SaliencyMap,
    fx: &FixationMap,
    emd_mode: EmdMode,
    n_thresholds: usize,
) -> Result<MetricRecord> {
    let gt_density = fx.to_saliency();
    Ok(MetricRecord {
        cc: cc(s, &gt_density)?,
        sim: sim(s, &gt_density)?,
        emd: emd(s, &gt_density, emd_mode)?,
        auc_j: auc_judd(s, fx)?,
        pr: pr_curve(s, fx, n_thresholds)?,
    })
}
