//! Monocular depth error and accuracy metrics with depth capping and
//! optional median scale alignment.
//!
//! Validity is decided by the ground truth alone: a pixel counts when its
//! ground-truth depth is finite and inside `[min_depth, max_depth]`.
//! Predictions are clamped to the same interval before the formulas run,
//! which keeps `ln` finite and matches common evaluation code. All
//! accumulation is in f64.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plane::DepthMap;

/// Evaluation settings; `alignment` is applied by the caller (see
/// [`align_median`]) and recorded in reports.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub min_depth: f64,
    pub max_depth: f64,
    pub alignment: Alignment,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            min_depth: 1e-3,
            max_depth: 60.0,
            alignment: Alignment::None,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.min_depth > 0.0 && self.min_depth < self.max_depth) {
            return Err(EvalError::InvalidConfig {
                what: format!(
                    "need 0 < min_depth < max_depth, got ({}, {})",
                    self.min_depth, self.max_depth
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    #[default]
    None,
    Median,
}

/// Error and accuracy summary over one map or an aggregate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricsReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub n_valid: usize,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no valid pixels under the configured depth range")]
    EmptyMask,
    #[error("median of the prediction is zero or not finite")]
    ZeroMedian,
    #[error("dimensions do not agree: {what}")]
    DimMismatch { what: String },
    #[error("no reports to aggregate")]
    EmptyList,
    #[error("invalid evaluation configuration: {what}")]
    InvalidConfig { what: String },
}

/// Validity mask for a ground-truth map under the configured depth range.
pub fn valid_mask(gt: &DepthMap, cfg: &EvalConfig) -> Array2<bool> {
    gt.mapv(|g| {
        let g = g as f64;
        g.is_finite() && g >= cfg.min_depth && g <= cfg.max_depth
    })
}

fn median_over(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Rescale the prediction by `median(gt) / median(pred)` over the mask.
/// Cancels any global scale factor, so relative predictors can be scored
/// with the same formulas as metric ones.
pub fn align_median(
    pred: &DepthMap,
    gt: &DepthMap,
    mask: &Array2<bool>,
) -> Result<DepthMap, EvalError> {
    if pred.dim() != gt.dim() || pred.dim() != mask.dim() {
        return Err(EvalError::DimMismatch {
            what: format!(
                "pred {:?}, gt {:?}, mask {:?}",
                pred.dim(),
                gt.dim(),
                mask.dim()
            ),
        });
    }
    let mut pred_values = Vec::new();
    let mut gt_values = Vec::new();
    for ((y, x), &keep) in mask.indexed_iter() {
        if keep {
            pred_values.push(pred[[y, x]] as f64);
            gt_values.push(gt[[y, x]] as f64);
        }
    }
    if pred_values.is_empty() {
        return Err(EvalError::EmptyMask);
    }
    let pred_median = median_over(&mut pred_values);
    let gt_median = median_over(&mut gt_values);
    if !pred_median.is_finite() || pred_median == 0.0 {
        return Err(EvalError::ZeroMedian);
    }
    let scale = (gt_median / pred_median) as f32;
    Ok(pred.mapv(|p| p * scale))
}

/// Compute the error and accuracy metrics over valid pixels.
///
/// `abs_rel = mean(|p-g|/g)`, `sq_rel = mean((p-g)^2/g)`,
/// `rmse = sqrt(mean((p-g)^2))`, `rmse_log = sqrt(mean((ln p - ln g)^2))`,
/// `delta_k = frac(max(p/g, g/p) < 1.25^k)`.
pub fn compute_metrics(
    pred: &DepthMap,
    gt: &DepthMap,
    cfg: &EvalConfig,
) -> Result<MetricsReport, EvalError> {
    cfg.validate()?;
    if pred.dim() != gt.dim() {
        return Err(EvalError::DimMismatch {
            what: format!("pred {:?}, gt {:?}", pred.dim(), gt.dim()),
        });
    }

    let mut n = 0usize;
    let mut sum_abs_rel = 0.0f64;
    let mut sum_sq_rel = 0.0f64;
    let mut sum_sq = 0.0f64;
    let mut sum_sq_log = 0.0f64;
    let mut hits = [0usize; 3];
    let thresholds = [1.25f64, 1.25f64.powi(2), 1.25f64.powi(3)];

    for ((y, x), &g) in gt.indexed_iter() {
        let g = g as f64;
        if !(g.is_finite() && g >= cfg.min_depth && g <= cfg.max_depth) {
            continue;
        }
        let p = (pred[[y, x]] as f64).clamp(cfg.min_depth, cfg.max_depth);
        let diff = p - g;
        sum_abs_rel += diff.abs() / g;
        sum_sq_rel += diff * diff / g;
        sum_sq += diff * diff;
        let log_diff = p.ln() - g.ln();
        sum_sq_log += log_diff * log_diff;
        let ratio = (p / g).max(g / p);
        for (k, &t) in thresholds.iter().enumerate() {
            if ratio < t {
                hits[k] += 1;
            }
        }
        n += 1;
    }

    if n == 0 {
        return Err(EvalError::EmptyMask);
    }
    let nf = n as f64;
    Ok(MetricsReport {
        abs_rel: sum_abs_rel / nf,
        sq_rel: sum_sq_rel / nf,
        rmse: (sum_sq / nf).sqrt(),
        rmse_log: (sum_sq_log / nf).sqrt(),
        delta1: hits[0] as f64 / nf,
        delta2: hits[1] as f64 / nf,
        delta3: hits[2] as f64 / nf,
        n_valid: n,
    })
}

/// Pixel-weighted aggregate of per-image reports.
///
/// Each report's `n_valid` is its weight, so means recombine from
/// accumulated sums rather than averaging averages: ratio metrics use
/// `sum_i n_i * m_i / sum_i n_i`, root metrics recombine the mean squares
/// before the final root.
pub fn aggregate(reports: &[MetricsReport]) -> Result<MetricsReport, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::EmptyList);
    }
    let total: usize = reports.iter().map(|r| r.n_valid).sum();
    if total == 0 {
        return Err(EvalError::EmptyMask);
    }
    let tf = total as f64;
    let weighted = |f: &dyn Fn(&MetricsReport) -> f64| -> f64 {
        reports.iter().map(|r| r.n_valid as f64 * f(r)).sum::<f64>() / tf
    };
    Ok(MetricsReport {
        abs_rel: weighted(&|r| r.abs_rel),
        sq_rel: weighted(&|r| r.sq_rel),
        rmse: weighted(&|r| r.rmse * r.rmse).sqrt(),
        rmse_log: weighted(&|r| r.rmse_log * r.rmse_log).sqrt(),
        delta1: weighted(&|r| r.delta1),
        delta2: weighted(&|r| r.delta2),
        delta3: weighted(&|r| r.delta3),
        n_valid: total,
    })
}
