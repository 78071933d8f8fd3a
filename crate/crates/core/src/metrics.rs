//! Saliency metrics (KLD, SIM, NSS) and mIoU.
//!
//! KLD and SIM sum-normalize both maps first. NSS binarizes the ground truth at a
//! fraction of its maximum and scores the prediction at those cells.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fusion::nss_score;
use crate::map::SpatialMap;
use crate::math::ln;

pub const DEFAULT_EPS: f64 = 1e-10;
pub const DEFAULT_FIXATION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricTriple {
    pub kld: f64,
    pub sim: f64,
    pub nss: f64,
}

impl MetricTriple {
    pub fn is_finite(&self) -> bool {
        self.kld.is_finite() && self.sim.is_finite() && self.nss.is_finite()
    }

    /// Arithmetic mean; `None` for an empty input.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a MetricTriple>) -> Option<MetricTriple> {
        let mut n = 0usize;
        let mut acc = MetricTriple::default();
        for m in items {
            n += 1;
            acc.kld += m.kld;
            acc.sim += m.sim;
            acc.nss += m.nss;
        }
        (n > 0).then(|| MetricTriple { kld: acc.kld / n as f64, sim: acc.sim / n as f64, nss: acc.nss / n as f64 })
    }
}

fn distribution(map: &SpatialMap, what: &str) -> Result<Vec<f64>> {
    if !map.is_non_negative() {
        return Err(Error::DegenerateMap(format!("{what} has negative values")));
    }
    let total = map.sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateMap(format!("{what} sums to zero")));
    }
    Ok(map.values().iter().map(|&v| v as f64 / total).collect())
}

/// `Σ Q · ln(Q / (P + eps) + eps)` with `P` the prediction and `Q` the ground truth.
pub fn kld(pred: &SpatialMap, gt: &SpatialMap, eps: f64) -> Result<f64> {
    pred.ensure_same_dims(gt, "KLD prediction vs ground truth")?;
    let p = distribution(pred, "prediction")?;
    let q = distribution(gt, "ground truth")?;
    Ok(p.iter().zip(&q).map(|(&p, &q)| q * ln(q / (p + eps) + eps)).sum())
}

/// Histogram intersection `Σ min(P, Q)`.
pub fn sim(pred: &SpatialMap, gt: &SpatialMap) -> Result<f64> {
    pred.ensure_same_dims(gt, "SIM prediction vs ground truth")?;
    let p = distribution(pred, "prediction")?;
    let q = distribution(gt, "ground truth")?;
    Ok(p.iter().zip(&q).map(|(&p, &q)| p.min(q)).sum())
}

/// NSS of `pred` at the ground-truth cells `>= fixation_threshold · max(gt)`.
pub fn nss_eval(pred: &SpatialMap, gt: &SpatialMap, fixation_threshold: f64) -> Result<f64> {
    pred.ensure_same_dims(gt, "NSS prediction vs ground truth")?;
    let peak = gt.max() as f64;
    if !(peak > 0.0) {
        return Err(Error::DegenerateMap("ground truth has no fixations".into()));
    }
    let cut = fixation_threshold * peak;
    let mask = gt.map(|v| if v as f64 >= cut { 1.0 } else { 0.0 })?;
    nss_score(pred, &mask)
}

/// KLD, SIM and NSS with the default eps and fixation threshold.
pub fn evaluate_maps(pred: &SpatialMap, gt: &SpatialMap) -> Result<MetricTriple> {
    Ok(MetricTriple {
        kld: kld(pred, gt, DEFAULT_EPS)?,
        sim: sim(pred, gt)?,
        nss: nss_eval(pred, gt, DEFAULT_FIXATION_THRESHOLD)?,
    })
}

/// Mean IoU over the classes that occur in `gt_mask`.
pub fn miou(pred_mask: &[u32], gt_mask: &[u32], num_classes: usize) -> Result<f64> {
    if pred_mask.len() != gt_mask.len() {
        return Err(Error::shape(format!("label maps have {} and {} cells", pred_mask.len(), gt_mask.len())));
    }
    let mut inter = vec![0usize; num_classes];
    let mut union = vec![0usize; num_classes];
    let mut present = vec![false; num_classes];
    for (&p, &g) in pred_mask.iter().zip(gt_mask) {
        let (p, g) = (p as usize, g as usize);
        if p >= num_classes || g >= num_classes {
            return Err(Error::argument(format!("label {} out of range for {num_classes} classes", p.max(g))));
        }
        present[g] = true;
        if p == g {
            inter[g] += 1;
            union[g] += 1;
        } else {
            union[p] += 1;
            union[g] += 1;
        }
    }
    let ious: Vec<f64> = (0..num_classes).filter(|&c| present[c]).map(|c| inter[c] as f64 / union[c] as f64).collect();
    if ious.is_empty() {
        return Err(Error::argument("ground truth is empty"));
    }
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}
