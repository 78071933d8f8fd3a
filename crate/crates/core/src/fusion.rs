//! Geometry × interaction fusion.
//!
//! Every PCA component of the object ROI is scored against the verb attention with
//! NSS: the verb map is the continuous saliency and the component's top-quantile
//! ROI cells are the fixations. The best component (optionally negated) is
//! rectified and multiplied into the verb map.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::geometry::{pca_decompose, roi_from_attention, PartBasis, Roi};
use crate::interaction::{aggregate_layers, gaussian_blur, normalize_01};
use crate::map::{AttentionStack, DenseFeatureMap, SpatialMap};
use crate::math::{floor, sqrt};

/// Knobs for the fusion pipeline.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FusionConfig {
    /// Number of PCA components, 1..=10.
    pub k: usize,
    /// Cells at or above this within-ROI quantile of a rectified component are fixations.
    pub fixation_quantile: f64,
    pub consider_negated_components: bool,
    /// Blur sigma in pixels at `working_size` resolution; scaled to the map size.
    pub blur_sigma: f64,
    pub working_size: usize,
    pub roi_threshold: f64,
    pub roi_margin: f64,
    /// Attention layers to average; `None` uses every recorded layer.
    pub layers: Option<Vec<usize>>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            k: 3,
            fixation_quantile: 0.8,
            consider_negated_components: true,
            blur_sigma: 3.0,
            working_size: 224,
            roi_threshold: 0.4,
            roi_margin: 0.1,
            layers: None,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=10).contains(&self.k) {
            return Err(Error::argument(format!("k must be in 1..=10, got {}", self.k)));
        }
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !open_unit(self.fixation_quantile) {
            return Err(Error::argument(format!(
                "fixation quantile must be in (0, 1), got {}",
                self.fixation_quantile
            )));
        }
        if !open_unit(self.roi_threshold) {
            return Err(Error::argument(format!("ROI threshold must be in (0, 1), got {}", self.roi_threshold)));
        }
        if !(self.roi_margin >= 0.0) || !self.roi_margin.is_finite() {
            return Err(Error::argument(format!("ROI margin must be >= 0, got {}", self.roi_margin)));
        }
        if !(self.blur_sigma >= 0.0) || !self.blur_sigma.is_finite() {
            return Err(Error::argument(format!("sigma must be >= 0, got {}", self.blur_sigma)));
        }
        if self.working_size == 0 {
            return Err(Error::argument("working size must be positive"));
        }
        if matches!(&self.layers, Some(l) if l.is_empty()) {
            return Err(Error::argument("layer subset is empty"));
        }
        Ok(())
    }

    /// Blur sigma for an `h × w` map.
    pub fn sigma_for(&self, h: usize, w: usize) -> f64 {
        self.blur_sigma * h.max(w) as f64 / self.working_size as f64
    }
}

/// Normalized Scanpath Saliency: mean z-score of `saliency` over fixation cells
/// (`fixation_mask > 0`). Population std; returns 0 when the std is below 1e-8.
pub fn nss_score(saliency: &SpatialMap, fixation_mask: &SpatialMap) -> Result<f64> {
    saliency.ensure_same_dims(fixation_mask, "NSS saliency vs fixations")?;
    let fixations = fixation_mask.values().iter().filter(|&&m| m > 0.0).count();
    if fixations == 0 {
        return Err(Error::argument("fixation mask has no positive cell"));
    }
    let n = saliency.values().len() as f64;
    let mean = saliency.sum() / n;
    let var = saliency
        .values()
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let std = sqrt(var);
    if std < 1e-8 {
        return Ok(0.0);
    }
    let total: f64 = saliency
        .values()
        .iter()
        .zip(fixation_mask.values())
        .filter(|(_, &m)| m > 0.0)
        .map(|(&v, _)| (v as f64 - mean) / std)
        .sum();
    Ok(total / fixations as f64)
}

/// A chosen component and its orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Selection {
    pub component: usize,
    /// `+1` or `-1`.
    pub sign: i8,
    pub score: f64,
}

/// Candidate order used by `select_component` and in its score vector.
fn candidates(k: usize, negated: bool) -> impl Iterator<Item = (usize, i8)> {
    (0..k).flat_map(move |i| {
        let signs: &'static [i8] = if negated { &[1, -1] } else { &[1] };
        signs.iter().map(move |&s| (i, s))
    })
}

/// Linear-interpolated quantile of sorted data (numpy's default rule).
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Rectified signed projection: `max(sign · projection, 0)`.
pub fn rectified_part(basis: &PartBasis, component: usize, sign: i8) -> SpatialMap {
    let s = sign as f32;
    basis.projections[component].map(|v| (s * v).max(0.0)).expect("rectified projections are finite")
}

/// Binary fixation mask from the top `quantile` of `part` inside `roi`.
pub fn component_fixations(part: &SpatialMap, roi: &Roi, quantile: f64) -> Option<SpatialMap> {
    let mut inside: Vec<f64> = roi.cells().map(|(r, c)| part.get(r, c) as f64).collect();
    inside.sort_by(f64::total_cmp);
    if !(inside.last().copied().unwrap_or(0.0) > 0.0) {
        return None;
    }
    let cut = quantile_sorted(&inside, quantile);
    let (h, w) = part.dims();
    let mask = SpatialMap::from_fn(h, w, |r, c| {
        let v = part.get(r, c) as f64;
        if roi.contains(r, c) && v > 0.0 && v >= cut {
            1.0
        } else {
            0.0
        }
    })
    .expect("mask values are finite");
    Some(mask)
}

/// Scores every component (and its negation when enabled) and picks the best.
///
/// Scores follow the order `[c0+, c0-, c1+, c1-, ...]` (or `[c0+, c1+, ...]`).
/// Components whose rectified map is zero inside the ROI score `-inf`. Ties go to
/// the lower index, then the positive sign.
pub fn select_component(basis: &PartBasis, verb_map: &SpatialMap, cfg: &FusionConfig) -> Result<(Selection, Vec<f64>)> {
    if basis.k == 0 {
        return Err(Error::argument("basis has no components"));
    }
    if verb_map.dims() != (basis.grid_h, basis.grid_w) {
        return Err(Error::shape(format!(
            "verb map {}x{} vs basis grid {}x{}",
            verb_map.height(),
            verb_map.width(),
            basis.grid_h,
            basis.grid_w
        )));
    }
    let mut scores = Vec::new();
    let mut best: Option<Selection> = None;
    for (component, sign) in candidates(basis.k, cfg.consider_negated_components) {
        let part = rectified_part(basis, component, sign);
        let score = match component_fixations(&part, &basis.roi, cfg.fixation_quantile) {
            Some(mask) => nss_score(verb_map, &mask)?,
            None => f64::NEG_INFINITY,
        };
        scores.push(score);
        if score > f64::NEG_INFINITY && best.is_none_or(|b| score > b.score) {
            best = Some(Selection { component, sign, score });
        }
    }
    let best = best.ok_or(Error::NoViablePart)?;
    Ok((best, scores))
}

/// Min-max stretch, except that a constant positive map becomes all-ones so that a
/// uniform input acts as the neutral element of the product.
fn unit_scale(map: &SpatialMap) -> SpatialMap {
    let (lo, hi) = map.min_max();
    if lo == hi && hi > 0.0 {
        let (h, w) = map.dims();
        SpatialMap::filled(h, w, 1.0).expect("finite")
    } else {
        normalize_01(map)
    }
}

/// `normalize_01(blur(normalize_01(verb) ⊙ normalize_01(part)))`, where a constant
/// positive input counts as all-ones.
pub fn fuse(verb_map: &SpatialMap, part_map: &SpatialMap, cfg: &FusionConfig) -> Result<SpatialMap> {
    verb_map.ensure_same_dims(part_map, "fusion inputs")?;
    let v = unit_scale(verb_map);
    let p = unit_scale(part_map);
    let (h, w) = v.dims();
    let product: Vec<f32> = v.values().iter().zip(p.values()).map(|(a, b)| a * b).collect();
    let product = SpatialMap::new(h, w, product)?;
    let blurred = gaussian_blur(&product, cfg.sigma_for(h, w))?;
    Ok(normalize_01(&blurred))
}

/// Pipeline stages, used to tag errors and to count work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Stage {
    Aggregate,
    Roi,
    Pca,
    Select,
    Fuse,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Aggregate, Stage::Roi, Stage::Pca, Stage::Select, Stage::Fuse];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Aggregate => "aggregate",
            Stage::Roi => "roi",
            Stage::Pca => "pca",
            Stage::Select => "select",
            Stage::Fuse => "fuse",
        }
    }

    pub fn is_geometry(self) -> bool {
        matches!(self, Stage::Roi | Stage::Pca | Stage::Select)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("stage {stage}: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

/// Receives a call each time the pipeline enters a stage.
pub trait StageObserver {
    fn enter(&mut self, stage: Stage);
}

impl StageObserver for () {
    fn enter(&mut self, _: Stage) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Mode {
    /// Blurred, normalized verb attention only.
    InteractionOnly,
    #[default]
    InteractionXGeometry,
}

/// One sample's inputs on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: DenseFeatureMap,
    pub verb: AttentionStack,
    pub object: AttentionStack,
}

impl Sample {
    pub fn new(features: DenseFeatureMap, verb: AttentionStack, object: AttentionStack) -> Result<Self> {
        let grid = features.grid();
        for (name, stack) in [("verb", &verb), ("object", &object)] {
            if stack.grid() != grid {
                return Err(Error::shape(format!("{name} attention grid {:?} vs feature grid {grid:?}", stack.grid())));
            }
        }
        Ok(Sample { features, verb, object })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionResult {
    pub mode: Mode,
    /// `None` in interaction-only mode.
    pub selection: Option<Selection>,
    pub component_scores: Vec<f64>,
    pub roi: Option<Roi>,
    pub affordance_map: SpatialMap,
    pub verb_map: SpatialMap,
    /// Rectified selected component (all-ones in interaction-only mode).
    pub part_map: SpatialMap,
}

pub fn run_pipeline(sample: &Sample, cfg: &FusionConfig, mode: Mode) -> Result<FusionResult, PipelineError> {
    run_pipeline_observed(sample, cfg, mode, &mut ())
}

/// Aggregate → ROI → PCA → select → fuse, reporting each stage to `observer`.
pub fn run_pipeline_observed(
    sample: &Sample,
    cfg: &FusionConfig,
    mode: Mode,
    observer: &mut dyn StageObserver,
) -> Result<FusionResult, PipelineError> {
    let at = |stage: Stage| move |source: Error| PipelineError { stage, source };
    cfg.validate().map_err(at(Stage::Aggregate))?;
    let layers = cfg.layers.as_deref();

    observer.enter(Stage::Aggregate);
    let verb_map = aggregate_layers(&sample.verb, layers).map_err(at(Stage::Aggregate))?;

    let (selection, component_scores, roi, part_map) = match mode {
        Mode::InteractionOnly => {
            let (h, w) = verb_map.dims();
            (None, Vec::new(), None, SpatialMap::filled(h, w, 1.0).map_err(at(Stage::Fuse))?)
        }
        Mode::InteractionXGeometry => {
            observer.enter(Stage::Aggregate);
            let obj_map = aggregate_layers(&sample.object, layers).map_err(at(Stage::Aggregate))?;

            observer.enter(Stage::Roi);
            let roi = roi_from_attention(&obj_map, cfg.roi_threshold, cfg.roi_margin).map_err(at(Stage::Roi))?;

            observer.enter(Stage::Pca);
            let max_k = sample.features.channels().min(roi.area());
            let basis = pca_decompose(&sample.features, roi, cfg.k.min(max_k)).map_err(at(Stage::Pca))?;

            observer.enter(Stage::Select);
            let (sel, scores) = select_component(&basis, &verb_map, cfg).map_err(at(Stage::Select))?;
            let part = rectified_part(&basis, sel.component, sel.sign);
            (Some(sel), scores, Some(roi), part)
        }
    };

    observer.enter(Stage::Fuse);
    let affordance_map = fuse(&verb_map, &part_map, cfg).map_err(at(Stage::Fuse))?;
    Ok(FusionResult { mode, selection, component_scores, roi, affordance_map, verb_map, part_map })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn map(h: usize, w: usize, v: &[f32]) -> SpatialMap {
        SpatialMap::new(h, w, v.to_vec()).unwrap()
    }

    #[test]
    fn nss_hand_example() {
        let s = map(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let m = map(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let got = nss_score(&s, &m).unwrap();
        // (1 - 0.25) / sqrt(0.1875)
        assert!((got - 1.7320508).abs() < 1e-6);
    }

    #[test]
    fn nss_guards() {
        let c = SpatialMap::filled(3, 3, 0.7).unwrap();
        let m = map(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(nss_score(&c, &m).unwrap(), 0.0);
        let s = map(2, 2, &[0.3, 0.9, 0.1, 0.5]);
        let all = SpatialMap::filled(2, 2, 1.0).unwrap();
        assert!(nss_score(&s, &all).unwrap().abs() < 1e-12);
        let none = SpatialMap::zeros(2, 2).unwrap();
        assert!(matches!(nss_score(&s, &none), Err(Error::Argument(_))));
    }

    #[test]
    fn quantile_matches_numpy_linear() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.8), 4.2);
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&[2.0], 0.8), 2.0);
    }

    #[test]
    fn fuse_with_ones_is_blurred_verb() {
        let verb = map(3, 3, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let ones = SpatialMap::filled(3, 3, 1.0).unwrap();
        let cfg = FusionConfig { blur_sigma: 0.0, ..FusionConfig::default() };
        assert_eq!(fuse(&verb, &ones, &cfg).unwrap(), normalize_01(&verb));
    }

    #[test]
    fn fuse_disjoint_is_zero() {
        let a = map(1, 4, &[1.0, 1.0, 0.0, 0.0]);
        let b = map(1, 4, &[0.0, 0.0, 1.0, 1.0]);
        let out = fuse(&a, &b, &FusionConfig::default()).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fuse_shape_mismatch() {
        let a = SpatialMap::zeros(2, 2).unwrap();
        let b = SpatialMap::zeros(2, 3).unwrap();
        assert!(matches!(fuse(&a, &b, &FusionConfig::default()), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn config_validation() {
        assert!(FusionConfig::default().validate().is_ok());
        for bad in [
            FusionConfig { k: 0, ..FusionConfig::default() },
            FusionConfig { k: 11, ..FusionConfig::default() },
            FusionConfig { fixation_quantile: 1.0, ..FusionConfig::default() },
            FusionConfig { roi_threshold: 0.0, ..FusionConfig::default() },
            FusionConfig { roi_margin: -0.1, ..FusionConfig::default() },
            FusionConfig { blur_sigma: f64::NAN, ..FusionConfig::default() },
            FusionConfig { layers: Some(vec![]), ..FusionConfig::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn sigma_scales_with_resolution() {
        let cfg = FusionConfig::default();
        assert_eq!(cfg.sigma_for(224, 224), 3.0);
        assert_eq!(cfg.sigma_for(112, 56), 1.5);
    }

    #[test]
    fn sample_grids_must_agree() {
        let f = DenseFeatureMap::new(2, 2, 2, vec![0.0; 8]).unwrap();
        let a = AttentionStack::new(1, 2, 2, vec![0.0; 4]).unwrap();
        let b = AttentionStack::new(1, 1, 2, vec![0.0; 2]).unwrap();
        assert!(Sample::new(f.clone(), a.clone(), a.clone()).is_ok());
        assert!(matches!(Sample::new(f, a, b), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn empty_object_attention_fails_in_roi_stage() {
        let f = DenseFeatureMap::new(4, 4, 2, (0..32).map(|i| i as f32).collect()).unwrap();
        let verb = AttentionStack::new(1, 4, 4, vec![0.5; 16]).unwrap();
        let obj = AttentionStack::new(1, 4, 4, vec![0.0; 16]).unwrap();
        let sample = Sample::new(f, verb, obj).unwrap();
        let err = run_pipeline(&sample, &FusionConfig::default(), Mode::InteractionXGeometry).unwrap_err();
        assert_eq!(err.stage, Stage::Roi);
        assert_eq!(err.source, Error::EmptyAttention);
        assert!(alloc::string::ToString::to_string(&err).contains("roi"));
    }

    #[test]
    fn interaction_only_skips_geometry() {
        struct Seen(Vec<Stage>);
        impl StageObserver for Seen {
            fn enter(&mut self, s: Stage) {
                self.0.push(s);
            }
        }
        let f = DenseFeatureMap::new(4, 4, 2, (0..32).map(|i| i as f32).collect()).unwrap();
        let verb = AttentionStack::new(1, 4, 4, (0..16).map(|i| i as f32).collect()).unwrap();
        let obj = AttentionStack::new(1, 4, 4, vec![0.0; 16]).unwrap();
        let sample = Sample::new(f, verb, obj).unwrap();
        let mut seen = Seen(vec![]);
        let res = run_pipeline_observed(&sample, &FusionConfig::default(), Mode::InteractionOnly, &mut seen).unwrap();
        assert!(res.selection.is_none());
        assert_eq!(seen.0, vec![Stage::Aggregate, Stage::Fuse]);
    }
}
