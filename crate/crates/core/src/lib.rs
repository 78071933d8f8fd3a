//! Training-free affordance estimation.
//!
//! Dense patch features from a vision backbone carry part geometry; cross-attention
//! from a text-conditioned generator to a verb token carries an interaction prior.
//! This crate composes the two: PCA over the object's region of interest yields
//! part prototypes, the prototype best aligned with the verb attention (scored with
//! NSS) is selected, and the product of the two maps gives a verb-specific
//! affordance heatmap. Saliency metrics (KLD, SIM, NSS) and mIoU are provided for
//! evaluation.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, dataset walking and
//! the command-line interface live in the `affordmap` crate.

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod colormap;
mod error;
pub mod fusion;
pub mod geometry;
pub mod interaction;
pub mod linalg;
pub mod map;
mod math;
pub mod metrics;
pub mod npy;

pub use error::{Error, Result};
pub use fusion::{
    fuse, nss_score, run_pipeline, run_pipeline_observed, select_component, FusionConfig, FusionResult, Mode,
    PipelineError, Sample, Selection, Stage, StageObserver,
};
pub use geometry::{cosine_probe, pca_decompose, project_into_reference_basis, roi_from_attention, PartBasis, Roi};
pub use interaction::{aggregate_layers, gaussian_blur, normalize_01, upsample_bilinear};
pub use map::{AttentionStack, DenseFeatureMap, SpatialMap};
pub use metrics::{kld, miou, nss_eval, sim, MetricTriple};
pub use npy::ArrayFile;
