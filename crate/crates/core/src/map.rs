//! Grid-shaped containers shared by every stage of the engine.
//!
//! All three types store row-major `f32` values and validate their invariants on
//! construction, so downstream code can index without re-checking.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Single-channel `h × w` map: attention, heatmap, ground truth or probe response.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMap {
    h: usize,
    w: usize,
    values: Vec<f32>,
}

impl SpatialMap {
    pub fn new(h: usize, w: usize, values: Vec<f32>) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::argument(format!("map dims must be positive, got {h}x{w}")));
        }
        if values.len() != h * w {
            return Err(Error::shape(format!("map {h}x{w} needs {} values, got {}", h * w, values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spatial map"));
        }
        Ok(SpatialMap { h, w, values })
    }

    pub fn filled(h: usize, w: usize, value: f32) -> Result<Self> {
        Self::new(h, w, alloc::vec![value; h * w])
    }

    pub fn zeros(h: usize, w: usize) -> Result<Self> {
        Self::filled(h, w, 0.0)
    }

    pub fn from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut values = Vec::with_capacity(h * w);
        for r in 0..h {
            for c in 0..w {
                values.push(f(r, c));
            }
        }
        Self::new(h, w, values)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.h
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    #[inline]
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.values[r * self.w + c]
    }

    /// Applies `f` to every value. The result must stay finite.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Self> {
        Self::new(self.h, self.w, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.values.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn max(&self) -> f32 {
        self.min_max().1
    }

    /// Sum accumulated in `f64`.
    pub fn sum(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum()
    }

    pub fn is_non_negative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    pub(crate) fn ensure_same_dims(&self, other: &SpatialMap, what: &str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::shape(format!("{what}: {}x{} vs {}x{}", self.h, self.w, other.h, other.w)));
        }
        Ok(())
    }
}

/// Per-layer attention maps for one token group, `[layers, h, w]`, head-averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionStack {
    layers: usize,
    h: usize,
    w: usize,
    values: Vec<f32>,
}

impl AttentionStack {
    pub fn new(layers: usize, h: usize, w: usize, values: Vec<f32>) -> Result<Self> {
        if layers == 0 {
            return Err(Error::argument("attention stack needs at least one layer"));
        }
        if h == 0 || w == 0 {
            return Err(Error::argument(format!("attention grid must be positive, got {h}x{w}")));
        }
        if values.len() != layers * h * w {
            return Err(Error::shape(format!(
                "attention stack [{layers}, {h}, {w}] needs {} values, got {}",
                layers * h * w,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("attention stack"));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::argument("attention values must be non-negative"));
        }
        Ok(AttentionStack { layers, h, w, values })
    }

    /// Stacks equally sized maps.
    pub fn from_layers(maps: &[SpatialMap]) -> Result<Self> {
        let first = maps.first().ok_or_else(|| Error::argument("attention stack needs at least one layer"))?;
        let mut values = Vec::with_capacity(maps.len() * first.values.len());
        for m in maps {
            first.ensure_same_dims(m, "attention layers")?;
            values.extend_from_slice(&m.values);
        }
        Self::new(maps.len(), first.h, first.w, values)
    }

    #[inline]
    pub fn layers(&self) -> usize {
        self.layers
    }

    #[inline]
    pub fn grid(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn layer(&self, i: usize) -> &[f32] {
        let n = self.h * self.w;
        &self.values[i * n..(i + 1) * n]
    }
}

/// `[grid_h, grid_w, channels]` patch features from a vision backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseFeatureMap {
    grid_h: usize,
    grid_w: usize,
    channels: usize,
    values: Vec<f32>,
}

impl DenseFeatureMap {
    pub fn new(grid_h: usize, grid_w: usize, channels: usize, values: Vec<f32>) -> Result<Self> {
        if grid_h == 0 || grid_w == 0 {
            return Err(Error::argument(format!("feature grid must be positive, got {grid_h}x{grid_w}")));
        }
        if channels < 2 {
            return Err(Error::argument(format!("features need at least 2 channels, got {channels}")));
        }
        if values.len() != grid_h * grid_w * channels {
            return Err(Error::shape(format!(
                "features [{grid_h}, {grid_w}, {channels}] need {} values, got {}",
                grid_h * grid_w * channels,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature map"));
        }
        Ok(DenseFeatureMap { grid_h, grid_w, channels, values })
    }

    #[inline]
    pub fn grid(&self) -> (usize, usize) {
        (self.grid_h, self.grid_w)
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Feature vector of the patch at `(r, c)`.
    #[inline]
    pub fn patch(&self, r: usize, c: usize) -> &[f32] {
        let start = (r * self.grid_w + c) * self.channels;
        &self.values[start..start + self.channels]
    }
}
