//! Part-level prototypes from dense features.
//!
//! The object attention picks a region of interest, PCA over the ROI patch vectors
//! gives part directions, and signed projections onto those directions form part
//! maps. Cosine probing and cross-scene projection reuse the same features.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::map::{DenseFeatureMap, SpatialMap};
use crate::math::{abs, ceil, sqrt};

/// Smallest ROI, in patches, accepted by the PCA stage.
pub const MIN_ROI_AREA: usize = 4;

/// Half-open box of grid indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Roi {
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

impl Roi {
    pub fn new(row0: usize, col0: usize, row1: usize, col1: usize) -> Result<Self> {
        let roi = Roi { row0, col0, row1, col1 };
        if row0 >= row1 || col0 >= col1 {
            return Err(Error::argument(format!("empty ROI {roi:?}")));
        }
        if roi.area() < MIN_ROI_AREA {
            return Err(Error::argument(format!(
                "ROI {roi:?} covers {} patches, need at least {MIN_ROI_AREA}",
                roi.area()
            )));
        }
        Ok(roi)
    }

    /// The whole `h × w` grid.
    pub fn full(h: usize, w: usize) -> Result<Self> {
        Self::new(0, 0, h, w)
    }

    pub fn height(&self) -> usize {
        self.row1 - self.row0
    }

    pub fn width(&self) -> usize {
        self.col1 - self.col0
    }

    pub fn area(&self) -> usize {
        self.height() * self.width()
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        (self.row0..self.row1).contains(&r) && (self.col0..self.col1).contains(&c)
    }

    pub fn fits(&self, h: usize, w: usize) -> bool {
        self.row1 <= h && self.col1 <= w
    }

    /// Raster-order cells inside the box.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.row0..self.row1).flat_map(move |r| (self.col0..self.col1).map(move |c| (r, c)))
    }
}

/// Bounding box of the largest 4-connected component of `{v >= rel_threshold * max}`,
/// padded by `margin` times the box side and clamped to the grid.
///
/// Boxes smaller than 2 × 2 along either side are grown towards the far edge first,
/// so a single hot pixel still yields a usable ROI.
pub fn roi_from_attention(obj_attn: &SpatialMap, rel_threshold: f64, margin: f64) -> Result<Roi> {
    if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
        return Err(Error::argument(format!("ROI threshold must be in (0, 1), got {rel_threshold}")));
    }
    if !(margin >= 0.0) || !margin.is_finite() {
        return Err(Error::argument(format!("ROI margin must be >= 0, got {margin}")));
    }
    if !obj_attn.is_non_negative() {
        return Err(Error::argument("object attention must be non-negative"));
    }
    let peak = obj_attn.max();
    if !(peak > 0.0) {
        return Err(Error::EmptyAttention);
    }
    let (h, w) = obj_attn.dims();
    if h < 2 || w < 2 {
        return Err(Error::argument(format!("grid {h}x{w} cannot hold a 2x2 ROI")));
    }
    let cut = rel_threshold * peak as f64;
    let above: Vec<bool> = obj_attn.values().iter().map(|&v| v as f64 >= cut).collect();

    // Largest component; ties keep the one found first in raster order.
    let mut label = vec![false; h * w];
    let mut best: Option<(usize, [usize; 4])> = None;
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !above[start] || label[start] {
            continue;
        }
        label[start] = true;
        queue.push_back(start);
        let mut size = 0;
        let mut bbox = [usize::MAX, usize::MAX, 0, 0];
        while let Some(p) = queue.pop_front() {
            let (r, c) = (p / w, p % w);
            size += 1;
            bbox[0] = bbox[0].min(r);
            bbox[1] = bbox[1].min(c);
            bbox[2] = bbox[2].max(r + 1);
            bbox[3] = bbox[3].max(c + 1);
            let mut visit = |q: usize| {
                if above[q] && !label[q] {
                    label[q] = true;
                    queue.push_back(q);
                }
            };
            if r > 0 {
                visit(p - w);
            }
            if r + 1 < h {
                visit(p + w);
            }
            if c > 0 {
                visit(p - 1);
            }
            if c + 1 < w {
                visit(p + 1);
            }
        }
        if best.is_none_or(|(s, _)| size > s) {
            best = Some((size, bbox));
        }
    }
    let [mut r0, mut c0, mut r1, mut c1] = best.expect("the peak pixel is above threshold").1;

    let pad_r = ceil(margin * (r1 - r0) as f64) as usize;
    let pad_c = ceil(margin * (c1 - c0) as f64) as usize;
    r0 = r0.saturating_sub(pad_r);
    c0 = c0.saturating_sub(pad_c);
    r1 = (r1 + pad_r).min(h);
    c1 = (c1 + pad_c).min(w);

    if (r1 - r0) * (c1 - c0) < MIN_ROI_AREA {
        (r0, r1) = grow_to_two(r0, r1, h);
        (c0, c1) = grow_to_two(c0, c1, w);
    }
    Roi::new(r0, c0, r1, c1)
}

fn grow_to_two(mut lo: usize, mut hi: usize, len: usize) -> (usize, usize) {
    while hi - lo < 2 {
        if hi < len {
            hi += 1;
        } else {
            lo -= 1;
        }
    }
    (lo, hi)
}

/// PCA part basis over the patches of one ROI.
#[derive(Debug, Clone, PartialEq)]
pub struct PartBasis {
    pub k: usize,
    pub channels: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub roi: Roi,
    /// `[k, channels]` unit directions, row-major.
    pub directions: Vec<f32>,
    /// Eigenvalues of the `1/N` covariance, non-increasing.
    pub explained_var: Vec<f32>,
    pub mean_vec: Vec<f32>,
    /// Signed scores on the full grid, zero outside the ROI.
    pub projections: Vec<SpatialMap>,
    /// Whether each direction was negated to satisfy the sign rule.
    pub sign_flips: Vec<bool>,
}

impl PartBasis {
    pub fn direction(&self, i: usize) -> &[f32] {
        &self.directions[i * self.channels..(i + 1) * self.channels]
    }
}

/// Top-`k` principal directions of the mean-centered ROI patch vectors.
///
/// Eigenvalues use the `1/N` covariance. Each direction is oriented so that its
/// largest-magnitude ROI projection is positive (first in raster order on ties).
/// PCA runs on raw features; no per-patch L2 normalization is applied.
pub fn pca_decompose(features: &DenseFeatureMap, roi: Roi, k: usize) -> Result<PartBasis> {
    let (gh, gw) = features.grid();
    let ch = features.channels();
    if !roi.fits(gh, gw) {
        return Err(Error::argument(format!("ROI {roi:?} exceeds grid {gh}x{gw}")));
    }
    let n = roi.area();
    if n < MIN_ROI_AREA {
        return Err(Error::argument(format!("ROI covers {n} patches, need {MIN_ROI_AREA}")));
    }
    if k == 0 || k > ch.min(n) {
        return Err(Error::argument(format!(
            "k = {k} out of range 1..={} for {ch} channels and {n} ROI patches",
            ch.min(n)
        )));
    }

    let first = features.patch(roi.row0, roi.col0);
    if roi.cells().all(|(r, c)| features.patch(r, c) == first) {
        return Err(Error::DegenerateFeatures);
    }

    let mut mean = vec![0.0f64; ch];
    for (r, c) in roi.cells() {
        for (m, &v) in mean.iter_mut().zip(features.patch(r, c)) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    // Centered ROI data, N × C row-major.
    let mut x = Vec::with_capacity(n * ch);
    for (r, c) in roi.cells() {
        x.extend(features.patch(r, c).iter().zip(&mean).map(|(&v, &m)| v as f64 - m));
    }

    let (values, mut dirs) = if ch <= n { covariance_route(&x, n, ch, k) } else { gram_route(&x, n, ch, k) };
    if !(values[0] > 0.0) {
        return Err(Error::DegenerateFeatures);
    }

    let mut projections = Vec::with_capacity(k);
    let mut sign_flips = Vec::with_capacity(k);
    for dir in dirs.iter_mut() {
        let scores: Vec<f64> = x.chunks_exact(ch).map(|row| dot(row, dir)).collect();
        let mut peak = 0.0;
        for &s in &scores {
            if abs(s) > abs(peak) {
                peak = s;
            }
        }
        let flip = peak < 0.0;
        if flip {
            dir.iter_mut().for_each(|d| *d = -*d);
        }
        sign_flips.push(flip);
        let sign = if flip { -1.0 } else { 1.0 };
        let mut grid = vec![0.0f32; gh * gw];
        for ((r, c), s) in roi.cells().zip(scores) {
            grid[r * gw + c] = (sign * s) as f32;
        }
        projections.push(SpatialMap::new(gh, gw, grid)?);
    }

    Ok(PartBasis {
        k,
        channels: ch,
        grid_h: gh,
        grid_w: gw,
        roi,
        directions: dirs.iter().flatten().map(|&d| d as f32).collect(),
        explained_var: values.iter().map(|&v| v.max(0.0) as f32).collect(),
        mean_vec: mean.iter().map(|&m| m as f32).collect(),
        projections,
        sign_flips,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Eigendecomposition of the `C × C` covariance.
fn covariance_route(x: &[f64], n: usize, ch: usize, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut cov = vec![0.0f64; ch * ch];
    for row in x.chunks_exact(ch) {
        for i in 0..ch {
            let xi = row[i];
            if xi == 0.0 {
                continue;
            }
            let dst = &mut cov[i * ch..i * ch + i + 1];
            for (d, &xj) in dst.iter_mut().zip(&row[..=i]) {
                *d += xi * xj;
            }
        }
    }
    cov.iter_mut().for_each(|v| *v /= n as f64);
    let eig = symmetric_eigen(&cov, ch);
    let values = eig.values[..k].to_vec();
    let dirs = (0..k).map(|j| eig.vector(j)).collect();
    (values, dirs)
}

/// Eigendecomposition of the `N × N` Gram matrix when there are fewer patches than
/// channels. Directions are recovered as `Xᵀu / sqrt(Nλ)`; components in the null
/// space are completed by Gram-Schmidt against the coordinate axes.
fn gram_route(x: &[f64], n: usize, ch: usize, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut gram = vec![0.0f64; n * n];
    for i in 0..n {
        let xi = &x[i * ch..(i + 1) * ch];
        for j in 0..=i {
            gram[i * n + j] = dot(xi, &x[j * ch..(j + 1) * ch]) / n as f64;
        }
    }
    let eig = symmetric_eigen(&gram, n);
    let top = eig.values[0].max(0.0);
    let tol = top * 1e-12;
    let mut values = Vec::with_capacity(k);
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let lambda = eig.values[j];
        let mut dir = None;
        if lambda > tol {
            let u = eig.vector(j);
            let mut v = vec![0.0f64; ch];
            for (ui, row) in u.iter().zip(x.chunks_exact(ch)) {
                for (vc, &xc) in v.iter_mut().zip(row) {
                    *vc += ui * xc;
                }
            }
            if orthonormalize(&mut v, &dirs) {
                dir = Some(v);
            }
        }
        let dir = match dir {
            Some(d) => d,
            None => complete_basis(&dirs, ch),
        };
        values.push(lambda.max(0.0));
        dirs.push(dir);
    }
    (values, dirs)
}

/// Projects out `basis` from `v` and normalizes; false when nothing is left.
fn orthonormalize(v: &mut [f64], basis: &[Vec<f64>]) -> bool {
    let start = sqrt(dot(v, v));
    if !(start > 0.0) {
        return false;
    }
    for b in basis {
        let p = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
    }
    let norm = sqrt(dot(v, v));
    if norm <= start * 1e-8 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

fn complete_basis(basis: &[Vec<f64>], ch: usize) -> Vec<f64> {
    for axis in 0..ch {
        let mut v = vec![0.0; ch];
        v[axis] = 1.0;
        if orthonormalize(&mut v, basis) {
            return v;
        }
    }
    unreachable!("fewer than `ch` vectors always leave a free axis")
}

/// Per-patch cosine similarity with `probe`; zero-norm patches score 0.
pub fn cosine_probe(features: &DenseFeatureMap, probe: &[f32]) -> Result<SpatialMap> {
    let ch = features.channels();
    if probe.len() != ch {
        return Err(Error::shape(format!("probe has {} channels, features {ch}", probe.len())));
    }
    let probe: Vec<f64> = probe.iter().map(|&v| v as f64).collect();
    let pnorm = sqrt(dot(&probe, &probe));
    if !(pnorm > 0.0) {
        return Err(Error::argument("probe vector has zero norm"));
    }
    let (h, w) = features.grid();
    let values = features
        .values()
        .chunks_exact(ch)
        .map(|patch| {
            let mut d = 0.0;
            let mut nn = 0.0;
            for (&a, &b) in patch.iter().zip(&probe) {
                d += a as f64 * b;
                nn += a as f64 * a as f64;
            }
            if nn > 0.0 {
                (d / (sqrt(nn) * pnorm)).clamp(-1.0, 1.0) as f32
            } else {
                0.0
            }
        })
        .collect();
    SpatialMap::new(h, w, values)
}

/// `(X − mean) · Dᵀ` over every patch of `features`, one map per component.
pub fn project_into_reference_basis(features: &DenseFeatureMap, basis: &PartBasis) -> Result<Vec<SpatialMap>> {
    let ch = features.channels();
    if ch != basis.channels {
        return Err(Error::shape(format!("features have {ch} channels, basis {}", basis.channels)));
    }
    let (h, w) = features.grid();
    let mut out = vec![Vec::with_capacity(h * w); basis.k];
    let mut centered = vec![0.0f64; ch];
    for patch in features.values().chunks_exact(ch) {
        for ((c, &v), &m) in centered.iter_mut().zip(patch).zip(&basis.mean_vec) {
            *c = v as f64 - m as f64;
        }
        for (i, maps) in out.iter_mut().enumerate() {
            let s: f64 = basis.direction(i).iter().zip(&centered).map(|(&d, c)| d as f64 * c).sum();
            maps.push(s as f32);
        }
    }
    out.into_iter().map(|v| SpatialMap::new(h, w, v)).collect()
}
