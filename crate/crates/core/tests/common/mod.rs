//! Independent oracles and synthetic fixtures shared by the integration and
//! acceptance tests. Nothing here calls into the code paths it checks.

#![allow(dead_code, clippy::needless_range_loop)]

use affordmap_core::{AttentionStack, DenseFeatureMap, Roi, Sample, SpatialMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_features(rng: &mut ChaCha8Rng, h: usize, w: usize, ch: usize) -> DenseFeatureMap {
    let values = (0..h * w * ch).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    DenseFeatureMap::new(h, w, ch, values).unwrap()
}

pub fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize) -> SpatialMap {
    SpatialMap::new(h, w, (0..h * w).map(|_| rng.gen_range(0.0f32..1.0)).collect()).unwrap()
}

/// Cyclic Jacobi eigenvalue iteration; returns pairs sorted by descending value.
pub fn jacobi_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().max(1e-300);
        if off <= scale * 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&x, &y| m[y * n + y].partial_cmp(&m[x * n + x]).unwrap());
    let values = idx.iter().map(|&i| m[i * n + i]).collect();
    let vectors = idx.iter().map(|&j| (0..n).map(|i| v[i * n + j]).collect()).collect();
    (values, vectors)
}

pub struct PcaOracle {
    pub eigenvalues: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    /// Per component, scores for the ROI cells in raster order.
    pub scores: Vec<Vec<f64>>,
    pub total_variance: f64,
}

/// Forms the full `1/N` covariance of the ROI and diagonalizes it with Jacobi.
pub fn pca_oracle(f: &DenseFeatureMap, roi: &Roi, k: usize) -> PcaOracle {
    let ch = f.channels();
    let cells: Vec<(usize, usize)> =
        (roi.row0..roi.row1).flat_map(|r| (roi.col0..roi.col1).map(move |c| (r, c))).collect();
    let n = cells.len() as f64;
    let mut mean = vec![0.0; ch];
    for &(r, c) in &cells {
        for j in 0..ch {
            mean[j] += f.patch(r, c)[j] as f64 / n;
        }
    }
    let mut cov = vec![0.0; ch * ch];
    for &(r, c) in &cells {
        let p = f.patch(r, c);
        for i in 0..ch {
            for j in 0..ch {
                cov[i * ch + j] += (p[i] as f64 - mean[i]) * (p[j] as f64 - mean[j]) / n;
            }
        }
    }
    let total_variance = (0..ch).map(|i| cov[i * ch + i]).sum();
    let (values, vectors) = jacobi_eigen(&cov, ch);
    let scores = vectors[..k]
        .iter()
        .map(|d| {
            cells
                .iter()
                .map(|&(r, c)| f.patch(r, c).iter().zip(&mean).zip(d).map(|((&x, m), dv)| (x as f64 - m) * dv).sum())
                .collect()
        })
        .collect();
    PcaOracle { eigenvalues: values[..k].to_vec(), directions: vectors[..k].to_vec(), scores, total_variance }
}

/// Largest 4-connected component by iterated min-label propagation; returns
/// `(size, [row0, col0, row1, col1])`.
pub fn largest_component_bbox(mask: &[bool], h: usize, w: usize) -> Option<(usize, [usize; 4])> {
    let mut label: Vec<usize> = (0..h * w).map(|i| if mask[i] { i } else { usize::MAX }).collect();
    loop {
        let mut changed = false;
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                if !mask[i] {
                    continue;
                }
                let mut best = label[i];
                let nbrs = [
                    (r > 0).then(|| i - w),
                    (r + 1 < h).then(|| i + w),
                    (c > 0).then(|| i - 1),
                    (c + 1 < w).then(|| i + 1),
                ];
                for j in nbrs.into_iter().flatten() {
                    if mask[j] {
                        best = best.min(label[j]);
                    }
                }
                if best < label[i] {
                    label[i] = best;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut best: Option<(usize, usize)> = None;
    for root in 0..h * w {
        if label[root] != root {
            continue;
        }
        let size = label.iter().filter(|&&l| l == root).count();
        if best.is_none_or(|(s, _)| size > s) {
            best = Some((size, root));
        }
    }
    best.map(|(size, root)| {
        let mut b = [usize::MAX, usize::MAX, 0, 0];
        for i in (0..h * w).filter(|&i| label[i] == root) {
            let (r, c) = (i / w, i % w);
            b = [b[0].min(r), b[1].min(c), b[2].max(r + 1), b[3].max(c + 1)];
        }
        (size, b)
    })
}

fn mirror(i: isize, n: isize) -> usize {
    // d c b a | a b c d | d c b a, by repeated folding
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Direct 2-D convolution with the full Gaussian kernel and mirrored borders.
pub fn blur_2d_oracle(m: &SpatialMap, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::new();
    let mut total = 0.0;
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let g1 = (-((dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            let g2 = (-((dx * dx) as f64) / (2.0 * sigma * sigma)).exp();
            kernel.push((dy, dx, g1 * g2));
            total += g1 * g2;
        }
    }
    let (h, w) = m.dims();
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = kernel
                .iter()
                .map(|&(dy, dx, k)| {
                    let rr = mirror(r as isize + dy, h as isize);
                    let cc = mirror(c as isize + dx, w as isize);
                    k / total * m.get(rr, cc) as f64
                })
                .sum();
        }
    }
    out
}

/// Scalar bilinear sample with half-pixel centers, evaluated per output pixel.
pub fn bilinear_oracle(m: &SpatialMap, out_h: usize, out_w: usize) -> Vec<f64> {
    let (h, w) = m.dims();
    let mut out = Vec::new();
    for i in 0..out_h {
        for j in 0..out_w {
            let y = ((i as f64 + 0.5) * h as f64 / out_h as f64 - 0.5).clamp(0.0, (h - 1) as f64);
            let x = ((j as f64 + 0.5) * w as f64 / out_w as f64 - 0.5).clamp(0.0, (w - 1) as f64);
            let (y0, x0) = (y.floor() as usize, x.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
            let (fy, fx) = (y - y0 as f64, x - x0 as f64);
            let g = |r: usize, c: usize| m.get(r, c) as f64;
            out.push(
                g(y0, x0) * (1.0 - fy) * (1.0 - fx)
                    + g(y0, x1) * (1.0 - fy) * fx
                    + g(y1, x0) * fy * (1.0 - fx)
                    + g(y1, x1) * fy * fx,
            );
        }
    }
    out
}

/// NSS straight from the definition.
pub fn nss_oracle(s: &[f64], fixations: &[bool]) -> f64 {
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let std = (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std < 1e-8 {
        return 0.0;
    }
    let picked: Vec<f64> = s.iter().zip(fixations).filter(|(_, &f)| f).map(|(v, _)| (v - mean) / std).collect();
    picked.iter().sum::<f64>() / picked.len() as f64
}

/// Sum of `values` over cells where `region` holds, divided by the total.
pub fn mass_fraction(m: &SpatialMap, region: impl Fn(usize, usize) -> bool) -> f64 {
    let (h, w) = m.dims();
    let mut inside = 0.0;
    let mut total = 0.0;
    for r in 0..h {
        for c in 0..w {
            let v = m.get(r, c) as f64;
            total += v;
            if region(r, c) {
                inside += v;
            }
        }
    }
    inside / total
}

/// A mug seen from the side on a 32 × 32 grid: body, handle to the right, background.
pub struct MugFixture {
    pub sample: Sample,
}

pub const MUG_GRID: usize = 32;
pub const MUG_CHANNELS: usize = 16;

pub fn in_mug_body(r: usize, c: usize) -> bool {
    (8..24).contains(&r) && (6..18).contains(&c)
}

pub fn in_mug_handle(r: usize, c: usize) -> bool {
    (12..20).contains(&r) && (18..23).contains(&c)
}

pub fn mug_fixture(seed: u64) -> MugFixture {
    let mut rng = rng(seed);
    let n = MUG_GRID;
    let ch = MUG_CHANNELS;
    let mut feats = Vec::with_capacity(n * n * ch);
    for r in 0..n {
        for c in 0..n {
            let hot = if in_mug_handle(r, c) {
                2
            } else if in_mug_body(r, c) {
                1
            } else {
                0
            };
            for j in 0..ch {
                let base = if j == hot { 1.0 } else { 0.0 };
                feats.push(base + rng.gen_range(-0.05f32..0.05));
            }
        }
    }
    let features = DenseFeatureMap::new(n, n, ch, feats).unwrap();

    let object = |r: usize, c: usize| {
        if in_mug_body(r, c) || in_mug_handle(r, c) {
            1.0
        } else {
            0.05
        }
    };
    // Verb attention centered on the handle, spilling onto the body and background.
    let verb = |r: usize, c: usize| {
        let dy = r as f64 - 15.5;
        let dx = c as f64 - 20.0;
        (0.02 + (-(dy * dy + dx * dx) / (2.0 * 4.0 * 4.0)).exp()) as f32
    };
    let layers = 3;
    let mut obj_vals = Vec::new();
    let mut verb_vals = Vec::new();
    for l in 0..layers {
        let gain = 0.8 + 0.2 * l as f32;
        for r in 0..n {
            for c in 0..n {
                obj_vals.push(gain * object(r, c));
                verb_vals.push(gain * verb(r, c));
            }
        }
    }
    let sample = Sample::new(
        features,
        AttentionStack::new(layers, n, n, verb_vals).unwrap(),
        AttentionStack::new(layers, n, n, obj_vals).unwrap(),
    )
    .unwrap();
    MugFixture { sample }
}
