//! Colormaps for rendering maps as RGB.

/// Jet colormap for `t` in `[0, 1]` (values outside are clamped). `jet(1)` is dark red.
pub fn jet(t: f64) -> [f64; 3] {
    let t = t.clamp(0.0, 1.0);
    let ch = |center: f64| (1.5 - crate::math::abs(4.0 * t - center)).clamp(0.0, 1.0);
    [ch(3.0), ch(2.0), ch(1.0)]
}

/// Blue-white-red diverging map for `t` in `[-1, 1]`; zero is white.
pub fn diverging(t: f64) -> [f64; 3] {
    let t = t.clamp(-1.0, 1.0);
    if t >= 0.0 {
        [1.0, 1.0 - t, 1.0 - t]
    } else {
        [1.0 + t, 1.0 + t, 1.0]
    }
}

/// Scales a unit color to bytes.
pub fn to_rgb8(c: [f64; 3]) -> [u8; 3] {
    c.map(|v| crate::math::floor(v.clamp(0.0, 1.0) * 255.0 + 0.5) as u8)
}
