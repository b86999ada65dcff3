//! Synthetic test images and scenes standing in for the photographs the
//! experiments were designed around. Intensities use the 0–255 range.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::{check_side, Image};
use crate::scatter::{ScatterScene, Shape};

/// Cosine stripes of period `period` px: varying along the first axis left of
/// column `split`, along the second axis from there on.
pub fn two_stripes(n: usize, period: f64, split: usize, amp: f64) -> Result<Image> {
    check_side(n)?;
    if !(period > 0.0) || split > n {
        return Err(Error::InvalidParameter(
            "need period > 0 and split <= n".into(),
        ));
    }
    let wave = |t: usize| 128.0 + amp * (2.0 * PI * t as f64 / period).cos();
    Image::from_fn(n, |i, j| if j < split { wave(i) } else { wave(j) })
}

/// Toy stripes image: period 5 px with the orientation switching at 15/32 of the width.
pub fn toy_stripes(n: usize) -> Result<Image> {
    two_stripes(n, 5.0, n * 15 / 32, 100.0)
}

/// `count` bars, `width` px thin along the first axis, spaced `separation` px apart (left edge
/// to left edge), centred in the square and three eighths of the side tall.
pub fn bars_scene(
    n: usize,
    count: usize,
    width: usize,
    separation: usize,
    k_wave: f64,
) -> Result<ScatterScene> {
    check_side(n)?;
    if count == 0 || width == 0 || separation < width {
        return Err(Error::InvalidParameter(
            "bars need count, width > 0 and separation >= width".into(),
        ));
    }
    let span = (count - 1) * separation + width;
    if span + 2 > n {
        return Err(Error::InvalidParameter(format!(
            "{count} bars at separation {separation} do not fit"
        )));
    }
    let first = (n - span) / 2;
    let nf = n as f64;
    let shapes = (0..count)
        .map(|b| {
            let x0 = (first + b * separation) as f64 / nf;
            Shape::Rect {
                x0,
                y0: (5 * n / 16) as f64 / nf,
                x1: x0 + width as f64 / nf,
                y1: (11 * n / 16) as f64 / nf,
                amp: 255.0,
            }
        })
        .collect();
    ScatterScene::new(n, shapes, k_wave)
}

/// First pixel column of each bar of [`bars_scene`] and the bar rows.
pub fn bars_layout(
    n: usize,
    count: usize,
    width: usize,
    separation: usize,
) -> (Vec<usize>, std::ops::Range<usize>) {
    let span = (count - 1) * separation + width;
    let first = (n - span) / 2;
    (
        (0..count).map(|b| first + b * separation).collect(),
        5 * n / 16..11 * n / 16,
    )
}

/// Three disks of different sizes and contrasts.
pub fn disks_scene(n: usize, k_wave: f64) -> Result<ScatterScene> {
    let d = |cx, cy, r, amp| Shape::Disk { cx, cy, r, amp };
    ScatterScene::new(
        n,
        vec![
            d(0.3, 0.32, 0.12, 255.0),
            d(0.68, 0.4, 0.08, 200.0),
            d(0.5, 0.72, 0.1, 255.0),
        ],
        k_wave,
    )
}

/// Modified Shepp-Logan head phantom scaled to 0–255.
pub fn phantom(n: usize) -> Result<Image> {
    check_side(n)?;
    // (intensity, semi-axis a, semi-axis b, centre x, centre y, rotation in degrees)
    const ELLIPSES: [(f64, f64, f64, f64, f64, f64); 10] = [
        (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
        (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
        (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
        (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
        (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
        (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
        (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
        (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
        (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
        (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
    ];
    let nf = n as f64;
    Image::from_fn(n, |i, j| {
        // rows run top to bottom, columns left to right, both mapped to [-1, 1]
        let y = 1.0 - 2.0 * (i as f64 + 0.5) / nf;
        let x = 2.0 * (j as f64 + 0.5) / nf - 1.0;
        let v: f64 = ELLIPSES
            .iter()
            .filter(|&&(_, a, b, cx, cy, deg)| {
                let (s, c) = deg.to_radians().sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                let (u, w) = (c * dx + s * dy, -s * dx + c * dy);
                (u / a).powi(2) + (w / b).powi(2) <= 1.0
            })
            .map(|e| e.0)
            .sum();
        255.0 * v.clamp(0.0, 1.0)
    })
}
