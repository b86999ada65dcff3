//! Image quality metrics and spectrum renderings.

use crate::error::Result;
use crate::image::Image;
use crate::spectrum::dft2;

/// Peak value for 8-bit-range images.
pub const PEAK: f64 = 255.0;

/// `10 log10(peak² / MSE)`; `+∞` for identical images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    psnr_with_peak(a, b, PEAK)
}

pub fn psnr_with_peak(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    let diff = a.sub(b)?;
    let mse = diff.pixels().iter().map(|d| d * d).sum::<f64>() / diff.pixels().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Relative floor added before taking the logarithm.
pub const SPECTRUM_FLOOR: f64 = 1e-9;

/// `log(|c_k| + floor)` mapped linearly onto `[0, 255]`, DC at the centre
/// pixel. The floor is relative to the largest coefficient, so a spectrum that
/// is zero off a mask renders exactly black there.
pub fn render_spectrum(img: &Image) -> Image {
    let n = img.n();
    let spec = dft2(img);
    let max = spec.raw().iter().map(|c| c.norm()).fold(0.0, f64::max);
    let floor = if max > 0.0 { SPECTRUM_FLOOR * max } else { 1.0 };
    let h = (n / 2) as i64;
    let logs: Vec<f64> = (0..n * n)
        .map(|idx| {
            let (r, c) = ((idx / n) as i64, (idx % n) as i64);
            (spec.get(r - h, c - h).norm() + floor).ln()
        })
        .collect();
    let lo = floor.ln();
    let hi = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let px = logs
        .into_iter()
        .map(|v| {
            if span > 0.0 {
                255.0 * (v - lo) / span
            } else {
                0.0
            }
        })
        .collect();
    Image::new(n, px).expect("finite by construction")
}
