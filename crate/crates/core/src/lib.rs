//! Reconstruction of images whose Fourier coefficients are partially missing.
//!
//! The known coefficients are held fixed and the missing ones are filled in by
//! minimizing a non-local patch energy. Patch similarities are measured with
//! atoms built to be spectrally supported inside the known set, so distances
//! computed on the corrupted image equal those of the clean one.

pub mod atoms;
mod eigen;
pub mod error;
pub mod experiment;
mod fft;
pub mod image;
pub mod io;
pub mod mask;
pub mod maskgen;
pub mod metrics;
pub mod scatter;
pub mod similarity;
pub mod solver;
pub mod spectrum;
pub mod synth;
pub mod tv;

pub use error::{Error, Result};
pub use image::Image;
pub use mask::{FreqMask, MaskBasis};
pub use spectrum::{dft2, idft2, project_known, project_missing, Spectrum};
