//! The conventional iris-code generator: a bank of quadrature Gabor filters
//! oriented along the angular axis, binarized by response sign.
//!
//! Boundary handling follows the rubber-sheet geometry of a normalized iris:
//! the width (angular) axis wraps around, the height (radial) axis clamps.

use std::f64::consts::PI;

use thiserror::Error;

use crate::image::{BinaryImage, GrayImage};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("wavelength {0} px is below the 2 px Nyquist limit")]
    WavelengthTooShort(f64),
    #[error("kernel extents {0}x{1} must be odd and at least 3")]
    BadExtents(usize, usize),
    #[error("gaussian width factor {0} must be positive")]
    BadSigma(f64),
    #[error("filter bank needs at least one wavelength")]
    EmptyBank,
    #[error("invalid iris sample: {0}")]
    InvalidSample(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Even,
    Odd,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Even => "even",
            Phase::Odd => "odd",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaborKernel {
    pub wavelength: f64,
    pub phase: Phase,
    /// `kernel_height × kernel_width`, row-major.
    pub coefficients: Vec<f64>,
}

/// `F` zero-mean kernels sharing one odd-sized support.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    kernel_height: usize,
    kernel_width: usize,
    kernels: Vec<GaborKernel>,
}

pub const DEFAULT_EXTENTS: (usize, usize) = (9, 15);
pub const DEFAULT_SIGMA_FACTOR: f64 = 0.5;

/// Builds an even/odd pair per wavelength (angular-axis carrier, isotropic
/// Gaussian envelope of width `sigma_factor · wavelength`). Each kernel has
/// its mean removed and is scaled to unit L2 norm.
pub fn make_filter_bank(
    wavelengths: &[f64],
    extents: (usize, usize),
    sigma_factor: f64,
) -> Result<FilterBank, CodecError> {
    let (kh, kw) = extents;
    if kh < 3 || kw < 3 || kh % 2 == 0 || kw % 2 == 0 {
        return Err(CodecError::BadExtents(kh, kw));
    }
    if !(sigma_factor > 0.0) {
        return Err(CodecError::BadSigma(sigma_factor));
    }
    if wavelengths.is_empty() {
        return Err(CodecError::EmptyBank);
    }
    let mut kernels = Vec::with_capacity(2 * wavelengths.len());
    for &lambda in wavelengths {
        if !(lambda >= 2.0) {
            return Err(CodecError::WavelengthTooShort(lambda));
        }
        let sigma = sigma_factor * lambda;
        for phase in [Phase::Even, Phase::Odd] {
            let mut coefficients = Vec::with_capacity(kh * kw);
            for i in 0..kh {
                let y = i as f64 - (kh / 2) as f64;
                for j in 0..kw {
                    let x = j as f64 - (kw / 2) as f64;
                    let envelope = (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
                    let arg = 2.0 * PI * x / lambda;
                    let carrier = match phase {
                        Phase::Even => arg.cos(),
                        Phase::Odd => arg.sin(),
                    };
                    coefficients.push(envelope * carrier);
                }
            }
            remove_dc(&mut coefficients);
            let norm = coefficients.iter().map(|c| c * c).sum::<f64>().sqrt();
            coefficients.iter_mut().for_each(|c| *c /= norm);
            // rescaling can reintroduce a rounding-level mean
            remove_dc(&mut coefficients);
            kernels.push(GaborKernel {
                wavelength: lambda,
                phase,
                coefficients,
            });
        }
    }
    Ok(FilterBank {
        kernel_height: kh,
        kernel_width: kw,
        kernels,
    })
}

fn remove_dc(c: &mut [f64]) {
    let mean = c.iter().sum::<f64>() / c.len() as f64;
    c.iter_mut().for_each(|v| *v -= mean);
}

impl FilterBank {
    /// Six filters: wavelengths 8, 16, 32 px, each as a quadrature pair.
    pub fn full_scale() -> Self {
        make_filter_bank(&[8.0, 16.0, 32.0], DEFAULT_EXTENTS, DEFAULT_SIGMA_FACTOR)
            .expect("default bank parameters are valid")
    }

    /// Two filters: one quadrature pair at 16 px.
    pub fn desk_scale() -> Self {
        make_filter_bank(&[16.0], DEFAULT_EXTENTS, DEFAULT_SIGMA_FACTOR)
            .expect("default bank parameters are valid")
    }

    /// Assembles a bank from explicit kernels (e.g. read from a file).
    pub fn from_kernels(
        kernel_height: usize,
        kernel_width: usize,
        kernels: Vec<GaborKernel>,
    ) -> Result<Self, CodecError> {
        if kernel_height < 3 || kernel_width < 3 || kernel_height.is_multiple_of(2) || kernel_width.is_multiple_of(2) {
            return Err(CodecError::BadExtents(kernel_height, kernel_width));
        }
        if kernels.is_empty() {
            return Err(CodecError::EmptyBank);
        }
        for k in &kernels {
            if k.coefficients.len() != kernel_height * kernel_width {
                return Err(CodecError::BadExtents(kernel_height, kernel_width));
            }
        }
        Ok(Self {
            kernel_height,
            kernel_width,
            kernels,
        })
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn extents(&self) -> (usize, usize) {
        (self.kernel_height, self.kernel_width)
    }

    pub fn kernels(&self) -> &[GaborKernel] {
        &self.kernels
    }
}

/// A normalized iris with its validity mask (`true` = genuine iris pixel).
#[derive(Debug, Clone, PartialEq)]
pub struct IrisSample {
    pub iris: GrayImage,
    pub mask: BinaryImage,
}

impl IrisSample {
    pub fn new(iris: GrayImage, mask: BinaryImage) -> Result<Self, CodecError> {
        if iris.dims() != mask.dims() {
            return Err(CodecError::InvalidSample(format!(
                "iris is {:?} but mask is {:?}",
                iris.dims(),
                mask.dims()
            )));
        }
        if let Some(v) = iris.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(CodecError::InvalidSample(format!("iris value {v} outside [0,1]")));
        }
        Ok(Self { iris, mask })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.iris.dims()
    }
}

/// Binary code of `F` planes stacked plane-major: plane `f` occupies rows
/// `[f·H, (f+1)·H)` of a `(F·H) × W` image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrisCode {
    pub planes: usize,
    pub bits: BinaryImage,
    pub mask: BinaryImage,
}

impl IrisCode {
    pub fn plane_height(&self) -> usize {
        self.bits.height() / self.planes
    }

    pub fn len(&self) -> usize {
        self.bits.bits().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Real-valued template: filter responses laid out like the code, `F·H·W` values.
pub fn filter_responses(iris: &GrayImage, bank: &FilterBank) -> Vec<f64> {
    let (h, w) = iris.dims();
    let (kh, kw) = bank.extents();
    let (ch, cw) = (kh / 2, kw / 2);

    // Kernels are zero-mean, so shifting intensities is free; shifting by
    // one pixel's value makes flat images respond with exact zeros.
    let offset = iris.data()[0];
    // rows clamped, columns wrapped, so every tap reads a contiguous run
    let ext_w = w + kw - 1;
    let ext_h = h + kh - 1;
    let mut ext = vec![0.0; ext_h * ext_w];
    for er in 0..ext_h {
        let src_r = (er as isize - ch as isize).clamp(0, h as isize - 1) as usize;
        let src = &iris.data()[src_r * w..][..w];
        let dst = &mut ext[er * ext_w..][..ext_w];
        for (ec, d) in dst.iter_mut().enumerate() {
            *d = src[(ec + w - cw % w) % w] - offset;
        }
    }

    let mut out = vec![0.0; bank.len() * h * w];
    for (f, kernel) in bank.kernels().iter().enumerate() {
        let plane = &mut out[f * h * w..][..h * w];
        for r in 0..h {
            let orow = &mut plane[r * w..][..w];
            for i in 0..kh {
                let erow = &ext[(r + i) * ext_w..][..ext_w];
                for j in 0..kw {
                    let k = kernel.coefficients[i * kw + j];
                    for (o, e) in orow.iter_mut().zip(&erow[j..j + w]) {
                        *o += k * e;
                    }
                }
            }
        }
    }
    out
}

/// Binarizes the responses (`> 0` → 1, ties → 0) and attaches the eroded mask.
pub fn encode(sample: &IrisSample, bank: &FilterBank) -> IrisCode {
    let (h, w) = sample.dims();
    let responses = filter_responses(&sample.iris, bank);
    let bits = BinaryImage::new(
        bank.len() * h,
        w,
        responses.iter().map(|&v| v > 0.0).collect(),
    );
    IrisCode {
        planes: bank.len(),
        bits,
        mask: expand_mask(&sample.mask, bank),
    }
}

/// Code-level validity: a bit is valid only when every pixel under its
/// filter support is valid. Support rows falling outside the image count as
/// invalid; columns wrap. All planes share the bank's support, so the eroded
/// mask is tiled once per filter.
pub fn expand_mask(mask: &BinaryImage, bank: &FilterBank) -> BinaryImage {
    let (h, w) = mask.dims();
    let (kh, kw) = bank.extents();
    let (ch, cw) = (kh / 2, kw / 2);

    // horizontal erosion via circular run lengths of valid pixels
    let mut horiz = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            horiz[r * w + c] = (0..kw).all(|j| mask.get(r, (c + j + w * kw - cw) % w));
        }
    }
    let mut plane = vec![false; h * w];
    for r in ch..h.saturating_sub(ch) {
        for c in 0..w {
            plane[r * w + c] = (0..kh).all(|i| horiz[(r + i - ch) * w + c]);
        }
    }
    let mut bits = Vec::with_capacity(bank.len() * h * w);
    for _ in 0..bank.len() {
        bits.extend_from_slice(&plane);
    }
    BinaryImage::new(bank.len() * h, w, bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_zero_mean_kernels() {
        let bank = make_filter_bank(&[8.0, 16.0, 32.0], DEFAULT_EXTENTS, 0.5).unwrap();
        assert_eq!(bank.len(), 6);
        for k in bank.kernels() {
            assert!(k.coefficients.iter().sum::<f64>().abs() < 1e-12);
        }
        assert_eq!(bank, FilterBank::full_scale());
    }

    #[test]
    fn phase_symmetry_under_horizontal_flip() {
        let bank = FilterBank::full_scale();
        let (kh, kw) = bank.extents();
        for k in bank.kernels() {
            for i in 0..kh {
                for j in 0..kw {
                    let a = k.coefficients[i * kw + j];
                    let b = k.coefficients[i * kw + (kw - 1 - j)];
                    match k.phase {
                        Phase::Even => assert!((a - b).abs() < 1e-12),
                        Phase::Odd => assert!((a + b).abs() < 1e-12),
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_sub_nyquist_wavelength_and_bad_extents() {
        assert_eq!(
            make_filter_bank(&[8.0, 1.5], DEFAULT_EXTENTS, 0.5),
            Err(CodecError::WavelengthTooShort(1.5))
        );
        assert_eq!(
            make_filter_bank(&[8.0], (8, 15), 0.5),
            Err(CodecError::BadExtents(8, 15))
        );
        assert_eq!(make_filter_bank(&[8.0], (1, 1), 0.5), Err(CodecError::BadExtents(1, 1)));
        assert!(make_filter_bank(&[2.0], (3, 3), 0.5).is_ok());
    }

    #[test]
    fn constant_iris_encodes_to_zero_bits() {
        let bank = FilterBank::full_scale();
        for v in [0.0, 0.37, 1.0] {
            let s = IrisSample::new(GrayImage::filled(16, 64, v), BinaryImage::filled(16, 64, true))
                .unwrap();
            let code = encode(&s, &bank);
            assert_eq!(code.bits.count_ones(), 0, "value {v}");
        }
    }

    #[test]
    fn full_mask_erodes_only_radial_margin() {
        let bank = FilterBank::full_scale();
        let m = expand_mask(&BinaryImage::filled(20, 64, true), &bank);
        assert_eq!(m.dims(), (6 * 20, 64));
        for f in 0..6 {
            for r in 0..20 {
                let inside = (4..16).contains(&r);
                for c in 0..64 {
                    assert_eq!(m.get(f * 20 + r, c), inside);
                }
            }
        }
        let empty = expand_mask(&BinaryImage::filled(20, 64, false), &bank);
        assert_eq!(empty.count_ones(), 0);
    }

    #[test]
    fn sample_validation() {
        assert!(IrisSample::new(GrayImage::filled(2, 2, 1.2), BinaryImage::filled(2, 2, true)).is_err());
        assert!(IrisSample::new(GrayImage::filled(2, 3, 0.5), BinaryImage::filled(2, 2, true)).is_err());
    }
}
