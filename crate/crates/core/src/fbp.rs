//! Filtered backprojection baseline.
//!
//! Each sinogram row is ramp-filtered in the frequency domain (zero-padded
//! to the next power of two at or above twice the detector count, to keep
//! the circular convolution linear), backprojected over all angles with the
//! shared projection geometry, scaled by `pi / (2 n)`, and masked to the
//! inscribed circle. The DFT is a small hand-rolled radix-2 transform —
//! detector rows are short, so there is no need for an FFT dependency.

use crate::image::{circle_mask, Image};
use crate::radon::{ProjectionGeometry, Sinogram};

/// Frequency response applied to each projection row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Filter {
    /// Plain `|f|` ramp. Sharpest, noisiest.
    Ramp,
    /// Hann-windowed ramp (default): rolls off to zero at Nyquist, trading
    /// a little resolution for much less high-frequency streaking.
    #[default]
    HannRamp,
}

impl Filter {
    /// Parses the names used by config files and the CLI.
    pub fn parse(name: &str) -> Option<Filter> {
        match name {
            "ramp" => Some(Filter::Ramp),
            "hann" | "hann-ramp" => Some(Filter::HannRamp),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Filter::Ramp => "ramp",
            Filter::HannRamp => "hann",
        }
    }
}

/// Smallest power of two `>= x`.
pub fn next_pow2(x: usize) -> usize {
    let mut p = 1;
    while p < x {
        p *= 2;
    }
    p
}

/// In-place radix-2 Cooley–Tukey FFT. `re.len()` must be a power of two.
/// `inverse` applies the conjugate transform and the `1/n` normalization.
fn fft_inplace(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    assert_eq!(n, im.len());
    assert!(n.is_power_of_two(), "FFT length must be a power of two");
    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    // Butterfly stages.
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * std::f64::consts::PI / len as f64;
        let (step_im, step_re) = ang.sin_cos();
        for start in (0..n).step_by(len) {
            let mut cur_re = 1.0;
            let mut cur_im = 0.0;
            for k in 0..len / 2 {
                let a = start + k;
                let b = a + len / 2;
                let tr = re[b] * cur_re - im[b] * cur_im;
                let ti = re[b] * cur_im + im[b] * cur_re;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                let next_re = cur_re * step_re - cur_im * step_im;
                cur_im = cur_re * step_im + cur_im * step_re;
                cur_re = next_re;
            }
        }
        len <<= 1;
    }
    if inverse {
        let scale = 1.0 / n as f64;
        for v in re.iter_mut() {
            *v *= scale;
        }
        for v in im.iter_mut() {
            *v *= scale;
        }
    }
}

/// Frequency response table for a padded row of length `padded`. Bin `k`
/// carries normalized frequency `f = min(k, padded - k) / padded` in
/// `[0, 1/2]`; the ramp response is `2 f` (which together with the final
/// `pi / (2 n)` angular weight reproduces the inverse transform's `|omega|`
/// weighting), and the Hann window multiplies by `cos^2(pi f)`.
fn filter_response(padded: usize, filter: Filter) -> Vec<f64> {
    let mut response = vec![0.0; padded];
    for (k, slot) in response.iter_mut().enumerate() {
        let f = k.min(padded - k) as f64 / padded as f64;
        let ramp = 2.0 * f;
        *slot = match filter {
            Filter::Ramp => ramp,
            Filter::HannRamp => {
                let w = (std::f64::consts::PI * f).cos();
                ramp * w * w
            }
        };
    }
    response
}

/// Ramp-filters every row of a sinogram (frequency domain, zero-padded).
pub fn filter_sinogram(sino: &Sinogram, filter: Filter) -> Sinogram {
    let m = sino.bins();
    let padded = next_pow2(2 * m);
    let response = filter_response(padded, filter);
    let mut out = Sinogram::zeros(sino.angles().clone(), m);
    let mut re = vec![0.0; padded];
    let mut im = vec![0.0; padded];
    for i in 0..sino.angle_count() {
        re[..m].copy_from_slice(sino.row(i));
        re[m..].fill(0.0);
        im.fill(0.0);
        fft_inplace(&mut re, &mut im, false);
        for k in 0..padded {
            re[k] *= response[k];
            im[k] *= response[k];
        }
        fft_inplace(&mut re, &mut im, true);
        out.row_mut(i).copy_from_slice(&re[..m]);
    }
    out
}

/// Classical filtered backprojection: filter, backproject, scale by
/// `pi / (2 n)`, mask to the inscribed circle.
pub fn fbp_reconstruct(sino: &Sinogram, filter: Filter) -> Image {
    let geometry = ProjectionGeometry::new(sino.bins(), sino.angles().clone());
    fbp_reconstruct_with(&geometry, sino, filter)
}

/// [`fbp_reconstruct`] with a prebuilt geometry (must match the sinogram).
pub fn fbp_reconstruct_with(
    geometry: &ProjectionGeometry,
    sino: &Sinogram,
    filter: Filter,
) -> Image {
    assert_eq!(geometry.side(), sino.bins());
    assert_eq!(geometry.angles(), sino.angles());
    let filtered = filter_sinogram(sino, filter);
    let side = sino.bins();
    let mut img = Image::zeros(side);
    geometry.backproject_rows(filtered.data(), img.as_mut_slice());
    let scale = std::f64::consts::PI / (2.0 * sino.angle_count() as f64);
    let mask = circle_mask(side);
    for (p, m) in img.as_mut_slice().iter_mut().zip(&mask) {
        *p *= scale * m;
    }
    img
}
