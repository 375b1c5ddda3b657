//! Reconstruction quality metrics: MSE, PSNR, and Pearson correlation.
//!
//! All three are computed over the pixels inside the inscribed circle
//! only. A parallel-beam scan never measures the corners of the square,
//! so neither reconstruction method can say anything about them; scoring
//! the full square would mostly reward agreeing about zeros. PSNR uses a
//! fixed peak value supplied by the caller (1.0 for phantoms in [0, 1])
//! rather than the per-image maximum, and Pearson correlation is the
//! scale- and offset-free alternative for settings where the intensity
//! scale is unrecoverable.

use std::error::Error;
use std::fmt;

use crate::image::{in_circle, Image};

/// Why a metric could not be computed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetricError {
    /// The two images have different side lengths.
    DimMismatch { truth: usize, recon: usize },
    /// Pearson correlation of a constant signal is undefined.
    ZeroVariance,
}

impl fmt::Display for MetricError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricError::DimMismatch { truth, recon } => {
                write!(f, "image sizes differ: truth is {truth}x{truth}, recon is {recon}x{recon}")
            }
            MetricError::ZeroVariance => {
                write!(f, "correlation is undefined for a constant image")
            }
        }
    }
}

impl Error for MetricError {}

/// Iterates the pixel pairs inside the inscribed circle.
fn masked_pairs<'a>(
    truth: &'a Image,
    recon: &'a Image,
) -> Result<impl Iterator<Item = (f64, f64)> + 'a, MetricError> {
    if truth.side() != recon.side() {
        return Err(MetricError::DimMismatch { truth: truth.side(), recon: recon.side() });
    }
    let side = truth.side();
    Ok((0..side * side).filter_map(move |i| {
        if in_circle(side, i / side, i % side) {
            Some((truth.as_slice()[i], recon.as_slice()[i]))
        } else {
            None
        }
    }))
}

/// Mean squared error over the in-circle pixels.
pub fn mse(truth: &Image, recon: &Image) -> Result<f64, MetricError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (t, r) in masked_pairs(truth, recon)? {
        let d = t - r;
        sum += d * d;
        count += 1;
    }
    Ok(sum / count as f64)
}

/// Peak signal-to-noise ratio in dB: `20 log10(max_value / sqrt(MSE))`.
/// Identical images (MSE = 0) return `f64::INFINITY`.
pub fn psnr(truth: &Image, recon: &Image, max_value: f64) -> Result<f64, MetricError> {
    assert!(max_value > 0.0, "peak value must be positive");
    let e = mse(truth, recon)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (max_value / e.sqrt()).log10())
}

/// Pearson correlation coefficient over the in-circle pixels.
pub fn pearson_corr(truth: &Image, recon: &Image) -> Result<f64, MetricError> {
    let mut n = 0usize;
    let mut sum_t = 0.0;
    let mut sum_r = 0.0;
    for (t, r) in masked_pairs(truth, recon)? {
        sum_t += t;
        sum_r += r;
        n += 1;
    }
    let mean_t = sum_t / n as f64;
    let mean_r = sum_r / n as f64;
    let mut cov = 0.0;
    let mut var_t = 0.0;
    let mut var_r = 0.0;
    for (t, r) in masked_pairs(truth, recon)? {
        let dt = t - mean_t;
        let dr = r - mean_r;
        cov += dt * dr;
        var_t += dt * dt;
        var_r += dr * dr;
    }
    if var_t == 0.0 || var_r == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    Ok(cov / (var_t.sqrt() * var_r.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::circle_mask;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(side: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_pixels(side, (0..side * side).map(|_| rng.gen_range(0.0..1.0)).collect())
    }

    #[test]
    fn identical_images_have_zero_mse_and_infinite_psnr() {
        let img = random_image(16, 3);
        assert_eq!(mse(&img, &img).unwrap(), 0.0);
        assert_eq!(psnr(&img, &img, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn constant_offset_inside_mask_gives_its_square() {
        // Truth all zero, recon 0.5 everywhere: the masked mean of 0.25 is
        // exactly 0.25 only because the average runs over in-circle pixels.
        let side = 32;
        let truth = Image::zeros(side);
        let recon = Image::from_pixels(side, vec![0.5; side * side]);
        assert!((mse(&truth, &recon).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn corners_do_not_count() {
        // Large disagreement outside the circle must not move the score.
        let side = 16;
        let truth = Image::zeros(side);
        let mut recon = Image::zeros(side);
        recon.set(0, 0, 1000.0);
        recon.set(side - 1, side - 1, -1000.0);
        assert_eq!(mse(&truth, &recon).unwrap(), 0.0);
    }

    #[test]
    fn mse_matches_double_loop_oracle() {
        let truth = random_image(24, 7);
        let recon = random_image(24, 8);
        let mask = circle_mask(24);
        let mut sum = 0.0;
        let mut count = 0;
        for row in 0..24 {
            for col in 0..24 {
                if mask[row * 24 + col] == 1.0 {
                    let d = truth.get(row, col) - recon.get(row, col);
                    sum += d * d;
                    count += 1;
                }
            }
        }
        let want = sum / count as f64;
        assert!((mse(&truth, &recon).unwrap() - want).abs() <= 1e-12);
    }

    #[test]
    fn psnr_matches_hand_values() {
        // MSE 0.01 -> 20 dB; MSE 1 -> 0 dB (peak 1.0). Build the MSE by a
        // uniform in-mask offset.
        let side = 32;
        let truth = Image::zeros(side);
        let recon = Image::from_pixels(side, vec![0.1; side * side]);
        assert!((psnr(&truth, &recon, 1.0).unwrap() - 20.0).abs() < 1e-12);
        let recon = Image::from_pixels(side, vec![1.0; side * side]);
        assert!(psnr(&truth, &recon, 1.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn psnr_decreases_as_noise_grows() {
        let side = 32;
        let truth = random_image(side, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let noise: Vec<f64> = (0..side * side).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut last = f64::INFINITY;
        for scale in [0.01, 0.03, 0.1, 0.3] {
            let pixels: Vec<f64> =
                truth.as_slice().iter().zip(&noise).map(|(t, n)| t + scale * n).collect();
            let recon = Image::from_pixels(side, pixels);
            let p = psnr(&truth, &recon, 1.0).unwrap();
            assert!(p < last, "psnr should fall as noise grows: {p} vs {last}");
            last = p;
        }
    }

    #[test]
    fn correlation_of_identity_and_affine_images() {
        let truth = random_image(20, 21);
        assert!((pearson_corr(&truth, &truth).unwrap() - 1.0).abs() < 1e-12);

        // Positive affine: r = +1; negative slope: r = -1.
        let up = Image::from_pixels(20, truth.as_slice().iter().map(|v| 3.0 * v + 1.0).collect());
        assert!((pearson_corr(&truth, &up).unwrap() - 1.0).abs() < 1e-12);
        let down =
            Image::from_pixels(20, truth.as_slice().iter().map(|v| -2.0 * v + 7.0).collect());
        assert!((pearson_corr(&truth, &down).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_is_affine_invariant_in_either_argument() {
        let a = random_image(20, 30);
        let b = random_image(20, 31);
        let r0 = pearson_corr(&a, &b).unwrap();
        let a2 = Image::from_pixels(20, a.as_slice().iter().map(|v| 0.25 * v + 3.0).collect());
        let b2 = Image::from_pixels(20, b.as_slice().iter().map(|v| 8.0 * v - 1.0).collect());
        assert!((pearson_corr(&a2, &b).unwrap() - r0).abs() <= 1e-12);
        assert!((pearson_corr(&a, &b2).unwrap() - r0).abs() <= 1e-12);
        assert!((pearson_corr(&a2, &b2).unwrap() - r0).abs() <= 1e-12);
    }

    #[test]
    fn constant_image_is_rejected() {
        let truth = random_image(16, 40);
        let flat = Image::from_pixels(16, vec![0.75; 256]);
        assert_eq!(pearson_corr(&truth, &flat), Err(MetricError::ZeroVariance));
        assert_eq!(pearson_corr(&flat, &truth), Err(MetricError::ZeroVariance));
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let a = Image::zeros(8);
        let b = Image::zeros(9);
        let err = mse(&a, &b).unwrap_err();
        assert_eq!(err, MetricError::DimMismatch { truth: 8, recon: 9 });
        assert!(err.to_string().contains("8x8"));
    }
}
