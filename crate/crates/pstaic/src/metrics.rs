//! Restoration quality metrics: volume SNR in dB and frame-wise SSIM.

use crate::error::{Error, Result};
use crate::grid::{norm_sq, pairwise_sum, Volume2DT};

/// SNR/SSIM pair reported per benchmark cell.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricPair {
    pub snr_db: f64,
    pub ssim: f64,
}

/// Cap reported for exact matches, where the energy ratio diverges.
pub const SNR_SENTINEL_DB: f64 = 300.0;

/// `10 log10(||ref||^2 / ||ref - est||^2)` over the full volume.
pub fn snr_db(reference: &Volume2DT, estimate: &Volume2DT) -> Result<f64> {
    if reference.dims() != estimate.dims() {
        return Err(Error::Dim("snr operands must share dims".into()));
    }
    let ref_energy = norm_sq(reference.values());
    if ref_energy == 0.0 {
        return Err(Error::Param("snr undefined for zero reference".into()));
    }
    let err: Vec<f64> = reference
        .values()
        .iter()
        .zip(estimate.values())
        .map(|(&a, &b)| a - b)
        .collect();
    let err_energy = norm_sq(&err);
    if err_energy == 0.0 {
        return Ok(SNR_SENTINEL_DB);
    }
    Ok((10.0 * (ref_energy / err_energy).log10()).min(SNR_SENTINEL_DB))
}

/// Frame-wise mean SSIM with an 11x11 Gaussian window (sigma 1.5) and the
/// standard stabilizers `(0.01 R)^2`, `(0.03 R)^2`.
///
/// The dynamic range `R` is taken from the reference volume; use
/// [`ssim_with_range`] to declare it explicitly.
pub fn ssim(reference: &Volume2DT, estimate: &Volume2DT) -> Result<f64> {
    let lo = reference.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = reference.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = (hi - lo).max(1e-12);
    ssim_with_range(reference, estimate, range)
}

/// SSIM against a declared dynamic range.
pub fn ssim_with_range(reference: &Volume2DT, estimate: &Volume2DT, range: f64) -> Result<f64> {
    if reference.dims() != estimate.dims() {
        return Err(Error::Dim("ssim operands must share dims".into()));
    }
    if !(range > 0.0) {
        return Err(Error::Param("ssim dynamic range must be positive".into()));
    }
    let (w, h, t) = reference.dims();
    let win = (11usize.min(w).min(h)) | 1; // odd
    let half = win / 2;
    let weights = gaussian_window(win, 1.5);
    let c1 = (0.01 * range) * (0.01 * range);
    let c2 = (0.03 * range) * (0.03 * range);

    let mut frame_scores = Vec::with_capacity(t);
    for ti in 0..t {
        let a = reference.frame_values(ti);
        let b = estimate.frame_values(ti);
        let mut scores = Vec::with_capacity((w - 2 * half) * (h - 2 * half));
        // window fully inside the frame; partial windows are skipped
        for cy in half..h - half {
            for cx in half..w - half {
                let (mut ma, mut mb) = (0.0, 0.0);
                for dy in 0..win {
                    for dx in 0..win {
                        let wgt = weights[dy * win + dx];
                        let i = (cy + dy - half) * w + (cx + dx - half);
                        ma += wgt * a[i];
                        mb += wgt * b[i];
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for dy in 0..win {
                    for dx in 0..win {
                        let wgt = weights[dy * win + dx];
                        let i = (cy + dy - half) * w + (cx + dx - half);
                        let (da, db) = (a[i] - ma, b[i] - mb);
                        va += wgt * da * da;
                        vb += wgt * db * db;
                        cov += wgt * da * db;
                    }
                }
                let s = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                scores.push(s);
            }
        }
        frame_scores.push(pairwise_sum(&scores) / scores.len() as f64);
    }
    Ok(pairwise_sum(&frame_scores) / frame_scores.len() as f64)
}

fn gaussian_window(win: usize, sigma: f64) -> Vec<f64> {
    let half = (win / 2) as i64;
    let mut wgt = Vec::with_capacity(win * win);
    for y in -half..=half {
        for x in -half..=half {
            wgt.push((-((x * x + y * y) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = wgt.iter().sum();
    wgt.iter_mut().for_each(|v| *v /= total);
    wgt
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn rand_volume(w: usize, h: usize, t: usize, seed: u64) -> Volume2DT {
        let mut rng = StdRng::seed_from_u64(seed);
        Volume2DT::from_fn(w, h, t, |_, _, _| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn snr_exact_match_hits_sentinel() {
        let v = rand_volume(8, 8, 2, 1);
        assert_eq!(snr_db(&v, &v).unwrap(), SNR_SENTINEL_DB);
    }

    #[test]
    fn snr_zero_estimate_is_zero_db() {
        let v = rand_volume(8, 8, 2, 2);
        let z = Volume2DT::zeros(8, 8, 2);
        assert!(snr_db(&v, &z).unwrap().abs() < 1e-12);
    }

    #[test]
    fn snr_tenth_energy_error_is_twenty_db() {
        let v = rand_volume(8, 8, 2, 3);
        let est = Volume2DT::from_fn(8, 8, 2, |x, y, t| v.get(x, y, t) * 1.1);
        // error = 0.1 * ref, so the energy ratio is exactly 100
        let got = snr_db(&v, &est).unwrap();
        assert!((got - 20.0).abs() < 1e-10, "{got}");
    }

    #[test]
    fn snr_zero_reference_errors() {
        let z = Volume2DT::zeros(4, 4, 1);
        assert!(snr_db(&z, &z).is_err());
    }

    #[test]
    fn ssim_identity_is_one() {
        let v = rand_volume(16, 16, 3, 4);
        assert!((ssim(&v, &v).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_symmetric() {
        let a = rand_volume(16, 16, 2, 5);
        let b = rand_volume(16, 16, 2, 6);
        let ab = ssim_with_range(&a, &b, 1.0).unwrap();
        let ba = ssim_with_range(&b, &a, 1.0).unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn ssim_penalizes_luminance_offset() {
        let a = Volume2DT::from_fn(16, 16, 1, |_, _, _| 0.3);
        let b = Volume2DT::from_fn(16, 16, 1, |_, _, _| 0.9);
        let s = ssim_with_range(&a, &b, 1.0).unwrap();
        assert!(s < 1.0, "offset constant frames must score below 1, got {s}");
    }

    #[test]
    fn ssim_degrades_with_noise() {
        let a = rand_volume(20, 20, 2, 7);
        let mut rng = StdRng::seed_from_u64(8);
        let noisy = Volume2DT::from_fn(20, 20, 2, |x, y, t| a.get(x, y, t) + rng.gen_range(-0.2..0.2));
        let s = ssim_with_range(&a, &noisy, 1.0).unwrap();
        assert!(s < 0.999 && s > 0.0);
    }
}
