//! Synthetic phantom generation, the NA-parameterized PSF, and the
//! mixed Poisson-Gaussian degradation model.
//!
//! Noise streams are counter-based: every voxel derives its own generator
//! from `(seed, voxel index)`, so outputs are reproducible regardless of
//! evaluation order.

use crate::error::{Error, Result};
use crate::grid::Volume2DT;
use crate::linops::{convolve, BoundaryPolicy, Kernel};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

/// Scene families for the synthetic ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    MovingDisks,
    FilamentsDrift,
    StaticTexture,
}

/// Parameters of a synthetic ground-truth volume.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhantomSpec {
    #[serde(default = "default_phantom_id")]
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub scene: SceneKind,
    /// Drift in pixels per frame for the moving scenes.
    #[serde(default)]
    pub motion_amplitude: f64,
    #[serde(default)]
    pub seed: u64,
    /// Intensity scale applied to the unit-range phantom before
    /// degradation (photons at peak).
    #[serde(default = "default_peak_intensity")]
    pub peak_intensity: f64,
}

fn default_phantom_id() -> String {
    "phantom".into()
}

fn default_peak_intensity() -> f64 {
    100.0
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 4 || self.height < 4 || self.n_frames < 1 {
            return Err(Error::Param("degenerate phantom dims".into()));
        }
        if self.motion_amplitude < 0.0 {
            return Err(Error::Param("motion amplitude must be non-negative".into()));
        }
        if !(self.peak_intensity > 0.0) {
            return Err(Error::Param("peak intensity must be positive".into()));
        }
        Ok(())
    }
}

/// Degradation model parameters: PSF optics plus the two noise strengths.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DegradeSpec {
    /// Numerical aperture of the simulated objective.
    pub na: f64,
    #[serde(default = "default_wavelength")]
    pub wavelength_nm: f64,
    #[serde(default = "default_pitch")]
    pub pixel_pitch_nm: f64,
    /// Poisson strength: the blurred signal is scaled by this before
    /// sampling.
    #[serde(default = "default_gamma_p")]
    pub gamma_p: f64,
    /// Standard deviation of the additive Gaussian term.
    #[serde(default = "default_sigma_g")]
    pub sigma_g: f64,
    /// Boundary handling of the simulated blur.
    #[serde(default = "default_sim_boundary")]
    pub boundary: BoundaryPolicy,
}

fn default_wavelength() -> f64 {
    500.0
}

fn default_pitch() -> f64 {
    100.0
}

fn default_gamma_p() -> f64 {
    1.0
}

fn default_sigma_g() -> f64 {
    2.0
}

fn default_sim_boundary() -> BoundaryPolicy {
    BoundaryPolicy::Replicate
}

impl DegradeSpec {
    pub fn new(na: f64) -> Self {
        DegradeSpec {
            na,
            wavelength_nm: default_wavelength(),
            pixel_pitch_nm: default_pitch(),
            gamma_p: default_gamma_p(),
            sigma_g: default_sigma_g(),
            boundary: default_sim_boundary(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.na > 0.0) || !(self.wavelength_nm > 0.0) || !(self.pixel_pitch_nm > 0.0) {
            return Err(Error::Param("optics parameters must be positive".into()));
        }
        if self.gamma_p < 0.0 || self.sigma_g < 0.0 {
            return Err(Error::Param("noise strengths must be non-negative".into()));
        }
        Ok(())
    }

    /// Gaussian PSF width in pixels: `0.21 lambda / NA` converted by the
    /// pixel pitch.
    pub fn sigma_px(&self) -> f64 {
        0.21 * self.wavelength_nm / self.na / self.pixel_pitch_nm
    }
}

/// Deterministic per-voxel generator: a counter-mixed stream independent
/// of evaluation order.
fn voxel_rng(seed: u64, index: u64) -> ChaCha8Rng {
    // splitmix64 finalizer over the (seed, counter) pair
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}

/// Renders the ground-truth volume for a spec; deterministic per seed,
/// values in [0, 1].
pub fn make_phantom(spec: &PhantomSpec) -> Result<Volume2DT> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h, t) = (spec.width, spec.height, spec.n_frames);
    let volume = match spec.scene {
        SceneKind::MovingDisks => {
            // soft-edged disks drifting on the torus; kept off the border
            // so replicate-blur edge effects stay negligible
            let n_disks = 5;
            let disks: Vec<(f64, f64, f64, f64, f64, f64, f64)> = (0..n_disks)
                .map(|_| {
                    let cx = rng.gen_range(0.25 * w as f64..0.75 * w as f64);
                    let cy = rng.gen_range(0.25 * h as f64..0.75 * h as f64);
                    let r = rng.gen_range(0.06 * w as f64..0.14 * w as f64);
                    let amp = rng.gen_range(0.5..0.95);
                    let ang = rng.gen_range(0.0..std::f64::consts::TAU);
                    (cx, cy, r, amp, ang.cos(), ang.sin(), rng.gen_range(1.2..2.2))
                })
                .collect();
            Volume2DT::from_fn(w, h, t, |x, y, ti| {
                let mut acc: f64 = 0.0;
                for &(cx, cy, r, amp, dx, dy, edge) in &disks {
                    let px = cx + spec.motion_amplitude * ti as f64 * dx;
                    let py = cy + spec.motion_amplitude * ti as f64 * dy;
                    let d = torus_dist(x as f64, y as f64, px, py, w as f64, h as f64);
                    // smooth edge profile of width `edge`
                    acc += amp / (1.0 + ((d - r) / edge * 4.0).exp());
                }
                acc.min(1.0)
            })
        }
        SceneKind::FilamentsDrift => {
            let n_fil = 4;
            let fils: Vec<(f64, f64, f64, f64, f64, f64, f64, f64)> = (0..n_fil)
                .map(|_| {
                    let px = rng.gen_range(0.3 * w as f64..0.7 * w as f64);
                    let py = rng.gen_range(0.3 * h as f64..0.7 * h as f64);
                    let ang = rng.gen_range(0.0..std::f64::consts::PI);
                    let len = rng.gen_range(0.25 * w as f64..0.45 * w as f64);
                    let sigma = rng.gen_range(1.2..2.5);
                    let amp = rng.gen_range(0.5..0.95);
                    let drift = rng.gen_range(0.0..std::f64::consts::TAU);
                    (px, py, ang.cos(), ang.sin(), len, sigma, amp, drift)
                })
                .collect();
            Volume2DT::from_fn(w, h, t, |x, y, ti| {
                let mut acc: f64 = 0.0;
                for &(px, py, ux, uy, len, sigma, amp, drift) in &fils {
                    let ox = px + spec.motion_amplitude * ti as f64 * drift.cos();
                    let oy = py + spec.motion_amplitude * ti as f64 * drift.sin();
                    // distance from the segment centered at (ox, oy)
                    let rx = x as f64 - ox;
                    let ry = y as f64 - oy;
                    let along = (rx * ux + ry * uy).clamp(-len / 2.0, len / 2.0);
                    let dx = rx - along * ux;
                    let dy = ry - along * uy;
                    let d2 = dx * dx + dy * dy;
                    acc += amp * (-d2 / (2.0 * sigma * sigma)).exp();
                }
                acc.min(1.0)
            })
        }
        SceneKind::StaticTexture => {
            let n_blobs = 12;
            let blobs: Vec<(f64, f64, f64, f64)> = (0..n_blobs)
                .map(|_| {
                    (
                        rng.gen_range(0.2 * w as f64..0.8 * w as f64),
                        rng.gen_range(0.2 * h as f64..0.8 * h as f64),
                        rng.gen_range(1.5..5.0),
                        rng.gen_range(0.3..0.9),
                    )
                })
                .collect();
            let frame: Vec<f64> = (0..w * h)
                .map(|i| {
                    let (x, y) = ((i % w) as f64, (i / w) as f64);
                    let mut acc: f64 = 0.0;
                    for &(cx, cy, sigma, amp) in &blobs {
                        let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                        acc += amp * (-d2 / (2.0 * sigma * sigma)).exp();
                    }
                    acc.min(1.0)
                })
                .collect();
            // frames are bitwise identical: the temporal derivative is zero
            Volume2DT::from_fn(w, h, t, |x, y, _| frame[y * w + x])
        }
    };
    Ok(volume)
}

fn torus_dist(x: f64, y: f64, cx: f64, cy: f64, w: f64, h: f64) -> f64 {
    let dx = (x - cx).rem_euclid(w);
    let dx = dx.min(w - dx);
    let dy = (y - cy).rem_euclid(h);
    let dy = dy.min(h - dy);
    (dx * dx + dy * dy).sqrt()
}

/// Builds the normalized Gaussian PSF for the given optics, truncated at
/// four standard deviations.
pub fn make_psf(spec: &DegradeSpec) -> Result<Kernel> {
    spec.validate()?;
    let sigma = spec.sigma_px();
    let radius = (4.0 * sigma).ceil().max(1.0) as usize;
    let e = 2 * radius + 1;
    let mut taps = Vec::with_capacity(e * e);
    for y in 0..e {
        for x in 0..e {
            let dx = x as f64 - radius as f64;
            let dy = y as f64 - radius as f64;
            taps.push((-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|v| *v /= total);
    Kernel::new_2d(e, e, taps)
}

/// Applies the degradation model: frame-wise blur, per-voxel Poisson of the
/// scaled blurred signal, then additive Gaussian noise. Output pixels may
/// go negative; the data is not clipped.
pub fn degrade(g: &Volume2DT, spec: &DegradeSpec, seed: u64) -> Result<Volume2DT> {
    spec.validate()?;
    if g.values().iter().any(|&v| v < 0.0) {
        return Err(Error::Param("degradation input must be non-negative".into()));
    }
    let psf = make_psf(spec)?;
    let blurred = convolve(g, &psf, spec.boundary)?;
    let mut out = blurred.clone();
    for (i, v) in out.values_mut().iter_mut().enumerate() {
        let mut rng = voxel_rng(seed, i as u64);
        let lam = spec.gamma_p * (*v);
        let mut sample = if lam > 0.0 {
            Poisson::new(lam)
                .map_err(|e| Error::Param(format!("poisson rate {lam}: {e}")))?
                .sample(&mut rng)
        } else {
            0.0
        };
        if spec.sigma_g > 0.0 {
            let noise: f64 = Normal::new(0.0, spec.sigma_g).unwrap().sample(&mut rng);
            sample += noise;
        }
        *v = sample;
    }
    Ok(out)
}
