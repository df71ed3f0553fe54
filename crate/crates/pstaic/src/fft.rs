//! Small 3D FFT helpers over `rustfft`, with cached plans.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::Arc;

/// Cached forward/inverse plans for repeated transforms on fixed grids.
pub struct FftCache {
    planner: FftPlanner<f64>,
    forward: HashMap<usize, Arc<dyn Fft<f64>>>,
    inverse: HashMap<usize, Arc<dyn Fft<f64>>>,
}

impl FftCache {
    pub fn new() -> Self {
        FftCache {
            planner: FftPlanner::new(),
            forward: HashMap::new(),
            inverse: HashMap::new(),
        }
    }

    fn plan(&mut self, n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
        let map = if inverse { &mut self.inverse } else { &mut self.forward };
        if let Some(p) = map.get(&n) {
            return p.clone();
        }
        let p = if inverse {
            self.planner.plan_fft_inverse(n)
        } else {
            self.planner.plan_fft_forward(n)
        };
        map.insert(n, p.clone());
        p
    }

    /// In-place unnormalized FFT along one axis of a 3D buffer laid out
    /// x-fastest. `axis` is 0 = x, 1 = y, 2 = t.
    fn fft_axis(
        &mut self,
        data: &mut [Complex<f64>],
        dims: (usize, usize, usize),
        axis: usize,
        inverse: bool,
    ) {
        let (w, h, t) = dims;
        let n = [w, h, t][axis];
        if n == 1 {
            return;
        }
        let plan = self.plan(n, inverse);
        let mut line = vec![Complex::new(0.0, 0.0); n];
        match axis {
            0 => {
                for row in data.chunks_exact_mut(w) {
                    plan.process(row);
                }
            }
            1 => {
                for zt in 0..t {
                    for zx in 0..w {
                        let base = zt * h * w + zx;
                        for zy in 0..h {
                            line[zy] = data[base + zy * w];
                        }
                        plan.process(&mut line);
                        for zy in 0..h {
                            data[base + zy * w] = line[zy];
                        }
                    }
                }
            }
            _ => {
                let fstride = h * w;
                for zy in 0..h {
                    for zx in 0..w {
                        let base = zy * w + zx;
                        for zt in 0..t {
                            line[zt] = data[base + zt * fstride];
                        }
                        plan.process(&mut line);
                        for zt in 0..t {
                            data[base + zt * fstride] = line[zt];
                        }
                    }
                }
            }
        }
    }

    /// Forward 3D FFT, unnormalized.
    pub fn forward3(&mut self, data: &mut [Complex<f64>], dims: (usize, usize, usize)) {
        debug_assert_eq!(data.len(), dims.0 * dims.1 * dims.2);
        self.fft_axis(data, dims, 0, false);
        self.fft_axis(data, dims, 1, false);
        self.fft_axis(data, dims, 2, false);
    }

    /// Inverse 3D FFT, normalized by `1 / (w h t)`.
    pub fn inverse3(&mut self, data: &mut [Complex<f64>], dims: (usize, usize, usize)) {
        self.fft_axis(data, dims, 0, true);
        self.fft_axis(data, dims, 1, true);
        self.fft_axis(data, dims, 2, true);
        let scale = 1.0 / (dims.0 * dims.1 * dims.2) as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }
}

impl Default for FftCache {
    fn default() -> Self {
        Self::new()
    }
}

/// Lifts a real buffer into a complex one.
pub fn to_complex(src: &[f64]) -> Vec<Complex<f64>> {
    src.iter().map(|&x| Complex::new(x, 0.0)).collect()
}

/// Real parts of a complex buffer.
pub fn to_real(src: &[Complex<f64>]) -> Vec<f64> {
    src.iter().map(|z| z.re).collect()
}
