//! Scalar and multi-channel grid containers plus the mixed-norm kernels
//! used by the regularizers.
//!
//! A 2DT image is a 2D frame sequence indexed by `(x, y, t)`. Storage is
//! frame-major, row-major within a frame; all public access is index-based
//! so callers never depend on the layout.

use crate::error::{Error, Result};

/// A single 2D frame of scalar intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame2D {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Frame2D {
    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "degenerate frame dims");
        Frame2D {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    /// Builds a frame from row-major data, checking shape and finiteness.
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width < 1 || height < 1 || data.len() != width * height {
            return Err(Error::Dim(format!(
                "frame {}x{} needs {} values, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Param("non-finite frame value".into()));
        }
        Ok(Frame2D {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Frame2D {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// A 2D image observed over time; frame `i` is a [`Frame2D`].
#[derive(Debug, Clone, PartialEq)]
pub struct Volume2DT {
    width: usize,
    height: usize,
    n_frames: usize,
    data: Vec<f64>,
}

impl Volume2DT {
    pub fn zeros(width: usize, height: usize, n_frames: usize) -> Self {
        assert!(
            width >= 1 && height >= 1 && n_frames >= 1,
            "degenerate volume dims"
        );
        Volume2DT {
            width,
            height,
            n_frames,
            data: vec![0.0; width * height * n_frames],
        }
    }

    pub fn from_vec(width: usize, height: usize, n_frames: usize, data: Vec<f64>) -> Result<Self> {
        if width < 1 || height < 1 || n_frames < 1 || data.len() != width * height * n_frames {
            return Err(Error::Dim(format!(
                "volume {}x{}x{} needs {} values, got {}",
                width,
                height,
                n_frames,
                width * height * n_frames,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Param("non-finite volume value".into()));
        }
        Ok(Volume2DT {
            width,
            height,
            n_frames,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        n_frames: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * n_frames);
        for t in 0..n_frames {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(x, y, t));
                }
            }
        }
        Volume2DT {
            width,
            height,
            n_frames,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.n_frames)
    }

    /// Voxel count `width * height * n_frames`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize, t: usize) -> usize {
        (t * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, t: usize) -> f64 {
        self.data[self.idx(x, y, t)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, t: usize, v: f64) {
        let i = self.idx(x, y, t);
        self.data[i] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Extracts time slice `i` (0-based) as a copy.
    pub fn frame(&self, i: usize) -> Result<Frame2D> {
        if i >= self.n_frames {
            return Err(Error::Dim(format!(
                "frame index {} out of range (n_frames = {})",
                i, self.n_frames
            )));
        }
        let n = self.width * self.height;
        Ok(Frame2D {
            width: self.width,
            height: self.height,
            data: self.data[i * n..(i + 1) * n].to_vec(),
        })
    }

    pub fn frame_values(&self, i: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[i * n..(i + 1) * n]
    }

    pub fn set_frame(&mut self, i: usize, frame: &Frame2D) -> Result<()> {
        if i >= self.n_frames || frame.width != self.width || frame.height != self.height {
            return Err(Error::Dim("frame shape mismatch".into()));
        }
        let n = self.width * self.height;
        self.data[i * n..(i + 1) * n].copy_from_slice(&frame.data);
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Volume2DT {
        Volume2DT {
            width: self.width,
            height: self.height,
            n_frames: self.n_frames,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// The composite unknown `f(r) = [g(r) v(r)]`: restored image plus the
/// infimal-decomposition component.
#[derive(Debug, Clone, PartialEq)]
pub struct PairField {
    pub g: Volume2DT,
    pub v: Volume2DT,
}

/// Which component of a [`PairField`] a filter row reads or writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    G,
    V,
}

impl PairField {
    pub fn new(g: Volume2DT, v: Volume2DT) -> Result<Self> {
        if g.dims() != v.dims() {
            return Err(Error::Dim("pair components must share dims".into()));
        }
        Ok(PairField { g, v })
    }

    pub fn zeros(width: usize, height: usize, n_frames: usize) -> Self {
        PairField {
            g: Volume2DT::zeros(width, height, n_frames),
            v: Volume2DT::zeros(width, height, n_frames),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.g.dims()
    }

    pub fn component(&self, c: Component) -> &Volume2DT {
        match c {
            Component::G => &self.g,
            Component::V => &self.v,
        }
    }

    pub fn component_mut(&mut self, c: Component) -> &mut Volume2DT {
        match c {
            Component::G => &mut self.g,
            Component::V => &mut self.v,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.g.values().iter().all(|v| v.is_finite()) && self.v.values().iter().all(|v| v.is_finite())
    }
}

/// A multi-channel field over a 2DT grid: one scalar volume per channel.
///
/// Holds filter-bank outputs and the ADMM splitting variables. Channel
/// storage is contiguous per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct StackField {
    channels: usize,
    width: usize,
    height: usize,
    n_frames: usize,
    data: Vec<f64>,
}

impl StackField {
    pub fn zeros(channels: usize, width: usize, height: usize, n_frames: usize) -> Self {
        assert!(channels >= 1, "stack needs at least one channel");
        StackField {
            channels,
            width,
            height,
            n_frames,
            data: vec![0.0; channels * width * height * n_frames],
        }
    }

    pub fn from_channels(channels: Vec<Volume2DT>) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::Dim("stack needs at least one channel".into()))?;
        let dims = first.dims();
        if channels.iter().any(|c| c.dims() != dims) {
            return Err(Error::Dim("stack channels must share dims".into()));
        }
        let mut data = Vec::with_capacity(channels.len() * first.len());
        for c in &channels {
            data.extend_from_slice(c.values());
        }
        Ok(StackField {
            channels: channels.len(),
            width: dims.0,
            height: dims.1,
            n_frames: dims.2,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.n_frames)
    }

    /// Voxels per channel.
    pub fn volume_len(&self) -> usize {
        self.width * self.height * self.n_frames
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.volume_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.volume_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Gathers the per-pixel vector at flat voxel index `i` across
    /// channels `range` into `out`.
    #[inline]
    pub fn gather(&self, range: std::ops::Range<usize>, i: usize, out: &mut [f64]) {
        let n = self.volume_len();
        for (k, c) in range.enumerate() {
            out[k] = self.data[c * n + i];
        }
    }

    #[inline]
    pub fn scatter(&mut self, range: std::ops::Range<usize>, i: usize, vals: &[f64]) {
        let n = self.volume_len();
        for (k, c) in range.enumerate() {
            self.data[c * n + i] = vals[k];
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Mixed-norm selector for [`mixed_norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixedNormKind {
    /// Sum over pixels of the per-pixel Euclidean norm.
    SumOfEuclid,
    /// `sum sqrt(k^2 (y1^2 + y2^2) + y3^2)` on 3-vectors.
    SumOfKappa(f64),
    /// `sum sqrt(y1^2 + y2^2 + k^2 y3^2)` on 3-vectors.
    SumOfInvKappa(f64),
    /// Sum of squares over all channels and pixels (no square root).
    FrobeniusSq,
}

/// Evaluates a mixed norm over a multi-channel field.
///
/// Returns exactly 0 on the all-zero field; shrinkage formulas branch on
/// zero norms, so no epsilon floor is applied.
pub fn mixed_norm(v: &StackField, kind: MixedNormKind) -> Result<f64> {
    let n = v.volume_len();
    match kind {
        MixedNormKind::SumOfEuclid => {
            let mut per_pixel = vec![0.0; n];
            for c in 0..v.channels() {
                let ch = v.channel(c);
                for (acc, &x) in per_pixel.iter_mut().zip(ch) {
                    *acc += x * x;
                }
            }
            for p in per_pixel.iter_mut() {
                *p = p.sqrt();
            }
            Ok(pairwise_sum(&per_pixel))
        }
        MixedNormKind::SumOfKappa(k) | MixedNormKind::SumOfInvKappa(k) => {
            if k <= 0.0 {
                return Err(Error::Param("kappa must be positive".into()));
            }
            if v.channels() != 3 {
                return Err(Error::Dim(format!(
                    "kappa norms need 3 channels, got {}",
                    v.channels()
                )));
            }
            let (w1, w3) = match kind {
                MixedNormKind::SumOfKappa(_) => (k * k, 1.0),
                _ => (1.0, k * k),
            };
            let (c1, c2, c3) = (v.channel(0), v.channel(1), v.channel(2));
            let mut per_pixel = vec![0.0; n];
            for i in 0..n {
                per_pixel[i] = (w1 * (c1[i] * c1[i] + c2[i] * c2[i]) + w3 * c3[i] * c3[i]).sqrt();
            }
            Ok(pairwise_sum(&per_pixel))
        }
        MixedNormKind::FrobeniusSq => {
            let sq: Vec<f64> = v.values().iter().map(|&x| x * x).collect();
            Ok(pairwise_sum(&sq))
        }
    }
}

/// Pairwise (cascade) summation: deterministic and more accurate than a
/// running sum on long arrays.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Squared Euclidean norm of a slice, pairwise-summed.
pub fn norm_sq(xs: &[f64]) -> f64 {
    let sq: Vec<f64> = xs.iter().map(|&x| x * x).collect();
    pairwise_sum(&sq)
}

/// Inner product of two slices, pairwise-summed.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let prod: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| x * y).collect();
    pairwise_sum(&prod)
}
