//! Convolution engine, derivative filter banks and their adjoints, and the
//! fixed difference matrix acting on the stacked spatial-derivative
//! channels.
//!
//! All filters are small odd-extent stencils applied under a periodic or
//! replicate boundary. Per-frame 2D filters are stored as 3D kernels with a
//! single temporal tap, which makes frame-wise and volumetric application a
//! single code path.

use crate::error::{Error, Result};
use crate::grid::{pairwise_sum, Component, PairField, StackField, Volume2DT};
use rustfft::num_complex::Complex;
use std::sync::LazyLock;

/// Boundary handling for convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BoundaryPolicy {
    /// Indices wrap around; convolution is exactly diagonalized by the DFT.
    Periodic,
    /// Indices clamp to the nearest edge sample.
    Replicate,
}

/// A small convolution stencil with odd extent per axis, anchored at its
/// center.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    ex: usize,
    ey: usize,
    et: usize,
    taps: Vec<f64>,
}

impl Kernel {
    /// Builds a kernel from taps in x-fastest order. Extents must be odd.
    pub fn new(ex: usize, ey: usize, et: usize, taps: Vec<f64>) -> Result<Self> {
        if ex % 2 == 0 || ey % 2 == 0 || et % 2 == 0 {
            return Err(Error::Param("kernel extents must be odd".into()));
        }
        if taps.len() != ex * ey * et {
            return Err(Error::Dim(format!(
                "kernel {}x{}x{} needs {} taps, got {}",
                ex,
                ey,
                et,
                ex * ey * et,
                taps.len()
            )));
        }
        if !taps.iter().all(|t| t.is_finite()) {
            return Err(Error::Param("non-finite kernel tap".into()));
        }
        Ok(Kernel { ex, ey, et, taps })
    }

    /// A purely 2D kernel (single temporal tap).
    pub fn new_2d(ex: usize, ey: usize, taps: Vec<f64>) -> Result<Self> {
        Kernel::new(ex, ey, 1, taps)
    }

    pub fn extents(&self) -> (usize, usize, usize) {
        (self.ex, self.ey, self.et)
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Half extents (center offsets) per axis.
    pub fn radii(&self) -> (usize, usize, usize) {
        (self.ex / 2, self.ey / 2, self.et / 2)
    }

    /// Kronecker delta (identity filter).
    pub fn delta() -> Self {
        Kernel {
            ex: 1,
            ey: 1,
            et: 1,
            taps: vec![1.0],
        }
    }

    fn second_diff(axis: usize) -> Self {
        let mut e = [1usize, 1, 1];
        e[axis] = 3;
        Kernel {
            ex: e[0],
            ey: e[1],
            et: e[2],
            taps: vec![1.0, -2.0, 1.0],
        }
    }

    /// `[1, -2, 1]` along x.
    pub fn second_diff_x() -> Self {
        Self::second_diff(0)
    }

    /// `[1, -2, 1]` along y.
    pub fn second_diff_y() -> Self {
        Self::second_diff(1)
    }

    /// `[1, -2, 1]` along t.
    pub fn second_diff_t() -> Self {
        Self::second_diff(2)
    }

    /// Mixed second derivative: outer product of central differences on two
    /// distinct axes (0 = x, 1 = y, 2 = t).
    pub fn cross_diff(a: usize, b: usize) -> Self {
        assert!(a != b && a < 3 && b < 3);
        let mut e = [1usize, 1, 1];
        e[a] = 3;
        e[b] = 3;
        let (ex, ey, et) = (e[0], e[1], e[2]);
        let central = |d: i64| match d {
            -1 => 0.5,
            1 => -0.5,
            _ => 0.0,
        };
        let mut taps = vec![0.0; ex * ey * et];
        for dt in 0..et {
            for dy in 0..ey {
                for dx in 0..ex {
                    let offs = [
                        dx as i64 - (ex / 2) as i64,
                        dy as i64 - (ey / 2) as i64,
                        dt as i64 - (et / 2) as i64,
                    ];
                    taps[(dt * ey + dy) * ex + dx] = central(offs[a]) * central(offs[b]);
                }
            }
        }
        Kernel { ex, ey, et, taps }
    }

    pub fn cross_diff_xy() -> Self {
        Self::cross_diff(0, 1)
    }

    pub fn cross_diff_xt() -> Self {
        Self::cross_diff(0, 2)
    }

    pub fn cross_diff_yt() -> Self {
        Self::cross_diff(1, 2)
    }

    /// Forward difference along an axis: `g(. + 1) - g(.)`.
    pub fn forward_diff(axis: usize) -> Self {
        let mut e = [1usize, 1, 1];
        e[axis] = 3;
        Kernel {
            ex: e[0],
            ey: e[1],
            et: e[2],
            taps: vec![1.0, -1.0, 0.0],
        }
    }

    /// Returns a copy with every tap multiplied by `a`.
    pub fn scaled(&self, a: f64) -> Self {
        Kernel {
            ex: self.ex,
            ey: self.ey,
            et: self.et,
            taps: self.taps.iter().map(|t| t * a).collect(),
        }
    }

    /// Index-flipped kernel; convolution by it is the adjoint of
    /// convolution by `self` under the periodic boundary.
    pub fn flipped(&self) -> Self {
        let mut taps = self.taps.clone();
        taps.reverse();
        Kernel {
            ex: self.ex,
            ey: self.ey,
            et: self.et,
            taps,
        }
    }

    /// DFT symbol on a `w x h x t` grid: `K(o) = sum_d tap[d] e^{-i 2 pi o.d / n}`.
    pub fn symbol(&self, w: usize, h: usize, t: usize) -> Vec<Complex<f64>> {
        let twiddle = |n: usize, d: i64| -> Vec<Complex<f64>> {
            (0..n)
                .map(|o| {
                    let ang = -2.0 * std::f64::consts::PI * (o as f64) * (d as f64) / (n as f64);
                    Complex::new(ang.cos(), ang.sin())
                })
                .collect()
        };
        let (rx, ry, rt) = self.radii();
        let mut out = vec![Complex::new(0.0, 0.0); w * h * t];
        for kt in 0..self.et {
            for ky in 0..self.ey {
                for kx in 0..self.ex {
                    let tap = self.taps[(kt * self.ey + ky) * self.ex + kx];
                    if tap == 0.0 {
                        continue;
                    }
                    let tx = twiddle(w, kx as i64 - rx as i64);
                    let ty = twiddle(h, ky as i64 - ry as i64);
                    let tt = twiddle(t, kt as i64 - rt as i64);
                    for ot in 0..t {
                        let ft = tt[ot] * tap;
                        for oy in 0..h {
                            let fy = ty[oy] * ft;
                            let row = (ot * h + oy) * w;
                            for ox in 0..w {
                                out[row + ox] += fy * tx[ox];
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[inline]
fn wrap(i: i64, n: i64, b: BoundaryPolicy) -> usize {
    match b {
        BoundaryPolicy::Periodic => i.rem_euclid(n) as usize,
        BoundaryPolicy::Replicate => i.clamp(0, n - 1) as usize,
    }
}

/// Core convolution: writes (or accumulates) `k * src` into `out`.
fn conv3_into(
    out: &mut [f64],
    accumulate: bool,
    src: &[f64],
    dims: (usize, usize, usize),
    k: &Kernel,
    b: BoundaryPolicy,
) {
    let (w, h, t) = dims;
    let (rx, ry, rt) = k.radii();
    debug_assert_eq!(out.len(), src.len());
    debug_assert_eq!(src.len(), w * h * t);

    // Non-zero taps with precomputed flat offsets for the interior path.
    let mut taps: Vec<(i64, i64, i64, i64, f64)> = Vec::new();
    for kt in 0..k.et {
        for ky in 0..k.ey {
            for kx in 0..k.ex {
                let tap = k.taps[(kt * k.ey + ky) * k.ex + kx];
                if tap == 0.0 {
                    continue;
                }
                let dx = kx as i64 - rx as i64;
                let dy = ky as i64 - ry as i64;
                let dt = kt as i64 - rt as i64;
                let flat = (dt * h as i64 + dy) * w as i64 + dx;
                taps.push((dx, dy, dt, flat, tap));
            }
        }
    }

    let interior_x = rx..w.saturating_sub(rx);
    let interior_y = ry..h.saturating_sub(ry);
    let interior_t = rt..t.saturating_sub(rt);

    for zt in 0..t {
        for zy in 0..h {
            let row = (zt * h + zy) * w;
            let fast_row = interior_t.contains(&zt) && interior_y.contains(&zy);
            for zx in 0..w {
                let mut acc = 0.0;
                if fast_row && interior_x.contains(&zx) {
                    let base = (row + zx) as i64;
                    for &(_, _, _, flat, tap) in &taps {
                        acc += tap * src[(base - flat) as usize];
                    }
                } else {
                    for &(dx, dy, dt, _, tap) in &taps {
                        let sx = wrap(zx as i64 - dx, w as i64, b);
                        let sy = wrap(zy as i64 - dy, h as i64, b);
                        let st = wrap(zt as i64 - dt, t as i64, b);
                        acc += tap * src[(st * h + sy) * w + sx];
                    }
                }
                if accumulate {
                    out[row + zx] += acc;
                } else {
                    out[row + zx] = acc;
                }
            }
        }
    }
}

/// Convolves a volume with a kernel under the given boundary policy.
pub fn convolve(signal: &Volume2DT, k: &Kernel, b: BoundaryPolicy) -> Result<Volume2DT> {
    let (w, h, t) = signal.dims();
    if k.ex > w || k.ey > h || k.et > t {
        return Err(Error::Dim(format!(
            "kernel {}x{}x{} larger than signal {}x{}x{}",
            k.ex, k.ey, k.et, w, h, t
        )));
    }
    let mut out = Volume2DT::zeros(w, h, t);
    conv3_into(out.values_mut(), false, signal.values(), (w, h, t), k, b);
    Ok(out)
}

/// One filter row: a sum of (component, kernel) terms. The stacked operator
/// displays place each kernel in exactly one component column, so rows built
/// by the bank constructors below hold a single term; difference rows used
/// by first-order models hold two.
#[derive(Debug, Clone)]
pub struct BankRow {
    pub terms: Vec<(Component, Kernel)>,
}

/// Whether a bank's kernels act frame-wise or on the full volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BankDomain {
    PerFrame,
    Volume,
}

/// An ordered set of filter rows mapping a [`PairField`] to a
/// [`StackField`] with one channel per row.
#[derive(Debug, Clone)]
pub struct FilterBank {
    rows: Vec<BankRow>,
    domain: BankDomain,
}

impl FilterBank {
    pub fn new(rows: Vec<BankRow>, domain: BankDomain) -> Result<Self> {
        if rows.is_empty() || rows.iter().any(|r| r.terms.is_empty()) {
            return Err(Error::Param("bank rows must be non-empty".into()));
        }
        if domain == BankDomain::PerFrame {
            for r in &rows {
                if r.terms.iter().any(|(_, k)| k.et != 1) {
                    return Err(Error::Param(
                        "per-frame bank rows must have temporal extent 1".into(),
                    ));
                }
            }
        }
        Ok(FilterBank { rows, domain })
    }

    fn single(rows: Vec<(Component, Kernel)>, domain: BankDomain) -> Self {
        FilterBank::new(
            rows.into_iter()
                .map(|(c, k)| BankRow { terms: vec![(c, k)] })
                .collect(),
            domain,
        )
        .expect("static bank construction")
    }

    /// The frame-wise blur row: `h` acting on the restored image.
    pub fn blur(h: Kernel) -> Self {
        FilterBank::single(vec![(Component::G, h)], BankDomain::PerFrame)
    }

    /// The 10-row per-frame spatial stack: second derivatives and the delta
    /// on each component in turn.
    pub fn spatial_hessian_pair() -> Self {
        let rows_for = |c: Component| {
            vec![
                (c, Kernel::second_diff_x()),
                (c, Kernel::cross_diff_xy()),
                (c, Kernel::cross_diff_xy()), // yx occupies its own row with the same stencil
                (c, Kernel::second_diff_y()),
                (c, Kernel::delta()),
            ]
        };
        let mut rows = rows_for(Component::G);
        rows.extend(rows_for(Component::V));
        FilterBank::single(rows, BankDomain::PerFrame)
    }

    /// The 9-row volumetric stack of second derivatives acting on the
    /// decomposition component.
    pub fn temporal_hessian() -> Self {
        let v = Component::V;
        FilterBank::single(
            vec![
                (v, Kernel::second_diff_x()),
                (v, Kernel::second_diff_y()),
                (v, Kernel::cross_diff_xy()),
                (v, Kernel::cross_diff_xy()), // yx row
                (v, Kernel::cross_diff_xt()),
                (v, Kernel::cross_diff_xt()), // tx row
                (v, Kernel::cross_diff_yt()),
                (v, Kernel::cross_diff_yt()), // ty row
                (v, Kernel::second_diff_t()),
            ],
            BankDomain::Volume,
        )
    }

    /// The identity rows reproducing both components (`e * f = f`).
    pub fn identity_pair() -> Self {
        FilterBank::single(
            vec![(Component::G, Kernel::delta()), (Component::V, Kernel::delta())],
            BankDomain::Volume,
        )
    }

    /// Frame-wise forward gradient of `g - v`, with taps pre-scaled by
    /// `kappa` so the plain per-pixel Euclidean norm of the output equals
    /// the kappa-weighted gradient norm.
    pub fn gradient_diff_pair(kappa: f64) -> Self {
        let row = |axis: usize| BankRow {
            terms: vec![
                (Component::G, Kernel::forward_diff(axis).scaled(kappa)),
                (Component::V, Kernel::forward_diff(axis).scaled(-kappa)),
            ],
        };
        FilterBank::new(vec![row(0), row(1)], BankDomain::PerFrame).expect("static bank")
    }

    /// Volumetric forward gradient of the decomposition component with the
    /// temporal row pre-scaled by `kappa`.
    pub fn gradient_spatiotemporal(kappa: f64) -> Self {
        FilterBank::single(
            vec![
                (Component::V, Kernel::forward_diff(0)),
                (Component::V, Kernel::forward_diff(1)),
                (Component::V, Kernel::forward_diff(2).scaled(kappa)),
            ],
            BankDomain::Volume,
        )
    }

    /// Stacks banks in order into one combined bank.
    pub fn concat(banks: &[&FilterBank]) -> Self {
        let mut rows = Vec::new();
        let mut domain = BankDomain::PerFrame;
        for b in banks {
            rows.extend(b.rows.iter().cloned());
            if b.domain == BankDomain::Volume {
                domain = BankDomain::Volume;
            }
        }
        FilterBank { rows, domain }
    }

    pub fn rows(&self) -> &[BankRow] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn domain(&self) -> BankDomain {
        self.domain
    }

    /// Largest kernel extent across rows, per axis.
    pub fn max_extents(&self) -> (usize, usize, usize) {
        let mut m = (1, 1, 1);
        for r in &self.rows {
            for (_, k) in &r.terms {
                m.0 = m.0.max(k.ex);
                m.1 = m.1.max(k.ey);
                m.2 = m.2.max(k.et);
            }
        }
        m
    }
}

/// Applies every bank row to `f`; output channel `i` is row `i` applied to
/// its component(s).
pub fn apply_bank(f: &PairField, bank: &FilterBank, b: BoundaryPolicy) -> Result<StackField> {
    let dims = f.dims();
    let (mx, my, mt) = bank.max_extents();
    if mx > dims.0 || my > dims.1 || mt > dims.2 {
        return Err(Error::Dim("bank kernel larger than grid".into()));
    }
    let mut out = StackField::zeros(bank.n_rows(), dims.0, dims.1, dims.2);
    for (i, row) in bank.rows().iter().enumerate() {
        let ch = out.channel_mut(i);
        for (j, (c, k)) in row.terms.iter().enumerate() {
            conv3_into(ch, j > 0, f.component(*c).values(), dims, k, b);
        }
    }
    Ok(out)
}

/// Adjoint of [`apply_bank`]: scatters each channel back through the
/// flipped kernels into the source components.
///
/// Exact adjoint under the periodic boundary: `<bank(f), s> = <f, adjoint(s)>`.
pub fn apply_bank_adjoint(s: &StackField, bank: &FilterBank, b: BoundaryPolicy) -> Result<PairField> {
    if s.channels() != bank.n_rows() {
        return Err(Error::Dim(format!(
            "stack has {} channels, bank has {} rows",
            s.channels(),
            bank.n_rows()
        )));
    }
    let dims = s.dims();
    let mut out = PairField::zeros(dims.0, dims.1, dims.2);
    let mut tmp = vec![0.0; s.volume_len()];
    for (i, row) in bank.rows().iter().enumerate() {
        for (c, k) in &row.terms {
            conv3_into(&mut tmp, false, s.channel(i), dims, &k.flipped(), b);
            let dst = out.component_mut(*c).values_mut();
            for (d, &v) in dst.iter_mut().zip(&tmp) {
                *d += v;
            }
        }
    }
    Ok(out)
}

/// Applies the fixed 5x10 difference matrix: `(A z)_j = (z_j - z_{j+5}) / sqrt(2)`.
#[inline]
pub fn apply_as(z: &[f64; 10]) -> [f64; 5] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = [0.0; 5];
    for j in 0..5 {
        out[j] = (z[j] - z[j + 5]) * s;
    }
    out
}

/// Adjoint of [`apply_as`].
#[inline]
pub fn apply_as_t(u: &[f64; 5]) -> [f64; 10] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = [0.0; 10];
    for j in 0..5 {
        out[j] = u[j] * s;
        out[j + 5] = -u[j] * s;
    }
    out
}

/// Sum over pixels (and frames) of the Euclidean norm of the difference
/// matrix applied to each 10-vector of `stack` channels `range`.
pub fn as_mixed_norm(stack: &StackField, range: std::ops::Range<usize>) -> f64 {
    assert_eq!(range.len(), 10);
    let n = stack.volume_len();
    let mut per_pixel = vec![0.0; n];
    let mut z = [0.0; 10];
    for i in 0..n {
        stack.gather(range.clone(), i, &mut z);
        let u = apply_as(&z);
        per_pixel[i] = (u.iter().map(|x| x * x).sum::<f64>()).sqrt();
    }
    pairwise_sum(&per_pixel)
}

/// The orthogonal eigenbasis of `A^T A`, where `A` is the 5x10 difference
/// matrix. Columns 0..5 span the difference subspace (eigenvalue 1),
/// columns 5..10 its kernel (eigenvalue 0).
///
/// Built from the analytic block structure rather than a printed matrix;
/// `verify` checks orthogonality and the eigen relation numerically.
#[derive(Debug, Clone)]
pub struct MatrixAs {
    p: [[f64; 10]; 10], // p[r][c]: row r, column c
}

impl MatrixAs {
    fn build() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut p = [[0.0; 10]; 10];
        for j in 0..5 {
            // eigenvalue-1 column: (e_j - e_{j+5}) / sqrt(2)
            p[j][j] = s;
            p[j + 5][j] = -s;
            // eigenvalue-0 column: (e_j + e_{j+5}) / sqrt(2)
            p[j][j + 5] = s;
            p[j + 5][j + 5] = s;
        }
        MatrixAs { p }
    }

    /// The dense 5x10 difference matrix itself.
    pub fn dense_as() -> [[f64; 10]; 5] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut a = [[0.0; 10]; 5];
        for j in 0..5 {
            a[j][j] = s;
            a[j][j + 5] = -s;
        }
        a
    }

    /// `P^T y`: coordinates of `y` in the eigenbasis.
    pub fn to_basis(&self, y: &[f64; 10]) -> [f64; 10] {
        let mut c = [0.0; 10];
        for j in 0..10 {
            let mut acc = 0.0;
            for r in 0..10 {
                acc += self.p[r][j] * y[r];
            }
            c[j] = acc;
        }
        c
    }

    /// `P c`: back from eigenbasis coordinates.
    pub fn from_basis(&self, c: &[f64; 10]) -> [f64; 10] {
        let mut y = [0.0; 10];
        for r in 0..10 {
            let mut acc = 0.0;
            for j in 0..10 {
                acc += self.p[r][j] * c[j];
            }
            y[r] = acc;
        }
        y
    }

    pub fn columns(&self) -> &[[f64; 10]; 10] {
        &self.p
    }

    /// Checks `P^T P = I` and `A^T A P = P diag(1,1,1,1,1,0,...)` to `tol`.
    pub fn verify(&self, tol: f64) -> bool {
        // Orthogonality.
        for i in 0..10 {
            for j in 0..10 {
                let mut acc = 0.0;
                for r in 0..10 {
                    acc += self.p[r][i] * self.p[r][j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                if (acc - expect).abs() > tol {
                    return false;
                }
            }
        }
        // Eigen relation through the dense matrix.
        let a = Self::dense_as();
        for j in 0..10 {
            let col: [f64; 10] = std::array::from_fn(|r| self.p[r][j]);
            let mut az = [0.0; 5];
            for r in 0..5 {
                az[r] = (0..10).map(|k| a[r][k] * col[k]).sum();
            }
            let mut ataz = [0.0; 10];
            for k in 0..10 {
                ataz[k] = (0..5).map(|r| a[r][k] * az[r]).sum();
            }
            let lambda = if j < 5 { 1.0 } else { 0.0 };
            for k in 0..10 {
                if (ataz[k] - lambda * col[k]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }
}

/// Shared instance of the eigenbasis; verified once at first use.
pub static AS_BASIS: LazyLock<MatrixAs> = LazyLock::new(|| {
    let m = MatrixAs::build();
    assert!(m.verify(1e-12), "eigenbasis failed verification");
    m
});

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::dot;
    use rand::prelude::*;

    fn rand_volume(w: usize, h: usize, t: usize, rng: &mut StdRng) -> Volume2DT {
        Volume2DT::from_fn(w, h, t, |_, _, _| rng.gen_range(-1.0..1.0))
    }

    fn rand_pair(w: usize, h: usize, t: usize, rng: &mut StdRng) -> PairField {
        PairField::new(rand_volume(w, h, t, rng), rand_volume(w, h, t, rng)).unwrap()
    }

    fn rand_stack(c: usize, w: usize, h: usize, t: usize, rng: &mut StdRng) -> StackField {
        let mut s = StackField::zeros(c, w, h, t);
        s.values_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        s
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut rng = StdRng::seed_from_u64(1);
        let v = rand_volume(5, 4, 3, &mut rng);
        for b in [BoundaryPolicy::Periodic, BoundaryPolicy::Replicate] {
            let out = convolve(&v, &Kernel::delta(), b).unwrap();
            assert_eq!(out, v);
        }
    }

    #[test]
    fn second_derivative_annihilates_constants() {
        let v = Volume2DT::from_fn(6, 6, 3, |_, _, _| 4.25);
        for k in [Kernel::second_diff_x(), Kernel::second_diff_y(), Kernel::cross_diff_xy()] {
            let out = convolve(&v, &k, BoundaryPolicy::Periodic).unwrap();
            assert!(out.values().iter().all(|&x| x.abs() < 1e-14));
        }
    }

    #[test]
    fn second_diff_x_annihilates_ramp_interior() {
        // ramp in x; direct stencil evaluation gives 0 on interior pixels
        let v = Volume2DT::from_fn(8, 3, 1, |x, _, _| x as f64);
        let out = convolve(&v, &Kernel::second_diff_x(), BoundaryPolicy::Replicate).unwrap();
        for x in 1..7 {
            for y in 0..3 {
                assert!(out.get(x, y, 0).abs() < 1e-14, "interior ramp curvature at {x},{y}");
            }
        }
    }

    #[test]
    fn second_derivatives_annihilate_affine_images() {
        let v = Volume2DT::from_fn(8, 7, 3, |x, y, _| 2.0 * x as f64 - 3.0 * y as f64 + 1.0);
        for k in [Kernel::second_diff_x(), Kernel::second_diff_y(), Kernel::cross_diff_xy()] {
            let out = convolve(&v, &k, BoundaryPolicy::Replicate).unwrap();
            let (rx, ry, _) = k.radii();
            for t in 0..3 {
                for y in ry..7 - ry {
                    for x in rx..8 - rx {
                        assert!(out.get(x, y, t).abs() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn kernel_larger_than_signal_errors() {
        let v = Volume2DT::zeros(2, 2, 1);
        assert!(convolve(&v, &Kernel::second_diff_x(), BoundaryPolicy::Periodic).is_err());
    }

    fn pstaic_banks() -> Vec<FilterBank> {
        let h = Kernel::new_2d(3, 3, vec![0.0, 0.25, 0.0, 0.25, -0.5, 0.25, 0.0, 0.25, 0.0]).unwrap();
        vec![
            FilterBank::blur(h.clone()),
            FilterBank::spatial_hessian_pair(),
            FilterBank::temporal_hessian(),
            FilterBank::identity_pair(),
            FilterBank::concat(&[
                &FilterBank::blur(h),
                &FilterBank::spatial_hessian_pair(),
                &FilterBank::temporal_hessian(),
                &FilterBank::identity_pair(),
            ]),
            FilterBank::gradient_diff_pair(1.4),
            FilterBank::gradient_spatiotemporal(0.6),
        ]
    }

    #[test]
    fn adjoint_inner_product_identity() {
        let mut rng = StdRng::seed_from_u64(7);
        for bank in pstaic_banks() {
            let f = rand_pair(8, 8, 3, &mut rng);
            let s = rand_stack(bank.n_rows(), 8, 8, 3, &mut rng);
            let tf = apply_bank(&f, &bank, BoundaryPolicy::Periodic).unwrap();
            let ats = apply_bank_adjoint(&s, &bank, BoundaryPolicy::Periodic).unwrap();
            let lhs = dot(tf.values(), s.values());
            let rhs = dot(f.g.values(), ats.g.values()) + dot(f.v.values(), ats.v.values());
            let scale = lhs.abs().max(rhs.abs()).max(1e-12);
            assert!(
                (lhs - rhs).abs() / scale < 1e-10,
                "adjoint identity broken for bank with {} rows: {lhs} vs {rhs}",
                bank.n_rows()
            );
        }
    }

    #[test]
    fn apply_bank_is_linear() {
        let mut rng = StdRng::seed_from_u64(11);
        let bank = FilterBank::concat(&[&FilterBank::spatial_hessian_pair(), &FilterBank::temporal_hessian()]);
        let f1 = rand_pair(6, 5, 3, &mut rng);
        let f2 = rand_pair(6, 5, 3, &mut rng);
        let (a, b) = (0.7, -1.3);
        let mut combo = PairField::zeros(6, 5, 3);
        for (dst, (&x, &y)) in combo.g.values_mut().iter_mut().zip(f1.g.values().iter().zip(f2.g.values())) {
            *dst = a * x + b * y;
        }
        for (dst, (&x, &y)) in combo.v.values_mut().iter_mut().zip(f1.v.values().iter().zip(f2.v.values())) {
            *dst = a * x + b * y;
        }
        let lhs = apply_bank(&combo, &bank, BoundaryPolicy::Periodic).unwrap();
        let s1 = apply_bank(&f1, &bank, BoundaryPolicy::Periodic).unwrap();
        let s2 = apply_bank(&f2, &bank, BoundaryPolicy::Periodic).unwrap();
        for i in 0..lhs.values().len() {
            let expect = a * s1.values()[i] + b * s2.values()[i];
            assert!((lhs.values()[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn bank_channels_match_direct_convolution() {
        let mut rng = StdRng::seed_from_u64(13);
        let f = rand_pair(7, 6, 4, &mut rng);
        let bank = FilterBank::concat(&[&FilterBank::spatial_hessian_pair(), &FilterBank::temporal_hessian(), &FilterBank::identity_pair()]);
        let s = apply_bank(&f, &bank, BoundaryPolicy::Periodic).unwrap();
        for (i, row) in bank.rows().iter().enumerate() {
            let (c, k) = &row.terms[0];
            let direct = convolve(f.component(*c), k, BoundaryPolicy::Periodic).unwrap();
            assert_eq!(s.channel(i), direct.values(), "row {i} disagrees with direct convolve");
        }
    }

    #[test]
    fn temporal_rows_vanish_when_v_is_zero() {
        let mut rng = StdRng::seed_from_u64(17);
        let f = PairField::new(rand_volume(6, 6, 3, &mut rng), Volume2DT::zeros(6, 6, 3)).unwrap();
        let s = apply_bank(&f, &FilterBank::temporal_hessian(), BoundaryPolicy::Periodic).unwrap();
        assert!(s.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constant_pair_activates_only_delta_rows() {
        let g = Volume2DT::from_fn(6, 6, 3, |_, _, _| 2.0);
        let v = Volume2DT::from_fn(6, 6, 3, |_, _, _| -1.0);
        let f = PairField::new(g, v).unwrap();
        let ts = apply_bank(&f, &FilterBank::spatial_hessian_pair(), BoundaryPolicy::Periodic).unwrap();
        for row in 0..10 {
            let ch = ts.channel(row);
            match row {
                4 => assert!(ch.iter().all(|&x| (x - 2.0).abs() < 1e-14)),
                9 => assert!(ch.iter().all(|&x| (x + 1.0).abs() < 1e-14)),
                _ => assert!(ch.iter().all(|&x| x.abs() < 1e-13), "row {row} should vanish"),
            }
        }
        let tt = apply_bank(&f, &FilterBank::temporal_hessian(), BoundaryPolicy::Periodic).unwrap();
        assert!(tt.values().iter().all(|&x| x.abs() < 1e-13));
        let e = apply_bank(&f, &FilterBank::identity_pair(), BoundaryPolicy::Periodic).unwrap();
        assert!(e.channel(0).iter().all(|&x| x == 2.0));
        assert!(e.channel(1).iter().all(|&x| x == -1.0));
    }

    #[test]
    fn adjoint_of_delta_rows_copies_back() {
        let mut rng = StdRng::seed_from_u64(19);
        let s = rand_stack(2, 5, 5, 2, &mut rng);
        let f = apply_bank_adjoint(&s, &FilterBank::identity_pair(), BoundaryPolicy::Periodic).unwrap();
        assert_eq!(f.g.values(), s.channel(0));
        assert_eq!(f.v.values(), s.channel(1));
    }

    #[test]
    fn adjoint_of_zero_stack_is_zero() {
        let s = StackField::zeros(9, 5, 5, 3);
        let f = apply_bank_adjoint(&s, &FilterBank::temporal_hessian(), BoundaryPolicy::Periodic).unwrap();
        assert!(f.g.values().iter().all(|&x| x == 0.0));
        assert!(f.v.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn apply_as_kills_duplicated_halves() {
        let z: [f64; 10] = std::array::from_fn(|i| ((i % 5) as f64) - 2.0);
        assert!(apply_as(&z).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn apply_as_first_basis_vector() {
        let mut z = [0.0; 10];
        z[0] = 1.0;
        let u = apply_as(&z);
        assert!((u[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(u[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn apply_as_matches_dense_multiply() {
        let mut rng = StdRng::seed_from_u64(23);
        let a = MatrixAs::dense_as();
        for _ in 0..50 {
            let z: [f64; 10] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
            let fast = apply_as(&z);
            for r in 0..5 {
                let dense: f64 = (0..10).map(|c| a[r][c] * z[c]).sum();
                assert!((fast[r] - dense).abs() < 1e-14);
            }
            // adjoint consistency: <Az, u> = <z, A^T u>
            let u: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
            let atu = apply_as_t(&u);
            let lhs: f64 = (0..5).map(|i| fast[i] * u[i]).sum();
            let rhs: f64 = (0..10).map(|i| z[i] * atu[i]).sum();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn eigenbasis_verifies() {
        assert!(AS_BASIS.verify(1e-12));
    }

    #[test]
    fn eigenbasis_matches_jacobi_eigendecomposition() {
        // Independent numerical route: Jacobi sweeps on the dense 10x10
        // normal matrix must reproduce eigenvalues {1 x5, 0 x5}.
        let a = MatrixAs::dense_as();
        let mut m = [[0.0f64; 10]; 10];
        for i in 0..10 {
            for j in 0..10 {
                m[i][j] = (0..5).map(|r| a[r][i] * a[r][j]).sum();
            }
        }
        for _ in 0..50 {
            // one full Jacobi sweep
            for p in 0..9 {
                for q in (p + 1)..10 {
                    if m[p][q].abs() < 1e-15 {
                        continue;
                    }
                    let theta = 0.5 * (2.0 * m[p][q]).atan2(m[q][q] - m[p][p]);
                    let (s, c) = theta.sin_cos();
                    for k in 0..10 {
                        let (mkp, mkq) = (m[k][p], m[k][q]);
                        m[k][p] = c * mkp - s * mkq;
                        m[k][q] = s * mkp + c * mkq;
                    }
                    for k in 0..10 {
                        let (mpk, mqk) = (m[p][k], m[q][k]);
                        m[p][k] = c * mpk - s * mqk;
                        m[q][k] = s * mpk + c * mqk;
                    }
                }
            }
        }
        let mut eigs: Vec<f64> = (0..10).map(|i| m[i][i]).collect();
        eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for i in 0..5 {
            assert!(eigs[i].abs() < 1e-12, "kernel eigenvalue {}", eigs[i]);
            assert!((eigs[i + 5] - 1.0).abs() < 1e-12, "range eigenvalue {}", eigs[i + 5]);
        }
    }

    #[test]
    fn basis_roundtrip_and_as_coordinates() {
        let mut rng = StdRng::seed_from_u64(29);
        for _ in 0..20 {
            let y: [f64; 10] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
            let c = AS_BASIS.to_basis(&y);
            let back = AS_BASIS.from_basis(&c);
            for i in 0..10 {
                assert!((back[i] - y[i]).abs() < 1e-13);
            }
            // first-block coordinates equal A_s y
            let az = apply_as(&y);
            for j in 0..5 {
                assert!((c[j] - az[j]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn symbol_of_delta_is_one_everywhere() {
        let sym = Kernel::delta().symbol(6, 5, 3);
        assert!(sym.iter().all(|z| (z.re - 1.0).abs() < 1e-14 && z.im.abs() < 1e-14));
    }

    #[test]
    fn symbol_matches_convolution_of_waves() {
        // convolving a discrete Fourier mode multiplies it by the symbol
        let (w, h, t) = (8usize, 8usize, 4usize);
        let k = Kernel::cross_diff_xt();
        let sym = k.symbol(w, h, t);
        let (ox, oy, ot) = (3usize, 1usize, 2usize);
        let phase = |x: usize, y: usize, tt: usize| {
            2.0 * std::f64::consts::PI
                * (ox as f64 * x as f64 / w as f64
                    + oy as f64 * y as f64 / h as f64
                    + ot as f64 * tt as f64 / t as f64)
        };
        let re = Volume2DT::from_fn(w, h, t, |x, y, tt| phase(x, y, tt).cos());
        let im = Volume2DT::from_fn(w, h, t, |x, y, tt| phase(x, y, tt).sin());
        let cre = convolve(&re, &k, BoundaryPolicy::Periodic).unwrap();
        let cim = convolve(&im, &k, BoundaryPolicy::Periodic).unwrap();
        let s = sym[(ot * h + oy) * w + ox];
        for y in 0..h {
            for x in 0..w {
                let expect_re = s.re * re.get(x, y, 1) - s.im * im.get(x, y, 1);
                let expect_im = s.re * im.get(x, y, 1) + s.im * re.get(x, y, 1);
                assert!((cre.get(x, y, 1) - expect_re).abs() < 1e-12);
                assert!((cim.get(x, y, 1) - expect_im).abs() < 1e-12);
            }
        }
    }
}
