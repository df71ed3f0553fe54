//! The image sub-problem solver: linearly-constrained splitting, Augmented
//! Lagrangian, the w / f / multiplier iteration, and the exact
//! FFT-diagonalized quadratic solve.
//!
//! The constraint stacks every filter output into one field,
//! `T f = [blur; spatial; temporal; identity] f = w`, so each slice of `w`
//! gets its own closed-form prox while `f` solves a quadratic whose normal
//! equations are diagonal per frequency (2x2 per frequency when a row reads
//! both components).

use crate::error::{Error, Result};
use crate::fft::FftCache;
use crate::grid::{dot, norm_sq, pairwise_sum, Component, PairField, StackField, Volume2DT};
use crate::linops::{
    apply_bank, apply_bank_adjoint, as_mixed_norm, BoundaryPolicy, FilterBank, Kernel,
};
use crate::prox::{group_shrink_in_place, prox_as, prox_box, prox_data, BoxSet};
use rustfft::num_complex::Complex;
use std::ops::Range;

/// How the spatial slice of `w` is penalized (and hence shrunk).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpatialShrink {
    /// `sqrt(2) alpha lambda * sum ||A w_s(k)||` through the 5x10
    /// difference matrix; prox in its eigenbasis.
    ComposedDifference,
    /// `alpha lambda * sum ||w_s(k)||`; plain group shrinkage.
    Group,
}

/// The combined splitting operator: the four sub-banks, their channel
/// layout in the stacked field, and the spatial shrink kind.
#[derive(Debug, Clone)]
pub struct SplitOperator {
    blur: FilterBank,
    spatial: FilterBank,
    temporal: FilterBank,
    identity: FilterBank,
    combined: FilterBank,
    s_kind: SpatialShrink,
    boundary: BoundaryPolicy,
}

impl SplitOperator {
    /// Second-order spatio-temporal model: `[h; T_s; T_t; e]` with the
    /// difference-matrix composition on the spatial slice.
    pub fn pstaic(h: Kernel, boundary: BoundaryPolicy) -> Self {
        let blur = FilterBank::blur(h);
        let spatial = FilterBank::spatial_hessian_pair();
        let temporal = FilterBank::temporal_hessian();
        let identity = FilterBank::identity_pair();
        let combined = FilterBank::concat(&[&blur, &spatial, &temporal, &identity]);
        SplitOperator {
            blur,
            spatial,
            temporal,
            identity,
            combined,
            s_kind: SpatialShrink::ComposedDifference,
            boundary,
        }
    }

    /// First-order baseline: frame-wise gradient of `g - v` (spatial slice)
    /// and spatio-temporal gradient of `v` (temporal slice), with the kappa
    /// weightings folded into the kernel taps.
    pub fn pictv(h: Kernel, kappa1: f64, kappa2: f64, boundary: BoundaryPolicy) -> Self {
        let blur = FilterBank::blur(h);
        let spatial = FilterBank::gradient_diff_pair(kappa1);
        let temporal = FilterBank::gradient_spatiotemporal(kappa2);
        let identity = FilterBank::identity_pair();
        let combined = FilterBank::concat(&[&blur, &spatial, &temporal, &identity]);
        SplitOperator {
            blur,
            spatial,
            temporal,
            identity,
            combined,
            s_kind: SpatialShrink::Group,
            boundary,
        }
    }

    pub fn combined(&self) -> &FilterBank {
        &self.combined
    }

    pub fn blur_bank(&self) -> &FilterBank {
        &self.blur
    }

    pub fn spatial_bank(&self) -> &FilterBank {
        &self.spatial
    }

    pub fn temporal_bank(&self) -> &FilterBank {
        &self.temporal
    }

    pub fn boundary(&self) -> BoundaryPolicy {
        self.boundary
    }

    pub fn spatial_kind(&self) -> SpatialShrink {
        self.s_kind
    }

    pub fn channels(&self) -> usize {
        self.combined.n_rows()
    }

    pub fn m_range(&self) -> Range<usize> {
        0..self.blur.n_rows()
    }

    pub fn s_range(&self) -> Range<usize> {
        let a = self.blur.n_rows();
        a..a + self.spatial.n_rows()
    }

    pub fn t_range(&self) -> Range<usize> {
        let a = self.blur.n_rows() + self.spatial.n_rows();
        a..a + self.temporal.n_rows()
    }

    pub fn b_range(&self) -> Range<usize> {
        let a = self.blur.n_rows() + self.spatial.n_rows() + self.temporal.n_rows();
        a..a + self.identity.n_rows()
    }

    /// Applies the full operator.
    pub fn apply(&self, f: &PairField) -> Result<StackField> {
        apply_bank(f, &self.combined, self.boundary)
    }

    /// Value of the spatial regularizer on a stack slice (weight and
    /// lambda included).
    pub fn spatial_reg_value(&self, s: &StackField, range: Range<usize>, alpha: f64, lambda: f64) -> f64 {
        match self.s_kind {
            SpatialShrink::ComposedDifference => {
                std::f64::consts::SQRT_2 * lambda * alpha * as_mixed_norm(s, range)
            }
            SpatialShrink::Group => lambda * alpha * group_norm_sum(s, range),
        }
    }

    /// Value of the temporal regularizer on a stack slice.
    pub fn temporal_reg_value(&self, s: &StackField, range: Range<usize>, alpha: f64, lambda: f64) -> f64 {
        lambda * (1.0 - alpha) * group_norm_sum(s, range)
    }

    /// Weight sub-problem coefficients at the current pair: the spatial and
    /// temporal regularizer values with unit weights.
    pub fn weight_coeffs(
        &self,
        f: &PairField,
        lambda: f64,
        tau: f64,
    ) -> Result<crate::weights::WeightCostCoeffs> {
        let s = apply_bank(f, &self.spatial, self.boundary)?;
        let c1 = self.spatial_reg_value(&s, 0..self.spatial.n_rows(), 1.0, lambda);
        let t = apply_bank(f, &self.temporal, self.boundary)?;
        let c2 = lambda * group_norm_sum(&t, 0..self.temporal.n_rows());
        crate::weights::WeightCostCoeffs::new(c1, c2, tau)
    }
}

/// Sum over voxels of the Euclidean norm across a channel range.
pub fn group_norm_sum(s: &StackField, range: Range<usize>) -> f64 {
    let n = s.volume_len();
    let mut per_pixel = vec![0.0; n];
    for c in range {
        let ch = s.channel(c);
        for (acc, &x) in per_pixel.iter_mut().zip(ch) {
            *acc += x * x;
        }
    }
    for p in per_pixel.iter_mut() {
        *p = p.sqrt();
    }
    pairwise_sum(&per_pixel)
}

/// ADMM iterate: the image pair, the split variable, and the multiplier.
#[derive(Debug, Clone)]
pub struct SplitState {
    pub f: PairField,
    pub w: StackField,
    pub beta: StackField,
    pub iter: usize,
}

impl SplitState {
    /// Cold start from the measurement: `f = (m, 0)`, `w = T f`, zero
    /// multiplier.
    pub fn init(op: &SplitOperator, m: &Volume2DT) -> Result<Self> {
        let (w, h, t) = m.dims();
        let f = PairField::new(m.clone(), Volume2DT::zeros(w, h, t))?;
        let tf = op.apply(&f)?;
        let beta = StackField::zeros(op.channels(), w, h, t);
        Ok(SplitState {
            f,
            w: tf,
            beta,
            iter: 0,
        })
    }
}

/// Inner-loop configuration.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct AdmmConfig {
    /// Penalty parameter of the Augmented Lagrangian.
    pub rho: f64,
    /// Iteration budget per outer step.
    pub max_iters: usize,
    /// Primal residual tolerance; `None` selects `1e-4 sqrt(n_voxels)`.
    pub eps_pri: Option<f64>,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            rho: 1.0,
            max_iters: 50,
            eps_pri: None,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(Error::Param(format!("rho must be positive, got {}", self.rho)));
        }
        if let Some(e) = self.eps_pri {
            if !(e > 0.0) {
                return Err(Error::Param("eps_pri must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn eps_for(&self, n_voxels: usize) -> f64 {
        self.eps_pri.unwrap_or(1e-4 * (n_voxels as f64).sqrt())
    }
}

/// Exact solver of the normal equations `T^T T f = rhs` in the Fourier
/// domain. The per-frequency system is 2x2 Hermitian; the identity rows
/// bound its smallest eigenvalue below by 1, which is asserted at build.
pub struct FourierSolver {
    dims: (usize, usize, usize),
    mgg: Vec<f64>,
    mvv: Vec<f64>,
    mgv: Vec<Complex<f64>>,
    coupled: bool,
    cache: FftCache,
}

impl FourierSolver {
    pub fn new(op: &SplitOperator, dims: (usize, usize, usize)) -> Self {
        let (w, h, t) = dims;
        let n = w * h * t;
        let mut mgg = vec![0.0; n];
        let mut mvv = vec![0.0; n];
        let mut mgv = vec![Complex::new(0.0, 0.0); n];
        let mut coupled = false;
        let zero = vec![Complex::new(0.0, 0.0); n];
        for row in op.combined.rows() {
            let mut ag: Option<Vec<Complex<f64>>> = None;
            let mut av: Option<Vec<Complex<f64>>> = None;
            for (c, k) in &row.terms {
                let sym = k.symbol(w, h, t);
                let slot = match c {
                    Component::G => &mut ag,
                    Component::V => &mut av,
                };
                match slot {
                    Some(acc) => {
                        for (a, s) in acc.iter_mut().zip(&sym) {
                            *a += s;
                        }
                    }
                    None => *slot = Some(sym),
                }
            }
            if ag.is_some() && av.is_some() {
                coupled = true;
            }
            let ag = ag.as_ref().unwrap_or(&zero);
            let av = av.as_ref().unwrap_or(&zero);
            for i in 0..n {
                mgg[i] += ag[i].norm_sqr();
                mvv[i] += av[i].norm_sqr();
                mgv[i] += ag[i].conj() * av[i];
            }
        }
        // The identity rows contribute 1 to each diagonal, so the smallest
        // eigenvalue of every per-frequency system is at least 1.
        for i in 0..n {
            let tr = mgg[i] + mvv[i];
            let det = mgg[i] * mvv[i] - mgv[i].norm_sqr();
            let min_eig = 0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt());
            assert!(
                min_eig >= 0.999,
                "singular Fourier symbol at frequency {i}: min eigenvalue {min_eig}"
            );
        }
        FourierSolver {
            dims,
            mgg,
            mvv,
            mgv,
            coupled,
            cache: FftCache::new(),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn is_coupled(&self) -> bool {
        self.coupled
    }

    /// Solves `T^T T f = rhs` exactly.
    pub fn solve(&mut self, rhs: &PairField) -> PairField {
        let n = self.mgg.len();
        let mut bg: Vec<Complex<f64>> = rhs.g.values().iter().map(|&x| Complex::new(x, 0.0)).collect();
        let mut bv: Vec<Complex<f64>> = rhs.v.values().iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.cache.forward3(&mut bg, self.dims);
        self.cache.forward3(&mut bv, self.dims);
        for i in 0..n {
            let (a, d, b) = (self.mgg[i], self.mvv[i], self.mgv[i]);
            let det = a * d - b.norm_sqr();
            let (rg, rv) = (bg[i], bv[i]);
            bg[i] = (rg * d - b * rv) / det;
            bv[i] = (rv * a - b.conj() * rg) / det;
        }
        self.cache.inverse3(&mut bg, self.dims);
        self.cache.inverse3(&mut bv, self.dims);
        let (w, h, t) = self.dims;
        let mut out = PairField::zeros(w, h, t);
        for (dst, z) in out.g.values_mut().iter_mut().zip(&bg) {
            *dst = z.re;
        }
        for (dst, z) in out.v.values_mut().iter_mut().zip(&bv) {
            *dst = z.re;
        }
        out
    }
}

/// Applies every slice prox to `xbar = T f + beta / rho`, writing the new
/// split variable into `w_out`.
fn prox_slices(
    op: &SplitOperator,
    xbar: &StackField,
    w_out: &mut StackField,
    alpha: f64,
    lambda: f64,
    m: &Volume2DT,
    box_set: &BoxSet,
    rho: f64,
) {
    let n = xbar.volume_len();
    // data slice
    {
        let src = xbar.channel(op.m_range().start);
        let dst = w_out.channel_mut(op.m_range().start);
        let mv = m.values();
        for i in 0..n {
            dst[i] = prox_data(src[i], mv[i], rho);
        }
    }
    // spatial slice
    match op.s_kind {
        SpatialShrink::ComposedDifference => {
            let range = op.s_range();
            let mut z = [0.0; 10];
            for i in 0..n {
                xbar.gather(range.clone(), i, &mut z);
                let out = prox_as(&z, lambda, alpha, rho);
                w_out.scatter(range.clone(), i, &out);
            }
        }
        SpatialShrink::Group => {
            let range = op.s_range();
            let threshold = lambda * alpha / rho;
            let mut z = vec![0.0; range.len()];
            for i in 0..n {
                xbar.gather(range.clone(), i, &mut z);
                group_shrink_in_place(&mut z, threshold);
                w_out.scatter(range.clone(), i, &z);
            }
        }
    }
    // temporal slice
    {
        let range = op.t_range();
        let threshold = lambda * (1.0 - alpha) / rho;
        let mut z = vec![0.0; range.len()];
        for i in 0..n {
            xbar.gather(range.clone(), i, &mut z);
            group_shrink_in_place(&mut z, threshold);
            w_out.scatter(range.clone(), i, &z);
        }
    }
    // box slice
    for c in op.b_range() {
        let src = xbar.channel(c);
        let dst = w_out.channel_mut(c);
        for i in 0..n {
            dst[i] = prox_box(src[i], box_set);
        }
    }
}

/// The split-variable update: per-pixel proxes of each slice of
/// `T f + beta / rho`.
pub fn w_step(
    op: &SplitOperator,
    s: &SplitState,
    alpha: f64,
    lambda: f64,
    m: &Volume2DT,
    box_set: &BoxSet,
    rho: f64,
) -> Result<StackField> {
    let tf = op.apply(&s.f)?;
    let mut xbar = tf;
    for (x, b) in xbar.values_mut().iter_mut().zip(s.beta.values()) {
        *x += b / rho;
    }
    let mut w = StackField::zeros(op.channels(), xbar.dims().0, xbar.dims().1, xbar.dims().2);
    prox_slices(op, &xbar, &mut w, alpha, lambda, m, box_set, rho);
    Ok(w)
}

/// The image update: exact minimizer of `(1/2) ||T f - (w - beta/rho)||^2`.
pub fn f_step(op: &SplitOperator, solver: &mut FourierSolver, s: &SplitState, rho: f64) -> Result<PairField> {
    if op.boundary != BoundaryPolicy::Periodic {
        return Err(Error::Param("image update requires the periodic boundary".into()));
    }
    let mut y = s.w.clone();
    for (x, b) in y.values_mut().iter_mut().zip(s.beta.values()) {
        *x -= b / rho;
    }
    let rhs = apply_bank_adjoint(&y, op.combined(), op.boundary)?;
    Ok(solver.solve(&rhs))
}

/// The multiplier update `beta + rho (T f - w)`.
pub fn beta_step(op: &SplitOperator, s: &SplitState, rho: f64) -> Result<StackField> {
    let tf = op.apply(&s.f)?;
    let mut beta = s.beta.clone();
    for ((b, &t), &w) in beta.values_mut().iter_mut().zip(tf.values()).zip(s.w.values()) {
        *b += rho * (t - w);
    }
    Ok(beta)
}

/// Evaluates the Augmented Lagrangian at the given state.
pub fn augmented_lagrangian(
    op: &SplitOperator,
    s: &SplitState,
    alpha: f64,
    lambda: f64,
    m: &Volume2DT,
    box_set: &BoxSet,
    rho: f64,
) -> Result<f64> {
    if s.w.channels() != op.channels() || s.beta.channels() != op.channels() {
        return Err(Error::Dim("state channels do not match operator".into()));
    }
    let mut r = 0.0;
    // data fit on the w_m slice
    let wm = s.w.channel(op.m_range().start);
    let diff: Vec<f64> = wm.iter().zip(m.values()).map(|(&a, &b)| a - b).collect();
    r += 0.5 * norm_sq(&diff);
    r += op.spatial_reg_value(&s.w, op.s_range(), alpha, lambda);
    r += op.temporal_reg_value(&s.w, op.t_range(), alpha, lambda);
    for c in op.b_range() {
        if s.w.channel(c).iter().any(|&x| !box_set.contains(x)) {
            return Ok(f64::INFINITY);
        }
    }
    let tf = op.apply(&s.f)?;
    let cons: Vec<f64> = tf.values().iter().zip(s.w.values()).map(|(&a, &b)| a - b).collect();
    r += dot(s.beta.values(), &cons);
    r += 0.5 * rho * norm_sq(&cons);
    Ok(r)
}

/// Runs the inner ADMM loop on the image sub-problem, warm-starting from
/// (and mutating) `state`. Returns the primal residual history.
pub fn solve_image_subproblem(
    op: &SplitOperator,
    solver: &mut FourierSolver,
    state: &mut SplitState,
    alpha: f64,
    lambda: f64,
    m: &Volume2DT,
    box_set: &BoxSet,
    cfg: &AdmmConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let rho = cfg.rho;
    let n_vox = m.len();
    let eps = cfg.eps_for(n_vox);
    let mut residuals = Vec::with_capacity(cfg.max_iters);

    let mut tf = op.apply(&state.f)?;
    let mut xbar = StackField::zeros(op.channels(), m.dims().0, m.dims().1, m.dims().2);
    for _ in 0..cfg.max_iters {
        // w update from xbar = T f + beta / rho
        xbar.values_mut().copy_from_slice(tf.values());
        for (x, b) in xbar.values_mut().iter_mut().zip(state.beta.values()) {
            *x += b / rho;
        }
        prox_slices(op, &xbar, &mut state.w, alpha, lambda, m, box_set, rho);

        // f update from y = w - beta / rho (reuse xbar as y)
        xbar.values_mut().copy_from_slice(state.w.values());
        for (x, b) in xbar.values_mut().iter_mut().zip(state.beta.values()) {
            *x -= b / rho;
        }
        let rhs = apply_bank_adjoint(&xbar, op.combined(), op.boundary)?;
        state.f = solver.solve(&rhs);

        // multiplier update and primal residual
        tf = op.apply(&state.f)?;
        let mut r_sq = 0.0;
        for ((b, &t), &w) in state
            .beta
            .values_mut()
            .iter_mut()
            .zip(tf.values())
            .zip(state.w.values())
        {
            let c = t - w;
            r_sq += c * c;
            *b += rho * c;
        }
        let residual = r_sq.sqrt();
        if !residual.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite primal residual at inner iteration {}",
                state.iter
            )));
        }
        residuals.push(residual);
        state.iter += 1;
        if residual <= eps {
            break;
        }
    }
    Ok(residuals)
}
