//! Candidate metric functions `V(x, δx)` on tangent vectors, with
//! derivatives, a catalog of ready-made metrics, horizontal structures
//! for symmetry-blind analysis, and a property-validation suite.
//!
//! A [`FinslerLyapunov`] pairs a nonnegative value function `V` with an
//! exponent `p ≥ 1` and a norm-like function `F` (default `V^{1/p}`)
//! sandwiched as `c1·F^p ≤ V ≤ c2·F^p`. `F(x, ·)` is expected to behave
//! like a norm on each tangent space — positive away from zero,
//! positively homogeneous, subadditive — and [`property_suite`] audits
//! those expectations by sampling, since user-declared candidates carry
//! no proof.
//!
//! A [`HorizontalStructure`] splits each tangent space into a vertical
//! part (symmetry directions to be ignored, e.g. uniform shifts in
//! consensus problems) and its horizontal complement. Metrics carrying
//! such a structure measure only the horizontal component; the
//! projection and its compatibility with a system's variational flow
//! live here as well.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use nalgebra::DMatrix;
// Resolves float math in no_std builds; std builds shadow it with inherent methods.
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{CatalogParams, DynamicsError, System};
use crate::geometry::{wrap_angle, CoordinateSpace, GeometryError, DEFAULT_FD_STEP};

/// Gradients of nonsmooth metrics are refused when the evaluation point
/// is closer than this to a kink (tied extrema).
pub const KINK_TOL: f64 = 1e-9;

/// Forward-mode projection is refused when `‖f(x)‖` falls below this.
pub const DEGENERATE_TOL: f64 = 1e-10;

/// Matrices must have symmetric-part eigenvalues above this to count as
/// positive definite.
pub const SPD_TOL: f64 = 1e-10;

/// Pass threshold for the projection-invariance residual.
pub const PROJECTION_INVARIANCE_TOL: f64 = 1e-5;

/// Errors raised by metric evaluation and construction.
#[derive(Debug, Clone, PartialEq)]
pub enum FinslerError {
    /// `x` lies in the metric's excluded set; the message restates the
    /// domain note.
    DomainViolation { what: String },
    /// Gradient requested within [`KINK_TOL`] of a nonsmooth tie set.
    KinkSet { gap: f64 },
    /// Forward-mode projection at a point where the field vanishes.
    DegeneratePoint { field_norm: f64 },
    NonFinite { context: String },
    NegativeValue { value: f64 },
    DimensionMismatch { expected: usize, got: usize },
    InvalidParameter { what: String },
    Dynamics(DynamicsError),
    Geometry(GeometryError),
}

impl fmt::Display for FinslerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FinslerError::DomainViolation { what } => write!(f, "outside metric domain: {what}"),
            FinslerError::KinkSet { gap } => {
                write!(f, "gradient requested on a kink set (tie gap {gap:.3e})")
            }
            FinslerError::DegeneratePoint { field_norm } => write!(
                f,
                "forward-mode projection undefined where the field vanishes (|f| = {field_norm:.3e})"
            ),
            FinslerError::NonFinite { context } => write!(f, "non-finite value in {context}"),
            FinslerError::NegativeValue { value } => {
                write!(f, "metric produced a negative value {value:.3e}")
            }
            FinslerError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            FinslerError::InvalidParameter { what } => write!(f, "invalid parameter: {what}"),
            FinslerError::Dynamics(e) => write!(f, "{e}"),
            FinslerError::Geometry(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for FinslerError {}

impl From<DynamicsError> for FinslerError {
    fn from(e: DynamicsError) -> Self {
        FinslerError::Dynamics(e)
    }
}

impl From<GeometryError> for FinslerError {
    fn from(e: GeometryError) -> Self {
        FinslerError::Geometry(e)
    }
}

type MetricFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync;
type DomainFn = dyn Fn(&[f64]) -> bool + Send + Sync;
type VerticalField = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type ProjectorFn = dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync;

/// How the horizontal subspace is obtained at each point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HorizontalMode {
    /// Horizontal = complement of a spanned vertical distribution.
    Distribution,
    /// Horizontal = span of the vector field itself (needs the system).
    Forward,
}

/// A vertical/horizontal splitting of tangent spaces.
pub struct HorizontalStructure {
    mode: HorizontalMode,
    vertical_span: Vec<Box<VerticalField>>,
    projector: Option<Box<ProjectorFn>>,
}

impl HorizontalStructure {
    /// Splitting by an explicit vertical distribution; the default
    /// projector removes the orthogonal projection onto the span of the
    /// vertical fields at each point.
    pub fn distribution(vertical_span: Vec<Box<VerticalField>>) -> Self {
        HorizontalStructure { mode: HorizontalMode::Distribution, vertical_span, projector: None }
    }

    /// The uniform-shift vertical direction `span{𝟙}` in `ℝⁿ`, the
    /// common case for consensus-type symmetries.
    pub fn uniform_shift(n: usize) -> Self {
        HorizontalStructure::distribution(vec![Box::new(move |_x: &[f64]| vec![1.0; n])])
    }

    /// Splitting with the horizontal space spanned by the vector field:
    /// `π_x(δx) = σ·f(x)` with `σ = fᵀδx / fᵀf`.
    pub fn forward() -> Self {
        HorizontalStructure { mode: HorizontalMode::Forward, vertical_span: Vec::new(), projector: None }
    }

    /// Override the projector (distribution mode).
    pub fn with_projector<P>(mut self, projector: P) -> Self
    where
        P: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.projector = Some(Box::new(projector));
        self
    }

    pub fn mode(&self) -> HorizontalMode {
        self.mode
    }

    /// The vertical basis fields evaluated at `x`.
    pub fn vertical_at(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.vertical_span.iter().map(|v| v(x)).collect()
    }

    /// Project `δx` onto the horizontal subspace at `x`. Forward mode
    /// requires the system (to evaluate `f(x)`) and fails at points
    /// where the field vanishes.
    pub fn project(
        &self,
        s: Option<&System>,
        t: f64,
        x: &[f64],
        dx: &[f64],
    ) -> Result<Vec<f64>, FinslerError> {
        if let Some(p) = &self.projector {
            return Ok(p(x, dx));
        }
        match self.mode {
            HorizontalMode::Distribution => {
                if self.vertical_span.is_empty() {
                    return Ok(dx.to_vec());
                }
                let dim = dx.len();
                let r = self.vertical_span.len();
                let mut vmat = DMatrix::zeros(dim, r);
                for (j, vf) in self.vertical_span.iter().enumerate() {
                    let col = vf(x);
                    if col.len() != dim {
                        return Err(FinslerError::DimensionMismatch { expected: dim, got: col.len() });
                    }
                    for i in 0..dim {
                        vmat[(i, j)] = col[i];
                    }
                }
                // Orthonormalize the vertical span and subtract the
                // component of δx inside it.
                let qr = vmat.qr();
                let q = qr.q();
                let mut out = dx.to_vec();
                for j in 0..q.ncols() {
                    let coeff: f64 = (0..dim).map(|i| q[(i, j)] * dx[i]).sum();
                    for i in 0..dim {
                        out[i] -= coeff * q[(i, j)];
                    }
                }
                Ok(out)
            }
            HorizontalMode::Forward => {
                let system = s.ok_or_else(|| FinslerError::InvalidParameter {
                    what: String::from("forward-mode projection needs the system"),
                })?;
                let f = system.field_raw(t, x);
                let ff: f64 = f.iter().map(|v| v * v).sum();
                if ff.sqrt() <= DEGENERATE_TOL {
                    return Err(FinslerError::DegeneratePoint { field_norm: ff.sqrt() });
                }
                let fd: f64 = f.iter().zip(dx).map(|(fi, di)| fi * di).sum();
                let sigma = fd / ff;
                Ok(f.iter().map(|fi| sigma * fi).collect())
            }
        }
    }
}

impl fmt::Debug for HorizontalStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HorizontalStructure")
            .field("mode", &self.mode)
            .field("vertical_span", &self.vertical_span.len())
            .field("projector", &self.projector.as_ref().map(|_| "custom"))
            .finish()
    }
}

/// A candidate metric `V(x, δx)` with exponent, bounds, and optional
/// horizontal structure.
pub struct FinslerLyapunov {
    name: String,
    dim: usize,
    value: Box<MetricFn>,
    grad_x: Option<Box<GradFn>>,
    grad_delta: Option<Box<GradFn>>,
    p: f64,
    c1: f64,
    c2: f64,
    f_fn: Option<Box<MetricFn>>,
    smooth: bool,
    tie_gap: Option<Box<MetricFn>>,
    domain: Option<Box<DomainFn>>,
    domain_note: Option<String>,
    horizontal: Option<HorizontalStructure>,
    fd_step: f64,
}

impl FinslerLyapunov {
    /// A smooth metric with `F = V^{1/p}` and `c1 = c2 = 1`. Refine with
    /// the builder methods.
    pub fn new<V>(name: &str, dim: usize, p: f64, value: V) -> Self
    where
        V: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        assert!(p >= 1.0, "exponent must satisfy p >= 1");
        assert!(dim >= 1, "dimension must be >= 1");
        FinslerLyapunov {
            name: name.to_string(),
            dim,
            value: Box::new(value),
            grad_x: None,
            grad_delta: None,
            p,
            c1: 1.0,
            c2: 1.0,
            f_fn: None,
            smooth: true,
            tie_gap: None,
            domain: None,
            domain_note: None,
            horizontal: None,
            fd_step: DEFAULT_FD_STEP,
        }
    }

    /// Attach analytic partial derivatives with respect to `x` and `δx`.
    pub fn with_grads<Gx, Gd>(mut self, grad_x: Gx, grad_delta: Gd) -> Self
    where
        Gx: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        Gd: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.grad_x = Some(Box::new(grad_x));
        self.grad_delta = Some(Box::new(grad_delta));
        self
    }

    /// Declare a separate norm function `F` with sandwich constants
    /// `c1·F^p ≤ V ≤ c2·F^p`; the declaration is audited by
    /// [`property_suite`], not trusted.
    pub fn with_f<F>(mut self, f: F, c1: f64, c2: f64) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        assert!(c1 > 0.0 && c1 <= c2, "bounds must satisfy 0 < c1 <= c2");
        self.f_fn = Some(Box::new(f));
        self.c1 = c1;
        self.c2 = c2;
        self
    }

    /// Mark the metric nonsmooth and attach a tie-gap function: the
    /// distance of `(x, δx)` from the nearest kink. Gradients closer
    /// than [`KINK_TOL`] are refused with a tie diagnostic.
    pub fn nonsmooth_with_tie_gap<G>(mut self, tie_gap: G) -> Self
    where
        G: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        self.smooth = false;
        self.tie_gap = Some(Box::new(tie_gap));
        self
    }

    /// Restrict the domain in `x`; evaluation outside fails with the
    /// given note.
    pub fn with_domain<D>(mut self, domain: D, note: &str) -> Self
    where
        D: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        self.domain = Some(Box::new(domain));
        self.domain_note = Some(note.to_string());
        self
    }

    /// Attach a horizontal structure: the metric measures only the
    /// horizontal component of displacements, and induced distances
    /// become pseudo-distances.
    pub fn with_horizontal(mut self, horizontal: HorizontalStructure) -> Self {
        self.horizontal = Some(horizontal);
        self
    }

    /// Override the finite-difference step used for gradient fallbacks.
    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.c1, self.c2)
    }

    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    pub fn domain_note(&self) -> Option<&str> {
        self.domain_note.as_deref()
    }

    pub fn horizontal(&self) -> Option<&HorizontalStructure> {
        self.horizontal.as_ref()
    }

    pub fn check_domain(&self, x: &[f64]) -> Result<(), FinslerError> {
        if let Some(d) = &self.domain {
            if !d(x) {
                return Err(FinslerError::DomainViolation {
                    what: self.domain_note.clone().unwrap_or_else(|| String::from("excluded point")),
                });
            }
        }
        Ok(())
    }

    fn check_dims(&self, x: &[f64], dx: &[f64]) -> Result<(), FinslerError> {
        if x.len() != self.dim {
            return Err(FinslerError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        if dx.len() != self.dim {
            return Err(FinslerError::DimensionMismatch { expected: self.dim, got: dx.len() });
        }
        Ok(())
    }

    /// Evaluate `V(x, δx)`.
    pub fn eval(&self, x: &[f64], dx: &[f64]) -> Result<f64, FinslerError> {
        self.check_dims(x, dx)?;
        self.check_domain(x)?;
        let v = (self.value)(x, dx);
        if !v.is_finite() {
            return Err(FinslerError::NonFinite { context: format!("value of {}", self.name) });
        }
        if v < -1e-12 {
            return Err(FinslerError::NegativeValue { value: v });
        }
        Ok(v.max(0.0))
    }

    /// Evaluate the norm-like function `F(x, δx)` (declared, or
    /// `V^{1/p}` by default).
    pub fn f(&self, x: &[f64], dx: &[f64]) -> Result<f64, FinslerError> {
        match &self.f_fn {
            Some(ff) => {
                self.check_dims(x, dx)?;
                self.check_domain(x)?;
                let v = ff(x, dx);
                if !v.is_finite() {
                    return Err(FinslerError::NonFinite { context: format!("norm of {}", self.name) });
                }
                if v < -1e-12 {
                    return Err(FinslerError::NegativeValue { value: v });
                }
                Ok(v.max(0.0))
            }
            None => Ok(self.eval(x, dx)?.powf(1.0 / self.p)),
        }
    }

    /// Partial derivatives `(∂V/∂x, ∂V/∂δx)` at `(x, δx)` — analytic
    /// when attached, central finite differences otherwise. Nonsmooth
    /// metrics refuse points within [`KINK_TOL`] of a tie set (the
    /// caller perturbs and retries).
    pub fn grad(&self, x: &[f64], dx: &[f64]) -> Result<(Vec<f64>, Vec<f64>), FinslerError> {
        self.check_dims(x, dx)?;
        self.check_domain(x)?;
        if let Some(gap_fn) = &self.tie_gap {
            let gap = gap_fn(x, dx);
            if gap < KINK_TOL {
                return Err(FinslerError::KinkSet { gap });
            }
        }
        let gx = match &self.grad_x {
            Some(g) => g(x, dx),
            None => self.fd_grad(x, dx, true)?,
        };
        let gd = match &self.grad_delta {
            Some(g) => g(x, dx),
            None => self.fd_grad(x, dx, false)?,
        };
        if gx.iter().chain(gd.iter()).any(|v| !v.is_finite()) {
            return Err(FinslerError::NonFinite { context: format!("gradient of {}", self.name) });
        }
        Ok((gx, gd))
    }

    fn fd_grad(&self, x: &[f64], dx: &[f64], wrt_x: bool) -> Result<Vec<f64>, FinslerError> {
        let h = self.fd_step;
        let mut out = Vec::with_capacity(self.dim);
        let mut xbuf = x.to_vec();
        let mut dbuf = dx.to_vec();
        for i in 0..self.dim {
            let base = if wrt_x { x[i] } else { dx[i] };
            let probe = if wrt_x { &mut xbuf } else { &mut dbuf };
            probe[i] = base + h;
            let hi = probe[i];
            probe[i] = base - h;
            let span = hi - probe[i];
            let minus = (self.value)(&xbuf, &dbuf);
            let probe = if wrt_x { &mut xbuf } else { &mut dbuf };
            probe[i] = hi;
            let plus = (self.value)(&xbuf, &dbuf);
            let probe = if wrt_x { &mut xbuf } else { &mut dbuf };
            probe[i] = base;
            let d = (plus - minus) / span;
            if !d.is_finite() {
                return Err(FinslerError::NonFinite { context: format!("fd gradient of {}", self.name) });
            }
            out.push(d);
        }
        Ok(out)
    }
}

impl fmt::Debug for FinslerLyapunov {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FinslerLyapunov")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("p", &self.p)
            .field("c1", &self.c1)
            .field("c2", &self.c2)
            .field("smooth", &self.smooth)
            .field("horizontal", &self.horizontal)
            .finish()
    }
}

// --- catalog ---------------------------------------------------------------

pub(crate) fn check_spd(p: &DMatrix<f64>, label: &str) -> Result<(), FinslerError> {
    let n = p.nrows();
    if p.ncols() != n || n == 0 {
        return Err(FinslerError::InvalidParameter { what: format!("{label} must be square and nonempty") });
    }
    let asym = (p - p.transpose()).abs().max();
    if asym > 1e-9 {
        return Err(FinslerError::InvalidParameter { what: format!("{label} is not symmetric (deviation {asym:.3e})") });
    }
    let eigs = p.clone().symmetric_eigenvalues();
    let min_eig = eigs.min();
    if min_eig <= SPD_TOL {
        return Err(FinslerError::InvalidParameter {
            what: format!("{label} is not positive definite (min eigenvalue {min_eig:.3e})"),
        });
    }
    Ok(())
}

fn quadratic_form(p: &DMatrix<f64>, dx: &[f64]) -> f64 {
    let n = p.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += dx[i] * p[(i, j)] * dx[j];
        }
    }
    acc
}

/// Constant quadratic metric `V = δxᵀ P δx` for symmetric positive
/// definite `P`, with `p = 2` and exact gradients.
pub fn quadratic(p: DMatrix<f64>) -> Result<FinslerLyapunov, FinslerError> {
    check_spd(&p, "P")?;
    let n = p.nrows();
    let p_val = p.clone();
    let p_grad = p.clone();
    Ok(FinslerLyapunov::new("quadratic", n, 2.0, move |_x, dx| quadratic_form(&p_val, dx)).with_grads(
        move |_x, _dx| vec![0.0; n],
        move |_x, dx| {
            (0..n)
                .map(|i| 2.0 * (0..n).map(|j| p_grad[(i, j)] * dx[j]).sum::<f64>())
                .collect()
        },
    ))
}

/// State-dependent quadratic metric `V = δxᵀ P(x) δx`. `P` is checked
/// for positive definiteness at the supplied points; gradients fall
/// back to finite differences of the user closure.
pub fn riemannian<P>(dim: usize, p_fn: P, check_points: &[Vec<f64>]) -> Result<FinslerLyapunov, FinslerError>
where
    P: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
{
    for x in check_points {
        if x.len() != dim {
            return Err(FinslerError::DimensionMismatch { expected: dim, got: x.len() });
        }
        check_spd(&p_fn(x), "P(x)")?;
    }
    Ok(FinslerLyapunov::new("riemannian", dim, 2.0, move |x, dx| quadratic_form(&p_fn(x), dx)))
}

/// State-dependent quadratic metric under its metric-condition alias;
/// identical mechanics to [`riemannian`].
pub fn lohmiller<M>(dim: usize, m_fn: M, check_points: &[Vec<f64>]) -> Result<FinslerLyapunov, FinslerError>
where
    M: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
{
    let mut metric = riemannian(dim, m_fn, check_points)?;
    metric.name = String::from("lohmiller");
    Ok(metric)
}

/// k-norm metric `V = |δx|_k` with `p = 1`. `k = 1` is nonsmooth
/// (kinks where any coordinate vanishes); `k > 1` is smooth away from
/// the origin.
pub fn knorm(k: f64, dim: usize) -> Result<FinslerLyapunov, FinslerError> {
    if !(k >= 1.0) || !k.is_finite() {
        return Err(FinslerError::InvalidParameter { what: format!("k = {k} (must be >= 1)") });
    }
    let value = move |_x: &[f64], dx: &[f64]| -> f64 {
        dx.iter().map(|d| d.abs().powf(k)).sum::<f64>().powf(1.0 / k)
    };
    let grad_delta = move |_x: &[f64], dx: &[f64]| -> Vec<f64> {
        let norm: f64 = dx.iter().map(|d| d.abs().powf(k)).sum::<f64>().powf(1.0 / k);
        if norm <= 0.0 {
            return vec![0.0; dx.len()];
        }
        dx.iter()
            .map(|d| d.signum() * d.abs().powf(k - 1.0) / norm.powf(k - 1.0))
            .collect()
    };
    let metric = FinslerLyapunov::new("knorm", dim, 1.0, value)
        .with_grads(move |_x, dx| vec![0.0; dx.len()], grad_delta);
    if k == 1.0 {
        // Kinks wherever a coordinate crosses zero; the gap is the
        // distance of the nearest coordinate from zero.
        Ok(metric.nonsmooth_with_tie_gap(|_x, dx| {
            dx.iter().map(|d| d.abs()).fold(f64::INFINITY, f64::min)
        }))
    } else {
        Ok(metric)
    }
}

/// Oscillator metric `V = δθ² / (1 + cos θ)` on the circle, undefined
/// within 1e−6 of the antipode θ = π.
pub fn oscillator_v2() -> FinslerLyapunov {
    FinslerLyapunov::new("oscillator_v2", 1, 2.0, |x, dx| dx[0] * dx[0] / (1.0 + x[0].cos()))
        .with_grads(
            |x, dx| {
                let denom = 1.0 + x[0].cos();
                vec![dx[0] * dx[0] * x[0].sin() / (denom * denom)]
            },
            |x, dx| vec![2.0 * dx[0] / (1.0 + x[0].cos())],
        )
        .with_domain(
            |x| wrap_angle(x[0] - PI).abs() >= 1e-6,
            "angle within 1e-6 of the antipode",
        )
}

/// Consensus disagreement metric `V = max_i δx_i − min_i δx_i` with
/// `p = 1`, blind to uniform shifts (vertical span `{𝟙}`). Nonsmooth:
/// gradients near tied extrema are refused.
pub fn consensus_maxmin(n: usize) -> Result<FinslerLyapunov, FinslerError> {
    if n < 2 {
        return Err(FinslerError::InvalidParameter { what: format!("consensus_maxmin needs n >= 2, got {n}") });
    }
    let argmax = |dx: &[f64]| -> usize {
        let mut best = 0;
        for i in 1..dx.len() {
            if dx[i] > dx[best] {
                best = i;
            }
        }
        best
    };
    let argmin = |dx: &[f64]| -> usize {
        let mut best = 0;
        for i in 1..dx.len() {
            if dx[i] < dx[best] {
                best = i;
            }
        }
        best
    };
    Ok(FinslerLyapunov::new("consensus_maxmin", n, 1.0, |_x, dx| {
        let max = dx.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = dx.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min
    })
    .with_grads(
        move |_x, dx| vec![0.0; dx.len()],
        move |_x, dx| {
            let mut g = vec![0.0; dx.len()];
            g[argmax(dx)] += 1.0;
            g[argmin(dx)] -= 1.0;
            g
        },
    )
    .nonsmooth_with_tie_gap(move |_x, dx| {
        // Distance from the nearest extremum tie: runner-up gaps at the
        // top and at the bottom.
        let i_max = argmax(dx);
        let i_min = argmin(dx);
        let mut top_gap = f64::INFINITY;
        let mut bottom_gap = f64::INFINITY;
        for (i, &d) in dx.iter().enumerate() {
            if i != i_max {
                top_gap = top_gap.min(dx[i_max] - d);
            }
            if i != i_min {
                bottom_gap = bottom_gap.min(d - dx[i_min]);
            }
        }
        top_gap.min(bottom_gap)
    })
    .with_horizontal(HorizontalStructure::uniform_shift(n)))
}

/// Centroid magnitude and phase of a phase vector: the mean of the unit
/// phasors `e^{iθ_k}` has magnitude `ρ ∈ [0, 1]` (1 at synchrony, 0 for
/// balanced configurations) and argument `φ`.
pub fn centroid(theta: &[f64]) -> (f64, f64) {
    let n = theta.len() as f64;
    let c: f64 = theta.iter().map(|t| t.cos()).sum::<f64>() / n;
    let s: f64 = theta.iter().map(|t| t.sin()).sum::<f64>() / n;
    ((c * c + s * s).sqrt(), s.atan2(c))
}

fn centered(dx: &[f64]) -> Vec<f64> {
    let mean: f64 = dx.iter().sum::<f64>() / dx.len() as f64;
    dx.iter().map(|d| d - mean).collect()
}

/// Synchrony-weighted phase metric `V = δθᵀ Π δθ / ρ^{2q}` where
/// `Π = I − 𝟙𝟙ᵀ/n` centers the displacement and `ρ` is the centroid
/// magnitude. Undefined at balanced configurations (`ρ ≈ 0`); blind to
/// uniform phase shifts.
pub fn kuramoto_centroid(n: usize, q: u32) -> Result<FinslerLyapunov, FinslerError> {
    if n < 2 {
        return Err(FinslerError::InvalidParameter { what: format!("kuramoto_centroid needs n >= 2, got {n}") });
    }
    let q_f = q as f64;
    Ok(FinslerLyapunov::new("kuramoto_centroid", n, 2.0, move |x, dx| {
        let (rho, _phi) = centroid(x);
        let cd = centered(dx);
        cd.iter().map(|d| d * d).sum::<f64>() / rho.powf(2.0 * q_f)
    })
    .with_grads(
        move |x, dx| {
            let (rho, phi) = centroid(x);
            let cd = centered(dx);
            let pi_quad: f64 = cd.iter().map(|d| d * d).sum();
            let n_f = x.len() as f64;
            // ∂ρ/∂θ_k = −(1/n)·sin(θ_k − φ), so the ρ^{−2q} factor
            // contributes +2q/(n·ρ^{2q+1})·sin(θ_k − φ)·(δθᵀΠδθ).
            x.iter()
                .map(|tk| 2.0 * q_f / (n_f * rho.powf(2.0 * q_f + 1.0)) * (tk - phi).sin() * pi_quad)
                .collect()
        },
        move |x, dx| {
            let (rho, _phi) = centroid(x);
            let cd = centered(dx);
            cd.iter().map(|d| 2.0 * d / rho.powf(2.0 * q_f)).collect()
        },
    )
    .with_domain(
        |x| centroid(x).0 > 1e-8,
        "balanced phase configuration (centroid magnitude ~ 0)",
    )
    .with_horizontal(HorizontalStructure::uniform_shift(n)))
}

/// Constant centered quadratic `V = δθᵀ Π δθ` (the `q = 0` case of the
/// synchrony-weighted metric): horizontal quadratic disagreement.
pub fn pi_quadratic(n: usize) -> Result<FinslerLyapunov, FinslerError> {
    if n < 2 {
        return Err(FinslerError::InvalidParameter { what: format!("pi_quadratic needs n >= 2, got {n}") });
    }
    Ok(FinslerLyapunov::new("pi_quadratic", n, 2.0, |_x, dx| {
        centered(dx).iter().map(|d| d * d).sum()
    })
    .with_grads(
        move |_x, dx| vec![0.0; dx.len()],
        move |_x, dx| centered(dx).iter().map(|d| 2.0 * d).collect(),
    )
    .with_horizontal(HorizontalStructure::uniform_shift(n)))
}

/// Deliberately inconsistent two-exponent candidate
/// `V = |δx|^{p1} + |δx|^{p2}` declared with `F = |δx|₂`, `p = p1`,
/// `c1 = c2 = 1`: mixing homogeneity degrees breaks the bound sandwich
/// for every constant choice, which the property suite must detect.
pub fn broken_two_exponent(p1: f64, p2: f64, dim: usize) -> Result<FinslerLyapunov, FinslerError> {
    if !(p1 >= 1.0) || !(p2 >= 1.0) || p1 == p2 {
        return Err(FinslerError::InvalidParameter {
            what: format!("need distinct exponents >= 1, got {p1} and {p2}"),
        });
    }
    let norm = |dx: &[f64]| -> f64 { dx.iter().map(|d| d * d).sum::<f64>().sqrt() };
    Ok(
        FinslerLyapunov::new("broken_two_exponent", dim, p1, move |_x, dx| {
            norm(dx).powf(p1) + norm(dx).powf(p2)
        })
        .with_f(move |_x, dx| norm(dx), 1.0, 1.0),
    )
}

/// Construct a catalog metric by name for a `dim`-dimensional space.
///
/// Recognized names (parameters in brackets): `quadratic` [matrix `p`,
/// default identity], `riemannian` [matrix `p`, constant], `knorm`
/// [scalar `k`, default 2], `oscillator_v2`, `consensus_maxmin`,
/// `kuramoto_centroid` [scalar `q`, default 1], `pi_quadratic`,
/// `broken_two_exponent` [scalars `p1`, `p2`].
pub fn make_metric(name: &str, dim: usize, params: &CatalogParams) -> Result<FinslerLyapunov, FinslerError> {
    match name {
        "quadratic" | "riemannian" => {
            let p = params
                .matrices
                .get("p")
                .cloned()
                .unwrap_or_else(|| DMatrix::identity(dim, dim));
            if p.nrows() != dim {
                return Err(FinslerError::DimensionMismatch { expected: dim, got: p.nrows() });
            }
            let mut metric = quadratic(p)?;
            if name == "riemannian" {
                metric.name = String::from("riemannian");
            }
            Ok(metric)
        }
        "knorm" => knorm(params.scalars.get("k").copied().unwrap_or(2.0), dim),
        "oscillator_v2" => {
            if dim != 1 {
                return Err(FinslerError::DimensionMismatch { expected: 1, got: dim });
            }
            Ok(oscillator_v2())
        }
        "consensus_maxmin" => consensus_maxmin(dim),
        "kuramoto_centroid" => {
            let q = params.scalars.get("q").copied().unwrap_or(1.0);
            if q < 0.0 || q.fract() != 0.0 {
                return Err(FinslerError::InvalidParameter { what: format!("q = {q} (must be a nonnegative integer)") });
            }
            kuramoto_centroid(dim, q as u32)
        }
        "pi_quadratic" => pi_quadratic(dim),
        "broken_two_exponent" => broken_two_exponent(
            params.scalars.get("p1").copied().unwrap_or(1.0),
            params.scalars.get("p2").copied().unwrap_or(2.0),
            dim,
        ),
        other => Err(FinslerError::InvalidParameter { what: format!("unknown metric '{other}'") }),
    }
}

// --- property suite --------------------------------------------------------

/// Outcome of a single audited property.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyCheck {
    pub name: String,
    pub pass: bool,
    /// Worst violation observed (0 when clean).
    pub worst: f64,
}

/// Report of the metric property audit.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub metric: String,
    pub samples_requested: usize,
    pub samples_used: usize,
    pub seed: u64,
    pub checks: Vec<PropertyCheck>,
    /// Informational observations that do not affect pass/fail.
    pub notes: Vec<String>,
}

impl PropertyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "property audit of '{}' ({} samples):", self.metric, self.samples_used)?;
        for c in &self.checks {
            writeln!(
                f,
                "  {:<20} {}  (worst violation {:.3e})",
                c.name,
                if c.pass { "pass" } else { "FAIL" },
                c.worst
            )?;
        }
        for n in &self.notes {
            writeln!(f, "  note: {n}")?;
        }
        Ok(())
    }
}

const PROPERTY_TOL: f64 = 1e-9;

fn sample_state(space: &CoordinateSpace, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..space.dim())
        .map(|i| {
            if space.is_periodic(i) {
                rng.gen_range(-PI..PI)
            } else {
                rng.gen_range(-3.0..3.0)
            }
        })
        .collect()
}

fn sample_direction(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

/// Audit the norm-like behavior of a metric by sampling: positivity of
/// `F` on (horizontal) nonzero displacements, positive homogeneity,
/// subadditivity, the declared `c1·F^p ≤ V ≤ c2·F^p` sandwich, and
/// blindness to vertical directions when a distribution-mode horizontal
/// structure is attached.
///
/// Strict-convexity evidence and `F(x, −δx)` symmetry are reported as
/// informational notes only: neither is decidable by sampling.
pub fn property_suite(
    v: &FinslerLyapunov,
    space: &CoordinateSpace,
    sample_count: usize,
    seed: u64,
) -> Result<PropertyReport, FinslerError> {
    if space.dim() != v.dim() {
        return Err(FinslerError::DimensionMismatch { expected: v.dim(), got: space.dim() });
    }
    let dim = v.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = sample_count.max(1);

    let vertical_blind = matches!(
        v.horizontal().map(|h| h.mode()),
        Some(HorizontalMode::Distribution)
    );

    let mut min_f = f64::INFINITY;
    let mut worst_homogeneity: f64 = 0.0;
    let mut worst_subadd: f64 = 0.0;
    let mut worst_sandwich: f64 = 0.0;
    let mut worst_vertical: f64 = 0.0;
    let mut min_strict_slack = f64::INFINITY;
    let mut worst_asymmetry: f64 = 0.0;
    let mut used = 0usize;

    let mut attempts = 0usize;
    while used < count && attempts < count * 20 {
        attempts += 1;
        let x = sample_state(space, &mut rng);
        if v.check_domain(&x).is_err() {
            continue;
        }
        let d1 = sample_direction(dim, &mut rng);
        let d2 = sample_direction(dim, &mut rng);

        // Positivity on the relevant subspace: project away vertical
        // components when the metric carries a distribution splitting.
        let d_pos = if vertical_blind {
            let h = v.horizontal().expect("checked above");
            let projected = h.project(None, 0.0, &x, &d1)?;
            let norm: f64 = projected.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm < 1e-6 {
                None // essentially vertical; positivity does not apply
            } else {
                Some(projected.iter().map(|a| a / norm).collect::<Vec<f64>>())
            }
        } else {
            Some(d1.clone())
        };
        if let Some(d) = &d_pos {
            min_f = min_f.min(v.f(&x, d)?);
        }

        // Positive homogeneity of F.
        let f1 = v.f(&x, &d1)?;
        for lambda in [0.0, 0.5, 2.0, 10.0] {
            let scaled: Vec<f64> = d1.iter().map(|a| lambda * a).collect();
            let fs = v.f(&x, &scaled)?;
            let dev = (fs - lambda * f1).abs() / (1.0 + lambda * f1).max(1.0);
            worst_homogeneity = worst_homogeneity.max(dev);
        }

        // Subadditivity (triangle inequality on each tangent space).
        let sum_dir: Vec<f64> = d1.iter().zip(&d2).map(|(a, b)| a + b).collect();
        let f2 = v.f(&x, &d2)?;
        let fsum = v.f(&x, &sum_dir)?;
        worst_subadd = worst_subadd.max((fsum - (f1 + f2)) / (f1 + f2).max(1.0));
        // Strictness evidence on non-collinear pairs (informational).
        let dot: f64 = d1.iter().zip(&d2).map(|(a, b)| a * b).sum();
        if dot.abs() < 0.99 {
            min_strict_slack = min_strict_slack.min(f1 + f2 - fsum);
        }

        // Sandwich c1·F^p ≤ V ≤ c2·F^p across scales.
        let (c1, c2) = v.bounds();
        for lambda in [1e-3, 0.1, 1.0, 10.0, 1e3] {
            let scaled: Vec<f64> = d1.iter().map(|a| lambda * a).collect();
            let val = v.eval(&x, &scaled)?;
            let fp = v.f(&x, &scaled)?.powf(v.p());
            let scale = val.abs().max(fp.abs()).max(1.0);
            worst_sandwich = worst_sandwich.max((c1 * fp - val) / scale);
            worst_sandwich = worst_sandwich.max((val - c2 * fp) / scale);
        }

        // Vertical blindness: adding vertical directions must not change V.
        if vertical_blind {
            let h = v.horizontal().expect("checked above");
            let val = v.eval(&x, &d1)?;
            let mut shifted = d1.clone();
            for vf in h.vertical_at(&x) {
                let alpha: f64 = rng.gen_range(-2.0..2.0);
                for (s, vi) in shifted.iter_mut().zip(&vf) {
                    *s += alpha * vi;
                }
            }
            let val_shifted = v.eval(&x, &shifted)?;
            worst_vertical = worst_vertical.max((val - val_shifted).abs() / val.abs().max(1.0));
        }

        // Symmetry of F under δx ↦ −δx (informational).
        let neg: Vec<f64> = d1.iter().map(|a| -a).collect();
        worst_asymmetry = worst_asymmetry.max((v.f(&x, &neg)? - f1).abs() / f1.abs().max(1.0));

        used += 1;
    }

    let mut checks = vec![
        PropertyCheck {
            name: String::from("positivity"),
            pass: min_f > 1e-12,
            worst: if min_f > 1e-12 { 0.0 } else { min_f },
        },
        PropertyCheck {
            name: String::from("homogeneity"),
            pass: worst_homogeneity <= PROPERTY_TOL,
            worst: worst_homogeneity,
        },
        PropertyCheck {
            name: String::from("subadditivity"),
            pass: worst_subadd <= PROPERTY_TOL,
            worst: worst_subadd.max(0.0),
        },
        PropertyCheck {
            name: String::from("bound_sandwich"),
            pass: worst_sandwich <= PROPERTY_TOL,
            worst: worst_sandwich.max(0.0),
        },
    ];
    if vertical_blind {
        checks.push(PropertyCheck {
            name: String::from("vertical_blindness"),
            pass: worst_vertical <= PROPERTY_TOL,
            worst: worst_vertical,
        });
    }

    let mut notes = Vec::new();
    if min_strict_slack.is_finite() && min_strict_slack < 1e-12 {
        notes.push(String::from(
            "subadditivity is tight on some non-collinear pairs (strict convexity not evidenced)",
        ));
    }
    if worst_asymmetry > PROPERTY_TOL {
        notes.push(format!(
            "F is direction-asymmetric: worst relative |F(x,-dx) - F(x,dx)| = {worst_asymmetry:.3e}"
        ));
    }
    if used < count {
        notes.push(format!("{} of {count} samples skipped by domain exclusions", count - used));
    }

    Ok(PropertyReport {
        metric: v.name().to_string(),
        samples_requested: count,
        samples_used: used,
        seed,
        checks,
        notes,
    })
}

/// Report of the projection/flow compatibility audit.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectionInvarianceReport {
    pub max_residual: f64,
    pub checked: usize,
    pub skipped_degenerate: usize,
}

impl ProjectionInvarianceReport {
    pub fn passes(&self) -> bool {
        self.checked > 0 && self.max_residual <= PROJECTION_INVARIANCE_TOL
    }
}

/// Audit that the horizontal projection commutes with the variational
/// flow: transporting the projected displacement must equal projecting
/// the transported displacement, to first order. Per sample, the
/// residual of
///
/// ```text
/// d/dε π_{x+εf}(δx) + d/dε π_x(δx + εJδx) − J·π_x(δx)
/// ```
///
/// is evaluated by central differences; degenerate points (forward mode
/// at field zeros) are skipped and counted.
///
/// For distribution splittings the identity is audited on the sample
/// displacements as given — the quotient analysis needs it for
/// arbitrary `δx`. For the forward (flow-direction) splitting the
/// identity provably fails off the horizontal subspace (the flow mixes
/// transversal components into the projection coefficient), and the
/// attractor analysis only ever transports displacements that start —
/// and stay — along the field; each sample displacement is therefore
/// replaced by its normalized horizontal part before the residual is
/// formed.
pub fn check_projection_invariance(
    h: &HorizontalStructure,
    s: &System,
    t: f64,
    samples: &[(Vec<f64>, Vec<f64>)],
) -> Result<ProjectionInvarianceReport, FinslerError> {
    let dim = s.dim();
    let step = DEFAULT_FD_STEP;
    let mut max_residual: f64 = 0.0;
    let mut checked = 0usize;
    let mut skipped = 0usize;

    'samples: for (x, dx_raw) in samples {
        if x.len() != dim || dx_raw.len() != dim {
            return Err(FinslerError::DimensionMismatch { expected: dim, got: x.len() });
        }
        let dx = if h.mode() == HorizontalMode::Forward {
            let projected = match h.project(Some(s), t, x, dx_raw) {
                Ok(p) => p,
                Err(FinslerError::DegeneratePoint { .. }) => {
                    skipped += 1;
                    continue 'samples;
                }
                Err(e) => return Err(e),
            };
            let norm: f64 = projected.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm < 1e-12 {
                skipped += 1;
                continue 'samples;
            }
            projected.iter().map(|a| a / norm).collect::<Vec<f64>>()
        } else {
            dx_raw.clone()
        };
        let dx = &dx;
        let f = s.field_raw(t, x);
        let j = s.jacobian_raw(t, x)?;
        let jdx: Vec<f64> = (0..dim)
            .map(|i| (0..dim).map(|k| j[(i, k)] * dx[k]).sum())
            .collect();

        let mut projections: Vec<Vec<f64>> = Vec::with_capacity(5);
        let probe_points: [(Vec<f64>, Vec<f64>); 5] = [
            (x.clone(), dx.clone()),
            (x.iter().zip(&f).map(|(xi, fi)| xi + step * fi).collect(), dx.clone()),
            (x.iter().zip(&f).map(|(xi, fi)| xi - step * fi).collect(), dx.clone()),
            (x.clone(), dx.iter().zip(&jdx).map(|(di, ji)| di + step * ji).collect()),
            (x.clone(), dx.iter().zip(&jdx).map(|(di, ji)| di - step * ji).collect()),
        ];
        for (px, pdx) in &probe_points {
            match h.project(Some(s), t, px, pdx) {
                Ok(p) => projections.push(p),
                Err(FinslerError::DegeneratePoint { .. }) => {
                    skipped += 1;
                    continue 'samples;
                }
                Err(e) => return Err(e),
            }
        }

        let pi0 = &projections[0];
        let target: Vec<f64> = (0..dim)
            .map(|i| (0..dim).map(|k| j[(i, k)] * pi0[k]).sum())
            .collect();
        let mut residual: f64 = 0.0;
        for i in 0..dim {
            let along_x = (projections[1][i] - projections[2][i]) / (2.0 * step);
            let along_delta = (projections[3][i] - projections[4][i]) / (2.0 * step);
            residual = residual.max((along_x + along_delta - target[i]).abs());
        }
        if !residual.is_finite() {
            return Err(FinslerError::NonFinite { context: String::from("projection invariance residual") });
        }
        max_residual = max_residual.max(residual);
        checked += 1;
    }

    Ok(ProjectionInvarianceReport { max_residual, checked, skipped_degenerate: skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{consensus_constant, kuramoto, linear};
    use approx::assert_relative_eq;
    use core::f64::consts::FRAC_PI_2;

    fn identity_metric(n: usize) -> FinslerLyapunov {
        quadratic(DMatrix::identity(n, n)).unwrap()
    }

    #[test]
    fn quadratic_identity_gives_squared_norm() {
        let v = identity_metric(2);
        assert_relative_eq!(v.eval(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 25.0, epsilon = 1e-12);
    }

    #[test]
    fn quadratic_rejects_indefinite_matrices() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(quadratic(p), Err(FinslerError::InvalidParameter { .. })));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 1.0]);
        assert!(quadratic(asym).is_err());
    }

    #[test]
    fn oscillator_metric_halves_at_the_bottom_of_the_circle() {
        let v = oscillator_v2();
        assert_relative_eq!(v.eval(&[0.0], &[1.0]).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn oscillator_metric_excludes_the_antipode() {
        let v = oscillator_v2();
        assert!(matches!(v.eval(&[PI], &[1.0]), Err(FinslerError::DomainViolation { .. })));
        assert!(v.eval(&[PI - 0.1], &[1.0]).is_ok());
    }

    #[test]
    fn maxmin_measures_the_spread_of_the_displacement() {
        let v = consensus_maxmin(3).unwrap();
        assert_relative_eq!(v.eval(&[0.0; 3], &[1.0, 0.0, -1.0]).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn quadratic_gradients_are_pure_in_the_displacement() {
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let v = quadratic(p).unwrap();
        let (gx, gd) = v.grad(&[0.3, -0.4], &[1.0, 2.0]).unwrap();
        assert_eq!(gx, vec![0.0, 0.0]);
        // 2·P·δx = 2·(2·1 + 0.5·2, 0.5·1 + 1·2) = (6, 5)
        assert_relative_eq!(gd[0], 6.0, epsilon = 1e-12);
        assert_relative_eq!(gd[1], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn oscillator_gradients_at_the_bottom() {
        let v = oscillator_v2();
        let (gx, gd) = v.grad(&[0.0], &[1.0]).unwrap();
        assert_relative_eq!(gx[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(gd[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn maxmin_subgradient_picks_the_extremal_indices() {
        let v = consensus_maxmin(3).unwrap();
        let (_gx, gd) = v.grad(&[0.0; 3], &[1.0, 0.0, -1.0]).unwrap();
        assert_eq!(gd, vec![1.0, 0.0, -1.0]);
    }

    #[test]
    fn maxmin_gradient_refuses_tied_extrema() {
        let v = consensus_maxmin(3).unwrap();
        let err = v.grad(&[0.0; 3], &[1.0, 1.0, 0.0]).unwrap_err();
        assert!(matches!(err, FinslerError::KinkSet { .. }));
    }

    #[test]
    fn quadratic_identity_matches_euclidean_norm_squared() {
        let q = identity_metric(3);
        let k2 = knorm(2.0, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let dx: Vec<f64> = (0..3).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let vq = q.eval(&[0.0; 3], &dx).unwrap();
            let vk = k2.eval(&[0.0; 3], &dx).unwrap();
            assert_relative_eq!(vq, vk * vk, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn centroid_magnitude_is_one_at_synchrony_and_zero_when_balanced() {
        let (rho_sync, _) = centroid(&[0.7, 0.7, 0.7]);
        assert_relative_eq!(rho_sync, 1.0, epsilon = 1e-12);
        let (rho_balanced, _) = centroid(&[0.0, PI]);
        assert!(rho_balanced < 1e-12);
    }

    #[test]
    fn centroid_metric_reduces_to_centered_quadratic_at_synchrony() {
        let v = kuramoto_centroid(3, 1).unwrap();
        let dx = [1.0, -0.5, 0.25];
        let val = v.eval(&[0.4, 0.4, 0.4], &dx).unwrap();
        let expected: f64 = centered(&dx).iter().map(|d| d * d).sum();
        assert_relative_eq!(val, expected, epsilon = 1e-12);
    }

    #[test]
    fn centroid_metric_rejects_balanced_configurations() {
        let v = kuramoto_centroid(2, 1).unwrap();
        let err = v.eval(&[0.0, PI], &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, FinslerError::DomainViolation { .. }));
    }

    #[test]
    fn analytic_gradients_match_finite_differences_for_smooth_metrics() {
        let p = DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.8]);
        let metrics: Vec<(FinslerLyapunov, CoordinateSpace)> = vec![
            (quadratic(p).unwrap(), CoordinateSpace::euclidean(2).unwrap()),
            (oscillator_v2(), CoordinateSpace::circle()),
            (knorm(3.0, 2).unwrap(), CoordinateSpace::euclidean(2).unwrap()),
            (kuramoto_centroid(3, 2).unwrap(), CoordinateSpace::torus(3).unwrap()),
            (pi_quadratic(3).unwrap(), CoordinateSpace::euclidean(3).unwrap()),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for (v, space) in &metrics {
            for _ in 0..100 {
                let x = sample_state(space, &mut rng);
                if v.check_domain(&x).is_err() {
                    continue;
                }
                let dx = sample_direction(v.dim(), &mut rng);
                let (gx, gd) = v.grad(&x, &dx).unwrap();
                let gx_fd = v.fd_grad(&x, &dx, true).unwrap();
                let gd_fd = v.fd_grad(&x, &dx, false).unwrap();
                for i in 0..v.dim() {
                    assert!(
                        (gx[i] - gx_fd[i]).abs() <= 1e-6 * (1.0 + gx[i].abs()),
                        "{}: grad_x[{i}] analytic {} vs fd {}",
                        v.name(),
                        gx[i],
                        gx_fd[i]
                    );
                    assert!(
                        (gd[i] - gd_fd[i]).abs() <= 1e-6 * (1.0 + gd[i].abs()),
                        "{}: grad_delta[{i}] analytic {} vs fd {}",
                        v.name(),
                        gd[i],
                        gd_fd[i]
                    );
                }
            }
        }
    }

    #[test]
    fn euler_identity_holds_for_homogeneous_smooth_metrics() {
        // grad_delta·δx = p·V for V positively homogeneous of degree p.
        let metrics: Vec<(FinslerLyapunov, CoordinateSpace)> = vec![
            (identity_metric(2), CoordinateSpace::euclidean(2).unwrap()),
            (oscillator_v2(), CoordinateSpace::circle()),
            (knorm(2.0, 3).unwrap(), CoordinateSpace::euclidean(3).unwrap()),
            (kuramoto_centroid(3, 1).unwrap(), CoordinateSpace::torus(3).unwrap()),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (v, space) in &metrics {
            for _ in 0..50 {
                let x = sample_state(space, &mut rng);
                if v.check_domain(&x).is_err() {
                    continue;
                }
                let dx = sample_direction(v.dim(), &mut rng);
                let val = v.eval(&x, &dx).unwrap();
                let (_gx, gd) = v.grad(&x, &dx).unwrap();
                let directional: f64 = gd.iter().zip(&dx).map(|(g, d)| g * d).sum();
                assert!(
                    (directional - v.p() * val).abs() <= 1e-8 * (1.0 + val.abs()),
                    "{}: Euler identity violated: {directional} vs {}",
                    v.name(),
                    v.p() * val
                );
            }
        }
    }

    #[test]
    fn value_scales_with_degree_p_under_displacement_scaling() {
        let metrics: Vec<(FinslerLyapunov, CoordinateSpace)> = vec![
            (identity_metric(2), CoordinateSpace::euclidean(2).unwrap()),
            (knorm(1.0, 3).unwrap(), CoordinateSpace::euclidean(3).unwrap()),
            (oscillator_v2(), CoordinateSpace::circle()),
            (consensus_maxmin(4).unwrap(), CoordinateSpace::euclidean(4).unwrap()),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for (v, space) in &metrics {
            for _ in 0..30 {
                let x = sample_state(space, &mut rng);
                if v.check_domain(&x).is_err() {
                    continue;
                }
                let dx = sample_direction(v.dim(), &mut rng);
                let base = v.eval(&x, &dx).unwrap();
                for lambda in [0.5, 2.0, 10.0] {
                    let scaled: Vec<f64> = dx.iter().map(|d| lambda * d).collect();
                    let val = v.eval(&x, &scaled).unwrap();
                    let expected = lambda.powf(v.p()) * base;
                    assert!(
                        (val - expected).abs() <= 1e-9 * (1.0 + expected.abs()),
                        "{}: degree-p scaling violated at lambda = {lambda}",
                        v.name()
                    );
                }
            }
        }
    }

    #[test]
    fn property_suite_passes_every_catalog_metric() {
        let entries: Vec<(FinslerLyapunov, CoordinateSpace)> = vec![
            (identity_metric(2), CoordinateSpace::euclidean(2).unwrap()),
            (
                quadratic(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap(),
                CoordinateSpace::euclidean(2).unwrap(),
            ),
            (knorm(1.0, 3).unwrap(), CoordinateSpace::euclidean(3).unwrap()),
            (knorm(2.0, 3).unwrap(), CoordinateSpace::euclidean(3).unwrap()),
            (oscillator_v2(), CoordinateSpace::circle()),
            (consensus_maxmin(4).unwrap(), CoordinateSpace::euclidean(4).unwrap()),
            (kuramoto_centroid(5, 1).unwrap(), CoordinateSpace::torus(5).unwrap()),
            (pi_quadratic(4).unwrap(), CoordinateSpace::euclidean(4).unwrap()),
        ];
        for (v, space) in &entries {
            let report = property_suite(v, space, 500, 7).unwrap();
            assert!(report.all_pass(), "{}:\n{report}", v.name());
        }
    }

    #[test]
    fn property_suite_flags_the_two_exponent_counterfeit() {
        let v = broken_two_exponent(1.0, 2.0, 2).unwrap();
        let space = CoordinateSpace::euclidean(2).unwrap();
        let report = property_suite(&v, &space, 300, 3).unwrap();
        assert!(!report.all_pass());
        let sandwich = report.check("bound_sandwich").unwrap();
        assert!(!sandwich.pass, "mixed-degree candidate must fail the sandwich:\n{report}");
        // The norm-like checks on F itself are clean; only the declared
        // bounds are inconsistent.
        assert!(report.check("homogeneity").unwrap().pass);
        assert!(report.check("subadditivity").unwrap().pass);
    }

    #[test]
    fn maxmin_blindness_to_uniform_shifts_is_exact() {
        let v = consensus_maxmin(4).unwrap();
        let space = CoordinateSpace::euclidean(4).unwrap();
        let report = property_suite(&v, &space, 400, 11).unwrap();
        let blind = report.check("vertical_blindness").unwrap();
        assert!(blind.pass);
        assert!(blind.worst <= 1e-12);
    }

    #[test]
    fn projection_leaves_centered_directions_untouched() {
        let h = HorizontalStructure::uniform_shift(3);
        let p = h.project(None, 0.0, &[0.0; 3], &[1.0, 0.0, -1.0]).unwrap();
        assert_relative_eq!(p[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(p[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(p[2], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_annihilates_the_uniform_direction() {
        let h = HorizontalStructure::uniform_shift(3);
        let p = h.project(None, 0.0, &[0.0; 3], &[1.0, 1.0, 1.0]).unwrap();
        for c in p {
            assert_relative_eq!(c, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_projection_keeps_the_field_component() {
        let space = CoordinateSpace::euclidean(2).unwrap();
        let s = System::new(space, "constant_drift", |_t, _x| vec![1.0, 0.0]);
        let h = HorizontalStructure::forward();
        let p = h.project(Some(&s), 0.0, &[0.0, 0.0], &[2.0, 3.0]).unwrap();
        assert_relative_eq!(p[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(p[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn forward_projection_fails_at_equilibria() {
        let s = linear(DMatrix::from_element(1, 1, -1.0)).unwrap();
        let h = HorizontalStructure::forward();
        let err = h.project(Some(&s), 0.0, &[0.0], &[1.0]).unwrap_err();
        assert!(matches!(err, FinslerError::DegeneratePoint { .. }));
    }

    #[test]
    fn projector_is_idempotent_and_kills_vertical_fields() {
        let h = HorizontalStructure::uniform_shift(4);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let dx: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let once = h.project(None, 0.0, &x, &dx).unwrap();
            let twice = h.project(None, 0.0, &x, &once).unwrap();
            for (a, b) in once.iter().zip(&twice) {
                assert!((a - b).abs() <= 1e-10, "projector not idempotent");
            }
            for vf in h.vertical_at(&x) {
                let killed = h.project(None, 0.0, &x, &vf).unwrap();
                for c in killed {
                    assert!(c.abs() <= 1e-10, "vertical field survived projection");
                }
            }
        }
    }

    #[test]
    fn forward_projection_commutes_with_linear_flows() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0]);
        let s = linear(a).unwrap();
        let h = HorizontalStructure::forward();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let samples: Vec<(Vec<f64>, Vec<f64>)> = (0..100)
            .map(|_| {
                let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let dx: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (x, dx)
            })
            .collect();
        let report = check_projection_invariance(&h, &s, 0.0, &samples).unwrap();
        assert!(report.passes(), "max residual {}", report.max_residual);
    }

    #[test]
    fn constant_projector_commutes_with_symmetric_consensus_dynamics() {
        let a = DMatrix::from_row_slice(3, 3, &[-2.0, 1.0, 1.0, 1.0, -2.0, 1.0, 1.0, 1.0, -2.0]);
        let s = consensus_constant(a).unwrap();
        let h = HorizontalStructure::uniform_shift(3);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let samples: Vec<(Vec<f64>, Vec<f64>)> = (0..50)
            .map(|_| {
                let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let dx: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (x, dx)
            })
            .collect();
        let report = check_projection_invariance(&h, &s, 0.0, &samples).unwrap();
        assert!(report.max_residual <= 1e-9, "max residual {}", report.max_residual);
    }

    #[test]
    fn centered_projector_commutes_with_kuramoto_dynamics() {
        let s = kuramoto(4).unwrap();
        let h = HorizontalStructure::uniform_shift(4);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let samples: Vec<(Vec<f64>, Vec<f64>)> = (0..50)
            .map(|_| {
                let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-FRAC_PI_2..FRAC_PI_2)).collect();
                let dx: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (x, dx)
            })
            .collect();
        let report = check_projection_invariance(&h, &s, 0.0, &samples).unwrap();
        assert!(report.max_residual <= 1e-9, "max residual {}", report.max_residual);
    }

    #[test]
    fn make_metric_dispatches_by_name() {
        let params = CatalogParams::default();
        assert_eq!(make_metric("quadratic", 3, &params).unwrap().dim(), 3);
        assert_eq!(make_metric("knorm", 2, &params).unwrap().p(), 1.0);
        assert!(make_metric("oscillator_v2", 1, &params).is_ok());
        assert!(make_metric("oscillator_v2", 2, &params).is_err());
        assert!(make_metric("unknown_metric", 2, &params).is_err());
    }
}
