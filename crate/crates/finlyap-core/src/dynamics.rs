//! Vector fields, regions of interest, a catalog of benchmark systems,
//! and virtual-system construction.
//!
//! A [`System`] is a (possibly time-varying) vector field `ẋ = f(t, x)`
//! over a [`CoordinateSpace`], with Jacobian access — analytic when the
//! catalog provides one, central finite differences otherwise.
//!
//! The catalog collects the low-dimensional benchmark systems exercised
//! throughout the crate: a sine oscillator on the circle, an averaged
//! boost power converter, linear consensus dynamics on a graph, a
//! Kuramoto oscillator network on the phase torus, plus plain linear and
//! harmonic systems used as oracles and negative controls.
//!
//! [`make_virtual`] closes a two-argument field `f̂(t, z, x)` with a
//! recorded trajectory `x(·)`, producing the time-varying system
//! `ż = f̂(t, z, x(t))` used for observer-style convergence analysis.
//! Construction audits the defining consistency `f̂(t, x, x) = f(t, x)`
//! along the recorded trajectory.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

// Resolves float math in no_std builds; std builds shadow it with inherent methods.
#[allow(unused_imports)]
use num_traits::Float;
use nalgebra::DMatrix;

use crate::flow::Trajectory;
use crate::geometry::{numeric_jacobian, CoordinateSpace, GeometryError, Point, Tangent, DEFAULT_FD_STEP};

/// Analytic Jacobians must agree with central finite differences of the
/// field to this absolute entry-wise tolerance.
pub const JACOBIAN_AUDIT_TOL: f64 = 1e-6;

/// Consensus matrices may violate the sign and row-sum structure by at
/// most this much before construction is rejected.
pub const CONSENSUS_STRUCTURE_TOL: f64 = 1e-9;

/// A virtual system must reproduce the base field along the closing
/// trajectory to this absolute tolerance.
pub const VIRTUAL_CONSISTENCY_TOL: f64 = 1e-8;

/// Errors raised by system construction and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum DynamicsError {
    /// Construction parameters out of range (message names the offender).
    InvalidParameter { what: String },
    /// An off-diagonal consensus entry was negative beyond tolerance.
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },
    /// A consensus row sum was nonzero beyond tolerance.
    NonzeroRowSum { row: usize, value: f64 },
    /// The field or Jacobian produced a non-finite value.
    NonFinite { context: String },
    DimensionMismatch { expected: usize, got: usize },
    /// An analytic Jacobian disagreed with finite differences of the field.
    JacobianMismatch { worst: f64 },
    /// `f̂(t, x(t), x(t))` strayed from the base field along the closing
    /// trajectory.
    VirtualInconsistency { t: f64, worst: f64 },
    /// A trajectory-backed signal was queried outside its time range.
    TimeOutOfRange { t: f64, t0: f64, tf: f64 },
    Geometry(GeometryError),
}

impl fmt::Display for DynamicsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DynamicsError::InvalidParameter { what } => write!(f, "invalid parameter: {what}"),
            DynamicsError::NegativeOffDiagonal { row, col, value } => write!(
                f,
                "off-diagonal entry ({row}, {col}) = {value} is negative beyond tolerance"
            ),
            DynamicsError::NonzeroRowSum { row, value } => {
                write!(f, "row {row} sums to {value} (expected 0)")
            }
            DynamicsError::NonFinite { context } => write!(f, "non-finite value in {context}"),
            DynamicsError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            DynamicsError::JacobianMismatch { worst } => write!(
                f,
                "analytic jacobian deviates from finite differences by {worst:.3e}"
            ),
            DynamicsError::VirtualInconsistency { t, worst } => write!(
                f,
                "virtual field deviates from base field by {worst:.3e} at t = {t}"
            ),
            DynamicsError::TimeOutOfRange { t, t0, tf } => {
                write!(f, "time {t} outside recorded range [{t0}, {tf}]")
            }
            DynamicsError::Geometry(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for DynamicsError {}

impl From<GeometryError> for DynamicsError {
    fn from(e: GeometryError) -> Self {
        DynamicsError::Geometry(e)
    }
}

type FieldFn = dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync;
type JacobianFn = dyn Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync;

/// A vector field `ẋ = f(t, x)` with Jacobian access.
///
/// Fields are assumed C² in `x`. Systems are immutable after
/// construction and all evaluation is pure, so shared references may be
/// used from multiple threads.
pub struct System {
    space: CoordinateSpace,
    name: String,
    field: Box<FieldFn>,
    jacobian: Option<Box<JacobianFn>>,
    fd_step: f64,
    time_varying: bool,
}

impl System {
    pub fn new<F>(space: CoordinateSpace, name: &str, field: F) -> Self
    where
        F: Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        System {
            space,
            name: name.to_string(),
            field: Box::new(field),
            jacobian: None,
            fd_step: DEFAULT_FD_STEP,
            time_varying: false,
        }
    }

    /// Attach an analytic Jacobian `(t, x) ↦ ∂f/∂x`.
    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Box::new(jacobian));
        self
    }

    /// Override the finite-difference step for the Jacobian fallback.
    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    /// Mark the field as genuinely time-varying. Time-invariant analyses
    /// (LaSalle, periodic-orbit exclusion) refuse marked systems.
    pub fn with_time_varying(mut self, time_varying: bool) -> Self {
        self.time_varying = time_varying;
        self
    }

    pub fn space(&self) -> &CoordinateSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_time_varying(&self) -> bool {
        self.time_varying
    }

    pub(crate) fn field_raw(&self, t: f64, x: &[f64]) -> Vec<f64> {
        (self.field)(t, x)
    }

    /// Evaluate `f(t, x)`.
    pub fn eval_field(&self, t: f64, x: &Point) -> Result<Tangent, DynamicsError> {
        if x.dim() != self.dim() {
            return Err(DynamicsError::DimensionMismatch { expected: self.dim(), got: x.dim() });
        }
        let out = (self.field)(t, x.coords());
        if out.len() != self.dim() {
            return Err(DynamicsError::DimensionMismatch { expected: self.dim(), got: out.len() });
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite { context: format!("field of {}", self.name) });
        }
        Ok(Tangent::new(out))
    }

    pub(crate) fn jacobian_raw(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>, DynamicsError> {
        match &self.jacobian {
            Some(j) => Ok(j(t, x)),
            None => numeric_jacobian(|y| (self.field)(t, y), x, self.fd_step)
                .map_err(DynamicsError::Geometry),
        }
    }

    /// Evaluate the Jacobian `∂f/∂x` at `(t, x)` — analytic when
    /// attached, central finite differences of the field otherwise.
    pub fn eval_jacobian(&self, t: f64, x: &Point) -> Result<DMatrix<f64>, DynamicsError> {
        if x.dim() != self.dim() {
            return Err(DynamicsError::DimensionMismatch { expected: self.dim(), got: x.dim() });
        }
        let jac = self.jacobian_raw(t, x.coords())?;
        if jac.nrows() != self.dim() || jac.ncols() != self.dim() {
            return Err(DynamicsError::DimensionMismatch { expected: self.dim(), got: jac.nrows() });
        }
        if jac.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite { context: format!("jacobian of {}", self.name) });
        }
        Ok(jac)
    }

    /// Audit an attached analytic Jacobian against central finite
    /// differences of the field at the given `(t, x)` samples; returns
    /// the worst entry-wise deviation, or an error beyond
    /// [`JACOBIAN_AUDIT_TOL`]. Systems without an analytic Jacobian pass
    /// trivially.
    pub fn verify_jacobian(&self, samples: &[(f64, Vec<f64>)]) -> Result<f64, DynamicsError> {
        if self.jacobian.is_none() {
            return Ok(0.0);
        }
        let mut worst: f64 = 0.0;
        for (t, x) in samples {
            let analytic = self.jacobian_raw(*t, x)?;
            let numeric = numeric_jacobian(|y| (self.field)(*t, y), x, self.fd_step)?;
            let dev = (analytic - numeric).abs().max();
            worst = worst.max(dev);
        }
        if worst > JACOBIAN_AUDIT_TOL {
            Err(DynamicsError::JacobianMismatch { worst })
        } else {
            Ok(worst)
        }
    }
}

impl fmt::Debug for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("System")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("jacobian", &self.jacobian.as_ref().map(|_| "analytic"))
            .field("time_varying", &self.time_varying)
            .finish()
    }
}

type PredicateFn = dyn Fn(&[f64]) -> bool + Send + Sync;

/// A box region of state space, optionally refined by a membership
/// predicate, with a user-asserted forward-invariance claim.
///
/// Forward invariance is not verified here: integration routines raise a
/// diagnostic when a trajectory leaves a region claimed invariant.
pub struct Region {
    bounds: Vec<(f64, f64)>,
    predicate: Option<Box<PredicateFn>>,
    forward_invariant_claim: bool,
}

impl Region {
    /// A box given by per-coordinate closed intervals.
    pub fn new_box(bounds: Vec<(f64, f64)>) -> Result<Self, DynamicsError> {
        if bounds.is_empty() {
            return Err(DynamicsError::InvalidParameter { what: String::from("empty region bounds") });
        }
        for (i, (lo, hi)) in bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(DynamicsError::InvalidParameter {
                    what: format!("bounds for coordinate {i}: [{lo}, {hi}]"),
                });
            }
        }
        Ok(Region { bounds, predicate: None, forward_invariant_claim: false })
    }

    /// The closed Euclidean ball of radius `r` about the origin,
    /// realized as the bounding box `[−r, r]^dim` refined by a norm
    /// predicate.
    pub fn ball(dim: usize, r: f64) -> Result<Self, DynamicsError> {
        if dim == 0 || !(r > 0.0) {
            return Err(DynamicsError::InvalidParameter { what: format!("ball dim {dim} radius {r}") });
        }
        let region = Region::new_box(vec![(-r, r); dim])?;
        region.with_predicate(move |x| x.iter().map(|v| v * v).sum::<f64>().sqrt() <= r)
    }

    /// Refine membership by a predicate. The region center must satisfy
    /// it (degenerate regions are rejected early).
    pub fn with_predicate<P>(mut self, predicate: P) -> Result<Self, DynamicsError>
    where
        P: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        if !predicate(&self.center()) {
            return Err(DynamicsError::InvalidParameter {
                what: String::from("region predicate rejects the box center"),
            });
        }
        self.predicate = Some(Box::new(predicate));
        Ok(self)
    }

    /// Record the user's assertion that the region is forward invariant
    /// for the system under study.
    pub fn claim_forward_invariant(mut self) -> Self {
        self.forward_invariant_claim = true;
        self
    }

    pub fn is_forward_invariant_claimed(&self) -> bool {
        self.forward_invariant_claim
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn center(&self) -> Vec<f64> {
        self.bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.bounds.len() {
            return false;
        }
        let in_box = x
            .iter()
            .zip(&self.bounds)
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi);
        in_box && self.predicate.as_ref().map_or(true, |p| p(x))
    }
}

impl fmt::Debug for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Region")
            .field("bounds", &self.bounds)
            .field("predicate", &self.predicate.as_ref().map(|_| "custom"))
            .field("forward_invariant_claim", &self.forward_invariant_claim)
            .finish()
    }
}

/// A recorded trajectory used as a time-indexed state signal, closing a
/// virtual system over a concrete base solution.
///
/// States between samples are interpolated linearly (wrap-aware on
/// periodic coordinates). Queries outside the recorded range fail.
#[derive(Debug, Clone)]
pub struct TrajectorySource {
    traj: Arc<Trajectory>,
}

impl TrajectorySource {
    pub fn new(traj: Arc<Trajectory>) -> Self {
        TrajectorySource { traj }
    }

    pub fn time_range(&self) -> (f64, f64) {
        (self.traj.t0(), self.traj.tf())
    }

    pub fn covers(&self, t: f64) -> bool {
        let (t0, tf) = self.time_range();
        t >= t0 - 1e-12 && t <= tf + 1e-12
    }

    /// Interpolated state at time `t`, or an out-of-range error.
    pub fn state_at(&self, t: f64) -> Result<Point, DynamicsError> {
        let (t0, tf) = self.time_range();
        if !self.covers(t) {
            return Err(DynamicsError::TimeOutOfRange { t, t0, tf });
        }
        Ok(self.traj.interpolate_state(t))
    }

    fn state_or_nan(&self, t: f64, dim: usize) -> Vec<f64> {
        match self.state_at(t) {
            Ok(p) => p.to_vec(),
            Err(_) => vec![f64::NAN; dim],
        }
    }
}

/// Close a two-argument field `f̂(t, z, x)` with a recorded trajectory
/// `x(·)`, yielding the time-varying system `ż = f̂(t, z, x(t))`.
///
/// The construction audits the defining property `f̂(t, x, x) = f(t, x)`
/// at `check_samples` times spread across the recorded range (tolerance
/// [`VIRTUAL_CONSISTENCY_TOL`]); a violation means the closure does not
/// actually embed the base system and is rejected.
///
/// Evaluating the resulting system outside the recorded time range
/// yields non-finite values, which the integrator reports as a blow-up
/// diagnostic.
pub fn make_virtual<F>(
    base: &System,
    fhat: F,
    src: TrajectorySource,
    check_samples: usize,
) -> Result<System, DynamicsError>
where
    F: Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
{
    let dim = base.dim();
    let (t0, tf) = src.time_range();
    let n_checks = check_samples.max(2);
    let mut worst: f64 = 0.0;
    let mut worst_t = t0;
    for k in 0..n_checks {
        let t = t0 + (tf - t0) * (k as f64) / ((n_checks - 1) as f64);
        let x = src.state_at(t)?;
        let base_f = base.eval_field(t, &x)?;
        let virt_f = fhat(t, x.coords(), x.coords());
        if virt_f.len() != dim {
            return Err(DynamicsError::DimensionMismatch { expected: dim, got: virt_f.len() });
        }
        for (a, b) in base_f.coords().iter().zip(&virt_f) {
            let dev = (a - b).abs();
            if !dev.is_finite() {
                return Err(DynamicsError::NonFinite { context: String::from("virtual field check") });
            }
            if dev > worst {
                worst = dev;
                worst_t = t;
            }
        }
    }
    if worst > VIRTUAL_CONSISTENCY_TOL {
        return Err(DynamicsError::VirtualInconsistency { t: worst_t, worst });
    }
    let name = format!("virtual({})", base.name());
    let space = base.space().clone();
    Ok(System::new(space, &name, move |t, z| {
        let x = src.state_or_nan(t, dim);
        fhat(t, z, &x)
    })
    .with_time_varying(true))
}

// --- catalog ---------------------------------------------------------------

/// Oscillator on the circle: `θ̇ = −sin θ`, with Jacobian `−cos θ`.
pub fn sine_oscillator() -> System {
    System::new(CoordinateSpace::circle(), "sine_oscillator", |_t, x| vec![-x[0].sin()])
        .with_jacobian(|_t, x| DMatrix::from_element(1, 1, -x[0].cos()))
}

/// Averaged boost power converter with constant duty ratio `u_star`:
///
/// ```text
/// L ẋ_L = −u* x_C + E
/// C ẋ_C =  u* x_L − x_C / R
/// ```
///
/// `l`, `c`, `r` must be positive. The field is affine, so the Jacobian
/// is constant over state space.
pub fn boost_converter(l: f64, c: f64, r: f64, e: f64, u_star: f64) -> Result<System, DynamicsError> {
    for (label, v) in [("l", l), ("c", c), ("r", r)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(DynamicsError::InvalidParameter { what: format!("{label} = {v} (must be > 0)") });
        }
    }
    if !e.is_finite() || !u_star.is_finite() {
        return Err(DynamicsError::InvalidParameter { what: String::from("e and u_star must be finite") });
    }
    let space = CoordinateSpace::euclidean(2).expect("dim 2");
    Ok(System::new(space, "boost_converter", move |_t, x| {
        vec![(-u_star * x[1] + e) / l, (u_star * x[0] - x[1] / r) / c]
    })
    .with_jacobian(move |_t, _x| {
        DMatrix::from_row_slice(2, 2, &[0.0, -u_star / l, u_star / c, -1.0 / (r * c)])
    }))
}

/// Check the consensus structure of a matrix: off-diagonal entries
/// nonnegative and row sums zero, both within
/// [`CONSENSUS_STRUCTURE_TOL`].
pub fn validate_consensus_matrix(a: &DMatrix<f64>) -> Result<(), DynamicsError> {
    let n = a.nrows();
    if a.ncols() != n || n == 0 {
        return Err(DynamicsError::InvalidParameter { what: String::from("consensus matrix must be square and nonempty") });
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && a[(i, j)] < -CONSENSUS_STRUCTURE_TOL {
                return Err(DynamicsError::NegativeOffDiagonal { row: i, col: j, value: a[(i, j)] });
            }
        }
        let row_sum: f64 = (0..n).map(|j| a[(i, j)]).sum();
        if row_sum.abs() > CONSENSUS_STRUCTURE_TOL {
            return Err(DynamicsError::NonzeroRowSum { row: i, value: row_sum });
        }
    }
    Ok(())
}

/// Whether the undirected interaction graph of a consensus matrix is
/// connected (edge between `i` and `j` when either coupling entry
/// exceeds 1e−12). Diagnostic for constant graphs; time-varying
/// connectivity is out of scope.
pub fn consensus_graph_connected(a: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return false;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if i != j && !seen[j] && (a[(i, j)].abs() > 1e-12 || a[(j, i)].abs() > 1e-12) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Linear consensus dynamics `ẋ = A x` for a constant matrix with
/// nonnegative off-diagonal entries and zero row sums (so the uniform
/// vector is an equilibrium direction: `A·𝟙 = 0`).
pub fn consensus_constant(a: DMatrix<f64>) -> Result<System, DynamicsError> {
    validate_consensus_matrix(&a)?;
    let n = a.nrows();
    let space = CoordinateSpace::euclidean(n)?;
    let a_field = a.clone();
    Ok(System::new(space, "consensus", move |_t, x| {
        (0..n).map(|i| (0..n).map(|j| a_field[(i, j)] * x[j]).sum()).collect()
    })
    .with_jacobian(move |_t, _x| a.clone()))
}

/// Time-varying consensus dynamics `ẋ = A(t) x`. The matrix signal is
/// validated at the supplied check times; connectivity over time is not
/// verified.
pub fn consensus_signal<A>(n: usize, a_of_t: A, check_times: &[f64]) -> Result<System, DynamicsError>
where
    A: Fn(f64) -> DMatrix<f64> + Send + Sync + Clone + 'static,
{
    if n == 0 {
        return Err(DynamicsError::InvalidParameter { what: String::from("n must be >= 1") });
    }
    for &t in check_times {
        let a = a_of_t(t);
        if a.nrows() != n || a.ncols() != n {
            return Err(DynamicsError::DimensionMismatch { expected: n, got: a.nrows() });
        }
        validate_consensus_matrix(&a)?;
    }
    let space = CoordinateSpace::euclidean(n)?;
    let a_field = a_of_t.clone();
    Ok(System::new(space, "consensus", move |t, x| {
        let a = a_field(t);
        (0..n).map(|i| (0..n).map(|j| a[(i, j)] * x[j]).sum()).collect()
    })
    .with_jacobian(move |t, _x| a_of_t(t))
    .with_time_varying(true))
}

/// Kuramoto oscillator network of `n` identical agents with all-to-all
/// unit coupling on the phase torus:
///
/// ```text
/// θ̇_k = (1/n) Σ_j sin(θ_j − θ_k)
/// ```
///
/// The Jacobian is the symmetric zero-row-sum matrix with off-diagonal
/// entries `(1/n)·cos(θ_j − θ_k)`.
pub fn kuramoto(n: usize) -> Result<System, DynamicsError> {
    if n < 2 {
        return Err(DynamicsError::InvalidParameter { what: format!("kuramoto needs n >= 2, got {n}") });
    }
    let space = CoordinateSpace::torus(n)?;
    Ok(System::new(space, "kuramoto", move |_t, theta| {
        (0..n)
            .map(|k| {
                theta.iter().map(|tj| (tj - theta[k]).sin()).sum::<f64>() / n as f64
            })
            .collect()
    })
    .with_jacobian(move |_t, theta| kuramoto_jacobian(theta)))
}

/// The Kuramoto variational matrix: symmetric, zero row sums, entries
/// `(1/n)·cos(θ_j − θ_k)` off the diagonal.
pub fn kuramoto_jacobian(theta: &[f64]) -> DMatrix<f64> {
    let n = theta.len();
    let mut c = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if j != k {
                let ckj = (theta[j] - theta[k]).cos() / n as f64;
                c[(k, j)] = ckj;
                diag -= ckj;
            }
        }
        c[(k, k)] = diag;
    }
    c
}

/// Linear system `ẋ = A x` (no structural constraints); general-purpose
/// oracle with closed-form solutions.
pub fn linear(a: DMatrix<f64>) -> Result<System, DynamicsError> {
    let n = a.nrows();
    if a.ncols() != n || n == 0 {
        return Err(DynamicsError::InvalidParameter { what: String::from("matrix must be square and nonempty") });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(DynamicsError::NonFinite { context: String::from("linear system matrix") });
    }
    let space = CoordinateSpace::euclidean(n)?;
    let a_field = a.clone();
    Ok(System::new(space, "linear", move |_t, x| {
        (0..n).map(|i| (0..n).map(|j| a_field[(i, j)] * x[j]).sum()).collect()
    })
    .with_jacobian(move |_t, _x| a.clone()))
}

/// Harmonic oscillator `ẋ = [[0, ω], [−ω, 0]] x`: a pure rotation whose
/// solutions are closed orbits, used as a negative control for
/// periodic-orbit exclusion.
pub fn harmonic(omega: f64) -> Result<System, DynamicsError> {
    if !omega.is_finite() || omega == 0.0 {
        return Err(DynamicsError::InvalidParameter { what: format!("omega = {omega} (must be finite, nonzero)") });
    }
    let a = DMatrix::from_row_slice(2, 2, &[0.0, omega, -omega, 0.0]);
    let mut s = linear(a)?;
    s.name = String::from("harmonic");
    Ok(s)
}

/// Scalar parameters for catalog construction by name.
#[derive(Debug, Clone, Default)]
pub struct CatalogParams {
    pub scalars: BTreeMap<String, f64>,
    pub matrices: BTreeMap<String, DMatrix<f64>>,
}

impl CatalogParams {
    fn scalar(&self, key: &str, default: f64) -> f64 {
        self.scalars.get(key).copied().unwrap_or(default)
    }

    fn matrix(&self, key: &str) -> Result<DMatrix<f64>, DynamicsError> {
        self.matrices
            .get(key)
            .cloned()
            .ok_or_else(|| DynamicsError::InvalidParameter { what: format!("missing matrix parameter '{key}'") })
    }
}

/// Construct a catalog system by name; unknown names are rejected.
///
/// Recognized names and parameters (defaults in parentheses):
/// `sine_oscillator`; `boost_converter` with scalars `l`, `c`, `r`, `e`
/// (1) and `u_star` (0.5); `consensus` with matrix `a`; `kuramoto` with
/// scalar `n` (5); `linear` with matrix `a`; `harmonic` with scalar
/// `omega` (1).
pub fn make_builtin(name: &str, params: &CatalogParams) -> Result<System, DynamicsError> {
    match name {
        "sine_oscillator" => Ok(sine_oscillator()),
        "boost_converter" => boost_converter(
            params.scalar("l", 1.0),
            params.scalar("c", 1.0),
            params.scalar("r", 1.0),
            params.scalar("e", 1.0),
            params.scalar("u_star", 0.5),
        ),
        "consensus" => consensus_constant(params.matrix("a")?),
        "kuramoto" => {
            let n = params.scalar("n", 5.0);
            if n < 2.0 || n.fract() != 0.0 {
                return Err(DynamicsError::InvalidParameter { what: format!("kuramoto n = {n}") });
            }
            kuramoto(n as usize)
        }
        "linear" => linear(params.matrix("a")?),
        "harmonic" => harmonic(params.scalar("omega", 1.0)),
        other => Err(DynamicsError::InvalidParameter { what: format!("unknown system '{other}'") }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow;
    use approx::assert_relative_eq;
    use core::f64::consts::{FRAC_PI_2, PI};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn point(system: &System, coords: Vec<f64>) -> Point {
        system.space().point(coords).unwrap()
    }

    #[test]
    fn sine_oscillator_field_vanishes_at_the_origin() {
        let s = sine_oscillator();
        let f = s.eval_field(0.0, &point(&s, vec![0.0])).unwrap();
        assert_eq!(f.coords(), &[0.0]);
    }

    #[test]
    fn sine_oscillator_field_at_quarter_turn_points_back() {
        let s = sine_oscillator();
        let f = s.eval_field(0.0, &point(&s, vec![FRAC_PI_2])).unwrap();
        assert_relative_eq!(f.coords()[0], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn sine_oscillator_jacobian_at_origin_is_minus_one() {
        let s = sine_oscillator();
        let j = s.eval_jacobian(0.0, &point(&s, vec![0.0])).unwrap();
        assert_relative_eq!(j[(0, 0)], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn boost_converter_equilibrium_balances_both_equations() {
        // With l = c = r = e = 1 and u* = 0.5 the equilibrium solves
        // u*·x_C = e and u*·x_L = x_C/r: (x_L, x_C) = (4, 2).
        let s = boost_converter(1.0, 1.0, 1.0, 1.0, 0.5).unwrap();
        let f = s.eval_field(0.0, &point(&s, vec![4.0, 2.0])).unwrap();
        assert_relative_eq!(f.coords()[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(f.coords()[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn boost_converter_is_affine_with_constant_jacobian() {
        let s = boost_converter(1.0, 1.0, 1.0, 1.0, 0.5).unwrap();
        let j1 = s.eval_jacobian(0.0, &point(&s, vec![0.0, 0.0])).unwrap();
        let j2 = s.eval_jacobian(3.0, &point(&s, vec![-7.0, 11.0])).unwrap();
        assert_eq!(j1, j2);
        assert_eq!(j1, DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, -1.0]));
    }

    #[test]
    fn boost_converter_rejects_nonpositive_components() {
        assert!(boost_converter(0.0, 1.0, 1.0, 1.0, 0.5).is_err());
        assert!(boost_converter(1.0, -2.0, 1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn consensus_accepts_zero_row_sum_metzler_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        let s = consensus_constant(a).unwrap();
        assert_eq!(s.dim(), 2);
    }

    #[test]
    fn consensus_rejects_nonzero_row_sums() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 1.0, -1.0]);
        let err = consensus_constant(a).unwrap_err();
        assert!(matches!(err, DynamicsError::NonzeroRowSum { row: 0, .. }));
    }

    #[test]
    fn consensus_rejects_negative_off_diagonal_entries() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let err = consensus_constant(a).unwrap_err();
        assert!(matches!(err, DynamicsError::NegativeOffDiagonal { .. }));
    }

    #[test]
    fn consensus_field_ignores_uniform_shifts() {
        let a = DMatrix::from_row_slice(3, 3, &[-2.0, 1.0, 1.0, 1.0, -1.0, 0.0, 0.5, 0.5, -1.0]);
        let s = consensus_constant(a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let alpha: f64 = rng.gen_range(-10.0..10.0);
            let shifted: Vec<f64> = x.iter().map(|v| v + alpha).collect();
            let f1 = s.eval_field(0.0, &point(&s, x)).unwrap();
            let f2 = s.eval_field(0.0, &point(&s, shifted)).unwrap();
            for (a1, a2) in f1.coords().iter().zip(f2.coords()) {
                assert_relative_eq!(a1, a2, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn consensus_ring_graph_is_connected_and_split_graph_is_not() {
        let ring = DMatrix::from_row_slice(3, 3, &[-2.0, 1.0, 1.0, 1.0, -2.0, 1.0, 1.0, 1.0, -2.0]);
        assert!(consensus_graph_connected(&ring));
        let split = DMatrix::from_row_slice(
            4,
            4,
            &[
                -1.0, 1.0, 0.0, 0.0, //
                1.0, -1.0, 0.0, 0.0, //
                0.0, 0.0, -1.0, 1.0, //
                0.0, 0.0, 1.0, -1.0,
            ],
        );
        assert!(!consensus_graph_connected(&split));
    }

    #[test]
    fn kuramoto_two_agents_jacobian_at_synchrony() {
        let s = kuramoto(2).unwrap();
        let j = s.eval_jacobian(0.0, &point(&s, vec![0.0, 0.0])).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[-0.5, 0.5, 0.5, -0.5]);
        assert_relative_eq!((j - expected).abs().max(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn kuramoto_three_agent_field_matches_hand_computation() {
        // At θ = (0, π/2, −π/2): agent 1 sees sin(π/2) + sin(−π/2) = 0,
        // agent 2 sees sin(−π/2) + sin(−π) = −1, agent 3 the mirror image.
        let s = kuramoto(3).unwrap();
        let f = s
            .eval_field(0.0, &point(&s, vec![0.0, FRAC_PI_2, -FRAC_PI_2]))
            .unwrap();
        assert_relative_eq!(f.coords()[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(f.coords()[1], -1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(f.coords()[2], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn kuramoto_field_ignores_uniform_phase_shifts() {
        let s = kuramoto(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let theta: Vec<f64> = (0..4).map(|_| rng.gen_range(-PI..PI)).collect();
            let alpha: f64 = rng.gen_range(-3.0..3.0);
            let shifted: Vec<f64> = theta.iter().map(|v| v + alpha).collect();
            let f1 = s.eval_field(0.0, &point(&s, theta)).unwrap();
            let f2 = s.eval_field(0.0, &point(&s, shifted)).unwrap();
            for (a1, a2) in f1.coords().iter().zip(f2.coords()) {
                assert_relative_eq!(a1, a2, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn linear_system_jacobian_is_the_matrix_itself() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0]);
        let s = linear(a.clone()).unwrap();
        let j = s.eval_jacobian(1.5, &point(&s, vec![2.0, -3.0])).unwrap();
        assert_eq!(j, a);
    }

    #[test]
    fn harmonic_field_is_a_pure_rotation() {
        let s = harmonic(1.0).unwrap();
        let f = s.eval_field(0.0, &point(&s, vec![1.0, 0.0])).unwrap();
        assert_eq!(f.coords(), &[0.0, -1.0]);
    }

    #[test]
    fn catalog_jacobians_match_finite_differences() {
        let a = DMatrix::from_row_slice(3, 3, &[-2.0, 1.0, 1.0, 1.0, -1.0, 0.0, 0.5, 0.5, -1.0]);
        let systems = vec![
            sine_oscillator(),
            boost_converter(0.7, 1.3, 2.0, 1.5, 0.4).unwrap(),
            consensus_constant(a).unwrap(),
            kuramoto(4).unwrap(),
            linear(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0])).unwrap(),
            harmonic(2.0).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for s in &systems {
            let samples: Vec<(f64, Vec<f64>)> = (0..100)
                .map(|_| {
                    let t = rng.gen_range(0.0..5.0);
                    let x = (0..s.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
                    (t, x)
                })
                .collect();
            let worst = s.verify_jacobian(&samples).unwrap();
            assert!(worst <= JACOBIAN_AUDIT_TOL, "{}: worst deviation {worst}", s.name());
        }
    }

    #[test]
    fn make_builtin_dispatches_and_rejects_unknown_names() {
        let params = CatalogParams::default();
        assert_eq!(make_builtin("sine_oscillator", &params).unwrap().dim(), 1);
        assert_eq!(make_builtin("kuramoto", &params).unwrap().dim(), 5);
        assert!(make_builtin("lorenz", &params).is_err());
        assert!(make_builtin("linear", &params).is_err()); // matrix required
    }

    #[test]
    fn region_membership_respects_box_and_predicate() {
        let r = Region::ball(2, 2.0).unwrap();
        assert!(r.contains(&[1.0, 1.0]));
        assert!(!r.contains(&[1.9, 1.9])); // inside the box, outside the ball
        assert!(!r.contains(&[3.0, 0.0]));
        assert_eq!(r.center(), vec![0.0, 0.0]);
    }

    #[test]
    fn region_rejects_inverted_bounds() {
        assert!(Region::new_box(vec![(1.0, -1.0)]).is_err());
        assert!(Region::new_box(vec![]).is_err());
    }

    #[test]
    fn virtual_system_without_coupling_reproduces_the_base_field() {
        let base = sine_oscillator();
        let traj = flow::integrate(&base, 0.0, &base.space().point(vec![0.5]).unwrap(), 2.0, 1e-2).unwrap();
        let src = TrajectorySource::new(Arc::new(traj));
        let virt = make_virtual(&base, |t, z, _x| vec![-(z[0].sin()) + 0.0 * t], src, 20).unwrap();
        for z in [-1.0, 0.0, 0.3, 2.0] {
            let p = base.space().point(vec![z]).unwrap();
            let fb = base.eval_field(1.0, &p).unwrap();
            let fv = virt.eval_field(1.0, &p).unwrap();
            assert_relative_eq!(fb.coords()[0], fv.coords()[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn virtual_observer_jacobian_shifts_by_minus_identity() {
        // f̂(t, z, x) = A z − (z − x) has Jacobian A − I in z.
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let base = linear(a.clone()).unwrap();
        let x0 = base.space().point(vec![1.0, 0.0]).unwrap();
        let traj = flow::integrate(&base, 0.0, &x0, 3.0, 1e-2).unwrap();
        let src = TrajectorySource::new(Arc::new(traj));
        let a_obs = a.clone();
        let virt = make_virtual(
            &base,
            move |_t, z, x| {
                (0..2)
                    .map(|i| (0..2).map(|j| a_obs[(i, j)] * z[j]).sum::<f64>() - (z[i] - x[i]))
                    .collect()
            },
            src,
            20,
        )
        .unwrap();
        assert!(virt.is_time_varying());
        let j = virt
            .eval_jacobian(1.0, &base.space().point(vec![0.2, -0.4]).unwrap())
            .unwrap();
        let expected = a - DMatrix::identity(2, 2);
        assert!((j - expected).abs().max() < 1e-6);
    }

    #[test]
    fn virtual_construction_rejects_inconsistent_closures() {
        let base = sine_oscillator();
        let traj = flow::integrate(&base, 0.0, &base.space().point(vec![0.5]).unwrap(), 2.0, 1e-2).unwrap();
        let src = TrajectorySource::new(Arc::new(traj));
        let err = make_virtual(&base, |_t, z, _x| vec![-(z[0].sin()) + 0.1], src, 20).unwrap_err();
        assert!(matches!(err, DynamicsError::VirtualInconsistency { .. }));
    }

    #[test]
    fn trajectory_source_rejects_times_outside_the_record() {
        let base = sine_oscillator();
        let traj = flow::integrate(&base, 0.0, &base.space().point(vec![0.5]).unwrap(), 1.0, 1e-2).unwrap();
        let src = TrajectorySource::new(Arc::new(traj));
        assert!(src.state_at(0.5).is_ok());
        assert!(matches!(src.state_at(2.0), Err(DynamicsError::TimeOutOfRange { .. })));
    }
}
