//! Coordinate spaces, points, tangent vectors, and diffeomorphisms.
//!
//! The toolkit works in a single global coordinate chart: a state space is
//! `ℝ^d` where any subset of coordinates may be marked *periodic*, meaning
//! that coordinate lives on a circle of circumference 2π and is stored
//! wrapped to `(−π, π]`. That is enough to host every example treated by
//! the rest of the crate (lines, planes, circles, and phase tori) without
//! a multi-chart atlas.
//!
//! Tangent vectors are plain vectors of the same dimension — tangent
//! spaces are linear, so they are never wrapped. The only place the
//! periodic structure matters for tangents is [`CoordinateSpace::displacement`],
//! which returns the minimal angular difference for periodic coordinates.
//!
//! [`Diffeomorphism`] packages a smooth invertible change of coordinates
//! together with its differential, used by the certification layer to
//! audit that contraction verdicts do not depend on the chart.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};
use core::fmt;

// Resolves float math in no_std builds; std builds shadow it with inherent methods.
#[allow(unused_imports)]
use num_traits::Float;
use nalgebra::DMatrix;

use serde::Serialize;

/// Default step for central finite differences.
///
/// `1e−6` balances truncation error (O(h²) ≈ 1e−12) against roundoff
/// amplification (O(ε/h) ≈ 1e−10) at double precision.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Condition-number threshold above which a Jacobian is flagged as
/// numerically singular by [`Diffeomorphism::pushforward`].
pub const ILL_CONDITION_THRESHOLD: f64 = 1e12;

/// Tolerance for the round-trip check `inverse(forward(x)) = x`.
pub const INVERSE_CHECK_TOL: f64 = 1e-10;

/// Errors raised by geometric primitives.
#[derive(Debug, Clone, PartialEq)]
pub enum GeometryError {
    /// A vector had the wrong length for the space or map it was used with.
    DimensionMismatch { expected: usize, got: usize },
    /// A map produced a non-finite value; the message names the operation.
    NonFinite { context: String },
    /// A finite-difference step was zero, negative, or non-finite.
    InvalidStep { h: f64 },
    /// `inverse(forward(x))` strayed from `x` beyond [`INVERSE_CHECK_TOL`].
    InverseMismatch { worst: f64 },
    /// A periodic mask was empty (spaces need dimension ≥ 1).
    EmptySpace,
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            GeometryError::NonFinite { context } => {
                write!(f, "non-finite value in {context}")
            }
            GeometryError::InvalidStep { h } => {
                write!(f, "finite-difference step must be positive and finite, got {h}")
            }
            GeometryError::InverseMismatch { worst } => {
                write!(
                    f,
                    "inverse(forward(x)) deviates from x by {worst:.3e} (tolerance {INVERSE_CHECK_TOL:.0e})"
                )
            }
            GeometryError::EmptySpace => write!(f, "coordinate space must have dimension >= 1"),
        }
    }
}

impl core::error::Error for GeometryError {}

/// Wrap a single angle to `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    if !theta.is_finite() {
        return theta;
    }
    let mut w = theta - TAU * (theta / TAU).round();
    if w > PI {
        w -= TAU;
    }
    if w <= -PI {
        w += TAU;
    }
    w
}

/// A flat coordinate space of fixed dimension with optional periodic
/// (circle) coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinateSpace {
    dim: usize,
    periodic: Vec<bool>,
}

impl CoordinateSpace {
    /// Euclidean space `ℝ^dim` with no periodic coordinates.
    pub fn euclidean(dim: usize) -> Result<Self, GeometryError> {
        Self::new(alloc::vec![false; dim])
    }

    /// The circle `𝕊¹`: one periodic coordinate.
    pub fn circle() -> Self {
        Self::new(alloc::vec![true]).expect("one coordinate")
    }

    /// The phase torus `(𝕊¹)^dim`: every coordinate periodic.
    pub fn torus(dim: usize) -> Result<Self, GeometryError> {
        Self::new(alloc::vec![true; dim])
    }

    /// A space described by its periodic mask; `true` entries live on a
    /// circle of circumference 2π.
    pub fn new(periodic: Vec<bool>) -> Result<Self, GeometryError> {
        if periodic.is_empty() {
            return Err(GeometryError::EmptySpace);
        }
        Ok(CoordinateSpace { dim: periodic.len(), periodic })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_periodic(&self, i: usize) -> bool {
        self.periodic[i]
    }

    /// True when at least one coordinate is periodic.
    pub fn has_periodic(&self) -> bool {
        self.periodic.iter().any(|&p| p)
    }

    fn check_dim(&self, len: usize) -> Result<(), GeometryError> {
        if len != self.dim {
            Err(GeometryError::DimensionMismatch { expected: self.dim, got: len })
        } else {
            Ok(())
        }
    }

    /// Construct a point in this space, wrapping periodic coordinates.
    pub fn point(&self, coords: Vec<f64>) -> Result<Point, GeometryError> {
        self.check_dim(coords.len())?;
        let mut p = Point { coords };
        self.wrap_in_place(&mut p.coords);
        Ok(p)
    }

    /// Construct a tangent vector (never wrapped).
    pub fn tangent(&self, coords: Vec<f64>) -> Result<Tangent, GeometryError> {
        self.check_dim(coords.len())?;
        Ok(Tangent { coords })
    }

    pub(crate) fn wrap_in_place(&self, coords: &mut [f64]) {
        for (c, &periodic) in coords.iter_mut().zip(&self.periodic) {
            if periodic {
                *c = wrap_angle(*c);
            }
        }
    }

    /// Return `p` with periodic coordinates shifted by multiples of 2π
    /// into `(−π, π]`; non-periodic coordinates pass through unchanged.
    pub fn wrap(&self, p: &Point) -> Result<Point, GeometryError> {
        self.check_dim(p.dim())?;
        let mut out = p.clone();
        self.wrap_in_place(&mut out.coords);
        Ok(out)
    }

    /// Wrap-aware difference `b − a` as a tangent vector at `a`.
    ///
    /// Periodic coordinates return the minimal angular difference in
    /// `(−π, π]` (the shorter arc), so the result seeds the shortest
    /// straight-line curve between the two points.
    pub fn displacement(&self, a: &Point, b: &Point) -> Result<Tangent, GeometryError> {
        self.check_dim(a.dim())?;
        self.check_dim(b.dim())?;
        let coords = a
            .coords
            .iter()
            .zip(&b.coords)
            .zip(&self.periodic)
            .map(|((&ai, &bi), &periodic)| {
                let d = bi - ai;
                if periodic {
                    wrap_angle(d)
                } else {
                    d
                }
            })
            .collect();
        Ok(Tangent { coords })
    }
}

/// A state `x`, stored in chart coordinates with periodic entries wrapped
/// to `(−π, π]` at construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    /// A raw point with no associated space (no wrapping applied); prefer
    /// [`CoordinateSpace::point`] when the space is at hand.
    pub fn new(coords: Vec<f64>) -> Self {
        Point { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.coords.clone()
    }
}

/// An infinitesimal displacement `δx` in the tangent space at some point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tangent {
    coords: Vec<f64>,
}

impl Tangent {
    pub fn new(coords: Vec<f64>) -> Self {
        Tangent { coords }
    }

    pub fn zero(dim: usize) -> Self {
        Tangent { coords: alloc::vec![0.0; dim] }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.coords.clone()
    }

    /// Euclidean norm of the coordinate representation.
    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Central-difference Jacobian of `map` at `x` with step `h`.
///
/// Entry `(i, j)` is `(map(x + h e_j)_i − map(x − h e_j)_i) / (2h)`; the
/// map need not be square (rows follow the output length). Second-order
/// accurate on C² maps.
pub fn numeric_jacobian<F>(map: F, x: &[f64], h: f64) -> Result<DMatrix<f64>, GeometryError>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(GeometryError::InvalidStep { h });
    }
    let n = x.len();
    let mut probe = x.to_vec();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut rows = 0usize;
    for j in 0..n {
        probe[j] = x[j] + h;
        let hi = probe[j];
        let plus = map(&probe);
        probe[j] = x[j] - h;
        let span = hi - probe[j]; // actually realized step, exact in fp
        let minus = map(&probe);
        probe[j] = x[j];
        if plus.len() != minus.len() {
            return Err(GeometryError::DimensionMismatch { expected: plus.len(), got: minus.len() });
        }
        let col: Vec<f64> = plus
            .iter()
            .zip(&minus)
            .map(|(p, m)| (p - m) / span)
            .collect();
        if col.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite {
                context: format!("numeric_jacobian column {j}"),
            });
        }
        rows = col.len();
        columns.push(col);
    }
    let mut jac = DMatrix::zeros(rows, n);
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            jac[(i, j)] = v;
        }
    }
    Ok(jac)
}

type PointMap = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type JacobianMap = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;

/// Result of pushing a tangent vector through a diffeomorphism, with a
/// conditioning diagnostic for the Jacobian used.
#[derive(Debug, Clone)]
pub struct Pushforward {
    pub tangent: Tangent,
    /// 2-norm condition number estimate of the Jacobian at the base point.
    pub condition: f64,
}

impl Pushforward {
    /// True when the Jacobian's condition number exceeds
    /// [`ILL_CONDITION_THRESHOLD`], i.e. the map is numerically singular
    /// at the base point and the pushed vector should not be trusted.
    pub fn is_ill_conditioned(&self) -> bool {
        !self.condition.is_finite() || self.condition > ILL_CONDITION_THRESHOLD
    }
}

/// A smooth invertible change of coordinates `z = φ(x)` with its
/// differential, used for chart-independence audits.
///
/// The Jacobian may be supplied analytically; otherwise central finite
/// differences of the forward map are used.
pub struct Diffeomorphism {
    forward: Box<PointMap>,
    inverse: Box<PointMap>,
    jacobian: Option<Box<JacobianMap>>,
    fd_step: f64,
}

impl Diffeomorphism {
    pub fn new<F, G>(forward: F, inverse: G) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Diffeomorphism {
            forward: Box::new(forward),
            inverse: Box::new(inverse),
            jacobian: None,
            fd_step: DEFAULT_FD_STEP,
        }
    }

    /// Attach an analytic Jacobian `x ↦ ∂φ/∂x`.
    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Box::new(jacobian));
        self
    }

    /// Override the finite-difference step used when no analytic Jacobian
    /// is attached.
    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    pub fn forward(&self, x: &Point) -> Point {
        Point::new((self.forward)(x.coords()))
    }

    pub fn inverse(&self, z: &Point) -> Point {
        Point::new((self.inverse)(z.coords()))
    }

    /// Jacobian `∂φ/∂x` at `x` (analytic when attached, else central
    /// finite differences with the configured step).
    pub fn jacobian(&self, x: &Point) -> Result<DMatrix<f64>, GeometryError> {
        match &self.jacobian {
            Some(j) => {
                let m = j(x.coords());
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(GeometryError::NonFinite { context: String::from("analytic jacobian") });
                }
                Ok(m)
            }
            None => numeric_jacobian(|y| (self.forward)(y), x.coords(), self.fd_step),
        }
    }

    /// Differential applied to a tangent vector: `Dφ(x)[v] = J_φ(x)·v`.
    ///
    /// The returned [`Pushforward`] carries a condition-number estimate of
    /// the Jacobian; callers should treat results with
    /// [`Pushforward::is_ill_conditioned`] set as unreliable.
    pub fn pushforward(&self, x: &Point, v: &Tangent) -> Result<Pushforward, GeometryError> {
        let jac = self.jacobian(x)?;
        if jac.ncols() != v.dim() {
            return Err(GeometryError::DimensionMismatch { expected: jac.ncols(), got: v.dim() });
        }
        let pushed: Vec<f64> = (0..jac.nrows())
            .map(|i| (0..jac.ncols()).map(|j| jac[(i, j)] * v.coords()[j]).sum())
            .collect();
        let svd = jac.svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        Ok(Pushforward { tangent: Tangent::new(pushed), condition })
    }

    /// Audit `inverse(forward(x)) = x` on the given sample points; returns
    /// the worst deviation or an error when it exceeds
    /// [`INVERSE_CHECK_TOL`].
    pub fn check_inverse(&self, samples: &[Point]) -> Result<f64, GeometryError> {
        let mut worst: f64 = 0.0;
        for x in samples {
            let round_trip = self.inverse(&self.forward(x));
            if round_trip.dim() != x.dim() {
                return Err(GeometryError::DimensionMismatch {
                    expected: x.dim(),
                    got: round_trip.dim(),
                });
            }
            for (a, b) in x.coords().iter().zip(round_trip.coords()) {
                let dev = (a - b).abs();
                if !dev.is_finite() {
                    return Err(GeometryError::NonFinite { context: String::from("inverse check") });
                }
                worst = worst.max(dev);
            }
        }
        if worst > INVERSE_CHECK_TOL {
            Err(GeometryError::InverseMismatch { worst })
        } else {
            Ok(worst)
        }
    }
}

impl fmt::Debug for Diffeomorphism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Diffeomorphism")
            .field("jacobian", &self.jacobian.as_ref().map(|_| "analytic"))
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn circle_line() -> CoordinateSpace {
        CoordinateSpace::new(alloc::vec![true, false]).unwrap()
    }

    #[test]
    fn wrap_leaves_euclidean_coordinates_alone() {
        let space = CoordinateSpace::euclidean(1).unwrap();
        let p = space.point(alloc::vec![5.0]).unwrap();
        assert_eq!(p.coords(), &[5.0]);
    }

    #[test]
    fn wrap_reduces_angles_to_half_open_interval() {
        let space = CoordinateSpace::circle();
        let p = space.point(alloc::vec![3.0 * PI]).unwrap();
        assert_relative_eq!(p.coords()[0], PI, max_relative = 1e-15);

        let q = space.point(alloc::vec![-PI]).unwrap();
        assert_relative_eq!(q.coords()[0], PI, max_relative = 1e-15);
    }

    #[test]
    fn wrap_acts_per_coordinate() {
        let space = circle_line();
        let p = space.point(alloc::vec![-1.5 * PI, 2.0]).unwrap();
        assert_relative_eq!(p.coords()[0], 0.5 * PI, max_relative = 1e-15);
        assert_eq!(p.coords()[1], 2.0);
    }

    #[test]
    fn displacement_is_plain_difference_in_euclidean_space() {
        let space = CoordinateSpace::euclidean(2).unwrap();
        let a = space.point(alloc::vec![0.0, 0.0]).unwrap();
        let b = space.point(alloc::vec![3.0, 4.0]).unwrap();
        let d = space.displacement(&a, &b).unwrap();
        assert_eq!(d.coords(), &[3.0, 4.0]);
    }

    #[test]
    fn displacement_takes_the_shorter_arc_on_the_circle() {
        let space = CoordinateSpace::circle();
        let a = space.point(alloc::vec![3.0]).unwrap();
        let b = space.point(alloc::vec![-3.0]).unwrap();
        let d = space.displacement(&a, &b).unwrap();
        assert_relative_eq!(d.coords()[0], TAU - 6.0, epsilon = 1e-14);
    }

    #[test]
    fn displacement_between_equal_points_is_zero() {
        let space = circle_line();
        let a = space.point(alloc::vec![1.0, -2.0]).unwrap();
        let d = space.displacement(&a, &a).unwrap();
        assert_eq!(d.coords(), &[0.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let space = CoordinateSpace::euclidean(2).unwrap();
        let err = space.point(alloc::vec![1.0]).unwrap_err();
        assert_eq!(err, GeometryError::DimensionMismatch { expected: 2, got: 1 });
    }

    proptest! {
        #[test]
        fn wrap_is_idempotent(theta in -50.0f64..50.0) {
            let once = wrap_angle(theta);
            let twice = wrap_angle(once);
            prop_assert!((once - twice).abs() < 1e-15);
            prop_assert!(once > -PI && once <= PI);
        }

        #[test]
        fn displacement_is_antisymmetric_after_wrap(
            a in -10.0f64..10.0,
            b in -10.0f64..10.0,
            y1 in -10.0f64..10.0,
            y2 in -10.0f64..10.0,
        ) {
            let space = CoordinateSpace::new(alloc::vec![true, false]).unwrap();
            let pa = space.point(alloc::vec![a, y1]).unwrap();
            let pb = space.point(alloc::vec![b, y2]).unwrap();
            let fwd = space.displacement(&pa, &pb).unwrap();
            let bwd = space.displacement(&pb, &pa).unwrap();
            // The two shorter arcs may both equal π; their sum is then a
            // full turn, which wraps to zero.
            let angular_sum = wrap_angle(fwd.coords()[0] + bwd.coords()[0]);
            prop_assert!(angular_sum.abs() < 1e-12);
            prop_assert!((fwd.coords()[1] + bwd.coords()[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn pushforward_through_identity_returns_the_vector() {
        let d = Diffeomorphism::new(|x| x.to_vec(), |z| z.to_vec());
        let x = Point::new(alloc::vec![0.3, -0.7]);
        let v = Tangent::new(alloc::vec![1.0, 2.0]);
        let pf = d.pushforward(&x, &v).unwrap();
        assert_relative_eq!(pf.tangent.coords()[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(pf.tangent.coords()[1], 2.0, epsilon = 1e-9);
        assert!(!pf.is_ill_conditioned());
    }

    #[test]
    fn pushforward_through_scaling_doubles_the_vector() {
        let d = Diffeomorphism::new(
            |x| x.iter().map(|v| 2.0 * v).collect(),
            |z| z.iter().map(|v| v / 2.0).collect(),
        );
        let pf = d
            .pushforward(&Point::new(alloc::vec![1.0]), &Tangent::new(alloc::vec![3.0]))
            .unwrap();
        assert_relative_eq!(pf.tangent.coords()[0], 6.0, epsilon = 1e-8);
    }

    #[test]
    fn pushforward_through_sine_perturbation_matches_analytic_derivative() {
        // z = x + 0.3 sin x has derivative 1 + 0.3 cos x = 1.3 at x = 0.
        let d = Diffeomorphism::new(
            |x| alloc::vec![x[0] + 0.3 * x[0].sin()],
            |z| {
                let mut x = z[0];
                for _ in 0..60 {
                    x = z[0] - 0.3 * x.sin();
                }
                alloc::vec![x]
            },
        );
        let pf = d
            .pushforward(&Point::new(alloc::vec![0.0]), &Tangent::new(alloc::vec![1.0]))
            .unwrap();
        assert_relative_eq!(pf.tangent.coords()[0], 1.3, epsilon = 1e-9);
    }

    #[test]
    fn near_singular_jacobian_is_flagged() {
        let d = Diffeomorphism::new(
            |x| alloc::vec![x[0] + x[1], x[0] + x[1] * (1.0 + 1e-14)],
            |z| z.to_vec(),
        )
        .with_jacobian(|_| DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 + 1e-14]));
        let pf = d
            .pushforward(&Point::new(alloc::vec![0.0, 0.0]), &Tangent::new(alloc::vec![1.0, 0.0]))
            .unwrap();
        assert!(pf.is_ill_conditioned());
    }

    #[test]
    fn inverse_check_accepts_a_contractive_newton_inverse() {
        let d = Diffeomorphism::new(
            |x| alloc::vec![x[0] + 0.3 * x[0].sin()],
            |z| {
                let mut x = z[0];
                for _ in 0..60 {
                    x = z[0] - 0.3 * x.sin();
                }
                alloc::vec![x]
            },
        );
        let samples: Vec<Point> = (-10..=10)
            .map(|k| Point::new(alloc::vec![0.3 * k as f64]))
            .collect();
        let worst = d.check_inverse(&samples).unwrap();
        assert!(worst <= INVERSE_CHECK_TOL);
    }

    #[test]
    fn inverse_check_rejects_a_wrong_inverse() {
        let d = Diffeomorphism::new(|x| alloc::vec![2.0 * x[0]], |z| z.to_vec());
        let err = d.check_inverse(&[Point::new(alloc::vec![1.0])]).unwrap_err();
        assert!(matches!(err, GeometryError::InverseMismatch { .. }));
    }

    #[test]
    fn numeric_jacobian_of_identity_is_identity() {
        let jac = numeric_jacobian(|x| x.to_vec(), &[0.4, -1.2, 3.0], 1e-6).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(jac[(i, j)], expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn numeric_jacobian_matches_hand_derivative_of_square_map() {
        // map(x) = (x₁², x₂) at (1, 1): Jacobian [[2, 0], [0, 1]].
        let jac =
            numeric_jacobian(|x| alloc::vec![x[0] * x[0], x[1]], &[1.0, 1.0], 1e-5).unwrap();
        assert_relative_eq!(jac[(0, 0)], 2.0, epsilon = 1e-8);
        assert_relative_eq!(jac[(0, 1)], 0.0, epsilon = 1e-8);
        assert_relative_eq!(jac[(1, 0)], 0.0, epsilon = 1e-8);
        assert_relative_eq!(jac[(1, 1)], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn numeric_jacobian_matches_derivative_of_negated_sine() {
        let jac = numeric_jacobian(|x| alloc::vec![-x[0].sin()], &[0.0], 1e-6).unwrap();
        assert_relative_eq!(jac[(0, 0)], -1.0, epsilon = 1e-8);
    }

    #[test]
    fn numeric_jacobian_error_shrinks_at_second_order() {
        // Central differences are O(h²): halving the step should shrink the
        // error by a factor close to 4 on a smooth map.
        let map = |x: &[f64]| alloc::vec![x[0].sin() * x[1].cos(), (0.3 * x[0]).exp() + x[1] * x[1] * x[1]];
        let x = [0.7, -0.4];
        let exact = DMatrix::from_row_slice(
            2,
            2,
            &[
                x[0].cos() * x[1].cos(),
                -x[0].sin() * x[1].sin(),
                0.3 * (0.3 * x[0]).exp(),
                3.0 * x[1] * x[1],
            ],
        );
        let err = |h: f64| -> f64 {
            let jac = numeric_jacobian(map, &x, h).unwrap();
            (jac - exact.clone()).abs().max()
        };
        let ratio = err(1e-3) / err(5e-4);
        assert!(
            (3.5..=4.5).contains(&ratio),
            "second-order convergence ratio out of range: {ratio}"
        );
    }

    #[test]
    fn numeric_jacobian_rejects_bad_steps_and_nan_maps() {
        assert!(matches!(
            numeric_jacobian(|x| x.to_vec(), &[1.0], 0.0),
            Err(GeometryError::InvalidStep { .. })
        ));
        assert!(matches!(
            numeric_jacobian(|_| alloc::vec![f64::NAN], &[1.0], 1e-6),
            Err(GeometryError::NonFinite { .. })
        ));
    }
}
