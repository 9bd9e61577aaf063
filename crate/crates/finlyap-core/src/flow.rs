//! Fixed-step integration of a system together with its variational
//! (displacement) dynamics.
//!
//! The prolonged state pairs the base state `x` with a matrix `Δ` of
//! displacement columns evolving by `Δ̇ = J(t, x)·Δ` along the solution —
//! each column tracks how an infinitesimal initial displacement is
//! transported by the flow. Integration is classical fixed-step RK4 on
//! the joint system: deterministic, reproducible, and adequate for the
//! non-stiff desk-scale systems in the catalog.
//!
//! Periodic coordinates of `x` are wrapped after each committed step
//! (fields on circles are 2π-periodic, so intermediate stages need no
//! wrapping); displacement columns live in tangent spaces and are never
//! wrapped.
//!
//! [`fd_displacement_oracle`] provides an independent check: it
//! differentiates the flow itself by finite differences, which must
//! agree with the variational integration to first order in the
//! perturbation size.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;

// Resolves float math in no_std builds; std builds shadow it with inherent methods.
#[allow(unused_imports)]
use num_traits::Float;
use nalgebra::DMatrix;

use crate::dynamics::{DynamicsError, System};
use crate::geometry::{CoordinateSpace, Point, Tangent};

/// Default integration step.
pub const DEFAULT_DT: f64 = 1e-3;

/// States with any coordinate beyond this magnitude abort integration as
/// a blow-up.
pub const BLOWUP_LIMIT: f64 = 1e9;

/// Errors raised by integration.
#[derive(Debug)]
pub enum FlowError {
    InvalidStep { dt: f64 },
    InvalidWindow { t0: f64, tf: f64 },
    /// The state became non-finite or exceeded [`BLOWUP_LIMIT`]; the
    /// partial trajectory up to the last good sample is attached.
    BlowUp { t: f64, partial: Box<Trajectory> },
    Dynamics(DynamicsError),
}

impl fmt::Display for FlowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowError::InvalidStep { dt } => write!(f, "step must be positive and finite, got {dt}"),
            FlowError::InvalidWindow { t0, tf } => {
                write!(f, "integration window must satisfy tf > t0, got [{t0}, {tf}]")
            }
            FlowError::BlowUp { t, partial } => write!(
                f,
                "state blew up at t = {t} (partial trajectory of {} samples retained)",
                partial.len()
            ),
            FlowError::Dynamics(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for FlowError {}

impl From<DynamicsError> for FlowError {
    fn from(e: DynamicsError) -> Self {
        FlowError::Dynamics(e)
    }
}

/// One sample of the prolonged flow: time, state, and a `dim × m` matrix
/// of displacement columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ProlongedState {
    pub t: f64,
    pub x: Point,
    pub delta: DMatrix<f64>,
}

/// A uniformly sampled (prolonged) solution.
#[derive(Debug, Clone)]
pub struct Trajectory {
    space: CoordinateSpace,
    samples: Vec<ProlongedState>,
    t0: f64,
    tf: f64,
    dt: f64,
    system_id: String,
}

impl Trajectory {
    pub fn space(&self) -> &CoordinateSpace {
        &self.space
    }

    pub fn samples(&self) -> &[ProlongedState] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tf(&self) -> f64 {
        self.tf
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn system_id(&self) -> &str {
        &self.system_id
    }

    /// Number of displacement columns carried by each sample.
    pub fn delta_columns(&self) -> usize {
        self.samples.first().map_or(0, |s| s.delta.ncols())
    }

    pub fn first(&self) -> &ProlongedState {
        &self.samples[0]
    }

    pub fn last(&self) -> &ProlongedState {
        self.samples.last().expect("trajectory is never empty")
    }

    /// State at time `t` by linear interpolation between neighboring
    /// samples (wrap-aware on periodic coordinates); `t` is clamped to
    /// the recorded range.
    pub fn interpolate_state(&self, t: f64) -> Point {
        let t = t.max(self.t0).min(self.tf);
        let raw = (t - self.t0) / self.dt;
        let i = (raw.floor() as usize).min(self.samples.len() - 1);
        if i + 1 >= self.samples.len() {
            return self.last().x.clone();
        }
        let frac = raw - i as f64;
        let a = &self.samples[i].x;
        let b = &self.samples[i + 1].x;
        let step = self
            .space
            .displacement(a, b)
            .expect("samples share the trajectory dimension");
        let coords: Vec<f64> = a
            .coords()
            .iter()
            .zip(step.coords())
            .map(|(ai, di)| ai + frac * di)
            .collect();
        self.space.point(coords).expect("dimension preserved")
    }

    /// Render the trajectory as CSV: header
    /// `t, x_1..x_d, d_1_1..d_d_m`, one row per sample, full double
    /// precision.
    pub fn to_csv(&self) -> String {
        let dim = self.space.dim();
        let m = self.delta_columns();
        let mut out = String::new();
        out.push('t');
        for i in 1..=dim {
            let _ = write!(out, ", x_{i}");
        }
        for i in 1..=dim {
            for j in 1..=m {
                let _ = write!(out, ", d_{i}_{j}");
            }
        }
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{:.16e}", s.t);
            for v in s.x.coords() {
                let _ = write!(out, ", {v:.16e}");
            }
            for i in 0..dim {
                for j in 0..m {
                    let _ = write!(out, ", {:.16e}", s.delta[(i, j)]);
                }
            }
            out.push('\n');
        }
        out
    }
}

fn check_window(t0: f64, tf: f64, dt: f64) -> Result<(usize, f64), FlowError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(FlowError::InvalidStep { dt });
    }
    if !(tf > t0) || !t0.is_finite() || !tf.is_finite() {
        return Err(FlowError::InvalidWindow { t0, tf });
    }
    let n = (((tf - t0) / dt).round() as usize).max(1);
    Ok((n, (tf - t0) / n as f64))
}

fn state_ok(x: &[f64], delta: &DMatrix<f64>) -> bool {
    x.iter().all(|v| v.is_finite() && v.abs() <= BLOWUP_LIMIT)
        && delta.iter().all(|v| v.is_finite() && v.abs() <= BLOWUP_LIMIT)
}

/// Joint RK4 core over (x, Δ); `delta0` may have zero columns, in which
/// case only the base state is integrated.
fn rk4_core(
    s: &System,
    t0: f64,
    x0: &Point,
    delta0: DMatrix<f64>,
    tf: f64,
    dt: f64,
) -> Result<Trajectory, FlowError> {
    let dim = s.dim();
    if x0.dim() != dim {
        return Err(DynamicsError::DimensionMismatch { expected: dim, got: x0.dim() }.into());
    }
    if delta0.nrows() != dim {
        return Err(DynamicsError::DimensionMismatch { expected: dim, got: delta0.nrows() }.into());
    }
    let (n, h) = check_window(t0, tf, dt)?;
    let space = s.space().clone();
    let m = delta0.ncols();
    let with_delta = m > 0;

    let start = space.wrap(x0).expect("dimension checked");
    let mut x = start.to_vec();
    let mut delta = delta0;
    if !state_ok(&x, &delta) {
        return Err(DynamicsError::NonFinite { context: String::from("initial prolonged state") }.into());
    }

    let mut samples = Vec::with_capacity(n + 1);
    samples.push(ProlongedState { t: t0, x: start, delta: delta.clone() });

    // One RK4 stage: field at the stage state, and J·Δ at the same state
    // when displacement columns are carried.
    let stage = |t: f64, xs: &[f64], ds: &DMatrix<f64>| -> Result<(Vec<f64>, DMatrix<f64>), FlowError> {
        let fx = s.field_raw(t, xs);
        if fx.len() != dim {
            return Err(DynamicsError::DimensionMismatch { expected: dim, got: fx.len() }.into());
        }
        let fd = if with_delta {
            let j = s.jacobian_raw(t, xs)?;
            &j * ds
        } else {
            DMatrix::zeros(dim, 0)
        };
        Ok((fx, fd))
    };

    let add = |x: &[f64], k: &[f64], c: f64| -> Vec<f64> {
        x.iter().zip(k).map(|(xi, ki)| xi + c * ki).collect()
    };

    for i in 0..n {
        let t = t0 + i as f64 * h;
        let (k1x, k1d) = stage(t, &x, &delta)?;
        let (k2x, k2d) = stage(t + 0.5 * h, &add(&x, &k1x, 0.5 * h), &(&delta + 0.5 * h * &k1d))?;
        let (k3x, k3d) = stage(t + 0.5 * h, &add(&x, &k2x, 0.5 * h), &(&delta + 0.5 * h * &k2d))?;
        let (k4x, k4d) = stage(t + h, &add(&x, &k3x, h), &(&delta + h * &k3d))?;

        for j in 0..dim {
            x[j] += h / 6.0 * (k1x[j] + 2.0 * k2x[j] + 2.0 * k3x[j] + k4x[j]);
        }
        space.wrap_in_place(&mut x);
        if with_delta {
            delta += h / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d);
        }

        let t_next = t0 + (i + 1) as f64 * h;
        if !state_ok(&x, &delta) {
            let partial = Trajectory {
                space,
                tf: samples.last().expect("at least the initial sample").t,
                samples,
                t0,
                dt: h,
                system_id: s.name().to_string(),
            };
            return Err(FlowError::BlowUp { t: t_next, partial: Box::new(partial) });
        }
        samples.push(ProlongedState {
            t: t_next,
            x: Point::new(x.clone()),
            delta: delta.clone(),
        });
    }

    Ok(Trajectory { space, samples, t0, tf: t0 + n as f64 * h, dt: h, system_id: s.name().to_string() })
}

/// Integrate `ẋ = f(t, x)` from `x0` over `[t0, tf]` with step `dt`
/// (rounded to divide the window evenly). The result carries zero
/// displacement columns.
pub fn integrate(s: &System, t0: f64, x0: &Point, tf: f64, dt: f64) -> Result<Trajectory, FlowError> {
    rk4_core(s, t0, x0, DMatrix::zeros(s.dim(), 0), tf, dt)
}

/// Integrate the prolonged system: the base state together with `m ≥ 1`
/// displacement columns transported by `Δ̇ = J(t, x)·Δ`.
pub fn integrate_prolonged(
    s: &System,
    t0: f64,
    x0: &Point,
    delta0: DMatrix<f64>,
    tf: f64,
    dt: f64,
) -> Result<Trajectory, FlowError> {
    if delta0.ncols() == 0 {
        return Err(DynamicsError::InvalidParameter {
            what: format!("prolonged integration needs at least one displacement column (got {})", delta0.ncols()),
        }
        .into());
    }
    rk4_core(s, t0, x0, delta0, tf, dt)
}

/// Finite-difference oracle for the transported displacement: integrate
/// from `x0` and from `x0 + h·δ0`, then return the wrap-aware difference
/// of the endpoints divided by `h`.
///
/// Agreement with [`integrate_prolonged`] is first-order in `h`, so the
/// discrepancy must shrink proportionally as `h` is halved — an
/// independent check that the variational integration tracks the true
/// flow sensitivity.
pub fn fd_displacement_oracle(
    s: &System,
    t0: f64,
    x0: &Point,
    delta0: &Tangent,
    h: f64,
    tf: f64,
    dt: f64,
) -> Result<Tangent, FlowError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(FlowError::InvalidStep { dt: h });
    }
    let space = s.space().clone();
    let base = integrate(s, t0, x0, tf, dt)?;
    let shifted: Vec<f64> = x0
        .coords()
        .iter()
        .zip(delta0.coords())
        .map(|(xi, di)| xi + h * di)
        .collect();
    let perturbed_start = space.point(shifted).map_err(DynamicsError::from)?;
    let perturbed = integrate(s, t0, &perturbed_start, tf, dt)?;
    let diff = space
        .displacement(&base.last().x, &perturbed.last().x)
        .map_err(DynamicsError::from)?;
    Ok(Tangent::new(diff.coords().iter().map(|d| d / h).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{harmonic, kuramoto, linear, sine_oscillator};
    use approx::assert_relative_eq;
    use alloc::sync::Arc;
    use alloc::vec;
    use core::f64::consts::{E, PI, TAU};

    fn scalar_decay() -> System {
        linear(DMatrix::from_element(1, 1, -1.0)).unwrap()
    }

    #[test]
    fn scalar_decay_reaches_one_over_e_after_unit_time() {
        let s = scalar_decay();
        let x0 = s.space().point(vec![1.0]).unwrap();
        let traj = integrate(&s, 0.0, &x0, 1.0, 1e-3).unwrap();
        assert_relative_eq!(traj.last().x.coords()[0], 1.0 / E, epsilon = 1e-6);
    }

    #[test]
    fn equilibrium_of_the_sine_oscillator_stays_put() {
        let s = sine_oscillator();
        let x0 = s.space().point(vec![0.0]).unwrap();
        let traj = integrate(&s, 0.0, &x0, 5.0, 1e-3).unwrap();
        for sample in traj.samples() {
            assert_eq!(sample.x.coords()[0], 0.0);
        }
    }

    #[test]
    fn harmonic_orbit_closes_after_one_period() {
        let s = harmonic(1.0).unwrap();
        let x0 = s.space().point(vec![1.0, 0.0]).unwrap();
        let traj = integrate(&s, 0.0, &x0, TAU, 1e-3).unwrap();
        assert_relative_eq!(traj.last().x.coords()[0], 1.0, epsilon = 1e-5);
        assert_relative_eq!(traj.last().x.coords()[1], 0.0, epsilon = 1e-5);
    }

    #[test]
    fn sample_times_are_uniform_and_cover_the_window() {
        let s = scalar_decay();
        let x0 = s.space().point(vec![1.0]).unwrap();
        let traj = integrate(&s, 0.5, &x0, 1.7, 1e-2).unwrap();
        assert_eq!(traj.t0(), 0.5);
        assert_relative_eq!(traj.tf(), 1.7, epsilon = 1e-12);
        let samples = traj.samples();
        for w in samples.windows(2) {
            assert_relative_eq!(w[1].t - w[0].t, traj.dt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn fundamental_matrix_of_uniform_decay_is_scaled_identity() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        let s = linear(a).unwrap();
        let x0 = s.space().point(vec![0.3, -0.2]).unwrap();
        let traj = integrate_prolonged(&s, 0.0, &x0, DMatrix::identity(2, 2), 1.0, 1e-3).unwrap();
        let d = &traj.last().delta;
        assert_relative_eq!(d[(0, 0)], 1.0 / E, epsilon = 1e-6);
        assert_relative_eq!(d[(1, 1)], 1.0 / E, epsilon = 1e-6);
        assert_relative_eq!(d[(0, 1)], 0.0, epsilon = 1e-9);
        assert_relative_eq!(d[(1, 0)], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_displacement_stays_zero() {
        let s = sine_oscillator();
        let x0 = s.space().point(vec![0.7]).unwrap();
        let traj = integrate_prolonged(&s, 0.0, &x0, DMatrix::zeros(1, 1), 2.0, 1e-3).unwrap();
        for sample in traj.samples() {
            assert_eq!(sample.delta[(0, 0)], 0.0);
        }
    }

    #[test]
    fn displacement_at_the_stable_equilibrium_decays_exponentially() {
        let s = sine_oscillator();
        let x0 = s.space().point(vec![0.0]).unwrap();
        let traj = integrate_prolonged(&s, 0.0, &x0, DMatrix::from_element(1, 1, 1.0), 1.0, 1e-3).unwrap();
        assert_relative_eq!(traj.last().delta[(0, 0)], 1.0 / E, epsilon = 1e-6);
    }

    #[test]
    fn displacement_columns_evolve_linearly() {
        let s = sine_oscillator();
        let x0 = s.space().point(vec![0.9]).unwrap();
        let delta0 = DMatrix::from_row_slice(1, 2, &[0.4, 0.8]);
        let traj = integrate_prolonged(&s, 0.0, &x0, delta0, 3.0, 1e-3).unwrap();
        for sample in traj.samples() {
            assert_relative_eq!(sample.delta[(0, 1)], 2.0 * sample.delta[(0, 0)], epsilon = 1e-12);
        }
    }

    #[test]
    fn restarting_mid_run_matches_a_direct_integration() {
        let s = sine_oscillator();
        let x0 = s.space().point(vec![1.1]).unwrap();
        let delta0 = DMatrix::from_element(1, 1, 1.0);
        let direct = integrate_prolonged(&s, 0.0, &x0, delta0.clone(), 2.0, 1e-3).unwrap();
        let first = integrate_prolonged(&s, 0.0, &x0, delta0, 1.0, 1e-3).unwrap();
        let second = integrate_prolonged(
            &s,
            1.0,
            &first.last().x,
            first.last().delta.clone(),
            2.0,
            1e-3,
        )
        .unwrap();
        assert_relative_eq!(
            direct.last().x.coords()[0],
            second.last().x.coords()[0],
            epsilon = 1e-9
        );
        assert_relative_eq!(direct.last().delta[(0, 0)], second.last().delta[(0, 0)], epsilon = 1e-9);
    }

    #[test]
    fn halving_the_step_shrinks_global_error_at_fourth_order() {
        let s = scalar_decay();
        let x0 = s.space().point(vec![1.0]).unwrap();
        let err = |dt: f64| -> f64 {
            let traj = integrate(&s, 0.0, &x0, 1.0, dt).unwrap();
            (traj.last().x.coords()[0] - 1.0 / E).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((14.0..=18.0).contains(&ratio), "fourth-order ratio out of range: {ratio}");
    }

    #[test]
    fn blow_up_aborts_with_partial_trajectory() {
        let space = CoordinateSpace::euclidean(1).unwrap();
        let s = System::new(space, "quadratic_growth", |_t, x| vec![x[0] * x[0]]);
        let x0 = s.space().point(vec![1.0]).unwrap();
        let err = integrate(&s, 0.0, &x0, 2.0, 1e-3).unwrap_err();
        match err {
            FlowError::BlowUp { t, partial } => {
                assert!(t < 1.5, "solution of x' = x² from 1 escapes near t = 1, got {t}");
                assert!(partial.len() > 100);
                assert!(partial.last().x.coords()[0].is_finite());
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn interpolation_crosses_the_periodic_seam_cleanly() {
        let space = CoordinateSpace::circle();
        let s = System::new(space, "constant_rotation", |_t, _x| vec![1.0]);
        let x0 = s.space().point(vec![PI - 0.05]).unwrap();
        let traj = integrate(&s, 0.0, &x0, 0.1, 0.1).unwrap();
        // The endpoint wraps to the far side of the seam; naive averaging
        // of the two samples would give ≈ 0 instead of ≈ π.
        let mid = traj.interpolate_state(0.05);
        assert_relative_eq!(mid.coords()[0].abs(), PI, epsilon = 1e-9);
    }

    #[test]
    fn fd_oracle_is_exact_for_linear_systems() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0]);
        let s = linear(a).unwrap();
        let x0 = s.space().point(vec![1.0, 0.0]).unwrap();
        let delta0 = DMatrix::from_row_slice(2, 1, &[0.3, -0.4]);
        let traj = integrate_prolonged(&s, 0.0, &x0, delta0.clone(), 1.5, 1e-3).unwrap();
        let oracle = fd_displacement_oracle(
            &s,
            0.0,
            &x0,
            &Tangent::new(vec![0.3, -0.4]),
            1e-4,
            1.5,
            1e-3,
        )
        .unwrap();
        for i in 0..2 {
            assert_relative_eq!(oracle.coords()[i], traj.last().delta[(i, 0)], epsilon = 1e-9);
        }
    }

    #[test]
    fn fd_oracle_discrepancy_halves_with_the_perturbation() {
        let s = sine_oscillator();
        let x0 = s.space().point(vec![0.5]).unwrap();
        let delta0 = DMatrix::from_element(1, 1, 1.0);
        let traj = integrate_prolonged(&s, 0.0, &x0, delta0, 1.0, 1e-3).unwrap();
        let transported = traj.last().delta[(0, 0)];
        let discrepancy = |h: f64| -> f64 {
            let oracle =
                fd_displacement_oracle(&s, 0.0, &x0, &Tangent::new(vec![1.0]), h, 1.0, 1e-3).unwrap();
            (oracle.coords()[0] - transported).abs()
        };
        let d1 = discrepancy(1e-4);
        assert!(d1 < 5e-4, "first-order agreement bound: {d1}");
        let ratio = d1 / discrepancy(5e-5);
        assert!((1.7..=2.3).contains(&ratio), "first-order ratio out of range: {ratio}");
    }

    #[test]
    fn kuramoto_oracle_agrees_with_variational_integration() {
        let s = kuramoto(3).unwrap();
        let x0 = s.space().point(vec![0.1, -0.2, 0.4]).unwrap();
        let dir = vec![1.0, 0.5, -0.5];
        let delta0 = DMatrix::from_column_slice(3, 1, &dir);
        let traj = integrate_prolonged(&s, 0.0, &x0, delta0, 2.0, 1e-3).unwrap();
        let oracle =
            fd_displacement_oracle(&s, 0.0, &x0, &Tangent::new(dir), 1e-5, 2.0, 1e-3).unwrap();
        for i in 0..3 {
            assert_relative_eq!(oracle.coords()[i], traj.last().delta[(i, 0)], epsilon = 1e-4);
        }
    }

    #[test]
    fn prolonged_integration_requires_a_displacement_column() {
        let s = sine_oscillator();
        let x0 = s.space().point(vec![0.5]).unwrap();
        assert!(integrate_prolonged(&s, 0.0, &x0, DMatrix::zeros(1, 0), 1.0, 1e-3).is_err());
    }

    #[test]
    fn csv_export_lists_time_state_and_displacement_columns() {
        let s = sine_oscillator();
        let x0 = s.space().point(vec![0.5]).unwrap();
        let traj =
            integrate_prolonged(&s, 0.0, &x0, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), 0.01, 1e-2)
                .unwrap();
        let csv = traj.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t, x_1, d_1_1, d_1_2");
        let first = lines.next().unwrap();
        assert!(first.starts_with("0.0000000000000000e0, 5.0000000000000000e-1"));
        assert_eq!(csv.lines().count(), 1 + traj.len());
    }

    #[test]
    fn trajectory_source_round_trip_through_interpolation() {
        let s = scalar_decay();
        let x0 = s.space().point(vec![2.0]).unwrap();
        let traj = integrate(&s, 0.0, &x0, 1.0, 1e-3).unwrap();
        let src = crate::dynamics::TrajectorySource::new(Arc::new(traj));
        let mid = src.state_at(0.5).unwrap();
        assert_relative_eq!(mid.coords()[0], 2.0 * (-0.5f64).exp(), epsilon = 1e-6);
    }
}
