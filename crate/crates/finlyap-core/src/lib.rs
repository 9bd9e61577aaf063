//! Numerical contraction certification for ODE systems.
//!
//! A system `ẋ = f(t, x)` is *contracting* on a region when any two of its
//! solutions approach each other. This crate certifies that property the way
//! one certifies classical stability with a Lyapunov function, except the
//! function lives on the tangent bundle: a Finsler-Lyapunov function
//! `V(x, δx)` measures infinitesimal displacements `δx` and must decrease
//! along the joint flow of the state and its variational (displacement)
//! dynamics `δẋ = (∂f/∂x) δx`.
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`] — coordinate spaces with optional periodic (circle)
//!   coordinates, points, tangents, and diffeomorphisms for
//!   change-of-coordinates audits.
//! - [`dynamics`] — vector fields with analytic or finite-difference
//!   Jacobians, a catalog of example systems, and virtual-system
//!   construction for observer/tracking analysis.
//! - [`flow`] — fixed-step RK4 integration of the system together with its
//!   variational dynamics, plus a finite-difference displacement oracle.
//! - [`finsler`] — Finsler-Lyapunov candidates: evaluation, gradients, a
//!   metric catalog, defining-property audits, and horizontal structures
//!   for systems with symmetries.
//! - [`certify`] — sampling-based certificates: the pointwise contraction
//!   inequality, matrix-measure and LMI sufficient conditions, a LaSalle
//!   relaxation, a Bendixson-style periodic-orbit exclusion, and
//!   coordinate-invariance checks.
//! - [`distance`] — induced Finsler distances by discrete curve
//!   optimization, horizontal pseudo-distances, and empirical decay fits.
//! - [`experiments`] — pre-wired scenario reproductions (oscillator on the
//!   circle, boost converter, consensus ring, Kuramoto network, virtual
//!   observer) with pass/fail reports.
//!
//! All computation is deterministic: integrators are fixed-step, random
//! sampling is seeded, and nothing here spawns threads. Certificates are
//! sampled-grid certificates, not formal proofs; every report carries its
//! sampling resolution and worst observed margin.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod certify;
pub mod distance;
pub mod dynamics;
pub mod experiments;
pub mod finsler;
pub mod flow;
pub mod geometry;

pub use nalgebra::{DMatrix, DVector};
