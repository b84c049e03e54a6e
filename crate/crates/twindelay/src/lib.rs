//! Solvers for delay and renewal equations built on a shared measure algebra.
//!
//! The crate represents matrix-valued Borel measures on `[0, T]` as exact
//! atoms plus a gridded density ([`measure`]), computes resolvent kernels and
//! solves renewal equations ([`resolvent`]), and uses those to realize delay
//! differential equations ([`rfde`]), neutral equations ([`neutral`]) and
//! renewal/population equations ([`renewal`]) as perturbations of simple
//! shift semigroups ([`semigroup`], [`perturbation`]). Characteristic-function
//! stability analysis lives in [`stability`] and seeded self-check suites in
//! [`verify`].

pub mod error;
pub mod grid;
pub mod linalg;
pub mod measure;
pub mod resolvent;
pub mod state;
pub mod semigroup;
pub mod perturbation;
pub mod rfde;
pub mod neutral;
pub mod renewal;
pub mod stability;
pub mod problem;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{Grid, GridFn};
pub use measure::{Atom, HalfLineMeasure};
pub use resolvent::{default_tol, renewal_solve, resolvent_l1, resolvent_measure};
