//! Simulation and verification toolkit for critical two-dimensional lattice
//! models.
//!
//! * [`lattice`] periodic graphs, percolation models and configuration sampling.
//! * [`crossing`] rasterized domains with two boundary arcs and Monte Carlo
//!   crossing probabilities.
//! * [`cardy`] closed-form crossing predictions.
//! * [`conformal`] rectangle maps to the half-plane, disk and strip.
//! * [`exploration`] the percolation exploration path on hexagon cells.
//! * [`loewner`] forward Loewner flow, SLE traces, the zipper and κ estimation.
//! * [`fk_ising`] the Ising model, its FK loop representation and the
//!   fermionic observable.

// NaN must fail range checks, hence `!(x > 0.0)`; index loops read better
// than zipped iterators in the numerical kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cardy;
pub mod conformal;
pub mod crossing;
pub mod error;
pub mod exploration;
pub mod fk_ising;
pub mod geometry;
pub mod lattice;
pub mod loewner;
pub mod rng;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use num_complex::Complex64;
