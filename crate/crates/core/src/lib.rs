//! Simulation library for average consensus and distributed optimization
//! over random sequences of directed graphs.
//!
//! The crate builds up in layers:
//!
//! * [`graph`] — directed graphs, ensemble validation, i.i.d. sampling;
//! * [`weights`] — column-stochastic mixing matrices and their products;
//! * [`consensus`] — push-sum and its perturbed variant;
//! * [`objective`] — convex local objectives and a centralized reference
//!   solver;
//! * [`optimize`] — subgradient-push and the gated variant, with averaged
//!   iterates;
//! * [`bounds`] — closed-form constants and the rate bound the runs are
//!   checked against;
//! * [`harness`] — experiment configs, multi-trial drivers, metric export,
//!   and rate fitting.
//!
//! Randomness is always explicit: every sampler takes a seed, and a given
//! seed reproduces a run bit for bit, including under the parallel trial
//! driver.

pub mod bounds;
pub mod consensus;
pub mod graph;
pub mod harness;
pub mod objective;
pub mod optimize;
pub mod rng;
pub mod weights;
