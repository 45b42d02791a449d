//! Second-order HDMR (High Dimensional Model Representation) on finite
//! product grids, fast approximate minimization of HDMR-form functions via a
//! trust-region relaxation, and a finite-horizon approximate dynamic
//! programming engine with a Bayesian multi-armed bandit example.
//!
//! The crate is organized around five building blocks:
//!
//! * [`hdmr`] — component tables, streaming marginal accumulators over full
//!   or restricted domains, rebalancing, and evaluation.
//! * [`trmin`] — the trust-region relaxation of parametrized HDMR
//!   minimization: block matrix assembly, eigendecomposition, the secular
//!   equation, candidate rounding, and exact brute-force oracles.
//! * [`adp`] — exact backward induction over loss-to-go tables and the
//!   HDMR-approximate offline pass with trust-region inner minimization.
//! * [`bandit`] — the N-armed Bernoulli bandit environment with a Bayesian
//!   predictive model and a seeded Monte Carlo simulator.
//! * [`harness`] — experiment configs, deterministic replication runs, and
//!   CSV/JSON report emission.

pub mod adp;
pub mod bandit;
pub mod error;
pub mod harness;
pub mod hdmr;
pub mod model_io;
pub mod trmin;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
