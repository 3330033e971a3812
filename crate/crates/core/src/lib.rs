//! Machine-precision Jacobians of functions of matrix Lie group elements
//! via the complex-step derivative approximation, plus an on-manifold
//! Gauss-Newton solver and the batch pose-estimation problems built on it.
//!
//! Module map:
//!
//! * [`scalar`] — the complex-capable scalar contract (`f64` / `Complex64`).
//! * [`groups`] — SO(3), SE(2), SE(3), SE_2(3) and composite kernels.
//! * [`cstep`] — complex-step / finite-difference Jacobian engines.
//! * [`solver`] — Gauss-Newton over group-valued states.
//! * [`estimation`] — MAP batch problem construction and sensor models.
//! * [`data`] — CSV ingestion, synthetic data generation, result writers.
//! * [`selftest`] — seeded invariant suites behind the `selftest` command.

// Matrix assembly code walks parallel block structures by index; iterator
// rewrites obscure the offset arithmetic.
#![allow(clippy::needless_range_loop)]

pub mod cstep;
pub mod data;
pub mod estimation;
pub mod groups;
pub mod scalar;
pub mod selftest;
pub mod solver;
