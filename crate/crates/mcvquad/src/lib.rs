//! Minimum-cost-variance (MCV) and LQR control of a quadrotor tracking
//! trajectories in stochastic turbulent wind.
//!
//! The library closes the loop end to end: a wind model (Gaussian synthesis or
//! trace replay), quaternion rigid-body dynamics with quadratic drag, analytic
//! linearization, coupled-Riccati solvers producing MCV feedback gains,
//! minimum-snap reference trajectories, and a seeded Monte Carlo harness that
//! measures per-point tracking-error variance and RMSE across runs.
//!
//! ## Modules
//!
//! - [`wind`]: mean-plus-turbulence wind sources and trace statistics
//! - [`dynamics`]: quadrotor dynamics, RK4 integration, analytic Jacobians
//! - [`riccati`]: Lyapunov / ARE / coupled-CARE solvers and gain schedules
//! - [`trajectory`]: hover points and minimum-snap polynomial references
//! - [`sim`]: closed-loop simulation, cost evaluation, Monte Carlo metrics
//! - [`cli`]: scenario configs, batch commands, CSV/SVG artifact emission
//!
//! The `mcvquad` binary exposes the batch commands (`hover`, `track`, `check`,
//! `windstats`); the `examples/` directory demonstrates each capability as a
//! small runnable program.

pub mod cli;
pub mod dynamics;
pub mod riccati;
pub mod sim;
pub mod trajectory;
pub mod wind;

/// Standard gravitational acceleration, m/s^2.
pub const GRAVITY: f64 = 9.81;
