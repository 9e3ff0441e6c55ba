//! Tabular multi-agent reinforcement learning in finite Markov games,
//! viewed through its fluid limit.
//!
//! The library builds the wrapped chain of a Markov game played by
//! Q-learners (state, joint action, next state fused into one Markov
//! state), simulates the `N`-rescaled learning process — update size
//! divided by `N`, horizon multiplied by `N` — and integrates the limiting
//! ODE whose drift averages the update against the frozen kernel's
//! invariant distribution. Diagnostics quantify how fast the stochastic
//! process approaches the ODE and check the smoothness and minorization
//! structure the limit rests on.
//!
//! Modules, roughly bottom-up:
//!
//! - [`game`]: tabular Markov games and validation.
//! - [`reinforcer`]: the Q-table learner and stacked parameter layout.
//! - [`wrapped`]: the wrapped state space and its parametrized kernel.
//! - [`stationary`]: invariant distributions, TV distance, Doeblin
//!   certificates, mixing curves.
//! - [`ode`]: the homogenized drift and fixed-step integrators.
//! - [`sim`]: inverse-CDF sampling, trajectories, coupled chains,
//!   occupancy statistics.
//! - [`diagnostics`]: sup-error Monte Carlo, rate fits, assumption probes.
//! - [`presets`]: the canonical desk-scale test games.

pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod game;
pub mod matrix;
pub mod ode;
pub mod presets;
pub mod reinforcer;
pub mod rng;
pub mod sim;
pub mod stationary;
pub mod wrapped;

pub use diagnostics::{
    assumption_probe, mc_sup_error, rate_fit, sup_error, AssumptionReport, ComparisonReport,
    RateFit,
};
pub use dist::Distribution;
pub use error::{Error, Result};
pub use game::{validate_game, JointActionIndexer, MarkovGame, ValidationReport, Violation};
pub use matrix::RowMatrix;
pub use ode::{beta, beta_gap, integrate, Drift, DriftField, OdeMethod, OdeTrajectory};
pub use reinforcer::{
    param_ball_radius, q_update, softmax_policy, QTableReinforcer, Reinforcer, ReinforcerStack,
};
pub use rng::{RngStream, RNG_ALGORITHM};
pub use sim::{
    occupancy_error, sample_coupled, sample_step, sample_trajectory, CoupledRecord, Simulation,
    TrajectoryRecord,
};
pub use stationary::{
    doeblin_minorization, find_doeblin, mixing_curve, power_iteration, stationary_distribution,
    stationary_distribution_unverified, tv_distance, DoeblinCertificate,
};
pub use wrapped::{Scale, WrappedGame};
