//! Amari-type neural field equation with Hebbian synaptic plasticity.
//!
//! ```text
//! u_t(x,t) = -u(x,t) + ∫_Ω w(x,y) [1 + γ g(u(x,t) - u(y,t))] f(u(y,t)) dy
//! ```
//!
//! The crate discretizes the equation on uniform grids, integrates it with a
//! Picard iteration over time segments (plus exponential-Euler and RK4
//! steppers), monitors the a-priori bounds that make the problem well posed,
//! computes stationary states, and carries the learned kernel through a Mercer
//! decomposition to a presynaptic gain field and its Schrödinger counterpart.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod gainfield;
pub mod grid;
pub mod model;
pub mod operator;
pub mod output;
pub mod run;
pub mod solver;
pub mod stationary;

pub use grid::{Axis, Boundary, FieldState, Grid, Quadrature, QuadratureRule};
pub use model::{
    compute_constants, contraction_factor, max_segment_length, FiringRate, LearningKernel, Mode, ModelSpec,
    SynapticKernel, TheoryConstants,
};
pub use operator::DiscreteOperator;
pub use solver::{Method, Simulation, SolverConfig, SolverError, Trajectory};
