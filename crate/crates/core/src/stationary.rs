//! Stationary states `u = Ju` and the equicontinuity diagnostic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{sup_diff, FieldState};
use crate::operator::OperatorError;
use crate::solver::{Simulation, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StationaryError {
    #[error("damping must lie in (0, 1], got {0}")]
    Damping(f64),
    #[error("{0}")]
    InvalidInput(String),
    #[error("non-finite iterate after {iterations} iterations")]
    NonFinite { iterations: usize },
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StationaryMethod {
    DampedFp,
    Flow,
}

/// A candidate stationary state. Not converged means `MaxIterExceeded`
/// (fixed point) or `NotSettled` (flow): the best iterate is still returned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryResult {
    /// Time tag is `+inf`.
    pub u_inf: FieldState,
    /// `||u - Ju||_inf`, recomputed from `u_inf` at exit.
    pub residual_sup: f64,
    pub iterations: usize,
    pub method: StationaryMethod,
    pub converged: bool,
    /// `gamma * C_w`; the existence argument needs it small.
    pub gamma_c_w: f64,
    /// Flow only: states at `t_n = 2^n dt`.
    #[serde(skip)]
    pub samples: Vec<FieldState>,
}

impl StationaryResult {
    pub fn in_small_gamma_regime(&self) -> bool {
        self.gamma_c_w < 1.0
    }
}

pub const DEFAULT_DAMPING: f64 = 0.5;

/// `||u - Ju||_inf`
pub fn stationary_residual(sim: &Simulation<'_>, u: &[f64]) -> Result<f64, OperatorError> {
    let ju = sim.op.apply_j(sim.model, u)?;
    Ok(sup_diff(u, &ju))
}

/// Damped fixed-point iteration `u <- (1 - alpha) u + alpha Ju`.
pub fn find_stationary_fp(
    sim: &Simulation<'_>,
    u_init: &FieldState,
    damping: f64,
    tol: f64,
    max_iter: usize,
) -> Result<StationaryResult, StationaryError> {
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(StationaryError::Damping(damping));
    }
    let n = sim.op.len();
    if u_init.len() != n {
        return Err(OperatorError::DimensionMismatch { expected: n, got: u_init.len() }.into());
    }
    let mut u = u_init.values.clone();
    let mut ju = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        sim.op.apply_j_into(sim.model, &u, &mut ju)?;
        if sup_diff(&u, &ju) < tol {
            converged = true;
            break;
        }
        for (a, b) in u.iter_mut().zip(&ju) {
            *a = (1.0 - damping) * *a + damping * b;
        }
        iterations += 1;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(StationaryError::NonFinite { iterations });
        }
    }
    let residual = stationary_residual(sim, &u)?;
    Ok(StationaryResult {
        u_inf: FieldState::new(u, f64::INFINITY),
        residual_sup: residual,
        iterations,
        method: StationaryMethod::DampedFp,
        converged: converged && residual < tol,
        gamma_c_w: sim.model.gamma * sim.constants.c_w,
        samples: Vec::new(),
    })
}

/// Integrates with exponential Euler until `||Fu||_inf < settle_tol`.
pub fn stationary_via_flow(
    sim: &Simulation<'_>,
    u0: &FieldState,
    dt: f64,
    t_max: f64,
    settle_tol: f64,
) -> Result<StationaryResult, StationaryError> {
    if !(dt > 0.0) {
        return Err(StationaryError::InvalidInput("dt must be > 0".into()));
    }
    let n = sim.op.len();
    if u0.len() != n {
        return Err(OperatorError::DimensionMismatch { expected: n, got: u0.len() }.into());
    }
    let mut state = FieldState::new(u0.values.clone(), 0.0);
    let mut samples = vec![state.clone()];
    let mut next_sample = dt;
    let mut steps = 0;
    let mut converged = false;
    loop {
        let residual = stationary_residual(sim, &state.values)?;
        if residual < settle_tol {
            converged = true;
            break;
        }
        if state.t >= t_max {
            break;
        }
        state = sim.step_exp_euler(&state, dt).map_err(|e| StationaryError::InvalidInput(e.to_string()))?;
        state.t = (steps + 1) as f64 * dt;
        steps += 1;
        if !state.is_finite() {
            return Err(StationaryError::NonFinite { iterations: steps });
        }
        if state.t >= next_sample - 1e-12 {
            samples.push(state.clone());
            next_sample *= 2.0;
        }
    }
    let residual = stationary_residual(sim, &state.values)?;
    Ok(StationaryResult {
        u_inf: FieldState::new(state.values, f64::INFINITY),
        residual_sup: residual,
        iterations: steps,
        method: StationaryMethod::Flow,
        converged,
        gamma_c_w: sim.model.gamma * sim.constants.c_w,
        samples,
    })
}

/// Spatial moduli of continuity of a one-dimensional trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquicontinuityTable {
    /// Lattice offsets `k`.
    pub offsets: Vec<usize>,
    /// `h = k dx`
    pub distances: Vec<f64>,
    /// `sup_t max_i |u_{i+k}(t) - u_i(t)|` for each offset.
    pub moduli: Vec<f64>,
    /// Whether the moduli shrink with the offset.
    pub decreasing_with_h: bool,
}

pub const PROBE_OFFSETS: [usize; 4] = [1, 2, 4, 8];

pub fn equicontinuity_probe(traj: &Trajectory, dx: f64) -> Result<EquicontinuityTable, StationaryError> {
    let n = traj.initial().len();
    if n <= *PROBE_OFFSETS.last().unwrap() {
        return Err(StationaryError::InvalidInput(format!("need more than 8 nodes, got {n}")));
    }
    let moduli: Vec<f64> = PROBE_OFFSETS
        .iter()
        .map(|&k| {
            traj.states
                .iter()
                .map(|s| s.values.windows(k + 1).map(|w| (w[k] - w[0]).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max)
        })
        .collect();
    let decreasing = moduli.windows(2).all(|w| w[0] <= w[1]);
    Ok(EquicontinuityTable {
        offsets: PROBE_OFFSETS.to_vec(),
        distances: PROBE_OFFSETS.iter().map(|&k| k as f64 * dx).collect(),
        moduli,
        decreasing_with_h: decreasing,
    })
}

/// Largest per-step drift of `u_inf` under a stepper.
pub fn stepper_drift(
    sim: &Simulation<'_>,
    u_inf: &[f64],
    step: impl Fn(&Simulation<'_>, &FieldState) -> Result<FieldState, crate::solver::SolverError>,
) -> Result<f64, crate::solver::SolverError> {
    let s = FieldState::new(u_inf.to_vec(), 0.0);
    let next = step(sim, &s)?;
    Ok(sup_diff(&next.values, u_inf))
}
