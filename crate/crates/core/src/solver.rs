//! Time evolution of `u' = Fu`, `u(0) = u0`.
//!
//! Three methods share the same segment structure: `[0, t_end]` is cut into
//! segments of length `rho` and each segment into equal sub-steps no longer
//! than `dt`. On a segment the Picard method iterates the Volterra map
//! `U <- u0 + A U` with the time integral replaced by the cumulative
//! trapezoid rule, which is the constructive content of the local existence
//! argument.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{sup_diff, sup_norm, FieldState};
use crate::model::{ModelSpec, TheoryConstants};
use crate::operator::{DiscreteOperator, OperatorError};

/// Contraction factor used for the default segment length.
pub const DEFAULT_SAFETY: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("segment length {rho} gives contraction factor q = {q} >= 1; shrink the segment")]
    NonContractive { q: f64, rho: f64 },
    #[error("Picard iteration stopped after {iterations} iterations with update norm {update_norm:e}")]
    MaxIterExceeded { iterations: usize, update_norm: f64 },
    #[error("non-finite value at t = {t}; last finite state is at t = {}", last_finite.t)]
    NonFinite { t: f64, last_finite: FieldState },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Picard,
    ExpEuler,
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub method: Method,
    pub dt: f64,
    /// Segment length; `None` picks the length with contraction factor 1/2.
    pub segment_rho: Option<f64>,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub t_end: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::Rk4,
            dt: 0.05,
            segment_rho: None,
            picard_tol: 1e-10,
            picard_max_iter: 200,
            t_end: 10.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidConfig(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be > 0");
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be > 0");
        }
        if !(self.picard_tol > 0.0) {
            return bad("picard_tol must be > 0");
        }
        if self.picard_max_iter == 0 {
            return bad("picard_max_iter must be positive");
        }
        if let Some(rho) = self.segment_rho {
            if !(rho > 0.0 && rho.is_finite()) {
                return bad("segment_rho must be > 0");
            }
            if self.dt > rho {
                return bad("dt must not exceed segment_rho");
            }
        }
        Ok(())
    }
}

/// Bookkeeping for one segment of a [`Trajectory`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentInfo {
    /// Index of the segment's first state in [`Trajectory::states`].
    pub start: usize,
    /// Index of its last state; shared with the next segment's `start`.
    pub end: usize,
    pub dt: f64,
    /// Contraction factor of the segment (length times the Lipschitz sum).
    pub q: f64,
    /// Sup-over-segment norms of successive Picard updates (empty for steppers).
    pub update_norms: Vec<f64>,
}

impl SegmentInfo {
    pub fn iterations(&self) -> usize {
        self.update_norms.len()
    }

    /// Ratios of successive update norms, skipping those below `floor`.
    pub fn update_ratios(&self, floor: f64) -> Vec<f64> {
        self.update_norms
            .windows(2)
            .filter(|w| w[0] > floor && w[1] > floor)
            .map(|w| w[1] / w[0])
            .collect()
    }
}

/// Snapshots at strictly increasing times starting from the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<FieldState>,
    pub segments: Vec<SegmentInfo>,
}

impl Trajectory {
    pub fn initial(&self) -> &FieldState {
        &self.states[0]
    }

    pub fn last(&self) -> &FieldState {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.states.iter().map(FieldState::sup_norm).fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.states.iter().map(FieldState::min).fold(f64::INFINITY, f64::min)
    }

    /// `max_{n,i} |u_i(t_n) - v_i(t_n)|` over trajectories on the same time grid.
    pub fn sup_diff(&self, other: &Trajectory) -> f64 {
        assert_eq!(self.states.len(), other.states.len(), "trajectories must share a time grid");
        self.states.iter().zip(&other.states).map(|(a, b)| sup_diff(&a.values, &b.values)).fold(0.0, f64::max)
    }
}

/// A model bound to its discrete operator and constants.
#[derive(Debug, Clone, Copy)]
pub struct Simulation<'a> {
    pub model: &'a ModelSpec,
    pub op: &'a DiscreteOperator,
    pub constants: TheoryConstants,
}

impl<'a> Simulation<'a> {
    pub fn new(model: &'a ModelSpec, op: &'a DiscreteOperator, constants: TheoryConstants) -> Self {
        Simulation { model, op, constants }
    }

    pub fn segment_length(&self, cfg: &SolverConfig) -> f64 {
        cfg.segment_rho
            .unwrap_or_else(|| self.constants.max_segment_length(self.model.gamma, DEFAULT_SAFETY))
    }

    pub fn contraction_factor(&self, rho: f64) -> f64 {
        self.constants.contraction_factor(self.model.gamma, rho)
    }

    /// Runs the Picard iteration on `[t0, t0 + rho]`.
    ///
    /// Returns the converged time nodes (including the initial state) and the
    /// segment record.
    pub fn picard_segment(
        &self,
        state0: &FieldState,
        rho: f64,
        cfg: &SolverConfig,
    ) -> Result<(Vec<FieldState>, SegmentInfo), SolverError> {
        let q = self.contraction_factor(rho);
        if q >= 1.0 {
            return Err(SolverError::NonContractive { q, rho });
        }
        let steps = substeps(rho, cfg.dt);
        let h = rho / steps as f64;
        let n = self.op.len();
        if state0.len() != n {
            return Err(OperatorError::DimensionMismatch { expected: n, got: state0.len() }.into());
        }
        let times = node_times(state0.t, rho, steps);

        let u0 = &state0.values;
        let mut u: Vec<Vec<f64>> = vec![u0.clone(); steps + 1];
        let mut f: Vec<Vec<f64>> = vec![vec![0.0; n]; steps + 1];
        self.op.apply_f_into(self.model, u0, &mut f[0])?;
        let mut norms = Vec::new();
        let mut next = vec![0.0; n];

        loop {
            for k in 1..=steps {
                self.op.apply_f_into(self.model, &u[k], &mut f[k])?;
            }
            // cumulative trapezoid rule in time
            let mut acc = vec![0.0; n];
            let mut update = 0.0f64;
            for k in 1..=steps {
                for i in 0..n {
                    acc[i] += 0.5 * h * (f[k - 1][i] + f[k][i]);
                    next[i] = u0[i] + acc[i];
                }
                update = update.max(sup_diff(&next, &u[k]));
                u[k].copy_from_slice(&next);
            }
            norms.push(update);
            if let Some(k) = u.iter().position(|s| s.iter().any(|v| !v.is_finite())) {
                return Err(SolverError::NonFinite {
                    t: times[k],
                    last_finite: state0.clone(),
                });
            }
            if update < cfg.picard_tol {
                break;
            }
            if norms.len() >= cfg.picard_max_iter {
                return Err(SolverError::MaxIterExceeded { iterations: norms.len(), update_norm: update });
            }
        }

        let states = u.into_iter().zip(times).map(|(v, t)| FieldState::new(v, t)).collect();
        Ok((states, SegmentInfo { start: 0, end: steps, dt: h, q, update_norms: norms }))
    }

    /// Chains segments over `[0, t_end]` with exact state hand-off.
    pub fn solve_global(&self, state0: &FieldState, cfg: &SolverConfig) -> Result<Trajectory, SolverError> {
        cfg.validate()?;
        if state0.len() != self.op.len() {
            return Err(OperatorError::DimensionMismatch { expected: self.op.len(), got: state0.len() }.into());
        }
        if !state0.is_finite() {
            return Err(SolverError::NonFinite { t: state0.t, last_finite: state0.clone() });
        }
        let rho = self.segment_length(cfg);
        let t0 = state0.t;
        let count = ((cfg.t_end / rho) - 1e-9).ceil().max(1.0) as usize;
        let mut states = vec![state0.clone()];
        let mut segments = Vec::with_capacity(count);

        for s in 0..count {
            let start_t = t0 + s as f64 * rho;
            let len = if s + 1 == count { t0 + cfg.t_end - start_t } else { rho };
            let mut seed = states.last().unwrap().clone();
            seed.t = start_t;
            let start = states.len() - 1;
            let mut info = match cfg.method {
                Method::Picard => {
                    let (seg, info) = self.picard_segment(&seed, len, cfg)?;
                    states.extend(seg.into_iter().skip(1));
                    info
                }
                Method::ExpEuler | Method::Rk4 => {
                    let steps = substeps(len, cfg.dt);
                    let h = len / steps as f64;
                    let times = node_times(start_t, len, steps);
                    let mut cur = seed;
                    for t in times.into_iter().skip(1) {
                        let mut next = match cfg.method {
                            Method::ExpEuler => self.step_exp_euler(&cur, h)?,
                            _ => self.step_rk4(&cur, h)?,
                        };
                        next.t = t;
                        if !next.is_finite() {
                            return Err(SolverError::NonFinite { t, last_finite: cur });
                        }
                        states.push(next.clone());
                        cur = next;
                    }
                    SegmentInfo { start: 0, end: 0, dt: h, q: self.contraction_factor(len), update_norms: vec![] }
                }
            };
            info.start = start;
            info.end = states.len() - 1;
            segments.push(info);
        }
        Ok(Trajectory { states, segments })
    }

    /// `u+ = e^{-dt} u + (1 - e^{-dt}) J(u)`, the variation-of-constants
    /// formula with `J` frozen over the step.
    pub fn step_exp_euler(&self, state: &FieldState, dt: f64) -> Result<FieldState, SolverError> {
        let ju = self.op.apply_j(self.model, &state.values)?;
        let decay = (-dt).exp();
        let gain = -(-dt).exp_m1();
        let values = state.values.iter().zip(&ju).map(|(u, j)| decay * u + gain * j).collect();
        Ok(FieldState::new(values, state.t + dt))
    }

    /// Classical fourth-order Runge–Kutta step of `u' = Fu`.
    pub fn step_rk4(&self, state: &FieldState, dt: f64) -> Result<FieldState, SolverError> {
        let u = &state.values;
        let n = u.len();
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        self.op.apply_f_into(self.model, u, &mut k1)?;
        for i in 0..n {
            tmp[i] = u[i] + 0.5 * dt * k1[i];
        }
        self.op.apply_f_into(self.model, &tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = u[i] + 0.5 * dt * k2[i];
        }
        self.op.apply_f_into(self.model, &tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = u[i] + dt * k3[i];
        }
        self.op.apply_f_into(self.model, &tmp, &mut k4)?;
        let values = (0..n).map(|i| u[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
        Ok(FieldState::new(values, state.t + dt))
    }

    /// Applies the discrete Volterra operator `A` to a space-time field
    /// sampled at equally spaced times `h` apart.
    ///
    /// `(AU)(t_k) = sum_{m<=k} h/2 [F U(t_{m-1}) + F U(t_m)]`, with `(AU)(t_0) = 0`.
    pub fn apply_volterra(&self, field: &[Vec<f64>], h: f64) -> Result<Vec<Vec<f64>>, SolverError> {
        let n = self.op.len();
        let fs = field.iter().map(|u| self.op.apply_f(self.model, u)).collect::<Result<Vec<_>, _>>()?;
        let mut out = Vec::with_capacity(field.len());
        let mut acc = vec![0.0; n];
        out.push(acc.clone());
        for k in 1..field.len() {
            for i in 0..n {
                acc[i] += 0.5 * h * (fs[k - 1][i] + fs[k][i]);
            }
            out.push(acc.clone());
        }
        Ok(out)
    }
}

/// Number of equal sub-steps of length at most `dt` covering `len`.
pub fn substeps(len: f64, dt: f64) -> usize {
    ((len / dt) - 1e-9).ceil().max(1.0) as usize
}

fn node_times(t0: f64, len: f64, steps: usize) -> Vec<f64> {
    let h = len / steps as f64;
    (0..=steps).map(|k| if k == steps { t0 + len } else { t0 + k as f64 * h }).collect()
}

/// One row of [`BoundReport::series`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSample {
    pub t: f64,
    pub sup_u: f64,
    pub bound: f64,
    pub min_u: f64,
}

/// Observed extremes of a trajectory against the a-priori estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub sup_observed: f64,
    /// `max{ ||u0||_inf, (1 + gamma) C_w }`
    pub bound_theoretical: f64,
    pub min_observed: f64,
    /// Positive kernel and nonnegative initial data.
    pub positivity_applicable: bool,
    /// Space-time nodes with `u < -1e-10` when positivity applies.
    pub positivity_violations: usize,
    /// `sup_observed <= bound + 1e-6`
    pub within_bound: bool,
    /// The same bound with `C_w` replaced by the largest absolute row sum of
    /// the discrete operator, which the computed solution always satisfies.
    pub bound_discrete: f64,
    pub within_discrete_bound: bool,
    pub series: Vec<BoundSample>,
}

pub const BOUND_SLACK: f64 = 1e-6;
pub const POSITIVITY_SLACK: f64 = 1e-10;

pub fn monitor_bounds(
    traj: &Trajectory,
    constants: &TheoryConstants,
    model: &ModelSpec,
    op: &DiscreteOperator,
) -> BoundReport {
    let u0 = traj.initial();
    let bound = constants.global_bound(model.gamma, u0.sup_norm());
    let discrete = constants.with_c_w(op.max_abs_row_sum()).global_bound(model.gamma, u0.sup_norm());
    let applicable = op.is_positive() && u0.values.iter().all(|&v| v >= 0.0);
    let mut violations = 0;
    let series: Vec<BoundSample> = traj
        .states
        .iter()
        .map(|s| {
            if applicable {
                violations += s.values.iter().filter(|&&v| v < -POSITIVITY_SLACK).count();
            }
            BoundSample { t: s.t, sup_u: sup_norm(&s.values), bound, min_u: s.min() }
        })
        .collect();
    let sup_observed = series.iter().map(|s| s.sup_u).fold(0.0, f64::max);
    let min_observed = series.iter().map(|s| s.min_u).fold(f64::INFINITY, f64::min);
    BoundReport {
        sup_observed,
        bound_theoretical: bound,
        min_observed,
        positivity_applicable: applicable,
        positivity_violations: violations,
        within_bound: sup_observed <= bound + BOUND_SLACK,
        bound_discrete: discrete,
        within_discrete_bound: sup_observed <= discrete + BOUND_SLACK,
        series,
    }
}
