//! Studies that turn the a-priori estimates into measurements: contraction
//! of the Volterra map, continuous dependence on initial data, the L¹
//! bound, and the vanishing-plasticity limit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{sup_diff, FieldState, Grid, GridError, Quadrature, QuadratureRule};
use crate::model::{compute_constants, ModelSpec, TheoryConstants};
use crate::operator::DiscreteOperator;
use crate::solver::{Simulation, SolverConfig, SolverError, Trajectory};

/// A model together with its discretization.
#[derive(Debug, Clone)]
pub struct Instance {
    pub model: ModelSpec,
    pub grid: Grid,
    pub quad: Quadrature,
    pub op: DiscreteOperator,
    pub constants: TheoryConstants,
}

impl Instance {
    pub fn new(model: ModelSpec, grid: Grid, rule: QuadratureRule) -> Result<Self, GridError> {
        let quad = Quadrature::new(&grid, rule)?;
        let op = DiscreteOperator::build(&model.kernel, &grid, &quad);
        let constants = compute_constants(&model, &grid, &quad);
        Ok(Instance { model, grid, quad, op, constants })
    }

    pub fn sim(&self) -> Simulation<'_> {
        Simulation::new(&self.model, &self.op, self.constants)
    }

    /// Same discretization with another plasticity strength.
    pub fn with_gamma(&self, gamma: f64) -> Self {
        Instance { model: self.model.with_gamma(gamma), ..self.clone() }
    }

    pub fn solve(&self, u0: &FieldState, cfg: &SolverConfig) -> Result<Trajectory, SolverError> {
        self.sim().solve_global(u0, cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(x, y)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit { slope, intercept, r_squared })
}

/// Slope of `log y` against `log x`.
pub fn log_log_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub params: Vec<(String, f64)>,
    pub measured: f64,
    pub theoretical: f64,
    pub slack: f64,
    pub pass: bool,
}

impl StudyRow {
    pub fn new(params: Vec<(String, f64)>, measured: f64, theoretical: f64, slack: f64) -> Self {
        let pass = measured <= theoretical + slack;
        StudyRow { params, measured, theoretical, slack, pass }
    }

    /// `theoretical + slack - measured`; negative when the row fails.
    pub fn margin(&self) -> f64 {
        self.theoretical + self.slack - self.measured
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

/// A named yes/no property of a whole study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub name: String,
    pub rows: Vec<StudyRow>,
    pub checks: Vec<StudyCheck>,
    pub fit: Option<LinearFit>,
    pub skipped: usize,
}

impl StudyResult {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass) && self.checks.iter().all(|c| c.pass)
    }

    pub fn worst_margin(&self) -> f64 {
        self.rows.iter().map(StudyRow::margin).fold(f64::INFINITY, f64::min)
    }

    fn check(&mut self, name: &str, pass: bool, detail: String) {
        self.checks.push(StudyCheck { name: name.to_string(), pass, detail });
    }
}

/// Sorts rows by their parameter values, lexicographically.
fn sort_rows(rows: &mut [StudyRow]) {
    rows.sort_by(|a, b| {
        for ((_, x), (_, y)) in a.params.iter().zip(&b.params) {
            match x.total_cmp(y) {
                std::cmp::Ordering::Equal => continue,
                o => return o,
            }
        }
        std::cmp::Ordering::Equal
    });
}

pub const PLASTICITY_LIMIT_SLOPE_TOL: f64 = 0.15;
pub const PLASTICITY_LIMIT_MIN_R2: f64 = 0.99;

/// `d(gamma) = sup_{x, t <= t_end} |u^gamma - u^0|` for each gamma, all runs
/// from the same `u0` on a common time grid.
///
/// Each row's bound is the distance measured at the next larger gamma, so a
/// passing table is monotone; the first row is bounded by the sum of the two
/// a-priori estimates.
pub fn plasticity_limit_study(
    base: &Instance,
    gammas: &[f64],
    u0: &FieldState,
    cfg: &SolverConfig,
) -> Result<StudyResult, SolverError> {
    plasticity_limit_study_with_drift(base, gammas, u0, 0.0, cfg)
}

/// As [`plasticity_limit_study`], with initial data `u0 + drift gamma delta`
/// for the run at `gamma` (`delta` from [`smooth_perturbation`]), so that
/// `||u0^gamma - u0|| -> 0` with gamma.
pub fn plasticity_limit_study_with_drift(
    base: &Instance,
    gammas: &[f64],
    u0: &FieldState,
    drift: f64,
    cfg: &SolverConfig,
) -> Result<StudyResult, SolverError> {
    let delta = smooth_perturbation(&base.grid);
    let start = |g: f64| {
        if drift == 0.0 {
            u0.clone()
        } else {
            FieldState::new(u0.values.iter().zip(&delta).map(|(u, d)| u + drift * g * d).collect(), u0.t)
        }
    };
    let g_max = gammas.iter().cloned().fold(0.0, f64::max);
    let mut cfg = *cfg;
    if cfg.segment_rho.is_none() {
        cfg.segment_rho = Some(base.with_gamma(g_max).sim().segment_length(&SolverConfig::default()).min(cfg.t_end));
        cfg.dt = cfg.dt.min(cfg.segment_rho.unwrap());
    }
    let reference = base.with_gamma(0.0).solve(u0, &cfg)?;
    let distances = gammas
        .par_iter()
        .map(|&g| Ok((g, base.with_gamma(g).solve(&start(g), &cfg)?.sup_diff(&reference))))
        .collect::<Result<Vec<(f64, f64)>, SolverError>>()?;

    let mut ordered = distances.clone();
    ordered.sort_by(|a, b| b.0.total_cmp(&a.0));
    let u0_sup = u0.sup_norm();
    let mut rows = Vec::with_capacity(ordered.len());
    for (k, &(g, d)) in ordered.iter().enumerate() {
        let bound = if k == 0 {
            base.constants.global_bound(g, u0_sup) + base.constants.global_bound(0.0, u0_sup)
        } else {
            ordered[k - 1].1
        };
        rows.push(StudyRow::new(vec![("gamma".into(), g)], d, bound, 0.0));
    }
    sort_rows(&mut rows);

    let mut result = StudyResult { name: "plasticity-limit".into(), rows, checks: vec![], fit: None, skipped: 0 };
    if let Some(&(_, d0)) = ordered.iter().find(|(g, _)| *g == 0.0) {
        result.check("zero-gamma-identical", d0 == 0.0, format!("d(0) = {d0:e}"));
    }
    let positive: Vec<(f64, f64)> = ordered.iter().cloned().filter(|(g, d)| *g > 0.0 && *d > 0.0).collect();
    if positive.len() >= 2 {
        let (gs, ds): (Vec<f64>, Vec<f64>) = positive.iter().cloned().unzip();
        let fit = log_log_fit(&gs, &ds);
        if let Some(fit) = fit {
            result.check(
                "log-log-slope",
                (fit.slope - 1.0).abs() <= PLASTICITY_LIMIT_SLOPE_TOL && fit.r_squared > PLASTICITY_LIMIT_MIN_R2,
                format!("slope {:.4}, R^2 {:.6}", fit.slope, fit.r_squared),
            );
        }
        result.fit = fit;
        let (first, last) = (positive[0], positive[positive.len() - 1]);
        let ratio = first.0 / last.0;
        if ratio >= 16.0 {
            result.check(
                "decay",
                last.1 < first.1 / 8.0,
                format!("d({}) = {:e}, d({}) = {:e}", last.0, last.1, first.0, first.1),
            );
        }
    }
    Ok(result)
}

/// Fixed smooth perturbation profile with unit sup norm.
pub fn smooth_perturbation(grid: &Grid) -> Vec<f64> {
    let centre: Vec<f64> = grid.axes().iter().map(|a| 0.5 * (a.lo + a.hi)).collect();
    let width: Vec<f64> = grid.axes().iter().map(|a| 0.15 * a.length()).collect();
    let raw = grid.sample(|x| {
        let r2: f64 = x.iter().zip(&centre).zip(&width).map(|((xi, c), w)| ((xi - c) / w).powi(2)).sum();
        (-r2).exp()
    });
    let m = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    raw.into_iter().map(|v| v / m).collect()
}

pub const DEPENDENCE_SPREAD_TOL: f64 = 0.10;

/// Paired runs on `[0, rho]` from `u0` and `u0 + eps delta`; each row checks
/// `||u - v||_rho <= eps / (1 - q) + 10 dt^2`.
pub fn continuous_dependence_study(
    inst: &Instance,
    u0: &FieldState,
    eps_list: &[f64],
    rho: f64,
    cfg: &SolverConfig,
) -> Result<StudyResult, SolverError> {
    let q = inst.sim().contraction_factor(rho);
    if q >= 1.0 {
        return Err(SolverError::NonContractive { q, rho });
    }
    let cfg = SolverConfig { t_end: rho, segment_rho: Some(rho), dt: cfg.dt.min(rho), ..*cfg };
    let delta = smooth_perturbation(&inst.grid);
    let base = inst.solve(u0, &cfg)?;
    let c = 1.0 / (1.0 - q);
    let slack = 10.0 * cfg.dt * cfg.dt;
    let mut rows = eps_list
        .par_iter()
        .map(|&eps| {
            let v0 = FieldState::new(u0.values.iter().zip(&delta).map(|(u, d)| u + eps * d).collect(), u0.t);
            let d = inst.solve(&v0, &cfg)?.sup_diff(&base);
            Ok(StudyRow::new(vec![("eps".into(), eps), ("q".into(), q)], d, c * eps, slack))
        })
        .collect::<Result<Vec<_>, SolverError>>()?;
    sort_rows(&mut rows);

    let mut result = StudyResult { name: "dependence".into(), rows, checks: vec![], fit: None, skipped: 0 };
    let ratios: Vec<f64> = result
        .rows
        .iter()
        .filter_map(|r| {
            let eps = r.param("eps").unwrap();
            (eps > 0.0).then(|| r.measured / eps)
        })
        .collect();
    if ratios.len() >= 2 {
        let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let spread = (hi - lo) / hi;
        result.check(
            "ratio-spread",
            spread < DEPENDENCE_SPREAD_TOL,
            format!("ratios in [{lo:.6}, {hi:.6}], spread {spread:.3e}, bound {c:.6}"),
        );
    }
    Ok(result)
}

/// Field values on the time nodes of one segment.
type SpaceTime = Vec<Vec<f64>>;

/// Bounded smooth space-time field `B tanh(...)` on `steps + 1` time nodes.
fn random_field(grid: &Grid, steps: usize, amplitude: f64, rng: &mut ChaCha8Rng) -> SpaceTime {
    let modes = 3;
    let lengths: Vec<f64> = grid.axes().iter().map(|a| a.length()).collect();
    let mut params = Vec::with_capacity(modes);
    for m in 0..modes {
        let a: f64 = rng.random_range(-1.5..1.5);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let drift: f64 = rng.random_range(-1.0..1.0);
        let axis = m % lengths.len();
        params.push((a, phase, drift, axis, (m + 1) as f64));
    }
    let offset: f64 = rng.random_range(-1.0..1.0);
    (0..=steps)
        .map(|k| {
            let s = k as f64 / steps.max(1) as f64;
            grid.points()
                .map(|x| {
                    let mut arg = offset;
                    for &(a, phase, drift, axis, freq) in &params {
                        let w = std::f64::consts::TAU * freq / lengths[axis];
                        arg += a * (w * x[axis] + phase + drift * s).cos();
                    }
                    amplitude * arg.tanh()
                })
                .collect()
        })
        .collect()
}

/// Ratios `||A u1 - A u2||_rho / ||u1 - u2||_rho` over random pairs bounded
/// by the a-priori estimate.
///
/// Even-numbered pairs are independent fields; odd-numbered pairs are small
/// perturbations of the first field.
pub fn contraction_measure(
    inst: &Instance,
    rho: f64,
    steps: usize,
    n_pairs: usize,
    seed: u64,
    slack: f64,
) -> Result<StudyResult, SolverError> {
    let sim = inst.sim();
    let q = sim.contraction_factor(rho);
    let h = rho / steps as f64;
    let amplitude = inst.constants.global_bound(inst.model.gamma, 0.0).max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(SpaceTime, SpaceTime)> = (0..n_pairs)
        .map(|p| {
            let u1 = random_field(&inst.grid, steps, amplitude, &mut rng);
            let u2 = if p % 2 == 0 {
                random_field(&inst.grid, steps, amplitude, &mut rng)
            } else {
                let eps: f64 = 10f64.powf(rng.random_range(-6.0..-1.0));
                let bump = random_field(&inst.grid, steps, 1.0, &mut rng);
                u1.iter()
                    .zip(&bump)
                    .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x + eps * amplitude * y).clamp(-amplitude, amplitude)).collect())
                    .collect()
            };
            (u1, u2)
        })
        .collect();

    let measured = pairs
        .par_iter()
        .enumerate()
        .map(|(p, (u1, u2))| {
            let den = u1.iter().zip(u2).map(|(a, b)| sup_diff(a, b)).fold(0.0, f64::max);
            if den == 0.0 {
                return Ok(None);
            }
            let a1 = sim.apply_volterra(u1, h)?;
            let a2 = sim.apply_volterra(u2, h)?;
            let num = a1.iter().zip(&a2).map(|(a, b)| sup_diff(a, b)).fold(0.0, f64::max);
            Ok(Some(StudyRow::new(vec![("pair".into(), p as f64), ("gamma".into(), inst.model.gamma)], num / den, q, slack)))
        })
        .collect::<Result<Vec<_>, SolverError>>()?;
    let skipped = measured.iter().filter(|r| r.is_none()).count();
    let mut rows: Vec<StudyRow> = measured.into_iter().flatten().collect();
    sort_rows(&mut rows);
    let mut result = StudyResult { name: "contraction".into(), rows, checks: vec![], fit: None, skipped };
    let worst = result.rows.iter().map(|r| r.measured).fold(0.0, f64::max);
    result.check("max-ratio", worst <= q + slack, format!("max ratio {worst:.6}, q = {q:.6}, rho = {rho}"));
    Ok(result)
}

/// `||u0||_{L1} + (1 + gamma) C_w |Omega|`. With `gamma = 0` this is the
/// bound `||u0||_{L1} + C_w |Omega|`; for `gamma > 0` the plastic factor can
/// reach `1 + gamma` and the L¹ estimate inherits it.
pub fn l1_bound(u0_l1: f64, c_w: f64, measure: f64, gamma: f64) -> f64 {
    u0_l1 + (1.0 + gamma) * c_w * measure
}

pub const L1_SLACK: f64 = 1e-6;

/// `sup_t ||u(t)||_{L1}` for each initial datum. Rows carry the bound with
/// the plastic factor; the check `literal` records the comparison against
/// `||u0||_{L1} + C_w |Omega|` without it.
pub fn l1_bound_study(
    inst: &Instance,
    u0_list: &[(String, FieldState)],
    cfg: &SolverConfig,
) -> Result<StudyResult, SolverError> {
    let measure = inst.grid.measure();
    let c_w = inst.constants.c_w;
    let gamma = inst.model.gamma;
    let measured = u0_list
        .par_iter()
        .enumerate()
        .map(|(k, (_, u0))| {
            let traj = inst.solve(u0, cfg)?;
            if traj.states.iter().any(|s| !s.is_finite()) {
                return Err(SolverError::NonFinite { t: traj.last().t, last_finite: u0.clone() });
            }
            let sup_l1 = traj.states.iter().map(|s| inst.quad.l1_norm(&s.values)).fold(0.0, f64::max);
            let u0_l1 = inst.quad.l1_norm(&u0.values);
            Ok((k, sup_l1, u0_l1))
        })
        .collect::<Result<Vec<_>, SolverError>>()?;
    let mut rows = Vec::new();
    let mut literal_worst = f64::INFINITY;
    for (k, sup_l1, u0_l1) in measured {
        let literal = l1_bound(u0_l1, c_w, measure, 0.0);
        literal_worst = literal_worst.min(literal + L1_SLACK - sup_l1);
        rows.push(StudyRow::new(
            vec![("datum".into(), k as f64), ("gamma".into(), gamma), ("u0_l1".into(), u0_l1)],
            sup_l1,
            l1_bound(u0_l1, c_w, measure, gamma),
            L1_SLACK,
        ));
    }
    sort_rows(&mut rows);
    let mut result = StudyResult { name: "l1".into(), rows, checks: vec![], fit: None, skipped: 0 };
    let literal_pass = literal_worst >= 0.0;
    if gamma == 0.0 {
        result.check("literal", literal_pass, format!("worst margin {literal_worst:e}"));
    } else {
        // informational for gamma > 0
        result.checks.push(StudyCheck {
            name: "literal-informational".into(),
            pass: true,
            detail: format!("margin against the bound without the plastic factor: {literal_worst:e}"),
        });
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FiringRate, LearningKernel, Mode, SynapticKernel};
    use crate::solver::Method;

    fn instance(gamma: f64, lo: f64, hi: f64, n: usize) -> Instance {
        let model = ModelSpec::new(
            SynapticKernel::exponential(0.5, 1.0),
            FiringRate::sigmoid(4.0, 0.3),
            LearningKernel::default(),
            gamma,
            Mode::WellPosed,
        )
        .unwrap();
        Instance::new(model, Grid::interval(lo, hi, n).unwrap(), QuadratureRule::Trapezoid).unwrap()
    }

    #[test]
    fn linear_fit_recovers_a_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let fit = linear_fit(&x, &y).unwrap();
        assert!((fit.slope - 2.5).abs() < 1e-14);
        assert!((fit.intercept + 1.0).abs() < 1e-14);
        assert!((fit.r_squared - 1.0).abs() < 1e-14);
        assert!(linear_fit(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn l1_formula_instance() {
        assert!((l1_bound(0.3, 1.0, 1.0, 0.0) - 1.3).abs() < 1e-15);
    }

    #[test]
    fn plasticity_limit_is_linear_in_gamma() {
        let inst = instance(0.0, -10.0, 10.0, 101);
        let u0 = FieldState::new(inst.grid.sample(|x| 1.5 * (-x[0] * x[0] / 4.0).exp()), 0.0);
        let cfg = SolverConfig { method: Method::Rk4, dt: 0.05, t_end: 10.0, ..Default::default() };
        let res = plasticity_limit_study(&inst, &[0.4, 0.2, 0.1, 0.05, 0.025, 0.0], &u0, &cfg).unwrap();
        assert!(res.pass(), "{:#?}", res);
        assert_eq!(res.rows[0].measured, 0.0);
        let drifting = plasticity_limit_study_with_drift(&inst, &[0.4, 0.2, 0.1, 0.05, 0.025], &u0, 0.5, &cfg).unwrap();
        assert!(drifting.pass(), "{:#?}", drifting);
    }

    #[test]
    fn dependence_ratio_is_below_the_bound() {
        let inst = instance(0.5, -10.0, 10.0, 101);
        let u0 = FieldState::new(inst.grid.sample(|x| (-x[0] * x[0]).exp()), 0.0);
        let rho = 0.2;
        let cfg = SolverConfig { dt: 0.01, ..Default::default() };
        let res = continuous_dependence_study(&inst, &u0, &[0.0, 0.05, 0.1, 0.2], rho, &cfg).unwrap();
        assert!(res.pass(), "{:#?}", res);
        assert_eq!(res.rows[0].measured, 0.0);
    }

    #[test]
    fn contraction_ratios_respect_q() {
        let inst = instance(0.5, -10.0, 10.0, 61);
        let res = contraction_measure(&inst, 0.1, 10, 40, 7, 0.01).unwrap();
        assert!(res.pass(), "{:#?}", res.checks);
        assert_eq!(res.rows.len() + res.skipped, 40);
        let again = contraction_measure(&inst, 0.1, 10, 40, 7, 0.01).unwrap();
        assert_eq!(res, again);
    }

    #[test]
    fn doubling_gamma_raises_q_by_the_plastic_term() {
        let a = instance(0.5, -10.0, 10.0, 61);
        let b = a.with_gamma(1.0);
        let rho = 0.1;
        let c = a.constants;
        let expected = rho * 0.5 * (c.lipschitz_f + 2.0 * c.lipschitz_g) * c.c_w;
        let dq = b.sim().contraction_factor(rho) - a.sim().contraction_factor(rho);
        assert!((dq - expected).abs() < 1e-14);
        let res = contraction_measure(&b, rho, 10, 20, 3, 0.01).unwrap();
        assert!(res.pass());
    }

    #[test]
    fn l1_bound_holds_for_step_data() {
        let inst = instance(0.0, 0.0, 20.0, 201);
        let step = FieldState::new(inst.grid.sample(|x| if x[0] < 10.0 { 1.0 } else { 0.0 }), 0.0);
        let zero = FieldState::new(vec![0.0; 201], 0.0);
        let cfg = SolverConfig { t_end: 10.0, dt: 0.05, ..Default::default() };
        let res = l1_bound_study(&inst, &[("zero".into(), zero), ("step".into(), step)], &cfg).unwrap();
        assert!(res.pass(), "{:#?}", res);
    }
}
