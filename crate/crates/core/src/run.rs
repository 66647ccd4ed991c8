//! Command dispatch behind the `nfield` binary.
//!
//! Exit codes: 0 success, 1 numerical failure (including a failed study
//! verdict), 2 configuration or I/O error. A manifest is written whenever
//! the output directory can be opened.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use crate::config::{parse_config, parse_config_str, RunConfig};
use crate::experiments::{
    contraction_measure, continuous_dependence_study, l1_bound_study, plasticity_limit_study_with_drift, Instance, StudyResult,
};
use crate::gainfield::{
    build_learned_kernel, mercer_decompose, presynaptic_gain, schrodinger_cross_check, schrodinger_fd, Potential,
    PotentialSpec,
};
use crate::grid::{Grid, Quadrature, QuadratureRule};
use crate::output::{Cell, ManifestError, OutputDir, RunManifest};
use crate::solver::{monitor_bounds, Trajectory};
use crate::stationary::{find_stationary_fp, stationary_via_flow, StationaryMethod, StationaryResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    PlasticityLimit,
    Dependence,
    Contraction,
    L1,
}

impl StudyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StudyKind::PlasticityLimit => "plasticity-limit",
            StudyKind::Dependence => "dependence",
            StudyKind::Contraction => "contraction",
            StudyKind::L1 => "l1",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [StudyKind::PlasticityLimit, StudyKind::Dependence, StudyKind::Contraction, StudyKind::L1]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Simulate,
    Stationary,
    Gainfield,
    /// Optional `(half_width, height)` and `lambda` override the config.
    Schrodinger { well: Option<(f64, f64)>, lambda: Option<f64> },
    Study(StudyKind),
    Constants,
    Validate,
}

impl Command {
    pub fn name(&self) -> String {
        match self {
            Command::Simulate => "simulate".into(),
            Command::Stationary => "stationary".into(),
            Command::Gainfield => "gainfield".into(),
            Command::Schrodinger { .. } => "schrodinger".into(),
            Command::Study(k) => format!("study {}", k.name()),
            Command::Constants => "constants".into(),
            Command::Validate => "validate".into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub manifest: Option<PathBuf>,
    pub message: String,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Config(_) => "config",
            Failure::Numerical(_) => "numerical",
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numerical(m) => m,
        }
    }
}

fn numerical<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Numerical(e.to_string())
}

fn config_err<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Config(e.to_string())
}

fn load(opts: &RunOptions) -> Result<RunConfig, Failure> {
    let mut cfg = match &opts.config {
        Some(path) => parse_config(path).map_err(config_err)?,
        None => parse_config_str("{}", std::env::vars()).map_err(config_err)?,
    };
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Runs `command`, writing artifacts under `opts.out`.
pub fn run(command: &Command, opts: &RunOptions) -> RunOutcome {
    let started = Instant::now();
    let mut manifest = RunManifest::new(&command.name());
    let threads = opts.threads.unwrap_or_else(rayon::current_num_threads).max(1);
    manifest.threads = threads;

    let mut out = match OutputDir::open(&opts.out) {
        Ok(o) => o,
        Err(e) => return RunOutcome { exit_code: 2, manifest: None, message: e.to_string() },
    };

    let result = match load(opts) {
        Ok(cfg) => {
            manifest.config = serde_json::to_value(&cfg).unwrap_or(Value::Null);
            match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                Ok(pool) => pool.install(|| dispatch(command, &cfg, &mut out, &mut manifest)),
                Err(e) => Err(Failure::Numerical(format!("thread pool: {e}"))),
            }
        }
        Err(f) => Err(f),
    };

    let (exit_code, message) = match result {
        Ok(()) => (0, format!("{} finished", command.name())),
        Err(f) => {
            manifest.status = "error".into();
            manifest.error = Some(ManifestError { kind: f.kind().into(), message: f.message().into(), exit_code: f.code() });
            (f.code(), f.message().to_string())
        }
    };
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    match out.write_manifest(&mut manifest) {
        Ok(path) => RunOutcome { exit_code, manifest: Some(path), message },
        Err(e) => RunOutcome { exit_code: exit_code.max(2), manifest: None, message: format!("{message}; {e}") },
    }
}

fn describe(inst: &Instance, manifest: &mut RunManifest, cfg: &RunConfig) {
    let rho = inst.sim().segment_length(&cfg.solver);
    manifest.constants = Some(inst.constants);
    manifest.rho = Some(rho);
    manifest.q = Some(inst.sim().contraction_factor(rho));
}

fn node_cells(grid: &Grid, i: usize) -> Vec<Cell> {
    let mut row = vec![Cell::from(i)];
    row.extend(grid.point(i).iter().map(|&x| Cell::from(x)));
    row
}

fn coord_names(grid: &Grid) -> Vec<&'static str> {
    ["x", "y"][..grid.dim()].to_vec()
}

fn write_field(out: &mut OutputDir, name: &str, grid: &Grid, values: &[f64], label: &str) -> Result<(), Failure> {
    let mut header = vec!["node"];
    header.extend(coord_names(grid));
    header.push(label);
    out.write_csv(
        name,
        &header,
        values.iter().enumerate().map(|(i, &u)| {
            let mut row = node_cells(grid, i);
            row.push(Cell::from(u));
            row
        }),
    )
    .map_err(config_err)?;
    Ok(())
}

fn write_trajectory(out: &mut OutputDir, grid: &Grid, traj: &Trajectory) -> Result<(), Failure> {
    let mut header = vec!["t", "node"];
    header.extend(coord_names(grid));
    header.push("u");
    let rows = traj.states.iter().flat_map(|s| {
        s.values.iter().enumerate().map(move |(i, &u)| {
            let mut row = vec![Cell::from(s.t)];
            row.extend(node_cells(grid, i));
            row.push(Cell::from(u));
            row
        })
    });
    out.write_csv("trajectory.csv", &header, rows).map_err(config_err)?;
    Ok(())
}

fn dispatch(command: &Command, cfg: &RunConfig, out: &mut OutputDir, manifest: &mut RunManifest) -> Result<(), Failure> {
    match command {
        Command::Validate => {
            let inst = cfg.instance().map_err(config_err)?;
            describe(&inst, manifest, cfg);
            manifest.summary = json!({"valid": true});
            Ok(())
        }
        Command::Constants => {
            let inst = cfg.instance().map_err(config_err)?;
            describe(&inst, manifest, cfg);
            let u0 = cfg.initial_state(&inst.grid).map_err(Failure::Config)?;
            let doc = json!({
                "constants": inst.constants,
                "rho": manifest.rho,
                "q": manifest.q,
                "continuation_constant": manifest.q.map(|q| 1.0 / (1.0 - q)),
                "global_bound": inst.constants.global_bound(cfg.model.gamma, u0.sup_norm()),
                "l1_bound": crate::experiments::l1_bound(
                    inst.quad.l1_norm(&u0.values), inst.constants.c_w, inst.grid.measure(), cfg.model.gamma),
            });
            out.write_json("constants.json", &doc).map_err(config_err)?;
            manifest.summary = doc;
            Ok(())
        }
        Command::Simulate => {
            let inst = cfg.instance().map_err(config_err)?;
            describe(&inst, manifest, cfg);
            let u0 = cfg.initial_state(&inst.grid).map_err(Failure::Config)?;
            let traj = inst.solve(&u0, &cfg.solver).map_err(numerical)?;
            let report = monitor_bounds(&traj, &inst.constants, &inst.model, &inst.op);
            write_trajectory(out, &inst.grid, &traj)?;
            out.write_csv(
                "bounds.csv",
                &["t", "sup_u", "bound", "min_u"],
                report.series.iter().map(|s| vec![s.t.into(), s.sup_u.into(), s.bound.into(), s.min_u.into()]),
            )
            .map_err(config_err)?;
            manifest.summary = json!({
                "sup_observed": report.sup_observed,
                "bound_theoretical": report.bound_theoretical,
                "within_bound": report.within_bound,
                "min_observed": report.min_observed,
                "positivity_applicable": report.positivity_applicable,
                "positivity_violations": report.positivity_violations,
                "segments": traj.segments.len(),
                "picard_iterations": traj.segments.iter().map(|s| s.iterations()).collect::<Vec<_>>(),
            });
            if !report.within_bound || report.positivity_violations > 0 {
                return Err(Failure::Numerical("a-priori estimate violated".into()));
            }
            Ok(())
        }
        Command::Stationary => {
            let inst = cfg.instance().map_err(config_err)?;
            describe(&inst, manifest, cfg);
            let res = stationary(&inst, cfg)?;
            write_field(out, "u_inf.csv", &inst.grid, &res.u_inf.values, "u")?;
            let doc = json!({
                "method": res.method,
                "converged": res.converged,
                "residual_sup": res.residual_sup,
                "iterations": res.iterations,
                "gamma_c_w": res.gamma_c_w,
                "small_gamma_regime": res.in_small_gamma_regime(),
            });
            out.write_json("stationary.json", &doc).map_err(config_err)?;
            manifest.summary = doc;
            if !res.converged {
                return Err(Failure::Numerical(format!("stationary solve did not converge (residual {:e})", res.residual_sup)));
            }
            Ok(())
        }
        Command::Gainfield => gainfield(cfg, out, manifest),
        Command::Schrodinger { well, lambda } => schrodinger(cfg, *well, *lambda, out, manifest),
        Command::Study(kind) => study(*kind, cfg, out, manifest),
    }
}

fn stationary(inst: &Instance, cfg: &RunConfig) -> Result<StationaryResult, Failure> {
    let u0 = cfg.initial_state(&inst.grid).map_err(Failure::Config)?;
    let s = &cfg.stationary;
    match s.method {
        StationaryMethod::DampedFp => find_stationary_fp(&inst.sim(), &u0, s.damping, s.tol, s.max_iter).map_err(numerical),
        StationaryMethod::Flow => {
            stationary_via_flow(&inst.sim(), &u0, s.flow_dt, s.flow_t_max, s.settle_tol).map_err(numerical)
        }
    }
}

fn box_grid(cfg: &RunConfig) -> Result<(Grid, Quadrature), Failure> {
    let a = cfg.gainfield.box_axis;
    let grid = Grid::interval(a.lo, a.hi, a.n).map_err(config_err)?;
    let quad = Quadrature::new(&grid, QuadratureRule::Trapezoid).map_err(config_err)?;
    Ok((grid, quad))
}

fn gainfield(cfg: &RunConfig, out: &mut OutputDir, manifest: &mut RunManifest) -> Result<(), Failure> {
    let inst = cfg.instance().map_err(config_err)?;
    describe(&inst, manifest, cfg);
    let st = stationary(&inst, cfg)?;
    if !st.converged {
        return Err(Failure::Numerical(format!("stationary solve did not converge (residual {:e})", st.residual_sup)));
    }
    let g = build_learned_kernel(&st.u_inf, &inst.model, cfg.gainfield.sign);
    let eig = mercer_decompose(&g, &inst.quad).map_err(numerical)?;
    let gain = presynaptic_gain(&eig, cfg.gainfield.k_pre(), cfg.gainfield.rank);
    out.write_csv("eigs.csv", &["i", "sigma"], eig.values.iter().enumerate().map(|(i, &s)| vec![i.into(), s.into()]))
        .map_err(config_err)?;
    write_field(out, "phi_pre.csv", &inst.grid, &gain.phi_pre, "phi")?;

    let diag = g.diagonal();
    let full = presynaptic_gain(&eig, 1.0, None);
    let diagonal_error = full.phi_pre.iter().zip(&diag).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let (bgrid, bquad) = box_grid(cfg)?;
    let spec = PotentialSpec::square_well(cfg.gainfield.half_width, 0.0, cfg.gainfield.lambda);
    let report = schrodinger_cross_check(&spec, &bgrid, &bquad, cfg.gainfield.bracket).map_err(numerical)?;
    out.write_json("crosscheck.json", &report).map_err(config_err)?;
    manifest.summary = json!({
        "stationary_residual": st.residual_sup,
        "k_pre": gain.k_pre,
        "sigma_max": eig.values.first(),
        "sigma_min": eig.values.last(),
        "gram_deviation": eig.gram_deviation(),
        "diagonal_error": diagonal_error,
        "crosscheck_residual_l2": report.residual_l2,
        "rayleigh_minus_energy": report.rayleigh_quotient - (report.k2 - report.lambda * report.lambda),
    });
    Ok(())
}

fn schrodinger(
    cfg: &RunConfig,
    well: Option<(f64, f64)>,
    lambda: Option<f64>,
    out: &mut OutputDir,
    manifest: &mut RunManifest,
) -> Result<(), Failure> {
    let (a, v0) = well.unwrap_or((cfg.gainfield.half_width, cfg.gainfield.height));
    let lambda = lambda.unwrap_or(cfg.gainfield.lambda);
    if !(a > 0.0 && v0 >= 0.0 && lambda > 0.0) {
        return Err(Failure::Config(format!("need a > 0, V0 >= 0, lambda > 0; got a = {a}, V0 = {v0}, lambda = {lambda}")));
    }
    let (grid, _) = box_grid(cfg)?;
    let well = Potential::SquareWell { half_width: a, height: v0 };
    let eig = schrodinger_fd(&well, &grid, cfg.gainfield.n_states).map_err(numerical)?;
    out.write_csv("eigs.csv", &["i", "E"], eig.values.iter().enumerate().map(|(i, &e)| vec![i.into(), e.into()]))
        .map_err(config_err)?;
    let mut header = vec!["x".to_string()];
    header.extend((0..eig.len()).map(|k| format!("psi_{k}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    out.write_csv(
        "states.csv",
        &header_refs,
        (0..grid.len()).map(|i| {
            let mut row = vec![Cell::from(grid.point(i)[0])];
            row.extend(eig.vectors.iter().map(|v| Cell::from(v[i])));
            row
        }),
    )
    .map_err(config_err)?;
    let doc = json!({
        "half_width": a,
        "V0": v0,
        "lambda": lambda,
        "energies": eig.values,
        "k2_minus_lambda2": v0 - lambda * lambda,
        "consistency": v0 - eig.values[0] - lambda * lambda,
    });
    out.write_json("schrodinger.json", &doc).map_err(config_err)?;
    manifest.summary = doc;
    Ok(())
}

fn write_study(out: &mut OutputDir, res: &StudyResult) -> Result<(), Failure> {
    let names: Vec<String> = res.rows.first().map(|r| r.params.iter().map(|(k, _)| k.clone()).collect()).unwrap_or_default();
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    header.extend(["measured", "theoretical", "slack", "margin", "pass"]);
    out.write_csv(
        &format!("{}.csv", res.name),
        &header,
        res.rows.iter().map(|r| {
            let mut row: Vec<Cell> = r.params.iter().map(|(_, v)| Cell::from(*v)).collect();
            row.extend([r.measured.into(), r.theoretical.into(), r.slack.into(), r.margin().into(), r.pass.into()]);
            row
        }),
    )
    .map_err(config_err)?;
    let verdict = json!({
        "pass": res.pass(),
        "worst_margin": res.worst_margin(),
        "fitted_slope": res.fit.map(|f| f.slope),
        "r_squared": res.fit.map(|f| f.r_squared),
        "skipped": res.skipped,
        "checks": res.checks,
    });
    out.write_json("verdict.json", &verdict).map_err(config_err)?;
    Ok(())
}

fn study(kind: StudyKind, cfg: &RunConfig, out: &mut OutputDir, manifest: &mut RunManifest) -> Result<(), Failure> {
    let inst = cfg.instance().map_err(config_err)?;
    describe(&inst, manifest, cfg);
    let u0 = cfg.initial_state(&inst.grid).map_err(Failure::Config)?;
    let s = &cfg.study;
    let rho = s.rho.unwrap_or_else(|| inst.sim().segment_length(&cfg.solver));
    let res = match kind {
        StudyKind::PlasticityLimit => {
            plasticity_limit_study_with_drift(&inst, &s.gammas, &u0, s.initial_drift, &cfg.solver)
        }
        StudyKind::Dependence => continuous_dependence_study(&inst, &u0, &s.eps, rho, &cfg.solver),
        StudyKind::Contraction => contraction_measure(&inst, rho, s.steps, s.pairs, cfg.seed, s.contraction_slack),
        StudyKind::L1 => {
            let data = s
                .data
                .iter()
                .enumerate()
                .map(|(k, d)| Ok((format!("data-{k}"), d.sample(&inst.grid)?)))
                .collect::<Result<Vec<_>, String>>()
                .map_err(Failure::Config)?;
            l1_bound_study(&inst, &data, &cfg.solver)
        }
    }
    .map_err(numerical)?;
    write_study(out, &res)?;
    manifest.summary = json!({"study": res.name, "pass": res.pass(), "worst_margin": res.worst_margin()});
    if !res.pass() {
        return Err(Failure::Numerical(format!("study {} failed", res.name)));
    }
    Ok(())
}

/// Convenience for tests and scripts: runs with an inline JSON config.
pub fn run_with_config_text(command: &Command, text: &str, out: &Path, threads: Option<usize>) -> RunOutcome {
    let path = out.with_extension("config.json");
    if let Err(e) = std::fs::write(&path, text) {
        return RunOutcome { exit_code: 2, manifest: None, message: e.to_string() };
    }
    run(command, &RunOptions { config: Some(path), out: out.to_path_buf(), seed: None, threads })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(path: &Path) -> Value {
        serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
    }

    const SMALL: &str = r#"{"grid": {"axes": [{"lo": -5, "hi": 5, "n": 41}]}, "solver": {"t_end": 1.0, "dt": 0.1}}"#;

    #[test]
    fn simulate_writes_artifacts_and_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("sim");
        let o = run_with_config_text(&Command::Simulate, SMALL, &out, Some(1));
        assert_eq!(o.exit_code, 0, "{}", o.message);
        let m = manifest(&o.manifest.unwrap());
        assert_eq!(m["status"], "ok");
        for f in ["trajectory.csv", "bounds.csv"] {
            let bytes = std::fs::read(out.join(f)).unwrap();
            assert_eq!(m["outputs"][f], crate::output::sha256_hex(&bytes));
        }
        assert!(!out.join(crate::output::LOCK_FILE).exists());
    }

    #[test]
    fn config_error_exits_two_with_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("bad");
        let o = run_with_config_text(&Command::Simulate, r#"{"model": {"gamma": -0.1}}"#, &out, None);
        assert_eq!(o.exit_code, 2);
        let m = manifest(&o.manifest.unwrap());
        assert_eq!(m["status"], "error");
        assert!(m["error"]["message"].as_str().unwrap().contains("model.gamma"));
    }

    #[test]
    fn numerical_failure_exits_one() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("num");
        let text = r#"{"grid": {"axes": [{"lo": -5, "hi": 5, "n": 41}]},
                       "solver": {"method": "picard", "t_end": 1.0, "dt": 0.1, "picard_max_iter": 1}}"#;
        let o = run_with_config_text(&Command::Simulate, text, &out, None);
        assert_eq!(o.exit_code, 1, "{}", o.message);
        assert_eq!(manifest(&o.manifest.unwrap())["error"]["kind"], "numerical");
    }

    #[test]
    fn study_names_round_trip() {
        for k in [StudyKind::PlasticityLimit, StudyKind::Dependence, StudyKind::Contraction, StudyKind::L1] {
            assert_eq!(StudyKind::parse(k.name()), Some(k));
        }
        assert_eq!(StudyKind::parse("nope"), None);
    }
}
