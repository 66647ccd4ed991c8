//! Stationary Schrödinger side of the gain-field correspondence.
//!
//! A stationary state of `u = G_lambda * (P u)` with
//! `G_lambda(x) = exp(-lambda |x|) / (2 lambda)` solves
//! `-u'' + V u = E u` with `P = k^2 - V` and `E = k^2 - lambda^2`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tridiagonal::SymTridiagonal;
use super::EigenSystem;
use crate::grid::{Boundary, Grid, Quadrature};

/// Relative boundary magnitude above which a square-well box is too small.
pub const BOX_DECAY_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchrodingerError {
    #[error("needs a compact one-dimensional grid")]
    NotOneDimensional,
    #[error("need at least {needed} interior nodes, have {have}")]
    TooFewNodes { needed: usize, have: usize },
    #[error("box too small: ground state reaches {ratio:e} of its peak at the boundary")]
    BoxTooSmall { ratio: f64 },
    #[error("no bound state with V0 = E0 + lambda^2 in [{lo}, {hi}]")]
    NoBoundState { lo: f64, hi: f64 },
    #[error("tabulated potential has {got} values, grid {expected}")]
    Size { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Potential {
    /// `V = 0` on `|x| < half_width`, `height` elsewhere.
    SquareWell { half_width: f64, height: f64 },
    /// Node values.
    Tabulated { values: Vec<f64> },
}

impl Potential {
    /// Node values; square wells are averaged over each node's cell so the
    /// jump does not degrade the order of the scheme.
    pub fn sample(&self, grid: &Grid) -> Result<Vec<f64>, SchrodingerError> {
        match self {
            Potential::SquareWell { half_width, height } => {
                let h = grid.spacing()[0];
                let (lo, hi) = (grid.axes()[0].lo, grid.axes()[0].hi);
                Ok(grid
                    .points()
                    .map(|p| {
                        let a = (p[0] - 0.5 * h).max(lo);
                        let b = (p[0] + 0.5 * h).min(hi);
                        let inside = (b.min(*half_width) - a.max(-half_width)).max(0.0);
                        height * (1.0 - inside / (b - a))
                    })
                    .collect())
            }
            Potential::Tabulated { values } => {
                if values.len() != grid.len() {
                    return Err(SchrodingerError::Size { expected: grid.len(), got: values.len() });
                }
                Ok(values.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub potential: Potential,
    pub k_squared: f64,
    pub lambda: f64,
}

impl PotentialSpec {
    /// Square well of height `k^2`.
    pub fn square_well(half_width: f64, k_squared: f64, lambda: f64) -> Self {
        PotentialSpec { potential: Potential::SquareWell { half_width, height: k_squared }, k_squared, lambda }
    }

    pub fn energy(&self) -> f64 {
        self.k_squared - self.lambda * self.lambda
    }

    /// `P = k^2 - V` on the grid.
    pub fn gain_profile(&self, grid: &Grid) -> Result<Vec<f64>, SchrodingerError> {
        Ok(self.potential.sample(grid)?.into_iter().map(|v| self.k_squared - v).collect())
    }
}

fn check_line(grid: &Grid) -> Result<f64, SchrodingerError> {
    if grid.dim() != 1 || grid.boundary() != Boundary::Compact {
        return Err(SchrodingerError::NotOneDimensional);
    }
    if grid.len() < 3 {
        return Err(SchrodingerError::TooFewNodes { needed: 1, have: grid.len().saturating_sub(2) });
    }
    Ok(grid.spacing()[0])
}

/// `-D^2 + diag(V)` on the interior nodes.
fn hamiltonian(v: &[f64], h: f64) -> SymTridiagonal {
    let n = v.len() - 2;
    let c = 1.0 / (h * h);
    SymTridiagonal::new(v[1..=n].iter().map(|x| 2.0 * c + x).collect(), vec![-c; n - 1])
}

fn embed(interior: &[f64], h: f64) -> Vec<f64> {
    let mut full = Vec::with_capacity(interior.len() + 2);
    full.push(0.0);
    full.extend(interior.iter().map(|x| x / h.sqrt()));
    full.push(0.0);
    let peak = full.iter().cloned().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
    if peak < 0.0 {
        full.iter_mut().for_each(|v| *v = -*v);
    }
    full
}

fn boundary_ratio(psi: &[f64]) -> f64 {
    let n = psi.len();
    let peak = psi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    psi[1].abs().max(psi[n - 2].abs()) / peak
}

/// Lowest `n_states` eigenpairs with Dirichlet ends, ascending. Eigenvectors
/// vanish at the end nodes and are orthonormal in the trapezoid product.
pub fn schrodinger_fd(potential: &Potential, grid: &Grid, n_states: usize) -> Result<EigenSystem, SchrodingerError> {
    let h = check_line(grid)?;
    let v = potential.sample(grid)?;
    let t = hamiltonian(&v, h);
    if n_states > t.len() {
        return Err(SchrodingerError::TooFewNodes { needed: n_states, have: t.len() });
    }
    let mut values = Vec::with_capacity(n_states);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n_states);
    for k in 0..n_states {
        let e = t.eigenvalue(k);
        basis.push(t.eigenvector(e, &basis));
        values.push(e);
    }
    let vectors: Vec<Vec<f64>> = basis.iter().map(|b| embed(b, h)).collect();
    if let (Potential::SquareWell { height, .. }, Some(psi0)) = (potential, vectors.first()) {
        if *height > 0.0 {
            let ratio = boundary_ratio(psi0);
            if ratio > BOX_DECAY_TOL {
                return Err(SchrodingerError::BoxTooSmall { ratio });
            }
        }
    }
    let mut weights = vec![h; grid.len()];
    weights[0] = 0.5 * h;
    *weights.last_mut().unwrap() = 0.5 * h;
    Ok(EigenSystem { values, vectors, weights })
}

/// `(G_lambda * h)(x_i)` by quadrature.
pub fn greens_convolution(lambda: f64, grid: &Grid, quad: &Quadrature, h: &[f64]) -> Vec<f64> {
    let q = quad.weights();
    let c = 0.5 / lambda;
    (0..grid.len())
        .map(|i| (0..grid.len()).map(|j| q[j] * c * (-lambda * grid.distance(i, j)).exp() * h[j]).sum())
        .collect()
}

/// `max |(lambda^2 - D^2)(G_lambda * h) - h|` over interior nodes.
pub fn greens_identity_check(lambda: f64, grid: &Grid, quad: &Quadrature, h: &[f64]) -> Result<f64, SchrodingerError> {
    let dx = check_line(grid)?;
    if h.len() != grid.len() {
        return Err(SchrodingerError::Size { expected: grid.len(), got: h.len() });
    }
    if !(lambda > 0.0) {
        return Err(SchrodingerError::Invalid(format!("lambda must be positive, got {lambda}")));
    }
    let c = greens_convolution(lambda, grid, quad, h);
    let mut worst = 0.0f64;
    for i in 1..c.len() - 1 {
        let lap = (c[i + 1] - 2.0 * c[i] + c[i - 1]) / (dx * dx);
        worst = worst.max((lambda * lambda * c[i] - lap - h[i]).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheckReport {
    pub lambda: f64,
    #[serde(rename = "V0")]
    pub v0: f64,
    pub k2: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    pub residual_l2: f64,
    pub rayleigh_quotient: f64,
    /// `V0 - E0 - lambda^2` at the solution.
    pub consistency: f64,
    pub iterations: usize,
    pub bracket: (f64, f64),
}

fn ground_energy(half_width: f64, v0: f64, grid: &Grid, h: f64) -> Result<f64, SchrodingerError> {
    let v = Potential::SquareWell { half_width, height: v0 }.sample(grid)?;
    Ok(hamiltonian(&v, h).eigenvalue(0))
}

/// Finds the well height `V0 = k^2` for which the ground state has
/// `E = k^2 - lambda^2`, then checks that it solves the integral equation.
/// The default bracket is `[lambda^2, lambda^2 + (pi / 2a)^2]`.
pub fn schrodinger_cross_check(
    pot: &PotentialSpec,
    grid: &Grid,
    quad: &Quadrature,
    bracket: Option<(f64, f64)>,
) -> Result<CrossCheckReport, SchrodingerError> {
    let h = check_line(grid)?;
    let a = match pot.potential {
        Potential::SquareWell { half_width, .. } if half_width > 0.0 => half_width,
        _ => return Err(SchrodingerError::Invalid("cross-check needs a square well with positive half-width".into())),
    };
    let lambda = pot.lambda;
    if !(lambda > 0.0) {
        return Err(SchrodingerError::Invalid(format!("lambda must be positive, got {lambda}")));
    }
    let l2 = lambda * lambda;
    let (lo0, hi0) = bracket.unwrap_or((l2, l2 + (std::f64::consts::PI / (2.0 * a)).powi(2)));
    let residual = |v0: f64| -> Result<f64, SchrodingerError> { Ok(v0 - ground_energy(a, v0, grid, h)? - l2) };
    let (mut lo, mut hi) = (lo0, hi0);
    let (mut f_lo, f_hi) = (residual(lo)?, residual(hi)?);
    if f_lo.signum() == f_hi.signum() && f_lo != 0.0 && f_hi != 0.0 {
        return Err(SchrodingerError::NoBoundState { lo: lo0, hi: hi0 });
    }
    let mut iterations = 0;
    while hi - lo > 4.0 * f64::EPSILON * hi.abs() && iterations < 200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = residual(mid)?;
        iterations += 1;
        if f_mid == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    let v0 = 0.5 * (lo + hi);

    let well = Potential::SquareWell { half_width: a, height: v0 };
    let eig = schrodinger_fd(&well, grid, 1)?;
    let e0 = eig.values[0];
    let psi = &eig.vectors[0];
    let v = well.sample(grid)?;
    let p_psi: Vec<f64> = v.iter().zip(psi).map(|(vi, s)| (v0 - vi) * s).collect();
    let conv = greens_convolution(lambda, grid, quad, &p_psi);
    let diff: Vec<f64> = psi.iter().zip(&conv).map(|(s, c)| s - c).collect();
    let residual_l2 = quad.l2_norm(&diff) / quad.l2_norm(psi);

    let t = hamiltonian(&v, h);
    let inner = &psi[1..psi.len() - 1];
    let hpsi = t.matvec(inner);
    let num: f64 = inner.iter().zip(&hpsi).map(|(a, b)| a * b).sum();
    let den: f64 = inner.iter().map(|a| a * a).sum();

    Ok(CrossCheckReport {
        lambda,
        v0,
        k2: v0,
        energy: e0,
        residual_l2,
        rayleigh_quotient: num / den,
        consistency: v0 - e0 - l2,
        iterations,
        bracket: (lo0, hi0),
    })
}
