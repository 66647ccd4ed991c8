//! From a stationary state to a presynaptic gain field.
//!
//! The learned kernel `G(x, y) = 1 ± gamma g(u_inf(x) - u_inf(y))` is
//! decomposed as `G(x, y) = sum_i sigma_i phi_i(x) phi_i(y)` with
//! eigenfunctions orthonormal in the quadrature inner product. The diagonal
//! of that expansion, scaled by `K_pre`, is the presynaptic gain field that
//! multiplies the synaptic kernel in the gain-field equation.

mod schrodinger;
mod tridiagonal;

pub use schrodinger::{
    greens_convolution, greens_identity_check, schrodinger_cross_check, schrodinger_fd, CrossCheckReport,
    Potential, PotentialSpec, SchrodingerError, BOX_DECAY_TOL,
};
pub use tridiagonal::SymTridiagonal;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{sup_diff, FieldState, Grid, Quadrature};
use crate::model::{compute_constants, FiringRate, LearningKernel, Mode, ModelSpec, SynapticKernel};
use crate::operator::DiscreteOperator;
use crate::solver::{Simulation, SolverConfig, SolverError, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GainFieldError {
    #[error("kernel is not positive semidefinite: eigenvalue {min} against largest {max}")]
    NotPsd { min: f64, max: f64 },
    #[error("kernel is not symmetric: |G_ij - G_ji| = {0:e}")]
    NotSymmetric(f64),
    #[error("eigenpair {index} has residual {residual:e} (limit {limit:e})")]
    EigenResidual { index: usize, residual: f64, limit: f64 },
    #[error("size mismatch: {0}")]
    Size(String),
    #[error("invalid gain-field model: {0}")]
    Model(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Sign of the plastic term in the learned kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelSign {
    /// `1 + gamma g`, consistent with the plastic dynamics.
    #[default]
    Plus,
    /// `1 - gamma g`
    Minus,
}

/// `G_ij = 1 ± gamma g(u_inf(x_i) - u_inf(x_j))` on the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedKernel {
    n: usize,
    values: Vec<f64>,
    pub gamma: f64,
    pub sign: KernelSign,
    pub source: Vec<f64>,
}

impl LearnedKernel {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

pub fn build_learned_kernel(u_inf: &FieldState, model: &ModelSpec, sign: KernelSign) -> LearnedKernel {
    let u = &u_inf.values;
    let n = u.len();
    let s = match sign {
        KernelSign::Plus => 1.0,
        KernelSign::Minus => -1.0,
    };
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            values[i * n + j] = 1.0 + s * model.gamma * model.learning.eval(u[i] - u[j]);
        }
    }
    LearnedKernel { n, values, gamma: model.gamma, sign, source: u.clone() }
}

/// Eigenpairs with eigenvectors sampled on the grid and normalized in the
/// quadrature inner product. The Mercer decomposition stores them in
/// descending order; the Schrödinger solver in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights.iter().zip(a.iter().zip(b)).map(|(q, (x, y))| q * x * y).sum()
    }

    /// `max_{ij} |<phi_i, phi_j> - delta_ij|`
    pub fn gram_deviation(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.len() {
            for j in 0..=i {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.inner(&self.vectors[i], &self.vectors[j]) - target).abs());
            }
        }
        worst
    }

    /// `sum_{i < rank} sigma_i phi_i(x_a) phi_i(x_b)`
    pub fn reconstruct(&self, rank: usize, a: usize, b: usize) -> f64 {
        self.values.iter().zip(&self.vectors).take(rank).map(|(s, v)| s * v[a] * v[b]).sum()
    }

    /// Max-abs error of the rank-`rank` truncation against `g`.
    pub fn reconstruction_error(&self, g: &LearnedKernel, rank: usize) -> f64 {
        let n = g.len();
        let mut worst = 0.0f64;
        let mut row = vec![0.0; n];
        for a in 0..n {
            row.iter_mut().for_each(|v| *v = 0.0);
            for (s, v) in self.values.iter().zip(&self.vectors).take(rank) {
                let sa = s * v[a];
                for (r, vb) in row.iter_mut().zip(v) {
                    *r += sa * vb;
                }
            }
            for (b, r) in row.iter().enumerate() {
                worst = worst.max((g.get(a, b) - r).abs());
            }
        }
        worst
    }

    /// Weighted Frobenius error of the rank-`rank` truncation,
    /// `sqrt(sum_{i >= rank} sigma_i^2)`.
    pub fn truncation_error(&self, rank: usize) -> f64 {
        self.values.iter().skip(rank).map(|s| s * s).sum::<f64>().sqrt()
    }
}

/// Solves the symmetric eigenproblem of `D^{1/2} G D^{1/2}` and maps the
/// eigenvectors back to quadrature-orthonormal eigenfunctions.
pub fn mercer_decompose(g: &LearnedKernel, quad: &Quadrature) -> Result<EigenSystem, GainFieldError> {
    let n = g.len();
    let q = quad.weights();
    if q.len() != n {
        return Err(GainFieldError::Size(format!("kernel has {n} nodes, quadrature {}", q.len())));
    }
    let asym = g.max_asymmetry();
    if asym > 1e-12 {
        return Err(GainFieldError::NotSymmetric(asym));
    }
    let root: Vec<f64> = q.iter().map(|w| w.sqrt()).collect();
    let m = DMatrix::from_fn(n, n, |i, j| root[i] * g.get(i, j) * root[j]);
    let eig = SymmetricEigen::new(m);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&k| {
            let col = eig.eigenvectors.column(k);
            // fix the sign so the largest component is positive
            let pivot = col.iter().cloned().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            let s = if pivot < 0.0 { -1.0 } else { 1.0 };
            col.iter().zip(&root).map(|(v, r)| s * v / r).collect()
        })
        .collect();

    let sigma_max = values.first().cloned().unwrap_or(0.0);
    let sigma_min = values.last().cloned().unwrap_or(0.0);
    if sigma_min < -1e-8 * sigma_max.abs() {
        return Err(GainFieldError::NotPsd { min: sigma_min, max: sigma_max });
    }

    // residual of the integral operator: sum_j G_kj q_j phi_j - sigma phi_k
    let norm_g = (0..n).map(|i| (0..n).map(|j| (g.get(i, j) * q[j]).abs()).sum::<f64>()).fold(0.0, f64::max);
    for (idx, (s, v)) in values.iter().zip(&vectors).enumerate() {
        let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let limit = 1e-8 * norm_g * scale.max(f64::MIN_POSITIVE);
        let mut residual = 0.0f64;
        for k in 0..n {
            let gv: f64 = (0..n).map(|j| g.get(k, j) * q[j] * v[j]).sum();
            residual = residual.max((gv - s * v[k]).abs());
        }
        if residual > limit {
            return Err(GainFieldError::EigenResidual { index: idx, residual, limit });
        }
    }
    Ok(EigenSystem { values, vectors, weights: q.to_vec() })
}

/// `phi_pre(y) = K_pre sum_i sigma_i phi_i(y)^2`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainField {
    pub phi_pre: Vec<f64>,
    pub k_pre: f64,
}

/// Uses the leading `rank` eigenpairs, or all of them.
pub fn presynaptic_gain(eig: &EigenSystem, k_pre: f64, rank: Option<usize>) -> GainField {
    let n = eig.weights.len();
    let rank = rank.unwrap_or(eig.len()).min(eig.len());
    let mut phi = vec![0.0; n];
    for (s, v) in eig.values.iter().zip(&eig.vectors).take(rank) {
        for (p, x) in phi.iter_mut().zip(v) {
            *p += s * x * x;
        }
    }
    phi.iter_mut().for_each(|p| *p *= k_pre);
    GainField { phi_pre: phi, k_pre }
}

/// Runs `u_t + u = int w(x,y) phi_pre(y) f(u(y,t)) dy` with plasticity off.
pub fn simulate_gainfield(
    kernel: &SynapticKernel,
    grid: &Grid,
    quad: &Quadrature,
    gain: &GainField,
    firing: &FiringRate,
    u0: &FieldState,
    cfg: &SolverConfig,
) -> Result<Trajectory, GainFieldError> {
    if gain.phi_pre.len() != grid.len() {
        return Err(GainFieldError::Size(format!(
            "gain field has {} values, grid {}",
            gain.phi_pre.len(),
            grid.len()
        )));
    }
    let model = ModelSpec::new(kernel.clone(), firing.clone(), LearningKernel::default(), 0.0, Mode::GainField)
        .map_err(|e| GainFieldError::Model(format!("{e:?}")))?;
    let op = DiscreteOperator::build(kernel, grid, quad).with_column_gain(&gain.phi_pre);
    let sup_gain = gain.phi_pre.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let base = compute_constants(&model, grid, quad);
    let mut constants = base;
    constants.c_w = base.c_w * sup_gain;
    constants.c_inf = base.c_inf * sup_gain;
    let sim = Simulation::new(&model, &op, constants);
    Ok(sim.solve_global(u0, cfg)?)
}

/// Paired-run comparison of a gain-field trajectory with a plastic one.
/// Diagnostic only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub sup_diff: f64,
    /// `(t, min_x [u_gain - u_plastic])`
    pub min_margin: Vec<(f64, f64)>,
    /// Earliest time after which the gain-field solution stays strictly above.
    pub dominant_after: Option<f64>,
}

pub fn compare_trajectories(gain: &Trajectory, plastic: &Trajectory) -> DominanceReport {
    let min_margin: Vec<(f64, f64)> = gain
        .states
        .iter()
        .zip(&plastic.states)
        .map(|(a, b)| {
            let m = a.values.iter().zip(&b.values).map(|(x, y)| x - y).fold(f64::INFINITY, f64::min);
            (a.t, m)
        })
        .collect();
    let mut dominant_after = None;
    for &(t, m) in min_margin.iter().rev() {
        if m > 0.0 {
            dominant_after = Some(t);
        } else {
            break;
        }
    }
    let sup = gain
        .states
        .iter()
        .zip(&plastic.states)
        .map(|(a, b)| sup_diff(&a.values, &b.values))
        .fold(0.0, f64::max);
    DominanceReport { sup_diff: sup, min_margin, dominant_after }
}
