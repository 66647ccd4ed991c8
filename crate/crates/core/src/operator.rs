//! The discrete Hammerstein operators `J` and `F = -u + J`.

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{FieldState, Grid, Quadrature};
use crate::model::{kernel_on_grid, LearningKernel, ModelSpec, SynapticKernel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("state has {got} values but the operator acts on {expected} nodes")]
    DimensionMismatch { expected: usize, got: usize },
}

// Below this many kernel entries the rows are summed on the calling thread.
const PARALLEL_THRESHOLD: usize = 1 << 16;

/// The kernel premultiplied by quadrature weights, `W_ij = w(x_i, x_j) q_j`.
///
/// The plasticity factor is not part of `W`; it depends on the state and is
/// applied in [`DiscreteOperator::apply_j`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperator {
    n: usize,
    w: Vec<f64>,
    abs_row_sums: Vec<f64>,
}

impl DiscreteOperator {
    pub fn build(kernel: &SynapticKernel, grid: &Grid, quad: &Quadrature) -> Self {
        let n = grid.len();
        let q = quad.weights();
        let mut w = vec![0.0; n * n];
        w.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, wij) in row.iter_mut().enumerate() {
                *wij = kernel_on_grid(kernel, grid, i, j) * q[j];
            }
        });
        Self::from_matrix(n, w)
    }

    /// Wraps an explicit row-major `n x n` matrix.
    pub fn from_matrix(n: usize, w: Vec<f64>) -> Self {
        assert_eq!(w.len(), n * n, "matrix must be n x n");
        let abs_row_sums = w.chunks_exact(n).map(|r| r.iter().map(|v| v.abs()).sum()).collect();
        DiscreteOperator { n, w, abs_row_sums }
    }

    /// `W_ij phi_j`: the kernel seen through a presynaptic gain field.
    pub fn with_column_gain(&self, gain: &[f64]) -> Self {
        assert_eq!(gain.len(), self.n);
        let w = self.w.chunks_exact(self.n).flat_map(|row| row.iter().zip(gain).map(|(a, g)| a * g)).collect();
        Self::from_matrix(self.n, w)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.n..(i + 1) * self.n]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.w
    }

    /// `max_i sum_j |W_ij|`, the discrete `C_w`.
    pub fn max_abs_row_sum(&self) -> f64 {
        self.abs_row_sums.iter().cloned().fold(0.0, f64::max)
    }

    pub fn abs_row_sums(&self) -> &[f64] {
        &self.abs_row_sums
    }

    pub fn is_positive(&self) -> bool {
        self.w.iter().all(|&v| v > 0.0)
    }

    fn check(&self, len: usize) -> Result<(), OperatorError> {
        if len != self.n {
            return Err(OperatorError::DimensionMismatch { expected: self.n, got: len });
        }
        Ok(())
    }

    /// `(Ju)_i = sum_j W_ij [1 + gamma g(u_i - u_j)] f(u_j)`, summed in ascending `j`.
    pub fn apply_j(&self, model: &ModelSpec, u: &[f64]) -> Result<Vec<f64>, OperatorError> {
        let mut out = vec![0.0; self.n];
        self.apply_j_into(model, u, &mut out)?;
        Ok(out)
    }

    pub fn apply_j_into(&self, model: &ModelSpec, u: &[f64], out: &mut [f64]) -> Result<(), OperatorError> {
        self.check(u.len())?;
        self.check(out.len())?;
        let rates: Vec<f64> = u.iter().map(|&s| model.firing.eval(s)).collect();
        let gamma = model.gamma;
        let LearningKernel::Gaussian { width } = model.learning;
        let inv_width = 1.0 / width;
        let n = self.n;

        let row_sum = |i: usize| -> f64 {
            let row = &self.w[i * n..(i + 1) * n];
            let ui = u[i];
            let mut acc = 0.0;
            if gamma == 0.0 {
                for j in 0..n {
                    acc += row[j] * rates[j];
                }
            } else {
                for j in 0..n {
                    let z = (ui - u[j]) * inv_width;
                    acc += row[j] * (1.0 + gamma * (-z * z).exp()) * rates[j];
                }
            }
            acc
        };

        if n * n >= PARALLEL_THRESHOLD {
            out.par_iter_mut().enumerate().for_each(|(i, o)| *o = row_sum(i));
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                *o = row_sum(i);
            }
        }
        Ok(())
    }

    /// `(Fu)_i = -u_i + (Ju)_i`
    pub fn apply_f(&self, model: &ModelSpec, u: &[f64]) -> Result<Vec<f64>, OperatorError> {
        let mut out = vec![0.0; self.n];
        self.apply_f_into(model, u, &mut out)?;
        Ok(out)
    }

    pub fn apply_f_into(&self, model: &ModelSpec, u: &[f64], out: &mut [f64]) -> Result<(), OperatorError> {
        self.apply_j_into(model, u, out)?;
        for (o, &ui) in out.iter_mut().zip(u) {
            *o -= ui;
        }
        Ok(())
    }
}

/// Free-function form of [`DiscreteOperator::build`].
pub fn build_operator(kernel: &SynapticKernel, grid: &Grid, quad: &Quadrature) -> DiscreteOperator {
    DiscreteOperator::build(kernel, grid, quad)
}

pub fn apply_j(model: &ModelSpec, op: &DiscreteOperator, state: &FieldState) -> Result<Vec<f64>, OperatorError> {
    op.apply_j(model, &state.values)
}

pub fn apply_f(model: &ModelSpec, op: &DiscreteOperator, state: &FieldState) -> Result<Vec<f64>, OperatorError> {
    op.apply_f(model, &state.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::QuadratureRule;
    use crate::model::{FiringRate, Mode};

    fn setup(gamma: f64, firing: FiringRate) -> (ModelSpec, Grid, Quadrature, DiscreteOperator) {
        let model = ModelSpec::new(
            SynapticKernel::exponential(0.5, 1.0),
            firing,
            LearningKernel::default(),
            gamma,
            Mode::WellPosed,
        )
        .unwrap();
        let grid = Grid::interval(-5.0, 5.0, 41).unwrap();
        let quad = Quadrature::new(&grid, QuadratureRule::Trapezoid).unwrap();
        let op = DiscreteOperator::build(&model.kernel, &grid, &quad);
        (model, grid, quad, op)
    }

    #[test]
    fn silent_firing_gives_zero() {
        let (model, grid, _, op) = setup(0.7, FiringRate::silent());
        let u = grid.sample(|x| (x[0]).sin());
        assert!(op.apply_j(&model, &u).unwrap().iter().all(|&v| v == 0.0));
        let f = op.apply_f(&model, &u).unwrap();
        assert!(f.iter().zip(&u).all(|(a, b)| *a == -b));
    }

    #[test]
    fn constant_state_factors_out() {
        let (model, _, _, op) = setup(0.0, FiringRate::sigmoid(1.0, 0.0));
        let c = 0.8;
        let u = vec![c; op.len()];
        let j0 = op.apply_j(&model, &u).unwrap();
        let fc = model.firing.eval(c);
        for (i, v) in j0.iter().enumerate() {
            let s: f64 = op.row(i).iter().sum();
            assert!((v - fc * s).abs() < 1e-15);
        }
        // g(0) = 1, so the plastic weight is exactly (1 + gamma) w
        let j5 = op.apply_j(&model.with_gamma(0.5), &u).unwrap();
        for (a, b) in j5.iter().zip(&j0) {
            assert!((a - 1.5 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_state_residual() {
        let (model, _, _, op) = setup(0.0, FiringRate::sigmoid(1.0, 0.0));
        let f = op.apply_f(&model, &vec![0.0; op.len()]).unwrap();
        for (i, v) in f.iter().enumerate() {
            let s: f64 = op.row(i).iter().sum();
            assert!((v - 0.5 * s).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let (model, _, _, op) = setup(0.0, FiringRate::sigmoid(1.0, 0.0));
        assert_eq!(
            op.apply_j(&model, &[0.0; 3]),
            Err(OperatorError::DimensionMismatch { expected: 41, got: 3 })
        );
    }

    #[test]
    fn center_row_sum_matches_truncated_integral() {
        let grid = Grid::interval(-10.0, 10.0, 2001).unwrap();
        let quad = Quadrature::new(&grid, QuadratureRule::Trapezoid).unwrap();
        let op = DiscreteOperator::build(&SynapticKernel::exponential(0.5, 1.0), &grid, &quad);
        let s: f64 = op.row(1000).iter().sum();
        // closed-form trapezoid sum of a geometric series
        let h = 0.01f64;
        let r = (-h).exp();
        let discrete = 0.5 * h * (1.0 + 2.0 * r * (1.0 - r.powi(1000)) / (1.0 - r)) - 0.5 * h * (-10.0f64).exp();
        assert!((s - discrete).abs() < 1e-12, "{s} vs {discrete}");
        // the kink at the centre costs h^2 / 12 against the integral
        let exact = 1.0 - (-10.0f64).exp();
        assert!((s - exact - h * h / 12.0).abs() < 1e-8, "{s}");

        let simpson = Quadrature::new(&grid, QuadratureRule::Simpson).unwrap();
        let op = DiscreteOperator::build(&SynapticKernel::exponential(0.5, 1.0), &grid, &simpson);
        let s: f64 = op.row(1000).iter().sum();
        assert!((s - exact).abs() < 1e-6, "{s}");
        assert!((s - 0.999_954_6).abs() < 1e-6);
    }

    #[test]
    fn constant_kernel_on_three_nodes() {
        let grid = Grid::interval(0.0, 1.0, 3).unwrap();
        let quad = Quadrature::new(&grid, QuadratureRule::Trapezoid).unwrap();
        let kernel = SynapticKernel::Exponential { amplitude: 1.0, decay: 0.0 };
        let op = DiscreteOperator::build(&kernel, &grid, &quad);
        for i in 0..3 {
            assert!((op.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn ring_operator_is_circulant() {
        let grid = Grid::ring(0.0, 7.0, 35).unwrap();
        let quad = Quadrature::new(&grid, QuadratureRule::Trapezoid).unwrap();
        let op = DiscreteOperator::build(&SynapticKernel::MexicanHat { scale: 1.0 }, &grid, &quad);
        let n = op.len();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(op.row(i)[j], op.row(0)[(j + n - i) % n]);
            }
        }
    }

    #[test]
    fn unit_gain_leaves_the_operator_unchanged() {
        let (_, _, _, op) = setup(0.0, FiringRate::sigmoid(1.0, 0.0));
        assert_eq!(op.with_column_gain(&vec![1.0; op.len()]), op);
    }
}
