//! Uniform tensor-product grids, Newton–Cotes weights and sampled fields.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("axis {axis}: need at least 3 nodes, got {n}")]
    TooFewNodes { axis: usize, n: usize },
    #[error("axis {axis}: bounds [{lo}, {hi}] must be finite with lo < hi")]
    Bounds { axis: usize, lo: f64, hi: f64 },
    #[error("axis {axis}: Simpson's rule needs an even number of intervals ({intervals} given)")]
    SimpsonParity { axis: usize, intervals: usize },
    #[error("field has {got} values but the grid has {expected} nodes")]
    Size { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    #[default]
    Compact,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        Axis { lo, hi, n }
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// A uniform grid on a box in one or two dimensions.
///
/// Nodes are ordered lexicographically with the last axis fastest.
/// On periodic grids the upper bound is identified with the lower one and
/// is not a node.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
    boundary: Boundary,
    spacing: Vec<f64>,
    coords: Vec<f64>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>, boundary: Boundary) -> Result<Self, GridError> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(GridError::Dimension(axes.len()));
        }
        for (k, a) in axes.iter().enumerate() {
            if a.n < 3 {
                return Err(GridError::TooFewNodes { axis: k, n: a.n });
            }
            if !(a.lo.is_finite() && a.hi.is_finite() && a.lo < a.hi) {
                return Err(GridError::Bounds { axis: k, lo: a.lo, hi: a.hi });
            }
        }
        let spacing: Vec<f64> = axes
            .iter()
            .map(|a| match boundary {
                Boundary::Compact => a.length() / (a.n - 1) as f64,
                Boundary::Periodic => a.length() / a.n as f64,
            })
            .collect();
        let dim = axes.len();
        let total: usize = axes.iter().map(|a| a.n).product();
        let mut coords = Vec::with_capacity(total * dim);
        let node = |k: usize, i: usize| -> f64 {
            let a = &axes[k];
            if boundary == Boundary::Compact && i == a.n - 1 {
                a.hi
            } else {
                a.lo + i as f64 * spacing[k]
            }
        };
        if dim == 1 {
            for i in 0..axes[0].n {
                coords.push(node(0, i));
            }
        } else {
            for i in 0..axes[0].n {
                for j in 0..axes[1].n {
                    coords.push(node(0, i));
                    coords.push(node(1, j));
                }
            }
        }
        Ok(Grid { axes, boundary, spacing, coords })
    }

    /// One-dimensional compact interval with `n` nodes.
    pub fn interval(lo: f64, hi: f64, n: usize) -> Result<Self, GridError> {
        Grid::new(vec![Axis::new(lo, hi, n)], Boundary::Compact)
    }

    /// One-dimensional ring `[lo, hi)` with `n` nodes.
    pub fn ring(lo: f64, hi: f64, n: usize) -> Result<Self, GridError> {
        Grid::new(vec![Axis::new(lo, hi, n)], Boundary::Periodic)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Lebesgue measure of the domain.
    pub fn measure(&self) -> f64 {
        self.axes.iter().map(Axis::length).product()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim())
    }

    /// Per-axis node indices of flat index `i`.
    pub fn multi_index(&self, i: usize) -> [usize; 2] {
        if self.dim() == 1 {
            [i, 0]
        } else {
            let n1 = self.axes[1].n;
            [i / n1, i % n1]
        }
    }

    /// Euclidean distance between nodes, minimal-image on periodic grids.
    ///
    /// Computed from index offsets so that it depends only on `i - j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.multi_index(i), self.multi_index(j));
        let mut s = 0.0;
        for k in 0..self.dim() {
            let mut steps = a[k].abs_diff(b[k]);
            if self.boundary == Boundary::Periodic {
                steps = steps.min(self.axes[k].n - steps);
            }
            let d = steps as f64 * self.spacing[k];
            s += d * d;
        }
        s.sqrt()
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.points().map(f).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    #[default]
    Trapezoid,
    Simpson,
}

/// Composite Newton–Cotes weights for a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    rule: QuadratureRule,
    weights: Vec<f64>,
}

impl Quadrature {
    pub fn new(grid: &Grid, rule: QuadratureRule) -> Result<Self, GridError> {
        let per_axis = grid
            .axes()
            .iter()
            .enumerate()
            .map(|(k, a)| axis_weights(a.n, grid.spacing()[k], grid.boundary(), rule, k))
            .collect::<Result<Vec<_>, _>>()?;
        let weights = if per_axis.len() == 1 {
            per_axis.into_iter().next().unwrap()
        } else {
            let (wx, wy) = (&per_axis[0], &per_axis[1]);
            wx.iter().flat_map(|a| wy.iter().map(move |b| a * b)).collect()
        };
        Ok(Quadrature { rule, weights })
    }

    pub fn rule(&self) -> QuadratureRule {
        self.rule
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `sum_j q_j v_j` in ascending order.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(q, v)| q * v).sum()
    }

    pub fn l1_norm(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(q, v)| q * v.abs()).sum()
    }

    pub fn l2_norm(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(q, v)| q * v * v).sum::<f64>().sqrt()
    }
}

fn axis_weights(
    n: usize,
    h: f64,
    boundary: Boundary,
    rule: QuadratureRule,
    axis: usize,
) -> Result<Vec<f64>, GridError> {
    let mut w = vec![h; n];
    match (rule, boundary) {
        (QuadratureRule::Trapezoid, Boundary::Compact) => {
            w[0] = 0.5 * h;
            w[n - 1] = 0.5 * h;
        }
        (QuadratureRule::Trapezoid, Boundary::Periodic) => {}
        (QuadratureRule::Simpson, Boundary::Compact) => {
            if !(n - 1).is_multiple_of(2) {
                return Err(GridError::SimpsonParity { axis, intervals: n - 1 });
            }
            for (i, wi) in w.iter_mut().enumerate() {
                *wi = if i == 0 || i == n - 1 {
                    h / 3.0
                } else if i % 2 == 1 {
                    4.0 * h / 3.0
                } else {
                    2.0 * h / 3.0
                };
            }
        }
        (QuadratureRule::Simpson, Boundary::Periodic) => {
            if !n.is_multiple_of(2) {
                return Err(GridError::SimpsonParity { axis, intervals: n });
            }
            for (i, wi) in w.iter_mut().enumerate() {
                *wi = if i % 2 == 1 { 4.0 * h / 3.0 } else { 2.0 * h / 3.0 };
            }
        }
    }
    Ok(w)
}

/// The field sampled on every grid node at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub values: Vec<f64>,
    pub t: f64,
}

impl FieldState {
    pub fn new(values: Vec<f64>, t: f64) -> Self {
        FieldState { values, t }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same values, new time tag.
    pub fn clone_at(&self, t: f64) -> Self {
        FieldState { values: self.values.clone(), t }
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.values)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_len(&self, grid: &Grid) -> Result<(), GridError> {
        if self.values.len() != grid.len() {
            return Err(GridError::Size { expected: grid.len(), got: self.values.len() });
        }
        Ok(())
    }
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_nodes() {
        let g = Grid::interval(-1.0, 1.0, 5).unwrap();
        assert_eq!(g.spacing()[0], 0.5);
        assert_eq!(g.point(4), &[1.0]);
        let r = Grid::ring(0.0, 1.0, 4).unwrap();
        assert_eq!(r.spacing()[0], 0.25);
        assert_eq!(r.point(3), &[0.75]);
        assert!((r.distance(0, 3) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn grid_rejects_bad_shapes() {
        assert_eq!(Grid::interval(0.0, 1.0, 2), Err(GridError::TooFewNodes { axis: 0, n: 2 }));
        assert!(matches!(Grid::interval(1.0, 0.0, 5), Err(GridError::Bounds { .. })));
        assert!(matches!(Grid::new(vec![], Boundary::Compact), Err(GridError::Dimension(0))));
    }

    #[test]
    fn lexicographic_order_in_two_dimensions() {
        let g = Grid::new(vec![Axis::new(0.0, 1.0, 3), Axis::new(0.0, 2.0, 5)], Boundary::Compact).unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(g.point(1), &[0.0, 0.5]);
        assert_eq!(g.point(5), &[0.5, 0.0]);
        assert_eq!(g.measure(), 2.0);
    }

    #[test]
    fn weights_sum_to_measure() {
        let cases = [
            (Grid::interval(-3.0, 7.0, 101).unwrap(), QuadratureRule::Trapezoid),
            (Grid::interval(-3.0, 7.0, 101).unwrap(), QuadratureRule::Simpson),
            (Grid::ring(0.0, 6.0, 64).unwrap(), QuadratureRule::Trapezoid),
            (Grid::ring(0.0, 6.0, 64).unwrap(), QuadratureRule::Simpson),
            (
                Grid::new(vec![Axis::new(0.0, 1.0, 11), Axis::new(-2.0, 2.0, 21)], Boundary::Compact).unwrap(),
                QuadratureRule::Simpson,
            ),
        ];
        for (g, rule) in cases {
            let q = Quadrature::new(&g, rule).unwrap();
            assert!(q.weights().iter().all(|&w| w > 0.0));
            let s: f64 = q.weights().iter().sum();
            assert!((s - g.measure()).abs() < 1e-12, "{rule:?}: {s}");
        }
    }

    #[test]
    fn simpson_needs_even_interval_count() {
        let g = Grid::interval(0.0, 1.0, 4).unwrap();
        assert!(matches!(Quadrature::new(&g, QuadratureRule::Simpson), Err(GridError::SimpsonParity { .. })));
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let g = Grid::interval(0.0, 2.0, 9).unwrap();
        let q = Quadrature::new(&g, QuadratureRule::Simpson).unwrap();
        let v = g.sample(|x| x[0].powi(3) - x[0]);
        assert!((q.integrate(&v) - 2.0).abs() < 1e-14);
    }
}
