//! Kernels, firing-rate and learning functions, and the constants that enter
//! every well-posedness estimate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Boundary, Grid, Quadrature};

const SQRT_2_OVER_E: f64 = 0.857_763_884_960_706_8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("tabulated kernel has no sample at ({x:?}, {y:?}); interpolation is not supported")]
    InterpolationNotSupported { x: Vec<f64>, y: Vec<f64> },
}

impl ModelError {
    pub(crate) fn invalid(field: &str, message: impl Into<String>) -> Self {
        ModelError::Invalid { field: field.to_string(), message: message.into() }
    }
}

/// Firing-rate function `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FiringRate {
    /// `1 / (1 + exp(-slope (s - threshold)))`
    Sigmoid { slope: f64, threshold: f64 },
    /// `1/2 + atan(scale s) / pi`, the arctangent rescaled into `(0, 1)`.
    ScaledArctan { scale: f64 },
    /// Identity. Unbounded, so only admitted in gain-field mode.
    Linear {},
    /// `clamp(slope (s - threshold), 0, ceiling)`; `ceiling = 0` gives the zero map.
    #[serde(rename = "piecewise-linear-clamped")]
    Clamped { slope: f64, threshold: f64, ceiling: f64 },
}

impl FiringRate {
    pub fn sigmoid(slope: f64, threshold: f64) -> Self {
        FiringRate::Sigmoid { slope, threshold }
    }

    /// A clamped rate whose image is `{0}`.
    pub fn silent() -> Self {
        FiringRate::Clamped { slope: 1.0, threshold: 0.0, ceiling: 0.0 }
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            FiringRate::Sigmoid { slope, threshold } => 1.0 / (1.0 + (-slope * (s - threshold)).exp()),
            FiringRate::ScaledArctan { scale } => 0.5 + (scale * s).atan() / std::f64::consts::PI,
            FiringRate::Linear {} => s,
            FiringRate::Clamped { slope, threshold, ceiling } => {
                (slope * (s - threshold)).clamp(0.0, ceiling)
            }
        }
    }

    /// Supremum of `|f'|`.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            FiringRate::Sigmoid { slope, .. } => slope.abs() / 4.0,
            FiringRate::ScaledArctan { scale } => scale.abs() / std::f64::consts::PI,
            FiringRate::Linear {} => 1.0,
            FiringRate::Clamped { slope, ceiling, .. } => {
                if ceiling > 0.0 {
                    slope.abs()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, FiringRate::Linear {})
    }

    fn validate(&self, errs: &mut Vec<ModelError>) {
        match *self {
            FiringRate::Sigmoid { slope, threshold } => {
                positive("firing.params.slope", slope, errs);
                finite("firing.params.threshold", threshold, errs);
            }
            FiringRate::ScaledArctan { scale } => positive("firing.params.scale", scale, errs),
            FiringRate::Linear {} => {}
            FiringRate::Clamped { slope, threshold, ceiling } => {
                positive("firing.params.slope", slope, errs);
                finite("firing.params.threshold", threshold, errs);
                if !(0.0..=1.0).contains(&ceiling) {
                    errs.push(ModelError::invalid("firing.params.ceiling", "must lie in [0, 1]"));
                }
            }
        }
    }
}

/// Learning kernel `g` of the potential difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LearningKernel {
    /// `exp(-(d / width)^2)`
    Gaussian { width: f64 },
}

impl Default for LearningKernel {
    fn default() -> Self {
        LearningKernel::Gaussian { width: 1.0 }
    }
}

impl LearningKernel {
    #[inline]
    pub fn eval(&self, delta: f64) -> f64 {
        match *self {
            LearningKernel::Gaussian { width } => {
                let z = delta / width;
                (-z * z).exp()
            }
        }
    }

    /// Supremum of `|g'|`, attained at `|d| = width / sqrt(2)`.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            LearningKernel::Gaussian { width } => SQRT_2_OVER_E / width,
        }
    }

    fn validate(&self, errs: &mut Vec<ModelError>) {
        match *self {
            LearningKernel::Gaussian { width } => positive("learning.params.width", width, errs),
        }
    }
}

/// A kernel sampled on a fixed node set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedKernel {
    /// Node coordinates, one entry per node.
    pub nodes: Vec<Vec<f64>>,
    /// `values[i][j] = w(nodes[i], nodes[j])`
    pub values: Vec<Vec<f64>>,
}

impl TabulatedKernel {
    fn index_of(&self, p: &[f64]) -> Option<usize> {
        self.nodes.iter().position(|n| {
            n.len() == p.len() && n.iter().zip(p).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()))
        })
    }
}

/// Synaptic kernel `w(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SynapticKernel {
    /// `amplitude * exp(-decay |x - y|)`
    Exponential { amplitude: f64, decay: f64 },
    /// `(1 - r) exp(-r)` with `r = |x - y| / scale`.
    MexicanHat { scale: f64 },
    Tabulated(TabulatedKernel),
}

impl SynapticKernel {
    pub fn exponential(amplitude: f64, decay: f64) -> Self {
        SynapticKernel::Exponential { amplitude, decay }
    }

    pub fn is_isotropic(&self) -> bool {
        !matches!(self, SynapticKernel::Tabulated(_))
    }

    /// Profile of an isotropic kernel as a function of distance.
    ///
    /// Returns `None` for tabulated kernels.
    #[inline]
    pub fn radial(&self, r: f64) -> Option<f64> {
        match *self {
            SynapticKernel::Exponential { amplitude, decay } => Some(amplitude * (-decay * r).exp()),
            SynapticKernel::MexicanHat { scale } => {
                let z = r / scale;
                Some((1.0 - z) * (-z).exp())
            }
            SynapticKernel::Tabulated(_) => None,
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64, ModelError> {
        match self {
            SynapticKernel::Tabulated(t) => match (t.index_of(x), t.index_of(y)) {
                (Some(i), Some(j)) => Ok(t.values[i][j]),
                _ => Err(ModelError::InterpolationNotSupported { x: x.to_vec(), y: y.to_vec() }),
            },
            _ => {
                let r = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                Ok(self.radial(r).expect("isotropic kernel"))
            }
        }
    }

    /// True when `w(x, y) > 0` for every pair of nodes.
    pub fn is_positive_on(&self, grid: &Grid) -> bool {
        match self {
            SynapticKernel::Exponential { amplitude, .. } => *amplitude > 0.0,
            SynapticKernel::MexicanHat { .. } => false,
            SynapticKernel::Tabulated(t) => t.values.iter().flatten().all(|&v| v > 0.0) && t.nodes.len() == grid.len(),
        }
    }

    fn validate(&self, errs: &mut Vec<ModelError>) {
        match self {
            SynapticKernel::Exponential { amplitude, decay } => {
                finite("kernel.params.amplitude", *amplitude, errs);
                if !(*decay >= 0.0 && decay.is_finite()) {
                    errs.push(ModelError::invalid("kernel.params.decay", "must be a finite value >= 0"));
                }
            }
            SynapticKernel::MexicanHat { scale } => positive("kernel.params.scale", *scale, errs),
            SynapticKernel::Tabulated(t) => {
                let n = t.nodes.len();
                if n == 0 {
                    errs.push(ModelError::invalid("kernel.params.nodes", "must not be empty"));
                }
                if t.values.len() != n || t.values.iter().any(|row| row.len() != n) {
                    errs.push(ModelError::invalid("kernel.params.values", format!("must be a {n}x{n} matrix")));
                }
                if t.values.iter().flatten().any(|v| !v.is_finite()) {
                    errs.push(ModelError::invalid("kernel.params.values", "entries must be finite"));
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// The regime covered by the well-posedness theory: `0 <= f <= 1`.
    #[default]
    WellPosed,
    /// Learned-kernel experiments; admits the linear firing rate.
    GainField,
}

/// The full problem definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kernel: SynapticKernel,
    pub firing: FiringRate,
    #[serde(default)]
    pub learning: LearningKernel,
    pub gamma: f64,
    #[serde(default)]
    pub mode: Mode,
}

impl ModelSpec {
    pub fn new(
        kernel: SynapticKernel,
        firing: FiringRate,
        learning: LearningKernel,
        gamma: f64,
        mode: Mode,
    ) -> Result<Self, Vec<ModelError>> {
        let spec = ModelSpec { kernel, firing, learning, gamma, mode };
        spec.validate()?;
        Ok(spec)
    }

    /// Same model with a different plasticity coefficient.
    pub fn with_gamma(&self, gamma: f64) -> Self {
        ModelSpec { gamma, ..self.clone() }
    }

    /// Collects every violation rather than stopping at the first.
    pub fn validate(&self) -> Result<(), Vec<ModelError>> {
        let mut errs = Vec::new();
        self.kernel.validate(&mut errs);
        self.firing.validate(&mut errs);
        self.learning.validate(&mut errs);
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            errs.push(ModelError::invalid("gamma", "must be a finite value >= 0"));
        }
        if self.mode == Mode::WellPosed && !self.firing.is_bounded() {
            errs.push(ModelError::invalid(
                "firing.kind",
                "the linear firing rate is unbounded and is only admitted when mode = gain-field",
            ));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    /// The plastic weight `w(x,y) [1 + gamma g(u_x - u_y)]`.
    #[inline]
    pub fn plastic_factor(&self, ux: f64, uy: f64) -> f64 {
        1.0 + self.gamma * self.learning.eval(ux - uy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantMethod {
    Analytic,
    GridEstimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstantSources {
    pub c_inf: ConstantMethod,
    pub c_w: ConstantMethod,
    pub k_w: ConstantMethod,
    pub lipschitz_f: ConstantMethod,
    pub lipschitz_g: ConstantMethod,
}

impl ConstantSources {
    fn all(method: ConstantMethod) -> Self {
        ConstantSources { c_inf: method, c_w: method, k_w: method, lipschitz_f: method, lipschitz_g: method }
    }
}

/// Every constant appearing in the well-posedness inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    /// `sup |w|`
    pub c_inf: f64,
    /// `sup_x int |w(x, y)| dy`
    pub c_w: f64,
    /// L1-Lipschitz constant of `x -> w(x, .)`.
    pub k_w: f64,
    /// `L`, Lipschitz constant of the firing rate.
    pub lipschitz_f: f64,
    /// `K`, Lipschitz constant of the learning kernel.
    pub lipschitz_g: f64,
    pub sources: ConstantSources,
}

impl TheoryConstants {
    pub fn new(c_inf: f64, c_w: f64, k_w: f64, lipschitz_f: f64, lipschitz_g: f64) -> Self {
        TheoryConstants {
            c_inf,
            c_w,
            k_w,
            lipschitz_f,
            lipschitz_g,
            sources: ConstantSources::all(ConstantMethod::Analytic),
        }
    }

    /// `q = rho [1 + L C_w + gamma (L + 2K) C_w]`
    pub fn contraction_factor(&self, gamma: f64, rho: f64) -> f64 {
        rho * self.lipschitz_sum(gamma)
    }

    /// Largest segment length whose contraction factor equals `safety`.
    pub fn max_segment_length(&self, gamma: f64, safety: f64) -> f64 {
        assert!(safety > 0.0 && safety < 1.0, "safety must lie in (0, 1)");
        safety / self.lipschitz_sum(gamma)
    }

    /// `1 + L C_w + gamma (L + 2K) C_w`
    fn lipschitz_sum(&self, gamma: f64) -> f64 {
        let l = self.lipschitz_f;
        let k = self.lipschitz_g;
        1.0 + l * self.c_w + gamma * (l + 2.0 * k) * self.c_w
    }

    /// `max{ ||u0||_inf, (1 + gamma) C_w }`
    pub fn global_bound(&self, gamma: f64, u0_sup: f64) -> f64 {
        u0_sup.max(((1.0 + gamma) * self.c_w).abs())
    }

    /// Replaces `C_w` (used for kernels rescaled after construction).
    pub fn with_c_w(mut self, c_w: f64) -> Self {
        self.c_w = c_w;
        self.sources.c_w = ConstantMethod::GridEstimated;
        self
    }
}

/// Free-function form of [`TheoryConstants::contraction_factor`].
pub fn contraction_factor(constants: &TheoryConstants, gamma: f64, rho: f64) -> f64 {
    constants.contraction_factor(gamma, rho)
}

/// Free-function form of [`TheoryConstants::max_segment_length`].
pub fn max_segment_length(constants: &TheoryConstants, gamma: f64, safety: f64) -> f64 {
    constants.max_segment_length(gamma, safety)
}

/// Constants as suprema over the grid only.
///
/// `C_inf`, `L` and `K` are sampled suprema and therefore never exceed the
/// analytic values. `C_w` is a quadrature row sum, which for kernels with a
/// kink at the diagonal overshoots the exact integral by `O(h^2)`.
pub fn grid_estimates(model: &ModelSpec, grid: &Grid, quad: &Quadrature) -> TheoryConstants {
    let n = grid.len();
    let mut c_inf = 0.0f64;
    let mut rows = vec![0.0f64; n];
    for (i, row) in rows.iter_mut().enumerate() {
        let mut s = 0.0;
        for j in 0..n {
            let w = kernel_on_grid(&model.kernel, grid, i, j);
            c_inf = c_inf.max(w.abs());
            s += quad.weights()[j] * w.abs();
        }
        *row = s;
    }
    let c_w = rows.iter().cloned().fold(0.0, f64::max);

    // L1 difference quotient between adjacent nodes along the first axis.
    let mut k_w = 0.0f64;
    if grid.dim() == 1 {
        let h = grid.spacing()[0];
        for i in 0..n - 1 {
            let mut s = 0.0;
            for j in 0..n {
                let d = kernel_on_grid(&model.kernel, grid, i + 1, j) - kernel_on_grid(&model.kernel, grid, i, j);
                s += quad.weights()[j] * d.abs();
            }
            k_w = k_w.max(s / h);
        }
    } else {
        let stride = grid.axes()[1].n;
        let h = grid.spacing()[0];
        for i in 0..n.saturating_sub(stride) {
            let mut s = 0.0;
            for j in 0..n {
                let d = kernel_on_grid(&model.kernel, grid, i + stride, j) - kernel_on_grid(&model.kernel, grid, i, j);
                s += quad.weights()[j] * d.abs();
            }
            k_w = k_w.max(s / h);
        }
    }

    TheoryConstants {
        c_inf,
        c_w,
        k_w,
        lipschitz_f: sampled_lipschitz(|s| model.firing.eval(s), -40.0, 40.0, 80_001),
        lipschitz_g: sampled_lipschitz(|d| model.learning.eval(d), -20.0, 20.0, 40_001),
        sources: ConstantSources::all(ConstantMethod::GridEstimated),
    }
}

/// Analytic constants where a closed form exists on the grid's domain,
/// grid suprema otherwise.
pub fn compute_constants(model: &ModelSpec, grid: &Grid, quad: &Quadrature) -> TheoryConstants {
    let mut c = grid_estimates(model, grid, quad);
    c.lipschitz_f = model.firing.lipschitz();
    c.sources.lipschitz_f = ConstantMethod::Analytic;
    c.lipschitz_g = model.learning.lipschitz();
    c.sources.lipschitz_g = ConstantMethod::Analytic;

    match model.kernel {
        SynapticKernel::Exponential { amplitude, decay } => {
            c.c_inf = amplitude.abs();
            c.sources.c_inf = ConstantMethod::Analytic;
            if grid.dim() == 1 {
                // The window integral is largest at the centre (or anywhere on a ring).
                let half = 0.5 * grid.axes()[0].length();
                let tail = (-decay * half).exp();
                c.c_w = if decay > 0.0 {
                    2.0 * amplitude.abs() / decay * (1.0 - tail)
                } else {
                    2.0 * amplitude.abs() * half
                };
                c.sources.c_w = ConstantMethod::Analytic;
                // total variation of the profile over the centred window
                c.k_w = 2.0 * amplitude.abs() * (1.0 - tail);
                c.sources.k_w = ConstantMethod::Analytic;
            }
        }
        SynapticKernel::MexicanHat { scale } => {
            c.c_inf = 1.0;
            c.sources.c_inf = ConstantMethod::Analytic;
            if grid.dim() == 1 && grid.boundary() == Boundary::Periodic {
                let half = 0.5 * grid.axes()[0].length();
                c.c_w = 2.0 * scale * mexican_hat_abs_integral(half / scale);
                c.sources.c_w = ConstantMethod::Analytic;
            }
        }
        SynapticKernel::Tabulated(_) => {}
    }
    c
}

/// `int_0^r |1 - t| e^{-t} dt`
fn mexican_hat_abs_integral(r: f64) -> f64 {
    if r <= 1.0 {
        r * (-r).exp()
    } else {
        2.0 / std::f64::consts::E - r * (-r).exp()
    }
}

/// Kernel value between grid nodes `i` and `j`, minimal-image on rings.
#[inline]
pub(crate) fn kernel_on_grid(kernel: &SynapticKernel, grid: &Grid, i: usize, j: usize) -> f64 {
    match kernel {
        SynapticKernel::Tabulated(t) => t.values[i][j],
        _ => kernel.radial(grid.distance(i, j)).expect("isotropic kernel"),
    }
}

/// Largest difference quotient of `f` over a uniform sample of `[lo, hi]`.
pub fn sampled_lipschitz(f: impl Fn(f64) -> f64, lo: f64, hi: f64, samples: usize) -> f64 {
    let h = (hi - lo) / (samples - 1) as f64;
    let mut prev = f(lo);
    let mut best = 0.0f64;
    for k in 1..samples {
        let cur = f(lo + k as f64 * h);
        best = best.max((cur - prev).abs() / h);
        prev = cur;
    }
    best
}

fn positive(field: &str, v: f64, errs: &mut Vec<ModelError>) {
    if !(v > 0.0 && v.is_finite()) {
        errs.push(ModelError::invalid(field, "must be a finite value > 0"));
    }
}

fn finite(field: &str, v: f64, errs: &mut Vec<ModelError>) {
    if !v.is_finite() {
        errs.push(ModelError::invalid(field, "must be finite"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Axis, QuadratureRule};

    fn line(lo: f64, hi: f64, n: usize) -> (Grid, Quadrature) {
        let g = Grid::new(vec![Axis::new(lo, hi, n)], Boundary::Compact).unwrap();
        let q = Quadrature::new(&g, QuadratureRule::Trapezoid).unwrap();
        (g, q)
    }

    fn default_model(gamma: f64) -> ModelSpec {
        ModelSpec::new(
            SynapticKernel::exponential(0.5, 1.0),
            FiringRate::sigmoid(1.0, 0.0),
            LearningKernel::default(),
            gamma,
            Mode::WellPosed,
        )
        .unwrap()
    }

    #[test]
    fn firing_rate_examples() {
        let f = FiringRate::sigmoid(1.0, 0.0);
        assert_eq!(f.eval(0.0), 0.5);
        assert!(f.eval(40.0) > 1.0 - 1e-12);
        assert_eq!(FiringRate::Linear {}.eval(0.3), 0.3);
        assert_eq!(FiringRate::silent().eval(12.0), 0.0);
        let a = FiringRate::ScaledArctan { scale: 2.0 };
        assert!((a.eval(0.0) - 0.5).abs() < 1e-15);
        assert!(a.eval(-1e9) >= 0.0 && a.eval(1e9) <= 1.0);
    }

    #[test]
    fn learning_kernel_examples() {
        let g = LearningKernel::default();
        assert_eq!(g.eval(0.0), 1.0);
        assert!((g.eval(1.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((g.eval(1.0) - 0.367_879).abs() < 1e-6);
        assert_eq!(g.eval(-1.0), g.eval(1.0));
        assert!(g.eval(40.0) < 1e-300);
    }

    #[test]
    fn kernel_examples() {
        let w = SynapticKernel::exponential(0.5, 1.0);
        assert_eq!(w.eval(&[0.3], &[0.3]).unwrap(), 0.5);
        let v = w.eval(&[0.0], &[1.0]).unwrap();
        assert!((v - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.18394).abs() < 1e-5);
        let m = SynapticKernel::MexicanHat { scale: 1.0 };
        assert_eq!(m.eval(&[2.0], &[1.0]).unwrap(), 0.0);
        assert_eq!(m.eval(&[0.0, 0.0], &[0.6, 0.8]).unwrap(), 0.0);
    }

    #[test]
    fn tabulated_kernel_rejects_off_grid_points() {
        let t = SynapticKernel::Tabulated(TabulatedKernel {
            nodes: vec![vec![0.0], vec![1.0]],
            values: vec![vec![1.0, 2.0], vec![3.0, 4.0]],
        });
        assert_eq!(t.eval(&[1.0], &[0.0]).unwrap(), 3.0);
        assert!(matches!(t.eval(&[0.5], &[0.0]), Err(ModelError::InterpolationNotSupported { .. })));
    }

    #[test]
    fn analytic_lipschitz_constants() {
        assert_eq!(FiringRate::sigmoid(1.0, 0.0).lipschitz(), 0.25);
        let k = LearningKernel::default().lipschitz();
        assert!((k - (2.0 / std::f64::consts::E).sqrt()).abs() < 1e-15);
        assert!((k - 0.857_763).abs() < 1e-6);
    }

    #[test]
    fn exponential_c_w_on_the_real_line_limit() {
        // [-200, 200] is the real line to double precision for decay 1.
        let (g, q) = line(-200.0, 200.0, 11);
        let c = compute_constants(&default_model(1.0), &g, &q);
        assert!((c.c_w - 1.0).abs() < 1e-15);
        assert_eq!(c.sources.c_w, ConstantMethod::Analytic);
    }

    #[test]
    fn contraction_factor_examples() {
        let c = TheoryConstants::new(0.5, 1.0, 1.0, 0.25, SQRT_2_OVER_E);
        // 0.1 * (1 + 0.25 + 0.25 + 2 * 0.857763884960707)
        assert!((c.contraction_factor(1.0, 0.1) - 0.321_552_776_992_141_4).abs() < 1e-12);
        assert!((c.contraction_factor(0.0, 0.1) - 0.125).abs() < 1e-15);
        assert_eq!(c.contraction_factor(1.0, 0.0), 0.0);
    }

    #[test]
    fn max_segment_length_examples() {
        let c = TheoryConstants::new(0.5, 1.0, 1.0, 0.25, SQRT_2_OVER_E);
        let rho = c.max_segment_length(1.0, 0.5);
        assert!((rho - 0.5 / 3.215_527_769_921_414).abs() < 1e-12);
        assert!((rho - 0.155_496).abs() < 1e-6);
        assert!((c.contraction_factor(1.0, rho) - 0.5).abs() < 1e-15);
        assert!((c.max_segment_length(0.0, 0.5) - 0.4).abs() < 1e-15);
        let mut last = f64::INFINITY;
        for gamma in [0.0, 1.0, 10.0, 100.0, 1e4] {
            let r = c.max_segment_length(gamma, 0.5);
            assert!(r < last);
            last = r;
        }
    }

    #[test]
    fn global_bound_example() {
        let c = TheoryConstants::new(0.5, 1.0, 1.0, 0.25, SQRT_2_OVER_E);
        assert_eq!(c.global_bound(1.0, 0.2), 2.0);
        assert_eq!(c.global_bound(1.0, 5.0), 5.0);
    }

    #[test]
    fn linear_firing_requires_gain_field_mode() {
        let err = ModelSpec::new(
            SynapticKernel::exponential(0.5, 1.0),
            FiringRate::Linear {},
            LearningKernel::default(),
            0.0,
            Mode::WellPosed,
        )
        .unwrap_err();
        assert!(err.iter().any(|e| e.to_string().contains("gain-field")));
        assert!(ModelSpec::new(
            SynapticKernel::exponential(0.5, 1.0),
            FiringRate::Linear {},
            LearningKernel::default(),
            0.0,
            Mode::GainField,
        )
        .is_ok());
    }

    #[test]
    fn validation_collects_every_violation() {
        let errs = ModelSpec::new(
            SynapticKernel::exponential(0.5, -1.0),
            FiringRate::sigmoid(0.0, 0.0),
            LearningKernel::Gaussian { width: 0.0 },
            -0.1,
            Mode::WellPosed,
        )
        .unwrap_err();
        assert_eq!(errs.len(), 4);
    }

    #[test]
    fn grid_c_w_converges_to_analytic() {
        let model = default_model(0.0);
        let analytic = 1.0 - (-10.0f64).exp();
        let mut last_err = f64::INFINITY;
        for n in [251, 501, 1001, 2001] {
            let (g, q) = line(-10.0, 10.0, n);
            let est = grid_estimates(&model, &g, &q);
            let exact = compute_constants(&model, &g, &q);
            assert!((exact.c_w - analytic).abs() < 1e-15);
            let err = (est.c_w - analytic).abs();
            assert!(err < last_err);
            last_err = err;
            if n == 2001 {
                assert!(err / analytic < 0.01);
            }
            // sampled suprema stay below their closed forms
            assert!(est.c_inf <= exact.c_inf + 1e-12);
            assert!(est.lipschitz_f <= exact.lipschitz_f + 1e-12);
            assert!(est.lipschitz_g <= exact.lipschitz_g + 1e-12);
            assert!(est.k_w <= exact.k_w + 1e-12);
        }
    }

    #[test]
    fn model_spec_json_shape() {
        let m = default_model(0.5);
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["kernel"]["kind"], "exponential");
        assert_eq!(v["kernel"]["params"]["decay"], 1.0);
        assert_eq!(v["firing"]["kind"], "sigmoid");
        assert_eq!(v["learning"]["params"]["width"], 1.0);
        assert_eq!(v["mode"], "well-posed");
        let back: ModelSpec = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
        let lin = serde_json::json!({"kind": "linear", "params": {}});
        assert_eq!(serde_json::from_value::<FiringRate>(lin).unwrap(), FiringRate::Linear {});
    }
}
