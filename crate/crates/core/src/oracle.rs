//! Brute-force ground truth for `Q_n` on a one- or two-dimensional parameter
//! grid, via the implicit characterisation
//!
//! ```text
//! Q_n(dθ) ∝ Q₀(dθ) · exp(−V_{Q_n}(θ) / λ),
//! V_Q(θ) = ∫ κ₀(θ, ϑ) dQ(ϑ) − ⟨μ(P_n), μ(P̄_θ)⟩,
//! κ₀(θ, ϑ) = ⟨μ(P̄_θ), μ(P̄_ϑ)⟩,
//! ```
//!
//! solved by the damped iteration `q ← (1−γ) q + γ T(q)` with
//! `T(q) = normalise(q₀ · exp(−V_q/λ))`.

use alloc::vec;
use alloc::vec::Vec;

use crate::flow::ReferenceMeasure;
use crate::kernels::SteinContext;
use crate::math;
use crate::models::ForwardMap;
use crate::par;
use crate::{Error, Result};

/// Tensor grid of cell centres over a box in `R^p`, `p ≤ 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Vec<f64>>,
}

impl Grid {
    /// Uniform axes given as `(low, high, points)`; points include both ends.
    pub fn uniform(axes: &[(f64, f64, usize)]) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::UnsupportedModel("the grid oracle supports one or two parameters"));
        }
        let mut out = Vec::with_capacity(axes.len());
        for &(lo, hi, n) in axes {
            if n < 2 || !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::argument("grid axis needs at least two points over a nonempty interval"));
            }
            let h = (hi - lo) / (n - 1) as f64;
            out.push((0..n).map(|k| lo + k as f64 * h).collect());
        }
        Ok(Self { axes: out })
    }

    /// `points` per axis over `mean ± width · sd` of a Gaussian reference.
    pub fn around(mean: &[f64], sd: &[f64], width: f64, points: usize) -> Result<Self> {
        let axes: Vec<(f64, f64, usize)> = mean
            .iter()
            .zip(sd)
            .map(|(m, s)| (m - width * s, m + width * s, points))
            .collect();
        Self::uniform(&axes)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, k: usize) -> &[f64] {
        &self.axes[k]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, k: usize) -> f64 {
        self.axes[k][1] - self.axes[k][0]
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.spacing(k)).product()
    }

    /// Point `k` in row-major order (last axis fastest).
    pub fn point(&self, k: usize) -> Vec<f64> {
        match self.axes.len() {
            1 => vec![self.axes[0][k]],
            _ => {
                let m = self.axes[1].len();
                vec![self.axes[0][k / m], self.axes[1][k % m]]
            }
        }
    }

    /// Cell boundaries along axis `k`: midpoints between centres, with the
    /// outer cells extended by half a spacing.
    pub fn edges(&self, k: usize) -> Vec<f64> {
        let a = &self.axes[k];
        let h = self.spacing(k);
        let mut e = Vec::with_capacity(a.len() + 1);
        e.push(a[0] - 0.5 * h);
        e.extend(a.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        e.push(a[a.len() - 1] + 0.5 * h);
        e
    }
}

/// Nonnegative masses on a [`Grid`] summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    grid: Grid,
    weights: Vec<f64>,
}

impl GridMeasure {
    pub fn new(grid: Grid, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::shape("one weight per grid point is required"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::argument("grid weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::argument("grid weights have zero mass"));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(Self { grid, weights })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Density value (mass / cell volume) at every grid point.
    pub fn densities(&self) -> Vec<f64> {
        let v = self.grid.cell_volume();
        self.weights.iter().map(|w| w / v).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.grid.dim()];
        for (k, w) in self.weights.iter().enumerate() {
            for (a, x) in m.iter_mut().zip(self.grid.point(k)) {
                *a += w * x;
            }
        }
        m
    }

    /// Row-major `p × p` covariance.
    pub fn covariance(&self) -> Vec<f64> {
        let p = self.grid.dim();
        let m = self.mean();
        let mut c = vec![0.0; p * p];
        for (k, w) in self.weights.iter().enumerate() {
            let x = self.grid.point(k);
            for a in 0..p {
                for b in 0..p {
                    c[a * p + b] += w * (x[a] - m[a]) * (x[b] - m[b]);
                }
            }
        }
        c
    }

    /// Marginal masses along axis `k`.
    pub fn marginal(&self, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.axis(k).len()];
        let m = if self.grid.dim() == 2 { self.grid.axis(1).len() } else { 1 };
        for (idx, w) in self.weights.iter().enumerate() {
            let pos = match (self.grid.dim(), k) {
                (1, _) => idx,
                (_, 0) => idx / m,
                _ => idx % m,
            };
            out[pos] += w;
        }
        out
    }

    pub fn total_variation(&self, other: &GridMeasure) -> Result<f64> {
        if self.weights.len() != other.weights.len() {
            return Err(Error::shape("measures live on different grids"));
        }
        Ok(0.5
            * self
                .weights
                .iter()
                .zip(&other.weights)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }
}

/// Precomputed quantities of the fixed-point map on a grid: reference masses,
/// data-fit term `a(θ_k) = ⟨μ(P_n), μ(P̄_{θ_k})⟩` and the `G × G` matrix
/// `κ₀(θ_k, θ_l)`.
#[derive(Debug, Clone)]
pub struct OracleProblem {
    grid: Grid,
    log_q0: Vec<f64>,
    data_fit: Vec<f64>,
    cross: Vec<f64>,
}

impl OracleProblem {
    pub fn new<F: ForwardMap, R: ReferenceMeasure + ?Sized>(
        ctx: &SteinContext<'_, F>,
        reference: &R,
        grid: Grid,
    ) -> Result<Self> {
        if grid.dim() != ctx.param_dim() || reference.dim() != ctx.param_dim() {
            return Err(Error::shape("grid, reference and model dimensions disagree"));
        }
        let g = grid.len();
        let evals = par::map_indexed(g, |k| {
            ctx.model()
                .forward()
                .evaluate(&grid.point(k), ctx.support(), false)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let data_fit: Vec<f64> = evals.iter().map(|e| ctx.data_fit(e)).collect();
        let rows = par::map_indexed(g, |k| {
            (0..g)
                .map(|l| ctx.cross_term(&evals[k], &evals[l]))
                .collect::<Vec<f64>>()
        });
        let cross: Vec<f64> = rows.into_iter().flatten().collect();
        let log_q0 = (0..g).map(|k| reference.log_density(&grid.point(k))).collect();
        Ok(Self {
            grid,
            log_q0,
            data_fit,
            cross,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Discretised `Q₀` (masses proportional to `q₀` at cell centres).
    pub fn reference_weights(&self) -> Vec<f64> {
        normalise_log(&self.log_q0)
    }

    /// `V_q(θ_k) = Σ_l q_l κ₀(θ_k, θ_l) − a(θ_k)` for every grid point.
    pub fn potential(&self, q: &[f64]) -> Vec<f64> {
        let g = self.grid.len();
        par::map_indexed(g, |k| {
            let row = &self.cross[k * g..(k + 1) * g];
            row.iter().zip(q).map(|(c, w)| c * w).sum::<f64>() - self.data_fit[k]
        })
    }

    /// `T(q) = normalise(q₀ · exp(−V_q/λ))`, computed in log space.
    pub fn update(&self, q: &[f64], lambda: f64) -> Vec<f64> {
        let v = self.potential(q);
        let logs: Vec<f64> = self.log_q0.iter().zip(&v).map(|(l, v)| l - v / lambda).collect();
        normalise_log(&logs)
    }

    /// `‖q − T(q)‖_∞`.
    pub fn residual(&self, q: &[f64], lambda: f64) -> f64 {
        self.update(q, lambda)
            .iter()
            .zip(q)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn normalise_log(logs: &[f64]) -> Vec<f64> {
    let lse = math::log_sum_exp(logs);
    logs.iter().map(|l| math::exp(l - lse)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointConfig {
    pub lambda: f64,
    /// Initial damping `γ ∈ (0, 1]`.
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Halve `γ` whenever the residual grows (floor `1e-6`).
    pub adaptive: bool,
}

impl FixedPointConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            damping: 0.5,
            tol: 1e-8,
            max_iter: 100_000,
            adaptive: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub measure: GridMeasure,
    pub iterations: usize,
    /// `‖q − T(q)‖_∞` at return.
    pub residual: f64,
    pub history: Vec<f64>,
}

/// Damped fixed-point iteration from `init` (default: discretised `Q₀`).
pub fn solve_fixed_point(problem: &OracleProblem, cfg: &FixedPointConfig, init: Option<&[f64]>) -> Result<FixedPointResult> {
    if !(cfg.lambda.is_finite() && cfg.lambda > 0.0) {
        return Err(Error::argument("lambda must be positive"));
    }
    if !(cfg.damping > 0.0 && cfg.damping <= 1.0) {
        return Err(Error::argument("damping must lie in (0, 1]"));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::argument("tolerance must be positive"));
    }
    let mut q = match init {
        Some(w) => GridMeasure::new(problem.grid.clone(), w.to_vec())?.weights,
        None => problem.reference_weights(),
    };
    let mut gamma = cfg.damping;
    let mut history = Vec::new();
    let mut previous = f64::INFINITY;
    for it in 0..cfg.max_iter {
        let t = problem.update(&q, cfg.lambda);
        let residual = t.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        history.push(residual);
        if residual < cfg.tol {
            return Ok(FixedPointResult {
                measure: GridMeasure::new(problem.grid.clone(), q)?,
                iterations: it,
                residual,
                history,
            });
        }
        if cfg.adaptive && residual > previous {
            gamma = (0.5 * gamma).max(1e-6);
        }
        previous = residual;
        for (a, b) in q.iter_mut().zip(&t) {
            *a = (1.0 - gamma) * *a + gamma * b;
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        residual: *history.last().unwrap_or(&f64::INFINITY),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::flow::GaussianReference;
    use crate::kernels::KernelConfig;
    use crate::models::{GaussianObsModel, LocationModel};

    #[test]
    fn grid_geometry() {
        let g = Grid::uniform(&[(-1.0, 1.0, 5), (0.0, 2.0, 3)]).unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(g.point(4), vec![-0.5, 1.0]);
        assert_eq!(g.point(5), vec![-0.5, 2.0]);
        assert_eq!(g.cell_volume(), 0.5);
        assert_eq!(g.edges(1), vec![-0.5, 0.5, 1.5, 2.5]);
        assert!(Grid::uniform(&[(0.0, 1.0, 3); 3]).is_err());
    }

    #[test]
    fn measure_moments_and_marginals() {
        let g = Grid::uniform(&[(0.0, 1.0, 2), (0.0, 1.0, 2)]).unwrap();
        let m = GridMeasure::new(g, vec![1.0, 0.0, 0.0, 3.0]).unwrap();
        assert_eq!(m.mean(), vec![0.75, 0.75]);
        assert_eq!(m.marginal(0), vec![0.25, 0.75]);
        assert_eq!(m.marginal(1), vec![0.25, 0.75]);
    }

    #[test]
    fn empty_data_large_lambda_recovers_reference() {
        let data = Dataset::empty(1);
        let model = GaussianObsModel::new(LocationModel { dim: 1 }, vec![1.0]).unwrap();
        let ctx = SteinContext::new(&data, &model, KernelConfig::zero_limit(vec![1.0]).unwrap()).unwrap();
        let r = GaussianReference::standard(1);
        let prob = OracleProblem::new(&ctx, &r, Grid::around(&[0.0], &[1.0], 5.0, 101).unwrap()).unwrap();
        let res = solve_fixed_point(&prob, &FixedPointConfig::new(1e3), None).unwrap();
        let q0 = GridMeasure::new(prob.grid().clone(), prob.reference_weights()).unwrap();
        assert!(res.measure.total_variation(&q0).unwrap() < 1e-3);
    }

    #[test]
    fn bad_damping_rejected() {
        let data = Dataset::empty(1);
        let model = GaussianObsModel::new(LocationModel { dim: 1 }, vec![1.0]).unwrap();
        let ctx = SteinContext::new(&data, &model, KernelConfig::zero_limit(vec![1.0]).unwrap()).unwrap();
        let r = GaussianReference::standard(1);
        let prob = OracleProblem::new(&ctx, &r, Grid::uniform(&[(-1.0, 1.0, 5)]).unwrap()).unwrap();
        let mut cfg = FixedPointConfig::new(1.0);
        cfg.damping = 0.0;
        assert!(solve_fixed_point(&prob, &cfg, None).is_err());
    }
}
