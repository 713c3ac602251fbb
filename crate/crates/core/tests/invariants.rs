//! Cross-module checks against independent computations.

use pcuq_core::dynamics::{integrate, LvParams, OdeSystem};
use pcuq_core::flow::{self, Ensemble, FlowConfig, FlowInit, GaussianReference, ReferenceMeasure};
use pcuq_core::kernels::{CovariateBandwidth, KernelConfig, SteinContext};
use pcuq_core::mcmc::{self, ChainConfig, ChainInit, JointParticleTarget, LogTarget};
use pcuq_core::models::{ForwardMap, GaussianObsModel, LinearModel, LocationModel};
use pcuq_core::oracle::{Grid, OracleProblem};
use pcuq_core::{Dataset, Result};
use proptest::prelude::*;

fn linear_setup() -> (Dataset, GaussianObsModel<LinearModel>, KernelConfig) {
    let xs = vec![0.3, 0.7, 0.7, 1.2, 1.9, 2.4];
    let ys = vec![0.2, -0.1, 0.5, 0.1, 0.4, -0.6, 1.0, -0.3, 1.1, -0.9, 1.6, -1.0];
    let data = Dataset::new(xs, ys, 2).unwrap();
    let model = GaussianObsModel::new(LinearModel { dim: 2 }, vec![0.5, 0.8]).unwrap();
    let kernel = KernelConfig::new(vec![0.6, 0.9], CovariateBandwidth::Finite(0.7)).unwrap();
    (data, model, kernel)
}

#[test]
fn drift_is_lambda_times_joint_gradient() {
    let (data, model, kernel) = linear_setup();
    let ctx = SteinContext::new(&data, &model, kernel).unwrap();
    let reference = GaussianReference::new(vec![0.2, -0.1], vec![1.5, 0.7]).unwrap();
    let n = 4;
    let lambda = 0.3;
    let theta = vec![0.1, -0.4, 0.9, 0.3, -0.7, 1.1, 0.5, 0.0];
    let target = JointParticleTarget::new(&ctx, &reference, lambda, n).unwrap();
    let (_, grad) = target.log_density_grad(&theta).unwrap();
    let ensemble = Ensemble::new(2, theta).unwrap();
    let batched = flow::drifts(&ensemble, &ctx, &reference, lambda).unwrap();
    for i in 0..n {
        let single = flow::drift(&ensemble, i, &ctx, &reference, lambda).unwrap();
        for k in 0..2 {
            let want = lambda * grad[i * 2 + k];
            assert!((single[k] - want).abs() < 1e-12 * (1.0 + want.abs()));
            assert!((batched[i * 2 + k] - want).abs() < 1e-12 * (1.0 + want.abs()));
        }
    }
}

#[test]
fn oracle_potential_matches_stein_kernel_up_to_a_constant() {
    let xs = vec![0.0; 6];
    let data = Dataset::new(xs, vec![0.3, -0.2, 1.1, 0.6, 0.8, -0.5], 1).unwrap();
    let model = GaussianObsModel::new(LocationModel { dim: 1 }, vec![1.0]).unwrap();
    let ctx = SteinContext::new(&data, &model, KernelConfig::zero_limit(vec![1.0]).unwrap()).unwrap();
    let reference = GaussianReference::standard(1);
    let grid = Grid::around(&[0.0], &[1.0], 4.0, 41).unwrap();
    let problem = OracleProblem::new(&ctx, &reference, grid.clone()).unwrap();
    let q: Vec<f64> = {
        let w: Vec<f64> = (0..grid.len()).map(|k| 1.0 + (k as f64 * 0.37).sin().abs()).collect();
        let z: f64 = w.iter().sum();
        w.iter().map(|v| v / z).collect()
    };
    let v = problem.potential(&q);
    // ∫κ(θ_k, ·) dq differs from the potential only by terms free of θ_k.
    let direct: Vec<f64> = (0..grid.len())
        .map(|k| {
            (0..grid.len())
                .map(|l| q[l] * ctx.stein_kernel(&grid.point(k), &grid.point(l)).unwrap())
                .sum()
        })
        .collect();
    let offset = direct[0] - v[0];
    for k in 0..grid.len() {
        assert!((direct[k] - v[k] - offset).abs() < 1e-12, "grid point {k}");
    }
}

/// `u'' = −u` as a first-order system, with solution `(cos x, −sin x)`.
struct Oscillator;

impl OdeSystem for Oscillator {
    fn state_dim(&self) -> usize {
        2
    }
    fn rate_dim(&self) -> usize {
        1
    }
    fn initial_state(&self) -> &[f64] {
        &[1.0, 0.0]
    }
    fn rhs(&self, _x: f64, u: &[f64], rates: &[f64], du: &mut [f64]) {
        du[0] = rates[0] * u[1];
        du[1] = -rates[0] * u[0];
    }
    fn state_jacobian(&self, _x: f64, _u: &[f64], rates: &[f64], jac: &mut [f64]) {
        jac[1] = rates[0];
        jac[2] = -rates[0];
    }
    fn rate_jacobian(&self, _x: f64, u: &[f64], _rates: &[f64], jac: &mut [f64]) {
        jac[0] = u[1];
        jac[1] = -u[0];
    }
}

#[test]
fn rk4_converges_at_fourth_order() {
    let t = [5.0];
    let err = |h: f64| {
        let traj = integrate(&Oscillator, &[1.0], &t, None, h).unwrap();
        let s = traj.state(0);
        ((s[0] - 5.0f64.cos()).powi(2) + (s[1] + 5.0f64.sin()).powi(2)).sqrt()
    };
    let (e1, e2) = (err(0.1), err(0.05));
    let order = (e1 / e2).log2();
    assert!((order - 4.0).abs() < 0.2, "observed order {order}");
}

#[test]
fn rate_sensitivities_match_finite_differences() {
    // u(x) = (cos ωx, −sin ωx), so ∂u/∂ω = (−x sin ωx, −x cos ωx).
    let x = 3.0;
    let omega = 1.3;
    let traj = integrate(&Oscillator, &[omega], &[x], Some(&[1.0]), 1e-3).unwrap();
    let s = traj.sensitivity(0).unwrap();
    let want = [-x * (omega * x).sin(), -x * (omega * x).cos()];
    for k in 0..2 {
        assert!((s[k] - want[k]).abs() < 1e-8, "{} vs {}", s[k], want[k]);
    }
}

#[test]
fn lv_forward_sensitivities_match_finite_differences() {
    let map = LvParams::preset().forward_map().unwrap();
    let times: Vec<f64> = (0..=20).map(|k| k as f64).collect();
    let theta = [-2.1, -3.8];
    let eval = map.evaluate(&theta, &times, true).unwrap();
    let h = 1e-5;
    for j in 0..2 {
        let mut up = theta;
        let mut dn = theta;
        up[j] += h;
        dn[j] -= h;
        let eu = map.evaluate(&up, &times, false).unwrap();
        let ed = map.evaluate(&dn, &times, false).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for t in 0..times.len() {
            let sens = eval.sensitivity(t).unwrap();
            for i in 0..2 {
                let fd = (eu.value(t)[i] - ed.value(t)[i]) / (2.0 * h);
                num += (sens[i * 2 + j] - fd).powi(2);
                den += fd * fd;
            }
        }
        assert!((num / den).sqrt() < 1e-4);
    }
}

#[test]
fn flow_without_data_relaxes_to_the_reference() {
    let data = Dataset::empty(1);
    let model = GaussianObsModel::new(LocationModel { dim: 1 }, vec![1.0]).unwrap();
    let ctx = SteinContext::new(&data, &model, KernelConfig::zero_limit(vec![1.0]).unwrap()).unwrap();
    let reference = GaussianReference::new(vec![1.5], vec![0.5]).unwrap();
    let mut cfg = FlowConfig::new(1.0, 400, 3000);
    cfg.step = 1e-2;
    cfg.init = FlowInit::WarmStart(vec![-2.0]);
    cfg.burn_in = 0.5;
    cfg.thin = 50;
    let out = flow::run(&ctx, &reference, &cfg, 4).unwrap();
    let m = out.retained.iter().sum::<f64>() / out.retained.len() as f64;
    let v = out.retained.iter().map(|x| (x - m).powi(2)).sum::<f64>() / out.retained.len() as f64;
    // Euler–Maruyama on this OU process is stationary at variance s²/(1 − h/(2s²)).
    let s2 = 0.25;
    let v_em = s2 / (1.0 - 1e-2 / (2.0 * s2));
    assert!((m - 1.5).abs() < 0.02, "mean {m}");
    assert!((v - v_em).abs() < 0.02, "variance {v} vs {v_em}");
}

/// Correlated bivariate Gaussian with known moments.
struct Correlated;

impl LogTarget for Correlated {
    fn dim(&self) -> usize {
        2
    }
    fn log_density(&self, t: &[f64]) -> Result<f64> {
        Ok(self.log_density_grad(t)?.0)
    }
    fn log_density_grad(&self, t: &[f64]) -> Result<(f64, Vec<f64>)> {
        // Precision of covariance [[1, 0.8], [0.8, 1]] shifted to mean (1, −1).
        let (a, b) = (t[0] - 1.0, t[1] + 1.0);
        let c = 1.0 / (1.0 - 0.64);
        let g = vec![-c * (a - 0.8 * b), -c * (b - 0.8 * a)];
        Ok((-0.5 * c * (a * a - 1.6 * a * b + b * b), g))
    }
}

#[test]
fn mala_targets_a_correlated_gaussian() {
    let mut cfg = ChainConfig::new(vec![0.0, 0.0]);
    cfg.iterations = 40_000;
    cfg.chains = 4;
    cfg.init = ChainInit::Points(vec![vec![3.0, 3.0], vec![-3.0, -3.0], vec![3.0, -3.0], vec![-3.0, 3.0]]);
    let out = mcmc::mala(&Correlated, &cfg, 8).unwrap();
    let n = out.sample_count() as f64;
    let m0 = out.samples.iter().step_by(2).sum::<f64>() / n;
    let m1 = out.samples.iter().skip(1).step_by(2).sum::<f64>() / n;
    let cov = out
        .samples
        .chunks_exact(2)
        .map(|s| (s[0] - m0) * (s[1] - m1))
        .sum::<f64>()
        / n;
    assert!((m0 - 1.0).abs() < 0.05 && (m1 + 1.0).abs() < 0.05, "mean ({m0}, {m1})");
    assert!((cov - 0.8).abs() < 0.06, "covariance {cov}");
}

fn location_ctx(ys: &[f64]) -> (Dataset, GaussianObsModel<LocationModel>) {
    (
        Dataset::iid(ys.to_vec(), 1).unwrap(),
        GaussianObsModel::new(LocationModel { dim: 1 }, vec![0.8]).unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stein_kernel_is_symmetric_with_nonnegative_diagonal(
        ys in prop::collection::vec(-3.0f64..3.0, 1..8),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let (data, model) = location_ctx(&ys);
        let ctx = SteinContext::new(&data, &model, KernelConfig::zero_limit(vec![0.8]).unwrap()).unwrap();
        let ab = ctx.stein_kernel(&[a], &[b]).unwrap();
        let ba = ctx.stein_kernel(&[b], &[a]).unwrap();
        prop_assert!((ab - ba).abs() < 1e-14);
        prop_assert!(ctx.mmd_squared(&[a]).unwrap() >= -1e-14);
        // Cauchy–Schwarz for a positive semidefinite kernel.
        let aa = ctx.stein_kernel(&[a], &[a]).unwrap();
        let bb = ctx.stein_kernel(&[b], &[b]).unwrap();
        prop_assert!(ab * ab <= aa * bb + 1e-12);
    }

    #[test]
    fn reference_score_is_the_log_density_gradient(
        mean in -2.0f64..2.0,
        sd in 0.2f64..3.0,
        t in -5.0f64..5.0,
        scale in 0.1f64..5.0,
    ) {
        let r = GaussianReference::new(vec![mean], vec![sd]).unwrap();
        let mut g = vec![0.0];
        r.add_score(&[t], scale, &mut g);
        let h = 1e-6;
        let fd = (r.log_density(&[t + h]) - r.log_density(&[t - h])) / (2.0 * h);
        prop_assert!((g[0] - scale * fd).abs() < 1e-6 * (1.0 + g[0].abs()));
    }
}
