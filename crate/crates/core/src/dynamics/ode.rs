//! Classical fixed-step RK4 on the state augmented with forward sensitivities
//! `dS/dx = (∂f/∂u) S + (∂f/∂r) D`, `S(0) = 0`, where `D = ∂r/∂θ`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{OdeSystem, Trajectory};
use crate::math;
use crate::{Error, Result};

struct Augmented<'a, S: ?Sized> {
    system: &'a S,
    rates: &'a [f64],
    /// Nonzero entries `(rate, parameter, value)` of `∂r/∂θ`.
    rate_sens: Option<Vec<(usize, usize, f64)>>,
    d: usize,
    p: usize,
    ju: Vec<f64>,
    jr: Vec<f64>,
}

impl<S: OdeSystem + ?Sized> Augmented<'_, S> {
    fn dim(&self) -> usize {
        self.d * (1 + self.p)
    }

    fn eval(&mut self, x: f64, z: &[f64], out: &mut [f64]) {
        let (d, p) = (self.d, self.p);
        let u = &z[..d];
        self.system.rhs(x, u, self.rates, &mut out[..d]);
        let Some(dmat) = self.rate_sens.as_deref() else { return };
        let r = self.rates.len();
        self.ju.iter_mut().for_each(|v| *v = 0.0);
        self.jr.iter_mut().for_each(|v| *v = 0.0);
        self.system.state_jacobian(x, u, self.rates, &mut self.ju);
        self.system.rate_jacobian(x, u, self.rates, &mut self.jr);
        let s = &z[d..];
        let ds = &mut out[d..];
        for i in 0..d {
            let row = &mut ds[i * p..(i + 1) * p];
            row.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..d {
                let a = self.ju[i * d + k];
                if a != 0.0 {
                    for (o, sv) in row.iter_mut().zip(&s[k * p..(k + 1) * p]) {
                        *o += a * sv;
                    }
                }
            }
            for &(k, j, v) in dmat {
                row[j] += self.jr[i * r + k] * v;
            }
        }
    }
}

struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(m: usize) -> Self {
        Self {
            k1: vec![0.0; m],
            k2: vec![0.0; m],
            k3: vec![0.0; m],
            k4: vec![0.0; m],
            tmp: vec![0.0; m],
        }
    }

    /// One step of size `h` from `(x, z)`, written into `out`.
    fn step<S: OdeSystem + ?Sized>(&mut self, f: &mut Augmented<'_, S>, x: f64, z: &[f64], h: f64, out: &mut [f64]) {
        f.eval(x, z, &mut self.k1);
        for ((t, a), k) in self.tmp.iter_mut().zip(z).zip(&self.k1) {
            *t = a + 0.5 * h * k;
        }
        f.eval(x + 0.5 * h, &self.tmp, &mut self.k2);
        for ((t, a), k) in self.tmp.iter_mut().zip(z).zip(&self.k2) {
            *t = a + 0.5 * h * k;
        }
        f.eval(x + 0.5 * h, &self.tmp, &mut self.k3);
        for ((t, a), k) in self.tmp.iter_mut().zip(z).zip(&self.k3) {
            *t = a + h * k;
        }
        f.eval(x + h, &self.tmp, &mut self.k4);
        for (i, o) in out.iter_mut().enumerate() {
            *o = z[i] + h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Integrates from `x = 0` and reports states at `times`.
///
/// Integration nodes sit at `k · step`. An output time on a node is read off
/// directly; an output time between nodes is reached by one partial RK4 step
/// from the preceding node, so the node sequence (and hence every on-grid
/// output) does not depend on which other times were requested.
///
/// `rate_sens` is the row-major `R × p` matrix `∂rates/∂θ`; when given, the
/// trajectory carries `∂u/∂θ`.
pub fn integrate<S: OdeSystem + ?Sized>(
    system: &S,
    rates: &[f64],
    times: &[f64],
    rate_sens: Option<&[f64]>,
    step: f64,
) -> Result<Trajectory> {
    let d = system.state_dim();
    let r = system.rate_dim();
    if system.initial_state().len() != d {
        return Err(Error::shape("initial state length differs from state dimension"));
    }
    if rates.len() != r {
        return Err(Error::argument(format!("expected {r} rates, got {}", rates.len())));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::argument("integration step must be positive"));
    }
    if times.is_empty() {
        return Err(Error::argument("no output times"));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::argument("output times must be finite and nonnegative"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::argument("output times must be strictly increasing"));
    }
    let p = match rate_sens {
        None => 0,
        Some(m) => {
            if r == 0 || m.len() % r != 0 {
                return Err(Error::shape("rate sensitivity matrix must be R × p"));
            }
            m.len() / r
        }
    };

    let mut f = Augmented {
        system,
        rates,
        rate_sens: rate_sens.map(|m| {
            m.iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(idx, &v)| (idx / p, idx % p, v))
                .collect()
        }),
        d,
        p,
        ju: vec![0.0; d * d],
        jr: vec![0.0; d * r],
    };
    let m = f.dim();
    let mut rk = Rk4::new(m);
    let mut z = vec![0.0; m];
    z[..d].copy_from_slice(system.initial_state());
    let mut next = vec![0.0; m];
    let mut side = vec![0.0; m];

    let mut states = Vec::with_capacity(times.len() * d);
    let mut sens = rate_sens.map(|_| Vec::with_capacity(times.len() * d * p));
    let mut node = 0u64;

    for &t in times {
        let q = t / step;
        let nearest = math::round(q);
        let (target, residual) = if (q - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            (nearest as u64, 0.0)
        } else {
            let k = math::floor(q) as u64;
            (k, t - k as f64 * step)
        };
        while node < target {
            let x = node as f64 * step;
            rk.step(&mut f, x, &z, step, &mut next);
            node += 1;
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::IntegrationFailure { x: node as f64 * step });
            }
            core::mem::swap(&mut z, &mut next);
        }
        let out = if residual > 0.0 {
            rk.step(&mut f, node as f64 * step, &z, residual, &mut side);
            if side.iter().any(|v| !v.is_finite()) {
                return Err(Error::IntegrationFailure { x: t });
            }
            &side
        } else {
            &z
        };
        states.extend_from_slice(&out[..d]);
        if let Some(s) = sens.as_mut() {
            s.extend_from_slice(&out[d..]);
        }
    }
    Ok(Trajectory::new(times.to_vec(), d, p, states, sens))
}

/// Integrates with sensitivities taken directly with respect to the rates.
pub fn integrate_rate_sensitivities<S: OdeSystem + ?Sized>(
    system: &S,
    rates: &[f64],
    times: &[f64],
    step: f64,
) -> Result<Trajectory> {
    let r = rates.len();
    let mut eye = vec![0.0; r * r];
    for i in 0..r {
        eye[i * r + i] = 1.0;
    }
    integrate(system, rates, times, Some(&eye), step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math;

    struct Growth;

    impl OdeSystem for Growth {
        fn state_dim(&self) -> usize {
            1
        }
        fn rate_dim(&self) -> usize {
            1
        }
        fn initial_state(&self) -> &[f64] {
            &[1.0]
        }
        fn rhs(&self, _x: f64, u: &[f64], r: &[f64], du: &mut [f64]) {
            du[0] = r[0] * u[0];
        }
        fn state_jacobian(&self, _x: f64, _u: &[f64], r: &[f64], jac: &mut [f64]) {
            jac[0] = r[0];
        }
        fn rate_jacobian(&self, _x: f64, u: &[f64], _r: &[f64], jac: &mut [f64]) {
            jac[0] = u[0];
        }
    }

    #[test]
    fn exponential_growth_and_sensitivity() {
        let theta = 0.7;
        let times = [0.5, 1.0, 2.0, 2.345];
        let tr = integrate_rate_sensitivities(&Growth, &[theta], &times, 1e-3).unwrap();
        for (k, &x) in times.iter().enumerate() {
            let u = math::exp(theta * x);
            assert!((tr.state(k)[0] - u).abs() / u < 1e-6);
            let s = x * u;
            assert!((tr.sensitivity(k).unwrap()[0] - s).abs() / s < 1e-6);
        }
    }

    #[test]
    fn off_grid_times_do_not_shift_nodes() {
        let a = integrate(&Growth, &[0.3], &[1.0, 2.0], None, 0.01).unwrap();
        let b = integrate(&Growth, &[0.3], &[0.555, 1.0, 1.2345, 2.0], None, 0.01).unwrap();
        assert_eq!(a.state(0), b.state(1));
        assert_eq!(a.state(1), b.state(3));
    }

    #[test]
    fn blow_up_reports_time() {
        struct Riccati;
        impl OdeSystem for Riccati {
            fn state_dim(&self) -> usize {
                1
            }
            fn rate_dim(&self) -> usize {
                0
            }
            fn initial_state(&self) -> &[f64] {
                &[1.0]
            }
            fn rhs(&self, _x: f64, u: &[f64], _r: &[f64], du: &mut [f64]) {
                du[0] = u[0] * u[0] * u[0] * u[0];
            }
            fn state_jacobian(&self, _: f64, _: &[f64], _: &[f64], _: &mut [f64]) {}
            fn rate_jacobian(&self, _: f64, _: &[f64], _: &[f64], _: &mut [f64]) {}
        }
        match integrate(&Riccati, &[], &[5.0], None, 0.01) {
            Err(Error::IntegrationFailure { x }) => assert!(x > 0.0 && x <= 5.0),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(integrate(&Growth, &[1.0], &[], None, 0.01).is_err());
        assert!(integrate(&Growth, &[1.0], &[1.0, 0.5], None, 0.01).is_err());
        assert!(integrate(&Growth, &[1.0], &[-1.0], None, 0.01).is_err());
        assert!(integrate(&Growth, &[1.0], &[1.0], None, 0.0).is_err());
    }
}
