//! Eleven-species ERK signalling network with optional sinusoidal rate
//! modulation and a MEK-inhibitor intervention that scales β₆.
//!
//! Each right-hand side is a signed sum of eleven mass-action fluxes
//! `r_j = β_j · m_j(u)`; the model is stored as that stoichiometry.

use core::f64::consts::PI;

use super::{OdeForwardMap, OdeProblem, OdeSystem};
use crate::math;
use crate::models::{ParamTransform, Transform};
use crate::{Error, Result};

pub const ERK_PRESET_RATES: [f64; 11] = [
    0.53, 0.0072, 0.625, 0.00245, 0.0315, 0.8, 0.0075, 0.071, 0.92, 0.00122, 0.87,
];

/// Raf1, RKIP, Raf1_RKIP, Raf1_RKIP_ERKPP, ERK, RKIPP, MEKPP, MEKPP_ERK,
/// ERKPP, RP, RKIPP_RP.
pub const ERK_INITIAL: [f64; 11] = [2.0, 2.5, 0.0, 0.0, 0.0, 0.0, 2.5, 0.0, 2.5, 3.0, 0.0];

/// Species index sets whose totals are conserved by the dynamics.
pub const ERK_CONSERVATION: [&[usize]; 5] = [
    &[0, 2, 3],
    &[6, 7],
    &[3, 4, 7, 8],
    &[1, 2, 3, 5, 10],
    &[9, 10],
];

/// Reactant pair for each flux; `None` in the second slot means first order.
const REACTANTS: [(usize, Option<usize>); 11] = [
    (0, Some(1)),
    (2, None),
    (2, Some(8)),
    (3, None),
    (3, None),
    (4, Some(6)),
    (7, None),
    (7, None),
    (5, Some(9)),
    (10, None),
    (10, None),
];

/// `STOICH[i][j]`: coefficient of flux `j` in `du_i/dx`.
const STOICH: [[i8; 11]; 11] = [
    [-1, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0],
    [-1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 1],
    [1, -1, -1, 1, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 1, -1, -1, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 1, -1, 1, 0, 0, 0, 0],
    [0, 0, 0, 0, 1, 0, 0, 0, -1, 1, 0],
    [0, 0, 0, 0, 0, -1, 1, 1, 0, 0, 0],
    [0, 0, 0, 0, 0, 1, -1, -1, 0, 0, 0],
    [0, 0, -1, 1, 0, 0, 0, 1, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0, -1, 1, 1],
    [0, 0, 0, 0, 0, 0, 0, 0, 1, -1, -1],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modulation {
    None,
    /// `β_i(x) = (1 + ½ sin(2πx/45)) β_i`.
    Sinusoidal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Erk {
    modulation: Modulation,
    meki_gamma: f64,
    initial: [f64; 11],
}

impl Erk {
    /// `meki_gamma` multiplies β₆ when present and must lie in `(0, 1]`.
    pub fn new(modulation: Modulation, meki_gamma: Option<f64>) -> Result<Self> {
        let g = meki_gamma.unwrap_or(1.0);
        if !(g > 0.0 && g <= 1.0) {
            return Err(Error::argument("MEK inhibitor scale must lie in (0, 1]"));
        }
        Ok(Self {
            modulation,
            meki_gamma: g,
            initial: ERK_INITIAL,
        })
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    pub fn meki_gamma(&self) -> f64 {
        self.meki_gamma
    }

    /// Copy of this system under a MEK inhibitor of strength `gamma`.
    pub fn intervened(&self, gamma: f64) -> Result<Self> {
        Self::new(self.modulation, Some(gamma))
    }

    /// Multiplier applied to every rate at time `x`.
    pub fn rate_multiplier(&self, x: f64) -> f64 {
        match self.modulation {
            Modulation::None => 1.0,
            Modulation::Sinusoidal => 1.0 + 0.5 * math::sin(2.0 * PI * x / 45.0),
        }
    }

    #[inline]
    fn scale(&self, x: f64, j: usize) -> f64 {
        let m = self.rate_multiplier(x);
        if j == 5 {
            m * self.meki_gamma
        } else {
            m
        }
    }

    #[inline]
    fn monomial(u: &[f64], j: usize) -> f64 {
        match REACTANTS[j] {
            (a, Some(b)) => u[a] * u[b],
            (a, None) => u[a],
        }
    }

    /// Preset problem: rates from [`ERK_PRESET_RATES`].
    pub fn preset(modulation: Modulation, meki_gamma: Option<f64>) -> Result<OdeProblem<Self>> {
        erk_problem(&ERK_PRESET_RATES, modulation, meki_gamma)
    }

    /// Forward map in `θ_i = logit β_i`, all eleven species observed.
    pub fn forward_map(&self, rates: &[f64]) -> Result<OdeForwardMap<Self>> {
        OdeForwardMap::new(
            self.clone(),
            rates.to_vec(),
            (0..11).collect(),
            ParamTransform::uniform(Transform::Logistic, 11),
        )
    }
}

fn erk_problem(rates: &[f64], modulation: Modulation, meki_gamma: Option<f64>) -> Result<OdeProblem<Erk>> {
    if rates.len() != 11 {
        return Err(Error::argument("the ERK system has 11 rates"));
    }
    if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::argument("ERK rates must be nonnegative"));
    }
    Ok(OdeProblem {
        system: Erk::new(modulation, meki_gamma)?,
        rates: rates.to_vec(),
    })
}

impl OdeSystem for Erk {
    fn state_dim(&self) -> usize {
        11
    }

    fn rate_dim(&self) -> usize {
        11
    }

    fn initial_state(&self) -> &[f64] {
        &self.initial
    }

    fn rhs(&self, x: f64, u: &[f64], rates: &[f64], du: &mut [f64]) {
        let mut flux = [0.0; 11];
        for (j, f) in flux.iter_mut().enumerate() {
            *f = self.scale(x, j) * rates[j] * Self::monomial(u, j);
        }
        for (i, d) in du.iter_mut().enumerate().take(11) {
            *d = STOICH[i]
                .iter()
                .zip(&flux)
                .map(|(&s, f)| f64::from(s) * f)
                .sum();
        }
    }

    fn state_jacobian(&self, x: f64, u: &[f64], rates: &[f64], jac: &mut [f64]) {
        for j in 0..11 {
            let k = self.scale(x, j) * rates[j];
            // ∂r_j/∂u
            let (partials, count) = match REACTANTS[j] {
                (a, Some(b)) => ([(a, k * u[b]), (b, k * u[a])], 2),
                (a, None) => ([(a, k), (a, 0.0)], 1),
            };
            for (i, row) in STOICH.iter().enumerate() {
                let s = f64::from(row[j]);
                if s != 0.0 {
                    for &(c, v) in &partials[..count] {
                        jac[i * 11 + c] += s * v;
                    }
                }
            }
        }
    }

    fn rate_jacobian(&self, x: f64, u: &[f64], _rates: &[f64], jac: &mut [f64]) {
        for j in 0..11 {
            let v = self.scale(x, j) * Self::monomial(u, j);
            for (i, row) in STOICH.iter().enumerate() {
                jac[i * 11 + j] = f64::from(row[j]) * v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn stoichiometry_conserves_totals() {
        for set in ERK_CONSERVATION {
            for j in 0..11 {
                let net: i32 = set.iter().map(|&i| i32::from(STOICH[i][j])).sum();
                assert_eq!(net, 0, "flux {j} breaks {set:?}");
            }
        }
    }

    #[test]
    fn rhs_matches_hand_written_listing() {
        let sys = Erk::new(Modulation::None, None).unwrap();
        let u: Vec<f64> = (0..11).map(|i| 0.3 + 0.1 * i as f64).collect();
        let b = ERK_PRESET_RATES;
        let mut du = [0.0; 11];
        sys.rhs(0.0, &u, &b, &mut du);
        let expect = [
            -b[0] * u[0] * u[1] + b[1] * u[2] + b[4] * u[3],
            -b[0] * u[0] * u[1] + b[1] * u[2] + b[10] * u[10],
            b[0] * u[0] * u[1] - b[1] * u[2] - b[2] * u[2] * u[8] + b[3] * u[3],
            b[2] * u[2] * u[8] - b[3] * u[3] - b[4] * u[3],
            b[4] * u[3] - b[5] * u[4] * u[6] + b[6] * u[7],
            b[4] * u[3] - b[8] * u[5] * u[9] + b[9] * u[10],
            -b[5] * u[4] * u[6] + b[6] * u[7] + b[7] * u[7],
            b[5] * u[4] * u[6] - b[6] * u[7] - b[7] * u[7],
            -b[2] * u[2] * u[8] + b[3] * u[3] + b[7] * u[7],
            -b[8] * u[5] * u[9] + b[9] * u[10] + b[10] * u[10],
            b[8] * u[5] * u[9] - b[9] * u[10] - b[10] * u[10],
        ];
        for i in 0..11 {
            assert!((du[i] - expect[i]).abs() < 1e-15, "f{}", i + 1);
        }
    }

    #[test]
    fn meki_scales_only_beta6() {
        let plain = Erk::new(Modulation::None, None).unwrap();
        let unit = Erk::new(Modulation::None, Some(1.0)).unwrap();
        let meki = Erk::new(Modulation::None, Some(0.01)).unwrap();
        let u = [1.0; 11];
        let (mut a, mut b, mut c) = ([0.0; 11], [0.0; 11], [0.0; 11]);
        plain.rhs(0.0, &u, &ERK_PRESET_RATES, &mut a);
        unit.rhs(0.0, &u, &ERK_PRESET_RATES, &mut b);
        let mut scaled = ERK_PRESET_RATES;
        scaled[5] *= 0.01;
        meki.rhs(0.0, &u, &ERK_PRESET_RATES, &mut c);
        assert_eq!(a, b);
        let mut d = [0.0; 11];
        plain.rhs(0.0, &u, &scaled, &mut d);
        assert_eq!(c, d);
    }

    #[test]
    fn invalid_inputs() {
        assert!(Erk::new(Modulation::None, Some(0.0)).is_err());
        assert!(Erk::new(Modulation::None, Some(1.5)).is_err());
        assert!(erk_problem(&[0.1; 10], Modulation::None, None).is_err());
    }

    #[test]
    fn modulation_multiplier() {
        let s = Erk::new(Modulation::Sinusoidal, None).unwrap();
        assert_eq!(s.rate_multiplier(0.0), 1.0);
        assert!((s.rate_multiplier(11.25) - 1.5).abs() < 1e-15);
    }
}
