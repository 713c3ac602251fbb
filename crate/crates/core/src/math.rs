//! Float helpers routed through `libm` so `std` and `no_std` builds agree bitwise.

pub(crate) use libm::{exp, exp10, fabs as abs, floor, log as ln, round, sin, sqrt};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// `log(p / (1 - p))`.
pub fn logit(p: f64) -> f64 {
    ln(p) - libm::log1p(-p)
}

/// Logistic function, stable for large `|t|`.
pub fn inv_logit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + exp(-t))
    } else {
        let e = exp(t);
        e / (1.0 + e)
    }
}

/// `log(exp(a) + exp(b))` style reduction over a slice.
pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + ln(values.iter().map(|v| exp(v - max)).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logit_round_trip() {
        for &p in &[1e-9, 0.01, 0.119, 0.5, 0.9, 1.0 - 1e-9] {
            assert!((inv_logit(logit(p)) - p).abs() < 1e-12 * p.max(1e-3));
        }
        assert_eq!(inv_logit(-800.0), 0.0);
        assert_eq!(inv_logit(800.0), 1.0);
    }

    #[test]
    fn log_sum_exp_matches_direct() {
        let v = [0.1, -2.0, 3.5];
        let direct = ln(v.iter().map(|x| exp(*x)).sum::<f64>());
        assert!((log_sum_exp(&v) - direct).abs() < 1e-14);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 2]), f64::NEG_INFINITY);
    }
}
