//! Summary statistics used for diagnostics and experiment metrics.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Type-7 (linear interpolation) quantile of unsorted data.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

/// Type-7 quantile of data already sorted ascending.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Several type-7 quantiles with one sort.
pub fn quantiles(xs: &[f64], qs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    qs.iter().map(|&q| quantile_sorted(&v, q)).collect()
}

/// Interquartile range `q75 − q25`.
pub fn iqr(xs: &[f64]) -> f64 {
    let q = quantiles(xs, &[0.25, 0.75]);
    q[1] - q[0]
}

/// Standard error of the mean of a correlated series by non-overlapping
/// batch means. Trailing samples that do not fill a batch are dropped.
pub fn batch_means_se(series: &[f64], batches: usize) -> Result<f64> {
    if batches < 2 {
        return Err(Error::argument("batch means need at least two batches"));
    }
    let len = series.len() / batches;
    if len == 0 {
        return Err(Error::argument("series shorter than the number of batches"));
    }
    let means: Vec<f64> = (0..batches)
        .map(|b| mean(&series[b * len..(b + 1) * len]))
        .collect();
    Ok(math::sqrt(variance(&means) / batches as f64))
}

/// Column means of a row-major `rows × dim` matrix.
pub fn column_means(flat: &[f64], dim: usize) -> Vec<f64> {
    let rows = flat.len() / dim;
    let mut m = vec![0.0; dim];
    for row in flat.chunks_exact(dim) {
        for (a, b) in m.iter_mut().zip(row) {
            *a += b;
        }
    }
    m.iter_mut().for_each(|a| *a /= rows as f64);
    m
}

/// Unbiased sample covariance (row-major `dim × dim`) of a row-major sample.
pub fn covariance(flat: &[f64], dim: usize) -> Vec<f64> {
    let rows = flat.len() / dim;
    let m = column_means(flat, dim);
    let mut c = vec![0.0; dim * dim];
    for row in flat.chunks_exact(dim) {
        for a in 0..dim {
            for b in 0..dim {
                c[a * dim + b] += (row[a] - m[a]) * (row[b] - m[b]);
            }
        }
    }
    let denom = rows.saturating_sub(1).max(1) as f64;
    c.iter_mut().for_each(|v| *v /= denom);
    c
}

pub fn covariance_trace(flat: &[f64], dim: usize) -> f64 {
    let c = covariance(flat, dim);
    (0..dim).map(|k| c[k * dim + k]).sum()
}

/// `∫ |F(t) − G(t)| dt` between the empirical measure of `samples` and a
/// measure that is uniform within each cell `[edges[k], edges[k+1])` with
/// total mass `masses[k]`. Masses are normalised internally.
pub fn wasserstein1_to_histogram(samples: &[f64], edges: &[f64], masses: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::argument("no samples"));
    }
    if edges.len() != masses.len() + 1 || masses.is_empty() {
        return Err(Error::shape("need one more edge than cell masses"));
    }
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) {
        return Err(Error::argument("histogram has no mass"));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);

    let mut cdf_at_edge = Vec::with_capacity(edges.len());
    let mut acc = 0.0;
    cdf_at_edge.push(0.0);
    for m in masses {
        acc += m / total;
        cdf_at_edge.push(acc);
    }
    let g = |t: f64| -> f64 {
        if t <= edges[0] {
            return 0.0;
        }
        if t >= edges[edges.len() - 1] {
            return 1.0;
        }
        let k = edges.partition_point(|e| *e <= t) - 1;
        let frac = (t - edges[k]) / (edges[k + 1] - edges[k]);
        cdf_at_edge[k] + frac * (cdf_at_edge[k + 1] - cdf_at_edge[k])
    };

    let mut points: Vec<f64> = s.iter().copied().chain(edges.iter().copied()).collect();
    points.sort_by(f64::total_cmp);
    points.dedup();

    let n = s.len() as f64;
    let mut w = 0.0;
    for pair in points.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b <= a {
            continue;
        }
        // empirical CDF is constant on [a, b); G is linear there
        let f = s.partition_point(|x| *x <= a) as f64 / n;
        let (da, db) = (f - g(a), f - g(b));
        w += if da * db >= 0.0 {
            0.5 * (da.abs() + db.abs()) * (b - a)
        } else {
            let r = da.abs() / (da.abs() + db.abs());
            0.5 * (da.abs() * r + db.abs() * (1.0 - r)) * (b - a)
        };
    }
    Ok(w)
}
