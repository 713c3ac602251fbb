//! CSV formats. Reals are written with 17 significant digits so every file
//! parses back to the identical `f64` values.

use std::path::Path;

use pcuq_core::experiments::{CalibrationResult, CoverageMetrics, PredictiveSummary, Truth};
use pcuq_core::oracle::GridMeasure;
use pcuq_core::trace::Trace;
use pcuq_core::Dataset;

use crate::error::CliError;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    let f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::format(path, format!("{other:?}")),
    }
}

fn write_rows<I>(path: &Path, header: &[String], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Header and rows of a CSV file.
struct Table {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

fn read_table(path: &Path) -> Result<Table, CliError> {
    let f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::Reader::from_reader(f);
    let header = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let rows = r
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| csv_err(path, e))?;
    Ok(Table { header, rows })
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64, CliError> {
    s.trim()
        .parse()
        .map_err(|_| CliError::format(path, format!("row {line}: `{s}` is not a number")))
}

fn parse_u64(path: &Path, line: usize, s: &str) -> Result<u64, CliError> {
    s.trim()
        .parse()
        .map_err(|_| CliError::format(path, format!("row {line}: `{s}` is not an integer")))
}

fn expect_prefix(path: &Path, header: &[String], fixed: &[&str], prefix: &str) -> Result<usize, CliError> {
    let ok = header.len() > fixed.len()
        && header.iter().zip(fixed).all(|(h, f)| h == f)
        && header[fixed.len()..]
            .iter()
            .enumerate()
            .all(|(k, h)| *h == format!("{prefix}{}", k + 1));
    if !ok {
        let mut want: Vec<String> = fixed.iter().map(|s| s.to_string()).collect();
        want.push(format!("{prefix}1.."));
        return Err(CliError::format(
            path,
            format!("expected header `{}`, found `{}`", want.join(","), header.join(",")),
        ));
    }
    Ok(header.len() - fixed.len())
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |k| format!("{prefix}{k}"))
}

/// `x, y_1..y_d`.
pub fn write_dataset(path: &Path, data: &Dataset) -> Result<(), CliError> {
    let header: Vec<String> = std::iter::once("x".to_string())
        .chain(numbered("y_", data.obs_dim()))
        .collect();
    let rows = data
        .iter()
        .map(|(x, y)| std::iter::once(fmt_f64(x)).chain(y.iter().map(|v| fmt_f64(*v))).collect());
    write_rows(path, &header, rows)
}

pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let t = read_table(path)?;
    let d = expect_prefix(path, &t.header, &["x"], "y_")?;
    let mut xs = Vec::with_capacity(t.rows.len());
    let mut ys = Vec::with_capacity(t.rows.len() * d);
    for (i, r) in t.rows.iter().enumerate() {
        if r.len() != d + 1 {
            return Err(CliError::format(path, format!("row {}: expected {} fields", i + 1, d + 1)));
        }
        xs.push(parse_f64(path, i + 1, &r[0])?);
        for k in 0..d {
            ys.push(parse_f64(path, i + 1, &r[k + 1])?);
        }
    }
    Dataset::new(xs, ys, d).map_err(|e| CliError::format(path, e.to_string()))
}

/// `x, u_1..u_d`.
pub fn write_truth(path: &Path, truth: &Truth) -> Result<(), CliError> {
    let header: Vec<String> = std::iter::once("x".to_string())
        .chain(numbered("u_", truth.dim))
        .collect();
    let rows = truth.times.iter().enumerate().map(|(k, t)| {
        std::iter::once(fmt_f64(*t))
            .chain(truth.state(k).iter().map(|v| fmt_f64(*v)))
            .collect()
    });
    write_rows(path, &header, rows)
}

pub fn read_truth(path: &Path) -> Result<Truth, CliError> {
    let t = read_table(path)?;
    let d = expect_prefix(path, &t.header, &["x"], "u_")?;
    let mut times = Vec::with_capacity(t.rows.len());
    let mut states = Vec::with_capacity(t.rows.len() * d);
    for (i, r) in t.rows.iter().enumerate() {
        if r.len() != d + 1 {
            return Err(CliError::format(path, format!("row {}: expected {} fields", i + 1, d + 1)));
        }
        times.push(parse_f64(path, i + 1, &r[0])?);
        for k in 0..d {
            states.push(parse_f64(path, i + 1, &r[k + 1])?);
        }
    }
    Ok(Truth { times, dim: d, states })
}

/// `iter, chain_or_particle, theta_1..theta_p`.
pub fn write_trace(path: &Path, trace: &Trace) -> Result<(), CliError> {
    let header: Vec<String> = ["iter", "chain_or_particle"]
        .iter()
        .map(|s| s.to_string())
        .chain(numbered("theta_", trace.dim()))
        .collect();
    let rows = trace.rows().map(|(it, m, th)| {
        [it.to_string(), m.to_string()]
            .into_iter()
            .chain(th.iter().map(|v| fmt_f64(*v)))
            .collect()
    });
    write_rows(path, &header, rows)
}

pub fn read_trace(path: &Path) -> Result<Trace, CliError> {
    let t = read_table(path)?;
    let p = expect_prefix(path, &t.header, &["iter", "chain_or_particle"], "theta_")?;
    let mut trace = Trace::new(p);
    let mut theta = vec![0.0; p];
    for (i, r) in t.rows.iter().enumerate() {
        if r.len() != p + 2 {
            return Err(CliError::format(path, format!("row {}: expected {} fields", i + 1, p + 2)));
        }
        let it = parse_u64(path, i + 1, &r[0])?;
        let m = parse_u64(path, i + 1, &r[1])? as usize;
        for k in 0..p {
            theta[k] = parse_f64(path, i + 1, &r[k + 2])?;
        }
        trace.push(it, m, &theta);
    }
    Ok(trace)
}

/// `theta_1..theta_p`, one retained parameter per row.
pub fn write_samples(path: &Path, dim: usize, samples: &[f64]) -> Result<(), CliError> {
    let header: Vec<String> = numbered("theta_", dim).collect();
    let rows = samples
        .chunks_exact(dim)
        .map(|row| row.iter().map(|v| fmt_f64(*v)).collect());
    write_rows(path, &header, rows)
}

/// Returns `(dim, samples)`.
pub fn read_samples(path: &Path) -> Result<(usize, Vec<f64>), CliError> {
    let t = read_table(path).map_err(|e| match e {
        CliError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => CliError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("samples file not found; expected it at {}", path.display()),
            ),
        },
        other => other,
    })?;
    let p = expect_prefix(path, &t.header, &[], "theta_")?;
    let mut out = Vec::with_capacity(t.rows.len() * p);
    for (i, r) in t.rows.iter().enumerate() {
        if r.len() != p {
            return Err(CliError::format(path, format!("row {}: expected {p} fields", i + 1)));
        }
        for k in 0..p {
            out.push(parse_f64(path, i + 1, &r[k])?);
        }
    }
    if out.is_empty() {
        return Err(CliError::format(path, "no samples"));
    }
    Ok((p, out))
}

const PREDICTIVE_HEADER: [&str; 6] = ["x", "dim", "mean", "q25", "q50", "q75"];

/// `x, dim, mean, q25, q50, q75`, dimensions numbered from 1.
pub fn write_predictive(path: &Path, s: &PredictiveSummary) -> Result<(), CliError> {
    let header: Vec<String> = PREDICTIVE_HEADER.iter().map(|h| h.to_string()).collect();
    let d = s.dim;
    let rows = s.times.iter().enumerate().flat_map(move |(k, t)| {
        (0..d).map(move |i| {
            let c = k * d + i;
            vec![
                fmt_f64(*t),
                (i + 1).to_string(),
                fmt_f64(s.mean[c]),
                fmt_f64(s.q25[c]),
                fmt_f64(s.q50[c]),
                fmt_f64(s.q75[c]),
            ]
        })
    });
    write_rows(path, &header, rows)
}

pub fn read_predictive(path: &Path) -> Result<PredictiveSummary, CliError> {
    let t = read_table(path)?;
    if t.header != PREDICTIVE_HEADER {
        return Err(CliError::format(
            path,
            format!("expected header `{}`", PREDICTIVE_HEADER.join(",")),
        ));
    }
    let mut s = PredictiveSummary {
        times: Vec::new(),
        dim: 0,
        mean: Vec::new(),
        q25: Vec::new(),
        q50: Vec::new(),
        q75: Vec::new(),
    };
    for (i, r) in t.rows.iter().enumerate() {
        if r.len() != 6 {
            return Err(CliError::format(path, format!("row {}: expected 6 fields", i + 1)));
        }
        let x = parse_f64(path, i + 1, &r[0])?;
        let dim = parse_u64(path, i + 1, &r[1])? as usize;
        if dim == 1 {
            s.times.push(x);
        }
        if s.times.last().map(|t| t.to_bits()) != Some(x.to_bits()) || dim == 0 {
            return Err(CliError::format(path, format!("row {}: rows must be grouped by x with dim 1..d", i + 1)));
        }
        s.dim = s.dim.max(dim);
        s.mean.push(parse_f64(path, i + 1, &r[2])?);
        s.q25.push(parse_f64(path, i + 1, &r[3])?);
        s.q50.push(parse_f64(path, i + 1, &r[4])?);
        s.q75.push(parse_f64(path, i + 1, &r[5])?);
    }
    if s.times.is_empty() || s.mean.len() != s.times.len() * s.dim {
        return Err(CliError::format(path, "every x needs the same dimensions 1..d"));
    }
    Ok(s)
}

/// `method, dim, coverage, mean_width`.
pub fn write_metrics(path: &Path, rows: &[(String, CoverageMetrics)]) -> Result<(), CliError> {
    let header: Vec<String> = ["method", "dim", "coverage", "mean_width"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let out = rows.iter().flat_map(|(m, c)| {
        (0..c.coverage.len()).map(move |i| {
            vec![
                m.clone(),
                (i + 1).to_string(),
                fmt_f64(c.coverage[i]),
                fmt_f64(c.mean_width[i]),
            ]
        })
    });
    write_rows(path, &header, out)
}

/// `lambda, pcuq_spread, bayes_spread, selected`; failed rungs leave the
/// spread empty.
pub fn write_calibration(path: &Path, c: &CalibrationResult) -> Result<(), CliError> {
    let header: Vec<String> = ["lambda", "pcuq_spread", "bayes_spread", "selected"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = c.ladder.iter().zip(&c.pcuq_spread).map(|(l, s)| {
        vec![
            fmt_f64(*l),
            s.map(fmt_f64).unwrap_or_default(),
            fmt_f64(c.bayes_spread),
            u8::from(l.to_bits() == c.lambda_star.to_bits()).to_string(),
        ]
    });
    write_rows(path, &header, rows)
}

/// `theta_1..theta_p, weight` over the grid in row-major order.
pub fn write_grid_measure(path: &Path, m: &GridMeasure) -> Result<(), CliError> {
    let g = m.grid();
    let header: Vec<String> = numbered("theta_", g.dim()).chain(["weight".to_string()]).collect();
    let rows = (0..g.len()).map(|k| {
        g.point(k)
            .iter()
            .map(|v| fmt_f64(*v))
            .chain([fmt_f64(m.weights()[k])])
            .collect()
    });
    write_rows(path, &header, rows)
}
