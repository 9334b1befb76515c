//! χ-extrapolation and cross-method error reports over result tables.
//!
//! Result tables share one CSV schema with the command-line runner; see
//! [`RESULTS_HEADER`]. Floats are written with 17 significant digits so a
//! table survives a write/read round trip bit-for-bit.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RESULTS_HEADER: [&str; 10] = [
    "theta",
    "method",
    "param",
    "observable",
    "steps",
    "extra_rx",
    "value",
    "discarded_weight",
    "num_terms",
    "runtime_s",
];

/// One evaluated point of one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub theta: f64,
    pub method: String,
    /// Method parameters, e.g. `chi=32` or `order<=6`.
    pub param: String,
    pub observable: String,
    pub steps: usize,
    pub extra_rx: bool,
    pub value: f64,
    pub discarded_weight: Option<f64>,
    pub num_terms: Option<usize>,
    pub runtime_s: Option<f64>,
}

/// 17 significant digits; `-0` is written as `0`.
pub fn fmt_f64(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.16e}")
}

fn opt<T>(x: Option<T>, f: impl Fn(T) -> String) -> String {
    x.map(f).unwrap_or_default()
}

pub fn write_results<W: Write>(rows: &[ResultRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(RESULTS_HEADER)?;
    for r in rows {
        wr.write_record([
            fmt_f64(r.theta),
            r.method.clone(),
            r.param.clone(),
            r.observable.clone(),
            r.steps.to_string(),
            r.extra_rx.to_string(),
            fmt_f64(r.value),
            opt(r.discarded_weight, fmt_f64),
            opt(r.num_terms, |n| n.to_string()),
            opt(r.runtime_s, fmt_f64),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_results<R: Read>(r: R) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    if header != RESULTS_HEADER {
        return Err(Error::InvalidArgument(format!(
            "unexpected results header `{}`",
            header.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = |col: &str| Error::InvalidArgument(format!("row {}: bad `{col}` field", line + 1));
        let f = |i: usize| rec.get(i).unwrap_or("");
        let real = |i: usize| f(i).parse::<f64>().map_err(|_| bad(RESULTS_HEADER[i]));
        let opt_real = |i: usize| match f(i) {
            "" => Ok(None),
            s => s.parse::<f64>().map(Some).map_err(|_| bad(RESULTS_HEADER[i])),
        };
        rows.push(ResultRow {
            theta: real(0)?,
            method: f(1).to_owned(),
            param: f(2).to_owned(),
            observable: f(3).to_owned(),
            steps: f(4).parse().map_err(|_| bad("steps"))?,
            extra_rx: f(5).parse().map_err(|_| bad("extra_rx"))?,
            value: real(6)?,
            discarded_weight: opt_real(7)?,
            num_terms: match f(8) {
                "" => None,
                s => Some(s.parse().map_err(|_| bad("num_terms"))?),
            },
            runtime_s: opt_real(9)?,
        });
    }
    Ok(rows)
}

/// Fit of `value(χ) = b·exp(−a/χ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub a: f64,
    /// The χ → ∞ estimate.
    pub b: f64,
    /// Root-mean-square residual on the original scale.
    pub residual: f64,
}

impl FitResult {
    pub fn eval(&self, chi: f64) -> f64 {
        self.b * (-self.a / chi).exp()
    }
}

/// Values this small relative to the largest are treated as sign-ambiguous.
const NEAR_ZERO_REL: f64 = 1e-12;

/// Least-squares fit of `b·exp(−a/χ)` to all supplied points.
///
/// Starts from a linear regression of `ln|v|` on `1/χ` and refines with
/// damped Gauss–Newton on the original scale. `b` carries the common sign.
/// Mixed-sign or near-zero series are [`Error::Unfit`]; callers usually fall
/// back to the largest-χ value.
pub fn fit_chi_extrapolation(points: &[(usize, f64)]) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(Error::Unfit(format!("need at least 3 points, got {}", points.len())));
    }
    let mut chis: Vec<usize> = points.iter().map(|p| p.0).collect();
    chis.sort_unstable();
    if chis[0] == 0 {
        return Err(Error::Unfit("chi must be positive".into()));
    }
    if chis.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Unfit("duplicate chi values".into()));
    }
    if points.iter().any(|p| !p.1.is_finite()) {
        return Err(Error::Unfit("non-finite value".into()));
    }
    let vmax = points.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    if points.iter().any(|p| p.1.abs() <= NEAR_ZERO_REL * vmax) || vmax == 0.0 {
        return Err(Error::Unfit("value at or near zero".into()));
    }
    let sign = points[0].1.signum();
    if points.iter().any(|p| p.1.signum() != sign) {
        return Err(Error::Unfit("values change sign".into()));
    }

    let xs: Vec<f64> = points.iter().map(|p| 1.0 / p.0 as f64).collect();
    let vs: Vec<f64> = points.iter().map(|p| p.1).collect();
    let n = xs.len() as f64;

    // ln|v| = ln|b| − a·x
    let ys: Vec<f64> = vs.iter().map(|v| v.abs().ln()).collect();
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let mut a = -sxy / sxx;
    let mut b = sign * (ym + a * xm).exp();

    let cost = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&vs)
            .map(|(x, v)| {
                let r = b * (-a * x).exp() - v;
                r * r
            })
            .sum()
    };

    // Normal-equation step for (δa, δb) with Levenberg damping `mu`.
    let step = |a: f64, b: f64, mu: f64| -> Option<(f64, f64)> {
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (x, v) in xs.iter().zip(&vs) {
            let e = (-a * x).exp();
            let r = b * e - v;
            let da = -b * x * e;
            jaa += da * da;
            jab += da * e;
            jbb += e * e;
            ga += da * r;
            gb += e * r;
        }
        let (maa, mbb) = (jaa * (1.0 + mu), jbb * (1.0 + mu));
        let det = maa * mbb - jab * jab;
        if det <= 0.0 || !det.is_finite() {
            return None;
        }
        Some((-(mbb * ga - jab * gb) / det, -(maa * gb - jab * ga) / det))
    };

    let mut c = cost(a, b);
    let mut mu = 1e-3;
    'outer: for _ in 0..500 {
        loop {
            if mu > 1e12 {
                break 'outer;
            }
            let Some((da, db)) = step(a, b, mu) else {
                mu *= 10.0;
                continue;
            };
            let nc = cost(a + da, b + db);
            if nc.is_finite() && nc < c {
                a += da;
                b += db;
                c = nc;
                mu = (mu / 10.0).max(1e-12);
                break;
            }
            mu *= 10.0;
        }
    }
    // Cost differences vanish in rounding long before the parameters settle;
    // polish with undamped steps while they keep shrinking.
    let mut last = f64::INFINITY;
    for _ in 0..50 {
        let Some((da, db)) = step(a, b, 0.0) else { break };
        let size = (da / a.abs().max(1.0)).hypot(db / b.abs());
        if size.is_nan() || size >= last {
            break;
        }
        a += da;
        b += db;
        last = size;
        if size == 0.0 {
            break;
        }
    }
    let c = cost(a, b);
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::Unfit("fit diverged".into()));
    }
    Ok(FitResult {
        a,
        b,
        residual: (c / n).sqrt(),
    })
}

/// Absolute error of one candidate point against the reference.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorPoint {
    pub theta: f64,
    pub observable: String,
    pub steps: usize,
    pub extra_rx: bool,
    pub method: String,
    pub param: String,
    pub reference: f64,
    pub value: f64,
    pub abs_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub param: String,
    pub points: usize,
    pub max_abs_error: f64,
    pub mean_abs_error: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ErrorReport {
    pub points: Vec<ErrorPoint>,
    /// One entry per (method, param), in order of first appearance.
    pub summaries: Vec<MethodSummary>,
}

fn same_theta(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(1.0)
}

fn same_key(a: &ResultRow, b: &ResultRow) -> bool {
    a.observable == b.observable && a.steps == b.steps && a.extra_rx == b.extra_rx && same_theta(a.theta, b.theta)
}

/// Compares every candidate row with the reference row of equal
/// (θ, observable, steps, extra_rx). A candidate without a unique reference
/// is a [`Error::KeyMismatch`].
pub fn error_report(reference: &[ResultRow], candidates: &[Vec<ResultRow>]) -> Result<ErrorReport> {
    let mut report = ErrorReport::default();
    for row in candidates.iter().flatten() {
        let mut matches = reference.iter().filter(|r| same_key(r, row));
        let r = matches.next().ok_or_else(|| {
            Error::KeyMismatch(format!(
                "no reference for {} T={} extra_rx={} theta={}",
                row.observable, row.steps, row.extra_rx, row.theta
            ))
        })?;
        if matches.next().is_some() {
            return Err(Error::KeyMismatch(format!(
                "duplicate reference rows for {} T={} theta={}",
                row.observable, row.steps, row.theta
            )));
        }
        report.points.push(ErrorPoint {
            theta: row.theta,
            observable: row.observable.clone(),
            steps: row.steps,
            extra_rx: row.extra_rx,
            method: row.method.clone(),
            param: row.param.clone(),
            reference: r.value,
            value: row.value,
            abs_error: (row.value - r.value).abs(),
        });
    }
    for p in &report.points {
        let s = match report
            .summaries
            .iter_mut()
            .find(|s| s.method == p.method && s.param == p.param)
        {
            Some(s) => s,
            None => {
                report.summaries.push(MethodSummary {
                    method: p.method.clone(),
                    param: p.param.clone(),
                    points: 0,
                    max_abs_error: 0.0,
                    mean_abs_error: 0.0,
                });
                report.summaries.last_mut().unwrap()
            }
        };
        s.points += 1;
        s.max_abs_error = s.max_abs_error.max(p.abs_error);
        s.mean_abs_error += p.abs_error;
    }
    for s in &mut report.summaries {
        s.mean_abs_error /= s.points as f64;
    }
    Ok(report)
}

impl ErrorReport {
    pub fn write_points_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "theta",
            "observable",
            "steps",
            "extra_rx",
            "method",
            "param",
            "reference",
            "value",
            "abs_error",
        ])?;
        for p in &self.points {
            wr.write_record([
                fmt_f64(p.theta),
                p.observable.clone(),
                p.steps.to_string(),
                p.extra_rx.to_string(),
                p.method.clone(),
                p.param.clone(),
                fmt_f64(p.reference),
                fmt_f64(p.value),
                fmt_f64(p.abs_error),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["method", "param", "points", "max_abs_error", "mean_abs_error"])?;
        for s in &self.summaries {
            wr.write_record([
                s.method.clone(),
                s.param.clone(),
                s.points.to_string(),
                fmt_f64(s.max_abs_error),
                fmt_f64(s.mean_abs_error),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}
