use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate};
use serde::Serialize;

use crate::dag::{DagRead, TimestampFilter};
use crate::error::{Error, Result};
use crate::isochrone::{compute_isochrone, update_clock, Clock, ClockChange, MemClock, Traversal};
use crate::storage::KvRead;

pub const YEAR_SECONDS: f64 = 365.25 * 86_400.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BucketWidth {
    /// Calendar months, aligned on January.
    Months(u32),
    Seconds(i64),
}

impl Default for BucketWidth {
    fn default() -> Self {
        BucketWidth::Months(1)
    }
}

impl fmt::Display for BucketWidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BucketWidth::Months(n) => write!(f, "{n}m"),
            BucketWidth::Seconds(n) => write!(f, "{n}s"),
        }
    }
}

impl FromStr for BucketWidth {
    type Err = Error;

    /// `3m` for three months, `86400s` for one day.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParams(format!("bad bucket width {s:?}, expected e.g. 1m or 86400s"));
        let (n, unit) = s.split_at(s.len().saturating_sub(1));
        match unit {
            "m" => n.parse().ok().filter(|&n| n > 0).map(BucketWidth::Months).ok_or_else(bad),
            "s" => n.parse().ok().filter(|&n| n > 0).map(BucketWidth::Seconds).ok_or_else(bad),
            _ => Err(bad()),
        }
    }
}

impl BucketWidth {
    fn index(self, t: i64) -> i64 {
        match self {
            BucketWidth::Months(n) => {
                let d = DateTime::from_timestamp(t, 0).expect("timestamp in chrono range");
                let m = d.year() as i64 * 12 + d.month0() as i64;
                m.div_euclid(n as i64)
            }
            BucketWidth::Seconds(n) => t.div_euclid(n),
        }
    }

    fn start(self, index: i64) -> i64 {
        match self {
            BucketWidth::Months(n) => {
                let m = index * n as i64;
                NaiveDate::from_ymd_opt(m.div_euclid(12) as i32, m.rem_euclid(12) as u32 + 1, 1)
                    .expect("valid month")
                    .and_hms_opt(0, 0, 0)
                    .expect("midnight")
                    .and_utc()
                    .timestamp()
            }
            BucketWidth::Seconds(n) => index * n,
        }
    }

    pub fn label(self, start: i64) -> String {
        match self {
            BucketWidth::Months(_) => DateTime::from_timestamp(start, 0).expect("in range").format("%Y-%m").to_string(),
            BucketWidth::Seconds(_) => start.to_string(),
        }
    }
}

/// Counts per time bucket. Buckets are contiguous from the first to the
/// last non-empty one.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeBucketSeries {
    pub width: BucketWidth,
    /// `(bucket start, count)`, bucket start in Unix seconds.
    pub points: Vec<(i64, u64)>,
}

impl TimeBucketSeries {
    pub fn from_timestamps(width: BucketWidth, timestamps: impl IntoIterator<Item = i64>) -> TimeBucketSeries {
        let mut idx: Vec<i64> = timestamps.into_iter().map(|t| width.index(t)).collect();
        idx.sort_unstable();
        let mut points = Vec::new();
        if let (Some(&lo), Some(&hi)) = (idx.first(), idx.last()) {
            let mut it = idx.iter().peekable();
            for i in lo..=hi {
                let mut n = 0;
                while it.next_if(|&&x| x == i).is_some() {
                    n += 1;
                }
                points.push((width.start(i), n));
            }
        }
        TimeBucketSeries { width, points }
    }

    pub fn total(&self) -> u64 {
        self.points.iter().map(|p| p.1).sum()
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "bucket,count")?;
        for (t, n) in &self.points {
            writeln!(w, "{},{n}", self.width.label(*t))?;
        }
        Ok(())
    }

    /// Reads `bucket,count` CSV. Month labels give a monthly series.
    pub fn read_csv(r: impl BufRead) -> Result<TimeBucketSeries> {
        let mut width = BucketWidth::Seconds(1);
        let mut points = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let parse = || -> Option<(&str, u64)> {
                let (b, n) = line.split_once(',')?;
                Some((b.trim(), n.trim().parse().ok()?))
            };
            let (label, n) = parse().ok_or(Error::Parse { line: i + 1, message: "expected bucket,count".into() })?;
            if label.parse::<i64>().is_err() {
                width = BucketWidth::Months(1);
            }
            points.push((parse_bucket_label(label)?, n));
        }
        Ok(TimeBucketSeries { width, points })
    }
}

/// Reads a bucket label as written by [`TimeBucketSeries::write_csv`]:
/// `YYYY-MM` or Unix seconds. Returns the bucket start.
pub fn parse_bucket_label(label: &str) -> Result<i64> {
    if let Ok(t) = label.parse::<i64>() {
        return Ok(t);
    }
    let bad = || Error::InvalidParams(format!("bad bucket label {label:?}"));
    let (y, m) = label.split_once('-').ok_or_else(bad)?;
    let (y, m): (i32, u32) = (y.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?);
    let d = NaiveDate::from_ymd_opt(y, m, 1).ok_or_else(bad)?;
    Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp())
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthSeries {
    pub revisions: TimeBucketSeries,
    pub contents: TimeBucketSeries,
}

/// Original revisions bucketed by their own timestamp, and contents by the
/// timestamp of the earliest accepted revision holding them.
pub fn original_growth_series<V: KvRead + ?Sized>(
    view: &V,
    filter: TimestampFilter,
    width: BucketWidth,
) -> Result<GrowthSeries> {
    let mut clock = MemClock::new();
    let mut revisions = Vec::new();
    let mut contents = Vec::new();
    for r in view.revision_refs(filter)? {
        let r = r?;
        revisions.push(r.timestamp);
        let iso = compute_isochrone(view, &clock, &r, Traversal::Pruned)?;
        for (c, _) in &iso.inner_content_edges {
            if clock.lower(*c, r.timestamp)? == ClockChange::Inserted {
                contents.push(r.timestamp);
            }
        }
        update_clock(&mut clock, &iso)?;
    }
    Ok(GrowthSeries {
        revisions: TimeBucketSeries::from_timestamps(width, revisions),
        contents: TimeBucketSeries::from_timestamps(width, contents),
    })
}

/// `count ≈ a·e^{r (t − 1970)}` with `t` in years.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentialFit {
    pub a: f64,
    /// Rate per year.
    pub r: f64,
    /// `12·ln2/r`; infinite when `r` is zero.
    pub doubling_months: f64,
    /// Root mean square of the residuals of `ln(count)`.
    pub residual: f64,
    /// Fitted span in years since 1970.
    pub window: (f64, f64),
    pub points: usize,
}

pub fn doubling_months(r: f64) -> f64 {
    if r.abs() < 1e-9 {
        f64::INFINITY
    } else {
        12.0 * std::f64::consts::LN_2 / r
    }
}

/// Least squares on `ln(count)` over non-empty buckets whose start lies in
/// `window` (Unix seconds, inclusive).
pub fn fit_exponential(series: &TimeBucketSeries, window: Option<(i64, i64)>) -> Result<ExponentialFit> {
    let points: Vec<(f64, f64)> = series
        .points
        .iter()
        .filter(|(t, _)| window.is_none_or(|(lo, hi)| (lo..=hi).contains(t)))
        .map(|&(t, n)| (t as f64 / YEAR_SECONDS, n as f64))
        .collect();
    fit_exponential_points(&points)
}

/// Same fit over `(years since 1970, value)` pairs; non-positive values
/// are ignored.
pub fn fit_exponential_points(points: &[(f64, f64)]) -> Result<ExponentialFit> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.1 > 0.0).map(|&(x, y)| (x, y.ln())).collect();
    if pts.len() < 8 {
        return Err(Error::InsufficientData { needed: 8, have: pts.len() });
    }
    let w = vec![1.0; pts.len()];
    let (intercept, slope, rms) = weighted_line(&pts, &w);
    let lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(ExponentialFit {
        a: intercept.exp(),
        r: slope,
        doubling_months: doubling_months(slope),
        residual: rms,
        window: (lo, hi),
        points: pts.len(),
    })
}

/// Weighted least-squares line `y = b0 + b1 x`; returns `(b0, b1, rms)`.
pub(crate) fn weighted_line(pts: &[(f64, f64)], w: &[f64]) -> (f64, f64, f64) {
    let sw: f64 = w.iter().sum();
    let mx = pts.iter().zip(w).map(|(p, w)| w * p.0).sum::<f64>() / sw;
    let my = pts.iter().zip(w).map(|(p, w)| w * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().zip(w).map(|(p, w)| w * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().zip(w).map(|(p, w)| w * (p.0 - mx) * (p.1 - my)).sum();
    let b1 = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let b0 = my - b1 * mx;
    let rms = (pts.iter().map(|p| (p.1 - b0 - b1 * p.0).powi(2)).sum::<f64>() / pts.len() as f64).sqrt();
    (b0, b1, rms)
}
