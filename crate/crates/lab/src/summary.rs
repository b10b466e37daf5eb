//! Per-depth statistics of campaign results and depth trends.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::experiments::TrialResult;

/// Statistics reported for every `(depth, metric)` pair, in column order.
pub const STATISTICS: [&str; 5] = ["median", "q1", "q3", "iqr", "mean"];

/// Below this absolute log-slope per depth unit a trend counts as flat.
pub const FLAT_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub depth: u32,
    pub metric: String,
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub mean: f64,
}

impl MetricSummary {
    pub fn statistic(&self, name: &str) -> Option<f64> {
        match name {
            "median" => Some(self.median),
            "q1" => Some(self.q1),
            "q3" => Some(self.q3),
            "iqr" => Some(self.iqr),
            "mean" => Some(self.mean),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendFlag {
    Increasing,
    Decreasing,
    Flat,
    /// Fewer than two depths.
    Undefined,
    /// A median is not positive, so the log-slope does not exist.
    NonPositive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub metric: String,
    /// Least-squares slope of `ln median` against depth.
    pub slope: Option<f64>,
    pub flag: TrendFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub rows: Vec<MetricSummary>,
    pub trends: Vec<Trend>,
    /// Rows that carried an error instead of metrics.
    pub failed_trials: usize,
    /// Rows whose `converged` metric is 0.
    pub unconverged_trials: usize,
}

impl Summary {
    pub fn get(&self, depth: u32, metric: &str) -> Option<&MetricSummary> {
        self.rows.iter().find(|r| r.depth == depth && r.metric == metric)
    }

    pub fn depths(&self) -> Vec<u32> {
        self.rows.iter().map(|r| r.depth).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn metrics(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.metric.clone()).collect::<BTreeSet<_>>().into_iter().collect()
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn describe(depth: u32, metric: &str, mut values: Vec<f64>) -> MetricSummary {
    values.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile(&values, 0.25), quantile(&values, 0.75));
    MetricSummary {
        depth,
        metric: metric.to_string(),
        count: values.len(),
        median: quantile(&values, 0.5),
        q1,
        q3,
        iqr: q3 - q1,
        mean: values.iter().sum::<f64>() / values.len() as f64,
    }
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn trend(metric: &str, rows: &[&MetricSummary]) -> Trend {
    let (slope, flag) = if rows.len() < 2 {
        (None, TrendFlag::Undefined)
    } else if rows.iter().any(|r| r.median <= 0.0) {
        (None, TrendFlag::NonPositive)
    } else {
        let x: Vec<f64> = rows.iter().map(|r| f64::from(r.depth)).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.median.ln()).collect();
        let s = ls_slope(&x, &y).unwrap_or(0.0);
        let flag = if s.abs() <= FLAT_SLOPE {
            TrendFlag::Flat
        } else if s > 0.0 {
            TrendFlag::Increasing
        } else {
            TrendFlag::Decreasing
        };
        (Some(s), flag)
    };
    Trend {
        metric: metric.to_string(),
        slope,
        flag,
    }
}

pub fn summarize(results: &[TrialResult]) -> Result<Summary> {
    let first = results
        .first()
        .ok_or_else(|| LabError::Input("no results to summarize".into()))?;
    let mut groups: BTreeMap<(String, u32), Vec<f64>> = BTreeMap::new();
    let mut failed = 0;
    let mut unconverged = 0;
    for r in results {
        if r.error.is_some() {
            failed += 1;
        }
        if r.metrics.get("converged") == Some(&0.0) {
            unconverged += 1;
        }
        for (name, &v) in &r.metrics {
            groups.entry((name.clone(), r.depth)).or_default().push(v);
        }
    }
    let mut rows: Vec<MetricSummary> = groups
        .into_iter()
        .map(|((metric, depth), values)| describe(depth, &metric, values))
        .collect();
    let mut by_metric: BTreeMap<&str, Vec<&MetricSummary>> = BTreeMap::new();
    for r in &rows {
        by_metric.entry(r.metric.as_str()).or_default().push(r);
    }
    let trends = by_metric.iter().map(|(m, rs)| trend(m, rs)).collect();
    rows.sort_by(|a, b| (a.depth, &a.metric).cmp(&(b.depth, &b.metric)));
    Ok(Summary {
        experiment: first.experiment.clone(),
        rows,
        trends,
        failed_trials: failed,
        unconverged_trials: unconverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentKind;
    use crate::experiments::Metrics;

    fn row(depth: u32, trial: u32, v: f64) -> TrialResult {
        TrialResult {
            experiment: "s".into(),
            kind: ExperimentKind::CarlesonTrend,
            depth,
            trial,
            seed: 0,
            metrics: Metrics::from([("m".to_string(), v)]),
            error: None,
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(summarize(&[]), Err(LabError::Input(_))));
    }

    #[test]
    fn constant_metric_has_zero_iqr() {
        let rows: Vec<_> = (0..7).map(|t| row(3, t, 2.5)).collect();
        let s = summarize(&rows).unwrap();
        let m = s.get(3, "m").unwrap();
        assert_eq!((m.median, m.iqr, m.count), (2.5, 0.0, 7));
        assert_eq!(s.trends[0].flag, TrendFlag::Undefined);
        assert_eq!(s.trends[0].slope, None);
    }

    #[test]
    fn doubling_metric_has_log2_slope() {
        let rows: Vec<_> = (0..5)
            .flat_map(|d| (0..3).map(move |t| row(d, t, 2f64.powi(d as i32) * (1.0 + 0.01 * t as f64))))
            .collect();
        let s = summarize(&rows).unwrap();
        let slope = s.trends[0].slope.unwrap();
        assert!((slope - 2f64.ln()).abs() < 1e-9);
        assert_eq!(s.trends[0].flag, TrendFlag::Increasing);
    }

    #[test]
    fn quartiles_interpolate() {
        let rows: Vec<_> = [1.0, 2.0, 3.0, 4.0].iter().enumerate().map(|(t, &v)| row(0, t as u32, v)).collect();
        let m = summarize(&rows).unwrap().rows[0].clone();
        assert_eq!((m.q1, m.median, m.q3, m.mean), (1.75, 2.5, 3.25, 2.5));
    }
}
