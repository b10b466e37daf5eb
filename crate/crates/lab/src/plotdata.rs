//! Plot-ready tables: one row per depth, one column per `(metric,
//! statistic)` pair, written as CSV and as a JSON mirror with a schema
//! sidecar describing the columns.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::summary::{Summary, STATISTICS};

pub const CSV_FILE: &str = "plotdata.csv";
pub const JSON_FILE: &str = "plotdata.json";
pub const SCHEMA_FILE: &str = "plotdata.schema.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotFormat {
    Csv,
    Json,
    Both,
}

/// Missing cells (a metric absent at some depth) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<String>,
    pub description: String,
}

pub fn plot_table(summary: &Summary) -> PlotTable {
    let metrics = summary.metrics();
    let mut columns = vec!["depth".to_string()];
    for m in &metrics {
        columns.extend(STATISTICS.iter().map(|s| format!("{m}.{s}")));
    }
    let rows = summary
        .depths()
        .into_iter()
        .map(|d| {
            let mut row = vec![Some(f64::from(d))];
            for m in &metrics {
                let cell = summary.get(d, m);
                row.extend(STATISTICS.iter().map(|s| cell.and_then(|c| c.statistic(s))));
            }
            row
        })
        .collect();
    PlotTable { columns, rows }
}

pub fn schema(table: &PlotTable) -> Vec<ColumnSchema> {
    table
        .columns
        .iter()
        .map(|c| match c.rsplit_once('.') {
            Some((metric, stat)) => ColumnSchema {
                name: c.clone(),
                metric: Some(metric.to_string()),
                statistic: Some(stat.to_string()),
                description: format!("{stat} of {metric} over the trials at this depth; empty when absent"),
            },
            None => ColumnSchema {
                name: c.clone(),
                metric: None,
                statistic: None,
                description: "sweep depth (meaning depends on the experiment kind)".into(),
            },
        })
        .collect()
}

pub fn write_csv<W: Write>(table: &PlotTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| v.map_or(String::new(), |x| format!("{x:?}"))))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<PlotTable> {
    let mut r = csv::Reader::from_reader(input);
    let columns: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|f| {
                if f.is_empty() {
                    Ok(None)
                } else {
                    f.parse::<f64>()
                        .map(Some)
                        .map_err(|e| LabError::Input(format!("bad number {f:?}: {e}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(PlotTable { columns, rows })
}

pub fn write_json<W: Write>(table: &PlotTable, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, table)?;
    Ok(())
}

pub fn read_json<R: Read>(input: R) -> Result<PlotTable> {
    Ok(serde_json::from_reader(input)?)
}

fn create(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| LabError::io(path, e))
}

/// Writes the table in the requested formats plus the schema sidecar and
/// returns the paths written.
pub fn emit_plotdata(summary: &Summary, dir: &Path, format: PlotFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let table = plot_table(summary);
    let mut written = Vec::new();
    if matches!(format, PlotFormat::Csv | PlotFormat::Both) {
        let path = dir.join(CSV_FILE);
        write_csv(&table, create(&path)?)?;
        written.push(path);
    }
    if matches!(format, PlotFormat::Json | PlotFormat::Both) {
        let path = dir.join(JSON_FILE);
        write_json(&table, create(&path)?)?;
        written.push(path);
    }
    let path = dir.join(SCHEMA_FILE);
    serde_json::to_writer_pretty(create(&path)?, &schema(&table))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::summary::MetricSummary;

    fn summary(metrics: &[&str], depths: &[u32]) -> Summary {
        let mut rows = Vec::new();
        for &d in depths {
            for (k, m) in metrics.iter().enumerate() {
                let v = f64::from(d) * (k as f64 + 1.0) / 3.0;
                rows.push(MetricSummary {
                    depth: d,
                    metric: m.to_string(),
                    count: 3,
                    median: v,
                    q1: v - 0.1,
                    q3: v + 0.1,
                    iqr: 0.2,
                    mean: v,
                });
            }
        }
        Summary {
            experiment: "p".into(),
            rows,
            trends: Vec::new(),
            failed_trials: 0,
            unconverged_trials: 0,
        }
    }

    #[test]
    fn empty_summary_gives_header_only_csv() {
        let mut buf = Vec::new();
        write_csv(&plot_table(&summary(&[], &[])), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "depth\n");
    }

    #[test]
    fn two_metrics_three_depths_shape() {
        let t = plot_table(&summary(&["a", "b"], &[8, 10, 12]));
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.columns.len(), 1 + 2 * STATISTICS.len());
        assert!(t.rows.iter().all(|r| r.len() == t.columns.len()));
    }

    #[test]
    fn csv_and_json_round_trip() {
        let mut s = summary(&["a", "b"], &[1, 2, 3]);
        s.rows.retain(|r| !(r.depth == 2 && r.metric == "b"));
        let t = plot_table(&s);
        assert!(t.rows[1].iter().any(Option::is_none));
        let mut buf = Vec::new();
        write_csv(&t, &mut buf).unwrap();
        assert_eq!(read_csv(buf.as_slice()).unwrap(), t);
        let mut buf = Vec::new();
        write_json(&t, &mut buf).unwrap();
        assert_eq!(read_json(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn schema_describes_every_column() {
        let t = plot_table(&summary(&["gram_norm"], &[4]));
        let s = schema(&t);
        assert_eq!(s.len(), t.columns.len());
        assert_eq!(s[1].metric.as_deref(), Some("gram_norm"));
        assert_eq!(s[1].statistic.as_deref(), Some("median"));
    }
}
