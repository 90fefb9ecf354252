//! Result rows and the two CSV artifacts: one row per audit, plus a grouped
//! summary with normal-approximation 95% confidence intervals.
//!
//! `wall_ms` is written exactly as stored; the harness zeroes it so a rerun
//! of the same config yields byte-identical files, and reports real timing
//! on stderr instead. Floats print in Rust's shortest round-trip form.

use std::fmt::Write as _;
use std::path::Path;

use recaudit_core::audit::MetricKind;
use thiserror::Error;

pub const ROWS_HEADER: &str =
    "experiment,metric,k,beta,user,counterpart,baseline,optimized,lift_or_instability,epochs,seed,wall_ms";
pub const SUMMARY_HEADER: &str = "experiment,metric,k,beta,mean,stderr,ci_lo,ci_hi,count";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("row {row}: {field} is not finite")]
    NonFinite { row: usize, field: &'static str },
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv line {line}: {what}")]
    Parse { line: usize, what: &'static str },
}

/// One audited pair. `counterpart` is the target item for reachability and
/// the adversary user for stability; `lift_or_instability` carries lift for
/// reachability rows and the optimized instability for stability rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub metric: MetricKind,
    pub k: usize,
    pub beta: f64,
    pub user: u32,
    pub counterpart: u32,
    pub baseline: f64,
    pub optimized: f64,
    pub lift_or_instability: f64,
    pub epochs: usize,
    pub seed: u64,
    pub wall_ms: u64,
}

impl ResultRow {
    fn check_finite(&self, row: usize) -> Result<(), CsvError> {
        for (field, v) in [
            ("beta", self.beta),
            ("baseline", self.baseline),
            ("optimized", self.optimized),
            ("lift_or_instability", self.lift_or_instability),
        ] {
            if !v.is_finite() {
                return Err(CsvError::NonFinite { row, field });
            }
        }
        Ok(())
    }

    fn push_line(&self, out: &mut String) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.experiment,
            self.metric.name(),
            self.k,
            self.beta,
            self.user,
            self.counterpart,
            self.baseline,
            self.optimized,
            self.lift_or_instability,
            self.epochs,
            self.seed,
            self.wall_ms,
        );
    }
}

pub fn rows_to_csv(rows: &[ResultRow]) -> Result<String, CsvError> {
    let mut out = String::from(ROWS_HEADER);
    out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        row.check_finite(i + 1)?;
        row.push_line(&mut out);
    }
    Ok(out)
}

pub fn write_rows(rows: &[ResultRow], path: &Path) -> Result<(), CsvError> {
    let text = rows_to_csv(rows)?;
    std::fs::write(path, text).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn metric_from_name(name: &str) -> Option<MetricKind> {
    [
        MetricKind::PastReach,
        MetricKind::FutureReach,
        MetricKind::PastStab,
        MetricKind::FutureStab,
    ]
    .into_iter()
    .find(|m| m.name() == name)
}

/// Parses a file produced by [`rows_to_csv`]; used to recompute summary
/// statistics from the row artifact.
pub fn parse_rows(text: &str) -> Result<Vec<ResultRow>, CsvError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == ROWS_HEADER => {}
        _ => {
            return Err(CsvError::Parse {
                line: 1,
                what: "missing row header",
            })
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let err = |what| CsvError::Parse {
            line: idx + 1,
            what,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 {
            return Err(err("expected 12 fields"));
        }
        rows.push(ResultRow {
            experiment: fields[0].to_owned(),
            metric: metric_from_name(fields[1]).ok_or_else(|| err("unknown metric"))?,
            k: fields[2].parse().map_err(|_| err("bad k"))?,
            beta: fields[3].parse().map_err(|_| err("bad beta"))?,
            user: fields[4].parse().map_err(|_| err("bad user"))?,
            counterpart: fields[5].parse().map_err(|_| err("bad counterpart"))?,
            baseline: fields[6].parse().map_err(|_| err("bad baseline"))?,
            optimized: fields[7].parse().map_err(|_| err("bad optimized"))?,
            lift_or_instability: fields[8]
                .parse()
                .map_err(|_| err("bad lift_or_instability"))?,
            epochs: fields[9].parse().map_err(|_| err("bad epochs"))?,
            seed: fields[10].parse().map_err(|_| err("bad seed"))?,
            wall_ms: fields[11].parse().map_err(|_| err("bad wall_ms"))?,
        });
    }
    Ok(rows)
}

/// Statistics over one `(experiment, metric, k, beta)` group of rows.
/// `stderr` and the interval are `None` below two observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub experiment: String,
    pub metric: MetricKind,
    pub k: usize,
    pub beta: f64,
    pub mean: f64,
    pub stderr: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub count: usize,
}

/// Groups rows by `(experiment, metric, k, beta)` in first-seen order and
/// summarizes each group's `lift_or_instability` values.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, MetricKind, usize, u64)> = Vec::new();
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for row in rows {
        let key = (row.experiment.clone(), row.metric, row.k, row.beta.to_bits());
        match order.iter().position(|k| *k == key) {
            Some(i) => groups[i].push(row.lift_or_instability),
            None => {
                order.push(key);
                groups.push(vec![row.lift_or_instability]);
            }
        }
    }
    order
        .into_iter()
        .zip(groups)
        .map(|((experiment, metric, k, beta_bits), values)| {
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let (stderr, ci_lo, ci_hi) = if n >= 2 {
                let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (n - 1) as f64;
                let se = (var / n as f64).sqrt();
                (Some(se), Some(mean - 1.96 * se), Some(mean + 1.96 * se))
            } else {
                (None, None, None)
            };
            SummaryRow {
                experiment,
                metric,
                k,
                beta: f64::from_bits(beta_bits),
                mean,
                stderr,
                ci_lo,
                ci_hi,
                count: n,
            }
        })
        .collect()
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for s in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.experiment,
            s.metric.name(),
            s.k,
            s.beta,
            s.mean,
            opt_field(s.stderr),
            opt_field(s.ci_lo),
            opt_field(s.ci_hi),
            s.count,
        );
    }
    out
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<(), CsvError> {
    std::fs::write(path, summary_to_csv(rows)).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(value: f64) -> ResultRow {
        ResultRow {
            experiment: "stab-sweep".into(),
            metric: MetricKind::PastStab,
            k: 2,
            beta: 0.8,
            user: 1,
            counterpart: 2,
            baseline: 0.0,
            optimized: value,
            lift_or_instability: value,
            epochs: 50,
            seed: 7,
            wall_ms: 0,
        }
    }

    #[test]
    fn empty_rows_give_header_only() {
        assert_eq!(rows_to_csv(&[]).unwrap(), format!("{ROWS_HEADER}\n"));
        assert_eq!(summary_to_csv(&[]), format!("{SUMMARY_HEADER}\n"));
    }

    #[test]
    fn single_row_summary_has_empty_interval_fields() {
        let summary = summarize(&[row(0.25)]);
        assert_eq!(summary.len(), 1);
        assert_eq!(summary[0].mean, 0.25);
        assert_eq!(summary[0].count, 1);
        assert_eq!(summary[0].stderr, None);
        let text = summary_to_csv(&summary);
        assert!(text.ends_with("stab-sweep,past-stab,2,0.8,0.25,,,,1\n"));
    }

    #[test]
    fn three_row_fixture_matches_hand_arithmetic() {
        let rows = [row(1.0), row(2.0), row(4.0)];
        let s = &summarize(&rows)[0];
        let mean: f64 = (1.0 + 2.0 + 4.0) / 3.0;
        let var = ((1.0 - mean).powi(2) + (2.0 - mean).powi(2) + (4.0 - mean).powi(2)) / 2.0;
        let se = (var / 3.0).sqrt();
        assert_eq!(s.mean, mean);
        assert_eq!(s.stderr, Some(se));
        assert_eq!(s.ci_lo, Some(mean - 1.96 * se));
        assert_eq!(s.ci_hi, Some(mean + 1.96 * se));
        assert_eq!(s.count, 3);
    }

    #[test]
    fn groups_split_on_every_key_field_in_first_seen_order() {
        let mut b = row(0.5);
        b.beta = 5.0;
        let mut k = row(0.5);
        k.k = 5;
        let rows = [row(0.1), b, k, row(0.3)];
        let summary = summarize(&rows);
        assert_eq!(summary.len(), 3);
        assert_eq!(summary[0].count, 2);
        assert_eq!(summary[0].mean, 0.2);
        assert_eq!((summary[1].beta, summary[2].k), (5.0, 5));
    }

    #[test]
    fn rows_round_trip_through_csv_text() {
        let rows = vec![row(0.1), row(1.0 / 3.0), row(0.30000000000000004)];
        let text = rows_to_csv(&rows).unwrap();
        assert_eq!(parse_rows(&text).unwrap(), rows);
    }

    #[test]
    fn non_finite_fields_are_rejected_with_position() {
        let mut bad = row(f64::NAN);
        bad.lift_or_instability = f64::INFINITY;
        let err = rows_to_csv(&[row(0.1), bad]).unwrap_err();
        assert!(matches!(
            err,
            CsvError::NonFinite {
                row: 2,
                field: "optimized"
            }
        ));
    }
}
