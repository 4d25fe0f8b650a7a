//! File formats.
//!
//! * Dataset CSV: header `t,seq_0,...,seq_{N-1}`, one row per time point `t = 1..T`.
//! * Truth JSON: `{"a": [...], "sequences": [{"tau": [...], "delta": [...], "mu0": ...}]}`.
//! * Intensity CSV: `t,a_hat`.
//! * Tables: whitespace-aligned text with `value±se` cells. Numbers are printed
//!   in shortest round-trip form, so parsing a table gives back the exact values.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{Table1Row, Table2Report};
use crate::genmodel::{Dataset, GroundTruth, SampledSequence};
use crate::metrics::EvalReport;

pub fn write_dataset_csv<W: Write>(sequences: &[Vec<f64>], out: W) -> Result<()> {
    let t_len = sequences.first().map_or(0, |s| s.len());
    if sequences.iter().any(|s| s.len() != t_len) {
        return Err(Error::domain("all sequences must have the same length"));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((0..sequences.len()).map(|n| format!("seq_{n}")));
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(sequences.len() + 1);
    for t in 0..t_len {
        row.clear();
        row.push((t + 1).to_string());
        row.extend(sequences.iter().map(|s| s[t].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset CSV into one vector per sequence. Errors carry the
/// 1-based line and column of the offending cell.
pub fn read_dataset_csv<R: Read>(input: R) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.clone();
    if header.get(0) != Some("t") || header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            column: Some(1),
            message: "expected header `t,seq_0,...`".into(),
        });
    }
    for (k, name) in header.iter().enumerate().skip(1) {
        if name != format!("seq_{}", k - 1) {
            return Err(Error::Parse {
                line: 1,
                column: Some(k + 1),
                message: format!("expected column `seq_{}`, found `{name}`", k - 1),
            });
        }
    }
    let n = header.len() - 1;
    let mut seqs = vec![Vec::new(); n];
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(row + 2, |p| p.line() as usize);
            Error::Parse {
                line,
                column: None,
                message: e.to_string(),
            }
        })?;
        let line = rec.position().map_or(row + 2, |p| p.line() as usize);
        let t: usize = rec[0].trim().parse().map_err(|_| Error::Parse {
            line,
            column: Some(1),
            message: format!("invalid time index `{}`", &rec[0]),
        })?;
        if t != row + 1 {
            return Err(Error::Parse {
                line,
                column: Some(1),
                message: format!("expected t = {}, found {t}", row + 1),
            });
        }
        for (k, cell) in rec.iter().enumerate().skip(1) {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                line,
                column: Some(k + 1),
                message: format!("invalid number `{cell}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    column: Some(k + 1),
                    message: format!("non-finite value `{cell}`"),
                });
            }
            seqs[k - 1].push(v);
        }
    }
    if seqs[0].is_empty() {
        return Err(Error::Parse {
            line: 2,
            column: None,
            message: "dataset has no rows".into(),
        });
    }
    Ok(seqs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSequence {
    pub tau: Vec<usize>,
    pub delta: Vec<f64>,
    pub mu0: f64,
}

/// Ground-truth sidecar of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub a: Vec<f64>,
    pub sequences: Vec<TruthSequence>,
}

impl TruthFile {
    pub fn from_dataset(ds: &Dataset) -> Self {
        TruthFile {
            a: ds.a.clone(),
            sequences: ds
                .sequences
                .iter()
                .map(|s| TruthSequence {
                    tau: s.truth.tau.clone(),
                    delta: s.truth.delta.clone(),
                    mu0: s.truth.mu0,
                })
                .collect(),
        }
    }

    /// Reassembles a dataset from observations and this sidecar.
    pub fn into_dataset(self, x: Vec<Vec<f64>>) -> Result<Dataset> {
        if x.len() != self.sequences.len() {
            return Err(Error::domain(format!(
                "dataset has {} sequences but truth has {}",
                x.len(),
                self.sequences.len()
            )));
        }
        let t_len = self.a.len() + 1;
        let sequences = x
            .into_iter()
            .zip(self.sequences)
            .enumerate()
            .map(|(n, (x, tr))| {
                if x.len() != t_len {
                    return Err(Error::domain(format!("sequence {n} has length {}, expected {t_len}", x.len())));
                }
                if tr.tau.len() != tr.delta.len() {
                    return Err(Error::domain(format!("sequence {n}: tau and delta lengths differ")));
                }
                if tr.tau.windows(2).any(|w| w[0] >= w[1]) || tr.tau.iter().any(|&t| t == 0 || t >= t_len) {
                    return Err(Error::domain(format!(
                        "sequence {n}: tau must be increasing within 1..{}",
                        t_len - 1
                    )));
                }
                let mut truth = GroundTruth {
                    tau: tr.tau,
                    delta: tr.delta,
                    mu0: tr.mu0,
                    mu: Vec::new(),
                };
                truth.mu = truth.mean_path(t_len);
                Ok(SampledSequence { x, truth })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { a: self.a, sequences })
    }
}

pub fn write_intensity_csv<W: Write>(a_hat: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "a_hat"])?;
    for (k, a) in a_hat.iter().enumerate() {
        w.write_record([(k + 1).to_string(), a.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn cell(value: f64, se: Option<f64>) -> String {
    match se {
        Some(se) => format!("{value}±{se}"),
        None => format!("{value}"),
    }
}

fn parse_num(s: &str, line: usize, column: usize) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse {
        line,
        column: Some(column),
        message: format!("invalid number `{s}`"),
    })
}

fn parse_cell(s: &str, line: usize, column: usize) -> Result<(f64, Option<f64>)> {
    match s.split_once('±') {
        Some((v, se)) => Ok((parse_num(v, line, column)?, Some(parse_num(se, line, column)?))),
        None => Ok((parse_num(s, line, column)?, None)),
    }
}

fn align(rows: &[Vec<String>]) -> String {
    let ncol = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let widths: Vec<usize> = (0..ncol)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:<w$}", w = widths[c]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

const TABLE1_HEADER: [&str; 6] = ["delta", "d2_g_lower", "d2_g_scan", "horizon", "reps", "horizon_warning"];

/// Table 1 layout: one row per Delta with `Delta^2 g` cells.
pub fn table1_text(rows: &[Table1Row]) -> String {
    let mut grid = vec![TABLE1_HEADER.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    for r in rows {
        grid.push(vec![
            r.delta.to_string(),
            cell(r.lower, Some(r.lower_se)),
            cell(r.scan, Some(r.scan_se)),
            r.horizon.to_string(),
            r.reps.to_string(),
            r.horizon_warning.to_string(),
        ]);
    }
    align(&grid)
}

pub fn parse_table1_text(text: &str) -> Result<Vec<Table1Row>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, h)) if h.split_whitespace().eq(TABLE1_HEADER.iter().copied()) => {}
        Some((i, _)) => {
            return Err(Error::Parse {
                line: i + 1,
                column: None,
                message: "unexpected table1 header".into(),
            })
        }
        None => return Ok(Vec::new()),
    }
    lines
        .map(|(i, l)| {
            let line = i + 1;
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != TABLE1_HEADER.len() {
                return Err(Error::Parse {
                    line,
                    column: None,
                    message: format!("expected {} fields, found {}", TABLE1_HEADER.len(), f.len()),
                });
            }
            let missing_se = || Error::Parse {
                line,
                column: None,
                message: "table1 cells need a standard error".into(),
            };
            let (lower, lower_se) = parse_cell(f[1], line, 2)?;
            let (scan, scan_se) = parse_cell(f[2], line, 3)?;
            let int = |s: &str, c| {
                s.parse::<usize>().map_err(|_| Error::Parse {
                    line,
                    column: Some(c),
                    message: format!("invalid integer `{s}`"),
                })
            };
            Ok(Table1Row {
                delta: parse_num(f[0], line, 1)?,
                lower,
                lower_se: lower_se.ok_or_else(missing_se)?,
                scan,
                scan_se: scan_se.ok_or_else(missing_se)?,
                horizon: int(f[3], 4)?,
                reps: int(f[4], 5)?,
                horizon_warning: f[5].parse().map_err(|_| Error::Parse {
                    line,
                    column: Some(6),
                    message: format!("invalid flag `{}`", f[5]),
                })?,
            })
        })
        .collect()
}

/// One row of a parsed Table 2: the summary fields of both reports
/// (`per_replicate` is not part of the table and comes back empty).
#[derive(Debug, Clone, PartialEq)]
pub struct Table2TextRow {
    pub label: String,
    pub no_share: EvalReport,
    pub with_share: EvalReport,
}

const TABLE2_HEADER: [&str; 4] = ["G_q", "metric", "no_share", "with_share"];

/// Table 2 layout: per intensity law, rows for alpha, beta, gamma and the
/// replicate count under both pipelines. Missing values print as `-`.
pub fn table2_text(report: &Table2Report) -> String {
    let mut grid = vec![TABLE2_HEADER.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    for r in &report.rows {
        let (a, b) = (&r.no_share, &r.with_share);
        let gamma = |e: &EvalReport| e.gamma.map_or("-".to_string(), |g| cell(g, e.se_gamma));
        for (metric, x, y) in [
            ("alpha", cell(a.alpha, a.se_alpha), cell(b.alpha, b.se_alpha)),
            ("beta", cell(a.beta, a.se_beta), cell(b.beta, b.se_beta)),
            ("gamma", gamma(a), gamma(b)),
            ("replicates", a.replicates.to_string(), b.replicates.to_string()),
        ] {
            grid.push(vec![r.label.clone(), metric.to_string(), x, y]);
        }
    }
    align(&grid)
}

fn empty_report() -> EvalReport {
    EvalReport {
        replicates: 0,
        alpha: f64::NAN,
        beta: f64::NAN,
        gamma: None,
        se_alpha: None,
        se_beta: None,
        se_gamma: None,
        per_replicate: Vec::new(),
    }
}

pub fn parse_table2_text(text: &str) -> Result<Vec<Table2TextRow>> {
    let mut rows: Vec<Table2TextRow> = Vec::new();
    let mut header_seen = false;
    for (i, l) in text.lines().enumerate() {
        let line = i + 1;
        if l.trim().is_empty() || l.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = l.split_whitespace().collect();
        if !header_seen {
            if f != TABLE2_HEADER {
                return Err(Error::Parse {
                    line,
                    column: None,
                    message: "unexpected table2 header".into(),
                });
            }
            header_seen = true;
            continue;
        }
        if f.len() != 4 {
            return Err(Error::Parse {
                line,
                column: None,
                message: format!("expected 4 fields, found {}", f.len()),
            });
        }
        if rows.last().is_none_or(|r| r.label != f[0]) {
            rows.push(Table2TextRow {
                label: f[0].to_string(),
                no_share: empty_report(),
                with_share: empty_report(),
            });
        }
        let row = rows.last_mut().unwrap();
        for (col, rep) in [(2usize, &mut row.no_share), (3, &mut row.with_share)] {
            let s = f[col];
            match f[1] {
                "alpha" => (rep.alpha, rep.se_alpha) = parse_cell(s, line, col + 1)?,
                "beta" => (rep.beta, rep.se_beta) = parse_cell(s, line, col + 1)?,
                "gamma" if s == "-" => (rep.gamma, rep.se_gamma) = (None, None),
                "gamma" => {
                    let (g, se) = parse_cell(s, line, col + 1)?;
                    (rep.gamma, rep.se_gamma) = (Some(g), se);
                }
                "replicates" => {
                    rep.replicates = s.parse().map_err(|_| Error::Parse {
                        line,
                        column: Some(col + 1),
                        message: format!("invalid integer `{s}`"),
                    })?
                }
                other => {
                    return Err(Error::Parse {
                        line,
                        column: Some(2),
                        message: format!("unknown metric `{other}`"),
                    })
                }
            }
        }
    }
    Ok(rows)
}

/// Flat CSV record of one pipeline's summary in a Table 2 report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2CsvRecord {
    pub label: String,
    pub pipeline: String,
    pub replicates: usize,
    pub alpha: f64,
    pub se_alpha: Option<f64>,
    pub beta: f64,
    pub se_beta: Option<f64>,
    pub gamma: Option<f64>,
    pub se_gamma: Option<f64>,
}

pub fn table2_csv_records(report: &Table2Report) -> Vec<Table2CsvRecord> {
    report
        .rows
        .iter()
        .flat_map(|r| {
            [("no_share", &r.no_share), ("with_share", &r.with_share)].map(|(p, e)| Table2CsvRecord {
                label: r.label.clone(),
                pipeline: p.to_string(),
                replicates: e.replicates,
                alpha: e.alpha,
                se_alpha: e.se_alpha,
                beta: e.beta,
                se_beta: e.se_beta,
                gamma: e.gamma,
                se_gamma: e.se_gamma,
            })
        })
        .collect()
}

/// Serializes records with a header row.
pub fn write_csv<W: Write, T: Serialize>(records: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads records written by [`write_csv`]; lines starting with `#` are skipped.
pub fn read_csv<R: Read, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    r.deserialize()
        .map(|rec| {
            rec.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                column: None,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genmodel::{sample_multiseq, IntensitySpec, JumpSpec};
    use crate::metrics::ReplicateEval;
    use crate::rng::Streams;

    #[test]
    fn dataset_round_trip() {
        let ds = sample_multiseq(
            &IntensitySpec::constant(0.05).unwrap(),
            3,
            60,
            &JumpSpec::HmmYao { sigma_xi: 1.0 },
            1.0,
            &Streams::new(9),
            0,
        )
        .unwrap();
        let x: Vec<Vec<f64>> = ds.sequences.iter().map(|s| s.x.clone()).collect();
        let mut buf = Vec::new();
        write_dataset_csv(&x, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,seq_0,seq_1,seq_2\n1,"));
        let back = read_dataset_csv(&buf[..]).unwrap();
        assert_eq!(back, x);
        let truth = serde_json::to_string(&TruthFile::from_dataset(&ds)).unwrap();
        let tf: TruthFile = serde_json::from_str(&truth).unwrap();
        assert_eq!(tf.into_dataset(back).unwrap(), ds);
    }

    #[test]
    fn dataset_parse_errors_have_positions() {
        let bad = "t,seq_0,seq_1\n1,0.5,0.1\n2,0.3,abc\n";
        match read_dataset_csv(bad.as_bytes()) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (3, Some(3))),
            other => panic!("{other:?}"),
        }
        match read_dataset_csv("t,seq_1\n1,0.5\n".as_bytes()) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (1, Some(2))),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            read_dataset_csv("t,seq_0\n1,0.5\n3,0.1\n".as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(read_dataset_csv("t,seq_0\n1,0.5,0.2\n".as_bytes()).is_err());
    }

    #[test]
    fn table1_text_round_trip() {
        let rows = vec![
            Table1Row {
                delta: 1.0,
                lower: 2.713_456_789_012_3,
                lower_se: 0.031_234,
                scan: 2.9,
                scan_se: 0.04,
                horizon: 200,
                reps: 10_000,
                horizon_warning: false,
            },
            Table1Row {
                delta: 0.03,
                lower: 1.0 / 3.0,
                lower_se: 1e-17,
                scan: 3.06,
                scan_se: 0.5,
                horizon: 222_223,
                reps: 10,
                horizon_warning: true,
            },
        ];
        let text = table1_text(&rows);
        assert_eq!(parse_table1_text(&text).unwrap(), rows);
        assert!(parse_table1_text("delta x\n").is_err());
    }

    #[test]
    fn table2_text_round_trip() {
        let rep = |beta: f64, n: usize| {
            let per: Vec<ReplicateEval> = (0..n)
                .map(|k| ReplicateEval {
                    alpha: 0.1 / (k + 1) as f64,
                    beta: beta + k as f64 * 0.01,
                    gamma: (k % 2 == 0).then_some(0.7),
                    n_sequences: 4,
                })
                .collect();
            crate::metrics::aggregate(&per).unwrap()
        };
        let report = Table2Report {
            config: Default::default(),
            rows: vec![
                crate::experiments::Table2Row {
                    kind: IntensitySpec::constant(1e-4).unwrap(),
                    label: "constant(q=0.0001)".into(),
                    no_share: rep(0.3, 3),
                    with_share: rep(0.27, 1),
                    skipped: 0,
                    mean_positions_above_one: 0.0,
                },
                crate::experiments::Table2Row {
                    kind: IntensitySpec::beta(1e-4).unwrap(),
                    label: "beta(q=0.0001)".into(),
                    no_share: rep(0.305, 2),
                    with_share: rep(0.835, 2),
                    skipped: 0,
                    mean_positions_above_one: 0.0,
                },
            ],
        };
        let parsed = parse_table2_text(&table2_text(&report)).unwrap();
        assert_eq!(parsed.len(), 2);
        for (p, r) in parsed.iter().zip(&report.rows) {
            let strip = |e: &EvalReport| EvalReport {
                per_replicate: Vec::new(),
                ..e.clone()
            };
            assert_eq!(p.label, r.label);
            assert_eq!(p.no_share, strip(&r.no_share));
            assert_eq!(p.with_share, strip(&r.with_share));
        }
        let mut buf = Vec::new();
        write_csv(&table2_csv_records(&report), &mut buf).unwrap();
        let back: Vec<Table2CsvRecord> = read_csv(&buf[..]).unwrap();
        assert_eq!(back, table2_csv_records(&report));
    }
}
