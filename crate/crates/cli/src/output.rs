//! Run records and their three renderings.

use std::io::Write;
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Table,
}

/// Envelope written by every subcommand.
#[derive(Debug, Serialize)]
pub struct RunRecord<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub threads: usize,
    /// Results do not depend on the thread count.
    pub bit_exact: bool,
    pub config: Value,
    pub result: T,
}

impl<'a, T: Serialize> RunRecord<'a, T> {
    pub fn new(command: &'a str, seed: u64, config: &impl Serialize, result: T) -> Result<Self, CliError> {
        Ok(RunRecord {
            tool: "scancusum",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            threads: rayon::current_num_threads(),
            bit_exact: true,
            config: serde_json::to_value(config).map_err(CliError::internal)?,
            result,
        })
    }

    /// `# key: value` lines placed above text and CSV bodies.
    fn preamble(&self) -> Result<String, CliError> {
        Ok(format!(
            "# {} {} {}\n# seed: {} threads: {} bit_exact: {}\n# config: {}\n",
            self.tool,
            self.version,
            self.command,
            self.seed,
            self.threads,
            self.bit_exact,
            serde_json::to_string(&self.config).map_err(CliError::internal)?
        ))
    }
}

/// Body renderers for the text formats.
pub struct Bodies {
    pub csv: String,
    pub table: String,
}

pub fn emit<T: Serialize>(
    record: &RunRecord<'_, T>,
    format: Format,
    bodies: impl FnOnce() -> Result<Bodies, CliError>,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let text = match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(record).map_err(CliError::internal)?;
            s.push('\n');
            s
        }
        Format::Csv => record.preamble()? + &bodies()?.csv,
        Format::Table => record.preamble()? + &bodies()?.table,
    };
    match output {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

/// Flattens a JSON value into `(dotted.key, value)` pairs. Arrays of
/// scalars become `[a b c]`; other arrays are indexed like objects.
pub fn flatten(value: &Value) -> Vec<(String, String)> {
    fn go(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        match v {
            Value::Object(m) => {
                for (k, x) in m {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    go(&key, x, out);
                }
            }
            Value::Array(a) if a.iter().all(|x| !x.is_object() && !x.is_array()) => {
                let items: Vec<String> = a.iter().map(scalar).collect();
                out.push((prefix.to_string(), format!("[{}]", items.join(" "))));
            }
            Value::Array(a) => {
                for (i, x) in a.iter().enumerate() {
                    let key = if prefix.is_empty() { i.to_string() } else { format!("{prefix}.{i}") };
                    go(&key, x, out);
                }
            }
            other => out.push((prefix.to_string(), scalar(other))),
        }
    }
    fn scalar(v: &Value) -> String {
        match v {
            Value::String(s) => s.clone(),
            Value::Null => "-".into(),
            other => other.to_string(),
        }
    }
    let mut out = Vec::new();
    go("", value, &mut out);
    out
}

pub fn align(rows: &[Vec<String>]) -> String {
    let ncol = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let widths: Vec<usize> = (0..ncol)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r.iter().enumerate().map(|(c, s)| format!("{s:<w$}", w = widths[c])).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

pub fn csv_from_rows(rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(r).map_err(CliError::internal)?;
    }
    String::from_utf8(w.into_inner().map_err(CliError::internal)?).map_err(CliError::internal)
}

/// Key/value bodies for results without a natural table shape.
pub fn key_value_bodies(value: &impl Serialize) -> Result<Bodies, CliError> {
    let v = serde_json::to_value(value).map_err(CliError::internal)?;
    let mut rows = vec![vec!["key".to_string(), "value".to_string()]];
    rows.extend(flatten(&v).into_iter().map(|(k, v)| vec![k, v]));
    Ok(Bodies {
        csv: csv_from_rows(&rows)?,
        table: align(&rows),
    })
}
