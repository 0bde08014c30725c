//! CSV and JSON serialization of sweep tables.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::sweep::{CellStatus, Quantity, SweepTable};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!(
                "unknown format `{other}` (csv|json)"
            ))),
        }
    }
}

/// Column header of the CSV body.
pub const CSV_HEADER: &str = "u_over_j,tau_j,value";

/// Formats `x` with 12 significant digits. Zero prints as `0.000000000000`,
/// NaN as `NaN`; magnitudes outside `[1e-5, 1e12)` use exponent notation.
pub fn format_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0.000000000000".to_string();
    }
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let sci = format!("{x:.11e}");
    let exp: i32 = sci[sci.find('e').expect("exponent marker") + 1..]
        .parse()
        .expect("integer exponent");
    if (-5..12).contains(&exp) {
        format!("{x:.prec$}", prec = (11 - exp) as usize)
    } else {
        sci
    }
}

/// `x` rounded to what [`format_sig12`] prints.
pub fn round_sig12(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format_sig12(x).parse().expect("formatted float parses")
}

/// Metadata lines plus the optional timestamp.
fn metadata(table: &SweepTable, q: Quantity, timestamp: Option<&str>) -> Vec<(String, String)> {
    let mut m = table.metadata(q);
    if let Some(ts) = timestamp {
        m.push(("generated_at".into(), ts.to_string()));
    }
    m
}

fn flagged(table: &SweepTable) -> Vec<(f64, f64, String)> {
    table
        .rows()
        .filter_map(|(u, t, c)| match &c.status {
            CellStatus::Ok => None,
            CellStatus::Guarded => Some((u, t, "guarded".to_string())),
            CellStatus::Failed { code, .. } => Some((u, t, code.clone())),
        })
        .collect()
}

/// Renders `q` as CSV: `# key = value` metadata lines, the column header, then one row per cell.
pub fn to_csv(table: &SweepTable, q: Quantity, timestamp: Option<&str>) -> String {
    let mut out = String::new();
    for (k, v) in metadata(table, q, timestamp) {
        let _ = writeln!(out, "# {k} = {v}");
    }
    for (u, t, why) in flagged(table) {
        let _ = writeln!(
            out,
            "# flagged = {},{},{why}",
            format_sig12(u),
            format_sig12(t)
        );
    }
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (u, t, c) in table.rows() {
        let _ = writeln!(
            out,
            "{},{},{}",
            format_sig12(u),
            format_sig12(t),
            format_sig12(c.value(q))
        );
    }
    out
}

/// Renders `q` as a JSON document with the metadata, both axes and a
/// row-major (`tau` outer) array of values. Flagged cells hold `null`.
pub fn to_json(table: &SweepTable, q: Quantity, timestamp: Option<&str>) -> String {
    let meta: Map<String, Value> = metadata(table, q, timestamp)
        .into_iter()
        .map(|(k, v)| (k, Value::String(v)))
        .collect();
    let num = |x: f64| {
        if x.is_finite() {
            json!(round_sig12(x))
        } else {
            Value::Null
        }
    };
    let values: Vec<Value> = table.cells.iter().map(|c| num(c.value(q))).collect();
    let flags: Vec<Value> = flagged(table)
        .into_iter()
        .map(|(u, t, why)| json!({"u_over_j": u, "tau_j": t, "reason": why}))
        .collect();
    let doc = json!({
        "metadata": meta,
        "u_over_j": table.u_values().into_iter().map(num).collect::<Vec<_>>(),
        "tau_j": table.tau_values().into_iter().map(num).collect::<Vec<_>>(),
        "shape": [table.spec.tau_j.count, table.spec.u_over_j.count],
        "values": values,
        "flagged": flags,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("JSON value serializes");
    s.push('\n');
    s
}

pub fn render(
    table: &SweepTable,
    q: Quantity,
    format: OutputFormat,
    timestamp: Option<&str>,
) -> String {
    match format {
        OutputFormat::Csv => to_csv(table, q, timestamp),
        OutputFormat::Json => to_json(table, q, timestamp),
    }
}

/// Writes the rendered table to `path`.
pub fn emit(
    table: &SweepTable,
    q: Quantity,
    format: OutputFormat,
    path: &Path,
    timestamp: Option<&str>,
) -> Result<()> {
    std::fs::write(path, render(table, q, format, timestamp)).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Parsed CSV output: metadata pairs and `(u_over_j, tau_j, value)` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedCsv {
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<(f64, f64, f64)>,
}

/// Reads back a file produced by [`to_csv`].
pub fn parse_csv(text: &str) -> Result<ParsedCsv> {
    let mut metadata = Vec::new();
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (lineno, line) in text.lines().enumerate() {
        let bad = |what: &str| Error::InvalidInput(format!("csv line {}: {what}", lineno + 1));
        if let Some(rest) = line.strip_prefix('#') {
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| bad("metadata without `=`"))?;
            metadata.push((k.trim().to_string(), v.trim().to_string()));
        } else if !header_seen {
            if line.trim() != CSV_HEADER {
                return Err(bad("missing column header"));
            }
            header_seen = true;
        } else if !line.trim().is_empty() {
            let f: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("non-numeric field"))?;
            if f.len() != 3 {
                return Err(bad("expected three columns"));
            }
            rows.push((f[0], f[1], f[2]));
        }
    }
    if !header_seen {
        return Err(Error::InvalidInput("csv has no column header".into()));
    }
    Ok(ParsedCsv { metadata, rows })
}
