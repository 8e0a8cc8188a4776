//! CSV and JSON writers. Complex columns become `name_re` / `name_im` pairs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::config::Format;
use crate::error::CliError;
use crate::run::{ColumnValues, RunRecord, Table};

/// Flattened `(name, values)` pairs in column order.
pub fn flat_columns(table: &Table) -> Vec<(String, Vec<f64>)> {
    let mut out = Vec::new();
    for c in &table.columns {
        match &c.values {
            ColumnValues::Real(v) => out.push((c.name.clone(), v.clone())),
            ColumnValues::Complex(v) => {
                out.push((format!("{}_re", c.name), v.iter().map(|z| z.re).collect()));
                out.push((format!("{}_im", c.name), v.iter().map(|z| z.im).collect()));
            }
        }
    }
    out
}

/// 17 significant digits, enough to recover every `f64` exactly.
fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn to_csv(table: &Table) -> Result<String, CliError> {
    let cols = flat_columns(table);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::io("encoding CSV", std::io::Error::other(e));
    w.write_record(cols.iter().map(|(n, _)| n.as_str())).map_err(csv_err)?;
    for r in 0..table.rows() {
        w.write_record(cols.iter().map(|(_, v)| format_value(v[r]))).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io("encoding CSV", std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("ASCII output"))
}

fn json_number(v: f64) -> Value {
    // JSON has no NaN or infinity; null stands in
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

pub fn to_json(record: &RunRecord) -> Value {
    let mut data = Map::new();
    for (name, values) in flat_columns(&record.payload) {
        data.insert(name, Value::Array(values.into_iter().map(json_number).collect()));
    }
    let mut diagnostics = Map::new();
    for (k, v) in &record.diagnostics {
        diagnostics.insert(k.clone(), json_number(*v));
    }
    json!({
        "meta": {
            "config": record.config,
            "source_units": record.source_units,
            "version": record.version,
            "walltime_s": record.walltime_s,
            "convergence": record.convergence,
            "diagnostics": diagnostics,
            "errors": record.errors,
        },
        "data": data,
    })
}

/// Columns of a JSON document written by [`to_json`]; `null` reads back as NaN.
pub fn read_json_data(text: &str) -> Result<Vec<(String, Vec<f64>)>, CliError> {
    let v: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("JSON: {e}")))?;
    let data = v
        .get("data")
        .and_then(Value::as_object)
        .ok_or_else(|| CliError::Config("JSON: missing data object".into()))?;
    data.iter()
        .map(|(k, arr)| {
            let arr = arr.as_array().ok_or_else(|| CliError::Config(format!("JSON: data.{k} is not an array")))?;
            let vals = arr
                .iter()
                .map(|x| match x {
                    Value::Null => Ok(f64::NAN),
                    _ => x.as_f64().ok_or_else(|| CliError::Config(format!("JSON: data.{k} holds a non-number"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok((k.clone(), vals))
        })
        .collect()
}

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or("output");
    let tmp = dir.join(format!(".{file_name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(format!("writing {}", path.display()), e));
    }
    Ok(())
}

/// Write every requested format into `dir`; returns the files written, in format order.
pub fn export(record: &RunRecord, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    let stem = record.config.output_stem();
    let mut written = Vec::new();
    for f in formats {
        let (ext, body) = match f {
            Format::Csv => ("csv", to_csv(&record.payload)?),
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&to_json(record)).expect("JSON encodes");
                s.push('\n');
                ("json", s)
            }
        };
        let path = dir.join(format!("{stem}.{ext}"));
        write_atomic(&path, body.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
