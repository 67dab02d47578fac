use std::fs::File;
use std::io::{self, BufWriter, Write};

use serde::Serialize;

use crate::error::CliError;

/// Reads one real per line. A first line reading `y` is taken as a header.
pub fn read_sample(path: &str) -> Result<Vec<f64>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(file);
    let mut out = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Parse { path: path.into(), message: e.to_string() })?;
        let bad = |message: String| CliError::Parse { path: path.into(), message };
        if record.len() != 1 {
            return Err(bad(format!("line {}: expected one value, found {}", line + 1, record.len())));
        }
        let field = &record[0];
        if line == 0 && field == "y" {
            continue;
        }
        let value: f64 = field.parse().map_err(|_| bad(format!("line {}: '{field}' is not a number", line + 1)))?;
        if !value.is_finite() {
            return Err(bad(format!("line {}: non-finite value", line + 1)));
        }
        out.push(value);
    }
    if out.is_empty() {
        return Err(CliError::Parse { path: path.into(), message: "no observations".into() });
    }
    Ok(out)
}

/// Writes rows under `header` to `path`, or to stdout when `path` is `None`.
pub fn write_csv<R: Serialize>(path: Option<&str>, header: &[&str], rows: &[R]) -> Result<(), CliError> {
    let label = path.unwrap_or("<stdout>");
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(File::create(p).map_err(|e| CliError::io(p, e))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
    let io_err = |e: csv::Error| CliError::io(label, e.into());
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.serialize(row).map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::io(label, e))
}

pub fn write_json<T: Serialize>(path: Option<&str>, value: &T) -> Result<(), CliError> {
    let label = path.unwrap_or("<stdout>");
    let mut sink: Box<dyn Write> = match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?)),
        None => Box::new(io::stdout().lock()),
    };
    serde_json::to_writer_pretty(&mut sink, value).map_err(|e| CliError::io(label, e.into()))?;
    writeln!(sink).and_then(|_| sink.flush()).map_err(|e| CliError::io(label, e))
}

/// One compact JSON document per line.
pub fn write_json_lines<T: Serialize>(path: Option<&str>, values: &[T]) -> Result<(), CliError> {
    let label = path.unwrap_or("<stdout>");
    let mut sink: Box<dyn Write> = match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?)),
        None => Box::new(io::stdout().lock()),
    };
    for v in values {
        serde_json::to_writer(&mut sink, v).map_err(|e| CliError::io(label, e.into()))?;
        writeln!(sink).map_err(|e| CliError::io(label, e))?;
    }
    sink.flush().map_err(|e| CliError::io(label, e))
}

/// Path of the metadata file written next to `output`.
pub fn sidecar_path(output: &str) -> String {
    format!("{output}.json")
}
