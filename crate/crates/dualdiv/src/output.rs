//! CSV and JSON writers. Floats go to CSV with 17 significant digits so
//! that reading a file back reproduces every value bit for bit.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "inf".to_string(), fmt_f64)
}

/// Writes a CSV file: version/hash comment line, extra comment lines,
/// header row, then rows.
pub fn write_csv(
    path: &Path,
    config_hash: &str,
    notes: &[String],
    header: &[String],
    rows: &[Vec<String>],
) -> Result<(), CliError> {
    let mut file = File::create(path)?;
    writeln!(file, "# dualdiv {VERSION} config-sha256={config_hash}")?;
    for n in notes {
        writeln!(file, "# {n}")?;
    }
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Header and rows of a CSV written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut file = File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    writeln!(file)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt(), 5e-324, 1.7976931348623157e308, -0.0, 4.485692952302543] {
            let back: f64 = fmt_f64(x).parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits());
        }
        assert_eq!(fmt_opt(None).parse::<f64>().unwrap(), f64::INFINITY);
    }
}
