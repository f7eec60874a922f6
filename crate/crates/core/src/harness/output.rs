use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedopt::{RoundKind, RoundRecord};

pub const CSV_HEADER: &str = "round,kind,grad_norm_sq,dist_sq,loss,n_participants";

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serialises records with a fixed column order; floats carry 17 significant
/// digits so they round-trip exactly. An empty `dist_sq` field means none.
pub fn records_to_csv(records: &[RoundRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let dist = r.dist_sq.map(float).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.round,
            r.kind,
            float(r.grad_norm_sq),
            dist,
            float(r.loss),
            r.n_participants()
        )
        .expect("writing to a String cannot fail");
    }
    out
}

/// One parsed CSV row. Participant ids are not stored, only their count.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub round: usize,
    pub kind: RoundKind,
    pub grad_norm_sq: f64,
    pub dist_sq: Option<f64>,
    pub loss: f64,
    pub n_participants: usize,
}

pub fn parse_records_csv(text: &str, path: &Path) -> Result<Vec<CsvRow>> {
    let err = |line: usize, msg: String| Error::Format { path: path.to_path_buf(), offset: line as u64, message: msg };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => return Err(err(0, format!("expected header '{CSV_HEADER}'"))),
    }
    let mut rows = Vec::new();
    for (ln, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(err(ln, format!("line {}: expected 6 fields, got {}", ln + 1, f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| err(ln, format!("line {}: {e}", ln + 1)));
        let int = |s: &str| s.parse::<usize>().map_err(|e| err(ln, format!("line {}: {e}", ln + 1)));
        rows.push(CsvRow {
            round: int(f[0])?,
            kind: f[1].parse().map_err(|e: String| err(ln, e))?,
            grad_norm_sq: num(f[2])?,
            dist_sq: if f[3].is_empty() { None } else { Some(num(f[3])?) },
            loss: num(f[4])?,
            n_participants: int(f[5])?,
        });
    }
    Ok(rows)
}

pub fn read_records_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let text = std::fs::read_to_string(path)?;
    parse_records_csv(&text, path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_is_exact() {
        let records = vec![
            RoundRecord {
                round: 0,
                kind: RoundKind::Client,
                grad_norm_sq: 0.1 + 0.2,
                dist_sq: Some(1.0 / 3.0),
                loss: 1e-300,
                participants: Some(vec![0, 3]),
            },
            RoundRecord { round: 1, kind: RoundKind::Final, grad_norm_sq: 5e-324, dist_sq: None, loss: -2.5, participants: None },
        ];
        let text = records_to_csv(&records);
        let rows = parse_records_csv(&text, Path::new("x")).unwrap();
        assert_eq!(rows.len(), 2);
        for (r, row) in records.iter().zip(&rows) {
            assert_eq!(r.grad_norm_sq.to_bits(), row.grad_norm_sq.to_bits());
            assert_eq!(r.dist_sq.map(f64::to_bits), row.dist_sq.map(f64::to_bits));
            assert_eq!(r.loss.to_bits(), row.loss.to_bits());
            assert_eq!(r.n_participants(), row.n_participants);
            assert_eq!(r.kind, row.kind);
        }
        assert!(text.starts_with(CSV_HEADER));
        assert!(parse_records_csv("bad\n", Path::new("x")).is_err());
    }
}
