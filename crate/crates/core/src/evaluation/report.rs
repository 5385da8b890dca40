use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
}

/// A small table of PSNR/SSIM rows.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub fn push(&mut self, name: impl Into<String>, psnr: f64, ssim: f64) {
        self.rows.push(MetricRow {
            name: name.into(),
            psnr,
            ssim,
        });
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| crate::Error::io(path, e))?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(13);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>9}  {:>7}", "configuration", "PSNR (dB)", "SSIM");
        let _ = writeln!(out, "{}", "-".repeat(width + 20));
        for r in &self.rows {
            let _ = writeln!(out, "{:<width$}  {:>9.3}  {:>7.4}", r.name, r.psnr, r.ssim);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionRow {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub group: String,
}

pub fn write_projection_csv(path: &Path, rows: &[ProjectionRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_roundtrips_through_csv() {
        let mut t = MetricTable::default();
        t.push("r0", 21.5, 0.71);
        t.push("A(r0)", 22.25, 0.74);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        t.write_csv(&path).unwrap();
        let mut r = csv::Reader::from_path(&path).unwrap();
        let rows: Vec<MetricRow> = r.deserialize().map(|x| x.unwrap()).collect();
        assert_eq!(rows, t.rows);
        let text = t.to_text();
        assert_eq!(text.lines().count(), 4);
        assert!(text.contains("22.250"));
    }
}
