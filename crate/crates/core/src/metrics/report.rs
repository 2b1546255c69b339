use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Scores of one image. Full-reference scores are absent when no target
/// was available.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub name: String,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub uciqe: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

fn cell(out: &mut String, v: Option<f64>) {
    match v {
        Some(v) if v == f64::INFINITY => out.push_str("inf"),
        Some(v) => write!(out, "{v:.6}").expect("write to string"),
        None => {}
    }
}

impl MetricReport {
    pub fn push(&mut self, row: MetricRow) {
        self.rows.push(row);
    }

    /// Arithmetic mean of every column; `None` for an empty report.
    pub fn mean(&self) -> Option<MetricRow> {
        if self.rows.is_empty() {
            return None;
        }
        Some(MetricRow {
            name: "MEAN".to_string(),
            psnr: mean_of(self.rows.iter().map(|r| r.psnr)),
            ssim: mean_of(self.rows.iter().map(|r| r.ssim)),
            uciqe: self.rows.iter().map(|r| r.uciqe).sum::<f64>() / self.rows.len() as f64,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,psnr,ssim,uciqe\n");
        for row in self.rows.iter().chain(self.mean().as_ref()) {
            out.push_str(&row.name);
            out.push(',');
            cell(&mut out, row.psnr);
            out.push(',');
            cell(&mut out, row.ssim);
            out.push(',');
            cell(&mut out, Some(row.uciqe));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout_and_mean() {
        let mut r = MetricReport::default();
        r.push(MetricRow {
            name: "a".into(),
            psnr: Some(20.0),
            ssim: Some(0.5),
            uciqe: 0.25,
        });
        r.push(MetricRow {
            name: "b".into(),
            psnr: Some(30.0),
            ssim: Some(0.7),
            uciqe: 0.75,
        });
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "name,psnr,ssim,uciqe");
        assert_eq!(lines[3], "MEAN,25.000000,0.600000,0.500000");
        r.rows[0].psnr = Some(f64::INFINITY);
        assert!(r.to_csv().lines().nth(1).unwrap().starts_with("a,inf,"));
    }

    #[test]
    fn reference_free_rows_leave_cells_empty() {
        let r = MetricReport {
            rows: vec![MetricRow {
                name: "x".into(),
                psnr: None,
                ssim: None,
                uciqe: 0.5,
            }],
        };
        assert_eq!(r.to_csv().lines().last().unwrap(), "MEAN,,,0.500000");
    }
}
