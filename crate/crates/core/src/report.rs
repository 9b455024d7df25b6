//! CSV output and file-writing helpers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::diagnostics::EnergyReport;

pub const CSV_HEADER: &str = "time,x_norm_0,x_norm_t0,x_norm_t0p1,x_norm_s,y_norm_0,quad_form,min_depth,max_velocity";

/// Float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Write through a temporary sibling and rename into place, so readers never
/// see a half-written file.
pub fn write_atomic<F>(path: &Path, body: F) -> std::io::Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)
}

pub fn diagnostics_csv(reports: &[EnergyReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let row: Vec<String> = r.values().iter().map(|&x| fmt_f64(x)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_diagnostics_csv(path: &Path, reports: &[EnergyReport]) -> std::io::Result<()> {
    let text = diagnostics_csv(reports);
    write_atomic(path, |w| w.write_all(text.as_bytes()))
}

/// Generic CSV with a header row and numeric columns.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> std::io::Result<()> {
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    write_atomic(path, |w| w.write_all(text.as_bytes()))
}

/// Marker left next to the outputs of a run that did not complete.
pub fn write_failed_marker(dir: &Path, message: &str) -> std::io::Result<()> {
    write_atomic(&dir.join(".failed"), |w| writeln!(w, "{message}"))
}

/// Parsed numeric CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or("empty CSV")?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row: Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
            let row = row.map_err(|e| format!("row {}: {e}", i + 2))?;
            if row.len() != header.len() {
                return Err(format!("row {} has {} cells, header has {}", i + 2, row.len(), header.len()));
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}
