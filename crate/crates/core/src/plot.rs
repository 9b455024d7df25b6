//! Minimal deterministic SVG line plots of CSV columns against the first column.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::report::{write_atomic, Table};

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("no columns requested")]
    NoColumns,
    #[error("cannot parse CSV: {0}")]
    Csv(String),
    #[error("log scale needs positive values in column {0:?}")]
    NonPositive(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn num(x: f64) -> String {
    format!("{x:.2}")
}

fn tick_label(x: f64) -> String {
    if x != 0.0 && (x.abs() < 1e-3 || x.abs() >= 1e4) {
        format!("{x:.2e}")
    } else {
        format!("{x:.3}")
    }
}

/// Render `columns` of `table` against its first column.
pub fn render_svg(table: &Table, columns: &[String], log_y: bool) -> Result<String, PlotError> {
    if columns.is_empty() {
        return Err(PlotError::NoColumns);
    }
    let x_name = table.header.first().cloned().unwrap_or_default();
    let xs = table.column(&x_name).unwrap_or_default();
    let mut series = Vec::new();
    for c in columns {
        let ys = table.column(c).ok_or_else(|| PlotError::UnknownColumn(c.clone()))?;
        let ys: Vec<f64> = if log_y {
            if ys.iter().any(|&y| y.is_finite() && y <= 0.0) {
                return Err(PlotError::NonPositive(c.clone()));
            }
            ys.iter().map(|y| y.log10()).collect()
        } else {
            ys
        };
        series.push((c.clone(), ys));
    }

    let finite = |v: &mut dyn Iterator<Item = f64>| {
        v.filter(|x| x.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
    };
    let (mut x0, mut x1) = finite(&mut xs.iter().copied());
    let (mut y0, mut y1) = finite(&mut series.iter().flat_map(|(_, ys)| ys.iter().copied()));
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        let pad = if y0 == 0.0 { 1.0 } else { 0.1 * y0.abs() };
        y0 -= pad;
        y1 += pad;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let ylab = if log_y { tick_label(10f64.powf(yv)) } else { tick_label(yv) };
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            num(px(xv)),
            num(TOP + ph + 18.0),
            tick_label(xv)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            num(LEFT - 6.0),
            num(py(yv) + 4.0),
            ylab
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#ddd"/>"##,
            num(px(xv)),
            num(TOP),
            num(TOP + ph)
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{1}" y1="{0}" x2="{2}" y2="{0}" stroke="#ddd"/>"##,
            num(py(yv)),
            num(LEFT),
            num(LEFT + pw)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        num(LEFT + pw / 2.0),
        num(HEIGHT - 15.0),
        x_name
    );
    let y_label = if log_y { "value (log scale)" } else { "value" };
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        num(TOP + ph / 2.0),
        y_label
    );
    for (i, (name, ys)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = xs
            .iter()
            .zip(ys)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{},{}", num(px(x)), num(py(y))))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="2"/>"#,
            num(lx),
            num(ly),
            num(lx + 20.0),
            num(ly)
        );
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{name}</text>"#, num(lx + 26.0), num(ly + 4.0));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_plot(csv_path: &Path, columns: &[String], out_path: &Path, log_y: bool) -> Result<(), PlotError> {
    let text = std::fs::read_to_string(csv_path)?;
    let table = Table::parse(&text).map_err(PlotError::Csv)?;
    let svg = render_svg(&table, columns, log_y)?;
    write_atomic(out_path, |w| w.write_all(svg.as_bytes()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Table {
        Table::parse("t,a,b\n0,1,1\n1,1,2.718281828\n2,1,7.389056099\n").unwrap()
    }

    fn polylines(svg: &str) -> Vec<Vec<(f64, f64)>> {
        svg.lines()
            .filter(|l| l.starts_with("<polyline"))
            .map(|l| {
                let pts = l.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
                pts.split(' ')
                    .map(|p| {
                        let (x, y) = p.split_once(',').unwrap();
                        (x.parse().unwrap(), y.parse().unwrap())
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn constant_column_is_horizontal() {
        let svg = render_svg(&table(), &["a".into()], false).unwrap();
        let lines = polylines(&svg);
        assert_eq!(lines.len(), 1);
        assert!(lines[0].iter().all(|p| p.1 == lines[0][0].1));
    }

    #[test]
    fn log_of_exponential_is_straight() {
        let svg = render_svg(&table(), &["b".into()], true).unwrap();
        let p = &polylines(&svg)[0];
        let s1 = (p[1].1 - p[0].1) / (p[1].0 - p[0].0);
        let s2 = (p[2].1 - p[1].1) / (p[2].0 - p[1].0);
        assert!((s1 - s2).abs() < 0.05);
    }

    #[test]
    fn overlay_has_legend() {
        let svg = render_svg(&table(), &["a".into(), "b".into()], false).unwrap();
        assert_eq!(polylines(&svg).len(), 2);
        assert!(svg.contains(">a</text>") && svg.contains(">b</text>"));
        assert_eq!(svg, render_svg(&table(), &["a".into(), "b".into()], false).unwrap());
    }

    #[test]
    fn unknown_column() {
        assert!(matches!(
            render_svg(&table(), &["zzz".into()], false),
            Err(PlotError::UnknownColumn(c)) if c == "zzz"
        ));
    }
}
