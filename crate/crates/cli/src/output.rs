//! CSV files with the resolved config as `#` header lines, and bare-bones
//! SVG line plots.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::ScenarioConfig;
use crate::error::{CliError, Result};

pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

/// Renders `table` with the command name and config JSON as comment lines.
pub fn render_csv(command: &str, cfg: &ScenarioConfig, table: &Table) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "# bellsim {command}").unwrap();
    writeln!(out, "# seed: {}", cfg.seed).unwrap();
    writeln!(out, "# config: {}", cfg.to_json()).unwrap();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
    Ok(out)
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

pub fn write_csv(dir: &Path, name: &str, command: &str, cfg: &ScenarioConfig, table: &Table) -> Result<PathBuf> {
    write_file(dir, name, &render_csv(command, cfg, table)?)
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Polyline plot of several series sharing one x axis.
pub fn svg_plot(title: &str, x_label: &str, xs: &[f64], series: &[(&str, Vec<f64>)]) -> String {
    let (w, h, m) = (640.0, 400.0, 50.0);
    let (x0, x1) = min_max(xs.iter().copied());
    let (mut y0, mut y1) = min_max(series.iter().flat_map(|(_, ys)| ys.iter().copied()));
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| m + (x - x0) / (x1 - x0).max(1e-300) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#,
        w / 2.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{x_label}</text>"#,
        w / 2.0,
        h - 10.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<polyline points="{m},{m} {m},{} {},{}" fill="none" stroke="black"/>"#,
        h - m,
        w - m,
        h - m
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{y0:.3}</text>"#,
        m - 4.0,
        h - m
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{y1:.3}</text>"#,
        m - 4.0,
        m + 4.0
    )
    .unwrap();
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{name}</text>"#,
            w - m - 80.0,
            m + 14.0 * k as f64
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn min_max(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}
