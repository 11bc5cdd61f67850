use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::runner::{RunRecord, Summary};
use crate::error::Result;
use crate::learners::Component;
use crate::metrics::AccuracyMatrix;

/// One results-table row as written to and read back from CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub config_hash: String,
    pub code_version: String,
    pub protocol: String,
    pub learner: String,
    pub buffer: Option<usize>,
    pub seeds: usize,
    pub mean: f64,
    pub std: f64,
    pub working_mean: Option<f64>,
    pub plastic_mean: Option<f64>,
    pub stable_mean: Option<f64>,
    pub validation_mean: Option<f64>,
    /// Per-seed accuracies joined with `;`.
    pub per_seed: String,
    pub wall_clock_secs: f64,
}

impl ReportRow {
    pub fn from_record(r: &RunRecord) -> Self {
        Self {
            config_hash: r.config_hash.clone(),
            code_version: r.code_version.clone(),
            protocol: r.config.protocol().name().to_string(),
            learner: r.config.learner.name().to_string(),
            buffer: r.buffer,
            seeds: r.seeds.len(),
            mean: r.accuracy.mean,
            std: r.accuracy.std,
            working_mean: r.component(Component::Working).map(|s| s.mean),
            plastic_mean: r.component(Component::Plastic).map(|s| s.mean),
            stable_mean: r.component(Component::Stable).map(|s| s.mean),
            validation_mean: r.validation.map(|s| s.mean),
            per_seed: r.per_seed().iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
            wall_clock_secs: r.wall_clock_secs,
        }
    }

    pub fn per_seed_values(&self) -> Vec<f64> {
        self.per_seed
            .split(';')
            .filter(|s| !s.is_empty())
            .filter_map(|s| s.parse().ok())
            .collect()
    }
}

pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_report_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

/// Plain-text table with `mean±std` cells.
pub fn format_table(records: &[RunRecord]) -> String {
    let header = ["protocol", "method", "buffer", "accuracy", "working", "plastic", "stable", "config"];
    let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    let cell = |s: Option<Summary>| s.map_or("-".to_string(), |s| s.cell());
    for r in records {
        rows.push(vec![
            r.config.protocol().name().to_string(),
            r.config.learner.name().to_string(),
            r.buffer.map_or("-".into(), |b| b.to_string()),
            r.accuracy.cell(),
            cell(r.component(Component::Working)),
            cell(r.component(Component::Plastic)),
            cell(r.component(Component::Stable)),
            r.config_hash[..12].to_string(),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(s, &w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
        }
    }
    out
}

/// Element-wise mean of the per-seed matrices of one component.
pub fn mean_matrix(record: &RunRecord, c: Component) -> Option<AccuracyMatrix> {
    let mats: Vec<&AccuracyMatrix> = record
        .seeds
        .iter()
        .filter_map(|s| s.component(c).and_then(|r| r.matrix.as_ref()))
        .collect();
    let first = mats.first()?;
    let mut entries = first.entries.clone();
    for m in &mats[1..] {
        for (row, other) in entries.iter_mut().zip(&m.entries) {
            for (v, o) in row.iter_mut().zip(other) {
                *v += o;
            }
        }
    }
    let n = mats.len() as f64;
    entries.iter_mut().flatten().for_each(|v| *v /= n);
    Some(AccuracyMatrix {
        n_tasks: first.n_tasks,
        entries,
    })
}

fn write_matrix_csv(path: &Path, record: &RunRecord, c: Component, m: &AccuracyMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["config_hash", "code_version", "component", "after_task", "task", "accuracy"])?;
    for (i, row) in m.entries.iter().enumerate() {
        for (j, v) in row.iter().enumerate().take(i + 1) {
            w.write_record([
                record.config_hash.as_str(),
                record.code_version.as_str(),
                c.name(),
                &i.to_string(),
                &j.to_string(),
                &v.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Heat map of an accuracy matrix (rows: after task, columns: task).
pub fn matrix_svg(m: &AccuracyMatrix, title: &str, provenance: &str) -> String {
    let cell = 40.0;
    let pad = 60.0;
    let size = pad + cell * m.n_tasks as f64 + 10.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{}" font-family="sans-serif" font-size="11">"#,
        size + 20.0
    );
    let _ = writeln!(s, "<!-- {provenance} -->");
    let _ = writeln!(s, r#"<text x="{pad}" y="16" font-size="13">{}</text>"#, escape(title));
    for (i, row) in m.entries.iter().enumerate() {
        for (j, v) in row.iter().enumerate().take(i + 1) {
            let x = pad + cell * j as f64;
            let y = pad / 2.0 + cell * i as f64;
            let shade = (255.0 * (1.0 - v / 100.0)).round() as u8;
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},255)" stroke="white"/><text x="{}" y="{}" text-anchor="middle">{v:.0}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">T{}</text>"#,
            pad - 6.0,
            pad / 2.0 + cell * i as f64 + cell / 2.0 + 4.0,
            i + 1
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Line chart of one or more `(label, points)` series on a shared axis.
pub fn line_svg(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)], provenance: &str) -> String {
    let (w, h, pad) = (480.0, 320.0, 50.0);
    let all = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(y1 > y0) {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let colours = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"];
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, "<!-- {provenance} -->");
    let _ = writeln!(s, r#"<text x="{pad}" y="20" font-size="13">{}</text>"#, escape(title));
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{}" stroke="black"/>"#,
        h - pad,
        w - pad,
        h - pad,
        h - pad
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 12.0, escape(x_label));
    let _ = writeln!(s, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#, h / 2.0, h / 2.0, escape(y_label));
    let _ = writeln!(s, r#"<text x="{pad}" y="{}" text-anchor="middle">{x0:.3}</text><text x="{}" y="{}" text-anchor="middle">{x1:.3}</text>"#, h - pad + 14.0, w - pad, h - pad + 14.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{y0:.3}</text><text x="{}" y="{pad}" text-anchor="end">{y1:.3}</text>"#, pad - 4.0, h - pad, pad - 4.0);
    for (k, (label, pts)) in series.iter().enumerate() {
        let colour = colours[k % colours.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#, path.join(" "));
        let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{colour}">{}</text>"#, w - pad - 90.0, pad + 14.0 * k as f64, escape(label));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `results.csv`, `results.txt`, one JSON file per record and the
/// mean accuracy matrices (CSV, plus SVG when `svg` is set). Returns the
/// paths written.
pub fn emit_report(records: &[RunRecord], dir: &Path, svg: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let rows: Vec<ReportRow> = records.iter().map(ReportRow::from_record).collect();
    let csv_path = dir.join("results.csv");
    write_report_csv(&csv_path, &rows)?;
    written.push(csv_path);
    let txt = dir.join("results.txt");
    fs::write(&txt, format_table(records))?;
    written.push(txt);
    for r in records {
        let short = &r.config_hash[..12];
        let json = dir.join(format!("record-{short}.json"));
        fs::write(&json, serde_json::to_string_pretty(r)?)?;
        written.push(json);
        for c in Component::ALL {
            let Some(m) = mean_matrix(r, c) else { continue };
            let p = dir.join(format!("matrix-{short}-{}.csv", c.name()));
            write_matrix_csv(&p, r, c, &m)?;
            written.push(p);
            if svg {
                let title = format!("{} {} {} model", r.config.protocol().name(), r.config.learner.name(), c.name());
                let p = dir.join(format!("matrix-{short}-{}.svg", c.name()));
                fs::write(&p, matrix_svg(&m, &title, &provenance(r)))?;
                written.push(p);
            }
        }
    }
    Ok(written)
}

pub fn provenance(r: &RunRecord) -> String {
    format!("config {} / {}", r.config_hash, r.code_version)
}

/// Reads every `record-*.json` in `dir`, sorted by config hash.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("record-") && name.ends_with(".json") {
            out.push(serde_json::from_str(&fs::read_to_string(&p)?)?);
        }
    }
    out.sort_by(|a: &RunRecord, b| a.config_hash.cmp(&b.config_hash));
    Ok(out)
}
