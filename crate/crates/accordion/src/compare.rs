//! Aligns metric series from several runs on `log10(evaluations)` and
//! renders them as CSV and a static SVG line chart.

use std::fmt::Write as _;
use std::path::Path;

use accordion_core::schemes::MetricsRecord;

use crate::error::{io_err, Error, Result};
use crate::metrics::{read_csv, CSV_FILE};

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// `(evaluations_so_far, best_fitness)` in recording order.
    pub points: Vec<(u64, f64)>,
}

impl Series {
    pub fn from_records(label: impl Into<String>, records: &[MetricsRecord]) -> Self {
        Self { label: label.into(), points: records.iter().map(|r| (r.evaluations_so_far, r.best_fitness)).collect() }
    }

    /// Last value recorded at or before `evaluations`.
    fn at(&self, evaluations: u64) -> Option<f64> {
        self.points.iter().take_while(|(e, _)| *e <= evaluations).last().map(|&(_, v)| v)
    }
}

/// Reads `metrics.csv` from every run directory; labels are directory names
/// (suffixed with their position when two coincide).
pub fn load_runs(dirs: &[impl AsRef<Path>]) -> Result<Vec<Series>> {
    if dirs.is_empty() {
        return Err(Error::Config("compare needs at least one run directory".into()));
    }
    let mut out: Vec<Series> = Vec::with_capacity(dirs.len());
    for (i, dir) in dirs.iter().enumerate() {
        let dir = dir.as_ref();
        let path = dir.join(CSV_FILE);
        if !path.exists() {
            return Err(Error::Config(format!("{}: no {CSV_FILE} (not a run directory?)", dir.display())));
        }
        let records = read_csv(&path)?;
        if records.is_empty() {
            return Err(Error::Config(format!("{}: run has no metrics", dir.display())));
        }
        let base = dir
            .canonicalize()
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| format!("run{i}"));
        let label = if out.iter().any(|s| s.label == base) { format!("{base}-{i}") } else { base };
        out.push(Series::from_records(label, &records));
    }
    Ok(out)
}

/// Union of all evaluation counts, each series carried forward from its
/// latest point. Cells before a series' first point are empty.
pub fn aligned_csv(series: &[Series]) -> String {
    let mut xs: Vec<u64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    xs.sort_unstable();
    xs.dedup();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["log10_evaluations".to_string(), "evaluations".to_string()];
    header.extend(series.iter().map(|s| s.label.clone()));
    w.write_record(&header).expect("in-memory write");
    for x in xs {
        let mut row = vec![format!("{}", (x.max(1) as f64).log10()), x.to_string()];
        row.extend(series.iter().map(|s| s.at(x).map_or_else(String::new, |v| v.to_string())));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Step-line chart of best fitness against `log10(evaluations)`.
pub fn svg_chart(series: &[Series], title: &str) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (64.0, 180.0, 40.0, 56.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| (p.0.max(1) as f64).log10()));
    let x_max = xs.fold(0.0f64, f64::max).ceil().max(1.0);
    let sx = |x: f64| left + pw * x / x_max;
    let sy = |y: f64| top + ph * (1.0 - y.clamp(0.0, 1.0));

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, left + pw / 2.0, escape(title));
    // axes and grid
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let y = sy(v);
        let _ = writeln!(s, r##"<line x1="{left}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/>"##, left + pw);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.1}</text>"#, left - 6.0, y + 4.0);
    }
    for i in 0..=(x_max as u32) {
        let x = sx(i as f64);
        let _ = writeln!(s, r##"<line x1="{x}" y1="{top}" x2="{x}" y2="{}" stroke="#eee"/>"##, top + ph);
        let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{i}</text>"#, top + ph + 16.0);
    }
    let _ = writeln!(
        s,
        r#"<path d="M{left},{top} L{left},{} L{},{}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw,
        top + ph
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">log10(evaluations)</text>"#, left + pw / 2.0, h - 14.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">best accuracy</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut d = String::new();
        let mut prev: Option<f64> = None;
        for &(e, v) in &ser.points {
            let x = sx((e.max(1) as f64).log10());
            match prev {
                None => {
                    let _ = write!(d, "M{x:.2},{:.2}", sy(v));
                }
                Some(p) => {
                    let _ = write!(d, " L{x:.2},{:.2} L{x:.2},{:.2}", sy(p), sy(v));
                }
            }
            prev = Some(v);
        }
        let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#);
        let ly = top + 16.0 + 18.0 * i as f64;
        let lx = left + pw + 16.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&ser.label));
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_comparison(series: &[Series], out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let csv_path = out.join("compare.csv");
    std::fs::write(&csv_path, aligned_csv(series)).map_err(io_err(&csv_path))?;
    let svg_path = out.join("compare.svg");
    std::fs::write(&svg_path, svg_chart(series, "Best accuracy")).map_err(io_err(&svg_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn carries_values_forward_on_shared_axis() {
        let a = Series { label: "a".into(), points: vec![(1, 0.1), (10, 0.5), (100, 0.7)] };
        let b = Series { label: "b".into(), points: vec![(5, 0.2), (10, 0.3)] };
        let csv = aligned_csv(&[a, b]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "log10_evaluations,evaluations,a,b");
        assert_eq!(lines[1], "0,1,0.1,");
        assert_eq!(lines[2], format!("{},5,0.1,0.2", 5f64.log10()));
        assert_eq!(lines[3], "1,10,0.5,0.3");
        assert_eq!(lines[4], "2,100,0.7,0.3");
    }

    #[test]
    fn svg_has_axes_legend_and_one_path_per_series() {
        let a = Series { label: "elitism <a>".into(), points: vec![(10, 0.1), (100, 0.5)] };
        let b = Series { label: "adam".into(), points: vec![(1, 0.2), (50, 0.9)] };
        let svg = svg_chart(&[a, b], "t");
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("log10(evaluations)"));
        assert!(svg.contains("elitism &lt;a&gt;"));
        assert_eq!(svg.matches("stroke-width=\"1.5\"").count(), 2);
    }
}
