//! `results.csv`, `results.md` and SVG plots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::experiment::{CellOutcome, Overlay, ResultRow, ResultTable};
use super::methods::Method;

pub const CSV_HEADER: &str = "level_db,blur_variance,method,lambda,isnr_db,segments";

/// Nine significant digits.
fn num(v: f64) -> String {
    format!("{v:.8e}")
}

/// CSV text of `table`. Failed cells leave `lambda` and `isnr_db` empty and
/// report zero segments; their reasons go to `results.md`.
pub fn table_to_csv(table: &ResultTable) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &table.rows {
        let (lambda, isnr, segments) = match &r.outcome {
            CellOutcome::Done {
                lambda,
                isnr_db,
                segments,
            } => (num(*lambda), num(*isnr_db), *segments),
            CellOutcome::Failed { .. } => (String::new(), String::new(), 0),
        };
        writeln!(
            out,
            "{},{},{},{lambda},{isnr},{segments}",
            num(r.level_db),
            num(r.blur_variance),
            r.method
        )
        .unwrap();
    }
    out
}

/// Inverse of [`table_to_csv`]. Failed rows come back with an empty reason.
pub fn table_from_csv(text: &str) -> std::result::Result<ResultTable, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => return Err(format!("expected header {CSV_HEADER:?}, got {other:?}")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(format!("line {lineno}: expected 6 fields, got {}", f.len()));
        }
        let real = |s: &str| -> std::result::Result<f64, String> {
            s.parse().map_err(|_| format!("line {lineno}: {s:?} is not a number"))
        };
        let method: Method = f[2].parse().map_err(|e| format!("line {lineno}: {e}"))?;
        let segments: usize = f[5]
            .parse()
            .map_err(|_| format!("line {lineno}: {:?} is not a segment count", f[5]))?;
        let outcome = if f[3].is_empty() && f[4].is_empty() {
            CellOutcome::Failed {
                reason: String::new(),
            }
        } else {
            CellOutcome::Done {
                lambda: real(f[3])?,
                isnr_db: real(f[4])?,
                segments,
            }
        };
        rows.push(ResultRow {
            level_db: real(f[0])?,
            blur_variance: real(f[1])?,
            method,
            outcome,
        });
    }
    Ok(ResultTable { rows })
}

pub fn read_csv(path: &Path) -> Result<ResultTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    table_from_csv(&text).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        message,
    })
}

fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

/// Markdown tables in the layout of the published ones: one row per
/// level (and blur variance), one ISNR column per method.
pub fn table_to_markdown(table: &ResultTable) -> String {
    let methods = table.methods();
    let mut out = String::from("# ISNR (dB)\n\n");
    if table.rows.is_empty() {
        out.push_str("No cells.\n");
        return out;
    }
    let deblur = table.rows.iter().any(|r| r.blur_variance != 0.0);
    let variances = distinct(table.rows.iter().map(|r| r.blur_variance));
    let levels = distinct(table.rows.iter().map(|r| r.level_db));
    let level_name = if deblur { "BSNR (dB)" } else { "SNR (dB)" };

    let mut header = String::new();
    if deblur {
        header.push_str("| blur variance ");
    }
    write!(header, "| {level_name} |").unwrap();
    for m in &methods {
        write!(header, " {m} |").unwrap();
    }
    out.push_str(&header);
    out.push('\n');
    let columns = methods.len() + 1 + usize::from(deblur);
    out.push('|');
    out.push_str(&"---|".repeat(columns));
    out.push('\n');

    let mut failures = Vec::new();
    for &var in &variances {
        for &level in &levels {
            if deblur {
                write!(out, "| {var} ").unwrap();
            }
            write!(out, "| {level} |").unwrap();
            for &m in &methods {
                match table.get(level, var, m).map(|r| &r.outcome) {
                    Some(CellOutcome::Done { isnr_db, .. }) => write!(out, " {isnr_db:.2} |").unwrap(),
                    Some(CellOutcome::Failed { reason }) => {
                        failures.push(format!("{m} at {level} dB, variance {var}: {reason}"));
                        out.push_str(" failed |");
                    }
                    None => out.push_str(" |"),
                }
            }
            out.push('\n');
        }
    }

    out.push_str("\n# Selected lambda\n\n");
    out.push_str(&header);
    out.push('\n');
    out.push('|');
    out.push_str(&"---|".repeat(columns));
    out.push('\n');
    for &var in &variances {
        for &level in &levels {
            if deblur {
                write!(out, "| {var} ").unwrap();
            }
            write!(out, "| {level} |").unwrap();
            for &m in &methods {
                match table.get(level, var, m).map(|r| &r.outcome) {
                    Some(CellOutcome::Done { lambda, .. }) => write!(out, " {lambda:.3e} |").unwrap(),
                    _ => out.push_str(" |"),
                }
            }
            out.push('\n');
        }
    }

    if !failures.is_empty() {
        out.push_str("\n# Failed cells\n\n");
        for f in failures {
            writeln!(out, "- {f}").unwrap();
        }
    }
    out
}

fn slug(v: f64) -> String {
    format!("{v}").replace('-', "m").replace('.', "p")
}

/// File name of a cell's overlay plot.
pub fn overlay_file_name(method: Method, level_db: f64, blur_variance: f64) -> String {
    format!(
        "overlay_{}_level{}_var{}.svg",
        method.to_string().to_ascii_lowercase(),
        slug(level_db),
        slug(blur_variance)
    )
}

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 40.0;

struct Series<'a> {
    label: String,
    color: &'a str,
    x: Vec<f64>,
    y: Vec<f64>,
}

fn svg_plot(title: &str, series: &[Series<'_>]) -> String {
    let all_x = series.iter().flat_map(|s| s.x.iter().copied());
    let all_y = series.iter().flat_map(|s| s.y.iter().copied());
    let (x0, x1) = all_x.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (y0, y1) = all_y.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let span = |a: f64, b: f64| if b > a { b - a } else { 1.0 };
    let (sx, sy) = (span(x0, x1), span(y0, y1));
    let px = |x: f64| MARGIN + (x - x0) / sx * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / sy * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    )
    .unwrap();
    writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#999"/>"##,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    )
    .unwrap();
    for (i, s) in series.iter().enumerate() {
        let points: Vec<String> = s
            .x
            .iter()
            .zip(&s.y)
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#,
            s.color,
            points.join(" ")
        )
        .unwrap();
        let ly = MARGIN + 16.0 + 16.0 * i as f64;
        writeln!(
            out,
            r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="12" fill="{}">{}</text>"#,
            WIDTH - MARGIN - 150.0,
            s.color,
            escape(&s.label)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn overlay_svg(o: &Overlay) -> String {
    let x: Vec<f64> = (0..o.clean.len()).map(|i| i as f64).collect();
    let title = format!(
        "{} at {} dB, blur variance {}",
        o.method, o.level_db, o.blur_variance
    );
    svg_plot(
        &title,
        &[
            Series {
                label: "degraded".into(),
                color: "#bbbbbb",
                x: x.clone(),
                y: o.degraded.as_slice().to_vec(),
            },
            Series {
                label: "original".into(),
                color: "#1f77b4",
                x: x.clone(),
                y: o.clean.as_slice().to_vec(),
            },
            Series {
                label: "restored".into(),
                color: "#d62728",
                x,
                y: o.restored.as_slice().to_vec(),
            },
        ],
    )
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// ISNR against noise level, one SVG per blur variance, one line per method.
pub fn isnr_plots(table: &ResultTable) -> Vec<(String, String)> {
    let methods = table.methods();
    distinct(table.rows.iter().map(|r| r.blur_variance))
        .into_iter()
        .map(|var| {
            let series: Vec<Series<'_>> = methods
                .iter()
                .enumerate()
                .map(|(i, &m)| {
                    let mut pts: Vec<(f64, f64)> = table
                        .rows
                        .iter()
                        .filter(|r| r.method == m && r.blur_variance == var)
                        .filter_map(|r| match r.outcome {
                            CellOutcome::Done { isnr_db, .. } => Some((r.level_db, isnr_db)),
                            CellOutcome::Failed { .. } => None,
                        })
                        .collect();
                    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                    Series {
                        label: m.to_string(),
                        color: PALETTE[i % PALETTE.len()],
                        x: pts.iter().map(|p| p.0).collect(),
                        y: pts.iter().map(|p| p.1).collect(),
                    }
                })
                .collect();
            let name = format!("isnr_var{}.svg", slug(var));
            (name, svg_plot(&format!("ISNR (dB), blur variance {var}"), &series))
        })
        .collect()
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `results.csv`, `results.md` and one overlay per entry of `overlays`.
pub fn emit_outputs(table: &ResultTable, overlays: &[Overlay], out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = vec![
        write(out_dir.join("results.csv"), &table_to_csv(table))?,
        write(out_dir.join("results.md"), &table_to_markdown(table))?,
    ];
    for o in overlays {
        let name = overlay_file_name(o.method, o.level_db, o.blur_variance);
        written.push(write(out_dir.join(name), &overlay_svg(o))?);
    }
    Ok(written)
}

/// Writes the ISNR plots for `table` into `out_dir`.
pub fn emit_plots(table: &ResultTable, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    isnr_plots(table)
        .into_iter()
        .map(|(name, svg)| write(out_dir.join(name), &svg))
        .collect()
}
