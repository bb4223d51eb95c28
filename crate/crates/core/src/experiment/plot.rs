//! SVG figures built only from CSV artifacts already on disk.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::io::read_matrix_csv;

const PANEL: f64 = 360.0;
const PAD: f64 = 24.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Isometric view of `(x0, x1, x2)`; `x0` points down-left, so motion off
/// the `(x1, x2)` plane shows up as diagonal strokes.
fn project(p: [f64; 3]) -> (f64, f64) {
    let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
    ((p[1] - p[0]) * c, p[2] - (p[0] + p[1]) * s)
}

struct Frame {
    x0: f64,
    scale: f64,
}

impl Frame {
    fn px(&self, p: [f64; 3]) -> (f64, f64) {
        let (u, v) = project(p);
        (
            self.x0 + PANEL / 2.0 + u * self.scale,
            PAD + PANEL / 2.0 - v * self.scale,
        )
    }
}

fn point(m: &Array2<f64>, i: usize, first: usize) -> [f64; 3] {
    [m[[i, first]], m[[i, first + 1]], m[[i, first + 2]]]
}

fn panel_open(svg: &mut String, idx: usize, title: &str, frame: &Frame, extent: f64) {
    let x = idx as f64 * (PANEL + PAD) + PAD;
    let _ = writeln!(
        svg,
        r##"<clipPath id="clip{idx}"><rect x="{x}" y="{PAD}" width="{PANEL}" height="{PANEL}"/></clipPath>"##
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{x}" y="{PAD}" width="{PANEL}" height="{PANEL}" fill="none" stroke="#999"/>"##
    );
    let _ = writeln!(
        svg,
        r##"<text x="{}" y="{}" font-family="sans-serif" font-size="14" text-anchor="middle">{title}</text>"##,
        x + PANEL / 2.0,
        PAD - 6.0
    );
    let _ = writeln!(svg, r##"<g clip-path="url(#clip{idx})">"##);
    for (axis, label) in ["x0", "x1", "x2"].iter().enumerate() {
        let mut tip = [0.0; 3];
        tip[axis] = extent;
        let (ax, ay) = frame.px([0.0; 3]);
        let (bx, by) = frame.px(tip);
        let _ = writeln!(
            svg,
            r##"<line x1="{ax:.2}" y1="{ay:.2}" x2="{bx:.2}" y2="{by:.2}" stroke="#bbb"/><text x="{bx:.2}" y="{by:.2}" font-family="sans-serif" font-size="10" fill="#777">{label}</text>"##
        );
    }
}

fn read(dir: &Path, name: &str) -> Result<Array2<f64>> {
    let m = read_matrix_csv(&dir.join(name))?;
    Ok(m)
}

/// Three panels from `data.csv`, `paths_baseline.csv` and
/// `paths_regularized.csv` in `dir`; writes `toy.svg` there.
pub fn toy_figure(dir: &Path) -> Result<PathBuf> {
    let data = read(dir, "data.csv")?;
    if data.ncols() != 3 {
        return Err(Error::format(dir.join("data.csv"), "figure needs 3 columns"));
    }
    let extent = 1.5 * data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-9);
    let scale = PANEL / 2.0 / (1.6 * extent);
    let width = 3.0 * (PANEL + PAD) + PAD;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{}" viewBox="0 0 {width} {}">"##,
        PANEL + 2.0 * PAD,
        PANEL + 2.0 * PAD
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="white"/>"##);

    let frame = |i: usize| Frame {
        x0: i as f64 * (PANEL + PAD) + PAD,
        scale,
    };
    let f = frame(0);
    panel_open(&mut svg, 0, "data", &f, extent);
    for i in 0..data.nrows() {
        let (x, y) = f.px(point(&data, i, 0));
        let _ = writeln!(
            svg,
            r##"<circle cx="{x:.2}" cy="{y:.2}" r="1.2" fill="#444" fill-opacity="0.5"/>"##
        );
    }
    svg.push_str("</g>\n");

    for (idx, (title, file)) in [
        ("baseline", "paths_baseline.csv"),
        ("regularized", "paths_regularized.csv"),
    ]
    .into_iter()
    .enumerate()
    {
        let paths = read(dir, file)?;
        if paths.ncols() != 5 {
            return Err(Error::format(
                dir.join(file),
                "expected columns chain, step, x0, x1, x2",
            ));
        }
        let f = frame(idx + 1);
        panel_open(&mut svg, idx + 1, title, &f, extent);
        let mut start = 0;
        while start < paths.nrows() {
            let chain = paths[[start, 0]];
            let mut end = start;
            while end < paths.nrows() && paths[[end, 0]] == chain {
                end += 1;
            }
            let color = COLORS[chain as usize % COLORS.len()];
            let pts: Vec<String> = (start..end)
                .map(|i| {
                    let (x, y) = f.px(point(&paths, i, 2));
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(
                svg,
                r##"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1" stroke-opacity="0.7"/>"##,
                pts.join(" ")
            );
            let (x, y) = f.px(point(&paths, end - 1, 2));
            let _ = writeln!(svg, r##"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{color}"/>"##);
            start = end;
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    let out = dir.join("toy.svg");
    fs::write(&out, svg)?;
    Ok(out)
}

/// Per-epoch mean total loss (log scale) and `kappa` from a training log.
pub fn write_loss_figure(log_csv: &Path, out: &Path) -> Result<()> {
    let log = read_matrix_csv(log_csv)?;
    if log.ncols() != 6 || log.nrows() == 0 {
        return Err(Error::format(
            log_csv,
            "expected epoch, step, fit_term, reg_term, total, kappa",
        ));
    }
    let mut epochs: Vec<(f64, f64, f64)> = Vec::new();
    let mut count = 0.0;
    for row in log.rows() {
        match epochs.last_mut() {
            Some(last) if last.0 == row[0] => {
                last.1 += row[4];
                last.2 = row[5];
                count += 1.0;
            }
            _ => {
                if let Some(last) = epochs.last_mut() {
                    last.1 /= count;
                }
                epochs.push((row[0], row[4], row[5]));
                count = 1.0;
            }
        }
    }
    if let Some(last) = epochs.last_mut() {
        last.1 /= count;
    }
    let loss: Vec<f64> = epochs.iter().map(|e| e.1.max(1e-300).log10()).collect();
    let kappa: Vec<f64> = epochs.iter().map(|e| e.2).collect();
    let width = 2.0 * (PANEL + PAD) + PAD;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{h}" viewBox="0 0 {width} {h}">"##,
        h = PANEL + 2.0 * PAD
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="white"/>"##);
    for (idx, (title, ys)) in [("log10 total loss", &loss), ("kappa", &kappa)].into_iter().enumerate() {
        let x0 = idx as f64 * (PANEL + PAD) + PAD;
        let (lo, hi) = ys
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let n = ys.len().max(2) as f64 - 1.0;
        let pts: Vec<String> = ys
            .iter()
            .enumerate()
            .map(|(i, y)| {
                format!(
                    "{:.2},{:.2}",
                    x0 + i as f64 / n * PANEL,
                    PAD + PANEL - (y - lo) / span * PANEL
                )
            })
            .collect();
        let _ = writeln!(
            svg,
            r##"<rect x="{x0}" y="{PAD}" width="{PANEL}" height="{PANEL}" fill="none" stroke="#999"/>"##
        );
        let _ = writeln!(
            svg,
            r##"<text x="{}" y="{}" font-family="sans-serif" font-size="14" text-anchor="middle">{title} [{lo:.3}, {hi:.3}]</text>"##,
            x0 + PANEL / 2.0,
            PAD - 6.0
        );
        let _ = writeln!(
            svg,
            r##"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"##,
            pts.join(" "),
            COLORS[idx]
        );
    }
    svg.push_str("</svg>\n");
    fs::write(out, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_rows_csv;

    #[test]
    fn isometric_axes() {
        assert_eq!(project([0.0, 0.0, 1.0]), (0.0, 1.0));
        let (u, v) = project([1.0, 1.0, 0.0]);
        assert!(u.abs() < 1e-15 && (v + 1.0).abs() < 1e-12);
    }

    #[test]
    fn figures_from_csv_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        write_rows_csv(
            &p.join("data.csv"),
            &["x0", "x1", "x2"],
            [["0.1", "1", "-1"], ["0", "-0.5", "0.5"]].map(|r| r.map(String::from)),
        )
        .unwrap();
        for name in ["paths_baseline.csv", "paths_regularized.csv"] {
            write_rows_csv(
                &p.join(name),
                &["chain", "step", "x0", "x1", "x2"],
                [
                    ["0", "0", "5", "5", "5"],
                    ["0", "1", "0", "1", "1"],
                    ["1", "0", "1", "1", "1"],
                ]
                .map(|r| r.map(String::from)),
            )
            .unwrap();
        }
        let svg = fs::read_to_string(toy_figure(p).unwrap()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert_eq!(svg.matches("<clipPath").count(), 3);

        write_rows_csv(
            &p.join("log.csv"),
            &["epoch", "step", "fit_term", "reg_term", "total", "kappa"],
            [
                ["1", "0", "2", "0.1", "2.1", "3"],
                ["1", "1", "1", "0.1", "1.1", "2.9"],
                ["2", "0", "1", "0.1", "1.1", "2.8"],
            ]
            .map(|r| r.map(String::from)),
        )
        .unwrap();
        write_loss_figure(&p.join("log.csv"), &p.join("loss.svg")).unwrap();
        assert!(fs::read_to_string(p.join("loss.svg")).unwrap().contains("kappa"));
    }
}
