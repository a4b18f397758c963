//! Static SVG charts. Coordinates are printed with fixed precision so that
//! identical data gives identical files.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];
const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(title: &str, width: f64, height: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        width / 2.0,
        escape(title)
    );
    s
}

fn save(path: &Path, mut svg: String) -> Result<()> {
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).with_context(|| format!("writing {}", path.display()))
}

fn extent(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn axes(s: &mut String, x: (f64, f64), y: (f64, f64), x_label: &str, y_label: &str) {
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{:.0}" height="{:.0}" fill="none" stroke="black"/>"#,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let px = MARGIN + t * (W - 2.0 * MARGIN);
        let py = H - MARGIN - t * (H - 2.0 * MARGIN);
        let _ = writeln!(
            s,
            r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{:.3}</text>"#,
            H - MARGIN + 16.0,
            x.0 + t * (x.1 - x.0)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3}</text>"#,
            MARGIN - 6.0,
            py + 4.0,
            y.0 + t * (y.1 - y.0)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
}

fn to_px(v: f64, range: (f64, f64), lo: f64, hi: f64) -> f64 {
    lo + (v - range.0) / (range.1 - range.0) * (hi - lo)
}

/// Points colored by group, with a legend in first-seen group order.
pub fn scatter(path: &Path, title: &str, points: &[(f64, f64)], groups: &[String]) -> Result<()> {
    let mut s = open(title, W, H);
    let xr = extent(points.iter().map(|p| p.0));
    let yr = extent(points.iter().map(|p| p.1));
    axes(&mut s, xr, yr, "dimension 1", "dimension 2");
    let mut names: Vec<&str> = Vec::new();
    for g in groups {
        if !names.contains(&g.as_str()) {
            names.push(g);
        }
    }
    for (p, g) in points.iter().zip(groups) {
        let color = PALETTE[names.iter().position(|n| n == g).unwrap_or(0) % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}" fill-opacity="0.8"/>"#,
            to_px(p.0, xr, MARGIN, W - MARGIN),
            to_px(p.1, yr, H - MARGIN, MARGIN)
        );
    }
    if names.len() > 1 {
        for (i, n) in names.iter().enumerate() {
            let y = MARGIN + 14.0 + 16.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                W - MARGIN - 90.0,
                y - 4.0,
                PALETTE[i % PALETTE.len()],
                W - MARGIN - 80.0,
                y,
                escape(n)
            );
        }
    }
    save(path, s)
}

/// Shaded matrix; cells are annotated when `annotate` is set.
pub fn heatmap(path: &Path, title: &str, rows: &[String], cols: &[String], values: &[Vec<f64>], annotate: bool) -> Result<()> {
    let (nr, nc) = (values.len().max(1), values.first().map_or(1, Vec::len).max(1));
    let label_room = if rows.is_empty() { 20.0 } else { 110.0 };
    let cell = ((W - label_room - 40.0) / nc as f64).min((H - 120.0) / nr as f64);
    let (width, height) = (label_room + cell * nc as f64 + 40.0, 80.0 + cell * nr as f64 + 40.0);
    let mut s = open(title, width, height);
    let max = values.iter().flatten().fold(0.0f64, |m, v| m.max(*v));
    for (i, row) in values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let t = if max > 0.0 { v / max } else { 0.0 };
            let shade = (255.0 * (1.0 - t)).round() as u8;
            let (x, y) = (label_room + j as f64 * cell, 60.0 + i as f64 * cell);
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{cell:.2}" height="{cell:.2}" fill="rgb({shade},{shade},255)"/>"#
            );
            if annotate {
                let ink = if t > 0.5 { "white" } else { "black" };
                let _ = writeln!(
                    s,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" fill="{ink}">{}</text>"#,
                    x + cell / 2.0,
                    y + cell / 2.0 + 4.0,
                    trim(*v)
                );
            }
        }
    }
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            label_room - 6.0,
            60.0 + (i as f64 + 0.5) * cell + 4.0,
            escape(r)
        );
    }
    for (j, c) in cols.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            label_room + (j as f64 + 0.5) * cell,
            60.0 + nr as f64 * cell + 16.0,
            escape(c)
        );
    }
    save(path, s)
}

fn trim(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

/// Polyline with markers.
pub fn line(path: &Path, title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> Result<()> {
    let mut s = open(title, W, H);
    let xr = extent(points.iter().map(|p| p.0));
    let yr = extent(points.iter().map(|p| p.1).chain([0.0]));
    axes(&mut s, xr, yr, x_label, y_label);
    let coords: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (to_px(p.0, xr, MARGIN, W - MARGIN), to_px(p.1, yr, H - MARGIN, MARGIN)))
        .collect();
    let path_data: Vec<String> = coords.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
        path_data.join(" "),
        PALETTE[0]
    );
    for (x, y) in coords {
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{}"/>"#, PALETTE[0]);
    }
    save(path, s)
}
