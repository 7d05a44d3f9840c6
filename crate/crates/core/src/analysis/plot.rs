use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Per-point colour source for a scatter plot.
#[derive(Debug, Clone, PartialEq)]
pub enum ColorBy {
    /// Continuous values mapped through a blue-to-yellow ramp.
    Value { name: String, values: Vec<f64> },
    /// Categorical ids drawn from a fixed palette.
    Cluster(Vec<usize>),
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

const RAMP: [(f64, [f64; 3]); 5] = [
    (0.0, [68.0, 1.0, 84.0]),
    (0.25, [59.0, 82.0, 139.0]),
    (0.5, [33.0, 145.0, 140.0]),
    (0.75, [94.0, 201.0, 98.0]),
    (1.0, [253.0, 231.0, 37.0]),
];

fn ramp(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let k = RAMP.windows(2).position(|w| t <= w[1].0).unwrap_or(RAMP.len() - 2);
    let (t0, c0) = RAMP[k];
    let (t1, c1) = RAMP[k + 1];
    let f = (t - t0) / (t1 - t0);
    let c: Vec<u8> = (0..3).map(|i| (c0[i] + f * (c1[i] - c0[i])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders 2-d points as a standalone SVG document. The config hash is
/// embedded as a comment.
pub fn scatter_svg(points: &[[f64; 2]], color: &ColorBy, title: &str, config_hash: &str) -> Result<String> {
    let n = points.len();
    let count = match color {
        ColorBy::Value { values, .. } => values.len(),
        ColorBy::Cluster(ids) => ids.len(),
    };
    if count != n {
        return Err(Error::shape(format!("{n} colour values"), count));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("plot coordinates".into()));
    }
    let (w, h, margin, legend) = (640.0, 480.0, 40.0, 120.0);
    let bounds = |c: usize| {
        let lo = points.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[c]).fold(f64::NEG_INFINITY, f64::max);
        if n == 0 {
            (0.0, 1.0)
        } else if hi > lo {
            (lo, hi)
        } else {
            (lo - 1.0, hi + 1.0)
        }
    };
    let (x0, x1) = bounds(0);
    let (y0, y1) = bounds(1);
    let plot_w = w - 2.0 * margin - legend;
    let plot_h = h - 2.0 * margin;
    let sx = |x: f64| margin + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| h - margin - (y - y0) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    if !config_hash.is_empty() {
        let _ = writeln!(svg, "<!-- config_hash={config_hash} -->");
    }
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r##"<rect x="{margin}" y="{margin}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(svg, r#"<text x="{margin}" y="{}" font-size="14">{}</text>"#, margin - 12.0, escape(title));

    let fills: Vec<String> = match color {
        ColorBy::Value { values, .. } => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = if hi > lo { hi - lo } else { 1.0 };
            values.iter().map(|v| ramp((v - lo) / span)).collect()
        }
        ColorBy::Cluster(ids) => ids.iter().map(|&c| PALETTE[c % PALETTE.len()].to_string()).collect(),
    };
    let _ = writeln!(svg, "<g>");
    for (p, f) in points.iter().zip(&fills) {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{f}" fill-opacity="0.8"/>"#,
            sx(p[0]),
            sy(p[1])
        );
    }
    let _ = writeln!(svg, "</g>");

    let lx = w - legend - margin + 20.0;
    match color {
        ColorBy::Value { name, values } => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let _ = writeln!(svg, r#"<text x="{lx}" y="{}">{}</text>"#, margin + 10.0, escape(name));
            for i in 0..20 {
                let t = 1.0 - i as f64 / 19.0;
                let _ = writeln!(
                    svg,
                    r#"<rect x="{lx}" y="{:.1}" width="16" height="10" fill="{}"/>"#,
                    margin + 20.0 + i as f64 * 10.0,
                    ramp(t)
                );
            }
            if n > 0 {
                let _ = writeln!(svg, r#"<text x="{}" y="{}">{hi:.3}</text>"#, lx + 22.0, margin + 29.0);
                let _ = writeln!(svg, r#"<text x="{}" y="{}">{lo:.3}</text>"#, lx + 22.0, margin + 219.0);
            }
        }
        ColorBy::Cluster(ids) => {
            let k = ids.iter().max().map_or(0, |m| m + 1);
            for c in 0..k.min(25) {
                let y = margin + 10.0 + c as f64 * 14.0;
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{}" cy="{y}" r="4" fill="{}"/><text x="{}" y="{}">cluster {c}</text>"#,
                    lx + 4.0,
                    PALETTE[c % PALETTE.len()],
                    lx + 14.0,
                    y + 4.0
                );
            }
        }
    }
    let _ = writeln!(svg, "</svg>");
    Ok(svg)
}
