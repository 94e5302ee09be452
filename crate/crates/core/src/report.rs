//! Standalone SVG heatmaps of weight matrices.

use std::fmt::Write as _;

use nalgebra::DMatrix;

const CELL: f64 = 48.0;
const MARGIN: f64 = 40.0;
const TOP: f64 = 36.0;

/// Fill colour for `v` on the linear scale white (`lo`) → red (`hi`).
/// A degenerate range maps everything to white.
pub fn heat_color(v: f64, lo: f64, hi: f64) -> String {
    let s = if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let gb = (255.0 * (1.0 - s)).round() as u8;
    format!("#ff{gb:02x}{gb:02x}")
}

fn label(v: f64, hi: f64) -> String {
    if hi.abs() >= 1000.0 || (hi != 0.0 && hi.abs() < 0.01) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders `m` as an SVG heatmap: one cell per entry, a linear colour scale
/// from the minimum (white) to the maximum (red), the value printed in each
/// cell and one-based row/column labels. Row `a` is the response node.
pub fn heatmap_svg(m: &DMatrix<f64>, title: &str) -> String {
    let (rows, cols) = m.shape();
    let lo = m.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    let hi = m.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(lo);
    let width = MARGIN + cols as f64 * CELL + 10.0;
    let height = TOP + MARGIN + rows as f64 * CELL + 10.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{}</text>"#,
        width / 2.0,
        escape(title)
    );
    let y0 = TOP + MARGIN;
    for c in 0..cols {
        let x = MARGIN + (c as f64 + 0.5) * CELL;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
            y0 - 8.0,
            c + 1
        );
    }
    for r in 0..rows {
        let y = y0 + r as f64 * CELL;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="end">{}</text>"#,
            MARGIN - 8.0,
            y + CELL / 2.0 + 4.0,
            r + 1
        );
        for c in 0..cols {
            let x = MARGIN + c as f64 * CELL;
            let v = m[(r, c)];
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" stroke="#999999" stroke-width="0.5"/>"##,
                heat_color(v, lo, hi)
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{}</text>"#,
                x + CELL / 2.0,
                y + CELL / 2.0 + 3.5,
                label(v, hi)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
