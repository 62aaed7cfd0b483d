//! Minimal SVG scatter plots of 2D embeddings.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::linalg::Matrix;

const SIZE: f64 = 480.0;
const PAD: f64 = 24.0;
const PALETTE: [&str; 8] = [
    "#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Renders the first two columns of `points` as an SVG document, one
/// `<circle>` per row, colored by label.
pub fn scatter_svg(points: &Matrix, labels: &[usize], title: &str) -> String {
    assert_eq!(points.rows(), labels.len(), "one label per point");
    assert!(points.cols() >= 2, "need two coordinates per point");

    let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for row in points.row_iter() {
        lo_x = lo_x.min(row[0]);
        hi_x = hi_x.max(row[0]);
        lo_y = lo_y.min(row[1]);
        hi_y = hi_y.max(row[1]);
    }
    if !lo_x.is_finite() {
        (lo_x, hi_x, lo_y, hi_y) = (-1.0, 1.0, -1.0, 1.0);
    }
    // square extent so angles between clusters are drawn faithfully
    let span = (hi_x - lo_x).max(hi_y - lo_y).max(1e-12);
    let (cx, cy) = (0.5 * (lo_x + hi_x), 0.5 * (lo_y + hi_y));
    let scale = (SIZE - 2.0 * PAD) / span;
    let px = |x: f64| SIZE / 2.0 + (x - cx) * scale;
    let py = |y: f64| SIZE / 2.0 - (y - cy) * scale;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(svg, "<title>{}</title>", escape(title));
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (row, &label) in points.row_iter().zip(labels) {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}" class="c{label}"/>"#,
            px(row[0]),
            py(row[1]),
            PALETTE[label % PALETTE.len()]
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn write_scatter_svg(path: impl AsRef<Path>, points: &Matrix, labels: &[usize], title: &str) -> std::io::Result<()> {
    fs::write(path, scatter_svg(points, labels, title))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
