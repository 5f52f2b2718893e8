//! Plot data: point-cloud CSV and a bare SVG scatter.

use std::fmt::Write;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 40.0;

pub fn points_csv(header: [&str; 3], points: &[[f64; 3]]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for p in points {
        let _ = writeln!(out, "{:.6},{:.6},{:.6}", p[0], p[1], p[2]);
    }
    out
}

/// Orthographic scatter of `(x, y)` pairs in a fixed 600×600 viewport, y up.
pub fn svg_scatter(points: &[(f64, f64)], x_label: &str, y_label: &str) -> String {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if points.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let span = |lo: f64, hi: f64| if hi - lo > 1e-12 { hi - lo } else { 1.0 };
    let (sx, sy) = (span(x0, x1), span(y0, y1));
    let inner = SIZE - 2.0 * MARGIN;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{inner}" height="{inner}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{x_label} [{x0:.1}, {x1:.1}]</text>"#,
        SIZE / 2.0,
        SIZE - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {})">{y_label} [{y0:.1}, {y1:.1}]</text>"#,
        SIZE / 2.0,
        SIZE / 2.0
    );
    out.push_str("<g fill=\"steelblue\">\n");
    for &(x, y) in points {
        let px = MARGIN + (x - x0) / sx * inner;
        let py = SIZE - MARGIN - (y - y0) / sy * inner;
        let _ = writeln!(out, r#"<circle cx="{px:.2}" cy="{py:.2}" r="1"/>"#);
    }
    out.push_str("</g>\n</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_csv_has_header_only() {
        assert_eq!(points_csv(["x", "y", "z"], &[]), "x,y,z\n");
    }

    #[test]
    fn scatter_maps_extremes_to_frame() {
        let svg = svg_scatter(&[(0.0, 0.0), (10.0, 5.0)], "x", "y");
        assert!(svg.contains(r#"cx="40.00" cy="560.00""#));
        assert!(svg.contains(r#"cx="560.00" cy="40.00""#));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
