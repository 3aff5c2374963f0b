//! Standalone SVG plots. Each file carries its data in a leading comment so
//! that it can be read back without a plotting toolchain.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn open(svg: &mut String, title: &str, data_header: &str, data: &[String]) {
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(svg, "<!-- data: {data_header}");
    for line in data {
        let _ = writeln!(svg, "{line}");
    }
    let _ = writeln!(svg, "-->");
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(
    svg: &mut String,
    f: &Frame,
    x_label: &str,
    y_label: &str,
    x_ticks: &[(f64, String)],
    y_ticks: &[(f64, String)],
) {
    let (l, r, b, t) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(svg, r#"<path d="M{l} {t} V{b} H{r}" fill="none" stroke="black"/>"#);
    for (x, label) in x_ticks {
        let px = f.px(*x);
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{b}" x2="{px:.2}" y2="{}" stroke="black"/>"#,
            b + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{px:.2}" y="{}" text-anchor="middle">{label}</text>"#,
            b + 18.0
        );
    }
    for (y, label) in y_ticks {
        let py = f.py(*y);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{py:.2}" x2="{l}" y2="{py:.2}" stroke="black"/>"#,
            l - 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#,
            l - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 14.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn linear_ticks(lo: f64, hi: f64, n: usize) -> Vec<(f64, String)> {
    (0..=n)
        .map(|i| {
            let v = lo + (hi - lo) * i as f64 / n as f64;
            (v, format!("{v:.2}"))
        })
        .collect()
}

/// Density histogram of `samples` on `[-4, 4]` with the standard normal
/// density overlaid.
pub fn histogram_svg(title: &str, samples: &[f64]) -> String {
    const BINS: usize = 40;
    let (lo, hi) = (-4.0, 4.0);
    let width = (hi - lo) / BINS as f64;
    let mut counts = [0usize; BINS];
    for &x in samples {
        if x >= lo && x < hi {
            counts[((x - lo) / width) as usize] += 1;
        }
    }
    let n = samples.len().max(1) as f64;
    let density: Vec<f64> = counts.iter().map(|&c| c as f64 / (n * width)).collect();
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let y_max = density.iter().cloned().fold(phi(0.0), f64::max) * 1.1;
    let f = Frame {
        x0: lo,
        x1: hi,
        y0: 0.0,
        y1: y_max,
    };
    let data: Vec<String> = density
        .iter()
        .enumerate()
        .map(|(i, d)| format!("{},{},{}", lo + i as f64 * width, lo + (i + 1) as f64 * width, d))
        .collect();
    let mut svg = String::new();
    open(
        &mut svg,
        title,
        &format!("n = {}; bin_lo,bin_hi,density", samples.len()),
        &data,
    );
    let x_ticks: Vec<_> = (-4..=4).map(|k| (k as f64, k.to_string())).collect();
    axes(&mut svg, &f, "F_R", "density", &x_ticks, &linear_ticks(0.0, y_max, 4));
    for (i, d) in density.iter().enumerate() {
        let x = f.px(lo + i as f64 * width);
        let w = f.px(lo + (i + 1) as f64 * width) - x;
        let y = f.py(*d);
        let _ = writeln!(
            svg,
            r##"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{:.2}" fill="#9ecae1" stroke="#3182bd"/>"##,
            f.py(0.0) - y
        );
    }
    let curve: Vec<String> = (0..=200)
        .map(|k| {
            let x = lo + (hi - lo) * k as f64 / 200.0;
            format!("{:.2},{:.2}", f.px(x), f.py(phi(x)))
        })
        .collect();
    let _ = writeln!(
        svg,
        r##"<polyline points="{}" fill="none" stroke="#de2d26" stroke-width="2"/>"##,
        curve.join(" ")
    );
    svg.push_str("</svg>\n");
    svg
}

/// `distance` against `R` on log-log axes with the fitted line
/// `log d = intercept + slope · log R`.
pub fn rate_svg(title: &str, points: &[(f64, f64)], slope: f64, intercept: f64) -> String {
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.2;
    let f = Frame {
        x0: min(&lx) - pad,
        x1: max(&lx) + pad,
        y0: min(&ly) - pad,
        y1: max(&ly) + pad,
    };
    let data: Vec<String> = points.iter().map(|(r, d)| format!("{r},{d}")).collect();
    let mut svg = String::new();
    open(
        &mut svg,
        title,
        &format!("slope = {slope}, intercept = {intercept}; R,distance"),
        &data,
    );
    let x_ticks: Vec<_> = points.iter().map(|p| (p.0.ln(), format!("{}", p.0))).collect();
    let y_ticks: Vec<_> = linear_ticks(f.y0, f.y1, 4)
        .into_iter()
        .map(|(v, _)| (v, format!("{:.3}", v.exp())))
        .collect();
    axes(
        &mut svg,
        &f,
        "R (log scale)",
        "distance (log scale)",
        &x_ticks,
        &y_ticks,
    );
    let (a, b) = (f.x0, f.x1);
    let _ = writeln!(
        svg,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#de2d26" stroke-dasharray="6 4"/>"##,
        f.px(a),
        f.py(intercept + slope * a),
        f.px(b),
        f.py(intercept + slope * b)
    );
    for (x, y) in lx.iter().zip(&ly) {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#3182bd"/>"##,
            f.px(*x),
            f.py(*y)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Heat map of a square matrix with row and column labels.
pub fn heatmap_svg(title: &str, labels: &[String], matrix: &[Vec<f64>]) -> String {
    let n = matrix.len();
    let finite = matrix.iter().flatten().filter(|v| v.is_finite());
    let lo = finite.clone().cloned().fold(f64::INFINITY, f64::min);
    let hi = finite.cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let data: Vec<String> = matrix
        .iter()
        .map(|row| row.iter().map(f64::to_string).collect::<Vec<_>>().join(","))
        .collect();
    let mut svg = String::new();
    open(
        &mut svg,
        title,
        &format!("rows and columns {}", labels.join(",")),
        &data,
    );
    let side = (HEIGHT - 2.0 * MARGIN).min(WIDTH - 2.0 * MARGIN);
    let cell = side / n.max(1) as f64;
    let (ox, oy) = ((WIDTH - side) / 2.0, MARGIN);
    for (i, row) in matrix.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let u = if v.is_finite() { (v - lo) / span } else { 0.0 };
            // white to dark blue
            let (r, g, b) = (
                (255.0 * (1.0 - 0.85 * u)) as u8,
                (255.0 * (1.0 - 0.6 * u)) as u8,
                (255.0 * (1.0 - 0.3 * u)) as u8,
            );
            let (x, y) = (ox + j as f64 * cell, oy + i as f64 * cell);
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{cell:.2}" height="{cell:.2}" fill="rgb({r},{g},{b})" stroke="white"/>"#
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{v:.4}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    for (k, label) in labels.iter().enumerate() {
        let c = k as f64 * cell + cell / 2.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            ox - 6.0,
            oy + c + 4.0,
            escape(label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            ox + c,
            oy + side + 16.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Parses the data comment of an SVG written by this module.
pub fn embedded_data(svg: &str) -> Vec<Vec<f64>> {
    let Some(start) = svg.find("<!-- data:") else {
        return Vec::new();
    };
    let body = &svg[start..];
    let end = body.find("-->").unwrap_or(body.len());
    body[..end]
        .lines()
        .skip(1)
        .map(|l| l.split(',').filter_map(|v| v.trim().parse().ok()).collect())
        .filter(|v: &Vec<f64>| !v.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_data_integrates_to_captured_mass() {
        let samples: Vec<f64> = (0..1000).map(|i| -3.0 + 6.0 * i as f64 / 1000.0).collect();
        let svg = histogram_svg("uniform", &samples);
        assert!(svg.contains("<svg") && svg.trim_end().ends_with("</svg>"));
        let rows = embedded_data(&svg);
        assert_eq!(rows.len(), 40);
        let mass: f64 = rows.iter().map(|r| (r[1] - r[0]) * r[2]).sum();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rate_and_heatmap_carry_their_data() {
        let pts = [(4.0, 0.05), (8.0, 0.04), (16.0, 0.03)];
        let svg = rate_svg("rate", &pts, -0.4, -2.0);
        assert_eq!(
            embedded_data(&svg),
            vec![vec![4.0, 0.05], vec![8.0, 0.04], vec![16.0, 0.03]]
        );
        let m = vec![vec![1.0, 0.5], vec![0.5, 2.0]];
        let svg = heatmap_svg("cov", &["0.5".into(), "1".into()], &m);
        assert_eq!(embedded_data(&svg), m);
        assert_eq!(svg.matches("<rect").count(), 1 + 4);
    }
}
