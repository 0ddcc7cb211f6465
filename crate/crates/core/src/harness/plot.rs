//! Minimal standalone SVG charts.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.into(), points }
    }
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit<'a>(points: impl Iterator<Item = &'a (f64, f64)>) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in points.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 < 1e-12 {
            x1 = x0 + 1.0;
        }
        y0 = y0.min(0.0);
        if y1 - y0 < 1e-12 {
            y1 = y0 + 1.0;
        }
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str, xlabel: &str, ylabel: &str, f: &Frame) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>
<text x="{}" y="{}" text-anchor="middle">{}</text>
<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>
"#,
        WIDTH / 2.0,
        escape(title),
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(xlabel),
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(ylabel),
    );
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(out, r#"<path d="M{l} {t} L{l} {b} L{r} {b}" stroke="black" fill="none"/>"#);
    for k in 0..=4 {
        let fx = f.x0 + (f.x1 - f.x0) * k as f64 / 4.0;
        let fy = f.y0 + (f.y1 - f.y0) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            f.px(fx),
            b + 16.0,
            tick(fx)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            l - 6.0,
            f.py(fy) + 4.0,
            tick(fy)
        );
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN + 4.0 + 16.0 * i as f64;
        let x = WIDTH - MARGIN - 130.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            y - 9.0,
            PALETTE[i % PALETTE.len()],
            x + 14.0,
            y,
            escape(name)
        );
    }
}

pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let frame = Frame::fit(series.iter().flat_map(|s| s.points.iter()));
    let mut out = String::new();
    header(&mut out, title, xlabel, ylabel, &frame);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", frame.px(x), frame.py(y)))
            .collect();
        let _ = writeln!(out, r#"<polyline points="{}" stroke="{color}" stroke-width="2" fill="none"/>"#, path.join(" "));
        for p in &path {
            let (x, y) = p.split_once(',').expect("formatted pair");
            let _ = writeln!(out, r#"<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>"#);
        }
    }
    legend(&mut out, &series.iter().map(|s| s.name.as_str()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Overlaid step histograms; each series gives `(bin centre, height)`.
pub fn histogram(title: &str, xlabel: &str, ylabel: &str, series: &[Series], bin_width: f64) -> String {
    let frame = Frame::fit(series.iter().flat_map(|s| s.points.iter()));
    let frame = Frame { x0: frame.x0 - bin_width / 2.0, x1: frame.x1 + bin_width / 2.0, ..frame };
    let mut out = String::new();
    header(&mut out, title, xlabel, ylabel, &frame);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for &(c, h) in s.points.iter().filter(|(_, h)| *h > 0.0) {
            let x = frame.px(c - bin_width / 2.0);
            let w = frame.px(c + bin_width / 2.0) - x;
            let y = frame.py(h);
            let _ = writeln!(
                out,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{w:.1}" height="{:.1}" fill="{color}" fill-opacity="0.45" stroke="{color}"/>"#,
                frame.py(0.0) - y
            );
        }
    }
    legend(&mut out, &series.iter().map(|s| s.name.as_str()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed() {
        let s = vec![Series::new("a<b", vec![(0.0, 1.0), (1.0, 2.0)])];
        let svg = line_chart("t", "x", "y", &s);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&lt;b"));
        let h = histogram("t", "x", "y", &s, 0.5);
        assert!(h.contains("<rect x="));
    }

    #[test]
    fn empty_series_do_not_panic() {
        let svg = line_chart("t", "x", "y", &[Series::new("e", vec![])]);
        assert!(svg.contains("</svg>"));
    }
}
