//! Minimal standalone SVG line charts.

use std::fmt::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineStyle {
    Solid,
    Dashed,
    Dotted,
}

impl LineStyle {
    fn dasharray(self) -> &'static str {
        match self {
            LineStyle::Solid => "",
            LineStyle::Dashed => " stroke-dasharray=\"6 4\"",
            LineStyle::Dotted => " stroke-dasharray=\"1.5 3\"",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub color: &'static str,
    pub style: LineStyle,
    /// Draw as a right-continuous step function.
    pub step: bool,
    /// Draw markers instead of a line.
    pub points: bool,
}

impl Series {
    pub fn line(label: impl Into<String>, xs: Vec<f64>, ys: Vec<f64>, color: &'static str, style: LineStyle) -> Self {
        Series {
            label: label.into(),
            xs,
            ys,
            color,
            style,
            step: false,
            points: false,
        }
    }

    pub fn steps(mut self) -> Self {
        self.step = true;
        self
    }

    pub fn markers(mut self) -> Self {
        self.points = true;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub y_range: Option<(f64, f64)>,
    /// Horizontal reference line.
    pub h_line: Option<f64>,
}

impl Panel {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Panel {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
            y_range: None,
            h_line: None,
        }
    }
}

const W: f64 = 420.0;
const H: f64 = 300.0;
const ML: f64 = 60.0;
const MR: f64 = 15.0;
const MT: f64 = 30.0;
const MB: f64 = 45.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn draw_panel(out: &mut String, p: &Panel, ox: f64, oy: f64) {
    let (x0, x1) = range(p.series.iter().flat_map(|s| s.xs.iter().copied()));
    let (y0, y1) = p.y_range.unwrap_or_else(|| {
        range(p.series.iter().flat_map(|s| s.ys.iter().copied()).chain(p.h_line))
    });
    let pw = W - ML - MR;
    let ph = H - MT - MB;
    let sx = |x: f64| ox + ML + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| oy + MT + (1.0 - (y - y0) / (y1 - y0)) * ph;
    let _ = writeln!(
        out,
        "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{pw:.1}\" height=\"{ph:.1}\" fill=\"none\" stroke=\"#444\"/>",
        ox + ML,
        oy + MT
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\">{}</text>",
        ox + ML + pw / 2.0,
        oy + 18.0,
        escape(&p.title)
    );
    for t in ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(
            out,
            "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#444\"/><text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"10\">{}</text>",
            oy + MT + ph,
            oy + MT + ph + 4.0,
            oy + MT + ph + 15.0,
            fmt_tick(t)
        );
    }
    for t in ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(
            out,
            "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#444\"/><text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"10\">{}</text>",
            ox + ML - 4.0,
            ox + ML,
            ox + ML - 6.0,
            y + 3.5,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"11\">{}</text>",
        ox + ML + pw / 2.0,
        oy + H - 8.0,
        escape(&p.x_label)
    );
    let _ = writeln!(
        out,
        "<text transform=\"translate({:.1},{:.1}) rotate(-90)\" text-anchor=\"middle\" font-size=\"11\">{}</text>",
        ox + 14.0,
        oy + MT + ph / 2.0,
        escape(&p.y_label)
    );
    if let Some(h) = p.h_line {
        let y = sy(h);
        let _ = writeln!(
            out,
            "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#999\"/>",
            ox + ML,
            ox + ML + pw
        );
    }
    for (k, s) in p.series.iter().enumerate() {
        let pts: Vec<(f64, f64)> = s
            .xs
            .iter()
            .zip(&s.ys)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| (x, y))
            .collect();
        if s.points {
            for (x, y) in &pts {
                let _ = writeln!(
                    out,
                    "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{}\"/>",
                    sx(*x),
                    sy(*y),
                    s.color
                );
            }
        }
        if !pts.is_empty() && (!s.points || pts.len() > 1) {
            let mut d = String::new();
            for (i, &(x, y)) in pts.iter().enumerate() {
                if i == 0 {
                    let _ = write!(d, "M{:.2},{:.2}", sx(x), sy(y));
                } else {
                    if s.step {
                        let _ = write!(d, " H{:.2}", sx(x));
                    }
                    let _ = write!(d, " L{:.2},{:.2}", sx(x), sy(y));
                }
            }
            if s.step {
                let _ = write!(d, " H{:.2}", sx(x1));
            }
            let _ = writeln!(
                out,
                "<path d=\"{d}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"{}/>",
                s.color,
                s.style.dasharray()
            );
        }
        let ly = oy + MT + 12.0 + 13.0 * k as f64;
        let lx = ox + W - MR - 110.0;
        let _ = writeln!(
            out,
            "<line x1=\"{lx:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{}\" stroke-width=\"1.5\"{}/><text x=\"{:.1}\" y=\"{ly:.1}\" font-size=\"10\">{}</text>",
            ly - 3.5,
            lx + 18.0,
            ly - 3.5,
            s.color,
            s.style.dasharray(),
            lx + 22.0,
            escape(&s.label)
        );
    }
}

/// Lays panels out in a grid with `cols` columns.
pub fn render(panels: &[Panel], cols: usize) -> String {
    let cols = cols.max(1);
    let rows = panels.len().div_ceil(cols).max(1);
    let width = W * cols.min(panels.len().max(1)) as f64;
    let height = H * rows as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    for (i, p) in panels.iter().enumerate() {
        draw_panel(&mut out, p, W * (i % cols) as f64, H * (i / cols) as f64);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_well_formed_svg() {
        let mut p = Panel::new("curve <a>", "t", "S");
        p.series.push(Series::line("est", vec![0.0, 1.0, 2.0], vec![1.0, 0.8, f64::NAN], "black", LineStyle::Solid).steps());
        p.series.push(Series::line("ci", vec![0.0, 1.0], vec![0.9, 0.7], "gray", LineStyle::Dashed));
        let svg = render(&[p.clone(), p], 2);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("curve &lt;a&gt;"));
        assert!(!svg.contains("NaN"));
        assert_eq!(svg.matches("<path").count(), 4);
    }

    #[test]
    fn tick_values_are_round() {
        assert_eq!(ticks(0.0, 1.0), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        assert_eq!(fmt_tick(0.6000000000000001), "0.6");
    }
}
