//! Hand-rolled SVG scatter/line plots for run artifacts.
//!
//! No plotting dependency: the output is a few hundred bytes of markup,
//! byte-deterministic for a given input, and each plot embeds its own data
//! table in a comment so the numbers can be recovered from the artifact
//! without re-running anything.

use crate::error::{EmbedError, Result};

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Draw a connecting polyline in addition to the point markers.
    pub line: bool,
}

#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 64.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn axis_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 1e-3 && v.abs() < 1e4) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

/// Renders the plot as a complete SVG document.
pub fn render_plot(spec: &PlotSpec, series: &[Series]) -> Result<String> {
    if series.iter().all(|s| s.points.is_empty()) {
        return Err(EmbedError::EmptySet("plot series"));
    }
    for s in series {
        for &(x, y) in &s.points {
            if !x.is_finite() || !y.is_finite() {
                return Err(EmbedError::InvalidParameter(format!(
                    "non-finite point ({x}, {y}) in series {:?}",
                    s.label
                )));
            }
            if (spec.log_x && x <= 0.0) || (spec.log_y && y <= 0.0) {
                return Err(EmbedError::InvalidParameter(format!(
                    "log axis needs positive values, got ({x}, {y}) in series {:?}",
                    s.label
                )));
            }
        }
    }
    let tx = |x: f64| if spec.log_x { x.log10() } else { x };
    let ty = |y: f64| if spec.log_y { y.log10() } else { y };
    let (x_lo, x_hi) = axis_range(series.iter().flat_map(|s| s.points.iter().map(|p| tx(p.0))));
    let (y_lo, y_hi) = axis_range(series.iter().flat_map(|s| s.points.iter().map(|p| ty(p.1))));
    let px = |x: f64| MARGIN + (tx(x) - x_lo) / (x_hi - x_lo) * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - (ty(y) - y_lo) / (y_hi - y_lo) * (H - 2.0 * MARGIN);

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    out.push_str("<!-- data\nseries,x,y\n");
    for s in series {
        for &(x, y) in &s.points {
            out.push_str(&format!("{},{},{}\n", s.label, x, y));
        }
    }
    out.push_str("-->\n");
    out.push_str(&format!(
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"28\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        W / 2.0,
        escape(&spec.title)
    ));

    // Frame and ticks (5 per axis, in transformed coordinates).
    out.push_str(&format!(
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" \
         fill=\"none\" stroke=\"black\"/>\n",
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    ));
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x_lo + f * (x_hi - x_lo);
        let xp = MARGIN + f * (W - 2.0 * MARGIN);
        let xd = if spec.log_x { 10f64.powf(xv) } else { xv };
        out.push_str(&format!(
            "<line x1=\"{xp}\" y1=\"{}\" x2=\"{xp}\" y2=\"{}\" stroke=\"black\"/>\n",
            H - MARGIN,
            H - MARGIN + 5.0
        ));
        out.push_str(&format!(
            "<text x=\"{xp}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            H - MARGIN + 20.0,
            fmt_tick(xd)
        ));
        let yv = y_lo + f * (y_hi - y_lo);
        let yp = H - MARGIN - f * (H - 2.0 * MARGIN);
        let yd = if spec.log_y { 10f64.powf(yv) } else { yv };
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{yp}\" x2=\"{MARGIN}\" y2=\"{yp}\" stroke=\"black\"/>\n",
            MARGIN - 5.0
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            MARGIN - 8.0,
            yp + 4.0,
            fmt_tick(yd)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        W / 2.0,
        H - 16.0,
        escape(&spec.x_label)
    ));
    out.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        H / 2.0,
        H / 2.0,
        escape(&spec.y_label)
    ));

    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        if s.line && s.points.len() > 1 {
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            out.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                pts.join(" ")
            ));
        }
        for &(x, y) in &s.points {
            out.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                px(x),
                py(y)
            ));
        }
        // Legend entry.
        let ly = MARGIN + 16.0 + 16.0 * si as f64;
        out.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>\n",
            W - MARGIN - 150.0,
            ly - 4.0
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{}</text>\n",
            W - MARGIN - 142.0,
            ly,
            escape(&s.label)
        ));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
