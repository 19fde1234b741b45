//! Hand-rolled, byte-deterministic SVG charts.
//!
//! Fixed canvas geometry, fixed axis ranges, a fixed palette, and `{:.2}`
//! coordinate formatting mean the same input always renders the same bytes —
//! report outputs can be golden-file tested.

use std::fmt::Write;

/// Per-series color palette (series order decides the color).
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 168.0; // room for the legend
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 56.0;

/// One named point series plus an optional least-squares line.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// (slope, intercept) in data coordinates, drawn across the x range.
    pub fit: Option<(f64, f64)>,
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        let span = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT).max(1.0);
        MARGIN_LEFT + (v - self.x_min) / (self.x_max - self.x_min) * span
    }

    fn y(&self, v: f64) -> f64 {
        let span = (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM).max(1.0);
        HEIGHT - MARGIN_BOTTOM - (v - self.y_min) / (self.y_max - self.y_min) * span
    }
}

fn open_svg(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"##
    );
    let _ = writeln!(out, r##"<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="24" font-family="monospace" font-size="15" fill="#111111">{}</text>"##,
        MARGIN_LEFT,
        escape(title)
    );
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Scatter chart with fixed axis ranges, per-series colors and optional fit
/// lines, axis ticks, and a legend.
pub fn scatter(
    title: &str,
    x_label: &str,
    y_label: &str,
    x_range: (f64, f64),
    y_range: (f64, f64),
    series: &[Series],
) -> String {
    let frame = Frame {
        x_min: x_range.0,
        x_max: x_range.1,
        y_min: y_range.0,
        y_max: y_range.1,
    };
    let mut out = String::new();
    open_svg(&mut out, title);

    // Axes with five ticks per side.
    let x0 = frame.x(frame.x_min);
    let x1 = frame.x(frame.x_max);
    let y0 = frame.y(frame.y_min);
    let y1 = frame.y(frame.y_max);
    let _ = writeln!(
        out,
        r##"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}" stroke="#333333" stroke-width="1"/>"##
    );
    let _ = writeln!(
        out,
        r##"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}" stroke="#333333" stroke-width="1"/>"##
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = frame.x_min + t * (frame.x_max - frame.x_min);
        let yv = frame.y_min + t * (frame.y_max - frame.y_min);
        let xp = frame.x(xv);
        let yp = frame.y(yv);
        let _ = writeln!(
            out,
            r##"<line x1="{xp:.2}" y1="{y0:.2}" x2="{xp:.2}" y2="{:.2}" stroke="#333333" stroke-width="1"/>"##,
            y0 + 5.0
        );
        let _ = writeln!(
            out,
            r##"<text x="{xp:.2}" y="{:.2}" font-family="monospace" font-size="11" fill="#111111" text-anchor="middle">{xv:.2}</text>"##,
            y0 + 18.0
        );
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{yp:.2}" x2="{x0:.2}" y2="{yp:.2}" stroke="#333333" stroke-width="1"/>"##,
            x0 - 5.0
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" font-family="monospace" font-size="11" fill="#111111" text-anchor="end">{yv:.2}</text>"##,
            x0 - 8.0,
            yp + 4.0
        );
    }
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" font-family="monospace" font-size="12" fill="#111111" text-anchor="middle">{}</text>"##,
        (x0 + x1) / 2.0,
        HEIGHT - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r##"<text x="18" y="{:.2}" font-family="monospace" font-size="12" fill="#111111" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"##,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );

    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        if let Some((slope, intercept)) = s.fit {
            let ya = slope * frame.x_min + intercept;
            let yb = slope * frame.x_max + intercept;
            let clamp = |v: f64| v.clamp(frame.y_min, frame.y_max);
            let _ = writeln!(
                out,
                r##"<line x1="{x0:.2}" y1="{:.2}" x2="{x1:.2}" y2="{:.2}" stroke="{color}" stroke-width="1" stroke-dasharray="4 3"/>"##,
                frame.y(clamp(ya)),
                frame.y(clamp(yb))
            );
        }
        for &(x, y) in &s.points {
            let _ = writeln!(
                out,
                r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}" fill-opacity="0.85"/>"##,
                frame.x(x),
                frame.y(y)
            );
        }
        // Legend entry.
        let lx = WIDTH - MARGIN_RIGHT + 16.0;
        let ly = MARGIN_TOP + 8.0 + si as f64 * 20.0;
        let _ = writeln!(
            out,
            r##"<rect x="{lx:.2}" y="{:.2}" width="10" height="10" fill="{color}"/>"##,
            ly - 9.0
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{ly:.2}" font-family="monospace" font-size="11" fill="#111111">{}</text>"##,
            lx + 16.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Square heatmap of a symmetric matrix with per-cell values printed.
/// Cell color interpolates white → deep blue over [0, 1].
pub fn heatmap(title: &str, labels: &[String], values: &[Vec<f64>]) -> String {
    let n = labels.len();
    let mut out = String::new();
    open_svg(&mut out, title);
    if n == 0 {
        out.push_str("</svg>\n");
        return out;
    }
    let grid = (WIDTH - MARGIN_LEFT - 24.0)
        .min(HEIGHT - MARGIN_TOP - 24.0)
        .max(1.0);
    let cell = grid / n as f64;
    let top = MARGIN_TOP;
    for (i, row) in values.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let x = MARGIN_LEFT + j as f64 * cell;
            let y = top + i as f64 * cell;
            let t = v.clamp(0.0, 1.0);
            let lerp = |a: f64, b: f64| a + (b - a) * t;
            let (r, g, b) = (lerp(255.0, 8.0), lerp(255.0, 81.0), lerp(255.0, 156.0));
            let _ = writeln!(
                out,
                r##"<rect x="{x:.2}" y="{y:.2}" width="{cell:.2}" height="{cell:.2}" fill="rgb({},{},{})" stroke="#cccccc" stroke-width="0.5"/>"##,
                r.round(),
                g.round(),
                b.round()
            );
            let text_fill = if t > 0.55 { "#ffffff" } else { "#111111" };
            let _ = writeln!(
                out,
                r##"<text x="{:.2}" y="{:.2}" font-family="monospace" font-size="11" fill="{text_fill}" text-anchor="middle">{v:.3}</text>"##,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    for (i, label) in labels.iter().enumerate() {
        let center = top + i as f64 * cell + cell / 2.0;
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" font-family="monospace" font-size="11" fill="#111111" text-anchor="end">{}</text>"##,
            MARGIN_LEFT - 6.0,
            center + 4.0,
            escape(label)
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" font-family="monospace" font-size="11" fill="#111111" text-anchor="middle">{}</text>"##,
            MARGIN_LEFT + i as f64 * cell + cell / 2.0,
            top + grid + 16.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}
