//! Self-contained SVG rendering of convergence plots.
//!
//! One plot kind: log2-log2 axes, a polyline with point markers per labeled
//! series, and dashed reference lines of slope 0.5 and 1 anchored at the
//! first series' coarsest point. Coordinates are rounded to a fixed two
//! decimals so the output is byte-stable.

use std::fmt::Write as _;

use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 540.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 42.0;
const MARGIN_B: f64 = 54.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// A labeled curve of positive `(h, error)` points.
#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, lx: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(1e-12);
        MARGIN_L + (lx - self.x_min) / span * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn y(&self, ly: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(1e-12);
        HEIGHT - MARGIN_B - (ly - self.y_min) / span * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn px(v: f64) -> String {
    format!("{v:.2}")
}

/// Render the error plot. Every point must have positive coordinates (they
/// are plotted in log2); series render in the given order with a fixed
/// palette, cycling past six.
pub fn error_plot(title: &str, series: &[Series]) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::EmptySamples("plot needs at least one point".into()));
    }
    let mut logs: Vec<Vec<(f64, f64)>> = Vec::with_capacity(series.len());
    for s in series {
        let mut curve = Vec::with_capacity(s.points.len());
        for &(h, e) in &s.points {
            if !(h > 0.0 && e > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "log-log plot needs positive values, got ({h}, {e}) in '{}'",
                    s.label
                )));
            }
            curve.push((h.log2(), e.log2()));
        }
        curve.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        logs.push(curve);
    }

    let all = logs.iter().flatten();
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for &(x, y) in all {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    // anchor the reference slopes before padding so they track the data
    let anchor = *logs[0].last().expect("non-empty checked above");
    for slope in [0.5, 1.0] {
        y_min = y_min.min(anchor.1 + slope * (x_min - anchor.0));
    }
    let pad_x = 0.05 * (x_max - x_min).max(1.0);
    let pad_y = 0.05 * (y_max - y_min).max(1.0);
    let frame = Frame {
        x_min: x_min - pad_x,
        x_max: x_max + pad_x,
        y_min: y_min - pad_y,
        y_max: y_max + pad_y,
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" font-family="monospace" font-size="15" text-anchor="middle">{}</text>"#,
        px(0.5 * WIDTH),
        title
    );

    // integer log2 grid and tick labels
    let x0 = frame.x_min.ceil() as i64;
    let x1 = frame.x_max.floor() as i64;
    for k in x0..=x1 {
        let x = frame.x(k as f64);
        let _ = writeln!(
            out,
            r##"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#dddddd" stroke-width="1"/>"##,
            px(x),
            px(MARGIN_T),
            px(HEIGHT - MARGIN_B)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="monospace" font-size="12" text-anchor="middle">2^{k}</text>"#,
            px(x),
            px(HEIGHT - MARGIN_B + 18.0)
        );
    }
    let y0 = frame.y_min.ceil() as i64;
    let y1 = frame.y_max.floor() as i64;
    for k in y0..=y1 {
        let y = frame.y(k as f64);
        let _ = writeln!(
            out,
            r##"<line x1="{0}" y1="{2}" x2="{1}" y2="{2}" stroke="#dddddd" stroke-width="1"/>"##,
            px(MARGIN_L),
            px(WIDTH - MARGIN_R),
            px(y)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="monospace" font-size="12" text-anchor="end">2^{k}</text>"#,
            px(MARGIN_L - 8.0),
            px(y + 4.0)
        );
    }
    let _ = writeln!(
        out,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black" stroke-width="1"/>"#,
        px(MARGIN_L),
        px(MARGIN_T),
        px(WIDTH - MARGIN_L - MARGIN_R),
        px(HEIGHT - MARGIN_T - MARGIN_B)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="monospace" font-size="13" text-anchor="middle">step size h</text>"#,
        px(MARGIN_L + 0.5 * (WIDTH - MARGIN_L - MARGIN_R)),
        px(HEIGHT - 12.0)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{}" font-family="monospace" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">weak error</text>"#,
        px(0.5 * HEIGHT),
        px(0.5 * HEIGHT)
    );

    // dashed reference slopes through the coarsest point of the first series
    for (slope, dash) in [(0.5, "6 4"), (1.0, "2 4")] {
        let y_at = |x: f64| anchor.1 + slope * (x - anchor.0);
        let _ = writeln!(
            out,
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#888888" stroke-width="1" stroke-dasharray="{dash}"/>"##,
            px(frame.x(x_min)),
            px(frame.y(y_at(x_min))),
            px(frame.x(anchor.0)),
            px(frame.y(anchor.1))
        );
        let _ = writeln!(
            out,
            r##"<text x="{}" y="{}" font-family="monospace" font-size="11" fill="#888888">slope {slope}</text>"##,
            px(frame.x(x_min) + 4.0),
            px(frame.y(y_at(x_min)) - 4.0)
        );
    }

    for (i, (s, curve)) in series.iter().zip(&logs).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = curve
            .iter()
            .map(|&(x, y)| format!("{},{}", px(frame.x(x)), px(frame.y(y))))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        for &(x, y) in curve {
            let _ = writeln!(
                out,
                r#"<circle cx="{}" cy="{}" r="3" fill="{color}"/>"#,
                px(frame.x(x)),
                px(frame.y(y))
            );
        }
        let ly = MARGIN_T + 16.0 + 18.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="{color}" stroke-width="1.5"/>"#,
            px(WIDTH - MARGIN_R + 10.0),
            px(ly - 4.0),
            px(WIDTH - MARGIN_R + 34.0)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="monospace" font-size="12">{}</text>"#,
            px(WIDTH - MARGIN_R + 40.0),
            px(ly),
            s.label
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
