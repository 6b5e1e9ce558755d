//! Log-log scatter plots of sweep results as standalone SVG.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serrin_core::experiments::{Fit, SweepResult};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;

#[derive(Clone, Debug, PartialEq)]
pub enum PlotOutcome {
    Written,
    Skipped(String),
}

/// A point to plot and whether it belongs to the fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlotPoint {
    pub x: f64,
    pub y: f64,
    pub in_fit: bool,
}

/// Decade range covering `values` (all positive).
fn decades(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.log10()), hi.max(v.log10())));
    let (lo, hi) = (lo.floor(), hi.ceil());
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    }
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x.log10() - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y.log10() - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

/// Renders the plot, or `None` when fewer than two points are positive.
pub fn render_svg(points: &[PlotPoint], fit: Option<&Fit>, x_label: &str, y_label: &str, title: &str) -> Option<String> {
    let shown: Vec<PlotPoint> =
        points.iter().copied().filter(|p| p.x > 0.0 && p.y > 0.0 && p.x.is_finite() && p.y.is_finite()).collect();
    if shown.len() < 2 {
        return None;
    }
    let frame = Frame { x: decades(shown.iter().map(|p| p.x)), y: decades(shown.iter().map(|p| p.y)) };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));

    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(s, r#"<rect x="{x0}" y="{y0}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
    for k in frame.x.0 as i32..=frame.x.1 as i32 {
        let px = frame.px(10f64.powi(k));
        let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{y1}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, y1 + 5.0);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">1e{k}</text>"#, y1 + 20.0);
    }
    for k in frame.y.0 as i32..=frame.y.1 as i32 {
        let py = frame.py(10f64.powi(k));
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{k}</text>"#, x0 - 8.0, py + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, HEIGHT - 12.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );

    for p in &shown {
        let fill = if p.in_fit { "steelblue" } else { "none" };
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{fill}" stroke="steelblue"/>"#,
            frame.px(p.x),
            frame.py(p.y)
        );
    }
    if let Some(fit) = fit {
        let fitted: Vec<f64> = shown.iter().filter(|p| p.in_fit).map(|p| p.x).collect();
        let xs = if fitted.len() >= 2 { fitted } else { shown.iter().map(|p| p.x).collect() };
        let (a, b) = xs.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        let _ = writeln!(
            s,
            r#"<line class="fit" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="firebrick" stroke-width="1.5"/>"#,
            frame.px(a),
            frame.py(fit.predict(a)),
            frame.px(b),
            frame.py(fit.predict(b))
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">slope={:.2}</text>"#, x0 + 12.0, y0 + 20.0, fit.slope);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">R²={:.4}</text>"#, x0 + 12.0, y0 + 36.0, fit.r_squared);
    }
    s.push_str("</svg>\n");
    Some(s)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes the sweep's log-log plot to `path`, or skips it when there is
/// nothing to draw.
pub fn emit_plot(sweep: &SweepResult, path: &Path) -> io::Result<PlotOutcome> {
    let (x, y) = sweep.kind.axes();
    let points: Vec<PlotPoint> = sweep
        .points()
        .into_iter()
        .zip(&sweep.rows)
        .map(|((x, y), row)| PlotPoint { x, y, in_fit: row.in_fit })
        .collect();
    let title = format!("{} ({})", serde_json::to_value(sweep.kind).unwrap().as_str().unwrap_or(""), sweep.status.describe());
    match render_svg(&points, sweep.fit.as_ref(), x, y, &title) {
        Some(svg) => {
            std::fs::write(path, svg)?;
            Ok(PlotOutcome::Written)
        }
        None => Ok(PlotOutcome::Skipped("fewer than two positive points to plot".into())),
    }
}
