//! Standalone SVG line plots, one channel per file.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::record::{RunRecord, System};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
/// Polylines are thinned to at most this many points.
const MAX_POINTS: usize = 2000;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series<'a> {
    pub label: String,
    pub t: &'a [f64],
    pub y: &'a [f64],
    pub dashed: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()).max(1e-300) {
        let pad = if lo == 0.0 { 1.0 } else { 0.5 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

pub fn render_svg(title: &str, x_label: &str, series: &[Series]) -> String {
    let (t0, t1) = bounds(series.iter().flat_map(|s| s.t.iter()));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.y.iter()));
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |t: f64| MARGIN_LEFT + (t - t0) / (t1 - t0) * plot_w;
    let sy = |y: f64| MARGIN_TOP + (y1 - y) / (y1 - y0) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>"##
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (tv, yv) = (t0 + f * (t1 - t0), y0 + f * (y1 - y0));
        let (x, y) = (sx(tv), sy(yv));
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{MARGIN_TOP}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{tv:.3}</text>"##,
            MARGIN_TOP + plot_h,
            MARGIN_TOP + plot_h + 16.0
        );
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.3e}</text>"##,
            MARGIN_LEFT + plot_w,
            MARGIN_LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );

    for (k, ser) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let n = ser.t.len().min(ser.y.len());
        let stride = n.div_ceil(MAX_POINTS).max(1);
        let mut points = String::new();
        let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
        if n > 0 && idx.last() != Some(&(n - 1)) {
            idx.push(n - 1);
        }
        for i in idx {
            if ser.y[i].is_finite() {
                let _ = write!(points, "{:.2},{:.2} ", sx(ser.t[i]), sy(ser.y[i]));
            }
        }
        let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5"{dash} points="{}"/>"#,
            points.trim_end()
        );
        let ly = MARGIN_TOP + 16.0 + 16.0 * k as f64;
        let lx = MARGIN_LEFT + plot_w - 150.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{colour}" stroke-width="2"{dash}/><text x="{:.2}" y="{ly:.2}">{}</text>"#,
            ly - 4.0,
            lx + 20.0,
            ly - 4.0,
            lx + 26.0,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_svg(path: &Path, title: &str, series: &[Series]) -> Result<()> {
    std::fs::write(path, render_svg(title, "t (s)", series)).map_err(|e| Error::io(path, e))
}

/// Readable symbol of a recorded channel, e.g. `err_lambda1` → `λ1 − λ̂1`.
pub fn channel_title(col: &str) -> String {
    let symbol = |base: &str| -> String {
        let (stem, idx) = base.split_at(base.trim_end_matches(|c: char| c.is_ascii_digit()).len());
        let greek = match stem {
            "lambda" => "λ",
            "theta" => "θ",
            "eta" => "η",
            "psi" => "ψ",
            "Delta" => "Δ",
            other => other,
        };
        format!("{greek}{idx}")
    };
    let hat = |base: &str| -> String {
        let s = symbol(base);
        let mut chars = s.chars();
        let first = chars.next().unwrap_or(' ');
        format!("{first}\u{302}{}", chars.as_str())
    };
    if let Some(base) = col.strip_prefix("err_") {
        return format!("Transients for {}(t) − {}(t)", symbol(base), hat(base));
    }
    if let Some(base) = col.strip_prefix("hat_") {
        return format!("Estimate {}(t)", hat(base));
    }
    if let Some(base) = col.strip_prefix("track_") {
        return format!("Tracking error {0}(t) − {0}*(t)", symbol(base));
    }
    if let Some(rest) = col.strip_prefix("intDelta2") {
        return format!("∫Δ{}² dt", rest.trim_start_matches('_'));
    }
    format!("{}(t)", symbol(col))
}

/// Channels plotted for a run; a companion column is drawn dashed on the same axes.
pub fn plotted_channels(system: System) -> Vec<(&'static str, Option<&'static str>)> {
    match system {
        System::TwoDof => vec![
            ("Y", Some("ref_Y")),
            ("X", Some("ref_X")),
            ("err_lambda1", None),
            ("err_lambda2", None),
            ("err_lambda3", None),
            ("err_lambda4", None),
            ("err_theta1", None),
            ("err_theta2", None),
            ("err_theta3", None),
            ("err_theta4", None),
            ("err_vY", None),
            ("err_vX", None),
            ("err_Y", None),
            ("err_X", None),
            ("Delta1", None),
            ("Delta2", None),
            ("intDelta2_1", None),
            ("intDelta2_2", None),
        ],
        System::OneDof => vec![
            ("Y", Some("ref_Y")),
            ("err_lambda", None),
            ("err_eta", None),
            ("err_vY", None),
            ("err_Y", None),
            ("track_Y", None),
            ("Delta", None),
            ("intDelta2", None),
        ],
    }
}

/// One SVG per plotted channel of a single run.
pub fn emit_plots(rec: &RunRecord, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let t = rec.time();
    for (col, companion) in plotted_channels(rec.system) {
        let mut series = vec![Series {
            label: col.to_string(),
            t,
            y: rec.col(col),
            dashed: false,
        }];
        if let Some(c) = companion {
            series.push(Series {
                label: c.to_string(),
                t,
                y: rec.col(c),
                dashed: true,
            });
        }
        write_svg(&dir.join(format!("{col}.svg")), &channel_title(col), &series)?;
    }
    Ok(())
}

/// Same channel of several runs of one system overlaid on shared axes.
pub fn emit_overlays(records: &[&RunRecord], dir: &Path) -> Result<()> {
    let Some(first) = records.first() else {
        return Ok(());
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (col, _) in plotted_channels(first.system) {
        let series: Vec<_> = records
            .iter()
            .enumerate()
            .map(|(i, r)| Series {
                label: format!("{}. {}", i + 1, r.name),
                t: r.time(),
                y: r.col(col),
                dashed: false,
            })
            .collect();
        write_svg(&dir.join(format!("{col}.svg")), &channel_title(col), &series)?;
    }
    Ok(())
}
