//! Accuracy curves as standalone SVG.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{HarnessError, Result};
use crate::experiment::{read_summary_csv, write_atomic, SummaryRow};

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 24.0;
const BOTTOM: f64 = 52.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Mean accuracy per model against `t`, with a +/- one standard deviation band.
pub fn render_svg(rows: &[SummaryRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(HarnessError::Config("summary is empty".into()));
    }
    let mut models: Vec<&str> = Vec::new();
    for r in rows {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let t_lo = rows.iter().map(|r| r.t).min().unwrap_or(0) as f64;
    let t_hi = rows.iter().map(|r| r.t).max().unwrap_or(0) as f64;
    let (x0, x1) = if t_hi > t_lo { (t_lo, t_hi) } else { (t_lo - 1.0, t_hi + 1.0) };
    let lo = rows.iter().map(|r| r.mean - r.std).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.mean + r.std).fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.05).max(0.02);
    let (y0, y1) = ((lo - pad).max(0.0), (hi + pad).min(1.0));
    let (y0, y1) = if y1 > y0 { (y0, y1) } else { (0.0, 1.0) };

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |t: f64| LEFT + (t - x0) / (x1 - x0) * pw;
    let sy = |a: f64| TOP + (1.0 - (a.clamp(y0, y1) - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );

    let mut ts: Vec<usize> = rows.iter().map(|r| r.t).collect();
    ts.sort_unstable();
    ts.dedup();
    let every = ts.len().div_ceil(12).max(1);
    for t in ts.iter().step_by(every) {
        let x = sx(*t as f64);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{t}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0
        );
    }
    for k in 0..=5 {
        let a = y0 + (y1 - y0) * k as f64 / 5.0;
        let y = sy(a);
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{a:.3}</text>"##,
            LEFT,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">time point</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">test accuracy</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    for (i, m) in models.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts: Vec<&SummaryRow> = rows.iter().filter(|r| r.model == *m).collect();
        pts.sort_by_key(|r| r.t);
        let name = escape(m);
        let _ = writeln!(s, r#"<g class="curve" data-model="{name}">"#);
        if pts.len() > 1 {
            let upper = pts.iter().map(|r| format!("{:.2},{:.2}", sx(r.t as f64), sy(r.mean + r.std)));
            let lower = pts.iter().rev().map(|r| format!("{:.2},{:.2}", sx(r.t as f64), sy(r.mean - r.std)));
            let band: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                s,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
                band.join(" ")
            );
            let line: Vec<String> = pts.iter().map(|r| format!("{:.2},{:.2}", sx(r.t as f64), sy(r.mean))).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                line.join(" ")
            );
        }
        for r in &pts {
            let x = sx(r.t as f64);
            if r.std > 0.0 {
                let _ = writeln!(
                    s,
                    r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{color}" stroke-opacity="0.5"/>"#,
                    sy(r.mean - r.std),
                    sy(r.mean + r.std)
                );
            }
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sy(r.mean));
        }
        let ly = TOP + 14.0 + 20.0 * i as f64;
        let lx = LEFT + pw + 14.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{name}</text>"#,
            lx + 22.0,
            lx + 28.0,
            ly + 4.0
        );
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Renders `summary.csv` to an SVG file.
pub fn emit_plot(summary_path: &Path, out_path: &Path) -> Result<()> {
    let rows = read_summary_csv(summary_path)?;
    write_atomic(out_path, &render_svg(&rows)?)
}
