use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use super::EmbedError;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const PLOT: (f64, f64, f64, f64) = (40.0, 40.0, 440.0, 400.0);

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Standalone SVG scatter: one circle per point, coloured by label, with a
/// legend listing labels in sorted order. `description` goes into `<desc>`.
pub fn scatter_svg(
    coords: &[(f64, f64)],
    labels: &[String],
    title: &str,
    description: &str,
) -> Result<String, EmbedError> {
    if coords.len() != labels.len() {
        return Err(EmbedError::LengthMismatch);
    }
    if coords.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(EmbedError::NonFinite);
    }
    let legend: BTreeMap<&str, &str> = labels
        .iter()
        .map(String::as_str)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, PALETTE[i % PALETTE.len()]))
        .collect();

    let (px, py, pw, ph) = PLOT;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in coords {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let span = |a: f64, b: f64| if b - a > 0.0 { b - a } else { 1.0 };
    let (sx, sy) = (span(x0, x1), span(y0, y1));

    let mut s = String::new();
    writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(s, "<title>{}</title>", escape(title)).unwrap();
    writeln!(s, "<desc>{}</desc>", escape(description)).unwrap();
    writeln!(
        s,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<rect x="{px}" y="{py}" width="{pw}" height="{ph}" fill="none" stroke="black" stroke-width="1"/>"#
    )
    .unwrap();
    writeln!(s, r#"<g id="points">"#).unwrap();
    for (&(x, y), label) in coords.iter().zip(labels) {
        let cx = px + 10.0 + (x - x0) / sx * (pw - 20.0);
        let cy = py + ph - 10.0 - (y - y0) / sy * (ph - 20.0);
        writeln!(
            s,
            r#"<circle class="marker" cx="{cx:.3}" cy="{cy:.3}" r="4" fill="{}" fill-opacity="0.8"><title>{}</title></circle>"#,
            legend[label.as_str()],
            escape(label)
        )
        .unwrap();
    }
    writeln!(s, "</g>").unwrap();
    writeln!(s, r#"<g id="legend">"#).unwrap();
    for (i, (label, colour)) in legend.iter().enumerate() {
        let y = py + 10.0 + i as f64 * 18.0;
        writeln!(
            s,
            r#"<g class="legend-entry"><rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{colour}"/><text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12">{}</text></g>"#,
            px + pw + 15.0,
            y,
            px + pw + 30.0,
            y + 9.0,
            escape(label)
        )
        .unwrap();
    }
    writeln!(s, "</g>").unwrap();
    writeln!(s, "</svg>").unwrap();
    Ok(s)
}

pub fn render_scatter_svg(
    coords: &[(f64, f64)],
    labels: &[String],
    title: &str,
    description: &str,
    out_path: &Path,
) -> Result<(), EmbedError> {
    let svg = scatter_svg(coords, labels, title, description)?;
    std::fs::write(out_path, svg).map_err(|e| EmbedError::io(out_path, e))
}
