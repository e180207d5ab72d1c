//! SVG rendering of a lead-wise explanation: one panel per lead with the
//! overlay drawn as a red heat band behind the signal trace.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::explain::gradcam::Explanation;
use crate::model::config::INPUT_LEADS;
use crate::tensor::Tensor3;

const WIDTH: f64 = 1200.0;
const PANEL_HEIGHT: f64 = 160.0;
const MARGIN_LEFT: f64 = 90.0;
const MARGIN_RIGHT: f64 = 20.0;
const HEADER: f64 = 30.0;
/// Number of heat-band cells per panel.
const HEAT_BINS: usize = 250;

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders record `x` (`[1, 3, L]`) and its explanation as an SVG document.
pub fn render_svg(
    x: &Tensor3<f32>,
    explanation: &Explanation,
    lead_names: &[String; INPUT_LEADS],
    title: &str,
) -> Result<String> {
    if x.batch() != 1 || x.channels() != INPUT_LEADS {
        return Err(Error::shape(format!("expected one 3-lead record, got {:?}", x.shape())));
    }
    let len = x.length();
    if explanation.maps.iter().any(|m| m.len() != len) {
        return Err(Error::shape("explanation maps do not match the record length"));
    }
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let height = HEADER + PANEL_HEIGHT * INPUT_LEADS as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN_LEFT}" y="20" font-family="sans-serif" font-size="14">{} (class {})</text>"#,
        escape(title),
        explanation.class_id
    );
    for lead in 0..INPUT_LEADS {
        let top = HEADER + PANEL_HEIGHT * lead as f64;
        let inner_top = top + 8.0;
        let inner_h = PANEL_HEIGHT - 16.0;
        let _ = writeln!(svg, r#"<g class="lead" data-lead="{lead}">"#);
        let _ = writeln!(
            svg,
            r#"<rect x="{MARGIN_LEFT}" y="{inner_top}" width="{plot_w}" height="{inner_h}" fill="none" stroke="gray"/>"#
        );
        let map = &explanation.maps[lead];
        let bins = HEAT_BINS.min(len).max(1);
        for bin in 0..bins {
            let (lo, hi) = (bin * len / bins, (bin + 1) * len / bins);
            if hi <= lo {
                continue;
            }
            let v = map[lo..hi].iter().map(|&m| m as f64).sum::<f64>() / (hi - lo) as f64;
            if v <= 0.0 {
                continue;
            }
            let x0 = MARGIN_LEFT + plot_w * lo as f64 / len as f64;
            let w = plot_w * (hi - lo) as f64 / len as f64;
            let _ = writeln!(
                svg,
                r#"<rect class="heat" x="{x0:.2}" y="{inner_top}" width="{w:.2}" height="{inner_h}" fill="red" fill-opacity="{v:.3}"/>"#
            );
        }
        let signal = x.lane(0, lead);
        let lo = signal.iter().copied().fold(f32::INFINITY, f32::min) as f64;
        let hi = signal.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut points = String::with_capacity(len * 14);
        for (t, &s) in signal.iter().enumerate() {
            let px = MARGIN_LEFT + plot_w * (t as f64 + 0.5) / len as f64;
            let py = inner_top + inner_h * (1.0 - (s as f64 - lo) / span);
            let _ = write!(points, "{px:.1},{py:.1} ");
        }
        let _ = writeln!(
            svg,
            r#"<polyline class="signal" fill="none" stroke="black" stroke-width="0.8" points="{}"/>"#,
            points.trim_end()
        );
        let _ = writeln!(
            svg,
            r#"<text x="8" y="{:.1}" font-family="sans-serif" font-size="13">{}</text>"#,
            inner_top + 18.0,
            escape(&lead_names[lead])
        );
        let _ = writeln!(
            svg,
            r#"<text class="alpha" x="8" y="{:.1}" font-family="sans-serif" font-size="12">α = {:.3}</text>"#,
            inner_top + 36.0,
            explanation.alpha[lead]
        );
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes [`render_svg`] output to `path`.
pub fn render_explanation(
    path: &Path,
    x: &Tensor3<f32>,
    explanation: &Explanation,
    lead_names: &[String; INPUT_LEADS],
    title: &str,
) -> Result<()> {
    let svg = render_svg(x, explanation, lead_names, title)?;
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}
