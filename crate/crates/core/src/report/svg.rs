//! Static SVG 1.1 renderings: line charts and the theory overlap graph.

use std::fmt::Write;

use super::OverlapGraph;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let mut b = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in series.iter().flat_map(|s| &s.points) {
        b = (b.0.min(x), b.1.max(x), b.2.min(y), b.3.max(y));
    }
    if !b.0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    if b.1 == b.0 {
        b.1 = b.0 + 1.0;
    }
    if b.3 == b.2 {
        b = (b.0, b.1, b.2 - 0.5, b.3 + 0.5);
    }
    b
}

/// Polyline chart with axes, min/max tick labels and a legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (x0, x1, y0, y1) = bounds(series);
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        out,
        r#"<g stroke="black" stroke-width="1"><line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}"/></g>
<g font-family="sans-serif" font-size="11">
<text x="{left}" y="{:.2}" text-anchor="middle">{}</text>
<text x="{right}" y="{:.2}" text-anchor="middle">{}</text>
<text x="{:.2}" y="{bottom}" text-anchor="end">{}</text>
<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>
<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>
<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>
</g>"#,
        bottom + 16.0,
        fmt_tick(x0),
        bottom + 16.0,
        fmt_tick(x1),
        left - 4.0,
        fmt_tick(y0),
        left - 4.0,
        top + 4.0,
        fmt_tick(y1),
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label),
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = if s.dashed {
            r#" stroke-dasharray="5,3""#
        } else {
            ""
        };
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            pts.join(" ")
        );
        let ly = top + 14.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{ly:.2}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            right - 120.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

/// Nodes on a circle with area proportional to tweet count; edge width
/// proportional to co-occurrence count.
pub fn overlap_chart(title: &str, graph: &OverlapGraph) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let n = graph.nodes.len();
    let max_node = graph
        .nodes
        .iter()
        .map(|n| n.count)
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let max_edge = graph
        .edges
        .iter()
        .map(|e| e.count)
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let (cx, cy, ring) = (WIDTH / 2.0, HEIGHT / 2.0 + 10.0, HEIGHT / 2.0 - 90.0);
    let pos: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let a =
                std::f64::consts::TAU * i as f64 / n.max(1) as f64 - std::f64::consts::FRAC_PI_2;
            (cx + ring * a.cos(), cy + ring * a.sin())
        })
        .collect();
    let index = |name: &str| graph.nodes.iter().position(|n| n.theory == name);
    for e in &graph.edges {
        let (Some(a), Some(b)) = (index(&e.theory_a), index(&e.theory_b)) else {
            continue;
        };
        if e.count == 0 {
            continue;
        }
        let w = 1.0 + 11.0 * e.count as f64 / max_edge;
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888888" stroke-width="{w:.2}"/>"##,
            pos[a].0, pos[a].1, pos[b].0, pos[b].1
        );
    }
    for (i, node) in graph.nodes.iter().enumerate() {
        let r = 8.0 + 40.0 * (node.count as f64 / max_node).sqrt();
        let (x, y) = pos[i];
        let _ = writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="{}" fill-opacity="0.8"/>
<text x="{x:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12">{} ({})</text>"#,
            PALETTE[i % PALETTE.len()],
            y + r + 14.0,
            escape(&node.theory),
            node.count
        );
    }
    out.push_str("</svg>\n");
    out
}
