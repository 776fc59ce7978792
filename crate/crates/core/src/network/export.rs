use std::fmt::Write as _;
use std::str::FromStr;

use serde_json::json;

use super::NetworkGraph;
use crate::error::{Error, Result};

/// Node colours by cluster: clusters 1-4 are yellow, blue, cyan, green; later
/// clusters continue through the rest and then wrap around.
pub const PALETTE: [&str; 10] = [
    "yellow", "blue", "cyan", "green", "red", "magenta", "orange", "purple", "brown", "gray",
];

pub const GRAPH_FORMAT: &str = "mixclust.graph";
pub const GRAPH_VERSION: u32 = 1;

const SVG_SIZE: f64 = 600.0;
const SVG_MARGIN: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Dot,
    Svg,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Json => "json",
            ExportFormat::Dot => "dot",
            ExportFormat::Svg => "svg",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "dot" => Ok(ExportFormat::Dot),
            "svg" => Ok(ExportFormat::Svg),
            other => Err(Error::Config(format!(
                "unknown graph format `{other}` (expected json, dot or svg)"
            ))),
        }
    }
}

fn color(label: usize) -> &'static str {
    PALETTE[label % PALETTE.len()]
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders `g` in the requested format.
pub fn export_graph(g: &NetworkGraph, format: ExportFormat) -> Result<String> {
    match format {
        ExportFormat::Json => Ok(to_json(g)),
        ExportFormat::Dot => Ok(to_dot(g)),
        ExportFormat::Svg => to_svg(g),
    }
}

fn to_json(g: &NetworkGraph) -> String {
    let doc = json!({
        "format": GRAPH_FORMAT,
        "version": GRAPH_VERSION,
        "threshold": g.threshold,
        "min_shared_features": g.min_shared_features,
        "nodes": g.nodes.iter().map(|n| json!({
            "id": n.id,
            "label": n.label,
            "x": n.x,
            "y": n.y,
        })).collect::<Vec<_>>(),
        "edges": g.edges.iter().map(|&(i, j)| json!([i, j])).collect::<Vec<_>>(),
        "isolated_count": g.isolated.len(),
        "isolated": g.isolated,
        "no_shared_feature_pairs": g.no_shared_feature_pairs,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("graph JSON serializes");
    s.push('\n');
    s
}

fn to_dot(g: &NetworkGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "graph network {{");
    let _ = writeln!(out, "  node [shape=circle, style=filled];");
    for n in &g.nodes {
        let pos = match (n.x, n.y) {
            (Some(x), Some(y)) => format!(", pos=\"{x},{y}!\""),
            _ => String::new(),
        };
        let _ = writeln!(
            out,
            "  \"{}\" [fillcolor=\"{}\", cluster=\"{}\"{pos}];",
            dot_escape(&n.id),
            color(n.label),
            n.label + 1
        );
    }
    for &(i, j) in &g.edges {
        let _ = writeln!(
            out,
            "  \"{}\" -- \"{}\";",
            dot_escape(&g.nodes[i].id),
            dot_escape(&g.nodes[j].id)
        );
    }
    out.push_str("}\n");
    out
}

fn to_svg(g: &NetworkGraph) -> Result<String> {
    if !g.nodes.is_empty() && !g.has_layout() {
        return Err(Error::Config("SVG export needs layout coordinates".into()));
    }
    let scale = SVG_SIZE - 2.0 * SVG_MARGIN;
    let at = |i: usize| {
        let n = &g.nodes[i];
        (
            SVG_MARGIN + n.x.unwrap_or(0.5) * scale,
            SVG_MARGIN + (1.0 - n.y.unwrap_or(0.5)) * scale,
        )
    };
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SVG_SIZE}" height="{SVG_SIZE}" viewBox="0 0 {SVG_SIZE} {SVG_SIZE}">"#
    );
    let _ = writeln!(out, r#"  <rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r##"  <g stroke="#999999" stroke-width="1">"##);
    for &(i, j) in &g.edges {
        let (x1, y1) = at(i);
        let (x2, y2) = at(j);
        let _ = writeln!(
            out,
            r#"    <line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}"/>"#
        );
    }
    let _ = writeln!(out, "  </g>");
    let _ = writeln!(out, r#"  <g stroke="black" stroke-width="0.5">"#);
    for (i, n) in g.nodes.iter().enumerate() {
        let (x, y) = at(i);
        let _ = writeln!(
            out,
            r#"    <circle cx="{x:.2}" cy="{y:.2}" r="5" fill="{}"><title>{} (cluster {})</title></circle>"#,
            color(n.label),
            xml_escape(&n.id),
            n.label + 1
        );
    }
    let _ = writeln!(out, "  </g>");
    out.push_str("</svg>\n");
    Ok(out)
}
