//! SVG figures of a run: particle frames, probe bundles and pressure arrows.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{GeneralizedFlow, PressureSample};
use crate::domain::Domain;
use crate::error::Result;
use crate::geom2d::Vec2;
use crate::run::{load_clusters, load_flow, load_pressure, ProbeDisk};

pub const FRAMES_DIR: &str = "frames";
pub const RENDER_REPORT_FILE: &str = "render.json";

/// Cluster colors, cycled when there are more than twelve clusters.
pub const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#393b79", "#ad494a",
];

const SIZE: f64 = 640.0;
const LEGEND_WIDTH: f64 = 150.0;

/// `h` in degrees, `s` and `v` in `[0, 1]`.
pub fn hsv_to_hex(h: f64, s: f64, v: f64) -> String {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let byte = |u: f64| ((u + m).clamp(0.0, 1.0) * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", byte(r), byte(g), byte(b))
}

/// Hue from the angle of the initial position, saturation from its radius.
pub fn position_colors(flow: &GeneralizedFlow, domain: &Domain) -> Vec<String> {
    let reach = domain.polygon.vertices().iter().map(|v| v.norm()).fold(0.0, f64::max);
    flow.trajectories
        .iter()
        .map(|tr| {
            let p = tr.nodes[0];
            hsv_to_hex(p.y.atan2(p.x).to_degrees(), (p.norm() / reach).min(1.0), 0.92)
        })
        .collect()
}

pub fn cluster_colors(assignment: &[usize]) -> Vec<String> {
    assignment.iter().map(|&c| PALETTE[c % PALETTE.len()].to_string()).collect()
}

/// Maps domain coordinates to pixels, `y` pointing up.
struct View {
    lo: Vec2,
    scale: f64,
}

impl View {
    fn new(domain: &Domain) -> Self {
        let vs = domain.polygon.vertices();
        let lo = vs.iter().fold(Vec2::new(f64::INFINITY, f64::INFINITY), |a, v| Vec2::new(a.x.min(v.x), a.y.min(v.y)));
        let hi = vs.iter().fold(Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY), |a, v| Vec2::new(a.x.max(v.x), a.y.max(v.y)));
        let extent = (hi.x - lo.x).max(hi.y - lo.y);
        let margin = 0.05 * extent;
        Self { lo: lo - Vec2::new(margin, margin), scale: SIZE / (extent + 2.0 * margin) }
    }

    fn px(&self, p: Vec2) -> (f64, f64) {
        ((p.x - self.lo.x) * self.scale, SIZE - (p.y - self.lo.y) * self.scale)
    }
}

fn open_svg(out: &mut String, width: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{SIZE}" viewBox="0 0 {width} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="{width}" height="{SIZE}" fill="white"/>"#);
}

fn outline(out: &mut String, view: &View, domain: &Domain) {
    let pts: Vec<String> = domain
        .polygon
        .vertices()
        .iter()
        .map(|&v| {
            let (x, y) = view.px(v);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(out, r##"<polygon points="{}" fill="#f7f7f7" stroke="#333" stroke-width="1"/>"##, pts.join(" "));
}

fn legend(out: &mut String, k: usize) {
    let _ = writeln!(out, r#"<g class="legend" font-family="sans-serif" font-size="13">"#);
    for c in 0..k {
        let y = 24.0 + 20.0 * c as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{:.0}" y="{:.0}" width="14" height="14" fill="{}"/><text x="{:.0}" y="{:.0}">cluster {c}</text>"#,
            SIZE + 16.0,
            y - 11.0,
            PALETTE[c % PALETTE.len()],
            SIZE + 38.0,
            y
        );
    }
    let _ = writeln!(out, "</g>");
}

/// Particle positions at node `i`.
pub fn frame_svg(flow: &GeneralizedFlow, i: usize, domain: &Domain, colors: &[String], clusters: Option<usize>) -> String {
    let view = View::new(domain);
    let mut out = String::new();
    open_svg(&mut out, if clusters.is_some() { SIZE + LEGEND_WIDTH } else { SIZE });
    outline(&mut out, &view, domain);
    let r = (300.0 / (flow.len() as f64).sqrt()).clamp(1.0, 6.0);
    for (tr, color) in flow.trajectories.iter().zip(colors) {
        let (x, y) = view.px(tr.nodes[i]);
        let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="{color}"/>"#);
    }
    let _ = writeln!(
        out,
        r#"<text x="10" y="20" font-family="sans-serif" font-size="14">t = {:.4}</text>"#,
        i as f64 / flow.t as f64
    );
    if let Some(k) = clusters {
        legend(&mut out, k);
    }
    out.push_str("</svg>\n");
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub center: [f64; 2],
    pub radius: f64,
    pub paths: usize,
    pub bbox_area: f64,
    /// `bbox_area` divided by the domain area.
    pub domain_fraction: f64,
    pub file: String,
}

/// Every trajectory starting in the probe disk, drawn as a polyline.
pub fn probe_svg(flow: &GeneralizedFlow, probe: &ProbeDisk, domain: &Domain, colors: &[String]) -> (String, Vec<usize>) {
    let view = View::new(domain);
    let center = Vec2::new(probe.center[0], probe.center[1]);
    let selected = flow.starting_in_disk(center, probe.radius);
    let mut out = String::new();
    open_svg(&mut out, SIZE);
    outline(&mut out, &view, domain);
    for &j in &selected {
        let pts: Vec<String> = flow.trajectories[j]
            .nodes
            .iter()
            .map(|&p| {
                let (x, y) = view.px(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.2"/>"#, pts.join(" "), colors[j]);
    }
    let (cx, cy) = view.px(center);
    let _ = writeln!(
        out,
        r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{:.2}" fill="none" stroke="black" stroke-width="1.5"/>"#,
        probe.radius * view.scale
    );
    let _ = writeln!(
        out,
        r#"<text x="10" y="20" font-family="sans-serif" font-size="14">{} paths from the disk of radius {} at ({}, {})</text>"#,
        selected.len(),
        probe.radius,
        probe.center[0],
        probe.center[1]
    );
    out.push_str("</svg>\n");
    (out, selected)
}

const PRESSURE_BINS: usize = 20;

/// Pressure-gradient samples averaged over a grid of bins, drawn as arrows.
pub fn pressure_svg(samples: &[PressureSample], domain: &Domain) -> String {
    let view = View::new(domain);
    let mut sums = vec![(Vec2::ZERO, Vec2::ZERO, 0usize); PRESSURE_BINS * PRESSURE_BINS];
    let cell = SIZE / PRESSURE_BINS as f64;
    for s in samples {
        let (x, y) = view.px(s.position);
        let bx = ((x / cell) as usize).min(PRESSURE_BINS - 1);
        let by = ((y / cell) as usize).min(PRESSURE_BINS - 1);
        let e = &mut sums[by * PRESSURE_BINS + bx];
        e.0 += s.position;
        e.1 += s.grad_p;
        e.2 += 1;
    }
    let arrows: Vec<(Vec2, Vec2)> =
        sums.iter().filter(|e| e.2 > 0).map(|e| (e.0 / e.2 as f64, e.1 / e.2 as f64)).collect();
    let longest = arrows.iter().map(|a| a.1.norm()).fold(0.0, f64::max);
    let unit = if longest > 0.0 { 0.9 * cell / longest } else { 0.0 };
    let mut out = String::new();
    open_svg(&mut out, SIZE);
    outline(&mut out, &view, domain);
    for (p, g) in arrows {
        let (x0, y0) = view.px(p);
        let (dx, dy) = (g.x * unit, -g.y * unit);
        let (x1, y1) = (x0 + dx, y0 + dy);
        let _ = writeln!(out, r##"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y1:.2}" stroke="#b2182b" stroke-width="1.3"/>"##);
        let len = (dx * dx + dy * dy).sqrt();
        if len > 1e-9 {
            let (ux, uy) = (dx / len, dy / len);
            let h = (0.3 * len).min(6.0);
            let (lx, ly) = (x1 - h * ux + 0.5 * h * uy, y1 - h * uy - 0.5 * h * ux);
            let (rx, ry) = (x1 - h * ux - 0.5 * h * uy, y1 - h * uy + 0.5 * h * ux);
            let _ = writeln!(out, r##"<polygon points="{x1:.2},{y1:.2} {lx:.2},{ly:.2} {rx:.2},{ry:.2}" fill="#b2182b"/>"##);
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="10" y="20" font-family="sans-serif" font-size="14">binned pressure gradient, longest arrow {longest:.4}</text>"#
    );
    out.push_str("</svg>\n");
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderReport {
    pub frames: Vec<String>,
    pub colored_by: String,
    pub legend_entries: usize,
    pub probes: Vec<ProbeReport>,
    pub pressure: Option<String>,
}

pub fn frame_name(i: usize, t: usize) -> String {
    let width = t.to_string().len().max(2);
    format!("frame_{i:0width$}.svg")
}

/// Renders a run directory. Frames are drawn when `frames` is set; probe
/// figures follow the probe disks of the run configuration, and the pressure
/// figure is drawn when pressure samples exist.
pub fn render_dir(dir: &Path, frames: bool) -> Result<RenderReport> {
    let (config, flow) = load_flow(dir)?;
    let domain = config.domain()?;
    let clusters = load_clusters(dir)?;
    let by_position = position_colors(&flow, &domain);
    let (colors, colored_by, legend_entries) = match &clusters {
        Some(c) => (cluster_colors(&c.result.assignment), "cluster".to_string(), c.k),
        None => (by_position.clone(), "initial_position".to_string(), 0),
    };

    let mut report = RenderReport { frames: Vec::new(), colored_by, legend_entries, probes: Vec::new(), pressure: None };
    if frames {
        let frames_dir: PathBuf = dir.join(FRAMES_DIR);
        fs::create_dir_all(&frames_dir)?;
        for i in 0..=flow.t {
            let name = frame_name(i, flow.t);
            let svg = frame_svg(&flow, i, &domain, &colors, clusters.as_ref().map(|c| c.k));
            fs::write(frames_dir.join(&name), svg)?;
            report.frames.push(format!("{FRAMES_DIR}/{name}"));
        }
    }
    for (k, probe) in config.render.trajectories.iter().enumerate() {
        let (svg, selected) = probe_svg(&flow, probe, &domain, &by_position);
        let file = format!("probe_{k:02}.svg");
        fs::write(dir.join(&file), svg)?;
        let bbox_area = flow.bundle_bbox_area(&selected);
        report.probes.push(ProbeReport {
            center: probe.center,
            radius: probe.radius,
            paths: selected.len(),
            bbox_area,
            domain_fraction: bbox_area / domain.total_area,
            file,
        });
    }
    if let Some(p) = load_pressure(dir)? {
        let file = "pressure.svg".to_string();
        fs::write(dir.join(&file), pressure_svg(&p.samples, &domain))?;
        report.pressure = Some(file);
    }
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(dir.join(RENDER_REPORT_FILE), text)?;
    Ok(report)
}
