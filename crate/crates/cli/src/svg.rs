//! Minimal static SVG plots.

use std::fmt::Write as _;
use std::path::Path;

use tagprof_core::cluster::ReachabilityOrdering;
use tagprof_core::corpus::Factor;
use tagprof_core::stats::{GenreProfile, Projection};

use crate::error::{CliError, Result};

const W: f64 = 640.0;
const H: f64 = 400.0;
const M: f64 = 48.0;

struct Canvas {
    body: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        writeln!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
        )
        .unwrap();
        writeln!(body, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
        writeln!(body, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title)).unwrap();
        Canvas { body }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, style: &str) {
        writeln!(self.body, r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" {style}/>"#).unwrap();
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        writeln!(self.body, r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}">{}</text>"#, escape(s)).unwrap();
    }

    fn axes(&mut self) {
        self.line(M, H - M, W - M, H - M, r#"stroke="black""#);
        self.line(M, M, M, H - M, r#"stroke="black""#);
    }

    fn save(mut self, path: &Path) -> Result<()> {
        self.body.push_str("</svg>\n");
        std::fs::write(path, self.body).map_err(|e| CliError::io(path, e))
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Linear map of `[lo, hi]` onto `[a, b]`; a degenerate range maps to the middle.
fn scale(v: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi > lo {
        a + (v - lo) / (hi - lo) * (b - a)
    } else {
        (a + b) / 2.0
    }
}

/// Bar per item in processing order; undefined reachabilities are drawn
/// to the top of the frame. The dashed line marks the cut.
pub fn write_reachability(path: &Path, ord: &ReachabilityOrdering, cut: f64) -> Result<()> {
    let mut c = Canvas::new("Reachability profile");
    c.axes();
    let defined = ord.defined_reachabilities();
    let mut top = defined.iter().copied().fold(0.0, f64::max);
    if cut.is_finite() {
        top = top.max(cut);
    }
    let top = if top > 0.0 { top * 1.05 } else { 1.0 };
    let n = ord.entries.len().max(1) as f64;
    let bar = (W - 2.0 * M) / n;
    for (i, e) in ord.entries.iter().enumerate() {
        let r = e.reachability.unwrap_or(top).min(top);
        let y = scale(r, 0.0, top, H - M, M);
        let x = M + i as f64 * bar;
        let fill = if e.reachability.is_some() { "#4477aa" } else { "#bbbbbb" };
        writeln!(
            c.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
            bar.max(0.5),
            H - M - y
        )
        .unwrap();
    }
    if cut.is_finite() && cut <= top {
        let y = scale(cut, 0.0, top, H - M, M);
        c.line(M, y, W - M, y, r##"stroke="#cc3311" stroke-dasharray="4 3""##);
        c.text(W - M, y - 4.0, "end", &format!("eps = {cut:.4}"));
    }
    c.text(W / 2.0, H - 12.0, "middle", "processing order");
    c.text(M - 6.0, M, "end", &format!("{top:.3}"));
    c.text(M - 6.0, H - M, "end", "0");
    c.save(path)
}

const PALETTE: [&str; 8] = ["#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377", "#bbbbbb", "#000000"];

/// One polyline per genre over the five normalized trait scores.
pub fn write_profiles(path: &Path, profiles: &[GenreProfile]) -> Result<()> {
    let mut c = Canvas::new("Genre trait profiles (normalized)");
    c.axes();
    let values = profiles.iter().flat_map(|p| p.normalized.0);
    let (lo, hi) = values.fold((0.0f64, 0.0f64), |(l, h), v| (l.min(v), h.max(v)));
    let (lo, hi) = (lo - 0.1, hi + 0.1);
    let x_of = |j: usize| scale(j as f64, 0.0, 4.0, M + 30.0, W - M - 30.0);
    let zero = scale(0.0, lo, hi, H - M, M);
    c.line(M, zero, W - M, zero, r##"stroke="#999999""##);
    for (j, f) in Factor::ALL.iter().enumerate() {
        c.text(x_of(j), H - M + 16.0, "middle", f.name());
    }
    for (g, p) in profiles.iter().enumerate() {
        let color = PALETTE[g % PALETTE.len()];
        let pts: Vec<String> = p
            .normalized
            .0
            .iter()
            .enumerate()
            .map(|(j, v)| format!("{:.2},{:.2}", x_of(j), scale(*v, lo, hi, H - M, M)))
            .collect();
        writeln!(c.body, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" ")).unwrap();
        c.text(W - M + 4.0, M + 14.0 * g as f64, "start", &p.genre);
        writeln!(c.body, r#"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="{color}"/>"#, W - M - 8.0, M + 14.0 * g as f64 - 8.0).unwrap();
    }
    c.save(path)
}

/// Genres as points on the two leading components, traits as loading arrows.
pub fn write_projection(path: &Path, proj: &Projection) -> Result<()> {
    let mut c = Canvas::new(&format!(
        "Genre projection (PC1 {:.0}%, PC2 {:.0}%)",
        proj.explained[0] * 100.0,
        proj.explained[1] * 100.0
    ));
    let extent = proj
        .coordinates
        .iter()
        .chain(&proj.loadings)
        .flat_map(|p| [p[0].abs(), p[1].abs()])
        .fold(0.0, f64::max)
        .max(1e-9)
        * 1.15;
    let x = |v: f64| scale(v, -extent, extent, M, W - M);
    let y = |v: f64| scale(v, -extent, extent, H - M, M);
    c.line(x(-extent), y(0.0), x(extent), y(0.0), r##"stroke="#999999""##);
    c.line(x(0.0), y(-extent), x(0.0), y(extent), r##"stroke="#999999""##);
    for (f, l) in Factor::ALL.iter().zip(&proj.loadings) {
        c.line(x(0.0), y(0.0), x(l[0]), y(l[1]), r##"stroke="#cc3311""##);
        c.text(x(l[0]), y(l[1]) - 4.0, "middle", f.name());
    }
    for (g, (name, p)) in proj.genres.iter().zip(&proj.coordinates).enumerate() {
        let color = PALETTE[g % PALETTE.len()];
        writeln!(c.body, r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="{color}"/>"#, x(p[0]), y(p[1])).unwrap();
        c.text(x(p[0]) + 7.0, y(p[1]) + 4.0, "start", name);
    }
    c.save(path)
}
