//! Stage snapshots: boundary chains as SVG drawings and CSV tables.

use crate::pipeline::StageSnapshot;
use num_complex::Complex64;
use std::fmt::Write;

pub const CANVAS: f64 = 1024.0;
const MARGIN: f64 = 32.0;
const PALETTE: [&str; 10] =
    ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"];

pub fn submesh_color(submesh: usize) -> &'static str {
    PALETTE[submesh % PALETTE.len()]
}

/// Similarity from data coordinates to the canvas, with y pointing down.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CanvasTransform {
    pub scale: f64,
    pub min: Complex64,
    pub offset: Complex64,
}

impl CanvasTransform {
    pub fn fit<'a>(points: impl IntoIterator<Item = &'a Complex64>) -> Self {
        let (mut lo, mut hi) = (Complex64::new(f64::INFINITY, f64::INFINITY), Complex64::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for z in points {
            lo = Complex64::new(lo.re.min(z.re), lo.im.min(z.im));
            hi = Complex64::new(hi.re.max(z.re), hi.im.max(z.im));
        }
        if !(lo.re <= hi.re) {
            return CanvasTransform { scale: 1.0, min: Complex64::default(), offset: Complex64::new(MARGIN, MARGIN) };
        }
        let extent = (hi.re - lo.re).max(hi.im - lo.im);
        let scale = if extent > 0.0 { (CANVAS - 2.0 * MARGIN) / extent } else { 1.0 };
        let used = (hi - lo) * scale;
        let offset = Complex64::new((CANVAS - used.re) / 2.0, (CANVAS - used.im) / 2.0);
        CanvasTransform { scale, min: lo, offset }
    }

    pub fn apply(&self, z: Complex64) -> (f64, f64) {
        let x = self.offset.re + (z.re - self.min.re) * self.scale;
        let y = CANVAS - (self.offset.im + (z.im - self.min.im) * self.scale);
        (x, y)
    }
}

/// One closed path per boundary loop, stroked in the colour of its submesh.
pub fn render_svg(snapshot: &StageSnapshot) -> String {
    let transform = CanvasTransform::fit(snapshot.loops.iter().flat_map(|l| &l.points));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{c}\" height=\"{c}\" viewBox=\"0 0 {c} {c}\">",
        c = CANVAS
    );
    let _ = writeln!(out, "<title>{}</title>", snapshot.stage);
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    for lp in snapshot.loops.iter().filter(|l| !l.points.is_empty()) {
        let mut d = String::new();
        for (i, z) in lp.points.iter().enumerate() {
            let (x, y) = transform.apply(*z);
            let _ = write!(d, "{}{x:.3},{y:.3} ", if i == 0 { "M" } else { "L" });
        }
        d.push('Z');
        let _ = writeln!(
            out,
            "<path data-submesh=\"{}\" d=\"{d}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
            lp.submesh,
            submesh_color(lp.submesh)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Vertex lists of the paths in an SVG written by [`render_svg`], in canvas coordinates.
pub fn parse_svg_paths(svg: &str) -> Vec<Vec<Complex64>> {
    svg.lines()
        .filter_map(|line| {
            let start = line.find(" d=\"")? + 4;
            let end = start + line[start..].find('"')?;
            Some(
                line[start..end]
                    .split_whitespace()
                    .filter_map(|tok| {
                        let (x, y) = tok.trim_start_matches(['M', 'L']).split_once(',')?;
                        Some(Complex64::new(x.parse().ok()?, y.parse().ok()?))
                    })
                    .collect(),
            )
        })
        .collect()
}

/// Boundary chains as CSV with columns `submesh,loop,index,parent_vertex,re,im`.
pub fn chains_csv(snapshot: &StageSnapshot) -> String {
    let mut out = String::from("submesh,loop,index,parent_vertex,re,im\n");
    let mut loop_index = std::collections::HashMap::new();
    for lp in &snapshot.loops {
        let k = loop_index.entry(lp.submesh).or_insert(0usize);
        for (i, (z, p)) in lp.points.iter().zip(&lp.parents).enumerate() {
            let _ = writeln!(out, "{},{},{},{},{:e},{:e}", lp.submesh, k, i, p, z.re, z.im);
        }
        *k += 1;
    }
    out
}
