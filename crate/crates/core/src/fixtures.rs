//! Synthetic meshes and fields used by tests, benchmarks and the CLI self-test.

use crate::mesh::{repair_labels, TriangleMesh};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, TAU};

/// Planar annulus on a polar grid with `n_theta` sectors and `n_r` rings.
pub fn flat_annulus(n_theta: usize, n_r: usize, r0: f64, r1: f64) -> TriangleMesh {
    let idx = |i: usize, j: usize| (i % n_theta) * (n_r + 1) + j;
    let mut positions = Vec::with_capacity(n_theta * (n_r + 1));
    for i in 0..n_theta {
        let t = TAU * i as f64 / n_theta as f64;
        for j in 0..=n_r {
            let r = r0 + (r1 - r0) * j as f64 / n_r as f64;
            positions.push([r * t.cos(), r * t.sin(), 0.0]);
        }
    }
    let mut faces = Vec::with_capacity(2 * n_theta * n_r);
    for i in 0..n_theta {
        for j in 0..n_r {
            faces.push([idx(i, j), idx(i, j + 1), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i + 1, j)]);
        }
    }
    TriangleMesh::new(positions, faces).expect("annulus grid is a valid mesh")
}

/// Unit square `[0, 1]²` split into `n × n` cells, two triangles each.
pub fn square_grid(n: usize) -> TriangleMesh {
    let mut positions = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            positions.push([i as f64 / n as f64, j as f64 / n as f64, 0.0]);
        }
    }
    let mut faces = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let v = j * (n + 1) + i;
            faces.push([v, v + 1, v + n + 2]);
            faces.push([v, v + n + 2, v + n + 1]);
        }
    }
    TriangleMesh::new(positions, faces).expect("square grid is a valid mesh")
}

pub fn face_centroid(mesh: &TriangleMesh, face: usize) -> [f64; 3] {
    let p = mesh.positions();
    let f = mesh.faces()[face];
    let mut c = [0.0; 3];
    for v in f {
        for k in 0..3 {
            c[k] += p[v][k] / 3.0;
        }
    }
    c
}

/// A planar region bounded by an outer circle and disjoint circular holes inside it.
#[derive(Clone, Debug)]
pub struct CircleDomain {
    pub outer_radius: f64,
    pub holes: Vec<(Complex64, f64)>,
}

impl CircleDomain {
    fn contains(&self, z: Complex64) -> bool {
        z.norm() < self.outer_radius && self.holes.iter().all(|(c, r)| (z - c).norm() > *r)
    }

    fn clearance(&self, z: Complex64) -> f64 {
        self.holes.iter().map(|(c, r)| (z - c).norm() - r).fold(self.outer_radius - z.norm(), f64::min)
    }

    /// Delaunay triangulation of circle samples and a triangular lattice with spacing `h`.
    pub fn triangulate(&self, h: f64) -> TriangleMesh {
        let mut pts = circle_samples(Complex64::new(0.0, 0.0), self.outer_radius, h);
        for (c, r) in &self.holes {
            pts.extend(circle_samples(*c, *r, h));
        }
        let row = h * 3f64.sqrt() / 2.0;
        let n = (self.outer_radius / row).ceil() as i64 + 1;
        for j in -n..=n {
            let shift = if j.rem_euclid(2) == 1 { h / 2.0 } else { 0.0 };
            for i in -n..=n {
                let z = Complex64::new(i as f64 * h + shift, j as f64 * row);
                if self.contains(z) && self.clearance(z) > 0.6 * h {
                    pts.push(z);
                }
            }
        }
        let tris = delaunay(&pts);
        let kept: Vec<[usize; 3]> = tris
            .into_iter()
            .filter(|t| self.contains((pts[t[0]] + pts[t[1]] + pts[t[2]]) / 3.0))
            .collect();
        TriangleMesh::from_planar(&pts, kept).expect("circle domain triangulation is valid")
    }
}

fn circle_samples(center: Complex64, radius: f64, h: f64) -> Vec<Complex64> {
    let n = ((TAU * radius / h).ceil() as usize).max(8);
    (0..n).map(|i| center + Complex64::from_polar(radius, TAU * i as f64 / n as f64)).collect()
}

/// Unit-radius disk.
pub fn disk(radius: f64, h: f64) -> TriangleMesh {
    CircleDomain { outer_radius: radius, holes: Vec::new() }.triangulate(h)
}

/// Unit disk with holes of radius 0.2 centred at (±0.45, 0).
pub fn two_hole_disk(h: f64) -> TriangleMesh {
    CircleDomain {
        outer_radius: 1.0,
        holes: vec![(Complex64::new(-0.45, 0.0), 0.2), (Complex64::new(0.45, 0.0), 0.2)],
    }
    .triangulate(h)
}

/// Unit disk with four holes of radius 0.15 centred at (±0.45, ±0.45).
pub fn four_hole_disk(h: f64) -> TriangleMesh {
    let holes = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
        .iter()
        .map(|&(sx, sy)| (Complex64::new(0.45 * sx, 0.45 * sy), 0.15))
        .collect();
    CircleDomain { outer_radius: 1.0, holes }.triangulate(h)
}

/// Lifts a planar mesh with `(x, y) -> (x, y, height(x, y))`.
pub fn lifted(mesh: &TriangleMesh, height: impl Fn(f64, f64) -> f64) -> TriangleMesh {
    let positions = mesh.positions().iter().map(|p| [p[0], p[1], height(p[0], p[1])]).collect();
    TriangleMesh::new(positions, mesh.faces().to_vec()).expect("lifting keeps topology")
}

/// Unit hemisphere cap built from a disk triangulation by `r -> polar angle r·π/2`.
pub fn hemisphere(h: f64) -> TriangleMesh {
    let base = disk(1.0, h);
    let positions = base
        .positions()
        .iter()
        .map(|p| {
            let r = p[0].hypot(p[1]);
            let theta = r * PI / 2.0;
            let phi = p[1].atan2(p[0]);
            [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
        })
        .collect();
    TriangleMesh::new(positions, base.faces().to_vec()).expect("cap keeps topology")
}

/// Labels faces by the quadrant of their centroid, then repairs islands and pinches.
pub fn quadrant_labels(mesh: &TriangleMesh) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..mesh.face_count())
        .map(|f| {
            let c = face_centroid(mesh, f);
            usize::from(c[0] >= 0.0) * 2 + usize::from(c[1] >= 0.0)
        })
        .collect();
    repair_labels(mesh, &mut labels);
    labels
}

/// Left half split into three sectors around (−0.45, 0), right half split by the x axis.
pub fn five_piece_labels(mesh: &TriangleMesh) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..mesh.face_count())
        .map(|f| {
            let c = face_centroid(mesh, f);
            if c[0] < 0.0 {
                let a = (c[1]).atan2(c[0] + 0.45).rem_euclid(TAU);
                (a / (TAU / 3.0)).floor().min(2.0) as usize
            } else {
                3 + usize::from(c[1] >= 0.0)
            }
        })
        .collect();
    repair_labels(mesh, &mut labels);
    labels
}

/// Smooth random Beltrami field on faces with `max |μ| = max_norm`.
pub fn smooth_beltrami(mesh: &TriangleMesh, max_norm: f64, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = bounding_box(mesh);
    let extent = (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let modes: Vec<([f64; 3], f64, Complex64)> = (0..6)
        .map(|_| {
            let k = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let phase = rng.random_range(0.0..TAU);
            let amp = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            (k, phase, amp)
        })
        .collect();
    let raw: Vec<Complex64> = (0..mesh.face_count())
        .map(|f| {
            let c = face_centroid(mesh, f);
            modes
                .iter()
                .map(|(k, phase, amp)| {
                    let s = (0..3).map(|i| k[i] * (c[i] - lo[i]) / extent).sum::<f64>();
                    amp * (PI * s + phase).cos()
                })
                .sum()
        })
        .collect();
    let peak = raw.iter().map(|m| m.norm()).fold(0.0, f64::max);
    let scale = if peak > 0.0 { max_norm / peak } else { 0.0 };
    raw.into_iter().map(|m| m * scale).collect()
}

fn bounding_box(mesh: &TriangleMesh) -> ([f64; 3], [f64; 3]) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in mesh.positions() {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

fn orient(a: Complex64, b: Complex64, c: Complex64) -> f64 {
    (b - a).re * (c - a).im - (b - a).im * (c - a).re
}

fn in_circle(a: Complex64, b: Complex64, c: Complex64, p: Complex64) -> bool {
    let (a, b, c) = (a - p, b - p, c - p);
    let det = a.norm_sqr() * (b.re * c.im - b.im * c.re) - b.norm_sqr() * (a.re * c.im - a.im * c.re)
        + c.norm_sqr() * (a.re * b.im - a.im * b.re);
    det > 0.0
}

/// Bowyer–Watson Delaunay triangulation; triangles are counter-clockwise.
fn delaunay(points: &[Complex64]) -> Vec<[usize; 3]> {
    let n = points.len();
    let (mut lo, mut hi) = (Complex64::new(f64::INFINITY, f64::INFINITY), Complex64::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for p in points {
        lo = Complex64::new(lo.re.min(p.re), lo.im.min(p.im));
        hi = Complex64::new(hi.re.max(p.re), hi.im.max(p.im));
    }
    let mid = (lo + hi) / 2.0;
    let span = (hi - lo).re.max((hi - lo).im).max(1.0) * 20.0;
    let mut pts = points.to_vec();
    pts.push(mid + Complex64::new(-span, -span));
    pts.push(mid + Complex64::new(span, -span));
    pts.push(mid + Complex64::new(0.0, span));

    let mut tris: Vec<[usize; 3]> = vec![[n, n + 1, n + 2]];
    let mut nbr: Vec<[Option<usize>; 3]> = vec![[None; 3]];
    let mut alive = vec![true];

    // Insert along a serpentine sweep so walks stay short.
    let cell = (span / 20.0) / (n as f64).sqrt().max(1.0);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| {
        let row = ((points[i].im - lo.im) / cell) as i64;
        let col = ((points[i].re - lo.re) / cell) as i64;
        (row, if row % 2 == 0 { col } else { -col })
    });

    let mut last = 0;
    let mut mark = vec![0usize; 1];
    let mut stamp = 0;
    for &p in &order {
        let z = pts[p];
        let mut t = last;
        'walk: loop {
            for k in 0..3 {
                let (a, b) = (tris[t][k], tris[t][(k + 1) % 3]);
                if orient(pts[a], pts[b], z) < 0.0 {
                    if let Some(next) = nbr[t][k] {
                        t = next;
                        continue 'walk;
                    }
                }
            }
            break;
        }
        stamp += 1;
        let mut bad = vec![t];
        mark[t] = stamp;
        let mut i = 0;
        while i < bad.len() {
            let cur = bad[i];
            i += 1;
            for k in 0..3 {
                if let Some(o) = nbr[cur][k] {
                    if mark[o] != stamp {
                        let [a, b, c] = tris[o];
                        if in_circle(pts[a], pts[b], pts[c], z) {
                            mark[o] = stamp;
                            bad.push(o);
                        }
                    }
                }
            }
        }
        let mut rim = Vec::new();
        for &b in &bad {
            alive[b] = false;
            for k in 0..3 {
                let outside = nbr[b][k];
                if outside.is_none_or(|o| mark[o] != stamp) {
                    rim.push((tris[b][k], tris[b][(k + 1) % 3], outside));
                }
            }
        }
        let mut by_start = std::collections::HashMap::with_capacity(rim.len());
        let first_new = tris.len();
        for (a, b, outside) in &rim {
            let id = tris.len();
            tris.push([*a, *b, p]);
            nbr.push([*outside, None, None]);
            alive.push(true);
            mark.push(0);
            by_start.insert(*a, id);
            if let Some(o) = outside {
                for k in 0..3 {
                    if tris[*o][k] == *b && tris[*o][(k + 1) % 3] == *a {
                        nbr[*o][k] = Some(id);
                    }
                }
            }
        }
        for id in first_new..tris.len() {
            let b = tris[id][1];
            let other = by_start[&b];
            nbr[id][1] = Some(other);
            nbr[other][2] = Some(id);
        }
        last = first_new;
    }
    tris.into_iter()
        .zip(alive)
        .filter(|(t, a)| *a && t.iter().all(|&v| v < n))
        .map(|(t, _)| t)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delaunay_of_square_with_center_has_four_triangles() {
        let pts = [
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 1.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.5, 0.5),
        ];
        let tris = delaunay(&pts);
        assert_eq!(tris.len(), 4);
        for t in &tris {
            assert!(orient(pts[t[0]], pts[t[1]], pts[t[2]]) > 0.0);
        }
    }

    #[test]
    fn two_hole_disk_has_three_loops() {
        let m = two_hole_disk(0.08);
        assert_eq!(m.hole_count(), 2);
        assert_eq!(m.euler_characteristic(), -1);
    }

    #[test]
    fn smooth_beltrami_respects_bound() {
        let m = disk(1.0, 0.2);
        let mu = smooth_beltrami(&m, 0.5, 7);
        let peak = mu.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!((peak - 0.5).abs() < 1e-12);
        assert_eq!(mu, smooth_beltrami(&m, 0.5, 7));
    }
}
