//! Circularization of boundary loops with the geodesic zipper, and Koebe iteration.

use crate::geometry::{centroid, circularity, interior_point, radial_spread};
use crate::welding::{intermediate_form, Branch, ExtendedComplex, MapChain, MobiusMap, Primitive, WeldError};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KoebeError {
    #[error(transparent)]
    Weld(#[from] WeldError),
    #[error("reference point is not inside the counter-clockwise boundary")]
    ReferenceOutside,
    #[error("no interior point found for a hole")]
    NoHoleCenter,
    #[error("loop has {0} points; at least 3 are needed")]
    LoopTooShort(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LoopCircularity {
    pub center: [f64; 2],
    pub mean_radius: f64,
    pub radius_std: f64,
    pub circularity: f64,
    /// The same ratio about the arithmetic mean of the points; it does not vanish for a circle
    /// sampled unevenly.
    pub vertex_mean_circularity: f64,
}

impl LoopCircularity {
    /// Spread of distances to the centre of the fitted circle.
    pub fn measure(points: &[Complex64]) -> Self {
        let (c, mean, std, ratio) = circularity(points);
        let (_, _, vertex_mean_circularity) = radial_spread(points, centroid(points));
        LoopCircularity { center: [c.re, c.im], mean_radius: mean, radius_std: std, circularity: ratio, vertex_mean_circularity }
    }
}

/// Circularity of the outer loop and of every hole.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CircularityReport {
    pub outer: LoopCircularity,
    pub holes: Vec<LoopCircularity>,
}

impl CircularityReport {
    pub fn worst_hole(&self) -> f64 {
        self.holes.iter().map(|h| h.circularity).fold(0.0, f64::max)
    }
}

/// Conformal map of the interior of a counter-clockwise `boundary` onto the unit disk with
/// `reference ↦ 0` and positive derivative there. Boundary points land on the unit circle.
pub fn zipper_to_disk(boundary: &[Complex64], reference: Complex64) -> Result<MapChain, KoebeError> {
    let n = boundary.len();
    if n < 3 {
        return Err(KoebeError::LoopTooShort(n));
    }
    let mut chain: Vec<ExtendedComplex> = boundary.iter().map(|&z| ExtendedComplex::Finite(z)).collect();
    chain.push(ExtendedComplex::Finite(reference));
    let form = intermediate_form(&chain, n - 1, Branch::Plus)?;
    let p = form.images[n].finite().ok_or(KoebeError::ReferenceOutside)?;
    if !(p.re > 0.0 && p.im > 0.0) {
        return Err(KoebeError::ReferenceOutside);
    }
    let mut maps = form.maps;
    maps.push(Primitive::Square);
    let q = p * p;
    let one = Complex64::new(1.0, 0.0);
    maps.push(Primitive::Mobius(MobiusMap::new(one, -q, one, -q.conj())));
    let (_, d) = maps.apply_with_derivative(reference).ok_or(KoebeError::ReferenceOutside)?;
    let zero = Complex64::new(0.0, 0.0);
    maps.push(Primitive::Mobius(MobiusMap::affine(d.conj() / d.norm(), zero)));
    Ok(maps)
}

/// Conformal map of the exterior of a hole onto the exterior of the unit disk fixing ∞,
/// with positive derivative at ∞. The hole loop may have either orientation.
pub fn hole_exterior_map(hole: &[Complex64]) -> Result<MapChain, KoebeError> {
    let center = interior_point(hole).ok_or(KoebeError::NoHoleCenter)?;
    let mut inverted: Vec<Complex64> = hole.iter().map(|z| (z - center).inv()).collect();
    if crate::geometry::signed_area(&inverted) < 0.0 {
        inverted.reverse();
    }
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let inversion = MobiusMap::new(zero, one, one, -center);
    let psi = zipper_to_disk(&inverted, zero)?;
    let mut maps = MapChain::new();
    maps.push(Primitive::Mobius(inversion));
    maps.extend(&psi);
    maps.push(Primitive::Mobius(MobiusMap::new(zero, one, one, zero)));
    Ok(maps)
}

/// Maps the hole onto the unit circle and carries `points` along.
pub fn circularize_hole(hole: &[Complex64], points: &mut [ExtendedComplex]) -> Result<MapChain, KoebeError> {
    let map = hole_exterior_map(hole)?;
    map.apply_all(points);
    Ok(map)
}

/// Maps the interior of the outer loop onto the unit disk with `reference ↦ 0`.
pub fn circularize_outer(
    outer: &[Complex64],
    reference: Complex64,
    points: &mut [ExtendedComplex],
) -> Result<MapChain, KoebeError> {
    let map = zipper_to_disk(outer, reference)?;
    map.apply_all(points);
    Ok(map)
}

/// Boundary points of a planar multiply-connected region, indexed by loop.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainPoints {
    pub points: Vec<Complex64>,
    /// Counter-clockwise outer loop.
    pub outer: Vec<usize>,
    /// Clockwise hole loops.
    pub holes: Vec<Vec<usize>>,
    /// A point strictly inside the region; it ends at the origin.
    pub reference: usize,
}

impl DomainPoints {
    fn gather(&self, idx: &[usize]) -> Vec<Complex64> {
        idx.iter().map(|&i| self.points[i]).collect()
    }

    pub fn report(&self) -> CircularityReport {
        CircularityReport {
            outer: LoopCircularity::measure(&self.gather(&self.outer)),
            holes: self.holes.iter().map(|h| LoopCircularity::measure(&self.gather(h))).collect(),
        }
    }

    fn apply(&mut self, map: &MapChain) -> Result<(), KoebeError> {
        for p in self.points.iter_mut() {
            *p = map
                .apply(ExtendedComplex::Finite(*p))
                .finite()
                .ok_or_else(|| WeldError::NumericalBreakdown("Koebe step sent a point to infinity".into()))?;
        }
        Ok(())
    }

    pub fn circularize_hole(&mut self, j: usize) -> Result<MapChain, KoebeError> {
        let map = hole_exterior_map(&self.gather(&self.holes[j]))?;
        self.apply(&map)?;
        Ok(map)
    }

    pub fn circularize_outer(&mut self) -> Result<MapChain, KoebeError> {
        let map = zipper_to_disk(&self.gather(&self.outer), self.points[self.reference])?;
        self.apply(&map)?;
        Ok(map)
    }
}

/// Result of Koebe refinement: the composed map and the report after every full cycle.
#[derive(Clone, Debug)]
pub struct KoebeRun {
    pub map: MapChain,
    pub history: Vec<CircularityReport>,
}

/// Classical Koebe iteration: each pass circularizes every hole in turn and then the outer
/// loop. Stops once every hole is within `target`; the initial state is checked first.
pub fn koebe_refine(domain: &mut DomainPoints, passes: usize, target: f64) -> Result<KoebeRun, KoebeError> {
    let mut map = MapChain::new();
    let mut history = vec![domain.report()];
    for _ in 0..passes {
        if history.last().is_some_and(|r| r.worst_hole() <= target) {
            break;
        }
        for j in 0..domain.holes.len() {
            map.extend(&domain.circularize_hole(j)?);
        }
        map.extend(&domain.circularize_outer()?);
        history.push(domain.report());
    }
    Ok(KoebeRun { map, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::fit_similarity;
    use std::f64::consts::TAU;

    fn circle(n: usize, c: Complex64, r: f64, ccw: bool) -> Vec<Complex64> {
        (0..n)
            .map(|i| {
                let t = TAU * i as f64 / n as f64;
                c + Complex64::from_polar(r, if ccw { t } else { -t })
            })
            .collect()
    }

    fn square(n_side: usize) -> Vec<Complex64> {
        let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
        let mut out = Vec::new();
        for k in 0..4 {
            let a = Complex64::new(corners[k].0, corners[k].1);
            let b = Complex64::new(corners[(k + 1) % 4].0, corners[(k + 1) % 4].1);
            for i in 0..n_side {
                out.push(a + (b - a) * (i as f64 / n_side as f64));
            }
        }
        out
    }

    #[test]
    fn disk_map_of_ellipse_hits_circle_and_origin() {
        let b: Vec<Complex64> = circle(120, Complex64::new(0.0, 0.0), 1.0, true)
            .iter()
            .map(|z| Complex64::new(1.6 * z.re, z.im))
            .collect();
        let r = Complex64::new(0.3, 0.2);
        let map = zipper_to_disk(&b, r).unwrap();
        for z in &b {
            let w = map.apply(ExtendedComplex::Finite(*z)).unwrap_finite();
            assert!((w.norm() - 1.0).abs() < 1e-9);
        }
        let (w, d) = map.apply_with_derivative(r).unwrap();
        assert!(w.norm() < 1e-12);
        assert!(d.im.abs() < 1e-9 * d.norm() && d.re > 0.0);
        let inside = map.apply(ExtendedComplex::new(-1.2, 0.1)).unwrap_finite();
        assert!(inside.norm() < 1.0);
    }

    #[test]
    fn clockwise_boundary_is_rejected() {
        let b = circle(40, Complex64::new(0.0, 0.0), 1.0, false);
        assert!(zipper_to_disk(&b, Complex64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn unit_circle_hole_moves_passengers_by_similarity() {
        let hole = circle(200, Complex64::new(0.0, 0.0), 1.0, false);
        let far: Vec<Complex64> = circle(16, Complex64::new(0.0, 0.0), 50.0, true);
        let mut pts: Vec<ExtendedComplex> = far.iter().map(|&z| z.into()).collect();
        pts.push(ExtendedComplex::Infinity);
        circularize_hole(&hole, &mut pts).unwrap();
        assert!(pts[16].is_infinite());
        let moved: Vec<Complex64> = pts[..16].iter().map(|p| p.unwrap_finite()).collect();
        let (s, t) = fit_similarity(&far, &moved);
        for (z, w) in far.iter().zip(&moved) {
            assert!((s * z + t - w).norm() <= 1e-3 * 50.0);
        }
    }

    #[test]
    fn square_hole_becomes_circle() {
        let mut hole = square(50);
        hole.reverse();
        let mut pts: Vec<ExtendedComplex> = hole.iter().map(|&z| z.into()).collect();
        circularize_hole(&hole, &mut pts).unwrap();
        let img: Vec<Complex64> = pts.iter().map(|p| p.unwrap_finite()).collect();
        assert!(LoopCircularity::measure(&img).circularity <= 0.02);
        assert!(img.iter().all(|z| (z.norm() - 1.0).abs() < 1e-8));
    }

    pub(super) fn two_blob_domain() -> DomainPoints {
        let outer: Vec<Complex64> = circle(160, Complex64::new(0.0, 0.0), 1.0, true)
            .iter()
            .map(|z| Complex64::new(1.5 * z.re, z.im * (1.0 + 0.3 * z.re * z.re)))
            .collect();
        let blob = |c: Complex64, r: f64, lobes: f64, n: usize| -> Vec<Complex64> {
            (0..n)
                .map(|i| {
                    let t = -TAU * i as f64 / n as f64;
                    c + Complex64::from_polar(r * (1.0 + 0.15 * (lobes * t).cos()), t)
                })
                .collect()
        };
        let h1 = blob(Complex64::new(-0.6, 0.0), 0.25, 3.0, 90);
        let h2 = blob(Complex64::new(0.65, 0.1), 0.2, 2.0, 80);
        let mut points = outer.clone();
        let outer_idx: Vec<usize> = (0..outer.len()).collect();
        let h1_idx: Vec<usize> = (points.len()..points.len() + h1.len()).collect();
        points.extend(&h1);
        let h2_idx: Vec<usize> = (points.len()..points.len() + h2.len()).collect();
        points.extend(&h2);
        points.push(Complex64::new(0.0, 0.05));
        let reference = points.len() - 1;
        DomainPoints { points, outer: outer_idx, holes: vec![h1_idx, h2_idx], reference }
    }

    #[test]
    fn koebe_iteration_converges_on_two_holes() {
        let mut d = two_blob_domain();
        let run = koebe_refine(&mut d, 5, 1e-6).unwrap();
        let seq: Vec<f64> = run.history.iter().map(CircularityReport::worst_hole).collect();
        for w in seq[1..].windows(2) {
            assert!(w[1] <= w[0], "{seq:?}");
        }
        assert!(run.history[3].worst_hole() <= 1e-2, "{seq:?}");
        assert!(d.points.iter().enumerate().all(|(i, z)| d.outer.contains(&i) || z.norm() < 1.0 - 1e-12));
        assert!(d.points[d.reference].norm() < 1e-12);
    }

    #[test]
    fn circular_domain_is_left_alone() {
        let outer = circle(64, Complex64::new(0.0, 0.0), 1.0, true);
        let hole = circle(32, Complex64::new(0.3, 0.0), 0.2, false);
        let mut points = outer.clone();
        points.extend(&hole);
        points.push(Complex64::new(-0.5, 0.0));
        let mut d = DomainPoints {
            points: points.clone(),
            outer: (0..64).collect(),
            holes: vec![(64..96).collect()],
            reference: 96,
        };
        let run = koebe_refine(&mut d, 3, 1e-3).unwrap();
        assert_eq!(run.history.len(), 1);
        assert_eq!(d.points, points);
    }
}
