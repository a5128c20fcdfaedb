use super::partial::{partial_weld, PartialWeld};
use super::{ExtendedComplex, MapChain, WeldError};
use crate::geometry::point_in_polygon;
use num_complex::Complex64;

/// Evenly spaced points on the chord from `start` to `end`, in the order
/// `ā_i = (i/(k+1)) start + (1 - i/(k+1)) end` for `i = 1..=k`.
///
/// Every point must lie outside `polygon`.
pub fn auxiliary_path(
    start: Complex64,
    end: Complex64,
    count: usize,
    polygon: &[Complex64],
) -> Result<Vec<Complex64>, WeldError> {
    let mut out = Vec::with_capacity(count);
    for i in 1..=count {
        let t = i as f64 / (count + 1) as f64;
        let p = start * t + end * (1.0 - t);
        if point_in_polygon(p, polygon) {
            return Err(WeldError::PathInsidePolygon { index: i });
        }
        out.push(p);
    }
    Ok(out)
}

/// One side of a two-arc weld.
///
/// `chain[0..=first_end]` is the first shared arc, `chain[first_end..=second_start]` runs
/// along the hole, `chain[second_start..=second_end]` is the second shared arc and the rest
/// closes the loop.
#[derive(Clone, Debug)]
pub struct MultiWeldSide<'a> {
    pub chain: &'a [ExtendedComplex],
    pub first_end: usize,
    pub second_start: usize,
    pub second_end: usize,
    pub anchor: Complex64,
}

#[derive(Clone, Debug)]
pub struct MultiWeldInput<'a> {
    pub a: MultiWeldSide<'a>,
    pub b: MultiWeldSide<'a>,
}

#[derive(Clone, Debug)]
pub struct MultiWeldOutput {
    pub a_images: Vec<ExtendedComplex>,
    pub b_images: Vec<ExtendedComplex>,
    pub maps_a: MapChain,
    pub maps_b: MapChain,
    /// Welded images of the auxiliary chord; they lie inside the new hole and are discarded.
    pub aux_images: Vec<ExtendedComplex>,
    pub aux_count: usize,
}

fn finite(points: &[ExtendedComplex]) -> Result<Vec<Complex64>, WeldError> {
    points
        .iter()
        .map(|p| p.finite().ok_or_else(|| WeldError::NumericalBreakdown("point at infinity in chain".into())))
        .collect()
}

fn validate(side: &MultiWeldSide<'_>) -> Result<(), WeldError> {
    let n = side.chain.len();
    if !(side.first_end >= 1
        && side.first_end < side.second_start
        && side.second_start < side.second_end
        && side.second_end < n)
    {
        return Err(WeldError::MisorderedArc(format!(
            "markers {}, {}, {} invalid for chain of {n}",
            side.first_end, side.second_start, side.second_end
        )));
    }
    Ok(())
}

fn mean_arc_edge(points: &[Complex64], side: &MultiWeldSide<'_>) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..side.first_end {
        total += (points[i + 1] - points[i]).norm();
        count += 1;
    }
    for i in side.second_start..side.second_end {
        total += (points[i + 1] - points[i]).norm();
        count += 1;
    }
    total / count as f64
}

/// Welds two domains sharing two boundary arcs, leaving the hole between them open.
///
/// The hole-side run of each chain is replaced by a straight auxiliary chord, the augmented
/// chains are welded along one long shared arc, and the hole-side points ride along.
pub fn multiconnected_weld(input: &MultiWeldInput<'_>) -> Result<MultiWeldOutput, WeldError> {
    let (a, b) = (&input.a, &input.b);
    validate(a)?;
    validate(b)?;
    if a.first_end != b.first_end || a.second_end - a.second_start != b.second_end - b.second_start {
        return Err(WeldError::MisorderedArc("shared arcs differ in length".into()));
    }
    let pa = finite(a.chain)?;
    let pb = finite(b.chain)?;

    let count_for = |pts: &[Complex64], side: &MultiWeldSide<'_>| {
        let chord = (pts[side.second_start] - pts[side.first_end]).norm();
        let spacing = mean_arc_edge(pts, side);
        ((chord / spacing).ceil() as usize).saturating_sub(1).max(1)
    };
    let aux_count = count_for(&pa, a).max(count_for(&pb, b));

    let augment = |pts: &[Complex64], side: &MultiWeldSide<'_>| -> Result<Vec<ExtendedComplex>, WeldError> {
        let mut aux = auxiliary_path(pts[side.first_end], pts[side.second_start], aux_count, pts)?;
        aux.reverse();
        let mut out: Vec<ExtendedComplex> = side.chain[..=side.first_end].to_vec();
        out.extend(aux.into_iter().map(ExtendedComplex::Finite));
        out.extend_from_slice(&side.chain[side.second_start..]);
        Ok(out)
    };
    let aug_a = augment(&pa, a)?;
    let aug_b = augment(&pb, b)?;
    let shared = a.first_end + aux_count + 1 + (a.second_end - a.second_start);

    let PartialWeld { a_images, b_images, maps_a, maps_b, .. } =
        partial_weld(&aug_a, &aug_b, shared, a.anchor, b.anchor)?;

    let aux_images = a_images[a.first_end + 1..=a.first_end + aux_count].to_vec();
    let restore = |side: &MultiWeldSide<'_>, welded: &[ExtendedComplex], maps: &MapChain| {
        let mut out: Vec<ExtendedComplex> = welded[..=side.first_end].to_vec();
        for z in &side.chain[side.first_end + 1..side.second_start] {
            out.push(maps.apply(*z));
        }
        out.extend_from_slice(&welded[side.first_end + aux_count + 1..]);
        out
    };
    let a_out = restore(a, &a_images, &maps_a);
    let b_out = restore(b, &b_images, &maps_b);
    Ok(MultiWeldOutput { a_images: a_out, b_images: b_out, maps_a, maps_b, aux_images, aux_count })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::signed_area;
    use crate::welding::chain_scale;
    use std::f64::consts::PI;

    #[test]
    fn formula_order_of_auxiliary_points() {
        let poly = vec![Complex64::new(5.0, 5.0), Complex64::new(6.0, 5.0), Complex64::new(6.0, 6.0)];
        let pts = auxiliary_path(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), 3, &poly).unwrap();
        let expect = [0.75, 0.5, 0.25];
        for (p, e) in pts.iter().zip(expect) {
            assert!((p - Complex64::new(e, 0.0)).norm() < 1e-15);
        }
        assert!(auxiliary_path(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), 0, &poly)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn chord_through_polygon_is_rejected() {
        let square = vec![
            Complex64::new(0.0, -1.0),
            Complex64::new(1.0, -1.0),
            Complex64::new(1.0, 1.0),
            Complex64::new(0.0, 1.0),
        ];
        let r = auxiliary_path(Complex64::new(-1.0, 0.0), Complex64::new(2.0, 0.0), 5, &square);
        assert!(matches!(r, Err(WeldError::PathInsidePolygon { .. })));
    }

    /// Left and right halves of the annulus 0.5 < |z| < 1 with `n_hole` points on each
    /// half of the inner circle.
    fn annulus_halves(
        n_outer: usize,
        n_hole: usize,
        n_cut: usize,
    ) -> (Vec<ExtendedComplex>, usize, usize, usize, Vec<ExtendedComplex>, usize, usize, usize) {
        let radial = |angle: f64, from: f64, to: f64| -> Vec<Complex64> {
            (0..=n_cut)
                .map(|i| {
                    let r = from + (to - from) * i as f64 / n_cut as f64;
                    Complex64::from_polar(r, angle)
                })
                .collect()
        };
        let arc = |r: f64, from: f64, to: f64, n: usize| -> Vec<Complex64> {
            (1..n).map(|i| Complex64::from_polar(r, from + (to - from) * i as f64 / n as f64)).collect()
        };
        let bottom = -PI / 2.0;
        let top = PI / 2.0;
        // Left half, counter-clockwise: bottom cut outward-in, inner arc, top cut, outer arc.
        let mut a = radial(bottom, 1.0, 0.5);
        let r = a.len() - 1;
        a.extend(arc(0.5, bottom, -3.0 * PI / 2.0, n_hole));
        let s = a.len();
        a.extend(radial(top, 0.5, 1.0));
        let t = a.len() - 1;
        a.extend(arc(1.0, top, 3.0 * PI / 2.0, n_outer));
        // Right half, clockwise along the same arcs.
        let mut b = radial(bottom, 1.0, 0.5);
        b.extend(arc(0.5, bottom, top, n_hole));
        let sb = b.len();
        b.extend(radial(top, 0.5, 1.0));
        let tb = b.len() - 1;
        b.extend(arc(1.0, top, bottom, n_outer));
        let wrap = |v: Vec<Complex64>| v.into_iter().map(ExtendedComplex::Finite).collect::<Vec<_>>();
        (wrap(a), r, s, t, wrap(b), r, sb, tb)
    }

    #[test]
    fn annulus_halves_weld_into_one_hole() {
        let (a, r, s, t, b, rb, sb, tb) = annulus_halves(40, 20, 8);
        let input = MultiWeldInput {
            a: MultiWeldSide { chain: &a, first_end: r, second_start: s, second_end: t, anchor: Complex64::new(-0.75, 0.0) },
            b: MultiWeldSide { chain: &b, first_end: rb, second_start: sb, second_end: tb, anchor: Complex64::new(0.75, 0.0) },
        };
        let out = multiconnected_weld(&input).unwrap();
        let scale = chain_scale(&out.a_images).max(chain_scale(&out.b_images));
        for j in (0..=r).chain(s..=t) {
            let jb = if j <= r { j } else { j - s + sb };
            assert!(out.a_images[j].distance(&out.b_images[jb]) <= 1e-8 * scale, "point {j}");
        }
        // Hole: inner run of A followed by the reversed inner run of B.
        let mut hole: Vec<Complex64> = out.a_images[r..=s].iter().map(|z| z.unwrap_finite()).collect();
        hole.extend(out.b_images[rb + 1..sb].iter().rev().map(|z| z.unwrap_finite()));
        assert!(signed_area(&hole).abs() > 1e-6 * scale * scale);
        for aux in &out.aux_images {
            assert!(point_in_polygon(aux.unwrap_finite(), &hole));
        }
    }

    #[test]
    fn asymmetric_halves_weld_every_shared_pair() {
        let (a, r, s, t, b, rb, sb, tb) = annulus_halves(40, 20, 8);
        let b: Vec<ExtendedComplex> = b.iter().map(|z| (z.unwrap_finite() * 1.7 + Complex64::new(0.1, 0.3)).into()).collect();
        let a: Vec<ExtendedComplex> = a.iter().map(|z| { let w = z.unwrap_finite(); (w + 0.15 * w * w).into() }).collect();
        let input = MultiWeldInput {
            a: MultiWeldSide { chain: &a, first_end: r, second_start: s, second_end: t, anchor: Complex64::new(-0.75, 0.0) },
            b: MultiWeldSide {
                chain: &b,
                first_end: rb,
                second_start: sb,
                second_end: tb,
                anchor: Complex64::new(0.75, 0.0) * 1.7 + Complex64::new(0.1, 0.3),
            },
        };
        let out = multiconnected_weld(&input).unwrap();
        let scale = chain_scale(&out.a_images).max(chain_scale(&out.b_images));
        for j in (0..=r).chain(s..=t) {
            let jb = if j <= r { j } else { j - s + sb };
            assert!(out.a_images[j].distance(&out.b_images[jb]) <= 1e-8 * scale, "point {j}");
        }
    }

    #[test]
    fn small_diamond_hole_survives() {
        // Square 4x4 centred at the origin with a diamond hole; split along x = 0.
        let cut = |from: f64, to: f64| -> Vec<Complex64> {
            (0..=6).map(|i| Complex64::new(0.0, from + (to - from) * i as f64 / 6.0)).collect()
        };
        let mut a = cut(-2.0, -0.6);
        let r = a.len() - 1;
        a.push(Complex64::new(-0.6, 0.0));
        let s = a.len();
        a.extend(cut(0.6, 2.0));
        let t = a.len() - 1;
        a.extend([Complex64::new(-2.0, 2.0), Complex64::new(-2.0, -2.0)]);
        let mut b = cut(-2.0, -0.6);
        b.push(Complex64::new(0.6, 0.0));
        let sb = b.len();
        b.extend(cut(0.6, 2.0));
        let tb = b.len() - 1;
        b.extend([Complex64::new(2.0, 2.0), Complex64::new(2.0, -2.0)]);
        let a: Vec<ExtendedComplex> = a.into_iter().map(Into::into).collect();
        let b: Vec<ExtendedComplex> = b.into_iter().map(Into::into).collect();
        let input = MultiWeldInput {
            a: MultiWeldSide { chain: &a, first_end: r, second_start: s, second_end: t, anchor: Complex64::new(-1.0, 1.0) },
            b: MultiWeldSide { chain: &b, first_end: r, second_start: sb, second_end: tb, anchor: Complex64::new(1.0, 1.0) },
        };
        let out = multiconnected_weld(&input).unwrap();
        let hole: Vec<Complex64> = [out.a_images[r], out.a_images[r + 1], out.a_images[s], out.b_images[r + 1]]
            .iter()
            .map(|z| z.unwrap_finite())
            .collect();
        assert!(signed_area(&hole).abs() > 0.0);
        for aux in &out.aux_images {
            assert!(point_in_polygon(aux.unwrap_finite(), &hole));
        }
    }
}
