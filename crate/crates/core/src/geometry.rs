//! Small planar helpers shared across the pipeline.

use num_complex::Complex64;

/// Shoelace area of a closed polygon; positive for counter-clockwise order.
pub fn signed_area(poly: &[Complex64]) -> f64 {
    let n = poly.len();
    let mut twice = 0.0;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        twice += p.re * q.im - q.re * p.im;
    }
    0.5 * twice
}

/// Even-odd ray casting test. Points on the boundary may go either way.
pub fn point_in_polygon(z: Complex64, poly: &[Complex64]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (pi, pj) = (poly[i], poly[j]);
        if (pi.im > z.im) != (pj.im > z.im) {
            let x = pj.re + (z.im - pj.im) * (pi.re - pj.re) / (pi.im - pj.im);
            if z.re < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub fn centroid(points: &[Complex64]) -> Complex64 {
    let sum: Complex64 = points.iter().sum();
    sum / points.len() as f64
}

/// Centroid of the region enclosed by a simple polygon; `None` when its area vanishes.
pub fn area_centroid(poly: &[Complex64]) -> Option<Complex64> {
    let area = signed_area(poly);
    if area.abs() <= f64::MIN_POSITIVE {
        return None;
    }
    let n = poly.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        acc += (p + q) * (p.re * q.im - q.re * p.im);
    }
    Some(acc / (6.0 * area))
}

/// Mean, standard deviation and std/mean of the distances from `center`.
pub fn radial_spread(points: &[Complex64], center: Complex64) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let radii: Vec<f64> = points.iter().map(|p| (p - center).norm()).collect();
    let mean = radii.iter().sum::<f64>() / n;
    let var = radii.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let ratio = if mean > 0.0 { std / mean } else { 0.0 };
    (mean, std, ratio)
}

/// Centre of the algebraic least-squares circle `|z|² + Re(d̄ z) + f = 0` through `points`;
/// `None` for fewer than three points or collinear data.
pub fn fitted_circle_center(points: &[Complex64]) -> Option<Complex64> {
    if points.len() < 3 {
        return None;
    }
    let m = centroid(points);
    let (mut sxx, mut sxy, mut syy, mut bx, mut by) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let q = p - m;
        let r2 = q.norm_sqr();
        sxx += q.re * q.re;
        sxy += q.re * q.im;
        syy += q.im * q.im;
        bx += q.re * r2;
        by += q.im * r2;
    }
    let det = sxx * syy - sxy * sxy;
    if !(det > 1e-12 * (sxx + syy).powi(2)) {
        return None;
    }
    let cx = 0.5 * (syy * bx - sxy * by) / det;
    let cy = 0.5 * (sxx * by - sxy * bx) / det;
    Some(m + Complex64::new(cx, cy))
}

/// Std/mean of distances to the centre of the fitted circle. Zero for points on any circle,
/// however unevenly spaced.
pub fn circularity(points: &[Complex64]) -> (Complex64, f64, f64, f64) {
    let c = fitted_circle_center(points)
        .or_else(|| area_centroid(points))
        .unwrap_or_else(|| centroid(points));
    let (mean, std, ratio) = radial_spread(points, c);
    (c, mean, std, ratio)
}

/// Least-squares similarity `w ≈ s z + t` mapping `from` onto `to`.
pub fn fit_similarity(from: &[Complex64], to: &[Complex64]) -> (Complex64, Complex64) {
    let cf = centroid(from);
    let ct = centroid(to);
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = 0.0;
    for (f, t) in from.iter().zip(to) {
        let df = f - cf;
        num += df.conj() * (t - ct);
        den += df.norm_sqr();
    }
    let s = if den > 0.0 { num / den } else { Complex64::new(1.0, 0.0) };
    (s, ct - s * cf)
}

/// Length of the bounding-box diagonal.
pub fn diameter(points: &[Complex64]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p.re);
        x1 = x1.max(p.re);
        y0 = y0.min(p.im);
        y1 = y1.max(p.im);
    }
    ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt()
}

/// A point strictly inside a simple polygon: the area centroid when it is inside, else the
/// deepest of a few points inset from the vertices along their bisectors.
pub fn interior_point(poly: &[Complex64]) -> Option<Complex64> {
    let n = poly.len();
    if n < 3 {
        return None;
    }
    let area = signed_area(poly);
    let c = if area.abs() > 0.0 {
        let mut cx = 0.0;
        let mut cy = 0.0;
        for i in 0..n {
            let p = poly[i];
            let q = poly[(i + 1) % n];
            let cross = p.re * q.im - q.re * p.im;
            cx += (p.re + q.re) * cross;
            cy += (p.im + q.im) * cross;
        }
        Complex64::new(cx / (6.0 * area), cy / (6.0 * area))
    } else {
        centroid(poly)
    };
    if point_in_polygon(c, poly) && boundary_distance(c, poly) > 1e-9 * diameter(poly) {
        return Some(c);
    }
    // Inset from each vertex along the inward bisector; keep the deepest candidate.
    let orient = area.signum();
    let mut best: Option<(f64, Complex64)> = None;
    let edge_mean = (0..n).map(|i| (poly[(i + 1) % n] - poly[i]).norm()).sum::<f64>() / n as f64;
    for i in 0..n {
        let prev = poly[(i + n - 1) % n];
        let cur = poly[i];
        let next = poly[(i + 1) % n];
        let e1 = (cur - prev) / (cur - prev).norm();
        let e2 = (next - cur) / (next - cur).norm();
        // inward normal is the left normal for counter-clockwise polygons
        let normal = (e1 + e2) * Complex64::new(0.0, orient);
        if normal.norm() == 0.0 {
            continue;
        }
        let dir = normal / normal.norm();
        for scale in [0.5, 0.25, 0.1, 0.03] {
            let cand = cur + dir * (scale * edge_mean);
            if point_in_polygon(cand, poly) {
                let d = boundary_distance(cand, poly);
                if best.is_none_or(|(bd, _)| d > bd) {
                    best = Some((d, cand));
                }
                break;
            }
        }
    }
    best.map(|(_, p)| p)
}

/// Distance from `z` to the closed polyline.
pub fn boundary_distance(z: Complex64, poly: &[Complex64]) -> f64 {
    let n = poly.len();
    let mut best = f64::INFINITY;
    for i in 0..n {
        best = best.min(segment_distance(z, poly[i], poly[(i + 1) % n]));
    }
    best
}

pub fn segment_distance(z: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (z - a).norm();
    }
    let t = ((z - a) * ab.conj()).re / len2;
    let t = t.clamp(0.0, 1.0);
    (z - (a + ab * t)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Vec<Complex64> {
        vec![
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 1.0),
            Complex64::new(0.0, 1.0),
        ]
    }

    #[test]
    fn square_area_and_containment() {
        let sq = square();
        assert_eq!(signed_area(&sq), 1.0);
        assert!(point_in_polygon(Complex64::new(0.5, 0.5), &sq));
        assert!(!point_in_polygon(Complex64::new(1.5, 0.5), &sq));
    }

    #[test]
    fn interior_point_of_l_shape() {
        let l = vec![
            Complex64::new(0.0, 0.0),
            Complex64::new(2.0, 0.0),
            Complex64::new(2.0, 0.2),
            Complex64::new(0.2, 0.2),
            Complex64::new(0.2, 2.0),
            Complex64::new(0.0, 2.0),
        ];
        let p = interior_point(&l).unwrap();
        assert!(point_in_polygon(p, &l));
    }

    #[test]
    fn similarity_fit_recovers_map() {
        let sq = square();
        let s = Complex64::new(0.3, 1.2);
        let t = Complex64::new(-2.0, 0.5);
        let img: Vec<_> = sq.iter().map(|z| s * z + t).collect();
        let (fs, ft) = fit_similarity(&sq, &img);
        assert!((fs - s).norm() < 1e-14 && (ft - t).norm() < 1e-14);
    }
}
