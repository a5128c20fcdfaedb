use super::intermediate::{geodesic_normalizer, intermediate_form, snap_to_axis};
use super::maps::{Branch, MapChain, MobiusMap, Primitive};
use super::{chain_scale, ExtendedComplex, WeldError};
use crate::geometry::{point_in_polygon, signed_area};
use num_complex::Complex64;

/// Postcondition tolerance for welded correspondence points, relative to chain diameter.
pub const WELD_TOL: f64 = 1e-8;

/// Which image of the point at infinity was sent back to infinity by the final normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeldNormalization {
    MidpointOfInfinities,
    InfinityOfA,
    InfinityOfB,
}

#[derive(Clone, Debug)]
pub struct PartialWeld {
    pub a_images: Vec<ExtendedComplex>,
    pub b_images: Vec<ExtendedComplex>,
    pub maps_a: MapChain,
    pub maps_b: MapChain,
    pub normalization: WeldNormalization,
}

/// The map `T(z) = z / (p - q z i)` sending `(α, 0, β)` to `(i, 0, -i)` and keeping the right
/// half-plane. Mid-weld, either point may have wrapped through infinity onto the other half of
/// the axis; the map exists whenever `p > 0`.
pub fn mobius_align(alpha: ExtendedComplex, beta: ExtendedComplex) -> Result<MobiusMap, WeldError> {
    let bad = || WeldError::BadAxisPoints { alpha: alpha.to_string(), beta: beta.to_string() };
    let (za, zb) = match (alpha.finite(), beta.finite()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(bad()),
    };
    let scale = za.norm().max(zb.norm());
    if za.re.abs() > 1e-9 * scale || zb.re.abs() > 1e-9 * scale || za.im == zb.im {
        return Err(bad());
    }
    let (a, b) = (za.im, zb.im);
    let p = -2.0 * a * b / (a - b);
    let q = (a + b) / (a - b);
    if !(p > 0.0) || !p.is_finite() {
        return Err(bad());
    }
    Ok(MobiusMap::new(
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, -q),
        Complex64::new(p, 0.0),
    ))
}

/// One geodesic step: `z -> sqrt(L_ξ(z)^2 - 1)`, so that ξ goes to 0.
pub fn geodesic_basic(xi: ExtendedComplex, branch: Branch) -> Result<MapChain, WeldError> {
    let xi = match xi {
        ExtendedComplex::Finite(z) if z.norm() > 0.0 => z,
        _ => return Err(WeldError::ZeroXi),
    };
    let mut chain = MapChain::new();
    chain.push(Primitive::Mobius(geodesic_normalizer(xi)));
    chain.push(Primitive::SqrtMinusOne(branch));
    Ok(chain)
}

/// Welds chain `a` to chain `b` along `a[0..=k] ~ b[0..=k]`.
///
/// `a` runs counter-clockwise around its domain and `b` clockwise around its own, so the
/// shared arc is traversed in the same direction by both. `a_anchor` and `b_anchor` are
/// interior points of the two domains; they end at -1 and 1.
pub fn partial_weld(
    a: &[ExtendedComplex],
    b: &[ExtendedComplex],
    k: usize,
    a_anchor: Complex64,
    b_anchor: Complex64,
) -> Result<PartialWeld, WeldError> {
    if k >= a.len() || k >= b.len() {
        return Err(WeldError::MisorderedArc(format!(
            "shared arc length {k} exceeds chain lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let form_a = intermediate_form(a, k, Branch::Plus)?;
    let form_b = intermediate_form(b, k, Branch::Minus)?;

    // Working set: chain images followed by anchor and infinity images.
    let na = a.len();
    let nb = b.len();
    let mut pts_a = form_a.images.clone();
    pts_a.push(form_a.maps.apply(a_anchor.into()));
    pts_a.push(form_a.maps.apply(ExtendedComplex::Infinity));
    let mut pts_b = form_b.images.clone();
    pts_b.push(form_b.maps.apply(b_anchor.into()));
    pts_b.push(form_b.maps.apply(ExtendedComplex::Infinity));

    let mut common = MapChain::new();
    let apply = |p: Primitive, pa: &mut Vec<ExtendedComplex>, pb: &mut Vec<ExtendedComplex>| {
        for w in pa.iter_mut().chain(pb.iter_mut()) {
            *w = p.apply(*w);
        }
    };

    for j in (1..k).rev() {
        let align = mobius_align(pts_a[j], pts_b[j])?;
        for p in [Primitive::Mobius(align), Primitive::SqrtPlusOne] {
            apply(p, &mut pts_a, &mut pts_b);
            common.push(p);
        }
        pts_a[j] = ExtendedComplex::new(0.0, 0.0);
        pts_b[j] = ExtendedComplex::new(0.0, 0.0);
        snap_to_axis(&mut pts_a[1..j], None)?;
        snap_to_axis(&mut pts_b[1..j], None)?;
    }

    // Close the last edge: send the common image of a_0 = b_0 to infinity and square.
    let tail = pts_a[0];
    if tail.distance(&pts_b[0]) > 0.0 {
        return Err(WeldError::NumericalBreakdown("start points separated during welding".into()));
    }
    if let ExtendedComplex::Finite(xi) = tail {
        let one = Complex64::new(1.0, 0.0);
        let m = MobiusMap::new(one, Complex64::new(0.0, 0.0), -xi.inv(), one);
        apply(Primitive::Mobius(m), &mut pts_a, &mut pts_b);
        common.push(Primitive::Mobius(m));
    }
    apply(Primitive::Square, &mut pts_a, &mut pts_b);
    common.push(Primitive::Square);

    let anchor_a = pts_a[na].finite().ok_or_else(|| breakdown("anchor of A reached infinity"))?;
    let anchor_b = pts_b[nb].finite().ok_or_else(|| breakdown("anchor of B reached infinity"))?;
    let inf_a = pts_a[na + 1];
    let inf_b = pts_b[nb + 1];
    let mut candidates = Vec::new();
    if let (Some(p), Some(q)) = (inf_a.finite(), inf_b.finite()) {
        candidates.push((ExtendedComplex::Finite((p + q) * 0.5), WeldNormalization::MidpointOfInfinities));
    }
    candidates.push((inf_a, WeldNormalization::InfinityOfA));
    candidates.push((inf_b, WeldNormalization::InfinityOfB));

    let area_sign_a = signed_area(&finite_all(a)?).signum();
    let area_sign_b = signed_area(&finite_all(b)?).signum();
    for (pole, tag) in candidates {
        let norm = MobiusMap::to_minus_one_one_infinity(anchor_a, anchor_b, pole);
        let out_a: Vec<ExtendedComplex> = pts_a[..na].iter().map(|w| norm.apply(*w)).collect();
        let out_b: Vec<ExtendedComplex> = pts_b[..nb].iter().map(|w| norm.apply(*w)).collect();
        let (Ok(fa), Ok(fb)) = (finite_all(&out_a), finite_all(&out_b)) else {
            continue;
        };
        let minus_one = Complex64::new(-1.0, 0.0);
        let plus_one = Complex64::new(1.0, 0.0);
        let valid = signed_area(&fa).signum() == area_sign_a
            && signed_area(&fb).signum() == area_sign_b
            && point_in_polygon(minus_one, &fa)
            && point_in_polygon(plus_one, &fb)
            && !point_in_polygon(minus_one, &fb)
            && !point_in_polygon(plus_one, &fa);
        if !valid {
            continue;
        }
        let scale = chain_scale(&out_a).max(chain_scale(&out_b));
        for j in 0..=k {
            let gap = out_a[j].distance(&out_b[j]);
            if gap > WELD_TOL * scale {
                return Err(breakdown(&format!("shared point {j} misses its partner by {gap:e}")));
            }
        }
        let mut maps_a = form_a.maps.clone();
        maps_a.extend(&common);
        maps_a.push(Primitive::Mobius(norm));
        let mut maps_b = form_b.maps.clone();
        maps_b.extend(&common);
        maps_b.push(Primitive::Mobius(norm));
        return Ok(PartialWeld { a_images: out_a, b_images: out_b, maps_a, maps_b, normalization: tag });
    }
    Err(breakdown("no normalization keeps both welded domains bounded"))
}

fn breakdown(msg: &str) -> WeldError {
    WeldError::NumericalBreakdown(msg.to_string())
}

fn finite_all(points: &[ExtendedComplex]) -> Result<Vec<Complex64>, WeldError> {
    points
        .iter()
        .map(|p| p.finite().ok_or_else(|| breakdown("unexpected point at infinity")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn symmetric_axis_points_give_identity() {
        let t = mobius_align(ExtendedComplex::new(0.0, 1.0), ExtendedComplex::new(0.0, -1.0)).unwrap();
        for z in [Complex64::new(0.3, 0.7), Complex64::new(2.0, -1.0)] {
            assert!((t.apply(z.into()).unwrap_finite() - z).norm() < 1e-15);
        }
    }

    #[test]
    fn align_hits_targets() {
        let t = mobius_align(ExtendedComplex::new(0.0, 2.0), ExtendedComplex::new(0.0, -1.0)).unwrap();
        let up = t.apply(ExtendedComplex::new(0.0, 2.0)).unwrap_finite();
        let down = t.apply(ExtendedComplex::new(0.0, -1.0)).unwrap_finite();
        assert!((up - Complex64::new(0.0, 1.0)).norm() < 1e-14);
        assert!((down - Complex64::new(0.0, -1.0)).norm() < 1e-14);
        assert_eq!(t.apply(ExtendedComplex::new(0.0, 0.0)), ExtendedComplex::new(0.0, 0.0));
    }

    #[test]
    fn align_accepts_a_point_wrapped_through_infinity() {
        let (alpha, beta) = (ExtendedComplex::new(0.0, 2.0), ExtendedComplex::new(0.0, 5.0));
        let t = mobius_align(alpha, beta).unwrap();
        assert!((t.apply(alpha).unwrap_finite() - Complex64::new(0.0, 1.0)).norm() < 1e-14);
        assert!((t.apply(beta).unwrap_finite() - Complex64::new(0.0, -1.0)).norm() < 1e-14);
        assert!(t.apply(ExtendedComplex::new(0.1, 0.0)).unwrap_finite().re > 0.0);
        assert!(mobius_align(beta, alpha).is_err());
    }

    #[test]
    fn align_rejects_off_axis() {
        let r = mobius_align(ExtendedComplex::new(0.5, 2.0), ExtendedComplex::new(0.0, -1.0));
        assert!(matches!(r, Err(WeldError::BadAxisPoints { .. })));
    }

    #[test]
    fn geodesic_step_sends_xi_to_zero() {
        let xi = ExtendedComplex::new(0.7, -0.4);
        let g = geodesic_basic(xi, Branch::Plus).unwrap();
        assert!(g.apply(xi).unwrap_finite().norm() < 1e-7);
        assert!(matches!(geodesic_basic(ExtendedComplex::new(0.0, 0.0), Branch::Plus), Err(WeldError::ZeroXi)));
    }

    /// Upper and lower half disks sharing the diameter from 1 to -1.
    fn half_disks(n_arc: usize, n_diam: usize) -> (Vec<ExtendedComplex>, Vec<ExtendedComplex>) {
        let diam: Vec<Complex64> =
            (0..=n_diam).map(|i| Complex64::new(1.0 - 2.0 * i as f64 / n_diam as f64, 0.0)).collect();
        // A: upper half, counter-clockwise starting at -1 along the diameter towards 1.
        let mut a: Vec<Complex64> = diam.iter().rev().cloned().collect();
        for i in 1..n_arc {
            let t = PI * i as f64 / n_arc as f64;
            a.push(Complex64::new(t.cos(), t.sin()));
        }
        // B: lower half, clockwise starting at -1 along the diameter towards 1.
        let mut b: Vec<Complex64> = diam.iter().rev().cloned().collect();
        for i in 1..n_arc {
            let t = PI * i as f64 / n_arc as f64;
            b.push(Complex64::new(t.cos(), -t.sin()));
        }
        (a.into_iter().map(Into::into).collect(), b.into_iter().map(Into::into).collect())
    }

    #[test]
    fn disk_halves_weld_exactly() {
        let (a, b) = half_disks(40, 50);
        let w = partial_weld(&a, &b, 50, Complex64::new(0.0, 0.4), Complex64::new(0.0, -0.4)).unwrap();
        let scale = chain_scale(&w.a_images);
        for j in 0..=50 {
            assert!(w.a_images[j].distance(&w.b_images[j]) <= 1e-8 * scale);
        }
        let a_img = finite_all(&w.a_images).unwrap();
        assert!(signed_area(&a_img) > 0.0);
    }

    #[test]
    fn reflected_pair_is_mirror_symmetric() {
        let (a, _) = half_disks(30, 20);
        let b: Vec<ExtendedComplex> = a.iter().map(|z| z.unwrap_finite().conj().into()).collect();
        let anchor = Complex64::new(0.1, 0.3);
        let w = partial_weld(&a, &b, 20, anchor, anchor.conj()).unwrap();
        let scale = chain_scale(&w.a_images);
        for (za, zb) in w.a_images.iter().zip(&w.b_images) {
            let (za, zb) = (za.unwrap_finite(), zb.unwrap_finite());
            assert!((za + zb.conj()).norm() <= 1e-6 * scale);
        }
    }

    #[test]
    fn single_segment_weld() {
        let a: Vec<ExtendedComplex> =
            [(0.0, 0.0), (1.0, 0.0), (0.5, 0.8)].iter().map(|&(x, y)| ExtendedComplex::new(x, y)).collect();
        let b: Vec<ExtendedComplex> =
            [(0.0, 0.0), (1.0, 0.0), (0.5, -0.8)].iter().map(|&(x, y)| ExtendedComplex::new(x, y)).collect();
        let w = partial_weld(&a, &b, 1, Complex64::new(0.5, 0.3), Complex64::new(0.5, -0.3)).unwrap();
        assert!(w.a_images[0].distance(&w.b_images[0]) < 1e-12);
        assert!(w.a_images[1].distance(&w.b_images[1]) < 1e-12);
    }
}
