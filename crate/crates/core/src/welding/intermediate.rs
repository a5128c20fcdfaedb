use super::maps::{Branch, MapChain, MobiusMap, Primitive};
use super::{ExtendedComplex, WeldError};
use num_complex::Complex64;

/// Relative tolerance for membership of the imaginary axis.
pub(crate) const AXIS_TOL: f64 = 1e-8;

/// Chain images after the half-way geodesic transform, with the maps that produced them.
#[derive(Clone, Debug)]
pub struct IntermediateForm {
    pub images: Vec<ExtendedComplex>,
    pub maps: MapChain,
}

/// Zips `chain[0..=k]` onto one half of the imaginary axis.
///
/// Afterwards `images[0]` is infinity, `images[k]` is zero and `images[1..k]` lie on the
/// `branch` half of the axis in decreasing order of magnitude. The remaining points stay
/// in the closed right half-plane.
pub fn intermediate_form(
    chain: &[ExtendedComplex],
    k: usize,
    branch: Branch,
) -> Result<IntermediateForm, WeldError> {
    let n = chain.len();
    if n < 3 {
        return Err(WeldError::ChainTooShort(n));
    }
    if k == 0 || k >= n {
        return Err(WeldError::MisorderedArc(format!("marker {k} outside 1..{}", n - 1)));
    }
    let z0 = chain[0].finite().ok_or(WeldError::ZeroXi)?;
    let z1 = chain[1].finite().ok_or(WeldError::ZeroXi)?;
    if (z1 - z0).norm() == 0.0 {
        return Err(WeldError::NumericalBreakdown("first two chain points coincide".into()));
    }

    let mut images = chain.to_vec();
    let mut maps = MapChain::new();
    let mut step = |images: &mut Vec<ExtendedComplex>, p: Primitive| {
        for w in images.iter_mut() {
            *w = p.apply(*w);
        }
        maps.push(p);
    };

    let one = Complex64::new(1.0, 0.0);
    step(&mut images, Primitive::Mobius(MobiusMap::new(one, -z1, one, -z0)));
    step(&mut images, Primitive::Sqrt);
    images[0] = ExtendedComplex::Infinity;
    images[1] = ExtendedComplex::new(0.0, 0.0);

    for j in 2..=k {
        let xi = match images[j] {
            ExtendedComplex::Finite(z) if z.norm() > 0.0 => z,
            _ => return Err(WeldError::ZeroXi),
        };
        step(&mut images, Primitive::Mobius(geodesic_normalizer(xi)));
        step(&mut images, Primitive::SqrtMinusOne(branch));
        images[j] = ExtendedComplex::new(0.0, 0.0);
        snap_to_axis(&mut images[1..j], None)?;
    }

    if let ExtendedComplex::Finite(tail) = images[0] {
        let zero = Complex64::new(0.0, 0.0);
        step(&mut images, Primitive::Mobius(MobiusMap::new(one, zero, -tail.inv(), one)));
        images[0] = ExtendedComplex::Infinity;
        snap_to_axis(&mut images[1..k], Some(branch))?;
    }

    for (i, w) in images.iter().enumerate().skip(k + 1) {
        if let ExtendedComplex::Finite(z) = w {
            if z.re < -AXIS_TOL * z.norm().max(1e-300) {
                return Err(WeldError::NumericalBreakdown(format!(
                    "point {i} left the right half-plane ({z})"
                )));
            }
        }
    }
    Ok(IntermediateForm { images, maps })
}

/// `L_ξ(z) = (Re ξ/|ξ|²) z / (1 + i (Im ξ/|ξ|²) z)`, which fixes 0 and the imaginary axis and sends ξ to 1.
pub(crate) fn geodesic_normalizer(xi: Complex64) -> MobiusMap {
    let r2 = xi.norm_sqr();
    let c = xi.re / r2;
    let d = xi.im / r2;
    MobiusMap::new(
        Complex64::new(c, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, d),
        Complex64::new(1.0, 0.0),
    )
}

/// Projects zipped points onto the imaginary axis after checking they are already there.
///
/// With `Some(branch)` the points must also lie on that half of the axis. Mid-way through a
/// zip they may legitimately wrap through infinity onto the other half, so callers pass `None` there.
pub(crate) fn snap_to_axis(points: &mut [ExtendedComplex], branch: Option<Branch>) -> Result<(), WeldError> {
    for w in points.iter_mut() {
        if let ExtendedComplex::Finite(z) = *w {
            let r = z.norm();
            if z.re.abs() > AXIS_TOL * r || branch.is_some_and(|b| z.im * b.sign() <= 0.0) {
                return Err(WeldError::NumericalBreakdown(format!("zipped point {z} is off the expected imaginary axis")));
            }
            *w = ExtendedComplex::new(0.0, z.im);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle_chain(n: usize) -> Vec<ExtendedComplex> {
        (0..n)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                ExtendedComplex::new(t.cos(), t.sin())
            })
            .collect()
    }

    #[test]
    fn three_points_k1_land_on_axis() {
        let chain = circle_chain(3);
        let f = intermediate_form(&chain, 1, Branch::Plus).unwrap();
        assert!(f.images[0].is_infinite());
        assert_eq!(f.images[1], ExtendedComplex::new(0.0, 0.0));
    }

    #[test]
    fn semicircle_is_monotone_on_one_half_axis() {
        let mut chain: Vec<ExtendedComplex> = (0..50)
            .map(|i| {
                let t = std::f64::consts::PI * i as f64 / 49.0;
                ExtendedComplex::new(t.cos(), t.sin())
            })
            .collect();
        chain.push(ExtendedComplex::new(0.0, -0.5));
        for branch in [Branch::Plus, Branch::Minus] {
            let f = intermediate_form(&chain, 49, branch).unwrap();
            let mut prev = f64::INFINITY;
            for w in &f.images[1..49] {
                let z = w.unwrap_finite();
                assert!(z.re == 0.0);
                let h = z.im * branch.sign();
                assert!(h > 0.0 && h < prev);
                prev = h;
            }
            assert_eq!(f.images[49], ExtendedComplex::new(0.0, 0.0));
            assert!(f.images[50].unwrap_finite().re > 0.0);
        }
    }

    #[test]
    fn maps_reproduce_images() {
        let chain = circle_chain(40);
        let f = intermediate_form(&chain, 15, Branch::Plus).unwrap();
        for (i, z) in chain.iter().enumerate().skip(16) {
            let w = f.maps.apply(*z);
            assert!(w.distance(&f.images[i]) < 1e-9 * (1.0 + f.images[i].unwrap_finite().norm()));
        }
    }
}
