use super::ExtendedComplex;
use num_complex::Complex64;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Relative tolerance for deciding that a value sits on a real slit.
const SLIT_TOL: f64 = 1e-9;

/// Values this close to the slit tip are treated as the tip. Replaying a zip on its own data
/// points leaves the previous tip at the square root of rounding error rather than at zero.
const TIP_TOL: f64 = 1e-7;

/// Side of the imaginary axis onto which an opened slit is sent: `(-1)^(1/2) = ±i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn unit(self) -> Complex64 {
        match self {
            Branch::Plus => I,
            Branch::Minus => -I,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Branch::Plus => Branch::Minus,
            Branch::Minus => Branch::Plus,
        }
    }
}

/// `z -> (a z + b) / (c z + d)` acting on the extended plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MobiusMap {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl MobiusMap {
    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        MobiusMap { a, b, c, d }
    }

    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        MobiusMap::new(one, zero, zero, one)
    }

    /// `z -> scale * z + shift`.
    pub fn affine(scale: Complex64, shift: Complex64) -> Self {
        MobiusMap::new(scale, shift, Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))
    }

    /// Sends `(p, q, r)` to `(-1, 1, ∞)`. `p` and `q` must be finite and distinct.
    pub fn to_minus_one_one_infinity(p: Complex64, q: Complex64, r: ExtendedComplex) -> Self {
        // z -> (z - p)/(q - p) * (q - r)/(z - r), then w -> 2w - 1
        let one = Complex64::new(1.0, 0.0);
        let base = match r {
            ExtendedComplex::Infinity => {
                MobiusMap::new(one / (q - p), -p / (q - p), Complex64::new(0.0, 0.0), one)
            }
            ExtendedComplex::Finite(r) => {
                let k = (q - r) / (q - p);
                MobiusMap::new(k, -k * p, one, -r)
            }
        };
        MobiusMap::affine(Complex64::new(2.0, 0.0), -one).compose(&base)
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &MobiusMap) -> Self {
        MobiusMap::new(
            self.a * inner.a + self.b * inner.c,
            self.a * inner.b + self.b * inner.d,
            self.c * inner.a + self.d * inner.c,
            self.c * inner.b + self.d * inner.d,
        )
    }

    pub fn inverse(&self) -> Self {
        MobiusMap::new(self.d, -self.b, -self.c, self.a)
    }

    pub fn apply(&self, z: ExtendedComplex) -> ExtendedComplex {
        match z {
            ExtendedComplex::Infinity => {
                if self.c == Complex64::new(0.0, 0.0) {
                    ExtendedComplex::Infinity
                } else {
                    ExtendedComplex::from_computed(self.a / self.c)
                }
            }
            ExtendedComplex::Finite(z) => {
                let den = self.c * z + self.d;
                if den == Complex64::new(0.0, 0.0) {
                    ExtendedComplex::Infinity
                } else {
                    ExtendedComplex::from_computed((self.a * z + self.b) / den)
                }
            }
        }
    }

    /// Derivative at a finite point that is not the pole.
    pub fn derivative(&self, z: Complex64) -> Complex64 {
        let den = self.c * z + self.d;
        (self.a * self.d - self.b * self.c) / (den * den)
    }
}

/// One conformal building block of a map chain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive {
    Mobius(MobiusMap),
    /// Principal square root.
    Sqrt,
    Square,
    /// `sqrt(z^2 - 1)` asymptotic to `z`; the slit `[0, 1]` opens onto the branch side of the imaginary axis.
    SqrtMinusOne(Branch),
    /// `sqrt(z^2 + 1)` asymptotic to `z`; the segment `[-i, i]` closes onto `[0, 1]`.
    SqrtPlusOne,
}

impl Primitive {
    pub fn apply(&self, z: ExtendedComplex) -> ExtendedComplex {
        match self {
            Primitive::Mobius(m) => m.apply(z),
            Primitive::Sqrt => map_finite(z, |w| w.sqrt()),
            Primitive::Square => map_finite(z, |w| w * w),
            Primitive::SqrtMinusOne(branch) => map_finite(z, |w| sqrt_minus_one(w, *branch)),
            Primitive::SqrtPlusOne => map_finite(z, sqrt_plus_one),
        }
    }

    /// Derivative at a finite point where the primitive is analytic.
    pub fn derivative(&self, z: Complex64) -> Complex64 {
        match self {
            Primitive::Mobius(m) => m.derivative(z),
            Primitive::Sqrt => 0.5 / z.sqrt(),
            Primitive::Square => 2.0 * z,
            Primitive::SqrtMinusOne(branch) => z / sqrt_minus_one(z, *branch),
            Primitive::SqrtPlusOne => z / sqrt_plus_one(z),
        }
    }

    pub fn inverse(&self) -> Primitive {
        match self {
            Primitive::Mobius(m) => Primitive::Mobius(m.inverse()),
            Primitive::Sqrt => Primitive::Square,
            Primitive::Square => Primitive::Sqrt,
            Primitive::SqrtMinusOne(_) => Primitive::SqrtPlusOne,
            Primitive::SqrtPlusOne => Primitive::SqrtMinusOne(Branch::Plus),
        }
    }
}

fn map_finite(z: ExtendedComplex, f: impl Fn(Complex64) -> Complex64) -> ExtendedComplex {
    match z {
        ExtendedComplex::Infinity => ExtendedComplex::Infinity,
        ExtendedComplex::Finite(w) => ExtendedComplex::from_computed(f(w)),
    }
}

pub(crate) fn sqrt_minus_one(z: Complex64, branch: Branch) -> Complex64 {
    let r = z.norm();
    if r <= TIP_TOL {
        return branch.unit();
    }
    if z.im.abs() <= SLIT_TOL * r && z.re >= 0.0 && z.re < 1.0 {
        return branch.unit() * (1.0 - z.re * z.re).sqrt();
    }
    z * (1.0 - (z * z).inv()).sqrt()
}

pub(crate) fn sqrt_plus_one(z: Complex64) -> Complex64 {
    if z.norm() == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let w = z * (1.0 + (z * z).inv()).sqrt();
    if w.re < 0.0 && w.re.abs() > w.im.abs() {
        -w
    } else {
        w
    }
}

/// Ordered composition of primitives; the first element is applied first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MapChain {
    pub steps: Vec<Primitive>,
}

impl MapChain {
    pub fn new() -> Self {
        MapChain { steps: Vec::new() }
    }

    pub fn push(&mut self, p: Primitive) {
        self.steps.push(p);
    }

    pub fn extend(&mut self, other: &MapChain) {
        self.steps.extend_from_slice(&other.steps);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn apply(&self, mut z: ExtendedComplex) -> ExtendedComplex {
        for step in &self.steps {
            z = step.apply(z);
        }
        z
    }

    /// Image and derivative at `z` by the chain rule; `None` if an intermediate image is infinite.
    pub fn apply_with_derivative(&self, z: Complex64) -> Option<(Complex64, Complex64)> {
        let mut w = z;
        let mut d = Complex64::new(1.0, 0.0);
        for step in &self.steps {
            d *= step.derivative(w);
            w = step.apply(ExtendedComplex::Finite(w)).finite()?;
        }
        Some((w, d))
    }

    pub fn apply_all(&self, points: &mut [ExtendedComplex]) {
        for p in points.iter_mut() {
            *p = self.apply(*p);
        }
    }

    pub fn inverse(&self) -> MapChain {
        MapChain {
            steps: self.steps.iter().rev().map(Primitive::inverse).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn mobius_sends_pole_to_infinity_and_infinity_to_ratio() {
        let m = MobiusMap::new(c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(-2.0, 0.0));
        assert!(m.apply(ExtendedComplex::new(2.0, 0.0)).is_infinite());
        assert_eq!(m.apply(ExtendedComplex::Infinity), ExtendedComplex::new(1.0, 0.0));
    }

    #[test]
    fn standard_normalization_hits_targets() {
        let p = c(0.3, 0.2);
        let q = c(-1.0, 2.0);
        let r = ExtendedComplex::new(4.0, -1.0);
        let m = MobiusMap::to_minus_one_one_infinity(p, q, r);
        assert!((m.apply(p.into()).unwrap_finite() - c(-1.0, 0.0)).norm() < 1e-14);
        assert!((m.apply(q.into()).unwrap_finite() - c(1.0, 0.0)).norm() < 1e-14);
        assert!(m.apply(r).is_infinite());
    }

    #[test]
    fn slit_opens_to_chosen_side() {
        let up = sqrt_minus_one(c(0.6, 0.0), Branch::Plus);
        let down = sqrt_minus_one(c(0.6, 0.0), Branch::Minus);
        assert!((up - c(0.0, 0.8)).norm() < 1e-15);
        assert!((down - c(0.0, -0.8)).norm() < 1e-15);
        assert_eq!(sqrt_minus_one(c(1.0, 0.0), Branch::Plus), c(0.0, 0.0));
    }

    #[test]
    fn imaginary_axis_keeps_its_sign() {
        let w = sqrt_minus_one(c(0.0, -2.0), Branch::Plus);
        assert!(w.re.abs() < 1e-15 && w.im < 0.0);
        let v = sqrt_plus_one(c(0.0, 0.5));
        assert!(v.re > 0.0 && v.im.abs() < 1e-15);
        let u = sqrt_plus_one(c(0.0, -3.0));
        assert!(u.im < 0.0);
    }

    #[test]
    fn chain_inverse_round_trips_in_right_half_plane() {
        let mut chain = MapChain::new();
        chain.push(Primitive::Mobius(MobiusMap::affine(c(0.5, 0.2), c(0.1, 0.0))));
        chain.push(Primitive::SqrtMinusOne(Branch::Plus));
        chain.push(Primitive::SqrtPlusOne);
        chain.push(Primitive::Square);
        let z = ExtendedComplex::new(1.3, 0.4);
        let back = chain.inverse().apply(chain.apply(z));
        assert!(back.distance(&z) < 1e-12);
    }
}
