use num_complex::Complex64;
use std::fmt;

/// A point of the Riemann sphere: a finite complex value or the point at infinity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtendedComplex {
    Finite(Complex64),
    Infinity,
}

impl ExtendedComplex {
    pub fn new(re: f64, im: f64) -> Self {
        ExtendedComplex::Finite(Complex64::new(re, im))
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, ExtendedComplex::Infinity)
    }

    pub fn finite(&self) -> Option<Complex64> {
        match *self {
            ExtendedComplex::Finite(z) => Some(z),
            ExtendedComplex::Infinity => None,
        }
    }

    /// Finite value; panics on infinity. Use where the algorithm guarantees finiteness.
    pub fn unwrap_finite(&self) -> Complex64 {
        self.finite().expect("expected a finite point")
    }

    /// Wraps a computed value, mapping non-finite results to infinity.
    pub fn from_computed(z: Complex64) -> Self {
        if z.re.is_finite() && z.im.is_finite() {
            ExtendedComplex::Finite(z)
        } else {
            ExtendedComplex::Infinity
        }
    }

    pub fn distance(&self, other: &ExtendedComplex) -> f64 {
        match (self, other) {
            (ExtendedComplex::Finite(a), ExtendedComplex::Finite(b)) => (a - b).norm(),
            (ExtendedComplex::Infinity, ExtendedComplex::Infinity) => 0.0,
            _ => f64::INFINITY,
        }
    }
}

impl From<Complex64> for ExtendedComplex {
    fn from(z: Complex64) -> Self {
        ExtendedComplex::from_computed(z)
    }
}

impl fmt::Display for ExtendedComplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedComplex::Finite(z) => write!(f, "{}{:+}i", z.re, z.im),
            ExtendedComplex::Infinity => write!(f, "inf"),
        }
    }
}
