//! Extended-plane map primitives and the welding algorithms built from them.

mod extended;
mod intermediate;
mod maps;
mod multi;
mod partial;

pub use extended::ExtendedComplex;
pub use intermediate::{intermediate_form, IntermediateForm};
pub use maps::{Branch, MapChain, MobiusMap, Primitive};
pub use multi::{auxiliary_path, multiconnected_weld, MultiWeldInput, MultiWeldOutput, MultiWeldSide};
pub use partial::{geodesic_basic, mobius_align, partial_weld, PartialWeld, WeldNormalization};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeldError {
    #[error("points {alpha} and {beta} are not on the upper and lower imaginary axis")]
    BadAxisPoints { alpha: String, beta: String },
    #[error("geodesic step needs a nonzero finite point")]
    ZeroXi,
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("correspondence is not monotone along the chain: {0}")]
    MisorderedArc(String),
    #[error("auxiliary point {index} lies inside the polygon")]
    PathInsidePolygon { index: usize },
    #[error("chain too short: {0} points")]
    ChainTooShort(usize),
}

/// Chain diameter over finite points, used to scale tolerances.
pub fn chain_scale(points: &[ExtendedComplex]) -> f64 {
    let finite: Vec<_> = points.iter().filter_map(|p| p.finite()).collect();
    let mut best = 0.0f64;
    if finite.is_empty() {
        return 1.0;
    }
    let (mut lo_re, mut hi_re, mut lo_im, mut hi_im) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for z in &finite {
        lo_re = lo_re.min(z.re);
        hi_re = hi_re.max(z.re);
        lo_im = lo_im.min(z.im);
        hi_im = hi_im.max(z.im);
    }
    best = best.max(((hi_re - lo_re).powi(2) + (hi_im - lo_im).powi(2)).sqrt());
    if best > 0.0 {
        best
    } else {
        1.0
    }
}
