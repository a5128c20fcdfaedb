//! Dirichlet stitching of welded submeshes, global assembly and distortion metrics.

use crate::flatten::{
    beltrami_per_face, compose_beltrami, generalized_laplacian, isometric_charts, BeltramiField, FaceChart,
    FlattenError, PlanarEmbedding,
};
use crate::geometry::circularity;
use crate::koebe::LoopCircularity;
use crate::mesh::{Submesh, TriangleMesh};
use crate::sparse::{ReducedSolver, SolveError, SymmetricTriplets};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

/// Cut vertices whose copies disagree by more than this fraction of the diameter are rejected.
pub const SEAM_TOL: f64 = 1e-6;

/// Automorphism parameters are searched in `|α| ≤ 1 − ALPHA_MARGIN`.
pub const ALPHA_MARGIN: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssembleError {
    #[error("linear system failed: {0}")]
    SingularSystem(#[from] SolveError),
    #[error("boundary vertex {0} has no prescribed value")]
    MissingBoundaryValue(usize),
    #[error("cut vertex {vertex} copies disagree by {distance:e} (tolerance {tolerance:e})")]
    SeamMismatch { vertex: usize, distance: f64, tolerance: f64 },
    #[error("vertex {0} belongs to no submesh")]
    UncoveredVertex(usize),
    #[error("face {0} is degenerate")]
    DegenerateFace(usize),
    #[error(transparent)]
    Flatten(FlattenError),
}

impl From<FlattenError> for AssembleError {
    fn from(e: FlattenError) -> Self {
        match e {
            FlattenError::DegenerateFace(f) => AssembleError::DegenerateFace(f),
            FlattenError::SingularSystem(s) => AssembleError::SingularSystem(s),
            other => AssembleError::Flatten(other),
        }
    }
}

fn split(values: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    (values.iter().map(|z| z.re).collect(), values.iter().map(|z| z.im).collect())
}

fn solve_dirichlet(
    matrix: &SymmetricTriplets,
    fixed: &[Option<Complex64>],
) -> Result<Vec<Complex64>, AssembleError> {
    let n = matrix.dim;
    let free: Vec<bool> = fixed.iter().map(|v| v.is_none()).collect();
    let values: Vec<Complex64> = fixed.iter().map(|v| v.unwrap_or_default()).collect();
    if free.iter().all(|f| !f) {
        return Ok(values);
    }
    let solver = ReducedSolver::new(matrix, &free)?;
    let (fu, fv) = split(&values);
    let zero = vec![0.0; n];
    let u = solver.solve(&zero, &fu)?;
    let v = solver.solve(&zero, &fv)?;
    Ok((0..n).map(|i| Complex64::new(u[i], v[i])).collect())
}

fn dirichlet_data(mesh: &TriangleMesh, boundary_values: &[(usize, Complex64)]) -> Result<Vec<Option<Complex64>>, AssembleError> {
    let mut fixed = vec![None; mesh.vertex_count()];
    for &(v, z) in boundary_values {
        fixed[v] = Some(z);
    }
    for lp in mesh.boundary_loops() {
        if let Some(&v) = lp.iter().find(|&&v| fixed[v].is_none()) {
            return Err(AssembleError::MissingBoundaryValue(v));
        }
    }
    Ok(fixed)
}

/// Discrete harmonic map of the planar `source` with the given values on (at least) every boundary vertex.
pub fn laplace_dirichlet(
    mesh: &TriangleMesh,
    source: &[Complex64],
    boundary_values: &[(usize, Complex64)],
) -> Result<PlanarEmbedding, AssembleError> {
    let fixed = dirichlet_data(mesh, boundary_values)?;
    let l = generalized_laplacian(mesh, source, &BeltramiField::zero(mesh.face_count()))?;
    Ok(PlanarEmbedding::new(solve_dirichlet(&l, &fixed)?))
}

/// Relative residual of the interior rows of the cotangent Laplacian of `source` applied to `uv`:
/// `‖(L x)_I‖ / ‖(|L| |x|)_I‖` over both coordinates.
pub fn harmonic_residual(mesh: &TriangleMesh, source: &[Complex64], uv: &[Complex64]) -> Result<f64, AssembleError> {
    let l = generalized_laplacian(mesh, source, &BeltramiField::zero(mesh.face_count()))?;
    let mut on_boundary = vec![false; mesh.vertex_count()];
    for lp in mesh.boundary_loops() {
        for &v in lp {
            on_boundary[v] = true;
        }
    }
    let n = mesh.vertex_count();
    let mut r = vec![Complex64::default(); n];
    let mut s = vec![(0.0, 0.0); n];
    for (row, col, v) in l.compressed() {
        r[row] += v * uv[col];
        s[row].0 += (v * uv[col].re).abs();
        s[row].1 += (v * uv[col].im).abs();
    }
    let (mut num, mut den) = (0.0, 0.0);
    for i in (0..n).filter(|&i| !on_boundary[i]) {
        num += r[i].norm_sqr();
        den += s[i].0 * s[i].0 + s[i].1 * s[i].1;
    }
    Ok(if den > 0.0 { (num / den).sqrt() } else { 0.0 })
}

/// Outcome of one correction attempt.
#[derive(Clone, Debug, PartialEq)]
pub struct QcCorrection {
    pub embedding: PlanarEmbedding,
    pub error_before: f64,
    pub error_after: f64,
    pub accepted: bool,
}

fn mean_error(mesh: &TriangleMesh, charts: &[FaceChart], uv: &[Complex64], target: &BeltramiField) -> Result<f64, AssembleError> {
    let d = beltrami_per_face(mesh, charts, uv)?;
    let total: f64 = d.mu.iter().zip(target.values()).map(|(a, b)| (a - b).norm()).sum();
    Ok(total / mesh.face_count().max(1) as f64)
}

/// Re-solves the interior of `map` so that the composite map from `charts` has coefficient closer
/// to `target`, keeping the boundary fixed. The result is kept only if the mean error drops.
pub fn qc_correction(
    mesh: &TriangleMesh,
    charts: &[FaceChart],
    map: &PlanarEmbedding,
    target: &BeltramiField,
) -> Result<QcCorrection, AssembleError> {
    let error_before = mean_error(mesh, charts, &map.uv, target)?;
    let rejected = |error_after| QcCorrection { embedding: map.clone(), error_before, error_after, accepted: false };
    let nu = match compose_beltrami(mesh, charts, &map.uv, target) {
        Ok(nu) => nu,
        Err(FlattenError::MuOutOfRange { face, norm }) => {
            log::warn!("qc correction skipped: |nu| = {norm} on face {face}");
            return Ok(rejected(error_before));
        }
        Err(e) => return Err(e.into()),
    };
    let boundary: Vec<(usize, Complex64)> =
        mesh.boundary_loops().iter().flatten().map(|&v| (v, map.uv[v])).collect();
    let fixed = dirichlet_data(mesh, &boundary)?;
    let l = generalized_laplacian(mesh, &map.uv, &nu)?;
    let corrected = solve_dirichlet(&l, &fixed)?;
    let error_after = match mean_error(mesh, charts, &corrected, target) {
        Ok(e) => e,
        Err(AssembleError::DegenerateFace(_)) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    if error_after < error_before {
        Ok(QcCorrection { embedding: PlanarEmbedding::new(corrected), error_before, error_after, accepted: true })
    } else {
        Ok(rejected(error_after))
    }
}

/// Parent-mesh coordinates assembled from per-submesh maps.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalParameterization {
    pub uv: Vec<Complex64>,
    pub submesh_maps: Vec<PlanarEmbedding>,
    /// Largest distance between copies of a cut vertex, relative to the diameter of `uv`.
    pub seam_mismatch: f64,
    pub stages: Vec<String>,
}

/// Averages the copies of every parent vertex after checking they agree.
pub fn assemble_global(
    vertex_count: usize,
    submeshes: &[Submesh],
    maps: Vec<PlanarEmbedding>,
) -> Result<GlobalParameterization, AssembleError> {
    let mut first: Vec<Option<Complex64>> = vec![None; vertex_count];
    let mut sum = vec![Complex64::default(); vertex_count];
    let mut count = vec![0usize; vertex_count];
    let mut worst = (0usize, 0.0f64);
    for (sub, map) in submeshes.iter().zip(&maps) {
        for (local, &parent) in sub.to_parent.iter().enumerate() {
            let z = map.uv[local];
            match first[parent] {
                None => first[parent] = Some(z),
                Some(w) => {
                    let d = (z - w).norm();
                    if d > worst.1 {
                        worst = (parent, d);
                    }
                }
            }
            sum[parent] += z;
            count[parent] += 1;
        }
    }
    if let Some(v) = count.iter().position(|&c| c == 0) {
        return Err(AssembleError::UncoveredVertex(v));
    }
    let uv: Vec<Complex64> = sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect();
    let scale = crate::geometry::diameter(&uv).max(f64::MIN_POSITIVE);
    if worst.1 > SEAM_TOL * scale {
        return Err(AssembleError::SeamMismatch { vertex: worst.0, distance: worst.1, tolerance: SEAM_TOL * scale });
    }
    Ok(GlobalParameterization { uv, submesh_maps: maps, seam_mismatch: worst.1 / scale, stages: Vec::new() })
}

/// Similarity sending the circle fitted to `outer` onto the unit circle.
pub fn normalize_to_unit_disk(uv: &mut [Complex64], outer: &[usize]) {
    let pts: Vec<Complex64> = outer.iter().map(|&v| uv[v]).collect();
    let (c, r, _, _) = circularity(&pts);
    if r > 0.0 {
        for z in uv.iter_mut() {
            *z = (*z - c) / r;
        }
    }
}

/// Per-face deviation from the target coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct BeltramiError {
    pub per_face: Vec<Complex64>,
    pub mean: f64,
    pub flipped_count: usize,
}

impl BeltramiError {
    pub fn mean_over(&self, faces: &[usize]) -> f64 {
        if faces.is_empty() {
            return 0.0;
        }
        faces.iter().map(|&f| self.per_face[f].norm()).sum::<f64>() / faces.len() as f64
    }
}

/// `e_T = μ_Φ − μ` in per-face isometric frames and its mean modulus. Not a relative error.
pub fn beltrami_error(mesh: &TriangleMesh, target: &BeltramiField, uv: &[Complex64]) -> Result<BeltramiError, AssembleError> {
    let d = beltrami_per_face(mesh, &isometric_charts(mesh), uv)?;
    let per_face: Vec<Complex64> = d.mu.iter().zip(target.values()).map(|(a, b)| a - b).collect();
    let mean = per_face.iter().map(|e| e.norm()).sum::<f64>() / per_face.len().max(1) as f64;
    Ok(BeltramiError { per_face, mean, flipped_count: d.flipped_count() })
}

/// Fixed-bin histogram of `d_area` with the end bins absorbing the tails.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

const HIST_BINS: usize = 20;
const HIST_RANGE: f64 = 2.5;

impl Histogram {
    fn of(values: &[f64]) -> Self {
        let width = 2.0 * HIST_RANGE / HIST_BINS as f64;
        let edges = (0..=HIST_BINS).map(|k| -HIST_RANGE + k as f64 * width).collect();
        let mut counts = vec![0; HIST_BINS];
        for &v in values.iter().filter(|v| !v.is_nan()) {
            let k = ((v + HIST_RANGE) / width).floor().clamp(0.0, (HIST_BINS - 1) as f64);
            counts[k as usize] += 1;
        }
        Histogram { edges, counts }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AreaDistortion {
    pub d_area: Vec<f64>,
    pub mean_abs: f64,
    pub histogram: Histogram,
}

impl AreaDistortion {
    pub fn sum_squares(&self) -> f64 {
        self.d_area.iter().filter(|d| d.is_finite()).map(|d| d * d).sum()
    }
}

fn image_area(uv: &[Complex64], f: &[usize; 3]) -> f64 {
    0.5 * ((uv[f[1]] - uv[f[0]]).conj() * (uv[f[2]] - uv[f[0]])).im.abs()
}

/// `d_area(T) = log((|Φ(T)| / |Φ(S)|) / (|T| / |S|))`.
pub fn area_distortion(mesh: &TriangleMesh, uv: &[Complex64]) -> Result<AreaDistortion, AssembleError> {
    let source: Vec<f64> = (0..mesh.face_count()).map(|f| mesh.face_area(f)).collect();
    if let Some(f) = source.iter().position(|&a| !(a > 0.0)) {
        return Err(AssembleError::DegenerateFace(f));
    }
    let image: Vec<f64> = mesh.faces().iter().map(|f| image_area(uv, f)).collect();
    Ok(distortion_from_areas(&source, &image))
}

fn distortion_from_areas(source: &[f64], image: &[f64]) -> AreaDistortion {
    let s_total: f64 = source.iter().sum();
    let i_total: f64 = image.iter().sum();
    let d_area: Vec<f64> = source.iter().zip(image).map(|(s, i)| ((i / i_total) / (s / s_total)).ln()).collect();
    let finite: Vec<f64> = d_area.iter().copied().filter(|d| d.is_finite()).collect();
    let mean_abs = finite.iter().map(|d| d.abs()).sum::<f64>() / finite.len().max(1) as f64;
    AreaDistortion { histogram: Histogram::of(&d_area), d_area, mean_abs }
}

/// `z -> (z − α) / (1 − ᾱ z)`.
pub fn disk_automorphism(alpha: Complex64, z: Complex64) -> Complex64 {
    (z - alpha) / (1.0 - alpha.conj() * z)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MobiusCorrection {
    pub uv: Vec<Complex64>,
    pub alpha: Complex64,
    pub objective_before: f64,
    pub objective_after: f64,
}

const GRID: usize = 17;
const STEP_TOL: f64 = 1e-10;
const MOVES_PER_LEVEL: usize = 64;

/// Disk automorphism minimising `Σ d_area²`, found on a polar grid and refined locally.
pub fn mobius_area_correct(mesh: &TriangleMesh, uv: &[Complex64]) -> Result<MobiusCorrection, AssembleError> {
    let source: Vec<f64> = (0..mesh.face_count()).map(|f| mesh.face_area(f)).collect();
    if let Some(f) = source.iter().position(|&a| !(a > 0.0)) {
        return Err(AssembleError::DegenerateFace(f));
    }
    let objective = |alpha: Complex64| {
        let moved: Vec<Complex64> = uv.iter().map(|&z| disk_automorphism(alpha, z)).collect();
        let image: Vec<f64> = mesh.faces().iter().map(|f| image_area(&moved, f)).collect();
        distortion_from_areas(&source, &image).sum_squares()
    };
    let before = objective(Complex64::default());
    let best = search_disk_automorphism(objective);
    let alpha = best.0;
    let uv = uv.iter().map(|&z| disk_automorphism(alpha, z)).collect();
    Ok(MobiusCorrection { uv, alpha, objective_before: before, objective_after: best.1 })
}

/// Minimises `objective` over disk automorphism parameters `|α| ≤ 1 − ALPHA_MARGIN`: a polar
/// grid, then a pattern search whose stencil moves until it stops improving before shrinking.
/// Returns the best α and its value; α = 0 is a candidate.
pub fn search_disk_automorphism(objective: impl Fn(Complex64) -> f64) -> (Complex64, f64) {
    let r_max = 1.0 - ALPHA_MARGIN;
    let mut best = (Complex64::default(), objective(Complex64::default()));
    let consider = |alpha: Complex64, best: &mut (Complex64, f64)| {
        if alpha.norm() <= r_max {
            let value = objective(alpha);
            if value < best.1 {
                *best = (alpha, value);
            }
        }
    };
    for i in 1..GRID {
        let r = r_max * i as f64 / (GRID - 1) as f64;
        for k in 0..GRID {
            let theta = std::f64::consts::TAU * k as f64 / GRID as f64;
            consider(Complex64::from_polar(r, theta), &mut best);
        }
    }
    let mut step = r_max / (GRID - 1) as f64;
    while step > STEP_TOL {
        for _ in 0..MOVES_PER_LEVEL {
            let center = best.0;
            for a in -2i32..=2 {
                for b in -2i32..=2 {
                    if a != 0 || b != 0 {
                        consider(center + step * 0.5 * Complex64::new(a as f64, b as f64), &mut best);
                    }
                }
            }
            if best.0 == center {
                break;
            }
        }
        step *= 0.25;
    }
    best
}

/// Circularity of every boundary loop of `mesh` under `uv`: outer first, then holes.
pub fn loop_circularities(mesh: &TriangleMesh, uv: &[Complex64]) -> (LoopCircularity, Vec<LoopCircularity>) {
    let measure = |lp: &[usize]| LoopCircularity::measure(&lp.iter().map(|&v| uv[v]).collect::<Vec<_>>());
    (measure(mesh.outer_loop()), mesh.inner_loops().iter().map(|lp| measure(lp)).collect())
}
