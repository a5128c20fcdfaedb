//! Free-boundary conformal and quasi-conformal flattening, and per-face Beltrami coefficients.
//!
//! Unknowns are stacked as `x = (u_0..u_{n-1}, v_0..v_{n-1})`. Quadratic forms are written so
//! that `E_A(u) = ½ uᵀ L_μ u` is the μ-weighted Dirichlet energy, `xᵀ Ā x` is the signed image
//! area and `E_QC = ½ xᵀ (diag(L_μ, L_μ) − 2Ā) x`.

use crate::mesh::TriangleMesh;
use crate::sparse::{ReducedSolver, SolveError, SymmetricTriplets};
use num_complex::Complex64;
use thiserror::Error;

/// Beltrami coefficients must satisfy `|μ| < 1 − MU_EPS`.
pub const MU_EPS: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlattenError {
    #[error("face {0} is degenerate")]
    DegenerateFace(usize),
    #[error("|mu| = {norm} on face {face} is not below 1 - {MU_EPS}")]
    MuOutOfRange { face: usize, norm: f64 },
    #[error("linear system failed: {0}")]
    SingularSystem(#[from] SolveError),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("outer loop has fewer than two vertices")]
    TooFewBoundaryVertices,
}

/// One complex coefficient per face.
#[derive(Clone, Debug, PartialEq)]
pub struct BeltramiField(Vec<Complex64>);

impl BeltramiField {
    pub fn new(values: Vec<Complex64>) -> Self {
        BeltramiField(values)
    }

    pub fn zero(face_count: usize) -> Self {
        BeltramiField(vec![Complex64::new(0.0, 0.0); face_count])
    }

    pub fn values(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_norm(&self) -> f64 {
        self.0.iter().map(|m| m.norm()).fold(0.0, f64::max)
    }

    pub fn validate(&self, face_count: usize) -> Result<(), FlattenError> {
        if self.0.len() != face_count {
            return Err(FlattenError::LengthMismatch { expected: face_count, got: self.0.len() });
        }
        for (face, m) in self.0.iter().enumerate() {
            let norm = m.norm();
            if !(norm < 1.0 - MU_EPS) {
                return Err(FlattenError::MuOutOfRange { face, norm });
            }
        }
        Ok(())
    }
}

/// Per-vertex planar coordinates `u + iv`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanarEmbedding {
    pub uv: Vec<Complex64>,
}

impl PlanarEmbedding {
    pub fn new(uv: Vec<Complex64>) -> Self {
        PlanarEmbedding { uv }
    }

    fn from_stacked(x: &[f64]) -> Self {
        let n = x.len() / 2;
        PlanarEmbedding { uv: (0..n).map(|i| Complex64::new(x[i], x[n + i])).collect() }
    }

    pub fn stacked(&self) -> Vec<f64> {
        self.uv.iter().map(|z| z.re).chain(self.uv.iter().map(|z| z.im)).collect()
    }
}

/// Per-face Beltrami coefficient and Jacobian sign of a piecewise linear map.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceDistortion {
    pub mu: Vec<Complex64>,
    pub jacobian_sign: Vec<i8>,
}

impl FaceDistortion {
    pub fn flipped_count(&self) -> usize {
        self.jacobian_sign.iter().filter(|&&s| s < 0).count()
    }

    pub fn field(&self) -> BeltramiField {
        BeltramiField(self.mu.clone())
    }
}

/// A face's corners in some planar chart.
pub type FaceChart = [Complex64; 3];

/// Isometric per-face frames of a (possibly curved) mesh.
pub fn isometric_charts(mesh: &TriangleMesh) -> Vec<FaceChart> {
    (0..mesh.face_count()).map(|f| mesh.face_frame(f)).collect()
}

/// Face corners taken from a planar embedding.
pub fn embedding_charts(mesh: &TriangleMesh, uv: &[Complex64]) -> Vec<FaceChart> {
    mesh.faces().iter().map(|f| [uv[f[0]], uv[f[1]], uv[f[2]]]).collect()
}

fn signed_area(c: &FaceChart) -> f64 {
    0.5 * ((c[1] - c[0]).conj() * (c[2] - c[0])).im
}

fn is_degenerate(c: &FaceChart) -> bool {
    let longest = (0..3).map(|i| (c[(i + 1) % 3] - c[i]).norm_sqr()).fold(0.0, f64::max);
    !(signed_area(c).abs() > 1e-14 * longest)
}

/// Gradients of the three hat functions of a chart, as complex numbers `∂x + i∂y`.
fn hat_gradients(c: &FaceChart) -> [Complex64; 3] {
    let two_a = 2.0 * signed_area(c);
    let i = Complex64::new(0.0, 1.0);
    [0, 1, 2].map(|k| i * (c[(k + 2) % 3] - c[(k + 1) % 3]) / two_a)
}

/// `(α, β)` with `f(z) = αz + βz̄ + const` mapping `source` onto `image`; `None` if `source` is degenerate.
pub fn face_affine(source: &FaceChart, image: &FaceChart) -> Option<(Complex64, Complex64)> {
    let e1 = source[1] - source[0];
    let e2 = source[2] - source[0];
    let d1 = image[1] - image[0];
    let d2 = image[2] - image[0];
    let det = e1 * e2.conj() - e2 * e1.conj();
    if det.norm() == 0.0 || is_degenerate(source) {
        return None;
    }
    Some(((d1 * e2.conj() - d2 * e1.conj()) / det, (e1 * d2 - e2 * d1) / det))
}

fn corner_cot(a: [f64; 3], b: [f64; 3]) -> f64 {
    let c = crate::mesh::cross(a, b);
    crate::mesh::dot(a, b) / crate::mesh::norm(c)
}

/// Cotangent Laplacian from 3D edge lengths: `uᵀ L u = ∫ |∇u|²`.
pub fn cotan_laplacian(mesh: &TriangleMesh) -> Result<SymmetricTriplets, FlattenError> {
    use crate::mesh::sub;
    let p = mesh.positions();
    let mut l = SymmetricTriplets::new(mesh.vertex_count());
    for (fi, f) in mesh.faces().iter().enumerate() {
        let area2 = crate::mesh::norm(crate::mesh::cross(sub(p[f[1]], p[f[0]]), sub(p[f[2]], p[f[0]])));
        if !(area2 > 0.0) {
            return Err(FlattenError::DegenerateFace(fi));
        }
        for k in 0..3 {
            let (o, i, j) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
            let w = 0.5 * corner_cot(sub(p[i], p[o]), sub(p[j], p[o]));
            l.add_sym(i, j, -w);
            l.add(i, i, w);
            l.add(j, j, w);
        }
    }
    Ok(l)
}

/// Boundary form `Q` with `xᵀ Q x = ½ Σ (u_i v_j − u_j v_i)` over boundary edges `i → j`.
///
/// Inner loops run clockwise, so they subtract the areas of the holes.
pub fn area_form_boundary(mesh: &TriangleMesh) -> SymmetricTriplets {
    let n = mesh.vertex_count();
    let mut q = SymmetricTriplets::new(2 * n);
    for lp in mesh.boundary_loops() {
        for k in 0..lp.len() {
            let (i, j) = (lp[k], lp[(k + 1) % lp.len()]);
            q.add_sym(i, n + j, 0.25);
            q.add_sym(j, n + i, -0.25);
        }
    }
    q
}

/// Face-sum form `Ā` with `xᵀ Ā x = Σ_T Area(T) (u_x v_y − u_y v_x)`, gradients taken in `source`.
pub fn area_form_faces(mesh: &TriangleMesh, source: &[Complex64]) -> Result<SymmetricTriplets, FlattenError> {
    let n = mesh.vertex_count();
    let mut a = SymmetricTriplets::new(2 * n);
    for (fi, f) in mesh.faces().iter().enumerate() {
        let c = [source[f[0]], source[f[1]], source[f[2]]];
        if is_degenerate(&c) {
            return Err(FlattenError::DegenerateFace(fi));
        }
        let area = signed_area(&c);
        let g = hat_gradients(&c);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    let cross = (g[i].conj() * g[j]).im;
                    a.add_sym(f[i], n + f[j], 0.5 * area * cross);
                }
            }
        }
    }
    Ok(a)
}

/// Symmetric 2×2 matrix `A(μ)` of the Beltrami-weighted Dirichlet energy.
pub fn beltrami_matrix(mu: Complex64) -> [[f64; 2]; 2] {
    let (rho, tau) = (mu.re, mu.im);
    let s = 1.0 / (1.0 - mu.norm_sqr());
    [
        [s * ((rho - 1.0).powi(2) + tau * tau), -2.0 * s * tau],
        [-2.0 * s * tau, s * ((1.0 + rho).powi(2) + tau * tau)],
    ]
}

/// FEM stiffness of `∫ ∇uᵀ A(μ) ∇u` over faces of `source`.
pub fn generalized_laplacian(
    mesh: &TriangleMesh,
    source: &[Complex64],
    mu: &BeltramiField,
) -> Result<SymmetricTriplets, FlattenError> {
    mu.validate(mesh.face_count())?;
    let mut l = SymmetricTriplets::new(mesh.vertex_count());
    for (fi, f) in mesh.faces().iter().enumerate() {
        let c = [source[f[0]], source[f[1]], source[f[2]]];
        if is_degenerate(&c) {
            return Err(FlattenError::DegenerateFace(fi));
        }
        let area = signed_area(&c).abs();
        let g = hat_gradients(&c);
        let a = beltrami_matrix(mu.values()[fi]);
        for i in 0..3 {
            let ag = [a[0][0] * g[i].re + a[0][1] * g[i].im, a[1][0] * g[i].re + a[1][1] * g[i].im];
            for j in 0..3 {
                l.add(f[j], f[i], area * (ag[0] * g[j].re + ag[1] * g[j].im));
            }
        }
    }
    Ok(l)
}

/// `M = diag(L_μ, L_μ) − 2Ā`.
pub fn qc_matrix(mesh: &TriangleMesh, source: &[Complex64], mu: &BeltramiField) -> Result<SymmetricTriplets, FlattenError> {
    let l = generalized_laplacian(mesh, source, mu)?;
    let a = area_form_faces(mesh, source)?;
    Ok(block_system(&l, &a))
}

fn block_system(l: &SymmetricTriplets, area: &SymmetricTriplets) -> SymmetricTriplets {
    let n = l.dim;
    let mut m = SymmetricTriplets::new(2 * n);
    m.extend(l, 0, 0, 1.0);
    m.extend(l, n, n, 1.0);
    m.extend(area, 0, 0, -2.0);
    m
}

/// Two vertices of the outer loop half a loop apart.
pub fn default_pins(mesh: &TriangleMesh) -> Result<[usize; 2], FlattenError> {
    let outer = mesh.outer_loop();
    if outer.len() < 2 {
        return Err(FlattenError::TooFewBoundaryVertices);
    }
    Ok([outer[0], outer[outer.len() / 2]])
}

fn solve_pinned(m: &SymmetricTriplets, pins: [(usize, Complex64); 2]) -> Result<PlanarEmbedding, FlattenError> {
    let n = m.dim / 2;
    let mut free = vec![true; 2 * n];
    let mut fixed = vec![0.0; 2 * n];
    for (v, z) in pins {
        free[v] = false;
        free[n + v] = false;
        fixed[v] = z.re;
        fixed[n + v] = z.im;
    }
    let solver = ReducedSolver::new(m, &free)?;
    let x = solver.solve(&vec![0.0; 2 * n], &fixed)?;
    Ok(PlanarEmbedding::from_stacked(&x))
}

fn default_targets(pins: [usize; 2]) -> [(usize, Complex64); 2] {
    [(pins[0], Complex64::new(0.0, 0.0)), (pins[1], Complex64::new(1.0, 0.0))]
}

/// Free-boundary conformal flattening: minimises Dirichlet energy minus image area.
pub fn dncp_flatten(mesh: &TriangleMesh) -> Result<PlanarEmbedding, FlattenError> {
    let l = cotan_laplacian(mesh)?;
    let q = area_form_boundary(mesh);
    solve_pinned(&block_system(&l, &q), default_targets(default_pins(mesh)?))
}

/// Free-boundary quasi-conformal flattening of a planar `source` with Beltrami coefficient `mu`.
pub fn lsqc_flatten(mesh: &TriangleMesh, source: &[Complex64], mu: &BeltramiField) -> Result<PlanarEmbedding, FlattenError> {
    lsqc_flatten_pinned(mesh, source, mu, default_targets(default_pins(mesh)?))
}

pub fn lsqc_flatten_pinned(
    mesh: &TriangleMesh,
    source: &[Complex64],
    mu: &BeltramiField,
    pins: [(usize, Complex64); 2],
) -> Result<PlanarEmbedding, FlattenError> {
    solve_pinned(&qc_matrix(mesh, source, mu)?, pins)
}

/// Beltrami coefficient of the piecewise linear map from `source` charts to `image`.
pub fn beltrami_per_face(
    mesh: &TriangleMesh,
    source: &[FaceChart],
    image: &[Complex64],
) -> Result<FaceDistortion, FlattenError> {
    let mut mu = Vec::with_capacity(mesh.face_count());
    let mut jacobian_sign = Vec::with_capacity(mesh.face_count());
    for (fi, f) in mesh.faces().iter().enumerate() {
        let img = [image[f[0]], image[f[1]], image[f[2]]];
        let (a, b) = face_affine(&source[fi], &img).ok_or(FlattenError::DegenerateFace(fi))?;
        mu.push(if a.norm() > 0.0 { b / a } else { Complex64::new(f64::INFINITY, 0.0) });
        jacobian_sign.push(if a.norm_sqr() > b.norm_sqr() { 1 } else { -1 });
    }
    Ok(FaceDistortion { mu, jacobian_sign })
}

/// Coefficient `ν` (on the image of `f`) such that `g ∘ f` has Beltrami coefficient `target`
/// whenever `g` has coefficient `ν`.
pub fn compose_beltrami(
    mesh: &TriangleMesh,
    source: &[FaceChart],
    image: &[Complex64],
    target: &BeltramiField,
) -> Result<BeltramiField, FlattenError> {
    target.validate(mesh.face_count())?;
    let mut nu = Vec::with_capacity(mesh.face_count());
    for (fi, f) in mesh.faces().iter().enumerate() {
        let img = [image[f[0]], image[f[1]], image[f[2]]];
        let (a, b) = face_affine(&source[fi], &img).ok_or(FlattenError::DegenerateFace(fi))?;
        let mu_f = b / a;
        let theta = a.conj() / a;
        let t = target.values()[fi];
        nu.push((t - mu_f) / (theta * (1.0 - mu_f.conj() * t)));
    }
    let nu = BeltramiField(nu);
    nu.validate(mesh.face_count())?;
    Ok(nu)
}

/// Beltrami coefficient of `g ∘ f` from those of `f` and `g` (pulled back to the face).
pub fn composed_coefficient(mu_f: Complex64, f_z: Complex64, mu_g: Complex64) -> Complex64 {
    let theta = f_z.conj() / f_z;
    (mu_f + mu_g * theta) / (1.0 + mu_f.conj() * mu_g * theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn tri(points: [[f64; 3]; 3]) -> TriangleMesh {
        TriangleMesh::new(points.to_vec(), vec![[0, 1, 2]]).unwrap()
    }

    fn dense(m: &SymmetricTriplets) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; m.dim]; m.dim];
        for &(r, c, v) in &m.entries {
            d[r][c] += v;
        }
        d
    }

    #[test]
    fn equilateral_cotan_weights() {
        let m = tri([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 3f64.sqrt() / 2.0, 0.0]]);
        let d = dense(&cotan_laplacian(&m).unwrap());
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 / 3f64.sqrt() } else { -1.0 / (2.0 * 3f64.sqrt()) };
                assert!((d[i][j] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn right_isoceles_cotan_weights() {
        let m = tri([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let d = dense(&cotan_laplacian(&m).unwrap());
        // the hypotenuse is opposite the right angle (cot 90° = 0); legs see cot 45° = 1
        assert!(d[1][2].abs() < 1e-15);
        assert!((d[0][1] + 0.5).abs() < 1e-15);
        assert!((d[0][2] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn real_half_gives_diagonal_matrix() {
        let a = beltrami_matrix(Complex64::new(0.5, 0.0));
        assert!((a[0][0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((a[1][1] - 3.0).abs() < 1e-15);
        assert_eq!(a[0][1], 0.0);
    }

    #[test]
    fn zero_mu_reproduces_cotan_laplacian() {
        let m = fixtures::disk(1.0, 0.25);
        let uv = m.planar_points();
        let a = dense(&cotan_laplacian(&m).unwrap());
        let b = dense(&generalized_laplacian(&m, &uv, &BeltramiField::zero(m.face_count())).unwrap());
        for i in 0..m.vertex_count() {
            assert!(a[i].iter().sum::<f64>().abs() < 1e-12);
            for j in 0..m.vertex_count() {
                assert!((a[i][j] - b[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn green_forms_on_squares() {
        let square = TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let x = PlanarEmbedding::new(square.planar_points()).stacked();
        assert!((area_form_boundary(&square).bilinear(&x, &x) - 1.0).abs() < 1e-15);

        // 4×4 square with the central 2×2 block removed, scaled to the unit square
        let mut pos = Vec::new();
        for j in 0..5 {
            for i in 0..5 {
                if (i, j) != (2, 2) {
                    pos.push([i as f64 / 4.0, j as f64 / 4.0, 0.0]);
                }
            }
        }
        let id = |v: usize| if v > 12 { v - 1 } else { v };
        let mut faces = Vec::new();
        for j in 0..4 {
            for i in 0..4 {
                if (1..3).contains(&i) && (1..3).contains(&j) {
                    continue;
                }
                let v = j * 5 + i;
                faces.push([id(v), id(v + 1), id(v + 6)]);
                faces.push([id(v), id(v + 6), id(v + 5)]);
            }
        }
        let annulus = TriangleMesh::new(pos, faces).unwrap();
        let x = PlanarEmbedding::new(annulus.planar_points()).stacked();
        let value = area_form_boundary(&annulus).bilinear(&x, &x);
        assert!((value - 0.75).abs() < 1e-12, "{value}");

        let n = square.vertex_count();
        let same: Vec<f64> = (0..n).map(|i| i as f64 * 0.3).chain((0..n).map(|i| i as f64 * 0.3)).collect();
        assert!(area_form_boundary(&square).bilinear(&same, &same).abs() < 1e-15);
    }

    #[test]
    fn face_form_measures_source_area_and_flips_with_swap() {
        let m = fixtures::disk(1.0, 0.2);
        let uv = m.planar_points();
        let total: f64 = (0..m.face_count()).map(|f| m.face_area(f)).sum();
        let a = area_form_faces(&m, &uv).unwrap();
        let x = PlanarEmbedding::new(uv.clone()).stacked();
        assert!((a.bilinear(&x, &x) - total).abs() < 1e-12);
        let swapped: Vec<Complex64> = uv.iter().map(|z| Complex64::new(z.im, z.re)).collect();
        let y = PlanarEmbedding::new(swapped).stacked();
        assert!((a.bilinear(&y, &y) + total).abs() < 1e-12);
    }

    #[test]
    fn affine_stretch_has_mu_one_third() {
        let m = fixtures::disk(1.0, 0.3);
        let charts = isometric_charts(&m);
        let stretched: Vec<Complex64> = m.planar_points().iter().map(|z| Complex64::new(2.0 * z.re, z.im)).collect();
        let d = beltrami_per_face(&m, &charts, &stretched).unwrap();
        for mu in &d.mu {
            assert!((mu - Complex64::new(1.0 / 3.0, 0.0)).norm() < 1e-12);
        }
        let rot = Complex64::from_polar(1.7, 0.9);
        let rotated: Vec<Complex64> = m.planar_points().iter().map(|z| rot * z).collect();
        let d = beltrami_per_face(&m, &charts, &rotated).unwrap();
        assert!(d.mu.iter().all(|mu| mu.norm() < 1e-12));
        assert_eq!(d.flipped_count(), 0);
    }

    #[test]
    fn planar_input_flattens_conformally() {
        for m in [fixtures::disk(1.0, 0.1), fixtures::flat_annulus(48, 8, 0.4, 1.0)] {
            let flat = dncp_flatten(&m).unwrap();
            let d = beltrami_per_face(&m, &isometric_charts(&m), &flat.uv).unwrap();
            let mean = d.mu.iter().map(|z| z.norm()).sum::<f64>() / d.mu.len() as f64;
            assert!(mean < 1e-8, "mean |mu| = {mean}");
        }
    }

    #[test]
    fn stretch_coefficient_on_square_grid_gives_affine_map() {
        let m = fixtures::square_grid(12);
        let uv = m.planar_points();
        let mu = BeltramiField::new(vec![Complex64::new(1.0 / 3.0, 0.0); m.face_count()]);
        let out = lsqc_flatten(&m, &uv, &mu).unwrap();
        let want: Vec<Complex64> = uv.iter().map(|z| Complex64::new(2.0 * z.re, z.im)).collect();
        let (s, t) = crate::geometry::fit_similarity(&out.uv, &want);
        let err = out.uv.iter().zip(&want).map(|(z, w)| (s * z + t - w).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn composition_coefficient_round_trips() {
        let m = fixtures::square_grid(7);
        assert!(m.face_count() >= 98);
        let source = isometric_charts(&m);
        let image: Vec<Complex64> = m
            .planar_points()
            .iter()
            .map(|z| z + 0.2 * z * z + Complex64::new(0.0, 0.1) * z.conj())
            .collect();
        let target = BeltramiField::new(fixtures::smooth_beltrami(&m, 0.5, 3));
        let nu = compose_beltrami(&m, &source, &image, &target).unwrap();
        for (fi, f) in m.faces().iter().enumerate() {
            let img = [image[f[0]], image[f[1]], image[f[2]]];
            // g(w) = w + ν w̄ has coefficient ν; compose it with f on this face
            let g_img = img.map(|w| w + nu.values()[fi] * w.conj());
            let (a, b) = face_affine(&source[fi], &g_img).unwrap();
            assert!((b / a - target.values()[fi]).norm() < 1e-6);
        }
        let same = beltrami_per_face(&m, &source, &image).unwrap().field();
        let zero = compose_beltrami(&m, &source, &image, &same).unwrap();
        assert!(zero.max_norm() < 1e-12);
    }

    #[test]
    fn out_of_range_mu_is_rejected() {
        let m = fixtures::square_grid(3);
        let mut values = vec![Complex64::new(0.0, 0.0); m.face_count()];
        values[4] = Complex64::new(0.0, 0.9995);
        let err = generalized_laplacian(&m, &m.planar_points(), &BeltramiField::new(values)).unwrap_err();
        assert!(matches!(err, FlattenError::MuOutOfRange { face: 4, .. }));
    }
}
