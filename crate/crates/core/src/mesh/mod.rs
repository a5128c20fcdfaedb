//! Triangle meshes, topology validation, partitions and file formats.

pub mod io;
pub mod partition;
pub mod plan;

pub use io::{load_beltrami_csv, load_labels, load_mesh, write_obj_with_uv, MeshFormat};
pub use partition::{default_partition, extract_submeshes, repair_labels, PartitionLabeling, Submesh};
pub use plan::{build_weld_specs, ArcKind, WeldPlan, WeldSpec};

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("vertex index {index} out of range ({count} vertices)")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("non-manifold mesh: {0}")]
    NonManifold(String),
    #[error("wrong topology: {0}")]
    WrongTopology(String),
    #[error("face {0} has zero area")]
    DegenerateFace(usize),
    #[error("submesh {0} is not edge-connected")]
    DisconnectedSubmesh(usize),
    #[error("submesh {0} has more than one hole")]
    SubmeshWithTwoHoles(usize),
    #[error("labels cover {labels} faces but the mesh has {faces}")]
    LabelCount { labels: usize, faces: usize },
    #[error("no valid weld plan: {0}")]
    NoValidPlan(String),
}

/// Validated open triangle mesh of disk type with `k` holes.
///
/// Boundary loops follow the face orientation (the surface lies to their left); the first
/// loop is the outer one, chosen by largest perimeter.
#[derive(Clone, Debug)]
pub struct TriangleMesh {
    positions: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    boundary_loops: Vec<Vec<usize>>,
}

impl TriangleMesh {
    pub fn new(positions: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let count = positions.len();
        for f in &faces {
            for &v in f {
                if v >= count {
                    return Err(MeshError::IndexOutOfRange { index: v, count });
                }
            }
        }
        let mut mesh = TriangleMesh { positions, faces, boundary_loops: Vec::new() };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Builds a mesh from planar coordinates.
    pub fn from_planar(points: &[Complex64], faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        TriangleMesh::new(points.iter().map(|p| [p.re, p.im, 0.0]).collect(), faces)
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn boundary_loops(&self) -> &[Vec<usize>] {
        &self.boundary_loops
    }

    pub fn outer_loop(&self) -> &[usize] {
        &self.boundary_loops[0]
    }

    pub fn inner_loops(&self) -> &[Vec<usize>] {
        &self.boundary_loops[1..]
    }

    pub fn hole_count(&self) -> usize {
        self.boundary_loops.len() - 1
    }

    /// True when every vertex has zero z coordinate.
    pub fn is_planar(&self) -> bool {
        self.positions.iter().all(|p| p[2] == 0.0)
    }

    /// Planar coordinates `x + iy`, ignoring z.
    pub fn planar_points(&self) -> Vec<Complex64> {
        self.positions.iter().map(|p| Complex64::new(p[0], p[1])).collect()
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        let n = cross(sub(self.positions[b], self.positions[a]), sub(self.positions[c], self.positions[a]));
        0.5 * norm(n)
    }

    pub fn edge_count(&self) -> usize {
        let mut edges: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| (0..3).map(move |i| (f[i].min(f[(i + 1) % 3]), f[i].max(f[(i + 1) % 3]))))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count() as i64 - self.edge_count() as i64 + self.face_count() as i64
    }

    pub fn loop_perimeter(&self, lp: &[usize]) -> f64 {
        (0..lp.len())
            .map(|i| norm(sub(self.positions[lp[(i + 1) % lp.len()]], self.positions[lp[i]])))
            .sum()
    }

    /// Local 2D coordinates of a face's corners in its isometric frame.
    ///
    /// The frame's x axis is the global X axis projected into the face plane (Y when X is
    /// nearly normal to the face) and y completes a right-handed frame with the face normal.
    /// For faces in the xy plane with upward normals this is the identity chart.
    pub fn face_frame(&self, f: usize) -> [Complex64; 3] {
        let [a, b, c] = self.faces[f];
        let (pa, pb, pc) = (self.positions[a], self.positions[b], self.positions[c]);
        let n = cross(sub(pb, pa), sub(pc, pa));
        let nn = norm(n);
        let n = [n[0] / nn, n[1] / nn, n[2] / nn];
        let mut axis = [1.0, 0.0, 0.0];
        if n[0].abs() > 0.9 {
            axis = [0.0, 1.0, 0.0];
        }
        let d = dot(axis, n);
        let x = sub(axis, [n[0] * d, n[1] * d, n[2] * d]);
        let xl = norm(x);
        let x = [x[0] / xl, x[1] / xl, x[2] / xl];
        let y = cross(n, x);
        let local = |p: [f64; 3]| {
            let q = sub(p, pa);
            Complex64::new(dot(q, x), dot(q, y))
        };
        [Complex64::new(0.0, 0.0), local(pb), local(pc)]
    }

    fn validate(&mut self) -> Result<(), MeshError> {
        let nv = self.positions.len();
        if self.faces.is_empty() {
            return Err(MeshError::WrongTopology("mesh has no faces".into()));
        }
        let mut longest = 0.0f64;
        for f in &self.faces {
            for i in 0..3 {
                longest = longest.max(norm(sub(self.positions[f[(i + 1) % 3]], self.positions[f[i]])));
            }
        }
        for (i, f) in self.faces.iter().enumerate() {
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::DegenerateFace(i));
            }
            if self.face_area(i) <= 1e-14 * longest * longest {
                return Err(MeshError::DegenerateFace(i));
            }
        }
        let mut used = vec![false; nv];
        for f in &self.faces {
            for &v in f {
                used[v] = true;
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(MeshError::NonManifold(format!("vertex {v} belongs to no face")));
        }

        let mut half_edges: Vec<(usize, usize)> =
            self.faces.iter().flat_map(|f| (0..3).map(move |i| (f[i], f[(i + 1) % 3]))).collect();
        half_edges.sort_unstable();
        for w in half_edges.windows(2) {
            if w[0] == w[1] {
                return Err(MeshError::NonManifold(format!(
                    "edge {}-{} used twice in the same direction",
                    w[0].0, w[0].1
                )));
            }
        }
        let has = |u: usize, v: usize| half_edges.binary_search(&(u, v)).is_ok();
        let mut next = vec![usize::MAX; nv];
        for &(u, v) in &half_edges {
            if !has(v, u) {
                if next[u] != usize::MAX {
                    return Err(MeshError::NonManifold(format!("boundary pinches at vertex {u}")));
                }
                next[u] = v;
            }
        }
        let mut seen = vec![false; nv];
        let mut loops = Vec::new();
        for start in 0..nv {
            if next[start] == usize::MAX || seen[start] {
                continue;
            }
            let mut lp = Vec::new();
            let mut v = start;
            while !seen[v] {
                seen[v] = true;
                lp.push(v);
                v = next[v];
                if v == usize::MAX {
                    return Err(MeshError::NonManifold("open boundary chain".into()));
                }
            }
            if v != start {
                return Err(MeshError::NonManifold(format!("boundary loop through {v} does not close")));
            }
            loops.push(lp);
        }
        if loops.is_empty() {
            return Err(MeshError::WrongTopology("closed surface without boundary".into()));
        }
        let chi = nv as i64 - (half_edges.len() as i64 + loops.iter().map(|l| l.len() as i64).sum::<i64>()) / 2
            + self.faces.len() as i64;
        let expected = 2 - loops.len() as i64;
        if chi != expected {
            return Err(MeshError::WrongTopology(format!(
                "Euler characteristic {chi} but {} boundary loops need {expected}",
                loops.len()
            )));
        }
        let perimeters: Vec<f64> = loops.iter().map(|l| self.loop_perimeter(l)).collect();
        let mut outer = 0;
        for (i, p) in perimeters.iter().enumerate() {
            if *p > perimeters[outer] {
                outer = i;
            }
        }
        let outer_loop = loops.remove(outer);
        loops.insert(0, outer_loop);
        self.boundary_loops = loops;
        Ok(())
    }
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}
