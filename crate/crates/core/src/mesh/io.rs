use super::{MeshError, TriangleMesh};
use num_complex::Complex64;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Off,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "obj" => Some(MeshFormat::Obj),
            "off" => Some(MeshFormat::Off),
            _ => None,
        }
    }
}

fn read(path: &Path) -> Result<String, MeshError> {
    std::fs::read_to_string(path).map_err(|e| MeshError::Io(format!("{}: {e}", path.display())))
}

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64, MeshError> {
    let tok = tok.ok_or_else(|| MeshError::Parse { line, message: "missing number".into() })?;
    tok.parse::<f64>().map_err(|_| MeshError::Parse { line, message: format!("bad number '{tok}'") })
}

/// Reads an OBJ or OFF file; polygons are fan-triangulated.
pub fn load_mesh(path: &Path, format: Option<MeshFormat>) -> Result<TriangleMesh, MeshError> {
    let format = format
        .or_else(|| MeshFormat::from_path(path))
        .ok_or_else(|| MeshError::Io(format!("{}: unknown mesh format", path.display())))?;
    let text = read(path)?;
    let (positions, faces) = match format {
        MeshFormat::Obj => parse_obj(&text)?,
        MeshFormat::Off => parse_off(&text)?,
    };
    TriangleMesh::new(positions, faces)
}

/// Vertex positions and triangles as read from a file.
pub type RawMesh = (Vec<[f64; 3]>, Vec<[usize; 3]>);

pub fn parse_obj(text: &str) -> Result<RawMesh, MeshError> {
    let mut positions = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let mut toks = raw.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = parse_f64(toks.next(), line)?;
                let y = parse_f64(toks.next(), line)?;
                let z = match toks.next() {
                    Some(t) => parse_f64(Some(t), line)?,
                    None => 0.0,
                };
                positions.push([x, y, z]);
            }
            Some("f") => {
                let mut poly = Vec::new();
                for tok in toks {
                    let head = tok.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| MeshError::Parse { line, message: format!("bad index '{tok}'") })?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        positions.len() as i64 + idx
                    } else {
                        return Err(MeshError::Parse { line, message: "index 0 is invalid".into() });
                    };
                    if resolved < 0 {
                        return Err(MeshError::Parse { line, message: format!("index {idx} out of range") });
                    }
                    poly.push(resolved as usize);
                }
                if poly.len() < 3 {
                    return Err(MeshError::Parse { line, message: "face with fewer than 3 vertices".into() });
                }
                for k in 1..poly.len() - 1 {
                    faces.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok((positions, faces))
}

pub fn parse_off(text: &str) -> Result<RawMesh, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (line, header) = lines.next().ok_or(MeshError::Parse { line: 1, message: "empty file".into() })?;
    let mut counts_line = if header == "OFF" {
        None
    } else if let Some(rest) = header.strip_prefix("OFF") {
        Some((line, rest.trim()))
    } else {
        return Err(MeshError::Parse { line, message: "missing OFF header".into() });
    };
    if counts_line.is_none() {
        counts_line = lines.next();
    }
    let (line, counts) = counts_line.ok_or(MeshError::Parse { line, message: "missing counts".into() })?;
    let nums: Vec<usize> = counts
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| MeshError::Parse { line, message: format!("bad count '{t}'") }))
        .collect::<Result<_, _>>()?;
    if nums.len() < 2 {
        return Err(MeshError::Parse { line, message: "expected vertex and face counts".into() });
    }
    let (nv, nf) = (nums[0], nums[1]);
    let mut positions = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, l) = lines.next().ok_or(MeshError::Parse { line, message: "truncated vertex list".into() })?;
        let mut t = l.split_whitespace();
        positions.push([parse_f64(t.next(), line)?, parse_f64(t.next(), line)?, parse_f64(t.next(), line)?]);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (line, l) = lines.next().ok_or(MeshError::Parse { line, message: "truncated face list".into() })?;
        let idx: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| MeshError::Parse { line, message: format!("bad index '{t}'") }))
            .collect::<Result<_, _>>()?;
        let n = *idx.first().ok_or(MeshError::Parse { line, message: "empty face".into() })?;
        if n < 3 || idx.len() < n + 1 {
            return Err(MeshError::Parse { line, message: "malformed face".into() });
        }
        for k in 1..n - 1 {
            faces.push([idx[1], idx[k + 1], idx[k + 2]]);
        }
    }
    Ok((positions, faces))
}

/// One integer label per line, one line per face.
pub fn load_labels(path: &Path) -> Result<Vec<usize>, MeshError> {
    let text = read(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<usize>().map_err(|_| MeshError::Parse { line: i + 1, message: format!("bad label '{l}'") })
        })
        .collect()
}

/// Rows `face_index,re,im`; a non-numeric first row is treated as a header.
pub fn load_beltrami_csv(path: &Path, face_count: usize) -> Result<Vec<Complex64>, MeshError> {
    let text = read(path)?;
    let mut mu = vec![Complex64::new(0.0, 0.0); face_count];
    for (i, l) in text.lines().enumerate() {
        let l = l.trim();
        if l.is_empty() {
            continue;
        }
        let cols: Vec<&str> = l.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(MeshError::Parse { line: i + 1, message: "expected face_index,re,im".into() });
        }
        let Ok(face) = cols[0].parse::<usize>() else {
            if i == 0 {
                continue;
            }
            return Err(MeshError::Parse { line: i + 1, message: format!("bad face index '{}'", cols[0]) });
        };
        if face >= face_count {
            return Err(MeshError::IndexOutOfRange { index: face, count: face_count });
        }
        mu[face] = Complex64::new(parse_f64(Some(cols[1]), i + 1)?, parse_f64(Some(cols[2]), i + 1)?);
    }
    Ok(mu)
}

/// OBJ text with one `vt` per vertex and faces as `f v/vt`.
pub fn write_obj_with_uv(mesh: &TriangleMesh, uv: &[Complex64]) -> String {
    let mut out = String::with_capacity(64 * mesh.vertex_count());
    for p in mesh.positions() {
        let _ = writeln!(out, "v {:.17e} {:.17e} {:.17e}", p[0], p[1], p[2]);
    }
    for t in uv {
        let _ = writeln!(out, "vt {:.17e} {:.17e}", t.re, t.im);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {0}/{0} {1}/{1} {2}/{2}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obj_quads_are_split_and_negative_indices_resolve() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        let (p, f) = parse_obj(text).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(f, vec![[0, 1, 2], [0, 2, 3]]);
        let (_, g) = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3/1 -2/2 -1/3\n").unwrap();
        assert_eq!(g, vec![[0, 1, 2]]);
    }

    #[test]
    fn off_triangle_parses() {
        let (p, f) = parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(f, vec![[0, 1, 2]]);
    }

    #[test]
    fn bad_number_reports_line() {
        let err = parse_obj("v 0 0 0\nv x 0 0\n").unwrap_err();
        assert_eq!(err, MeshError::Parse { line: 2, message: "bad number 'x'".into() });
    }
}
