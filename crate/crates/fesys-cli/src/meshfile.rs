//! The plain-text triangle mesh format and the built-in meshes.
//!
//! A mesh file is a sequence of lines. `v X Y` declares a vertex with exact
//! rational coordinates (`p/q` or a plain integer); vertices are numbered
//! 0, 1, 2, ... in order of appearance. `t i j k` declares a triangle by
//! three distinct vertex indices. `#` starts a comment that runs to the end
//! of the line; blank lines are ignored. Conformity needs no separate
//! check: triangles share an edge exactly when they name the same vertex
//! pair, and the complex is built from those incidences.
//!
//! The four built-in meshes (the reference triangle, a two-triangle square,
//! an eight-triangle disk, and a sixteen-triangle annulus with one hole)
//! ship as embedded text in this format, so every command can run without
//! external data.

use std::collections::BTreeMap;
use std::str::FromStr;

use num_bigint::BigInt;
use thiserror::Error;

use fesys::mesh::{MeshError, TriMesh};
use fesys::rat::Rat;

#[derive(Debug, Error)]
pub enum MeshFileError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("mesh has no triangles")]
    Empty,
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn parse_rational(tok: &str, line: usize) -> Result<Rat, MeshFileError> {
    let bad = |msg: String| MeshFileError::Parse { line, msg };
    let (n, d) = match tok.split_once('/') {
        Some((n, d)) => (n, d),
        None => (tok, "1"),
    };
    let n = BigInt::from_str(n).map_err(|_| bad(format!("bad rational `{tok}`")))?;
    let d = BigInt::from_str(d).map_err(|_| bad(format!("bad rational `{tok}`")))?;
    if d == BigInt::from(0) {
        return Err(bad(format!("zero denominator in `{tok}`")));
    }
    Ok(Rat::new(n, d))
}

/// Parse mesh text into a validated triangle mesh.
pub fn parse_mesh(text: &str) -> Result<TriMesh, MeshFileError> {
    let mut coords: BTreeMap<usize, [Rat; 2]> = BTreeMap::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let bad = |msg: String| MeshFileError::Parse { line, msg };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let kind = toks.next().expect("nonempty line has a first token");
        let rest: Vec<&str> = toks.collect();
        match kind {
            "v" => {
                if rest.len() != 2 {
                    return Err(bad(format!("`v` takes 2 coordinates, got {}", rest.len())));
                }
                let x = parse_rational(rest[0], line)?;
                let y = parse_rational(rest[1], line)?;
                coords.insert(coords.len(), [x, y]);
            }
            "t" => {
                if rest.len() != 3 {
                    return Err(bad(format!("`t` takes 3 indices, got {}", rest.len())));
                }
                let mut vs = [0usize; 3];
                for (slot, tok) in vs.iter_mut().zip(&rest) {
                    *slot = tok
                        .parse()
                        .map_err(|_| bad(format!("bad vertex index `{tok}`")))?;
                }
                if vs[0] == vs[1] || vs[0] == vs[2] || vs[1] == vs[2] {
                    return Err(bad(format!("repeated vertex index in `{content}`")));
                }
                triangles.push(vs);
            }
            other => return Err(bad(format!("unknown directive `{other}`"))),
        }
    }
    if triangles.is_empty() {
        return Err(MeshFileError::Empty);
    }
    let n = coords.len();
    for t in &triangles {
        for &v in t {
            if v >= n {
                return Err(MeshFileError::Parse {
                    line: 0,
                    msg: format!("vertex index {v} out of range (have {n} vertices)"),
                });
            }
        }
    }
    Ok(TriMesh::new(&triangles, &coords)?)
}

pub const REFERENCE_MESH: &str = "\
# reference triangle
v 0 0
v 1 0
v 0 1
t 0 1 2
";

pub const SQUARE_MESH: &str = "\
# unit square split along a diagonal
v 0 0
v 1 0
v 1 1
v 0 1
t 0 1 2
t 0 2 3
";

pub const DISK_MESH: &str = "\
# octagon disk around a center vertex
v 0 0
v 1 0
v 1 1
v 0 1
v -1 1
v -1 0
v -1 -1
v 0 -1
v 1 -1
t 0 1 2
t 0 2 3
t 0 3 4
t 0 4 5
t 0 5 6
t 0 6 7
t 0 7 8
t 0 8 1
";

pub const ANNULUS_MESH: &str = "\
# annulus between two octagon rings
v 1 0
v 1 1
v 0 1
v -1 1
v -1 0
v -1 -1
v 0 -1
v 1 -1
v 2 0
v 2 2
v 0 2
v -2 2
v -2 0
v -2 -2
v 0 -2
v 2 -2
t 0 1 8
t 1 9 8
t 1 2 9
t 2 10 9
t 2 3 10
t 3 11 10
t 3 4 11
t 4 12 11
t 4 5 12
t 5 13 12
t 5 6 13
t 6 14 13
t 6 7 14
t 7 15 14
t 7 0 15
t 0 8 15
";

/// Embedded mesh text for a built-in name, if the name is one.
pub fn builtin_mesh_text(name: &str) -> Option<&'static str> {
    match name {
        "reference" => Some(REFERENCE_MESH),
        "square" => Some(SQUARE_MESH),
        "disk" => Some(DISK_MESH),
        "annulus" => Some(ANNULUS_MESH),
        _ => None,
    }
}

/// Load a mesh from a built-in name or a file path.
pub fn load_mesh(spec: &str) -> Result<TriMesh, MeshFileError> {
    let text = match builtin_mesh_text(spec) {
        Some(t) => t.to_string(),
        None => std::fs::read_to_string(spec).map_err(|source| MeshFileError::Io {
            path: spec.to_string(),
            source,
        })?,
    };
    parse_mesh(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(m: &TriMesh) -> Vec<usize> {
        m.complex().counts()
    }

    #[test]
    fn builtin_texts_match_library_meshes() {
        let pairs: [(&str, TriMesh); 4] = [
            ("reference", fesys::mesh::reference_triangle_mesh()),
            ("square", fesys::mesh::square_mesh()),
            ("disk", fesys::mesh::disk_mesh()),
            ("annulus", fesys::mesh::annulus_mesh()),
        ];
        for (name, lib) in pairs {
            let parsed = parse_mesh(builtin_mesh_text(name).unwrap()).unwrap();
            assert_eq!(counts(&parsed), counts(&lib), "{name} cell counts");
            for &vid in parsed.complex().cells_of_dim(0) {
                assert_eq!(
                    parsed.vertex_coord(vid).unwrap(),
                    lib.vertex_coord(vid).unwrap(),
                    "{name} vertex {vid}"
                );
            }
        }
    }

    #[test]
    fn comments_blanks_and_fractions_parse() {
        let text = "\
# a skinny triangle
v 0 0   # origin
v 1/2 0

v 0 2/3
t 0 1 2
";
        let m = parse_mesh(text).unwrap();
        assert_eq!(counts(&m), vec![3, 3, 1]);
    }

    #[test]
    fn parse_errors_are_reported() {
        assert!(matches!(
            parse_mesh("v 0 0\nv 1 0\nv 0 1\n"),
            Err(MeshFileError::Empty)
        ));
        assert!(matches!(
            parse_mesh("v 0 0\nq 1 0\n"),
            Err(MeshFileError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_mesh("v 0 0\nv 1/0 0\n"),
            Err(MeshFileError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_mesh("v 0 0\nv 1 0\nv 0 1\nt 0 1 3\n"),
            Err(MeshFileError::Parse { .. })
        ));
        assert!(matches!(
            parse_mesh("v 0 0\nv 1 0\nv 0 1\nt 0 1 1\n"),
            Err(MeshFileError::Parse { line: 4, .. })
        ));
        // Degenerate triangle: caught by mesh validation.
        assert!(matches!(
            parse_mesh("v 0 0\nv 1 0\nv 2 0\nt 0 1 2\n"),
            Err(MeshFileError::Mesh(_))
        ));
    }
}
