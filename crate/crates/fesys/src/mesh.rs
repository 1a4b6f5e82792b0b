//! Plane triangle meshes with exact rational vertex coordinates.
//!
//! A mesh couples the combinatorial simplicial complex of its triangles with
//! a coordinate for each vertex. Conformity is automatic: triangles sharing
//! vertex labels share the edges and vertices built from them. Edges carry
//! the global orientation from low vertex label to high vertex label, and
//! each triangle has a geometric orientation sign, the sign of the
//! determinant of its edge vectors in sorted-vertex order.

use crate::complex::{CellComplex, CellKey, ComplexError};
use crate::polyfield::{CtSplit, Edge, Pt, Triangle};
use crate::rat::{rat, rint};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("vertex {0} has no coordinate")]
    MissingCoordinate(usize),
    #[error("vertices {0} and {1} have the same coordinate")]
    DuplicateCoordinate(usize, usize),
    #[error("triangle on vertices {0:?} is degenerate")]
    Degenerate(Vec<usize>),
    #[error("cell {0} is not a vertex of this mesh")]
    NotAVertex(usize),
    #[error("cell {0} is not an edge of this mesh")]
    NotAnEdge(usize),
    #[error("cell {0} is not a triangle of this mesh")]
    NotATriangle(usize),
    #[error(transparent)]
    Complex(#[from] ComplexError),
}

/// A conforming triangle mesh in the rational plane.
#[derive(Clone, Debug)]
pub struct TriMesh {
    complex: Arc<CellComplex>,
    /// Coordinate per vertex cell id.
    coords: BTreeMap<usize, Pt>,
}

impl TriMesh {
    /// Build the mesh of the given triangles (as triples of vertex labels)
    /// with the given label coordinates. Labels may be sparse; all vertices
    /// referenced by a triangle must have distinct, nondegenerate
    /// coordinates.
    pub fn new(
        triangles: &[[usize; 3]],
        coords: &BTreeMap<usize, Pt>,
    ) -> Result<TriMesh, MeshError> {
        let tops: Vec<Vec<usize>> = triangles.iter().map(|t| t.to_vec()).collect();
        let complex = CellComplex::simplicial(&tops);
        let mut by_id = BTreeMap::new();
        let mut seen: BTreeMap<Pt, usize> = BTreeMap::new();
        for &vid in complex.cells_of_dim(0) {
            let label = vertex_label(&complex, vid);
            let pt = coords
                .get(&label)
                .ok_or(MeshError::MissingCoordinate(label))?;
            if let Some(&other) = seen.get(pt) {
                return Err(MeshError::DuplicateCoordinate(other, label));
            }
            seen.insert(pt.clone(), label);
            by_id.insert(vid, pt.clone());
        }
        let mesh = TriMesh {
            complex: Arc::new(complex),
            coords: by_id,
        };
        for &tid in mesh.complex.cells_of_dim(2) {
            if mesh.triangle(tid)?.signed_area2() == rint(0) {
                let labels = match mesh.complex.key(tid) {
                    CellKey::Simplex(vs) => vs.clone(),
                    _ => vec![],
                };
                return Err(MeshError::Degenerate(labels));
            }
        }
        Ok(mesh)
    }

    pub fn complex(&self) -> &CellComplex {
        &self.complex
    }

    pub fn complex_arc(&self) -> Arc<CellComplex> {
        Arc::clone(&self.complex)
    }

    /// The coordinate of a vertex cell.
    pub fn vertex_coord(&self, vid: usize) -> Result<&Pt, MeshError> {
        self.coords.get(&vid).ok_or(MeshError::NotAVertex(vid))
    }

    /// The original label of a vertex cell.
    pub fn vertex_label(&self, vid: usize) -> Result<usize, MeshError> {
        if self.complex.dim(vid) != 0 || self.complex.id_of(self.complex.key(vid)) != Some(vid) {
            return Err(MeshError::NotAVertex(vid));
        }
        Ok(vertex_label(&self.complex, vid))
    }

    /// The vertex cell id of an original label.
    pub fn vertex_id(&self, label: usize) -> Option<usize> {
        self.complex.id_of(&CellKey::simplex(vec![label]))
    }

    /// The directed segment of an edge cell, running from its lower vertex
    /// label to its higher one.
    pub fn edge(&self, eid: usize) -> Result<Edge, MeshError> {
        let (a, b) = match self.complex.key(eid) {
            CellKey::Simplex(vs) if vs.len() == 2 => (vs[0], vs[1]),
            _ => return Err(MeshError::NotAnEdge(eid)),
        };
        let pa = self
            .coords
            .get(&self.vertex_id(a).ok_or(MeshError::NotAnEdge(eid))?)
            .ok_or(MeshError::NotAnEdge(eid))?;
        let pb = self
            .coords
            .get(&self.vertex_id(b).ok_or(MeshError::NotAnEdge(eid))?)
            .ok_or(MeshError::NotAnEdge(eid))?;
        Ok(Edge::new(pa.clone(), pb.clone()))
    }

    /// The geometric triangle of a 2-cell, vertices in sorted label order.
    pub fn triangle(&self, tid: usize) -> Result<Triangle, MeshError> {
        let vs = match self.complex.key(tid) {
            CellKey::Simplex(vs) if vs.len() == 3 => vs.clone(),
            _ => return Err(MeshError::NotATriangle(tid)),
        };
        let mut pts = Vec::with_capacity(3);
        for v in vs {
            let vid = self.vertex_id(v).ok_or(MeshError::NotATriangle(tid))?;
            pts.push(self.coords[&vid].clone());
        }
        Ok(Triangle::new([
            pts[0].clone(),
            pts[1].clone(),
            pts[2].clone(),
        ]))
    }

    /// Orientation sign of a triangle in sorted-vertex order: +1 if
    /// counterclockwise, -1 if clockwise.
    pub fn or_sign(&self, tid: usize) -> Result<i8, MeshError> {
        Ok(self.triangle(tid)?.orientation())
    }

    /// The Clough-Tocher split of a triangle about its isobarycenter.
    pub fn ct_split(&self, tid: usize) -> Result<CtSplit, MeshError> {
        Ok(CtSplit::new(self.triangle(tid)?))
    }
}

fn vertex_label(complex: &CellComplex, vid: usize) -> usize {
    match complex.key(vid) {
        CellKey::Simplex(vs) if vs.len() == 1 => vs[0],
        k => panic!("vertex cell with non-vertex key {k:?}"),
    }
}

/// The reference triangle (0,0), (1,0), (0,1).
pub fn reference_triangle_mesh() -> TriMesh {
    let coords = BTreeMap::from([
        (0, [rint(0), rint(0)]),
        (1, [rint(1), rint(0)]),
        (2, [rint(0), rint(1)]),
    ]);
    TriMesh::new(&[[0, 1, 2]], &coords).expect("reference triangle is valid")
}

/// The unit square split into two triangles along a diagonal.
pub fn square_mesh() -> TriMesh {
    let coords = BTreeMap::from([
        (0, [rint(0), rint(0)]),
        (1, [rint(1), rint(0)]),
        (2, [rint(1), rint(1)]),
        (3, [rint(0), rint(1)]),
    ]);
    TriMesh::new(&[[0, 1, 2], [0, 2, 3]], &coords).expect("square mesh is valid")
}

fn octagon(scale: i64) -> Vec<Pt> {
    [
        (1, 0),
        (1, 1),
        (0, 1),
        (-1, 1),
        (-1, 0),
        (-1, -1),
        (0, -1),
        (1, -1),
    ]
    .iter()
    .map(|&(x, y)| [rat(scale * x, 1), rat(scale * y, 1)])
    .collect()
}

/// A disk: a central vertex joined to an octagon ring, eight triangles.
pub fn disk_mesh() -> TriMesh {
    let mut coords = BTreeMap::from([(0, [rint(0), rint(0)])]);
    for (i, p) in octagon(1).into_iter().enumerate() {
        coords.insert(i + 1, p);
    }
    let triangles: Vec<[usize; 3]> = (0..8)
        .map(|i| [0, i + 1, (i + 1) % 8 + 1])
        .collect();
    TriMesh::new(&triangles, &coords).expect("disk mesh is valid")
}

/// An annulus between two octagon rings: sixteen vertices, thirty-two
/// edges, sixteen triangles, Euler characteristic zero.
pub fn annulus_mesh() -> TriMesh {
    let mut coords = BTreeMap::new();
    for (i, p) in octagon(1).into_iter().enumerate() {
        coords.insert(i, p);
    }
    for (i, p) in octagon(2).into_iter().enumerate() {
        coords.insert(8 + i, p);
    }
    let mut triangles = Vec::new();
    for i in 0..8 {
        let j = (i + 1) % 8;
        triangles.push([i, j, 8 + i]);
        triangles.push([j, 8 + j, 8 + i]);
    }
    TriMesh::new(&triangles, &coords).expect("annulus mesh is valid")
}
