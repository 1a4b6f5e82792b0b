//! Oriented cellular complexes and cubical refinement.
//!
//! Cells carry a structural key: a sorted vertex list for simplices, a
//! `(lower, upper)` pair of keys for cells of a cubical refinement, or a
//! custom name for hand-built examples. Cell ids are indices into a list
//! sorted by (dimension, key), so every ordering in the crate is
//! deterministic.
//!
//! Orientation conventions, fixed once and validated by the double-boundary
//! checks (and, downstream, by the Stokes suites):
//!
//! * Simplices are oriented by increasing vertex id; the boundary of
//!   `[v_0..v_k]` takes `[.. v_i ..]` with sign `(-1)^i`.
//! * A refinement cell `S(X, Y)` (one cell per incidence pair `X <= Y`, of
//!   dimension `dim Y - dim X`) is combinatorially a cube: the interval
//!   `[X, Y]` in the face poset is a Boolean lattice. Its edge directions
//!   are the atoms `Z` (cells covering `X` inside `Y`), ordered by a
//!   direction label that is stable under moving inside the interval. With
//!   directions `1..=k` in that order, the face not containing direction `m`
//!   gets sign `(-1)^m` and the face containing only direction `m` on the
//!   bottom gets sign `(-1)^(m+1)`; this is the usual cubical boundary and
//!   squares to zero.

use crate::rat::rint;
use crate::ratlin::Mat;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ComplexError {
    #[error("unknown cell: {0}")]
    UnknownCell(String),
    #[error("invalid incidence data: {0}")]
    BadIncidence(String),
    #[error("cell set is not closed under faces: missing {0}")]
    NotClosed(String),
    #[error("cannot refine complex containing custom cell {0}")]
    Unrefinable(String),
}

/// Structural identity of a cell.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum CellKey {
    /// Simplex as its sorted list of vertex ids.
    Simplex(Vec<usize>),
    /// Refinement cell `S(lower, upper)` for an incidence pair.
    Pair(Box<CellKey>, Box<CellKey>),
    /// Hand-built cell with no structural interpretation.
    Custom(String),
}

impl CellKey {
    pub fn simplex(mut vs: Vec<usize>) -> Self {
        vs.sort_unstable();
        vs.dedup();
        CellKey::Simplex(vs)
    }

    pub fn pair(lower: CellKey, upper: CellKey) -> Self {
        CellKey::Pair(Box::new(lower), Box::new(upper))
    }
}

impl std::fmt::Display for CellKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CellKey::Simplex(vs) => {
                let parts: Vec<String> = vs.iter().map(usize::to_string).collect();
                write!(f, "[{}]", parts.join(","))
            }
            CellKey::Pair(a, b) => write!(f, "S({a},{b})"),
            CellKey::Custom(s) => write!(f, "{s}"),
        }
    }
}

/// Direction label for one cover step in the face poset; used to order the
/// edge directions of a refinement cube consistently across its faces.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum DirLabel {
    V(usize),
    Lo(Box<DirLabel>),
    Up(Box<DirLabel>),
}

/// Label of the cover `lower <| upper` (dimension gap one) read off the keys.
fn cover_label(lower: &CellKey, upper: &CellKey) -> Result<DirLabel, ComplexError> {
    match (lower, upper) {
        (CellKey::Simplex(a), CellKey::Simplex(b)) => {
            let added: Vec<usize> = b.iter().copied().filter(|v| !a.contains(v)).collect();
            match added.as_slice() {
                [v] => Ok(DirLabel::V(*v)),
                _ => Err(ComplexError::BadIncidence(format!(
                    "{lower} is not a codimension-1 face of {upper}"
                ))),
            }
        }
        (CellKey::Pair(a1, b1), CellKey::Pair(a2, b2)) => {
            // (a1,b1) is a face of (a2,b2): the interval [a1,b1] sits inside
            // [a2,b2] with rank one less, so exactly one end moved.
            if b1 == b2 {
                Ok(DirLabel::Lo(Box::new(cover_label(a2, a1)?)))
            } else if a1 == a2 {
                Ok(DirLabel::Up(Box::new(cover_label(b1, b2)?)))
            } else {
                Err(ComplexError::BadIncidence(format!(
                    "{lower} is not a codimension-1 face of {upper}"
                )))
            }
        }
        _ => Err(ComplexError::Unrefinable(format!("{lower} / {upper}"))),
    }
}

#[derive(Clone, Debug)]
struct CellData {
    key: CellKey,
    dim: usize,
}

/// An oriented cellular complex, closed under faces.
#[derive(Clone, Debug)]
pub struct CellComplex {
    cells: Vec<CellData>,
    by_key: BTreeMap<CellKey, usize>,
    by_dim: Vec<Vec<usize>>,
    faces: Vec<Vec<(usize, i8)>>,
    cofaces: Vec<Vec<(usize, i8)>>,
    /// subcells[t] = ids of all faces of t, every codimension, including t.
    subcells: Vec<BTreeSet<usize>>,
}

impl CellComplex {
    /// Build a complex from explicit cells and signed face lists. The cell
    /// set must be closed; the signed incidence must satisfy the
    /// double-boundary identity.
    pub fn from_cells(
        spec: Vec<(CellKey, usize, Vec<(CellKey, i8)>)>,
    ) -> Result<Self, ComplexError> {
        let mut order: Vec<(usize, CellKey)> =
            spec.iter().map(|(k, d, _)| (*d, k.clone())).collect();
        order.sort();
        order.dedup();
        let by_key: BTreeMap<CellKey, usize> = order
            .iter()
            .enumerate()
            .map(|(i, (_, k))| (k.clone(), i))
            .collect();
        if by_key.len() != spec.len() {
            return Err(ComplexError::BadIncidence("duplicate cell key".into()));
        }
        let n = order.len();
        let mut cells = vec![
            CellData {
                key: CellKey::Custom(String::new()),
                dim: 0,
            };
            n
        ];
        let mut faces: Vec<Vec<(usize, i8)>> = vec![Vec::new(); n];
        for (key, dim, flist) in &spec {
            let id = by_key[key];
            cells[id] = CellData {
                key: key.clone(),
                dim: *dim,
            };
            let mut fs = Vec::with_capacity(flist.len());
            for (fkey, sign) in flist {
                let fid = *by_key
                    .get(fkey)
                    .ok_or_else(|| ComplexError::NotClosed(fkey.to_string()))?;
                if *sign != 1 && *sign != -1 {
                    return Err(ComplexError::BadIncidence(format!(
                        "orientation of ({key}, {fkey}) must be +1 or -1"
                    )));
                }
                fs.push((fid, *sign));
            }
            fs.sort_by_key(|&(fid, _)| fid);
            for w in fs.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(ComplexError::BadIncidence(format!(
                        "duplicate face in boundary of {key}"
                    )));
                }
            }
            faces[id] = fs;
        }
        for (key, dim, flist) in &spec {
            for (fkey, _) in flist {
                let fid = by_key[fkey];
                if cells[fid].dim + 1 != *dim {
                    return Err(ComplexError::BadIncidence(format!(
                        "face {fkey} of {key} has dimension {}, expected {}",
                        cells[fid].dim,
                        dim.wrapping_sub(1)
                    )));
                }
            }
        }

        let max_dim = cells.iter().map(|c| c.dim).max().unwrap_or(0);
        let mut by_dim = vec![Vec::new(); max_dim + 1];
        for (id, c) in cells.iter().enumerate() {
            by_dim[c.dim].push(id);
        }

        let mut cofaces: Vec<Vec<(usize, i8)>> = vec![Vec::new(); n];
        for (id, fs) in faces.iter().enumerate() {
            for &(fid, s) in fs {
                cofaces[fid].push((id, s));
            }
        }
        for cf in &mut cofaces {
            cf.sort_by_key(|&(id, _)| id);
        }

        let mut subcells: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for id in 0..n {
            // ids are sorted by dimension first, so faces precede cofaces
            let mut set = BTreeSet::new();
            set.insert(id);
            for &(fid, _) in &faces[id] {
                set.extend(subcells[fid].iter().copied());
            }
            subcells[id] = set;
        }

        let complex = CellComplex {
            cells,
            by_key,
            by_dim,
            faces,
            cofaces,
            subcells,
        };
        complex.check_double_boundary()?;
        Ok(complex)
    }

    /// The closure of the given simplices (vertex lists, order irrelevant).
    pub fn simplicial(tops: &[Vec<usize>]) -> Self {
        let mut keys: BTreeSet<Vec<usize>> = BTreeSet::new();
        for top in tops {
            let mut vs = top.clone();
            vs.sort_unstable();
            vs.dedup();
            let m = vs.len();
            assert!(m >= 1, "empty simplex");
            for mask in 1u64..(1 << m) {
                let sub: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| vs[i]).collect();
                keys.insert(sub);
            }
        }
        let spec = keys
            .iter()
            .map(|vs| {
                let mut fl = Vec::new();
                if vs.len() > 1 {
                    for i in 0..vs.len() {
                        let mut face = vs.clone();
                        face.remove(i);
                        let sign = if i % 2 == 0 { 1 } else { -1 };
                        fl.push((CellKey::Simplex(face), sign));
                    }
                }
                (CellKey::Simplex(vs.clone()), vs.len() - 1, fl)
            })
            .collect();
        Self::from_cells(spec).expect("simplicial closure is always a valid complex")
    }

    fn check_double_boundary(&self) -> Result<(), ComplexError> {
        for id in 0..self.cells.len() {
            let mut acc: BTreeMap<usize, i64> = BTreeMap::new();
            for &(fid, s1) in &self.faces[id] {
                for &(gid, s2) in &self.faces[fid] {
                    *acc.entry(gid).or_insert(0) += (s1 as i64) * (s2 as i64);
                }
            }
            if let Some((gid, v)) = acc.iter().find(|(_, v)| **v != 0) {
                return Err(ComplexError::BadIncidence(format!(
                    "double boundary of {} does not vanish at {} (sum {})",
                    self.key(id),
                    self.key(*gid),
                    v
                )));
            }
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn top_dim(&self) -> usize {
        self.by_dim.len().saturating_sub(1)
    }

    pub fn dim(&self, id: usize) -> usize {
        self.cells[id].dim
    }

    pub fn key(&self, id: usize) -> &CellKey {
        &self.cells[id].key
    }

    pub fn id_of(&self, key: &CellKey) -> Option<usize> {
        self.by_key.get(key).copied()
    }

    /// Cell ids of dimension `k`, ascending (empty slice above top).
    pub fn cells_of_dim(&self, k: usize) -> &[usize] {
        self.by_dim.get(k).map_or(&[], Vec::as_slice)
    }

    /// Number of cells per dimension.
    pub fn counts(&self) -> Vec<usize> {
        self.by_dim.iter().map(Vec::len).collect()
    }

    /// Codimension-1 faces with relative orientations, sorted by face id.
    pub fn faces_of(&self, id: usize) -> &[(usize, i8)] {
        &self.faces[id]
    }

    /// Checked variant of `faces_of` for external callers.
    pub fn boundary_faces(&self, id: usize) -> Result<Vec<(usize, i8)>, ComplexError> {
        self.faces
            .get(id)
            .cloned()
            .ok_or_else(|| ComplexError::UnknownCell(format!("#{id}")))
    }

    /// Codimension-1 cofaces with relative orientations, sorted by id.
    pub fn cofaces_of(&self, id: usize) -> &[(usize, i8)] {
        &self.cofaces[id]
    }

    /// Relative orientation o(t, f); zero unless f is a codim-1 face of t.
    pub fn rel_orientation(&self, t: usize, f: usize) -> i8 {
        self.faces[t]
            .iter()
            .find_map(|&(fid, s)| (fid == f).then_some(s))
            .unwrap_or(0)
    }

    /// Is `f` a subcell of `t` (any codimension, including f == t)?
    pub fn is_subcell(&self, f: usize, t: usize) -> bool {
        self.subcells[t].contains(&f)
    }

    /// All subcells of `t` including itself.
    pub fn subcells_of(&self, t: usize) -> &BTreeSet<usize> {
        &self.subcells[t]
    }

    /// Vertex ids (dimension-0 cell ids) of a cell.
    pub fn vertex_cells_of(&self, t: usize) -> Vec<usize> {
        self.subcells[t]
            .iter()
            .copied()
            .filter(|&c| self.dim(c) == 0)
            .collect()
    }

    /// Matrix of the coboundary C^k -> C^(k+1) (entry = relative orientation).
    pub fn coboundary_matrix(&self, k: usize) -> Mat {
        let rows = self.cells_of_dim(k + 1);
        let cols = self.cells_of_dim(k);
        let col_pos: BTreeMap<usize, usize> =
            cols.iter().enumerate().map(|(j, &id)| (id, j)).collect();
        let mut m = Mat::zero(rows.len(), cols.len());
        for (i, &t) in rows.iter().enumerate() {
            for &(f, s) in &self.faces[t] {
                m.set(i, col_pos[&f], rint(s as i64));
            }
        }
        m
    }

    /// The subcomplex on a closed set of cell ids.
    pub fn sub_complex(&self, ids: &BTreeSet<usize>) -> Result<CellComplex, ComplexError> {
        for &id in ids {
            for &(fid, _) in &self.faces[id] {
                if !ids.contains(&fid) {
                    return Err(ComplexError::NotClosed(self.key(fid).to_string()));
                }
            }
        }
        let spec = ids
            .iter()
            .map(|&id| {
                (
                    self.key(id).clone(),
                    self.dim(id),
                    self.faces[id]
                        .iter()
                        .map(|&(fid, s)| (self.key(fid).clone(), s))
                        .collect(),
                )
            })
            .collect();
        CellComplex::from_cells(spec)
    }

    /// The complex of all subcells of `t` (the closure of a single cell).
    pub fn closure_complex(&self, t: usize) -> CellComplex {
        self.sub_complex(&self.subcells[t].clone())
            .expect("closure is closed")
    }

    /// The boundary complex of `t`: its closure minus `t` itself.
    pub fn boundary_complex(&self, t: usize) -> CellComplex {
        let mut ids = self.subcells[t].clone();
        ids.remove(&t);
        self.sub_complex(&ids).expect("boundary is closed")
    }

    /// Atoms of the interval [x, y]: cells covering x that are subcells of y.
    fn interval_atoms(&self, x: usize, y: usize) -> Vec<usize> {
        self.cofaces[x]
            .iter()
            .map(|&(z, _)| z)
            .filter(|&z| self.is_subcell(z, y))
            .collect()
    }

    /// The cubical refinement: one cell per incidence pair `x <= y`, faces
    /// and signs per the cubical boundary described in the module docs.
    pub fn cubical_refinement(&self) -> Result<CellComplex, ComplexError> {
        let mut spec = Vec::new();
        for y in 0..self.n_cells() {
            for &x in &self.subcells[y] {
                let key = CellKey::pair(self.key(x).clone(), self.key(y).clone());
                let k = self.dim(y) - self.dim(x);
                let mut flist: Vec<(CellKey, i8)> = Vec::new();
                if k > 0 {
                    let mut atoms: Vec<(DirLabel, usize)> = self
                        .interval_atoms(x, y)
                        .into_iter()
                        .map(|z| Ok((cover_label(self.key(x), self.key(z))?, z)))
                        .collect::<Result<_, ComplexError>>()?;
                    atoms.sort();
                    debug_assert_eq!(atoms.len(), k, "interval of rank k has k atoms");
                    for (m, (_, z)) in atoms.iter().enumerate() {
                        let m1 = m + 1; // directions are 1-indexed
                        let lower_sign = if m1 % 2 == 0 { 1 } else { -1 };
                        // Face in direction m not containing the atom:
                        // the unique coatom w of [x,y] with z not below w.
                        let w = self.faces[y]
                            .iter()
                            .map(|&(w, _)| w)
                            .find(|&w| self.is_subcell(x, w) && !self.is_subcell(*z, w))
                            .expect("Boolean interval has a unique complementary coatom");
                        flist.push((
                            CellKey::pair(self.key(x).clone(), self.key(w).clone()),
                            lower_sign,
                        ));
                        flist.push((
                            CellKey::pair(self.key(*z).clone(), self.key(y).clone()),
                            -lower_sign,
                        ));
                    }
                }
                spec.push((key, k, flist));
            }
        }
        CellComplex::from_cells(spec)
    }
}

/// Convenience: the cochain complex of a complex with a trivial
/// one-dimensional fiber; `dims` are the per-degree cell counts.
pub fn trivial_cochain_complex(k: &CellComplex) -> crate::ratlin::MatrixComplex {
    let n = k.top_dim();
    let dims: Vec<usize> = (0..=n).map(|d| k.cells_of_dim(d).len()).collect();
    let maps: Vec<Mat> = (0..n).map(|d| k.coboundary_matrix(d)).collect();
    crate::ratlin::MatrixComplex::new(dims, maps).expect("coboundary squares to zero")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::Rat;

    fn triangle() -> CellComplex {
        CellComplex::simplicial(&[vec![0, 1, 2]])
    }

    #[test]
    fn triangle_boundary_signs() {
        let k = triangle();
        let t = k.id_of(&CellKey::simplex(vec![0, 1, 2])).unwrap();
        let faces = k.boundary_faces(t).unwrap();
        let named: Vec<(String, i8)> = faces
            .iter()
            .map(|&(f, s)| (k.key(f).to_string(), s))
            .collect();
        // Sorted by face id, i.e. by key: [0,1] < [0,2] < [1,2].
        assert_eq!(
            named,
            vec![
                ("[0,1]".to_string(), 1),
                ("[0,2]".to_string(), -1),
                ("[1,2]".to_string(), 1)
            ]
        );
    }

    #[test]
    fn vertex_has_empty_boundary() {
        let k = triangle();
        let v = k.id_of(&CellKey::simplex(vec![1])).unwrap();
        assert!(k.boundary_faces(v).unwrap().is_empty());
        assert!(k.boundary_complex(v).n_cells() == 0);
    }

    #[test]
    fn unknown_cell_id_is_an_error() {
        let k = triangle();
        assert!(matches!(
            k.boundary_faces(999),
            Err(ComplexError::UnknownCell(_))
        ));
    }

    #[test]
    fn closure_and_boundary_counts() {
        let k = triangle();
        let t = k.id_of(&CellKey::simplex(vec![0, 1, 2])).unwrap();
        assert_eq!(k.closure_complex(t).counts(), vec![3, 3, 1]);
        assert_eq!(k.boundary_complex(t).counts(), vec![3, 3]);
    }

    #[test]
    fn coboundary_squares_to_zero_on_simplicial_complexes() {
        for tops in [
            vec![vec![0, 1, 2]],
            vec![vec![0, 1, 2, 3]],
            vec![vec![0, 1, 2, 3, 4]],
            vec![vec![0, 1, 2], vec![1, 2, 3], vec![2, 3, 4]],
        ] {
            let k = CellComplex::simplicial(&tops);
            for d in 0..k.top_dim().saturating_sub(1) {
                let a = k.coboundary_matrix(d);
                let b = k.coboundary_matrix(d + 1);
                assert!(b.mul(&a).is_zero(), "delta delta != 0 at degree {d}");
            }
        }
    }

    #[test]
    fn triangle_coboundary_rows_have_two_signed_entries() {
        let k = triangle();
        let d0 = k.coboundary_matrix(0);
        assert_eq!((d0.rows(), d0.cols()), (3, 3));
        for i in 0..3 {
            let nonzero: Vec<Rat> = (0..3)
                .map(|j| d0.at(i, j).clone())
                .filter(|x| !crate::rat::Scalar::is_zero(x))
                .collect();
            assert_eq!(nonzero.len(), 2, "an edge has two vertices");
            assert_eq!(nonzero[0].clone() + nonzero[1].clone(), rint(0));
        }
        // Connected complex: rank of delta^0 is #vertices - 1.
        assert_eq!(d0.rank(), 2);
    }

    #[test]
    fn refinement_of_edge() {
        let k = CellComplex::simplicial(&[vec![0, 1]]);
        let r = k.cubical_refinement().unwrap();
        assert_eq!(r.counts(), vec![3, 2]);
    }

    #[test]
    fn refinement_of_triangle_counts_and_closure() {
        let k = triangle();
        let r = k.cubical_refinement().unwrap();
        assert_eq!(r.counts(), vec![7, 9, 3], "3 quads, 9 edges, 7 vertices");
        // Each quad has four boundary edges.
        for &q in r.cells_of_dim(2) {
            assert_eq!(r.faces_of(q).len(), 4);
        }
        let d0 = r.coboundary_matrix(0);
        let d1 = r.coboundary_matrix(1);
        assert!(d1.mul(&d0).is_zero());
    }

    #[test]
    fn refinement_of_simplices_squares_to_zero() {
        for tops in [vec![vec![0, 1, 2, 3]], vec![vec![0, 1, 2, 3, 4]]] {
            let k = CellComplex::simplicial(&tops);
            let r = k.cubical_refinement().unwrap();
            for d in 0..r.top_dim().saturating_sub(1) {
                let a = r.coboundary_matrix(d);
                let b = r.coboundary_matrix(d + 1);
                assert!(b.mul(&a).is_zero(), "refined delta delta != 0 at degree {d}");
            }
        }
    }

    #[test]
    fn refinement_of_a_refinement_is_still_a_complex() {
        // The tetrahedron refined twice: exercises pair-of-pair direction
        // labels; from_cells re-checks the double boundary identity.
        let k = CellComplex::simplicial(&[vec![0, 1, 2, 3]]);
        let r1 = k.cubical_refinement().unwrap();
        let r2 = r1.cubical_refinement().unwrap();
        for d in 0..r2.top_dim().saturating_sub(1) {
            let a = r2.coboundary_matrix(d);
            let b = r2.coboundary_matrix(d + 1);
            assert!(b.mul(&a).is_zero(), "double refinement delta delta != 0 at {d}");
        }
        assert!(r2.n_cells() > r1.n_cells());
    }

    #[test]
    fn tetra_refinement_has_four_top_cubes() {
        let k = CellComplex::simplicial(&[vec![0, 1, 2, 3]]);
        let r = k.cubical_refinement().unwrap();
        assert_eq!(r.cells_of_dim(3).len(), 4, "an n-simplex splits into n+1 cubes");
        // Pair counts by codimension for the tetrahedron closure:
        // codim 0: one per cell (15); codim 1: one per incidence (4*3 + 6*2 + 4*... )
        let mut by_codim = vec![0usize; 4];
        for id in 0..r.n_cells() {
            by_codim[r.dim(id)] += 1;
        }
        assert_eq!(by_codim, vec![15, 28, 18, 4]);
    }

    #[test]
    fn trivial_cochain_cohomology_of_closed_tetrahedron_boundary() {
        // The boundary of a tetrahedron is a 2-sphere: H = (1, 0, 1).
        let k = CellComplex::simplicial(&[
            vec![0, 1, 2],
            vec![0, 1, 3],
            vec![0, 2, 3],
            vec![1, 2, 3],
        ]);
        let c = trivial_cochain_complex(&k);
        assert_eq!(c.cohomology_dims(), vec![1, 0, 1]);
    }

    #[test]
    fn custom_covers_cannot_be_refined() {
        let spec = vec![
            (CellKey::Custom("a".into()), 0, vec![]),
            (CellKey::Custom("b".into()), 0, vec![]),
            (
                CellKey::Custom("e".into()),
                1,
                vec![
                    (CellKey::Custom("a".into()), -1),
                    (CellKey::Custom("b".into()), 1),
                ],
            ),
        ];
        let k = CellComplex::from_cells(spec).unwrap();
        assert!(matches!(
            k.cubical_refinement(),
            Err(ComplexError::Unrefinable(_))
        ));
    }

    #[test]
    fn bad_incidence_is_rejected() {
        // An edge with two faces of the same sign violates double boundary
        // only at higher dimension; here test the sign domain instead.
        let spec = vec![
            (CellKey::simplex(vec![0]), 0, vec![]),
            (CellKey::simplex(vec![1]), 0, vec![]),
            (
                CellKey::simplex(vec![0, 1]),
                1,
                vec![
                    (CellKey::simplex(vec![0]), 2),
                    (CellKey::simplex(vec![1]), 1),
                ],
            ),
        ];
        assert!(matches!(
            CellComplex::from_cells(spec),
            Err(ComplexError::BadIncidence(_))
        ));
    }

    #[test]
    fn double_boundary_violation_is_rejected() {
        // Triangle with one flipped edge sign fails the delta delta check.
        let spec = vec![
            (CellKey::simplex(vec![0]), 0, vec![]),
            (CellKey::simplex(vec![1]), 0, vec![]),
            (CellKey::simplex(vec![2]), 0, vec![]),
            (
                CellKey::simplex(vec![0, 1]),
                1,
                vec![
                    (CellKey::simplex(vec![0]), -1),
                    (CellKey::simplex(vec![1]), 1),
                ],
            ),
            (
                CellKey::simplex(vec![0, 2]),
                1,
                vec![
                    (CellKey::simplex(vec![0]), -1),
                    (CellKey::simplex(vec![2]), 1),
                ],
            ),
            (
                CellKey::simplex(vec![1, 2]),
                1,
                vec![
                    (CellKey::simplex(vec![1]), -1),
                    (CellKey::simplex(vec![2]), 1),
                ],
            ),
            (
                CellKey::simplex(vec![0, 1, 2]),
                2,
                vec![
                    (CellKey::simplex(vec![0, 1]), 1),
                    (CellKey::simplex(vec![0, 2]), 1), // should be -1
                    (CellKey::simplex(vec![1, 2]), 1),
                ],
            ),
        ];
        assert!(matches!(
            CellComplex::from_cells(spec),
            Err(ComplexError::BadIncidence(_))
        ));
    }
}
