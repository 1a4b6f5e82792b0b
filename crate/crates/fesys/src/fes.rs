//! Finite element systems over discrete vector bundles.
//!
//! A finite element system assigns to every cell `T` of a complex a tower of
//! local spaces `A^0(T), ..., A^dim(T)(T)`, linked three ways: differentials
//! `d` within each cell, restrictions `r` to faces, and an evaluation `e_T`
//! from the top-degree space into the bundle fiber `L(T)`. The axioms are
//! `dd = 0`, `rd = dr`, functoriality of `r`, and the Stokes rule
//!
//! ```text
//! e_T(d u) = sum over facets T' of  o(T,T') t_{TT'} e_{T'}(r_{T'T} u),
//! ```
//!
//! which ties evaluation to the signed, transported evaluations on the
//! boundary. Everything here is stored as exact rational matrices against
//! chosen bases, so each axiom and each derived property (flabbiness, local
//! exactness, dimension counts, unisolvence, the global de Rham comparison)
//! is a decidable matrix identity.
//!
//! Glued spaces `A^k(S)` over a closed cell set `S` are inverse limits:
//! tuples of elements on the maximal cells agreeing under restriction to
//! shared faces, computed as the nullspace of the stacked compatibility
//! constraints. Extension (flabbiness), the dimension bound
//! `dim A^k(S) <= sum over T of dim A^k_0(T)`, and the cohomological
//! criteria are all phrased against these glued bases.

use crate::bundle::{BundleError, DiscreteBundle};
use crate::complex::{CellComplex, ComplexError};
use crate::mesh::TriMesh;
use crate::rat::{rat, rint, Rat};
use crate::ratlin::{induced_cohomology_iso, DegreeVerdict, LinError, Mat, MatrixComplex};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FesError {
    #[error("bundle is curved; finite element systems need a flat bundle")]
    CurvedBundle,
    #[error("dimension table covers {got} cells, complex has {expected}")]
    DimsCount { expected: usize, got: usize },
    #[error("cell {cell} lists {got} degrees, expected at least {expected}")]
    DegreeCount {
        cell: usize,
        expected: usize,
        got: usize,
    },
    #[error("missing differential on cell {cell} at degree {degree}")]
    MissingDifferential { cell: usize, degree: usize },
    #[error("differential on cell {cell} at degree {degree} is {rows}x{cols}, expected {erows}x{ecols}")]
    DifferentialShape {
        cell: usize,
        degree: usize,
        rows: usize,
        cols: usize,
        erows: usize,
        ecols: usize,
    },
    #[error("differential on cell {cell} at degree {degree} exceeds the declared degree range")]
    ExtraDifferential { cell: usize, degree: usize },
    #[error("missing restriction to face {face} from cell {cell} at degree {degree}")]
    MissingRestriction {
        face: usize,
        cell: usize,
        degree: usize,
    },
    #[error("restriction to face {face} from cell {cell} at degree {degree} is {rows}x{cols}, expected {erows}x{ecols}")]
    RestrictionShape {
        face: usize,
        cell: usize,
        degree: usize,
        rows: usize,
        cols: usize,
        erows: usize,
        ecols: usize,
    },
    #[error("restriction keyed on ({face}, {cell}, {degree}) does not match a strict face pair")]
    ExtraRestriction {
        face: usize,
        cell: usize,
        degree: usize,
    },
    #[error("evaluation table covers {got} cells, complex has {expected}")]
    EvalCount { expected: usize, got: usize },
    #[error("evaluation on cell {cell} is {rows}x{cols}, expected {erows}x{ecols}")]
    EvaluationShape {
        cell: usize,
        rows: usize,
        cols: usize,
        erows: usize,
        ecols: usize,
    },
    #[error("cell set is not closed: face {0} is missing")]
    NotClosed(usize),
    #[error("degree {degree} exceeds the declared degree range of cell {cell}")]
    DegreeOutOfRange { cell: usize, degree: usize },
    #[error("cell {cell} lies under no carrier of the glued space")]
    NotCovered { cell: usize },
    #[error("image at degree {degree} leaves the glued space; restriction axioms are violated")]
    GlueInconsistent { degree: usize },
    #[error("cell {cell} has no vertex to anchor the constant comparison")]
    NoVertex { cell: usize },
    #[error(
        "degrees of freedom for cell {cell} at degree {degree} count {got}, space has dimension {expected} (per-cell counts {breakdown:?})"
    )]
    DofCount {
        cell: usize,
        degree: usize,
        expected: usize,
        got: usize,
        breakdown: Vec<(usize, usize)>,
    },
    #[error("functionals on cell {cell} at degree {degree} have width {cols}, space has dimension {expected}")]
    DofShape {
        cell: usize,
        degree: usize,
        cols: usize,
        expected: usize,
    },
    #[error("no inner product supplied for degree {degree}")]
    MissingGram { degree: usize },
    #[error("inner product at degree {degree} must be symmetric of size {expected}")]
    GramShape { degree: usize, expected: usize },
    #[error("missing prescribed-space restriction to face {face} from cell {cell}")]
    MissingDualRestriction { face: usize, cell: usize },
    #[error("prescribed-space restriction to face {face} from cell {cell} is {rows}x{cols}, expected {erows}x{ecols}")]
    DualRestrictionShape {
        face: usize,
        cell: usize,
        rows: usize,
        cols: usize,
        erows: usize,
        ecols: usize,
    },
    #[error("prescribed-space restriction keyed on ({face}, {cell}) does not match a facet pair")]
    ExtraDualRestriction { face: usize, cell: usize },
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Lin(#[from] LinError),
    #[error(transparent)]
    Complex(#[from] ComplexError),
}

/// Which axiom family a violation belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    DifferentialSquare,
    CommuteRestrictionDifferential,
    RestrictionComposition,
    Stokes,
}

/// One failed axiom instance, located at a basis column of the domain.
#[derive(Clone, Debug)]
pub struct Violation {
    pub kind: ViolationKind,
    pub cell: usize,
    pub face: Option<usize>,
    pub degree: usize,
    pub basis_col: usize,
}

#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn kinds(&self) -> BTreeSet<ViolationKind>
    where
        ViolationKind: Ord,
    {
        self.violations.iter().map(|v| v.kind).collect()
    }
}

impl PartialOrd for ViolationKind {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ViolationKind {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (*self as u8).cmp(&(*other as u8))
    }
}

/// The glued space `A^k(S)` of a closed cell set: tuples on the maximal
/// cells (the carriers) subject to agreement of restrictions on shared
/// faces. `basis` has one column per glued element, expressed in the
/// concatenated carrier coordinates.
#[derive(Clone, Debug)]
pub struct GluedSpace {
    pub k: usize,
    pub carriers: Vec<usize>,
    pub offsets: Vec<usize>,
    pub block_dims: Vec<usize>,
    pub basis: Mat,
}

impl GluedSpace {
    pub fn dim(&self) -> usize {
        self.basis.cols()
    }

    pub fn total(&self) -> usize {
        self.basis.rows()
    }

    /// The rows of the glued basis belonging to one carrier (by position in
    /// `carriers`).
    pub fn carrier_rows(&self, idx: usize) -> Mat {
        let off = self.offsets[idx];
        Mat::from_fn(self.block_dims[idx], self.dim(), |i, j| {
            self.basis.at(off + i, j).clone()
        })
    }
}

/// The glued complex of a closed cell set with its spaces per degree.
#[derive(Clone, Debug)]
pub struct GlobalComplex {
    pub spaces: Vec<GluedSpace>,
    pub complex: MatrixComplex,
}

/// Outcome of the de Rham comparison between the glued complex and the
/// bundle cochain complex, through the evaluation chain map.
#[derive(Clone, Debug)]
pub struct DeRhamComparison {
    pub glued_dims: Vec<usize>,
    pub verdicts: Vec<DegreeVerdict>,
}

impl DeRhamComparison {
    pub fn bijective(&self) -> bool {
        self.verdicts.iter().all(DegreeVerdict::bijective)
    }

    pub fn h_glued(&self) -> Vec<usize> {
        self.verdicts.iter().map(|v| v.h_src).collect()
    }

    pub fn h_cochain(&self) -> Vec<usize> {
        self.verdicts.iter().map(|v| v.h_dst).collect()
    }
}

#[derive(Clone, Debug)]
pub struct FlabbyReport {
    /// (cell, degree) pairs where the boundary restriction is not onto.
    pub failures: Vec<(usize, usize)>,
}

impl FlabbyReport {
    pub fn is_flabby(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct LocalExactnessReport {
    /// Cohomology dimensions of `A^bullet(T)`.
    pub h_dims: Vec<usize>,
    /// Is the constant comparison `j_T` (restrict to a vertex, evaluate,
    /// transport up) an isomorphism from the degree-zero kernel onto `L(T)`?
    pub jt_bijective: bool,
    /// The independent route: de Rham comparison on the closure of `T`.
    pub de_rham: DeRhamComparison,
}

impl LocalExactnessReport {
    /// Exact in the required sense: no cohomology above degree zero and the
    /// degree-zero kernel is a copy of the fiber.
    pub fn is_exact(&self) -> bool {
        self.jt_bijective && self.h_dims.iter().skip(1).all(|&h| h == 0)
    }
}

/// The zero-trace criterion on one cell: the subcomplex `A^bullet_0(T)` of
/// fields with vanishing boundary traces must have cohomology only at the
/// top degree, where evaluation must descend to an isomorphism onto `L(T)`.
#[derive(Clone, Debug)]
pub struct CriterionReport {
    pub h0_dims: Vec<usize>,
    pub eval_descends: bool,
    pub eval_surjective: bool,
    pub holds: bool,
}

#[derive(Clone, Debug)]
pub struct CompatibilityReport {
    pub flabby_failures: Vec<(usize, usize)>,
    pub exactness_failures: Vec<usize>,
    pub criterion_failures: Vec<usize>,
    /// Flabby and locally exact everywhere.
    pub compatible: bool,
    /// On flabby systems the zero-trace criterion must agree cell by cell
    /// with the direct exactness verdict; vacuously true otherwise.
    pub criterion_agrees: bool,
}

#[derive(Clone, Debug)]
pub struct DimensionIdentityReport {
    pub k: usize,
    pub glued_dim: usize,
    pub zero_trace_sum: usize,
    /// The unconditional bound `glued_dim <= zero_trace_sum`.
    pub bounded: bool,
    /// Equality, which holds exactly when the system admits extensions at
    /// this degree.
    pub equality: bool,
}

#[derive(Clone, Debug)]
pub struct UnisolvenceReport {
    /// Direct verdict: the stacked square matrix of all functionals on all
    /// subcells, pulled back through restrictions, is invertible.
    pub invertible: bool,
    /// Per subcell: do the cell's own functionals separate its zero-trace
    /// subspace?
    pub zero_trace_injective: Vec<(usize, bool)>,
    /// Per subcell, does the functional count equal the zero-trace
    /// dimension? (Forced in any consistent unisolvent layout.)
    pub counts_match_zero_trace: bool,
    /// The sufficient condition: square count plus zero-trace injectivity
    /// on every subcell.
    pub sufficient_route: bool,
    /// The sufficient route may only ever claim unisolvence when the direct
    /// rank computation confirms it.
    pub agrees: bool,
}

/// Degrees of freedom: for selected (cell, degree) pairs, a matrix whose
/// rows are linear functionals on `A^degree(cell)` in dual coordinates of
/// the chosen basis. Absent entries mean no functionals.
#[derive(Clone, Debug, Default)]
pub struct DofSystem {
    functionals: BTreeMap<(usize, usize), Mat>,
}

impl DofSystem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, cell: usize, degree: usize, rows: Mat) {
        self.functionals.insert((cell, degree), rows);
    }

    pub fn get(&self, cell: usize, degree: usize) -> Option<&Mat> {
        self.functionals.get(&(cell, degree))
    }

    pub fn count(&self, cell: usize, degree: usize) -> usize {
        self.get(cell, degree).map_or(0, Mat::rows)
    }
}

/// A finite element system: a flat discrete bundle plus, per cell, local
/// space dimensions, differentials, restrictions for every strict face
/// pair, and a top-degree evaluation into the fiber.
#[derive(Clone, Debug)]
pub struct FESystem {
    bundle: DiscreteBundle<Rat>,
    complex: Arc<CellComplex>,
    dims: Vec<Vec<usize>>,
    diff: BTreeMap<(usize, usize), Mat>,
    restrict: BTreeMap<(usize, usize, usize), Mat>,
    eval: Vec<Mat>,
}

impl FESystem {
    /// Build and shape-check a system. `dims[c]` lists the local space
    /// dimensions of cell `c` for degrees `0..dims[c].len()`, which must
    /// reach at least the cell dimension and may extend beyond it (a space
    /// of positive degree on a low-dimensional cell is legitimate); `diff`
    /// is keyed by `(cell, degree)` and covers every consecutive pair of
    /// declared degrees; `restrict` by `(face, cell, degree)` and must cover
    /// every strict face pair at every degree both cells declare; `eval[c]`
    /// maps `A^dim(c)(c)` into the fiber over `c`.
    pub fn new(
        bundle: DiscreteBundle<Rat>,
        dims: Vec<Vec<usize>>,
        diff: BTreeMap<(usize, usize), Mat>,
        restrict: BTreeMap<(usize, usize, usize), Mat>,
        eval: Vec<Mat>,
    ) -> Result<FESystem, FesError> {
        if !bundle.is_flat() {
            return Err(FesError::CurvedBundle);
        }
        let complex = bundle.complex_arc();
        let n = complex.n_cells();
        if dims.len() != n {
            return Err(FesError::DimsCount {
                expected: n,
                got: dims.len(),
            });
        }
        for (c, row) in dims.iter().enumerate() {
            if row.len() < complex.dim(c) + 1 {
                return Err(FesError::DegreeCount {
                    cell: c,
                    expected: complex.dim(c) + 1,
                    got: row.len(),
                });
            }
        }
        for (&(c, k), m) in &diff {
            if c >= n || k + 1 >= dims[c].len() {
                return Err(FesError::ExtraDifferential { cell: c, degree: k });
            }
            if m.rows() != dims[c][k + 1] || m.cols() != dims[c][k] {
                return Err(FesError::DifferentialShape {
                    cell: c,
                    degree: k,
                    rows: m.rows(),
                    cols: m.cols(),
                    erows: dims[c][k + 1],
                    ecols: dims[c][k],
                });
            }
        }
        for c in 0..n {
            for k in 0..dims[c].len() - 1 {
                if !diff.contains_key(&(c, k)) {
                    return Err(FesError::MissingDifferential { cell: c, degree: k });
                }
            }
        }
        for (&(f, c, k), m) in &restrict {
            if f >= n
                || c >= n
                || f == c
                || !complex.is_subcell(f, c)
                || k >= dims[f].len().min(dims[c].len())
            {
                return Err(FesError::ExtraRestriction {
                    face: f,
                    cell: c,
                    degree: k,
                });
            }
            if m.rows() != dims[f][k] || m.cols() != dims[c][k] {
                return Err(FesError::RestrictionShape {
                    face: f,
                    cell: c,
                    degree: k,
                    rows: m.rows(),
                    cols: m.cols(),
                    erows: dims[f][k],
                    ecols: dims[c][k],
                });
            }
        }
        for c in 0..n {
            for &f in complex.subcells_of(c) {
                if f == c {
                    continue;
                }
                for k in 0..dims[f].len().min(dims[c].len()) {
                    if !restrict.contains_key(&(f, c, k)) {
                        return Err(FesError::MissingRestriction {
                            face: f,
                            cell: c,
                            degree: k,
                        });
                    }
                }
            }
        }
        if eval.len() != n {
            return Err(FesError::EvalCount {
                expected: n,
                got: eval.len(),
            });
        }
        for (c, m) in eval.iter().enumerate() {
            let top = complex.dim(c);
            if m.rows() != bundle.fiber_dim(c) || m.cols() != dims[c][top] {
                return Err(FesError::EvaluationShape {
                    cell: c,
                    rows: m.rows(),
                    cols: m.cols(),
                    erows: bundle.fiber_dim(c),
                    ecols: dims[c][top],
                });
            }
        }
        Ok(FESystem {
            bundle,
            complex,
            dims,
            diff,
            restrict,
            eval,
        })
    }

    pub fn complex(&self) -> &CellComplex {
        &self.complex
    }

    pub fn bundle(&self) -> &DiscreteBundle<Rat> {
        &self.bundle
    }

    /// Dimension of `A^k(cell)`; zero above the cell dimension.
    pub fn space_dim(&self, cell: usize, k: usize) -> usize {
        self.dims[cell].get(k).copied().unwrap_or(0)
    }

    pub fn differential(&self, cell: usize, k: usize) -> Option<&Mat> {
        self.diff.get(&(cell, k))
    }

    /// The differential on `cell` at degree `k`, a zero map wherever the
    /// declared degree range runs out.
    fn differential_of(&self, cell: usize, k: usize) -> Mat {
        match self.diff.get(&(cell, k)) {
            Some(m) => m.clone(),
            None => Mat::zero(self.space_dim(cell, k + 1), self.space_dim(cell, k)),
        }
    }

    pub fn evaluation(&self, cell: usize) -> &Mat {
        &self.eval[cell]
    }

    /// Restriction matrix from `cell` to `face` at degree `k`; the identity
    /// when the two coincide, a zero map wherever either degree range has
    /// run out.
    pub fn restriction(&self, face: usize, cell: usize, k: usize) -> Result<Mat, FesError> {
        if face == cell {
            return Ok(Mat::identity(self.space_dim(cell, k)));
        }
        if k >= self.dims[face].len().min(self.dims[cell].len()) {
            return Ok(Mat::zero(self.space_dim(face, k), self.space_dim(cell, k)));
        }
        self.restrict
            .get(&(face, cell, k))
            .cloned()
            .ok_or(FesError::MissingRestriction {
                face,
                cell,
                degree: k,
            })
    }

    /// Check every axiom as an exact matrix identity and list the failures
    /// column by column.
    pub fn validate_system(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let mut record = |kind: ViolationKind, cell: usize, face: Option<usize>, degree: usize, m: &Mat| {
            for j in 0..m.cols() {
                if !m.select_cols(&[j]).is_zero() {
                    violations.push(Violation {
                        kind,
                        cell,
                        face,
                        degree,
                        basis_col: j,
                    });
                }
            }
        };
        let n = self.complex.n_cells();
        for c in 0..n {
            let d_c = self.complex.dim(c);
            // d after d vanishes.
            for k in 0..self.dims[c].len().saturating_sub(2) {
                let m = self.diff[&(c, k + 1)].mul(&self.diff[&(c, k)]);
                record(ViolationKind::DifferentialSquare, c, None, k, &m);
            }
            for &f in self.complex.subcells_of(c) {
                if f == c {
                    continue;
                }
                // Restriction commutes with the differential; past the
                // shorter degree range both sides degenerate to zero maps.
                let shared = self.dims[f].len().min(self.dims[c].len());
                for k in 0..shared.saturating_sub(1) {
                    let lhs = self.restrict[&(f, c, k + 1)].mul(&self.differential_of(c, k));
                    let rhs = self.differential_of(f, k).mul(&self.restrict[&(f, c, k)]);
                    record(
                        ViolationKind::CommuteRestrictionDifferential,
                        c,
                        Some(f),
                        k,
                        &lhs.sub(&rhs),
                    );
                }
                // Restriction along a chain equals the composite.
                for &m in self.complex.subcells_of(f) {
                    if m == f || !self.complex.is_subcell(m, f) {
                        continue;
                    }
                    for k in 0..self.dims[m].len().min(self.dims[c].len()) {
                        let direct = self
                            .restriction(m, c, k)
                            .expect("construction covered every face pair");
                        let fc = self
                            .restriction(f, c, k)
                            .expect("construction covered every face pair");
                        let via = self
                            .restriction(m, f, k)
                            .expect("construction covered every face pair")
                            .mul(&fc);
                        record(
                            ViolationKind::RestrictionComposition,
                            c,
                            Some(m),
                            k,
                            &direct.sub(&via),
                        );
                    }
                }
            }
            // Stokes on cells of positive dimension.
            if d_c >= 1 {
                let lhs = self.eval[c].mul(&self.diff[&(c, d_c - 1)]);
                let mut rhs = Mat::zero(lhs.rows(), lhs.cols());
                for &(f, sign) in self.complex.faces_of(c) {
                    let term = self
                        .bundle
                        .transport(c, f)
                        .mul(&self.eval[f])
                        .mul(&self.restrict[&(f, c, d_c - 1)]);
                    rhs = if sign == 1 {
                        rhs.add(&term)
                    } else {
                        rhs.sub(&term)
                    };
                }
                record(ViolationKind::Stokes, c, None, d_c - 1, &lhs.sub(&rhs));
            }
        }
        ValidationReport { violations }
    }

    /// Inverse limit `A^k(cells)` over a closed cell set: one coordinate
    /// block per maximal cell of the set, glued by equality of restrictions
    /// on every shared face that carries a degree-`k` space.
    pub fn glue(&self, cells: &BTreeSet<usize>, k: usize) -> Result<GluedSpace, FesError> {
        for &c in cells {
            for &(f, _) in self.complex.faces_of(c) {
                if !cells.contains(&f) {
                    return Err(FesError::NotClosed(f));
                }
            }
        }
        let carriers: Vec<usize> = cells
            .iter()
            .copied()
            .filter(|&c| {
                !self
                    .complex
                    .cofaces_of(c)
                    .iter()
                    .any(|&(z, _)| cells.contains(&z))
            })
            .collect();
        let mut offsets = Vec::with_capacity(carriers.len());
        let mut block_dims = Vec::with_capacity(carriers.len());
        let mut total = 0;
        for &x in &carriers {
            offsets.push(total);
            block_dims.push(self.space_dim(x, k));
            total += self.space_dim(x, k);
        }
        let mut rows: Vec<Mat> = Vec::new();
        for &y in cells {
            if self.space_dim(y, k) == 0 || carriers.contains(&y) {
                continue;
            }
            let over: Vec<usize> = (0..carriers.len())
                .filter(|&i| self.complex.is_subcell(y, carriers[i]))
                .collect();
            if over.len() < 2 {
                continue;
            }
            let first = over[0];
            let r_first = self.restriction(y, carriers[first], k)?;
            for &other in &over[1..] {
                let mut row = Mat::zero(self.space_dim(y, k), total);
                row.paste(0, offsets[first], &r_first);
                row.paste(0, offsets[other], &self.restriction(y, carriers[other], k)?.neg());
                rows.push(row);
            }
        }
        let constraint = if rows.is_empty() {
            Mat::zero(0, total)
        } else {
            Mat::vstack(&rows.iter().collect::<Vec<_>>())
        };
        Ok(GluedSpace {
            k,
            carriers,
            offsets,
            block_dims,
            basis: constraint.nullspace_basis(),
        })
    }

    /// The restriction `A^k(S) -> A^k(cell)` of a glued space, in glued
    /// coordinates; well defined by the gluing constraints.
    pub fn glued_restriction(&self, g: &GluedSpace, cell: usize) -> Result<Mat, FesError> {
        let idx = g
            .carriers
            .iter()
            .position(|&x| self.complex.is_subcell(cell, x))
            .ok_or(FesError::NotCovered { cell })?;
        let block = g.carrier_rows(idx);
        if g.carriers[idx] == cell {
            Ok(block)
        } else {
            Ok(self.restriction(cell, g.carriers[idx], g.k)?.mul(&block))
        }
    }

    /// Glue every degree of a closed cell set and carry the differentials
    /// over to glued coordinates.
    pub fn global_complex(&self, cells: &BTreeSet<usize>) -> Result<GlobalComplex, FesError> {
        let n = cells
            .iter()
            .map(|&c| self.dims[c].len() - 1)
            .max()
            .unwrap_or(0);
        let spaces: Vec<GluedSpace> = (0..=n)
            .map(|k| self.glue(cells, k))
            .collect::<Result<_, _>>()?;
        let mut maps = Vec::with_capacity(n);
        for k in 0..n {
            let (lo, hi) = (&spaces[k], &spaces[k + 1]);
            let mut raw = Mat::zero(hi.total(), lo.dim());
            for (i, &x) in hi.carriers.iter().enumerate() {
                let pos = lo
                    .carriers
                    .iter()
                    .position(|&y| y == x)
                    .expect("carriers are the maximal cells at every degree");
                raw.paste(hi.offsets[i], 0, &self.differential_of(x, k).mul(&lo.carrier_rows(pos)));
            }
            let coords = hi
                .basis
                .solve(&raw)
                .ok_or(FesError::GlueInconsistent { degree: k })?;
            maps.push(coords);
        }
        let dims = spaces.iter().map(GluedSpace::dim).collect();
        Ok(GlobalComplex {
            complex: MatrixComplex::new(dims, maps)?,
            spaces,
        })
    }

    /// The evaluation chain map from the glued complex into the bundle
    /// cochain complex of the same closed cell set: on a k-cell `t`,
    /// restrict to `t` and apply `e_t`.
    pub fn evaluation_chain_map(&self, cells: &BTreeSet<usize>) -> Result<Vec<Mat>, FesError> {
        let global = self.global_complex(cells)?;
        let sub = self.bundle.sub_bundle(cells)?;
        self.eval_maps(&global, &sub)
    }

    fn eval_maps(
        &self,
        global: &GlobalComplex,
        sub: &DiscreteBundle<Rat>,
    ) -> Result<Vec<Mat>, FesError> {
        let mut maps = Vec::with_capacity(global.spaces.len());
        for g in &global.spaces {
            let mut m = Mat::zero(sub.cochain_dim(g.k), g.dim());
            for &ts in sub.complex().cells_of_dim(g.k) {
                let t = self
                    .complex
                    .id_of(sub.complex().key(ts))
                    .expect("subcomplex cells share keys with the ambient complex");
                let block = self.eval[t].mul(&self.glued_restriction(g, t)?);
                m.paste(sub.fiber_offset(ts), 0, &block);
            }
            maps.push(m);
        }
        Ok(maps)
    }

    /// Compare the glued complex with the bundle cochain complex through
    /// the evaluation chain map, degree by degree, on cohomology. When the
    /// glued complex extends past the top cell dimension the cochain side
    /// is padded with zero spaces.
    pub fn de_rham_verify_on(&self, cells: &BTreeSet<usize>) -> Result<DeRhamComparison, FesError> {
        let global = self.global_complex(cells)?;
        let sub = self.bundle.sub_bundle(cells)?;
        let glen = global.spaces.len();
        let top = sub.complex().top_dim();
        let cdims: Vec<usize> = (0..glen).map(|k| sub.cochain_dim(k)).collect();
        let cmaps: Vec<Mat> = (0..glen - 1)
            .map(|k| {
                if k < top {
                    sub.covariant_coboundary(k)
                } else {
                    Mat::zero(cdims[k + 1], cdims[k])
                }
            })
            .collect();
        let cochain = MatrixComplex::new(cdims, cmaps)?;
        let maps = self.eval_maps(&global, &sub)?;
        let verdicts = induced_cohomology_iso(&global.complex, &cochain, &maps)?;
        Ok(DeRhamComparison {
            glued_dims: global.complex.dims().to_vec(),
            verdicts,
        })
    }

    /// The de Rham comparison over the whole complex.
    pub fn de_rham_verify(&self) -> Result<DeRhamComparison, FesError> {
        let all: BTreeSet<usize> = (0..self.complex.n_cells()).collect();
        self.de_rham_verify_on(&all)
    }

    /// Basis of the zero-trace subspace `A^k_0(t)`: vanishing restrictions
    /// to every facet carrying a degree-`k` space. At the top degree of a
    /// standard system no facet does, so there is no condition.
    pub fn zero_trace_basis(&self, t: usize, k: usize) -> Result<Mat, FesError> {
        if k >= self.dims[t].len() {
            return Err(FesError::DegreeOutOfRange { cell: t, degree: k });
        }
        let parts: Vec<Mat> = self
            .complex
            .faces_of(t)
            .iter()
            .filter(|&&(f, _)| self.space_dim(f, k) > 0)
            .map(|&(f, _)| self.restriction(f, t, k))
            .collect::<Result<_, _>>()?;
        if parts.is_empty() {
            return Ok(Mat::identity(self.dims[t][k]));
        }
        Ok(Mat::vstack(&parts.iter().collect::<Vec<_>>()).nullspace_basis())
    }

    /// Does `A^k(t)` restrict onto the glued boundary space `A^k(boundary
    /// of t)`?
    pub fn flabby_check(&self, t: usize, k: usize) -> Result<bool, FesError> {
        if k >= self.dims[t].len() {
            return Err(FesError::DegreeOutOfRange { cell: t, degree: k });
        }
        let mut boundary = self.complex.subcells_of(t).clone();
        boundary.remove(&t);
        let g = self.glue(&boundary, k)?;
        if g.dim() == 0 {
            return Ok(true);
        }
        let mut raw = Mat::zero(g.total(), self.dims[t][k]);
        for (i, &x) in g.carriers.iter().enumerate() {
            raw.paste(g.offsets[i], 0, &self.restriction(x, t, k)?);
        }
        let coords = g
            .basis
            .solve(&raw)
            .ok_or(FesError::GlueInconsistent { degree: k })?;
        Ok(coords.rank() == g.dim())
    }

    /// Run `flabby_check` on every cell and declared degree.
    pub fn flabby_check_all(&self) -> Result<FlabbyReport, FesError> {
        let mut failures = Vec::new();
        for t in 0..self.complex.n_cells() {
            for k in 0..self.dims[t].len() {
                if !self.flabby_check(t, k)? {
                    failures.push((t, k));
                }
            }
        }
        Ok(FlabbyReport { failures })
    }

    /// Cohomology of the single-cell complex `A^bullet(t)`, the constant
    /// comparison `j_t`, and the independent de Rham route on the closure.
    pub fn local_exactness_check(&self, t: usize) -> Result<LocalExactnessReport, FesError> {
        let n = self.dims[t].len() - 1;
        let maps = (0..n).map(|k| self.diff[&(t, k)].clone()).collect();
        let local = MatrixComplex::new(self.dims[t].clone(), maps)?;
        let h_dims = local.cohomology_dims();

        let kernel = if n >= 1 {
            self.diff[&(t, 0)].nullspace_basis()
        } else {
            Mat::identity(self.dims[t][0])
        };
        let v = *self
            .complex
            .vertex_cells_of(t)
            .first()
            .ok_or(FesError::NoVertex { cell: t })?;
        let j = self
            .bundle
            .transport_monotone(t, v)?
            .mul(&self.eval[v])
            .mul(&self.restriction(v, t, 0)?)
            .mul(&kernel);
        let fiber = self.bundle.fiber_dim(t);
        let jt_bijective = kernel.cols() == fiber && j.rank() == fiber;

        let de_rham = self.de_rham_verify_on(self.complex.subcells_of(t))?;
        Ok(LocalExactnessReport {
            h_dims,
            jt_bijective,
            de_rham,
        })
    }

    /// The zero-trace route to local exactness on one cell: the zero-trace
    /// complex must concentrate its cohomology at the cell dimension, where
    /// the evaluation must descend to an isomorphism onto the fiber.
    pub fn zero_trace_criterion(&self, t: usize) -> Result<CriterionReport, FesError> {
        let n = self.dims[t].len() - 1;
        let d = self.complex.dim(t);
        let bases: Vec<Mat> = (0..=n)
            .map(|k| self.zero_trace_basis(t, k))
            .collect::<Result<_, _>>()?;
        let mut maps = Vec::with_capacity(n);
        for k in 0..n {
            let image = self.diff[&(t, k)].mul(&bases[k]);
            let coords = bases[k + 1]
                .solve(&image)
                .ok_or(FesError::GlueInconsistent { degree: k })?;
            maps.push(coords);
        }
        let dims = bases.iter().map(Mat::cols).collect();
        let h0_dims = MatrixComplex::new(dims, maps.clone())?.cohomology_dims();

        let fiber = self.bundle.fiber_dim(t);
        let top_eval = self.eval[t].mul(&bases[d]);
        let eval_descends = d == 0 || top_eval.mul(&maps[d - 1]).is_zero();
        let cocycles = if d < n {
            maps[d].nullspace_basis()
        } else {
            Mat::identity(bases[d].cols())
        };
        let eval_surjective = top_eval.mul(&cocycles).rank() == fiber;
        let holds = (0..=n).all(|k| k == d || h0_dims[k] == 0)
            && h0_dims[d] == fiber
            && eval_descends
            && eval_surjective;
        Ok(CriterionReport {
            h0_dims,
            eval_descends,
            eval_surjective,
            holds,
        })
    }

    /// Flabbiness plus local exactness everywhere, with the zero-trace
    /// criterion run alongside as a cross-check.
    pub fn compatibility_check(&self) -> Result<CompatibilityReport, FesError> {
        let flabby = self.flabby_check_all()?;
        let mut exactness_failures = Vec::new();
        let mut criterion_failures = Vec::new();
        let mut agree = true;
        for t in 0..self.complex.n_cells() {
            let exact = self.local_exactness_check(t)?.is_exact();
            let crit = self.zero_trace_criterion(t)?.holds;
            if !exact {
                exactness_failures.push(t);
            }
            if !crit {
                criterion_failures.push(t);
            }
            if exact != crit {
                agree = false;
            }
        }
        let compatible = flabby.is_flabby() && exactness_failures.is_empty();
        let criterion_agrees = !flabby.is_flabby() || agree;
        Ok(CompatibilityReport {
            flabby_failures: flabby.failures,
            exactness_failures,
            criterion_failures,
            compatible,
            criterion_agrees,
        })
    }

    /// The dimension bound for a closed cell set at one degree: the glued
    /// dimension never exceeds the sum of zero-trace dimensions, with
    /// equality characterizing extension.
    pub fn dimension_identity_on(
        &self,
        cells: &BTreeSet<usize>,
        k: usize,
    ) -> Result<DimensionIdentityReport, FesError> {
        let glued_dim = self.glue(cells, k)?.dim();
        let mut zero_trace_sum = 0;
        for &t in cells {
            if k < self.dims[t].len() {
                zero_trace_sum += self.zero_trace_basis(t, k)?.cols();
            }
        }
        Ok(DimensionIdentityReport {
            k,
            glued_dim,
            zero_trace_sum,
            bounded: glued_dim <= zero_trace_sum,
            equality: glued_dim == zero_trace_sum,
        })
    }

    /// The dimension bound over the whole complex.
    pub fn dimension_identity_check(&self, k: usize) -> Result<DimensionIdentityReport, FesError> {
        let all: BTreeSet<usize> = (0..self.complex.n_cells()).collect();
        self.dimension_identity_on(&all, k)
    }

    /// Unisolvence of a degree-of-freedom system on `A^k(t)`: stack every
    /// functional of every subcell through the restrictions and test
    /// invertibility, alongside the sufficient zero-trace route.
    pub fn dof_unisolvence_check(
        &self,
        dofs: &DofSystem,
        t: usize,
        k: usize,
    ) -> Result<UnisolvenceReport, FesError> {
        if k >= self.dims[t].len() {
            return Err(FesError::DegreeOutOfRange { cell: t, degree: k });
        }
        let dim_t = self.dims[t][k];
        let mut blocks: Vec<Mat> = Vec::new();
        let mut breakdown = Vec::new();
        let mut zero_trace_injective = Vec::new();
        let mut counts_match = true;
        let mut total = 0;
        for &sub in self.complex.subcells_of(t) {
            if self.space_dim(sub, k) == 0 {
                continue;
            }
            let f = dofs.get(sub, k);
            if let Some(m) = f {
                if m.cols() != self.dims[sub][k] {
                    return Err(FesError::DofShape {
                        cell: sub,
                        degree: k,
                        cols: m.cols(),
                        expected: self.dims[sub][k],
                    });
                }
            }
            let rows = f.map_or(0, Mat::rows);
            breakdown.push((sub, rows));
            total += rows;
            if let Some(m) = f {
                blocks.push(m.mul(&self.restriction(sub, t, k)?));
            }
            let z = self.zero_trace_basis(sub, k)?;
            let on_zero = match f {
                Some(m) => m.mul(&z),
                None => Mat::zero(0, z.cols()),
            };
            zero_trace_injective.push((sub, on_zero.rank() == z.cols()));
            if rows != z.cols() {
                counts_match = false;
            }
        }
        if total != dim_t {
            return Err(FesError::DofCount {
                cell: t,
                degree: k,
                expected: dim_t,
                got: total,
                breakdown,
            });
        }
        let stacked = if blocks.is_empty() {
            Mat::zero(0, dim_t)
        } else {
            Mat::vstack(&blocks.iter().collect::<Vec<_>>())
        };
        let invertible = stacked.rank() == dim_t;
        let sufficient_route = zero_trace_injective.iter().all(|&(_, ok)| ok);
        Ok(UnisolvenceReport {
            invertible,
            counts_match_zero_trace: counts_match,
            sufficient_route,
            agrees: !sufficient_route || invertible,
            zero_trace_injective,
        })
    }

    /// Harmonic degrees of freedom on `A^k(t)` for the supplied inner
    /// products (`grams[j]` is the Gram matrix of the product on `A^j(t)`,
    /// fetched only for the degrees actually needed): moments against
    /// differentials of zero-trace fields one degree down, moments of the
    /// differential against differentials of zero-trace fields, and, at the
    /// top degree, the components of the evaluation.
    pub fn harmonic_dofs(
        &self,
        t: usize,
        k: usize,
        grams: &BTreeMap<usize, Mat>,
    ) -> Result<Mat, FesError> {
        if k >= self.dims[t].len() {
            return Err(FesError::DegreeOutOfRange { cell: t, degree: k });
        }
        let gram = |degree: usize| -> Result<&Mat, FesError> {
            let g = grams.get(&degree).ok_or(FesError::MissingGram { degree })?;
            let d = self.dims[t][degree];
            if g.rows() != d || g.cols() != d || *g != g.transpose() {
                return Err(FesError::GramShape {
                    degree,
                    expected: d,
                });
            }
            Ok(g)
        };
        let mut blocks: Vec<Mat> = Vec::new();
        if k >= 1 {
            let z = self.zero_trace_basis(t, k - 1)?;
            if z.cols() > 0 {
                let dz = self.diff[&(t, k - 1)].mul(&z);
                blocks.push(independent_rows(&dz.transpose().mul(gram(k)?)));
            }
        }
        if k + 1 < self.dims[t].len() {
            let z = self.zero_trace_basis(t, k)?;
            if z.cols() > 0 {
                let d = &self.diff[&(t, k)];
                let dz = d.mul(&z);
                blocks.push(independent_rows(&dz.transpose().mul(gram(k + 1)?).mul(d)));
            }
        }
        if k == self.complex.dim(t) {
            blocks.push(independent_rows(&self.eval[t]));
        }
        Ok(if blocks.is_empty() {
            Mat::zero(0, self.dims[t][k])
        } else {
            Mat::vstack(&blocks.iter().collect::<Vec<_>>())
        })
    }
}

/// Prescribed-field data for building a bundle by duality: spaces `M(T)`
/// with bijective restrictions `s_{T'T}: M(T) -> M(T')` on facet pairs.
/// The dual bundle has fibers `L(T) = M(T)*` and ascending transports
/// `t_{TT'} = s_{T'T}` transposed; its flatness is exactly the
/// codimension-2 compatibility of the restrictions. Evaluations of a
/// concrete system realize the pairing with `M(T)` row by row against the
/// chosen basis.
#[derive(Clone, Debug)]
pub struct DualBundleData {
    complex: Arc<CellComplex>,
    m_dims: Vec<usize>,
    s_maps: BTreeMap<(usize, usize), Mat>,
}

impl DualBundleData {
    /// `s_maps` is keyed by `(face, cell)` over exactly the facet pairs.
    pub fn new(
        complex: Arc<CellComplex>,
        m_dims: Vec<usize>,
        s_maps: BTreeMap<(usize, usize), Mat>,
    ) -> Result<DualBundleData, FesError> {
        let n = complex.n_cells();
        if m_dims.len() != n {
            return Err(FesError::DimsCount {
                expected: n,
                got: m_dims.len(),
            });
        }
        for (&(f, c), m) in &s_maps {
            if f >= n || c >= n || complex.rel_orientation(c, f) == 0 {
                return Err(FesError::ExtraDualRestriction { face: f, cell: c });
            }
            if m.rows() != m_dims[f] || m.cols() != m_dims[c] {
                return Err(FesError::DualRestrictionShape {
                    face: f,
                    cell: c,
                    rows: m.rows(),
                    cols: m.cols(),
                    erows: m_dims[f],
                    ecols: m_dims[c],
                });
            }
        }
        for c in 0..n {
            for &(f, _) in complex.faces_of(c) {
                if !s_maps.contains_key(&(f, c)) {
                    return Err(FesError::MissingDualRestriction { face: f, cell: c });
                }
            }
        }
        Ok(DualBundleData {
            complex,
            m_dims,
            s_maps,
        })
    }

    pub fn complex(&self) -> &CellComplex {
        &self.complex
    }

    pub fn m_dim(&self, id: usize) -> usize {
        self.m_dims[id]
    }

    pub fn restriction(&self, face: usize, cell: usize) -> &Mat {
        &self.s_maps[&(face, cell)]
    }

    /// The bundle of dual spaces: ascending transports are the transposed
    /// restrictions. Construction re-checks invertibility.
    pub fn dual_bundle(&self) -> Result<DiscreteBundle<Rat>, BundleError> {
        let transports = self
            .s_maps
            .iter()
            .map(|(&(f, c), m)| ((c, f), m.transpose()))
            .collect();
        DiscreteBundle::new(Arc::clone(&self.complex), self.m_dims.clone(), transports)
    }

    /// Codimension-2 compatibility of the restrictions, read off as
    /// flatness of the dual bundle.
    pub fn compatible(&self) -> Result<bool, BundleError> {
        Ok(self.dual_bundle()?.is_flat())
    }
}

/// Greedy maximal independent row subset, keeping the earliest rows. The
/// result spans the same row space; rows already independent pass through
/// unchanged.
fn independent_rows(m: &Mat) -> Mat {
    let mut kept: Vec<usize> = Vec::new();
    for i in 0..m.rows() {
        let mut rows = kept.clone();
        rows.push(i);
        let candidate = Mat::from_fn(rows.len(), m.cols(), |r, c| m.at(rows[r], c).clone());
        if candidate.rank() == rows.len() {
            kept = rows;
        }
    }
    Mat::from_fn(kept.len(), m.cols(), |r, c| m.at(kept[r], c).clone())
}

fn cross(a: &[Rat; 2], b: &[Rat; 2]) -> Rat {
    a[0].clone() * b[1].clone() - a[1].clone() * b[0].clone()
}

/// The lowest-order trimmed polynomial de Rham system on a triangle mesh
/// with the trivial scalar fiber: affine potentials, rotation-enriched
/// constant vector fields with continuous tangential traces, and constant
/// densities. On an edge from its lower vertex `a` to its higher vertex
/// `b`, degree-zero fields are presented in the chart `a + lambda (b - a)`
/// and degree-one fields by their coefficient against `d lambda`; on a
/// triangle the degree-one basis is the two constants plus the rotated
/// position field `(-x2, x1)`, and the evaluation of a constant density `c`
/// is `c` times the signed area of the sorted-vertex triangle.
pub fn whitney_p1_system(mesh: &TriMesh) -> Result<FESystem, FesError> {
    let complex = mesh.complex_arc();
    let bundle = DiscreteBundle::trivial(Arc::clone(&complex), 1);
    let mut dims = vec![Vec::new(); complex.n_cells()];
    let mut diff = BTreeMap::new();
    let mut restrict = BTreeMap::new();
    let mut eval = vec![Mat::zero(1, 1); complex.n_cells()];

    for &v in complex.cells_of_dim(0) {
        dims[v] = vec![1];
        eval[v] = Mat::from_rows(vec![vec![rint(1)]]);
    }
    for &e in complex.cells_of_dim(1) {
        dims[e] = vec![2, 1];
        diff.insert((e, 0), Mat::from_rows(vec![vec![rint(0), rint(1)]]));
        eval[e] = Mat::from_rows(vec![vec![rint(1)]]);
        for &(v, sign) in complex.faces_of(e) {
            // The positively oriented face is the head of the chart.
            let lambda = if sign == 1 { rint(1) } else { rint(0) };
            restrict.insert((v, e, 0), Mat::from_rows(vec![vec![rint(1), lambda]]));
        }
    }
    for &t in complex.cells_of_dim(2) {
        dims[t] = vec![3, 3, 1];
        diff.insert(
            (t, 0),
            Mat::from_rows(vec![
                vec![rint(0), rint(1), rint(0)],
                vec![rint(0), rint(0), rint(1)],
                vec![rint(0), rint(0), rint(0)],
            ]),
        );
        diff.insert((t, 1), Mat::from_rows(vec![vec![rint(0), rint(0), rint(2)]]));
        let tri = mesh.triangle(t).expect("mesh triangles carry coordinates");
        eval[t] = Mat::from_rows(vec![vec![tri.signed_area2() * rat(1, 2)]]);
        for &v in &complex.vertex_cells_of(t) {
            let p = mesh.vertex_coord(v).expect("triangle vertices have coordinates");
            restrict.insert(
                (v, t, 0),
                Mat::from_rows(vec![vec![rint(1), p[0].clone(), p[1].clone()]]),
            );
        }
        for &(e, _) in complex.faces_of(t) {
            let edge = mesh.edge(e).expect("triangle faces are mesh edges");
            let (p, tan) = (edge.a.clone(), edge.tangent());
            restrict.insert(
                (e, t, 0),
                Mat::from_rows(vec![
                    vec![rint(1), p[0].clone(), p[1].clone()],
                    vec![rint(0), tan[0].clone(), tan[1].clone()],
                ]),
            );
            restrict.insert(
                (e, t, 1),
                Mat::from_rows(vec![vec![tan[0].clone(), tan[1].clone(), cross(&p, &tan)]]),
            );
        }
    }
    FESystem::new(bundle, dims, diff, restrict, eval)
}

/// The classical degrees of freedom of the lowest-order system: vertex
/// values, edge integrals, and the cell evaluation.
pub fn whitney_p1_dofs(system: &FESystem) -> DofSystem {
    let complex = system.complex();
    let mut dofs = DofSystem::new();
    for &v in complex.cells_of_dim(0) {
        dofs.insert(v, 0, Mat::from_rows(vec![vec![rint(1)]]));
    }
    for &e in complex.cells_of_dim(1) {
        dofs.insert(e, 1, Mat::from_rows(vec![vec![rint(1)]]));
    }
    for &t in complex.cells_of_dim(2) {
        dofs.insert(t, 2, system.evaluation(t).clone());
    }
    dofs
}
