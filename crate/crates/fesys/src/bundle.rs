//! Discrete vector bundles: a fiber per cell, an invertible transport per
//! incidence pair, and the covariant coboundary they induce on cochains.
//!
//! Transports ascend: `t(T, T')` maps the fiber over the face `T'` into the
//! fiber over `T`. A bundle is flat when the two compositions around every
//! codimension-2 pair agree; the failure is measured by the curvature
//! `c(T'', T) = t(T,C1) t(C1,T'') - t(T,C2) t(C2,T'')`, where `C1 < C2` are
//! the two intermediate cells ordered by cell id (for simplicial complexes
//! this is the added-vertex order). With that convention the block of the
//! squared coboundary at `(T, T'')` is `o(T,C1) o(C1,T'') c(T'', T)`.
//!
//! Curvature values live naturally on the cubical refinement: the fiber of
//! the endomorphism bundle over a refinement cell `S(X, Y)` is
//! `Hom(L(X), L(Y))`, vectorized column-major, with transports given by
//! pre- and post-composition. The covariant coboundary of the curvature
//! 2-cochain vanishes identically (the differential Bianchi identity), which
//! `bianchi_residuals` exposes cube by cube.

use crate::complex::{CellComplex, CellKey, ComplexError};
use crate::rat::{rat, rint, ExpSum, Rat, Scalar};
use crate::ratlin::{LinError, Mat, MatrixComplex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("missing transport for incidence pair ({0}, {1})")]
    MissingTransport(String, String),
    #[error("transport ({0}, {1}) has shape {2}x{3}, expected {4}x{5}")]
    TransportShape(String, String, usize, usize, usize, usize),
    #[error("transport ({0}, {1}) is not invertible")]
    NotInvertible(String, String),
    #[error("transport given for ({0}, {1}), which is not an incidence pair")]
    NotIncident(String, String),
    #[error("fiber dimension list has length {0}, complex has {1} cells")]
    FiberCount(usize, usize),
    #[error("bundle is not flat around the pair ({0}, {1})")]
    NotFlat(String, String),
    #[error("gauge error: {0}")]
    Gauge(String),
    #[error("invalid path at step {0}: not a codimension-1 incidence")]
    BadPath(usize),
    #[error("cell {0} is not a subcell of {1}")]
    NotASubcell(String, String),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    Lin(#[from] LinError),
}

/// A discrete vector bundle over a cellular complex.
#[derive(Clone, Debug)]
pub struct DiscreteBundle<S: Scalar = Rat> {
    complex: Arc<CellComplex>,
    fiber_dims: Vec<usize>,
    transports: BTreeMap<(usize, usize), Mat<S>>,
}

impl<S: Scalar> DiscreteBundle<S> {
    /// Validates shapes, coverage (exactly one transport per codimension-1
    /// incidence pair) and invertibility.
    pub fn new(
        complex: Arc<CellComplex>,
        fiber_dims: Vec<usize>,
        transports: BTreeMap<(usize, usize), Mat<S>>,
    ) -> Result<Self, BundleError> {
        let n = complex.n_cells();
        if fiber_dims.len() != n {
            return Err(BundleError::FiberCount(fiber_dims.len(), n));
        }
        let name = |id: usize| complex.key(id).to_string();
        for &(t, f) in transports.keys() {
            if complex.rel_orientation(t, f) == 0 {
                return Err(BundleError::NotIncident(name(t), name(f)));
            }
        }
        for t in 0..n {
            for &(f, _) in complex.faces_of(t) {
                let m = transports
                    .get(&(t, f))
                    .ok_or_else(|| BundleError::MissingTransport(name(t), name(f)))?;
                if m.rows() != fiber_dims[t] || m.cols() != fiber_dims[f] {
                    return Err(BundleError::TransportShape(
                        name(t),
                        name(f),
                        m.rows(),
                        m.cols(),
                        fiber_dims[t],
                        fiber_dims[f],
                    ));
                }
                if m.rows() != m.cols() || m.try_inverse_generic().is_none() {
                    return Err(BundleError::NotInvertible(name(t), name(f)));
                }
            }
        }
        Ok(DiscreteBundle {
            complex,
            fiber_dims,
            transports,
        })
    }

    /// The trivial bundle: constant fiber dimension, identity transports.
    pub fn trivial(complex: Arc<CellComplex>, dim: usize) -> Self {
        let mut transports = BTreeMap::new();
        for t in 0..complex.n_cells() {
            for &(f, _) in complex.faces_of(t) {
                transports.insert((t, f), Mat::identity(dim));
            }
        }
        let fiber_dims = vec![dim; complex.n_cells()];
        DiscreteBundle {
            complex,
            fiber_dims,
            transports,
        }
    }

    pub fn complex(&self) -> &CellComplex {
        &self.complex
    }

    pub fn complex_arc(&self) -> Arc<CellComplex> {
        Arc::clone(&self.complex)
    }

    pub fn fiber_dim(&self, id: usize) -> usize {
        self.fiber_dims[id]
    }

    /// Ascending transport on a codimension-1 incidence pair.
    pub fn transport(&self, upper: usize, lower: usize) -> &Mat<S> {
        &self.transports[&(upper, lower)]
    }

    /// Total dimension of the k-cochain space.
    pub fn cochain_dim(&self, k: usize) -> usize {
        self.complex
            .cells_of_dim(k)
            .iter()
            .map(|&id| self.fiber_dims[id])
            .sum()
    }

    /// Offset of a cell's fiber block within the k-cochain coordinates,
    /// where k is the cell's dimension.
    pub fn fiber_offset(&self, id: usize) -> usize {
        self.complex
            .cells_of_dim(self.complex.dim(id))
            .iter()
            .take_while(|&&c| c != id)
            .map(|&c| self.fiber_dims[c])
            .sum()
    }

    /// Extract the block of a k-cochain column belonging to one k-cell.
    pub fn cochain_block(&self, u: &Mat<S>, id: usize) -> Mat<S> {
        let off = self.fiber_offset(id);
        Mat::from_fn(self.fiber_dims[id], 1, |i, _| u.at(off + i, 0).clone())
    }

    /// Matrix of the covariant coboundary from k-cochains to (k+1)-cochains:
    /// the block at (T, T') is `o(T, T') t(T, T')`.
    pub fn covariant_coboundary(&self, k: usize) -> Mat<S> {
        let rows = self.complex.cells_of_dim(k + 1);
        let cols = self.complex.cells_of_dim(k);
        let col_off: BTreeMap<usize, usize> = {
            let mut off = 0;
            cols.iter()
                .map(|&id| {
                    let o = off;
                    off += self.fiber_dims[id];
                    (id, o)
                })
                .collect()
        };
        let mut m = Mat::zero(self.cochain_dim(k + 1), self.cochain_dim(k));
        let mut row_off = 0;
        for &t in rows {
            for &(f, sign) in self.complex.faces_of(t) {
                let tr = &self.transports[&(t, f)];
                let block = if sign == 1 {
                    tr.clone()
                } else {
                    tr.map(|x| x.neg())
                };
                m.paste(row_off, col_off[&f], &block);
            }
            row_off += self.fiber_dims[t];
        }
        m
    }

    /// Codimension-2 pairs where the two transport routes disagree.
    pub fn flatness_violations(&self) -> Vec<(usize, usize)> {
        let mut bad = Vec::new();
        for t in 0..self.complex.n_cells() {
            let d = self.complex.dim(t);
            if d < 2 {
                continue;
            }
            for &f in self.complex.subcells_of(t) {
                if self.complex.dim(f) + 2 == d && !self.curvature(f, t).is_zero() {
                    bad.push((t, f));
                }
            }
        }
        bad
    }

    pub fn is_flat(&self) -> bool {
        self.flatness_violations().is_empty()
    }

    /// The two intermediate cells of a codimension-2 pair, ascending by id.
    fn middle_cells(&self, lower: usize, upper: usize) -> (usize, usize) {
        let mids: Vec<usize> = self
            .complex
            .cofaces_of(lower)
            .iter()
            .map(|&(c, _)| c)
            .filter(|&c| self.complex.is_subcell(c, upper))
            .collect();
        assert_eq!(
            mids.len(),
            2,
            "codimension-2 interval must have exactly two intermediate cells"
        );
        (mids[0], mids[1])
    }

    /// Curvature of a codimension-2 pair: the difference of the two routes,
    /// first route through the id-smaller intermediate cell. Maps the fiber
    /// over `lower` to the fiber over `upper`.
    pub fn curvature(&self, lower: usize, upper: usize) -> Mat<S> {
        let (c1, c2) = self.middle_cells(lower, upper);
        let via = |c: usize| self.transports[&(upper, c)].mul(&self.transports[&(c, lower)]);
        via(c1).sub(&via(c2))
    }

    /// Compose transports along an explicit descending chain of cells.
    pub fn transport_path(&self, path: &[usize]) -> Result<Mat<S>, BundleError> {
        assert!(!path.is_empty(), "empty transport path");
        let mut m = Mat::identity(self.fiber_dims[path[0]]);
        for (i, w) in path.windows(2).enumerate() {
            let tr = self
                .transports
                .get(&(w[0], w[1]))
                .ok_or(BundleError::BadPath(i))?;
            m = m.mul(tr);
        }
        Ok(m)
    }

    fn maximal_chains(&self, upper: usize, lower: usize) -> Vec<Vec<usize>> {
        if upper == lower {
            return vec![vec![upper]];
        }
        let mut out = Vec::new();
        for &(f, _) in self.complex.faces_of(upper) {
            if self.complex.is_subcell(lower, f) {
                for mut tail in self.maximal_chains(f, lower) {
                    tail.insert(0, upper);
                    out.push(tail);
                }
            }
        }
        out
    }

    /// Do all maximal descending chains from `upper` to `lower` compose to
    /// the same transport? (Always true on flat bundles.)
    pub fn path_independence_check(&self, upper: usize, lower: usize) -> Result<bool, BundleError> {
        if !self.complex.is_subcell(lower, upper) {
            return Err(BundleError::NotASubcell(
                self.complex.key(lower).to_string(),
                self.complex.key(upper).to_string(),
            ));
        }
        let chains = self.maximal_chains(upper, lower);
        let first = self.transport_path(&chains[0])?;
        for chain in &chains[1..] {
            if self.transport_path(chain)? != first {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Transport along the id-lexicographically first maximal chain; on a
    /// flat bundle this is the transport, independent of the choice.
    pub fn transport_monotone(&self, upper: usize, lower: usize) -> Result<Mat<S>, BundleError> {
        if !self.complex.is_subcell(lower, upper) {
            return Err(BundleError::NotASubcell(
                self.complex.key(lower).to_string(),
                self.complex.key(upper).to_string(),
            ));
        }
        if upper == lower {
            return Ok(Mat::identity(self.fiber_dims[upper]));
        }
        let next = self
            .complex
            .faces_of(upper)
            .iter()
            .map(|&(f, _)| f)
            .find(|&f| self.complex.is_subcell(lower, f))
            .expect("subcell relation guarantees a descending face");
        Ok(self.transports[&(upper, next)].mul(&self.transport_monotone(next, lower)?))
    }

    /// Apply a gauge transformation: `t'(T,T') = theta_T t(T,T') theta_T'^-1`.
    /// One invertible square matrix per cell, indexed by cell id.
    pub fn gauge_apply(&self, theta: &[Mat<S>]) -> Result<DiscreteBundle<S>, BundleError> {
        if theta.len() != self.complex.n_cells() {
            return Err(BundleError::Gauge(format!(
                "{} gauge matrices for {} cells",
                theta.len(),
                self.complex.n_cells()
            )));
        }
        let mut inv = Vec::with_capacity(theta.len());
        for (id, th) in theta.iter().enumerate() {
            if th.rows() != self.fiber_dims[id] || th.cols() != self.fiber_dims[id] {
                return Err(BundleError::Gauge(format!(
                    "gauge at {} has shape {}x{}, fiber is {}",
                    self.complex.key(id),
                    th.rows(),
                    th.cols(),
                    self.fiber_dims[id]
                )));
            }
            inv.push(th.try_inverse_generic().ok_or_else(|| {
                BundleError::Gauge(format!("gauge at {} is not invertible", self.complex.key(id)))
            })?);
        }
        let transports = self
            .transports
            .iter()
            .map(|(&(t, f), m)| ((t, f), theta[t].mul(m).mul(&inv[f])))
            .collect();
        DiscreteBundle::new(self.complex_arc(), self.fiber_dims.clone(), transports)
    }

    /// Check that `other` is the gauge transform of `self` by `theta`.
    pub fn gauge_check(&self, other: &DiscreteBundle<S>, theta: &[Mat<S>]) -> bool {
        match self.gauge_apply(theta) {
            Ok(g) => g.transports == other.transports && g.fiber_dims == other.fiber_dims,
            Err(_) => false,
        }
    }

    /// Trivializing gauge of a flat bundle over the closure of `top`:
    /// `theta_S = t(top, S)`. Applying it yields identity transports.
    pub fn trivialization(&self, top: usize) -> Result<Vec<Mat<S>>, BundleError> {
        for id in 0..self.complex.n_cells() {
            if !self.complex.is_subcell(id, top) {
                return Err(BundleError::NotASubcell(
                    self.complex.key(id).to_string(),
                    self.complex.key(top).to_string(),
                ));
            }
        }
        if let Some(&(t, f)) = self.flatness_violations().first() {
            return Err(BundleError::NotFlat(
                self.complex.key(f).to_string(),
                self.complex.key(t).to_string(),
            ));
        }
        (0..self.complex.n_cells())
            .map(|id| self.transport_monotone(top, id))
            .collect()
    }

    /// Restriction to a closed set of cells (e.g. the closure of one cell).
    pub fn sub_bundle(&self, ids: &BTreeSet<usize>) -> Result<DiscreteBundle<S>, BundleError> {
        let sub = self.complex.sub_complex(ids)?;
        let old_of_new: Vec<usize> = (0..sub.n_cells())
            .map(|i| self.complex.id_of(sub.key(i)).expect("shared key"))
            .collect();
        let fiber_dims = old_of_new.iter().map(|&o| self.fiber_dims[o]).collect();
        let mut transports = BTreeMap::new();
        for t in 0..sub.n_cells() {
            for &(f, _) in sub.faces_of(t) {
                transports.insert(
                    (t, f),
                    self.transports[&(old_of_new[t], old_of_new[f])].clone(),
                );
            }
        }
        DiscreteBundle::new(Arc::new(sub), fiber_dims, transports)
    }

    /// The endomorphism bundle over the cubical refinement: the fiber over
    /// `S(X, Y)` is `Hom(L(X), L(Y))` vectorized column-major; raising the
    /// upper cell post-composes a transport, raising the lower cell
    /// pre-composes one.
    pub fn end_bundle(&self) -> Result<DiscreteBundle<S>, BundleError> {
        let refined = Arc::new(self.complex.cubical_refinement()?);
        let base_ids = |key: &CellKey| -> (usize, usize) {
            match key {
                CellKey::Pair(a, b) => (
                    self.complex.id_of(a).expect("refinement key"),
                    self.complex.id_of(b).expect("refinement key"),
                ),
                _ => unreachable!("refinement cells are pairs"),
            }
        };
        let fiber_dims: Vec<usize> = (0..refined.n_cells())
            .map(|id| {
                let (x, y) = base_ids(refined.key(id));
                self.fiber_dims[x] * self.fiber_dims[y]
            })
            .collect();
        let mut transports = BTreeMap::new();
        for t in 0..refined.n_cells() {
            let (x, y) = base_ids(refined.key(t));
            for &(f, _) in refined.faces_of(t) {
                let (fx, fy) = base_ids(refined.key(f));
                let m = if fx == x {
                    // upper raised from fy to y: U -> t(y, fy) U
                    Mat::kron(&Mat::identity(self.fiber_dims[x]), &self.transports[&(y, fy)])
                } else {
                    // lower raised from x to fx: U -> U t(fx, x)
                    debug_assert_eq!(fy, y);
                    Mat::kron(
                        &self.transports[&(fx, x)].transpose(),
                        &Mat::identity(self.fiber_dims[y]),
                    )
                };
                transports.insert((t, f), m);
            }
        }
        DiscreteBundle::new(refined, fiber_dims, transports)
    }

    /// The curvature 2-cochain of `self` as a column over the 2-cells of the
    /// refinement carried by `end` (which must be `self.end_bundle()`).
    pub fn curvature_cochain(&self, end: &DiscreteBundle<S>) -> Mat<S> {
        let mut u = Mat::zero(end.cochain_dim(2), 1);
        for &id in end.complex.cells_of_dim(2) {
            let (x, y) = match end.complex.key(id) {
                CellKey::Pair(a, b) => (
                    self.complex.id_of(a).expect("refinement key"),
                    self.complex.id_of(b).expect("refinement key"),
                ),
                _ => unreachable!(),
            };
            u.paste(end.fiber_offset(id), 0, &self.curvature(x, y).vec_col());
        }
        u
    }

    /// The transport 1-cochain (vectorized transports on incidence pairs) on
    /// the refinement; its covariant coboundary is twice the curvature.
    pub fn transport_cochain(&self, end: &DiscreteBundle<S>) -> Mat<S> {
        let mut u = Mat::zero(end.cochain_dim(1), 1);
        for &id in end.complex.cells_of_dim(1) {
            let (x, y) = match end.complex.key(id) {
                CellKey::Pair(a, b) => (
                    self.complex.id_of(a).expect("refinement key"),
                    self.complex.id_of(b).expect("refinement key"),
                ),
                _ => unreachable!(),
            };
            u.paste(end.fiber_offset(id), 0, &self.transports[&(y, x)].vec_col());
        }
        u
    }

    /// Covariant coboundary of the curvature cochain, block per 3-cell of
    /// the refinement. The differential Bianchi identity says every block is
    /// zero, flat or not.
    pub fn bianchi_residuals(&self) -> Result<Vec<(CellKey, Mat<S>)>, BundleError> {
        let end = self.end_bundle()?;
        let resid = end.covariant_coboundary(2).mul(&self.curvature_cochain(&end));
        Ok(end
            .complex
            .cells_of_dim(3)
            .iter()
            .map(|&id| (end.complex.key(id).clone(), end.cochain_block(&resid, id)))
            .collect())
    }
}

impl DiscreteBundle<Rat> {
    /// The cochain complex of a flat bundle (fails the square-zero check and
    /// errors if the bundle is curved).
    pub fn cochain_complex(&self) -> Result<MatrixComplex, LinError> {
        let n = self.complex.top_dim();
        let dims = (0..=n).map(|k| self.cochain_dim(k)).collect();
        let maps = (0..n).map(|k| self.covariant_coboundary(k)).collect();
        MatrixComplex::new(dims, maps)
    }

    /// Cohomology dimensions of the restriction to the closure of one cell.
    pub fn closure_cohomology(&self, top: usize) -> Result<Vec<usize>, BundleError> {
        let sub = self.sub_bundle(self.complex.subcells_of(top))?;
        Ok(sub.cochain_complex()?.cohomology_dims())
    }

    /// Largest absolute value among the Bianchi residual entries.
    pub fn bianchi_max_abs(&self) -> Result<Rat, BundleError> {
        let mut m = rint(0);
        for (_, block) in self.bianchi_residuals()? {
            let b = block.max_abs();
            if b > m {
                m = b;
            }
        }
        Ok(m)
    }
}

fn random_invertible(rng: &mut ChaCha8Rng, n: usize) -> Mat<Rat> {
    loop {
        let m = Mat::from_fn(n, n, |i, j| {
            let noise = rat(rng.gen_range(-1i64..=1), 2);
            if i == j {
                rint(1) + noise
            } else {
                noise
            }
        });
        if m.is_invertible() {
            return m;
        }
    }
}

/// A seeded random bundle with constant fiber dimension: every transport is
/// the identity plus half-integer noise, resampled until invertible. Such
/// bundles are generically curved.
pub fn random_bundle(complex: Arc<CellComplex>, fiber_dim: usize, seed: u64) -> DiscreteBundle<Rat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transports = BTreeMap::new();
    for t in 0..complex.n_cells() {
        for &(f, _) in complex.faces_of(t) {
            transports.insert((t, f), random_invertible(&mut rng, fiber_dim));
        }
    }
    let dims = vec![fiber_dim; complex.n_cells()];
    DiscreteBundle::new(complex, dims, transports).expect("sampled transports are invertible")
}

/// A seeded random flat bundle: the trivial bundle gauged by a random
/// invertible matrix per cell, so `t(T,T') = theta_T theta_T'^-1`. Flat by
/// construction, with non-trivial transports.
pub fn random_flat_bundle(
    complex: Arc<CellComplex>,
    fiber_dim: usize,
    seed: u64,
) -> DiscreteBundle<Rat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta: Vec<Mat<Rat>> = (0..complex.n_cells())
        .map(|_| random_invertible(&mut rng, fiber_dim))
        .collect();
    DiscreteBundle::trivial(complex, fiber_dim)
        .gauge_apply(&theta)
        .expect("gauge matrices are invertible")
}

/// The exponential-fitting bundle: one-dimensional fibers over the formal
/// exponential ring, with `t(T,T') = exp(a . (x_T' - x_T))` between the
/// isobarycenters of the cells. Exactly flat, since exponents add along any
/// route.
pub fn exponential_fitting_bundle(
    complex: Arc<CellComplex>,
    coords: &BTreeMap<usize, [Rat; 2]>,
    direction: &[Rat; 2],
) -> DiscreteBundle<ExpSum> {
    let inpoint = |id: usize| -> [Rat; 2] {
        let vs = complex.vertex_cells_of(id);
        let n = rint(vs.len() as i64);
        let mut p = [rint(0), rint(0)];
        for v in &vs {
            let c = &coords[v];
            p[0] += &c[0];
            p[1] += &c[1];
        }
        [p[0].clone() / n.clone(), p[1].clone() / n]
    };
    let mut transports = BTreeMap::new();
    for t in 0..complex.n_cells() {
        let xt = inpoint(t);
        for &(f, _) in complex.faces_of(t) {
            let xf = inpoint(f);
            let q = direction[0].clone() * (xf[0].clone() - xt[0].clone())
                + direction[1].clone() * (xf[1].clone() - xt[1].clone());
            transports.insert((t, f), Mat::from_fn(1, 1, |_, _| ExpSum::exp(q.clone())));
        }
    }
    let dims = vec![1; complex.n_cells()];
    DiscreteBundle::new(complex, dims, transports).expect("exponentials are units")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::CellComplex;

    fn tetra() -> Arc<CellComplex> {
        Arc::new(CellComplex::simplicial(&[vec![0, 1, 2, 3]]))
    }

    fn triangle() -> Arc<CellComplex> {
        Arc::new(CellComplex::simplicial(&[vec![0, 1, 2]]))
    }

    #[test]
    fn trivial_bundle_coboundary_matches_complex_coboundary() {
        let k = triangle();
        let b = DiscreteBundle::<Rat>::trivial(Arc::clone(&k), 1);
        for deg in 0..2 {
            assert_eq!(b.covariant_coboundary(deg), k.coboundary_matrix(deg));
        }
    }

    #[test]
    fn curvature_of_scalar_triangle_bundle_is_route_difference() {
        // One-dimensional fibers: set the two edge-to-vertex legs around the
        // pair (triangle, vertex 0) to known scalars and check a*b - c*d.
        let k = triangle();
        let key = |vs: &[usize]| CellKey::simplex(vs.to_vec());
        let id = |vs: &[usize]| k.id_of(&key(vs)).unwrap();
        let mut transports = BTreeMap::new();
        for t in 0..k.n_cells() {
            for &(f, _) in k.faces_of(t) {
                transports.insert((t, f), Mat::from_fn(1, 1, |_, _| rint(1)));
            }
        }
        let (tri, e01, e02, v0) = (id(&[0, 1, 2]), id(&[0, 1]), id(&[0, 2]), id(&[0]));
        transports.insert((e01, v0), Mat::from_fn(1, 1, |_, _| rint(3)));
        transports.insert((e02, v0), Mat::from_fn(1, 1, |_, _| rint(7)));
        let b =
            DiscreteBundle::new(Arc::clone(&k), vec![1; k.n_cells()], transports).unwrap();
        // Intermediate cells of [v0, tri] are the edges [0,1] < [0,2].
        assert_eq!(b.curvature(v0, tri).at(0, 0), &rint(3 - 7));
        assert!(!b.is_flat());
        assert_eq!(b.flatness_violations(), vec![(tri, v0)]);
        assert!(!b.path_independence_check(tri, v0).unwrap());
        assert!(b.path_independence_check(tri, id(&[1])).unwrap());
    }

    #[test]
    fn random_flat_bundle_is_flat_and_curved_one_is_not() {
        let k = tetra();
        for dim in 1..=3 {
            let flat = random_flat_bundle(Arc::clone(&k), dim, 11 + dim as u64);
            assert!(flat.is_flat());
            for v in 0..4 {
                let vid = k.id_of(&CellKey::simplex(vec![v])).unwrap();
                let top = k.id_of(&CellKey::simplex(vec![0, 1, 2, 3])).unwrap();
                assert!(flat.path_independence_check(top, vid).unwrap());
            }
        }
        let curved = random_bundle(Arc::clone(&k), 2, 0);
        assert!(!curved.is_flat(), "seed 0 yields a curved bundle");
    }

    #[test]
    fn trivialization_gauges_a_flat_bundle_to_identity() {
        let k = tetra();
        let top = k.id_of(&CellKey::simplex(vec![0, 1, 2, 3])).unwrap();
        let flat = random_flat_bundle(Arc::clone(&k), 2, 5);
        let theta = flat.trivialization(top).unwrap();
        let trivial = flat.gauge_apply(&theta).unwrap();
        for t in 0..k.n_cells() {
            for &(f, _) in k.faces_of(t) {
                assert_eq!(trivial.transport(t, f), &Mat::identity(2));
            }
        }
        assert!(flat.gauge_check(&trivial, &theta));
        // A curved bundle refuses to trivialize.
        let curved = random_bundle(Arc::clone(&k), 2, 0);
        assert!(matches!(
            curved.trivialization(top),
            Err(BundleError::NotFlat(_, _))
        ));
    }

    #[test]
    fn gauge_conjugates_curvature() {
        let k = tetra();
        let b = random_bundle(Arc::clone(&k), 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let theta: Vec<Mat<Rat>> = (0..k.n_cells())
            .map(|_| random_invertible(&mut rng, 2))
            .collect();
        let g = b.gauge_apply(&theta).unwrap();
        for t in 0..k.n_cells() {
            if k.dim(t) < 2 {
                continue;
            }
            for &f in k.subcells_of(t) {
                if k.dim(f) + 2 == k.dim(t) {
                    let expect = theta[t]
                        .mul(&b.curvature(f, t))
                        .mul(&theta[f].try_inverse_generic().unwrap());
                    assert_eq!(g.curvature(f, t), expect);
                }
            }
        }
    }

    #[test]
    fn squared_coboundary_blocks_are_signed_curvature() {
        let k = tetra();
        let b = random_bundle(Arc::clone(&k), 2, 7);
        for deg in 0..=1usize {
            let dd = b.covariant_coboundary(deg + 1).mul(&b.covariant_coboundary(deg));
            for &t in k.cells_of_dim(deg + 2) {
                for &f in k.cells_of_dim(deg) {
                    let block = Mat::from_fn(b.fiber_dim(t), b.fiber_dim(f), |i, j| {
                        dd.at(b.fiber_offset(t) + i, b.fiber_offset(f) + j).clone()
                    });
                    if !k.is_subcell(f, t) {
                        assert!(block.is_zero());
                        continue;
                    }
                    let (c1, _) = b.middle_cells(f, t);
                    let s = rint((k.rel_orientation(t, c1) * k.rel_orientation(c1, f)) as i64);
                    assert_eq!(block, b.curvature(f, t).scale(&s));
                }
            }
        }
    }

    #[test]
    fn coboundary_of_transport_cochain_is_twice_curvature() {
        let k = tetra();
        let b = random_bundle(Arc::clone(&k), 2, 13);
        let end = b.end_bundle().unwrap();
        let dtau = end.covariant_coboundary(1).mul(&b.transport_cochain(&end));
        let two_c = b.curvature_cochain(&end).scale(&rint(2));
        assert_eq!(dtau, two_c);
    }

    #[test]
    fn bianchi_residual_vanishes_for_random_bundles() {
        for (tops, seeds) in [
            (vec![vec![0, 1, 2, 3]], 0..6u64),
            (vec![vec![0, 1, 2, 3, 4]], 0..3u64),
        ] {
            let k = Arc::new(CellComplex::simplicial(&tops));
            for seed in seeds {
                let dim = 1 + (seed as usize) % 3;
                let b = random_bundle(Arc::clone(&k), dim, seed);
                assert_eq!(b.bianchi_max_abs().unwrap(), rint(0), "seed {seed} dim {dim}");
            }
        }
    }

    #[test]
    fn flat_bundle_closure_cohomology_is_fiber_dimension_in_degree_zero() {
        let k = tetra();
        for dim in 1..=3 {
            let b = random_flat_bundle(Arc::clone(&k), dim, 40 + dim as u64);
            for id in 0..k.n_cells() {
                let h = b.closure_cohomology(id).unwrap();
                let mut expect = vec![0; k.dim(id) + 1];
                expect[0] = dim;
                assert_eq!(h, expect, "closure of {}", k.key(id));
            }
        }
    }

    #[test]
    fn curved_bundle_has_no_cochain_complex() {
        let k = tetra();
        let b = random_bundle(Arc::clone(&k), 2, 0);
        assert!(b.cochain_complex().is_err());
    }

    #[test]
    fn exponential_fitting_bundle_is_exactly_flat() {
        let k = Arc::new(CellComplex::simplicial(&[vec![0, 1, 2], vec![1, 2, 3]]));
        let coords: BTreeMap<usize, [Rat; 2]> = [
            (vec![0], [rint(0), rint(0)]),
            (vec![1], [rint(1), rint(0)]),
            (vec![2], [rint(0), rint(1)]),
            (vec![3], [rint(1), rint(1)]),
        ]
        .into_iter()
        .map(|(vs, p)| (k.id_of(&CellKey::simplex(vs)).unwrap(), p))
        .collect();
        let b = exponential_fitting_bundle(Arc::clone(&k), &coords, &[rat(3, 2), rat(-1, 3)]);
        assert!(b.is_flat());
        // Transports are single exponential terms, hence units.
        let t = k.id_of(&CellKey::simplex(vec![0, 1, 2])).unwrap();
        let (f, _) = k.faces_of(t)[0];
        let m = b.transport(t, f);
        assert_eq!(m.at(0, 0).terms().len(), 1);
        // Trivialization works over the exponential ring on one closure.
        let sub = b.sub_bundle(k.subcells_of(t)).unwrap();
        let sub_top = sub.complex().id_of(k.key(t)).unwrap();
        let theta = sub.trivialization(sub_top).unwrap();
        let trivial = sub.gauge_apply(&theta).unwrap();
        for tt in 0..sub.complex().n_cells() {
            for &(ff, _) in sub.complex().faces_of(tt) {
                assert_eq!(trivial.transport(tt, ff), &Mat::identity(1));
            }
        }
    }

    #[test]
    fn validation_rejects_bad_bundles() {
        let k = triangle();
        // Missing transport.
        let err = DiscreteBundle::<Rat>::new(Arc::clone(&k), vec![1; k.n_cells()], BTreeMap::new());
        assert!(matches!(err, Err(BundleError::MissingTransport(_, _))));
        // Non-invertible transport.
        let mut transports = BTreeMap::new();
        for t in 0..k.n_cells() {
            for &(f, _) in k.faces_of(t) {
                transports.insert((t, f), Mat::from_fn(1, 1, |_, _| rint(1)));
            }
        }
        let t = k.id_of(&CellKey::simplex(vec![0, 1, 2])).unwrap();
        let (f, _) = k.faces_of(t)[0];
        let mut bad = transports.clone();
        bad.insert((t, f), Mat::from_fn(1, 1, |_, _| rint(0)));
        assert!(matches!(
            DiscreteBundle::new(Arc::clone(&k), vec![1; k.n_cells()], bad),
            Err(BundleError::NotInvertible(_, _))
        ));
        // Wrong shape.
        let mut bad = transports.clone();
        bad.insert((t, f), Mat::identity(2));
        assert!(matches!(
            DiscreteBundle::new(Arc::clone(&k), vec![1; k.n_cells()], bad),
            Err(BundleError::TransportShape(_, _, _, _, _, _))
        ));
        // Transport on a non-incident pair.
        let v0 = k.id_of(&CellKey::simplex(vec![0])).unwrap();
        let mut bad = transports.clone();
        bad.insert((t, v0), Mat::identity(1));
        assert!(matches!(
            DiscreteBundle::new(Arc::clone(&k), vec![1; k.n_cells()], bad),
            Err(BundleError::NotIncident(_, _))
        ));
    }
}
