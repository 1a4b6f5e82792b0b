//! Exact dense linear algebra over the rationals.
//!
//! `Mat<S>` is a dense row-major matrix over a `Scalar` ring. Ring
//! operations (products, sums, blocks, Kronecker products) are generic;
//! rank, kernels, solving, and inverses live on `Mat<Rat>` where division is
//! available. Every dimension, unisolvence, and cohomology claim in the
//! crate reduces to `rank` and `nullspace_basis` here, so `rank` ships with
//! an independently implemented cross-check: `rank_bareiss`, fraction-free
//! integer elimination with a different pivoting order.
//!
//! `MatrixComplex` packages a sequence of differentials with the `D*D = 0`
//! property checked at construction; `cohomology_dims` and
//! `induced_cohomology_iso` are the backbone of every exactness and de Rham
//! statement verified by the higher layers.

use crate::rat::{Rat, Scalar};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::Signed;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("maps do not form a complex: D_{next} * D_{k} != 0", next = k + 1)]
    NotAComplex { k: usize },
    #[error("not a chain map at degree {degree}")]
    NotChainMap { degree: usize },
    #[error("matrix count mismatch: expected {expected}, got {got}")]
    MapCount { expected: usize, got: usize },
}

/// Dense row-major matrix over a scalar ring.
#[derive(Clone, PartialEq, Eq)]
pub struct Mat<S = Rat> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn new(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must be rows*cols");
        Mat { rows, cols, data }
    }

    pub fn zero(rows: usize, cols: usize) -> Self {
        Mat::new(rows, cols, vec![S::zero(); rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zero(n, n);
        for i in 0..n {
            m.set(i, i, S::one());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    /// Build from row vectors; every row must have the same length.
    pub fn from_rows(rows: Vec<Vec<S>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        for row in &rows {
            assert_eq!(row.len(), c, "ragged rows");
        }
        Mat {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        }
    }

    /// Build from column vectors; `n` is the column height (needed when the
    /// list is empty).
    pub fn from_cols(n: usize, cols: Vec<Vec<S>>) -> Self {
        for col in &cols {
            assert_eq!(col.len(), n, "column height mismatch");
        }
        Mat::from_fn(n, cols.len(), |i, j| cols[j][i].clone())
    }

    /// A single-column matrix.
    pub fn col_vec(v: Vec<S>) -> Self {
        let n = v.len();
        Mat::new(n, 1, v)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> &S {
        assert!(i < self.rows && j < self.cols, "index out of range");
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: S) {
        assert!(i < self.rows && j < self.cols, "index out of range");
        self.data[i * self.cols + j] = v;
    }

    pub fn col(&self, j: usize) -> Vec<S> {
        (0..self.rows).map(|i| self.at(i, j).clone()).collect()
    }

    pub fn row(&self, i: usize) -> Vec<S> {
        self.data[i * self.cols..(i + 1) * self.cols].to_vec()
    }

    pub fn transpose(&self) -> Self {
        Mat::from_fn(self.cols, self.rows, |i, j| self.at(j, i).clone())
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(
            self.cols, rhs.rows,
            "product shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        Mat::from_fn(self.rows, rhs.cols, |i, j| {
            let mut acc = S::zero();
            for k in 0..self.cols {
                acc = acc.add(&self.at(i, k).mul(rhs.at(k, j)));
            }
            acc
        })
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert!(self.rows == rhs.rows && self.cols == rhs.cols, "sum shape mismatch");
        Mat::from_fn(self.rows, self.cols, |i, j| self.at(i, j).add(rhs.at(i, j)))
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert!(self.rows == rhs.rows && self.cols == rhs.cols, "difference shape mismatch");
        Mat::from_fn(self.rows, self.cols, |i, j| self.at(i, j).sub(rhs.at(i, j)))
    }

    pub fn neg(&self) -> Self {
        Mat::from_fn(self.rows, self.cols, |i, j| self.at(i, j).neg())
    }

    pub fn scale(&self, s: &S) -> Self {
        Mat::from_fn(self.rows, self.cols, |i, j| self.at(i, j).mul(s))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(S::is_zero)
    }

    /// Horizontal concatenation.
    pub fn hstack(parts: &[&Mat<S>]) -> Self {
        assert!(!parts.is_empty(), "hstack of nothing");
        let rows = parts[0].rows;
        for p in parts {
            assert_eq!(p.rows, rows, "hstack row mismatch");
        }
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut m = Mat::zero(rows, cols);
        let mut off = 0;
        for p in parts {
            for i in 0..rows {
                for j in 0..p.cols {
                    m.set(i, off + j, p.at(i, j).clone());
                }
            }
            off += p.cols;
        }
        m
    }

    /// Vertical concatenation.
    pub fn vstack(parts: &[&Mat<S>]) -> Self {
        assert!(!parts.is_empty(), "vstack of nothing");
        let cols = parts[0].cols;
        for p in parts {
            assert_eq!(p.cols, cols, "vstack column mismatch");
        }
        let rows = parts.iter().map(|p| p.rows).sum();
        let mut m = Mat::zero(rows, cols);
        let mut off = 0;
        for p in parts {
            for i in 0..p.rows {
                for j in 0..cols {
                    m.set(off + i, j, p.at(i, j).clone());
                }
            }
            off += p.rows;
        }
        m
    }

    /// The submatrix made of the given columns, in the given order.
    pub fn select_cols(&self, idx: &[usize]) -> Self {
        Mat::from_fn(self.rows, idx.len(), |i, j| self.at(i, idx[j]).clone())
    }

    /// Copy `block` into `self` with its top-left corner at (r0, c0).
    pub fn paste(&mut self, r0: usize, c0: usize, block: &Mat<S>) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols, "paste out of range");
        for i in 0..block.rows {
            for j in 0..block.cols {
                self.set(r0 + i, c0 + j, block.at(i, j).clone());
            }
        }
    }

    /// Kronecker product; with column-major vectorization of matrices,
    /// `vec(A U B) = kron(B^T, A) vec(U)`.
    pub fn kron(a: &Mat<S>, b: &Mat<S>) -> Self {
        Mat::from_fn(a.rows * b.rows, a.cols * b.cols, |i, j| {
            let (ia, ib) = (i / b.rows, i % b.rows);
            let (ja, jb) = (j / b.cols, j % b.cols);
            a.at(ia, ja).mul(b.at(ib, jb))
        })
    }

    pub fn map<T: Scalar>(&self, mut f: impl FnMut(&S) -> T) -> Mat<T> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(&mut f).collect(),
        }
    }

    /// Column-major vectorization: the columns stacked into one column.
    pub fn vec_col(&self) -> Mat<S> {
        let mut v = Mat::zero(self.rows * self.cols, 1);
        for j in 0..self.cols {
            for i in 0..self.rows {
                v.set(j * self.rows + i, 0, self.at(i, j).clone());
            }
        }
        v
    }

    /// Inverse of the vectorization: reshape a column into rows x cols.
    pub fn unvec(v: &Mat<S>, rows: usize, cols: usize) -> Mat<S> {
        assert_eq!(v.cols, 1, "unvec expects a column");
        assert_eq!(v.rows, rows * cols, "unvec length mismatch");
        Mat::from_fn(rows, cols, |i, j| v.at(j * rows + i, 0).clone())
    }

    /// Gauss-Jordan inverse over any scalar ring, pivoting only on entries
    /// whose `try_inverse` succeeds. Over a field this inverts every
    /// invertible matrix; over a ring it is sufficient for the matrices this
    /// crate builds (unit diagonal after elimination), and `None` means no
    /// unit pivot was available, not necessarily non-invertibility.
    pub fn try_inverse_generic(&self) -> Option<Mat<S>> {
        assert_eq!(self.rows, self.cols, "inverse of a non-square matrix");
        let n = self.rows;
        let mut a = self.clone();
        let mut inv: Mat<S> = Mat::identity(n);
        for col in 0..n {
            let (piv, pinv) = (col..n).find_map(|r| {
                a.at(r, col).try_inverse().map(|x| (r, x))
            })?;
            if piv != col {
                for j in 0..n {
                    let (x, y) = (a.at(col, j).clone(), a.at(piv, j).clone());
                    a.set(col, j, y);
                    a.set(piv, j, x);
                    let (x, y) = (inv.at(col, j).clone(), inv.at(piv, j).clone());
                    inv.set(col, j, y);
                    inv.set(piv, j, x);
                }
            }
            for j in 0..n {
                a.set(col, j, pinv.mul(a.at(col, j)));
                inv.set(col, j, pinv.mul(inv.at(col, j)));
            }
            for r in 0..n {
                if r != col && !Scalar::is_zero(a.at(r, col)) {
                    let f = a.at(r, col).clone();
                    for j in 0..n {
                        let x = a.at(r, j).sub(&f.mul(a.at(col, j)));
                        a.set(r, j, x);
                        let x = inv.at(r, j).sub(&f.mul(inv.at(col, j)));
                        inv.set(r, j, x);
                    }
                }
            }
        }
        Some(inv)
    }
}

impl<S: Scalar + std::fmt::Display> std::fmt::Display for Mat<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "[{}x{}]", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| self.at(i, j).to_string()).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl<S: Scalar> std::fmt::Debug for Mat<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Mat({}x{})", self.rows, self.cols)?;
        if self.rows * self.cols <= 64 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

/// Result of Gauss-Jordan elimination: the reduced matrix and the pivot
/// positions (row, column) in order.
pub struct Rref {
    pub mat: Mat,
    pub pivots: Vec<(usize, usize)>,
}

impl Mat<Rat> {
    /// Reduced row echelon form, scanning columns left to right and taking
    /// the first nonzero entry in each column as pivot.
    pub fn rref(&self) -> Rref {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..m.cols {
            if r == m.rows {
                break;
            }
            let Some(p) = (r..m.rows).find(|&i| !m.at(i, c).is_zero()) else {
                continue;
            };
            if p != r {
                for j in 0..m.cols {
                    m.data.swap(p * m.cols + j, r * m.cols + j);
                }
            }
            let inv = m.at(r, c).try_inverse().expect("pivot is nonzero");
            for j in c..m.cols {
                let v = m.at(r, j) * &inv;
                m.set(r, j, v);
            }
            for i in 0..m.rows {
                if i == r || m.at(i, c).is_zero() {
                    continue;
                }
                let f = m.at(i, c).clone();
                for j in c..m.cols {
                    let v = m.at(i, j) - &f * m.at(r, j);
                    m.set(i, j, v);
                }
            }
            pivots.push((r, c));
            r += 1;
        }
        Rref { mat: m, pivots }
    }

    pub fn rank(&self) -> usize {
        self.rref().pivots.len()
    }

    /// Independent cross-check for `rank`: clear denominators row by row,
    /// then run one-step fraction-free (Bareiss) elimination over the
    /// integers, picking the *last* nonzero entry of each column as pivot.
    pub fn rank_bareiss(&self) -> usize {
        let zero = BigInt::from(0);
        let mut m: Vec<Vec<BigInt>> = (0..self.rows)
            .map(|i| {
                let lcm = (0..self.cols)
                    .map(|j| self.at(i, j).denom().clone())
                    .fold(BigInt::from(1), |a, b| a.lcm(&b));
                (0..self.cols)
                    .map(|j| {
                        let e = self.at(i, j);
                        e.numer() * (&lcm / e.denom())
                    })
                    .collect()
            })
            .collect();
        let mut prev = BigInt::from(1);
        let mut r = 0;
        for c in 0..self.cols {
            if r == self.rows {
                break;
            }
            let Some(p) = (r..self.rows).rev().find(|&i| m[i][c] != zero) else {
                continue;
            };
            m.swap(p, r);
            for i in r + 1..self.rows {
                for j in c + 1..self.cols {
                    let num = &m[r][c] * &m[i][j] - &m[i][c] * &m[r][j];
                    m[i][j] = num / &prev; // exact by the Bareiss identity
                }
                m[i][c] = zero.clone();
            }
            prev = m[r][c].clone();
            r += 1;
        }
        r
    }

    /// Columns forming a basis of the kernel, ordered by free column index.
    pub fn nullspace_basis(&self) -> Mat {
        let rr = self.rref();
        let pivot_cols: Vec<usize> = rr.pivots.iter().map(|&(_, c)| c).collect();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivot_cols.contains(c)).collect();
        let mut basis = Mat::zero(self.cols, free.len());
        for (k, &f) in free.iter().enumerate() {
            basis.set(f, k, Rat::one());
            for &(r, c) in &rr.pivots {
                basis.set(c, k, -rr.mat.at(r, f).clone());
            }
        }
        basis
    }

    /// Solve `self * X = b` (multi-column right-hand side). Returns any
    /// solution (free variables set to zero) or `None` if inconsistent.
    pub fn solve(&self, b: &Mat) -> Option<Mat> {
        assert_eq!(self.rows, b.rows, "solve: rhs height mismatch");
        let aug = Mat::hstack(&[self, b]);
        let rr = aug.rref();
        for &(_, c) in &rr.pivots {
            if c >= self.cols {
                return None;
            }
        }
        let mut x = Mat::zero(self.cols, b.cols);
        for &(r, c) in &rr.pivots {
            for j in 0..b.cols {
                x.set(c, j, rr.mat.at(r, self.cols + j).clone());
            }
        }
        Some(x)
    }

    pub fn inverse(&self) -> Option<Mat> {
        if self.rows != self.cols {
            return None;
        }
        let aug = Mat::hstack(&[self, &Mat::identity(self.rows)]);
        let rr = aug.rref();
        // The identity block keeps the augmented matrix at full row rank,
        // so the pivot count alone cannot detect singularity: every pivot
        // must also land inside the original columns.
        if rr.pivots.len() != self.rows || rr.pivots.iter().any(|&(_, c)| c >= self.cols) {
            return None;
        }
        let idx: Vec<usize> = (self.cols..2 * self.cols).collect();
        Some(rr.mat.select_cols(&idx))
    }

    pub fn is_invertible(&self) -> bool {
        self.rows == self.cols && self.rank() == self.rows
    }

    /// Indices of a subset of columns forming a basis of the column space.
    pub fn independent_columns(&self) -> Vec<usize> {
        self.rref().pivots.iter().map(|&(_, c)| c).collect()
    }

    /// Maximum of |entry| over the matrix (zero for empty matrices).
    pub fn max_abs(&self) -> Rat {
        self.data
            .iter()
            .map(|x| x.abs())
            .max()
            .unwrap_or_else(Rat::zero)
    }
}

/// Incremental span of column vectors, used to extend bases and test
/// membership without re-eliminating from scratch.
pub struct SpanBuilder {
    n: usize,
    rows: Vec<(usize, Vec<Rat>)>, // (leading index, reduced vector with lead 1)
}

impl SpanBuilder {
    pub fn new(n: usize) -> Self {
        SpanBuilder { n, rows: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    fn reduce(&self, v: &mut [Rat]) {
        for (lead, row) in &self.rows {
            if !v[*lead].is_zero() {
                let f = v[*lead].clone();
                for j in *lead..self.n {
                    v[j] = &v[j] - &(&f * &row[j]);
                }
            }
        }
    }

    /// Add a vector to the span. Returns true if it was independent.
    pub fn insert(&mut self, v: &[Rat]) -> bool {
        assert_eq!(v.len(), self.n, "span vector length mismatch");
        let mut w = v.to_vec();
        self.reduce(&mut w);
        let Some(lead) = w.iter().position(|x| !x.is_zero()) else {
            return false;
        };
        let inv = w[lead].try_inverse().expect("nonzero lead");
        for x in w.iter_mut() {
            *x = &*x * &inv;
        }
        self.rows.push((lead, w));
        self.rows.sort_by_key(|(l, _)| *l);
        true
    }

    pub fn contains(&self, v: &[Rat]) -> bool {
        assert_eq!(v.len(), self.n);
        let mut w = v.to_vec();
        self.reduce(&mut w);
        w.iter().all(|x| x.is_zero())
    }
}

/// Extend the span of `base`'s columns to include independent columns of
/// `extra`; returns the indices into `extra` of the accepted columns.
pub fn extend_basis(base: &Mat, extra: &Mat) -> Vec<usize> {
    assert_eq!(base.rows(), extra.rows(), "extend_basis height mismatch");
    let mut span = SpanBuilder::new(base.rows());
    for j in 0..base.cols() {
        span.insert(&base.col(j));
    }
    let mut accepted = Vec::new();
    for j in 0..extra.cols() {
        if span.insert(&extra.col(j)) {
            accepted.push(j);
        }
    }
    accepted
}

/// A finite sequence of spaces and differentials with `D_{k+1} D_k = 0`,
/// verified at construction.
#[derive(Clone, Debug)]
pub struct MatrixComplex {
    dims: Vec<usize>,
    maps: Vec<Mat>,
}

impl MatrixComplex {
    pub fn new(dims: Vec<usize>, maps: Vec<Mat>) -> Result<Self, LinError> {
        if maps.len() + 1 != dims.len() {
            return Err(LinError::MapCount {
                expected: dims.len().saturating_sub(1),
                got: maps.len(),
            });
        }
        for (k, m) in maps.iter().enumerate() {
            if m.cols() != dims[k] || m.rows() != dims[k + 1] {
                return Err(LinError::Shape(format!(
                    "D_{k} is {}x{}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    dims[k + 1],
                    dims[k]
                )));
            }
        }
        for k in 0..maps.len().saturating_sub(1) {
            if !maps[k + 1].mul(&maps[k]).is_zero() {
                return Err(LinError::NotAComplex { k });
            }
        }
        Ok(MatrixComplex { dims, maps })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn maps(&self) -> &[Mat] {
        &self.maps
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    /// Basis of the space of k-cocycles (kernel of the outgoing map).
    pub fn cocycles(&self, k: usize) -> Mat {
        if k + 1 < self.dims.len() {
            self.maps[k].nullspace_basis()
        } else {
            Mat::identity(self.dims[k])
        }
    }

    /// Basis of the space of k-coboundaries (image of the incoming map),
    /// as independent columns of D_{k-1}.
    pub fn coboundaries(&self, k: usize) -> Mat {
        if k == 0 {
            Mat::zero(self.dims[0], 0)
        } else {
            let d = &self.maps[k - 1];
            d.select_cols(&d.independent_columns())
        }
    }

    /// dim H^k for each k.
    pub fn cohomology_dims(&self) -> Vec<usize> {
        (0..self.dims.len())
            .map(|k| self.cocycles(k).cols() - self.coboundaries(k).cols())
            .collect()
    }
}

/// Outcome of comparing cohomology through a chain map, per degree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DegreeVerdict {
    pub degree: usize,
    pub h_src: usize,
    pub h_dst: usize,
    pub injective: bool,
    pub surjective: bool,
}

impl DegreeVerdict {
    pub fn bijective(&self) -> bool {
        self.injective && self.surjective
    }
}

/// Verify `maps` is a chain map from `src` to `dst` and compute, degree by
/// degree, whether the induced map on cohomology is injective/surjective.
pub fn induced_cohomology_iso(
    src: &MatrixComplex,
    dst: &MatrixComplex,
    maps: &[Mat],
) -> Result<Vec<DegreeVerdict>, LinError> {
    if src.len() != dst.len() {
        return Err(LinError::Shape(format!(
            "complex length mismatch: {} vs {}",
            src.len(),
            dst.len()
        )));
    }
    if maps.len() != src.len() {
        return Err(LinError::MapCount {
            expected: src.len(),
            got: maps.len(),
        });
    }
    for k in 0..maps.len() {
        if maps[k].rows() != dst.dims()[k] || maps[k].cols() != src.dims()[k] {
            return Err(LinError::Shape(format!(
                "chain map at degree {k} is {}x{}, expected {}x{}",
                maps[k].rows(),
                maps[k].cols(),
                dst.dims()[k],
                src.dims()[k]
            )));
        }
    }
    for k in 0..maps.len().saturating_sub(1) {
        let lhs = maps[k + 1].mul(&src.maps()[k]);
        let rhs = dst.maps()[k].mul(&maps[k]);
        if lhs != rhs {
            return Err(LinError::NotChainMap { degree: k });
        }
    }

    let mut verdicts = Vec::new();
    for k in 0..src.len() {
        let (qs, _bs) = cohomology_reps(src, k);
        let (qd, bd) = cohomology_reps(dst, k);
        // Express the image of each source representative in terms of
        // destination representatives modulo coboundaries.
        let target = Mat::hstack(&[&qd, &bd]);
        let mut h = Mat::zero(qd.cols(), qs.cols());
        for j in 0..qs.cols() {
            let y = maps[k].mul(&Mat::col_vec(qs.col(j)));
            let c = target
                .solve(&y)
                .expect("chain map image must be a cocycle of the target");
            for i in 0..qd.cols() {
                h.set(i, j, c.at(i, 0).clone());
            }
        }
        let r = h.rank();
        verdicts.push(DegreeVerdict {
            degree: k,
            h_src: qs.cols(),
            h_dst: qd.cols(),
            injective: r == qs.cols(),
            surjective: r == qd.cols(),
        });
    }
    Ok(verdicts)
}

/// Representatives of H^k: columns of the first matrix complete the
/// coboundaries (second matrix) to a basis of the cocycles.
fn cohomology_reps(c: &MatrixComplex, k: usize) -> (Mat, Mat) {
    let z = c.cocycles(k);
    let b = c.coboundaries(k);
    let idx = extend_basis(&b, &z);
    (z.select_cols(&idx), b)
}
