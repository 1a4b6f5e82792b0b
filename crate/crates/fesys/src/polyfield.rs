//! Exact bivariate polynomial calculus: fields valued in scalars, vectors,
//! and 2x2 matrices, their differential operators, traces on edges, and
//! integrals over triangles and Clough-Tocher splits.
//!
//! All differential operators act row-wise. The matrix-valued shapes store
//! their independent entries only (symmetric: upper triangle, skew: the
//! (1,2) entry), and the L2 pairing weights entries so that it equals the
//! Frobenius pairing of the full matrices.
//!
//! Edges are parameterized by `x = a + lambda (b - a)` with `lambda` in
//! [0, 1], and tangential/normal components use the unnormalized tangent
//! `T = b - a` and normal `N = J T` (a quarter turn counterclockwise).
//! Unit-speed quantities would need the irrational edge length, so every
//! trace here is the unit-speed one scaled by a fixed power of the length;
//! all downstream pairings and identities are stated to be invariant under
//! that scaling.

use crate::rat::{rint, Rat};
use crate::ratlin::Mat;
use num_bigint::BigInt;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolyError {
    #[error("operator {0} expects {1} input, got {2:?}")]
    ShapeMismatch(&'static str, &'static str, FieldShape),
    #[error("trace component {0:?} does not apply to shape {1:?}")]
    TraceShape(TraceComp, FieldShape),
    #[error("field is discontinuous across interior edge {0}")]
    Discontinuous(usize),
    #[error("point is not strictly inside the triangle")]
    InpointOutside,
    #[error("fields have mismatched shapes {0:?} and {1:?}")]
    PairingShape(FieldShape, FieldShape),
}

/// A point of the rational plane.
pub type Pt = [Rat; 2];

pub fn pt(x: Rat, y: Rat) -> Pt {
    [x, y]
}

pub fn pt_sub(a: &Pt, b: &Pt) -> Pt {
    [a[0].clone() - b[0].clone(), a[1].clone() - b[1].clone()]
}

pub fn pt_add(a: &Pt, b: &Pt) -> Pt {
    [a[0].clone() + b[0].clone(), a[1].clone() + b[1].clone()]
}

pub fn dot2(a: &Pt, b: &Pt) -> Rat {
    a[0].clone() * b[0].clone() + a[1].clone() * b[1].clone()
}

/// Quarter turn counterclockwise: J(v1, v2) = (-v2, v1).
pub fn perp(a: &Pt) -> Pt {
    [-a[1].clone(), a[0].clone()]
}

/// A triangle given by its three vertices, in order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Triangle {
    pub v: [Pt; 3],
}

impl Triangle {
    pub fn new(v: [Pt; 3]) -> Self {
        Triangle { v }
    }

    /// Twice the signed area: det(v1 - v0, v2 - v0).
    pub fn signed_area2(&self) -> Rat {
        let a = pt_sub(&self.v[1], &self.v[0]);
        let b = pt_sub(&self.v[2], &self.v[0]);
        a[0].clone() * b[1].clone() - a[1].clone() * b[0].clone()
    }

    /// +1 for counterclockwise vertex order, -1 for clockwise.
    pub fn orientation(&self) -> i8 {
        let s = self.signed_area2();
        if s > rint(0) {
            1
        } else if s < rint(0) {
            -1
        } else {
            0
        }
    }

    pub fn isobarycenter(&self) -> Pt {
        let third = rint(3).recip();
        [
            (self.v[0][0].clone() + self.v[1][0].clone() + self.v[2][0].clone()) * third.clone(),
            (self.v[0][1].clone() + self.v[1][1].clone() + self.v[2][1].clone()) * third,
        ]
    }

    /// Barycentric coordinates of a point (sum to one).
    pub fn barycentric(&self, p: &Pt) -> [Rat; 3] {
        let area = self.signed_area2();
        assert!(area != rint(0), "degenerate triangle");
        let part = |a: &Pt, b: &Pt| -> Rat {
            let u = pt_sub(b, a);
            let w = pt_sub(p, a);
            (u[0].clone() * w[1].clone() - u[1].clone() * w[0].clone()) / area.clone()
        };
        [
            part(&self.v[1], &self.v[2]),
            part(&self.v[2], &self.v[0]),
            part(&self.v[0], &self.v[1]),
        ]
    }
}

/// A directed segment, parameterized by `a + lambda (b - a)` on [0, 1].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub a: Pt,
    pub b: Pt,
}

impl Edge {
    pub fn new(a: Pt, b: Pt) -> Self {
        Edge { a, b }
    }

    /// Unnormalized tangent T = b - a.
    pub fn tangent(&self) -> Pt {
        pt_sub(&self.b, &self.a)
    }

    /// Unnormalized normal N = J T.
    pub fn normal(&self) -> Pt {
        perp(&self.tangent())
    }

    /// Squared length (rational; the length itself usually is not).
    pub fn len2(&self) -> Rat {
        let t = self.tangent();
        dot2(&t, &t)
    }

    pub fn point_at(&self, lambda: &Rat) -> Pt {
        let t = self.tangent();
        [
            self.a[0].clone() + lambda.clone() * t[0].clone(),
            self.a[1].clone() + lambda.clone() * t[1].clone(),
        ]
    }
}

/// The Clough-Tocher split of a triangle about an interior point:
/// subtriangle i is (v_i, v_{i+1}, inpoint); boundary edge i runs from v_i
/// to v_{i+1} and belongs to subtriangle i; interior edge i runs from v_i to
/// the inpoint and is shared by subtriangles i and i+2 (mod 3).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CtSplit {
    pub outer: Triangle,
    pub inpoint: Pt,
}

impl CtSplit {
    /// Split about the isobarycenter.
    pub fn new(outer: Triangle) -> Self {
        let inpoint = outer.isobarycenter();
        CtSplit { outer, inpoint }
    }

    /// Split about a chosen interior point.
    pub fn with_inpoint(outer: Triangle, inpoint: Pt) -> Result<Self, PolyError> {
        let bc = outer.barycentric(&inpoint);
        if bc.iter().any(|c| c <= &rint(0)) {
            return Err(PolyError::InpointOutside);
        }
        Ok(CtSplit { outer, inpoint })
    }

    pub fn sub(&self, i: usize) -> Triangle {
        Triangle::new([
            self.outer.v[i % 3].clone(),
            self.outer.v[(i + 1) % 3].clone(),
            self.inpoint.clone(),
        ])
    }

    pub fn boundary_edge(&self, i: usize) -> Edge {
        Edge::new(self.outer.v[i % 3].clone(), self.outer.v[(i + 1) % 3].clone())
    }

    pub fn interior_edge(&self, i: usize) -> Edge {
        Edge::new(self.outer.v[i % 3].clone(), self.inpoint.clone())
    }

    /// The two subtriangles adjacent to interior edge i: (i, i+2 mod 3).
    pub fn interior_edge_pieces(&self, i: usize) -> (usize, usize) {
        (i % 3, (i + 2) % 3)
    }
}

/// A univariate polynomial with rational coefficients (index = power).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly1 {
    coeffs: Vec<Rat>,
}

impl Poly1 {
    pub fn zero() -> Self {
        Poly1 { coeffs: vec![] }
    }

    pub fn from_coeffs(mut coeffs: Vec<Rat>) -> Self {
        while coeffs.last().is_some_and(|c| *c == rint(0)) {
            coeffs.pop();
        }
        Poly1 { coeffs }
    }

    pub fn constant(c: Rat) -> Self {
        Self::from_coeffs(vec![c])
    }

    pub fn coeffs(&self) -> &[Rat] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn eval(&self, x: &Rat) -> Rat {
        let mut acc = rint(0);
        for c in self.coeffs.iter().rev() {
            acc = acc * x.clone() + c.clone();
        }
        acc
    }

    pub fn add(&self, rhs: &Poly1) -> Poly1 {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly1::from_coeffs(
            (0..n)
                .map(|i| {
                    self.coeffs.get(i).cloned().unwrap_or_else(|| rint(0))
                        + rhs.coeffs.get(i).cloned().unwrap_or_else(|| rint(0))
                })
                .collect(),
        )
    }

    pub fn sub(&self, rhs: &Poly1) -> Poly1 {
        self.add(&rhs.scale(&rint(-1)))
    }

    pub fn scale(&self, c: &Rat) -> Poly1 {
        Poly1::from_coeffs(self.coeffs.iter().map(|x| x.clone() * c.clone()).collect())
    }

    pub fn mul(&self, rhs: &Poly1) -> Poly1 {
        if self.is_zero() || rhs.is_zero() {
            return Poly1::zero();
        }
        let mut out = vec![rint(0); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a.clone() * b.clone();
            }
        }
        Poly1::from_coeffs(out)
    }

    pub fn derivative(&self) -> Poly1 {
        Poly1::from_coeffs(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| rint(i as i64) * c.clone())
                .collect(),
        )
    }

    /// The exact integral over [0, 1].
    pub fn integral_unit(&self) -> Rat {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c.clone() / rint(i as i64 + 1))
            .sum()
    }

    /// The monomial lambda^k.
    pub fn monomial(k: usize) -> Poly1 {
        let mut coeffs = vec![rint(0); k + 1];
        coeffs[k] = rint(1);
        Poly1::from_coeffs(coeffs)
    }
}

/// A bivariate polynomial with rational coefficients, keyed by exponents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly2 {
    terms: BTreeMap<(u32, u32), Rat>,
}

impl Poly2 {
    pub fn zero() -> Self {
        Poly2 {
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(c: Rat) -> Self {
        Self::monomial(0, 0, c)
    }

    pub fn monomial(i: u32, j: u32, c: Rat) -> Self {
        let mut terms = BTreeMap::new();
        if c != rint(0) {
            terms.insert((i, j), c);
        }
        Poly2 { terms }
    }

    pub fn x1() -> Self {
        Self::monomial(1, 0, rint(1))
    }

    pub fn x2() -> Self {
        Self::monomial(0, 1, rint(1))
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(u32, u32), &Rat)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|&(i, j)| i + j).max()
    }

    fn insert_add(&mut self, key: (u32, u32), c: Rat) {
        use std::collections::btree_map::Entry;
        match self.terms.entry(key) {
            Entry::Vacant(e) => {
                if c != rint(0) {
                    e.insert(c);
                }
            }
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if *e.get() == rint(0) {
                    e.remove();
                }
            }
        }
    }

    pub fn add(&self, rhs: &Poly2) -> Poly2 {
        let mut out = self.clone();
        for (&k, c) in &rhs.terms {
            out.insert_add(k, c.clone());
        }
        out
    }

    pub fn sub(&self, rhs: &Poly2) -> Poly2 {
        self.add(&rhs.scale(&rint(-1)))
    }

    pub fn scale(&self, c: &Rat) -> Poly2 {
        if *c == rint(0) {
            return Poly2::zero();
        }
        Poly2 {
            terms: self
                .terms
                .iter()
                .map(|(&k, v)| (k, v.clone() * c.clone()))
                .collect(),
        }
    }

    pub fn mul(&self, rhs: &Poly2) -> Poly2 {
        let mut out = Poly2::zero();
        for (&(i1, j1), c1) in &self.terms {
            for (&(i2, j2), c2) in &rhs.terms {
                out.insert_add((i1 + i2, j1 + j2), c1.clone() * c2.clone());
            }
        }
        out
    }

    pub fn eval(&self, p: &Pt) -> Rat {
        let mut acc = rint(0);
        for (&(i, j), c) in &self.terms {
            let mut t = c.clone();
            for _ in 0..i {
                t *= p[0].clone();
            }
            for _ in 0..j {
                t *= p[1].clone();
            }
            acc += t;
        }
        acc
    }

    /// Partial derivative in variable `var` (0 or 1).
    pub fn partial(&self, var: usize) -> Poly2 {
        let mut out = Poly2::zero();
        for (&(i, j), c) in &self.terms {
            match var {
                0 if i > 0 => out.insert_add((i - 1, j), rint(i as i64) * c.clone()),
                1 if j > 0 => out.insert_add((i, j - 1), rint(j as i64) * c.clone()),
                _ => {}
            }
        }
        out
    }

    /// The part of total degree exactly r.
    pub fn homogeneous_part(&self, r: u32) -> Poly2 {
        Poly2 {
            terms: self
                .terms
                .iter()
                .filter(|(&(i, j), _)| i + j == r)
                .map(|(&k, c)| (k, c.clone()))
                .collect(),
        }
    }

    /// Substitute x = A y + b (A given by rows).
    pub fn compose_affine(&self, a: &[[Rat; 2]; 2], b: &Pt) -> Poly2 {
        let lin = |row: &[Rat; 2], c: &Rat| -> Poly2 {
            Poly2::monomial(1, 0, row[0].clone())
                .add(&Poly2::monomial(0, 1, row[1].clone()))
                .add(&Poly2::constant(c.clone()))
        };
        let l1 = lin(&a[0], &b[0]);
        let l2 = lin(&a[1], &b[1]);
        let dmax = self.degree().unwrap_or(0) as usize;
        let powers = |base: &Poly2| -> Vec<Poly2> {
            let mut out = vec![Poly2::constant(rint(1))];
            for k in 1..=dmax {
                let next = out[k - 1].mul(base);
                out.push(next);
            }
            out
        };
        let p1 = powers(&l1);
        let p2 = powers(&l2);
        let mut out = Poly2::zero();
        for (&(i, j), c) in &self.terms {
            out = out.add(&p1[i as usize].mul(&p2[j as usize]).scale(c));
        }
        out
    }

    /// Restrict to the line `lambda -> a + lambda t` as a univariate
    /// polynomial in lambda.
    pub fn restrict_line(&self, a: &Pt, t: &Pt) -> Poly1 {
        let l1 = Poly1::from_coeffs(vec![a[0].clone(), t[0].clone()]);
        let l2 = Poly1::from_coeffs(vec![a[1].clone(), t[1].clone()]);
        let dmax = self.degree().unwrap_or(0) as usize;
        let powers = |base: &Poly1| -> Vec<Poly1> {
            let mut out = vec![Poly1::constant(rint(1))];
            for k in 1..=dmax {
                let next = out[k - 1].mul(base);
                out.push(next);
            }
            out
        };
        let p1 = powers(&l1);
        let p2 = powers(&l2);
        let mut out = Poly1::zero();
        for (&(i, j), c) in &self.terms {
            out = out.add(&p1[i as usize].mul(&p2[j as usize]).scale(c));
        }
        out
    }

    /// Directional derivative along a constant vector.
    pub fn dir_deriv(&self, w: &Pt) -> Poly2 {
        self.partial(0).scale(&w[0]).add(&self.partial(1).scale(&w[1]))
    }
}

fn factorial(n: u32) -> BigInt {
    let mut f = BigInt::from(1);
    for k in 2..=n as u64 {
        f *= BigInt::from(k);
    }
    f
}

/// Integral of a polynomial over the closed reference triangle
/// {y1, y2 >= 0, y1 + y2 <= 1}: monomial y1^a y2^b integrates to
/// a! b! / (a + b + 2)!.
pub fn integrate_reference(p: &Poly2) -> Rat {
    let mut acc = rint(0);
    for (&(i, j), c) in &p.terms {
        let num = factorial(i) * factorial(j);
        let den = factorial(i + j + 2);
        acc += c.clone() * Rat::new(num, den);
    }
    acc
}

/// Exact integral over an arbitrary (possibly clockwise) triangle.
pub fn integrate_triangle(p: &Poly2, tri: &Triangle) -> Rat {
    let b1 = pt_sub(&tri.v[1], &tri.v[0]);
    let b2 = pt_sub(&tri.v[2], &tri.v[0]);
    let a = [
        [b1[0].clone(), b2[0].clone()],
        [b1[1].clone(), b2[1].clone()],
    ];
    let pulled = p.compose_affine(&a, &tri.v[0]);
    let det = tri.signed_area2();
    let absdet = if det < rint(0) { -det } else { det };
    integrate_reference(&pulled) * absdet
}

/// Shapes of field values; differential operators act row-wise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldShape {
    Scalar,
    ColVector,
    RowVector,
    Matrix,
    SymMatrix,
    SkewMatrix,
}

impl FieldShape {
    pub fn components(self) -> usize {
        match self {
            FieldShape::Scalar | FieldShape::SkewMatrix => 1,
            FieldShape::ColVector | FieldShape::RowVector => 2,
            FieldShape::SymMatrix => 3,
            FieldShape::Matrix => 4,
        }
    }

    /// Weights making the componentwise pairing equal the Frobenius pairing
    /// of full matrices (symmetric off-diagonal counted twice, etc.).
    pub fn pairing_weights(self) -> Vec<Rat> {
        match self {
            FieldShape::Scalar => vec![rint(1)],
            FieldShape::ColVector | FieldShape::RowVector => vec![rint(1), rint(1)],
            FieldShape::Matrix => vec![rint(1); 4],
            FieldShape::SymMatrix => vec![rint(1), rint(2), rint(1)],
            FieldShape::SkewMatrix => vec![rint(2)],
        }
    }

    fn is_matrix_like(self) -> bool {
        matches!(
            self,
            FieldShape::Matrix | FieldShape::SymMatrix | FieldShape::SkewMatrix
        )
    }

    fn is_vector(self) -> bool {
        matches!(self, FieldShape::ColVector | FieldShape::RowVector)
    }
}

/// A polynomial field: one bivariate polynomial per independent component.
/// Components: scalar [u]; vectors [u1, u2]; matrix [u11, u12, u21, u22];
/// symmetric [u11, u12, u22]; skew [u12].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyField {
    pub shape: FieldShape,
    comps: Vec<Poly2>,
}

impl PolyField {
    pub fn new(shape: FieldShape, comps: Vec<Poly2>) -> Self {
        assert_eq!(comps.len(), shape.components(), "component count mismatch");
        PolyField { shape, comps }
    }

    pub fn zero(shape: FieldShape) -> Self {
        PolyField {
            shape,
            comps: vec![Poly2::zero(); shape.components()],
        }
    }

    pub fn comp(&self, i: usize) -> &Poly2 {
        &self.comps[i]
    }

    pub fn comps(&self) -> &[Poly2] {
        &self.comps
    }

    /// Matrix entry (i, j) for matrix-like shapes, expanding symmetry.
    pub fn entry(&self, i: usize, j: usize) -> Poly2 {
        match self.shape {
            FieldShape::Matrix => self.comps[2 * i + j].clone(),
            FieldShape::SymMatrix => match (i, j) {
                (0, 0) => self.comps[0].clone(),
                (1, 1) => self.comps[2].clone(),
                _ => self.comps[1].clone(),
            },
            FieldShape::SkewMatrix => match (i, j) {
                (0, 1) => self.comps[0].clone(),
                (1, 0) => self.comps[0].scale(&rint(-1)),
                _ => Poly2::zero(),
            },
            _ => panic!("entry() on non-matrix shape {:?}", self.shape),
        }
    }

    pub fn add(&self, rhs: &PolyField) -> PolyField {
        assert_eq!(self.shape, rhs.shape);
        PolyField {
            shape: self.shape,
            comps: self
                .comps
                .iter()
                .zip(&rhs.comps)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn sub(&self, rhs: &PolyField) -> PolyField {
        self.add(&rhs.scale(&rint(-1)))
    }

    pub fn scale(&self, c: &Rat) -> PolyField {
        PolyField {
            shape: self.shape,
            comps: self.comps.iter().map(|p| p.scale(c)).collect(),
        }
    }

    pub fn mul_poly(&self, p: &Poly2) -> PolyField {
        PolyField {
            shape: self.shape,
            comps: self.comps.iter().map(|q| q.mul(p)).collect(),
        }
    }

    pub fn eval(&self, p: &Pt) -> Vec<Rat> {
        self.comps.iter().map(|q| q.eval(p)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(Poly2::is_zero)
    }

    pub fn degree(&self) -> Option<u32> {
        self.comps.iter().filter_map(Poly2::degree).max()
    }

    /// Expand symmetric/skew storage to a full matrix field.
    pub fn to_full_matrix(&self) -> PolyField {
        assert!(self.shape.is_matrix_like());
        PolyField::new(
            FieldShape::Matrix,
            vec![
                self.entry(0, 0),
                self.entry(0, 1),
                self.entry(1, 0),
                self.entry(1, 1),
            ],
        )
    }

    /// Symmetric part of a matrix field, stored as SymMatrix.
    pub fn sym_part(&self) -> PolyField {
        assert!(self.shape.is_matrix_like());
        let half = rint(1) / rint(2);
        PolyField::new(
            FieldShape::SymMatrix,
            vec![
                self.entry(0, 0),
                self.entry(0, 1).add(&self.entry(1, 0)).scale(&half),
                self.entry(1, 1),
            ],
        )
    }

    /// Matrix transpose (full matrix shape).
    pub fn transpose(&self) -> PolyField {
        assert!(self.shape.is_matrix_like());
        PolyField::new(
            FieldShape::Matrix,
            vec![
                self.entry(0, 0),
                self.entry(1, 0),
                self.entry(0, 1),
                self.entry(1, 1),
            ],
        )
    }

    /// Matrix-vector product u w with a constant vector, as a ColVector.
    pub fn mat_vec_const(&self, w: &Pt) -> PolyField {
        assert!(self.shape.is_matrix_like());
        let row = |i: usize| {
            self.entry(i, 0)
                .scale(&w[0])
                .add(&self.entry(i, 1).scale(&w[1]))
        };
        PolyField::new(FieldShape::ColVector, vec![row(0), row(1)])
    }

    /// Dot product of a vector field with a constant vector.
    pub fn vec_dot_const(&self, w: &Pt) -> Poly2 {
        assert!(self.shape.is_vector());
        self.comps[0]
            .scale(&w[0])
            .add(&self.comps[1].scale(&w[1]))
    }

    /// Componentwise directional derivative along a constant vector.
    pub fn dir_deriv(&self, w: &Pt) -> PolyField {
        PolyField {
            shape: self.shape,
            comps: self.comps.iter().map(|p| p.dir_deriv(w)).collect(),
        }
    }

    /// K u = u^T - tr(u) I, the adjugate-transpose involution on matrices.
    pub fn k_transform(&self) -> PolyField {
        assert!(self.shape.is_matrix_like());
        let tr = self.entry(0, 0).add(&self.entry(1, 1));
        PolyField::new(
            FieldShape::Matrix,
            vec![
                self.entry(0, 0).sub(&tr),
                self.entry(1, 0),
                self.entry(0, 1),
                self.entry(1, 1).sub(&tr),
            ],
        )
    }

    /// J u for a column vector: the quarter turn (-u2, u1).
    pub fn j_rotate(&self) -> PolyField {
        assert!(self.shape.is_vector());
        PolyField::new(
            self.shape,
            vec![self.comps[1].scale(&rint(-1)), self.comps[0].clone()],
        )
    }
}

/// The differential operators; all act row-wise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiffOp {
    Grad,
    CurlScalar,
    DivRow,
    CurlRow,
    GradVec,
    Defo,
    DivMat,
    Airy,
    Sven,
    Hess,
    CurlMat,
}

impl DiffOp {
    /// The order of the operator (degree drop of the output).
    pub fn order(self) -> u32 {
        match self {
            DiffOp::Airy | DiffOp::Sven | DiffOp::Hess => 2,
            _ => 1,
        }
    }
}

/// Apply a differential operator to a single polynomial field.
pub fn dop_poly(op: DiffOp, f: &PolyField) -> Result<PolyField, PolyError> {
    use DiffOp::*;
    use FieldShape::*;
    let d = |c: &Poly2, v: usize| c.partial(v);
    match op {
        Grad => match f.shape {
            Scalar => Ok(PolyField::new(
                ColVector,
                vec![d(f.comp(0), 0), d(f.comp(0), 1)],
            )),
            s => Err(PolyError::ShapeMismatch("grad", "scalar", s)),
        },
        CurlScalar => match f.shape {
            Scalar => Ok(PolyField::new(
                ColVector,
                vec![d(f.comp(0), 1), d(f.comp(0), 0).scale(&rint(-1))],
            )),
            s => Err(PolyError::ShapeMismatch("curl", "scalar", s)),
        },
        DivRow => match f.shape {
            ColVector | RowVector => Ok(PolyField::new(
                Scalar,
                vec![d(f.comp(0), 0).add(&d(f.comp(1), 1))],
            )),
            s => Err(PolyError::ShapeMismatch("div", "vector", s)),
        },
        CurlRow => match f.shape {
            ColVector | RowVector => Ok(PolyField::new(
                Scalar,
                vec![d(f.comp(1), 0).sub(&d(f.comp(0), 1))],
            )),
            s => Err(PolyError::ShapeMismatch("curl", "vector", s)),
        },
        GradVec => match f.shape {
            ColVector => Ok(PolyField::new(
                Matrix,
                vec![
                    d(f.comp(0), 0),
                    d(f.comp(0), 1),
                    d(f.comp(1), 0),
                    d(f.comp(1), 1),
                ],
            )),
            s => Err(PolyError::ShapeMismatch("grad", "vector", s)),
        },
        Defo => match f.shape {
            ColVector => {
                let half = rint(1) / rint(2);
                Ok(PolyField::new(
                    SymMatrix,
                    vec![
                        d(f.comp(0), 0),
                        d(f.comp(0), 1).add(&d(f.comp(1), 0)).scale(&half),
                        d(f.comp(1), 1),
                    ],
                ))
            }
            s => Err(PolyError::ShapeMismatch("defo", "vector", s)),
        },
        DivMat => match f.shape {
            Matrix | SymMatrix | SkewMatrix => Ok(PolyField::new(
                ColVector,
                vec![
                    d(&f.entry(0, 0), 0).add(&d(&f.entry(0, 1), 1)),
                    d(&f.entry(1, 0), 0).add(&d(&f.entry(1, 1), 1)),
                ],
            )),
            s => Err(PolyError::ShapeMismatch("div", "matrix", s)),
        },
        Airy => match f.shape {
            Scalar => {
                let u = f.comp(0);
                Ok(PolyField::new(
                    SymMatrix,
                    vec![
                        d(&d(u, 1), 1),
                        d(&d(u, 0), 1).scale(&rint(-1)),
                        d(&d(u, 0), 0),
                    ],
                ))
            }
            s => Err(PolyError::ShapeMismatch("airy", "scalar", s)),
        },
        Sven => match f.shape {
            Matrix | SymMatrix | SkewMatrix => {
                let u = |i: usize, j: usize| f.entry(i, j);
                let p = d(&d(&u(0, 0), 1), 1)
                    .add(&d(&d(&u(1, 1), 0), 0))
                    .sub(&d(&d(&u(1, 0), 0), 1))
                    .sub(&d(&d(&u(0, 1), 0), 1));
                Ok(PolyField::new(Scalar, vec![p]))
            }
            s => Err(PolyError::ShapeMismatch("sven", "matrix", s)),
        },
        Hess => match f.shape {
            Scalar => {
                let u = f.comp(0);
                Ok(PolyField::new(
                    SymMatrix,
                    vec![d(&d(u, 0), 0), d(&d(u, 0), 1), d(&d(u, 1), 1)],
                ))
            }
            s => Err(PolyError::ShapeMismatch("hess", "scalar", s)),
        },
        CurlMat => match f.shape {
            Matrix | SymMatrix | SkewMatrix => Ok(PolyField::new(
                ColVector,
                vec![
                    d(&f.entry(0, 1), 0).sub(&d(&f.entry(0, 0), 1)),
                    d(&f.entry(1, 1), 0).sub(&d(&f.entry(1, 0), 1)),
                ],
            )),
            s => Err(PolyError::ShapeMismatch("curl", "matrix", s)),
        },
    }
}

/// Check the J/K operator identities on a field: for scalars,
/// airy u = J^T hess(u) J and airy u = -K hess(u); for matrices,
/// curl u = -J div(K u).
pub fn jk_identities_check(f: &PolyField) -> Result<bool, PolyError> {
    match f.shape {
        FieldShape::Scalar => {
            let airy = dop_poly(DiffOp::Airy, f)?.to_full_matrix();
            let hess = dop_poly(DiffOp::Hess, f)?;
            // J^T H J with J = [[0,-1],[1,0]]: entry (i,j) of the result is
            // sum_kl J_ki H_kl J_lj; computed directly.
            let h = |i: usize, j: usize| hess.entry(i, j);
            let conj = PolyField::new(
                FieldShape::Matrix,
                vec![
                    h(1, 1),
                    h(1, 0).scale(&rint(-1)),
                    h(0, 1).scale(&rint(-1)),
                    h(0, 0),
                ],
            );
            let kh = hess.k_transform().scale(&rint(-1));
            Ok(airy == conj && airy == kh)
        }
        FieldShape::Matrix | FieldShape::SymMatrix => {
            let lhs = dop_poly(DiffOp::CurlMat, f)?;
            let rhs = dop_poly(DiffOp::DivMat, &f.k_transform())?
                .j_rotate()
                .scale(&rint(-1));
            Ok(lhs == rhs)
        }
        s => Err(PolyError::ShapeMismatch("jk_identities", "scalar or matrix", s)),
    }
}

/// A field on a Clough-Tocher split: one polynomial field per subtriangle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PiecewiseField {
    pub split: CtSplit,
    pub shape: FieldShape,
    pieces: Vec<PolyField>,
}

impl PiecewiseField {
    pub fn new(split: CtSplit, pieces: Vec<PolyField>) -> Self {
        assert_eq!(pieces.len(), 3, "Clough-Tocher split has three pieces");
        let shape = pieces[0].shape;
        assert!(pieces.iter().all(|p| p.shape == shape));
        PiecewiseField {
            split,
            shape,
            pieces,
        }
    }

    /// A globally polynomial field viewed on the split.
    pub fn global(split: CtSplit, f: PolyField) -> Self {
        PiecewiseField::new(split, vec![f.clone(), f.clone(), f])
    }

    pub fn zero(split: CtSplit, shape: FieldShape) -> Self {
        PiecewiseField::new(split, vec![PolyField::zero(shape); 3])
    }

    pub fn piece(&self, i: usize) -> &PolyField {
        &self.pieces[i]
    }

    pub fn add(&self, rhs: &PiecewiseField) -> PiecewiseField {
        assert_eq!(self.split, rhs.split);
        PiecewiseField::new(
            self.split.clone(),
            self.pieces
                .iter()
                .zip(&rhs.pieces)
                .map(|(a, b)| a.add(b))
                .collect(),
        )
    }

    pub fn sub(&self, rhs: &PiecewiseField) -> PiecewiseField {
        self.add(&rhs.scale(&rint(-1)))
    }

    pub fn scale(&self, c: &Rat) -> PiecewiseField {
        PiecewiseField::new(
            self.split.clone(),
            self.pieces.iter().map(|p| p.scale(c)).collect(),
        )
    }

    pub fn is_zero(&self) -> bool {
        self.pieces.iter().all(PolyField::is_zero)
    }

    pub fn degree(&self) -> Option<u32> {
        self.pieces.iter().filter_map(PolyField::degree).max()
    }
}

/// Apply a differential operator piece by piece.
pub fn dop(op: DiffOp, f: &PiecewiseField) -> Result<PiecewiseField, PolyError> {
    let pieces = f
        .pieces
        .iter()
        .map(|p| dop_poly(op, p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PiecewiseField::new(f.split.clone(), pieces))
}

/// Integration domains within a split triangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellDomain {
    /// The whole outer triangle (sum over the three subtriangles).
    Whole,
    /// One subtriangle of the split.
    Sub(usize),
    /// Boundary edge i (from v_i to v_{i+1}), integrated in lambda on [0,1].
    BoundaryEdge(usize),
    /// Interior edge i (from v_i to the inpoint), in lambda on [0,1]; the
    /// trace must agree from both sides.
    InteriorEdge(usize),
}

/// Componentwise exact integral of a piecewise field over a cell of its
/// split. Edge integrals are taken in the lambda parameter (unit-speed
/// integrals scaled by the edge length).
pub fn integrate_cell(f: &PiecewiseField, domain: CellDomain) -> Result<Vec<Rat>, PolyError> {
    match domain {
        CellDomain::Whole => {
            let mut acc = vec![rint(0); f.shape.components()];
            for i in 0..3 {
                let tri = f.split.sub(i);
                for (k, a) in acc.iter_mut().enumerate() {
                    *a += integrate_triangle(f.piece(i).comp(k), &tri);
                }
            }
            Ok(acc)
        }
        CellDomain::Sub(i) => {
            let tri = f.split.sub(i);
            Ok((0..f.shape.components())
                .map(|k| integrate_triangle(f.piece(i).comp(k), &tri))
                .collect())
        }
        CellDomain::BoundaryEdge(i) => {
            let e = f.split.boundary_edge(i);
            let t = e.tangent();
            Ok((0..f.shape.components())
                .map(|k| f.piece(i % 3).comp(k).restrict_line(&e.a, &t).integral_unit())
                .collect())
        }
        CellDomain::InteriorEdge(i) => {
            let e = f.split.interior_edge(i);
            let t = e.tangent();
            let (p, q) = f.split.interior_edge_pieces(i);
            let mut out = Vec::new();
            for k in 0..f.shape.components() {
                let a = f.piece(p).comp(k).restrict_line(&e.a, &t);
                let b = f.piece(q).comp(k).restrict_line(&e.a, &t);
                if a != b {
                    return Err(PolyError::Discontinuous(i));
                }
                out.push(a.integral_unit());
            }
            Ok(out)
        }
    }
}

/// The L2 pairing over the whole split: Frobenius pairing of values,
/// integrated exactly.
pub fn l2_pairing(f: &PiecewiseField, g: &PiecewiseField) -> Result<Rat, PolyError> {
    if f.shape != g.shape {
        return Err(PolyError::PairingShape(f.shape, g.shape));
    }
    let w = f.shape.pairing_weights();
    let mut acc = rint(0);
    for i in 0..3 {
        let tri = f.split.sub(i);
        for (k, wk) in w.iter().enumerate() {
            let prod = f.piece(i).comp(k).mul(g.piece(i).comp(k));
            acc += integrate_triangle(&prod, &tri) * wk.clone();
        }
    }
    Ok(acc)
}

/// Trace components on an edge, all taken with the unnormalized tangent
/// T = b - a and normal N = J T of the edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceComp {
    /// Scalar value on the edge.
    Value,
    /// Scalar normal derivative (gradient dotted with N).
    NormalDeriv,
    /// Vector field dotted with T.
    DotT,
    /// Vector field dotted with N.
    DotN,
    /// Directional derivative along N of a vector field, dotted with T.
    NormalDerivDotT,
    /// Directional derivative along N of a vector field, dotted with N.
    NormalDerivDotN,
    /// Matrix field: (u T) . T.
    TDotT,
    /// Matrix field: (u T) . N.
    TDotN,
    /// Matrix field: (u N) . T.
    NDotT,
    /// Matrix field: (u N) . N.
    NDotN,
    /// Matrix field: directional derivative along N of (u T), dotted with T.
    NormalDerivTDotT,
}

/// One trace component of a polynomial field on an edge, as a univariate
/// polynomial in the edge parameter.
pub fn trace_comp_on_piece(
    f: &PolyField,
    edge: &Edge,
    comp: TraceComp,
) -> Result<Poly1, PolyError> {
    let t = edge.tangent();
    let n = edge.normal();
    let restrict = |p: &Poly2| p.restrict_line(&edge.a, &t);
    use FieldShape::*;
    use TraceComp::*;
    let p = match (comp, f.shape) {
        (Value, Scalar) => restrict(f.comp(0)),
        (NormalDeriv, Scalar) => restrict(&f.comp(0).dir_deriv(&n)),
        (DotT, ColVector | RowVector) => restrict(&f.vec_dot_const(&t)),
        (DotN, ColVector | RowVector) => restrict(&f.vec_dot_const(&n)),
        (NormalDerivDotT, ColVector | RowVector) => restrict(&f.dir_deriv(&n).vec_dot_const(&t)),
        (NormalDerivDotN, ColVector | RowVector) => restrict(&f.dir_deriv(&n).vec_dot_const(&n)),
        (TDotT, Matrix | SymMatrix | SkewMatrix) => {
            restrict(&f.mat_vec_const(&t).vec_dot_const(&t))
        }
        (TDotN, Matrix | SymMatrix | SkewMatrix) => {
            restrict(&f.mat_vec_const(&t).vec_dot_const(&n))
        }
        (NDotT, Matrix | SymMatrix | SkewMatrix) => {
            restrict(&f.mat_vec_const(&n).vec_dot_const(&t))
        }
        (NDotN, Matrix | SymMatrix | SkewMatrix) => {
            restrict(&f.mat_vec_const(&n).vec_dot_const(&n))
        }
        (NormalDerivTDotT, Matrix | SymMatrix | SkewMatrix) => {
            restrict(&f.mat_vec_const(&t).dir_deriv(&n).vec_dot_const(&t))
        }
        (c, s) => return Err(PolyError::TraceShape(c, s)),
    };
    Ok(p)
}

/// Which edge of a split triangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeRef {
    Boundary(usize),
    Interior(usize),
}

/// A tuple of univariate trace polynomials on one edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeTrace {
    pub edge: Edge,
    pub comps: Vec<Poly1>,
}

/// The tuple of trace components of a piecewise field on an edge of its
/// split. On interior edges the trace must agree from both adjacent pieces.
pub fn edge_trace(
    f: &PiecewiseField,
    which: EdgeRef,
    spec: &[TraceComp],
) -> Result<EdgeTrace, PolyError> {
    match which {
        EdgeRef::Boundary(i) => {
            let e = f.split.boundary_edge(i);
            let comps = spec
                .iter()
                .map(|&c| trace_comp_on_piece(f.piece(i % 3), &e, c))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(EdgeTrace { edge: e, comps })
        }
        EdgeRef::Interior(i) => {
            let e = f.split.interior_edge(i);
            let (p, q) = f.split.interior_edge_pieces(i);
            let comps = spec
                .iter()
                .map(|&c| {
                    let a = trace_comp_on_piece(f.piece(p), &e, c)?;
                    let b = trace_comp_on_piece(f.piece(q), &e, c)?;
                    if a != b {
                        return Err(PolyError::Discontinuous(i));
                    }
                    Ok(a)
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(EdgeTrace { edge: e, comps })
        }
    }
}

/// Jump of one trace component across interior edge i (piece i minus piece
/// i+2), integrated against a moment in lambda.
pub fn jump_moment(
    f: &PiecewiseField,
    i: usize,
    comp: TraceComp,
    moment: &Poly1,
) -> Result<Rat, PolyError> {
    let e = f.split.interior_edge(i);
    let (p, q) = f.split.interior_edge_pieces(i);
    let a = trace_comp_on_piece(f.piece(p), &e, comp)?;
    let b = trace_comp_on_piece(f.piece(q), &e, comp)?;
    Ok(a.sub(&b).mul(moment).integral_unit())
}

/// Scalar monomials of total degree at most `deg`, ordered by total degree
/// then by power of x1.
pub fn scalar_monomials(deg: u32) -> Vec<Poly2> {
    let mut out = Vec::new();
    for d in 0..=deg {
        for i in 0..=d {
            out.push(Poly2::monomial(i, d - i, rint(1)));
        }
    }
    out
}

/// Monomial basis of the polynomial fields of a shape up to a degree.
pub fn field_monomial_basis(shape: FieldShape, deg: u32) -> Vec<PolyField> {
    let mons = scalar_monomials(deg);
    let nc = shape.components();
    let mut out = Vec::new();
    for c in 0..nc {
        for m in &mons {
            let mut comps = vec![Poly2::zero(); nc];
            comps[c] = m.clone();
            out.push(PolyField::new(shape, comps));
        }
    }
    out
}

/// Basis of all piecewise fields of a shape up to a degree: each element is
/// supported on a single subtriangle.
pub fn piecewise_monomial_basis(split: &CtSplit, shape: FieldShape, deg: u32) -> Vec<PiecewiseField> {
    let per_piece = field_monomial_basis(shape, deg);
    let mut out = Vec::new();
    for piece in 0..3 {
        for f in &per_piece {
            let mut pieces = vec![PolyField::zero(shape); 3];
            pieces[piece] = f.clone();
            out.push(PiecewiseField::new(split.clone(), pieces));
        }
    }
    out
}

/// Combine basis fields with the coefficients of one matrix column.
pub fn linear_combination(basis: &[PiecewiseField], coeffs: &Mat, col: usize) -> PiecewiseField {
    assert_eq!(coeffs.rows(), basis.len());
    let mut acc = PiecewiseField::zero(basis[0].split.clone(), basis[0].shape);
    for (i, b) in basis.iter().enumerate() {
        let c = coeffs.at(i, col);
        if *c != rint(0) {
            acc = acc.add(&b.scale(c));
        }
    }
    acc
}

/// A linear functional on piecewise fields.
pub type Constraint<'a> = Box<dyn Fn(&PiecewiseField) -> Rat + 'a>;

/// Basis of the subspace of `span(ambient)` annihilated by all constraints:
/// the nullspace of the evaluation matrix, mapped back to fields.
pub fn subspace_from_constraints(
    ambient: &[PiecewiseField],
    constraints: &[Constraint<'_>],
) -> Vec<PiecewiseField> {
    let c = Mat::from_fn(constraints.len(), ambient.len(), |i, j| {
        constraints[i](&ambient[j])
    });
    let null = c.nullspace_basis();
    (0..null.cols())
        .map(|k| linear_combination(ambient, &null, k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::rat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference_triangle() -> Triangle {
        Triangle::new([
            [rint(0), rint(0)],
            [rint(1), rint(0)],
            [rint(0), rint(1)],
        ])
    }

    fn random_poly(rng: &mut ChaCha8Rng, deg: u32) -> Poly2 {
        let mut p = Poly2::zero();
        for d in 0..=deg {
            for i in 0..=d {
                p = p.add(&Poly2::monomial(i, d - i, rat(rng.gen_range(-4i64..=4), 1)));
            }
        }
        p
    }

    fn random_field(rng: &mut ChaCha8Rng, shape: FieldShape, deg: u32) -> PolyField {
        PolyField::new(
            shape,
            (0..shape.components()).map(|_| random_poly(rng, deg)).collect(),
        )
    }

    #[test]
    fn poly2_eval_and_partial() {
        // p = 3 x1^2 x2 - x2
        let p = Poly2::monomial(2, 1, rint(3)).add(&Poly2::monomial(0, 1, rint(-1)));
        assert_eq!(p.eval(&[rint(2), rint(5)]), rint(3 * 4 * 5 - 5));
        assert_eq!(
            p.partial(0),
            Poly2::monomial(1, 1, rint(6)),
            "d/dx1 (3 x1^2 x2 - x2) = 6 x1 x2"
        );
        assert_eq!(
            p.partial(1),
            Poly2::monomial(2, 0, rint(3)).add(&Poly2::constant(rint(-1)))
        );
    }

    #[test]
    fn compose_affine_matches_point_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = random_poly(&mut rng, 3);
        let a = [
            [rat(1, 2), rint(2)],
            [rint(-1), rat(1, 3)],
        ];
        let b = [rat(3, 4), rint(-2)];
        let q = p.compose_affine(&a, &b);
        for y in [[rint(0), rint(0)], [rint(1), rint(2)], [rat(1, 3), rat(-2, 5)]] {
            let x = [
                a[0][0].clone() * y[0].clone() + a[0][1].clone() * y[1].clone() + b[0].clone(),
                a[1][0].clone() * y[0].clone() + a[1][1].clone() * y[1].clone() + b[1].clone(),
            ];
            assert_eq!(q.eval(&y), p.eval(&x));
        }
    }

    #[test]
    fn restrict_line_matches_point_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let p = random_poly(&mut rng, 4);
        let a = [rat(1, 2), rint(-1)];
        let t = [rint(3), rat(2, 5)];
        let r = p.restrict_line(&a, &t);
        for lam in [rint(0), rat(1, 3), rint(1), rat(-1, 2)] {
            let x = [
                a[0].clone() + lam.clone() * t[0].clone(),
                a[1].clone() + lam.clone() * t[1].clone(),
            ];
            assert_eq!(r.eval(&lam), p.eval(&x));
        }
    }

    #[test]
    fn reference_integrals_match_monomial_formula() {
        assert_eq!(integrate_reference(&Poly2::constant(rint(1))), rat(1, 2));
        assert_eq!(integrate_reference(&Poly2::x1()), rat(1, 6));
        assert_eq!(integrate_reference(&Poly2::monomial(1, 1, rint(1))), rat(1, 24));
        // Independent check: 1!1! / 4! = 1/24.
    }

    #[test]
    fn triangle_integral_is_additive_over_split_and_label_invariant() {
        let tri = Triangle::new([
            [rint(0), rint(0)],
            [rint(4), rint(1)],
            [rint(1), rint(3)],
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_poly(&mut rng, 3);
        let whole = integrate_triangle(&p, &tri);
        let split = CtSplit::new(tri.clone());
        let parts: Rat = (0..3).map(|i| integrate_triangle(&p, &split.sub(i))).sum();
        assert_eq!(whole, parts, "integral is additive over the split");
        // Relabeling the vertices does not change the integral.
        let relabeled = Triangle::new([tri.v[2].clone(), tri.v[0].clone(), tri.v[1].clone()]);
        assert_eq!(integrate_triangle(&p, &relabeled), whole);
        let swapped = Triangle::new([tri.v[1].clone(), tri.v[0].clone(), tri.v[2].clone()]);
        assert_eq!(integrate_triangle(&p, &swapped), whole);
    }

    #[test]
    fn airy_kills_affine_and_defo_kills_rigid() {
        let affine = PolyField::new(
            FieldShape::Scalar,
            vec![Poly2::constant(rint(4))
                .add(&Poly2::x1().scale(&rat(2, 3)))
                .add(&Poly2::x2().scale(&rint(-5)))],
        );
        assert!(dop_poly(DiffOp::Airy, &affine).unwrap().is_zero());
        // Rigid motion a + b J x = (a1 - b x2, a2 + b x1).
        let rigid = PolyField::new(
            FieldShape::ColVector,
            vec![
                Poly2::constant(rint(1)).add(&Poly2::x2().scale(&rint(-3))),
                Poly2::constant(rint(2)).add(&Poly2::x1().scale(&rint(3))),
            ],
        );
        assert!(dop_poly(DiffOp::Defo, &rigid).unwrap().is_zero());
    }

    #[test]
    fn sven_of_rotated_rank_one_is_six() {
        // u = x^R (x^R)^T = [[x2^2, -x1 x2], [-x1 x2, x1^2]].
        let u = PolyField::new(
            FieldShape::SymMatrix,
            vec![
                Poly2::monomial(0, 2, rint(1)),
                Poly2::monomial(1, 1, rint(-1)),
                Poly2::monomial(2, 0, rint(1)),
            ],
        );
        let s = dop_poly(DiffOp::Sven, &u).unwrap();
        assert_eq!(s.comp(0), &Poly2::constant(rint(6)));
    }

    #[test]
    fn jk_identities_hold() {
        // Scalar: x1^2 x2 and an affine function.
        let f = PolyField::new(FieldShape::Scalar, vec![Poly2::monomial(2, 1, rint(1))]);
        assert!(jk_identities_check(&f).unwrap());
        let aff = PolyField::new(FieldShape::Scalar, vec![Poly2::x1().add(&Poly2::x2())]);
        assert!(jk_identities_check(&aff).unwrap());
        // Matrix: random degree-3 field.
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..5 {
            let m = random_field(&mut rng, FieldShape::Matrix, 3);
            assert!(jk_identities_check(&m).unwrap());
        }
        // Wrong shape errors.
        let v = PolyField::zero(FieldShape::ColVector);
        assert!(jk_identities_check(&v).is_err());
    }

    #[test]
    fn operator_complexes_compose_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..5 {
            let scalar = random_field(&mut rng, FieldShape::Scalar, 4);
            let a = dop_poly(DiffOp::Airy, &scalar).unwrap();
            assert!(dop_poly(DiffOp::DivMat, &a).unwrap().is_zero(), "div airy = 0");
            let vector = random_field(&mut rng, FieldShape::ColVector, 4);
            let d = dop_poly(DiffOp::Defo, &vector).unwrap();
            assert!(dop_poly(DiffOp::Sven, &d).unwrap().is_zero(), "sven defo = 0");
        }
    }

    #[test]
    fn operator_degree_bookkeeping() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let cases: Vec<(DiffOp, FieldShape)> = vec![
            (DiffOp::Grad, FieldShape::Scalar),
            (DiffOp::CurlScalar, FieldShape::Scalar),
            (DiffOp::DivRow, FieldShape::RowVector),
            (DiffOp::CurlRow, FieldShape::ColVector),
            (DiffOp::GradVec, FieldShape::ColVector),
            (DiffOp::Defo, FieldShape::ColVector),
            (DiffOp::DivMat, FieldShape::SymMatrix),
            (DiffOp::Airy, FieldShape::Scalar),
            (DiffOp::Sven, FieldShape::Matrix),
            (DiffOp::Hess, FieldShape::Scalar),
            (DiffOp::CurlMat, FieldShape::SymMatrix),
        ];
        for (op, shape) in cases {
            let f = random_field(&mut rng, shape, 4);
            let g = dop_poly(op, &f).unwrap();
            if let Some(dg) = g.degree() {
                assert!(
                    dg + op.order() <= f.degree().unwrap(),
                    "{op:?} must drop degree by its order"
                );
            }
        }
    }

    #[test]
    fn identity_matrix_trace_on_horizontal_edge() {
        // u = I as a symmetric field; on the edge (0,0)->(1,0) the tuple
        // ((uN).T, (uN).N) is (0, 1) since T and N are unit there.
        let u = PolyField::new(
            FieldShape::SymMatrix,
            vec![
                Poly2::constant(rint(1)),
                Poly2::zero(),
                Poly2::constant(rint(1)),
            ],
        );
        let e = Edge::new([rint(0), rint(0)], [rint(1), rint(0)]);
        let nt = trace_comp_on_piece(&u, &e, TraceComp::NDotT).unwrap();
        let nn = trace_comp_on_piece(&u, &e, TraceComp::NDotN).unwrap();
        assert!(nt.is_zero());
        assert_eq!(nn, Poly1::constant(rint(1)));
        // Scalar x1 on the same edge restricts to lambda.
        let f = PolyField::new(FieldShape::Scalar, vec![Poly2::x1()]);
        let tr = trace_comp_on_piece(&f, &e, TraceComp::Value).unwrap();
        assert_eq!(tr, Poly1::monomial(1));
    }

    #[test]
    fn trace_components_match_point_substitution() {
        // Arity-4 tuple on a random degree-2 symmetric field, compared
        // against direct evaluation at sample points on the edge.
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let u = random_field(&mut rng, FieldShape::SymMatrix, 2);
        let e = Edge::new([rint(1), rint(0)], [rat(1, 2), rint(2)]);
        let t = e.tangent();
        let n = e.normal();
        let spec = [
            TraceComp::TDotT,
            TraceComp::TDotN,
            TraceComp::NDotN,
            TraceComp::NormalDerivTDotT,
        ];
        let traces: Vec<Poly1> = spec
            .iter()
            .map(|&c| trace_comp_on_piece(&u, &e, c).unwrap())
            .collect();
        for lam in [rint(0), rat(1, 3), rat(2, 5), rint(1)] {
            let x = e.point_at(&lam);
            let at = |i: usize, j: usize| u.entry(i, j).eval(&x);
            let ut = [
                at(0, 0) * t[0].clone() + at(0, 1) * t[1].clone(),
                at(1, 0) * t[0].clone() + at(1, 1) * t[1].clone(),
            ];
            let un = [
                at(0, 0) * n[0].clone() + at(0, 1) * n[1].clone(),
                at(1, 0) * n[0].clone() + at(1, 1) * n[1].clone(),
            ];
            assert_eq!(traces[0].eval(&lam), dot2(&ut, &t));
            assert_eq!(traces[1].eval(&lam), dot2(&ut, &n));
            assert_eq!(traces[2].eval(&lam), dot2(&un, &n));
            // Fourth component: derivative along N of (uT).T.
            let dutt = u.mat_vec_const(&t).dir_deriv(&n).vec_dot_const(&t).eval(&x);
            assert_eq!(traces[3].eval(&lam), dutt);
        }
    }

    #[test]
    fn pairing_of_odd_monomials_on_symmetric_domain_vanishes() {
        // Square-symmetric triangle pair is overkill; use the triangle
        // symmetric under x1 -> -x1 and the odd function x1.
        let tri = Triangle::new([
            [rint(-1), rint(0)],
            [rint(1), rint(0)],
            [rint(0), rint(2)],
        ]);
        let split = CtSplit::new(tri);
        let f = PiecewiseField::global(
            split.clone(),
            PolyField::new(FieldShape::Scalar, vec![Poly2::x1()]),
        );
        let g = PiecewiseField::global(
            split,
            PolyField::new(FieldShape::Scalar, vec![Poly2::constant(rint(1))]),
        );
        assert_eq!(l2_pairing(&f, &g).unwrap(), rint(0));
        let whole = integrate_cell(&f, CellDomain::Whole).unwrap();
        assert_eq!(whole, vec![rint(0)]);
    }

    #[test]
    fn interior_edge_trace_detects_discontinuity() {
        let split = CtSplit::new(reference_triangle());
        let mut pieces = vec![PolyField::zero(FieldShape::Scalar); 3];
        pieces[0] = PolyField::new(FieldShape::Scalar, vec![Poly2::constant(rint(1))]);
        let f = PiecewiseField::new(split, pieces);
        let err = edge_trace(&f, EdgeRef::Interior(0), &[TraceComp::Value]);
        assert!(matches!(err, Err(PolyError::Discontinuous(0))));
        // And the jump moment sees the mismatch: piece 0 minus piece 2 = 1.
        let j = jump_moment(&f, 0, TraceComp::Value, &Poly1::constant(rint(1))).unwrap();
        assert_eq!(j, rint(1));
    }

    #[test]
    fn h0div_p1_subspace_has_dimension_fifteen() {
        // Ambient: piecewise P1 symmetric fields on the split, dimension
        // 3 pieces x 3 components x 3 monomials = 27. Constraining the two
        // components of the normal trace u N to match across the three
        // interior edges (two moments each, since traces are degree 1)
        // removes 12 dimensions.
        let tri = Triangle::new([
            [rint(0), rint(0)],
            [rint(3), rint(0)],
            [rint(0), rint(3)],
        ]);
        let split = CtSplit::new(tri);
        let ambient = piecewise_monomial_basis(&split, FieldShape::SymMatrix, 1);
        assert_eq!(ambient.len(), 27);
        let mut constraints: Vec<Constraint> = Vec::new();
        for i in 0..3 {
            for comp in [TraceComp::NDotT, TraceComp::NDotN] {
                for m in 0..2 {
                    constraints.push(Box::new(move |f: &PiecewiseField| {
                        jump_moment(f, i, comp, &Poly1::monomial(m)).unwrap()
                    }));
                }
            }
        }
        assert_eq!(constraints.len(), 12);
        let basis = subspace_from_constraints(&ambient, &constraints);
        assert_eq!(basis.len(), 15, "27 ambient minus 12 independent constraints");
        // Every member really has continuous normal components.
        for f in &basis {
            for i in 0..3 {
                assert!(edge_trace(f, EdgeRef::Interior(i), &[TraceComp::NDotT, TraceComp::NDotN]).is_ok());
            }
        }
        // No constraints: the ambient space comes back.
        let all = subspace_from_constraints(&ambient, &[]);
        assert_eq!(all.len(), 27);
        // Over-constrained: point values of all components everywhere.
        let mut kill: Vec<Constraint> = Vec::new();
        for piece in 0..3 {
            for c in 0..3 {
                for p in [
                    [rint(0), rint(0)],
                    [rint(1), rint(0)],
                    [rint(0), rint(1)],
                ] {
                    kill.push(Box::new(move |f: &PiecewiseField| {
                        f.piece(piece).comp(c).eval(&p)
                    }));
                }
            }
        }
        let none = subspace_from_constraints(&ambient, &kill);
        assert!(none.is_empty());
    }

    #[test]
    fn inpoint_validation() {
        let tri = reference_triangle();
        assert!(CtSplit::with_inpoint(tri.clone(), [rat(1, 4), rat(1, 4)]).is_ok());
        assert!(matches!(
            CtSplit::with_inpoint(tri, [rint(2), rint(2)]),
            Err(PolyError::InpointOutside)
        ));
    }
}
