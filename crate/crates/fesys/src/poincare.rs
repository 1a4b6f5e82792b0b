//! Poincare and Koszul operators for the two plane elasticity complexes.
//!
//! The stress complex is scalar --airy--> symmetric --div--> vector, and the
//! strain complex is vector --defo--> symmetric --sven--> scalar. For each,
//! the two Poincare operators are exact null-homotopies on star-shaped
//! domains: explicit ray integrals that invert the differential operators up
//! to the finite-dimensional kernels (affine functions, rigid motions).
//!
//! On polynomials every ray integral reduces to exact rational Beta
//! coefficients, so all operators here are computed term by term with no
//! quadrature. The Koszul operators are the restrictions to homogeneous
//! polynomials, implemented independently from their closed-form
//! coefficients; agreement of the two routes is part of the test suite.
//!
//! All operators take an explicit base point: the input is translated so
//! the base point becomes the origin, the ray integral is applied there,
//! and the result is translated back.

use crate::polyfield::{
    dop_poly, trace_comp_on_piece, DiffOp, FieldShape, PiecewiseField, Poly1, Poly2, PolyError,
    PolyField, Pt, TraceComp,
};
use crate::rat::rint;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PoincareError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("operator {0} expects {1} input, got {2:?}")]
    Shape(&'static str, &'static str, FieldShape),
    #[error("input is not homogeneous of degree {0}")]
    NotHomogeneous(u32),
}

/// integral over [0,1] of weight(t) p(t x) dt, exact and term by term:
/// the monomial of total degree r picks up the moment of t^r against the
/// weight.
fn ray_integral(p: &Poly2, weight: &Poly1) -> Poly2 {
    let mut out = Poly2::zero();
    for (&(i, j), c) in p.terms() {
        let coef = weight
            .mul(&Poly1::monomial((i + j) as usize))
            .integral_unit();
        out = out.add(&Poly2::monomial(i, j, c.clone() * coef));
    }
    out
}

fn ray_integral_field(f: &PolyField, weight: &Poly1) -> PolyField {
    PolyField::new(
        f.shape,
        f.comps().iter().map(|p| ray_integral(p, weight)).collect(),
    )
}

fn weight_one() -> Poly1 {
    Poly1::constant(rint(1))
}

fn weight_t() -> Poly1 {
    Poly1::monomial(1)
}

fn weight_one_minus_t() -> Poly1 {
    Poly1::from_coeffs(vec![rint(1), rint(-1)])
}

fn weight_t_one_minus_t() -> Poly1 {
    Poly1::from_coeffs(vec![rint(0), rint(1), rint(-1)])
}

/// Substitute x = y + b, recentering a field at the base point.
fn shift_in(f: &PolyField, b: &Pt) -> PolyField {
    let id = [[rint(1), rint(0)], [rint(0), rint(1)]];
    PolyField::new(
        f.shape,
        f.comps().iter().map(|p| p.compose_affine(&id, b)).collect(),
    )
}

/// Substitute y = x - b, undoing `shift_in`.
fn shift_out(f: &PolyField, b: &Pt) -> PolyField {
    let id = [[rint(1), rint(0)], [rint(0), rint(1)]];
    let nb = [-b[0].clone(), -b[1].clone()];
    PolyField::new(
        f.shape,
        f.comps()
            .iter()
            .map(|p| p.compose_affine(&id, &nb))
            .collect(),
    )
}

/// The quadratic form x^R . M x^R with x^R = (-x2, x1), as a polynomial.
fn sandwich_rr(m: &PolyField) -> Poly2 {
    let x1 = Poly2::x1();
    let x2 = Poly2::x2();
    m.entry(0, 0)
        .mul(&x2.mul(&x2))
        .sub(&m.entry(0, 1).add(&m.entry(1, 0)).mul(&x1.mul(&x2)))
        .add(&m.entry(1, 1).mul(&x1.mul(&x1)))
}

/// The vector x^R s for a scalar polynomial s.
fn rperp_times(s: &Poly2) -> PolyField {
    PolyField::new(
        FieldShape::ColVector,
        vec![Poly2::x2().mul(s).scale(&rint(-1)), Poly2::x1().mul(s)],
    )
}

/// M^T x for a matrix-like field, as a column vector of polynomials.
fn mat_transpose_times_x(m: &PolyField) -> PolyField {
    let x1 = Poly2::x1();
    let x2 = Poly2::x2();
    PolyField::new(
        FieldShape::ColVector,
        vec![
            m.entry(0, 0).mul(&x1).add(&m.entry(1, 0).mul(&x2)),
            m.entry(0, 1).mul(&x1).add(&m.entry(1, 1).mul(&x2)),
        ],
    )
}

/// x^R . v for a vector field v: the scalar -x2 v1 + x1 v2.
fn rperp_dot(v: &PolyField) -> Poly2 {
    v.comp(1)
        .mul(&Poly2::x1())
        .sub(&v.comp(0).mul(&Poly2::x2()))
}

/// Stress complex p1: symmetric fields to scalars,
/// u -> integral of (1-t) x^R . u(tx) x^R dt about the base point.
pub fn stress_p1(u: &PolyField, base: &Pt) -> Result<PolyField, PoincareError> {
    if u.shape != FieldShape::SymMatrix {
        return Err(PoincareError::Shape("stress_p1", "symmetric matrix", u.shape));
    }
    let u0 = shift_in(u, base);
    let m = ray_integral_field(&u0, &weight_one_minus_t());
    let out = PolyField::new(FieldShape::Scalar, vec![sandwich_rr(&m)]);
    Ok(shift_out(&out, base))
}

/// Stress complex p2: vector fields to symmetric fields,
/// u -> sym( integral of t u(tx) x^T dt
///           - rowwise curl of integral of t(1-t) (x^R . u(tx)) x dt ).
pub fn stress_p2(u: &PolyField, base: &Pt) -> Result<PolyField, PoincareError> {
    if u.shape != FieldShape::ColVector {
        return Err(PoincareError::Shape("stress_p2", "column vector", u.shape));
    }
    let u0 = shift_in(u, base);
    let x1 = Poly2::x1();
    let x2 = Poly2::x2();
    // First piece: (integral of t u(tx) dt) x^T.
    let m1 = ray_integral_field(&u0, &weight_t());
    let a = PolyField::new(
        FieldShape::Matrix,
        vec![
            m1.comp(0).mul(&x1),
            m1.comp(0).mul(&x2),
            m1.comp(1).mul(&x1),
            m1.comp(1).mul(&x2),
        ],
    );
    // Second piece: g = (x^R . integral of t(1-t) u(tx) dt) x, then the
    // rowwise scalar curl of g, with curl w = (d2 w, -d1 w).
    let m2 = ray_integral_field(&u0, &weight_t_one_minus_t());
    let phi = rperp_dot(&m2);
    let g = [phi.mul(&x1), phi.mul(&x2)];
    let c = PolyField::new(
        FieldShape::Matrix,
        vec![
            g[0].partial(1),
            g[0].partial(0).scale(&rint(-1)),
            g[1].partial(1),
            g[1].partial(0).scale(&rint(-1)),
        ],
    );
    let out = a.sub(&c).sym_part();
    Ok(shift_out(&out, base))
}

/// Strain complex p1: symmetric fields to vectors,
/// u -> (integral of u(tx)^T dt) x
///      + (integral of (1-t) (curl u)(tx) dt . x) x^R.
pub fn strain_p1(u: &PolyField, base: &Pt) -> Result<PolyField, PoincareError> {
    if u.shape != FieldShape::SymMatrix {
        return Err(PoincareError::Shape("strain_p1", "symmetric matrix", u.shape));
    }
    let u0 = shift_in(u, base);
    let m = ray_integral_field(&u0, &weight_one());
    let term1 = mat_transpose_times_x(&m);
    let curl = dop_poly(DiffOp::CurlMat, &u0)?;
    let v = ray_integral_field(&curl, &weight_one_minus_t());
    let s = v
        .comp(0)
        .mul(&Poly2::x1())
        .add(&v.comp(1).mul(&Poly2::x2()));
    let out = term1.add(&rperp_times(&s));
    Ok(shift_out(&out, base))
}

/// Strain complex p2: scalars to symmetric fields,
/// u -> x^R (integral of t(1-t) u(tx) dt) x^R^T.
pub fn strain_p2(u: &PolyField, base: &Pt) -> Result<PolyField, PoincareError> {
    if u.shape != FieldShape::Scalar {
        return Err(PoincareError::Shape("strain_p2", "scalar", u.shape));
    }
    let u0 = shift_in(u, base);
    let w = ray_integral(u0.comp(0), &weight_t_one_minus_t());
    let x1 = Poly2::x1();
    let x2 = Poly2::x2();
    let out = PolyField::new(
        FieldShape::SymMatrix,
        vec![
            x2.mul(&x2).mul(&w),
            x1.mul(&x2).mul(&w).scale(&rint(-1)),
            x1.mul(&x1).mul(&w),
        ],
    );
    Ok(shift_out(&out, base))
}

/// The four Poincare operators under one name, for piecewise use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoincareOp {
    StressP1,
    StressP2,
    StrainP1,
    StrainP2,
}

pub fn poincare_field(
    op: PoincareOp,
    u: &PolyField,
    base: &Pt,
) -> Result<PolyField, PoincareError> {
    match op {
        PoincareOp::StressP1 => stress_p1(u, base),
        PoincareOp::StressP2 => stress_p2(u, base),
        PoincareOp::StrainP1 => strain_p1(u, base),
        PoincareOp::StrainP2 => strain_p2(u, base),
    }
}

/// Apply a Poincare operator piece by piece on a Clough-Tocher split, based
/// at the interior split point (every subtriangle is star-shaped with
/// respect to it).
pub fn poincare_piecewise(
    op: PoincareOp,
    f: &PiecewiseField,
) -> Result<PiecewiseField, PoincareError> {
    let base = f.split.inpoint.clone();
    let pieces = (0..3)
        .map(|i| poincare_field(op, f.piece(i), &base))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PiecewiseField::new(f.split.clone(), pieces))
}

/// The projections onto the kernels of the complexes' first operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JProjection {
    /// Affine part of a scalar: u(b) + grad u(b) (x - b).
    AffineStress,
    /// Rigid-motion part of a vector: u(b) + (curl u)(b)/2 (x - b)^R.
    RigidStrain,
}

pub fn j_projection(
    which: JProjection,
    u: &PolyField,
    base: &Pt,
) -> Result<PolyField, PoincareError> {
    match which {
        JProjection::AffineStress => {
            if u.shape != FieldShape::Scalar {
                return Err(PoincareError::Shape("j_projection", "scalar", u.shape));
            }
            let p = u.comp(0);
            let val = p.eval(base);
            let d1 = p.partial(0).eval(base);
            let d2 = p.partial(1).eval(base);
            let x1b = Poly2::x1().sub(&Poly2::constant(base[0].clone()));
            let x2b = Poly2::x2().sub(&Poly2::constant(base[1].clone()));
            let aff = Poly2::constant(val)
                .add(&x1b.scale(&d1))
                .add(&x2b.scale(&d2));
            Ok(PolyField::new(FieldShape::Scalar, vec![aff]))
        }
        JProjection::RigidStrain => {
            if u.shape != FieldShape::ColVector {
                return Err(PoincareError::Shape("j_projection", "column vector", u.shape));
            }
            let w = u
                .comp(1)
                .partial(0)
                .sub(&u.comp(0).partial(1))
                .eval(base);
            let half_w = w / rint(2);
            let x1b = Poly2::x1().sub(&Poly2::constant(base[0].clone()));
            let x2b = Poly2::x2().sub(&Poly2::constant(base[1].clone()));
            let r1 = Poly2::constant(u.comp(0).eval(base)).sub(&x2b.scale(&half_w));
            let r2 = Poly2::constant(u.comp(1).eval(base)).add(&x1b.scale(&half_w));
            Ok(PolyField::new(FieldShape::ColVector, vec![r1, r2]))
        }
    }
}

/// Koszul operators: the Poincare operators of the strain complex on
/// homogeneous polynomials, in closed form about the origin.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KoszulOp {
    /// Symmetric fields to vectors.
    K1,
    /// Scalars to symmetric fields.
    K2,
}

fn check_homogeneous(u: &PolyField, r: u32) -> Result<(), PoincareError> {
    for p in u.comps() {
        if &p.homogeneous_part(r) != p {
            return Err(PoincareError::NotHomogeneous(r));
        }
    }
    Ok(())
}

/// Apply a Koszul operator to a homogeneous input of degree r.
///
/// k1 u = u x / (r+1) + x^R ((curl u) . x) / (r (r+1)), the second term
/// vanishing identically for r = 0; k2 u = x^R u x^R^T / ((r+2)(r+3)).
pub fn koszul(which: KoszulOp, r: u32, u: &PolyField) -> Result<PolyField, PoincareError> {
    check_homogeneous(u, r)?;
    match which {
        KoszulOp::K1 => {
            if u.shape != FieldShape::SymMatrix {
                return Err(PoincareError::Shape("koszul k1", "symmetric matrix", u.shape));
            }
            let inv_r1 = (rint(r as i64) + rint(1)).recip();
            let term1 = mat_transpose_times_x(u).scale(&inv_r1);
            if r == 0 {
                return Ok(term1);
            }
            let coef = (rint(r as i64) * (rint(r as i64) + rint(1))).recip();
            let curl = dop_poly(DiffOp::CurlMat, u)?;
            let s = curl
                .comp(0)
                .mul(&Poly2::x1())
                .add(&curl.comp(1).mul(&Poly2::x2()));
            Ok(term1.add(&rperp_times(&s).scale(&coef)))
        }
        KoszulOp::K2 => {
            if u.shape != FieldShape::Scalar {
                return Err(PoincareError::Shape("koszul k2", "scalar", u.shape));
            }
            let coef = ((rint(r as i64) + rint(2)) * (rint(r as i64) + rint(3))).recip();
            let x1 = Poly2::x1();
            let x2 = Poly2::x2();
            let w = u.comp(0).scale(&coef);
            Ok(PolyField::new(
                FieldShape::SymMatrix,
                vec![
                    x2.mul(&x2).mul(&w),
                    x1.mul(&x2).mul(&w).scale(&rint(-1)),
                    x1.mul(&x1).mul(&w),
                ],
            ))
        }
    }
}

/// The symmetric matrix field x^R x^R^T about a base point.
pub fn rotated_rank_one(base: &Pt) -> PolyField {
    let x1 = Poly2::x1().sub(&Poly2::constant(base[0].clone()));
    let x2 = Poly2::x2().sub(&Poly2::constant(base[1].clone()));
    PolyField::new(
        FieldShape::SymMatrix,
        vec![
            x2.mul(&x2),
            x1.mul(&x2).scale(&rint(-1)),
            x1.mul(&x1),
        ],
    )
}

/// Regularity of the strain p2 output across the interior edges of the
/// split: for any piecewise scalar w, the matrix field p2 w based at the
/// split point has continuous tangential data (uT.T, uT.N and the normal
/// derivative of uT.T) on every interior edge, even when w itself jumps.
pub fn kosreg_check(w: &PiecewiseField) -> Result<bool, PoincareError> {
    if w.shape != FieldShape::Scalar {
        return Err(PoincareError::Shape("kosreg_check", "scalar", w.shape));
    }
    let u = poincare_piecewise(PoincareOp::StrainP2, w)?;
    for i in 0..3 {
        let e = u.split.interior_edge(i);
        let (p, q) = u.split.interior_edge_pieces(i);
        for comp in [
            TraceComp::TDotT,
            TraceComp::TDotN,
            TraceComp::NormalDerivTDotT,
        ] {
            let a = trace_comp_on_piece(u.piece(p), &e, comp)?;
            let b = trace_comp_on_piece(u.piece(q), &e, comp)?;
            if a != b {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::Rat;
    use crate::polyfield::{
        integrate_cell, jump_moment, CellDomain, CtSplit, Triangle,
    };
    use crate::rat::rat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn origin() -> Pt {
        [rint(0), rint(0)]
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
            (0..shape.components())
                .map(|_| random_poly(rng, deg))
                .collect(),
        )
    }

    fn random_homogeneous(rng: &mut ChaCha8Rng, shape: FieldShape, r: u32) -> PolyField {
        PolyField::new(
            shape,
            (0..shape.components())
                .map(|_| {
                    let mut p = Poly2::zero();
                    for i in 0..=r {
                        p = p.add(&Poly2::monomial(i, r - i, rat(rng.gen_range(-4i64..=4), 1)));
                    }
                    p
                })
                .collect(),
        )
    }

    #[test]
    fn stress_p1_on_constants_is_half_sandwich() {
        let u = PolyField::new(
            FieldShape::SymMatrix,
            vec![
                Poly2::constant(rint(3)),
                Poly2::constant(rint(-2)),
                Poly2::constant(rint(7)),
            ],
        );
        let p = stress_p1(&u, &origin()).unwrap();
        // (1/2) (u11 x2^2 - 2 u12 x1 x2 + u22 x1^2)
        let expected = Poly2::monomial(0, 2, rat(3, 2))
            .add(&Poly2::monomial(1, 1, rint(2)))
            .add(&Poly2::monomial(2, 0, rat(7, 2)));
        assert_eq!(p.comp(0), &expected);
    }

    #[test]
    fn stress_p2_on_constants_matches_closed_form() {
        // For constant u the result is (2/3) [[x1 u1, (x2 u1 + x1 u2)/2],
        // [(x1 u2 + x2 u1)/2, x2 u2]].
        let u1 = rint(3);
        let u2 = rint(5);
        let u = PolyField::new(
            FieldShape::ColVector,
            vec![Poly2::constant(u1.clone()), Poly2::constant(u2.clone())],
        );
        let p = stress_p2(&u, &origin()).unwrap();
        let two_thirds = rat(2, 3);
        let third = rat(1, 3);
        assert_eq!(
            p.comp(0),
            &Poly2::monomial(1, 0, two_thirds.clone() * u1.clone())
        );
        assert_eq!(
            p.comp(1),
            &Poly2::monomial(0, 1, third.clone() * u1).add(&Poly2::monomial(1, 0, third * u2.clone()))
        );
        assert_eq!(p.comp(2), &Poly2::monomial(0, 1, two_thirds * u2));
    }

    #[test]
    fn stress_p1_inverts_airy_on_pure_square() {
        let u = PolyField::new(FieldShape::Scalar, vec![Poly2::monomial(2, 0, rint(1))]);
        let a = dop_poly(DiffOp::Airy, &u).unwrap();
        let back = stress_p1(&a, &origin()).unwrap();
        assert_eq!(back.comp(0), &Poly2::monomial(2, 0, rint(1)));
    }

    #[test]
    fn stress_null_homotopies_on_seeded_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let bases = [origin(), [rat(1, 3), rat(2, 7)]];
        for trial in 0..50 {
            let b = &bases[trial % 2];
            let deg = 1 + (trial as u32) % 4;
            // p1 airy u = u - j(u) for scalars.
            let u = random_field(&mut rng, FieldShape::Scalar, deg);
            let lhs = stress_p1(&dop_poly(DiffOp::Airy, &u).unwrap(), b).unwrap();
            let rhs = u.sub(&j_projection(JProjection::AffineStress, &u, b).unwrap());
            assert_eq!(lhs, rhs, "p1 airy = id - j at base {b:?}");
            // p2 div v + airy p1 v = v for symmetric fields.
            let v = random_field(&mut rng, FieldShape::SymMatrix, deg);
            let t1 = stress_p2(&dop_poly(DiffOp::DivMat, &v).unwrap(), b).unwrap();
            let t2 = dop_poly(DiffOp::Airy, &stress_p1(&v, b).unwrap()).unwrap();
            assert_eq!(t1.add(&t2), v, "p2 div + airy p1 = id");
            // div p2 w = w for vectors, and p1 p2 w = 0.
            let w = random_field(&mut rng, FieldShape::ColVector, deg);
            let pw = stress_p2(&w, b).unwrap();
            assert_eq!(dop_poly(DiffOp::DivMat, &pw).unwrap(), w, "div p2 = id");
            assert!(
                stress_p1(&pw, b).unwrap().is_zero(),
                "p1 p2 = 0 on the stress side"
            );
            // Degree bounds: p1 raises by at most 2, p2 by at most 1.
            let p1v = stress_p1(&v, b).unwrap();
            if let (Some(da), Some(db)) = (p1v.degree(), v.degree()) {
                assert!(da <= db + 2);
            }
            if let (Some(da), Some(db)) = (pw.degree(), w.degree()) {
                assert!(da <= db + 1);
            }
        }
    }

    #[test]
    fn strain_null_homotopies_on_seeded_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        let bases = [origin(), [rat(-2, 5), rat(1, 2)]];
        for trial in 0..50 {
            let b = &bases[trial % 2];
            let deg = 1 + (trial as u32) % 4;
            // p1 defo u = u - j(u) for vectors, j the rigid motion part.
            let u = random_field(&mut rng, FieldShape::ColVector, deg);
            let lhs = strain_p1(&dop_poly(DiffOp::Defo, &u).unwrap(), b).unwrap();
            let rhs = u.sub(&j_projection(JProjection::RigidStrain, &u, b).unwrap());
            assert_eq!(lhs, rhs, "p1 defo = id - j at base {b:?}");
            // p2 sven v + defo p1 v = v for symmetric fields.
            let v = random_field(&mut rng, FieldShape::SymMatrix, deg);
            let t1 = strain_p2(&dop_poly(DiffOp::Sven, &v).unwrap(), b).unwrap();
            let t2 = dop_poly(DiffOp::Defo, &strain_p1(&v, b).unwrap()).unwrap();
            assert_eq!(t1.add(&t2), v, "p2 sven + defo p1 = id");
            // sven p2 w = w for scalars, and p1 p2 w = 0.
            let w = random_field(&mut rng, FieldShape::Scalar, deg);
            let pw = strain_p2(&w, b).unwrap();
            assert_eq!(dop_poly(DiffOp::Sven, &pw).unwrap(), w, "sven p2 = id");
            assert!(
                strain_p1(&pw, b).unwrap().is_zero(),
                "p1 p2 = 0 on the strain side"
            );
            // Degree bounds: p1 raises by at most 1, p2 by at most 2.
            let p1v = strain_p1(&v, b).unwrap();
            if let (Some(da), Some(db)) = (p1v.degree(), v.degree()) {
                assert!(da <= db + 1);
            }
            if let (Some(da), Some(db)) = (pw.degree(), w.degree()) {
                assert!(da <= db + 2);
            }
        }
    }

    #[test]
    fn rigid_and_affine_projections_fix_their_ranges() {
        let b = [rat(1, 4), rint(-1)];
        let aff = PolyField::new(
            FieldShape::Scalar,
            vec![Poly2::constant(rint(2))
                .add(&Poly2::x1().scale(&rint(3)))
                .add(&Poly2::x2().scale(&rat(-1, 2)))],
        );
        assert_eq!(
            j_projection(JProjection::AffineStress, &aff, &b).unwrap(),
            aff
        );
        let rigid = PolyField::new(
            FieldShape::ColVector,
            vec![
                Poly2::constant(rint(1)).add(&Poly2::x2().scale(&rint(-4))),
                Poly2::constant(rint(-2)).add(&Poly2::x1().scale(&rint(4))),
            ],
        );
        assert_eq!(
            j_projection(JProjection::RigidStrain, &rigid, &b).unwrap(),
            rigid
        );
    }

    #[test]
    fn koszul_agrees_with_poincare_on_homogeneous_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        for r in 0..=4u32 {
            for _ in 0..4 {
                let u = random_homogeneous(&mut rng, FieldShape::SymMatrix, r);
                let k = koszul(KoszulOp::K1, r, &u).unwrap();
                let p = strain_p1(&u, &origin()).unwrap();
                assert_eq!(k, p, "k1 = p1 on homogeneous degree {r}");
                let w = random_homogeneous(&mut rng, FieldShape::Scalar, r);
                let k = koszul(KoszulOp::K2, r, &w).unwrap();
                let p = strain_p2(&w, &origin()).unwrap();
                assert_eq!(k, p, "k2 = p2 on homogeneous degree {r}");
            }
        }
    }

    #[test]
    fn koszul_rejects_inhomogeneous_input() {
        let u = PolyField::new(
            FieldShape::Scalar,
            vec![Poly2::constant(rint(1)).add(&Poly2::x1())],
        );
        assert!(matches!(
            koszul(KoszulOp::K2, 1, &u),
            Err(PoincareError::NotHomogeneous(1))
        ));
    }

    #[test]
    fn koszul_k2_of_one_is_the_rotated_rank_one_over_six() {
        let one = PolyField::new(FieldShape::Scalar, vec![Poly2::constant(rint(1))]);
        let k = koszul(KoszulOp::K2, 0, &one).unwrap();
        let expected = rotated_rank_one(&origin()).scale(&rat(1, 6));
        assert_eq!(k, expected);
        // sven of x^R x^R^T is the constant 6, so sven k2(1) = 1.
        assert_eq!(
            dop_poly(DiffOp::Sven, &k).unwrap().comp(0),
            &Poly2::constant(rint(1))
        );
    }

    #[test]
    fn rotated_rank_one_annihilates_position() {
        // (x^R x^R^T) x = 0 identically, about any base point.
        let b = [rat(2, 3), rint(-1)];
        let m = rotated_rank_one(&b);
        let x1b = Poly2::x1().sub(&Poly2::constant(b[0].clone()));
        let x2b = Poly2::x2().sub(&Poly2::constant(b[1].clone()));
        let r1 = m.entry(0, 0).mul(&x1b).add(&m.entry(0, 1).mul(&x2b));
        let r2 = m.entry(1, 0).mul(&x1b).add(&m.entry(1, 1).mul(&x2b));
        assert!(r1.is_zero() && r2.is_zero());
    }

    #[test]
    fn strain_p2_of_jumping_scalars_has_continuous_tangential_data() {
        let tri = Triangle::new([
            [rint(0), rint(0)],
            [rint(4), rint(1)],
            [rint(1), rint(3)],
        ]);
        let split = CtSplit::new(tri);
        // Piecewise constants (1, 2, 3).
        let consts = PiecewiseField::new(
            split.clone(),
            vec![
                PolyField::new(FieldShape::Scalar, vec![Poly2::constant(rint(1))]),
                PolyField::new(FieldShape::Scalar, vec![Poly2::constant(rint(2))]),
                PolyField::new(FieldShape::Scalar, vec![Poly2::constant(rint(3))]),
            ],
        );
        assert!(kosreg_check(&consts).unwrap());
        // Piecewise random linear scalars.
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let pieces = (0..3)
            .map(|_| PolyField::new(FieldShape::Scalar, vec![random_poly(&mut rng, 1)]))
            .collect();
        let w = PiecewiseField::new(split, pieces);
        assert!(kosreg_check(&w).unwrap());
        // The check is not vacuous: the normal-normal component of p2 w does
        // jump across an interior edge when w jumps.
        let u = poincare_piecewise(PoincareOp::StrainP2, &consts).unwrap();
        let jumps: Vec<Rat> = (0..3)
            .map(|i| {
                jump_moment(&u, i, TraceComp::NDotN, &Poly1::constant(rint(1))).unwrap()
            })
            .collect();
        assert!(jumps.iter().any(|j| *j != rint(0)));
    }

    #[test]
    fn poincare_piecewise_respects_whole_triangle_integral_shapes() {
        // Smoke test for the piecewise wrapper: strain p2 of the global
        // scalar 1 on a split integrates to a symmetric field whose trace
        // moments exist (values are checked elsewhere; here we only pin the
        // component count and exactness path).
        let split = CtSplit::new(Triangle::new([
            [rint(0), rint(0)],
            [rint(1), rint(0)],
            [rint(0), rint(1)],
        ]));
        let one = PiecewiseField::global(
            split,
            PolyField::new(FieldShape::Scalar, vec![Poly2::constant(rint(1))]),
        );
        let u = poincare_piecewise(PoincareOp::StrainP2, &one).unwrap();
        let ints = integrate_cell(&u, CellDomain::Whole).unwrap();
        assert_eq!(ints.len(), 3);
        assert!(ints.iter().any(|v| *v != rint(0)));
    }
}
