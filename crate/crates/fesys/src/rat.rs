//! Scalar rings: exact rationals and formal exponential sums.
//!
//! `Rat` (arbitrary-precision rationals) is the workhorse scalar for the
//! whole crate. `ExpSum` is the commutative ring of finite sums
//! `c_1*exp(q_1) + ... + c_n*exp(q_n)` with rational coefficients and
//! exponents; it exists so that exponential-fitting transports, which are
//! transcendental as real numbers, can still be multiplied and compared
//! exactly. `Scalar` is the small ring interface shared by both.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Arbitrary-precision rational number.
pub type Rat = BigRational;

/// `p/q` as a `Rat`. Panics if `q == 0`.
pub fn rat(p: i64, q: i64) -> Rat {
    Rat::new(p.into(), q.into())
}

/// Integer `n` as a `Rat`.
pub fn rint(n: i64) -> Rat {
    Rat::from_integer(n.into())
}

/// Commutative ring interface for scalars the bundle machinery is generic
/// over.
///
/// `try_inverse` returns the multiplicative inverse when the element is a
/// unit of the ring: always for a nonzero rational, only for single-term
/// sums in `ExpSum`.
pub trait Scalar: Clone + PartialEq + std::fmt::Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn add(&self, rhs: &Self) -> Self;
    fn neg(&self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    fn is_zero(&self) -> bool;
    fn try_inverse(&self) -> Option<Self>;

    fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.neg())
    }
}

impl Scalar for Rat {
    fn zero() -> Self {
        Zero::zero()
    }

    fn one() -> Self {
        One::one()
    }

    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }

    fn neg(&self) -> Self {
        -self
    }

    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }

    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }

    fn try_inverse(&self) -> Option<Self> {
        if Zero::is_zero(self) {
            None
        } else {
            Some(self.recip())
        }
    }
}

/// A finite sum of formal exponentials with rational data: the group algebra
/// of (Q, +) over Q.
///
/// Terms are kept sorted by exponent with nonzero coefficients, so equality
/// is structural. Multiplication adds exponents; the ring is an integral
/// domain whose units are exactly the single-term elements.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ExpSum {
    terms: Vec<(Rat, Rat)>, // (exponent, coefficient), sorted by exponent
}

impl ExpSum {
    fn normalized(mut terms: Vec<(Rat, Rat)>) -> Self {
        terms.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out: Vec<(Rat, Rat)> = Vec::with_capacity(terms.len());
        for (q, c) in terms {
            match out.last_mut() {
                Some((lq, lc)) if *lq == q => *lc += c,
                _ => out.push((q, c)),
            }
            if let Some((_, lc)) = out.last() {
                if Zero::is_zero(lc) {
                    out.pop();
                }
            }
        }
        ExpSum { terms: out }
    }

    /// The formal exponential `exp(q)`.
    pub fn exp(q: Rat) -> Self {
        Self::term(q, One::one())
    }

    /// A single term `c * exp(q)`.
    pub fn term(q: Rat, c: Rat) -> Self {
        Self::normalized(vec![(q, c)])
    }

    /// A rational constant (exponent zero).
    pub fn constant(c: Rat) -> Self {
        Self::term(Zero::zero(), c)
    }

    /// The terms as (exponent, coefficient) pairs, sorted by exponent.
    pub fn terms(&self) -> &[(Rat, Rat)] {
        &self.terms
    }
}

impl std::fmt::Display for ExpSum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (q, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            if Zero::is_zero(q) {
                write!(f, "{c}")?;
            } else {
                write!(f, "{c}*exp({q})")?;
            }
        }
        Ok(())
    }
}

impl Scalar for ExpSum {
    fn zero() -> Self {
        ExpSum { terms: Vec::new() }
    }

    fn one() -> Self {
        ExpSum::constant(One::one())
    }

    fn add(&self, rhs: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(rhs.terms.iter().cloned());
        Self::normalized(terms)
    }

    fn neg(&self) -> Self {
        ExpSum {
            terms: self.terms.iter().map(|(q, c)| (q.clone(), -c)).collect(),
        }
    }

    fn mul(&self, rhs: &Self) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * rhs.terms.len());
        for (q1, c1) in &self.terms {
            for (q2, c2) in &rhs.terms {
                terms.push((q1 + q2, c1 * c2));
            }
        }
        Self::normalized(terms)
    }

    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn try_inverse(&self) -> Option<Self> {
        match self.terms.as_slice() {
            [(q, c)] => Some(ExpSum::term(-q, c.recip())),
            _ => None,
        }
    }
}

/// |x| as a `Rat`.
pub fn rat_abs(x: &Rat) -> Rat {
    x.abs()
}
