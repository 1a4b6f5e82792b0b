//! Exact-arithmetic finite element systems over discrete vector bundles.
//!
//! Everything is computed over arbitrary-precision rationals (or formal
//! exponential sums where transports are transcendental), so every rank,
//! dimension, cohomology group, and algebraic identity in this crate is
//! decided exactly: a check either holds on the nose or fails, there are no
//! tolerances.
//!
//! The layers, bottom to top:
//!
//! * [`rat`]: scalar rings (`Rat`, `ExpSum`).
//! * [`ratlin`]: dense exact linear algebra, matrix complexes, cohomology.
//! * [`complex`]: oriented cellular complexes and cubical refinement.
//! * [`bundle`]: discrete vector bundles, flatness, curvature, Bianchi.
//! * [`mesh`]: rational plane geometry, triangle meshes, Clough-Tocher splits.
//! * [`polyfield`]: piecewise bivariate polynomial fields and 2D operators.
//! * [`poincare`]: Poincare and Koszul operators for the elasticity complexes.
//! * [`fes`]: the finite element system axioms and their global consequences.
//! * [`elasticity2d`]: the concrete stress and strain element families.

#![forbid(unsafe_code)]

pub mod bundle;
pub mod complex;
pub mod elasticity2d;
pub mod fes;
pub mod mesh;
pub mod poincare;
pub mod polyfield;
pub mod rat;
pub mod ratlin;
