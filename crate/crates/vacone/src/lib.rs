//! Exact variational analysis for disjunctive programs.
//!
//! `vacone` analyses constraint systems of the form
//!
//! ```text
//!     minimize  f(x)   subject to   0 ∈ Γ(x) = G(x) - K,   x ∈ C,
//! ```
//!
//! where `G` is a polynomial map, `K` is a finite union of convex blocks
//! (polyhedra given by rational inequalities, or smooth convex sublevel
//! sets), and `C` is a further geometric constraint of the same shape.
//! Everything that can be decided in exact rational arithmetic is: linear
//! programs run on a rational simplex, normal and tangent cones are produced
//! as generator lists with `BigRational` entries, and set membership answers
//! are exact rather than tolerance-based.
//!
//! On top of the cone calculus the crate implements the asymptotic
//! stationarity/regularity toolbox for such programs:
//!
//! * [`polyhedral`] — H-polyhedra, finitely generated cones, tangent /
//!   regular / limiting normal cones, polars, exact projection.
//! * [`maps`] — constraint maps `Γ(x) = G(x) - K`, their coderivatives and
//!   the multiplier image maps `M` / `M̃` used by every stationarity test.
//! * [`stationarity`] — M-, FJM-, and asymptotically M-stationary point
//!   checks, asymptotic regularity (AM / dAM) certification and refutation,
//!   constraint qualifications, and a metric subregularity probe.
//! * [`penalty`] — a quadratic-penalty path follower that produces
//!   asymptotic stationarity traces (multiplier sequences) numerically.
//! * [`calculus`] — brute-force limiting-cone oracle plus intersection,
//!   preimage, and union-stability rules with exact verdicts.
//! * [`catalog`] — a library of worked instances with expected verdicts,
//!   used as a regression gate.
//! * [`problem`] — JSON (de)serialisation of problem instances.
//!
//! The crate is deterministic: every randomised search takes an explicit
//! seed, and reports for a fixed seed are byte-identical across runs.

pub mod calculus;
pub mod catalog;
pub mod expr;
pub mod linalg;
pub mod maps;
pub mod penalty;
pub mod polyhedral;
pub mod problem;
pub mod stationarity;

pub use expr::{parse_polynomial, parse_rational, PolyMap, Polynomial, Rational};
pub use polyhedral::{ConeUnion, GenCone, HPolyhedron, PolyUnion};
