//! Polyhedral sets, finitely generated cones, and exact cone calculus.
//!
//! The primitive objects are:
//!
//! * [`HPolyhedron`] — `{ y : a_i^T y <= b_i (i in I), a_j^T y = b_j (j in E) }`
//!   with rational data, the H-representation;
//! * [`GenCone`] — a finitely generated cone `cone{r_1,..,r_p} + span{l_1,..,l_q}`,
//!   the V-representation used for normal cones;
//! * [`SmoothConvexBlock`] — a convex sublevel set `{ y : g_j(y) <= 0 }` of
//!   smooth convex polynomials with a user-asserted Slater point;
//! * [`PolyUnion`] — a finite union of such blocks (a disjunctive set);
//! * [`ConeUnion`] — a finite union of generated cones, the output type of
//!   limiting normal cone computations.
//!
//! All decision procedures here are exact. Linear programs are solved by a
//! rational simplex ([`lp_feasible`]), H-to-V conversion by double
//! description ([`hcone_generators`]), nearest-point projection by
//! enumerated KKT systems ([`project`]), and limiting normal cones by
//! activity-pattern enumeration ([`limiting_normal_cone`]). Inputs beyond
//! the supported size (dimension > 10 or more than 20 rows in a block) are
//! rejected with [`PolyError::CapacityExceeded`] rather than answered
//! approximately.

mod dd;
mod lp;
mod pattern;
mod project;

pub use dd::hcone_generators;
pub use lp::{lp_feasible, LpOutcome};
pub use pattern::{limiting_normal_cone, limiting_normal_cone_detailed, PatternBranch};
pub use project::{dist_sq_exact, project, project_polyhedron_exact, Projection};

use crate::expr::{rat_to_f64, Polynomial, RatFunc, Rational};
use crate::linalg::{dot, is_zero_vec, norm1, rref};
use num::{One, Signed, Zero};
use std::fmt;
use thiserror::Error;

/// Largest ambient dimension accepted by the exact routines.
pub const MAX_DIM: usize = 10;
/// Largest number of rows accepted per polyhedral block.
pub const MAX_ROWS: usize = 20;

/// Errors from polyhedral computations.
#[derive(Debug, Error)]
pub enum PolyError {
    /// Input exceeds the supported size for exact enumeration.
    #[error("capacity exceeded: {0}")]
    CapacityExceeded(String),
    /// Mismatched ambient dimensions.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// A base point was required to lie in the set but does not.
    #[error("point is not in the set: {0}")]
    PointNotInSet(String),
    /// The set is empty where a nonempty set was required.
    #[error("set is empty: {0}")]
    EmptySet(String),
    /// Unsupported structural combination (e.g. smooth blocks where a
    /// polyhedral set is required).
    #[error("unsupported structure: {0}")]
    Unsupported(String),
}

// ---------------------------------------------------------------------------
// H-polyhedra
// ---------------------------------------------------------------------------

/// One linear constraint `a^T y <= b` (or `= b` when `eq` is set).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HRow {
    /// Constraint normal.
    pub a: Vec<Rational>,
    /// Right-hand side.
    pub b: Rational,
    /// Equality row if true, inequality (`<=`) otherwise.
    pub eq: bool,
}

impl HRow {
    /// Inequality row `a^T y <= b`.
    pub fn le(a: Vec<Rational>, b: Rational) -> Self {
        HRow { a, b, eq: false }
    }

    /// Equality row `a^T y = b`.
    pub fn eqn(a: Vec<Rational>, b: Rational) -> Self {
        HRow { a, b, eq: true }
    }

    /// Whether the point satisfies this row.
    pub fn holds_at(&self, y: &[Rational]) -> bool {
        let lhs = dot(&self.a, y);
        if self.eq {
            lhs == self.b
        } else {
            lhs <= self.b
        }
    }

    /// Whether the row is active (holds with equality) at the point.
    pub fn active_at(&self, y: &[Rational]) -> bool {
        dot(&self.a, y) == self.b
    }
}

/// Convex polyhedron in H-representation with exact rational data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HPolyhedron {
    dim: usize,
    rows: Vec<HRow>,
}

impl HPolyhedron {
    /// Build a polyhedron, validating row lengths and capacity.
    pub fn new(dim: usize, rows: Vec<HRow>) -> Result<Self, PolyError> {
        if dim > MAX_DIM {
            return Err(PolyError::CapacityExceeded(format!(
                "dimension {dim} exceeds the supported maximum {MAX_DIM}"
            )));
        }
        if rows.len() > MAX_ROWS {
            return Err(PolyError::CapacityExceeded(format!(
                "{} rows exceed the supported maximum {MAX_ROWS}",
                rows.len()
            )));
        }
        for r in &rows {
            if r.a.len() != dim {
                return Err(PolyError::DimensionMismatch(format!(
                    "row has {} coefficients in dimension {dim}",
                    r.a.len()
                )));
            }
        }
        Ok(HPolyhedron { dim, rows })
    }

    /// Crate-internal constructor without capacity limits, for derived
    /// systems (weight-space LPs, graph polyhedra) that are not user-facing
    /// blocks. Row lengths are still validated.
    pub(crate) fn new_unchecked(dim: usize, rows: Vec<HRow>) -> Self {
        for r in &rows {
            assert_eq!(r.a.len(), dim, "row length mismatch in internal system");
        }
        HPolyhedron { dim, rows }
    }

    /// `R^dim` (no constraints).
    pub fn whole_space(dim: usize) -> Self {
        HPolyhedron { dim, rows: Vec::new() }
    }

    /// The nonpositive orthant `{ y : y_i <= 0 }`.
    pub fn nonpos_orthant(dim: usize) -> Self {
        let rows = (0..dim)
            .map(|i| {
                let mut a = vec![Rational::zero(); dim];
                a[i] = Rational::one();
                HRow::le(a, Rational::zero())
            })
            .collect();
        HPolyhedron { dim, rows }
    }

    /// The nonnegative orthant `{ y : y_i >= 0 }`.
    pub fn nonneg_orthant(dim: usize) -> Self {
        let rows = (0..dim)
            .map(|i| {
                let mut a = vec![Rational::zero(); dim];
                a[i] = -Rational::one();
                HRow::le(a, Rational::zero())
            })
            .collect();
        HPolyhedron { dim, rows }
    }

    /// The singleton `{ p }`.
    pub fn point(p: &[Rational]) -> Self {
        let dim = p.len();
        let rows = (0..dim)
            .map(|i| {
                let mut a = vec![Rational::zero(); dim];
                a[i] = Rational::one();
                HRow::eqn(a, p[i].clone())
            })
            .collect();
        HPolyhedron { dim, rows }
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Constraint rows.
    pub fn rows(&self) -> &[HRow] {
        &self.rows
    }

    /// Exact membership test.
    pub fn contains(&self, y: &[Rational]) -> bool {
        y.len() == self.dim && self.rows.iter().all(|r| r.holds_at(y))
    }

    /// Indices of rows active (tight) at `y`.
    pub fn active_rows(&self, y: &[Rational]) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.active_at(y))
            .map(|(i, _)| i)
            .collect()
    }

    /// True iff every right-hand side is zero (the set is a cone).
    pub fn is_cone(&self) -> bool {
        self.rows.iter().all(|r| r.b.is_zero())
    }

    /// Append a row (validating its length and total capacity).
    pub fn push_row(&mut self, row: HRow) -> Result<(), PolyError> {
        if row.a.len() != self.dim {
            return Err(PolyError::DimensionMismatch(format!(
                "row has {} coefficients in dimension {}",
                row.a.len(),
                self.dim
            )));
        }
        if self.rows.len() + 1 > MAX_ROWS {
            return Err(PolyError::CapacityExceeded(format!(
                "more than {MAX_ROWS} rows in one block"
            )));
        }
        self.rows.push(row);
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Generated cones
// ---------------------------------------------------------------------------

/// Finitely generated cone `cone{rays} + span{lineality}`.
///
/// The canonical form (enforced by [`GenCone::canonicalize`]) scales each
/// ray so its leading nonzero entry has absolute value 1 (preserving its
/// direction), reduces the lineality generators to a reduced-row-echelon
/// basis of their span, sorts, and deduplicates. Cones that are equal as
/// generator *lists* then compare equal structurally; set-level comparisons
/// go through membership LPs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenCone {
    dim: usize,
    rays: Vec<Vec<Rational>>,
    lineality: Vec<Vec<Rational>>,
}

impl GenCone {
    /// Build and canonicalize a generated cone.
    pub fn new(dim: usize, rays: Vec<Vec<Rational>>, lineality: Vec<Vec<Rational>>) -> Self {
        let mut c = GenCone { dim, rays, lineality };
        c.canonicalize();
        c
    }

    /// The trivial cone `{0}`.
    pub fn zero(dim: usize) -> Self {
        GenCone { dim, rays: Vec::new(), lineality: Vec::new() }
    }

    /// The whole space `R^dim` as a cone.
    pub fn whole_space(dim: usize) -> Self {
        let lineality = (0..dim)
            .map(|i| {
                let mut e = vec![Rational::zero(); dim];
                e[i] = Rational::one();
                e
            })
            .collect();
        GenCone { dim, rays: Vec::new(), lineality }
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Extreme-ray generators (after canonicalization: scaled and sorted).
    pub fn rays(&self) -> &[Vec<Rational>] {
        &self.rays
    }

    /// Lineality-space generators (after canonicalization: an RREF basis).
    pub fn lineality(&self) -> &[Vec<Rational>] {
        &self.lineality
    }

    /// True iff the cone is exactly `{0}`.
    pub fn is_zero(&self) -> bool {
        self.rays.is_empty() && self.lineality.is_empty()
    }

    /// All generators with the lineality expanded to `± basis` rays.
    /// Membership of every listed vector in a convex cone `D` is equivalent
    /// to inclusion of this whole cone in `D`.
    pub fn spanning_vectors(&self) -> Vec<Vec<Rational>> {
        let mut out = self.rays.clone();
        for l in &self.lineality {
            out.push(l.clone());
            out.push(l.iter().map(|v| -v.clone()).collect());
        }
        out
    }

    /// Canonicalize in place (see type docs).
    pub fn canonicalize(&mut self) {
        let dim = self.dim;
        let mut rays: Vec<Vec<Rational>> = self
            .rays
            .drain(..)
            .filter(|r| !is_zero_vec(r))
            .map(|r| {
                let lead = r.iter().find(|v| !v.is_zero()).unwrap().abs();
                r.iter().map(|v| v / &lead).collect()
            })
            .collect();
        rays.sort();
        rays.dedup();
        let mut lin: Vec<Vec<Rational>> =
            self.lineality.drain(..).filter(|l| !is_zero_vec(l)).collect();
        if !lin.is_empty() {
            let pivots = rref(&mut lin);
            lin.truncate(pivots.len());
        }
        // Drop rays that lie in the lineality span (they add nothing).
        if !lin.is_empty() {
            rays.retain(|r| {
                let mut m = lin.clone();
                m.push(r.clone());
                crate::linalg::rank(&m) > lin.len()
            });
        }
        self.rays = rays;
        self.lineality = lin;
        self.dim = dim;
    }

    /// Exact membership `v in cone{rays} + span{lineality}` via a
    /// feasibility LP over the generator weights.
    pub fn contains(&self, v: &[Rational]) -> Result<bool, PolyError> {
        assert_eq!(v.len(), self.dim, "membership query dimension mismatch");
        if is_zero_vec(v) {
            return Ok(true);
        }
        if self.is_zero() {
            return Ok(false);
        }
        // Weights: mu_i >= 0 per ray, nu_j free per lineality generator.
        let p = self.rays.len();
        let q = self.lineality.len();
        let nw = p + q;
        let mut rows = Vec::new();
        for coord in 0..self.dim {
            let mut a = Vec::with_capacity(nw);
            for r in &self.rays {
                a.push(r[coord].clone());
            }
            for l in &self.lineality {
                a.push(l[coord].clone());
            }
            rows.push(HRow::eqn(a, v[coord].clone()));
        }
        for i in 0..p {
            let mut a = vec![Rational::zero(); nw];
            a[i] = -Rational::one();
            rows.push(HRow::le(a, Rational::zero()));
        }
        // Weight-space systems may exceed block capacity limits; they are
        // internal, so bypass `HPolyhedron::new` validation deliberately.
        let sys = HPolyhedron { dim: nw, rows };
        Ok(matches!(lp::lp_feasible(&sys, None)?, LpOutcome::Optimal { .. }))
    }

    /// Exact inclusion of this cone in another convex generated cone.
    pub fn subset_of(&self, other: &GenCone) -> Result<bool, PolyError> {
        for v in self.spanning_vectors() {
            if !other.contains(&v)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

impl fmt::Display for GenCone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fmt_vec = |v: &[Rational]| {
            let parts: Vec<String> = v.iter().map(|c| c.to_string()).collect();
            format!("({})", parts.join(", "))
        };
        write!(f, "cone{{")?;
        write!(f, "{}", self.rays.iter().map(|r| fmt_vec(r)).collect::<Vec<_>>().join(", "))?;
        write!(f, "}}")?;
        if !self.lineality.is_empty() {
            write!(
                f,
                " + span{{{}}}",
                self.lineality.iter().map(|l| fmt_vec(l)).collect::<Vec<_>>().join(", ")
            )?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Cone unions
// ---------------------------------------------------------------------------

/// Outcome of an exact union-membership query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UnionMembership {
    /// Member of the branch with this index (lowest matching index).
    Member { branch: usize },
    /// In none of the branches.
    NotMember,
}

/// A finite union of generated cones (e.g. a limiting normal cone).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConeUnion {
    dim: usize,
    branches: Vec<GenCone>,
}

impl ConeUnion {
    /// Build a union; branches are canonicalized and exact duplicates
    /// removed (branch order is otherwise preserved).
    pub fn new(dim: usize, branches: Vec<GenCone>) -> Self {
        let mut u = ConeUnion { dim, branches };
        u.dedup();
        u
    }

    /// The union consisting of the single branch `{0}`.
    pub fn zero(dim: usize) -> Self {
        ConeUnion { dim, branches: vec![GenCone::zero(dim)] }
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Branches in order.
    pub fn branches(&self) -> &[GenCone] {
        &self.branches
    }

    fn dedup(&mut self) {
        for b in &mut self.branches {
            b.canonicalize();
            assert_eq!(b.dim, self.dim, "branch dimension mismatch");
        }
        let mut kept: Vec<GenCone> = Vec::new();
        for b in self.branches.drain(..) {
            if !kept.contains(&b) {
                kept.push(b);
            }
        }
        self.branches = kept;
    }

    /// Remove branches that are subsets of other branches (exact LP check).
    /// The result describes the same point set with fewer branches.
    pub fn prune_contained(&mut self) -> Result<(), PolyError> {
        let mut keep = vec![true; self.branches.len()];
        for i in 0..self.branches.len() {
            if !keep[i] {
                continue;
            }
            for j in 0..self.branches.len() {
                if i == j || !keep[j] {
                    continue;
                }
                if self.branches[i].subset_of(&self.branches[j])? {
                    // Tie (equal cones): keep the earlier branch.
                    if !(self.branches[j].subset_of(&self.branches[i])? && i < j) {
                        keep[i] = false;
                        break;
                    }
                }
            }
        }
        let mut idx = 0;
        self.branches.retain(|_| {
            let k = keep[idx];
            idx += 1;
            k
        });
        if self.branches.is_empty() {
            self.branches.push(GenCone::zero(self.dim));
        }
        Ok(())
    }

    /// Exact membership across branches (lowest branch index reported).
    pub fn membership(&self, v: &[Rational]) -> Result<UnionMembership, PolyError> {
        for (i, b) in self.branches.iter().enumerate() {
            if b.contains(v)? {
                return Ok(UnionMembership::Member { branch: i });
            }
        }
        Ok(UnionMembership::NotMember)
    }

    /// Convenience boolean membership.
    pub fn contains(&self, v: &[Rational]) -> Result<bool, PolyError> {
        Ok(matches!(self.membership(v)?, UnionMembership::Member { .. }))
    }
}

impl fmt::Display for ConeUnion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.branches.iter().map(|b| b.to_string()).collect();
        write!(f, "{}", parts.join("  U  "))
    }
}

// ---------------------------------------------------------------------------
// Smooth convex blocks and disjunctive unions
// ---------------------------------------------------------------------------

/// A convex block `{ y : g_j(y) <= 0, j = 1..m }` with smooth polynomial
/// `g_j`, convexity and strict feasibility of the Slater point being
/// user-asserted. Optional rational boundary curves `s -> c(s)` (with
/// `c(0)` on the boundary) let the exact samplers follow the boundary
/// without leaving rational arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothConvexBlock {
    dim: usize,
    gs: Vec<Polynomial>,
    slater: Vec<Rational>,
    curves: Vec<Vec<RatFunc>>,
}

impl SmoothConvexBlock {
    /// Build a smooth block; checks dimensions and that the Slater point is
    /// strictly feasible for every inequality.
    pub fn new(
        dim: usize,
        gs: Vec<Polynomial>,
        slater: Vec<Rational>,
    ) -> Result<Self, PolyError> {
        if dim > MAX_DIM {
            return Err(PolyError::CapacityExceeded(format!(
                "dimension {dim} exceeds the supported maximum {MAX_DIM}"
            )));
        }
        if slater.len() != dim {
            return Err(PolyError::DimensionMismatch(
                "Slater point has wrong dimension".to_string(),
            ));
        }
        for g in &gs {
            if g.n_vars() != dim {
                return Err(PolyError::DimensionMismatch(
                    "smooth inequality has wrong arity".to_string(),
                ));
            }
            if !g.eval(&slater).is_negative() {
                return Err(PolyError::Unsupported(
                    "Slater point is not strictly feasible".to_string(),
                ));
            }
        }
        Ok(SmoothConvexBlock { dim, gs, slater, curves: Vec::new() })
    }

    /// Attach a rational boundary curve `s -> c(s)`; `c(0)` must satisfy
    /// `g_j(c(0)) = 0` for at least one inequality and `g_j(c(s)) <= 0`
    /// identically is the caller's responsibility.
    pub fn with_curve(mut self, curve: Vec<RatFunc>) -> Result<Self, PolyError> {
        if curve.len() != self.dim {
            return Err(PolyError::DimensionMismatch(
                "boundary curve has wrong dimension".to_string(),
            ));
        }
        self.curves.push(curve);
        Ok(self)
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Defining inequalities.
    pub fn inequalities(&self) -> &[Polynomial] {
        &self.gs
    }

    /// The asserted Slater (strictly feasible) point.
    pub fn slater(&self) -> &[Rational] {
        &self.slater
    }

    /// Attached boundary curves.
    pub fn curves(&self) -> &[Vec<RatFunc>] {
        &self.curves
    }

    /// Exact membership.
    pub fn contains(&self, y: &[Rational]) -> bool {
        y.len() == self.dim && self.gs.iter().all(|g| !g.eval(y).is_positive())
    }

    /// Indices of inequalities active (`g_j(y) = 0`) at `y`.
    pub fn active_indices(&self, y: &[Rational]) -> Vec<usize> {
        self.gs
            .iter()
            .enumerate()
            .filter(|(_, g)| g.eval(y).is_zero())
            .map(|(j, _)| j)
            .collect()
    }

    /// Normal cone of the block at a member point: `{0}` in the interior,
    /// `cone{∇g_j(y) : g_j(y) = 0}` on the boundary (valid under the
    /// asserted convexity + Slater condition).
    pub fn normal_cone(&self, y: &[Rational]) -> Result<GenCone, PolyError> {
        if !self.contains(y) {
            return Err(PolyError::PointNotInSet("smooth block".to_string()));
        }
        let rays = self
            .active_indices(y)
            .into_iter()
            .map(|j| self.gs[j].gradient_at(y))
            .collect();
        Ok(GenCone::new(self.dim, rays, Vec::new()))
    }
}

/// One convex block of a disjunctive set.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    /// Polyhedral block.
    Poly(HPolyhedron),
    /// Smooth convex block.
    Smooth(SmoothConvexBlock),
}

impl Block {
    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        match self {
            Block::Poly(h) => h.dim(),
            Block::Smooth(s) => s.dim(),
        }
    }

    /// Exact membership.
    pub fn contains(&self, y: &[Rational]) -> bool {
        match self {
            Block::Poly(h) => h.contains(y),
            Block::Smooth(s) => s.contains(y),
        }
    }
}

/// A finite union of convex blocks (disjunctive set).
#[derive(Debug, Clone, PartialEq)]
pub struct PolyUnion {
    dim: usize,
    blocks: Vec<Block>,
}

impl PolyUnion {
    /// Build a union of blocks sharing one ambient dimension.
    pub fn new(blocks: Vec<Block>) -> Result<Self, PolyError> {
        let Some(first) = blocks.first() else {
            return Err(PolyError::EmptySet("union must have at least one block".to_string()));
        };
        let dim = first.dim();
        for b in &blocks {
            if b.dim() != dim {
                return Err(PolyError::DimensionMismatch(
                    "union blocks have differing dimensions".to_string(),
                ));
            }
        }
        Ok(PolyUnion { dim, blocks })
    }

    /// Union of polyhedral blocks.
    pub fn from_polyhedra(hs: Vec<HPolyhedron>) -> Result<Self, PolyError> {
        PolyUnion::new(hs.into_iter().map(Block::Poly).collect())
    }

    /// Single polyhedral block.
    pub fn single(h: HPolyhedron) -> Self {
        let dim = h.dim();
        PolyUnion { dim, blocks: vec![Block::Poly(h)] }
    }

    /// Single smooth block.
    pub fn single_smooth(s: SmoothConvexBlock) -> Self {
        let dim = s.dim();
        PolyUnion { dim, blocks: vec![Block::Smooth(s)] }
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Blocks in order.
    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// True iff every block is polyhedral.
    pub fn is_polyhedral(&self) -> bool {
        self.blocks.iter().all(|b| matches!(b, Block::Poly(_)))
    }

    /// Lowest index of a block containing `y`, if any.
    pub fn containing_block(&self, y: &[Rational]) -> Option<usize> {
        self.blocks.iter().position(|b| b.contains(y))
    }

    /// Exact membership.
    pub fn contains(&self, y: &[Rational]) -> bool {
        self.containing_block(y).is_some()
    }
}

// ---------------------------------------------------------------------------
// Convex cone operations
// ---------------------------------------------------------------------------

/// Tangent cone of a convex polyhedron at a member point, in H-form:
/// `{ d : a_i^T d <= 0 (active inequalities), a_j^T d = 0 (equalities) }`.
pub fn tangent_cone_convex(h: &HPolyhedron, y: &[Rational]) -> Result<HPolyhedron, PolyError> {
    if !h.contains(y) {
        return Err(PolyError::PointNotInSet("tangent cone base point".to_string()));
    }
    let rows = h
        .rows
        .iter()
        .filter(|r| r.eq || r.active_at(y))
        .map(|r| HRow { a: r.a.clone(), b: Rational::zero(), eq: r.eq })
        .collect();
    Ok(HPolyhedron { dim: h.dim, rows })
}

/// Regular (= limiting, by convexity) normal cone of a convex polyhedron at
/// a member point: `cone{a_i : active inequalities} + span{a_j : equalities}`.
pub fn normal_cone_convex(h: &HPolyhedron, y: &[Rational]) -> Result<GenCone, PolyError> {
    if !h.contains(y) {
        return Err(PolyError::PointNotInSet("normal cone base point".to_string()));
    }
    let mut rays = Vec::new();
    let mut lineality = Vec::new();
    for r in &h.rows {
        if r.eq {
            lineality.push(r.a.clone());
        } else if r.active_at(y) {
            rays.push(r.a.clone());
        }
    }
    Ok(GenCone::new(h.dim, rays, lineality))
}

/// Polar of a generated cone, in H-form:
/// `{ v : r^T v <= 0 for all rays, l^T v = 0 for all lineality generators }`.
pub fn polar_of_gencone(c: &GenCone) -> HPolyhedron {
    let mut rows = Vec::new();
    for r in &c.rays {
        rows.push(HRow::le(r.clone(), Rational::zero()));
    }
    for l in &c.lineality {
        rows.push(HRow::eqn(l.clone(), Rational::zero()));
    }
    HPolyhedron { dim: c.dim, rows }
}

/// Polar of an H-cone `{ y : a_i^T y <= 0, e_j^T y = 0 }`, which is the
/// generated cone `cone{a_i} + span{e_j}` (Farkas duality).
pub fn polar_of_hcone(h: &HPolyhedron) -> Result<GenCone, PolyError> {
    if !h.is_cone() {
        return Err(PolyError::Unsupported(
            "polar_of_hcone requires homogeneous right-hand sides".to_string(),
        ));
    }
    let mut rays = Vec::new();
    let mut lineality = Vec::new();
    for r in &h.rows {
        if r.eq {
            lineality.push(r.a.clone());
        } else {
            rays.push(r.a.clone());
        }
    }
    Ok(GenCone::new(h.dim, rays, lineality))
}

/// H-representation of a generated cone (double polar through double
/// description).
pub fn gencone_to_hcone(c: &GenCone) -> Result<HPolyhedron, PolyError> {
    // C = (C°)°: first compute generators of C° from the H-form polar of C,
    // then read the H-form of C off those generators.
    let polar_gens = hcone_generators(&polar_of_gencone(c))?;
    Ok(polar_of_gencone(&polar_gens))
}

/// Minkowski sum of generated cones (concatenate generators).
pub fn minkowski_sum(a: &GenCone, b: &GenCone) -> GenCone {
    assert_eq!(a.dim, b.dim, "Minkowski sum dimension mismatch");
    let mut rays = a.rays.clone();
    rays.extend(b.rays.iter().cloned());
    let mut lineality = a.lineality.clone();
    lineality.extend(b.lineality.iter().cloned());
    GenCone::new(a.dim, rays, lineality)
}

/// Exact intersection of two generated cones (via H-forms and double
/// description).
pub fn intersect_gencones(a: &GenCone, b: &GenCone) -> Result<GenCone, PolyError> {
    assert_eq!(a.dim, b.dim, "intersection dimension mismatch");
    let ha = gencone_to_hcone(a)?;
    let hb = gencone_to_hcone(b)?;
    let mut rows = ha.rows;
    rows.extend(hb.rows);
    hcone_generators(&HPolyhedron { dim: a.dim, rows })
}

/// Result of a union-in-union inclusion test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InclusionResult {
    /// Inclusion proved exactly (each branch fits in a single target branch,
    /// or the ambient dimension admits an exhaustive check).
    VerifiedExact,
    /// All generators and `n_samples` random conic combinations per branch
    /// are members; inclusion holds at sampling resolution only.
    VerifiedSampled,
    /// An explicit rational vector in the source union but not the target.
    Counterexample(Vec<Rational>),
}

/// Test `U ⊆ V` for unions of generated cones.
///
/// Exactness is reported honestly: when every branch of `U` is contained in
/// a *single* branch of `V` (checked by exact membership of its generators)
/// the inclusion is `VerifiedExact`; likewise in ambient dimension 1, where
/// cone unions are determined by membership of `±1`. Otherwise random conic
/// combinations (seeded) may either produce an exact `Counterexample` or a
/// sampling-resolution verification.
pub fn cone_union_inclusion(
    u: &ConeUnion,
    v: &ConeUnion,
    n_samples: usize,
    seed: u64,
) -> Result<InclusionResult, PolyError> {
    use rand::{Rng, SeedableRng};
    assert_eq!(u.dim, v.dim, "inclusion dimension mismatch");

    if u.dim == 1 {
        // One-dimensional unions are unions of {0}, R+, R-: membership of
        // +1 and -1 decides inclusion outright.
        for sign in [1i64, -1] {
            let probe = vec![crate::expr::rat_int(sign)];
            if u.contains(&probe)? && !v.contains(&probe)? {
                return Ok(InclusionResult::Counterexample(probe));
            }
        }
        return Ok(InclusionResult::VerifiedExact);
    }

    let mut all_single = true;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for branch in &u.branches {
        let gens = branch.spanning_vectors();
        // Exact refutation: a generator outside the whole target union.
        for g in &gens {
            if !v.contains(g)? {
                return Ok(InclusionResult::Counterexample(g.clone()));
            }
        }
        // Exact verification: all generators inside one convex target branch.
        let single = v
            .branches
            .iter()
            .map(|vb| branch.subset_of(vb))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .any(|ok| ok);
        if single {
            continue;
        }
        // Cones generated by at most one ray (plus no lineality) are decided
        // by their generators alone.
        if gens.len() <= 1 {
            continue;
        }
        all_single = false;
        // Random conic combinations probe the interior of the branch, where
        // a union target may fail even though every generator is covered.
        for _ in 0..n_samples {
            let mut probe = vec![Rational::zero(); u.dim];
            for g in &gens {
                let w = crate::expr::rat_int(rng.gen_range(0..=8));
                for (p, gi) in probe.iter_mut().zip(g) {
                    *p += gi * &w;
                }
            }
            if !is_zero_vec(&probe) && !v.contains(&probe)? {
                return Ok(InclusionResult::Counterexample(probe));
            }
        }
    }
    Ok(if all_single { InclusionResult::VerifiedExact } else { InclusionResult::VerifiedSampled })
}

/// Floating-point norm of a rational vector (reporting convenience).
pub fn norm_f64(v: &[Rational]) -> f64 {
    v.iter().map(|c| rat_to_f64(c).powi(2)).sum::<f64>().sqrt()
}

/// Safe locality radius at `y`: within `|y' - y|_inf < rho`, every
/// constraint row of every block that is *not* tight at `y` keeps its
/// strict status (satisfied or violated). Returns 1 when every row is tight.
pub(crate) fn safe_radius(union: &PolyUnion, y: &[Rational]) -> Rational {
    let mut rho = Rational::one();
    for block in &union.blocks {
        let Block::Poly(h) = block else { continue };
        for r in &h.rows {
            let gap = (dot(&r.a, y) - &r.b).abs();
            if gap.is_zero() {
                continue;
            }
            let scale = norm1(&r.a);
            if scale.is_zero() {
                continue;
            }
            let bound = gap / (scale * Rational::from_integer(2.into()));
            if bound < rho {
                rho = bound;
            }
        }
    }
    rho
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{rat, rat_int, rvec};

    fn ray(v: &[i64]) -> Vec<Rational> {
        rvec(v)
    }

    #[test]
    fn orthant_membership_and_activity() {
        let h = HPolyhedron::nonpos_orthant(2);
        assert!(h.contains(&rvec(&[-1, 0])));
        assert!(!h.contains(&rvec(&[1, -1])));
        assert_eq!(h.active_rows(&rvec(&[-1, 0])), vec![1]);
    }

    #[test]
    fn capacity_limits_enforced() {
        let rows: Vec<HRow> =
            (0..21).map(|_| HRow::le(vec![Rational::one()], Rational::zero())).collect();
        assert!(matches!(
            HPolyhedron::new(1, rows),
            Err(PolyError::CapacityExceeded(_))
        ));
        assert!(matches!(
            HPolyhedron::new(11, vec![]),
            Err(PolyError::CapacityExceeded(_))
        ));
    }

    #[test]
    fn gencone_membership() {
        // cone{(1,0),(0,1)} = nonnegative quadrant.
        let c = GenCone::new(2, vec![ray(&[1, 0]), ray(&[0, 1])], vec![]);
        assert!(c.contains(&rvec(&[3, 5])).unwrap());
        assert!(c.contains(&rvec(&[0, 0])).unwrap());
        assert!(!c.contains(&rvec(&[-1, 2])).unwrap());
        // With lineality span{(1,1)} the cone also reaches (-1, 2) = 3*(0,1) - 1*(1,1) ... = (-1,2).
        let cl = GenCone::new(2, vec![ray(&[0, 1])], vec![ray(&[1, 1])]);
        assert!(cl.contains(&rvec(&[-1, 2])).unwrap());
        assert!(!cl.contains(&rvec(&[1, -1])).unwrap());
    }

    #[test]
    fn canonicalization_scales_and_dedups() {
        let c1 = GenCone::new(2, vec![ray(&[2, 4]), ray(&[1, 2])], vec![]);
        assert_eq!(c1.rays().len(), 1);
        assert_eq!(c1.rays()[0], vec![rat_int(1), rat_int(2)]);
        // Opposite rays are distinct (directions matter).
        let c2 = GenCone::new(1, vec![ray(&[1]), ray(&[-1])], vec![]);
        assert_eq!(c2.rays().len(), 2);
    }

    #[test]
    fn tangent_and_normal_cone_of_box_corner() {
        // Box [−1,0]² at the corner (0,0): tangent = nonpositive quadrant,
        // normal = nonnegative quadrant.
        let rows = vec![
            HRow::le(ray(&[1, 0]), rat_int(0)),
            HRow::le(ray(&[0, 1]), rat_int(0)),
            HRow::le(ray(&[-1, 0]), rat_int(1)),
            HRow::le(ray(&[0, -1]), rat_int(1)),
        ];
        let h = HPolyhedron::new(2, rows).unwrap();
        let x = rvec(&[0, 0]);
        let t = tangent_cone_convex(&h, &x).unwrap();
        assert!(t.contains(&rvec(&[-5, -7])));
        assert!(!t.contains(&rvec(&[1, -1])));
        let n = normal_cone_convex(&h, &x).unwrap();
        assert!(n.contains(&rvec(&[2, 3])).unwrap());
        assert!(!n.contains(&rvec(&[-1, 0])).unwrap());
    }

    #[test]
    fn polar_pairs_are_consistent() {
        // Polar of the nonneg quadrant is the nonpos quadrant.
        let c = GenCone::new(2, vec![ray(&[1, 0]), ray(&[0, 1])], vec![]);
        let h = polar_of_gencone(&c);
        assert!(h.contains(&rvec(&[-1, -2])));
        assert!(!h.contains(&rvec(&[1, 0])));
        let back = polar_of_hcone(&h).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn smooth_block_requires_strict_slater() {
        let vars = crate::expr::var_names(&["y1", "y2"]);
        let g = crate::expr::parse_polynomial("y1^2 - y2", &vars).unwrap();
        assert!(SmoothConvexBlock::new(2, vec![g.clone()], rvec(&[0, 1])).is_ok());
        assert!(SmoothConvexBlock::new(2, vec![g], rvec(&[0, 0])).is_err());
    }

    #[test]
    fn smooth_block_normal_cone_uses_active_gradients() {
        let vars = crate::expr::var_names(&["y1", "y2"]);
        let g = crate::expr::parse_polynomial("y1^2 - y2", &vars).unwrap();
        let blk = SmoothConvexBlock::new(2, vec![g], rvec(&[0, 1])).unwrap();
        // Interior point: {0}.
        assert!(blk.normal_cone(&rvec(&[0, 1])).unwrap().is_zero());
        // Vertex of the parabola: gradient (0, -1).
        let n = blk.normal_cone(&rvec(&[0, 0])).unwrap();
        assert!(n.contains(&rvec(&[0, -3])).unwrap());
        assert!(!n.contains(&rvec(&[0, 1])).unwrap());
        assert!(!n.contains(&rvec(&[1, -1])).unwrap());
    }

    #[test]
    fn union_membership_prefers_lowest_block() {
        let h1 = HPolyhedron::nonpos_orthant(1);
        let h2 = HPolyhedron::nonneg_orthant(1);
        let u = PolyUnion::from_polyhedra(vec![h1, h2]).unwrap();
        assert_eq!(u.containing_block(&rvec(&[0])), Some(0));
        assert_eq!(u.containing_block(&rvec(&[2])), Some(1));
        assert_eq!(u.containing_block(&rvec(&[-2])), Some(0));
    }

    #[test]
    fn one_dimensional_inclusion_is_exact() {
        let rplus = GenCone::new(1, vec![ray(&[1])], vec![]);
        let rminus = GenCone::new(1, vec![ray(&[-1])], vec![]);
        let line = GenCone::new(1, vec![], vec![ray(&[1])]);
        let u = ConeUnion::new(1, vec![line]);
        let v = ConeUnion::new(1, vec![rplus.clone(), rminus]);
        // R ⊆ R+ ∪ R- even though R fits in no single branch.
        assert_eq!(
            cone_union_inclusion(&u, &v, 4, 7).unwrap(),
            InclusionResult::VerifiedExact
        );
        let w = ConeUnion::new(1, vec![rplus]);
        match cone_union_inclusion(&u, &w, 4, 7).unwrap() {
            InclusionResult::Counterexample(cex) => assert_eq!(cex, vec![rat_int(-1)]),
            other => panic!("expected counterexample, got {other:?}"),
        }
    }

    #[test]
    fn safe_radius_respects_nearby_rows() {
        let h = HPolyhedron::new(
            1,
            vec![
                HRow::le(vec![rat_int(1)], rat_int(0)),
                HRow::le(vec![rat_int(-1)], rat(1, 10)),
            ],
        )
        .unwrap();
        let u = PolyUnion::single(h);
        let rho = safe_radius(&u, &rvec(&[0]));
        assert_eq!(rho, rat(1, 20));
    }
}
