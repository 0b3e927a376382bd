//! The feasibility map `Γ(x) = G(x) - K` and its variational objects.
//!
//! A [`GeometricConstraint`] bundles a polynomial mapping `G : R^n -> R^l`,
//! a constraint union `K ⊆ R^l`, an optional abstract set `C ⊆ R^n`, and an
//! optional affine domain restriction.  On top of it this module provides
//!
//! * membership tests for the coderivative `D*Γ(x, ỹ)` (and the coupled map
//!   `Φ(x) = Γ(x) × (x - C)`),
//! * membership tests for the multiplier maps
//!   `M(x, (ỹ, z)) = D*Φ(x, (ỹ, z))(λ)` and
//!   `M̃(x, ỹ) = ∪_λ D*Γ(x, ỹ)(λ) + N_C(x)`,
//! * the residual distance `ρ(x, y) = dist(G(x) - y, K)`.
//!
//! Multiplier-map membership is always decided by a feasibility LP in the
//! lifted multiplier variables; the image cones themselves are never
//! materialised as unions (they may have exponentially many branches).

use crate::expr::{rat_to_f64, PolyMap, Rational};
use crate::linalg::{dot, is_zero_vec, vsub};
use crate::polyhedral::{
    dist_sq_exact, gencone_to_hcone, limiting_normal_cone, lp_feasible, project, Block, ConeUnion,
    GenCone, HPolyhedron, HRow, LpOutcome, PolyError, PolyUnion,
};
use num_traits::Zero;
use thiserror::Error;

/// Errors from constraint-map constructions and queries.
#[derive(Debug, Error)]
pub enum MapsError {
    /// A lower-level polyhedral computation failed.
    #[error(transparent)]
    Poly(#[from] PolyError),
    /// A query point violates a graph-membership precondition.
    #[error("point not in graph: {0}")]
    NotInGraph(String),
    /// Operand dimensions are inconsistent.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// The requested operation needs structure this instance lacks.
    #[error("unsupported structure: {0}")]
    Unsupported(String),
}

/// The constraint system `0 ∈ G(x) - K`, `x ∈ C`, optionally restricted to an
/// affine/polyhedral domain `R ⊆ R^n` (outside `R` the map `Γ` is empty).
///
/// A domain restriction is only accepted together with affine `G` and
/// polyhedral `K`, so that the graph of `Γ` stays polyhedral and limiting
/// normal cones of the graph can be computed exactly.
#[derive(Debug, Clone)]
pub struct GeometricConstraint {
    g: PolyMap,
    k: PolyUnion,
    c: Option<PolyUnion>,
    domain: Option<HPolyhedron>,
}

impl GeometricConstraint {
    /// Bundle `G`, `K` and (optionally) `C`; checks dimensions.
    pub fn new(g: PolyMap, k: PolyUnion, c: Option<PolyUnion>) -> Result<Self, MapsError> {
        if k.dim() != g.codomain_dim() {
            return Err(MapsError::Dimension(format!(
                "K lives in R^{} but G maps into R^{}",
                k.dim(),
                g.codomain_dim()
            )));
        }
        if let Some(cset) = &c {
            if cset.dim() != g.domain_dim() {
                return Err(MapsError::Dimension(format!(
                    "C lives in R^{} but G is defined on R^{}",
                    cset.dim(),
                    g.domain_dim()
                )));
            }
        }
        Ok(GeometricConstraint { g, k, c, domain: None })
    }

    /// Restrict `Γ` to a polyhedral domain (empty values outside).
    ///
    /// Requires affine `G` and fully polyhedral `K` so that `gph Γ` is a
    /// finite union of polyhedra.
    pub fn with_domain(mut self, domain: HPolyhedron) -> Result<Self, MapsError> {
        if domain.dim() != self.n() {
            return Err(MapsError::Dimension(format!(
                "domain lives in R^{} but G is defined on R^{}",
                domain.dim(),
                self.n()
            )));
        }
        if !self.is_affine() {
            return Err(MapsError::Unsupported(
                "domain restrictions require an affine mapping G".to_string(),
            ));
        }
        if !self.k.is_polyhedral() {
            return Err(MapsError::Unsupported(
                "domain restrictions require a polyhedral constraint set K".to_string(),
            ));
        }
        self.domain = Some(domain);
        Ok(self)
    }

    /// Dimension of the decision variable `x`.
    pub fn n(&self) -> usize {
        self.g.domain_dim()
    }

    /// Dimension of the constraint value `G(x)`.
    pub fn l(&self) -> usize {
        self.g.codomain_dim()
    }

    /// The mapping `G`.
    pub fn g(&self) -> &PolyMap {
        &self.g
    }

    /// The constraint union `K`.
    pub fn k(&self) -> &PolyUnion {
        &self.k
    }

    /// The abstract set `C`, if one was supplied (`None` means all of `R^n`).
    pub fn c(&self) -> Option<&PolyUnion> {
        self.c.as_ref()
    }

    /// The domain restriction, if any.
    pub fn domain(&self) -> Option<&HPolyhedron> {
        self.domain.as_ref()
    }

    /// True when every component of `G` has degree at most one.
    pub fn is_affine(&self) -> bool {
        self.g.components().iter().all(|p| p.total_degree() <= 1)
    }

    /// True when `x` lies in the domain restriction (vacuously true without one).
    pub fn in_domain(&self, x: &[Rational]) -> bool {
        self.domain.as_ref().map_or(true, |d| d.contains(x))
    }

    /// True when `x` lies in `C` (vacuously true when `C = R^n`).
    pub fn in_c(&self, x: &[Rational]) -> bool {
        self.c.as_ref().map_or(true, |c| c.contains(x))
    }

    /// True when `ỹ ∈ Γ(x)`, i.e. `x` is in the domain and `G(x) - ỹ ∈ K`.
    pub fn in_graph(&self, x: &[Rational], ytil: &[Rational]) -> Result<bool, MapsError> {
        if x.len() != self.n() || ytil.len() != self.l() {
            return Err(MapsError::Dimension(
                "graph query point has wrong dimensions".to_string(),
            ));
        }
        Ok(self.in_domain(x) && self.k.contains(&vsub(&self.g.eval(x), ytil)))
    }

    /// True when `x` is feasible: `0 ∈ Γ(x)` and `x ∈ C`.
    pub fn is_feasible(&self, x: &[Rational]) -> Result<bool, MapsError> {
        let zero = vec![Rational::zero(); self.l()];
        Ok(self.in_graph(x, &zero)? && self.in_c(x))
    }

    /// The graph `gph Γ = {(x, y) : x ∈ R, G(x) - y ∈ K}` as a union of
    /// polyhedra in `R^{n+l}`.  Requires affine `G` and polyhedral `K`.
    pub fn graph_union(&self) -> Result<PolyUnion, MapsError> {
        if !self.is_affine() {
            return Err(MapsError::Unsupported(
                "the graph of Γ is polyhedral only for affine G".to_string(),
            ));
        }
        if !self.k.is_polyhedral() {
            return Err(MapsError::Unsupported(
                "the graph of Γ is polyhedral only for polyhedral K".to_string(),
            ));
        }
        let n = self.n();
        let l = self.l();
        let origin = vec![Rational::zero(); n];
        let jac = self.g.jacobian_at(&origin); // constant for affine G
        let g0 = self.g.eval(&origin);
        let mut blocks = Vec::new();
        for block in self.k.blocks() {
            let Block::Poly(h) = block else { unreachable!("checked polyhedral above") };
            let mut rows = Vec::new();
            if let Some(dom) = &self.domain {
                for r in dom.rows() {
                    let mut a = r.a.clone();
                    a.extend(std::iter::repeat(Rational::zero()).take(l));
                    rows.push(HRow { a, b: r.b.clone(), eq: r.eq });
                }
            }
            // Row c·y' ≤ d of K becomes c·(G(x) - y) ≤ d, i.e.
            // (cᵀJ)·x - c·y ≤ d - c·g0.
            for r in h.rows() {
                let mut a = Vec::with_capacity(n + l);
                for i in 0..n {
                    a.push((0..l).map(|j| &r.a[j] * &jac[j][i]).sum());
                }
                for cj in &r.a {
                    a.push(-cj.clone());
                }
                let b = &r.b - dot(&r.a, &g0);
                rows.push(HRow { a, b, eq: r.eq });
            }
            blocks.push(HPolyhedron::new(n + l, rows)?);
        }
        Ok(PolyUnion::from_polyhedra(blocks)?)
    }
}

/// Limiting normal cone of a constraint union at a member point, as a union
/// of polyhedral branches.
///
/// Polyhedral unions use exact activity-pattern enumeration.  A union that is
/// a single smooth convex block uses the gradient cone of the active
/// inequalities (limiting and regular cones agree for convex sets).  Unions
/// mixing smooth and other blocks are not supported.
pub fn normal_cone_union(set: &PolyUnion, y: &[Rational]) -> Result<ConeUnion, MapsError> {
    if set.is_polyhedral() {
        return Ok(limiting_normal_cone(set, y)?);
    }
    if let [Block::Smooth(s)] = set.blocks() {
        let cone = s.normal_cone(y)?;
        return Ok(ConeUnion::new(set.dim(), vec![cone]));
    }
    Err(MapsError::Unsupported(
        "normal cones of unions mixing smooth and polyhedral blocks".to_string(),
    ))
}

/// Normal-cone branches of `C` at `p`, treating `None` as the whole space
/// (whose normal cone is `{0}` everywhere).
fn c_normal_branches(
    c: Option<&PolyUnion>,
    p: &[Rational],
    n: usize,
) -> Result<Vec<GenCone>, MapsError> {
    match c {
        None => Ok(vec![GenCone::zero(n)]),
        Some(cset) => Ok(normal_cone_union(cset, p)?.branches().to_vec()),
    }
}

/// Decide `λ = (λ̃, z*) ∈ D*Φ(x, (ỹ, z))(...)` admissibility for the coupled
/// map `Φ(x) = Γ(x) × (x - C)`: true iff `λ̃` is an admissible multiplier for
/// `D*Γ(x, ỹ)` and `z* ∈ N_C(x - z)`.
///
/// Without a domain restriction, admissibility of `λ̃` means
/// `λ̃ ∈ N_K(G(x) - ỹ)` and the coderivative value is the singleton
/// `{G'(x)ᵀ λ̃ + z*}` (see [`coderivative_value`]).  With a domain
/// restriction it means `D*Γ(x, ỹ)(λ̃) ≠ ∅`, decided through the limiting
/// normal cone of the polyhedral graph.
///
/// Preconditions (errors otherwise): `ỹ ∈ Γ(x)` and `x - z ∈ C`.
pub fn coderivative_contains(
    gc: &GeometricConstraint,
    x: &[Rational],
    ytil: &[Rational],
    z: &[Rational],
    lambda: &[Rational],
    zstar: &[Rational],
) -> Result<bool, MapsError> {
    if lambda.len() != gc.l() || zstar.len() != gc.n() || z.len() != gc.n() {
        return Err(MapsError::Dimension(
            "coderivative query has wrong dimensions".to_string(),
        ));
    }
    if !gc.in_graph(x, ytil)? {
        return Err(MapsError::NotInGraph(format!(
            "ỹ ∉ Γ(x) at x = {x:?}, ỹ = {ytil:?}"
        )));
    }
    let xz = vsub(x, z);
    if !gc.c().map_or(true, |c| c.contains(&xz)) {
        return Err(MapsError::NotInGraph(format!("x - z ∉ C at x - z = {xz:?}")));
    }

    // C-part: z* ∈ N_C(x - z).
    let c_ok = match gc.c() {
        None => is_zero_vec(zstar),
        Some(cset) => normal_cone_union(cset, &xz)?.contains(zstar)?,
    };
    if !c_ok {
        return Ok(false);
    }

    // Γ-part.
    if gc.domain().is_none() {
        let residual = vsub(&gc.g().eval(x), ytil);
        return Ok(normal_cone_union(gc.k(), &residual)?.contains(lambda)?);
    }
    // Domain case: λ̃ is admissible iff some x* satisfies
    // (x*, -λ̃) ∈ N_{gph Γ}(x, ỹ).
    let graph = gc.graph_union()?;
    let gp: Vec<Rational> = x.iter().chain(ytil.iter()).cloned().collect();
    let branches = limiting_normal_cone(&graph, &gp)?;
    let n = gc.n();
    for branch in branches.branches() {
        let h = gencone_to_hcone(branch)?;
        // Feasibility in the free variable x*: each row a·(x*, -λ̃) ≤ 0
        // becomes a_x·x* ≤ a_w·λ̃.
        let rows = h
            .rows()
            .iter()
            .map(|r| HRow { a: r.a[..n].to_vec(), b: dot(&r.a[n..], lambda) + &r.b, eq: r.eq })
            .collect();
        let sys = HPolyhedron::new_unchecked(n, rows);
        if !matches!(lp_feasible(&sys, None)?, LpOutcome::Infeasible) {
            return Ok(true);
        }
    }
    Ok(false)
}

/// The coderivative value `G'(x)ᵀ λ̃ + z*` for an admissible multiplier
/// (domain-free instances only; with a domain the value is generally a set).
pub fn coderivative_value(
    gc: &GeometricConstraint,
    x: &[Rational],
    lambda: &[Rational],
    zstar: &[Rational],
) -> Result<Vec<Rational>, MapsError> {
    if gc.domain().is_some() {
        return Err(MapsError::Unsupported(
            "coderivative values are set-valued under a domain restriction".to_string(),
        ));
    }
    let mut v = gc.g().jt_apply(x, lambda);
    for (vi, zi) in v.iter_mut().zip(zstar) {
        *vi += zi;
    }
    Ok(v)
}

/// Outcome of a multiplier-map membership query.
#[derive(Debug, Clone, PartialEq)]
pub enum MMembership {
    /// `x*` is in the map; a witness decomposition is returned.
    ///
    /// Without a domain restriction the witness satisfies
    /// `x* = G'(x)ᵀ λ̃ + ν` with `λ̃` in branch `k_branch` of `N_K(G(x)-ỹ)`
    /// and `ν` in branch `c_branch` of `N_C(·)`.  With a domain restriction,
    /// `k_branch` indexes a branch of `N_{gph Γ}(x, ỹ)` instead and the
    /// witness satisfies `(x* - ν, -λ̃)` in that branch.
    Member {
        lambda: Vec<Rational>,
        nu: Vec<Rational>,
        k_branch: usize,
        c_branch: usize,
    },
    /// `x*` is not in the map.
    NotMember,
}

impl MMembership {
    /// Convenience predicate.
    pub fn is_member(&self) -> bool {
        matches!(self, MMembership::Member { .. })
    }
}

/// Decide `x* ∈ M̃(x, ỹ) = ∪_λ̃ D*Γ(x, ỹ)(λ̃) + N_C(x)`.
///
/// Preconditions (errors otherwise): `ỹ ∈ Γ(x)` and `x ∈ C`.
pub fn m_map_membership(
    gc: &GeometricConstraint,
    x: &[Rational],
    ytil: &[Rational],
    xstar: &[Rational],
) -> Result<MMembership, MapsError> {
    if !gc.in_c(x) {
        return Err(MapsError::NotInGraph(format!("x ∉ C at x = {x:?}")));
    }
    m_membership_core(gc, x, ytil, x, xstar)
}

/// Decide `x* ∈ M(x, (ỹ, z))`, the coupled variant whose `C`-part normal
/// cone is taken at `x - z`.
///
/// Preconditions (errors otherwise): `ỹ ∈ Γ(x)` and `x - z ∈ C`.
pub fn m_map_membership_coupled(
    gc: &GeometricConstraint,
    x: &[Rational],
    ytil: &[Rational],
    z: &[Rational],
    xstar: &[Rational],
) -> Result<MMembership, MapsError> {
    if z.len() != gc.n() {
        return Err(MapsError::Dimension("z has wrong dimension".to_string()));
    }
    let xz = vsub(x, z);
    if !gc.c().map_or(true, |c| c.contains(&xz)) {
        return Err(MapsError::NotInGraph(format!("x - z ∉ C at x - z = {xz:?}")));
    }
    m_membership_core(gc, x, ytil, &xz, xstar)
}

/// Shared LP search behind both multiplier-map variants.  `c_point` is where
/// the `C`-part normal cone is evaluated (`x` decoupled, `x - z` coupled).
fn m_membership_core(
    gc: &GeometricConstraint,
    x: &[Rational],
    ytil: &[Rational],
    c_point: &[Rational],
    xstar: &[Rational],
) -> Result<MMembership, MapsError> {
    let n = gc.n();
    let l = gc.l();
    if xstar.len() != n {
        return Err(MapsError::Dimension("x* has wrong dimension".to_string()));
    }
    if !gc.in_graph(x, ytil)? {
        return Err(MapsError::NotInGraph(format!(
            "ỹ ∉ Γ(x) at x = {x:?}, ỹ = {ytil:?}"
        )));
    }
    let c_branches = c_normal_branches(gc.c(), c_point, n)?;
    let c_hforms: Vec<HPolyhedron> =
        c_branches.iter().map(gencone_to_hcone).collect::<Result<_, _>>()?;

    if gc.domain().is_none() {
        let residual = vsub(&gc.g().eval(x), ytil);
        let k_normals = normal_cone_union(gc.k(), &residual)?;
        let jac = gc.g().jacobian_at(x); // l rows of length n
        for (ki, kb) in k_normals.branches().iter().enumerate() {
            let hk = gencone_to_hcone(kb)?;
            for (ci, hc) in c_hforms.iter().enumerate() {
                // Variables v = (λ̃, ν) ∈ R^{l+n}.
                let mut rows = Vec::new();
                for i in 0..n {
                    // Σ_j J[j][i] λ̃_j + ν_i = x*_i
                    let mut a = vec![Rational::zero(); l + n];
                    for j in 0..l {
                        a[j] = jac[j][i].clone();
                    }
                    a[l + i] = Rational::from_integer(1.into());
                    rows.push(HRow::eqn(a, xstar[i].clone()));
                }
                for r in hk.rows() {
                    let mut a = r.a.clone();
                    a.extend(std::iter::repeat(Rational::zero()).take(n));
                    rows.push(HRow { a, b: r.b.clone(), eq: r.eq });
                }
                for r in hc.rows() {
                    let mut a = vec![Rational::zero(); l];
                    a.extend_from_slice(&r.a);
                    rows.push(HRow { a, b: r.b.clone(), eq: r.eq });
                }
                let sys = HPolyhedron::new_unchecked(l + n, rows);
                if let LpOutcome::Optimal { point, .. } = lp_feasible(&sys, None)? {
                    let lambda = point[..l].to_vec();
                    let nu = point[l..].to_vec();
                    debug_assert!(kb.contains(&lambda)? && c_branches[ci].contains(&nu)?);
                    return Ok(MMembership::Member { lambda, nu, k_branch: ki, c_branch: ci });
                }
            }
        }
        return Ok(MMembership::NotMember);
    }

    // Domain case: x* - ν must lie in the x*-projection of a graph normal
    // branch, with the paired w-part equal to -λ̃.
    let graph = gc.graph_union()?;
    let gp: Vec<Rational> = x.iter().chain(ytil.iter()).cloned().collect();
    let branches = limiting_normal_cone(&graph, &gp)?;
    for (ki, gb) in branches.branches().iter().enumerate() {
        let hg = gencone_to_hcone(gb)?;
        for (ci, hc) in c_hforms.iter().enumerate() {
            // Variables v = (ν, w) ∈ R^{n+l}; the graph rows constrain the
            // point (x* - ν, w):  a_x·(x* - ν) + a_w·w ≤ b  becomes
            // (-a_x)·ν + a_w·w ≤ b - a_x·x*.
            let mut rows = Vec::new();
            for r in hg.rows() {
                let mut a: Vec<Rational> = r.a[..n].iter().map(|v| -v.clone()).collect();
                a.extend_from_slice(&r.a[n..]);
                rows.push(HRow { a, b: &r.b - dot(&r.a[..n], xstar), eq: r.eq });
            }
            for r in hc.rows() {
                let mut a = r.a.clone();
                a.extend(std::iter::repeat(Rational::zero()).take(l));
                rows.push(HRow { a, b: r.b.clone(), eq: r.eq });
            }
            let sys = HPolyhedron::new_unchecked(n + l, rows);
            if let LpOutcome::Optimal { point, .. } = lp_feasible(&sys, None)? {
                let nu = point[..n].to_vec();
                let lambda: Vec<Rational> = point[n..].iter().map(|w| -w.clone()).collect();
                return Ok(MMembership::Member { lambda, nu, k_branch: ki, c_branch: ci });
            }
        }
    }
    Ok(MMembership::NotMember)
}

/// The residual distance `ρ(x, y) = dist(G(x) - y, K)`, or `+∞` when a
/// domain restriction excludes `x` (then `Γ(x) = ∅`).
pub fn generalized_distance(
    gc: &GeometricConstraint,
    x: &[Rational],
    y: &[Rational],
) -> Result<f64, MapsError> {
    if x.len() != gc.n() || y.len() != gc.l() {
        return Err(MapsError::Dimension(
            "distance query has wrong dimensions".to_string(),
        ));
    }
    if !gc.in_domain(x) {
        return Ok(f64::INFINITY);
    }
    let diff = vsub(&gc.g().eval(x), y);
    Ok(project(gc.k(), &diff)?.dist)
}

/// Exact squared residual distance for fully polyhedral `K`.
///
/// Returns `Ok(None)` when `K` has smooth blocks or when a domain
/// restriction excludes `x` (the distance is `+∞`).
pub fn generalized_distance_sq_exact(
    gc: &GeometricConstraint,
    x: &[Rational],
    y: &[Rational],
) -> Result<Option<Rational>, MapsError> {
    if x.len() != gc.n() || y.len() != gc.l() {
        return Err(MapsError::Dimension(
            "distance query has wrong dimensions".to_string(),
        ));
    }
    if !gc.in_domain(x) {
        return Ok(None);
    }
    let diff = vsub(&gc.g().eval(x), y);
    Ok(dist_sq_exact(gc.k(), &diff)?)
}

/// Float wrapper for reporting: `√(exact squared distance)` when available,
/// otherwise the numeric projection distance.
pub fn generalized_distance_f64(
    gc: &GeometricConstraint,
    x: &[Rational],
    y: &[Rational],
) -> Result<f64, MapsError> {
    if let Some(sq) = generalized_distance_sq_exact(gc, x, y)? {
        return Ok(rat_to_f64(&sq).sqrt());
    }
    generalized_distance(gc, x, y)
}
