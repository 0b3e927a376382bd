//! Stationarity checkers and constraint-qualification tests.
//!
//! A feasible point `x̄` of `0 ∈ G(x) - K, x ∈ C` is *M-stationary* when
//! `0 ∈ ∂f(x̄) + M̃(x̄, 0)` with the multiplier set
//! `M̃(x̄, 0) = G'(x̄)ᵀ N_K(G(x̄)) + N_C(x̄)`, and *abnormal-stationary*
//! (the degenerate Fritz-John alternative) when a nonzero multiplier pair
//! maps to zero. Both conditions are decided exactly: the data is
//! piecewise-polyhedral, so each reduces to finitely many LP/double
//! description problems over rationals.
//!
//! The submodules extend this to asymptotic notions: [`regularity`] decides
//! whether limits of nearby multipliers stay inside `M̃(x̄, 0)`,
//! [`amstat`] certifies or refutes asymptotic stationarity itself,
//! [`trace`] classifies floating-point multiplier traces from the penalty
//! solver, and [`gacq`] covers Abadie/Guignard-type cone comparisons plus a
//! metric subregularity probe.

pub mod amstat;
pub mod gacq;
pub mod regularity;
pub mod trace;

use crate::expr::Rational;
use crate::linalg::{is_zero_vec, norm1, vadd, vscale};
use crate::maps::{m_map_membership, normal_cone_union, MMembership, MapsError};
use crate::polyhedral::{
    gencone_to_hcone, hcone_generators, lp_feasible, GenCone, HPolyhedron, HRow, LpOutcome,
    PolyError,
};
use crate::problem::{in_convex_hull, ProblemError, ProblemInstance};
use num_traits::{One, Zero};
use thiserror::Error;

/// Errors shared by the stationarity checkers.
#[derive(Debug, Error)]
pub enum StatError {
    /// The reference point violates the constraints.
    #[error("infeasible reference point: {0}")]
    Infeasible(String),
    /// Structure outside the supported fragment.
    #[error("unsupported structure: {0}")]
    Unsupported(String),
    /// Required data was not provided.
    #[error("missing data: {0}")]
    MissingData(String),
    /// Empty input where records are required.
    #[error("empty input: {0}")]
    Empty(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Maps(#[from] MapsError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Three-valued outcome. `Proved` and `Refuted` are always accompanied by
/// machine-checkable evidence in the surrounding result struct; `Unknown`
/// carries a human-readable resolution report there instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Proved,
    Refuted,
    Unknown,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Proved => write!(f, "Proved"),
            Verdict::Refuted => write!(f, "Refuted"),
            Verdict::Unknown => write!(f, "Unknown"),
        }
    }
}

/// Exact M-stationarity certificate: a subgradient choice and multipliers
/// with `0 = x*_f + G'(x̄)ᵀλ̃ + ν` (or the graph-branch analogue when a
/// domain restriction is present).
#[derive(Debug, Clone)]
pub struct MCert {
    /// Chosen subgradient `x*_f ∈ ∂f(x̄)`.
    pub subgradient: Vec<Rational>,
    /// `K`-part multiplier `λ̃`.
    pub lambda: Vec<Rational>,
    /// `C`-part multiplier `ν`.
    pub nu: Vec<Rational>,
    /// Branch of `N_K(G(x̄))` (or of the graph normal cone) housing `λ̃`.
    pub k_branch: usize,
    /// Branch of `N_C(x̄)` housing `ν`.
    pub c_branch: usize,
}

impl MCert {
    /// Re-verify the certificate from scratch against the instance.
    pub fn verify(&self, p: &ProblemInstance, xbar: &[Rational]) -> Result<bool, StatError> {
        let gc = &p.constraint;
        // Subgradient really belongs to ∂f(x̄).
        let subs = p.objective.subgradients(xbar)?;
        let sub_ok = if p.objective.convexify() {
            in_convex_hull(&subs, &self.subgradient)?
        } else {
            subs.contains(&self.subgradient)
        };
        if !sub_ok {
            return Ok(false);
        }
        // ν belongs to N_C(x̄).
        match gc.c() {
            Some(c) => {
                if !normal_cone_union(c, xbar)?.contains(&self.nu)? {
                    return Ok(false);
                }
            }
            None => {
                if !is_zero_vec(&self.nu) {
                    return Ok(false);
                }
            }
        }
        if gc.domain().is_some() {
            // Graph formulation: (-x*_f - ν, -λ̃) must be a limiting normal
            // of gph Γ at (x̄, 0).
            let graph = gc.graph_union()?;
            let mut base = xbar.to_vec();
            base.extend(vec![Rational::zero(); gc.l()]);
            let ncone = crate::polyhedral::limiting_normal_cone(&graph, &base)?;
            let mut v: Vec<Rational> = vadd(&self.subgradient, &self.nu)
                .iter()
                .map(|t| -t)
                .collect();
            v.extend(self.lambda.iter().map(|t| -t));
            Ok(ncone.contains(&v)?)
        } else {
            // λ̃ belongs to N_K(G(x̄)) and the first-order identity holds.
            let gx = gc.g().eval(xbar);
            if !normal_cone_union(gc.k(), &gx)?.contains(&self.lambda)? {
                return Ok(false);
            }
            let img = gc.g().jt_apply(xbar, &self.lambda);
            let total = vadd(&vadd(&self.subgradient, &img), &self.nu);
            Ok(is_zero_vec(&total))
        }
    }
}

/// Result of [`m_stationarity_check`].
#[derive(Debug, Clone)]
pub struct MStationarity {
    pub verdict: Verdict,
    pub certificate: Option<MCert>,
    /// Human-readable explanation (how the decision was reached).
    pub detail: String,
}

/// Decide M-stationarity of `x̄` exactly.
///
/// `Proved` iff some subgradient `x*_f ∈ ∂f(x̄)` satisfies
/// `-x*_f ∈ M̃(x̄, 0)`; because the subdifferential is a finite union of
/// polytopes and the multiplier set has finitely many polyhedral branches,
/// the search is exhaustive and the answer is never `Unknown`.
pub fn m_stationarity_check(
    p: &ProblemInstance,
    xbar: &[Rational],
) -> Result<MStationarity, StatError> {
    let gc = &p.constraint;
    if !gc.is_feasible(xbar)? {
        return Err(StatError::Infeasible(format!("{xbar:?}")));
    }
    let l = gc.l();
    let zeros_l = vec![Rational::zero(); l];
    let subs = p.objective.subgradients(xbar)?;
    // Each extreme subgradient on its own.
    for s in &subs {
        let target: Vec<Rational> = s.iter().map(|t| -t).collect();
        if let MMembership::Member { lambda, nu, k_branch, c_branch } =
            m_map_membership(gc, xbar, &zeros_l, &target)?
        {
            return Ok(MStationarity {
                verdict: Verdict::Proved,
                certificate: Some(MCert {
                    subgradient: s.clone(),
                    lambda,
                    nu,
                    k_branch,
                    c_branch,
                }),
                detail: "an extreme subgradient admits exact multipliers".to_string(),
            });
        }
    }
    // Convexified subdifferential: a hull element may work even when no
    // vertex does. One feasibility LP per branch pair decides it.
    if p.objective.convexify() && subs.len() > 1 {
        if gc.domain().is_some() {
            return Err(StatError::Unsupported(
                "convexified subdifferential together with a domain restriction".to_string(),
            ));
        }
        if let Some(cert) = hull_lp_search(p, gc, xbar, &subs)? {
            return Ok(MStationarity {
                verdict: Verdict::Proved,
                certificate: Some(cert),
                detail: "a convex combination of subgradients admits exact multipliers"
                    .to_string(),
            });
        }
    }
    Ok(MStationarity {
        verdict: Verdict::Refuted,
        certificate: None,
        detail: format!(
            "no subgradient (of {}) has its negative in the multiplier set; \
             the branch-by-branch search is exhaustive",
            subs.len()
        ),
    })
}

/// LP search for `w ≥ 0, Σw = 1, Σ w_i s_i + G'(x̄)ᵀλ̃ + ν = 0` over all
/// branch pairs of the two normal cones.
fn hull_lp_search(
    p: &ProblemInstance,
    gc: &crate::maps::GeometricConstraint,
    xbar: &[Rational],
    subs: &[Vec<Rational>],
) -> Result<Option<MCert>, StatError> {
    let n = gc.n();
    let l = gc.l();
    let m = subs.len();
    let gx = gc.g().eval(xbar);
    let jac = gc.g().jacobian_at(xbar); // l rows, n cols
    let k_union = normal_cone_union(gc.k(), &gx)?;
    let c_branches: Vec<GenCone> = match gc.c() {
        Some(c) => normal_cone_union(c, xbar)?.branches().to_vec(),
        None => vec![GenCone::zero(n)],
    };
    let dim = m + l + n;
    let zero = Rational::zero();
    for (ki, pk) in k_union.branches().iter().enumerate() {
        let hp = gencone_to_hcone(pk)?;
        for (ci, qc) in c_branches.iter().enumerate() {
            let hq = gencone_to_hcone(qc)?;
            let mut rows = Vec::new();
            for i in 0..m {
                let mut a = vec![zero.clone(); dim];
                a[i] = -Rational::one();
                rows.push(HRow::le(a, zero.clone()));
            }
            let mut ones = vec![zero.clone(); dim];
            for c in ones.iter_mut().take(m) {
                *c = Rational::one();
            }
            rows.push(HRow::eqn(ones, Rational::one()));
            for d in 0..n {
                let mut a = vec![zero.clone(); dim];
                for (i, s) in subs.iter().enumerate() {
                    a[i] = s[d].clone();
                }
                for (j, row) in jac.iter().enumerate() {
                    a[m + j] = row[d].clone();
                }
                a[m + l + d] = Rational::one();
                rows.push(HRow::eqn(a, zero.clone()));
            }
            for r in hp.rows() {
                let mut a = vec![zero.clone(); dim];
                a[m..m + l].clone_from_slice(&r.a);
                rows.push(HRow { a, b: r.b.clone(), eq: r.eq });
            }
            for r in hq.rows() {
                let mut a = vec![zero.clone(); dim];
                a[m + l..].clone_from_slice(&r.a);
                rows.push(HRow { a, b: r.b.clone(), eq: r.eq });
            }
            let sys = HPolyhedron::new_unchecked(dim, rows);
            if let LpOutcome::Optimal { point, .. } = lp_feasible(&sys, None)? {
                let w = &point[..m];
                let mut sub = vec![zero.clone(); n];
                for (wi, s) in w.iter().zip(subs) {
                    sub = vadd(&sub, &vscale(wi, s));
                }
                let cert = MCert {
                    subgradient: sub,
                    lambda: point[m..m + l].to_vec(),
                    nu: point[m + l..].to_vec(),
                    k_branch: ki,
                    c_branch: ci,
                };
                if cert.verify(p, xbar)? {
                    return Ok(Some(cert));
                }
            }
        }
    }
    Ok(None)
}

/// Abnormal (degenerate) multiplier certificate: `(λ̃, ν) ≠ 0` with
/// `G'(x̄)ᵀλ̃ + ν = 0`, normalized to `‖λ̃‖₁ + ‖ν‖₁ = 1`.
#[derive(Debug, Clone)]
pub struct FjmCert {
    pub lambda: Vec<Rational>,
    pub nu: Vec<Rational>,
}

impl FjmCert {
    /// Re-verify the certificate from scratch.
    pub fn verify(&self, p: &ProblemInstance, xbar: &[Rational]) -> Result<bool, StatError> {
        let gc = &p.constraint;
        if is_zero_vec(&self.lambda) && is_zero_vec(&self.nu) {
            return Ok(false);
        }
        let mut both = self.lambda.clone();
        both.extend(self.nu.iter().cloned());
        if norm1(&both) != Rational::one() {
            return Ok(false);
        }
        match gc.c() {
            Some(c) => {
                if !normal_cone_union(c, xbar)?.contains(&self.nu)? {
                    return Ok(false);
                }
            }
            None => {
                if !is_zero_vec(&self.nu) {
                    return Ok(false);
                }
            }
        }
        if gc.domain().is_some() {
            let graph = gc.graph_union()?;
            let mut base = xbar.to_vec();
            base.extend(vec![Rational::zero(); gc.l()]);
            let ncone = crate::polyhedral::limiting_normal_cone(&graph, &base)?;
            let mut v: Vec<Rational> = self.nu.iter().map(|t| -t).collect();
            v.extend(self.lambda.iter().map(|t| -t));
            Ok(ncone.contains(&v)?)
        } else {
            let gx = gc.g().eval(xbar);
            if !normal_cone_union(gc.k(), &gx)?.contains(&self.lambda)? {
                return Ok(false);
            }
            let img = gc.g().jt_apply(xbar, &self.lambda);
            Ok(is_zero_vec(&vadd(&img, &self.nu)))
        }
    }
}

/// Result of [`fjm_abnormal_check`].
#[derive(Debug, Clone)]
pub struct FjmAbnormal {
    pub verdict: Verdict,
    pub certificate: Option<FjmCert>,
    pub detail: String,
}

/// Does a nonzero abnormal multiplier exist at `x̄`? Decided exactly per
/// branch pair by double description of the kernel cone
/// `{(λ̃, ν) ∈ P × Q : G'(x̄)ᵀλ̃ + ν = 0}`.
pub fn fjm_abnormal_check(
    p: &ProblemInstance,
    xbar: &[Rational],
) -> Result<FjmAbnormal, StatError> {
    let gc = &p.constraint;
    if !gc.is_feasible(xbar)? {
        return Err(StatError::Infeasible(format!("{xbar:?}")));
    }
    let n = gc.n();
    let l = gc.l();
    let zero = Rational::zero();
    let c_branches: Vec<HPolyhedron> = match gc.c() {
        Some(c) => normal_cone_union(c, xbar)?
            .branches()
            .iter()
            .map(gencone_to_hcone)
            .collect::<Result<_, _>>()?,
        None => vec![HPolyhedron::point(&vec![zero.clone(); n])],
    };
    // Variables (λ̃, ν) ∈ R^{l+n}; rows per branch pair.
    let dim = l + n;
    let mut systems: Vec<HPolyhedron> = Vec::new();
    if gc.domain().is_some() {
        let graph = gc.graph_union()?;
        let mut base = xbar.to_vec();
        base.extend(vec![zero.clone(); l]);
        let gn = crate::polyhedral::limiting_normal_cone(&graph, &base)?;
        for b in gn.branches() {
            let hb = gencone_to_hcone(b)?;
            for hq in &c_branches {
                let mut rows = Vec::new();
                // (-ν, -λ̃) ∈ branch: substitute into the branch H-form rows
                // a_x·z_x + a_y·z_y ≤ 0 with z_x = -ν, z_y = -λ̃.
                for r in hb.rows() {
                    let mut a = vec![zero.clone(); dim];
                    for (j, c) in r.a[n..].iter().enumerate() {
                        a[j] = -c;
                    }
                    for (i, c) in r.a[..n].iter().enumerate() {
                        a[l + i] = -c;
                    }
                    rows.push(HRow { a, b: r.b.clone(), eq: r.eq });
                }
                for r in hq.rows() {
                    let mut a = vec![zero.clone(); dim];
                    a[l..].clone_from_slice(&r.a);
                    rows.push(HRow { a, b: r.b.clone(), eq: r.eq });
                }
                systems.push(HPolyhedron::new_unchecked(dim, rows));
            }
        }
    } else {
        let gx = gc.g().eval(xbar);
        let jac = gc.g().jacobian_at(xbar);
        let k_union = normal_cone_union(gc.k(), &gx)?;
        for pk in k_union.branches() {
            let hp = gencone_to_hcone(pk)?;
            for hq in &c_branches {
                let mut rows = Vec::new();
                for r in hp.rows() {
                    let mut a = vec![zero.clone(); dim];
                    a[..l].clone_from_slice(&r.a);
                    rows.push(HRow { a, b: r.b.clone(), eq: r.eq });
                }
                for r in hq.rows() {
                    let mut a = vec![zero.clone(); dim];
                    a[l..].clone_from_slice(&r.a);
                    rows.push(HRow { a, b: r.b.clone(), eq: r.eq });
                }
                for i in 0..n {
                    let mut a = vec![zero.clone(); dim];
                    for (j, row) in jac.iter().enumerate() {
                        a[j] = row[i].clone();
                    }
                    a[l + i] = Rational::one();
                    rows.push(HRow::eqn(a, zero.clone()));
                }
                systems.push(HPolyhedron::new_unchecked(dim, rows));
            }
        }
    }
    for sys in &systems {
        let gens = hcone_generators(sys)?;
        // Lineality vectors are valid with either sign; canonicalize them
        // to a positive first nonzero coordinate. Rays must keep their sign.
        let mut candidates: Vec<Vec<Rational>> = Vec::new();
        for v in gens.lineality() {
            if v.iter().find(|c| !c.is_zero()).is_some_and(|c| c < &Rational::zero()) {
                candidates.push(v.iter().map(|c| -c).collect());
            } else {
                candidates.push(v.clone());
            }
        }
        candidates.extend(gens.rays().iter().cloned());
        for v in candidates {
            if is_zero_vec(&v) {
                continue;
            }
            let scale = norm1(&v);
            let v: Vec<Rational> = v.iter().map(|c| c / &scale).collect();
            let cert = FjmCert { lambda: v[..l].to_vec(), nu: v[l..].to_vec() };
            if cert.verify(p, xbar)? {
                return Ok(FjmAbnormal {
                    verdict: Verdict::Proved,
                    certificate: Some(cert),
                    detail: "kernel cone of the multiplier system is nontrivial".to_string(),
                });
            }
        }
    }
    Ok(FjmAbnormal {
        verdict: Verdict::Refuted,
        certificate: None,
        detail: "every branch kernel is {0}".to_string(),
    })
}

/// No-nonzero-abnormal-multiplier constraint qualification: the complement
/// of [`fjm_abnormal_check`].
pub fn nnamcq_check(p: &ProblemInstance, xbar: &[Rational]) -> Result<bool, StatError> {
    Ok(fjm_abnormal_check(p, xbar)?.verdict == Verdict::Refuted)
}

/// Fully polyhedral data: `G` affine and `K`, `C` purely polyhedral unions.
/// In that case the constraint map is polyhedral and every feasible point
/// passes the asymptotic regularity test automatically.
pub fn polyhedrality_check(p: &ProblemInstance) -> bool {
    let gc = &p.constraint;
    gc.is_affine()
        && gc.k().is_polyhedral()
        && gc.c().map_or(true, |c| c.is_polyhedral())
}

/// Shared test helpers for the stationarity submodules.
#[cfg(test)]
pub(crate) mod testkit {
    use super::*;
    use crate::expr::{var_names, PolyMap};
    use crate::maps::GeometricConstraint;
    use crate::polyhedral::PolyUnion;
    use crate::problem::Objective;
    use std::collections::BTreeMap;

    /// Assemble an instance from expression strings and pre-built sets.
    pub fn inst(
        vars: &[&str],
        f_expr: &str,
        g_exprs: &[&str],
        k: PolyUnion,
        c: Option<PolyUnion>,
        point: &[Rational],
    ) -> ProblemInstance {
        let names = var_names(vars);
        let g = PolyMap::parse(&names, g_exprs).unwrap();
        let f = crate::expr::parse_polynomial(f_expr, &names).unwrap();
        ProblemInstance {
            name: "test".to_string(),
            objective: Objective::Smooth(f),
            constraint: GeometricConstraint::new(g, k, c).unwrap(),
            point: point.to_vec(),
            m_explicit: None,
            expected: BTreeMap::new(),
        }
    }

    /// Same, with a piecewise objective given as (region, expr) pairs.
    pub fn inst_piecewise(
        vars: &[&str],
        pieces: &[(HPolyhedron, &str)],
        convexify: bool,
        g_exprs: &[&str],
        k: PolyUnion,
        c: Option<PolyUnion>,
        point: &[Rational],
    ) -> ProblemInstance {
        let names = var_names(vars);
        let g = PolyMap::parse(&names, g_exprs).unwrap();
        let ps = pieces
            .iter()
            .map(|(h, e)| (h.clone(), crate::expr::parse_polynomial(e, &names).unwrap()))
            .collect();
        ProblemInstance {
            name: "test".to_string(),
            objective: Objective::Piecewise { pieces: ps, convexify },
            constraint: GeometricConstraint::new(g, k, c).unwrap(),
            point: point.to_vec(),
            m_explicit: None,
            expected: BTreeMap::new(),
        }
    }

    /// The union `(R₋ × R) ∪ (R₊ × R₋)` used by several fold-type tests.
    pub fn wedge_union() -> PolyUnion {
        use crate::expr::rat_int;
        let h1 = HPolyhedron::new(
            2,
            vec![HRow::le(vec![rat_int(1), rat_int(0)], rat_int(0))],
        )
        .unwrap();
        let h2 = HPolyhedron::new(
            2,
            vec![
                HRow::le(vec![rat_int(-1), rat_int(0)], rat_int(0)),
                HRow::le(vec![rat_int(0), rat_int(1)], rat_int(0)),
            ],
        )
        .unwrap();
        PolyUnion::from_polyhedra(vec![h1, h2]).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::testkit::{inst, inst_piecewise, wedge_union};
    use super::*;
    use crate::expr::{rat, rat_int, rvec};
    use crate::polyhedral::PolyUnion;

    fn nonpos_line() -> PolyUnion {
        PolyUnion::single(HPolyhedron::nonpos_orthant(1))
    }

    fn origin_set(dim: usize) -> PolyUnion {
        PolyUnion::single(HPolyhedron::point(&vec![Rational::zero(); dim]))
    }

    #[test]
    fn parabola_inequality_is_not_m_stationary() {
        // min x s.t. x² ≤ 0: the only multiplier image is 0, but ∇f = 1.
        let p = inst(&["x1"], "x1", &["x1^2"], nonpos_line(), None, &rvec(&[0]));
        let r = m_stationarity_check(&p, &rvec(&[0])).unwrap();
        assert_eq!(r.verdict, Verdict::Refuted);
        assert!(r.certificate.is_none());
    }

    #[test]
    fn wedge_constraint_with_decreasing_objective_is_m_stationary() {
        // min -x s.t. (x, x³) ∈ (R₋×R) ∪ (R₊×R₋) at 0: λ̃ = (1, 0) works.
        let p = inst(&["x1"], "-x1", &["x1", "x1^3"], wedge_union(), None, &rvec(&[0]));
        let r = m_stationarity_check(&p, &rvec(&[0])).unwrap();
        assert_eq!(r.verdict, Verdict::Proved);
        let cert = r.certificate.unwrap();
        assert_eq!(cert.lambda, rvec(&[1, 0]));
        assert!(cert.verify(&p, &rvec(&[0])).unwrap());
    }

    #[test]
    fn sign_bookkeeping_on_linear_instance() {
        // min x s.t. x ≤ 0 needs λ̃ = -1 ∉ R₊: refuted; min -x gives λ̃ = 1.
        let bad = inst(&["x1"], "x1", &["x1"], nonpos_line(), None, &rvec(&[0]));
        assert_eq!(
            m_stationarity_check(&bad, &rvec(&[0])).unwrap().verdict,
            Verdict::Refuted
        );
        let good = inst(&["x1"], "-x1", &["x1"], nonpos_line(), None, &rvec(&[0]));
        let r = m_stationarity_check(&good, &rvec(&[0])).unwrap();
        assert_eq!(r.verdict, Verdict::Proved);
        let cert = r.certificate.unwrap();
        assert_eq!(cert.lambda, rvec(&[1]));
        assert!(cert.verify(&good, &rvec(&[0])).unwrap());
    }

    #[test]
    fn infeasible_point_is_an_error() {
        let p = inst(&["x1"], "x1", &["x1"], nonpos_line(), None, &rvec(&[0]));
        assert!(matches!(
            m_stationarity_check(&p, &rvec(&[1])),
            Err(StatError::Infeasible(_))
        ));
        assert!(matches!(
            fjm_abnormal_check(&p, &rvec(&[1])),
            Err(StatError::Infeasible(_))
        ));
    }

    #[test]
    fn convex_hull_subdifferential_uses_interior_points() {
        // f = |x| (convexified), constraint x = 0 via G = x, K = {0}:
        // M̃ = R, and 0 ∈ ∂f(0) = [-1,1] already gives stationarity; the
        // extreme subgradients ±1 also work since M̃ is all of R. Tighten:
        // G ≡ 0 (K = {0} in one dim is then only reachable at ỹ) — instead
        // use K = {0} with G = 0·x so M̃ = {0}: only the hull point 0 works.
        let k = origin_set(1);
        let p = inst_piecewise(
            &["x1"],
            &[
                (HPolyhedron::nonpos_orthant(1), "-x1"),
                (HPolyhedron::nonneg_orthant(1), "x1"),
            ],
            true,
            &["0*x1"],
            k,
            None,
            &rvec(&[0]),
        );
        let r = m_stationarity_check(&p, &rvec(&[0])).unwrap();
        assert_eq!(r.verdict, Verdict::Proved);
        let cert = r.certificate.unwrap();
        assert_eq!(cert.subgradient, rvec(&[0]));
        assert!(cert.verify(&p, &rvec(&[0])).unwrap());
    }

    #[test]
    fn concave_kink_without_hull_is_refuted() {
        // f = -|x|, G ≡ 0, K = {0}: ∂f(0) = {-1, +1} (no hull), M̃ = {0}.
        let p = inst_piecewise(
            &["x1"],
            &[
                (HPolyhedron::nonpos_orthant(1), "x1"),
                (HPolyhedron::nonneg_orthant(1), "-x1"),
            ],
            false,
            &["0*x1"],
            origin_set(1),
            None,
            &rvec(&[0]),
        );
        let r = m_stationarity_check(&p, &rvec(&[0])).unwrap();
        assert_eq!(r.verdict, Verdict::Refuted);
    }

    #[test]
    fn degenerate_parabola_has_abnormal_multiplier() {
        // G = x², K = R₋ at 0: G'(0) = 0, so λ̃ = 1 is abnormal.
        let p = inst(&["x1"], "x1", &["x1^2"], nonpos_line(), None, &rvec(&[0]));
        let r = fjm_abnormal_check(&p, &rvec(&[0])).unwrap();
        assert_eq!(r.verdict, Verdict::Proved);
        let cert = r.certificate.unwrap();
        assert_eq!(cert.lambda, rvec(&[1]));
        assert!(cert.verify(&p, &rvec(&[0])).unwrap());
        assert!(!nnamcq_check(&p, &rvec(&[0])).unwrap());
    }

    #[test]
    fn zero_map_into_origin_has_abnormal_multiplier() {
        // G ≡ 0, K = {0}: every λ̃ is abnormal; normalized pick is 1.
        let p = inst(&["x1"], "-x1", &["0*x1"], origin_set(1), None, &rvec(&[0]));
        let r = fjm_abnormal_check(&p, &rvec(&[0])).unwrap();
        assert_eq!(r.verdict, Verdict::Proved);
        let cert = r.certificate.unwrap();
        assert_eq!(cert.lambda, rvec(&[1]));
        assert!(cert.verify(&p, &rvec(&[0])).unwrap());
    }

    #[test]
    fn nondegenerate_linear_row_has_no_abnormal_multiplier() {
        // G = x, K = R₋: λ̃·1 = 0 with λ̃ ∈ R₊ forces λ̃ = 0.
        let p = inst(&["x1"], "x1", &["x1"], nonpos_line(), None, &rvec(&[0]));
        let r = fjm_abnormal_check(&p, &rvec(&[0])).unwrap();
        assert_eq!(r.verdict, Verdict::Refuted);
        assert!(nnamcq_check(&p, &rvec(&[0])).unwrap());
    }

    #[test]
    fn wedge_instance_fails_nnamcq() {
        // G = (x, x³) into the wedge: λ̃ = (0, 1) ∈ {0}×R₊ is abnormal
        // because the second Jacobian row vanishes at 0.
        let p = inst(&["x1"], "-x1", &["x1", "x1^3"], wedge_union(), None, &rvec(&[0]));
        assert!(!nnamcq_check(&p, &rvec(&[0])).unwrap());
        let cert = fjm_abnormal_check(&p, &rvec(&[0])).unwrap().certificate.unwrap();
        assert_eq!(cert.lambda, rvec(&[0, 1]));
    }

    #[test]
    fn polyhedrality_scan_checks_degrees_and_blocks() {
        let p = inst(&["x1"], "x1", &["x1", "x1^3"], wedge_union(), None, &rvec(&[0]));
        assert!(!polyhedrality_check(&p));
        let q = inst(&["x1"], "x1", &["x1 - 1"], nonpos_line(), None, &rvec(&[0]));
        assert!(polyhedrality_check(&q));
    }

    #[test]
    fn certificates_scale_check_rejects_tampering() {
        let good = inst(&["x1"], "-x1", &["x1"], nonpos_line(), None, &rvec(&[0]));
        let r = m_stationarity_check(&good, &rvec(&[0])).unwrap();
        let mut cert = r.certificate.unwrap();
        cert.lambda = rvec(&[2]); // breaks the first-order identity
        assert!(!cert.verify(&good, &rvec(&[0])).unwrap());
        let f = fjm_abnormal_check(
            &inst(&["x1"], "x1", &["x1^2"], nonpos_line(), None, &rvec(&[0])),
            &rvec(&[0]),
        )
        .unwrap();
        let mut fc = f.certificate.unwrap();
        fc.lambda = rvec(&[2]); // breaks the normalization
        let p = inst(&["x1"], "x1", &["x1^2"], nonpos_line(), None, &rvec(&[0]));
        assert!(!fc.verify(&p, &rvec(&[0])).unwrap());
        // Norm-1 but sign-flipped into the wrong cone:
        fc.lambda = vec![rat(-1, 1)];
        assert!(!fc.verify(&p, &rvec(&[0])).unwrap());
        let _ = rat_int(0);
    }
}
