//! Linearization cones, Abadie/Guignard qualification tests, and an
//! empirical metric-subregularity probe.
//!
//! For `M = {x ∈ C : G(x) ∈ K}` with polyhedral `K = ∪ D_i`, the
//! linearization cone at a feasible `x̄` is
//! `L(x̄) = {d | G'(x̄)d ∈ T_K(G(x̄))}`, a finite union of polyhedral
//! cones because `T_K(Ḡ) = ∪_{Ḡ ∈ D_i} T_{D_i}(Ḡ)`.  The Abadie-type
//! qualification asks `T_M(x̄) = L(x̄)`, the Guignard variant compares the
//! polars of the two unions.  Neither tangent cone of `M` is computable from
//! `(G, K)` alone, so both checks require an explicit polyhedral description
//! of `M` and return `Unknown` otherwise.
//!
//! The subregularity probe evaluates the calmness ratio
//! `dist(x, M) / dist(0, Γ(x))` at caller-supplied sample points.  Ratios
//! are exact rationals (reported squared) whenever both distances admit
//! exact projections; divergence along a sample path is evidence — never a
//! proof — that the constraint map is not metrically subregular at `x̄`.

use num_traits::Zero;

use super::{StatError, Verdict};
use crate::expr::{rat_to_f64, Rational};
use crate::maps::{generalized_distance, generalized_distance_sq_exact};
use crate::polyhedral::{
    cone_union_inclusion, hcone_generators, polar_of_gencone, project, tangent_cone_convex, Block,
    ConeUnion, GenCone, HPolyhedron, HRow, InclusionResult, PolyUnion,
};
use crate::problem::ProblemInstance;

/// Outcome of a cone-comparison qualification test.
#[derive(Debug, Clone)]
pub struct CqReport {
    pub verdict: Verdict,
    /// For `Refuted`: an exact vector inside one cone and outside the other.
    pub counterexample: Option<Vec<Rational>>,
    pub detail: String,
}

/// The linearization cone `{d | G'(x̄)d ∈ T_K(G(x̄))}` as a union of
/// polyhedral cones, one per branch of `K` active at `G(x̄)`.  When the
/// instance carries a domain restriction its tangent rows at `x̄` are
/// intersected into every branch.
pub fn linearization_cone(
    p: &ProblemInstance,
    xbar: &[Rational],
) -> Result<ConeUnion, StatError> {
    let gc = &p.constraint;
    if !gc.is_feasible(xbar)? {
        return Err(StatError::Infeasible(format!("{xbar:?}")));
    }
    if !gc.k().is_polyhedral() {
        return Err(StatError::Unsupported(
            "linearization cone requires a polyhedral target union".to_string(),
        ));
    }
    let n = gc.n();
    let l = gc.l();
    let gx = gc.g().eval(xbar);
    let jac = gc.g().jacobian_at(xbar);

    // Tangent rows of the domain restriction, shared across branches.
    let mut shared_rows: Vec<HRow> = Vec::new();
    if let Some(dom) = gc.domain() {
        let t = tangent_cone_convex(dom, xbar)?;
        shared_rows.extend(t.rows().iter().cloned());
    }

    let mut branches = Vec::new();
    for block in gc.k().blocks() {
        let Block::Poly(h) = block else { unreachable!("polyhedral union") };
        if !h.contains(&gx) {
            continue;
        }
        let t = tangent_cone_convex(h, &gx)?;
        let mut rows = shared_rows.clone();
        for r in t.rows() {
            // Pull the row a·y ≤ 0 back through d ↦ G'(x̄)d.
            let a: Vec<Rational> = (0..n)
                .map(|i| {
                    (0..l).fold(Rational::zero(), |acc, q| acc + &r.a[q] * &jac[q][i])
                })
                .collect();
            rows.push(HRow { a, b: Rational::zero(), eq: r.eq });
        }
        let cone = HPolyhedron::new(n, rows)?;
        branches.push(hcone_generators(&cone)?);
    }
    let mut union = ConeUnion::new(n, branches);
    union.prune_contained()?;
    Ok(union)
}

/// Tangent cone of a polyhedral union at a member point: the union of the
/// blockwise tangent cones over blocks containing the point.
pub fn tangent_cone_union(m: &PolyUnion, xbar: &[Rational]) -> Result<ConeUnion, StatError> {
    if !m.is_polyhedral() {
        return Err(StatError::Unsupported(
            "tangent cones are computed for polyhedral unions only".to_string(),
        ));
    }
    let mut branches = Vec::new();
    for block in m.blocks() {
        let Block::Poly(h) = block else { unreachable!("polyhedral union") };
        if !h.contains(xbar) {
            continue;
        }
        branches.push(hcone_generators(&tangent_cone_convex(h, xbar)?)?);
    }
    if branches.is_empty() {
        return Err(StatError::Infeasible(format!("{xbar:?}")));
    }
    let mut union = ConeUnion::new(m.dim(), branches);
    union.prune_contained()?;
    Ok(union)
}

/// Abadie-type qualification: does the tangent cone of the feasible set equal
/// the linearization cone?  Needs an explicit polyhedral description of the
/// feasible set; without one the tangent side is not computable and the
/// verdict is `Unknown`.
pub fn gacq_check(
    p: &ProblemInstance,
    xbar: &[Rational],
    m_explicit: Option<&PolyUnion>,
    n_samples: usize,
    seed: u64,
) -> Result<CqReport, StatError> {
    let Some(m) = m_explicit else {
        return Ok(CqReport {
            verdict: Verdict::Unknown,
            counterexample: None,
            detail: "no explicit feasible-set description; the tangent cone is not computable"
                .to_string(),
        });
    };
    if !m.contains(xbar) {
        return Err(StatError::Infeasible(
            "reference point lies outside the explicit feasible set".to_string(),
        ));
    }
    let tangent = tangent_cone_union(m, xbar)?;
    let lin = linearization_cone(p, xbar)?;

    let fwd = cone_union_inclusion(&tangent, &lin, n_samples, seed)?;
    if let InclusionResult::Counterexample(w) = fwd {
        return Ok(CqReport {
            verdict: Verdict::Refuted,
            counterexample: Some(w),
            detail: "a tangent direction of the feasible set escapes the linearization cone"
                .to_string(),
        });
    }
    let back = cone_union_inclusion(&lin, &tangent, n_samples, seed.wrapping_add(1))?;
    if let InclusionResult::Counterexample(w) = back {
        return Ok(CqReport {
            verdict: Verdict::Refuted,
            counterexample: Some(w),
            detail: "a linearized direction is not tangent to the feasible set".to_string(),
        });
    }
    if fwd == InclusionResult::VerifiedExact && back == InclusionResult::VerifiedExact {
        Ok(CqReport {
            verdict: Verdict::Proved,
            counterexample: None,
            detail: "tangent and linearization cones agree exactly".to_string(),
        })
    } else {
        Ok(CqReport {
            verdict: Verdict::Unknown,
            counterexample: None,
            detail: "mutual inclusion verified only at sampling resolution".to_string(),
        })
    }
}

/// Guignard-type qualification: compare the polars of the two cone unions.
/// The polar of a finite union is the intersection of the blockwise polars,
/// a single convex cone, so equality is decided exactly.
pub fn ggcq_check(
    p: &ProblemInstance,
    xbar: &[Rational],
    m_explicit: Option<&PolyUnion>,
) -> Result<CqReport, StatError> {
    let Some(m) = m_explicit else {
        return Ok(CqReport {
            verdict: Verdict::Unknown,
            counterexample: None,
            detail: "no explicit feasible-set description; the regular normal cone is not computable"
                .to_string(),
        });
    };
    if !m.contains(xbar) {
        return Err(StatError::Infeasible(
            "reference point lies outside the explicit feasible set".to_string(),
        ));
    }
    let tangent = tangent_cone_union(m, xbar)?;
    let lin = linearization_cone(p, xbar)?;
    let normal_m = polar_of_union(&tangent)?;
    let polar_lin = polar_of_union(&lin)?;

    if let Some(w) = escapee(&normal_m, &polar_lin)? {
        return Ok(CqReport {
            verdict: Verdict::Refuted,
            counterexample: Some(w),
            detail: "a regular normal of the feasible set escapes the polar of the linearization cone"
                .to_string(),
        });
    }
    if let Some(w) = escapee(&polar_lin, &normal_m)? {
        return Ok(CqReport {
            verdict: Verdict::Refuted,
            counterexample: Some(w),
            detail: "the polar of the linearization cone escapes the regular normal cone"
                .to_string(),
        });
    }
    Ok(CqReport {
        verdict: Verdict::Proved,
        counterexample: None,
        detail: "regular normal cone equals the polar of the linearization cone".to_string(),
    })
}

/// Polar of a cone union: the intersection of the polars of its branches,
/// returned in generator form.
fn polar_of_union(u: &ConeUnion) -> Result<GenCone, StatError> {
    let mut rows: Vec<HRow> = Vec::new();
    for branch in u.branches() {
        rows.extend(polar_of_gencone(branch).rows().iter().cloned());
    }
    let h = HPolyhedron::new(u.dim(), rows)?;
    Ok(hcone_generators(&h)?)
}

/// First generator of `a` outside `b`, if any; equality of convex cones in
/// generator form reduces to these membership queries.
fn escapee(a: &GenCone, b: &GenCone) -> Result<Option<Vec<Rational>>, StatError> {
    for v in a.lineality() {
        if !b.contains(v)? {
            return Ok(Some(v.clone()));
        }
        let neg: Vec<Rational> = v.iter().map(|c| -c).collect();
        if !b.contains(&neg)? {
            return Ok(Some(neg));
        }
    }
    for r in a.rays() {
        if !b.contains(r)? {
            return Ok(Some(r.clone()));
        }
    }
    Ok(None)
}

/// One sample of the calmness ratio `dist(x, M) / dist(0, Γ(x))`.
#[derive(Debug, Clone)]
pub struct ProbeRecord {
    pub x: Vec<Rational>,
    /// Exact squared distance to the explicit feasible set, when available.
    pub feas_dist_sq: Option<Rational>,
    /// Exact squared constraint residual `dist(0, Γ(x))²`, when available.
    pub residual_sq: Option<Rational>,
    /// Exact squared ratio; `None` when either side is inexact or the
    /// residual vanishes at an infeasible sample.
    pub ratio_sq: Option<Rational>,
    /// Floating-point ratio, always populated (0 for feasible samples).
    pub ratio: f64,
}

/// Empirical metric-subregularity probe: evaluates the calmness ratio at the
/// given sample points.  Diverging ratios along a path `x → x̄` are evidence
/// that no neighbourhood bound `dist(x, M) ≤ κ·dist(0, Γ(x))` exists;
/// bounded ratios are a consistency report only, never a proof.
pub fn subregularity_probe(
    p: &ProblemInstance,
    samples: &[Vec<Rational>],
) -> Result<Vec<ProbeRecord>, StatError> {
    let Some(m) = p.m_explicit.as_ref() else {
        return Err(StatError::MissingData(
            "subregularity probe needs an explicit feasible-set description".to_string(),
        ));
    };
    let gc = &p.constraint;
    let zero_y = vec![Rational::zero(); gc.l()];
    let mut out = Vec::with_capacity(samples.len());
    for x in samples {
        let proj = project(m, x)?;
        let feas_dist_sq = proj.exact.map(|(_, d)| d);
        let residual_sq = generalized_distance_sq_exact(gc, x, &zero_y)?;
        let ratio_sq = match (&feas_dist_sq, &residual_sq) {
            (Some(nu), Some(de)) => {
                if de.is_zero() {
                    if nu.is_zero() {
                        Some(Rational::zero())
                    } else {
                        None
                    }
                } else {
                    Some(nu / de)
                }
            }
            _ => None,
        };
        let ratio = if let Some(r) = &ratio_sq {
            rat_to_f64(r).sqrt()
        } else {
            let num = proj.dist;
            let den = generalized_distance(gc, x, &zero_y)?;
            if den == 0.0 {
                if num == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                num / den
            }
        };
        out.push(ProbeRecord { x: x.clone(), feas_dist_sq, residual_sq, ratio_sq, ratio });
    }
    Ok(out)
}

/// Default probe samples: `x̄ ± t·eᵢ` for every coordinate and radius.
pub fn probe_samples(xbar: &[Rational], radii: &[Rational]) -> Vec<Vec<Rational>> {
    let mut out = Vec::new();
    for t in radii {
        for i in 0..xbar.len() {
            for sign in [1i64, -1] {
                let mut x = xbar.to_vec();
                x[i] = &x[i] + t * Rational::from_integer(sign.into());
                out.push(x);
            }
        }
    }
    out
}
