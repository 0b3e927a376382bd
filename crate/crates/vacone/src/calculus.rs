//! Polyhedral normal-cone calculus checks.
//!
//! Four pieces, all exact over polyhedral data:
//!
//! * [`brute_force_limiting_cone`] — a sampling oracle for the limiting
//!   normal cone built directly from its definition as the outer limit of
//!   regular normal cones at nearby feasible points.  It shares no code
//!   with the pattern-enumeration cone in `maps`, so agreement between the
//!   two is a meaningful cross-check.
//! * [`intersection_rule_check`] — verifies
//!   `N_{K∩C}(x̄) ⊆ N_K(x̄) + N_C(x̄)` on unions, forming the intersection
//!   block-pairwise.
//! * [`asymptotic_stability_check`] — verifies the sequential stability
//!   property `limsup (N_K(x) + N_C(x′)) ⊆ N_K(x̄) + N_C(x̄)` by
//!   enumerating the realizable nearby activity patterns of each set
//!   independently (two separate base points) and checking every pairwise
//!   sum.  Over polyhedral data nearby normal cones take finitely many
//!   values, so the check is exhaustive.
//! * [`preimage_rule_check`] — verifies that every limiting normal of an
//!   explicitly given feasible set is realized by a multiplier
//!   decomposition `G'(x̄)ᵀλ + ν` at the zero perturbation.

use std::collections::BTreeSet;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::expr::{f64_to_rat, rat_to_f64, Rational};
use crate::linalg::is_zero_vec;
use crate::maps::{m_map_membership, normal_cone_union, MMembership, MapsError};
use crate::polyhedral::{
    cone_union_inclusion, gencone_to_hcone, hcone_generators, lp_feasible, minkowski_sum,
    polar_of_gencone, project, Block, ConeUnion, GenCone, HPolyhedron, HRow, InclusionResult,
    LpOutcome, PolyError, PolyUnion,
};
use crate::problem::ProblemInstance;
use crate::stationarity::Verdict;
use num_traits::{One, Zero};

/// Errors from the calculus checks.
#[derive(Debug, Error)]
pub enum CalcError {
    /// A base point violates a membership precondition.
    #[error("point not in the set: {0}")]
    Infeasible(String),
    /// The data has structure the check cannot handle.
    #[error("unsupported structure: {0}")]
    Unsupported(String),
    /// Invalid configuration.
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Maps(#[from] MapsError),
}

/// Tunables for the sampling oracle.
#[derive(Debug, Clone)]
pub struct BruteForceConfig {
    /// Ball radii, strictly decreasing, all at least `10⁻⁶`.
    pub radii: Vec<f64>,
    /// Random samples drawn per radius.
    pub samples_per_radius: usize,
    /// Tolerance used when comparing normalized float rays.
    pub normalization_tol: f64,
    /// RNG seed (the oracle is deterministic given the seed).
    pub seed: u64,
}

impl Default for BruteForceConfig {
    fn default() -> Self {
        BruteForceConfig {
            radii: vec![1e-1, 1e-2, 1e-3, 1e-4],
            samples_per_radius: 40,
            normalization_tol: 1e-9,
            seed: 0x5eed,
        }
    }
}

impl BruteForceConfig {
    /// Check the radius-grid invariants.
    pub fn validate(&self) -> Result<(), CalcError> {
        if self.radii.is_empty() || self.samples_per_radius == 0 {
            return Err(CalcError::Config(
                "need at least one radius and one sample per radius".to_string(),
            ));
        }
        for w in self.radii.windows(2) {
            if w[1] >= w[0] {
                return Err(CalcError::Config("radii must decrease strictly".to_string()));
            }
        }
        if *self.radii.last().unwrap() < 1e-6 {
            return Err(CalcError::Config("radii must stay at or above 1e-6".to_string()));
        }
        Ok(())
    }
}

/// Canonicalize a generator direction through [`GenCone`]'s normalization
/// (leading nonzero entry scaled to absolute value one).
fn canonical_ray(v: &[Rational]) -> Option<Vec<Rational>> {
    if is_zero_vec(v) {
        return None;
    }
    let c = GenCone::new(v.len(), vec![v.to_vec()], vec![]);
    c.rays().first().cloned()
}

/// Regular normal cone of a polyhedral union at a member point: the
/// intersection over all containing blocks of the polars of their tangent
/// cones.  Built from tangent data only, independently of the limiting-cone
/// pattern enumeration.
fn regular_cone_of_union(s: &PolyUnion, y: &[Rational]) -> Result<GenCone, CalcError> {
    let dim = s.dim();
    let mut rows: Vec<HRow> = Vec::new();
    let mut containing = 0usize;
    for block in s.blocks() {
        let Block::Poly(h) = block else {
            return Err(CalcError::Unsupported("smooth block in sampling oracle".to_string()));
        };
        if !h.contains(y) {
            continue;
        }
        containing += 1;
        // Tangent cone of the block at y in H-form: active rows homogenized.
        let mut trows = Vec::new();
        for r in h.rows() {
            if r.eq || r.active_at(y) {
                trows.push(HRow { a: r.a.clone(), b: Rational::zero(), eq: r.eq });
            }
        }
        let tangent = HPolyhedron::new(dim, trows)?;
        let tgens = hcone_generators(&tangent)?;
        rows.extend(polar_of_gencone(&tgens).rows().iter().cloned());
    }
    if containing == 0 {
        return Err(CalcError::Infeasible(format!("{y:?}")));
    }
    // Derived internal system: row counts may exceed the per-block capacity.
    let normal_h = HPolyhedron::new_unchecked(dim, rows);
    Ok(hcone_generators(&normal_h)?)
}

/// Sampling oracle for the limiting normal cone of a polyhedral union at
/// `ȳ`: collects exact regular-normal-cone generators at `ȳ` itself and at
/// feasible points near `ȳ` (random samples projected onto the union, plus
/// projections onto each active face of each block containing `ȳ`), as a
/// deduplicated, canonically scaled ray cloud.
///
/// The cloud approximates the limiting cone from inside: every returned ray
/// is an exact member, and for unions whose nearby activity patterns are
/// all realized by the sampling it covers every generator.
pub fn brute_force_limiting_cone(
    s: &PolyUnion,
    ybar: &[Rational],
    cfg: &BruteForceConfig,
) -> Result<Vec<Vec<Rational>>, CalcError> {
    cfg.validate()?;
    if !s.is_polyhedral() {
        return Err(CalcError::Unsupported(
            "the sampling oracle handles polyhedral unions only".to_string(),
        ));
    }
    if !s.contains(ybar) {
        return Err(CalcError::Infeasible(format!("{ybar:?}")));
    }
    let dim = s.dim();
    let mut cloud: BTreeSet<Vec<Rational>> = BTreeSet::new();
    let mut visited: BTreeSet<Vec<Rational>> = BTreeSet::new();

    let add_cone_at =
        |y: &[Rational], cloud: &mut BTreeSet<Vec<Rational>>, visited: &mut BTreeSet<Vec<Rational>>| -> Result<(), CalcError> {
            if !visited.insert(y.to_vec()) {
                return Ok(());
            }
            let cone = regular_cone_of_union(s, y)?;
            for g in cone.spanning_vectors() {
                if let Some(r) = canonical_ray(&g) {
                    cloud.insert(r);
                }
            }
            Ok(())
        };

    add_cone_at(ybar, &mut cloud, &mut visited)?;

    // Faces of blocks through ȳ: forcing subsets of the active inequalities
    // to equality reaches the lower-dimensional strata that random
    // projections miss almost surely.  Subset sizes are capped at `dim − 1`
    // (deeper strata collapse to ȳ itself, whose cone is already included)
    // and the face list at a fixed budget; the oracle stays sound
    // regardless — only coverage degrades past the budget.
    const FACE_BUDGET: usize = 1024;
    let size_cap = dim.saturating_sub(1).clamp(1, 3);
    let mut faces: Vec<HPolyhedron> = Vec::new();
    'blocks: for block in s.blocks() {
        let Block::Poly(h) = block else { unreachable!("checked polyhedral above") };
        if !h.contains(ybar) {
            continue;
        }
        let active: Vec<usize> = h
            .active_rows(ybar)
            .into_iter()
            .filter(|&i| !h.rows()[i].eq)
            .collect();
        for mask in 1u32..(1u32 << active.len().min(20)) {
            if (mask.count_ones() as usize) > size_cap {
                continue;
            }
            let chosen: Vec<usize> = active
                .iter()
                .enumerate()
                .filter(|(j, _)| mask & (1 << *j) != 0)
                .map(|(_, &i)| i)
                .collect();
            let rows = h
                .rows()
                .iter()
                .enumerate()
                .map(|(i, r)| HRow {
                    a: r.a.clone(),
                    b: r.b.clone(),
                    eq: r.eq || chosen.contains(&i),
                })
                .collect();
            faces.push(HPolyhedron::new(dim, rows)?);
            if faces.len() >= FACE_BUDGET {
                break 'blocks;
            }
        }
    }

    let mut rng = StdRng::seed_from_u64(cfg.seed);
    for r in &cfg.radii {
        let rad = f64_to_rat(*r)
            .ok_or_else(|| CalcError::Config("non-finite radius".to_string()))?;
        for _ in 0..cfg.samples_per_radius {
            let dir: Vec<Rational> = (0..dim)
                .map(|_| {
                    &rad * Rational::new(rng.gen_range(-9i64..=9).into(), 9.into())
                })
                .collect();
            if is_zero_vec(&dir) {
                continue;
            }
            let y_raw: Vec<Rational> = ybar.iter().zip(&dir).map(|(a, b)| a + b).collect();
            // Project onto the union: the nearest feasible point near ȳ.
            let proj = project(s, &y_raw)?;
            if let Some((y, _)) = proj.exact {
                add_cone_at(&y, &mut cloud, &mut visited)?;
            }
            // Face jitter: the same raw sample pulled onto each active face.
            for f in &faces {
                if let Some((y, _)) =
                    crate::polyhedral::project_polyhedron_exact(f, &y_raw)?
                {
                    add_cone_at(&y, &mut cloud, &mut visited)?;
                }
            }
        }
    }
    Ok(cloud.into_iter().collect())
}

/// Outcome of a calculus-rule check.
#[derive(Debug, Clone, PartialEq)]
pub enum RuleCheck {
    /// The inclusion holds; `evidence` describes what was verified.
    Holds { evidence: String },
    /// An explicit vector in the left side but not the right.
    Violated { witness: Vec<Rational>, detail: String },
    /// The check could not decide (smooth data, sampling resolution, …).
    Unknown(String),
}

impl RuleCheck {
    /// Convenience predicate.
    pub fn holds(&self) -> bool {
        matches!(self, RuleCheck::Holds { .. })
    }
}

/// Minkowski sum of two cone unions, branch-pairwise.
fn minkowski_union(a: &ConeUnion, b: &ConeUnion) -> ConeUnion {
    let mut branches = Vec::new();
    for ga in a.branches() {
        for gb in b.branches() {
            branches.push(minkowski_sum(ga, gb));
        }
    }
    ConeUnion::new(a.dim(), branches)
}

/// Verify the normal-cone intersection rule
/// `N_{K∩C}(x̄) ⊆ N_K(x̄) + N_C(x̄)` for polyhedral unions `K`, `C` meeting
/// at `x̄`.  The intersection is formed block-pairwise with empty pairs
/// pruned by LP; both sides are exact cone unions.
pub fn intersection_rule_check(
    k: &PolyUnion,
    c: &PolyUnion,
    xbar: &[Rational],
) -> Result<RuleCheck, CalcError> {
    if !k.is_polyhedral() || !c.is_polyhedral() {
        return Ok(RuleCheck::Unknown("smooth blocks present".to_string()));
    }
    if !k.contains(xbar) || !c.contains(xbar) {
        return Err(CalcError::Infeasible(format!("{xbar:?} is not in K ∩ C")));
    }
    let dim = k.dim();
    let mut pieces = Vec::new();
    for bk in k.blocks() {
        let Block::Poly(hk) = bk else { unreachable!() };
        for bc in c.blocks() {
            let Block::Poly(hc) = bc else { unreachable!() };
            let mut rows = hk.rows().to_vec();
            rows.extend_from_slice(hc.rows());
            let inter = HPolyhedron::new(dim, rows)?;
            if !matches!(lp_feasible(&inter, None)?, LpOutcome::Infeasible) {
                pieces.push(inter);
            }
        }
    }
    let inter_union = PolyUnion::from_polyhedra(pieces)?;
    let left = normal_cone_union(&inter_union, xbar)?;
    let right = minkowski_union(&normal_cone_union(k, xbar)?, &normal_cone_union(c, xbar)?);
    match cone_union_inclusion(&left, &right, 64, 0x0ca1c)? {
        InclusionResult::VerifiedExact => Ok(RuleCheck::Holds {
            evidence: format!(
                "{} intersection normal-cone branches verified inside the {}-branch Minkowski sum",
                left.branches().len(),
                right.branches().len()
            ),
        }),
        InclusionResult::Counterexample(witness) => Ok(RuleCheck::Violated {
            witness,
            detail: "limiting normal of the intersection admits no sum decomposition"
                .to_string(),
        }),
        InclusionResult::VerifiedSampled => Ok(RuleCheck::Unknown(
            "inclusion verified at sampling resolution only".to_string(),
        )),
    }
}

/// One candidate nearby activity pattern of a polyhedral union: the blocks
/// the nearby point stays in and, per block, which rows stay tight.
struct PatternChoice {
    /// Per retained block: block index and the indices of its active
    /// inequalities kept tight.
    retained: Vec<(usize, Vec<usize>)>,
    /// Merged tight normals (for the realizability LP).
    tight: Vec<Vec<Rational>>,
    /// Equality rows of all retained blocks.
    lineality: Vec<Vec<Rational>>,
    /// Rows that must be strictly slack (`a·d ≤ -δ`).
    slack: Vec<Vec<Rational>>,
    /// Rows that must be strictly violated (`a·d ≥ δ`), leaving a block.
    violated: Vec<Vec<Rational>>,
}

/// Enumerate the finitely many values the limiting normal cone takes at
/// feasible points near `x̄`, by explicit activity-pattern enumeration with
/// an exact realizability LP per pattern.  This is independent of the
/// pattern machinery behind `normal_cone_union` and is used to cross-check
/// it.
fn nearby_pattern_cones(s: &PolyUnion, xbar: &[Rational]) -> Result<Vec<GenCone>, CalcError> {
    const PATTERN_CAP: usize = 50_000;
    let dim = s.dim();
    // Blocks containing x̄ with their active-row data.
    struct BlockData {
        ineq_active: Vec<Vec<Rational>>,
        eqs: Vec<Vec<Rational>>,
    }
    let mut data: Vec<BlockData> = Vec::new();
    for block in s.blocks() {
        let Block::Poly(h) = block else {
            return Err(CalcError::Unsupported("smooth block".to_string()));
        };
        if !h.contains(xbar) {
            continue;
        }
        let mut bd = BlockData { ineq_active: Vec::new(), eqs: Vec::new() };
        for r in h.rows() {
            if r.eq {
                bd.eqs.push(r.a.clone());
            } else if r.active_at(xbar) {
                bd.ineq_active.push(r.a.clone());
            }
        }
        data.push(bd);
    }
    if data.is_empty() {
        return Err(CalcError::Infeasible(format!("{xbar:?}")));
    }
    let nb = data.len();

    // Patterns: subset T of retained blocks (nonempty; blocks with no
    // active rows cannot be left locally, so they are always retained),
    // a tight-subset per retained block, and a violated-row choice per
    // dropped block.
    let mut patterns: Vec<PatternChoice> = Vec::new();
    let mut overflow = false;
    'outer: for t_mask in 1u32..(1 << nb) {
        let retained: Vec<usize> = (0..nb).filter(|i| t_mask & (1 << i) != 0).collect();
        let dropped: Vec<usize> = (0..nb).filter(|i| t_mask & (1 << i) == 0).collect();
        if dropped
            .iter()
            .any(|&i| data[i].ineq_active.is_empty() && data[i].eqs.is_empty())
        {
            continue; // interior block cannot be exited locally
        }
        // Violation choices per dropped block: one active inequality pushed
        // outward, or an equality row crossed in either direction.
        let viol_choices: Vec<Vec<Vec<Rational>>> = dropped
            .iter()
            .map(|&i| {
                let mut v: Vec<Vec<Rational>> = data[i].ineq_active.clone();
                for e in &data[i].eqs {
                    v.push(e.clone());
                    v.push(e.iter().map(|c| -c.clone()).collect());
                }
                v
            })
            .collect();
        // Tight subsets per retained block.
        let subset_counts: Vec<usize> =
            retained.iter().map(|&i| 1usize << data[i].ineq_active.len()).collect();

        let mut subset_idx = vec![0usize; retained.len()];
        loop {
            let mut viol_idx = vec![0usize; dropped.len()];
            loop {
                if patterns.len() >= PATTERN_CAP {
                    overflow = true;
                    break 'outer;
                }
                let mut p = PatternChoice {
                    retained: Vec::new(),
                    tight: Vec::new(),
                    lineality: Vec::new(),
                    slack: Vec::new(),
                    violated: Vec::new(),
                };
                for (pos, &bi) in retained.iter().enumerate() {
                    let mut tight_idx = Vec::new();
                    for (ri, row) in data[bi].ineq_active.iter().enumerate() {
                        if subset_idx[pos] & (1 << ri) != 0 {
                            p.tight.push(row.clone());
                            tight_idx.push(ri);
                        } else {
                            p.slack.push(row.clone());
                        }
                    }
                    p.lineality.extend(data[bi].eqs.iter().cloned());
                    p.retained.push((bi, tight_idx));
                }
                for (pos, _) in dropped.iter().enumerate() {
                    p.violated.push(viol_choices[pos][viol_idx[pos]].clone());
                }
                patterns.push(p);

                // Advance the violation counter (odometer).
                let mut carry = true;
                for (pos, &di) in dropped.iter().enumerate() {
                    let _ = di;
                    if carry {
                        viol_idx[pos] += 1;
                        if viol_idx[pos] < viol_choices[pos].len() {
                            carry = false;
                        } else {
                            viol_idx[pos] = 0;
                        }
                    }
                }
                if carry {
                    break;
                }
            }
            // Advance the tight-subset odometer.
            let mut carry = true;
            for pos in 0..retained.len() {
                if carry {
                    subset_idx[pos] += 1;
                    if subset_idx[pos] < subset_counts[pos] {
                        carry = false;
                    } else {
                        subset_idx[pos] = 0;
                    }
                }
            }
            if carry {
                break;
            }
        }
    }
    if overflow {
        return Err(CalcError::Unsupported(format!(
            "more than {PATTERN_CAP} candidate activity patterns"
        )));
    }

    let mut cones: Vec<GenCone> = Vec::new();
    let push_unique = |c: GenCone, cones: &mut Vec<GenCone>| {
        if !cones.contains(&c) {
            cones.push(c);
        }
    };

    // The base point's own cone is always attained.
    push_unique(regular_cone_of_union(s, xbar)?, &mut cones);

    for p in &patterns {
        // Realizability: maximize δ over directions d with tight rows at
        // zero, slack rows ≤ -δ, violated rows ≥ δ, δ ≤ 1.  The pattern is
        // realizable near x̄ iff the optimum is positive (all constraints
        // are active at x̄, so directions scale freely).
        let mut rows: Vec<HRow> = Vec::new();
        let push_dir_row =
            |a: &[Rational], delta_coeff: Rational, eq: bool, rows: &mut Vec<HRow>| {
                let mut v = a.to_vec();
                v.push(delta_coeff);
                rows.push(HRow { a: v, b: Rational::zero(), eq });
            };
        for a in &p.tight {
            push_dir_row(a, Rational::zero(), true, &mut rows);
        }
        for a in &p.lineality {
            push_dir_row(a, Rational::zero(), true, &mut rows);
        }
        for a in &p.slack {
            push_dir_row(a, Rational::one(), false, &mut rows);
        }
        for a in &p.violated {
            let neg: Vec<Rational> = a.iter().map(|c| -c.clone()).collect();
            push_dir_row(&neg, Rational::one(), false, &mut rows);
        }
        let mut cap = vec![Rational::zero(); dim];
        cap.push(Rational::one());
        rows.push(HRow::le(cap.clone(), Rational::one()));
        // Derived internal system in dim + 1 variables.
        let sys = HPolyhedron::new_unchecked(dim + 1, rows);
        let realizable = match lp_feasible(&sys, Some(cap.as_slice()))? {
            LpOutcome::Optimal { value, .. } => value > Rational::zero(),
            LpOutcome::Unbounded { .. } => true,
            LpOutcome::Infeasible => false,
        };
        if !realizable {
            continue;
        }
        // Regular cone at such a point: the intersection over retained
        // blocks of cone(tight normals) + span(equality rows), taken per
        // block via the H-forms.
        let mut nrows: Vec<HRow> = Vec::new();
        for (bi, tight_idx) in &p.retained {
            let rays: Vec<Vec<Rational>> =
                tight_idx.iter().map(|&ri| data[*bi].ineq_active[ri].clone()).collect();
            let cone = GenCone::new(dim, rays, data[*bi].eqs.clone());
            nrows.extend(gencone_to_hcone(&cone)?.rows().iter().cloned());
        }
        let inter = HPolyhedron::new_unchecked(dim, nrows);
        push_unique(hcone_generators(&inter)?, &mut cones);
    }
    Ok(cones)
}

/// Verify the sequential stability property of normal-cone sums at `x̄`:
/// every sum `N_K(x) + N_C(x′)` realized at feasible points `x` near `x̄`
/// in `K` and `x′` near `x̄` in `C` (independently) is contained in
/// `N_K(x̄) + N_C(x̄)`.
///
/// Exact over polyhedral unions: both factors take finitely many nearby
/// values, enumerated here by an activity-pattern search that is
/// independent of the limiting-cone computation used for the right side.
/// Smooth blocks yield `Unknown`.
pub fn asymptotic_stability_check(
    k: &PolyUnion,
    c: &PolyUnion,
    xbar: &[Rational],
    cfg: &BruteForceConfig,
) -> Result<Verdict, CalcError> {
    if !k.is_polyhedral() || !c.is_polyhedral() {
        return Ok(Verdict::Unknown);
    }
    if !k.contains(xbar) || !c.contains(xbar) {
        return Err(CalcError::Infeasible(format!("{xbar:?} is not in K ∩ C")));
    }
    let dim = k.dim();
    let pk = match nearby_pattern_cones(k, xbar) {
        Ok(v) => v,
        Err(CalcError::Unsupported(_)) => return Ok(Verdict::Unknown),
        Err(e) => return Err(e),
    };
    let pc = match nearby_pattern_cones(c, xbar) {
        Ok(v) => v,
        Err(CalcError::Unsupported(_)) => return Ok(Verdict::Unknown),
        Err(e) => return Err(e),
    };
    let right = minkowski_union(&normal_cone_union(k, xbar)?, &normal_cone_union(c, xbar)?);

    for gk in &pk {
        for gc in &pc {
            let sum = minkowski_sum(gk, gc);
            // Fast path: the sum sits inside a single right-hand branch.
            let mut covered = false;
            for rb in right.branches() {
                if sum.subset_of(rb)? {
                    covered = true;
                    break;
                }
            }
            if covered {
                continue;
            }
            let lhs = ConeUnion::new(dim, vec![sum]);
            match cone_union_inclusion(&lhs, &right, 64, cfg.seed)? {
                InclusionResult::VerifiedExact => {}
                InclusionResult::Counterexample(_) => return Ok(Verdict::Refuted),
                InclusionResult::VerifiedSampled => return Ok(Verdict::Unknown),
            }
        }
    }
    Ok(Verdict::Proved)
}

/// Verify the preimage rule at `x̄`: every limiting normal of the
/// explicitly given feasible set `M` admits a multiplier decomposition in
/// the map `G'(x̄)ᵀ N_K(G(x̄)) + N_C(x̄)` (membership queried at the zero
/// perturbation).  A violation is only possible at points that are not
/// asymptotically regular.
pub fn preimage_rule_check(
    p: &ProblemInstance,
    xbar: &[Rational],
    m_explicit: &PolyUnion,
) -> Result<RuleCheck, CalcError> {
    if !m_explicit.is_polyhedral() {
        return Ok(RuleCheck::Unknown(
            "explicit feasible set has smooth blocks".to_string(),
        ));
    }
    if !m_explicit.contains(xbar) {
        return Err(CalcError::Infeasible(format!("{xbar:?} is not in the explicit set")));
    }
    let gc = &p.constraint;
    if !gc.is_feasible(xbar)? {
        return Err(CalcError::Infeasible(format!(
            "{xbar:?} violates the constraint structure"
        )));
    }
    let zeros = vec![Rational::zero(); gc.l()];
    let cones = normal_cone_union(m_explicit, xbar)?;
    let mut checked = 0usize;
    for branch in cones.branches() {
        for v in branch.spanning_vectors() {
            match m_map_membership(gc, xbar, &zeros, &v)? {
                MMembership::Member { .. } => checked += 1,
                MMembership::NotMember => {
                    return Ok(RuleCheck::Violated {
                        witness: v,
                        detail: "limiting normal of the feasible set admits no multiplier decomposition".to_string(),
                    });
                }
            }
        }
    }
    Ok(RuleCheck::Holds {
        evidence: format!("{checked} normal-cone generators admit multiplier decompositions"),
    })
}

/// Deterministic random polyhedral union through the origin: up to
/// `max_blocks` blocks with up to `max_rows` rows each, small integer
/// coefficients, right-hand sides biased toward activity at the origin.
/// Every block contains the origin.
pub fn random_poly_union(
    dim: usize,
    max_blocks: usize,
    max_rows: usize,
    seed: u64,
) -> Result<PolyUnion, CalcError> {
    let mut rng = StdRng::seed_from_u64(seed);
    let nb = rng.gen_range(1..=max_blocks.max(1));
    let mut blocks = Vec::new();
    for _ in 0..nb {
        let nr = rng.gen_range(1..=max_rows.max(1));
        let mut rows = Vec::new();
        for _ in 0..nr {
            let a: Vec<Rational> = (0..dim)
                .map(|_| Rational::from_integer(rng.gen_range(-3i64..=3).into()))
                .collect();
            if is_zero_vec(&a) {
                continue;
            }
            let active = rng.gen_bool(0.6);
            let b = if active { Rational::zero() } else { Rational::one() };
            let eq = active && rng.gen_bool(0.15);
            rows.push(HRow { a, b, eq });
        }
        blocks.push(HPolyhedron::new(dim, rows)?);
    }
    Ok(PolyUnion::from_polyhedra(blocks)?)
}

/// Angle between two directions in radians (for cloud-vs-generator
/// comparisons; exact zero vectors are treated as aligned with everything).
pub fn ray_angle(u: &[Rational], v: &[Rational]) -> f64 {
    let uf: Vec<f64> = u.iter().map(rat_to_f64).collect();
    let vf: Vec<f64> = v.iter().map(rat_to_f64).collect();
    let nu = uf.iter().map(|c| c * c).sum::<f64>().sqrt();
    let nv = vf.iter().map(|c| c * c).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    let cos = uf.iter().zip(&vf).map(|(a, b)| a * b).sum::<f64>() / (nu * nv);
    cos.clamp(-1.0, 1.0).acos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{rat, rvec};
    use crate::polyhedral::SmoothConvexBlock;
    use crate::stationarity::testkit::{inst, wedge_union};

    /// `(R₊ × {0}) ∪ ({0} × R₊)`: the complementarity set.
    fn complementarity() -> PolyUnion {
        let h1 = HPolyhedron::new(
            2,
            vec![
                HRow { a: rvec(&[0, 1]), b: rat(0, 1), eq: true },
                HRow::le(rvec(&[-1, 0]), rat(0, 1)),
            ],
        )
        .unwrap();
        let h2 = HPolyhedron::new(
            2,
            vec![
                HRow { a: rvec(&[1, 0]), b: rat(0, 1), eq: true },
                HRow::le(rvec(&[0, -1]), rat(0, 1)),
            ],
        )
        .unwrap();
        PolyUnion::from_polyhedra(vec![h1, h2]).unwrap()
    }

    fn small_cfg(seed: u64) -> BruteForceConfig {
        BruteForceConfig {
            radii: vec![1e-1, 1e-2, 1e-3],
            samples_per_radius: 24,
            normalization_tol: 1e-9,
            seed,
        }
    }

    /// Radii small enough that rows inactive at the origin (offsets of
    /// one, coefficients up to three) stay inactive at every point within
    /// twice the radius, keeping sampled cones inside the limiting cone.
    fn tight_cfg(seed: u64) -> BruteForceConfig {
        BruteForceConfig {
            radii: vec![1e-2, 1e-3],
            samples_per_radius: 24,
            normalization_tol: 1e-9,
            seed,
        }
    }

    #[test]
    fn config_rejects_bad_radius_grids() {
        let mut cfg = BruteForceConfig::default();
        cfg.radii = vec![1e-2, 1e-2];
        assert!(matches!(cfg.validate(), Err(CalcError::Config(_))));
        cfg.radii = vec![1e-3, 1e-8];
        assert!(matches!(cfg.validate(), Err(CalcError::Config(_))));
        cfg.radii = vec![1e-1, 1e-4];
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn cloud_at_the_complementarity_origin_covers_corner_and_axes() {
        let s = complementarity();
        let cloud = brute_force_limiting_cone(&s, &rvec(&[0, 0]), &small_cfg(7)).unwrap();
        // Corner cone R₋ × R₋ plus both axis lines.
        for expected in [
            rvec(&[-1, 0]),
            rvec(&[0, -1]),
            rvec(&[1, 0]),
            rvec(&[0, 1]),
        ] {
            let hit = cloud.iter().any(|r| ray_angle(r, &expected) <= 1e-12);
            assert!(hit, "missing ray {expected:?} in {cloud:?}");
        }
        // Every cloud ray is an exact member of the limiting cone.
        let exact = normal_cone_union(&s, &rvec(&[0, 0])).unwrap();
        for r in &cloud {
            assert!(exact.contains(r).unwrap(), "spurious ray {r:?}");
        }
    }

    #[test]
    fn cloud_of_a_convex_block_stays_in_its_normal_cone() {
        // Unit square at the vertex (1,1): normal cone = R₊ × R₊.
        let square = HPolyhedron::new(
            2,
            vec![
                HRow::le(rvec(&[1, 0]), rat(1, 1)),
                HRow::le(rvec(&[-1, 0]), rat(1, 1)),
                HRow::le(rvec(&[0, 1]), rat(1, 1)),
                HRow::le(rvec(&[0, -1]), rat(1, 1)),
            ],
        )
        .unwrap();
        let s = PolyUnion::single(square);
        let vertex = rvec(&[1, 1]);
        let cloud = brute_force_limiting_cone(&s, &vertex, &small_cfg(11)).unwrap();
        let cone = normal_cone_union(&s, &vertex).unwrap();
        assert!(!cloud.is_empty());
        for r in &cloud {
            assert!(cone.contains(r).unwrap(), "{r:?} outside R²₊");
            assert!(r.iter().all(|c| c >= &rat(0, 1)), "{r:?} has a negative entry");
        }
    }

    #[test]
    fn cloud_at_an_interior_point_is_empty() {
        let square = HPolyhedron::new(
            2,
            vec![
                HRow::le(rvec(&[1, 0]), rat(1, 1)),
                HRow::le(rvec(&[-1, 0]), rat(1, 1)),
                HRow::le(rvec(&[0, 1]), rat(1, 1)),
                HRow::le(rvec(&[0, -1]), rat(1, 1)),
            ],
        )
        .unwrap();
        let s = PolyUnion::single(square);
        let cloud = brute_force_limiting_cone(&s, &rvec(&[0, 0]), &small_cfg(3)).unwrap();
        assert!(cloud.is_empty(), "interior normals should be trivial: {cloud:?}");
    }

    #[test]
    fn cloud_requires_a_member_base_point() {
        let s = complementarity();
        assert!(matches!(
            brute_force_limiting_cone(&s, &rvec(&[-1, -1]), &small_cfg(0)),
            Err(CalcError::Infeasible(_))
        ));
    }

    #[test]
    fn intersection_rule_on_an_orthant_split() {
        // K = R₋ × R, C = R × R₋: N of the intersection is R²₊, split as
        // R₊×{0} + {0}×R₊.
        let k = PolyUnion::single(HPolyhedron::new(2, vec![HRow::le(rvec(&[1, 0]), rat(0, 1))]).unwrap());
        let c = PolyUnion::single(HPolyhedron::new(2, vec![HRow::le(rvec(&[0, 1]), rat(0, 1))]).unwrap());
        let r = intersection_rule_check(&k, &c, &rvec(&[0, 0])).unwrap();
        assert!(r.holds(), "{r:?}");
    }

    #[test]
    fn intersection_rule_on_the_cross_and_a_diagonal() {
        // K = the coordinate cross, C = the diagonal line: the intersection
        // is the origin with N = R², and the sum side spans R².
        let h1 = HPolyhedron::new(2, vec![HRow { a: rvec(&[0, 1]), b: rat(0, 1), eq: true }]).unwrap();
        let h2 = HPolyhedron::new(2, vec![HRow { a: rvec(&[1, 0]), b: rat(0, 1), eq: true }]).unwrap();
        let k = PolyUnion::from_polyhedra(vec![h1, h2]).unwrap();
        let c = PolyUnion::single(
            HPolyhedron::new(2, vec![HRow { a: rvec(&[1, -1]), b: rat(0, 1), eq: true }]).unwrap(),
        );
        let r = intersection_rule_check(&k, &c, &rvec(&[0, 0])).unwrap();
        assert!(r.holds(), "{r:?}");
    }

    #[test]
    fn intersection_rule_survives_a_classical_qualification_failure() {
        // Two opposing half-planes: N_K(0) ∩ -N_C(0) = R₊·e₁ ≠ {0}, so the
        // classical normal qualification condition fails, yet the inclusion
        // holds because the sum of the two rays spans the e₁ line.
        let k = PolyUnion::single(HPolyhedron::new(2, vec![HRow::le(rvec(&[1, 0]), rat(0, 1))]).unwrap());
        let c = PolyUnion::single(HPolyhedron::new(2, vec![HRow::le(rvec(&[-1, 0]), rat(0, 1))]).unwrap());
        let r = intersection_rule_check(&k, &c, &rvec(&[0, 0])).unwrap();
        assert!(r.holds(), "{r:?}");
    }

    #[test]
    fn stability_check_proves_polyhedral_pairs() {
        let cfg = BruteForceConfig::default();
        let cases: Vec<(PolyUnion, PolyUnion)> = vec![
            (
                PolyUnion::single(
                    HPolyhedron::new(2, vec![HRow::le(rvec(&[1, 0]), rat(0, 1))]).unwrap(),
                ),
                PolyUnion::single(
                    HPolyhedron::new(2, vec![HRow::le(rvec(&[0, 1]), rat(0, 1))]).unwrap(),
                ),
            ),
            (
                complementarity(),
                PolyUnion::single(
                    HPolyhedron::new(2, vec![HRow { a: rvec(&[1, -1]), b: rat(0, 1), eq: true }])
                        .unwrap(),
                ),
            ),
            (
                PolyUnion::single(
                    HPolyhedron::new(2, vec![HRow::le(rvec(&[1, 0]), rat(0, 1))]).unwrap(),
                ),
                PolyUnion::single(
                    HPolyhedron::new(2, vec![HRow::le(rvec(&[-1, 0]), rat(0, 1))]).unwrap(),
                ),
            ),
        ];
        for (k, c) in &cases {
            let v = asymptotic_stability_check(k, c, &rvec(&[0, 0]), &cfg).unwrap();
            assert_eq!(v, Verdict::Proved);
        }
    }

    #[test]
    fn stability_check_reports_unknown_on_smooth_blocks() {
        let names = crate::expr::var_names(&["y1", "y2"]);
        let disk = crate::expr::parse_polynomial("y1^2 + (y2 - 1)^2 - 1", &names).unwrap();
        let c = PolyUnion::single_smooth(
            SmoothConvexBlock::new(2, vec![disk], rvec(&[0, 1])).unwrap(),
        );
        let k = PolyUnion::single(HPolyhedron::nonpos_orthant(2));
        let cfg = BruteForceConfig::default();
        assert_eq!(
            asymptotic_stability_check(&k, &c, &rvec(&[0, 0]), &cfg).unwrap(),
            Verdict::Unknown
        );
    }

    #[test]
    fn preimage_rule_on_the_wedge_cubic() {
        // G = (x, x³) into the wedge union has feasible set R₋, whose
        // normal cone at 0 is R₊ — matched by the multiplier image R₊.
        let p = inst(&["x1"], "0", &["x1", "x1^3"], wedge_union(), None, &rvec(&[0]));
        let m = PolyUnion::single(HPolyhedron::nonpos_orthant(1));
        let r = preimage_rule_check(&p, &rvec(&[0]), &m).unwrap();
        assert!(r.holds(), "{r:?}");
    }

    #[test]
    fn preimage_rule_on_affine_rows() {
        let p = inst(
            &["x1", "x2"],
            "0",
            &["x1 + x2", "x1 - x2"],
            PolyUnion::single(HPolyhedron::nonpos_orthant(2)),
            None,
            &rvec(&[0, 0]),
        );
        let m = PolyUnion::single(
            HPolyhedron::new(
                2,
                vec![
                    HRow::le(rvec(&[1, 1]), rat(0, 1)),
                    HRow::le(rvec(&[1, -1]), rat(0, 1)),
                ],
            )
            .unwrap(),
        );
        let r = preimage_rule_check(&p, &rvec(&[0, 0]), &m).unwrap();
        assert!(r.holds(), "{r:?}");
    }

    #[test]
    fn preimage_rule_flags_an_irregular_instance() {
        // G = x² into R₋ has feasible set {0} with N = R, but the
        // multiplier image G'(0)ᵀ N_K(0) collapses to {0}: the normals
        // ±1 admit no decomposition.  (The rule's hypothesis — asymptotic
        // regularity — fails here.)
        let p = inst(
            &["x1"],
            "0",
            &["x1^2"],
            PolyUnion::single(HPolyhedron::nonpos_orthant(1)),
            None,
            &rvec(&[0]),
        );
        let m = PolyUnion::single(HPolyhedron::point(&rvec(&[0])));
        match preimage_rule_check(&p, &rvec(&[0]), &m).unwrap() {
            RuleCheck::Violated { witness, .. } => {
                assert_eq!(witness.len(), 1);
                assert!(!witness[0].is_zero());
            }
            other => panic!("expected Violated, got {other:?}"),
        }
    }

    #[test]
    fn oracle_and_pattern_cones_agree_on_random_unions() {
        let mut checked_rays = 0usize;
        for seed in 0..10u64 {
            let dim = if seed % 3 == 0 { 3 } else { 2 };
            let s = random_poly_union(dim, 3, 4, seed).unwrap();
            let origin = vec![Rational::zero(); dim];
            let cloud = brute_force_limiting_cone(&s, &origin, &tight_cfg(seed)).unwrap();
            let exact = normal_cone_union(&s, &origin).unwrap();
            // Soundness: every sampled ray is an exact member.
            for r in &cloud {
                assert!(exact.contains(r).unwrap(), "seed {seed}: spurious ray {r:?}");
                checked_rays += 1;
            }
            // Coverage: every generator is approached by a sampled ray.
            for branch in exact.branches() {
                for g in branch.spanning_vectors() {
                    if is_zero_vec(&g) {
                        continue;
                    }
                    let best = cloud
                        .iter()
                        .map(|r| ray_angle(r, &g))
                        .fold(f64::INFINITY, f64::min);
                    assert!(
                        best <= 1e-3,
                        "seed {seed}: generator {g:?} unapproached (best angle {best})"
                    );
                }
            }
        }
        assert!(checked_rays > 0);
    }

    #[test]
    fn stability_check_proves_random_polyhedral_pairs() {
        let cfg = BruteForceConfig::default();
        for seed in 0..6u64 {
            let k = random_poly_union(2, 2, 3, seed * 2 + 1).unwrap();
            let c = random_poly_union(2, 2, 3, seed * 2 + 2).unwrap();
            let v = asymptotic_stability_check(&k, &c, &rvec(&[0, 0]), &cfg).unwrap();
            assert_eq!(v, Verdict::Proved, "seed {seed}");
        }
    }
}
