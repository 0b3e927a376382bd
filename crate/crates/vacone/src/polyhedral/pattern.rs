//! Limiting (Mordukhovich) normal cones of polyhedral unions, exactly.
//!
//! Near a point `ȳ` of a polyhedral union, the regular normal cone of the
//! union at a member point `y` depends only on the *activity pattern* of
//! `y`: which blocks contain `y` and which of their rows are tight. Within
//! the safe radius (where every row not tight at `ȳ` keeps its strict
//! status) each pattern is realised on a set that scales toward `ȳ`, so
//!
//! ```text
//!     N_S(ȳ) = union over realisable patterns P of  N̂_P ,
//! ```
//!
//! where `N̂_P` is the intersection over the pattern's "in" blocks of the
//! polars of their tangent cones. Realisability of a pattern is decided by
//! an exact margin LP (maximise the minimum slack/violation); the limiting
//! cone is therefore computed without any sampling or tolerances.

use super::{
    hcone_generators, lp_feasible, polar_of_gencone, safe_radius, Block, ConeUnion, GenCone,
    HPolyhedron, HRow, LpOutcome, PolyError, PolyUnion,
};
use crate::expr::Rational;
use crate::linalg::vsub;
use num::{One, Signed, Zero};
use std::collections::BTreeSet;

/// One realisable activity pattern near the base point.
#[derive(Debug, Clone)]
pub struct PatternBranch {
    /// Regular normal cone common to every point realising the pattern.
    pub cone: GenCone,
    /// `y* - ȳ` for one realising point `y*` (zero for the base pattern,
    /// which is realised at `ȳ` itself). Points `ȳ + t (y* - ȳ)` with `t`
    /// in `(0, 1]` all realise the pattern.
    pub displacement: Vec<Rational>,
}

/// Cap on the number of activity patterns enumerated per query.
const MAX_PATTERNS: usize = 50_000;

/// Per-block tight structure at the base point (containing blocks only).
struct CBlock<'a> {
    h: &'a HPolyhedron,
    /// Inequality rows tight at the base point.
    through_le: Vec<usize>,
    /// Equality rows (always tight at member points).
    eqs: Vec<usize>,
    /// Ways to exit the block nearby: `(row, violate_upward)`.
    out_options: Vec<(usize, bool)>,
}

/// Limiting normal cone of a polyhedral union at a member point.
///
/// The result is a deduplicated [`ConeUnion`] with branches that are
/// subsets of other branches removed. Errors: non-polyhedral blocks are
/// unsupported here, the base point must lie in the union, and pattern
/// enumeration beyond an internal budget is refused as a capacity error.
pub fn limiting_normal_cone(s: &PolyUnion, y: &[Rational]) -> Result<ConeUnion, PolyError> {
    let branches = limiting_normal_cone_detailed(s, y, None, None)?;
    let mut u = ConeUnion::new(s.dim(), branches.into_iter().map(|b| b.cone).collect());
    u.prune_contained()?;
    Ok(u)
}

/// Pattern-level view of [`limiting_normal_cone`].
///
/// Returns every realisable pattern with its cone and a realising
/// displacement. `pin` optionally fixes coordinates: `pin[i] = true`
/// restricts realising points to `y*_i = ȳ_i`, which computes the limiting
/// behaviour along the corresponding slice (used for graph slices of
/// constraint maps with pinned arguments). `restrict` optionally confines
/// realising points to a convex polyhedron containing `ȳ` (patterns are then
/// exactly those attainable through sequences inside that region — the
/// region must contain `ȳ`, so scaling toward `ȳ` stays admissible). Branch
/// cones are deduplicated by canonical generators, keeping the earliest
/// realisation; the base pattern comes first.
pub fn limiting_normal_cone_detailed(
    s: &PolyUnion,
    y: &[Rational],
    pin: Option<&[bool]>,
    restrict: Option<&HPolyhedron>,
) -> Result<Vec<PatternBranch>, PolyError> {
    let dim = s.dim();
    if y.len() != dim {
        return Err(PolyError::DimensionMismatch(
            "base point has wrong dimension".to_string(),
        ));
    }
    if let Some(p) = pin {
        if p.len() != dim {
            return Err(PolyError::DimensionMismatch("pin mask has wrong length".to_string()));
        }
    }
    if let Some(r) = restrict {
        if r.dim() != dim {
            return Err(PolyError::DimensionMismatch(
                "restriction region has wrong dimension".to_string(),
            ));
        }
        if !r.contains(y) {
            return Err(PolyError::PointNotInSet(
                "restriction region must contain the base point".to_string(),
            ));
        }
    }
    if !s.is_polyhedral() {
        return Err(PolyError::Unsupported(
            "limiting normal cones require polyhedral blocks".to_string(),
        ));
    }
    if !s.contains(y) {
        return Err(PolyError::PointNotInSet("limiting normal cone base point".to_string()));
    }

    let rho = safe_radius(s, y);

    let mut cblocks: Vec<CBlock> = Vec::new();
    for block in s.blocks() {
        let Block::Poly(h) = block else { unreachable!() };
        if !h.contains(y) {
            continue; // stays non-containing within the safe radius
        }
        let mut through_le = Vec::new();
        let mut eqs = Vec::new();
        let mut out_options = Vec::new();
        for (i, r) in h.rows().iter().enumerate() {
            if r.eq {
                eqs.push(i);
                out_options.push((i, true));
                out_options.push((i, false));
            } else if r.active_at(y) {
                through_le.push(i);
                out_options.push((i, true));
            }
        }
        cblocks.push(CBlock { h, through_le, eqs, out_options });
    }

    // Enumeration budget: (subsets + out) per block, multiplied.
    let mut budget: usize = 1;
    for cb in &cblocks {
        let t = cb.through_le.len();
        if t > 16 {
            return Err(PolyError::CapacityExceeded(
                "too many tight rows in one block".to_string(),
            ));
        }
        budget = budget.saturating_mul((1usize << t) + 1);
        if budget > MAX_PATTERNS {
            return Err(PolyError::CapacityExceeded(format!(
                "more than {MAX_PATTERNS} activity patterns"
            )));
        }
    }

    // Options per block: active subsets in descending mask order (full set
    // first, so the base pattern is enumerated first), then Out (None).
    let options: Vec<Vec<Option<BTreeSet<usize>>>> = cblocks
        .iter()
        .map(|cb| {
            let t = cb.through_le.len();
            let mut opts: Vec<Option<BTreeSet<usize>>> = (0..(1usize << t))
                .rev()
                .map(|mask| {
                    Some(
                        cb.through_le
                            .iter()
                            .enumerate()
                            .filter(|(k, _)| mask & (1 << k) != 0)
                            .map(|(_, &r)| r)
                            .collect(),
                    )
                })
                .collect();
            opts.push(None);
            opts
        })
        .collect();

    let mut branches: Vec<PatternBranch> = Vec::new();
    let mut seen_cones: Vec<GenCone> = Vec::new();

    // Odometer over the per-block options.
    let mut idx = vec![0usize; cblocks.len()];
    loop {
        let assignment: Vec<&Option<BTreeSet<usize>>> =
            idx.iter().zip(&options).map(|(&i, opts)| &opts[i]).collect();

        if assignment.iter().any(|a| a.is_some()) {
            if let Some(disp) = realize(&cblocks, &assignment, y, &rho, pin, restrict, dim)? {
                let cone = pattern_cone(&cblocks, &assignment, dim)?;
                if !seen_cones.contains(&cone) {
                    seen_cones.push(cone.clone());
                    branches.push(PatternBranch { cone, displacement: disp });
                }
            }
        }

        // Advance the odometer.
        if idx.is_empty() {
            break;
        }
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < options[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == idx.len() {
                return Ok(branches);
            }
        }
    }
    Ok(branches)
}

/// Regular normal cone shared by all points realising the assignment:
/// the polar of the sum of the in-blocks' tangent cones.
fn pattern_cone(
    cblocks: &[CBlock],
    assignment: &[&Option<BTreeSet<usize>>],
    dim: usize,
) -> Result<GenCone, PolyError> {
    let mut pool_rays = Vec::new();
    let mut pool_lin = Vec::new();
    for (cb, a) in cblocks.iter().zip(assignment) {
        let Some(active) = a else { continue };
        let mut rows = Vec::new();
        for &r in active {
            rows.push(HRow::le(cb.h.rows()[r].a.clone(), Rational::zero()));
        }
        for &e in &cb.eqs {
            rows.push(HRow::eqn(cb.h.rows()[e].a.clone(), Rational::zero()));
        }
        let t = hcone_generators(&HPolyhedron { dim, rows })?;
        pool_rays.extend(t.rays().to_vec());
        pool_lin.extend(t.lineality().to_vec());
    }
    let tangent_sum = GenCone::new(dim, pool_rays, pool_lin);
    hcone_generators(&polar_of_gencone(&tangent_sum))
}

/// Decide realisability of one assignment; returns a realising displacement
/// `y* - ȳ` or `None`.
///
/// Blocks assigned `Some(active)` must have exactly those rows tight
/// (remaining tight rows strictly slack); blocks assigned `None` must be
/// exited through one of their tight rows — an existential choice, so the
/// options are tried in order. Each choice is an exact margin LP over the
/// safe box: the pattern is realisable iff the maximal margin is positive.
fn realize(
    cblocks: &[CBlock],
    assignment: &[&Option<BTreeSet<usize>>],
    y: &[Rational],
    rho: &Rational,
    pin: Option<&[bool]>,
    restrict: Option<&HPolyhedron>,
    dim: usize,
) -> Result<Option<Vec<Rational>>, PolyError> {
    // Strictness requirements shared by all out-choices.
    let mut base_reqs: Vec<Req> = Vec::new();
    let mut out_blocks: Vec<usize> = Vec::new();
    for (bi, (cb, a)) in cblocks.iter().zip(assignment).enumerate() {
        match a {
            Some(active) => {
                for &e in &cb.eqs {
                    base_reqs.push(Req::Active(cb.h.rows()[e].a.clone(), cb.h.rows()[e].b.clone()));
                }
                for &r in &cb.through_le {
                    let row = &cb.h.rows()[r];
                    if active.contains(&r) {
                        base_reqs.push(Req::Active(row.a.clone(), row.b.clone()));
                    } else {
                        base_reqs.push(Req::StrictBelow(row.a.clone(), row.b.clone()));
                    }
                }
            }
            None => {
                if cb.out_options.is_empty() {
                    return Ok(None); // the block contains a neighbourhood
                }
                out_blocks.push(bi);
            }
        }
    }

    let has_strict = base_reqs.iter().any(|r| !matches!(r, Req::Active(_, _)));
    if out_blocks.is_empty() && !has_strict {
        // Base pattern: realised at ȳ itself.
        return Ok(Some(vec![Rational::zero(); dim]));
    }

    // Iterate over the product of out-options.
    let mut oidx = vec![0usize; out_blocks.len()];
    loop {
        let mut reqs = base_reqs.clone();
        for (k, &bi) in out_blocks.iter().enumerate() {
            let (row, upward) = cblocks[bi].out_options[oidx[k]];
            let r = &cblocks[bi].h.rows()[row];
            if upward {
                reqs.push(Req::StrictAbove(r.a.clone(), r.b.clone()));
            } else {
                reqs.push(Req::StrictBelow(r.a.clone(), r.b.clone()));
            }
        }
        if let Some(disp) = margin_lp(&reqs, y, rho, pin, restrict, dim)? {
            return Ok(Some(disp));
        }
        // Advance the out-odometer.
        if oidx.is_empty() {
            return Ok(None);
        }
        let mut k = 0;
        loop {
            oidx[k] += 1;
            if oidx[k] < cblocks[out_blocks[k]].out_options.len() {
                break;
            }
            oidx[k] = 0;
            k += 1;
            if k == oidx.len() {
                return Ok(None);
            }
        }
    }
}

/// Requirement rows for the margin LP.
#[derive(Clone)]
enum Req {
    /// `a^T y' = b`.
    Active(Vec<Rational>, Rational),
    /// `a^T y' <= b - m`.
    StrictBelow(Vec<Rational>, Rational),
    /// `a^T y' >= b + m`.
    StrictAbove(Vec<Rational>, Rational),
}

/// Maximise the margin `m` over points of the safe box meeting the
/// requirements; returns the displacement of the maximiser when `m* > 0`.
fn margin_lp(
    reqs: &[Req],
    y: &[Rational],
    rho: &Rational,
    pin: Option<&[bool]>,
    restrict: Option<&HPolyhedron>,
    dim: usize,
) -> Result<Option<Vec<Rational>>, PolyError> {
    // Variables: (y'_1, .., y'_dim, m).
    let nv = dim + 1;
    let mut rows: Vec<HRow> = Vec::new();
    let pad = |a: &[Rational], mcoef: Rational| -> Vec<Rational> {
        let mut v = a.to_vec();
        v.push(mcoef);
        v
    };
    for i in 0..dim {
        let mut e = vec![Rational::zero(); nv];
        e[i] = Rational::one();
        if pin.map_or(false, |p| p[i]) {
            rows.push(HRow::eqn(e, y[i].clone()));
            continue;
        }
        rows.push(HRow::le(e.clone(), &y[i] + rho));
        let mut ne = vec![Rational::zero(); nv];
        ne[i] = -Rational::one();
        rows.push(HRow::le(ne, rho - &y[i]));
    }
    if let Some(region) = restrict {
        // Plain (non-strict) admissibility: points may sit on the region
        // boundary, only the pattern rows demand a positive margin.
        for r in region.rows() {
            rows.push(HRow { a: pad(&r.a, Rational::zero()), b: r.b.clone(), eq: r.eq });
        }
    }
    for r in reqs {
        match r {
            Req::Active(a, b) => rows.push(HRow::eqn(pad(a, Rational::zero()), b.clone())),
            Req::StrictBelow(a, b) => rows.push(HRow::le(pad(a, Rational::one()), b.clone())),
            Req::StrictAbove(a, b) => {
                let na: Vec<Rational> = a.iter().map(|v| -v.clone()).collect();
                rows.push(HRow::le(pad(&na, Rational::one()), -b.clone()));
            }
        }
    }
    let mut obj = vec![Rational::zero(); nv];
    obj[dim] = Rational::one();
    let sys = HPolyhedron { dim: nv, rows };
    match lp_feasible(&sys, Some(&obj))? {
        LpOutcome::Optimal { point, value } => {
            if value.is_positive() {
                Ok(Some(vsub(&point[..dim], y)))
            } else {
                Ok(None)
            }
        }
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded { .. } => Err(PolyError::Unsupported(
            "margin LP cannot be unbounded over the safe box".to_string(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{HPolyhedron, HRow, PolyUnion, UnionMembership};
    use super::*;
    use crate::expr::{rat_int, rvec};

    fn le(a: &[i64], b: i64) -> HRow {
        HRow::le(rvec(a), rat_int(b))
    }

    fn eq(a: &[i64], b: i64) -> HRow {
        HRow::eqn(rvec(a), rat_int(b))
    }

    fn member(u: &ConeUnion, v: &[i64]) -> bool {
        matches!(u.membership(&rvec(v)).unwrap(), UnionMembership::Member { .. })
    }

    #[test]
    fn halfline_normal_cone() {
        // S = [0, inf) at 0: N = (-inf, 0].
        let h = HPolyhedron::new(1, vec![le(&[-1], 0)]).unwrap();
        let u = PolyUnion::single(h);
        let n = limiting_normal_cone(&u, &rvec(&[0])).unwrap();
        assert!(member(&n, &[-2]));
        assert!(!member(&n, &[1]));
    }

    #[test]
    fn interior_point_gives_zero_cone() {
        let h = HPolyhedron::new(1, vec![le(&[-1], 1)]).unwrap();
        let u = PolyUnion::single(h);
        let n = limiting_normal_cone(&u, &rvec(&[0])).unwrap();
        assert_eq!(n.branches().len(), 1);
        assert!(n.branches()[0].is_zero());
    }

    #[test]
    fn complementarity_cone_at_origin() {
        // S = (R+ x {0}) U ({0} x R+): the classic complementarity set.
        // N_S(0) = (R- x R-) U ({0} x R) U (R x {0}).
        let b1 = HPolyhedron::new(2, vec![le(&[-1, 0], 0), eq(&[0, 1], 0)]).unwrap();
        let b2 = HPolyhedron::new(2, vec![eq(&[1, 0], 0), le(&[0, -1], 0)]).unwrap();
        let u = PolyUnion::from_polyhedra(vec![b1, b2]).unwrap();
        let n = limiting_normal_cone(&u, &rvec(&[0, 0])).unwrap();
        assert!(member(&n, &[-1, -1]));
        assert!(member(&n, &[0, 5]));
        assert!(member(&n, &[0, -5]));
        assert!(member(&n, &[5, 0]));
        assert!(member(&n, &[-5, 0]));
        assert!(!member(&n, &[1, 1]));
        assert!(!member(&n, &[1, -1]));
        assert!(!member(&n, &[-1, 2]));
    }

    #[test]
    fn cross_normal_cone_is_the_cross() {
        // S = ({0} x R) U (R x {0}) at the origin: N_S(0) = S.
        let b1 = HPolyhedron::new(2, vec![eq(&[1, 0], 0)]).unwrap();
        let b2 = HPolyhedron::new(2, vec![eq(&[0, 1], 0)]).unwrap();
        let u = PolyUnion::from_polyhedra(vec![b1, b2]).unwrap();
        let n = limiting_normal_cone(&u, &rvec(&[0, 0])).unwrap();
        assert!(member(&n, &[3, 0]));
        assert!(member(&n, &[-3, 0]));
        assert!(member(&n, &[0, 3]));
        assert!(member(&n, &[0, -3]));
        assert!(!member(&n, &[1, 1]));
        assert!(!member(&n, &[-2, 1]));
    }

    #[test]
    fn limiting_cone_is_robust_to_far_blocks() {
        // A second block far from the base point must not affect the cone.
        let near = HPolyhedron::new(1, vec![le(&[-1], 0)]).unwrap();
        let far = HPolyhedron::new(
            1,
            vec![le(&[-1], -5), le(&[1], 6)], // [5, 6]
        )
        .unwrap();
        let u = PolyUnion::from_polyhedra(vec![near.clone(), far]).unwrap();
        let n_union = limiting_normal_cone(&u, &rvec(&[0])).unwrap();
        let n_single = limiting_normal_cone(&PolyUnion::single(near), &rvec(&[0])).unwrap();
        assert_eq!(n_union, n_single);
    }

    #[test]
    fn base_pattern_reported_first_with_zero_displacement() {
        let h = HPolyhedron::new(2, vec![le(&[1, 0], 0), le(&[0, 1], 0)]).unwrap();
        let u = PolyUnion::single(h);
        let branches = limiting_normal_cone_detailed(&u, &rvec(&[0, 0]), None, None).unwrap();
        assert!(!branches.is_empty());
        assert!(branches[0].displacement.iter().all(|d| d.is_zero()));
        // Base cone: nonnegative quadrant (both rows active).
        assert!(branches[0].cone.contains(&rvec(&[1, 1])).unwrap());
    }

    #[test]
    fn region_restriction_filters_patterns() {
        // S = R- in R^1 at 0. Unrestricted, both the boundary pattern
        // (N = R+) and the interior pattern (N = {0}) are realisable; when
        // realising points are confined to [0, inf) only the boundary point
        // 0 remains, so the interior pattern disappears.
        let h = HPolyhedron::new(1, vec![le(&[1], 0)]).unwrap();
        let u = PolyUnion::single(h);
        let free = limiting_normal_cone_detailed(&u, &rvec(&[0]), None, None).unwrap();
        assert_eq!(free.len(), 2);
        let region = HPolyhedron::new(1, vec![le(&[-1], 0)]).unwrap();
        let confined =
            limiting_normal_cone_detailed(&u, &rvec(&[0]), None, Some(&region)).unwrap();
        assert_eq!(confined.len(), 1);
        assert!(confined[0].cone.contains(&rvec(&[1])).unwrap());
        // A region missing the base point is rejected.
        let off = HPolyhedron::new(1, vec![le(&[-1], -1)]).unwrap();
        assert!(limiting_normal_cone_detailed(&u, &rvec(&[0]), None, Some(&off)).is_err());
    }

    #[test]
    fn pinned_enumeration_restricts_realisations() {
        // S = R x R- (half-plane): at the origin with the first coordinate
        // pinned, the off-boundary pattern is realised by y2 < 0 only.
        let h = HPolyhedron::new(2, vec![le(&[0, 1], 0)]).unwrap();
        let u = PolyUnion::single(h);
        let pin = vec![true, false];
        let branches =
            limiting_normal_cone_detailed(&u, &rvec(&[0, 0]), Some(&pin), None).unwrap();
        for b in &branches {
            assert!(b.displacement[0].is_zero(), "pinned coordinate moved");
        }
        // Both patterns (boundary, interior) are realisable on the slice.
        assert_eq!(branches.len(), 2);
    }
}
