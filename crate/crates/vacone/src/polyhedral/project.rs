//! Nearest-point projection onto polyhedral unions.
//!
//! Polyhedral blocks are projected *exactly*: the minimiser of
//! `|y - z|^2` over `{A y <= b}` satisfies a KKT system with a linearly
//! independent active set, so enumerating independent active sets and
//! checking primal/dual feasibility of each exact KKT solution finds the
//! true projection (Caratheodory guarantees a regular optimal subset
//! exists). Smooth convex blocks are projected numerically by a penalised
//! gradient descent with a feasibility pull-back toward the Slater point;
//! their distances are reported as floats only.

use super::{lp_feasible, Block, HPolyhedron, LpOutcome, PolyError, PolyUnion, SmoothConvexBlock};
use crate::expr::{rat_to_f64, Rational};
use crate::linalg::{norm2_sq, rank, rref, solve_consistent, to_f64_vec, vsub};
use num::{Signed, Zero};

/// Result of projecting a point onto a union of blocks.
#[derive(Debug, Clone)]
pub struct Projection {
    /// Nearest point found (floating-point view).
    pub nearest: Vec<f64>,
    /// Euclidean distance to the nearest point (floating-point view).
    pub dist: f64,
    /// Index of the winning block; ties go to the lowest index.
    pub branch: usize,
    /// Exact nearest point and *squared* distance, available when the
    /// winning block is polyhedral.
    pub exact: Option<(Vec<Rational>, Rational)>,
}

/// Exact projection of `z` onto a convex polyhedron.
///
/// Returns `None` when the polyhedron is empty, otherwise the unique
/// nearest point together with the exact squared distance.
pub fn project_polyhedron_exact(
    h: &HPolyhedron,
    z: &[Rational],
) -> Result<Option<(Vec<Rational>, Rational)>, PolyError> {
    if z.len() != h.dim() {
        return Err(PolyError::DimensionMismatch(
            "projection point has wrong dimension".to_string(),
        ));
    }
    if h.contains(z) {
        return Ok(Some((z.to_vec(), Rational::zero())));
    }
    if matches!(lp_feasible(h, None)?, LpOutcome::Infeasible) {
        return Ok(None);
    }

    // Reduce the equality rows to an independent system once.
    let eq_rows: Vec<usize> = (0..h.rows().len()).filter(|&i| h.rows()[i].eq).collect();
    let mut eq_aug: Vec<Vec<Rational>> = eq_rows
        .iter()
        .map(|&i| {
            let mut r = h.rows()[i].a.clone();
            r.push(h.rows()[i].b.clone());
            r
        })
        .collect();
    let eq_pivots = rref(&mut eq_aug);
    // Feasibility was established above, so the equality system is
    // consistent; keep only its pivot rows.
    let eq_basis: Vec<(Vec<Rational>, Rational)> = eq_aug
        .iter()
        .take(eq_pivots.len())
        .map(|r| (r[..h.dim()].to_vec(), r[h.dim()].clone()))
        .collect();

    let le_rows: Vec<usize> = (0..h.rows().len()).filter(|&i| !h.rows()[i].eq).collect();
    let n = h.dim();
    let max_extra = n.saturating_sub(eq_basis.len());

    let mut best: Option<(Vec<Rational>, Rational)> = None;
    for subset in subsets_up_to(&le_rows, max_extra) {
        // Active matrix: independent equality basis + chosen inequalities.
        let mut act: Vec<Vec<Rational>> =
            eq_basis.iter().map(|(a, _)| a.clone()).collect();
        let mut act_b: Vec<Rational> = eq_basis.iter().map(|(_, b)| b.clone()).collect();
        for &i in &subset {
            act.push(h.rows()[i].a.clone());
            act_b.push(h.rows()[i].b.clone());
        }
        if rank(&act) < act.len() {
            continue; // dependent subsets are covered by smaller ones
        }
        let k = act.len();
        // KKT system in (y, mu): 2(y - z) + act^T mu = 0, act y = act_b.
        let mut sys: Vec<Vec<Rational>> = Vec::with_capacity(n + k);
        let mut rhs: Vec<Rational> = Vec::with_capacity(n + k);
        let two = Rational::from_integer(2.into());
        for i in 0..n {
            let mut row = vec![Rational::zero(); n + k];
            row[i] = two.clone();
            for (j, a) in act.iter().enumerate() {
                row[n + j] = a[i].clone();
            }
            sys.push(row);
            rhs.push(&two * &z[i]);
        }
        for (a, b) in act.iter().zip(&act_b) {
            let mut row = vec![Rational::zero(); n + k];
            row[..n].clone_from_slice(a);
            sys.push(row);
            rhs.push(b.clone());
        }
        let Some(sol) = solve_consistent(&sys, &rhs) else { continue };
        let y = &sol[..n];
        // Dual feasibility only binds the inequality multipliers.
        let mu_ineq = &sol[n + eq_basis.len()..];
        if mu_ineq.iter().any(Rational::is_negative) {
            continue;
        }
        if !h.contains(y) {
            continue;
        }
        let d2 = norm2_sq(&vsub(y, z));
        let better = match &best {
            None => true,
            Some((_, bd2)) => d2 < *bd2,
        };
        if better {
            best = Some((y.to_vec(), d2));
        }
    }
    match best {
        Some(b) => Ok(Some(b)),
        // Feasible polyhedra always admit a KKT-certified projection.
        None => Err(PolyError::Unsupported(
            "no KKT-certified projection found on a feasible polyhedron".to_string(),
        )),
    }
}

/// All subsets of `items` of size at most `max_size` (including empty).
fn subsets_up_to(items: &[usize], max_size: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &it in items {
        let mut extended = Vec::new();
        for s in &out {
            if s.len() < max_size {
                let mut t = s.clone();
                t.push(it);
                extended.push(t);
            }
        }
        out.extend(extended);
    }
    out
}

/// Numeric projection onto a smooth convex block.
///
/// Minimises `|y - z|^2 + rho * sum_j max(g_j(y), 0)^2` by gradient descent
/// with backtracking for an increasing penalty ladder, then pulls the
/// iterate back to feasibility along the segment toward the Slater point.
pub(crate) fn project_smooth_numeric(blk: &SmoothConvexBlock, z: &[f64]) -> (Vec<f64>, f64) {
    let dim = blk.dim();
    let gs = blk.inequalities();
    let feasible = |y: &[f64]| gs.iter().all(|g| g.eval_f64(y) <= 1e-14);
    if feasible(z) {
        return (z.to_vec(), 0.0);
    }
    let slater = to_f64_vec(blk.slater());
    let mut y = slater.clone();
    for rho in [1e2, 1e4, 1e6, 1e8, 1e10, 1e12] {
        let grad = |y: &[f64]| -> Vec<f64> {
            let mut g = vec![0.0; dim];
            for i in 0..dim {
                g[i] = 2.0 * (y[i] - z[i]);
            }
            for gj in gs {
                let v = gj.eval_f64(y);
                if v > 0.0 {
                    for i in 0..dim {
                        g[i] += 2.0 * rho * v * gj.differentiate(i).eval_f64(y);
                    }
                }
            }
            g
        };
        let objective = |y: &[f64]| -> f64 {
            let mut o = y.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            for gj in gs {
                let v = gj.eval_f64(y);
                if v > 0.0 {
                    o += rho * v * v;
                }
            }
            o
        };
        for _ in 0..400 {
            let g = grad(&y);
            let gn: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gn < 1e-12 {
                break;
            }
            let mut step = 1.0 / (1.0 + rho.sqrt());
            let base = objective(&y);
            let mut improved = false;
            for _ in 0..60 {
                let trial: Vec<f64> =
                    y.iter().zip(&g).map(|(yi, gi)| yi - step * gi).collect();
                if objective(&trial) <= base - 1e-4 * step * gn * gn {
                    y = trial;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
    }
    // Pull back to the feasible side along the segment to the Slater point.
    if !feasible(&y) {
        let mut lo = 0.0f64; // y side (infeasible)
        let mut hi = 1.0f64; // slater side (feasible)
        let blend = |t: f64, y: &[f64]| -> Vec<f64> {
            y.iter().zip(&slater).map(|(a, s)| a * (1.0 - t) + s * t).collect()
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if feasible(&blend(mid, &y)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        y = blend(hi, &y);
    }
    let dist = y.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    (y, dist)
}

/// Project `z` onto a union of blocks; ties between equidistant blocks go
/// to the lowest block index.
///
/// When every block is polyhedral the comparison between blocks is exact
/// and the winner's exact data is returned in [`Projection::exact`]; smooth
/// blocks are compared through their floating-point distances.
pub fn project(s: &PolyUnion, z: &[Rational]) -> Result<Projection, PolyError> {
    if z.len() != s.dim() {
        return Err(PolyError::DimensionMismatch(
            "projection point has wrong dimension".to_string(),
        ));
    }
    let zf = to_f64_vec(z);
    let mut best: Option<Projection> = None;
    for (bi, block) in s.blocks().iter().enumerate() {
        let candidate = match block {
            Block::Poly(h) => match project_polyhedron_exact(h, z)? {
                None => continue,
                Some((y, d2)) => Projection {
                    nearest: to_f64_vec(&y),
                    dist: rat_to_f64(&d2).sqrt(),
                    branch: bi,
                    exact: Some((y, d2)),
                },
            },
            Block::Smooth(blk) => {
                let (y, d) = project_smooth_numeric(blk, &zf);
                Projection { nearest: y, dist: d, branch: bi, exact: None }
            }
        };
        let wins = match &best {
            None => true,
            Some(b) => match (&b.exact, &candidate.exact) {
                (Some((_, bd2)), Some((_, cd2))) => cd2 < bd2,
                _ => candidate.dist < b.dist,
            },
        };
        if wins {
            best = Some(candidate);
        }
    }
    best.ok_or_else(|| PolyError::EmptySet("all blocks of the union are empty".to_string()))
}

/// Exact squared distance to a fully polyhedral union (`None` when some
/// block is smooth and exactness is unavailable).
pub fn dist_sq_exact(s: &PolyUnion, z: &[Rational]) -> Result<Option<Rational>, PolyError> {
    if !s.is_polyhedral() {
        return Ok(None);
    }
    let mut best: Option<Rational> = None;
    for block in s.blocks() {
        let Block::Poly(h) = block else { unreachable!() };
        if let Some((_, d2)) = project_polyhedron_exact(h, z)? {
            if best.as_ref().map_or(true, |b| d2 < *b) {
                best = Some(d2);
            }
        }
    }
    best.map(Some)
        .ok_or_else(|| PolyError::EmptySet("all blocks of the union are empty".to_string()))
}
