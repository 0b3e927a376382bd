//! Double description: exact conversion of an H-cone to generators.
//!
//! Incremental Motzkin construction. The state is a pair (lineality basis,
//! ray list); each constraint is inserted either by pivoting a lineality
//! generator (when some basis vector leaves the constraint's kernel) or by
//! the classic ray-splitting step with the combinatorial adjacency test on
//! tight sets. All arithmetic is rational, and the final ray list is pruned
//! to extreme rays by exact membership LPs.

use super::{GenCone, HPolyhedron, PolyError};
use crate::expr::Rational;
use crate::linalg::{dot, is_zero_vec, vadd, vscale};
use num::{Signed, Zero};
use std::collections::BTreeSet;

#[derive(Debug, Clone)]
struct Ray {
    v: Vec<Rational>,
    /// Indices of already-processed constraints tight at `v`.
    tight: BTreeSet<usize>,
}

/// Generators of the cone `{ y : a_i^T y <= 0, e_j^T y = 0 }`.
///
/// The input must be homogeneous (`is_cone`); the output is a canonicalized
/// [`GenCone`] with extreme rays only.
pub fn hcone_generators(h: &HPolyhedron) -> Result<GenCone, PolyError> {
    if !h.is_cone() {
        return Err(PolyError::Unsupported(
            "hcone_generators requires homogeneous right-hand sides".to_string(),
        ));
    }
    let dim = h.dim;
    let mut lineality: Vec<Vec<Rational>> = (0..dim)
        .map(|i| {
            let mut e = vec![Rational::zero(); dim];
            e[i] = Rational::from_integer(1.into());
            e
        })
        .collect();
    let mut rays: Vec<Ray> = Vec::new();

    for (idx, row) in h.rows.iter().enumerate() {
        let a = &row.a;
        if is_zero_vec(a) {
            continue;
        }
        let pivot = lineality.iter().position(|l| !dot(a, l).is_zero());
        if let Some(pi) = pivot {
            // Normalise the pivot so a^T l0 = -1 (it points into the
            // feasible halfspace), then project everything else into the
            // kernel of a. Adding multiples of l0 preserves tightness for
            // all previously processed rows because l0 lies in their kernels.
            let l0 = lineality.remove(pi);
            let p = dot(a, &l0);
            let l0 = vscale(&(-p.recip()), &l0);
            for l in lineality.iter_mut() {
                let c = dot(a, l);
                if !c.is_zero() {
                    *l = vadd(l, &vscale(&c, &l0));
                }
            }
            for r in rays.iter_mut() {
                let c = dot(a, &r.v);
                if !c.is_zero() {
                    r.v = vadd(&r.v, &vscale(&c, &l0));
                }
                r.tight.insert(idx);
            }
            if !row.eq {
                // The pivot survives as the one generator off the hyperplane.
                let tight: BTreeSet<usize> = (0..idx).collect();
                rays.push(Ray { v: l0, tight });
            }
            continue;
        }

        // All lineality is in the kernel; classic splitting step on rays.
        let products: Vec<Rational> = rays.iter().map(|r| dot(a, &r.v)).collect();
        let pos: Vec<usize> =
            (0..rays.len()).filter(|&i| products[i].is_positive()).collect();
        let neg: Vec<usize> =
            (0..rays.len()).filter(|&i| products[i].is_negative()).collect();
        if pos.is_empty() && (!row.eq || neg.is_empty()) {
            for (r, p) in rays.iter_mut().zip(&products) {
                if p.is_zero() {
                    r.tight.insert(idx);
                }
            }
            continue;
        }

        let mut new_rays: Vec<Ray> = Vec::new();
        for (i, r) in rays.iter().enumerate() {
            let keep = if row.eq {
                products[i].is_zero()
            } else {
                !products[i].is_positive()
            };
            if keep {
                let mut nr = r.clone();
                if products[i].is_zero() {
                    nr.tight.insert(idx);
                }
                new_rays.push(nr);
            }
        }
        for &ip in &pos {
            for &im in &neg {
                if !adjacent(&rays, ip, im) {
                    continue;
                }
                // Nonnegative combination lying on the hyperplane:
                // v = p_+ * r_- + (-p_-) * r_+.
                let v = vadd(
                    &vscale(&products[ip], &rays[im].v),
                    &vscale(&(-products[im].clone()), &rays[ip].v),
                );
                if is_zero_vec(&v) {
                    continue;
                }
                let mut tight: BTreeSet<usize> =
                    rays[ip].tight.intersection(&rays[im].tight).cloned().collect();
                tight.insert(idx);
                new_rays.push(Ray { v, tight });
            }
        }
        dedup_rays(&mut new_rays);
        rays = new_rays;
    }

    let mut cone = GenCone::new(dim, rays.into_iter().map(|r| r.v).collect(), lineality);
    prune_redundant_rays(&mut cone)?;
    Ok(cone)
}

/// Combinatorial adjacency: rays `i` and `j` are adjacent iff no third ray's
/// tight set contains the intersection of theirs.
fn adjacent(rays: &[Ray], i: usize, j: usize) -> bool {
    let common: BTreeSet<usize> = rays[i].tight.intersection(&rays[j].tight).cloned().collect();
    !rays.iter().enumerate().any(|(k, r)| {
        k != i && k != j && common.iter().all(|c| r.tight.contains(c))
    })
}

fn dedup_rays(rays: &mut Vec<Ray>) {
    let mut seen: Vec<Vec<Rational>> = Vec::new();
    rays.retain(|r| {
        let lead = r.v.iter().find(|c| !c.is_zero()).map(|c| c.abs());
        let Some(lead) = lead else { return false };
        let canon: Vec<Rational> = r.v.iter().map(|c| c / &lead).collect();
        if seen.contains(&canon) {
            false
        } else {
            seen.push(canon);
            true
        }
    });
}

/// Drop rays expressible by the remaining generators (exact LP membership).
fn prune_redundant_rays(cone: &mut GenCone) -> Result<(), PolyError> {
    let mut rays = cone.rays().to_vec();
    let lineality = cone.lineality().to_vec();
    let dim = cone.dim();
    let mut i = 0;
    while i < rays.len() {
        let mut rest = rays.clone();
        let candidate = rest.remove(i);
        let sub = GenCone::new(dim, rest.clone(), lineality.clone());
        if sub.contains(&candidate)? {
            rays.remove(i);
        } else {
            i += 1;
        }
    }
    *cone = GenCone::new(dim, rays, lineality);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{polar_of_gencone, HPolyhedron, HRow};
    use super::*;
    use crate::expr::{rat_int, rvec};

    fn le(a: &[i64]) -> HRow {
        HRow::le(rvec(a), rat_int(0))
    }

    fn eq(a: &[i64]) -> HRow {
        HRow::eqn(rvec(a), rat_int(0))
    }

    /// Exhaustive small-grid equivalence between the H-form and the
    /// generator form.
    fn assert_same_set(h: &HPolyhedron, c: &GenCone) {
        let dim = h.dim();
        let mut idx = vec![0usize; dim];
        let vals: Vec<i64> = (-3..=3).collect();
        loop {
            let v: Vec<Rational> = idx.iter().map(|&i| rat_int(vals[i])).collect();
            assert_eq!(
                h.contains(&v),
                c.contains(&v).unwrap(),
                "disagreement at {v:?} for cone {c}"
            );
            let mut k = 0;
            loop {
                if k == dim {
                    return;
                }
                idx[k] += 1;
                if idx[k] < vals.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    #[test]
    fn whole_space_and_zero_cone() {
        let h = HPolyhedron::whole_space(2);
        let c = hcone_generators(&h).unwrap();
        assert_eq!(c.lineality().len(), 2);
        let h0 = HPolyhedron::new(1, vec![le(&[1]), le(&[-1])]).unwrap();
        let c0 = hcone_generators(&h0).unwrap();
        assert!(c0.is_zero());
    }

    #[test]
    fn orthant_generators() {
        let h = HPolyhedron::nonpos_orthant(2);
        let c = hcone_generators(&h).unwrap();
        assert_eq!(c.rays().len(), 2);
        assert!(c.lineality().is_empty());
        assert_same_set(&h, &c);
    }

    #[test]
    fn hyperplane_gives_lineality() {
        let h = HPolyhedron::new(2, vec![eq(&[1, 0])]).unwrap();
        let c = hcone_generators(&h).unwrap();
        assert!(c.rays().is_empty());
        assert_eq!(c.lineality().len(), 1);
        assert_same_set(&h, &c);
    }

    #[test]
    fn wedge_and_halfspace() {
        let wedge = HPolyhedron::new(2, vec![le(&[1, 1]), le(&[1, -1])]).unwrap();
        let cw = hcone_generators(&wedge).unwrap();
        assert_same_set(&wedge, &cw);
        let half = HPolyhedron::new(2, vec![le(&[1, 0])]).unwrap();
        let ch = hcone_generators(&half).unwrap();
        assert_same_set(&half, &ch);
        // A halfspace is one ray plus one lineality direction.
        assert_eq!(ch.rays().len(), 1);
        assert_eq!(ch.lineality().len(), 1);
    }

    #[test]
    fn three_dimensional_pointed_cone() {
        let h = HPolyhedron::new(
            3,
            vec![le(&[1, 1, 1]), le(&[1, -1, 0]), le(&[-1, 0, -2]), le(&[0, 0, -1])],
        )
        .unwrap();
        let c = hcone_generators(&h).unwrap();
        assert_same_set(&h, &c);
    }

    #[test]
    fn polar_involution_on_h_cones() {
        // (C°)° = C for closed convex cones: generators of h, polar in
        // H-form, generators again -> same set as polar of original gens.
        let h = HPolyhedron::new(2, vec![le(&[2, 1]), le(&[-1, 3])]).unwrap();
        let c = hcone_generators(&h).unwrap();
        let polar_h = polar_of_gencone(&c);
        let polar_gens = hcone_generators(&polar_h).unwrap();
        let back_h = polar_of_gencone(&polar_gens);
        let back = hcone_generators(&back_h).unwrap();
        assert_same_set(&h, &back);
    }

    #[test]
    fn redundant_rows_do_not_add_generators() {
        let h = HPolyhedron::new(2, vec![le(&[1, 0]), le(&[2, 0]), le(&[0, 1])]).unwrap();
        let c = hcone_generators(&h).unwrap();
        assert_eq!(c.rays().len(), 2);
        assert_same_set(&h, &c);
    }
}
