//! Exact two-phase primal simplex over `BigRational`.
//!
//! Free variables are split as `x = u - w` with `u, w >= 0`, inequality rows
//! get slack variables, and phase 1 minimises a sum of artificial variables.
//! Bland's rule (smallest-index entering and leaving variable) guarantees
//! termination; there are no tolerances anywhere, so `Infeasible`,
//! `Optimal`, and `Unbounded` are exact statements about the input data.

use super::{HPolyhedron, PolyError};
use crate::expr::Rational;
use crate::linalg::dot;
use num::{One, Signed, Zero};

/// Exact outcome of a linear program `maximize c^T x  s.t.  x ∈ H`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LpOutcome {
    /// The constraint system has no solution.
    Infeasible,
    /// An optimal vertex `point` with objective `value` (for pure
    /// feasibility queries, `value` is zero).
    Optimal { point: Vec<Rational>, value: Rational },
    /// The objective is unbounded above along `ray` (a recession direction
    /// of `H` with positive objective value).
    Unbounded { ray: Vec<Rational> },
}

/// Solve `maximize objective^T x over x in h` exactly.
///
/// With `objective = None` this is a pure feasibility query: the result is
/// either `Infeasible` or `Optimal` with an arbitrary feasible point and
/// value 0. The polyhedron may use free variables of any sign; rows may mix
/// inequalities and equations.
pub fn lp_feasible(
    h: &HPolyhedron,
    objective: Option<&[Rational]>,
) -> Result<LpOutcome, PolyError> {
    let n = h.dim;
    if let Some(obj) = objective {
        if obj.len() != n {
            return Err(PolyError::DimensionMismatch(
                "objective length differs from ambient dimension".to_string(),
            ));
        }
    }
    if n == 0 {
        let feasible = h.rows.iter().all(|r| {
            if r.eq {
                r.b.is_zero()
            } else {
                !r.b.is_negative()
            }
        });
        return Ok(if feasible {
            LpOutcome::Optimal { point: vec![], value: Rational::zero() }
        } else {
            LpOutcome::Infeasible
        });
    }

    let m = h.rows.len();
    let n_split = 2 * n;
    let n_slack = h.rows.iter().filter(|r| !r.eq).count();
    let n_struct = n_split + n_slack;
    let n_total = n_struct + m;

    // Build the standard-form tableau rows: a^T x (+ slack) = b, rhs >= 0.
    let mut a: Vec<Vec<Rational>> = Vec::with_capacity(m);
    let mut rhs: Vec<Rational> = Vec::with_capacity(m);
    let mut slack_idx = 0usize;
    for row in &h.rows {
        let mut t = vec![Rational::zero(); n_total];
        for (i, ai) in row.a.iter().enumerate() {
            t[2 * i] = ai.clone();
            t[2 * i + 1] = -ai.clone();
        }
        if !row.eq {
            t[n_split + slack_idx] = Rational::one();
            slack_idx += 1;
        }
        let mut b = row.b.clone();
        if b.is_negative() {
            for v in t.iter_mut() {
                *v = -v.clone();
            }
            b = -b;
        }
        a.push(t);
        rhs.push(b);
    }
    // Artificial columns: identity, initial basis.
    let mut basis = Vec::with_capacity(m);
    for (i, t) in a.iter_mut().enumerate() {
        t[n_struct + i] = Rational::one();
        basis.push(n_struct + i);
    }

    let mut tab = Tableau { a, rhs, basis, n_total };

    // Phase 1: minimise the sum of artificials.
    let mut cost1 = vec![Rational::zero(); n_total];
    for c in cost1.iter_mut().skip(n_struct) {
        *c = Rational::one();
    }
    match tab.run_simplex(&cost1, n_total)? {
        SimplexStep::Optimal => {}
        SimplexStep::Unbounded { .. } => {
            return Err(PolyError::Unsupported(
                "phase-1 objective cannot be unbounded".to_string(),
            ))
        }
    }
    let phase1_value: Rational = tab
        .basis
        .iter()
        .zip(&tab.rhs)
        .filter(|(b, _)| **b >= n_struct)
        .map(|(_, r)| r.clone())
        .sum();
    if !phase1_value.is_zero() {
        return Ok(LpOutcome::Infeasible);
    }
    tab.purge_artificials(n_struct);

    // Pure feasibility query: read the point off the phase-1 basis.
    let read_point = |tab: &Tableau| -> Vec<Rational> {
        let mut std_vals = vec![Rational::zero(); n_struct];
        for (i, &b) in tab.basis.iter().enumerate() {
            if b < n_struct {
                std_vals[b] = tab.rhs[i].clone();
            }
        }
        (0..n)
            .map(|i| std_vals[2 * i].clone() - std_vals[2 * i + 1].clone())
            .collect()
    };
    let Some(obj) = objective else {
        return Ok(LpOutcome::Optimal { point: read_point(&tab), value: Rational::zero() });
    };

    // Phase 2: maximise obj^T x == minimise (-obj)^T (u - w).
    let mut cost2 = vec![Rational::zero(); n_total];
    for i in 0..n {
        cost2[2 * i] = -obj[i].clone();
        cost2[2 * i + 1] = obj[i].clone();
    }
    match tab.run_simplex(&cost2, n_struct)? {
        SimplexStep::Optimal => {
            let point = read_point(&tab);
            let value = dot(obj, &point);
            Ok(LpOutcome::Optimal { point, value })
        }
        SimplexStep::Unbounded { col } => {
            // Increasing the entering variable keeps feasibility and grows
            // the objective without bound; read the recession direction.
            let mut d = vec![Rational::zero(); n_struct];
            d[col] = Rational::one();
            for (i, &b) in tab.basis.iter().enumerate() {
                if b < n_struct {
                    d[b] = -tab.a[i][col].clone();
                }
            }
            let ray: Vec<Rational> =
                (0..n).map(|i| d[2 * i].clone() - d[2 * i + 1].clone()).collect();
            Ok(LpOutcome::Unbounded { ray })
        }
    }
}

enum SimplexStep {
    Optimal,
    Unbounded { col: usize },
}

struct Tableau {
    a: Vec<Vec<Rational>>,
    rhs: Vec<Rational>,
    basis: Vec<usize>,
    n_total: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let inv = self.a[row][col].recip();
        for v in self.a[row].iter_mut() {
            *v = &*v * &inv;
        }
        self.rhs[row] = &self.rhs[row] * &inv;
        for i in 0..self.a.len() {
            if i == row || self.a[i][col].is_zero() {
                continue;
            }
            let f = self.a[i][col].clone();
            for j in 0..self.n_total {
                let upd = &self.a[i][j] - &f * &self.a[row][j];
                self.a[i][j] = upd;
            }
            let upd = &self.rhs[i] - &f * &self.rhs[row];
            self.rhs[i] = upd;
        }
        self.basis[row] = col;
    }

    /// Bland-rule simplex minimising `cost` over columns `< allowed_cols`.
    fn run_simplex(
        &mut self,
        cost: &[Rational],
        allowed_cols: usize,
    ) -> Result<SimplexStep, PolyError> {
        // Generous cap: Bland's rule precludes cycling, so this only guards
        // against implementation bugs.
        for _ in 0..100_000 {
            // Entering column: smallest index with negative reduced cost.
            let mut entering = None;
            'cols: for j in 0..allowed_cols {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut red = cost[j].clone();
                for (i, &b) in self.basis.iter().enumerate() {
                    if !cost[b].is_zero() && !self.a[i][j].is_zero() {
                        red -= &cost[b] * &self.a[i][j];
                    }
                }
                if red.is_negative() {
                    entering = Some(j);
                    break 'cols;
                }
            }
            let Some(col) = entering else {
                return Ok(SimplexStep::Optimal);
            };
            // Leaving row: minimum ratio, ties by smallest basic index.
            let mut best: Option<(Rational, usize, usize)> = None; // (ratio, basic, row)
            for i in 0..self.a.len() {
                if self.a[i][col].is_positive() {
                    let ratio = &self.rhs[i] / &self.a[i][col];
                    let key = (ratio, self.basis[i], i);
                    match &best {
                        None => best = Some(key),
                        Some((r, b, _)) => {
                            if key.0 < *r || (key.0 == *r && key.1 < *b) {
                                best = Some(key);
                            }
                        }
                    }
                }
            }
            match best {
                Some((_, _, row)) => self.pivot(row, col),
                None => return Ok(SimplexStep::Unbounded { col }),
            }
        }
        Err(PolyError::Unsupported("simplex iteration limit exceeded".to_string()))
    }

    /// After a zero-value phase 1: pivot artificials out of the basis where
    /// possible, drop redundant rows where not, and bar artificial columns.
    fn purge_artificials(&mut self, n_struct: usize) {
        let mut row = 0;
        while row < self.a.len() {
            if self.basis[row] >= n_struct {
                let pivot_col = (0..n_struct).find(|&j| !self.a[row][j].is_zero());
                match pivot_col {
                    Some(c) => self.pivot(row, c),
                    None => {
                        // Redundant constraint row.
                        self.a.remove(row);
                        self.rhs.remove(row);
                        self.basis.remove(row);
                        continue;
                    }
                }
            }
            row += 1;
        }
        // Bar artificial columns from re-entering.
        for t in self.a.iter_mut() {
            t.truncate(n_struct);
        }
        self.n_total = n_struct;
    }
}

#[cfg(test)]
mod tests {
    use super::super::{HPolyhedron, HRow};
    use super::*;
    use crate::expr::{rat, rat_int, rvec};

    fn le(a: &[i64], b: i64) -> HRow {
        HRow::le(rvec(a), rat_int(b))
    }

    fn eq(a: &[i64], b: i64) -> HRow {
        HRow::eqn(rvec(a), rat_int(b))
    }

    #[test]
    fn optimises_over_a_triangle() {
        // x, y >= 0, x + y <= 3; maximize x + 2y -> (0, 3), value 6.
        let h = HPolyhedron::new(
            2,
            vec![le(&[-1, 0], 0), le(&[0, -1], 0), le(&[1, 1], 3)],
        )
        .unwrap();
        match lp_feasible(&h, Some(&rvec(&[1, 2]))).unwrap() {
            LpOutcome::Optimal { point, value } => {
                assert_eq!(value, rat_int(6));
                assert_eq!(point, rvec(&[0, 3]));
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn detects_infeasibility() {
        let h = HPolyhedron::new(1, vec![le(&[1], -1), le(&[-1], 0)]).unwrap();
        assert_eq!(lp_feasible(&h, None).unwrap(), LpOutcome::Infeasible);
    }

    #[test]
    fn detects_unboundedness_with_valid_ray() {
        // x free, y <= 0; maximize x - y is unbounded.
        let h = HPolyhedron::new(2, vec![le(&[0, 1], 0)]).unwrap();
        match lp_feasible(&h, Some(&rvec(&[1, -1]))).unwrap() {
            LpOutcome::Unbounded { ray } => {
                // Ray must satisfy the homogeneous system and improve the
                // objective.
                assert!(!dot(&rvec(&[1, -1]), &ray).is_negative());
                assert!(dot(&rvec(&[1, -1]), &ray).is_positive());
                assert!(!dot(&rvec(&[0, 1]), &ray).is_positive());
            }
            other => panic!("expected unbounded, got {other:?}"),
        }
    }

    #[test]
    fn handles_equalities_and_fractions() {
        // 2x + y = 1, x - y = 0 -> x = y = 1/3.
        let h = HPolyhedron::new(2, vec![eq(&[2, 1], 1), eq(&[1, -1], 0)]).unwrap();
        match lp_feasible(&h, Some(&rvec(&[1, 0]))).unwrap() {
            LpOutcome::Optimal { point, value } => {
                assert_eq!(point, vec![rat(1, 3), rat(1, 3)]);
                assert_eq!(value, rat(1, 3));
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn feasibility_query_returns_member_point() {
        let h = HPolyhedron::new(
            2,
            vec![le(&[1, 0], -2), le(&[0, 1], 5), eq(&[1, 1], 0)],
        )
        .unwrap();
        match lp_feasible(&h, None).unwrap() {
            LpOutcome::Optimal { point, .. } => assert!(h.contains(&point)),
            other => panic!("expected feasible point, got {other:?}"),
        }
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        let h = HPolyhedron::new(
            2,
            vec![eq(&[1, 1], 2), eq(&[2, 2], 4), le(&[1, 0], 1)],
        )
        .unwrap();
        match lp_feasible(&h, Some(&rvec(&[1, 0]))).unwrap() {
            LpOutcome::Optimal { point, value } => {
                assert!(h.contains(&point));
                assert_eq!(value, rat_int(1));
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_vertices_terminate() {
        // Many redundant active constraints at the optimum; Bland's rule
        // must still terminate.
        let h = HPolyhedron::new(
            2,
            vec![
                le(&[-1, 0], 0),
                le(&[0, -1], 0),
                le(&[1, 1], 0),
                le(&[2, 1], 0),
                le(&[1, 2], 0),
            ],
        )
        .unwrap();
        match lp_feasible(&h, Some(&rvec(&[1, 1]))).unwrap() {
            LpOutcome::Optimal { point, value } => {
                assert_eq!(point, rvec(&[0, 0]));
                assert_eq!(value, rat_int(0));
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }
}
