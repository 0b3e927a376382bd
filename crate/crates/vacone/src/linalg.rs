//! Exact dense linear algebra over [`Rational`].
//!
//! Dimensions in this crate are tiny (ambient dimension at most 10), so a
//! dense fraction-free-ish Gaussian elimination over `BigRational` is both
//! simple and fast enough. Everything here is exact: there are no pivots
//! lost to rounding, and `solve_consistent` either returns an exact solution
//! or proves the system inconsistent.

use crate::expr::{rat_to_f64, Rational};
use num::{Signed, Zero};

/// Dot product. Panics on length mismatch.
pub fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    assert_eq!(a.len(), b.len(), "dot product dimension mismatch");
    let mut acc = Rational::zero();
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// `a + b`.
pub fn vadd(a: &[Rational], b: &[Rational]) -> Vec<Rational> {
    assert_eq!(a.len(), b.len(), "vector sum dimension mismatch");
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// `a - b`.
pub fn vsub(a: &[Rational], b: &[Rational]) -> Vec<Rational> {
    assert_eq!(a.len(), b.len(), "vector difference dimension mismatch");
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `c * a`.
pub fn vscale(c: &Rational, a: &[Rational]) -> Vec<Rational> {
    a.iter().map(|x| c * x).collect()
}

/// True iff every entry is zero.
pub fn is_zero_vec(a: &[Rational]) -> bool {
    a.iter().all(Rational::is_zero)
}

/// The 1-norm `sum_i |a_i|`.
pub fn norm1(a: &[Rational]) -> Rational {
    a.iter().map(Rational::abs).sum()
}

/// Squared Euclidean norm, exactly.
pub fn norm2_sq(a: &[Rational]) -> Rational {
    dot(a, a)
}

/// Matrix-vector product `A x` for a row-major matrix.
pub fn mat_vec(a: &[Vec<Rational>], x: &[Rational]) -> Vec<Rational> {
    a.iter().map(|row| dot(row, x)).collect()
}

/// Transposed product `A^T y` for a row-major matrix.
pub fn mat_t_vec(a: &[Vec<Rational>], y: &[Rational]) -> Vec<Rational> {
    assert_eq!(a.len(), y.len(), "matrix-transpose product dimension mismatch");
    let n = a.first().map_or(0, Vec::len);
    let mut out = vec![Rational::zero(); n];
    for (row, yi) in a.iter().zip(y) {
        if yi.is_zero() {
            continue;
        }
        for (o, aij) in out.iter_mut().zip(row) {
            *o += aij * yi;
        }
    }
    out
}

/// Convert a rational vector to floating point.
pub fn to_f64_vec(a: &[Rational]) -> Vec<f64> {
    a.iter().map(rat_to_f64).collect()
}

/// Reduced row echelon form in place; returns the pivot column of each
/// pivot row, in order.
pub fn rref(m: &mut [Vec<Rational>]) -> Vec<usize> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(pr) = (r..rows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, pr);
        let inv = m[r][c].recip();
        for j in c..cols {
            let v = &m[r][j] * &inv;
            m[r][j] = v;
        }
        for i in 0..rows {
            if i != r && !m[i][c].is_zero() {
                let factor = m[i][c].clone();
                for j in c..cols {
                    let v = &m[i][j] - &factor * &m[r][j];
                    m[i][j] = v;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

/// Rank of a row-major matrix.
pub fn rank(a: &[Vec<Rational>]) -> usize {
    let mut m = a.to_vec();
    rref(&mut m).len()
}

/// Solve `A x = b` exactly. Returns a particular solution (free variables
/// set to zero), or `None` when the system is inconsistent.
pub fn solve_consistent(a: &[Vec<Rational>], b: &[Rational]) -> Option<Vec<Rational>> {
    assert_eq!(a.len(), b.len(), "right-hand side length mismatch");
    let cols = a.first().map_or(0, Vec::len);
    let mut aug: Vec<Vec<Rational>> = a
        .iter()
        .zip(b)
        .map(|(row, bi)| {
            let mut r = row.clone();
            r.push(bi.clone());
            r
        })
        .collect();
    let pivots = rref(&mut aug);
    // Inconsistent iff some pivot landed in the augmented column.
    if pivots.contains(&cols) {
        return None;
    }
    let mut x = vec![Rational::zero(); cols];
    for (row, &pc) in aug.iter().zip(&pivots) {
        x[pc] = row[cols].clone();
    }
    Some(x)
}

/// Basis of the nullspace `{x : A x = 0}` of a row-major matrix.
pub fn nullspace(a: &[Vec<Rational>], cols: usize) -> Vec<Vec<Rational>> {
    let mut m: Vec<Vec<Rational>> = a.iter().map(|r| r.to_vec()).collect();
    if m.is_empty() {
        // No constraints: the whole space.
        return (0..cols)
            .map(|i| {
                let mut e = vec![Rational::zero(); cols];
                e[i] = Rational::from_integer(1.into());
                e
            })
            .collect();
    }
    let pivots = rref(&mut m);
    let mut basis = Vec::new();
    for free in 0..cols {
        if pivots.contains(&free) {
            continue;
        }
        let mut v = vec![Rational::zero(); cols];
        v[free] = Rational::from_integer(1.into());
        for (row, &pc) in m.iter().zip(&pivots) {
            v[pc] = -row[free].clone();
        }
        basis.push(v);
    }
    basis
}
