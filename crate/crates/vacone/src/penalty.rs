//! Quadratic-penalty path follower producing asymptotic-stationarity traces.
//!
//! For an increasing penalty schedule `k_j` the driver minimizes the reduced
//! subproblem
//!
//! ```text
//!     θ_k(x) = f(x) + (k/2)·dist²(G(x), K) + (k/2)·dist²(x, C)
//!                   + ½‖x − x_ref‖²
//! ```
//!
//! to inner tolerance `τ_j` and records, per `k`, the projection residual
//! `y_k = G(x_k) − Π_K(G(x_k))`, the multiplier estimates `λ_k = k·y_k` and
//! `ν_k = k·(x_k − Π_C(x_k))`, and the first-order residual
//! `ε_k = ∇f + G'(x_k)ᵀλ_k + ν_k + (x_k − x̄)`, which coincides with
//! `∇θ_k(x_k)` and is therefore bounded by `τ_j`.  In the decoupled mode the
//! `C`-constraint is enforced exactly by projection instead of penalized;
//! `ν_k` is then the nearest normal-cone element at the (snapped) iterate
//! and `ε_k` keeps whatever the cone cannot absorb.
//!
//! The inner solver is a projected-gradient descent with Armijo
//! backtracking, a localization ball around `x_ref`, deterministic
//! multi-starts, and a small perturbation off objective kinks.  Inner
//! global optimality is never claimed: the value of a trace lies in its
//! per-record certificates, which are re-verified independently.

use thiserror::Error;

use crate::expr::{f64_to_rat, snap_rational, Rational};
use crate::linalg::to_f64_vec;
use crate::maps::{normal_cone_union, MapsError};
use crate::polyhedral::{
    gencone_to_hcone, project, project_polyhedron_exact, HPolyhedron, PolyError,
};
use crate::problem::{ProblemError, ProblemInstance};
use crate::stationarity::trace::{verify_trace_records, AMTrace, TraceConfig, TraceRecord};
use crate::stationarity::StatError;

/// Errors from the penalty driver.
#[derive(Debug, Error)]
pub enum PenaltyError {
    /// Schedule or tolerance lists violate their invariants.
    #[error("invalid penalty configuration: {0}")]
    Config(String),
    /// The reference point violates the constraints.
    #[error("infeasible reference point: {0}")]
    Infeasible(String),
    /// The objective could not be evaluated (piecewise point uncovered).
    #[error("objective evaluation failed: {0}")]
    Objective(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Maps(#[from] MapsError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Stat(#[from] StatError),
}

/// Penalty driver configuration.
#[derive(Debug, Clone)]
pub struct PenaltyConfig {
    /// Strictly increasing penalty parameters.
    pub k_schedule: Vec<f64>,
    /// Inner tolerances, one per `k`; strictly decreasing until the
    /// `1e-9` floor is reached.
    pub inner_tols: Vec<f64>,
    /// Iteration cap for one inner solve.
    pub max_inner_iters: usize,
    /// Radius of the localization ball around `x_ref`.
    pub trust_radius: f64,
    /// Number of deterministic starting points per subproblem.
    pub multi_starts: usize,
    /// Enforce `x ∈ C` by projection instead of penalization.
    pub decoupled: bool,
}

/// Floor below which inner tolerances are not driven.
pub const TOL_FLOOR: f64 = 1e-9;

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig::with_exponents(0, 6)
    }
}

impl PenaltyConfig {
    /// Schedule `k_j = 10^j` for `j = lo..=hi` with tolerances
    /// `τ_j = max(10⁻²/k_j, 10⁻⁹)`.
    pub fn with_exponents(lo: u32, hi: u32) -> Self {
        let k_schedule: Vec<f64> = (lo..=hi).map(|j| 10f64.powi(j as i32)).collect();
        let inner_tols = k_schedule.iter().map(|k| (1e-2 / k).max(TOL_FLOOR)).collect();
        PenaltyConfig {
            k_schedule,
            inner_tols,
            max_inner_iters: 4000,
            trust_radius: 1.0,
            multi_starts: 4,
            decoupled: false,
        }
    }

    /// Check the schedule invariants.
    pub fn validate(&self) -> Result<(), PenaltyError> {
        if self.k_schedule.is_empty() || self.k_schedule.len() != self.inner_tols.len() {
            return Err(PenaltyError::Config(
                "schedule and tolerance lists must be nonempty and of equal length".to_string(),
            ));
        }
        for w in self.k_schedule.windows(2) {
            if !(w[0] > 0.0 && w[1] > w[0]) {
                return Err(PenaltyError::Config(
                    "penalty parameters must be positive and strictly increasing".to_string(),
                ));
            }
        }
        for w in self.inner_tols.windows(2) {
            let strict_zone = w[0] > TOL_FLOOR;
            if w[1] <= 0.0 || w[1] > w[0] || (strict_zone && w[1] >= w[0]) {
                return Err(PenaltyError::Config(
                    "inner tolerances must decrease strictly until the floor".to_string(),
                ));
            }
        }
        if self.trust_radius <= 0.0 || self.multi_starts == 0 {
            return Err(PenaltyError::Config(
                "trust radius and start count must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// One evaluation of the penalty objective.
#[derive(Debug, Clone)]
pub struct PenaltyEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// `G(x) − Π_K(G(x))`.
    pub y: Vec<f64>,
    /// `x − Π_C(x)` (zeros without a `C`-constraint).
    pub c_offset: Vec<f64>,
    /// Winning block of the `K`-projection.
    pub k_branch: usize,
    /// Winning block of the `C`-projection, when `C` is present.
    pub c_branch: Option<usize>,
}

fn dyadic_vec(x: &[f64]) -> Result<Vec<Rational>, PenaltyError> {
    x.iter()
        .map(|c| f64_to_rat(*c).ok_or_else(|| PenaltyError::Objective("non-finite iterate".into())))
        .collect()
}

fn norm2_f(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn f_value_grad(p: &ProblemInstance, x: &[f64]) -> Result<(f64, Vec<f64>), PenaltyError> {
    match (p.objective.eval_f64(x), p.objective.gradient_f64(x)) {
        (Some(v), Some(g)) => Ok((v, g)),
        _ => Err(PenaltyError::Objective(format!(
            "no objective piece covers {x:?}"
        ))),
    }
}

/// Evaluate `θ_k` and its almost-everywhere gradient at `x`.
///
/// With `include_c = false` (decoupled mode) the `dist²(x, C)` term is
/// dropped from both value and gradient; the projection report is still
/// populated so callers can label branches.
fn eval_theta(
    p: &ProblemInstance,
    k: f64,
    x_ref: &[f64],
    x: &[f64],
    include_c: bool,
) -> Result<PenaltyEval, PenaltyError> {
    let gc = &p.constraint;
    let (fval, mut gradient) = f_value_grad(p, x)?;
    let gx = gc.g().eval_f64(x);
    let proj_k = project(gc.k(), &dyadic_vec(&gx)?)?;
    let y: Vec<f64> = gx.iter().zip(&proj_k.nearest).map(|(a, b)| a - b).collect();

    let (c_offset, c_branch) = match gc.c() {
        Some(c) => {
            let pc = project(c, &dyadic_vec(x)?)?;
            let off: Vec<f64> = x.iter().zip(&pc.nearest).map(|(a, b)| a - b).collect();
            (off, Some(pc.branch))
        }
        None => (vec![0.0; x.len()], None),
    };

    let prox: Vec<f64> = x.iter().zip(x_ref).map(|(a, b)| a - b).collect();
    let mut value = fval + 0.5 * k * norm2_f(&y).powi(2) + 0.5 * norm2_f(&prox).powi(2);
    if include_c {
        value += 0.5 * k * norm2_f(&c_offset).powi(2);
    }

    let jac = gc.g().jacobian_at_f64(x);
    for (row, yj) in jac.iter().zip(&y) {
        for (gi, e) in gradient.iter_mut().zip(row) {
            *gi += k * e * yj;
        }
    }
    for (i, gi) in gradient.iter_mut().enumerate() {
        if include_c {
            *gi += k * c_offset[i];
        }
        *gi += prox[i];
    }
    Ok(PenaltyEval { value, gradient, y, c_offset, k_branch: proj_k.branch, c_branch })
}

/// Value and gradient of the reduced penalty objective
/// `θ_k(x) = f(x) + (k/2)·dist²(G(x),K) + (k/2)·dist²(x,C) + ½‖x−x_ref‖²`,
/// together with the projection residuals and winning branches.
pub fn penalty_objective(
    p: &ProblemInstance,
    k: f64,
    x_ref: &[f64],
    x: &[f64],
) -> Result<PenaltyEval, PenaltyError> {
    eval_theta(p, k, x_ref, x, true)
}

/// Outcome report of one inner solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Gradient (or projected-gradient) norm met the tolerance.
    pub converged: bool,
    /// Step size underflowed without further decrease.
    pub stalled: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub value: f64,
}

fn clip_to_ball(x: &mut [f64], center: &[f64], radius: f64) {
    let d: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
    let n = norm2_f(&d);
    if n > radius {
        for (xi, (ci, di)) in x.iter_mut().zip(center.iter().zip(&d)) {
            *xi = ci + di * radius / n;
        }
    }
}

/// Pull an iterate back onto the hard constraints: the domain restriction
/// always, and `C` in decoupled mode.  When both are present and `C` is
/// polyhedral, the pull is the exact projection onto their intersection
/// (rows concatenated per block); with a smooth `C` one round of
/// alternating projections is used and the descent loop supplies the
/// remaining alternation.
fn pull_back(
    p: &ProblemInstance,
    x: &mut Vec<f64>,
    onto_c: bool,
) -> Result<(), PenaltyError> {
    let gc = &p.constraint;
    if let (true, Some(c), Some(dom)) = (onto_c, gc.c(), gc.domain()) {
        if c.is_polyhedral() {
            let z = dyadic_vec(x)?;
            let mut best: Option<(Vec<Rational>, Rational)> = None;
            for block in c.blocks() {
                let crate::polyhedral::Block::Poly(h) = block else { continue };
                let mut rows = h.rows().to_vec();
                rows.extend_from_slice(dom.rows());
                let combined = HPolyhedron::new(h.dim(), rows)?;
                if let Some((pt, d)) = project_polyhedron_exact(&combined, &z)? {
                    if best.as_ref().map_or(true, |(_, bd)| &d < bd) {
                        best = Some((pt, d));
                    }
                }
            }
            if let Some((pt, _)) = best {
                *x = to_f64_vec(&pt);
                return Ok(());
            }
        }
    }
    if let Some(dom) = gc.domain() {
        if let Some((pt, _)) = project_polyhedron_exact(dom, &dyadic_vec(x)?)? {
            *x = to_f64_vec(&pt);
        }
    }
    if onto_c {
        if let Some(c) = gc.c() {
            let pr = project(c, &dyadic_vec(x)?)?;
            *x = pr.nearest;
            if let Some(dom) = gc.domain() {
                if let Some((pt, _)) = project_polyhedron_exact(dom, &dyadic_vec(x)?)? {
                    *x = to_f64_vec(&pt);
                }
            }
        }
    }
    Ok(())
}

fn descend(
    p: &ProblemInstance,
    k: f64,
    x_ref: &[f64],
    start: &[f64],
    tol: f64,
    cfg: &PenaltyConfig,
) -> Result<(Vec<f64>, SolveReport), PenaltyError> {
    let include_c = !cfg.decoupled;
    let mut x = start.to_vec();
    clip_to_ball(&mut x, x_ref, cfg.trust_radius);
    pull_back(p, &mut x, cfg.decoupled)?;
    let mut eval = eval_theta(p, k, x_ref, &x, include_c)?;
    let mut step = 1.0f64;
    let mut stalled = false;
    let mut iterations = 0;

    for it in 0..cfg.max_inner_iters {
        iterations = it + 1;
        // Nudge off objective kinks along the descent direction so the
        // active-piece gradient is the one that matters on the next move.
        if p.objective.boundary_gap_f64(&x) <= 1e-12 {
            let gn = norm2_f(&eval.gradient);
            let dir: Vec<f64> = if gn > 0.0 {
                eval.gradient.iter().map(|g| -g / gn).collect()
            } else {
                let mut e = vec![0.0; x.len()];
                e[0] = 1.0;
                e
            };
            for (xi, di) in x.iter_mut().zip(&dir) {
                *xi += 1e-9 * di;
            }
            pull_back(p, &mut x, cfg.decoupled)?;
            eval = eval_theta(p, k, x_ref, &x, include_c)?;
        }

        // Termination: plain gradient norm, or the projected-gradient
        // residual when hard constraints are active.
        let residual = {
            let mut trial: Vec<f64> =
                x.iter().zip(&eval.gradient).map(|(a, g)| a - g).collect();
            clip_to_ball(&mut trial, x_ref, cfg.trust_radius);
            pull_back(p, &mut trial, cfg.decoupled)?;
            let moved: Vec<f64> = x.iter().zip(&trial).map(|(a, b)| a - b).collect();
            norm2_f(&moved).min(norm2_f(&eval.gradient))
        };
        if residual <= tol {
            return Ok((
                x,
                SolveReport {
                    converged: true,
                    stalled: false,
                    iterations,
                    grad_norm: residual,
                    value: eval.value,
                },
            ));
        }

        // Backtracking line search along the (projected) gradient step.
        step = (step * 2.0).min(1e6);
        let mut accepted = false;
        while step >= 1e-18 {
            let mut trial: Vec<f64> = x
                .iter()
                .zip(&eval.gradient)
                .map(|(a, g)| a - step * g)
                .collect();
            clip_to_ball(&mut trial, x_ref, cfg.trust_radius);
            pull_back(p, &mut trial, cfg.decoupled)?;
            let displacement: Vec<f64> =
                x.iter().zip(&trial).map(|(a, b)| a - b).collect();
            let directional: f64 = eval
                .gradient
                .iter()
                .zip(&displacement)
                .map(|(g, d)| g * d)
                .sum();
            if directional <= 0.0 {
                // The pull-backs reversed the step; shrink and retry.
                step *= 0.5;
                continue;
            }
            let trial_eval = eval_theta(p, k, x_ref, &trial, include_c)?;
            if trial_eval.value <= eval.value - 1e-4 * directional {
                x = trial;
                eval = trial_eval;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            stalled = true;
            break;
        }
    }

    let grad_norm = norm2_f(&eval.gradient);
    Ok((
        x,
        SolveReport {
            converged: grad_norm <= tol,
            stalled,
            iterations,
            grad_norm,
            value: eval.value,
        },
    ))
}

/// Minimize `θ_k` to tolerance `τ` from `x0`, with deterministic
/// multi-starts; the best final value wins.
pub fn solve_subproblem(
    p: &ProblemInstance,
    k: f64,
    x_ref: &[f64],
    x0: &[f64],
    tol: f64,
    cfg: &PenaltyConfig,
) -> Result<(Vec<f64>, SolveReport), PenaltyError> {
    let n = x_ref.len();
    let mut starts: Vec<Vec<f64>> = vec![x0.to_vec()];
    if starts.len() < cfg.multi_starts {
        starts.push(x_ref.to_vec());
    }
    let mut axis = 0usize;
    let mut sign = 1.0f64;
    while starts.len() < cfg.multi_starts && axis < n {
        let mut s = x_ref.to_vec();
        s[axis] += sign * 0.5 * cfg.trust_radius;
        if !starts.contains(&s) {
            starts.push(s);
        }
        if sign > 0.0 {
            sign = -1.0;
        } else {
            sign = 1.0;
            axis += 1;
        }
    }
    starts.dedup();

    let mut best: Option<(Vec<f64>, SolveReport)> = None;
    for s in &starts {
        let (x, rep) = descend(p, k, x_ref, s, tol, cfg)?;
        let better = match &best {
            None => true,
            Some((_, b)) => {
                (rep.converged && !b.converged) || (rep.converged == b.converged && rep.value < b.value)
            }
        };
        if better {
            best = Some((x, rep));
        }
    }
    Ok(best.expect("at least one start"))
}

/// Decoupled `ν`: the nearest element of `N_C(x)` (at the snapped iterate)
/// to the unabsorbed residual, so that `ε` keeps only what the cone cannot
/// express.  Falls back to zero when the cone is trivial or snapping fails.
fn decoupled_nu(
    p: &ProblemInstance,
    x: &[f64],
    residual: &[f64],
) -> Result<Vec<f64>, PenaltyError> {
    let Some(c) = p.constraint.c() else {
        return Ok(vec![0.0; x.len()]);
    };
    let Some(xs) = x
        .iter()
        .map(|c| snap_rational(*c, 1_000_000))
        .collect::<Option<Vec<Rational>>>()
    else {
        return Ok(vec![0.0; x.len()]);
    };
    let base = if c.contains(&xs) {
        xs
    } else {
        match project(c, &xs)?.exact {
            Some((pt, _)) => pt,
            None => return Ok(vec![0.0; x.len()]),
        }
    };
    let cone = normal_cone_union(c, &base)?;
    let target = dyadic_vec(residual)?;
    let mut best: Option<(Vec<Rational>, Rational)> = None;
    for branch in cone.branches() {
        let h = gencone_to_hcone(branch)?;
        if let Some((pt, d)) = project_polyhedron_exact(&h, &target)? {
            if best.as_ref().map_or(true, |(_, bd)| &d < bd) {
                best = Some((pt, d));
            }
        }
    }
    Ok(best.map_or(vec![0.0; x.len()], |(pt, _)| to_f64_vec(&pt)))
}

/// Follow the penalty path from the feasible reference point `x̄` and emit
/// one trace record per schedule entry.  Warm starts carry the previous
/// solution forward; an inner failure truncates the trace with a status
/// note instead of erroring.
pub fn am_trace(
    p: &ProblemInstance,
    xbar: &[Rational],
    cfg: &PenaltyConfig,
) -> Result<AMTrace, PenaltyError> {
    cfg.validate()?;
    let gc = &p.constraint;
    if !gc.is_feasible(xbar).map_err(PenaltyError::Maps)? {
        return Err(PenaltyError::Infeasible(format!("{xbar:?}")));
    }
    let xf = to_f64_vec(xbar);
    let mut warm = xf.clone();
    let mut records = Vec::new();
    let mut status = "complete".to_string();

    for (k, tol) in cfg.k_schedule.iter().zip(&cfg.inner_tols) {
        let (x_k, rep) = solve_subproblem(p, *k, &xf, &warm, *tol, cfg)?;
        if !rep.converged {
            status = format!(
                "truncated at k={k}: inner solve stopped at gradient norm {:.3e} after {} iterations{}",
                rep.grad_norm,
                rep.iterations,
                if rep.stalled { " (step underflow)" } else { "" }
            );
            break;
        }
        let eval = eval_theta(p, *k, &xf, &x_k, !cfg.decoupled)?;
        let lambda: Vec<f64> = eval.y.iter().map(|v| k * v).collect();
        let (nu, eps) = if cfg.decoupled {
            let (_, grad_f) = f_value_grad(p, &x_k)?;
            let jac = gc.g().jacobian_at_f64(&x_k);
            // Residual before the C-part: ∇f + G'ᵀλ + (x − x̄).
            let mut partial = grad_f;
            for (row, lj) in jac.iter().zip(&lambda) {
                for (pi, e) in partial.iter_mut().zip(row) {
                    *pi += e * lj;
                }
            }
            for (i, pi) in partial.iter_mut().enumerate() {
                *pi += x_k[i] - xf[i];
            }
            let nu_hat: Vec<f64> = partial.iter().map(|v| -v).collect();
            let nu = decoupled_nu(p, &x_k, &nu_hat)?;
            let eps: Vec<f64> = partial.iter().zip(&nu).map(|(a, b)| a + b).collect();
            (nu, eps)
        } else {
            let nu: Vec<f64> = eval.c_offset.iter().map(|v| k * v).collect();
            // ε is exactly the subproblem gradient in the coupled mode.
            (nu, eval.gradient.clone())
        };
        let branch = match eval.c_branch {
            Some(cb) => format!("k{}/c{}", eval.k_branch, cb),
            None => format!("k{}/c-", eval.k_branch),
        };
        records.push(TraceRecord {
            k: *k,
            x: x_k.clone(),
            y: eval.y.clone(),
            lambda,
            nu,
            eps,
            inner_tol: *tol,
            branch,
        });
        warm = x_k;
    }

    let trace = AMTrace { records, status, decoupled: cfg.decoupled };
    if !trace.records.is_empty()
        && !verify_trace_records(p, &trace, &TraceConfig::default()).map_err(PenaltyError::Stat)?
    {
        let mut t = trace;
        t.status = format!("{}; a record failed exact re-verification", t.status);
        return Ok(t);
    }
    Ok(trace)
}

/// Serialize a trace as CSV: one row per `k`, coordinates expanded,
/// 17 significant digits.
pub fn trace_to_csv(t: &AMTrace) -> String {
    let n = t.records.first().map_or(0, |r| r.x.len());
    let mut out = String::from("k");
    for i in 1..=n {
        out.push_str(&format!(",x{i}"));
    }
    out.push_str(",y_norm,lambda_norm,eps_norm,branch\n");
    for r in &t.records {
        out.push_str(&format!("{:.16e}", r.k));
        for xi in &r.x {
            out.push_str(&format!(",{xi:.16e}"));
        }
        out.push_str(&format!(
            ",{:.16e},{:.16e},{:.16e},{}\n",
            norm2_f(&r.y),
            norm2_f(&r.lambda),
            norm2_f(&r.eps),
            r.branch
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{rat, rvec};
    use crate::polyhedral::{HPolyhedron, HRow, PolyUnion};
    use crate::stationarity::testkit::inst;
    use crate::stationarity::trace::{classify_trace, TraceClass, TraceConfig};

    fn nonpos_line() -> PolyUnion {
        PolyUnion::single(HPolyhedron::nonpos_orthant(1))
    }

    /// `f = x, G = x², K = R₋` anchored at the origin.
    fn parabola() -> ProblemInstance {
        inst(&["x1"], "x1", &["x1^2"], nonpos_line(), None, &rvec(&[0]))
    }

    /// Independent 1-D oracle: Newton iteration on
    /// `θ'(x) = 1 + 2kx³ + x = 0` started left of the root.
    fn newton_oracle(k: f64) -> f64 {
        let mut x = -(2.0 * k).powf(-1.0 / 3.0);
        for _ in 0..200 {
            let g = 1.0 + 2.0 * k * x * x * x + x;
            let h = 6.0 * k * x * x + 1.0;
            let next = x - g / h;
            if (next - x).abs() <= f64::EPSILON * x.abs().max(1.0) {
                x = next;
                break;
            }
            x = next;
        }
        x
    }

    #[test]
    fn objective_matches_closed_form_values() {
        let p = parabola();
        // k = 1 at x = 1: f = 1, dist(1, R₋)² = 1, prox = ½ → value 2;
        // gradient 1 + 2·1·1 + 1 = 4.
        let e = penalty_objective(&p, 1.0, &[0.0], &[1.0]).unwrap();
        assert_eq!(e.value, 2.0);
        assert_eq!(e.gradient, vec![4.0]);
        assert_eq!(e.y, vec![1.0]);

        // Feasible x = x_ref: value f(x), gradient ∇f(x).  (Here with the
        // affine constraint x ≤ 0, feasible at -1.)
        let q = inst(&["x1"], "x1", &["x1"], nonpos_line(), None, &rvec(&[0]));
        let e = penalty_objective(&q, 100.0, &[-1.0], &[-1.0]).unwrap();
        assert_eq!(e.value, -1.0);
        assert_eq!(e.gradient, vec![1.0]);
        assert_eq!(e.y, vec![0.0]);

        // k = 0 degenerates to the proximal-only objective.
        let e = penalty_objective(&p, 0.0, &[0.0], &[2.0]).unwrap();
        assert_eq!(e.value, 2.0 + 2.0);
        assert_eq!(e.gradient, vec![1.0 + 2.0]);
    }

    #[test]
    fn newton_oracle_matches_subproblem_on_the_parabola() {
        let p = parabola();
        let cfg = PenaltyConfig::default();
        for k in [1e2, 1e4, 1e6] {
            let oracle = newton_oracle(k);
            // The root is a perturbation of -(2k)^(-1/3); the proximal term
            // shifts it by a relative O(k^(-1/3)) amount.
            let approx = -(2.0 * k).powf(-1.0 / 3.0);
            assert!((oracle - approx).abs() <= 0.1 * approx.abs());
            let (x, rep) = solve_subproblem(&p, k, &[0.0], &[0.0], 1e-8, &cfg).unwrap();
            assert!(rep.converged, "k={k}: {rep:?}");
            assert!(
                (x[0] - oracle).abs() <= 1e-6 * oracle.abs().max(1e-6),
                "k={k}: solver {} vs oracle {}",
                x[0],
                oracle
            );
        }
        // Magnitude sanity at k = 10⁶: root near -7.9e-3.
        let o = newton_oracle(1e6);
        assert!((-8.0e-3..=-7.8e-3).contains(&o), "oracle root {o}");
    }

    #[test]
    fn grid_oracle_confirms_the_origin_in_two_dimensions() {
        // G(x) = (-x₁² + x₂, -x₂) into R²₋ keeps the origin feasible; with
        // f = 0 the proximal term makes it the unique minimizer of θ_k.
        let k2 = PolyUnion::single(HPolyhedron::nonpos_orthant(2));
        let p = inst(
            &["x1", "x2"],
            "0",
            &["-x1^2 + x2", "-x2"],
            k2,
            None,
            &rvec(&[0, 0]),
        );
        let k = 1e4;
        // Independent grid search over [-0.1, 0.1]².
        let mut best = (f64::INFINITY, vec![0.0, 0.0]);
        let steps = 41;
        for i in 0..steps {
            for j in 0..steps {
                let x = vec![
                    -0.1 + 0.2 * i as f64 / (steps - 1) as f64,
                    -0.1 + 0.2 * j as f64 / (steps - 1) as f64,
                ];
                let v = penalty_objective(&p, k, &[0.0, 0.0], &x).unwrap().value;
                if v < best.0 {
                    best = (v, x);
                }
            }
        }
        assert!(norm2_f(&best.1) <= 1e-9, "grid argmin {:?}", best.1);

        let cfg = PenaltyConfig::default();
        let (x, rep) =
            solve_subproblem(&p, k, &[0.0, 0.0], &[0.05, -0.03], 1e-9, &cfg).unwrap();
        assert!(rep.converged);
        assert!(norm2_f(&x) <= 1e-6, "solver landed at {x:?}");
        assert!(rep.value <= best.0 + 1e-12);
    }

    #[test]
    fn unbounded_multiplier_trace_classifies_as_abnormal() {
        let p = parabola();
        // Extend the schedule two decades past the default so the
        // growth ratio clears its threshold decisively.
        let cfg = PenaltyConfig::with_exponents(0, 8);
        let t = am_trace(&p, &rvec(&[0]), &cfg).unwrap();
        assert_eq!(t.status, "complete");
        assert_eq!(t.records.len(), 9);

        // x_k → x̄ and the final constraint residual is tiny.
        let last = t.records.last().unwrap();
        assert!(last.x[0].abs() <= 1e-2);
        assert!(norm2_f(&last.y) <= 1e-3);
        // ε_k is the subproblem gradient: within the inner tolerance.
        for r in &t.records {
            assert!(norm2_f(&r.eps) <= r.inner_tol * (1.0 + 1e-9), "k={}", r.k);
        }
        // Multiplier growth: λ_k = k·x_k² ~ k^(1/3).
        let first = &t.records[0];
        assert!(norm2_f(&last.lambda) / norm2_f(&first.lambda) >= 1e2);
        // Penalty residual is non-increasing along the trace (10% slack).
        for w in t.records.windows(2) {
            let a = norm2_f(&w[0].y);
            let b = norm2_f(&w[1].y);
            assert!(b <= a * 1.1, "residual grew: {a} -> {b}");
        }

        match classify_trace(&t, &rvec(&[0]), &p, &TraceConfig::default()).unwrap() {
            TraceClass::Abnormal(cert) => {
                assert_eq!(cert.lambda, rvec(&[1]));
                assert_eq!(cert.nu, rvec(&[0]));
            }
            other => panic!("expected Abnormal, got {other:?}"),
        }
    }

    #[test]
    fn bounded_multiplier_trace_stabilizes_to_a_certificate() {
        // f = -x over x ≤ 0: KKT multiplier λ = 1, NNAMCQ holds, so the
        // trace multipliers converge and classify as an exact certificate.
        let p = inst(&["x1"], "-x1", &["x1"], nonpos_line(), None, &rvec(&[0]));
        let cfg = PenaltyConfig::default();
        let t = am_trace(&p, &rvec(&[0]), &cfg).unwrap();
        assert_eq!(t.status, "complete");
        // λ_k = k/(k+1) → 1.
        let last = t.records.last().unwrap();
        assert!((last.lambda[0] - 1.0).abs() <= 1e-2);
        match classify_trace(&t, &rvec(&[0]), &p, &TraceConfig::default()).unwrap() {
            TraceClass::MLimit(cert) => {
                assert_eq!(cert.lambda, rvec(&[1]));
                assert!(cert.verify(&p, &rvec(&[0])).unwrap());
            }
            other => panic!("expected MLimit, got {other:?}"),
        }
    }

    #[test]
    fn decoupled_trace_keeps_the_unabsorbed_residual() {
        // f = x₁ on the wedge C = {x₂ ≥ |x₁|} with the graph domain pinned
        // to the x₂ = 0 axis: the only feasible point is the origin, and
        // the best N_C(0) can absorb of the residual -∇f = (-1, 0) is
        // (-½, -½), so ε = (½, -½) stays stuck along the whole trace.
        let names = crate::expr::var_names(&["x1", "x2"]);
        let wedge = HPolyhedron::new(
            2,
            vec![HRow::le(rvec(&[1, -1]), rat(0, 1)), HRow::le(rvec(&[-1, -1]), rat(0, 1))],
        )
        .unwrap();
        let c = PolyUnion::single(wedge);
        let g = crate::expr::PolyMap::parse(&names, &["0"]).unwrap();
        let k = nonpos_line();
        let domain = HPolyhedron::new(
            2,
            vec![HRow { a: rvec(&[0, 1]), b: rat(0, 1), eq: true }],
        )
        .unwrap();
        let constraint = crate::maps::GeometricConstraint::new(g, k, Some(c))
            .unwrap()
            .with_domain(domain)
            .unwrap();
        let p = ProblemInstance {
            name: "test".to_string(),
            objective: crate::problem::Objective::Smooth(
                crate::expr::parse_polynomial("x1", &names).unwrap(),
            ),
            constraint,
            point: rvec(&[0, 0]),
            m_explicit: None,
            expected: Default::default(),
        };
        let mut cfg = PenaltyConfig::with_exponents(0, 3);
        cfg.decoupled = true;
        let t = am_trace(&p, &rvec(&[0, 0]), &cfg).unwrap();
        assert_eq!(t.status, "complete");
        assert!(t.decoupled);
        for r in &t.records {
            assert!(norm2_f(&r.x) <= 1e-12, "iterates stay at the origin");
            assert!(
                (r.eps[0] - 0.5).abs() <= 1e-9 && (r.eps[1] + 0.5).abs() <= 1e-9,
                "ε = (½, -½), got {:?}",
                r.eps
            );
            assert!(
                (r.nu[0] + 0.5).abs() <= 1e-9 && (r.nu[1] + 0.5).abs() <= 1e-9,
                "ν = (-½, -½), got {:?}",
                r.nu
            );
        }
        // The classifier finds no certificate in such a trace.
        assert!(matches!(
            classify_trace(&t, &rvec(&[0, 0]), &p, &TraceConfig::default()).unwrap(),
            TraceClass::Inconclusive(_)
        ));
    }

    #[test]
    fn multi_starts_escape_a_bad_basin() {
        // Tilted double well: with the proximal anchor at 0 the total
        // objective 10x⁴ - 20x² - x + 10 + ½x² has stationary points at
        // the roots of 40x³ - 39x - 1 = (x-1)(40x² + 40x + 1): a local
        // minimum near -0.974 and the global minimum at exactly 1. A
        // single start from -1.1 settles in the left basin; the extra
        // deterministic starts find the right one.
        let whole_line = PolyUnion::single(HPolyhedron::new(1, vec![]).unwrap());
        let p = inst(
            &["x1"],
            "10*x1^4 - 20*x1^2 - x1 + 10",
            &["x1"],
            whole_line,
            None,
            &rvec(&[0]),
        );
        let mut cfg = PenaltyConfig::default();
        cfg.trust_radius = 2.5;
        cfg.multi_starts = 1;
        let (x_bad, _) = solve_subproblem(&p, 1.0, &[0.0], &[-1.1], 1e-9, &cfg).unwrap();
        assert!(
            (x_bad[0] + 0.974).abs() < 0.01,
            "single start stays in the left basin: {x_bad:?}"
        );
        cfg.multi_starts = 4;
        let (x_good, rep) = solve_subproblem(&p, 1.0, &[0.0], &[-1.1], 1e-9, &cfg).unwrap();
        assert!((x_good[0] - 1.0).abs() < 1e-6, "multi-start x = {x_good:?}");
        assert!(rep.converged);
    }

    #[test]
    fn truncated_trace_reports_its_status() {
        let p = parabola();
        let mut cfg = PenaltyConfig::default();
        cfg.max_inner_iters = 1;
        // Unreachable tolerances, still formally a valid schedule.
        cfg.inner_tols = (0..cfg.k_schedule.len())
            .map(|j| 1e-220 * 0.5f64.powi(j as i32))
            .collect();
        let t = am_trace(&p, &rvec(&[0]), &cfg).unwrap();
        assert!(t.status.starts_with("truncated at k=1"), "{}", t.status);
        assert!(t.records.is_empty());
    }

    #[test]
    fn csv_serialization_is_row_per_k() {
        let p = parabola();
        let cfg = PenaltyConfig::with_exponents(0, 2);
        let t = am_trace(&p, &rvec(&[0]), &cfg).unwrap();
        let csv = trace_to_csv(&t);
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines[0], "k,x1,y_norm,lambda_norm,eps_norm,branch");
        assert_eq!(lines.len(), 1 + t.records.len());
        // 17 significant digits and the branch label present.
        assert!(lines[1].starts_with("1.0000000000000000e0,"));
        assert!(lines[1].ends_with(",k0/c-"));
    }

    #[test]
    fn schedule_invariants_are_enforced() {
        let mut cfg = PenaltyConfig::default();
        cfg.k_schedule[1] = cfg.k_schedule[0];
        assert!(matches!(cfg.validate(), Err(PenaltyError::Config(_))));

        let mut cfg = PenaltyConfig::default();
        cfg.inner_tols[1] = cfg.inner_tols[0];
        assert!(matches!(cfg.validate(), Err(PenaltyError::Config(_))));

        // Tolerances pinned at the floor may repeat.
        let mut cfg = PenaltyConfig::with_exponents(6, 9);
        cfg.inner_tols = vec![1e-8, TOL_FLOOR, TOL_FLOOR, TOL_FLOOR];
        assert!(cfg.validate().is_ok());
    }
}
