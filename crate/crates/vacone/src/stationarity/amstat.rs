//! Asymptotic stationarity: certification and analytic refutation.
//!
//! A point is *asymptotically stationary* when sequences `x_k → x̄`,
//! perturbations `(ỹ_k, z_k) → 0`, and multipliers exist whose first-order
//! residuals `ε_k = x*_k + G'(x_k)ᵀλ_k + ν_k` vanish in the limit. This
//! module provides:
//!
//! * [`AmSeqWitness`] — a symbolic witness sequence (rational-function
//!   curves in `s = 1/k`) replayed exactly: memberships are re-checked at
//!   every grid value of `k`, and the vanishing of the residual is a
//!   Laurent-order fact, not a float estimate;
//! * [`constant_witness`] — the bridge from an exact M-certificate to a
//!   (constant) witness sequence;
//! * [`am_stationarity_gap`] — for affine maps over polyhedral cones, the
//!   exact squared distance from the negated subdifferential to the
//!   multiplier image set: a positive value certifies a quantitative
//!   failure of asymptotic stationarity;
//! * [`am_stationarity_check`] — the decision ladder combining the three
//!   with the regularity engine (asymptotic stationarity plus regularity
//!   forces plain stationarity, so a regular non-stationary point cannot
//!   be asymptotically stationary).

use crate::expr::{compose_poly, curve_eval, rat, RatFunc, Rational};
use crate::linalg::{is_zero_vec, vsub};
use crate::maps::normal_cone_union;
use crate::polyhedral::{
    gencone_to_hcone, limiting_normal_cone, lp_feasible, minkowski_sum, project_polyhedron_exact,
    GenCone, HPolyhedron, HRow, LpOutcome,
};
use crate::problem::{in_convex_hull, ProblemInstance};
use crate::stationarity::regularity::{
    am_regularity_check, const_curve, curve_sub, dam_regularity_check, zero_curve,
    RegularityConfig,
};
use crate::stationarity::{m_stationarity_check, MCert, StatError, Verdict};
use num_traits::{One, Signed, Zero};

/// A symbolic witness sequence for asymptotic stationarity. All curves are
/// rational functions of `s`, understood as `s = 1/k` along the sequence;
/// `s → 0⁺` is the asymptotic regime.
#[derive(Debug, Clone)]
pub struct AmSeqWitness {
    /// Chosen subgradient curve `x*(s) ∈ ∂f(x(s))`.
    pub xstar_curve: Vec<RatFunc>,
    /// Base points `x(s) → x̄`.
    pub x_curve: Vec<RatFunc>,
    /// Constraint-space perturbations `ỹ(s) → 0`.
    pub ytil_curve: Vec<RatFunc>,
    /// `C`-part perturbations `z(s) → 0` (identically zero when decoupled).
    pub z_curve: Vec<RatFunc>,
    /// Multiplier image curve `w(s)`; for explicit maps this equals
    /// `G'(x(s))ᵀλ(s)`, for domain-restricted maps it is the `x`-part of a
    /// graph normal paired with `-λ(s)`.
    pub img_curve: Vec<RatFunc>,
    /// `K`-part multipliers `λ(s) ∈ N_K(G(x(s)) - ỹ(s))`.
    pub lambda_curve: Vec<RatFunc>,
    /// `C`-part multipliers `ν(s) ∈ N_C(x(s) - z(s))`.
    pub nu_curve: Vec<RatFunc>,
    /// Exact grid of `k` values at which memberships are replayed.
    pub ks: Vec<i64>,
    /// Whether the sequence also certifies the decoupled notion
    /// (`z ≡ 0` and `x(s) ∈ C`).
    pub decoupled: bool,
}

fn vanishes(c: &RatFunc) -> bool {
    c.is_zero() || c.order_at_zero().map_or(true, |o| o >= 1)
}

impl AmSeqWitness {
    /// The residual curve `ε(s) = x*(s) + w(s) + ν(s)`.
    pub fn residual_curve(&self) -> Vec<RatFunc> {
        let mut eps = self.xstar_curve.clone();
        for (e, w) in eps.iter_mut().zip(&self.img_curve) {
            *e = e.add(w);
        }
        for (e, v) in eps.iter_mut().zip(&self.nu_curve) {
            *e = e.add(v);
        }
        eps
    }

    /// Re-verify the witness from scratch.
    ///
    /// Symbolic part: `x(s) → x̄`, `ỹ(s) → 0`, `z(s) → 0`, `ε(s) → 0`
    /// (Laurent orders), and for explicit maps `w(s) = G'(x(s))ᵀλ(s)`
    /// identically. Exact part, per grid value `k`: the subgradient belongs
    /// to `∂f(x_k)`, the multipliers belong to the limiting normal cones at
    /// the perturbed points, and for domain-restricted maps the pair
    /// `(w_k, -λ_k)` is a limiting normal of the constraint graph.
    pub fn verify(&self, p: &ProblemInstance, xbar: &[Rational]) -> Result<bool, StatError> {
        let gc = &p.constraint;
        let (n, l) = (gc.n(), gc.l());
        if self.x_curve.len() != n
            || self.xstar_curve.len() != n
            || self.ytil_curve.len() != l
            || self.z_curve.len() != n
            || self.img_curve.len() != n
            || self.lambda_curve.len() != l
            || self.nu_curve.len() != n
            || self.ks.is_empty()
        {
            return Ok(false);
        }
        // Limits.
        let xdiff = curve_sub(&self.x_curve, &const_curve(xbar));
        if !xdiff.iter().all(vanishes)
            || !self.ytil_curve.iter().all(vanishes)
            || !self.z_curve.iter().all(vanishes)
            || !self.residual_curve().iter().all(vanishes)
        {
            return Ok(false);
        }
        if self.decoupled && self.z_curve.iter().any(|c| !c.is_zero()) {
            return Ok(false);
        }
        // Image structure for explicit maps: w(s) = G'(x(s))ᵀλ(s).
        if gc.domain().is_none() {
            let jac = gc.g().jacobian();
            for i in 0..n {
                let mut acc = RatFunc::zero(&crate::stationarity::regularity::svar());
                for (j, lam) in self.lambda_curve.iter().enumerate() {
                    acc = acc.add(&compose_poly(&jac[j][i], &self.x_curve).mul(lam));
                }
                if !acc.sub(&self.img_curve[i]).is_zero() {
                    return Ok(false);
                }
            }
        }
        // Exact replay on the grid.
        for &k in &self.ks {
            if k <= 0 {
                return Ok(false);
            }
            let s = rat(1, k);
            let (Some(x), Some(xstar), Some(ytil), Some(z), Some(img), Some(lam), Some(nu)) = (
                curve_eval(&self.x_curve, &s),
                curve_eval(&self.xstar_curve, &s),
                curve_eval(&self.ytil_curve, &s),
                curve_eval(&self.z_curve, &s),
                curve_eval(&self.img_curve, &s),
                curve_eval(&self.lambda_curve, &s),
                curve_eval(&self.nu_curve, &s),
            ) else {
                return Ok(false);
            };
            // Subgradient membership.
            let Ok(subs) = p.objective.subgradients(&x) else {
                return Ok(false);
            };
            let sub_ok = if p.objective.convexify() {
                in_convex_hull(&subs, &xstar)?
            } else {
                subs.contains(&xstar)
            };
            if !sub_ok {
                return Ok(false);
            }
            // Constraint-side memberships.
            if gc.domain().is_some() {
                let graph = gc.graph_union()?;
                let mut point = x.clone();
                point.extend(ytil.iter().cloned());
                if !graph.contains(&point) {
                    return Ok(false);
                }
                let mut normal = img.clone();
                normal.extend(lam.iter().map(|t| -t));
                if !limiting_normal_cone(&graph, &point)?.contains(&normal)? {
                    return Ok(false);
                }
            } else {
                let r = vsub(&gc.g().eval(&x), &ytil);
                if !gc.k().contains(&r) {
                    return Ok(false);
                }
                if !normal_cone_union(gc.k(), &r)?.contains(&lam)? {
                    return Ok(false);
                }
            }
            match gc.c() {
                None => {
                    if !is_zero_vec(&nu) || !is_zero_vec(&z) {
                        return Ok(false);
                    }
                }
                Some(c) => {
                    let u = if self.decoupled { x.clone() } else { vsub(&x, &z) };
                    if !c.contains(&u) {
                        return Ok(false);
                    }
                    if !normal_cone_union(c, &u)?.contains(&nu)? {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }
}

/// Default replay grid: seven decades of `k`.
fn default_ks() -> Vec<i64> {
    (0..=6).map(|j| 10i64.pow(j)).collect()
}

/// The constant witness sequence induced by an exact M-certificate:
/// `x ≡ x̄`, zero perturbations, multipliers frozen. This realizes the
/// implication from plain to asymptotic stationarity.
pub fn constant_witness(
    p: &ProblemInstance,
    xbar: &[Rational],
    cert: &MCert,
    decoupled: bool,
) -> AmSeqWitness {
    let gc = &p.constraint;
    // 0 = x* + w + ν pins the image part.
    let img: Vec<Rational> = cert
        .subgradient
        .iter()
        .zip(&cert.nu)
        .map(|(a, b)| -(a + b))
        .collect();
    AmSeqWitness {
        xstar_curve: const_curve(&cert.subgradient),
        x_curve: const_curve(xbar),
        ytil_curve: zero_curve(gc.l()),
        z_curve: zero_curve(gc.n()),
        img_curve: const_curve(&img),
        lambda_curve: const_curve(&cert.lambda),
        nu_curve: const_curve(&cert.nu),
        ks: default_ks(),
        decoupled,
    }
}

/// The multiplier image branches of `M̃(x̄, 0)` for affine maps over
/// polyhedral cones, materialized as generator cones in `x`-space.
/// `None` when the data is outside this fragment.
fn image_branches(
    p: &ProblemInstance,
    xbar: &[Rational],
) -> Result<Option<Vec<GenCone>>, StatError> {
    let gc = &p.constraint;
    if !gc.is_affine()
        || !gc.k().is_polyhedral()
        || gc.c().is_some_and(|c| !c.is_polyhedral())
    {
        return Ok(None);
    }
    let n = gc.n();
    let mut k_side: Vec<GenCone> = Vec::new();
    if gc.domain().is_some() {
        let graph = gc.graph_union()?;
        let mut base = xbar.to_vec();
        base.extend(vec![Rational::zero(); gc.l()]);
        for b in limiting_normal_cone(&graph, &base)?.branches() {
            // Project graph normals to their x-part (the λ-part is free).
            let proj = |vs: &[Vec<Rational>]| {
                vs.iter().map(|v| v[..n].to_vec()).collect::<Vec<_>>()
            };
            k_side.push(GenCone::new(n, proj(b.rays()), proj(b.lineality())));
        }
    } else {
        let gx = gc.g().eval(xbar);
        let jt = |v: &[Rational]| gc.g().jt_apply(xbar, v);
        for b in normal_cone_union(gc.k(), &gx)?.branches() {
            let rays: Vec<Vec<Rational>> = b.rays().iter().map(|r| jt(r)).collect();
            let lins: Vec<Vec<Rational>> = b.lineality().iter().map(|r| jt(r)).collect();
            k_side.push(GenCone::new(n, rays, lins));
        }
    }
    let c_side: Vec<GenCone> = match gc.c() {
        None => vec![GenCone::zero(n)],
        Some(c) => normal_cone_union(c, xbar)?.branches().to_vec(),
    };
    let mut out = Vec::new();
    for kb in &k_side {
        for cb in &c_side {
            out.push(minkowski_sum(kb, cb));
        }
    }
    Ok(Some(out))
}

/// Exact squared distance from `-∂f(x̄)` to the multiplier image set, for
/// affine maps over polyhedral cones. For point subdifferentials this is
/// the exact projection distance; for hull subdifferentials it is a
/// certified positive lower bound from an exact separating functional.
/// Returns `None` outside the affine-polyhedral fragment. A positive value
/// certifies that no asymptotically vanishing residual exists.
pub fn am_stationarity_gap(
    p: &ProblemInstance,
    xbar: &[Rational],
) -> Result<Option<Rational>, StatError> {
    let Some(branches) = image_branches(p, xbar)? else {
        return Ok(None);
    };
    let subs = p.objective.subgradients(xbar)?;
    let n = p.constraint.n();
    let mut best: Option<Rational> = None;
    let mut update = |v: Rational| {
        if best.as_ref().map_or(true, |b| &v < b) {
            best = Some(v);
        }
    };
    if p.objective.convexify() && subs.len() > 1 {
        // Separate hull(-∂f) from each branch: maximize β subject to
        // φ·(-s_i) ≥ β, φ supported on the branch polar, ‖φ‖∞ ≤ 1; then
        // dist² ≥ β²/‖φ‖².
        for b in &branches {
            let mut rows = Vec::new();
            let zero = Rational::zero();
            let one = Rational::one();
            for i in 0..n {
                let mut a = vec![zero.clone(); n + 1];
                a[i] = one.clone();
                rows.push(HRow::le(a.clone(), one.clone()));
                a[i] = -one.clone();
                rows.push(HRow::le(a, one.clone()));
            }
            for r in b.rays() {
                let mut a = r.to_vec();
                a.push(zero.clone());
                rows.push(HRow::le(a, zero.clone()));
            }
            for r in b.lineality() {
                let mut a = r.to_vec();
                a.push(zero.clone());
                rows.push(HRow::eqn(a, zero.clone()));
            }
            for s in &subs {
                // β - φ·(-s) ≤ 0
                let mut a: Vec<Rational> = s.to_vec();
                a.push(one.clone());
                rows.push(HRow::le(a, zero.clone()));
            }
            let mut obj = vec![zero.clone(); n + 1];
            obj[n] = one.clone();
            let h = HPolyhedron::new_unchecked(n + 1, rows);
            match lp_feasible(&h, Some(&obj))? {
                LpOutcome::Optimal { point, value } if value.is_positive() => {
                    let phi = &point[..n];
                    let norm_sq = phi
                        .iter()
                        .fold(Rational::zero(), |acc, c| acc + c * c);
                    if norm_sq.is_zero() {
                        update(Rational::zero());
                    } else {
                        update(&value * &value / norm_sq);
                    }
                }
                _ => update(Rational::zero()),
            }
        }
    } else {
        for s in &subs {
            let target: Vec<Rational> = s.iter().map(|t| -t).collect();
            for b in &branches {
                let h = gencone_to_hcone(b)?;
                if let Some((_, dist_sq)) = project_polyhedron_exact(&h, &target)? {
                    update(dist_sq);
                }
            }
        }
    }
    Ok(best)
}

/// Outcome of an asymptotic-stationarity check.
#[derive(Debug, Clone)]
pub struct AmStatReport {
    pub verdict: Verdict,
    /// Certification witness (constant or explicit sequence).
    pub witness: Option<AmSeqWitness>,
    /// Exact positive squared gap, when computable: the distance from
    /// `-∂f(x̄)` to the multiplier image set.
    pub gap_sq: Option<Rational>,
    pub detail: String,
}

/// Decide asymptotic stationarity at `x̄` (decoupled variant when
/// `decoupled` and `C` is explicit).
///
/// Ladder: plain stationarity certifies via a constant sequence; an
/// explicit witness certifies after exact replay; a regular point that is
/// not plainly stationary cannot be asymptotically stationary (the
/// regularity ladder supplies the proof, and the affine-polyhedral gap
/// quantifies it); anything else is `Unknown` — asymptotic
/// non-stationarity is not decidable by search in general.
pub fn am_stationarity_check(
    p: &ProblemInstance,
    xbar: &[Rational],
    provided: Option<&AmSeqWitness>,
    decoupled: bool,
    cfg: &RegularityConfig,
) -> Result<AmStatReport, StatError> {
    let m = m_stationarity_check(p, xbar)?;
    if m.verdict == Verdict::Proved {
        let cert = m.certificate.expect("proved stationarity carries a certificate");
        let w = constant_witness(p, xbar, &cert, decoupled && p.constraint.c().is_some());
        debug_assert!(w.verify(p, xbar).unwrap_or(false));
        return Ok(AmStatReport {
            verdict: Verdict::Proved,
            witness: Some(w),
            gap_sq: None,
            detail: "constant sequence induced by an exact stationarity certificate"
                .to_string(),
        });
    }
    let mut witness_note = String::new();
    if let Some(w) = provided {
        if (!decoupled || w.decoupled) && w.verify(p, xbar)? {
            return Ok(AmStatReport {
                verdict: Verdict::Proved,
                witness: Some(w.clone()),
                gap_sq: None,
                detail: "explicit witness sequence replayed exactly".to_string(),
            });
        }
        witness_note = "; a provided witness sequence failed exact replay".to_string();
    }
    let reg = if decoupled {
        dam_regularity_check(p, xbar, cfg)?
    } else {
        am_regularity_check(p, xbar, cfg)?
    };
    if reg.verdict == Verdict::Proved {
        let gap_sq = am_stationarity_gap(p, xbar)?;
        debug_assert!(gap_sq.as_ref().map_or(true, |g| g.is_positive()));
        return Ok(AmStatReport {
            verdict: Verdict::Refuted,
            witness: None,
            gap_sq,
            detail: format!(
                "the point is not stationary, yet the multiplier map is asymptotically \
                 regular here ({}); asymptotic stationarity would force stationarity{}",
                reg.detail, witness_note
            ),
        });
    }
    Ok(AmStatReport {
        verdict: Verdict::Unknown,
        witness: None,
        gap_sq: None,
        detail: format!(
            "not stationary and no regularity proof applies; asymptotic stationarity \
             cannot be decided by finite search{}",
            witness_note
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{rat_int, rvec, var_names, Polynomial};
    use crate::maps::GeometricConstraint;
    use crate::polyhedral::{HPolyhedron, PolyUnion};
    use crate::problem::Objective;
    use crate::stationarity::testkit::{inst, inst_piecewise, wedge_union};

    fn nonpos_line() -> PolyUnion {
        PolyUnion::single(HPolyhedron::nonpos_orthant(1))
    }

    fn cfg() -> RegularityConfig {
        RegularityConfig::default()
    }

    fn svar() -> Vec<String> {
        crate::stationarity::regularity::svar()
    }

    #[test]
    fn stationary_points_certify_with_a_constant_sequence() {
        let p = inst(&["x1"], "-x1", &["x1", "x1^3"], wedge_union(), None, &rvec(&[0]));
        let r = am_stationarity_check(&p, &rvec(&[0]), None, false, &cfg()).unwrap();
        assert_eq!(r.verdict, Verdict::Proved);
        let w = r.witness.unwrap();
        assert!(w.verify(&p, &rvec(&[0])).unwrap());
        assert!(w.residual_curve().iter().all(|c| c.is_zero()));
    }

    #[test]
    fn concave_kink_over_a_point_cone_has_unit_gap() {
        // f = -|x|, G ≡ 0 into K = {0}: the image set is {0} while the
        // subdifferential is {-1, 1}; the exact gap is 1.
        let region_neg = HPolyhedron::nonpos_orthant(1);
        let region_pos = HPolyhedron::nonneg_orthant(1);
        let p = inst_piecewise(
            &["x1"],
            &[(region_neg, "x1"), (region_pos, "-x1")],
            false,
            &["0*x1"],
            PolyUnion::single(HPolyhedron::point(&rvec(&[0]))),
            None,
            &rvec(&[0]),
        );
        let r = am_stationarity_check(&p, &rvec(&[0]), None, false, &cfg()).unwrap();
        assert_eq!(r.verdict, Verdict::Refuted);
        assert_eq!(r.gap_sq, Some(rat_int(1)));
    }

    #[test]
    fn diverging_multiplier_sequence_certifies_the_parabola() {
        // f = x, G = x², K = R₋ at 0: not stationary, not regular — but the
        // sequence x = -s, ỹ = s², λ = 1/(2s) has identically zero residual.
        let p = inst(&["x1"], "x1", &["x1^2"], nonpos_line(), None, &rvec(&[0]));
        // Without a witness the ladder cannot decide.
        let bare = am_stationarity_check(&p, &rvec(&[0]), None, false, &cfg()).unwrap();
        assert_eq!(bare.verdict, Verdict::Unknown);

        let sv = svar();
        let s = Polynomial::var(&sv, 0);
        let witness = AmSeqWitness {
            xstar_curve: const_curve(&rvec(&[1])),
            x_curve: vec![RatFunc::from_poly(s.neg())],
            ytil_curve: vec![RatFunc::from_poly(s.pow(2))],
            z_curve: zero_curve(1),
            // w = G'(x(s))λ(s) = (-2s)·(1/(2s)) = -1.
            img_curve: const_curve(&rvec(&[-1])),
            lambda_curve: vec![RatFunc::new(
                Polynomial::constant(&sv, rat(1, 2)),
                s.clone(),
            )],
            nu_curve: zero_curve(1),
            ks: (0..=6).map(|j| 10i64.pow(j)).collect(),
            decoupled: false,
        };
        assert!(witness.verify(&p, &rvec(&[0])).unwrap());
        let r = am_stationarity_check(&p, &rvec(&[0]), Some(&witness), false, &cfg()).unwrap();
        assert_eq!(r.verdict, Verdict::Proved);
        assert!(r.detail.contains("explicit witness"));
    }

    #[test]
    fn tampered_witness_sequences_fail_replay() {
        let p = inst(&["x1"], "x1", &["x1^2"], nonpos_line(), None, &rvec(&[0]));
        let sv = svar();
        let s = Polynomial::var(&sv, 0);
        let mut witness = AmSeqWitness {
            xstar_curve: const_curve(&rvec(&[1])),
            x_curve: vec![RatFunc::from_poly(s.neg())],
            ytil_curve: vec![RatFunc::from_poly(s.pow(2))],
            z_curve: zero_curve(1),
            img_curve: const_curve(&rvec(&[-1])),
            lambda_curve: vec![RatFunc::new(
                Polynomial::constant(&sv, rat(1, 2)),
                s.clone(),
            )],
            nu_curve: zero_curve(1),
            ks: vec![1, 10, 100],
            decoupled: false,
        };
        // Flip the multiplier sign: λ < 0 leaves N_K.
        witness.lambda_curve = vec![witness.lambda_curve[0].neg()];
        witness.img_curve = const_curve(&rvec(&[1]));
        assert!(!witness.verify(&p, &rvec(&[0])).unwrap());
        let r = am_stationarity_check(&p, &rvec(&[0]), Some(&witness), false, &cfg()).unwrap();
        assert_eq!(r.verdict, Verdict::Unknown);
        assert!(r.detail.contains("failed exact replay"));
    }

    #[test]
    fn contrapositive_refutation_without_a_gap_value() {
        // G = x + x³ satisfies the abnormal-multiplier qualification, so
        // regularity holds; f = x is not stationary there. The data is not
        // affine, so no numeric gap is reported.
        let p = inst(&["x1"], "x1", &["x1 + x1^3"], nonpos_line(), None, &rvec(&[0]));
        let r = am_stationarity_check(&p, &rvec(&[0]), None, false, &cfg()).unwrap();
        assert_eq!(r.verdict, Verdict::Refuted);
        assert!(r.gap_sq.is_none());
        assert!(r.detail.contains("regular"));
    }

    #[test]
    fn coupled_and_decoupled_verdicts_split_on_the_signed_parabola() {
        // G = -x², K = R₋, C = R₊, f = -x at 0. Decoupled: regular and not
        // stationary ⇒ refuted. Coupled: regularity fails, but the witness
        // x = -s, λ = 1/(2s) gives residual zero ⇒ certified.
        let k = nonpos_line();
        let c = PolyUnion::single(HPolyhedron::nonneg_orthant(1));
        let p = inst(&["x1"], "-x1", &["-x1^2"], k, Some(c), &rvec(&[0]));
        let dam = am_stationarity_check(&p, &rvec(&[0]), None, true, &cfg()).unwrap();
        assert_eq!(dam.verdict, Verdict::Refuted);

        let sv = svar();
        let s = Polynomial::var(&sv, 0);
        let witness = AmSeqWitness {
            xstar_curve: const_curve(&rvec(&[-1])),
            x_curve: vec![RatFunc::from_poly(s.neg())],
            ytil_curve: vec![RatFunc::from_poly(s.pow(2).neg())],
            z_curve: vec![RatFunc::from_poly(s.neg())],
            // w = G'(x)λ = (-2x)·λ = (2s)·(1/(2s)) = 1.
            img_curve: const_curve(&rvec(&[1])),
            lambda_curve: vec![RatFunc::new(
                Polynomial::constant(&sv, rat(1, 2)),
                s.clone(),
            )],
            nu_curve: zero_curve(1),
            ks: (0..=6).map(|j| 10i64.pow(j)).collect(),
            decoupled: false,
        };
        assert!(witness.verify(&p, &rvec(&[0])).unwrap());
        let am = am_stationarity_check(&p, &rvec(&[0]), Some(&witness), false, &cfg()).unwrap();
        assert_eq!(am.verdict, Verdict::Proved);
        // The coupled witness does not certify the decoupled notion.
        let dam2 =
            am_stationarity_check(&p, &rvec(&[0]), Some(&witness), true, &cfg()).unwrap();
        assert_eq!(dam2.verdict, Verdict::Refuted);
    }

    #[test]
    fn hull_subdifferentials_get_a_certified_separation_bound() {
        // f = max-free piecewise: x for x ≤ 0, 3x for x ≥ 0, convexified:
        // ∂f(0) = [1, 3]; G ≡ 0, K = {0} gives image set {0}; dist = 1.
        let p = inst_piecewise(
            &["x1"],
            &[
                (HPolyhedron::nonpos_orthant(1), "x1"),
                (HPolyhedron::nonneg_orthant(1), "3*x1"),
            ],
            true,
            &["0*x1"],
            PolyUnion::single(HPolyhedron::point(&rvec(&[0]))),
            None,
            &rvec(&[0]),
        );
        let r = am_stationarity_check(&p, &rvec(&[0]), None, false, &cfg()).unwrap();
        assert_eq!(r.verdict, Verdict::Refuted);
        assert_eq!(r.gap_sq, Some(rat_int(1)));
    }

    #[test]
    fn domain_certificates_replay_through_graph_normals() {
        // G = x into K = R₋ with domain {x = 0}: the graph is {0} × R₊,
        // whose normal cone at the origin is R × R₋; f = x is stationary.
        let names = var_names(&["x1"]);
        let g = crate::expr::PolyMap::parse(&names, &["x1"]).unwrap();
        let domain =
            HPolyhedron::new(1, vec![HRow::eqn(rvec(&[1]), Rational::zero())]).unwrap();
        let constraint = GeometricConstraint::new(g, nonpos_line(), None)
            .unwrap()
            .with_domain(domain)
            .unwrap();
        let p = ProblemInstance {
            name: "pinned-line".to_string(),
            objective: Objective::Smooth(
                crate::expr::parse_polynomial("x1", &names).unwrap(),
            ),
            constraint,
            point: rvec(&[0]),
            m_explicit: None,
            expected: Default::default(),
        };
        let r = am_stationarity_check(&p, &rvec(&[0]), None, false, &cfg()).unwrap();
        assert_eq!(r.verdict, Verdict::Proved, "detail: {}", r.detail);
        let w = r.witness.unwrap();
        assert!(w.verify(&p, &rvec(&[0])).unwrap());
    }
}
