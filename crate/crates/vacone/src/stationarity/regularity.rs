//! Asymptotic regularity of the multiplier map.
//!
//! A feasible `x̄` is *asymptotically regular* when every limit of
//! multiplier images `G'(x_k)ᵀλ_k + ν_k` taken along `(x_k, y_k) → (x̄, 0)`
//! already belongs to the base multiplier set `M̃(x̄, 0)`. The coupled
//! variant lets the `C`-part argument drift independently of `x_k`; the
//! decoupled variant pins `x_k ∈ C`.
//!
//! # Decision strategy
//!
//! The check is a ladder of exact rungs:
//! 1. fully polyhedral data — regularity holds at every feasible point;
//! 2. no nonzero abnormal multiplier — nearby multiplier sequences whose
//!    images converge are bounded, and limits of bounded sequences stay in
//!    the (closed) base branches;
//! 3. constant multiplier images — when each branch generator's image
//!    `x ↦ G'(x)ᵀg` is a constant polynomial (and the cone data is
//!    polyhedral), nearby multiplier sets are subsets of the base set;
//! 4. isolated reference point (decoupled only) — if `C ∩ domain` is
//!    locally `{x̄}`, the decoupled limit degenerates to `x̄` itself and
//!    outer semicontinuity of polyhedral normal cones finishes the proof;
//! 5. symbolic refutation search — along rational curves `x(s) → x̄` the
//!    multiplier images form rational-function curves; conic kernel
//!    combinations with vanishing constant term produce, after exact
//!    Laurent rescaling, candidate limits that are certified members of
//!    nearby multiplier sets; any candidate that fails exact membership in
//!    `M̃(x̄, 0)` refutes regularity with a re-checkable witness curve;
//! 6. one-dimensional closure — for `n = 1` with polyhedral cone data the
//!    two side curves exhaust all limit directions, so an unrefuted search
//!    is a proof.
//!
//! Anything else is reported `Unknown` with a resolution note.

use crate::expr::{
    compose_poly, curve_eval, lowest_order_limit, rat, var_names, Polynomial, RatFunc, Rational,
};
use crate::linalg::{is_zero_vec, norm1, nullspace};
use crate::maps::{
    m_map_membership, m_map_membership_coupled, normal_cone_union, GeometricConstraint,
};
use crate::polyhedral::{
    hcone_generators, intersect_gencones, limiting_normal_cone_detailed, Block, GenCone,
    HPolyhedron, HRow, PolyUnion, SmoothConvexBlock,
};
use crate::problem::ProblemInstance;
use crate::stationarity::{nnamcq_check, polyhedrality_check, StatError, Verdict};
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tunables of the regularity search.
#[derive(Debug, Clone)]
pub struct RegularityConfig {
    /// Sample values of the curve parameter used to certify witness
    /// memberships (exact rationals, approaching zero).
    pub radii: Vec<Rational>,
    /// Number of seeded integer directions added to the axis directions.
    pub n_directions: usize,
    /// Seed for the direction sampler.
    pub seed: u64,
    /// Multiplier scaling exponents retained for report compatibility; the
    /// symbolic engine determines the exact scaling order itself, so these
    /// do not influence verdicts.
    pub alpha_grid: Vec<Rational>,
}

impl Default for RegularityConfig {
    fn default() -> Self {
        RegularityConfig {
            radii: (1..=6).map(|k| rat(1, 10i64.pow(k))).collect(),
            n_directions: 64,
            seed: 17,
            alpha_grid: vec![rat(0, 1), rat(1, 2), rat(1, 1), rat(2, 1), rat(3, 1)],
        }
    }
}

/// Refutation witness: a curve of points with certified multiplier images
/// whose exact limit escapes the base multiplier set.
#[derive(Debug, Clone)]
pub struct AmRegWitness {
    /// The escaping limit (up to positive scaling).
    pub candidate: Vec<Rational>,
    /// Conic weights applied to the generator curves.
    pub weights: Vec<Rational>,
    /// Laurent order of the rescaling `s^(-order)` (≥ 1: multipliers blow up).
    pub order: isize,
    /// Curve of base points `x(s)`.
    pub x_curve: Vec<RatFunc>,
    /// Curve of `Γ`-part perturbations `ỹ(s)`.
    pub ytil_curve: Vec<RatFunc>,
    /// Curve of `C`-part perturbations `z(s)` (zero when decoupled).
    pub z_curve: Vec<RatFunc>,
    /// Curve of multiplier images `x*(s)`; its limit is `candidate`.
    pub xstar_curve: Vec<RatFunc>,
    /// Curve of `K`-part multipliers `λ(s)` (reporting aid).
    pub lambda_curve: Vec<RatFunc>,
    /// Curve of `C`-part multipliers `ν(s)` (reporting aid).
    pub nu_curve: Vec<RatFunc>,
    /// Parameter values at which memberships are re-verified.
    pub samples: Vec<Rational>,
    /// Whether the witness lives in the decoupled regime.
    pub decoupled: bool,
}

impl AmRegWitness {
    /// Re-verify the witness from scratch: every sampled point carries an
    /// exact membership, and the limit candidate exactly fails membership
    /// in the base set.
    pub fn verify(&self, p: &ProblemInstance, xbar: &[Rational]) -> Result<bool, StatError> {
        let gc = &p.constraint;
        if m_map_membership(gc, xbar, &vec![Rational::zero(); gc.l()], &self.candidate)?
            .is_member()
        {
            return Ok(false);
        }
        let mut verified = 0usize;
        for s in &self.samples {
            let (Some(x), Some(ytil), Some(z), Some(xstar)) = (
                curve_eval(&self.x_curve, s),
                curve_eval(&self.ytil_curve, s),
                curve_eval(&self.z_curve, s),
                curve_eval(&self.xstar_curve, s),
            ) else {
                continue;
            };
            let member = if self.decoupled {
                m_map_membership(gc, &x, &ytil, &xstar)?.is_member()
            } else {
                m_map_membership_coupled(gc, &x, &ytil, &z, &xstar)?.is_member()
            };
            if !member {
                return Ok(false);
            }
            verified += 1;
        }
        Ok(verified > 0)
    }
}

/// Outcome of a regularity check.
#[derive(Debug, Clone)]
pub struct RegularityOutcome {
    pub verdict: Verdict,
    pub witness: Option<AmRegWitness>,
    /// Which rung decided, or why the answer is `Unknown`.
    pub detail: String,
}

/// Coupled asymptotic regularity at `x̄`.
pub fn am_regularity_check(
    p: &ProblemInstance,
    xbar: &[Rational],
    cfg: &RegularityConfig,
) -> Result<RegularityOutcome, StatError> {
    regularity_ladder(p, xbar, cfg, false)
}

/// Decoupled asymptotic regularity at `x̄`: limits are taken along
/// `x ∈ C` only, with the `C`-part normal cone evaluated at `x` itself.
/// Without an explicit `C` this coincides with the coupled check.
pub fn dam_regularity_check(
    p: &ProblemInstance,
    xbar: &[Rational],
    cfg: &RegularityConfig,
) -> Result<RegularityOutcome, StatError> {
    if p.constraint.c().is_none() {
        return regularity_ladder(p, xbar, cfg, false);
    }
    regularity_ladder(p, xbar, cfg, true)
}

/// Cone-continuity check for nonlinear-programming shaped data: requires
/// `K = R₋^p × {0}^q` (unit rows, zero right-hand sides) and no `C`, then
/// delegates to the coupled regularity ladder, to which the property is
/// equivalent in this setting.
pub fn ccp_check(
    p: &ProblemInstance,
    xbar: &[Rational],
    cfg: &RegularityConfig,
) -> Result<RegularityOutcome, StatError> {
    let gc = &p.constraint;
    if gc.c().is_some() {
        return Err(StatError::Unsupported(
            "cone-continuity check expects no explicit C".to_string(),
        ));
    }
    let blocks = gc.k().blocks();
    let [Block::Poly(h)] = blocks else {
        return Err(StatError::Unsupported(
            "cone-continuity check expects a single polyhedral K".to_string(),
        ));
    };
    let mut covered = vec![false; h.dim()];
    for row in h.rows() {
        if !row.b.is_zero() {
            return Err(StatError::Unsupported(
                "cone-continuity check expects homogeneous rows".to_string(),
            ));
        }
        let nonzero: Vec<usize> = (0..h.dim()).filter(|i| !row.a[*i].is_zero()).collect();
        let [i] = nonzero[..] else {
            return Err(StatError::Unsupported(
                "cone-continuity check expects unit coordinate rows".to_string(),
            ));
        };
        if row.a[i] <= Rational::zero() {
            return Err(StatError::Unsupported(
                "cone-continuity check expects rows of the form y_i ≤ 0 or y_i = 0".to_string(),
            ));
        }
        covered[i] = true;
    }
    if covered.iter().any(|c| !c) {
        return Err(StatError::Unsupported(
            "cone-continuity check expects every component constrained".to_string(),
        ));
    }
    am_regularity_check(p, xbar, cfg)
}

// ---------------------------------------------------------------------------
// Engine internals
// ---------------------------------------------------------------------------

/// One normal-cone generator transported along a curve: its image in
/// `x*`-space together with the multiplier parts that produce it.
struct GenCurve {
    img: Vec<RatFunc>,
    lam: Vec<RatFunc>,
    nu: Vec<RatFunc>,
}

/// A search context: a base-point curve plus a fixed convex branch choice
/// on the `K`- and `C`-sides, represented by generator curves.
struct Context {
    x_curve: Vec<RatFunc>,
    ytil_curve: Vec<RatFunc>,
    /// `z(s) = x(s) - c(s)` where `ν(s) ∈ N_C(c(s))`.
    z_curve: Vec<RatFunc>,
    gens: Vec<GenCurve>,
}

pub(crate) fn svar() -> Vec<String> {
    var_names(&["s"])
}

pub(crate) fn const_rf(c: &Rational) -> RatFunc {
    RatFunc::constant(&svar(), c.clone())
}

pub(crate) fn const_curve(v: &[Rational]) -> Vec<RatFunc> {
    v.iter().map(const_rf).collect()
}

pub(crate) fn zero_curve(dim: usize) -> Vec<RatFunc> {
    vec![RatFunc::zero(&svar()); dim]
}

/// The affine curve `x̄ + s·d`.
pub(crate) fn affine_curve(xbar: &[Rational], d: &[Rational]) -> Vec<RatFunc> {
    let sv = svar();
    xbar.iter()
        .zip(d)
        .map(|(x0, di)| {
            let p = Polynomial::var(&sv, 0)
                .scale(di)
                .add(&Polynomial::constant(&sv, x0.clone()));
            RatFunc::from_poly(p)
        })
        .collect()
}

pub(crate) fn curve_sub(a: &[RatFunc], b: &[RatFunc]) -> Vec<RatFunc> {
    a.iter().zip(b).map(|(x, y)| x.sub(y)).collect()
}

/// Sign of a rational function for small `s > 0`: -1, 0, or +1.
pub(crate) fn sign_near_zero(rf: &RatFunc) -> i8 {
    match rf.order_at_zero() {
        None => 0,
        Some(_) => {
            if rf.leading_coeff_at_zero().is_positive() {
                1
            } else {
                -1
            }
        }
    }
}

/// Does the curve stay in the polyhedron for all small `s > 0`?
pub(crate) fn curve_in_hpoly(h: &HPolyhedron, curve: &[RatFunc]) -> bool {
    h.rows().iter().all(|r| {
        let res = row_residual(r, curve);
        if r.eq {
            res.is_zero()
        } else {
            sign_near_zero(&res) <= 0
        }
    })
}

/// `a·curve - b` as a rational function.
pub(crate) fn row_residual(r: &HRow, curve: &[RatFunc]) -> RatFunc {
    let mut acc = const_rf(&(-r.b.clone()));
    for (c, comp) in r.a.iter().zip(curve) {
        acc = acc.add(&comp.scale(c));
    }
    acc
}

/// Does the curve stay in a union block for all small `s > 0`?
pub(crate) fn curve_in_block(b: &Block, curve: &[RatFunc]) -> bool {
    match b {
        Block::Poly(h) => curve_in_hpoly(h, curve),
        Block::Smooth(s) => s
            .inequalities()
            .iter()
            .all(|g| sign_near_zero(&compose_poly(g, curve)) <= 0),
    }
}

/// Regular normal cone of a polyhedron along a curve inside it, from the
/// rows active identically in `s`.
fn hpoly_normal_along(h: &HPolyhedron, curve: &[RatFunc]) -> GenCone {
    let mut rays = Vec::new();
    let mut lin = Vec::new();
    for r in h.rows() {
        let res = row_residual(r, curve);
        if res.is_zero() {
            if r.eq {
                lin.push(r.a.clone());
            } else {
                rays.push(r.a.clone());
            }
        } else if r.eq {
            // An equality row that fails identically: curve not in h.
            return GenCone::zero(h.dim());
        }
    }
    GenCone::new(h.dim(), rays, lin)
}

/// Gradient curves of the inequalities active identically along a curve in
/// a smooth convex block.
fn smooth_grads_along(b: &SmoothConvexBlock, curve: &[RatFunc]) -> Vec<Vec<RatFunc>> {
    let mut out = Vec::new();
    for g in b.inequalities() {
        if compose_poly(g, curve).is_zero() {
            let grad: Vec<RatFunc> =
                g.gradient().iter().map(|gi| compose_poly(gi, curve)).collect();
            out.push(grad);
        }
    }
    out
}

/// Image of a multiplier-direction curve through `G'(x(s))ᵀ`.
fn jt_image(jac_curves: &[Vec<RatFunc>], lam: &[RatFunc]) -> Vec<RatFunc> {
    let n = jac_curves.first().map_or(0, |r| r.len());
    let mut img = zero_curve(n);
    for (row, l) in jac_curves.iter().zip(lam) {
        for (acc, entry) in img.iter_mut().zip(row) {
            *acc = acc.add(&entry.mul(l));
        }
    }
    img
}

/// `C`-side choices available in a context.
enum CChoice {
    None,
    /// Fixed convex branch of `N_C` at a constant argument curve.
    Branch { c_curve: Vec<RatFunc>, cone: GenCone },
    /// Gradient curves of a smooth block along a moving argument curve.
    SmoothCurve { c_curve: Vec<RatFunc>, grads: Vec<Vec<RatFunc>> },
}

/// Enumerate `C`-side choices for the coupled regime (the argument curve
/// `c(s)` is free as long as `c(s) → x̄` within `C`).
fn c_choices_coupled(
    c: Option<&PolyUnion>,
    xbar: &[Rational],
) -> Result<Option<Vec<CChoice>>, StatError> {
    let Some(c) = c else {
        return Ok(Some(vec![CChoice::None]));
    };
    if c.is_polyhedral() {
        // All limiting branches are realized at x̄ itself.
        let u = normal_cone_union(c, xbar)?;
        return Ok(Some(
            u.branches()
                .iter()
                .map(|b| CChoice::Branch { c_curve: const_curve(xbar), cone: b.clone() })
                .collect(),
        ));
    }
    let [Block::Smooth(sb)] = c.blocks() else {
        return Ok(None);
    };
    let mut out = Vec::new();
    // Constant choice at x̄.
    out.push(CChoice::Branch {
        c_curve: const_curve(xbar),
        cone: sb.normal_cone(xbar)?,
    });
    // Boundary curves anchored at x̄.
    let zero = Rational::zero();
    for curve in sb.curves() {
        let at0 = curve_eval(curve, &zero);
        if at0.as_deref() != Some(xbar) {
            continue;
        }
        let grads = smooth_grads_along(sb, curve);
        if !grads.is_empty() {
            out.push(CChoice::SmoothCurve { c_curve: curve.clone(), grads });
        }
    }
    Ok(Some(out))
}

/// The `C`-side choice forced in the decoupled regime: `c(s) = x(s)`, with
/// the normal cone taken along the curve. Returns `None` when the curve
/// leaves `C`, `Some(None)` when the structure is unsupported.
#[allow(clippy::type_complexity)]
fn c_choice_decoupled(
    c: &PolyUnion,
    x_curve: &[RatFunc],
) -> Result<Option<Option<CChoice>>, StatError> {
    if c.is_polyhedral() {
        let inside: Vec<&HPolyhedron> = c
            .blocks()
            .iter()
            .filter_map(|b| match b {
                Block::Poly(h) if curve_in_hpoly(h, x_curve) => Some(h),
                _ => None,
            })
            .collect();
        if inside.is_empty() {
            return Ok(None);
        }
        // Regular normal cone of the union along the curve: the
        // intersection of the blockwise cones.
        let mut cone = hpoly_normal_along(inside[0], x_curve);
        for h in &inside[1..] {
            cone = intersect_gencones(&cone, &hpoly_normal_along(h, x_curve))?;
        }
        return Ok(Some(Some(CChoice::Branch { c_curve: x_curve.to_vec(), cone })));
    }
    let [Block::Smooth(sb)] = c.blocks() else {
        return Ok(Some(None));
    };
    if !curve_in_block(&Block::Smooth(sb.clone()), x_curve) {
        return Ok(None);
    }
    let grads = smooth_grads_along(sb, x_curve);
    Ok(Some(Some(CChoice::SmoothCurve { c_curve: x_curve.to_vec(), grads })))
}

/// `K`-side choices: convex branches with their residual curves `r(s)`
/// (so that `λ(s) ∈ N_K(r(s))`) and multiplier-direction curves.
enum KChoice {
    /// Polyhedral branch at the constant residual `r̄`.
    Branch { cone: GenCone },
    /// Active-gradient directions of a smooth block along a residual curve.
    SmoothCurve { r_curve: Vec<RatFunc>, grads: Vec<Vec<RatFunc>> },
}

fn k_choices(
    k: &PolyUnion,
    rbar: &[Rational],
) -> Result<Option<Vec<KChoice>>, StatError> {
    if k.is_polyhedral() {
        let u = normal_cone_union(k, rbar)?;
        return Ok(Some(
            u.branches().iter().map(|b| KChoice::Branch { cone: b.clone() }).collect(),
        ));
    }
    let [Block::Smooth(sb)] = k.blocks() else {
        return Ok(None);
    };
    let mut out = Vec::new();
    out.push(KChoice::Branch { cone: sb.normal_cone(rbar)? });
    let zero = Rational::zero();
    for curve in sb.curves() {
        if curve_eval(curve, &zero).as_deref() != Some(rbar) {
            continue;
        }
        let grads = smooth_grads_along(sb, curve);
        if !grads.is_empty() {
            out.push(KChoice::SmoothCurve { r_curve: curve.clone(), grads });
        }
    }
    Ok(Some(out))
}

/// Direction set: `±e_i`, optionally the zero direction, then seeded
/// integer directions with entries in `[-3, 3]`.
fn directions(n: usize, cfg: &RegularityConfig, include_zero: bool) -> Vec<Vec<Rational>> {
    let mut dirs: Vec<Vec<i64>> = Vec::new();
    if include_zero {
        dirs.push(vec![0; n]);
    }
    for i in 0..n {
        for sign in [1i64, -1] {
            let mut d = vec![0i64; n];
            d[i] = sign;
            dirs.push(d);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut guard = 0usize;
    while dirs.len() < cfg.n_directions + 2 * n + usize::from(include_zero)
        && guard < 50 * cfg.n_directions
    {
        guard += 1;
        let d: Vec<i64> = (0..n).map(|_| rng.gen_range(-3..=3)).collect();
        if d.iter().all(|c| *c == 0) || dirs.contains(&d) {
            continue;
        }
        dirs.push(d);
    }
    dirs.into_iter()
        .map(|d| d.into_iter().map(|c| Rational::from_integer(c.into())).collect())
        .collect()
}

/// Assemble the generator curves for a `(K-choice, C-choice)` pair along a
/// base-point curve. Returns the context, or `None` when a generator curve
/// is unbounded near zero (which cannot occur for admissible data).
fn make_context(
    gc: &GeometricConstraint,
    jac_curves: &[Vec<RatFunc>],
    g_curve: &[RatFunc],
    x_curve: &[RatFunc],
    kc: &KChoice,
    cc: &CChoice,
) -> Option<Context> {
    let n = gc.n();
    let l = gc.l();
    let mut gens = Vec::new();
    let ytil_curve;
    match kc {
        KChoice::Branch { cone } => {
            // Constant residual r̄ = G(x̄): ỹ(s) = G(x(s)) - r̄.
            let rbar_curve = const_curve(&gc.g().eval(&eval_at_zero(x_curve)?));
            ytil_curve = curve_sub(g_curve, &rbar_curve);
            for g in cone.spanning_vectors() {
                let lam = const_curve(&g);
                let img = jt_image(jac_curves, &lam);
                gens.push(GenCurve { img, lam, nu: zero_curve(n) });
            }
        }
        KChoice::SmoothCurve { r_curve, grads } => {
            ytil_curve = curve_sub(g_curve, r_curve);
            for grad in grads {
                let img = jt_image(jac_curves, grad);
                gens.push(GenCurve { img, lam: grad.clone(), nu: zero_curve(n) });
            }
        }
    }
    let z_curve;
    match cc {
        CChoice::None => {
            z_curve = zero_curve(n);
        }
        CChoice::Branch { c_curve, cone } => {
            z_curve = curve_sub(x_curve, c_curve);
            for q in cone.spanning_vectors() {
                gens.push(GenCurve {
                    img: const_curve(&q),
                    lam: zero_curve(l),
                    nu: const_curve(&q),
                });
            }
        }
        CChoice::SmoothCurve { c_curve, grads } => {
            z_curve = curve_sub(x_curve, c_curve);
            for grad in grads {
                gens.push(GenCurve { img: grad.clone(), lam: zero_curve(l), nu: grad.clone() });
            }
        }
    }
    // Drop identically-zero images and reject unbounded ones.
    let mut kept = Vec::new();
    for g in gens {
        let orders: Vec<Option<isize>> = g.img.iter().map(|c| c.order_at_zero()).collect();
        if orders.iter().flatten().any(|o| *o < 0) {
            return None;
        }
        if orders.iter().all(|o| o.is_none()) {
            continue;
        }
        kept.push(g);
    }
    Some(Context {
        x_curve: x_curve.to_vec(),
        ytil_curve,
        z_curve,
        gens: kept,
    })
}

fn eval_at_zero(curve: &[RatFunc]) -> Option<Vec<Rational>> {
    curve_eval(curve, &Rational::zero())
}

/// Candidate limits from one context: conic kernel combinations of the
/// generator curves, rescaled to their exact Laurent order.
struct Candidate {
    vector: Vec<Rational>,
    weights: Vec<Rational>,
    order: isize,
}

fn kernel_candidates(ctx: &Context) -> Result<Vec<Candidate>, StatError> {
    let m = ctx.gens.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let n = ctx.gens[0].img.len();
    let zero = Rational::zero();
    // W0: constant terms of the image curves.
    let mut w0 = vec![vec![zero.clone(); m]; n];
    for (i, g) in ctx.gens.iter().enumerate() {
        for (d, comp) in g.img.iter().enumerate() {
            if let Some(v) = comp.eval(&zero) {
                w0[d][i] = v;
            } else {
                return Ok(Vec::new()); // pole at 0: reject context
            }
        }
    }
    // Kernel cone {a >= 0 : W0 a = 0}.
    let mut rows = Vec::new();
    for i in 0..m {
        let mut a = vec![zero.clone(); m];
        a[i] = -Rational::one();
        rows.push(HRow::le(a, zero.clone()));
    }
    for r in &w0 {
        rows.push(HRow::eqn(r.clone(), zero.clone()));
    }
    let cone = hcone_generators(&HPolyhedron::new_unchecked(m, rows))?;
    let mut out = Vec::new();
    for a in cone.rays() {
        let mut combo = zero_curve(n);
        for (w, g) in a.iter().zip(&ctx.gens) {
            if w.is_zero() {
                continue;
            }
            for (acc, comp) in combo.iter_mut().zip(&g.img) {
                *acc = acc.add(&comp.scale(w));
            }
        }
        if let Some((order, lead)) = lowest_order_limit(&combo) {
            if order >= 1 && !is_zero_vec(&lead) {
                out.push(Candidate { vector: lead, weights: a.clone(), order });
            }
        }
    }
    Ok(out)
}

/// Scale a vector to 1-norm one (for deduplication; membership in a cone
/// union is invariant under positive scaling).
fn canonical_direction(v: &[Rational]) -> Vec<Rational> {
    let s = norm1(v);
    if s.is_zero() {
        return v.to_vec();
    }
    v.iter().map(|c| c / &s).collect()
}

/// Build the witness curves for a refuting candidate.
fn build_witness(
    ctx: &Context,
    cand: &Candidate,
    cfg: &RegularityConfig,
    decoupled: bool,
    l: usize,
    n: usize,
) -> AmRegWitness {
    let mut lam = zero_curve(l);
    let mut nu = zero_curve(n);
    let mut img = zero_curve(n);
    for (w, g) in cand.weights.iter().zip(&ctx.gens) {
        if w.is_zero() {
            continue;
        }
        for (acc, c) in lam.iter_mut().zip(&g.lam) {
            *acc = acc.add(&c.scale(w));
        }
        for (acc, c) in nu.iter_mut().zip(&g.nu) {
            *acc = acc.add(&c.scale(w));
        }
        for (acc, c) in img.iter_mut().zip(&g.img) {
            *acc = acc.add(&c.scale(w));
        }
    }
    let rescale = |c: &RatFunc| c.shift(-cand.order);
    AmRegWitness {
        candidate: cand.vector.clone(),
        weights: cand.weights.clone(),
        order: cand.order,
        x_curve: ctx.x_curve.clone(),
        ytil_curve: ctx.ytil_curve.clone(),
        z_curve: ctx.z_curve.clone(),
        xstar_curve: img.iter().map(rescale).collect(),
        lambda_curve: lam.iter().map(rescale).collect(),
        nu_curve: nu.iter().map(rescale).collect(),
        samples: cfg.radii.clone(),
        decoupled,
    }
}

/// The decision ladder shared by the coupled and decoupled checks.
fn regularity_ladder(
    p: &ProblemInstance,
    xbar: &[Rational],
    cfg: &RegularityConfig,
    decoupled: bool,
) -> Result<RegularityOutcome, StatError> {
    let gc = &p.constraint;
    if !gc.is_feasible(xbar)? {
        return Err(StatError::Infeasible(format!("{xbar:?}")));
    }
    // Rung 1: polyhedral data.
    if polyhedrality_check(p) {
        return Ok(RegularityOutcome {
            verdict: Verdict::Proved,
            witness: None,
            detail: "fully polyhedral data: the multiplier map is outer semicontinuous at \
                     every feasible point"
                .to_string(),
        });
    }
    // Rung 2: no nonzero abnormal multiplier.
    if nnamcq_check(p, xbar)? {
        return Ok(RegularityOutcome {
            verdict: Verdict::Proved,
            witness: None,
            detail: "no nonzero abnormal multiplier exists, so convergent multiplier images \
                     have bounded multipliers and their limits stay in the closed base branches"
                .to_string(),
        });
    }
    // Rung 3: constant multiplier images.
    if constancy_rung(gc, xbar)? {
        return Ok(RegularityOutcome {
            verdict: Verdict::Proved,
            witness: None,
            detail: "all branch generator images are constant polynomials, so nearby \
                     multiplier sets are subsets of the base set"
                .to_string(),
        });
    }
    // Rung 4: isolated reference point (decoupled regime).
    if decoupled && isolated_rung(gc, xbar)? {
        return Ok(RegularityOutcome {
            verdict: Verdict::Proved,
            witness: None,
            detail: "the reference point is isolated in C ∩ domain, so decoupled limits \
                     degenerate to the base point and polyhedral normal cones are outer \
                     semicontinuous there"
                .to_string(),
        });
    }
    // Rung 5: symbolic refutation search.
    let contexts = build_contexts(gc, xbar, cfg, decoupled)?;
    let search_complete = contexts.is_some();
    if let Some(contexts) = &contexts {
        let mut seen: Vec<Vec<Rational>> = Vec::new();
        let zeros_l = vec![Rational::zero(); gc.l()];
        for ctx in contexts.iter() {
            for cand in kernel_candidates(ctx)? {
                let canon = canonical_direction(&cand.vector);
                if seen.contains(&canon) {
                    continue;
                }
                seen.push(canon);
                if m_map_membership(gc, xbar, &zeros_l, &cand.vector)?.is_member() {
                    continue;
                }
                let witness = build_witness(ctx, &cand, cfg, decoupled, gc.l(), gc.n());
                if witness.verify(p, xbar)? {
                    return Ok(RegularityOutcome {
                        verdict: Verdict::Refuted,
                        witness: Some(witness),
                        detail: "an exactly-verified multiplier curve has a limit outside \
                                 the base multiplier set"
                            .to_string(),
                    });
                }
            }
        }
    }
    // Rung 6: one-dimensional closure.
    if gc.n() == 1
        && search_complete
        && gc.domain().is_none()
        && gc.k().is_polyhedral()
        && gc.c().map_or(true, |c| c.is_polyhedral())
    {
        return Ok(RegularityOutcome {
            verdict: Verdict::Proved,
            witness: None,
            detail: "one-dimensional side-curve analysis is exhaustive for polyhedral cone \
                     data and found no escaping limit"
                .to_string(),
        });
    }
    Ok(RegularityOutcome {
        verdict: Verdict::Unknown,
        witness: None,
        detail: if search_complete {
            "the symbolic curve search found no refutation, but no exactness rung applies \
             (non-polyhedral data in dimension above one)"
                .to_string()
        } else {
            "the cone structure is outside the supported search fragment (mixed or multiple \
             non-polyhedral blocks)"
                .to_string()
        },
    })
}

/// Rung 3 test: every branch generator image `x ↦ G'(x)ᵀg` is a constant
/// polynomial vector, with polyhedral (or gradient-constant smooth) data.
fn constancy_rung(gc: &GeometricConstraint, xbar: &[Rational]) -> Result<bool, StatError> {
    // C-side: polyhedral branches are constant; smooth blocks need constant
    // gradients (affine inequalities).
    if let Some(c) = gc.c() {
        for b in c.blocks() {
            if let Block::Smooth(sb) = b {
                for g in sb.inequalities() {
                    if g.total_degree() > 1 {
                        return Ok(false);
                    }
                }
            }
        }
    }
    if gc.domain().is_some() {
        // Graph branches have constant images by construction (affine G).
        return Ok(true);
    }
    let jac = gc.g().jacobian();
    let k = gc.k();
    if k.is_polyhedral() {
        let rbar = gc.g().eval(xbar);
        let u = normal_cone_union(k, &rbar)?;
        for branch in u.branches() {
            for g in branch.spanning_vectors() {
                for i in 0..gc.n() {
                    let mut entry = Polynomial::zero(gc.g().vars());
                    for (j, gj) in g.iter().enumerate() {
                        entry = entry.add(&jac[j][i].scale(gj));
                    }
                    if entry.total_degree() > 0 {
                        return Ok(false);
                    }
                }
            }
        }
        return Ok(true);
    }
    // Smooth K: require a constant Jacobian and constant inequality
    // gradients.
    let [Block::Smooth(sb)] = k.blocks() else {
        return Ok(false);
    };
    let jac_const = jac.iter().flatten().all(|e| e.total_degree() == 0);
    let grads_const = sb.inequalities().iter().all(|g| g.total_degree() <= 1);
    Ok(jac_const && grads_const)
}

/// Rung 4 test: `C ∩ domain` is locally `{x̄}`. Requires an all-equality
/// domain whose affine hull has dimension ≤ 1; the one free direction must
/// exit `C` on both sides (verified by exact sign analysis).
fn isolated_rung(gc: &GeometricConstraint, xbar: &[Rational]) -> Result<bool, StatError> {
    let Some(domain) = gc.domain() else {
        return Ok(false);
    };
    if domain.rows().iter().any(|r| !r.eq) {
        return Ok(false);
    }
    let a: Vec<Vec<Rational>> = domain.rows().iter().map(|r| r.a.clone()).collect();
    let basis = nullspace(&a, gc.n());
    if basis.is_empty() {
        return Ok(true); // domain is the single point x̄
    }
    if basis.len() > 1 {
        return Ok(false);
    }
    let Some(c) = gc.c() else {
        return Ok(false);
    };
    let v = &basis[0];
    for sign in [1i64, -1] {
        let dir: Vec<Rational> =
            v.iter().map(|x| x * Rational::from_integer(sign.into())).collect();
        let curve = affine_curve(xbar, &dir);
        // The side curve must leave every block of C.
        if c.blocks().iter().any(|b| curve_in_block(b, &curve)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Enumerate search contexts; `None` when the structure is outside the
/// supported fragment.
fn build_contexts(
    gc: &GeometricConstraint,
    xbar: &[Rational],
    cfg: &RegularityConfig,
    decoupled: bool,
) -> Result<Option<Vec<Context>>, StatError> {
    let n = gc.n();
    let jac_sym = gc.g().jacobian();
    let mut contexts = Vec::new();

    // Base-point curves paired with K-side data.
    struct XArm {
        x_curve: Vec<RatFunc>,
        k_choices: Vec<KChoice>,
    }
    let mut arms: Vec<XArm> = Vec::new();

    if gc.domain().is_some() {
        // Graph patterns prescribe both the base curve and the (constant)
        // coderivative directions.
        let graph = gc.graph_union()?;
        let mut base = xbar.to_vec();
        base.extend(vec![Rational::zero(); gc.l()]);
        let patterns = limiting_normal_cone_detailed(&graph, &base, None, None)?;
        for pb in patterns {
            let dx = pb.displacement[..n].to_vec();
            let dy = pb.displacement[n..].to_vec();
            let x_curve = affine_curve(xbar, &dx);
            let ytil_curve: Vec<RatFunc> = affine_curve(&vec![Rational::zero(); gc.l()], &dy);
            // Spanning vectors (vx, vy) of the graph branch: image vx with
            // multiplier part λ = -vy.
            let mut gens = Vec::new();
            for v in pb.cone.spanning_vectors() {
                let img = v[..n].to_vec();
                if is_zero_vec(&img) {
                    continue;
                }
                let lam: Vec<Rational> = v[n..].iter().map(|c| -c).collect();
                gens.push((img, lam));
            }
            contexts_for_domain_arm(
                gc,
                xbar,
                x_curve,
                ytil_curve,
                gens,
                decoupled,
                &mut contexts,
            )?;
        }
        return Ok(Some(contexts));
    }

    let rbar = gc.g().eval(xbar);
    let Some(kcs) = k_choices(gc.k(), &rbar)? else {
        return Ok(None);
    };
    let include_zero = !decoupled;
    for d in directions(n, cfg, include_zero) {
        let x_curve = affine_curve(xbar, &d);
        arms.push(XArm { x_curve, k_choices: Vec::new() });
    }
    // Decoupled with a smooth C: its boundary curves are admissible base
    // curves too.
    if decoupled {
        if let Some(c) = gc.c() {
            if let [Block::Smooth(sb)] = c.blocks() {
                for curve in sb.curves() {
                    if curve_eval(curve, &Rational::zero()).as_deref() == Some(xbar) {
                        arms.push(XArm { x_curve: curve.clone(), k_choices: Vec::new() });
                    }
                }
            }
        }
    }
    for arm in &mut arms {
        arm.k_choices = match k_choices(gc.k(), &rbar)? {
            Some(k) => k,
            None => return Ok(None),
        };
    }
    let _ = kcs;

    let coupled_c = if decoupled { None } else { c_choices_coupled(gc.c(), xbar)? };
    if !decoupled && coupled_c.is_none() {
        return Ok(None);
    }

    for arm in &arms {
        // C-side choices for this curve.
        let cc_list: Vec<CChoice> = if decoupled {
            match gc.c() {
                None => vec![CChoice::None],
                Some(c) => match c_choice_decoupled(c, &arm.x_curve)? {
                    None => continue, // curve leaves C
                    Some(None) => return Ok(None),
                    Some(Some(cc)) => vec![cc],
                },
            }
        } else {
            coupled_c.as_ref().unwrap().iter().map(clone_cchoice).collect()
        };
        let jac_curves: Vec<Vec<RatFunc>> = jac_sym
            .iter()
            .map(|row| row.iter().map(|e| compose_poly(e, &arm.x_curve)).collect())
            .collect();
        let g_curve: Vec<RatFunc> = gc
            .g()
            .components()
            .iter()
            .map(|c| compose_poly(c, &arm.x_curve))
            .collect();
        for kc in &arm.k_choices {
            for cc in &cc_list {
                if let Some(ctx) =
                    make_context(gc, &jac_curves, &g_curve, &arm.x_curve, kc, cc)
                {
                    contexts.push(ctx);
                }
            }
        }
    }
    Ok(Some(contexts))
}

fn clone_cchoice(c: &CChoice) -> CChoice {
    match c {
        CChoice::None => CChoice::None,
        CChoice::Branch { c_curve, cone } => {
            CChoice::Branch { c_curve: c_curve.clone(), cone: cone.clone() }
        }
        CChoice::SmoothCurve { c_curve, grads } => {
            CChoice::SmoothCurve { c_curve: c_curve.clone(), grads: grads.clone() }
        }
    }
}

/// Contexts for one graph-pattern arm in the domain-restricted case.
fn contexts_for_domain_arm(
    gc: &GeometricConstraint,
    xbar: &[Rational],
    x_curve: Vec<RatFunc>,
    ytil_curve: Vec<RatFunc>,
    gens: Vec<(Vec<Rational>, Vec<Rational>)>,
    decoupled: bool,
    out: &mut Vec<Context>,
) -> Result<(), StatError> {
    let n = gc.n();
    let l = gc.l();
    let cc_list: Vec<CChoice> = if decoupled {
        match gc.c() {
            None => vec![CChoice::None],
            Some(c) => match c_choice_decoupled(c, &x_curve)? {
                None => return Ok(()),
                Some(None) => return Ok(()), // unsupported C: skip arm
                Some(Some(cc)) => vec![cc],
            },
        }
    } else {
        match c_choices_coupled(gc.c(), xbar)? {
            None => return Ok(()),
            Some(list) => list,
        }
    };
    for cc in cc_list {
        let mut gcurves: Vec<GenCurve> = gens
            .iter()
            .map(|(img, lam)| GenCurve {
                img: const_curve(img),
                lam: const_curve(lam),
                nu: zero_curve(n),
            })
            .collect();
        let z_curve;
        match &cc {
            CChoice::None => z_curve = zero_curve(n),
            CChoice::Branch { c_curve, cone } => {
                z_curve = curve_sub(&x_curve, c_curve);
                for q in cone.spanning_vectors() {
                    gcurves.push(GenCurve {
                        img: const_curve(&q),
                        lam: zero_curve(l),
                        nu: const_curve(&q),
                    });
                }
            }
            CChoice::SmoothCurve { c_curve, grads } => {
                z_curve = curve_sub(&x_curve, c_curve);
                for grad in grads {
                    gcurves.push(GenCurve {
                        img: grad.clone(),
                        lam: zero_curve(l),
                        nu: grad.clone(),
                    });
                }
            }
        }
        let kept: Vec<GenCurve> = gcurves
            .into_iter()
            .filter(|g| g.img.iter().any(|c| !c.is_zero()))
            .collect();
        out.push(Context {
            x_curve: x_curve.clone(),
            ytil_curve: ytil_curve.clone(),
            z_curve,
            gens: kept,
        });
    }
    Ok(())
}
