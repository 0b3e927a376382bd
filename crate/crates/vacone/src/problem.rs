//! Problem instances and their on-disk JSON format.
//!
//! A [`ProblemInstance`] is the data every checker consumes: an objective
//! (smooth or piecewise-smooth with a finite subdifferential oracle), the
//! constraint system `0 ∈ G(x) - K, x ∈ C` as a [`GeometricConstraint`], a
//! reference point, and optionally an exact feasible-set description plus
//! expected verdicts (used by the catalog).
//!
//! The file format is JSON (`schema_version` 1) with rationals written as
//! `"p/q"` strings so that no value is corrupted by float round-tripping.

use crate::expr::{parse_polynomial, parse_rational, rat_to_f64, PolyMap, Polynomial, RatFunc, Rational};
use crate::maps::{GeometricConstraint, MapsError};
use crate::polyhedral::{
    Block, HPolyhedron, HRow, PolyError, PolyUnion, SmoothConvexBlock,
};
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Errors from instance construction and (de)serialization.
#[derive(Debug, Error)]
pub enum ProblemError {
    /// JSON parsing/shape problem.
    #[error("schema error: {0}")]
    Schema(String),
    /// Expression or rational literal failed to parse.
    #[error("expression error: {0}")]
    Expr(String),
    /// Lower-level polyhedral error.
    #[error(transparent)]
    Poly(#[from] PolyError),
    /// Lower-level constraint-map error.
    #[error(transparent)]
    Maps(#[from] MapsError),
    /// The queried point is outside every declared objective piece.
    #[error("objective pieces do not cover the point {0}")]
    PieceGap(String),
}

/// Objective function: a polynomial, or finitely many smooth pieces on
/// closed polyhedral regions (e.g. `f(x) = -|x|` as `x` on `R_-` and `-x`
/// on `R_+`).
///
/// At a point `x`, the subdifferential oracle returns the gradients of all
/// pieces whose (closed) region contains `x`; with `convexify` the intended
/// value is their convex hull, without it the finite gradient set itself
/// (the limiting subdifferential for concave kinks like `-|x|`).
#[derive(Debug, Clone)]
pub enum Objective {
    /// Single smooth polynomial.
    Smooth(Polynomial),
    /// Piecewise-polynomial with closed polyhedral pieces.
    Piecewise {
        pieces: Vec<(HPolyhedron, Polynomial)>,
        convexify: bool,
    },
}

impl Objective {
    /// Number of variables.
    pub fn n_vars(&self) -> usize {
        match self {
            Objective::Smooth(p) => p.n_vars(),
            Objective::Piecewise { pieces, .. } => {
                pieces.first().map_or(0, |(h, _)| h.dim())
            }
        }
    }

    /// Whether subgradient sets are meant as convex hulls.
    pub fn convexify(&self) -> bool {
        match self {
            Objective::Smooth(_) => false,
            Objective::Piecewise { convexify, .. } => *convexify,
        }
    }

    /// Exact value at `x` (first containing piece wins; pieces are expected
    /// to agree on overlaps).
    pub fn eval(&self, x: &[Rational]) -> Result<Rational, ProblemError> {
        match self {
            Objective::Smooth(p) => Ok(p.eval(x)),
            Objective::Piecewise { pieces, .. } => pieces
                .iter()
                .find(|(h, _)| h.contains(x))
                .map(|(_, p)| p.eval(x))
                .ok_or_else(|| ProblemError::PieceGap(format!("{x:?}"))),
        }
    }

    /// The finite set of candidate subgradients at `x`: gradients of all
    /// pieces whose closed region contains `x`.
    pub fn subgradients(&self, x: &[Rational]) -> Result<Vec<Vec<Rational>>, ProblemError> {
        match self {
            Objective::Smooth(p) => Ok(vec![p.gradient_at(x)]),
            Objective::Piecewise { pieces, .. } => {
                let mut out = Vec::new();
                for (h, p) in pieces {
                    if h.contains(x) {
                        let g = p.gradient_at(x);
                        if !out.contains(&g) {
                            out.push(g);
                        }
                    }
                }
                if out.is_empty() {
                    return Err(ProblemError::PieceGap(format!("{x:?}")));
                }
                Ok(out)
            }
        }
    }

    /// Index of a piece whose region contains the float point `x`
    /// (tolerance `tol` on each row), or `None` when uncovered.
    pub fn active_piece_f64(&self, x: &[f64], tol: f64) -> Option<usize> {
        match self {
            Objective::Smooth(_) => Some(0),
            Objective::Piecewise { pieces, .. } => pieces.iter().position(|(h, _)| {
                h.rows().iter().all(|r| {
                    let lhs: f64 =
                        r.a.iter().zip(x).map(|(a, xi)| rat_to_f64(a) * xi).sum();
                    let b = rat_to_f64(&r.b);
                    if r.eq {
                        (lhs - b).abs() <= tol
                    } else {
                        lhs <= b + tol
                    }
                })
            }),
        }
    }

    /// Distance (in max-norm over row residuals) from `x` to the nearest
    /// piece boundary; used for kink detection in the penalty solver.
    pub fn boundary_gap_f64(&self, x: &[f64]) -> f64 {
        match self {
            Objective::Smooth(_) => f64::INFINITY,
            Objective::Piecewise { pieces, .. } => {
                let mut gap = f64::INFINITY;
                for (h, _) in pieces {
                    for r in h.rows() {
                        let lhs: f64 =
                            r.a.iter().zip(x).map(|(a, xi)| rat_to_f64(a) * xi).sum();
                        gap = gap.min((lhs - rat_to_f64(&r.b)).abs());
                    }
                }
                gap
            }
        }
    }

    /// Float value using the active piece at `x`.
    pub fn eval_f64(&self, x: &[f64]) -> Option<f64> {
        match self {
            Objective::Smooth(p) => Some(p.eval_f64(x)),
            Objective::Piecewise { pieces, .. } => self
                .active_piece_f64(x, 1e-9)
                .map(|i| pieces[i].1.eval_f64(x)),
        }
    }

    /// Float gradient of the piece active at `x`.
    pub fn gradient_f64(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self {
            Objective::Smooth(p) => Some(
                p.gradient()
                    .iter()
                    .map(|c| c.eval_f64(x))
                    .collect(),
            ),
            Objective::Piecewise { pieces, .. } => {
                let i = self.active_piece_f64(x, 1e-9)?;
                Some(pieces[i].1.gradient().iter().map(|c| c.eval_f64(x)).collect())
            }
        }
    }
}

/// A complete analysis instance.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    /// Human-readable identifier.
    pub name: String,
    /// Objective `f`.
    pub objective: Objective,
    /// Constraint system `0 ∈ G(x) - K, x ∈ C` (plus optional domain).
    pub constraint: GeometricConstraint,
    /// Reference point `x̄`.
    pub point: Vec<Rational>,
    /// Optional exact polyhedral description of the feasible set (used by
    /// GACQ and the subregularity probe).
    pub m_explicit: Option<PolyUnion>,
    /// Optional expected-verdict map (catalog entries).
    pub expected: BTreeMap<String, String>,
}

impl ProblemInstance {
    /// Dimension of the decision variable.
    pub fn n(&self) -> usize {
        self.constraint.n()
    }

    /// Whether the reference point is feasible.
    pub fn reference_feasible(&self) -> Result<bool, ProblemError> {
        Ok(self.constraint.is_feasible(&self.point)?)
    }
}

// ---------------------------------------------------------------------------
// JSON schema (version 1)
// ---------------------------------------------------------------------------

/// Current problem-file schema version.
pub const SCHEMA_VERSION: u32 = 1;

/// Serialized objective.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ObjectiveJson {
    /// `{"kind": "polynomial", "expr": "..."}`
    Polynomial { expr: String },
    /// `{"kind": "piecewise", "pieces": [...], "convexify": bool}`
    Piecewise {
        pieces: Vec<PieceJson>,
        #[serde(default)]
        convexify: bool,
    },
}

/// One objective piece: a closed region (rows over the x-variables) and the
/// smooth expression valid there.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PieceJson {
    /// Rows `[c_1, …, c_n, rhs, "le"|"eq"]` with rational entries as strings.
    pub region: Vec<Vec<String>>,
    /// Polynomial expression in the problem variables.
    pub expr: String,
}

/// Serialized block of a union: either polyhedral rows or a smooth convex
/// block with inequalities, a strictly feasible Slater point, and optional
/// boundary curves (pairs of numerator/denominator polynomials in `s`).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum BlockJson {
    Poly {
        rows: Vec<Vec<String>>,
    },
    Smooth {
        smooth: Vec<String>,
        slater: Vec<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        curves: Vec<Vec<(String, String)>>,
    },
}

/// Serialized union of blocks.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct UnionJson {
    pub union: Vec<BlockJson>,
}

/// Top-level problem file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProblemJson {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub variables: Vec<String>,
    pub objective: ObjectiveJson,
    #[serde(rename = "G")]
    pub g: Vec<String>,
    #[serde(rename = "K")]
    pub k: UnionJson,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<UnionJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Vec<Vec<String>>>,
    pub point: Vec<String>,
    #[serde(rename = "M_explicit", default, skip_serializing_if = "Option::is_none")]
    pub m_explicit: Option<UnionJson>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub expected: BTreeMap<String, String>,
}

fn parse_rat_str(s: &str) -> Result<Rational, ProblemError> {
    parse_rational(s).map_err(|e| ProblemError::Expr(format!("bad rational {s:?}: {e}")))
}

fn parse_rows(rows: &[Vec<String>], dim: usize) -> Result<Vec<HRow>, ProblemError> {
    let mut out = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim + 2 {
            return Err(ProblemError::Schema(format!(
                "row {i} has {} entries, expected {} coefficients + rhs + kind",
                row.len(),
                dim
            )));
        }
        let kind = row.last().unwrap().as_str();
        let eq = match kind {
            "le" => false,
            "eq" => true,
            other => {
                return Err(ProblemError::Schema(format!(
                    "row {i} kind must be \"le\" or \"eq\", got {other:?}"
                )))
            }
        };
        let a = row[..dim]
            .iter()
            .map(|s| parse_rat_str(s))
            .collect::<Result<Vec<_>, _>>()?;
        let b = parse_rat_str(&row[dim])?;
        out.push(HRow { a, b, eq });
    }
    Ok(out)
}

fn rows_to_json(h: &HPolyhedron) -> Vec<Vec<String>> {
    h.rows()
        .iter()
        .map(|r| {
            let mut row: Vec<String> = r.a.iter().map(|c| c.to_string()).collect();
            row.push(r.b.to_string());
            row.push(if r.eq { "eq" } else { "le" }.to_string());
            row
        })
        .collect()
}

fn parse_union(u: &UnionJson, dim: usize, var_prefix: &str) -> Result<PolyUnion, ProblemError> {
    let vars: Vec<String> = (1..=dim).map(|i| format!("{var_prefix}{i}")).collect();
    let mut blocks = Vec::new();
    for b in &u.union {
        match b {
            BlockJson::Poly { rows } => {
                blocks.push(Block::Poly(HPolyhedron::new(dim, parse_rows(rows, dim)?)?));
            }
            BlockJson::Smooth { smooth, slater, curves } => {
                let gs = smooth
                    .iter()
                    .map(|e| {
                        parse_polynomial(e, &vars)
                            .map_err(|err| ProblemError::Expr(format!("{e:?}: {err}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let sp = slater
                    .iter()
                    .map(|s| parse_rat_str(s))
                    .collect::<Result<Vec<_>, _>>()?;
                let mut blk = SmoothConvexBlock::new(dim, gs, sp)?;
                let svar = vec!["s".to_string()];
                for curve in curves {
                    let comps = curve
                        .iter()
                        .map(|(num, den)| {
                            let n = parse_polynomial(num, &svar)
                                .map_err(|e| ProblemError::Expr(format!("{num:?}: {e}")))?;
                            let d = parse_polynomial(den, &svar)
                                .map_err(|e| ProblemError::Expr(format!("{den:?}: {e}")))?;
                            if d.is_zero() {
                                return Err(ProblemError::Expr(format!(
                                    "zero denominator in curve component {num:?}/{den:?}"
                                )));
                            }
                            Ok(RatFunc::new(n, d))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    blk = blk.with_curve(comps)?;
                }
                blocks.push(Block::Smooth(blk));
            }
        }
    }
    Ok(PolyUnion::new(blocks)?)
}

fn union_to_json(u: &PolyUnion) -> UnionJson {
    let blocks = u
        .blocks()
        .iter()
        .map(|b| match b {
            Block::Poly(h) => BlockJson::Poly { rows: rows_to_json(h) },
            Block::Smooth(s) => BlockJson::Smooth {
                smooth: s.inequalities().iter().map(|g| g.to_string()).collect(),
                slater: s.slater().iter().map(|v| v.to_string()).collect(),
                curves: s
                    .curves()
                    .iter()
                    .map(|curve| {
                        curve
                            .iter()
                            .map(|rf| (rf.num().to_string(), rf.den().to_string()))
                            .collect()
                    })
                    .collect(),
            },
        })
        .collect();
    UnionJson { union: blocks }
}

impl ProblemJson {
    /// Parse a JSON document.
    pub fn from_str(text: &str) -> Result<Self, ProblemError> {
        let parsed: ProblemJson =
            serde_json::from_str(text).map_err(|e| ProblemError::Schema(e.to_string()))?;
        if parsed.schema_version != SCHEMA_VERSION {
            return Err(ProblemError::Schema(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                parsed.schema_version
            )));
        }
        Ok(parsed)
    }

    /// Serialize to pretty JSON.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files serialize infallibly")
    }

    /// Build the executable instance (parses all expressions, checks
    /// dimensions).
    pub fn to_instance(&self) -> Result<ProblemInstance, ProblemError> {
        let n = self.variables.len();
        if n == 0 {
            return Err(ProblemError::Schema("empty variable list".to_string()));
        }
        let g = PolyMap::parse(
            &self.variables,
            &self.g.iter().map(String::as_str).collect::<Vec<_>>(),
        )
        .map_err(|e| ProblemError::Expr(e.to_string()))?;
        let l = g.codomain_dim();
        let k = parse_union(&self.k, l, "y")?;
        let c = self.c.as_ref().map(|u| parse_union(u, n, "x")).transpose()?;
        let mut gc = GeometricConstraint::new(g, k, c)?;
        if let Some(rows) = &self.domain {
            gc = gc.with_domain(HPolyhedron::new(n, parse_rows(rows, n)?)?)?;
        }
        let objective = match &self.objective {
            ObjectiveJson::Polynomial { expr } => Objective::Smooth(
                parse_polynomial(expr, &self.variables)
                    .map_err(|e| ProblemError::Expr(format!("{expr:?}: {e}")))?,
            ),
            ObjectiveJson::Piecewise { pieces, convexify } => {
                let ps = pieces
                    .iter()
                    .map(|p| {
                        let region = HPolyhedron::new(n, parse_rows(&p.region, n)?)?;
                        let poly = parse_polynomial(&p.expr, &self.variables)
                            .map_err(|e| ProblemError::Expr(format!("{:?}: {e}", p.expr)))?;
                        Ok::<_, ProblemError>((region, poly))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if ps.is_empty() {
                    return Err(ProblemError::Schema("piecewise objective with no pieces".to_string()));
                }
                Objective::Piecewise { pieces: ps, convexify: *convexify }
            }
        };
        if objective.n_vars() != n {
            return Err(ProblemError::Schema(
                "objective arity does not match the variable list".to_string(),
            ));
        }
        let point = self
            .point
            .iter()
            .map(|s| parse_rat_str(s))
            .collect::<Result<Vec<_>, _>>()?;
        if point.len() != n {
            return Err(ProblemError::Schema("reference point has wrong dimension".to_string()));
        }
        let m_explicit = self
            .m_explicit
            .as_ref()
            .map(|u| parse_union(u, n, "x"))
            .transpose()?;
        Ok(ProblemInstance {
            name: self.name.clone().unwrap_or_else(|| "unnamed".to_string()),
            objective,
            constraint: gc,
            point,
            m_explicit,
            expected: self.expected.clone(),
        })
    }

    /// Serialize an instance back into the file schema.
    pub fn from_instance(p: &ProblemInstance) -> Self {
        let objective = match &p.objective {
            Objective::Smooth(poly) => ObjectiveJson::Polynomial { expr: poly.to_string() },
            Objective::Piecewise { pieces, convexify } => ObjectiveJson::Piecewise {
                pieces: pieces
                    .iter()
                    .map(|(h, poly)| PieceJson {
                        region: rows_to_json(h),
                        expr: poly.to_string(),
                    })
                    .collect(),
                convexify: *convexify,
            },
        };
        ProblemJson {
            schema_version: SCHEMA_VERSION,
            name: Some(p.name.clone()),
            variables: p.constraint.g().vars().to_vec(),
            objective,
            g: p.constraint.g().components().iter().map(|c| c.to_string()).collect(),
            k: union_to_json(p.constraint.k()),
            c: p.constraint.c().map(union_to_json),
            domain: p.constraint.domain().map(rows_to_json),
            point: p.point.iter().map(|v| v.to_string()).collect(),
            m_explicit: p.m_explicit.as_ref().map(union_to_json),
            expected: p.expected.clone(),
        }
    }
}

/// Convex-hull membership: is `target` a convex combination of `points`?
/// (Exact LP; used for convexified subdifferentials.)
pub fn in_convex_hull(points: &[Vec<Rational>], target: &[Rational]) -> Result<bool, PolyError> {
    use crate::polyhedral::{lp_feasible, LpOutcome};
    if points.is_empty() {
        return Ok(false);
    }
    let dim = target.len();
    let m = points.len();
    // Variables: weights w ∈ R^m with w >= 0, Σw = 1, Σ w_i p_i = target.
    let mut rows = Vec::new();
    for (i, _) in points.iter().enumerate() {
        let mut a = vec![Rational::zero(); m];
        a[i] = -Rational::from_integer(1.into());
        rows.push(HRow::le(a, Rational::zero()));
    }
    rows.push(HRow::eqn(
        vec![Rational::from_integer(1.into()); m],
        Rational::from_integer(1.into()),
    ));
    for d in 0..dim {
        let a: Vec<Rational> = points.iter().map(|p| p[d].clone()).collect();
        rows.push(HRow::eqn(a, target[d].clone()));
    }
    let sys = HPolyhedron::new_unchecked(m, rows);
    Ok(!matches!(lp_feasible(&sys, None)?, LpOutcome::Infeasible))
}
