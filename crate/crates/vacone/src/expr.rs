//! Exact rational scalars, multivariate polynomials, and polynomial maps.
//!
//! All symbolic data in this crate bottoms out here: coefficients are
//! [`Rational`] (arbitrary-precision, always reduced), polynomials are sparse
//! maps from exponent vectors to coefficients, and polynomial maps bundle the
//! components of a vector-valued `G : R^n -> R^l` together with exact
//! differentiation. A small univariate rational-function type ([`RatFunc`])
//! supports curve substitution `x(s)` and Laurent-order analysis at `s = 0`,
//! which the stationarity module uses to compute exact limits of multiplier
//! images along rational curves.
//!
//! The expression grammar accepted by [`parse_polynomial`]:
//!
//! ```text
//! expr   := ['-'] term (('+' | '-') term)*
//! term   := factor ('*' factor)*
//! factor := atom ['^' UINT]
//! atom   := RATIONAL | IDENT | '(' expr ')'
//! RATIONAL := INT ['/' INT]        (division only in literals)
//! ```
//!
//! so `"-x1^2 + 3/2*x1*x2 - 2"` parses against the variable list
//! `["x1", "x2"]`. Unknown identifiers are reported with their byte offset.

use num::bigint::BigInt;
use num::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// Exact rational scalar used throughout the crate.
///
/// `num::BigRational` keeps values reduced with a positive denominator, so
/// equality is structural.
pub type Rational = num::BigRational;

/// Build the rational `p / q`. Panics if `q == 0`.
pub fn rat(p: i64, q: i64) -> Rational {
    assert!(q != 0, "rational denominator must be nonzero");
    Rational::new(BigInt::from(p), BigInt::from(q))
}

/// Build the integer rational `n / 1`.
pub fn rat_int(n: i64) -> Rational {
    Rational::from(BigInt::from(n))
}

/// Convert an integer slice into a rational vector (test/builder convenience).
pub fn rvec(entries: &[i64]) -> Vec<Rational> {
    entries.iter().map(|&e| rat_int(e)).collect()
}

/// Lossy conversion to `f64` (used only at reporting / penalty boundaries).
pub fn rat_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Exact rational image of a finite float (the represented dyadic value,
/// not a nearby "nice" fraction — see [`snap_rational`] for that).
pub fn f64_to_rat(x: f64) -> Option<Rational> {
    Rational::from_float(x)
}

/// Best rational approximation of `x` by continued fractions, with the
/// denominator capped at `denom_cap`.
///
/// Returns `None` for non-finite input.  The result is the convergent whose
/// denominator still fits the cap; callers are expected to re-verify the
/// snapped value exactly downstream (snapping alone proves nothing).
pub fn snap_rational(x: f64, denom_cap: u64) -> Option<Rational> {
    if !x.is_finite() {
        return None;
    }
    let cap = BigInt::from(denom_cap.max(1));
    let neg = x < 0.0;
    let mut rest = x.abs();
    if rest > 9e18 {
        return None;
    }
    // Convergents p_k / q_k of the continued fraction of |x|.
    let (mut p_prev, mut q_prev) = (BigInt::from(1), BigInt::from(0));
    let (mut p, mut q) = (BigInt::from(rest.floor() as i64), BigInt::from(1));
    rest -= rest.floor();
    for _ in 0..64 {
        if rest < 1e-15 {
            break;
        }
        rest = 1.0 / rest;
        if rest > 9e18 {
            break;
        }
        let a = BigInt::from(rest.floor() as i64);
        rest -= rest.floor();
        let p_next = &a * &p + &p_prev;
        let q_next = &a * &q + &q_prev;
        if q_next > cap {
            break;
        }
        (p_prev, q_prev) = (p, q);
        (p, q) = (p_next, q_next);
    }
    let mut out = Rational::new(p, q);
    if neg {
        out = -out;
    }
    Some(out)
}

/// Errors from expression parsing.
#[derive(Debug, Error)]
pub enum ExprError {
    /// Syntax error with the byte offset where it was detected.
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    /// Identifier not present in the declared variable list.
    #[error("unknown variable `{name}` at byte {offset}")]
    UnknownVariable { name: String, offset: usize },
    /// Malformed rational literal such as `3/0`.
    #[error("invalid rational literal `{0}`")]
    BadRational(String),
}

/// Parse `"p"` or `"p/q"` into an exact rational. Whitespace is trimmed.
pub fn parse_rational(text: &str) -> Result<Rational, ExprError> {
    let t = text.trim();
    let bad = || ExprError::BadRational(text.to_string());
    let (num_s, den_s) = match t.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (t, "1"),
    };
    let num: BigInt = num_s.parse().map_err(|_| bad())?;
    let den: BigInt = den_s.parse().map_err(|_| bad())?;
    if den.is_zero() {
        return Err(bad());
    }
    Ok(Rational::new(num, den))
}

// ---------------------------------------------------------------------------
// Polynomials
// ---------------------------------------------------------------------------

/// Sparse multivariate polynomial with exact rational coefficients.
///
/// Terms map an exponent vector (one entry per variable, in the order of
/// `vars`) to a nonzero coefficient. The representation is canonical: equal
/// polynomials compare equal structurally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    vars: Vec<String>,
    terms: BTreeMap<Vec<u32>, Rational>,
}

impl Polynomial {
    /// The zero polynomial over the given variables.
    pub fn zero(vars: &[String]) -> Self {
        Polynomial { vars: vars.to_vec(), terms: BTreeMap::new() }
    }

    /// A constant polynomial.
    pub fn constant(vars: &[String], c: Rational) -> Self {
        let mut p = Polynomial::zero(vars);
        if !c.is_zero() {
            p.terms.insert(vec![0; p.vars.len()], c);
        }
        p
    }

    /// The monomial `x_i` (by index into the variable list).
    pub fn var(vars: &[String], index: usize) -> Self {
        assert!(index < vars.len(), "variable index out of range");
        let mut expo = vec![0u32; vars.len()];
        expo[index] = 1;
        let mut p = Polynomial::zero(vars);
        p.terms.insert(expo, Rational::one());
        p
    }

    /// Variable names, in evaluation order.
    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    /// Number of variables (the expected length of evaluation points).
    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    /// True iff this is the zero polynomial.
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; 0 for constants (including zero).
    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    /// If the polynomial is constant, return its value.
    pub fn as_constant(&self) -> Option<Rational> {
        if self.terms.is_empty() {
            return Some(Rational::zero());
        }
        if self.terms.len() == 1 {
            let (e, c) = self.terms.iter().next().unwrap();
            if e.iter().all(|&k| k == 0) {
                return Some(c.clone());
            }
        }
        None
    }

    fn add_term(&mut self, expo: Vec<u32>, coeff: Rational) {
        if coeff.is_zero() {
            return;
        }
        let entry = self.terms.entry(expo);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = o.get() + &coeff;
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    fn assert_same_vars(&self, other: &Polynomial) {
        assert_eq!(self.vars, other.vars, "polynomial variable lists must match");
    }

    /// Exact sum.
    pub fn add(&self, other: &Polynomial) -> Polynomial {
        self.assert_same_vars(other);
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }

    /// Exact difference.
    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.neg())
    }

    /// Exact negation.
    pub fn neg(&self) -> Polynomial {
        let mut out = Polynomial::zero(&self.vars);
        for (e, c) in &self.terms {
            out.terms.insert(e.clone(), -c.clone());
        }
        out
    }

    /// Exact product.
    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        self.assert_same_vars(other);
        let mut out = Polynomial::zero(&self.vars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let expo: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(expo, ca * cb);
            }
        }
        out
    }

    /// Scalar multiple.
    pub fn scale(&self, s: &Rational) -> Polynomial {
        let mut out = Polynomial::zero(&self.vars);
        if s.is_zero() {
            return out;
        }
        for (e, c) in &self.terms {
            out.terms.insert(e.clone(), c * s);
        }
        out
    }

    /// Exact integer power.
    pub fn pow(&self, k: u32) -> Polynomial {
        let mut out = Polynomial::constant(&self.vars, Rational::one());
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    /// Evaluate at an exact rational point. Panics on dimension mismatch.
    pub fn eval(&self, x: &[Rational]) -> Rational {
        assert_eq!(x.len(), self.vars.len(), "evaluation point has wrong dimension");
        let mut acc = Rational::zero();
        for (e, c) in &self.terms {
            let mut term = c.clone();
            for (xi, &ei) in x.iter().zip(e) {
                for _ in 0..ei {
                    term *= xi;
                }
            }
            acc += term;
        }
        acc
    }

    /// Evaluate in floating point (numeric penalty path only).
    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.vars.len(), "evaluation point has wrong dimension");
        let mut acc = 0.0;
        for (e, c) in &self.terms {
            let mut term = rat_to_f64(c);
            for (xi, &ei) in x.iter().zip(e) {
                term *= xi.powi(ei as i32);
            }
            acc += term;
        }
        acc
    }

    /// Exact partial derivative with respect to variable `index`.
    pub fn differentiate(&self, index: usize) -> Polynomial {
        assert!(index < self.vars.len(), "variable index out of range");
        let mut out = Polynomial::zero(&self.vars);
        for (e, c) in &self.terms {
            if e[index] == 0 {
                continue;
            }
            let mut expo = e.clone();
            expo[index] -= 1;
            out.add_term(expo, c * rat_int(e[index] as i64));
        }
        out
    }

    /// Exact gradient, one polynomial per variable.
    pub fn gradient(&self) -> Vec<Polynomial> {
        (0..self.vars.len()).map(|i| self.differentiate(i)).collect()
    }

    /// Gradient evaluated at an exact point.
    pub fn gradient_at(&self, x: &[Rational]) -> Vec<Rational> {
        self.gradient().iter().map(|p| p.eval(x)).collect()
    }
}

fn fmt_coeff(c: &Rational) -> String {
    if c.denom().is_one() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        // Descending lexicographic exponent order: higher powers print first.
        let mut first = true;
        for (e, c) in self.terms.iter().rev() {
            let neg = c.is_negative();
            let abs = c.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
                first = false;
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let mut monos: Vec<String> = Vec::new();
            for (name, &ei) in self.vars.iter().zip(e) {
                match ei {
                    0 => {}
                    1 => monos.push(name.clone()),
                    _ => monos.push(format!("{name}^{ei}")),
                }
            }
            if monos.is_empty() {
                write!(f, "{}", fmt_coeff(&abs))?;
            } else if abs.is_one() {
                write!(f, "{}", monos.join("*"))?;
            } else {
                write!(f, "{}*{}", fmt_coeff(&abs), monos.join("*"))?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(BigInt),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' => {
                toks.push((i, Tok::Plus));
                i += 1;
            }
            b'-' => {
                toks.push((i, Tok::Minus));
                i += 1;
            }
            b'*' => {
                toks.push((i, Tok::Star));
                i += 1;
            }
            b'/' => {
                toks.push((i, Tok::Slash));
                i += 1;
            }
            b'^' => {
                toks.push((i, Tok::Caret));
                i += 1;
            }
            b'(' => {
                toks.push((i, Tok::LParen));
                i += 1;
            }
            b')' => {
                toks.push((i, Tok::RParen));
                i += 1;
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let lit = &text[start..i];
                let n: BigInt = lit.parse().map_err(|_| ExprError::Parse {
                    offset: start,
                    msg: format!("invalid integer literal `{lit}`"),
                })?;
                toks.push((start, Tok::Int(n)));
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                toks.push((start, Tok::Ident(text[start..i].to_string())));
            }
            _ => {
                return Err(ExprError::Parse {
                    offset: i,
                    msg: format!("unexpected character `{}`", text[i..].chars().next().unwrap()),
                })
            }
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    vars: &'a [String],
    len: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&(usize, Tok)> {
        self.toks.get(self.pos)
    }

    fn bump(&mut self) -> Option<(usize, Tok)> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|(o, _)| *o).unwrap_or(self.len)
    }

    fn err(&self, msg: impl Into<String>) -> ExprError {
        ExprError::Parse { offset: self.here(), msg: msg.into() }
    }

    fn expr(&mut self) -> Result<Polynomial, ExprError> {
        let mut negate_first = false;
        if matches!(self.peek(), Some((_, Tok::Minus))) {
            self.bump();
            negate_first = true;
        }
        let mut acc = self.term()?;
        if negate_first {
            acc = acc.neg();
        }
        loop {
            match self.peek() {
                Some((_, Tok::Plus)) => {
                    self.bump();
                    let t = self.term()?;
                    acc = acc.add(&t);
                }
                Some((_, Tok::Minus)) => {
                    self.bump();
                    let t = self.term()?;
                    acc = acc.sub(&t);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Polynomial, ExprError> {
        let mut acc = self.factor()?;
        while matches!(self.peek(), Some((_, Tok::Star))) {
            self.bump();
            let f = self.factor()?;
            acc = acc.mul(&f);
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Polynomial, ExprError> {
        let base = self.atom()?;
        if matches!(self.peek(), Some((_, Tok::Caret))) {
            self.bump();
            match self.bump() {
                Some((off, Tok::Int(n))) => {
                    let k = n.to_u32().ok_or(ExprError::Parse {
                        offset: off,
                        msg: "exponent too large".to_string(),
                    })?;
                    Ok(base.pow(k))
                }
                _ => Err(self.err("expected nonnegative integer exponent after `^`")),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Polynomial, ExprError> {
        match self.bump() {
            Some((_, Tok::Int(n))) => {
                // An integer literal may continue as a rational literal `p/q`.
                let mut value = Rational::from(n);
                if matches!(self.peek(), Some((_, Tok::Slash))) {
                    self.bump();
                    match self.bump() {
                        Some((off, Tok::Int(d))) => {
                            if d.is_zero() {
                                return Err(ExprError::Parse {
                                    offset: off,
                                    msg: "zero denominator in rational literal".to_string(),
                                });
                            }
                            value /= Rational::from(d);
                        }
                        _ => {
                            return Err(self.err(
                                "`/` is only allowed inside a rational literal `p/q`",
                            ))
                        }
                    }
                }
                Ok(Polynomial::constant(self.vars, value))
            }
            Some((off, Tok::Ident(name))) => {
                match self.vars.iter().position(|v| *v == name) {
                    Some(idx) => Ok(Polynomial::var(self.vars, idx)),
                    None => Err(ExprError::UnknownVariable { name, offset: off }),
                }
            }
            Some((_, Tok::LParen)) => {
                let inner = self.expr()?;
                match self.bump() {
                    Some((_, Tok::RParen)) => Ok(inner),
                    _ => Err(self.err("expected `)`")),
                }
            }
            Some((off, tok)) => Err(ExprError::Parse {
                offset: off,
                msg: format!("unexpected token {tok:?}"),
            }),
            None => Err(self.err("unexpected end of input")),
        }
    }
}

/// Parse a polynomial expression against an ordered variable list.
///
/// See the module docs for the grammar. The result's variable order is
/// exactly `vars`, regardless of which variables actually occur.
pub fn parse_polynomial(text: &str, vars: &[String]) -> Result<Polynomial, ExprError> {
    let toks = lex(text)?;
    if toks.is_empty() {
        return Err(ExprError::Parse { offset: 0, msg: "empty expression".to_string() });
    }
    let mut p = Parser { toks, pos: 0, vars, len: text.len() };
    let poly = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(p.err("trailing input after expression"));
    }
    Ok(poly)
}

/// Convenience: build an owned variable-name list from string literals.
pub fn var_names(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

// ---------------------------------------------------------------------------
// Polynomial maps
// ---------------------------------------------------------------------------

/// A polynomial map `G : R^n -> R^l`, one [`Polynomial`] per component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyMap {
    vars: Vec<String>,
    components: Vec<Polynomial>,
}

impl PolyMap {
    /// Bundle components over a shared variable list. Panics if any
    /// component was built over a different list.
    pub fn new(vars: Vec<String>, components: Vec<Polynomial>) -> Self {
        for c in &components {
            assert_eq!(c.vars(), vars.as_slice(), "component variable list mismatch");
        }
        PolyMap { vars, components }
    }

    /// Parse each component expression against the shared variable list.
    pub fn parse(vars: &[String], exprs: &[&str]) -> Result<Self, ExprError> {
        let comps = exprs
            .iter()
            .map(|e| parse_polynomial(e, vars))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PolyMap { vars: vars.to_vec(), components: comps })
    }

    /// Identically-zero map `R^n -> R^l`.
    pub fn zero(vars: &[String], codomain_dim: usize) -> Self {
        PolyMap {
            vars: vars.to_vec(),
            components: (0..codomain_dim).map(|_| Polynomial::zero(vars)).collect(),
        }
    }

    /// Domain dimension `n`.
    pub fn domain_dim(&self) -> usize {
        self.vars.len()
    }

    /// Codomain dimension `l`.
    pub fn codomain_dim(&self) -> usize {
        self.components.len()
    }

    /// Variable names shared by all components.
    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    /// Component polynomials.
    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    /// Exact evaluation.
    pub fn eval(&self, x: &[Rational]) -> Vec<Rational> {
        self.components.iter().map(|c| c.eval(x)).collect()
    }

    /// Floating-point evaluation.
    pub fn eval_f64(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.eval_f64(x)).collect()
    }

    /// Symbolic Jacobian: row `i`, column `j` holds `dG_i/dx_j`.
    pub fn jacobian(&self) -> Vec<Vec<Polynomial>> {
        self.components.iter().map(|c| c.gradient()).collect()
    }

    /// Jacobian evaluated exactly at `x` (`l x n` matrix).
    pub fn jacobian_at(&self, x: &[Rational]) -> Vec<Vec<Rational>> {
        self.components.iter().map(|c| c.gradient_at(x)).collect()
    }

    /// Jacobian evaluated in floating point (`l x n` matrix).
    pub fn jacobian_at_f64(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.components
            .iter()
            .map(|c| c.gradient().iter().map(|p| p.eval_f64(x)).collect())
            .collect()
    }

    /// Adjoint Jacobian application `G'(x)^T lambda`, exactly.
    pub fn jt_apply(&self, x: &[Rational], lambda: &[Rational]) -> Vec<Rational> {
        assert_eq!(lambda.len(), self.components.len(), "multiplier dimension mismatch");
        let mut out = vec![Rational::zero(); self.vars.len()];
        for (c, li) in self.components.iter().zip(lambda) {
            if li.is_zero() {
                continue;
            }
            for (j, g) in c.gradient().iter().enumerate() {
                out[j] += g.eval(x) * li;
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Univariate rational functions
// ---------------------------------------------------------------------------

/// A univariate rational function `num(s) / den(s)` with exact coefficients.
///
/// Used to represent points, multipliers, and residuals along rational
/// curves `s -> x(s)`; poles at `s = 0` are allowed (multiplier sequences
/// blow up there by design). [`RatFunc::order_at_zero`] exposes the Laurent
/// order at `s = 0`, the key quantity for exact limit extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatFunc {
    num: Polynomial,
    den: Polynomial,
}

impl RatFunc {
    /// Wrap a polynomial as a rational function with denominator 1.
    pub fn from_poly(num: Polynomial) -> Self {
        assert_eq!(num.n_vars(), 1, "RatFunc requires univariate polynomials");
        let den = Polynomial::constant(num.vars(), Rational::one());
        RatFunc { num, den }
    }

    /// Build `num / den`. Panics if `den` is the zero polynomial.
    pub fn new(num: Polynomial, den: Polynomial) -> Self {
        assert_eq!(num.n_vars(), 1, "RatFunc requires univariate polynomials");
        assert_eq!(num.vars(), den.vars(), "numerator/denominator variable mismatch");
        assert!(!den.is_zero(), "RatFunc denominator must be nonzero");
        RatFunc { num, den }
    }

    /// The constant function `c`.
    pub fn constant(vars: &[String], c: Rational) -> Self {
        RatFunc::from_poly(Polynomial::constant(vars, c))
    }

    /// The zero function over variable list `vars` (length 1).
    pub fn zero(vars: &[String]) -> Self {
        RatFunc::from_poly(Polynomial::zero(vars))
    }

    /// Numerator polynomial.
    pub fn num(&self) -> &Polynomial {
        &self.num
    }

    /// Denominator polynomial.
    pub fn den(&self) -> &Polynomial {
        &self.den
    }

    /// True iff identically zero.
    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    fn vars(&self) -> &[String] {
        self.num.vars()
    }

    /// Exact sum.
    pub fn add(&self, other: &RatFunc) -> RatFunc {
        let num = self.num.mul(&other.den).add(&other.num.mul(&self.den));
        let den = self.den.mul(&other.den);
        RatFunc { num, den }
    }

    /// Exact difference.
    pub fn sub(&self, other: &RatFunc) -> RatFunc {
        self.add(&other.neg())
    }

    /// Exact negation.
    pub fn neg(&self) -> RatFunc {
        RatFunc { num: self.num.neg(), den: self.den.clone() }
    }

    /// Exact product.
    pub fn mul(&self, other: &RatFunc) -> RatFunc {
        RatFunc { num: self.num.mul(&other.num), den: self.den.mul(&other.den) }
    }

    /// Scalar multiple.
    pub fn scale(&self, c: &Rational) -> RatFunc {
        RatFunc { num: self.num.scale(c), den: self.den.clone() }
    }

    /// Multiply by the monomial `s^k` (`k` may be negative).
    pub fn shift(&self, k: isize) -> RatFunc {
        let mono = Polynomial::var(self.vars(), 0).pow(k.unsigned_abs() as u32);
        if k >= 0 {
            RatFunc { num: self.num.mul(&mono), den: self.den.clone() }
        } else {
            RatFunc { num: self.num.clone(), den: self.den.mul(&mono) }
        }
    }

    /// Evaluate at `s`; `None` when the denominator vanishes there.
    pub fn eval(&self, s: &Rational) -> Option<Rational> {
        let d = self.den.eval(std::slice::from_ref(s));
        if d.is_zero() {
            return None;
        }
        Some(self.num.eval(std::slice::from_ref(s)) / d)
    }

    /// Laurent order at `s = 0`: `ord(num) - ord(den)`, or `None` for the
    /// zero function. Negative orders are poles.
    pub fn order_at_zero(&self) -> Option<isize> {
        Some(poly_order(&self.num)? as isize - poly_order(&self.den).unwrap() as isize)
    }

    /// Leading Laurent coefficient at `s = 0` (zero for the zero function).
    pub fn leading_coeff_at_zero(&self) -> Rational {
        match poly_order(&self.num) {
            None => Rational::zero(),
            Some(on) => {
                let od = poly_order(&self.den).unwrap();
                poly_coeff(&self.num, on) / poly_coeff(&self.den, od)
            }
        }
    }
}

fn poly_order(p: &Polynomial) -> Option<u32> {
    p.terms.keys().map(|e| e[0]).min()
}

fn poly_coeff(p: &Polynomial, k: u32) -> Rational {
    p.terms.get(&vec![k]).cloned().unwrap_or_else(Rational::zero)
}

impl fmt::Display for RatFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.as_constant().map_or(false, |c| c.is_one()) {
            write!(f, "{}", self.num)
        } else {
            write!(f, "({}) / ({})", self.num, self.den)
        }
    }
}

/// Substitute a rational curve into a multivariate polynomial.
///
/// Given `p(x_1, .., x_n)` and curve components `x_i = curve[i](s)`, returns
/// the univariate rational function `s -> p(x(s))` exactly.
pub fn compose_poly(p: &Polynomial, curve: &[RatFunc]) -> RatFunc {
    assert_eq!(curve.len(), p.n_vars(), "curve dimension must match polynomial arity");
    assert!(!curve.is_empty(), "cannot compose over an empty curve");
    let svars = curve[0].vars().to_vec();
    let one = RatFunc::constant(&svars, Rational::one());
    let mut acc = RatFunc::zero(&svars);
    for (e, c) in &p.terms {
        let mut term = one.scale(c);
        for (comp, &ei) in curve.iter().zip(e) {
            for _ in 0..ei {
                term = term.mul(comp);
            }
        }
        acc = acc.add(&term);
    }
    acc
}

/// Evaluate a vector of rational functions at `s`; `None` if any component
/// has a pole there.
pub fn curve_eval(curve: &[RatFunc], s: &Rational) -> Option<Vec<Rational>> {
    curve.iter().map(|c| c.eval(s)).collect()
}

/// Exact normalised limit of a rational-function vector as `s -> 0+`.
///
/// Writes `v(s) ~ s^m * w + o(s^m)` with `m` the minimal Laurent order over
/// nonzero components and `w` the vector of leading coefficients (zero for
/// components of higher order). Returns `(m, w)`, or `None` when `v` is
/// identically zero. Since cone membership is scale-invariant, `w` is the
/// direction of the limit of `v(s) / |v(s)|` up to positive scaling.
pub fn lowest_order_limit(v: &[RatFunc]) -> Option<(isize, Vec<Rational>)> {
    let m = v.iter().filter_map(|c| c.order_at_zero()).min()?;
    let w = v
        .iter()
        .map(|c| {
            if c.order_at_zero() == Some(m) {
                c.leading_coeff_at_zero()
            } else {
                Rational::zero()
            }
        })
        .collect();
    Some((m, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xy() -> Vec<String> {
        var_names(&["x1", "x2"])
    }

    #[test]
    fn snaps_floats_to_rationals() {
        assert_eq!(snap_rational(0.5, 1_000_000), Some(rat(1, 2)));
        assert_eq!(snap_rational(-2.0 / 3.0, 1_000_000), Some(rat(-2, 3)));
        assert_eq!(snap_rational(0.0, 1_000_000), Some(rat_int(0)));
        assert_eq!(snap_rational(7.0, 1_000_000), Some(rat_int(7)));
        // λ ≈ k^(1/3)/2^(2/3) style values snap to nearby fractions that are
        // only useful after exact re-verification; here just check the cap.
        let s = snap_rational(std::f64::consts::PI, 100).unwrap();
        assert_eq!(s, rat(22, 7));
        assert_eq!(snap_rational(f64::NAN, 10), None);
        // Near-degenerate input still produces a bounded-denominator value.
        let tiny = snap_rational(1e-9, 1_000_000).unwrap();
        assert!(tiny >= rat_int(0) && tiny <= rat(1, 100_000));
    }

    #[test]
    fn parses_basic_polynomial() {
        let vars = xy();
        let p = parse_polynomial("-x1^2 + 3/2*x1*x2 - 2", &vars).unwrap();
        let v = p.eval(&[rat_int(2), rat_int(4)]);
        // -4 + 3/2*8 - 2 = 6
        assert_eq!(v, rat_int(6));
    }

    #[test]
    fn parses_parenthesised_and_unary_minus() {
        let vars = xy();
        let p = parse_polynomial("(x1 - 1)*(x1 + 1)", &vars).unwrap();
        let q = parse_polynomial("x1^2 - 1", &vars).unwrap();
        assert_eq!(p, q);
        let r = parse_polynomial("-(x1 - x2)", &vars).unwrap();
        assert_eq!(r.eval(&[rat_int(3), rat_int(5)]), rat_int(2));
    }

    #[test]
    fn rejects_unknown_variable_with_offset() {
        let vars = xy();
        let err = parse_polynomial("x1 + zz", &vars).unwrap_err();
        match err {
            ExprError::UnknownVariable { name, offset } => {
                assert_eq!(name, "zz");
                assert_eq!(offset, 5);
            }
            other => panic!("expected UnknownVariable, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bare_division() {
        let vars = xy();
        assert!(parse_polynomial("x1/2", &vars).is_err());
        assert!(parse_polynomial("3/0", &vars).is_err());
    }

    #[test]
    fn display_roundtrips() {
        let vars = xy();
        for text in ["-x1^2 + 3/2*x1*x2 - 2", "x1", "0", "5/3", "x1*x2^3 - x2"] {
            let p = parse_polynomial(text, &vars).unwrap();
            let q = parse_polynomial(&p.to_string(), &vars).unwrap();
            assert_eq!(p, q, "roundtrip failed for `{text}` -> `{p}`");
        }
    }

    #[test]
    fn differentiates_exactly() {
        let vars = xy();
        let p = parse_polynomial("x1^3*x2 - 2*x1 + x2^2", &vars).unwrap();
        let dx1 = p.differentiate(0);
        let dx2 = p.differentiate(1);
        assert_eq!(dx1, parse_polynomial("3*x1^2*x2 - 2", &vars).unwrap());
        assert_eq!(dx2, parse_polynomial("x1^3 + 2*x2", &vars).unwrap());
    }

    #[test]
    fn jacobian_at_rational_point() {
        // G(x) = (-x1^2 + x2, -x2); at (-1/k, 0) the Jacobian is
        // [[2/k, 1], [0, -1]] exactly.
        let vars = xy();
        let g = PolyMap::parse(&vars, &["-x1^2 + x2", "-x2"]).unwrap();
        for k in [10i64, 100, 1000, 10_000] {
            let x = vec![rat(-1, k), rat_int(0)];
            let j = g.jacobian_at(&x);
            assert_eq!(j[0][0], rat(2, k));
            assert_eq!(j[0][1], rat_int(1));
            assert_eq!(j[1][0], rat_int(0));
            assert_eq!(j[1][1], rat_int(-1));
        }
    }

    #[test]
    fn jt_apply_matches_manual_sum() {
        let vars = xy();
        let g = PolyMap::parse(&vars, &["x1^2", "x1*x2"]).unwrap();
        let x = vec![rat_int(3), rat_int(-2)];
        let lam = vec![rat_int(2), rat_int(5)];
        // J = [[6, 0], [-2, 3]]; J^T lam = (2*6 + 5*(-2), 2*0 + 5*3).
        assert_eq!(g.jt_apply(&x, &lam), vec![rat_int(2), rat_int(15)]);
    }

    #[test]
    fn ratfunc_orders_and_limits() {
        let s = var_names(&["s"]);
        // lambda(s) = 1/(2s): pole of order -1, leading coefficient 1/2.
        let lam = RatFunc::new(
            Polynomial::constant(&s, Rational::one()),
            parse_polynomial("2*s", &s).unwrap(),
        );
        assert_eq!(lam.order_at_zero(), Some(-1));
        assert_eq!(lam.leading_coeff_at_zero(), rat(1, 2));
        assert_eq!(lam.eval(&rat(1, 10)).unwrap(), rat_int(5));

        // v(s) = (2s + s^3, s^2): normalised limit direction (2, 0) at order 1.
        let v = vec![
            RatFunc::from_poly(parse_polynomial("2*s + s^3", &s).unwrap()),
            RatFunc::from_poly(parse_polynomial("s^2", &s).unwrap()),
        ];
        let (m, w) = lowest_order_limit(&v).unwrap();
        assert_eq!(m, 1);
        assert_eq!(w, vec![rat_int(2), rat_int(0)]);
    }

    #[test]
    fn compose_poly_on_circle_curve() {
        // The rational circle parametrisation c(s) = (-2s, 2s^2)/(1+s^2)
        // satisfies c1^2 + (c2 - 1)^2 = 1 identically.
        let s = var_names(&["s"]);
        let den = parse_polynomial("1 + s^2", &s).unwrap();
        let c1 = RatFunc::new(parse_polynomial("-2*s", &s).unwrap(), den.clone());
        let c2 = RatFunc::new(parse_polynomial("2*s^2", &s).unwrap(), den);
        let vars = xy();
        let g = parse_polynomial("x1^2 + (x2 - 1)^2 - 1", &vars).unwrap();
        let restricted = compose_poly(&g, &[c1, c2]);
        assert!(restricted.is_zero() || restricted.num().is_zero());
    }

    #[test]
    fn parse_rational_literals() {
        assert_eq!(parse_rational("3/2").unwrap(), rat(3, 2));
        assert_eq!(parse_rational("-7").unwrap(), rat_int(-7));
        assert_eq!(parse_rational(" -7/3 ").unwrap(), rat(-7, 3));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("a/b").is_err());
    }
}
