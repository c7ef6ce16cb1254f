//! The truncated graded operator ring and its two faithful views.
//!
//! A [`TruncatedOp`] is a finite sum of homogeneous components stored as
//! HCPs, plus an exactness `floor`: orders strictly below the floor are
//! unknown (`None` means the operator is exact). Multiplication tracks the
//! floor: a product component is kept only when every contribution to it is
//! known.
//!
//! A [`CanonicalOp`] stores homogeneous components in canonical
//! (normal-ordered) form `sum c_i x^i d^{i+m}` truncated at an x-degree cap.
//! It exists as an independent multiplication route: expanding HCP monomials
//! into canonical series and multiplying those must agree with the HCP
//! structure constants, and several actions (on power series, on the
//! polynomial module) read canonical coefficients directly.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::hcpc::{binom, stirling1_row, stirling2_row, Deg, HcpForm, Hcpc};
use crate::scalar::{CycScalar, Rat, ScalarError};

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum OpError {
    #[error("insufficient precision: needs components down to order {needed}, known down to {floor}")]
    InsufficientPrecision { needed: i64, floor: i64 },
    #[error("invalid generator index: {0}")]
    InvalidIndex(String),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
}

// ---------------------------------------------------------------------------
// TruncatedOp
// ---------------------------------------------------------------------------

/// A graded operator with HCP components and an exactness floor.
#[derive(Clone, PartialEq, Eq)]
pub struct TruncatedOp {
    body: Hcpc,
    /// Orders `< floor` are unknown; `None` means exact.
    floor: Option<i64>,
}

impl TruncatedOp {
    pub fn exact(body: Hcpc) -> Self {
        TruncatedOp { body, floor: None }
    }

    pub fn with_floor(body: Hcpc, floor: Option<i64>) -> Self {
        let mut op = TruncatedOp { body, floor };
        op.trim();
        op
    }

    pub fn zero(k: u32) -> Self {
        Self::exact(Hcpc::zero(k))
    }

    pub fn one(k: u32) -> Self {
        Self::exact(Hcpc::one(k))
    }

    pub fn index(&self) -> u32 {
        self.body.index()
    }

    pub fn body(&self) -> &Hcpc {
        &self.body
    }

    pub fn floor(&self) -> Option<i64> {
        self.floor
    }

    pub fn is_exact(&self) -> bool {
        self.floor.is_none()
    }

    /// Exactly zero (no components and no unknown tail).
    pub fn is_zero(&self) -> bool {
        self.body.is_zero() && self.floor.is_none()
    }

    pub fn top(&self) -> Deg {
        self.body.top()
    }

    /// Upper bound on the order, accounting for the unknown tail.
    fn ord_bound(&self) -> Deg {
        match (self.body.top(), self.floor) {
            (Deg::Fin(t), _) => Deg::Fin(t),
            (Deg::NegInf, Some(f)) => Deg::Fin(f - 1),
            (Deg::NegInf, None) => Deg::NegInf,
        }
    }

    pub fn component(&self, order: i64) -> Option<&HcpForm> {
        self.body.component(order)
    }

    fn trim(&mut self) {
        if let Some(f) = self.floor {
            let keep: Vec<i64> = self
                .body
                .components()
                .map(|(o, _)| o)
                .filter(|&o| o >= f)
                .collect();
            let mut body = Hcpc::zero(self.body.index());
            for o in keep {
                body.add_form(self.body.component(o).unwrap());
            }
            self.body = body;
        }
    }

    pub fn add(&self, other: &TruncatedOp) -> TruncatedOp {
        let floor = match (self.floor, other.floor) {
            (None, None) => None,
            (Some(a), None) => Some(a),
            (None, Some(b)) => Some(b),
            (Some(a), Some(b)) => Some(a.max(b)),
        };
        TruncatedOp::with_floor(self.body.add(&other.body), floor)
    }

    pub fn sub(&self, other: &TruncatedOp) -> TruncatedOp {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> TruncatedOp {
        TruncatedOp {
            body: self.body.neg(),
            floor: self.floor,
        }
    }

    pub fn scale(&self, c: &CycScalar) -> TruncatedOp {
        TruncatedOp {
            body: self.body.scale(c),
            floor: self.floor,
        }
    }

    /// Graded product with floor bookkeeping: the result floor is
    /// `max(self.floor + ord(other), other.floor + ord(self))`, components
    /// below it being unreachable without unknown inputs.
    pub fn mul(&self, other: &TruncatedOp) -> TruncatedOp {
        if self.is_zero() || other.is_zero() {
            return TruncatedOp::zero(self.index());
        }
        let mut candidates = vec![];
        if let Some(f) = self.floor {
            match other.ord_bound() {
                Deg::Fin(t) => candidates.push(f + t),
                Deg::NegInf => {}
            }
        }
        if let Some(f) = other.floor {
            match self.ord_bound() {
                Deg::Fin(t) => candidates.push(f + t),
                Deg::NegInf => {}
            }
        }
        let floor = candidates.into_iter().max();
        TruncatedOp::with_floor(self.body.mul(&other.body), floor)
    }

    pub fn pow(&self, e: u32) -> TruncatedOp {
        let mut acc = TruncatedOp::one(self.index());
        for _ in 0..e {
            acc = acc.mul(self);
        }
        acc
    }

    pub fn commutator(&self, other: &TruncatedOp) -> TruncatedOp {
        self.mul(other).sub(&other.mul(self))
    }
}

impl fmt::Debug for TruncatedOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.body)?;
        if let Some(fl) = self.floor {
            write!(f, " (floor {})", fl)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// generators
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GenKind {
    X,
    D,
    Int,
    Delta,
    Gamma(i64),
    A(i64),
    B(i64),
}

/// All generators are single exact HCP monomials:
/// `x = G_1 D^-1`, `d = D`, `int = D^-1`, `delta = B_1`, `G_i`, `A_i`, `B_j`.
pub fn make_generator(kind: GenKind, k: u32) -> Result<TruncatedOp, OpError> {
    let one = CycScalar::one(k);
    let form = match kind {
        GenKind::X => HcpForm::ga_monomial(k, -1, 0, 1, one),
        GenKind::D => HcpForm::ga_monomial(k, 1, 0, 0, one),
        GenKind::Int => HcpForm::ga_monomial(k, -1, 0, 0, one),
        GenKind::Delta => HcpForm::b_monomial(k, 0, 1, one),
        GenKind::Gamma(i) => {
            if i < 0 {
                return Ok(TruncatedOp::zero(k));
            }
            HcpForm::ga_monomial(k, 0, 0, i as u32, one)
        }
        GenKind::A(i) => {
            if k < 1 {
                return Err(OpError::InvalidIndex(format!("A_{} needs a positive root index", i)));
            }
            let i = i.rem_euclid(i64::from(k)) as u32;
            HcpForm::ga_monomial(k, 0, i, 0, one)
        }
        GenKind::B(j) => {
            if j <= 0 {
                return Ok(TruncatedOp::zero(k));
            }
            HcpForm::b_monomial(k, 0, j as u32, one)
        }
    };
    Ok(TruncatedOp::exact(Hcpc::from_form(form)))
}

/// The canonical monomial `x^i d^j` as an exact HCP: the falling factorial
/// `G(G-1)...(G-i+1) D^{j-i}`.
pub fn x_pow_d_pow(k: u32, i: u32, j: u32) -> HcpForm {
    let mut h = HcpForm::zero(k, i64::from(j) - i64::from(i));
    for (n, s) in stirling1_row(i).iter().enumerate() {
        if !s.is_zero() {
            h.add_ga(0, n as u32, CycScalar::from_rat(k, Rat::from(s.clone())));
        }
    }
    h
}

// ---------------------------------------------------------------------------
// canonical components (normal-ordered view)
// ---------------------------------------------------------------------------

/// One homogeneous component in canonical form: `terms[i] * x^i d^{i+order}`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CanonicalComponent {
    pub order: i64,
    pub terms: BTreeMap<u32, CycScalar>,
}

impl CanonicalComponent {
    pub fn new(order: i64) -> Self {
        CanonicalComponent {
            order,
            terms: BTreeMap::new(),
        }
    }

    pub fn add_term(&mut self, xdeg: u32, c: CycScalar) {
        assert!(i64::from(xdeg) + self.order >= 0, "negative d-degree");
        if c.is_zero() {
            return;
        }
        match self.terms.entry(xdeg) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = o.get().try_add(&c).unwrap();
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Product, keeping only x-degrees `<= cap`. Exactness at the cap
    /// requires the right factor to be known up to `cap + max(order, 0)`.
    pub fn mul_trunc(&self, other: &CanonicalComponent, cap: u32) -> CanonicalComponent {
        let mut out = CanonicalComponent::new(self.order + other.order);
        for (&i, ci) in &self.terms {
            if i > cap {
                continue;
            }
            let kdeg = i64::from(i) + self.order; // d-degree of left factor
            for (&j, cj) in &other.terms {
                // (x^i d^K)(x^j d^L) = sum_s C(K,s) j!/(j-s)! x^{i+j-s} d^{K+L-s}
                let smax = std::cmp::min(kdeg, i64::from(j));
                for s in 0..=smax {
                    let xdeg = i64::from(i) + i64::from(j) - s;
                    if xdeg > i64::from(cap) {
                        continue;
                    }
                    let mut w = binom(kdeg, s as u32);
                    // falling factorial j!/(j-s)!
                    for t in 0..s {
                        w *= BigInt::from(i64::from(j) - t);
                    }
                    let coeff = ci
                        .try_mul(cj)
                        .unwrap()
                        .try_mul(&CycScalar::from_rat(ci.index(), Rat::from(w)))
                        .unwrap();
                    out.add_term(xdeg as u32, coeff);
                }
            }
        }
        out
    }
}

/// Canonical expansion of one HCP, exact up to x-degree `cap`.
pub fn hcp_to_canonical(h: &HcpForm, cap: u32) -> CanonicalComponent {
    let k = h.index();
    let mut out = CanonicalComponent::new(h.order());
    for (i, l, c) in h.ga_terms() {
        let mono = canonical_ga(k, i, l, h.order(), cap).scaled(c);
        out.merge(&mono);
    }
    for (j, c) in h.b_terms() {
        let mono = canonical_b(k, j, h.order(), cap).scaled(c);
        out.merge(&mono);
    }
    out
}

impl CanonicalComponent {
    fn scaled(mut self, c: &CycScalar) -> Self {
        let terms = std::mem::take(&mut self.terms);
        for (x, v) in terms {
            self.add_term(x, v.try_mul(c).unwrap());
        }
        self
    }

    fn merge(&mut self, other: &CanonicalComponent) {
        assert_eq!(self.order, other.order);
        for (&x, c) in &other.terms {
            self.add_term(x, c.clone());
        }
    }
}

/// Canonical form of `G_l A_i D^r`, exact up to x-degree `cap`.
fn canonical_ga(k: u32, i: u32, l: u32, r: i64, cap: u32) -> CanonicalComponent {
    let gamma = canonical_gamma(k, l, cap);
    let a = canonical_a(k, i, cap);
    let d = canonical_d(k, r, cap);
    gamma.mul_trunc(&a, cap).mul_trunc(&d, cap)
}

/// Canonical form of `B_j D^r`, exact up to x-degree `cap`.
fn canonical_b(k: u32, j: u32, r: i64, cap: u32) -> CanonicalComponent {
    // B_j = sum_{n >= 0} (-1)^n / ((j-1)! n!) x^{j-1+n} d^{j-1+n}
    let mut b = CanonicalComponent::new(0);
    let mut fact_j = Rat::one();
    for t in 1..i64::from(j) {
        fact_j *= Rat::from(BigInt::from(t));
    }
    let mut fact_n = Rat::one();
    for n in 0..=cap.saturating_sub(j - 1) {
        if n > 0 {
            fact_n *= Rat::from(BigInt::from(n));
        }
        let xdeg = j - 1 + n;
        if xdeg > cap {
            break;
        }
        let sign = if n % 2 == 0 { Rat::one() } else { -Rat::one() };
        b.add_term(
            xdeg,
            CycScalar::from_rat(k, sign / (&fact_j * &fact_n)),
        );
    }
    b.mul_trunc(&canonical_d(k, r, cap), cap)
}

fn canonical_gamma(k: u32, l: u32, cap: u32) -> CanonicalComponent {
    // G_l = sum_n S(l, n) x^n d^n
    let mut out = CanonicalComponent::new(0);
    for (n, s) in stirling2_row(l).iter().enumerate() {
        if n as u32 > cap {
            break;
        }
        if !s.is_zero() {
            out.add_term(n as u32, CycScalar::from_rat(k, Rat::from(s.clone())));
        }
    }
    out
}

fn canonical_a(k: u32, i: u32, cap: u32) -> CanonicalComponent {
    // A_i = sum_n (xi^i - 1)^n / n! x^n d^n
    let mut out = CanonicalComponent::new(0);
    let base = CycScalar::zeta_pow(k, i64::from(i))
        .try_sub(&CycScalar::one(k))
        .unwrap();
    let mut pow = CycScalar::one(k);
    let mut fact = Rat::one();
    for n in 0..=cap {
        if n > 0 {
            pow = pow.try_mul(&base).unwrap();
            fact *= Rat::from(BigInt::from(n));
        }
        out.add_term(n, pow.scale(&(Rat::one() / &fact)));
    }
    out
}

fn canonical_d(k: u32, r: i64, cap: u32) -> CanonicalComponent {
    if r >= 0 {
        let mut out = CanonicalComponent::new(r);
        out.add_term(0, CycScalar::one(k));
        return out;
    }
    // integration operator: int = sum_n (-1)^n / (n+1)! x^{n+1} d^n
    let mut int1 = CanonicalComponent::new(-1);
    let mut fact = Rat::one();
    for n in 0..cap {
        fact *= Rat::from(BigInt::from(n + 1));
        let sign = if n % 2 == 0 { Rat::one() } else { -Rat::one() };
        int1.add_term(n + 1, CycScalar::from_rat(k, sign / &fact));
    }
    let mut out = CanonicalComponent::new(0);
    out.add_term(0, CycScalar::one(k));
    for _ in 0..(-r) {
        out = out.mul_trunc(&int1, cap);
    }
    out
}

/// A graded operator in canonical form, truncated at `xcap` in every
/// component. The independent multiplication route used as an oracle.
#[derive(Clone, Debug)]
pub struct CanonicalOp {
    pub k: u32,
    pub comps: BTreeMap<i64, CanonicalComponent>,
    pub xcap: u32,
}

impl CanonicalOp {
    pub fn from_truncated(op: &TruncatedOp, xcap: u32) -> Self {
        let mut comps = BTreeMap::new();
        for (order, form) in op.body().components() {
            let c = hcp_to_canonical(form, xcap);
            if !c.is_zero() {
                comps.insert(order, c);
            }
        }
        CanonicalOp {
            k: op.index(),
            comps,
            xcap,
        }
    }

    /// Truncated product; every component of the result is exact up to the
    /// smaller cap implied by the factors (callers choose generous caps).
    pub fn mul(&self, other: &CanonicalOp, xcap: u32) -> CanonicalOp {
        let mut comps: BTreeMap<i64, CanonicalComponent> = BTreeMap::new();
        for (&o1, c1) in &self.comps {
            for (&o2, c2) in &other.comps {
                let prod = c1.mul_trunc(c2, xcap);
                if prod.is_zero() {
                    continue;
                }
                match comps.entry(o1 + o2) {
                    std::collections::btree_map::Entry::Vacant(v) => {
                        v.insert(prod);
                    }
                    std::collections::btree_map::Entry::Occupied(mut e) => {
                        e.get_mut().merge(&prod);
                        if e.get().is_zero() {
                            e.remove();
                        }
                    }
                }
            }
        }
        CanonicalOp {
            k: self.k,
            comps,
            xcap,
        }
    }
}

// ---------------------------------------------------------------------------
// power series and the module actions
// ---------------------------------------------------------------------------

/// A truncated power series in `x`: degrees `>= precision` are unknown
/// (`None` = entire).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct XSeries {
    pub k: u32,
    pub coeffs: BTreeMap<u32, CycScalar>,
    pub precision: Option<u32>,
}

impl XSeries {
    pub fn zero(k: u32) -> Self {
        XSeries {
            k,
            coeffs: BTreeMap::new(),
            precision: None,
        }
    }

    pub fn monomial(k: u32, deg: u32, c: CycScalar) -> Self {
        let mut s = Self::zero(k);
        s.set(deg, c);
        s
    }

    pub fn set(&mut self, deg: u32, c: CycScalar) {
        if let Some(p) = self.precision {
            assert!(deg < p, "coefficient beyond stated precision");
        }
        if c.is_zero() {
            self.coeffs.remove(&deg);
        } else {
            self.coeffs.insert(deg, c);
        }
    }

    pub fn coeff(&self, deg: u32) -> CycScalar {
        self.coeffs
            .get(&deg)
            .cloned()
            .unwrap_or_else(|| CycScalar::zero(self.k))
    }

    pub fn derivative(&self) -> XSeries {
        let mut out = XSeries {
            k: self.k,
            coeffs: BTreeMap::new(),
            precision: self.precision.map(|p| p.saturating_sub(1)),
        };
        for (&d, c) in &self.coeffs {
            if d >= 1 {
                out.set(d - 1, c.scale(&Rat::from(BigInt::from(d))));
            }
        }
        out
    }
}

/// A polynomial in `d` over the scalar field (the image of an operator in the
/// quotient by left multiples of `x`).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DPolynomial {
    pub k: u32,
    pub coeffs: BTreeMap<u32, CycScalar>,
}

impl DPolynomial {
    pub fn zero(k: u32) -> Self {
        DPolynomial {
            k,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn monomial(k: u32, deg: u32, c: CycScalar) -> Self {
        let mut p = Self::zero(k);
        p.add(deg, c);
        p
    }

    pub fn add(&mut self, deg: u32, c: CycScalar) {
        if c.is_zero() {
            return;
        }
        match self.coeffs.entry(deg) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = o.get().try_add(&c).unwrap();
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// Action of one G-form HCP monomial on the monomial `x^m`; returns `(degree,
/// scalar)` for the image `scalar * x^degree`, or `None` when it vanishes.
fn mono_apply(
    k: u32,
    i: u32,
    l: u32,
    b: Option<u32>,
    r: i64,
    m: u32,
) -> Option<(u32, CycScalar)> {
    // D^r first: x^m -> (m! / (m-r)!) x^{m-r}
    let md = i64::from(m) - r;
    if md < 0 {
        return None;
    }
    let mut w = Rat::one();
    if r >= 0 {
        for t in 0..r {
            w *= Rat::from(BigInt::from(i64::from(m) - t));
        }
    } else {
        for t in 0..(-r) {
            w /= Rat::from(BigInt::from(i64::from(m) + t + 1));
        }
    }
    if w.is_zero() {
        return None;
    }
    let deg = md as u32;
    // B_j projects onto degree j-1
    if let Some(j) = b {
        if deg != j - 1 {
            return None;
        }
    }
    // A_i scales by xi^{i deg}, G_l by deg^l
    let mut c = CycScalar::from_rat(k, w);
    c = c
        .try_mul(&CycScalar::zeta_pow(k, i64::from(i) * i64::from(deg)))
        .unwrap();
    c = c
        .try_mul(&CycScalar::from_rat(
            k,
            Rat::from(BigInt::from(deg).pow(l)),
        ))
        .unwrap();
    Some((deg, c))
}

/// The left module action on power series. Result precision accounts for the
/// operator's unknown tail and the series' unknown degrees.
pub fn op_apply(op: &TruncatedOp, f: &XSeries) -> Result<XSeries, OpError> {
    let k = op.index();
    let mut precision: Option<u32> = None;
    let mut min_unknown: Option<i64> = None;
    if let Some(fl) = op.floor() {
        // unknown components of order <= fl - 1 map degree m >= 0 to
        // degree >= 1 - fl
        min_unknown = Some(1 - fl);
    }
    if let Some(p) = f.precision {
        let top = match op.top() {
            Deg::Fin(t) => t,
            Deg::NegInf => 0,
        };
        let cand = i64::from(p) - top;
        min_unknown = Some(min_unknown.map_or(cand, |m| m.min(cand)));
    }
    if let Some(mu) = min_unknown {
        precision = Some(mu.max(0) as u32);
    }
    let mut out = XSeries {
        k,
        coeffs: BTreeMap::new(),
        precision,
    };
    for (_, form) in op.body().components() {
        for (&m, fc) in &f.coeffs {
            let fc = fc.promote(k)?;
            for (i, l, c) in form.ga_terms() {
                if let Some((deg, s)) = mono_apply(k, i, l, None, form.order(), m) {
                    push_series(&mut out, deg, s.try_mul(c)?.try_mul(&fc)?);
                }
            }
            for (j, c) in form.b_terms() {
                if let Some((deg, s)) = mono_apply(k, 0, 0, Some(j), form.order(), m) {
                    push_series(&mut out, deg, s.try_mul(c)?.try_mul(&fc)?);
                }
            }
        }
    }
    Ok(out)
}

fn push_series(s: &mut XSeries, deg: u32, c: CycScalar) {
    if let Some(p) = s.precision {
        if deg >= p {
            return;
        }
    }
    if c.is_zero() {
        return;
    }
    let cur = s.coeff(deg);
    let sum = cur.try_add(&c).unwrap();
    if sum.is_zero() {
        s.coeffs.remove(&deg);
    } else {
        s.coeffs.insert(deg, sum);
    }
}

/// The right action on the polynomial module: `f * op` reduced modulo left
/// multiples of `x` (keep the canonical x-degree-zero part).
pub fn f_action(f: &DPolynomial, op: &TruncatedOp) -> Result<DPolynomial, OpError> {
    let k = op.index();
    let max_n = f.coeffs.keys().next_back().copied().unwrap_or(0);
    if let Some(fl) = op.floor() {
        if fl > -i64::from(max_n) {
            return Err(OpError::InsufficientPrecision {
                needed: -i64::from(max_n),
                floor: fl,
            });
        }
    }
    let mut out = DPolynomial::zero(k);
    for (&n, fc) in &f.coeffs {
        let fc = fc.promote(k)?;
        for (order, form) in op.body().components() {
            let res_deg = i64::from(n) + order;
            if res_deg < 0 {
                continue;
            }
            // x-degree-0 part of d^n H_order: sum_i C(n,i) i! c_i d^{n+order}
            let canon = hcp_to_canonical(form, n);
            let mut acc = CycScalar::zero(k);
            for (&i, c) in &canon.terms {
                let mut w = BigInt::one();
                for t in 0..i64::from(i) {
                    w *= BigInt::from(i64::from(n) - t);
                }
                acc = acc.try_add(&c.try_mul(&CycScalar::from_rat(k, Rat::from(w)))?)?;
            }
            out.add(res_deg as u32, acc.try_mul(&fc)?);
        }
    }
    Ok(out)
}

/// The x-degree-`q` slice: all canonical terms `c x^q d^j` of the operator,
/// returned as the d-polynomial `sum c d^j`.
pub fn slice(op: &TruncatedOp, q: u32) -> Result<DPolynomial, OpError> {
    if let Some(fl) = op.floor() {
        if fl > -i64::from(q) {
            return Err(OpError::InsufficientPrecision {
                needed: -i64::from(q),
                floor: fl,
            });
        }
    }
    let k = op.index();
    let mut out = DPolynomial::zero(k);
    for (order, form) in op.body().components() {
        let ddeg = i64::from(q) + order;
        if ddeg < 0 {
            continue;
        }
        let canon = hcp_to_canonical(form, q);
        if let Some(c) = canon.terms.get(&q) {
            out.add(ddeg as u32, c.clone());
        }
    }
    Ok(out)
}

/// Extend `(u0, u1, u2)` to a solution of `u''' = -6 u u'` in the scaled
/// basis `u = sum u_n x^n / n!`, with `u_{n+3} = -6 sum_a C(n,a) u_a u_{n-a+1}`.
pub fn extend_stationary_kdv(u0: &Rat, u1: &Rat, u2: &Rat, n: u32) -> XSeries {
    assert!(n >= 3);
    let mut u = vec![u0.clone(), u1.clone(), u2.clone()];
    for m in 0..=(n.saturating_sub(3)) {
        let mut acc = Rat::zero();
        for a in 0..=m {
            let w = Rat::from(binom(i64::from(m), m - a));
            acc += w * &u[a as usize] * &u[(m - a + 1) as usize];
        }
        u.push(acc * Rat::from(BigInt::from(-6)));
    }
    let mut out = XSeries {
        k: 1,
        coeffs: BTreeMap::new(),
        precision: Some(n + 1),
    };
    let mut fact = Rat::one();
    for (deg, coef) in u.iter().enumerate().take((n + 1) as usize) {
        if deg > 0 {
            fact *= Rat::from(BigInt::from(deg as i64));
        }
        out.set(deg as u32, CycScalar::from_rat(1, coef / &fact));
    }
    out
}

/// Assemble a differential operator `sum_j c_j(x) d^j` from truncated series
/// coefficients, as a `TruncatedOp` over `Hcpc(k)` with the floor implied by
/// the series precisions.
pub fn diff_op_from_series(k: u32, coeffs: &[(u32, XSeries)]) -> Result<TruncatedOp, OpError> {
    let mut body = Hcpc::zero(k);
    let mut floor: Option<i64> = None;
    for (j, series) in coeffs {
        for (&i, c) in &series.coeffs {
            let form = x_pow_d_pow(k, i, *j).scale(&c.promote(k)?);
            body.add_form(&form);
        }
        if let Some(p) = series.precision {
            // monomials x^i d^j with i >= p are unknown: orders <= j - p
            let cand = i64::from(*j) - i64::from(p) + 1;
            floor = Some(floor.map_or(cand, |f: i64| f.max(cand)));
        }
    }
    Ok(TruncatedOp::with_floor(body, floor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, rat_int};

    fn k2_one() -> CycScalar {
        CycScalar::one(2)
    }

    #[test]
    fn generator_shapes() {
        let x = make_generator(GenKind::X, 2).unwrap();
        assert_eq!(x.top(), Deg::Fin(-1));
        let d = make_generator(GenKind::D, 2).unwrap();
        assert_eq!(d.top(), Deg::Fin(1));
        let b0 = make_generator(GenKind::B(0), 2).unwrap();
        assert!(b0.is_zero());
        let delta = make_generator(GenKind::Delta, 2).unwrap();
        assert_eq!(delta.top(), Deg::Fin(0));
    }

    #[test]
    fn d_times_x_is_leibniz() {
        let k = 2;
        let x = make_generator(GenKind::X, k).unwrap();
        let d = make_generator(GenKind::D, k).unwrap();
        let dx = d.mul(&x);
        // d x = x d + 1 = G_1 + 1
        let mut expect = Hcpc::one(k);
        expect.add_form(&HcpForm::ga_monomial(k, 0, 0, 1, k2_one()));
        assert_eq!(dx.body(), &expect);
    }

    #[test]
    fn delta_series_slices() {
        // delta = 1 - x d + x^2 d^2 / 2 - ...
        let delta = make_generator(GenKind::Delta, 2).unwrap();
        let c = hcp_to_canonical(delta.component(0).unwrap(), 3);
        assert_eq!(c.terms[&0], CycScalar::one(2));
        assert_eq!(c.terms[&1], CycScalar::from_int(2, -1));
        assert_eq!(c.terms[&2], CycScalar::from_rat(2, rat(1, 2)));
        // slice q=2 of delta is x^2 d^2 / 2
        let s = slice(&delta, 2).unwrap();
        assert_eq!(s.coeffs[&2], CycScalar::from_rat(2, rat(1, 2)));
        assert_eq!(s.coeffs.len(), 1);
    }

    #[test]
    fn int_series_slices() {
        // int = x - x^2 d / 2 + ...
        let int = make_generator(GenKind::Int, 2).unwrap();
        let c = hcp_to_canonical(int.component(-1).unwrap(), 2);
        assert_eq!(c.terms[&1], CycScalar::one(2));
        assert_eq!(c.terms[&2], CycScalar::from_rat(2, rat(-1, 2)));
    }

    #[test]
    fn a_slice_example() {
        // slice q=1 of A_{2;1} is (xi - 1) x d = -2 x d
        let a = make_generator(GenKind::A(1), 2).unwrap();
        let s = slice(&a, 1).unwrap();
        assert_eq!(s.coeffs[&1], CycScalar::from_int(2, -2));
    }

    #[test]
    fn delta_evaluates_at_zero() {
        let k = 2;
        let delta = make_generator(GenKind::Delta, k).unwrap();
        let mut f = XSeries::zero(k);
        f.set(0, CycScalar::from_int(k, 3));
        f.set(1, CycScalar::from_int(k, 2));
        f.set(2, CycScalar::from_int(k, 1));
        let g = op_apply(&delta, &f).unwrap();
        assert_eq!(g.coeff(0), CycScalar::from_int(k, 3));
        assert!(g.coeffs.len() == 1);
    }

    #[test]
    fn int_integrates_monomials() {
        let k = 2;
        let int = make_generator(GenKind::Int, k).unwrap();
        for m in 0u32..6 {
            let f = XSeries::monomial(k, m, CycScalar::one(k));
            let g = op_apply(&int, &f).unwrap();
            assert_eq!(
                g.coeff(m + 1),
                CycScalar::from_rat(k, rat(1, i64::from(m) + 1))
            );
        }
    }

    #[test]
    fn shift_action_on_monomials() {
        // A_{2;1} acts on x^m as (-1)^m x^m
        let k = 2;
        let a = make_generator(GenKind::A(1), k).unwrap();
        let f = XSeries::monomial(k, 3, CycScalar::one(k));
        let g = op_apply(&a, &f).unwrap();
        assert_eq!(g.coeff(3), CycScalar::from_int(k, -1));
    }

    #[test]
    fn f_action_examples() {
        let k = 2;
        // 1 . d^2 = d^2
        let d2 = make_generator(GenKind::D, k).unwrap().pow(2);
        let one = DPolynomial::monomial(k, 0, CycScalar::one(k));
        let r = f_action(&one, &d2).unwrap();
        assert_eq!(r, DPolynomial::monomial(k, 2, CycScalar::one(k)));
        // 1 . (c0 + c1 A_1) = c0 + c1
        let mut op = Hcpc::scalar(k, CycScalar::from_int(k, 5));
        op.add_form(&HcpForm::ga_monomial(k, 0, 1, 0, CycScalar::from_int(k, 7)));
        let op = TruncatedOp::exact(op);
        let r = f_action(&one, &op).unwrap();
        assert_eq!(r, DPolynomial::monomial(k, 0, CycScalar::from_int(k, 12)));
        // d . A_1 = -d (reduce d A_1 = xi A_1 d mod x)
        let dpoly = DPolynomial::monomial(k, 1, CycScalar::one(k));
        let a1 = make_generator(GenKind::A(1), k).unwrap();
        let r = f_action(&dpoly, &a1).unwrap();
        assert_eq!(r, DPolynomial::monomial(k, 1, CycScalar::from_int(k, -1)));
    }

    #[test]
    fn kdv_series_recursion() {
        // zero seed stays zero
        let u = extend_stationary_kdv(&Rat::zero(), &Rat::zero(), &Rat::zero(), 5);
        assert!(u.coeffs.is_empty());
        // (1,0,0): u_3 = 0
        let u = extend_stationary_kdv(&rat_int(1), &Rat::zero(), &Rat::zero(), 3);
        assert_eq!(u.coeff(3), CycScalar::zero(1));
        // (0,1,0): u_3 = 0 and u_4 = -6 (coefficient -6/4! = -1/4)
        let u = extend_stationary_kdv(&Rat::zero(), &rat_int(1), &Rat::zero(), 4);
        assert_eq!(u.coeff(3), CycScalar::zero(1));
        assert_eq!(u.coeff(4), CycScalar::from_rat(1, rat(-1, 4)));
    }

    #[test]
    fn kdv_series_satisfies_ode() {
        // substitute the truncated series into u''' + 6 u u' and check
        // vanishing to the available order
        let n = 10;
        let u = extend_stationary_kdv(&rat_int(1), &rat_int(2), &rat_int(3), n);
        let u1 = u.derivative();
        let u3 = u.derivative().derivative().derivative();
        let avail = u3.precision.unwrap();
        for deg in 0..avail {
            let mut acc = u3.coeff(deg);
            for a in 0..=deg {
                let prod = u.coeff(a).try_mul(&u1.coeff(deg - a)).unwrap();
                acc = acc
                    .try_add(&prod.scale(&rat_int(6)))
                    .unwrap();
            }
            assert!(acc.is_zero(), "residual at degree {}", deg);
        }
    }

    #[test]
    fn diff_op_floor_tracking() {
        let k = 2;
        let mut u = XSeries::zero(1);
        u.precision = Some(4);
        u.set(0, CycScalar::from_int(1, 1));
        u.set(2, CycScalar::from_int(1, 5));
        // Q = d^2 + u: floor = 2 - 4 + ... = max over j of j - p + 1
        let d2 = XSeries::monomial(1, 0, CycScalar::one(1));
        let q = diff_op_from_series(k, &[(2, d2), (0, u)]).unwrap();
        assert_eq!(q.floor(), Some(-3));
        assert_eq!(q.top(), Deg::Fin(2));
        // component at order 0 is the constant 1
        assert_eq!(
            q.component(0).unwrap().ga_coeff(0, 0),
            Some(&CycScalar::one(k))
        );
    }

    #[test]
    fn product_floor_rule() {
        let k = 2;
        let mut body = Hcpc::d_pow(k, 2);
        body.add_form(&HcpForm::ga_monomial(k, 0, 0, 0, CycScalar::one(k)));
        let p = TruncatedOp::with_floor(body, Some(-3));
        let q = TruncatedOp::exact(Hcpc::d_pow(k, 1));
        let pq = p.mul(&q);
        assert_eq!(pq.floor(), Some(-2)); // floor + ord(q) = -3 + 1
        let qp = q.mul(&p);
        assert_eq!(qp.floor(), Some(-2));
    }

    #[test]
    fn op_apply_module_action_property() {
        // (P Q) . f = P . (Q . f) for exact operators
        let k = 2;
        let p = make_generator(GenKind::D, k)
            .unwrap()
            .pow(2)
            .add(&make_generator(GenKind::X, k).unwrap());
        let q = make_generator(GenKind::Delta, k)
            .unwrap()
            .add(&make_generator(GenKind::Int, k).unwrap());
        let mut f = XSeries::zero(k);
        f.set(0, CycScalar::from_int(k, 2));
        f.set(1, CycScalar::from_int(k, -3));
        f.set(3, CycScalar::from_rat(k, rat(5, 7)));
        let lhs = op_apply(&p.mul(&q), &f).unwrap();
        let rhs = op_apply(&p, &op_apply(&q, &f).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn canonical_oracle_agrees_on_simple_products() {
        // int * d in both routes, truncated to x-degree 6
        let k = 2;
        let cap = 6;
        let int = make_generator(GenKind::Int, k).unwrap();
        let d = make_generator(GenKind::D, k).unwrap();
        let hcp_route = CanonicalOp::from_truncated(&int.mul(&d), cap);
        let canon_route = CanonicalOp::from_truncated(&int, cap + 1)
            .mul(&CanonicalOp::from_truncated(&d, cap), cap);
        assert_eq!(hcp_route.comps, canon_route.comps);
    }

    #[test]
    fn ord_of_product_bound() {
        let k = 2;
        let p = make_generator(GenKind::D, k)
            .unwrap()
            .pow(2)
            .add(&make_generator(GenKind::X, k).unwrap());
        let q = make_generator(GenKind::Int, k).unwrap();
        let pq = p.mul(&q);
        // ord(PQ) <= ord P + ord Q, equality here since symbols multiply
        assert_eq!(pq.top(), Deg::Fin(1));
    }
}
