//! Vector and matrix realizations of B-free operators.
//!
//! Evaluating the shift generators at the k roots of unity identifies the
//! commutative algebra they span with the split algebra `K(zeta)^k`; a
//! B-free operator then becomes a (twisted) Laurent polynomial in `D` with
//! coefficients that are polynomials in the Euler operator `G` over
//! `K(zeta)^k`. Moving `D^u` across a coefficient rotates the vector entries
//! by `u` and shifts `G` by `u`.
//!
//! [`phi_hat`] is that embedding. [`psi_matrix`] realizes the Gamma-free part
//! as `k x k` matrices over Laurent polynomials in `W = D^k`, sending `D` to
//! the companion matrix `T` with `T^k = W Id`. [`char_poly`] computes
//! `det(M - lambda Id)`, the spectral-curve polynomial of a centralizer
//! element.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::hcpc::{is_totally_free_hcpc, BWitness, Deg};
use crate::opcore::TruncatedOp;
use crate::scalar::{CycScalar, CycVector};

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum EkError {
    #[error("component at order {order} is not totally free of B_j ({witness:?})")]
    NotTotallyFree { order: i64, witness: BWitness },
    #[error("coefficient at exponent {0} has positive Gamma-degree")]
    GammaPresent(i64),
    #[error("operator is truncated; an exact Laurent polynomial is required")]
    Truncated,
    #[error("matrix entry contains a negative power of W")]
    NegativeWPower,
}

// ---------------------------------------------------------------------------
// GammaPoly: polynomials in G over K(zeta)^k
// ---------------------------------------------------------------------------

/// A polynomial in the Euler operator with vector coefficients.
#[derive(Clone, PartialEq, Eq)]
pub struct GammaPoly {
    k: u32,
    /// coefficient of `G^d` at index `d`; trailing zeros trimmed
    c: Vec<CycVector>,
}

impl GammaPoly {
    pub fn zero(k: u32) -> Self {
        GammaPoly { k, c: vec![] }
    }

    pub fn from_vector(v: CycVector) -> Self {
        let mut p = GammaPoly {
            k: v.index(),
            c: vec![v],
        };
        p.trim();
        p
    }

    pub fn from_coeffs(k: u32, c: Vec<CycVector>) -> Self {
        let mut p = GammaPoly { k, c };
        p.trim();
        p
    }

    fn trim(&mut self) {
        while self.c.last().map_or(false, |v| v.is_zero()) {
            self.c.pop();
        }
    }

    pub fn index(&self) -> u32 {
        self.k
    }

    pub fn is_zero(&self) -> bool {
        self.c.is_empty()
    }

    pub fn gamma_degree(&self) -> Option<usize> {
        if self.c.is_empty() {
            None
        } else {
            Some(self.c.len() - 1)
        }
    }

    pub fn coeff(&self, d: usize) -> CycVector {
        self.c
            .get(d)
            .cloned()
            .unwrap_or_else(|| CycVector::zero(self.k))
    }

    /// The vector part of a Gamma-free coefficient.
    pub fn as_vector(&self) -> Option<CycVector> {
        match self.c.len() {
            0 => Some(CycVector::zero(self.k)),
            1 => Some(self.c[0].clone()),
            _ => None,
        }
    }

    pub fn add(&self, o: &GammaPoly) -> GammaPoly {
        assert_eq!(self.k, o.k);
        let n = self.c.len().max(o.c.len());
        let mut c = Vec::with_capacity(n);
        for d in 0..n {
            c.push(self.coeff(d).add(&o.coeff(d)));
        }
        GammaPoly::from_coeffs(self.k, c)
    }

    pub fn neg(&self) -> GammaPoly {
        GammaPoly::from_coeffs(self.k, self.c.iter().map(|v| v.neg()).collect())
    }

    pub fn mul(&self, o: &GammaPoly) -> GammaPoly {
        assert_eq!(self.k, o.k);
        if self.is_zero() || o.is_zero() {
            return GammaPoly::zero(self.k);
        }
        let mut c = vec![CycVector::zero(self.k); self.c.len() + o.c.len() - 1];
        for (a, va) in self.c.iter().enumerate() {
            for (b, vb) in o.c.iter().enumerate() {
                c[a + b] = c[a + b].add(&va.mul(vb));
            }
        }
        GammaPoly::from_coeffs(self.k, c)
    }

    /// The twist by `D^u`: rotate every vector by `u` and substitute
    /// `G -> G + u`.
    pub fn shift(&self, u: i64) -> GammaPoly {
        if u == 0 || self.is_zero() {
            return self.clone();
        }
        let n = self.c.len();
        let mut out = vec![CycVector::zero(self.k); n];
        for (d, v) in self.c.iter().enumerate() {
            let v = v.rotate(u);
            // (G + u)^d = sum_l C(d, l) u^{d-l} G^l
            for l in 0..=d {
                let w = crate::hcpc::binom(i64::from(d as u32), (d - l) as u32)
                    * crate::hcpc::int_pow(u, (d - l) as u32);
                let scaled = v.scale(&CycScalar::from_rat(self.k, crate::scalar::Rat::from(w)));
                out[l] = out[l].add(&scaled);
            }
        }
        GammaPoly::from_coeffs(self.k, out)
    }
}

impl fmt::Debug for GammaPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.c.is_empty() {
            return write!(f, "0");
        }
        for (d, v) in self.c.iter().enumerate() {
            if d > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{:?}", v)?;
            if d == 1 {
                write!(f, " G")?;
            } else if d > 1 {
                write!(f, " G^{}", d)?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// VectorFormOp: twisted Laurent polynomials over K(zeta)^k[G]
// ---------------------------------------------------------------------------

/// A (possibly truncated) twisted Laurent polynomial
/// `sum_l P_l D^l`, `P_l` in `K(zeta)^k[G]`.
#[derive(Clone, PartialEq, Eq)]
pub struct VectorFormOp {
    k: u32,
    terms: BTreeMap<i64, GammaPoly>,
    floor: Option<i64>,
}

impl VectorFormOp {
    pub fn zero(k: u32) -> Self {
        VectorFormOp {
            k,
            terms: BTreeMap::new(),
            floor: None,
        }
    }

    pub fn one(k: u32) -> Self {
        let mut v = Self::zero(k);
        v.add_term(0, GammaPoly::from_vector(CycVector::constant(k, CycScalar::one(k))));
        v
    }

    pub fn d_pow(k: u32, l: i64) -> Self {
        let mut v = Self::zero(k);
        v.add_term(l, GammaPoly::from_vector(CycVector::constant(k, CycScalar::one(k))));
        v
    }

    pub fn with_floor(mut self, floor: Option<i64>) -> Self {
        self.floor = floor;
        self.trim();
        self
    }

    pub fn index(&self) -> u32 {
        self.k
    }

    pub fn floor(&self) -> Option<i64> {
        self.floor
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty() && self.floor.is_none()
    }

    pub fn top(&self) -> Deg {
        self.terms
            .keys()
            .next_back()
            .copied()
            .map_or(Deg::NegInf, Deg::Fin)
    }

    fn ord_bound(&self) -> Deg {
        match (self.top(), self.floor) {
            (Deg::Fin(t), _) => Deg::Fin(t),
            (Deg::NegInf, Some(f)) => Deg::Fin(f - 1),
            (Deg::NegInf, None) => Deg::NegInf,
        }
    }

    pub fn coeff(&self, l: i64) -> GammaPoly {
        self.terms
            .get(&l)
            .cloned()
            .unwrap_or_else(|| GammaPoly::zero(self.k))
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (i64, &GammaPoly)> {
        self.terms.iter().map(|(&l, p)| (l, p))
    }

    pub fn add_term(&mut self, l: i64, p: GammaPoly) {
        if p.is_zero() {
            return;
        }
        if let Some(f) = self.floor {
            if l < f {
                return;
            }
        }
        let cur = self.coeff(l).add(&p);
        if cur.is_zero() {
            self.terms.remove(&l);
        } else {
            self.terms.insert(l, cur);
        }
    }

    fn trim(&mut self) {
        if let Some(f) = self.floor {
            self.terms.retain(|&l, _| l >= f);
        }
    }

    pub fn add(&self, o: &VectorFormOp) -> VectorFormOp {
        assert_eq!(self.k, o.k);
        let floor = match (self.floor, o.floor) {
            (None, None) => None,
            (Some(a), None) => Some(a),
            (None, Some(b)) => Some(b),
            (Some(a), Some(b)) => Some(a.max(b)),
        };
        let mut out = VectorFormOp {
            k: self.k,
            terms: BTreeMap::new(),
            floor,
        };
        for (l, p) in self.terms() {
            out.add_term(l, p.clone());
        }
        for (l, p) in o.terms() {
            out.add_term(l, p.clone());
        }
        out
    }

    pub fn neg(&self) -> VectorFormOp {
        VectorFormOp {
            k: self.k,
            terms: self.terms.iter().map(|(&l, p)| (l, p.neg())).collect(),
            floor: self.floor,
        }
    }

    pub fn sub(&self, o: &VectorFormOp) -> VectorFormOp {
        self.add(&o.neg())
    }

    pub fn mul(&self, o: &VectorFormOp) -> VectorFormOp {
        assert_eq!(self.k, o.k);
        let mut candidates = vec![];
        if let (Some(f), Deg::Fin(t)) = (self.floor, o.ord_bound()) {
            candidates.push(f + t);
        }
        if let (Some(f), Deg::Fin(t)) = (o.floor, self.ord_bound()) {
            candidates.push(f + t);
        }
        let floor = candidates.into_iter().max();
        let mut out = VectorFormOp {
            k: self.k,
            terms: BTreeMap::new(),
            floor,
        };
        for (l1, p1) in self.terms() {
            for (l2, p2) in o.terms() {
                out.add_term(l1 + l2, p1.mul(&p2.shift(l1)));
            }
        }
        out
    }

    /// Inverse of a Gamma-free operator of order 0 with invertible leading
    /// vector, as a series truncated at `floor`.
    pub fn inverse(&self, floor: i64) -> Result<VectorFormOp, EkError> {
        if self.top() != Deg::Fin(0) {
            return Err(EkError::Truncated);
        }
        let lead = self
            .coeff(0)
            .as_vector()
            .ok_or(EkError::GammaPresent(0))?;
        let lead_inv = lead.inv().map_err(|_| EkError::Truncated)?;
        let mut tail: BTreeMap<i64, CycVector> = BTreeMap::new();
        for (l, p) in self.terms() {
            if l < 0 {
                let v = p.as_vector().ok_or(EkError::GammaPresent(l))?;
                tail.insert(l, v);
            } else if l > 0 {
                return Err(EkError::Truncated);
            }
        }
        let mut inv: BTreeMap<i64, CycVector> = BTreeMap::new();
        inv.insert(0, lead_inv.clone());
        let mut n = 1i64;
        while -n >= floor {
            let mut acc = CycVector::zero(self.k);
            for (&mi, v) in &tail {
                let i = -mi;
                if i > n {
                    continue;
                }
                if let Some(w) = inv.get(&(-(n - i))) {
                    acc = acc.add(&v.mul(&w.rotate(mi)));
                }
            }
            let w_n = lead_inv.mul(&acc.neg());
            if !w_n.is_zero() {
                inv.insert(-n, w_n);
            }
            n += 1;
        }
        let mut out = VectorFormOp {
            k: self.k,
            terms: BTreeMap::new(),
            floor: Some(floor),
        };
        for (l, v) in inv {
            out.add_term(l, GammaPoly::from_vector(v));
        }
        Ok(out)
    }

    /// Every coefficient Gamma-free?
    pub fn gamma_free(&self) -> bool {
        self.terms.values().all(|p| p.gamma_degree().unwrap_or(0) == 0)
    }
}

impl fmt::Debug for VectorFormOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            write!(f, "0")?;
        }
        for (i, (l, p)) in self.terms.iter().rev().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "[{:?}] D~^{}", p, l)?;
        }
        if let Some(fl) = self.floor {
            write!(f, " (floor {})", fl)?;
        }
        Ok(())
    }
}

/// The evaluation of a shift combination at the roots of unity:
/// `A_i -> (xi^{i j})_j`.
pub fn phi_vector(k: u32, i: u32) -> CycVector {
    CycVector::new(
        k,
        (0..k)
            .map(|j| CycScalar::zeta_pow(k, i64::from(i) * i64::from(j)))
            .collect(),
    )
}

/// Embed a truncated operator with totally-B-free HCP components. Monomials
/// map as `c G_l A_i D^r  ->  c phi(A_i) G^l D^r`.
pub fn phi_hat(op: &TruncatedOp) -> Result<VectorFormOp, EkError> {
    let k = op.index();
    if let (false, Some((order, witness))) = is_totally_free_hcpc(op.body()) {
        return Err(EkError::NotTotallyFree { order, witness });
    }
    let mut out = VectorFormOp::zero(k).with_floor(op.floor());
    for (order, form) in op.body().components() {
        for (i, l, c) in form.ga_terms() {
            let v = phi_vector(k, i).scale(c);
            let mut coeffs = vec![CycVector::zero(k); (l + 1) as usize];
            coeffs[l as usize] = v;
            out.add_term(order, GammaPoly::from_coeffs(k, coeffs));
        }
    }
    Ok(out)
}

/// Pull a Gamma-free exact vector form back to shift-combination components:
/// the inverse discrete Fourier transform over the roots of unity.
pub fn phi_hat_inverse(v: &VectorFormOp) -> Result<crate::hcpc::Hcpc, EkError> {
    let k = v.index();
    let mut out = crate::hcpc::Hcpc::zero(k);
    let kinv = CycScalar::from_rat(k, crate::scalar::Rat::new(1.into(), i64::from(k).into()));
    for (l, p) in v.terms() {
        let vec = p.as_vector().ok_or(EkError::GammaPresent(l))?;
        let mut form = crate::hcpc::HcpForm::zero(k, l);
        for i in 0..k {
            let mut c = CycScalar::zero(k);
            for j in 0..k {
                let w = CycScalar::zeta_pow(k, -i64::from(i) * i64::from(j));
                c = c.try_add(&vec.entry(j as usize).try_mul(&w).unwrap()).unwrap();
            }
            form.add_ga(i, 0, c.try_mul(&kinv).unwrap());
        }
        out.add_form(&form);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Laurent polynomials in W and the matrix realization
// ---------------------------------------------------------------------------

/// A Laurent polynomial in `W = D^k` over the cyclotomic field.
#[derive(Clone, PartialEq, Eq)]
pub struct WLaurent {
    k: u32,
    c: BTreeMap<i64, CycScalar>,
}

impl WLaurent {
    pub fn zero(k: u32) -> Self {
        WLaurent {
            k,
            c: BTreeMap::new(),
        }
    }

    pub fn constant(s: CycScalar) -> Self {
        Self::monomial(0, s)
    }

    pub fn monomial(e: i64, s: CycScalar) -> Self {
        let mut w = WLaurent {
            k: s.index(),
            c: BTreeMap::new(),
        };
        w.add(e, s);
        w
    }

    pub fn add(&mut self, e: i64, s: CycScalar) {
        if s.is_zero() {
            return;
        }
        let cur = self.c.remove(&e);
        let sum = match cur {
            Some(c) => c.try_add(&s).unwrap(),
            None => s,
        };
        if !sum.is_zero() {
            self.c.insert(e, sum);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.c.is_empty()
    }

    pub fn coeff(&self, e: i64) -> CycScalar {
        self.c
            .get(&e)
            .cloned()
            .unwrap_or_else(|| CycScalar::zero(self.k))
    }

    pub fn terms(&self) -> impl Iterator<Item = (i64, &CycScalar)> {
        self.c.iter().map(|(&e, s)| (e, s))
    }

    pub fn min_exp(&self) -> Option<i64> {
        self.c.keys().next().copied()
    }

    pub fn plus(&self, o: &WLaurent) -> WLaurent {
        let mut out = self.clone();
        for (e, s) in o.terms() {
            out.add(e, s.clone());
        }
        out
    }

    pub fn times(&self, o: &WLaurent) -> WLaurent {
        let mut out = WLaurent::zero(self.k);
        for (e1, s1) in self.terms() {
            for (e2, s2) in o.terms() {
                out.add(e1 + e2, s1.try_mul(s2).unwrap());
            }
        }
        out
    }

    pub fn negate(&self) -> WLaurent {
        let mut out = WLaurent::zero(self.k);
        for (e, s) in self.terms() {
            out.add(e, s.neg());
        }
        out
    }
}

impl fmt::Debug for WLaurent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.c.is_empty() {
            return write!(f, "0");
        }
        for (i, (e, s)) in self.c.iter().rev().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            match e {
                0 => write!(f, "{}", s)?,
                1 => write!(f, "{} W", s)?,
                _ => write!(f, "{} W^{}", s, e)?,
            }
        }
        Ok(())
    }
}

/// A `k x k` matrix over `K(zeta)[W, W^-1]`.
#[derive(Clone, PartialEq, Eq)]
pub struct MatrixFormOp {
    k: u32,
    e: Vec<Vec<WLaurent>>,
}

impl MatrixFormOp {
    pub fn zero(k: u32) -> Self {
        MatrixFormOp {
            k,
            e: vec![vec![WLaurent::zero(k); k as usize]; k as usize],
        }
    }

    pub fn identity(k: u32) -> Self {
        let mut m = Self::zero(k);
        for i in 0..k as usize {
            m.e[i][i] = WLaurent::constant(CycScalar::one(k));
        }
        m
    }

    pub fn index(&self) -> u32 {
        self.k
    }

    pub fn entry(&self, i: usize, j: usize) -> &WLaurent {
        &self.e[i][j]
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut WLaurent {
        &mut self.e[i][j]
    }

    pub fn plus(&self, o: &MatrixFormOp) -> MatrixFormOp {
        let mut m = Self::zero(self.k);
        for i in 0..self.k as usize {
            for j in 0..self.k as usize {
                m.e[i][j] = self.e[i][j].plus(&o.e[i][j]);
            }
        }
        m
    }

    pub fn times(&self, o: &MatrixFormOp) -> MatrixFormOp {
        let n = self.k as usize;
        let mut m = Self::zero(self.k);
        for i in 0..n {
            for j in 0..n {
                let mut acc = WLaurent::zero(self.k);
                for t in 0..n {
                    acc = acc.plus(&self.e[i][t].times(&o.e[t][j]));
                }
                m.e[i][j] = acc;
            }
        }
        m
    }

    pub fn scale(&self, w: &WLaurent) -> MatrixFormOp {
        let mut m = Self::zero(self.k);
        for i in 0..self.k as usize {
            for j in 0..self.k as usize {
                m.e[i][j] = self.e[i][j].times(w);
            }
        }
        m
    }

    pub fn is_zero(&self) -> bool {
        self.e.iter().all(|row| row.iter().all(|w| w.is_zero()))
    }
}

impl fmt::Debug for MatrixFormOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.e {
            write!(f, "[")?;
            for (j, w) in row.iter().enumerate() {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{:?}", w)?;
            }
            writeln!(f, "]")?;
        }
        Ok(())
    }
}

/// The matrix of `D^l`: entries `W^{floor((i+l)/k)}` at column `(i+l) mod k`.
pub fn companion_power(k: u32, l: i64) -> MatrixFormOp {
    let mut m = MatrixFormOp::zero(k);
    let ki = i64::from(k);
    for i in 0..ki {
        let j = (i + l).rem_euclid(ki);
        let e = (i + l).div_euclid(ki);
        m.e[i as usize][j as usize] = WLaurent::monomial(e, CycScalar::one(k));
    }
    m
}

/// Matrix realization of an exact Gamma-free vector form.
pub fn psi_matrix(v: &VectorFormOp) -> Result<MatrixFormOp, EkError> {
    if v.floor().is_some() {
        return Err(EkError::Truncated);
    }
    let k = v.index();
    let mut m = MatrixFormOp::zero(k);
    for (l, p) in v.terms() {
        let vec = p.as_vector().ok_or(EkError::GammaPresent(l))?;
        // diag(vec) * T^l
        let t = companion_power(k, l);
        for i in 0..k as usize {
            for j in 0..k as usize {
                let prod = t.e[i][j].times(&WLaurent::constant(vec.entry(i).clone()));
                m.e[i][j] = m.e[i][j].plus(&prod);
            }
        }
    }
    Ok(m)
}

// ---------------------------------------------------------------------------
// characteristic polynomial
// ---------------------------------------------------------------------------

/// A polynomial in `lambda` and `W` over the cyclotomic field.
#[derive(Clone, PartialEq, Eq)]
pub struct BivarPoly {
    k: u32,
    /// (lambda-degree, W-degree) -> coefficient
    pub terms: BTreeMap<(u32, i64), CycScalar>,
}

impl BivarPoly {
    pub fn zero(k: u32) -> Self {
        BivarPoly {
            k,
            terms: BTreeMap::new(),
        }
    }

    pub fn index(&self) -> u32 {
        self.k
    }

    pub fn add_term(&mut self, l: u32, w: i64, c: CycScalar) {
        if c.is_zero() {
            return;
        }
        let key = (l, w);
        let cur = self.terms.remove(&key);
        let sum = match cur {
            Some(x) => x.try_add(&c).unwrap(),
            None => c,
        };
        if !sum.is_zero() {
            self.terms.insert(key, sum);
        }
    }

    pub fn mul(&self, o: &BivarPoly) -> BivarPoly {
        let mut out = BivarPoly::zero(self.k);
        for (&(l1, w1), c1) in &self.terms {
            for (&(l2, w2), c2) in &o.terms {
                out.add_term(l1 + l2, w1 + w2, c1.try_mul(c2).unwrap());
            }
        }
        out
    }

    pub fn plus(&self, o: &BivarPoly) -> BivarPoly {
        let mut out = self.clone();
        for (&(l, w), c) in &o.terms {
            out.add_term(l, w, c.clone());
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, l: u32, w: i64) -> CycScalar {
        self.terms
            .get(&(l, w))
            .cloned()
            .unwrap_or_else(|| CycScalar::zero(self.k))
    }
}

impl fmt::Debug for BivarPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (&(l, w), c)) in self.terms.iter().rev().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{}", c)?;
            if l > 0 {
                write!(f, " lambda^{}", l)?;
            }
            if w != 0 {
                write!(f, " W^{}", w)?;
            }
        }
        Ok(())
    }
}

/// `det(M - lambda Id)`, by Laplace expansion; entries must lie in the
/// polynomial part `K(zeta)[W]`.
pub fn char_poly(m: &MatrixFormOp) -> Result<BivarPoly, EkError> {
    let k = m.index();
    let n = k as usize;
    // shifted matrix entries as bivariate polynomials
    let mut a: Vec<Vec<BivarPoly>> = vec![vec![BivarPoly::zero(k); n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut p = BivarPoly::zero(k);
            for (e, c) in m.entry(i, j).terms() {
                if e < 0 {
                    return Err(EkError::NegativeWPower);
                }
                p.add_term(0, e, c.clone());
            }
            if i == j {
                p.add_term(1, 0, CycScalar::from_int(k, -1));
            }
            a[i][j] = p;
        }
    }
    Ok(det_laplace(&a, (0..n).collect::<Vec<_>>().as_slice(), (0..n).collect::<Vec<_>>().as_slice(), k))
}

fn det_laplace(a: &[Vec<BivarPoly>], rows: &[usize], cols: &[usize], k: u32) -> BivarPoly {
    if rows.is_empty() {
        let mut one = BivarPoly::zero(k);
        one.add_term(0, 0, CycScalar::one(k));
        return one;
    }
    let mut acc = BivarPoly::zero(k);
    let r = rows[0];
    let rest: Vec<usize> = rows[1..].to_vec();
    for (pos, &c) in cols.iter().enumerate() {
        if a[r][c].is_zero() {
            continue;
        }
        let sub_cols: Vec<usize> = cols
            .iter()
            .copied()
            .filter(|&cc| cc != c)
            .collect();
        let minor = det_laplace(a, &rest, &sub_cols, k);
        let mut term = a[r][c].mul(&minor);
        if pos % 2 == 1 {
            let mut neg = BivarPoly::zero(k);
            for (&(l, w), s) in &term.terms {
                neg.add_term(l, w, s.neg());
            }
            term = neg;
        }
        acc = acc.plus(&term);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hcpc::{HcpForm, Hcpc};
    use crate::opcore::{make_generator, GenKind};
    use crate::scalar::rat;

    #[test]
    fn phi_values() {
        // phi(A_1) = (1, -1) for k = 2; phi(-1 + A_1) = (0, -2)
        let k = 2;
        let v = phi_vector(k, 1);
        assert_eq!(v.entry(0), &CycScalar::one(k));
        assert_eq!(v.entry(1), &CycScalar::from_int(k, -1));
        let a1 = make_generator(GenKind::A(1), k).unwrap();
        let m1 = TruncatedOp::exact(Hcpc::scalar(k, CycScalar::from_int(k, -1)));
        let op = a1.add(&m1);
        let vf = phi_hat(&op).unwrap();
        let c = vf.coeff(0).as_vector().unwrap();
        assert_eq!(c.entry(0), &CycScalar::zero(k));
        assert_eq!(c.entry(1), &CycScalar::from_int(k, -2));
    }

    #[test]
    fn phi_hat_rejects_bare_int() {
        let k = 2;
        let int = make_generator(GenKind::Int, k).unwrap();
        assert!(matches!(
            phi_hat(&int),
            Err(EkError::NotTotallyFree { order: -1, .. })
        ));
    }

    #[test]
    fn phi_hat_is_multiplicative() {
        let k = 2;
        // x and d are totally free; compare phi(x d) with phi(x) phi(d)
        let x = make_generator(GenKind::X, k).unwrap();
        let d = make_generator(GenKind::D, k).unwrap();
        let lhs = phi_hat(&x.mul(&d)).unwrap();
        let rhs = phi_hat(&x).unwrap().mul(&phi_hat(&d).unwrap());
        assert_eq!(lhs, rhs);
        // with shifts: (1 - A_1) int is totally free
        let mut h = HcpForm::zero(k, -1);
        h.add_ga(0, 0, CycScalar::one(k));
        h.add_ga(1, 0, CycScalar::from_int(k, -1));
        let tf = TruncatedOp::exact(Hcpc::from_form(h));
        let lhs = phi_hat(&tf.mul(&d)).unwrap();
        let rhs = phi_hat(&tf).unwrap().mul(&phi_hat(&d).unwrap());
        assert_eq!(lhs, rhs);
        let lhs = phi_hat(&d.mul(&tf)).unwrap();
        let rhs = phi_hat(&d).unwrap().mul(&phi_hat(&tf).unwrap());
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn phi_hat_inverse_roundtrip() {
        let k = 3;
        let mut body = Hcpc::zero(k);
        body.add_form(&HcpForm::ga_monomial(k, 2, 1, 0, CycScalar::from_int(k, 2)));
        body.add_form(&HcpForm::ga_monomial(k, 0, 2, 0, CycScalar::from_rat(k, rat(1, 3))));
        let op = TruncatedOp::exact(body.clone());
        let v = phi_hat(&op).unwrap();
        let back = phi_hat_inverse(&v).unwrap();
        assert_eq!(back, body);
    }

    #[test]
    fn companion_square_is_w() {
        for k in [2u32, 3, 4] {
            let t = companion_power(k, 1);
            let mut acc = MatrixFormOp::identity(k);
            for _ in 0..k {
                acc = acc.times(&t);
            }
            let w_id = MatrixFormOp::identity(k).scale(&WLaurent::monomial(1, CycScalar::one(k)));
            assert_eq!(acc, w_id);
            // T^l agrees with repeated multiplication
            let mut acc = MatrixFormOp::identity(k);
            for l in 1..=(2 * k as i64 + 1) {
                acc = acc.times(&t);
                assert_eq!(acc, companion_power(k, l));
            }
            // and negative powers invert
            let tinv = companion_power(k, -1);
            assert_eq!(t.times(&tinv), MatrixFormOp::identity(k));
        }
    }

    #[test]
    fn psi_of_d_squared_is_diag_w() {
        let k = 2;
        let v = VectorFormOp::d_pow(k, 2);
        let m = psi_matrix(&v).unwrap();
        let w_id = MatrixFormOp::identity(k).scale(&WLaurent::monomial(1, CycScalar::one(k)));
        assert_eq!(m, w_id);
    }

    #[test]
    fn psi_is_multiplicative() {
        let k = 3;
        // random-ish Gamma-free vector forms
        let mut v1 = VectorFormOp::zero(k);
        v1.add_term(2, GammaPoly::from_vector(phi_vector(k, 1)));
        v1.add_term(-1, GammaPoly::from_vector(phi_vector(k, 2).scale(&CycScalar::from_int(k, 3))));
        let mut v2 = VectorFormOp::zero(k);
        v2.add_term(1, GammaPoly::from_vector(phi_vector(k, 2)));
        v2.add_term(0, GammaPoly::from_vector(phi_vector(k, 0).scale(&CycScalar::from_rat(k, rat(1, 2)))));
        let lhs = psi_matrix(&v1.mul(&v2)).unwrap();
        let rhs = psi_matrix(&v1).unwrap().times(&psi_matrix(&v2).unwrap());
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn char_poly_of_diag_w() {
        let k = 2;
        let m = MatrixFormOp::identity(k).scale(&WLaurent::monomial(1, CycScalar::one(k)));
        let p = char_poly(&m).unwrap();
        // (W - lambda)^2 = lambda^2 - 2 lambda W + W^2
        assert_eq!(p.coeff(2, 0), CycScalar::one(k));
        assert_eq!(p.coeff(1, 1), CycScalar::from_int(k, -2));
        assert_eq!(p.coeff(0, 2), CycScalar::one(k));
        assert_eq!(p.terms.len(), 3);
    }

    #[test]
    fn vector_inverse() {
        let k = 2;
        let mut v = VectorFormOp::one(k);
        let mut s1 = CycVector::zero(k);
        s1.set(1, CycScalar::from_int(k, 3));
        v.add_term(-1, GammaPoly::from_vector(s1));
        let inv = v.inverse(-6).unwrap();
        let prod = v.mul(&inv);
        // product is 1 modulo the floor
        assert_eq!(prod.coeff(0).as_vector().unwrap(), CycVector::constant(k, CycScalar::one(k)));
        for (l, p) in prod.terms() {
            if l != 0 {
                assert!(p.is_zero(), "nonzero at {}", l);
            }
        }
    }
}
