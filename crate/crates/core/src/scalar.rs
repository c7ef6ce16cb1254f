//! Exact scalar arithmetic: arbitrary-precision rationals, the cyclotomic
//! fields `Q(zeta_k)` realized as `Q[t]/Phi_k(t)`, and length-`k` vectors over
//! them (the semisimple algebra `Q(zeta_k)^k`).
//!
//! All values are immutable and reduced; equality is structural on the
//! reduced representative.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Mutex, OnceLock};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

pub type Rat = BigRational;

/// Convenience constructor for small rationals.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> Rat {
    Rat::from(BigInt::from(n))
}

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum ScalarError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("root-of-unity index mismatch: {0} vs {1}")]
    IndexMismatch(u32, u32),
    #[error("invalid root-of-unity index {0}")]
    InvalidIndex(i64),
}

/// Euler's totient, by trial-division factorization. `k` is tiny here.
pub fn euler_phi(k: u32) -> u32 {
    let mut n = k;
    let mut result = k;
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            while n % p == 0 {
                n /= p;
            }
            result -= result / p;
        }
        p += 1;
    }
    if n > 1 {
        result -= result / n;
    }
    result
}

// ---------------------------------------------------------------------------
// dense univariate polynomials over Q, low degree first (internal helper)
// ---------------------------------------------------------------------------

pub(crate) fn poly_trim(p: &mut Vec<Rat>) {
    while p.last().map_or(false, |c| c.is_zero()) {
        p.pop();
    }
}

pub(crate) fn poly_mul(a: &[Rat], b: &[Rat]) -> Vec<Rat> {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let mut out = vec![Rat::zero(); a.len() + b.len() - 1];
    for (i, ai) in a.iter().enumerate() {
        if ai.is_zero() {
            continue;
        }
        for (j, bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    poly_trim(&mut out);
    out
}

/// Euclidean division `a = q*b + r`, returning `(q, r)`. `b` must be nonzero.
pub(crate) fn poly_divmod(a: &[Rat], b: &[Rat]) -> (Vec<Rat>, Vec<Rat>) {
    let mut r = a.to_vec();
    poly_trim(&mut r);
    let mut b = b.to_vec();
    poly_trim(&mut b);
    assert!(!b.is_empty(), "polynomial division by zero");
    let db = b.len() - 1;
    let lead = b[db].clone();
    if r.len() <= db {
        return (vec![], r);
    }
    let mut q = vec![Rat::zero(); r.len() - db];
    while r.len() > db {
        let dr = r.len() - 1;
        let c = &r[dr] / &lead;
        q[dr - db] = c.clone();
        for i in 0..=db {
            let t = &c * &b[i];
            r[dr - db + i] -= t;
        }
        poly_trim(&mut r);
    }
    poly_trim(&mut q);
    (q, r)
}

/// The k-th cyclotomic polynomial, coefficients low degree first, monic with
/// integer entries: `t^k - 1` divided by the product of `Phi_d` over proper
/// divisors `d | k`.
pub fn cyclotomic_poly(k: u32) -> Vec<Rat> {
    assert!(k >= 1, "cyclotomic index must be positive");
    if k == 1 {
        return vec![-Rat::one(), Rat::one()]; // t - 1
    }
    let mut num = vec![Rat::zero(); (k + 1) as usize];
    num[0] = -Rat::one();
    num[k as usize] = Rat::one(); // t^k - 1
    let mut den = vec![Rat::one()];
    for d in 1..k {
        if k % d == 0 {
            den = poly_mul(&den, &cyclotomic_poly(d));
        }
    }
    let (q, r) = poly_divmod(&num, &den);
    debug_assert!(r.is_empty(), "cyclotomic division must be exact");
    q
}

fn phi_cache() -> &'static Mutex<HashMap<u32, Vec<Rat>>> {
    static CACHE: OnceLock<Mutex<HashMap<u32, Vec<Rat>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn phi_k(k: u32) -> Vec<Rat> {
    let mut cache = phi_cache().lock().unwrap();
    cache.entry(k).or_insert_with(|| cyclotomic_poly(k)).clone()
}

// ---------------------------------------------------------------------------
// CycScalar
// ---------------------------------------------------------------------------

/// An element of `Q(zeta_k)`, stored as the unique residue mod `Phi_k` of
/// degree `< phi(k)`.
#[derive(Clone, PartialEq, Eq)]
pub struct CycScalar {
    k: u32,
    c: Vec<Rat>, // length phi(k), low degree first
}

impl CycScalar {
    fn reduce(k: u32, mut poly: Vec<Rat>) -> Self {
        let phi = euler_phi(k) as usize;
        poly_trim(&mut poly);
        if poly.len() > phi {
            let (_, r) = poly_divmod(&poly, &phi_k(k));
            poly = r;
        }
        poly.resize(phi, Rat::zero());
        CycScalar { k, c: poly }
    }

    pub fn zero(k: u32) -> Self {
        assert!(k >= 1);
        CycScalar {
            k,
            c: vec![Rat::zero(); euler_phi(k) as usize],
        }
    }

    pub fn one(k: u32) -> Self {
        Self::from_rat(k, Rat::one())
    }

    pub fn from_rat(k: u32, r: Rat) -> Self {
        assert!(k >= 1);
        let mut c = vec![Rat::zero(); euler_phi(k) as usize];
        c[0] = r;
        CycScalar { k, c }
    }

    pub fn from_int(k: u32, n: i64) -> Self {
        Self::from_rat(k, rat_int(n))
    }

    /// `zeta_k^e` with `e` reduced mod `k`.
    pub fn zeta_pow(k: u32, e: i64) -> Self {
        assert!(k >= 1);
        let e = e.rem_euclid(k as i64) as usize;
        let mut poly = vec![Rat::zero(); e + 1];
        poly[e] = Rat::one();
        Self::reduce(k, poly)
    }

    pub fn zeta(k: u32) -> Self {
        Self::zeta_pow(k, 1)
    }

    pub fn index(&self) -> u32 {
        self.k
    }

    pub fn coeffs(&self) -> &[Rat] {
        &self.c
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|x| x.is_zero())
    }

    /// The rational value, if this element lies in the prime field.
    pub fn as_rat(&self) -> Option<&Rat> {
        if self.c[1..].iter().all(|x| x.is_zero()) {
            Some(&self.c[0])
        } else {
            None
        }
    }

    fn check_same_k(&self, other: &Self) -> Result<(), ScalarError> {
        if self.k != other.k {
            Err(ScalarError::IndexMismatch(self.k, other.k))
        } else {
            Ok(())
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, ScalarError> {
        self.check_same_k(other)?;
        let c = self
            .c
            .iter()
            .zip(&other.c)
            .map(|(a, b)| a + b)
            .collect();
        Ok(CycScalar { k: self.k, c })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self, ScalarError> {
        self.check_same_k(other)?;
        let c = self
            .c
            .iter()
            .zip(&other.c)
            .map(|(a, b)| a - b)
            .collect();
        Ok(CycScalar { k: self.k, c })
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self, ScalarError> {
        self.check_same_k(other)?;
        Ok(Self::reduce(self.k, poly_mul(&self.c, &other.c)))
    }

    pub fn try_div(&self, other: &Self) -> Result<Self, ScalarError> {
        self.check_same_k(other)?;
        self.try_mul(&other.inv()?)
    }

    /// Multiplicative inverse via the extended Euclidean algorithm mod
    /// `Phi_k`; `Phi_k` is irreducible so every nonzero element is a unit.
    pub fn inv(&self) -> Result<Self, ScalarError> {
        if self.is_zero() {
            return Err(ScalarError::DivisionByZero);
        }
        // extended gcd of (self.c, Phi_k) over Q[t]
        let mut r0 = phi_k(self.k);
        let mut r1 = self.c.clone();
        poly_trim(&mut r1);
        let mut s0: Vec<Rat> = vec![];
        let mut s1: Vec<Rat> = vec![Rat::one()];
        while !r1.is_empty() && r1.len() > 1 {
            let (q, r) = poly_divmod(&r0, &r1);
            let qs = poly_mul(&q, &s1);
            let mut s = s0.clone();
            s.resize(s.len().max(qs.len()), Rat::zero());
            for (i, x) in qs.iter().enumerate() {
                s[i] -= x;
            }
            poly_trim(&mut s);
            r0 = std::mem::replace(&mut r1, r);
            s0 = std::mem::replace(&mut s1, s);
        }
        assert!(!r1.is_empty(), "Phi_k must be coprime to a nonzero residue");
        let g = r1[0].clone(); // nonzero constant gcd
        let inv: Vec<Rat> = s1.iter().map(|x| x / &g).collect();
        Ok(Self::reduce(self.k, inv))
    }

    pub fn neg(&self) -> Self {
        CycScalar {
            k: self.k,
            c: self.c.iter().map(|x| -x).collect(),
        }
    }

    pub fn pow(&self, mut e: u32) -> Self {
        let mut base = self.clone();
        let mut acc = CycScalar::one(self.k);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.try_mul(&base).unwrap();
            }
            base = base.try_mul(&base).unwrap();
            e >>= 1;
        }
        acc
    }

    pub fn scale(&self, r: &Rat) -> Self {
        CycScalar {
            k: self.k,
            c: self.c.iter().map(|x| x * r).collect(),
        }
    }

    /// Reinterpret a rational-valued scalar in `Q(zeta_k)` for another `k`.
    pub fn promote(&self, k: u32) -> Result<Self, ScalarError> {
        if self.k == k {
            return Ok(self.clone());
        }
        match self.as_rat() {
            Some(r) => Ok(CycScalar::from_rat(k, r.clone())),
            None => Err(ScalarError::IndexMismatch(self.k, k)),
        }
    }
}

impl fmt::Debug for CycScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for CycScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(r) = self.as_rat() {
            return write!(f, "{}", r);
        }
        let mut first = true;
        write!(f, "(")?;
        for (i, c) in self.c.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let (sign, mag) = if c.is_negative() {
                ("-", -c.clone())
            } else {
                ("+", c.clone())
            };
            if first {
                if sign == "-" {
                    write!(f, "-")?;
                }
                first = false;
            } else {
                write!(f, " {} ", sign)?;
            }
            let show_coeff = i == 0 || !mag.is_one();
            if show_coeff {
                write!(f, "{}", mag)?;
            }
            if i > 0 {
                if show_coeff {
                    write!(f, " ")?;
                }
                if i == 1 {
                    write!(f, "zeta")?;
                } else {
                    write!(f, "zeta^{}", i)?;
                }
            }
        }
        if first {
            write!(f, "0")?;
        }
        write!(f, ")")
    }
}

macro_rules! cyc_binop {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl std::ops::$trait for &CycScalar {
            type Output = CycScalar;
            fn $method(self, rhs: &CycScalar) -> CycScalar {
                self.$checked(rhs).expect("cyclotomic index mismatch")
            }
        }
        impl std::ops::$trait for CycScalar {
            type Output = CycScalar;
            fn $method(self, rhs: CycScalar) -> CycScalar {
                (&self).$method(&rhs)
            }
        }
    };
}

cyc_binop!(Add, add, try_add);
cyc_binop!(Sub, sub, try_sub);
cyc_binop!(Mul, mul, try_mul);

impl std::ops::Neg for &CycScalar {
    type Output = CycScalar;
    fn neg(self) -> CycScalar {
        CycScalar::neg(self)
    }
}

impl std::ops::Neg for CycScalar {
    type Output = CycScalar;
    fn neg(self) -> CycScalar {
        CycScalar::neg(&self)
    }
}

/// Field operation dispatch, mirroring the module contract.
pub fn cyc_arith(a: &CycScalar, b: &CycScalar, op: ArithOp) -> Result<CycScalar, ScalarError> {
    match op {
        ArithOp::Add => a.try_add(b),
        ArithOp::Sub => a.try_sub(b),
        ArithOp::Mul => a.try_mul(b),
        ArithOp::Div => a.try_div(b),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// `zeta_k^e` as a reduced scalar (errors on `k <= 0` handled by type).
pub fn cyc_power_of_xi(k: u32, e: i64) -> CycScalar {
    CycScalar::zeta_pow(k, e)
}

// ---------------------------------------------------------------------------
// CycVector: Q(zeta_k)^k with componentwise operations
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq)]
pub struct CycVector {
    k: u32,
    v: Vec<CycScalar>, // length k
}

impl CycVector {
    pub fn new(k: u32, v: Vec<CycScalar>) -> Self {
        assert_eq!(v.len(), k as usize);
        assert!(v.iter().all(|x| x.index() == k));
        CycVector { k, v }
    }

    pub fn zero(k: u32) -> Self {
        CycVector {
            k,
            v: vec![CycScalar::zero(k); k as usize],
        }
    }

    pub fn constant(k: u32, c: CycScalar) -> Self {
        assert_eq!(c.index(), k);
        CycVector {
            k,
            v: vec![c; k as usize],
        }
    }

    pub fn index(&self) -> u32 {
        self.k
    }

    pub fn entries(&self) -> &[CycScalar] {
        &self.v
    }

    pub fn entry(&self, j: usize) -> &CycScalar {
        &self.v[j]
    }

    pub fn set(&mut self, j: usize, c: CycScalar) {
        assert_eq!(c.index(), self.k);
        self.v[j] = c;
    }

    pub fn is_zero(&self) -> bool {
        self.v.iter().all(|x| x.is_zero())
    }

    /// All entries equal (the diagonal embedding of the scalar field).
    pub fn is_constant(&self) -> bool {
        self.v.windows(2).all(|w| w[0] == w[1])
    }

    /// Entries invariant under rotation by `d` (commutes with the d-th shift).
    pub fn is_periodic(&self, d: i64) -> bool {
        self == &self.rotate(d)
    }

    pub fn add(&self, o: &Self) -> Self {
        assert_eq!(self.k, o.k);
        CycVector {
            k: self.k,
            v: self.v.iter().zip(&o.v).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        assert_eq!(self.k, o.k);
        CycVector {
            k: self.k,
            v: self.v.iter().zip(&o.v).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        assert_eq!(self.k, o.k);
        CycVector {
            k: self.k,
            v: self.v.iter().zip(&o.v).map(|(a, b)| a * b).collect(),
        }
    }

    pub fn scale(&self, c: &CycScalar) -> Self {
        CycVector {
            k: self.k,
            v: self.v.iter().map(|a| a * c).collect(),
        }
    }

    pub fn neg(&self) -> Self {
        CycVector {
            k: self.k,
            v: self.v.iter().map(|a| -a).collect(),
        }
    }

    /// Componentwise inverse; fails if any entry vanishes.
    pub fn inv(&self) -> Result<Self, ScalarError> {
        let v = self
            .v
            .iter()
            .map(|a| a.inv())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CycVector { k: self.k, v })
    }

    /// Index rotation `j -> j + u (mod k)`: the automorphism induced by
    /// moving a power of the twisting variable past a coefficient vector.
    pub fn rotate(&self, u: i64) -> Self {
        let k = self.k as i64;
        let v = (0..k)
            .map(|j| self.v[((j + u).rem_euclid(k)) as usize].clone())
            .collect();
        CycVector { k: self.k, v }
    }
}

impl fmt::Debug for CycVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.v.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", x)?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for CycVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

// ---------------------------------------------------------------------------
// dense exact linear algebra over Q(zeta_k), for the small solves
// ---------------------------------------------------------------------------

/// Gaussian elimination. Returns one solution of `a x = b` together with a
/// basis of the nullspace of `a`, or `None` if the system is inconsistent.
pub fn solve_linear(
    a: &[Vec<CycScalar>],
    b: &[CycScalar],
) -> Option<(Vec<CycScalar>, Vec<Vec<CycScalar>>)> {
    let rows = a.len();
    assert_eq!(rows, b.len());
    if rows == 0 {
        return Some((vec![], vec![]));
    }
    let cols = a[0].len();
    let k = if cols > 0 { a[0][0].index() } else { b[0].index() };
    let mut m: Vec<Vec<CycScalar>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            assert_eq!(row.len(), cols);
            let mut r = row.clone();
            r.push(rhs.clone());
            r
        })
        .collect();

    let mut pivot_col_of_row = vec![];
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let inv = m[r][c].inv().unwrap();
        for x in m[r].iter_mut() {
            *x = &*x * &inv;
        }
        for i in 0..rows {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in 0..=cols {
                    let t = &m[r][j] * &f;
                    m[i][j] = &m[i][j] - &t;
                }
            }
        }
        pivot_col_of_row.push(c);
        r += 1;
        if r == rows {
            break;
        }
    }
    // inconsistency: zero row with nonzero rhs
    for i in r..rows {
        if !m[i][cols].is_zero() {
            return None;
        }
    }
    let pivot_set: std::collections::BTreeSet<usize> = pivot_col_of_row.iter().copied().collect();
    let mut solution = vec![CycScalar::zero(k); cols];
    for (row, &c) in pivot_col_of_row.iter().enumerate() {
        solution[c] = m[row][cols].clone();
    }
    let mut nullspace = vec![];
    for free in (0..cols).filter(|c| !pivot_set.contains(c)) {
        let mut vec_ = vec![CycScalar::zero(k); cols];
        vec_[free] = CycScalar::one(k);
        for (row, &c) in pivot_col_of_row.iter().enumerate() {
            vec_[c] = -&m[row][free];
        }
        nullspace.push(vec_);
    }
    Some((solution, nullspace))
}
