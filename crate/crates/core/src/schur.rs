//! Schur conjugating operators.
//!
//! For a normalized differential operator `Q = d^q + c_{q-2} d^{q-2} + ...`
//! there is a unique invertible `S = 1 + S_{-2} + S_{-3} + ...` of order zero
//! with `S^-1 Q S = d^q`, no order `-1` part, and vanishing x-degree slices
//! `1..q-1`. Its homogeneous components solve, order by order,
//!
//! ```text
//!   [d^q, S_{-t}] = -(Q_{q-2} S_{-t+2} + ... + Q_{q-t} S_0),
//! ```
//!
//! with the commutator kernel at orders `-t > -q` pinned by the slice
//! conditions. Every component is an HCP totally free of `B_j` with
//! `t/q - 1 < Sdeg_A(S_{-t}) < t`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::hcpc::{
    commutator_solve, is_totally_free_of_b, BWitness, Deg, HcpForm, Hcpc, HcpcError,
};
use crate::opcore::{hcp_to_canonical, x_pow_d_pow, TruncatedOp};
use crate::scalar::{solve_linear, CycScalar, Rat};

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum SchurError {
    #[error("operator is not normalized: {0}")]
    NotNormalized(String),
    #[error("insufficient coefficient precision: depth {depth} needs x-degrees up to {needed}, known below {have}")]
    InsufficientPrecision { depth: u32, needed: u32, have: u32 },
    #[error(transparent)]
    Hcpc(#[from] HcpcError),
}

/// A normalized differential operator `d^q + sum_{j <= q-2} c_j(x) d^j`,
/// coefficients kept as truncated rational power series.
///
/// `x_precision = Some(p)` states that every coefficient series is known for
/// x-degrees `< p`; homogeneous components of order below
/// `q - 1 - p` then depend on unknown data.
#[derive(Clone, Debug)]
pub struct NormalizedDiffOp {
    q: u32,
    /// (d-degree, x-degree) -> coefficient; d-degree <= q-2
    coeffs: BTreeMap<(u32, u32), Rat>,
    x_precision: Option<u32>,
}

impl NormalizedDiffOp {
    pub fn new(
        q: u32,
        coeffs: BTreeMap<(u32, u32), Rat>,
        x_precision: Option<u32>,
    ) -> Result<Self, SchurError> {
        if q == 0 {
            return Err(SchurError::NotNormalized("order must be positive".into()));
        }
        for (&(j, i), _) in coeffs.iter() {
            if j + 1 >= q {
                return Err(SchurError::NotNormalized(format!(
                    "coefficient at d^{} not allowed below the leading d^{}",
                    j, q
                )));
            }
            if let Some(p) = x_precision {
                if i >= p {
                    return Err(SchurError::NotNormalized(format!(
                        "coefficient at x-degree {} beyond stated precision {}",
                        i, p
                    )));
                }
            }
        }
        Ok(NormalizedDiffOp {
            q,
            coeffs,
            x_precision,
        })
    }

    /// Lowest order at which the homogeneous component is fully known.
    pub fn component_floor(&self) -> Option<i64> {
        // the deepest coefficient sits at d-degree q-2; its x-degree p term
        // contributes at order q - 2 - p
        self.x_precision
            .map(|p| i64::from(self.q) - 2 - i64::from(p) + 1)
    }

    /// Interpret a truncated operator as a normalized differential operator.
    /// It must be monic `d^q` plus lower differential terms with no `d^{q-1}`
    /// and rational coefficients.
    pub fn try_from_op(op: &TruncatedOp) -> Result<Self, SchurError> {
        let k = op.index();
        let Deg::Fin(q) = op.top() else {
            return Err(SchurError::NotNormalized("zero operator".into()));
        };
        if q <= 0 {
            return Err(SchurError::NotNormalized(
                "order must be positive".into(),
            ));
        }
        let q = q as u32;
        let mut coeffs = BTreeMap::new();
        for (order, form) in op.body().components() {
            if form.b_terms().next().is_some() || form.contains_a() {
                return Err(SchurError::NotNormalized(
                    "not a differential operator".into(),
                ));
            }
            // rewrite the G-polynomial as canonical x^i d^{i+order} terms
            let falling = gamma_to_falling(form);
            for (i, c) in falling {
                let d_deg = i64::from(i) + order;
                if d_deg < 0 || !c_is_zero_or_rational(&c) {
                    return Err(SchurError::NotNormalized(
                        "not a differential operator over the rationals".into(),
                    ));
                }
                if c.is_zero() {
                    continue;
                }
                let d_deg = d_deg as u32;
                if d_deg == q && (i != 0 || c != CycScalar::one(k)) {
                    return Err(SchurError::NotNormalized("not monic".into()));
                }
                if d_deg == q - 1 {
                    return Err(SchurError::NotNormalized(format!(
                        "d^{} term present",
                        q - 1
                    )));
                }
                if d_deg < q.saturating_sub(1) {
                    coeffs.insert((d_deg, i), c.as_rat().unwrap().clone());
                }
            }
        }
        let x_precision = op
            .floor()
            .map(|f| (i64::from(q) - 2 - f + 1).max(0) as u32);
        NormalizedDiffOp::new(q, coeffs, x_precision)
    }

    pub fn order(&self) -> u32 {
        self.q
    }

    pub fn x_precision(&self) -> Option<u32> {
        self.x_precision
    }

    /// The homogeneous component of order `m` as an HCP over `Hcpc(q)`.
    pub fn component(&self, m: i64) -> HcpForm {
        let k = self.q;
        let mut h = HcpForm::zero(k, m);
        if m == i64::from(self.q) {
            h.add_ga(0, 0, CycScalar::one(k));
            return h;
        }
        for (&(j, i), c) in &self.coeffs {
            if i64::from(j) - i64::from(i) == m {
                let mono = x_pow_d_pow(k, i, j).scale(&CycScalar::from_rat(k, c.clone()));
                for (ii, l, cc) in mono.ga_terms() {
                    h.add_ga(ii, l, cc.clone());
                }
            }
        }
        h
    }

    /// The whole operator as a truncated op over `Hcpc(q)`.
    pub fn to_truncated(&self) -> TruncatedOp {
        let q = self.q;
        let mut body = Hcpc::d_pow(q, i64::from(q));
        let floor = self.component_floor();
        let lowest = floor.unwrap_or_else(|| {
            self.coeffs
                .keys()
                .map(|&(j, i)| i64::from(j) - i64::from(i))
                .min()
                .unwrap_or(0)
        });
        let mut m = i64::from(q) - 2;
        while m >= lowest {
            body.add_form(&self.component(m));
            m -= 1;
        }
        TruncatedOp::with_floor(body, floor)
    }
}

fn c_is_zero_or_rational(c: &CycScalar) -> bool {
    c.as_rat().is_some()
}

/// Expand a pure-`Gamma` HCP into falling-factorial coordinates, i.e. the
/// canonical coefficients `c_i` of `x^i d^{i+order}`. Requires no `A`, no `B`.
fn gamma_to_falling(form: &HcpForm) -> Vec<(u32, CycScalar)> {
    let k = form.index();
    let top = form
        .ga_terms()
        .map(|(_, l, _)| l)
        .max()
        .unwrap_or(0);
    let canon = hcp_to_canonical(form, top);
    (0..=top)
        .filter_map(|i| canon.terms.get(&i).map(|c| (i, c.clone())))
        .filter(|(_, c)| !c.is_zero())
        .map(|(i, c)| (i, c))
        .collect::<Vec<_>>()
        .into_iter()
        .map(|(i, c)| (i, c.promote(k).unwrap()))
        .collect()
}

/// The Schur operator for a normalized `Q`, computed down to order `-depth`.
#[derive(Clone, Debug)]
pub struct SchurOp {
    q: u32,
    /// components at orders -2 .. -depth (order 0 is the implicit 1)
    components: BTreeMap<i64, HcpForm>,
    depth: u32,
}

impl SchurOp {
    pub fn order_index(&self) -> u32 {
        self.q
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn component(&self, order: i64) -> Option<&HcpForm> {
        self.components.get(&order)
    }

    /// As a truncated operator: `1 + sum S_{-t}`, floor `-depth`.
    pub fn to_truncated(&self) -> TruncatedOp {
        let mut body = Hcpc::one(self.q);
        for form in self.components.values() {
            body.add_form(form);
        }
        TruncatedOp::with_floor(body, Some(-i64::from(self.depth)))
    }
}

/// Compute the Schur operator `S` with `Q S = S d^q`, `S_0 = 1`, `S_{-1} = 0`
/// and vanishing slices at x-degrees `1..q-1`, down to order `-depth`.
pub fn schur_operator(q_op: &NormalizedDiffOp, depth: u32) -> Result<SchurOp, SchurError> {
    let q = q_op.order();
    let qi = i64::from(q);
    if let Some(f) = q_op.component_floor() {
        // the recursion reads Q components down to order q - depth
        if qi - i64::from(depth) < f {
            return Err(SchurError::InsufficientPrecision {
                depth,
                needed: (i64::from(depth) - 2).max(0) as u32,
                have: q_op.x_precision().unwrap_or(0),
            });
        }
    }
    let mut s = SchurOp {
        q,
        components: BTreeMap::new(),
        depth,
    };
    for t in 2..=i64::from(depth) {
        // M_t = -(Q_{q-2} S_{-t+2} + ... + Q_{q-t} S_0)
        let mut m = Hcpc::zero(q);
        for j in 2..=t {
            let q_comp = q_op.component(qi - j);
            if q_comp.is_zero() {
                continue;
            }
            let s_comp: Option<&HcpForm> = if t == j {
                None // S_0 = 1
            } else {
                s.components.get(&(j - t))
            };
            match s_comp {
                None if t == j => m.add_form(&q_comp),
                None => {}
                Some(sc) => m.add_form(&crate::hcpc::form_mul(&q_comp, sc)),
            }
        }
        let m = m.neg();
        let sol = commutator_solve(&m, q)?;
        let mut particular = Hcpc::zero(q);
        for (_, f) in sol.particular.components() {
            particular.add_form(f);
        }
        // everything lives at the single order -t
        let mut component = particular
            .component(-t)
            .cloned()
            .unwrap_or_else(|| HcpForm::zero(q, -t));
        let kernel: Vec<HcpForm> = sol
            .kernel
            .into_iter()
            .filter(|f| f.order() == -t)
            .collect();
        if !kernel.is_empty() {
            // pin by the slice conditions: canonical coefficients of S_{-t}
            // at x-degrees t .. q-1 vanish
            let degrees: Vec<u32> = (t as u32..q).collect();
            assert_eq!(degrees.len(), kernel.len(), "kernel/slice mismatch");
            let cap = q - 1;
            let part_canon = hcp_to_canonical(&component, cap);
            let rows: Vec<Vec<CycScalar>> = degrees
                .iter()
                .map(|&deg| {
                    kernel
                        .iter()
                        .map(|f| {
                            hcp_to_canonical(f, cap)
                                .terms
                                .get(&deg)
                                .cloned()
                                .unwrap_or_else(|| CycScalar::zero(q))
                        })
                        .collect()
                })
                .collect();
            let rhs: Vec<CycScalar> = degrees
                .iter()
                .map(|&deg| {
                    part_canon
                        .terms
                        .get(&deg)
                        .cloned()
                        .unwrap_or_else(|| CycScalar::zero(q))
                        .neg()
                })
                .collect();
            let (alpha, nullspace) =
                solve_linear(&rows, &rhs).expect("slice pinning system is consistent");
            assert!(nullspace.is_empty(), "slice pinning must be unique");
            for (a, f) in alpha.iter().zip(&kernel) {
                component.add_assign(&f.scale(a));
            }
        }
        // structural guarantees: totally free, Sdeg_A within the strict bounds
        let (free, witness) = is_totally_free_of_b(&component);
        assert!(free, "Schur component not totally free: {:?}", witness);
        if !component.is_zero() {
            if let Deg::Fin(d) = component.sdeg_a() {
                assert!(d < t, "Sdeg_A(S_{{-{t}}}) = {d} >= t");
                assert!(
                    Rat::new((t).into(), qi.into()) - Rat::from(num_bigint::BigInt::from(1))
                        < Rat::from(num_bigint::BigInt::from(d)),
                    "Sdeg_A(S_{{-{t}}}) = {d} below t/q - 1"
                );
            }
        }
        if !component.is_zero() {
            s.components.insert(-t, component);
        }
    }
    Ok(s)
}

/// `S^-1` as a geometric series: with `S = 1 - N`, the inverse is
/// `1 + N + N^2 + ...`, truncated at the depth of `S`.
pub fn schur_inverse(s: &SchurOp) -> TruncatedOp {
    let q = s.order_index();
    let depth = i64::from(s.depth());
    let mut n = Hcpc::zero(q);
    for form in s.components.values() {
        n.add_form(&form.neg());
    }
    let mut inv = Hcpc::one(q);
    let mut power = n.clone();
    while let Deg::Fin(t) = power.top() {
        if t < -depth {
            break;
        }
        for (o, f) in power.components() {
            if o >= -depth {
                let mut keep = inv.clone();
                keep.add_form(f);
                inv = keep;
            }
        }
        power = power.mul(&n);
        if power.is_zero() {
            break;
        }
    }
    TruncatedOp::with_floor(inv, Some(-depth))
}

// ---------------------------------------------------------------------------
// condition A_q(k) and the differential-operator criterion
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CondViolation {
    /// Component at this order is not totally free of `B_j`.
    NotTotallyFree(i64, BWitness),
    /// `Sdeg_A` of the component at this order reaches `i + k`.
    SdegTooLarge(i64),
    /// The symbol contains a shift factor `A_i`.
    SymbolContainsA,
    /// `Sdeg_A` of the symbol differs from the required `k`.
    SymbolSdeg(Deg),
    /// A component contains a shift factor `A_i` (differential test only).
    ContainsA(i64),
}

#[derive(Clone, Debug)]
pub struct CondReport {
    pub ok: bool,
    pub violation: Option<CondViolation>,
}

/// The four-clause shape condition `A_q(kbound)` on a truncated operator
/// whose components are HCPs over `Hcpc(q)`.
pub fn condition_aq(op: &TruncatedOp, q: u32, kbound: i64) -> CondReport {
    assert_eq!(
        op.index(),
        q,
        "operator must be presented over the matching cyclotomic index"
    );
    let Deg::Fin(top) = op.top() else {
        return CondReport {
            ok: true,
            violation: None,
        };
    };
    // clause 4 first on the symbol, then clauses 2-3 downward
    let symbol = op.component(top).unwrap();
    if symbol.contains_a() {
        return CondReport {
            ok: false,
            violation: Some(CondViolation::SymbolContainsA),
        };
    }
    if symbol.sdeg_a() != Deg::Fin(kbound) {
        return CondReport {
            ok: false,
            violation: Some(CondViolation::SymbolSdeg(symbol.sdeg_a())),
        };
    }
    for (order, form) in op.body().components().rev() {
        let (free, w) = is_totally_free_of_b(form);
        if !free {
            return CondReport {
                ok: false,
                violation: Some(CondViolation::NotTotallyFree(order, w.unwrap())),
            };
        }
        let i = top - order;
        if i > 0 {
            if let Deg::Fin(d) = form.sdeg_a() {
                if d >= i + kbound {
                    return CondReport {
                        ok: false,
                        violation: Some(CondViolation::SdegTooLarge(order)),
                    };
                }
            }
        }
    }
    CondReport {
        ok: true,
        violation: None,
    }
}

/// Criterion: `op` is a differential operator with constant highest symbol
/// iff it satisfies condition `A_p(0)` and no component contains `A_i`.
pub fn is_differential(op: &TruncatedOp, p: u32) -> CondReport {
    for (order, form) in op.body().components().rev() {
        if form.contains_a() {
            return CondReport {
                ok: false,
                violation: Some(CondViolation::ContainsA(order)),
            };
        }
    }
    condition_aq(op, p.max(op.index()), 0)
}

/// For an operator passing [`is_differential`], the canonical differential
/// rendering: coefficients of `x^i d^j`. Components of negative order `-u`
/// rewrite through the falling-factorial basis, whose first `u` coordinates
/// vanish exactly when the component is totally free.
pub fn to_canonical_diff(op: &TruncatedOp) -> Option<Vec<(u32, u32, CycScalar)>> {
    let mut out = vec![];
    for (order, form) in op.body().components() {
        if form.contains_a() || form.b_terms().next().is_some() {
            return None;
        }
        for (i, c) in gamma_to_falling(form) {
            let d_deg = i64::from(i) + order;
            if d_deg < 0 {
                if !c.is_zero() {
                    return None;
                }
                continue;
            }
            out.push((i, d_deg as u32, c));
        }
    }
    Some(out)
}
