//! Elliptic curves over Q: invariants, minimal models, local reduction data,
//! reduction modulo primes, quadratic twists, torsion and naive point search.

mod count;
mod minimal;
mod points;
mod tate;
mod torsion;

use std::fmt;
use std::sync::{Arc, OnceLock};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nt;

pub use count::{
    count_points_bsgs, count_points_mod_p, count_points_naive, division_cubic_mod_p,
    ell_torsion_count_by_division_poly, two_torsion_dim_mod_p, CurveFp, FpPoint,
};
pub use points::{
    point_search, point_search_relative, CurvePoint, FieldTag, QuadElem, QuadField, RelativePoint,
};
pub use tate::{Kodaira, LocalData, ReductionKind};
pub use torsion::{torsion_subgroup, TorsionGroup};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CurveError {
    #[error("singular Weierstrass model (discriminant 0)")]
    Singular,
    #[error("prime {0} is a prime of bad reduction")]
    BadReduction(u64),
    #[error("{0} is not a prime")]
    NotPrime(u64),
    #[error("twist parameter {0} is not a nonzero squarefree integer")]
    NotSquarefree(BigInt),
    #[error("operation requires an odd prime, got {0}")]
    EvenPrime(u64),
    #[error("malformed curve record: {0}")]
    Malformed(String),
}

/// The standard b- and c-invariants and discriminant of a Weierstrass model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Invariants {
    pub b2: BigInt,
    pub b4: BigInt,
    pub b6: BigInt,
    pub b8: BigInt,
    pub c4: BigInt,
    pub c6: BigInt,
    pub disc: BigInt,
}

/// `compute_invariants` without the nonsingularity check.
pub fn invariants_of(a: &[BigInt; 5]) -> Invariants {
    let [a1, a2, a3, a4, a6] = a;
    let b2 = a1 * a1 + a2 * 4;
    let b4 = a1 * a3 + a4 * 2;
    let b6 = a3 * a3 + a6 * 4;
    let b8 = a1 * a1 * a6 + a2 * a6 * 4 - a1 * a3 * a4 + a2 * a3 * a3 - a4 * a4;
    let c4 = &b2 * &b2 - &b4 * 24;
    let b2_cubed: BigInt = &b2 * &b2 * &b2;
    let c6: BigInt = -b2_cubed + &b2 * &b4 * 36 - &b6 * 216;
    let b2b2b8: BigInt = &b2 * &b2 * &b8;
    let disc: BigInt = -b2b2b8 - &b4 * &b4 * &b4 * 8 - &b6 * &b6 * 27 + &b2 * &b4 * &b6 * 9;
    Invariants { b2, b4, b6, b8, c4, c6, disc }
}

/// Invariants of a Weierstrass model; fails on a singular model.
pub fn compute_invariants(a: &[BigInt; 5]) -> Result<Invariants, CurveError> {
    let inv = invariants_of(a);
    if inv.disc.is_zero() {
        return Err(CurveError::Singular);
    }
    Ok(inv)
}

/// Global arithmetic data: minimal model, bad primes with local data, conductor.
#[derive(Clone, Debug)]
pub struct GlobalData {
    pub minimal: CurveOverQ,
    pub local: Vec<LocalData>,
    pub conductor: BigInt,
}

impl GlobalData {
    pub fn local_at(&self, p: u64) -> Option<&LocalData> {
        self.local.iter().find(|l| l.prime == p)
    }

    pub fn bad_primes(&self) -> Vec<u64> {
        self.local
            .iter()
            .filter(|l| l.kind != ReductionKind::Good)
            .map(|l| l.prime)
            .collect()
    }
}

/// An integral Weierstrass model over Q together with its invariants.
#[derive(Clone)]
pub struct CurveOverQ {
    pub label: Option<String>,
    ainvs: [BigInt; 5],
    inv: Invariants,
    global: OnceLock<Arc<GlobalData>>,
}

impl fmt::Debug for CurveOverQ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a1, a2, a3, a4, a6] = &self.ainvs;
        write!(f, "CurveOverQ[{a1},{a2},{a3},{a4},{a6}]")?;
        if let Some(l) = &self.label {
            write!(f, " ({l})")?;
        }
        Ok(())
    }
}

impl PartialEq for CurveOverQ {
    fn eq(&self, other: &Self) -> bool {
        self.ainvs == other.ainvs
    }
}
impl Eq for CurveOverQ {}

impl CurveOverQ {
    pub fn new(ainvs: [BigInt; 5]) -> Result<Self, CurveError> {
        let inv = compute_invariants(&ainvs)?;
        let curve = CurveOverQ { label: None, ainvs, inv, global: OnceLock::new() };
        debug_assert!(curve.invariant_identities_hold());
        Ok(curve)
    }

    pub fn from_i64(a: [i64; 5]) -> Result<Self, CurveError> {
        Self::new(a.map(BigInt::from))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn ainvs(&self) -> &[BigInt; 5] {
        &self.ainvs
    }

    pub fn a1(&self) -> &BigInt {
        &self.ainvs[0]
    }
    pub fn a2(&self) -> &BigInt {
        &self.ainvs[1]
    }
    pub fn a3(&self) -> &BigInt {
        &self.ainvs[2]
    }
    pub fn a4(&self) -> &BigInt {
        &self.ainvs[3]
    }
    pub fn a6(&self) -> &BigInt {
        &self.ainvs[4]
    }

    pub fn invariants(&self) -> &Invariants {
        &self.inv
    }

    pub fn disc(&self) -> &BigInt {
        &self.inv.disc
    }

    /// `4 b8 = b2 b6 - b4^2` and `1728 disc = c4^3 - c6^2`.
    pub fn invariant_identities_hold(&self) -> bool {
        let i = &self.inv;
        let b_ok = &i.b8 * 4 == &i.b2 * &i.b6 - &i.b4 * &i.b4;
        let c_ok = &i.disc * 1728 == &i.c4 * &i.c4 * &i.c4 - &i.c6 * &i.c6;
        b_ok && c_ok
    }

    /// Change of variables `x = x' + r`, `y = y' + s x' + t`.
    pub fn rst_transform(&self, r: &BigInt, s: &BigInt, t: &BigInt) -> CurveOverQ {
        let [a1, a2, a3, a4, a6] = &self.ainvs;
        let na1 = a1 + s * 2;
        let na2 = a2 - s * a1 + r * 3 - s * s;
        let na3 = a3 + r * a1 + t * 2;
        let na4 = a4 - s * a3 + r * a2 * 2 - (t + r * s) * a1 + r * r * 3 - s * t * 2;
        let na6 = a6 + r * a4 + r * r * a2 + r * r * r - t * a3 - t * t - r * t * a1;
        let mut out = CurveOverQ::new([na1, na2, na3, na4, na6]).expect("isomorphic model is nonsingular");
        out.label = self.label.clone();
        out
    }

    /// Model with `a_i` replaced by `u^i a_i` (discriminant scales by `u^12`).
    pub fn scale_up(&self, u: &BigInt) -> CurveOverQ {
        let [a1, a2, a3, a4, a6] = &self.ainvs;
        
        CurveOverQ::new([
            a1 * u,
            a2 * u.pow(2),
            a3 * u.pow(3),
            a4 * u.pow(4),
            a6 * u.pow(6),
        ])
        .expect("scaled model is nonsingular")
    }

    /// Short model `y^2 = x^3 - 27 c4 x - 54 c6`, isomorphic over Q.
    pub fn short_model(&self) -> CurveOverQ {
        CurveOverQ::new([
            BigInt::zero(),
            BigInt::zero(),
            BigInt::zero(),
            -&self.inv.c4 * 27,
            -&self.inv.c6 * 54,
        ])
        .expect("short model is nonsingular")
    }

    /// Globally minimal reduced model.
    pub fn minimal_model(&self) -> CurveOverQ {
        let mut m = minimal::minimal_model(self);
        m.label = self.label.clone();
        m
    }

    /// Minimal model, bad primes with Tate's algorithm output, conductor. Cached.
    pub fn global_data(&self) -> Arc<GlobalData> {
        self.global
            .get_or_init(|| {
                let minimal = self.minimal_model();
                let mut local = Vec::new();
                let mut conductor = BigInt::one();
                for p in nt::prime_divisors(minimal.disc()) {
                    let p = p.to_u64().expect("bad prime fits in u64");
                    let ld = tate::tate(&minimal, p);
                    conductor *= BigInt::from(p).pow(ld.conductor_exponent);
                    local.push(ld);
                }
                Arc::new(GlobalData { minimal, local, conductor })
            })
            .clone()
    }

    pub fn conductor(&self) -> BigInt {
        self.global_data().conductor.clone()
    }

    pub fn minimal_disc(&self) -> BigInt {
        self.global_data().minimal.disc().clone()
    }

    /// Tate's algorithm at `p`; good primes report `kind = Good`.
    pub fn reduction_at(&self, p: u64) -> Result<LocalData, CurveError> {
        if !nt::is_prime_u64(p) {
            return Err(CurveError::NotPrime(p));
        }
        let g = self.global_data();
        Ok(match g.local_at(p) {
            Some(l) => l.clone(),
            None => LocalData::good(p),
        })
    }

    pub fn has_good_reduction(&self, p: u64) -> bool {
        nt::big_mod(&self.minimal_disc(), p) != 0
    }

    /// Quadratic twist by a squarefree `d`, returned as a minimal model.
    pub fn quadratic_twist(&self, d: &BigInt) -> Result<CurveOverQ, CurveError> {
        if !nt::is_squarefree(d) {
            return Err(CurveError::NotSquarefree(d.clone()));
        }
        let c4 = &self.inv.c4;
        let c6 = &self.inv.c6;
        let twisted = CurveOverQ::new([
            BigInt::zero(),
            BigInt::zero(),
            BigInt::zero(),
            -(c4 * d * d * BigInt::from(27)),
            -(c6 * d * d * d * BigInt::from(54)),
        ])?;
        let mut m = twisted.minimal_model();
        m.label = self.label.as_ref().map(|l| format!("{l}^({d})"));
        Ok(m)
    }

    /// Reduction modulo a prime of good reduction (of this model).
    pub fn reduce_mod(&self, p: u64) -> Result<CurveFp, CurveError> {
        if nt::big_mod(self.disc(), p) == 0 {
            return Err(CurveError::BadReduction(p));
        }
        Ok(CurveFp::from_curve(self, p))
    }

    /// The 2-division cubic `4x^3 + b2 x^2 + 2 b4 x + b6`, as integer coefficients
    /// from the constant term up.
    pub fn two_division_cubic(&self) -> [BigInt; 4] {
        let i = &self.inv;
        [i.b6.clone(), &i.b4 * 2, i.b2.clone(), BigInt::from(4)]
    }

    /// j-invariant as a reduced fraction `c4^3 / disc`.
    pub fn j_invariant(&self) -> (BigInt, BigInt) {
        let num = self.inv.c4.pow(3);
        let den = self.inv.disc.clone();
        let g = num.gcd(&den);
        let (mut n, mut d) = (num / &g, den / &g);
        if d.is_negative() {
            n = -n;
            d = -d;
        }
        (n, d)
    }
}

/// Curve input record: optional label and a-invariants as decimal strings.
/// `disc` and `conductor`, when present, are claims checked against the
/// recomputed values.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct CurveRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub ainvs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conductor: Option<String>,
}

impl CurveRecord {
    pub fn from_curve(curve: &CurveOverQ) -> Self {
        CurveRecord {
            label: curve.label.clone(),
            ainvs: curve.ainvs.iter().map(|a| a.to_string()).collect(),
            disc: None,
            conductor: None,
        }
    }

    /// Parse and validate; claimed invariants must match the recomputed ones.
    pub fn to_curve(&self) -> Result<CurveOverQ, CurveError> {
        if self.ainvs.len() != 5 {
            return Err(CurveError::Malformed(format!(
                "expected 5 a-invariants, found {}",
                self.ainvs.len()
            )));
        }
        let mut a: [BigInt; 5] = Default::default();
        for (slot, s) in a.iter_mut().zip(&self.ainvs) {
            *slot = s
                .trim()
                .parse()
                .map_err(|_| CurveError::Malformed(format!("not an integer: {s:?}")))?;
        }
        let mut curve = CurveOverQ::new(a)?;
        curve.label = self.label.clone();
        if let Some(claimed) = &self.disc {
            let claimed: BigInt = claimed
                .parse()
                .map_err(|_| CurveError::Malformed(format!("bad disc claim {claimed:?}")))?;
            let actual = curve.minimal_disc();
            if claimed != actual && claimed != *curve.disc() {
                return Err(CurveError::Malformed(format!(
                    "invariant mismatch: record claims disc {claimed}, recomputed {actual}"
                )));
            }
        }
        if let Some(claimed) = &self.conductor {
            let claimed: BigInt = claimed
                .parse()
                .map_err(|_| CurveError::Malformed(format!("bad conductor claim {claimed:?}")))?;
            let actual = curve.conductor();
            if claimed != actual {
                return Err(CurveError::Malformed(format!(
                    "invariant mismatch: record claims conductor {claimed}, recomputed {actual}"
                )));
            }
        }
        Ok(curve)
    }
}

/// Curves used throughout the tests and the bundled data.
pub mod named {
    use super::CurveOverQ;

    /// 67.a1: `y^2 + y = x^3 + x^2 - 12x - 21`.
    pub fn curve_67a1() -> CurveOverQ {
        CurveOverQ::from_i64([0, 1, 1, -12, -21]).unwrap().with_label("67.a1")
    }

    /// 37.a1: `y^2 + y = x^3 - x`.
    pub fn curve_37a1() -> CurveOverQ {
        CurveOverQ::from_i64([0, 0, 1, -1, 0]).unwrap().with_label("37.a1")
    }
}
