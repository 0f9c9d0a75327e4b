//! Global minimal models over Z.
//!
//! Scale factors come from the primes with `p^12 | disc`; integrality at 2
//! and 3 is decided by trying every reduced model compatible with the scaled
//! `(c4, c6)` pair, which also produces the reduced model itself.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};

use super::CurveOverQ;
use crate::nt;

/// Reduced integral model (`a1, a3 in {0,1}`, `a2 in {-1,0,1}`) with the given
/// c-invariants, if one exists.
pub(crate) fn reduced_model_from_c(c4: &BigInt, c6: &BigInt) -> Option<[BigInt; 5]> {
    // b2 = a1^2 + 4 a2 over the reduced choices of (a1, a2)
    for (a1, a2) in [(0i64, 0i64), (1, 0), (0, 1), (1, 1), (0, -1), (1, -1)] {
        let b2 = BigInt::from(a1 * a1 + 4 * a2);
        let num4 = &b2 * &b2 - c4;
        if !num4.is_multiple_of(&BigInt::from(24)) {
            continue;
        }
        let b4 = num4 / 24;
        let num6: BigInt = -(&b2 * &b2 * &b2) + &b2 * &b4 * 36 - c6;
        if !num6.is_multiple_of(&BigInt::from(216)) {
            continue;
        }
        let b6: BigInt = num6 / 216;
        let a3 = b6.mod_floor(&BigInt::from(2));
        let a1b = BigInt::from(a1);
        let num_a4: BigInt = &b4 - &a1b * &a3;
        if !num_a4.is_even() {
            continue;
        }
        let a4 = num_a4 / 2;
        let num_a6: BigInt = &b6 - &a3;
        if !num_a6.is_multiple_of(&BigInt::from(4)) {
            continue;
        }
        let a6 = num_a6 / 4;
        return Some([a1b, BigInt::from(a2), a3, a4, a6]);
    }
    None
}

fn divisible_scale(c4: &BigInt, c6: &BigInt, u: &BigInt) -> Option<(BigInt, BigInt)> {
    let u4 = u.pow(4);
    let u6 = u.pow(6);
    if c4.is_multiple_of(&u4) && c6.is_multiple_of(&u6) {
        Some((c4 / u4, c6 / u6))
    } else {
        None
    }
}

pub(crate) fn minimal_model(curve: &CurveOverQ) -> CurveOverQ {
    let inv = curve.invariants();
    let disc = &inv.disc;
    let (c4, c6) = (&inv.c4, &inv.c6);
    let mut u = BigInt::one();
    let mut small = Vec::new();
    for p in nt::prime_divisors(disc) {
        let p = p.to_u64().expect("prime fits in u64");
        let vd = nt::valuation(disc, p) / 12;
        if vd == 0 {
            continue;
        }
        let v4 = if c4.is_zero() { u32::MAX } else { nt::valuation(c4, p) / 4 };
        let v6 = if c6.is_zero() { u32::MAX } else { nt::valuation(c6, p) / 6 };
        let emax = vd.min(v4).min(v6);
        if emax == 0 {
            continue;
        }
        if p >= 5 {
            u *= BigInt::from(p).pow(emax);
        } else {
            small.push((p, emax));
        }
    }
    // 2 and 3: largest exponent that still admits an integral model
    for (p, emax) in small {
        for e in (0..=emax).rev() {
            let trial = &u * BigInt::from(p).pow(e);
            if let Some((s4, s6)) = divisible_scale(c4, c6, &trial) {
                if reduced_model_from_c(&s4, &s6).is_some() {
                    u = trial;
                    break;
                }
            }
        }
    }
    let (m4, m6) = divisible_scale(c4, c6, &u).expect("scale divides invariants");
    let a = match reduced_model_from_c(&m4, &m6) {
        Some(a) => a,
        // the input itself is integral, so a reduced model exists for u = 1
        None => reduced_model_from_c(c4, c6).expect("integral model has a reduced form"),
    };
    CurveOverQ::new(a).expect("minimal model is nonsingular")
}
