//! Tate's algorithm for the local reduction type at any prime, including 2 and 3.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use super::CurveOverQ;
use crate::nt::{self, inv_mod};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReductionKind {
    Good,
    MultiplicativeSplit,
    MultiplicativeNonsplit,
    Additive,
}

impl ReductionKind {
    pub fn is_multiplicative(self) -> bool {
        matches!(self, Self::MultiplicativeSplit | Self::MultiplicativeNonsplit)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kodaira {
    I0,
    In(u32),
    II,
    III,
    IV,
    I0Star,
    InStar(u32),
    IVStar,
    IIIStar,
    IIStar,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalData {
    pub prime: u64,
    pub kind: ReductionKind,
    pub kodaira: Kodaira,
    /// `ord_p` of the minimal discriminant.
    pub disc_valuation: u32,
    pub conductor_exponent: u32,
}

impl LocalData {
    pub fn good(prime: u64) -> Self {
        LocalData {
            prime,
            kind: ReductionKind::Good,
            kodaira: Kodaira::I0,
            disc_valuation: 0,
            conductor_exponent: 0,
        }
    }
}

fn val(x: &BigInt, p: u64) -> u32 {
    nt::valuation(x, p)
}

fn divisible(x: &BigInt, pk: &BigInt) -> bool {
    x.is_multiple_of(pk)
}

/// Residue of `x` in `[0, p)` lifted back to an integer.
fn rep(x: &BigInt, p: u64) -> BigInt {
    BigInt::from(nt::big_mod(x, p))
}

fn inverse_mod_big(x: &BigInt, m: &BigInt) -> BigInt {
    let g = x.extended_gcd(m);
    debug_assert!(g.gcd.is_one());
    g.x.mod_floor(m)
}

fn inverse(x: &BigInt, p: u64) -> BigInt {
    BigInt::from(inv_mod(nt::big_mod(x, p), p).expect("unit modulo p"))
}

/// Run Tate's algorithm at `p` on an integral model.
pub(crate) fn tate(curve: &CurveOverQ, p: u64) -> LocalData {
    let bp = BigInt::from(p);
    let p2 = &bp * &bp;
    let p3 = &p2 * &bp;
    let zero = BigInt::zero();
    let half = if p == 2 { BigInt::zero() } else { BigInt::from(p.div_ceil(2)) };
    let mut e = curve.clone();
    loop {
        let inv = e.invariants().clone();
        let vd = val(&inv.disc, p);
        if vd == 0 {
            return LocalData::good(p);
        }
        // move the singular point to (0, 0)
        let (r, t) = if p == 2 {
            if divisible(&inv.b2, &bp) {
                let r = rep(e.a4(), 2);
                let t = rep(&(&r * (BigInt::one() + e.a2() + e.a4()) + e.a6()), 2);
                (r, t)
            } else {
                let r = rep(e.a3(), 2);
                let t = rep(&(&r + e.a4()), 2);
                (r, t)
            }
        } else if p == 3 {
            let r = if divisible(&inv.b2, &bp) { rep(&-&inv.b6, 3) } else { rep(&-(&inv.b2 * &inv.b4), 3) };
            let t = rep(&(e.a1() * &r + e.a3()), 3);
            (r, t)
        } else {
            let r = if divisible(&inv.c4, &bp) {
                rep(&(-inverse(&BigInt::from(12), p) * &inv.b2), p)
            } else {
                rep(&(-inverse(&(&inv.c4 * 12), p) * (&inv.c6 + &inv.b2 * &inv.c4)), p)
            };
            let t = rep(&(-&half * (e.a1() * &r + e.a3())), p);
            (r, t)
        };
        e = e.rst_transform(&r, &zero, &t);
        let inv = e.invariants().clone();
        debug_assert!(divisible(e.a3(), &bp) && divisible(e.a4(), &bp) && divisible(e.a6(), &bp));

        if !divisible(&inv.b2, &bp) {
            // tangent cone y^2 + a1 x y - a2 x^2 splits over F_p?
            let split = if p == 2 {
                e.a2().is_even()
            } else {
                nt::legendre_big(&inv.b2, p) == 1
            };
            return LocalData {
                prime: p,
                kind: if split { ReductionKind::MultiplicativeSplit } else { ReductionKind::MultiplicativeNonsplit },
                kodaira: Kodaira::In(vd),
                disc_valuation: vd,
                conductor_exponent: 1,
            };
        }
        let additive = |kodaira, f| LocalData {
            prime: p,
            kind: ReductionKind::Additive,
            kodaira,
            disc_valuation: vd,
            conductor_exponent: f,
        };
        if !divisible(e.a6(), &p2) {
            return additive(Kodaira::II, vd);
        }
        if !divisible(&inv.b8, &p3) {
            return additive(Kodaira::III, vd - 1);
        }
        if !divisible(&inv.b6, &p3) {
            return additive(Kodaira::IV, vd - 2);
        }
        // now arrange p | a1, a2; p^2 | a3, a4; p^3 | a6
        let (s, t) = if p == 2 {
            (rep(e.a2(), 2), &bp * rep(&(e.a6() / &p2), 2))
        } else {
            let s = rep(&(-e.a1() * &half), p);
            let inv2 = inverse_mod_big(&BigInt::from(2), &p2);
            (s, (-e.a3() * inv2).mod_floor(&p2))
        };
        e = e.rst_transform(&zero, &s, &t);
        debug_assert!(divisible(e.a1(), &bp) && divisible(e.a2(), &bp));
        debug_assert!(divisible(e.a3(), &p2) && divisible(e.a4(), &p2) && divisible(e.a6(), &p3));

        let b = e.a2() / &bp;
        let c = e.a4() / &p2;
        let d = e.a6() / &p3;
        let w = &d * &d * 27 - &b * &b * &c * &c + &b * &b * &b * &d * 4 - &b * &c * &d * 18 + &c * &c * &c * 4;
        let x = &c * 3 - &b * &b;
        if !divisible(&w, &bp) {
            return additive(Kodaira::I0Star, vd - 4);
        }
        if !divisible(&x, &bp) {
            // double root of T^3 + bT^2 + cT + d moved to T = 0
            let r = if p == 2 {
                rep(&c, 2)
            } else if p == 3 {
                rep(&(&b * &c), 3)
            } else {
                rep(&((&b * &c - &d * 9) * inverse(&(&x * 2), p)), p)
            };
            e = e.rst_transform(&(&bp * r), &zero, &zero);
            let (mut ix, mut iy) = (3u32, 3u32);
            let (mut mx, mut my) = (p2.clone(), p2.clone());
            loop {
                let a2t = e.a2() / &bp;
                let a3t = e.a3() / &my;
                let a6t = e.a6() / (&mx * &my);
                if !divisible(&(&a3t * &a3t + &a6t * 4), &bp) {
                    break;
                }
                let t = if p == 2 { &my * rep(&a6t, 2) } else { &my * rep(&(-&a3t * &half), p) };
                e = e.rst_transform(&zero, &zero, &t);
                my *= &bp;
                iy += 1;
                let a2t2 = e.a2() / &bp;
                debug_assert_eq!(a2t, a2t2);
                let a4t = e.a4() / (&bp * &mx);
                let a6t = e.a6() / (&mx * &my);
                if !divisible(&(&a4t * &a4t - &a6t * &a2t * 4), &bp) {
                    break;
                }
                let r = if p == 2 {
                    &mx * rep(&(&a6t * &a2t), 2)
                } else {
                    &mx * rep(&(-&a4t * inverse(&(&a2t * 2), p)), p)
                };
                e = e.rst_transform(&r, &zero, &zero);
                mx *= &bp;
                ix += 1;
            }
            let m = ix + iy - 5;
            return additive(Kodaira::InStar(m), vd - ix - iy + 1);
        }
        // triple root moved to T = 0
        let r = if p == 2 {
            rep(&b, 2)
        } else if p == 3 {
            rep(&-&d, 3)
        } else {
            rep(&(-&b * inverse(&BigInt::from(3), p)), p)
        };
        e = e.rst_transform(&(&bp * r), &zero, &zero);
        let p4 = &p2 * &p2;
        let x3 = e.a3() / &p2;
        let x6 = e.a6() / &p4;
        if !divisible(&(&x3 * &x3 + &x6 * 4), &bp) {
            return additive(Kodaira::IVStar, vd - 6);
        }
        let t = if p == 2 { rep(&x6, 2) } else { rep(&(&x3 * &half), p) };
        e = e.rst_transform(&zero, &zero, &(-&p2 * t));
        if !divisible(e.a4(), &p4) {
            return additive(Kodaira::IIIStar, vd - 7);
        }
        if !divisible(e.a6(), &(&p4 * &p2)) {
            return additive(Kodaira::IIStar, vd - 8);
        }
        // non-minimal: scale down by p and start over
        let a = e.ainvs();
        e = CurveOverQ::new([
            &a[0] / &bp,
            &a[1] / &p2,
            &a[2] / &p3,
            &a[3] / &p4,
            &a[4] / (&p4 * &p2),
        ])
        .expect("scaled model is nonsingular");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ellcurve::named::*;

    fn conductor(a: [i64; 5]) -> BigInt {
        CurveOverQ::from_i64(a).unwrap().conductor()
    }

    #[test]
    fn known_conductors() {
        // reference conductors from the Cremona tables
        let table: &[([i64; 5], i64)] = &[
            ([0, -1, 1, -10, -20], 11),
            ([0, 0, 1, -1, 0], 37),
            ([0, 1, 1, -12, -21], 67),
            ([1, 0, 1, 4, -6], 14),
            ([1, 1, 1, -10, -10], 15),
            ([0, 0, 1, 0, -7], 27),
            ([0, -1, 0, -4, 4], 24),
            ([0, 1, 0, 4, 4], 20),
            ([1, -1, 0, -2, -1], 49),
            ([0, 0, 0, -4, 0], 64),
            ([0, 0, 0, 4, 0], 32),
            ([0, 0, 0, 0, 1], 36),
            ([0, 1, 1, -9, -15], 19),
            ([1, 0, 1, -5, -8], 26),
            ([0, 0, 0, -1, 0], 32),
            ([0, 0, 0, 1, 0], 64),
        ];
        for (a, n) in table {
            assert_eq!(conductor(*a), BigInt::from(*n), "{a:?}");
        }
    }

    #[test]
    fn reduction_kinds_of_67a1_and_37a1() {
        let e = curve_67a1();
        let l = e.reduction_at(67).unwrap();
        assert!(l.kind.is_multiplicative());
        assert_eq!(l.disc_valuation, 1);
        assert_eq!(l.conductor_exponent, 1);
        for p in [2u64, 3, 5, 7, 11, 13] {
            assert_eq!(e.reduction_at(p).unwrap().kind, ReductionKind::Good);
        }
        let l37 = curve_37a1().reduction_at(37).unwrap();
        assert!(l37.kind.is_multiplicative());
    }

    #[test]
    fn split_matches_c6_criterion_for_large_primes() {
        // p >= 5 multiplicative: split iff -c6 is a square mod p
        for a in [[0, -1, 1, -10, -20], [0, 0, 1, -1, 0], [0, 1, 1, -12, -21], [0, 1, 1, -9, -15]] {
            let e = CurveOverQ::from_i64(a).unwrap();
            let g = e.global_data();
            for l in &g.local {
                if l.kind.is_multiplicative() && l.prime >= 5 {
                    let split = nt::legendre_big(&-&g.minimal.invariants().c6, l.prime) == 1;
                    assert_eq!(split, l.kind == ReductionKind::MultiplicativeSplit, "{a:?} at {}", l.prime);
                }
            }
        }
    }

    #[test]
    fn local_invariants_consistent() {
        for a in [[0, 1, 1, -12, -21], [0, 0, 0, 0, 1], [1, -1, 0, -2, -1], [0, 0, 0, -4, 0]] {
            let g = CurveOverQ::from_i64(a).unwrap().global_data();
            for l in &g.local {
                match l.kind {
                    ReductionKind::Good => assert_eq!(l.conductor_exponent, 0),
                    ReductionKind::Additive => assert!(l.conductor_exponent >= 2),
                    _ => assert_eq!(l.conductor_exponent, 1),
                }
                assert!(l.disc_valuation > 0);
            }
        }
    }
}
