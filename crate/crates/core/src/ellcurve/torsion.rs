//! Rational torsion: a reduction bound followed by Lutz–Nagell enumeration.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use super::count::count_points_naive;
use super::points::{rational_add, RatPoint};
use super::CurveOverQ;
use crate::nt;

/// Number of good odd primes whose point counts bound the torsion order.
pub const TORSION_BOUND_PRIMES: usize = 12;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorsionGroup {
    pub order: u64,
    /// Invariant factors: `[]`, `[n]` or `[2, 2k]`.
    pub structure: Vec<u64>,
    /// The gcd of point counts used as an upper bound.
    pub reduction_bound: u64,
    /// Affine torsion points as `(x, y)` decimal-fraction strings.
    pub points: Vec<(String, String)>,
}

impl TorsionGroup {
    pub fn is_trivial(&self) -> bool {
        self.order == 1
    }
}

fn order_of(curve: &CurveOverQ, p: &RatPoint) -> Option<u64> {
    let mut acc = p.clone();
    for n in 1..=12u64 {
        if acc.is_none() {
            return Some(n);
        }
        acc = rational_add(curve, &acc, p);
    }
    None
}

fn divisors_with_square_dividing(n: &BigInt) -> Vec<BigInt> {
    // all y > 0 with y^2 | n
    let mut ys = vec![BigInt::one()];
    for (q, e) in nt::factor_big(&n.abs().to_biguint().unwrap_or_else(BigUint::zero)) {
        let q = BigInt::from(q);
        let mut next = Vec::new();
        for y in &ys {
            let mut qk = BigInt::one();
            for _ in 0..=(e / 2) {
                next.push(y * &qk);
                qk *= &q;
            }
        }
        ys = next;
    }
    ys
}

pub fn torsion_subgroup(curve: &CurveOverQ) -> TorsionGroup {
    let e = curve.minimal_model();
    let disc = e.disc().clone();
    let mut bound = 0u64;
    let mut used = 0;
    for p in nt::primes_up_to(10_000).into_iter().skip(1) {
        if nt::big_mod(&disc, p) == 0 {
            continue;
        }
        let fp = e.reduce_mod(p).expect("good prime");
        bound = bound.gcd(&count_points_naive(&fp));
        used += 1;
        if used >= TORSION_BOUND_PRIMES {
            break;
        }
    }
    let mut points: Vec<(BigRational, BigRational)> = Vec::new();
    if bound > 1 {
        // short model Y^2 = X^3 + A X + B with X = 36x + 3b2, Y = 108(2y + a1 x + a3)
        let inv = e.invariants();
        let (a, b) = (-&inv.c4 * 27, -&inv.c6 * 54);
        let d = &a * &a * &a * 4 + &b * &b * 27;
        let mut cands: Vec<(BigInt, BigInt)> = Vec::new();
        for x in nt::integer_roots_monic_cubic(&BigInt::zero(), &a, &b) {
            cands.push((x, BigInt::zero()));
        }
        for y in divisors_with_square_dividing(&d) {
            let y2 = &y * &y;
            for x in nt::integer_roots_monic_cubic(&BigInt::zero(), &a, &(&b - &y2)) {
                cands.push((x.clone(), y.clone()));
                cands.push((x, -y.clone()));
            }
        }
        let (b2, a1, a3) = (
            BigRational::from_integer(inv.b2.clone()),
            BigRational::from_integer(e.a1().clone()),
            BigRational::from_integer(e.a3().clone()),
        );
        for (xs, ys) in cands {
            let x = (BigRational::from_integer(xs) - b2.clone() * BigRational::from_integer(3.into()))
                / BigRational::from_integer(36.into());
            let y = (BigRational::from_integer(ys) / BigRational::from_integer(108.into()) - &a1 * &x - &a3)
                / BigRational::from_integer(2.into());
            let pt: RatPoint = Some((x.clone(), y.clone()));
            if let Some(n) = order_of(&e, &pt) {
                if bound.is_multiple_of(n) {
                    points.push((x, y));
                }
            }
        }
        points.sort();
        points.dedup();
    }
    let order = points.len() as u64 + 1;
    let two_torsion = points
        .iter()
        .filter(|(x, y)| order_of(&e, &Some((x.clone(), y.clone()))) == Some(2))
        .count();
    let structure = match (order, two_torsion) {
        (1, _) => vec![],
        (n, 3) => vec![2, n / 2],
        (n, _) => vec![n],
    };
    assert!(matches!(order, 1..=10 | 12), "torsion order {order} outside Mazur's list");
    assert_eq!(bound % order, 0);
    // points are reported on the input model
    let back = |x: &BigRational, y: &BigRational| map_to_model(&e, curve, x, y);
    TorsionGroup {
        order,
        structure,
        reduction_bound: bound,
        points: points
            .iter()
            .map(|(x, y)| {
                let (x, y) = back(x, y);
                (x.to_string(), y.to_string())
            })
            .collect(),
    }
}

/// Transport a point between two models with equal c-invariants up to scaling,
/// via their common short model.
fn map_to_model(from: &CurveOverQ, to: &CurveOverQ, x: &BigRational, y: &BigRational) -> (BigRational, BigRational) {
    if from.ainvs() == to.ainvs() {
        return (x.clone(), y.clone());
    }
    let r = |n: &BigInt| BigRational::from_integer(n.clone());
    let c = |n: i64| BigRational::from_integer(n.into());
    let (fi, ti) = (from.invariants(), to.invariants());
    // scaling u with c4(to) = u^4 c4(from), c6(to) = u^6 c6(from)
    let u2 = if !fi.c6.is_zero() && !fi.c4.is_zero() {
        (r(&ti.c6) * r(&fi.c4)) / (r(&fi.c6) * r(&ti.c4))
    } else if !fi.c4.is_zero() {
        let q = r(&ti.c4) / r(&fi.c4);
        sqrt_rat(&q).expect("fourth-power ratio")
    } else {
        let q = r(&ti.c6) / r(&fi.c6);
        cbrt_rat(&q).expect("sixth-power ratio")
    };
    let u = sqrt_rat(&u2).expect("u^2 is a rational square");
    let xs = (x * c(36) + r(&fi.b2) * c(3)) * &u2;
    let ys = (y * c(2) + r(from.a1()) * x + r(from.a3())) * c(108) * &u2 * &u;
    let xt = (xs - r(&ti.b2) * c(3)) / c(36);
    let yt = (ys / c(108) - r(to.a1()) * &xt - r(to.a3())) / c(2);
    (xt, yt)
}

fn sqrt_rat(q: &BigRational) -> Option<BigRational> {
    if q.is_negative() {
        return None;
    }
    Some(BigRational::new(nt::exact_sqrt(q.numer())?, nt::exact_sqrt(q.denom())?))
}

fn cbrt_rat(q: &BigRational) -> Option<BigRational> {
    let root = |n: &BigInt| {
        let r = n.cbrt();
        (&r * &r * &r == *n).then_some(r)
    };
    Some(BigRational::new(root(q.numer())?, root(q.denom())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ellcurve::named::*;
    use crate::ellcurve::{CurvePoint, FieldTag, QuadElem};

    fn c(a: [i64; 5]) -> CurveOverQ {
        CurveOverQ::from_i64(a).unwrap()
    }

    fn check_points(e: &CurveOverQ, t: &TorsionGroup) {
        for (x, y) in &t.points {
            let p = CurvePoint {
                field: FieldTag::Rational,
                xy: Some((QuadElem::rational(x.parse().unwrap()), QuadElem::rational(y.parse().unwrap()))),
            };
            assert!(p.on_curve(e), "{x},{y} not on {e:?}");
        }
    }

    #[test]
    fn torsion_of_67a1_and_37a1_trivial() {
        assert!(torsion_subgroup(&curve_67a1()).is_trivial());
        assert!(torsion_subgroup(&curve_37a1()).is_trivial());
    }

    #[test]
    fn known_structures() {
        // (curve, order, structure)
        let cases: [([i64; 5], u64, Vec<u64>); 7] = [
            ([0, 0, 0, -1, 0], 4, vec![2, 2]),
            ([0, -1, 1, -10, -20], 5, vec![5]),
            ([1, 0, 1, 4, -6], 6, vec![6]),
            ([0, 0, 0, 0, 1], 6, vec![6]),
            ([1, 1, 1, -10, -10], 8, vec![2, 4]),
            ([0, 0, 1, -1, 0], 1, vec![]),
            ([0, 0, 0, 4, 0], 4, vec![4]),
        ];
        for (a, n, s) in cases {
            let e = c(a);
            let t = torsion_subgroup(&e);
            assert_eq!((t.order, t.structure.clone()), (n, s), "{a:?}");
            check_points(&e, &t);
        }
    }

    #[test]
    fn nonminimal_input_reports_points_on_input_model() {
        let e = c([0, 0, 0, -1, 0]).scale_up(&BigInt::from(2));
        let t = torsion_subgroup(&e);
        assert_eq!(t.order, 4);
        check_points(&e, &t);
    }
}
