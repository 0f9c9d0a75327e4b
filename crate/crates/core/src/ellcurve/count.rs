//! Curves over prime fields: point counting, 2-torsion and l-torsion ranks.

use num_integer::Integer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CurveError, CurveOverQ};
use crate::nt::{self, add_mod, big_mod, factor_u64, inv_mod, legendre, mul_mod, sqrt_mod, sub_mod};
use crate::polyfp::PolyFp;

/// Primes below this are counted by enumeration, above it by baby-step giant-step.
pub const NAIVE_COUNT_LIMIT: u64 = 1 << 14;

/// A Weierstrass model reduced modulo a prime of good reduction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CurveFp {
    pub p: u64,
    pub a: [u64; 5],
    pub b2: u64,
    pub b4: u64,
    pub b6: u64,
    pub b8: u64,
    pub c4: u64,
    pub c6: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FpPoint {
    Infinity,
    Affine(u64, u64),
}

impl CurveFp {
    pub(crate) fn from_curve(e: &CurveOverQ, p: u64) -> Self {
        let inv = e.invariants();
        CurveFp {
            p,
            a: [
                big_mod(e.a1(), p),
                big_mod(e.a2(), p),
                big_mod(e.a3(), p),
                big_mod(e.a4(), p),
                big_mod(e.a6(), p),
            ],
            b2: big_mod(&inv.b2, p),
            b4: big_mod(&inv.b4, p),
            b6: big_mod(&inv.b6, p),
            b8: big_mod(&inv.b8, p),
            c4: big_mod(&inv.c4, p),
            c6: big_mod(&inv.c6, p),
        }
    }

    /// `4x^3 + b2 x^2 + 2 b4 x + b6` over `F_p`.
    pub fn division_cubic(&self) -> PolyFp {
        let p = self.p;
        PolyFp::new(p, vec![self.b6, mul_mod(2, self.b4, p), self.b2, 4 % p])
    }

    pub fn contains(&self, pt: FpPoint) -> bool {
        match pt {
            FpPoint::Infinity => true,
            FpPoint::Affine(x, y) => {
                let p = self.p;
                let [a1, a2, a3, a4, a6] = self.a;
                let lhs = add_mod(mul_mod(y, y, p), mul_mod(y, add_mod(mul_mod(a1, x, p), a3, p), p), p);
                let x2 = mul_mod(x, x, p);
                let rhs = [mul_mod(x2, x, p), mul_mod(a2, x2, p), mul_mod(a4, x, p), a6]
                    .into_iter()
                    .fold(0, |acc, v| add_mod(acc, v, p));
                lhs == rhs
            }
        }
    }

    pub fn neg(&self, pt: FpPoint) -> FpPoint {
        match pt {
            FpPoint::Infinity => FpPoint::Infinity,
            FpPoint::Affine(x, y) => {
                let p = self.p;
                let t = add_mod(add_mod(y, mul_mod(self.a[0], x, p), p), self.a[2], p);
                FpPoint::Affine(x, sub_mod(0, t, p))
            }
        }
    }

    pub fn add(&self, u: FpPoint, v: FpPoint) -> FpPoint {
        let p = self.p;
        let [a1, a2, a3, a4, a6] = self.a;
        let (x1, y1, x2, y2) = match (u, v) {
            (FpPoint::Infinity, q) | (q, FpPoint::Infinity) => return q,
            (FpPoint::Affine(x1, y1), FpPoint::Affine(x2, y2)) => (x1, y1, x2, y2),
        };
        let lambda;
        if x1 == x2 {
            let denom = add_mod(add_mod(mul_mod(2, y1, p), mul_mod(a1, x1, p), p), a3, p);
            if y1 != y2 || denom == 0 {
                return FpPoint::Infinity;
            }
            let num = sub_mod(
                add_mod(add_mod(mul_mod(3, mul_mod(x1, x1, p), p), mul_mod(mul_mod(2, a2, p), x1, p), p), a4, p),
                mul_mod(a1, y1, p),
                p,
            );
            lambda = mul_mod(num, inv_mod(denom, p).unwrap(), p);
        } else {
            lambda = mul_mod(sub_mod(y2, y1, p), inv_mod(sub_mod(x2, x1, p), p).unwrap(), p);
        }
        let x3 = sub_mod(
            sub_mod(sub_mod(add_mod(mul_mod(lambda, lambda, p), mul_mod(a1, lambda, p), p), a2, p), x1, p),
            x2,
            p,
        );
        let nu = sub_mod(y1, mul_mod(lambda, x1, p), p);
        let y3 = sub_mod(sub_mod(sub_mod(0, mul_mod(add_mod(lambda, a1, p), x3, p), p), nu, p), a3, p);
        let _ = a6;
        FpPoint::Affine(x3, y3)
    }

    pub fn mul(&self, mut k: u64, pt: FpPoint) -> FpPoint {
        let mut acc = FpPoint::Infinity;
        let mut base = pt;
        while k > 0 {
            if k & 1 == 1 {
                acc = self.add(acc, base);
            }
            base = self.add(base, base);
            k >>= 1;
        }
        acc
    }

    /// Short model of the quadratic twist by `d` (`p >= 5`, or any odd `p`
    /// when only torsion counts are needed).
    pub fn twist(&self, d: u64) -> CurveFp {
        short_fp(self, d)
    }

    /// A pseudo-random affine point (odd p).
    pub fn random_point<R: Rng>(&self, rng: &mut R) -> FpPoint {
        let p = self.p;
        let g = self.division_cubic();
        loop {
            let x = rng.gen_range(0..p);
            let d = g.eval(x);
            if let Some(s) = sqrt_mod(d, p) {
                // 2y + a1 x + a3 = s
                let t = add_mod(mul_mod(self.a[0], x, p), self.a[2], p);
                let y = mul_mod(sub_mod(s, t, p), inv_mod(2, p).unwrap(), p);
                let pt = FpPoint::Affine(x, y);
                debug_assert!(self.contains(pt));
                return pt;
            }
        }
    }

    /// Exact order of `pt` given a multiple `n` of it.
    pub fn order_from_multiple(&self, pt: FpPoint, mut n: u64) -> u64 {
        debug_assert_eq!(self.mul(n, pt), FpPoint::Infinity);
        for (q, _) in factor_u64(n) {
            while n.is_multiple_of(q) && self.mul(n / q, pt) == FpPoint::Infinity {
                n /= q;
            }
        }
        n
    }
}

/// Number of points by enumeration.
pub fn count_points_naive(e: &CurveFp) -> u64 {
    let p = e.p;
    if p == 2 || p == 3 {
        let mut n = 1;
        for x in 0..p {
            for y in 0..p {
                if e.contains(FpPoint::Affine(x, y)) {
                    n += 1;
                }
            }
        }
        return n;
    }
    let mut is_square = vec![false; p as usize];
    for y in 0..p.div_ceil(2) {
        is_square[mul_mod(y, y, p) as usize] = true;
    }
    let g = e.division_cubic();
    let mut n = 1u64;
    for x in 0..p {
        let d = g.eval(x);
        n += if d == 0 {
            1
        } else if is_square[d as usize] {
            2
        } else {
            0
        };
    }
    n
}

/// Isomorphic short model `y^2 = x^3 + A x + B` over `F_p`, `p >= 5`.
fn short_fp(e: &CurveFp, twist_by: u64) -> CurveFp {
    let p = e.p;
    let v = twist_by % p;
    let a = mul_mod(mul_mod(p - 27 % p, e.c4, p), mul_mod(v, v, p), p);
    let b = mul_mod(mul_mod(p - 54 % p, e.c6, p), mul_mod(mul_mod(v, v, p), v, p), p);
    CurveFp {
        p,
        a: [0, 0, 0, a, b],
        b2: 0,
        b4: mul_mod(2, a, p),
        b6: mul_mod(4, b, p),
        b8: sub_mod(0, mul_mod(a, a, p), p),
        c4: sub_mod(0, mul_mod(48 % p, a, p), p),
        c6: sub_mod(0, mul_mod(864 % p, b, p), p),
    }
}

fn hasse_window(p: u64) -> (u64, u64) {
    // floor(2 sqrt p) = isqrt(4p)
    let w = (4 * p as u128).isqrt() as u64;
    (p + 1 - w, p + 1 + w)
}

/// All `n` in `[lo, hi]` with `n * pt = O`.
fn multiples_in_window(e: &CurveFp, pt: FpPoint, lo: u64, hi: u64) -> Vec<u64> {
    let span = hi - lo + 1;
    let m = (span as f64).sqrt().ceil() as u64 + 1;
    // baby steps j*P, j in [0, m)
    let mut baby: Vec<(u64, u64, u64)> = Vec::with_capacity(m as usize);
    let mut cur = FpPoint::Infinity;
    for j in 0..m {
        if j > 0 {
            match cur {
                FpPoint::Infinity => {
                    // order divides j: enumerate multiples directly
                    let ord = e.order_from_multiple(pt, j);
                    return (lo.div_ceil(ord) * ord..=hi).step_by(ord as usize).collect();
                }
                FpPoint::Affine(x, y) => baby.push((x, y, j)),
            }
        }
        cur = e.add(cur, pt);
    }
    baby.sort_unstable();
    let step = e.mul(m, pt);
    let mut giant = e.mul(lo, pt);
    let mut out = Vec::new();
    let mut k = 0u64;
    while lo + k * m <= hi {
        let base = lo + k * m;
        // base*P + j*P = O  <=>  base*P = -(j*P)
        match giant {
            FpPoint::Infinity => out.push(base),
            FpPoint::Affine(x, y) => {
                let neg = e.neg(FpPoint::Affine(x, y));
                let start = baby.partition_point(|b| b.0 < x);
                for b in &baby[start..] {
                    if b.0 != x {
                        break;
                    }
                    if FpPoint::Affine(b.0, b.1) == neg {
                        out.push(base + b.2);
                    }
                }
            }
        }
        giant = e.add(giant, step);
        k += 1;
    }
    out.retain(|&n| n >= lo && n <= hi);
    out.sort_unstable();
    out.dedup();
    out
}

fn lcm(a: u64, b: u64) -> u64 {
    a / a.gcd(&b) * b
}

/// Baby-step giant-step count for `p >= 5`, resolving ambiguity with further
/// points and with the quadratic twist.
pub fn count_points_bsgs(e: &CurveFp) -> u64 {
    let p = e.p;
    assert!(p >= 5, "BSGS path needs p >= 5");
    let short = short_fp(e, 1);
    let mut nonresidue = 2;
    while legendre(nonresidue, p) != -1 {
        nonresidue += 1;
    }
    let twist = short_fp(e, nonresidue);
    let (lo, hi) = hasse_window(p);
    let mut rng = ChaCha8Rng::seed_from_u64(p);
    let (mut lcm_e, mut lcm_t) = (1u64, 1u64);
    for round in 0..64 {
        for (curve, acc) in [(&short, &mut lcm_e), (&twist, &mut lcm_t)] {
            let pt = curve.random_point(&mut rng);
            let mults = multiples_in_window(curve, pt, lo, hi);
            if let Some(&n) = mults.first() {
                let ord = curve.order_from_multiple(pt, n);
                *acc = lcm(*acc, ord);
            }
        }
        let cands: Vec<u64> = (lo..=hi)
            .filter(|n| n % lcm_e == 0 && (2 * p + 2 - n).is_multiple_of(lcm_t))
            .collect();
        if cands.len() == 1 {
            return cands[0];
        }
        if round > 8 && p < 1000 {
            break;
        }
    }
    count_points_naive(e)
}

/// `#E(F_p)` and `a_p = p + 1 - #E(F_p)` at a prime of good reduction.
pub fn count_points_mod_p(curve: &CurveOverQ, p: u64) -> Result<(u64, i64), CurveError> {
    if !nt::is_prime_u64(p) {
        return Err(CurveError::NotPrime(p));
    }
    let e = curve.reduce_mod(p)?;
    let n = if p < NAIVE_COUNT_LIMIT { count_points_naive(&e) } else { count_points_bsgs(&e) };
    let ap = p as i64 + 1 - n as i64;
    assert!((ap * ap) as u64 <= 4 * p, "Hasse bound violated at p = {p}");
    Ok((n, ap))
}

/// The 2-division cubic reduced mod `p`.
pub fn division_cubic_mod_p(curve: &CurveOverQ, p: u64) -> PolyFp {
    let c = curve.two_division_cubic();
    PolyFp::new(p, c.iter().map(|x| big_mod(x, p)).collect())
}

/// `dim_{F_2} E(F_p)[2]` for an odd prime of good reduction: roots of the
/// 2-division cubic, mapped 0 -> 0, 1 -> 1, 3 -> 2.
pub fn two_torsion_dim_mod_p(curve: &CurveOverQ, p: u64) -> Result<u32, CurveError> {
    if p == 2 {
        return Err(CurveError::EvenPrime(p));
    }
    if !nt::is_prime_u64(p) {
        return Err(CurveError::NotPrime(p));
    }
    if nt::big_mod(curve.disc(), p) == 0 {
        return Err(CurveError::BadReduction(p));
    }
    let roots = division_cubic_mod_p(curve, p).count_distinct_roots();
    Ok(match roots {
        0 => 0,
        1 => 1,
        3 => 2,
        other => unreachable!("separable cubic has {other} roots"),
    })
}

/// Odd-indexed division polynomials and even ones divided by `psi_2`, as
/// polynomials in `x` over `F_p`; index `n` for `0 <= n <= target`.
fn division_polys(e: &CurveFp, target: usize) -> Vec<PolyFp> {
    let p = e.p;
    let (b2, b4, b6, b8) = (e.b2, e.b4, e.b6, e.b8);
    let m = |k: u64, v: u64| mul_mod(k % p, v, p);
    let f = e.division_cubic();
    let f2 = f.mul(&f);
    let mut ps = vec![
        PolyFp::zero(p),
        PolyFp::constant(p, 1),
        PolyFp::constant(p, 1),
        PolyFp::new(p, vec![b8, m(3, b6), m(3, b4), b2, 3 % p]),
        PolyFp::new(
            p,
            vec![
                sub_mod(mul_mod(b4, b8, p), mul_mod(b6, b6, p), p),
                sub_mod(mul_mod(b2, b8, p), mul_mod(b4, b6, p), p),
                m(10, b8),
                m(10, b6),
                m(5, b4),
                b2,
                2 % p,
            ],
        ),
    ];
    for n in 5..=target.max(4) {
        let k = n / 2;
        let next = if n % 2 == 1 {
            // n = 2k + 1
            let a = ps[k + 2].mul(&ps[k].mul(&ps[k]).mul(&ps[k]));
            let b = ps[k - 1].mul(&ps[k + 1].mul(&ps[k + 1]).mul(&ps[k + 1]));
            if k % 2 == 0 {
                f2.mul(&a).sub(&b)
            } else {
                a.sub(&f2.mul(&b))
            }
        } else {
            // n = 2k
            let a = ps[k + 2].mul(&ps[k - 1].mul(&ps[k - 1]));
            let b = ps[k - 2].mul(&ps[k + 1].mul(&ps[k + 1]));
            ps[k].mul(&a.sub(&b))
        };
        ps.push(next);
    }
    ps
}

/// `#E(F_p)[l]` for an odd prime `l != p`, computed from the `l`-division
/// polynomial: the rational x-roots whose y is also rational.
pub fn ell_torsion_count_by_division_poly(e: &CurveFp, ell: u64) -> u64 {
    let p = e.p;
    assert!(ell % 2 == 1 && ell != p && p != 2);
    let psi = division_polys(e, ell as usize)[ell as usize].clone();
    let h = psi.split_part();
    if h.degree().unwrap_or(0) == 0 {
        return 1;
    }
    // roots x of h with g(x) a nonzero square: gcd(h, g^((p-1)/2) - 1)
    let g = e.division_cubic().rem(&h);
    let s = g.pow_mod((p - 1) / 2, &h).sub(&PolyFp::constant(p, 1));
    let rational = h.gcd(&s).degree().unwrap_or(0) as u64;
    1 + 2 * rational
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ellcurve::named::*;

    #[test]
    fn y2_x3_plus_1_over_f5() {
        let e = CurveOverQ::from_i64([0, 0, 0, 0, 1]).unwrap();
        assert_eq!(count_points_mod_p(&e, 5).unwrap(), (6, 0));
    }

    #[test]
    fn bsgs_matches_naive() {
        for e in [curve_67a1(), curve_37a1(), CurveOverQ::from_i64([1, 0, 1, 4, -6]).unwrap()] {
            for &p in nt::primes_up_to(3000).iter().filter(|&&p| p >= 5) {
                let Ok(fp) = e.reduce_mod(p) else { continue };
                assert_eq!(count_points_bsgs(&fp), count_points_naive(&fp), "{e:?} p={p}");
            }
        }
    }

    #[test]
    fn bad_prime_rejected() {
        assert_eq!(count_points_mod_p(&curve_67a1(), 67), Err(CurveError::BadReduction(67)));
        assert_eq!(two_torsion_dim_mod_p(&curve_67a1(), 2), Err(CurveError::EvenPrime(2)));
    }

    #[test]
    fn hasse_bound_large_primes() {
        let e = curve_67a1();
        for p in [16411u64, 65537, 1_000_003] {
            let (n, ap) = count_points_mod_p(&e, p).unwrap();
            assert!((ap * ap) as u64 <= 4 * p);
            let fp = e.reduce_mod(p).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for _ in 0..5 {
                let pt = fp.random_point(&mut rng);
                assert_eq!(fp.mul(n, pt), FpPoint::Infinity);
            }
        }
    }

    /// Sylow-2 rank from the group order and sampled point orders.
    fn sylow2_rank(fp: &CurveFp, n: u64) -> u32 {
        let k = n.trailing_zeros();
        if k == 0 {
            return 0;
        }
        let odd = n >> k;
        let mut rng = ChaCha8Rng::seed_from_u64(fp.p);
        let mut max_e = 0;
        for _ in 0..64 {
            let q = fp.mul(odd, fp.random_point(&mut rng));
            let ord = fp.order_from_multiple(q, 1 << k);
            max_e = max_e.max(ord.trailing_zeros());
        }
        if max_e == k {
            1
        } else {
            2
        }
    }

    #[test]
    fn two_torsion_agrees_with_sylow_structure() {
        let curves = [
            curve_67a1(),
            curve_37a1(),
            CurveOverQ::from_i64([0, 0, 0, -1, 0]).unwrap(),
            CurveOverQ::from_i64([1, 0, 1, 4, -6]).unwrap(),
            CurveOverQ::from_i64([0, 0, 0, -7, 10]).unwrap(),
        ];
        let mut checked = 0;
        for e in &curves {
            for &p in nt::primes_up_to(400).iter().skip(1) {
                let Ok(fp) = e.reduce_mod(p) else { continue };
                let n = count_points_naive(&fp);
                assert_eq!(two_torsion_dim_mod_p(e, p).unwrap(), sylow2_rank(&fp, n), "{e:?} p={p}");
                checked += 1;
            }
        }
        assert!(checked >= 100);
    }

    #[test]
    fn division_poly_counts_match_enumeration() {
        // count l-torsion points directly for small p
        for e in [curve_67a1(), curve_37a1(), CurveOverQ::from_i64([0, -1, 1, -10, -20]).unwrap()] {
            for ell in [3u64, 5, 7] {
                for &p in nt::primes_up_to(300).iter().filter(|&&p| p > 2 && p != ell) {
                    let Ok(fp) = e.reduce_mod(p) else { continue };
                    let mut direct = 1;
                    for x in 0..p {
                        for y in 0..p {
                            let pt = FpPoint::Affine(x, y);
                            if fp.contains(pt) && fp.mul(ell, pt) == FpPoint::Infinity {
                                direct += 1;
                            }
                        }
                    }
                    assert_eq!(ell_torsion_count_by_division_poly(&fp, ell), direct, "{e:?} l={ell} p={p}");
                }
            }
        }
    }
}
