//! Dense univariate polynomials over a prime field `F_p`, coefficients stored
//! lowest degree first and kept trimmed.

use crate::nt::{add_mod, inv_mod, mul_mod, sub_mod};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyFp {
    pub p: u64,
    pub coeffs: Vec<u64>,
}

impl PolyFp {
    pub fn new(p: u64, coeffs: Vec<u64>) -> Self {
        let mut out = PolyFp {
            p,
            coeffs: coeffs.into_iter().map(|c| c % p).collect(),
        };
        out.trim();
        out
    }

    pub fn zero(p: u64) -> Self {
        PolyFp { p, coeffs: Vec::new() }
    }

    pub fn constant(p: u64, c: u64) -> Self {
        PolyFp::new(p, vec![c])
    }

    /// The monomial `x`.
    pub fn x(p: u64) -> Self {
        PolyFp::new(p, vec![0, 1])
    }

    fn trim(&mut self) {
        while self.coeffs.last() == Some(&0) {
            self.coeffs.pop();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn eval(&self, x: u64) -> u64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0, |acc, &c| add_mod(mul_mod(acc, x, self.p), c, self.p))
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let c = (0..n)
            .map(|i| {
                add_mod(
                    *self.coeffs.get(i).unwrap_or(&0),
                    *other.coeffs.get(i).unwrap_or(&0),
                    self.p,
                )
            })
            .collect();
        PolyFp::new(self.p, c)
    }

    pub fn sub(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let c = (0..n)
            .map(|i| {
                sub_mod(
                    *self.coeffs.get(i).unwrap_or(&0),
                    *other.coeffs.get(i).unwrap_or(&0),
                    self.p,
                )
            })
            .collect();
        PolyFp::new(self.p, c)
    }

    pub fn scale(&self, k: u64) -> Self {
        PolyFp::new(self.p, self.coeffs.iter().map(|&c| mul_mod(c, k, self.p)).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return PolyFp::zero(self.p);
        }
        let p = self.p;
        let mut out = vec![0u128; self.coeffs.len() + other.coeffs.len() - 1];
        let m = p as u128;
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] = (out[i + j] + a as u128 * b as u128) % m;
            }
        }
        PolyFp::new(p, out.into_iter().map(|c| c as u64).collect())
    }

    /// Quotient and remainder; panics on division by zero.
    pub fn div_rem(&self, divisor: &Self) -> (Self, Self) {
        let p = self.p;
        let dd = divisor.degree().expect("division by zero polynomial");
        let lead_inv = inv_mod(divisor.coeffs[dd], p).expect("leading coefficient invertible");
        let mut rem = self.coeffs.clone();
        if rem.len() <= dd {
            return (PolyFp::zero(p), self.clone());
        }
        let mut quot = vec![0u64; rem.len() - dd];
        for i in (dd..rem.len()).rev() {
            let c = mul_mod(rem[i], lead_inv, p);
            if c == 0 {
                continue;
            }
            quot[i - dd] = c;
            for (j, &d) in divisor.coeffs.iter().enumerate() {
                let k = i - dd + j;
                rem[k] = sub_mod(rem[k], mul_mod(c, d, p), p);
            }
        }
        (PolyFp::new(p, quot), PolyFp::new(p, rem))
    }

    pub fn rem(&self, divisor: &Self) -> Self {
        self.div_rem(divisor).1
    }

    pub fn monic(&self) -> Self {
        match self.coeffs.last() {
            None => self.clone(),
            Some(&lead) => self.scale(inv_mod(lead, self.p).unwrap()),
        }
    }

    pub fn gcd(&self, other: &Self) -> Self {
        let (mut a, mut b) = (self.clone(), other.clone());
        while !b.is_zero() {
            let r = a.rem(&b);
            a = b;
            b = r;
        }
        a.monic()
    }

    pub fn derivative(&self) -> Self {
        let p = self.p;
        let c = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, &c)| mul_mod(c, i as u64 % p, p))
            .collect();
        PolyFp::new(p, c)
    }

    /// `self^e mod modulus`.
    pub fn pow_mod(&self, mut e: u64, modulus: &Self) -> Self {
        let mut base = self.rem(modulus);
        let mut acc = PolyFp::constant(self.p, 1).rem(modulus);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base).rem(modulus);
            }
            base = base.mul(&base).rem(modulus);
            e >>= 1;
        }
        acc
    }

    /// Number of distinct roots in `F_p`, via `deg gcd(f, x^p - x)`.
    pub fn count_distinct_roots(&self) -> usize {
        self.split_part().degree().unwrap_or(0)
    }

    /// `gcd(f, x^p - x)`: the product of the distinct linear factors of `f`.
    pub fn split_part(&self) -> Self {
        let p = self.p;
        match self.degree() {
            None => return PolyFp::zero(p),
            Some(0) => return PolyFp::constant(p, 1),
            _ => {}
        }
        let xp = PolyFp::x(p).pow_mod(p, self);
        self.gcd(&xp.sub(&PolyFp::x(p)))
    }

    /// Roots by exhaustive evaluation (test oracle and tiny fields).
    pub fn roots_brute_force(&self) -> Vec<u64> {
        (0..self.p).filter(|&x| self.eval(x) == 0).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_count_matches_brute_force() {
        for p in [3u64, 5, 7, 11, 13, 101] {
            for seed in 0..60u64 {
                let coeffs: Vec<u64> = (0..4).map(|i| (seed * 7 + i * 13 + seed * seed * i) % p).collect();
                let f = PolyFp::new(p, coeffs.iter().copied().chain([1]).collect());
                let mut brute = f.roots_brute_force();
                brute.dedup();
                assert_eq!(f.count_distinct_roots(), brute.len(), "p={p} f={:?}", f.coeffs);
            }
        }
    }

    #[test]
    fn division_identity() {
        let p = 97;
        let a = PolyFp::new(p, vec![5, 3, 0, 7, 1, 9]);
        let b = PolyFp::new(p, vec![2, 0, 4]);
        let (q, r) = a.div_rem(&b);
        assert_eq!(q.mul(&b).add(&r), a);
        assert!(r.degree().unwrap_or(0) < 2);
    }
}
