//! Integer and prime-field utilities shared by the curve, field and analytic code.
//!
//! Word-sized residues use `u64` with `u128` products; anything that can grow
//! with curve coefficients uses [`BigInt`].

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

#[inline]
pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

#[inline]
pub fn add_mod(a: u64, b: u64, m: u64) -> u64 {
    let s = a as u128 + b as u128;
    (s % m as u128) as u64
}

#[inline]
pub fn sub_mod(a: u64, b: u64, m: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        m - (b - a)
    }
}

pub fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Inverse modulo `m`, `None` when `gcd(a, m) != 1`.
pub fn inv_mod(a: u64, m: u64) -> Option<u64> {
    let (mut old_r, mut r) = (a as i128 % m as i128, m as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    if old_r != 1 {
        return None;
    }
    Some(old_s.rem_euclid(m as i128) as u64)
}

/// Reduce a big integer into `[0, m)`.
pub fn big_mod(x: &BigInt, m: u64) -> u64 {
    let r = x.mod_floor(&BigInt::from(m));
    r.to_u64().expect("residue fits in u64")
}

pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let d = (n - 1) >> (n - 1).trailing_zeros();
    let s = (n - 1).trailing_zeros();
    // deterministic for all 64-bit inputs
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Miller-Rabin on big integers. Deterministic below 3.3e24, probabilistic
/// with 20 fixed bases beyond that.
pub fn is_probable_prime(n: &BigUint) -> bool {
    if let Some(small) = n.to_u64() {
        return is_prime_u64(small);
    }
    let one = BigUint::one();
    let two = BigUint::from(2u32);
    if n.is_even() {
        return false;
    }
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    'witness: for a in [
        2u32, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71,
    ] {
        let mut x = BigUint::from(a).modpow(&d, n);
        if x == one || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// All primes `<= bound` by the sieve of Eratosthenes.
pub fn primes_up_to(bound: u64) -> Vec<u64> {
    if bound < 2 {
        return Vec::new();
    }
    let n = bound as usize;
    let mut composite = vec![false; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if !composite[i] {
            out.push(i as u64);
            let mut j = i * i;
            while j <= n {
                composite[j] = true;
                j += i;
            }
        }
    }
    out
}

/// Smallest prime factor table for `0..=bound` (entries 0 and 1 are 0).
pub fn smallest_prime_factors(bound: usize) -> Vec<u32> {
    let mut spf = vec![0u32; bound + 1];
    for i in 2..=bound {
        if spf[i] == 0 {
            let mut j = i;
            while j <= bound {
                if spf[j] == 0 {
                    spf[j] = i as u32;
                }
                j += i;
            }
        }
    }
    spf
}

/// Factorization of a word-sized integer by trial division. Returns `(p, e)`
/// pairs in increasing order.
pub fn factor_u64(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    if n < 2 {
        return out;
    }
    let mut push = |p: u64, n: &mut u64| {
        let mut e = 0;
        while (*n).is_multiple_of(p) {
            *n /= p;
            e += 1;
        }
        if e > 0 {
            out.push((p, e));
        }
    };
    push(2, &mut n);
    push(3, &mut n);
    let mut p = 5u64;
    while p.saturating_mul(p) <= n {
        push(p, &mut n);
        push(p + 2, &mut n);
        p += 6;
        if p > 1 << 20 && n > 1 && is_prime_u64(n) {
            break;
        }
    }
    if n > 1 {
        if is_prime_u64(n) {
            out.push((n, 1));
        } else {
            for (q, e) in factor_big(&BigUint::from(n)) {
                out.push((q.to_u64().unwrap(), e));
            }
            out.sort();
        }
    }
    out
}

fn pollard_brent(n: &BigUint, c: u64) -> Option<BigUint> {
    let one = BigUint::one();
    let c = BigUint::from(c);
    let f = |x: &BigUint| (x * x + &c) % n;
    let mut y = BigUint::from(2u32);
    let mut r = 1u64;
    let mut q = BigUint::one();
    let mut g = BigUint::one();
    let mut x = y.clone();
    let mut ys = y.clone();
    let m = 128u64;
    while g == one {
        x = y.clone();
        for _ in 0..r {
            y = f(&y);
        }
        let mut k = 0;
        while k < r && g == one {
            ys = y.clone();
            for _ in 0..m.min(r - k) {
                y = f(&y);
                let diff = if x > y { &x - &y } else { &y - &x };
                q = (q * diff) % n;
            }
            g = q.gcd(n);
            k += m;
        }
        r *= 2;
        if r > 1 << 26 {
            return None;
        }
    }
    if &g == n {
        loop {
            ys = f(&ys);
            let diff = if x > ys { &x - &ys } else { &ys - &x };
            g = diff.gcd(n);
            if g != one {
                break;
            }
        }
    }
    if &g == n {
        None
    } else {
        Some(g)
    }
}

/// Factorization of a positive big integer: trial division, then Pollard-Brent.
pub fn factor_big(n: &BigUint) -> Vec<(BigUint, u32)> {
    let mut out: Vec<(BigUint, u32)> = Vec::new();
    let mut n = n.clone();
    if n.is_zero() {
        return out;
    }
    let mut p = 2u64;
    while p < 10_000 {
        let bp = BigUint::from(p);
        if (&n % &bp).is_zero() {
            let mut e = 0;
            while (&n % &bp).is_zero() {
                n /= &bp;
                e += 1;
            }
            out.push((bp, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    let mut stack = vec![n];
    let mut large: Vec<BigUint> = Vec::new();
    while let Some(m) = stack.pop() {
        if m.is_one() {
            continue;
        }
        if is_probable_prime(&m) {
            large.push(m);
            continue;
        }
        let r = m.sqrt();
        if &r * &r == m {
            stack.push(r.clone());
            stack.push(r);
            continue;
        }
        let mut c = 1u64;
        loop {
            if let Some(d) = pollard_brent(&m, c) {
                stack.push(&m / &d);
                stack.push(d);
                break;
            }
            c += 1;
        }
    }
    large.sort();
    for q in large {
        match out.last_mut() {
            Some((last, e)) if *last == q => *e += 1,
            _ => out.push((q, 1)),
        }
    }
    out.sort();
    out
}

/// Prime divisors of a nonzero big integer, increasing.
pub fn prime_divisors(n: &BigInt) -> Vec<BigUint> {
    factor_big(n.magnitude()).into_iter().map(|(p, _)| p).collect()
}

/// p-adic valuation; `u32::MAX` for zero.
pub fn valuation(n: &BigInt, p: u64) -> u32 {
    if n.is_zero() {
        return u32::MAX;
    }
    let bp = BigInt::from(p);
    let mut n = n.clone();
    let mut v = 0;
    loop {
        let (q, r) = n.div_rem(&bp);
        if !r.is_zero() {
            return v;
        }
        n = q;
        v += 1;
    }
}

pub fn valuation_i64(mut n: i64, p: u64) -> u32 {
    if n == 0 {
        return u32::MAX;
    }
    let mut v = 0;
    while n % p as i64 == 0 {
        n /= p as i64;
        v += 1;
    }
    v
}

pub fn is_squarefree_i64(n: i64) -> bool {
    if n == 0 {
        return false;
    }
    factor_u64(n.unsigned_abs()).iter().all(|&(_, e)| e == 1)
}

pub fn is_squarefree(n: &BigInt) -> bool {
    !n.is_zero() && factor_big(n.magnitude()).iter().all(|(_, e)| *e == 1)
}

/// Squarefree part of a nonzero integer, keeping the sign.
pub fn squarefree_part(n: &BigInt) -> BigInt {
    let mut out = BigInt::one();
    for (p, e) in factor_big(n.magnitude()) {
        if e % 2 == 1 {
            out *= BigInt::from_biguint(Sign::Plus, p);
        }
    }
    if n.is_negative() {
        -out
    } else {
        out
    }
}

/// Exact integer square root for nonnegative perfect squares.
pub fn exact_sqrt(n: &BigInt) -> Option<BigInt> {
    if n.is_negative() {
        return None;
    }
    let r = n.sqrt();
    (&r * &r == *n).then_some(r)
}

pub fn is_square(n: &BigInt) -> bool {
    exact_sqrt(n).is_some()
}

/// Legendre symbol `(a / p)` for an odd prime `p`, returned in `{-1, 0, 1}`.
pub fn legendre(a: u64, p: u64) -> i32 {
    let a = a % p;
    if a == 0 {
        return 0;
    }
    if pow_mod(a, (p - 1) / 2, p) == 1 {
        1
    } else {
        -1
    }
}

pub fn legendre_big(a: &BigInt, p: u64) -> i32 {
    legendre(big_mod(a, p), p)
}

/// Kronecker symbol `(d / n)` for signed `d` and `n > 0`.
pub fn kronecker(d: i64, n: u64) -> i32 {
    assert!(n > 0);
    let mut result = 1i32;
    let mut n = n;
    let a = d;
    let tz = n.trailing_zeros();
    if tz > 0 {
        if a % 2 == 0 {
            return 0;
        }
        let r = a.rem_euclid(8);
        if tz % 2 == 1 && (r == 3 || r == 5) {
            result = -result;
        }
        n >>= tz;
    }
    // Jacobi symbol (a / n) for odd n
    let mut a = a.rem_euclid(n as i64) as u64;
    while a != 0 {
        while a.is_multiple_of(2) {
            a /= 2;
            let r = n % 8;
            if r == 3 || r == 5 {
                result = -result;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if a % 4 == 3 && n % 4 == 3 {
            result = -result;
        }
        a %= n;
    }
    if n == 1 {
        result
    } else {
        0
    }
}

/// A square root of `a` modulo the odd prime `p` (Tonelli-Shanks).
pub fn sqrt_mod(a: u64, p: u64) -> Option<u64> {
    let a = a % p;
    if a == 0 {
        return Some(0);
    }
    if p == 2 {
        return Some(a);
    }
    if legendre(a, p) != 1 {
        return None;
    }
    if p % 4 == 3 {
        return Some(pow_mod(a, (p + 1) / 4, p));
    }
    let s = (p - 1).trailing_zeros();
    let q = (p - 1) >> s;
    let mut z = 2;
    while legendre(z, p) != -1 {
        z += 1;
    }
    let mut m = s;
    let mut c = pow_mod(z, q, p);
    let mut t = pow_mod(a, q, p);
    let mut r = pow_mod(a, q.div_ceil(2), p);
    while t != 1 {
        let mut i = 0;
        let mut tt = t;
        while tt != 1 {
            tt = mul_mod(tt, tt, p);
            i += 1;
        }
        let b = pow_mod(c, 1 << (m - i - 1), p);
        m = i;
        c = mul_mod(b, b, p);
        t = mul_mod(t, c, p);
        r = mul_mod(r, b, p);
    }
    Some(r)
}

/// Integer roots of a monic cubic `x^3 + a x^2 + b x + c`, found exactly by
/// bisection on the monotone pieces.
pub fn integer_roots_monic_cubic(a: &BigInt, b: &BigInt, c: &BigInt) -> Vec<BigInt> {
    let eval = |x: &BigInt| ((x + a) * x + b) * x + c;
    let bound = BigInt::one() + a.abs().max(b.abs()).max(c.abs());
    // critical points of 3x^2 + 2ax + b
    let disc: BigInt = a * a * 4 - b * 12;
    let mut cuts = vec![-bound.clone()];
    if !disc.is_negative() {
        let s = disc.sqrt();
        // floor((-2a - s)/6) and ceil((-2a + s)/6), widened by one
        let six = BigInt::from(6);
        let twice_a: BigInt = a * 2;
        let lo = (-&twice_a - &s - &six).div_floor(&six);
        let hi = (-&twice_a + &s + &six).div_floor(&six);
        for x in [lo, hi] {
            if x > cuts[0] && x < bound {
                cuts.push(x);
            }
        }
    }
    cuts.push(bound.clone());
    cuts.sort();
    let mut roots = Vec::new();
    // scan a small window near every cut point directly, bisect elsewhere
    for w in cuts.windows(2) {
        let (mut lo, mut hi) = (w[0].clone(), w[1].clone());
        let flo = eval(&lo);
        let fhi = eval(&hi);
        if flo.is_zero() {
            roots.push(lo.clone());
        }
        if fhi.is_zero() {
            roots.push(hi.clone());
        }
        if flo.signum() * fhi.signum() >= BigInt::zero() {
            continue;
        }
        let increasing = flo.is_negative();
        while &hi - &lo > BigInt::one() {
            let mid: BigInt = (&lo + &hi) >> 1;
            let fm = eval(&mid);
            if fm.is_zero() {
                roots.push(mid.clone());
                break;
            }
            if fm.is_negative() == increasing {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    // points near critical values may be double roots without sign change
    for cut in &cuts {
        for delta in -2i32..=2 {
            let x = cut + delta;
            if eval(&x).is_zero() {
                roots.push(x);
            }
        }
    }
    roots.sort();
    roots.dedup();
    roots
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primality_matches_sieve() {
        let sieve = primes_up_to(5000);
        for n in 0..5000u64 {
            assert_eq!(is_prime_u64(n), sieve.binary_search(&n).is_ok(), "n = {n}");
        }
        assert!(is_prime_u64(1_000_000_007));
        assert!(!is_prime_u64(3_215_031_751)); // strong pseudoprime to 2,3,5,7
    }

    #[test]
    fn big_factorization_recovers_product() {
        let n = BigUint::from(1_000_003u64) * BigUint::from(998_244_353u64) * BigUint::from(12u32);
        let f = factor_big(&n);
        let prod = f.iter().fold(BigUint::one(), |acc, (p, e)| acc * p.pow(*e));
        assert_eq!(prod, n);
        assert!(f.iter().all(|(p, _)| is_probable_prime(p)));
        assert_eq!(f.len(), 4);
    }

    #[test]
    fn kronecker_agrees_with_legendre_on_odd_primes() {
        for &p in primes_up_to(200).iter().skip(1) {
            for d in -50i64..50 {
                assert_eq!(kronecker(d, p), legendre(d.rem_euclid(p as i64) as u64, p));
            }
        }
        // (d / 2) for odd d depends on d mod 8
        assert_eq!(kronecker(1, 2), 1);
        assert_eq!(kronecker(5, 2), -1);
        assert_eq!(kronecker(-3, 2), -1);
        assert_eq!(kronecker(17, 2), 1);
    }

    #[test]
    fn cubic_roots_exact() {
        // (x - 3)(x + 5)(x - 7) = x^3 - 5x^2 - 29x + 105
        let r = integer_roots_monic_cubic(&BigInt::from(-5), &BigInt::from(-29), &BigInt::from(105));
        assert_eq!(r, vec![BigInt::from(-5), BigInt::from(3), BigInt::from(7)]);
        // double root: (x - 2)^2 (x + 1) = x^3 - 3x^2 + 4
        let r = integer_roots_monic_cubic(&BigInt::from(-3), &BigInt::zero(), &BigInt::from(4));
        assert_eq!(r, vec![BigInt::from(-1), BigInt::from(2)]);
        // irreducible x^3 - 2
        assert!(integer_roots_monic_cubic(&BigInt::zero(), &BigInt::zero(), &BigInt::from(-2)).is_empty());
    }

    #[test]
    fn tonelli_shanks() {
        for &p in primes_up_to(300).iter().skip(1) {
            for a in 0..p {
                match sqrt_mod(a, p) {
                    Some(r) => assert_eq!(mul_mod(r, r, p), a),
                    None => assert_eq!(legendre(a, p), -1),
                }
            }
        }
    }
}
