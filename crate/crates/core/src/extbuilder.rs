//! Quadratic extensions with prescribed ramification and splitting.
//!
//! Over Q an extension is a squarefree twist parameter `D`; over a quadratic
//! base `Q(sqrt m)` it is a Kummer generator `beta = a + b w` searched
//! coordinate-wise, with local behaviour read off from valuations and local
//! square tests.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decstr;
use crate::ellcurve::{CurveError, CurveOverQ, QuadElem, QuadField};
use crate::nt;
use crate::primeclass::{classify_prime, ClassKind, Place, SigmaSet};

pub const DEFAULT_D_BOUND: u64 = 1_000_000;
pub const DEFAULT_BETA_BOUND: u64 = 10_000;

#[derive(Debug, Error)]
pub enum ExtError {
    #[error("search exhausted: {found} admissible candidates up to bound {bound}, needed {wanted}")]
    SearchExhausted { bound: u64, found: usize, wanted: usize },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("unimplemented: {0}")]
    Unimplemented(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

/// Ring of integers `Z[w]` with `w = sqrt m` or `(1 + sqrt m)/2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegralBasis {
    Sqrt,
    HalfInteger,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadraticFieldData {
    #[serde(with = "decstr")]
    pub m: i64,
    #[serde(with = "decstr")]
    pub disc: i64,
    pub basis: IntegralBasis,
}

/// Element `a + b w` in the integral basis.
pub type Elem = (i128, i128);

impl QuadraticFieldData {
    pub fn new(m: i64) -> Result<Self, ExtError> {
        if m == 0 || m == 1 || !nt::is_squarefree_i64(m) {
            return Err(ExtError::InvalidField(format!("{m} is not a squarefree integer other than 0, 1")));
        }
        let (disc, basis) = if m.rem_euclid(4) == 1 { (m, IntegralBasis::HalfInteger) } else { (4 * m, IntegralBasis::Sqrt) };
        Ok(QuadraticFieldData { m, disc, basis })
    }

    /// `(c1, c0)` with `w^2 + c1 w + c0 = 0`.
    pub fn omega_poly(&self) -> (i128, i128) {
        let m = self.m as i128;
        match self.basis {
            IntegralBasis::Sqrt => (0, -m),
            IntegralBasis::HalfInteger => (-1, -(m - 1) / 4),
        }
    }

    pub fn mul(&self, x: Elem, y: Elem) -> Elem {
        let (c1, c0) = self.omega_poly();
        let bd = x.1 * y.1;
        (x.0 * y.0 - c0 * bd, x.0 * y.1 + x.1 * y.0 - c1 * bd)
    }

    pub fn norm(&self, x: Elem) -> i128 {
        let (c1, c0) = self.omega_poly();
        x.0 * x.0 - c1 * x.0 * x.1 + c0 * x.1 * x.1
    }

    pub fn trace(&self, x: Elem) -> i128 {
        let (c1, _) = self.omega_poly();
        2 * x.0 - c1 * x.1
    }

    pub fn is_real(&self) -> bool {
        self.m > 0
    }

    /// Both real embeddings positive.
    pub fn is_totally_positive(&self, x: Elem) -> bool {
        self.is_real() && self.norm(x) > 0 && self.trace(x) > 0
    }

    /// The same element in the basis `(1, sqrt m)`.
    pub fn to_quad_elem(&self, x: Elem) -> QuadElem {
        let (a, b) = (x.0 as i64, x.1 as i64);
        match self.basis {
            IntegralBasis::Sqrt => QuadElem::from_ints(a, b, 1),
            IntegralBasis::HalfInteger => QuadElem::from_ints(2 * a + b, b, 2),
        }
    }

    pub fn quad_field(&self) -> QuadField {
        QuadField::new(self.m).expect("validated field")
    }

    /// Coefficients `[c0, c2]` of `y^4 + c2 y^2 + c0`, the minimal polynomial of
    /// `sqrt(a + b w)` over Q when irreducible.
    pub fn sqrt_min_poly(&self, x: Elem) -> [i128; 2] {
        let (c1, _) = self.omega_poly();
        [self.norm(x), c1 * x.1 - 2 * x.0]
    }

    pub fn omega_name(&self) -> &'static str {
        match self.basis {
            IntegralBasis::Sqrt => "sqrt(m)",
            IntegralBasis::HalfInteger => "(1+sqrt(m))/2",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Splitting {
    Split,
    Inert,
    Ramified,
}

/// A prime ideal of a quadratic field in two-element form `(p, w - r)`
/// (or `(p)` when inert).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimeIdeal {
    #[serde(with = "decstr")]
    pub p: u64,
    pub splitting: Splitting,
    /// `w = r mod P` for degree-one primes.
    pub residue: Option<u64>,
}

impl PrimeIdeal {
    pub fn ramification_index(&self) -> u32 {
        if self.splitting == Splitting::Ramified { 2 } else { 1 }
    }

    pub fn residue_degree(&self) -> u32 {
        if self.splitting == Splitting::Inert { 2 } else { 1 }
    }

    pub fn norm(&self) -> u64 {
        self.p.pow(self.residue_degree())
    }

    pub fn two_element_form(&self) -> String {
        match self.residue {
            Some(r) => format!("({}, w - {r})", self.p),
            None => format!("({})", self.p),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PrimeFactorization {
    Split { first: PrimeIdeal, second: PrimeIdeal },
    Inert { prime: PrimeIdeal },
    Ramified { prime: PrimeIdeal },
}

impl PrimeFactorization {
    pub fn primes(&self) -> Vec<PrimeIdeal> {
        match self {
            PrimeFactorization::Split { first, second } => vec![first.clone(), second.clone()],
            PrimeFactorization::Inert { prime } | PrimeFactorization::Ramified { prime } => vec![prime.clone()],
        }
    }
}

fn omega_roots_mod(field: &QuadraticFieldData, p: u64) -> Vec<u64> {
    let (c1, c0) = field.omega_poly();
    let c1 = c1.rem_euclid(p as i128) as u64;
    let c0 = c0.rem_euclid(p as i128) as u64;
    let f = |x: u64| nt::add_mod(nt::add_mod(nt::mul_mod(x, x, p), nt::mul_mod(c1, x, p), p), c0, p);
    if p < 64 {
        return (0..p).filter(|&x| f(x) == 0).collect();
    }
    // roots (-c1 +- s)/2 with s^2 = c1^2 - 4 c0
    let delta = nt::sub_mod(nt::mul_mod(c1, c1, p), nt::mul_mod(4, c0, p), p);
    let Some(s) = nt::sqrt_mod(delta, p) else { return Vec::new() };
    let half = nt::inv_mod(2, p).expect("odd prime");
    let mut roots: Vec<u64> = [s, (p - s) % p]
        .iter()
        .map(|&t| nt::mul_mod(nt::add_mod(p - c1 % p, t, p) % p, half, p))
        .collect();
    roots.sort_unstable();
    roots.dedup();
    debug_assert!(roots.iter().all(|&r| f(r) == 0));
    roots
}

/// Decomposition of the rational prime `p`, decided by the Kronecker symbol
/// of the field discriminant.
pub fn factor_prime_in_quadratic(field: &QuadraticFieldData, p: u64) -> PrimeFactorization {
    assert!(nt::is_prime_u64(p), "{p} is not prime");
    let roots = omega_roots_mod(field, p);
    match nt::kronecker(field.disc, p) {
        0 => PrimeFactorization::Ramified {
            prime: PrimeIdeal { p, splitting: Splitting::Ramified, residue: Some(roots[0]) },
        },
        1 => PrimeFactorization::Split {
            first: PrimeIdeal { p, splitting: Splitting::Split, residue: Some(roots[0]) },
            second: PrimeIdeal { p, splitting: Splitting::Split, residue: Some(roots[1]) },
        },
        _ => PrimeFactorization::Inert { prime: PrimeIdeal { p, splitting: Splitting::Inert, residue: None } },
    }
}

/// `v_p(n)`, with `u32::MAX` standing in for infinity at `n = 0`.
fn val_i128(mut n: i128, p: u64) -> u32 {
    if n == 0 {
        return u32::MAX;
    }
    let p = p as i128;
    let mut v = 0;
    while n % p == 0 {
        n /= p;
        v += 1;
    }
    v
}

/// `v_P(x)`, or `None` for `x = 0`.
pub fn valuation(field: &QuadraticFieldData, prime: &PrimeIdeal, x: Elem) -> Option<u32> {
    if x == (0, 0) {
        return None;
    }
    let p = prime.p;
    match prime.splitting {
        Splitting::Ramified => Some(val_i128(field.norm(x), p)),
        Splitting::Inert => Some(val_i128(x.0, p).min(val_i128(x.1, p))),
        Splitting::Split => {
            let k = val_i128(x.0, p).min(val_i128(x.1, p));
            let pk = (p as i128).pow(k);
            let y = (x.0 / pk, x.1 / pk);
            let r = prime.residue.expect("degree one") as i128;
            if (y.0 + y.1 * r).rem_euclid(p as i128) == 0 {
                Some(k + val_i128(field.norm(y), p))
            } else {
                Some(k)
            }
        }
    }
}

/// Lift the residue `r` of a split prime to a root of the `w`-polynomial
/// modulo `p^k`.
fn hensel_root(field: &QuadraticFieldData, p: u64, r: u64, k: u32) -> BigInt {
    let (c1, c0) = field.omega_poly();
    let (c1, c0) = (BigInt::from(c1), BigInt::from(c0));
    let pb = BigInt::from(p);
    let deriv = (2 * r as i128 + field.omega_poly().0).rem_euclid(p as i128) as u64;
    let inv = nt::inv_mod(deriv, p).expect("simple root");
    let mut root = BigInt::from(r);
    let mut pk = pb.clone();
    for _ in 1..k {
        let f: BigInt = &root * &root + &c1 * &root + &c0;
        let q = (&f / &pk).mod_floor(&pb);
        let t = (-(q * BigInt::from(inv))).mod_floor(&pb);
        root += t * &pk;
        pk *= &pb;
    }
    root.mod_floor(&pk)
}

/// Whether `x` is a square in the completion at `prime`.
pub fn local_square_test(field: &QuadraticFieldData, prime: &PrimeIdeal, x: Elem) -> bool {
    let v = valuation(field, prime, x).expect("local square test of zero");
    if v % 2 == 1 {
        return false;
    }
    let p = prime.p;
    match prime.splitting {
        Splitting::Split => {
            // image under the embedding into Q_p determined by the residue
            let extra = if p == 2 { 3 } else { 1 };
            let pk = BigInt::from(p).pow(v + extra);
            let root = hensel_root(field, p, prime.residue.expect("degree one"), v + extra);
            let t = (BigInt::from(x.0) + BigInt::from(x.1) * root).mod_floor(&pk);
            let u = (t / BigInt::from(p).pow(v)).to_u64().expect("small residue");
            if p == 2 {
                u % 8 == 1
            } else {
                nt::legendre(u % p, p) == 1
            }
        }
        _ if p == 2 => square_mod_two_power(field, prime, x, v),
        Splitting::Inert => {
            let pk = (p as i128).pow(v);
            let u = (x.0 / pk, x.1 / pk);
            nt::legendre(field.norm(u).rem_euclid(p as i128) as u64, p) == 1
        }
        Splitting::Ramified => {
            // x / p^k differs from x / pi^(2k) by the unit (pi^2 / p)^k, pi = w - r
            let pi = p as i128;
            let k = v / 2;
            let u = (x.0 / pi.pow(k), x.1 / pi.pow(k));
            let r = prime.residue.expect("degree one") as i128;
            let pi_sq = field.mul((-r, 1), (-r, 1));
            let unit = (pi_sq.0 / pi, pi_sq.1 / pi);
            let res = |y: Elem| nt::legendre((y.0 + y.1 * r).rem_euclid(pi) as u64, p);
            let sign = if k % 2 == 1 { res(unit) } else { 1 };
            res(u) * sign == 1
        }
    }
}

/// For the unique prime over 2: `x` is a square iff `v_P(x - y^2) >= v + 2e + 1`
/// for some integral `y`, and `y` only matters modulo `4`.
fn square_mod_two_power(field: &QuadraticFieldData, prime: &PrimeIdeal, x: Elem, v: u32) -> bool {
    let e = prime.ramification_index();
    let c = v / (2 * e);
    let four_c = 4i128.pow(c);
    let x = (x.0 / four_c, x.1 / four_c);
    let v = v - 2 * e * c;
    let target = v + 2 * e + 1;
    (0..4).any(|s| {
        (0..4).any(|t| {
            let sq = field.mul((s, t), (s, t));
            match valuation(field, prime, (x.0 - sq.0, x.1 - sq.1)) {
                None => true,
                Some(w) => w >= target,
            }
        })
    })
}

/// Behaviour demanded of the prime 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TwoBehavior {
    Split,
    Ramified,
    Unconstrained,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwistConstraints {
    #[serde(with = "decstr")]
    pub bound: u64,
    /// Odd prime divisors, all of good reduction by construction.
    pub min_good_divisors: usize,
    pub min_p0_divisors: usize,
    /// Permit divisors from P1 outside `T`.
    pub allow_p1: bool,
    /// Return the `index`-th admissible parameter in canonical order.
    pub index: usize,
    /// Override the behaviour at 2 implied by Sigma.
    pub two: Option<TwoBehavior>,
}

impl Default for TwistConstraints {
    fn default() -> Self {
        TwistConstraints { bound: DEFAULT_D_BOUND, min_good_divisors: 0, min_p0_divisors: 0, allow_p1: true, index: 0, two: None }
    }
}

impl TwistConstraints {
    /// Parameters for the first layer: two good primes from P0 dividing `D`.
    pub fn layer1(bound: u64, index: usize) -> Self {
        TwistConstraints { bound, min_good_divisors: 2, min_p0_divisors: 2, allow_p1: true, index, two: None }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub place: Place,
    /// Legendre symbol at odd primes, `D mod 8` test at 2, sign at infinity.
    pub symbol: i32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DivisorRecord {
    #[serde(with = "decstr")]
    pub prime: u64,
    pub class: ClassKind,
    pub in_t: bool,
}

/// `Q(sqrt D)` with the local behaviour that was demanded and verified.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadExtensionSpecQ {
    #[serde(with = "decstr")]
    pub d: i64,
    pub positive: bool,
    pub trivial: bool,
    pub ramified: Vec<Place>,
    pub split_verified: Vec<SplitRecord>,
    pub divisors: Vec<DivisorRecord>,
    /// Legendre symbols at the Sigma_0 primes, recorded but not constrained.
    pub sigma0_symbols: Vec<SplitRecord>,
    pub constraints: TwistConstraints,
}

fn ramified_places_of(d: i64) -> Vec<Place> {
    let mut out = Vec::new();
    if d.rem_euclid(4) != 1 {
        out.push(Place::Prime(2));
    }
    for (p, _) in nt::factor_u64(d.unsigned_abs()) {
        if p != 2 {
            out.push(Place::Prime(p));
        }
    }
    out
}

fn split_symbol(d: i64, place: Place) -> i32 {
    match place {
        Place::Infinity => d.signum() as i32,
        Place::Prime(2) => {
            if d.rem_euclid(8) == 1 {
                1
            } else if d.rem_euclid(8) == 5 {
                -1
            } else {
                0
            }
        }
        Place::Prime(p) => nt::kronecker(d, p),
    }
}

impl QuadExtensionSpecQ {
    /// Recompute every recorded local fact from `D` alone.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let d = self.d;
        if d == 0 || !nt::is_squarefree_i64(d) {
            out.push(format!("D = {d} is not squarefree"));
            return out;
        }
        if self.positive != (d > 0) {
            out.push("sign flag does not match D".into());
        }
        if self.trivial != (d == 1) {
            out.push("trivial flag does not match D".into());
        }
        if ramified_places_of(d) != self.ramified {
            out.push(format!("ramified set {:?} differs from the one of D = {d}", self.ramified));
        }
        for r in self.split_verified.iter().chain(&self.sigma0_symbols) {
            let s = split_symbol(d, r.place);
            if s != r.symbol {
                out.push(format!("recorded symbol {} at {} but D gives {s}", r.symbol, r.place));
            }
        }
        for r in &self.split_verified {
            if r.symbol != 1 {
                out.push(format!("{} does not split", r.place));
            }
        }
        let odd: Vec<u64> = nt::factor_u64(d.unsigned_abs()).into_iter().map(|(p, _)| p).filter(|&p| p != 2).collect();
        let recorded: Vec<u64> = self.divisors.iter().map(|r| r.prime).collect();
        if odd != recorded {
            out.push(format!("divisor list {recorded:?} differs from {odd:?}"));
        }
        out
    }
}

/// Smallest admissible squarefree `D` (ties broken toward `D > 0`) such that
/// `Q(sqrt D)` is ramified at `T` plus auxiliary primes from P0 (or P1 when
/// allowed) and split at every place of `Sigma - Sigma_0`.
pub fn find_twist_parameter(
    curve: &CurveOverQ,
    ell: u64,
    t: &[u64],
    sigma: &SigmaSet,
    c: &TwistConstraints,
) -> Result<QuadExtensionSpecQ, ExtError> {
    let mut hits = find_twist_parameters(curve, ell, t, sigma, c, 1)?;
    if hits.is_empty() {
        let found = count_twist_parameters_hint(c);
        return Err(ExtError::SearchExhausted { bound: c.bound, found, wanted: c.index + 1 });
    }
    Ok(hits.remove(0))
}

fn count_twist_parameters_hint(c: &TwistConstraints) -> usize {
    // the batch search stops early, so it only knows that fewer than index + 1 exist
    c.index
}

/// Up to `count` admissible parameters starting at position `c.index` of the
/// canonical order; fewer are returned when the bound is reached.
pub fn find_twist_parameters(
    curve: &CurveOverQ,
    ell: u64,
    t: &[u64],
    sigma: &SigmaSet,
    c: &TwistConstraints,
    count: usize,
) -> Result<Vec<QuadExtensionSpecQ>, ExtError> {
    if ell != 2 {
        return Err(ExtError::Unimplemented(format!(
            "cyclic extensions of degree {ell} over Q are not constructed; only quadratic layers are supported"
        )));
    }
    let e = curve.minimal_model();
    for &p in t {
        if sigma.contains_prime(p) {
            return Err(ExtError::Precondition(format!("{p} lies in Sigma")));
        }
        let k = classify_prime(&e, sigma, p)?.class;
        if !matches!(k, ClassKind::P0 | ClassKind::P1) {
            return Err(ExtError::Precondition(format!("{p} is {k:?}, not in P0 or P1")));
        }
    }
    let positive_only = sigma.places.contains(&Place::Infinity);
    let check = |d: i64| check_twist_parameter(&e, t, sigma, c, d);

    let block = 1u64 << 14;
    let mut hits = Vec::new();
    let mut start = 1u64;
    while start <= c.bound && hits.len() < c.index + count {
        let end = (start + block - 1).min(c.bound);
        let found: Vec<QuadExtensionSpecQ> = (start..=end)
            .into_par_iter()
            .flat_map_iter(|n| {
                let signs: &[i64] = if positive_only { &[1] } else { &[1, -1] };
                signs.iter().map(move |&s| s * n as i64).collect::<Vec<_>>()
            })
            .map(check)
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .flatten()
            .collect();
        hits.extend(found);
        start = end + 1;
    }
    let out: Vec<QuadExtensionSpecQ> = hits.into_iter().skip(c.index).take(count).collect();
    debug_assert!(out.iter().all(|s| s.violations().is_empty()));
    Ok(out)
}

/// The admissibility test of [`find_twist_parameters`] for a single `d`;
/// `curve` must be the minimal model and every prime of `t` already checked.
pub fn check_twist_parameter(
    curve: &CurveOverQ,
    t: &[u64],
    sigma: &SigmaSet,
    c: &TwistConstraints,
    d: i64,
) -> Result<Option<QuadExtensionSpecQ>, ExtError> {
    if d == 0 || (d < 0 && sigma.places.contains(&Place::Infinity)) {
        return Ok(None);
    }
    let two = c.two.unwrap_or(if sigma.contains_prime(2) { TwoBehavior::Split } else { TwoBehavior::Unconstrained });
    let odd_split: Vec<u64> = sigma.split_primes().into_iter().filter(|&p| p != 2).collect();
    match two {
        TwoBehavior::Split if d.rem_euclid(8) != 1 => return Ok(None),
        TwoBehavior::Ramified if d.rem_euclid(4) == 1 => return Ok(None),
        _ => {}
    }
    let fac = nt::factor_u64(d.unsigned_abs());
    if fac.iter().any(|&(_, k)| k > 1) {
        return Ok(None);
    }
    let odd: Vec<u64> = fac.iter().map(|&(p, _)| p).filter(|&p| p != 2).collect();
    if !t.iter().all(|p| odd.contains(p)) {
        return Ok(None);
    }
    let mut divisors = Vec::new();
    for &p in &odd {
        if sigma.contains_prime(p) {
            return Ok(None);
        }
        let class = classify_prime(curve, sigma, p)?.class;
        let in_t = t.contains(&p);
        let ok = in_t || class == ClassKind::P0 || (c.allow_p1 && class == ClassKind::P1);
        if !ok {
            return Ok(None);
        }
        divisors.push(DivisorRecord { prime: p, class, in_t });
    }
    if odd.len() < c.min_good_divisors || divisors.iter().filter(|r| r.class == ClassKind::P0).count() < c.min_p0_divisors {
        return Ok(None);
    }
    if odd_split.iter().any(|&p| nt::kronecker(d, p) != 1) {
        return Ok(None);
    }
    let mut split_verified = Vec::new();
    for pl in &sigma.places {
        let demanded = match pl {
            Place::Infinity => true,
            Place::Prime(2) => two == TwoBehavior::Split,
            Place::Prime(p) => !sigma.sigma0.contains(p),
        };
        if demanded {
            split_verified.push(SplitRecord { place: *pl, symbol: split_symbol(d, *pl) });
        }
    }
    let sigma0_symbols = sigma.sigma0.iter().map(|&q| SplitRecord { place: Place::Prime(q), symbol: split_symbol(d, Place::Prime(q)) }).collect();
    Ok(Some(QuadExtensionSpecQ {
        d,
        positive: d > 0,
        trivial: d == 1,
        ramified: ramified_places_of(d),
        split_verified,
        divisors,
        sigma0_symbols,
        constraints: c.clone(),
    }))
}

/// How a rational prime may carry ramification of the relative extension:
/// `None` forbids it, `Some(true)` counts toward the required number of
/// distinct residue characteristics, `Some(false)` is allowed but not counted.
pub type RamificationPolicy<'a> = &'a (dyn Fn(u64) -> Option<bool> + Sync);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BetaRequirements {
    /// Split rational prime whose first prime ideal must ramify while its
    /// conjugate splits.
    pub witness_prime: Option<u64>,
    pub min_counted_chars: usize,
    pub split_at_two: bool,
    pub totally_positive: bool,
    /// Only search `b = 0`.
    pub rational_only: bool,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessRecord {
    #[serde(with = "decstr")]
    pub p: u64,
    pub ramified_prime: PrimeIdeal,
    pub unramified_prime: PrimeIdeal,
    pub v_ramified: u32,
    pub v_unramified: u32,
    pub unramified_splits: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RamifiedRecord {
    pub prime: PrimeIdeal,
    pub valuation: u32,
    pub counted: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAtRecord {
    pub place: String,
    pub splits: bool,
}

/// `K(sqrt beta)` over the quadratic base `K`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelativeQuadSpec {
    pub base: QuadraticFieldData,
    #[serde(with = "decstr")]
    pub a: i64,
    #[serde(with = "decstr")]
    pub b: i64,
    #[serde(with = "decstr")]
    pub norm: i128,
    /// `[c0, c2]` of `y^4 + c2 y^2 + c0`.
    #[serde(with = "decstr::vec")]
    pub min_poly: Vec<i128>,
    pub witness: Option<WitnessRecord>,
    pub ramified: Vec<RamifiedRecord>,
    pub split_at: Vec<SplitAtRecord>,
    pub totally_positive: bool,
    pub trivial: bool,
    pub requirements: BetaRequirements,
    #[serde(with = "decstr")]
    pub search_bound: u64,
}

impl RelativeQuadSpec {
    pub fn beta(&self) -> Elem {
        (self.a as i128, self.b as i128)
    }
}

/// Prime ideals with odd valuation in `x`.
pub fn odd_valuation_primes(field: &QuadraticFieldData, x: Elem) -> Option<Vec<(PrimeIdeal, u32)>> {
    let n = field.norm(x).unsigned_abs();
    let n = u64::try_from(n).ok()?;
    let mut out = Vec::new();
    for (r, _) in nt::factor_u64(n) {
        for pr in factor_prime_in_quadratic(field, r).primes() {
            let v = valuation(field, &pr, x).expect("nonzero");
            if v % 2 == 1 {
                out.push((pr, v));
            }
        }
    }
    Some(out)
}

fn witness_for(field: &QuadraticFieldData, p: u64, x: Elem) -> Option<WitnessRecord> {
    if !nt::is_prime_u64(p) {
        return None;
    }
    let PrimeFactorization::Split { first, second } = factor_prime_in_quadratic(field, p) else { return None };
    let v1 = valuation(field, &first, x)?;
    let v2 = valuation(field, &second, x)?;
    let splits = v2 % 2 == 0 && local_square_test(field, &second, x);
    Some(WitnessRecord { p, ramified_prime: first, unramified_prime: second, v_ramified: v1, v_unramified: v2, unramified_splits: splits })
}

fn split_records(field: &QuadraticFieldData, x: Elem) -> Vec<SplitAtRecord> {
    let mut out = Vec::new();
    if field.is_real() {
        let signs = field.quad_field().embed_signs(&field.to_quad_elem(x));
        out.push(SplitAtRecord { place: "inf+".into(), splits: signs.0 > 0 });
        out.push(SplitAtRecord { place: "inf-".into(), splits: signs.1 > 0 });
    }
    for pr in factor_prime_in_quadratic(field, 2).primes() {
        out.push(SplitAtRecord { place: pr.two_element_form(), splits: local_square_test(field, &pr, x) });
    }
    out
}

/// Check one candidate against `req`, returning its full record when admissible.
pub fn check_beta(
    field: &QuadraticFieldData,
    req: &BetaRequirements,
    policy: RamificationPolicy,
    bound: u64,
    x: Elem,
) -> Option<RelativeQuadSpec> {
    if x == (0, 0) {
        return None;
    }
    let totally_positive = field.is_totally_positive(x);
    if req.totally_positive && !totally_positive {
        return None;
    }
    let witness = match req.witness_prime {
        Some(p) => {
            let w = witness_for(field, p, x)?;
            if w.v_ramified % 2 == 0 || !w.unramified_splits {
                return None;
            }
            Some(w)
        }
        None => None,
    };
    let split_at = split_records(field, x);
    if req.split_at_two && split_at.iter().any(|s| !s.place.starts_with("inf") && !s.splits) {
        return None;
    }
    let odd = odd_valuation_primes(field, x)?;
    let mut ramified = Vec::new();
    let mut counted_chars = std::collections::BTreeSet::new();
    for (pr, v) in odd {
        if pr.splitting != Splitting::Split {
            return None;
        }
        let counted = policy(pr.p)?;
        if counted {
            counted_chars.insert(pr.p);
        }
        ramified.push(RamifiedRecord { prime: pr, valuation: v, counted });
    }
    if counted_chars.len() < req.min_counted_chars {
        return None;
    }
    let trivial = field.quad_field().is_square(&field.to_quad_elem(x));
    let mp = field.sqrt_min_poly(x);
    Some(RelativeQuadSpec {
        base: field.clone(),
        a: x.0 as i64,
        b: x.1 as i64,
        norm: field.norm(x),
        min_poly: mp.to_vec(),
        witness,
        ramified,
        split_at,
        totally_positive,
        trivial,
        requirements: req.clone(),
        search_bound: bound,
    })
}

/// The full record of `x` without any admissibility filtering; `None` only
/// for zero or when the norm does not fit the factoring range.
pub fn describe_beta(
    field: &QuadraticFieldData,
    req: &BetaRequirements,
    policy: RamificationPolicy,
    bound: u64,
    x: Elem,
) -> Option<RelativeQuadSpec> {
    if x == (0, 0) {
        return None;
    }
    let ramified = odd_valuation_primes(field, x)?
        .into_iter()
        .map(|(pr, v)| {
            let counted = policy(pr.p).unwrap_or(false);
            RamifiedRecord { prime: pr, valuation: v, counted }
        })
        .collect();
    Some(RelativeQuadSpec {
        base: field.clone(),
        a: x.0 as i64,
        b: x.1 as i64,
        norm: field.norm(x),
        min_poly: field.sqrt_min_poly(x).to_vec(),
        witness: req.witness_prime.and_then(|p| witness_for(field, p, x)),
        ramified,
        split_at: split_records(field, x),
        totally_positive: field.is_totally_positive(x),
        trivial: field.quad_field().is_square(&field.to_quad_elem(x)),
        requirements: req.clone(),
        search_bound: bound,
    })
}

fn signed_order(bound: u64) -> impl Iterator<Item = i64> + Clone {
    std::iter::once(0).chain((1..=bound as i64).flat_map(|k| [k, -k]))
}

/// Search `beta = a + b w`, `|a|, |b| <= bound`, in the order `b = 0, 1, -1, ...`
/// then `a = 1, -1, 2, ...`, returning the `req.index`-th admissible one.
pub fn find_relative_beta(
    base: &QuadraticFieldData,
    req: &BetaRequirements,
    bound: u64,
    policy: RamificationPolicy,
) -> Result<RelativeQuadSpec, ExtError> {
    if let Some(p) = req.witness_prime {
        if !matches!(factor_prime_in_quadratic(base, p), PrimeFactorization::Split { .. }) {
            return Err(ExtError::Precondition(format!("witness prime {p} does not split in Q(sqrt {})", base.m)));
        }
    }
    let bs: Vec<i64> = if req.rational_only { vec![0] } else { signed_order(bound).collect() };
    let residue = req.witness_prime.map(|p| {
        let PrimeFactorization::Split { first, .. } = factor_prime_in_quadratic(base, p) else { unreachable!() };
        (p as i128, first.residue.unwrap() as i128)
    });
    let mut hits: Vec<RelativeQuadSpec> = Vec::new();
    for chunk in bs.chunks(32) {
        let found: Vec<Vec<RelativeQuadSpec>> = chunk
            .par_iter()
            .map(|&b| {
                let mut local = Vec::new();
                for a in signed_order(bound).skip(1) {
                    if let Some((p, r)) = residue {
                        if (a as i128 + b as i128 * r).rem_euclid(p) != 0 {
                            continue;
                        }
                    }
                    if let Some(s) = check_beta(base, req, policy, bound, (a as i128, b as i128)) {
                        local.push(s);
                        if local.len() > req.index {
                            break;
                        }
                    }
                }
                local
            })
            .collect();
        hits.extend(found.into_iter().flatten());
        if hits.len() > req.index {
            break;
        }
    }
    let found = hits.len();
    hits.into_iter().nth(req.index).ok_or(ExtError::SearchExhausted { bound, found, wanted: req.index + 1 })
}

/// Recompute every recorded local fact of a relative spec from `(m, a, b)`.
pub fn relative_violations(spec: &RelativeQuadSpec, policy: RamificationPolicy) -> Vec<String> {
    let mut out = Vec::new();
    let field = match QuadraticFieldData::new(spec.base.m) {
        Ok(f) => f,
        Err(e) => return vec![e.to_string()],
    };
    if field != spec.base {
        out.push("base field data inconsistent with m".into());
    }
    let x = spec.beta();
    if x == (0, 0) {
        return vec!["beta is zero".into()];
    }
    if field.norm(x) != spec.norm {
        out.push("norm mismatch".into());
    }
    if field.sqrt_min_poly(x).to_vec() != spec.min_poly {
        out.push("minimal polynomial mismatch".into());
    }
    if field.is_totally_positive(x) != spec.totally_positive {
        out.push("total positivity flag mismatch".into());
    }
    if spec.requirements.totally_positive && !spec.totally_positive {
        out.push("beta is not totally positive".into());
    }
    let trivial = field.quad_field().is_square(&field.to_quad_elem(x));
    if trivial != spec.trivial {
        out.push("triviality flag mismatch".into());
    }
    match (&spec.witness, spec.requirements.witness_prime) {
        (Some(w), _) => match witness_for(&field, w.p, x) {
            Some(fresh) if &fresh == w => {
                if w.v_ramified % 2 == 0 {
                    out.push(format!("witness {} has even valuation {} so it does not ramify", w.ramified_prime.two_element_form(), w.v_ramified));
                }
                if !w.unramified_splits {
                    out.push(format!("witness {} ramifies or stays inert", w.unramified_prime.two_element_form()));
                }
            }
            Some(fresh) => out.push(format!(
                "witness record disagrees with recomputation: recorded v = ({}, {}), recomputed v = ({}, {})",
                w.v_ramified, w.v_unramified, fresh.v_ramified, fresh.v_unramified
            )),
            None => out.push(format!("witness {} is not a prime that splits in the base", w.p)),
        },
        (None, Some(p)) => out.push(format!("witness at {p} required but missing")),
        (None, None) => {}
    }
    match odd_valuation_primes(&field, x) {
        Some(odd) => {
            let fresh: Vec<(PrimeIdeal, u32)> = spec.ramified.iter().map(|r| (r.prime.clone(), r.valuation)).collect();
            if fresh != odd {
                out.push("ramified set differs from the odd-valuation primes of beta".into());
            }
            let mut chars = std::collections::BTreeSet::new();
            for r in &spec.ramified {
                match policy(r.prime.p) {
                    None => out.push(format!("ramification at {} is not permitted", r.prime.two_element_form())),
                    Some(c) => {
                        if c != r.counted {
                            out.push(format!("counted flag wrong at {}", r.prime.p));
                        }
                        if c {
                            chars.insert(r.prime.p);
                        }
                    }
                }
            }
            if chars.len() < spec.requirements.min_counted_chars {
                out.push(format!("only {} counted residue characteristics ramify", chars.len()));
            }
        }
        None => out.push("norm too large to factor".into()),
    }
    let split = split_records(&field, x);
    if split != spec.split_at {
        out.push("split record differs from recomputation".into());
    }
    if spec.requirements.split_at_two {
        for s in &split {
            if !s.splits {
                out.push(format!("place {} does not split", s.place));
            }
        }
    }
    out
}

/// Whether `n * beta` is a square in the base for some rational `n`
/// supported on `primes` (with sign), i.e. `K(sqrt beta) = K(sqrt n)`.
pub fn rational_descent(field: &QuadraticFieldData, x: Elem, primes: &[u64]) -> Option<i64> {
    let k = field.quad_field();
    let beta = field.to_quad_elem(x);
    for mask in 0u64..(1 << primes.len()) {
        let mut n = BigInt::one();
        for (i, &p) in primes.iter().enumerate() {
            if mask >> i & 1 == 1 {
                n *= p;
            }
        }
        for sign in [1, -1] {
            let nn: BigInt = &n * sign;
            let q = num_rational::BigRational::from_integer(nn.clone());
            if k.is_square(&beta.scale(&q)) {
                return nn.to_i64();
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ellcurve::named::curve_67a1;
    use crate::primeclass::build_sigma;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Hermite normal form determinant of the lattice spanned by `gens` in
    /// `Z^2`, i.e. the index in `Z[w]`.
    fn lattice_index(gens: &[Elem]) -> i128 {
        let mut v: Vec<Elem> = gens.to_vec();
        // column 1 gcd
        let mut g = (0i128, 0i128);
        for &x in &v {
            if x.1 != 0 {
                g = if g.1 == 0 { x } else { combine(g, x) };
            }
        }
        // reduce first coordinates of vectors with zero second coordinate
        let mut first = 0i128;
        for x in v.iter_mut() {
            if g.1 != 0 {
                let q = x.1 / g.1;
                *x = (x.0 - q * g.0, x.1 - q * g.1);
            }
            first = first.gcd(&x.0);
        }
        (first * g.1).abs()
    }

    fn combine(x: Elem, y: Elem) -> Elem {
        let e = x.1.extended_gcd(&y.1);
        (e.x * x.0 + e.y * y.0, e.gcd)
    }

    #[test]
    fn split_prime_ideals_have_norm_p_and_multiply_to_p() {
        for m in [2i64, 3, 5, 13, 134, -1, -7, 17, 2 * 4289] {
            let f = QuadraticFieldData::new(m).unwrap();
            for p in nt::primes_up_to(60) {
                let fac = factor_prime_in_quadratic(&f, p);
                for pr in fac.primes() {
                    if let Some(r) = pr.residue {
                        let g = (-(r as i128), 1);
                        let gens = [(p as i128, 0), (0, p as i128), g, f.mul(g, (0, 1))];
                        assert_eq!(lattice_index(&gens), p as i128, "m={m} p={p}");
                    }
                }
                match fac {
                    PrimeFactorization::Split { first, second } => {
                        assert_eq!(nt::kronecker(f.disc, p), 1);
                        assert_ne!(first.residue, second.residue);
                        let (g1, g2) = ((-(first.residue.unwrap() as i128), 1), (-(second.residue.unwrap() as i128), 1));
                        let pp = p as i128;
                        let prod = [
                            (pp * pp, 0),
                            f.mul((pp, 0), g1),
                            f.mul((pp, 0), g2),
                            f.mul(g1, g2),
                            f.mul((0, pp * pp), (1, 0)),
                            f.mul(f.mul((pp, 0), g1), (0, 1)),
                            f.mul(f.mul((pp, 0), g2), (0, 1)),
                            f.mul(f.mul(g1, g2), (0, 1)),
                        ];
                        // the product has index p^2 and contains p, so it is (p)
                        assert_eq!(lattice_index(&prod), pp * pp);
                        assert_eq!(f.mul(g1, g2).0.rem_euclid(pp), 0);
                        assert_eq!(f.mul(g1, g2).1.rem_euclid(pp), 0);
                    }
                    PrimeFactorization::Ramified { .. } => assert_eq!(f.disc.rem_euclid(p as i64), 0),
                    PrimeFactorization::Inert { .. } => assert_eq!(nt::kronecker(f.disc, p), -1),
                }
            }
        }
    }

    #[test]
    fn valuation_matches_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for m in [2i64, 5, 13, -3, 6] {
            let f = QuadraticFieldData::new(m).unwrap();
            for _ in 0..300 {
                let x = (rng.gen_range(-500..500), rng.gen_range(-500..500));
                if x == (0, 0) {
                    continue;
                }
                let n = f.norm(x);
                for (p, e) in nt::factor_u64(n.unsigned_abs() as u64) {
                    let total: u32 = factor_prime_in_quadratic(&f, p)
                        .primes()
                        .iter()
                        .map(|pr| pr.residue_degree() * valuation(&f, pr, x).unwrap())
                        .sum();
                    assert_eq!(total, e, "m={m} x={x:?} p={p}");
                }
            }
        }
    }

    /// Squares of the residue field, enumerated.
    fn residue_squares(f: &QuadraticFieldData, pr: &PrimeIdeal) -> Vec<Elem> {
        let p = pr.p as i128;
        let mut out = Vec::new();
        match pr.residue {
            Some(r) => {
                for c in 1..p {
                    out.push(((c * c).rem_euclid(p), 0));
                }
                let _ = r;
            }
            None => {
                for c in 0..p {
                    for d in 0..p {
                        if (c, d) != (0, 0) {
                            let s = f.mul((c, d), (c, d));
                            out.push((s.0.rem_euclid(p), s.1.rem_euclid(p)));
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn local_square_matches_residue_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for m in [2i64, 5, 7, 13, -1] {
            let f = QuadraticFieldData::new(m).unwrap();
            for p in [3u64, 5, 7, 11, 13, 17] {
                for pr in factor_prime_in_quadratic(&f, p).primes() {
                    let squares = residue_squares(&f, &pr);
                    for _ in 0..100 {
                        let x: Elem = (rng.gen_range(-200..200), rng.gen_range(-200..200));
                        if valuation(&f, &pr, x) != Some(0) {
                            continue;
                        }
                        let pi = p as i128;
                        let red = match pr.residue {
                            Some(r) => ((x.0 + x.1 * r as i128).rem_euclid(pi), 0),
                            None => (x.0.rem_euclid(pi), x.1.rem_euclid(pi)),
                        };
                        assert_eq!(local_square_test(&f, &pr, x), squares.contains(&red), "m={m} p={p} x={x:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn squares_are_local_squares_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for m in [2i64, 3, 5, 17, 2 * 4289, -7] {
            let f = QuadraticFieldData::new(m).unwrap();
            for _ in 0..60 {
                let y: Elem = (rng.gen_range(-40..40), rng.gen_range(-40..40));
                if y == (0, 0) {
                    continue;
                }
                let x = f.mul(y, y);
                for p in [2u64, 3, 5, 7, 11, 13] {
                    for pr in factor_prime_in_quadratic(&f, p).primes() {
                        assert!(local_square_test(&f, &pr, x), "m={m} y={y:?} p={p}");
                    }
                }
                // an odd power of a split/ramified prime is never a square
                for pr in factor_prime_in_quadratic(&f, 3).primes() {
                    if let Some(r) = pr.residue {
                        let pi = f.mul(x, (-(r as i128), 1));
                        if valuation(&f, &pr, pi).unwrap() % 2 == 1 {
                            assert!(!local_square_test(&f, &pr, pi));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn two_adic_squares_known_cases() {
        // Q_2(sqrt 2): 2 is a square, -1 is not
        let f = QuadraticFieldData::new(2).unwrap();
        let p2 = factor_prime_in_quadratic(&f, 2).primes()[0].clone();
        assert!(local_square_test(&f, &p2, (2, 0)));
        assert!(!local_square_test(&f, &p2, (-1, 0)));
        assert!(local_square_test(&f, &p2, (17, 0)));
        assert!(!local_square_test(&f, &p2, (3, 0)));
        // Q_2(sqrt 5) is the unramified quadratic extension: 5 and -3 are squares, -1 is not
        let f = QuadraticFieldData::new(5).unwrap();
        let p2 = factor_prime_in_quadratic(&f, 2).primes()[0].clone();
        assert_eq!(p2.splitting, Splitting::Inert);
        assert!(local_square_test(&f, &p2, (5, 0)));
        assert!(local_square_test(&f, &p2, (-3, 0)));
        assert!(!local_square_test(&f, &p2, (-1, 0)));
        assert!(!local_square_test(&f, &p2, (2, 0)));
        // Q(sqrt 17): 2 splits, and the embeddings send sqrt 17 to the two 2-adic roots
        let f = QuadraticFieldData::new(17).unwrap();
        for pr in factor_prime_in_quadratic(&f, 2).primes() {
            assert!(local_square_test(&f, &pr, (17, 0)));
            assert!(!local_square_test(&f, &pr, (3, 0)));
        }
    }

    #[test]
    fn rational_beta_has_equal_conjugate_valuations() {
        let f = QuadraticFieldData::new(2 * 4289).unwrap();
        for p in nt::primes_up_to(200) {
            if let PrimeFactorization::Split { first, second } = factor_prime_in_quadratic(&f, p) {
                for n in 1..300i128 {
                    assert_eq!(valuation(&f, &first, (n, 0)), valuation(&f, &second, (n, 0)));
                }
            }
        }
    }

    fn sigma_67_twist2() -> (CurveOverQ, SigmaSet) {
        let e2 = curve_67a1().quadratic_twist(&BigInt::from(2)).unwrap().minimal_model();
        let s = build_sigma(&e2, 2).unwrap();
        (e2, s)
    }

    #[test]
    fn twist_parameter_for_67a1_matches_scan() {
        let (e2, sigma) = sigma_67_twist2();
        assert_eq!(sigma.sigma0.iter().copied().collect::<Vec<_>>(), vec![67]);
        let c = TwistConstraints::layer1(10_000, 0);
        let spec = find_twist_parameter(&e2, 2, &[], &sigma, &c).unwrap();
        assert!(spec.violations().is_empty());
        // oracle: independent scan
        let oracle = (1..10_000i64)
            .find(|&d| {
                if d % 8 != 1 || !nt::is_squarefree_i64(d) {
                    return false;
                }
                let ps: Vec<u64> = nt::factor_u64(d as u64).into_iter().map(|x| x.0).collect();
                if ps.contains(&67) {
                    return false;
                }
                let dims: Vec<u32> = ps.iter().map(|&p| crate::ellcurve::two_torsion_dim_mod_p(&e2, p).unwrap()).collect();
                dims.iter().all(|&k| k <= 1) && dims.iter().filter(|&&k| k == 0).count() >= 2
            })
            .unwrap();
        assert_eq!(spec.d, oracle);
        assert!(spec.positive && spec.d % 8 == 1);
        let next = find_twist_parameter(&e2, 2, &[], &sigma, &TwistConstraints::layer1(10_000, 1)).unwrap();
        assert!(next.d > spec.d);
    }

    #[test]
    fn trivial_and_exhausted_and_unimplemented() {
        let (e2, sigma) = sigma_67_twist2();
        let c = TwistConstraints { bound: 100, ..Default::default() };
        let spec = find_twist_parameter(&e2, 2, &[], &sigma, &c).unwrap();
        assert_eq!(spec.d, 1);
        assert!(spec.trivial);
        let bad = TwistConstraints { bound: 50, min_good_divisors: 3, min_p0_divisors: 3, ..Default::default() };
        assert!(matches!(find_twist_parameter(&e2, 2, &[], &sigma, &bad), Err(ExtError::SearchExhausted { bound: 50, .. })));
        assert!(matches!(find_twist_parameter(&e2, 3, &[], &sigma, &c), Err(ExtError::Unimplemented(_))));
        assert!(matches!(find_twist_parameter(&e2, 2, &[67], &sigma, &c), Err(ExtError::Precondition(_))));
    }

    #[test]
    fn contradictory_split_demand_exhausts() {
        // demanding 2 split (D = 1 mod 8) and 2 ramified through the override at once is impossible;
        // emulate with T = {p} where p = 3 mod 8 forces the Legendre symbol at an added split prime
        let (e2, mut sigma) = sigma_67_twist2();
        // pick a T prime and a split prime q for which every admissible D has (D/q) = -1: q = T prime itself
        let t = (3..200u64)
            .filter(|&p| nt::is_prime_u64(p) && p != 67)
            .find(|&p| matches!(classify_prime(&e2, &sigma, p).unwrap().class, ClassKind::P0 | ClassKind::P1))
            .unwrap();
        // adding t to Sigma - Sigma_0 demands (D/t) = 1 while t | D gives (D/t) = 0
        let c = TwistConstraints { bound: 2000, ..Default::default() };
        assert!(find_twist_parameter(&e2, 2, &[t], &sigma, &c).is_ok());
        sigma.places.insert(Place::Prime(t));
        assert!(find_twist_parameter(&e2, 2, &[t], &sigma, &c).is_err());
    }

    fn odd_good(p: u64) -> Option<bool> {
        (p != 2 && p != 67).then_some(true)
    }

    #[test]
    fn relative_beta_trivial_and_witness() {
        let f = QuadraticFieldData::new(2 * 17).unwrap();
        let req = BetaRequirements {
            witness_prime: None,
            min_counted_chars: 0,
            split_at_two: true,
            totally_positive: true,
            rational_only: false,
            index: 0,
        };
        let s = find_relative_beta(&f, &req, 5, &odd_good).unwrap();
        assert_eq!((s.a, s.b), (1, 0));
        assert!(s.trivial);

        let p = (3..100u64).find(|&p| nt::is_prime_u64(p) && nt::kronecker(f.disc, p) == 1).unwrap();
        let req = BetaRequirements { witness_prime: Some(p), min_counted_chars: 2, ..req };
        let s = find_relative_beta(&f, &req, 400, &odd_good).unwrap();
        assert!(relative_violations(&s, &odd_good).is_empty(), "{:?}", relative_violations(&s, &odd_good));
        let w = s.witness.clone().unwrap();
        // independent check of the asymmetry through norms of conjugates
        let conj = (s.a as i128, -(s.b as i128));
        assert_eq!(valuation(&f, &w.ramified_prime, s.beta()), valuation(&f, &w.unramified_prime, conj));
        assert!(w.v_ramified % 2 == 1 && w.v_unramified.is_multiple_of(2));
        assert!(!s.trivial);

        let mut tampered = s.clone();
        tampered.witness.as_mut().unwrap().v_ramified += 1;
        assert!(!relative_violations(&tampered, &odd_good).is_empty());
        let mut tampered = s.clone();
        std::mem::swap(
            &mut tampered.witness.as_mut().unwrap().ramified_prime,
            &mut s.witness.clone().unwrap().unramified_prime,
        );
        assert!(!relative_violations(&tampered, &odd_good).is_empty());
    }

    #[test]
    fn rational_beta_cannot_be_a_witness() {
        let f = QuadraticFieldData::new(2 * 17).unwrap();
        let p = (3..100u64).find(|&p| nt::is_prime_u64(p) && nt::kronecker(f.disc, p) == 1).unwrap();
        let req = BetaRequirements {
            witness_prime: Some(p),
            min_counted_chars: 0,
            split_at_two: false,
            totally_positive: false,
            rational_only: true,
            index: 0,
        };
        assert!(matches!(find_relative_beta(&f, &req, 2000, &odd_good), Err(ExtError::SearchExhausted { .. })));
    }

    #[test]
    fn descent_detection() {
        let f = QuadraticFieldData::new(2 * 17).unwrap();
        assert_eq!(rational_descent(&f, (15, 0), &[3, 5]), Some(15));
        // 3 (5 + sqrt 34)^2
        assert_eq!(rational_descent(&f, (177, 30), &[2, 3, 17]), Some(3));
        assert_eq!(rational_descent(&f, (6, 1), &[2, 3, 17]), None);
    }
}
