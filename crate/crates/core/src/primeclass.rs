//! The place set Sigma, the exceptional set Sigma_0 and the partition of the
//! remaining primes by the dimension of `E(F_p)[l]`.

use std::collections::BTreeSet;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ellcurve::{
    count_points_mod_p, ell_torsion_count_by_division_poly, two_torsion_dim_mod_p, CurveError, CurveOverQ, FpPoint,
    ReductionKind,
};
use crate::nt;

/// Samples drawn before falling back to division polynomials.
pub const LOCAL_DIM_SAMPLES: usize = 32;

/// A place of Q.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Place {
    Infinity,
    Prime(u64),
}

impl fmt::Display for Place {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Place::Infinity => write!(f, "inf"),
            Place::Prime(p) => write!(f, "{p}"),
        }
    }
}

impl Serialize for Place {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Place {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == "inf" {
            return Ok(Place::Infinity);
        }
        s.parse().map(Place::Prime).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SigmaSet {
    pub ell: u64,
    pub places: BTreeSet<Place>,
    pub sigma0: BTreeSet<u64>,
    pub justification: String,
}

impl SigmaSet {
    pub fn contains_prime(&self, p: u64) -> bool {
        self.places.contains(&Place::Prime(p))
    }

    /// Finite primes of Sigma outside Sigma_0.
    pub fn split_primes(&self) -> Vec<u64> {
        self.places
            .iter()
            .filter_map(|pl| match pl {
                Place::Prime(p) if !self.sigma0.contains(p) => Some(*p),
                _ => None,
            })
            .collect()
    }

    /// Finite primes of Sigma.
    pub fn finite_primes(&self) -> Vec<u64> {
        self.places
            .iter()
            .filter_map(|pl| match pl {
                Place::Prime(p) => Some(*p),
                Place::Infinity => None,
            })
            .collect()
    }
}

const SIGMA_JUSTIFICATION: &str = "base field Q: the class group is trivial, so any finite set of primes \
generates it; the unit group is {+1,-1} and -1 is detected at the infinite place, which lies in Sigma";

pub fn build_sigma(curve: &CurveOverQ, ell: u64) -> Result<SigmaSet, CurveError> {
    if !nt::is_prime_u64(ell) {
        return Err(CurveError::NotPrime(ell));
    }
    let g = curve.global_data();
    let mut places: BTreeSet<Place> = [Place::Infinity, Place::Prime(2), Place::Prime(ell)].into();
    let mut sigma0 = BTreeSet::new();
    for l in &g.local {
        places.insert(Place::Prime(l.prime));
        let multiplicative = matches!(
            l.kind,
            ReductionKind::MultiplicativeSplit | ReductionKind::MultiplicativeNonsplit
        );
        if ell == 2 && l.prime != 2 && multiplicative && l.disc_valuation % 2 == 1 {
            sigma0.insert(l.prime);
        }
    }
    Ok(SigmaSet { ell, places, sigma0, justification: SIGMA_JUSTIFICATION.to_string() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassKind {
    ExcludedSigma,
    ExcludedNorm,
    P0,
    P1,
    P2,
}

impl ClassKind {
    pub fn from_dim(d: u32) -> Self {
        match d {
            0 => ClassKind::P0,
            1 => ClassKind::P1,
            2 => ClassKind::P2,
            _ => unreachable!("local dimension {d}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimeClass {
    pub prime: u64,
    pub class: ClassKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local_dim: Option<u32>,
}

/// How an odd-l local dimension was decided.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DimMethod {
    GroupOrder,
    Sampling,
    DivisionPolynomial,
}

/// `dim_{F_l} E(F_p)[l]` for odd `l != p`, from `#E(F_p)` and sampled point
/// orders, with the division polynomial as the fallback.
pub fn local_dim_odd(curve: &CurveOverQ, ell: u64, p: u64) -> Result<(u32, DimMethod), CurveError> {
    let (n, _) = count_points_mod_p(curve, p)?;
    if n % ell != 0 {
        return Ok((0, DimMethod::GroupOrder));
    }
    if n % (ell * ell) != 0 {
        return Ok((1, DimMethod::GroupOrder));
    }
    let fp = curve.reduce_mod(p)?;
    let mut m = n;
    while m % ell == 0 {
        m /= ell;
    }
    let ell_k = n / m;
    let mut rng = ChaCha8Rng::seed_from_u64(p ^ (ell << 48));
    let mut torsion_points: Vec<FpPoint> = Vec::new();
    for _ in 0..LOCAL_DIM_SAMPLES {
        let q = fp.mul(m, fp.random_point(&mut rng));
        if q == FpPoint::Infinity {
            continue;
        }
        let ord = fp.order_from_multiple(q, ell_k);
        if ord == ell_k {
            // an element of order l^k: the l-primary part is cyclic
            return Ok((1, DimMethod::Sampling));
        }
        // the order-l point in <q>
        let r = fp.mul(ord / ell, q);
        let independent = torsion_points.iter().all(|&s| {
            let mut acc = FpPoint::Infinity;
            for _ in 0..ell {
                if acc == r {
                    return false;
                }
                acc = fp.add(acc, s);
            }
            true
        });
        if independent && !torsion_points.is_empty() {
            return Ok((2, DimMethod::Sampling));
        }
        if torsion_points.is_empty() {
            torsion_points.push(r);
        }
    }
    Ok((local_dim_division_poly(curve, ell, p)?, DimMethod::DivisionPolynomial))
}

/// `log_l #E(F_p)[l]` via the l-division polynomial.
pub fn local_dim_division_poly(curve: &CurveOverQ, ell: u64, p: u64) -> Result<u32, CurveError> {
    let fp = curve.reduce_mod(p)?;
    let count = ell_torsion_count_by_division_poly(&fp, ell);
    Ok(match count {
        1 => 0,
        c if c == ell => 1,
        c if c == ell * ell => 2,
        c => unreachable!("#E[{ell}] = {c}"),
    })
}

/// Classification of a single prime; `curve` should be minimal.
pub fn classify_prime(curve: &CurveOverQ, sigma: &SigmaSet, p: u64) -> Result<PrimeClass, CurveError> {
    if !nt::is_prime_u64(p) {
        return Err(CurveError::NotPrime(p));
    }
    let ell = sigma.ell;
    if sigma.contains_prime(p) {
        return Ok(PrimeClass { prime: p, class: ClassKind::ExcludedSigma, local_dim: None });
    }
    if p % ell != 1 {
        return Ok(PrimeClass { prime: p, class: ClassKind::ExcludedNorm, local_dim: None });
    }
    let dim = if ell == 2 { two_torsion_dim_mod_p(curve, p)? } else { local_dim_odd(curve, ell, p)?.0 };
    Ok(PrimeClass { prime: p, class: ClassKind::from_dim(dim), local_dim: Some(dim) })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub excluded_sigma: u64,
    pub excluded_norm: u64,
    pub p0: u64,
    pub p1: u64,
    pub p2: u64,
}

impl ClassCounts {
    pub fn add(&mut self, k: ClassKind) {
        match k {
            ClassKind::ExcludedSigma => self.excluded_sigma += 1,
            ClassKind::ExcludedNorm => self.excluded_norm += 1,
            ClassKind::P0 => self.p0 += 1,
            ClassKind::P1 => self.p1 += 1,
            ClassKind::P2 => self.p2 += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.excluded_sigma + self.excluded_norm + self.p0 + self.p1 + self.p2
    }

    /// Fractions of (P0, P1, P2) among non-excluded primes.
    pub fn fractions(&self) -> [f64; 3] {
        let n = (self.p0 + self.p1 + self.p2) as f64;
        if n == 0.0 {
            return [0.0; 3];
        }
        [self.p0 as f64 / n, self.p1 as f64 / n, self.p2 as f64 / n]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimePartitionReport {
    pub label: Option<String>,
    pub ell: u64,
    pub bound: u64,
    pub sigma: SigmaSet,
    pub counts: ClassCounts,
    pub fractions: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub primes: Option<Vec<PrimeClass>>,
}

/// Classify every prime up to `bound`.
pub fn scan_partition(
    curve: &CurveOverQ,
    ell: u64,
    bound: u64,
    keep_primes: bool,
) -> Result<PrimePartitionReport, CurveError> {
    let e = curve.minimal_model();
    let sigma = build_sigma(&e, ell)?;
    let primes = nt::primes_up_to(bound);
    let classes: Vec<PrimeClass> = primes
        .par_iter()
        .with_min_len(256)
        .map(|&p| classify_prime(&e, &sigma, p))
        .collect::<Result<_, _>>()?;
    let mut counts = ClassCounts::default();
    for c in &classes {
        counts.add(c.class);
    }
    Ok(PrimePartitionReport {
        label: curve.label.clone(),
        ell,
        bound,
        sigma,
        fractions: counts.fractions(),
        counts,
        primes: keep_primes.then_some(classes),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ellcurve::named::*;
    use crate::ellcurve::FpPoint;

    #[test]
    fn sigma_of_67a1_and_37a1() {
        let s = build_sigma(&curve_67a1(), 2).unwrap();
        assert_eq!(
            s.places,
            [Place::Infinity, Place::Prime(2), Place::Prime(67)].into_iter().collect()
        );
        assert_eq!(s.sigma0, [67].into_iter().collect());
        let s = build_sigma(&curve_37a1(), 2).unwrap();
        assert_eq!(s.finite_primes(), vec![2, 37]);
        assert!(build_sigma(&curve_67a1(), 3).unwrap().sigma0.is_empty());
        assert!(build_sigma(&curve_67a1(), 4).is_err());
    }

    #[test]
    fn small_primes_of_67a1() {
        let e = curve_67a1();
        let s = build_sigma(&e, 2).unwrap();
        assert_eq!(classify_prime(&e, &s, 67).unwrap().class, ClassKind::ExcludedSigma);
        for p in [3u64, 5, 7, 11, 13] {
            let roots = {
                let fp = e.reduce_mod(p).unwrap();
                let mut r = fp.division_cubic().roots_brute_force();
                r.dedup();
                r.len()
            };
            let expected = match roots {
                0 => ClassKind::P0,
                1 => ClassKind::P1,
                _ => ClassKind::P2,
            };
            assert_eq!(classify_prime(&e, &s, p).unwrap().class, expected, "p={p}");
        }
    }

    #[test]
    fn norm_exclusion_for_odd_ell() {
        let e = curve_67a1();
        let s = build_sigma(&e, 3).unwrap();
        for p in [5u64, 11, 17, 23, 29] {
            assert_eq!(classify_prime(&e, &s, p).unwrap().class, ClassKind::ExcludedNorm);
        }
    }

    /// `#E(F_p)[l]` by enumerating all points.
    fn brute_ell_dim(e: &CurveOverQ, ell: u64, p: u64) -> u32 {
        let fp = e.reduce_mod(p).unwrap();
        let mut n = 1u64;
        for x in 0..p {
            for y in 0..p {
                let pt = FpPoint::Affine(x, y);
                if fp.contains(pt) && fp.mul(ell, pt) == FpPoint::Infinity {
                    n += 1;
                }
            }
        }
        (n as f64).log(ell as f64).round() as u32
    }

    #[test]
    fn odd_ell_paths_agree() {
        // 11a1 has rational 5-torsion, so dimension 2 occurs at p = 1 mod 5
        for e in [curve_67a1(), CurveOverQ::from_i64([0, -1, 1, -10, -20]).unwrap()] {
            for ell in [3u64, 5] {
                for &p in nt::primes_up_to(400).iter().filter(|&&p| p % ell == 1) {
                    if e.reduce_mod(p).is_err() {
                        continue;
                    }
                    let (d, _) = local_dim_odd(&e, ell, p).unwrap();
                    assert_eq!(d, local_dim_division_poly(&e, ell, p).unwrap(), "p={p} l={ell}");
                    assert_eq!(d, brute_ell_dim(&e, ell, p), "p={p} l={ell}");
                }
            }
        }
    }

    #[test]
    fn partition_is_exhaustive_and_deterministic() {
        let r = scan_partition(&curve_67a1(), 2, 2000, true).unwrap();
        assert_eq!(r.counts.total(), nt::primes_up_to(2000).len() as u64);
        assert!(r.counts.p0 > 0 && r.counts.p1 > 0);
        let again = scan_partition(&curve_67a1(), 2, 2000, true).unwrap();
        assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&again).unwrap());
        let tiny = scan_partition(&curve_67a1(), 2, 2, false).unwrap();
        assert_eq!(tiny.counts.excluded_sigma, 1);
        assert_eq!(tiny.counts.total(), 1);
    }
}
