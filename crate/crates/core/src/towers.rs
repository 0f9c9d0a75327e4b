//! Tower certificates.
//!
//! A tower is recorded by its defining data: the twist parameter `D` with
//! `K1 = Q(sqrt 2D)`, then Kummer generators `beta` over the previous layer.
//! Builders and the verifier share the derivation functions below; the
//! verifier re-runs them from the recorded parameters and reports every field
//! that disagrees, together with the semantic checks of each layer.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;
use std::sync::{Mutex, OnceLock};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analytic::{l_value_at_1, LValueCertificate, LVerdict};
use crate::decstr;
use crate::ellcurve::{point_search_relative, CurveError, CurveOverQ, CurveRecord, RelativePoint};
use crate::extbuilder::{
    check_twist_parameter, describe_beta, factor_prime_in_quadratic, find_relative_beta, find_twist_parameters,
    rational_descent, relative_violations, BetaRequirements, ExtError, PrimeFactorization, QuadExtensionSpecQ,
    QuadraticFieldData, RelativeQuadSpec, TwistConstraints, WitnessRecord, DEFAULT_BETA_BOUND, DEFAULT_D_BOUND,
};
use crate::membership::check_s_membership;
use crate::nt;
use crate::primeclass::{build_sigma, classify_prime, ClassKind, SigmaSet};

pub const CERT_VERSION: &str = "towerforge-tower/1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_HEIGHT_BOUND: u64 = 20;
pub const DEFAULT_WITNESS_BOUND: u64 = 1000;
pub const DEFAULT_LAYER_PRECISION: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum TowerError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("unsupported index {0}: the descent check is exhaustive only for i = 1")]
    UnsupportedIndex(usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("unknown schedule rule {0:?}")]
    UnknownRule(String),
    #[error("malformed certificate: {0}")]
    Malformed(String),
    #[error("rank certification inconclusive for every admissible D up to {bound} ({} candidates examined)", .outcomes.len())]
    RankIndeterminate { bound: u64, outcomes: Vec<CandidateOutcome> },
    #[error("only {found} rank-certified parameters up to {bound}, seed needs {wanted}")]
    NotEnoughCertified { bound: u64, found: usize, wanted: usize, outcomes: Vec<CandidateOutcome> },
    #[error(transparent)]
    Ext(#[from] ExtError),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

// ---------------------------------------------------------------- schedules

pub const RULE_ROUND_ROBIN: &str = "round-robin-all-primes";
pub const RULE_CONSTANT_2: &str = "constant-2";
pub const RULE_PREFIX_ONLY: &str = "prefix-only";

/// The degree sequence: an explicit prefix and a named continuation rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EllSchedule {
    #[serde(with = "decstr::vec")]
    pub prefix: Vec<u64>,
    pub rule: String,
}

impl Default for EllSchedule {
    fn default() -> Self {
        EllSchedule { prefix: vec![2, 2], rule: RULE_ROUND_ROBIN.into() }
    }
}

impl EllSchedule {
    pub fn new(prefix: Vec<u64>, rule: impl Into<String>) -> Self {
        EllSchedule { prefix, rule: rule.into() }
    }

    /// The first `n` degrees after the prefix.
    pub fn continuation(&self, n: usize) -> Result<Vec<u64>, TowerError> {
        match self.rule.as_str() {
            // block k lists the first k primes
            RULE_ROUND_ROBIN => {
                let mut out = Vec::with_capacity(n);
                let mut primes = Vec::new();
                let mut next = 2u64;
                'outer: for k in 1.. {
                    while primes.len() < k {
                        while !nt::is_prime_u64(next) {
                            next += 1;
                        }
                        primes.push(next);
                        next += 1;
                    }
                    for &p in &primes[..k] {
                        if out.len() == n {
                            break 'outer;
                        }
                        out.push(p);
                    }
                }
                Ok(out)
            }
            RULE_CONSTANT_2 => Ok(vec![2; n]),
            RULE_PREFIX_ONLY => Ok(Vec::new()),
            other => Err(TowerError::UnknownRule(other.to_string())),
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, &l) in self.prefix.iter().enumerate() {
            if !nt::is_prime_u64(l) {
                out.push(format!("entry {} = {l} is not prime", i + 1));
            }
        }
        if self.prefix.first().is_some_and(|&l| l != 2) {
            out.push(format!("the first degree must be 2, found {}", self.prefix[0]));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BigScheduleReport {
    pub rule: String,
    pub big: bool,
    pub explanation: String,
}

/// Whether the schedule makes every prime occur infinitely often.
pub fn check_big_schedule(s: &EllSchedule) -> Result<BigScheduleReport, TowerError> {
    let (big, explanation) = match s.rule.as_str() {
        RULE_ROUND_ROBIN => (
            true,
            "after the prefix the k-th block lists the first k primes, so the n-th prime occurs in every block k >= n".to_string(),
        ),
        RULE_CONSTANT_2 => (false, "the continuation is constant 2, so no odd prime occurs after the prefix".to_string()),
        RULE_PREFIX_ONLY => (false, "finite prefix cannot certify bigness".to_string()),
        other => return Err(TowerError::UnknownRule(other.to_string())),
    };
    Ok(BigScheduleReport { rule: s.rule.clone(), big, explanation })
}

// --------------------------------------------------------------- data model

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvidenceLevel {
    Certified,
    EvidenceOnly,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DefiningData {
    /// `K1 = Q(sqrt 2D)` where `Q(sqrt D)` is the twist parameter found for `E^(2)`.
    Twist {
        #[serde(with = "decstr")]
        d: i64,
        field: QuadraticFieldData,
        twist: QuadExtensionSpecQ,
    },
    /// `K_i = K_{i-1}(sqrt beta)`.
    Kummer { spec: RelativeQuadSpec },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceEvidence {
    pub place: String,
    pub evidence: String,
}

/// Why `K1` meets the torsion fields of `E` only in Q: 2 is wildly ramified
/// in `K1` and at most tamely ramified in every `Q(E[l])`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisjointnessRecord {
    #[serde(with = "decstr")]
    pub field_disc: i64,
    pub disc_valuation_at_2: u32,
    pub wild_at_2: bool,
    #[serde(with = "decstr")]
    pub curve_disc: BigInt,
    pub curve_disc_mod_4: u32,
    pub curve_good_at_2: bool,
    pub tame_in_torsion_fields: bool,
    pub argument: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "level", rename_all = "kebab-case")]
pub enum RankEvidence {
    Certified {
        #[serde(with = "decstr")]
        twist_parameter: i64,
        lvalue: LValueCertificate,
        #[serde(with = "decstr::vec")]
        good_primes: Vec<u64>,
        conclusion: String,
    },
    PointSearchOnly {
        #[serde(with = "decstr")]
        height_bound: u64,
        points_found: usize,
        new_points: Vec<RelativePoint>,
        note: String,
    },
}

impl RankEvidence {
    pub fn level(&self) -> EvidenceLevel {
        match self {
            RankEvidence::Certified { .. } => EvidenceLevel::Certified,
            RankEvidence::PointSearchOnly { .. } => EvidenceLevel::EvidenceOnly,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SearchRecord {
    /// `D` is the `seed`-th rank-certified admissible parameter up to `d_bound`.
    Twist {
        #[serde(with = "decstr")]
        seed: u64,
        #[serde(with = "decstr")]
        d_bound: u64,
        precision: f64,
        admissible_index: usize,
    },
    /// The witness prime is the `seed`-th candidate below `witness_bound`;
    /// `beta` is the first admissible generator in search order.
    Kummer {
        #[serde(with = "decstr")]
        seed: u64,
        #[serde(with = "decstr")]
        witness_bound: u64,
        #[serde(with = "decstr")]
        beta_bound: u64,
        #[serde(with = "decstr")]
        height_bound: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerCertificate {
    pub index: usize,
    #[serde(with = "decstr")]
    pub degree: u64,
    #[serde(with = "decstr")]
    pub absolute_degree: u64,
    pub defining: DefiningData,
    pub totally_real: bool,
    pub ramification: Vec<PlaceEvidence>,
    pub split: Vec<PlaceEvidence>,
    pub witness: Option<WitnessRecord>,
    pub disjointness: Option<DisjointnessRecord>,
    pub rank_evidence: RankEvidence,
    pub search: SearchRecord,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrefixStatus {
    ValidPrefix,
    Invalid,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TowerVerdict {
    pub status: PrefixStatus,
    pub certified_layers: Vec<usize>,
    pub evidence_only_layers: Vec<usize>,
    #[serde(with = "decstr")]
    pub absolute_degree: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TowerCertificate {
    pub version: String,
    pub tool_version: String,
    pub curve: CurveRecord,
    /// Input name to SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub schedule: EllSchedule,
    pub layers: Vec<LayerCertificate>,
    pub verdict: TowerVerdict,
    /// SHA-256 of each top-level section and of each field of each layer,
    /// keyed by its path.
    pub sections: BTreeMap<String, String>,
    /// SHA-256 of the canonical JSON of `sections`.
    pub digest: String,
}

fn curve_record(curve: &CurveOverQ) -> CurveRecord {
    let mut r = CurveRecord::from_curve(curve);
    r.disc = Some(curve.minimal_disc().to_string());
    r.conductor = Some(curve.conductor().to_string());
    r
}

fn verdict_for(layers: &[LayerCertificate], status: PrefixStatus) -> TowerVerdict {
    let mut certified_layers = Vec::new();
    let mut evidence_only_layers = Vec::new();
    for l in layers {
        match l.rank_evidence.level() {
            EvidenceLevel::Certified => certified_layers.push(l.index),
            EvidenceLevel::EvidenceOnly => evidence_only_layers.push(l.index),
        }
    }
    let absolute_degree = layers.last().map_or(1, |l| l.absolute_degree);
    TowerVerdict { status, certified_layers, evidence_only_layers, absolute_degree }
}

impl TowerCertificate {
    /// The empty prefix `K0 = Q`.
    pub fn new(curve: &CurveOverQ, schedule: EllSchedule, inputs: BTreeMap<String, String>) -> Self {
        let mut c = TowerCertificate {
            version: CERT_VERSION.into(),
            tool_version: TOOL_VERSION.into(),
            curve: curve_record(curve),
            inputs,
            schedule,
            layers: Vec::new(),
            verdict: verdict_for(&[], PrefixStatus::ValidPrefix),
            sections: BTreeMap::new(),
            digest: String::new(),
        };
        c.seal();
        c
    }

    pub fn push_layer(&mut self, layer: LayerCertificate) {
        self.layers.push(layer);
        self.seal();
    }

    /// Recompute the verdict summary and digest after an edit.
    pub fn seal(&mut self) {
        self.verdict = verdict_for(&self.layers, PrefixStatus::ValidPrefix);
        self.sections = self.section_hashes();
        self.digest = self.compute_digest();
    }

    /// Hashes of the current content, in the shape of `sections`.
    pub fn section_hashes(&self) -> BTreeMap<String, String> {
        let v = serde_json::to_value(self).expect("certificate serializes");
        let mut out = BTreeMap::new();
        for (k, x) in v.as_object().expect("certificate is an object") {
            match k.as_str() {
                "sections" | "digest" => {}
                "layers" => {
                    for (i, layer) in x.as_array().expect("layers is an array").iter().enumerate() {
                        for (f, y) in layer.as_object().expect("layer is an object") {
                            out.insert(format!("layers[{i}].{f}"), sha256_hex(y));
                        }
                    }
                }
                _ => {
                    out.insert(k.clone(), sha256_hex(x));
                }
            }
        }
        out
    }

    pub fn compute_digest(&self) -> String {
        sha256_hex(&serde_json::to_value(&self.sections).expect("sections serialize"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, TowerError> {
        let v: Value = serde_json::from_slice(bytes).map_err(|e| TowerError::Malformed(e.to_string()))?;
        from_value_with_path(v)
    }
}

fn sha256_hex(v: &Value) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(v).expect("value serializes")))
}

fn from_value_with_path(v: Value) -> Result<TowerCertificate, TowerError> {
    serde_path_to_error::deserialize(v).map_err(|e| TowerError::Malformed(format!("at {}: {}", e.path(), e.inner())))
}

// ------------------------------------------------------------------ caching

fn memo<K, V>(cell: &'static OnceLock<Mutex<HashMap<K, V>>>, key: K, f: impl FnOnce() -> V) -> V
where
    K: Eq + Hash + Clone,
    V: Clone,
{
    let map = cell.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = map.lock().unwrap().get(&key) {
        return v.clone();
    }
    let v = f();
    map.lock().unwrap().insert(key, v.clone());
    v
}

fn ainv_key(e: &CurveOverQ) -> Vec<String> {
    e.ainvs().iter().map(|a| a.to_string()).collect()
}

type LKey = (Vec<String>, u64);
static L_CACHE: OnceLock<Mutex<HashMap<LKey, Result<LValueCertificate, String>>>> = OnceLock::new();

fn cached_l_value(e: &CurveOverQ, precision: f64) -> Result<LValueCertificate, CurveError> {
    memo(&L_CACHE, (ainv_key(e), precision.to_bits()), || l_value_at_1(e, precision).map_err(|x| x.to_string()))
        .map_err(CurveError::Malformed)
}

static MEMBERSHIP_CACHE: OnceLock<Mutex<HashMap<Vec<String>, Result<(bool, String), String>>>> = OnceLock::new();

/// `(in S, reason when not)`.
fn cached_membership(e: &CurveOverQ) -> Result<(bool, String), CurveError> {
    memo(&MEMBERSHIP_CACHE, ainv_key(e), || {
        check_s_membership(e)
            .map(|r| {
                let mut why = Vec::new();
                if !r.disc_mod4_ok {
                    why.push(format!("minimal discriminant {} is not 1 mod 4", r.minimal_disc));
                }
                if r.odd_multiplicative_witness.is_none() {
                    why.push("no odd prime of multiplicative reduction with odd discriminant valuation".into());
                }
                if !r.mod2_surjective {
                    why.push(format!("mod 2 representation not surjective: {}", r.mod2_reason));
                }
                if r.modl_evidence.values().any(|v| v.is_obstruction()) {
                    why.push("an odd mod-l obstruction was found".into());
                }
                (r.in_s, why.join("; "))
            })
            .map_err(|x| x.to_string())
    })
    .map_err(CurveError::Malformed)
}

type PointKey = (i64, i64, i64, Vec<String>, u64);
static POINT_CACHE: OnceLock<Mutex<HashMap<PointKey, Vec<RelativePoint>>>> = OnceLock::new();

fn cached_points(e: &CurveOverQ, field: &QuadraticFieldData, beta: (i64, i64), height: u64) -> Vec<RelativePoint> {
    memo(&POINT_CACHE, (field.m, beta.0, beta.1, ainv_key(e), height), || {
        point_search_relative(e, &field.quad_field(), &field.to_quad_elem((beta.0 as i128, beta.1 as i128)), height)
    })
}

// ------------------------------------------------------------------ layer 1

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer1Config {
    pub d_bound: u64,
    pub precision: f64,
    pub seed: u64,
}

impl Default for Layer1Config {
    fn default() -> Self {
        Layer1Config { d_bound: DEFAULT_D_BOUND, precision: DEFAULT_LAYER_PRECISION, seed: 0 }
    }
}

/// What happened to one admissible `D` during the layer-1 scan.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    #[serde(with = "decstr")]
    pub d: i64,
    pub outcome: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer1Build {
    pub layer: LayerCertificate,
    /// Candidates examined before the selected one, in order.
    pub passed_over: Vec<CandidateOutcome>,
}

struct Layer1Context {
    e: CurveOverQ,
    a: CurveOverQ,
    sigma_a: SigmaSet,
}

fn layer1_context(curve: &CurveOverQ) -> Result<Layer1Context, TowerError> {
    let e = curve.minimal_model();
    let a = e.quadratic_twist(&BigInt::from(2))?;
    let sigma_a = build_sigma(&a, 2)?;
    Ok(Layer1Context { e, a, sigma_a })
}

/// Root number of `E^(d)` for a fundamental discriminant `disc` of `Q(sqrt d)`
/// prime to the conductor: `w(E) * chi_disc(-N)`.
fn predicted_twist_root_number(w_e: i32, disc: i64, conductor: &BigInt) -> Option<i32> {
    let n = conductor.to_u64()?;
    if w_e == 0 || n.gcd(&disc.unsigned_abs()) != 1 {
        return None;
    }
    // chi_disc(-1) = sign(disc)
    Some(w_e * nt::kronecker(disc, n) * disc.signum() as i32)
}

struct Selection {
    twist: QuadExtensionSpecQ,
    lvalue: LValueCertificate,
    admissible_index: usize,
    passed_over: Vec<CandidateOutcome>,
}

/// Walk admissible `D` in canonical order and return the `seed`-th one whose
/// twist `E^(2D)` is certified to have rank 0.
fn select_layer1(ctx: &Layer1Context, cfg: &Layer1Config) -> Result<Selection, TowerError> {
    let w_e = cached_l_value(&ctx.e, cfg.precision)?.w;
    let conductor = ctx.e.conductor();
    let mut outcomes = Vec::new();
    let mut certified = 0u64;
    let mut index = 0usize;
    let batch = 16;
    loop {
        let c = TwistConstraints::layer1(cfg.d_bound, index);
        let specs = find_twist_parameters(&ctx.a, 2, &[], &ctx.sigma_a, &c, batch)?;
        if specs.is_empty() {
            break;
        }
        for spec in specs {
            let d = spec.d;
            let this = index;
            index += 1;
            if predicted_twist_root_number(w_e, 8 * d, &conductor) == Some(-1) {
                outcomes.push(CandidateOutcome { d, outcome: "root number -1 predicted from the twist formula; not evaluated".into() });
                continue;
            }
            let twisted = ctx.e.quadratic_twist(&BigInt::from(2 * d))?;
            let l = cached_l_value(&twisted, cfg.precision)?;
            if l.verdict != LVerdict::Rank0Certified {
                outcomes.push(CandidateOutcome { d, outcome: format!("L-value verdict {:?}", l.verdict) });
                continue;
            }
            if certified == cfg.seed {
                let twist = QuadExtensionSpecQ { constraints: TwistConstraints::layer1(cfg.d_bound, this), ..spec };
                return Ok(Selection { twist, lvalue: l, admissible_index: this, passed_over: outcomes });
            }
            certified += 1;
            outcomes.push(CandidateOutcome { d, outcome: "rank 0 certified; passed over by the seed".into() });
        }
    }
    if index == 0 {
        return Err(ExtError::SearchExhausted { bound: cfg.d_bound, found: 0, wanted: 1 }.into());
    }
    if certified == 0 {
        return Err(TowerError::RankIndeterminate { bound: cfg.d_bound, outcomes });
    }
    Err(TowerError::NotEnoughCertified { bound: cfg.d_bound, found: certified as usize, wanted: cfg.seed as usize + 1, outcomes })
}

const RANK1_CONCLUSION: &str = "L(E^(2D), 1) != 0 certifies rank E^(2D)(Q) = 0, so rank E(F) = rank E(Q) + rank E^(2D)(Q) = rank E(Q); \
F/Q is ramified at the primes 2 and q of good reduction with different residue characteristics, so E(F) = E(Q)";

const DISJOINT_ARGUMENT: &str = "2 divides disc(F) to order 3 >= 2, so 2 is wildly ramified in F; disc(E) = 1 mod 4 makes \
Q(sqrt disc(E)) unramified at 2, so 2 is tamely ramified in Q(E[2]); disc(E) is odd, so E has good reduction at 2 and 2 is \
unramified in Q(E[l]) for odd l; hence F meets the compositum of the torsion fields only in Q";

/// Assemble the layer-1 record from its parts; every field is a function of
/// `(E, twist spec, L-value certificate, search parameters)`.
fn assemble_layer1(e: &CurveOverQ, twist: QuadExtensionSpecQ, lvalue: LValueCertificate, search: SearchRecord) -> Result<LayerCertificate, TowerError> {
    let d = twist.d;
    let field = QuadraticFieldData::new(2 * d)?;
    let mut ramification = vec![PlaceEvidence {
        place: "2".into(),
        evidence: format!("v_2(disc F) = {} since 2D = {} is 2 mod 4; wild", nt::valuation_i64(field.disc, 2), 2 * d),
    }];
    for r in &twist.divisors {
        ramification.push(PlaceEvidence {
            place: r.prime.to_string(),
            evidence: format!("{} divides disc F = {}; tame; good reduction, class {:?}", r.prime, field.disc, r.class),
        });
    }
    let split = twist
        .split_verified
        .iter()
        .map(|s| PlaceEvidence { place: s.place.to_string(), evidence: format!("splits in Q(sqrt D): symbol {}", s.symbol) })
        .collect();
    let curve_disc = e.minimal_disc();
    let disc_mod4 = nt::big_mod(&curve_disc, 4) as u32;
    let good2 = e.has_good_reduction(2);
    let v2 = nt::valuation_i64(field.disc, 2);
    let disjointness = DisjointnessRecord {
        field_disc: field.disc,
        disc_valuation_at_2: v2,
        wild_at_2: v2 >= 2,
        curve_disc,
        curve_disc_mod_4: disc_mod4,
        curve_good_at_2: good2,
        tame_in_torsion_fields: disc_mod4 == 1 && good2,
        argument: DISJOINT_ARGUMENT.into(),
    };
    let q = twist.divisors.iter().map(|r| r.prime).find(|&q| e.has_good_reduction(q)).unwrap_or(0);
    let rank_evidence = RankEvidence::Certified {
        twist_parameter: 2 * d,
        lvalue,
        good_primes: vec![2, q],
        conclusion: RANK1_CONCLUSION.into(),
    };
    Ok(LayerCertificate {
        index: 1,
        degree: 2,
        absolute_degree: 2,
        totally_real: field.is_real(),
        defining: DefiningData::Twist { d, field, twist },
        ramification,
        split,
        witness: None,
        disjointness: Some(disjointness),
        rank_evidence,
        search,
    })
}

/// First layer: `F = Q(sqrt 2D)` with `E(F) = E(Q)` certified.
pub fn build_layer1(curve: &CurveOverQ, cfg: &Layer1Config) -> Result<Layer1Build, TowerError> {
    let (in_s, why) = cached_membership(curve)?;
    if !in_s {
        return Err(TowerError::Precondition(format!("curve is not in S: {why}")));
    }
    let ctx = layer1_context(curve)?;
    let sel = select_layer1(&ctx, cfg)?;
    let search = SearchRecord::Twist {
        seed: cfg.seed,
        d_bound: cfg.d_bound,
        precision: cfg.precision,
        admissible_index: sel.admissible_index,
    };
    let layer = assemble_layer1(&ctx.e, sel.twist, sel.lvalue, search)?;
    Ok(Layer1Build { layer, passed_over: sel.passed_over })
}

// ------------------------------------------------------------------ layer 2

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer2Config {
    pub beta_bound: u64,
    pub height_bound: u64,
    pub witness_bound: u64,
    pub seed: u64,
}

impl Default for Layer2Config {
    fn default() -> Self {
        Layer2Config {
            beta_bound: DEFAULT_BETA_BOUND,
            height_bound: DEFAULT_HEIGHT_BOUND,
            witness_bound: DEFAULT_WITNESS_BOUND,
            seed: 0,
        }
    }
}

/// Which primes may ramify in `K2/K1`: odd primes of good reduction prime to
/// `D`; P0 primes count toward the distinct residue characteristics.
fn layer2_policy<'a>(e: &'a CurveOverQ, sigma: &'a SigmaSet, d: i64) -> impl Fn(u64) -> Option<bool> + Sync + 'a {
    move |r: u64| {
        if r == 2 || sigma.contains_prime(r) || d % r as i64 == 0 {
            return None;
        }
        match classify_prime(e, sigma, r).ok()?.class {
            ClassKind::P0 => Some(true),
            ClassKind::P1 => Some(false),
            _ => None,
        }
    }
}

/// Odd primes below `bound` that split in `Q(sqrt 2D)`, lie outside Sigma and
/// have `E(F_p)[2] = 0`.
pub fn witness_candidates(curve: &CurveOverQ, d: i64, bound: u64) -> Result<Vec<u64>, TowerError> {
    let e = curve.minimal_model();
    let sigma = build_sigma(&e, 2)?;
    let mut out = Vec::new();
    for p in nt::primes_up_to(bound) {
        if p == 2 || sigma.contains_prime(p) || d % p as i64 == 0 || nt::kronecker(8 * d, p) != 1 {
            continue;
        }
        if classify_prime(&e, &sigma, p)?.class == ClassKind::P0 {
            out.push(p);
        }
    }
    Ok(out)
}

fn layer2_requirements(witness: u64) -> BetaRequirements {
    BetaRequirements {
        witness_prime: Some(witness),
        min_counted_chars: 2,
        split_at_two: true,
        totally_positive: true,
        rational_only: false,
        index: 0,
    }
}

fn is_rational_point(p: &RelativePoint) -> bool {
    p.y1.is_zero() && p.x.is_rational() && p.y0.is_rational()
}

const POINT_NOTE: &str = "points with x in K1 up to the naive height bound; these are the points of E(K1) and of the twist by \
beta, which together span E(K2) up to finite index; evidence only, not a rank certificate";

/// Assemble the layer-2 record for `beta = (a, b)`; `None` when the norm of
/// `beta` is outside the factoring range.
fn assemble_layer2(
    e: &CurveOverQ,
    d: i64,
    beta: (i64, i64),
    witness: u64,
    search: SearchRecord,
) -> Result<LayerCertificate, TowerError> {
    let SearchRecord::Kummer { beta_bound, height_bound, .. } = search else {
        return Err(TowerError::Precondition("layer 2 needs a Kummer search record".into()));
    };
    let sigma = build_sigma(e, 2)?;
    let field = QuadraticFieldData::new(2 * d)?;
    let policy = layer2_policy(e, &sigma, d);
    let spec = describe_beta(&field, &layer2_requirements(witness), &policy, beta_bound, (beta.0 as i128, beta.1 as i128))
        .ok_or_else(|| TowerError::Precondition(format!("beta = {} + {} w is zero or too large to factor", beta.0, beta.1)))?;
    let ramification = spec
        .ramified
        .iter()
        .map(|r| PlaceEvidence {
            place: r.prime.two_element_form(),
            evidence: format!(
                "v(beta) = {} is odd; {}",
                r.valuation,
                match policy(r.prime.p) {
                    Some(true) => "good reduction, class P0",
                    Some(false) => "good reduction, class P1",
                    None => "not permitted",
                }
            ),
        })
        .collect();
    let split = spec
        .split_at
        .iter()
        .map(|s| PlaceEvidence {
            place: s.place.clone(),
            evidence: if s.place.starts_with("inf") {
                format!("beta positive at this embedding: {}", s.splits)
            } else {
                format!("beta is a local square: {}", s.splits)
            },
        })
        .collect();
    let points = cached_points(e, &field, beta, height_bound);
    let new_points: Vec<RelativePoint> = points.iter().filter(|p| !is_rational_point(p)).cloned().collect();
    Ok(LayerCertificate {
        index: 2,
        degree: 2,
        absolute_degree: spec.min_poly.len() as u64 * 2,
        totally_real: field.is_real() && spec.totally_positive,
        ramification,
        split,
        witness: spec.witness.clone(),
        disjointness: None,
        rank_evidence: RankEvidence::PointSearchOnly {
            height_bound,
            points_found: points.len(),
            new_points,
            note: POINT_NOTE.into(),
        },
        defining: DefiningData::Kummer { spec },
        search,
    })
}

fn layer1_d(layer1: &LayerCertificate) -> Result<i64, TowerError> {
    match &layer1.defining {
        DefiningData::Twist { d, .. } if layer1.index == 1 => Ok(*d),
        _ => Err(TowerError::Precondition("expected a first-layer twist certificate".into())),
    }
}

/// Second layer `K2 = K1(sqrt beta)`; rank preservation is point-search evidence only.
pub fn build_layer2_candidate(curve: &CurveOverQ, layer1: &LayerCertificate, cfg: &Layer2Config) -> Result<LayerCertificate, TowerError> {
    let e = curve.minimal_model();
    let structural = verify_layer1(&e, layer1, false);
    if !structural.is_empty() {
        let msgs: Vec<String> = structural.iter().map(|v| v.to_string()).collect();
        return Err(TowerError::Precondition(format!("layer 1 does not verify: {}", msgs.join("; "))));
    }
    let d = layer1_d(layer1)?;
    let candidates = witness_candidates(&e, d, cfg.witness_bound)?;
    let Some(&witness) = candidates.get(cfg.seed as usize) else {
        return Err(ExtError::SearchExhausted { bound: cfg.witness_bound, found: candidates.len(), wanted: cfg.seed as usize + 1 }.into());
    };
    let spec = cached_beta_search(&e, d, witness, cfg.beta_bound)?;
    let search = SearchRecord::Kummer {
        seed: cfg.seed,
        witness_bound: cfg.witness_bound,
        beta_bound: cfg.beta_bound,
        height_bound: cfg.height_bound,
    };
    assemble_layer2(&e, d, (spec.0, spec.1), witness, search)
}

type BetaKey = (Vec<String>, i64, u64, u64);
static BETA_CACHE: OnceLock<Mutex<HashMap<BetaKey, Result<(i64, i64), String>>>> = OnceLock::new();

fn cached_beta_search(e: &CurveOverQ, d: i64, witness: u64, bound: u64) -> Result<(i64, i64), TowerError> {
    let r = memo(&BETA_CACHE, (ainv_key(e), d, witness, bound), || {
        let sigma = build_sigma(e, 2).map_err(|x| x.to_string())?;
        let field = QuadraticFieldData::new(2 * d).map_err(|x| x.to_string())?;
        let policy = layer2_policy(e, &sigma, d);
        find_relative_beta(&field, &layer2_requirements(witness), bound, &policy).map(|s| (s.a, s.b)).map_err(|x| x.to_string())
    });
    r.map_err(|m| ExtError::Precondition(m).into())
}

// ----------------------------------------------------------------- descent

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescentReport {
    pub index: usize,
    /// Primes that can ramify in `K2/Q`: those dividing `2 m N(beta)`.
    #[serde(with = "decstr::vec")]
    pub primes: Vec<u64>,
    pub candidates_checked: usize,
    /// `n` with `Q(sqrt n) K1 = K2`, if any.
    pub descent: Option<String>,
    pub exhaustive: bool,
}

/// Search for a quadratic `Q(sqrt n)` with `Q(sqrt n) K_i = K_{i+1}`.
pub fn check_no_galois_descent(cert: &TowerCertificate, i: usize) -> Result<DescentReport, TowerError> {
    if i != 1 {
        return Err(TowerError::UnsupportedIndex(i));
    }
    let layer = cert.layers.get(1).ok_or_else(|| TowerError::Precondition("layers 1 and 2 are required".into()))?;
    let DefiningData::Kummer { spec } = &layer.defining else {
        return Err(TowerError::Malformed("layer 2 is not a Kummer layer".into()));
    };
    descent_of(spec)
}

fn descent_of(spec: &RelativeQuadSpec) -> Result<DescentReport, TowerError> {
    let field = QuadraticFieldData::new(spec.base.m)?;
    let n = field.norm(spec.beta());
    if n == 0 {
        return Err(TowerError::Malformed("beta is zero".into()));
    }
    let mut primes: Vec<u64> = vec![2];
    let big = u64::try_from(n.unsigned_abs()).map_err(|_| TowerError::Unsupported("norm of beta exceeds 64 bits".into()))?;
    for x in [spec.base.m.unsigned_abs(), big] {
        for (p, _) in nt::factor_u64(x) {
            if !primes.contains(&p) {
                primes.push(p);
            }
        }
    }
    primes.sort_unstable();
    if primes.len() > 24 {
        return Err(TowerError::Unsupported(format!("{} primes is beyond exhaustive enumeration", primes.len())));
    }
    let descent = rational_descent(&field, spec.beta(), &primes).map(|x| x.to_string());
    Ok(DescentReport { index: 1, candidates_checked: 2 << primes.len(), primes, descent, exhaustive: true })
}

// ------------------------------------------------------------- verification

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

fn viol(location: impl Into<String>, message: impl Into<String>) -> Violation {
    Violation { location: location.into(), message: message.into() }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerReport {
    pub index: usize,
    pub level: EvidenceLevel,
    pub valid: bool,
    pub violations: Vec<Violation>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub status: PrefixStatus,
    pub layers: Vec<LayerReport>,
    pub violations: Vec<Violation>,
    pub descent: Option<DescentReport>,
    pub schedule: Option<BigScheduleReport>,
}

impl VerifyReport {
    /// 0 when every layer is certified, 2 when valid with evidence-only
    /// layers, 1 when invalid.
    pub fn exit_code(&self) -> i32 {
        match self.status {
            PrefixStatus::Invalid => 1,
            PrefixStatus::ValidPrefix if self.layers.iter().any(|l| l.level == EvidenceLevel::EvidenceOnly) => 2,
            PrefixStatus::ValidPrefix => 0,
        }
    }

    pub fn all_violations(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().chain(self.layers.iter().flat_map(|l| &l.violations))
    }
}

#[derive(Clone, Debug, Default)]
pub struct VerifyOptions {
    /// Hashes of the inputs as seen by the caller; compared when present.
    pub input_hashes: Option<BTreeMap<String, String>>,
}

/// Record every leaf where `actual` differs from `expected`.
pub fn diff_json(path: &str, expected: &Value, actual: &Value, out: &mut Vec<Violation>) {
    match (expected, actual) {
        (Value::Object(e), Value::Object(a)) => {
            for (k, ev) in e {
                let p = format!("{path}.{k}");
                match a.get(k) {
                    Some(av) => diff_json(&p, ev, av, out),
                    None => out.push(viol(p, "missing")),
                }
            }
            for k in a.keys().filter(|k| !e.contains_key(*k)) {
                out.push(viol(format!("{path}.{k}"), "unexpected field"));
            }
        }
        (Value::Array(e), Value::Array(a)) if e.len() == a.len() => {
            for (i, (ev, av)) in e.iter().zip(a).enumerate() {
                diff_json(&format!("{path}[{i}]"), ev, av, out);
            }
        }
        (Value::Array(e), Value::Array(a)) => {
            out.push(viol(path, format!("recorded {} entries, recomputed {}", a.len(), e.len())));
        }
        _ if expected != actual => out.push(viol(path, format!("recorded {actual}, recomputed {expected}"))),
        _ => {}
    }
}

fn diff_layers(loc: &str, expected: &LayerCertificate, actual: &LayerCertificate, out: &mut Vec<Violation>) {
    let e = serde_json::to_value(expected).expect("layer serializes");
    let a = serde_json::to_value(actual).expect("layer serializes");
    diff_json(loc, &e, &a, out);
}

/// Checks of a first layer. With `deep`, the L-value and the seed selection
/// are recomputed and the whole record is re-derived and compared.
fn verify_layer1(e: &CurveOverQ, layer: &LayerCertificate, deep: bool) -> Vec<Violation> {
    let loc = "layers[0]";
    let mut out = Vec::new();
    let DefiningData::Twist { d, field, twist } = &layer.defining else {
        out.push(viol(format!("{loc}.defining"), "layer 1 must be defined by a twist parameter"));
        return out;
    };
    let d = *d;
    if layer.index != 1 {
        out.push(viol(format!("{loc}.index"), format!("expected 1, found {}", layer.index)));
    }
    if layer.degree != 2 {
        out.push(viol(format!("{loc}.degree"), format!("layer 1 is quadratic, found degree {}", layer.degree)));
    }
    if d <= 0 {
        out.push(viol(format!("{loc}.defining.d"), format!("D = {d} is not positive, so F = Q(sqrt 2D) is not real")));
    }
    if (2 * d as i128).rem_euclid(4) != 2 {
        out.push(viol(format!("{loc}.defining.d"), format!("2D = {} is not 2 mod 4, so 2 is not wildly ramified", 2 * d as i128)));
    }
    match QuadraticFieldData::new(2 * d) {
        Ok(f) if &f == field => {}
        Ok(_) => out.push(viol(format!("{loc}.defining.field"), "field data is not that of Q(sqrt 2D)")),
        Err(x) => out.push(viol(format!("{loc}.defining.d"), x.to_string())),
    }
    if twist.d != d {
        out.push(viol(format!("{loc}.defining.twist.d"), format!("twist parameter {} differs from D = {d}", twist.d)));
    }
    for m in twist.violations() {
        out.push(viol(format!("{loc}.defining.twist"), m));
    }
    let good: Vec<&u64> = twist.divisors.iter().map(|r| &r.prime).filter(|&&q| e.has_good_reduction(q)).collect();
    if good.len() < 2 {
        out.push(viol(format!("{loc}.defining.twist.divisors"), "D needs at least two prime divisors of good reduction"));
    }
    match &layer.disjointness {
        Some(dj) => {
            if !dj.wild_at_2 || dj.disc_valuation_at_2 < 2 {
                out.push(viol(format!("{loc}.disjointness"), "2 is not recorded as wildly ramified"));
            }
            if !dj.tame_in_torsion_fields {
                out.push(viol(format!("{loc}.disjointness"), "tameness of 2 in the torsion fields is not established"));
            }
        }
        None => out.push(viol(format!("{loc}.disjointness"), "layer 1 must record the wild-ramification disjointness argument")),
    }
    match &layer.rank_evidence {
        RankEvidence::Certified { twist_parameter, lvalue, good_primes, .. } => {
            if *twist_parameter != 2 * d {
                out.push(viol(format!("{loc}.rank_evidence.twist_parameter"), "not 2D"));
            }
            if !lvalue.is_certified() || !lvalue.self_consistent() {
                out.push(viol(format!("{loc}.rank_evidence.lvalue"), "L-value certificate is not a consistent rank-0 certificate"));
            }
            let ok = good_primes.len() == 2
                && good_primes[0] == 2
                && good_primes[1] % 2 == 1
                && d % good_primes[1] as i64 == 0
                && good_primes.iter().all(|&p| e.has_good_reduction(p));
            if !ok {
                out.push(viol(
                    format!("{loc}.rank_evidence.good_primes"),
                    format!("{good_primes:?} are not 2 and an odd divisor of D, both of good reduction"),
                ));
            }
        }
        RankEvidence::PointSearchOnly { .. } => {
            out.push(viol(format!("{loc}.rank_evidence"), "layer 1 must carry a certified rank claim"));
        }
    }
    if !layer.totally_real {
        out.push(viol(format!("{loc}.totally_real"), "F must be real"));
    }
    if layer.witness.is_some() {
        out.push(viol(format!("{loc}.witness"), "layer 1 carries no witness pair"));
    }
    if !deep || !out.is_empty() {
        return out;
    }
    let SearchRecord::Twist { seed, d_bound, precision, admissible_index } = layer.search.clone() else {
        out.push(viol(format!("{loc}.search"), "layer 1 needs a twist search record"));
        return out;
    };
    let ctx = match layer1_context(e) {
        Ok(c) => c,
        Err(x) => {
            out.push(viol(loc, x.to_string()));
            return out;
        }
    };
    // re-derive from D alone
    let c = TwistConstraints::layer1(d_bound, admissible_index);
    let spec = match check_twist_parameter(&ctx.a, &[], &ctx.sigma_a, &c, d) {
        Ok(Some(s)) => s,
        Ok(None) => {
            out.push(viol(format!("{loc}.defining.d"), format!("D = {d} is not an admissible twist parameter for E^(2)")));
            return out;
        }
        Err(x) => {
            out.push(viol(format!("{loc}.defining.d"), x.to_string()));
            return out;
        }
    };
    let lvalue = match ctx.e.quadratic_twist(&BigInt::from(2 * d)).and_then(|t| cached_l_value(&t, precision)) {
        Ok(l) => l,
        Err(x) => {
            out.push(viol(format!("{loc}.rank_evidence.lvalue"), x.to_string()));
            return out;
        }
    };
    if lvalue.verdict != LVerdict::Rank0Certified {
        out.push(viol(format!("{loc}.rank_evidence.lvalue"), format!("recomputed verdict is {:?}", lvalue.verdict)));
    }
    match assemble_layer1(&ctx.e, spec, lvalue, layer.search.clone()) {
        Ok(expected) => diff_layers(loc, &expected, layer, &mut out),
        Err(x) => out.push(viol(loc, x.to_string())),
    }
    // the seed selects D among certified parameters; only worth asking once
    // the layer itself re-derives
    if !out.is_empty() {
        return out;
    }
    match select_layer1(&ctx, &Layer1Config { d_bound, precision, seed }) {
        Ok(sel) if sel.twist.d == d && sel.admissible_index == admissible_index => {}
        Ok(sel) => out.push(viol(
            format!("{loc}.search"),
            format!("seed {seed} selects D = {} (admissible index {}), not D = {d}", sel.twist.d, sel.admissible_index),
        )),
        Err(x) => out.push(viol(format!("{loc}.search"), format!("seed {seed} selects nothing: {x}"))),
    }
    out
}

fn verify_layer2(e: &CurveOverQ, layer1: Option<&LayerCertificate>, layer: &LayerCertificate, deep: bool) -> Vec<Violation> {
    let loc = "layers[1]";
    let mut out = Vec::new();
    let DefiningData::Kummer { spec } = &layer.defining else {
        out.push(viol(format!("{loc}.defining"), "layer 2 must be defined by a Kummer generator"));
        return out;
    };
    let Some(d) = layer1.and_then(|l| layer1_d(l).ok()) else {
        out.push(viol(format!("{loc}.defining"), "layer 2 requires a first layer"));
        return out;
    };
    if layer.index != 2 {
        out.push(viol(format!("{loc}.index"), format!("expected 2, found {}", layer.index)));
    }
    if layer.degree != 2 {
        out.push(viol(format!("{loc}.degree"), format!("only quadratic layers are supported, found degree {}", layer.degree)));
    }
    if spec.base.m != 2 * d {
        out.push(viol(format!("{loc}.defining.spec.base.m"), format!("base Q(sqrt {}) is not K1 = Q(sqrt {})", spec.base.m, 2 * d)));
        return out;
    }
    let sigma = match build_sigma(e, 2) {
        Ok(s) => s,
        Err(x) => {
            out.push(viol(loc, x.to_string()));
            return out;
        }
    };
    for (at, p) in [("defining.spec.requirements.witness_prime", spec.requirements.witness_prime), ("witness.p", layer.witness.as_ref().map(|w| w.p))] {
        if let Some(p) = p.filter(|&p| p == 2 || !nt::is_prime_u64(p)) {
            out.push(viol(format!("{loc}.{at}"), format!("witness {p} is not an odd prime")));
            return out;
        }
    }
    let policy = layer2_policy(e, &sigma, d);
    for m in relative_violations(spec, &policy) {
        out.push(viol(format!("{loc}.defining.spec"), m));
    }
    if spec.trivial {
        out.push(viol(format!("{loc}.defining.spec.trivial"), "beta is a square, so the extension is not quadratic"));
    }
    if spec.requirements != layer2_requirements(spec.requirements.witness_prime.unwrap_or(0)) {
        out.push(viol(format!("{loc}.defining.spec.requirements"), "requirements are weaker than the layer-2 recipe"));
    }
    match (&layer.witness, &spec.witness) {
        (Some(w), Some(sw)) if w == sw => {
            let p = w.p;
            let deg1 = w.ramified_prime.residue_degree() == 1 && w.unramified_prime.residue_degree() == 1;
            if !deg1 || w.ramified_prime.p != p || w.unramified_prime.p != p {
                out.push(viol(format!("{loc}.witness"), "witness primes must both have degree 1 over the same rational prime"));
            }
            if w.ramified_prime == w.unramified_prime {
                out.push(viol(format!("{loc}.witness"), "witness primes must be distinct"));
            }
            let field = &spec.base;
            if !matches!(factor_prime_in_quadratic(field, p), PrimeFactorization::Split { .. }) {
                out.push(viol(format!("{loc}.witness.p"), format!("{p} does not split in K1")));
            }
            if w.v_ramified % 2 == 0 {
                out.push(viol(
                    format!("{loc}.witness.ramified_prime"),
                    format!("witness condition fails: {} does not ramify in K2/K1", w.ramified_prime.two_element_form()),
                ));
            }
            if !w.unramified_splits || w.v_unramified % 2 == 1 {
                out.push(viol(
                    format!("{loc}.witness.unramified_prime"),
                    format!("witness condition fails: {} ramifies in K2/K1", w.unramified_prime.two_element_form()),
                ));
            }
        }
        (Some(_), _) => out.push(viol(format!("{loc}.witness"), "witness pair differs from the one in the defining data")),
        (None, _) => out.push(viol(format!("{loc}.witness"), "layers beyond the first need a witness pair")),
    }
    if layer.totally_real != (spec.base.is_real() && spec.totally_positive) {
        out.push(viol(format!("{loc}.totally_real"), "total reality flag disagrees with the sign of beta"));
    }
    if !layer.totally_real {
        out.push(viol(format!("{loc}.totally_real"), "K2 must be totally real"));
    }
    if layer.rank_evidence.level() != EvidenceLevel::EvidenceOnly {
        out.push(viol(format!("{loc}.rank_evidence"), "rank preservation beyond the first layer is evidence only"));
    }
    if !deep {
        return out;
    }
    let SearchRecord::Kummer { seed, witness_bound, beta_bound, .. } = layer.search.clone() else {
        out.push(viol(format!("{loc}.search"), "layer 2 needs a Kummer search record"));
        return out;
    };
    let Some(witness) = spec.requirements.witness_prime else {
        return out;
    };
    match assemble_layer2(e, d, (spec.a, spec.b), witness, layer.search.clone()) {
        Ok(expected) => diff_layers(loc, &expected, layer, &mut out),
        Err(x) => out.push(viol(loc, x.to_string())),
    }
    match witness_candidates(e, d, witness_bound) {
        Ok(c) if c.get(seed as usize) == Some(&witness) => {}
        Ok(c) => out.push(viol(
            format!("{loc}.search.seed"),
            format!("seed {seed} selects witness {:?}, not {witness}", c.get(seed as usize)),
        )),
        Err(x) => out.push(viol(format!("{loc}.search"), x.to_string())),
    }
    match cached_beta_search(e, d, witness, beta_bound) {
        Ok(b) if b == (spec.a, spec.b) => {}
        Ok(b) => out.push(viol(
            format!("{loc}.defining.spec"),
            format!("the first admissible generator is {} + {} w, not {} + {} w", b.0, b.1, spec.a, spec.b),
        )),
        Err(x) => out.push(viol(format!("{loc}.defining.spec"), x.to_string())),
    }
    out
}

/// Re-derive every claim of the certificate for `curve`.
pub fn verify_tower_prefix(curve: &CurveOverQ, cert: &TowerCertificate, opts: &VerifyOptions) -> VerifyReport {
    let e = curve.minimal_model();
    let mut out = Vec::new();
    if cert.version != CERT_VERSION {
        out.push(viol("version", format!("expected {CERT_VERSION}, found {}", cert.version)));
    }
    if cert.tool_version != TOOL_VERSION {
        out.push(viol("tool_version", format!("expected {TOOL_VERSION}, found {}", cert.tool_version)));
    }
    let curve_expected = serde_json::to_value(curve_record(curve)).expect("record serializes");
    diff_json("curve", &curve_expected, &serde_json::to_value(&cert.curve).expect("record serializes"), &mut out);
    if let Some(h) = &opts.input_hashes {
        if h != &cert.inputs {
            let e = serde_json::to_value(h).expect("map serializes");
            diff_json("inputs", &e, &serde_json::to_value(&cert.inputs).expect("map serializes"), &mut out);
        }
    }
    for m in cert.schedule.violations() {
        out.push(viol("schedule.prefix", m));
    }
    let schedule = match check_big_schedule(&cert.schedule) {
        Ok(r) => Some(r),
        Err(x) => {
            out.push(viol("schedule.rule", x.to_string()));
            None
        }
    };
    if !cert.layers.is_empty() {
        match cached_membership(&e) {
            Ok((true, _)) => {}
            Ok((false, why)) => out.push(viol("curve", format!("curve is not in S: {why}"))),
            Err(x) => out.push(viol("curve", x.to_string())),
        }
    }
    if cert.layers.len() > cert.schedule.prefix.len() {
        out.push(viol("layers", format!("{} layers but the schedule prefix has {} entries", cert.layers.len(), cert.schedule.prefix.len())));
    }
    let mut degree = 1u64;
    for (i, l) in cert.layers.iter().enumerate() {
        if l.index != i + 1 {
            out.push(viol(format!("layers[{i}].index"), format!("expected {}, found {}", i + 1, l.index)));
        }
        if let Some(&s) = cert.schedule.prefix.get(i) {
            if l.degree != s {
                out.push(viol(format!("layers[{i}].degree"), format!("schedule demands degree {s}, layer has {}", l.degree)));
            }
        }
        degree = degree.saturating_mul(l.degree);
        if l.absolute_degree != degree {
            out.push(viol(
                format!("layers[{i}].absolute_degree"),
                format!("product of the degrees is {degree}, recorded {}", l.absolute_degree),
            ));
        }
    }
    let layer_violations: Vec<Vec<Violation>> = cert
        .layers
        .par_iter()
        .enumerate()
        .map(|(i, l)| match i {
            0 => verify_layer1(&e, l, true),
            1 => verify_layer2(&e, cert.layers.first(), l, true),
            _ => vec![viol(format!("layers[{i}]"), "layers beyond the second are not supported")],
        })
        .collect();
    let layers: Vec<LayerReport> = cert
        .layers
        .iter()
        .zip(layer_violations)
        .map(|(l, v)| LayerReport { index: l.index, level: l.rank_evidence.level(), valid: v.is_empty(), violations: v })
        .collect();
    let descent = if cert.layers.len() >= 2 {
        match check_no_galois_descent(cert, 1) {
            Ok(r) => {
                if let Some(n) = &r.descent {
                    out.push(viol(
                        "layers[1].defining.spec",
                        format!("K2 = K1(sqrt {n}) is abelian over Q, so the witness pair cannot be asymmetric"),
                    ));
                }
                Some(r)
            }
            Err(x) => {
                out.push(viol("layers[1]", x.to_string()));
                None
            }
        }
    } else {
        None
    };
    let expected_verdict = verdict_for(&cert.layers, PrefixStatus::ValidPrefix);
    diff_json(
        "verdict",
        &serde_json::to_value(&expected_verdict).expect("verdict serializes"),
        &serde_json::to_value(&cert.verdict).expect("verdict serializes"),
        &mut out,
    );
    // a section whose hash moved was edited; if the section map itself no
    // longer matches the digest, the map (or the digest) was edited instead
    let fresh = cert.section_hashes();
    let map_sealed = cert.compute_digest() == cert.digest;
    let mut keys: Vec<&String> = fresh.keys().chain(cert.sections.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut moved = false;
    for k in keys {
        let (now, sealed) = (fresh.get(k), cert.sections.get(k));
        if now == sealed {
            continue;
        }
        moved = true;
        if map_sealed {
            out.push(viol(k.as_str(), "content differs from its sealed section digest"));
        } else {
            out.push(viol(format!("sections.{k}"), "section digest matches neither the content nor the sealed digest"));
        }
    }
    if !map_sealed && !moved {
        out.push(viol("digest", format!("recorded {} but the section map hashes to {}", cert.digest, cert.compute_digest())));
    }
    let valid = out.is_empty() && layers.iter().all(|l| l.valid);
    VerifyReport {
        status: if valid { PrefixStatus::ValidPrefix } else { PrefixStatus::Invalid },
        layers,
        violations: out,
        descent,
        schedule,
    }
}

/// Verify certificate bytes; fields the certificate type does not know are
/// reported as violations.
pub fn verify_tower_bytes(curve: &CurveOverQ, bytes: &[u8], opts: &VerifyOptions) -> Result<VerifyReport, TowerError> {
    let raw: Value = serde_json::from_slice(bytes).map_err(|e| TowerError::Malformed(e.to_string()))?;
    let cert = from_value_with_path(raw.clone())?;
    let mut report = verify_tower_prefix(curve, &cert, opts);
    let canonical = serde_json::to_value(&cert).expect("certificate serializes");
    let mut extra = Vec::new();
    diff_json("", &canonical, &raw, &mut extra);
    if !extra.is_empty() {
        report.violations.extend(extra.into_iter().map(|v| Violation { location: v.location.trim_start_matches('.').to_string(), ..v }));
        report.status = PrefixStatus::Invalid;
    }
    Ok(report)
}

/// Counterfeit second layer with a rational generator `beta = q`, for the
/// negative controls: `K2 = K1(sqrt q)` is abelian over Q.
pub fn rational_beta_layer(curve: &CurveOverQ, layer1: &LayerCertificate, q: u64, cfg: &Layer2Config) -> Result<LayerCertificate, TowerError> {
    let e = curve.minimal_model();
    let d = layer1_d(layer1)?;
    let search = SearchRecord::Kummer {
        seed: cfg.seed,
        witness_bound: cfg.witness_bound,
        beta_bound: cfg.beta_bound,
        height_bound: cfg.height_bound,
    };
    assemble_layer2(&e, d, (q as i64, 0), q, search)
}

/// Second layer for an arbitrary generator, bypassing the search; used to
/// exhibit verifier failures.
pub fn layer2_for_beta(curve: &CurveOverQ, layer1: &LayerCertificate, beta: (i64, i64), witness: u64, cfg: &Layer2Config) -> Result<LayerCertificate, TowerError> {
    let e = curve.minimal_model();
    let d = layer1_d(layer1)?;
    let search = SearchRecord::Kummer {
        seed: cfg.seed,
        witness_bound: cfg.witness_bound,
        beta_bound: cfg.beta_bound,
        height_bound: cfg.height_bound,
    };
    assemble_layer2(&e, d, beta, witness, search)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ellcurve::named::*;

    #[test]
    fn round_robin_contains_every_small_prime_repeatedly() {
        let s = EllSchedule::default();
        let seq = s.continuation(400).unwrap();
        for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23] {
            assert!(seq.iter().filter(|&&x| x == p).count() >= 5, "{p}");
        }
        assert_eq!(&seq[..6], &[2, 2, 3, 2, 3, 5]);
    }

    #[test]
    fn schedule_bigness() {
        assert!(check_big_schedule(&EllSchedule::new(vec![2, 2], RULE_ROUND_ROBIN)).unwrap().big);
        assert!(!check_big_schedule(&EllSchedule::new(vec![2, 2], RULE_CONSTANT_2)).unwrap().big);
        let r = check_big_schedule(&EllSchedule::new(vec![2, 3, 5, 7], RULE_PREFIX_ONLY)).unwrap();
        assert!(!r.big);
        assert_eq!(r.explanation, "finite prefix cannot certify bigness");
        assert!(matches!(check_big_schedule(&EllSchedule::new(vec![2], "fibonacci")), Err(TowerError::UnknownRule(_))));
    }

    #[test]
    fn schedule_entries_checked() {
        assert!(EllSchedule::new(vec![2, 4], RULE_ROUND_ROBIN).violations().iter().any(|m| m.contains("not prime")));
        assert!(EllSchedule::new(vec![3], RULE_ROUND_ROBIN).violations().iter().any(|m| m.contains("first degree")));
    }

    #[test]
    fn empty_prefix_is_vacuously_valid() {
        let e = curve_67a1();
        let cert = TowerCertificate::new(&e, EllSchedule::default(), BTreeMap::new());
        let r = verify_tower_prefix(&e, &cert, &VerifyOptions::default());
        assert_eq!(r.status, PrefixStatus::ValidPrefix, "{:?}", r.violations);
        assert_eq!(r.exit_code(), 0);
        let bytes = cert.to_json();
        let r2 = verify_tower_bytes(&e, bytes.as_bytes(), &VerifyOptions::default()).unwrap();
        assert_eq!(r, r2);
    }

    #[test]
    fn empty_prefix_for_other_curve_rejected() {
        let cert = TowerCertificate::new(&curve_67a1(), EllSchedule::default(), BTreeMap::new());
        let r = verify_tower_prefix(&curve_37a1(), &cert, &VerifyOptions::default());
        assert_eq!(r.status, PrefixStatus::Invalid);
        assert!(r.violations.iter().any(|v| v.location.starts_with("curve.")));
    }

    #[test]
    fn unknown_field_rejected() {
        let e = curve_67a1();
        let cert = TowerCertificate::new(&e, EllSchedule::default(), BTreeMap::new());
        let mut v = serde_json::to_value(&cert).unwrap();
        v["layers_extra"] = Value::Bool(true);
        let r = verify_tower_bytes(&e, &serde_json::to_vec(&v).unwrap(), &VerifyOptions::default()).unwrap();
        assert!(r.violations.iter().any(|x| x.location == "layers_extra"), "{:?}", r.violations);
    }

    #[test]
    fn descent_needs_index_one() {
        let cert = TowerCertificate::new(&curve_67a1(), EllSchedule::default(), BTreeMap::new());
        assert!(matches!(check_no_galois_descent(&cert, 2), Err(TowerError::UnsupportedIndex(2))));
        assert!(matches!(check_no_galois_descent(&cert, 1), Err(TowerError::Precondition(_))));
    }

    #[test]
    fn root_number_prediction_matches_sign_rule() {
        // w(E^(d)) = w(E) * chi_disc(-N)
        let n = BigInt::from(67);
        assert_eq!(predicted_twist_root_number(1, 8 * 969, &n), Some(1));
        assert_eq!(predicted_twist_root_number(1, 8 * 1073, &n), Some(-1));
        assert_eq!(predicted_twist_root_number(1, 8 * 67, &n), None);
        assert_eq!(predicted_twist_root_number(-1, 8 * 33, &BigInt::from(37)), Some(1));
    }

    #[test]
    fn diff_reports_paths() {
        let a = serde_json::json!({"x": [1, {"y": "2"}], "z": true});
        let b = serde_json::json!({"x": [1, {"y": "3"}], "w": 1});
        let mut out = Vec::new();
        diff_json("root", &a, &b, &mut out);
        let locs: Vec<&str> = out.iter().map(|v| v.location.as_str()).collect();
        assert_eq!(locs, vec!["root.x[1].y", "root.z", "root.w"]);
    }

    #[test]
    fn curve_outside_s_is_refused() {
        // 11.a1 has a rational 5-isogeny
        let e = CurveOverQ::from_i64([0, -1, 1, -10, -20]).unwrap();
        let r = build_layer1(&e, &Layer1Config { d_bound: 1000, ..Default::default() });
        assert!(matches!(r, Err(TowerError::Precondition(_))), "{r:?}");
    }
}
