use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde_json::Value;
use towerforge::ellcurve::named::{curve_37a1, curve_67a1};
use towerforge::extbuilder::TwistConstraints;
use towerforge::nt;
use towerforge::towers::*;

// PARI/GP 2.15: lfun(ellinit(elltwist(E, 8*D)), 1)
const L_67A1_TWIST_1938: f64 = 0.231475019419088;
const L_37A1_TWIST_66: f64 = 0.736938575899334;

struct Built {
    layer1: Layer1Build,
    cert: TowerCertificate,
}

fn built_67a1() -> &'static Built {
    static CELL: OnceLock<Built> = OnceLock::new();
    CELL.get_or_init(|| {
        let e = curve_67a1();
        let layer1 = build_layer1(&e, &Layer1Config { d_bound: 10_000, ..Default::default() }).unwrap();
        let layer2 = build_layer2_candidate(&e, &layer1.layer, &Layer2Config::default()).unwrap();
        let mut inputs = BTreeMap::new();
        inputs.insert("curve".to_string(), "0".repeat(64));
        let mut cert = TowerCertificate::new(&e, EllSchedule::default(), inputs);
        cert.push_layer(layer1.layer.clone());
        cert.push_layer(layer2);
        Built { layer1, cert }
    })
}

fn opts() -> VerifyOptions {
    VerifyOptions { input_hashes: Some(built_67a1().cert.inputs.clone()) }
}

fn d_of(l: &LayerCertificate) -> i64 {
    match &l.defining {
        DefiningData::Twist { d, .. } => *d,
        _ => panic!("not a twist layer"),
    }
}

#[test]
fn layer1_for_67a1_matches_oracles() {
    let b = built_67a1();
    let l = &b.layer1.layer;
    // independent scan: D = 1 mod 8 squarefree, odd primes outside {67}, at least two
    // with E^(2)(F_p)[2] = 0 ... the first one with positive root number
    let d = d_of(l);
    assert_eq!(d, 969);
    assert!(d > 0 && nt::is_squarefree_i64(d) && d % 8 == 1);
    assert_eq!((2 * d) % 4, 2);
    assert!(b.layer1.passed_over.is_empty());
    let RankEvidence::Certified { lvalue, good_primes, .. } = &l.rank_evidence else { panic!() };
    assert!(lvalue.is_certified());
    assert_eq!(lvalue.conductor, "4026264768");
    assert!((lvalue.l_value - L_67A1_TWIST_1938).abs() < 1e-9);
    assert_eq!(good_primes[0], 2);
    assert_eq!(d % good_primes[1] as i64, 0);
    let dj = l.disjointness.as_ref().unwrap();
    assert!(dj.wild_at_2 && dj.disc_valuation_at_2 == 3 && dj.tame_in_torsion_fields);
    assert!(l.totally_real);
}

#[test]
fn layer1_for_37a1_preserves_rank_one() {
    let e = curve_37a1();
    let b = build_layer1(&e, &Layer1Config { d_bound: 10_000, ..Default::default() }).unwrap();
    assert_eq!(d_of(&b.layer), 33);
    let RankEvidence::Certified { lvalue, .. } = &b.layer.rank_evidence else { panic!() };
    assert!((lvalue.l_value - L_37A1_TWIST_66).abs() < 1e-9);
    assert_eq!(lvalue.conductor, "2578752");
    let mut cert = TowerCertificate::new(&e, EllSchedule::default(), BTreeMap::new());
    cert.push_layer(b.layer);
    let r = verify_tower_prefix(&e, &cert, &VerifyOptions::default());
    assert_eq!(r.status, PrefixStatus::ValidPrefix, "{:?}", r.violations);
    assert_eq!(r.exit_code(), 0);
}

#[test]
fn seeds_give_distinct_parameters() {
    let e = curve_67a1();
    let b = build_layer1(&e, &Layer1Config { d_bound: 10_000, seed: 1, ..Default::default() }).unwrap();
    // 1073, 1081, 1121, 1241, 1513 have root number -1
    assert_eq!(d_of(&b.layer), 2001);
    assert_eq!(b.passed_over.len(), 6);
    assert!(b.passed_over[0].outcome.contains("passed over"));
    let mut cert = TowerCertificate::new(&e, EllSchedule::default(), BTreeMap::new());
    cert.push_layer(b.layer);
    assert_eq!(verify_tower_prefix(&e, &cert, &VerifyOptions::default()).status, PrefixStatus::ValidPrefix);
}

#[test]
fn admissible_index_agrees_with_independent_scan() {
    let b = built_67a1();
    let SearchRecord::Twist { admissible_index, .. } = b.layer1.layer.search else { panic!() };
    let DefiningData::Twist { twist, .. } = &b.layer1.layer.defining else { panic!() };
    assert_eq!(twist.constraints, TwistConstraints::layer1(10_000, admissible_index));
    assert_eq!(admissible_index, 0);
}

#[test]
fn two_layer_prefix_is_valid_and_evidence_only() {
    let b = built_67a1();
    let e = curve_67a1();
    let r = verify_tower_prefix(&e, &b.cert, &opts());
    assert_eq!(r.status, PrefixStatus::ValidPrefix, "{:?}", r.all_violations().collect::<Vec<_>>());
    assert_eq!(r.exit_code(), 2);
    assert_eq!(r.layers[0].level, EvidenceLevel::Certified);
    assert_eq!(r.layers[1].level, EvidenceLevel::EvidenceOnly);
    assert!(r.descent.as_ref().unwrap().descent.is_none());
    assert!(r.schedule.as_ref().unwrap().big);
    let l2 = &b.cert.layers[1];
    let w = l2.witness.as_ref().unwrap();
    assert_eq!(w.p, 23);
    assert!(w.v_ramified % 2 == 1 && w.v_unramified.is_multiple_of(2) && w.unramified_splits);
    let RankEvidence::PointSearchOnly { height_bound, new_points, .. } = &l2.rank_evidence else { panic!() };
    assert_eq!(*height_bound, 20);
    assert!(new_points.is_empty());
    assert_eq!(l2.absolute_degree, 4);
}

#[test]
fn verification_is_bit_stable() {
    let b = built_67a1();
    let e = curve_67a1();
    let bytes = b.cert.to_json();
    let r1 = serde_json::to_string(&verify_tower_bytes(&e, bytes.as_bytes(), &opts()).unwrap()).unwrap();
    let r2 = serde_json::to_string(&verify_tower_bytes(&e, bytes.as_bytes(), &opts()).unwrap()).unwrap();
    assert_eq!(r1, r2);
    let again = TowerCertificate::from_json(bytes.as_bytes()).unwrap();
    assert_eq!(again.to_json(), bytes);
}

#[test]
fn ramifying_second_witness_prime_is_pinpointed() {
    let b = built_67a1();
    let e = curve_67a1();
    let DefiningData::Kummer { spec } = &b.cert.layers[1].defining else { panic!() };
    // multiplying by 23 swaps the parities at the two primes above 23
    let bad = layer2_for_beta(&e, &b.layer1.layer, (23 * spec.a, 23 * spec.b), 23, &Layer2Config::default()).unwrap();
    let mut cert = b.cert.clone();
    cert.layers[1] = bad;
    cert.seal();
    let r = verify_tower_prefix(&e, &cert, &opts());
    assert_eq!(r.status, PrefixStatus::Invalid);
    assert!(
        r.all_violations().any(|v| v.location == "layers[1].witness.unramified_prime" && v.message.contains("ramifies in K2/K1")),
        "{:?}",
        r.all_violations().collect::<Vec<_>>()
    );
}

#[test]
fn rational_beta_counterfeit_has_descent() {
    let b = built_67a1();
    let e = curve_67a1();
    let fake = rational_beta_layer(&e, &b.layer1.layer, 23, &Layer2Config::default()).unwrap();
    let mut cert = b.cert.clone();
    cert.layers[1] = fake;
    cert.seal();
    let d = check_no_galois_descent(&cert, 1).unwrap();
    assert_eq!(d.descent.as_deref(), Some("23"));
    assert!(d.exhaustive);
    let r = verify_tower_prefix(&e, &cert, &opts());
    assert_eq!(r.status, PrefixStatus::Invalid);
    assert!(r.all_violations().any(|v| v.location.starts_with("layers[1].witness")));
    assert!(r.violations.iter().any(|v| v.message.contains("abelian over Q")));
}

#[test]
fn genuine_second_layers_have_no_descent() {
    let b = built_67a1();
    let e = curve_67a1();
    for seed in 0..3 {
        let l2 = build_layer2_candidate(&e, &b.layer1.layer, &Layer2Config { seed, ..Default::default() }).unwrap();
        let mut cert = b.cert.clone();
        cert.layers[1] = l2;
        cert.seal();
        let d = check_no_galois_descent(&cert, 1).unwrap();
        assert!(d.descent.is_none(), "seed {seed}");
        assert_eq!(d.candidates_checked, 2 << d.primes.len());
    }
}

#[test]
fn witness_exhaustion_is_reported() {
    let b = built_67a1();
    let e = curve_67a1();
    let r = build_layer2_candidate(&e, &b.layer1.layer, &Layer2Config { witness_bound: 20, ..Default::default() });
    assert!(r.unwrap_err().to_string().contains("search exhausted"));
}

#[test]
fn layer1_bound_exhaustion() {
    let r = build_layer1(&curve_67a1(), &Layer1Config { d_bound: 500, ..Default::default() });
    assert!(matches!(r, Err(TowerError::Ext(_))), "{r:?}");
    let r = build_layer1(&curve_67a1(), &Layer1Config { d_bound: 1100, ..Default::default() });
    assert!(r.is_ok());
    let r = build_layer1(&curve_67a1(), &Layer1Config { d_bound: 1100, seed: 1, ..Default::default() });
    assert!(matches!(r, Err(TowerError::NotEnoughCertified { .. })), "{r:?}");
}

#[test]
fn layer_count_exceeding_schedule_is_rejected() {
    let b = built_67a1();
    let mut cert = b.cert.clone();
    cert.schedule.prefix = vec![2];
    cert.seal();
    let r = verify_tower_prefix(&curve_67a1(), &cert, &opts());
    assert!(r.violations.iter().any(|v| v.location == "layers"));
}

fn leaves(v: &Value, path: String, out: &mut Vec<String>) {
    match v {
        Value::Object(m) => m.iter().for_each(|(k, x)| leaves(x, format!("{path}/{k}"), out)),
        Value::Array(a) => a.iter().enumerate().for_each(|(i, x)| leaves(x, format!("{path}/{i}"), out)),
        _ => out.push(path),
    }
}

fn tamper(v: &Value) -> Value {
    match v {
        Value::String(s) => match s.parse::<i128>() {
            Ok(n) => Value::String((n + 1).to_string()),
            Err(_) => Value::String(format!("{s}x")),
        },
        Value::Number(n) => match n.as_i64() {
            Some(k) => Value::from(k + 1),
            None => Value::from(n.as_f64().unwrap() * 2.0 + 1.0),
        },
        Value::Bool(b) => Value::Bool(!b),
        Value::Null => Value::Bool(true),
        _ => unreachable!(),
    }
}

/// JSON pointer `/layers/0/x` to the verifier's `layers[0].x`.
fn dotted(pointer: &str) -> String {
    let mut s = String::new();
    for seg in pointer.split('/').skip(1) {
        if seg.parse::<usize>().is_ok() {
            s.push_str(&format!("[{seg}]"));
        } else {
            if !s.is_empty() {
                s.push('.');
            }
            s.push_str(seg);
        }
    }
    s
}

#[test]
fn tampering_any_field_is_rejected() {
    let b = built_67a1();
    let e = curve_67a1();
    let base = serde_json::to_value(&b.cert).unwrap();
    let mut paths = Vec::new();
    leaves(&base, String::new(), &mut paths);
    assert!(paths.len() > 100);
    let mut unpinned = Vec::new();
    for p in &paths {
        let mut v = base.clone();
        let slot = v.pointer_mut(p).unwrap();
        *slot = tamper(slot);
        let bytes = serde_json::to_vec(&v).unwrap();
        match verify_tower_bytes(&e, &bytes, &opts()) {
            Err(err) => assert!(err.to_string().contains("at "), "{p}: {err}"),
            Ok(r) => {
                assert_eq!(r.status, PrefixStatus::Invalid, "tampering {p} was accepted");
                assert_eq!(r.exit_code(), 1);
                // a violation in the same top-level section, other than the digest
                // itself unless the digest was the target; schedule entries are
                // pinned to the layer whose degree they contradict
                let target = dotted(p);
                let head = match target.find(']') {
                    Some(i) if target.starts_with("layers[") => &target[..=i],
                    _ => target.split(['.', '[']).next().unwrap(),
                };
                let pinned = r.all_violations().any(|x| {
                    (x.location != "digest" || target == "digest")
                        && (x.location.starts_with(head) || (head == "schedule" && x.location.starts_with("layers")))
                });
                if !pinned {
                    unpinned.push(p.clone());
                }
            }
        }
    }
    assert!(unpinned.is_empty(), "only the digest caught: {unpinned:?}");
}
