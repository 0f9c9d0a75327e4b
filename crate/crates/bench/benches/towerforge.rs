use std::collections::BTreeMap;

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use num_bigint::BigInt;
use towerforge::analytic::{certify_twist_rank_zero, l_value_at_1};
use towerforge::ellcurve::{count_points_mod_p, named};
use towerforge::primeclass::scan_partition;
use towerforge::selmerlat::{
    add_transverse_tag, choose_drop_chain, duality_defect, generate_dual_pair, relative_dim_pipeline, DualShape, IdealTag,
    PlaceShape,
};
use towerforge::towers::{build_layer1, verify_tower_prefix, EllSchedule, Layer1Config, TowerCertificate, VerifyOptions};

fn curves(c: &mut Criterion) {
    let e = named::curve_67a1();
    c.bench_function("count_points_mod_p/67a1/p=1000003", |b| b.iter(|| count_points_mod_p(&e, black_box(1_000_003))));
    c.bench_function("scan_partition/67a1/1e4", |b| b.iter(|| scan_partition(&e, 2, black_box(10_000), false)));
}

fn l_values(c: &mut Criterion) {
    let e = named::curve_67a1();
    let mut g = c.benchmark_group("l_value");
    g.sample_size(10);
    g.bench_function("67a1", |b| b.iter(|| l_value_at_1(&e, black_box(1e-10))));
    g.bench_function("67a1^(969)", |b| b.iter(|| certify_twist_rank_zero(&e, &BigInt::from(969), black_box(1e-10))));
    g.finish();
}

fn selmer(c: &mut Criterion) {
    let shape = DualShape::uniform(&[PlaceShape::P1, PlaceShape::P1, PlaceShape::P2, PlaceShape::P0]);
    c.bench_function("generate_dual_pair/4 places", |b| b.iter(|| generate_dual_pair(2, &shape, black_box(7))));
    let s = generate_dual_pair(2, &shape, 7).unwrap();
    let a = IdealTag::new(vec![0, 2]);
    c.bench_function("duality_defect/4 places", |b| b.iter(|| duality_defect(&s, black_box(&a))));
    let (t, _) = choose_drop_chain(&s, &[0, 1, 2, 3]).unwrap();
    let l = add_transverse_tag(&s, "L", &t, 7).unwrap();
    c.bench_function("relative_dim_pipeline/4 places", |b| b.iter(|| relative_dim_pipeline(&l, black_box(&t.places), &[], "L")));
}

fn towers(c: &mut Criterion) {
    let e = named::curve_67a1();
    let built = build_layer1(&e, &Layer1Config { d_bound: 1100, ..Default::default() }).expect("layer 1 at 1100");
    let mut cert = TowerCertificate::new(&e, EllSchedule::default(), BTreeMap::new());
    cert.push_layer(built.layer);
    let opts = VerifyOptions::default();
    let mut g = c.benchmark_group("towers");
    g.sample_size(10);
    g.bench_function("verify layer-1 prefix", |b| b.iter(|| verify_tower_prefix(&e, black_box(&cert), &opts)));
    g.bench_function("certificate json round trip", |b| {
        b.iter(|| TowerCertificate::from_json(black_box(cert.to_json()).as_bytes()))
    });
    g.finish();
}

criterion_group!(benches, curves, l_values, selmer, towers);
criterion_main!(benches);
