//! Rejects the bundled curve records unless their recomputed invariants match.

use std::path::Path;

use num_bigint::BigInt;
use towerforge::CurveRecord;

fn check(file: &str, disc: i64, conductor: i64) {
    let path = Path::new("data").join(file);
    println!("cargo:rerun-if-changed={}", path.display());
    let bytes = std::fs::read(&path).unwrap_or_else(|e| panic!("bundled {file}: {e}"));
    let record: CurveRecord = serde_json::from_slice(&bytes).unwrap_or_else(|e| panic!("bundled {file}: {e}"));
    let curve = record.to_curve().unwrap_or_else(|e| panic!("bundled {file}: {e}"));
    let d = curve.minimal_disc();
    let n = curve.conductor();
    if d != BigInt::from(disc) || n != BigInt::from(conductor) {
        panic!("bundled {file}: recomputed disc {d} and conductor {n}, expected {disc} and {conductor}");
    }
}

fn main() {
    check("67a1.json", -67, 67);
    check("37a1.json", 37, 37);
}
