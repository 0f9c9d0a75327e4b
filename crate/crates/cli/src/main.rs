mod source;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use towerforge::analytic::{certify_twist_rank_zero, l_value_at_1, LValueCertificate};
use towerforge::extbuilder::{find_twist_parameters, TwistConstraints, DEFAULT_BETA_BOUND, DEFAULT_D_BOUND};
use towerforge::membership::{check_s0, S0Status};
use towerforge::primeclass::{build_sigma, scan_partition};
use towerforge::selmerlat::{
    add_transverse_tag, choose_drop_chain, duality_defect, generate_dual_pair, relative_dim_pipeline, DualShape,
    IdealTag, PlaceShape, PlaceSpec,
};
use towerforge::towers::{
    build_layer1, build_layer2_candidate, check_big_schedule, verify_tower_bytes, verify_tower_prefix, EllSchedule,
    Layer1Config, Layer2Config, TowerCertificate, TowerError, VerifyOptions, DEFAULT_HEIGHT_BOUND,
    DEFAULT_LAYER_PRECISION, DEFAULT_WITNESS_BOUND, RULE_ROUND_ROBIN, TOOL_VERSION,
};
use towerforge::CurveRecord;

use source::{resolve, Ingested};

#[derive(Parser, Debug)]
#[command(name = "towerforge", version, about = "Certify finite prefixes of big non-large towers over Q")]
struct Cli {
    /// Worker threads for the parallel searches (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Write JSON here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// URL template with a `{label}` placeholder; `--curve` is then a label
    /// fetched once and kept in $TOWERFORGE_CACHE.
    #[arg(long, global = true)]
    remote: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct CurveArg {
    /// Curve record file, or a bundled label (67a1, 37a1).
    #[arg(long)]
    curve: String,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide membership in S and S_0.
    CheckMembership {
        #[command(flatten)]
        curve: CurveArg,
        #[arg(long, default_value_t = DEFAULT_HEIGHT_BOUND)]
        height_bound: u64,
    },
    /// Partition the primes below a bound into P0, P1, P2.
    ClassifyPrimes {
        #[command(flatten)]
        curve: CurveArg,
        #[arg(long, default_value_t = 2)]
        ell: u64,
        #[arg(long, default_value_t = 100_000)]
        primes_bound: u64,
        /// Include the per-prime array.
        #[arg(long)]
        per_prime: bool,
    },
    /// Certify rank 0 of a curve or of its quadratic twist from L(E, 1).
    CertifyRank0 {
        #[command(flatten)]
        curve: CurveArg,
        #[arg(long, allow_hyphen_values = true)]
        twist: Option<i64>,
        #[arg(long, default_value_t = DEFAULT_LAYER_PRECISION)]
        precision: f64,
    },
    /// Search for admissible quadratic twist parameters.
    FindTwist {
        #[command(flatten)]
        curve: CurveArg,
        #[arg(long, default_value_t = 2)]
        ell: u64,
        #[arg(long, default_value_t = DEFAULT_D_BOUND)]
        d_bound: u64,
        /// Primes that must ramify, comma separated.
        #[arg(long, value_delimiter = ',')]
        ramify: Vec<u64>,
        #[arg(long, default_value_t = 2)]
        min_good: usize,
        #[arg(long, default_value_t = 2)]
        min_p0: usize,
        /// Position in the canonical order of admissible parameters.
        #[arg(long, default_value_t = 0)]
        seed: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Write a tower certificate with no layers.
    InitTower {
        #[command(flatten)]
        curve: CurveArg,
        #[command(flatten)]
        schedule: ScheduleArgs,
    },
    /// Build the first layer F = Q(sqrt 2D).
    BuildLayer1 {
        #[command(flatten)]
        curve: CurveArg,
        #[arg(long, default_value_t = DEFAULT_D_BOUND)]
        d_bound: u64,
        #[arg(long, default_value_t = DEFAULT_LAYER_PRECISION)]
        precision: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        schedule: ScheduleArgs,
    },
    /// Extend a one-layer certificate by a quadratic Kummer layer.
    BuildLayer2 {
        #[arg(long)]
        cert: PathBuf,
        /// Defaults to the curve recorded in the certificate.
        #[arg(long)]
        curve: Option<String>,
        #[arg(long, default_value_t = DEFAULT_BETA_BOUND)]
        beta_bound: u64,
        #[arg(long, default_value_t = DEFAULT_HEIGHT_BOUND)]
        height_bound: u64,
        /// Bound for the witness prime search.
        #[arg(long, default_value_t = DEFAULT_WITNESS_BOUND)]
        primes_bound: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-derive and check every layer of a certificate.
    VerifyTower {
        #[arg(long)]
        cert: PathBuf,
        /// Defaults to the curve recorded in the certificate.
        #[arg(long)]
        curve: Option<String>,
    },
    /// Decide whether an ell-schedule is big.
    CheckSchedule {
        #[command(flatten)]
        schedule: ScheduleArgs,
    },
    /// Run the Selmer-structure pipeline on a synthetic dual pair.
    SelmerDemo {
        #[arg(long, default_value_t = 2)]
        ell: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Local dimensions, comma separated; 0, 2 and 4 get the P0, P1, P2 shapes.
        #[arg(long, value_delimiter = ',', default_value = "2,2,2,2,2")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        kernel_dim: usize,
        #[arg(long, default_value_t = 3)]
        forced_sel: usize,
    },
}

#[derive(Args, Debug)]
struct ScheduleArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,2")]
    prefix: Vec<u64>,
    #[arg(long, default_value = RULE_ROUND_ROBIN)]
    rule: String,
}

impl ScheduleArgs {
    fn schedule(&self) -> EllSchedule {
        EllSchedule::new(self.prefix.clone(), self.rule.clone())
    }
}

struct Outcome {
    json: String,
    code: u8,
}

fn pretty<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn envelope(command: &str, inputs: Value, parameters: Value, result: Value) -> Value {
    json!({
        "tool_version": TOOL_VERSION,
        "command": command,
        "inputs": inputs,
        "parameters": parameters,
        "result": result,
    })
}

fn curve_inputs(c: &Ingested) -> Value {
    json!({ "curve": c.sha256 })
}

fn rank_code(c: &LValueCertificate) -> u8 {
    if c.is_certified() {
        0
    } else {
        2
    }
}

fn curve_for_cert(arg: Option<&str>, bytes: &[u8], remote: Option<&str>) -> Result<(towerforge::CurveOverQ, VerifyOptions)> {
    if let Some(a) = arg {
        let c = resolve(a, remote)?;
        let hashes = BTreeMap::from([("curve".to_string(), c.sha256.clone())]);
        return Ok((c.curve, VerifyOptions { input_hashes: Some(hashes) }));
    }
    let v: Value = serde_json::from_slice(bytes).context("certificate is not JSON")?;
    let rec = v.get("curve").ok_or_else(|| anyhow!("certificate has no curve record"))?;
    let rec: CurveRecord = serde_json::from_value(rec.clone()).context("certificate curve record")?;
    Ok((rec.to_curve().context("certificate curve record")?, VerifyOptions::default()))
}

fn run(cli: &Cli) -> Result<Outcome> {
    let remote = cli.remote.as_deref();
    match &cli.command {
        Command::CheckMembership { curve, height_bound } => {
            let c = resolve(&curve.curve, remote)?;
            let report = check_s0(&c.curve, *height_bound)?;
            let code = if report.s0_status == S0Status::Indeterminate { 2 } else { 0 };
            let out = envelope(
                "check-membership",
                curve_inputs(&c),
                json!({ "height_bound": height_bound.to_string() }),
                serde_json::to_value(&report)?,
            );
            Ok(Outcome { json: pretty(&out)?, code })
        }
        Command::ClassifyPrimes { curve, ell, primes_bound, per_prime } => {
            let c = resolve(&curve.curve, remote)?;
            let report = scan_partition(&c.curve, *ell, *primes_bound, *per_prime)?;
            let out = envelope(
                "classify-primes",
                curve_inputs(&c),
                json!({ "ell": ell.to_string(), "primes_bound": primes_bound.to_string() }),
                serde_json::to_value(&report)?,
            );
            Ok(Outcome { json: pretty(&out)?, code: 0 })
        }
        Command::CertifyRank0 { curve, twist, precision } => {
            let c = resolve(&curve.curve, remote)?;
            let cert = match twist {
                Some(d) => certify_twist_rank_zero(&c.curve, &(*d).into(), *precision)?,
                None => l_value_at_1(&c.curve, *precision)?,
            };
            let out = envelope(
                "certify-rank0",
                curve_inputs(&c),
                json!({ "twist": twist.map(|d| d.to_string()), "precision": precision }),
                serde_json::to_value(&cert)?,
            );
            Ok(Outcome { json: pretty(&out)?, code: rank_code(&cert) })
        }
        Command::FindTwist { curve, ell, d_bound, ramify, min_good, min_p0, seed, count } => {
            let c = resolve(&curve.curve, remote)?;
            let e = c.curve.minimal_model();
            let sigma = build_sigma(&e, *ell)?;
            let tc = TwistConstraints {
                bound: *d_bound,
                min_good_divisors: *min_good,
                min_p0_divisors: *min_p0,
                index: *seed,
                ..TwistConstraints::default()
            };
            let found = find_twist_parameters(&e, *ell, ramify, &sigma, &tc, *count)?;
            let code = if found.len() == *count { 0 } else { 2 };
            let out = envelope(
                "find-twist",
                curve_inputs(&c),
                json!({
                    "ell": ell.to_string(),
                    "ramify": ramify.iter().map(u64::to_string).collect::<Vec<_>>(),
                    "constraints": tc,
                    "count": count,
                }),
                serde_json::to_value(&found)?,
            );
            Ok(Outcome { json: pretty(&out)?, code })
        }
        Command::InitTower { curve, schedule } => {
            let c = resolve(&curve.curve, remote)?;
            let mut cert = TowerCertificate::new(&c.curve, schedule.schedule(), BTreeMap::from([("curve".into(), c.sha256)]));
            cert.seal();
            Ok(Outcome { json: cert.to_json() + "\n", code: 0 })
        }
        Command::BuildLayer1 { curve, d_bound, precision, seed, schedule } => {
            let c = resolve(&curve.curve, remote)?;
            let cfg = Layer1Config { d_bound: *d_bound, precision: *precision, seed: *seed };
            let build = match build_layer1(&c.curve, &cfg) {
                Ok(b) => b,
                Err(e @ (TowerError::RankIndeterminate { .. } | TowerError::NotEnoughCertified { .. })) => {
                    let outcomes = match &e {
                        TowerError::RankIndeterminate { outcomes, .. } | TowerError::NotEnoughCertified { outcomes, .. } => outcomes,
                        _ => unreachable!(),
                    };
                    for o in outcomes {
                        eprintln!("D = {}: {}", o.d, o.outcome);
                    }
                    let code = if matches!(e, TowerError::RankIndeterminate { .. }) { 2 } else { 1 };
                    return Err(anyhow!(e).context(ExitWith(code)));
                }
                Err(e) => return Err(e.into()),
            };
            for o in &build.passed_over {
                eprintln!("passed over D = {}: {}", o.d, o.outcome);
            }
            let mut cert = TowerCertificate::new(&c.curve, schedule.schedule(), BTreeMap::from([("curve".into(), c.sha256)]));
            cert.push_layer(build.layer);
            cert.seal();
            let report = verify_tower_prefix(&c.curve, &cert, &VerifyOptions::default());
            for v in report.all_violations() {
                eprintln!("violation: {v}");
            }
            Ok(Outcome { json: cert.to_json() + "\n", code: report.exit_code() as u8 })
        }
        Command::BuildLayer2 { cert, curve, beta_bound, height_bound, primes_bound, seed } => {
            let bytes = std::fs::read(cert).with_context(|| format!("reading {}", cert.display()))?;
            let (e, opts) = curve_for_cert(curve.as_deref(), &bytes, remote)?;
            let mut tower = TowerCertificate::from_json(&bytes)?;
            if tower.layers.len() != 1 {
                bail!("build-layer2 needs a certificate with exactly one layer, found {}", tower.layers.len());
            }
            let cfg = Layer2Config {
                beta_bound: *beta_bound,
                height_bound: *height_bound,
                witness_bound: *primes_bound,
                seed: *seed,
            };
            let layer = build_layer2_candidate(&e, &tower.layers[0], &cfg)?;
            tower.push_layer(layer);
            tower.seal();
            let report = verify_tower_prefix(&e, &tower, &opts);
            for v in report.all_violations() {
                eprintln!("violation: {v}");
            }
            Ok(Outcome { json: tower.to_json() + "\n", code: report.exit_code() as u8 })
        }
        Command::VerifyTower { cert, curve } => {
            let bytes = std::fs::read(cert).with_context(|| format!("reading {}", cert.display()))?;
            let (e, opts) = curve_for_cert(curve.as_deref(), &bytes, remote)?;
            let report = verify_tower_bytes(&e, &bytes, &opts)?;
            Ok(Outcome { json: pretty(&report)?, code: report.exit_code() as u8 })
        }
        Command::CheckSchedule { schedule } => {
            let report = check_big_schedule(&schedule.schedule())?;
            let code = if report.big { 0 } else { 2 };
            Ok(Outcome { json: pretty(&report)?, code })
        }
        Command::SelmerDemo { ell, seed, dims, kernel_dim, forced_sel } => {
            let shape = DualShape {
                places: dims
                    .iter()
                    .map(|&dim| PlaceSpec {
                        dim,
                        shape: match dim {
                            0 => PlaceShape::P0,
                            2 => PlaceShape::P1,
                            4 => PlaceShape::P2,
                            _ => PlaceShape::Generic,
                        },
                    })
                    .collect(),
                kernel_dim: *kernel_dim,
                forced_sel: *forced_sel,
            };
            let s = generate_dual_pair(*ell, &shape, *seed)?;
            let all: Vec<usize> = (0..dims.len()).collect();
            let (t, chain) = choose_drop_chain(&s, &all)?;
            let duality = duality_defect(&s, &t)?;
            let full = duality_defect(&s, &IdealTag::new(all))?;
            let l = add_transverse_tag(&s, "L", &t, *seed)?;
            let pipeline = relative_dim_pipeline(&l, &t.places, &[], "L")?;
            let ok = duality.holds() && full.holds() && pipeline.containment && pipeline.matches_direct_kernel;
            let out = json!({
                "tool_version": TOOL_VERSION,
                "command": "selmer-demo",
                "parameters": { "ell": ell, "seed": seed.to_string(), "shape": shape },
                "result": {
                    "global_dim": s.global_dim,
                    "duality_at_chain": duality,
                    "duality_at_all_places": full,
                    "drop_chain": chain,
                    "pipeline": pipeline,
                    "consistent": ok,
                },
            });
            Ok(Outcome { json: pretty(&out)?, code: if ok { 0 } else { 1 } })
        }
    }
}

/// Carries a non-default exit code through an error chain.
#[derive(Debug)]
struct ExitWith(u8);

impl std::fmt::Display for ExitWith {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "exit status {}", self.0)
    }
}

impl std::error::Error for ExitWith {}

fn emit(out: Option<&PathBuf>, json: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, json).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut s = std::io::stdout().lock();
            s.write_all(json.as_bytes())?;
            s.flush()?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: --jobs: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli).and_then(|o| emit(cli.out.as_ref(), &o.json).map(|_| o.code)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let code = e.downcast_ref::<ExitWith>().map_or(1, |x| x.0);
            let msg = e.chain().filter(|c| !c.is::<ExitWith>()).map(|c| c.to_string()).collect::<Vec<_>>().join(": ");
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
