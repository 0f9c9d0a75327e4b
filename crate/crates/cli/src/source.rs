//! Curve ingestion from local files, the bundled records, or a remote
//! database addressed by a URL template with a `{label}` placeholder.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use sha2::{Digest, Sha256};
use towerforge::{CurveOverQ, CurveRecord};

pub const CACHE_ENV: &str = "TOWERFORGE_CACHE";

const BUNDLED: [(&str, &str, &str); 2] = [
    ("67a1", "67a1.json", include_str!("../data/67a1.json")),
    ("37a1", "37a1.json", include_str!("../data/37a1.json")),
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SourceKind {
    LocalFile,
    RemoteDatabase,
}

#[derive(Clone, Debug)]
pub struct CurveSource {
    pub kind: SourceKind,
    /// Path for local files, URL template for the remote database.
    pub location: String,
    pub cache_dir: PathBuf,
}

#[derive(Clone, Debug)]
pub struct Ingested {
    pub curve: CurveOverQ,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn default_cache_dir() -> PathBuf {
    if let Some(d) = std::env::var_os(CACHE_ENV) {
        return PathBuf::from(d);
    }
    let home = std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    home.join(".cache").join("towerforge")
}

/// Parse a curve record; invariants are always recomputed and any claimed
/// disc or conductor must agree.
pub fn parse_record(bytes: &[u8], origin: &str) -> Result<CurveOverQ> {
    let record: CurveRecord = serde_json::from_slice(bytes).with_context(|| format!("parse error in {origin}"))?;
    record.to_curve().with_context(|| format!("invalid curve record in {origin}"))
}

fn normalize_label(label: &str) -> String {
    label.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase()
}

pub fn bundled(label: &str) -> Option<(&'static str, &'static str)> {
    let key = normalize_label(label);
    BUNDLED.iter().find(|(k, _, _)| *k == key).map(|(_, f, b)| (*f, *b))
}

impl CurveSource {
    pub fn local(path: impl Into<String>) -> Self {
        CurveSource { kind: SourceKind::LocalFile, location: path.into(), cache_dir: default_cache_dir() }
    }

    pub fn remote(template: impl Into<String>, cache_dir: PathBuf) -> Self {
        CurveSource { kind: SourceKind::RemoteDatabase, location: template.into(), cache_dir }
    }

    fn cache_path(&self, label: &str) -> PathBuf {
        self.cache_dir.join(format!("{}.json", normalize_label(label)))
    }

    pub fn ingest(&self, label: Option<&str>) -> Result<Ingested> {
        match self.kind {
            SourceKind::LocalFile => {
                let bytes = std::fs::read(&self.location).with_context(|| format!("reading {}", self.location))?;
                let curve = parse_record(&bytes, &self.location)?;
                Ok(Ingested { curve, sha256: sha256_hex(&bytes) })
            }
            SourceKind::RemoteDatabase => {
                let label = label.ok_or_else(|| anyhow!("a remote source needs a curve label"))?;
                let path = self.cache_path(label);
                let bytes = match std::fs::read(&path) {
                    Ok(b) => b,
                    Err(_) => {
                        let url = self.location.replace("{label}", label);
                        let b = fetch(&url)?;
                        std::fs::create_dir_all(&self.cache_dir)
                            .with_context(|| format!("creating cache {}", self.cache_dir.display()))?;
                        std::fs::write(&path, &b).with_context(|| format!("writing cache {}", path.display()))?;
                        b
                    }
                };
                let curve = parse_record(&bytes, &path.display().to_string())?;
                if let Some(l) = &curve.label {
                    if normalize_label(l) != normalize_label(label) {
                        bail!("record label {l} does not match the requested {label}");
                    }
                }
                Ok(Ingested { curve, sha256: sha256_hex(&bytes) })
            }
        }
    }
}

fn fetch(url: &str) -> Result<Vec<u8>> {
    if let Some(p) = url.strip_prefix("file://") {
        return std::fs::read(p).with_context(|| format!("reading {url}"));
    }
    fetch_http(url)
}

#[cfg(feature = "remote")]
fn fetch_http(url: &str) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let resp = ureq::get(url).call().with_context(|| format!("fetching {url}"))?;
    std::io::Read::read_to_end(&mut resp.into_reader(), &mut buf)?;
    Ok(buf)
}

#[cfg(not(feature = "remote"))]
fn fetch_http(url: &str) -> Result<Vec<u8>> {
    bail!("cannot fetch {url}: this build has no HTTP client (enable the `remote` feature) and the cache is cold")
}

/// Resolve `--curve`: an existing path, a bundled label, or a label looked up
/// through the remote template.
pub fn resolve(arg: &str, remote: Option<&str>) -> Result<Ingested> {
    if Path::new(arg).exists() {
        return CurveSource::local(arg).ingest(None);
    }
    if let Some(t) = remote {
        return CurveSource::remote(t, default_cache_dir()).ingest(Some(arg));
    }
    if let Some((file, body)) = bundled(arg) {
        let curve = parse_record(body.as_bytes(), file)?;
        return Ok(Ingested { curve, sha256: sha256_hex(body.as_bytes()) });
    }
    bail!("no curve file or bundled record named {arg:?}; pass a path, 67a1, 37a1, or --remote with a URL template")
}
