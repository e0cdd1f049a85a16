//! Re-hash a run directory and check every artifact against its manifest.

use std::fs;
use std::path::Path;

use serde_json::Value as Json;

use crate::config::parse_spec;
use crate::run::{sha256_hex, RunError};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyReport {
    pub spec_hash: String,
    pub checked: usize,
    pub problems: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.problems.is_empty()
    }
}

pub fn verify_dir(dir: &Path) -> Result<VerifyReport, RunError> {
    let manifest: Json = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    let hash = manifest["spec_hash"].as_str().ok_or_else(|| RunError::Other("manifest has no spec_hash".into()))?;
    let files = manifest["files"].as_object().ok_or_else(|| RunError::Other("manifest has no file table".into()))?;
    let mut rep = VerifyReport { spec_hash: hash.to_string(), ..Default::default() };

    let spec_text = fs::read_to_string(dir.join("spec.ini"))?;
    let rehash = parse_spec(&spec_text)?.hash();
    if rehash != hash {
        rep.problems.push(format!("spec.ini hashes to {rehash}, manifest says {hash}"));
    }
    for (rel, digest) in files {
        let path = dir.join(rel);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) => {
                rep.problems.push(format!("{rel}: {e}"));
                continue;
            }
        };
        rep.checked += 1;
        if Some(sha256_hex(&bytes).as_str()) != digest.as_str() {
            rep.problems.push(format!("{rel}: digest mismatch"));
        }
        if rel.ends_with(".csv") {
            let first = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
            if first != format!("#spec_hash={hash}").as_bytes() {
                rep.problems.push(format!("{rel}: embedded spec hash missing or different"));
            }
        } else if rel.ends_with(".json") {
            let v: Json = serde_json::from_slice(&bytes).unwrap_or(Json::Null);
            if v["spec_hash"].as_str() != Some(hash) {
                rep.problems.push(format!("{rel}: embedded spec hash missing or different"));
            }
        }
    }
    if let Ok(entries) = fs::read_dir(dir.join("results")) {
        for e in entries.flatten() {
            let rel = format!("results/{}", e.file_name().to_string_lossy());
            if !files.contains_key(&rel) {
                rep.problems.push(format!("{rel}: not listed in the manifest"));
            }
        }
    }
    Ok(rep)
}
