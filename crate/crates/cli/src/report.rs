use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), pass, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub threads: usize,
}

/// The JSON document every subcommand writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: u64,
    pub seed_hex: String,
    pub config: BTreeMap<String, String>,
    pub results: Value,
    pub censored: u64,
    pub checks: Vec<Check>,
    pub passed: bool,
    /// SHA-256 over every field above, serialized as compact JSON.
    pub digest: String,
    pub timing: Timing,
}

#[derive(Serialize)]
struct Digested<'a> {
    tool: &'a str,
    version: &'a str,
    subcommand: &'a str,
    seed: u64,
    seed_hex: &'a str,
    config: &'a BTreeMap<String, String>,
    results: &'a Value,
    censored: u64,
    checks: &'a [Check],
    passed: bool,
}

impl RunReport {
    pub fn new(
        subcommand: &str,
        seed: u64,
        config: BTreeMap<String, String>,
        results: Value,
        censored: u64,
        checks: Vec<Check>,
        timing: Timing,
    ) -> Self {
        let passed = checks.iter().all(|c| c.pass);
        let mut r = Self {
            tool: "coalweb".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            seed,
            seed_hex: format!("0x{seed:016x}"),
            config,
            results,
            censored,
            checks,
            passed,
            digest: String::new(),
            timing,
        };
        r.digest = r.compute_digest();
        r
    }

    pub fn compute_digest(&self) -> String {
        let body = Digested {
            tool: &self.tool,
            version: &self.version,
            subcommand: &self.subcommand,
            seed: self.seed,
            seed_hex: &self.seed_hex,
            config: &self.config,
            results: &self.results,
            censored: self.censored,
            checks: &self.checks,
            passed: self.passed,
        };
        let bytes = serde_json::to_vec(&body).expect("report serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(wall: f64, threads: usize) -> RunReport {
        RunReport::new(
            "convergence",
            7,
            BTreeMap::from([("trials".into(), "10".into())]),
            serde_json::json!({"points": [1, 2]}),
            0,
            vec![Check::new("a", true, "")],
            Timing { wall_seconds: wall, threads },
        )
    }

    #[test]
    fn digest_ignores_timing() {
        let (a, b) = (report(1.0, 1), report(2.5, 4));
        assert_eq!(a.digest, b.digest);
        assert_eq!(a.digest.len(), 64);
        let mut c = report(1.0, 1);
        c.seed = 8;
        assert_ne!(c.compute_digest(), a.digest);
        assert!(a.passed);
    }
}
