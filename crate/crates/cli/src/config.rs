//! Flat `key = value` configuration with command-line overrides.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

/// Every key any subcommand understands.
pub const KNOWN_KEYS: &[&str] = &[
    "experiment",
    "seed",
    "threads",
    "out",
    "epsilon",
    "delta",
    "P",
    "horizon",
    "window",
    "trials",
    "cap",
    "runs",
    "starts",
    "spacing",
    "strip_lower",
    "strip_upper",
    "mode",
    "factor",
    "duration_samples",
    "duration_cap",
    "fractions",
    "steps",
    "offset",
];

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; a key may appear only once.
pub fn parse(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`, got {raw:?}", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !KNOWN_KEYS.contains(&k) {
            return Err(CliError::Config(format!("line {}: unknown key {k:?}", n + 1)));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(CliError::Config(format!("line {}: duplicate key {k:?}", n + 1)));
        }
    }
    Ok(map)
}

/// Seeds are decimal or `0x`-prefixed hexadecimal.
pub fn parse_seed(s: &str) -> Result<u64, CliError> {
    let s = s.trim();
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|_| CliError::Config(format!("seed: cannot parse {s:?} as a 64-bit integer")))
}

/// Raw settings plus a log of every value a subcommand read, defaults
/// included. The log is what output files echo.
#[derive(Debug, Default)]
pub struct Settings {
    raw: BTreeMap<String, String>,
    used: RefCell<BTreeMap<String, String>>,
}

impl Settings {
    pub fn new(raw: BTreeMap<String, String>) -> Self {
        Self { raw, used: RefCell::default() }
    }

    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut raw = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                parse(&text)?
            }
            None => BTreeMap::new(),
        };
        for (k, v) in overrides {
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(CliError::Config(format!("unknown key {k:?}")));
            }
            raw.insert(k.clone(), v.clone());
        }
        Ok(Self::new(raw))
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.raw.insert(key.to_string(), value);
    }

    fn note(&self, key: &str, value: String) {
        self.used.borrow_mut().insert(key.to_string(), value);
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.raw.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr + ToString>(&self, key: &str, default: T) -> Result<T, CliError> {
        let v = match self.raw(key) {
            Some(s) => s.parse().map_err(|_| CliError::Config(format!("{key}: cannot parse {s:?}")))?,
            None => default,
        };
        self.note(key, v.to_string());
        Ok(v)
    }

    pub fn require<T: FromStr + ToString>(&self, key: &str) -> Result<T, CliError> {
        let s = self.raw(key).ok_or_else(|| CliError::Config(format!("missing required key {key:?}")))?;
        let v: T = s.parse().map_err(|_| CliError::Config(format!("{key}: cannot parse {s:?}")))?;
        self.note(key, v.to_string());
        Ok(v)
    }

    pub fn optional<T: FromStr + ToString>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.raw(key) {
            Some(_) => self.require(key).map(Some),
            None => Ok(None),
        }
    }

    /// Comma-separated list.
    pub fn list<T: FromStr + ToString + Clone>(&self, key: &str, default: &[T]) -> Result<Vec<T>, CliError> {
        let v: Vec<T> = match self.raw(key) {
            Some(s) => s
                .split(',')
                .map(|p| p.trim().parse().map_err(|_| CliError::Config(format!("{key}: cannot parse {p:?}"))))
                .collect::<Result<_, _>>()?,
            None => default.to_vec(),
        };
        if v.is_empty() {
            return Err(CliError::Config(format!("{key}: empty list")));
        }
        self.note(key, v.iter().map(T::to_string).collect::<Vec<_>>().join(","));
        Ok(v)
    }

    /// A pair `a,b`.
    pub fn pair(&self, key: &str, default: (i64, i64)) -> Result<(i64, i64), CliError> {
        let v = self.list(key, &[default.0, default.1])?;
        match v[..] {
            [a, b] => Ok((a, b)),
            _ => Err(CliError::Config(format!("{key}: expected two comma-separated integers"))),
        }
    }

    /// Fractions written `n/d`, comma-separated.
    pub fn fractions(&self, key: &str, default: &[(u64, u64)]) -> Result<Vec<(u64, u64)>, CliError> {
        let v: Vec<(u64, u64)> = match self.raw(key) {
            Some(s) => s
                .split(',')
                .map(|p| {
                    let bad = || CliError::Config(format!("{key}: cannot parse {p:?} as n/d"));
                    let (n, d) = p.trim().split_once('/').ok_or_else(bad)?;
                    Ok((n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?))
                })
                .collect::<Result<_, CliError>>()?,
            None => default.to_vec(),
        };
        if v.is_empty() {
            return Err(CliError::Config(format!("{key}: empty list")));
        }
        self.note(key, v.iter().map(|(n, d)| format!("{n}/{d}")).collect::<Vec<_>>().join(","));
        Ok(v)
    }

    pub fn used(&self) -> BTreeMap<String, String> {
        self.used.borrow().clone()
    }
}

/// ε < δ < P with δ and P even, for whichever of them are set.
pub fn check_geometry(epsilons: &[i64], delta: Option<i64>, p: Option<i64>) -> Result<(), CliError> {
    let fail = |m: String| Err(CliError::Config(format!("geometry guard: {m}")));
    if let Some(e) = epsilons.iter().find(|&&e| e < 1) {
        return fail(format!("epsilon must be >= 1, got {e}"));
    }
    for (name, v) in [("delta", delta), ("P", p)] {
        if let Some(v) = v {
            if v < 2 || v % 2 != 0 {
                return fail(format!("{name} must be a positive even integer, got {v}"));
            }
        }
    }
    let emax = epsilons.iter().copied().max().unwrap_or(0);
    if let Some(d) = delta {
        if emax >= d {
            return fail(format!("need epsilon < delta, got {emax} >= {d}"));
        }
    }
    if let Some(p) = p {
        if emax >= p {
            return fail(format!("need epsilon < P, got {emax} >= {p}"));
        }
        if let Some(d) = delta {
            if d >= p {
                return fail(format!("need delta < P, got {d} >= {p}"));
            }
        }
    }
    Ok(())
}

/// `0 <= s <= u <= horizon`.
pub fn check_window(window: (i64, i64), horizon: i64) -> Result<(), CliError> {
    let (s, u) = window;
    if s < 0 || s > u || u > horizon {
        return Err(CliError::Config(format!("geometry guard: window [{s}, {u}] not within [0, {horizon}]")));
    }
    Ok(())
}
