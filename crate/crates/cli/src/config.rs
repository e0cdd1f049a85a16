//! Flat INI-like experiment specs: `key = value` lines, optional `[section]` headers, `#` or `;` comments.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    Sample,
    Dlr,
    Rigidity,
    Loctrans,
    Locallaw,
    Movefn,
    Apriori,
}

impl Kind {
    pub const ALL: [Kind; 7] =
        [Kind::Sample, Kind::Dlr, Kind::Rigidity, Kind::Loctrans, Kind::Locallaw, Kind::Movefn, Kind::Apriori];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Sample => "sample",
            Kind::Dlr => "dlr",
            Kind::Rigidity => "rigidity",
            Kind::Loctrans => "loctrans",
            Kind::Locallaw => "locallaw",
            Kind::Movefn => "movefn",
            Kind::Apriori => "apriori",
        }
    }
}

impl FromStr for Kind {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Kind::ALL.into_iter().find(|k| k.name() == s).ok_or(())
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` expects {expected}, got `{got}`")]
    TypeMismatch { line: usize, key: String, expected: &'static str, got: String },
    #[error("`{key}`: {msg}")]
    Constraint { key: String, msg: String },
    #[error("missing required key `{key}`")]
    Missing { key: String },
}

impl ConfigError {
    pub fn class(&self) -> &'static str {
        match self {
            ConfigError::Syntax { .. } => "syntax",
            ConfigError::UnknownKey { .. } => "unknown-key",
            ConfigError::TypeMismatch { .. } => "type-mismatch",
            ConfigError::Constraint { .. } => "constraint",
            ConfigError::Missing { .. } => "missing",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Int(u64),
    Float(f64),
    List(Vec<f64>),
    Kind(Kind),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v:?}"),
            Value::List(v) => {
                let s: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
                f.write_str(&s.join(", "))
            }
            Value::Kind(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Ty {
    Int,
    Float,
    List,
    Kind,
}

impl Ty {
    fn expected(self) -> &'static str {
        match self {
            Ty::Int => "a non-negative integer",
            Ty::Float => "a number",
            Ty::List => "a comma-separated list of numbers",
            Ty::Kind => "one of sample|dlr|rigidity|loctrans|locallaw|movefn|apriori",
        }
    }

    fn parse(self, raw: &str) -> Option<Value> {
        match self {
            Ty::Int => {
                if let Ok(v) = raw.parse::<u64>() {
                    return Some(Value::Int(v));
                }
                // Scientific notation for integers, e.g. steps = 1e5.
                let f: f64 = raw.parse().ok()?;
                (f >= 0.0 && f.fract() == 0.0 && f < 2f64.powi(63)).then_some(Value::Int(f as u64))
            }
            Ty::Float => raw.parse().ok().filter(|f: &f64| f.is_finite()).map(Value::Float),
            Ty::List => raw
                .split(',')
                .map(|s| s.trim().parse::<f64>().ok().filter(|f| f.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .filter(|v| !v.is_empty())
                .map(Value::List),
            Ty::Kind => raw.parse().ok().map(Value::Kind),
        }
    }
}

type Check = fn(&Value) -> Option<&'static str>;

struct KeySpec {
    key: &'static str,
    ty: Ty,
    default: Option<&'static str>,
    check: Option<Check>,
}

const fn key(key: &'static str, ty: Ty, default: Option<&'static str>, check: Option<Check>) -> KeySpec {
    KeySpec { key, ty, default, check }
}

fn positive(v: &Value) -> Option<&'static str> {
    match v {
        Value::Int(0) => Some("must be positive"),
        Value::Float(f) if *f <= 0.0 => Some("must be positive"),
        Value::List(l) if l.iter().any(|f| *f <= 0.0) => Some("entries must be positive"),
        _ => None,
    }
}

fn non_negative(v: &Value) -> Option<&'static str> {
    match v {
        Value::Float(f) if *f < 0.0 => Some("must be non-negative"),
        _ => None,
    }
}

fn unit_interval(v: &Value) -> Option<&'static str> {
    match v {
        Value::Float(f) if !(*f > 0.0 && *f < 1.0) => Some("must lie in (0, 1)"),
        Value::List(l) if l.iter().any(|f| !(*f > 0.0 && *f < 1.0)) => Some("entries must lie in (0, 1)"),
        _ => None,
    }
}

fn max_p(v: &Value) -> Option<&'static str> {
    match v {
        Value::Int(p) if *p > 20 => Some("truncation level above 20 is not supported"),
        _ => None,
    }
}

const COMMON: &[KeySpec] = &[
    key("kind", Ty::Kind, None, None),
    key("N", Ty::Int, None, Some(positive)),
    key("beta", Ty::Float, None, Some(non_negative)),
    key("seed", Ty::Int, None, None),
    key("steps", Ty::Int, Some("0"), None),
    key("burn_in", Ty::Int, Some("0"), None),
    key("samples", Ty::Int, Some("100"), Some(positive)),
    key("chains", Ty::Int, Some("1"), Some(positive)),
    key("proposal_scale", Ty::Float, Some("0.5"), Some(positive)),
];

fn section_keys(kind: Kind) -> &'static [KeySpec] {
    const DLR: &[KeySpec] = &[
        key("dlr.rho", Ty::Float, Some("1.5"), Some(positive)),
        key("dlr.p", Ty::Int, Some("6"), Some(max_p)),
        key("dlr.delta", Ty::Float, Some("0.1"), Some(positive)),
        key("dlr.inner_samples", Ty::Int, Some("64"), Some(positive)),
        key("dlr.inner_thinning", Ty::Int, Some("20"), Some(positive)),
        key("dlr.inner_burn_in", Ty::Int, Some("0"), None),
        key("dlr.inner_beta", Ty::Float, Some("-1"), None),
        key("dlr.probes", Ty::Int, Some("8"), Some(positive)),
        key("dlr.p_ref", Ty::Int, Some("0"), Some(max_p)),
    ];
    const RIGIDITY: &[KeySpec] = &[
        key("rigidity.eps", Ty::List, Some("0.9"), Some(unit_interval)),
        key("rigidity.ells", Ty::List, Some("1"), Some(positive)),
        key("rigidity.center_x", Ty::Float, Some("0"), None),
        key("rigidity.center_y", Ty::Float, Some("0"), None),
    ];
    const LOCTRANS: &[KeySpec] = &[
        key("loctrans.L", Ty::List, Some("4, 8, 16"), Some(positive)),
        key("loctrans.v_x", Ty::Float, Some("1"), None),
        key("loctrans.v_y", Ty::Float, Some("0"), None),
        key("loctrans.p", Ty::Int, Some("6"), Some(max_p)),
        key("loctrans.grid", Ty::Int, Some("64"), Some(positive)),
        key("loctrans.steps", Ty::Int, Some("64"), Some(positive)),
        key("loctrans.view_radius", Ty::Float, Some("1"), Some(positive)),
    ];
    const LOCALLAW: &[KeySpec] = &[
        key("locallaw.ells", Ty::List, Some("2, 4, 8"), Some(positive)),
        key("locallaw.center_x", Ty::Float, Some("0"), None),
        key("locallaw.center_y", Ty::Float, Some("0"), None),
    ];
    const MOVEFN: &[KeySpec] = &[
        key("movefn.rho", Ty::Float, Some("1.5"), Some(positive)),
        key("movefn.p_max", Ty::Int, Some("8"), Some(max_p)),
        key("movefn.pairs", Ty::Int, Some("200"), Some(positive)),
        key("movefn.tolerance", Ty::Float, Some("0.001"), Some(positive)),
    ];
    const APRIORI: &[KeySpec] = &[
        key("apriori.pairs", Ty::Int, Some("100"), Some(positive)),
        key("apriori.support", Ty::Float, Some("2"), Some(positive)),
    ];
    match kind {
        Kind::Sample => &[],
        Kind::Dlr => DLR,
        Kind::Rigidity => RIGIDITY,
        Kind::Loctrans => LOCTRANS,
        Kind::Locallaw => LOCALLAW,
        Kind::Movefn => MOVEFN,
        Kind::Apriori => APRIORI,
    }
}

fn find_spec(qualified: &str) -> Option<&'static KeySpec> {
    COMMON
        .iter()
        .chain(Kind::ALL.iter().flat_map(|&k| section_keys(k).iter()))
        .find(|s| s.key == qualified)
}

/// A validated experiment: every key of the kind resolved, defaults filled in.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub kind: Kind,
    values: BTreeMap<&'static str, Value>,
}

impl ExperimentSpec {
    pub fn get(&self, key: &str) -> &Value {
        self.values.get(key).unwrap_or_else(|| panic!("spec has no key {key}"))
    }

    pub fn int(&self, key: &str) -> u64 {
        match self.get(key) {
            Value::Int(v) => *v,
            v => panic!("{key} is not an integer: {v:?}"),
        }
    }

    pub fn float(&self, key: &str) -> f64 {
        match self.get(key) {
            Value::Float(v) => *v,
            Value::Int(v) => *v as f64,
            v => panic!("{key} is not a number: {v:?}"),
        }
    }

    pub fn list(&self, key: &str) -> Vec<f64> {
        match self.get(key) {
            Value::List(v) => v.clone(),
            Value::Float(v) => vec![*v],
            v => panic!("{key} is not a list: {v:?}"),
        }
    }

    pub fn n(&self) -> usize {
        self.int("N") as usize
    }

    pub fn beta(&self) -> f64 {
        self.float("beta")
    }

    pub fn seed(&self) -> u64 {
        self.int("seed")
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.values.insert("seed", Value::Int(seed));
    }

    /// Resolved spec, one `key = value` line per key in sorted order under its section.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.values.iter().filter(|(k, _)| !k.contains('.')) {
            out += &format!("{k} = {v}\n");
        }
        let mut section = "";
        for (k, v) in self.values.iter().filter(|(k, _)| k.contains('.')) {
            let (s, name) = k.split_once('.').unwrap();
            if s != section {
                out += &format!("\n[{s}]\n");
                section = s;
            }
            out += &format!("{name} = {v}\n");
        }
        out
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

pub fn parse_spec(text: &str) -> Result<ExperimentSpec, ConfigError> {
    let mut section: Option<String> = None;
    let mut raw: BTreeMap<&'static str, (usize, Value)> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.split(['#', ';']).next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Syntax { line: lineno, msg: "unterminated section header".into() })?
                .trim();
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(ConfigError::Syntax { line: lineno, msg: format!("bad section name `{name}`") });
            }
            section = (name != "experiment" && name != "chain").then(|| name.to_string());
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line: lineno, msg: format!("expected `key = value`, got `{line}`") })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(ConfigError::Syntax { line: lineno, msg: "empty key or value".into() });
        }
        let qualified = match &section {
            Some(s) => format!("{s}.{k}"),
            None => k.to_string(),
        };
        let spec = find_spec(&qualified).ok_or(ConfigError::UnknownKey { line: lineno, key: qualified.clone() })?;
        let value = spec.ty.parse(v).ok_or_else(|| ConfigError::TypeMismatch {
            line: lineno,
            key: qualified.clone(),
            expected: spec.ty.expected(),
            got: v.to_string(),
        })?;
        if raw.insert(spec.key, (lineno, value)).is_some() {
            return Err(ConfigError::Syntax { line: lineno, msg: format!("duplicate key `{qualified}`") });
        }
    }
    let kind = match raw.get("kind") {
        Some((_, Value::Kind(k))) => *k,
        _ => return Err(ConfigError::Missing { key: "kind".into() }),
    };
    let allowed: Vec<&KeySpec> = COMMON.iter().chain(section_keys(kind)).collect();
    if let Some((k, (line, _))) = raw.iter().find(|(k, _)| !allowed.iter().any(|s| s.key == **k)) {
        return Err(ConfigError::UnknownKey { line: *line, key: format!("{k} (not used by kind {kind})") });
    }
    let mut values = BTreeMap::new();
    for s in allowed {
        let v = match raw.remove(s.key) {
            Some((_, v)) => v,
            None => match s.default {
                Some(d) => s.ty.parse(d).expect("defaults parse"),
                None => return Err(ConfigError::Missing { key: s.key.into() }),
            },
        };
        if let Some(msg) = s.check.and_then(|c| c(&v)) {
            return Err(ConfigError::Constraint { key: s.key.into(), msg: msg.into() });
        }
        values.insert(s.key, v);
    }
    let spec = ExperimentSpec { kind, values };
    cross_checks(&spec)?;
    Ok(spec)
}

fn cross_checks(spec: &ExperimentSpec) -> Result<(), ConfigError> {
    let c = |key: &str, msg: String| Err(ConfigError::Constraint { key: key.into(), msg });
    let (steps, samples) = (spec.int("steps"), spec.int("samples"));
    if steps != 0 && steps < samples {
        return c("steps", format!("{steps} steps cannot hold {samples} samples"));
    }
    if spec.kind == Kind::Loctrans {
        let (vx, vy) = (spec.float("loctrans.v_x"), spec.float("loctrans.v_y"));
        if vx.hypot(vy) > 1.0 {
            return c("loctrans.v_x", "translation vector must have norm at most 1".into());
        }
    }
    if spec.kind == Kind::Dlr {
        let ib = spec.float("dlr.inner_beta");
        if ib < 0.0 && ib != -1.0 {
            return c("dlr.inner_beta", "must be non-negative (or -1 for beta)".into());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_sample() {
        let s = parse_spec("kind = sample\nN = 64\nbeta = 2\nseed = 1\nsteps = 1e5\n").unwrap();
        assert_eq!(s.kind, Kind::Sample);
        assert_eq!(s.int("steps"), 100_000);
        assert_eq!(s.n(), 64);
    }

    #[test]
    fn canonical_round_trip() {
        let s = parse_spec("kind = dlr\nN = 512\nbeta = 2\nseed = 3\n[dlr]\np = 5\n").unwrap();
        let again = parse_spec(&s.canonical()).unwrap();
        assert_eq!(s, again);
        assert_eq!(s.hash(), again.hash());
    }
}
