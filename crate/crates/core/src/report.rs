//! Run configuration, canonical JSON reports with reproducibility hashes,
//! CSV and gnuplot data emission, and exit codes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::davies::EnvelopeRow;
use crate::profiles::{geometric_grid, ProfileFunction};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Process exit status of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Ok = 0,
    Io = 1,
    Parse = 2,
    Premise = 3,
    Fail = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn from_error(e: &Error) -> Self {
        match e {
            Error::Parse { .. } | Error::NotMonotone { .. } | Error::Json(_) => ExitStatus::Parse,
            Error::PremiseNotCertified(_)
            | Error::NotUltracontractive
            | Error::ScalingNotAdmissible(_)
            | Error::DoublingFailure(_) => ExitStatus::Premise,
            _ => ExitStatus::Io,
        }
    }
}

/// Log-spaced grid given as `lo:hi:n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        let g = GridSpec { lo, hi, n };
        g.validate()?;
        Ok(g)
    }

    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        let bad = |pos: usize, msg: &str| Error::Parse { pos, msg: format!("{msg} in grid '{spec}'") };
        if parts.len() != 3 {
            return Err(bad(0, "expected lo:hi:n"));
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad(0, "bad lower end"))?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad(parts[0].len() + 1, "bad upper end"))?;
        let n: usize =
            parts[2].trim().parse().map_err(|_| bad(parts[0].len() + parts[1].len() + 2, "bad point count"))?;
        Self::new(lo, hi, n)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("grid must be nonempty".into()));
        }
        let ordered = if self.n == 1 { self.hi >= self.lo } else { self.hi > self.lo };
        if !(self.lo > 0.0 && self.hi.is_finite() && ordered) {
            return Err(Error::InvalidArgument(format!("grid needs 0 < lo < hi, got {}:{}", self.lo, self.hi)));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        geometric_grid(self.lo, self.hi, self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Everything a command was run with; embedded verbatim in its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    /// Named inputs (model and profile specs, file paths, scalars).
    pub inputs: BTreeMap<String, String>,
    pub seed: u64,
    pub grids: BTreeMap<String, GridSpec>,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl RunConfig {
    pub fn new(command: &str, seed: u64) -> Self {
        RunConfig {
            command: command.into(),
            inputs: BTreeMap::new(),
            seed,
            grids: BTreeMap::new(),
            out: None,
            format: Format::Json,
        }
    }

    pub fn input(mut self, key: &str, value: impl ToString) -> Self {
        self.inputs.insert(key.into(), value.to_string());
        self
    }

    pub fn grid(mut self, key: &str, grid: GridSpec) -> Self {
        self.grids.insert(key.into(), grid);
        self
    }
}

/// Versioned result of one command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub library_version: String,
    pub config: RunConfig,
    pub pass: bool,
    /// Seconds since the Unix epoch; excluded from the hash.
    pub timestamp: u64,
    pub results: Value,
    /// SHA-256 of the canonical JSON without `timestamp`, `hash` and `config.out`.
    pub hash: String,
}

impl Report {
    pub fn new(config: RunConfig, pass: bool, results: Value) -> Result<Self> {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut r = Report {
            schema_version: SCHEMA_VERSION,
            library_version: env!("CARGO_PKG_VERSION").into(),
            config,
            pass,
            timestamp,
            results,
            hash: String::new(),
        };
        r.hash = report_hash(&r)?;
        Ok(r)
    }

    pub fn status(&self) -> ExitStatus {
        if self.pass {
            ExitStatus::Ok
        } else {
            ExitStatus::Fail
        }
    }

    pub fn to_canonical_json(&self) -> Result<String> {
        Ok(canonical_json(&serde_json::to_value(self)?))
    }
}

/// Hash of the canonical JSON of `report` with `timestamp`, `hash` and the
/// output directory removed, so reruns elsewhere hash the same.
pub fn report_hash(report: &Report) -> Result<String> {
    let mut v = serde_json::to_value(report)?;
    if let Value::Object(map) = &mut v {
        map.remove("timestamp");
        map.remove("hash");
        if let Some(Value::Object(cfg)) = map.get_mut("config") {
            cfg.remove("out");
        }
    }
    Ok(hex::encode(Sha256::digest(canonical_json(&v).as_bytes())))
}

/// JSON with sorted keys, no whitespace, integers verbatim and other
/// numbers with 17 significant digits. Non-finite floats are `null`, as
/// JSON has no spelling for them.
pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_canonical(v, &mut out);
    out
}

fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                write!(out, "{i}").unwrap();
            } else if let Some(u) = n.as_u64() {
                write!(out, "{u}").unwrap();
            } else {
                write!(out, "{:.16e}", n.as_f64().unwrap_or(f64::NAN)).unwrap();
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("key serializes"));
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
    }
}

/// Reads a report back and recomputes its hash.
pub fn load_report(path: &Path) -> Result<(Report, bool)> {
    let text = fs::read_to_string(path)?;
    let report: Report = serde_json::from_str(&text)?;
    let ok = report_hash(&report)? == report.hash;
    Ok((report, ok))
}

/// Row of a profile run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileRow {
    pub r: f64,
    pub phi: f64,
    pub theta: f64,
    pub theta_tilde: f64,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(std::io::Error::from)?;
    for row in rows {
        w.serialize(row).map_err(std::io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `t,x,y,exact,bound,log_margin`.
pub fn write_envelope_csv(path: &Path, rows: &[EnvelopeRow]) -> Result<()> {
    write_csv(path, rows)
}

/// Columns `r,phi,theta,theta_tilde`.
pub fn write_profile_csv(path: &Path, rows: &[ProfileRow]) -> Result<()> {
    write_csv(path, rows)
}

/// Any serializable rows as CSV with a header from the field names.
pub fn write_rows_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_csv(path, rows)
}

/// Whitespace-separated columns with a `#` header line.
pub fn write_gnuplot(path: &Path, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut s = format!("# {}\n", columns.join(" "));
    for row in rows {
        if row.len() != columns.len() {
            return Err(Error::LengthMismatch { expected: columns.len(), got: row.len() });
        }
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

/// Writes `report.json` into `dir`, creating it if needed.
pub fn emit_report(report: &Report, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("report.json");
    fs::write(&path, report.to_canonical_json()?)?;
    Ok(path)
}

/// Profile from the mini-grammar, with monotonicity checked.
pub fn parse_profile(spec: &str) -> Result<ProfileFunction> {
    ProfileFunction::parse(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn canonical_form() {
        let v = json!({"b": 1, "a": [0.5, -2], "c": {"z": null, "y": "q"}});
        assert_eq!(canonical_json(&v), r#"{"a":[5.0000000000000000e-1,-2],"b":1,"c":{"y":"q","z":null}}"#);
    }

    #[test]
    fn hash_ignores_timestamp() {
        let cfg = RunConfig::new("constants", 7).input("phi", "pow(-1)");
        let mut a = Report::new(cfg.clone(), true, json!({"x": 1.5})).unwrap();
        let b = Report::new(cfg, true, json!({"x": 1.5})).unwrap();
        a.timestamp += 1000;
        assert_eq!(report_hash(&a).unwrap(), b.hash);
    }

    #[test]
    fn grids() {
        assert_eq!(GridSpec::parse("0.01:5:48").unwrap().points().len(), 48);
        assert!(GridSpec::parse("1:2:0").is_err());
        assert!(matches!(GridSpec::parse("1:x:3"), Err(Error::Parse { .. })));
    }
}
