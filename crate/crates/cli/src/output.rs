//! Output plumbing: number formatting, digests, run manifests.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use trinet::scalar::round_sig;

use crate::CliError;

/// Significant digits of every floating-point number we print.
pub const DIGITS: usize = 9;

/// Rounds every non-integral number in `v` to [`DIGITS`] significant digits.
pub fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            serde_json::Number::from_f64(round_sig(x, DIGITS)).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_floats).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_floats(v))).collect()),
        other => other,
    }
}

/// JSON value with sorted keys and rounded numbers.
pub fn to_value(x: &impl Serialize) -> Result<Value, CliError> {
    Ok(round_floats(serde_json::to_value(x)?))
}

fn strip_timing(v: &Value) -> Value {
    match v {
        Value::Object(o) => Value::Object(
            o.iter().filter(|(k, _)| k.as_str() != "wall_time_s").map(|(k, v)| (k.clone(), strip_timing(v))).collect(),
        ),
        Value::Array(a) => Value::Array(a.iter().map(strip_timing).collect()),
        other => other.clone(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of a JSON document ignoring wall-clock fields, so repeated runs
/// agree.
pub fn stable_digest(v: &Value) -> String {
    sha256_hex(strip_timing(v).to_string().as_bytes())
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: Value,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub wall_time_s: f64,
    pub input_digest: String,
    pub output_digest: String,
}

/// Where a command's primary output goes, plus the manifest bookkeeping.
pub struct Sink {
    pub out: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub command: String,
    pub parameters: Value,
    pub seed: Option<u64>,
    pub started: Instant,
}

impl Sink {
    pub fn new(command: &str, parameters: Value, out: Option<PathBuf>, manifest: Option<PathBuf>) -> Self {
        Self { out, manifest, command: command.to_string(), parameters, seed: None, started: Instant::now() }
    }

    fn open(&self) -> Result<Box<dyn Write>, CliError> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(fs::File::create(p).map_err(|e| CliError::Io(p.clone(), e))?)),
            None => Box::new(std::io::stdout().lock()),
        })
    }

    fn io_path(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("<stdout>"))
    }

    fn write_bytes(&self, bytes: &[u8]) -> Result<(), CliError> {
        let mut w = self.open()?;
        w.write_all(bytes).and_then(|()| w.flush()).map_err(|e| CliError::Io(self.io_path(), e))
    }

    fn manifest_path(&self) -> Option<PathBuf> {
        self.manifest.clone().or_else(|| {
            self.out.as_ref().map(|p| {
                let mut s = p.as_os_str().to_owned();
                s.push(".manifest.json");
                PathBuf::from(s)
            })
        })
    }

    fn finish(&self, output_digest: String) -> Result<(), CliError> {
        let Some(path) = self.manifest_path() else { return Ok(()) };
        let m = RunManifest {
            command: self.command.clone(),
            parameters: self.parameters.clone(),
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: round_sig(self.started.elapsed().as_secs_f64(), DIGITS),
            input_digest: sha256_hex(self.parameters.to_string().as_bytes()),
            output_digest,
        };
        write_json_file(&path, &serde_json::to_value(&m)?)
    }

    /// Writes a pretty JSON document followed by a newline.
    pub fn json(&self, v: &Value) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        self.write_bytes(s.as_bytes())?;
        self.finish(stable_digest(v))
    }

    pub fn text(&self, s: &str) -> Result<(), CliError> {
        self.write_bytes(s.as_bytes())?;
        self.finish(sha256_hex(s.as_bytes()))
    }

    /// Writes CSV rows (header first).
    pub fn csv(&self, rows: &[Vec<String>]) -> Result<(), CliError> {
        self.csv_stream(|w| rows.iter().try_for_each(|r| w.write_record(r)).map_err(CliError::from))
    }

    /// Streams CSV records produced by `fill`, digesting them on the way.
    pub fn csv_stream(
        &self,
        fill: impl FnOnce(&mut csv::Writer<Hashing<Box<dyn Write>>>) -> Result<(), CliError>,
    ) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Hashing { inner: self.open()?, hasher: Sha256::new() });
        fill(&mut w)?;
        let mut inner = w.into_inner().map_err(|e| CliError::Io(self.io_path(), e.into_error()))?;
        inner.inner.flush().map_err(|e| CliError::Io(self.io_path(), e))?;
        let digest = inner.hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        self.finish(digest)
    }
}

/// Writer that hashes everything passing through it.
pub struct Hashing<W> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> Write for Hashing<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

pub fn write_json_file(path: &Path, v: &Value) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

/// Appends one compact JSON line.
pub fn append_jsonl(path: &Path, v: &Value) -> Result<(), CliError> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    writeln!(f, "{v}").map_err(|e| CliError::Io(path.to_path_buf(), e))
}

/// Every JSON object in a JSON-lines file; a missing file reads as empty.
pub fn read_jsonl(path: &Path) -> Result<Vec<Map<String, Value>>, CliError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(CliError::Io(path.to_path_buf(), e)),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| match serde_json::from_str(l)? {
            Value::Object(o) => Ok(o),
            _ => Err(CliError::Usage(format!("{}: ledger lines must be objects", path.display()))),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn rounding_keeps_integers() {
        let v = round_floats(json!({"a": 0.1234567891234, "b": 3, "c": [2.0000000001]}));
        assert_eq!(v, json!({"a": 0.123456789, "b": 3, "c": [2.0]}));
    }

    #[test]
    fn digest_ignores_wall_time() {
        let a = json!({"bound": 0.5, "wall_time_s": 1.0});
        let b = json!({"bound": 0.5, "wall_time_s": 7.5});
        assert_eq!(stable_digest(&a), stable_digest(&b));
        assert_ne!(stable_digest(&a), stable_digest(&json!({"bound": 0.6})));
    }
}
