//! Output files: a JSON run manifest, NDJSON event streams and CSV tables.
//! Every number is rendered with 12 significant digits, so identical runs
//! give identical bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::Config;
use crate::error::Result;

/// `x` rounded to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if x.is_finite() {
        format!("{x:.11e}").parse().unwrap_or(x)
    } else {
        x
    }
}

/// Scientific notation with 12 significant digits.
pub fn fmt12(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(round12(x)).map_or(Value::Null, Value::Number)
}

/// Builds one NDJSON object; keys are written in sorted order.
#[derive(Default)]
pub struct Record(Map<String, Value>);

impl Record {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn f(mut self, key: &str, x: f64) -> Self {
        self.0.insert(key.into(), num(x));
        self
    }

    pub fn u(mut self, key: &str, x: u64) -> Self {
        self.0.insert(key.into(), Value::from(x));
        self
    }

    pub fn s(mut self, key: &str, x: &str) -> Self {
        self.0.insert(key.into(), Value::from(x));
        self
    }

    pub fn b(mut self, key: &str, x: bool) -> Self {
        self.0.insert(key.into(), Value::from(x));
        self
    }
}

pub struct NdjsonWriter {
    out: BufWriter<File>,
}

impl NdjsonWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self { out: BufWriter::new(File::create(path)?) })
    }

    pub fn write(&mut self, r: Record) -> Result<()> {
        let line = serde_json::to_string(&Value::Object(r.0)).expect("json value serializes");
        writeln!(self.out, "{line}")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// CSV with a fixed header; rows must match its width.
pub struct CsvWriter {
    out: BufWriter<File>,
    width: usize,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", header.join(","))?;
        Ok(Self { out, width: header.len() })
    }

    pub fn row(&mut self, values: &[f64]) -> Result<()> {
        assert_eq!(values.len(), self.width, "CSV row width");
        let cells: Vec<String> = values.iter().map(|v| fmt12(*v)).collect();
        writeln!(self.out, "{}", cells.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Resolved inputs of a run, written before anything is computed.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub toolkit: String,
    pub version: String,
    pub subcommand: String,
    pub seed: u64,
    pub config: Config,
    /// Extra subcommand arguments, as given.
    pub arguments: Vec<(String, String)>,
    /// Output file names, relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: &Config, arguments: Vec<(String, String)>, outputs: &[&str]) -> Self {
        Self {
            toolkit: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            seed: config.run.seed,
            config: config.clone(),
            arguments,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(fmt12(1.0), "1.00000000000e0");
        assert_eq!(fmt12(-0.123456789012345), "-1.23456789012e-1");
        assert_eq!(round12(0.1 + 0.2), 0.3);
        assert_eq!(num(f64::NAN), Value::Null);
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ndjson");
        let mut w = NdjsonWriter::create(&p).unwrap();
        w.write(Record::new().f("t", 0.5).f("y", -1.0 / 3.0).s("kind", "event")).unwrap();
        w.finish().unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "{\"kind\":\"event\",\"t\":0.5,\"y\":-0.333333333333}\n");
        let c = dir.path().join("a.csv");
        let mut w = CsvWriter::create(&c, &["t", "x"]).unwrap();
        w.row(&[0.0, 2.5]).unwrap();
        w.finish().unwrap();
        assert_eq!(std::fs::read_to_string(&c).unwrap(), "t,x\n0.00000000000e0,2.50000000000e0\n");
        let m = RunManifest::new("ensemble", &Config::default(), vec![], &["ensemble.csv"]);
        let path = m.write(dir.path()).unwrap();
        let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(v["config"]["dynamics"]["nu"], 2.0);
    }
}
