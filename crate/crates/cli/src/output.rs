use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::Failure;

/// Provenance written into every output file.
#[derive(Clone, Debug)]
pub struct Stamp {
    pub command: &'static str,
    pub seed: u64,
    pub scenario_sha256: String,
}

impl Stamp {
    pub fn new(command: &'static str, seed: u64, scenario_bytes: &[u8]) -> Self {
        Self {
            command,
            seed,
            scenario_sha256: hex::encode(Sha256::digest(scenario_bytes)),
        }
    }

    pub fn comment(&self) -> String {
        format!(
            "# mobgame {} command={} seed={} scenario_sha256={}\n",
            env!("CARGO_PKG_VERSION"),
            self.command,
            self.seed,
            self.scenario_sha256
        )
    }

    /// A JSON object with the stamp fields followed by `fields`.
    pub fn document(&self, fields: Value) -> Value {
        let mut m = Map::new();
        m.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        m.insert("command".into(), self.command.into());
        m.insert("seed".into(), self.seed.into());
        m.insert("scenario_sha256".into(), self.scenario_sha256.clone().into());
        if let Value::Object(extra) = fields {
            m.extend(extra);
        }
        Value::Object(m)
    }
}

pub struct OutDir {
    pub dir: PathBuf,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::input(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(|e| Failure::input(format!("cannot write {}: {e}", p.display())))
    }

    pub fn json(&self, name: &str, stamp: &Stamp, fields: Value) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(&stamp.document(fields)).expect("serializable");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// CSV preceded by the stamp as a `#` comment line.
    pub fn csv<I, R>(&self, name: &str, stamp: &Stamp, header: &[&str], rows: I) -> Result<(), Failure>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let mut buf = stamp.comment().into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            let sink = |e: csv::Error| Failure::input(e.to_string());
            w.write_record(header).map_err(sink)?;
            for row in rows {
                w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(sink)?;
            }
            w.flush().map_err(|e| Failure::input(e.to_string()))?;
        }
        self.write(name, &buf)
    }

    pub fn raw(&self, name: &str, stamp: &Stamp, body: &[u8]) -> Result<(), Failure> {
        let mut buf = stamp.comment().into_bytes();
        buf.write_all(body).expect("in-memory write");
        self.write(name, &buf)
    }
}

pub fn num(v: f64) -> String {
    v.to_string()
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
