use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use tandem_core::dp::TruncationSpec;
use tandem_core::{Model, State};

pub const SCHEMA_VERSION: u32 = 1;

pub struct LoadedConfig {
    pub path: PathBuf,
    pub sha256: String,
    pub document: Value,
    pub model: Model,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn parse_document(path: &Path, text: &str) -> Result<Value> {
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    if is_toml {
        let table: toml::Table = toml::from_str(text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(serde_json::to_value(table)?)
    } else {
        serde_json::from_str(text).with_context(|| format!("parsing {}", path.display()))
    }
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = std::str::from_utf8(&bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let document = parse_document(path, text)?;
    let model = Model::from_document(&document).with_context(|| format!("invalid config {}", path.display()))?;
    warn_near_critical(&model);
    Ok(LoadedConfig {
        path: path.to_path_buf(),
        sha256: sha256_hex(&bytes),
        document,
        model,
    })
}

pub fn warn_near_critical(model: &Model) {
    let (m1, m2) = model.stability_margin();
    let lambda = model.lambda();
    for (node, m) in [("node1", m1), ("node2", m2)] {
        if m < 0.05 * lambda {
            eprintln!("warning: {node} is close to critical load (mu_max - lambda = {}); truncation error will be large", num(m));
        }
    }
}

/// Shortest decimal that round-trips, switching to exponent form for very
/// large or small magnitudes.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
    started: Instant,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn bytes(&mut self, name: &str, data: &[u8]) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, data).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.bytes(name, text.as_bytes())
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        let data = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
        self.bytes(name, &data)
    }

    pub fn finish(mut self, manifest: ManifestInfo) -> Result<()> {
        let artifacts: Vec<String> = self.written.clone();
        let m = RunManifest {
            schema_version: SCHEMA_VERSION,
            command: manifest.command,
            tool_version: env!("CARGO_PKG_VERSION"),
            config: manifest.config,
            truncation: manifest.truncation.map(|t| TruncationInfo {
                l1: t.l1,
                l2: t.l2,
                margin: t.margin,
            }),
            options: manifest.options,
            seeds: manifest.seeds,
            artifacts,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        self.json("manifest.json", &m)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigRef {
    pub path: String,
    pub sha256: String,
}

impl ConfigRef {
    pub fn of(cfg: &LoadedConfig) -> Self {
        Self {
            path: cfg.path.display().to_string(),
            sha256: cfg.sha256.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
struct TruncationInfo {
    l1: usize,
    l2: usize,
    margin: usize,
}

pub struct ManifestInfo {
    pub command: &'static str,
    pub config: Option<ConfigRef>,
    pub truncation: Option<TruncationSpec>,
    pub options: Value,
    pub seeds: Vec<u64>,
}

/// Record of one invocation, written last so it can list every artifact.
#[derive(Debug, Serialize)]
struct RunManifest {
    schema_version: u32,
    command: &'static str,
    tool_version: &'static str,
    config: Option<ConfigRef>,
    truncation: Option<TruncationInfo>,
    options: Value,
    seeds: Vec<u64>,
    artifacts: Vec<String>,
    wall_clock_seconds: f64,
}

/// Reads a policy table with columns `x1,x2,a_value,b_value` (extra columns
/// ignored) covering every state of `trunc` exactly once.
pub fn read_policy(path: &Path, model: &Model, trunc: &TruncationSpec) -> Result<tandem_core::Policy> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{}: missing column {name}", path.display()))
    };
    let (cx1, cx2, ca, cb) = (col("x1")?, col("x2")?, col("a_value")?, col("b_value")?);
    let mut slots: Vec<Option<(usize, usize)>> = vec![None; trunc.n_states()];
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let row = line + 2;
        let x1: usize = field(cx1).parse().with_context(|| format!("row {row}: bad x1"))?;
        let x2: usize = field(cx2).parse().with_context(|| format!("row {row}: bad x2"))?;
        let x = State::new(x1, x2);
        if !trunc.contains(x) {
            bail!("row {row}: state {x} lies outside the {}x{} box", trunc.l1, trunc.l2);
        }
        let a: f64 = field(ca).parse().with_context(|| format!("row {row}: bad a_value"))?;
        let b: f64 = field(cb).parse().with_context(|| format!("row {row}: bad b_value"))?;
        let ai = grid_index(model.grid1().values(), a).with_context(|| format!("row {row}: a_value {a} is not on the node1 grid"))?;
        let bi = grid_index(model.grid2().values(), b).with_context(|| format!("row {row}: b_value {b} is not on the node2 grid"))?;
        let slot = &mut slots[trunc.index(x)];
        if slot.is_some() {
            bail!("row {row}: state {x} listed twice");
        }
        *slot = Some((ai, bi));
    }
    let missing = slots.iter().filter(|s| s.is_none()).count();
    if missing > 0 {
        let first = trunc.state(slots.iter().position(|s| s.is_none()).expect("counted"));
        bail!("policy table misses {missing} states of the box, first {first}");
    }
    Ok(tandem_core::Policy::from_actions(*trunc, slots.into_iter().map(|s| s.expect("checked")).collect()))
}

fn grid_index(grid: &[f64], value: f64) -> Option<usize> {
    grid.iter().position(|g| (g - value).abs() <= 1e-12 * g.abs().max(1.0))
}
