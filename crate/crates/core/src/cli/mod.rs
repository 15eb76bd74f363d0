//! Command-line front end: flags and config files resolved into one
//! configuration, dispatch, output files and run manifests.
//!
//! Config files are TOML. Keys mirror the long flags (`p-min = 0.3`) and
//! live either at top level or in a section named after the subcommand;
//! flags override the file. `entlen` instead takes a full experiment file.

mod manifest;
mod run;
mod verify;

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{Map, Value};

pub use manifest::{digest_file, manifest_path, sha256_hex, FileDigest, RunManifest};
pub use run::{execute, Artifact, EofChoice, Produced};
pub use verify::{random_instance, run_suite, Suite, SuiteReport};

use crate::cluster_dynamics::InitMode;
use crate::error::{Error, Result};
use crate::experiments::CircuitKind;
use crate::quantum::NoiseKind;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_VERIFY_FAILED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "qperc",
    version,
    about = "Noisy quantum circuits, cluster dynamics and bond percolation"
)]
struct Cli {
    /// Worker threads for sampling and restarts (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte-Carlo connection probabilities between top-layer nodes (CSV).
    Percolate(PercolateArgs),
    /// Critical probability from crossings of spanning curves (JSON).
    PcScan(PcScanArgs),
    /// Cluster dynamics (CSV), or with --circuit the density matrix (binary).
    Evolve(EvolveArgs),
    /// Entanglement of formation of a stored density matrix (JSON).
    Eof(EofArgs),
    /// Entanglement length, correlation length and distance bound (JSON + CSV).
    Entlen(EntlenArgs),
    /// Self-check suites; exit code 2 on the first failure.
    Verify(VerifyArgs),
    /// Space-time edge list (CSV).
    DumpGraph(DumpGraphArgs),
    /// Re-run a manifest and compare output digests.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; `<out>.manifest.json` is written next to it.
    #[arg(long, visible_alias = "emit")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct PercolateArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    /// Open probability of each vertical edge.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    /// Side lengths, comma separated; one value with --dim gives a hypercube.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    sides: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// `all`, `from:x` or `a-b,c-d` (particles on the top layer).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pairs: Option<String>,
    /// `giant` joins all of layer 0 into one cluster.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    init: Option<InitMode>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct PcScanArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    /// Box sizes L, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    p_min: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    p_max: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    p_step: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct EvolveArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    /// Density-matrix CSV (`row,col,re,im`); needs --circuit.
    #[arg(long)]
    #[serde(skip)]
    emit_csv: Option<PathBuf>,
    /// Noise rate per particle and step.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    sides: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    init: Option<InitMode>,
    /// `ghz` or `random`; omit for cluster dynamics only.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    circuit: Option<CircuitKind>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    mid: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<usize>,
    /// Noise channel: collapse, depolarize or dephase.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<NoiseKind>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_qubits: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct EofArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    /// Binary density matrix.
    #[arg(long = "in")]
    #[serde(skip)]
    input: Option<PathBuf>,
    /// Qubit sets, e.g. `0,1|2,3`; other qubits are traced out.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    partition: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    method: Option<EofChoice>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    restarts: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Decomposition size (default: dimension of the joint system).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    ensemble_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
}

#[derive(Debug, Args)]
struct EntlenArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    noise: Option<NoiseKind>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct VerifyArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    suite: Option<Suite>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct DumpGraphArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    sides: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<usize>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Write outputs into this directory instead of their original paths.
    #[arg(long)]
    redirect: Option<PathBuf>,
}

/// A resolved invocation, ready to execute.
struct Invocation {
    sub: &'static str,
    config: Value,
    inputs: BTreeMap<String, PathBuf>,
    outputs: BTreeMap<&'static str, PathBuf>,
}

fn read_toml(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path)?;
    text.parse::<toml::Table>()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> Result<Value> {
    serde_json::to_value(value).map_err(|e| Error::Config(e.to_string()))
}

/// Merge top-level scalars and the `[sub]` section of the config file, then
/// the flags, and normalize through the subcommand's config type.
fn resolve<T, F>(sub: &'static str, file: Option<&Path>, flags: &F) -> Result<Value>
where
    T: serde::de::DeserializeOwned + Serialize,
    F: Serialize,
{
    let mut merged = Map::new();
    if let Some(path) = file {
        let table = read_toml(path)?;
        for (k, v) in &table {
            if !v.is_table() {
                merged.insert(k.clone(), to_json(v)?);
            }
        }
        if let Some(section) = table.get(sub) {
            let section = section
                .as_table()
                .ok_or_else(|| Error::Config(format!("[{sub}] must be a table")))?;
            for (k, v) in section {
                merged.insert(k.clone(), to_json(v)?);
            }
        }
    }
    if let Value::Object(flags) = to_json(flags)? {
        merged.extend(flags);
    }
    let typed: T = run::parse_config(sub, &Value::Object(merged))?;
    to_json(&typed)
}

fn resolve_entlen(args: &EntlenArgs) -> Result<Value> {
    let path = args
        .common
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("entlen needs --config".into()))?;
    let mut config = to_json(&read_toml(path)?)?;
    let mut set = |section: &str, key: &str, value: Value| {
        if let Some(obj) = config.as_object_mut() {
            let entry = obj
                .entry(section)
                .or_insert_with(|| Value::Object(Map::new()));
            if let Some(inner) = entry.as_object_mut() {
                inner.insert(key.into(), value);
            }
        }
    };
    if let Some(eta) = args.eta {
        set("model", "eta", eta.into());
    }
    if let Some(steps) = args.steps {
        set("model", "steps", steps.into());
    }
    if let Some(samples) = args.samples {
        set("percolation", "samples", samples.into());
    }
    if let Some(noise) = args.noise {
        set("model", "noise", to_json(&noise)?);
    }
    let typed: crate::experiments::ExperimentConfig = run::parse_config("entlen", &config)?;
    to_json(&typed)
}

fn invocation(command: Command) -> Result<Invocation> {
    let mut inputs = BTreeMap::new();
    let mut outputs = BTreeMap::new();
    let (sub, config, common) = match command {
        Command::Percolate(a) => (
            "percolate",
            resolve::<run::PercolateConfig, _>("percolate", a.common.config.as_deref(), &a)?,
            a.common,
        ),
        Command::PcScan(a) => (
            "pc-scan",
            resolve::<run::PcScanConfig, _>("pc-scan", a.common.config.as_deref(), &a)?,
            a.common,
        ),
        Command::Evolve(a) => {
            let config = resolve::<run::EvolveConfig, _>("evolve", a.common.config.as_deref(), &a)?;
            if let Some(csv) = a.emit_csv {
                if a.circuit.is_none() && config.get("circuit").is_none_or(Value::is_null) {
                    return Err(Error::Config("--emit-csv needs --circuit".into()));
                }
                outputs.insert("csv", csv);
            }
            ("evolve", config, a.common)
        }
        Command::Eof(a) => {
            let config = resolve::<run::EofConfig, _>("eof", a.common.config.as_deref(), &a)?;
            let input = a
                .input
                .ok_or_else(|| Error::Config("--in is required".into()))?;
            inputs.insert("in".to_string(), input);
            ("eof", config, a.common)
        }
        Command::Entlen(a) => {
            let config = resolve_entlen(&a)?;
            if let Some(out) = &a.common.out {
                outputs.insert("csv", out.with_extension("csv"));
            }
            ("entlen", config, a.common)
        }
        Command::Verify(a) => (
            "verify",
            resolve::<run::VerifyConfig, _>("verify", a.common.config.as_deref(), &a)?,
            a.common,
        ),
        Command::DumpGraph(a) => (
            "dump-graph",
            resolve::<run::DumpGraphConfig, _>("dump-graph", a.common.config.as_deref(), &a)?,
            a.common,
        ),
        Command::Replay(_) => unreachable!("replay is dispatched separately"),
    };
    if let Some(out) = common.out {
        outputs.insert("out", out);
    }
    Ok(Invocation {
        sub,
        config,
        inputs,
        outputs,
    })
}

fn master_seed(sub: &str, config: &Value) -> Option<u64> {
    match sub {
        "entlen" => config.pointer("/percolation/seed"),
        _ => config.get("seed"),
    }
    .and_then(Value::as_u64)
}

/// What a run did, for the exit code.
enum Status {
    Ok,
    VerifyFailed,
}

/// Execute, write outputs and the manifest.
fn perform(inv: Invocation, threads: usize) -> Result<Status> {
    let started = manifest::timestamp();
    let input_digests = inv
        .inputs
        .iter()
        .map(|(role, path)| digest_file(role, path))
        .collect::<Result<Vec<_>>>()?;
    let wanted: BTreeSet<&str> = inv.outputs.keys().copied().collect();
    let produced = execute(inv.sub, &inv.config, &inv.inputs, &wanted)?;
    let mut output_digests = Vec::new();
    for artifact in &produced.artifacts {
        match inv.outputs.get(artifact.role) {
            Some(path) => {
                std::fs::write(path, &artifact.bytes)?;
                output_digests.push(FileDigest {
                    role: artifact.role.to_string(),
                    path: path.clone(),
                    sha256: sha256_hex(&artifact.bytes),
                });
            }
            None if artifact.role == "out" && artifact.text => {
                print!("{}", String::from_utf8_lossy(&artifact.bytes));
            }
            None => {}
        }
    }
    if !produced.summary.is_empty() {
        eprintln!("{}", produced.summary);
    }
    if let Some(out) = inv.outputs.get("out") {
        let manifest = RunManifest {
            subcommand: inv.sub.to_string(),
            seed: master_seed(inv.sub, &inv.config),
            config: inv.config,
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads,
            started,
            finished: manifest::timestamp(),
            inputs: input_digests,
            outputs: output_digests,
        };
        manifest.write(&manifest_path(out))?;
    }
    Ok(if produced.failed {
        Status::VerifyFailed
    } else {
        Status::Ok
    })
}

fn replay(args: ReplayArgs, threads: usize) -> Result<Status> {
    let recorded = RunManifest::read(&args.manifest)?;
    let mut inputs = BTreeMap::new();
    for input in &recorded.inputs {
        let now = digest_file(&input.role, &input.path)?;
        if now.sha256 != input.sha256 {
            return Err(Error::Validation(format!(
                "input {} changed since the run",
                input.path.display()
            )));
        }
        inputs.insert(input.role.clone(), input.path.clone());
    }
    let sub: &'static str = match recorded.subcommand.as_str() {
        "percolate" => "percolate",
        "pc-scan" => "pc-scan",
        "evolve" => "evolve",
        "eof" => "eof",
        "entlen" => "entlen",
        "verify" => "verify",
        "dump-graph" => "dump-graph",
        other => {
            return Err(Error::Format(format!(
                "manifest names unknown subcommand '{other}'"
            )))
        }
    };
    let mut outputs = BTreeMap::new();
    for out in &recorded.outputs {
        let role: &'static str = match out.role.as_str() {
            "out" => "out",
            "csv" => "csv",
            other => {
                return Err(Error::Format(format!(
                    "manifest names unknown output role '{other}'"
                )))
            }
        };
        let path = match &args.redirect {
            Some(dir) => dir.join(
                out.path
                    .file_name()
                    .ok_or_else(|| Error::Format("output path has no file name".into()))?,
            ),
            None => out.path.clone(),
        };
        outputs.insert(role, path);
    }
    let inv = Invocation {
        sub,
        config: recorded.config.clone(),
        inputs,
        outputs,
    };
    let written: BTreeMap<&'static str, PathBuf> = inv.outputs.clone();
    let status = if args.redirect.is_some() {
        perform(inv, threads)?
    } else {
        let wanted: BTreeSet<&str> = inv.outputs.keys().copied().collect();
        let produced = execute(inv.sub, &inv.config, &inv.inputs, &wanted)?;
        for artifact in &produced.artifacts {
            if let Some(path) = inv.outputs.get(artifact.role) {
                std::fs::write(path, &artifact.bytes)?;
            }
        }
        if produced.failed {
            Status::VerifyFailed
        } else {
            Status::Ok
        }
    };
    let mut mismatched = Vec::new();
    for out in &recorded.outputs {
        let path = &written[out.role.as_str()];
        if digest_file(&out.role, path)?.sha256 != out.sha256 {
            mismatched.push(path.display().to_string());
        }
    }
    if !mismatched.is_empty() {
        eprintln!(
            "replay: outputs differ from the manifest: {}",
            mismatched.join(", ")
        );
        return Ok(Status::VerifyFailed);
    }
    eprintln!(
        "replay: {} outputs match the manifest",
        recorded.outputs.len()
    );
    Ok(status)
}

/// Parse `argv` (program name first), run, and return the process exit code:
/// 0 on success, 1 on invalid input, 2 when a verification fails.
pub fn parse_and_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return EXIT_INVALID;
        }
    };
    let threads = cli.threads;
    let result = pool.install(|| match cli.command {
        Command::Replay(args) => replay(args, threads),
        command => invocation(command).and_then(|inv| perform(inv, threads)),
    });
    match result {
        Ok(Status::Ok) => EXIT_OK,
        Ok(Status::VerifyFailed) => EXIT_VERIFY_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}
