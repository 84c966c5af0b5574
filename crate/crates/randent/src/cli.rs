//! Command-line front end: simulate, gap, evolve, sweep, fit, reference.
//!
//! Every file output is accompanied by a `<file>.manifest.json` carrying the
//! fully resolved configuration, seed, crate version, wall time, and sha256
//! digests, so any artifact can be regenerated bit-identically. A TOML file
//! passed with --config supplies defaults for any flag; explicit flags win.
//!
//! Exit codes: 0 ok, 2 usage/domain, 3 capacity, 4 numeric failure.

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use crate::analysis::{self, FitResult, GapModel};
use crate::entmeas;
use crate::error::Error;
use crate::gatelib::{self, GateSpec, CLIFFORD_TOL};
use crate::paulichain::{self, Coupling, LinearChain, LumpReport, PairKernel};
use crate::protocol::{run_protocol, EnsembleTrace, MeasureSet, ProtocolConfig};
use crate::spectral::{self, SpectrumResult};
use crate::Result;

#[derive(Parser)]
#[command(
    name = "randent",
    version,
    about = "Entanglement generation by random two-qubit gates: Monte Carlo runs, exact chain evolution, spectral gaps, landscape sweeps, and fits"
)]
struct Cli {
    /// Cap on worker threads; defaults to machine parallelism
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML file providing defaults for any flag of the chosen subcommand
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replica-averaged entanglement traces of the random protocol
    Simulate(SimulateArgs),
    /// Spectral gap and degeneracy report over a range of system sizes
    Gap(GapArgs),
    /// Exact ensemble-averaged purity trace by chain iteration
    Evolve(EvolveArgs),
    /// Decay-rate landscape over the canonical gate parameter grid
    Sweep(SweepArgs),
    /// Fit decay rates, time constants, transients, or gap scaling laws
    Fit(FitArgs),
    /// Asymptotic random-state reference values for a given size
    Reference(ReferenceArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of qubits
    #[arg(long)]
    n: Option<usize>,
    /// Gate spec: cnot | xy | dcnot | swap | u4 | canonical:ax,ay,az
    #[arg(long)]
    gate: Option<String>,
    /// Coupling: random | nnpbc | nnobc
    #[arg(long)]
    coupling: Option<String>,
    /// Number of protocol steps
    #[arg(long)]
    steps: Option<usize>,
    /// Ensemble size
    #[arg(long)]
    replicas: Option<usize>,
    /// Master seed; replica r runs on RNG stream r
    #[arg(long)]
    seed: Option<u64>,
    /// Comma list of purity, entropy, schmidt [default: purity]
    #[arg(long)]
    measures: Option<String>,
    /// Output file; stdout when absent (no manifest then)
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv | json [default: csv]
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct GapArgs {
    /// Gate spec; must admit the Markov description (Clifford or u4)
    #[arg(long)]
    gate: Option<String>,
    #[arg(long)]
    coupling: Option<String>,
    /// Inclusive size range a:b (a single n is also accepted)
    #[arg(long, value_name = "A:B")]
    n_range: Option<String>,
    /// full | lumped | auto [default: auto]
    #[arg(long)]
    mode: Option<String>,
    /// Eigenvalues requested from the iterative solver [default: 8]
    #[arg(long)]
    topk: Option<usize>,
    /// Include the 16x16 pair kernel, its lumping, and the lumpability report
    #[arg(long)]
    dump_kernel: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvolveArgs {
    #[arg(long)]
    gate: Option<String>,
    #[arg(long)]
    coupling: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    coupling: Option<String>,
    /// Lattice spacing of the canonical grid; must divide 1
    #[arg(long)]
    grid_step: Option<f64>,
    /// Steps per protocol run
    #[arg(long = "T")]
    t_steps: Option<usize>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// kappa | tau | degenerate | gap-linear | gap-log
    #[arg(long)]
    model: Option<String>,
    /// Trace file (simulate/evolve output) or gap report, JSON or CSV
    #[arg(long)]
    input: Option<PathBuf>,
    /// Qubit count; required for CSV trace input, else read from the file
    #[arg(long)]
    n: Option<usize>,
    /// Asymptotic purity override; defaults to the exact value for n
    #[arg(long)]
    i_inf: Option<f64>,
    /// Fixed time constant for the degenerate transient model
    #[arg(long)]
    tau: Option<f64>,
    /// Fit window lo:hi in time steps
    #[arg(long, value_name = "LO:HI")]
    window: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReferenceArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// config-file merging

struct FileConfig(Option<toml::Table>);

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig(None)),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| io_err(format!("reading config {}", p.display()), e))?;
                let table: toml::Table = text
                    .parse()
                    .map_err(|e| Error::Usage(format!("config {}: {}", p.display(), e)))?;
                Ok(FileConfig(Some(table)))
            }
        }
    }

    fn value(&self, key: &str) -> Option<&toml::Value> {
        self.0.as_ref().and_then(|t| t.get(key))
    }

    fn usize_of(&self, key: &str) -> Result<Option<usize>> {
        match self.value(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
            Some(v) => Err(Error::Usage(format!(
                "config key '{}' must be a nonnegative integer, got {}",
                key, v
            ))),
        }
    }

    fn u64_of(&self, key: &str) -> Result<Option<u64>> {
        match self.value(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(v) => Err(Error::Usage(format!(
                "config key '{}' must be a nonnegative integer, got {}",
                key, v
            ))),
        }
    }

    fn f64_of(&self, key: &str) -> Result<Option<f64>> {
        match self.value(key) {
            None => Ok(None),
            Some(toml::Value::Float(f)) => Ok(Some(*f)),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(Error::Usage(format!(
                "config key '{}' must be a number, got {}",
                key, v
            ))),
        }
    }

    fn string_of(&self, key: &str) -> Result<Option<String>> {
        match self.value(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(Error::Usage(format!(
                "config key '{}' must be a string, got {}",
                key, v
            ))),
        }
    }

    fn bool_of(&self, key: &str) -> Result<Option<bool>> {
        match self.value(key) {
            None => Ok(None),
            Some(toml::Value::Boolean(b)) => Ok(Some(*b)),
            Some(v) => Err(Error::Usage(format!(
                "config key '{}' must be a boolean, got {}",
                key, v
            ))),
        }
    }

    fn path_of(&self, key: &str) -> Result<Option<PathBuf>> {
        Ok(self.string_of(key)?.map(PathBuf::from))
    }
}

fn require<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::Usage(format!("missing --{} (set it as a flag or config key)", flag)))
}

fn io_err(context: String, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {}", context, e)))
}

fn parse_range(s: &str) -> Result<(usize, usize)> {
    let parse_one = |p: &str| {
        p.trim()
            .parse::<usize>()
            .map_err(|_| Error::Usage(format!("bad size '{}' in range '{}'", p, s)))
    };
    let (a, b) = match s.split_once(':') {
        Some((a, b)) => (parse_one(a)?, parse_one(b)?),
        None => {
            let n = parse_one(s)?;
            (n, n)
        }
    };
    if a > b || a == 0 {
        return Err(Error::Usage(format!("bad size range '{}'", s)));
    }
    Ok((a, b))
}

// ---------------------------------------------------------------------------
// manifests

#[derive(Serialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
}

/// Written next to every output file as `<file>.manifest.json`.
#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    pub wall_time_seconds: f64,
    pub outputs: Vec<OutputDigest>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{:02x}", b);
    }
    s
}

// Write the payload; with a file sink also drop the manifest next to it.
fn emit(
    out: Option<&Path>,
    payload: &str,
    command: &str,
    config: serde_json::Value,
    seed: Option<u64>,
    started: Instant,
) -> Result<()> {
    match out {
        None => {
            print!("{}", payload);
            Ok(())
        }
        Some(path) => {
            std::fs::write(path, payload)
                .map_err(|e| io_err(format!("writing {}", path.display()), e))?;
            let manifest = RunManifest {
                command: command.into(),
                config,
                seed,
                version: env!("CARGO_PKG_VERSION").into(),
                wall_time_seconds: started.elapsed().as_secs_f64(),
                outputs: vec![OutputDigest {
                    path: path.display().to_string(),
                    sha256: sha256_hex(payload.as_bytes()),
                }],
            };
            let mpath = PathBuf::from(format!("{}.manifest.json", path.display()));
            let body = serde_json::to_string_pretty(&manifest)
                .map_err(|e| Error::Io(std::io::Error::other(format!("serializing manifest: {}", e))))?;
            std::fs::write(&mpath, body)
                .map_err(|e| io_err(format!("writing {}", mpath.display()), e))?;
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// entry

/// Parse arguments, run the chosen command, map errors to exit codes.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e);
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => file.usize_of("threads")?,
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Validation(format!("thread pool setup failed: {}", e)))?;
    }
    match cli.command {
        Cmd::Simulate(a) => cmd_simulate(a, &file),
        Cmd::Gap(a) => cmd_gap(a, &file),
        Cmd::Evolve(a) => cmd_evolve(a, &file),
        Cmd::Sweep(a) => cmd_sweep(a, &file),
        Cmd::Fit(a) => cmd_fit(a, &file),
        Cmd::Reference(a) => cmd_reference(a, &file),
    }
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Serialize)]
struct SimulateResolved {
    n: usize,
    gate: String,
    coupling: String,
    steps: usize,
    replicas: usize,
    seed: u64,
    measures: String,
    format: String,
}

fn cmd_simulate(a: SimulateArgs, file: &FileConfig) -> Result<()> {
    let started = Instant::now();
    let n = require(a.n.or(file.usize_of("n")?), "n")?;
    let gate_s = require(a.gate.or(file.string_of("gate")?), "gate")?;
    let coupling_s = require(a.coupling.or(file.string_of("coupling")?), "coupling")?;
    let steps = require(a.steps.or(file.usize_of("steps")?), "steps")?;
    let replicas = require(a.replicas.or(file.usize_of("replicas")?), "replicas")?;
    let seed = a.seed.or(file.u64_of("seed")?).unwrap_or(0);
    let measures_s = a
        .measures
        .or(file.string_of("measures")?)
        .unwrap_or_else(|| "purity".into());
    let format = a
        .format
        .or(file.string_of("format")?)
        .unwrap_or_else(|| "csv".into());
    let out = a.out.or(file.path_of("out")?);

    let cfg = ProtocolConfig {
        n,
        gate: GateSpec::from_str(&gate_s)?,
        coupling: Coupling::from_str(&coupling_s)?,
        steps,
        replicas,
        seed,
        measures: MeasureSet::from_str(&measures_s)?,
        cut: None,
    };
    let trace = run_protocol(&cfg)?;
    let payload = match format.as_str() {
        "csv" => trace_csv(&trace),
        "json" => to_json(&trace)?,
        other => {
            return Err(Error::Usage(format!(
                "unknown format '{}' (expected csv or json)",
                other
            )))
        }
    };
    let resolved = SimulateResolved {
        n,
        gate: cfg.gate.to_string(),
        coupling: cfg.coupling.to_string(),
        steps,
        replicas,
        seed,
        measures: cfg.measures.to_string(),
        format,
    };
    emit(
        out.as_deref(),
        &payload,
        "simulate",
        serde_json::to_value(&resolved).unwrap(),
        Some(seed),
        started,
    )
}

// Column order is fixed: t, purity_mean, purity_se, entropy_mean, entropy_se,
// mu2_1..mu2_K; only requested measures contribute columns.
fn trace_csv(trace: &EnsembleTrace) -> String {
    let mut header = vec!["t".to_string()];
    if trace.purity.is_some() {
        header.push("purity_mean".into());
        header.push("purity_se".into());
    }
    if trace.entropy.is_some() {
        header.push("entropy_mean".into());
        header.push("entropy_se".into());
    }
    if let Some(mu2) = &trace.mu2 {
        for k in 1..=mu2[0].len() {
            header.push(format!("mu2_{}", k));
        }
    }
    let mut s = header.join(",");
    s.push('\n');
    for t in 0..=trace.steps {
        let mut row = vec![t.to_string()];
        if let Some(p) = &trace.purity {
            row.push(p[t].0.to_string());
            row.push(p[t].1.to_string());
        }
        if let Some(e) = &trace.entropy {
            row.push(e[t].0.to_string());
            row.push(e[t].1.to_string());
        }
        if let Some(mu2) = &trace.mu2 {
            for v in &mu2[t] {
                row.push(v.to_string());
            }
        }
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v)
        .map_err(|e| Error::Io(std::io::Error::other(format!("serializing output: {}", e))))
}

// ---------------------------------------------------------------------------
// gap

#[derive(Serialize, Deserialize)]
pub struct GapPerN {
    pub n: usize,
    pub mode: String,
    pub solver: String,
    pub gap: Option<f64>,
    /// Leading (magnitude, multiplicity) groups below the units.
    pub eigenvalues: Vec<(f64, usize)>,
    pub degeneracy_profile: Vec<(f64, usize)>,
    pub unit_multiplicity: usize,
}

#[derive(Serialize, Deserialize)]
pub struct GapReport {
    pub gate: String,
    pub coupling: String,
    pub mode: String,
    pub topk: usize,
    pub results: Vec<GapPerN>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<PairKernel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lumped_kernel: Option<[[f64; 4]; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lumpability: Option<LumpReport>,
}

/// Pair kernel of a gate spec, or Unsupported for gates without a
/// Pauli-weight Markov description.
pub fn markov_kernel(gate: &GateSpec) -> Result<PairKernel> {
    match gate.fixed_gate() {
        None => Ok(paulichain::pair_kernel_u4()),
        Some(g) => match gatelib::pauli_conjugation_table(&g, CLIFFORD_TOL) {
            Some(table) => Ok(paulichain::pair_kernel_clifford(&table)),
            None => Err(Error::Unsupported(format!(
                "gate '{}' is not Clifford, so the averaged dynamics is not a Markov chain \
                 on Pauli weights; use a Clifford gate (cnot, xy, dcnot, swap, or a Clifford \
                 canonical point) or u4",
                gate
            ))),
        },
    }
}

// Dense below this dimension, block-Krylov above.
const DENSE_SOLVE_DIM: usize = 2048;

fn chain_spectrum(chain: &dyn LinearChain, topk: usize) -> Result<SpectrumResult> {
    if chain.dim() <= DENSE_SOLVE_DIM {
        spectral::dense_spectrum(chain)
    } else {
        spectral::top_eigenvalues(chain, topk, spectral::DEFAULT_TOL)
    }
}

fn leading_groups(spec: &SpectrumResult, topk: usize) -> Vec<(f64, usize)> {
    let mut out = Vec::new();
    let mut total = 0;
    for &(v, m) in &spec.eigenvalues {
        out.push((v, m));
        total += m;
        if total >= topk {
            break;
        }
    }
    out
}

fn cmd_gap(a: GapArgs, file: &FileConfig) -> Result<()> {
    let started = Instant::now();
    let gate_s = require(a.gate.or(file.string_of("gate")?), "gate")?;
    let coupling_s = require(a.coupling.or(file.string_of("coupling")?), "coupling")?;
    let range_s = require(a.n_range.or(file.string_of("n-range")?), "n-range")?;
    let mode = a
        .mode
        .or(file.string_of("mode")?)
        .unwrap_or_else(|| "auto".into());
    let topk = a.topk.or(file.usize_of("topk")?).unwrap_or(8);
    let dump = a.dump_kernel || file.bool_of("dump-kernel")?.unwrap_or(false);
    let out = a.out.or(file.path_of("out")?);

    let gate = GateSpec::from_str(&gate_s)?;
    let coupling = Coupling::from_str(&coupling_s)?;
    let (n_lo, n_hi) = parse_range(&range_s)?;
    if !matches!(mode.as_str(), "full" | "lumped" | "auto") {
        return Err(Error::Usage(format!(
            "unknown mode '{}' (expected full, lumped, or auto)",
            mode
        )));
    }
    let kernel = markov_kernel(&gate)?;

    let mut results = Vec::new();
    for n in n_lo..=n_hi {
        let use_full = match mode.as_str() {
            "full" => true,
            "lumped" => false,
            _ => n <= 10,
        };
        let spec = if use_full {
            let chain = paulichain::chain_operator(&kernel, n, coupling)?;
            chain_spectrum(&chain, topk)?
        } else {
            let chain = paulichain::lumped_chain(&kernel, n, coupling)?;
            chain_spectrum(&chain, topk)?
        };
        results.push(GapPerN {
            n,
            mode: if use_full { "full".into() } else { "lumped".into() },
            solver: spec.solver.clone(),
            gap: spec.gap,
            eigenvalues: leading_groups(&spec, topk),
            degeneracy_profile: spectral::degeneracy_profile(&spec, spectral::DEGENERACY_TOL),
            unit_multiplicity: spec.unit_multiplicity,
        });
    }
    let (lumped_kernel, lumpability) = if dump {
        let (lk, rep) = paulichain::lump(&kernel);
        (Some(lk), Some(rep))
    } else {
        (None, None)
    };
    let report = GapReport {
        gate: gate.to_string(),
        coupling: coupling.to_string(),
        mode: mode.clone(),
        topk,
        results,
        kernel: dump.then_some(kernel),
        lumped_kernel,
        lumpability,
    };
    let config = serde_json::json!({
        "gate": gate.to_string(),
        "coupling": coupling.to_string(),
        "n-range": format!("{}:{}", n_lo, n_hi),
        "mode": mode,
        "topk": topk,
        "dump-kernel": dump,
    });
    emit(out.as_deref(), &to_json(&report)?, "gap", config, None, started)
}

// ---------------------------------------------------------------------------
// evolve

fn cmd_evolve(a: EvolveArgs, file: &FileConfig) -> Result<()> {
    let started = Instant::now();
    let gate_s = require(a.gate.or(file.string_of("gate")?), "gate")?;
    let coupling_s = require(a.coupling.or(file.string_of("coupling")?), "coupling")?;
    let n = require(a.n.or(file.usize_of("n")?), "n")?;
    let steps = require(a.steps.or(file.usize_of("steps")?), "steps")?;
    let out = a.out.or(file.path_of("out")?);

    let gate = GateSpec::from_str(&gate_s)?;
    let coupling = Coupling::from_str(&coupling_s)?;
    let kernel = markov_kernel(&gate)?;
    let chain = paulichain::chain_operator(&kernel, n, coupling)?;
    let dist = paulichain::initial_dist_product_state(n)?;
    let trace = paulichain::evolve(&chain, &dist, steps)?;

    let mut payload = String::from("t,purity\n");
    for (t, purity) in &trace {
        let _ = writeln!(payload, "{},{}", t, purity);
    }
    let config = serde_json::json!({
        "gate": gate.to_string(),
        "coupling": coupling.to_string(),
        "n": n,
        "steps": steps,
    });
    emit(out.as_deref(), &payload, "evolve", config, None, started)
}

// ---------------------------------------------------------------------------
// sweep

fn cmd_sweep(a: SweepArgs, file: &FileConfig) -> Result<()> {
    let started = Instant::now();
    let n = require(a.n.or(file.usize_of("n")?), "n")?;
    let coupling_s = require(a.coupling.or(file.string_of("coupling")?), "coupling")?;
    let grid_step = require(a.grid_step.or(file.f64_of("grid-step")?), "grid-step")?;
    let t_steps = require(a.t_steps.or(file.usize_of("T")?), "T")?;
    let replicas = require(a.replicas.or(file.usize_of("replicas")?), "replicas")?;
    let seed = a.seed.or(file.u64_of("seed")?).unwrap_or(0);
    let out = a.out.or(file.path_of("out")?);

    let coupling = Coupling::from_str(&coupling_s)?;
    let grid = analysis::sweep_canonical(n, coupling, grid_step, t_steps, replicas, seed)?;

    let mut payload = String::from("ax,ay,az,kappa,kappa_se\n");
    for p in &grid.points {
        let _ = writeln!(
            payload,
            "{},{},{},{},{}",
            p.params.ax, p.params.ay, p.params.az, p.kappa, p.kappa_se
        );
    }
    let best = &grid.points[grid.argmax];
    let _ = writeln!(
        payload,
        "# max kappa={} se={} at ax={} ay={} az={}",
        best.kappa, best.kappa_se, best.params.ax, best.params.ay, best.params.az
    );
    let config = serde_json::json!({
        "n": n,
        "coupling": coupling.to_string(),
        "grid-step": grid_step,
        "T": t_steps,
        "replicas": replicas,
        "seed": seed,
    });
    emit(out.as_deref(), &payload, "sweep", config, Some(seed), started)
}

// ---------------------------------------------------------------------------
// fit

// Trace input: .json holds an EnsembleTrace, anything else is simulate CSV.
fn load_trace(path: &Path, n_flag: Option<usize>) -> Result<EnsembleTrace> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| io_err(format!("reading {}", path.display()), e))?;
    if path.extension().is_some_and(|e| e == "json") {
        return serde_json::from_str(&text)
            .map_err(|e| Error::Usage(format!("{} is not a trace file: {}", path.display(), e)));
    }
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Usage(format!("{} is empty", path.display())))?
        .split(',')
        .map(str::trim)
        .collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let c_mean = col("purity_mean").or(col("purity")).ok_or_else(|| {
        Error::Usage(format!("{} has no purity_mean or purity column", path.display()))
    })?;
    let c_se = col("purity_se");
    let mut purity = Vec::new();
    for (idx, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |c: usize| -> Result<f64> {
            fields
                .get(c)
                .and_then(|f| f.parse::<f64>().ok())
                .ok_or_else(|| {
                    Error::Usage(format!("{} row {}: bad number", path.display(), idx + 2))
                })
        };
        let mean = get(c_mean)?;
        let se = match c_se {
            Some(c) => get(c)?,
            None => 0.0,
        };
        purity.push((mean, se));
    }
    if purity.is_empty() {
        return Err(Error::Usage(format!("{} has no data rows", path.display())));
    }
    let n = n_flag.ok_or_else(|| {
        Error::Usage("CSV trace input needs --n to recover the system size".into())
    })?;
    Ok(EnsembleTrace {
        n,
        replicas: 0,
        steps: purity.len() - 1,
        purity: Some(purity),
        entropy: None,
        mu2: None,
    })
}

// Gap input: gap report JSON or a CSV with n and gap columns.
fn load_gap_points(path: &Path) -> Result<Vec<(usize, f64)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| io_err(format!("reading {}", path.display()), e))?;
    if path.extension().is_some_and(|e| e == "json") {
        let report: GapReport = serde_json::from_str(&text).map_err(|e| {
            Error::Usage(format!("{} is not a gap report: {}", path.display(), e))
        })?;
        return report
            .results
            .iter()
            .map(|r| {
                r.gap.map(|g| (r.n, g)).ok_or_else(|| {
                    Error::Usage(format!("gap report has no gap at n={}", r.n))
                })
            })
            .collect();
    }
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Usage(format!("{} is empty", path.display())))?
        .split(',')
        .map(str::trim)
        .collect();
    let c_n = header.iter().position(|h| *h == "n");
    let c_gap = header.iter().position(|h| *h == "gap");
    let (c_n, c_gap) = match (c_n, c_gap) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::Usage(format!(
                "{} needs n and gap columns",
                path.display()
            )))
        }
    };
    let mut points = Vec::new();
    for (idx, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let n = fields
            .get(c_n)
            .and_then(|f| f.parse::<usize>().ok())
            .ok_or_else(|| Error::Usage(format!("{} row {}: bad n", path.display(), idx + 2)))?;
        let gap = fields
            .get(c_gap)
            .and_then(|f| f.parse::<f64>().ok())
            .ok_or_else(|| Error::Usage(format!("{} row {}: bad gap", path.display(), idx + 2)))?;
        points.push((n, gap));
    }
    Ok(points)
}

fn parse_window(s: Option<&str>) -> Result<Option<(usize, usize)>> {
    match s {
        None => Ok(None),
        Some(w) => {
            let (lo, hi) = parse_range(w).map_err(|_| {
                Error::Usage(format!("bad window '{}'; expected lo:hi in time steps", w))
            })?;
            Ok(Some((lo, hi)))
        }
    }
}

fn cmd_fit(a: FitArgs, file: &FileConfig) -> Result<()> {
    let started = Instant::now();
    let model = require(a.model.or(file.string_of("model")?), "model")?;
    let input = require(a.input.or(file.path_of("input")?), "input")?;
    let n = a.n.or(file.usize_of("n")?);
    let i_inf_flag = a.i_inf.or(file.f64_of("i-inf")?);
    let tau = a.tau.or(file.f64_of("tau")?);
    let window = parse_window(a.window.or(file.string_of("window")?).as_deref())?;
    let out = a.out.or(file.path_of("out")?);

    let fitted: FitResult = match model.as_str() {
        "kappa" | "tau" | "degenerate" => {
            let trace = load_trace(&input, n)?;
            let i_inf = match i_inf_flag {
                Some(v) => v,
                None => entmeas::asymptotic_purity(trace.n)?,
            };
            match model.as_str() {
                "kappa" => analysis::fit_kappa(&trace, i_inf, window)?,
                "tau" => analysis::fit_tau(&trace, i_inf, window)?,
                _ => {
                    let tau = require(tau, "tau")?;
                    analysis::fit_degenerate_decay(&trace, i_inf, tau)?
                }
            }
        }
        "gap-linear" | "gap-log" => {
            let points = load_gap_points(&input)?;
            let gm = if model == "gap-linear" {
                GapModel::Linear
            } else {
                GapModel::Log
            };
            analysis::fit_gap_scaling(&points, gm)?
        }
        other => {
            return Err(Error::Usage(format!(
                "unknown model '{}' (expected kappa, tau, degenerate, gap-linear, gap-log)",
                other
            )))
        }
    };
    let config = serde_json::json!({
        "model": model,
        "input": input.display().to_string(),
        "n": n,
        "i-inf": i_inf_flag,
        "tau": tau,
        "window": window,
    });
    emit(out.as_deref(), &to_json(&fitted)?, "fit", config, None, started)
}

// ---------------------------------------------------------------------------
// reference

#[derive(Serialize)]
struct ReferenceValues {
    n: usize,
    purity_inf: f64,
    entropy_inf: f64,
    mu2: Vec<f64>,
}

fn cmd_reference(a: ReferenceArgs, file: &FileConfig) -> Result<()> {
    let started = Instant::now();
    let n = require(a.n.or(file.usize_of("n")?), "n")?;
    let out = a.out.or(file.path_of("out")?);
    let big_n = 1usize << (n / 2);
    let mu2 = (1..=big_n)
        .map(|i| entmeas::random_schmidt_reference(i, big_n).map(|mu| mu * mu))
        .collect::<Result<Vec<_>>>()?;
    let values = ReferenceValues {
        n,
        purity_inf: entmeas::asymptotic_purity(n)?,
        entropy_inf: entmeas::asymptotic_entropy(n)?,
        mu2,
    };
    let config = serde_json::json!({ "n": n });
    emit(
        out.as_deref(),
        &to_json(&values)?,
        "reference",
        config,
        None,
        started,
    )
}
