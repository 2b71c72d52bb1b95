//! `osrb`: batch front end for the one-shot binning bounds and the
//! second-order rate calculators.
//!
//! Exit codes: 0 success, 2 invalid configuration or arguments, 3 a size
//! guard refused the request, 4 I/O failure.

mod config;
mod output;
mod run;
mod validate;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use config::{config_hash, ExperimentConfig, Kind, Payload};
use output::{Format, Sink};
use run::RunMeta;

/// Overrides the worker count of every run.
pub const WORKERS_ENV: &str = "OSRB_WORKERS";

#[derive(Debug)]
pub enum CliError {
    Schema(String),
    Core(osrb_core::Error),
    Io(String),
    /// The reader of stdout went away; not a failure of the run.
    Closed,
    Internal(String),
}

impl CliError {
    fn io(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::BrokenPipe {
            return CliError::Closed;
        }
        CliError::Io(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Core(osrb_core::Error::GuardExceeded { .. }) => 3,
            CliError::Core(_) => 2,
            CliError::Io(_) => 4,
            CliError::Closed => 0,
            CliError::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Schema(s) => write!(f, "{s}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(s) => write!(f, "i/o: {s}"),
            CliError::Closed => write!(f, "output closed"),
            CliError::Internal(s) => write!(f, "internal: {s}"),
        }
    }
}

impl From<osrb_core::Error> for CliError {
    fn from(e: osrb_core::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "osrb", version, about = "Random binning bounds, oracles and second-order rates")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Check a config file without running it; lists every problem found.
    Validate { file: PathBuf },
    /// Run a config file.
    Run {
        file: PathBuf,
        /// Overrides `output_path`; `-` is stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Point-to-point rate versus blocklength.
    P2p(P2pArgs),
    /// Broadcast region boundary.
    BcRegion(BcArgs),
    /// Wiretap secrecy rate.
    Wiretap(WiretapArgs),
    /// Uniformity bound against exact and sampled binning.
    Thm1(ThmArgs),
    /// Decoding bounds against exact and sampled SLC decoding.
    Thm2(ThmArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Payload defaults come from this config instead of the built-in example.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Defaults to the config file's seed, or 0 without one.
    #[arg(long)]
    seed: Option<u64>,
    /// `-` or absent writes to stdout; `.json`/`.jsonl` selects JSON lines.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct P2pArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',')]
    n: Vec<u64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Replaces the channel by a BSC with this crossover.
    #[arg(long)]
    bsc: Option<f64>,
    /// Simulate at `rate - backoff`.
    #[arg(long)]
    backoff: Option<f64>,
    #[arg(long)]
    trials: Option<u64>,
}

#[derive(Args, Debug)]
struct BcArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    directions: Option<usize>,
    /// Accepted for symmetry with the other subcommands; the region has no
    /// Monte Carlo part.
    #[arg(long)]
    trials: Option<u64>,
}

#[derive(Args, Debug)]
struct WiretapArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',')]
    n: Vec<u64>,
    /// Sets both error targets.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    eps_r: Option<f64>,
    #[arg(long)]
    eps_sec: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    theta: Vec<f64>,
    /// Simulate at `rate - backoff`.
    #[arg(long)]
    backoff: Option<f64>,
    /// Number of sampled codebooks when simulating.
    #[arg(long)]
    trials: Option<u64>,
}

#[derive(Args, Debug)]
struct ThmArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    #[arg(long)]
    trials: Option<u64>,
    /// Random sources per shape of the standard grid.
    #[arg(long)]
    sweep: Option<usize>,
}

fn bsc_rows(p: f64) -> Value {
    json!([[1.0 - p, p], [p, 1.0 - p]])
}

fn default_payload(kind: Kind) -> Value {
    let gammas = osrb_core::sweep::GAMMA_GRID.to_vec();
    match kind {
        Kind::Thm1 => json!({"standard_sweep": 1, "gamma_grid": gammas, "trials": 2000}),
        Kind::Thm2 => json!({"standard_sweep": 1, "gamma_grid": gammas, "trials": 2000}),
        Kind::P2p => json!({
            "input": [0.5, 0.5],
            "channel": {"input_size": 2, "output_sizes": [2], "rows": bsc_rows(0.11)},
            "n_grid": [1000, 10000, 100000],
            "eps": 1e-3,
            // 1/sqrt(1000) exceeds eps, so the slack is folded into the remainder
            "policy": {"eps_slack": 0.0}
        }),
        Kind::Bc => {
            // X = (X1, X2), U_j = X_j with P(U1 = U2) = 0.6, BSC(0.05) and
            // BSC(0.1) on the two halves
            let mut q = vec![0.0; 16];
            let mut rows = vec![vec![0.0; 4]; 4];
            for u1 in 0..2 {
                for u2 in 0..2 {
                    q[(u1 * 2 + u2) * 4 + u1 * 2 + u2] = if u1 == u2 { 0.3 } else { 0.2 };
                }
            }
            for (x, row) in rows.iter_mut().enumerate() {
                for y1 in 0..2 {
                    for y2 in 0..2 {
                        let a = if y1 == x / 2 { 0.95 } else { 0.05 };
                        let b = if y2 == x % 2 { 0.9 } else { 0.1 };
                        row[y1 * 2 + y2] = a * b;
                    }
                }
            }
            json!({
                "q_u1u2x": {"axis_sizes": [2, 2, 4], "probs": q},
                "channel": {"input_size": 4, "output_sizes": [2, 2], "rows": rows},
                "n": 10000,
                "eps": 0.1
            })
        }
        Kind::Wiretap => {
            // U = X uniform; Y = BSC(0.1), Z = BSC(0.3), independent given X
            let rows: Vec<Vec<f64>> = (0..2)
                .map(|x| {
                    let mut r = vec![0.0; 4];
                    for y in 0..2 {
                        for z in 0..2 {
                            let a = if y == x { 0.9 } else { 0.1 };
                            let b = if z == x { 0.7 } else { 0.3 };
                            r[y * 2 + z] = a * b;
                        }
                    }
                    r
                })
                .collect();
            json!({
                "q_ux": {"axis_sizes": [2, 2], "probs": [0.5, 0.0, 0.0, 0.5]},
                "channel": {"input_size": 2, "output_sizes": [2, 2], "rows": rows},
                "n_grid": [100000, 1000000],
                "eps_r": 1e-2,
                "eps_sec": 1e-2,
                "theta_grid": [0.5]
            })
        }
    }
}

fn read_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

fn base_config(kind: Kind, common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => {
            let c = read_config(p)?;
            if c.kind != kind {
                return Err(CliError::Schema(format!(
                    "config kind is `{}`, expected `{}`",
                    c.kind.name(),
                    kind.name()
                )));
            }
            c
        }
        None => ExperimentConfig {
            kind,
            seed: 0,
            workers: 1,
            output_path: None,
            payload: default_payload(kind),
        },
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(o) = &common.out {
        cfg.output_path = Some(o.clone());
    }
    Ok(cfg)
}

fn set(payload: &mut Value, key: &str, v: Value) {
    payload.as_object_mut().expect("payload is an object").insert(key.to_string(), v);
}

fn inline_config(cmd: &Cmd) -> Result<ExperimentConfig, CliError> {
    let mut cfg;
    match cmd {
        Cmd::P2p(a) => {
            cfg = base_config(Kind::P2p, &a.common)?;
            let p = &mut cfg.payload;
            if !a.n.is_empty() {
                set(p, "n_grid", json!(a.n));
            }
            if let Some(e) = a.eps {
                set(p, "eps", json!(e));
            }
            if let Some(b) = a.bsc {
                set(p, "channel", json!({"input_size": 2, "output_sizes": [2], "rows": bsc_rows(b)}));
                set(p, "input", json!([0.5, 0.5]));
            }
            if a.backoff.is_some() || a.trials.is_some() {
                let mut sim = p.get("simulate").cloned().unwrap_or_else(|| json!({"backoff": 0.2, "trials": 10000}));
                if let Some(b) = a.backoff {
                    sim["backoff"] = json!(b);
                }
                if let Some(t) = a.trials {
                    sim["trials"] = json!(t);
                }
                set(p, "simulate", sim);
            }
        }
        Cmd::BcRegion(a) => {
            cfg = base_config(Kind::Bc, &a.common)?;
            let p = &mut cfg.payload;
            if let Some(n) = a.n {
                set(p, "n", json!(n));
            }
            if let Some(e) = a.eps {
                set(p, "eps", json!(e));
            }
            if let Some(d) = a.directions {
                set(p, "directions", json!(d));
            }
        }
        Cmd::Wiretap(a) => {
            cfg = base_config(Kind::Wiretap, &a.common)?;
            let p = &mut cfg.payload;
            if !a.n.is_empty() {
                set(p, "n_grid", json!(a.n));
            }
            if let Some(e) = a.eps {
                set(p, "eps_r", json!(e));
                set(p, "eps_sec", json!(e));
            }
            if let Some(e) = a.eps_r {
                set(p, "eps_r", json!(e));
            }
            if let Some(e) = a.eps_sec {
                set(p, "eps_sec", json!(e));
            }
            if !a.theta.is_empty() {
                set(p, "theta_grid", json!(a.theta));
            }
            if a.backoff.is_some() || a.trials.is_some() {
                let mut sim = p.get("simulate").cloned().unwrap_or_else(|| json!({"backoff": 0.1, "scan": 64}));
                if let Some(b) = a.backoff {
                    sim["backoff"] = json!(b);
                }
                if let Some(t) = a.trials {
                    sim["scan"] = json!(t);
                }
                set(p, "simulate", sim);
            }
        }
        Cmd::Thm1(a) | Cmd::Thm2(a) => {
            let kind = if matches!(cmd, Cmd::Thm1(_)) { Kind::Thm1 } else { Kind::Thm2 };
            cfg = base_config(kind, &a.common)?;
            let p = &mut cfg.payload;
            if !a.gamma.is_empty() {
                set(p, "gamma_grid", json!(a.gamma));
            }
            if let Some(t) = a.trials {
                set(p, "trials", json!(t));
            }
            if let Some(k) = a.sweep {
                let obj = p.as_object_mut().expect("payload is an object");
                obj.remove("source");
                obj.remove("spec");
                set(p, "standard_sweep", json!(k));
            }
        }
        Cmd::Validate { .. } | Cmd::Run { .. } => unreachable!("file commands have no inline config"),
    }
    Ok(cfg)
}

fn workers(cfg_workers: usize) -> Result<usize, CliError> {
    let w = match std::env::var(WORKERS_ENV) {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Schema(format!("{WORKERS_ENV}={s} is not a positive integer")))?,
        Err(_) => cfg_workers,
    };
    if w == 0 {
        return Err(CliError::Schema("workers must be at least 1".into()));
    }
    Ok(w)
}

fn run_config(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let payload = Payload::parse(cfg.kind, &cfg.payload).map_err(|e| CliError::Schema(format!("payload: {e}")))?;
    let meta = RunMeta {
        hash: config_hash(cfg.kind, cfg.seed, &payload.to_value()),
        seed: cfg.seed,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers(cfg.workers)?)
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let path = cfg.output_path.as_deref().filter(|p| *p != Path::new("-"));
    let format = Format::for_path(path);
    pool.install(|| match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            let mut sink = Sink::new(BufWriter::new(f), format);
            run::execute(&payload, &meta, &mut sink)?;
            sink.into_inner().flush().map_err(CliError::io)
        }
        None => {
            let mut sink = Sink::new(io::stdout().lock(), format);
            run::execute(&payload, &meta, &mut sink)
        }
    })
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    match &cli.cmd {
        Cmd::Validate { file } => {
            let text = std::fs::read_to_string(file).map_err(|e| CliError::Io(format!("{}: {e}", file.display())))?;
            let report = validate::validate_text(&text);
            print!("{}", report.render());
            Ok(if report.errors.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Cmd::Run { file, out } => {
            let mut cfg = read_config(file)?;
            if let Some(o) = out {
                cfg.output_path = Some(o.clone());
            }
            run_config(&cfg)?;
            Ok(ExitCode::SUCCESS)
        }
        cmd => {
            run_config(&inline_config(cmd)?)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(CliError::Closed) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("osrb: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
