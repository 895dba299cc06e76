//! Experiment runner: reads an INI config, runs one named experiment and
//! writes CSV tables plus a `metadata.json` sidecar.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use config::{RawConfig, Reader, DEFAULT_SEED};
pub use output::{Cell, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
        }
    }

    /// One-line JSON for scripts reading stderr.
    pub fn to_json(&self) -> String {
        json!({ "error": self.category(), "exit_code": self.exit_code(), "message": self.to_string() }).to_string()
    }
}

impl From<qcond_core::Error> for CliError {
    fn from(e: qcond_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Tables and a JSON summary produced by one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub summary: Value,
}

/// An experiment whose configuration has been fully read and validated.
pub trait Experiment: Send + Sync {
    fn execute(&self) -> Result<Outcome, CliError>;
}

pub struct CatalogEntry {
    pub name: &'static str,
    /// Config sections the experiment reads besides `[experiment]`.
    pub blocks: &'static [&'static str],
    pub description: &'static str,
}

pub const CATALOG: [CatalogEntry; 7] = [
    CatalogEntry {
        name: "isolated",
        blocks: &["system", "grid", "measurement", "run", "initial", "state"],
        description: "Single Gaussian state evolved without measurement (k = 0) or with the record discarded (k > 0); fits the growth rate of C_pp against 2ħ²k.",
    },
    CatalogEntry {
        name: "conditioned",
        blocks: &["system", "grid", "measurement", "run", "initial", "state", "conditioned"],
        description: "Measurement-conditioned trajectories with their records, ensemble moments and a trace, Hermiticity, positivity and purity audit.",
    },
    CatalogEntry {
        name: "passivity",
        blocks: &["system", "grid", "measurement", "run", "initial", "state", "passivity"],
        description: "Averages conditioned runs over many records and compares them with the unconditioned flow at checkpoints (quantum: master equation; classical: Liouville).",
    },
    CatalogEntry {
        name: "cumulant-compare",
        blocks: &["system", "grid", "measurement", "run", "initial", "state", "compare"],
        description: "Full conditioned state against the Gaussian centroid estimator driven by the same noise; reports moment deviations.",
    },
    CatalogEntry {
        name: "qct-scan",
        blocks: &["system", "grid", "run", "initial", "qct"],
        description: "Localization and quantum-window margins along a Newtonian orbit for a list of strengths, with optional tracking runs against that orbit.",
    },
    CatalogEntry {
        name: "lyapunov",
        blocks: &["system", "grid", "measurement", "run", "initial", "state", "lyapunov"],
        description: "Finite-time Lyapunov exponents λ(t) of conditioned pairs sharing one noise path, with plateau and 1/t fits.",
    },
    CatalogEntry {
        name: "cooling",
        blocks: &["system", "grid", "measurement", "run", "initial", "feedback"],
        description: "Feedback-cooling recipe: steady ⟨H₀⟩ under no control, direct record feedback and estimator-based feedback on common noise.",
    },
];

pub fn catalog_text() -> String {
    let mut out = String::new();
    for e in &CATALOG {
        out.push_str(&format!("{:<17} [{}]\n    {}\n", e.name, e.blocks.join(", "), e.description));
    }
    out
}

/// Where the master seed came from, in precedence order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedSource {
    Flag,
    Environment,
    Config,
    Default,
}

impl SeedSource {
    pub fn name(self) -> &'static str {
        match self {
            SeedSource::Flag => "flag",
            SeedSource::Environment => "environment",
            SeedSource::Config => "config",
            SeedSource::Default => "default",
        }
    }
}

/// Picks the flag value, then `env_value` (the contents of `QCOND_SEED`).
pub fn external_seed(flag: Option<u64>, env_value: Option<&str>) -> Result<Option<(u64, SeedSource)>, CliError> {
    if let Some(s) = flag {
        return Ok(Some((s, SeedSource::Flag)));
    }
    match env_value.map(str::trim).filter(|s| !s.is_empty()) {
        Some(text) => text
            .parse()
            .map(|s| Some((s, SeedSource::Environment)))
            .map_err(|_| CliError::Config(format!("QCOND_SEED `{text}` is not an unsigned integer"))),
        None => Ok(None),
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<(u64, SeedSource)>,
    pub overrides: Vec<String>,
    /// Worker threads; `None` uses the machine's parallelism.
    pub workers: Option<usize>,
}

/// Everything recorded about a finished run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub experiment: String,
    pub outcome: Outcome,
    pub files: Vec<PathBuf>,
    pub metadata: Value,
}

/// Reads the experiment named in `raw` and checks that every key was used.
pub fn prepare(raw: &RawConfig) -> Result<(String, Box<dyn Experiment>, config::Sections), CliError> {
    let reader = Reader::new(raw);
    let names: Vec<&str> = CATALOG.iter().map(|e| e.name).collect();
    let name = reader.string_or("experiment", "name", "")?;
    if name.is_empty() {
        return Err(CliError::Config(format!("missing `experiment.name`; choose one of {names:?}")));
    }
    // a misspelled section would otherwise surface as a missing value
    if let Some(entry) = CATALOG.iter().find(|e| e.name == name) {
        let allowed: Vec<&str> = std::iter::once("experiment").chain(entry.blocks.iter().copied()).collect();
        raw.check_sections(&allowed)?;
    }
    let job = experiments::build(&name, &reader)?;
    reader.finish()?;
    Ok((name, job, reader.resolved()))
}

/// Runs the config in `raw` and writes its outputs to `out_dir`.
pub fn run_config(raw: &RawConfig, out_dir: &Path, opts: &RunOptions) -> Result<RunReport, CliError> {
    let mut raw = raw.clone();
    for o in &opts.overrides {
        raw.set(o)?;
    }
    let source = match opts.seed {
        Some((seed, source)) => {
            raw.set(&format!("run.master_seed={seed}"))?;
            source
        }
        None if raw.get("run", "master_seed").is_some() => SeedSource::Config,
        None => SeedSource::Default,
    };
    let (name, job, resolved) = prepare(&raw)?;
    let seed = resolved
        .get("run")
        .and_then(|r| r.get("master_seed"))
        .and_then(|s| s.parse::<u64>().ok())
        .unwrap_or(DEFAULT_SEED);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    let workers = pool.current_num_threads();
    let started = Instant::now();
    let outcome = pool.install(|| job.execute())?;
    let wall = started.elapsed().as_secs_f64();

    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut files = Vec::new();
    for table in &outcome.tables {
        files.push(output::write_csv(out_dir, table)?);
    }
    let metadata = json!({
        "experiment": name,
        "config": resolved,
        "master_seed": seed,
        "seed_source": source.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_s": wall,
        "workers": workers,
        "files": files.iter().filter_map(|f| f.file_name()).map(|f| f.to_string_lossy().into_owned()).collect::<Vec<_>>(),
        "summary": outcome.summary,
    });
    output::write_json(&out_dir.join("metadata.json"), &metadata)?;
    Ok(RunReport { experiment: name, outcome, files, metadata })
}

pub fn run_path(config: &Path, out_dir: &Path, opts: &RunOptions) -> Result<RunReport, CliError> {
    run_config(&RawConfig::load(config)?, out_dir, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_lists_every_experiment() {
        assert_eq!(CATALOG.len(), 7);
        let text = catalog_text();
        for e in &CATALOG {
            assert!(text.contains(e.name));
        }
        assert!(text.contains("cooling") && text.contains("passivity"));
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(external_seed(Some(3), Some("4")).unwrap(), Some((3, SeedSource::Flag)));
        assert_eq!(external_seed(None, Some("4")).unwrap(), Some((4, SeedSource::Environment)));
        assert_eq!(external_seed(None, None).unwrap(), None);
        assert!(external_seed(None, Some("x")).is_err());
    }

    #[test]
    fn error_categories() {
        let e = CliError::from(qcond_core::Error::SupportEscape("edge".into()));
        assert_eq!(e.exit_code(), 3);
        assert_eq!(CliError::from(qcond_core::Error::NoRecord).exit_code(), 2);
        assert!(CliError::Io("disk".into()).to_json().contains("\"io\""));
    }
}
