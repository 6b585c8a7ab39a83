//! The `popinf` command line: simulate, train, experiment, report.
//!
//! Exit codes are stable: 0 success, 1 I/O or other failure, 2 invalid
//! configuration, 3 invalid or missing data, 4 numerical failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::autodiff::Mat;
use crate::error::{Error, Result};
use crate::experiments::config::{ExperimentConfig, Preset, Problem};
use crate::experiments::population::{generate_population, raw_targets};
use crate::experiments::runner::fit_basis;
use crate::experiments::{emit_report, emit_summary, read_results, run_experiment, RunOptions};
use crate::features::pca_transform;
use crate::maml::meta_train_with;
use crate::models::{
    cnp_init, mlp_init, train_cnp, Checkpoint, CnpConfig, MlpConfig, ModelSpec, Normalizer, Pairs, Split, TaskDataset,
};
use crate::rng::{derive_seed, stream, tag};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Environment variable that replaces the default output directory.
pub const OUT_ENV: &str = "POPINF_OUT";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "popinf-manifest";

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => EXIT_CONFIG,
        e if e.is_numerical() => EXIT_NUMERICAL,
        Error::Io { .. } => EXIT_OTHER,
        _ => EXIT_DATA,
    }
}

#[derive(Debug, Parser)]
#[command(name = "popinf", version, about = "Few-shot regression across simulated structural populations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one CSV per training structure of a repetition.
    Simulate(SimulateArgs),
    /// Train MAML or a CNP on simulated datasets and write a checkpoint.
    Train(TrainArgs),
    /// Run the full comparison sweep and write every report file.
    Experiment(ExperimentArgs),
    /// Rebuild summary.csv and the charts from an existing results.csv.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in configuration used when no file is given.
    #[arg(long, value_enum, default_value_t = PresetArg::Desk)]
    pub preset: PresetArg,
    /// Overrides the top-level seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: $POPINF_OUT, then ./popinf-out).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Desk,
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMethod {
    Maml,
    Cnp,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Problem whose targets are written (default: the first configured one).
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long)]
    pub repetition: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    #[arg(long, value_enum)]
    pub method: TrainMethod,
    /// Directory written by `simulate`.
    #[arg(long)]
    pub data: PathBuf,
    /// MLP hidden width (default: the first configured candidate).
    #[arg(long)]
    pub hidden: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Keep finished units in the output directory and only compute the rest.
    #[arg(long)]
    pub resume: bool,
    /// Stop after computing this many units.
    #[arg(long)]
    pub max_units: Option<usize>,
    #[arg(long)]
    pub progress: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding results.csv.
    #[arg(long)]
    pub results: PathBuf,
    /// Where to write the summary (default: the results directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub seed: u64,
    pub train_seed: u64,
    pub test_seed: u64,
    pub maml_seed: u64,
    pub cnp_seed: u64,
    pub gp_seed: u64,
}

impl Seeds {
    fn of(cfg: &ExperimentConfig) -> Self {
        Self {
            seed: cfg.seed,
            train_seed: cfg.population.train_seed,
            test_seed: cfg.population.test_seed,
            maml_seed: cfg.maml.seed,
            cnp_seed: cfg.cnp.seed,
            gp_seed: cfg.gp.seed,
        }
    }
}

/// Everything needed to regenerate a command's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub artifact_version: String,
    pub command: String,
    /// Command-specific arguments, e.g. the problem or method.
    pub args: BTreeMap<String, String>,
    pub config: ExperimentConfig,
    pub seeds: Seeds,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub complete: bool,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            artifact_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args: BTreeMap::new(),
            config: cfg.clone(),
            seeds: Seeds::of(cfg),
            started_unix: now(),
            finished_unix: None,
            complete: false,
            outputs: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::config(format!("manifest line {}", e.line()), e.to_string()))?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::config("manifest.format", format!("expected {MANIFEST_FORMAT}, got {}", m.format)));
        }
        m.config.validate()?;
        Ok(m)
    }

    fn finish(&mut self, dir: &Path, outputs: &[PathBuf], complete: bool) -> Result<()> {
        self.outputs = outputs
            .iter()
            .map(|p| p.strip_prefix(dir).unwrap_or(p).to_string_lossy().into_owned())
            .collect();
        self.outputs.sort();
        self.finished_unix = Some(now());
        self.complete = complete;
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Resolved config plus the manifest it came from, if any.
struct Loaded {
    cfg: ExperimentConfig,
    manifest: Option<RunManifest>,
}

fn load_config(args: &ConfigArgs) -> Result<Loaded> {
    let mut loaded = match &args.config {
        Some(p) if p.extension().is_some_and(|e| e == "json") => {
            let m = RunManifest::load(p)?;
            Loaded {
                cfg: m.config.clone(),
                manifest: Some(m),
            }
        }
        Some(p) => Loaded {
            cfg: ExperimentConfig::load(p)?,
            manifest: None,
        },
        None => Loaded {
            cfg: ExperimentConfig::preset(match args.preset {
                PresetArg::Desk => Preset::Desk,
                PresetArg::Paper => Preset::Paper,
            }),
            manifest: None,
        },
    };
    if let Some(s) = args.seed {
        loaded.cfg.seed = s;
    }
    loaded.cfg.validate()?;
    Ok(loaded)
}

/// Flag, then `POPINF_OUT`, then `./popinf-out`.
pub fn output_dir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("popinf-out"))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_config_snapshot(dir: &Path, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Value from the flag, else from the manifest's recorded args.
fn recorded(flag: Option<String>, manifest: &Option<RunManifest>, key: &str) -> Option<String> {
    flag.or_else(|| manifest.as_ref().and_then(|m| m.args.get(key).cloned()))
}

pub fn structure_file(i: usize) -> String {
    format!("structure_{i:03}.csv")
}

fn write_dataset(path: &Path, temps: &[f64], y: &Mat) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["temperature".to_string()];
    if y.cols == 1 {
        header.push("target".into());
    } else {
        header.extend((1..=y.cols).map(|j| format!("target_{j}")));
    }
    w.write_record(&header)?;
    for (i, t) in temps.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend((0..y.cols).map(|j| y.at(i, j).to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads one dataset CSV written by `simulate`.
pub fn read_dataset(path: &Path, task_id: usize) -> Result<TaskDataset> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        k => Error::Data(format!("{}: {k:?}", path.display())),
    })?;
    let header = r.headers()?.clone();
    if header.get(0) != Some("temperature") || header.len() < 2 {
        return Err(Error::Data(format!("{}: expected a temperature,target... header", path.display())));
    }
    let d = header.len() - 1;
    let mut inputs = Vec::new();
    let mut data = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Data(format!("{}: row {}: bad number {s:?}", path.display(), line + 2)))
        };
        inputs.push(parse(&rec[0])?);
        for j in 1..=d {
            data.push(parse(rec.get(j).unwrap_or(""))?);
        }
    }
    let n = inputs.len();
    TaskDataset::new(task_id, inputs, Mat::from_vec(n, d, data), vec![Split::Train; n])
}

/// All `structure_*.csv` files in `dir`, in name order.
pub fn read_dataset_dir(dir: &Path) -> Result<Vec<TaskDataset>> {
    let entries = std::fs::read_dir(dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Data(format!("dataset directory {} does not exist", dir.display())),
        _ => Error::io(dir, e),
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("structure_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("no structure_*.csv files in {}", dir.display())));
    }
    files.iter().enumerate().map(|(i, p)| read_dataset(p, i)).collect()
}

pub fn cmd_simulate(args: SimulateArgs) -> Result<PathBuf> {
    let Loaded { cfg, manifest } = load_config(&args.common)?;
    let problem_name = recorded(args.problem, &manifest, "problem");
    let problem = match problem_name {
        Some(name) => Problem::parse(&name).ok_or_else(|| Error::config("problem", format!("unknown problem {name:?}")))?,
        None => cfg
            .problems
            .first()
            .map(|p| p.problem)
            .ok_or_else(|| Error::config("problems", "no problem configured"))?,
    };
    let repetition = recorded(args.repetition.map(|r| r.to_string()), &manifest, "repetition")
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    if cfg.max_train() == 0 {
        return Err(Error::config("problems.n_train", "no training structures requested"));
    }
    let out = output_dir(args.common.out.as_deref());
    ensure_dir(&out)?;
    let mut manifest = RunManifest::new("simulate", &cfg);
    manifest.args.insert("problem".into(), problem.name().into());
    manifest.args.insert("repetition".into(), repetition.to_string());

    let pop = generate_population(&cfg, repetition, &[])?;
    let mut written = Vec::new();
    for (i, spec) in pop.train.iter().enumerate() {
        let y = raw_targets(&cfg.structure, spec, problem, cfg.pca.magnitude, &pop.train_temperatures)?;
        let path = out.join(structure_file(i));
        write_dataset(&path, &pop.train_temperatures, &y)?;
        manifest
            .args
            .insert(format!("k_{i:03}"), spec.base_stiffness.to_string());
        written.push(path);
    }
    written.push(write_config_snapshot(&out, &cfg)?);
    manifest.finish(&out, &written, true)?;
    Ok(out)
}

pub fn cmd_train(args: TrainArgs) -> Result<PathBuf> {
    let Loaded { cfg, .. } = load_config(&args.common)?;
    let mut tasks = read_dataset_dir(&args.data)?;
    let out = output_dir(args.common.out.as_deref());
    ensure_dir(&out)?;
    let mut manifest = RunManifest::new("train", &cfg);
    manifest.args.insert("method".into(), format!("{:?}", args.method).to_lowercase());
    manifest.args.insert("data".into(), args.data.display().to_string());

    let pca = if tasks[0].target_dim() > 1 {
        let basis = fit_basis(&cfg, &tasks)?;
        tasks = tasks
            .iter()
            .map(|t| TaskDataset::new(t.task_id, t.inputs.clone(), pca_transform(&basis, &t.targets)?, t.tags.clone()))
            .collect::<Result<_>>()?;
        Some(basis)
    } else {
        None
    };
    let normalizer = Normalizer::fit(&tasks)?;
    let pairs: Vec<Pairs> = tasks
        .iter()
        .map(|t| normalizer.scaled_rows(t, &(0..t.len()).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    let d = tasks[0].target_dim();
    let seed = cfg.seed;
    let mut init_rng = stream(seed, &[tag("train-init")]);
    let log_path = out.join("training_log.csv");
    let mut log = csv::Writer::from_path(&log_path)?;

    let checkpoint = match args.method {
        TrainMethod::Maml => {
            let hidden = args
                .hidden
                .or_else(|| cfg.selection.hidden_sizes.first().copied())
                .ok_or_else(|| Error::config("selection.hidden_sizes", "empty"))?;
            if hidden == 0 {
                return Err(Error::config("hidden", "must be positive"));
            }
            manifest.args.insert("hidden".into(), hidden.to_string());
            let model = MlpConfig::new(1, hidden, d);
            let maml = crate::maml::MamlConfig {
                seed: derive_seed(cfg.maml.seed, &[seed]),
                ..cfg.maml.clone()
            };
            let init = mlp_init(&model, &mut init_rng);
            log.write_record(["epoch", "meta_loss"])?;
            let trained = meta_train_with(&pairs, &model, &maml, init, |epoch, _, rec| {
                log.write_record([epoch.to_string(), rec.meta_loss.to_string()])?;
                Ok(())
            })?;
            Checkpoint::new(ModelSpec::Mlp(model), &trained.params, seed, normalizer, pca)
                .with_adaptation(maml.alpha, maml.adapt_steps)
        }
        TrainMethod::Cnp => {
            let arch = CnpConfig {
                r: cfg.cnp.r,
                hidden: cfg.cnp.hidden,
                ..CnpConfig::new(d)
            };
            let init = cnp_init(&arch, &mut init_rng);
            let mut rng = stream(derive_seed(cfg.cnp.seed, &[seed]), &[tag("episodes")]);
            let trained = train_cnp(&pairs, None, &arch, &cfg.cnp.train, init, &mut rng)?;
            log.write_record(["iteration", "train_loss"])?;
            for h in &trained.history {
                log.write_record([h.iteration.to_string(), h.train_loss.to_string()])?;
            }
            Checkpoint::new(ModelSpec::Cnp(arch), &trained.params, seed, normalizer, pca)
        }
    };
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    let ck_path = out.join("checkpoint.json");
    checkpoint.save(&ck_path)?;
    let snapshot = write_config_snapshot(&out, &cfg)?;
    manifest.finish(&out, &[ck_path, log_path, snapshot], true)?;
    Ok(out)
}

pub fn cmd_experiment(args: ExperimentArgs) -> Result<PathBuf> {
    let out = output_dir(args.common.out.as_deref());
    // Resuming without an explicit config picks up the interrupted run's.
    let mut common = args.common.clone();
    if args.resume && common.config.is_none() && out.join(MANIFEST_FILE).exists() {
        common.config = Some(out.join(MANIFEST_FILE));
    }
    let Loaded { cfg, .. } = load_config(&common)?;
    ensure_dir(&out)?;
    let units = out.join("units");
    if !args.resume && units.exists() {
        for e in std::fs::read_dir(&units).map_err(|e| Error::io(&units, e))?.flatten() {
            let p = e.path();
            if p.extension().is_some_and(|x| x == "json" || x == "tmp") {
                std::fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
            }
        }
    }
    let mut manifest = RunManifest::new("experiment", &cfg);
    let snapshot = write_config_snapshot(&out, &cfg)?;
    manifest.finish(&out, &[snapshot.clone()], false)?;
    let opts = RunOptions {
        workers: args.workers,
        unit_dir: Some(units),
        stop_after: args.max_units,
        progress: args.progress,
    };
    let outcome = run_experiment(&cfg, &opts)?;
    let mut written = vec![snapshot];
    if outcome.complete {
        written.extend(emit_report(&outcome.report, &out)?);
    }
    manifest.finish(&out, &written, outcome.complete)?;
    Ok(out)
}

pub fn cmd_report(args: ReportArgs) -> Result<PathBuf> {
    let cells = read_results(&args.results.join("results.csv"))?;
    let out = args.out.unwrap_or_else(|| args.results.clone());
    ensure_dir(&out)?;
    emit_summary(&cells, &out)?;
    Ok(out)
}

pub fn dispatch(cli: Cli) -> Result<PathBuf> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Train(a) => cmd_train(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
        }
    };
    match dispatch(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [
            exit_code(&Error::config("x", "y")),
            exit_code(&Error::Data("d".into())),
            exit_code(&Error::NonFiniteLoss { epoch: 0, task: 0 }),
            exit_code(&Error::io("p", std::io::Error::other("x"))),
        ];
        assert_eq!(codes, [EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL, EXIT_OTHER]);
    }

    #[test]
    fn flag_beats_environment() {
        assert_eq!(output_dir(Some(Path::new("a"))), PathBuf::from("a"));
    }

    #[test]
    fn single_column_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_dataset(&p, &[20.0, 30.0], &Mat::column(&[1.5, 2.5])).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("temperature,target\n"));
        let back = read_dataset(&p, 0).unwrap();
        assert_eq!(back.targets.data, vec![1.5, 2.5]);
    }
}
