use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use jdrdl::check::{run_gradcheck, GradCheckConfig};
use jdrdl::classifier::predict;
use jdrdl::model::io::{load_model, save_model};
use jdrdl::model::{train_with_report, HalfStep, LabeledDataset, TrainReport};
use jdrdl::write_atomic;

use crate::benchmark::{run_benchmark, write_benchmark};
use crate::config::{parse_methods, ConfigError, DatasetSpec, ExperimentConfig, Subset};
use crate::data::{extract_descriptors, load_dataset};
use crate::split::per_class_split;

/// Failure classes, mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Check(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Check(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.0)
    }
}

impl From<jdrdl::Error> for CliError {
    fn from(e: jdrdl::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "jdrdl", version, about = "Joint dimensionality reduction and dictionary learning on SPD matrices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Extract region covariance descriptors into a cache file.
    Extract(CommonArgs),
    /// Train a model on the training split and save it.
    Train(CommonArgs),
    /// Score samples with a saved model and write a prediction CSV.
    Predict(CommonArgs),
    /// Compare methods over repeated random splits.
    Benchmark(CommonArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(CommonArgs),
}

#[derive(Args, Debug, Default)]
pub struct CommonArgs {
    /// Experiment config file (flat `key = value` lines).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Base seed; overrides `split.base_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Comma-separated methods; overrides `methods`.
    #[arg(long, value_name = "LIST")]
    pub method: Option<String>,
    /// Number of repeats; overrides `split.repeats`.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Model file; overrides `model.path`.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Any other config key, as KEY=VALUE (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::load(self.config.as_deref())?;
        let here = Path::new("");
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v.trim(), here)?;
        }
        if let Some(s) = self.seed {
            cfg.set("split.base_seed", &s.to_string(), here)?;
        }
        if let Some(r) = self.repeats {
            cfg.set("split.repeats", &r.to_string(), here)?;
        }
        if let Some(m) = &self.method {
            parse_methods(m)?;
            cfg.set("methods", m, here)?;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
            cfg.entries.insert("output.dir".into(), o.display().to_string());
        }
        if let Some(m) = &self.model {
            cfg.model_path = Some(m.clone());
            cfg.entries.insert("model.path".into(), m.display().to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn model_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.model_path
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("model.json"))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

pub fn cmd_extract(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let DatasetSpec::Mnist { images, labels } = &cfg.dataset else {
        return Err(CliError::Usage("extract needs dataset.kind = mnist".into()));
    };
    let cache = extract_descriptors(images, labels, cfg.coords)?;
    let path = cfg
        .cache_path
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("descriptors.bin"));
    if let Some(dir) = path.parent() {
        ensure_dir(dir)?;
    }
    cache.save(&path)?;
    Ok(format!(
        "wrote {} descriptors of size {}x{} to {}",
        cache.len(),
        cache.dim,
        cache.dim,
        path.display()
    ))
}

fn split_sets(
    cfg: &ExperimentConfig,
    data: &LabeledDataset,
) -> Result<(Vec<usize>, Vec<usize>), CliError> {
    let s = per_class_split(
        data.labels(),
        data.num_classes(),
        cfg.train_per_class,
        cfg.test_per_class,
        cfg.base_seed,
    )
    .map_err(CliError::Data)?;
    Ok((s.train, s.test))
}

fn objective_csv(report: &TrainReport) -> String {
    let mut out = String::from("step,round,jd,ja,ju,rs,rr,rd,total\n");
    for (step, o) in &report.objective {
        let (name, round) = match step {
            HalfStep::Init => ("init", 0),
            HalfStep::InitialCoding => ("initial_coding", 0),
            HalfStep::Dictionary(r) => ("dictionary", *r),
            HalfStep::Coding(r) => ("coding", *r),
        };
        writeln!(
            out,
            "{name},{round},{},{},{},{},{},{},{}",
            o.jd, o.ja, o.ju, o.rs, o.rr, o.rd, o.total
        )
        .expect("writing to a String");
    }
    out
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let data = load_dataset(cfg)?;
    let (train_idx, _) = split_sets(cfg, &data)?;
    let train_set = data.subset(&train_idx)?;
    let (model, report) = train_with_report(&train_set, &cfg.hyper, cfg.base_seed)?;
    ensure_dir(&cfg.out_dir)?;
    let path = model_path(cfg);
    save_model(&model, &path)?;
    write_atomic(
        &cfg.out_dir.join("train_objective.csv"),
        objective_csv(&report).as_bytes(),
    )?;
    let mut msg = format!(
        "trained on {} samples, {} rounds, final objective {:e}; model written to {}",
        train_set.len(),
        report.rounds,
        report.objective.last().map_or(f64::NAN, |(_, o)| o.total),
        path.display()
    );
    for w in &report.warnings {
        write!(msg, "\nwarning: {w}").expect("writing to a String");
    }
    Ok(msg)
}

pub fn cmd_predict(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let path = model_path(cfg);
    if !path.exists() {
        return Err(CliError::Data(format!("model file {} not found", path.display())));
    }
    let model = load_model(&path)?;
    let data = load_dataset(cfg)?;
    let idx: Vec<usize> = match cfg.predict_subset {
        Subset::All => (0..data.len()).collect(),
        Subset::Train => split_sets(cfg, &data)?.0,
        Subset::Test => split_sets(cfg, &data)?.1,
    };
    let k = model.num_classes();
    let mut csv = String::from("sample_id,true_label,predicted_label");
    for c in 0..k {
        write!(csv, ",residual_{c}").expect("writing to a String");
    }
    csv.push('\n');
    let mut correct = 0;
    for &i in &idx {
        let p = predict(&model, data.sample(i))?;
        if p.label == data.label(i) {
            correct += 1;
        }
        write!(csv, "{i},{},{}", data.label(i), p.label).expect("writing to a String");
        for r in &p.residuals {
            write!(csv, ",{r}").expect("writing to a String");
        }
        csv.push('\n');
    }
    ensure_dir(&cfg.out_dir)?;
    let out = cfg.out_dir.join("predictions.csv");
    write_atomic(&out, csv.as_bytes())?;
    Ok(format!(
        "accuracy {}/{} = {:.4}; predictions written to {}",
        correct,
        idx.len(),
        correct as f64 / idx.len().max(1) as f64,
        out.display()
    ))
}

pub fn cmd_benchmark(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let data = load_dataset(cfg)?;
    let result = run_benchmark(cfg, &data, |row| {
        match row.accuracy {
            Some(a) => eprintln!("run {} seed {} {:<9} accuracy {:.4}", row.run, row.seed, row.method, a),
            None => eprintln!(
                "run {} seed {} {:<9} FAILED: {}",
                row.run,
                row.seed,
                row.method,
                row.error.as_deref().unwrap_or("")
            ),
        }
    })
    .map_err(CliError::Data)?;
    write_benchmark(&result, cfg, &cfg.out_dir)?;
    let mut msg = String::from("method     mean ± std");
    for s in &result.summary {
        write!(msg, "\n{:<10} {:.3} ± {:.4}", s.method, s.mean, s.std).expect("writing to a String");
        if s.failed > 0 {
            write!(msg, "  ({} failed runs)", s.failed).expect("writing to a String");
        }
    }
    Ok(msg)
}

pub fn cmd_gradcheck(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let gc = GradCheckConfig {
        seed: cfg.base_seed,
        perturb: cfg.gradcheck_perturb,
        ..GradCheckConfig::default()
    };
    let report = run_gradcheck(&gc)?;
    if report.passed() {
        Ok(report.to_string())
    } else {
        Err(CliError::Check(format!("\n{report}")))
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (args, f): (&CommonArgs, fn(&ExperimentConfig) -> Result<String, CliError>) = match &cli.command {
        Command::Extract(a) => (a, cmd_extract),
        Command::Train(a) => (a, cmd_train),
        Command::Predict(a) => (a, cmd_predict),
        Command::Benchmark(a) => (a, cmd_benchmark),
        Command::Gradcheck(a) => (a, cmd_gradcheck),
    };
    match args.resolve().and_then(|cfg| f(&cfg)) {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
