//! Flat `key = value` experiment configuration.
//!
//! Lines are `dotted.key = value`; blank lines and lines starting with `#`
//! are ignored. Relative paths are resolved against the directory of the
//! config file. Command-line overrides are applied on top with the same keys.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use jdrdl::features::CoordScaling;
use jdrdl::model::{HyperParams, ProjectionInit};
use jdrdl::rcg::BetaRule;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(key: &str, value: &str, why: impl fmt::Display) -> ConfigError {
    ConfigError(format!("{key} = {value}: {why}"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Jdrdl,
    NnAirm,
    NnStein,
    SrcAirm,
    Rdl,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Jdrdl,
        Method::NnAirm,
        Method::NnStein,
        Method::SrcAirm,
        Method::Rdl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Jdrdl => "jdrdl",
            Method::NnAirm => "nn_airm",
            Method::NnStein => "nn_stein",
            Method::SrcAirm => "src_airm",
            Method::Rdl => "rdl",
        }
    }
}

impl FromStr for Method {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| ConfigError(format!("unknown method {s:?}")))
    }
}

pub fn parse_methods(list: &str) -> Result<Vec<Method>, ConfigError> {
    let methods = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(Method::from_str)
        .collect::<Result<Vec<_>, _>>()?;
    if methods.is_empty() {
        return Err(ConfigError("method list is empty".into()));
    }
    Ok(methods)
}

/// Which samples `predict` scores.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subset {
    Train,
    Test,
    All,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    Mnist { images: PathBuf, labels: PathBuf },
    Synthetic {
        classes: usize,
        per_class: usize,
        dim: usize,
        separation: f64,
        noise: f64,
        seed: u64,
    },
    Cache { path: PathBuf },
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub coords: CoordScaling,
    /// Where `extract` writes descriptors and `benchmark` may read them.
    pub cache_path: Option<PathBuf>,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub repeats: usize,
    pub base_seed: u64,
    pub hyper: HyperParams,
    pub methods: Vec<Method>,
    pub out_dir: PathBuf,
    pub model_path: Option<PathBuf>,
    pub predict_subset: Subset,
    /// Relative error injected into analytic gradients by `gradcheck`; only
    /// useful to confirm that the check can fail.
    pub gradcheck_perturb: f64,
    /// Every key that was set explicitly, after overrides.
    pub entries: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSpec::Synthetic {
                classes: 3,
                per_class: 20,
                dim: 10,
                separation: 2.0,
                noise: 0.2,
                seed: 0,
            },
            coords: CoordScaling::Normalized,
            cache_path: None,
            train_per_class: 10,
            test_per_class: 10,
            repeats: 1,
            base_seed: 0,
            hyper: HyperParams::default(),
            methods: vec![Method::Jdrdl, Method::NnAirm],
            out_dir: PathBuf::from("."),
            model_path: None,
            predict_subset: Subset::Test,
            gradcheck_perturb: 0.0,
            entries: BTreeMap::new(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

/// Applies one hyperparameter key (without the `hyper.` prefix).
fn set_hyper(h: &mut HyperParams, key: &str, full: &str, v: &str) -> Result<(), ConfigError> {
    match key {
        "lambda_1" => h.lambda_1 = parse(full, v)?,
        "lambda_2" => h.lambda_2 = parse(full, v)?,
        "lambda_a" => h.lambda_a = parse(full, v)?,
        "lambda_u" => h.lambda_u = parse(full, v)?,
        "lambda_d" => {
            h.lambda_d_cross = parse(full, v)?;
            h.lambda_d_reg = h.lambda_d_cross;
        }
        "lambda_d_cross" => h.lambda_d_cross = parse(full, v)?,
        "lambda_d_reg" => h.lambda_d_reg = parse(full, v)?,
        "sigma" => h.sigma = parse(full, v)?,
        "v_w" => h.v_w = parse(full, v)?,
        "v_b" => h.v_b = parse(full, v)?,
        "d" => h.d = parse(full, v)?,
        "atoms_per_class" => {
            h.atoms_per_class = match v {
                "auto" => None,
                _ => Some(parse(full, v)?),
            }
        }
        "outer_rounds" => h.outer_rounds = parse(full, v)?,
        "rel_tol" => h.rel_tol = parse(full, v)?,
        "projection_init" => {
            h.projection_init = match v {
                "mean_eigen" => ProjectionInit::MeanEigen,
                "random" => ProjectionInit::Random,
                "identity" => ProjectionInit::Identity,
                _ => return Err(bad(full, v, "expected mean_eigen, random or identity")),
            }
        }
        "learn_projection" => h.learn_projection = parse_bool(full, v)?,
        "atom_init_noise" => h.atom_init_noise = parse(full, v)?,
        "rcg.max_iters" => h.rcg.max_iters = parse(full, v)?,
        "rcg.grad_norm_tol" => h.rcg.grad_norm_tol = parse(full, v)?,
        "rcg.armijo_c1" => h.rcg.armijo_c1 = parse(full, v)?,
        "rcg.armijo_shrink" => h.rcg.armijo_shrink = parse(full, v)?,
        "rcg.initial_step" => h.rcg.initial_step = parse(full, v)?,
        "rcg.max_backtracks" => h.rcg.max_backtracks = parse(full, v)?,
        "rcg.beta_rule" => {
            h.rcg.beta_rule = match v {
                "hestenes_stiefel_plus" => BetaRule::HestenesStiefelPlus,
                "fletcher_reeves" => BetaRule::FletcherReeves,
                _ => return Err(bad(full, v, "expected hestenes_stiefel_plus or fletcher_reeves")),
            }
        }
        "spg.max_iters" => h.spg.max_iters = parse(full, v)?,
        "spg.kkt_tol" => h.spg.kkt_tol = parse(full, v)?,
        "spg.bb_step_min" => h.spg.bb_step_min = parse(full, v)?,
        "spg.bb_step_max" => h.spg.bb_step_max = parse(full, v)?,
        "spg.nonmonotone_memory" => h.spg.nonmonotone_memory = parse(full, v)?,
        "spg.sufficient_decrease" => h.spg.sufficient_decrease = parse(full, v)?,
        _ => return Err(ConfigError(format!("unknown key {full:?}"))),
    }
    Ok(())
}

/// Parses `key = value` lines into an ordered list.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("line {}: expected key = value", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError(format!("line {}: empty key", i + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Loads a config file; `None` gives the built-in defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        if let Some(p) = path {
            let text = fs::read_to_string(p)
                .map_err(|e| ConfigError(format!("cannot read config {}: {e}", p.display())))?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            for (k, v) in parse_entries(&text)? {
                cfg.set(&k, &v, &base)?;
            }
        }
        Ok(cfg)
    }

    /// Sets one key. Relative paths are joined onto `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), ConfigError> {
        let path = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_relative() {
                base.join(p)
            } else {
                p
            }
        };
        match key {
            "dataset.kind" => {
                self.dataset = match value {
                    "mnist" => DatasetSpec::Mnist {
                        images: PathBuf::new(),
                        labels: PathBuf::new(),
                    },
                    "synthetic" => ExperimentConfig::default().dataset,
                    "cache" => DatasetSpec::Cache { path: PathBuf::new() },
                    _ => return Err(bad(key, value, "expected mnist, synthetic or cache")),
                }
            }
            "dataset.images" | "dataset.labels" => match &mut self.dataset {
                DatasetSpec::Mnist { images, labels } => {
                    if key == "dataset.images" {
                        *images = path(value);
                    } else {
                        *labels = path(value);
                    }
                }
                _ => return Err(bad(key, value, "requires dataset.kind = mnist (set it first)")),
            },
            "dataset.path" => match &mut self.dataset {
                DatasetSpec::Cache { path: p } => *p = path(value),
                _ => return Err(bad(key, value, "requires dataset.kind = cache (set it first)")),
            },
            "dataset.coords" => {
                self.coords = match value {
                    "normalized" => CoordScaling::Normalized,
                    "raw" => CoordScaling::Raw,
                    _ => return Err(bad(key, value, "expected normalized or raw")),
                }
            }
            "dataset.cache" => self.cache_path = Some(path(value)),
            k if k.starts_with("synthetic.") => {
                let DatasetSpec::Synthetic {
                    classes,
                    per_class,
                    dim,
                    separation,
                    noise,
                    seed,
                } = &mut self.dataset
                else {
                    return Err(bad(key, value, "requires dataset.kind = synthetic"));
                };
                match &k["synthetic.".len()..] {
                    "classes" => *classes = parse(key, value)?,
                    "per_class" => *per_class = parse(key, value)?,
                    "dim" => *dim = parse(key, value)?,
                    "separation" => *separation = parse(key, value)?,
                    "noise" => *noise = parse(key, value)?,
                    "seed" => *seed = parse(key, value)?,
                    _ => return Err(ConfigError(format!("unknown key {key:?}"))),
                }
            }
            "split.train_per_class" => self.train_per_class = parse(key, value)?,
            "split.test_per_class" => self.test_per_class = parse(key, value)?,
            "split.repeats" => self.repeats = parse(key, value)?,
            "split.base_seed" => self.base_seed = parse(key, value)?,
            "methods" => self.methods = parse_methods(value)?,
            "output.dir" => self.out_dir = path(value),
            "model.path" => self.model_path = Some(path(value)),
            "predict.subset" => {
                self.predict_subset = match value {
                    "train" => Subset::Train,
                    "test" => Subset::Test,
                    "all" => Subset::All,
                    _ => return Err(bad(key, value, "expected train, test or all")),
                }
            }
            "gradcheck.perturb" => self.gradcheck_perturb = parse(key, value)?,
            k if k.starts_with("hyper.") => set_hyper(&mut self.hyper, &k["hyper.".len()..], k, value)?,
            _ => return Err(ConfigError(format!("unknown key {key:?}"))),
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.repeats == 0 {
            return Err(ConfigError("split.repeats must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(ConfigError("method list is empty".into()));
        }
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(ConfigError("per-class train and test counts must be positive".into()));
        }
        self.hyper
            .validate()
            .map_err(|e| ConfigError(format!("hyperparameters: {e}")))
    }
}
