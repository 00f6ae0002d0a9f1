//! Experiment configuration in flat `key=value` form.
//!
//! ```text
//! # comments start with '#'
//! seed=7
//! repetitions=10
//! methods=rbds,lrrs_bd,lrrs
//! data.classes=10
//! data.ambient_dim=64
//! corrupt.train.kind=pixel_uniform
//! corrupt.train.fraction=0.2
//! solver.lambda=1.0
//! rbds.alpha=10
//! ```
//!
//! `solver.*` keys apply to every method and `<method>.*` keys override them
//! for one method. [`ExperimentConfig::canonical`] lists every effective
//! setting in a fixed order; its SHA-256 is the config hash stamped on each
//! report row.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use rbds_core::coder::CodingMode;
use rbds_core::datagen::{CoefficientLaw, CorruptionKind, SubspaceSpec};
use rbds_core::methods::{ClassifierInput, MethodRegistry};
use rbds_core::{Error, MatrixFormat, Result, SolverConfig};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Synthetic,
    Files,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileSource {
    pub matrix: PathBuf,
    pub labels: PathBuf,
    pub format: Option<MatrixFormat>,
}

/// Corruption settings without a seed; seeds come from the repetition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionConfig {
    pub kind: Option<CorruptionKind>,
    pub fraction: f64,
    pub image_shape: Option<(usize, usize)>,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self {
            kind: None,
            fraction: 0.0,
            image_shape: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: SourceKind,
    /// Synthetic data settings; its `seed` field is replaced per repetition.
    pub synthetic: SubspaceSpec,
    pub files: FileSource,
    pub train_ratio: f64,
    pub corrupt_train: CorruptionConfig,
    pub corrupt_test: CorruptionConfig,
    pub methods: Vec<String>,
    pub solver: SolverConfig,
    /// `(method, key) -> value` overrides of `solver`.
    pub overrides: BTreeMap<(String, String), String>,
    pub eta: f64,
    pub coding_mode: CodingMode,
    pub classifier_input: ClassifierInput,
    /// `None` uses `1 / sqrt(max(d, n))`.
    pub rpca_lambda: Option<f64>,
    pub repetitions: usize,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub write_traces: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            source: SourceKind::Synthetic,
            synthetic: SubspaceSpec::new(5, 50, 3, 20, 0.0, 0),
            files: FileSource {
                matrix: PathBuf::new(),
                labels: PathBuf::new(),
                format: None,
            },
            train_ratio: 0.5,
            corrupt_train: CorruptionConfig::default(),
            corrupt_test: CorruptionConfig::default(),
            methods: vec!["rbds".into(), "lrrs_bd".into(), "lrrs".into()],
            solver: SolverConfig::default(),
            overrides: BTreeMap::new(),
            eta: 1.0,
            coding_mode: CodingMode::Joint,
            classifier_input: ClassifierInput::TrainingRepresentation,
            rpca_lambda: None,
            repetitions: 10,
            seed: 0,
            output_dir: None,
            write_traces: true,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "`{key}`: expected a boolean, got `{value}`"
        ))),
    }
}

fn parse_shape(key: &str, value: &str) -> Result<Option<(usize, usize)>> {
    let v = value.trim();
    if v.is_empty() || v == "none" {
        return Ok(None);
    }
    let (h, w) = v
        .split_once('x')
        .ok_or_else(|| Error::Config(format!("`{key}`: expected HxW, got `{value}`")))?;
    Ok(Some((parse(key, h)?, parse(key, w)?)))
}

/// Sets one solver field by name.
pub fn set_solver_field(cfg: &mut SolverConfig, field: &str, key: &str, value: &str) -> Result<()> {
    match field {
        "lambda" => cfg.lambda = parse(key, value)?,
        "alpha" => cfg.alpha = parse(key, value)?,
        "beta" => cfg.beta = parse(key, value)?,
        "gamma" => cfg.gamma = parse(key, value)?,
        "mu0" => cfg.mu0 = parse(key, value)?,
        "mu_max" => cfg.mu_max = parse(key, value)?,
        "rho" => cfg.rho = parse(key, value)?,
        "eps_tol" => cfg.eps_tol = parse(key, value)?,
        "max_iters" => cfg.max_iters = parse(key, value)?,
        "atoms_per_class" => cfg.atoms_per_class = parse(key, value)?,
        "dict_update" => cfg.dict_update_enabled = parse_bool(key, value)?,
        "normalize_columns" => cfg.normalize_columns = parse_bool(key, value)?,
        "seed" => {
            return Err(Error::Config(format!(
                "`{key}`: solver seeds are derived from the top-level `seed`"
            )))
        }
        _ => return Err(Error::Config(format!("unknown key `{key}`"))),
    }
    Ok(())
}

fn solver_lines(cfg: &SolverConfig, prefix: &str, out: &mut String) {
    let fields: [(&str, String); 12] = [
        ("alpha", cfg.alpha.to_string()),
        ("atoms_per_class", cfg.atoms_per_class.to_string()),
        ("beta", cfg.beta.to_string()),
        ("dict_update", cfg.dict_update_enabled.to_string()),
        ("eps_tol", cfg.eps_tol.to_string()),
        ("gamma", cfg.gamma.to_string()),
        ("lambda", cfg.lambda.to_string()),
        ("max_iters", cfg.max_iters.to_string()),
        ("mu0", cfg.mu0.to_string()),
        ("mu_max", cfg.mu_max.to_string()),
        ("normalize_columns", cfg.normalize_columns.to_string()),
        ("rho", cfg.rho.to_string()),
    ];
    for (k, v) in fields {
        let _ = writeln!(out, "{prefix}.{k}={v}");
    }
}

fn corruption_lines(c: &CorruptionConfig, prefix: &str, out: &mut String) {
    match c.kind {
        None => {
            let _ = writeln!(out, "{prefix}.kind=none");
        }
        Some(kind) => {
            let _ = writeln!(out, "{prefix}.fraction={}", c.fraction);
            if let Some((h, w)) = c.image_shape {
                let _ = writeln!(out, "{prefix}.image_shape={h}x{w}");
            }
            let _ = writeln!(out, "{prefix}.kind={}", kind.name());
        }
    }
}

fn set_corruption(c: &mut CorruptionConfig, field: &str, key: &str, value: &str) -> Result<()> {
    match field {
        "kind" => {
            c.kind = match value.trim() {
                "none" | "" => None,
                other => Some(other.parse()?),
            }
        }
        "fraction" => c.fraction = parse(key, value)?,
        "image_shape" => c.image_shape = parse_shape(key, value)?,
        _ => return Err(Error::Config(format!("unknown key `{key}`"))),
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses `key=value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                column: 1,
                message: format!("expected key=value, got `{line}`"),
            })?;
            cfg.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::Config(message) => Error::Parse {
                    line: i + 1,
                    column: 1,
                    message,
                },
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Assigns one key. Used by the parser, the CLI and sweeps.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (head, field) = key.split_once('.').unwrap_or((key, ""));
        match (head, field) {
            ("seed", "") => self.seed = parse(key, value)?,
            ("repetitions", "") => self.repetitions = parse(key, value)?,
            ("methods", "") => {
                self.methods = value
                    .split(',')
                    .map(|m| m.trim().to_string())
                    .filter(|m| !m.is_empty())
                    .collect()
            }
            ("output", "dir") => self.output_dir = Some(PathBuf::from(value.trim())),
            ("output", "traces") => self.write_traces = parse_bool(key, value)?,
            ("data", "source") => {
                self.source = match value.trim() {
                    "synthetic" => SourceKind::Synthetic,
                    "files" => SourceKind::Files,
                    other => {
                        return Err(Error::Config(format!("`{key}`: unknown source `{other}`")))
                    }
                }
            }
            ("data", "classes") => self.synthetic.class_count = parse(key, value)?,
            ("data", "ambient_dim") => self.synthetic.ambient_dim = parse(key, value)?,
            ("data", "subspace_rank") => self.synthetic.subspace_rank = parse(key, value)?,
            ("data", "samples_per_class") => self.synthetic.samples_per_class = parse(key, value)?,
            ("data", "noise_sigma") => self.synthetic.noise_sigma = parse(key, value)?,
            ("data", "coefficients") => {
                self.synthetic.coefficients = value.parse::<CoefficientLaw>()?
            }
            ("data", "matrix") => self.files.matrix = PathBuf::from(value.trim()),
            ("data", "labels") => self.files.labels = PathBuf::from(value.trim()),
            ("data", "format") => self.files.format = Some(value.parse()?),
            ("split", "train_ratio") => self.train_ratio = parse(key, value)?,
            ("corrupt", f) => {
                let (side, f) = f.split_once('.').unwrap_or((f, ""));
                match side {
                    "train" => set_corruption(&mut self.corrupt_train, f, key, value)?,
                    "test" => set_corruption(&mut self.corrupt_test, f, key, value)?,
                    // Both sides at once, handy for sweeps.
                    "both" => {
                        set_corruption(&mut self.corrupt_train, f, key, value)?;
                        set_corruption(&mut self.corrupt_test, f, key, value)?;
                    }
                    _ => return Err(Error::Config(format!("unknown key `{key}`"))),
                }
            }
            ("classifier", "eta") => self.eta = parse(key, value)?,
            ("classifier", "input") => {
                self.classifier_input = match value.trim() {
                    "train_representation" => ClassifierInput::TrainingRepresentation,
                    "recoded" => ClassifierInput::Recoded,
                    other => {
                        return Err(Error::Config(format!("`{key}`: unknown input `{other}`")))
                    }
                }
            }
            ("coding", "mode") => {
                self.coding_mode = match value.trim() {
                    "joint" => CodingMode::Joint,
                    "per_sample" => CodingMode::PerSample,
                    other => return Err(Error::Config(format!("`{key}`: unknown mode `{other}`"))),
                }
            }
            ("rpca", "lambda") => {
                self.rpca_lambda = match value.trim() {
                    "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            ("solver", f) => set_solver_field(&mut self.solver, f, key, value)?,
            (method, f) if !f.is_empty() && is_builtin_method(method) => {
                // Validate now so typos fail at parse time.
                set_solver_field(&mut self.solver.clone(), f, key, value)?;
                self.overrides.insert(
                    (method.to_string(), f.to_string()),
                    value.trim().to_string(),
                );
            }
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Effective solver settings for one method.
    pub fn solver_for(&self, method: &str) -> Result<SolverConfig> {
        let mut cfg = self.solver.clone();
        for ((m, field), value) in &self.overrides {
            if m == method {
                set_solver_field(&mut cfg, field, &format!("{m}.{field}"), value)?;
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be >= 1".into()));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::Config(format!(
                "split.train_ratio must lie in (0, 1), got {}",
                self.train_ratio
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("method list is empty".into()));
        }
        let registry = MethodRegistry::with_builtins();
        for (i, m) in self.methods.iter().enumerate() {
            registry.resolve(m)?;
            if self.methods[..i].contains(m) {
                return Err(Error::Config(format!("method `{m}` listed twice")));
            }
            self.solver_for(m)?.validate()?;
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!(
                "classifier.eta must be > 0, got {}",
                self.eta
            )));
        }
        if let Some(l) = self.rpca_lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("rpca.lambda must be > 0, got {l}")));
            }
        }
        match self.source {
            SourceKind::Synthetic => self.synthetic.validate()?,
            SourceKind::Files => {
                if self.files.matrix.as_os_str().is_empty()
                    || self.files.labels.as_os_str().is_empty()
                {
                    return Err(Error::Config(
                        "data.source=files needs data.matrix and data.labels".into(),
                    ));
                }
            }
        }
        for (side, c) in [("train", &self.corrupt_train), ("test", &self.corrupt_test)] {
            if !(0.0..=1.0).contains(&c.fraction) {
                return Err(Error::Config(format!(
                    "corrupt.{side}.fraction must lie in [0, 1], got {}",
                    c.fraction
                )));
            }
            if c.kind == Some(CorruptionKind::BlockOcclusion) {
                let (h, w) = c.image_shape.ok_or_else(|| {
                    Error::Config(format!(
                        "corrupt.{side}.image_shape is required for block_occlusion"
                    ))
                })?;
                if self.source == SourceKind::Synthetic && h * w != self.synthetic.ambient_dim {
                    return Err(Error::Config(format!(
                        "corrupt.{side}.image_shape {h}x{w} does not match data.ambient_dim {}",
                        self.synthetic.ambient_dim
                    )));
                }
            }
        }
        Ok(())
    }

    /// Every effective setting, one `key=value` per line, sorted by key.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        match self.classifier_input {
            ClassifierInput::TrainingRepresentation => {
                out.push_str("classifier.input=train_representation\n")
            }
            ClassifierInput::Recoded => out.push_str("classifier.input=recoded\n"),
        }
        let _ = writeln!(out, "classifier.eta={}", self.eta);
        let _ = writeln!(
            out,
            "coding.mode={}",
            match self.coding_mode {
                CodingMode::Joint => "joint",
                CodingMode::PerSample => "per_sample",
            }
        );
        corruption_lines(&self.corrupt_test, "corrupt.test", &mut out);
        corruption_lines(&self.corrupt_train, "corrupt.train", &mut out);
        match self.source {
            SourceKind::Synthetic => {
                let s = &self.synthetic;
                let _ = writeln!(out, "data.ambient_dim={}", s.ambient_dim);
                let _ = writeln!(out, "data.classes={}", s.class_count);
                let _ = writeln!(out, "data.coefficients={}", s.coefficients.name());
                let _ = writeln!(out, "data.noise_sigma={}", s.noise_sigma);
                let _ = writeln!(out, "data.samples_per_class={}", s.samples_per_class);
                out.push_str("data.source=synthetic\n");
                let _ = writeln!(out, "data.subspace_rank={}", s.subspace_rank);
            }
            SourceKind::Files => {
                if let Some(f) = self.files.format {
                    let _ = writeln!(out, "data.format={}", f.name());
                }
                let _ = writeln!(out, "data.labels={}", self.files.labels.display());
                let _ = writeln!(out, "data.matrix={}", self.files.matrix.display());
                out.push_str("data.source=files\n");
            }
        }
        let _ = writeln!(out, "methods={}", self.methods.join(","));
        for ((m, field), v) in &self.overrides {
            let _ = writeln!(out, "{m}.{field}={v}");
        }
        let _ = writeln!(out, "repetitions={}", self.repetitions);
        match self.rpca_lambda {
            Some(l) => {
                let _ = writeln!(out, "rpca.lambda={l}");
            }
            None => out.push_str("rpca.lambda=auto\n"),
        }
        let _ = writeln!(out, "seed={}", self.seed);
        solver_lines(&self.solver, "solver", &mut out);
        let _ = writeln!(out, "split.train_ratio={}", self.train_ratio);
        let mut lines: Vec<&str> = out.lines().collect();
        lines.sort_unstable();
        let mut sorted = lines.join("\n");
        sorted.push('\n');
        sorted
    }

    /// SHA-256 of [`canonical`](Self::canonical), hex encoded. The output
    /// directory and trace switch do not change results and are excluded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

fn is_builtin_method(name: &str) -> bool {
    MethodRegistry::with_builtins().get(name).is_some()
}
