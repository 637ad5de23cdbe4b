//! Run configuration: flat `key = value` text grouped in `[section]`s.
//!
//! ```text
//! [privacy]
//! algorithm = local_group_dp
//! epsilon = 4.0
//! ```
//!
//! Every key is optional and falls back to a documented default, except the
//! CSV column mapping which must be spelled out. Unknown sections and keys
//! are errors, as are keys that do not apply to the selected variant (for
//! example `layout.alpha` with a uniform partition). [`RunConfig::to_kv`]
//! emits every field so a resolved config reproduces the run on its own.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use subjectdp::accountant::{HorizontalMode, PrivacyBudget};
use subjectdp::data::ItemsPerSubject;
use subjectdp::federation::SubjectMultiplierMode;
use subjectdp::trainers::Algorithm;

pub const SECTIONS: [&str; 6] = ["data", "layout", "model", "privacy", "training", "run"];

/// One or more field-level problems with a configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub messages: Vec<String>,
}

impl ConfigError {
    fn one(msg: impl Into<String>) -> Self {
        Self { messages: vec![msg.into()] }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.messages.join("\n"))
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Eq)]
struct RawValue {
    value: String,
    /// 0 for values supplied as overrides.
    line: usize,
}

/// Parsed but unvalidated `section.key -> value` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawConfig {
    entries: BTreeMap<String, RawValue>,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

impl RawConfig {
    /// Tokenizes config text. `#` and `;` start full-line comments.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        let mut section: Option<String> = None;
        let mut errors = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') || t.starts_with(';') {
                continue;
            }
            if let Some(rest) = t.strip_prefix('[') {
                match rest.strip_suffix(']').map(str::trim) {
                    Some(name) if SECTIONS.contains(&name) => section = Some(name.to_string()),
                    Some(name) => {
                        errors.push(format!("line {line}: unknown section [{name}]"));
                        section = None;
                    }
                    None => errors.push(format!("line {line}: unterminated section header")),
                }
                continue;
            }
            let Some((k, v)) = t.split_once('=') else {
                errors.push(format!("line {line}: expected `key = value`"));
                continue;
            };
            let key = k.trim();
            if !valid_name(key) {
                errors.push(format!("line {line}: invalid key {key:?}"));
                continue;
            }
            let Some(sec) = &section else {
                errors.push(format!("line {line}: key `{key}` outside a known section"));
                continue;
            };
            let full = format!("{sec}.{key}");
            if let Some(prev) = entries.get(&full) {
                let RawValue { line: first, .. } = prev;
                errors.push(format!("line {line}: duplicate key `{full}` (first set on line {first})"));
                continue;
            }
            entries.insert(
                full,
                RawValue {
                    value: v.trim().to_string(),
                    line,
                },
            );
        }
        if errors.is_empty() {
            Ok(Self { entries })
        } else {
            Err(ConfigError { messages: errors })
        }
    }

    /// Applies a `section.key=value` override, replacing any existing value.
    pub fn set_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| ConfigError::one(format!("override {spec:?} is not of the form section.key=value")))?;
        let key = k.trim();
        let ok = key
            .split_once('.')
            .is_some_and(|(s, name)| SECTIONS.contains(&s) && valid_name(name));
        if !ok {
            return Err(ConfigError::one(format!("override key {key:?} is not a known section.key")));
        }
        self.entries.insert(
            key.to_string(),
            RawValue {
                value: v.trim().to_string(),
                line: 0,
            },
        );
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|v| v.value.as_str())
    }
}

/// Pulls typed fields out of a [`RawConfig`], collecting every error.
struct Fields {
    entries: BTreeMap<String, RawValue>,
    errors: Vec<String>,
}

impl Fields {
    fn where_(key: &str, raw: &RawValue) -> String {
        if raw.line == 0 {
            format!("{key} (override)")
        } else {
            format!("{key} (line {})", raw.line)
        }
    }

    fn take<T: FromStr>(&mut self, key: &str, default: T, what: &str) -> T
    where
        T::Err: fmt::Display,
    {
        match self.entries.remove(key) {
            None => default,
            Some(raw) => match raw.value.parse::<T>() {
                Ok(v) => v,
                Err(e) => {
                    self.errors.push(format!("{}: expected {what}, got {:?}: {e}", Self::where_(key, &raw), raw.value));
                    default
                }
            },
        }
    }

    fn take_required(&mut self, key: &str, why: &str) -> Option<String> {
        match self.entries.remove(key) {
            Some(raw) if !raw.value.is_empty() => Some(raw.value),
            Some(raw) => {
                self.errors.push(format!("{}: must not be empty ({why})", Self::where_(key, &raw)));
                None
            }
            None => {
                self.errors.push(format!("{key}: required ({why})"));
                None
            }
        }
    }

    fn take_opt_string(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|r| r.value).filter(|v| !v.is_empty())
    }

    fn check(&mut self, ok: bool, key: &str, msg: &str) {
        if !ok {
            self.errors.push(format!("{key}: {msg}"));
        }
    }

    /// Rejects any listed key still present, with `reason`.
    fn reject(&mut self, keys: &[&str], reason: &str) {
        for k in keys {
            if let Some(raw) = self.entries.remove(*k) {
                self.errors.push(format!("{}: {reason}", Self::where_(k, &raw)));
            }
        }
    }
}

/// Number of items each synthetic subject owns, written as
/// `const:N`, `uniform:MIN:MAX` or `shifted_poisson:MEAN`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemsSpec(pub ItemsPerSubject);

impl FromStr for ItemsSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let num = |p: &str| p.parse::<usize>().map_err(|e| format!("{p:?}: {e}"));
        let v = match parts.as_slice() {
            ["const", n] => ItemsPerSubject::Constant { count: num(n)? },
            ["uniform", a, b] => ItemsPerSubject::Uniform { min: num(a)?, max: num(b)? },
            ["shifted_poisson", m] => ItemsPerSubject::ShiftedPoisson {
                mean: m.parse::<f64>().map_err(|e| format!("{m:?}: {e}"))?,
            },
            _ => return Err("use const:N, uniform:MIN:MAX or shifted_poisson:MEAN".into()),
        };
        Ok(Self(v))
    }
}

impl fmt::Display for ItemsSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            ItemsPerSubject::Constant { count } => write!(f, "const:{count}"),
            ItemsPerSubject::Uniform { min, max } => write!(f, "uniform:{min}:{max}"),
            ItemsPerSubject::ShiftedPoisson { mean } => write!(f, "shifted_poisson:{mean}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticData {
    pub n_subjects: usize,
    pub items_per_subject: ItemsSpec,
    pub d_in: usize,
    pub num_classes: usize,
    pub class_separation: f64,
    pub subject_offset_scale: f64,
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvData {
    pub path: PathBuf,
    /// Empty selects the `f<integer>` columns.
    pub feature_columns: Vec<String>,
    pub label_column: String,
    pub subject_column: String,
    /// Inferred from the largest label when absent.
    pub num_classes: Option<usize>,
    /// Separate test file; when absent a holdout split is used.
    pub test_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticData),
    Csv(CsvData),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    #[serde(flatten)]
    pub source: DataSource,
    pub train_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "partition", rename_all = "snake_case")]
pub enum Partition {
    Uniform,
    Power { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutConfig {
    pub n_users: usize,
    #[serde(flatten)]
    pub partition: Partition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Logistic { fit_intercept: bool },
    Mlp { hidden: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyConfig {
    pub algorithm: Algorithm,
    pub epsilon: f64,
    pub delta: f64,
    pub subject_multiplier: SubjectMultiplierMode,
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub rounds: usize,
    pub users_per_round: usize,
    pub batch_size: usize,
    pub batches_per_round: usize,
    pub clip_norm: f64,
    pub learning_rate: f64,
    pub horizontal_mode: HorizontalMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataConfig,
    pub layout: LayoutConfig,
    pub model: ModelConfig,
    pub privacy: PrivacyConfig,
    pub training: TrainingConfig,
    pub seed: u64,
}

fn list(s: &str) -> Vec<String> {
    s.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_raw(RawConfig::parse(text)?)
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        let mut f = Fields {
            entries: raw.entries,
            errors: Vec::new(),
        };

        let synthetic_keys = [
            "data.n_subjects",
            "data.items_per_subject",
            "data.d_in",
            "data.class_separation",
            "data.subject_offset_scale",
            "data.noise_std",
        ];
        let csv_keys = ["data.path", "data.feature_columns", "data.label_column", "data.subject_column", "data.test_path"];
        let source_name = f.take_opt_string("data.source").unwrap_or_else(|| "synthetic".into());
        let source = match source_name.as_str() {
            "synthetic" => {
                f.reject(&csv_keys, "only applies to data.source = csv");
                let s = SyntheticData {
                    n_subjects: f.take("data.n_subjects", 400, "a count"),
                    items_per_subject: f.take(
                        "data.items_per_subject",
                        ItemsSpec(ItemsPerSubject::ShiftedPoisson { mean: 20.0 }),
                        "an item-count distribution",
                    ),
                    d_in: f.take("data.d_in", 20, "a count"),
                    num_classes: f.take("data.num_classes", 10, "a count"),
                    class_separation: f.take("data.class_separation", 0.5, "a number"),
                    subject_offset_scale: f.take("data.subject_offset_scale", 0.5, "a number"),
                    noise_std: f.take("data.noise_std", 1.0, "a number"),
                };
                f.check(s.n_subjects >= 1, "data.n_subjects", "must be at least 1");
                f.check(s.d_in >= 1, "data.d_in", "must be at least 1");
                f.check(s.num_classes >= 2, "data.num_classes", "must be at least 2");
                f.check(s.class_separation.is_finite() && s.class_separation >= 0.0, "data.class_separation", "must be finite and non-negative");
                f.check(s.subject_offset_scale.is_finite() && s.subject_offset_scale >= 0.0, "data.subject_offset_scale", "must be finite and non-negative");
                f.check(s.noise_std.is_finite() && s.noise_std >= 0.0, "data.noise_std", "must be finite and non-negative");
                let items_ok = match s.items_per_subject.0 {
                    ItemsPerSubject::Constant { count } => count >= 1,
                    ItemsPerSubject::Uniform { min, max } => min >= 1 && min <= max,
                    ItemsPerSubject::ShiftedPoisson { mean } => mean.is_finite() && mean >= 1.0,
                };
                f.check(items_ok, "data.items_per_subject", "every subject needs at least one item");
                DataSource::Synthetic(s)
            }
            "csv" => {
                f.reject(&synthetic_keys, "only applies to data.source = synthetic");
                let path = f.take_required("data.path", "path of the training CSV").unwrap_or_default();
                let subject_column = f
                    .take_required("data.subject_column", "subject tags are mandatory for subject-level privacy")
                    .unwrap_or_default();
                let label_column = f.take_required("data.label_column", "column holding class labels").unwrap_or_default();
                let feature_columns = f.take_opt_string("data.feature_columns").map(|s| list(&s)).unwrap_or_default();
                let num_classes = match f.take_opt_string("data.num_classes").as_deref() {
                    None | Some("auto") => None,
                    Some(v) => match v.parse::<usize>() {
                        Ok(n) if n >= 2 => Some(n),
                        _ => {
                            f.errors.push(format!("data.num_classes: expected `auto` or a count >= 2, got {v:?}"));
                            None
                        }
                    },
                };
                DataSource::Csv(CsvData {
                    path: PathBuf::from(path),
                    feature_columns,
                    label_column,
                    subject_column,
                    num_classes,
                    test_path: f.take_opt_string("data.test_path").map(PathBuf::from),
                })
            }
            other => {
                f.errors.push(format!("data.source: expected synthetic or csv, got {other:?}"));
                DataSource::Synthetic(SyntheticData {
                    n_subjects: 1,
                    items_per_subject: ItemsSpec(ItemsPerSubject::Constant { count: 1 }),
                    d_in: 1,
                    num_classes: 2,
                    class_separation: 0.0,
                    subject_offset_scale: 0.0,
                    noise_std: 0.0,
                })
            }
        };
        let train_fraction: f64 = f.take("data.train_fraction", 0.8, "a fraction");
        f.check(train_fraction > 0.0 && train_fraction < 1.0, "data.train_fraction", "must be in (0, 1)");

        let n_users: usize = f.take("layout.n_users", 16, "a count");
        f.check(n_users >= 1, "layout.n_users", "must be at least 1");
        let partition = match f.take_opt_string("layout.partition").as_deref().unwrap_or("uniform") {
            "uniform" => {
                f.reject(&["layout.alpha"], "only applies to layout.partition = power");
                Partition::Uniform
            }
            "power" => {
                let alpha: f64 = f.take("layout.alpha", 1.0, "a number");
                f.check(alpha > 0.0 && alpha.is_finite(), "layout.alpha", "must be positive and finite");
                Partition::Power { alpha }
            }
            other => {
                f.errors.push(format!("layout.partition: expected uniform or power, got {other:?}"));
                Partition::Uniform
            }
        };

        let model = match f.take_opt_string("model.kind").as_deref().unwrap_or("logistic") {
            "logistic" => {
                f.reject(&["model.hidden"], "only applies to model.kind = mlp");
                ModelConfig::Logistic {
                    fit_intercept: f.take("model.fit_intercept", true, "true or false"),
                }
            }
            "mlp" => {
                f.reject(&["model.fit_intercept"], "only applies to model.kind = logistic");
                let hidden_raw = f.take_opt_string("model.hidden").unwrap_or_else(|| "32".into());
                let hidden: Result<Vec<usize>, _> = list(&hidden_raw).iter().map(|h| h.parse::<usize>()).collect();
                match hidden {
                    Ok(h) if !h.is_empty() && !h.contains(&0) => ModelConfig::Mlp { hidden: h },
                    _ => {
                        f.errors.push(format!("model.hidden: expected comma-separated positive widths, got {hidden_raw:?}"));
                        ModelConfig::Mlp { hidden: vec![1] }
                    }
                }
            }
            other => {
                f.errors.push(format!("model.kind: expected logistic or mlp, got {other:?}"));
                ModelConfig::Logistic { fit_intercept: true }
            }
        };

        let algorithm = match f.take_opt_string("privacy.algorithm") {
            None => Algorithm::LocalGroupDp,
            Some(v) => v.parse::<Algorithm>().unwrap_or_else(|e| {
                f.errors.push(format!("privacy.algorithm: {e}"));
                Algorithm::LocalGroupDp
            }),
        };
        let privacy = PrivacyConfig {
            algorithm,
            epsilon: f.take("privacy.epsilon", 4.0, "a number"),
            delta: f.take("privacy.delta", 1e-5, "a number"),
            subject_multiplier: match f.take_opt_string("privacy.subject_multiplier") {
                None => SubjectMultiplierMode::Max,
                Some(v) => v.parse().unwrap_or_else(|e| {
                    f.errors.push(format!("privacy.subject_multiplier: {e}"));
                    SubjectMultiplierMode::Max
                }),
            },
            c1: f.take("privacy.c1", 1.0, "a number"),
            c2: f.take("privacy.c2", 1.0, "a number"),
        };
        if let Err(e) = PrivacyBudget::new(privacy.epsilon, privacy.delta) {
            f.errors.push(format!("privacy.epsilon/privacy.delta: {e}"));
        }
        f.check(privacy.c1 > 0.0 && privacy.c1.is_finite(), "privacy.c1", "must be positive and finite");
        f.check(privacy.c2 > 0.0 && privacy.c2.is_finite(), "privacy.c2", "must be positive and finite");

        let training = TrainingConfig {
            rounds: f.take("training.rounds", 100, "a count"),
            users_per_round: f.take("training.users_per_round", 16, "a count"),
            batch_size: f.take("training.batch_size", 64, "a count"),
            batches_per_round: f.take("training.batches_per_round", 10, "a count"),
            clip_norm: f.take("training.clip_norm", 0.5, "a number"),
            learning_rate: f.take("training.learning_rate", 1.0, "a number"),
            horizontal_mode: f.take("training.horizontal_mode", HorizontalMode::RoundReduction, "round_reduction or minibatch_scaling"),
        };
        f.check(training.rounds >= 1, "training.rounds", "must be at least 1");
        f.check(
            training.users_per_round >= 1 && training.users_per_round <= n_users.max(1),
            "training.users_per_round",
            "must be between 1 and layout.n_users",
        );
        f.check(training.batch_size >= 1, "training.batch_size", "must be at least 1");
        f.check(training.clip_norm > 0.0 && training.clip_norm.is_finite(), "training.clip_norm", "must be positive and finite");
        f.check(
            training.learning_rate >= 0.0 && training.learning_rate.is_finite(),
            "training.learning_rate",
            "must be finite and non-negative",
        );

        let seed = f.take("run.seed", 0u64, "a non-negative integer");

        let leftover: Vec<String> = f.entries.keys().map(|k| format!("{k}: unknown key")).collect();
        f.errors.extend(leftover);
        if !f.errors.is_empty() {
            return Err(ConfigError { messages: f.errors });
        }
        Ok(Self {
            data: DataConfig { source, train_fraction },
            layout: LayoutConfig { n_users, partition },
            model,
            privacy,
            training,
            seed,
        })
    }

    /// Every field, defaults included, in parseable form.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let section = |out: &mut String, name: &str| {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&format!("[{name}]\n"));
        };
        let kv = |out: &mut String, k: &str, v: &dyn fmt::Display| out.push_str(&format!("{k} = {v}\n"));

        section(&mut out, "data");
        match &self.data.source {
            DataSource::Synthetic(s) => {
                kv(&mut out, "source", &"synthetic");
                kv(&mut out, "n_subjects", &s.n_subjects);
                kv(&mut out, "items_per_subject", &s.items_per_subject);
                kv(&mut out, "d_in", &s.d_in);
                kv(&mut out, "num_classes", &s.num_classes);
                kv(&mut out, "class_separation", &s.class_separation);
                kv(&mut out, "subject_offset_scale", &s.subject_offset_scale);
                kv(&mut out, "noise_std", &s.noise_std);
            }
            DataSource::Csv(c) => {
                kv(&mut out, "source", &"csv");
                kv(&mut out, "path", &c.path.display());
                kv(&mut out, "feature_columns", &c.feature_columns.join(","));
                kv(&mut out, "label_column", &c.label_column);
                kv(&mut out, "subject_column", &c.subject_column);
                kv(&mut out, "num_classes", &c.num_classes.map_or("auto".to_string(), |n| n.to_string()));
                kv(&mut out, "test_path", &c.test_path.as_ref().map_or(String::new(), |p| p.display().to_string()));
            }
        }
        kv(&mut out, "train_fraction", &self.data.train_fraction);

        section(&mut out, "layout");
        kv(&mut out, "n_users", &self.layout.n_users);
        match self.layout.partition {
            Partition::Uniform => kv(&mut out, "partition", &"uniform"),
            Partition::Power { alpha } => {
                kv(&mut out, "partition", &"power");
                kv(&mut out, "alpha", &alpha);
            }
        }

        section(&mut out, "model");
        match &self.model {
            ModelConfig::Logistic { fit_intercept } => {
                kv(&mut out, "kind", &"logistic");
                kv(&mut out, "fit_intercept", fit_intercept);
            }
            ModelConfig::Mlp { hidden } => {
                kv(&mut out, "kind", &"mlp");
                kv(&mut out, "hidden", &hidden.iter().map(ToString::to_string).collect::<Vec<_>>().join(","));
            }
        }

        let p = &self.privacy;
        section(&mut out, "privacy");
        kv(&mut out, "algorithm", &p.algorithm);
        kv(&mut out, "epsilon", &p.epsilon);
        kv(&mut out, "delta", &p.delta);
        kv(&mut out, "subject_multiplier", &p.subject_multiplier);
        kv(&mut out, "c1", &p.c1);
        kv(&mut out, "c2", &p.c2);

        let t = &self.training;
        section(&mut out, "training");
        kv(&mut out, "rounds", &t.rounds);
        kv(&mut out, "users_per_round", &t.users_per_round);
        kv(&mut out, "batch_size", &t.batch_size);
        kv(&mut out, "batches_per_round", &t.batches_per_round);
        kv(&mut out, "clip_norm", &t.clip_norm);
        kv(&mut out, "learning_rate", &t.learning_rate);
        kv(&mut out, "horizontal_mode", &t.horizontal_mode);

        section(&mut out, "run");
        kv(&mut out, "seed", &self.seed);
        out
    }
}
