//! The `run`, `sweep`, `account` and `plot` subcommands.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Serialize;
use subjectdp::accountant::{
    plan_noise, utility_bound_higradavgdp, utility_bound_localgroupdp, utility_bound_userldp, HorizontalMode, Mechanism, NoisePlan,
    PrivacyBudget, ReferenceConstants, StepSchedule, UtilityBoundInputs,
};
use subjectdp::data::{generate_synthetic, load_csv, partition_power, partition_uniform, split_holdout, CsvSchema, DataItem, FederationLayout, Registry, SyntheticSpec};
use subjectdp::federation::{run_federation, FederationConfig, FederationOutcome};
use subjectdp::models::{estimate_lipschitz, init_params, l2_norm, save_checkpoint, ModelKind, ModelSpec};
use subjectdp::trainers::{Algorithm, NoiseCalibration};

use crate::config::{ConfigError, DataSource, ModelConfig, Partition, RawConfig, RunConfig};
use crate::report::{
    group_size_histogram, parse_audits, parse_rounds, to_jsonl, BoundReport, RoundRecord, RunSummary, SUMMARY_SCHEMA_VERSION,
};
use crate::svg;

pub const SWEEP_CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration:\n{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<subjectdp::Error> for CliError {
    fn from(e: subjectdp::Error) -> Self {
        use subjectdp::Error as E;
        match e {
            E::InvalidConfig(_) | E::InvalidPrivacy(_) | E::BudgetInfeasible(_) => CliError::Config(ConfigError { messages: vec![e.to_string()] }),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    s.push('\n');
    write(path, s)
}

/// Reads a config file and applies `section.key=value` overrides.
pub fn load_config(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut raw = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(ConfigError { messages: vec![format!("{}: {e}", p.display())] }))?;
            RawConfig::parse(&text)?
        }
        None => RawConfig::default(),
    };
    for o in overrides {
        raw.set_override(o)?;
    }
    if let Some(s) = seed {
        raw.set_override(&format!("run.seed={s}"))?;
    }
    Ok(RunConfig::from_raw(raw)?)
}

pub fn model_spec(cfg: &RunConfig, d_in: usize, num_classes: usize) -> ModelSpec {
    match &cfg.model {
        ModelConfig::Logistic { fit_intercept } => ModelSpec::logistic(d_in, num_classes, *fit_intercept),
        ModelConfig::Mlp { hidden } => ModelSpec::mlp(d_in, num_classes, hidden.clone()),
    }
}

/// Training registry and evaluation items.
pub fn load_data(cfg: &RunConfig) -> Result<(Registry, Vec<DataItem>), CliError> {
    let seed = cfg.seed;
    let (full, test) = match &cfg.data.source {
        DataSource::Synthetic(s) => {
            let spec = SyntheticSpec {
                n_subjects: s.n_subjects,
                items_per_subject: s.items_per_subject.0,
                d_in: s.d_in,
                num_classes: s.num_classes,
                class_separation: s.class_separation,
                subject_offset_scale: s.subject_offset_scale,
                noise_std: s.noise_std,
                seed,
            };
            (generate_synthetic(&spec)?, None)
        }
        DataSource::Csv(c) => {
            let schema = CsvSchema {
                feature_columns: c.feature_columns.clone(),
                label_column: c.label_column.clone(),
                subject_column: c.subject_column.clone(),
            };
            let train = load_csv(&c.path, &schema, c.num_classes)?;
            let test = match &c.test_path {
                Some(p) => {
                    let t = load_csv(p, &schema, Some(train.num_classes()))?;
                    if t.d_in() != train.d_in() {
                        return Err(CliError::Runtime(format!(
                            "{}: {} features but the training file has {}",
                            p.display(),
                            t.d_in(),
                            train.d_in()
                        )));
                    }
                    Some(t)
                }
                None => None,
            };
            (train, test)
        }
    };
    match test {
        Some(t) => {
            let eval = t.iter_items().cloned().collect();
            Ok((full, eval))
        }
        None => {
            let (train, holdout) = split_holdout(&full, cfg.data.train_fraction, seed)?;
            if holdout.is_empty() {
                return Err(CliError::Runtime("holdout split is empty; add data or lower data.train_fraction".into()));
            }
            Ok((train, holdout.iter_items().cloned().collect()))
        }
    }
}

pub fn build_layout(cfg: &RunConfig, train: &Registry) -> Result<FederationLayout, CliError> {
    Ok(match cfg.layout.partition {
        Partition::Uniform => partition_uniform(train, cfg.layout.n_users, cfg.seed)?,
        Partition::Power { alpha } => partition_power(train, cfg.layout.n_users, alpha, cfg.seed)?,
    })
}

pub fn federation_config(cfg: &RunConfig) -> Result<FederationConfig, CliError> {
    let p = &cfg.privacy;
    let t = &cfg.training;
    Ok(FederationConfig {
        algorithm: p.algorithm,
        budget: Some(PrivacyBudget::new(p.epsilon, p.delta)?),
        rounds: t.rounds,
        users_per_round: t.users_per_round,
        mode: t.horizontal_mode,
        batch_size: t.batch_size,
        batches_per_round: t.batches_per_round,
        batches_per_user: BTreeMap::new(),
        clip_norm: t.clip_norm,
        learning_rate: t.learning_rate,
        subject_multiplier_mode: p.subject_multiplier,
        constants: ReferenceConstants { c1: p.c1, c2: p.c2 },
        sigma_override: None,
        seed: cfg.seed,
    })
}

#[derive(Serialize)]
struct UserPlanRecord<'a> {
    user: usize,
    dataset_size: usize,
    batches_per_round: usize,
    subject_multiplier: Option<f64>,
    plan: Option<&'a NoisePlan>,
    /// `Z -> sigma_Z` for every group size met during training.
    group_sigmas: BTreeMap<usize, f64>,
}

fn bound_report(cfg: &RunConfig, spec: &ModelSpec, train: &Registry, layout: &FederationLayout, outcome: &FederationOutcome) -> Option<BoundReport> {
    if !matches!(spec.kind, ModelKind::LogisticRegression { .. }) {
        return None;
    }
    let items: Vec<DataItem> = train.iter_items().cloned().collect();
    let lip = estimate_lipschitz(spec, &items).ok()?;
    let init = init_params(spec, cfg.seed).ok()?;
    let n = layout.total_items() as f64 / layout.n_users() as f64;
    let b = cfg.training.batch_size as f64;
    let audits = outcome.reports.iter().flat_map(|r| &r.audits);
    let k = match cfg.privacy.algorithm {
        Algorithm::LocalGroupDp => audits.filter_map(|a| a.observed_z).max().unwrap_or(1) as f64,
        Algorithm::HiGradAvgDp => outcome.stamps.first().and_then(|s| s.subject_multiplier).unwrap_or(1.0),
        _ => 1.0,
    };
    let inputs = UtilityBoundInputs {
        lipschitz: lip.value,
        diameter: l2_norm(outcome.params.values()) + l2_norm(init.values()),
        learning_rate: cfg.training.learning_rate,
        steps: (cfg.training.batches_per_round * outcome.round_plan.effective_rounds) as f64,
        n,
        dimension: spec.dimension() as f64,
        k,
        sampling_fraction: (b / n).min(1.0),
        m: b,
        epsilon: cfg.privacy.epsilon,
        delta: cfg.privacy.delta,
        c2: cfg.privacy.c2,
    };
    let bounds = (|| {
        Ok::<_, subjectdp::Error>(BoundReport {
            inputs,
            lipschitz_method: lip.method.to_string(),
            diameter_method: "observed |theta_final| + |theta_init|".into(),
            local_group_dp: utility_bound_localgroupdp(&inputs)?,
            user_ldp: utility_bound_userldp(&inputs)?,
            higradavg_dp: utility_bound_higradavgdp(&inputs)?,
        })
    })();
    match bounds {
        Ok(b) => Some(b),
        Err(e) => {
            log::warn!("utility bounds skipped: {e}");
            None
        }
    }
}

/// Executes one configuration and writes its artifacts into `out`.
pub fn execute_run(cfg: &RunConfig, out: &Path) -> Result<RunSummary, CliError> {
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    write(&out.join("resolved.cfg"), cfg.to_kv())?;
    write_json(&out.join("resolved.json"), cfg)?;

    let (train, eval) = load_data(cfg)?;
    let layout = build_layout(cfg, &train)?;
    let spec = model_spec(cfg, train.d_in(), train.num_classes());
    let fed = federation_config(cfg)?;
    if cfg.privacy.algorithm == Algorithm::HiGradAvgDp {
        log::info!("subject multiplier k uses the {} subject cardinality", cfg.privacy.subject_multiplier);
    }
    let outcome = run_federation(&layout, &spec, &fed, &eval)?;

    let plans: Vec<UserPlanRecord> = outcome
        .stamps
        .iter()
        .map(|s| UserPlanRecord {
            user: s.user,
            dataset_size: layout.user(s.user).map_or(0, |d| d.len()),
            batches_per_round: s.trainer.batches_per_round,
            subject_multiplier: s.subject_multiplier,
            plan: s.plan.as_ref(),
            group_sigmas: match &s.trainer.noise {
                NoiseCalibration::PerGroupSize(cache) => cache.entries(),
                _ => BTreeMap::new(),
            },
        })
        .collect();
    write_json(&out.join("noise_plans.json"), &plans)?;
    write(&out.join("rounds.jsonl"), to_jsonl(outcome.reports.iter().map(RoundRecord::from)))?;
    write(&out.join("audits.jsonl"), to_jsonl(outcome.reports.iter().flat_map(|r| &r.audits)))?;
    save_checkpoint(&out.join("final"), &spec, &outcome.params)?;

    let mut timings = String::from("round,wall_time_secs\n");
    for r in &outcome.reports {
        timings.push_str(&format!("{},{}\n", r.round, r.wall_time_secs));
    }
    write(&out.join("timings.csv"), timings)?;

    let zs: Vec<usize> = outcome.reports.iter().flat_map(|r| &r.audits).filter_map(|a| a.observed_z).collect();
    let last = outcome.reports.last();
    let summary = RunSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        algorithm: cfg.privacy.algorithm,
        seed: cfg.seed,
        configured_rounds: outcome.round_plan.total_rounds_configured,
        effective_rounds: outcome.round_plan.effective_rounds,
        final_test_accuracy: last.map_or(f64::NAN, |r| r.test_accuracy),
        final_test_loss: last.map_or(f64::NAN, |r| r.test_loss),
        mean_observed_z: (!zs.is_empty()).then(|| zs.iter().sum::<usize>() as f64 / zs.len() as f64),
        total_batches: outcome.reports.iter().map(|r| r.audits.len()).sum(),
        sigma_user0: outcome.stamps.first().and_then(|s| s.plan.as_ref()).map(|p| p.sigma),
        subject_multiplier_user0: outcome.stamps.first().and_then(|s| s.subject_multiplier),
        bounds: bound_report(cfg, &spec, &train, &layout, &outcome),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Parses `section.key=v1,v2,...`.
pub fn parse_sweep_spec(spec: &str) -> Result<(String, Vec<String>), CliError> {
    let (k, v) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError { messages: vec![format!("sweep {spec:?} is not of the form section.key=v1,v2")] })?;
    let values: Vec<String> = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    if values.is_empty() {
        return Err(ConfigError { messages: vec![format!("sweep {spec:?} lists no values")] }.into());
    }
    Ok((k.trim().to_string(), values))
}

pub const SWEEP_FIXED_COLUMNS: [&str; 10] = [
    "algorithm",
    "seed",
    "partition",
    "alpha",
    "configured_rounds",
    "effective_rounds",
    "final_test_accuracy",
    "final_test_loss",
    "mean_observed_z",
    "sigma_user0",
];

/// Runs the cross product of `sweeps` on top of the base config and writes
/// `sweep.csv`. With no sweep axes this is a single run in `run_000`.
pub fn execute_sweep(config: Option<&Path>, overrides: &[String], seed: Option<u64>, sweeps: &[String], out: &Path) -> Result<Vec<RunSummary>, CliError> {
    let axes = sweeps.iter().map(|s| parse_sweep_spec(s)).collect::<Result<Vec<_>, _>>()?;
    let mut combos: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in &axes {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut next = c.clone();
                    next.push((key.clone(), v.clone()));
                    next
                })
            })
            .collect();
    }
    // Resolve every configuration first so a bad value fails before any run.
    let configs = combos
        .iter()
        .map(|combo| {
            let mut all: Vec<String> = overrides.to_vec();
            all.extend(combo.iter().map(|(k, v)| format!("{k}={v}")));
            load_config(config, &all, seed)
        })
        .collect::<Result<Vec<_>, _>>()?;

    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let csv_path = out.join("sweep.csv");
    let mut wtr = csv::Writer::from_path(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    let mut header = vec!["schema_version".to_string(), "run".to_string()];
    header.extend(axes.iter().map(|(k, _)| k.clone()));
    header.extend(SWEEP_FIXED_COLUMNS.iter().map(|s| s.to_string()));
    wtr.write_record(&header).map_err(|e| io_err(&csv_path, e))?;

    let mut summaries = Vec::new();
    for (i, (cfg, combo)) in configs.iter().zip(&combos).enumerate() {
        let name = format!("run_{i:03}");
        log::info!("sweep {name}: {combo:?}");
        let s = execute_run(cfg, &out.join(&name))?;
        let (partition, alpha) = match cfg.layout.partition {
            Partition::Uniform => ("uniform".to_string(), String::new()),
            Partition::Power { alpha } => ("power".to_string(), alpha.to_string()),
        };
        let mut row = vec![SWEEP_CSV_SCHEMA_VERSION.to_string(), name];
        row.extend(combo.iter().map(|(_, v)| v.clone()));
        row.extend([
            s.algorithm.to_string(),
            s.seed.to_string(),
            partition,
            alpha,
            s.configured_rounds.to_string(),
            s.effective_rounds.to_string(),
            s.final_test_accuracy.to_string(),
            s.final_test_loss.to_string(),
            s.mean_observed_z.map_or(String::new(), |z| z.to_string()),
            s.sigma_user0.map_or(String::new(), |z| z.to_string()),
        ]);
        wtr.write_record(&row).map_err(|e| io_err(&csv_path, e))?;
        summaries.push(s);
    }
    wtr.flush().map_err(|e| io_err(&csv_path, e))?;
    Ok(summaries)
}

/// Accountant query without data.
#[derive(Debug, Clone, PartialEq)]
pub struct AccountQuery {
    pub epsilon: f64,
    pub delta: f64,
    pub rounds: usize,
    pub users_per_round: usize,
    pub batches_per_round: usize,
    pub sampling_fraction: f64,
    pub mechanism: Mechanism,
    pub mode: HorizontalMode,
    pub constants: ReferenceConstants,
}

/// Parses the `--mechanism` value together with its size argument.
pub fn parse_mechanism(name: &str, group_size: usize, subject_multiplier: f64) -> Result<Mechanism, CliError> {
    Ok(match name {
        "item" => Mechanism::ItemLevel,
        "group" => Mechanism::GroupLevel { group_size },
        "subject" => Mechanism::SubjectSampling { subject_multiplier },
        "user" => Mechanism::UserLocal,
        other => {
            return Err(ConfigError {
                messages: vec![format!("mechanism: expected item, group, subject or user, got {other:?}")],
            }
            .into())
        }
    })
}

/// Solves the plan and renders it as `key=value` lines followed by one JSON line.
pub fn account_report(q: &AccountQuery) -> Result<String, CliError> {
    let budget = PrivacyBudget::new(q.epsilon, q.delta)?;
    let schedule = StepSchedule {
        sampling_fraction: q.sampling_fraction,
        batches_per_round: q.batches_per_round,
        rounds: q.rounds,
        users_per_round: q.users_per_round,
        mode: q.mode,
    };
    let plan = plan_noise(budget, q.mechanism, &schedule, q.constants)?;
    let (mech, size) = match plan.mechanism {
        Mechanism::ItemLevel => ("item", String::new()),
        Mechanism::GroupLevel { group_size } => ("group", group_size.to_string()),
        Mechanism::SubjectSampling { subject_multiplier } => ("subject", subject_multiplier.to_string()),
        Mechanism::UserLocal => ("user", String::new()),
    };
    let mut lines: Vec<(&str, String)> = vec![
        ("mechanism", mech.into()),
        ("mechanism_size", size),
        ("epsilon", plan.budget.epsilon().to_string()),
        ("delta", plan.budget.delta().to_string()),
        ("accounted_epsilon", plan.accounted_budget.epsilon().to_string()),
        ("accounted_delta", plan.accounted_budget.delta().to_string()),
        ("sigma", plan.sigma.to_string()),
        ("per_round_epsilon", plan.per_round_epsilon.to_string()),
        ("configured_rounds", plan.configured_rounds.to_string()),
        ("effective_rounds", plan.effective_rounds.to_string()),
        ("users_per_round", plan.users_per_round.to_string()),
        ("mode", plan.mode.to_string()),
        ("batches_per_round", plan.batches_per_round.to_string()),
        ("steps_accounted", plan.steps_accounted.to_string()),
        ("sampling_fraction", plan.sampling_fraction.to_string()),
        ("effective_sampling_fraction", plan.effective_sampling_fraction.to_string()),
        ("achieved_epsilon", plan.achieved_epsilon.to_string()),
        ("best_order", plan.best_order.to_string()),
        ("accountant_sigma", plan.accountant_sigma.to_string()),
    ];
    if let Some(rr) = plan.randomized_response_sigma {
        lines.push(("randomized_response_sigma", rr.to_string()));
    }
    lines.push(("closed_form_sigma_reference", plan.closed_form_sigma.to_string()));
    lines.push(("closed_form_precondition_holds", plan.closed_form_precondition_holds.to_string()));
    lines.push(("order_grid_version", plan.order_grid_version.to_string()));
    let mut out = String::new();
    for (k, v) in lines {
        out.push_str(&format!("{k}={v}\n"));
    }
    out.push_str(&serde_json::to_string(&plan).map_err(|e| CliError::Runtime(e.to_string()))?);
    out.push('\n');
    Ok(out)
}

/// What `plot` wrote.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlotOutput {
    pub files: Vec<PathBuf>,
    pub skipped: Vec<String>,
}

fn run_label(dir: &Path, i: usize) -> String {
    dir.file_name().map_or_else(|| format!("run{i}"), |n| n.to_string_lossy().into_owned())
}

/// Renders curves, group-size histograms and bound tables from run directories.
pub fn plot_runs(runs: &[PathBuf], out: &Path) -> Result<PlotOutput, CliError> {
    if runs.is_empty() {
        return Err(ConfigError { messages: vec!["plot needs at least one --run directory".into()] }.into());
    }
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let mut files = Vec::new();
    let mut skipped = Vec::new();
    let mut acc_series = Vec::new();
    let mut loss_series = Vec::new();
    let mut acc_csv = String::from("run,round,test_accuracy\n");
    let mut loss_csv = String::from("run,round,test_loss\n");
    let mut hist_csv = String::from("run,group_size,batches\n");
    let mut bounds_csv = String::from("run,bound,optimization,noise,generalization,total\n");
    let mut bound_rows = Vec::new();

    let csv_field = |s: &str| if s.contains([',', '"', '\n']) { format!("\"{}\"", s.replace('"', "\"\"")) } else { s.to_string() };

    for (i, dir) in runs.iter().enumerate() {
        let label = run_label(dir, i);
        let rounds_path = dir.join("rounds.jsonl");
        let f = File::open(&rounds_path).map_err(|e| io_err(&rounds_path, e))?;
        let rounds = parse_rounds(BufReader::new(f)).map_err(|e| io_err(&rounds_path, e))?;
        acc_series.push((label.clone(), rounds.iter().map(|r| (r.round as f64, r.test_accuracy)).collect::<Vec<_>>()));
        loss_series.push((label.clone(), rounds.iter().map(|r| (r.round as f64, r.test_loss)).collect::<Vec<_>>()));
        for r in &rounds {
            acc_csv.push_str(&format!("{},{},{}\n", csv_field(&label), r.round, r.test_accuracy));
            loss_csv.push_str(&format!("{},{},{}\n", csv_field(&label), r.round, r.test_loss));
        }

        let audits_path = dir.join("audits.jsonl");
        match File::open(&audits_path) {
            Err(e) => {
                log::warn!("{}: {e}; group-size histogram skipped", audits_path.display());
                skipped.push(format!("group_sizes:{label}"));
            }
            Ok(f) => {
                let audits = parse_audits(BufReader::new(f)).map_err(|e| io_err(&audits_path, e))?;
                let hist = group_size_histogram(&audits);
                if hist.is_empty() {
                    skipped.push(format!("group_sizes:{label}"));
                } else {
                    for (z, n) in &hist {
                        hist_csv.push_str(&format!("{},{z},{n}\n", csv_field(&label)));
                    }
                    let bars: Vec<(String, f64)> = hist.iter().map(|(z, n)| (z.to_string(), *n as f64)).collect();
                    let path = out.join(format!("group_sizes_{i}.svg"));
                    write(&path, svg::bar_chart(&format!("Group sizes: {label}"), "largest subject group Z", "minibatches", &bars))?;
                    files.push(path);
                }
            }
        }

        let summary_path = dir.join("summary.json");
        if let Ok(text) = std::fs::read_to_string(&summary_path) {
            let summary: RunSummary = serde_json::from_str(&text).map_err(|e| io_err(&summary_path, e))?;
            if let Some(b) = summary.bounds {
                for (name, v) in [("local_group_dp", b.local_group_dp), ("user_ldp", b.user_ldp), ("higradavg_dp", b.higradavg_dp)] {
                    bounds_csv.push_str(&format!("{},{name},{},{},{},{}\n", csv_field(&label), v.optimization, v.noise, v.generalization, v.total));
                    bound_rows.push(vec![label.clone(), name.to_string(), format!("{:.4e}", v.optimization), format!("{:.4e}", v.noise), format!("{:.4e}", v.generalization), format!("{:.4e}", v.total)]);
                }
            }
        }
    }

    let mut emit = |name: &str, body: String| -> Result<(), CliError> {
        let p = out.join(name);
        write(&p, body)?;
        files.push(p);
        Ok(())
    };
    emit("accuracy.csv", acc_csv)?;
    emit("accuracy.svg", svg::line_chart("Test accuracy", "round", "accuracy", &acc_series))?;
    emit("loss.csv", loss_csv)?;
    emit("loss.svg", svg::line_chart("Test loss", "round", "loss", &loss_series))?;
    emit("group_sizes.csv", hist_csv)?;
    if bound_rows.is_empty() {
        skipped.push("bounds".into());
    } else {
        emit("bounds.csv", bounds_csv)?;
        let header: Vec<String> = ["run", "bound", "optimization", "noise", "generalization", "total"].iter().map(|s| s.to_string()).collect();
        emit("bounds.svg", svg::table("Excess population loss bounds", &header, &bound_rows))?;
    }
    files.sort();
    Ok(PlotOutput { files, skipped })
}
