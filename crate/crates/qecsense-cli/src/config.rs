//! JSON run-configuration schema: parsing, deep-merged variants and sweeps,
//! and resolution into executable protocol/schedule pairs.
//!
//! A configuration file describes one base run. `variants` deep-merge labeled
//! overrides onto the base; every variant keeps the base master seed, so the
//! ensembles of different variants consume identical random streams and their
//! differences isolate exactly the overridden settings. `sweep` instead
//! repeats the base once per parameter value with a per-point derived seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use qecsense::engine::Schedule;
use qecsense::noise::mix_seed;
use qecsense::protocols::{build_protocol, ProtocolParams, ProtocolSpec};

use crate::CliError;

/// Top-level configuration as written in a preset file.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// Free-text description, echoed into the summary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub protocol: String,
    #[serde(default)]
    pub params: ParamsConfig,
    pub schedule: ScheduleConfig,
    pub n_traj: usize,
    pub master_seed: u64,
    /// Observable series written to the CSV. Defaults to
    /// `["fidelity", "survival", "code_pop", "signal", "ideal_signal"]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Vec<String>>,
    /// Labeled overrides deep-merged onto the base configuration.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variants: Vec<VariantConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitConfig>,
}

/// Protocol parameters; unset fields keep the library defaults.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_range: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

impl ParamsConfig {
    pub fn to_protocol_params(&self) -> ProtocolParams {
        let mut p = ProtocolParams::default();
        if let Some(v) = self.g {
            p.g = v;
        }
        if let Some(v) = self.gamma {
            p.gamma = v;
        }
        if let Some(v) = self.omega {
            p.omega = v;
        }
        if let Some(v) = self.delta {
            p.delta = v;
        }
        if let Some(v) = self.nu {
            p.nu = v;
        }
        if let Some(v) = self.eta {
            p.eta = v;
        }
        if let Some(v) = self.omega_g {
            p.omega_g = v;
        }
        p.noise_range = self.noise_range;
        p.extra = self.extra.clone();
        p
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub dt: f64,
    pub total_time: f64,
    pub samples: SamplesConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ec_interval: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dd_period: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_resample: Option<f64>,
    #[serde(default)]
    pub apply_ramsey: bool,
}

impl ScheduleConfig {
    pub fn to_schedule(&self) -> Result<Schedule, CliError> {
        Ok(Schedule {
            dt: self.dt,
            total_time: self.total_time,
            sample_times: self.samples.resolve(self.dt, self.total_time)?,
            ec_interval: self.ec_interval,
            dd_period: self.dd_period,
            noise_resample: self.noise_resample,
            apply_ramsey: self.apply_ramsey,
        })
    }
}

/// Sample-time specification. Times are snapped to the step grid by the
/// engine; the CSV reports the snapped times.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplesConfig {
    /// Explicit sample times.
    Times(Vec<f64>),
    /// Every k-th grid boundary, starting at t = 0.
    EverySteps(usize),
    /// `count` samples at t = j·of for j = 1…count.
    Multiples { count: usize, of: f64 },
}

impl SamplesConfig {
    pub fn resolve(&self, dt: f64, total_time: f64) -> Result<Vec<f64>, CliError> {
        match *self {
            SamplesConfig::Times(ref v) => {
                if v.is_empty() {
                    return Err(CliError::validation("samples.times is empty"));
                }
                Ok(v.clone())
            }
            SamplesConfig::EverySteps(k) => {
                if k == 0 {
                    return Err(CliError::validation("samples.every_steps must be >= 1"));
                }
                if !(dt > 0.0) || !(total_time >= 0.0) {
                    return Err(CliError::validation(
                        "samples.every_steps needs a positive dt and total_time",
                    ));
                }
                let n = (total_time / dt).round() as usize;
                Ok((0..=n).step_by(k).map(|i| i as f64 * dt).collect())
            }
            SamplesConfig::Multiples { count, of } => {
                if count == 0 {
                    return Err(CliError::validation("samples.multiples.count must be >= 1"));
                }
                Ok((1..=count).map(|j| j as f64 * of).collect())
            }
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VariantConfig {
    pub label: String,
    /// Partial configuration deep-merged onto the base. Objects merge
    /// key-by-key, everything else (including `null`) replaces the base
    /// value, so `"ec_interval": null` switches correction off.
    #[serde(default)]
    pub overrides: Value,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Dotted path of the swept value, e.g. `params.gamma` or
    /// `params.extra.epsilon`.
    pub parameter: String,
    pub values: Vec<f64>,
    /// Optional extra override object per sweep value (same length as
    /// `values`), for settings that must track the swept parameter, such as
    /// the total time of a run whose decay time moves with it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_value_overrides: Option<Vec<Value>>,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    Maxima,
    #[default]
    PeakToPeak,
}

fn default_t_max_factor() -> f64 {
    10.0
}

/// Post-processing attached to each run; results land in `summary.json` and,
/// for sweeps, in the aggregate `sweep.csv`.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FitConfig {
    /// Exponential envelope fit of the signal observable; `period` defaults
    /// to the protocol's ideal-signal period.
    CoherenceTime {
        #[serde(default)]
        mode: FitMode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        period: Option<f64>,
    },
    /// Shot-noise sensitivity table from the run parameters: the optimal
    /// probe time and uncertainty of the uncorrected sensor, and the
    /// decoherence-free uncertainty at probe time T1 for comparison.
    Sensitivity {
        n_probes: f64,
        total_time: f64,
        /// Probe-time search window in units of T1 = 1/gamma.
        #[serde(default = "default_t_max_factor")]
        t_max_factor: f64,
    },
}

/// Observable series that can be written to the CSV.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OutputKind {
    Fidelity,
    Survival,
    CodePop,
    UtilityPop,
    /// The protocol's declared signal observable.
    Signal,
    /// Closed-form reference signal (stderr column is zero).
    IdealSignal,
    /// Population of one code state, labeled `code_state:<name>`.
    CodeState(usize, String),
}

impl OutputKind {
    pub fn column_name(&self) -> String {
        match self {
            OutputKind::Fidelity => "fidelity".into(),
            OutputKind::Survival => "survival".into(),
            OutputKind::CodePop => "code_pop".into(),
            OutputKind::UtilityPop => "utility_pop".into(),
            OutputKind::Signal => "signal".into(),
            OutputKind::IdealSignal => "ideal_signal".into(),
            OutputKind::CodeState(_, name) => format!("code_state:{name}"),
        }
    }
}

fn resolve_outputs(names: &Option<Vec<String>>, spec: &ProtocolSpec) -> Result<Vec<OutputKind>, CliError> {
    let default = ["fidelity", "survival", "code_pop", "signal", "ideal_signal"];
    let names: Vec<String> = match names {
        Some(v) if v.is_empty() => {
            return Err(CliError::validation("outputs is empty; omit it for the default set"))
        }
        Some(v) => v.clone(),
        None => default.iter().map(|s| s.to_string()).collect(),
    };
    let mut out = Vec::new();
    for name in &names {
        match name.as_str() {
            "fidelity" => out.push(OutputKind::Fidelity),
            "survival" => out.push(OutputKind::Survival),
            "code_pop" => out.push(OutputKind::CodePop),
            "utility_pop" => out.push(OutputKind::UtilityPop),
            "signal" => out.push(OutputKind::Signal),
            "ideal_signal" => out.push(OutputKind::IdealSignal),
            "code_states" => {
                for (w, (state_name, _)) in spec.code.states.iter().enumerate() {
                    out.push(OutputKind::CodeState(w, state_name.clone()));
                }
            }
            other => {
                return Err(CliError::validation(format!(
                    "unknown output '{other}'; valid: fidelity, survival, code_pop, \
                     utility_pop, signal, ideal_signal, code_states"
                )))
            }
        }
    }
    Ok(out)
}

/// One executable unit: a fully merged configuration with its built
/// protocol and schedule.
pub struct ResolvedRun {
    pub label: String,
    pub config: FileConfig,
    pub spec: ProtocolSpec,
    pub schedule: Schedule,
    pub outputs: Vec<OutputKind>,
    pub master_seed: u64,
    /// Set for sweep points: (parameter path, value).
    pub sweep_point: Option<(String, f64)>,
}

/// Parsed file plus its raw JSON for merging.
pub struct LoadedConfig {
    pub file: FileConfig,
    raw: Value,
    pub display_path: String,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, CliError> {
    let display_path = path.display().to_string();
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("{display_path}: {e}")))?;
    let file: FileConfig = serde_json::from_str(&text).map_err(|e| {
        CliError::validation(format!("{display_path}:{}:{}: {e}", e.line(), e.column()))
    })?;
    let raw: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("{display_path}: {e}")))?;
    validate_file(&file, &display_path)?;
    Ok(LoadedConfig {
        file,
        raw,
        display_path,
    })
}

fn validate_file(file: &FileConfig, path: &str) -> Result<(), CliError> {
    if file.n_traj == 0 {
        return Err(CliError::validation(format!("{path}: n_traj must be >= 1")));
    }
    if !file.variants.is_empty() && file.sweep.is_some() {
        return Err(CliError::validation(format!(
            "{path}: variants and sweep cannot be combined; split the file"
        )));
    }
    let mut labels = std::collections::BTreeSet::new();
    for v in &file.variants {
        if v.label.is_empty() {
            return Err(CliError::validation(format!("{path}: variant label is empty")));
        }
        if !labels.insert(&v.label) {
            return Err(CliError::validation(format!(
                "{path}: duplicate variant label '{}'",
                v.label
            )));
        }
        check_override_keys(&v.overrides, &format!("variant '{}'", v.label))?;
    }
    if let Some(sweep) = &file.sweep {
        if sweep.values.is_empty() {
            return Err(CliError::validation(format!("{path}: sweep.values is empty")));
        }
        if let Some(pvo) = &sweep.per_value_overrides {
            if pvo.len() != sweep.values.len() {
                return Err(CliError::validation(format!(
                    "{path}: sweep.per_value_overrides has {} entries for {} values",
                    pvo.len(),
                    sweep.values.len()
                )));
            }
            for (i, o) in pvo.iter().enumerate() {
                check_override_keys(o, &format!("sweep override {i}"))?;
            }
        }
        parse_sweep_path(&sweep.parameter)?;
    }
    Ok(())
}

/// Overrides may touch anything except the structural blocks themselves.
fn check_override_keys(over: &Value, what: &str) -> Result<(), CliError> {
    if over.is_null() {
        return Ok(());
    }
    let obj = over.as_object().ok_or_else(|| {
        CliError::validation(format!("{what}: overrides must be a JSON object"))
    })?;
    for key in ["variants", "sweep", "fit"] {
        if obj.contains_key(key) {
            return Err(CliError::validation(format!(
                "{what}: overrides cannot redefine '{key}'"
            )));
        }
    }
    Ok(())
}

fn parse_sweep_path(path: &str) -> Result<Vec<&str>, CliError> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::validation(format!(
            "sweep.parameter '{path}' is not a dotted key path"
        )));
    }
    match parts[0] {
        "params" | "schedule" => Ok(parts),
        _ => Err(CliError::validation(format!(
            "sweep.parameter '{path}' must start with 'params' or 'schedule'"
        ))),
    }
}

/// Objects merge key-by-key; any other value (including null) replaces.
fn deep_merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => deep_merge(slot, v),
                    Some(slot) => *slot = v.clone(),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

fn set_path(root: &mut Value, parts: &[&str], value: Value) {
    let mut slot = root;
    for part in &parts[..parts.len() - 1] {
        if !slot.is_object() {
            *slot = Value::Object(Default::default());
        }
        slot = slot
            .as_object_mut()
            .unwrap()
            .entry(part.to_string())
            .or_insert(Value::Object(Default::default()));
    }
    if !slot.is_object() {
        *slot = Value::Object(Default::default());
    }
    slot.as_object_mut()
        .unwrap()
        .insert(parts[parts.len() - 1].to_string(), value);
}

/// Base value with the structural blocks stripped, ready for merging.
fn base_value(raw: &Value) -> Value {
    let mut v = raw.clone();
    if let Some(obj) = v.as_object_mut() {
        obj.remove("variants");
        obj.remove("sweep");
    }
    v
}

fn config_from_value(value: Value, what: &str) -> Result<FileConfig, CliError> {
    let file: FileConfig = serde_json::from_value(value)
        .map_err(|e| CliError::validation(format!("{what}: {e}")))?;
    if file.n_traj == 0 {
        return Err(CliError::validation(format!("{what}: n_traj must be >= 1")));
    }
    Ok(file)
}

fn build_run(
    label: &str,
    config: FileConfig,
    seed_override: Option<u64>,
    seed_mix: Option<u64>,
    sweep_point: Option<(String, f64)>,
) -> Result<ResolvedRun, CliError> {
    let params = config.params.to_protocol_params();
    let spec = build_protocol(&config.protocol, &params).map_err(CliError::from_qec)?;
    let schedule = config.schedule.to_schedule()?;
    let outputs = resolve_outputs(&config.outputs, &spec)?;
    let mut master_seed = seed_override.unwrap_or(config.master_seed);
    if let Some(i) = seed_mix {
        master_seed = mix_seed(master_seed, i);
    }
    Ok(ResolvedRun {
        label: label.to_string(),
        config,
        spec,
        schedule,
        outputs,
        master_seed,
        sweep_point,
    })
}

/// Resolve a `run` invocation: the base run alone, or one run per variant.
/// Variants share the base master seed (common random streams).
pub fn resolve_runs(
    loaded: &LoadedConfig,
    seed_override: Option<u64>,
) -> Result<Vec<ResolvedRun>, CliError> {
    if loaded.file.sweep.is_some() {
        return Err(CliError::validation(format!(
            "{}: configuration has a sweep block; use the `sweep` command",
            loaded.display_path
        )));
    }
    let base = base_value(&loaded.raw);
    if loaded.file.variants.is_empty() {
        let config = config_from_value(base, &loaded.display_path)?;
        return Ok(vec![build_run("base", config, seed_override, None, None)?]);
    }
    let mut runs = Vec::new();
    for variant in &loaded.file.variants {
        let mut merged = base.clone();
        deep_merge(&mut merged, &variant.overrides);
        let what = format!("{} (variant '{}')", loaded.display_path, variant.label);
        let config = config_from_value(merged, &what)?;
        runs.push(build_run(&variant.label, config, seed_override, None, None)?);
    }
    Ok(runs)
}

/// Resolve a `sweep` invocation: one run per value of the swept parameter,
/// with per-point seeds derived from the base master seed.
pub fn resolve_sweep(
    loaded: &LoadedConfig,
    seed_override: Option<u64>,
) -> Result<Vec<ResolvedRun>, CliError> {
    let sweep = loaded.file.sweep.as_ref().ok_or_else(|| {
        CliError::validation(format!(
            "{}: configuration has no sweep block; use the `run` command",
            loaded.display_path
        ))
    })?;
    let parts = parse_sweep_path(&sweep.parameter)?;
    let base = base_value(&loaded.raw);
    let mut runs = Vec::new();
    for (i, &value) in sweep.values.iter().enumerate() {
        let mut merged = base.clone();
        set_path(&mut merged, &parts, serde_json::json!(value));
        if let Some(pvo) = &sweep.per_value_overrides {
            deep_merge(&mut merged, &pvo[i]);
        }
        let mut label = String::new();
        let _ = write!(label, "{}={value}", sweep.parameter);
        let what = format!("{} (sweep point {label})", loaded.display_path);
        let config = config_from_value(merged, &what)?;
        runs.push(build_run(
            &label,
            config,
            seed_override,
            Some(i as u64),
            Some((sweep.parameter.clone(), value)),
        )?);
    }
    Ok(runs)
}
