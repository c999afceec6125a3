//! Stage drivers behind the command-line tool. Every stage reads and writes
//! the shared on-disk layout under the output directory:
//!
//! ```text
//! out/roster.csv  out/raw_completions.ndjson  out/sim_dataset.csv
//! out/provenance.csv  out/real_dataset.csv  out/prototype/*
//! out/fits/*.json  out/report.txt  out/report.json
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factor::{
    fit_cfa, parse_model_spec, Estimator, FactorError, FitOptions, FitResult, MeasurementModel,
};
use crate::gateway::{
    read_audit_log, AuditLog, CompletionBackend, CompletionRequest, Gateway, GatewayError, HttpBackend, HttpConfig,
    MockBackend, MockProfile, RetryPolicy, SamplingConfig,
};
use crate::ingest::{
    assemble, load_real_csv, ColumnMap, IngestError, LoadOptions, ResponseMatrix, ScoreMethod, Source,
};
use crate::invariance::{
    gender_groups, hypothesis_summary, run_ladder, source_groups, AbsoluteFitGate, DeltaCriteria, HypothesisRules,
    HypothesisSummary, InvarianceError, LadderConfig, LadderResult,
};
use crate::prompt::{render_ensemble, PromptError, PromptTemplate, ScaleDefinition};
use crate::prototyper::{
    compute_cvi, cvi_screen, prototype_scale, read_ratings, CviReport, CviRule, PrototypeConfig, PrototypeError,
    ScalePrototype,
};
use crate::sampling::{
    bracket_of, default_brackets, expand_quota, personas_matching, read_roster, write_roster, Gender, Persona,
    QuotaTable, SamplingError,
};
use crate::seed::{derive_seed, sha256_hex};
use crate::stats::{
    run_battery, BatteryConfig, Center, ComparisonReport, MismatchPolicy, MwuMethod, PairingDesign, StatsError,
    StrataSpec, Subscale,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("convergence: {0}")]
    Convergence(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("io: {0}")]
    Io(String),
}

impl PipelineError {
    /// 2 config, 3 data, 4 convergence, 5 infeasible, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) => 3,
            PipelineError::Convergence(_) => 4,
            PipelineError::Infeasible(_) => 5,
            PipelineError::Io(_) => 1,
        }
    }

    /// Prefixes the message with a stage or hypothesis label.
    pub fn labeled(self, label: &str) -> Self {
        match self {
            PipelineError::Config(m) => PipelineError::Config(format!("{label}: {m}")),
            PipelineError::Data(m) => PipelineError::Data(format!("{label}: {m}")),
            PipelineError::Convergence(m) => PipelineError::Convergence(format!("{label}: {m}")),
            PipelineError::Infeasible(m) => PipelineError::Infeasible(format!("{label}: {m}")),
            PipelineError::Io(m) => PipelineError::Io(format!("{label}: {m}")),
        }
    }
}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        PipelineError::Io(e.to_string())
    }
}

impl From<IngestError> for PipelineError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io(e) => PipelineError::Io(e.to_string()),
            e => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<FactorError> for PipelineError {
    fn from(e: FactorError) -> Self {
        match e {
            FactorError::InvalidModel(_) | FactorError::Spec { .. } => PipelineError::Config(e.to_string()),
            e => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<StatsError> for PipelineError {
    fn from(e: StatsError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<InvarianceError> for PipelineError {
    fn from(e: InvarianceError) -> Self {
        match e {
            InvarianceError::Factor(e) => e.into(),
            InvarianceError::Data(e) => e.into(),
            e => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<PrototypeError> for PipelineError {
    fn from(e: PrototypeError) -> Self {
        match e {
            PrototypeError::NonConvergent { .. } => PipelineError::Convergence(e.to_string()),
            PrototypeError::Infeasible(_) => PipelineError::Infeasible(e.to_string()),
            PrototypeError::Factor(e) => e.into(),
            PrototypeError::Data(e) => e.into(),
            e => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<SamplingError> for PipelineError {
    fn from(e: SamplingError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<PromptError> for PipelineError {
    fn from(e: PromptError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<GatewayError> for PipelineError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Configuration(m) => PipelineError::Config(m),
            GatewayError::Audit(m) => PipelineError::Io(m),
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

/// Shorthand for a clustered mock respondent model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockClusters {
    pub sizes: Vec<usize>,
    pub loading: f64,
    pub noise_items: usize,
    pub factor_correlation: f64,
    pub template_noise: f64,
    pub malformed_rate: f64,
}

impl Default for MockClusters {
    fn default() -> Self {
        Self {
            sizes: vec![3, 3, 3],
            loading: 0.7,
            noise_items: 0,
            factor_correlation: 0.3,
            template_noise: 0.3,
            malformed_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub http: Option<HttpConfig>,
    /// Full mock profile; takes precedence over `clusters`.
    pub mock: Option<MockProfile>,
    pub clusters: Option<MockClusters>,
    pub max_in_flight: usize,
    pub max_retries: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            http: None,
            mock: None,
            clusters: None,
            max_in_flight: 8,
            max_retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryOptions {
    pub bootstrap_b: usize,
    pub levene_center: Center,
    /// Defaults to paired when simulated personas mirror real ids.
    pub pairing: Option<PairingDesign>,
    pub mismatch: MismatchPolicy,
    pub mwu_method: MwuMethod,
    pub score: ScoreMethod,
    pub alpha: f64,
    pub by_ethnicity: bool,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        Self {
            bootstrap_b: 5000,
            levene_center: Center::Median,
            pairing: None,
            mismatch: MismatchPolicy::Error,
            mwu_method: MwuMethod::Auto,
            score: ScoreMethod::Mean,
            alpha: 0.05,
            by_ethnicity: true,
        }
    }
}

/// Run configuration. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub scale: PathBuf,
    pub quota: Option<PathBuf>,
    pub real_data: Option<PathBuf>,
    pub real_columns: Option<ColumnMap>,
    pub drop_duplicate_ids: bool,
    /// One persona per real respondent, sharing its id.
    pub match_real_ids: bool,
    /// Three template files; the built-in ensemble when empty.
    pub templates: Vec<PathBuf>,
    /// Model specification; falls back to `out/prototype/model.txt`.
    pub model: Option<PathBuf>,
    pub ratings: Option<PathBuf>,
    pub cvi_rule: CviRule,
    pub out_dir: PathBuf,
    pub estimator: Option<Estimator>,
    pub backend: BackendConfig,
    pub sampling: SamplingConfig,
    pub battery: BatteryOptions,
    pub prototype: PrototypeConfig,
    pub gate: AbsoluteFitGate,
    pub criteria: DeltaCriteria,
    pub icc_substantial: f64,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scale: PathBuf::from("scale.toml"),
            quota: None,
            real_data: None,
            real_columns: None,
            drop_duplicate_ids: false,
            match_real_ids: false,
            templates: Vec::new(),
            model: None,
            ratings: None,
            cvi_rule: CviRule::Lynn,
            out_dir: PathBuf::from("out"),
            estimator: None,
            backend: BackendConfig::default(),
            sampling: SamplingConfig::default(),
            battery: BatteryOptions::default(),
            prototype: PrototypeConfig::default(),
            gate: AbsoluteFitGate::default(),
            criteria: DeltaCriteria::default(),
            icc_substantial: HypothesisRules::default().icc_substantial,
            base_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gate.is_consistent() {
            return Err(PipelineError::Config("good fit thresholds must be at least as strict as acceptable ones".into()));
        }
        if self.backend.kind == BackendKind::Http && self.backend.http.is_none() {
            return Err(PipelineError::Config("backend kind http needs a [backend.http] section".into()));
        }
        if !self.templates.is_empty() && self.templates.len() != 3 {
            return Err(PipelineError::Config(format!("expected 3 templates, got {}", self.templates.len())));
        }
        if self.battery.bootstrap_b == 0 {
            return Err(PipelineError::Config("bootstrap_b must be positive".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out(&self) -> PathBuf {
        self.resolve(&self.out_dir)
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out().join(name)
    }

    /// SHA-256 of the canonical JSON form, ignoring the output location.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }

    pub fn estimator(&self, spec: Option<Estimator>) -> Estimator {
        self.estimator.or(spec).unwrap_or(Estimator::Mlr)
    }

    fn ladder_config(&self, estimator: Estimator) -> LadderConfig {
        LadderConfig {
            fit: FitOptions::default().with_estimator(estimator),
            gate: self.gate,
            criteria: self.criteria,
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Io(e.to_string()))?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

fn matrix_csv(m: &ResponseMatrix) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    m.write_csv(&mut buf)?;
    Ok(buf)
}

pub fn load_scale(cfg: &RunConfig) -> Result<ScaleDefinition> {
    let path = cfg.resolve(&cfg.scale);
    let text = fs::read_to_string(&path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    Ok(ScaleDefinition::from_toml(&text)?)
}

pub fn load_templates(cfg: &RunConfig) -> Result<Vec<PromptTemplate>> {
    if cfg.templates.is_empty() {
        return Ok(PromptTemplate::defaults());
    }
    cfg.templates
        .iter()
        .zip(1u8..)
        .map(|(p, id)| {
            let path = cfg.resolve(p);
            let f = fs::File::open(&path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
            Ok(PromptTemplate::read_from(id, f)?)
        })
        .collect()
}

/// The real dataset named in the config.
pub fn load_real(cfg: &RunConfig, scale: &ScaleDefinition) -> Result<ResponseMatrix> {
    let path = cfg
        .real_data
        .as_ref()
        .ok_or_else(|| PipelineError::Config("no real_data configured".into()))?;
    let map = cfg.real_columns.clone().unwrap_or_else(|| ColumnMap::standard(scale));
    let options = LoadOptions {
        drop_duplicates: cfg.drop_duplicate_ids,
    };
    let report = load_real_csv(&cfg.resolve(path), scale, &map, &options)?;
    if report.duplicates_removed > 0 {
        log::warn!("removed {} rows with duplicated ids", report.duplicates_removed);
    }
    if report.invalid_cells > 0 {
        log::warn!("{} invalid cells read as missing", report.invalid_cells);
    }
    Ok(report.matrix)
}

pub fn read_dataset(path: &Path, scale: &ScaleDefinition) -> Result<ResponseMatrix> {
    let f = fs::File::open(path).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
    Ok(ResponseMatrix::read_csv(f, scale)?)
}

/// Writes `out/real_dataset.csv` in the standard column layout.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<ResponseMatrix> {
    let scale = load_scale(cfg)?;
    let real = load_real(cfg, &scale)?;
    write_file(&cfg.out_path("real_dataset.csv"), &matrix_csv(&real)?)?;
    Ok(real)
}

/// Builds the persona roster and writes `out/roster.csv`.
pub fn cmd_quota(cfg: &RunConfig) -> Result<Vec<Persona>> {
    let roster = if cfg.match_real_ids {
        let scale = load_scale(cfg)?;
        let real = load_real(cfg, &scale)?;
        let records = real
            .rows
            .iter()
            .map(|r| {
                let age = r.age.ok_or_else(|| PipelineError::Data(format!("respondent {} has no age", r.id)))?;
                let gender = r.gender.unwrap_or(Gender::Other);
                Ok((r.id.clone(), age, gender, r.ethnicity))
            })
            .collect::<Result<Vec<_>>>()?;
        personas_matching(&records, "en-GB")
    } else {
        let table = match &cfg.quota {
            Some(p) => {
                let path = cfg.resolve(p);
                let f = fs::File::open(&path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
                QuotaTable::read_csv(f)?
            }
            None => return Err(PipelineError::Config("no quota file configured and match_real_ids is off".into())),
        };
        expand_quota(&table, derive_seed(cfg.seed, "quota", 0))?
    };
    let mut buf = Vec::new();
    write_roster(&roster, &mut buf)?;
    write_file(&cfg.out_path("roster.csv"), &buf)?;
    Ok(roster)
}

fn mock_profile(cfg: &RunConfig, scale: &ScaleDefinition) -> Result<MockProfile> {
    let profile = if let Some(p) = &cfg.backend.mock {
        p.clone()
    } else if let Some(c) = &cfg.backend.clusters {
        let mut p = MockProfile::clustered(scale.likert_min, scale.likert_max, &c.sizes, c.loading, c.noise_items);
        p.factor_correlation = c.factor_correlation;
        p.template_noise = c.template_noise;
        p.malformed_rate = c.malformed_rate;
        p
    } else {
        MockProfile::single_factor(scale.n_items(), scale.likert_min, scale.likert_max, 0.7)
    };
    if profile.n_items() != scale.n_items() {
        return Err(PipelineError::Config(format!(
            "mock profile has {} items, scale has {}",
            profile.n_items(),
            scale.n_items()
        )));
    }
    Ok(profile)
}

fn backend(cfg: &RunConfig, scale: &ScaleDefinition, roster: &[Persona]) -> Result<(Arc<dyn CompletionBackend>, RetryPolicy)> {
    match cfg.backend.kind {
        BackendKind::Mock => {
            let b = MockBackend::new(mock_profile(cfg, scale)?, roster, derive_seed(cfg.seed, "mock", 0));
            let retry = RetryPolicy {
                max_retries: cfg.backend.max_retries,
                ..RetryPolicy::immediate()
            };
            Ok((Arc::new(b), retry))
        }
        BackendKind::Http => {
            let http = cfg.backend.http.as_ref().expect("validated");
            let retry = RetryPolicy {
                max_retries: cfg.backend.max_retries,
                ..RetryPolicy::default()
            };
            Ok((Arc::new(HttpBackend::from_config(http)?), retry))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOutcome {
    pub matrix: ResponseMatrix,
    pub requested: usize,
    pub resumed: usize,
    pub gap_rate: f64,
    pub all_invalid: Vec<String>,
}

/// Roster → prompts → completions → parsed ensemble dataset. Completions
/// already in `out/raw_completions.ndjson` are reused, so an interrupted run
/// resumes where it stopped.
pub fn cmd_generate(cfg: &RunConfig) -> Result<GenerateOutcome> {
    let scale = load_scale(cfg)?;
    let templates = load_templates(cfg)?;
    let roster = cmd_quota(cfg)?;
    let log_path = cfg.out_path("raw_completions.ndjson");
    let done: Vec<_> = read_audit_log(&log_path)?.iter().map(|r| r.to_result()).collect();
    let have: HashSet<(String, u8)> = done.iter().map(|r| (r.persona_id.clone(), r.template_id)).collect();
    let mut requests = Vec::new();
    for p in &roster {
        for prompt in render_ensemble(p, &scale, &templates)? {
            let req = CompletionRequest::from_prompt(&prompt, &cfg.sampling);
            if !have.contains(&req.key()) {
                requests.push(req);
            }
        }
    }
    let resumed = done.len();
    let (backend, retry) = backend(cfg, &scale, &roster)?;
    let gateway = Gateway::new(backend, retry);
    let audit = AuditLog::open_append(&log_path, &cfg.sampling.model_id)?;
    let fresh = gateway.run_batch_with(&requests, cfg.backend.max_in_flight.max(1), &|r| audit.append(r))?;
    let roster_ids: HashSet<&str> = roster.iter().map(|p| p.id.as_str()).collect();
    let results: Vec<_> = done
        .into_iter()
        .filter(|r| roster_ids.contains(r.persona_id.as_str()))
        .chain(fresh)
        .collect();
    let assembled = assemble(&results, &roster, &scale).map_err(|e| PipelineError::from(e).labeled("generate"))?;
    for id in &assembled.all_invalid {
        log::warn!("persona {id}: all three completions invalid");
    }
    write_file(&cfg.out_path("sim_dataset.csv"), &matrix_csv(&assembled.matrix)?)?;
    let mut prov = Vec::new();
    assembled.provenance.write_csv(&mut prov, scale.n_items())?;
    write_file(&cfg.out_path("provenance.csv"), &prov)?;
    Ok(GenerateOutcome {
        requested: requests.len(),
        resumed,
        gap_rate: assembled.provenance.gap_rate(),
        all_invalid: assembled.all_invalid,
        matrix: assembled.matrix,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeArtifacts {
    pub config_hash: String,
    pub seed: u64,
    pub cvi: Option<CviReport>,
    pub screened_columns: Vec<usize>,
    pub prototype: ScalePrototype,
}

/// Content-validity screen (when ratings are configured) and EFA pruning.
/// Writes `out/prototype/{prototype.json,scale.toml,model.txt,pruning_log.txt}`.
pub fn cmd_prototype(cfg: &RunConfig, sim: &ResponseMatrix) -> Result<PrototypeArtifacts> {
    let scale = &sim.scale;
    let (cvi, columns) = match &cfg.ratings {
        Some(p) => {
            let path = cfg.resolve(p);
            let f = fs::File::open(&path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
            let report = compute_cvi(&read_ratings(f)?, cfg.cvi_rule)?;
            let cols = cvi_screen(scale, &report)?;
            (Some(report), cols)
        }
        None => (None, (0..scale.n_items()).collect()),
    };
    let pcfg = PrototypeConfig {
        seed: derive_seed(cfg.seed, "prototype", 0),
        ..cfg.prototype.clone()
    };
    let prototype = prototype_scale(sim, &columns, &pcfg)?;
    let dir = cfg.out().join("prototype");
    let draft_columns = scale.item_columns();
    write_file(&dir.join("scale.toml"), prototype.scale_definition(scale).to_toml().as_bytes())?;
    let spec = prototype.measurement_model().to_spec_string(&draft_columns, cfg.estimator);
    write_file(&dir.join("model.txt"), spec.as_bytes())?;
    write_file(&dir.join("pruning_log.txt"), prototype.pruning_log().as_bytes())?;
    let artifacts = PrototypeArtifacts {
        config_hash: cfg.config_hash(),
        seed: cfg.seed,
        cvi,
        screened_columns: columns,
        prototype,
    };
    write_json(&dir.join("prototype.json"), &artifacts)?;
    Ok(artifacts)
}

/// Model from the configured spec file, or the prototype's when none is set.
pub fn load_model(cfg: &RunConfig, scale: &ScaleDefinition) -> Result<(MeasurementModel, Option<Estimator>)> {
    let path = match &cfg.model {
        Some(p) => cfg.resolve(p),
        None => cfg.out().join("prototype").join("model.txt"),
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| PipelineError::Config(format!("model {}: {e}", path.display())))?;
    let spec = parse_model_spec(&text, &scale.item_columns())?;
    spec.model.validate(Some(scale.n_items()))?;
    Ok((spec.model, spec.estimator))
}

/// Subscales for the battery: one per factor.
pub fn subscales(model: &MeasurementModel) -> Vec<Subscale> {
    model
        .factors
        .iter()
        .map(|f| Subscale {
            name: f.name.clone(),
            items: f.items.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact<T> {
    pub config_hash: String,
    pub seed: u64,
    pub result: T,
}

pub fn cmd_cfa(cfg: &RunConfig, data: &ResponseMatrix, name: &str) -> Result<FitResult> {
    let (model, spec_est) = load_model(cfg, &data.scale)?;
    let est = cfg.estimator(spec_est);
    let m = data.complete_cases().0.data()?;
    let fit = fit_cfa(&m, &model, &FitOptions::default().with_estimator(est))?;
    write_json(
        &cfg.out().join("fits").join(format!("{name}.json")),
        &FitArtifact {
            config_hash: cfg.config_hash(),
            seed: cfg.seed,
            result: &fit,
        },
    )?;
    if !fit.converged {
        return Err(PipelineError::Convergence(format!("CFA did not converge after {} iterations", fit.iterations)));
    }
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    Source,
    Gender,
}

pub fn cmd_invariance(
    cfg: &RunConfig,
    real: &ResponseMatrix,
    sim: &ResponseMatrix,
    grouping: Grouping,
) -> Result<LadderResult> {
    let (model, spec_est) = load_model(cfg, &sim.scale)?;
    let lc = cfg.ladder_config(cfg.estimator(spec_est));
    let (groups, label, file) = match grouping {
        Grouping::Source => (source_groups(real, sim), "source", "invariance_source.json"),
        Grouping::Gender => (gender_groups(sim), "gender", "invariance_gender.json"),
    };
    let ladder = run_ladder(&groups, &model, label, &lc)?;
    write_json(
        &cfg.out().join("fits").join(file),
        &FitArtifact {
            config_hash: cfg.config_hash(),
            seed: cfg.seed,
            result: &ladder,
        },
    )?;
    Ok(ladder)
}

pub fn battery_config(cfg: &RunConfig) -> BatteryConfig {
    let b = &cfg.battery;
    BatteryConfig {
        pairing: b.pairing.unwrap_or(if cfg.match_real_ids {
            PairingDesign::PairedExact
        } else {
            PairingDesign::BootstrapStratified
        }),
        strata: StrataSpec {
            by_ethnicity: b.by_ethnicity,
            ..StrataSpec::default()
        },
        bootstrap_b: b.bootstrap_b,
        seed: derive_seed(cfg.seed, "battery", 0),
        levene_center: b.levene_center,
        mwu_method: b.mwu_method,
        mismatch: b.mismatch,
        score: b.score,
        alpha: b.alpha,
    }
}

pub fn cmd_compare(cfg: &RunConfig, real: &ResponseMatrix, sim: &ResponseMatrix) -> Result<ComparisonReport> {
    let (model, _) = load_model(cfg, &sim.scale)?;
    let mut report = run_battery(real, sim, &subscales(&model), &battery_config(cfg))?;
    for s in &mut report.subscales {
        if let Some(sp) = &mut s.spearman {
            // resample vectors are large and re-derivable from the seed
            sp.resamples.clear();
        }
    }
    write_json(
        &cfg.out().join("fits").join("battery.json"),
        &FitArtifact {
            config_hash: cfg.config_hash(),
            seed: cfg.seed,
            result: &report,
        },
    )?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicRow {
    pub category: String,
    pub level: String,
    pub real: usize,
    pub simulated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    pub n_real: usize,
    pub n_simulated: usize,
    pub rows: Vec<DemographicRow>,
}

pub fn demographics(real: &ResponseMatrix, sim: &ResponseMatrix) -> Demographics {
    let brackets = default_brackets();
    let mut counts: BTreeMap<(u8, String, String), (usize, usize)> = BTreeMap::new();
    for (m, real_side) in [(real, true), (sim, false)] {
        for r in &m.rows {
            let gender = r.gender.map(|g| g.label().to_string()).unwrap_or_else(|| "Unknown".into());
            let age = r
                .age
                .and_then(|a| bracket_of(&brackets, a))
                .map(|b| brackets[b].to_string())
                .unwrap_or_else(|| "Unknown".into());
            let eth = r.ethnicity.label().unwrap_or("Unspecified").to_string();
            for key in [(0, "Gender".to_string(), gender), (1, "Age".to_string(), age), (2, "Ethnicity".to_string(), eth)] {
                let e = counts.entry(key).or_default();
                if real_side {
                    e.0 += 1;
                } else {
                    e.1 += 1;
                }
            }
        }
    }
    Demographics {
        n_real: real.n_rows(),
        n_simulated: sim.n_rows(),
        rows: counts
            .into_iter()
            .map(|((_, category, level), (r, s))| DemographicRow {
                category,
                level,
                real: r,
                simulated: s,
            })
            .collect(),
    }
}

impl Demographics {
    pub fn to_table(&self) -> String {
        let pct = |k: usize, n: usize| if n == 0 { 0.0 } else { 100.0 * k as f64 / n as f64 };
        let mut out = format!(
            "{:<12} {:<14} {:>16} {:>16}\n",
            "Category",
            "Level",
            format!("Real (N={})", self.n_real),
            format!("Sim. (N={})", self.n_simulated)
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<12} {:<14} {:>16} {:>16}\n",
                r.category,
                r.level,
                format!("{} ({:.1}%)", r.real, pct(r.real, self.n_real)),
                format!("{} ({:.1}%)", r.simulated, pct(r.simulated, self.n_simulated))
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportProvenance {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub estimator: Estimator,
    pub real_sha256: String,
    pub sim_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub provenance: ReportProvenance,
    pub demographics: Demographics,
    pub h1: FitResult,
    pub ladder: LadderResult,
    pub h6: Option<LadderResult>,
    pub h6_note: Option<String>,
    pub battery: ComparisonReport,
    pub hypotheses: HypothesisSummary,
}

/// `χ2(24) = 60.50, p < .001, CFI = .963, ...`
pub fn fit_line(f: &FitResult) -> String {
    let d = |v: f64| {
        let s = format!("{v:.3}");
        s.replacen("0.", ".", 1)
    };
    let p = crate::stats::fmt_p(f.pvalue);
    let p = if p.starts_with('<') { format!("p {p}") } else { format!("p = {p}") };
    format!(
        "χ2({}) = {:.2}, {p}, CFI = {}, TLI = {}, RMSEA = {}, 90% CI [{}, {}], SRMR = {}{}",
        f.df,
        f.chi2_scaled,
        d(f.cfi),
        d(f.tli),
        d(f.rmsea),
        d(f.rmsea_ci.0),
        d(f.rmsea_ci.1),
        d(f.srmr),
        if f.converged { "" } else { " (not converged)" }
    )
}

impl StudyReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let p = &self.provenance;
        let _ = writeln!(out, "Study report");
        let _ = writeln!(
            out,
            "tool {} | config {} | seed {} | estimator {}",
            p.tool_version, p.config_hash, p.seed, p.estimator
        );
        let _ = writeln!(out, "real data sha256 {}\nsimulated data sha256 {}\n", p.real_sha256, p.sim_sha256);
        let _ = writeln!(out, "Demographics\n{}", self.demographics.to_table());
        let _ = writeln!(out, "H1: CFA on real data\n{}\n", fit_line(&self.h1));
        let _ = writeln!(out, "H2: {}", self.ladder.to_table());
        let _ = writeln!(out, "H3-H5: real vs simulated ({:?})", self.battery.design);
        let _ = writeln!(out, "{}", self.battery.to_table());
        match (&self.h6, &self.h6_note) {
            (Some(l), _) => {
                let _ = writeln!(out, "H6: {}", l.to_table());
            }
            (None, Some(n)) => {
                let _ = writeln!(out, "H6: not computed ({n})\n");
            }
            (None, None) => {}
        }
        let _ = writeln!(out, "Summary of hypothesis testing\n{}", self.hypotheses.to_table());
        out
    }
}

/// H1 CFA on real data, H2 source ladder, H3-H5 battery, H6 gender ladder on
/// the simulated data. Writes the fit artifacts and `out/report.{txt,json}`.
pub fn cmd_validate(cfg: &RunConfig, sim: &ResponseMatrix, real: &ResponseMatrix) -> Result<StudyReport> {
    if sim.scale.n_items() != real.scale.n_items() {
        return Err(PipelineError::Data("real and simulated data use different scales".into()));
    }
    let (_, spec_est) = load_model(cfg, &sim.scale)?;
    let estimator = cfg.estimator(spec_est);
    let h1 = match cmd_cfa(cfg, real, "h1_cfa") {
        Ok(f) => f,
        Err(PipelineError::Convergence(m)) => {
            log::warn!("H1: {m}");
            let text = fs::read_to_string(cfg.out().join("fits").join("h1_cfa.json"))?;
            serde_json::from_str::<FitArtifact<FitResult>>(&text)
                .map_err(|e| PipelineError::Io(e.to_string()))?
                .result
        }
        Err(e) => return Err(e.labeled("H1")),
    };
    let ladder = cmd_invariance(cfg, real, sim, Grouping::Source).map_err(|e| e.labeled("H2"))?;
    let battery = cmd_compare(cfg, real, sim).map_err(|e| e.labeled("H3-H5"))?;
    let (h6, h6_note) = if !sim.has_gender() || gender_groups(sim).len() < 2 {
        (None, Some("simulated data lack two gender groups".to_string()))
    } else {
        match cmd_invariance(cfg, real, sim, Grouping::Gender) {
            Ok(l) => (Some(l), None),
            Err(PipelineError::Data(m)) => (None, Some(m)),
            Err(e) => return Err(e.labeled("H6")),
        }
    };
    let rules = HypothesisRules {
        gate: cfg.gate,
        icc_substantial: cfg.icc_substantial,
    };
    let hypotheses = hypothesis_summary(Some(&h1), Some(&ladder), h6.as_ref(), Some(&battery), &rules);
    let report = StudyReport {
        provenance: ReportProvenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.config_hash(),
            seed: cfg.seed,
            estimator,
            real_sha256: sha256_hex(&matrix_csv(real)?),
            sim_sha256: sha256_hex(&matrix_csv(sim)?),
        },
        demographics: demographics(real, sim),
        h1,
        ladder,
        h6,
        h6_note,
        battery,
        hypotheses,
    };
    write_json(&cfg.out_path("report.json"), &report)?;
    write_file(&cfg.out_path("report.txt"), report.render_text().as_bytes())?;
    Ok(report)
}

/// Re-renders `report.txt` from a persisted `report.json`.
pub fn cmd_report(report_json: &Path) -> Result<String> {
    let text = fs::read_to_string(report_json).map_err(|e| PipelineError::Data(format!("{}: {e}", report_json.display())))?;
    let report: StudyReport = serde_json::from_str(&text).map_err(|e| PipelineError::Data(e.to_string()))?;
    Ok(report.render_text())
}

/// Loads the simulated dataset written by `generate`.
pub fn load_sim(cfg: &RunConfig, scale: &ScaleDefinition) -> Result<ResponseMatrix> {
    let m = read_dataset(&cfg.out_path("sim_dataset.csv"), scale)?;
    Ok(ResponseMatrix {
        source: Source::Simulated,
        ..m
    })
}

/// Roster written by `quota`.
pub fn load_roster(cfg: &RunConfig) -> Result<Vec<Persona>> {
    let path = cfg.out_path("roster.csv");
    let f = fs::File::open(&path).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
    Ok(read_roster(f)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_tables_keep_defaults() {
        let c = RunConfig::from_toml(
            "[sampling]\ntemperature = 0.7\n[gate]\ncfi_acceptable = 0.92\n[criteria]\ndelta_cfi = 0.01\n",
            Path::new("."),
        )
        .unwrap();
        assert_eq!(c.sampling.temperature, 0.7);
        assert_eq!(c.sampling.model_id, SamplingConfig::default().model_id);
        assert_eq!(c.gate.rmsea_acceptable, AbsoluteFitGate::default().rmsea_acceptable);
    }

    #[test]
    fn config_defaults_and_hash() {
        let a = RunConfig::from_toml("seed = 7\n[battery]\nbootstrap_b = 100\n", Path::new("/tmp")).unwrap();
        assert_eq!(a.battery.bootstrap_b, 100);
        assert_eq!(a.battery.levene_center, Center::Median);
        let mut b = a.clone();
        b.out_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.config_hash(), b.config_hash());
        b.seed = 8;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn config_errors_map_to_exit_code() {
        let e = RunConfig::from_toml("[backend]\nkind = \"http\"\n", Path::new(".")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = RunConfig::from_toml("seed = \"x\"", Path::new(".")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn exit_codes_are_distinct() {
        let codes: HashSet<i32> = [
            PipelineError::Config(String::new()),
            PipelineError::Data(String::new()),
            PipelineError::Convergence(String::new()),
            PipelineError::Infeasible(String::new()),
        ]
        .iter()
        .map(|e| e.exit_code())
        .collect();
        assert_eq!(codes.len(), 4);
        assert!(!codes.contains(&0));
    }
}
