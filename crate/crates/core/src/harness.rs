//! Seeded multi-run experiments, result bundles and summary tables.
//!
//! Bundle layout under an output directory:
//!
//! ```text
//! bundle.json                 config, reference gain, per-run records, summary
//! curve.csv                   mean cumulative regret at evenly spaced checkpoints
//! traces/run_NNNN.jsonl       one reward per line, original units
//! diagnostics/run_NNNN.jsonl  agent events
//! timing.csv                  wall-clock and decision times
//! ```
//!
//! Everything except `timing.csv` is a pure function of the config.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{prepare_models, ucrl2_run, ucwm_run, BaselineError, BaselineOutcome, ModelPlan};
use crate::chain::{evaluate_policy, gap_structure, ChainError};
use crate::diagnostics::{write_jsonl, Event};
use crate::envs::{advice_set, make_gridworld, model_set, optimal_policy, EnvError, GridSpec, ADVICE_ACCURACY};
use crate::mdp::{DeterministicPolicy, MdpEnv, MdpError, TabularMdp};
use crate::regret::{compute_regret, mean_stderr};
use crate::rlpa::{rlpa_run, RlpaConfig, RlpaError, RlpaOutcome, SpanFunction};
use crate::rng::{derive_seed, stream_rng, Stream};

pub const CURVE_POINTS: u64 = 100;
pub const SUMMARY_HEADER: [&str; 8] =
    ["agent", "env", "num_states", "T", "runs", "mean_regret_per_step", "stderr", "mean_runtime_s"];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("no bundles to aggregate")]
    NoBundles,
    #[error("bundles mix horizons {0} and {1}")]
    MixedHorizon(u64, u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Rlpa,
    Ucrl2,
    Ucwm,
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rlpa => "rlpa",
            Self::Ucrl2 => "ucrl2",
            Self::Ucwm => "ucwm",
        })
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rlpa" => Ok(Self::Rlpa),
            "ucrl2" => Ok(Self::Ucrl2),
            "ucwm" => Ok(Self::Ucwm),
            _ => Err(format!("unknown agent {s:?} (expected rlpa, ucrl2 or ucwm)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    Grid { side: usize, model_id: u8 },
    File { path: PathBuf },
}

impl EnvSpec {
    pub fn label(&self) -> String {
        match self {
            Self::Grid { side, model_id } => format!("grid{side}x{side}-m{model_id}"),
            Self::File { path } => {
                path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub agent: AgentKind,
    pub horizon: u64,
    pub runs: u32,
    pub base_seed: u64,
    pub delta: f64,
    pub span_function: SpanFunction,
    /// Advice policy files; grid environments default to the optimal policies of the model family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advice_from: Option<Vec<PathBuf>>,
    /// Candidate model files; grid environments default to the model family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models_from: Option<Vec<PathBuf>>,
}

impl ExperimentConfig {
    pub fn grid(side: usize, model_id: u8, agent: AgentKind, horizon: u64, runs: u32, base_seed: u64) -> Self {
        Self {
            env: EnvSpec::Grid { side, model_id },
            agent,
            horizon,
            runs,
            base_seed,
            delta: 0.05,
            span_function: SpanFunction::Log,
            advice_from: None,
            models_from: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.horizon == 0 {
            return Err(HarnessError::Config("horizon must be at least 1".into()));
        }
        if self.runs == 0 {
            return Err(HarnessError::Config("runs must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(HarnessError::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        let file_env = matches!(self.env, EnvSpec::File { .. });
        match self.agent {
            AgentKind::Rlpa if file_env && self.advice_from.is_none() => {
                Err(HarnessError::Config("agent rlpa on an MDP file needs advice policies".into()))
            }
            AgentKind::Ucwm if file_env && self.models_from.is_none() => {
                Err(HarnessError::Config("agent ucwm on an MDP file needs candidate model files".into()))
            }
            _ => Ok(()),
        }
    }
}

/// A resolved experiment: environment, agent inputs and reference gain.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub env_label: String,
    pub mdp: TabularMdp,
    pub advice: Vec<DeterministicPolicy>,
    pub models: Vec<ModelPlan>,
    /// Reference gain for regret, original units.
    pub mu_plus: f64,
    /// Bias span of the reference policy, normalized reward units.
    pub h_plus: f64,
    /// `f^{-1}(h_plus)`.
    pub t_plus: f64,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let (mdp, default_advice, default_models) = match &config.env {
            EnvSpec::Grid { side, model_id } => {
                let mdp = make_gridworld(&GridSpec::new(*side, *model_id))?;
                (mdp, Some(advice_set(*side)?), Some(model_set(*side)?))
            }
            EnvSpec::File { path } => (TabularMdp::load(path)?, None, None),
        };
        let advice = match &config.advice_from {
            Some(paths) => paths.iter().map(DeterministicPolicy::load).collect::<Result<Vec<_>, _>>()?,
            None => default_advice.unwrap_or_default(),
        };
        let models = match (config.agent, &config.models_from) {
            (AgentKind::Ucwm, Some(paths)) => paths.iter().map(TabularMdp::load).collect::<Result<Vec<_>, _>>()?,
            (AgentKind::Ucwm, None) => default_models.unwrap_or_default(),
            _ => Vec::new(),
        };
        let label = config.env.label();
        Self::from_parts(config, label, mdp, advice, models)
    }

    /// Builds an experiment from in-memory inputs. The reference gain is the
    /// best advice policy's gain, or the optimal gain when no advice is given.
    pub fn from_parts(
        config: ExperimentConfig,
        env_label: String,
        mdp: TabularMdp,
        advice: Vec<DeterministicPolicy>,
        models: Vec<TabularMdp>,
    ) -> Result<Self, HarnessError> {
        config.validate()?;
        for policy in &advice {
            policy.check_against(&mdp)?;
        }
        if config.agent == AgentKind::Rlpa && advice.is_empty() {
            return Err(HarnessError::Config("agent rlpa needs at least one advice policy".into()));
        }
        if config.agent == AgentKind::Ucwm && models.is_empty() {
            return Err(HarnessError::Config("agent ucwm needs at least one candidate model".into()));
        }
        let width = mdp.reward_scale().width;
        let (mu_plus, h_plus) = if advice.is_empty() {
            let best = optimal_policy(&mdp, ADVICE_ACCURACY)?;
            let sol = evaluate_policy(&mdp, &best)?;
            (sol.max_gain(), sol.span)
        } else {
            let gaps = gap_structure(&mdp, &advice)?;
            (gaps.mu_plus, gaps.h_plus)
        };
        let h_plus = h_plus / width;
        let models = prepare_models(&models)?;
        Ok(Self {
            t_plus: config.span_function.inverse(h_plus),
            config,
            env_label,
            mdp,
            advice,
            models,
            mu_plus,
            h_plus,
        })
    }

    pub fn rlpa_config(&self) -> RlpaConfig {
        RlpaConfig {
            delta: self.config.delta,
            span_function: self.config.span_function,
            horizon: Some(self.config.horizon),
            ..RlpaConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: u32,
    pub seed: u64,
    pub start_state: usize,
    #[serde(flatten)]
    pub status: RunStatus,
    pub steps: u64,
    /// `Delta(T)`.
    pub regret: f64,
    /// `Delta(T) / T`.
    pub regret_per_step: f64,
    pub episodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eliminations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_value_computations: Option<u64>,
}

#[derive(Debug, Clone)]
pub enum RunDetail {
    Rlpa(RlpaOutcome),
    Baseline(BaselineOutcome),
    Failed,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: RunRecord,
    /// Observed rewards, original units.
    pub rewards: Vec<f64>,
    pub events: Vec<Event>,
    pub wall_time: Duration,
    pub decision_time: Duration,
    /// Decision time per algorithm trial (RLPA only).
    pub trial_decision_times: Vec<Duration>,
    /// Agent outcome with its reward trace moved into `rewards`.
    pub detail: RunDetail,
}

fn agent_error(agent: AgentKind, err: impl fmt::Display) -> String {
    format!("{agent}: {err}")
}

/// Runs replication `run` of `experiment`.
pub fn run_single(experiment: &Experiment, run: u32) -> RunOutput {
    let config = &experiment.config;
    let seed = derive_seed(config.base_seed, u64::from(run));
    let start_state = stream_rng(seed, Stream::StartState).random_range(0..experiment.mdp.num_states);
    let mut rng = stream_rng(seed, Stream::Environment);
    let clock = Instant::now();
    let outcome: Result<RunDetail, String> = MdpEnv::new(&experiment.mdp, start_state)
        .map_err(|e| e.to_string())
        .and_then(|mut env| match config.agent {
            AgentKind::Rlpa => rlpa_run(&mut env, &mut rng, &experiment.advice, &experiment.rlpa_config(), config.horizon)
                .map(RunDetail::Rlpa)
                .map_err(|e: RlpaError| agent_error(config.agent, e)),
            AgentKind::Ucrl2 => ucrl2_run(&mut env, &mut rng, config.delta, config.horizon)
                .map(RunDetail::Baseline)
                .map_err(|e| agent_error(config.agent, e)),
            AgentKind::Ucwm => ucwm_run(&mut env, &mut rng, &experiment.models, config.delta, config.horizon)
                .map(RunDetail::Baseline)
                .map_err(|e| agent_error(config.agent, e)),
        });
    let wall_time = clock.elapsed();

    let mut record = RunRecord {
        run,
        seed,
        start_state,
        status: RunStatus::Ok,
        steps: 0,
        regret: 0.0,
        regret_per_step: 0.0,
        episodes: 0,
        trials: None,
        eliminations: None,
        b_value_computations: None,
    };
    let (rewards, events, decision_time, trial_decision_times, detail) = match outcome {
        Ok(RunDetail::Rlpa(mut out)) => {
            record.episodes = out.episodes.len();
            record.trials = Some(out.trials.len());
            record.eliminations = Some(out.episodes.iter().filter(|e| e.eliminated).count());
            record.b_value_computations = Some(out.b_value_computations);
            let trial_times = out.trials.iter().map(|t| t.decision_time).collect();
            (std::mem::take(&mut out.rewards), out.events(), out.decision_time, trial_times, RunDetail::Rlpa(out))
        }
        Ok(RunDetail::Baseline(mut out)) => {
            record.episodes = out.episodes.len();
            (std::mem::take(&mut out.rewards), out.events(), out.decision_time, Vec::new(), RunDetail::Baseline(out))
        }
        Ok(RunDetail::Failed) => unreachable!("agents never report a failed detail"),
        Err(message) => {
            log::warn!("run {run} failed: {message}");
            record.status = RunStatus::Error { message };
            (Vec::new(), Vec::new(), Duration::ZERO, Vec::new(), RunDetail::Failed)
        }
    };
    if record.status == RunStatus::Ok {
        record.steps = rewards.len() as u64;
        record.regret = compute_regret(experiment.mu_plus, &rewards);
        record.regret_per_step = record.regret / record.steps as f64;
    }
    RunOutput { record, rewards, events, wall_time, decision_time, trial_decision_times, detail }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSummary {
    pub runs_ok: usize,
    pub runs_failed: usize,
    pub mean_regret_per_step: f64,
    pub stderr: f64,
    pub min_regret_per_step: f64,
    pub max_regret_per_step: f64,
}

impl RegretSummary {
    pub fn from_records(records: &[RunRecord]) -> Self {
        let values: Vec<f64> =
            records.iter().filter(|r| r.status == RunStatus::Ok).map(|r| r.regret_per_step).collect();
        let (mean, stderr) = mean_stderr(&values);
        Self {
            runs_ok: values.len(),
            runs_failed: records.len() - values.len(),
            mean_regret_per_step: mean,
            stderr,
            min_regret_per_step: values.iter().copied().fold(f64::INFINITY, f64::min),
            max_regret_per_step: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Deterministic metadata and per-run records (`bundle.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub config: ExperimentConfig,
    pub env_label: String,
    pub num_states: usize,
    pub num_actions: usize,
    pub mu_plus: f64,
    pub h_plus: f64,
    pub t_plus: f64,
    pub seed_derivation: String,
    pub start_state: String,
    pub runs: Vec<RunRecord>,
    pub summary: RegretSummary,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub bundle: ResultBundle,
    pub outputs: Vec<RunOutput>,
}

impl ExperimentResult {
    pub fn regrets_per_step(&self) -> Vec<f64> {
        self.outputs.iter().filter(|o| o.record.status == RunStatus::Ok).map(|o| o.record.regret_per_step).collect()
    }

    pub fn mean_decision_time(&self) -> Duration {
        let total: Duration = self.outputs.iter().map(|o| o.decision_time).sum();
        total / self.outputs.len().max(1) as u32
    }

    pub fn runtimes(&self) -> Vec<f64> {
        self.outputs.iter().map(|o| o.wall_time.as_secs_f64()).collect()
    }

    /// Mean and standard error of cumulative regret at evenly spaced checkpoints.
    pub fn regret_curve(&self) -> Vec<(u64, f64, f64)> {
        let horizon = self.bundle.config.horizon;
        let mu_plus = self.bundle.mu_plus;
        let ok: Vec<&RunOutput> =
            self.outputs.iter().filter(|o| o.record.status == RunStatus::Ok).collect();
        let mut checkpoints: Vec<u64> = (1..=CURVE_POINTS).map(|k| (horizon * k).div_ceil(CURVE_POINTS)).collect();
        checkpoints.dedup();
        let cumulative: Vec<Vec<f64>> = ok
            .iter()
            .map(|o| {
                let mut total = 0.0;
                let mut next = checkpoints.iter().peekable();
                let mut out = Vec::with_capacity(checkpoints.len());
                for (i, &r) in o.rewards.iter().enumerate() {
                    total += r;
                    let t = i as u64 + 1;
                    if next.next_if(|&&c| c == t).is_some() {
                        out.push(t as f64 * mu_plus - total);
                    }
                }
                out
            })
            .collect();
        checkpoints
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let values: Vec<f64> = cumulative.iter().map(|c| c[k]).collect();
                let (mean, se) = mean_stderr(&values);
                (t, mean, se)
            })
            .collect()
    }

    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        write_result(self, dir)
    }
}

/// Runs every replication (in parallel, results ordered by run index).
pub fn run_experiment(experiment: &Experiment) -> ExperimentResult {
    let outputs: Vec<RunOutput> =
        (0..experiment.config.runs).into_par_iter().map(|run| run_single(experiment, run)).collect();
    let records: Vec<RunRecord> = outputs.iter().map(|o| o.record.clone()).collect();
    let bundle = ResultBundle {
        config: experiment.config.clone(),
        env_label: experiment.env_label.clone(),
        num_states: experiment.mdp.num_states,
        num_actions: experiment.mdp.num_actions,
        mu_plus: experiment.mu_plus,
        h_plus: experiment.h_plus,
        t_plus: experiment.t_plus,
        seed_derivation: "splitmix64(base_seed ^ splitmix64(run))".into(),
        start_state: "uniform per run".into(),
        summary: RegretSummary::from_records(&records),
        runs: records,
    };
    ExperimentResult { bundle, outputs }
}

fn write_result(result: &ExperimentResult, dir: &Path) -> Result<(), HarnessError> {
    let traces = dir.join("traces");
    let diagnostics = dir.join("diagnostics");
    fs::create_dir_all(&traces)?;
    fs::create_dir_all(&diagnostics)?;
    let mut json = serde_json::to_string_pretty(&result.bundle)?;
    json.push('\n');
    fs::write(dir.join("bundle.json"), json)?;
    for out in &result.outputs {
        let name = format!("run_{:04}.jsonl", out.record.run);
        let mut w = BufWriter::new(fs::File::create(traces.join(&name))?);
        for r in &out.rewards {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        let mut w = BufWriter::new(fs::File::create(diagnostics.join(&name))?);
        write_jsonl(&out.events, &mut w)?;
        w.flush()?;
    }

    let mut curve = csv::Writer::from_path(dir.join("curve.csv"))?;
    curve.write_record(["t", "mean_regret", "stderr", "mean_regret_per_step"])?;
    for (t, mean, se) in result.regret_curve() {
        curve.write_record([t.to_string(), mean.to_string(), se.to_string(), (mean / t as f64).to_string()])?;
    }
    curve.flush()?;

    let mut timing = csv::Writer::from_path(dir.join("timing.csv"))?;
    timing.write_record(["run", "wall_time_s", "decision_time_s", "trials", "mean_trial_decision_time_s"])?;
    for out in &result.outputs {
        let trials = out.trial_decision_times.len();
        let per_trial = if trials == 0 {
            f64::NAN
        } else {
            out.trial_decision_times.iter().map(Duration::as_secs_f64).sum::<f64>() / trials as f64
        };
        timing.write_record([
            out.record.run.to_string(),
            out.wall_time.as_secs_f64().to_string(),
            out.decision_time.as_secs_f64().to_string(),
            trials.to_string(),
            per_trial.to_string(),
        ])?;
    }
    timing.flush()?;
    Ok(())
}

/// Reads one reward trace file back.
pub fn read_trace(path: &Path) -> Result<Vec<f64>, HarnessError> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| serde_json::from_str(l).map_err(HarnessError::from))
        .collect()
}

/// A bundle plus the per-run wall-clock times stored next to it.
#[derive(Debug, Clone)]
pub struct LoadedBundle {
    pub bundle: ResultBundle,
    pub runtimes: Vec<f64>,
}

impl LoadedBundle {
    pub fn from_result(result: &ExperimentResult) -> Self {
        Self { bundle: result.bundle.clone(), runtimes: result.runtimes() }
    }

    /// Loads `bundle.json` and, if present, `timing.csv` from `dir`.
    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let bundle: ResultBundle = serde_json::from_str(&fs::read_to_string(dir.join("bundle.json"))?)?;
        let timing = dir.join("timing.csv");
        let runtimes = if timing.exists() {
            let mut reader = csv::Reader::from_path(timing)?;
            reader
                .records()
                .map(|rec| {
                    let rec = rec?;
                    Ok(rec.get(1).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN))
                })
                .collect::<Result<Vec<f64>, HarnessError>>()?
        } else {
            Vec::new()
        };
        Ok(Self { bundle, runtimes })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub agent: AgentKind,
    pub env: String,
    pub num_states: usize,
    pub horizon: u64,
    pub runs: usize,
    pub mean_regret_per_step: f64,
    pub stderr: f64,
    pub min_regret_per_step: f64,
    pub max_regret_per_step: f64,
    pub mean_runtime_s: f64,
    pub min_runtime_s: f64,
    pub max_runtime_s: f64,
}

/// Pools the successful runs of all bundles per `(agent, env)` cell, in first-seen order.
pub fn aggregate(bundles: &[LoadedBundle]) -> Result<Vec<SummaryRow>, HarnessError> {
    let first = bundles.first().ok_or(HarnessError::NoBundles)?;
    let horizon = first.bundle.config.horizon;
    if let Some(other) = bundles.iter().find(|b| b.bundle.config.horizon != horizon) {
        return Err(HarnessError::MixedHorizon(horizon, other.bundle.config.horizon));
    }
    // (key, num_states, regrets, runtimes)
    type Cell = ((AgentKind, String), usize, Vec<f64>, Vec<f64>);
    let mut cells: Vec<Cell> = Vec::new();
    for loaded in bundles {
        let b = &loaded.bundle;
        let key = (b.config.agent, b.env_label.clone());
        let idx = match cells.iter().position(|c| c.0 == key) {
            Some(i) => i,
            None => {
                cells.push((key, b.num_states, Vec::new(), Vec::new()));
                cells.len() - 1
            }
        };
        for (i, run) in b.runs.iter().enumerate() {
            if run.status == RunStatus::Ok {
                cells[idx].2.push(run.regret_per_step);
                if let Some(&rt) = loaded.runtimes.get(i) {
                    cells[idx].3.push(rt);
                }
            }
        }
    }
    Ok(cells
        .into_iter()
        .map(|((agent, env), num_states, regrets, runtimes)| {
            let (mean, stderr) = mean_stderr(&regrets);
            let (mean_rt, _) = mean_stderr(&runtimes);
            SummaryRow {
                agent,
                env,
                num_states,
                horizon,
                runs: regrets.len(),
                mean_regret_per_step: mean,
                stderr,
                min_regret_per_step: regrets.iter().copied().fold(f64::INFINITY, f64::min),
                max_regret_per_step: regrets.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean_runtime_s: mean_rt,
                min_runtime_s: runtimes.iter().copied().fold(f64::INFINITY, f64::min),
                max_runtime_s: runtimes.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect())
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for row in rows {
        w.write_record([
            row.agent.to_string(),
            row.env.clone(),
            row.num_states.to_string(),
            row.horizon.to_string(),
            row.runs.to_string(),
            row.mean_regret_per_step.to_string(),
            row.stderr.to_string(),
            row.mean_runtime_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs `base` once per grid side, keeping its model id, agent and seeds.
pub fn sweep(base: &ExperimentConfig, sides: &[usize]) -> Result<Vec<ExperimentResult>, HarnessError> {
    let model_id = match base.env {
        EnvSpec::Grid { model_id, .. } => model_id,
        EnvSpec::File { .. } => return Err(HarnessError::Config("sweeps need a grid environment".into())),
    };
    sides
        .iter()
        .map(|&side| {
            let config = ExperimentConfig { env: EnvSpec::Grid { side, model_id }, ..base.clone() };
            Ok(run_experiment(&Experiment::prepare(config)?))
        })
        .collect()
}
