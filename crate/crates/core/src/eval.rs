//! Per-level error metrics and the experiment driver.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{self, BaselineError, DEFAULT_UNIVERSE_CAP};
use crate::dp::rng::derive_seed;
use crate::dp::{DpError, PrivacyBudget, SensitivityModel};
use crate::release::{self, OrderStrategy, ReleaseConfig, ReleaseError};
use crate::tree::{HierTree, TreeError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("truth and release are bound to different hierarchies or tree modes")]
    ShapeMismatch,
    #[error("unknown mechanism `{0}`")]
    UnknownMechanism(String),
    #[error(transparent)]
    Release(#[from] ReleaseError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("could not build worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn check_shape(truth: &HierTree, released: &HierTree) -> Result<(), EvalError> {
    if truth.same_shape(released) {
        Ok(())
    } else {
        Err(EvalError::ShapeMismatch)
    }
}

/// Max absolute error at every depth.
///
/// The maximum ranges over the union of both supports; nodes absent from
/// both contribute zero, so this equals the maximum over the full universe.
pub fn max_abs_error_per_level(truth: &HierTree, released: &HierTree) -> Result<Vec<i64>, EvalError> {
    check_shape(truth, released)?;
    Ok((0..=truth.depth())
        .map(|depth| {
            let from_truth = truth
                .level(depth)
                .map(|(k, v)| (v - released.attribute(k)).abs());
            let spurious = released
                .level(depth)
                .filter(|&(k, _)| truth.attribute(k) == 0)
                .map(|(_, v)| v.abs());
            from_truth.chain(spurious).max().unwrap_or(0)
        })
        .collect())
}

/// Percentage of released-positive nodes at `depth` whose true count is zero;
/// 0 when nothing positive is released.
pub fn false_discovery_rate(truth: &HierTree, released: &HierTree, depth: usize) -> Result<f64, EvalError> {
    check_shape(truth, released)?;
    let (mut positive, mut spurious) = (0usize, 0usize);
    for (key, v) in released.level(depth) {
        if v > 0 {
            positive += 1;
            if truth.attribute(key) == 0 {
                spurious += 1;
            }
        }
    }
    Ok(if positive == 0 {
        0.0
    } else {
        100.0 * spurious as f64 / positive as f64
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub level: usize,
    pub max_abs_error: i64,
    pub false_discovery_rate: f64,
    /// Released nodes with a positive attribute.
    pub released_nodes: usize,
}

/// Metrics for every depth of one release.
pub fn evaluate(truth: &HierTree, released: &HierTree) -> Result<Vec<LevelMetrics>, EvalError> {
    let errors = max_abs_error_per_level(truth, released)?;
    errors
        .into_iter()
        .enumerate()
        .map(|(level, max_abs_error)| {
            Ok(LevelMetrics {
                level,
                max_abs_error,
                false_discovery_rate: false_discovery_rate(truth, released, level)?,
                released_nodes: released.level(level).filter(|&(_, v)| v > 0).count(),
            })
        })
        .collect()
}

/// Writes per-level metrics as CSV.
pub fn write_metrics_csv<W: Write>(metrics: &[LevelMetrics], out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    for m in metrics {
        w.serialize(m)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    Inftda,
    TdaL2,
    TdaLinfRandom,
    VanillaGauss,
    Sh,
}

impl Mechanism {
    pub const ALL: [Mechanism; 5] = [
        Mechanism::Inftda,
        Mechanism::TdaL2,
        Mechanism::TdaLinfRandom,
        Mechanism::VanillaGauss,
        Mechanism::Sh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Inftda => "inftda",
            Mechanism::TdaL2 => "tda-l2",
            Mechanism::TdaLinfRandom => "tda-linf-random",
            Mechanism::VanillaGauss => "vanilla-gauss",
            Mechanism::Sh => "sh",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mechanism {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mechanism::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| EvalError::UnknownMechanism(s.to_string()))
    }
}

/// Everything a mechanism run needs besides the data.
#[derive(Debug, Clone, Copy)]
pub struct RunParams {
    pub budget: PrivacyBudget,
    pub sensitivity: SensitivityModel,
    /// IntOpt order for `inftda`; ignored by the other mechanisms.
    pub order: OrderStrategy,
    pub seed: u64,
    pub parallel: bool,
}

impl RunParams {
    pub fn new(budget: PrivacyBudget, seed: u64) -> Self {
        Self {
            budget,
            sensitivity: SensitivityModel::bounded_single_trip(),
            order: OrderStrategy::Ascending,
            seed,
            parallel: true,
        }
    }

    fn release_config(&self, order: OrderStrategy) -> ReleaseConfig {
        ReleaseConfig::new(self.budget, self.seed)
            .with_sensitivity(self.sensitivity)
            .with_order(order)
            .with_parallel(self.parallel)
    }
}

#[derive(Debug, Clone)]
pub struct MechanismOutput {
    /// Released attributes at every depth.
    pub tree: HierTree,
    /// Wall-clock time of the mechanism itself, excluding aggregation.
    pub wall_ms: f64,
}

/// Runs one mechanism; leaf mechanisms are lifted to every level afterwards.
pub fn run_mechanism(
    mechanism: Mechanism,
    truth: &HierTree,
    params: &RunParams,
) -> Result<MechanismOutput, EvalError> {
    let started = Instant::now();
    let lift = |leaves: baselines::LeafRelease, started: Instant| {
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        let tree = leaves.to_tree(
            truth.origin_hierarchy().clone(),
            truth.destination_hierarchy().clone(),
            truth.mode(),
        )?;
        Ok::<_, EvalError>(MechanismOutput { tree, wall_ms })
    };
    let top_down = |r: release::DPRelease, started: Instant| MechanismOutput {
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
        tree: r.tree,
    };
    match mechanism {
        Mechanism::Inftda => Ok(top_down(
            release::release(truth, &params.release_config(params.order))?,
            started,
        )),
        Mechanism::TdaLinfRandom => Ok(top_down(
            release::release(truth, &params.release_config(OrderStrategy::Random))?,
            started,
        )),
        Mechanism::TdaL2 => Ok(top_down(
            baselines::tda_l2(truth, &params.release_config(params.order))?,
            started,
        )),
        Mechanism::VanillaGauss => lift(
            baselines::vanilla_gauss(
                truth,
                &params.budget,
                &params.sensitivity,
                params.seed,
                DEFAULT_UNIVERSE_CAP,
            )?,
            started,
        ),
        Mechanism::Sh => lift(
            baselines::stability_histogram(truth, &params.budget, &params.sensitivity, params.seed)?,
            started,
        ),
    }
}

/// Privacy budget entry of an experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSpec {
    pub epsilon: f64,
    pub delta: f64,
}

impl BudgetSpec {
    pub fn to_budget(self) -> Result<PrivacyBudget, DpError> {
        PrivacyBudget::from_epsilon_delta(self.epsilon, self.delta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub mechanisms: Vec<Mechanism>,
    pub budgets: Vec<BudgetSpec>,
    pub repeats: usize,
    pub seed: u64,
    pub sensitivity: SensitivityModel,
    pub order: OrderStrategy,
    /// Cap on concurrently running repeats; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for ExperimentSpec {
    /// All mechanisms at ε ∈ {0.1, 1, 10}, δ = 1e-8, ten repeats.
    fn default() -> Self {
        Self {
            mechanisms: Mechanism::ALL.to_vec(),
            budgets: [0.1, 1.0, 10.0]
                .into_iter()
                .map(|epsilon| BudgetSpec {
                    epsilon,
                    delta: 1e-8,
                })
                .collect(),
            repeats: 10,
            seed: 0,
            sensitivity: SensitivityModel::bounded_single_trip(),
            order: OrderStrategy::Ascending,
            workers: None,
        }
    }
}

/// One (mechanism, budget, repeat) cell of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub mechanism: Mechanism,
    pub epsilon: f64,
    pub delta: f64,
    pub repeat: usize,
    pub seed: u64,
    pub wall_ms: f64,
    pub levels: Vec<LevelMetrics>,
}

/// Min/mean/max over repeats of one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub mechanism: Mechanism,
    pub epsilon: f64,
    pub delta: f64,
    pub level: usize,
    pub repeats: usize,
    pub error_min: i64,
    pub error_mean: f64,
    pub error_max: i64,
    pub fdr_min: f64,
    pub fdr_mean: f64,
    pub fdr_max: f64,
    pub released_nodes_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub depth: usize,
    pub true_total: i64,
    pub spec: ExperimentSpec,
    pub summary: Vec<SummaryRow>,
    pub runs: Vec<RunRecord>,
}

impl EvalReport {
    /// Summary rows as CSV. Timings are left out so that equal seeds give
    /// equal bytes; they live in the JSON envelope.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.summary {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<(), EvalError> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    /// Runs of one mechanism at one ε.
    pub fn runs_for(&self, mechanism: Mechanism, epsilon: f64) -> impl Iterator<Item = &RunRecord> {
        self.runs
            .iter()
            .filter(move |r| r.mechanism == mechanism && r.epsilon == epsilon)
    }
}

/// Runs every (mechanism, budget, repeat) cell and summarizes per level.
///
/// Repeat `r` uses the seed `derive_seed(spec.seed, r)` for every mechanism
/// and budget, so mechanisms are compared on common randomness.
pub fn run_experiment(
    dataset: &str,
    truth: &HierTree,
    spec: &ExperimentSpec,
) -> Result<EvalReport, EvalError> {
    let mut jobs = Vec::new();
    for &mechanism in &spec.mechanisms {
        for &budget in &spec.budgets {
            for repeat in 0..spec.repeats {
                jobs.push((mechanism, budget, repeat));
            }
        }
    }
    let run = |&(mechanism, budget, repeat): &(Mechanism, BudgetSpec, usize)| {
        let seed = derive_seed(spec.seed, repeat as u64);
        let params = RunParams {
            budget: budget.to_budget()?,
            sensitivity: spec.sensitivity,
            order: spec.order,
            seed,
            parallel: true,
        };
        let out = run_mechanism(mechanism, truth, &params)?;
        Ok::<_, EvalError>(RunRecord {
            mechanism,
            epsilon: budget.epsilon,
            delta: budget.delta,
            repeat,
            seed,
            wall_ms: out.wall_ms,
            levels: evaluate(truth, &out.tree)?,
        })
    };
    let runs: Vec<RunRecord> = match spec.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| EvalError::Pool(e.to_string()))?
            .install(|| jobs.par_iter().map(run).collect::<Result<_, _>>())?,
        None => jobs.par_iter().map(run).collect::<Result<_, _>>()?,
    };
    let summary = summarize(dataset, &runs, truth.depth());
    Ok(EvalReport {
        dataset: dataset.to_string(),
        depth: truth.depth(),
        true_total: truth.root_attribute(),
        spec: spec.clone(),
        summary,
        runs,
    })
}

fn summarize(dataset: &str, runs: &[RunRecord], depth: usize) -> Vec<SummaryRow> {
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for run in runs {
        let key = (run.mechanism, run.epsilon.to_bits(), run.delta.to_bits());
        if !seen.insert(key) {
            continue;
        }
        let group: Vec<&RunRecord> = runs
            .iter()
            .filter(|r| (r.mechanism, r.epsilon.to_bits(), r.delta.to_bits()) == key)
            .collect();
        let k = group.len() as f64;
        for level in 0..=depth {
            let at = |r: &&RunRecord| r.levels[level].clone();
            let metrics: Vec<LevelMetrics> = group.iter().map(at).collect();
            let errors = metrics.iter().map(|m| m.max_abs_error);
            let fdrs = metrics.iter().map(|m| m.false_discovery_rate);
            rows.push(SummaryRow {
                dataset: dataset.to_string(),
                mechanism: run.mechanism,
                epsilon: run.epsilon,
                delta: run.delta,
                level,
                repeats: group.len(),
                error_min: errors.clone().min().unwrap_or(0),
                error_mean: errors.clone().map(|e| e as f64).sum::<f64>() / k,
                error_max: errors.max().unwrap_or(0),
                fdr_min: fdrs.clone().fold(f64::INFINITY, f64::min),
                fdr_mean: fdrs.clone().sum::<f64>() / k,
                fdr_max: fdrs.fold(f64::NEG_INFINITY, f64::max),
                released_nodes_mean: metrics.iter().map(|m| m.released_nodes as f64).sum::<f64>()
                    / k,
            });
        }
    }
    rows
}
