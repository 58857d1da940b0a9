//! Experiment protocol: shared splits per trial, five methods, accuracy
//! curves over the labeling budget, and their aggregates across trials.

mod results;

pub use results::{emit_results, plot_data_path, read_results, results_path, RESULTS_FILE, SCHEMA_VERSION};

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::active::{run_active_learning, AcquisitionStrategy, ActiveRunRecord, SimulatedOracle};
use crate::data::{
    load_csv, stratified_initial_sample, stratified_test_split, Dataset, SeededRng, Standardizer,
};
use crate::error::{Error, Result};
use crate::limited::{limited_fraction, LimitedSetParams};
use crate::par;
use crate::selection::{grid_fold_correctness, report_from_folds, ModelGrid, SelectionMethod};
use crate::svm::{train_svc, ModelParams, SolverSettings, TrainedSvm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MethodId {
    Random,
    Default,
    Oracle,
    Palms,
    PalmsFwc,
}

impl MethodId {
    pub const ALL: [MethodId; 5] = [
        MethodId::Random,
        MethodId::Default,
        MethodId::Oracle,
        MethodId::Palms,
        MethodId::PalmsFwc,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MethodId::Random => "RANDOM",
            MethodId::Default => "DEFAULT",
            MethodId::Oracle => "ORACLE",
            MethodId::Palms => "PALMS",
            MethodId::PalmsFwc => "PALMS_FWC",
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "RANDOM" => Ok(MethodId::Random),
            "DEFAULT" => Ok(MethodId::Default),
            "ORACLE" => Ok(MethodId::Oracle),
            "PALMS" => Ok(MethodId::Palms),
            "PALMS_FWC" => Ok(MethodId::PalmsFwc),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub methods: Vec<MethodId>,
    pub budget: usize,
    pub trials: usize,
    pub test_per_class: usize,
    pub init_per_class: usize,
    pub c_grid: Vec<f64>,
    /// Gamma candidates as multiples of `1 / n_features`.
    pub gamma_multipliers: Vec<f64>,
    pub default_c: f64,
    /// Default gamma as a multiple of `1 / n_features`.
    pub default_gamma_multiplier: f64,
    pub weight: f64,
    pub seed: u64,
    pub stride: usize,
    /// Report ORACLE as the single model best at the final budget instead of
    /// the per-budget maximum.
    #[serde(default)]
    pub oracle_final_budget: bool,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: PathBuf::new(),
            methods: MethodId::ALL.to_vec(),
            budget: 55,
            trials: 50,
            test_per_class: 50,
            init_per_class: 2,
            c_grid: vec![0.01, 1.0, 100.0, 1e4],
            gamma_multipliers: vec![1e-4, 1e-2, 1.0, 1e2, 1e4],
            default_c: 1.0,
            default_gamma_multiplier: 1.0,
            weight: 1.5,
            seed: 0,
            stride: 1,
            oracle_final_budget: false,
            solver: SolverSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.budget < 1 {
            return bad("budget must be at least 1");
        }
        if self.trials < 1 {
            return bad("trials must be at least 1");
        }
        if self.stride < 1 {
            return bad("stride must be at least 1");
        }
        if self.c_grid.is_empty() || self.gamma_multipliers.is_empty() {
            return bad("grids must be non-empty");
        }
        if self.methods.is_empty() {
            return bad("no methods selected");
        }
        if self.init_per_class < 2 {
            return bad("init_per_class must be at least 2 for LOOCV");
        }
        if self.weight.is_nan() || self.weight < 1.0 {
            return bad("weight must be >= 1");
        }
        Ok(())
    }

    pub fn default_model(&self, n_features: usize) -> ModelParams {
        ModelParams {
            c: self.default_c,
            gamma: self.default_gamma_multiplier / n_features as f64,
        }
    }

    pub fn grid(&self, n_features: usize) -> Result<ModelGrid> {
        let gammas: Vec<f64> = self
            .gamma_multipliers
            .iter()
            .map(|m| m / n_features as f64)
            .collect();
        ModelGrid::product(&self.c_grid, &gammas, self.default_model(n_features))
    }

    /// `0, stride, 2*stride, ...` and always the full budget.
    pub fn evaluated_budgets(&self) -> Vec<usize> {
        let mut b: Vec<usize> = (0..=self.budget).step_by(self.stride.max(1)).collect();
        if b.last() != Some(&self.budget) {
            b.push(self.budget);
        }
        b
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }

    fn wants(&self, m: MethodId) -> bool {
        self.methods.contains(&m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    /// Query counts at which each curve is evaluated.
    pub budgets: Vec<usize>,
    /// Labels consumed at each budget point (initial sample included).
    pub labels_used: Vec<usize>,
    pub curves: BTreeMap<MethodId, Vec<f64>>,
    /// Model chosen at the final budget by the selecting methods.
    pub chosen_final: BTreeMap<MethodId, ModelParams>,
    /// ORACLE's best model at each budget.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub oracle_models: Vec<ModelParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub n_features: usize,
    pub budgets: Vec<usize>,
    pub trials: Vec<TrialResult>,
    pub aggregates: BTreeMap<MethodId, Aggregate>,
}

impl ExperimentResult {
    pub fn mean_at(&self, method: MethodId, budget: usize) -> Option<f64> {
        let pos = self.budgets.iter().position(|&b| b == budget)?;
        self.aggregates.get(&method).map(|a| a.mean[pos])
    }
}

/// Prepared splits for one trial, standardized on init + pool.
#[derive(Clone, Debug)]
pub struct TrialSplits {
    pub test: Dataset,
    pub init: Dataset,
    pub pool: Dataset,
    pub rng: SeededRng,
}

pub fn prepare_trial(data: &Dataset, config: &ExperimentConfig, trial: usize) -> Result<TrialSplits> {
    let mut rng = SeededRng::new(config.trial_seed(trial));
    let (test, rest) = stratified_test_split(data, config.test_per_class, &mut rng)?;
    let scaler = Standardizer::fit(&rest)?;
    let test = scaler.apply(&test)?;
    let rest = scaler.apply(&rest)?;
    let (init, pool) = stratified_initial_sample(&rest, config.init_per_class, &mut rng)?;
    Ok(TrialSplits { test, init, pool, rng })
}

fn margin_run(splits: &TrialSplits, fixed: ModelParams, config: &ExperimentConfig) -> Result<ActiveRunRecord> {
    let mut oracle = SimulatedOracle::new(&splits.pool);
    // margin acquisition never draws from the rng
    let mut rng = splits.rng.clone();
    run_active_learning(
        &splits.init,
        &splits.pool,
        fixed,
        config.budget,
        AcquisitionStrategy::Margin,
        &mut oracle,
        &config.solver,
        &mut rng,
    )
}

fn fit_and_score(train: &Dataset, model: ModelParams, test: &Dataset, settings: &SolverSettings) -> Result<(TrainedSvm, f64)> {
    let fit = train_svc(train, model, settings)?;
    let acc = fit.accuracy(test)?;
    Ok((fit, acc))
}

/// Per-budget selection outcomes on the prefixes of one acquisition run.
struct SelectionCurves {
    palms: Vec<f64>,
    fwc: Vec<f64>,
    palms_final: ModelParams,
    fwc_final: ModelParams,
}

fn selection_curves(
    record: &ActiveRunRecord,
    budgets: &[usize],
    grid: &ModelGrid,
    test: &Dataset,
    config: &ExperimentConfig,
    with_fwc: bool,
) -> Result<SelectionCurves> {
    let settings = &config.solver;
    let per_budget = par::map(budgets, |&b| -> Result<_> {
        let train = record.training_prefix(b);
        let folds = grid_fold_correctness(&train, grid, settings)?;
        let palms = report_from_folds(&train, grid, &folds, SelectionMethod::Palms, None)?;
        let (_, palms_acc) = fit_and_score(&train, palms.chosen, test, settings)?;
        let fwc = if with_fwc {
            let fixed = train_svc(&train, grid.default_model(), settings)?;
            let report = report_from_folds(
                &train,
                grid,
                &folds,
                SelectionMethod::PalmsFwc { weight: config.weight },
                Some(&fixed),
            )?;
            let acc = if report.chosen.same_as(&palms.chosen) {
                palms_acc
            } else {
                fit_and_score(&train, report.chosen, test, settings)?.1
            };
            Some((report.chosen, acc))
        } else {
            None
        };
        Ok((palms.chosen, palms_acc, fwc))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let last = per_budget.last().expect("at least one budget");
    Ok(SelectionCurves {
        palms: per_budget.iter().map(|r| r.1).collect(),
        fwc: per_budget.iter().map(|r| r.2.map_or(f64::NAN, |f| f.1)).collect(),
        palms_final: last.0,
        fwc_final: last.2.map_or(last.0, |f| f.0),
    })
}

fn fixed_model_curve(record: &ActiveRunRecord, budgets: &[usize], model: ModelParams, test: &Dataset, settings: &SolverSettings) -> Result<Vec<f64>> {
    budgets
        .iter()
        .map(|&b| fit_and_score(&record.training_prefix(b), model, test, settings).map(|(_, a)| a))
        .collect()
}

/// One trial of the protocol. Every method sees the same test set and
/// initial sample; the trial is a pure function of `(data, config, trial)`.
pub fn run_trial(data: &Dataset, config: &ExperimentConfig, trial: usize) -> Result<TrialResult> {
    config.validate()?;
    let wrap = |e: Error| Error::Trial {
        trial,
        source: Box::new(e),
    };
    let splits = prepare_trial(data, config, trial).map_err(wrap)?;
    run_trial_on(&splits, data.n_features(), config, trial).map_err(wrap)
}

fn run_trial_on(splits: &TrialSplits, n_features: usize, config: &ExperimentConfig, trial: usize) -> Result<TrialResult> {
    let budgets = config.evaluated_budgets();
    let grid = config.grid(n_features)?;
    let default = grid.default_model();
    let settings = &config.solver;
    let test = &splits.test;
    let mut curves = BTreeMap::new();
    let mut chosen_final = BTreeMap::new();
    let mut oracle_models = Vec::new();

    let need_fixed_run = [MethodId::Default, MethodId::Oracle, MethodId::Palms, MethodId::PalmsFwc]
        .iter()
        .any(|&m| config.wants(m));
    let fixed_run = if need_fixed_run {
        Some(margin_run(splits, default, config)?)
    } else {
        None
    };
    let labels_used: Vec<usize> = budgets
        .iter()
        .map(|&b| splits.init.len() + b.min(splits.pool.len()))
        .collect();

    let default_curve = match &fixed_run {
        Some(run) if config.wants(MethodId::Default) || config.wants(MethodId::Oracle) => {
            Some(fixed_model_curve(run, &budgets, default, test, settings)?)
        }
        _ => None,
    };
    if config.wants(MethodId::Default) {
        curves.insert(MethodId::Default, default_curve.clone().expect("computed above"));
    }

    if let Some(run) = &fixed_run {
        let want_palms = config.wants(MethodId::Palms);
        let want_fwc = config.wants(MethodId::PalmsFwc);
        if want_palms || want_fwc {
            let sel = selection_curves(run, &budgets, &grid, test, config, want_fwc)?;
            if want_palms {
                curves.insert(MethodId::Palms, sel.palms);
                chosen_final.insert(MethodId::Palms, sel.palms_final);
            }
            if want_fwc {
                curves.insert(MethodId::PalmsFwc, sel.fwc);
                chosen_final.insert(MethodId::PalmsFwc, sel.fwc_final);
            }
        }
    }

    if config.wants(MethodId::Random) {
        let mut rng = splits.rng.clone();
        let mut oracle = SimulatedOracle::new(&splits.pool);
        let run = run_active_learning(
            &splits.init,
            &splits.pool,
            default,
            config.budget,
            AcquisitionStrategy::Random,
            &mut oracle,
            settings,
            &mut rng,
        )?;
        let sel = selection_curves(&run, &budgets, &grid, test, config, false)?;
        curves.insert(MethodId::Random, sel.palms);
        chosen_final.insert(MethodId::Random, sel.palms_final);
    }

    if config.wants(MethodId::Oracle) {
        let default_curve = default_curve.expect("computed above");
        let per_model: Vec<Vec<f64>> = par::map_range(grid.len(), |i| {
            if i == grid.default_index() {
                return Ok(default_curve.clone());
            }
            let model = grid.models()[i];
            let run = margin_run(splits, model, config)?;
            fixed_model_curve(&run, &budgets, model, test, settings)
        })
        .into_iter()
        .collect::<Result<_>>()?;

        let best_of = |pos: usize| -> usize {
            let mut best = 0;
            for i in 1..grid.len() {
                let (a, b) = (per_model[i][pos], per_model[best][pos]);
                if a > b || (a == b && grid.models()[i].simplicity_cmp(&grid.models()[best]).is_lt()) {
                    best = i;
                }
            }
            best
        };
        let curve: Vec<f64> = if config.oracle_final_budget {
            let star = best_of(budgets.len() - 1);
            oracle_models = vec![grid.models()[star]; budgets.len()];
            per_model[star].clone()
        } else {
            (0..budgets.len())
                .map(|pos| {
                    let star = best_of(pos);
                    oracle_models.push(grid.models()[star]);
                    per_model[star][pos]
                })
                .collect()
        };
        chosen_final.insert(MethodId::Oracle, *oracle_models.last().expect("non-empty"));
        curves.insert(MethodId::Oracle, curve);
    }

    Ok(TrialResult {
        trial,
        seed: config.trial_seed(trial),
        budgets,
        labels_used,
        curves,
        chosen_final,
        oracle_models,
    })
}

/// Population mean and standard deviation per budget point.
pub fn aggregate(trials: &[TrialResult], method: MethodId) -> Option<Aggregate> {
    let curves: Vec<&Vec<f64>> = trials.iter().filter_map(|t| t.curves.get(&method)).collect();
    let first = curves.first()?;
    let n = curves.len() as f64;
    let mut mean = vec![0.0; first.len()];
    for c in &curves {
        for (m, v) in mean.iter_mut().zip(c.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut std = vec![0.0; first.len()];
    for c in &curves {
        for ((s, v), m) in std.iter_mut().zip(c.iter()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    std.iter_mut().for_each(|s| *s = (*s / n).sqrt());
    Some(Aggregate { mean, std })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let data = load_csv(&config.dataset)?;
    run_experiment_on(&data, config)
}

/// Runs every trial (in parallel when enabled) and aggregates in trial order.
pub fn run_experiment_on(data: &Dataset, config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let outcomes = par::map_range(config.trials, |t| run_trial(data, config, t));
    let mut trials = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(t) => trials.push(t),
            Err(e) => failures.push(e),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Experiment(failures));
    }
    let aggregates = MethodId::ALL
        .iter()
        .filter_map(|&m| aggregate(&trials, m).map(|a| (m, a)))
        .collect();
    Ok(ExperimentResult {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        n_features: data.n_features(),
        budgets: config.evaluated_budgets(),
        trials,
        aggregates,
    })
}

/// Where the limited-set neighbors are searched.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborPool {
    /// The drawn balanced test set itself.
    TestSet,
    /// Every point of the dataset.
    FullDataset,
}

impl FromStr for NeighborPool {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "test" | "test_set" => Ok(NeighborPool::TestSet),
            "full" | "full_dataset" | "dataset" => Ok(NeighborPool::FullDataset),
            other => Err(format!("unknown neighbor pool `{other}` (expected `test` or `full`)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitedSurvey {
    pub fractions: Vec<f64>,
    pub mean: f64,
}

/// Mean limited-set fraction over `draws` balanced test sets drawn with seeds
/// `seed, seed + 1, ...`. Features are standardized on the whole dataset.
pub fn limited_survey(
    data: &Dataset,
    params: &LimitedSetParams,
    pool: NeighborPool,
    test_per_class: usize,
    draws: usize,
    seed: u64,
) -> Result<LimitedSurvey> {
    if draws == 0 {
        return Err(Error::InvalidParameter("draws must be at least 1".into()));
    }
    params.validate()?;
    let scaled = Standardizer::fit(data)?.apply(data)?;
    let mut fractions = Vec::with_capacity(draws);
    for d in 0..draws {
        let mut rng = SeededRng::new(seed.wrapping_add(d as u64));
        let (test, _) = stratified_test_split(&scaled, test_per_class, &mut rng)?;
        let reference = match pool {
            NeighborPool::TestSet => &test,
            NeighborPool::FullDataset => &scaled,
        };
        fractions.push(limited_fraction(&test, reference, params)?);
    }
    let mean = fractions.iter().sum::<f64>() / draws as f64;
    Ok(LimitedSurvey { fractions, mean })
}
