//! Post-hoc model selection on an actively sampled training set.
//!
//! PALMS scores every grid model by leave-one-out accuracy on the labeled set
//! and keeps the best, preferring smaller gamma and then smaller C on ties.
//! PALMS-fwc additionally reweights the held-out points when scoring the fixed
//! acquisition model: points at least the per-side median distance from that
//! model's boundary count `w` times.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::active::{run_active_learning, AcquisitionStrategy, ActiveRunRecord, LabelOracle};
use crate::data::{Dataset, PointId, SeededRng};
use crate::error::{Error, Result};
use crate::par;
use crate::svm::{
    decision_from_gram, gram_matrix, label_of, train_svc, train_with_gram, ModelParams, SolverSettings,
    TrainedSvm,
};

/// Candidate models; the fixed acquisition model is always a member.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelGrid {
    models: Vec<ModelParams>,
    default_index: usize,
}

impl ModelGrid {
    pub fn new(models: Vec<ModelParams>, default: ModelParams) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::InvalidParameter("model grid is empty".into()));
        }
        for (i, m) in models.iter().enumerate() {
            m.validate()?;
            if models[..i].iter().any(|o| o.same_as(m)) {
                return Err(Error::InvalidParameter(format!("duplicate grid model {m}")));
            }
        }
        let default_index = models
            .iter()
            .position(|m| m.same_as(&default))
            .ok_or_else(|| Error::InvalidParameter(format!("default model {default} is not on the grid")))?;
        Ok(ModelGrid { models, default_index })
    }

    /// Cartesian product, C-major.
    pub fn product(c_values: &[f64], gamma_values: &[f64], default: ModelParams) -> Result<Self> {
        let models = c_values
            .iter()
            .flat_map(|&c| gamma_values.iter().map(move |&gamma| ModelParams { c, gamma }))
            .collect();
        ModelGrid::new(models, default)
    }

    pub fn singleton(default: ModelParams) -> Result<Self> {
        ModelGrid::new(vec![default], default)
    }

    pub fn models(&self) -> &[ModelParams] {
        &self.models
    }

    pub fn default_index(&self) -> usize {
        self.default_index
    }

    pub fn default_model(&self) -> ModelParams {
        self.models[self.default_index]
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum SelectionMethod {
    Palms,
    PalmsFwc { weight: f64 },
}

impl SelectionMethod {
    pub fn name(&self) -> &'static str {
        match self {
            SelectionMethod::Palms => "PALMS",
            SelectionMethod::PalmsFwc { .. } => "PALMS-fwc",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoocvScore {
    pub model: ModelParams,
    pub accuracy: f64,
    pub weighted: bool,
    /// Whether hold-out fold `j` predicted point `j` correctly, in training order.
    pub fold_correct: Vec<bool>,
    /// Per-point weights when `weighted`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl LoocvScore {
    pub fn plain(model: ModelParams, fold_correct: Vec<bool>) -> Self {
        let correct = fold_correct.iter().filter(|&&c| c).count();
        LoocvScore {
            model,
            accuracy: correct as f64 / fold_correct.len() as f64,
            weighted: false,
            fold_correct,
            weights: None,
        }
    }

    pub fn weighted(model: ModelParams, fold_correct: Vec<bool>, weights: &[f64]) -> Self {
        LoocvScore {
            model,
            accuracy: weighted_fraction(&fold_correct, weights),
            weighted: true,
            fold_correct,
            weights: Some(weights.to_vec()),
        }
    }
}

/// `sum_j w_j [correct_j] / sum_j w_j`.
pub fn weighted_fraction(fold_correct: &[bool], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    let hit: f64 = fold_correct
        .iter()
        .zip(weights)
        .filter(|(&c, _)| c)
        .map(|(_, w)| w)
        .sum();
    hit / total
}

/// Per-side median cutoffs; `f64::INFINITY` for a side no point is predicted on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoffs {
    #[serde(with = "inf_as_null")]
    pub class0: f64,
    #[serde(with = "inf_as_null")]
    pub class1: f64,
}

impl Cutoffs {
    pub fn for_class(&self, label: crate::data::ClassLabel) -> f64 {
        match label {
            crate::data::ClassLabel::Zero => self.class0,
            crate::data::ClassLabel::One => self.class1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightAssignment {
    pub cutoffs: Cutoffs,
    pub w: f64,
    /// Training-set ids, aligned with `weights`.
    pub ids: Vec<PointId>,
    pub weights: Vec<f64>,
}

impl WeightAssignment {
    pub fn weighted_count(&self) -> usize {
        self.weights.iter().filter(|&&v| v != 1.0).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// A single model had the top score.
    Unique,
    /// Resolved by the smallest gamma among the tied models.
    SmallerGamma,
    /// Gamma also tied; resolved by the smallest C.
    SmallerC,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TieTrace {
    pub top_accuracy: f64,
    pub tied: Vec<ModelParams>,
    pub resolved_by: TieBreak,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub method: SelectionMethod,
    pub scores: Vec<LoocvScore>,
    pub chosen: ModelParams,
    pub tie_trace: TieTrace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_assignment: Option<WeightAssignment>,
}

impl SelectionReport {
    pub fn score_of(&self, model: &ModelParams) -> Option<&LoocvScore> {
        self.scores.iter().find(|s| s.model.same_as(model))
    }
}

fn check_loocv_feasible(train: &Dataset) -> Result<()> {
    if train.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "LOOCV needs at least 3 points, got {}",
            train.len()
        )));
    }
    Ok(())
}

/// Hold-out correctness for every point of `train` under `model`.
///
/// One Gram matrix is built per call and every fold trains from scratch on
/// its restriction.
pub fn fold_correctness(train: &Dataset, model: ModelParams, settings: &SolverSettings) -> Result<Vec<bool>> {
    model.validate()?;
    check_loocv_feasible(train)?;
    let gram = gram_matrix(train, model.gamma);
    let n = train.len();
    let mut rows: Vec<usize> = (1..n).collect();
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        if j > 0 {
            // rows = 0..n without j, kept sorted
            rows[j - 1] = j - 1;
        }
        let fit = train_with_gram(train, &rows, &gram, model, settings).map_err(|e| Error::Fold {
            fold: j,
            source: Box::new(e),
        })?;
        let predicted = label_of(decision_from_gram(&fit, train, &gram, j));
        out.push(predicted == train.points()[j].y);
    }
    Ok(out)
}

/// Plain leave-one-out accuracy.
pub fn loocv_accuracy(train: &Dataset, model: ModelParams, settings: &SolverSettings) -> Result<LoocvScore> {
    Ok(LoocvScore::plain(model, fold_correctness(train, model, settings)?))
}

/// Leave-one-out accuracy with fixed per-point weights (computed once from the
/// full-set fixed model, not per fold).
pub fn weighted_loocv_accuracy(
    train: &Dataset,
    model: ModelParams,
    weights: &WeightAssignment,
    settings: &SolverSettings,
) -> Result<LoocvScore> {
    check_weights_align(train, weights)?;
    let folds = fold_correctness(train, model, settings)?;
    Ok(LoocvScore::weighted(model, folds, &weights.weights))
}

fn check_weights_align(train: &Dataset, weights: &WeightAssignment) -> Result<()> {
    if weights.ids.len() != train.len() || weights.ids.iter().zip(train.iter()).any(|(&id, p)| id != p.id) {
        return Err(Error::InvalidParameter(
            "weights are not aligned with the training set".into(),
        ));
    }
    Ok(())
}

/// Highest accuracy wins; ties prefer smaller gamma, then smaller C.
pub fn select_best(scores: &[LoocvScore], grid: &ModelGrid) -> Result<(ModelParams, TieTrace)> {
    if grid.is_empty() || scores.is_empty() {
        return Err(Error::InvalidParameter("nothing to select from".into()));
    }
    if scores.len() != grid.len() || !grid.models().iter().all(|m| scores.iter().any(|s| s.model.same_as(m))) {
        return Err(Error::InvalidParameter("scores do not cover the grid".into()));
    }
    let best = scores
        .iter()
        .min_by(|a, b| rank(a, b))
        .expect("non-empty scores");
    let top = best.accuracy;
    let mut tied: Vec<ModelParams> = scores.iter().filter(|s| s.accuracy == top).map(|s| s.model).collect();
    tied.sort_by(|a, b| a.simplicity_cmp(b));
    let resolved_by = if tied.len() == 1 {
        TieBreak::Unique
    } else if tied.iter().filter(|m| m.gamma == best.model.gamma).count() == 1 {
        TieBreak::SmallerGamma
    } else {
        TieBreak::SmallerC
    };
    Ok((
        best.model,
        TieTrace {
            top_accuracy: top,
            tied,
            resolved_by,
        },
    ))
}

fn rank(a: &LoocvScore, b: &LoocvScore) -> Ordering {
    b.accuracy
        .total_cmp(&a.accuracy)
        .then_with(|| a.model.simplicity_cmp(&b.model))
}

/// Median `|f|` over the training points predicted as each class.
pub fn compute_cutoffs(fixed_model: &TrainedSvm, train: &Dataset) -> Result<Cutoffs> {
    let mut sides: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for p in train {
        let f = fixed_model.decision_value(&p.x)?;
        sides[label_of(f).index()].push(f.abs());
    }
    Ok(Cutoffs {
        class0: median(&mut sides[0]),
        class1: median(&mut sides[1]),
    })
}

/// Median with the midpoint rule for even counts; `+inf` when empty.
pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::INFINITY;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// `w` for points at or beyond their predicted side's cutoff, 1 otherwise.
/// True labels are not consulted.
pub fn assign_weights(fixed_model: &TrainedSvm, train: &Dataset, cutoffs: Cutoffs, w: f64) -> Result<WeightAssignment> {
    if !(w >= 1.0 && w.is_finite()) {
        return Err(Error::InvalidParameter(format!("weight must be >= 1, got {w}")));
    }
    let mut weights = Vec::with_capacity(train.len());
    for p in train {
        let f = fixed_model.decision_value(&p.x)?;
        let far = f.abs() >= cutoffs.for_class(label_of(f));
        weights.push(if far { w } else { 1.0 });
    }
    Ok(WeightAssignment {
        cutoffs,
        w,
        ids: train.ids(),
        weights,
    })
}

/// Hold-out correctness for every grid model, in grid order.
pub fn grid_fold_correctness(
    train: &Dataset,
    grid: &ModelGrid,
    settings: &SolverSettings,
) -> Result<Vec<Vec<bool>>> {
    check_loocv_feasible(train)?;
    par::map(grid.models(), |&m| fold_correctness(train, m, settings))
        .into_iter()
        .collect()
}

/// Assembles a selection report from precomputed fold correctness.
/// `fixed_model` is the default model trained on all of `train`; it is only
/// read for PALMS-fwc.
pub fn report_from_folds(
    train: &Dataset,
    grid: &ModelGrid,
    folds: &[Vec<bool>],
    method: SelectionMethod,
    fixed_model: Option<&TrainedSvm>,
) -> Result<SelectionReport> {
    let mut weight_assignment = None;
    let scores: Vec<LoocvScore> = match method {
        SelectionMethod::Palms => grid
            .models()
            .iter()
            .zip(folds)
            .map(|(&m, f)| LoocvScore::plain(m, f.clone()))
            .collect(),
        SelectionMethod::PalmsFwc { weight } => {
            let fixed = fixed_model.ok_or_else(|| {
                Error::InvalidParameter("PALMS-fwc needs the default model fitted on the training set".into())
            })?;
            let cutoffs = compute_cutoffs(fixed, train)?;
            let assignment = assign_weights(fixed, train, cutoffs, weight)?;
            let scores = grid
                .models()
                .iter()
                .zip(folds)
                .enumerate()
                .map(|(i, (&m, f))| {
                    if i == grid.default_index() {
                        LoocvScore::weighted(m, f.clone(), &assignment.weights)
                    } else {
                        LoocvScore::plain(m, f.clone())
                    }
                })
                .collect();
            weight_assignment = Some(assignment);
            scores
        }
    };
    let (chosen, tie_trace) = select_best(&scores, grid)?;
    Ok(SelectionReport {
        method,
        scores,
        chosen,
        tie_trace,
        weight_assignment,
    })
}

/// Scores the grid on `train` with `method`, then fits the chosen model on all of `train`.
pub fn select_model(
    train: &Dataset,
    grid: &ModelGrid,
    method: SelectionMethod,
    settings: &SolverSettings,
) -> Result<(SelectionReport, TrainedSvm)> {
    let folds = grid_fold_correctness(train, grid, settings)?;
    let fixed = match method {
        SelectionMethod::Palms => None,
        SelectionMethod::PalmsFwc { .. } => Some(train_svc(train, grid.default_model(), settings)?),
    };
    let report = report_from_folds(train, grid, &folds, method, fixed.as_ref())?;
    let model = train_svc(train, report.chosen, settings)?;
    Ok((report, model))
}

/// Margin active learning with the grid's default model, then PALMS selection.
#[allow(clippy::too_many_arguments)]
pub fn run_palms(
    init: &Dataset,
    pool: &Dataset,
    budget: usize,
    grid: &ModelGrid,
    oracle: &mut dyn LabelOracle,
    settings: &SolverSettings,
    rng: &mut SeededRng,
) -> Result<(SelectionReport, ActiveRunRecord, TrainedSvm)> {
    run_with_method(init, pool, budget, grid, SelectionMethod::Palms, oracle, settings, rng)
}

/// As [`run_palms`], scoring the default model with weighted LOOCV.
#[allow(clippy::too_many_arguments)]
pub fn run_palms_fwc(
    init: &Dataset,
    pool: &Dataset,
    budget: usize,
    grid: &ModelGrid,
    weight: f64,
    oracle: &mut dyn LabelOracle,
    settings: &SolverSettings,
    rng: &mut SeededRng,
) -> Result<(SelectionReport, ActiveRunRecord, TrainedSvm)> {
    run_with_method(
        init,
        pool,
        budget,
        grid,
        SelectionMethod::PalmsFwc { weight },
        oracle,
        settings,
        rng,
    )
}

#[allow(clippy::too_many_arguments)]
fn run_with_method(
    init: &Dataset,
    pool: &Dataset,
    budget: usize,
    grid: &ModelGrid,
    method: SelectionMethod,
    oracle: &mut dyn LabelOracle,
    settings: &SolverSettings,
    rng: &mut SeededRng,
) -> Result<(SelectionReport, ActiveRunRecord, TrainedSvm)> {
    if let SelectionMethod::PalmsFwc { weight } = method {
        if weight.is_nan() || weight < 1.0 {
            return Err(Error::InvalidParameter(format!("weight must be >= 1, got {weight}")));
        }
    }
    let record = run_active_learning(
        init,
        pool,
        grid.default_model(),
        budget,
        AcquisitionStrategy::Margin,
        oracle,
        settings,
        rng,
    )?;
    let (report, model) = select_model(&record.final_training_set, grid, method, settings)?;
    Ok((report, record, model))
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
