//! Pool-based active learning with margin (closest-to-boundary) acquisition.

use std::collections::HashMap;
use std::sync::mpsc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{ClassLabel, Dataset, LabeledPoint, PointId, SeededRng};
use crate::error::{Error, Result};
use crate::svm::{train_svc, ModelParams, SolverSettings, TrainedSvm};

/// Source of labels for queried points. Answers must be stable within a run.
pub trait LabelOracle {
    fn label(&mut self, id: PointId) -> std::result::Result<ClassLabel, String>;
}

impl<F> LabelOracle for F
where
    F: FnMut(PointId) -> std::result::Result<ClassLabel, String>,
{
    fn label(&mut self, id: PointId) -> std::result::Result<ClassLabel, String> {
        self(id)
    }
}

/// Answers from held-back true labels.
#[derive(Clone, Debug)]
pub struct SimulatedOracle {
    labels: HashMap<PointId, ClassLabel>,
}

impl SimulatedOracle {
    pub fn new(truth: &Dataset) -> Self {
        SimulatedOracle {
            labels: truth.iter().map(|p| (p.id, p.y)).collect(),
        }
    }
}

impl LabelOracle for SimulatedOracle {
    fn label(&mut self, id: PointId) -> std::result::Result<ClassLabel, String> {
        self.labels
            .get(&id)
            .copied()
            .ok_or_else(|| format!("no label held for point {id}"))
    }
}

/// Forwards each query over a channel and blocks until an answer arrives.
pub struct ChannelOracle {
    queries: mpsc::Sender<PointId>,
    answers: mpsc::Receiver<ClassLabel>,
}

impl ChannelOracle {
    /// Returns the oracle plus the labeler's ends of the two channels.
    pub fn new() -> (Self, mpsc::Receiver<PointId>, mpsc::Sender<ClassLabel>) {
        let (qtx, qrx) = mpsc::channel();
        let (atx, arx) = mpsc::channel();
        (
            ChannelOracle {
                queries: qtx,
                answers: arx,
            },
            qrx,
            atx,
        )
    }
}

impl LabelOracle for ChannelOracle {
    fn label(&mut self, id: PointId) -> std::result::Result<ClassLabel, String> {
        self.queries.send(id).map_err(|_| "labeler disconnected".to_string())?;
        self.answers.recv().map_err(|_| "labeler disconnected".to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionStrategy {
    /// Query the pool point nearest the current decision boundary.
    Margin,
    /// Uniform sampling without replacement.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub step: usize,
    pub id: PointId,
    /// `|f(x)|` at query time; absent for random sampling.
    pub distance: Option<f64>,
    pub label: ClassLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActiveRunRecord {
    pub initial: Dataset,
    pub queries: Vec<QueryRecord>,
    pub final_training_set: Dataset,
    pub fixed_model: ModelParams,
    pub strategy: AcquisitionStrategy,
    pub requested_budget: usize,
}

impl ActiveRunRecord {
    /// Training set after the first `queries` acquisitions.
    pub fn training_prefix(&self, queries: usize) -> Dataset {
        self.final_training_set.prefix(self.initial.len() + queries)
    }

    pub fn pool_exhausted(&self) -> bool {
        self.queries.len() < self.requested_budget
    }
}

/// Pool id with the smallest `|f(x)|`; ties go to the smaller id.
pub fn acquire_next(model: &TrainedSvm, pool: &Dataset) -> Result<PointId> {
    acquire_from(model, pool.iter().map(|p| (p.id, p.x.as_slice()))).map(|(id, _)| id)
}

/// Like [`acquire_next`] over arbitrary candidates; also returns the distance.
pub fn acquire_from<'a>(
    model: &TrainedSvm,
    candidates: impl IntoIterator<Item = (PointId, &'a [f64])>,
) -> Result<(PointId, f64)> {
    let mut best: Option<(PointId, f64)> = None;
    for (id, x) in candidates {
        let d = model.boundary_distance(x)?;
        best = match best {
            Some((bid, bd)) if bd < d || (bd == d && bid < id) => Some((bid, bd)),
            _ => Some((id, d)),
        };
    }
    best.ok_or(Error::EmptyPool)
}

/// Step-wise margin learner: the loop body of the acquisition phase, usable
/// when labels arrive asynchronously.
#[derive(Clone, Debug)]
pub struct MarginLearner {
    fixed: ModelParams,
    settings: SolverSettings,
    training: Dataset,
    pool: Vec<(PointId, Vec<f64>)>,
}

/// The point a [`MarginLearner`] wants labeled next.
#[derive(Clone, Debug)]
pub struct Proposal {
    pub id: PointId,
    pub distance: f64,
    pub model: TrainedSvm,
}

impl MarginLearner {
    pub fn new(
        training: Dataset,
        pool: Vec<(PointId, Vec<f64>)>,
        fixed: ModelParams,
        settings: SolverSettings,
    ) -> Result<Self> {
        fixed.validate()?;
        for (id, x) in &pool {
            if x.len() != training.n_features() {
                return Err(Error::DimensionMismatch {
                    expected: training.n_features(),
                    actual: x.len(),
                });
            }
            if training.contains(*id) {
                return Err(Error::InvalidParameter(format!("point {id} is both labeled and in the pool")));
            }
        }
        Ok(MarginLearner {
            fixed,
            settings,
            training,
            pool,
        })
    }

    pub fn training(&self) -> &Dataset {
        &self.training
    }

    pub fn pool_len(&self) -> usize {
        self.pool.len()
    }

    /// Trains the fixed model on the current training set and picks the
    /// closest pool point. `None` once the pool is empty.
    pub fn propose(&self) -> Result<Option<Proposal>> {
        if self.pool.is_empty() {
            return Ok(None);
        }
        let model = train_svc(&self.training, self.fixed, &self.settings)?;
        let (id, distance) = acquire_from(&model, self.pool.iter().map(|(id, x)| (*id, x.as_slice())))?;
        Ok(Some(Proposal { id, distance, model }))
    }

    /// Moves `id` from the pool into the training set with `label`.
    pub fn add_label(&mut self, id: PointId, label: ClassLabel) -> Result<()> {
        let pos = self
            .pool
            .iter()
            .position(|(pid, _)| *pid == id)
            .ok_or(Error::UnknownPoint(id))?;
        let (_, x) = self.pool.remove(pos);
        self.training.push(LabeledPoint { id, x, y: label })
    }
}

/// Runs `min(budget, |pool|)` query-label iterations from `init`.
///
/// Margin: retrain the fixed model before every acquisition. Random: draw the
/// whole sample up front with `rng`; no model is trained. Labels for pool
/// points are obtained only through `oracle`.
#[allow(clippy::too_many_arguments)]
pub fn run_active_learning(
    init: &Dataset,
    pool: &Dataset,
    fixed: ModelParams,
    budget: usize,
    strategy: AcquisitionStrategy,
    oracle: &mut dyn LabelOracle,
    settings: &SolverSettings,
    rng: &mut SeededRng,
) -> Result<ActiveRunRecord> {
    fixed.validate()?;
    let counts = init.class_counts();
    if strategy == AcquisitionStrategy::Margin && (counts[0] == 0 || counts[1] == 0) {
        return Err(Error::SingleClass {
            present: if counts[0] == 0 { ClassLabel::One } else { ClassLabel::Zero },
        });
    }
    if pool.n_features() != init.n_features() && !pool.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: init.n_features(),
            actual: pool.n_features(),
        });
    }
    let steps = budget.min(pool.len());
    let mut record = ActiveRunRecord {
        initial: init.clone(),
        queries: Vec::with_capacity(steps),
        final_training_set: init.clone(),
        fixed_model: fixed,
        strategy,
        requested_budget: budget,
    };

    match strategy {
        AcquisitionStrategy::Random => {
            let mut ids = pool.ids();
            let (drawn, _) = ids.partial_shuffle(rng, steps);
            for (step, &id) in drawn.iter().enumerate() {
                let label = ask(oracle, id, &mut record)?;
                let x = pool.get(id).ok_or(Error::UnknownPoint(id))?.x.clone();
                record.final_training_set.push(LabeledPoint { id, x, y: label })?;
                record.queries.push(QueryRecord {
                    step,
                    id,
                    distance: None,
                    label,
                });
            }
        }
        AcquisitionStrategy::Margin => {
            let mut learner = MarginLearner::new(
                init.clone(),
                pool.iter().map(|p| (p.id, p.x.clone())).collect(),
                fixed,
                *settings,
            )?;
            for step in 0..steps {
                let Some(proposal) = learner.propose()? else { break };
                let label = ask(oracle, proposal.id, &mut record)?;
                learner.add_label(proposal.id, label)?;
                record.queries.push(QueryRecord {
                    step,
                    id: proposal.id,
                    distance: Some(proposal.distance),
                    label,
                });
                record.final_training_set = learner.training().clone();
            }
            record.final_training_set = learner.training.clone();
        }
    }
    Ok(record)
}

fn ask(oracle: &mut dyn LabelOracle, id: PointId, record: &mut ActiveRunRecord) -> Result<ClassLabel> {
    oracle.label(id).map_err(|message| Error::Oracle {
        message,
        partial: Box::new(record.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::stratified_initial_sample;
    use std::collections::HashSet;

    fn blobs(n: usize) -> Dataset {
        let rows = (0..n)
            .map(|i| {
                let t = i as f64 / n as f64;
                let y = if i % 2 == 0 { ClassLabel::Zero } else { ClassLabel::One };
                let shift = if y == ClassLabel::One { 0.8 } else { -0.8 };
                (vec![shift + (t * 17.0).sin(), (t * 29.0).cos()], y)
            })
            .collect();
        Dataset::from_rows(rows).unwrap()
    }

    fn params() -> ModelParams {
        ModelParams::new(1.0, 0.5).unwrap()
    }

    fn run(budget: usize, strategy: AcquisitionStrategy, seed: u64) -> ActiveRunRecord {
        let data = blobs(40);
        let mut rng = SeededRng::new(seed);
        let (init, pool) = stratified_initial_sample(&data, 2, &mut rng).unwrap();
        let mut oracle = SimulatedOracle::new(&pool);
        run_active_learning(
            &init,
            &pool,
            params(),
            budget,
            strategy,
            &mut oracle,
            &SolverSettings::default(),
            &mut rng,
        )
        .unwrap()
    }

    fn model_with_bias(bias: f64) -> TrainedSvm {
        TrainedSvm {
            params: params(),
            support: vec![],
            bias,
            training_size: 0,
            n_features: 1,
            dual_objective: 0.0,
            kkt_violation: 0.0,
            iterations: 0,
        }
    }

    /// A bias-only model plus a pool whose points carry distances as `x`
    /// cannot express per-point distances, so use one support vector with a
    /// tiny gamma making f(x) ~ linear in x around 0.
    fn pool_with_distances(ds: &[(PointId, f64)]) -> (TrainedSvm, Dataset) {
        let mut m = model_with_bias(0.0);
        m.params.gamma = 1e-9;
        m.support.push(crate::svm::SupportVector {
            id: 999,
            x: vec![0.0],
            coef: 1.0,
        });
        m.bias = -1.0;
        // f(x) = exp(-1e-9 x^2) - 1 ~ -1e-9 x^2, |f| increases with |x|
        let points = ds
            .iter()
            .map(|&(id, d)| LabeledPoint {
                id,
                x: vec![d * 1000.0],
                y: ClassLabel::Zero,
            })
            .collect();
        (m, Dataset::new(1, points).unwrap())
    }

    #[test]
    fn acquires_argmin_distance() {
        let (m, pool) = pool_with_distances(&[(7, 0.9), (2, 0.1), (5, 0.4)]);
        assert_eq!(acquire_next(&m, &pool).unwrap(), 2);
    }

    #[test]
    fn ties_go_to_smallest_id() {
        let (m, pool) = pool_with_distances(&[(9, 0.2), (3, 0.2)]);
        assert_eq!(acquire_next(&m, &pool).unwrap(), 3);
    }

    #[test]
    fn singleton_and_empty_pools() {
        let (m, pool) = pool_with_distances(&[(4, 100.0)]);
        assert_eq!(acquire_next(&m, &pool).unwrap(), 4);
        assert!(matches!(acquire_next(&m, &Dataset::empty(1)), Err(Error::EmptyPool)));
    }

    #[test]
    fn zero_budget_keeps_init() {
        let r = run(0, AcquisitionStrategy::Margin, 1);
        assert!(r.queries.is_empty());
        assert_eq!(r.final_training_set, r.initial);
    }

    #[test]
    fn budget_adds_exactly_that_many_labels() {
        let r = run(25, AcquisitionStrategy::Margin, 3);
        assert_eq!(r.final_training_set.len(), 29);
        let ids: HashSet<_> = r.queries.iter().map(|q| q.id).collect();
        assert_eq!(ids.len(), 25);
        assert!(r.queries.iter().all(|q| !r.initial.contains(q.id)));
        assert!(r.queries.iter().all(|q| q.distance.is_some()));
    }

    #[test]
    fn budget_larger_than_pool_exhausts_it() {
        let r = run(100, AcquisitionStrategy::Margin, 4);
        assert_eq!(r.queries.len(), 36);
        assert!(r.pool_exhausted());
        let r = run(100, AcquisitionStrategy::Random, 4);
        assert_eq!(r.queries.len(), 36);
    }

    #[test]
    fn margin_runs_are_reproducible() {
        let a = run(15, AcquisitionStrategy::Margin, 8);
        let b = run(15, AcquisitionStrategy::Margin, 8);
        assert_eq!(a, b);
    }

    #[test]
    fn oracle_failure_carries_partial_record() {
        let data = blobs(30);
        let mut rng = SeededRng::new(2);
        let (init, pool) = stratified_initial_sample(&data, 2, &mut rng).unwrap();
        let truth = SimulatedOracle::new(&pool);
        let mut calls = 0;
        let mut oracle = |id: PointId| {
            calls += 1;
            if calls > 3 {
                Err("labeler went home".to_string())
            } else {
                truth.clone().label(id)
            }
        };
        let err = run_active_learning(
            &init,
            &pool,
            params(),
            10,
            AcquisitionStrategy::Margin,
            &mut oracle,
            &SolverSettings::default(),
            &mut rng,
        )
        .unwrap_err();
        match err {
            Error::Oracle { partial, .. } => assert_eq!(partial.queries.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn channel_oracle_round_trip() {
        let data = blobs(20);
        let mut rng = SeededRng::new(5);
        let (init, pool) = stratified_initial_sample(&data, 2, &mut rng).unwrap();
        let truth = SimulatedOracle::new(&pool);
        let (mut oracle, queries, answers) = ChannelOracle::new();
        let labeler = std::thread::spawn(move || {
            let mut truth = truth;
            for id in queries {
                if answers.send(truth.label(id).unwrap()).is_err() {
                    break;
                }
            }
        });
        let r = run_active_learning(
            &init,
            &pool,
            params(),
            5,
            AcquisitionStrategy::Margin,
            &mut oracle,
            &SolverSettings::default(),
            &mut rng,
        )
        .unwrap();
        drop(oracle);
        labeler.join().unwrap();
        assert_eq!(r.queries.len(), 5);
    }
}
