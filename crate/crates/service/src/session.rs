//! One labeling session: random bootstrap until both classes have enough
//! labels, then margin queries under the fixed model, then selection.

use std::fmt;

use palms_core::active::MarginLearner;
use palms_core::selection::select_model;
use palms_core::{
    ClassLabel, Dataset, LabeledPoint, ModelGrid, ModelParams, PointId, SeededRng, SelectionMethod,
    SelectionReport, SolverSettings, Standardizer,
};
use rand::Rng;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::error::{ServiceError, ServiceResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Labels the human will provide, bootstrap included.
    pub budget: usize,
    pub method: SelectionMethod,
    /// Seeds the bootstrap draws.
    pub seed: u64,
    pub c_grid: Vec<f64>,
    /// Gamma candidates as multiples of `1 / n_features`.
    pub gamma_multipliers: Vec<f64>,
    pub default_c: f64,
    pub default_gamma_multiplier: f64,
    /// Random queries continue until each class has this many labels.
    pub bootstrap_per_class: usize,
    pub solver: SolverSettings,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            budget: 20,
            method: SelectionMethod::Palms,
            seed: 0,
            c_grid: vec![0.01, 1.0, 100.0, 1e4],
            gamma_multipliers: vec![1e-4, 1e-2, 1.0, 1e2, 1e4],
            default_c: 1.0,
            default_gamma_multiplier: 1.0,
            bootstrap_per_class: 2,
            solver: SolverSettings::default(),
        }
    }
}

impl SessionConfig {
    pub fn default_model(&self, n_features: usize) -> ModelParams {
        ModelParams {
            c: self.default_c,
            gamma: self.default_gamma_multiplier / n_features as f64,
        }
    }

    pub fn grid(&self, n_features: usize) -> palms_core::Result<ModelGrid> {
        let gammas: Vec<f64> = self.gamma_multipliers.iter().map(|m| m / n_features as f64).collect();
        ModelGrid::product(&self.c_grid, &gammas, self.default_model(n_features))
    }

    fn validate(&self) -> ServiceResult<()> {
        if self.budget < 1 {
            return Err(ServiceError::BadRequest("budget must be at least 1".into()));
        }
        if self.bootstrap_per_class < 2 {
            return Err(ServiceError::BadRequest("bootstrap_per_class must be at least 2".into()));
        }
        if let SelectionMethod::PalmsFwc { weight } = self.method {
            if weight.is_nan() || weight < 1.0 {
                return Err(ServiceError::BadRequest(format!("weight must be >= 1, got {weight}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Bootstrapping,
    AwaitingLabel,
    Ready,
    Finalized,
    Aborted,
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SessionState::Bootstrapping => "bootstrapping",
            SessionState::AwaitingLabel => "awaiting_label",
            SessionState::Ready => "ready",
            SessionState::Finalized => "finalized",
            SessionState::Aborted => "aborted",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Bootstrap,
    Margin,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pending {
    pub point_id: PointId,
    pub phase: Phase,
    /// `|f(x)|` under the fixed model; margin phase only.
    pub distance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub session_id: Uuid,
    pub state: SessionState,
    pub phase: Option<Phase>,
    pub labels_used: usize,
    pub budget: usize,
    pub remaining_budget: usize,
    pub class_counts: [usize; 2],
    pub pool_size: usize,
    pub unlabeled: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryView {
    pub point_id: PointId,
    /// Feature values as uploaded.
    pub features: Vec<f64>,
    pub phase: Phase,
    pub distance: Option<f64>,
    pub labels_used: usize,
    pub budget: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointPrediction {
    pub point_id: PointId,
    pub label: ClassLabel,
    pub decision_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub report: SelectionReport,
    /// Labeled ids in the order they were labeled.
    pub training_ids: Vec<PointId>,
    /// The chosen model's prediction for every pool point.
    pub predictions: Vec<PointPrediction>,
}

#[derive(Clone, Debug)]
pub struct Session {
    id: Uuid,
    config: SessionConfig,
    features: Vec<Vec<f64>>,
    scaled: Vec<Vec<f64>>,
    grid: ModelGrid,
    state: SessionState,
    labeled: Vec<(PointId, ClassLabel)>,
    /// Ascending ids not yet labeled.
    unlabeled: Vec<PointId>,
    learner: Option<MarginLearner>,
    pending: Option<Pending>,
    rng: SeededRng,
    outcome: Option<SelectionOutcome>,
}

impl Session {
    /// Starts a session over `features` (point id = row index); selects the
    /// first bootstrap query.
    pub fn new(id: Uuid, config: SessionConfig, features: Vec<Vec<f64>>) -> ServiceResult<Self> {
        config.validate()?;
        let n_features = features.first().map(Vec::len).ok_or(palms_core::Error::EmptyPool)?;
        if let Some(bad) = features.iter().position(|r| r.len() != n_features) {
            return Err(ServiceError::BadRequest(format!(
                "pool row {bad} has {} features, expected {n_features}",
                features[bad].len()
            )));
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ServiceError::BadRequest("pool contains non-finite values".into()));
        }
        let grid = config.grid(n_features)?;
        let scaler = Standardizer::fit_rows(features.iter().map(Vec::as_slice), n_features)?;
        let scaled = features.iter().map(|x| scaler.transform(x)).collect();
        let rng = SeededRng::new(config.seed);
        let mut session = Session {
            id,
            unlabeled: (0..features.len()).collect(),
            config,
            features,
            scaled,
            grid,
            state: SessionState::Bootstrapping,
            labeled: Vec::new(),
            learner: None,
            pending: None,
            rng,
            outcome: None,
        };
        session.advance()?;
        Ok(session)
    }

    pub fn id(&self) -> Uuid {
        self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn pending(&self) -> Option<Pending> {
        self.pending
    }

    pub fn labeled(&self) -> &[(PointId, ClassLabel)] {
        &self.labeled
    }

    pub fn grid(&self) -> &ModelGrid {
        &self.grid
    }

    pub fn outcome(&self) -> Option<&SelectionOutcome> {
        self.outcome.as_ref()
    }

    fn class_counts(&self) -> [usize; 2] {
        let mut c = [0, 0];
        for (_, y) in &self.labeled {
            c[y.index()] += 1;
        }
        c
    }

    fn bootstrap_done(&self) -> bool {
        self.class_counts().iter().all(|&c| c >= self.config.bootstrap_per_class)
    }

    pub fn status(&self) -> SessionStatus {
        SessionStatus {
            session_id: self.id,
            state: self.state,
            phase: self.pending.map(|p| p.phase),
            labels_used: self.labeled.len(),
            budget: self.config.budget,
            remaining_budget: self.config.budget.saturating_sub(self.labeled.len()),
            class_counts: self.class_counts(),
            pool_size: self.features.len(),
            unlabeled: self.unlabeled.len(),
        }
    }

    pub fn query(&self) -> ServiceResult<QueryView> {
        match (self.state, self.pending) {
            (SessionState::Bootstrapping | SessionState::AwaitingLabel, Some(p)) => Ok(QueryView {
                point_id: p.point_id,
                features: self.features[p.point_id].clone(),
                phase: p.phase,
                distance: p.distance,
                labels_used: self.labeled.len(),
                budget: self.config.budget,
            }),
            (state, _) => Err(ServiceError::NoQuery(state)),
        }
    }

    /// Picks the next query, or moves to `Ready` when the budget or the pool
    /// is used up.
    fn advance(&mut self) -> ServiceResult<()> {
        if self.labeled.len() >= self.config.budget || self.unlabeled.is_empty() {
            self.state = SessionState::Ready;
            self.pending = None;
            return Ok(());
        }
        if !self.bootstrap_done() {
            let pick = self.rng.gen_range(0..self.unlabeled.len());
            self.state = SessionState::Bootstrapping;
            self.pending = Some(Pending {
                point_id: self.unlabeled[pick],
                phase: Phase::Bootstrap,
                distance: None,
            });
            return Ok(());
        }
        if self.learner.is_none() {
            let pool = self.unlabeled.iter().map(|&id| (id, self.scaled[id].clone())).collect();
            let fixed = self.grid.default_model();
            self.learner = Some(MarginLearner::new(self.training_set()?, pool, fixed, self.config.solver)?);
        }
        let learner = self.learner.as_ref().expect("built above");
        let proposal = learner.propose()?.ok_or(palms_core::Error::EmptyPool)?;
        self.state = SessionState::AwaitingLabel;
        self.pending = Some(Pending {
            point_id: proposal.id,
            phase: Phase::Margin,
            distance: Some(proposal.distance),
        });
        Ok(())
    }

    /// Labeled points with standardized features, in labeling order.
    pub fn training_set(&self) -> ServiceResult<Dataset> {
        let points = self
            .labeled
            .iter()
            .map(|&(id, y)| LabeledPoint {
                id,
                x: self.scaled[id].clone(),
                y,
            })
            .collect();
        Ok(Dataset::new(self.scaled[0].len(), points)?)
    }

    /// Accepts the label for the pending query. On any error the session is
    /// left exactly as it was.
    pub fn submit_label(&mut self, point_id: PointId, label: ClassLabel) -> ServiceResult<SessionStatus> {
        match self.state {
            SessionState::Bootstrapping | SessionState::AwaitingLabel => {}
            other => return Err(ServiceError::InvalidState(other)),
        }
        let pending = self.pending.expect("live sessions always have a pending query");
        if pending.point_id != point_id {
            return Err(ServiceError::QueryMismatch {
                pending: pending.point_id,
                submitted: point_id,
            });
        }
        let mut next = self.clone();
        next.labeled.push((point_id, label));
        next.unlabeled.retain(|&id| id != point_id);
        if let Some(learner) = next.learner.as_mut() {
            learner.add_label(point_id, label)?;
        }
        next.advance()?;
        *self = next;
        Ok(self.status())
    }

    /// Runs the configured selection on everything labeled so far. A second
    /// call returns the cached outcome.
    pub fn finalize(&mut self) -> ServiceResult<SelectionOutcome> {
        match self.state {
            SessionState::Finalized => return Ok(self.outcome.clone().expect("finalized sessions carry an outcome")),
            SessionState::Aborted => return Err(ServiceError::InvalidState(SessionState::Aborted)),
            _ => {}
        }
        let [zeros, ones] = self.class_counts();
        if zeros < 2 || ones < 2 {
            return Err(ServiceError::Infeasible { zeros, ones });
        }
        let train = self.training_set()?;
        let (report, model) = select_model(&train, &self.grid, self.config.method, &self.config.solver)?;
        let predictions = self
            .scaled
            .iter()
            .enumerate()
            .map(|(id, x)| {
                let f = model.decision_value(x)?;
                Ok(PointPrediction {
                    point_id: id,
                    label: palms_core::svm::label_of(f),
                    decision_value: f,
                })
            })
            .collect::<palms_core::Result<Vec<_>>>()?;
        let outcome = SelectionOutcome {
            report,
            training_ids: self.labeled.iter().map(|(id, _)| *id).collect(),
            predictions,
        };
        self.state = SessionState::Finalized;
        self.pending = None;
        self.outcome = Some(outcome.clone());
        Ok(outcome)
    }

    pub fn abort(&mut self) -> ServiceResult<SessionStatus> {
        match self.state {
            SessionState::Finalized | SessionState::Aborted => Err(ServiceError::InvalidState(self.state)),
            _ => {
                self.state = SessionState::Aborted;
                self.pending = None;
                Ok(self.status())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_pool(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![i as f64, (i % 7) as f64]).collect()
    }

    fn truth(id: PointId) -> ClassLabel {
        if id < 50 {
            ClassLabel::Zero
        } else {
            ClassLabel::One
        }
    }

    fn answer(s: &mut Session) -> ServiceResult<SessionStatus> {
        let q = s.query()?;
        s.submit_label(q.point_id, truth(q.point_id))
    }

    #[test]
    fn starts_in_bootstrap_with_a_query() {
        let s = Session::new(Uuid::new_v4(), SessionConfig::default(), line_pool(100)).unwrap();
        assert_eq!(s.state(), SessionState::Bootstrapping);
        let q = s.query().unwrap();
        assert_eq!(q.phase, Phase::Bootstrap);
        assert_eq!(s.query().unwrap(), q);
    }

    #[test]
    fn empty_pool_is_rejected() {
        assert!(Session::new(Uuid::new_v4(), SessionConfig::default(), vec![]).is_err());
    }

    #[test]
    fn wrong_id_leaves_session_unchanged() {
        let mut s = Session::new(Uuid::new_v4(), SessionConfig::default(), line_pool(100)).unwrap();
        let q = s.query().unwrap();
        let before = s.status();
        let err = s.submit_label(q.point_id + 1, ClassLabel::One).unwrap_err();
        assert!(matches!(err, ServiceError::QueryMismatch { .. }));
        assert_eq!(s.status(), before);
        assert_eq!(s.query().unwrap(), q);
    }

    #[test]
    fn bootstrap_then_margin_then_ready() {
        let mut s = Session::new(Uuid::new_v4(), SessionConfig::default(), line_pool(100)).unwrap();
        let mut phases = Vec::new();
        while matches!(s.state(), SessionState::Bootstrapping | SessionState::AwaitingLabel) {
            phases.push(s.query().unwrap().phase);
            answer(&mut s).unwrap();
        }
        assert_eq!(s.state(), SessionState::Ready);
        assert_eq!(phases.len(), 20);
        let switch = phases.iter().position(|p| *p == Phase::Margin).unwrap();
        assert!(phases[switch..].iter().all(|p| *p == Phase::Margin));
        assert!(switch >= 4);
        assert_eq!(s.status().remaining_budget, 0);
        assert!(matches!(s.submit_label(0, ClassLabel::Zero), Err(ServiceError::InvalidState(_))));
    }

    #[test]
    fn finalize_needs_two_per_class_and_is_cached() {
        let mut s = Session::new(Uuid::new_v4(), SessionConfig::default(), line_pool(100)).unwrap();
        assert!(matches!(s.finalize(), Err(ServiceError::Infeasible { .. })));
        while s.state() == SessionState::Bootstrapping {
            answer(&mut s).unwrap();
        }
        // early finalize right after bootstrap
        let first = s.finalize().unwrap();
        assert_eq!(s.state(), SessionState::Finalized);
        assert_eq!(first.predictions.len(), 100);
        assert_eq!(s.finalize().unwrap(), first);
        assert!(matches!(s.query(), Err(ServiceError::NoQuery(SessionState::Finalized))));
    }

    #[test]
    fn abort_from_live_states_only() {
        let mut s = Session::new(Uuid::new_v4(), SessionConfig::default(), line_pool(100)).unwrap();
        assert_eq!(s.abort().unwrap().state, SessionState::Aborted);
        assert!(s.abort().is_err());
        assert!(matches!(s.finalize(), Err(ServiceError::InvalidState(_))));
    }

    #[test]
    fn single_class_pool_runs_out_of_budget_in_bootstrap() {
        let cfg = SessionConfig {
            budget: 5,
            ..Default::default()
        };
        let mut s = Session::new(Uuid::new_v4(), cfg, line_pool(30)).unwrap();
        while s.state() == SessionState::Bootstrapping {
            answer(&mut s).unwrap();
        }
        assert_eq!(s.state(), SessionState::Ready);
        assert_eq!(s.status().labels_used, 5);
        assert!(matches!(s.finalize(), Err(ServiceError::Infeasible { zeros: 5, ones: 0 })));
    }
}
