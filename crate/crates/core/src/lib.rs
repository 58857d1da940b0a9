//! Pool-based active learning for RBF support-vector classifiers with
//! model selection deferred until labeling is done.
//!
//! Labels are acquired by margin sampling under one fixed default model.
//! Afterwards every `(C, gamma)` candidate is scored by leave-one-out
//! cross-validation on the labeled set, optionally weighting points that lie
//! far from the default model's boundary.

pub mod active;
pub mod benchmark;
pub mod data;
pub mod error;
pub mod limited;
pub mod par;
pub mod selection;
pub mod svm;

pub use active::{run_active_learning, AcquisitionStrategy, ActiveRunRecord, LabelOracle, MarginLearner, SimulatedOracle};
pub use data::{load_csv, ClassLabel, Dataset, LabeledPoint, PointId, SeededRng, Standardizer};
pub use error::{Error, ErrorKind, Result};
pub use limited::{limited_set, LimitedSetParams, MixingRule};
pub use selection::{run_palms, run_palms_fwc, select_model, ModelGrid, SelectionMethod, SelectionReport};
pub use svm::{train_svc, ModelParams, SolverSettings, TrainedSvm};
