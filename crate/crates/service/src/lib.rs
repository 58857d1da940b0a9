//! Labeling sessions over HTTP: the service picks which pool point a human
//! labels next, and runs model selection once labeling is done.
//!
//! ```text
//! POST /sessions                 create (config + pool)      201
//! GET  /sessions/{id}            status and progress
//! GET  /sessions/{id}/query      pending query               404 once none is pending
//! POST /sessions/{id}/label      {point_id, label}           409 on id mismatch
//! POST /sessions/{id}/finalize   run selection, return outcome
//! GET  /sessions/{id}/outcome    cached outcome              404 before finalize
//! POST /sessions/{id}/abort      stop the session
//! ```

pub mod api;
pub mod error;
pub mod session;
pub mod store;

pub use api::{router, serve};
pub use error::{ServiceError, ServiceResult};
pub use session::{Phase, QueryView, SelectionOutcome, Session, SessionConfig, SessionState, SessionStatus};
pub use store::{CreateSession, LabelSubmission, SessionEvent, SessionStore};
