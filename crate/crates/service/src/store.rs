//! Session registry with an append-only JSONL event log per session.
//!
//! Every accepted mutation is logged before it becomes visible. On startup the
//! logs are replayed through the same session code, so a restarted service
//! resumes each session exactly where it stopped.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use palms_core::data::read_unlabeled_csv;
use palms_core::{ClassLabel, PointId};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::error::{ServiceError, ServiceResult};
use crate::session::{Phase, QueryView, SelectionOutcome, Session, SessionConfig, SessionStatus};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Created {
        session_id: Uuid,
        config: SessionConfig,
        features: Vec<Vec<f64>>,
    },
    Queried {
        point_id: PointId,
        phase: Phase,
    },
    Labeled {
        point_id: PointId,
        label: ClassLabel,
    },
    Finalized,
    Aborted,
}

/// Body of `POST /sessions`: a config plus exactly one pool source.
#[derive(Clone, Debug, Default, Deserialize)]
pub struct CreateSession {
    #[serde(flatten)]
    pub config: SessionConfig,
    /// CSV text with a header row; a trailing `label` column is ignored.
    pub pool_csv: Option<String>,
    /// Name of a dataset registered with the server.
    pub dataset: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LabelSubmission {
    pub point_id: PointId,
    pub label: ClassLabel,
}

struct Entry {
    session: Session,
    log: Option<File>,
}

#[derive(Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<Uuid, Arc<Mutex<Entry>>>>,
    log_dir: Option<PathBuf>,
    datasets: HashMap<String, Vec<Vec<f64>>>,
}

fn append(log: &mut Option<File>, events: &[SessionEvent]) -> ServiceResult<()> {
    let Some(file) = log else { return Ok(()) };
    let mut buf = Vec::new();
    for e in events {
        serde_json::to_writer(&mut buf, e).map_err(std::io::Error::other)?;
        buf.push(b'\n');
    }
    file.write_all(&buf)?;
    file.sync_data()?;
    Ok(())
}

fn queried(session: &Session) -> Option<SessionEvent> {
    session.pending().map(|p| SessionEvent::Queried {
        point_id: p.point_id,
        phase: p.phase,
    })
}

impl SessionStore {
    /// In-memory store; sessions are lost on exit.
    pub fn in_memory() -> Self {
        SessionStore::default()
    }

    /// Store logging to `dir`, resuming every session found there. Returns the
    /// store and a description of each log that could not be replayed.
    pub fn open(dir: impl Into<PathBuf>) -> ServiceResult<(Self, Vec<String>)> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut store = SessionStore {
            log_dir: Some(dir.clone()),
            ..Default::default()
        };
        let mut problems = Vec::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            match replay(&path) {
                Ok(session) => {
                    let log = OpenOptions::new().append(true).open(&path)?;
                    store.sessions.get_mut().insert(
                        session.id(),
                        Arc::new(Mutex::new(Entry {
                            session,
                            log: Some(log),
                        })),
                    );
                }
                Err(e) => problems.push(format!("{}: {e}", path.display())),
            }
        }
        Ok((store, problems))
    }

    /// Makes `features` available to sessions as `"dataset": name`.
    pub fn register_dataset(&mut self, name: impl Into<String>, features: Vec<Vec<f64>>) {
        self.datasets.insert(name.into(), features);
    }

    pub fn len(&self) -> usize {
        self.sessions.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn pool_for(&self, req: &CreateSession) -> ServiceResult<Vec<Vec<f64>>> {
        match (&req.pool_csv, &req.dataset) {
            (Some(_), Some(_)) => Err(ServiceError::BadRequest(
                "give either pool_csv or dataset, not both".into(),
            )),
            (Some(text), None) => Ok(read_unlabeled_csv(text.as_bytes())?.1),
            (None, Some(name)) => self
                .datasets
                .get(name)
                .cloned()
                .ok_or_else(|| ServiceError::BadRequest(format!("unknown dataset `{name}`"))),
            (None, None) if self.datasets.len() == 1 => Ok(self.datasets.values().next().cloned().unwrap_or_default()),
            (None, None) => Err(ServiceError::BadRequest("no pool given (pool_csv or dataset)".into())),
        }
    }

    pub fn create(&self, req: CreateSession) -> ServiceResult<SessionStatus> {
        let features = self.pool_for(&req)?;
        let id = Uuid::new_v4();
        let session = Session::new(id, req.config.clone(), features.clone())?;
        let mut log = match &self.log_dir {
            Some(dir) => Some(
                OpenOptions::new()
                    .create_new(true)
                    .append(true)
                    .open(dir.join(format!("{id}.jsonl")))?,
            ),
            None => None,
        };
        let mut events = vec![SessionEvent::Created {
            session_id: id,
            config: req.config,
            features,
        }];
        events.extend(queried(&session));
        append(&mut log, &events)?;
        let status = session.status();
        self.sessions.write().insert(id, Arc::new(Mutex::new(Entry { session, log })));
        Ok(status)
    }

    fn entry(&self, id: &str) -> ServiceResult<Arc<Mutex<Entry>>> {
        let uuid = Uuid::parse_str(id).map_err(|_| ServiceError::NotFound(id.to_string()))?;
        self.sessions
            .read()
            .get(&uuid)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    pub fn status(&self, id: &str) -> ServiceResult<SessionStatus> {
        Ok(self.entry(id)?.lock().session.status())
    }

    pub fn query(&self, id: &str) -> ServiceResult<QueryView> {
        self.entry(id)?.lock().session.query()
    }

    pub fn label(&self, id: &str, submission: LabelSubmission) -> ServiceResult<SessionStatus> {
        let entry = self.entry(id)?;
        let mut guard = entry.lock();
        let Entry { session, log } = &mut *guard;
        let mut next = session.clone();
        let status = next.submit_label(submission.point_id, submission.label)?;
        let mut events = vec![SessionEvent::Labeled {
            point_id: submission.point_id,
            label: submission.label,
        }];
        events.extend(queried(&next));
        append(log, &events)?;
        *session = next;
        Ok(status)
    }

    pub fn finalize(&self, id: &str) -> ServiceResult<SelectionOutcome> {
        let entry = self.entry(id)?;
        let mut guard = entry.lock();
        let Entry { session, log } = &mut *guard;
        if let Some(done) = session.outcome() {
            return Ok(done.clone());
        }
        let mut next = session.clone();
        let outcome = next.finalize()?;
        append(log, &[SessionEvent::Finalized])?;
        *session = next;
        Ok(outcome)
    }

    pub fn outcome(&self, id: &str) -> ServiceResult<SelectionOutcome> {
        self.entry(id)?
            .lock()
            .session
            .outcome()
            .cloned()
            .ok_or(ServiceError::NotFinalized)
    }

    pub fn abort(&self, id: &str) -> ServiceResult<SessionStatus> {
        let entry = self.entry(id)?;
        let mut guard = entry.lock();
        let Entry { session, log } = &mut *guard;
        let mut next = session.clone();
        let status = next.abort()?;
        append(log, &[SessionEvent::Aborted])?;
        *session = next;
        Ok(status)
    }

    /// Full event history of a session, read back from its log.
    pub fn events(&self, id: &str) -> ServiceResult<Vec<SessionEvent>> {
        let entry = self.entry(id)?;
        let uuid = entry.lock().session.id();
        let dir = self
            .log_dir
            .as_ref()
            .ok_or_else(|| ServiceError::BadRequest("store has no event log".into()))?;
        read_events(&dir.join(format!("{uuid}.jsonl")))
    }
}

pub fn read_events(path: &Path) -> ServiceResult<Vec<SessionEvent>> {
    let reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line)
            .map_err(|e| ServiceError::BadRequest(format!("line {}: {e}", n + 1)))?;
        events.push(event);
    }
    Ok(events)
}

/// Rebuilds a session from its log, checking every recorded query against
/// the recomputed one.
pub fn replay(path: &Path) -> ServiceResult<Session> {
    let events = read_events(path)?;
    let mut iter = events.into_iter();
    let Some(SessionEvent::Created {
        session_id,
        config,
        features,
    }) = iter.next()
    else {
        return Err(ServiceError::BadRequest("log does not start with a created event".into()));
    };
    let mut session = Session::new(session_id, config, features)?;
    for event in iter {
        match event {
            SessionEvent::Created { .. } => {
                return Err(ServiceError::BadRequest("duplicate created event".into()));
            }
            SessionEvent::Queried { point_id, phase } => {
                let pending = session.pending();
                if pending.map(|p| (p.point_id, p.phase)) != Some((point_id, phase)) {
                    return Err(ServiceError::BadRequest(format!(
                        "logged query {point_id} ({phase:?}) does not match the replayed session"
                    )));
                }
            }
            SessionEvent::Labeled { point_id, label } => {
                session.submit_label(point_id, label)?;
            }
            SessionEvent::Finalized => {
                session.finalize()?;
            }
            SessionEvent::Aborted => {
                session.abort()?;
            }
        }
    }
    Ok(session)
}
