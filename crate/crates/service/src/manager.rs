//! Session registry: validation, single-writer logs and broadcast.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use asacd_core::biomarker::profile;
use asacd_core::reframer::{detect_triggers, propose, ReframerConfig};
use asacd_core::scorer::AlignmentWeights;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::broadcast;

use crate::error::ServiceError;
use crate::model::*;
use crate::summary::{summarize, SessionSummary, DEFAULT_WINDOW};

const BROADCAST_CAPACITY: usize = 1024;
const LOG_SUFFIX: &str = ".events.jsonl";
pub const MAX_CLIENT_KEY_CHARS: usize = 100;

#[derive(Clone, Debug)]
pub enum Storage {
    Memory,
    /// One log file per session under `path`; `sync` forces `fsync` on
    /// every append.
    Dir {
        path: PathBuf,
        sync: bool,
    },
}

enum LogSink {
    Memory(String),
    File { file: File, sync: bool },
}

impl LogSink {
    fn append(&mut self, line: &str) -> std::io::Result<()> {
        match self {
            LogSink::Memory(buf) => {
                buf.push_str(line);
                Ok(())
            }
            LogSink::File { file, sync } => {
                file.write_all(line.as_bytes())?;
                file.flush()?;
                if *sync {
                    file.sync_data()?;
                }
                Ok(())
            }
        }
    }
}

struct Slot {
    state: DialogueSession,
    events: Vec<SessionEvent>,
    log: LogSink,
    tx: broadcast::Sender<SessionEvent>,
    reframer: Arc<ReframerConfig>,
}

impl Slot {
    fn append(&mut self, body: EventBody, now: u64) -> Result<SessionEvent, ServiceError> {
        let event = SessionEvent {
            v: SCHEMA_VERSION,
            seq: self.state.last_seq + 1,
            timestamp: now,
            body,
        };
        let mut next = Some(self.state.clone());
        apply(&mut next, &event)?;
        self.log.append(&event.to_line())?;
        self.state = next.expect("state present");
        self.events.push(event.clone());
        let _ = self.tx.send(event.clone());
        Ok(event)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CreateSession {
    pub v: Option<u32>,
    pub weights: Option<[f64; 3]>,
    pub share_suggestions: bool,
    pub max_text_chars: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreateResponse {
    pub v: u32,
    pub session_id: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JoinRequest {
    #[serde(default)]
    pub v: Option<u32>,
    pub display_name: String,
    #[serde(default)]
    pub group: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JoinResponse {
    pub v: u32,
    pub participant_id: String,
    pub token: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TurnRequest {
    #[serde(default)]
    pub v: Option<u32>,
    pub token: String,
    pub text: String,
    #[serde(default)]
    pub client_key: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnResponse {
    pub v: u32,
    pub seq: u64,
    pub turn: Turn,
    /// True when `client_key` matched an earlier turn and nothing was stored.
    #[serde(default)]
    pub duplicate: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeedbackRequest {
    #[serde(default)]
    pub v: Option<u32>,
    pub token: String,
    pub turn_id: u64,
    /// 1-based suggestion rank on that turn.
    pub rank: usize,
    pub action: FeedbackAction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub v: u32,
    /// True when identical feedback was already recorded; nothing appended.
    pub duplicate: bool,
    pub seq: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub v: u32,
    pub seq: u64,
}

/// What a stream subscriber receives first, then live events.
pub struct Subscription {
    pub backlog: Vec<SessionEvent>,
    pub live: broadcast::Receiver<SessionEvent>,
    pub share_suggestions: bool,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn random_hex() -> String {
    let mut bytes = [0u8; 16];
    rand::rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}

pub fn token_hash(token: &str) -> String {
    hex::encode(Sha256::digest(token.as_bytes()))
}

fn check_version(v: Option<u32>) -> Result<(), ServiceError> {
    match v {
        None | Some(SCHEMA_VERSION) => Ok(()),
        Some(other) => Err(ServiceError::Validation(format!(
            "unsupported schema version {other}"
        ))),
    }
}

/// Strips suggestions from turn events the viewer did not author, unless
/// the session shares them.
pub fn view_for(event: &SessionEvent, viewer: Option<&str>, share: bool) -> SessionEvent {
    let mut e = event.clone();
    if let EventBody::Turn { turn } = &mut e.body {
        if !share && viewer != Some(turn.participant.as_str()) {
            turn.suggestions.clear();
        }
    }
    e
}

pub struct SessionManager {
    sessions: RwLock<HashMap<String, Arc<Mutex<Slot>>>>,
    base: Arc<ReframerConfig>,
    storage: Storage,
    clock: fn() -> u64,
}

impl SessionManager {
    pub fn new(storage: Storage) -> Result<Self, ServiceError> {
        Self::with_reframer(storage, ReframerConfig::shipped())
    }

    /// Loads any existing session logs from a storage directory.
    pub fn with_reframer(storage: Storage, reframer: ReframerConfig) -> Result<Self, ServiceError> {
        let m = SessionManager {
            sessions: RwLock::new(HashMap::new()),
            base: Arc::new(reframer),
            storage,
            clock: now_ms,
        };
        if let Storage::Dir { path, sync } = &m.storage {
            std::fs::create_dir_all(path)?;
            let mut entries: Vec<PathBuf> = std::fs::read_dir(path)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.to_string_lossy().ends_with(LOG_SUFFIX))
                .collect();
            entries.sort();
            for p in entries {
                let text = std::fs::read_to_string(&p)?;
                let state = replay(&text)?;
                let events = text
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .filter_map(|l| serde_json::from_str(l).ok())
                    .collect();
                let file = OpenOptions::new().append(true).open(&p)?;
                let reframer = m.reframer_for(&state.config)?;
                m.insert(state, events, LogSink::File { file, sync: *sync }, reframer);
            }
        }
        Ok(m)
    }

    /// Overrides the timestamp source, for reproducible tests.
    pub fn with_clock(mut self, clock: fn() -> u64) -> Self {
        self.clock = clock;
        self
    }

    pub fn reframer(&self) -> &ReframerConfig {
        &self.base
    }

    fn reframer_for(&self, cfg: &SessionConfig) -> Result<Arc<ReframerConfig>, ServiceError> {
        let w = AlignmentWeights::new(cfg.weights[0], cfg.weights[1], cfg.weights[2])
            .map_err(|e| ServiceError::Validation(e.to_string()))?;
        if w == self.base.scorer.weights {
            return Ok(self.base.clone());
        }
        let mut r = (*self.base).clone();
        r.scorer.weights = w;
        Ok(Arc::new(r))
    }

    fn insert(
        &self,
        state: DialogueSession,
        events: Vec<SessionEvent>,
        log: LogSink,
        reframer: Arc<ReframerConfig>,
    ) {
        let (tx, _) = broadcast::channel(BROADCAST_CAPACITY);
        let id = state.id.clone();
        let slot = Slot {
            state,
            events,
            log,
            tx,
            reframer,
        };
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(id, Arc::new(Mutex::new(slot)));
    }

    fn slot(&self, id: &str) -> Result<Arc<Mutex<Slot>>, ServiceError> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("session {id}")))
    }

    fn with_slot<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut Slot) -> Result<T, ServiceError>,
    ) -> Result<T, ServiceError> {
        let slot = self.slot(id)?;
        let mut guard = slot.lock().expect("session poisoned");
        f(&mut guard)
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .sessions
            .read()
            .expect("session map poisoned")
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    pub fn create_session(&self, req: CreateSession) -> Result<CreateResponse, ServiceError> {
        check_version(req.v)?;
        let base = &self.base;
        let weights = match req.weights {
            Some(w) => AlignmentWeights::new(w[0], w[1], w[2])
                .map_err(|e| ServiceError::Validation(e.to_string()))?,
            None => base.scorer.weights,
        };
        let max_text_chars = req.max_text_chars.unwrap_or(DEFAULT_MAX_TEXT_CHARS);
        if max_text_chars == 0 {
            return Err(ServiceError::Validation(
                "max_text_chars must be > 0".into(),
            ));
        }
        let config = SessionConfig {
            weights: weights.as_array(),
            share_suggestions: req.share_suggestions,
            max_text_chars,
            lexicons_version: base.scorer.lexicons.version_tag(),
            hedges_version: base.hedges.version.clone(),
            invitations_version: base.invitations.version.clone(),
            scorer_source: base.scorer.reference.source.clone(),
        };
        let id = random_hex();
        let log = match &self.storage {
            Storage::Memory => LogSink::Memory(String::new()),
            Storage::Dir { path, sync } => LogSink::File {
                file: OpenOptions::new()
                    .create_new(true)
                    .append(true)
                    .open(path.join(format!("{id}{LOG_SUFFIX}")))?,
                sync: *sync,
            },
        };
        let now = (self.clock)();
        let state = DialogueSession {
            id: id.clone(),
            config: config.clone(),
            participants: vec![],
            turns: vec![],
            feedback: vec![],
            shown: vec![],
            status: SessionStatus::Open,
            created_at: now,
            last_seq: 0,
        };
        let (tx, _) = broadcast::channel(BROADCAST_CAPACITY);
        let mut slot = Slot {
            state,
            events: Vec::new(),
            log,
            tx,
            reframer: self.reframer_for(&config)?,
        };
        // The created event is the first log line; state is rebuilt from it.
        let event = SessionEvent {
            v: SCHEMA_VERSION,
            seq: 1,
            timestamp: now,
            body: EventBody::Created {
                session_id: id.clone(),
                config,
            },
        };
        let mut fresh = None;
        apply(&mut fresh, &event)?;
        slot.log.append(&event.to_line())?;
        slot.state = fresh.expect("created");
        slot.events.push(event);
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(id.clone(), Arc::new(Mutex::new(slot)));
        Ok(CreateResponse {
            v: SCHEMA_VERSION,
            session_id: id,
        })
    }

    pub fn join(&self, id: &str, req: JoinRequest) -> Result<JoinResponse, ServiceError> {
        check_version(req.v)?;
        let name = req.display_name.trim();
        if name.is_empty() || name.chars().count() > 100 {
            return Err(ServiceError::Validation(
                "display_name must have 1 to 100 characters".into(),
            ));
        }
        let now = (self.clock)();
        self.with_slot(id, |slot| {
            if slot.state.status == SessionStatus::Closed {
                return Err(ServiceError::Conflict(format!("session {id} is closed")));
            }
            let token = random_hex();
            let participant = Participant {
                id: format!("p{}", slot.state.participants.len() + 1),
                display_name: name.to_string(),
                group: req.group.clone(),
                token_hash: token_hash(&token),
            };
            let pid = participant.id.clone();
            slot.append(EventBody::Joined { participant }, now)?;
            Ok(JoinResponse {
                v: SCHEMA_VERSION,
                participant_id: pid,
                token,
            })
        })
    }

    fn author(slot: &Slot, token: &str) -> Result<String, ServiceError> {
        slot.state
            .participant_by_token_hash(&token_hash(token))
            .map(|p| p.id.clone())
            .ok_or_else(|| ServiceError::Forbidden("unknown participant token".into()))
    }

    pub fn post_turn(&self, id: &str, req: TurnRequest) -> Result<TurnResponse, ServiceError> {
        check_version(req.v)?;
        let slot = self.slot(id)?;
        let (reframer, max_chars) = {
            let g = slot.lock().expect("session poisoned");
            if g.state.status == SessionStatus::Closed {
                return Err(ServiceError::Conflict(format!("session {id} is closed")));
            }
            Self::author(&g, &req.token)?;
            (g.reframer.clone(), g.state.config.max_text_chars)
        };
        let chars = req.text.chars().count();
        if chars > max_chars {
            return Err(ServiceError::Validation(format!(
                "text has {chars} characters, limit is {max_chars}"
            )));
        }
        if req.text.trim().is_empty() {
            return Err(ServiceError::Validation("text must not be empty".into()));
        }
        if let Some(k) = &req.client_key {
            if k.is_empty() || k.chars().count() > MAX_CLIENT_KEY_CHARS {
                return Err(ServiceError::Validation(format!(
                    "client_key must have 1 to {MAX_CLIENT_KEY_CHARS} characters"
                )));
            }
        }
        // Annotation is pure, so it runs outside the session lock.
        let prof = profile(&req.text, &reframer.scorer.lexicons);
        let triggers = detect_triggers(&req.text, &reframer.scorer.lexicons);
        let suggestions = propose(&req.text, &reframer);
        let now = (self.clock)();

        let mut g = slot.lock().expect("session poisoned");
        if g.state.status == SessionStatus::Closed {
            return Err(ServiceError::Conflict(format!("session {id} is closed")));
        }
        let author = Self::author(&g, &req.token)?;
        if let Some(earlier) = req.client_key.as_ref().and_then(|k| {
            g.state
                .turns
                .iter()
                .find(|t| t.participant == author && t.client_key.as_ref() == Some(k))
        }) {
            let seq = g
                .events
                .iter()
                .find(|e| matches!(&e.body, EventBody::Turn { turn } if turn.turn_id == earlier.turn_id))
                .map_or(0, |e| e.seq);
            return Ok(TurnResponse {
                v: SCHEMA_VERSION,
                seq,
                turn: earlier.clone(),
                duplicate: true,
            });
        }
        let turn = Turn {
            turn_id: g.state.next_turn_id(),
            participant: author.clone(),
            text: req.text,
            profile: prof,
            triggers,
            suggestions,
            timestamp: now,
            client_key: req.client_key,
        };
        let ranks: Vec<usize> = turn.suggestions.iter().map(|s| s.rank).collect();
        let event = g.append(EventBody::Turn { turn: turn.clone() }, now)?;
        if !ranks.is_empty() {
            g.append(
                EventBody::SuggestionShown {
                    turn_id: turn.turn_id,
                    participant: author,
                    ranks,
                },
                now,
            )?;
        }
        Ok(TurnResponse {
            v: SCHEMA_VERSION,
            seq: event.seq,
            turn,
            duplicate: false,
        })
    }

    pub fn record_feedback(
        &self,
        id: &str,
        req: FeedbackRequest,
    ) -> Result<FeedbackResponse, ServiceError> {
        check_version(req.v)?;
        if let FeedbackAction::Rated(r) = req.action {
            if !(1..=5).contains(&r) {
                return Err(ServiceError::Validation(format!(
                    "rating {r} outside 1..=5"
                )));
            }
        }
        let now = (self.clock)();
        self.with_slot(id, |slot| {
            let participant = Self::author(slot, &req.token)?;
            let turn = slot
                .state
                .turn(req.turn_id)
                .ok_or_else(|| ServiceError::NotFound(format!("turn {}", req.turn_id)))?;
            if req.rank == 0 || req.rank > turn.suggestions.len() {
                return Err(ServiceError::NotFound(format!(
                    "suggestion {} on turn {}",
                    req.rank, req.turn_id
                )));
            }
            let feedback = Feedback {
                turn_id: req.turn_id,
                rank: req.rank,
                participant,
                action: req.action,
            };
            if slot.state.has_feedback(&feedback) {
                return Ok(FeedbackResponse {
                    v: SCHEMA_VERSION,
                    duplicate: true,
                    seq: None,
                });
            }
            let body = match req.action {
                FeedbackAction::Used => EventBody::SuggestionUsed { feedback },
                _ => EventBody::Feedback { feedback },
            };
            let e = slot.append(body, now)?;
            Ok(FeedbackResponse {
                v: SCHEMA_VERSION,
                duplicate: false,
                seq: Some(e.seq),
            })
        })
    }

    pub fn close(&self, id: &str) -> Result<Ack, ServiceError> {
        let now = (self.clock)();
        self.with_slot(id, |slot| {
            if slot.state.status == SessionStatus::Closed {
                return Err(ServiceError::Conflict(format!(
                    "session {id} is already closed"
                )));
            }
            let e = slot.append(EventBody::Closed {}, now)?;
            Ok(Ack {
                v: SCHEMA_VERSION,
                seq: e.seq,
            })
        })
    }

    pub fn summary(&self, id: &str) -> Result<SessionSummary, ServiceError> {
        self.with_slot(id, |slot| Ok(summarize(&slot.state, DEFAULT_WINDOW)))
    }

    pub fn snapshot(&self, id: &str) -> Result<DialogueSession, ServiceError> {
        self.with_slot(id, |slot| Ok(slot.state.clone()))
    }

    /// The session's log exactly as persisted.
    pub fn log_text(&self, id: &str) -> Result<String, ServiceError> {
        self.with_slot(id, |slot| match &slot.log {
            LogSink::Memory(buf) => Ok(buf.clone()),
            LogSink::File { .. } => match &self.storage {
                Storage::Dir { path, .. } => Ok(std::fs::read_to_string(
                    path.join(format!("{id}{LOG_SUFFIX}")),
                )?),
                Storage::Memory => unreachable!("file sink implies directory storage"),
            },
        })
    }

    /// Participant id for a token, if it belongs to the session.
    pub fn participant_for_token(&self, id: &str, token: &str) -> Result<String, ServiceError> {
        self.with_slot(id, |slot| Self::author(slot, token))
    }

    pub fn subscribe(&self, id: &str) -> Result<Subscription, ServiceError> {
        self.with_slot(id, |slot| {
            Ok(Subscription {
                backlog: slot.events.clone(),
                live: slot.tx.subscribe(),
                share_suggestions: slot.state.config.share_suggestions,
            })
        })
    }
}
