//! Session state, events and the fold that rebuilds one from the other.

use std::collections::BTreeSet;

use asacd_core::biomarker::BiomarkerProfile;
use asacd_core::reframer::{Suggestion, Trigger};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_MAX_TEXT_CHARS: usize = 2000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// Alignment weights `[linguistic, development, cultural]`.
    pub weights: [f64; 3],
    /// Show suggestions to every subscriber instead of the author only.
    pub share_suggestions: bool,
    pub max_text_chars: usize,
    pub lexicons_version: String,
    pub hedges_version: String,
    pub invitations_version: String,
    pub scorer_source: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub id: String,
    pub display_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    /// SHA-256 of the participant's capability token, hex.
    pub token_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub turn_id: u64,
    pub participant: String,
    pub text: String,
    pub profile: BiomarkerProfile,
    pub triggers: Vec<Trigger>,
    pub suggestions: Vec<Suggestion>,
    pub timestamp: u64,
    /// Client retry key; a repeat post with the same key returns this turn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_key: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Open,
    Closed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "rating")]
pub enum FeedbackAction {
    Used,
    Dismissed,
    Rated(u8),
}

impl FeedbackAction {
    /// Actions of the same kind on the same suggestion by the same
    /// participant are duplicates, whatever the rating value.
    pub fn kind(self) -> &'static str {
        match self {
            FeedbackAction::Used => "used",
            FeedbackAction::Dismissed => "dismissed",
            FeedbackAction::Rated(_) => "rated",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub turn_id: u64,
    pub rank: usize,
    pub participant: String,
    pub action: FeedbackAction,
}

impl Feedback {
    pub fn key(&self) -> (u64, usize, String, &'static str) {
        (
            self.turn_id,
            self.rank,
            self.participant.clone(),
            self.action.kind(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogueSession {
    pub id: String,
    pub config: SessionConfig,
    pub participants: Vec<Participant>,
    pub turns: Vec<Turn>,
    pub feedback: Vec<Feedback>,
    /// `(turn_id, participant, ranks)` deliveries.
    pub shown: Vec<(u64, String, Vec<usize>)>,
    pub status: SessionStatus,
    pub created_at: u64,
    pub last_seq: u64,
}

impl DialogueSession {
    pub fn participant(&self, id: &str) -> Option<&Participant> {
        self.participants.iter().find(|p| p.id == id)
    }

    pub fn participant_by_token_hash(&self, hash: &str) -> Option<&Participant> {
        self.participants.iter().find(|p| p.token_hash == hash)
    }

    pub fn turn(&self, turn_id: u64) -> Option<&Turn> {
        self.turns.iter().find(|t| t.turn_id == turn_id)
    }

    pub fn next_turn_id(&self) -> u64 {
        self.turns.last().map_or(1, |t| t.turn_id + 1)
    }

    pub fn has_feedback(&self, f: &Feedback) -> bool {
        let key = f.key();
        self.feedback.iter().any(|g| g.key() == key)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    Created {
        session_id: String,
        config: SessionConfig,
    },
    Joined {
        participant: Participant,
    },
    Turn {
        turn: Turn,
    },
    SuggestionShown {
        turn_id: u64,
        participant: String,
        ranks: Vec<usize>,
    },
    SuggestionUsed {
        feedback: Feedback,
    },
    Feedback {
        feedback: Feedback,
    },
    Closed {},
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub v: u32,
    pub seq: u64,
    pub timestamp: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

impl SessionEvent {
    pub fn kind(&self) -> &'static str {
        match self.body {
            EventBody::Created { .. } => "created",
            EventBody::Joined { .. } => "joined",
            EventBody::Turn { .. } => "turn",
            EventBody::SuggestionShown { .. } => "suggestion_shown",
            EventBody::SuggestionUsed { .. } => "suggestion_used",
            EventBody::Feedback { .. } => "feedback",
            EventBody::Closed {} => "closed",
        }
    }

    /// One log line: compact JSON, LF-terminated.
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("events serialize");
        s.push('\n');
        s
    }
}

/// Applies one event. Turn events whose id is already present are skipped.
pub fn apply(
    state: &mut Option<DialogueSession>,
    event: &SessionEvent,
) -> Result<(), ServiceError> {
    let corrupt = |msg: &str| ServiceError::CorruptLog {
        seq: event.seq,
        message: msg.to_string(),
    };
    match (&event.body, state.as_mut()) {
        (EventBody::Created { session_id, config }, None) => {
            *state = Some(DialogueSession {
                id: session_id.clone(),
                config: config.clone(),
                participants: Vec::new(),
                turns: Vec::new(),
                feedback: Vec::new(),
                shown: Vec::new(),
                status: SessionStatus::Open,
                created_at: event.timestamp,
                last_seq: event.seq,
            });
            return Ok(());
        }
        (EventBody::Created { .. }, Some(_)) => return Err(corrupt("second created event")),
        (_, None) => return Err(corrupt("event before created")),
        (EventBody::Joined { participant }, Some(s)) => {
            if s.participant(&participant.id).is_some() {
                return Err(corrupt("participant joined twice"));
            }
            s.participants.push(participant.clone());
        }
        (EventBody::Turn { turn }, Some(s)) => {
            if s.turn(turn.turn_id).is_none() {
                if turn.turn_id < s.next_turn_id() {
                    return Err(corrupt("turn ids out of order"));
                }
                s.turns.push(turn.clone());
            }
        }
        (
            EventBody::SuggestionShown {
                turn_id,
                participant,
                ranks,
            },
            Some(s),
        ) => {
            s.shown.push((*turn_id, participant.clone(), ranks.clone()));
        }
        (EventBody::SuggestionUsed { feedback } | EventBody::Feedback { feedback }, Some(s)) => {
            if !s.has_feedback(feedback) {
                s.feedback.push(feedback.clone());
            }
        }
        (EventBody::Closed {}, Some(s)) => s.status = SessionStatus::Closed,
    }
    if let Some(s) = state.as_mut() {
        s.last_seq = event.seq;
    }
    Ok(())
}

/// Rebuilds a session from its log. Blank lines are ignored; an exact
/// re-append of the previous sequence number is skipped.
pub fn replay(log: &str) -> Result<DialogueSession, ServiceError> {
    let mut state: Option<DialogueSession> = None;
    let mut last_seq = 0u64;
    let mut seen_turns = BTreeSet::new();
    for line in log.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let event: SessionEvent =
            serde_json::from_str(line).map_err(|e| ServiceError::CorruptLog {
                seq: last_seq + 1,
                message: e.to_string(),
            })?;
        if event.v != SCHEMA_VERSION {
            return Err(ServiceError::CorruptLog {
                seq: event.seq,
                message: format!("unsupported schema version {}", event.v),
            });
        }
        if event.seq <= last_seq && last_seq > 0 {
            continue;
        }
        if event.seq != last_seq + 1 {
            return Err(ServiceError::CorruptLog {
                seq: last_seq + 1,
                message: format!("expected sequence {}, found {}", last_seq + 1, event.seq),
            });
        }
        if let EventBody::Turn { turn } = &event.body {
            if !seen_turns.insert(turn.turn_id) {
                last_seq = event.seq;
                if let Some(s) = state.as_mut() {
                    s.last_seq = event.seq;
                }
                continue;
            }
        }
        apply(&mut state, &event)?;
        last_seq = event.seq;
    }
    state.ok_or(ServiceError::CorruptLog {
        seq: 1,
        message: "log has no created event".into(),
    })
}
