//! Session summaries, derived only from stored turns and feedback.

use serde::{Deserialize, Serialize};

use crate::model::{DialogueSession, FeedbackAction, SessionStatus, Turn, SCHEMA_VERSION};

pub const DEFAULT_WINDOW: usize = 20;
/// Ratings at or above this count as helpful.
pub const HELPFUL_RATING: u8 = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MarkerDensities {
    pub inclusive: f64,
    pub exclusive: f64,
    pub generalising: f64,
    pub tokens: u64,
}

impl MarkerDensities {
    /// Pooled counts over tokens.
    pub fn of<'a>(turns: impl IntoIterator<Item = &'a Turn>) -> Self {
        let (mut i, mut e, mut g, mut n) = (0u64, 0u64, 0u64, 0u64);
        for t in turns {
            i += t.profile.inclusive_count as u64;
            e += t.profile.exclusive_count as u64;
            g += t.profile.generalising_count as u64;
            n += t.profile.token_count as u64;
        }
        let d = |x: u64| if n == 0 { 0.0 } else { x as f64 / n as f64 };
        MarkerDensities {
            inclusive: d(i),
            exclusive: d(e),
            generalising: d(g),
            tokens: n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticipantSummary {
    pub id: String,
    pub display_name: String,
    pub group: Option<String>,
    pub turns: usize,
    pub densities: MarkerDensities,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub first_turn: u64,
    pub last_turn: u64,
    pub densities: MarkerDensities,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub turn_id: u64,
    /// Densities over the trailing window ending at this turn.
    pub densities: MarkerDensities,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Ratings {
    pub count: usize,
    pub helpful: usize,
    /// `helpful / count`, absent when there are no ratings.
    pub helpful_share: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub v: u32,
    pub session_id: String,
    pub status: SessionStatus,
    pub turns: usize,
    pub overall: MarkerDensities,
    pub participants: Vec<ParticipantSummary>,
    pub window: usize,
    pub windows: Vec<WindowSummary>,
    pub trend: Vec<TrendPoint>,
    pub suggestions_shown: usize,
    pub suggestions_used: usize,
    pub suggestions_dismissed: usize,
    pub ratings: Ratings,
}

pub fn summarize(s: &DialogueSession, window: usize) -> SessionSummary {
    let window = window.max(1);
    let participants = s
        .participants
        .iter()
        .map(|p| {
            let own: Vec<&Turn> = s.turns.iter().filter(|t| t.participant == p.id).collect();
            ParticipantSummary {
                id: p.id.clone(),
                display_name: p.display_name.clone(),
                group: p.group.clone(),
                turns: own.len(),
                densities: MarkerDensities::of(own),
            }
        })
        .collect();
    let windows = s
        .turns
        .chunks(window)
        .map(|c| WindowSummary {
            first_turn: c[0].turn_id,
            last_turn: c[c.len() - 1].turn_id,
            densities: MarkerDensities::of(c),
        })
        .collect();
    let trend = (0..s.turns.len())
        .map(|i| TrendPoint {
            turn_id: s.turns[i].turn_id,
            densities: MarkerDensities::of(&s.turns[(i + 1).saturating_sub(window)..=i]),
        })
        .collect();
    let count = |k: &str| s.feedback.iter().filter(|f| f.action.kind() == k).count();
    let ratings: Vec<u8> = s
        .feedback
        .iter()
        .filter_map(|f| match f.action {
            FeedbackAction::Rated(r) => Some(r),
            _ => None,
        })
        .collect();
    let helpful = ratings.iter().filter(|&&r| r >= HELPFUL_RATING).count();
    SessionSummary {
        v: SCHEMA_VERSION,
        session_id: s.id.clone(),
        status: s.status,
        turns: s.turns.len(),
        overall: MarkerDensities::of(&s.turns),
        participants,
        window,
        windows,
        trend,
        suggestions_shown: s.shown.iter().map(|(_, _, r)| r.len()).sum(),
        suggestions_used: count("used"),
        suggestions_dismissed: count("dismissed"),
        ratings: Ratings {
            count: ratings.len(),
            helpful,
            helpful_share: (!ratings.is_empty()).then(|| helpful as f64 / ratings.len() as f64),
        },
    }
}
