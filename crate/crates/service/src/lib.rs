//! Facilitation service: live dialogue sessions with annotated turns and
//! draft reframing suggestions, persisted as append-only event logs.

pub mod error;
pub mod http;
pub mod manager;
pub mod model;
pub mod summary;

pub use error::ServiceError;
pub use http::{router, serve};
pub use manager::{SessionManager, Storage};
pub use model::{replay, DialogueSession, SessionEvent};
pub use summary::{summarize, SessionSummary};
