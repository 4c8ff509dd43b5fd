//! Users, sessions and scrape history over a document store.
//!
//! Two collections are used: `users` and `history`. With the default
//! [`JsonlStore`] each is a JSON-lines file in the data directory.

mod history;
mod store;
mod users;

pub use history::{
    attach_csv, count_history, list_history, record_history, HistoryError, HistoryRecord,
    HistoryStatus,
};
pub use store::{DocumentStore, JsonlStore, StoreError};
pub use users::{
    authenticate, create_user, find_user, user_exists, validate_password, validate_username,
    AuthOutcome, CreateOutcome, Session, SessionStore, UserRecord, DEFAULT_SESSION_TTL,
};

pub const USERS: &str = "users";
pub const HISTORY: &str = "history";

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum AuthError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("password hashing failed: {0}")]
    Hash(String),
}
