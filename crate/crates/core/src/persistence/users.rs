use std::collections::HashMap;

use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::Argon2;
use chrono::{DateTime, Duration, Utc};
use parking_lot::RwLock;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{AuthError, DocumentStore, USERS};

pub const MIN_USERNAME: usize = 3;
pub const MAX_USERNAME: usize = 64;
pub const MIN_PASSWORD: usize = 6;
pub const MAX_PASSWORD: usize = 1024;
pub const DEFAULT_SESSION_TTL: Duration = Duration::hours(24);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub username: String,
    pub password_hash: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CreateOutcome {
    Created,
    UsernameExists,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub username: String,
    pub expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuthOutcome {
    Session(Session),
    InvalidCredentials,
}

pub fn validate_username(username: &str) -> Result<(), AuthError> {
    let len = username.chars().count();
    if !(MIN_USERNAME..=MAX_USERNAME).contains(&len) {
        return Err(AuthError::Validation(format!(
            "username must be {MIN_USERNAME}-{MAX_USERNAME} characters"
        )));
    }
    if !username
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
    {
        return Err(AuthError::Validation(
            "username may only contain A-Z a-z 0-9 _ . -".into(),
        ));
    }
    Ok(())
}

pub fn validate_password(password: &str) -> Result<(), AuthError> {
    let len = password.chars().count();
    if !(MIN_PASSWORD..=MAX_PASSWORD).contains(&len) {
        return Err(AuthError::Validation(format!(
            "password must be {MIN_PASSWORD}-{MAX_PASSWORD} characters"
        )));
    }
    Ok(())
}

fn hash_password(password: &str) -> Result<String, AuthError> {
    let mut salt = [0u8; 16];
    rand::rng().fill_bytes(&mut salt);
    let salt = SaltString::encode_b64(&salt).map_err(|e| AuthError::Hash(e.to_string()))?;
    Argon2::default()
        .hash_password(password.as_bytes(), &salt)
        .map(|h| h.to_string())
        .map_err(|e| AuthError::Hash(e.to_string()))
}

fn verify_password(password: &str, hash: &str) -> bool {
    PasswordHash::new(hash)
        .map(|parsed| {
            Argon2::default()
                .verify_password(password.as_bytes(), &parsed)
                .is_ok()
        })
        .unwrap_or(false)
}

/// Registers a user with a salted hash of `password`. The existence check and the
/// insert happen atomically.
pub fn create_user(
    store: &dyn DocumentStore,
    username: &str,
    password: &str,
) -> Result<CreateOutcome, AuthError> {
    validate_username(username)?;
    validate_password(password)?;
    if store.count(USERS, &json!({ "username": username }))? > 0 {
        return Ok(CreateOutcome::UsernameExists);
    }
    let record = UserRecord {
        username: username.to_string(),
        password_hash: hash_password(password)?,
        created_at: Utc::now(),
    };
    let doc = serde_json::to_value(&record).expect("user record serializes");
    if store.insert_unique(USERS, "username", doc)? {
        Ok(CreateOutcome::Created)
    } else {
        Ok(CreateOutcome::UsernameExists)
    }
}

pub fn find_user(
    store: &dyn DocumentStore,
    username: &str,
) -> Result<Option<UserRecord>, AuthError> {
    let docs = store.find(USERS, &json!({ "username": username }))?;
    Ok(docs
        .into_iter()
        .next()
        .and_then(|d| serde_json::from_value(d).ok()))
}

pub fn user_exists(store: &dyn DocumentStore, username: &str) -> Result<bool, AuthError> {
    Ok(store.count(USERS, &json!({ "username": username }))? > 0)
}

/// Hash of a password nobody knows; verified against when the user is unknown so
/// both failure paths cost the same.
fn decoy_hash() -> &'static str {
    static DECOY: std::sync::OnceLock<String> = std::sync::OnceLock::new();
    DECOY.get_or_init(|| hash_password("decoy-password-never-matches").expect("hashing works"))
}

/// Checks credentials and, on success, issues a session from `sessions`.
pub fn authenticate(
    store: &dyn DocumentStore,
    sessions: &SessionStore,
    username: &str,
    password: &str,
    now: DateTime<Utc>,
) -> Result<AuthOutcome, AuthError> {
    let user = find_user(store, username)?;
    let ok = match &user {
        Some(u) => verify_password(password, &u.password_hash),
        None => {
            verify_password(password, decoy_hash());
            false
        }
    };
    if !ok {
        return Ok(AuthOutcome::InvalidCredentials);
    }
    Ok(AuthOutcome::Session(sessions.issue(username, now)))
}

/// Server-side session tokens with a fixed time-to-live.
#[derive(Debug)]
pub struct SessionStore {
    ttl: Duration,
    sessions: RwLock<HashMap<String, Session>>,
}

impl Default for SessionStore {
    fn default() -> Self {
        Self::new(DEFAULT_SESSION_TTL)
    }
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        SessionStore {
            ttl,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    /// Issues a fresh 256-bit token.
    pub fn issue(&self, username: &str, now: DateTime<Utc>) -> Session {
        let mut raw = [0u8; 32];
        rand::rng().fill_bytes(&mut raw);
        let token: String = raw.iter().map(|b| format!("{b:02x}")).collect();
        let session = Session {
            token: token.clone(),
            username: username.to_string(),
            expires_at: now + self.ttl,
        };
        let mut map = self.sessions.write();
        map.retain(|_, s| s.expires_at > now);
        map.insert(token, session.clone());
        session
    }

    /// The live session for `token`, if any. Expired sessions are dropped.
    pub fn validate(&self, token: &str, now: DateTime<Utc>) -> Option<Session> {
        let session = self.sessions.read().get(token).cloned()?;
        if session.expires_at <= now {
            self.sessions.write().remove(token);
            return None;
        }
        Some(session)
    }

    pub fn revoke(&self, token: &str) -> bool {
        self.sessions.write().remove(token).is_some()
    }
}
