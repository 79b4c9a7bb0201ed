//! Credential store: salted PBKDF2 hashes in a JSON file that stays
//! locked (read-only) unless explicitly unlocked.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use parking_lot::{Mutex, RwLock};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use subtle::ConstantTimeEq;

use super::atomic::{write_atomic_with, FaultHook};
use crate::access::Role;

pub const PBKDF2_ROUNDS: u32 = 100_000;
const SALT_LEN: usize = 16;
const HASH_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub username: String,
    pub hash: String,
    pub salt: String,
    pub role: Role,
}

/// A plaintext account used to bootstrap a missing users file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedUser {
    pub username: String,
    pub password: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoginSession {
    pub token: String,
    pub username: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AuthError {
    #[error("invalid username or password")]
    BadCredentials,
    #[error("credential store unavailable: {0}")]
    StoreUnavailable(String),
    #[error("administrator role required")]
    Forbidden,
    #[error("credential store is locked")]
    StoreLocked,
    #[error("{0}")]
    InvalidRecord(String),
}

fn derive(password: &str, salt: &[u8]) -> [u8; HASH_LEN] {
    let mut out = [0u8; HASH_LEN];
    pbkdf2::pbkdf2_hmac::<Sha256>(password.as_bytes(), salt, PBKDF2_ROUNDS, &mut out);
    out
}

pub fn hash_password(username: &str, password: &str, role: Role) -> UserRecord {
    let mut salt = [0u8; SALT_LEN];
    rand::thread_rng().fill_bytes(&mut salt);
    UserRecord {
        username: username.into(),
        hash: hex::encode(derive(password, &salt)),
        salt: hex::encode(salt),
        role,
    }
}

fn verify(record: &UserRecord, password: &str) -> bool {
    let (Ok(salt), Ok(expected)) = (hex::decode(&record.salt), hex::decode(&record.hash)) else {
        return false;
    };
    derive(password, &salt).ct_eq(expected.as_slice()).into()
}

pub struct UserStore {
    path: PathBuf,
    users: RwLock<Vec<UserRecord>>,
    locked: AtomicBool,
    tokens: Mutex<HashMap<String, LoginSession>>,
    fault: Mutex<Option<FaultHook>>,
}

impl UserStore {
    /// Opens the users file, creating it from `seed` when it does not exist.
    /// The store starts locked.
    pub fn open(path: &Path, seed: &[SeedUser]) -> Result<Self, AuthError> {
        let store = Self {
            path: path.to_path_buf(),
            users: RwLock::new(Vec::new()),
            locked: AtomicBool::new(true),
            tokens: Mutex::new(HashMap::new()),
            fault: Mutex::new(None),
        };
        if path.exists() {
            let text = std::fs::read_to_string(path)
                .map_err(|e| AuthError::StoreUnavailable(e.to_string()))?;
            let users: Vec<UserRecord> = serde_json::from_str(&text)
                .map_err(|e| AuthError::StoreUnavailable(format!("{}: {e}", path.display())))?;
            *store.users.write() = users;
        } else {
            let users = seed
                .iter()
                .map(|s| hash_password(&s.username, &s.password, s.role.clone()))
                .collect();
            *store.users.write() = users;
            store.persist()?;
        }
        store.apply_file_mode();
        Ok(store)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn usernames(&self) -> Vec<String> {
        self.users
            .read()
            .iter()
            .map(|u| u.username.clone())
            .collect()
    }

    pub fn is_locked(&self) -> bool {
        self.locked.load(Ordering::SeqCst)
    }

    /// Emulates suspending and restoring the immutable attribute.
    pub fn set_locked(&self, locked: bool) {
        self.locked.store(locked, Ordering::SeqCst);
        self.apply_file_mode();
    }

    pub fn set_fault_hook(&self, hook: Option<FaultHook>) {
        *self.fault.lock() = hook;
    }

    fn apply_file_mode(&self) {
        if let Ok(meta) = std::fs::metadata(&self.path) {
            let mut perms = meta.permissions();
            #[allow(clippy::permissions_set_readonly_false)]
            perms.set_readonly(self.is_locked());
            let _ = std::fs::set_permissions(&self.path, perms);
        }
    }

    fn persist(&self) -> Result<(), AuthError> {
        let body = serde_json::to_vec_pretty(&*self.users.read()).expect("users serialize");
        let hook = self.fault.lock().clone();
        write_atomic_with(&self.path, &body, hook.as_ref())
            .map_err(|e| AuthError::StoreUnavailable(e.to_string()))
    }

    /// Unknown users and wrong passwords fail identically, and both pay
    /// for a full key derivation.
    pub fn login(&self, username: &str, password: &str) -> Result<LoginSession, AuthError> {
        let record = self
            .users
            .read()
            .iter()
            .find(|u| u.username == username)
            .cloned();
        let ok = match &record {
            Some(r) => verify(r, password),
            None => {
                let _ = derive(password, &[0u8; SALT_LEN]);
                false
            }
        };
        let record = record.filter(|_| ok).ok_or(AuthError::BadCredentials)?;
        let mut raw = [0u8; 24];
        rand::thread_rng().fill_bytes(&mut raw);
        let session = LoginSession {
            token: hex::encode(raw),
            username: record.username,
            role: record.role,
        };
        self.tokens
            .lock()
            .insert(session.token.clone(), session.clone());
        Ok(session)
    }

    pub fn session(&self, token: &str) -> Option<LoginSession> {
        self.tokens.lock().get(token).cloned()
    }

    pub fn logout(&self, token: &str) -> bool {
        self.tokens.lock().remove(token).is_some()
    }

    pub fn require_admin(&self, token: Option<&str>) -> Result<LoginSession, AuthError> {
        token
            .and_then(|t| self.session(t))
            .filter(|s| s.role.is_administrator())
            .ok_or(AuthError::Forbidden)
    }

    pub fn upsert_user(
        &self,
        token: Option<&str>,
        username: &str,
        password: &str,
        role: Role,
    ) -> Result<(), AuthError> {
        self.require_admin(token)?;
        if self.is_locked() {
            return Err(AuthError::StoreLocked);
        }
        if username.trim().is_empty() || password.is_empty() {
            return Err(AuthError::InvalidRecord(
                "username and password must be non-empty".into(),
            ));
        }
        let record = hash_password(username, password, role);
        let previous = {
            let mut users = self.users.write();
            let prev = users.clone();
            match users.iter_mut().find(|u| u.username == username) {
                Some(u) => *u = record,
                None => users.push(record),
            }
            prev
        };
        if let Err(e) = self.persist() {
            *self.users.write() = previous;
            return Err(e);
        }
        Ok(())
    }
}
