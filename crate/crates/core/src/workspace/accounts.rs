//! Users, credentials and session tokens.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::Argon2;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use super::store::{DocStore, StoredUser};
use super::WorkspaceError;
use crate::names::is_valid_segment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Student,
    Instructor,
    Guest,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Student => "student",
            Self::Instructor => "instructor",
            Self::Guest => "guest",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "student" => Some(Self::Student),
            "instructor" => Some(Self::Instructor),
            "guest" => Some(Self::Guest),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub id: String,
    pub name: String,
    pub role: Role,
}

impl User {
    pub fn is_instructor(&self) -> bool {
        self.role == Role::Instructor
    }
}

/// One entry of `users.toml`. Either a plain `password` (hashed at load) or
/// an Argon2 `password_hash` in PHC form.
#[derive(Debug, Clone, Deserialize)]
pub struct UserEntry {
    pub name: String,
    #[serde(default = "default_role")]
    pub role: Role,
    #[serde(default)]
    pub password: Option<String>,
    #[serde(default)]
    pub password_hash: Option<String>,
}

fn default_role() -> Role {
    Role::Student
}

#[derive(Debug, Default, Deserialize)]
struct UsersFile {
    #[serde(default)]
    users: Vec<UserEntry>,
}

pub fn load_users_file(path: &Path) -> Result<Vec<UserEntry>, WorkspaceError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(WorkspaceError::Io(e)),
    };
    let file: UsersFile = toml::from_str(&text)
        .map_err(|e| WorkspaceError::Config(format!("{}: {e}", path.display())))?;
    Ok(file.users)
}

pub fn hash_password(password: &str) -> String {
    let salt = SaltString::encode_b64(&rand::random::<[u8; 16]>()).expect("16-byte salt");
    Argon2::default()
        .hash_password(password.as_bytes(), &salt)
        .expect("argon2 hashing with default parameters")
        .to_string()
}

fn verify_password(password: &str, hash: &str) -> bool {
    PasswordHash::new(hash)
        .is_ok_and(|parsed| Argon2::default().verify_password(password.as_bytes(), &parsed).is_ok())
}

struct TokenEntry {
    user: User,
    last_seen: Instant,
}

pub struct Accounts {
    store: Arc<DocStore>,
    configured: HashMap<String, (Role, String)>,
    tokens: RwLock<HashMap<String, TokenEntry>>,
}

impl Accounts {
    pub fn new(store: Arc<DocStore>, entries: Vec<UserEntry>) -> Result<Self, WorkspaceError> {
        let mut configured = HashMap::new();
        for e in entries {
            if !is_valid_segment(&e.name) || e.name.starts_with("guest-") {
                return Err(WorkspaceError::Config(format!("invalid user name {:?}", e.name)));
            }
            let hash = match (e.password_hash, e.password) {
                (Some(h), _) => h,
                (None, Some(p)) => hash_password(&p),
                (None, None) => {
                    return Err(WorkspaceError::Config(format!("user {:?} has no password", e.name)))
                }
            };
            configured.insert(e.name, (e.role, hash));
        }
        Ok(Self {
            store,
            configured,
            tokens: RwLock::new(HashMap::new()),
        })
    }

    /// Adds a user to the persistent store. Names from `users.toml` and
    /// existing names are refused.
    pub fn register(&self, name: &str, password: &str, role: Role) -> Result<User, WorkspaceError> {
        if !is_valid_segment(name) || name.starts_with("guest-") || role == Role::Guest {
            return Err(WorkspaceError::NameInvalid(format!("invalid user name {name:?}")));
        }
        if self.configured.contains_key(name) {
            return Err(WorkspaceError::Conflict(format!("user {name:?} exists")));
        }
        let stored = StoredUser {
            id: name.to_owned(),
            role: role.as_str().to_owned(),
            password_hash: hash_password(password),
        };
        if !self.store.insert_user(&stored)? {
            return Err(WorkspaceError::Conflict(format!("user {name:?} exists")));
        }
        Ok(User {
            id: name.to_owned(),
            name: name.to_owned(),
            role,
        })
    }

    fn issue(&self, user: User) -> String {
        let token = uuid::Uuid::new_v4().simple().to_string();
        self.tokens.write().insert(
            token.clone(),
            TokenEntry {
                user,
                last_seen: Instant::now(),
            },
        );
        token
    }

    pub fn login(&self, name: &str, password: &str) -> Result<(String, User), WorkspaceError> {
        let found = match self.configured.get(name) {
            Some((role, hash)) => Some((*role, hash.clone())),
            None => self
                .store
                .user(name)?
                .and_then(|u| Some((Role::parse(&u.role)?, u.password_hash))),
        };
        match found {
            Some((role, hash)) if verify_password(password, &hash) => {
                let user = User {
                    id: name.to_owned(),
                    name: name.to_owned(),
                    role,
                };
                Ok((self.issue(user.clone()), user))
            }
            _ => Err(WorkspaceError::BadCredentials),
        }
    }

    /// A fresh ephemeral user. Guest tokens live only in memory.
    pub fn guest_login(&self) -> (String, User) {
        let suffix = &uuid::Uuid::new_v4().simple().to_string()[..12];
        let user = User {
            id: format!("guest-{suffix}"),
            name: format!("Guest {suffix}"),
            role: Role::Guest,
        };
        (self.issue(user.clone()), user)
    }

    pub fn authenticate(&self, token: &str) -> Option<User> {
        let mut tokens = self.tokens.write();
        let entry = tokens.get_mut(token)?;
        entry.last_seen = Instant::now();
        Some(entry.user.clone())
    }

    pub fn logout(&self, token: &str) -> bool {
        self.tokens.write().remove(token).is_some()
    }

    /// Distinct users seen within `window`.
    pub fn active_users(&self, window: Duration) -> usize {
        let tokens = self.tokens.read();
        let mut ids: Vec<&str> = tokens
            .values()
            .filter(|e| e.last_seen.elapsed() <= window)
            .map(|e| e.user.id.as_str())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}
