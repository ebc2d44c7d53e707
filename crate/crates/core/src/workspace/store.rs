//! Durable theory storage: an SQLite index plus content-addressed blobs.
//!
//! Layout under the data directory:
//!
//! ```text
//! workspace.sqlite3        users, documents, version chain
//! blobs/ab/cdef...         theory contents, named by SHA-256
//! ```

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use rusqlite::{params, Connection, OptionalExtension};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostic::Diagnostic;
use crate::telemetry::Timestamp;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Sql(#[from] rusqlite::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("blob {0} is missing")]
    MissingBlob(String),
}

pub fn content_hash(content: &str) -> String {
    hex::encode(Sha256::digest(content.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheoryDocument {
    pub owner: String,
    pub activity: String,
    pub name: String,
    pub content: String,
    pub content_hash: String,
    pub created: Timestamp,
    pub modified: Timestamp,
    pub last_checked_hash: Option<String>,
    /// Number of saved versions, counting this one.
    pub version: u64,
}

impl TheoryDocument {
    pub fn is_dirty(&self) -> bool {
        self.last_checked_hash.as_deref() != Some(self.content_hash.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentSummary {
    pub activity: String,
    pub name: String,
    pub content_hash: String,
    pub modified: Timestamp,
    pub size: u64,
    pub dirty: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionInfo {
    pub version: u64,
    pub content_hash: String,
    pub saved: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredUser {
    pub id: String,
    pub role: String,
    pub password_hash: String,
}

pub struct DocStore {
    db: Mutex<Connection>,
    blobs: PathBuf,
}

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS users (
    id TEXT PRIMARY KEY,
    role TEXT NOT NULL,
    password_hash TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS documents (
    owner TEXT NOT NULL,
    activity TEXT NOT NULL,
    name TEXT NOT NULL,
    content_hash TEXT NOT NULL,
    size INTEGER NOT NULL,
    created_ms INTEGER NOT NULL,
    modified_ms INTEGER NOT NULL,
    last_checked_hash TEXT,
    last_diagnostics TEXT,
    deleted INTEGER NOT NULL DEFAULT 0,
    PRIMARY KEY (owner, activity, name)
);
CREATE TABLE IF NOT EXISTS versions (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    owner TEXT NOT NULL,
    activity TEXT NOT NULL,
    name TEXT NOT NULL,
    content_hash TEXT NOT NULL,
    saved_ms INTEGER NOT NULL
);
CREATE INDEX IF NOT EXISTS versions_doc ON versions (owner, activity, name, id);
";

impl DocStore {
    pub fn open(data_dir: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(data_dir.join("blobs"))?;
        let db = Connection::open(data_dir.join("workspace.sqlite3"))?;
        db.pragma_update(None, "journal_mode", "WAL")?;
        db.pragma_update(None, "synchronous", "FULL")?;
        db.busy_timeout(std::time::Duration::from_secs(5))?;
        db.execute_batch(SCHEMA)?;
        Ok(Self {
            db: Mutex::new(db),
            blobs: data_dir.join("blobs"),
        })
    }

    fn blob_path(&self, hash: &str) -> PathBuf {
        self.blobs.join(&hash[..2]).join(&hash[2..])
    }

    fn write_blob(&self, hash: &str, content: &str) -> Result<(), StoreError> {
        let path = self.blob_path(hash);
        if path.exists() {
            return Ok(());
        }
        let dir = path.parent().expect("blob paths have a parent");
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(".{}.{}", &hash[2..], uuid::Uuid::new_v4().simple()));
        let mut f = File::create(&tmp)?;
        f.write_all(content.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, &path)?;
        File::open(dir)?.sync_all()?;
        Ok(())
    }

    pub fn read_blob(&self, hash: &str) -> Result<String, StoreError> {
        match fs::read_to_string(self.blob_path(hash)) {
            Ok(s) => Ok(s),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(StoreError::MissingBlob(hash.to_owned()))
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Saves a new version; durable when this returns.
    pub fn save(
        &self,
        owner: &str,
        activity: &str,
        name: &str,
        content: &str,
        now: Timestamp,
    ) -> Result<TheoryDocument, StoreError> {
        let hash = content_hash(content);
        self.write_blob(&hash, content)?;
        let mut db = self.db.lock();
        let tx = db.transaction()?;
        tx.execute(
            "INSERT INTO documents (owner, activity, name, content_hash, size, created_ms, modified_ms)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?6)
             ON CONFLICT (owner, activity, name) DO UPDATE SET
                content_hash = excluded.content_hash,
                size = excluded.size,
                modified_ms = excluded.modified_ms,
                created_ms = CASE WHEN deleted = 1 THEN excluded.created_ms ELSE created_ms END,
                deleted = 0",
            params![owner, activity, name, hash, content.len() as i64, now.millis()],
        )?;
        tx.execute(
            "INSERT INTO versions (owner, activity, name, content_hash, saved_ms) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![owner, activity, name, hash, now.millis()],
        )?;
        tx.commit()?;
        drop(db);
        self.load(owner, activity, name)?
            .ok_or_else(|| StoreError::MissingBlob(hash))
    }

    pub fn load(
        &self,
        owner: &str,
        activity: &str,
        name: &str,
    ) -> Result<Option<TheoryDocument>, StoreError> {
        let row = {
            let db = self.db.lock();
            db.query_row(
                "SELECT content_hash, created_ms, modified_ms, last_checked_hash,
                        (SELECT COUNT(*) FROM versions v
                          WHERE v.owner = d.owner AND v.activity = d.activity AND v.name = d.name)
                 FROM documents d
                 WHERE owner = ?1 AND activity = ?2 AND name = ?3 AND deleted = 0",
                params![owner, activity, name],
                |r| {
                    Ok((
                        r.get::<_, String>(0)?,
                        r.get::<_, i64>(1)?,
                        r.get::<_, i64>(2)?,
                        r.get::<_, Option<String>>(3)?,
                        r.get::<_, i64>(4)?,
                    ))
                },
            )
            .optional()?
        };
        let Some((hash, created, modified, checked, versions)) = row else {
            return Ok(None);
        };
        Ok(Some(TheoryDocument {
            owner: owner.to_owned(),
            activity: activity.to_owned(),
            name: name.to_owned(),
            content: self.read_blob(&hash)?,
            content_hash: hash,
            created: Timestamp::from_millis(created),
            modified: Timestamp::from_millis(modified),
            last_checked_hash: checked,
            version: versions as u64,
        }))
    }

    pub fn list(
        &self,
        owner: &str,
        activity: Option<&str>,
    ) -> Result<Vec<DocumentSummary>, StoreError> {
        let db = self.db.lock();
        let mut stmt = db.prepare(
            "SELECT activity, name, content_hash, modified_ms, size, last_checked_hash
             FROM documents
             WHERE owner = ?1 AND deleted = 0 AND (?2 IS NULL OR activity = ?2)
             ORDER BY activity, name",
        )?;
        let rows = stmt.query_map(params![owner, activity], |r| {
            let hash: String = r.get(2)?;
            let checked: Option<String> = r.get(5)?;
            Ok(DocumentSummary {
                activity: r.get(0)?,
                name: r.get(1)?,
                dirty: checked.as_deref() != Some(hash.as_str()),
                content_hash: hash,
                modified: Timestamp::from_millis(r.get(3)?),
                size: r.get::<_, i64>(4)? as u64,
            })
        })?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    /// Hides a document. Its versions stay in the chain.
    pub fn delete(&self, owner: &str, activity: &str, name: &str) -> Result<bool, StoreError> {
        let n = self.db.lock().execute(
            "UPDATE documents SET deleted = 1, last_checked_hash = NULL, last_diagnostics = NULL
             WHERE owner = ?1 AND activity = ?2 AND name = ?3 AND deleted = 0",
            params![owner, activity, name],
        )?;
        Ok(n > 0)
    }

    pub fn versions(
        &self,
        owner: &str,
        activity: &str,
        name: &str,
    ) -> Result<Vec<VersionInfo>, StoreError> {
        let db = self.db.lock();
        let mut stmt = db.prepare(
            "SELECT content_hash, saved_ms FROM versions
             WHERE owner = ?1 AND activity = ?2 AND name = ?3 ORDER BY id",
        )?;
        let rows = stmt.query_map(params![owner, activity, name], |r| {
            Ok((r.get::<_, String>(0)?, r.get::<_, i64>(1)?))
        })?;
        let mut out = Vec::new();
        for (i, row) in rows.enumerate() {
            let (content_hash, saved) = row?;
            out.push(VersionInfo {
                version: i as u64 + 1,
                content_hash,
                saved: Timestamp::from_millis(saved),
            });
        }
        Ok(out)
    }

    /// Records a completed prover round-trip for the given content.
    pub fn mark_checked(
        &self,
        owner: &str,
        activity: &str,
        name: &str,
        hash: &str,
        diagnostics: &[Diagnostic],
    ) -> Result<(), StoreError> {
        let json = serde_json::to_string(diagnostics).expect("diagnostics serialize");
        self.db.lock().execute(
            "UPDATE documents SET last_checked_hash = ?4, last_diagnostics = ?5
             WHERE owner = ?1 AND activity = ?2 AND name = ?3 AND deleted = 0",
            params![owner, activity, name, hash, json],
        )?;
        Ok(())
    }

    pub fn last_diagnostics(
        &self,
        owner: &str,
        activity: &str,
        name: &str,
    ) -> Result<Vec<Diagnostic>, StoreError> {
        let json: Option<Option<String>> = self
            .db
            .lock()
            .query_row(
                "SELECT last_diagnostics FROM documents WHERE owner = ?1 AND activity = ?2 AND name = ?3",
                params![owner, activity, name],
                |r| r.get(0),
            )
            .optional()?;
        Ok(json
            .flatten()
            .and_then(|j| serde_json::from_str(&j).ok())
            .unwrap_or_default())
    }

    pub fn total_size(&self, owner: &str) -> Result<u64, StoreError> {
        let n: i64 = self.db.lock().query_row(
            "SELECT COALESCE(SUM(size), 0) FROM documents WHERE owner = ?1 AND deleted = 0",
            params![owner],
            |r| r.get(0),
        )?;
        Ok(n as u64)
    }

    pub fn insert_user(&self, user: &StoredUser) -> Result<bool, StoreError> {
        let n = self.db.lock().execute(
            "INSERT OR IGNORE INTO users (id, role, password_hash) VALUES (?1, ?2, ?3)",
            params![user.id, user.role, user.password_hash],
        )?;
        Ok(n > 0)
    }

    pub fn user(&self, id: &str) -> Result<Option<StoredUser>, StoreError> {
        Ok(self
            .db
            .lock()
            .query_row(
                "SELECT id, role, password_hash FROM users WHERE id = ?1",
                params![id],
                |r| {
                    Ok(StoredUser {
                        id: r.get(0)?,
                        role: r.get(1)?,
                        password_hash: r.get(2)?,
                    })
                },
            )
            .optional()?)
    }
}
