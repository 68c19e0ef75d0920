//! Event-sourced session persistence: `seed.json` plus an append-only
//! `audit.jsonl`, replayed on open.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rumorscope_core::active::{
    ActiveError, ActiveSession, AuditRecord, CycleOutcome, OracleResponse, SessionSeed,
};
use thiserror::Error;

pub const SEED_FILE: &str = "seed.json";
pub const AUDIT_FILE: &str = "audit.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path} line {line}: {source}")]
    AuditLine {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("session directory {0} already holds a session")]
    Exists(String),
    #[error("session already has labels; cannot change {0}")]
    Locked(&'static str),
    #[error(transparent)]
    Session(#[from] ActiveError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Settings that may be changed when opening a session with no labels yet.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Overrides {
    pub k_per_cycle: Option<usize>,
    pub n_cycles: Option<usize>,
}

/// Writes `seed.json` into a new or empty session directory.
pub fn init_session_dir(dir: &Path, seed: &SessionSeed) -> Result<(), StoreError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let seed_path = dir.join(SEED_FILE);
    if seed_path.exists() || dir.join(AUDIT_FILE).exists() {
        return Err(StoreError::Exists(dir.display().to_string()));
    }
    write_seed(&seed_path, seed)
}

fn write_seed(path: &Path, seed: &SessionSeed) -> Result<(), StoreError> {
    let bytes = serde_json::to_vec(seed).map_err(|source| StoreError::Json {
        path: path.display().to_string(),
        source,
    })?;
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

/// Reads the audit log. A final line without a newline that does not parse
/// is a torn write from a crash: it is dropped and the file truncated.
fn read_audit(path: &Path) -> Result<Vec<AuditRecord>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut line = String::new();
    let mut offset = 0u64;
    for n in 1.. {
        line.clear();
        let read = reader.read_line(&mut line).map_err(io_err(path))?;
        if read == 0 {
            break;
        }
        if line.trim().is_empty() {
            offset += read as u64;
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(rec) => records.push(rec),
            Err(source) if !line.ends_with('\n') => {
                log::warn!(
                    "{}: dropping torn final line {n} ({source})",
                    path.display()
                );
                let f = OpenOptions::new()
                    .write(true)
                    .open(path)
                    .map_err(io_err(path))?;
                f.set_len(offset).map_err(io_err(path))?;
                break;
            }
            Err(source) => {
                return Err(StoreError::AuditLine {
                    path: path.display().to_string(),
                    line: n,
                    source,
                });
            }
        }
        offset += read as u64;
    }
    Ok(records)
}

/// A session together with the files that make it durable.
#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    session: ActiveSession,
    audit: File,
}

impl SessionStore {
    pub fn open(dir: &Path, overrides: Overrides) -> Result<Self, StoreError> {
        let seed_path = dir.join(SEED_FILE);
        let bytes = std::fs::read(&seed_path).map_err(io_err(&seed_path))?;
        let mut seed: SessionSeed =
            serde_json::from_slice(&bytes).map_err(|source| StoreError::Json {
                path: seed_path.display().to_string(),
                source,
            })?;
        let audit_path = dir.join(AUDIT_FILE);
        let records = read_audit(&audit_path)?;

        let mut changed = false;
        for (value, slot, name) in [
            (overrides.k_per_cycle, &mut seed.config.k_per_cycle, "k"),
            (overrides.n_cycles, &mut seed.config.n_cycles, "cycles"),
        ] {
            if let Some(v) = value.filter(|v| v != slot) {
                if !records.is_empty() {
                    return Err(StoreError::Locked(name));
                }
                *slot = v;
                changed = true;
            }
        }
        let session = ActiveSession::replay(seed, &records)?;
        if changed {
            write_seed(&seed_path, session.seed())?;
        }
        let audit = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&audit_path)
            .map_err(io_err(&audit_path))?;
        log::info!(
            "opened session in {} at revision {} ({} audit records)",
            dir.display(),
            session.revision(),
            records.len()
        );
        Ok(SessionStore {
            dir: dir.to_owned(),
            session,
            audit,
        })
    }

    pub fn session(&self) -> &ActiveSession {
        &self.session
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Applies a submission and appends the new audit records. If the log
    /// cannot be written the in-memory session is rebuilt from disk, so memory
    /// never runs ahead of the log.
    pub fn apply(
        &mut self,
        responses: &[OracleResponse],
        at: DateTime<Utc>,
    ) -> Result<CycleOutcome, StoreError> {
        let before = self.session.audit().len();
        let outcome = self.session.apply_labels(responses, at)?;
        if let Err(e) = self.append(before) {
            log::error!("audit write failed, reloading session: {e}");
            let dir = self.dir.clone();
            *self = Self::open(&dir, Overrides::default())?;
            return Err(e);
        }
        Ok(outcome)
    }

    fn append(&mut self, from: usize) -> Result<(), StoreError> {
        let path = self.dir.join(AUDIT_FILE);
        let len = self.audit.metadata().map_err(io_err(&path))?.len();
        let mut buf = Vec::new();
        for rec in &self.session.audit()[from..] {
            serde_json::to_writer(&mut buf, rec).map_err(|source| StoreError::Json {
                path: path.display().to_string(),
                source,
            })?;
            buf.push(b'\n');
        }
        let written = self
            .audit
            .write_all(&buf)
            .and_then(|_| self.audit.sync_data());
        if let Err(e) = written {
            // drop any partial group so the log replays cleanly
            if let Err(t) = self.audit.set_len(len) {
                log::error!("could not truncate {}: {t}", path.display());
            }
            return Err(io_err(&path)(e));
        }
        Ok(())
    }
}
