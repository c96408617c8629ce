//! Conversation memory and the feedback log.
//!
//! Each session keeps its 10 most recent turns in memory. Every turn is
//! also appended to `sessions/<id>.ndjson` and every verdict to a shared
//! `feedback.ndjson`, so a session can be rebuilt after a restart by
//! replaying both files.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieve::Profile;

pub const WINDOW: usize = 10;
pub const RETRY_BUDGET: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Up,
    Down,
}

impl Verdict {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "up" => Some(Verdict::Up),
            "down" => Some(Verdict::Down),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub turn_id: String,
    pub query: String,
    pub final_query: String,
    pub answer_text: String,
    pub citations: Vec<String>,
    #[serde(default)]
    pub feedback: Option<Verdict>,
    pub reformulated: bool,
    pub profile: Profile,
    /// Set when this turn is the retry triggered by feedback on another turn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_of: Option<String>,
    /// Whether feedback on this turn triggered a retry.
    #[serde(default)]
    pub retried: bool,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub session_id: String,
    pub turn_id: String,
    pub verdict: Verdict,
    pub timestamp_ms: u64,
    pub triggered_retry: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySession {
    pub session_id: String,
    pub turns: VecDeque<Turn>,
    pub created_at_ms: u64,
    pub retry_budget_used: u32,
    /// Turns ever appended, including evicted ones.
    pub total_turns: u64,
    #[serde(skip)]
    known_turns: HashSet<String>,
}

impl QuerySession {
    pub fn new(session_id: &str) -> Self {
        Self {
            session_id: session_id.to_string(),
            turns: VecDeque::new(),
            created_at_ms: now_ms(),
            retry_budget_used: 0,
            total_turns: 0,
            known_turns: HashSet::new(),
        }
    }

    pub fn next_turn_id(&self) -> String {
        format!("t{}", self.total_turns + 1)
    }

    pub fn retry_budget_left(&self) -> u32 {
        RETRY_BUDGET.saturating_sub(self.retry_budget_used)
    }

    /// Add a turn to the window, evicting the oldest past [`WINDOW`].
    pub fn push_turn(&mut self, turn: Turn) -> Result<()> {
        if !self.known_turns.insert(turn.turn_id.clone()) {
            return Err(Error::DuplicateTurn {
                session_id: self.session_id.clone(),
                turn_id: turn.turn_id,
            });
        }
        self.turns.push_back(turn);
        self.total_turns += 1;
        while self.turns.len() > WINDOW {
            self.turns.pop_front();
        }
        Ok(())
    }

    pub fn knows_turn(&self, turn_id: &str) -> bool {
        self.known_turns.contains(turn_id)
    }

    pub fn turn(&self, turn_id: &str) -> Option<&Turn> {
        self.turns.iter().find(|t| t.turn_id == turn_id)
    }

    fn apply_feedback(&mut self, ev: &FeedbackEvent) {
        if ev.triggered_retry {
            self.retry_budget_used += 1;
        }
        if let Some(t) = self.turns.iter_mut().find(|t| t.turn_id == ev.turn_id) {
            t.feedback = Some(ev.verdict);
            t.retried |= ev.triggered_retry;
        }
    }
}

pub(crate) fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn valid_session_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
        && !id.starts_with('.')
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum SessionRecord {
    Session { session_id: String, created_at_ms: u64 },
    Turn(Turn),
}

pub type SessionHandle = Arc<Mutex<QuerySession>>;

/// Sessions keyed by id; each handle doubles as the session's turn lock.
pub struct SessionStore {
    root: Option<PathBuf>,
    sessions: Mutex<HashMap<String, SessionHandle>>,
    feedback: Mutex<Vec<FeedbackEvent>>,
    // full transcripts when there is no root directory
    archive: Mutex<HashMap<String, Vec<Turn>>>,
}

impl std::fmt::Debug for SessionStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionStore").field("root", &self.root).finish()
    }
}

pub fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl SessionStore {
    /// Store rooted at `root`; creates `root/sessions` if needed.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("sessions"))?;
        Ok(Self {
            root: Some(root),
            sessions: Mutex::default(),
            feedback: Mutex::default(),
            archive: Mutex::default(),
        })
    }

    /// Store that keeps nothing on disk.
    pub fn in_memory() -> Self {
        Self {
            root: None,
            sessions: Mutex::default(),
            feedback: Mutex::default(),
            archive: Mutex::default(),
        }
    }

    fn session_path(&self, id: &str) -> Option<PathBuf> {
        self.root
            .as_ref()
            .map(|r| r.join("sessions").join(format!("{id}.ndjson")))
    }

    fn feedback_path(&self) -> Option<PathBuf> {
        self.root.as_ref().map(|r| r.join("feedback.ndjson"))
    }

    /// Handle for `id`, loading it from disk if needed. With `create`, a
    /// missing session is started; otherwise it is an error.
    pub fn session(&self, id: &str, create: bool) -> Result<SessionHandle> {
        if !valid_session_id(id) {
            return Err(Error::InvalidConfig(format!("invalid session id {id:?}")));
        }
        let mut map = lock(&self.sessions);
        if let Some(h) = map.get(id) {
            return Ok(h.clone());
        }
        let session = match self.session_path(id) {
            Some(path) if path.exists() => self.replay(id, &path)?,
            _ if create => {
                let s = QuerySession::new(id);
                self.append_record(
                    id,
                    &SessionRecord::Session {
                        session_id: id.to_string(),
                        created_at_ms: s.created_at_ms,
                    },
                )?;
                s
            }
            _ => return Err(Error::UnknownSession(id.to_string())),
        };
        let handle = Arc::new(Mutex::new(session));
        map.insert(id.to_string(), handle.clone());
        Ok(handle)
    }

    fn replay(&self, id: &str, path: &Path) -> Result<QuerySession> {
        let mut session = QuerySession::new(id);
        for rec in read_ndjson::<SessionRecord>(path)? {
            match rec {
                SessionRecord::Session { created_at_ms, .. } => session.created_at_ms = created_at_ms,
                SessionRecord::Turn(t) => session.push_turn(t)?,
            }
        }
        for ev in self.feedback_log()? {
            if ev.session_id == id {
                session.apply_feedback(&ev);
            }
        }
        Ok(session)
    }

    fn append_record(&self, id: &str, rec: &SessionRecord) -> Result<()> {
        match (self.session_path(id), rec) {
            (Some(path), _) => append_line(&path, rec)?,
            (None, SessionRecord::Turn(t)) => lock(&self.archive).entry(id.to_string()).or_default().push(t.clone()),
            (None, SessionRecord::Session { .. }) => {}
        }
        Ok(())
    }

    /// Append to the window and the durable transcript.
    pub fn append_turn(&self, session: &mut QuerySession, turn: Turn) -> Result<()> {
        if session.knows_turn(&turn.turn_id) {
            return Err(Error::DuplicateTurn {
                session_id: session.session_id.clone(),
                turn_id: turn.turn_id,
            });
        }
        self.append_record(&session.session_id, &SessionRecord::Turn(turn.clone()))?;
        session.push_turn(turn)
    }

    /// The retained turns, oldest first.
    pub fn history_window(&self, id: &str) -> Result<Vec<Turn>> {
        let h = self.session(id, false)?;
        let s = lock(&h);
        Ok(s.turns.iter().cloned().collect())
    }

    /// Every turn ever recorded for `id`, oldest first. Does not take the
    /// session's lock, so it is safe to call while holding it.
    pub fn transcript(&self, id: &str) -> Result<Vec<Turn>> {
        if !valid_session_id(id) {
            return Err(Error::InvalidConfig(format!("invalid session id {id:?}")));
        }
        let Some(path) = self.session_path(id) else {
            if let Some(turns) = lock(&self.archive).get(id) {
                return Ok(turns.clone());
            }
            return match lock(&self.sessions).contains_key(id) {
                true => Ok(Vec::new()),
                false => Err(Error::UnknownSession(id.to_string())),
            };
        };
        if !path.exists() {
            return Err(Error::UnknownSession(id.to_string()));
        }
        Ok(read_ndjson::<SessionRecord>(&path)?
            .into_iter()
            .filter_map(|r| match r {
                SessionRecord::Turn(t) => Some(t),
                SessionRecord::Session { .. } => None,
            })
            .collect())
    }

    /// Record a verdict for a turn of `session`.
    pub fn log_feedback(&self, session: &mut QuerySession, event: FeedbackEvent) -> Result<()> {
        if event.session_id != session.session_id {
            return Err(Error::UnknownSession(event.session_id));
        }
        if !session.knows_turn(&event.turn_id) {
            return Err(Error::UnknownTurn {
                session_id: event.session_id,
                turn_id: event.turn_id,
            });
        }
        {
            let mut log = lock(&self.feedback);
            if let Some(path) = self.feedback_path() {
                append_line(&path, &event)?;
            } else {
                log.push(event.clone());
            }
        }
        session.apply_feedback(&event);
        Ok(())
    }

    pub fn feedback_log(&self) -> Result<Vec<FeedbackEvent>> {
        let log = lock(&self.feedback);
        match self.feedback_path() {
            Some(path) if path.exists() => read_ndjson(&path),
            Some(_) => Ok(Vec::new()),
            None => Ok(log.clone()),
        }
    }
}

fn append_line<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut line = serde_json::to_vec(value)?;
    line.push(b'\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(&line)?;
    f.flush()?;
    Ok(())
}

fn read_ndjson<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|source| Error::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
