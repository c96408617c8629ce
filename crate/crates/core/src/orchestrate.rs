//! Query answering: optional rewrite, retrieval, rerank, grounded prompt,
//! generation, and the retry that negative feedback triggers.

use std::collections::{BTreeMap, HashSet};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::error::{Error, Result, Stage, StageExt};
use crate::index::ChunkLookup;
use crate::llm::{ChatMessage, LlmClient};
use crate::retrieve::{Profile, ScoredCandidate};
use crate::session::{lock, now_ms, FeedbackEvent, QuerySession, SessionStore, Turn, Verdict};
use crate::sparse::tokenize;

pub const BUNDLED_LEXICON: &str = include_str!("../data/expansion_lexicon.json");

/// Queries shorter than this are rewritten before retrieval.
pub const SHORT_QUERY_TOKENS: usize = 4;
const REWRITE_TOKENS: usize = 3;
const HISTORY_IN_PROMPT: usize = 3;
const MOCK_CLAUSE_CHARS: usize = 200;

const STOPWORDS: &[&str] = &[
    "a", "about", "am", "an", "and", "any", "are", "as", "at", "be", "by", "can", "could", "do", "does", "for", "from",
    "get", "has", "have", "how", "i", "if", "in", "is", "it", "its", "many", "me", "much", "my", "of", "on", "or",
    "our", "should", "so", "tell", "that", "the", "their", "there", "this", "to", "us", "was", "we", "were", "what",
    "when", "where", "which", "who", "why", "will", "with", "would", "you", "your",
];

/// Term to synonyms, used for deterministic query expansion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Lexicon(BTreeMap<String, Vec<String>>);

impl Lexicon {
    pub fn from_json(raw: &str) -> Result<Self> {
        let map: BTreeMap<String, Vec<String>> = serde_json::from_str(raw)?;
        Ok(Self(map.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect()))
    }

    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_LEXICON).expect("bundled lexicon is valid JSON")
    }

    pub fn synonyms(&self, term: &str) -> &[String] {
        self.0.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.0)?)
    }
}

fn normalize(q: &str) -> String {
    q.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn is_content(tok: &str) -> bool {
    !STOPWORDS.contains(&tok) && tok.chars().any(char::is_alphabetic)
}

/// Mock rewrite: append up to three content tokens from the most recent
/// turns that the query does not already contain.
fn mock_rewrite(query: &str, history: &[Turn]) -> String {
    let present: HashSet<String> = tokenize(query).into_iter().collect();
    let mut picked: Vec<String> = Vec::new();
    'turns: for turn in history.iter().rev() {
        for tok in tokenize(&turn.query) {
            if picked.len() == REWRITE_TOKENS {
                break 'turns;
            }
            if is_content(&tok) && !present.contains(&tok) && !picked.contains(&tok) {
                picked.push(tok);
            }
        }
    }
    if picked.is_empty() {
        return query.to_string();
    }
    format!("{} {}", query.trim_end(), picked.join(" "))
}

fn first_line(text: &str) -> String {
    let line = text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let line = line
        .strip_prefix("Query:")
        .or_else(|| line.strip_prefix("query:"))
        .unwrap_or(line)
        .trim();
    line.trim_matches(|c| c == '"' || c == '\'' || c == '`')
        .trim()
        .to_string()
}

/// Rephrase `query` as a self-contained search query using recent turns.
pub fn rewrite_query(query: &str, client: &LlmClient, history: &[Turn]) -> Result<String> {
    if client.is_mock() {
        return Ok(mock_rewrite(query, history));
    }
    let mut context = String::new();
    for t in history.iter().rev().take(HISTORY_IN_PROMPT).rev() {
        context.push_str(&format!("User: {}\n", t.query));
    }
    let messages = [
        ChatMessage::system(
            "Rewrite the user's latest question as one self-contained search query. \
             Resolve references to earlier questions. Reply with the query only.",
        ),
        ChatMessage::user(format!("Earlier questions:\n{context}\nLatest question: {query}")),
    ];
    let out = first_line(&client.chat(&messages)?);
    if out.is_empty() {
        return Err(Error::EmptyCompletion);
    }
    Ok(out)
}

const SUFFIXES: &[&str] = &["details", "overview", "guidelines", "requirements", "process"];

/// Deterministic variants: synonym swaps, then word rotations, then
/// suffixed and numbered forms.
fn mock_variants<'a>(query: &'a str, lexicon: &'a Lexicon) -> impl Iterator<Item = String> + 'a {
    let tokens = tokenize(query);
    let base = if tokens.is_empty() {
        query.trim().to_string()
    } else {
        tokens.join(" ")
    };
    let swaps = {
        let tokens = tokens.clone();
        (0..tokens.len()).flat_map(move |i| {
            let tokens = tokens.clone();
            lexicon.synonyms(&tokens[i]).iter().map(move |s| {
                let mut t = tokens.clone();
                t[i] = s.clone();
                t.join(" ")
            })
        })
    };
    let rotations = {
        let tokens = tokens.clone();
        (1..tokens.len().max(1)).map(move |r| {
            let mut t = tokens.clone();
            t.rotate_left(r);
            t.join(" ")
        })
    };
    let suffixed = {
        let base = base.clone();
        SUFFIXES.iter().map(move |s| format!("{base} {s}"))
    };
    let numbered = (1..).map(move |i| format!("{base} (variant {i})"));
    swaps.chain(rotations).chain(suffixed).chain(numbered)
}

/// `n` distinct alternative formulations of `query`, none equal to it.
pub fn expand_query(query: &str, client: &LlmClient, n: usize, lexicon: &Lexicon) -> Result<Vec<String>> {
    if n == 0 {
        return Err(Error::InvalidConfig("expansion count must be at least 1".into()));
    }
    let mut seen: HashSet<String> = HashSet::from([normalize(query)]);
    let mut out = Vec::with_capacity(n);
    let mut take = |cand: String, out: &mut Vec<String>| {
        let cand = cand.trim().to_string();
        if !cand.is_empty() && seen.insert(normalize(&cand)) {
            out.push(cand);
        }
    };
    if !client.is_mock() {
        let messages = [
            ChatMessage::system(format!(
                "Write {n} alternative phrasings of the user's search query, one per line, \
                 using synonyms or different word order. Reply with the queries only."
            )),
            ChatMessage::user(query.to_string()),
        ];
        for line in client.chat(&messages)?.lines() {
            let line = line
                .trim()
                .trim_start_matches(|c: char| c.is_ascii_digit() || matches!(c, '.' | ')' | '-' | '*' | '•'))
                .trim();
            take(first_line(line), &mut out);
            if out.len() == n {
                break;
            }
        }
    }
    for cand in mock_variants(query, lexicon) {
        if out.len() == n {
            break;
        }
        take(cand, &mut out);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBlock {
    pub chunk_id: String,
    pub file_name: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub query: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub system_instructions: String,
    pub context_blocks: Vec<ContextBlock>,
    pub user_query: String,
    #[serde(default)]
    pub history: Vec<HistoryEntry>,
}

pub const SYSTEM_INSTRUCTIONS: &str = "You answer questions about internal company documents.\n\
Rules:\n\
1. Use only the sources listed below. If they do not contain the answer, say that the documents do not cover it.\n\
2. Write the answer as bullet points.\n\
3. End every bullet with the id of the source it came from in square brackets, for example [hr/leave.md#c0].\n\
4. If the answer is longer than three sentences, finish with a line that starts with \"Summary:\" and condenses it.";

impl PromptTemplate {
    pub fn context_ids(&self) -> impl Iterator<Item = &str> {
        self.context_blocks.iter().map(|b| b.chunk_id.as_str())
    }

    pub fn render(&self) -> Vec<ChatMessage> {
        let mut messages = vec![ChatMessage::system(&self.system_instructions)];
        for h in &self.history {
            messages.push(ChatMessage::user(&h.query));
            messages.push(ChatMessage {
                role: "assistant".into(),
                content: h.answer.clone(),
            });
        }
        let mut body = String::from("Sources:\n");
        if self.context_blocks.is_empty() {
            body.push_str("(none)\n");
        }
        for b in &self.context_blocks {
            body.push_str(&format!("[{}] (file: {})\n{}\n\n", b.chunk_id, b.file_name, b.text));
        }
        body.push_str(&format!("Question: {}", self.user_query));
        messages.push(ChatMessage::user(body));
        messages
    }
}

/// Context blocks in candidate order, one per chunk.
pub fn build_prompt(query: &str, candidates: &[ScoredCandidate], chunks: &dyn ChunkLookup) -> Result<PromptTemplate> {
    let mut seen = HashSet::new();
    let mut blocks = Vec::new();
    for c in candidates {
        if !seen.insert(c.chunk_id.as_str()) {
            continue;
        }
        let chunk = chunks
            .chunk(&c.chunk_id)
            .ok_or_else(|| Error::UnknownChunk(c.chunk_id.clone()))?;
        blocks.push(ContextBlock {
            chunk_id: chunk.chunk_id.clone(),
            file_name: chunk.file_name().to_string(),
            text: chunk.text.clone(),
        });
    }
    Ok(PromptTemplate {
        system_instructions: SYSTEM_INSTRUCTIONS.to_string(),
        context_blocks: blocks,
        user_query: query.to_string(),
        history: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub chunk_id: String,
    pub file_name: String,
    pub fused: f64,
    pub rerank: Option<f64>,
    pub dense_norm: f64,
    pub sparse_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedAnswer {
    pub answer_text: String,
    pub citations: Vec<String>,
    pub used_chunks: Vec<String>,
    pub summary: Option<String>,
    pub reformulated: bool,
    pub final_query: String,
    /// The question as the user asked it.
    pub query: String,
    pub profile: Profile,
    pub turn_id: Option<String>,
    pub sources: Vec<Source>,
    /// Cited ids that were not in the prompt; removed from the answer.
    pub dropped_citations: Vec<String>,
    pub warnings: Vec<String>,
}

impl GroundedAnswer {
    pub fn citation_warning(&self) -> bool {
        !self.dropped_citations.is_empty()
    }
}

static CITATION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[([^\[\]\n]+)\]").expect("citation regex"));
static SENTENCE_END: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[.!?]\s").expect("sentence regex"));

/// Sentences in `text`: pieces between a `.`, `!` or `?` and following
/// whitespace. Pieces holding no words once citation markers are removed
/// do not count.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut pieces = Vec::new();
    let mut start = 0;
    for m in SENTENCE_END.find_iter(text) {
        let end = m.start() + 1;
        pieces.push(text[start..end].trim());
        start = end;
    }
    pieces.push(text[start..].trim());
    pieces
        .into_iter()
        .filter(|p| CITATION.replace_all(p, "").chars().any(char::is_alphanumeric))
        .collect()
}

pub fn sentence_count(text: &str) -> usize {
    sentences(text).len()
}

fn is_summary_line(line: &str) -> Option<&str> {
    let t = line.trim().trim_start_matches(['#', '*', '-', ' ']).trim_start();
    let head = t.get(..8)?;
    if head.eq_ignore_ascii_case("summary:") {
        Some(t)
    } else {
        None
    }
}

fn mock_clause(text: &str) -> String {
    let t = text.trim();
    let end = [". ", ".\n", ";", "\n", "! ", "? "]
        .iter()
        .filter_map(|d| t.find(d))
        .min()
        .unwrap_or(t.len());
    let mut clause: String = t[..end].chars().take(MOCK_CLAUSE_CHARS).collect();
    clause = clause.split_whitespace().collect::<Vec<_>>().join(" ");
    clause
        .trim_end_matches(['.', ',', ':', '!', '?'])
        .replace(['[', ']'], "")
}

fn mock_completion(prompt: &PromptTemplate) -> String {
    if prompt.context_blocks.is_empty() {
        return "- The documents provided do not cover this question.".to_string();
    }
    prompt
        .context_blocks
        .iter()
        .map(|b| format!("- {}. [{}]", mock_clause(&b.text), b.chunk_id))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Check a completion against its prompt: keep citations that name a
/// context block, strip the rest, and attach a summary when the answer
/// runs past three sentences.
pub fn ground_completion(prompt: &PromptTemplate, completion: &str) -> Result<GroundedAnswer> {
    if completion.trim().is_empty() {
        return Err(Error::EmptyCompletion);
    }
    let known: HashSet<&str> = prompt.context_ids().collect();
    let mut citations: Vec<String> = Vec::new();
    let mut dropped: Vec<String> = Vec::new();
    let cleaned = CITATION.replace_all(completion, |caps: &regex::Captures<'_>| {
        let ids: Vec<&str> = caps[1]
            .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let mut kept = Vec::new();
        for id in ids {
            if known.contains(id) {
                if !citations.iter().any(|c| c == id) {
                    citations.push(id.to_string());
                }
                kept.push(id);
            } else if !dropped.iter().any(|d| d == id) {
                dropped.push(id.to_string());
            }
        }
        kept.iter().map(|id| format!("[{id}]")).collect::<Vec<_>>().join(" ")
    });

    let mut summary = None;
    let mut body_lines = Vec::new();
    for line in cleaned.lines() {
        match is_summary_line(line) {
            Some(s) if summary.is_none() => summary = Some(s.to_string()),
            _ => body_lines.push(line.trim_end()),
        }
    }
    let answer_text = body_lines.join("\n").trim().to_string();
    if answer_text.is_empty() {
        return Err(Error::EmptyCompletion);
    }
    let summary = if sentence_count(&answer_text) > 3 {
        summary.or_else(|| {
            let first = sentences(&answer_text)[0].trim_start_matches(['-', '*', '•', ' ']);
            Some(format!("Summary: {first}"))
        })
    } else {
        None
    };
    let mut warnings = Vec::new();
    if !dropped.is_empty() {
        warnings.push(format!("dropped citations not in context: {}", dropped.join(", ")));
    }
    Ok(GroundedAnswer {
        answer_text,
        citations,
        used_chunks: prompt.context_ids().map(str::to_string).collect(),
        summary,
        reformulated: false,
        final_query: prompt.user_query.clone(),
        query: prompt.user_query.clone(),
        profile: Profile::Advanced,
        turn_id: None,
        sources: Vec::new(),
        dropped_citations: dropped,
        warnings,
    })
}

pub fn generate_answer(prompt: &PromptTemplate, client: &LlmClient) -> Result<GroundedAnswer> {
    let completion = if client.is_mock() {
        mock_completion(prompt)
    } else {
        client.chat(&prompt.render())?
    };
    ground_completion(prompt, &completion)
}

struct TurnRequest<'a> {
    query: &'a str,
    /// Retrieval query chosen by a feedback retry; skips the rewrite step.
    forced: Option<String>,
    profile: Profile,
    retry_of: Option<String>,
}

fn needs_rewrite(query: &str, history: &[Turn]) -> bool {
    tokenize(query).len() < SHORT_QUERY_TOKENS || !history.is_empty()
}

fn run_turn(
    engine: &Engine,
    sessions: &SessionStore,
    session: &mut QuerySession,
    req: TurnRequest<'_>,
) -> Result<GroundedAnswer> {
    let history: Vec<Turn> = session.turns.iter().cloned().collect();
    let mut warnings = Vec::new();
    let reformulated = req.forced.is_some();
    let final_query = match req.forced {
        Some(q) => q,
        None if req.profile == Profile::Advanced && needs_rewrite(req.query, &history) => {
            match rewrite_query(req.query, &engine.llm, &history) {
                Ok(q) => q,
                Err(e) => {
                    let e = e.at(Stage::Rewrite);
                    log::warn!("{e}; using the original query");
                    warnings.push(format!("{e}; using the original query"));
                    req.query.to_string()
                }
            }
        }
        None => req.query.to_string(),
    };

    let indices = engine.indices(req.profile);
    let cfg = engine.retrieval_config(req.profile);
    let pool = engine.retrieve(&final_query, req.profile).stage(Stage::Retrieve)?;
    let ranked = if req.profile == Profile::Advanced {
        match engine.reranker.rerank_candidates(&final_query, pool, &indices.chunks) {
            Ok(r) => r,
            Err(f) => {
                let e = f.error.at(Stage::Rerank);
                log::warn!("{e}; keeping fused order");
                warnings.push(format!("{e}; keeping fused order"));
                f.fallback
            }
        }
    } else {
        pool
    };
    let top: Vec<ScoredCandidate> = ranked.into_iter().take(cfg.final_k).collect();

    let mut prompt = build_prompt(&final_query, &top, &indices.chunks).stage(Stage::Prompt)?;
    prompt.history = history
        .iter()
        .rev()
        .take(HISTORY_IN_PROMPT)
        .rev()
        .map(|t| HistoryEntry {
            query: t.query.clone(),
            answer: t.answer_text.clone(),
        })
        .collect();
    let mut answer = generate_answer(&prompt, &engine.llm).stage(Stage::Generate)?;

    answer.query = req.query.to_string();
    answer.final_query = final_query;
    answer.reformulated = reformulated && normalize(&answer.final_query) != normalize(req.query);
    answer.profile = req.profile;
    answer.warnings.splice(0..0, warnings);
    answer.sources = top
        .iter()
        .map(|c| Source {
            chunk_id: c.chunk_id.clone(),
            file_name: indices
                .chunks
                .chunk(&c.chunk_id)
                .map(|ch| ch.file_name().to_string())
                .unwrap_or_default(),
            fused: c.fused,
            rerank: c.rerank,
            dense_norm: c.dense_norm,
            sparse_norm: c.sparse_norm,
        })
        .collect();

    let turn_id = session.next_turn_id();
    let turn = Turn {
        turn_id: turn_id.clone(),
        query: answer.query.clone(),
        final_query: answer.final_query.clone(),
        answer_text: answer.answer_text.clone(),
        citations: answer.citations.clone(),
        feedback: None,
        reformulated: answer.reformulated,
        profile: req.profile,
        retry_of: req.retry_of,
        retried: false,
        timestamp_ms: now_ms(),
    };
    sessions.append_turn(session, turn).stage(Stage::Session)?;
    answer.turn_id = Some(turn_id);
    Ok(answer)
}

/// Answer `query` within a session, creating the session if needed. Turns
/// of one session run one at a time.
pub fn answer_query(
    engine: &Engine,
    sessions: &SessionStore,
    session_id: &str,
    query: &str,
    profile: Profile,
) -> Result<GroundedAnswer> {
    let handle = sessions.session(session_id, true).stage(Stage::Session)?;
    let mut session = lock(&handle);
    run_turn(
        engine,
        sessions,
        &mut session,
        TurnRequest {
            query,
            forced: None,
            profile,
            retry_of: None,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackOutcome {
    pub event: FeedbackEvent,
    pub retried: bool,
    /// A `down` verdict arrived after the session's retries were used up.
    pub budget_exhausted: bool,
    pub new_answer: Option<GroundedAnswer>,
}

/// Log a verdict. A `down` verdict, while the session has retry budget
/// left, re-answers the turn once with an expanded query.
pub fn handle_feedback(
    engine: &Engine,
    sessions: &SessionStore,
    session_id: &str,
    turn_id: &str,
    verdict: Verdict,
) -> Result<FeedbackOutcome> {
    let handle = sessions.session(session_id, false).stage(Stage::Session)?;
    let mut session = lock(&handle);
    if !session.knows_turn(turn_id) {
        return Err(Error::UnknownTurn {
            session_id: session_id.to_string(),
            turn_id: turn_id.to_string(),
        }
        .at(Stage::Session));
    }
    let turn = match session.turn(turn_id) {
        Some(t) => t.clone(),
        None => sessions
            .transcript(session_id)
            .stage(Stage::Session)?
            .into_iter()
            .find(|t| t.turn_id == turn_id)
            .ok_or_else(|| {
                Error::UnknownTurn {
                    session_id: session_id.to_string(),
                    turn_id: turn_id.to_string(),
                }
                .at(Stage::Session)
            })?,
    };
    let retry = verdict == Verdict::Down && session.retry_budget_left() > 0;
    let event = FeedbackEvent {
        session_id: session_id.to_string(),
        turn_id: turn_id.to_string(),
        verdict,
        timestamp_ms: now_ms(),
        triggered_retry: retry,
    };
    sessions
        .log_feedback(&mut session, event.clone())
        .stage(Stage::Session)?;
    let mut outcome = FeedbackOutcome {
        event,
        retried: retry,
        budget_exhausted: verdict == Verdict::Down && !retry,
        new_answer: None,
    };
    if !retry {
        return Ok(outcome);
    }

    let original = normalize(&turn.query);
    let mut expansion = expand_query(&turn.final_query, &engine.llm, 1, &engine.lexicon).stage(Stage::Expand)?;
    if normalize(&expansion[0]) == original {
        expansion = expand_query(&turn.final_query, &engine.llm, 3, &engine.lexicon).stage(Stage::Expand)?;
    }
    let expansion = expansion
        .into_iter()
        .find(|q| normalize(q) != original)
        .ok_or_else(|| Error::upstream("llm", "no usable expansion").at(Stage::Expand))?;
    let answer = run_turn(
        engine,
        sessions,
        &mut session,
        TurnRequest {
            query: &turn.query,
            forced: Some(expansion),
            profile: turn.profile,
            retry_of: Some(turn_id.to_string()),
        },
    )?;
    outcome.new_answer = Some(answer);
    Ok(outcome)
}

impl Engine {
    pub fn answer(
        &self,
        sessions: &SessionStore,
        session_id: &str,
        query: &str,
        profile: Profile,
    ) -> Result<GroundedAnswer> {
        answer_query(self, sessions, session_id, query, profile)
    }

    pub fn feedback(
        &self,
        sessions: &SessionStore,
        session_id: &str,
        turn_id: &str,
        verdict: Verdict,
    ) -> Result<FeedbackOutcome> {
        handle_feedback(self, sessions, session_id, turn_id, verdict)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Chunk, ChunkKind};
    use std::collections::HashMap;

    fn turn(q: &str) -> Turn {
        Turn {
            turn_id: "t1".into(),
            query: q.into(),
            final_query: q.into(),
            answer_text: String::new(),
            citations: vec![],
            feedback: None,
            reformulated: false,
            profile: Profile::Advanced,
            retry_of: None,
            retried: false,
            timestamp_ms: 0,
        }
    }

    fn prompt(ids: &[&str]) -> PromptTemplate {
        PromptTemplate {
            system_instructions: SYSTEM_INSTRUCTIONS.into(),
            context_blocks: ids
                .iter()
                .map(|id| ContextBlock {
                    chunk_id: id.to_string(),
                    file_name: "f".into(),
                    text: format!("text of {id}. more"),
                })
                .collect(),
            user_query: "q".into(),
            history: vec![],
        }
    }

    #[test]
    fn mock_rewrite_appends_history_tokens() {
        let h = [turn("what is the annual leave allowance?")];
        assert_eq!(
            rewrite_query("how many days?", &LlmClient::mock(), &h).unwrap(),
            "how many days? annual leave allowance"
        );
        assert_eq!(
            rewrite_query("how many days?", &LlmClient::mock(), &[]).unwrap(),
            "how many days?"
        );
    }

    #[test]
    fn mock_expansion_uses_lexicon() {
        let lex = Lexicon::bundled();
        let out = expand_query("vacation policy", &LlmClient::mock(), 2, &lex).unwrap();
        assert_eq!(out, ["leave policy", "holiday policy"]);
        let one = expand_query("zzz", &LlmClient::mock(), 1, &lex).unwrap();
        assert_eq!(one.len(), 1);
        assert_ne!(one[0], "zzz");
    }

    #[test]
    fn expansion_always_reaches_n_distinct() {
        let lex = Lexicon::default();
        for q in ["", "a", "leave policy", "x y z"] {
            let out = expand_query(q, &LlmClient::mock(), 12, &lex).unwrap();
            assert_eq!(out.len(), 12);
            let set: HashSet<_> = out.iter().map(|s| normalize(s)).collect();
            assert_eq!(set.len(), 12);
            assert!(!set.contains(&normalize(q)));
        }
    }

    #[test]
    fn sentence_splitting() {
        assert_eq!(sentence_count("One. Two! Three? Four"), 4);
        assert_eq!(sentence_count("Version 2.5 is out. Done."), 2);
        assert_eq!(sentence_count("- a. [x]\n- b. [y]"), 2);
        assert_eq!(sentence_count(""), 0);
    }

    #[test]
    fn unknown_citation_dropped() {
        let p = prompt(&["a", "b"]);
        let g = ground_completion(&p, "- fact one [a]\n- fact two [zz]").unwrap();
        assert_eq!(g.citations, ["a"]);
        assert_eq!(g.dropped_citations, ["zz"]);
        assert!(g.citation_warning());
        assert!(!g.answer_text.contains("zz"));
    }

    #[test]
    fn summary_only_past_three_sentences() {
        let p = prompt(&["a"]);
        let short = ground_completion(&p, "It is one. It is two.").unwrap();
        assert!(short.summary.is_none());
        let long = ground_completion(&p, "One [a]. Two. Three. Four.").unwrap();
        assert_eq!(long.summary.as_deref(), Some("Summary: One [a]."));
        let given = ground_completion(&p, "One. Two. Three. Four.\nSummary: all of it").unwrap();
        assert_eq!(given.summary.as_deref(), Some("Summary: all of it"));
        assert!(!given.answer_text.contains("Summary"));
    }

    #[test]
    fn empty_completion_is_error() {
        assert!(matches!(
            ground_completion(&prompt(&[]), "  \n"),
            Err(Error::EmptyCompletion)
        ));
    }

    #[test]
    fn mock_answer_cites_every_block() {
        let g = generate_answer(&prompt(&["a", "b", "c", "d", "e"]), &LlmClient::mock()).unwrap();
        assert_eq!(g.citations, ["a", "b", "c", "d", "e"]);
        assert_eq!(sentence_count(&g.answer_text), 5);
        assert_eq!(g.summary.as_deref(), Some("Summary: text of a."));
        let g = generate_answer(&prompt(&["a", "b"]), &LlmClient::mock()).unwrap();
        assert!(g.summary.is_none());
    }

    #[test]
    fn build_prompt_dedupes_and_checks_ids() {
        let chunk = Chunk {
            chunk_id: "a".into(),
            doc_id: "d".into(),
            kind: ChunkKind::TextChunk,
            text: "alpha".into(),
            char_span: None,
            metadata: Default::default(),
            entities: vec![],
        };
        let store: HashMap<String, Chunk> = [("a".to_string(), chunk)].into_iter().collect();
        let c = |id: &str| ScoredCandidate {
            chunk_id: id.into(),
            dense_raw: None,
            sparse_raw: None,
            dense_norm: 0.0,
            sparse_norm: 0.0,
            fused: 0.0,
            rerank: None,
        };
        let p = build_prompt("q", &[c("a"), c("a")], &store).unwrap();
        assert_eq!(p.context_blocks.len(), 1);
        assert!(matches!(
            build_prompt("q", &[c("b")], &store),
            Err(Error::UnknownChunk(_))
        ));
        let empty = build_prompt("q", &[], &store).unwrap();
        assert!(empty.context_blocks.is_empty());
        assert!(empty.system_instructions.contains("square brackets"));
    }

    fn small_engine() -> Engine {
        let docs = vec![
            crate::Document::from_text(
                "hr/leave.md",
                "Employees receive 24 days of annual leave per year.\n\nUnused leave lapses in March.",
            )
            .unwrap(),
            crate::Document::from_table_csv("hr/grades.csv", "grade,band,allowance\nG1,junior,500\nG2,senior,900\n")
                .unwrap(),
        ];
        let mut c = crate::EngineConfig::default();
        c.embedders
            .insert("small".into(), crate::embed::EmbedderProfile::local("small", 64));
        c.embedder = "small".into();
        Engine::build(&docs, c).unwrap()
    }

    #[test]
    fn feedback_on_evicted_turn_retries() {
        let engine = small_engine();
        let store = SessionStore::in_memory();
        for i in 0..12 {
            engine
                .answer(&store, "s", &format!("annual leave days {i}"), Profile::Advanced)
                .unwrap();
        }
        let out = engine.feedback(&store, "s", "t1", Verdict::Down).unwrap();
        assert!(out.retried);
        assert_eq!(out.new_answer.unwrap().turn_id, Some("t13".to_string()));
    }
}
