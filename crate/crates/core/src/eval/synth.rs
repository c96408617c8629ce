//! Seeded synthetic corpora with planted relevance judgments.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Qrels;
use crate::error::Result;
use crate::ingest::Document;

pub const TABLES: usize = 20;
pub const ROWS_PER_TABLE: usize = 50;
pub const TABLE_QUERIES: usize = 100;
const COLUMNS: usize = 5;

pub const TEXT_DOCS: usize = 200;
pub const TEXT_QUERIES: usize = 50;
const SENTENCES_PER_DOC: usize = 12;
const WORDS_PER_SENTENCE: usize = 10;
const RELEVANT_PER_QUERY: usize = 2;

/// Files of a generated corpus plus its judgments.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    /// (relative path, content)
    pub files: Vec<(String, String)>,
    pub qrels: Qrels,
}

impl SyntheticCorpus {
    pub fn documents(&self) -> Result<Vec<Document>> {
        self.files
            .iter()
            .map(|(path, content)| Document::from_named(path, content))
            .collect()
    }

    /// Write the corpus under `dir/corpus` and the judgments to `dir/qrels.tsv`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for (rel, content) in &self.files {
            let path = dir.join("corpus").join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, content)?;
        }
        fs::write(dir.join("qrels.tsv"), self.qrels.to_tsv())?;
        Ok(())
    }
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Pronounceable nonce words, never repeated within one generator.
struct Nonce {
    used: HashSet<String>,
}

impl Nonce {
    fn new() -> Self {
        Self { used: HashSet::new() }
    }

    fn word(&mut self, rng: &mut ChaCha8Rng, syllables: usize) -> String {
        loop {
            let mut w = String::with_capacity(syllables * 2);
            for _ in 0..syllables {
                w.push(*CONSONANTS.choose(rng).expect("non-empty") as char);
                w.push(*VOWELS.choose(rng).expect("non-empty") as char);
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

const HEADER_POOL: &[&str] = &[
    "owner",
    "region",
    "status",
    "category",
    "vendor",
    "grade",
    "project",
    "site",
    "approver",
    "currency",
    "tier",
    "channel",
    "segment",
    "shift",
    "supervisor",
];

/// Twenty tables of fifty rows. Every cell value is a distinct nonce word
/// and the first column is the row key. Each query asks for one cell by
/// header and key; its single relevant id is that row's chunk.
pub fn table_benchmark(seed: u64) -> Result<SyntheticCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nonce = Nonce::new();
    let mut files = Vec::with_capacity(TABLES);
    // (doc path, table id, headers, rows)
    let mut tables = Vec::with_capacity(TABLES);
    for t in 0..TABLES {
        let table_id = format!("table_{t:02}");
        let path = format!("tables/{table_id}.csv");
        let mut headers = vec!["id".to_string()];
        headers.extend(HEADER_POOL.choose_multiple(&mut rng, COLUMNS).map(|h| h.to_string()));
        let rows: Vec<Vec<String>> = (0..ROWS_PER_TABLE)
            .map(|_| (0..headers.len()).map(|_| nonce.word(&mut rng, 3)).collect())
            .collect();
        let mut csv = headers.join(",");
        for r in &rows {
            csv.push('\n');
            csv.push_str(&r.join(","));
        }
        csv.push('\n');
        files.push((path.clone(), csv));
        tables.push((path, table_id, headers, rows));
    }

    let mut picked = HashSet::new();
    let mut triples = Vec::with_capacity(TABLE_QUERIES);
    while triples.len() < TABLE_QUERIES {
        let t = rng.random_range(0..TABLES);
        let r = rng.random_range(0..ROWS_PER_TABLE);
        let c = rng.random_range(1..=COLUMNS);
        if !picked.insert((t, r)) {
            continue;
        }
        let (path, table_id, headers, rows) = &tables[t];
        triples.push((
            format!("tq{:03}", triples.len() + 1),
            format!("value of {} for {}", headers[c], rows[r][0]),
            format!("{path}#{table_id}/r{r}"),
        ));
    }
    let qrels = Qrels::from_pairs(triples.iter().map(|(a, b, c)| (a.as_str(), b.as_str(), c.as_str())))?;
    Ok(SyntheticCorpus { files, qrels })
}

const TOPICS: &[&[&str]] = &[
    &[
        "leave", "annual", "vacation", "balance", "carry", "approval", "holiday", "days",
    ],
    &[
        "salary",
        "payroll",
        "deduction",
        "payslip",
        "arrears",
        "monthly",
        "credit",
        "bank",
    ],
    &[
        "travel",
        "flight",
        "hotel",
        "booking",
        "itinerary",
        "airport",
        "mileage",
        "visa",
    ],
    &[
        "expense",
        "receipt",
        "claim",
        "reimbursement",
        "audit",
        "limit",
        "invoice",
        "submission",
    ],
    &[
        "laptop",
        "hardware",
        "asset",
        "repair",
        "warranty",
        "device",
        "return",
        "inventory",
    ],
    &[
        "security", "password", "access", "badge", "incident", "phishing", "vpn", "breach",
    ],
    &[
        "training",
        "course",
        "certification",
        "mentor",
        "workshop",
        "learning",
        "module",
        "skill",
    ],
    &[
        "appraisal",
        "rating",
        "goals",
        "review",
        "feedback",
        "promotion",
        "cycle",
        "calibration",
    ],
    &[
        "insurance",
        "medical",
        "hospital",
        "dependent",
        "premium",
        "cashless",
        "policyholder",
        "coverage",
    ],
    &[
        "recruitment",
        "candidate",
        "interview",
        "offer",
        "referral",
        "onboarding",
        "joining",
        "background",
    ],
    &[
        "remote",
        "hybrid",
        "office",
        "attendance",
        "roster",
        "commute",
        "desk",
        "schedule",
    ],
    &[
        "procurement",
        "vendor",
        "purchase",
        "quotation",
        "tender",
        "contract",
        "supplier",
        "order",
    ],
    &[
        "resignation",
        "notice",
        "exit",
        "clearance",
        "settlement",
        "relieving",
        "handover",
        "separation",
    ],
    &[
        "maternity",
        "paternity",
        "parental",
        "childcare",
        "adoption",
        "creche",
        "newborn",
        "family",
    ],
    &[
        "overtime",
        "shift",
        "hours",
        "weekend",
        "compensatory",
        "night",
        "allowance",
        "timesheet",
    ],
    &[
        "harassment",
        "complaint",
        "committee",
        "inquiry",
        "conduct",
        "grievance",
        "confidential",
        "redressal",
    ],
    &[
        "gratuity",
        "provident",
        "fund",
        "pension",
        "retirement",
        "nomination",
        "withdrawal",
        "contribution",
    ],
    &[
        "canteen",
        "meal",
        "cafeteria",
        "coupon",
        "nutrition",
        "vending",
        "kitchen",
        "snacks",
    ],
    &[
        "transport",
        "shuttle",
        "cab",
        "route",
        "pickup",
        "driver",
        "parking",
        "fuel",
    ],
    &[
        "data",
        "privacy",
        "retention",
        "consent",
        "records",
        "classification",
        "archive",
        "disposal",
    ],
];

const FILLER: &[&str] = &[
    "the",
    "a",
    "all",
    "employees",
    "should",
    "note",
    "that",
    "this",
    "process",
    "is",
    "managed",
    "by",
    "team",
    "under",
    "current",
    "guidance",
    "and",
    "each",
    "request",
    "must",
    "be",
    "recorded",
    "in",
    "system",
    "within",
    "time",
    "as",
    "per",
    "standard",
    "practice",
    "for",
    "every",
    "unit",
    "department",
    "staff",
    "members",
    "are",
    "expected",
    "to",
    "follow",
    "steps",
    "described",
    "here",
    "with",
    "care",
    "where",
    "needed",
    "further",
    "details",
    "may",
    "shared",
    "on",
    "portal",
    "any",
    "questions",
    "can",
    "raised",
    "through",
    "helpdesk",
    "manager",
    "will",
    "confirm",
    "outcome",
    "after",
    "checking",
    "relevant",
    "information",
    "some",
    "cases",
    "require",
    "additional",
    "documents",
    "from",
    "applicant",
    "rules",
    "apply",
    "equally",
    "across",
    "locations",
    "exceptions",
    "need",
    "written",
    "sign",
    "off",
    "updates",
    "published",
    "periodically",
    "so",
    "please",
    "review",
    "latest",
    "version",
    "before",
    "acting",
    "general",
    "principles",
    "remain",
    "unchanged",
    "year",
];

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn sentence(rng: &mut ChaCha8Rng, topic: &[&str]) -> String {
    let words: Vec<&str> = (0..WORDS_PER_SENTENCE)
        .map(|_| {
            let pool = if rng.random_bool(0.3) { topic } else { FILLER };
            *pool.choose(rng).expect("non-empty")
        })
        .collect();
    format!("{}.", capitalize(&words.join(" ")))
}

fn render(sentences: &[String]) -> String {
    sentences
        .chunks(4)
        .map(|p| p.join(" "))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Two hundred policy-style documents over twenty topics. Each query names
/// three topic words and a nonce code; the code is planted, with the same
/// topic words, in two documents of that topic, which are its relevant ids.
pub fn text_benchmark(seed: u64) -> Result<SyntheticCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nonce = Nonce::new();
    let mut docs: Vec<Vec<String>> = (0..TEXT_DOCS)
        .map(|i| {
            let topic = TOPICS[i % TOPICS.len()];
            (0..SENTENCES_PER_DOC).map(|_| sentence(&mut rng, topic)).collect()
        })
        .collect();
    let doc_path = |i: usize| format!("docs/doc_{i:03}.txt");

    let mut triples = Vec::new();
    let mut planted_slots: HashSet<(usize, usize)> = HashSet::new();
    for q in 0..TEXT_QUERIES {
        let t = q % TOPICS.len();
        let words: Vec<&str> = TOPICS[t].choose_multiple(&mut rng, 3).copied().collect();
        let code = nonce.word(&mut rng, 4);
        let mut members: Vec<usize> = (0..TEXT_DOCS).filter(|i| i % TOPICS.len() == t).collect();
        members.shuffle(&mut rng);
        let qid = format!("dq{:03}", q + 1);
        let text = format!("{} {} {} {code}", words[0], words[1], words[2]);
        for &d in members.iter().take(RELEVANT_PER_QUERY) {
            let slot = loop {
                let s = rng.random_range(0..SENTENCES_PER_DOC);
                if planted_slots.insert((d, s)) {
                    break s;
                }
            };
            docs[d][slot] = format!(
                "The {code} {} {} {} arrangement applies to this unit.",
                words[0], words[1], words[2]
            );
            triples.push((qid.clone(), text.clone(), doc_path(d)));
        }
    }

    let files = docs.iter().enumerate().map(|(i, s)| (doc_path(i), render(s))).collect();
    let qrels = Qrels::from_pairs(triples.iter().map(|(a, b, c)| (a.as_str(), b.as_str(), c.as_str())))?;
    Ok(SyntheticCorpus { files, qrels })
}
