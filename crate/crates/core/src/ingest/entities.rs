use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::Chunk;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EntityLabel {
    Date,
    Location,
    Org,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Entity {
    pub label: EntityLabel,
    pub surface: String,
}

impl Entity {
    pub fn new(label: EntityLabel, surface: impl Into<String>) -> Self {
        Self {
            label,
            surface: surface.into(),
        }
    }

    /// Identity used for deduplication and overlap tests.
    pub fn key(&self) -> (EntityLabel, String) {
        (self.label, self.surface.to_lowercase())
    }
}

#[derive(Debug, Default, Deserialize)]
struct GazetteerFile {
    #[serde(default, rename = "ORG")]
    org: Vec<String>,
    #[serde(default, rename = "LOCATION")]
    location: Vec<String>,
}

struct Entry {
    label: EntityLabel,
    chars: Vec<char>,
}

/// Case-insensitive lexicon of organisation and location names.
#[derive(Default)]
pub struct Gazetteer {
    // longest entries first within each bucket
    by_first_char: HashMap<char, Vec<Entry>>,
}

impl std::fmt::Debug for Gazetteer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let n: usize = self.by_first_char.values().map(Vec::len).sum();
        f.debug_struct("Gazetteer").field("entries", &n).finish()
    }
}

pub const BUNDLED_GAZETTEER: &str = include_str!("../../data/gazetteer.json");

fn fold(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

impl Gazetteer {
    pub fn from_lists<S: AsRef<str>>(orgs: &[S], locations: &[S]) -> Self {
        let mut gaz = Self::default();
        let labelled = orgs
            .iter()
            .map(|s| (EntityLabel::Org, s.as_ref()))
            .chain(locations.iter().map(|s| (EntityLabel::Location, s.as_ref())));
        for (label, name) in labelled {
            let chars: Vec<char> = name.trim().chars().map(fold).collect();
            if let Some(&first) = chars.first() {
                gaz.by_first_char.entry(first).or_default().push(Entry { label, chars });
            }
        }
        for bucket in gaz.by_first_char.values_mut() {
            bucket.sort_by(|a, b| b.chars.len().cmp(&a.chars.len()).then(a.chars.cmp(&b.chars)));
        }
        gaz
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let file: GazetteerFile = serde_json::from_str(raw)?;
        Ok(Self::from_lists(&file.org, &file.location))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|source| Error::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&raw)
    }

    /// The small lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_GAZETTEER).expect("bundled gazetteer is valid JSON")
    }

    /// Longest gazetteer match starting at `chars[i]`, as (label, length).
    fn longest_at(&self, chars: &[char], i: usize) -> Option<(EntityLabel, usize)> {
        let bucket = self.by_first_char.get(&fold(chars[i]))?;
        bucket.iter().find_map(|entry| {
            let end = i + entry.chars.len();
            if end > chars.len() {
                return None;
            }
            let matches = chars[i..end].iter().zip(&entry.chars).all(|(a, b)| fold(*a) == *b);
            let bounded = chars.get(end).is_none_or(|c| !c.is_alphanumeric());
            (matches && bounded).then_some((entry.label, entry.chars.len()))
        })
    }
}

static DATE_PATTERNS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(concat!(
        r"\b\d{4}-\d{2}-\d{2}\b",
        r"|\b\d{2}/\d{2}/\d{4}\b",
        r"|\b(?i:January|February|March|April|May|June|July|August|September|October|November|December) \d{1,2}, \d{4}\b",
    ))
    .expect("date regex")
});

/// Entities in `text`, in order of first appearance, deduplicated by
/// label and lowercased surface.
pub fn find_entities(text: &str, gazetteer: &Gazetteer) -> Vec<Entity> {
    let mut found: Vec<(usize, Entity)> = DATE_PATTERNS
        .find_iter(text)
        .map(|m| (m.start(), Entity::new(EntityLabel::Date, m.as_str())))
        .collect();

    let indexed: Vec<(usize, char)> = text.char_indices().collect();
    let chars: Vec<char> = indexed.iter().map(|&(_, c)| c).collect();
    let mut i = 0;
    while i < chars.len() {
        let at_boundary = i == 0 || !chars[i - 1].is_alphanumeric();
        if at_boundary {
            if let Some((label, len)) = gazetteer.longest_at(&chars, i) {
                let start = indexed[i].0;
                let end = indexed.get(i + len).map_or(text.len(), |&(b, _)| b);
                found.push((start, Entity::new(label, &text[start..end])));
                i += len;
                continue;
            }
        }
        i += 1;
    }

    found.sort_by_key(|(start, _)| *start);
    let mut seen = HashSet::new();
    found
        .into_iter()
        .filter_map(|(_, e)| seen.insert(e.key()).then_some(e))
        .collect()
}

pub fn tag_entities(mut chunk: Chunk, gazetteer: &Gazetteer) -> Chunk {
    chunk.entities = find_entities(&chunk.text, gazetteer);
    chunk
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaz() -> Gazetteer {
        Gazetteer::from_lists(
            &["NASSCOM", "Tata Consultancy Services", "Tata"],
            &["New Delhi", "Delhi"],
        )
    }

    #[test]
    fn dates_and_orgs_in_order() {
        let got = find_entities("Submit by 2024-03-15 to NASSCOM", &gaz());
        assert_eq!(
            got,
            vec![
                Entity::new(EntityLabel::Date, "2024-03-15"),
                Entity::new(EntityLabel::Org, "NASSCOM")
            ]
        );
    }

    #[test]
    fn nothing_to_find() {
        assert!(find_entities("no entities here", &gaz()).is_empty());
    }

    #[test]
    fn case_variants_dedupe() {
        let got = find_entities("NASSCOM and nasscom", &gaz());
        assert_eq!(got, vec![Entity::new(EntityLabel::Org, "NASSCOM")]);
    }

    #[test]
    fn all_date_forms() {
        let got = find_entities("On 01/04/2023, March 5, 2024 and 2022-12-31.", &gaz());
        let surfaces: Vec<_> = got.iter().map(|e| e.surface.as_str()).collect();
        assert_eq!(surfaces, vec!["01/04/2023", "March 5, 2024", "2022-12-31"]);
    }

    #[test]
    fn longest_match_wins_and_respects_word_boundaries() {
        let got = find_entities(
            "Offices of Tata Consultancy Services in New Delhi; Delhiite staff",
            &gaz(),
        );
        assert_eq!(
            got,
            vec![
                Entity::new(EntityLabel::Org, "Tata Consultancy Services"),
                Entity::new(EntityLabel::Location, "New Delhi"),
            ]
        );
    }

    #[test]
    fn tagging_is_deterministic() {
        let chunk = Chunk {
            chunk_id: "c".into(),
            doc_id: "d".into(),
            kind: super::super::ChunkKind::TextChunk,
            text: "Tata in Delhi on 2024-01-01".into(),
            char_span: Some((0, 27)),
            metadata: Default::default(),
            entities: vec![],
        };
        let a = tag_entities(chunk.clone(), &gaz());
        let b = tag_entities(chunk, &gaz());
        assert_eq!(a.entities, b.entities);
        assert_eq!(a.entities.len(), 3);
    }

    #[test]
    fn bundled_gazetteer_loads() {
        let g = Gazetteer::bundled();
        assert!(!find_entities("Policy issued by NASSCOM in Bengaluru", &g).is_empty());
    }
}
