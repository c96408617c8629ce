use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::error::{Error, Result};

use super::Qrels;

fn hits_in_top_k(ranked: &[String], relevant: &BTreeSet<String>, k: usize) -> usize {
    let mut seen = HashSet::new();
    ranked
        .iter()
        .take(k)
        .filter(|id| relevant.contains(*id) && seen.insert(id.as_str()))
        .count()
}

/// Relevant items among the first `k`, over `k` (even when fewer are ranked).
pub fn precision_at_k(ranked: &[String], relevant: &BTreeSet<String>, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    Ok(hits_in_top_k(ranked, relevant, k) as f64 / k as f64)
}

/// Share of the relevant set found among the first `k`.
pub fn recall_at_k(ranked: &[String], relevant: &BTreeSet<String>, k: usize) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::EmptyRelevant);
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    Ok(hits_in_top_k(ranked, relevant, k) as f64 / relevant.len() as f64)
}

/// `1 / rank` of the first relevant item, 0 when none is ranked.
pub fn reciprocal_rank(ranked: &[String], relevant: &BTreeSet<String>) -> f64 {
    ranked
        .iter()
        .position(|id| relevant.contains(id))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// Mean reciprocal rank over every ranked query.
pub fn mrr(per_query: &BTreeMap<String, Vec<String>>, qrels: &Qrels) -> Result<f64> {
    if per_query.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (qid, ranked) in per_query {
        let relevant = qrels.relevant(qid).ok_or_else(|| Error::MissingQrels(qid.clone()))?;
        total += reciprocal_rank(ranked, relevant);
    }
    Ok(total / per_query.len() as f64)
}
