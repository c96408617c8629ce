//! Embedding contract for the dense index.
//!
//! [`LocalEmbedder`] is a deterministic feature-hashing embedder used for
//! tests and desk-scale runs. [`RemoteEmbedder`] talks to an
//! embeddings-style HTTP endpoint serving a real sentence encoder.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http;
use crate::sparse::tokenize;

/// A unit-normalised embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// Normalise `values` to unit length. All-zero input maps to `e_0`.
    pub fn normalized(values: Vec<f32>) -> Self {
        let norm = values.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Self::basis(values.len().max(1), 0);
        }
        Self(values.into_iter().map(|v| (v as f64 / norm) as f32).collect())
    }

    /// Wrap values that are already unit length.
    pub fn from_unit(values: Vec<f32>) -> Self {
        Self(values)
    }

    pub fn basis(dims: usize, axis: usize) -> Self {
        let mut v = vec![0.0; dims];
        v[axis] = 1.0;
        Self(v)
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        dot(&self.0, &other.0)
    }
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderProfile {
    pub name: String,
    pub dims: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
}

const DEFAULT_EMBED_ENDPOINT: &str = "http://127.0.0.1:8000/v1/embeddings";

impl EmbedderProfile {
    pub fn high_precision() -> Self {
        Self {
            name: "high_precision".into(),
            dims: 768,
            endpoint: Some(DEFAULT_EMBED_ENDPOINT.into()),
            model_id: Some("all-mpnet-base-v2".into()),
        }
    }

    pub fn lightweight() -> Self {
        Self {
            name: "lightweight".into(),
            dims: 384,
            endpoint: Some(DEFAULT_EMBED_ENDPOINT.into()),
            model_id: Some("paraphrase-MiniLM-L3-v2".into()),
        }
    }

    pub fn local_test() -> Self {
        Self::local("local_test", 1024)
    }

    pub fn local(name: &str, dims: usize) -> Self {
        Self {
            name: name.into(),
            dims,
            endpoint: None,
            model_id: None,
        }
    }

    pub fn is_remote(&self) -> bool {
        self.endpoint.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims == 0 {
            return Err(Error::InvalidConfig(format!(
                "embedder {}: dims must be > 0",
                self.name
            )));
        }
        if !self.is_remote() && self.dims < MIN_LOCAL_DIMS {
            return Err(Error::InvalidConfig(format!(
                "embedder {}: local embedder needs dims >= {MIN_LOCAL_DIMS}",
                self.name
            )));
        }
        Ok(())
    }
}

pub trait Embedder: Send + Sync {
    fn dims(&self) -> usize;

    /// One unit vector per input, in input order.
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector> {
        let mut out = self.embed(&[text.to_string()])?;
        out.pop()
            .ok_or_else(|| Error::upstream("embedder", "no vector returned"))
    }
}

pub const MIN_LOCAL_DIMS: usize = 8;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Signed feature hashing over tokens and their character trigrams.
pub fn local_embed(text: &str, dims: usize) -> EmbeddingVector {
    assert!(dims >= MIN_LOCAL_DIMS, "local_embed needs dims >= {MIN_LOCAL_DIMS}");
    let mut acc = vec![0.0f32; dims];
    let mut add = |feature: &str| {
        let h = fnv1a64(feature.as_bytes());
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        acc[(h % dims as u64) as usize] += sign;
    };
    for token in tokenize(text) {
        add(&token);
        let chars: Vec<char> = token.chars().collect();
        for tri in chars.windows(3) {
            add(&tri.iter().collect::<String>());
        }
    }
    EmbeddingVector::normalized(acc)
}

#[derive(Debug, Clone)]
pub struct LocalEmbedder {
    dims: usize,
}

impl LocalEmbedder {
    pub fn new(dims: usize) -> Result<Self> {
        if dims < MIN_LOCAL_DIMS {
            return Err(Error::InvalidConfig(format!(
                "local embedder needs dims >= {MIN_LOCAL_DIMS}"
            )));
        }
        Ok(Self { dims })
    }
}

impl Embedder for LocalEmbedder {
    fn dims(&self) -> usize {
        self.dims
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts.iter().map(|t| local_embed(t, self.dims)).collect())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f32>,
}

/// Client for a `POST {"model", "input"} -> {"data": [{"embedding"}]}` endpoint.
pub struct RemoteEmbedder {
    profile: EmbedderProfile,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    pub const BATCH: usize = 64;

    pub fn new(profile: EmbedderProfile) -> Result<Self> {
        profile.validate()?;
        if profile.endpoint.is_none() {
            return Err(Error::InvalidConfig(format!(
                "embedder {} has no endpoint",
                profile.name
            )));
        }
        Ok(Self {
            profile,
            agent: http::agent(Duration::from_secs(60)),
        })
    }
}

impl Embedder for RemoteEmbedder {
    fn dims(&self) -> usize {
        self.profile.dims
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let url = self.profile.endpoint.as_deref().expect("checked in new");
        let model = self.profile.model_id.as_deref().unwrap_or(&self.profile.name);
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(Self::BATCH) {
            let resp: EmbedResponse = http::post_json(
                &self.agent,
                url,
                &EmbedRequest { model, input: batch },
                "embedding endpoint",
            )?;
            if resp.data.len() != batch.len() {
                return Err(Error::upstream(
                    "embedding endpoint",
                    format!("expected {} vectors, got {}", batch.len(), resp.data.len()),
                ));
            }
            let mut vectors = Vec::with_capacity(batch.len());
            for datum in resp.data {
                if datum.embedding.len() != self.profile.dims {
                    return Err(Error::DimensionMismatch {
                        expected: self.profile.dims,
                        got: datum.embedding.len(),
                    });
                }
                vectors.push(EmbeddingVector::normalized(datum.embedding));
            }
            out.extend(vectors);
        }
        Ok(out)
    }
}

pub fn embedder_for(profile: &EmbedderProfile) -> Result<Box<dyn Embedder>> {
    profile.validate()?;
    if profile.is_remote() {
        Ok(Box::new(RemoteEmbedder::new(profile.clone())?))
    } else {
        Ok(Box::new(LocalEmbedder::new(profile.dims)?))
    }
}

pub fn embed_texts(texts: &[String], profile: &EmbedderProfile) -> Result<Vec<EmbeddingVector>> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    embedder_for(profile)?.embed(texts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text_is_first_basis_vector() {
        assert_eq!(local_embed("", 8).values(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(local_embed("  \t ", 8), EmbeddingVector::basis(8, 0));
    }

    #[test]
    fn repetition_does_not_change_direction() {
        let a = local_embed("salary salary", 8);
        let b = local_embed("salary", 8);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn word_order_is_irrelevant() {
        let a = local_embed("annual leave policy", 1024);
        let b = local_embed("leave policy annual", 1024);
        assert!((a.dot(&b) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn local_profile_is_deterministic() {
        let profile = EmbedderProfile::local("t", 8);
        let a = embed_texts(&["hello".into()], &profile).unwrap();
        let b = embed_texts(&["hello".into()], &profile).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].dims(), 8);
        assert!((a[0].norm() - 1.0).abs() < 1e-6);
        let pair = embed_texts(&["a".into(), "a".into()], &profile).unwrap();
        assert_eq!(pair[0], pair[1]);
    }

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 64-bit test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn dead_endpoint_is_unavailable() {
        let profile = EmbedderProfile {
            name: "dead".into(),
            dims: 8,
            endpoint: Some("http://127.0.0.1:9/v1/embeddings".into()),
            model_id: None,
        };
        let err = embed_texts(&["x".into()], &profile).unwrap_err();
        assert!(matches!(err, Error::Upstream { .. }), "{err:?}");
    }

    #[test]
    fn profile_validation() {
        assert!(EmbedderProfile::local("x", 4).validate().is_err());
        assert!(EmbedderProfile::high_precision().is_remote());
        assert_eq!(EmbedderProfile::lightweight().dims, 384);
        assert_eq!(EmbedderProfile::local_test().dims, 1024);
    }

    fn bucket(feature: &str, dims: usize) -> usize {
        (fnv1a64(feature.as_bytes()) % dims as u64) as usize
    }

    fn features(token: &str) -> Vec<String> {
        let chars: Vec<char> = token.chars().collect();
        std::iter::once(token.to_string())
            .chain(chars.windows(3).map(|w| w.iter().collect()))
            .collect()
    }

    proptest! {
        #[test]
        fn outputs_are_unit_norm(text in ".{0,200}", dims in 8usize..300) {
            let v = local_embed(&text, dims);
            prop_assert!((v.norm() - 1.0).abs() < 1e-6);
        }

        // Adding a shared token to B cannot lower cos(A, B) when no
        // features collide across the vocabulary.
        #[test]
        fn shared_token_monotonicity(
            a_words in proptest::collection::btree_set("[a-m]{3,7}", 1..5),
            b_words in proptest::collection::btree_set("[n-z]{3,7}", 1..5),
        ) {
            let dims = 4096;
            let all: Vec<&String> = a_words.iter().chain(b_words.iter()).collect();
            let mut buckets = std::collections::HashMap::new();
            let mut collision = false;
            for w in &all {
                for f in features(w) {
                    if let Some(prev) = buckets.insert(bucket(&f, dims), f.clone()) {
                        collision |= prev != f;
                    }
                }
            }
            prop_assume!(!collision);
            let a_text = a_words.iter().cloned().collect::<Vec<_>>().join(" ");
            let b_text = b_words.iter().cloned().collect::<Vec<_>>().join(" ");
            let shared = a_words.iter().next().unwrap();
            let a = local_embed(&a_text, dims);
            let before = a.dot(&local_embed(&b_text, dims));
            let after = a.dot(&local_embed(&format!("{b_text} {shared}"), dims));
            prop_assert!(after >= before - 1e-9, "{} < {}", after, before);
        }
    }
}
