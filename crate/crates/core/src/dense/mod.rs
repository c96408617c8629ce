//! HNSW approximate nearest-neighbour index over unit vectors.
//!
//! Similarity is the inner product, which equals cosine for the normalised
//! vectors the embedders produce. Stored vectors can optionally be kept as
//! 8-bit scalar codes; scores are then computed against the dequantised
//! values.

mod persist;
mod quantize;

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use persist::DENSE_FORMAT_VERSION;
pub use quantize::{QuantizationSpec, CALIBRATION_SIZE};

use crate::embed::{dot, EmbeddingVector};
use crate::error::{Error, Result};

const MAX_LEVEL: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HnswParams {
    /// Max neighbours per node on levels above 0; level 0 allows `2 * m`.
    #[serde(rename = "M")]
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub level_multiplier: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    0x5eed_1234
}

impl Default for HnswParams {
    fn default() -> Self {
        Self::with_m(32, 200, 50)
    }
}

impl HnswParams {
    pub fn with_m(m: usize, ef_construction: usize, ef_search: usize) -> Self {
        Self {
            m,
            ef_construction,
            ef_search,
            level_multiplier: 1.0 / (m as f64).ln(),
            seed: default_seed(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidConfig("dense.M must be >= 2".into()));
        }
        if self.ef_construction < self.m {
            return Err(Error::InvalidConfig("dense.ef_construction must be >= M".into()));
        }
        if self.ef_search < 1 {
            return Err(Error::InvalidConfig("dense.ef_search must be >= 1".into()));
        }
        if !(self.level_multiplier.is_finite() && self.level_multiplier > 0.0) {
            return Err(Error::InvalidConfig("dense.level_multiplier must be positive".into()));
        }
        Ok(())
    }

    fn cap(&self, level: usize) -> usize {
        if level == 0 {
            2 * self.m
        } else {
            self.m
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Full(Vec<f32>),
    Quantized(Vec<u8>),
}

/// (score, node) ordered by score, then by lower node id.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored(f64, u32);

impl Eq for Scored {}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A query prepared against the index storage.
enum Prepared<'a> {
    Full(&'a [f32]),
    Quantized { offset: f64, weights: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct HnswIndex {
    params: HnswParams,
    dims: usize,
    ids: Vec<String>,
    lookup: HashMap<String, u32>,
    /// node -> level -> neighbours
    links: Vec<Vec<Vec<u32>>>,
    /// incoming level-0 edge counts
    in_degree: Vec<u32>,
    entry: Option<u32>,
    max_level: usize,
    storage: Storage,
    quant: QuantizationSpec,
    frozen: bool,
    rng: ChaCha8Rng,
}

impl HnswIndex {
    pub fn new(dims: usize, params: HnswParams, quantized: bool) -> Result<Self> {
        params.validate()?;
        if dims == 0 {
            return Err(Error::InvalidConfig("dense index needs dims > 0".into()));
        }
        Ok(Self {
            params,
            dims,
            ids: Vec::new(),
            lookup: HashMap::new(),
            links: Vec::new(),
            in_degree: Vec::new(),
            entry: None,
            max_level: 0,
            storage: Storage::Full(Vec::new()),
            quant: if quantized {
                QuantizationSpec::pending()
            } else {
                QuantizationSpec::disabled()
            },
            frozen: false,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
        })
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn quantization(&self) -> &QuantizationSpec {
        &self.quant
    }

    pub fn contains(&self, chunk_id: &str) -> bool {
        self.lookup.contains_key(chunk_id)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn entry_point(&self) -> Option<&str> {
        self.entry.map(|e| self.ids[e as usize].as_str())
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    /// Neighbours of `chunk_id` on `level`, if the node exists there.
    pub fn neighbors(&self, chunk_id: &str, level: usize) -> Option<Vec<&str>> {
        let node = *self.lookup.get(chunk_id)?;
        let list = self.links[node as usize].get(level)?;
        Some(list.iter().map(|&n| self.ids[n as usize].as_str()).collect())
    }

    pub fn node_level(&self, chunk_id: &str) -> Option<usize> {
        self.lookup.get(chunk_id).map(|&n| self.links[n as usize].len() - 1)
    }

    fn random_level(&mut self) -> usize {
        let u: f64 = self.rng.random::<f64>().max(f64::MIN_POSITIVE);
        ((-u.ln() * self.params.level_multiplier).floor() as usize).min(MAX_LEVEL)
    }

    /// Stored vector of `node`, dequantised if needed.
    fn vector(&self, node: u32) -> Vec<f32> {
        let range = node as usize * self.dims..(node as usize + 1) * self.dims;
        match &self.storage {
            Storage::Full(v) => v[range].to_vec(),
            Storage::Quantized(c) => self.quant.dequantize(&c[range]),
        }
    }

    /// Stored (possibly dequantised) vector for a chunk.
    pub fn stored_vector(&self, chunk_id: &str) -> Option<Vec<f32>> {
        self.lookup.get(chunk_id).map(|&n| self.vector(n))
    }

    fn prepare<'a>(&self, query: &'a [f32]) -> Prepared<'a> {
        match &self.storage {
            Storage::Full(_) => Prepared::Full(query),
            Storage::Quantized(_) => Prepared::Quantized {
                offset: dot(&self.quant.mins, query),
                weights: query
                    .iter()
                    .zip(&self.quant.scales)
                    .map(|(&q, &s)| q as f64 * s as f64)
                    .collect(),
            },
        }
    }

    fn score(&self, prepared: &Prepared<'_>, node: u32) -> f64 {
        let range = node as usize * self.dims..(node as usize + 1) * self.dims;
        match (prepared, &self.storage) {
            (Prepared::Full(q), Storage::Full(v)) => dot(q, &v[range]),
            (Prepared::Quantized { offset, weights }, Storage::Quantized(c)) => {
                offset + c[range].iter().zip(weights).map(|(&c, &w)| c as f64 * w).sum::<f64>()
            }
            _ => unreachable!("query prepared against different storage"),
        }
    }

    fn search_layer(&self, prepared: &Prepared<'_>, entries: &[Scored], ef: usize, level: usize) -> Vec<Scored> {
        let mut visited: HashSet<u32> = entries.iter().map(|s| s.1).collect();
        let mut candidates: BinaryHeap<Scored> = entries.iter().copied().collect();
        let mut results: BinaryHeap<Reverse<Scored>> = entries.iter().copied().map(Reverse).collect();
        while results.len() > ef {
            results.pop();
        }
        while let Some(current) = candidates.pop() {
            let worst = results.peek().map(|r| r.0).expect("results never empty");
            if current < worst && results.len() >= ef {
                break;
            }
            let Some(neighbors) = self.links[current.1 as usize].get(level) else {
                continue;
            };
            for &n in neighbors {
                if !visited.insert(n) {
                    continue;
                }
                let cand = Scored(self.score(prepared, n), n);
                let worst = results.peek().map(|r| r.0).expect("results never empty");
                if results.len() < ef || cand > worst {
                    candidates.push(cand);
                    results.push(Reverse(cand));
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        let mut out: Vec<Scored> = results.into_iter().map(|r| r.0).collect();
        out.sort_by(|a, b| b.cmp(a));
        out
    }

    /// Greedy descent from the entry point down to (but excluding) `stop_level`.
    fn descend(&self, prepared: &Prepared<'_>, stop_level: usize) -> Vec<Scored> {
        let entry = self.entry.expect("non-empty index");
        let mut eps = vec![Scored(self.score(prepared, entry), entry)];
        for level in (stop_level + 1..=self.max_level).rev() {
            eps = self.search_layer(prepared, &eps, 1, level);
        }
        eps
    }

    pub fn insert(&mut self, chunk_id: &str, vec: &EmbeddingVector) -> Result<()> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        if vec.dims() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                got: vec.dims(),
            });
        }
        if self.lookup.contains_key(chunk_id) {
            return Err(Error::DuplicateId(chunk_id.to_string()));
        }
        let node = self.ids.len() as u32;
        let level = self.random_level();
        self.ids.push(chunk_id.to_string());
        self.lookup.insert(chunk_id.to_string(), node);
        self.links.push(vec![Vec::new(); level + 1]);
        self.in_degree.push(0);
        match &mut self.storage {
            Storage::Full(v) => v.extend_from_slice(vec.values()),
            Storage::Quantized(c) => c.extend(self.quant.quantize(vec.values())),
        }

        if self.entry.is_some() {
            let query = vec.values();
            let prepared = self.prepare(query);
            let mut eps = self.descend(&prepared, level);
            for l in (0..=level.min(self.max_level)).rev() {
                let candidates = self.search_layer(&prepared, &eps, self.params.ef_construction, l);
                let chosen: Vec<u32> = candidates
                    .iter()
                    .filter(|s| s.1 != node)
                    .take(self.params.m)
                    .map(|s| s.1)
                    .collect();
                for &nb in &chosen {
                    self.link(node, nb, l);
                    self.link(nb, node, l);
                    if self.links[nb as usize][l].len() > self.params.cap(l) {
                        self.prune(nb, l);
                    }
                }
                eps = candidates;
            }
        }
        if self.entry.is_none() || level > self.max_level {
            self.entry = Some(node);
            self.max_level = level;
        }

        if self.quant.enabled && !self.quant.is_calibrated() && self.ids.len() >= CALIBRATION_SIZE {
            self.calibrate();
        }
        Ok(())
    }

    fn link(&mut self, from: u32, to: u32, level: usize) {
        self.links[from as usize][level].push(to);
        if level == 0 {
            self.in_degree[to as usize] += 1;
        }
    }

    /// Keep the closest `cap` neighbours. At level 0 an edge that is the
    /// target's only incoming edge is kept in place of the farthest
    /// droppable one, so pruning does not orphan nodes.
    fn prune(&mut self, node: u32, level: usize) {
        let base = self.vector(node);
        let prepared = self.prepare(&base);
        let mut scored: Vec<Scored> = self.links[node as usize][level]
            .iter()
            .map(|&n| Scored(self.score(&prepared, n), n))
            .collect();
        scored.sort_by(|a, b| b.cmp(a));
        let cap = self.params.cap(level);
        let mut kept: Vec<Scored> = scored[..cap].to_vec();
        let mut dropped: Vec<Scored> = scored[cap..].to_vec();
        if level == 0 {
            for d in dropped.iter_mut() {
                if self.in_degree[d.1 as usize] > 1 {
                    continue;
                }
                if let Some(pos) = kept.iter().rposition(|k| self.in_degree[k.1 as usize] > 1) {
                    std::mem::swap(&mut kept[pos], d);
                }
            }
            for d in &dropped {
                self.in_degree[d.1 as usize] -= 1;
            }
            kept.sort_by(|a, b| b.cmp(a));
        }
        self.links[node as usize][level] = kept.into_iter().map(|s| s.1).collect();
    }

    fn calibrate(&mut self) {
        let Storage::Full(values) = &self.storage else { return };
        let spec = QuantizationSpec::calibrate(self.dims, values.chunks(self.dims));
        let codes = values.chunks(self.dims).flat_map(|v| spec.quantize(v)).collect();
        self.quant = spec;
        self.storage = Storage::Quantized(codes);
    }

    /// Finish the build: fix quantization ranges, reconnect any node that
    /// level-0 search cannot reach, and reject further inserts.
    pub fn freeze(&mut self) {
        if self.frozen {
            return;
        }
        if self.quant.enabled && !self.quant.is_calibrated() && !self.ids.is_empty() {
            self.calibrate();
        }
        self.repair_reachability();
        self.frozen = true;
    }

    /// Nodes reachable from the entry point over level-0 edges.
    pub fn reachable_from_entry(&self) -> Vec<bool> {
        let mut seen = vec![false; self.ids.len()];
        let Some(entry) = self.entry else { return seen };
        let mut queue = VecDeque::from([entry]);
        seen[entry as usize] = true;
        while let Some(n) = queue.pop_front() {
            for &m in &self.links[n as usize][0] {
                if !seen[m as usize] {
                    seen[m as usize] = true;
                    queue.push_back(m);
                }
            }
        }
        seen
    }

    fn repair_reachability(&mut self) {
        let mut seen = self.reachable_from_entry();
        let cap = self.params.cap(0);
        for orphan in 0..self.ids.len() as u32 {
            if seen[orphan as usize] {
                continue;
            }
            let v = self.vector(orphan);
            let prepared = self.prepare(&v);
            let mut hosts: Vec<Scored> = (0..self.ids.len() as u32)
                .filter(|&n| seen[n as usize])
                .map(|n| Scored(self.score(&prepared, n), n))
                .collect();
            hosts.sort_by(|a, b| b.cmp(a));
            let host = hosts
                .iter()
                .find(|h| self.links[h.1 as usize][0].len() < cap)
                .or(hosts.first())
                .map(|h| h.1)
                .expect("entry point is always reachable");
            self.link(host, orphan, 0);
            if self.links[host as usize][0].len() > cap {
                self.prune(host, 0);
            }
            seen = self.reachable_from_entry();
        }
    }

    /// Approximate top-k by inner product, best first; ties by ascending chunk_id.
    pub fn search(&self, query: &EmbeddingVector, k: usize, ef_search: usize) -> Result<Vec<(String, f64)>> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if query.dims() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                got: query.dims(),
            });
        }
        let k = k.max(1);
        let prepared = self.prepare(query.values());
        let eps = self.descend(&prepared, 0);
        let found = self.search_layer(&prepared, &eps, ef_search.max(k), 0);
        Ok(self.finish(found, k))
    }

    /// Exact top-k over every stored vector, with the same scoring as `search`.
    pub fn brute_force_search(&self, query: &EmbeddingVector, k: usize) -> Vec<(String, f64)> {
        let prepared = self.prepare(query.values());
        let all = (0..self.ids.len() as u32)
            .map(|n| Scored(self.score(&prepared, n), n))
            .collect();
        self.finish(all, k)
    }

    fn finish(&self, found: Vec<Scored>, k: usize) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = found
            .into_iter()
            .map(|s| (self.ids[s.1 as usize].clone(), s.0))
            .collect();
        sort_hits(&mut out);
        out.truncate(k);
        out
    }
}

fn sort_hits(hits: &mut [(String, f64)]) {
    hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

/// Exact top-k by inner product over arbitrary `(chunk_id, vector)` pairs;
/// ties by ascending chunk_id.
pub fn brute_force_search<'a>(
    vectors: impl IntoIterator<Item = (&'a str, &'a [f32])>,
    query: &EmbeddingVector,
    k: usize,
) -> Vec<(String, f64)> {
    let mut hits: Vec<(String, f64)> = vectors
        .into_iter()
        .map(|(id, v)| (id.to_string(), dot(v, query.values())))
        .collect();
    sort_hits(&mut hits);
    hits.truncate(k);
    hits
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_unit(rng: &mut ChaCha8Rng, dims: usize) -> EmbeddingVector {
        let v: Vec<f32> = (0..dims).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect();
        EmbeddingVector::normalized(v)
    }

    fn build(
        n: usize,
        dims: usize,
        params: HnswParams,
        quantized: bool,
        seed: u64,
    ) -> (HnswIndex, Vec<EmbeddingVector>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut index = HnswIndex::new(dims, params, quantized).unwrap();
        let vectors: Vec<_> = (0..n).map(|_| random_unit(&mut rng, dims)).collect();
        for (i, v) in vectors.iter().enumerate() {
            index.insert(&format!("v{i:04}"), v).unwrap();
        }
        (index, vectors)
    }

    fn check_graph(index: &HnswIndex) {
        assert!(index.reachable_from_entry().iter().all(|&r| r), "unreachable node");
        for (node, levels) in index.links.iter().enumerate() {
            for (level, list) in levels.iter().enumerate() {
                assert!(
                    list.len() <= index.params.cap(level),
                    "degree cap at node {node} level {level}"
                );
                let unique: HashSet<_> = list.iter().collect();
                assert_eq!(unique.len(), list.len());
                assert!(!list.contains(&(node as u32)));
                for &n in list {
                    assert!(index.links[n as usize].len() > level, "edge to node missing level");
                }
            }
        }
        assert_eq!(index.lookup.len(), index.ids.len());
        for (i, id) in index.ids.iter().enumerate() {
            assert_eq!(index.lookup[id], i as u32);
        }
    }

    #[test]
    fn first_insert_becomes_entry_point() {
        let mut index = HnswIndex::new(4, HnswParams::with_m(4, 8, 8), false).unwrap();
        index.insert("a", &EmbeddingVector::basis(4, 1)).unwrap();
        assert_eq!(index.entry_point(), Some("a"));
        assert!(index.node_level("a").is_some());
    }

    #[test]
    fn duplicate_and_mismatched_inserts_fail() {
        let mut index = HnswIndex::new(4, HnswParams::with_m(4, 8, 8), false).unwrap();
        index.insert("a", &EmbeddingVector::basis(4, 1)).unwrap();
        assert!(matches!(
            index.insert("a", &EmbeddingVector::basis(4, 2)),
            Err(Error::DuplicateId(_))
        ));
        assert!(matches!(
            index.insert("b", &EmbeddingVector::basis(3, 0)),
            Err(Error::DimensionMismatch { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn empty_index_search_fails() {
        let index = HnswIndex::new(4, HnswParams::default(), false).unwrap();
        assert!(matches!(
            index.search(&EmbeddingVector::basis(4, 0), 1, 10),
            Err(Error::EmptyIndex)
        ));
    }

    #[test]
    fn hundred_inserts_keep_graph_invariants() {
        let (index, _) = build(100, 16, HnswParams::default(), false, 7);
        check_graph(&index);
    }

    #[test]
    fn self_retrieval_scores_one() {
        let (index, vectors) = build(200, 32, HnswParams::default(), false, 3);
        for (i, v) in vectors.iter().enumerate().step_by(17) {
            let hits = index.search(v, 1, 50).unwrap();
            assert_eq!(hits[0].0, format!("v{i:04}"));
            assert!((hits[0].1 - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn k_beyond_size_returns_everything() {
        let (index, vectors) = build(7, 8, HnswParams::with_m(4, 8, 8), false, 1);
        let hits = index.search(&vectors[0], 50, 50).unwrap();
        assert_eq!(hits.len(), 7);
        assert!(hits.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn brute_force_on_basis_vectors() {
        let stored = [
            ("e0", EmbeddingVector::basis(3, 0)),
            ("e1", EmbeddingVector::basis(3, 1)),
            ("e2", EmbeddingVector::basis(3, 2)),
        ];
        let hits = brute_force_search(
            stored.iter().map(|(id, v)| (*id, v.values())),
            &EmbeddingVector::basis(3, 1),
            1,
        );
        assert_eq!(hits, vec![("e1".to_string(), 1.0)]);
    }

    #[test]
    fn brute_force_ties_break_by_id() {
        let v = EmbeddingVector::basis(3, 0);
        let stored = [("c", v.clone()), ("a", v.clone()), ("b", v.clone())];
        let hits = brute_force_search(stored.iter().map(|(id, v)| (*id, v.values())), &v, 2);
        let ids: Vec<_> = hits.iter().map(|h| h.0.as_str()).collect();
        assert_eq!(ids, vec!["a", "b"]);
    }

    #[test]
    fn brute_force_matches_independent_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let stored: Vec<(String, EmbeddingVector)> = (0..50)
            .map(|i| (format!("n{i:02}"), random_unit(&mut rng, 12)))
            .collect();
        let q = random_unit(&mut rng, 12);
        let got = brute_force_search(stored.iter().map(|(id, v)| (id.as_str(), v.values())), &q, 10);
        // independent scan: repeated arg-max selection in f64
        let mut remaining: Vec<(String, f64)> = stored
            .iter()
            .map(|(id, v)| {
                let s: f64 = v
                    .values()
                    .iter()
                    .zip(q.values())
                    .map(|(a, b)| *a as f64 * *b as f64)
                    .sum();
                (id.clone(), s)
            })
            .collect();
        let mut expected = Vec::new();
        for _ in 0..10 {
            let (pos, _) = remaining
                .iter()
                .enumerate()
                .fold(None::<(usize, &(String, f64))>, |best, (i, c)| match best {
                    Some((_, b)) if b.1 > c.1 || (b.1 == c.1 && b.0 < c.0) => best,
                    _ => Some((i, c)),
                })
                .unwrap();
            expected.push(remaining.remove(pos));
        }
        assert_eq!(got, expected);
    }

    #[test]
    fn freeze_blocks_inserts() {
        let (mut index, _) = build(5, 8, HnswParams::with_m(4, 8, 8), false, 1);
        index.freeze();
        assert!(matches!(
            index.insert("x", &EmbeddingVector::basis(8, 0)),
            Err(Error::Frozen)
        ));
    }

    #[test]
    fn quantization_calibrates_on_freeze() {
        let (mut index, vectors) = build(60, 64, HnswParams::with_m(8, 32, 32), true, 5);
        assert!(!index.quantization().is_calibrated());
        index.freeze();
        assert!(index.quantization().is_calibrated());
        let hits = index.search(&vectors[3], 1, 32).unwrap();
        assert_eq!(hits[0].0, "v0003");
        assert!((hits[0].1 - 1.0).abs() < 0.02);
    }

    #[test]
    fn quantized_cosine_error_is_small() {
        let (mut index, vectors) = build(300, 64, HnswParams::with_m(8, 32, 32), true, 9);
        index.freeze();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut worst = 0.0f64;
        for _ in 0..500 {
            let i = rng.random_range(0..vectors.len());
            let j = rng.random_range(0..vectors.len());
            let exact = vectors[i].dot(&vectors[j]);
            let stored_i = index.stored_vector(&format!("v{i:04}")).unwrap();
            let stored_j = index.stored_vector(&format!("v{j:04}")).unwrap();
            // stored against exact query, and stored against stored
            worst = worst.max((dot(&stored_i, vectors[j].values()) - exact).abs());
            worst = worst.max((dot(&stored_i, &stored_j) - exact).abs());
        }
        assert!(worst <= 0.02, "worst cosine error {worst}");
    }

    #[test]
    fn calibration_happens_after_calibration_size_inserts() {
        let (index, _) = build(CALIBRATION_SIZE + 3, 8, HnswParams::with_m(4, 8, 8), true, 2);
        assert!(index.quantization().is_calibrated());
        assert!(matches!(index.storage, Storage::Quantized(_)));
    }

    #[test]
    fn params_validation() {
        assert!(HnswParams::with_m(1, 10, 10).validate().is_err());
        assert!(HnswParams::with_m(8, 4, 10).validate().is_err());
        assert!(HnswParams::with_m(8, 8, 0).validate().is_err());
        let p = HnswParams::default();
        assert_eq!((p.m, p.ef_construction, p.ef_search), (32, 200, 50));
        assert!((p.level_multiplier - 1.0 / 32f64.ln()).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn graph_invariants_hold_for_any_insert_sequence(
            n in 1usize..150,
            m in 2usize..10,
            dims in 2usize..12,
            seed in any::<u64>(),
        ) {
            let mut params = HnswParams::with_m(m, m * 2, 10);
            params.seed = seed;
            let (mut index, _) = build(n, dims, params, false, seed);
            index.freeze();
            check_graph(&index);
        }
    }

    #[test]
    fn recall_improves_with_ef_search() {
        let (index, _) = build(1000, 32, HnswParams::with_m(8, 40, 10), false, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let queries: Vec<_> = (0..100).map(|_| random_unit(&mut rng, 32)).collect();
        let mut last = 0.0;
        for ef in [10, 20, 40, 80, 160] {
            let mut total = 0.0;
            for q in &queries {
                let truth: HashSet<String> = index.brute_force_search(q, 10).into_iter().map(|h| h.0).collect();
                let got = index.search(q, 10, ef).unwrap();
                total += got.iter().filter(|h| truth.contains(&h.0)).count() as f64 / 10.0;
            }
            let recall = total / queries.len() as f64;
            assert!(recall + 1e-12 >= last, "recall dropped at ef={ef}: {recall} < {last}");
            last = recall;
        }
        assert!(last > 0.9);
    }
}
