//! Nearest-neighbour index over descriptors and LNBNN scoring of individuals.
//!
//! For each query descriptor the `k + 1` nearest database descriptors are
//! retrieved; the `(k+1)`-th distance is the background distance, and every
//! individual among the first `k` is credited with its closest distance minus
//! the background. When the background distance ties the `k`-th, its
//! individual is credited as well (with increment 0). Totals are non-positive
//! and lower is better.
//!
//! Search is either exact (linear scan, neighbours ordered by distance then
//! descriptor id) or through a forest of random hyperplane trees, each split
//! being the perpendicular bisector of two sampled points.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::descriptors::DescriptorSet;
use crate::error::{Error, Result};
use crate::ranking::RankedList;

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_TREES: usize = 50;
pub const DEFAULT_LEAF_SIZE: usize = 16;

const MAGIC: &[u8; 8] = b"FPNNIDX\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexConfig {
    pub trees: usize,
    pub leaf_size: usize,
    pub seed: u64,
    /// Answer queries by linear scan instead of the forest.
    pub exact: bool,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            trees: DEFAULT_TREES,
            leaf_size: DEFAULT_LEAF_SIZE,
            seed: 0,
            exact: false,
        }
    }
}

impl IndexConfig {
    pub fn exact() -> Self {
        Self {
            exact: true,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Node {
    Split { plane: u32, bias: f32, left: u32, right: u32 },
    Leaf { start: u32, len: u32 },
}

/// A database neighbour: Euclidean distance and descriptor id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub distance: f64,
    pub id: u32,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance.total_cmp(&other.distance).then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnIndex {
    cfg: IndexConfig,
    dim: usize,
    vectors: Vec<f64>,
    owners: Vec<u32>,
    individuals: Vec<String>,
    nodes: Vec<Node>,
    /// Split normals, stored narrow: margins only order the traversal.
    planes: Vec<f32>,
    leaf_items: Vec<u32>,
    roots: Vec<u32>,
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Eight-lane dot product for hyperplane margins.
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f32 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().sum::<f32>() + tail
}

/// Indexes every indexable descriptor of `sets`, in the given order.
pub fn build_index<'a>(sets: impl IntoIterator<Item = &'a DescriptorSet>, cfg: IndexConfig) -> Result<NnIndex> {
    let sets: Vec<&DescriptorSet> = sets.into_iter().collect();
    let Some(dim) = sets.first().map(|s| s.dim) else {
        return Err(Error::EmptyIndex);
    };
    if let Some(s) = sets.iter().find(|s| s.dim != dim) {
        return Err(Error::Dimension { expected: dim, got: s.dim });
    }
    let individuals: Vec<String> = sets
        .iter()
        .map(|s| s.key.individual.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut vectors = Vec::new();
    let mut owners = Vec::new();
    for s in &sets {
        let owner = individuals.binary_search(&s.key.individual).expect("collected above") as u32;
        for (_, v) in s.indexable() {
            vectors.extend_from_slice(v);
            owners.push(owner);
        }
    }
    NnIndex::from_parts(cfg, dim, vectors, owners, individuals)
}

impl NnIndex {
    /// Builds from packed vectors with per-vector owner indices into `individuals`.
    pub fn from_parts(
        cfg: IndexConfig,
        dim: usize,
        vectors: Vec<f64>,
        owners: Vec<u32>,
        individuals: Vec<String>,
    ) -> Result<Self> {
        if owners.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if dim == 0 || vectors.len() != owners.len() * dim {
            return Err(Error::Inconsistent(format!(
                "{} values for {} vectors of dimension {dim}",
                vectors.len(),
                owners.len()
            )));
        }
        if owners.len() > u32::MAX as usize || owners.iter().any(|&o| o as usize >= individuals.len()) {
            return Err(Error::Inconsistent("descriptor owner out of range".into()));
        }
        if cfg.leaf_size == 0 {
            return Err(Error::Config("leaf size must be positive".into()));
        }
        let mut idx = Self {
            cfg,
            dim,
            vectors,
            owners,
            individuals,
            nodes: Vec::new(),
            planes: Vec::new(),
            leaf_items: Vec::new(),
            roots: Vec::new(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let narrow: Vec<f32> = if cfg.trees > 0 {
            idx.vectors.iter().map(|&v| v as f32).collect()
        } else {
            Vec::new()
        };
        for _ in 0..cfg.trees {
            let mut items: Vec<u32> = (0..idx.len() as u32).collect();
            let root = idx.build_node(&mut items, &narrow, &mut rng);
            idx.roots.push(root);
        }
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.owners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owners.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> IndexConfig {
        self.cfg
    }

    pub fn set_exact(&mut self, exact: bool) {
        self.cfg.exact = exact;
    }

    /// Sorted identifiers of the indexed individuals.
    pub fn individuals(&self) -> &[String] {
        &self.individuals
    }

    pub fn vector(&self, id: u32) -> &[f64] {
        let i = id as usize * self.dim;
        &self.vectors[i..i + self.dim]
    }

    pub fn owner(&self, id: u32) -> &str {
        &self.individuals[self.owners[id as usize] as usize]
    }

    fn build_node(&mut self, items: &mut [u32], narrow: &[f32], rng: &mut ChaCha8Rng) -> u32 {
        let d = self.dim;
        let row = |i: u32| &narrow[i as usize * d..(i as usize + 1) * d];
        if items.len() > self.cfg.leaf_size {
            if let Some((a, b)) = self.pick_pair(items, rng) {
                let normal: Vec<f32> = row(a).iter().zip(row(b)).map(|(x, y)| x - y).collect();
                let mid: Vec<f32> = row(a).iter().zip(row(b)).map(|(x, y)| 0.5 * (x + y)).collect();
                let bias = dot(&normal, &mid);
                let mut split = 0;
                for i in 0..items.len() {
                    if dot(&normal, row(items[i])) - bias <= 0.0 {
                        items.swap(i, split);
                        split += 1;
                    }
                }
                if split > 0 && split < items.len() {
                    let plane = (self.planes.len() / self.dim) as u32;
                    self.planes.extend_from_slice(&normal);
                    let (lo, hi) = items.split_at_mut(split);
                    let left = self.build_node(lo, narrow, rng);
                    let right = self.build_node(hi, narrow, rng);
                    self.nodes.push(Node::Split { plane, bias, left, right });
                    return (self.nodes.len() - 1) as u32;
                }
            }
        }
        let start = self.leaf_items.len() as u32;
        self.leaf_items.extend_from_slice(items);
        self.nodes.push(Node::Leaf {
            start,
            len: items.len() as u32,
        });
        (self.nodes.len() - 1) as u32
    }

    /// Two items with distinct vectors, or `None` when all coincide.
    fn pick_pair(&self, items: &[u32], rng: &mut ChaCha8Rng) -> Option<(u32, u32)> {
        for _ in 0..8 {
            let a = items[rng.random_range(0..items.len())];
            let b = items[rng.random_range(0..items.len())];
            if self.vector(a) != self.vector(b) {
                return Some((a, b));
            }
        }
        let a = items[0];
        items.iter().find(|&&b| self.vector(a) != self.vector(b)).map(|&b| (a, b))
    }

    fn plane(&self, p: u32) -> &[f32] {
        let i = p as usize * self.dim;
        &self.planes[i..i + self.dim]
    }

    /// The `n` nearest neighbours of `q`, ascending by (distance, id).
    pub fn knn(&self, q: &[f64], n: usize) -> Vec<Neighbor> {
        let n = n.min(self.len());
        if self.cfg.exact || self.roots.is_empty() {
            return self.knn_exact(q, n);
        }
        let candidates = self.candidates(q, n * self.roots.len());
        if candidates.len() < n {
            return self.knn_exact(q, n);
        }
        let mut out: Vec<Neighbor> = candidates
            .into_iter()
            .map(|id| Neighbor {
                distance: euclidean(q, self.vector(id)),
                id,
            })
            .collect();
        if out.len() > n {
            out.select_nth_unstable(n - 1);
            out.truncate(n);
        }
        out.sort_unstable();
        out
    }

    pub fn knn_exact(&self, q: &[f64], n: usize) -> Vec<Neighbor> {
        let n = n.min(self.len());
        if n == 0 {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Neighbor> = BinaryHeap::with_capacity(n + 1);
        for id in 0..self.len() as u32 {
            let nb = Neighbor {
                distance: euclidean(q, self.vector(id)),
                id,
            };
            if heap.len() < n {
                heap.push(nb);
            } else if nb < *heap.peek().expect("nonempty") {
                heap.pop();
                heap.push(nb);
            }
        }
        heap.into_sorted_vec()
    }

    fn candidates(&self, q: &[f64], budget: usize) -> Vec<u32> {
        let q: Vec<f32> = q.iter().map(|&v| v as f32).collect();
        #[derive(PartialEq)]
        struct Entry(f32, u32);
        impl Eq for Entry {}
        impl Ord for Entry {
            fn cmp(&self, o: &Self) -> Ordering {
                self.0.total_cmp(&o.0).then(o.1.cmp(&self.1))
            }
        }
        impl PartialOrd for Entry {
            fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
                Some(self.cmp(o))
            }
        }
        let mut heap: BinaryHeap<Entry> = self.roots.iter().map(|&r| Entry(f32::INFINITY, r)).collect();
        let mut out = Vec::with_capacity(budget + self.cfg.leaf_size);
        while out.len() < budget {
            let Some(Entry(priority, node)) = heap.pop() else { break };
            match self.nodes[node as usize] {
                Node::Leaf { start, len } => {
                    out.extend_from_slice(&self.leaf_items[start as usize..(start + len) as usize]);
                }
                Node::Split { plane, bias, left, right } => {
                    let m = dot(self.plane(plane), &q) - bias;
                    heap.push(Entry(priority.min(m), right));
                    heap.push(Entry(priority.min(-m), left));
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Versioned little-endian binary form.
    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        binio::write_u32(w, VERSION)?;
        binio::write_u32(w, binio::len_u32(self.dim)?)?;
        binio::write_u64(w, self.len() as u64)?;
        binio::write_u32(w, binio::len_u32(self.cfg.trees)?)?;
        binio::write_u32(w, binio::len_u32(self.cfg.leaf_size)?)?;
        binio::write_u64(w, self.cfg.seed)?;
        binio::write_u8(w, self.cfg.exact as u8)?;
        binio::write_u32(w, binio::len_u32(self.individuals.len())?)?;
        for name in &self.individuals {
            binio::write_str(w, name)?;
        }
        binio::write_f64s(w, &self.vectors)?;
        for &o in &self.owners {
            binio::write_u32(w, o)?;
        }
        binio::write_u64(w, self.planes.len() as u64)?;
        binio::write_f32s(w, &self.planes)?;
        binio::write_u64(w, self.nodes.len() as u64)?;
        for node in &self.nodes {
            match *node {
                Node::Split { plane, bias, left, right } => {
                    binio::write_u8(w, 0)?;
                    binio::write_u32(w, plane)?;
                    binio::write_f32(w, bias)?;
                    binio::write_u32(w, left)?;
                    binio::write_u32(w, right)?;
                }
                Node::Leaf { start, len } => {
                    binio::write_u8(w, 1)?;
                    binio::write_u32(w, start)?;
                    binio::write_u32(w, len)?;
                }
            }
        }
        binio::write_u64(w, self.leaf_items.len() as u64)?;
        for &i in &self.leaf_items {
            binio::write_u32(w, i)?;
        }
        for &r in &self.roots {
            binio::write_u32(w, r)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<Self> {
        binio::expect_magic(r, MAGIC)?;
        let version = binio::read_u32(r)?;
        if version != VERSION {
            return Err(Error::Format(format!("index version {version}, expected {VERSION}")));
        }
        let dim = binio::read_u32(r)? as usize;
        let count = binio::read_u64(r)? as usize;
        let cfg = IndexConfig {
            trees: binio::read_u32(r)? as usize,
            leaf_size: binio::read_u32(r)? as usize,
            seed: binio::read_u64(r)?,
            exact: binio::read_u8(r)? != 0,
        };
        let n_ind = binio::read_u32(r)? as usize;
        let individuals = (0..n_ind).map(|_| binio::read_str(r)).collect::<Result<Vec<_>>>()?;
        let vectors = binio::read_f64s(r, count * dim)?;
        let owners = (0..count).map(|_| binio::read_u32(r)).collect::<Result<Vec<_>>>()?;
        let n_planes = binio::read_u64(r)? as usize;
        let planes = binio::read_f32s(r, n_planes)?;
        let n_nodes = binio::read_u64(r)? as usize;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            nodes.push(match binio::read_u8(r)? {
                0 => Node::Split {
                    plane: binio::read_u32(r)?,
                    bias: binio::read_f32(r)?,
                    left: binio::read_u32(r)?,
                    right: binio::read_u32(r)?,
                },
                1 => Node::Leaf {
                    start: binio::read_u32(r)?,
                    len: binio::read_u32(r)?,
                },
                t => return Err(Error::Format(format!("bad node tag {t}"))),
            });
        }
        let n_leaf = binio::read_u64(r)? as usize;
        let leaf_items = (0..n_leaf).map(|_| binio::read_u32(r)).collect::<Result<Vec<_>>>()?;
        let roots = (0..cfg.trees).map(|_| binio::read_u32(r)).collect::<Result<Vec<_>>>()?;
        let idx = Self {
            cfg,
            dim,
            vectors,
            owners,
            individuals,
            nodes,
            planes,
            leaf_items,
            roots,
        };
        idx.check()?;
        Ok(idx)
    }

    fn check(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Format(format!("corrupt index: {what}")));
        if self.owners.iter().any(|&o| o as usize >= self.individuals.len()) {
            return bad("owner");
        }
        if self.dim == 0 || !self.planes.len().is_multiple_of(self.dim) {
            return bad("planes");
        }
        let n_planes = (self.planes.len() / self.dim) as u32;
        let n_nodes = self.nodes.len() as u32;
        for node in &self.nodes {
            match *node {
                Node::Split { plane, left, right, .. } => {
                    if plane >= n_planes || left >= n_nodes || right >= n_nodes {
                        return bad("node link");
                    }
                }
                Node::Leaf { start, len } => {
                    if (start as usize + len as usize) > self.leaf_items.len() {
                        return bad("leaf range");
                    }
                }
            }
        }
        if self.leaf_items.iter().any(|&i| i as usize >= self.len()) || self.roots.iter().any(|&r| r >= n_nodes) {
            return bad("item");
        }
        Ok(())
    }
}

/// Accumulated LNBNN score per individual; only credited individuals appear.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreTable {
    pub scores: BTreeMap<String, f64>,
}

impl ScoreTable {
    /// Credited individuals ascending by score (ties by id), then every other
    /// indexed individual in id order with score `0.0`.
    pub fn ranking(&self, idx: &NnIndex) -> RankedList {
        let mut scored: Vec<(String, f64)> = self.scores.iter().map(|(k, v)| (k.clone(), *v)).collect();
        scored.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        scored.extend(
            idx.individuals()
                .iter()
                .filter(|id| !self.scores.contains_key(*id))
                .map(|id| (id.clone(), 0.0)),
        );
        RankedList::from_ordered(scored)
    }
}

/// LNBNN totals for a set of query descriptors.
pub fn lnbnn_scores(queries: &[&[f64]], idx: &NnIndex, k: usize) -> Result<ScoreTable> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if idx.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if let Some(q) = queries.iter().find(|q| q.len() != idx.dim()) {
        return Err(Error::Dimension {
            expected: idx.dim(),
            got: q.len(),
        });
    }
    let k = if idx.len() < k + 1 {
        log::warn!("index holds {} descriptors; k truncated from {k} to {}", idx.len(), idx.len() - 1);
        idx.len() - 1
    } else {
        k
    };
    let increments: Vec<Vec<(u32, f64)>> = queries
        .par_iter()
        .map(|q| {
            if k == 0 {
                return vec![(idx.owners[0], 0.0)];
            }
            let nn = idx.knn(q, k + 1);
            let background = nn[k].distance;
            // a background neighbour tied with the k-th is credited too, with increment 0
            let credited = if nn[k].distance == nn[k - 1].distance { k + 1 } else { k };
            let mut seen: Vec<(u32, f64)> = Vec::with_capacity(credited);
            for nb in &nn[..credited] {
                let owner = idx.owners[nb.id as usize];
                if !seen.iter().any(|(o, _)| *o == owner) {
                    seen.push((owner, nb.distance - background));
                }
            }
            seen
        })
        .collect();
    let mut totals: Vec<Option<f64>> = vec![None; idx.individuals.len()];
    for (owner, inc) in increments.into_iter().flatten() {
        let t = totals[owner as usize].get_or_insert(0.0);
        *t += inc;
    }
    Ok(ScoreTable {
        scores: totals
            .into_iter()
            .enumerate()
            .filter_map(|(i, t)| t.map(|t| (idx.individuals[i].clone(), t)))
            .collect(),
    })
}

/// Stacks the indexable descriptors of every image in the encounter into one query.
pub fn encounter_query_lnbnn(images: &[&DescriptorSet], idx: &NnIndex, k: usize) -> Result<RankedList> {
    let queries: Vec<&[f64]> = images.iter().flat_map(|s| s.indexable().map(|(_, v)| v)).collect();
    if queries.is_empty() {
        return Err(Error::EmptyQuery);
    }
    Ok(lnbnn_scores(&queries, idx, k)?.ranking(idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::ImageKey;
    use crate::descriptors::Span;
    use rand_distr::{Distribution, StandardNormal};

    fn set(individual: &str, image: &str, vectors: &[Vec<f64>]) -> DescriptorSet {
        let dim = vectors[0].len();
        DescriptorSet {
            key: ImageKey {
                individual: individual.into(),
                encounter: "e".into(),
                image: image.into(),
            },
            dim,
            spans: vectors
                .iter()
                .map(|v| Span {
                    scale: 0,
                    start: 0,
                    end: 1,
                    indexable: v.iter().any(|x| *x != 0.0),
                })
                .collect(),
            vectors: vectors.concat(),
        }
    }

    fn unit_vectors(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / n).collect()
            })
            .collect()
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(build_index([], IndexConfig::default()), Err(Error::EmptyIndex)));
        let sentinel = set("a", "i", &[vec![0.0, 0.0]]);
        assert!(matches!(build_index([&sentinel], IndexConfig::default()), Err(Error::EmptyIndex)));
    }

    #[test]
    fn singleton_is_the_only_neighbour() {
        let s = set("a", "i", &[vec![0.6, 0.8]]);
        let idx = build_index([&s], IndexConfig::default()).unwrap();
        let nn = idx.knn(&[-1.0, 0.0], 3);
        assert_eq!(nn.len(), 1);
        assert_eq!(nn[0].id, 0);
        let t = lnbnn_scores(&[&[1.0, 0.0]], &idx, 5).unwrap();
        assert_eq!(t.scores.get("a"), Some(&0.0));
    }

    #[test]
    fn duplicates_are_retained() {
        let a = set("a", "i", &[vec![1.0, 0.0]]);
        let b = set("b", "j", &[vec![1.0, 0.0]]);
        let c = set("c", "k", &[vec![0.0, 1.0]]);
        let idx = build_index([&a, &b, &c], IndexConfig::default()).unwrap();
        let owners: BTreeSet<&str> = idx.knn(&[1.0, 0.0], 2).iter().map(|n| idx.owner(n.id)).collect();
        assert_eq!(owners, BTreeSet::from(["a", "b"]));
    }

    #[test]
    fn exact_query_credits_the_matching_individual() {
        let a = set("a", "i", &[vec![1.0, 0.0]]);
        let b = set("b", "j", &[vec![0.0, 1.0]]);
        let idx = build_index([&a, &b], IndexConfig::exact()).unwrap();
        let t = lnbnn_scores(&[&[1.0, 0.0]], &idx, 1).unwrap();
        assert_eq!(t.scores.len(), 1);
        assert_eq!(t.scores["a"], -(2f64.sqrt()));
        let r = t.ranking(&idx);
        assert_eq!(r.ids().collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn equidistant_neighbours_get_zero_and_tie_by_id() {
        let a = set("b", "i", &[vec![1.0, 0.0]]);
        let b = set("a", "j", &[vec![-1.0, 0.0]]);
        let idx = build_index([&a, &b], IndexConfig::exact()).unwrap();
        let r = encounter_query_lnbnn(&[&set("q", "x", &[vec![0.0, 1.0]])], &idx, 1).unwrap();
        assert_eq!(r.entries(), [("a".to_string(), 0.0), ("b".to_string(), 0.0)]);
    }

    #[test]
    fn increments_are_bounded_by_background() {
        let db: Vec<DescriptorSet> = (0..4)
            .map(|i| set(&format!("p{i}"), "i", &unit_vectors(30, 8, i)))
            .collect();
        let idx = build_index(&db, IndexConfig::exact()).unwrap();
        let qs = unit_vectors(20, 8, 99);
        let refs: Vec<&[f64]> = qs.iter().map(|v| v.as_slice()).collect();
        let t = lnbnn_scores(&refs, &idx, 3).unwrap();
        let bound: f64 = refs.iter().map(|q| idx.knn_exact(q, 4)[3].distance).sum();
        for s in t.scores.values() {
            assert!(*s <= 0.0 && s.abs() <= bound);
        }
    }

    #[test]
    fn stacked_query_is_sum_of_parts() {
        let db: Vec<DescriptorSet> = (0..3)
            .map(|i| set(&format!("p{i}"), "i", &unit_vectors(40, 6, i)))
            .collect();
        let idx = build_index(&db, IndexConfig::exact()).unwrap();
        let q1 = set("q", "1", &unit_vectors(15, 6, 10));
        let q2 = set("q", "2", &unit_vectors(15, 6, 11));
        let score = |sets: &[&DescriptorSet]| {
            let v: Vec<&[f64]> = sets.iter().flat_map(|s| s.indexable().map(|(_, v)| v)).collect();
            lnbnn_scores(&v, &idx, 3).unwrap()
        };
        let both = score(&[&q1, &q2]);
        let (a, b) = (score(&[&q1]), score(&[&q2]));
        for (id, s) in &both.scores {
            let sum = a.scores.get(id).unwrap_or(&0.0) + b.scores.get(id).unwrap_or(&0.0);
            assert!((s - sum).abs() < 1e-12);
        }
    }

    #[test]
    fn sentinel_image_changes_nothing() {
        let db = [set("a", "i", &unit_vectors(10, 4, 1)), set("b", "j", &unit_vectors(10, 4, 2))];
        let idx = build_index(&db, IndexConfig::exact()).unwrap();
        let q = set("q", "1", &unit_vectors(5, 4, 3));
        let empty = set("q", "2", &[vec![0.0; 4], vec![0.0; 4]]);
        assert_eq!(
            encounter_query_lnbnn(&[&q], &idx, 2).unwrap(),
            encounter_query_lnbnn(&[&q, &empty], &idx, 2).unwrap()
        );
        assert!(matches!(encounter_query_lnbnn(&[&empty], &idx, 2), Err(Error::EmptyQuery)));
    }

    #[test]
    fn forest_recall_and_determinism() {
        let db = set("a", "i", &unit_vectors(500, 16, 7));
        let idx = build_index([&db], IndexConfig { seed: 3, ..Default::default() }).unwrap();
        let again = build_index([&db], IndexConfig { seed: 3, ..Default::default() }).unwrap();
        assert_eq!(idx, again);
        let mut hit = 0;
        for q in unit_vectors(100, 16, 8) {
            let truth: BTreeSet<u32> = idx.knn_exact(&q, 10).iter().map(|n| n.id).collect();
            hit += idx.knn(&q, 10).iter().filter(|n| truth.contains(&n.id)).count();
        }
        assert!(hit as f64 / 1000.0 >= 0.95, "recall {}", hit as f64 / 1000.0);
    }

    #[test]
    fn binary_round_trip_answers_identically() {
        let db = [set("a", "i", &unit_vectors(200, 8, 1)), set("b", "j", &unit_vectors(200, 8, 2))];
        let idx = build_index(&db, IndexConfig { leaf_size: 4, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        idx.write_binary(&mut buf).unwrap();
        let back = NnIndex::read_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(idx, back);
        let q = set("q", "1", &unit_vectors(30, 8, 5));
        assert_eq!(
            encounter_query_lnbnn(&[&q], &idx, 5).unwrap(),
            encounter_query_lnbnn(&[&q], &back, 5).unwrap()
        );
        buf[0] = b'X';
        assert!(matches!(NnIndex::read_binary(&mut buf.as_slice()), Err(Error::Format(_))));
    }
}
