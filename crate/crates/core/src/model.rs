//! System model: parameters, file placement, reduce assignment and demands.
//!
//! A [`Placement`] records which files every node maps (`M_k`) and, derived
//! from that, the support set `S_n` of every file. [`Placement::symmetric`]
//! builds the grouped placement used by the achievable scheme: the file count
//! is padded with empty files up to a multiple of [`granularity`], and every
//! group of `C(K, r)` consecutive files is spread over the `r`-subsets of the
//! nodes in lexicographic order.

use std::collections::BTreeSet;
use std::fmt;

use itertools::Itertools;
use num_integer::binomial;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Rational;

pub type NodeId = u32;
pub type FileId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("node count K must be at least 1")]
    NoNodes,
    #[error("file count N={n} must be at least K={k}")]
    TooFewFiles { n: u32, k: u32 },
    #[error("reduce-function count Q={q} must be a positive multiple of K={k}")]
    ReduceNotDivisible { q: u32, k: u32 },
    #[error("computation load r={r} must be an integer in [1, K={k}]")]
    LoadOutOfRange { r: String, k: u32 },
    #[error("file index {n} outside [1, {max}]")]
    FileOutOfRange { n: FileId, max: FileId },
    #[error("node index {node} outside [1, {k}]")]
    NodeOutOfRange { node: NodeId, k: u32 },
    #[error("file {n} is not mapped at any node")]
    UnmappedFile { n: FileId },
    #[error("expected {expected} per-node sets, got {got}")]
    NodeCountMismatch { expected: u32, got: usize },
    #[error("invalid reduce assignment: {0}")]
    InvalidReduceSets(String),
    #[error("invalid instance document: {0}")]
    Document(String),
}

/// `K` nodes, `N` files, `Q` reduce functions and an integer computation
/// load `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemParams {
    #[serde(rename = "K")]
    pub k: u32,
    #[serde(rename = "N")]
    pub n: u32,
    #[serde(rename = "Q")]
    pub q: u32,
    pub r: u32,
}

impl SystemParams {
    pub fn new(k: u32, n: u32, q: u32, r: u32) -> Result<Self, ModelError> {
        let params = SystemParams { k, n, q, r };
        params.validate()?;
        Ok(params)
    }

    /// Accepts a rational load and rejects it unless it is an integer in
    /// `[1, K]`.
    pub fn with_load(k: u32, n: u32, q: u32, r: Rational) -> Result<Self, ModelError> {
        if !r.is_integer() || *r.numer() < 1 || *r.numer() > i64::from(k) {
            return Err(ModelError::LoadOutOfRange { r: r.to_string(), k });
        }
        Self::new(k, n, q, *r.numer() as u32)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.k == 0 {
            return Err(ModelError::NoNodes);
        }
        if self.n < self.k {
            return Err(ModelError::TooFewFiles { n: self.n, k: self.k });
        }
        if self.q == 0 || !self.q.is_multiple_of(self.k) {
            return Err(ModelError::ReduceNotDivisible { q: self.q, k: self.k });
        }
        if self.r == 0 || self.r > self.k {
            return Err(ModelError::LoadOutOfRange { r: self.r.to_string(), k: self.k });
        }
        Ok(())
    }

    pub fn functions_per_node(&self) -> u32 {
        self.q / self.k
    }
}

/// Intermediate value `a_{q,n}`: output of the map function on file `n`
/// consumed by reduce function `q`. Ordered lexicographically on `(q, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntermediateValueId {
    pub q: u32,
    pub n: FileId,
}

impl IntermediateValueId {
    pub const fn new(q: u32, n: FileId) -> Self {
        IntermediateValueId { q, n }
    }
}

impl fmt::Display for IntermediateValueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a[{},{}]", self.q, self.n)
    }
}

/// Smallest file count the symmetric scheme works with for `(K, r)`:
/// `C(K, r)` when `2r >= K`, otherwise `C(K-r-1, r-1) * C(K, r)`.
pub fn granularity(k: u32, r: u32) -> u64 {
    let (k, r) = (u64::from(k), u64::from(r));
    if 2 * r >= k {
        binomial(k, r)
    } else {
        binomial(k - r - 1, r - 1) * binomial(k, r)
    }
}

/// The `r`-subsets of `1..=k` in lexicographic order.
pub fn lex_subsets(k: u32, r: u32) -> Vec<Vec<NodeId>> {
    (1..=k).combinations(r as usize).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct SymmetricLayout {
    r: u32,
}

/// Per-node mapped file sets `M_1..M_K` over `Ñ = N + Δ` files, the last `Δ`
/// of which are empty padding files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    k: u32,
    mapped: Vec<BTreeSet<FileId>>,
    supports: Vec<Vec<NodeId>>,
    n_real: u32,
    n_total: u32,
    layout: Option<SymmetricLayout>,
}

impl Placement {
    /// Grouped symmetric placement with empty-file padding.
    pub fn symmetric(params: &SystemParams) -> Result<Self, ModelError> {
        params.validate()?;
        let SystemParams { k, n, r, .. } = *params;
        let n0 = granularity(k, r);
        let groups_of_n0 = u64::from(n).div_ceil(n0);
        let n_total = u32::try_from(groups_of_n0 * n0)
            .map_err(|_| ModelError::Document(format!("padded file count overflows for N0={n0}")))?;

        let subsets = lex_subsets(k, r);
        let mut mapped = vec![BTreeSet::new(); k as usize];
        let mut supports = Vec::with_capacity(n_total as usize);
        for file in 1..=n_total {
            let subset = &subsets[(file as usize - 1) % subsets.len()];
            for &node in subset {
                mapped[node as usize - 1].insert(file);
            }
            supports.push(subset.clone());
        }
        Ok(Placement {
            k,
            mapped,
            supports,
            n_real: n,
            n_total,
            layout: Some(SymmetricLayout { r }),
        })
    }

    /// Arbitrary placement over `n_total` files of which the first `n_real`
    /// are real. Every file must be mapped somewhere. The placement is
    /// recognised as symmetric when it coincides with [`Placement::symmetric`]
    /// for some `r`.
    pub fn from_mapped_files(
        k: u32,
        n_real: u32,
        n_total: u32,
        mapped_files: Vec<Vec<FileId>>,
    ) -> Result<Self, ModelError> {
        if k == 0 {
            return Err(ModelError::NoNodes);
        }
        if mapped_files.len() != k as usize {
            return Err(ModelError::NodeCountMismatch { expected: k, got: mapped_files.len() });
        }
        if n_real > n_total || n_real == 0 {
            return Err(ModelError::Document(format!(
                "n_real={n_real} must be in [1, n_total={n_total}]"
            )));
        }
        let mut mapped = Vec::with_capacity(k as usize);
        let mut supports = vec![Vec::new(); n_total as usize];
        for (idx, files) in mapped_files.into_iter().enumerate() {
            let node = idx as NodeId + 1;
            let mut set = BTreeSet::new();
            for n in files {
                if n == 0 || n > n_total {
                    return Err(ModelError::FileOutOfRange { n, max: n_total });
                }
                if set.insert(n) {
                    supports[n as usize - 1].push(node);
                }
            }
            mapped.push(set);
        }
        if let Some(pos) = supports.iter().position(Vec::is_empty) {
            return Err(ModelError::UnmappedFile { n: pos as FileId + 1 });
        }
        let mut placement = Placement { k, mapped, supports, n_real, n_total, layout: None };
        placement.layout = placement.detect_layout();
        Ok(placement)
    }

    fn detect_layout(&self) -> Option<SymmetricLayout> {
        let r = self.supports.first()?.len() as u32;
        if self.supports.iter().any(|s| s.len() as u32 != r) {
            return None;
        }
        if u64::from(self.n_total) % granularity(self.k, r) != 0 {
            return None;
        }
        let subsets = lex_subsets(self.k, r);
        let matches = self
            .supports
            .iter()
            .enumerate()
            .all(|(i, s)| *s == subsets[i % subsets.len()]);
        matches.then_some(SymmetricLayout { r })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn n_real(&self) -> u32 {
        self.n_real
    }

    pub fn n_total(&self) -> u32 {
        self.n_total
    }

    /// Number of empty padding files `Δ`.
    pub fn padding(&self) -> u32 {
        self.n_total - self.n_real
    }

    pub fn is_padding(&self, n: FileId) -> bool {
        n > self.n_real
    }

    /// `r` when this is the grouped symmetric placement, `None` otherwise.
    pub fn symmetric_load(&self) -> Option<u32> {
        self.layout.map(|l| l.r)
    }

    /// `M_k`, 1-based node index.
    pub fn mapped(&self, node: NodeId) -> Result<&BTreeSet<FileId>, ModelError> {
        self.check_node(node)?;
        Ok(&self.mapped[node as usize - 1])
    }

    pub fn mapped_sets(&self) -> &[BTreeSet<FileId>] {
        &self.mapped
    }

    pub fn maps(&self, node: NodeId, n: FileId) -> bool {
        node >= 1 && node <= self.k && self.mapped[node as usize - 1].contains(&n)
    }

    /// `S_n = {k : n ∈ M_k}`, ascending.
    pub fn support_set(&self, n: FileId) -> Result<&[NodeId], ModelError> {
        if n == 0 || n > self.n_total {
            return Err(ModelError::FileOutOfRange { n, max: self.n_total });
        }
        Ok(&self.supports[n as usize - 1])
    }

    /// Replication count `θ_n` of every file, in file order.
    pub fn replication_counts(&self) -> Vec<u32> {
        self.supports.iter().map(|s| s.len() as u32).collect()
    }

    /// `Σ_k |M_k| / Ñ`, exact.
    pub fn computation_load(&self) -> Rational {
        let mapped: usize = self.mapped.iter().map(BTreeSet::len).sum();
        Rational::new(mapped as i64, i64::from(self.n_total))
    }

    fn check_node(&self, node: NodeId) -> Result<(), ModelError> {
        if node == 0 || node > self.k {
            return Err(ModelError::NodeOutOfRange { node, k: self.k });
        }
        Ok(())
    }
}

/// Free-function form of [`Placement::symmetric`].
pub fn symmetric_placement(params: &SystemParams) -> Result<Placement, ModelError> {
    Placement::symmetric(params)
}

/// Free-function form of [`Placement::computation_load`].
pub fn compute_computation_load(placement: &Placement) -> Rational {
    placement.computation_load()
}

/// Reduce-function sets `W_1..W_K`: pairwise disjoint, `Q/K` each, covering
/// `1..=Q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReduceAssignment {
    q: u32,
    sets: Vec<BTreeSet<u32>>,
    owner: Vec<NodeId>,
}

impl ReduceAssignment {
    /// `W_k = {(k-1)Q/K + 1, ..., kQ/K}`.
    pub fn contiguous(k: u32, q: u32) -> Result<Self, ModelError> {
        if k == 0 {
            return Err(ModelError::NoNodes);
        }
        if q == 0 || !q.is_multiple_of(k) {
            return Err(ModelError::ReduceNotDivisible { q, k });
        }
        let per = q / k;
        let sets = (0..k).map(|i| (i * per + 1..=(i + 1) * per).collect()).collect();
        Self::from_sets(q, sets)
    }

    pub fn from_sets(q: u32, sets: Vec<BTreeSet<u32>>) -> Result<Self, ModelError> {
        let k = sets.len() as u32;
        if k == 0 {
            return Err(ModelError::NoNodes);
        }
        if q == 0 || !q.is_multiple_of(k) {
            return Err(ModelError::ReduceNotDivisible { q, k });
        }
        let per = (q / k) as usize;
        let mut owner = vec![0; q as usize];
        for (idx, set) in sets.iter().enumerate() {
            if set.len() != per {
                return Err(ModelError::InvalidReduceSets(format!(
                    "node {} has {} functions, expected {per}",
                    idx + 1,
                    set.len()
                )));
            }
            for &f in set {
                if f == 0 || f > q {
                    return Err(ModelError::InvalidReduceSets(format!(
                        "function {f} outside [1, {q}]"
                    )));
                }
                if owner[f as usize - 1] != 0 {
                    return Err(ModelError::InvalidReduceSets(format!(
                        "function {f} assigned twice"
                    )));
                }
                owner[f as usize - 1] = idx as NodeId + 1;
            }
        }
        Ok(ReduceAssignment { q, sets, owner })
    }

    pub fn k(&self) -> u32 {
        self.sets.len() as u32
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn functions(&self, node: NodeId) -> &BTreeSet<u32> {
        &self.sets[node as usize - 1]
    }

    pub fn sets(&self) -> &[BTreeSet<u32>] {
        &self.sets
    }

    /// Node computing reduce function `q`.
    pub fn owner(&self, q: u32) -> Option<NodeId> {
        self.owner.get((q as usize).wrapping_sub(1)).copied()
    }
}

/// Free-function form of [`ReduceAssignment::contiguous`].
pub fn assign_reduce_functions(params: &SystemParams) -> Result<ReduceAssignment, ModelError> {
    ReduceAssignment::contiguous(params.k, params.q)
}

/// `G_k = {(q, n) : q ∈ W_k, n ∉ M_k}` for every node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemandSet {
    per_node: Vec<BTreeSet<IntermediateValueId>>,
}

impl DemandSet {
    pub fn node(&self, node: NodeId) -> &BTreeSet<IntermediateValueId> {
        &self.per_node[node as usize - 1]
    }

    pub fn per_node(&self) -> &[BTreeSet<IntermediateValueId>] {
        &self.per_node
    }

    pub fn total(&self) -> u64 {
        self.per_node.iter().map(|g| g.len() as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.per_node.iter().all(BTreeSet::is_empty)
    }

    pub fn contains(&self, node: NodeId, value: IntermediateValueId) -> bool {
        node >= 1
            && (node as usize) <= self.per_node.len()
            && self.per_node[node as usize - 1].contains(&value)
    }

    /// `(receiver, value)` pairs in node order, then `(q, n)` order.
    pub fn iter(&self) -> impl Iterator<Item = (NodeId, IntermediateValueId)> + '_ {
        self.per_node
            .iter()
            .enumerate()
            .flat_map(|(i, g)| g.iter().map(move |v| (i as NodeId + 1, *v)))
    }

    /// Demands whose file is a padding file.
    pub fn padding_count(&self, placement: &Placement) -> u64 {
        self.iter().filter(|(_, v)| placement.is_padding(v.n)).count() as u64
    }
}

pub fn demand_set(
    placement: &Placement,
    assignment: &ReduceAssignment,
) -> Result<DemandSet, ModelError> {
    if placement.k() != assignment.k() {
        return Err(ModelError::NodeCountMismatch {
            expected: placement.k(),
            got: assignment.sets().len(),
        });
    }
    let per_node = (1..=placement.k())
        .map(|node| {
            let mapped = &placement.mapped[node as usize - 1];
            assignment
                .functions(node)
                .iter()
                .flat_map(|&q| {
                    (1..=placement.n_total())
                        .filter(|n| !mapped.contains(n))
                        .map(move |n| IntermediateValueId::new(q, n))
                })
                .collect()
        })
        .collect();
    Ok(DemandSet { per_node })
}

/// `Σ_k (Q/K)(Ñ − |M_k|)`.
pub fn total_demand(placement: &Placement, q: u32) -> Result<u64, ModelError> {
    let k = placement.k();
    if q == 0 || !q.is_multiple_of(k) {
        return Err(ModelError::ReduceNotDivisible { q, k });
    }
    let per = u64::from(q / k);
    Ok(placement
        .mapped
        .iter()
        .map(|m| per * (u64::from(placement.n_total) - m.len() as u64))
        .sum())
}

/// JSON interchange form of a placement together with its reduce assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDocument {
    #[serde(rename = "K")]
    pub k: u32,
    #[serde(rename = "Q")]
    pub q: u32,
    /// Integer when the computation load is integral, a float otherwise.
    pub r: serde_json::Number,
    pub n_real: u32,
    pub n_total: u32,
    pub mapped_files: Vec<Vec<FileId>>,
    pub reduce_sets: Vec<Vec<u32>>,
}

/// A placement and reduce assignment over the same nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub placement: Placement,
    pub assignment: ReduceAssignment,
}

impl Instance {
    pub fn new(placement: Placement, assignment: ReduceAssignment) -> Result<Self, ModelError> {
        if placement.k() != assignment.k() {
            return Err(ModelError::NodeCountMismatch {
                expected: placement.k(),
                got: assignment.sets().len(),
            });
        }
        Ok(Instance { placement, assignment })
    }

    /// Symmetric placement plus contiguous reduce assignment.
    pub fn symmetric(params: &SystemParams) -> Result<Self, ModelError> {
        Self::new(Placement::symmetric(params)?, assign_reduce_functions(params)?)
    }

    pub fn demand(&self) -> DemandSet {
        demand_set(&self.placement, &self.assignment).expect("node counts checked at construction")
    }

    pub fn to_document(&self) -> InstanceDocument {
        let load = self.placement.computation_load();
        let r = if load.is_integer() {
            serde_json::Number::from(*load.numer())
        } else {
            let value = *load.numer() as f64 / *load.denom() as f64;
            serde_json::Number::from_f64(value).expect("finite load")
        };
        InstanceDocument {
            k: self.placement.k(),
            q: self.assignment.q(),
            r,
            n_real: self.placement.n_real(),
            n_total: self.placement.n_total(),
            mapped_files: self
                .placement
                .mapped_sets()
                .iter()
                .map(|m| m.iter().copied().collect())
                .collect(),
            reduce_sets: self.assignment.sets().iter().map(|w| w.iter().copied().collect()).collect(),
        }
    }

    pub fn from_document(doc: &InstanceDocument) -> Result<Self, ModelError> {
        let placement =
            Placement::from_mapped_files(doc.k, doc.n_real, doc.n_total, doc.mapped_files.clone())?;
        if doc.reduce_sets.len() != doc.k as usize {
            return Err(ModelError::NodeCountMismatch {
                expected: doc.k,
                got: doc.reduce_sets.len(),
            });
        }
        let assignment = ReduceAssignment::from_sets(
            doc.q,
            doc.reduce_sets.iter().map(|w| w.iter().copied().collect()).collect(),
        )?;
        let load = placement.computation_load();
        let declared = doc.r.as_f64().unwrap_or(f64::NAN);
        let actual = *load.numer() as f64 / *load.denom() as f64;
        if (declared - actual).abs() > 1e-9 * actual.max(1.0) {
            return Err(ModelError::Document(format!(
                "declared r={declared} but mapped files give {load}"
            )));
        }
        Self::new(placement, assignment)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: InstanceDocument =
            serde_json::from_str(text).map_err(|e| ModelError::Document(e.to_string()))?;
        Self::from_document(&doc)
    }
}
