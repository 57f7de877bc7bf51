//! Finite state spaces, their rank/unrank codecs, block-conditioning
//! partitions and the graph/hypergraph weight containers.
//!
//! Four kinds of configuration spaces are supported, all with uniform
//! measure:
//!
//! * `SingleParticle(n)`: one walker on `n` vertices; a state is its position.
//! * `Product(n, N)`: `N` labeled independent walkers; a state is the
//!   position vector `ξ = (ξ_1, …, ξ_N)`.
//! * `Permutations(n)`: a state is `σ`, with `σ[x]` the label sitting at
//!   vertex `x`. The inverse `ξ = σ⁻¹` gives label positions.
//! * `Slice(n, r)`: `r` indistinguishable particles; a state is the
//!   occupation vector `η ∈ {0,1}^n`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on the number of vertices of any graph or hypergraph.
pub const MAX_VERTICES: usize = 16;
/// Hard cap on the number of states of any enumerated space.
pub const HARD_STATE_CAP: usize = 2_000_000;

/// A set of vertices stored as a 64-bit mask (bit `x` set iff `x` is in the set).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct VertexSet(u64);

impl VertexSet {
    pub const EMPTY: VertexSet = VertexSet(0);

    pub fn from_bits(bits: u64) -> Self {
        VertexSet(bits)
    }

    pub fn from_indices(indices: &[usize]) -> Result<Self> {
        let mut bits = 0u64;
        for &x in indices {
            if x >= 64 {
                return Err(Error::domain(format!("vertex index {x} out of range")));
            }
            bits |= 1 << x;
        }
        Ok(VertexSet(bits))
    }

    /// `{0, …, n-1}`.
    pub fn full(n: usize) -> Self {
        if n >= 64 {
            VertexSet(u64::MAX)
        } else {
            VertexSet((1u64 << n) - 1)
        }
    }

    pub fn pair(x: usize, y: usize) -> Self {
        VertexSet((1 << x) | (1 << y))
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, x: usize) -> bool {
        x < 64 && self.0 >> x & 1 == 1
    }

    pub fn union(self, other: VertexSet) -> VertexSet {
        VertexSet(self.0 | other.0)
    }

    pub fn is_subset_of(self, other: VertexSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Members in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let x = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(x)
            }
        })
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.iter().collect()
    }
}

impl fmt::Debug for VertexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl Serialize for VertexSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_vec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for VertexSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<usize>::deserialize(d)?;
        VertexSet::from_indices(&v).map_err(serde::de::Error::custom)
    }
}

/// All subsets of `{0,…,n-1}` of cardinality `k`, in increasing mask order.
pub fn subsets_of_size(n: usize, k: usize) -> Vec<VertexSet> {
    assert!(n <= MAX_VERTICES);
    (0u64..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(VertexSet)
        .collect()
}

fn check_vertex_count(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("vertex count must be positive"));
    }
    if n > MAX_VERTICES {
        return Err(Error::Size {
            what: "vertex count",
            value: n as u128,
            cap: MAX_VERTICES as u128,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Weighted graphs
// ---------------------------------------------------------------------------

/// Undirected graph with symmetric nonnegative conductances `c_xy`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    weights: Vec<f64>,
}

impl WeightedGraph {
    /// Builds a graph from a dense weight matrix, validating symmetry,
    /// zero diagonal, nonnegativity and the presence of at least one edge.
    pub fn from_matrix(weights: Vec<Vec<f64>>) -> Result<Self> {
        let n = weights.len();
        check_vertex_count(n)?;
        let mut flat = Vec::with_capacity(n * n);
        for row in &weights {
            if row.len() != n {
                return Err(Error::input("weight matrix must be square"));
            }
            flat.extend_from_slice(row);
        }
        let g = WeightedGraph { n, weights: flat };
        g.validate()?;
        Ok(g)
    }

    /// Builds a graph from an edge list; duplicate edges are summed.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        check_vertex_count(n)?;
        let mut weights = vec![0.0; n * n];
        for &(x, y, w) in edges {
            if x >= n || y >= n {
                return Err(Error::input(format!("edge ({x},{y}) out of range for n={n}")));
            }
            if x == y {
                return Err(Error::input(format!("self-loop at vertex {x}")));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::input(format!("edge ({x},{y}) has invalid weight {w}")));
            }
            weights[x * n + y] += w;
            weights[y * n + x] += w;
        }
        let g = WeightedGraph { n, weights };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        let n = self.n;
        let mut any = false;
        for x in 0..n {
            if self.weights[x * n + x] != 0.0 {
                return Err(Error::domain("weight matrix must have zero diagonal"));
            }
            for y in 0..n {
                let w = self.weights[x * n + y];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::domain("weights must be finite and nonnegative"));
                }
                if w != self.weights[y * n + x] {
                    return Err(Error::domain("weight matrix must be symmetric"));
                }
                any |= w > 0.0;
            }
        }
        if !any {
            return Err(Error::domain("graph has no edge with positive weight"));
        }
        Ok(())
    }

    /// Complete graph with `c_xy ≡ c`.
    pub fn complete(n: usize, c: f64) -> Result<Self> {
        let edges: Vec<_> = (0..n)
            .flat_map(|x| (x + 1..n).map(move |y| (x, y, c)))
            .collect();
        Self::from_edges(n, &edges)
    }

    /// Star with unit weights on the edges touching `center`.
    pub fn star(n: usize, center: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n).filter(|&y| y != center).map(|y| (center, y, 1.0)).collect();
        Self::from_edges(n, &edges)
    }

    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|x| (x - 1, x, 1.0)).collect();
        Self::from_edges(n, &edges)
    }

    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::domain("a cycle needs at least 3 vertices"));
        }
        let edges: Vec<_> = (0..n).map(|x| (x, (x + 1) % n, 1.0)).collect();
        Self::from_edges(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, x: usize, y: usize) -> f64 {
        self.weights[x * self.n + y]
    }

    /// `Σ_y c_xy`.
    pub fn degree(&self, x: usize) -> f64 {
        (0..self.n).map(|y| self.weight(x, y)).sum()
    }

    pub fn neighbors(&self, x: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&y| self.weight(x, y) > 0.0)
    }

    /// A leaf has exactly one neighbor with positive weight.
    pub fn is_leaf(&self, x: usize) -> bool {
        self.neighbors(x).count() == 1
    }

    /// Edges `(x, y, c_xy)` with `x < y` and positive weight.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for x in 0..self.n {
            for y in x + 1..self.n {
                let w = self.weight(x, y);
                if w > 0.0 {
                    out.push((x, y, w));
                }
            }
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for y in self.neighbors(x) {
                if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            n: self.n,
            edges: self.edges(),
        }
    }
}

/// `{"n": int, "edges": [[x, y, weight], …]}`
impl Serialize for WeightedGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphJson {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl TryFrom<GraphJson> for WeightedGraph {
    type Error = Error;

    fn try_from(j: GraphJson) -> Result<Self> {
        WeightedGraph::from_edges(j.n, &j.edges)
    }
}

// ---------------------------------------------------------------------------
// Hypergraph weights
// ---------------------------------------------------------------------------

/// Positive weights `α_A` on vertex subsets with `|A| ≥ 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct HypergraphWeights {
    n: usize,
    blocks: BTreeMap<VertexSet, f64>,
}

impl HypergraphWeights {
    /// Sums duplicate blocks, drops zero weights and checks that the blocks
    /// connect all vertices.
    pub fn new(n: usize, blocks: impl IntoIterator<Item = (VertexSet, f64)>) -> Result<Self> {
        check_vertex_count(n)?;
        let full = VertexSet::full(n);
        let mut map: BTreeMap<VertexSet, f64> = BTreeMap::new();
        for (set, w) in blocks {
            if !set.is_subset_of(full) {
                return Err(Error::domain(format!("block {set:?} not contained in 0..{n}")));
            }
            if set.len() < 2 {
                return Err(Error::domain(format!("block {set:?} has fewer than 2 vertices")));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::domain(format!("block {set:?} has invalid weight {w}")));
            }
            *map.entry(set).or_insert(0.0) += w;
        }
        map.retain(|_, w| *w > 0.0);
        if map.is_empty() {
            return Err(Error::domain("hypergraph has no block with positive weight"));
        }
        let h = HypergraphWeights { n, blocks: map };
        if !h.is_connected() {
            return Err(Error::domain("hypergraph blocks do not connect all vertices"));
        }
        Ok(h)
    }

    /// Pair blocks `α_xy = 2 c_xy`, which reproduce the graph dynamics.
    pub fn from_graph(g: &WeightedGraph) -> Result<Self> {
        Self::new(
            g.n(),
            g.edges().into_iter().map(|(x, y, c)| (VertexSet::pair(x, y), 2.0 * c)),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> impl Iterator<Item = (VertexSet, f64)> + '_ {
        self.blocks.iter().map(|(&s, &w)| (s, w))
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn weight(&self, set: VertexSet) -> f64 {
        self.blocks.get(&set).copied().unwrap_or(0.0)
    }

    /// True when only blocks of size 2 carry weight.
    pub fn is_pairwise(&self) -> bool {
        self.blocks.keys().all(|s| s.len() == 2)
    }

    fn is_connected(&self) -> bool {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut y = x;
            while p[y] != r {
                let next = p[y];
                p[y] = r;
                y = next;
            }
            r
        }
        for set in self.blocks.keys() {
            let mut it = set.iter();
            let first = it.next().unwrap();
            for y in it {
                let (a, b) = (find(&mut parent, first), find(&mut parent, y));
                parent[a] = b;
            }
        }
        let root = find(&mut parent, 0);
        (0..self.n).all(|x| find(&mut parent, x) == root)
    }

    pub fn to_json(&self) -> HypergraphJson {
        HypergraphJson {
            n: self.n,
            blocks: self
                .blocks()
                .map(|(set, weight)| BlockJson { set: set.to_vec(), weight })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockJson {
    pub set: Vec<usize>,
    pub weight: f64,
}

/// `{"n": int, "blocks": [{"set": [ints], "weight": float}, …]}`
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypergraphJson {
    pub n: usize,
    pub blocks: Vec<BlockJson>,
}

impl TryFrom<HypergraphJson> for HypergraphWeights {
    type Error = Error;

    fn try_from(j: HypergraphJson) -> Result<Self> {
        let mut blocks = Vec::with_capacity(j.blocks.len());
        for b in j.blocks {
            let set = VertexSet::from_indices(&b.set)?;
            if set.len() != b.set.len() {
                return Err(Error::input(format!("block {:?} repeats a vertex", b.set)));
            }
            blocks.push((set, b.weight));
        }
        HypergraphWeights::new(j.n, blocks)
    }
}

// ---------------------------------------------------------------------------
// Mean-field weights
// ---------------------------------------------------------------------------

/// Weights depending only on block size: `α = Σ_ℓ w_ℓ α^ℓ`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanFieldWeights {
    n: usize,
    /// Indexed by block size; entries 0 and 1 are always zero.
    w: Vec<f64>,
}

impl MeanFieldWeights {
    pub fn new(n: usize, weights: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        check_vertex_count(n)?;
        if n < 2 {
            return Err(Error::domain("mean-field weights need n >= 2"));
        }
        let mut w = vec![0.0; n + 1];
        for (ell, x) in weights {
            if ell < 2 || ell > n {
                return Err(Error::domain(format!("block size {ell} outside [2, {n}]")));
            }
            if !x.is_finite() || x < 0.0 {
                return Err(Error::domain(format!("w_{ell} = {x} is not a nonnegative number")));
            }
            w[ell] += x;
        }
        if w.iter().all(|&x| x == 0.0) {
            return Err(Error::domain("at least one mean-field weight must be positive"));
        }
        Ok(MeanFieldWeights { n, w })
    }

    /// `t · α^ℓ`.
    pub fn single(n: usize, ell: usize, t: f64) -> Result<Self> {
        Self::new(n, [(ell, t)])
    }

    /// Parses `"2:1.0,3:0.5"` (block size `:` weight).
    pub fn parse_spec(n: usize, spec: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (l, x) = item
                .split_once(':')
                .ok_or_else(|| Error::input(format!("expected ell:weight, got {item:?}")))?;
            let ell: usize = l
                .trim()
                .parse()
                .map_err(|_| Error::input(format!("bad block size {l:?}")))?;
            let x: f64 = x
                .trim()
                .parse()
                .map_err(|_| Error::input(format!("bad weight {x:?}")))?;
            pairs.push((ell, x));
        }
        Self::new(n, pairs)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `w_ℓ` (zero outside `[2, n]`).
    pub fn weight(&self, ell: usize) -> f64 {
        self.w.get(ell).copied().unwrap_or(0.0)
    }

    /// `(ℓ, w_ℓ)` for every positive weight.
    pub fn terms(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.w
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > 0.0)
            .map(|(l, &x)| (l, x))
    }

    pub fn to_json(&self) -> MeanFieldJson {
        MeanFieldJson {
            n: self.n,
            w: self.terms().map(|(l, x)| (l.to_string(), x)).collect(),
        }
    }
}

/// `{"n": int, "w": {"2": float, "3": float, …}}`
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeanFieldJson {
    pub n: usize,
    pub w: BTreeMap<String, f64>,
}

impl TryFrom<MeanFieldJson> for MeanFieldWeights {
    type Error = Error;

    fn try_from(j: MeanFieldJson) -> Result<Self> {
        let mut pairs = Vec::new();
        for (k, x) in j.w {
            let ell: usize = k
                .trim()
                .parse()
                .map_err(|_| Error::input(format!("bad block size key {k:?}")))?;
            pairs.push((ell, x));
        }
        MeanFieldWeights::new(j.n, pairs)
    }
}

/// Expands mean-field weights into one block per subset with `w_{|A|} > 0`.
pub fn mean_field_expand(mf: &MeanFieldWeights) -> HypergraphWeights {
    let blocks = mf
        .terms()
        .flat_map(|(ell, x)| subsets_of_size(mf.n, ell).into_iter().map(move |s| (s, x)));
    HypergraphWeights::new(mf.n, blocks).expect("mean-field expansion is a valid hypergraph")
}

/// Graph with `c_xy = Σ_{A ∋ x,y} α_A / |A|`, which generates the same
/// single-particle dynamics as `h`.
pub fn graph_from_hypergraph(h: &HypergraphWeights) -> WeightedGraph {
    let n = h.n();
    let mut weights = vec![0.0; n * n];
    for (set, alpha) in h.blocks() {
        let share = alpha / set.len() as f64;
        for x in set.iter() {
            for y in set.iter() {
                if x != y {
                    weights[x * n + y] += share;
                }
            }
        }
    }
    let g = WeightedGraph { n, weights };
    debug_assert!(g.validate().is_ok());
    g
}

// ---------------------------------------------------------------------------
// State spaces
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceKind {
    SingleParticle { n: usize },
    Product { n: usize, particles: usize },
    Permutations { n: usize },
    Slice { n: usize, r: usize },
}

impl SpaceKind {
    /// Number of vertices.
    pub fn n(self) -> usize {
        match self {
            SpaceKind::SingleParticle { n }
            | SpaceKind::Product { n, .. }
            | SpaceKind::Permutations { n }
            | SpaceKind::Slice { n, .. } => n,
        }
    }

    /// Length of the coordinate vector stored per state.
    fn width(self) -> usize {
        match self {
            SpaceKind::SingleParticle { .. } => 1,
            SpaceKind::Product { particles, .. } => particles,
            SpaceKind::Permutations { n } | SpaceKind::Slice { n, .. } => n,
        }
    }
}

impl fmt::Display for SpaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SpaceKind::SingleParticle { n } => write!(f, "single({n})"),
            SpaceKind::Product { n, particles } => write!(f, "product({n}, {particles})"),
            SpaceKind::Permutations { n } => write!(f, "perm({n})"),
            SpaceKind::Slice { n, r } => write!(f, "slice({n}, {r})"),
        }
    }
}

/// Soft caps, adjustable per call; the hard cap [`HARD_STATE_CAP`] always applies.
#[derive(Clone, Copy, Debug)]
pub struct SpaceCaps {
    pub max_perm_n: usize,
    pub max_product_states: usize,
    pub max_slice_states: usize,
}

impl Default for SpaceCaps {
    fn default() -> Self {
        SpaceCaps {
            max_perm_n: 8,
            max_product_states: 1_000_000,
            max_slice_states: 1_000_000,
        }
    }
}

pub(crate) fn factorial_u128(n: usize) -> u128 {
    (1..=n as u128).product()
}

pub(crate) fn binomial_u128(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k as u128 {
        acc = acc * (n as u128 - i) / (i + 1);
    }
    acc
}

/// Enumerated finite configuration space with uniform measure.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    kind: SpaceKind,
    width: usize,
    coords: Vec<u8>,
}

/// Builds a space under the default soft caps.
pub fn build_space(kind: SpaceKind) -> Result<StateSpace> {
    build_space_with_caps(kind, SpaceCaps::default())
}

pub fn build_space_with_caps(kind: SpaceKind, caps: SpaceCaps) -> Result<StateSpace> {
    let n = kind.n();
    check_vertex_count(n)?;
    let size: u128 = match kind {
        SpaceKind::SingleParticle { n } => n as u128,
        SpaceKind::Product { n, particles } => {
            if particles == 0 {
                return Err(Error::domain("product space needs at least one particle"));
            }
            if particles > 64 {
                return Err(Error::Size {
                    what: "particle count",
                    value: particles as u128,
                    cap: 64,
                });
            }
            let size = (n as u128).checked_pow(particles as u32).unwrap_or(u128::MAX);
            if size > caps.max_product_states as u128 {
                return Err(Error::Size {
                    what: "product space size n^N",
                    value: size,
                    cap: caps.max_product_states as u128,
                });
            }
            size
        }
        SpaceKind::Permutations { n } => {
            if n > caps.max_perm_n {
                return Err(Error::Size {
                    what: "permutation size n",
                    value: n as u128,
                    cap: caps.max_perm_n as u128,
                });
            }
            factorial_u128(n)
        }
        SpaceKind::Slice { n, r } => {
            if r == 0 || r >= n {
                return Err(Error::domain(format!("slice needs 1 <= r <= n-1, got r={r}, n={n}")));
            }
            let size = binomial_u128(n, r);
            if size > caps.max_slice_states as u128 {
                return Err(Error::Size {
                    what: "slice size binomial(n, r)",
                    value: size,
                    cap: caps.max_slice_states as u128,
                });
            }
            size
        }
    };
    if size > HARD_STATE_CAP as u128 {
        return Err(Error::Size {
            what: "number of states",
            value: size,
            cap: HARD_STATE_CAP as u128,
        });
    }
    let size = size as usize;
    let width = kind.width();
    let mut space = StateSpace {
        kind,
        width,
        coords: vec![0; size * width],
    };
    let mut buf = vec![0u8; width];
    for i in 0..size {
        space.unrank_into(i, &mut buf);
        space.coords[i * width..(i + 1) * width].copy_from_slice(&buf);
    }
    Ok(space)
}

impl StateSpace {
    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.kind.n()
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Uniform weight of each state.
    pub fn measure(&self) -> f64 {
        1.0 / self.len() as f64
    }

    /// Coordinates of state `i` (position / position vector / `σ` / `η`).
    pub fn state(&self, i: usize) -> &[u8] {
        &self.coords[i * self.width..(i + 1) * self.width]
    }

    pub fn states(&self) -> impl Iterator<Item = &[u8]> {
        self.coords.chunks_exact(self.width)
    }

    pub fn unrank(&self, i: usize) -> Vec<u8> {
        let mut buf = vec![0; self.width];
        self.unrank_into(i, &mut buf);
        buf
    }

    fn unrank_into(&self, mut i: usize, out: &mut [u8]) {
        match self.kind {
            SpaceKind::SingleParticle { .. } => out[0] = i as u8,
            SpaceKind::Product { n, particles } => {
                for k in (0..particles).rev() {
                    out[k] = (i % n) as u8;
                    i /= n;
                }
            }
            SpaceKind::Permutations { n } => {
                // Lehmer code in the factorial number system, lexicographic order.
                let mut digits = vec![0usize; n];
                for k in 1..=n {
                    digits[n - k] = i % k;
                    i /= k;
                }
                let mut avail: Vec<u8> = (0..n as u8).collect();
                for (k, d) in digits.into_iter().enumerate() {
                    out[k] = avail.remove(d);
                }
            }
            SpaceKind::Slice { n, r } => {
                // Combinatorial number system: rank = Σ_k C(c_k, k), c_1 < … < c_r.
                out.fill(0);
                for k in (1..=r).rev() {
                    let mut c = k - 1;
                    while c + 1 < n && binomial_u128(c + 1, k) <= i as u128 {
                        c += 1;
                    }
                    out[c] = 1;
                    i -= binomial_u128(c, k) as usize;
                }
            }
        }
    }

    /// Inverse of [`unrank`](Self::unrank). Panics on malformed input.
    pub fn rank(&self, state: &[u8]) -> usize {
        assert_eq!(state.len(), self.width, "state has wrong width");
        match self.kind {
            SpaceKind::SingleParticle { .. } => state[0] as usize,
            SpaceKind::Product { n, .. } => state.iter().fold(0, |acc, &x| acc * n + x as usize),
            SpaceKind::Permutations { n } => {
                let mut rank = 0usize;
                for k in 0..n {
                    let smaller_after = state[k + 1..].iter().filter(|&&v| v < state[k]).count();
                    rank = rank * (n - k) + smaller_after;
                }
                rank
            }
            SpaceKind::Slice { .. } => {
                let mut rank = 0u128;
                let mut k = 0;
                for (c, &occ) in state.iter().enumerate() {
                    if occ == 1 {
                        k += 1;
                        rank += binomial_u128(c, k);
                    }
                }
                rank as usize
            }
        }
    }

    /// Classes of states agreeing outside `block`: the conditioning used by
    /// `μ_A` (permutations), `ν_A` (product space) and their analogues.
    pub fn block_partition(&self, block: VertexSet) -> Result<BlockPartition> {
        block_partition(self, block)
    }

    /// Classes of states with equal occupation variable `η_x` (or label `σ_x`).
    pub fn site_partition(&self, x: usize) -> Result<Partition> {
        if x >= self.n() {
            return Err(Error::domain(format!("site {x} out of range")));
        }
        Ok(match self.kind {
            SpaceKind::SingleParticle { .. } => {
                Partition::from_keys(self.states().map(|s| (s[0] as usize == x) as u64))
            }
            SpaceKind::Product { .. } => Partition::from_keys(self.states().map(|s| {
                s.iter()
                    .enumerate()
                    .filter(|(_, &p)| p as usize == x)
                    .fold(0u64, |m, (i, _)| m | 1 << i)
            })),
            SpaceKind::Permutations { .. } | SpaceKind::Slice { .. } => {
                Partition::from_keys(self.states().map(|s| s[x] as u64))
            }
        })
    }
}

/// A partition of the state indices `0..n_states`, stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    n_states: usize,
    class_of: Vec<u32>,
    offsets: Vec<usize>,
    members: Vec<u32>,
}

impl Partition {
    /// Groups states by key; classes are numbered by first occurrence.
    pub fn from_keys<K: std::hash::Hash + Eq>(keys: impl Iterator<Item = K>) -> Self {
        let mut ids: HashMap<K, u32> = HashMap::new();
        let mut class_of = Vec::new();
        for key in keys {
            let next = ids.len() as u32;
            class_of.push(*ids.entry(key).or_insert(next));
        }
        Self::from_class_of(class_of, ids.len())
    }

    fn from_class_of(class_of: Vec<u32>, n_classes: usize) -> Self {
        let mut counts = vec![0usize; n_classes + 1];
        for &c in &class_of {
            counts[c as usize + 1] += 1;
        }
        for k in 1..=n_classes {
            counts[k] += counts[k - 1];
        }
        let offsets = counts.clone();
        let mut fill = counts;
        let mut members = vec![0u32; class_of.len()];
        for (i, &c) in class_of.iter().enumerate() {
            members[fill[c as usize]] = i as u32;
            fill[c as usize] += 1;
        }
        Partition {
            n_states: class_of.len(),
            class_of,
            offsets,
            members,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn num_classes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn class_of(&self, state: usize) -> usize {
        self.class_of[state] as usize
    }

    pub fn class(&self, c: usize) -> &[u32] {
        &self.members[self.offsets[c]..self.offsets[c + 1]]
    }

    pub fn classes(&self) -> impl Iterator<Item = &[u32]> {
        self.offsets.windows(2).map(|w| &self.members[w[0]..w[1]])
    }

    /// Replaces every value by its class average.
    pub fn average(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.n_states);
        let mut out = vec![0.0; f.len()];
        for class in self.classes() {
            let m = class.iter().map(|&i| f[i as usize]).sum::<f64>() / class.len() as f64;
            for &i in class {
                out[i as usize] = m;
            }
        }
        out
    }
}

/// Partition of a space into classes of states agreeing outside a block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockPartition {
    pub block: VertexSet,
    pub space: SpaceKind,
    pub partition: Partition,
}

impl std::ops::Deref for BlockPartition {
    type Target = Partition;

    fn deref(&self) -> &Partition {
        &self.partition
    }
}

const INSIDE: u8 = u8::MAX;

pub fn block_partition(space: &StateSpace, block: VertexSet) -> Result<BlockPartition> {
    let n = space.n();
    if block.len() < 2 {
        return Err(Error::domain(format!("block {block:?} has fewer than 2 vertices")));
    }
    if !block.is_subset_of(VertexSet::full(n)) {
        return Err(Error::domain(format!("block {block:?} not contained in 0..{n}")));
    }
    let partition = match space.kind {
        // Coordinates are vertex positions: hide positions inside the block.
        SpaceKind::SingleParticle { .. } | SpaceKind::Product { .. } => {
            Partition::from_keys(space.states().map(|s| {
                s.iter()
                    .map(|&p| if block.contains(p as usize) { INSIDE } else { p })
                    .collect::<Vec<u8>>()
            }))
        }
        // Coordinates are indexed by vertex: hide the block's coordinates.
        SpaceKind::Permutations { .. } | SpaceKind::Slice { .. } => {
            Partition::from_keys(space.states().map(|s| {
                s.iter()
                    .enumerate()
                    .map(|(x, &v)| if block.contains(x) { INSIDE } else { v })
                    .collect::<Vec<u8>>()
            }))
        }
    };
    Ok(BlockPartition {
        block,
        space: space.kind,
        partition,
    })
}
