//! Minor embedding of a fully connected logical layer into a sparse hardware
//! graph, the replica / majority-vote codecs between logical and physical
//! spins, and construction of the physical (programmed) Ising model.
//!
//! Physical spins are indexed chain by chain: all qubits of chain 0 in the
//! order they are stored, then chain 1, and so on. The physical model uses
//! the same `sum_{i<j} J s_i s_j + sum h s` convention as every other model in
//! the crate. In the double-sum, negated form `-1/2 sum_{i,j} J~ z z - sum h~ z`
//! the same Hamiltonian has `J~_kl = -J_kl` for every ordered pair and
//! `h~ = -h`.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use std::fmt::Write as _;

use log::{debug, info};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::error::{check_len, QahmError, Result};
use crate::ising::IsingModel;
use crate::rng::{stream, StreamRng};
use crate::spin::SpinVector;

/// Default ferromagnetic coupling magnitude inside a chain.
pub const DEFAULT_CHAIN_STRENGTH: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Topology {
    /// `m x n` grid of `K_{t,t}` unit cells.
    Chimera {
        m: usize,
        n: usize,
        t: usize,
    },
    Custom,
}

/// A simple undirected graph of physical qubits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HardwareGraph {
    adjacency: Vec<Vec<usize>>,
    topology: Topology,
}

impl HardwareGraph {
    pub fn from_edges(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut sets = vec![BTreeSet::new(); node_count];
        for (a, b) in edges {
            if a == b {
                return Err(QahmError::InvalidParameter(format!("self-loop on node {a}")));
            }
            if a.max(b) >= node_count {
                return Err(QahmError::shape("edge endpoint", node_count, a.max(b)));
            }
            sets[a].insert(b);
            sets[b].insert(a);
        }
        Ok(HardwareGraph {
            adjacency: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
            topology: Topology::Custom,
        })
    }

    /// Chimera graph: qubit `((row * n + col) * 2 + side) * t + k`. Side 0
    /// qubits couple to the same qubit in the cells above and below, side 1
    /// qubits to the cells left and right, and the two sides of a cell form a
    /// complete bipartite `K_{t,t}`.
    pub fn chimera(m: usize, n: usize, t: usize) -> Result<Self> {
        if m == 0 || n == 0 || t == 0 {
            return Err(QahmError::InvalidParameter(
                "chimera dimensions must be positive".into(),
            ));
        }
        let id = |r: usize, c: usize, side: usize, k: usize| ((r * n + c) * 2 + side) * t + k;
        let mut edges = Vec::new();
        for r in 0..m {
            for c in 0..n {
                for a in 0..t {
                    for b in 0..t {
                        edges.push((id(r, c, 0, a), id(r, c, 1, b)));
                    }
                    if r + 1 < m {
                        edges.push((id(r, c, 0, a), id(r + 1, c, 0, a)));
                    }
                    if c + 1 < n {
                        edges.push((id(r, c, 1, a), id(r, c + 1, 1, a)));
                    }
                }
            }
        }
        let mut g = Self::from_edges(2 * m * n * t, edges)?;
        g.topology = Topology::Chimera { m, n, t };
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, ns)| ns.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Edge list: a `# chimera m n t` tag when applicable, the node count,
    /// then one `a b` line per edge with `a < b`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Topology::Chimera { m, n, t } = self.topology {
            writeln!(out, "# chimera {m} {n} {t}").unwrap();
        }
        writeln!(out, "{}", self.node_count()).unwrap();
        for (a, b) in self.edges() {
            writeln!(out, "{a} {b}").unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut topology = Topology::Custom;
        let mut node_count = None;
        let mut edges = Vec::new();
        for (ln, line) in text.lines().enumerate().map(|(k, l)| (k + 1, l.trim())) {
            if line.is_empty() {
                continue;
            }
            if let Some(tag) = line.strip_prefix('#') {
                let parts: Vec<&str> = tag.split_whitespace().collect();
                if let ["chimera", m, n, t] = parts.as_slice() {
                    let p = |s: &str| {
                        s.parse::<usize>().map_err(|_| QahmError::Parse {
                            line: ln,
                            message: format!("bad chimera dimension `{s}`"),
                        })
                    };
                    topology = Topology::Chimera {
                        m: p(m)?,
                        n: p(n)?,
                        t: p(t)?,
                    };
                }
                continue;
            }
            let nums: Vec<usize> = line
                .split_whitespace()
                .map(|s| {
                    s.parse().map_err(|_| QahmError::Parse {
                        line: ln,
                        message: format!("cannot parse `{s}`"),
                    })
                })
                .collect::<Result<_>>()?;
            match (node_count, nums.as_slice()) {
                (None, [count]) => node_count = Some(*count),
                (Some(_), [a, b]) => edges.push((*a, *b)),
                _ => {
                    return Err(QahmError::Parse {
                        line: ln,
                        message: "expected a node count then `a b` edge lines".into(),
                    })
                }
            }
        }
        let node_count = node_count.ok_or(QahmError::Parse {
            line: 1,
            message: "missing node count".into(),
        })?;
        let mut g = Self::from_edges(node_count, edges)?;
        if let Topology::Chimera { m, n, t } = topology {
            let reference = Self::chimera(m, n, t)?;
            if reference.adjacency != g.adjacency {
                return Err(QahmError::Format("edge list does not match its chimera tag".into()));
            }
        }
        g.topology = topology;
        Ok(g)
    }
}

/// One chain of physical qubits per logical variable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Embedding {
    chains: Vec<Vec<usize>>,
    hardware: HardwareGraph,
    offsets: Vec<usize>,
}

impl Embedding {
    /// Builds and validates an embedding of the complete graph on `chains.len()` vertices.
    pub fn new(chains: Vec<Vec<usize>>, hardware: HardwareGraph) -> Result<Self> {
        let e = Self::from_chains_unchecked(chains, hardware);
        e.validate()?;
        Ok(e)
    }

    fn from_chains_unchecked(chains: Vec<Vec<usize>>, hardware: HardwareGraph) -> Self {
        let mut offsets = Vec::with_capacity(chains.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for c in &chains {
            acc += c.len();
            offsets.push(acc);
        }
        Embedding {
            chains,
            hardware,
            offsets,
        }
    }

    /// Checks that chains are nonempty, disjoint, connected and pairwise adjacent.
    pub fn validate(&self) -> Result<()> {
        let hw = &self.hardware;
        let mut owner = vec![usize::MAX; hw.node_count()];
        for (i, chain) in self.chains.iter().enumerate() {
            if chain.is_empty() {
                return Err(QahmError::InvalidEmbedding(format!("chain {i} is empty")));
            }
            for &q in chain {
                if q >= hw.node_count() {
                    return Err(QahmError::InvalidEmbedding(format!(
                        "qubit {q} is not in the hardware graph"
                    )));
                }
                if owner[q] != usize::MAX {
                    return Err(QahmError::InvalidEmbedding(format!(
                        "qubit {q} is shared by chains {} and {i}",
                        owner[q]
                    )));
                }
                owner[q] = i;
            }
        }
        for (i, chain) in self.chains.iter().enumerate() {
            let mut seen = BTreeSet::from([chain[0]]);
            let mut queue = VecDeque::from([chain[0]]);
            while let Some(q) = queue.pop_front() {
                for &r in hw.neighbors(q) {
                    if owner[r] == i && seen.insert(r) {
                        queue.push_back(r);
                    }
                }
            }
            if seen.len() != chain.len() {
                return Err(QahmError::InvalidEmbedding(format!("chain {i} is not connected")));
            }
        }
        let n = self.chains.len();
        let mut covered = vec![false; n * n];
        for (a, b) in hw.edges() {
            let (i, j) = (owner[a], owner[b]);
            if i != usize::MAX && j != usize::MAX && i != j {
                covered[i * n + j] = true;
                covered[j * n + i] = true;
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                if !covered[i * n + j] {
                    return Err(QahmError::InvalidEmbedding(format!(
                        "no hardware edge between chains {i} and {j}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn logical_count(&self) -> usize {
        self.chains.len()
    }

    pub fn physical_count(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn chains(&self) -> &[Vec<usize>] {
        &self.chains
    }

    pub fn chain_sizes(&self) -> Vec<usize> {
        self.chains.iter().map(Vec::len).collect()
    }

    pub fn hardware(&self) -> &HardwareGraph {
        &self.hardware
    }

    /// Copies each logical spin onto every qubit of its chain.
    pub fn replica_map(&self, u: &SpinVector) -> Result<SpinVector> {
        check_len("logical vector", self.logical_count(), u.len())?;
        let mut z = Vec::with_capacity(self.physical_count());
        for (i, chain) in self.chains.iter().enumerate() {
            z.extend(std::iter::repeat_n(u[i], chain.len()));
        }
        Ok(SpinVector::from_vec_unchecked(z))
    }

    /// Sign of each chain sum; exact ties are resolved by a fair coin.
    pub fn majority_vote<R: Rng + ?Sized>(&self, z: &SpinVector, rng: &mut R) -> Result<SpinVector> {
        check_len("physical vector", self.physical_count(), z.len())?;
        let zs = z.as_slice();
        let u = self
            .offsets
            .windows(2)
            .map(|w| {
                let sum: f64 = zs[w[0]..w[1]].iter().sum();
                match sum.partial_cmp(&0.0) {
                    Some(Ordering::Greater) => 1.0,
                    Some(Ordering::Less) => -1.0,
                    _ => {
                        if rng.random::<bool>() {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                }
            })
            .collect();
        Ok(SpinVector::from_vec_unchecked(u))
    }

    /// The physical model realizing `logical` on this embedding.
    ///
    /// Each field is split evenly across its chain, each logical coupling is
    /// split evenly across the hardware edges joining the two chains, and
    /// every hardware edge inside a chain gets coupling `-chain_strength`.
    pub fn program_hamiltonian(&self, logical: &IsingModel, chain_strength: f64) -> Result<IsingModel> {
        check_len("logical model", self.logical_count(), logical.n())?;
        if !(chain_strength > 0.0 && chain_strength.is_finite()) {
            return Err(QahmError::InvalidParameter(format!(
                "chain strength must be positive, got {chain_strength}"
            )));
        }
        let hw = &self.hardware;
        let mut phys_index = vec![usize::MAX; hw.node_count()];
        let mut owner = vec![usize::MAX; hw.node_count()];
        for (i, chain) in self.chains.iter().enumerate() {
            for (k, &q) in chain.iter().enumerate() {
                phys_index[q] = self.offsets[i] + k;
                owner[q] = i;
            }
        }
        let mut physical = IsingModel::new(self.physical_count(), logical.beta(), logical.gamma())?;
        for (i, chain) in self.chains.iter().enumerate() {
            let h = logical.field(i) / chain.len() as f64;
            for k in 0..chain.len() {
                physical.set_field(self.offsets[i] + k, h);
            }
        }
        let n = self.logical_count();
        let mut between: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n * n];
        for (a, b) in hw.edges() {
            let (i, j) = (owner[a], owner[b]);
            if i == usize::MAX || j == usize::MAX {
                continue;
            }
            let (pa, pb) = (phys_index[a], phys_index[b]);
            if i == j {
                physical.set_coupling(pa, pb, -chain_strength)?;
            } else {
                let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                between[lo * n + hi].push((pa, pb));
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                let edges = &between[i * n + j];
                let share = logical.coupling(i, j) / edges.len().max(1) as f64;
                for &(pa, pb) in edges {
                    physical.set_coupling(pa, pb, share)?;
                }
            }
        }
        Ok(physical)
    }

    /// One line per logical variable listing its physical qubit ids.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for chain in &self.chains {
            let ids: Vec<String> = chain.iter().map(usize::to_string).collect();
            writeln!(out, "{}", ids.join(" ")).unwrap();
        }
        out
    }

    pub fn from_text(text: &str, hardware: HardwareGraph) -> Result<Self> {
        let chains = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .map(|(ln, l)| {
                l.split_whitespace()
                    .map(|s| {
                        s.parse().map_err(|_| QahmError::Parse {
                            line: ln + 1,
                            message: format!("cannot parse qubit id `{s}`"),
                        })
                    })
                    .collect::<Result<Vec<usize>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(chains, hardware)
    }
}

/// Search limits for [`find_embedding`].
#[derive(Clone, Copy, Debug)]
pub struct EmbeddingSearch {
    pub max_restarts: usize,
    /// Rerouting rounds per restart.
    pub max_rounds: usize,
    /// Rounds without fewer overlapping qubits before giving up on a restart.
    pub patience: usize,
    /// Extra cost per other chain already occupying a qubit.
    pub penalty: f64,
    /// Congestion history added per round to each qubit per extra chain.
    pub history_step: f64,
    /// Start chimera searches from the native clique layout when it fits.
    pub chimera_layout: bool,
}

impl Default for EmbeddingSearch {
    fn default() -> Self {
        EmbeddingSearch {
            max_restarts: 100,
            max_rounds: 400,
            patience: 40,
            penalty: 1000.0,
            history_step: 0.3,
            chimera_layout: true,
        }
    }
}

/// Embeds `K_{n_logical}` into `hw` with the default search limits.
pub fn find_embedding<R: Rng + ?Sized>(n_logical: usize, hw: &HardwareGraph, rng: &mut R) -> Result<Embedding> {
    find_embedding_with(n_logical, hw, EmbeddingSearch::default(), rng)
}

/// Randomized chain growth with restarts.
///
/// On chimera hardware large enough for the native clique layout, each
/// restart draws a random placement of that layout (cell sub-grid, grid
/// reflections and transposition, intra-cell index permutation, slot subset,
/// label order). Otherwise each restart places variables in random order,
/// growing every chain from a free root qubit as the union of cheapest paths
/// to the chains already placed, then rips up and reroutes chains with
/// congestion costs (present overlap plus accumulated history) until no qubit
/// is shared.
pub fn find_embedding_with<R: Rng + ?Sized>(
    n_logical: usize,
    hw: &HardwareGraph,
    search: EmbeddingSearch,
    rng: &mut R,
) -> Result<Embedding> {
    if n_logical == 0 {
        return Err(QahmError::InvalidParameter("cannot embed an empty graph".into()));
    }
    if n_logical > hw.node_count() {
        return Err(QahmError::EmbeddingNotFound { n_logical, restarts: 0 });
    }
    let base: u64 = rng.random();
    for restart in 0..search.max_restarts {
        let mut srng = stream(base, &[restart as u64]);
        let chains = match hw.topology() {
            Topology::Chimera { m, n, t } if search.chimera_layout && n_logical <= t * m.min(n) => {
                Some(chimera_clique_layout(m, n, t, n_logical, &mut srng))
            }
            _ => Router::new(hw, n_logical, &search).run(&search, &mut srng),
        };
        match chains.map(|c| Embedding::new(c, hw.clone())) {
            Some(Ok(e)) => {
                info!(
                    "embedded K_{n_logical} on restart {restart}: {} qubits, chains {}..{}",
                    e.physical_count(),
                    e.chain_sizes().iter().min().unwrap(),
                    e.chain_sizes().iter().max().unwrap()
                );
                return Ok(e);
            }
            Some(Err(err)) => debug!("embedding restart {restart} produced an invalid layout: {err}"),
            None => debug!("embedding restart {restart} failed"),
        }
    }
    Err(QahmError::EmbeddingNotFound {
        n_logical,
        restarts: search.max_restarts,
    })
}

/// L-shaped chains on an `s x s` block of cells, `s = ceil(n_logical / t)`.
///
/// Slot `(a, k)` takes side-0 index `k` in column `a`, rows `0..=a`, and
/// side-1 index `k` in row `a`, columns `a..s`; the two halves meet in cell
/// `(a, a)`. Any two slots meet in cell `(min, max)`.
fn chimera_clique_layout(m: usize, n: usize, t: usize, n_logical: usize, rng: &mut StreamRng) -> Vec<Vec<usize>> {
    let s = n_logical.div_ceil(t);
    let (r0, c0) = (rng.random_range(0..=m - s), rng.random_range(0..=n - s));
    let (flip_r, flip_c, transpose) = (rng.random::<bool>(), rng.random::<bool>(), rng.random::<bool>());
    let mut perm_k: Vec<usize> = (0..t).collect();
    perm_k.shuffle(rng);
    let id = |r: usize, c: usize, side: usize, k: usize| {
        let (r, c, side) = if transpose { (c, r, 1 - side) } else { (r, c, side) };
        let r = if flip_r { s - 1 - r } else { r };
        let c = if flip_c { s - 1 - c } else { c };
        (((r0 + r) * n + c0 + c) * 2 + side) * t + perm_k[k]
    };
    let mut slots: Vec<(usize, usize)> = (0..s).flat_map(|a| (0..t).map(move |k| (a, k))).collect();
    slots.shuffle(rng);
    slots.truncate(n_logical);
    slots
        .into_iter()
        .map(|(a, k)| {
            let mut chain: Vec<usize> = (0..=a)
                .map(|r| id(r, a, 0, k))
                .chain((a..s).map(|c| id(a, c, 1, k)))
                .collect();
            chain.sort_unstable();
            chain
        })
        .collect()
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry(f64, usize);

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Router<'a> {
    hw: &'a HardwareGraph,
    chains: Vec<Vec<usize>>,
    usage: Vec<u32>,
    penalty: f64,
    history_step: f64,
    /// Accumulated congestion per qubit over past rounds.
    history: Vec<f64>,
    dist: Vec<f64>,
    pred: Vec<usize>,
    preds: Vec<Vec<usize>>,
    heap: BinaryHeap<HeapEntry>,
}

impl<'a> Router<'a> {
    fn new(hw: &'a HardwareGraph, n_logical: usize, search: &EmbeddingSearch) -> Self {
        let nodes = hw.node_count();
        Router {
            hw,
            chains: vec![Vec::new(); n_logical],
            usage: vec![0; nodes],
            penalty: search.penalty,
            history_step: search.history_step,
            history: vec![0.0; nodes],
            dist: vec![0.0; nodes],
            pred: vec![0; nodes],
            preds: Vec::new(),
            heap: BinaryHeap::new(),
        }
    }

    fn cost(&self, q: usize) -> f64 {
        (1.0 + self.history[q]) * (1.0 + self.penalty * self.usage[q] as f64)
    }

    fn overlap(&self) -> usize {
        self.usage.iter().map(|&u| u.saturating_sub(1) as usize).sum()
    }

    fn qubits(&self) -> usize {
        self.usage.iter().filter(|&&u| u > 0).count()
    }

    /// Node-weighted Dijkstra from the qubits of chain `y`; fills `dist` and `pred`.
    fn shortest_from(&mut self, y: usize) {
        self.dist.fill(f64::INFINITY);
        self.heap.clear();
        for &q in &self.chains[y] {
            self.dist[q] = 0.0;
            self.pred[q] = q;
            self.heap.push(HeapEntry(0.0, q));
        }
        while let Some(HeapEntry(d, q)) = self.heap.pop() {
            if d > self.dist[q] {
                continue;
            }
            for &r in self.hw.neighbors(q) {
                let nd = d + self.cost(r);
                if nd < self.dist[r] {
                    self.dist[r] = nd;
                    self.pred[r] = q;
                    self.heap.push(HeapEntry(nd, r));
                }
            }
        }
    }

    fn place(&mut self, x: usize, rng: &mut StreamRng) {
        for &q in &std::mem::take(&mut self.chains[x]) {
            self.usage[q] -= 1;
        }
        let placed: Vec<usize> = (0..self.chains.len())
            .filter(|&y| y != x && !self.chains[y].is_empty())
            .collect();
        let nodes = self.hw.node_count();
        let min_use = *self.usage.iter().min().unwrap();
        if placed.is_empty() {
            let free: Vec<usize> = (0..nodes).filter(|&q| self.usage[q] == min_use).collect();
            let q = *free.choose(rng).unwrap();
            self.chains[x] = vec![q];
            self.usage[q] += 1;
            return;
        }
        // Root cost: sum over placed chains of the path cost, counting the
        // root's own weight once.
        let own: Vec<f64> = (0..nodes).map(|q| self.cost(q)).collect();
        let mut total = vec![0.0; nodes];
        self.preds.resize_with(placed.len(), Vec::new);
        for (k, &y) in placed.iter().enumerate() {
            self.shortest_from(y);
            for q in 0..nodes {
                let d = self.dist[q];
                total[q] += if d > 0.0 { d - own[q] } else { d };
            }
            std::mem::swap(&mut self.preds[k], &mut self.pred);
            if self.pred.len() != nodes {
                self.pred = vec![0; nodes];
            }
        }
        // Roots come from the least used qubits so a chain never starts
        // inside another one while free qubits remain.
        let mut best = f64::INFINITY;
        let mut roots = Vec::new();
        for q in (0..nodes).filter(|&q| self.usage[q] == min_use) {
            let t = total[q] + own[q];
            if t < best * (1.0 - 1e-12) {
                best = t;
                roots.clear();
                roots.push(q);
            } else if t <= best * (1.0 + 1e-12) {
                roots.push(q);
            }
        }
        let root = *roots.choose(rng).unwrap();
        let mut members = BTreeSet::from([root]);
        for (k, &y) in placed.iter().enumerate() {
            let pred = &self.preds[k];
            let target = &self.chains[y];
            let mut q = root;
            while !target.contains(&q) {
                members.insert(q);
                let p = pred[q];
                if p == q {
                    break;
                }
                q = p;
            }
        }
        let chain: Vec<usize> = members.into_iter().collect();
        for &q in &chain {
            self.usage[q] += 1;
        }
        self.chains[x] = chain;
    }

    fn run(&mut self, search: &EmbeddingSearch, rng: &mut StreamRng) -> Option<Vec<Vec<usize>>> {
        let n = self.chains.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        for &x in &order {
            self.place(x, rng);
        }
        let mut best = self.overlap();
        let mut stale = 0;
        for round in 0..search.max_rounds {
            if self.overlap() == 0 {
                break;
            }
            for (h, &u) in self.history.iter_mut().zip(&self.usage) {
                if u > 1 {
                    *h += self.history_step * (u - 1) as f64;
                }
            }
            order.shuffle(rng);
            for &x in &order {
                self.place(x, rng);
            }
            let o = self.overlap();
            debug!("round {round}: overlap {o}, qubits {}", self.qubits());
            if o < best {
                best = o;
                stale = 0;
            } else {
                stale += 1;
                if stale >= search.patience {
                    return None;
                }
            }
        }
        if self.overlap() != 0 {
            return None;
        }
        Some(std::mem::take(&mut self.chains))
    }
}
