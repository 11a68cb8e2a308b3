//! Degree partitions: verification, randomized construction by whole-assignment
//! rejection, and the parameter formulas used by the block samplers.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Result, SpinError};
use crate::graph::Graph;
use crate::rng::StreamSeed;

/// `k` disjoint (possibly empty) blocks. The cover is the union of the blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPartition")]
pub struct Partition {
    k: usize,
    blocks: Vec<Vec<usize>>,
}

#[derive(Deserialize)]
struct RawPartition {
    k: usize,
    blocks: Vec<Vec<usize>>,
}

impl TryFrom<RawPartition> for Partition {
    type Error = SpinError;
    fn try_from(raw: RawPartition) -> Result<Self> {
        Partition::new(raw.k, raw.blocks)
    }
}

impl Partition {
    pub fn new(k: usize, mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        if k == 0 || blocks.len() != k {
            return Err(SpinError::invalid(format!("expected {k} blocks, got {}", blocks.len())));
        }
        let mut seen = std::collections::HashSet::new();
        for b in &mut blocks {
            b.sort_unstable();
            for &v in b.iter() {
                if !seen.insert(v) {
                    return Err(SpinError::invalid(format!("vertex {v} appears in two blocks")));
                }
            }
        }
        Ok(Partition { k, blocks })
    }

    /// Builds the partition from a block label per covered vertex.
    pub fn from_labels(k: usize, cover: &[usize], labels: &[usize]) -> Result<Self> {
        let mut blocks = vec![Vec::new(); k];
        for (&v, &i) in cover.iter().zip(labels) {
            if i >= k {
                return Err(SpinError::invalid(format!("block label {i} out of range")));
            }
            blocks[i].push(v);
        }
        Partition::new(k, blocks)
    }

    pub fn trivial(cover: Vec<usize>) -> Self {
        Partition::new(1, vec![cover]).expect("single block is a partition")
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &[usize] {
        &self.blocks[i]
    }

    pub fn cover(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.blocks.iter().flatten().copied().collect();
        c.sort_unstable();
        c
    }

    pub fn cover_size(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// `U_R`, the union of the blocks indexed by `r`.
    pub fn union_of(&self, r: &[usize]) -> Vec<usize> {
        let mut u: Vec<usize> = r.iter().flat_map(|&i| self.blocks[i].iter().copied()).collect();
        u.sort_unstable();
        u
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("partition serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegreeCheck {
    pub ok: bool,
    /// Vertex and block attaining the largest `|Γ_v ∩ U_i|`.
    pub worst_vertex: usize,
    pub worst_block: usize,
    pub worst_count: usize,
    pub bound: f64,
}

fn block_labels(n: usize, p: &Partition) -> Vec<Option<usize>> {
    let mut label = vec![None; n];
    for (i, b) in p.blocks().iter().enumerate() {
        for &v in b {
            if v < n {
                label[v] = Some(i);
            }
        }
    }
    label
}

/// Largest `|Γ_v ∩ U_i|` over `vertices` and blocks.
fn worst_block_degree(graph: &Graph, p: &Partition, vertices: impl Iterator<Item = usize>) -> (usize, usize, usize) {
    let label = block_labels(graph.n(), p);
    let mut counts = vec![0usize; p.k()];
    let mut worst = (0, 0, 0);
    for v in vertices {
        counts.iter_mut().for_each(|c| *c = 0);
        for &u in graph.neighbors(v) {
            if let Some(i) = label[u] {
                counts[i] += 1;
            }
        }
        for (i, &c) in counts.iter().enumerate() {
            if c > worst.2 {
                worst = (v, i, c);
            }
        }
    }
    worst
}

/// Checks `|Γ_v ∩ U_i| ≤ (1+ξ)Δ/k` for all `v ∈ V` and blocks `i`.
pub fn verify_degree_partition(graph: &Graph, p: &Partition, xi: f64) -> DegreeCheck {
    let bound = (1.0 + xi) * graph.max_degree() as f64 / p.k() as f64;
    let (v, i, c) = worst_block_degree(graph, p, 0..graph.n());
    DegreeCheck { ok: c as f64 <= bound, worst_vertex: v, worst_block: i, worst_count: c, bound }
}

/// Every block holds at least `|cover|/(2k)` vertices.
pub fn verify_balanced(p: &Partition) -> bool {
    let min = p.cover_size() as f64 / (2 * p.k()) as f64;
    p.blocks().iter().all(|b| b.len() as f64 >= min)
}

/// Blocks cover exactly the left side and every right vertex has at most
/// `bound` neighbours in each block.
pub fn verify_left_partition(graph: &Graph, p: &Partition, bound: usize) -> Result<bool> {
    let bip = graph
        .bipartition()
        .ok_or_else(|| SpinError::invalid("graph has no bipartition"))?;
    if p.cover() != bip.left {
        return Ok(false);
    }
    let (_, _, c) = worst_block_degree(graph, p, bip.right.iter().copied());
    Ok(c <= bound)
}

/// Largest degree among left vertices.
pub fn left_max_degree(graph: &Graph) -> Option<usize> {
    let bip = graph.bipartition()?;
    Some(bip.left.iter().map(|&v| graph.degree(v)).max().unwrap_or(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum PartitionMode {
    General,
    Balanced,
    /// Partition `V_L`; `bound` defaults to the left max degree.
    BipartiteLeft { bound: Option<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_round_time_factor: f64,
    pub copies: usize,
}

impl Budget {
    /// `⌈log₂(2/ε)⌉` copies.
    pub fn for_failure_probability(eps: f64) -> Self {
        let copies = (2.0 / eps).log2().ceil().max(1.0) as usize;
        Budget { max_round_time_factor: 2.0, copies }
    }
}

impl Default for Budget {
    fn default() -> Self {
        Budget::for_failure_probability(0.01)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstructionStats {
    /// Rounds used by each copy that ran (the last one succeeded on success).
    pub rounds_per_copy: Vec<u64>,
    pub total_rounds: u64,
    pub rounds_cap: u64,
    /// Union-bound estimate of the failure probability of one round.
    pub round_failure_bound: f64,
    /// Whether the local lemma condition guarantees existence.
    pub existence_guaranteed: bool,
}

/// Rounds assumed per copy when the union bound is vacuous.
const VACUOUS_EXPECTED_ROUNDS: f64 = 50.0;

fn binomial_tail_above(trials: usize, p: f64, threshold: f64) -> f64 {
    if trials == 0 || threshold >= trials as f64 {
        return 0.0;
    }
    let floor = threshold.floor();
    if floor < 0.0 {
        return 1.0;
    }
    let b = Binomial::new(p, trials as u64).expect("valid binomial");
    b.sf(floor as u64)
}

fn round_failure_bound(graph: &Graph, k: usize, xi: f64, mode: PartitionMode, bound: usize) -> f64 {
    let p = 1.0 / k as f64;
    match mode {
        PartitionMode::BipartiteLeft { .. } => {
            let bip = graph.bipartition().expect("checked by caller");
            bip.right
                .iter()
                .map(|&v| k as f64 * binomial_tail_above(graph.degree(v), p, bound as f64))
                .sum()
        }
        _ => {
            let limit = (1.0 + xi) * graph.max_degree() as f64 / k as f64;
            let mut total: f64 = (0..graph.n())
                .map(|v| k as f64 * binomial_tail_above(graph.degree(v), p, limit))
                .sum();
            if mode == PartitionMode::Balanced {
                // P(|U_i| < n/(2k)) per block
                let n = graph.n();
                let min = (n as f64 / (2 * k) as f64).ceil();
                if min > 0.0 {
                    let b = Binomial::new(p, n as u64).expect("valid binomial");
                    total += k as f64 * b.cdf(min as u64 - 1);
                }
            }
            total
        }
    }
}

fn lll_holds(graph: &Graph, k: usize, xi: f64, mode: PartitionMode) -> bool {
    match mode {
        PartitionMode::BipartiteLeft { .. } => false,
        _ => {
            let d = graph.max_degree() as f64;
            let kf = k as f64;
            k == 1 || std::f64::consts::E * d * d * kf * (-2.0 * xi * xi * d / (kf * kf)).exp() < 1.0
        }
    }
}

/// Assigns every covered vertex an independent uniform block until the
/// matching verifier accepts, running up to `budget.copies` copies with at
/// most `max_round_time_factor × expected rounds` each.
pub fn construct_partition(
    graph: &Graph,
    k: usize,
    xi: f64,
    mode: PartitionMode,
    budget: Budget,
    seed: u64,
) -> Result<(Partition, ConstructionStats)> {
    if k == 0 {
        return Err(SpinError::invalid("k must be positive"));
    }
    if budget.copies == 0 || !(budget.max_round_time_factor > 0.0) {
        return Err(SpinError::invalid("budget must allow at least one round"));
    }
    let (cover, bound) = match mode {
        PartitionMode::BipartiteLeft { bound } => {
            let bip = graph
                .bipartition()
                .ok_or_else(|| SpinError::invalid("bipartite_left mode needs a bipartite graph"))?;
            (bip.left.clone(), bound.unwrap_or_else(|| left_max_degree(graph).unwrap_or(0)))
        }
        _ => ((0..graph.n()).collect::<Vec<_>>(), 0),
    };
    let fail = round_failure_bound(graph, k, xi, mode, bound);
    let expected = if fail < 1.0 { 1.0 / (1.0 - fail) } else { VACUOUS_EXPECTED_ROUNDS };
    let cap = (budget.max_round_time_factor * expected).ceil().max(1.0) as u64;
    let mut stats = ConstructionStats {
        rounds_per_copy: Vec::new(),
        total_rounds: 0,
        rounds_cap: cap,
        round_failure_bound: fail,
        existence_guaranteed: lll_holds(graph, k, xi, mode),
    };
    let accept = |p: &Partition| -> Result<bool> {
        Ok(match mode {
            PartitionMode::General => verify_degree_partition(graph, p, xi).ok,
            PartitionMode::Balanced => verify_degree_partition(graph, p, xi).ok && verify_balanced(p),
            PartitionMode::BipartiteLeft { .. } => verify_left_partition(graph, p, bound)?,
        })
    };
    let root = StreamSeed(seed);
    let mut labels = vec![0usize; cover.len()];
    for copy in 0..budget.copies {
        let mut rng = root.child(copy as u64).rng();
        for round in 1..=cap {
            for l in labels.iter_mut() {
                *l = rng.random_range(0..k);
            }
            let p = Partition::from_labels(k, &cover, &labels)?;
            if accept(&p)? {
                stats.rounds_per_copy.push(round);
                stats.total_rounds += round;
                return Ok((p, stats));
            }
        }
        stats.rounds_per_copy.push(cap);
        stats.total_rounds += cap;
    }
    Err(SpinError::Construction { rounds: stats.total_rounds, copies: budget.copies })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionParams {
    pub k: usize,
    pub xi: f64,
    /// Smallest `Δ` from which `e·Δ²·k·exp(−2ξ²Δ/k²) < 1` holds.
    pub delta0: u64,
    /// `Δ₀ / (k² ln k)`; absent for `k = 1`.
    pub c: Option<f64>,
}

/// `e·Δ²·k·exp(−2ξ²Δ/k²)`.
pub fn lll_expression(delta: f64, k: usize, xi: f64) -> f64 {
    let kf = k as f64;
    std::f64::consts::E * delta * delta * kf * (-2.0 * xi * xi * delta / (kf * kf)).exp()
}

/// `k = ⌈4⌈M⌉/η⌉`, `ξ = 1` and the explicit local-lemma threshold `Δ₀`.
pub fn partition_parameters(m: f64, eta: f64) -> Result<PartitionParams> {
    if !(m > 0.0 && eta > 0.0 && m.is_finite() && eta.is_finite()) {
        return Err(SpinError::invalid("M and η must be positive"));
    }
    let k = (4.0 * m.ceil() / eta).ceil() as usize;
    let xi = 1.0;
    let delta0 = lll_threshold(k, xi);
    let c = (k > 1).then(|| delta0 as f64 / ((k * k) as f64 * (k as f64).ln()));
    Ok(PartitionParams { k, xi, delta0, c })
}

/// The log of the expression is increasing up to `Δ = k²/ξ²` and decreasing
/// after, and exceeds zero at `Δ = 1`, so the first crossing is permanent.
fn lll_threshold(k: usize, xi: f64) -> u64 {
    let kf = k as f64;
    let log_expr = |d: f64| 1.0 + 2.0 * d.ln() + kf.ln() - 2.0 * xi * xi * d / (kf * kf);
    let mut lo = (kf * kf / (xi * xi)).max(1.0);
    let mut hi = lo * 2.0;
    while log_expr(hi) >= 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    // bisection on integers in (lo, hi]
    let (mut lo, mut hi) = (lo.floor() as u64, hi.ceil() as u64);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if log_expr(mid as f64) < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{random_biregular, random_regular};
    use crate::rng::stream;

    #[test]
    fn verifier_examples() {
        let star = Graph::star(8);
        assert!(verify_degree_partition(&star, &Partition::trivial((0..9).collect()), 0.0).ok);
        let even = Partition::new(2, vec![vec![0, 1, 2, 3, 4], vec![5, 6, 7, 8]]).unwrap();
        assert!(verify_degree_partition(&star, &even, 1.0).ok);
        let skew = Partition::new(2, vec![vec![0, 1, 2, 3, 4, 5, 6, 7], vec![8]]).unwrap();
        let r = verify_degree_partition(&star, &skew, 0.7);
        assert!(!r.ok);
        assert_eq!((r.worst_vertex, r.worst_block, r.worst_count), (0, 0, 7));
        assert!(verify_degree_partition(&star, &skew, 0.75).ok);
    }

    #[test]
    fn balanced_examples() {
        let p = Partition::new(2, vec![(0..3).collect(), (3..10).collect()]).unwrap();
        assert!(verify_balanced(&p));
        let q = Partition::new(2, vec![vec![], (0..10).collect()]).unwrap();
        assert!(!verify_balanced(&q));
        let eq = Partition::new(2, vec![vec![0, 1], vec![2, 3]]).unwrap();
        assert!(verify_balanced(&eq));
    }

    #[test]
    fn left_partition_examples() {
        let g = Graph::complete_bipartite(1, 1);
        assert!(verify_left_partition(&g, &Partition::trivial(vec![0]), 1).unwrap());
        let g = Graph::complete_bipartite(3, 3);
        let p = Partition::new(3, vec![vec![0], vec![1], vec![2]]).unwrap();
        assert!(verify_left_partition(&g, &p, 3).unwrap());
        let whole = Partition::new(3, vec![vec![0, 1, 2, 3], vec![], vec![]]).unwrap();
        assert!(!verify_left_partition(&g, &whole, 3).unwrap());
    }

    #[test]
    fn invalid_partitions_rejected() {
        assert!(Partition::new(2, vec![vec![0, 1], vec![1]]).is_err());
        assert!(Partition::new(3, vec![vec![0]]).is_err());
        let json = r#"{"k":2,"blocks":[[0,2],[1]]}"#;
        let p: Partition = serde_json::from_str(json).unwrap();
        assert_eq!(p.to_json(), json);
        assert!(serde_json::from_str::<Partition>(r#"{"k":1,"blocks":[[0],[1]]}"#).is_err());
    }

    #[test]
    fn parameters() {
        assert_eq!(partition_parameters(2.0, 0.25).unwrap().k, 32);
        let p = partition_parameters(1.0, 0.5).unwrap();
        assert_eq!(p.k, 8);
        assert!(lll_expression(p.delta0 as f64, 8, 1.0) < 1.0);
        assert!(lll_expression(p.delta0 as f64 - 1.0, 8, 1.0) >= 1.0);
        for d in p.delta0..p.delta0 + 2000 {
            assert!(lll_expression(d as f64, 8, 1.0) < 1.0);
        }
        assert_eq!(partition_parameters(1.0, 4.0 / 3.0).unwrap().k, 3);
    }

    #[test]
    fn trivial_construction() {
        let g = Graph::cycle(7);
        let (p, stats) = construct_partition(&g, 1, 1.0, PartitionMode::General, Budget::default(), 3).unwrap();
        assert_eq!(p.k(), 1);
        assert_eq!(stats.total_rounds, 1);
    }

    #[test]
    fn regular_graph_construction() {
        let mut rng = stream(5);
        let g = random_regular(200, 32, &mut rng).unwrap();
        let mut rounds = 0;
        for seed in 0..20 {
            let (p, s) = construct_partition(&g, 4, 1.0, PartitionMode::General, Budget::default(), seed).unwrap();
            assert!(verify_degree_partition(&g, &p, 1.0).ok);
            assert_eq!(p.cover_size(), 200);
            rounds += s.total_rounds;
        }
        assert!(rounds as f64 / 20.0 <= 10.0);
        let a = construct_partition(&g, 4, 1.0, PartitionMode::Balanced, Budget::default(), 9).unwrap().0;
        let b = construct_partition(&g, 4, 1.0, PartitionMode::Balanced, Budget::default(), 9).unwrap().0;
        assert_eq!(a, b);
        assert!(verify_balanced(&a));
    }

    #[test]
    fn bipartite_construction() {
        let mut rng = stream(8);
        let g = random_biregular(120, 8, 40, 24, &mut rng).unwrap();
        let mode = PartitionMode::BipartiteLeft { bound: None };
        let (p, _) = construct_partition(&g, 6, 1.0, mode, Budget::default(), 1).unwrap();
        assert!(verify_left_partition(&g, &p, 8).unwrap());
    }

    #[test]
    fn hopeless_budget_fails_loudly() {
        let g = Graph::star(8);
        let budget = Budget { max_round_time_factor: 1.0, copies: 2 };
        let r = construct_partition(&g, 8, 0.0, PartitionMode::Balanced, budget, 0);
        assert!(matches!(r, Err(SpinError::Construction { .. })));
    }

    #[test]
    fn uniform_labels() {
        let mut rng = stream(21);
        let k = 4;
        let n = 100_000;
        let mut counts = vec![0f64; k];
        for _ in 0..n {
            counts[rng.random_range(0..k)] += 1.0;
        }
        let mean = n as f64 / k as f64;
        let sd = (n as f64 * 0.25 * 0.75).sqrt();
        assert!(counts.iter().all(|c| (c - mean).abs() < 5.0 * sd));
    }
}
