//! Self-avoiding-walk trees and recursive couplings.
//!
//! The coupling of `μ^{τ∧v←a}` and `μ^{τ∧v←b}` follows the vertex-splitting
//! construction: `v` is split into one pinned copy per neighbour
//! `u_1 < … < u_d`, the pinnings `σ_i` (copies `j ≤ i` at `b`, the rest at `a`)
//! interpolate between the two sides, and consecutive systems are coupled
//! by maximally coupling the marginal at `u_i` and recursing on
//! disagreement. The recursion is run as a transport kernel: given a sample
//! from one side it produces the coupled sample from the other, in either
//! direction.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dynamics::sample_weighted;
use crate::error::{Result, SpinError};
use crate::graph::Graph;
use crate::oracle::{enumerate, ExactDistribution};
use crate::rng::StreamSeed;
use crate::spin::{HammingWeight, PartialConfig, Spin, SpinSystem, MINUS, PLUS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SawNode {
    pub origin: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub forced: Option<Spin>,
    pub depth: usize,
}

/// Rooted at node 0; children always have larger ids than their parent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SawTree {
    pub nodes: Vec<SawNode>,
    pub source_pinning: PartialConfig,
}

pub const SAW_NODE_CAP: usize = 1 << 21;

impl SawTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes whose origin is `u`.
    pub fn copies_of(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().enumerate().filter(move |(_, n)| n.origin == u).map(|(i, _)| i)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph saw {\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let label = match n.forced {
                Some(s) => format!("{} [{}]", n.origin, if s == MINUS { "-" } else { "+" }),
                None => n.origin.to_string(),
            };
            let _ = writeln!(out, "  n{i} [label=\"{label}\"];");
        }
        for (i, n) in self.nodes.iter().enumerate() {
            for &c in &n.children {
                let _ = writeln!(out, "  n{i} -- n{c};");
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Weitz's tree of self-avoiding walks from `root`, with cycle-closing
/// leaves fixed by the vertex order and free copies of pinned vertices
/// turned into forced leaves. Returns the tree and the two-spin system on
/// it (same fields and interactions, forced leaves pinned).
pub fn build_saw_tree(system: &SpinSystem, root: usize, depth_cap: usize) -> Result<(SawTree, SpinSystem)> {
    if system.q() != 2 {
        return Err(SpinError::invalid("SAW trees are defined for two-spin systems"));
    }
    if root >= system.n() {
        return Err(SpinError::invalid(format!("root {root} out of range")));
    }
    let g = system.graph();
    let mut nodes = vec![SawNode { origin: root, parent: None, children: Vec::new(), forced: system.pinned(root), depth: 0 }];
    // explicit DFS keeping the current walk
    let mut on_path = vec![usize::MAX; system.n()];
    let mut path: Vec<usize> = Vec::new();
    enum Frame {
        Enter(usize),
        Leave(usize),
    }
    let mut stack = vec![Frame::Enter(0)];
    while let Some(frame) = stack.pop() {
        match frame {
            Frame::Leave(id) => {
                on_path[nodes[id].origin] = usize::MAX;
                path.pop();
            }
            Frame::Enter(id) => {
                if nodes[id].forced.is_some() {
                    continue;
                }
                let w = nodes[id].origin;
                let depth = nodes[id].depth;
                on_path[w] = path.len();
                path.push(w);
                stack.push(Frame::Leave(id));
                let parent_origin = nodes[id].parent.map(|p| nodes[p].origin);
                let mut kids = Vec::new();
                for u in g.neighbors_in_order(w) {
                    if Some(u) == parent_origin {
                        continue;
                    }
                    if depth + 1 > depth_cap {
                        return Err(SpinError::DepthCap { cap: depth_cap });
                    }
                    if nodes.len() >= SAW_NODE_CAP {
                        return Err(SpinError::SizeCap { states: nodes.len() as f64, cap: SAW_NODE_CAP as u64 });
                    }
                    let forced = if on_path[u] != usize::MAX {
                        // cycle closing: u = v_i, next on path v_{i+1}, last v_{ℓ-1} = w
                        let next = path[on_path[u] + 1];
                        Some(if g.precedes(w, next) { MINUS } else { PLUS })
                    } else {
                        system.pinned(u)
                    };
                    let cid = nodes.len();
                    nodes.push(SawNode { origin: u, parent: Some(id), children: Vec::new(), forced, depth: depth + 1 });
                    nodes[id].children.push(cid);
                    kids.push(cid);
                }
                for &c in kids.iter().rev() {
                    stack.push(Frame::Enter(c));
                }
            }
        }
    }
    let tree = SawTree { nodes, source_pinning: system.pinning() };
    let tsys = tree_system(system, &tree)?;
    Ok((tree, tsys))
}

fn tree_system(system: &SpinSystem, tree: &SawTree) -> Result<SpinSystem> {
    let g = system.graph();
    let mut edges = Vec::with_capacity(tree.len().saturating_sub(1));
    let mut inter = Vec::with_capacity(edges.capacity());
    for (i, n) in tree.nodes.iter().enumerate() {
        if let Some(p) = n.parent {
            edges.push((p, i));
        }
    }
    let tg = Graph::new(tree.len(), &edges)?;
    for &(a, b) in tg.edges() {
        let e = g
            .edge_id(tree.nodes[a].origin, tree.nodes[b].origin)
            .expect("tree edges come from graph edges");
        inter.push(system.interaction(e).to_vec());
    }
    let domain = tree.nodes.iter().map(|n| system.domain(n.origin).to_vec()).collect();
    let field = tree.nodes.iter().map(|n| system.field(n.origin).to_vec()).collect();
    let sys = SpinSystem::new(tg, system.q(), domain, field, inter)?.with_kind(system.kind());
    let forced = PartialConfig::from_pairs(tree.nodes.iter().enumerate().filter_map(|(i, n)| n.forced.map(|s| (i, s))));
    sys.condition(&forced)
}

/// Normalised subtree messages `Z_x(s) ∝ b(s) ∏_c Σ_t A(s,t) Z_c(t)`; forced
/// nodes carry indicators.
fn subtree_messages(tree: &SawTree, tsys: &SpinSystem) -> Result<Vec<Vec<f64>>> {
    let q = tsys.q();
    let mut z = vec![vec![0.0; q]; tree.len()];
    for i in (0..tree.len()).rev() {
        let node = &tree.nodes[i];
        if let Some(s) = tsys.pinned(i) {
            z[i][s as usize] = 1.0;
            continue;
        }
        let mut m: Vec<f64> = (0..q).map(|s| if tsys.in_domain(i, s as Spin) { tsys.field(i)[s] } else { 0.0 }).collect();
        for &c in &node.children {
            let e = tsys.graph().edge_id(i, c).expect("tree edge");
            for (s, ms) in m.iter_mut().enumerate() {
                let sum: f64 = (0..q).map(|t| tsys.edge_weight(e, s as Spin, t as Spin) * z[c][t]).sum();
                *ms *= sum;
            }
        }
        let total: f64 = m.iter().sum();
        if !(total > 0.0) {
            return Err(SpinError::Infeasible(format!("subtree at node {i} has zero weight")));
        }
        z[i] = m.into_iter().map(|x| x / total).collect();
    }
    Ok(z)
}

/// Root marginal of the tree system by leaf-to-root recursion.
pub fn saw_root_marginal(tree: &SawTree, tsys: &SpinSystem) -> Result<Vec<f64>> {
    Ok(subtree_messages(tree, tsys)?.swap_remove(0))
}

#[derive(Debug, Clone, Serialize)]
pub struct TreeInfluence {
    /// `|Ψ(root, x)|` per node (root entry is 1 unless the root is forced).
    pub per_node: Vec<f64>,
    /// Signed `Ψ(root, x)`.
    pub signed: Vec<f64>,
    /// Sum of `|Ψ|` per depth.
    pub per_level: Vec<f64>,
}

/// Influences from the root, multiplied edge by edge. Forced nodes and
/// their descendants get 0, as do edges whose conditional is undefined.
pub fn tree_influence(tree: &SawTree, tsys: &SpinSystem) -> Result<TreeInfluence> {
    if tsys.q() != 2 {
        return Err(SpinError::invalid("influences need q = 2"));
    }
    let z = subtree_messages(tree, tsys)?;
    let mut signed = vec![0.0; tree.len()];
    signed[0] = if tsys.is_free(0) { 1.0 } else { 0.0 };
    for i in 1..tree.len() {
        let p = tree.nodes[i].parent.expect("non-root has a parent");
        if signed[p] == 0.0 || !tsys.is_free(i) {
            continue;
        }
        let e = tsys.graph().edge_id(p, i).expect("tree edge");
        let plus_given = |s: Spin| -> Option<f64> {
            let a = tsys.edge_weight(e, s, MINUS) * z[i][0];
            let b = tsys.edge_weight(e, s, PLUS) * z[i][1];
            (a + b > 0.0).then(|| b / (a + b))
        };
        if let (Some(hi), Some(lo)) = (plus_given(PLUS), plus_given(MINUS)) {
            signed[i] = signed[p] * (hi - lo);
        }
    }
    let per_node: Vec<f64> = signed.iter().map(|x| x.abs()).collect();
    let depth = tree.nodes.iter().map(|n| n.depth).max().unwrap_or(0);
    let mut per_level = vec![0.0; depth + 1];
    for (n, x) in tree.nodes.iter().zip(&per_node) {
        per_level[n.depth] += x;
    }
    Ok(TreeInfluence { per_node, signed, per_level })
}

/// `Σ_{copies û of u} |Ψ(root, û)|` for every vertex `u` of the source graph.
pub fn summed_copy_influence(tree: &SawTree, infl: &TreeInfluence, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (node, x) in tree.nodes.iter().zip(&infl.per_node) {
        out[node.origin] += x;
    }
    out
}

/// Maximal coupling with deterministic tie-breaking: `min(p,q)` on the
/// diagonal, residual mass matched by the north-west corner rule in
/// ascending spin order. Row-major `|p| × |q|`. The construction commutes
/// with transposition.
pub fn maximal_coupling(p: &[f64], q: &[f64]) -> Vec<f64> {
    let k = p.len();
    debug_assert_eq!(k, q.len());
    let mut joint = vec![0.0; k * k];
    let mut rp: Vec<f64> = Vec::with_capacity(k);
    let mut rq: Vec<f64> = Vec::with_capacity(k);
    for i in 0..k {
        let m = p[i].min(q[i]);
        joint[i * k + i] = m;
        rp.push(p[i] - m);
        rq.push(q[i] - m);
    }
    let (mut i, mut j) = (0, 0);
    while i < k && j < k {
        if rp[i] <= 0.0 {
            i += 1;
            continue;
        }
        if rq[j] <= 0.0 {
            j += 1;
            continue;
        }
        let m = rp[i].min(rq[j]);
        joint[i * k + j] += m;
        rp[i] -= m;
        rq[j] -= m;
    }
    joint
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CouplingSample {
    pub x: Vec<Spin>,
    pub y: Vec<Spin>,
    pub discrepancy: Vec<usize>,
    pub cost: u64,
}

impl CouplingSample {
    pub fn new(x: Vec<Spin>, y: Vec<Spin>, rho: &HammingWeight) -> Self {
        let discrepancy = (0..x.len()).filter(|&i| x[i] != y[i]).collect();
        let cost = rho.distance(&x, &y);
        CouplingSample { x, y, discrepancy, cost }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PairRule {
    /// Canonical pair `(+, −)` at every level; direction follows the side
    /// the current sample is on.
    TwoSpin,
    /// Canonical pair is (current value, new value): always forward.
    Coloring,
}

/// Exact distributions and site marginals memoised by system content.
#[derive(Default)]
struct ExactCache {
    dists: HashMap<u64, Arc<ExactDistribution>>,
    marginals: HashMap<(u64, usize), Arc<Vec<f64>>>,
}

impl ExactCache {
    fn dist(&mut self, sys: &SpinSystem, key: u64) -> Result<Arc<ExactDistribution>> {
        if let Some(d) = self.dists.get(&key) {
            return Ok(d.clone());
        }
        let d = Arc::new(enumerate(sys)?);
        self.dists.insert(key, d.clone());
        Ok(d)
    }

    fn marginal(&mut self, sys: &SpinSystem, v: usize) -> Result<Arc<Vec<f64>>> {
        let key = sys.fingerprint();
        if let Some(m) = self.marginals.get(&(key, v)) {
            return Ok(m.clone());
        }
        let d = self.dist(sys, key)?;
        let m = Arc::new(d.site_marginal(v, sys.q())?);
        self.marginals.insert((key, v), m.clone());
        Ok(m)
    }
}

/// Reusable recursive-coupling sampler for one system.
pub struct RecursiveCoupler {
    system: SpinSystem,
    rule: PairRule,
    cache: ExactCache,
}

impl RecursiveCoupler {
    /// Two-spin coupling of `v←−` (X) and `v←+` (Y).
    pub fn two_spin(system: &SpinSystem) -> Result<Self> {
        if system.q() != 2 {
            return Err(SpinError::invalid("two-spin coupling needs q = 2"));
        }
        Ok(RecursiveCoupler { system: system.clone(), rule: PairRule::TwoSpin, cache: ExactCache::default() })
    }

    /// List-colouring coupling; the graph must be triangle-free.
    pub fn coloring(system: &SpinSystem) -> Result<Self> {
        if let Some((a, b, c)) = find_triangle(system.graph()) {
            return Err(SpinError::invalid(format!("graph has a triangle {a}-{b}-{c}")));
        }
        Ok(RecursiveCoupler { system: system.clone(), rule: PairRule::Coloring, cache: ExactCache::default() })
    }

    /// Couples `μ^{pinning∧v←a}` (X) with `μ^{pinning∧v←b}` (Y).
    pub fn sample(&mut self, pinning: &PartialConfig, v: usize, a: Spin, b: Spin, rng: &mut dyn RngCore) -> Result<(Vec<Spin>, Vec<Spin>)> {
        let base = self.system.condition(pinning)?;
        if !base.is_free(v) {
            return Err(SpinError::invalid(format!("vertex {v} is pinned")));
        }
        if !base.in_domain(v, a) || !base.in_domain(v, b) {
            return Err(SpinError::Domain { vertex: v, value: if base.in_domain(v, a) { b } else { a } as usize });
        }
        let (start, forward) = match self.rule {
            // Y ~ v←+ is drawn exactly and carried to the v←− side
            PairRule::TwoSpin => (b, a == PLUS),
            PairRule::Coloring => (a, true),
        };
        let side = base.pin(v, start)?;
        let key = side.fingerprint();
        let dist = self.cache.dist(&side, key)?;
        let s0 = dist.sample(rng).to_vec();
        let (ca, cb) = match self.rule {
            PairRule::TwoSpin => (PLUS, MINUS),
            PairRule::Coloring => (a, b),
        };
        let other = if a == b {
            s0.clone()
        } else {
            // under TwoSpin with (a,b) = (−,+) the start is + and we move forward
            let fwd = match self.rule {
                PairRule::TwoSpin => start == PLUS,
                PairRule::Coloring => forward,
            };
            self.transport(&base, v, ca, cb, fwd, s0.clone(), rng, 0)?
        };
        Ok(if start == a { (s0, other) } else { (other, s0) })
    }

    /// Carries `x ~ sys^{root←a}` to the coupled `y ~ sys^{root←b}` (forward)
    /// or `x ~ sys^{root←b}` to `sys^{root←a}` (reverse).
    #[allow(clippy::too_many_arguments)]
    fn transport(
        &mut self,
        sys: &SpinSystem,
        root: usize,
        a: Spin,
        b: Spin,
        forward: bool,
        mut x: Vec<Spin>,
        rng: &mut dyn RngCore,
        depth: usize,
    ) -> Result<Vec<Spin>> {
        if depth > sys.n() {
            return Err(SpinError::DepthCap { cap: sys.n() });
        }
        let nbrs = sys.graph().neighbors(root).to_vec();
        let order = sys.graph().neighbors_in_order(root);
        let d = order.len();
        // boundary for σ_i, listed in adjacency order
        let sigma = |i: usize| -> Vec<Spin> {
            nbrs.iter()
                .map(|u| {
                    let j = order.iter().position(|w| w == u).expect("neighbour") + 1;
                    if j <= i {
                        b
                    } else {
                        a
                    }
                })
                .collect()
        };
        let steps: Vec<usize> = if forward { (1..=d).collect() } else { (1..=d).rev().collect() };
        for i in steps {
            let u = order[i - 1];
            if !sys.is_free(u) {
                continue;
            }
            let (cur_i, next_i) = if forward { (i - 1, i) } else { (i, i - 1) };
            let w_cur = sys.split_vertex(root, &sigma(cur_i), a);
            let w_next = sys.split_vertex(root, &sigma(next_i), a);
            let p_cur = self.cache.marginal(&w_cur, u)?;
            let p_next = self.cache.marginal(&w_next, u)?;
            let joint = maximal_coupling(&p_cur, &p_next);
            let q = sys.q();
            let c = x[u] as usize;
            let row = &joint[c * q..(c + 1) * q];
            let c2 = sample_weighted(row, rng)
                .ok_or_else(|| SpinError::Consistency(format!("current spin at {u} has zero marginal mass")))?;
            if c2 == c {
                continue;
            }
            let w_i = sys.split_vertex(root, &sigma(i), a);
            let (c, c2) = (c as Spin, c2 as Spin);
            let (na, nb, fwd) = match self.rule {
                PairRule::TwoSpin => (PLUS, MINUS, c == PLUS),
                PairRule::Coloring => (c, c2, true),
            };
            x = self.transport(&w_i, u, na, nb, fwd, x, rng, depth + 1)?;
            x[u] = c2;
        }
        x[root] = if forward { b } else { a };
        Ok(x)
    }
}

fn find_triangle(g: &Graph) -> Option<(usize, usize, usize)> {
    for &(u, v) in g.edges() {
        let (nu, nv) = (g.neighbors(u), g.neighbors(v));
        let (mut i, mut j) = (0, 0);
        while i < nu.len() && j < nv.len() {
            match nu[i].cmp(&nv[j]) {
                std::cmp::Ordering::Equal => return Some((u, v, nu[i])),
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
            }
        }
    }
    None
}

/// X ~ μ^{pinning∧v←−}, Y ~ μ^{pinning∧v←+}.
pub fn recursive_coupling_two_spin<R: Rng>(
    system: &SpinSystem,
    pinning: &PartialConfig,
    v: usize,
    rng: &mut R,
) -> Result<CouplingSample> {
    let (x, y) = RecursiveCoupler::two_spin(system)?.sample(pinning, v, MINUS, PLUS, rng)?;
    Ok(CouplingSample::new(x, y, &HammingWeight::unit(system.n())))
}

/// X ~ μ^{pinning∧v←a}, Y ~ μ^{pinning∧v←b} on a triangle-free graph.
pub fn recursive_coupling_coloring<R: Rng>(
    system: &SpinSystem,
    pinning: &PartialConfig,
    v: usize,
    a: Spin,
    b: Spin,
    rng: &mut R,
) -> Result<CouplingSample> {
    let (x, y) = RecursiveCoupler::coloring(system)?.sample(pinning, v, a, b, rng)?;
    Ok(CouplingSample::new(x, y, &HammingWeight::unit(system.n())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingKind {
    TwoSpin,
    Coloring,
}

/// Which pinnings `estimate_ci` tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PinningSpec {
    /// Only the system's own pinning.
    Empty,
    /// Every feasible pinning of every vertex subset of size at most `max_size`.
    Exhaustive { max_size: usize },
    /// `count` random feasible pinnings of `size` vertices.
    Random { count: usize, size: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct PairEstimate {
    pub pinning: PartialConfig,
    pub vertex: usize,
    pub a: Spin,
    pub b: Spin,
    pub mean_cost: f64,
    /// `E[H_ρ]/ρ(v)` and its empirical Bernstein interval.
    pub ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CiReport {
    /// Empirical lower bound on the coupling-independence constant.
    pub max_ratio: f64,
    pub max_ci_high: f64,
    pub pairs: Vec<PairEstimate>,
    /// Whether every tested pair stays below `target` (upper CI end).
    pub target_met: Option<bool>,
}

/// Empirical Bernstein bound for i.i.d. samples in `[0, range]` at
/// confidence `1 − δ` (two-sided).
pub fn bernstein_interval(samples: &[f64], range: f64, delta: f64) -> (f64, f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0, range);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let l = (4.0 / delta).ln();
    let half = (2.0 * var * l / n).sqrt() + 7.0 * range * l / (3.0 * (n - 1.0));
    (mean, (mean - half).max(0.0), (mean + half).min(range))
}

fn feasible_pinnings<R: Rng>(system: &SpinSystem, spec: &PinningSpec, rng: &mut R) -> Result<Vec<PartialConfig>> {
    use itertools::Itertools;
    let dist = enumerate(system)?;
    let free = system.free_vertices();
    let mut out = vec![PartialConfig::new()];
    match spec {
        PinningSpec::Empty => {}
        PinningSpec::Exhaustive { max_size } => {
            for size in 1..=(*max_size).min(free.len().saturating_sub(1)) {
                for subset in free.iter().copied().combinations(size) {
                    for tau in dist.marginal(&subset)?.support() {
                        out.push(PartialConfig::from_pairs(subset.iter().copied().zip(tau.iter().copied())));
                    }
                }
            }
        }
        PinningSpec::Random { count, size } => {
            let size = (*size).min(free.len().saturating_sub(1));
            for _ in 0..*count {
                let idx = rand::seq::index::sample(rng, free.len(), size);
                let subset: Vec<usize> = idx.iter().map(|i| free[i]).collect();
                let full = dist.sample(rng);
                out.push(PartialConfig::from_pairs(subset.iter().map(|&u| (u, full[u]))));
            }
        }
    }
    Ok(out)
}

/// Monte Carlo estimate of `max E[H_ρ(X,Y)]/ρ(v)` over tested
/// `(pinning, v, a, b)`, with empirical Bernstein intervals at `δ = 0.05`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_ci(
    system: &SpinSystem,
    rho: &HammingWeight,
    kind: CouplingKind,
    pinnings: &PinningSpec,
    max_pairs: usize,
    samples_per_pair: usize,
    target: Option<f64>,
    seed: StreamSeed,
) -> Result<CiReport> {
    if samples_per_pair == 0 {
        return Err(SpinError::invalid("need at least one sample per pair"));
    }
    let mut rng = seed.child(u64::MAX).rng();
    let mut coupler = match kind {
        CouplingKind::TwoSpin => RecursiveCoupler::two_spin(system)?,
        CouplingKind::Coloring => RecursiveCoupler::coloring(system)?,
    };
    let range: f64 = (0..system.n()).map(|v| rho.get(v) as f64).sum();
    let mut triples = Vec::new();
    for tau in feasible_pinnings(system, pinnings, &mut rng)? {
        let cond = system.condition(&tau)?;
        for v in cond.free_vertices() {
            let values: Vec<(Spin, Spin)> = match kind {
                CouplingKind::TwoSpin => vec![(MINUS, PLUS)],
                CouplingKind::Coloring => {
                    let d = cond.domain(v);
                    d.iter().flat_map(|&a| d.iter().filter(move |&&b| b > a).map(move |&b| (a, b))).collect()
                }
            };
            for (a, b) in values {
                let ok = |s: Spin| cond.pin(v, s).and_then(|c| enumerate(&c)).is_ok();
                if ok(a) && ok(b) {
                    triples.push((tau.clone(), v, a, b));
                }
            }
        }
    }
    if triples.len() > max_pairs {
        let keep = rand::seq::index::sample(&mut rng, triples.len(), max_pairs).into_vec();
        let mut keep = keep;
        keep.sort_unstable();
        triples = keep.into_iter().map(|i| triples[i].clone()).collect();
    }
    let mut pairs = Vec::with_capacity(triples.len());
    for (t, (tau, v, a, b)) in triples.into_iter().enumerate() {
        let mut prng = seed.child(t as u64).rng();
        let mut costs = Vec::with_capacity(samples_per_pair);
        for _ in 0..samples_per_pair {
            let (x, y) = coupler.sample(&tau, v, a, b, &mut prng)?;
            costs.push(rho.distance(&x, &y) as f64);
        }
        let (mean, lo, hi) = bernstein_interval(&costs, range, 0.05);
        let w = rho.get(v) as f64;
        pairs.push(PairEstimate { pinning: tau, vertex: v, a, b, mean_cost: mean, ratio: mean / w, ci_low: lo / w, ci_high: hi / w });
    }
    let max_ratio = pairs.iter().map(|p| p.ratio).fold(0.0, f64::max);
    let max_ci_high = pairs.iter().map(|p| p.ci_high).fold(0.0, f64::max);
    Ok(CiReport { max_ratio, max_ci_high, target_met: target.map(|c| max_ci_high <= c), pairs })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub pass: bool,
}

/// Pearson χ² goodness of fit of `samples` against `target`; bins with
/// expected count below 5 are pooled. Passes iff `p ≥ 1e−4`.
pub fn marginal_validity_test(samples: &[Vec<Spin>], target: &ExactDistribution) -> Result<ChiSquareResult> {
    if samples.is_empty() {
        return Err(SpinError::invalid("χ² test needs at least one sample"));
    }
    let n = samples.len() as f64;
    let mut counts = vec![0.0; target.len()];
    for s in samples {
        match target.index_of(s) {
            Some(i) => counts[i] += 1.0,
            None => return Ok(ChiSquareResult { statistic: f64::INFINITY, dof: 0, p_value: 0.0, pass: false }),
        }
    }
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (c, p) in counts.iter().zip(target.probs()) {
        let e = p * n;
        if e < 5.0 {
            pooled.0 += c;
            pooled.1 += e;
        } else {
            bins.push((*c, e));
        }
    }
    if pooled.1 > 0.0 {
        bins.push(pooled);
    }
    if bins.len() < 2 {
        return Ok(ChiSquareResult { statistic: 0.0, dof: 0, p_value: 1.0, pass: true });
    }
    let statistic: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = bins.len() - 1;
    let p_value = ChiSquared::new(dof as f64).expect("positive dof").sf(statistic);
    Ok(ChiSquareResult { statistic, dof, p_value, pass: p_value >= 1e-4 })
}

/// Projects full configurations onto the free vertices of `dist`'s
/// coordinates (identity when they are all of `V`).
pub fn project(samples: &[Vec<Spin>], vertices: &[usize]) -> Vec<Vec<Spin>> {
    samples.iter().map(|s| vertices.iter().map(|&v| s[v]).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{exact_marginal, influence_matrix};
    use crate::rng::stream;
    use crate::spin::{make_hardcore, make_list_coloring, make_two_spin};

    #[test]
    fn tree_graph_gives_isomorphic_saw_tree() {
        let g = Graph::new(5, &[(0, 1), (0, 2), (2, 3), (2, 4)]).unwrap();
        let sys = make_hardcore(g, 1.0).unwrap();
        let (t, _) = build_saw_tree(&sys, 2, 10).unwrap();
        assert_eq!(t.len(), 5);
        assert!(t.nodes.iter().all(|n| n.forced.is_none()));
    }

    #[test]
    fn triangle_leaves() {
        let sys = make_hardcore(Graph::complete(3), 1.0).unwrap();
        let (t, _) = build_saw_tree(&sys, 0, 10).unwrap();
        // 0 → 1 → 2 → [0], 0 → 2 → 1 → [0]
        assert_eq!(t.len(), 7);
        let leaves: Vec<&SawNode> = t.nodes.iter().filter(|n| n.forced.is_some()).collect();
        assert_eq!(leaves.len(), 2);
        assert!(leaves.iter().all(|n| n.origin == 0 && n.depth == 3));
        // walk 0,1,2,0: v_{i+1}=1 < v_{ℓ-1}=2 → +; walk 0,2,1,0: 2 > 1 → −
        let l1 = leaves.iter().find(|n| t.nodes[n.parent.unwrap()].origin == 2).unwrap();
        let l2 = leaves.iter().find(|n| t.nodes[n.parent.unwrap()].origin == 1).unwrap();
        assert_eq!(l1.forced, Some(PLUS));
        assert_eq!(l2.forced, Some(MINUS));
        assert!(t.to_dot().contains("0 [+]"));
    }

    #[test]
    fn cycle_four_has_two_closing_leaves() {
        let sys = make_hardcore(Graph::cycle(4), 1.0).unwrap();
        let (t, _) = build_saw_tree(&sys, 1, 10).unwrap();
        let forced: Vec<_> = t.nodes.iter().filter(|n| n.forced.is_some()).collect();
        assert_eq!(forced.len(), 2);
        assert_ne!(forced[0].forced, forced[1].forced);
    }

    #[test]
    fn free_copies_keep_their_degree() {
        let g = Graph::new(5, &[(0, 1), (1, 2), (2, 3), (3, 0), (1, 3), (3, 4)]).unwrap();
        let sys = make_two_spin(g.clone(), 0.5, 1.2, 0.9).unwrap();
        let (t, tsys) = build_saw_tree(&sys, 0, 20).unwrap();
        for (i, n) in t.nodes.iter().enumerate() {
            if n.forced.is_none() {
                assert_eq!(tsys.graph().degree(i), g.degree(n.origin));
            }
        }
    }

    #[test]
    fn depth_cap_is_enforced() {
        let sys = make_hardcore(Graph::path(6), 1.0).unwrap();
        assert!(matches!(build_saw_tree(&sys, 0, 3), Err(SpinError::DepthCap { cap: 3 })));
    }

    #[test]
    fn root_marginal_matches_graph() {
        let single = make_hardcore(Graph::new(1, &[]).unwrap(), 2.0).unwrap();
        let (t, ts) = build_saw_tree(&single, 0, 4).unwrap();
        let m = saw_root_marginal(&t, &ts).unwrap();
        assert!((m[1] - 2.0 / 3.0).abs() < 1e-15);

        let g = Graph::new(6, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 2)]).unwrap();
        for sys in [make_hardcore(g.clone(), 1.3).unwrap(), make_two_spin(g.clone(), 1.7, 0.4, 0.8).unwrap()] {
            for root in 0..6 {
                let (t, ts) = build_saw_tree(&sys, root, 20).unwrap();
                let saw = saw_root_marginal(&t, &ts).unwrap();
                let exact = exact_marginal(&sys, &[root]).unwrap();
                assert!((saw[1] - exact.prob_of(&[PLUS])).abs() < 1e-12);
            }
            let pinned = sys.pin(4, PLUS).unwrap();
            let (t, ts) = build_saw_tree(&pinned, 1, 20).unwrap();
            let saw = saw_root_marginal(&t, &ts).unwrap();
            let exact = exact_marginal(&pinned, &[1]).unwrap();
            assert!((saw[1] - exact.prob_of(&[PLUS])).abs() < 1e-12);
        }
    }

    #[test]
    fn influence_on_trees() {
        let lambda = 1.5;
        let k2 = make_hardcore(Graph::complete(2), lambda).unwrap();
        let (t, ts) = build_saw_tree(&k2, 0, 4).unwrap();
        let inf = tree_influence(&t, &ts).unwrap();
        assert!((inf.per_node[1] - lambda / (1.0 + lambda)).abs() < 1e-14);

        let prod = make_two_spin(Graph::path(4), 1.0, 1.0, 2.0).unwrap();
        let (t, ts) = build_saw_tree(&prod, 1, 5).unwrap();
        let inf = tree_influence(&t, &ts).unwrap();
        assert!(inf.per_node[1..].iter().all(|&x| x == 0.0));

        let g = Graph::new(7, &[(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (5, 6)]).unwrap();
        let sys = make_two_spin(g, 0.3, 1.4, 0.9).unwrap().pin(4, MINUS).unwrap();
        let (t, ts) = build_saw_tree(&sys, 0, 10).unwrap();
        let inf = tree_influence(&t, &ts).unwrap();
        let oracle = influence_matrix(&ts).unwrap();
        for i in 1..t.len() {
            if ts.is_free(i) {
                assert!((inf.signed[i] - oracle.get(0, i).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn maximal_coupling_properties() {
        let p = [0.5, 0.3, 0.2];
        let q = [0.2, 0.2, 0.6];
        let j = maximal_coupling(&p, &q);
        for i in 0..3 {
            assert!(((0..3).map(|c| j[i * 3 + c]).sum::<f64>() - p[i]).abs() < 1e-15);
            assert!(((0..3).map(|r| j[r * 3 + i]).sum::<f64>() - q[i]).abs() < 1e-15);
        }
        let off: f64 = (0..9).filter(|k| k / 3 != k % 3).map(|k| j[k]).sum();
        assert!((off - 0.4).abs() < 1e-15);
        let jt = maximal_coupling(&q, &p);
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(j[r * 3 + c], jt[c * 3 + r]);
            }
        }
    }

    #[test]
    fn product_coupling_is_identity_off_v() {
        let sys = make_two_spin(Graph::cycle(5), 1.0, 1.0, 0.7).unwrap();
        let mut rng = stream(1);
        for _ in 0..200 {
            let s = recursive_coupling_two_spin(&sys, &PartialConfig::new(), 2, &mut rng).unwrap();
            assert_eq!(s.discrepancy, vec![2]);
            assert_eq!((s.x[2], s.y[2]), (MINUS, PLUS));
        }
    }

    #[test]
    fn k2_disagreement_rate() {
        let lambda = 1.0;
        let sys = make_hardcore(Graph::complete(2), lambda).unwrap();
        let mut rng = stream(2);
        let n = 100_000;
        let mut dis = 0.0;
        for _ in 0..n {
            let s = recursive_coupling_two_spin(&sys, &PartialConfig::new(), 0, &mut rng).unwrap();
            if s.x[1] != s.y[1] {
                dis += 1.0;
            }
        }
        let p = lambda / (1.0 + lambda);
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((dis / n as f64 - p).abs() < 5.0 * sd);
    }

    #[test]
    fn two_spin_coupling_marginals() {
        let g = Graph::new(5, &[(0, 1), (1, 2), (2, 3), (3, 0), (2, 4)]).unwrap();
        let sys = make_two_spin(g, 0.6, 1.3, 1.1).unwrap();
        let mut c = RecursiveCoupler::two_spin(&sys).unwrap();
        let mut rng = stream(3);
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for _ in 0..50_000 {
            let (x, y) = c.sample(&PartialConfig::new(), 1, MINUS, PLUS, &mut rng).unwrap();
            xs.push(x);
            ys.push(y);
        }
        let tx = enumerate(&sys.pin(1, MINUS).unwrap()).unwrap();
        let ty = enumerate(&sys.pin(1, PLUS).unwrap()).unwrap();
        assert!(marginal_validity_test(&xs, &tx).unwrap().pass);
        assert!(marginal_validity_test(&ys, &ty).unwrap().pass);
        // swapping sides must fail
        assert!(!marginal_validity_test(&ys, &tx).unwrap().pass);
        assert!(marginal_validity_test(&[], &tx).is_err());
    }

    #[test]
    fn coloring_coupling() {
        let iso = make_list_coloring(Graph::new(3, &[(1, 2)]).unwrap(), &[vec![0, 1], vec![0, 1, 2], vec![0, 1, 2]]).unwrap();
        let mut rng = stream(4);
        for _ in 0..100 {
            let s = recursive_coupling_coloring(&iso, &PartialConfig::new(), 0, 0, 1, &mut rng).unwrap();
            assert_eq!(s.discrepancy, vec![0]);
        }
        assert!(recursive_coupling_coloring(&make_list_coloring(Graph::complete(3), &vec![vec![0, 1, 2, 3]; 3]).unwrap(), &PartialConfig::new(), 0, 0, 1, &mut rng).is_err());

        // K2, lists {0..4}: disagreement at the neighbour equals the TV of its two marginals
        let k2 = make_list_coloring(Graph::complete(2), &[vec![0, 1, 2, 3, 4], vec![0, 1, 2, 3, 4]]).unwrap();
        let n = 100_000;
        let mut dis = 0.0;
        for _ in 0..n {
            let s = recursive_coupling_coloring(&k2, &PartialConfig::new(), 0, 1, 3, &mut rng).unwrap();
            if s.x[1] != s.y[1] {
                dis += 1.0;
            }
        }
        let tv = 0.25;
        let sd = (tv * (1.0 - tv) / n as f64).sqrt();
        assert!((dis / n as f64 - tv).abs() < 5.0 * sd);

        let c6 = make_list_coloring(Graph::cycle(6), &vec![vec![0, 1, 2]; 6]).unwrap();
        let mut c = RecursiveCoupler::coloring(&c6).unwrap();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for _ in 0..30_000 {
            let (x, y) = c.sample(&PartialConfig::new(), 0, 0, 2, &mut rng).unwrap();
            xs.push(x);
            ys.push(y);
        }
        assert!(marginal_validity_test(&xs, &enumerate(&c6.pin(0, 0).unwrap()).unwrap()).unwrap().pass);
        assert!(marginal_validity_test(&ys, &enumerate(&c6.pin(0, 2).unwrap()).unwrap()).unwrap().pass);
    }

    #[test]
    fn ci_estimates() {
        let prod = make_two_spin(Graph::path(4), 1.0, 1.0, 1.0).unwrap();
        let r = estimate_ci(&prod, &HammingWeight::unit(4), CouplingKind::TwoSpin, &PinningSpec::Empty, 10, 100, Some(1.0), StreamSeed(1)).unwrap();
        assert_eq!(r.max_ratio, 1.0);
        assert_eq!(r.pairs.len(), 4);

        let tree = make_hardcore(Graph::new(5, &[(0, 1), (0, 2), (2, 3), (2, 4)]).unwrap(), 2.0).unwrap();
        let r = estimate_ci(&tree, &HammingWeight::unit(5), CouplingKind::TwoSpin, &PinningSpec::Exhaustive { max_size: 1 }, 1000, 200, None, StreamSeed(2)).unwrap();
        assert!(r.max_ratio.is_finite() && r.max_ratio >= 1.0);
        assert!(r.pairs.iter().all(|p| p.ci_low <= p.ratio && p.ratio <= p.ci_high));
    }

    #[test]
    fn disagreement_bounded_by_copy_influence() {
        let g = Graph::new(6, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (4, 5), (5, 2)]).unwrap();
        let sys = make_hardcore(g, 2.0).unwrap();
        let mut c = RecursiveCoupler::two_spin(&sys).unwrap();
        let mut rng = stream(5);
        let v = 0;
        let (t, ts) = build_saw_tree(&sys, v, 30).unwrap();
        let bound = summed_copy_influence(&t, &tree_influence(&t, &ts).unwrap(), 6);
        let n = 40_000;
        let mut dis = [0.0; 6];
        for _ in 0..n {
            let (x, y) = c.sample(&PartialConfig::new(), v, MINUS, PLUS, &mut rng).unwrap();
            for u in 0..6 {
                if x[u] != y[u] {
                    dis[u] += 1.0;
                }
            }
        }
        for u in 1..6 {
            let p = dis[u] / n as f64;
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!(p <= bound[u] + 4.0 * sd, "u={u}: {p} > {}", bound[u]);
        }
    }

    #[test]
    fn bernstein_shrinks() {
        let xs: Vec<f64> = (0..10_000).map(|i| (i % 2) as f64).collect();
        let (m, lo, hi) = bernstein_interval(&xs, 1.0, 0.05);
        assert!((m - 0.5).abs() < 1e-12);
        assert!(hi - lo < 0.1);
    }
}
