//! Simple undirected graphs with an explicit vertex order and an optional
//! bipartition.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpinError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bipartition {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
    adj_edge: Vec<Vec<usize>>,
    rank: Vec<usize>,
    bipartition: Option<Bipartition>,
}

impl Graph {
    /// Builds a graph from an edge list. Self-loops, parallel edges and
    /// out-of-range endpoints are rejected.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        let mut norm = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(SpinError::invalid(format!("edge ({u},{v}) out of range for n={n}")));
            }
            if u == v {
                return Err(SpinError::invalid(format!("self-loop at {u}")));
            }
            let e = (u.min(v), u.max(v));
            norm.push(e);
        }
        let mut sorted = norm.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(SpinError::invalid("parallel edge"));
        }
        for (i, &(u, v)) in norm.iter().enumerate() {
            adj[u].push((v, i));
            adj[v].push((u, i));
        }
        let mut nbrs = Vec::with_capacity(n);
        let mut nbr_edges = Vec::with_capacity(n);
        for mut list in adj {
            list.sort_unstable();
            nbrs.push(list.iter().map(|p| p.0).collect());
            nbr_edges.push(list.iter().map(|p| p.1).collect());
        }
        Ok(Graph {
            n,
            edges: norm,
            adj: nbrs,
            adj_edge: nbr_edges,
            rank: (0..n).collect(),
            bipartition: None,
        })
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::new(n, &edges).expect("path is simple")
    }

    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "cycle needs at least 3 vertices");
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        edges.push((n - 1, 0));
        Graph::new(n, &edges).expect("cycle is simple")
    }

    pub fn complete(n: usize) -> Self {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                edges.push((u, v));
            }
        }
        Graph::new(n, &edges).expect("complete graph is simple")
    }

    pub fn star(leaves: usize) -> Self {
        let edges: Vec<_> = (1..=leaves).map(|i| (0, i)).collect();
        Graph::new(leaves + 1, &edges).expect("star is simple")
    }

    /// Complete bipartite graph with left part `0..l` and right part `l..l+r`.
    pub fn complete_bipartite(l: usize, r: usize) -> Self {
        let mut edges = Vec::new();
        for u in 0..l {
            for v in 0..r {
                edges.push((u, l + v));
            }
        }
        Graph::new(l + r, &edges)
            .and_then(|g| g.with_bipartition((0..l).collect(), (l..l + r).collect()))
            .expect("complete bipartite graph is simple")
    }

    /// Attaches a bipartition; every edge must cross the two parts.
    pub fn with_bipartition(mut self, left: Vec<usize>, right: Vec<usize>) -> Result<Self> {
        let mut side = vec![None; self.n];
        for &v in &left {
            if v >= self.n || side[v].is_some() {
                return Err(SpinError::invalid(format!("bad left vertex {v}")));
            }
            side[v] = Some(false);
        }
        for &v in &right {
            if v >= self.n || side[v].is_some() {
                return Err(SpinError::invalid(format!("bad right vertex {v}")));
            }
            side[v] = Some(true);
        }
        if side.iter().any(Option::is_none) {
            return Err(SpinError::invalid("bipartition does not cover every vertex"));
        }
        if self.edges.iter().any(|&(u, v)| side[u] == side[v]) {
            return Err(SpinError::invalid("edge inside one side of the bipartition"));
        }
        self.bipartition = Some(Bipartition { left, right });
        Ok(self)
    }

    /// Replaces the default index order. `order` lists vertices from smallest
    /// to largest.
    pub fn with_order(mut self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n {
            return Err(SpinError::invalid("vertex order has wrong length"));
        }
        let mut rank = vec![usize::MAX; self.n];
        for (r, &v) in order.iter().enumerate() {
            if v >= self.n || rank[v] != usize::MAX {
                return Err(SpinError::invalid("vertex order is not a permutation"));
            }
            rank[v] = r;
        }
        self.rank = rank;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    /// Edge ids parallel to [`Graph::neighbors`].
    pub fn incident_edges(&self, v: usize) -> &[usize] {
        &self.adj_edge[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn edge_id(&self, u: usize, v: usize) -> Option<usize> {
        self.adj[u].binary_search(&v).ok().map(|i| self.adj_edge[u][i])
    }

    pub fn bipartition(&self) -> Option<&Bipartition> {
        self.bipartition.as_ref()
    }

    pub fn rank(&self, v: usize) -> usize {
        self.rank[v]
    }

    /// Strict comparison under the vertex order.
    pub fn precedes(&self, u: usize, v: usize) -> bool {
        self.rank[u] < self.rank[v]
    }

    /// Neighbours of `v` sorted by the vertex order.
    pub fn neighbors_in_order(&self, v: usize) -> Vec<usize> {
        let mut out = self.adj[v].clone();
        out.sort_by_key(|&u| self.rank[u]);
        out
    }

    /// Maximum degree of the subgraph induced by `subset`.
    pub fn induced_max_degree(&self, subset: &[usize]) -> usize {
        let mut inside = vec![false; self.n];
        for &v in subset {
            inside[v] = true;
        }
        subset
            .iter()
            .map(|&v| self.adj[v].iter().filter(|&&u| inside[u]).count())
            .max()
            .unwrap_or(0)
    }

    /// Same graph with the edges incident to `v` removed. Order and
    /// bipartition are kept.
    pub(crate) fn without_edges_at(&self, v: usize) -> (Graph, Vec<usize>) {
        let kept: Vec<usize> = (0..self.edges.len())
            .filter(|&e| self.edges[e].0 != v && self.edges[e].1 != v)
            .collect();
        let edges: Vec<_> = kept.iter().map(|&e| self.edges[e]).collect();
        let mut g = Graph::new(self.n, &edges).expect("subgraph of a simple graph");
        g.rank = self.rank.clone();
        g.bipartition = self.bipartition.clone();
        (g, kept)
    }
}

/// Uniform-ish random `d`-regular simple graph via sequential pairing with
/// restarts.
pub fn random_regular<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<Graph> {
    if n * d % 2 != 0 || d >= n {
        return Err(SpinError::invalid(format!("no {d}-regular graph on {n} vertices")));
    }
    let stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
    pair_stubs(n, stubs.clone(), stubs, true, rng).and_then(|e| Graph::new(n, &e))
}

/// Random bipartite graph with `nl` left vertices of degree `dl` and `nr`
/// right vertices of degree `dr`. Left vertices are `0..nl`.
pub fn random_biregular<R: Rng + ?Sized>(
    nl: usize,
    dl: usize,
    nr: usize,
    dr: usize,
    rng: &mut R,
) -> Result<Graph> {
    if nl * dl != nr * dr || dl > nr || dr > nl {
        return Err(SpinError::invalid("inconsistent biregular degrees"));
    }
    let left: Vec<usize> = (0..nl).flat_map(|v| std::iter::repeat_n(v, dl)).collect();
    let right: Vec<usize> = (nl..nl + nr).flat_map(|v| std::iter::repeat_n(v, dr)).collect();
    let edges = pair_stubs(nl + nr, left, right, false, rng)?;
    Graph::new(nl + nr, &edges)?.with_bipartition((0..nl).collect(), (nl..nl + nr).collect())
}

fn pair_stubs<R: Rng + ?Sized>(
    n: usize,
    a: Vec<usize>,
    b: Vec<usize>,
    same_pool: bool,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    const RESTARTS: usize = 1000;
    for _ in 0..RESTARTS {
        let mut adj = vec![std::collections::HashSet::new(); n];
        let mut edges = Vec::new();
        let ok = if same_pool {
            let mut pool = a.clone();
            pool.shuffle(rng);
            pair_single_pool(&mut pool, &mut adj, &mut edges, rng)
        } else {
            let mut pa = a.clone();
            let mut pb = b.clone();
            pa.shuffle(rng);
            pb.shuffle(rng);
            pair_two_pools(&mut pa, &mut pb, &mut adj, &mut edges, rng)
        };
        if ok {
            return Ok(edges);
        }
    }
    Err(SpinError::invalid("random pairing did not produce a simple graph"))
}

fn pair_single_pool<R: Rng + ?Sized>(
    pool: &mut Vec<usize>,
    adj: &mut [std::collections::HashSet<usize>],
    edges: &mut Vec<(usize, usize)>,
    rng: &mut R,
) -> bool {
    while pool.len() >= 2 {
        let mut found = false;
        for _ in 0..50 * pool.len() {
            let i = rng.random_range(0..pool.len());
            let j = rng.random_range(0..pool.len());
            let (u, v) = (pool[i], pool[j]);
            if i == j || u == v || adj[u].contains(&v) {
                continue;
            }
            adj[u].insert(v);
            adj[v].insert(u);
            edges.push((u, v));
            let (hi, lo) = (i.max(j), i.min(j));
            pool.swap_remove(hi);
            pool.swap_remove(lo);
            found = true;
            break;
        }
        if !found {
            return false;
        }
    }
    true
}

fn pair_two_pools<R: Rng + ?Sized>(
    pa: &mut Vec<usize>,
    pb: &mut Vec<usize>,
    adj: &mut [std::collections::HashSet<usize>],
    edges: &mut Vec<(usize, usize)>,
    rng: &mut R,
) -> bool {
    while !pa.is_empty() {
        let mut found = false;
        for _ in 0..50 * pa.len() {
            let i = rng.random_range(0..pa.len());
            let j = rng.random_range(0..pb.len());
            let (u, v) = (pa[i], pb[j]);
            if adj[u].contains(&v) {
                continue;
            }
            adj[u].insert(v);
            adj[v].insert(u);
            edges.push((u, v));
            pa.swap_remove(i);
            pb.swap_remove(j);
            found = true;
            break;
        }
        if !found {
            return false;
        }
    }
    true
}
