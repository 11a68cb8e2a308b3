//! Text and JSON formats for graphs, models, pinnings and partitions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpinError};
use crate::graph::Graph;
use crate::partition::Partition;
use crate::spin::{make_hardcore, make_list_coloring, make_two_spin, PartialConfig, Spin, SpinSystem};

/// Parses `n m [bipartite l r]` followed by `m` lines `u v`. With the
/// bipartite header the first `l` vertices form the left side. Blank lines
/// and `#` comments are ignored.
pub fn parse_graph(text: &str) -> Result<Graph> {
    let mut lines = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty());
    let header = lines.next().ok_or_else(|| SpinError::Parse("empty graph file".into()))?;
    let tok: Vec<&str> = header.split_whitespace().collect();
    let num = |s: &str| s.parse::<usize>().map_err(|_| SpinError::Parse(format!("bad integer {s:?}")));
    if tok.len() != 2 && tok.len() != 5 {
        return Err(SpinError::Parse(format!("bad header {header:?}")));
    }
    let n = num(tok[0])?;
    let m = num(tok[1])?;
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let line = lines.next().ok_or_else(|| SpinError::Parse("fewer edges than declared".into()))?;
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 2 {
            return Err(SpinError::Parse(format!("bad edge line {line:?}")));
        }
        edges.push((num(t[0])?, num(t[1])?));
    }
    if lines.next().is_some() {
        return Err(SpinError::Parse("more edges than declared".into()));
    }
    let g = Graph::new(n, &edges)?;
    if tok.len() == 5 {
        if tok[2] != "bipartite" {
            return Err(SpinError::Parse(format!("unknown header keyword {:?}", tok[2])));
        }
        let (l, r) = (num(tok[3])?, num(tok[4])?);
        if l + r != n {
            return Err(SpinError::Parse("bipartition sizes do not add up to n".into()));
        }
        return g.with_bipartition((0..l).collect(), (l..n).collect());
    }
    Ok(g)
}

pub fn write_graph(g: &Graph) -> String {
    let mut out = match g.bipartition() {
        Some(b) if b.left.iter().copied().eq(0..b.left.len()) => {
            format!("{} {} bipartite {} {}\n", g.n(), g.edge_count(), b.left.len(), b.right.len())
        }
        _ => format!("{} {}\n", g.n(), g.edge_count()),
    };
    for &(u, v) in g.edges() {
        out.push_str(&format!("{u} {v}\n"));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    Hardcore { lambda: f64 },
    TwoSpin { beta: f64, gamma: f64, lambda: f64 },
    ListColoring { lists: Vec<Vec<Spin>> },
}

impl ModelSpec {
    pub fn parse(text: &str) -> Result<ModelSpec> {
        serde_json::from_str(text).map_err(|e| SpinError::Parse(e.to_string()))
    }

    pub fn build(&self, graph: Graph) -> Result<SpinSystem> {
        match self {
            ModelSpec::Hardcore { lambda } => make_hardcore(graph, *lambda),
            ModelSpec::TwoSpin { beta, gamma, lambda } => make_two_spin(graph, *beta, *gamma, *lambda),
            ModelSpec::ListColoring { lists } => make_list_coloring(graph, lists),
        }
    }
}

/// Pinning files are JSON objects mapping vertex ids (as strings) to spins.
pub fn parse_pinning(text: &str) -> Result<PartialConfig> {
    let map: BTreeMap<String, Spin> = serde_json::from_str(text).map_err(|e| SpinError::Parse(e.to_string()))?;
    map.into_iter()
        .map(|(k, s)| {
            k.parse::<usize>()
                .map(|v| (v, s))
                .map_err(|_| SpinError::Parse(format!("bad vertex key {k:?}")))
        })
        .collect::<Result<Vec<_>>>()
        .map(PartialConfig::from_pairs)
}

pub fn parse_partition(text: &str) -> Result<Partition> {
    serde_json::from_str(text).map_err(|e| SpinError::Parse(e.to_string()))
}

/// `-`/`+` for two-spin models, otherwise dot-separated indices.
pub fn spin_string(s: &[Spin], two_spin_symbols: bool) -> String {
    if two_spin_symbols {
        s.iter().map(|&x| if x == 0 { '-' } else { '+' }).collect()
    } else {
        s.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(".")
    }
}

/// Shortest representation that round-trips, capped at 17 significant
/// digits.
pub fn format_float(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.16e}");
    let back: f64 = s.parse().expect("formatted float parses");
    debug_assert_eq!(back.to_bits(), x.to_bits());
    let short = format!("{x}");
    if short.parse::<f64>().ok() == Some(x) && short.len() <= s.len() {
        short
    } else {
        s
    }
}

/// CSV with a header row; floats via [`format_float`].
pub fn write_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.iter().map(|&x| format_float(x)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}
