//! Spin systems: per-vertex fields, per-edge symmetric interactions and an
//! optional pinning.
//!
//! The unnormalised weight of a full configuration `σ` under pinning `τ` is
//!
//! ```text
//! w^τ(σ) = 1[σ agrees with τ] · ∏_{v free} b_v(σ_v) · ∏_{e ∩ free ≠ ∅} A_e(σ_u, σ_w)
//! ```
//!
//! so fields of pinned vertices and edges between two pinned vertices never
//! contribute. Spins are 0-based indices into `[q]`; for two-spin models
//! `0` is `−` and `1` is `+`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpinError};
use crate::graph::Graph;

pub type Spin = u8;

/// Spin value `−` in two-spin models.
pub const MINUS: Spin = 0;
/// Spin value `+` in two-spin models.
pub const PLUS: Spin = 1;

/// Products with more log-magnitude than this are evaluated in log space.
const LOG_SPACE_THRESHOLD: f64 = 600.0;

/// A partial assignment of spins to vertices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartialConfig(pub BTreeMap<usize, Spin>);

impl PartialConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, Spin)>) -> Self {
        PartialConfig(pairs.into_iter().collect())
    }

    /// Restriction of a full configuration to `vertices`.
    pub fn restrict(config: &[Spin], vertices: &[usize]) -> Self {
        PartialConfig(vertices.iter().map(|&v| (v, config[v])).collect())
    }

    pub fn get(&self, v: usize) -> Option<Spin> {
        self.0.get(&v).copied()
    }

    pub fn insert(&mut self, v: usize, s: Spin) {
        self.0.insert(v, s);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn vertices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Spin)> + '_ {
        self.0.iter().map(|(&v, &s)| (v, s))
    }

    /// Union of two pinnings; fails if they disagree somewhere.
    pub fn merged(&self, other: &PartialConfig) -> Result<PartialConfig> {
        let mut out = self.clone();
        for (v, s) in other.iter() {
            match out.get(v) {
                Some(t) if t != s => {
                    return Err(SpinError::Consistency(format!(
                        "vertex {v} pinned to both {t} and {s}"
                    )))
                }
                _ => out.insert(v, s),
            }
        }
        Ok(out)
    }
}

/// Positive per-vertex weights `ρ` for the weighted Hamming distance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HammingWeight(Vec<u64>);

impl HammingWeight {
    pub fn new(weights: Vec<u64>) -> Result<Self> {
        if weights.iter().any(|&w| w == 0) {
            return Err(SpinError::invalid("Hamming weights must be at least 1"));
        }
        Ok(HammingWeight(weights))
    }

    pub fn unit(n: usize) -> Self {
        HammingWeight(vec![1; n])
    }

    pub fn get(&self, v: usize) -> u64 {
        self.0[v]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Weighted Hamming distance between two full configurations.
    pub fn distance(&self, a: &[Spin], b: &[Spin]) -> u64 {
        a.iter()
            .zip(b)
            .enumerate()
            .filter(|(_, (x, y))| x != y)
            .map(|(v, _)| self.0[v])
            .sum()
    }
}

/// `Σ_{v: a(v) ≠ b(v)} ρ(v)` over a shared vertex set.
pub fn hamming_distance(rho: &HammingWeight, a: &PartialConfig, b: &PartialConfig) -> Result<u64> {
    if a.0.len() != b.0.len() || a.vertices().zip(b.vertices()).any(|(x, y)| x != y) {
        return Err(SpinError::invalid("configurations are defined on different vertex sets"));
    }
    let mut total = 0;
    for ((v, x), (_, y)) in a.iter().zip(b.iter()) {
        if v >= rho.len() {
            return Err(SpinError::Domain { vertex: v, value: x as usize });
        }
        if x != y {
            total += rho.get(v);
        }
    }
    Ok(total)
}

/// Which constructor produced a system; used for model-specific checks and
/// pretty-printing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelKind {
    Hardcore { lambda: f64 },
    TwoSpin { beta: f64, gamma: f64, lambda: f64 },
    ListColoring,
    Custom,
}

#[derive(Debug, Clone)]
pub struct SpinSystem {
    graph: Arc<Graph>,
    q: usize,
    domain: Vec<Vec<Spin>>,
    field: Vec<Vec<f64>>,
    interaction: Vec<Arc<Vec<f64>>>,
    pinning: Vec<Option<Spin>>,
    kind: ModelKind,
    log_space: bool,
}

impl SpinSystem {
    /// General constructor. `field[v]` has length `q`; `interaction[e]` is a
    /// row-major `q×q` symmetric nonnegative matrix for edge `e` of `graph`.
    /// A spin is in the domain of `v` iff `domain[v]` lists it.
    pub fn new(
        graph: Graph,
        q: usize,
        domain: Vec<Vec<Spin>>,
        field: Vec<Vec<f64>>,
        interaction: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = graph.n();
        if q < 2 || q > Spin::MAX as usize {
            return Err(SpinError::invalid(format!("q={q} out of range")));
        }
        if domain.len() != n || field.len() != n || interaction.len() != graph.edge_count() {
            return Err(SpinError::invalid("per-vertex or per-edge data has the wrong length"));
        }
        for (v, d) in domain.iter().enumerate() {
            if d.is_empty() {
                return Err(SpinError::invalid(format!("vertex {v} has an empty domain")));
            }
            if let Some(&s) = d.iter().find(|&&s| s as usize >= q) {
                return Err(SpinError::Domain { vertex: v, value: s as usize });
            }
        }
        for (v, b) in field.iter().enumerate() {
            if b.len() != q || b.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(SpinError::invalid(format!("bad field at vertex {v}")));
            }
        }
        for (e, a) in interaction.iter().enumerate() {
            if a.len() != q * q || a.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(SpinError::invalid(format!("bad interaction on edge {e}")));
            }
            for s in 0..q {
                for t in 0..s {
                    if a[s * q + t] != a[t * q + s] {
                        return Err(SpinError::invalid(format!("interaction on edge {e} is not symmetric")));
                    }
                }
            }
        }
        let mut domain = domain;
        for d in &mut domain {
            d.sort_unstable();
            d.dedup();
        }
        let mut sys = SpinSystem {
            graph: Arc::new(graph),
            q,
            domain,
            field,
            interaction: interaction.into_iter().map(Arc::new).collect(),
            pinning: vec![None; n],
            kind: ModelKind::Custom,
            log_space: false,
        };
        sys.log_space = sys.compute_log_space();
        Ok(sys)
    }

    fn compute_log_space(&self) -> bool {
        let max_entry = self
            .field
            .iter()
            .flatten()
            .chain(self.interaction.iter().flat_map(|a| a.iter()))
            .fold(1.0_f64, |m, &x| m.max(x));
        let factors = (self.graph.n() + self.graph.edge_count()) as f64;
        factors * max_entry.ln() > LOG_SPACE_THRESHOLD
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub(crate) fn with_kind(mut self, kind: ModelKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn domain(&self, v: usize) -> &[Spin] {
        &self.domain[v]
    }

    pub fn in_domain(&self, v: usize, s: Spin) -> bool {
        self.domain[v].binary_search(&s).is_ok()
    }

    pub fn field(&self, v: usize) -> &[f64] {
        &self.field[v]
    }

    pub fn interaction(&self, edge: usize) -> &[f64] {
        &self.interaction[edge]
    }

    #[inline]
    pub fn edge_weight(&self, edge: usize, s: Spin, t: Spin) -> f64 {
        self.interaction[edge][s as usize * self.q + t as usize]
    }

    pub fn uses_log_space(&self) -> bool {
        self.log_space
    }

    pub fn pinned(&self, v: usize) -> Option<Spin> {
        self.pinning[v]
    }

    pub fn is_free(&self, v: usize) -> bool {
        self.pinning[v].is_none()
    }

    pub fn pinning(&self) -> PartialConfig {
        PartialConfig(
            self.pinning
                .iter()
                .enumerate()
                .filter_map(|(v, s)| s.map(|s| (v, s)))
                .collect(),
        )
    }

    pub fn free_vertices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&v| self.is_free(v)).collect()
    }

    /// Two-spin parameters `(β, γ, λ)` when the system came from a two-spin
    /// constructor.
    pub fn two_spin_params(&self) -> Option<(f64, f64, f64)> {
        match self.kind {
            ModelKind::Hardcore { lambda } => Some((0.0, 1.0, lambda)),
            ModelKind::TwoSpin { beta, gamma, lambda } => Some((beta, gamma, lambda)),
            _ => None,
        }
    }

    /// Checks that `config` is a full configuration with in-domain values.
    pub fn check_config(&self, config: &[Spin]) -> Result<()> {
        if config.len() != self.n() {
            return Err(SpinError::invalid(format!(
                "configuration has length {} but the graph has {} vertices",
                config.len(),
                self.n()
            )));
        }
        for (v, &s) in config.iter().enumerate() {
            if !self.in_domain(v, s) {
                return Err(SpinError::Domain { vertex: v, value: s as usize });
            }
        }
        Ok(())
    }

    fn agrees_with_pinning(&self, config: &[Spin]) -> bool {
        self.pinning
            .iter()
            .zip(config)
            .all(|(p, &s)| p.is_none_or(|t| t == s))
    }

    /// `w^τ(σ)` for a full configuration.
    pub fn weight(&self, config: &[Spin]) -> Result<f64> {
        self.check_config(config)?;
        if !self.agrees_with_pinning(config) {
            return Ok(0.0);
        }
        if self.log_space {
            return Ok(self.log_weight_unchecked(config).exp());
        }
        let mut w = 1.0;
        for v in 0..self.n() {
            if self.is_free(v) {
                w *= self.field[v][config[v] as usize];
            }
        }
        for (e, &(u, v)) in self.graph.edges().iter().enumerate() {
            if self.is_free(u) || self.is_free(v) {
                w *= self.edge_weight(e, config[u], config[v]);
            }
        }
        Ok(w)
    }

    /// `ln w^τ(σ)`, `-inf` for zero weight.
    pub fn log_weight(&self, config: &[Spin]) -> Result<f64> {
        self.check_config(config)?;
        if !self.agrees_with_pinning(config) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.log_weight_unchecked(config))
    }

    pub(crate) fn log_weight_unchecked(&self, config: &[Spin]) -> f64 {
        let mut lw = 0.0;
        for v in 0..self.n() {
            if self.is_free(v) {
                lw += self.field[v][config[v] as usize].ln();
            }
        }
        for (e, &(u, v)) in self.graph.edges().iter().enumerate() {
            if self.is_free(u) || self.is_free(v) {
                lw += self.edge_weight(e, config[u], config[v]).ln();
            }
        }
        lw
    }

    /// Unnormalised conditional weights of each spin at `v` given the rest of
    /// `config`. Entries outside the domain are zero. Pinned vertices get a
    /// point mass at their pinned value.
    pub fn conditional_weights(&self, v: usize, config: &[Spin], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        if let Some(t) = self.pinning[v] {
            out[t as usize] = 1.0;
            return;
        }
        let nbrs = self.graph.neighbors(v);
        let eids = self.graph.incident_edges(v);
        for &s in &self.domain[v] {
            let mut w = self.field[v][s as usize];
            for (&u, &e) in nbrs.iter().zip(eids) {
                if w == 0.0 {
                    break;
                }
                w *= self.edge_weight(e, s, config[u]);
            }
            out[s as usize] = w;
        }
        if self.log_space {
            let m = out.iter().cloned().fold(0.0, f64::max);
            if m > 0.0 && !m.is_finite() {
                self.conditional_weights_log(v, config, out);
            }
        }
    }

    fn conditional_weights_log(&self, v: usize, config: &[Spin], out: &mut [f64]) {
        let mut logs = vec![f64::NEG_INFINITY; self.q];
        for &s in &self.domain[v] {
            let mut lw = self.field[v][s as usize].ln();
            for (&u, &e) in self.graph.neighbors(v).iter().zip(self.graph.incident_edges(v)) {
                lw += self.edge_weight(e, s, config[u]).ln();
            }
            logs[s as usize] = lw;
        }
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (o, l) in out.iter_mut().zip(logs) {
            *o = if m.is_finite() { (l - m).exp() } else { 0.0 };
        }
    }

    /// Conditional system `μ^{τ ∪ old pinning}`.
    pub fn condition(&self, tau: &PartialConfig) -> Result<SpinSystem> {
        let mut out = self.clone();
        for (v, s) in tau.iter() {
            if v >= self.n() {
                return Err(SpinError::invalid(format!("pinned vertex {v} out of range")));
            }
            if !self.in_domain(v, s) {
                return Err(SpinError::Domain { vertex: v, value: s as usize });
            }
            match out.pinning[v] {
                Some(t) if t != s => {
                    return Err(SpinError::Consistency(format!(
                        "vertex {v} already pinned to {t}, cannot pin to {s}"
                    )))
                }
                _ => out.pinning[v] = Some(s),
            }
        }
        Ok(out)
    }

    /// Shorthand for conditioning on a single vertex.
    pub fn pin(&self, v: usize, s: Spin) -> Result<SpinSystem> {
        self.condition(&PartialConfig::from_pairs([(v, s)]))
    }

    /// Removes every edge at `v`, folds `A_{v u_j}(boundary[j], ·)` into the
    /// field of the `j`-th neighbour (in adjacency order) and pins `v` to
    /// `pin_value`. This realises splitting `v` into one pinned copy per
    /// neighbour without adding vertices.
    pub(crate) fn split_vertex(&self, v: usize, boundary: &[Spin], pin_value: Spin) -> SpinSystem {
        let nbrs = self.graph.neighbors(v);
        debug_assert_eq!(nbrs.len(), boundary.len());
        let mut field = self.field.clone();
        for ((&u, &e), &b) in nbrs.iter().zip(self.graph.incident_edges(v)).zip(boundary) {
            for t in 0..self.q {
                field[u][t] *= self.edge_weight(e, b, t as Spin);
            }
        }
        let (graph, kept) = self.graph.without_edges_at(v);
        let interaction = kept.iter().map(|&e| self.interaction[e].clone()).collect();
        let mut pinning = self.pinning.clone();
        pinning[v] = Some(pin_value);
        let mut out = SpinSystem {
            graph: Arc::new(graph),
            q: self.q,
            domain: self.domain.clone(),
            field,
            interaction,
            pinning,
            kind: self.kind,
            log_space: false,
        };
        out.log_space = out.compute_log_space();
        out
    }

    /// Content key identifying the weight function (used for caches).
    pub(crate) fn fingerprint(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.q.hash(&mut h);
        self.pinning.hash(&mut h);
        self.domain.hash(&mut h);
        for b in &self.field {
            for x in b {
                x.to_bits().hash(&mut h);
            }
        }
        self.graph.edges().hash(&mut h);
        for a in &self.interaction {
            for x in a.iter() {
                x.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    /// Unique maximum configuration under per-vertex orders; `orders[v]`
    /// lists spins from smallest to largest. Pinned vertices keep their pin.
    pub fn maximal_config(&self, orders: &[Vec<Spin>]) -> Vec<Spin> {
        (0..self.n())
            .map(|v| {
                self.pinning[v].unwrap_or_else(|| {
                    *orders[v]
                        .iter()
                        .rev()
                        .find(|&&s| self.in_domain(v, s))
                        .expect("order covers the domain")
                })
            })
            .collect()
    }
}

/// Hardcore model: `μ(S) ∝ λ^{|S|}` over independent sets.
pub fn make_hardcore(graph: Graph, lambda: f64) -> Result<SpinSystem> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(SpinError::invalid("hardcore fugacity must be positive"));
    }
    Ok(make_two_spin_raw(graph, 0.0, 1.0, lambda)?.with_kind(ModelKind::Hardcore { lambda }))
}

/// Two-spin system `μ(σ) ∝ λ^{n_+} β^{m_+} γ^{m_-}`.
pub fn make_two_spin(graph: Graph, beta: f64, gamma: f64, lambda: f64) -> Result<SpinSystem> {
    if !(beta >= 0.0 && gamma > 0.0 && lambda > 0.0) {
        return Err(SpinError::invalid("two-spin parameters need β ≥ 0, γ > 0, λ > 0"));
    }
    Ok(make_two_spin_raw(graph, beta, gamma, lambda)?.with_kind(ModelKind::TwoSpin { beta, gamma, lambda }))
}

fn make_two_spin_raw(graph: Graph, beta: f64, gamma: f64, lambda: f64) -> Result<SpinSystem> {
    let n = graph.n();
    let m = graph.edge_count();
    // row-major [−−, −+, +−, ++]
    let a = vec![gamma, 1.0, 1.0, beta];
    SpinSystem::new(
        graph,
        2,
        vec![vec![MINUS, PLUS]; n],
        vec![vec![1.0, lambda]; n],
        vec![a; m],
    )
}

/// Uniform proper list colourings with `lists[v] ⊆ [q]`, `q` = largest colour + 1.
pub fn make_list_coloring(graph: Graph, lists: &[Vec<Spin>]) -> Result<SpinSystem> {
    let n = graph.n();
    if lists.len() != n {
        return Err(SpinError::invalid("one colour list per vertex is required"));
    }
    let q = lists.iter().flatten().map(|&c| c as usize + 1).max().unwrap_or(0).max(2);
    let field = lists
        .iter()
        .map(|l| {
            let mut b = vec![0.0; q];
            for &c in l {
                b[c as usize] = 1.0;
            }
            b
        })
        .collect();
    let mut a = vec![1.0; q * q];
    for c in 0..q {
        a[c * q + c] = 0.0;
    }
    let m = graph.edge_count();
    Ok(SpinSystem::new(graph, q, lists.to_vec(), field, vec![a; m])?.with_kind(ModelKind::ListColoring))
}

/// Tree-uniqueness threshold `λ_c(Δ) = (Δ−1)^{Δ−1} / (Δ−2)^Δ`.
pub fn lambda_critical(delta: u32) -> Result<f64> {
    if delta < 3 {
        return Err(SpinError::invalid("λ_c is defined for Δ ≥ 3"));
    }
    let d = delta as f64;
    if delta <= 40 {
        Ok((d - 1.0).powi(delta as i32 - 1) / (d - 2.0).powi(delta as i32))
    } else {
        // powers overflow past this point
        Ok(((d - 1.0) * (d - 1.0).ln() - d * (d - 2.0).ln()).exp())
    }
}

/// The unique positive root of `α = exp(1/α)`.
pub fn alpha_star() -> f64 {
    let f = |a: f64| a - (1.0 / a).exp();
    let (mut lo, mut hi) = (1.0_f64, 2.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    // polish with Newton: f'(a) = 1 + exp(1/a)/a²
    let mut a = 0.5 * (lo + hi);
    for _ in 0..3 {
        a -= f(a) / (1.0 + (1.0 / a).exp() / (a * a));
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_configs(sys: &SpinSystem) -> Vec<Vec<Spin>> {
        let mut out = vec![vec![]];
        for v in 0..sys.n() {
            out = out
                .into_iter()
                .flat_map(|c: Vec<Spin>| {
                    sys.domain(v).iter().map(move |&s| {
                        let mut c = c.clone();
                        c.push(s);
                        c
                    })
                })
                .collect();
        }
        out
    }

    #[test]
    fn hardcore_weights() {
        let k2 = make_hardcore(Graph::complete(2), 1.0).unwrap();
        assert_eq!(k2.weight(&[PLUS, PLUS]).unwrap(), 0.0);
        assert_eq!(k2.weight(&[PLUS, MINUS]).unwrap(), 1.0);
        let p3 = make_hardcore(Graph::path(3), 2.0).unwrap();
        assert_eq!(p3.weight(&[PLUS, MINUS, PLUS]).unwrap(), 4.0);
    }

    #[test]
    fn out_of_domain_is_an_error() {
        let k2 = make_hardcore(Graph::complete(2), 1.0).unwrap();
        assert!(matches!(k2.weight(&[2, 0]), Err(SpinError::Domain { .. })));
        assert!(k2.weight(&[0]).is_err());
    }

    #[test]
    fn conditioning_on_middle() {
        let lambda = 3.0;
        let p3 = make_hardcore(Graph::path(3), lambda).unwrap();
        let c = p3.pin(1, PLUS).unwrap();
        // the pinned vertex's own field is not a factor of w^τ
        assert_eq!(c.weight(&[MINUS, PLUS, MINUS]).unwrap(), 1.0);
        assert_eq!(c.weight(&[MINUS, MINUS, MINUS]).unwrap(), 0.0);
        assert_eq!(c.weight(&[PLUS, PLUS, MINUS]).unwrap(), 0.0);
        // ratios match the unconditioned weights on consistent configs
        let ratio = p3.weight(&[MINUS, PLUS, MINUS]).unwrap() / c.weight(&[MINUS, PLUS, MINUS]).unwrap();
        assert_eq!(ratio, lambda);
        assert_eq!(c.free_vertices(), vec![0, 2]);
    }

    #[test]
    fn empty_condition_is_identity() {
        let sys = make_two_spin(Graph::cycle(4), 0.5, 2.0, 1.5).unwrap();
        let c = sys.condition(&PartialConfig::new()).unwrap();
        for cfg in all_configs(&sys) {
            assert_eq!(sys.weight(&cfg).unwrap(), c.weight(&cfg).unwrap());
        }
    }

    #[test]
    fn conflicting_pinning_is_rejected() {
        let sys = make_hardcore(Graph::path(3), 1.0).unwrap().pin(0, PLUS).unwrap();
        assert!(matches!(sys.pin(0, MINUS), Err(SpinError::Consistency(_))));
        assert!(sys.pin(0, PLUS).is_ok());
    }

    #[test]
    fn conditioning_composes() {
        let g = Graph::new(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (1, 4)]).unwrap();
        let sys = make_two_spin(g, 1.5, 0.7, 0.9).unwrap();
        let t1 = PartialConfig::from_pairs([(0, PLUS), (3, MINUS)]);
        let t2 = PartialConfig::from_pairs([(4, PLUS)]);
        let twice = sys.condition(&t1).unwrap().condition(&t2).unwrap();
        let once = sys.condition(&t1.merged(&t2).unwrap()).unwrap();
        for cfg in all_configs(&sys) {
            assert_eq!(twice.weight(&cfg).unwrap(), once.weight(&cfg).unwrap());
        }
    }

    #[test]
    fn pinned_weight_matches_definition() {
        let g = Graph::new(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)]).unwrap();
        let sys = make_two_spin(g, 1.3, 0.4, 2.0).unwrap();
        let tau = PartialConfig::from_pairs([(1, PLUS), (3, MINUS)]);
        let c = sys.condition(&tau).unwrap();
        for cfg in all_configs(&sys) {
            let consistent = tau.iter().all(|(v, s)| cfg[v] == s);
            let w = c.weight(&cfg).unwrap();
            if !consistent {
                assert_eq!(w, 0.0);
                continue;
            }
            // w^τ: free fields, every edge touching a free vertex
            let mut expect = 1.0;
            for v in [0usize, 2, 4] {
                expect *= if cfg[v] == PLUS { 2.0 } else { 1.0 };
            }
            for &(u, v) in sys.graph().edges() {
                if tau.get(u).is_some() && tau.get(v).is_some() {
                    continue;
                }
                expect *= match (cfg[u], cfg[v]) {
                    (PLUS, PLUS) => 1.3,
                    (MINUS, MINUS) => 0.4,
                    _ => 1.0,
                };
            }
            assert!((w - expect).abs() < 1e-12 * expect.max(1.0));
        }
    }

    #[test]
    fn two_spin_hardcore_limit() {
        for g in [Graph::cycle(5), Graph::star(4), Graph::complete(4)] {
            let a = make_two_spin(g.clone(), 0.0, 1.0, 1.7).unwrap();
            let b = make_hardcore(g, 1.7).unwrap();
            for cfg in all_configs(&a) {
                assert_eq!(a.weight(&cfg).unwrap(), b.weight(&cfg).unwrap());
            }
        }
    }

    #[test]
    fn hamming_examples() {
        let rho = HammingWeight::new(vec![1, 2, 5]).unwrap();
        let a = PartialConfig::from_pairs([(0, 0), (1, 0), (2, 0)]);
        let b = PartialConfig::from_pairs([(0, 0), (1, 1), (2, 1)]);
        assert_eq!(hamming_distance(&rho, &a, &a).unwrap(), 0);
        assert_eq!(hamming_distance(&rho, &a, &b).unwrap(), 7);
        let unit = HammingWeight::unit(3);
        let c = PartialConfig::from_pairs([(0, 1), (1, 1), (2, 1)]);
        assert_eq!(hamming_distance(&unit, &a, &c).unwrap(), 3);
        let short = PartialConfig::from_pairs([(0, 1)]);
        assert!(hamming_distance(&unit, &a, &short).is_err());
        assert!(HammingWeight::new(vec![1, 0]).is_err());
    }

    #[test]
    fn constants() {
        assert_eq!(lambda_critical(3).unwrap(), 4.0);
        assert_eq!(lambda_critical(4).unwrap(), 1.6875);
        assert!((lambda_critical(5).unwrap() - 256.0 / 243.0).abs() < 1e-15);
        assert!(lambda_critical(2).is_err());
        let a = alpha_star();
        assert!((a - (1.0 / a).exp()).abs() <= 1e-12);
        assert!(a > 1.76 && a < 1.77);
    }

    #[test]
    fn lambda_critical_decreasing() {
        let vals: Vec<f64> = (3..=64).map(|d| lambda_critical(d).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn list_coloring_infeasible_edge_has_zero_weight() {
        let sys = make_list_coloring(Graph::complete(2), &[vec![1], vec![1]]).unwrap();
        assert_eq!(sys.weight(&[1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn split_vertex_preserves_conditionals() {
        // splitting with every copy at value s equals pinning v to s, up to a constant
        let g = Graph::new(4, &[(0, 1), (0, 2), (0, 3), (1, 2)]).unwrap();
        let sys = make_two_spin(g, 1.4, 0.6, 1.1).unwrap();
        for s in [MINUS, PLUS] {
            let split = sys.split_vertex(0, &[s, s, s], s);
            let pinned = sys.pin(0, s).unwrap();
            let mut ratio = None;
            for cfg in all_configs(&sys) {
                let a = split.weight(&cfg).unwrap();
                let b = pinned.weight(&cfg).unwrap();
                assert_eq!(a == 0.0, b == 0.0);
                if b > 0.0 {
                    let r = a / b;
                    let r0 = *ratio.get_or_insert(r);
                    assert!((r - r0).abs() < 1e-12);
                }
            }
        }
    }
}
