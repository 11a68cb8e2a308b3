//! Brute-force ground truth for small instances.
//!
//! Everything here works on explicit enumerations: exact distributions,
//! marginals, φ-divergences, dense transition matrices of heat-bath block
//! dynamics, spectral gaps via the symmetrised matrix `D^{1/2} P D^{-1/2}`,
//! influence matrices and Wasserstein distances under weighted Hamming
//! cost.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpinError};
use crate::spin::{HammingWeight, Spin, SpinSystem, PLUS};
use crate::transport::min_cost_transport;

pub const DEFAULT_STATE_CAP: u64 = 1 << 24;

/// Enumeration cap, overridable through `SPINLAB_STATE_CAP`.
pub fn state_cap() -> u64 {
    std::env::var("SPINLAB_STATE_CAP")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_STATE_CAP)
}

/// A finitely supported distribution over configurations of `vertices`.
/// Configurations are stored as spin vectors indexed by position in
/// `vertices`.
#[derive(Debug, Clone, Serialize)]
pub struct ExactDistribution {
    vertices: Vec<usize>,
    support: Vec<Vec<Spin>>,
    prob: Vec<f64>,
    #[serde(skip)]
    index: HashMap<Vec<Spin>, usize>,
    #[serde(skip)]
    cdf: Vec<f64>,
}

impl ExactDistribution {
    pub fn new(vertices: Vec<usize>, support: Vec<Vec<Spin>>, prob: Vec<f64>) -> Result<Self> {
        if support.len() != prob.len() {
            return Err(SpinError::invalid("support and probabilities differ in length"));
        }
        if prob.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(SpinError::invalid("probabilities must be finite and nonnegative"));
        }
        let total: f64 = prob.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(SpinError::invalid(format!("probabilities sum to {total}")));
        }
        let mut index = HashMap::with_capacity(support.len());
        for (i, s) in support.iter().enumerate() {
            if s.len() != vertices.len() {
                return Err(SpinError::invalid("configuration length mismatch"));
            }
            if index.insert(s.clone(), i).is_some() {
                return Err(SpinError::invalid("duplicate support entry"));
            }
        }
        let mut acc = 0.0;
        let cdf = prob
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(ExactDistribution { vertices, support, prob, index, cdf })
    }

    /// Normalises nonnegative weights, dropping zero-weight entries.
    pub fn from_weights(vertices: Vec<usize>, configs: Vec<Vec<Spin>>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(SpinError::Infeasible("total weight is zero".into()));
        }
        let (support, prob): (Vec<_>, Vec<_>) = configs
            .into_iter()
            .zip(weights)
            .filter(|(_, w)| *w > 0.0)
            .map(|(c, w)| (c, w / total))
            .unzip();
        let sum: f64 = prob.iter().sum();
        let prob = prob.into_iter().map(|p| p / sum).collect();
        ExactDistribution::new(vertices, support, prob)
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn support(&self) -> &[Vec<Spin>] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.prob
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn index_of(&self, config: &[Spin]) -> Option<usize> {
        self.index.get(config).copied()
    }

    pub fn prob_of(&self, config: &[Spin]) -> f64 {
        self.index_of(config).map_or(0.0, |i| self.prob[i])
    }

    fn position(&self, v: usize) -> Result<usize> {
        self.vertices
            .iter()
            .position(|&u| u == v)
            .ok_or_else(|| SpinError::invalid(format!("vertex {v} is not a coordinate of this distribution")))
    }

    /// Marginal on `subset` (coordinates in the order given).
    pub fn marginal(&self, subset: &[usize]) -> Result<ExactDistribution> {
        let pos: Vec<usize> = subset.iter().map(|&v| self.position(v)).collect::<Result<_>>()?;
        let mut acc: HashMap<Vec<Spin>, f64> = HashMap::new();
        let mut order = Vec::new();
        for (s, &p) in self.support.iter().zip(&self.prob) {
            let key: Vec<Spin> = pos.iter().map(|&i| s[i]).collect();
            let slot = acc.entry(key.clone()).or_insert_with(|| {
                order.push(key);
                0.0
            });
            *slot += p;
        }
        let prob = order.iter().map(|k| acc[k]).collect();
        ExactDistribution::from_weights(subset.to_vec(), order, prob)
    }

    /// Probability vector of a single coordinate over `[q]`.
    pub fn site_marginal(&self, v: usize, q: usize) -> Result<Vec<f64>> {
        let i = self.position(v)?;
        let mut out = vec![0.0; q];
        for (s, &p) in self.support.iter().zip(&self.prob) {
            out[s[i] as usize] += p;
        }
        Ok(out)
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random::<f64>() * self.cdf.last().copied().unwrap_or(1.0);
        self.cdf.partition_point(|&c| c <= u).min(self.len() - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &[Spin] {
        &self.support[self.sample_index(rng)]
    }

    /// Probability vector aligned with `states` (zero off the support).
    pub fn aligned(&self, states: &[Vec<Spin>]) -> Vec<f64> {
        states.iter().map(|s| self.prob_of(s)).collect()
    }

    /// `state,prob` rows, states written as spin strings.
    pub fn to_csv(&self, two_spin_symbols: bool) -> String {
        let mut out = String::from("state,prob\n");
        for (s, p) in self.support.iter().zip(&self.prob) {
            out.push_str(&crate::io::spin_string(s, two_spin_symbols));
            out.push(',');
            out.push_str(&crate::io::format_float(*p));
            out.push('\n');
        }
        out
    }
}

/// Enumerates `μ^τ` over all assignments of the free vertices. The returned
/// distribution has every vertex of the graph as a coordinate.
pub fn enumerate(system: &SpinSystem) -> Result<ExactDistribution> {
    enumerate_with_cap(system, state_cap())
}

pub fn enumerate_with_cap(system: &SpinSystem, cap: u64) -> Result<ExactDistribution> {
    let n = system.n();
    let free = system.free_vertices();
    let size: f64 = free.iter().map(|&v| system.domain(v).len() as f64).product();
    if size > cap as f64 {
        return Err(SpinError::SizeCap { states: size, cap });
    }
    let mut config: Vec<Spin> = (0..n)
        .map(|v| system.pinned(v).unwrap_or(system.domain(v)[0]))
        .collect();
    let mut digits = vec![0usize; free.len()];
    let mut configs = Vec::new();
    let mut logw = Vec::new();
    loop {
        let lw = system.log_weight_unchecked(&config);
        if lw > f64::NEG_INFINITY {
            configs.push(config.clone());
            logw.push(lw);
        }
        // odometer over free vertices
        let mut i = 0;
        loop {
            if i == free.len() {
                return finish_enumeration(n, configs, logw);
            }
            let v = free[i];
            digits[i] += 1;
            if digits[i] < system.domain(v).len() {
                config[v] = system.domain(v)[digits[i]];
                break;
            }
            digits[i] = 0;
            config[v] = system.domain(v)[0];
            i += 1;
        }
    }
}

fn finish_enumeration(n: usize, configs: Vec<Vec<Spin>>, logw: Vec<f64>) -> Result<ExactDistribution> {
    if configs.is_empty() {
        return Err(SpinError::Infeasible("every configuration has zero weight".into()));
    }
    let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights = logw.iter().map(|l| (l - m).exp()).collect();
    ExactDistribution::from_weights((0..n).collect(), configs, weights)
}

/// Partition function `Σ_σ w^τ(σ)` by enumeration (linear scale).
pub fn partition_function(system: &SpinSystem) -> Result<f64> {
    let free = system.free_vertices();
    let size: f64 = free.iter().map(|&v| system.domain(v).len() as f64).product();
    let cap = state_cap();
    if size > cap as f64 {
        return Err(SpinError::SizeCap { states: size, cap });
    }
    let mut z = 0.0;
    let mut config: Vec<Spin> = (0..system.n())
        .map(|v| system.pinned(v).unwrap_or(system.domain(v)[0]))
        .collect();
    let mut digits = vec![0usize; free.len()];
    'outer: loop {
        z += system.weight(&config)?;
        let mut i = 0;
        loop {
            if i == free.len() {
                break 'outer;
            }
            let v = free[i];
            digits[i] += 1;
            if digits[i] < system.domain(v).len() {
                config[v] = system.domain(v)[digits[i]];
                break;
            }
            digits[i] = 0;
            config[v] = system.domain(v)[0];
            i += 1;
        }
    }
    Ok(z)
}

pub fn exact_marginal(system: &SpinSystem, subset: &[usize]) -> Result<ExactDistribution> {
    enumerate(system)?.marginal(subset)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Divergence {
    Tv,
    Chi2,
    Kl,
}

/// `D_φ(ν ‖ μ)` for two distributions over the same coordinates.
pub fn divergence(kind: Divergence, nu: &ExactDistribution, mu: &ExactDistribution) -> Result<f64> {
    if nu.vertices() != mu.vertices() {
        return Err(SpinError::invalid("distributions have different coordinates"));
    }
    match kind {
        Divergence::Tv => {
            let mut l1 = 0.0;
            for (s, &p) in nu.support().iter().zip(nu.probs()) {
                l1 += (p - mu.prob_of(s)).abs();
            }
            for (s, &p) in mu.support().iter().zip(mu.probs()) {
                if nu.index_of(s).is_none() {
                    l1 += p;
                }
            }
            Ok(0.5 * l1)
        }
        Divergence::Chi2 | Divergence::Kl => {
            let mut acc = 0.0;
            for (s, &p) in nu.support().iter().zip(nu.probs()) {
                let m = mu.prob_of(s);
                if m == 0.0 {
                    return Err(SpinError::invalid("ν is not absolutely continuous w.r.t. μ"));
                }
                acc += match kind {
                    Divergence::Chi2 => p * p / m,
                    _ => p * (p / m).ln(),
                };
            }
            Ok(match kind {
                Divergence::Chi2 => (acc - 1.0).max(0.0),
                _ => acc.max(0.0),
            })
        }
    }
}

/// TV distance between two probability vectors on the same index set.
pub fn tv_vectors(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Dense transition matrix over an explicit state list.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    states: Vec<Vec<Spin>>,
    p: DMatrix<f64>,
    stationary: Vec<f64>,
}

impl TransitionMatrix {
    /// Validates row sums (1e-12) and stationarity (1e-10).
    pub fn new(states: Vec<Vec<Spin>>, p: DMatrix<f64>, stationary: Vec<f64>) -> Result<Self> {
        let n = states.len();
        if p.nrows() != n || p.ncols() != n || stationary.len() != n {
            return Err(SpinError::invalid("transition matrix dimensions do not match the state list"));
        }
        for i in 0..n {
            let s: f64 = p.row(i).iter().sum();
            if (s - 1.0).abs() > 1e-12 || p.row(i).iter().any(|&x| x < 0.0) {
                return Err(SpinError::invalid(format!("row {i} is not a distribution (sum {s})")));
            }
        }
        let pi = DVector::from_column_slice(&stationary);
        let moved = p.transpose() * &pi;
        if (moved - &pi).amax() > 1e-10 {
            return Err(SpinError::invalid("stationary vector is not fixed by P"));
        }
        Ok(TransitionMatrix { states, p, stationary })
    }

    pub fn states(&self) -> &[Vec<Spin>] {
        &self.states
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Largest `|π(x)P(x,y) − π(y)P(y,x)|`.
    pub fn detailed_balance_error(&self) -> f64 {
        let n = self.len();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i + 1..n {
                let d = (self.stationary[i] * self.p[(i, j)] - self.stationary[j] * self.p[(j, i)]).abs();
                worst = worst.max(d);
            }
        }
        worst
    }

    fn symmetrized(&self) -> DMatrix<f64> {
        let n = self.len();
        let sq: Vec<f64> = self.stationary.iter().map(|p| p.sqrt()).collect();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = sq[i] * self.p[(i, j)] / sq[j];
            }
        }
        (&a + a.transpose()) * 0.5
    }

    /// Eigen-decomposition of the symmetrised matrix, eigenvalues sorted
    /// in decreasing order with matching eigenvector columns.
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        let eig = SymmetricEigen::new(self.symmetrized());
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vecs = DMatrix::from_columns(&idx.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
        (vals, vecs)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigen().0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().last().copied().unwrap_or(1.0)
    }

    /// Distribution after one step from `start` (row-vector product).
    pub fn step_distribution(&self, start: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(start);
        (self.p.transpose() * v).iter().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGap {
    pub lambda2: f64,
    pub gap: f64,
    pub t_rel: f64,
}

/// Gaps below this are reported as zero (reducible chain, `t_rel = ∞`).
const GAP_FLOOR: f64 = 1e-12;

pub fn spectral_gap(m: &TransitionMatrix) -> SpectralGap {
    if m.len() <= 1 {
        return SpectralGap { lambda2: 0.0, gap: 1.0, t_rel: 1.0 };
    }
    let vals = m.eigenvalues();
    let lambda2 = vals[1];
    let mut gap = 1.0 - lambda2;
    if gap < GAP_FLOOR {
        gap = 0.0;
    }
    let t_rel = if gap == 0.0 { f64::INFINITY } else { 1.0 / gap };
    SpectralGap { lambda2, gap, t_rel }
}

/// Which part of a block is redrawn by a heat-bath move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockConvention {
    /// Resample the listed block given everything else.
    ResampleBlock,
    /// Keep the listed block and resample its complement.
    ResampleComplement,
}

/// For a fixed resampled set: group index of each state and group masses.
struct HeatBath {
    group: Vec<usize>,
    mass: Vec<f64>,
    members: Vec<Vec<usize>>,
}

fn heat_bath(dist: &ExactDistribution, resampled: &[bool]) -> HeatBath {
    let keep: Vec<usize> = (0..dist.vertices().len()).filter(|&i| !resampled[i]).collect();
    let mut ids: HashMap<Vec<Spin>, usize> = HashMap::new();
    let mut group = Vec::with_capacity(dist.len());
    let mut mass = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (x, s) in dist.support().iter().enumerate() {
        let key: Vec<Spin> = keep.iter().map(|&i| s[i]).collect();
        let g = *ids.entry(key).or_insert_with(|| {
            mass.push(0.0);
            members.push(Vec::new());
            mass.len() - 1
        });
        mass[g] += dist.probs()[x];
        members[g].push(x);
        group.push(g);
    }
    HeatBath { group, mass, members }
}

fn resampled_mask(dist: &ExactDistribution, block: &[usize], convention: BlockConvention) -> Result<Vec<bool>> {
    let mut in_block = vec![false; dist.vertices().len()];
    for &v in block {
        let i = dist
            .vertices()
            .iter()
            .position(|&u| u == v)
            .ok_or_else(|| SpinError::invalid(format!("block vertex {v} is not a coordinate")))?;
        in_block[i] = true;
    }
    Ok(match convention {
        BlockConvention::ResampleBlock => in_block,
        BlockConvention::ResampleComplement => in_block.into_iter().map(|b| !b).collect(),
    })
}

/// Heat-bath block dynamics over the support of `dist`: pick block `b`
/// with probability `weights[b]` (uniform by default) and redraw it (or
/// its complement) from the conditional distribution.
pub fn block_matrix_of(
    dist: &ExactDistribution,
    blocks: &[Vec<usize>],
    weights: Option<&[f64]>,
    convention: BlockConvention,
) -> Result<TransitionMatrix> {
    if blocks.is_empty() {
        return Err(SpinError::invalid("at least one block is required"));
    }
    let w: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != blocks.len() || w.iter().any(|&x| x < 0.0) {
                return Err(SpinError::invalid("block weights must be nonnegative, one per block"));
            }
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x / s).collect()
        }
        None => vec![1.0 / blocks.len() as f64; blocks.len()],
    };
    let n = dist.len();
    let mut p = DMatrix::zeros(n, n);
    for (block, &wb) in blocks.iter().zip(&w) {
        if wb == 0.0 {
            continue;
        }
        let hb = heat_bath(dist, &resampled_mask(dist, block, convention)?);
        for x in 0..n {
            let g = hb.group[x];
            for &y in &hb.members[g] {
                p[(x, y)] += wb * dist.probs()[y] / hb.mass[g];
            }
        }
    }
    TransitionMatrix::new(dist.support().to_vec(), p, dist.probs().to_vec())
}

pub fn block_matrix(
    system: &SpinSystem,
    blocks: &[Vec<usize>],
    weights: Option<&[f64]>,
    convention: BlockConvention,
) -> Result<TransitionMatrix> {
    block_matrix_of(&enumerate(system)?, blocks, weights, convention)
}

/// Glauber dynamics picking uniformly among all `n` vertices; pinned
/// vertices give identity updates.
pub fn glauber_matrix(system: &SpinSystem) -> Result<TransitionMatrix> {
    let blocks: Vec<Vec<usize>> = (0..system.n()).map(|v| vec![v]).collect();
    block_matrix(system, &blocks, None, BlockConvention::ResampleBlock)
}

/// Glauber dynamics picking uniformly among `vertices` only.
pub fn glauber_matrix_on(system: &SpinSystem, vertices: &[usize]) -> Result<TransitionMatrix> {
    let dist = enumerate(system)?;
    if vertices.is_empty() {
        let n = dist.len();
        return TransitionMatrix::new(dist.support().to_vec(), DMatrix::identity(n, n), dist.probs().to_vec());
    }
    let blocks: Vec<Vec<usize>> = vertices.iter().map(|&v| vec![v]).collect();
    block_matrix_of(&dist, &blocks, None, BlockConvention::ResampleBlock)
}

/// Pairwise influence matrix of a two-spin distribution, rows and columns
/// indexed by the free vertices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfluenceMatrix {
    pub vertices: Vec<usize>,
    /// Row-major; `psi[i*k + j] = μ^{v_i←+}_{v_j}(+) − μ^{v_i←−}_{v_j}(+)`.
    pub psi: Vec<f64>,
}

impl InfluenceMatrix {
    pub fn get(&self, from: usize, to: usize) -> Option<f64> {
        let i = self.vertices.iter().position(|&v| v == from)?;
        let j = self.vertices.iter().position(|&v| v == to)?;
        Some(self.psi[i * self.vertices.len() + j])
    }
}

/// Rows for vertices whose spin is forced (one of the two conditionals has
/// probability zero) are left at zero.
pub fn influence_matrix(system: &SpinSystem) -> Result<InfluenceMatrix> {
    if system.q() != 2 {
        return Err(SpinError::invalid("influence matrix needs q = 2"));
    }
    let dist = enumerate(system)?;
    let free = system.free_vertices();
    let k = free.len();
    let mut psi = vec![0.0; k * k];
    for (i, &v) in free.iter().enumerate() {
        // conditional +-probabilities of every vertex given v = ±
        let mut mass = [0.0; 2];
        let mut plus = [vec![0.0; system.n()], vec![0.0; system.n()]];
        for (s, &p) in dist.support().iter().zip(dist.probs()) {
            let side = s[v] as usize;
            mass[side] += p;
            for (u, &su) in s.iter().enumerate() {
                if su == PLUS {
                    plus[side][u] += p;
                }
            }
        }
        if mass[0] == 0.0 || mass[1] == 0.0 {
            continue;
        }
        for (j, &u) in free.iter().enumerate() {
            psi[i * k + j] = plus[1][u] / mass[1] - plus[0][u] / mass[0];
        }
    }
    Ok(InfluenceMatrix { vertices: free, psi })
}

/// Optimal transport cost between `nu` and `mu` under `H_ρ`.
pub fn wasserstein_hamming(nu: &ExactDistribution, mu: &ExactDistribution, rho: &HammingWeight) -> Result<f64> {
    if nu.vertices() != mu.vertices() {
        return Err(SpinError::invalid("distributions have different coordinates"));
    }
    const MAX_SUPPORT: usize = 4096;
    if nu.len() > MAX_SUPPORT || mu.len() > MAX_SUPPORT {
        return Err(SpinError::SizeCap { states: nu.len().max(mu.len()) as f64, cap: MAX_SUPPORT as u64 });
    }
    let verts = nu.vertices();
    let plan = min_cost_transport(nu.probs(), mu.probs(), |i, j| {
        let (a, b) = (&nu.support()[i], &mu.support()[j]);
        a.iter()
            .zip(b)
            .zip(verts)
            .filter(|((x, y), _)| x != y)
            .map(|(_, &v)| rho.get(v) as f64)
            .sum()
    });
    Ok(plan.cost)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockFactorizationReport {
    pub constant: f64,
    pub trials: usize,
    /// Random probes violating `Var ≤ (C/ℓ) Σ μ[Var_B]`.
    pub violations: usize,
    /// Largest observed `Var / ((1/ℓ) Σ μ[Var_B])`.
    pub worst_ratio: f64,
    /// Relaxation time of the matching block dynamics.
    pub t_rel: f64,
    /// Whether the second-eigenvector probe violates the inequality.
    pub eigen_probe_violates: bool,
    pub holds: bool,
}

/// `(Var_μ f, (1/ℓ)Σ_B μ[Var_B f])` for the given resampled blocks.
pub fn variance_and_block_energy(dist: &ExactDistribution, baths: &[Vec<bool>], f: &[f64]) -> (f64, f64) {
    let p = dist.probs();
    let mean: f64 = p.iter().zip(f).map(|(a, b)| a * b).sum();
    let var: f64 = p.iter().zip(f).map(|(a, b)| a * (b - mean).powi(2)).sum();
    let mut energy = 0.0;
    for mask in baths {
        let hb = heat_bath(dist, mask);
        for (g, members) in hb.members.iter().enumerate() {
            let m = hb.mass[g];
            let gm: f64 = members.iter().map(|&x| p[x] * f[x]).sum::<f64>() / m;
            let gv: f64 = members.iter().map(|&x| p[x] * (f[x] - gm).powi(2)).sum::<f64>();
            energy += gv;
        }
    }
    (var, energy / baths.len() as f64)
}

/// Probes block factorisation of variance with constant `c` on random
/// Gaussian test functions and on the second eigenvector of the block
/// dynamics. `blocks` are the resampled sets.
pub fn check_block_factorization<R: Rng + ?Sized>(
    system: &SpinSystem,
    blocks: &[Vec<usize>],
    c: f64,
    trials: usize,
    rng: &mut R,
) -> Result<BlockFactorizationReport> {
    let dist = enumerate(system)?;
    check_block_factorization_of(&dist, blocks, c, trials, rng)
}

pub fn check_block_factorization_of<R: Rng + ?Sized>(
    dist: &ExactDistribution,
    blocks: &[Vec<usize>],
    c: f64,
    trials: usize,
    rng: &mut R,
) -> Result<BlockFactorizationReport> {
    let masks: Vec<Vec<bool>> = blocks
        .iter()
        .map(|b| resampled_mask(dist, b, BlockConvention::ResampleBlock))
        .collect::<Result<_>>()?;
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    let tol = 1e-12;
    for _ in 0..trials {
        let f: Vec<f64> = (0..dist.len()).map(|_| rng.sample(StandardNormal)).collect();
        let (var, energy) = variance_and_block_energy(dist, &masks, &f);
        if var > c * energy + tol {
            violations += 1;
        }
        if energy > 0.0 {
            worst = worst.max(var / energy);
        }
    }
    let m = block_matrix_of(dist, blocks, None, BlockConvention::ResampleBlock)?;
    let gap = spectral_gap(&m);
    let mut eigen_probe_violates = false;
    if m.len() > 1 {
        let (_, vecs) = m.eigen();
        let f: Vec<f64> = (0..m.len())
            .map(|x| vecs[(x, 1)] / m.stationary()[x].sqrt())
            .collect();
        let (var, energy) = variance_and_block_energy(dist, &masks, &f);
        if energy > 0.0 {
            worst = worst.max(var / energy);
        }
        eigen_probe_violates = var > c * energy * (1.0 + 1e-9) + tol;
    }
    Ok(BlockFactorizationReport {
        constant: c,
        trials,
        violations,
        worst_ratio: worst,
        t_rel: gap.t_rel,
        eigen_probe_violates,
        holds: violations == 0 && !eigen_probe_violates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::rng::stream;
    use crate::spin::{make_hardcore, make_list_coloring, make_two_spin, MINUS};

    #[test]
    fn hardcore_small_counts() {
        let p3 = make_hardcore(Graph::path(3), 1.0).unwrap();
        let d = enumerate(&p3).unwrap();
        assert_eq!(d.len(), 5);
        assert!(d.probs().iter().all(|&p| (p - 0.2).abs() < 1e-15));
        assert_eq!(partition_function(&p3).unwrap(), 5.0);
        let mid = exact_marginal(&p3, &[1]).unwrap();
        assert!((mid.prob_of(&[PLUS]) - 0.2).abs() < 1e-15);
        assert!((mid.prob_of(&[MINUS]) - 0.8).abs() < 1e-15);

        let k2 = make_hardcore(Graph::complete(2), 1.0).unwrap();
        assert_eq!(partition_function(&k2).unwrap(), 3.0);
        let d = enumerate(&k2).unwrap();
        assert!((d.prob_of(&[MINUS, MINUS]) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_vertex_marginal() {
        let lambda = 2.5;
        let sys = make_hardcore(Graph::new(1, &[]).unwrap(), lambda).unwrap();
        let m = exact_marginal(&sys, &[0]).unwrap();
        assert!((m.prob_of(&[MINUS]) - 1.0 / (1.0 + lambda)).abs() < 1e-15);
        assert!((m.prob_of(&[PLUS]) - lambda / (1.0 + lambda)).abs() < 1e-15);
    }

    #[test]
    fn two_spin_examples() {
        // β=γ=1 is a product measure
        let sys = make_two_spin(Graph::cycle(4), 1.0, 1.0, 3.0).unwrap();
        let d = enumerate(&sys).unwrap();
        for v in 0..4 {
            let m = d.site_marginal(v, 2).unwrap();
            assert!((m[1] - 0.75).abs() < 1e-14);
        }
        for (s, &p) in d.support().iter().zip(d.probs()) {
            let prod: f64 = s.iter().map(|&x| if x == PLUS { 0.75 } else { 0.25 }).product();
            assert!((p - prod).abs() < 1e-14);
        }
        // Ising on K2 with β=γ=2: Z = 2 + 2 + 1 + 1
        let ising = make_two_spin(Graph::complete(2), 2.0, 2.0, 1.0).unwrap();
        assert_eq!(partition_function(&ising).unwrap(), 6.0);
        let d = enumerate(&ising).unwrap();
        let agree = d.prob_of(&[0, 0]) + d.prob_of(&[1, 1]);
        assert!((agree - 4.0 / 6.0).abs() < 1e-15);
        let ising4 = make_two_spin(Graph::complete(2), 4.0, 4.0, 1.0).unwrap();
        assert_eq!(partition_function(&ising4).unwrap(), 10.0);
    }

    #[test]
    fn coloring_examples() {
        let k2 = make_list_coloring(Graph::complete(2), &[vec![0, 1], vec![0, 1]]).unwrap();
        let d = enumerate(&k2).unwrap();
        assert_eq!(d.len(), 2);
        assert!(d.probs().iter().all(|&p| (p - 0.5).abs() < 1e-15));
        let tri = make_list_coloring(Graph::complete(3), &vec![vec![0, 1, 2]; 3]).unwrap();
        assert_eq!(enumerate(&tri).unwrap().len(), 6);
        let bad = make_list_coloring(Graph::complete(2), &[vec![1], vec![1]]).unwrap();
        assert!(matches!(enumerate(&bad), Err(SpinError::Infeasible(_))));
    }

    #[test]
    fn size_cap_is_enforced() {
        let sys = make_hardcore(Graph::path(12), 1.0).unwrap();
        assert!(matches!(enumerate_with_cap(&sys, 1000), Err(SpinError::SizeCap { .. })));
    }

    fn dist(ps: &[f64]) -> ExactDistribution {
        let support = (0..ps.len()).map(|i| vec![i as Spin]).collect();
        ExactDistribution::new(vec![0], support, ps.to_vec()).unwrap()
    }

    #[test]
    fn divergence_examples() {
        let half = dist(&[0.5, 0.5]);
        for kind in [Divergence::Tv, Divergence::Chi2, Divergence::Kl] {
            assert_eq!(divergence(kind, &half, &half).unwrap(), 0.0);
        }
        let point = ExactDistribution::new(vec![0], vec![vec![0]], vec![1.0]).unwrap();
        assert_eq!(divergence(Divergence::Tv, &point, &half).unwrap(), 0.5);
        let skew = dist(&[0.75, 0.25]);
        assert!((divergence(Divergence::Chi2, &skew, &half).unwrap() - 0.25).abs() < 1e-15);
        let kl = 0.75 * (1.5f64).ln() + 0.25 * (0.5f64).ln();
        assert!((divergence(Divergence::Kl, &skew, &half).unwrap() - kl).abs() < 1e-15);
        assert!(divergence(Divergence::Kl, &half, &point).is_err());
    }

    #[test]
    fn glauber_on_k2_hardcore() {
        // states (−,−), (+,−), (−,+) in enumeration order
        let k2 = make_hardcore(Graph::complete(2), 1.0).unwrap();
        let m = glauber_matrix(&k2).unwrap();
        let idx = |s: &[Spin]| m.states().iter().position(|x| x == s).unwrap();
        let (o, a, b) = (idx(&[0, 0]), idx(&[1, 0]), idx(&[0, 1]));
        let p = m.matrix();
        let third = 1.0 / 3.0;
        // from (−,−): each vertex becomes + w.p. 1/2, chosen w.p. 1/2
        assert!((p[(o, a)] - 0.25).abs() < 1e-15);
        assert!((p[(o, b)] - 0.25).abs() < 1e-15);
        assert!((p[(o, o)] - 0.5).abs() < 1e-15);
        // from (+,−): resampling vertex 0 gives + w.p. 1/2; vertex 1 is blocked
        assert!((p[(a, o)] - 0.25).abs() < 1e-15);
        assert!((p[(a, a)] - 0.75).abs() < 1e-15);
        assert_eq!(p[(a, b)], 0.0);
        let _ = third;
        // eigenvalues of this chain: 1, 3/4, 1/4
        let g = spectral_gap(&m);
        assert!((g.lambda2 - 0.75).abs() < 1e-12);
        assert!((g.t_rel - 4.0).abs() < 1e-10);
        assert!((m.min_eigenvalue() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn single_vertex_gap_is_one() {
        let sys = make_hardcore(Graph::new(1, &[]).unwrap(), 0.7).unwrap();
        let m = glauber_matrix(&sys).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((m.matrix()[(i, j)] - m.stationary()[j]).abs() < 1e-15);
            }
        }
        let g = spectral_gap(&m);
        assert!((g.gap - 1.0).abs() < 1e-12);
        assert!((g.t_rel - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disconnected_chain_has_infinite_relaxation() {
        let m = TransitionMatrix::new(vec![vec![0], vec![1]], DMatrix::identity(2, 2), vec![0.5, 0.5]).unwrap();
        let g = spectral_gap(&m);
        assert_eq!(g.gap, 0.0);
        assert!(g.t_rel.is_infinite());
    }

    #[test]
    fn pinned_vertex_is_a_fixed_point() {
        let sys = make_hardcore(Graph::path(3), 1.0).unwrap().pin(0, PLUS).unwrap();
        let d = enumerate(&sys).unwrap();
        assert!(d.support().iter().all(|s| s[0] == PLUS));
        let m = glauber_matrix(&sys).unwrap();
        assert!(m.detailed_balance_error() < 1e-15);
    }

    #[test]
    fn blocks_special_cases() {
        let sys = make_two_spin(Graph::cycle(4), 1.5, 0.5, 1.2).unwrap();
        let all = block_matrix(&sys, &[vec![0, 1, 2, 3]], None, BlockConvention::ResampleBlock).unwrap();
        let g = spectral_gap(&all);
        assert!((g.gap - 1.0).abs() < 1e-10);
        let singles: Vec<Vec<usize>> = (0..4).map(|v| vec![v]).collect();
        let b = block_matrix(&sys, &singles, None, BlockConvention::ResampleBlock).unwrap();
        let gl = glauber_matrix(&sys).unwrap();
        assert!((b.matrix() - gl.matrix()).amax() < 1e-15);
    }

    #[test]
    fn down_up_walk_is_psd() {
        let sys = make_hardcore(Graph::path(4), 1.0).unwrap();
        // 2-block partition {0,1} | {2,3}; keep one block, resample the other
        let m = block_matrix(&sys, &[vec![0, 1], vec![2, 3]], None, BlockConvention::ResampleComplement).unwrap();
        assert!(m.min_eigenvalue() >= -1e-10);
        assert!(m.detailed_balance_error() < 1e-12);
    }

    #[test]
    fn influence_k2() {
        let lambda = 1.7;
        let k2 = make_hardcore(Graph::complete(2), lambda).unwrap();
        let inf = influence_matrix(&k2).unwrap();
        // μ^{0←+}_1(+) = 0, μ^{0←−}_1(+) = λ/(1+λ)
        assert!((inf.get(0, 1).unwrap() + lambda / (1.0 + lambda)).abs() < 1e-14);
        let prod = make_two_spin(Graph::cycle(4), 1.0, 1.0, 2.0).unwrap();
        let inf = influence_matrix(&prod).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(inf.get(i, j).unwrap().abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn wasserstein_basics() {
        let sys = make_hardcore(Graph::path(3), 1.0).unwrap();
        let d = enumerate(&sys).unwrap();
        let rho = HammingWeight::new(vec![1, 2, 3]).unwrap();
        assert!(wasserstein_hamming(&d, &d, &rho).unwrap().abs() < 1e-12);
        let a = ExactDistribution::new(vec![0, 1, 2], vec![vec![0, 0, 0]], vec![1.0]).unwrap();
        let b = ExactDistribution::new(vec![0, 1, 2], vec![vec![1, 0, 1]], vec![1.0]).unwrap();
        assert_eq!(wasserstein_hamming(&a, &b, &rho).unwrap(), 4.0);
    }

    #[test]
    fn block_factorization_probes() {
        let mut rng = stream(11);
        // product measure, singleton blocks: Efron–Stein gives C = ℓ
        let prod = make_two_spin(Graph::path(4), 1.0, 1.0, 0.6).unwrap();
        let singles: Vec<Vec<usize>> = (0..4).map(|v| vec![v]).collect();
        let r = check_block_factorization(&prod, &singles, 4.0, 200, &mut rng).unwrap();
        assert!(r.holds);
        assert!((r.t_rel - 4.0).abs() < 1e-9);

        let sys = make_hardcore(Graph::cycle(5), 1.3).unwrap();
        let blocks = vec![vec![0, 1], vec![2, 3], vec![4]];
        let probe = check_block_factorization(&sys, &blocks, 1.0, 0, &mut rng).unwrap();
        let t = probe.t_rel;
        let ok = check_block_factorization(&sys, &blocks, t, 300, &mut rng).unwrap();
        assert!(ok.holds, "{ok:?}");
        let bad = check_block_factorization(&sys, &blocks, 0.5 * t, 50, &mut rng).unwrap();
        assert!(bad.eigen_probe_violates);
        assert!(!bad.holds);
        assert!((ok.worst_ratio - t).abs() < 1e-8 * t);
    }

    #[test]
    fn marginal_of_everything_is_the_distribution() {
        let sys = make_two_spin(Graph::cycle(4), 0.3, 1.2, 0.8).unwrap();
        let d = enumerate(&sys).unwrap();
        let m = d.marginal(&[0, 1, 2, 3]).unwrap();
        assert_eq!(divergence(Divergence::Tv, &d, &m).unwrap(), 0.0);
    }
}
