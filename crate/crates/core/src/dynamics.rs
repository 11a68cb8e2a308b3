//! Markov chains: Glauber dynamics, k↔ℓ down-up walks over a partition, the
//! recursive SimDownUp sampler, the bipartite block dynamics and censored
//! updates for monotone systems, together with exact analysis helpers built
//! on the oracle.

use std::collections::HashMap;
use std::sync::Arc;

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpinError};
use crate::oracle::{
    block_matrix_of, enumerate, enumerate_with_cap, glauber_matrix, glauber_matrix_on, spectral_gap, state_cap,
    tv_vectors, BlockConvention, ExactDistribution, TransitionMatrix,
};
use crate::partition::Partition;
use crate::rng::StreamSeed;
use crate::spin::{PartialConfig, Spin, SpinSystem};

/// Index drawn proportionally to `w`, or `None` if all weights vanish.
pub(crate) fn sample_weighted<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    let mut last = None;
    for (i, &x) in w.iter().enumerate() {
        if x > 0.0 {
            if u < x {
                return Some(i);
            }
            u -= x;
            last = Some(i);
        }
    }
    last
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainState {
    pub config: Vec<Spin>,
    pub steps: u64,
}

impl ChainState {
    /// Requires `w^τ(config) > 0`.
    pub fn new(system: &SpinSystem, config: Vec<Spin>) -> Result<Self> {
        if system.weight(&config)? <= 0.0 {
            return Err(SpinError::invalid("initial configuration has zero weight"));
        }
        Ok(ChainState { config, steps: 0 })
    }
}

/// A positive-weight configuration found greedily in vertex order; falls back
/// to exact sampling when greedy choice gets stuck.
pub fn feasible_config(system: &SpinSystem) -> Result<Vec<Spin>> {
    let n = system.n();
    let mut config: Vec<Spin> = (0..n).map(|v| system.pinned(v).unwrap_or(system.domain(v)[0])).collect();
    let mut assigned: Vec<bool> = (0..n).map(|v| !system.is_free(v)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| system.graph().rank(v));
    'vertices: for v in order {
        if assigned[v] {
            continue;
        }
        for &s in system.domain(v) {
            let mut w = system.field(v)[s as usize];
            for (&u, &e) in system.graph().neighbors(v).iter().zip(system.graph().incident_edges(v)) {
                if assigned[u] {
                    w *= system.edge_weight(e, s, config[u]);
                }
            }
            if w > 0.0 {
                config[v] = s;
                assigned[v] = true;
                continue 'vertices;
            }
        }
        let dist = enumerate(system)?;
        return Ok(dist.support()[dist.len() - 1].clone());
    }
    if system.weight(&config)? > 0.0 {
        Ok(config)
    } else {
        Err(SpinError::Infeasible("no configuration of positive weight".into()))
    }
}

/// Heat-bath update of `v` given the rest of `config`. Pinned vertices keep
/// their value.
pub fn glauber_step<R: Rng + ?Sized>(system: &SpinSystem, config: &mut [Spin], v: usize, rng: &mut R) -> Result<()> {
    let mut buf = [0.0f64; 256];
    let w = &mut buf[..system.q()];
    system.conditional_weights(v, config, w);
    match sample_weighted(w, rng) {
        Some(s) => {
            config[v] = s as Spin;
            Ok(())
        }
        None => Err(SpinError::FrozenState { vertex: v }),
    }
}

/// `t` steps of Glauber dynamics choosing the vertex uniformly from all of `V`.
pub fn run_glauber<R: Rng + ?Sized>(system: &SpinSystem, state: &mut ChainState, t: u64, rng: &mut R) -> Result<()> {
    let n = system.n();
    for _ in 0..t {
        let v = rng.random_range(0..n);
        glauber_step(system, &mut state.config, v, rng)?;
        state.steps += 1;
    }
    Ok(())
}

/// `t` Glauber steps choosing the vertex uniformly from `vertices`.
pub fn run_glauber_on<R: Rng + ?Sized>(
    system: &SpinSystem,
    config: &mut [Spin],
    vertices: &[usize],
    t: u64,
    rng: &mut R,
) -> Result<()> {
    if vertices.is_empty() {
        return Ok(());
    }
    for _ in 0..t {
        let v = vertices[rng.random_range(0..vertices.len())];
        glauber_step(system, config, v, rng)?;
    }
    Ok(())
}

/// Redraws `config` on a vertex set from the conditional distribution given
/// the rest of `config`.
pub trait BlockSampler {
    fn resample(&mut self, set: &[usize], config: &mut [Spin], rng: &mut dyn RngCore) -> Result<()>;
}

/// Exact conditional sampling by enumeration, memoised per boundary.
pub struct ExactConditional {
    system: SpinSystem,
    cap: u64,
    cache: HashMap<(Vec<usize>, Vec<Spin>), Arc<ExactDistribution>>,
}

impl ExactConditional {
    pub fn new(system: &SpinSystem) -> Self {
        ExactConditional { system: system.clone(), cap: state_cap(), cache: HashMap::new() }
    }

    pub fn system(&self) -> &SpinSystem {
        &self.system
    }

    /// Exact conditional law of the whole configuration given `config`
    /// outside `set`.
    pub fn conditional(&mut self, set: &[usize], config: &[Spin]) -> Result<Arc<ExactDistribution>> {
        let mut in_set = vec![false; self.system.n()];
        for &v in set {
            in_set[v] = true;
        }
        let boundary: Vec<Spin> = config.iter().zip(&in_set).map(|(&s, &i)| if i { Spin::MAX } else { s }).collect();
        let mut key_set = set.to_vec();
        key_set.sort_unstable();
        let key = (key_set, boundary);
        if let Some(d) = self.cache.get(&key) {
            return Ok(d.clone());
        }
        let tau = PartialConfig::from_pairs(
            (0..self.system.n())
                .filter(|&v| !in_set[v] && self.system.is_free(v))
                .map(|v| (v, config[v])),
        );
        let d = Arc::new(enumerate_with_cap(&self.system.condition(&tau)?, self.cap)?);
        self.cache.insert(key, d.clone());
        Ok(d)
    }
}

impl BlockSampler for ExactConditional {
    fn resample(&mut self, set: &[usize], config: &mut [Spin], rng: &mut dyn RngCore) -> Result<()> {
        let d = self.conditional(set, config)?;
        let s = d.sample(rng);
        for &v in set {
            config[v] = s[v];
        }
        Ok(())
    }
}

/// Vertices redrawn when the blocks in `r` are chosen.
pub fn resampled_set(n: usize, p: &Partition, r: &[usize], convention: BlockConvention) -> Vec<usize> {
    let u = p.union_of(r);
    match convention {
        BlockConvention::ResampleBlock => u,
        BlockConvention::ResampleComplement => {
            let mut keep = vec![false; n];
            for v in u {
                keep[v] = true;
            }
            (0..n).filter(|&v| !keep[v]).collect()
        }
    }
}

/// One transition of the k↔ℓ walk: pick `R ⊆ [k]` with `|R| = ℓ` and
/// redraw `V∖U_R` (or `U_R` under `ResampleBlock`).
pub fn down_up_step_with<R: Rng>(
    sampler: &mut dyn BlockSampler,
    n: usize,
    p: &Partition,
    ell: usize,
    convention: BlockConvention,
    config: &mut [Spin],
    rng: &mut R,
) -> Result<()> {
    if ell > p.k() {
        return Err(SpinError::invalid(format!("ℓ={ell} exceeds k={}", p.k())));
    }
    let mut r = sample_indices(rng, p.k(), ell).into_vec();
    r.sort_unstable();
    let set = resampled_set(n, p, &r, convention);
    sampler.resample(&set, config, rng)
}

pub fn down_up_step<R: Rng>(
    system: &SpinSystem,
    p: &Partition,
    ell: usize,
    convention: BlockConvention,
    config: &mut [Spin],
    rng: &mut R,
) -> Result<()> {
    let mut sampler = ExactConditional::new(system);
    down_up_step_with(&mut sampler, system.n(), p, ell, convention, config, rng)
}

/// Block list of the k↔ℓ walk for [`block_matrix_of`]: every `U_R`, `|R| = ℓ`.
pub fn down_up_blocks(p: &Partition, ell: usize) -> Vec<Vec<usize>> {
    (0..p.k()).combinations(ell).map(|r| p.union_of(&r)).collect()
}

/// Exact transition matrix of the k↔ℓ walk (keep `U_R`, redraw the rest).
pub fn down_up_matrix(system: &SpinSystem, p: &Partition, ell: usize) -> Result<TransitionMatrix> {
    down_up_matrix_of(&enumerate(system)?, p, ell)
}

pub fn down_up_matrix_of(dist: &ExactDistribution, p: &Partition, ell: usize) -> Result<TransitionMatrix> {
    block_matrix_of(dist, &down_up_blocks(p, ell), None, BlockConvention::ResampleComplement)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimDownUpParams {
    pub t0: u64,
    pub t1: u64,
    pub k: usize,
    pub base_level: usize,
    pub m: u32,
    pub eta: f64,
}

/// `C = c·M/η`, `T0 = ⌈t_mix·C·L⌉`, `T1 = ⌈C·L⌉` with `L = max(1, ln(n/ε))`;
/// `k = ⌈4M/η⌉` and `base_level = k − 2M`.
pub fn set_simdownup_schedule(
    t_mix_eta: u64,
    n: usize,
    epsilon: f64,
    m: u32,
    eta: f64,
    c_const: f64,
) -> Result<SimDownUpParams> {
    if m == 0 || !(eta > 0.0 && eta < 2.0) || !(epsilon > 0.0) || !(c_const > 0.0) || n == 0 {
        return Err(SpinError::invalid("need M ≥ 1, 0 < η < 2, ε > 0, c > 0, n ≥ 1"));
    }
    let c = c_const * m as f64 / eta;
    let log_term = (n as f64 / epsilon).ln().max(1.0);
    let k = (4.0 * m as f64 / eta).ceil() as usize;
    let base_level = k - 2 * m as usize;
    Ok(SimDownUpParams {
        t0: ((t_mix_eta.max(1)) as f64 * c * log_term).ceil() as u64,
        t1: (c * log_term).ceil() as u64,
        k,
        base_level,
        m,
        eta,
    })
}

pub const DEFAULT_C_CONST: f64 = 4.0;

/// Recursive SimDownUp step. Updates `config` on `V∖U_R` in place; `r` must be sorted.
/// At `|R| ≥ base_level` it runs `T0` Glauber steps on the free vertices of
/// `V∖U_R`; otherwise it performs `T1` recursive calls on `R∪{i}` with `i`
/// uniform in `[k]∖R`. Child streams derive from `(seed, t, i)`.
pub fn sim_down_up(
    system: &SpinSystem,
    p: &Partition,
    config: &mut [Spin],
    r: &[usize],
    params: &SimDownUpParams,
    seed: StreamSeed,
) -> Result<()> {
    if params.k != p.k() {
        return Err(SpinError::invalid(format!("schedule is for k={}, partition has k={}", params.k, p.k())));
    }
    let mut in_r = vec![false; p.k()];
    for &i in r {
        in_r[i] = true;
    }
    let mut rng = seed.rng();
    if r.len() >= params.base_level {
        let outside = resampled_set(system.n(), p, r, BlockConvention::ResampleComplement);
        let free: Vec<usize> = outside.into_iter().filter(|&v| system.is_free(v)).collect();
        return run_glauber_on(system, config, &free, params.t0, &mut rng);
    }
    let rest: Vec<usize> = (0..p.k()).filter(|&i| !in_r[i]).collect();
    let mut child_r = Vec::with_capacity(r.len() + 1);
    for t in 1..=params.t1 {
        let i = rest[rng.random_range(0..rest.len())];
        child_r.clear();
        child_r.extend_from_slice(r);
        child_r.push(i);
        child_r.sort_unstable();
        sim_down_up(system, p, config, &child_r, params, seed.child(t).child(i as u64))?;
    }
    Ok(())
}

/// One sample from the top-level call `sim_down_up(R = ∅)` started at `start`.
pub fn sim_down_up_sample(
    system: &SpinSystem,
    p: &Partition,
    start: &[Spin],
    params: &SimDownUpParams,
    seed: StreamSeed,
) -> Result<Vec<Spin>> {
    let mut x = start.to_vec();
    sim_down_up(system, p, &mut x, &[], params, seed)?;
    Ok(x)
}

/// Worst-case exact Glauber mixing time (searching `t ≥ 1`) over every `R`
/// with `|R| = level` and every feasible `τ` on `U_R`, for the chain picking
/// uniformly among free vertices of `V∖U_R`.
pub fn conditional_glauber_mixing(system: &SpinSystem, p: &Partition, level: usize, eps: f64, max_t: u64) -> Result<u64> {
    let dist = enumerate(system)?;
    let mut worst = 1;
    for r in (0..p.k()).combinations(level) {
        let u = p.union_of(&r);
        let outside = resampled_set(system.n(), p, &r, BlockConvention::ResampleComplement);
        let marg = dist.marginal(&u)?;
        for tau in marg.support() {
            let cond = system.condition(&PartialConfig::from_pairs(u.iter().copied().zip(tau.iter().copied())))?;
            let free: Vec<usize> = outside.iter().copied().filter(|&v| cond.is_free(v)).collect();
            let m = glauber_matrix_on(&cond, &free)?;
            let t = exact_mixing_time(&m, eps, None, max_t)?
                .ok_or_else(|| SpinError::invalid(format!("conditional chain did not mix within {max_t} steps")))?;
            worst = worst.max(t);
        }
    }
    Ok(worst)
}

/// Bipartite block dynamics: pick `S ⊆ [k]` with `|S| = min(2M, k)` and
/// redraw `U_S ∪ V_R` given `X_{V_L∖U_S}`. `p` partitions `V_L`. The left part
/// is drawn from its exact conditional marginal (right spins summed out),
/// then each right vertex independently given the left configuration.
pub fn bipartite_block_step<R: Rng + ?Sized>(
    system: &SpinSystem,
    p: &Partition,
    m: u32,
    config: &mut [Spin],
    rng: &mut R,
) -> Result<()> {
    let bip = system
        .graph()
        .bipartition()
        .ok_or_else(|| SpinError::invalid("bipartite block dynamics needs a bipartite graph"))?;
    let size = (2 * m as usize).min(p.k());
    let mut s = sample_indices(rng, p.k(), size).into_vec();
    s.sort_unstable();
    let u: Vec<usize> = p.union_of(&s).into_iter().filter(|&v| system.is_free(v)).collect();
    let cells = u.iter().map(|&v| system.domain(v).len() as f64).product::<f64>();
    if cells > state_cap() as f64 {
        return Err(SpinError::SizeCap { states: cells, cap: state_cap() });
    }
    // odometer over U_S
    let mut digits = vec![0usize; u.len()];
    for (d, &v) in digits.iter_mut().zip(&u) {
        *d = 0;
        config[v] = system.domain(v)[0];
    }
    let mut configs: Vec<Vec<Spin>> = Vec::new();
    let mut logw: Vec<f64> = Vec::new();
    loop {
        let lw = left_log_weight(system, &bip.right, &u, config);
        if lw > f64::NEG_INFINITY {
            configs.push(u.iter().map(|&v| config[v]).collect());
            logw.push(lw);
        }
        let mut i = 0;
        loop {
            if i == u.len() {
                break;
            }
            let v = u[i];
            digits[i] += 1;
            if digits[i] < system.domain(v).len() {
                config[v] = system.domain(v)[digits[i]];
                break;
            }
            digits[i] = 0;
            config[v] = system.domain(v)[0];
            i += 1;
        }
        if i == u.len() {
            break;
        }
    }
    let mx = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return Err(SpinError::Infeasible("left block has no feasible configuration".into()));
    }
    let w: Vec<f64> = logw.iter().map(|l| (l - mx).exp()).collect();
    let pick = sample_weighted(&w, rng).expect("positive weights");
    for (&v, &x) in u.iter().zip(&configs[pick]) {
        config[v] = x;
    }
    for &r in &bip.right {
        glauber_step(system, config, r, rng)?;
    }
    Ok(())
}

/// `ln` of the left marginal weight restricted to factors touching `u`:
/// fields of `u` times, for each right vertex, its partition function
/// given the left configuration.
fn left_log_weight(system: &SpinSystem, right: &[usize], u: &[usize], config: &[Spin]) -> f64 {
    let mut lw = 0.0;
    for &v in u {
        lw += system.field(v)[config[v] as usize].ln();
    }
    let mut buf = [0.0f64; 256];
    for &r in right {
        let w = &mut buf[..system.q()];
        system.conditional_weights(r, config, w);
        if system.is_free(r) {
            lw += w.iter().sum::<f64>().ln();
        } else {
            // pinned right vertex: product of its edge factors
            let t = config[r];
            for (&l, &e) in system.graph().neighbors(r).iter().zip(system.graph().incident_edges(r)) {
                lw += system.edge_weight(e, config[l], t).ln();
            }
        }
    }
    lw
}

/// Exact transition matrix of the bipartite block dynamics.
pub fn bipartite_block_matrix(system: &SpinSystem, p: &Partition, m: u32) -> Result<TransitionMatrix> {
    let bip = system
        .graph()
        .bipartition()
        .ok_or_else(|| SpinError::invalid("bipartite block dynamics needs a bipartite graph"))?;
    let size = (2 * m as usize).min(p.k());
    let blocks: Vec<Vec<usize>> = (0..p.k())
        .combinations(size)
        .map(|s| {
            let mut b = p.union_of(&s);
            b.extend_from_slice(&bip.right);
            b
        })
        .collect();
    block_matrix_of(&enumerate(system)?, &blocks, None, BlockConvention::ResampleBlock)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub vertex: usize,
    pub tag: u64,
    pub censored: bool,
}

/// Ordered single-site updates; censoring flags records without reordering.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UpdateSchedule {
    pub records: Vec<UpdateRecord>,
}

impl UpdateSchedule {
    pub fn new(vertices: &[usize]) -> Self {
        UpdateSchedule {
            records: vertices
                .iter()
                .enumerate()
                .map(|(i, &vertex)| UpdateRecord { vertex, tag: i as u64, censored: false })
                .collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, len: usize, rng: &mut R) -> Self {
        let v: Vec<usize> = (0..len).map(|_| rng.random_range(0..n)).collect();
        UpdateSchedule::new(&v)
    }

    /// Copy with record `i` censored iff bit `i` of `mask` is set.
    pub fn with_mask(&self, mask: u64) -> Self {
        let mut s = self.clone();
        for (i, r) in s.records.iter_mut().enumerate() {
            r.censored = i < 64 && (mask >> i) & 1 == 1;
        }
        s
    }

    pub fn active(&self) -> impl Iterator<Item = &UpdateRecord> {
        self.records.iter().filter(|r| !r.censored)
    }
}

/// Sparse single-site heat-bath kernels over the support of `dist`.
struct SiteKernels {
    /// `kernel[v][x]` lists `(y, P_v(x, y))`.
    kernel: Vec<Vec<Vec<(usize, f64)>>>,
}

impl SiteKernels {
    fn new(dist: &ExactDistribution) -> Self {
        let n = dist.vertices().len();
        let p = dist.probs();
        let kernel = (0..n)
            .map(|v| {
                let mut groups: HashMap<Vec<Spin>, Vec<usize>> = HashMap::new();
                for (x, s) in dist.support().iter().enumerate() {
                    let mut key = s.clone();
                    key[v] = Spin::MAX;
                    groups.entry(key).or_default().push(x);
                }
                let mut rows = vec![Vec::new(); dist.len()];
                for members in groups.values() {
                    let mass: f64 = members.iter().map(|&y| p[y]).sum();
                    let row: Vec<(usize, f64)> = members.iter().map(|&y| (y, p[y] / mass)).collect();
                    for &x in members {
                        rows[x] = row.clone();
                    }
                }
                rows
            })
            .collect();
        SiteKernels { kernel }
    }

    fn apply(&self, v: usize, pi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; pi.len()];
        for (x, &px) in pi.iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            for &(y, pxy) in &self.kernel[v][x] {
                out[y] += px * pxy;
            }
        }
        out
    }
}

/// Exact law after the uncensored updates of `schedule` from `start`,
/// aligned with the support of `dist`.
pub fn censored_evolution(dist: &ExactDistribution, schedule: &UpdateSchedule, start: &[Spin]) -> Result<Vec<f64>> {
    let kernels = SiteKernels::new(dist);
    censored_evolution_with(&kernels, dist, schedule, start)
}

fn censored_evolution_with(
    kernels: &SiteKernels,
    dist: &ExactDistribution,
    schedule: &UpdateSchedule,
    start: &[Spin],
) -> Result<Vec<f64>> {
    let x0 = dist
        .index_of(start)
        .ok_or_else(|| SpinError::invalid("start configuration is outside the support"))?;
    let mut pi = vec![0.0; dist.len()];
    pi[x0] = 1.0;
    for r in schedule.active() {
        if r.vertex >= kernels.kernel.len() {
            return Err(SpinError::invalid(format!("schedule vertex {} out of range", r.vertex)));
        }
        pi = kernels.apply(r.vertex, &pi);
    }
    Ok(pi)
}

pub fn censored_run_exact(system: &SpinSystem, schedule: &UpdateSchedule, start: &[Spin]) -> Result<ExactDistribution> {
    let dist = enumerate(system)?;
    let pi = censored_evolution(&dist, schedule, start)?;
    ExactDistribution::from_weights(dist.vertices().to_vec(), dist.support().to_vec(), pi)
}

/// Monte Carlo trajectory; record `i` draws from the stream `seed.child(tag)`
/// so censored and uncensored runs share randomness per record.
pub fn censored_run_sample(
    system: &SpinSystem,
    schedule: &UpdateSchedule,
    start: &[Spin],
    seed: StreamSeed,
) -> Result<Vec<Spin>> {
    let mut x = start.to_vec();
    for r in schedule.active() {
        let mut rng = seed.child(r.tag).rng();
        glauber_step(system, &mut x, r.vertex, &mut rng)?;
    }
    Ok(x)
}

#[derive(Debug, Clone, Serialize)]
pub struct CensoringReport {
    pub masks_checked: u64,
    pub tv_full: f64,
    /// Smallest censored TV over all masks.
    pub min_tv_censored: f64,
    /// Masks with `TV(full) > TV(censored) + tol`.
    pub violations: Vec<u64>,
}

/// Exhaustive comparison of `TV(full, μ)` with `TV(censored, μ)` for every
/// censor mask (schedules up to 20 records).
pub fn check_censoring(system: &SpinSystem, schedule: &UpdateSchedule, start: &[Spin], tol: f64) -> Result<CensoringReport> {
    let len = schedule.records.len();
    if len > 20 {
        return Err(SpinError::invalid("exhaustive censoring check supports at most 20 records"));
    }
    let dist = enumerate(system)?;
    let kernels = SiteKernels::new(&dist);
    let tv_full = tv_vectors(&censored_evolution_with(&kernels, &dist, schedule, start)?, dist.probs());
    let mut report = CensoringReport { masks_checked: 0, tv_full, min_tv_censored: f64::INFINITY, violations: Vec::new() };
    for mask in 0..(1u64 << len) {
        let pi = censored_evolution_with(&kernels, &dist, &schedule.with_mask(mask), start)?;
        let tv = tv_vectors(&pi, dist.probs());
        report.masks_checked += 1;
        report.min_tv_censored = report.min_tv_censored.min(tv);
        if tv_full > tv + tol {
            report.violations.push(mask);
        }
    }
    Ok(report)
}

/// Per-vertex orders of the bipartite hardcore model: `+` on top on the left,
/// `−` on top on the right. `orders[v]` lists spins from smallest to largest.
pub fn bipartite_orders(system: &SpinSystem) -> Result<Vec<Vec<Spin>>> {
    let bip = system
        .graph()
        .bipartition()
        .ok_or_else(|| SpinError::invalid("graph has no bipartition"))?;
    let mut orders = vec![vec![0, 1]; system.n()];
    for &r in &bip.right {
        orders[r] = vec![1, 0];
    }
    Ok(orders)
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotoneCheck {
    pub monotone: bool,
    /// `(X, Y, v)` with `X ≤ Y` but `P_v(X,·) ⋠ P_v(Y,·)`.
    pub violation: Option<(Vec<Spin>, Vec<Spin>, usize)>,
}

/// Exhaustive check that every single-site update preserves `≤` over
/// comparable pairs of `Ω(μ)`.
pub fn check_monotone(system: &SpinSystem, orders: &[Vec<Spin>]) -> Result<MonotoneCheck> {
    let n = system.n();
    let q = system.q();
    if orders.len() != n {
        return Err(SpinError::invalid("need one order per vertex"));
    }
    let mut rank = vec![vec![usize::MAX; q]; n];
    for (v, o) in orders.iter().enumerate() {
        for (i, &s) in o.iter().enumerate() {
            rank[v][s as usize] = i;
        }
        if system.domain(v).iter().any(|&s| rank[v][s as usize] == usize::MAX) {
            return Err(SpinError::invalid(format!("order at vertex {v} does not cover its domain")));
        }
    }
    let dist = enumerate(system)?;
    let states = dist.support();
    let leq = |a: &[Spin], b: &[Spin]| (0..n).all(|v| rank[v][a[v] as usize] <= rank[v][b[v] as usize]);
    // conditional at v, accumulated from the top of the order
    let upper_tails = |x: &[Spin], v: usize| -> Vec<f64> {
        let mut w = vec![0.0; q];
        system.conditional_weights(v, x, &mut w);
        let total: f64 = w.iter().sum();
        let mut acc = 0.0;
        orders[v]
            .iter()
            .rev()
            .map(|&s| {
                acc += w[s as usize] / total;
                acc
            })
            .collect()
    };
    for x in states {
        for y in states {
            if x == y || !leq(x, y) {
                continue;
            }
            for v in 0..n {
                let (tx, ty) = (upper_tails(x, v), upper_tails(y, v));
                if tx.iter().zip(&ty).any(|(a, b)| *a > b + 1e-12) {
                    return Ok(MonotoneCheck { monotone: false, violation: Some((x.clone(), y.clone(), v)) });
                }
            }
        }
    }
    Ok(MonotoneCheck { monotone: true, violation: None })
}

/// First `t ≥ 1` with `max_x TV(P^t(x,·), π) ≤ ε` over starts (all support
/// states, or the given index); `None` if not reached by `max_t`.
pub fn exact_mixing_time(m: &TransitionMatrix, eps: f64, start: Option<usize>, max_t: u64) -> Result<Option<u64>> {
    Ok(exact_tv_curve(m, start, max_t, Some(eps))?.last().and_then(|&(t, tv)| (tv <= eps).then_some(t)))
}

/// Worst-start TV after each step `1..=max_t`, stopping early once the
/// distance falls to `stop` if given.
pub fn exact_tv_curve(m: &TransitionMatrix, start: Option<usize>, max_t: u64, stop: Option<f64>) -> Result<Vec<(u64, f64)>> {
    let n = m.len();
    let pi = m.stationary();
    let mut rows: DMatrix<f64> = match start {
        Some(x) if x >= n => return Err(SpinError::invalid("start index out of range")),
        Some(x) => {
            let mut r = DMatrix::zeros(1, n);
            r[(0, x)] = 1.0;
            r
        }
        None => DMatrix::identity(n, n),
    };
    let mut curve = Vec::new();
    for t in 1..=max_t {
        rows = &rows * m.matrix();
        let tv = (0..rows.nrows())
            .map(|i| tv_vectors(rows.row(i).iter().copied().collect::<Vec<_>>().as_slice(), pi))
            .fold(0.0, f64::max);
        curve.push((t, tv));
        if stop.is_some_and(|e| tv <= e) {
            break;
        }
    }
    Ok(curve)
}

/// Chains known to [`chain_matrix`] and [`chain_step`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "chain", rename_all = "snake_case")]
pub enum ChainSpec {
    Glauber,
    DownUp { partition: Partition, ell: usize, convention: BlockConvention },
    BipartiteBlock { partition: Partition, m: u32 },
}

pub fn chain_matrix(system: &SpinSystem, chain: &ChainSpec) -> Result<TransitionMatrix> {
    match chain {
        ChainSpec::Glauber => glauber_matrix(system),
        ChainSpec::DownUp { partition, ell, convention } => {
            let blocks = (0..partition.k())
                .combinations(*ell)
                .map(|r| partition.union_of(&r))
                .collect::<Vec<_>>();
            block_matrix_of(&enumerate(system)?, &blocks, None, *convention)
        }
        ChainSpec::BipartiteBlock { partition, m } => bipartite_block_matrix(system, partition, *m),
    }
}

pub fn chain_step<R: Rng>(
    system: &SpinSystem,
    chain: &ChainSpec,
    sampler: &mut ExactConditional,
    config: &mut [Spin],
    rng: &mut R,
) -> Result<()> {
    match chain {
        ChainSpec::Glauber => {
            let v = rng.random_range(0..system.n());
            glauber_step(system, config, v, rng)
        }
        ChainSpec::DownUp { partition, ell, convention } => {
            down_up_step_with(sampler, system.n(), partition, *ell, *convention, config, rng)
        }
        ChainSpec::BipartiteBlock { partition, m } => bipartite_block_step(system, partition, *m, config, rng),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MixingEstimate {
    /// First `t` with (empirical) TV ≤ ε, if reached.
    pub t_mix: Option<u64>,
    pub curve: Vec<(u64, f64)>,
    /// `½·sqrt((K−1)/N)` bound on the bias of the empirical TV (MC mode).
    pub bias_bound: Option<f64>,
}

/// `½·sqrt((K−1)/N)`: bound on `E[TV(empirical, p)]` for `N` draws over `K`
/// outcomes.
pub fn tv_bias_bound(support_size: usize, samples: usize) -> f64 {
    0.5 * ((support_size.saturating_sub(1)) as f64 / samples as f64).sqrt()
}

/// Empirical TV of sampled configurations against `dist`.
pub fn empirical_tv(dist: &ExactDistribution, samples: &[Vec<Spin>]) -> f64 {
    let mut counts = vec![0.0; dist.len()];
    let mut outside = 0.0;
    for s in samples {
        match dist.index_of(s) {
            Some(i) => counts[i] += 1.0,
            None => outside += 1.0,
        }
    }
    let n = samples.len() as f64;
    let inside: f64 = counts.iter().zip(dist.probs()).map(|(c, p)| (c / n - p).abs()).sum();
    0.5 * (inside + outside / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingMode {
    Exact,
    MonteCarlo { replicas: usize },
}

/// Exact mode maximises over all starts (or uses `start`); Monte Carlo mode
/// runs `replicas` chains from `start` (required) and compares the empirical
/// law at each step against the oracle.
pub fn estimate_mixing(
    system: &SpinSystem,
    chain: &ChainSpec,
    eps: f64,
    mode: MixingMode,
    start: Option<&[Spin]>,
    max_t: u64,
    seed: StreamSeed,
) -> Result<MixingEstimate> {
    match mode {
        MixingMode::Exact => {
            let m = chain_matrix(system, chain)?;
            let idx = match start {
                Some(s) => Some(
                    m.states()
                        .iter()
                        .position(|x| x.as_slice() == s)
                        .ok_or_else(|| SpinError::invalid("start configuration is outside the support"))?,
                ),
                None => None,
            };
            let curve = exact_tv_curve(&m, idx, max_t, Some(eps))?;
            let t_mix = curve.last().and_then(|&(t, tv)| (tv <= eps).then_some(t));
            Ok(MixingEstimate { t_mix, curve, bias_bound: None })
        }
        MixingMode::MonteCarlo { replicas } => {
            if replicas == 0 {
                return Err(SpinError::invalid("need at least one replica"));
            }
            let start = start.ok_or_else(|| SpinError::invalid("Monte Carlo mode needs a start configuration"))?;
            let dist = enumerate(system)?;
            let mut sampler = ExactConditional::new(system);
            let mut states = vec![start.to_vec(); replicas];
            let mut rngs: Vec<_> = (0..replicas).map(|i| seed.child(i as u64).rng()).collect();
            let mut curve = Vec::new();
            let mut t_mix = None;
            for t in 1..=max_t {
                for (x, rng) in states.iter_mut().zip(rngs.iter_mut()) {
                    chain_step(system, chain, &mut sampler, x, rng)?;
                }
                let tv = empirical_tv(&dist, &states);
                curve.push((t, tv));
                if tv <= eps {
                    t_mix = Some(t);
                    break;
                }
            }
            Ok(MixingEstimate { t_mix, curve, bias_bound: Some(tv_bias_bound(dist.len(), replicas)) })
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalToGlobal {
    /// `γ_r` for `r = 0..ℓ`.
    pub gammas: Vec<f64>,
    pub product: f64,
    pub t_rel_walk: f64,
}

/// `γ_r`: worst relaxation time of the (k−r)↔1 walk over `|R| = r` and
/// feasible `τ` on `U_R`, compared with the relaxation time of the k↔ℓ walk.
pub fn local_to_global(system: &SpinSystem, p: &Partition, ell: usize) -> Result<LocalToGlobal> {
    let dist = enumerate(system)?;
    let t_rel_walk = spectral_gap(&down_up_matrix_of(&dist, p, ell)?).t_rel;
    let mut gammas = Vec::with_capacity(ell);
    for r in 0..ell {
        let mut worst: f64 = 0.0;
        for rset in (0..p.k()).combinations(r) {
            let u = p.union_of(&rset);
            let marg = dist.marginal(&u)?;
            let rest: Vec<usize> = (0..p.k()).filter(|i| !rset.contains(i)).collect();
            let blocks: Vec<Vec<usize>> = rest.iter().map(|&j| p.block(j).to_vec()).collect();
            for tau in marg.support() {
                let cond = system.condition(&PartialConfig::from_pairs(u.iter().copied().zip(tau.iter().copied())))?;
                let m = block_matrix_of(&enumerate(&cond)?, &blocks, None, BlockConvention::ResampleComplement)?;
                worst = worst.max(spectral_gap(&m).t_rel);
            }
        }
        gammas.push(worst);
    }
    Ok(LocalToGlobal { product: gammas.iter().product(), gammas, t_rel_walk })
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub t_rel_glauber: f64,
    pub t_rel_walk: f64,
    /// Worst `t_rel` of Glauber (vertex uniform over `V`) on `μ^τ` over
    /// `|S| = k−ℓ` and feasible `τ` on `V∖U_S`.
    pub t_rel_conditional: f64,
}

pub fn compare_glauber_to_walk(system: &SpinSystem, p: &Partition, ell: usize) -> Result<Comparison> {
    let dist = enumerate(system)?;
    let t_rel_walk = spectral_gap(&down_up_matrix_of(&dist, p, ell)?).t_rel;
    let t_rel_glauber = spectral_gap(&glauber_matrix(system)?).t_rel;
    let mut worst: f64 = 0.0;
    for s in (0..p.k()).combinations(p.k() - ell) {
        let outside = resampled_set(system.n(), p, &s, BlockConvention::ResampleComplement);
        let marg = dist.marginal(&outside)?;
        for tau in marg.support() {
            let cond = system.condition(&PartialConfig::from_pairs(outside.iter().copied().zip(tau.iter().copied())))?;
            worst = worst.max(spectral_gap(&glauber_matrix(&cond)?).t_rel);
        }
    }
    Ok(Comparison { t_rel_glauber, t_rel_walk, t_rel_conditional: worst })
}
