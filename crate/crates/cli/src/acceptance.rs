//! Acceptance criteria 1–12 as library functions, grouped into suites.

use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use spinlab_core::coupling::{
    build_saw_tree, marginal_validity_test, saw_root_marginal, summed_copy_influence, tree_influence, RecursiveCoupler,
};
use spinlab_core::dynamics::{
    bipartite_orders, check_censoring, check_monotone, compare_glauber_to_walk, conditional_glauber_mixing,
    down_up_matrix, empirical_tv, local_to_global, set_simdownup_schedule, sim_down_up_sample, tv_bias_bound,
    UpdateSchedule, DEFAULT_C_CONST,
};
use spinlab_core::graph::{random_biregular, random_regular};
use spinlab_core::oracle::{enumerate, exact_marginal, glauber_matrix, partition_function, spectral_gap};
use spinlab_core::partition::{construct_partition, verify_degree_partition, verify_left_partition, Budget, PartitionMode};
use spinlab_core::rng::StreamSeed;
use spinlab_core::spin::{alpha_star, lambda_critical, make_hardcore, make_list_coloring, make_two_spin};
use spinlab_core::{Graph, PartialConfig, Partition, Spin, SpinSystem, MINUS, PLUS};

use crate::parallel;
use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Cmp {
    Le,
    Ge,
}

/// One numeric comparison inside a criterion.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub label: String,
    pub value: f64,
    pub cmp: Cmp,
    pub bound: f64,
}

impl Check {
    pub fn le(label: impl Into<String>, value: f64, bound: f64) -> Self {
        Check { label: label.into(), value, cmp: Cmp::Le, bound }
    }

    pub fn ge(label: impl Into<String>, value: f64, bound: f64) -> Self {
        Check { label: label.into(), value, cmp: Cmp::Ge, bound }
    }

    pub fn passes(&self) -> bool {
        match self.cmp {
            Cmp::Le => self.value <= self.bound,
            Cmp::Ge => self.value >= self.bound,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: u32,
    pub title: &'static str,
    pub pass: bool,
    pub seconds: f64,
    pub budget_seconds: f64,
    pub checks: Vec<Check>,
    pub error: Option<String>,
}

impl CriterionReport {
    /// One-line summary naming the first failing check, if any.
    pub fn line(&self) -> String {
        let status = if self.pass { "PASS" } else { "FAIL" };
        let detail = match (&self.error, self.checks.iter().find(|c| !c.passes())) {
            (Some(e), _) => format!("error: {e}"),
            (None, Some(c)) => format!(
                "failed: {} = {} {} {}",
                c.label,
                c.value,
                if c.cmp == Cmp::Le { "≰" } else { "≱" },
                c.bound
            ),
            (None, None) => format!("{} checks", self.checks.len()),
        };
        format!("criterion {:>2} {status} {:<38} {:>8.2}s  {detail}", self.id, self.title, self.seconds)
    }
}

type CriterionFn = fn(StreamSeed) -> CliResult<Vec<Check>>;

pub struct Criterion {
    pub id: u32,
    pub title: &'static str,
    pub budget_seconds: f64,
    run: CriterionFn,
}

pub fn criteria() -> Vec<Criterion> {
    vec![
        Criterion { id: 1, title: "oracle correctness", budget_seconds: 1.0, run: c1_oracle },
        Criterion { id: 2, title: "stationarity and reversibility", budget_seconds: 30.0, run: c2_reversibility },
        Criterion { id: 3, title: "SAW root marginals", budget_seconds: 30.0, run: c3_saw },
        Criterion { id: 4, title: "coupling vs SAW influence", budget_seconds: 300.0, run: c4_ci_tool },
        Criterion { id: 5, title: "coupling marginal validity", budget_seconds: 300.0, run: c5_validity },
        Criterion { id: 6, title: "local-to-global and comparison", budget_seconds: 60.0, run: c6_local_to_global },
        Criterion { id: 7, title: "SimDownUp accuracy", budget_seconds: 600.0, run: c7_simdownup },
        Criterion { id: 8, title: "partition construction", budget_seconds: 60.0, run: c8_partition },
        Criterion { id: 9, title: "censoring inequality", budget_seconds: 120.0, run: c9_censoring },
        Criterion { id: 10, title: "list-coloring coupling bound", budget_seconds: 300.0, run: c10_coloring },
        Criterion { id: 11, title: "gap scaling on cycles", budget_seconds: 120.0, run: c11_gap_scaling },
        Criterion { id: 12, title: "constants", budget_seconds: 1.0, run: c12_constants },
    ]
}

pub const SUITES: &[&str] = &["oracle", "chains", "saw", "coupling", "partition", "censoring", "all"];

pub fn suite_ids(name: &str) -> CliResult<Vec<u32>> {
    Ok(match name {
        "oracle" => vec![1, 2, 12],
        "chains" => vec![6, 7, 11],
        "saw" => vec![3],
        "coupling" => vec![4, 5, 10],
        "partition" => vec![8],
        "censoring" => vec![9],
        "all" => (1..=12).collect(),
        "" => return Err(CliError::Usage("suite name is empty".into())),
        other => return Err(CliError::Usage(format!("unknown suite {other:?}; expected one of {}", SUITES.join(", ")))),
    })
}

/// Runs one criterion. With `inject_fault`, the first check's bound is moved
/// past its value so the criterion must fail.
pub fn run_criterion(c: &Criterion, seed: StreamSeed, inject_fault: bool) -> CriterionReport {
    let start = Instant::now();
    let outcome = (c.run)(seed.child(c.id as u64));
    let seconds = start.elapsed().as_secs_f64();
    let (mut checks, error) = match outcome {
        Ok(v) => (v, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    if inject_fault {
        if let Some(first) = checks.first_mut() {
            first.label = format!("{} [injected fault]", first.label);
            first.bound = match first.cmp {
                Cmp::Le => first.value - 1.0,
                Cmp::Ge => first.value + 1.0,
            };
        }
    }
    checks.push(Check::le("runtime seconds", seconds, c.budget_seconds));
    let pass = error.is_none() && checks.iter().all(Check::passes);
    CriterionReport { id: c.id, title: c.title, pass, seconds, budget_seconds: c.budget_seconds, checks, error }
}

pub fn run_suite(name: &str, seed: u64, inject_fault: Option<u32>) -> CliResult<Vec<CriterionReport>> {
    let ids = suite_ids(name)?;
    if let Some(f) = inject_fault {
        if !ids.contains(&f) {
            return Err(CliError::Usage(format!("criterion {f} is not in suite {name:?}")));
        }
    }
    Ok(criteria()
        .iter()
        .filter(|c| ids.contains(&c.id))
        .map(|c| run_criterion(c, StreamSeed(seed), inject_fault == Some(c.id)))
        .collect())
}

fn max_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(f64::NEG_INFINITY, f64::max)
}

fn house() -> Graph {
    Graph::new(5, &[(0, 1), (1, 2), (2, 3), (3, 0), (2, 4), (3, 4)]).expect("valid graph")
}

fn tree7() -> Graph {
    Graph::new(7, &[(0, 1), (0, 2), (0, 3), (1, 4), (1, 5), (2, 6)]).expect("valid graph")
}

/// Twelve systems with `n ≤ 8`: hardcore, ferromagnetic and
/// antiferromagnetic two-spin, and list colouring.
pub fn corpus() -> CliResult<Vec<(&'static str, SpinSystem)>> {
    Ok(vec![
        ("hardcore P3 λ=1", make_hardcore(Graph::path(3), 1.0)?),
        ("hardcore C5 λ=2", make_hardcore(Graph::cycle(5), 2.0)?),
        ("hardcore star3 λ=4", make_hardcore(Graph::star(3), 4.0)?),
        ("hardcore K2,3 λ=1.5", make_hardcore(Graph::complete_bipartite(2, 3), 1.5)?),
        ("hardcore P8 λ=1", make_hardcore(Graph::path(8), 1.0)?),
        ("hardcore tree7 λ=2", make_hardcore(tree7(), 2.0)?),
        ("ferro C4 β=γ=1.5 λ=1", make_two_spin(Graph::cycle(4), 1.5, 1.5, 1.0)?),
        ("ferro house β=2 γ=1.2 λ=0.8", make_two_spin(house(), 2.0, 1.2, 0.8)?),
        ("antiferro C6 β=γ=0.5 λ=1.2", make_two_spin(Graph::cycle(6), 0.5, 0.5, 1.2)?),
        ("antiferro tree7 β=0.3 γ=0.8 λ=1", make_two_spin(tree7(), 0.3, 0.8, 1.0)?),
        ("coloring C5 q=3", make_list_coloring(Graph::cycle(5), &vec![vec![0, 1, 2]; 5])?),
        (
            "coloring P4 lists",
            make_list_coloring(Graph::path(4), &[vec![0, 1], vec![0, 1, 2], vec![1, 2], vec![0, 2]])?,
        ),
    ])
}

fn c1_oracle(_: StreamSeed) -> CliResult<Vec<Check>> {
    let p3 = make_hardcore(Graph::path(3), 1.0)?;
    let k2 = make_hardcore(Graph::complete(2), 1.0)?;
    let mid = exact_marginal(&p3, &[1])?.prob_of(&[PLUS]);
    Ok(vec![
        Check::le("|Z(P3) − 5|", (partition_function(&p3)? - 5.0).abs(), 0.0),
        Check::le("|μ(middle=+) − 1/5|", (mid - 1.0 / 5.0).abs(), 0.0),
        Check::le("|Z(K2) − 3|", (partition_function(&k2)? - 3.0).abs(), 0.0),
    ])
}

fn c2_reversibility(_: StreamSeed) -> CliResult<Vec<Check>> {
    let mut db: f64 = 0.0;
    let mut neg: f64 = f64::NEG_INFINITY;
    let mut count = 0;
    for (_, sys) in corpus()? {
        let k = sys.n().min(3);
        let p = Partition::from_labels(k, &(0..sys.n()).collect::<Vec<_>>(), &(0..sys.n()).map(|v| v % k).collect::<Vec<_>>())?;
        let mut mats = vec![glauber_matrix(&sys)?];
        for ell in 1..k {
            mats.push(down_up_matrix(&sys, &p, ell)?);
        }
        for m in mats {
            db = db.max(m.detailed_balance_error());
            neg = neg.max(-m.min_eigenvalue());
            count += 1;
        }
    }
    Ok(vec![
        Check::le(format!("max detailed-balance error over {count} matrices"), db, 1e-12),
        Check::le("−min eigenvalue", neg, 1e-10),
    ])
}

fn random_pinning<R: Rng>(sys: &SpinSystem, rng: &mut R) -> CliResult<PartialConfig> {
    let dist = enumerate(sys)?;
    let x = dist.sample(rng).to_vec();
    Ok(PartialConfig::from_pairs((0..sys.n()).filter(|_| rng.random_bool(0.4)).map(|v| (v, x[v]))))
}

fn c3_saw(seed: StreamSeed) -> CliResult<Vec<Check>> {
    let mut rng = seed.rng();
    let mut worst: f64 = 0.0;
    let mut roots = 0;
    for (_, sys) in corpus()?.into_iter().filter(|(_, s)| s.q() == 2) {
        let mut pinnings = vec![PartialConfig::new()];
        for _ in 0..20 {
            pinnings.push(random_pinning(&sys, &mut rng)?);
        }
        for tau in pinnings {
            let cond = sys.condition(&tau)?;
            for root in cond.free_vertices() {
                let (t, ts) = build_saw_tree(&cond, root, 64)?;
                let saw = saw_root_marginal(&t, &ts)?;
                let exact = exact_marginal(&cond, &[root])?.prob_of(&[PLUS]);
                worst = worst.max((saw[1] - exact).abs());
                roots += 1;
            }
        }
    }
    Ok(vec![Check::le(format!("max |SAW − exact| over {roots} roots"), worst, 1e-10)])
}

pub const COUPLING_SAMPLES: usize = 100_000;

/// Draws `total` coupled pairs `(X ~ v←a, Y ~ v←b)`.
fn coupled_pairs(
    sys: &SpinSystem,
    coloring: bool,
    v: usize,
    a: Spin,
    b: Spin,
    total: usize,
    seed: StreamSeed,
) -> CliResult<Vec<(Vec<Spin>, Vec<Spin>)>> {
    let empty = PartialConfig::new();
    parallel::draw(
        total,
        seed,
        || {
            Ok(if coloring { RecursiveCoupler::coloring(sys)? } else { RecursiveCoupler::two_spin(sys)? })
        },
        |c, _, rng| Ok(c.sample(&empty, v, a, b, rng)?),
    )
}

fn c4_ci_tool(seed: StreamSeed) -> CliResult<Vec<Check>> {
    let lc = lambda_critical(3)?;
    let graphs: Vec<(&str, Graph, usize)> = vec![
        ("star3", Graph::star(3), 0),
        ("tree7", tree7(), 1),
        ("C6", Graph::cycle(6), 0),
        ("house", house(), 2),
    ];
    let mut checks = Vec::new();
    for (gi, (name, g, v)) in graphs.into_iter().enumerate() {
        for (li, frac) in [0.5, 1.0].into_iter().enumerate() {
            let sys = make_hardcore(g.clone(), frac * lc)?;
            let (t, ts) = build_saw_tree(&sys, v, 64)?;
            let bound = summed_copy_influence(&t, &tree_influence(&t, &ts)?, sys.n());
            let pairs = coupled_pairs(&sys, false, v, MINUS, PLUS, COUPLING_SAMPLES, seed.child((gi * 2 + li) as u64))?;
            let n = pairs.len() as f64;
            let excess = max_of((0..sys.n()).filter(|&u| u != v).map(|u| {
                let p = pairs.iter().filter(|(x, y)| x[u] != y[u]).count() as f64 / n;
                let sigma = (p * (1.0 - p) / n).sqrt();
                p - bound[u] - 4.0 * sigma
            }));
            checks.push(Check::le(format!("{name} λ={}: max_u Pr[X_u≠Y_u] − Σ|Ψ| − 4σ", frac * lc), excess, 0.0));
        }
    }
    Ok(checks)
}

fn c5_validity(seed: StreamSeed) -> CliResult<Vec<Check>> {
    let cases: Vec<(&str, SpinSystem, bool, usize, Spin, Spin)> = vec![
        ("hardcore C5 λ=2", make_hardcore(Graph::cycle(5), 2.0)?, false, 0, MINUS, PLUS),
        ("ferro house", make_two_spin(house(), 2.0, 1.2, 0.8)?, false, 2, MINUS, PLUS),
        ("antiferro tree7", make_two_spin(tree7(), 0.3, 0.8, 1.0)?, false, 1, MINUS, PLUS),
        ("coloring C5 q=3", make_list_coloring(Graph::cycle(5), &vec![vec![0, 1, 2]; 5])?, true, 0, 0, 1),
        (
            "coloring P4 lists",
            make_list_coloring(Graph::path(4), &[vec![0, 1], vec![0, 1, 2], vec![1, 2], vec![0, 2]])?,
            true,
            1,
            0,
            2,
        ),
    ];
    let mut checks = Vec::new();
    for (i, (name, sys, coloring, v, a, b)) in cases.into_iter().enumerate() {
        let pairs = coupled_pairs(&sys, coloring, v, a, b, COUPLING_SAMPLES, seed.child(i as u64))?;
        let (xs, ys): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let tx = enumerate(&sys.pin(v, a)?)?;
        let ty = enumerate(&sys.pin(v, b)?)?;
        checks.push(Check::ge(format!("{name}: χ² p-value of X"), marginal_validity_test(&xs, &tx)?.p_value, 1e-4));
        checks.push(Check::ge(format!("{name}: χ² p-value of Y"), marginal_validity_test(&ys, &ty)?.p_value, 1e-4));
        if i == 0 {
            // faulty coupling: X copies Y off v
            let faulty: Vec<Vec<Spin>> = ys
                .iter()
                .map(|y| {
                    let mut x = y.clone();
                    x[v] = a;
                    x
                })
                .collect();
            let p = marginal_validity_test(&faulty, &tx)?.p_value;
            checks.push(Check::le(format!("{name}: χ² p-value of faulty coupling"), p, 1e-4));
        }
    }
    Ok(checks)
}

fn p6_partition() -> CliResult<Partition> {
    Ok(Partition::new(3, vec![vec![0, 3], vec![1, 4], vec![2, 5]])?)
}

fn c6_local_to_global(_: StreamSeed) -> CliResult<Vec<Check>> {
    let sys = make_hardcore(Graph::path(6), 1.0)?;
    let p = p6_partition()?;
    let mut checks = Vec::new();
    for ell in 0..=2 {
        let l2g = local_to_global(&sys, &p, ell)?;
        checks.push(Check::le(format!("ℓ={ell}: t_rel(k↔ℓ) − ∏γ"), l2g.t_rel_walk - l2g.product, 1e-8));
        let cmp = compare_glauber_to_walk(&sys, &p, ell)?;
        checks.push(Check::le(
            format!("ℓ={ell}: t_rel(GD) − t_rel(k↔ℓ)·max t_rel(GD^τ)"),
            cmp.t_rel_glauber - cmp.t_rel_walk * cmp.t_rel_conditional,
            1e-8,
        ));
    }
    Ok(checks)
}

pub const SIMDOWNUP_SAMPLES: usize = 100_000;

fn c7_simdownup(seed: StreamSeed) -> CliResult<Vec<Check>> {
    let sys = make_hardcore(Graph::path(6), 1.0)?;
    let p = p6_partition()?;
    let (m, eta, eps) = (1, 4.0 / 3.0, 0.05);
    let base = set_simdownup_schedule(1, sys.n(), eps, m, eta, DEFAULT_C_CONST)?;
    let t_mix = conditional_glauber_mixing(&sys, &p, base.base_level, 1.0 / (4.0 * std::f64::consts::E), 100_000)?;
    let sched = set_simdownup_schedule(t_mix, sys.n(), eps, m, eta, DEFAULT_C_CONST)?;
    let start = vec![MINUS; sys.n()];
    let samples = parallel::draw(SIMDOWNUP_SAMPLES, seed, || Ok(()), |_, i, _| {
        Ok(sim_down_up_sample(&sys, &p, &start, &sched, seed.child(i as u64))?)
    })?;
    let dist = enumerate(&sys)?;
    let tv = empirical_tv(&dist, &samples);
    let bias = tv_bias_bound(dist.len(), samples.len());
    Ok(vec![
        Check::le("k", sched.k as f64, 3.0),
        Check::le(format!("empirical TV (T0={}, T1={})", sched.t0, sched.t1), tv, eps + bias),
    ])
}

fn c8_partition(seed: StreamSeed) -> CliResult<Vec<Check>> {
    let mut rng = seed.rng();
    let g = random_regular(200, 32, &mut rng)?;
    let (k, xi) = (4, 1.0);
    let mut rounds = 0u64;
    let mut failures = 0;
    for r in 0..100u64 {
        match construct_partition(&g, k, xi, PartitionMode::General, Budget::default(), seed.child(r).0) {
            Ok((p, stats)) => {
                rounds += stats.total_rounds;
                if !verify_degree_partition(&g, &p, xi).ok {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    let bip = random_biregular(120, 8, 40, 24, &mut rng)?;
    let left_ok = match construct_partition(&bip, 6, xi, PartitionMode::BipartiteLeft { bound: None }, Budget::default(), seed.0) {
        Ok((p, _)) => verify_left_partition(&bip, &p, 8)?,
        Err(_) => false,
    };
    Ok(vec![
        Check::le("runs without a verified partition", failures as f64, 0.0),
        Check::le("mean rounds", rounds as f64 / 100.0, 10.0),
        Check::ge("bipartite left partition verified", left_ok as u8 as f64, 1.0),
    ])
}

fn bipartite_hardcore(l: usize, r: usize, edges: &[(usize, usize)], lambda: f64) -> CliResult<SpinSystem> {
    let g = Graph::new(l + r, edges)?.with_bipartition((0..l).collect(), (l..l + r).collect())?;
    Ok(make_hardcore(g, lambda)?)
}

fn c9_censoring(seed: StreamSeed) -> CliResult<Vec<Check>> {
    let instances = vec![
        ("K1,2 λ=1", bipartite_hardcore(1, 2, &[(0, 1), (0, 2)], 1.0)?),
        ("P4 λ=1.5", bipartite_hardcore(2, 2, &[(0, 2), (2, 1), (1, 3)], 1.5)?),
        ("C6 λ=2", bipartite_hardcore(3, 3, &[(0, 3), (3, 1), (1, 4), (4, 2), (2, 5), (5, 0)], 2.0)?),
    ];
    let mut rng = seed.rng();
    let mut checks = Vec::new();
    for (name, sys) in instances {
        let orders = bipartite_orders(&sys)?;
        let mono = check_monotone(&sys, &orders)?;
        checks.push(Check::ge(format!("{name}: monotone"), mono.monotone as u8 as f64, 1.0));
        let sched = UpdateSchedule::random(sys.n(), 10, &mut rng);
        let rep = check_censoring(&sys, &sched, &sys.maximal_config(&orders), 1e-12)?;
        checks.push(Check::ge(format!("{name}: masks checked"), rep.masks_checked as f64, 1024.0));
        checks.push(Check::le(format!("{name}: masks with TV(full) > TV(censored)"), rep.violations.len() as f64, 0.0));
    }
    // C5 with the alternating order that any bipartite order would induce
    let odd = make_hardcore(Graph::cycle(5), 1.0)?;
    let orders: Vec<Vec<Spin>> = (0..5).map(|v| if v % 2 == 0 { vec![0, 1] } else { vec![1, 0] }).collect();
    let r = check_monotone(&odd, &orders)?;
    checks.push(Check::ge("odd cycle: violation found", (!r.monotone && r.violation.is_some()) as u8 as f64, 1.0));
    Ok(checks)
}

fn c10_coloring(seed: StreamSeed) -> CliResult<Vec<Check>> {
    let sys = make_list_coloring(Graph::cycle(6), &vec![(0..6).collect::<Vec<Spin>>(); 6])?;
    let delta = 6.0 / 2.0 - alpha_star();
    let bound = 9.0 / (2.0 * delta) + 1.0;
    let mut checks = Vec::new();
    for (i, (a, b)) in [(0, 1), (2, 5)].into_iter().enumerate() {
        let pairs = coupled_pairs(&sys, true, 0, a, b, COUPLING_SAMPLES, seed.child(i as u64))?;
        let h: Vec<f64> = pairs.iter().map(|(x, y)| x.iter().zip(y).filter(|(p, q)| p != q).count() as f64).collect();
        let n = h.len() as f64;
        let mean = h.iter().sum::<f64>() / n;
        let sd = (h.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        checks.push(Check::le(format!("E[H] for (a,b)=({a},{b}), minus 4σ"), mean - 4.0 * sd / n.sqrt(), bound));
    }
    Ok(checks)
}

fn c11_gap_scaling(_: StreamSeed) -> CliResult<Vec<Check>> {
    let lambda = 0.5 * lambda_critical(3)?;
    let mut ratios = Vec::new();
    for n in 4..=12 {
        let sys = make_hardcore(Graph::cycle(n), lambda)?;
        ratios.push(spectral_gap(&glauber_matrix(&sys)?).t_rel / n as f64);
    }
    let hi = max_of(ratios.iter().copied());
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(vec![Check::le("max/min of t_rel/n over C4..C12", hi / lo, 3.0)])
}

fn c12_constants(_: StreamSeed) -> CliResult<Vec<Check>> {
    let a = alpha_star();
    Ok(vec![
        Check::le("|λ_c(3) − 4|", (lambda_critical(3)? - 4.0).abs(), 0.0),
        Check::le("|α⋆ − exp(1/α⋆)|", (a - (1.0 / a).exp()).abs(), 1e-12),
        Check::ge("α⋆ lower", a, 1.76),
        Check::le("α⋆ upper", a, 1.77),
    ])
}
