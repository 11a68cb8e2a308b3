use serde_json::{json, Value};

use spinlab_core::coupling::{estimate_ci, CouplingKind, PinningSpec};
use spinlab_core::dynamics::{
    bipartite_orders, chain_step, check_censoring, check_monotone, conditional_glauber_mixing, empirical_tv,
    estimate_mixing, feasible_config, set_simdownup_schedule, sim_down_up_sample, tv_bias_bound, ChainSpec,
    ExactConditional, MixingMode, SimDownUpParams, UpdateSchedule,
};
use spinlab_core::io::{format_float, spin_string, write_csv};
use spinlab_core::oracle::{enumerate, spectral_gap, BlockConvention};
use spinlab_core::partition::{
    construct_partition, verify_balanced, verify_degree_partition, verify_left_partition, Budget, PartitionMode,
};
use spinlab_core::rng::StreamSeed;
use spinlab_core::{Spin, SpinSystem};

use crate::args::*;
use crate::inputs::{load_graph, load_model, load_partition, load_pinning, load_rho};
use crate::manifest::{sha256_hex, ManifestBuilder, RunManifest};
use crate::parallel;
use crate::{CliError, CliResult};

fn params<T: serde::Serialize>(args: &T) -> Value {
    serde_json::to_value(args).expect("arguments serialise")
}

fn system(m: &ModelArgs, seed: u64) -> CliResult<SpinSystem> {
    let g = load_graph(&m.graph, seed)?;
    let sys = load_model(&m.model, g)?;
    Ok(sys.condition(&load_pinning(m.pinning.as_deref())?)?)
}

fn chain_spec(sys: &SpinSystem, c: &ChainArgs) -> CliResult<ChainSpec> {
    let partition = || -> CliResult<_> {
        let spec = c
            .partition
            .as_deref()
            .ok_or_else(|| CliError::Usage(format!("--chain {:?} needs --partition", c.chain)))?;
        load_partition(spec, sys.n())
    };
    Ok(match c.chain {
        ChainKind::Glauber => ChainSpec::Glauber,
        ChainKind::Downup => {
            let partition = partition()?;
            if c.ell > partition.k() {
                return Err(CliError::Usage(format!("--ell {} exceeds k = {}", c.ell, partition.k())));
            }
            let convention = match c.convention {
                Convention::Complement => BlockConvention::ResampleComplement,
                Convention::Block => BlockConvention::ResampleBlock,
            };
            ChainSpec::DownUp { partition, ell: c.ell, convention }
        }
        ChainKind::BipartiteBlock => ChainSpec::BipartiteBlock { partition: partition()?, m: c.m },
        ChainKind::Simdownup | ChainKind::Exact => {
            return Err(CliError::Usage(format!("--chain {:?} has no transition matrix", c.chain)))
        }
    })
}

fn write_file(path: &Option<String>, contents: &str) -> CliResult<()> {
    if let Some(p) = path {
        std::fs::write(p, contents)?;
    }
    Ok(())
}

pub fn cmd_gap(seed: u64, a: &GapArgs) -> CliResult<RunManifest> {
    let mb = ManifestBuilder::start("gap", seed, params(a));
    let mut rows = Vec::new();
    let mut csv_rows = Vec::new();
    for spec in &a.graphs {
        let sys = load_model(&a.model, load_graph(spec, seed)?)?.condition(&load_pinning(a.pinning.as_deref())?)?;
        let m = spinlab_core::dynamics::chain_matrix(&sys, &chain_spec(&sys, &a.chain)?)?;
        let g = spectral_gap(&m);
        eprintln!("gap: {spec}: t_rel = {}", format_float(g.t_rel));
        rows.push(json!({
            "graph": spec,
            "n": sys.n(),
            "states": m.len(),
            "lambda2": g.lambda2,
            "gap": g.gap,
            "t_rel": if g.t_rel.is_finite() { json!(g.t_rel) } else { json!("inf") },
        }));
        csv_rows.push(vec![sys.n() as f64, g.lambda2, g.gap, g.t_rel]);
    }
    if let Some(path) = &a.csv {
        let body = write_csv(&["n", "lambda2", "gap", "t_rel"], &csv_rows);
        let mut out = String::from("graph,");
        let mut lines = body.lines();
        out.push_str(lines.next().unwrap_or(""));
        out.push('\n');
        for (spec, line) in a.graphs.iter().zip(lines) {
            out.push_str(&format!("{spec},{line}\n"));
        }
        std::fs::write(path, out)?;
    }
    Ok(mb.finish(json!({ "rows": rows }), true))
}

fn simdownup_params(sys: &SpinSystem, p: &spinlab_core::Partition, a: &SampleArgs) -> CliResult<(SimDownUpParams, Option<u64>)> {
    let base = set_simdownup_schedule(1, sys.n(), a.eps, a.block_m, a.eta, a.c_const)?;
    if base.k != p.k() {
        return Err(CliError::Usage(format!(
            "partition has k = {} but ⌈4M/η⌉ = {}",
            p.k(),
            base.k
        )));
    }
    let (mut params, t_mix) = match (a.t0, a.t1) {
        (Some(_), Some(_)) => (base, None),
        _ => {
            let t = conditional_glauber_mixing(sys, p, base.base_level, 1.0 / (4.0 * std::f64::consts::E), 1_000_000)?;
            (set_simdownup_schedule(t, sys.n(), a.eps, a.block_m, a.eta, a.c_const)?, Some(t))
        }
    };
    if let Some(t0) = a.t0 {
        params.t0 = t0;
    }
    if let Some(t1) = a.t1 {
        params.t1 = t1;
    }
    Ok((params, t_mix))
}

pub fn cmd_sample(seed: u64, a: &SampleArgs) -> CliResult<RunManifest> {
    let mb = ManifestBuilder::start("sample", seed, params(a));
    if a.samples == 0 {
        return Err(CliError::Usage("--samples must be positive".into()));
    }
    let sys = system(&a.model, seed)?;
    let start = feasible_config(&sys)?;
    let root = StreamSeed(seed);
    let mut extra = json!({});
    let samples: Vec<Vec<Spin>> = match a.chain.chain {
        ChainKind::Exact => {
            let dist = enumerate(&sys)?;
            parallel::draw(a.samples, root, || Ok(()), |_, _, rng| Ok(dist.sample(rng).to_vec()))?
        }
        ChainKind::Simdownup => {
            let spec = a
                .chain
                .partition
                .as_deref()
                .ok_or_else(|| CliError::Usage("--chain simdownup needs --partition".into()))?;
            let p = load_partition(spec, sys.n())?;
            let (sched, t_mix) = simdownup_params(&sys, &p, a)?;
            extra = json!({ "schedule": sched, "t_mix_eta": t_mix });
            eprintln!("sample: SimDownUp T0 = {}, T1 = {}", sched.t0, sched.t1);
            parallel::draw(a.samples, root, || Ok(()), |_, i, _| {
                Ok(sim_down_up_sample(&sys, &p, &start, &sched, root.child(i as u64))?)
            })?
        }
        _ => {
            let chain = chain_spec(&sys, &a.chain)?;
            parallel::draw(
                a.samples,
                root,
                || Ok(ExactConditional::new(&sys)),
                |sampler, _, rng| {
                    let mut x = start.clone();
                    for _ in 0..a.steps {
                        chain_step(&sys, &chain, sampler, &mut x, rng)?;
                    }
                    Ok(x)
                },
            )?
        }
    };
    let two = sys.q() == 2;
    let mut csv = String::from("sample\n");
    for s in &samples {
        csv.push_str(&spin_string(s, two));
        csv.push('\n');
    }
    write_file(&a.out, &csv)?;
    let (tv, bias) = match enumerate(&sys) {
        Ok(d) => (Some(empirical_tv(&d, &samples)), Some(tv_bias_bound(d.len(), samples.len()))),
        Err(_) => (None, None),
    };
    Ok(mb.finish(
        json!({
            "samples": samples.len(),
            "samples_sha256": sha256_hex(csv.as_bytes()),
            "empirical_tv": tv,
            "tv_bias_bound": bias,
            "details": extra,
        }),
        true,
    ))
}

pub fn cmd_mix(seed: u64, a: &MixArgs) -> CliResult<RunManifest> {
    let mb = ManifestBuilder::start("mix", seed, params(a));
    let sys = system(&a.model, seed)?;
    let chain = chain_spec(&sys, &a.chain)?;
    let (mode, start) = match a.replicas {
        Some(r) => (MixingMode::MonteCarlo { replicas: r }, Some(feasible_config(&sys)?)),
        None => (MixingMode::Exact, None),
    };
    let est = estimate_mixing(&sys, &chain, a.eps, mode, start.as_deref(), a.max_t, StreamSeed(seed))?;
    let rows: Vec<Vec<f64>> = est.curve.iter().map(|&(t, tv)| vec![t as f64, tv]).collect();
    write_file(&a.csv, &write_csv(&["step", "tv"], &rows))?;
    let reached = est.t_mix.is_some();
    Ok(mb.finish(
        json!({ "t_mix": est.t_mix, "final_tv": est.curve.last().map(|c| c.1), "bias_bound": est.bias_bound }),
        reached,
    ))
}

pub fn cmd_partition(seed: u64, a: &PartitionArgs) -> CliResult<RunManifest> {
    let mb = ManifestBuilder::start("partition", seed, params(a));
    let g = load_graph(&a.graph, seed)?;
    let mode = match a.mode {
        PartitionModeArg::General => PartitionMode::General,
        PartitionModeArg::Balanced => PartitionMode::Balanced,
        PartitionModeArg::BipartiteLeft => PartitionMode::BipartiteLeft { bound: a.bound },
    };
    if !(a.fail_prob > 0.0 && a.fail_prob < 1.0) {
        return Err(CliError::Usage("--fail-prob must lie in (0, 1)".into()));
    }
    match construct_partition(&g, a.k, a.xi, mode, Budget::for_failure_probability(a.fail_prob), seed) {
        Ok((p, stats)) => {
            let degree = verify_degree_partition(&g, &p, a.xi);
            let left = match mode {
                PartitionMode::BipartiteLeft { bound } => Some(verify_left_partition(
                    &g,
                    &p,
                    bound.unwrap_or_else(|| spinlab_core::partition::left_max_degree(&g).unwrap_or(0)),
                )?),
                _ => None,
            };
            Ok(mb.finish(
                json!({
                    "partition": p,
                    "stats": stats,
                    "degree_check": degree,
                    "balanced": verify_balanced(&p),
                    "left_check": left,
                }),
                true,
            ))
        }
        Err(spinlab_core::SpinError::Construction { rounds, copies }) => {
            Ok(mb.finish(json!({ "error": "construction failed", "rounds": rounds, "copies": copies }), false))
        }
        Err(e) => Err(e.into()),
    }
}

fn pinning_spec(s: &str) -> CliResult<PinningSpec> {
    let bad = || CliError::Usage(format!("bad --pinnings {s:?}"));
    if s == "empty" {
        return Ok(PinningSpec::Empty);
    }
    let (kind, args) = s.split_once(':').ok_or_else(bad)?;
    let nums: Vec<usize> = args.split(',').map(|x| x.trim().parse()).collect::<Result<_, _>>().map_err(|_| bad())?;
    match (kind, nums.as_slice()) {
        ("exhaustive", [k]) => Ok(PinningSpec::Exhaustive { max_size: *k }),
        ("random", [c, k]) => Ok(PinningSpec::Random { count: *c, size: *k }),
        _ => Err(bad()),
    }
}

pub fn cmd_ci(seed: u64, a: &CiArgs) -> CliResult<RunManifest> {
    let mb = ManifestBuilder::start("ci", seed, params(a));
    let sys = system(&a.model, seed)?;
    let rho = load_rho(a.rho.as_deref(), sys.n())?;
    let kind = match a.coupling {
        CouplingArg::TwoSpin => CouplingKind::TwoSpin,
        CouplingArg::Coloring => CouplingKind::Coloring,
    };
    let report = estimate_ci(&sys, &rho, kind, &pinning_spec(&a.pinnings)?, a.pairs, a.samples, a.target, StreamSeed(seed))?;
    eprintln!("ci: {} triples, max ratio {}", report.pairs.len(), format_float(report.max_ratio));
    let pass = report.target_met.unwrap_or(true);
    Ok(mb.finish(serde_json::to_value(&report).expect("report serialises"), pass))
}

pub fn cmd_censor_check(seed: u64, a: &CensorArgs) -> CliResult<RunManifest> {
    let mb = ManifestBuilder::start("censor-check", seed, params(a));
    let sys = system(&a.model, seed)?;
    let orders = bipartite_orders(&sys)?;
    let mono = check_monotone(&sys, &orders)?;
    let top = sys.maximal_config(&orders);
    let lens: Vec<(Option<f64>, usize)> = match a.schedule_len {
        Some(l) => vec![(None, l)],
        None => a.c_const.iter().map(|&c| (Some(c), ((c * sys.n() as f64).ceil() as usize).min(20))).collect(),
    };
    let mut rows = Vec::new();
    let mut pass = mono.monotone;
    let mut rng = StreamSeed(seed).rng();
    for (c, len) in lens {
        let sched = UpdateSchedule::random(sys.n(), len, &mut rng);
        let rep = check_censoring(&sys, &sched, &top, 1e-12)?;
        eprintln!("censor-check: length {len}: {} masks, {} violations", rep.masks_checked, rep.violations.len());
        pass &= rep.violations.is_empty();
        rows.push(json!({ "c_const": c, "length": len, "schedule": sched, "report": rep }));
    }
    Ok(mb.finish(json!({ "monotone": mono, "runs": rows }), pass))
}
