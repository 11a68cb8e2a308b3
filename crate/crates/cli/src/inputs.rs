//! Command-line inputs: graphs, models, partitions and pinnings given either
//! inline or as file paths.

use std::path::Path;

use spinlab_core::graph::{random_biregular, random_regular};
use spinlab_core::io::{parse_graph, parse_partition, parse_pinning, ModelSpec};
use spinlab_core::rng::StreamSeed;
use spinlab_core::{Graph, PartialConfig, Partition, SpinSystem};

use crate::{CliError, CliResult};

const GRAPH_STREAM: u64 = 0x6772_6170_68;

fn read_arg(spec: &str) -> CliResult<String> {
    if Path::new(spec).is_file() {
        Ok(std::fs::read_to_string(spec)?)
    } else {
        Ok(spec.to_string())
    }
}

fn numbers(args: &str, want: usize, what: &str) -> CliResult<Vec<usize>> {
    let v: Vec<usize> = args
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("bad arguments {args:?} for {what}")))?;
    if v.len() != want {
        return Err(CliError::Usage(format!("{what} takes {want} argument(s)")));
    }
    Ok(v)
}

/// A graph file, or one of `path:N`, `cycle:N`, `complete:N`, `star:L`,
/// `kbip:L,R`, `regular:N,D`, `biregular:NL,DL,NR,DR`. Random families draw
/// from a stream derived from `seed`.
pub fn load_graph(spec: &str, seed: u64) -> CliResult<Graph> {
    if Path::new(spec).is_file() {
        return Ok(parse_graph(&std::fs::read_to_string(spec)?)?);
    }
    let (family, args) = spec
        .split_once(':')
        .ok_or_else(|| CliError::Usage(format!("{spec:?} is neither a file nor a graph family")))?;
    let mut rng = StreamSeed(seed).child(GRAPH_STREAM).rng();
    let g = match family {
        "path" => Graph::path(numbers(args, 1, family)?[0]),
        "cycle" => {
            let n = numbers(args, 1, family)?[0];
            if n < 3 {
                return Err(CliError::Usage("cycles need at least 3 vertices".into()));
            }
            Graph::cycle(n)
        }
        "complete" => Graph::complete(numbers(args, 1, family)?[0]),
        "star" => Graph::star(numbers(args, 1, family)?[0]),
        "kbip" => {
            let v = numbers(args, 2, family)?;
            Graph::complete_bipartite(v[0], v[1])
        }
        "regular" => {
            let v = numbers(args, 2, family)?;
            random_regular(v[0], v[1], &mut rng)?
        }
        "biregular" => {
            let v = numbers(args, 4, family)?;
            random_biregular(v[0], v[1], v[2], v[3], &mut rng)?
        }
        _ => return Err(CliError::Usage(format!("unknown graph family {family:?}"))),
    };
    Ok(g)
}

/// Inline JSON, a JSON file, or `hardcore:λ`, `two_spin:β,γ,λ`,
/// `coloring:q` (every vertex gets the list `0..q`).
pub fn load_model(spec: &str, graph: Graph) -> CliResult<SpinSystem> {
    let text = read_arg(spec)?;
    let text = text.trim();
    let model = if text.starts_with('{') {
        ModelSpec::parse(text)?
    } else {
        let (name, args) = text
            .split_once(':')
            .ok_or_else(|| CliError::Usage(format!("cannot parse model {text:?}")))?;
        let floats: Vec<f64> = args
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::Usage(format!("bad model parameters {args:?}")))?;
        match (name, floats.as_slice()) {
            ("hardcore", [l]) => ModelSpec::Hardcore { lambda: *l },
            ("two_spin", [b, g, l]) => ModelSpec::TwoSpin { beta: *b, gamma: *g, lambda: *l },
            ("coloring", [q]) if *q >= 1.0 && q.fract() == 0.0 && *q <= 255.0 => {
                ModelSpec::ListColoring { lists: vec![(0..*q as u8).collect(); graph.n()] }
            }
            _ => return Err(CliError::Usage(format!("cannot parse model {text:?}"))),
        }
    };
    Ok(model.build(graph)?)
}

/// Inline JSON, a JSON file, or `mod:K` (vertex `v` in block `v mod K`).
pub fn load_partition(spec: &str, n: usize) -> CliResult<Partition> {
    if let Some(k) = spec.strip_prefix("mod:") {
        let k = numbers(k, 1, "mod")?[0];
        let cover: Vec<usize> = (0..n).collect();
        let labels: Vec<usize> = cover.iter().map(|v| v % k.max(1)).collect();
        return Ok(Partition::from_labels(k, &cover, &labels)?);
    }
    Ok(parse_partition(&read_arg(spec)?)?)
}

pub fn load_pinning(spec: Option<&str>) -> CliResult<PartialConfig> {
    match spec {
        None => Ok(PartialConfig::new()),
        Some(s) => Ok(parse_pinning(&read_arg(s)?)?),
    }
}

/// Comma-separated vertex weights, or unit weights when absent.
pub fn load_rho(spec: Option<&str>, n: usize) -> CliResult<spinlab_core::spin::HammingWeight> {
    use spinlab_core::spin::HammingWeight;
    match spec {
        None => Ok(HammingWeight::unit(n)),
        Some(s) => {
            let w: Vec<u64> = s
                .split(',')
                .map(|x| x.trim().parse::<u64>())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::Usage(format!("bad weights {s:?}")))?;
            if w.len() != n {
                return Err(CliError::Usage(format!("need {n} weights, got {}", w.len())));
            }
            Ok(HammingWeight::new(w)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn families_and_models() {
        assert_eq!(load_graph("cycle:5", 0).unwrap().edge_count(), 5);
        assert_eq!(load_graph("kbip:2,3", 0).unwrap().bipartition().unwrap().right, vec![2, 3, 4]);
        let a = load_graph("regular:20,4", 7).unwrap();
        let b = load_graph("regular:20,4", 7).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert!(load_graph("cycle:2", 0).is_err());
        assert!(load_graph("blob:3", 0).is_err());
        let s = load_model("hardcore:1.5", Graph::path(3)).unwrap();
        assert_eq!(s.two_spin_params(), Some((0.0, 1.0, 1.5)));
        assert_eq!(load_model("coloring:3", Graph::path(3)).unwrap().q(), 3);
        assert!(load_model("hardcore:x", Graph::path(3)).is_err());
        let p = load_partition("mod:3", 6).unwrap();
        assert_eq!(p.block(1), &[1, 4]);
    }
}
