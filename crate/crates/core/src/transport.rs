//! Exact discrete optimal transport by successive shortest augmenting paths
//! on the dense bipartite residual network, with Johnson potentials.

const EPS: f64 = 1e-15;

#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub cost: f64,
    /// Row-major `|a| × |b|` flow matrix.
    pub flow: Vec<f64>,
}

/// Minimum of `Σ_ij F_ij c(i,j)` over couplings `F` of `a` and `b`.
/// Both inputs must be nonnegative with equal totals; costs must be
/// nonnegative.
pub fn min_cost_transport(a: &[f64], b: &[f64], cost: impl Fn(usize, usize) -> f64) -> TransportPlan {
    let (na, nb) = (a.len(), b.len());
    let c: Vec<f64> = (0..na * nb).map(|k| cost(k / nb, k % nb)).collect();
    let mut flow = vec![0.0; na * nb];
    let mut sent = vec![0.0; na];
    let mut recv = vec![0.0; nb];
    // node ids: 0..na rows, na..na+nb columns
    let nodes = na + nb;
    let mut pot = vec![0.0; nodes];
    let total: f64 = a.iter().sum::<f64>().min(b.iter().sum());
    let mut shipped = 0.0;
    let tol = 1e-13 * total.max(1.0);

    while total - shipped > tol {
        // Dijkstra from a virtual source attached to rows with spare supply.
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev = vec![usize::MAX; nodes];
        let mut done = vec![false; nodes];
        for i in 0..na {
            if a[i] - sent[i] > EPS {
                dist[i] = 0.0;
            }
        }
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for (x, &d) in dist.iter().enumerate() {
                if !done[x] && d < best {
                    best = d;
                    u = x;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u < na {
                for j in 0..nb {
                    let v = na + j;
                    if done[v] {
                        continue;
                    }
                    let rc = (c[u * nb + j] + pot[u] - pot[v]).max(0.0);
                    if dist[u] + rc < dist[v] {
                        dist[v] = dist[u] + rc;
                        prev[v] = u;
                    }
                }
            } else {
                let j = u - na;
                for i in 0..na {
                    if done[i] || flow[i * nb + j] <= EPS {
                        continue;
                    }
                    let rc = (-c[i * nb + j] + pot[u] - pot[i]).max(0.0);
                    if dist[u] + rc < dist[i] {
                        dist[i] = dist[u] + rc;
                        prev[i] = u;
                    }
                }
            }
        }
        // closest column with spare demand
        let mut sink = usize::MAX;
        let mut best = f64::INFINITY;
        for j in 0..nb {
            if b[j] - recv[j] > EPS && dist[na + j] < best {
                best = dist[na + j];
                sink = na + j;
            }
        }
        if sink == usize::MAX {
            break;
        }
        for x in 0..nodes {
            pot[x] += dist[x].min(best);
        }
        // bottleneck
        let mut delta = b[sink - na] - recv[sink - na];
        let mut v = sink;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u >= na {
                // backward arc: column u -> row v cancels flow
                delta = delta.min(flow[v * nb + (u - na)]);
            }
            v = u;
        }
        delta = delta.min(a[v] - sent[v]);
        let source = v;
        let mut v = sink;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u < na {
                flow[u * nb + (v - na)] += delta;
            } else {
                flow[v * nb + (u - na)] -= delta;
            }
            v = u;
        }
        sent[source] += delta;
        recv[sink - na] += delta;
        shipped += delta;
    }
    let cost = flow.iter().zip(&c).map(|(f, c)| f * c).sum();
    TransportPlan { cost, flow }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn point_masses() {
        let plan = min_cost_transport(&[1.0], &[1.0], |_, _| 3.0);
        assert_eq!(plan.cost, 3.0);
    }

    #[test]
    fn uniform_matches_best_assignment() {
        // Birkhoff: uniform-to-uniform OT equals the best permutation.
        let mut seed = 12345u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 33) % 10
        };
        for n in 1..=6 {
            let cost: Vec<f64> = (0..n * n).map(|_| next() as f64).collect();
            let w = vec![1.0 / n as f64; n];
            let plan = min_cost_transport(&w, &w, |i, j| cost[i * n + j]);
            let brute = permutations(n)
                .iter()
                .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
                / n as f64;
            assert!((plan.cost - brute).abs() < 1e-12, "n={n}: {} vs {brute}", plan.cost);
        }
    }

    #[test]
    fn plan_has_the_right_marginals() {
        let a = [0.5, 0.3, 0.2];
        let b = [0.1, 0.6, 0.25, 0.05];
        let plan = min_cost_transport(&a, &b, |i, j| (i as f64 - j as f64).abs());
        for i in 0..3 {
            let s: f64 = (0..4).map(|j| plan.flow[i * 4 + j]).sum();
            assert!((s - a[i]).abs() < 1e-12);
        }
        for j in 0..4 {
            let s: f64 = (0..3).map(|i| plan.flow[i * 4 + j]).sum();
            assert!((s - b[j]).abs() < 1e-12);
        }
        // 1-D with |i-j| cost: optimum equals the L1 distance between CDFs
        let mut ca = 0.0;
        let mut cb = 0.0;
        let mut l1 = 0.0;
        for k in 0..4 {
            ca += a.get(k).copied().unwrap_or(0.0);
            cb += b[k];
            l1 += (ca - cb).abs();
        }
        assert!((plan.cost - l1).abs() < 1e-12);
    }
}
