use proptest::prelude::*;

use spinlab_core::coupling::{build_saw_tree, maximal_coupling, saw_root_marginal};
use spinlab_core::dynamics::down_up_matrix;
use spinlab_core::oracle::{enumerate, exact_marginal, glauber_matrix};
use spinlab_core::partition::{verify_degree_partition, Partition};
use spinlab_core::spin::{make_hardcore, make_list_coloring, make_two_spin, HammingWeight};
use spinlab_core::{Graph, PartialConfig, SpinSystem, PLUS};

fn graph_strategy(max_n: usize) -> impl Strategy<Value = Graph> {
    (2..=max_n).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        proptest::collection::vec(any::<bool>(), pairs.len()).prop_map(move |mask| {
            let edges: Vec<_> = pairs.iter().zip(mask).filter(|(_, m)| *m).map(|(e, _)| *e).collect();
            Graph::new(n, &edges).unwrap()
        })
    })
}

fn two_spin_strategy(max_n: usize) -> impl Strategy<Value = SpinSystem> {
    (graph_strategy(max_n), 0.0..2.0f64, 0.2..2.0f64, 0.2..3.0f64)
        .prop_map(|(g, b, c, l)| make_two_spin(g, b, c, l).unwrap())
}

fn pinning_strategy(n: usize) -> impl Strategy<Value = PartialConfig> {
    proptest::collection::vec(prop_oneof![Just(None), Just(Some(0u8)), Just(Some(1u8))], n)
        .prop_map(|v| PartialConfig::from_pairs(v.into_iter().enumerate().filter_map(|(i, s)| s.map(|s| (i, s)))))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hamming_is_a_metric(
        w in proptest::collection::vec(1u64..5, 6),
        a in proptest::collection::vec(0u8..3, 6),
        b in proptest::collection::vec(0u8..3, 6),
        c in proptest::collection::vec(0u8..3, 6),
    ) {
        let rho = HammingWeight::new(w).unwrap();
        prop_assert_eq!(rho.distance(&a, &b), rho.distance(&b, &a));
        prop_assert_eq!(rho.distance(&a, &b) == 0, a == b);
        prop_assert!(rho.distance(&a, &c) <= rho.distance(&a, &b) + rho.distance(&b, &c));
    }

    #[test]
    fn conditioning_composes(sys in two_spin_strategy(6), t1 in pinning_strategy(6), t2 in pinning_strategy(6)) {
        let t2 = PartialConfig::from_pairs(t2.iter().filter(|(v, _)| *v < sys.n() && t1.get(*v).is_none()));
        let t1 = PartialConfig::from_pairs(t1.iter().filter(|(v, _)| *v < sys.n()));
        let both = t1.merged(&t2).unwrap();
        let stepwise = sys.condition(&t1).and_then(|s| s.condition(&t2)).and_then(|s| enumerate(&s));
        let direct = sys.condition(&both).and_then(|s| enumerate(&s));
        match (stepwise, direct) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.support(), b.support());
                for (x, y) in a.probs().iter().zip(b.probs()) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "feasibility differs: {:?} vs {:?}", a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn glauber_is_reversible(sys in two_spin_strategy(6)) {
        let m = glauber_matrix(&sys).unwrap();
        prop_assert!(m.detailed_balance_error() < 1e-12);
        let pi = m.stationary().to_vec();
        let step = m.step_distribution(&pi);
        for (a, b) in pi.iter().zip(&step) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn down_up_is_reversible(sys in two_spin_strategy(6), labels in proptest::collection::vec(0usize..3, 6), ell in 0usize..3) {
        let n = sys.n();
        let p = Partition::from_labels(3, &(0..n).collect::<Vec<_>>(), &labels[..n]);
        prop_assume!(p.is_ok());
        let m = down_up_matrix(&sys, &p.unwrap(), ell).unwrap();
        prop_assert!(m.detailed_balance_error() < 1e-12);
    }

    #[test]
    fn degree_check_reports_true_maximum(g in graph_strategy(8), labels in proptest::collection::vec(0usize..3, 8)) {
        let n = g.n();
        let p = Partition::from_labels(3, &(0..n).collect::<Vec<_>>(), &labels[..n]);
        prop_assume!(p.is_ok());
        let p = p.unwrap();
        let chk = verify_degree_partition(&g, &p, 0.5);
        let mut worst = 0;
        for v in 0..n {
            for b in p.blocks() {
                worst = worst.max(g.neighbors(v).iter().filter(|u| b.contains(u)).count());
            }
        }
        prop_assert_eq!(chk.worst_count, worst);
        prop_assert_eq!(chk.ok, worst as f64 <= 1.5 * g.max_degree() as f64 / 3.0);
        prop_assert!(verify_degree_partition(&g, &p, 3.0).ok);
    }

    #[test]
    fn saw_marginal_matches_enumeration(sys in two_spin_strategy(6), tau in pinning_strategy(6), root in 0usize..6) {
        let root = root % sys.n();
        let tau = PartialConfig::from_pairs(tau.iter().filter(|(v, _)| *v < sys.n() && *v != root));
        let cond = sys.condition(&tau).unwrap();
        prop_assume!(enumerate(&cond).is_ok());
        let (t, ts) = build_saw_tree(&cond, root, 64).unwrap();
        let saw = saw_root_marginal(&t, &ts).unwrap();
        let exact = exact_marginal(&cond, &[root]).unwrap().prob_of(&[PLUS]);
        prop_assert!((saw[1] - exact).abs() < 1e-10);
    }

    #[test]
    fn maximal_coupling_has_given_marginals(p in proptest::collection::vec(0.01..1.0f64, 4), q in proptest::collection::vec(0.01..1.0f64, 4)) {
        let norm = |v: Vec<f64>| { let s: f64 = v.iter().sum(); v.into_iter().map(|x| x / s).collect::<Vec<_>>() };
        let (p, q) = (norm(p), norm(q));
        let j = maximal_coupling(&p, &q);
        let tv: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
        let off: f64 = (0..16).filter(|k| k / 4 != k % 4).map(|k| j[k]).sum();
        prop_assert!((off - tv).abs() < 1e-12);
        for i in 0..4 {
            prop_assert!(((0..4).map(|c| j[i * 4 + c]).sum::<f64>() - p[i]).abs() < 1e-12);
            prop_assert!(((0..4).map(|r| j[r * 4 + i]).sum::<f64>() - q[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn hardcore_and_coloring_chains_are_reversible() {
    let hc = make_hardcore(Graph::cycle(6), 1.3).unwrap();
    assert!(glauber_matrix(&hc).unwrap().detailed_balance_error() < 1e-12);
    let col = make_list_coloring(Graph::cycle(5), &vec![vec![0, 1, 2, 3]; 5]).unwrap();
    assert!(glauber_matrix(&col).unwrap().detailed_balance_error() < 1e-12);
}
