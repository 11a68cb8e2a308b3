"""Smoke test for the spinlab Python module."""

import math

import spinlab


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    p3 = spinlab.Graph.path(3)
    hc = spinlab.SpinSystem.hardcore(p3, 1.0)
    assert close(spinlab.partition_function(hc), 5.0)

    support, probs = spinlab.enumerate(hc)
    assert len(support) == 5 and close(sum(probs), 1.0)

    exact = spinlab.marginal(hc, [1])
    saw = spinlab.saw_marginal(hc, 1)
    assert close(saw[1], exact[(1,)])

    c5 = spinlab.SpinSystem.two_spin(spinlab.Graph.cycle(5), 1.5, 1.5, 1.0)
    m = spinlab.marginal(c5, [0])
    s = spinlab.saw_marginal(c5, 0)
    assert close(s[1], m[(1,)], 1e-9)

    gap = spinlab.spectral_gap_of(hc)
    assert 0.0 < gap["gap"] <= 1.0 and close(gap["t_rel"], 1.0 / gap["gap"])

    pairs = spinlab.recursive_coupling(hc, 1, 200, seed=7)
    assert all(x[1] == 0 and y[1] == 1 for x, y in pairs)

    k = 3
    samples = spinlab.sim_down_up(hc, [[0], [1], [2]], 50, seed=1)
    assert len(samples) == 50 and all(hc.weight(x) > 0 for x in samples)

    blocks = spinlab.degree_partition(spinlab.Graph.cycle(6), k, 1.0, seed=3)
    assert sorted(v for b in blocks for v in b) == list(range(6))

    assert close(spinlab.lambda_critical(3), 4.0)
    assert 1.76 < spinlab.alpha_star() < 1.77
    assert isinstance(spinlab.__version__, str)
    print("spinlab smoke test passed", spinlab.__version__)


if __name__ == "__main__":
    main()
