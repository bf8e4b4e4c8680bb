import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spinboson.errors import ClusterTooLarge, HorizonTooLarge
from spinboson.lab import random_weights
from spinboson.polymer import (PolymerSystem, brute_force_partition, check_kotecky_preiss,
                               check_strengthened_kp, cluster_decay_profile, cluster_log_partition,
                               cluster_sum_touching, connected_graph_sum, cumulants, dump_weights,
                               exclusion_gas_pressure, family_system, finite_size_correction,
                               fit_decay_exponent, load_weights, moments_from_cumulants, pressure,
                               set_partitions, truncated_weight)


def brute_connected_sum(m, mask):
    """Oracle: enumerate every edge subset and test connectivity by union-find."""
    edges = [(i, j) for i in range(m) for j in range(i + 1, m) if mask >> (i * m + j) & 1]
    total = 0
    for r in range(len(edges) + 1):
        for E in itertools.combinations(edges, r):
            parent = list(range(m))

            def find(x):
                while parent[x] != x:
                    x = parent[x]
                return x
            for i, j in E:
                parent[find(i)] = find(j)
            if len({find(i) for i in range(m)}) == 1:
                total += (-1) ** r
    return total


def test_brute_force_examples():
    assert brute_force_partition(PolymerSystem(5, {})) == 1
    a, b, c = 0.3, -0.2j, 0.05
    assert brute_force_partition(PolymerSystem(2, {(1,): a, (2,): b, (1, 2): c})) == \
        pytest.approx(1 + a + b + c)
    assert brute_force_partition(PolymerSystem(3, {(1,): a, (3,): b})) == \
        pytest.approx(1 + a + b + a * b)
    with pytest.raises(HorizonTooLarge):
        brute_force_partition(PolymerSystem(13, {(1,): 0.1}))


def test_truncated_weight_examples():
    s = PolymerSystem(6, {(1,): 0.3, (2,): 0.5j, (5,): -0.2})
    assert truncated_weight(s, [(1,)]) == 0.3
    assert truncated_weight(s, [(1,), (2,)]) == pytest.approx(-0.3 * 0.5j)
    assert truncated_weight(s, [(1,), (5,)]) == 0
    with pytest.raises(ClusterTooLarge):
        truncated_weight(s, [(1,)] * 9)


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 30))
def test_connected_graph_sum_against_edge_enumeration(m, bits):
    mask = 0
    for i in range(m):
        for j in range(i + 1, m):
            if bits >> (i * m + j) & 1:
                mask |= 1 << (i * m + j)
    assert connected_graph_sum(m, mask) == brute_connected_sum(m, mask)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 30), st.integers(0, 3)), min_size=2, max_size=7),
       st.integers(1, 15))
def test_disconnected_clusters_vanish_exactly(shapes, split):
    # two groups separated by a gap of at least 2 sites
    left = [tuple(range(s, s + k + 1)) for s, k in shapes[: len(shapes) // 2]]
    off = max(max(A) for A in left) + 1 + split
    right = [tuple(range(off + s, off + s + k + 1)) for s, k in shapes[len(shapes) // 2:]]
    members = left + right
    n = max(max(A) for A in members)
    w = {A: 0.1 + 0.05j for A in members}
    s = PolymerSystem(n, w)
    assert min(min(A) for A in right) - max(max(A) for A in left) > 1
    assert truncated_weight(s, members) == 0


def test_kp_examples():
    subsets = [A for r in range(1, 7) for A in itertools.combinations(range(1, 7), r)]
    small = PolymerSystem(6, {A: 0.01 ** len(A) for A in subsets})
    rep = check_kotecky_preiss(small)
    assert rep.satisfied
    # oracle: direct summation for every A'
    worst = max(sum(abs(0.01 ** len(A)) * np.exp(len(A)) for A in subsets
                    if min(abs(a - b) for a in A for b in B) <= 1) / len(B) for B in subsets)
    assert rep.worst_ratio == pytest.approx(worst, rel=1e-12)
    big = PolymerSystem(6, {A: 0.9 ** len(A) for A in subsets})
    rep = check_kotecky_preiss(big)
    assert not rep.satisfied and rep.witness is not None
    zero = check_kotecky_preiss(PolymerSystem(4, {}))
    assert zero.satisfied and zero.worst_ratio == 0


def test_cluster_log_partition_examples():
    assert cluster_log_partition(PolymerSystem(5, {})).value == 0
    rng = np.random.default_rng(11)
    s = PolymerSystem(6, random_weights(rng, 6))
    r = cluster_log_partition(s, 4)
    assert abs(np.exp(r.value) - brute_force_partition(s)) < 1e-9
    assert r.truncation_bound < 1e-5


def test_single_polymer_series():
    x = 0.1
    s = PolymerSystem(3, {(2,): x})
    for cap in (3, 6, 10):
        r = cluster_log_partition(s, cap)
        series = sum((-1) ** (m + 1) * x ** m / m for m in range(1, cap + 1))
        assert abs(r.value - series) < 1e-15
    assert abs(cluster_log_partition(s, 10).value - np.log1p(x)) < 1e-10


@settings(max_examples=6, deadline=None)
@given(st.sampled_from([4, 6]), st.integers(0, 2 ** 31 - 1))
def test_cluster_identity_property(n, seed):
    rng = np.random.default_rng(seed)
    s = PolymerSystem(n, random_weights(rng, n, scale=rng.uniform(1e-4, 2e-3)))
    r = cluster_log_partition(s, 5)
    assert r.kp.worst_ratio <= 0.5
    assert abs(np.exp(r.value) - brute_force_partition(s)) < 1e-9


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_kp_bounds_clusters_touching_a_polymer(seed):
    rng = np.random.default_rng(seed)
    n = 6
    s = PolymerSystem(n, random_weights(rng, n, scale=rng.uniform(0.01, 0.05)))
    rep = check_kotecky_preiss(s)
    if not rep.satisfied:
        return
    for A0 in [(1,), (3,), (2, 3), (4, 6)]:
        assert cluster_sum_touching(s, A0, size_cap=4) <= len(A0)


def test_pressure_and_finite_size():
    assert pressure({(0,): 0.0}).value == 0
    x = 0.05
    p = pressure({(0,): x}, cluster_size_cap=10)
    assert abs(p.value - exclusion_gas_pressure(x)) < 1e-9
    # transfer-matrix oracle: Upsilon_n obeys a Fibonacci recursion
    z = [1.0, 1 + x]
    for _ in range(60):
        z.append(z[-1] + x * z[-2])
    assert np.log(z[-1] / z[-2]) == pytest.approx(exclusion_gas_pressure(x).real, rel=1e-12)
    fam = {(0, 1): 0.01}
    p = pressure(fam, cluster_size_cap=8)
    for n in (8, 12):
        logz = np.log(brute_force_partition(family_system(fam, n)))
        corr = finite_size_correction(fam, n, cluster_size_cap=8)
        assert abs(logz - (n * p.value - n * corr)) < 1e-9
    assert finite_size_correction({(0,): 0.0}, 8) == 0
    assert abs(finite_size_correction(fam, 200, cluster_size_cap=6)) < \
        abs(finite_size_correction(fam, 20, cluster_size_cap=6))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2 ** 31 - 1))
def test_cumulant_round_trip(k, seed):
    rng = np.random.default_rng(seed)
    ground = list(range(1, k + 1))
    G = {S: complex(rng.normal(), rng.normal())
         for r in range(1, k + 1) for S in itertools.combinations(ground, r)}
    back = moments_from_cumulants(cumulants(G, ground), ground)
    assert max(abs(back[S] - G[S]) for S in G) < 1e-12


def test_set_partition_count():
    bell = [1, 1, 2, 5, 15, 52]
    for n, b in enumerate(bell):
        assert sum(1 for _ in set_partitions(range(n))) == b


def test_decay_of_cluster_weights():
    n, c = 16, 0.01
    w = {(a, b): c * (b - a + 1) ** -3.0 for a in range(1, n + 1) for b in range(a + 1, n + 1)}
    s = PolymerSystem(n, w)
    assert check_strengthened_kp(s, 1.0, 1.0).satisfied
    ms = [2, 4, 8]
    S = cluster_decay_profile(s, ms)
    assert np.all(np.diff(S) < 0)
    assert fit_decay_exponent(ms, S) >= 0.8


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_weights_json_round_trip(tmp_path):
    s = PolymerSystem(4, {(1,): 0.1 + 0.2j, (2, 4): -0.3})
    dump_weights(s, tmp_path / "w.json")
    back = load_weights(tmp_path / "w.json", n=4)
    assert back.weights == s.weights
    rep = cluster_log_partition(back, 3)
    assert set(json.loads(rep.to_json())) == {"satisfied", "worst_ratio", "witness", "value_re",
                                             "value_im", "tail_bound"}
