from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from helpers import graph_from, random_digraph
from refnet import motifs
from refnet.motifs import TRIAD_PAIRS, classify_triad, triad_census_exact, triad_census_mc


def _bits(code):
    return [(code >> i) & 1 for i in range(6)]


def _permute(bits, perm):
    """Bits of the same triad after relabeling node k as perm[k]."""
    es = {(perm[a], perm[b]) for (a, b), x in zip(TRIAD_PAIRS, bits) if x}
    return [int(p in es) for p in TRIAD_PAIRS]


def test_table_matches_networkx_for_all_64_codes():
    for code in range(64):
        assert classify_triad(_bits(code)) == oracles.networkx_triad_class(_bits(code))


def test_table_invariant_under_relabeling():
    for code in range(64):
        b = _bits(code)
        assert {classify_triad(_permute(b, p)) for p in itertools.permutations(range(3))} == {classify_triad(b)}


def test_class_multiplicities():
    mult = np.bincount(motifs.TRIAD_TABLE - 1, minlength=16)
    assert mult.sum() == 64
    # isomorphism class sizes: 003, 012, 102, ... 300
    assert mult.tolist() == [1, 6, 3, 3, 3, 6, 6, 6, 6, 2, 3, 3, 3, 6, 6, 1]


def test_small_examples():
    assert classify_triad([0] * 6) == 1
    assert classify_triad([1, 0, 0, 0, 0, 0]) == 2
    assert classify_triad([1, 1, 0, 0, 0, 0]) == 3
    # a -> b -> c -> a
    assert classify_triad([1, 0, 0, 1, 1, 0]) == 10
    with pytest.raises(ValueError):
        classify_triad([1, 0])


def test_directed_cycle_census(backend):
    c = triad_census_exact(graph_from(3, [(0, 1), (1, 2), (2, 0)]))
    assert c.counts[9] == 1 and c.counts.sum() == 1


def test_isolated_nodes(backend):
    c = triad_census_exact(graph_from(3, []))
    assert c.counts.tolist() == [1.0] + [0.0] * 15


@pytest.mark.parametrize("seed", range(4))
def test_exact_census_against_brute_force(seed, backend):
    g = random_digraph(50, 180 + 40 * seed, seed, mutual=0.4)
    got = triad_census_exact(g).counts
    assert got.tolist() == oracles.brute_census(50, oracles.edge_list(g)).tolist()
    assert got.sum() == math.comb(50, 3)


def test_exact_census_against_networkx_medium(backend):
    g = random_digraph(300, 2500, 7, mutual=0.3)
    assert triad_census_exact(g).counts.tolist() == oracles.networkx_census(g).tolist()


@given(st.integers(3, 25), st.integers(0, 80), st.integers(0, 10 ** 6))
def test_census_invariant_under_relabeling(n, m, seed):
    g = random_digraph(n, m, seed)
    perm = np.random.default_rng(seed).permutation(n)
    s, d, w = g.edges()
    h = graph_from(n, list(zip(perm[s].tolist(), perm[d].tolist())), w.tolist())
    assert np.array_equal(triad_census_exact(g).counts, triad_census_exact(h).counts)


def test_mc_empty_graph_all_null(backend):
    c = triad_census_mc(graph_from(40, []), 20_000, seed=1)
    assert c.tallies[0] == 20_000 and c.tallies.sum() == 20_000


def test_mc_tallies_sum_and_determinism(backend):
    g = random_digraph(200, 1500, 3)
    a = triad_census_mc(g, 30_000, seed=5, block=7000)
    b = triad_census_mc(g, 30_000, seed=5, block=7000)
    assert a.tallies.sum() == 30_000 and np.array_equal(a.tallies, b.tallies)
    assert a.counts.sum() == pytest.approx(math.comb(200, 3))


def test_mc_backends_draw_identical_tallies():
    from refnet import _accel

    g = random_digraph(150, 1200, 4)
    out = []
    for b in ("numba", "numpy"):
        with _accel.backend_context(b):
            out.append(triad_census_mc(g, 50_000, seed=2).tallies)
    assert np.array_equal(out[0], out[1])


def test_mc_within_four_se_of_exact():
    g = random_digraph(120, 2000, 6, mutual=0.5)
    exact = triad_census_exact(g).counts
    mc = triad_census_mc(g, 200_000, seed=11)
    se = np.maximum(mc.se, 1.0)
    assert np.all(np.abs(mc.counts - exact) <= 4 * se)


def test_mc_guards():
    with pytest.raises(ValueError):
        triad_census_mc(graph_from(3, []), 100)
    with pytest.raises(ValueError):
        triad_census_mc(graph_from(2, []), 10 ** 4)


def test_dyad_census():
    g = graph_from(4, [(0, 1), (1, 0), (1, 2)])
    assert motifs.dyad_census(g) == (4, 1, 1)
    assert sum(motifs.dyad_census(random_digraph(30, 100, 1))) == math.comb(30, 2)


def test_dispatch_picks_exact_for_small_graphs():
    g = random_digraph(20, 40, 0)
    assert motifs.triad_census(g).exact
    assert not motifs.triad_census(g, n_samples=10 ** 4).exact
