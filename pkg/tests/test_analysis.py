import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_pbf
from markov_mesh.analysis import (
    EmptySampleError,
    block_code,
    block_fractions,
    interaction_marginals,
    model_clusters,
    model_frequencies,
    neighbor_marginals,
    posterior_block_densities,
    subsample,
    theta_histogram,
    write_block_csv,
    write_cluster_csv,
    write_interaction_csv,
    write_neighbor_csv,
    write_scalar_csv,
)
from markov_mesh.lattice import LatticeDims, Offset, Scene, disk_template
from markov_mesh.pbf import EMPTY, PBF, InteractionSet, interaction
from markov_mesh.rjmcmc import TraceRecord

a, b = Offset(0, -1), Offset(-1, 0)
A, B, AB = interaction(a), interaction(b), interaction(a, b)
TAU0 = disk_template(2)


def rec(it, pbf, logp=0.0):
    return TraceRecord.from_state(it, pbf, logp, "param", True)


def const(t):
    return PBF.constant(t)


def with_a(t0=0.0, t1=1.0):
    return PBF(InteractionSet([EMPTY, A]), {EMPTY: t0, A: t1})


def full_pair():
    return PBF(InteractionSet.power_set([a, b]), {EMPTY: 0.0, A: 1.0, B: 2.0, AB: 3.0})


def four_records():
    return [rec(0, with_a()), rec(1, with_a()), rec(2, full_pair()), rec(3, const(0.5))]


class TestMarginals:
    def test_constant_indicator(self):
        probs = neighbor_marginals([rec(i, with_a()) for i in range(5)], 0, TAU0)
        assert probs[a] == 1.0 and probs[b] == 0.0

    def test_offset_outside_tau0(self):
        probs = neighbor_marginals(four_records(), 0, TAU0)
        assert probs.get(Offset(-3, 0), 0.0) == 0.0

    def test_counting(self):
        assert neighbor_marginals(four_records(), 0, TAU0)[a] == 0.75

    def test_interactions(self):
        ranked = interaction_marginals(four_records(), 0)
        probs = dict(ranked)
        assert probs[EMPTY] == 1.0 and probs[AB] == 0.25
        assert ranked[0][0] == EMPTY
        assert [p for _, p in ranked] == sorted((p for _, p in ranked), reverse=True)
        assert ranked == interaction_marginals(four_records(), 0)

    def test_tie_break_canonical(self):
        ranked = interaction_marginals([rec(0, full_pair())], 0)
        assert [l for l, _ in ranked] == [EMPTY, A, B, AB] or [l for l, _ in ranked] == [EMPTY, B, A, AB]
        assert [l for l, _ in ranked][1:3] == sorted([A, B], key=lambda l: sorted(l))

    def test_neighbor_equals_singleton(self, rng):
        records = [rec(i, random_pbf(rng, TAU0)) for i in range(60)]
        nm = neighbor_marginals(records, 10, TAU0)
        im = dict(interaction_marginals(records, 10))
        for t, p in nm.items():
            assert p == im.get(frozenset([t]), 0.0)

    def test_empty_after_burnin(self):
        with pytest.raises(EmptySampleError):
            neighbor_marginals(four_records(), 10, TAU0)
        with pytest.raises(EmptySampleError):
            interaction_marginals(four_records(), 10)


class TestThetaHistogram:
    def test_empty_interaction(self):
        records = [rec(i, const(float(i))) for i in range(4)]
        assert theta_histogram(records, 0, EMPTY) == [0.0, 1.0, 2.0, 3.0]

    def test_non_member_constant(self):
        assert theta_histogram([rec(0, const(0.7))], 0, AB) == [0.7]

    def test_matches_direct_sum(self, rng):
        records = [rec(i, random_pbf(rng, TAU0)) for i in range(20)]
        lam = frozenset(TAU0)
        hist = theta_histogram(records, 0, lam)
        for r, v in zip(records, hist):
            f = r.pbf()
            assert v == pytest.approx(sum(f.beta[s] for s in f.support if s <= lam), abs=1e-12)


class TestClusters:
    def test_singleton(self):
        key = rec(0, with_a()).model_key()
        [(members, mass, seed)] = model_clusters({key: 7})
        assert members == {key} and mass == 1.0 and seed == key

    def test_adjacent_pair(self):
        k1, k2 = rec(0, with_a()).model_key(), rec(0, const(0)).model_key()
        clusters = model_clusters({k1: 3, k2: 1})
        assert len(clusters) == 1 and clusters[0][1] == 1.0 and clusters[0][2] == k1

    def test_gap_splits(self):
        k1 = rec(0, const(0)).model_key()
        k2 = rec(0, PBF(InteractionSet([EMPTY, A, B]), {EMPTY: 0, A: 0, B: 0})).model_key()
        clusters = model_clusters({k1: 3, k2: 1})
        assert len(clusters) == 2
        assert [c[1] for c in clusters] == [0.75, 0.25]

    def test_empty(self):
        assert model_clusters({}) == []

    def test_max_clusters(self):
        k1 = rec(0, const(0)).model_key()
        k2 = rec(0, PBF(InteractionSet([EMPTY, A, B]), {EMPTY: 0, A: 0, B: 0})).model_key()
        assert len(model_clusters({k1: 3, k2: 1}, max_clusters=1)) == 1

    def test_partition(self, rng):
        records = [rec(i, random_pbf(rng, TAU0)) for i in range(200)]
        freq = model_frequencies(records)
        clusters = model_clusters(freq)
        assert sum(c[1] for c in clusters) == pytest.approx(1.0)
        members = [m for c in clusters for m in c[0]]
        assert len(members) == len(set(members)) == len(freq)


class TestBlocks:
    def test_all_zero_and_one(self):
        z = block_fractions(Scene.full(np.zeros((5, 5))))
        assert z[0] == 1.0 and z[1:].sum() == 0
        o = block_fractions(Scene.full(np.ones((5, 5))))
        assert o[15] == 1.0

    def test_checkerboard(self):
        f = block_fractions(Scene.full(np.array([[1, 0], [0, 1]])))
        assert block_code(1, 0, 0, 1) == 9 and f[9] == 1.0

    def test_only_observed_blocks(self):
        s = Scene(np.ones((3, 3)), np.array([[1, 1, 0], [1, 1, 0], [0, 0, 0]], bool))
        assert block_fractions(s)[15] == 1.0
        with pytest.raises(ValueError):
            block_fractions(Scene(np.ones((3, 3)), np.eye(3, dtype=bool)))
        with pytest.raises(ValueError):
            block_fractions(Scene.full(np.ones((1, 4))))

    @settings(max_examples=50)
    @given(st.integers(2, 7), st.integers(2, 7), st.integers(0, 2**32 - 1))
    def test_sum_and_transpose(self, m, n, seed):
        x = np.random.default_rng(seed).integers(0, 2, (m, n))
        f = block_fractions(Scene.full(x))
        assert f.sum() == pytest.approx(1.0, abs=1e-12)
        ft = block_fractions(Scene.full(x.T))
        # transposition swaps the top-right and bottom-left bits
        perm = [((c & 0b1001) | ((c & 0b0100) >> 1) | ((c & 0b0010) << 1)) for c in range(16)]
        np.testing.assert_allclose(ft[perm], f, atol=1e-15)

    def test_posterior_densities(self):
        samples = posterior_block_densities([rec(0, const(-50.0))], 0, LatticeDims(10, 10), 5, seed=1)
        assert samples.shape == (16, 5)
        assert np.all(samples[0] == 1.0)

    def test_iid_code_zero(self):
        samples = posterior_block_densities([rec(0, const(0.0))], 0, LatticeDims(200, 200), 3, seed=2)
        assert abs(samples[0].mean() - 1 / 16) < 0.01


class TestSubsample:
    def test_identity(self):
        records = four_records()
        assert subsample(records, 0, 1) == records

    def test_small_schedule(self):
        records = [rec(i, const(0.0)) for i in range(101)]
        assert [r.iteration for r in subsample(records, 50, 50)] == [50, 100]

    @given(st.integers(1, 6), st.integers(1, 6))
    def test_composition(self, s1, s2):
        records = [rec(i, const(0.0)) for i in range(80)]
        twice = subsample(subsample(records, 0, s1), 0, s2)
        assert [r.iteration for r in twice] == [r.iteration for r in subsample(records, 0, s1 * s2)]

    def test_bad_stride(self):
        with pytest.raises(ValueError):
            subsample([], 0, 0)


def test_csv_writers(tmp_path, rng):
    records = [rec(i, random_pbf(rng, TAU0), -float(i)) for i in range(30)]
    write_neighbor_csv(neighbor_marginals(records, 0, TAU0), tmp_path / "n.csv")
    write_interaction_csv(interaction_marginals(records, 0), tmp_path / "i.csv")
    write_cluster_csv(model_clusters(model_frequencies(records)), tmp_path / "c.csv")
    write_block_csv(np.zeros((16, 2)), tmp_path / "b.csv")
    write_scalar_csv(records, tmp_path / "s.csv")
    heads = {p.name: p.read_text().splitlines()[0] for p in tmp_path.iterdir()}
    assert heads == {
        "n.csv": "offset_row,offset_col,probability",
        "i.csv": "rank,interaction,probability",
        "c.csv": "cluster_id,mass,n_models,seed_model",
        "b.csv": "config_code,sample_value",
        "s.csv": "iteration,n_interactions,n_neighbors,log_posterior,move,accepted",
    }
    assert len((tmp_path / "b.csv").read_text().splitlines()) == 33
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 31
