import itertools

import numpy as np
import pytest

from markov_mesh.lattice import Offset, disk_template, sorted_offsets
from markov_mesh.pbf import EMPTY, PBF, InteractionSet, addable


def random_dense(rng, tau, max_size=None, p_add=0.6):
    """Grow a random dense set over ``tau`` one addable interaction at a time."""
    tau = sorted_offsets(tau)
    lams = InteractionSet([EMPTY])
    steps = int(rng.integers(0, 4 * len(tau) + 2))
    for _ in range(steps):
        first, higher = addable(lams, tau)
        pool = list(first) + list(higher)
        if not pool or (max_size is not None and len(lams) >= max_size):
            break
        pick = pool[int(rng.integers(len(pool)))]
        lam = frozenset([pick]) if isinstance(pick, Offset) else pick
        lams = lams.with_added(lam)
        if rng.random() > p_add:
            break
    return lams


def random_pbf(rng, tau, scale=2.0, max_size=None):
    lams = random_dense(rng, tau, max_size=max_size)
    return PBF(lams, {lam: float(rng.uniform(-scale, scale)) for lam in lams})


def all_scenes(m, n):
    for bits in itertools.product((0, 1), repeat=m * n):
        yield np.array(bits, dtype=np.int8).reshape(m, n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tau_small():
    return disk_template(2)
