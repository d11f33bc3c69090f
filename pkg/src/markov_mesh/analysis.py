"""Posterior summaries computed from chain traces."""
from __future__ import annotations

import csv
from collections import Counter
from typing import Iterable, Sequence

import numpy as np

from .lattice import LatticeDims, Offset, Scene, sorted_offsets
from .model import Mmm, simulate
from .pbf import interaction_key


class EmptySampleError(ValueError):
    pass


def _post_burnin(trace: Iterable, burnin: int) -> list:
    recs = [r for r in trace if r.iteration >= burnin]
    if not recs:
        raise EmptySampleError(f"no trace records at or after burn-in {burnin}")
    return recs


def subsample(trace: Iterable, burnin: int, stride: int) -> list:
    """Every ``stride``-th record starting at position ``burnin``.

    Positions index the given sequence; for a complete chain trace, where
    record ``k`` holds iteration ``k``, this is the same as selecting by
    iteration number.  Counting positions makes repeated subsampling compose.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if burnin < 0:
        raise ValueError("burnin must be >= 0")
    return list(trace)[burnin::stride]


def neighbor_marginals(trace: Iterable, burnin: int, tau0: Iterable) -> dict:
    recs = _post_burnin(trace, burnin)
    counts = Counter()
    for r in recs:
        counts.update(r.tau)
    return {t: counts[t] / len(recs) for t in sorted_offsets(tau0)}


def interaction_marginals(trace: Iterable, burnin: int) -> list[tuple]:
    """Inclusion frequency of every interaction seen, most probable first."""
    recs = _post_burnin(trace, burnin)
    counts = Counter()
    for r in recs:
        counts.update(r.interactions)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], interaction_key(kv[0])))
    return [(lam, c / len(recs)) for lam, c in ranked]


def theta_histogram(trace: Iterable, burnin: int, lam) -> list[float]:
    """Function value at ``lam`` for every post-burn-in record, active or not."""
    lam = frozenset(Offset(*t) for t in lam)
    return [r.pbf().evaluate(lam) for r in trace if r.iteration >= burnin]


def model_frequencies(trace: Iterable, burnin: int = 0) -> Counter:
    return Counter(r.model_key() for r in trace if r.iteration >= burnin)


def model_clusters(models, max_clusters: int | None = None) -> list[tuple]:
    """Group observed models into clusters connected by single-interaction changes.

    ``models`` maps (or lists pairs of) model key -> count; a model key is a
    tuple of interactions.  Each cluster is seeded at the most frequent
    unassigned model and grown through observed neighbors only.  Returns
    ``(members, mass, seed)`` triples.
    """
    counts = dict(models.items() if hasattr(models, "items") else models)
    if not counts:
        return []
    total = sum(counts.values())
    keys = {k: frozenset(k) for k in counts}
    by_set = {v: k for k, v in keys.items()}
    # models one interaction smaller -> models containing them
    larger: dict = {}
    for k, s in keys.items():
        for lam in s:
            larger.setdefault(s - {lam}, []).append(k)

    def neighbors(k):
        s = keys[k]
        for lam in s:
            other = by_set.get(s - {lam})
            if other is not None:
                yield other
        yield from larger.get(s, ())

    order = sorted(counts, key=lambda k: (-counts[k], _model_sort_key(k)))
    assigned: set = set()
    clusters = []
    for seed in order:
        if seed in assigned:
            continue
        if max_clusters is not None and len(clusters) >= max_clusters:
            break
        members = {seed}
        stack = [seed]
        while stack:
            k = stack.pop()
            for nb in neighbors(k):
                if nb not in members and nb not in assigned:
                    members.add(nb)
                    stack.append(nb)
        assigned |= members
        mass = sum(counts[k] for k in members) / total
        clusters.append((members, mass, seed))
    return clusters


def _model_sort_key(key) -> tuple:
    return tuple(sorted((len(lam), tuple(sorted(lam))) for lam in key))


def block_code(tl: int, tr: int, bl: int, br: int) -> int:
    return (tl << 3) | (tr << 2) | (bl << 1) | br


def block_fractions(scene: Scene) -> np.ndarray:
    """Fraction of fully observed 2x2 blocks in each of the 16 configurations."""
    v = scene.values.astype(np.int64)
    o = scene.observed
    m, n = v.shape
    if m < 2 or n < 2:
        raise ValueError("block statistics need at least a 2x2 lattice")
    codes = (v[:-1, :-1] << 3) | (v[:-1, 1:] << 2) | (v[1:, :-1] << 1) | v[1:, 1:]
    full = o[:-1, :-1] & o[:-1, 1:] & o[1:, :-1] & o[1:, 1:]
    codes = codes[full]
    if codes.size == 0:
        raise ValueError("no fully observed 2x2 block")
    return np.bincount(codes, minlength=16) / codes.size


def posterior_block_densities(
    trace: Sequence, burnin: int, dims: LatticeDims, n_realizations: int, seed
) -> np.ndarray:
    """Block fractions of scenes simulated from randomly chosen post-burn-in models.

    Returns an array of shape ``(16, n_realizations)``.
    """
    recs = _post_burnin(trace, burnin)
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(recs), size=n_realizations)
    sim_seeds = rng.integers(0, 2**63 - 1, size=n_realizations)
    out = np.empty((16, n_realizations))
    for k, (idx, s) in enumerate(zip(picks, sim_seeds)):
        scene = simulate(Mmm(recs[idx].pbf()), dims, int(s))
        out[:, k] = block_fractions(scene)
    return out


# -- CSV export -----------------------------------------------------------------


def _interaction_text(lam) -> str:
    return ";".join(f"{r},{c}" for r, c in sorted(lam)) or "empty"


def write_neighbor_csv(probs: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["offset_row", "offset_col", "probability"])
        for t, p in probs.items():
            w.writerow([t[0], t[1], repr(float(p))])


def write_interaction_csv(ranked: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "interaction", "probability"])
        for k, (lam, p) in enumerate(ranked, 1):
            w.writerow([k, _interaction_text(lam), repr(float(p))])


def write_cluster_csv(clusters: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cluster_id", "mass", "n_models", "seed_model"])
        for k, (members, mass, seed) in enumerate(clusters, 1):
            seed_text = " ".join("{" + _interaction_text(lam) + "}" for lam in seed)
            w.writerow([k, repr(float(mass)), len(members), seed_text])


def write_block_csv(samples: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["config_code", "sample_value"])
        for code in range(samples.shape[0]):
            for x in samples[code]:
                w.writerow([code, repr(float(x))])


def write_scalar_csv(trace: Iterable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "n_interactions", "n_neighbors", "log_posterior", "move", "accepted"])
        for r in trace:
            w.writerow(
                [r.iteration, len(r.interactions), len(r.tau), repr(r.log_posterior), r.move, int(r.accepted)]
            )
