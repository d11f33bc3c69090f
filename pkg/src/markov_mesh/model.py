"""Homogeneous binary Markov mesh model."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .lattice import LatticeDims, Scene, active_interaction, sorted_offsets
from .pbf import PBF


def softplus(t):
    """``log(1 + exp(t))`` without overflow."""
    t = np.asarray(t, dtype=float)
    return np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))


def logistic(t):
    t = np.asarray(t, dtype=float)
    e = np.exp(-np.abs(t))
    return np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


class KernelModel(NamedTuple):
    """A PBF laid out for the compiled kernels."""

    offsets: list
    off_r: np.ndarray
    off_c: np.ndarray
    table: np.ndarray
    lam_masks: np.ndarray
    beta: np.ndarray


def kernel_model(pbf: PBF, offsets=None) -> KernelModel:
    offsets = sorted_offsets(pbf.template) if offsets is None else list(offsets)
    lam_masks, beta = pbf.masks(offsets)
    off_r = np.array([t[0] for t in offsets], dtype=np.int64)
    off_c = np.array([t[1] for t in offsets], dtype=np.int64)
    if len(offsets) <= _kernels.TABLE_MAX_BITS:
        table = _kernels.theta_table(lam_masks, beta, len(offsets))
    else:
        table = np.zeros(0)
    return KernelModel(offsets, off_r, off_c, table, lam_masks, beta)


class Patterns(NamedTuple):
    """Distinct neighbor configurations of a scene.

    ``masks[k]`` is a bitmask over ``offsets``; ``count[k]`` nodes show it and
    ``ones[k]`` of those are on.
    """

    offsets: list
    masks: np.ndarray
    count: np.ndarray
    ones: np.ndarray


def pattern_counts(values: np.ndarray, offsets) -> Patterns:
    offsets = list(offsets)
    off_r = np.array([t[0] for t in offsets], dtype=np.int64)
    off_c = np.array([t[1] for t in offsets], dtype=np.int64)
    masks = _kernels.node_masks(np.ascontiguousarray(values, dtype=np.int8), off_r, off_c)
    x = values.reshape(-1).astype(np.int64)
    nbits = len(offsets)
    if nbits <= _kernels.TABLE_MAX_BITS:
        count = np.bincount(masks, minlength=1 << nbits)
        ones = np.bincount(masks, weights=x, minlength=1 << nbits)
        keep = np.flatnonzero(count)
        return Patterns(offsets, keep.astype(np.int64), count[keep].astype(float), ones[keep])
    uniq, inv, count = np.unique(masks, return_inverse=True, return_counts=True)
    ones = np.bincount(inv, weights=x, minlength=uniq.size)
    return Patterns(offsets, uniq, count.astype(float), ones)


def pattern_log_likelihood(theta_at: np.ndarray, pats: Patterns) -> float:
    return float(np.sum(pats.ones * theta_at - pats.count * softplus(theta_at)))


@dataclass(frozen=True)
class Mmm:
    pbf: PBF

    def __post_init__(self):
        if not all(t.in_past() for t in self.pbf.template):
            raise ValueError("template must lie in the past half-plane")

    @property
    def template(self):
        return self.pbf.template


def conditional_prob(model: Mmm, scene: Scene, v) -> float:
    """P(x_v = 1 | predecessors)."""
    lam = active_interaction(scene, model.template, v)
    return float(logistic(model.pbf.evaluate(lam)))


def log_likelihood(model: Mmm, scene: Scene) -> float:
    pats = pattern_counts(scene.values, sorted_offsets(model.template))
    return pattern_log_likelihood(model.pbf.evaluate_masks(pats.masks, pats.offsets), pats)


def flip_log_ratio(model: Mmm, scene: Scene, v) -> float:
    """log f(x with x_v=1) - log f(x with x_v=0), using only affected factors."""
    km = kernel_model(model.pbf)
    i, j = v
    m, n = scene.dims
    if not (1 <= i <= m and 1 <= j <= n):
        raise ValueError(f"node {v} outside lattice")
    return float(
        _kernels.flip_log_ratio(
            scene.values, i - 1, j - 1, km.off_r, km.off_c, km.table, km.lam_masks, km.beta
        )
    )


def simulate(model: Mmm, dims: LatticeDims, seed) -> Scene:
    """Ancestral draw in raster order; fully observed result."""
    m, n = dims
    rng = np.random.default_rng(seed)
    uniforms = rng.random(m * n)
    km = kernel_model(model.pbf)
    values = np.zeros((m, n), dtype=np.int8)
    _kernels.simulate_raster(values, uniforms, km.off_r, km.off_c, km.table, km.lam_masks, km.beta)
    return Scene.full(values)
