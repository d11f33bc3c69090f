"""Prior over template, active interactions and parameter values."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np
from scipy import integrate

from .lattice import Offset, disk_template
from .model import softplus
from .pbf import InteractionSet, interaction_key


@dataclass(frozen=True)
class PriorConfig:
    tau0: frozenset
    p_star: float = 0.9
    sigma: float = 100.0

    def __post_init__(self):
        tau0 = frozenset(Offset(*t) for t in self.tau0)
        if not all(t.in_past() for t in tau0):
            raise ValueError("tau0 must lie in the past half-plane")
        if not 0.0 < self.p_star < 1.0:
            raise ValueError("p_star must be in (0, 1)")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "tau0", tau0)

    @classmethod
    def from_radius(cls, radius: float = 5.0, p_star: float = 0.9, sigma: float = 100.0):
        return cls(disk_template(radius), p_star, sigma)


def log_prior_template(tau: Iterable, cfg: PriorConfig) -> float:
    """Uniform on the size |tau| in 0..|tau0|, then uniform on subsets of that size."""
    tau = frozenset(Offset(*t) for t in tau)
    if not tau <= cfg.tau0:
        raise ValueError("template is not a subset of tau0")
    n0 = len(cfg.tau0)
    return -math.log(n0 + 1) - math.log(math.comb(n0, len(tau)))


def log_prior_interactions(lams: InteractionSet, cfg: PriorConfig) -> float:
    tau = lams.template
    members = lams.interactions
    total = 0.0
    prev = lams.level(1)
    for k in range(2, len(tau) + 1):
        if not prev:
            break
        # candidates of order k: one-offset extensions with every (k-1)-subset active
        pi_k = set()
        prev_set = set(prev)
        for lam in prev:
            for t in tau:
                if t in lam:
                    continue
                cand = lam | {t}
                if cand not in pi_k and all(cand - {s} in prev_set for s in cand):
                    pi_k.add(cand)
        level = [lam for lam in members if len(lam) == k]
        if not set(level) <= pi_k:
            raise ValueError(f"order-{k} interactions are not all admissible")
        if pi_k:
            if len(pi_k) <= len(prev):
                p = cfg.p_star
            else:
                p = cfg.p_star * len(prev) / len(pi_k)
            total += len(level) * math.log(p) + (len(pi_k) - len(level)) * math.log1p(-p)
        prev = level
    return total


def _theta_prior_kernel(t, sigma):
    """Unnormalized prior density e^t/(1+e^t)^2 * exp(-t^2/2sigma^2)."""
    return np.exp(t - 2.0 * softplus(t) - t * t / (2.0 * sigma * sigma))


@lru_cache(maxsize=64)
def log_c(sigma: float) -> float:
    """Log normalizing constant of the per-parameter prior (non-negative)."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    # the logistic factor decays like e^{-|t|}; beyond |t|=60 the mass is < 1e-25
    pieces = [(-60.0, -10.0), (-10.0, 0.0), (0.0, 10.0), (10.0, 60.0)]
    mass = 0.0
    for a, b in pieces:
        val, _ = integrate.quad(
            _theta_prior_kernel, a, b, args=(float(sigma),), epsabs=1e-15, epsrel=1e-13, limit=200
        )
        mass += val
    return -math.log(mass)


def log_theta_density(t, sigma: float):
    """Normalized per-parameter log prior density."""
    t = np.asarray(t, dtype=float)
    return log_c(float(sigma)) + t - 2.0 * softplus(t) - t * t / (2.0 * sigma * sigma)


def log_prior_theta(theta: Mapping | Iterable[float], cfg: PriorConfig | float) -> float:
    sigma = cfg.sigma if isinstance(cfg, PriorConfig) else float(cfg)
    if isinstance(theta, Mapping):
        values = [theta[lam] for lam in sorted(theta, key=interaction_key)]
    else:
        values = list(theta)
    if not values:
        return 0.0
    return float(np.sum(log_theta_density(np.array(values), sigma)))


def log_prior(lams: InteractionSet, theta: Mapping, cfg: PriorConfig) -> float:
    return (
        log_prior_template(lams.template, cfg)
        + log_prior_interactions(lams, cfg)
        + log_prior_theta([theta[lam] for lam in lams], cfg)
    )
