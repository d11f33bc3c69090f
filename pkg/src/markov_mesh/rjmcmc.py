"""Reversible-jump MCMC over template, active interactions, parameters and fill-in."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import _kernels
from .ars import LineLogDensity, ars_sample
from .lattice import Offset, Scene, sorted_offsets
from .model import Patterns, kernel_model, pattern_counts, pattern_log_likelihood
from .pbf import EMPTY, PBF, Interaction, InteractionSet, addable, interaction_key, removable
from .prior import (
    PriorConfig,
    log_prior_interactions,
    log_prior_template,
    log_prior_theta,
    log_theta_density,
)

MIN_PROPOSAL_VARIANCE = 1e-12
MOVE_KINDS = ("param", "add", "remove", "null")


class InvariantError(AssertionError):
    pass


class ChainAborted(RuntimeError):
    """Raised when a move fails; carries the last valid state."""

    def __init__(self, message, state, iteration):
        super().__init__(message)
        self.state = state
        self.iteration = iteration


@dataclass(frozen=True)
class RunConfig:
    prior: PriorConfig
    nu: float = 0.5
    r_ars: int = 10
    iterations: int = 1000
    burnin: int = 0
    stride: int = 1
    prob_param_move: float = 0.55
    seed: int = 0
    check_invariants: bool = False

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("nu must be non-negative")
        if self.r_ars < 2:
            raise ValueError("r_ars must be at least 2 to fit a variance")
        if self.iterations < 0 or self.burnin < 0 or self.stride < 1:
            raise ValueError("iterations/burnin must be >= 0 and stride >= 1")
        if self.burnin > self.iterations:
            raise ValueError("burnin must not exceed iterations")
        if not 0.0 <= self.prob_param_move <= 1.0:
            raise ValueError("prob_param_move must be in [0, 1]")


@dataclass
class ModelState:
    """One chain state; the scene's unobserved cells hold the current fill-in."""

    pbf: PBF
    scene: Scene

    def log_posterior(self, cfg: PriorConfig) -> float:
        return log_posterior(self.pbf, self.scene, cfg)


def log_posterior(pbf: PBF, scene: Scene, cfg: PriorConfig, pats: Patterns | None = None) -> float:
    """Unnormalized log posterior of model and fill-in given the observed cells."""
    if pats is None:
        pats = pattern_counts(scene.values, sorted_offsets(pbf.template))
    loglik = pattern_log_likelihood(pbf.evaluate_masks(pats.masks, pats.offsets), pats)
    return _log_prior(pbf, cfg) + loglik


def _log_prior(pbf: PBF, cfg: PriorConfig) -> float:
    lams = pbf.support
    return (
        log_prior_template(lams.template, cfg)
        + log_prior_interactions(lams, cfg)
        + log_prior_theta([pbf.theta[lam] for lam in lams], cfg)
    )


def check_state(state: ModelState, tau0, observed_values=None) -> None:
    lams = state.pbf.support
    if EMPTY not in lams:
        raise InvariantError("empty interaction inactive")
    singles = {next(iter(lam)) for lam in lams if len(lam) == 1}
    if singles != set(lams.template):
        raise InvariantError("template is not minimal")
    if not lams.template <= frozenset(tau0):
        raise InvariantError("template escapes tau0")
    if observed_values is not None:
        obs = state.scene.observed
        if not np.array_equal(state.scene.values[obs], observed_values):
            raise InvariantError("observed cells changed")


# -- parameter update ------------------------------------------------------------


def gibbs_parameter_update(
    state: ModelState, cfg: RunConfig | PriorConfig, rng, pats: Patterns | None = None, delta=None
) -> ModelState:
    """Gibbs step along a random Gaussian direction; always accepted."""
    prior = cfg.prior if isinstance(cfg, RunConfig) else cfg
    pbf = state.pbf
    lams = list(pbf.support)
    if delta is None:
        direction = rng.standard_normal(len(lams))
    else:
        direction = np.array([float(delta[lam]) for lam in lams])
    if not np.any(direction):
        return state
    if pats is None:
        pats = pattern_counts(state.scene.values, sorted_offsets(pbf.template))
    theta = np.array([pbf.theta[lam] for lam in lams])
    dpbf = PBF(pbf.support, dict(zip(lams, direction)))
    density = LineLogDensity.build(
        theta,
        direction,
        prior.sigma,
        pbf.evaluate_masks(pats.masks, pats.offsets),
        dpbf.evaluate_masks(pats.masks, pats.offsets),
        pats.count,
        pats.ones,
    )
    alpha = ars_sample(density, seed=rng)
    new_theta = dict(zip(lams, theta + alpha * direction))
    return ModelState(PBF(pbf.support, new_theta), state.scene)


# -- remove / add transforms ---------------------------------------------------------


def removal_weights(pbf: PBF, nu: float) -> dict:
    """Selection probabilities over removable interactions (empty if none)."""
    cands = removable(pbf.support)
    if not cands:
        return {}
    beta = pbf.beta
    d = np.array([beta[lam] ** 2 / 2 ** len(lam) for lam in cands])
    logits = -nu * d
    w = np.exp(logits - logits.max())
    w /= w.sum()
    return dict(zip(cands, w))


def project_remove(pbf: PBF, lam_star: Interaction) -> tuple[PBF, float]:
    """Least-squares projection of the function onto the support without ``lam_star``.

    Returns the projected function and the discarded coefficient.
    """
    lam_star = frozenset(Offset(*t) for t in lam_star)
    if lam_star not in removable(pbf.support):
        raise ValueError(f"interaction {sorted(lam_star)} is not removable")
    beta = pbf.beta
    b_star = beta[lam_star]
    k = len(lam_star)
    new_beta = {}
    for lam, b in beta.items():
        if lam == lam_star:
            continue
        if lam < lam_star:
            b = b - (-0.5) ** (k - len(lam)) * b_star
        new_beta[lam] = b
    support = pbf.support.with_removed(lam_star)
    return PBF.from_beta(support, new_beta), b_star


def add_interaction(pbf: PBF, lam_star: Interaction, value: float) -> PBF:
    """Inverse of :func:`project_remove` with discarded coefficient ``value``."""
    lam_star = frozenset(Offset(*t) for t in lam_star)
    if lam_star in pbf.support:
        raise ValueError("interaction already active")
    support = pbf.support.with_added(lam_star)
    k = len(lam_star)
    new_beta = {}
    for lam, b in pbf.beta.items():
        if lam < lam_star:
            b = b + (-0.5) ** (k - len(lam)) * value
        new_beta[lam] = b
    new_beta[lam_star] = float(value)
    return PBF.from_beta(support, new_beta)


def add_direction(lam_star: Interaction, lam: Iterable) -> float:
    """Change of the function value at ``lam`` per unit of the added coefficient."""
    k = len(lam_star)
    j = len(lam_star & frozenset(lam))
    return (-1) ** (k + j) / 2**k


def moebius_matrix(lams: InteractionSet) -> np.ndarray:
    """Matrix mapping function values to coefficients, canonical order."""
    order = list(lams)
    index = {lam: k for k, lam in enumerate(order)}
    a = np.zeros((len(order), len(order)))
    for lam in order:
        for sub in order:
            if sub <= lam:
                a[index[lam], index[sub]] = (-1) ** (len(lam) - len(sub))
    return a


def transform_matrix(lams: InteractionSet, lam_star: Interaction) -> np.ndarray:
    """Linear map from current values to (projected values, discarded coefficient)."""
    order = list(lams)
    size = len(order)
    a = np.zeros((size, size))
    for col, lam in enumerate(order):
        basis = PBF(lams, {other: float(other == lam) for other in order})
        projected, discarded = project_remove(basis, lam_star)
        a[: size - 1, col] = projected.theta_vector()
        a[size - 1, col] = discarded
    return a


# -- add-move proposal ---------------------------------------------------------------


def add_move_density(pbf: PBF, lam_star: Interaction, pats: Patterns, sigma: float) -> LineLogDensity:
    """Log full conditional of the coefficient of a newly added interaction."""
    lams = list(pbf.support) + [lam_star]
    theta = np.array([pbf.theta[lam] for lam in pbf.support] + [pbf.evaluate(lam_star)])
    direction = np.array([add_direction(lam_star, lam) for lam in lams])
    index = {Offset(*t): b for b, t in enumerate(pats.offsets)}
    star_mask = 0
    for t in lam_star:
        star_mask |= 1 << index[t]
    k = len(lam_star)
    overlap = np.array([bin(int(m) & star_mask).count("1") for m in pats.masks], dtype=np.int64)
    data_c = np.where((k + overlap) % 2 == 0, 1.0, -1.0) / 2**k
    data_b = pbf.evaluate_masks(pats.masks, pats.offsets)
    return LineLogDensity.build(theta, direction, sigma, data_b, data_c, pats.count, pats.ones)


def fit_add_proposal(density: LineLogDensity, r: int, rng) -> tuple[float, float]:
    """Mean and variance of ``r`` exact draws from ``density``."""
    draws = ars_sample(density, seed=rng, size=r)
    mean = float(np.mean(draws))
    var = float(np.var(draws, ddof=1))
    return mean, max(var, MIN_PROPOSAL_VARIANCE)


def _log_normal(x, mean, var):
    return -0.5 * math.log(2.0 * math.pi * var) - 0.5 * (x - mean) ** 2 / var


def _add_choice_log_prob(pbf: PBF, lam_star: Interaction, tau0) -> float:
    """Log probability that an add move from ``pbf`` proposes ``lam_star``."""
    first, higher = addable(pbf.support, tau0)
    pool = first if len(lam_star) == 1 else higher
    both = bool(first) and bool(higher)
    return (math.log(0.5) if both else 0.0) - math.log(len(pool))


@dataclass
class MoveResult:
    state: ModelState
    kind: str
    accepted: bool
    log_posterior: float | None = None


def structure_update(
    state: ModelState, cfg: RunConfig, rng, pats: Patterns | None = None
) -> MoveResult:
    """Propose adding or removing one interaction and accept by Metropolis-Hastings."""
    prior = cfg.prior
    pbf = state.pbf
    scene = state.scene
    tau_offsets = sorted_offsets(pbf.template)
    if pats is None or pats.offsets != tau_offsets:
        pats = pattern_counts(scene.values, tau_offsets)

    if rng.random() < 0.5:
        weights = removal_weights(pbf, cfg.nu)
        if not weights:
            return MoveResult(state, "null", True)
        cands = list(weights)
        probs = np.array([weights[lam] for lam in cands])
        pick = min(int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum())), len(cands) - 1)
        lam_star = cands[pick]
        small, discarded = project_remove(pbf, lam_star)
        lp_big = log_posterior(pbf, scene, prior, pats)
        lp_small = log_posterior(small, scene, prior, pats)
        mean, var = fit_add_proposal(add_move_density(small, lam_star, pats, prior.sigma), cfg.r_ars, rng)
        log_ratio = (
            lp_small
            - lp_big
            + _add_choice_log_prob(small, lam_star, prior.tau0)
            + _log_normal(discarded, mean, var)
            - math.log(weights[lam_star])
        )
        if math.log(rng.random()) < log_ratio:
            return MoveResult(ModelState(small, scene), "remove", True, lp_small)
        return MoveResult(state, "remove", False, lp_big)

    first, higher = addable(pbf.support, prior.tau0)
    if not first and not higher:
        return MoveResult(state, "null", True)
    if first and higher:
        pool = first if rng.random() < 0.5 else higher
    else:
        pool = first or higher
    choice = pool[int(rng.integers(len(pool)))]
    lam_star = frozenset([choice]) if isinstance(choice, Offset) else choice
    if len(lam_star) == 1:
        big_offsets = sorted_offsets(pbf.template | lam_star)
        big_pats = pattern_counts(scene.values, big_offsets)
    else:
        big_pats = pats
    mean, var = fit_add_proposal(add_move_density(pbf, lam_star, big_pats, prior.sigma), cfg.r_ars, rng)
    value = mean + math.sqrt(var) * rng.standard_normal()
    big = add_interaction(pbf, lam_star, value)
    lp_small = log_posterior(pbf, scene, prior, big_pats)
    lp_big = log_posterior(big, scene, prior, big_pats)
    weights = removal_weights(big, cfg.nu)
    log_ratio = (
        lp_big
        - lp_small
        + math.log(weights[lam_star])
        - _add_choice_log_prob(pbf, lam_star, prior.tau0)
        - _log_normal(value, mean, var)
    )
    if math.log(rng.random()) < log_ratio:
        return MoveResult(ModelState(big, scene), "add", True, lp_big)
    return MoveResult(state, "add", False, lp_small)


# -- fill-in sweep ------------------------------------------------------------------


def single_site_sweep(state: ModelState, rng) -> ModelState:
    """|unobserved| Gibbs updates at uniformly chosen unobserved cells (in place)."""
    scene = state.scene
    cells = np.flatnonzero(~scene.observed.reshape(-1))
    if cells.size == 0:
        return state
    picks = cells[rng.integers(0, cells.size, size=cells.size)]
    uniforms = rng.random(cells.size)
    n = scene.dims.n
    km = kernel_model(state.pbf)
    _kernels.gibbs_sweep(
        scene.values, picks // n, picks % n, uniforms, km.off_r, km.off_c, km.table, km.lam_masks, km.beta
    )
    return state


# -- trace ------------------------------------------------------------------------


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    tau: tuple
    interactions: tuple
    theta: tuple
    log_posterior: float
    move: str
    accepted: bool

    @classmethod
    def from_state(cls, it, pbf: PBF, logp, move, accepted):
        lams = tuple(pbf.support)
        return cls(
            it,
            tuple(sorted_offsets(pbf.template)),
            lams,
            tuple(pbf.theta[lam] for lam in lams),
            float(logp),
            move,
            bool(accepted),
        )

    def pbf(self) -> PBF:
        return PBF(InteractionSet(self.interactions), dict(zip(self.interactions, self.theta)))

    def model_key(self) -> tuple:
        return tuple(tuple(sorted(lam)) for lam in self.interactions)

    def to_json(self) -> str:
        return json.dumps(
            {
                "it": self.iteration,
                "tau": [list(t) for t in self.tau],
                "lambda": [[list(t) for t in sorted(lam)] for lam in self.interactions],
                "theta": list(self.theta),
                "logp": self.log_posterior,
                "move": self.move,
                "acc": self.accepted,
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "TraceRecord":
        d = json.loads(line)
        lams = [frozenset(Offset(*t) for t in lam) for lam in d["lambda"]]
        order = sorted(range(len(lams)), key=lambda k: interaction_key(lams[k]))
        if d["move"] not in MOVE_KINDS:
            raise ValueError(f"unknown move kind {d['move']!r}")
        return cls(
            int(d["it"]),
            tuple(sorted(Offset(*t) for t in d["tau"])),
            tuple(lams[k] for k in order),
            tuple(float(d["theta"][k]) for k in order),
            float(d["logp"]),
            d["move"],
            bool(d["acc"]),
        )


@dataclass
class ChainTrace:
    records: list = field(default_factory=list)
    final_scene: Scene | None = None

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, k):
        return self.records[k]

    def append(self, rec: TraceRecord):
        if self.records and rec.iteration <= self.records[-1].iteration:
            raise ValueError("trace iterations must increase")
        self.records.append(rec)

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(rec.to_json() + "\n")

    @classmethod
    def read_jsonl(cls, path) -> "ChainTrace":
        trace = cls()
        with open(path) as fh:
            for line in fh:
                if line.strip():
                    trace.append(TraceRecord.from_json(line))
        return trace


# -- chain ----------------------------------------------------------------------------


def initial_state(scene: Scene, cfg: RunConfig, rng) -> ModelState:
    """Empty template, constant function drawn from its prior, fill-in zero."""
    fill = scene.copy()
    fill.values[~fill.observed] = 0
    sigma = cfg.prior.sigma
    density = LineLogDensity.build([0.0], [1.0], sigma, [], [], [], [])
    theta0 = ars_sample(density, seed=rng)
    return ModelState(PBF.constant(theta0), fill)


def run_chain(
    scene: Scene,
    cfg: RunConfig,
    sink: Callable[[TraceRecord], None] | None = None,
    progress: Callable[[TraceRecord], None] | None = None,
    progress_every: int = 1000,
) -> ChainTrace:
    """Run ``cfg.iterations`` iterations; record the state after each one.

    Each iteration is a fill-in sweep followed by either a parameter update
    (probability ``prob_param_move``) or a structure update.
    """
    rng = np.random.default_rng(cfg.seed)
    prior = cfg.prior
    state = initial_state(scene, cfg, rng)
    observed_values = scene.values[scene.observed].copy()
    trace = ChainTrace()

    def emit(rec):
        trace.append(rec)
        if sink is not None:
            sink(rec)
        if progress is not None and rec.iteration % progress_every == 0:
            progress(rec)

    emit(TraceRecord.from_state(0, state.pbf, state.log_posterior(prior), "null", True))
    for it in range(1, cfg.iterations + 1):
        try:
            single_site_sweep(state, rng)
            pats = pattern_counts(state.scene.values, sorted_offsets(state.pbf.template))
            if rng.random() < cfg.prob_param_move:
                state = gibbs_parameter_update(state, cfg, rng, pats)
                result = MoveResult(state, "param", True)
            else:
                result = structure_update(state, cfg, rng, pats)
                state = result.state
            logp = result.log_posterior
            if logp is None:
                logp = log_posterior(state.pbf, state.scene, prior, pats)
            if cfg.check_invariants:
                check_state(state, prior.tau0, observed_values)
        except Exception as exc:
            raise ChainAborted(f"iteration {it}: {exc}", state, it) from exc
        emit(TraceRecord.from_state(it, state.pbf, logp, result.kind, result.accepted))
    trace.final_scene = state.scene
    return trace
