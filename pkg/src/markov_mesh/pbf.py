"""Pseudo-Boolean functions represented on dense interaction sets.

An interaction is a ``frozenset`` of :class:`Offset`.  Collections of
interactions are always iterated in canonical order (cardinality first,
then the sorted offset tuples) so that runs are reproducible.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .lattice import Offset, sorted_offsets

Interaction = frozenset
EMPTY: Interaction = frozenset()


def interaction(*offsets) -> Interaction:
    return frozenset(Offset(*t) for t in offsets)


def interaction_key(lam: Interaction) -> tuple:
    return (len(lam), tuple(sorted(lam)))


def canonical(lams: Iterable[Interaction]) -> list[Interaction]:
    return sorted(lams, key=interaction_key)


def is_dense(lams: Iterable[Interaction]) -> bool:
    """True iff the set contains the empty interaction and is subset-closed.

    Checking the immediate (k-1)-subsets suffices by induction.
    """
    lams = set(lams)
    if EMPTY not in lams:
        return False
    for lam in lams:
        for t in lam:
            if lam - {t} not in lams:
                return False
    return True


class InteractionSet:
    """A dense set of active interactions together with its minimal template."""

    __slots__ = ("interactions", "template", "_sorted")

    def __init__(self, interactions: Iterable[Iterable]):
        lams = frozenset(frozenset(Offset(*t) for t in lam) for lam in interactions)
        if not is_dense(lams):
            raise ValueError("interaction set is not dense (or lacks the empty interaction)")
        template = frozenset().union(*lams)
        if not all(t.in_past() for t in template):
            raise ValueError("interaction offsets must lie in the past half-plane")
        self.interactions = lams
        self.template = template
        self._sorted = tuple(canonical(lams))

    @classmethod
    def power_set(cls, template: Iterable) -> "InteractionSet":
        offs = sorted_offsets(template)
        lams = []
        for mask in range(1 << len(offs)):
            lams.append(frozenset(o for b, o in enumerate(offs) if mask >> b & 1))
        return cls(lams)

    def __iter__(self):
        return iter(self._sorted)

    def __len__(self):
        return len(self._sorted)

    def __contains__(self, lam):
        return lam in self.interactions

    def __eq__(self, other):
        if not isinstance(other, InteractionSet):
            return NotImplemented
        return self.interactions == other.interactions

    def __hash__(self):
        return hash(self.interactions)

    def __repr__(self):
        body = ", ".join(_label(lam) for lam in self._sorted)
        return f"InteractionSet([{body}])"

    @property
    def ordered(self) -> tuple[Interaction, ...]:
        return self._sorted

    def level(self, k: int) -> list[Interaction]:
        return [lam for lam in self._sorted if len(lam) == k]

    @property
    def max_order(self) -> int:
        return len(self._sorted[-1])

    def with_added(self, lam: Interaction) -> "InteractionSet":
        return InteractionSet(self.interactions | {lam})

    def with_removed(self, lam: Interaction) -> "InteractionSet":
        return InteractionSet(self.interactions - {lam})


def removable(lams: InteractionSet) -> list[Interaction]:
    """Non-empty members whose removal keeps the set dense, canonical order."""
    covered = set()
    for lam in lams:
        for t in lam:
            covered.add(lam - {t})
    return [lam for lam in lams if lam and lam not in covered]


def addable(lams: InteractionSet, tau0: Iterable) -> tuple[list[Offset], list[Interaction]]:
    """Candidates for the add move.

    Returns ``(first_order, higher_order)``: offsets of ``tau0`` outside the
    current template, and interactions of order >= 2 whose every immediate
    subset is active.  Higher-order candidates are generated by extending
    active members with one template offset.
    """
    tau = lams.template
    first = sorted_offsets(set(Offset(*t) for t in tau0) - tau)
    members = lams.interactions
    higher = set()
    for lam in lams:
        if not lam:
            continue
        for t in tau:
            if t in lam:
                continue
            cand = lam | {t}
            if cand in members or cand in higher:
                continue
            if all(cand - {s} in members for s in cand):
                higher.add(cand)
    return first, canonical(higher)


def beta_from_theta(lams: InteractionSet, theta: Mapping[Interaction, float]) -> dict:
    """Interaction parameters from function values by triangular Moebius solve."""
    if not isinstance(lams, InteractionSet) and not is_dense(lams):
        raise ValueError("beta_from_theta needs a dense interaction set")
    beta: dict = {}
    for lam in canonical(lams):
        acc = theta[lam]
        for sub in beta:
            if len(sub) < len(lam) and sub < lam:
                acc -= beta[sub]
        beta[lam] = acc
    return beta


def theta_from_beta(lams: Iterable[Interaction], beta: Mapping[Interaction, float]) -> dict:
    lams = canonical(lams)
    return {lam: sum(beta[s] for s in lams if s <= lam) for lam in lams}


def _label(lam: Interaction) -> str:
    return "{" + ",".join(f"({r},{c})" for r, c in sorted(lam)) + "}"


@dataclass(frozen=True)
class PBF:
    """Function values ``theta`` on a dense support; ``beta`` is derived."""

    support: InteractionSet
    theta: Mapping[Interaction, float] = field(hash=False)

    def __post_init__(self):
        theta = {frozenset(Offset(*t) for t in k): float(v) for k, v in self.theta.items()}
        if set(theta) != set(self.support.interactions):
            raise ValueError("theta must be keyed exactly by the support interactions")
        object.__setattr__(self, "theta", theta)

    @classmethod
    def from_beta(cls, support: InteractionSet, beta: Mapping) -> "PBF":
        return cls(support, theta_from_beta(support, beta))

    @classmethod
    def constant(cls, value: float) -> "PBF":
        return cls(InteractionSet([EMPTY]), {EMPTY: value})

    @property
    def template(self) -> frozenset:
        return self.support.template

    @cached_property
    def beta(self) -> dict:
        return beta_from_theta(self.support, self.theta)

    def theta_vector(self) -> np.ndarray:
        return np.array([self.theta[lam] for lam in self.support])

    def evaluate(self, lam: Iterable) -> float:
        lam = frozenset(Offset(*t) for t in lam)
        if lam in self.theta:
            return self.theta[lam]
        return sum(b for s, b in self.beta.items() if s <= lam)

    def masks(self, offsets: list) -> tuple[np.ndarray, np.ndarray]:
        """Support as bitmasks over ``offsets`` (bit ``b`` = ``offsets[b]``) and beta values."""
        index = {Offset(*t): b for b, t in enumerate(offsets)}
        lam_masks = np.zeros(len(self.support), dtype=np.int64)
        beta = np.zeros(len(self.support))
        for k, lam in enumerate(self.support):
            mk = 0
            for t in lam:
                mk |= 1 << index[t]
            lam_masks[k] = mk
            beta[k] = self.beta[lam]
        return lam_masks, beta

    def evaluate_masks(self, masks: np.ndarray, offsets: list) -> np.ndarray:
        """Vectorized evaluation at interactions given as bitmasks over ``offsets``."""
        lam_masks, beta = self.masks(offsets)
        masks = np.asarray(masks, dtype=np.int64)
        hit = (masks[None, :] & lam_masks[:, None]) == lam_masks[:, None]
        return beta @ hit


def to_dot(lams: InteractionSet, name: str = "interactions") -> str:
    """DAG with an edge from each active interaction to its one-offset extensions."""
    ids = {lam: f"n{k}" for k, lam in enumerate(lams)}
    lines = [f"digraph {name} {{"]
    for lam, node in ids.items():
        label = _label(lam) if lam else "{}"
        lines.append(f'  {node} [label="{label}"];')
    for lam, node in ids.items():
        for t in lam:
            parent = lam - {t}
            lines.append(f"  {ids[parent]} -> {node};")
    lines.append("}")
    return "\n".join(lines) + "\n"


# -- model file (JSON) ---------------------------------------------------------


def pbf_to_dict(pbf: PBF) -> dict:
    return {
        "template": [list(t) for t in sorted_offsets(pbf.template)],
        "interactions": [[list(t) for t in sorted(lam)] for lam in pbf.support],
        "theta": [pbf.theta[lam] for lam in pbf.support],
    }


def pbf_from_dict(data: dict) -> PBF:
    lams = [frozenset(Offset(*t) for t in lam) for lam in data["interactions"]]
    theta = data["theta"]
    if len(lams) != len(theta):
        raise ValueError("interactions and theta have different lengths")
    if len(set(lams)) != len(lams):
        raise ValueError("duplicate interactions in model file")
    support = InteractionSet(lams)
    if "template" in data:
        declared = frozenset(Offset(*t) for t in data["template"])
        if declared != support.template:
            raise ValueError("declared template is not minimal for the interactions")
    return PBF(support, dict(zip(lams, map(float, theta))))


def write_model(pbf: PBF, path) -> None:
    Path(path).write_text(json.dumps(pbf_to_dict(pbf), indent=2) + "\n")


def read_model(path) -> PBF:
    return pbf_from_dict(json.loads(Path(path).read_text()))
