"""Lattice geometry: node ordering, templates, neighborhoods and scenes.

Nodes are addressed 1-based as ``(i, j)`` with row ``i = 1`` at the top.
Offsets are ``(row, col)`` displacements; the strict past half-plane holds
offsets with ``row < 0`` or ``row == 0 and col < 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np


class Offset(NamedTuple):
    row: int
    col: int

    def in_past(self) -> bool:
        return self.row < 0 or (self.row == 0 and self.col < 0)

    def __neg__(self) -> "Offset":
        return Offset(-self.row, -self.col)


class LatticeDims(NamedTuple):
    m: int
    n: int


def _check_dims(dims: LatticeDims) -> None:
    if dims.m < 1 or dims.n < 1:
        raise ValueError(f"lattice dimensions must be positive, got {dims}")


def _check_node(v, dims: LatticeDims) -> None:
    i, j = v
    if not (1 <= i <= dims.m and 1 <= j <= dims.n):
        raise ValueError(f"node {tuple(v)} outside {dims.m}x{dims.n} lattice")


def _check_template(tau: Iterable[Offset]) -> None:
    for t in tau:
        if not Offset(*t).in_past():
            raise ValueError(f"template offset {tuple(t)} is not in the past half-plane")


def as_offsets(items: Iterable) -> frozenset[Offset]:
    return frozenset(Offset(int(r), int(c)) for r, c in items)


def lex_key(v, dims: LatticeDims) -> int:
    """Raster-order key ``n*i + j``; ``u`` precedes ``v`` iff its key is smaller."""
    _check_node(v, dims)
    return dims.n * v[0] + v[1]


def translate(lam: Iterable, v) -> set[tuple[int, int]]:
    return {(r + v[0], c + v[1]) for r, c in lam}


def sequential_neighborhood(tau: Iterable, v, dims: LatticeDims) -> set[tuple[int, int]]:
    tau = list(tau)
    _check_template(tau)
    return {
        (i, j) for i, j in translate(tau, v) if 1 <= i <= dims.m and 1 <= j <= dims.n
    }


def reverse_dependents(tau: Iterable, v, dims: LatticeDims) -> set[tuple[int, int]]:
    """All nodes ``u`` whose sequential neighborhood contains ``v``."""
    neg = [(-r, -c) for r, c in tau]
    return {(i, j) for i, j in translate(neg, v) if 1 <= i <= dims.m and 1 <= j <= dims.n}


def disk_template(radius: float) -> frozenset[Offset]:
    """Past half-plane offsets with Euclidean norm strictly below ``radius``."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    k = math.ceil(radius)
    out = set()
    for r in range(-k, 1):
        for c in range(-k, k + 1):
            t = Offset(r, c)
            if t.in_past() and r * r + c * c < radius * radius:
                out.add(t)
    return frozenset(out)


def sorted_offsets(tau: Iterable) -> list[Offset]:
    return sorted(Offset(*t) for t in tau)


@dataclass
class Scene:
    """A binary lattice with an observation mask.

    ``values`` holds a bit for every cell, including unobserved cells whose
    bit is the current fill-in.
    """

    values: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.int8)
        self.observed = np.ascontiguousarray(self.observed, dtype=bool)
        if self.values.ndim != 2 or self.values.shape != self.observed.shape:
            raise ValueError("values and observed must be 2-d arrays of equal shape")
        if np.any((self.values != 0) & (self.values != 1)):
            raise ValueError("scene values must be 0 or 1")

    @classmethod
    def full(cls, values) -> "Scene":
        values = np.asarray(values)
        return cls(values, np.ones(values.shape, dtype=bool))

    @classmethod
    def unobserved(cls, dims: LatticeDims) -> "Scene":
        return cls(np.zeros(dims, dtype=np.int8), np.zeros(dims, dtype=bool))

    @property
    def dims(self) -> LatticeDims:
        return LatticeDims(*self.values.shape)

    def copy(self) -> "Scene":
        return Scene(self.values.copy(), self.observed.copy())

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return np.array_equal(self.values, other.values) and np.array_equal(
            self.observed, other.observed
        )

    def value(self, v) -> int:
        """Bit at 1-based node ``v``; cells off the lattice read as 0."""
        i, j = v
        m, n = self.values.shape
        if 1 <= i <= m and 1 <= j <= n:
            return int(self.values[i - 1, j - 1])
        return 0


def active_interaction(scene: Scene, tau: Iterable, v) -> frozenset[Offset]:
    """Offsets of ``tau`` whose translated node is inside the lattice and on."""
    return frozenset(Offset(*t) for t in tau if scene.value((v[0] + t[0], v[1] + t[1])) == 1)


def extend_scene(scene: Scene, margin: int) -> Scene:
    if margin < 0:
        raise ValueError("margin must be non-negative")
    if margin == 0:
        return scene.copy()
    values = np.pad(scene.values, margin, constant_values=0)
    observed = np.pad(scene.observed, margin, constant_values=False)
    return Scene(values, observed)


def crop_scene(scene: Scene, margin: int) -> Scene:
    if margin == 0:
        return scene.copy()
    return Scene(
        scene.values[margin:-margin, margin:-margin].copy(),
        scene.observed[margin:-margin, margin:-margin].copy(),
    )


# -- MMM-SCENE v1 text format ------------------------------------------------

SCENE_MAGIC = "MMM-SCENE v1"


def format_scene(scene: Scene) -> str:
    m, n = scene.dims
    lines = [f"{SCENE_MAGIC} {m} {n}"]
    for i in range(m):
        row = []
        for j in range(n):
            if not scene.observed[i, j]:
                row.append("?")
            else:
                row.append("1" if scene.values[i, j] else "0")
        lines.append("".join(row))
    return "\n".join(lines) + "\n"


def parse_scene(text: str) -> Scene:
    lines = [ln.rstrip("\r") for ln in text.splitlines()]
    if not lines:
        raise ValueError("empty scene file")
    head = lines[0].split()
    if len(head) != 4 or " ".join(head[:2]) != SCENE_MAGIC:
        raise ValueError(f"bad scene header: {lines[0]!r}")
    m, n = int(head[2]), int(head[3])
    _check_dims(LatticeDims(m, n))
    body = lines[1 : 1 + m]
    if len(body) != m:
        raise ValueError(f"expected {m} rows, found {len(body)}")
    values = np.zeros((m, n), dtype=np.int8)
    observed = np.zeros((m, n), dtype=bool)
    for i, row in enumerate(body):
        if len(row) != n:
            raise ValueError(f"row {i + 1} has {len(row)} cells, expected {n}")
        for j, ch in enumerate(row):
            if ch == "?":
                continue
            if ch not in "01":
                raise ValueError(f"invalid cell {ch!r} at row {i + 1}, col {j + 1}")
            observed[i, j] = True
            values[i, j] = ch == "1"
    return Scene(values, observed)


def read_scene(path) -> Scene:
    return parse_scene(Path(path).read_text())


def write_scene(scene: Scene, path) -> None:
    Path(path).write_text(format_scene(scene))
