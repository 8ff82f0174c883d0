"""Overlapping group families on lattices.

A :class:`GroupStructure` holds the groups ``G`` of variables and their
per-member weights ``d^G_j``. Indices are 0-based in memory; the text
format used on disk is 1-based.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

AXIS = "axis"
DIAGONAL = "diagonal"


class Group(NamedTuple):
    members: tuple[int, ...]
    weights: tuple[float, ...]


class Violation(NamedTuple):
    kind: str  # "coverage" | "positivity" | "empty" | "index" | "dimension"
    message: str


@dataclass(frozen=True)
class GridSpec:
    """Lattice geometry with row-major variable layout.

    ``dims`` holds 1 to 3 positive extents. ``orientations`` is a subset of
    ``{"axis", "diagonal"}``.
    """

    dims: tuple[int, ...]
    orientations: frozenset = field(default=frozenset({AXIS}))

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "orientations", frozenset(self.orientations))
        if not 1 <= len(dims) <= 3:
            raise ValueError(f"grid must have 1, 2 or 3 dimensions, got {len(dims)}")
        if any(d < 1 for d in dims):
            raise ValueError(f"grid extents must be positive, got {dims}")
        if not self.orientations:
            raise ValueError("orientation set must be nonempty")
        unknown = self.orientations - {AXIS, DIAGONAL}
        if unknown:
            raise ValueError(f"unknown orientations {sorted(unknown)}")

    @property
    def p(self) -> int:
        return int(np.prod(self.dims))

    def coordinates(self) -> np.ndarray:
        """Lattice coordinates, shape (p, ndim), in variable-index order."""
        return np.array(list(np.ndindex(*self.dims)), dtype=np.int64).reshape(self.p, len(self.dims))

    def directions(self) -> list[tuple[int, ...]]:
        ndim = len(self.dims)
        out = []
        if AXIS in self.orientations:
            for a in range(ndim):
                for s in (1, -1):
                    u = [0] * ndim
                    u[a] = s
                    out.append(tuple(u))
        if DIAGONAL in self.orientations and ndim >= 2:
            for a, b in itertools.combinations(range(ndim), 2):
                for sa, sb in ((1, 1), (-1, -1), (1, -1), (-1, 1)):
                    u = [0] * ndim
                    u[a], u[b] = sa, sb
                    out.append(tuple(u))
        return out


class GroupStructure:
    """Family of possibly overlapping groups over ``p`` variables.

    The constructor does not enforce the invariants so that malformed
    families can still be reported by :func:`validate`; call
    :meth:`check` (the solver does) to raise on violations.
    """

    def __init__(self, p: int, groups: Sequence[Group]):
        self.p = int(p)
        self.groups = tuple(
            Group(tuple(int(j) for j in g.members), tuple(float(w) for w in g.weights))
            for g in groups
        )
        self._weights = None

    def __len__(self):
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups)

    def __eq__(self, other):
        if not isinstance(other, GroupStructure):
            return NotImplemented
        return self.p == other.p and self.groups == other.groups

    def __repr__(self):
        return f"GroupStructure(p={self.p}, n_groups={len(self.groups)})"

    @classmethod
    def from_sets(cls, p: int, sets, weight: float = 1.0) -> "GroupStructure":
        groups = []
        for s in sets:
            members = tuple(sorted(int(j) for j in s))
            groups.append(Group(members, (weight,) * len(members)))
        return cls(p, groups)

    def member_sets(self) -> list[frozenset]:
        return [frozenset(g.members) for g in self.groups]

    @property
    def weight_matrix(self) -> np.ndarray:
        """Dense ``(n_groups, p)`` matrix with entry ``d^G_j`` (0 off-group)."""
        if self._weights is None:
            D = np.zeros((len(self.groups), self.p))
            for i, g in enumerate(self.groups):
                D[i, list(g.members)] = g.weights
            D.setflags(write=False)
            self._weights = D
        return self._weights

    def check(self):
        v = validate(self, self.p)
        if v is not None:
            raise ValueError(f"invalid group structure ({v.kind}): {v.message}")
        return self


def validate(gs: GroupStructure, p: int) -> Violation | None:
    """Return the first violated invariant of ``gs`` for ``p`` variables, or None."""
    if gs.p != p:
        return Violation("dimension", f"structure has p={gs.p}, expected {p}")
    covered = set()
    for i, g in enumerate(gs.groups):
        if not g.members:
            return Violation("empty", f"group {i + 1} is empty")
        if len(g.weights) != len(g.members):
            return Violation("positivity", f"group {i + 1} has {len(g.weights)} weights for {len(g.members)} members")
        for j, w in zip(g.members, g.weights):
            if not 0 <= j < p:
                return Violation("index", f"group {i + 1} references variable {j + 1} outside 1..{p}")
            if not (w > 0 and np.isfinite(w)):
                return Violation("positivity", f"group {i + 1} has weight {w!r} on variable {j + 1}")
        covered.update(g.members)
    missing = sorted(set(range(p)) - covered)
    if missing:
        shown = ", ".join(str(j + 1) for j in missing[:10])
        return Violation("coverage", f"variables not covered by any group: {shown}")
    return None


def make_singletons(p: int) -> GroupStructure:
    """One unit-weight group per variable; the induced norm is plain l1."""
    if p < 1:
        raise ValueError(f"invalid dimension p={p}")
    return GroupStructure(p, [Group((j,), (1.0,)) for j in range(p)])


def make_halfspace_groups(grid: GridSpec) -> GroupStructure:
    """All nontrivial discrete half-spaces ``{x : <u, x> >= c}`` of the grid.

    Every direction ``u`` of the grid's orientation families contributes
    one group per threshold that yields a nonempty proper subset. Since
    ``-u`` is always present, each group's complement is emitted too.
    Identical member sets are kept once (first occurrence wins).
    """
    X = grid.coordinates()
    seen = set()
    groups = []
    for u in grid.directions():
        s = X @ np.asarray(u)
        for c in range(int(s.min()) + 1, int(s.max()) + 1):
            members = tuple(np.flatnonzero(s >= c).tolist())
            if members in seen:
                continue
            seen.add(members)
            groups.append(Group(members, (1.0,) * len(members)))
    if not groups:
        # single-cell grid: no proper half-space exists
        return make_singletons(grid.p)
    return GroupStructure(grid.p, groups)


def format_groups(gs: GroupStructure) -> str:
    lines = [f"# p={gs.p} groups={len(gs)}"]
    for i, g in enumerate(gs.groups, start=1):
        body = " ".join(f"{j + 1}:{w!r}" for j, w in zip(g.members, g.weights))
        lines.append(f"G{i}: {body}")
    return "\n".join(lines) + "\n"


def parse_groups(text: str, p: int | None = None) -> GroupStructure:
    """Parse the ``G<id>: j:w j:w ...`` format (1-based indices).

    ``p`` defaults to the header comment ``# p=<int>`` when present, else
    to the largest index referenced.
    """
    groups = []
    header_p = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if tok.startswith("p="):
                    header_p = int(tok[2:])
            continue
        label, sep, body = line.partition(":")
        if not sep or not label.startswith("G"):
            raise ValueError(f"line {lineno}: expected 'G<id>: j:w ...', got {raw!r}")
        members, weights = [], []
        for tok in body.split():
            j, sep, w = tok.partition(":")
            if not sep:
                raise ValueError(f"line {lineno}: malformed entry {tok!r}")
            try:
                members.append(int(j) - 1)
                weights.append(float(w))
            except ValueError:
                raise ValueError(f"line {lineno}: malformed entry {tok!r}") from None
        order = np.argsort(members, kind="stable")
        groups.append(Group(tuple(members[i] for i in order), tuple(weights[i] for i in order)))
    if p is None:
        p = header_p if header_p is not None else 1 + max((max(g.members) for g in groups if g.members), default=-1)
    return GroupStructure(p, groups)


def read_groups(path, p: int | None = None) -> GroupStructure:
    with open(path) as fh:
        return parse_groups(fh.read(), p)
