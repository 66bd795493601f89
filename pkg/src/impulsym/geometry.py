"""Axis-aligned domains and the origin-anchored uniform grid.

Grid points are integer multiples of a single quantization step ``eta`` in
every coordinate. A :class:`GridDomain` is a finite union of boxes; its grid
is the set of lattice points falling inside at least one box. Distances are
measured in the infinity norm throughout.

Points are handled as integer coordinate vectors (``k`` with ``x = k * eta``).
Enumeration order is lexicographic in those coordinates and defines the dense
position of each point used by the transition tables.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainTooLarge, OutOfDomain

#: Relative slack (in units of eta) applied to membership and rounding tests.
SLACK = 1e-9

DEFAULT_MAX_POINTS = 10**8


@dataclass(frozen=True)
class Box:
    """Closed hyper-rectangle ``prod_i [lower_i, upper_i]``."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or not lo:
            raise ValueError("lower and upper must be non-empty and of equal length")
        if any(not (a < b) for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate box: lower={lo} upper={hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def min_side(self) -> float:
        return min(b - a for a, b in zip(self.lower, self.upper))

    def contains(self, x, slack: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return np.all((x >= lo - slack) & (x <= hi + slack), axis=-1)


@dataclass(frozen=True)
class GridDomain:
    """Union of boxes together with the quantization step ``eta``.

    ``eta`` must not exceed the smallest side length over all boxes, which
    guarantees every box contains at least one grid point.
    """

    boxes: tuple[Box, ...]
    eta: float
    max_points: int = field(default=DEFAULT_MAX_POINTS, compare=False)

    def __post_init__(self):
        boxes = self.boxes
        if isinstance(boxes, Box):
            boxes = (boxes,)
        boxes = tuple(boxes)
        if not boxes:
            raise ValueError("a grid domain needs at least one box")
        dims = {b.dim for b in boxes}
        if len(dims) != 1:
            raise ValueError("all boxes must share one dimension")
        eta = float(self.eta)
        if not eta > 0:
            raise ValueError("eta must be positive")
        eta_tilde = min(b.min_side for b in boxes)
        if eta > eta_tilde * (1 + SLACK):
            raise ValueError(f"eta={eta} exceeds the admissible bound {eta_tilde}")
        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "eta", eta)

    @classmethod
    def interval(cls, lower: float, upper: float, eta: float, **kw) -> "GridDomain":
        return cls((Box((lower,), (upper,)),), eta, **kw)

    @property
    def dim(self) -> int:
        return self.boxes[0].dim

    @property
    def eta_tilde(self) -> float:
        return min(b.min_side for b in self.boxes)

    def contains(self, x, slack: float = 0.0) -> np.ndarray:
        """Whether real point(s) ``x`` lie in some box, up to ``slack``."""
        inside = np.zeros(np.shape(x)[:-1], dtype=bool)
        for b in self.boxes:
            inside |= b.contains(x, slack)
        return inside

    # -- enumeration -----------------------------------------------------

    def _box_ranges(self, box: Box):
        lo = np.ceil(np.asarray(box.lower) / self.eta - SLACK).astype(np.int64)
        hi = np.floor(np.asarray(box.upper) / self.eta + SLACK).astype(np.int64)
        return lo, hi

    def count_upper_bound(self) -> int:
        """Sum of per-box point counts (exact for disjoint boxes)."""
        total = 0
        for b in self.boxes:
            lo, hi = self._box_ranges(b)
            total += int(np.prod(np.maximum(hi - lo + 1, 0)))
        return total

    @cached_property
    def points(self) -> np.ndarray:
        """All grid points as integer coordinates, lexicographically sorted."""
        if self.count_upper_bound() > self.max_points:
            raise DomainTooLarge(
                f"grid would hold up to {self.count_upper_bound()} points "
                f"(cap {self.max_points})"
            )
        chunks = []
        for b in self.boxes:
            lo, hi = self._box_ranges(b)
            axes = [np.arange(a, z + 1, dtype=np.int64) for a, z in zip(lo, hi)]
            mesh = np.meshgrid(*axes, indexing="ij")
            chunks.append(np.stack([m.ravel() for m in mesh], axis=1))
        pts = np.concatenate(chunks, axis=0)
        if len(self.boxes) > 1:
            pts = np.unique(pts, axis=0)
        pts.setflags(write=False)
        return pts

    @cached_property
    def _index(self):
        pts = self.points
        kmin = pts.min(axis=0)
        shape = pts.max(axis=0) - kmin + 1
        keys = np.ravel_multi_index(tuple((pts - kmin).T), tuple(shape))
        keys = np.ascontiguousarray(keys, dtype=np.int64)
        # lexicographic order of coordinates == row-major key order
        assert np.all(np.diff(keys) > 0)
        return kmin.astype(np.int64), shape.astype(np.int64), keys

    @property
    def n_points(self) -> int:
        return len(self.points)

    def lookup(self, coords) -> np.ndarray:
        """Dense positions of integer coordinates; ``-1`` where not a domain point."""
        coords = np.atleast_2d(np.asarray(coords, dtype=np.int64))
        kmin, shape, keys = self._index
        rel = coords - kmin
        ok = np.all((rel >= 0) & (rel < shape), axis=1)
        out = np.full(len(coords), -1, dtype=np.int64)
        if ok.any():
            k = np.ravel_multi_index(tuple(rel[ok].T), tuple(shape))
            pos = np.searchsorted(keys, k)
            pos = np.minimum(pos, len(keys) - 1)
            hit = keys[pos] == k
            sub = np.where(hit, pos, -1)
            out[ok] = sub
        return out

    def decode(self, coords) -> np.ndarray:
        return np.asarray(coords, dtype=np.int64) * self.eta

    def encode_positions(self, positions) -> np.ndarray:
        return self.points[np.asarray(positions, dtype=np.int64)]


def quantize(x, domain: GridDomain) -> np.ndarray:
    """Nearest grid point of ``x`` in the infinity norm.

    Each coordinate is rounded to the nearest multiple of ``eta``; exact
    half-way ties go toward +inf. A relative slack of :data:`SLACK` is
    applied so decimal inputs such as ``25.005`` with ``eta = 0.01`` round
    as their decimal value suggests.

    Accepts a single point ``(n,)`` or a batch ``(N, n)`` and returns integer
    coordinates of the same leading shape.

    Raises:
        OutOfDomain: if ``x`` is farther than ``eta/2`` from every box, or
            the rounded point is not a grid point of the domain.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    if xb.shape[-1] != domain.dim:
        raise ValueError(f"expected dimension {domain.dim}, got {xb.shape[-1]}")
    eta = domain.eta
    near = domain.contains(xb, slack=eta / 2 * (1 + SLACK))
    if not np.all(near):
        bad = xb[~near][0]
        raise OutOfDomain(f"{bad} is outside the domain")
    k = np.floor(xb / eta + 0.5 + SLACK).astype(np.int64)
    if np.any(domain.lookup(k) < 0):
        bad = xb[domain.lookup(k) < 0][0]
        raise OutOfDomain(f"{bad} rounds to a lattice point outside the domain")
    return k[0] if single else k


def decode(coords, domain: GridDomain) -> np.ndarray:
    """Real coordinates of integer grid coordinates."""
    return domain.decode(coords)


def ball_points(center, radius: float, domain: GridDomain) -> np.ndarray:
    """Grid points within infinity-norm distance ``radius`` of ``center``.

    Returns an ``(k, n)`` integer array in lexicographic order, possibly empty.
    """
    if radius < 0:
        raise ValueError("radius must be non-negative")
    center = np.asarray(center, dtype=float).reshape(-1)
    eta = domain.eta
    lo = np.ceil((center - radius) / eta - SLACK).astype(np.int64)
    hi = np.floor((center + radius) / eta + SLACK).astype(np.int64)
    if np.any(hi < lo):
        return np.empty((0, domain.dim), dtype=np.int64)
    axes = [range(a, z + 1) for a, z in zip(lo, hi)]
    cand = np.array(list(itertools.product(*axes)), dtype=np.int64).reshape(-1, domain.dim)
    return cand[domain.lookup(cand) >= 0]


def enumerate_points(domain: GridDomain) -> np.ndarray:
    """All grid points of ``domain`` in lexicographic order.

    Raises:
        DomainTooLarge: if the point count exceeds ``domain.max_points``.
    """
    return domain.points
