"""Finite symbolic model over grid points x mode counter.

A state ``(q, l)`` pairs a grid point with the number of sampling periods
since the last impulse. Under input ``u``:

* flow (``l <= p2 - 1``): successors are grid points within ``eta`` of the
  integrated nominal point, with mode ``l + 1``;
* jump (``p1 <= l <= p2``): successors are grid points within ``eta`` of
  ``g(q, u)``, with mode ``0``.

Both scenarios are offered together when ``p1 <= l <= p2 - 1``; the
environment picks one. The point-level successor sets do not depend on
``l`` and are stored once per (grid point, input).

Successors outside the domain are dropped. The ``escape`` flag of a
(point, input, scenario) remembers that the ball reached outside, so that
synthesis never trusts such a transition.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .dynamics import ImpulsiveSystem, flow_map, jump_map
from .geometry import SLACK, GridDomain


class AbstractState(NamedTuple):
    grid: tuple[int, ...]
    mode: int


class ConcreteState(NamedTuple):
    x: np.ndarray
    mode: int


@dataclass(frozen=True)
class Successors:
    """CSR successor runs, one row per (grid point, input): row ``i * m + j``."""

    offsets: np.ndarray
    succ: np.ndarray
    escape: np.ndarray
    nominal: np.ndarray

    def row(self, r: int) -> np.ndarray:
        return self.succ[self.offsets[r]:self.offsets[r + 1]]

    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def as_tuple(self):
        return self.offsets, self.succ, self.escape


@dataclass(frozen=True)
class SymbolicModel:
    system: ImpulsiveSystem
    domain: GridDomain
    flow: Successors
    jump: Successors

    @property
    def eta(self) -> float:
        return self.domain.eta

    @property
    def tau(self) -> float:
        return self.system.tau

    @property
    def p1(self) -> int:
        return self.system.p1

    @property
    def p2(self) -> int:
        return self.system.p2

    @property
    def points(self) -> np.ndarray:
        return self.domain.points

    @property
    def n_points(self) -> int:
        return self.domain.n_points

    @property
    def n_modes(self) -> int:
        return self.system.p2 + 1

    @property
    def n_states(self) -> int:
        return self.n_points * self.n_modes

    @property
    def inputs(self) -> np.ndarray:
        return self.system.inputs

    @property
    def n_inputs(self) -> int:
        return self.system.n_inputs

    def flow_enabled(self, mode: int) -> bool:
        return 0 <= mode <= self.p2 - 1

    def jump_enabled(self, mode: int) -> bool:
        return self.p1 <= mode <= self.p2

    def position(self, grid) -> int:
        pos = int(self.domain.lookup(np.asarray(grid, dtype=np.int64))[0])
        if pos < 0:
            raise KeyError(f"{tuple(grid)} is not a grid point of the domain")
        return pos

    def blocked_mask(self) -> np.ndarray:
        """``(P, modes, m)`` bool: every enabled scenario has no in-domain successor."""
        P, m = self.n_points, self.n_inputs
        f_empty = (self.flow.sizes() == 0).reshape(P, m)
        j_empty = (self.jump.sizes() == 0).reshape(P, m)
        out = np.ones((P, self.n_modes, m), dtype=bool)
        for l in range(self.n_modes):
            if self.flow_enabled(l):
                out[:, l, :] &= f_empty
            if self.jump_enabled(l):
                out[:, l, :] &= j_empty
        return out

    def escape_mask(self) -> np.ndarray:
        """``(P, modes, m)`` bool: some enabled scenario reaches outside the domain."""
        P, m = self.n_points, self.n_inputs
        f_esc = self.flow.escape.reshape(P, m)
        j_esc = self.jump.escape.reshape(P, m)
        out = np.zeros((P, self.n_modes, m), dtype=bool)
        for l in range(self.n_modes):
            if self.flow_enabled(l):
                out[:, l, :] |= f_esc
            if self.jump_enabled(l):
                out[:, l, :] |= j_esc
        return out


def build_symbolic(system: ImpulsiveSystem, eta: float | None = None,
                   domain: GridDomain | None = None, backend=None) -> SymbolicModel:
    """Construct the symbolic model of ``system`` on the grid of step ``eta``.

    ``domain`` defaults to the system region gridded with ``eta``.

    Raises:
        DomainTooLarge: propagated from grid enumeration.
    """
    if domain is None:
        if eta is None:
            raise ValueError("give eta or a grid domain")
        domain = GridDomain(system.region, eta)
    elif eta is not None and abs(eta - domain.eta) > SLACK * domain.eta:
        raise ValueError(f"eta={eta} disagrees with the domain step {domain.eta}")
    pts = domain.decode(domain.points)
    P, m = len(pts), system.n_inputs
    x = np.repeat(pts, m, axis=0)
    u = np.tile(system.inputs, (P, 1))
    flow_nom = np.asarray(flow_map(system, x, u), dtype=float).reshape(P * m, system.dim)
    jump_nom = np.asarray(jump_map(system, x, u), dtype=float).reshape(P * m, system.dim)
    kmin, shape, keys = domain._index
    tables = []
    for nom in (flow_nom, jump_nom):
        off, succ, esc = kernels.ball_successors(nom, domain.eta, domain.eta, kmin, shape,
                                                 keys, SLACK, backend=backend)
        for arr in (off, succ, esc, nom):
            arr.setflags(write=False)
        tables.append(Successors(off, succ, esc, nom))
    return SymbolicModel(system, domain, tables[0], tables[1])


def post(model: SymbolicModel, state: AbstractState, input_index: int) -> list[AbstractState]:
    """Stored successors of ``state`` under input ``input_index``, sorted."""
    l = int(state.mode)
    if not (0 <= l <= model.p2):
        raise ValueError(f"mode {l} outside [0, {model.p2}]")
    if not (0 <= input_index < model.n_inputs):
        raise ValueError(f"input index {input_index} out of range")
    i = model.position(state.grid)
    r = i * model.n_inputs + input_index
    out = []
    if model.flow_enabled(l):
        out += [(s, l + 1) for s in model.flow.row(r)]
    if model.jump_enabled(l):
        out += [(s, 0) for s in model.jump.row(r)]
    pts = model.points
    res = [AbstractState(tuple(int(v) for v in pts[s]), mode) for s, mode in out]
    return sorted(res)


def concrete_post(system: ImpulsiveSystem, state: ConcreteState, u) -> list[ConcreteState]:
    """Successors of the sampled concrete system: flow and/or jump by mode window."""
    l = int(state.mode)
    if not (0 <= l <= system.p2):
        raise ValueError(f"mode {l} outside [0, {system.p2}]")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    out = []
    if l <= system.p2 - 1:
        out.append(ConcreteState(flow_map(system, state.x, u), l + 1))
    if system.p1 <= l:
        out.append(ConcreteState(jump_map(system, state.x, u), 0))
    return out


@dataclass
class NonblockingReport:
    blocking_states: np.ndarray  # (k, 2) rows of (point position, mode)
    blocked_pairs: int
    escaping_pairs: int
    n_states: int

    @property
    def nonblocking(self) -> bool:
        return len(self.blocking_states) == 0


def check_nonblocking(model: SymbolicModel) -> NonblockingReport:
    """States for which every input is blocked."""
    blocked = model.blocked_mask()
    all_blocked = blocked.all(axis=2)
    states = np.argwhere(all_blocked)
    return NonblockingReport(
        blocking_states=states,
        blocked_pairs=int(blocked.sum()),
        escaping_pairs=int(model.escape_mask().sum()),
        n_states=model.n_states,
    )


# ---------------------------------------------------------------------------
# text dump
# ---------------------------------------------------------------------------


def dump_model(model: SymbolicModel, fh) -> None:
    """Write the transition table as text.

    Layout: ``#``-prefixed ``key = value`` header (dim, points, inputs, modes,
    eta, tau, p1, p2), then ``P pos k_1 .. k_n`` for every grid point,
    ``U j u_1 .. u_m`` for every input, and one line per (point, input,
    scenario): ``F|J pos j escape s_1 s_2 ...`` with successor positions.
    """
    sysm = model.system
    header = {"dim": sysm.dim, "points": model.n_points, "inputs": model.n_inputs,
              "modes": model.n_modes, "eta": repr(model.eta), "tau": repr(sysm.tau),
              "p1": sysm.p1, "p2": sysm.p2}
    fh.write("# impulsym symbolic model v1\n")
    for k, v in header.items():
        fh.write(f"# {k} = {v}\n")
    for i, q in enumerate(model.points):
        fh.write(f"P {i} " + " ".join(str(int(v)) for v in q) + "\n")
    for j, u in enumerate(model.inputs):
        fh.write(f"U {j} " + " ".join(repr(float(v)) for v in u) + "\n")
    m = model.n_inputs
    for tag, tab in (("F", model.flow), ("J", model.jump)):
        for r in range(model.n_points * m):
            i, j = divmod(r, m)
            row = " ".join(str(int(s)) for s in tab.row(r))
            fh.write(f"{tag} {i} {j} {int(tab.escape[r])} {row}".rstrip() + "\n")


def dumps_model(model: SymbolicModel) -> str:
    buf = io.StringIO()
    dump_model(model, buf)
    return buf.getvalue()


def parse_model_dump(text: str) -> dict:
    """Parse :func:`dump_model` output into header values and successor tables."""
    header, points, inputs = {}, {}, {}
    tables = {"F": {}, "J": {}}
    for line in text.splitlines():
        if line.startswith("# ") and "=" in line:
            k, v = line[2:].split("=", 1)
            header[k.strip()] = v.strip()
        elif line.startswith("P "):
            parts = line.split()
            points[int(parts[1])] = tuple(int(v) for v in parts[2:])
        elif line.startswith("U "):
            parts = line.split()
            inputs[int(parts[1])] = tuple(float(v) for v in parts[2:])
        elif line[:2] in ("F ", "J "):
            parts = line.split()
            key = (int(parts[1]), int(parts[2]))
            tables[parts[0]][key] = (bool(int(parts[3])), tuple(int(v) for v in parts[4:]))
    return {"header": header, "points": points, "inputs": inputs, "flow": tables["F"],
            "jump": tables["J"]}
