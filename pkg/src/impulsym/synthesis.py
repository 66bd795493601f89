"""Safety synthesis on the symbolic model, refinement and relation checks."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .abstraction import AbstractState, SymbolicModel
from .certificates import AsfParameters, MaxFormParameters, StabilityCertificate
from .dynamics import ImpulseSchedule, Trajectory, flow_map, jump_map, random_schedule
from .errors import ConfigError, EmptyDomain, OutOfDomain, OutsideDomain, RelationViolation
from .geometry import SLACK, Box, quantize

#: Absolute slack for relation and deviation checks.
RELATION_SLACK = 1e-12


@dataclass(frozen=True)
class SafetySpec:
    """Keep the output inside ``safe_box`` shrunk by ``deflation`` on every side."""

    safe_box: Box
    deflation: float = 0.0

    def __post_init__(self):
        if self.deflation < 0:
            raise ValueError("deflation must be non-negative")
        lo, hi = self.bounds
        if np.any(lo > hi):
            raise ValueError(f"deflating {self.safe_box} by {self.deflation} leaves nothing")

    @property
    def bounds(self):
        lo = np.asarray(self.safe_box.lower) + self.deflation
        hi = np.asarray(self.safe_box.upper) - self.deflation
        return lo, hi

    def safe_points(self, model: SymbolicModel) -> np.ndarray:
        lo, hi = self.bounds
        x = model.domain.decode(model.points)
        tol = SLACK * model.eta
        return np.all((x >= lo - tol) & (x <= hi + tol), axis=1)


@dataclass(frozen=True, eq=False)
class SafetyController:
    """Winning abstract states mapped to their admissible input indices.

    ``header`` carries ``eta, tau, p1, p2, eps_hat, deflation`` and
    ``inputs`` the abstract input values the indices refer to.
    """

    table: dict
    inputs: np.ndarray
    header: dict
    sweeps: int = field(default=0, compare=False)

    def __len__(self):
        return len(self.table)

    def __eq__(self, other):
        if not isinstance(other, SafetyController):
            return NotImplemented
        return (self.table == other.table and self.header == other.header
                and np.array_equal(self.inputs, other.inputs))

    __hash__ = None

    @property
    def is_empty(self) -> bool:
        return not self.table

    @property
    def dim(self) -> int:
        return int(self.header["dim"])

    def __contains__(self, state) -> bool:
        return _key(state) in self.table

    def admissible(self, grid, mode: int) -> tuple[int, ...]:
        try:
            return self.table[(tuple(int(v) for v in grid), int(mode))]
        except KeyError:
            raise OutsideDomain(f"state {tuple(grid)}, mode {mode} is not winning") from None

    def states(self) -> list[AbstractState]:
        return [AbstractState(g, l) for g, l in sorted(self.table)]


def _key(state):
    grid, mode = state
    return (tuple(int(v) for v in grid), int(mode))


def synthesize_safety(model: SymbolicModel, spec: SafetySpec, eps_hat: float = math.nan,
                      backend=None, raise_if_empty: bool = False) -> SafetyController:
    """Maximal controlled-invariant subset of the (deflated) safe set.

    Iterates ``Z <- {q in Z : some input has nonempty successors, all in Z,
    and no escaping scenario}`` from ``Z_0`` = safe grid points x all modes.
    The controller keeps every winning input, ordered by index.

    Raises:
        ValueError: the deflated safe set holds no grid point.
        EmptyDomain: only with ``raise_if_empty`` and an empty fixed point.
    """
    safe = spec.safe_points(model)
    if not safe.any():
        raise ValueError("the deflated safe set contains no grid point of the domain")
    Z, enabled, sweeps = kernels.safety_fixed_point(
        safe, model.n_modes, model.n_inputs, model.p1, model.p2,
        model.flow.as_tuple(), model.jump.as_tuple(), backend=backend,
    )
    pts = model.points
    table = {}
    for i, l in zip(*np.nonzero(Z)):
        table[(tuple(int(v) for v in pts[i]), int(l))] = tuple(int(j) for j in np.flatnonzero(enabled[i, l]))
    header = {
        "dim": model.system.dim, "eta": model.eta, "tau": model.tau, "p1": model.p1,
        "p2": model.p2, "eps_hat": float(eps_hat), "deflation": float(spec.deflation),
    }
    ctrl = SafetyController(table, np.array(model.inputs), header, sweeps)
    if raise_if_empty and ctrl.is_empty:
        raise EmptyDomain("safety fixed point is empty")
    return ctrl


def controller_arrays(model: SymbolicModel, controller: SafetyController):
    """Dense ``(win, enabled)`` arrays of a controller over ``model``'s grid."""
    win = np.zeros((model.n_points, model.n_modes), dtype=bool)
    enabled = np.zeros((model.n_points, model.n_modes, model.n_inputs), dtype=bool)
    if controller.table:
        grids = np.array([g for g, _ in controller.table], dtype=np.int64)
        pos = model.domain.lookup(grids)
        if np.any(pos < 0):
            raise ValueError("controller refers to grid points outside the model domain")
        for p, ((_, l), js) in zip(pos, controller.table.items()):
            win[p, l] = True
            enabled[p, l, list(js)] = True
    return win, enabled


def invariance_violations(model: SymbolicModel, controller: SafetyController) -> list:
    """Exhaustive check: every listed input keeps all successors in the domain.

    Returns a list of ``(state, input_index, reason)``; empty means the
    controller domain is controlled invariant.
    """
    win, enabled = controller_arrays(model, controller)
    m = model.n_inputs
    bad = []
    for i, l in zip(*np.nonzero(win)):
        js = np.flatnonzero(enabled[i, l])
        if len(js) == 0:
            bad.append(((int(i), int(l)), None, "no admissible input"))
        for j in js:
            r = i * m + j
            succ = []
            if model.flow_enabled(l):
                if model.flow.escape[r]:
                    bad.append(((int(i), int(l)), int(j), "flow escapes the domain"))
                succ += [(s, l + 1) for s in model.flow.row(r)]
            if model.jump_enabled(l):
                if model.jump.escape[r]:
                    bad.append(((int(i), int(l)), int(j), "jump escapes the domain"))
                succ += [(s, 0) for s in model.jump.row(r)]
            if not succ:
                bad.append(((int(i), int(l)), int(j), "blocked"))
            for s, lm in succ:
                if not win[s, lm]:
                    bad.append(((int(i), int(l)), int(j), f"successor ({int(s)}, {lm}) not winning"))
    return bad


def refine(controller: SafetyController, concrete, domain, asf: AsfParameters | None = None) -> int:
    """Input index for a concrete ``(x, mode)``: first admissible one at ``quantize(x)``.

    The forward ASF has zero input gain, so the concrete input equals the
    abstract one.

    Raises:
        OutsideDomain: ``(quantize(x), mode)`` is not winning.
    """
    if asf is not None and not asf.rho_u_tilde.is_zero:
        raise ValueError("refinement by input copying needs a zero input gain")
    x, mode = concrete
    try:
        q = quantize(np.atleast_1d(np.asarray(x, dtype=float)), domain)
    except OutOfDomain as exc:
        raise OutsideDomain(str(exc)) from None
    return controller.admissible(q, mode)[0]


@dataclass
class RelationReport:
    pairs: int = 0
    max_deviation: float = 0.0
    max_value: float = 0.0
    violations: int = 0
    rejected: int = 0
    first_violation: str | None = None

    def note(self, deviation: float, value: float, eps_hat: float, bound: float, where: str):
        self.pairs += 1
        self.max_deviation = max(self.max_deviation, deviation)
        self.max_value = max(self.max_value, value)
        if deviation > eps_hat + RELATION_SLACK or value > bound + RELATION_SLACK:
            self.violations += 1
            if self.first_violation is None:
                self.first_violation = (f"{where}: deviation {deviation!r} (eps_hat {eps_hat!r}), "
                                        f"ASF {value!r} (bound {bound!r})")

    @property
    def passed(self) -> bool:
        return self.violations == 0


def _nearest(model: SymbolicModel, candidates: np.ndarray, x: np.ndarray) -> int:
    coords = model.domain.decode(model.points[candidates])
    d = np.max(np.abs(coords - x), axis=1)
    return int(candidates[int(np.argmin(d))])


def closed_loop(model: SymbolicModel, controller: SafetyController, cert: StabilityCertificate,
                asf: AsfParameters, maxform: MaxFormParameters, x0, horizon: int, seed=None,
                schedule: ImpulseSchedule | None = None,
                strict: bool = True) -> tuple[Trajectory, RelationReport]:
    """Concrete closed loop paired with an abstract run of the symbolic model.

    The controller acts on the paired abstract state. After every flow or
    jump the abstract successor is the stored successor (same scenario and
    input) nearest to the concrete state, so the abstract run is a genuine
    run of the symbolic model. At every sample the output deviation and the
    ASF value are checked against ``eps_hat`` and the relation level.

    Raises:
        OutsideDomain: ``(quantize(x0), 0)`` is not winning.
        RelationViolation: with ``strict`` and any failed check.
    """
    sysm = model.system
    m = model.n_inputs
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    eps_hat, bound = maxform.eps_hat, maxform.relation_bound
    if schedule is None:
        schedule = random_schedule(sysm.p1, sysm.p2, horizon, seed)
    jumps = set(i for i in schedule.instants if i <= horizon)
    win, enabled = controller_arrays(model, controller)
    first = np.argmax(enabled, axis=2)

    try:
        q = int(model.domain.lookup(quantize(x, model.domain))[0])
    except OutOfDomain as exc:
        raise OutsideDomain(str(exc)) from None
    l = 0
    if not win[q, l]:
        raise OutsideDomain(f"initial state {x} does not quantize into the winning domain")
    report = RelationReport()

    def check(xc, qi, mode, where):
        xh = model.domain.decode(model.points[qi])
        dev = float(np.max(np.abs(xc - xh)))
        val = float(asf.value(cert, xc, xh, mode))
        report.note(dev, val, eps_hat, bound, where)
        if strict and report.violations:
            raise RelationViolation(report.first_violation)

    def pick(qi, mode, where):
        if not win[qi, mode]:
            raise RelationViolation(f"{where}: abstract state left the winning domain")
        return int(first[qi, mode])

    n, mu = sysm.dim, sysm.input_dim
    t = np.arange(horizon + 1) * sysm.tau
    xb = np.empty((horizon + 1, n))
    xa = np.empty((horizon + 1, n))
    us = np.empty((horizon + 1, mu))
    uj = np.full((horizon + 1, mu), np.nan)
    jumped = np.zeros(horizon + 1, dtype=bool)

    check(x, q, l, "k=0")
    j = pick(q, l, "k=0")
    xb[0] = xa[0] = x
    us[0] = sysm.inputs[j]
    for k in range(1, horizon + 1):
        if not model.flow_enabled(l):
            raise RelationViolation(f"k={k}: flow at mode {l} (schedule gap exceeds p2)")
        x = flow_map(sysm, x, sysm.inputs[j])
        cand = model.flow.row(q * m + j)
        if len(cand) == 0:
            raise RelationViolation(f"k={k}: blocked flow transition in the winning domain")
        q, l = _nearest(model, cand, x), l + 1
        xb[k] = x
        check(x, q, l, f"k={k} flow")
        j = pick(q, l, f"k={k}")
        if k in jumps:
            if not model.jump_enabled(l):
                raise RelationViolation(f"k={k}: jump at mode {l} outside [p1, p2]")
            uj[k] = sysm.inputs[j]
            x = jump_map(sysm, x, sysm.inputs[j])
            cand = model.jump.row(q * m + j)
            if len(cand) == 0:
                raise RelationViolation(f"k={k}: blocked jump transition in the winning domain")
            q, l = _nearest(model, cand, x), 0
            jumped[k] = True
            check(x, q, l, f"k={k} jump")
            j = pick(q, l, f"k={k}")
        xa[k] = x
        us[k] = sysm.inputs[j]
    return Trajectory(t, xb, xa, us, uj, jumped), report


def validate_relation(model: SymbolicModel, cert: StabilityCertificate, asf: AsfParameters,
                      maxform: MaxFormParameters, samples: int = 10_000, seed=0,
                      spread: float = 1.5) -> RelationReport:
    """Sampled check of the approximate alternating simulation relation.

    Draws grid points ``xh``, modes ``l`` and concrete ``x`` within
    ``spread * eps_hat`` of ``xh``; pairs whose ASF exceeds the relation
    level are rejected (counted, not violations). For every abstract input,
    copied to the concrete system, and every enabled scenario, the best
    lattice point within ``eta`` of the abstract nominal successor must keep
    the pair in the relation with output deviation at most ``eps_hat``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    sysm = model.system
    rng = np.random.default_rng(seed)
    eta, bound, eps_hat = model.eta, maxform.relation_bound, maxform.eps_hat
    n = sysm.dim
    pos = rng.integers(0, model.n_points, size=samples)
    modes = rng.integers(0, model.n_modes, size=samples)
    xh = model.domain.decode(model.points[pos])
    radius = spread * max(eps_hat, eta)
    x = xh + rng.uniform(-radius, radius, size=(samples, n))
    vals = asf.value(cert, x, xh, modes)
    keep = vals <= bound
    report = RelationReport(rejected=int((~keep).sum()))
    x, xh, modes, vals = x[keep], xh[keep], modes[keep], vals[keep]
    dev0 = np.max(np.abs(x - xh), axis=1)
    for d, v in zip(dev0, vals):
        report.note(float(d), float(v), eps_hat, bound, "initial pair")

    per_side = int(np.floor(2.0 + 2.0 * SLACK)) + 2
    combos = np.indices((per_side,) * n).reshape(n, -1).T
    for j, u in enumerate(sysm.inputs):
        ub = np.broadcast_to(u, (len(x), len(u)))
        for scen in ("flow", "jump"):
            if scen == "flow":
                mask = modes <= sysm.p2 - 1
                nxt = modes + 1
                conc = flow_map(sysm, x[mask], ub[mask])
                nom = flow_map(sysm, xh[mask], ub[mask])
            else:
                mask = modes >= sysm.p1
                nxt = np.zeros_like(modes)
                conc = jump_map(sysm, x[mask], ub[mask])
                nom = jump_map(sysm, xh[mask], ub[mask])
            if not mask.any():
                continue
            lo = np.ceil((nom - eta) / eta - SLACK).astype(np.int64)
            hi = np.floor((nom + eta) / eta + SLACK).astype(np.int64)
            cand = lo[:, None, :] + combos[None]
            valid = np.all(cand <= hi[:, None, :], axis=2)
            cx = cand * eta
            lm = nxt[mask]
            cv = asf.value(cert, np.broadcast_to(conc[:, None, :], cx.shape), cx, lm[:, None])
            cv = np.where(valid, cv, np.inf)
            best = np.argmin(cv, axis=1)
            rows = np.arange(len(best))
            bv = cv[rows, best]
            bdev = np.max(np.abs(conc - cx[rows, best]), axis=1)
            for d, v in zip(bdev, bv):
                report.note(float(d), float(v), eps_hat, bound, f"input {j} {scen}")
    return report


# ---------------------------------------------------------------------------
# controller files
# ---------------------------------------------------------------------------

_HEADER_KEYS = ("dim", "eta", "tau", "p1", "p2", "eps_hat", "deflation")


def _fmt_inputs(inputs) -> str:
    return "; ".join(" ".join(repr(float(v)) for v in row) for row in np.atleast_2d(inputs))


def write_controller(controller: SafetyController, fh) -> None:
    """Serialize as sorted text lines ``k_1 .. k_n mode j_1 [j_2 ...]``.

    A ``#``-prefixed ``key = value`` header records the grid step, sampling
    period, dwell window, precision, deflation and the input list.
    """
    fh.write("# impulsym safety controller v1\n")
    for k in _HEADER_KEYS:
        v = controller.header[k]
        fh.write(f"# {k} = {v!r}\n" if isinstance(v, float) else f"# {k} = {v}\n")
    fh.write(f"# inputs = {_fmt_inputs(controller.inputs)}\n")
    fh.write(f"# states = {len(controller.table)}\n")
    for (g, l), js in sorted(controller.table.items()):
        fh.write(" ".join(str(v) for v in g) + f" {l} " + " ".join(str(j) for j in js) + "\n")


def controller_to_text(controller: SafetyController) -> str:
    buf = io.StringIO()
    write_controller(controller, buf)
    return buf.getvalue()


def read_controller(fh) -> SafetyController:
    header, inputs, table = {}, None, {}
    for raw in fh:
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "=" not in line:
                continue
            k, v = (s.strip() for s in line[1:].split("=", 1))
            if k == "inputs":
                inputs = np.array([[float(t) for t in row.split()] for row in v.split(";")])
            elif k in ("dim", "p1", "p2", "states"):
                header[k] = int(v)
            elif k in _HEADER_KEYS:
                header[k] = float(v)
            continue
        if "dim" not in header:
            raise ConfigError("controller file lacks a dim header")
        parts = [int(t) for t in line.split()]
        dim = header["dim"]
        if len(parts) < dim + 2:
            raise ConfigError(f"malformed controller line: {line!r}")
        table[(tuple(parts[:dim]), parts[dim])] = tuple(parts[dim + 1:])
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing or inputs is None:
        raise ConfigError(f"controller header is missing {missing or ['inputs']}")
    if header.pop("states", len(table)) != len(table):
        raise ConfigError("controller state count does not match its header")
    return SafetyController(table, inputs, header)


def controller_from_text(text: str) -> SafetyController:
    return read_controller(io.StringIO(text))

