"""Concrete semantics of sampled impulsive systems.

Between impulses the state follows ``xdot = f(x, u)``; at an impulse time
``t`` it is reset to ``g(x(t-), u(t))``. Impulse times are integer multiples
of the sampling period ``tau`` and consecutive gaps lie in
``{p1*tau, ..., p2*tau}``. Inputs are held constant over each period.

Vector fields and jump maps are vectorized: they take ``x`` of shape
``(..., n)`` and ``u`` of shape ``(..., m)`` and return ``(..., n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigError, NumericalBlowup
from .geometry import Box

VectorField = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ImpulsiveSystem:
    """Flow, jump map, dwell window and finite input list of one system.

    ``region`` is the compact state set the abstraction is restricted to.
    ``exact_flow(x, u, t)``, when given, is a closed-form solution used as a
    test oracle; :func:`flow_map` never uses it.
    """

    dim: int
    flow: VectorField
    jump: VectorField
    tau: float
    p1: int
    p2: int
    inputs: np.ndarray
    region: tuple[Box, ...]
    h_max: float | None = None
    blowup_bound: float = 1e12
    name: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict)
    exact_flow: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not (1 <= self.p1 <= self.p2):
            raise ValueError(f"need 1 <= p1 <= p2, got p1={self.p1}, p2={self.p2}")
        inputs = np.asarray(self.inputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs[:, None]
        if inputs.ndim != 2 or len(inputs) == 0:
            raise ValueError("inputs must be a non-empty list of input vectors")
        inputs.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        region = self.region
        if isinstance(region, Box):
            region = (region,)
        object.__setattr__(self, "region", tuple(region))
        if any(b.dim != self.dim for b in self.region):
            raise ValueError("region dimension does not match the state dimension")
        if self.h_max is not None and not self.h_max > 0:
            raise ValueError("h_max must be positive")

    @property
    def n_inputs(self) -> int:
        return len(self.inputs)

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def step(self) -> float:
        """Maximal integrator substep (defaults to ``tau / 10``)."""
        return self.h_max if self.h_max is not None else self.tau / 10.0

    @property
    def input_bound(self) -> float:
        """Infinity-norm bound ``r`` on the input list."""
        return float(np.max(np.abs(self.inputs)))


def n_substeps(duration: float, h_max: float) -> int:
    # the 1e-9 guard keeps 0.2 / 0.02 at 10 substeps despite rounding
    return max(1, math.ceil(duration / h_max - 1e-9))


def rk4(f: VectorField, x, u, duration: float, n_steps: int, bound: float = np.inf):
    """Classical fixed-step Runge-Kutta over ``n_steps`` equal substeps."""
    x = np.array(x, dtype=float)
    u = np.asarray(u, dtype=float)
    h = duration / n_steps
    for _ in range(n_steps):
        k1 = f(x, u)
        k2 = f(x + 0.5 * h * k1, u)
        k3 = f(x + 0.5 * h * k2, u)
        k4 = f(x + h * k3, u)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x), initial=0.0) > bound:
            raise NumericalBlowup(f"state norm exceeded {bound} during integration")
    return x


def flow_map(system: ImpulsiveSystem, x, u, duration: float | None = None,
             h_max: float | None = None) -> np.ndarray:
    """State reached at ``duration-`` from ``x`` under the constant input ``u``.

    Works on single states or batches (leading axes broadcast with ``u``).
    ``duration`` defaults to ``tau``; the substep count is
    ``max(1, ceil(duration / h_max))``.
    """
    duration = system.tau if duration is None else float(duration)
    if not duration > 0:
        raise ValueError("duration must be positive")
    h = system.step if h_max is None else h_max
    return rk4(system.flow, x, u, duration, n_substeps(duration, h), system.blowup_bound)


def jump_map(system: ImpulsiveSystem, x, u) -> np.ndarray:
    return np.asarray(system.jump(np.asarray(x, dtype=float), np.asarray(u, dtype=float)),
                      dtype=float)


# ---------------------------------------------------------------------------
# signals, schedules, trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InputSignal:
    """Piecewise-constant input: ``values[k]`` is held on ``[k*tau, (k+1)*tau)``.

    The last value is held beyond the end of the list.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if len(v) == 0:
            raise ValueError("an input signal needs at least one value")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, u, length: int = 1) -> "InputSignal":
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return cls(np.repeat(u[None, :], max(1, length), axis=0))

    def at(self, k: int) -> np.ndarray:
        return self.values[min(k, len(self.values) - 1)]


@dataclass(frozen=True)
class ImpulseSchedule:
    """Impulse instants given as sampling-period indices (``t_k = instants[k] * tau``)."""

    instants: tuple[int, ...]
    p1: int
    p2: int

    def __post_init__(self):
        inst = tuple(int(i) for i in self.instants)
        object.__setattr__(self, "instants", inst)
        if inst and inst[0] < self.p1:
            raise ValueError(f"first impulse at period {inst[0]} precedes p1={self.p1}")
        for a, b in zip(inst, inst[1:]):
            if not (self.p1 <= b - a <= self.p2):
                raise ValueError(f"impulse gap {b - a} outside [{self.p1}, {self.p2}]")

    def times(self, tau: float) -> np.ndarray:
        return np.asarray(self.instants, dtype=float) * tau

    def covers(self, horizon: int) -> bool:
        """No gap (including the initial one) exceeds ``p2`` before ``horizon``."""
        last = 0
        for i in self.instants:
            if i > horizon:
                break
            if i - last > self.p2:
                return False
            last = i
        return horizon - last <= self.p2


@dataclass
class Trajectory:
    """Samples at every sampling instant ``k * tau``, ``k = 0..horizon``.

    ``x_before[k]`` is the left limit ``x(k*tau-)`` and ``x_after[k]`` the
    right-continuous value; they differ only where ``jumped[k]``. ``u[k]`` is
    the input held on ``[k*tau, (k+1)*tau)``; ``u_jump[k]`` is the input fed
    to the jump map at ``k*tau`` (NaN where no jump happened).
    """

    t: np.ndarray
    x_before: np.ndarray
    x_after: np.ndarray
    u: np.ndarray
    u_jump: np.ndarray
    jumped: np.ndarray

    def __len__(self):
        return len(self.t)

    @property
    def horizon(self) -> int:
        return len(self.t) - 1


def simulate(system: ImpulsiveSystem, x0, signal: InputSignal,
             schedule: ImpulseSchedule, horizon: int) -> Trajectory:
    """Open-loop trajectory over ``horizon`` sampling periods.

    Each period flows under the held input; an impulse at ``k*tau`` is
    applied to ``x(k*tau-)`` with the input value active at ``k*tau``.
    """
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n, m = system.dim, system.input_dim
    jumps = set(i for i in schedule.instants if i <= horizon)
    t = np.arange(horizon + 1) * system.tau
    xb = np.empty((horizon + 1, n))
    xa = np.empty((horizon + 1, n))
    us = np.empty((horizon + 1, m))
    uj = np.full((horizon + 1, m), np.nan)
    jumped = np.zeros(horizon + 1, dtype=bool)
    xb[0] = xa[0] = x0
    us[0] = signal.at(0)
    x = x0
    for k in range(1, horizon + 1):
        x = flow_map(system, x, signal.at(k - 1))
        xb[k] = x
        us[k] = signal.at(k)
        if k in jumps:
            x = jump_map(system, x, us[k])
            uj[k] = us[k]
            jumped[k] = True
        xa[k] = x
    return Trajectory(t, xb, xa, us, uj, jumped)


def random_schedule(p1: int, p2: int, horizon: int, seed=None) -> ImpulseSchedule:
    """Impulse instants with i.i.d. uniform gaps in ``{p1, ..., p2}`` up to ``horizon``.

    The first impulse follows the same gap law counted from time 0.
    """
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    rng = np.random.default_rng(seed)
    inst = []
    k = 0
    while True:
        k += int(rng.integers(p1, p2 + 1))
        if k > horizon:
            break
        inst.append(k)
    return ImpulseSchedule(tuple(inst), p1, p2)


# ---------------------------------------------------------------------------
# built-in models
# ---------------------------------------------------------------------------


def _linear_closed_form(a, c):
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float)

    def exact(x, u, t):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        e = np.exp(a * t)
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = np.where(a != 0, (e - 1.0) / np.where(a != 0, a, 1.0), t)
        return e * x + gain * c * u

    return exact


def storage_delivery(a: float, b: float, c: float, d: float, *, tau: float, p1: int,
                     p2: int, inputs=(-1.0, 0.0, 1.0), region=None,
                     h_max: float | None = None) -> ImpulsiveSystem:
    """Scalar storage model: ``xdot = a x + c u`` between deliveries, ``x+ = b x + d u`` at them."""
    if region is None:
        raise ValueError("storage_delivery needs a region (e.g. the safe range)")

    def flow(x, u):
        return a * x + c * u

    def jump(x, u):
        return b * x + d * u

    return ImpulsiveSystem(
        dim=1, flow=flow, jump=jump, tau=tau, p1=p1, p2=p2,
        inputs=np.asarray(inputs, dtype=float).reshape(-1, 1), region=region,
        h_max=h_max, name="storage-delivery",
        params={"a": a, "b": b, "c": c, "d": d},
        exact_flow=_linear_closed_form(a, c),
    )


def pure_linear_nd(n: int, a: float, b: float, c: float, d: float, *, tau: float,
                   p1: int, p2: int, inputs, region,
                   h_max: float | None = None) -> ImpulsiveSystem:
    """Diagonal linear system ``xdot = a x + c u``, ``x+ = b x + d u`` in ``n`` dimensions.

    Inputs are ``n``-vectors. Every coordinate evolves like a scalar storage
    model, which gives coordinate-wise closed forms for oracle tests.
    """
    n = int(n)
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        inputs = np.repeat(inputs[:, None], n, axis=1)
    if inputs.shape[1] != n:
        raise ValueError(f"inputs must be {n}-vectors")

    def flow(x, u):
        return a * x + c * u

    def jump(x, u):
        return b * x + d * u

    return ImpulsiveSystem(
        dim=n, flow=flow, jump=jump, tau=tau, p1=p1, p2=p2, inputs=inputs,
        region=region, h_max=h_max, name="pure-linear-nd",
        params={"n": float(n), "a": a, "b": b, "c": c, "d": d},
        exact_flow=_linear_closed_form(a, c),
    )


_REGISTRY = {
    "storage-delivery": (storage_delivery, ("a", "b", "c", "d")),
    "pure-linear-nd": (pure_linear_nd, ("n", "a", "b", "c", "d")),
}


def model_names() -> list[str]:
    return sorted(_REGISTRY)


def make_model(name: str, params: Mapping[str, float], **kw) -> ImpulsiveSystem:
    """Instantiate a registered model from its real-valued parameter map."""
    try:
        factory, keys = _REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown model {name!r}; known: {', '.join(model_names())}") from None
    missing = [k for k in keys if k not in params]
    if missing:
        raise ConfigError(f"model {name!r} is missing parameters {missing}")
    extra = sorted(set(params) - set(keys))
    if extra:
        raise ConfigError(f"model {name!r} does not take parameters {extra}")
    return factory(*(params[k] for k in keys), **kw)
