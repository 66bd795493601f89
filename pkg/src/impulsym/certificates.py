"""Incremental-stability certificates and the precision they buy.

Pipeline: a :class:`StabilityCertificate` (V with its comparison functions,
flow rate ``kappa_c`` and jump factor ``kappa_d``) plus the dwell window
``(tau, p1, p2)`` and grid step ``eta`` give mode-weighted alternating
simulation function parameters (:func:`derive_asf`). Those are converted to
max form (:func:`to_max_form`), which yields the output precision
``eps_hat``. :func:`optimize_precision` searches the free weights.

Three regimes are supported, tagged by which part contracts:

* ``DD``: ``kappa_d < 1`` and ``kappa_c > 0`` (both contract), weight 1.
* ``FD``: ``kappa_d >= 1`` and ``kappa_c > 0``, weight ``exp(kappa_c*tau*eps*l)``.
* ``DF``: ``kappa_d < 1`` and ``kappa_c <= 0``, weight ``kappa_d**(l/delta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .dynamics import ImpulsiveSystem
from .errors import CaseExcluded, DwellViolated, FreeParamInfeasible


# ---------------------------------------------------------------------------
# comparison functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonFunction:
    """``r -> k * r**p`` with ``k, p > 0``, or the zero function (``k == 0``).

    Closed under positive scaling, composition and inversion, so every
    function built from the certificate stays exact.
    """

    k: float = 1.0
    p: float = 1.0

    def __post_init__(self):
        if self.k < 0 or not self.p > 0:
            raise ValueError(f"invalid comparison function k={self.k}, p={self.p}")

    @classmethod
    def identity(cls) -> "ComparisonFunction":
        return cls(1.0, 1.0)

    @classmethod
    def linear(cls, k: float) -> "ComparisonFunction":
        return cls(float(k), 1.0)

    @classmethod
    def zero(cls) -> "ComparisonFunction":
        return cls(0.0, 1.0)

    @property
    def is_zero(self) -> bool:
        return self.k == 0

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = self.k * np.power(np.maximum(r, 0.0), self.p)
        return float(out) if out.ndim == 0 else out

    def scaled(self, c: float) -> "ComparisonFunction":
        """``c * f``."""
        return ComparisonFunction(self.k * c, self.p)

    def precomposed(self, c: float) -> "ComparisonFunction":
        """``r -> f(c * r)``."""
        return ComparisonFunction(self.k * c**self.p, self.p)

    def compose(self, inner: "ComparisonFunction") -> "ComparisonFunction":
        """``r -> self(inner(r))``."""
        return ComparisonFunction(self.k * inner.k**self.p, self.p * inner.p)

    def inverse(self) -> "ComparisonFunction":
        if self.is_zero:
            raise ValueError("the zero function has no inverse")
        return ComparisonFunction(self.k ** (-1.0 / self.p), 1.0 / self.p)


# ---------------------------------------------------------------------------
# certificate and its validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StabilityCertificate:
    """Incremental Lyapunov-like function V with its bounds and rates.

    ``V(x, xh)`` takes batches ``(..., n)`` and returns ``(...)``.
    ``grad(x, xh)``, if given, returns ``(dV/dx, dV/dxh)`` with the shape of
    the inputs.
    """

    V: Callable
    alpha_lo: ComparisonFunction
    alpha_hi: ComparisonFunction
    rho_uc: ComparisonFunction
    rho_ud: ComparisonFunction
    kappa_c: float
    kappa_d: float
    gamma_hat: ComparisonFunction
    grad: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.kappa_d > 0:
            raise ValueError("kappa_d must be positive")
        if self.alpha_lo.is_zero or self.alpha_hi.is_zero or self.gamma_hat.is_zero:
            raise ValueError("alpha_lo, alpha_hi and gamma_hat must be class-K_inf")
        probe = np.geomspace(1e-6, 1e6, 61)
        if np.any(self.alpha_lo(probe) > self.alpha_hi(probe) * (1 + 1e-12)):
            raise ValueError("alpha_lo must not exceed alpha_hi")

    @property
    def case_tag(self) -> str:
        return case_tag(self.kappa_c, self.kappa_d)


def _inf_norm_V(x, xh):
    return np.max(np.abs(np.asarray(x) - np.asarray(xh)), axis=-1)


def _inf_norm_grad(x, xh):
    diff = np.asarray(x, dtype=float) - np.asarray(xh, dtype=float)
    idx = np.argmax(np.abs(diff), axis=-1)
    g = np.zeros_like(diff)
    np.put_along_axis(g, idx[..., None], np.sign(np.take_along_axis(diff, idx[..., None], -1)), -1)
    return g, -g


def linear_system_certificate(a: float, b: float, c: float, d: float) -> StabilityCertificate:
    """``V = ||x - xh||`` certificate for ``xdot = a x + c u``, ``x+ = b x + d u``.

    Diagonal linear dynamics in any dimension admit it with identity bounds,
    ``kappa_c = -a``, ``kappa_d = |b|`` and linear input gains ``|c|``, ``|d|``.
    """
    ident = ComparisonFunction.identity()
    return StabilityCertificate(
        V=_inf_norm_V, alpha_lo=ident, alpha_hi=ident,
        rho_uc=ComparisonFunction.linear(abs(c)), rho_ud=ComparisonFunction.linear(abs(d)),
        kappa_c=-a, kappa_d=abs(b), gamma_hat=ident, grad=_inf_norm_grad,
    )


@dataclass
class CertificateReport:
    samples: int
    tolerance: float
    max_violation: dict
    worst_sample: dict

    @property
    def passed(self) -> bool:
        return all(v <= self.tolerance for v in self.max_violation.values())

    def failed_conditions(self) -> list[str]:
        return [k for k, v in self.max_violation.items() if v > self.tolerance]


def _fd_directional(V, x, xh, fx, fxh, scale):
    h = 1e-6 * scale
    plus = V(x + h * fx, xh + h * fxh)
    minus = V(x - h * fx, xh - h * fxh)
    return (plus - minus) / (2 * h)


def verify_certificate(system: ImpulsiveSystem, cert: StabilityCertificate,
                       samples: int = 10_000, seed=0, tolerance: float = 1e-6,
                       use_gradient: bool = True) -> CertificateReport:
    """Falsification check of the certificate on random samples.

    Draws ``x, xh, z`` uniformly in the system region and ``u, uh`` from the
    input list, then measures the worst violation of the sandwich bounds,
    the flow dissipation inequality, the jump inequality and the triangle
    inequality. Passing is evidence, not proof.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    boxes = system.region
    which = rng.integers(0, len(boxes), size=(3, samples))
    lo = np.array([b.lower for b in boxes])
    hi = np.array([b.upper for b in boxes])
    pts = lo[which] + rng.random((3, samples, system.dim)) * (hi[which] - lo[which])
    x, xh, z = pts
    ui = rng.integers(0, system.n_inputs, size=(2, samples))
    u, uh = system.inputs[ui[0]], system.inputs[ui[1]]

    dist = np.max(np.abs(x - xh), axis=1)
    du = np.max(np.abs(u - uh), axis=1)
    Vx = cert.V(x, xh)
    viol = {}
    worst = {}

    def record(name, excess):
        i = int(np.argmax(excess))
        viol[name] = float(max(excess[i], 0.0))
        worst[name] = {"x": x[i].tolist(), "xh": xh[i].tolist(),
                       "u": u[i].tolist(), "uh": uh[i].tolist()}

    record("lower_bound", cert.alpha_lo(dist) - Vx)
    record("upper_bound", Vx - cert.alpha_hi(dist))

    fx = system.flow(x, u)
    fxh = system.flow(xh, uh)
    if use_gradient and cert.grad is not None:
        gx, gxh = cert.grad(x, xh)
        dV = np.sum(gx * fx, axis=1) + np.sum(gxh * fxh, axis=1)
    else:
        scale = max(1.0, float(np.max(np.abs(np.concatenate([x, xh])))))
        dV = _fd_directional(cert.V, x, xh, fx, fxh, scale)
    record("flow_dissipation", dV - (-cert.kappa_c * Vx + cert.rho_uc(du)))

    gx_ = system.jump(x, u)
    gxh_ = system.jump(xh, uh)
    record("jump", cert.V(gx_, gxh_) - (cert.kappa_d * Vx + cert.rho_ud(du)))

    record("triangle", cert.V(x, xh) - (cert.V(x, z) + cert.gamma_hat(np.max(np.abs(xh - z), axis=1))))
    return CertificateReport(samples, tolerance, viol, worst)


# ---------------------------------------------------------------------------
# dwell condition and the inter-impulse bound
# ---------------------------------------------------------------------------


def case_tag(kappa_c: float, kappa_d: float) -> str:
    if kappa_d < 1 and kappa_c > 0:
        return "DD"
    if kappa_d >= 1 and kappa_c > 0:
        return "FD"
    if kappa_d < 1 and kappa_c <= 0:
        return "DF"
    raise CaseExcluded(
        f"kappa_d={kappa_d} >= 1 with kappa_c={kappa_c} <= 0: neither flows nor jumps contract"
    )


def dwell_margins(kappa_c: float, kappa_d: float, tau: float, p1: int, p2: int):
    """``ln(kappa_d) - kappa_c*tau*l`` at ``l = p1`` and ``l = p2``."""
    return tuple(math.log(kappa_d) - kappa_c * tau * l for l in (p1, p2))


def check_dwell(cert: StabilityCertificate, tau: float, p1: int, p2: int) -> bool:
    """Whether the dwell inequality holds at both ends of the window."""
    return all(m < 0 for m in dwell_margins(cert.kappa_c, cert.kappa_d, tau, p1, p2))


def gap_coefficient(kappa_c: float, gap: float) -> float:
    """``(1 - exp(-kappa_c*gap)) / kappa_c``, equal to ``gap`` at ``kappa_c = 0``."""
    x = kappa_c * gap
    if x == 0:
        return gap
    return -math.expm1(-x) / kappa_c


def flow_mismatch_bound(cert: StabilityCertificate, V0: float, gap: float,
                        input_mismatch: float) -> float:
    """Bound on V just before the next impulse, ``gap`` time units after ``V0``."""
    if not gap > 0:
        raise ValueError("gap must be positive")
    return math.exp(-cert.kappa_c * gap) * V0 + gap_coefficient(cert.kappa_c, gap) * cert.rho_uc(input_mismatch)


# ---------------------------------------------------------------------------
# ASF parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AsfParameters:
    """Parameters of the mode-weighted alternating simulation function.

    ``alpha_tilde`` lower-bounds the ASF by the output distance, ``sigma_tilde``
    is the per-step contraction (equal to ``lambda_f``), ``eps_tilde`` the
    per-step offset and ``rho_u_tilde`` the input gain.
    """

    case_tag: str
    kappa_c: float
    kappa_d: float
    tau: float
    p1: int
    p2: int
    eta: float
    epsilon_free: float | None
    delta_free: float | None
    lambda_f: float
    gamma_f: ComparisonFunction
    alpha_tilde: ComparisonFunction
    sigma_tilde: float
    rho_u_tilde: ComparisonFunction
    eps_tilde: float
    direction: str = "forward"
    mu: float = 0.0

    def weight(self, mode):
        """Mode weight multiplying V in the ASF."""
        mode = np.asarray(mode, dtype=float)
        if self.case_tag == "DD":
            w = np.ones_like(mode)
        elif self.case_tag == "FD":
            w = np.exp(self.kappa_c * self.tau * self.epsilon_free * mode)
        else:
            w = self.kappa_d ** (mode / self.delta_free)
        return float(w) if w.ndim == 0 else w

    def value(self, cert: StabilityCertificate, x, xh, mode):
        """ASF value ``V(x, xh) * weight(mode)`` for matching modes."""
        return cert.V(np.asarray(x, dtype=float), np.asarray(xh, dtype=float)) * self.weight(mode)


def _lambda_f(tag, kc, kd, tau, p1, p2, eps, delta):
    if tag == "DD":
        return max(math.exp(-kc * tau), kd)
    if tag == "FD":
        return max(math.exp(-kc * tau * (1 - eps)), math.exp(-kc * tau * eps * p1) * kd)
    return max(math.exp(-kc * tau) * kd ** (1 / delta), kd ** ((delta - p2) / delta))


def derive_asf(cert: StabilityCertificate, tau: float, p1: int, p2: int, eta: float,
               epsilon_free: float | None = None, delta_free: float | None = None,
               alpha_convention: str = "sound") -> AsfParameters:
    """Weighted-ASF parameters for the symbolic model with grid step ``eta``.

    ``epsilon_free`` in (0, 1) is required in the FD regime and ``delta_free``
    > p2 in the DF regime; both are ignored in DD.

    ``alpha_convention="paper"`` scales the FD output bound by
    ``exp(kappa_c*tau*eps*p1)``, which is only valid in modes ``l >= p1``; the
    default ``"sound"`` uses the worst mode ``l = 0`` instead.

    Raises:
        CaseExcluded: ``kappa_d >= 1`` and ``kappa_c <= 0``.
        DwellViolated: the dwell inequality fails at ``p1`` or ``p2``.
        FreeParamInfeasible: the free weight does not make ``lambda_f < 1``.
    """
    kc, kd = cert.kappa_c, cert.kappa_d
    tag = case_tag(kc, kd)
    if not check_dwell(cert, tau, p1, p2):
        raise DwellViolated(
            f"ln(kappa_d) - kappa_c*tau*l = {dwell_margins(kc, kd, tau, p1, p2)} for l = ({p1}, {p2})"
        )
    if alpha_convention not in ("sound", "paper"):
        raise ValueError(f"unknown alpha_convention {alpha_convention!r}")
    eps = delta = None
    a_inv = cert.alpha_lo.inverse()
    if tag == "DD":
        gamma_f = cert.gamma_hat
        alpha_hat = a_inv
    elif tag == "FD":
        if epsilon_free is None or not (0 < epsilon_free < 1):
            raise FreeParamInfeasible(f"FD regime needs epsilon_free in (0, 1), got {epsilon_free}")
        eps = float(epsilon_free)
        if not math.log(kd) - kc * tau * eps * p1 < 0:
            raise FreeParamInfeasible(f"ln(kappa_d) - kappa_c*tau*eps*p1 >= 0 for eps={eps}")
        gamma_f = cert.gamma_hat.scaled(math.exp(kc * tau * eps * (p2 + 1)))
        if alpha_convention == "paper":
            alpha_hat = a_inv.precomposed(math.exp(-kc * tau * eps * p1))
        else:
            alpha_hat = a_inv
    else:
        if delta_free is None or not delta_free > p2:
            raise FreeParamInfeasible(f"DF regime needs delta_free > p2={p2}, got {delta_free}")
        delta = float(delta_free)
        if not math.log(kd) - kc * tau * delta < 0:
            raise FreeParamInfeasible(f"ln(kappa_d) - kappa_c*tau*delta >= 0 for delta={delta}")
        gamma_f = cert.gamma_hat
        alpha_hat = a_inv.precomposed(kd ** (-p2 / delta))
    lam = _lambda_f(tag, kc, kd, tau, p1, p2, eps, delta)
    if not lam < 1:
        raise FreeParamInfeasible(f"lambda_f = {lam} is not below 1")
    return AsfParameters(
        case_tag=tag, kappa_c=kc, kappa_d=kd, tau=tau, p1=p1, p2=p2, eta=eta,
        epsilon_free=eps, delta_free=delta, lambda_f=lam, gamma_f=gamma_f,
        alpha_tilde=alpha_hat.inverse(), sigma_tilde=lam,
        rho_u_tilde=ComparisonFunction.zero(), eps_tilde=gamma_f(eta),
    )


def derive_reverse_asf(asf: AsfParameters, cert: StabilityCertificate, mu: float,
                       tau: float | None = None) -> AsfParameters:
    """Parameters for the direction concrete -> symbolic.

    Every concrete input is matched by an abstract one within ``mu``; the
    offset grows by ``max(c(tau)*rho_uc, rho_ud)(mu)``, with the FD weight
    on the flow term. The inter-impulse gap of the flow term is taken as one
    sampling period.
    """
    if mu < 0:
        raise ValueError("mu must be non-negative")
    tau = asf.tau if tau is None else tau
    flow_gain = gap_coefficient(cert.kappa_c, tau)
    if asf.case_tag == "FD":
        flow_gain *= math.exp(cert.kappa_c * tau * asf.epsilon_free * (asf.p2 + 1))
    extra = max(flow_gain * cert.rho_uc(mu), cert.rho_ud(mu)) if mu > 0 else 0.0
    return replace(asf, eps_tilde=asf.eps_tilde + extra, direction="reverse", mu=float(mu))


# ---------------------------------------------------------------------------
# max form and precision
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MaxFormParameters:
    psi: float
    sigma: float
    rho: ComparisonFunction
    eps: float
    eps_hat: float
    input_bound: float

    @property
    def relation_bound(self) -> float:
        """ASF level ``max(rho(r), eps)`` defining the simulation relation."""
        return max(self.rho(self.input_bound), self.eps)


def to_max_form(asf: AsfParameters, psi: float, input_bound: float = 0.0) -> MaxFormParameters:
    """Max-form constants and the resulting output precision ``eps_hat``."""
    if not (0 < psi < 1):
        raise ValueError("psi must lie in (0, 1)")
    s = asf.sigma_tilde
    denom = (1.0 - s) * psi
    sigma = 1.0 - (1.0 - psi) * (1.0 - s)
    rho = asf.rho_u_tilde.scaled(1.0 / denom)
    eps = asf.eps_tilde / denom
    eps_hat = asf.alpha_tilde.inverse()(max(rho(input_bound), eps))
    return MaxFormParameters(psi=psi, sigma=sigma, rho=rho, eps=eps, eps_hat=float(eps_hat),
                             input_bound=float(input_bound))


# search lattices
EPSILON_LATTICE = np.round(np.linspace(0.005, 0.995, 199), 12)
DELTA_SPAN = 10.0
DELTA_STEPS = 400
PSI_LATTICE = np.round(np.concatenate([np.linspace(0.05, 0.95, 19),
                                       np.linspace(0.96, 0.999, 40)]), 12)


def _eps_hat_or_inf(cert, tau, p1, p2, eta, r, psi, eps=None, delta=None):
    try:
        asf = derive_asf(cert, tau, p1, p2, eta, eps, delta)
    except FreeParamInfeasible:
        return math.inf, None
    return to_max_form(asf, psi, r).eps_hat, asf


def optimize_precision(cert: StabilityCertificate, tau: float, p1: int, p2: int, eta: float,
                       r: float = 0.0, psi: float | None = None):
    """Free weights minimizing ``eps_hat``.

    Scans a fixed lattice of the free weight (``epsilon_free`` in FD,
    ``delta_free`` in ``(p2, p2 + 10]`` in DF) and of ``psi`` unless fixed,
    then refines the weight by bounded scalar minimization between the
    neighbours of the best lattice point. Deterministic.

    Returns:
        ``(AsfParameters, MaxFormParameters)`` at the optimum.

    Raises:
        DwellViolated, CaseExcluded: as :func:`derive_asf`.
        FreeParamInfeasible: no lattice point gives ``lambda_f < 1``.
    """
    tag = case_tag(cert.kappa_c, cert.kappa_d)
    if not check_dwell(cert, tau, p1, p2):
        raise DwellViolated(f"dwell inequality fails for p1={p1}, p2={p2}")
    psis = PSI_LATTICE if psi is None else np.array([psi])

    if tag == "DD":
        lattice = [None]
    elif tag == "FD":
        lattice = list(EPSILON_LATTICE)
    else:
        lattice = list(np.round(p2 + DELTA_SPAN * np.arange(1, DELTA_STEPS + 1) / DELTA_STEPS, 12))

    def evaluate(w, ps):
        if tag == "FD":
            return _eps_hat_or_inf(cert, tau, p1, p2, eta, r, ps, eps=w)
        if tag == "DF":
            return _eps_hat_or_inf(cert, tau, p1, p2, eta, r, ps, delta=w)
        return _eps_hat_or_inf(cert, tau, p1, p2, eta, r, ps)

    best = None  # (eps_hat, w, psi)
    for w in lattice:
        for ps in psis:
            val, _ = evaluate(w, float(ps))
            if math.isfinite(val) and (best is None or val < best[0]):
                best = (val, w, float(ps))
    if best is None:
        raise FreeParamInfeasible("no feasible free-parameter point on the search lattice")

    val, w, ps = best
    if tag != "DD":
        i = lattice.index(w)
        lo = lattice[max(i - 1, 0)]
        hi = lattice[min(i + 1, len(lattice) - 1)]
        if tag == "FD":
            lo = lo if i > 0 else 1e-9
            hi = hi if i < len(lattice) - 1 else 1 - 1e-9
        else:
            lo = lo if i > 0 else p2 + 1e-9
        if hi > lo:
            res = minimize_scalar(lambda v: evaluate(v, ps)[0], bounds=(lo, hi),
                                  method="bounded", options={"xatol": 1e-10})
            if math.isfinite(res.fun) and res.fun < val:
                w = float(res.x)
    eps_hat, asf = evaluate(w, ps)
    return asf, to_max_form(asf, ps, r)
