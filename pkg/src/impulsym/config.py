"""Run configuration: a line-oriented ``key = value`` format.

Grammar::

    line    := blank | comment | entry
    comment := "#" anything
    entry   := key "=" value
    key     := name ("." name)?          # at most one section level

Values are scalars, comma-separated vectors, or ``;``-separated lists of
whitespace-separated vectors (multi-dimensional inputs). ``auto`` marks a
free ASF weight to be optimized.

Keys::

    model = storage-delivery            model.a / model.b / model.c / model.d
    tau, p1, p2, eta
    inputs = -1, 0, 1                   or inputs.range = -1, 1 with inputs.mu = 1
    psi_l = 25                          psi_u = 50   (safe box, one value per dim)
    domain.lower / domain.upper         abstraction region (default: the safe box)
    asf.psi = 0.99                      asf.epsilon_free = auto   asf.delta_free = auto
    integrator.h_max = 0.02             (default tau / 10)
    run.seed, run.horizon, run.trials, run.x0   (x0 defaults to the safe-box midpoint)
    deflate = true
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .certificates import StabilityCertificate, linear_system_certificate
from .dynamics import ImpulsiveSystem, make_model
from .errors import ConfigError
from .geometry import SLACK, Box


@dataclass(frozen=True)
class RunConfig:
    model: str
    params: dict
    tau: float
    p1: int
    p2: int
    eta: float
    psi_l: tuple
    psi_u: tuple
    inputs: tuple | None = None
    input_range: tuple | None = None
    input_mu: float | None = None
    domain_lower: tuple | None = None
    domain_upper: tuple | None = None
    asf_psi: float = 0.99
    epsilon_free: float | None = None
    delta_free: float | None = None
    h_max: float | None = None
    seed: int = 0
    horizon: int = 200
    trials: int = 10
    x0: tuple | None = None
    deflate: bool = True
    name: str = ""

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError("tau must be positive")
        if not (1 <= self.p1 <= self.p2):
            raise ConfigError("need 1 <= p1 <= p2")
        if not self.eta > 0:
            raise ConfigError("eta must be positive")
        if len(self.psi_l) != len(self.psi_u):
            raise ConfigError("psi_l and psi_u differ in dimension")
        if self.inputs is None and (self.input_range is None or self.input_mu is None):
            raise ConfigError("give inputs, or inputs.range together with inputs.mu")
        if self.inputs is not None and len(self.inputs) == 0:
            raise ConfigError("the input list is empty")
        if not (0 < self.asf_psi < 1):
            raise ConfigError("asf.psi must lie in (0, 1)")
        if self.trials < 0 or self.horizon < 0:
            raise ConfigError("run.trials and run.horizon must be non-negative")

    # -- derived objects ---------------------------------------------------

    @property
    def dim(self) -> int:
        return len(self.psi_l)

    def safe_box(self) -> Box:
        try:
            return Box(self.psi_l, self.psi_u)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def region(self) -> Box:
        if self.domain_lower is None and self.domain_upper is None:
            return self.safe_box()
        lo = self.domain_lower if self.domain_lower is not None else self.psi_l
        hi = self.domain_upper if self.domain_upper is not None else self.psi_u
        try:
            return Box(lo, hi)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def input_values(self) -> np.ndarray:
        if self.inputs is not None:
            arr = np.array(self.inputs, dtype=float)
        else:
            lo, hi = self.input_range
            mu = self.input_mu
            if not mu > 0 or not lo <= hi:
                raise ConfigError("inputs.range must be increasing and inputs.mu positive")
            k = np.arange(np.ceil(lo / mu - SLACK), np.floor(hi / mu + SLACK) + 1)
            arr = (k * mu)[:, None]
        if arr.size == 0:
            raise ConfigError("the input list is empty")
        return arr.reshape(len(arr), -1)

    def initial_state(self) -> np.ndarray:
        if self.x0 is not None:
            return np.array(self.x0, dtype=float)
        return (np.array(self.psi_l) + np.array(self.psi_u)) / 2.0

    def input_quantization(self) -> float:
        """Input quantization ``mu``: every admissible input lies within ``mu`` of an abstract one.

        For an explicit list this is the largest gap between neighbouring
        values (0 for a single input).
        """
        if self.input_mu is not None:
            return float(self.input_mu)
        vals = np.unique(self.input_values(), axis=0)
        if len(vals) < 2:
            return 0.0
        gaps = [np.max(np.abs(a - b)) for a, b in zip(vals[:-1], vals[1:])]
        return float(max(gaps))

    def system(self) -> ImpulsiveSystem:
        params = dict(self.params)
        try:
            return make_model(self.model, params, tau=self.tau, p1=self.p1, p2=self.p2,
                              inputs=self.input_values(), region=self.region(),
                              h_max=self.h_max)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    def certificate(self) -> StabilityCertificate:
        p = self.params
        if self.model in ("storage-delivery", "pure-linear-nd"):
            return linear_system_certificate(p["a"], p["b"], p["c"], p["d"])
        raise ConfigError(f"no certificate known for model {self.model!r}")

    # -- text form ---------------------------------------------------------

    def to_text(self) -> str:
        def vec(v):
            return ", ".join(repr(float(x)) for x in v)

        def opt(v):
            return "auto" if v is None else repr(float(v))

        lines = []
        if self.name:
            lines.append(f"name = {self.name}")
        lines.append(f"model = {self.model}")
        for k in sorted(self.params):
            lines.append(f"model.{k} = {float(self.params[k])!r}")
        lines += [f"tau = {self.tau!r}", f"p1 = {self.p1}", f"p2 = {self.p2}",
                  f"eta = {self.eta!r}"]
        if self.inputs is not None:
            if all(len(u) == 1 for u in self.inputs):
                lines.append("inputs = " + ", ".join(repr(float(u[0])) for u in self.inputs))
            else:
                lines.append("inputs = " + "; ".join(" ".join(repr(float(x)) for x in u)
                                                     for u in self.inputs))
        if self.input_range is not None:
            lines.append(f"inputs.range = {vec(self.input_range)}")
        if self.input_mu is not None:
            lines.append(f"inputs.mu = {self.input_mu!r}")
        lines += [f"psi_l = {vec(self.psi_l)}", f"psi_u = {vec(self.psi_u)}"]
        if self.domain_lower is not None:
            lines.append(f"domain.lower = {vec(self.domain_lower)}")
        if self.domain_upper is not None:
            lines.append(f"domain.upper = {vec(self.domain_upper)}")
        lines += [f"asf.psi = {self.asf_psi!r}", f"asf.epsilon_free = {opt(self.epsilon_free)}",
                  f"asf.delta_free = {opt(self.delta_free)}"]
        lines.append(f"integrator.h_max = {opt(self.h_max)}")
        lines += [f"run.seed = {self.seed}", f"run.horizon = {self.horizon}",
                  f"run.trials = {self.trials}"]
        if self.x0 is not None:
            lines.append(f"run.x0 = {vec(self.x0)}")
        lines.append(f"deflate = {'true' if self.deflate else 'false'}")
        return "\n".join(lines) + "\n"


def _floats(v: str) -> tuple:
    try:
        return tuple(float(t) for t in v.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"expected numbers, got {v!r}") from None


def _scalar(v: str, kind=float):
    try:
        return kind(v)
    except ValueError:
        raise ConfigError(f"expected {kind.__name__}, got {v!r}") from None


def _auto(v: str):
    return None if v.strip().lower() == "auto" else _scalar(v)


def _bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("true", "yes", "1", "on"):
        return True
    if s in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {v!r}")


def _input_list(v: str) -> tuple:
    if ";" in v:
        return tuple(_floats(part) for part in v.split(";") if part.strip())
    return tuple((x,) for x in _floats(v))


_SIMPLE = {
    "name": ("name", str), "tau": ("tau", float), "p1": ("p1", int), "p2": ("p2", int),
    "eta": ("eta", float), "psi_l": ("psi_l", _floats), "psi_u": ("psi_u", _floats),
    "inputs": ("inputs", _input_list), "inputs.range": ("input_range", _floats),
    "inputs.mu": ("input_mu", float), "domain.lower": ("domain_lower", _floats),
    "domain.upper": ("domain_upper", _floats), "asf.psi": ("asf_psi", float),
    "asf.epsilon_free": ("epsilon_free", _auto), "asf.delta_free": ("delta_free", _auto),
    "integrator.h_max": ("h_max", _auto), "run.seed": ("seed", int),
    "run.horizon": ("horizon", int), "run.trials": ("trials", int),
    "run.x0": ("x0", _floats), "deflate": ("deflate", _bool),
}


def parse_config(text: str) -> RunConfig:
    """Parse the ``key = value`` format into a :class:`RunConfig`.

    Raises:
        ConfigError: unknown keys, malformed values, missing required keys.
    """
    kw = {"params": {}}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.count(".") > 1:
            raise ConfigError(f"line {lineno}: keys nest at most one level ({key!r})")
        if key == "model":
            kw["model"] = value
        elif key.startswith("model."):
            kw["params"][key[6:]] = _scalar(value)
        elif key in _SIMPLE:
            attr, conv = _SIMPLE[key]
            kw[attr] = value if conv is str else (conv(value) if conv in (_floats, _auto, _bool, _input_list) else _scalar(value, conv))
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    required = ["model", "tau", "p1", "p2", "eta", "psi_l", "psi_u"]
    missing = [k for k in required if k not in kw]
    if missing:
        raise ConfigError(f"missing keys: {', '.join(missing)}")
    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def config_fields() -> list[str]:
    return [f.name for f in fields(RunConfig)]


# ---------------------------------------------------------------------------
# storage-delivery case study
# ---------------------------------------------------------------------------

#: Precision values reported for the three storage-delivery cases.
PAPER_EPS_HAT = {"case1": 0.25, "case2": 0.75, "case3": 0.65}

_CASES = {
    1: dict(params={"a": -0.2, "b": 0.9, "c": 10.0, "d": 10.0}, p1=1, p2=5,
            psi_l=(25.0,), psi_u=(50.0,)),
    2: dict(params={"a": -0.3, "b": 1.01, "c": 15.0, "d": 15.0}, p1=5, p2=7,
            psi_l=(50.0,), psi_u=(75.0,)),
    3: dict(params={"a": 0.2, "b": 0.85, "c": 15.0, "d": 15.0}, p1=1, p2=2,
            psi_l=(75.0,), psi_u=(100.0,)),
}


def case_config(case: int, caption_params: bool = False, **overrides) -> RunConfig:
    """Built-in storage-delivery case (1, 2 or 3) with ``tau=0.2, eta=0.01, psi=0.99``.

    ``caption_params`` switches case 1 to ``c = d = 5`` (the figure-caption
    variant); other cases are unaffected.
    """
    if case not in _CASES:
        raise ConfigError(f"unknown case {case}; choose 1, 2 or 3")
    spec = dict(_CASES[case])
    params = dict(spec.pop("params"))
    if caption_params and case == 1:
        params.update(c=5.0, d=5.0)
    cfg = RunConfig(model="storage-delivery", params=params, tau=0.2, eta=0.01,
                    inputs=((-1.0,), (0.0,), (1.0,)), asf_psi=0.99, seed=0, horizon=200,
                    trials=10, deflate=True, name=f"case{case}", **spec)
    return replace(cfg, **overrides) if overrides else cfg
