"""Command-line entry point.

Subcommands ``certify``, ``abstract``, ``synthesize``, ``simulate`` and
``casestudy``. Exit codes: 0 success, 1 a closed-loop guarantee check failed,
2 configuration error (including an initial state outside the winning
domain), 3 dwell or free-parameter infeasibility, 4 empty winning domain.

Trajectory CSV schema (one row per trial and sampling instant, sorted by
``(trial, k)``)::

    trial,k,t,x_before,x_after,u,jumped,u_jump

``x_before`` is ``x(k*tau-)``, ``x_after`` is ``x(k*tau)`` after a possible
impulse, ``u`` the input held on the next period, ``jumped`` 1 or 0, and
``u_jump`` the input fed to the jump map (empty when no impulse). Vector
values are space-separated; floats are written with ``repr``.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from .abstraction import SymbolicModel, build_symbolic, check_nonblocking, dump_model
from .certificates import (AsfParameters, MaxFormParameters, StabilityCertificate, case_tag,
                           check_dwell, derive_asf, derive_reverse_asf, dwell_margins,
                           optimize_precision, to_max_form, verify_certificate)
from .config import PAPER_EPS_HAT, RunConfig, case_config, load_config
from .errors import (CaseExcluded, ConfigError, DomainTooLarge, DwellViolated, EmptyDomain,
                     FreeParamInfeasible, OutsideDomain)
from .synthesis import (SafetyController, SafetySpec, closed_loop, invariance_violations,
                        read_controller, synthesize_safety, write_controller)

EXIT_OK = 0
EXIT_GUARANTEE = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_EMPTY = 4

INTER_SAMPLE_NOTE = ("note: safety is guaranteed at sampling instants only; "
                     "excursions of the continuous flow between samples are not checked")
CSV_COLUMNS = ("trial", "k", "t", "x_before", "x_after", "u", "jumped", "u_jump")


@dataclass
class CaseResult:
    name: str
    regime: str
    sigma_tilde: float
    eps_tilde: float
    eps_tilde_reverse: float
    lambda_f: float
    psi: float
    epsilon_free: float | None
    delta_free: float | None
    eps_hat: float
    eps_hat_paper: float | None
    domain_size: int
    n_states: int
    runtime: float = 0.0

    def lines(self) -> list[str]:
        """``key = value`` lines; runtime is left out to keep files reproducible."""
        def fmt(v):
            return "none" if v is None else repr(v)

        return [f"name = {self.name}", f"regime = {self.regime}",
                f"sigma_tilde = {self.sigma_tilde!r}", f"eps_tilde = {self.eps_tilde!r}",
                f"eps_tilde_reverse = {self.eps_tilde_reverse!r}",
                f"lambda_f = {self.lambda_f!r}", f"psi = {self.psi!r}",
                f"epsilon_free = {fmt(self.epsilon_free)}", f"delta_free = {fmt(self.delta_free)}",
                f"eps_hat = {self.eps_hat!r}", f"eps_hat_paper = {fmt(self.eps_hat_paper)}",
                f"controller_states = {self.domain_size}", f"abstract_states = {self.n_states}"]


@dataclass
class Pipeline:
    config: RunConfig
    cert: StabilityCertificate
    asf: AsfParameters
    maxform: MaxFormParameters
    model: SymbolicModel | None = None
    controller: SafetyController | None = None


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------


def _write(path, text: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def precision(cfg: RunConfig, cert: StabilityCertificate):
    """ASF parameters and output precision for ``cfg``.

    Fixed free weights are used as given; ``auto`` weights are optimized
    at the configured ``psi``.
    """
    tag = case_tag(cert.kappa_c, cert.kappa_d)
    fixed = (tag == "DD" or (tag == "FD" and cfg.epsilon_free is not None)
             or (tag == "DF" and cfg.delta_free is not None))
    if fixed:
        asf = derive_asf(cert, cfg.tau, cfg.p1, cfg.p2, cfg.eta, cfg.epsilon_free, cfg.delta_free)
        return asf, to_max_form(asf, cfg.asf_psi)
    return optimize_precision(cert, cfg.tau, cfg.p1, cfg.p2, cfg.eta, psi=cfg.asf_psi)


def certify(cfg: RunConfig, seed: int | None = None) -> tuple[bool, list[str]]:
    """Falsification check of the certificate plus the dwell condition."""
    system = cfg.system()
    cert = cfg.certificate()
    tag = case_tag(cert.kappa_c, cert.kappa_d)
    report = verify_certificate(system, cert, seed=cfg.seed if seed is None else seed)
    m1, m2 = dwell_margins(cert.kappa_c, cert.kappa_d, cfg.tau, cfg.p1, cfg.p2)
    dwell = check_dwell(cert, cfg.tau, cfg.p1, cfg.p2)
    lines = [f"regime = {tag}", f"kappa_c = {cert.kappa_c!r}", f"kappa_d = {cert.kappa_d!r}",
             f"dwell_margin_p1 = {m1!r}", f"dwell_margin_p2 = {m2!r}",
             f"dwell_ok = {str(dwell).lower()}", f"samples = {report.samples}"]
    for k in sorted(report.max_violation):
        lines.append(f"violation.{k} = {report.max_violation[k]!r}")
    lines.append(f"certificate_ok = {str(report.passed).lower()}")
    return dwell and report.passed, lines


def synthesize(cfg: RunConfig, backend=None) -> tuple[Pipeline, CaseResult]:
    """Certificate -> precision -> abstraction -> safety synthesis."""
    t0 = time.perf_counter()
    cert = cfg.certificate()
    case_tag(cert.kappa_c, cert.kappa_d)
    if not check_dwell(cert, cfg.tau, cfg.p1, cfg.p2):
        m = dwell_margins(cert.kappa_c, cert.kappa_d, cfg.tau, cfg.p1, cfg.p2)
        raise DwellViolated(f"dwell inequality fails: margins {m}")
    asf, mf = precision(cfg, cert)
    system = cfg.system()
    model = build_symbolic(system, cfg.eta, backend=backend)
    deflation = mf.eps_hat if cfg.deflate else 0.0
    try:
        spec = SafetySpec(cfg.safe_box(), deflation)
        ctrl = synthesize_safety(model, spec, eps_hat=mf.eps_hat, backend=backend)
    except ValueError as exc:
        raise EmptyDomain(str(exc)) from None
    runtime = time.perf_counter() - t0
    result = CaseResult(
        name=cfg.name or cfg.model, regime=asf.case_tag, sigma_tilde=asf.sigma_tilde,
        eps_tilde=asf.eps_tilde,
        eps_tilde_reverse=derive_reverse_asf(asf, cert, cfg.input_quantization()).eps_tilde,
        lambda_f=asf.lambda_f, psi=mf.psi, epsilon_free=asf.epsilon_free,
        delta_free=asf.delta_free, eps_hat=mf.eps_hat, eps_hat_paper=PAPER_EPS_HAT.get(cfg.name),
        domain_size=len(ctrl), n_states=model.n_states, runtime=runtime,
    )
    return Pipeline(cfg, cert, asf, mf, model, ctrl), result


def check_controller_header(cfg: RunConfig, ctrl: SafetyController, eps_hat: float) -> None:
    h = ctrl.header
    problems = []
    for key, want in (("dim", cfg.dim), ("p1", cfg.p1), ("p2", cfg.p2)):
        if int(h[key]) != want:
            problems.append(f"{key}: controller {h[key]} vs config {want}")
    for key, want in (("eta", cfg.eta), ("tau", cfg.tau), ("eps_hat", eps_hat)):
        if not math.isclose(float(h[key]), want, rel_tol=1e-12, abs_tol=1e-15):
            problems.append(f"{key}: controller {h[key]!r} vs config {want!r}")
    want_defl = eps_hat if cfg.deflate else 0.0
    if not math.isclose(float(h["deflation"]), want_defl, rel_tol=1e-12, abs_tol=1e-15):
        problems.append(f"deflation: controller {h['deflation']!r} vs config {want_defl!r}")
    inputs = cfg.input_values()
    if ctrl.inputs.shape != inputs.shape or not np.array_equal(ctrl.inputs, inputs):
        problems.append("input lists differ")
    if problems:
        raise ConfigError("controller does not match the configuration: " + "; ".join(problems))


def _cell(v) -> str:
    v = np.atleast_1d(v)
    if np.all(np.isnan(v)):
        return ""
    return " ".join(repr(float(x)) for x in v)


def simulate_trials(pipe: Pipeline, x0=None) -> tuple[str, dict]:
    """Closed-loop trials; returns CSV text and aggregate statistics."""
    cfg = pipe.config
    x0 = cfg.initial_state() if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    rows = [",".join(CSV_COLUMNS)]
    box = cfg.safe_box()
    stats = {"trials": cfg.trials, "horizon": cfg.horizon, "samples": 0, "outside_safe": 0,
             "max_deviation": 0.0, "relation_violations": 0, "jumps": 0}
    for trial in range(cfg.trials):
        traj, rep = closed_loop(pipe.model, pipe.controller, pipe.cert, pipe.asf, pipe.maxform,
                                x0, cfg.horizon, seed=[cfg.seed, trial], strict=False)
        xs = np.concatenate([traj.x_before, traj.x_after])
        stats["samples"] += len(xs)
        stats["outside_safe"] += int(np.sum(~box.contains(xs)))
        stats["max_deviation"] = max(stats["max_deviation"], rep.max_deviation)
        stats["relation_violations"] += rep.violations
        stats["jumps"] += int(traj.jumped.sum())
        for k in range(len(traj)):
            rows.append(",".join([str(trial), str(k), repr(float(traj.t[k])),
                                  _cell(traj.x_before[k]), _cell(traj.x_after[k]),
                                  _cell(traj.u[k]), "1" if traj.jumped[k] else "0",
                                  _cell(traj.u_jump[k])]))
    return "\n".join(rows) + "\n", stats


def _load(args) -> RunConfig:
    if args.config and args.case:
        raise ConfigError("give either --config or --case, not both")
    overrides = {} if args.seed is None else {"seed": args.seed}
    if args.config:
        cfg = load_config(args.config)
        if args.case1_caption_params and cfg.name == "case1":
            cfg = replace(cfg, params={**cfg.params, "c": 5.0, "d": 5.0})
        return replace(cfg, **overrides) if overrides else cfg
    if args.case:
        return case_config(args.case, args.case1_caption_params, **overrides)
    raise ConfigError("give --config PATH or --case N")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_certify(args) -> int:
    cfg = _load(args)
    ok, lines = certify(cfg)
    text = "\n".join(lines) + "\n"
    _write(os.path.join(args.out, "certify.txt"), text)
    print(text, end="")
    if not ok:
        print("certificate or dwell condition failed", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_abstract(args) -> int:
    cfg = _load(args)
    t0 = time.perf_counter()
    model = build_symbolic(cfg.system(), cfg.eta)
    runtime = time.perf_counter() - t0
    nb = check_nonblocking(model)
    lines = [f"grid_points = {model.n_points}", f"modes = {model.n_modes}",
             f"abstract_states = {model.n_states}", f"inputs = {model.n_inputs}",
             f"flow_transitions = {len(model.flow.succ)}",
             f"jump_transitions = {len(model.jump.succ)}",
             f"blocking_states = {len(nb.blocking_states)}",
             f"blocked_pairs = {nb.blocked_pairs}", f"escaping_pairs = {nb.escaping_pairs}"]
    text = "\n".join(lines) + "\n"
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "model.txt"), "w", newline="\n") as fh:
        dump_model(model, fh)
    _write(os.path.join(args.out, "abstract.txt"), text)
    print(text, end="")
    print(f"runtime = {runtime:.3f} s")
    return EXIT_OK


def _emit_synthesis(pipe: Pipeline, result: CaseResult, out: str) -> None:
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "controller.txt"), "w", newline="\n") as fh:
        write_controller(pipe.controller, fh)
    _write(os.path.join(out, "summary.txt"), "\n".join(result.lines()) + "\n")


def cmd_synthesize(args) -> int:
    cfg = _load(args)
    pipe, result = synthesize(cfg)
    bad = invariance_violations(pipe.model, pipe.controller)
    if bad:
        raise RuntimeError(f"synthesized domain is not invariant: {bad[:3]}")
    _emit_synthesis(pipe, result, args.out)
    print("\n".join(result.lines()))
    print(f"runtime = {result.runtime:.3f} s")
    print(INTER_SAMPLE_NOTE)
    if pipe.controller.is_empty:
        print("winning domain is empty", file=sys.stderr)
        return EXIT_EMPTY
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load(args)
    if not args.controller:
        raise ConfigError("simulate needs --controller PATH")
    try:
        with open(args.controller) as fh:
            ctrl = read_controller(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read controller {args.controller}: {exc}") from None
    cert = cfg.certificate()
    asf, mf = precision(cfg, cert)
    check_controller_header(cfg, ctrl, mf.eps_hat)
    if ctrl.is_empty:
        print("controller domain is empty", file=sys.stderr)
        return EXIT_EMPTY
    model = build_symbolic(cfg.system(), cfg.eta)
    pipe = Pipeline(cfg, cert, asf, mf, model, ctrl)
    csv, stats = simulate_trials(pipe)
    _write(os.path.join(args.out, "trajectories.csv"), csv)
    for k, v in stats.items():
        print(f"{k} = {v!r}")
    print(INTER_SAMPLE_NOTE)
    if stats["relation_violations"] or stats["outside_safe"]:
        print("closed-loop guarantee check failed", file=sys.stderr)
        return EXIT_GUARANTEE
    return EXIT_OK


def cmd_casestudy(args) -> int:
    results = []
    status = EXIT_OK
    for case in (1, 2, 3):
        overrides = {} if args.seed is None else {"seed": args.seed}
        cfg = case_config(case, args.case1_caption_params, **overrides)
        pipe, result = synthesize(cfg)
        out = os.path.join(args.out, cfg.name)
        _emit_synthesis(pipe, result, out)
        if pipe.controller.is_empty:
            status = max(status, EXIT_EMPTY)
        else:
            csv, stats = simulate_trials(pipe)
            _write(os.path.join(out, "trajectories.csv"), csv)
            if stats["relation_violations"] or stats["outside_safe"]:
                status = status or EXIT_GUARANTEE
        results.append(result)
    header = f"{'case':<6} {'regime':<6} {'sigma~':>10} {'eps~':>10} {'eps_hat':>10} {'paper':>6} {'states':>8}"
    table = [header]
    for r in results:
        table.append(f"{r.name:<6} {r.regime:<6} {r.sigma_tilde:>10.6f} {r.eps_tilde:>10.6f} "
                     f"{r.eps_hat:>10.6f} {r.eps_hat_paper:>6.2f} {r.domain_size:>8d}")
    _write(os.path.join(args.out, "casestudy.txt"), "\n".join(table) + "\n")
    print("\n".join(table))
    for r in results:
        print(f"{r.name}: runtime {r.runtime:.3f} s")
    print(INTER_SAMPLE_NOTE)
    return status


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="run configuration file")
    common.add_argument("--case", type=int, choices=(1, 2, 3), help="built-in storage-delivery case")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=None, help="override run.seed")
    common.add_argument("--case1-caption-params", action="store_true",
                        help="use c = d = 5 for case 1 instead of c = d = 10")
    parser = argparse.ArgumentParser(prog="impulsym",
                                     description="Symbolic models and safety controllers "
                                                 "for impulsive systems.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("certify", parents=[common], help="check the certificate and dwell condition")
    sub.add_parser("abstract", parents=[common], help="build and dump the symbolic model")
    sub.add_parser("synthesize", parents=[common], help="full pipeline, writes controller.txt")
    p = sub.add_parser("simulate", parents=[common], help="closed-loop trials, writes trajectories.csv")
    p.add_argument("--controller", metavar="PATH", help="controller file from synthesize")
    sub.add_parser("casestudy", parents=[common], help="run the three storage-delivery cases")
    return parser


_COMMANDS = {"certify": cmd_certify, "abstract": cmd_abstract, "synthesize": cmd_synthesize,
             "simulate": cmd_simulate, "casestudy": cmd_casestudy}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, OutsideDomain, DomainTooLarge) as exc:
        msg = exc.args[0] if exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (DwellViolated, FreeParamInfeasible, CaseExcluded) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except EmptyDomain as exc:
        print(f"empty: {exc}", file=sys.stderr)
        return EXIT_EMPTY


if __name__ == "__main__":
    sys.exit(main())
