"""Compare the numba and pure-numpy kernels on the storage-delivery cases.

    python benchmarks/bench_kernels.py [--eta 0.01 0.002] [--repeat 5]

Times the eta-ball successor construction and the safety fixed point per
backend (best of ``--repeat`` runs, after one warm-up call that also
triggers numba compilation) and checks that both backends agree.
"""

import argparse
import time

import numpy as np

from impulsym import kernels
from impulsym._accel import HAVE_NUMBA
from impulsym.abstraction import build_symbolic
from impulsym.config import case_config
from impulsym.dynamics import flow_map
from impulsym.geometry import SLACK, GridDomain
from impulsym.synthesis import SafetySpec


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_case(case, eta, repeat):
    cfg = case_config(case, eta=eta)
    system = cfg.system()
    domain = GridDomain(system.region, eta)
    pts = domain.decode(domain.points)
    m = system.n_inputs
    x = np.repeat(pts, m, axis=0)
    u = np.tile(system.inputs, (len(pts), 1))
    centers = flow_map(system, x, u)
    kmin, shape, keys = domain._index
    model = build_symbolic(system, eta, domain=domain)
    safe = SafetySpec(cfg.safe_box(), 0.25).safe_points(model)
    args = (safe, model.n_modes, m, model.p1, model.p2, model.flow.as_tuple(),
            model.jump.as_tuple())

    rows = []
    results = {}
    for backend in ("numba", "numpy"):
        t_ball, ball = best_of(lambda: kernels.ball_successors(
            centers, eta, eta, kmin, shape, keys, SLACK, backend=backend), repeat)
        t_fix, fix = best_of(lambda: kernels.safety_fixed_point(*args, backend=backend), repeat)
        results[backend] = (ball, fix[:2])
        rows.append((backend, t_ball, t_fix, fix[2]))
    agree = all(np.array_equal(p, q) for p, q in zip(results["numba"][0], results["numpy"][0]))
    agree &= all(np.array_equal(p, q) for p, q in zip(results["numba"][1], results["numpy"][1]))
    return model.n_states, rows, agree


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eta", type=float, nargs="+", default=[0.01, 0.002])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'case':<5} {'eta':>6} {'states':>8} {'backend':<7} {'ball [ms]':>10} "
          f"{'fixpoint [ms]':>14} {'sweeps':>6}  agree")
    for eta in args.eta:
        for case in (1, 2, 3):
            n, rows, agree = bench_case(case, eta, args.repeat)
            for backend, tb, tf, sweeps in rows:
                print(f"{case:<5} {eta:>6g} {n:>8d} {backend:<7} {tb * 1e3:>10.2f} "
                      f"{tf * 1e3:>14.2f} {sweeps:>6d}  {agree}")


if __name__ == "__main__":
    main()
