"""Brute-force reference implementations used as test oracles."""

import numpy as np

from impulsym.dynamics import flow_map, jump_map


def naive_successors(model):
    """All-pairs eta-ball test against every integer lattice point near the domain.

    Returns ``{(scenario, point, input): (successor positions, escapes)}``.
    """
    sysm, eta = model.system, model.eta
    pts = model.points
    real = pts * eta
    noms = {}
    for i, x in enumerate(real):
        for j, u in enumerate(sysm.inputs):
            noms[("F", i, j)] = flow_map(sysm, x, u)
            noms[("J", i, j)] = jump_map(sysm, x, u)
    allnom = np.array(list(noms.values())) / eta
    lo = np.minimum(pts.min(axis=0), np.floor(allnom.min(axis=0))) - 3
    hi = np.maximum(pts.max(axis=0), np.ceil(allnom.max(axis=0))) + 3
    lattice = np.stack(np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(lo, hi)],
                                   indexing="ij"), -1).reshape(-1, sysm.dim).astype(np.int64)
    in_domain = {tuple(p) for p in pts}
    out = {}
    for (scen, i, j), nom in noms.items():
        near = lattice[np.max(np.abs(lattice * eta - nom), axis=1) <= eta * (1 + 1e-9)]
        succ = sorted(int(np.flatnonzero((pts == q).all(axis=1))[0])
                      for q in near if tuple(q) in in_domain)
        esc = any(tuple(q) not in in_domain for q in near)
        out[(scen, i, j)] = (succ, esc)
    return out


def naive_safety(model, safe_points):
    """Set-based maximal fixed point over explicit (point, mode) states.

    An input is usable at ``(i, l)`` when every enabled scenario stays in
    the domain, the union of successors is nonempty and contained in ``Z``.
    Returns ``{(i, l): sorted usable inputs}``.
    """
    oracle = naive_successors(model)
    p1, p2 = model.p1, model.p2
    Z = {(i, l) for i in range(model.n_points) if safe_points[i] for l in range(p2 + 1)}

    def usable(i, l, j, Z):
        succ, esc = [], False
        if l <= p2 - 1:
            s, e = oracle[("F", i, j)]
            succ += [(k, l + 1) for k in s]
            esc |= e
        if l >= p1:
            s, e = oracle[("J", i, j)]
            succ += [(k, 0) for k in s]
            esc |= e
        return bool(succ) and not esc and all(q in Z for q in succ)

    while True:
        nxt = {q for q in Z if any(usable(*q, j, Z) for j in range(model.n_inputs))}
        if nxt == Z:
            break
        Z = nxt
    return {q: [j for j in range(model.n_inputs) if usable(*q, j, Z)] for q in sorted(Z)}
