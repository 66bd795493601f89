"""Hot loops of abstraction and synthesis, in numba and pure-numpy flavours.

Both backends return identical arrays; the numba one is picked unless
``IMPULSYM_DISABLE_NUMBA`` is set or a caller passes ``backend="numpy"``.

Successor storage is CSR-like: for ``M`` query rows, ``offsets`` has ``M + 1``
entries and ``succ[offsets[r]:offsets[r + 1]]`` are the sorted dense grid
positions hit by row ``r``. ``escape[r]`` is set when some lattice point in
the ball is not a domain point.
"""

import numpy as np

from ._accel import njit, resolve_backend

# ---------------------------------------------------------------------------
# ball successors
# ---------------------------------------------------------------------------


@njit
def _lookup_one(rel, shape, keys):
    n = rel.shape[0]
    key = 0
    for d in range(n):
        if rel[d] < 0 or rel[d] >= shape[d]:
            return -1
        key = key * shape[d] + rel[d]
    pos = np.searchsorted(keys, key)
    if pos < keys.shape[0] and keys[pos] == key:
        return pos
    return -1


@njit
def _ball_csr_nb(centers, radius, eta, slack, kmin, shape, keys, per_row):
    m_rows, n = centers.shape
    buf = np.empty(m_rows * per_row, dtype=np.int64)
    counts = np.zeros(m_rows, dtype=np.int64)
    escape = np.zeros(m_rows, dtype=np.bool_)
    lo = np.empty(n, dtype=np.int64)
    hi = np.empty(n, dtype=np.int64)
    cur = np.empty(n, dtype=np.int64)
    rel = np.empty(n, dtype=np.int64)
    for r in range(m_rows):
        finite = True
        empty = False
        for d in range(n):
            c = centers[r, d]
            if not np.isfinite(c):
                finite = False
                break
            lo[d] = np.int64(np.ceil((c - radius) / eta - slack))
            hi[d] = np.int64(np.floor((c + radius) / eta + slack))
            if hi[d] < lo[d]:
                empty = True
        if not finite:
            escape[r] = True
            continue
        if empty:
            continue
        for d in range(n):
            cur[d] = lo[d]
        base = r * per_row
        cnt = 0
        while True:
            for d in range(n):
                rel[d] = cur[d] - kmin[d]
            pos = _lookup_one(rel, shape, keys)
            if pos >= 0:
                buf[base + cnt] = pos
                cnt += 1
            else:
                escape[r] = True
            # odometer, last coordinate fastest -> lexicographic order
            d = n - 1
            while d >= 0:
                cur[d] += 1
                if cur[d] <= hi[d]:
                    break
                cur[d] = lo[d]
                d -= 1
            if d < 0:
                break
        counts[r] = cnt
    offsets = np.zeros(m_rows + 1, dtype=np.int64)
    for r in range(m_rows):
        offsets[r + 1] = offsets[r] + counts[r]
    succ = np.empty(offsets[m_rows], dtype=np.int64)
    for r in range(m_rows):
        base = r * per_row
        for t in range(counts[r]):
            succ[offsets[r] + t] = buf[base + t]
    return offsets, succ, escape


def _ball_csr_np(centers, radius, eta, slack, kmin, shape, keys, per_side):
    m_rows, n = centers.shape
    finite = np.all(np.isfinite(centers), axis=1)
    safe_centers = np.where(finite[:, None], centers, 0.0)
    lo = np.ceil((safe_centers - radius) / eta - slack).astype(np.int64)
    hi = np.floor((safe_centers + radius) / eta + slack).astype(np.int64)
    combos = np.indices((per_side,) * n).reshape(n, -1).T  # lexicographic
    cand = lo[:, None, :] + combos[None, :, :]
    valid = np.all(cand <= hi[:, None, :], axis=2) & finite[:, None]
    rel = cand - kmin
    inbox = np.all((rel >= 0) & (rel < shape), axis=2)
    flat_key = np.zeros(rel.shape[:2], dtype=np.int64)
    for d in range(n):
        flat_key = flat_key * shape[d] + np.clip(rel[..., d], 0, shape[d] - 1)
    pos = np.searchsorted(keys, flat_key)
    pos = np.minimum(pos, len(keys) - 1)
    hit = inbox & (keys[pos] == flat_key)
    take = valid & hit
    escape = np.any(valid & ~hit, axis=1) | ~finite
    counts = take.sum(axis=1)
    offsets = np.zeros(m_rows + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    succ = pos[take].astype(np.int64)
    return offsets, succ, escape


def ball_successors(centers, radius, eta, kmin, shape, keys, slack, backend=None):
    """CSR successor runs of the closed infinity-norm balls around ``centers``."""
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    if centers.ndim != 2:
        raise ValueError("centers must be (rows, dim)")
    per_side = int(np.floor(2.0 * radius / eta + 2.0 * slack)) + 2
    kmin = np.ascontiguousarray(kmin, dtype=np.int64)
    shape = np.ascontiguousarray(shape, dtype=np.int64)
    keys = np.ascontiguousarray(keys, dtype=np.int64)
    if resolve_backend(backend) == "numba":
        per_row = per_side ** centers.shape[1]
        return _ball_csr_nb(centers, float(radius), float(eta), float(slack),
                            kmin, shape, keys, per_row)
    return _ball_csr_np(centers, float(radius), float(eta), float(slack),
                        kmin, shape, keys, per_side)


# ---------------------------------------------------------------------------
# safety fixed point
# ---------------------------------------------------------------------------


@njit
def _safety_nb(safe, n_modes, m, p1, p2, foff, fsucc, fesc, joff, jsucc, jesc):
    # Gauss-Seidel sweeps; every input is evaluated so that the final
    # (unchanged) sweep leaves ``enabled`` consistent with ``Z``.  Kept as one
    # flat loop: helper calls returning tuples were ~50x slower here.
    n_pts = safe.shape[0]
    Z = np.zeros((n_pts, n_modes), dtype=np.uint8)
    for i in range(n_pts):
        if safe[i]:
            for l in range(n_modes):
                Z[i, l] = 1
    enabled = np.zeros((n_pts, n_modes, m), dtype=np.bool_)
    sweeps = 0
    changed = True
    while changed:
        changed = False
        sweeps += 1
        for i in range(n_pts):
            for l in range(n_modes):
                if Z[i, l] == 0:
                    continue
                win = False
                for j in range(m):
                    k = i * m + j
                    ok = True
                    ne = False
                    if l < p2:
                        if fesc[k]:
                            ok = False
                        else:
                            for t in range(foff[k], foff[k + 1]):
                                if Z[fsucc[t], l + 1] == 0:
                                    ok = False
                                    break
                            ne = foff[k + 1] > foff[k]
                    if ok and l >= p1:
                        if jesc[k]:
                            ok = False
                        else:
                            for t in range(joff[k], joff[k + 1]):
                                if Z[jsucc[t], 0] == 0:
                                    ok = False
                                    break
                            ne = ne or joff[k + 1] > joff[k]
                    good = ok and ne
                    enabled[i, l, j] = good
                    win = win or good
                if not win:
                    Z[i, l] = 0
                    changed = True
    return Z.astype(np.bool_), enabled, sweeps


def _segment_all(values, offsets):
    """Row-wise ``all`` over CSR segments; empty segments give True."""
    n_rows = len(offsets) - 1
    out = np.ones((n_rows,) + values.shape[1:], dtype=bool)
    lengths = np.diff(offsets)
    nonempty = lengths > 0
    if values.shape[0]:
        red = np.logical_and.reduceat(values, offsets[:-1][nonempty], axis=0)
        out[nonempty] = red
    return out


def _good_np(Z, m, p1, p2, foff, fsucc, fesc, joff, jsucc, jesc):
    n_pts, n_modes = Z.shape
    f_all = _segment_all(Z[fsucc], foff).reshape(n_pts, m, n_modes)
    j_all = _segment_all(Z[jsucc, 0], joff).reshape(n_pts, m)
    f_ne = (np.diff(foff) > 0).reshape(n_pts, m)
    j_ne = (np.diff(joff) > 0).reshape(n_pts, m)
    f_ok = f_all & ~fesc.reshape(n_pts, m)[:, :, None]
    j_ok = j_all & ~jesc.reshape(n_pts, m)
    good = np.zeros((n_pts, n_modes, m), dtype=bool)
    for l in range(n_modes):
        ok = np.ones((n_pts, m), dtype=bool)
        ne = np.zeros((n_pts, m), dtype=bool)
        if l < p2:
            ok &= f_ok[:, :, l + 1]
            ne |= f_ne
        if l >= p1:
            ok &= j_ok
            ne |= j_ne
        good[:, l, :] = ok & ne
    return good


def _safety_np(safe, n_modes, m, p1, p2, foff, fsucc, fesc, joff, jsucc, jesc):
    Z = np.repeat(safe[:, None], n_modes, axis=1)
    sweeps = 0
    while True:
        sweeps += 1
        good = _good_np(Z, m, p1, p2, foff, fsucc, fesc, joff, jsucc, jesc)
        Z_next = Z & good.any(axis=2)
        if np.array_equal(Z_next, Z):
            break
        Z = Z_next
    enabled = good & Z[:, :, None]
    return Z, enabled, sweeps


def safety_fixed_point(safe, n_modes, n_inputs, p1, p2, flow, jump, backend=None):
    """Maximal controlled-invariant subset of ``safe`` x modes.

    Args:
        safe: ``(P,)`` bool, grid points inside the (deflated) safe set.
        n_modes: ``p2 + 1``.
        n_inputs: number of abstract inputs ``m``.
        flow, jump: ``(offsets, succ, escape)`` triples with ``P * m`` rows,
            row ``i * m + j`` for grid point ``i`` and input ``j``.

    Returns:
        ``(Z, enabled, sweeps)`` with ``Z`` of shape ``(P, n_modes)`` and
        ``enabled`` of shape ``(P, n_modes, m)``.
    """
    safe = np.ascontiguousarray(safe, dtype=np.bool_)
    foff, fsucc, fesc = (np.ascontiguousarray(a) for a in flow)
    joff, jsucc, jesc = (np.ascontiguousarray(a) for a in jump)
    args = (safe, int(n_modes), int(n_inputs), int(p1), int(p2),
            foff, fsucc, fesc, joff, jsucc, jesc)
    if resolve_backend(backend) == "numba":
        Z, enabled, sweeps = _safety_nb(*args)
        return Z, enabled, int(sweeps)
    return _safety_np(*args)
