"""Compiled nodal kernels for the nonlinear sweeps.

Every interior equation has the form sum_t w_t ext_a S_{t,a}(u0) = f where
S_{t,a} is continuous, piecewise linear and strictly decreasing in the center
value u0, with breakpoints s_j / 2 (s_j = sum of the two neighbor values in
direction j). Single-term equations are solved exactly; blends by bisection
on a bracket built from the breakpoints.
"""

import numpy as np
from numba import njit

ROLE_PLUS, ROLE_MINUS, ROLE_JUMP, ROLE_FIXED = 0, 1, 2, 3


@njit(cache=True, error_model="numpy")
def _alt_value(u0, s, valid, scale, p, q):
    acc = 0.0
    for j in range(s.shape[0]):
        if not valid[j]:
            continue
        d = (s[j] - 2.0 * u0) * scale[j]
        if d > 0.0:
            acc += p[j] * d
        else:
            acc += q[j] * d
    return acc


@njit(cache=True, error_model="numpy")
def _alt_root(y, s, valid, scale, p, q, guess, bps, ids):
    """Exact solution of S(u0) = y for one alternative (piecewise linear, decreasing).

    Tries the linear piece selected at ``guess`` first; falls back to a scan
    over the sorted breakpoints. ``bps`` and ``ids`` are scratch arrays.
    """
    alpha = 0.0
    beta = 0.0
    for j in range(s.shape[0]):
        if valid[j]:
            c = p[j] if s[j] > 2.0 * guess else q[j]
            alpha += c * scale[j] * s[j]
            beta += 2.0 * c * scale[j]
    if beta > 0.0:
        cand = (alpha - y) / beta
        ok = True
        for j in range(s.shape[0]):
            if valid[j] and p[j] != q[j]:
                if (s[j] > 2.0 * guess) != (s[j] > 2.0 * cand) and s[j] != 2.0 * cand:
                    ok = False
                    break
        if ok:
            return cand
    k = 0
    alpha = 0.0
    beta = 0.0
    for j in range(s.shape[0]):
        if valid[j] and (p[j] != 0.0 or q[j] != 0.0):
            b = 0.5 * s[j]
            r = k
            while r > 0 and bps[r - 1] > b:
                bps[r] = bps[r - 1]
                ids[r] = ids[r - 1]
                r -= 1
            bps[r] = b
            ids[r] = j
            k += 1
            # left of every breakpoint all D_j > 0: coefficients p
            alpha += p[j] * scale[j] * s[j]
            beta += 2.0 * p[j] * scale[j]
    if k == 0:
        return np.nan
    for r in range(k):
        # S is linear left of bps[r]; stop once S(bps[r]) <= y
        if alpha - beta * bps[r] <= y and beta > 0.0:
            return (alpha - y) / beta
        j = ids[r]
        alpha += (q[j] - p[j]) * scale[j] * s[j]
        beta += 2.0 * (q[j] - p[j]) * scale[j]
    if beta > 0.0:
        return (alpha - y) / beta
    return np.nan


@njit(cache=True, error_model="numpy")
def _node_sums(i, u, nbr_p, nbr_m, shift_p, shift_m, s, valid):
    for j in range(nbr_p.shape[1]):
        a = nbr_p[i, j]
        b = nbr_m[i, j]
        if a >= 0 and b >= 0:
            valid[j] = True
            s[j] = u[a] + shift_p[i, j] + u[b] + shift_m[i, j]
        else:
            valid[j] = False
            s[j] = 0.0


@njit(cache=True, error_model="numpy")
def _node_value(u0, side, i, s, valid, scale, term_kind, n_alt, alt_p, alt_q, alt_ok, term_w):
    total = 0.0
    for t in range(term_kind.shape[1]):
        w = term_w[i, t]
        if w == 0.0:
            continue
        is_min = term_kind[side, t] == 0
        ext = np.inf if is_min else -np.inf
        for a in range(n_alt[side, t]):
            if not alt_ok[i, t, a]:
                continue
            v = _alt_value(u0, s, valid, scale, alt_p[side, t, a], alt_q[side, t, a])
            if is_min:
                if v < ext:
                    ext = v
            elif v > ext:
                ext = v
        total += w * ext
    return total


@njit(cache=True, error_model="numpy")
def _node_root(side, i, f, s, valid, scale, term_kind, n_alt, alt_p, alt_q, alt_ok, term_w, guess, bps, ids):
    active = 0
    t0 = 0
    for t in range(term_kind.shape[1]):
        if term_w[i, t] != 0.0:
            active += 1
            t0 = t
    if active == 1:
        w = term_w[i, t0]
        is_min = term_kind[side, t0] == 0
        best = np.inf if is_min else -np.inf
        for a in range(n_alt[side, t0]):
            if not alt_ok[i, t0, a]:
                continue
            r = _alt_root(f / w, s, valid, scale, alt_p[side, t0, a], alt_q[side, t0, a], guess, bps, ids)
            if is_min:
                if r < best:
                    best = r
            elif r > best:
                best = r
        return best
    # blend: bracket then bisect
    bmin = np.inf
    bmax = -np.inf
    cmin = np.inf
    for j in range(s.shape[0]):
        if valid[j]:
            bmin = min(bmin, 0.5 * s[j])
            bmax = max(bmax, 0.5 * s[j])
    for t in range(term_kind.shape[1]):
        for a in range(n_alt[side, t]):
            for j in range(s.shape[0]):
                c = min(alt_p[side, t, a, j], alt_q[side, t, a, j])
                if c > 0.0 and valid[j]:
                    cmin = min(cmin, c * scale[j])
    step = abs(f) / (2.0 * cmin) + 1e-300 if cmin < np.inf else 1.0
    lo = bmin - step - 1e-12 * (1.0 + abs(bmin))
    hi = bmax + step + 1e-12 * (1.0 + abs(bmax))
    while _node_value(lo, side, i, s, valid, scale, term_kind, n_alt, alt_p, alt_q, alt_ok, term_w) < f:
        lo -= 2.0 * (hi - lo)
    while _node_value(hi, side, i, s, valid, scale, term_kind, n_alt, alt_p, alt_q, alt_ok, term_w) > f:
        hi += 2.0 * (hi - lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _node_value(mid, side, i, s, valid, scale, term_kind, n_alt, alt_p, alt_q, alt_ok, term_w) > f:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@njit(cache=True, error_model="numpy")
def _jump_update(i, u, diag, indptr, indices, data, const):
    acc = const[i]
    for k in range(indptr[i], indptr[i + 1]):
        acc += data[k] * u[indices[k]]
    return -acc / diag[i]


@njit(cache=True, error_model="numpy")
def sweep(u, order, roles, rhs, nbr_p, nbr_m, shift_p, shift_m, scale, term_kind, n_alt,
          alt_p, alt_q, alt_ok, term_w, jdiag, jptr, jidx, jdat, jconst, omega):
    """One in-place Gauss-Seidel pass in ``order``; returns max |update|."""
    m = nbr_p.shape[1]
    s = np.empty(m)
    valid = np.empty(m, dtype=np.bool_)
    bps = np.empty(m)
    ids = np.empty(m, dtype=np.int64)
    delta = 0.0
    for i in order:
        role = roles[i]
        if role == ROLE_FIXED:
            continue
        if role == ROLE_JUMP:
            new = _jump_update(i, u, jdiag, jptr, jidx, jdat, jconst)
        else:
            _node_sums(i, u, nbr_p, nbr_m, shift_p, shift_m, s, valid)
            new = _node_root(role, i, rhs[i], s, valid, scale, term_kind, n_alt, alt_p, alt_q, alt_ok, term_w,
                             u[i], bps, ids)
        d = omega * (new - u[i])
        u[i] += d
        if abs(d) > delta:
            delta = abs(d)
    return delta


@njit(cache=True, error_model="numpy")
def residual(u, roles, rhs, nbr_p, nbr_m, shift_p, shift_m, scale, term_kind, n_alt,
             alt_p, alt_q, alt_ok, term_w, jdiag, jptr, jidx, jdat, jconst):
    N = u.shape[0]
    m = nbr_p.shape[1]
    s = np.empty(m)
    valid = np.empty(m, dtype=np.bool_)
    out = np.zeros(N)
    for i in range(N):
        role = roles[i]
        if role == ROLE_FIXED:
            out[i] = u[i] - rhs[i]
        elif role == ROLE_JUMP:
            acc = jconst[i] + jdiag[i] * u[i]
            for k in range(jptr[i], jptr[i + 1]):
                acc += jdat[k] * u[jidx[k]]
            out[i] = acc
        else:
            _node_sums(i, u, nbr_p, nbr_m, shift_p, shift_m, s, valid)
            out[i] = _node_value(u[i], role, i, s, valid, scale, term_kind, n_alt, alt_p, alt_q,
                                 alt_ok, term_w) - rhs[i]
    return out
