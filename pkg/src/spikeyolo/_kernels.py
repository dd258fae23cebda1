"""Compiled inner loops for the spike-time solver and the spiking convolution.

Everything here is deterministic: outputs depend only on the numerical
inputs, never on thread count or scheduling.  Kernels release the GIL so the
pure-Python callers can fan row blocks out over a thread pool.

Notation used throughout: z = exp(t / tau) (spike times are manipulated in
the exponential domain for numerical stability), W and Z are the running
sums of weights and of weight * z over the causal prefix.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_JIT = dict(cache=True, nogil=True)

#: Prefixes whose weight sum exceeds the threshold by no more than this are
#: treated as non-firing (the crossing time would be numerically meaningless).
DENOM_GUARD = 1e-12


@njit(inline="always", **_JIT)
def _walk_gather(ts_s, zs_s, order, w2d, f, n, theta, tau):
    """First-threshold-crossing search over time-sorted inputs.

    ``ts_s``/``zs_s`` are sorted ascending with all non-finite entries past
    index ``n``; ``order`` maps sorted positions back to patch positions so
    weights can be fetched from column ``f`` of ``w2d``.  Inputs with equal
    times are admitted as one group before any candidate is tested; the
    acceptance test is kept in product form (no division) so it matches the
    filter-blocked convolution kernel bit for bit.

    Returns ``(t_out, causal_count)``; ``(inf, 0)`` if the unit never fires.
    """
    W = 0.0
    Z = 0.0
    m = 0
    while m < n:
        t_group = ts_s[m]
        z_group = zs_s[m]
        while m < n and ts_s[m] == t_group:
            w = w2d[order[m], f]
            W += w
            Z += w * zs_s[m]
            m += 1
        d = W - theta
        if d > DENOM_GUARD:
            if Z >= z_group * d and (m == n or Z < zs_s[m] * d):
                zc = Z / d
                if np.isfinite(zc):
                    return tau * np.log(zc), m
    return np.inf, 0


@njit(inline="always", **_JIT)
def _walk_uniform(t0, w2d, f, n, theta, tau):
    """Single-tie-group fast path: all ``n`` inputs arrive at ``t0``.

    Accumulates in patch order, which matches the general path because a
    one-group sort is the identity permutation.
    """
    z0 = np.exp(t0 / tau)
    W = 0.0
    Z = 0.0
    for m in range(n):
        w = w2d[m, f]
        W += w
        Z += w * z0
    d = W - theta
    if d > DENOM_GUARD:
        if Z >= z0 * d:
            zc = Z / d
            if np.isfinite(zc):
                return tau * np.log(zc), n
    return np.inf, 0


@njit(**_JIT)
def solve_single(ts, ws2d, theta, tau):
    """Closed-form spike time of one neuron; ``ws2d`` is ``(n, 1)``."""
    k = ts.shape[0]
    if k == 0:
        return np.inf, 0
    tmin = np.inf
    tmax = -np.inf
    n_finite = 0
    for i in range(k):
        v = ts[i]
        if np.isfinite(v):
            n_finite += 1
            if v < tmin:
                tmin = v
            if v > tmax:
                tmax = v
    if n_finite == 0:
        return np.inf, 0
    if n_finite == k and tmin == tmax:
        return _walk_uniform(tmin, ws2d, 0, k, theta, tau)
    order = np.argsort(ts)
    ts_s = ts[order]
    zs_s = np.empty(n_finite, dtype=np.float64)
    for m in range(n_finite):
        zs_s[m] = np.exp(ts_s[m] / tau)
    return _walk_gather(ts_s, zs_s, order, w2d=ws2d, f=0, n=n_finite, theta=theta, tau=tau)


@njit(**_JIT)
def solve_batch(ts2d, ws2d, counts, theta, tau, out_t, out_cc, i0, i1):
    """Row-padded batch of independent neurons (rows ``i0..i1``)."""
    for i in range(i0, i1):
        n = counts[i]
        t, cc = solve_single(ts2d[i, :n], ws2d[i, :n].copy().reshape(n, 1), theta, tau)
        out_t[i] = t
        out_cc[i] = cc


@njit(**_JIT)
def euler_single(ts, ws, theta, tau, dt):
    """Forward-Euler membrane integration; the brute-force reference.

    Steps the potential with the synaptic current summed over arrived
    inputs, from t = 0 to 20 tau past the last arrival, and returns the
    first threshold crossing (linearly interpolated inside the step).
    """
    n = ts.shape[0]
    order = np.argsort(ts)
    t_last = 0.0
    n_finite = 0
    for i in range(n):
        if np.isfinite(ts[i]):
            n_finite += 1
            if ts[i] > t_last:
                t_last = ts[i]
    t_end = t_last + 20.0 * tau
    nsteps = int(np.ceil(t_end / dt))
    v = 0.0
    arrived = 0.0  # sum of w_i * exp(t_i / tau) over inputs with t_i <= t
    k = 0
    for step in range(nsteps):
        t = step * dt
        while k < n_finite and ts[order[k]] <= t:
            arrived += ws[order[k]] * np.exp(ts[order[k]] / tau)
            k += 1
        current = arrived * np.exp(-t / tau)
        v_new = v + dt * current
        if v_new >= theta:
            if v_new > v:
                t_cross = t + dt * (theta - v) / (v_new - v)
            else:
                t_cross = t
            cc = 0
            for i in range(n):
                if np.isfinite(ts[i]) and ts[i] < t_cross:
                    cc += 1
            return t_cross, cc
        v = v_new
    return np.inf, 0


@njit(**_JIT)
def euler_batch(ts2d, ws2d, counts, theta, tau, dt, out_t, out_cc, i0, i1):
    for i in range(i0, i1):
        n = counts[i]
        t, cc = euler_single(ts2d[i, :n], ws2d[i, :n], theta, tau, dt)
        out_t[i] = t
        out_cc[i] = cc


@njit(**_JIT)
def spike_conv_rows(tin_pad, w2d, theta, tau, out_t, out_cc, record_cc, row0, row1, kh, kw):
    """Spiking convolution over output rows [row0, row1).

    ``tin_pad`` is the input padded by (kh//2, kw//2) with NO_SPIKE;
    ``w2d`` is ``(kh*kw*c_in, filters)`` with patch index
    ``(di*kw + dj)*c_in + c``.  The receptive field is gathered and sorted
    once per output position, then the prefix walk runs blocked across all
    filters so the accumulation vectorizes over the contiguous rows of
    ``w2d``.  Per filter the arithmetic is identical to ``solve_single``.
    Each output is an independent first-crossing solve, so any row
    partition yields identical results.
    """
    c_in = tin_pad.shape[2]
    w_out = out_t.shape[1]
    filters = out_t.shape[2]
    k = kh * kw * c_in
    ts = np.empty(k, dtype=np.float64)
    ts_s = np.empty(k, dtype=np.float64)
    zs_s = np.empty(k, dtype=np.float64)
    identity = np.arange(k)
    w_acc = np.empty(filters, dtype=np.float64)
    z_acc = np.empty(filters, dtype=np.float64)
    done = np.empty(filters, dtype=np.uint8)
    for i in range(row0, row1):
        for j in range(w_out):
            idx = 0
            tmin = np.inf
            tmax = -np.inf
            n_finite = 0
            for di in range(kh):
                for dj in range(kw):
                    for c in range(c_in):
                        v = tin_pad[i + di, j + dj, c]
                        ts[idx] = v
                        idx += 1
                        if np.isfinite(v):
                            n_finite += 1
                            if v < tmin:
                                tmin = v
                            if v > tmax:
                                tmax = v
            if n_finite == 0:
                for f in range(filters):
                    out_t[i, j, f] = np.inf
                    if record_cc:
                        out_cc[i, j, f] = 0
                continue
            if n_finite == k and tmin == tmax:
                # Single tie group: sorting is the identity permutation.
                order = identity
                for m in range(k):
                    ts_s[m] = ts[m]
            else:
                order = np.argsort(ts)
                for m in range(n_finite):
                    ts_s[m] = ts[order[m]]
            for m in range(n_finite):
                zs_s[m] = np.exp(ts_s[m] / tau)

            for f in range(filters):
                w_acc[f] = 0.0
                z_acc[f] = 0.0
                done[f] = 0
            remaining = filters
            m = 0
            while m < n_finite and remaining > 0:
                t_group = ts_s[m]
                z_group = zs_s[m]
                while m < n_finite and ts_s[m] == t_group:
                    row = order[m]
                    zm = zs_s[m]
                    for f in range(filters):
                        w = w2d[row, f]
                        w_acc[f] += w
                        z_acc[f] += w * zm
                    m += 1
                z_next = zs_s[m] if m < n_finite else 0.0
                at_end = m == n_finite
                for f in range(filters):
                    if done[f] == 0:
                        d = w_acc[f] - theta
                        if d > DENOM_GUARD:
                            zf = z_acc[f]
                            if zf >= z_group * d and (at_end or zf < z_next * d):
                                zc = zf / d
                                if np.isfinite(zc):
                                    out_t[i, j, f] = tau * np.log(zc)
                                    if record_cc:
                                        out_cc[i, j, f] = m
                                    done[f] = 1
                                    remaining -= 1
            for f in range(filters):
                if done[f] == 0:
                    out_t[i, j, f] = np.inf
                    if record_cc:
                        out_cc[i, j, f] = 0


@njit(**_JIT)
def spike_conv_denoms(tin_pad, zin_pad, out_t, w2d, row0, row1, kh, kw, zden):
    """Z = sum of w * z over the strictly-causal set, per fired output.

    Cached once so both backward kernels can reuse the denominators.
    """
    c_in = tin_pad.shape[2]
    w_out = out_t.shape[1]
    filters = out_t.shape[2]
    for i in range(row0, row1):
        for j in range(w_out):
            for f in range(filters):
                t_o = out_t[i, j, f]
                if not np.isfinite(t_o):
                    zden[i, j, f] = 0.0
                    continue
                z = 0.0
                for di in range(kh):
                    for dj in range(kw):
                        base = (di * kw + dj) * c_in
                        for c in range(c_in):
                            t_in = tin_pad[i + di, j + dj, c]
                            if t_in < t_o:
                                z += w2d[base + c, f] * zin_pad[i + di, j + dj, c]
                zden[i, j, f] = z


@njit(**_JIT)
def spike_conv_grad_weights(tin_pad, zin_pad, out_t, gout, zden, tau, gw2d, f0, f1, kh, kw):
    """d(loss)/d(weight) for filters [f0, f1): dt_out/dw_i = tau*(z_i - z_out)/Z.

    Parallel-safe because each filter's column of ``gw2d`` is written by
    exactly one caller; accumulation runs in fixed output order.
    """
    c_in = tin_pad.shape[2]
    l_out = out_t.shape[0]
    w_out = out_t.shape[1]
    for f in range(f0, f1):
        for i in range(l_out):
            for j in range(w_out):
                g = gout[i, j, f]
                if g == 0.0:
                    continue
                t_o = out_t[i, j, f]
                if not np.isfinite(t_o):
                    continue
                z = zden[i, j, f]
                if z <= 0.0:
                    continue
                z_o = np.exp(t_o / tau)
                scale = g * tau / z
                for di in range(kh):
                    for dj in range(kw):
                        base = (di * kw + dj) * c_in
                        for c in range(c_in):
                            t_in = tin_pad[i + di, j + dj, c]
                            if t_in < t_o:
                                gw2d[base + c, f] += scale * (zin_pad[i + di, j + dj, c] - z_o)


@njit(**_JIT)
def spike_conv_grad_inputs(tin, zin, out_t, gout, w2d, zden, gin, i0, i1, kh, kw):
    """d(loss)/d(input time) for input rows [i0, i1): dt_out/dt_i = w*z_i/Z.

    Gather formulation: each input cell sums over the outputs whose
    receptive field covers it, so no two callers touch the same entry.
    """
    l_in, w_in, c_in = tin.shape
    l_out = out_t.shape[0]
    w_out = out_t.shape[1]
    filters = out_t.shape[2]
    p = kh // 2
    q = kw // 2
    for ii in range(i0, i1):
        for jj in range(w_in):
            for c in range(c_in):
                t_in = tin[ii, jj, c]
                if not np.isfinite(t_in):
                    gin[ii, jj, c] = 0.0
                    continue
                z_in = zin[ii, jj, c]
                acc = 0.0
                for di in range(kh):
                    oi = ii + p - di
                    if oi < 0 or oi >= l_out:
                        continue
                    for dj in range(kw):
                        oj = jj + q - dj
                        if oj < 0 or oj >= w_out:
                            continue
                        base = (di * kw + dj) * c_in + c
                        for f in range(filters):
                            g = gout[oi, oj, f]
                            if g == 0.0:
                                continue
                            t_o = out_t[oi, oj, f]
                            if not (t_in < t_o) or not np.isfinite(t_o):
                                continue
                            z = zden[oi, oj, f]
                            if z <= 0.0:
                                continue
                            acc += g * w2d[base, f] * z_in / z
                gin[ii, jj, c] = acc
