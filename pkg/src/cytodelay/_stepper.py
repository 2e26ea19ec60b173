"""Fixed-step method-of-steps core, JIT-compiled over a system callback.

The stepper advances a D-dimensional delay system with classical 4-stage
Runge-Kutta on a uniform grid.  Delayed state vectors are resolved through a
dense cubic-Hermite interpolant over already-computed nodes (value and
derivative per node), through the prescribed initial history for query times
<= 0, and, for lags shorter than one step, through a predictor/corrector
sweep: pass one extrapolates the previous interval's interpolant past the
current node, then a single corrector pass re-runs the step against the
Hermite segment built from the provisional endpoint.  Lags of exactly zero
never reach the stepper; callbacks fold them into instantaneous terms.

System callbacks are numba-compiled functions with the fixed signature

    cb(t, u, zlag, pp, idx1, w1, idx2, w2, w01, w02, du)

where zlag[r] is the full state at t - taps[r], pp is a free-form parameter
vector and the remaining arrays route quadrature weights; du receives the
derivative.  One stepper specialization is compiled per callback.
"""

from __future__ import annotations

import numba as nb
import numpy as np

STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_BLOWUP = 2

# pp layout for the infection-model callback
PP_LAM, PP_BETA1, PP_BETA2, PP_D1, PP_D2, PP_D3, PP_D4, PP_D5 = range(8)
PP_ALPHA1, PP_ALPHA2, PP_K, PP_CCTL, PP_P, PP_H = range(8, 14)
PP_SIZE = 14


@nb.njit(inline="always", cache=True)
def _history_interp(q, htimes, hstates, out):
    # piecewise linear on the tabulated history, holding the earliest value
    m = htimes.shape[0]
    if m == 1 or q <= htimes[0]:
        for j in range(hstates.shape[1]):
            out[j] = hstates[0, j]
        return
    lo = 0
    hi = m - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if htimes[mid] <= q:
            lo = mid
        else:
            hi = mid
    w = (q - htimes[lo]) / (htimes[hi] - htimes[lo])
    for j in range(hstates.shape[1]):
        out[j] = (1.0 - w) * hstates[lo, j] + w * hstates[hi, j]


@nb.njit(inline="always", cache=True)
def _hermite_interp(dt, y0, f0, y1, f1, s, out):
    s2 = s * s
    s3 = s2 * s
    h00 = 2.0 * s3 - 3.0 * s2 + 1.0
    h10 = s3 - 2.0 * s2 + s
    h01 = -2.0 * s3 + 3.0 * s2
    h11 = s3 - s2
    for j in range(y0.shape[0]):
        out[j] = h00 * y0[j] + dt * h10 * f0[j] + h01 * y1[j] + dt * h11 * f1[j]


@nb.njit(inline="always", cache=True)
def _lookup(q, dt, n_done, states, derivs, htimes, hstates,
            use_cur, cur_y, cur_f, out):
    # Resolve the full state at time q while nodes 0..n_done are complete.
    if q <= 0.0:
        _history_interp(q, htimes, hstates, out)
        return
    tn = n_done * dt
    if use_cur and q > tn:
        # provisional segment [tn, tn + dt] from the corrector sweep
        _hermite_interp(dt, states[n_done], derivs[n_done], cur_y, cur_f,
                        (q - tn) / dt, out)
        return
    if n_done == 0:
        # predictor before the first node: linear continuation
        for j in range(states.shape[1]):
            out[j] = states[0, j] + q * derivs[0, j]
        return
    i = int(q / dt)
    if i > n_done - 1:
        i = n_done - 1  # clamps fp spill at nodes; extrapolates when predicting
    s = (q - i * dt) / dt
    _hermite_interp(dt, states[i], derivs[i], states[i + 1], derivs[i + 1], s, out)


@nb.njit(inline="always", cache=True)
def _gather(t_stage, dt, n_done, states, derivs, htimes, hstates,
            use_cur, cur_y, cur_f, taps, zlag):
    for r in range(taps.shape[0]):
        _lookup(t_stage - taps[r], dt, n_done, states, derivs, htimes, hstates,
                use_cur, cur_y, cur_f, zlag[r])


@nb.njit(cache=True)
def infection_rhs(t, u, zlag, pp, idx1, w1, idx2, w2, w01, w02, du):
    """Right-hand side of the five-compartment infection model.

    w1/w2 carry the kernel quadrature weights premultiplied by the survival
    factors e^{-m_i s_j}; w01/w02 are the corresponding weights of zero-lag
    nodes, applied to the instantaneous state.
    """
    x = u[0]
    y = u[1]
    cc = u[2]
    v = u[3]
    z = u[4]
    xv = w01 * x * v
    xc = w01 * x * cc
    for r in range(idx1.shape[0]):
        row = idx1[r]
        xv += w1[r] * zlag[row, 0] * zlag[row, 3]
        xc += w1[r] * zlag[row, 0] * zlag[row, 2]
    ydel = w02 * y
    for r in range(idx2.shape[0]):
        ydel += w2[r] * zlag[idx2[r], 1]
    du[0] = pp[PP_LAM] - pp[PP_BETA1] * x * v - pp[PP_BETA2] * x * cc - pp[PP_D1] * x
    du[1] = (pp[PP_BETA1] * xv + pp[PP_BETA2] * xc
             - (pp[PP_ALPHA1] + pp[PP_D2]) * y - pp[PP_P] * y * z)
    du[2] = pp[PP_ALPHA2] * y - pp[PP_D3] * cc
    du[3] = pp[PP_K] * ydel - pp[PP_D4] * v
    du[4] = pp[PP_CCTL] * y * z / (pp[PP_H] + z) - pp[PP_D5] * z


@nb.njit(inline="always")
def _loop(cb, u0, dt, n_steps, taps, htimes, hstates,
     pp, idx1, w1, idx2, w2, w01, w02,
     blow_threshold, states, derivs):
    d = u0.shape[0]
    n_taps = taps.shape[0]
    zlag = np.empty((n_taps, d))
    du = np.empty(d)
    y2 = np.empty(d)
    y3 = np.empty(d)
    y4 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    cur_y = np.empty(d)
    cur_f = np.empty(d)
    unew = np.empty(d)

    for j in range(d):
        states[0, j] = u0[j]
    # node derivative at t = 0: delayed queries all lie in the history
    _gather(0.0, dt, 0, states, derivs, htimes, hstates,
            False, cur_y, cur_f, taps, zlag)
    cb(0.0, states[0], zlag, pp, idx1, w1, idx2, w2, w01, w02, du)
    for j in range(d):
        derivs[0, j] = du[j]

    needs_corrector = False
    for r in range(n_taps):
        if taps[r] < dt:
            needs_corrector = True

    for n in range(n_steps):
        tn = n * dt
        th = tn + 0.5 * dt
        te = tn + dt
        # pass one (the only pass unless an in-step lag exists);
        # stage one reuses the stored node derivative
        for j in range(d):
            y2[j] = states[n, j] + 0.5 * dt * derivs[n, j]
        _gather(th, dt, n, states, derivs, htimes, hstates,
                False, cur_y, cur_f, taps, zlag)
        cb(th, y2, zlag, pp, idx1, w1, idx2, w2, w01, w02, k2)
        for j in range(d):
            y3[j] = states[n, j] + 0.5 * dt * k2[j]
        cb(th, y3, zlag, pp, idx1, w1, idx2, w2, w01, w02, k3)
        for j in range(d):
            y4[j] = states[n, j] + dt * k3[j]
        _gather(te, dt, n, states, derivs, htimes, hstates,
                False, cur_y, cur_f, taps, zlag)
        cb(te, y4, zlag, pp, idx1, w1, idx2, w2, w01, w02, k4)
        for j in range(d):
            unew[j] = states[n, j] + dt / 6.0 * (
                derivs[n, j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])

        if needs_corrector:
            # provisional endpoint derivative, still via the predictor
            cb(te, unew, zlag, pp, idx1, w1, idx2, w2, w01, w02, cur_f)
            for j in range(d):
                cur_y[j] = unew[j]
            for j in range(d):
                y2[j] = states[n, j] + 0.5 * dt * derivs[n, j]
            _gather(th, dt, n, states, derivs, htimes, hstates,
                    True, cur_y, cur_f, taps, zlag)
            cb(th, y2, zlag, pp, idx1, w1, idx2, w2, w01, w02, k2)
            for j in range(d):
                y3[j] = states[n, j] + 0.5 * dt * k2[j]
            cb(th, y3, zlag, pp, idx1, w1, idx2, w2, w01, w02, k3)
            for j in range(d):
                y4[j] = states[n, j] + dt * k3[j]
            _gather(te, dt, n, states, derivs, htimes, hstates,
                    True, cur_y, cur_f, taps, zlag)
            cb(te, y4, zlag, pp, idx1, w1, idx2, w2, w01, w02, k4)
            for j in range(d):
                unew[j] = states[n, j] + dt / 6.0 * (
                    derivs[n, j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            # node derivative through the same provisional segment
            cb(te, unew, zlag, pp, idx1, w1, idx2, w2, w01, w02, du)
        else:
            # in-step queries impossible: zlag at te is already final
            cb(te, unew, zlag, pp, idx1, w1, idx2, w2, w01, w02, du)

        for j in range(d):
            states[n + 1, j] = unew[j]
            derivs[n + 1, j] = du[j]
        for j in range(d):
            val = states[n + 1, j]
            if not np.isfinite(val):
                return STATUS_NONFINITE, n + 1
            if val > blow_threshold or val < -blow_threshold:
                return STATUS_BLOWUP, n + 1
    return STATUS_OK, n_steps


@nb.njit(cache=True)
def _run_infection(u0, dt, n_steps, taps, htimes, hstates,
                   pp, idx1, w1, idx2, w2, w01, w02,
                   blow_threshold, states, derivs):
    # direct-call wrapper: keeps the hot path disk-cacheable across processes
    return _loop(infection_rhs, u0, dt, n_steps, taps, htimes, hstates,
                 pp, idx1, w1, idx2, w2, w01, w02,
                 blow_threshold, states, derivs)


@nb.njit
def _run_generic(cb, u0, dt, n_steps, taps, htimes, hstates,
                 pp, idx1, w1, idx2, w2, w01, w02,
                 blow_threshold, states, derivs):
    # custom callbacks compile per process; used by auxiliary test systems
    return _loop(cb, u0, dt, n_steps, taps, htimes, hstates,
                 pp, idx1, w1, idx2, w2, w01, w02,
                 blow_threshold, states, derivs)


def run_delay_system(cb, u0, taps, htimes, hstates, pp,
                     idx1, w1, idx2, w2, w01, w02,
                     dt, n_steps, blow_threshold):
    """Allocate the node buffers and drive the stepper.

    Returns (status, n_last, states, derivs); on failure n_last is the first
    offending node and the buffers are valid up to and including it.
    """
    d = len(u0)
    states = np.empty((n_steps + 1, d))
    derivs = np.empty_like(states)
    args = (
        np.ascontiguousarray(u0, dtype=np.float64), float(dt), int(n_steps),
        np.ascontiguousarray(taps, dtype=np.float64),
        np.ascontiguousarray(htimes, dtype=np.float64),
        np.ascontiguousarray(hstates, dtype=np.float64),
        np.ascontiguousarray(pp, dtype=np.float64),
        np.ascontiguousarray(idx1, dtype=np.int64),
        np.ascontiguousarray(w1, dtype=np.float64),
        np.ascontiguousarray(idx2, dtype=np.int64),
        np.ascontiguousarray(w2, dtype=np.float64),
        float(w01), float(w02), float(blow_threshold), states, derivs)
    if cb is infection_rhs:
        status, n_last = _run_infection(*args)
    else:
        status, n_last = _run_generic(cb, *args)
    return status, n_last, states, derivs
