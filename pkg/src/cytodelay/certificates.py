"""Runtime certificates: positivity, boundedness and Lyapunov decrease.

Each certificate replays a proof obligation along a computed trajectory and
reports the worst violation found:

  * cone invariance: at any admissible boundary state (some components
    exactly zero, the rest nonnegative, nonnegative history) the derivative
    components belonging to the zero coordinates must be >= 0, so the flow
    never leaves the nonnegative cone.
  * boundedness: the weighted load B(t) = int e^{-m1 s} f1(s) x(t-s) ds + y(t)
    stays under the envelope lam*A1/r + |r*B0 - lam*A1| / (r e^{r t}) with
    r = min(d1, alpha1 + d2), and y(t) under the constant C1 obtained at t=0.
  * Lyapunov decrease: the functional matching the derivation-mode regime
    (L0 below the infection threshold, L1 between the thresholds, L2 above
    both) is evaluated with its kernel-weighted double-integral terms and
    checked for monotone non-increase.

Double integrals use the kernel's own nodes for the outer integral (exact for
point-mass kernels) and composite Simpson on the trajectory grid for the
inner one, with cell midpoints read from the dense interpolant; halving the
grid then moves the functionals by far less than the monotonicity tolerance,
which absorbs the remaining quadrature error.  All checks are read-only
consumers of immutable trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from cytodelay.analysis import (
    SurvivalFactors,
    reproduction_numbers,
)
from cytodelay.model import (
    MODE_DERIVATION,
    DelayKernel,
    InitialHistory,
    ModelParameters,
    State5,
)
from cytodelay.integrator import Trajectory, rhs

# Two reproduction numbers within this band of 1 are treated as a boundary
# regime: no Lyapunov certificate applies there.
REGIME_BOUNDARY_BAND = 1e-9

# Default tolerances; the Lyapunov value is relative to max |L|,
# boundedness relative to the envelope.
MONOTONE_REL_TOL = 1e-6
BOUNDEDNESS_REL_TOL = 1e-8
NONNEGATIVITY_TOL = 1e-10


class NonPositiveArgumentError(ValueError):
    """g(s) = s - 1 - ln s is defined for s > 0 only."""


class NotOnBoundaryError(ValueError):
    """Cone check requires at least one state component to be exactly zero."""


class NotEvaluableError(ArithmeticError):
    """A Lyapunov argument was nonpositive where g had to be evaluated."""


class MissingEquilibriumError(ValueError):
    """The functional's reference equilibrium does not exist."""


@dataclass(frozen=True)
class CertificateReport:
    """Outcome of one certificate: passed iff worst_violation <= tolerance."""

    name: str
    passed: bool
    worst_violation: float
    worst_time: float
    tolerance: float
    notes: str = ""

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "worst_violation": self.worst_violation,
            "worst_time": self.worst_time,
            "tolerance": self.tolerance,
            "notes": self.notes,
        }


@dataclass(frozen=True)
class LyapunovValue:
    """One functional evaluation with its term-by-term breakdown."""

    t: float
    value: float
    components: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class LyapunovSeries:
    """A functional sampled along the trajectory grid (nan = not evaluable)."""

    name: str
    times: np.ndarray
    values: np.ndarray
    components: dict[str, np.ndarray]

    def value_at(self, i: int) -> LyapunovValue:
        return LyapunovValue(
            t=float(self.times[i]), value=float(self.values[i]),
            components={k: float(v[i]) for k, v in self.components.items()})


def g(s: float) -> float:
    """The convex distance kernel g(s) = s - 1 - ln s, zero only at s = 1."""
    if not (s > 0.0):
        raise NonPositiveArgumentError(f"g is defined for s > 0, got {s}")
    return s - 1.0 - math.log(s)


def _g_array(a: np.ndarray) -> np.ndarray:
    """Vectorized g with nan where the argument is not positive."""
    with np.errstate(invalid="ignore", divide="ignore"):
        out = a - 1.0 - np.log(a)
    out[~(a > 0.0)] = np.nan
    return out


# ---------------------------------------------------------------------------
# cone invariance and nonnegativity
# ---------------------------------------------------------------------------

def check_cone_invariance(params: ModelParameters,
                          kernels: tuple[DelayKernel, DelayKernel],
                          boundary_state: State5,
                          history: InitialHistory,
                          tolerance: float = 0.0) -> CertificateReport:
    """Verify the flow does not point out of the nonnegative cone.

    Evaluates the right-hand side at t = 0 with the boundary state as the
    instantaneous state and the (nonnegative) history feeding the delayed
    terms, then requires the derivative component of every zero coordinate to
    be >= -tolerance.
    """
    comps = boundary_state.as_array()
    if np.any(comps < 0.0):
        raise ValueError("boundary state must be componentwise nonnegative")
    zero = comps == 0.0
    if not zero.any():
        raise NotOnBoundaryError("no component of the state is exactly zero")
    deriv = rhs(params, kernels, history, 0.0, boundary_state)
    violations = np.where(zero, -deriv, -np.inf)
    worst = float(max(violations.max(), 0.0))
    return CertificateReport(
        name="cone-invariance", passed=worst <= tolerance,
        worst_violation=worst, worst_time=0.0, tolerance=tolerance,
        notes="zero components: " + ",".join(
            n for n, z in zip("xycvz", zero) if z))


def check_nonnegativity(traj: Trajectory,
                        tolerance: float = NONNEGATIVITY_TOL) -> CertificateReport:
    """Every trajectory component must stay >= -tolerance at all nodes."""
    low = traj.states.min(axis=1)
    i = int(np.argmin(low))
    worst = float(max(0.0, -low[i]))
    return CertificateReport(
        name="nonnegativity", passed=worst <= tolerance,
        worst_violation=worst, worst_time=float(traj.times[i]),
        tolerance=tolerance)


# ---------------------------------------------------------------------------
# boundedness envelope
# ---------------------------------------------------------------------------

def boundedness_series(params: ModelParameters, traj: Trajectory) -> np.ndarray:
    """B(t) = int e^{-m1 s} f1(s) x(t-s) ds + y(t) on the trajectory grid."""
    kernel1 = traj.kernels[0]
    nodes = kernel1.nodes_array()
    weights = kernel1.survival_weights(params.m1)
    b = traj.states[:, 1].copy()
    for s, w in zip(nodes, weights):
        b += w * traj.sample(traj.times - s)[:, 0]
    return b


def check_boundedness(params: ModelParameters, factors: SurvivalFactors,
                      traj: Trajectory,
                      rel_tol: float = BOUNDEDNESS_REL_TOL) -> CertificateReport:
    """Check B(t) against its decay envelope and y(t) against C1.

    B(t) is computed by kernel quadrature over the trajectory and its history.
    Violations are measured relative to the envelope value at each node.
    """
    p = params
    times = traj.times
    b = boundedness_series(p, traj)
    b0 = float(b[0])
    r = min(p.d1, p.alpha1 + p.d2)
    lam_a1 = p.lam * factors.a1
    spread = abs(r * b0 - lam_a1)
    envelope = lam_a1 / r + spread / r * np.exp(-r * times)
    c1 = lam_a1 / r + spread / r

    scale_env = np.maximum(np.abs(envelope), np.finfo(float).tiny)
    rel_b = (b - envelope) / scale_env
    rel_y = (traj.states[:, 1] - c1) / max(abs(c1), np.finfo(float).tiny)
    i_b = int(np.argmax(rel_b))
    i_y = int(np.argmax(rel_y))
    if rel_b[i_b] >= rel_y[i_y]:
        worst, worst_time, which = float(rel_b[i_b]), float(times[i_b]), "envelope"
    else:
        worst, worst_time, which = float(rel_y[i_y]), float(times[i_y]), "y-cap"
    worst = max(worst, 0.0)
    return CertificateReport(
        name="boundedness", passed=worst <= rel_tol,
        worst_violation=worst, worst_time=worst_time, tolerance=rel_tol,
        notes=f"binding check: {which}; B0 = {b0!r}, C1 = {c1!r}")


# ---------------------------------------------------------------------------
# Lyapunov functionals
# ---------------------------------------------------------------------------

class _WindowIntegrals:
    """Simpson integrals of a grid function over trailing windows [t-s, t].

    Built once per integrand from the trajectory grid extended back through
    the history, with one midpoint sample per cell; window values come from
    the cumulative integral, so a full series costs one pass per kernel node.
    Windows touching a cell where the integrand is undefined are flagged
    invalid.
    """

    def __init__(self, times: np.ndarray, values: np.ndarray,
                 midpoints: np.ndarray):
        self.times = times
        self.t0 = float(times[0])
        self.dt = float(times[1] - times[0])
        bad_node = ~np.isfinite(values)
        bad_mid = ~np.isfinite(midpoints)
        safe = np.where(bad_node, 0.0, values)
        safe_mid = np.where(bad_mid, 0.0, midpoints)
        self.cum = np.empty(len(values))
        self.cum[0] = 0.0
        np.cumsum(self.dt / 6.0 * (safe[:-1] + 4.0 * safe_mid + safe[1:]),
                  out=self.cum[1:])
        bad_cell = bad_node[:-1] | bad_node[1:] | bad_mid
        self.bad_prefix = np.concatenate(([0], np.cumsum(bad_cell.astype(np.int64))))

    def window(self, tq: np.ndarray, s: float) -> tuple[np.ndarray, np.ndarray]:
        hi = np.interp(tq, self.times, self.cum)
        lo = np.interp(tq - s, self.times, self.cum)
        n_cells = len(self.times) - 1
        i_lo = np.floor((tq - s - self.t0) / self.dt + 1e-9).astype(np.int64)
        i_hi = np.ceil((tq - self.t0) / self.dt - 1e-9).astype(np.int64)
        i_lo = np.clip(i_lo, 0, n_cells)
        i_hi = np.clip(i_hi, 0, n_cells)
        ok = (self.bad_prefix[i_hi] - self.bad_prefix[i_lo]) == 0
        return hi - lo, ok


def _extended_grid(traj: Trajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Grid covering [-(max lag), t_end]: times, states and cell midstates."""
    s_max = max(traj.kernels[0].max_lag, traj.kernels[1].max_lag)
    n_back = int(math.ceil(s_max / traj.dt - 1e-9)) if s_max > 0.0 else 0
    if n_back == 0:
        times, states = traj.times, traj.states
    else:
        back_times = -traj.dt * np.arange(n_back, 0, -1, dtype=np.float64)
        times = np.concatenate([back_times, traj.times])
        states = np.vstack([traj.history.sample(back_times), traj.states])
    mid_times = 0.5 * (times[:-1] + times[1:])
    mid_states = np.empty((len(mid_times), states.shape[1]))
    neg = mid_times <= 0.0
    if neg.any():
        mid_states[neg] = traj.history.sample(mid_times[neg])
    if (~neg).any():
        mid_states[~neg] = traj.sample(mid_times[~neg])
    return times, states, mid_states


def _kernel_weighted_windows(table: _WindowIntegrals, kernel: DelayKernel,
                             m: float, tq: np.ndarray):
    total = np.zeros(len(tq))
    ok = np.ones(len(tq), dtype=bool)
    for s, w in zip(kernel.nodes_array(), kernel.survival_weights(m)):
        if s <= 0.0:
            continue  # empty window
        val, good = table.window(tq, float(s))
        total += w * val
        ok &= good
    return total, ok


def _series_l0(params: ModelParameters, factors: SurvivalFactors,
               kernels: tuple[DelayKernel, DelayKernel], traj: Trajectory,
               tq: np.ndarray) -> LyapunovSeries:
    p = params
    a1 = factors.a1
    x0 = p.lam / p.d1
    r0 = reproduction_numbers(p, factors, MODE_DERIVATION).r0
    ext_times, ext, mid = _extended_grid(traj)
    t_xv = _WindowIntegrals(ext_times, p.beta1 * ext[:, 0] * ext[:, 3],
                            p.beta1 * mid[:, 0] * mid[:, 3])
    t_xc = _WindowIntegrals(ext_times, p.beta2 * ext[:, 0] * ext[:, 2],
                            p.beta2 * mid[:, 0] * mid[:, 2])
    t_y = _WindowIntegrals(ext_times, ext[:, 1], mid[:, 1])
    n01, ok1 = _kernel_weighted_windows(t_xv, kernels[0], p.m1, tq)
    n02, ok2 = _kernel_weighted_windows(t_xc, kernels[0], p.m1, tq)
    n03_raw, ok3 = _kernel_weighted_windows(t_y, kernels[1], p.m2, tq)
    n03 = p.k * n03_raw

    cur = traj.sample(tq)
    coeff_c = p.beta2 * a1 * x0 / (p.d3 * r0)
    coeff_v = p.beta1 * a1 * x0 / (p.d4 * r0)
    comps = {
        "x_term": a1 * x0 * _g_array(cur[:, 0] / x0),
        "y_term": cur[:, 1].copy(),
        "c_term": coeff_c * cur[:, 2],
        "v_term": coeff_v * cur[:, 3],
        "z_term": (p.p * p.h / p.c_ctl) * cur[:, 4],
        "delay_xv": n01,
        "delay_xc": n02,
        "delay_y": coeff_v * n03,
    }
    values = sum(comps.values())
    values = np.where(ok1 & ok2 & ok3, values, np.nan)
    return LyapunovSeries(name="L0", times=tq, values=values, components=comps)


def _series_l12(name: str, params: ModelParameters, factors: SurvivalFactors,
                kernels: tuple[DelayKernel, DelayKernel], traj: Trajectory,
                ref: State5, tq: np.ndarray) -> LyapunovSeries:
    """Shared body of L1 and L2; they differ only in the z term."""
    p = params
    a1 = factors.a1
    xr, yr, cr, vr, zr = ref.x, ref.y, ref.c, ref.v, ref.z
    ext_times, ext, mid = _extended_grid(traj)
    t_xv = _WindowIntegrals(ext_times,
                            _g_array(ext[:, 0] * ext[:, 3] / (xr * vr)),
                            _g_array(mid[:, 0] * mid[:, 3] / (xr * vr)))
    t_xc = _WindowIntegrals(ext_times,
                            _g_array(ext[:, 0] * ext[:, 2] / (xr * cr)),
                            _g_array(mid[:, 0] * mid[:, 2] / (xr * cr)))
    t_y = _WindowIntegrals(ext_times, _g_array(ext[:, 1] / yr),
                           _g_array(mid[:, 1] / yr))
    w_xv, ok1 = _kernel_weighted_windows(t_xv, kernels[0], p.m1, tq)
    w_xc, ok2 = _kernel_weighted_windows(t_xc, kernels[0], p.m1, tq)
    w_y, ok3 = _kernel_weighted_windows(t_y, kernels[1], p.m2, tq)
    n_1 = p.beta1 * xr * vr * w_xv
    n_2 = p.beta2 * xr * cr * w_xc
    n_3 = (p.k * p.beta1 * xr * yr / p.d4) * w_y

    cur = traj.sample(tq)
    if name == "L1":
        z_term = (p.p * p.h / (p.c_ctl * a1)) * cur[:, 4]
    else:
        z_term = (p.p * yr * zr / (p.d5 * a1)) * _g_array(cur[:, 4] / zr)
    comps = {
        "x_term": xr * _g_array(cur[:, 0] / xr),
        "y_term": (yr / a1) * _g_array(cur[:, 1] / yr),
        "c_term": (p.beta2 * xr * cr / p.d3) * _g_array(cur[:, 2] / cr),
        "v_term": (p.beta1 * xr * vr / p.d4) * _g_array(cur[:, 3] / vr),
        "z_term": z_term,
        "delay_xv": n_1 / a1,
        "delay_xc": n_2 / a1,
        "delay_y": n_3,
    }
    values = sum(comps.values())
    values = np.where(ok1 & ok2 & ok3, values, np.nan)
    return LyapunovSeries(name=name, times=tq, values=values, components=comps)


def lyapunov_series(name: str, params: ModelParameters, factors: SurvivalFactors,
                    kernels: tuple[DelayKernel, DelayKernel], traj: Trajectory,
                    equilibrium: Optional[State5] = None,
                    times: Optional[np.ndarray] = None) -> LyapunovSeries:
    """Evaluate L0, L1 or L2 along the trajectory (default: every grid node)."""
    tq = traj.times if times is None else np.asarray(times, dtype=float)
    if name == "L0":
        return _series_l0(params, factors, kernels, traj, tq)
    if name in ("L1", "L2"):
        if equilibrium is None:
            raise MissingEquilibriumError(
                f"{name} needs its reference equilibrium, which does not exist here")
        return _series_l12(name, params, factors, kernels, traj, equilibrium, tq)
    raise ValueError(f"unknown Lyapunov functional {name!r}")


def _single_value(series: LyapunovSeries) -> LyapunovValue:
    value = series.value_at(0)
    if not math.isfinite(value.value):
        raise NotEvaluableError(
            f"{series.name} not evaluable at t = {value.t}: "
            "a g argument is nonpositive in the needed window")
    return value


def lyapunov_L0(params: ModelParameters, factors: SurvivalFactors,
                kernels: tuple[DelayKernel, DelayKernel], traj: Trajectory,
                t: float) -> LyapunovValue:
    """Functional certifying the infection-free state (needs x > 0)."""
    return _single_value(lyapunov_series(
        "L0", params, factors, kernels, traj, times=np.array([t])))


def lyapunov_L1(params: ModelParameters, factors: SurvivalFactors,
                kernels: tuple[DelayKernel, DelayKernel], traj: Trajectory,
                t: float, e1: Optional[State5]) -> LyapunovValue:
    """Functional centred at the immunity-inactivated equilibrium."""
    return _single_value(lyapunov_series(
        "L1", params, factors, kernels, traj, equilibrium=e1, times=np.array([t])))


def lyapunov_L2(params: ModelParameters, factors: SurvivalFactors,
                kernels: tuple[DelayKernel, DelayKernel], traj: Trajectory,
                t: float, e2: Optional[State5]) -> LyapunovValue:
    """Functional centred at the immunity-activated equilibrium."""
    return _single_value(lyapunov_series(
        "L2", params, factors, kernels, traj, equilibrium=e2, times=np.array([t])))


def check_monotone_decrease(values: Union[LyapunovSeries, Sequence[LyapunovValue]],
                            rel_tol: float = MONOTONE_REL_TOL) -> CertificateReport:
    """Pass iff every forward difference is <= rel_tol * max |value|.

    The relative tolerance absorbs quadrature error in the double-integral
    terms.  Entries that were not evaluable (nan) are skipped; only
    differences between consecutive evaluable samples are checked.
    """
    if isinstance(values, LyapunovSeries):
        name, times, vals = values.name, values.times, values.values
    else:
        name = "series"
        times = np.array([v.t for v in values], dtype=float)
        vals = np.array([v.value for v in values], dtype=float)
    valid = np.isfinite(vals)
    notes = ""
    if not valid.all():
        notes = f"{int((~valid).sum())} of {len(vals)} samples not evaluable"
    if not valid.any():
        return CertificateReport(
            name=f"monotone-decrease({name})", passed=False,
            worst_violation=float("inf"), worst_time=float("nan"),
            tolerance=0.0, notes=notes or "no evaluable samples")
    scale = float(np.abs(vals[valid]).max())
    tolerance = rel_tol * scale
    pair = valid[1:] & valid[:-1]
    diffs = np.where(pair, vals[1:] - vals[:-1], -np.inf)
    if pair.any():
        i = int(np.argmax(diffs))
        worst = float(diffs[i])
        worst_time = float(times[i + 1])
    else:
        worst, worst_time = 0.0, float(times[0])
    return CertificateReport(
        name=f"monotone-decrease({name})", passed=worst <= tolerance,
        worst_violation=worst, worst_time=worst_time, tolerance=tolerance,
        notes=notes)


def applicable_lyapunov(r0: float, r1: float,
                        band: float = REGIME_BOUNDARY_BAND) -> str:
    """Which functional the derivation-mode regime certifies.

    Returns 'L0', 'L1', 'L2', or 'boundary' when a reproduction number sits
    within the band of 1 (equality is uncertified).
    """
    if abs(r0 - 1.0) <= band:
        return "boundary"
    if r0 < 1.0:
        return "L0"
    if abs(r1 - 1.0) <= band:
        return "boundary"
    return "L1" if r1 < 1.0 else "L2"
