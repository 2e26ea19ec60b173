"""Deterministic fixed-step integration of the delay system.

The method of steps advances the system on a uniform grid with classical
4-stage Runge-Kutta.  Delayed terms read the dense trajectory through cubic
Hermite interpolation over stored node values and derivatives (the stored
derivative at each node is the model right-hand side evaluated there), the
initial history for times <= 0, and a one-sweep predictor/corrector for lags
shorter than one step.  Two runs with identical inputs produce bitwise
identical trajectories on one platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from cytodelay import _stepper
from cytodelay.model import (
    ConfigError,
    ConstantHistory,
    DelayKernel,
    InitialHistory,
    ModelParameters,
    PositiveThetaError,
    State5,
    TabulatedHistory,
    history_arrays,
)

INTERP_CUBIC = "cubic-hermite"
INTERP_LINEAR = "linear"

# Any state component beyond this magnitude aborts the run as a blow-up;
# far above the state scales of all bundled scenarios (<= ~1e3).
BLOWUP_THRESHOLD = 1e12

# Accepted mismatch between t_end and a whole number of steps, as a fraction
# of dt (the grid is strictly uniform; t_end must land on it).
_GRID_FIT_TOL = 1e-6


class BlowUpError(RuntimeError):
    """A state component left the admissible range during integration."""

    def __init__(self, time: float, message: str = ""):
        self.time = time
        super().__init__(message or f"state blew up at t = {time}")


class NonFiniteStateError(ArithmeticError):
    """A state or derivative component became NaN or infinite."""

    def __init__(self, time: float = float("nan"), message: str = ""):
        self.time = time
        super().__init__(message or f"non-finite state at t = {time}")


class OutOfRangeError(ValueError):
    """Interpolation query outside the computed time range."""


@dataclass(frozen=True)
class IntegrationConfig:
    """Step size, horizon and dense-output choices for one integration."""

    dt: float
    t_end: float
    kernel_truncation_eps: float = 1e-8
    """Largest acceptable recorded tail mass on a tabulated kernel."""
    interpolation: str = INTERP_CUBIC

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            raise ConfigError(f"dt must be finite and > 0, got {self.dt}")
        if not (math.isfinite(self.t_end) and self.t_end > 0.0):
            raise ConfigError(f"t_end must be finite and > 0, got {self.t_end}")
        if self.dt > self.t_end:
            raise ConfigError(f"dt = {self.dt} exceeds t_end = {self.t_end}")
        if self.interpolation not in (INTERP_CUBIC, INTERP_LINEAR):
            raise ConfigError(f"unknown interpolation {self.interpolation!r}")
        n = round(self.t_end / self.dt)
        if n < 1 or abs(n * self.dt - self.t_end) > _GRID_FIT_TOL * self.dt:
            raise ConfigError(
                f"t_end = {self.t_end} is not a whole number of steps of dt = {self.dt}")

    @property
    def n_steps(self) -> int:
        return round(self.t_end / self.dt)


@dataclass(frozen=True)
class Trajectory:
    """Dense record of one integration: grid, states, node derivatives.

    Immutable and shareable; the arrays are write-protected.  Interpolation is
    continuous on [0, t_end], exact at grid nodes, and delegates to the
    initial history for negative times.
    """

    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    history: InitialHistory
    params: ModelParameters
    kernels: tuple[DelayKernel, DelayKernel]
    config: IntegrationConfig
    metadata: dict

    @property
    def dt(self) -> float:
        return self.config.dt

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def final_state(self) -> State5:
        return State5.from_array(self.states[-1])

    def sample(self, times) -> np.ndarray:
        """States at arbitrary times in [history, t_end], shape (M, 5).

        Negative times are answered by the initial history; times in
        [0, t_end] by dense interpolation per the configured scheme.
        """
        q = np.atleast_1d(np.asarray(times, dtype=float))
        if q.size and q.max() > self.t_end + 1e-9 * self.dt:
            raise OutOfRangeError(
                f"query time {q.max()} exceeds the horizon {self.t_end}")
        out = np.empty((q.size, 5))
        neg = q <= 0.0
        if neg.any():
            out[neg] = self.history.sample(q[neg])
        pos = ~neg
        if pos.any():
            out[pos] = self._dense(np.minimum(q[pos], self.t_end))
        return out

    def _dense(self, q: np.ndarray) -> np.ndarray:
        dt = self.dt
        n = len(self.times) - 1
        i = np.clip((q / dt).astype(np.int64), 0, n - 1)
        s = (q - i * dt) / dt
        y0 = self.states[i]
        y1 = self.states[i + 1]
        if self.config.interpolation == INTERP_LINEAR:
            out = y0 + s[:, None] * (y1 - y0)
        else:
            f0 = self.derivs[i]
            f1 = self.derivs[i + 1]
            s2 = s * s
            s3 = s2 * s
            h00 = (2.0 * s3 - 3.0 * s2 + 1.0)[:, None]
            h10 = (s3 - 2.0 * s2 + s)[:, None]
            h01 = (-2.0 * s3 + 3.0 * s2)[:, None]
            h11 = (s3 - s2)[:, None]
            out = h00 * y0 + dt * h10 * f0 + h01 * y1 + dt * h11 * f1
        # node queries must reproduce stored values bitwise
        k = np.rint(q / dt).astype(np.int64)
        k = np.clip(k, 0, n)
        exact = k * dt == q
        if exact.any():
            out[exact] = self.states[k[exact]]
        return out

    def interpolate(self, t: float) -> np.ndarray:
        """Dense-output state at a single time t in [0, t_end]."""
        if t < -1e-9 * self.dt or t > self.t_end + 1e-9 * self.dt:
            raise OutOfRangeError(f"t = {t} outside [0, {self.t_end}]")
        return self._dense(np.array([min(max(t, 0.0), self.t_end)]))[0]


def interpolate(traj: Trajectory, t: float) -> np.ndarray:
    """Dense-output state of a trajectory at time t (exact at grid nodes)."""
    return traj.interpolate(t)


PastSource = Union[Trajectory, InitialHistory]

# Observables a delayed term may read from the past state.
SELECTORS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "x": lambda a: a[:, 0],
    "y": lambda a: a[:, 1],
    "c": lambda a: a[:, 2],
    "v": lambda a: a[:, 3],
    "z": lambda a: a[:, 4],
    "xv": lambda a: a[:, 0] * a[:, 3],
    "xc": lambda a: a[:, 0] * a[:, 2],
}


def _sample_past(source: PastSource, times: np.ndarray) -> np.ndarray:
    if isinstance(source, Trajectory):
        return source.sample(times)
    if isinstance(source, (ConstantHistory, TabulatedHistory)):
        if times.size and times.max() > 0.0:
            raise PositiveThetaError(
                "a bare history resolves times <= 0 only; pass a trajectory")
        return source.sample(times)
    raise TypeError(f"expected a Trajectory or an initial history, got {type(source)!r}")


def delayed_term(kernel: DelayKernel, m: float, source: PastSource, t: float,
                 selector: str) -> float:
    """Survival-weighted kernel average of a past observable at time t.

    Computes sum_j w_j e^{-m s_j} phi(t - s_j) where phi is one of the
    SELECTORS keys (a state component or the products 'xv'/'xc'); a Dirac
    kernel reduces this to e^{-m tau} phi(t - tau).
    """
    if selector not in SELECTORS:
        raise ValueError(f"unknown selector {selector!r}; expected one of {sorted(SELECTORS)}")
    weights = kernel.survival_weights(m)
    past = _sample_past(source, t - kernel.nodes_array())
    values = SELECTORS[selector](past)
    return float(weights @ values)


def _split_kernel(kernel: DelayKernel, m: float):
    """(positive nodes, their survival weights, zero-lag survival weight)."""
    nodes = kernel.nodes_array()
    weights = kernel.survival_weights(m)
    pos = nodes > 0.0
    return nodes[pos], weights[pos], float(weights[~pos].sum())


def rhs(params: ModelParameters, kernels: tuple[DelayKernel, DelayKernel],
        source: PastSource, t: float, current: State5) -> np.ndarray:
    """Model right-hand side at time t with the given instantaneous state.

    Delayed terms are resolved from the source (trajectory plus history, or a
    bare history when t - s <= 0 throughout); zero-lag kernel mass acts on the
    instantaneous state.  Raises NonFiniteStateError if any input or output
    component is not finite.
    """
    if not current.is_finite():
        raise NonFiniteStateError(t, f"non-finite state passed to rhs at t = {t}")
    p = params
    kernel1, kernel2 = kernels
    n1, w1, w01 = _split_kernel(kernel1, p.m1)
    n2, w2, w02 = _split_kernel(kernel2, p.m2)
    xv = w01 * current.x * current.v
    xc = w01 * current.x * current.c
    if n1.size:
        past = _sample_past(source, t - n1)
        xv += float(w1 @ (past[:, 0] * past[:, 3]))
        xc += float(w1 @ (past[:, 0] * past[:, 2]))
    ydel = w02 * current.y
    if n2.size:
        past = _sample_past(source, t - n2)
        ydel += float(w2 @ past[:, 1])
    x, y, c, v, z = current.x, current.y, current.c, current.v, current.z
    out = np.array([
        p.lam - p.beta1 * x * v - p.beta2 * x * c - p.d1 * x,
        p.beta1 * xv + p.beta2 * xc - (p.alpha1 + p.d2) * y - p.p * y * z,
        p.alpha2 * y - p.d3 * c,
        p.k * ydel - p.d4 * v,
        p.c_ctl * y * z / (p.h + z) - p.d5 * z,
    ])
    if not np.all(np.isfinite(out)):
        raise NonFiniteStateError(t, f"rhs produced a non-finite derivative at t = {t}")
    return out


def _model_arrays(params: ModelParameters, kernels):
    """Tap table and weight routing for the compiled infection callback."""
    kernel1, kernel2 = kernels
    n1, w1, w01 = _split_kernel(kernel1, params.m1)
    n2, w2, w02 = _split_kernel(kernel2, params.m2)
    taps = np.unique(np.concatenate([n1, n2]))
    idx1 = np.searchsorted(taps, n1)
    idx2 = np.searchsorted(taps, n2)
    pp = np.empty(_stepper.PP_SIZE)
    pp[_stepper.PP_LAM] = params.lam
    pp[_stepper.PP_BETA1] = params.beta1
    pp[_stepper.PP_BETA2] = params.beta2
    pp[_stepper.PP_D1] = params.d1
    pp[_stepper.PP_D2] = params.d2
    pp[_stepper.PP_D3] = params.d3
    pp[_stepper.PP_D4] = params.d4
    pp[_stepper.PP_D5] = params.d5
    pp[_stepper.PP_ALPHA1] = params.alpha1
    pp[_stepper.PP_ALPHA2] = params.alpha2
    pp[_stepper.PP_K] = params.k
    pp[_stepper.PP_CCTL] = params.c_ctl
    pp[_stepper.PP_P] = params.p
    pp[_stepper.PP_H] = params.h
    return taps, pp, idx1, w1, idx2, w2, w01, w02


def integrate(params: ModelParameters, kernels: tuple[DelayKernel, DelayKernel],
              history: InitialHistory, config: IntegrationConfig) -> Trajectory:
    """Integrate the system from its initial history over [0, t_end].

    Deterministic: identical inputs reproduce the trajectory bitwise.  Raises
    BlowUpError when a component exceeds the blow-up threshold and
    NonFiniteStateError when one stops being finite.
    """
    kernel1, kernel2 = kernels
    truncated = kernel1.truncated_mass + kernel2.truncated_mass
    for label, kern in (("kernel1", kernel1), ("kernel2", kernel2)):
        if kern.truncated_mass > config.kernel_truncation_eps:
            raise ConfigError(
                f"{label} carries truncated tail mass {kern.truncated_mass} "
                f"above the configured bound {config.kernel_truncation_eps}")
    htimes, hstates = history_arrays(history)
    if not np.all(np.isfinite(hstates)):
        raise ConfigError("initial history contains non-finite values")
    taps, pp, idx1, w1, idx2, w2, w01, w02 = _model_arrays(params, kernels)
    n_steps = config.n_steps
    status, n_last, states, derivs = _stepper.run_delay_system(
        _stepper.infection_rhs, hstates[-1], taps, htimes, hstates, pp,
        idx1, w1, idx2, w2, w01, w02, config.dt, n_steps, BLOWUP_THRESHOLD)
    if status == _stepper.STATUS_NONFINITE:
        raise NonFiniteStateError(n_last * config.dt)
    if status == _stepper.STATUS_BLOWUP:
        raise BlowUpError(n_last * config.dt)
    times = np.arange(n_steps + 1, dtype=np.float64) * config.dt
    for arr in (times, states, derivs):
        arr.flags.writeable = False
    metadata = {
        "dt": config.dt,
        "t_end": config.t_end,
        "interpolation": config.interpolation,
        "truncated_mass": truncated,
        "parameters_fingerprint": params.fingerprint(),
    }
    return Trajectory(times=times, states=states, derivs=derivs, history=history,
                      params=params, kernels=(kernel1, kernel2), config=config,
                      metadata=metadata)
