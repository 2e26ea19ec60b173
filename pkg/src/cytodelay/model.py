"""Parameters, state, delay kernels and initial histories of the infection model.

The governing system is

    dx/dt = lambda - beta1*x*v - beta2*x*c - d1*x
    dy/dt = int f1(s) e^{-m1 s} (beta1*x(t-s)*v(t-s) + beta2*x(t-s)*c(t-s)) ds
            - (alpha1 + d2)*y - p*y*z
    dc/dt = alpha2*y - d3*c
    dv/dt = k * int f2(s) e^{-m2 s} y(t-s) ds - d4*v
    dz/dt = c_ctl * y*z/(h + z) - d5*z

where f1, f2 are probability densities over delay lengths (the delay kernels).
A Dirac kernel recovers a discrete lag; a tabulated kernel carries explicit
quadrature nodes and weights.  All quantities are in arbitrary consistent
concentration/time units; the toolkit never converts units.

Everything defined here is immutable after construction and safe to share
across concurrent workers.
"""

from __future__ import annotations

import json
import math
from collections import namedtuple
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

# Canonical wire names of the 16 rate constants, in configuration order.
PARAMETER_KEYS = (
    "lambda", "beta1", "beta2", "d1", "d2", "d3", "d4", "d5",
    "alpha1", "alpha2", "k", "c", "p", "h", "m1", "m2",
)

# Wire name -> attribute name ("lambda" is reserved; "c" collides with the
# cytokine state variable, so the CTL proliferation rate is c_ctl).
_ATTR_FOR_KEY = {
    "lambda": "lam", "c": "c_ctl",
    **{k: k for k in PARAMETER_KEYS if k not in ("lambda", "c")},
}
_KEY_FOR_ATTR = {attr: key for key, attr in _ATTR_FOR_KEY.items()}

STATE_NAMES = ("x", "y", "c", "v", "z")

# Tabulated kernel weights plus any recorded truncated tail mass must account
# for a full probability distribution to this accuracy.
KERNEL_MASS_TOL = 1e-12


Violation = namedtuple("Violation", ("kind", "name"))


class ParameterValidationError(ValueError):
    """Raised by validate_parameters; lists every violated constraint."""

    def __init__(self, violations: Sequence[Violation]):
        self.violations = tuple(violations)
        msg = "; ".join(f"{v.kind} field '{v.name}'" for v in self.violations)
        super().__init__(f"invalid model parameters: {msg}")


class PositiveThetaError(ValueError):
    """History lookups are defined on theta <= 0 only."""


class ConfigError(ValueError):
    """Malformed run configuration (bad JSON layout, invalid step size, ...)."""


@dataclass(frozen=True)
class ModelParameters:
    """The 16 rate constants of the model, all strictly positive and finite.

    Rates are per unit time; beta1, beta2 and p additionally carry a
    1/concentration factor, h is a concentration and lam a concentration
    per unit time.
    """

    lam: float
    """Recruitment rate of uninfected cells."""
    beta1: float
    """Virus-to-cell infection rate."""
    beta2: float
    """Cytokine-enhanced infection rate."""
    d1: float
    """Decay rate of uninfected cells."""
    d2: float
    """Decay rate of infected cells."""
    d3: float
    """Decay rate of cytokines."""
    d4: float
    """Decay rate of free virus."""
    d5: float
    """Decay rate of CTL cells."""
    alpha1: float
    """Pyroptosis death rate of infected cells."""
    alpha2: float
    """Cytokine production rate."""
    k: float
    """Virion burst rate."""
    c_ctl: float
    """CTL proliferation rate."""
    p: float
    """CTL killing rate."""
    h: float
    """CTL saturation constant."""
    m1: float
    """Mortality exponent over the cell-infection delay period."""
    m2: float
    """Mortality exponent over the virion-production delay period."""

    def as_dict(self) -> dict[str, float]:
        """Parameters under their canonical wire names, in canonical order."""
        return {key: getattr(self, _ATTR_FOR_KEY[key]) for key in PARAMETER_KEYS}

    def fingerprint(self) -> str:
        """Hex digest identifying this parameter set (stable across runs)."""
        import hashlib

        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def validate_parameters(raw: Mapping[str, float]) -> ModelParameters:
    """Validate a name -> value map holding all 16 rate constants.

    Returns the immutable parameter set, or raises ParameterValidationError
    listing every missing, non-finite or non-positive field.  Validation is
    idempotent: validating as_dict() of a valid set reproduces it exactly.
    """
    violations: list[Violation] = []
    values: dict[str, float] = {}
    for key in PARAMETER_KEYS:
        if key not in raw:
            violations.append(Violation("missing", key))
            continue
        try:
            value = float(raw[key])
        except (TypeError, ValueError):
            violations.append(Violation("non_finite", key))
            continue
        if not math.isfinite(value):
            violations.append(Violation("non_finite", key))
        elif value <= 0.0:
            violations.append(Violation("non_positive", key))
        else:
            values[_ATTR_FOR_KEY[key]] = value
    if violations:
        raise ParameterValidationError(violations)
    return ModelParameters(**values)


@dataclass(frozen=True)
class State5:
    """One point of the five-dimensional state (x, y, c, v, z)."""

    x: float
    y: float
    c: float
    v: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.c, self.v, self.z], dtype=float)

    @classmethod
    def from_array(cls, arr: Sequence[float]) -> "State5":
        a = np.asarray(arr, dtype=float)
        if a.shape != (5,):
            raise ValueError(f"state must have exactly 5 components, got shape {a.shape}")
        return cls(*(float(v) for v in a))

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.x, self.y, self.c, self.v, self.z))

    def is_nonnegative(self) -> bool:
        return min(self.x, self.y, self.c, self.v, self.z) >= 0.0


@dataclass(frozen=True)
class DiracKernel:
    """Point-mass delay kernel: the whole distribution sits at lag tau >= 0.

    tau = 0 is accepted and reduces the delayed term to an instantaneous one.
    """

    tau: float

    def __post_init__(self):
        if not math.isfinite(self.tau) or self.tau < 0.0:
            raise ValueError(f"Dirac kernel lag must be finite and >= 0, got {self.tau}")

    @property
    def truncated_mass(self) -> float:
        return 0.0

    def nodes_array(self) -> np.ndarray:
        return np.array([self.tau], dtype=float)

    def weights_array(self) -> np.ndarray:
        return np.array([1.0], dtype=float)

    def survival_weights(self, m: float) -> np.ndarray:
        """Quadrature weights including the survival factor e^{-m s}."""
        return np.array([math.exp(-m * self.tau)], dtype=float)

    @property
    def max_lag(self) -> float:
        return self.tau


@dataclass(frozen=True)
class TabulatedKernel:
    """Delay kernel given by quadrature nodes s_j >= 0 and weights w_j >= 0.

    The weights plus any recorded truncated tail mass must sum to 1 within
    KERNEL_MASS_TOL: the kernel represents a probability distribution, and
    truncating an infinite-support density must not silently renormalize it.
    """

    nodes: tuple[float, ...]
    weights: tuple[float, ...]
    truncated_mass: float = 0.0
    """Tail mass of the represented density lost to truncation (metadata)."""

    def __init__(self, nodes: Sequence[float], weights: Sequence[float],
                 truncated_mass: float = 0.0):
        nodes = tuple(float(s) for s in nodes)
        weights = tuple(float(w) for w in weights)
        if len(nodes) == 0 or len(nodes) != len(weights):
            raise ValueError("kernel needs equally many nodes and weights, at least one each")
        if not all(math.isfinite(s) and s >= 0.0 for s in nodes):
            raise ValueError("kernel nodes must be finite and >= 0")
        if any(b <= a for a, b in zip(nodes, nodes[1:])):
            raise ValueError("kernel nodes must be strictly increasing")
        if not all(math.isfinite(w) and w >= 0.0 for w in weights):
            raise ValueError("kernel weights must be finite and >= 0")
        mass = math.fsum(weights) + truncated_mass
        if abs(mass - 1.0) > KERNEL_MASS_TOL:
            raise ValueError(
                f"kernel weights plus truncated mass must sum to 1 "
                f"(got {mass!r}); renormalizing is not done implicitly")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "truncated_mass", float(truncated_mass))

    def nodes_array(self) -> np.ndarray:
        return np.array(self.nodes, dtype=float)

    def weights_array(self) -> np.ndarray:
        return np.array(self.weights, dtype=float)

    def survival_weights(self, m: float) -> np.ndarray:
        return self.weights_array() * np.exp(-m * self.nodes_array())

    @property
    def max_lag(self) -> float:
        return self.nodes[-1]


DelayKernel = Union[DiracKernel, TabulatedKernel]


@dataclass(frozen=True)
class ConstantHistory:
    """History that holds one state for every theta <= 0."""

    value: State5

    @property
    def min_time(self) -> float:
        return 0.0

    def sample(self, thetas: np.ndarray) -> np.ndarray:
        out = np.empty((len(thetas), 5))
        out[:] = self.value.as_array()
        return out


@dataclass(frozen=True)
class TabulatedHistory:
    """History tabulated at times theta_j <= 0, interpolated linearly.

    Times must be strictly increasing and end at theta = 0; queries below the
    tabulated range hold the earliest value.
    """

    times: tuple[float, ...]
    states: tuple[State5, ...]

    def __init__(self, times: Sequence[float], states: Sequence[State5]):
        times = tuple(float(t) for t in times)
        states = tuple(states)
        if len(times) == 0 or len(times) != len(states):
            raise ValueError("history needs equally many times and states, at least one each")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("history times must be strictly increasing")
        if times[-1] != 0.0:
            raise ValueError("history times must end at theta = 0")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    @property
    def min_time(self) -> float:
        return self.times[0]

    def sample(self, thetas: np.ndarray) -> np.ndarray:
        tgrid = np.array(self.times)
        sgrid = np.array([s.as_array() for s in self.states])
        out = np.empty((len(thetas), 5))
        for j in range(5):
            # np.interp holds the boundary values outside the grid
            out[:, j] = np.interp(thetas, tgrid, sgrid[:, j])
        return out


InitialHistory = Union[ConstantHistory, TabulatedHistory]


def history_at(history: InitialHistory, theta: float) -> State5:
    """State prescribed by the initial history at a time theta <= 0."""
    if theta > 0.0:
        raise PositiveThetaError(f"history is defined for theta <= 0, got {theta}")
    return State5.from_array(history.sample(np.array([theta]))[0])


def history_arrays(history: InitialHistory) -> tuple[np.ndarray, np.ndarray]:
    """(times, states) arrays for the low-level integrator, times ending at 0."""
    if isinstance(history, ConstantHistory):
        return np.array([0.0]), history.value.as_array().reshape(1, 5)
    return (np.array(history.times),
            np.array([s.as_array() for s in history.states]))


# ---------------------------------------------------------------------------
# Run configuration (the JSON surface consumed by the command line)
# ---------------------------------------------------------------------------

MODE_DERIVATION = "derivation"
MODE_PAPER = "paper"
MODES = (MODE_DERIVATION, MODE_PAPER)

DEFAULT_DT = 0.01


@dataclass(frozen=True)
class RunConfiguration:
    """Validated contents of a run-configuration document."""

    parameters: ModelParameters
    kernel1: DelayKernel
    kernel2: DelayKernel
    history: InitialHistory
    dt: float = DEFAULT_DT
    t_end: float = 100.0
    mode: str = MODE_DERIVATION


def _kernel_from_dict(obj, label: str) -> DelayKernel:
    if not isinstance(obj, Mapping) or "type" not in obj:
        raise ConfigError(f"{label} must be an object with a 'type' key")
    kind = obj["type"]
    try:
        if kind == "dirac":
            return DiracKernel(tau=float(obj["tau"]))
        if kind == "tabulated":
            return TabulatedKernel(
                nodes=obj["nodes"], weights=obj["weights"],
                truncated_mass=float(obj.get("truncated_mass", 0.0)))
    except KeyError as exc:
        raise ConfigError(f"{label} is missing key {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{label} is invalid: {exc}") from exc
    raise ConfigError(f"{label} has unknown type {kind!r} (expected 'dirac' or 'tabulated')")


def _history_from_dict(obj) -> InitialHistory:
    if not isinstance(obj, Mapping) or "type" not in obj:
        raise ConfigError("history must be an object with a 'type' key")
    kind = obj["type"]
    try:
        if kind == "constant":
            return ConstantHistory(State5.from_array(obj["value"]))
        if kind == "tabulated":
            states = [State5.from_array(row) for row in obj["states"]]
            return TabulatedHistory(times=obj["times"], states=states)
    except KeyError as exc:
        raise ConfigError(f"history is missing key {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"history is invalid: {exc}") from exc
    raise ConfigError(f"history has unknown type {kind!r} (expected 'constant' or 'tabulated')")


def config_from_dict(doc: Mapping) -> RunConfiguration:
    """Build a validated RunConfiguration from a parsed JSON document."""
    if not isinstance(doc, Mapping):
        raise ConfigError("configuration must be a JSON object")
    if "parameters" not in doc:
        raise ConfigError("configuration is missing 'parameters'")
    try:
        params = validate_parameters(doc["parameters"])
    except ParameterValidationError as exc:
        raise ConfigError(str(exc)) from exc
    if "kernel1" not in doc or "kernel2" not in doc:
        raise ConfigError("configuration needs both 'kernel1' and 'kernel2'")
    kernel1 = _kernel_from_dict(doc["kernel1"], "kernel1")
    kernel2 = _kernel_from_dict(doc["kernel2"], "kernel2")
    if "history" not in doc:
        raise ConfigError("configuration is missing 'history'")
    history = _history_from_dict(doc["history"])

    integration = doc.get("integration", {})
    if not isinstance(integration, Mapping):
        raise ConfigError("'integration' must be an object")
    try:
        dt = float(integration.get("dt", DEFAULT_DT))
        t_end = float(integration["t_end"])
    except KeyError:
        raise ConfigError("'integration' must provide 't_end'")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'integration' is invalid: {exc}") from exc

    mode = doc.get("mode", MODE_DERIVATION)
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    return RunConfiguration(parameters=params, kernel1=kernel1, kernel2=kernel2,
                            history=history, dt=dt, t_end=t_end, mode=mode)


def load_config(path) -> RunConfiguration:
    """Read and validate a JSON configuration file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return config_from_dict(doc)
