"""Scenario registry, attractor classification and delay-regime sweeps.

The registry embeds the three simulation scenarios verbatim: one parameter
row per target equilibrium, three initial histories each, and three discrete
lag pairs each.  classify() operationalizes "converges to" by comparing the
trailing window of a trajectory against the residual-validated equilibria,
and sweep() maps reproduction numbers and predicted/observed regimes over a
grid of lag pairs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from cytodelay.analysis import (
    EquilibriumSet,
    equilibria,
    reproduction_numbers,
    survival_factors,
)
from cytodelay.integrator import (
    BlowUpError,
    IntegrationConfig,
    NonFiniteStateError,
    Trajectory,
    integrate,
)
from cytodelay.model import (
    MODE_DERIVATION,
    MODE_PAPER,
    ConstantHistory,
    DiracKernel,
    InitialHistory,
    ModelParameters,
    State5,
    validate_parameters,
)

NOT_CONVERGED = "NotConverged"
BOUNDARY = "Boundary"

# Reproduction numbers within this band of 1 classify as Boundary rather
# than silently falling on either side.
REGIME_BOUNDARY_BAND = 1e-9

# Trailing-window convergence test: absolute tolerance in state units over
# the final fraction of the horizon.
CLASSIFY_TOL = 1e-3
CLASSIFY_WINDOW = 0.1

DEFAULT_DT = 0.01


class UnknownScenarioError(KeyError):
    """Scenario name outside the embedded registry."""


@dataclass(frozen=True)
class Scenario:
    """One registry entry: a parameter row with its histories and lag pairs."""

    name: str
    params: ModelParameters
    histories: tuple[State5, ...]
    lag_pairs: tuple[tuple[float, float], ...]
    t_end: float
    """Default horizon for reproductions of this scenario (empirical)."""


def _row(**kv) -> ModelParameters:
    return validate_parameters({"lambda": kv.pop("lam"), "c": kv.pop("c_ctl"), **kv})


SCENARIOS: dict[str, Scenario] = {
    "E0": Scenario(
        name="E0",
        params=_row(lam=1.0, beta1=0.004, beta2=0.005, d1=0.2, m1=0.3,
                    alpha1=0.1, d2=0.25, p=0.2, alpha2=0.1, d3=0.25,
                    k=8.0, m2=0.3, d4=0.25, c_ctl=0.3, h=0.01, d5=0.25),
        histories=(State5(5, 5, 6, 3, 3.5),
                   State5(6, 2, 7, 2, 4.5),
                   State5(4, 3, 8, 4, 4)),
        lag_pairs=((5.0, 3.0), (5.0, 2.0), (2.0, 3.0)),
        t_end=1000.0,
    ),
    "E1": Scenario(
        name="E1",
        params=_row(lam=20.0, beta1=0.004, beta2=0.005, d1=0.2, m1=0.3,
                    alpha1=0.1, d2=0.25, p=0.02, alpha2=0.6, d3=0.25,
                    k=20.0, m2=0.3, d4=0.25, c_ctl=0.003, h=0.03, d5=0.25),
        histories=(State5(5, 5, 6, 3, 35),
                   State5(6, 2, 7, 2, 45),
                   State5(4, 3, 8, 4, 25)),
        lag_pairs=((5.0, 3.0), (5.0, 2.0), (4.0, 7.0)),
        t_end=2000.0,
    ),
    "E2": Scenario(
        name="E2",
        params=_row(lam=20.0, beta1=0.004, beta2=0.005, d1=0.2, m1=0.3,
                    alpha1=0.1, d2=0.25, p=0.02, alpha2=0.6, d3=0.25,
                    k=20.0, m2=0.3, d4=0.25, c_ctl=0.03, h=0.03, d5=0.25),
        histories=(State5(12, 4, 35, 1, 10),
                   State5(25, 3, 40, 2, 15),
                   State5(40, 10, 25, 4, 13)),
        lag_pairs=((5.0, 4.0), (5.0, 2.0), (2.0, 4.0)),
        t_end=2000.0,
    ),
}


def scenario(name: str) -> Scenario:
    """The embedded registry entry for E0, E1 or E2, byte-identical per call."""
    try:
        return SCENARIOS[name]
    except KeyError:
        raise UnknownScenarioError(
            f"unknown scenario {name!r}; expected one of {tuple(SCENARIOS)}") from None


def predicted_regime(r0: float, r1: float,
                     band: float = REGIME_BOUNDARY_BAND) -> str:
    """Regime predicted by threshold position: E0, E1, E2 or Boundary."""
    if abs(r0 - 1.0) <= band:
        return BOUNDARY
    if r0 < 1.0:
        return "E0"
    if abs(r1 - 1.0) <= band:
        return BOUNDARY
    return "E1" if r1 < 1.0 else "E2"


def classify(traj: Trajectory, eqs: EquilibriumSet,
             window: float = CLASSIFY_WINDOW, tol: float = CLASSIFY_TOL) -> str:
    """Name the equilibrium the trajectory has settled on, if any.

    The final `window` fraction of the horizon must both be settled (max
    per-component oscillation <= tol) and lie within sup-norm distance tol of
    an existing equilibrium; otherwise NotConverged.  Tolerances are absolute,
    in state units.
    """
    t_start = (1.0 - window) * traj.t_end
    win = traj.states[traj.times >= t_start - 1e-9 * traj.dt]
    oscillation = float((win.max(axis=0) - win.min(axis=0)).max())
    if oscillation > tol:
        return NOT_CONVERGED
    best_name, best_dist = NOT_CONVERGED, np.inf
    for name in ("E0", "E1", "E2"):
        point = eqs.point(name)
        if point is None:
            continue
        dist = float(np.abs(win - point.as_array()).max())
        if dist < tol and dist < best_dist:
            best_name, best_dist = name, dist
    return best_name


@dataclass(frozen=True)
class RegimeCell:
    """One sweep cell: reproduction numbers in both modes plus regimes."""

    tau1: float
    tau2: float
    r0_derivation: float
    r1_derivation: float
    r0_paper: float
    r1_paper: float
    predicted: str
    observed: Optional[str] = None


def sweep(params: ModelParameters, tau1_grid: Iterable[float],
          tau2_grid: Iterable[float], simulate: bool = False,
          history: Optional[InitialHistory] = None,
          dt: float = DEFAULT_DT, t_end: float = 1000.0,
          tol: float = CLASSIFY_TOL) -> list[RegimeCell]:
    """Map the (tau1, tau2) plane to reproduction numbers and regimes.

    Cells are ordered tau1-major and evaluated independently; with `simulate`
    each cell also integrates from `history` and records the observed
    classification, integration failures becoming per-cell markers instead of
    aborting the grid.
    """
    tau1s = [float(t) for t in tau1_grid]
    tau2s = [float(t) for t in tau2_grid]
    if any(t < 0 or not np.isfinite(t) for t in tau1s + tau2s):
        raise ValueError("sweep lags must be finite and >= 0")
    if simulate and history is None:
        raise ValueError("simulate=True needs an initial history")
    cells: list[RegimeCell] = []
    for tau1 in tau1s:
        for tau2 in tau2s:
            kernels = (DiracKernel(tau1), DiracKernel(tau2))
            factors = survival_factors(params, *kernels)
            rder = reproduction_numbers(params, factors, MODE_DERIVATION)
            rpap = reproduction_numbers(params, factors, MODE_PAPER)
            observed = None
            if simulate:
                try:
                    traj = integrate(params, kernels, history,
                                     IntegrationConfig(dt=dt, t_end=t_end))
                    observed = classify(traj, equilibria(params, factors), tol=tol)
                except BlowUpError:
                    observed = "blow-up"
                except NonFiniteStateError:
                    observed = "non-finite"
            cells.append(RegimeCell(
                tau1=tau1, tau2=tau2,
                r0_derivation=rder.r0, r1_derivation=rder.r1,
                r0_paper=rpap.r0, r1_paper=rpap.r1,
                predicted=predicted_regime(rder.r0, rder.r1),
                observed=observed))
    return cells


SWEEP_CSV_HEADER = "tau1,tau2,r0_derivation,r1_derivation,r0_paper,r1_paper,predicted,observed"


def sweep_csv(cells: Sequence[RegimeCell]) -> str:
    """Render sweep cells as CSV (LF line endings, 17 significant digits)."""
    lines = [SWEEP_CSV_HEADER]
    for cell in cells:
        lines.append(",".join((
            f"{cell.tau1:.17g}", f"{cell.tau2:.17g}",
            f"{cell.r0_derivation:.17g}", f"{cell.r1_derivation:.17g}",
            f"{cell.r0_paper:.17g}", f"{cell.r1_paper:.17g}",
            cell.predicted, cell.observed if cell.observed is not None else "")))
    return "\n".join(lines) + "\n"
