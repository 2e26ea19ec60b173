"""Closed-form survival factors, reproduction numbers and equilibria.

Two printed conventions for the basic reproduction number are in circulation
for this model; they differ by a factor d4 in the denominator:

    derivation mode: R0 = (beta1*A1*k*A2*d3*x0 + beta2*A1*alpha2*x0*d4)
                          / (d3*d4*(alpha1 + d2))
    paper mode:      same numerator / (d3*(alpha1 + d2))

Only the derivation-mode value is consistent with the fixed-point structure of
the system (the closed-form equilibria below have zero steady-state residual
with it), so equilibria and all dynamical predictions use derivation mode.
Paper mode exists to reproduce the printed reference values of the simulation
scenarios and affects reported numbers only.

The CTL reproduction number in either mode is

    R1 = c_ctl*d1*d3*d4*(R0 - 1) / (h*d5*(beta1*k*A2*d3 + beta2*alpha2*d4))

with that mode's R0; its sign therefore matches the sign of R0 - 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from cytodelay.model import (
    MODE_DERIVATION,
    MODE_PAPER,
    MODES,
    DelayKernel,
    ModelParameters,
    State5,
)

# An equilibrium branch exists only strictly past its threshold; exact
# threshold values are degenerate and reported as non-existent.
EXISTENCE_TIE_TOL = 1e-12

# Max-abs steady-state residual accepted for a closed-form equilibrium,
# relative to its largest component.
RESIDUAL_REL_TOL = 1e-9


class NegativeDiscriminantError(ArithmeticError):
    """Delta < 0 while R1 > 1; signals an internal inconsistency."""


@dataclass(frozen=True)
class SurvivalFactors:
    """Expected survival fractions over the two delay periods, in (0, 1]."""

    a1: float
    a2: float


@dataclass(frozen=True)
class ReproductionNumbers:
    r0: float
    r1: float
    mode: str


@dataclass(frozen=True)
class EquilibriumSet:
    """Equilibria with existence flags, discriminant and residual validation.

    e0 is always (lam/d1, 0, 0, 0, 0).  e1 exists iff the derivation-mode
    R0 exceeds 1, e2 iff the derivation-mode R1 does; non-existent branches
    are None.  residual_norms maps each existing equilibrium name to the
    max-abs right-hand side of the model evaluated there with constant
    history (zero for a true fixed point, up to rounding).
    """

    e0: State5
    e1: Optional[State5]
    e2: Optional[State5]
    delta: float
    residual_norms: dict[str, float]

    def point(self, name: str) -> Optional[State5]:
        return {"E0": self.e0, "E1": self.e1, "E2": self.e2}[name]


def survival_factor(kernel: DelayKernel, m: float) -> float:
    """Integral of the kernel against e^{-m s}: the survival factor A_i.

    A Dirac kernel at tau gives e^{-m tau}; a tabulated kernel gives
    sum_j w_j e^{-m s_j}, accumulated with compensated summation.
    """
    if m < 0.0:
        raise ValueError(f"mortality exponent must be >= 0, got {m}")
    return math.fsum(float(w) for w in kernel.survival_weights(m))


def survival_factors(params: ModelParameters, kernel1: DelayKernel,
                     kernel2: DelayKernel) -> SurvivalFactors:
    return SurvivalFactors(a1=survival_factor(kernel1, params.m1),
                           a2=survival_factor(kernel2, params.m2))


def _infection_pressure(params: ModelParameters, a2: float) -> float:
    """The recurring combination beta1*k*A2*d3 + beta2*alpha2*d4."""
    return math.fsum((params.beta1 * params.k * a2 * params.d3,
                      params.beta2 * params.alpha2 * params.d4))


def _ctl_reproduction_number(params: ModelParameters, a2: float, r0: float) -> float:
    s = _infection_pressure(params, a2)
    return (params.c_ctl * params.d1 * params.d3 * params.d4 * (r0 - 1.0)
            / (params.h * params.d5 * s))


def reproduction_numbers(params: ModelParameters, factors: SurvivalFactors,
                         mode: str = MODE_DERIVATION) -> ReproductionNumbers:
    """Basic and CTL reproduction numbers under the selected convention.

    The derivation-mode R0 is computed as the paper-mode value divided by d4,
    which makes the algebraic relation between the two conventions hold
    exactly in floating point.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    x0 = params.lam / params.d1
    numerator = math.fsum((
        params.beta1 * factors.a1 * params.k * factors.a2 * params.d3 * x0,
        params.beta2 * factors.a1 * params.alpha2 * x0 * params.d4,
    ))
    r0_paper = numerator / (params.d3 * (params.alpha1 + params.d2))
    r0 = r0_paper if mode == MODE_PAPER else r0_paper / params.d4
    return ReproductionNumbers(r0=r0, r1=_ctl_reproduction_number(params, factors.a2, r0),
                               mode=mode)


def steady_state_residual(params: ModelParameters, factors: SurvivalFactors,
                          point: State5) -> np.ndarray:
    """Right-hand side of the model at a point held as constant history.

    With constant history the delayed integrals collapse to A_i-weighted
    instantaneous terms, so a fixed point returns the zero vector.  This is
    the validation oracle for the closed-form equilibria.
    """
    if not point.is_finite():
        raise ValueError("steady-state residual needs a finite point")
    x, y, c, v, z = point.x, point.y, point.c, point.v, point.z
    p = params
    return np.array([
        p.lam - p.beta1 * x * v - p.beta2 * x * c - p.d1 * x,
        factors.a1 * (p.beta1 * x * v + p.beta2 * x * c)
        - (p.alpha1 + p.d2) * y - p.p * y * z,
        p.alpha2 * y - p.d3 * c,
        p.k * factors.a2 * y - p.d4 * v,
        p.c_ctl * y * z / (p.h + z) - p.d5 * z,
    ])


def _residual_norm(params, factors, point: State5) -> float:
    return float(np.abs(steady_state_residual(params, factors, point)).max())


def equilibria(params: ModelParameters, factors: SurvivalFactors) -> EquilibriumSet:
    """All equilibria of the system, residual-validated.

    Thresholds always use derivation-mode reproduction numbers: with any other
    convention the closed forms are not fixed points of the system.
    """
    p = params
    a1, a2 = factors.a1, factors.a2
    x0 = p.lam / p.d1
    e0 = State5(x0, 0.0, 0.0, 0.0, 0.0)
    rep = reproduction_numbers(p, factors, MODE_DERIVATION)
    r0, r1 = rep.r0, rep.r1
    s = _infection_pressure(p, a2)
    q = p.alpha1 + p.d2

    e1 = None
    if r0 > 1.0 + EXISTENCE_TIE_TOL:
        y1 = p.d1 * p.d3 * p.d4 * (r0 - 1.0) / s
        e1 = State5(x0 / r0, y1, p.alpha2 / p.d3 * y1, p.k * a2 / p.d4 * y1, 0.0)

    # Discriminant of the quadratic for the CTL equilibrium level z2.
    b = p.d5 * (q + p.p * p.h) * s + p.d1 * p.d3 * p.d4 * p.p * p.c_ctl
    delta = b * b + 4.0 * p.p * s * s * p.h * q * p.d5 * p.d5 * (r1 - 1.0)

    e2 = None
    if r1 > 1.0 + EXISTENCE_TIE_TOL:
        if delta < 0.0:
            raise NegativeDiscriminantError(
                f"discriminant {delta} < 0 although R1 = {r1} > 1")
        z2 = (-b + math.sqrt(delta)) / (2.0 * p.p * p.d5 * s)
        x2 = (q + p.p * z2) * p.d3 * p.d4 / (a1 * s)
        y2 = p.d5 * (p.h + z2) / p.c_ctl
        c2 = p.alpha2 * p.d5 * (p.h + z2) / (p.c_ctl * p.d3)
        v2 = p.k * a2 * p.d5 * (p.h + z2) / (p.c_ctl * p.d4)
        e2 = State5(x2, y2, c2, v2, z2)

    residuals = {"E0": _residual_norm(p, factors, e0)}
    if e1 is not None:
        residuals["E1"] = _residual_norm(p, factors, e1)
    if e2 is not None:
        residuals["E2"] = _residual_norm(p, factors, e2)
    return EquilibriumSet(e0=e0, e1=e1, e2=e2, delta=delta, residual_norms=residuals)
