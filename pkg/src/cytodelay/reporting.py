"""Bit-exact serialization of trajectories, summaries and sweep grids.

Trajectory CSVs carry the header t,x,y,c,v,z (plus L,B when monitors are
requested), numbers with 17 significant digits, LF line endings and no locale
dependence.  Summary documents are key-sorted JSON; re-serializing a summary
is byte-identical.
"""

from __future__ import annotations

import json
from typing import Optional

import numpy as np

from cytodelay.analysis import EquilibriumSet, ReproductionNumbers, SurvivalFactors
from cytodelay.certificates import CertificateReport
from cytodelay.experiments import predicted_regime
from cytodelay.integrator import Trajectory
from cytodelay.model import ModelParameters, State5

CSV_HEADER = "t,x,y,c,v,z"
CSV_HEADER_MONITORS = "t,x,y,c,v,z,L,B"


def write_trajectory_csv(path, traj: Trajectory,
                         lyapunov: Optional[np.ndarray] = None,
                         bound: Optional[np.ndarray] = None) -> None:
    """Write the dense trajectory, optionally with monitor columns L and B."""
    columns = [traj.times, traj.states]
    header = CSV_HEADER
    if lyapunov is not None or bound is not None:
        if lyapunov is None or bound is None:
            raise ValueError("monitor output needs both the L and B series")
        columns += [lyapunov[:, None], bound[:, None]]
        header = CSV_HEADER_MONITORS
    table = np.column_stack([np.asarray(c) for c in columns])
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(header + "\n")
        np.savetxt(fh, table, fmt="%.17g", delimiter=",", newline="\n")


def stable_json(document) -> str:
    """Key-sorted JSON with a trailing newline; byte-stable per document."""
    return json.dumps(document, sort_keys=True, indent=2) + "\n"


def write_json(path, document) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(stable_json(document))


def state_to_list(state: Optional[State5]) -> Optional[list[float]]:
    return None if state is None else [state.x, state.y, state.c, state.v, state.z]


def equilibria_to_dict(eqs: EquilibriumSet) -> dict:
    doc = {"delta": eqs.delta}
    for name in ("E0", "E1", "E2"):
        point = eqs.point(name)
        if point is None:
            doc[name] = None
        else:
            doc[name] = {"state": state_to_list(point),
                         "residual": eqs.residual_norms[name]}
    return doc


def reproduction_to_dict(rep: ReproductionNumbers) -> dict:
    return {"r0": rep.r0, "r1": rep.r1}


def run_summary(params: ModelParameters, factors: SurvivalFactors,
                rep_derivation: ReproductionNumbers, rep_paper: ReproductionNumbers,
                eqs: EquilibriumSet, classification: Optional[str],
                certificates: list[CertificateReport],
                integration: Optional[dict] = None,
                extra: Optional[dict] = None) -> dict:
    """Assemble the canonical summary document for one run."""
    regime_derivation = predicted_regime(rep_derivation.r0, rep_derivation.r1)
    regime_paper = predicted_regime(rep_paper.r0, rep_paper.r1)
    doc = {
        "parameters": params.as_dict(),
        "parameters_fingerprint": params.fingerprint(),
        "survival_factors": {"a1": factors.a1, "a2": factors.a2},
        "reproduction_numbers": {
            "derivation": reproduction_to_dict(rep_derivation),
            "paper": reproduction_to_dict(rep_paper),
        },
        "regime_prediction": {
            "derivation": regime_derivation,
            "paper": regime_paper,
            "modes_agree": regime_derivation == regime_paper,
        },
        "equilibria": equilibria_to_dict(eqs),
        "classification": classification,
        "certificates": [c.as_dict() for c in certificates],
    }
    if integration is not None:
        doc["integration"] = integration
    if extra:
        doc.update(extra)
    return doc


def integration_metadata(traj: Trajectory) -> dict:
    return {
        "dt": traj.config.dt,
        "t_end": traj.config.t_end,
        "interpolation": traj.config.interpolation,
        "truncated_mass": traj.metadata["truncated_mass"],
    }
