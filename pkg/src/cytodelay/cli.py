"""Command-line surface: analyze, simulate, certify, sweep and reproduce.

Exit codes: 0 success, 1 invalid configuration or flags, 2 certificate
failure, 3 numerical failure (blow-up or non-finite state).  All outputs are
deterministic: repeating a command byte-reproduces its CSV and JSON files.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from cytodelay import analysis, certificates, experiments, reporting
from cytodelay.integrator import (
    BlowUpError,
    IntegrationConfig,
    NonFiniteStateError,
    Trajectory,
    integrate,
)
from cytodelay.model import (
    MODE_DERIVATION,
    MODES,
    ConfigError,
    ConstantHistory,
    DiracKernel,
    ModelParameters,
    ParameterValidationError,
    RunConfiguration,
    State5,
    load_config,
)

EXIT_OK = 0
EXIT_BAD_CONFIG = 1
EXIT_CERTIFICATE_FAILURE = 2
EXIT_NUMERICAL_FAILURE = 3

# Boundary-state samples drawn by `certify`; fixed seed keeps reports stable.
CONE_SAMPLES = 1000
CONE_SEED = 176189


class _CliError(Exception):
    """Flag or configuration problem surfaced as exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _CliError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="cytodelay", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="reproduction numbers and equilibria")
    p.add_argument("--config", help="run-configuration JSON file")
    p.add_argument("--scenario", help="registry scenario name (E0, E1 or E2)")
    p.add_argument("--lags", help="Dirac lags 'tau1,tau2' (with --scenario)")
    p.add_argument("--mode", choices=MODES, default=None,
                   help="reproduction-number convention (default: derivation)")

    p = sub.add_parser("simulate", help="integrate one configuration to CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="trajectory CSV path")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--monitors", action="store_true",
                   help="append Lyapunov (L) and load (B) columns")

    p = sub.add_parser("certify", help="run all applicable certificates")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="report JSON path")

    p = sub.add_parser("sweep", help="map regimes over a lag grid")
    p.add_argument("--scenario", required=True)
    p.add_argument("--tau1", required=True, help="grid 'lo:hi:step'")
    p.add_argument("--tau2", required=True, help="grid 'lo:hi:step'")
    p.add_argument("--simulate", action="store_true",
                   help="also integrate each cell and classify the attractor")
    p.add_argument("--out", required=True, help="grid CSV path")

    p = sub.add_parser("reproduce", help="run a scenario's full design")
    p.add_argument("scenario", choices=tuple(experiments.SCENARIOS))
    p.add_argument("--out-dir", required=True)
    p.add_argument("--svg", action="store_true",
                   help="also render one state plot per run")
    return parser


def _parse_lags(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise _CliError(f"--lags expects 'tau1,tau2', got {text!r}")
    try:
        tau1, tau2 = (float(p) for p in parts)
    except ValueError:
        raise _CliError(f"--lags expects two numbers, got {text!r}") from None
    if tau1 < 0 or tau2 < 0:
        raise _CliError("lags must be >= 0")
    return tau1, tau2


def _parse_grid(text: str, flag: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise _CliError(f"{flag} expects 'lo:hi:step', got {text!r}")
    try:
        lo, hi, step = (float(p) for p in parts)
    except ValueError:
        raise _CliError(f"{flag} expects numbers in 'lo:hi:step', got {text!r}") from None
    if step <= 0 or hi < lo:
        raise _CliError(f"{flag} needs step > 0 and hi >= lo")
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return [lo + i * step for i in range(count)]


def _setting(run: RunConfiguration):
    kernels = (run.kernel1, run.kernel2)
    factors = analysis.survival_factors(run.parameters, *kernels)
    return kernels, factors


def _lyapunov_for_regime(params: ModelParameters, factors, kernels,
                         traj: Trajectory, eqs) -> tuple[Optional[certificates.LyapunovSeries], str]:
    rep = analysis.reproduction_numbers(params, factors, MODE_DERIVATION)
    which = certificates.applicable_lyapunov(rep.r0, rep.r1)
    if which == "boundary":
        return None, which
    ref = {"L0": None, "L1": eqs.e1, "L2": eqs.e2}[which]
    series = certificates.lyapunov_series(which, params, factors, kernels, traj,
                                          equilibrium=ref)
    return series, which


def _run_certificates(params, factors, kernels, traj, eqs) -> list:
    reports = [
        certificates.check_nonnegativity(traj),
        certificates.check_boundedness(params, factors, traj),
    ]
    series, which = _lyapunov_for_regime(params, factors, kernels, traj, eqs)
    if series is None:
        reports.append(certificates.CertificateReport(
            name="monotone-decrease", passed=True, worst_violation=0.0,
            worst_time=0.0, tolerance=0.0,
            notes="boundary regime: a reproduction number equals 1 within "
                  f"{certificates.REGIME_BOUNDARY_BAND}; decrease uncertified"))
    else:
        reports.append(certificates.check_monotone_decrease(series))
    return reports


def _cmd_analyze(args) -> int:
    if bool(args.config) == bool(args.scenario):
        raise _CliError("analyze needs exactly one of --config or --scenario")
    if args.config:
        run = load_config(args.config)
        params, kernels = run.parameters, (run.kernel1, run.kernel2)
        mode = args.mode or run.mode
    else:
        scen = experiments.scenario(args.scenario)
        if not args.lags:
            raise _CliError("--scenario needs --lags 'tau1,tau2'")
        tau1, tau2 = _parse_lags(args.lags)
        params, kernels = scen.params, (DiracKernel(tau1), DiracKernel(tau2))
        mode = args.mode or MODE_DERIVATION
    factors = analysis.survival_factors(params, *kernels)
    rep = analysis.reproduction_numbers(params, factors, mode)
    eqs = analysis.equilibria(params, factors)
    doc = {
        "mode": mode,
        "reproduction_numbers": reporting.reproduction_to_dict(rep),
        "survival_factors": {"a1": factors.a1, "a2": factors.a2},
        "equilibria": reporting.equilibria_to_dict(eqs),
        "parameters_fingerprint": params.fingerprint(),
    }
    sys.stdout.write(reporting.stable_json(doc))
    return EXIT_OK


def _integrate_config(run: RunConfiguration, dt=None, t_end=None) -> Trajectory:
    config = IntegrationConfig(dt=dt if dt is not None else run.dt,
                               t_end=t_end if t_end is not None else run.t_end)
    return integrate(run.parameters, (run.kernel1, run.kernel2), run.history, config)


def _cmd_simulate(args) -> int:
    run = load_config(args.config)
    traj = _integrate_config(run, args.dt, args.t_end)
    lyap = bound = None
    if args.monitors:
        kernels, factors = _setting(run)
        eqs = analysis.equilibria(run.parameters, factors)
        series, _ = _lyapunov_for_regime(run.parameters, factors, kernels, traj, eqs)
        lyap = series.values if series is not None else np.full(len(traj.times), np.nan)
        bound = certificates.boundedness_series(run.parameters, traj)
    reporting.write_trajectory_csv(args.out, traj, lyapunov=lyap, bound=bound)
    return EXIT_OK


def _sample_cone(params, kernels, rng) -> list:
    """Randomized boundary states with nonnegative constant histories."""
    worst = -np.inf
    worst_note = ""
    for _ in range(CONE_SAMPLES):
        comps = rng.uniform(0.0, 10.0, size=5)
        zero_mask = rng.random(5) < 0.5
        if not zero_mask.any():
            zero_mask[rng.integers(5)] = True
        comps[zero_mask] = 0.0
        history = ConstantHistory(State5(*rng.uniform(0.0, 10.0, size=5)))
        report = certificates.check_cone_invariance(
            params, kernels, State5(*comps), history)
        if report.worst_violation > worst:
            worst = report.worst_violation
            worst_note = report.notes
    return [certificates.CertificateReport(
        name="cone-invariance-sample", passed=worst <= 0.0,
        worst_violation=float(worst), worst_time=0.0, tolerance=0.0,
        notes=f"{CONE_SAMPLES} randomized boundary states; worst case {worst_note}")]


def _cmd_certify(args) -> int:
    run = load_config(args.config)
    kernels, factors = _setting(run)
    params = run.parameters
    eqs = analysis.equilibria(params, factors)
    traj = _integrate_config(run)
    reports = _sample_cone(params, kernels, np.random.default_rng(CONE_SEED))
    reports += _run_certificates(params, factors, kernels, traj, eqs)
    doc = reporting.run_summary(
        params, factors,
        analysis.reproduction_numbers(params, factors, MODE_DERIVATION),
        analysis.reproduction_numbers(params, factors, "paper"),
        eqs, experiments.classify(traj, eqs), reports,
        integration=reporting.integration_metadata(traj))
    reporting.write_json(args.out, doc)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CERTIFICATE_FAILURE


def _cmd_sweep(args) -> int:
    scen = experiments.scenario(args.scenario)
    cells = experiments.sweep(
        scen.params,
        _parse_grid(args.tau1, "--tau1"),
        _parse_grid(args.tau2, "--tau2"),
        simulate=args.simulate,
        history=ConstantHistory(scen.histories[0]) if args.simulate else None,
        t_end=scen.t_end)
    with open(args.out, "w", encoding="ascii", newline="\n") as fh:
        fh.write(experiments.sweep_csv(cells))
    return EXIT_OK


def _cmd_reproduce(args) -> int:
    scen = experiments.scenario(args.scenario)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run_docs = []
    worst_exit = EXIT_OK
    for phi_idx, phi in enumerate(scen.histories):
        for tau1, tau2 in scen.lag_pairs:
            kernels = (DiracKernel(tau1), DiracKernel(tau2))
            factors = analysis.survival_factors(scen.params, *kernels)
            eqs = analysis.equilibria(scen.params, factors)
            stem = f"{scen.name}_phi{phi_idx + 1}_lags{tau1:g}-{tau2:g}"
            entry = {"history": reporting.state_to_list(phi),
                     "lags": [tau1, tau2],
                     "trajectory_csv": stem + ".csv"}
            try:
                traj = integrate(scen.params, kernels, ConstantHistory(phi),
                                 IntegrationConfig(dt=0.01, t_end=scen.t_end))
            except (BlowUpError, NonFiniteStateError) as exc:
                entry.update({"error": str(exc), "trajectory_csv": None})
                run_docs.append(entry)
                worst_exit = EXIT_NUMERICAL_FAILURE
                continue
            reporting.write_trajectory_csv(out_dir / entry["trajectory_csv"], traj)
            if args.svg:
                from cytodelay.plots import render_trajectory_svg

                entry["figure_svg"] = stem + ".svg"
                render_trajectory_svg(traj, out_dir / entry["figure_svg"],
                                      title=stem)
            reports = _run_certificates(scen.params, factors, kernels, traj, eqs)
            entry.update(reporting.run_summary(
                scen.params, factors,
                analysis.reproduction_numbers(scen.params, factors, MODE_DERIVATION),
                analysis.reproduction_numbers(scen.params, factors, "paper"),
                eqs, experiments.classify(traj, eqs), reports,
                integration=reporting.integration_metadata(traj)))
            if not all(r.passed for r in reports) and worst_exit == EXIT_OK:
                worst_exit = EXIT_CERTIFICATE_FAILURE
            run_docs.append(entry)
    reporting.write_json(out_dir / "summary.json",
                         {"scenario": scen.name, "runs": run_docs})
    return worst_exit


_COMMANDS = {
    "analyze": _cmd_analyze,
    "simulate": _cmd_simulate,
    "certify": _cmd_certify,
    "sweep": _cmd_sweep,
    "reproduce": _cmd_reproduce,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except (ConfigError, ParameterValidationError,
            experiments.UnknownScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except BlowUpError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL_FAILURE
    except NonFiniteStateError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL_FAILURE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
