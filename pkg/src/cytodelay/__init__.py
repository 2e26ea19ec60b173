"""cytodelay: simulate and certify a five-compartment within-host infection model.

The model couples uninfected target cells (x), infected cells (y), inflammatory
cytokines (c), free virus (v) and a CTL response (z).  New infections and virion
production act through distributed intracellular delays weighted by survival
factors, and CTL stimulation saturates in z.  The package computes reproduction
numbers and equilibria in closed form, integrates the delay system with a
fixed-step method of steps, and verifies positivity, boundedness and Lyapunov
decrease as runtime certificates.
"""

from cytodelay.model import (
    ConstantHistory,
    DiracKernel,
    ModelParameters,
    State5,
    TabulatedHistory,
    TabulatedKernel,
    history_at,
    validate_parameters,
)
from cytodelay.analysis import (
    EquilibriumSet,
    ReproductionNumbers,
    SurvivalFactors,
    equilibria,
    reproduction_numbers,
    steady_state_residual,
    survival_factor,
    survival_factors,
)
from cytodelay.integrator import (
    IntegrationConfig,
    Trajectory,
    delayed_term,
    integrate,
    interpolate,
    rhs,
)
from cytodelay.certificates import (
    CertificateReport,
    LyapunovValue,
    check_boundedness,
    check_cone_invariance,
    check_monotone_decrease,
    g,
    lyapunov_L0,
    lyapunov_L1,
    lyapunov_L2,
)
from cytodelay.experiments import RegimeCell, Scenario, classify, scenario, sweep

__version__ = "0.1.0"
