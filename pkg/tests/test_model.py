import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cytodelay.model import (
    ConfigError,
    ConstantHistory,
    DiracKernel,
    ModelParameters,
    PARAMETER_KEYS,
    ParameterValidationError,
    PositiveThetaError,
    State5,
    TabulatedHistory,
    TabulatedKernel,
    config_from_dict,
    history_at,
    load_config,
    validate_parameters,
)

E0_ROW = {
    "lambda": 1, "beta1": 0.004, "beta2": 0.005, "d1": 0.2, "m1": 0.3,
    "alpha1": 0.1, "d2": 0.25, "p": 0.2, "alpha2": 0.1, "d3": 0.25,
    "k": 8, "m2": 0.3, "d4": 0.25, "c": 0.3, "h": 0.01, "d5": 0.25,
}


class TestValidateParameters:
    def test_accepts_simulation_row(self):
        params = validate_parameters(E0_ROW)
        assert params.lam == 1.0
        assert params.beta1 == 0.004
        assert params.c_ctl == 0.3
        assert params.d5 == 0.25

    def test_zero_h_rejected(self):
        with pytest.raises(ParameterValidationError) as err:
            validate_parameters({**E0_ROW, "h": 0})
        assert ("non_positive", "h") in err.value.violations

    def test_nan_lambda_rejected(self):
        with pytest.raises(ParameterValidationError) as err:
            validate_parameters({**E0_ROW, "lambda": float("nan")})
        assert ("non_finite", "lambda") in err.value.violations

    def test_missing_field_rejected(self):
        raw = dict(E0_ROW)
        del raw["beta2"]
        with pytest.raises(ParameterValidationError) as err:
            validate_parameters(raw)
        assert ("missing", "beta2") in err.value.violations

    def test_every_violation_listed(self):
        raw = {**E0_ROW, "h": 0, "k": float("inf"), "d1": -1}
        del raw["p"]
        with pytest.raises(ParameterValidationError) as err:
            validate_parameters(raw)
        kinds = set(err.value.violations)
        assert {("non_positive", "h"), ("non_finite", "k"),
                ("non_positive", "d1"), ("missing", "p")} <= kinds

    def test_idempotent(self):
        params = validate_parameters(E0_ROW)
        assert validate_parameters(params.as_dict()) == params

    def test_as_dict_order_matches_wire_keys(self):
        assert tuple(validate_parameters(E0_ROW).as_dict()) == PARAMETER_KEYS

    def test_fingerprint_stable(self):
        a = validate_parameters(E0_ROW).fingerprint()
        b = validate_parameters(dict(reversed(list(E0_ROW.items())))).fingerprint()
        assert a == b and len(a) == 64


class TestHistory:
    def test_constant_at_negative_theta(self):
        phi = State5(5, 5, 6, 3, 3.5)
        assert history_at(ConstantHistory(phi), -7.0) == phi

    def test_constant_at_zero(self):
        phi = State5(5, 5, 6, 3, 3.5)
        assert history_at(ConstantHistory(phi), 0.0) == phi

    def test_tabulated_midpoint(self):
        a = State5(1, 2, 3, 4, 5)
        b = State5(3, 4, 5, 6, 7)
        hist = TabulatedHistory([-1.0, 0.0], [a, b])
        mid = history_at(hist, -0.5)
        np.testing.assert_allclose(mid.as_array(), (a.as_array() + b.as_array()) / 2)

    def test_tabulated_holds_first_value_below_range(self):
        a = State5(1, 2, 3, 4, 5)
        b = State5(3, 4, 5, 6, 7)
        hist = TabulatedHistory([-1.0, 0.0], [a, b])
        assert history_at(hist, -100.0) == a

    def test_positive_theta_rejected(self):
        with pytest.raises(PositiveThetaError):
            history_at(ConstantHistory(State5(1, 1, 1, 1, 1)), 0.5)

    @given(st.floats(min_value=-1e6, max_value=0.0))
    def test_constant_history_independent_of_theta(self, theta):
        phi = State5(5, 5, 6, 3, 3.5)
        assert history_at(ConstantHistory(phi), theta) == phi

    def test_tabulated_times_must_end_at_zero(self):
        with pytest.raises(ValueError):
            TabulatedHistory([-2.0, -1.0], [State5(1, 1, 1, 1, 1)] * 2)

    def test_tabulated_times_strictly_increasing(self):
        with pytest.raises(ValueError):
            TabulatedHistory([-1.0, -1.0, 0.0], [State5(1, 1, 1, 1, 1)] * 3)


class TestKernels:
    def test_dirac_zero_lag_accepted(self):
        assert DiracKernel(0.0).survival_weights(0.7)[0] == 1.0

    def test_dirac_negative_lag_rejected(self):
        with pytest.raises(ValueError):
            DiracKernel(-1.0)

    def test_tabulated_weights_sum_to_one(self):
        kern = TabulatedKernel([1.0, 2.0, 3.0], [0.25, 0.5, 0.25])
        assert abs(math.fsum(kern.weights) - 1.0) <= 1e-12

    def test_tabulated_reject_bad_mass(self):
        with pytest.raises(ValueError):
            TabulatedKernel([1.0, 2.0], [0.5, 0.4])

    def test_tabulated_truncated_mass_counts_toward_total(self):
        kern = TabulatedKernel([1.0, 2.0], [0.5, 0.4], truncated_mass=0.1)
        assert kern.truncated_mass == 0.1

    def test_tabulated_nodes_strictly_increasing(self):
        with pytest.raises(ValueError):
            TabulatedKernel([2.0, 1.0], [0.5, 0.5])

    def test_tabulated_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            TabulatedKernel([1.0, 2.0], [1.5, -0.5])

    def test_survival_weights(self):
        kern = TabulatedKernel([0.0, 2.0], [0.5, 0.5])
        np.testing.assert_allclose(kern.survival_weights(0.3),
                                   [0.5, 0.5 * math.exp(-0.6)])


class TestConfig:
    def _doc(self, **overrides):
        doc = {
            "parameters": dict(E0_ROW),
            "kernel1": {"type": "dirac", "tau": 5.0},
            "kernel2": {"type": "dirac", "tau": 3.0},
            "history": {"type": "constant", "value": [5, 5, 6, 3, 3.5]},
            "integration": {"dt": 0.01, "t_end": 10.0},
            "mode": "derivation",
        }
        doc.update(overrides)
        return doc

    def test_valid_document(self):
        run = config_from_dict(self._doc())
        assert run.kernel1 == DiracKernel(5.0)
        assert run.history == ConstantHistory(State5(5, 5, 6, 3, 3.5))
        assert run.dt == 0.01 and run.t_end == 10.0

    def test_tabulated_kernel_document(self):
        run = config_from_dict(self._doc(
            kernel1={"type": "tabulated", "nodes": [4.0, 5.0, 6.0],
                     "weights": [0.25, 0.5, 0.25]}))
        assert isinstance(run.kernel1, TabulatedKernel)

    def test_dt_defaults(self):
        run = config_from_dict(self._doc(integration={"t_end": 10.0}))
        assert run.dt == 0.01

    def test_missing_t_end(self):
        with pytest.raises(ConfigError):
            config_from_dict(self._doc(integration={"dt": 0.01}))

    def test_missing_parameters(self):
        doc = self._doc()
        del doc["parameters"]
        with pytest.raises(ConfigError):
            config_from_dict(doc)

    def test_invalid_parameters_reported(self):
        with pytest.raises(ConfigError, match="h"):
            config_from_dict(self._doc(parameters={**E0_ROW, "h": 0}))

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            config_from_dict(self._doc(mode="exact"))

    def test_unknown_kernel_type(self):
        with pytest.raises(ConfigError):
            config_from_dict(self._doc(kernel1={"type": "gamma", "shape": 2}))

    def test_load_config_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps(self._doc()))
        assert load_config(path).t_end == 10.0

    def test_load_config_bad_json(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(path)


class TestState5:
    def test_roundtrip(self):
        s = State5(1, 2, 3, 4, 5)
        assert State5.from_array(s.as_array()) == s

    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError):
            State5.from_array([1.0, 2.0])

    def test_finite_and_nonnegative_flags(self):
        assert State5(0, 0, 0, 0, 0).is_nonnegative()
        assert not State5(-1, 0, 0, 0, 0).is_nonnegative()
        assert not State5(float("nan"), 0, 0, 0, 0).is_finite()


def test_parameters_direct_construction_is_not_validated():
    # the dataclass itself is a plain record; validate_parameters is the gate
    raw = ModelParameters(lam=1, beta1=0, beta2=0, d1=1, d2=1, d3=1, d4=1,
                          d5=1, alpha1=1, alpha2=1, k=0, c_ctl=0, p=0, h=1,
                          m1=1, m2=1)
    assert raw.beta1 == 0
