import math

import numpy as np
import pytest

from heatqv import functions as F
from heatqv.errors import DomainError

SPECS = ["constant(1)", "identity", "square", "half_square", "cube", "sin",
         "indicator(-0.3,0.3)", "step_up(0)", "step_down(0)", "sign(0)",
         "pos_part(0.2)", "neg_part(0.2)", "abs(0)", "exp_square(0.1)"]


@pytest.mark.parametrize("spec", SPECS)
def test_registry_invariants(spec):
    f = F.get_function(spec)
    chk = F.check_function(f)
    assert chk["deriv_ok"] and chk["deriv2_ok"] and chk["growth_ok"]
    assert F.get_function(f.id).id == f.id


@pytest.mark.parametrize("spec", SPECS)
def test_antiderivative_consistent(spec):
    f = F.get_function(spec)
    if f.antideriv is None:
        pytest.skip("no antiderivative registered")
    z = np.linspace(-2, 2, 4001)
    lhs = f.antideriv(z[-1]) - f.antideriv(z[0])
    assert float(lhs) == pytest.approx(np.trapezoid(f(z), z), abs=2e-3)


def test_values():
    assert F.get_function("indicator(-0.3, 0.3)")(np.array([-0.3, 0.0, 0.3, 0.4])).tolist() == [0, 1, 1, 0]
    assert F.get_function("pos_part(1)")(np.array([0.0, 3.0])).tolist() == [0, 2]
    assert F.get_function("exp_square(0.5)")(1.0) == pytest.approx(math.exp(0.5))
    assert F.get_function("exp_square(0.5)").beta == 0.5


def test_bad_specs():
    for bad in ("nope", "indicator(1, 0)", "square(x)"):
        with pytest.raises(DomainError):
            F.get_function(bad)
    with pytest.raises(DomainError):
        F.get_function("indicator(0,1)").derivative()


def test_derivative_chain():
    f = F.get_function("half_square")
    np.testing.assert_allclose(f.derivative()(np.array([1.5])), [1.5])
    np.testing.assert_allclose(f.derivative().derivative()(np.array([1.5])), [1.0])
