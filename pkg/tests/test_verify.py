import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from olrg.errors import ConfigError, ResourceError
from olrg.model import ModelSpec, initial_set
from olrg.qops import random_hermitian
from olrg.verify import (adjoint_power_deviation, channel_maxima, check_dyson_truncation, check_rt_bound,
                         check_telescoping, exact_expectation, set_expectation, tensor_adjoint_deviation,
                         tensor_adjoint_deviation_k2)


def test_exact_at_zero_time():
    assert exact_expectation(4, 1.0, (1, 2), 0.0) == pytest.approx(1.0, abs=1e-14)


def test_exact_conserved_without_field():
    for T in (0.3, 1.0, 4.0):
        assert exact_expectation(5, 0.0, (1, 2), T) == pytest.approx(1.0, abs=1e-12)


def test_exact_expm_vs_ode():
    a = exact_expectation(5, 1.0, (1, 2), 5.0, method="expm")
    b = exact_expectation(5, 1.0, (1, 2), 5.0, method="ode")
    assert abs(a - b) < 1e-7


def test_exact_limits():
    with pytest.raises(ResourceError):
        exact_expectation(13, 1.0, (1, 2), 1.0)
    with pytest.raises(ConfigError):
        exact_expectation(3, 1.0, (1, 2), 1.0, method="magic")
    # eigh path above 10 sites; at short times the far end of the chain is outside the light cone
    assert abs(exact_expectation(11, 1.0, (1, 2), 0.4) - exact_expectation(10, 1.0, (1, 2), 0.4)) < 1e-6


@settings(max_examples=15, deadline=None)
@given(N=st.integers(2, 6), T=st.floats(0.0, 5.0))
def test_exact_matches_relevant_set(N, T):
    assert abs(exact_expectation(N, 1.0, (1, 2), T) - set_expectation(initial_set(ModelSpec(), N), T)) < 1e-10


def test_telescoping_identity_and_single_step():
    r = check_telescoping(3, 1, 2, 1.0, seed=0, identity=True)
    assert r.lhs < 1e-12 and r.rhs < 1e-12 and r.satisfied
    r = check_telescoping(3, 1, 1, 1.0, seed=4)
    assert r.lhs == pytest.approx(r.rhs, abs=1e-15) and r.lhs > 1e-4


def test_telescoping_random_instances():
    reports = [check_telescoping(2, 1, 2, 1.0, seed=s) for s in range(40)]
    assert all(r.satisfied for r in reports)
    assert any(r.rhs > r.lhs + 1e-6 for r in reports)


def test_telescoping_limits():
    with pytest.raises(ResourceError):
        check_telescoping(6, 1, 5, 1.0, seed=0)
    with pytest.raises(ConfigError):
        check_telescoping(1, 1, 1, 1.0, seed=0)


def test_rt_bound_unperturbed():
    r = check_rt_bound(2, 1, 0.5, 0.0, seed=0)
    assert r.lhs == 0.0 and r.rhs == 0.0 and r.satisfied


def test_rt_bound_conserved_observable():
    r = check_rt_bound(2, 1, 0.5, 0.3, seed=1, h=0.0, kind="diagonal")
    assert r.lhs < 1e-14 and r.satisfied


def test_rt_bound_random_instances():
    reports = [check_rt_bound(2, 1, 0.5, 0.05, seed=s) for s in range(10)]
    assert all(r.satisfied for r in reports)
    assert all(r.lhs > 0 for r in reports)


def test_rt_bound_errors():
    with pytest.raises(ConfigError):
        check_rt_bound(2, 1, 0.5, 0.1, seed=0, q=2)
    with pytest.raises(ConfigError):
        check_rt_bound(2, 1, 0.5, 0.1, seed=0, kind="unitary")
    with pytest.raises(ResourceError):
        check_rt_bound(8, 1, 0.5, 0.1, seed=0)


def test_dyson_zero_coupling_exact():
    table = check_dyson_truncation(T=0.5, coupling=0.0, Ms=(16,))
    assert table.errors(16)[0] < 1e-12


def test_dyson_short_time():
    errs = [check_dyson_truncation(T=T, k_max=1, Ms=(64,)).errors(64)[1] for T in (0.2, 0.05, 0.0125)]
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-4


def test_dyson_series_converges():
    table = check_dyson_truncation(T=0.5, k_max=6, Ms=(64, 256))
    assert table.errors(256)[-1] < table.errors(64)[-1] < 1e-2
    assert table.errors(256)[-1] < 2e-3
    even = table.errors(256)[::2]
    assert all(a > b for a, b in zip(even[:-1], even[1:]))


def test_dyson_odd_orders_vanish_on_real_fixture():
    e = check_dyson_truncation(T=0.5, k_max=3, Ms=(64,)).errors(64)
    assert abs(e[0] - e[1]) < 1e-14 and abs(e[2] - e[3]) < 1e-14


def test_lemmas_random():
    rng = np.random.default_rng(0)
    for _ in range(10):
        A, B, X, Y, A2, B2 = (random_hermitian(2, rng) for _ in range(6))
        for s in (1, -1):
            assert tensor_adjoint_deviation(A, B, X, Y, s) < 1e-12
            assert tensor_adjoint_deviation_k2(A, B, A2, B2, X, Y, s, -s) < 1e-12
            assert adjoint_power_deviation(A, A2, X, s) < 1e-12


def test_channel_maxima_structure():
    m = channel_maxima(n=4, T=2.0, M=8)
    for key in ((1, 1), (-1, -1)):
        assert m[key]["max_abs_imag"] < 1e-12
    for key in ((1, -1), (-1, 1)):
        assert m[key]["max_abs_real"] < 1e-12
    assert set(m) == {(1, 1), (1, -1), (-1, 1), (-1, -1)}
