import numpy as np
import pytest

from faultloc.errors import ConfigInvalid, NumericalFailure, SingularBlock
from faultloc.line_model import (LineParameters, abcd_matrix, abcd_stack, alpha_abscissa,
                                 growth_diagnostic, modal_slowness, segment_admittance,
                                 telegrapher_generator)

from conftest import random_params


def scalar_line(R=0.3e-3, L=3e-7, G=2e-10, C=1e-11):
    return LineParameters(R=[[R]], L=[[L]], G=[[G]], C=[[C]])


def hyperbolic(p, s, d):
    z = p.L[0, 0] * s + p.R[0, 0]
    y = p.C[0, 0] * s + p.G[0, 0]
    g = np.sqrt(z * y)
    Z0 = np.sqrt(z / y)
    return np.array([[np.cosh(g * d), Z0 * np.sinh(g * d)], [np.sinh(g * d) / Z0, np.cosh(g * d)]])


def test_case_study_matrices_match_displayed_form(case_params):
    L, C = case_params.L, case_params.C
    assert np.allclose(np.diag(L), 299.85e-9, rtol=0, atol=1e-21)
    assert np.allclose(L[~np.eye(3, dtype=bool)], 59.97e-9, rtol=0, atol=1e-21)
    assert np.allclose(np.diag(C), 0.033e-9 + 2 * 0.33e-9, rtol=0, atol=1e-24)
    assert np.allclose(C[~np.eye(3, dtype=bool)], -0.33e-9, rtol=0, atol=1e-24)
    assert np.allclose(case_params.R, 0.32e-3 * np.eye(3))
    assert np.all(case_params.G == 0)


def test_generator_layout():
    p = scalar_line()
    M = telegrapher_generator(p, 2.0 + 3j)
    assert M[0, 0] == 0 and M[1, 1] == 0
    assert M[0, 1] == pytest.approx(p.L[0, 0] * (2 + 3j) + p.R[0, 0])
    assert M[1, 0] == pytest.approx(p.C[0, 0] * (2 + 3j) + p.G[0, 0])


@pytest.mark.parametrize("s,d", [(0.01 + 314j, 1e3), (0.01 + 6e4j, 7.7e3), (5.0 + 1e6j, 250.0), (0.01, 10e3)])
def test_scalar_blocks_match_hyperbolic_oracle(s, d):
    p = scalar_line()
    X = abcd_matrix(p, s, d).matrix
    ref = hyperbolic(p, s, d)
    assert np.allclose(X, ref, rtol=1e-11, atol=1e-13 * np.abs(ref).max())


def test_scalar_admittance_closed_form():
    p = scalar_line()
    s, d = 0.01 + 2 * np.pi * 1e3j, 3e3
    z = p.L[0, 0] * s + p.R[0, 0]
    y = p.C[0, 0] * s + p.G[0, 0]
    g, Z0 = np.sqrt(z * y), np.sqrt(z / y)
    Ups = segment_admittance(p, s, d)
    assert Ups.Y1[0, 0] == pytest.approx(1 / (Z0 * np.tanh(g * d)), rel=1e-10)
    assert Ups.Y2[0, 0] == pytest.approx(-1 / (Z0 * np.sinh(g * d)), rel=1e-10)
    assert Ups.Y4 is Ups.Y1 and Ups.Y3 is Ups.Y2


def test_det_and_semigroup_random(rng):
    p = random_params(rng, 3)
    for _ in range(20):
        s = rng.uniform(0.01, 10) + 1j * rng.uniform(-1e5, 1e5)
        d1, d2 = rng.uniform(1, 5e3, size=2)
        X1, X2 = abcd_stack(p, [s], d1)[0], abcd_stack(p, [s], d2)[0]
        X12 = abcd_stack(p, [s], d1 + d2)[0]
        assert abs(np.linalg.det(X1) - 1) < 1e-9
        assert np.abs(X1 @ X2 - X12).max() <= 1e-9 * np.abs(X12).max()


def test_zero_length_is_identity(case_params):
    X = abcd_stack(case_params, [0.01 + 100j], 0.0)[0]
    assert np.allclose(X, np.eye(6))


def test_singular_block_at_zero_length(case_params):
    with pytest.raises(SingularBlock):
        segment_admittance(case_params, 0.01 + 100j, 0.0)


def test_condition_limit_raises(case_params):
    with pytest.raises(SingularBlock) as info:
        segment_admittance(case_params, 0.01 + 100j, 1e3, cond_limit=1.0)
    assert info.value.cond > 1.0


@pytest.mark.parametrize("kw,path", [
    (dict(R=np.eye(2), L=np.array([[1.0, 0.5], [0.4, 1.0]]), G=0 * np.eye(2), C=np.eye(2)), "line.L"),
    (dict(R=np.eye(2), L=np.eye(2), G=0 * np.eye(2), C=-np.eye(2)), "line.C"),
    (dict(R=-np.eye(2), L=np.eye(2), G=0 * np.eye(2), C=np.eye(2)), "line.R"),
])
def test_invalid_parameters(kw, path):
    with pytest.raises(ConfigInvalid) as info:
        LineParameters(**kw)
    assert info.value.path == path


def test_alpha_abscissa():
    assert alpha_abscissa(LineParameters.case_study()) == 0.0
    p = scalar_line(R=1e-3, L=1e-6, G=1e-9, C=1e-10)
    assert alpha_abscissa(p) == pytest.approx(-10.0)


def test_modal_slowness_case_study(case_params):
    diff = (299.85e-9 - 59.97e-9) * (0.033e-9 + 3 * 0.33e-9)
    common = (299.85e-9 + 2 * 59.97e-9) * 0.033e-9
    assert modal_slowness(case_params) == pytest.approx(np.sqrt(max(diff, common)), rel=1e-12)


def test_growth_diagnostic_finite_and_monotone_in_abscissa(case_params):
    w = 2 * np.pi * np.array([50.0, 1e3, 1e4])
    res = [0.01, 1e3, 2e4, 1e5]
    s = np.concatenate([r + 1j * w for r in res])
    rep = growth_diagnostic(case_params, s, [100.0, 5e3])
    assert rep["finite"] and rep["singular_samples"] == 0
    trend = [rep["max_norm_by_abscissa"][r] for r in res]
    # damping of the line resonances: the sampled maxima fall as Re(s) grows
    assert all(a >= b for a, b in zip(trend, trend[1:]))


def test_residual_check_rejects_overflow(case_params):
    with pytest.raises((NumericalFailure, FloatingPointError, OverflowError)):
        with np.errstate(all="raise"):
            abcd_stack(case_params, [1e12 + 1e12j], 1e7)
