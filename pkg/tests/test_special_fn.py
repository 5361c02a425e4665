import math

import mpmath
import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from chifield.errors import ConfigurationError, ConvergenceError
from chifield.special_fn import NuMethod, Phi, nu, nu_approx, nu_series, phi

GRID = np.round(np.arange(0.05, 6.0 + 1e-9, 0.05), 10)


def brute_nu(x, terms):
    """Plain truncated sum of the defining series plus the integral tail estimate."""
    a = x / 2.0
    k = np.arange(1, terms + 1, dtype=float)
    s = math.fsum(special.ndtr(-a * np.sqrt(k)) / k)
    s += float(mpmath.quad(lambda t: mpmath.ncdf(-a * mpmath.sqrt(t)) / t, [terms + 0.5, mpmath.inf]))
    return 2.0 / x**2 * math.exp(-2.0 * s)


def test_phi_at_zero():
    assert phi(0.0) == pytest.approx(1.0 / math.sqrt(2.0 * math.pi), rel=1e-15)
    assert Phi(0.0) == 0.5


def test_Phi_far_tail_matches_mpmath():
    mpmath.mp.dps = 40
    for x in (-8.0, -20.0, -37.0):
        ref = float(mpmath.ncdf(x))
        assert Phi(x) == pytest.approx(ref, rel=1e-12)


@given(st.floats(-30, 30))
def test_Phi_symmetry(x):
    assert Phi(-x) + Phi(x) == pytest.approx(1.0, abs=1e-15)


def test_Phi_derivative_is_phi():
    x = np.linspace(-6, 6, 241)
    h = 1e-5
    fd = (Phi(x + h) - Phi(x - h)) / (2 * h)
    assert np.max(np.abs(fd - phi(x))) < 1e-8


def test_Phi_monotone():
    x = np.linspace(-10, 10, 2001)
    assert np.all(np.diff(Phi(x)) >= 0)


def test_nu_series_zero_is_one():
    assert nu_series(0.0) == 1.0


@pytest.mark.parametrize("x", [0.2, 0.5, 1.0, 2.0, 4.0, 10.0])
def test_nu_series_matches_mpmath(x):
    mpmath.mp.dps = 30
    a = mpmath.mpf(x) / 2
    s = mpmath.nsum(lambda n: mpmath.ncdf(-a * mpmath.sqrt(n)) / n, [1, mpmath.inf])
    ref = float(2 / mpmath.mpf(x) ** 2 * mpmath.exp(-2 * s))
    assert nu_series(x, tol=1e-12) == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("x", [0.01, 0.05, 0.09])
def test_nu_series_small_x_matches_brute_force(x):
    # The direct sum needs ~1e6 terms here; the implementation closes the tail analytically.
    assert nu_series(x) == pytest.approx(brute_nu(x, 2_000_000), rel=1e-8)


def test_nu_series_large_x_limit():
    # For large x, nu(x) ~ 2/x^2 (all series terms negligible).
    assert nu_series(10.0, tol=1e-12) == pytest.approx(0.02, rel=1e-6)
    assert nu_series(40.0) == pytest.approx(2.0 / 1600.0, rel=1e-12)


def test_nu_small_x_slope():
    # 1 - nu(x) ~ c x with c = -zeta(1/2) / sqrt(2 pi).
    c = -float(mpmath.zeta(0.5)) / math.sqrt(2.0 * math.pi)
    x = 1e-6
    assert (1.0 - nu_series(x)) / x == pytest.approx(c, rel=1e-4)


def test_nu_series_decreasing_and_bounded():
    v = np.array([nu_series(x) for x in GRID])
    assert np.all(np.diff(v) < 0)
    assert np.all((v > 0) & (v <= 1))


def test_nu_series_rejects_negative():
    with pytest.raises(ValueError):
        nu_series(-0.1)


def test_nu_series_unreachable_tolerance():
    with pytest.raises(ConvergenceError):
        nu_series(0.01, tol=1e-20)


def test_nu_approx_limit_at_zero_symbolic():
    x = sympy.symbols("x", positive=True)
    h = x / 2
    Phi_s = (1 + sympy.erf(h / sympy.sqrt(2))) / 2
    phi_s = sympy.exp(-h**2 / 2) / sympy.sqrt(2 * sympy.pi)
    expr = (2 / x) * (Phi_s - sympy.Rational(1, 2)) / (h * Phi_s + phi_s)
    assert sympy.limit(expr, x, 0, "+") == 1


def test_nu_approx_near_zero():
    assert nu_approx(1e-9) == 1.0
    assert nu_approx(1e-4) == pytest.approx(1.0, abs=1e-4)


def test_nu_approx_rejects_nonpositive():
    for x in (0.0, -1.0):
        with pytest.raises(ValueError):
            nu_approx(x)


def test_nu_approx_close_to_series_at_three():
    assert abs(nu_approx(3.0) / nu_series(3.0) - 1.0) <= 2e-2


@pytest.mark.xfail(strict=True, reason="closed form is 2.07% off at x=1 (max 2.10% near x=1.2)")
def test_nu_approx_close_to_series_at_one():
    assert abs(nu_approx(1.0) / nu_series(1.0) - 1.0) <= 2e-2


def test_nu_approx_error_profile():
    # Measured accuracy of the closed form: worst ~2.1% near x = 1.2, under 1% outside [0.4, 3].
    rel = np.array([abs(nu_approx(x) / nu_series(x) - 1) for x in GRID])
    assert 0.020 < rel.max() < 0.0215
    assert GRID[np.argmax(rel)] == pytest.approx(1.2, abs=0.1)


def test_vectorised_nu_matches_scalar(rng):
    x = np.concatenate([[0.0], rng.uniform(0, 8, 5000)])
    v = nu(x)
    ref = np.array([nu_series(t) for t in x[:200]])
    assert np.allclose(v[:200], ref, rtol=1e-9, atol=0)
    assert v[0] == 1.0


def test_vectorised_nu_preserves_shape():
    x = np.linspace(0, 3, 12).reshape(3, 4)
    assert nu(x).shape == (3, 4)
    assert nu(x, "approx").shape == (3, 4)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.001, 20))
def test_nu_approx_vector_matches_scalar(x):
    assert nu(np.array([x]), NuMethod.approx())[0] == pytest.approx(nu_approx(x), rel=1e-15)


def test_nu_method_parse():
    assert NuMethod.parse("approx").variant == "approx"
    assert NuMethod.parse(None).variant == "series"
    with pytest.raises(ConfigurationError):
        NuMethod.parse("exact")
