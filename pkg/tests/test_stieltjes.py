import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracspde.core import NumericalError, SampledPath, UniformGrid, ValidationError
from fracspde.noise import NoiseSpec, fbm_path, weierstrass_path
from fracspde.stieltjes import (IntegralConfig, OdeProblem, default_eta, indefinite_zahle_integral,
                                richardson, riemann_stieltjes_left, solve_fractional_ode,
                                zahle_integral, zahle_integral_eta_sweep)

G = UniformGrid(0.0, 1.0, 4096)
T = G.nodes


def path(fn, grid=G):
    return SampledPath.from_function(fn, grid)


def test_constant_integrand_is_exact():
    g = fbm_path(NoiseSpec(0.7, G, seed=1))
    one = path(np.ones_like)
    for eta in (0.3, 0.5, 0.7):
        assert zahle_integral(one, g, IntegralConfig(eta=eta)) == g.right_limit - g.left_limit
    vals, spread = zahle_integral_eta_sweep(one, g, (0.2, 0.4, 0.6))
    assert len(set(vals)) == 1 and spread == 0.0
    ii = indefinite_zahle_integral(one, g, IntegralConfig(eta=0.5)).values
    assert np.max(np.abs(ii - (g.values - g.values[0]))) < 1e-13


def test_smooth_identity():
    t = path(lambda s: s)
    assert abs(zahle_integral(t, t, IntegralConfig(eta=0.5)) - 0.5) < 1e-8
    _, spread = zahle_integral_eta_sweep(path(np.cos), path(np.sin), (0.2, 0.4, 0.6))
    assert spread < 1e-6


def test_indefinite_integral_of_sine():
    g = path(lambda s: np.sin(2 * np.pi * s) + s)
    ii = indefinite_zahle_integral(g, g, IntegralConfig(eta=0.5))
    assert np.max(np.abs(ii.values - 0.5 * (g.values ** 2 - g.values[0] ** 2))) < 1e-6
    full = zahle_integral(g, g, IntegralConfig(eta=0.5))
    assert abs(ii.values[-1] - full) < 1e-10


def test_weierstrass_chain_rule():
    # the left sum lags by half the discrete quadratic variation, which
    # decays slowly; the fractional value sits on the chain rule already
    gaps = []
    for n in (2 ** 12, 2 ** 14):
        w = weierstrass_path(UniformGrid(0.0, 1.0, n))
        val = zahle_integral(w, w, IntegralConfig(eta=0.5))
        half = 0.5 * (w.values[-1] ** 2 - w.values[0] ** 2)
        assert abs(val - half) / abs(half) < 1e-4
        gaps.append(abs(val - riemann_stieltjes_left(w, w)))
    assert gaps[1] < gaps[0]


def test_eta_sweep_on_holder_pair_shrinks():
    spreads = []
    for n in (2 ** 12, 2 ** 14):
        w = weierstrass_path(UniformGrid(0.0, 1.0, n))
        spreads.append(zahle_integral_eta_sweep(w, w, (0.35, 0.5, 0.65))[1])
    assert spreads[-1] < 1e-2 and spreads[1] < spreads[0]


def test_default_eta_in_window():
    w = weierstrass_path(UniformGrid(0.0, 1.0, 2 ** 12))
    e = default_eta(w, w)
    assert 0.3 < e < 0.7


def test_richardson():
    assert abs(richardson(1 + 0.5, 1 + 0.25, 1.0) - 1.0) < 1e-15


@given(st.floats(-2, 2), st.floats(-2, 2))
@settings(max_examples=20, deadline=None)
def test_bilinearity(a, b):
    cfg = IntegralConfig(eta=0.5)
    f1, f2 = path(np.cos), path(lambda s: s ** 2)
    g1, g2 = path(np.sin), path(lambda s: np.exp(s))
    lin_f = zahle_integral(SampledPath(G, a * f1.values + b * f2.values), g1, cfg)
    assert abs(lin_f - a * zahle_integral(f1, g1, cfg) - b * zahle_integral(f2, g1, cfg)) < 1e-11
    lin_g = zahle_integral(f1, SampledPath(G, a * g1.values + b * g2.values), cfg)
    assert abs(lin_g - a * zahle_integral(f1, g1, cfg) - b * zahle_integral(f1, g2, cfg)) < 1e-11


def test_grid_mismatch_rejected():
    with pytest.raises(ValidationError):
        zahle_integral(path(np.sin), path(np.sin, UniformGrid(0.0, 1.0, 64)))


def test_ode_deterministic_cases():
    z = path(np.sin)
    r = solve_fractional_ode(OdeProblem(lambda x, t: 0 * x, lambda x, t: 0 * x + 1, z, 0.0))
    assert np.max(np.abs(r.path.values - T)) < 1e-12
    r = solve_fractional_ode(OdeProblem(lambda x, t: 0 * x + 1, lambda x, t: 0 * x, z, 0.4))
    assert np.max(np.abs(r.path.values - (0.4 + z.values - z.values[0]))) < 1e-12


def test_ode_linear_multiplicative():
    z = path(np.sin)
    r = solve_fractional_ode(OdeProblem(lambda x, t: x, lambda x, t: 0 * x, z, 1.3))
    exact = 1.3 * np.exp(np.sin(T))
    assert np.max(np.abs(r.path.values - exact)) / np.max(exact) < 1e-3
    d = np.array(r.deltas)
    assert np.all(d[1:] < d[:-1])
    assert r.residual < 10 * 1e-10


def test_ode_rough_driver():
    z = fbm_path(NoiseSpec(0.75, G, seed=3))
    r = solve_fractional_ode(OdeProblem(lambda x, t: np.sin(x), lambda x, t: 0 * x, z, 0.5))
    assert r.residual < 10 * 1e-10 and r.holder_estimate > 0.55


def test_ode_rejects_irregular_driver():
    z = fbm_path(NoiseSpec(0.5, G, seed=3))
    with pytest.raises(ValidationError):
        solve_fractional_ode(OdeProblem(lambda x, t: x, lambda x, t: 0 * x, z, 1.0))


def test_ode_reports_nonconvergence():
    z = path(lambda s: 40 * s)
    with pytest.raises(NumericalError) as exc:
        solve_fractional_ode(OdeProblem(lambda x, t: x, lambda x, t: 0 * x, z, 1.0, max_iter=3))
    assert len(exc.value.diagnostics["deltas"]) == 3
