import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracspde.core import (ResolutionError, SampledPath, SpaceTimeField, SpectralVector,
                           UniformGrid, ValidationError, child_seed, eigenvalues, read_path_csv,
                           sine_analyze, sine_analyze_array, sine_synthesize, sine_synthesize_array,
                           unit_grid, write_field_csv, write_path_csv)

coeff_lists = st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=16)


def test_grid_basics():
    g = UniformGrid(0.0, 2.0, 8)
    assert g.h == 0.25 and len(g) == 9
    assert g.refine().n == 16
    with pytest.raises(ValidationError):
        UniformGrid(1.0, 0.0, 4)
    with pytest.raises(ValidationError):
        UniformGrid(0.0, 1.0, 1)


def test_sampled_path_limits_default_to_endpoints():
    g = unit_grid(4)
    p = SampledPath(g, [1, 2, 3, 4, 5])
    assert (p.left_limit, p.right_limit) == (1.0, 5.0)
    q = SampledPath(g, [1, 2, 3, 4, 5], (0.5, 6.0))
    assert q.reversed().boundary_limits == (6.0, 0.5)
    with pytest.raises(ValidationError):
        SampledPath(g, [1, 2, 3])
    with pytest.raises(ValidationError):
        SampledPath(g, [1, 2, np.nan, 4, 5])


def test_analyze_basis_function():
    x = unit_grid(256).nodes
    c = sine_analyze(np.sin(np.pi * x), 16).coeffs
    assert abs(c[0] - 1) < 1e-13 and np.max(np.abs(c[1:])) < 1e-13


def test_analyze_zero():
    assert not np.any(sine_analyze(np.zeros(65), 8).coeffs)


def test_analyze_two_modes_against_quadrature():
    x = unit_grid(256).nodes
    c = sine_analyze(0.3 * np.sin(2 * np.pi * x) - 1.1 * np.sin(5 * np.pi * x), 16).coeffs
    # oracle: 2 int f sin(k pi x) dx by dense Simpson
    from scipy.integrate import simpson
    xf = np.linspace(0, 1, 20001)
    f = 0.3 * np.sin(2 * np.pi * xf) - 1.1 * np.sin(5 * np.pi * xf)
    oracle = np.array([2 * simpson(f * np.sin(k * np.pi * xf), x=xf) for k in range(1, 17)])
    assert np.max(np.abs(c - oracle)) < 1e-10
    assert abs(c[1] - 0.3) < 1e-12 and abs(c[4] + 1.1) < 1e-12
    others = np.delete(c, [1, 4])
    assert np.max(np.abs(others)) < 1e-12


def test_analyze_checks():
    with pytest.raises(ResolutionError):
        sine_analyze(np.zeros(17), 16)
    with pytest.raises(ValidationError):
        sine_analyze(np.ones(65), 8)


def test_synthesize_examples():
    g = unit_grid(64)
    assert np.allclose(sine_synthesize(SpectralVector.mode(1, 4), g), np.sin(np.pi * g.nodes), atol=1e-15)
    assert not np.any(sine_synthesize(SpectralVector(np.zeros(4)), g))
    rng = np.random.default_rng(0)
    c = rng.standard_normal(8)
    naive = sum(c[k] * np.sin((k + 1) * np.pi * g.nodes) for k in range(8))
    assert np.max(np.abs(sine_synthesize_array(c, g) - naive)) < 1e-13
    pts = rng.uniform(0, 1, 5)
    naive_pts = sum(c[k] * np.sin((k + 1) * np.pi * pts) for k in range(8))
    assert np.max(np.abs(sine_synthesize_array(c, pts) - naive_pts)) < 1e-13


@given(coeff_lists)
@settings(max_examples=50, deadline=None)
def test_round_trip(cs):
    c = np.array(cs)
    M = c.size
    g = unit_grid(4 * M)
    back = sine_analyze(sine_synthesize_array(c, g), M).coeffs
    scale = max(1.0, np.max(np.abs(c)))
    assert np.max(np.abs(back - c)) <= 1e-12 * scale


@given(coeff_lists)
@settings(max_examples=50, deadline=None)
def test_parseval(cs):
    c = np.array(cs)
    M = c.size
    g = unit_grid(16 * M * 4)
    v = sine_synthesize_array(c, g)
    l2 = g.h * (np.sum(v * v) - 0.5 * (v[0] ** 2 + v[-1] ** 2))
    assert abs(0.5 * np.sum(c * c) - l2) <= 1e-10 * max(1.0, np.sum(c * c))


def test_spectral_vector_arithmetic():
    u = SpectralVector([1.0, 2.0], order=-0.5)
    v = (u + u) * 0.5 - u
    assert not np.any(v.coeffs) and v.order == -0.5
    with pytest.raises(ValidationError):
        SpectralVector([])


def test_field_conversions():
    tg = UniformGrid(0.0, 1.0, 3)
    data = np.array([[1.0, 0.0, 0.5]] * 4)
    f = SpaceTimeField(tg, data)
    g = f.to_grid(unit_grid(16))
    assert g.representation == "grid"
    assert np.allclose(g.to_spectral(3).data, data, atol=1e-13)
    with pytest.raises(ValidationError):
        SpaceTimeField(tg, np.zeros((2, 3)))


def test_eigenvalues_and_seeds():
    assert np.allclose(eigenvalues(3), np.pi ** 2 * np.array([1, 4, 9]))
    assert child_seed(1, 0) == child_seed(1, 0)
    assert child_seed(1, 0) != child_seed(1, 1)
    assert 0 <= child_seed(2 ** 63, 5) < 2 ** 64


def test_csv_round_trip(tmp_path):
    g = UniformGrid(0.0, 1.0, 10)
    p = SampledPath(g, np.sin(g.nodes) / 3)
    write_path_csv(tmp_path / "p.csv", p)
    q = read_path_csv(tmp_path / "p.csv")
    assert np.array_equal(p.values, q.values)
    fld = SpaceTimeField(UniformGrid(0.0, 1.0, 2), np.ones((3, 2)))
    write_field_csv(tmp_path / "f.csv", fld)
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "t,k,coeff"
