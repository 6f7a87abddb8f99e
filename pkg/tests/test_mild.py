import numpy as np
import pytest

from fracspde.core import (NumericalError, SpectralVector, UniformGrid, ValidationError, eigenvalues,
                           sine_analyze_array, sine_synthesize_array)
from fracspde.mild import (AdmissibilityParams, NonlinearitySpec, SolverConfig, TransportProblem,
                           check_admissible, contraction_profile, default_eta, drift_convolution,
                           eta_window, heat_flow_path, heat_operator,
                           probe_pair, refinement_table, sheet_exponents, solve_semilinear_heat,
                           solve_transport, stochastic_convolution, stochastic_convolution_path,
                           weighted_norm)

LINEAR = AdmissibilityParams("linear", 0.1, 0.1, 0.15, 0.2, 0.05)


# admissibility ---------------------------------------------------------------

def test_admissibility_examples():
    rep = check_admissible(AdmissibilityParams("general", 0.1, 0.1, 0.15, 0.2))
    assert rep.ok
    main = [c for c in rep.checks if c["condition"].startswith("2 gamma")][0]
    assert main["lhs"] == pytest.approx(0.8) and main["rhs"] == pytest.approx(1.3)
    assert check_admissible(AdmissibilityParams("example_i", H=0.8, K=0.5)).ok
    rep = check_admissible(AdmissibilityParams("example_i", H=0.6, K=0.7))
    assert not rep.ok
    assert [c["holds"] for c in rep.checks] == [True, True, False]
    tr = check_admissible(AdmissibilityParams("transport", beta=0.1, gamma=0.2, delta=0.3))
    last = tr.checks[-1]
    assert tr.ok and last["lhs"] == pytest.approx(0.4) and last["rhs"] == pytest.approx(0.6)


def test_admissibility_logs_every_condition():
    for variant, n in (("general", 4), ("hke", 5), ("linear", 5)):
        rep = check_admissible(AdmissibilityParams(variant, 0.1, 0.1, 0.15, 0.2))
        assert len(rep.checks) == n
        assert all({"condition", "lhs", "rhs", "holds"} <= set(c) for c in rep.checks)
    with pytest.raises(ValidationError):
        check_admissible(AdmissibilityParams("transport", beta=0.1))
    with pytest.raises(ValidationError):
        AdmissibilityParams("unknown")


def test_sheet_exponents_and_eta():
    p = sheet_exponents(0.85, 0.6)
    assert check_admissible(p).ok
    lo, hi = eta_window(p)
    assert lo < default_eta(p) < hi
    assert default_eta(p) == pytest.approx(0.5 * (lo + hi))


# weighted norms --------------------------------------------------------------

def test_norm_of_constant_path():
    tg = UniformGrid(0.0, 1.0, 64)
    v0 = np.array([1.0, -0.5, 0.25])
    V = np.tile(v0, (65, 1))
    for flavor in ("W", "C"):
        val = weighted_norm(V, tg, 0.3, 1.0, flavor, 0.0)
        assert val == pytest.approx(np.sqrt(0.5 * np.sum(v0 ** 2)), rel=1e-14)


def test_norm_rho_monotone():
    tg = UniformGrid(0.0, 1.0, 64)
    rng = np.random.default_rng(0)
    V = np.cumsum(rng.standard_normal((65, 4)), axis=0) * 0.1
    for flavor in ("W", "C"):
        vals = [weighted_norm(V, tg, 0.3, r, flavor, 0.2) for r in (1, 2, 8, 32)]
        assert np.all(np.diff(vals) <= 0)


def test_c_norm_of_linear_path():
    tg = UniformGrid(0.0, 1.0, 512)
    v0 = np.array([0.3, 1.0])
    V = np.outer(tg.nodes, v0)
    got = weighted_norm(V, tg, 0.4, 1.0, "C", 0.0)
    t = np.linspace(0, 1, 200001)
    oracle = np.max(np.exp(-t) * (t + t ** 0.6)) * np.sqrt(0.5 * np.sum(v0 ** 2))
    assert abs(got - oracle) / oracle < 1e-3


# convolutions ----------------------------------------------------------------

def test_drift_convolution_examples():
    M = 8
    tg = UniformGrid(0.0, 1.0, 512)
    lam1 = np.pi ** 2
    U = np.exp(-lam1 * tg.nodes)[:, None] * np.eye(M)[0]
    assert not np.any(drift_convolution(U, None, tg.n, tg).coeffs)
    d = drift_convolution(U, lambda v: v, tg.n, tg).coeffs
    assert abs(d[0] - np.exp(-lam1)) < 1e-3 and np.max(np.abs(d[1:])) < 1e-12
    e = drift_convolution(U, lambda v: v, tg.n, tg, scheme="exponential").coeffs
    assert abs(e[0] - np.exp(-lam1)) < 1e-6
    a = drift_convolution(U, lambda v: 2 * v + np.sin(v), 100, tg).coeffs
    b = 2 * drift_convolution(U, lambda v: v, 100, tg).coeffs + drift_convolution(U, np.sin, 100, tg).coeffs
    assert np.max(np.abs(a - b)) < 1e-14


def _smooth_driver_case(M=16, n_t=128):
    cfg = SolverConfig(M=M, n_t=n_t)
    tg = cfg.t_grid
    w0 = np.zeros(M)
    w0[0], w0[2] = 1.0, 0.5
    u0 = np.zeros(M)
    u0[0], u0[1] = 1.0, 0.3
    U = np.tile(u0, (tg.n + 1, 1))
    Z = np.outer(tg.nodes, w0)
    return cfg, tg, U, Z


def test_stochastic_convolution_smooth_driver():
    cfg, tg, U, Z = _smooth_driver_case()
    M = U.shape[1]
    assert not np.any(stochastic_convolution(U, None, Z, cfg, tg.n, eta=0.4).coeffs)
    # oracle: int_0^t T(t-s) P[u0 w0] ds for the constant product
    xg = cfg.product_grid
    P = sine_analyze_array(sine_synthesize_array(U[0], xg) * sine_synthesize_array(Z[-1], xg), M,
                           check_boundary=False)
    lam = eigenvalues(M)
    oracle = P * (1 - np.exp(-lam)) / lam
    vals = []
    for eta in (0.3, 0.6):
        got = stochastic_convolution(U, lambda v: v, Z, cfg, tg.n, eta=eta).coeffs
        assert np.linalg.norm(got - oracle) / np.linalg.norm(oracle) < 1e-2
        vals.append(got)
    assert np.linalg.norm(vals[0] - vals[1]) / np.linalg.norm(vals[1]) < 1e-2
    fast = stochastic_convolution_path(U, lambda v: v, Z, tg)[-1]
    assert np.linalg.norm(fast - oracle) / np.linalg.norm(oracle) < 1e-6


def test_fractional_route_matches_path_route_on_rough_driver():
    cfg, tg, U, _ = _smooth_driver_case()
    rng = np.random.default_rng(1)
    U = U * (1 + 0.5 * np.sin(3 * tg.nodes))[:, None]
    Z = np.cumsum(rng.standard_normal(U.shape) * 0.1, axis=0) / (1 + np.arange(U.shape[1]))
    ref = stochastic_convolution_path(U, np.sin, Z, tg)[-1]
    got = stochastic_convolution(U, np.sin, Z, cfg, tg.n, eta=0.5).coeffs
    assert np.linalg.norm(got - ref) / np.linalg.norm(ref) < 1e-3


def test_stochastic_convolution_rejects_bad_eta():
    cfg, tg, U, Z = _smooth_driver_case(M=4, n_t=8)
    with pytest.raises(ValidationError):
        stochastic_convolution(U, np.sin, Z, cfg, tg.n)


# semilinear heat solver ------------------------------------------------------

def test_free_heat_flow_exact():
    cfg = SolverConfig(M=16, n_t=64)
    u0 = SpectralVector(np.linspace(1, 0, 16))
    r = solve_semilinear_heat(u0, NonlinearitySpec(), None, LINEAR, cfg)
    assert r.transcript["iterations"] == 1
    assert np.array_equal(r.coeffs, heat_flow_path(u0, cfg.t_grid))


def test_admissibility_gate():
    bad = AdmissibilityParams("example_i", H=0.6, K=0.7)
    p = AdmissibilityParams("general", 0.4, 0.5, 0.45, 0.6)
    assert not check_admissible(p).ok
    cfg = SolverConfig(M=8, n_t=16)
    u0 = SpectralVector.mode(1, 8)
    with pytest.raises(ValidationError):
        solve_semilinear_heat(u0, NonlinearitySpec(), None, bad, cfg)
    cfg = SolverConfig(M=8, n_t=16, override_admissibility=True)
    r = solve_semilinear_heat(u0, NonlinearitySpec(), None, p, cfg)
    assert r.transcript["override_admissibility"]
    assert r.transcript["admissibility"]["ok"] is False


def test_nonlinearity_must_vanish_at_zero():
    with pytest.raises(ValidationError):
        NonlinearitySpec(F=np.cos)


def test_superposition_linear_case():
    M, n_t = 16, 64
    cfg = SolverConfig(M=M, n_t=n_t, tol=1e-12)
    tg = cfg.t_grid
    rng = np.random.default_rng(3)
    Z = np.cumsum(rng.standard_normal((n_t + 1, M)), axis=0) * 0.05 / (1 + np.arange(M))
    spec = NonlinearitySpec.linear_map(0.5, 1.0)
    a = SpectralVector.mode(1, M)
    b = SpectralVector(rng.standard_normal(M) / (1 + np.arange(M)) ** 2)
    ua = solve_semilinear_heat(a, spec, Z, LINEAR, cfg).coeffs
    ub = solve_semilinear_heat(b, spec, Z, LINEAR, cfg).coeffs
    uab = solve_semilinear_heat(a + b, spec, Z, LINEAR, cfg).coeffs
    assert np.max(np.abs(uab - ua - ub)) / np.max(np.abs(uab)) < 1e-6


def test_mild_residual_and_transcript():
    M, n_t = 16, 64
    cfg = SolverConfig(M=M, n_t=n_t)
    rng = np.random.default_rng(4)
    Z = np.cumsum(rng.standard_normal((n_t + 1, M)), axis=0) * 0.05 / (1 + np.arange(M))
    spec = NonlinearitySpec(F=lambda u: 0.5 * np.sin(u), G=np.sin)
    r = solve_semilinear_heat(SpectralVector.mode(1, M), spec, Z, LINEAR, cfg)
    tr = r.transcript
    assert tr["converged"] and tr["mild_residual"] <= 10 * cfg.tol
    assert tr["contraction_factor"] < 0.9
    for key in ("admissibility", "eta", "distances", "rho_search", "start", "stopping"):
        assert key in tr
    d = np.array(tr["distances"])
    assert np.all(d[1:] < d[:-1])


def test_nonconvergence_is_reported():
    M, n_t = 8, 32
    cfg = SolverConfig(M=M, n_t=n_t, max_iter=2)
    Z = np.outer(UniformGrid(0.0, 1.0, n_t).nodes, np.ones(M))
    with pytest.raises(NumericalError) as exc:
        solve_semilinear_heat(SpectralVector.mode(1, M), NonlinearitySpec(G=np.sin), Z, LINEAR, cfg)
    assert len(exc.value.diagnostics["distances"]) == 2


def test_mode_count_checked():
    with pytest.raises(ValidationError):
        solve_semilinear_heat(SpectralVector.mode(1, 4), NonlinearitySpec(), None, LINEAR,
                              SolverConfig(M=8, n_t=16))


# contraction profile ---------------------------------------------------------

def _operator(M=16, n_t=64, linear=True):
    cfg = SolverConfig(M=M, n_t=n_t)
    rng = np.random.default_rng(5)
    Z = np.cumsum(rng.standard_normal((n_t + 1, M)), axis=0) * 0.05 / (1 + np.arange(M))
    spec = NonlinearitySpec.linear_map(0.0, 1.0) if linear else NonlinearitySpec(G=np.sin)
    return heat_operator(spec, Z, LINEAR, cfg), cfg


def test_identical_probes_are_undefined():
    op, cfg = _operator()
    base = heat_flow_path(SpectralVector.mode(1, 16), cfg.t_grid)
    prof = contraction_profile(op, [1, 4], [(base, base)])
    assert all(np.isnan(c) for c in prof["C"])


def test_linear_ratio_independent_of_radius():
    op, cfg = _operator()
    base = heat_flow_path(SpectralVector.mode(1, 16), cfg.t_grid)
    small = contraction_profile(op, [1, 16], [probe_pair(base, 0.01, 0)])["C"]
    large = contraction_profile(op, [1, 16], [probe_pair(base, 10.0, 0)])["C"]
    assert np.allclose(small, large, rtol=0.05)


def test_contraction_decreases_with_rho():
    op, cfg = _operator(linear=False)
    base = heat_flow_path(SpectralVector.mode(1, 16), cfg.t_grid)
    C = contraction_profile(op, [1, 4, 16, 64], [probe_pair(base, 0.1, s) for s in range(3)])["C"]
    assert np.all(np.diff(C) <= 0.1 * np.array(C[:-1]))


# transport -------------------------------------------------------------------

def test_transport_zero_field_is_heat_flow():
    p = AdmissibilityParams("transport", beta=0.1, gamma=0.2, delta=0.3)
    cfg = SolverConfig(M=16, n_t=32)
    u0 = SpectralVector.mode(2, 16)
    r = solve_transport(u0, None, p, cfg)
    assert np.array_equal(r.coeffs, heat_flow_path(u0, cfg.t_grid))
    with pytest.raises(ValidationError):
        solve_transport(u0, None, LINEAR, cfg)


def test_transport_support_stays_in_unit_interval():
    p = AdmissibilityParams("transport", beta=0.1, gamma=0.2, delta=0.3)
    cfg = SolverConfig(M=16, n_t=64)
    u0 = SpectralVector.mode(1, 16)
    r = solve_transport(u0, TransportProblem(u0, z_grad=lambda x: np.cos(3 * x)), p, cfg)
    vals = sine_synthesize_array(r.coeffs, np.array([0.0, 1.0]))
    assert np.max(np.abs(vals)) < 1e-12
    assert r.transcript["converged"]


def test_refinement_table():
    rows = refinement_table(lambda lv: lv, [1, 2, 4], lambda r: 1.0 + 1.0 / r)
    assert rows[0]["rel_change"] is None
    assert rows[1]["rel_change"] == pytest.approx(0.25)
