"""Burgers equation with additive spatially-differentiated noise through
the logarithmic transform of a positive solution of a heat equation with
multiplicative time-differentiated ("half") noise.

Pipeline::

    w0 = exp(U0 / 2)
    w(t) = T(t) w0 + eps-regularised  int T(t-s) w(s) dW(s)     (W = B / c)
    u    = c * d/dx log w                                       (c = -2)

With ``c = -2`` the field ``u`` solves ``u_t = u_xx - u u_x + d/dx dB/dt``
with ``u(0) = -U0'``.

Boundary handling: ``w`` keeps the boundary values of ``w0`` (linear lift
``l`` plus a Dirichlet remainder ``v``). This is the condition a positive
``w`` needs for ``log w`` to exist up to the boundary, and it makes ``u``
satisfy ``u_x = u^2 / 2`` at both ends when ``B = 0``.

The regularised noise rate is::

    dW_eps(s) = eps int_0^1 r^(eps-1) (W(s+r) - W(s)) / r dr

and, because it is linear in ``W``, the ``r``-integral is applied to the
sheet once (product integration exact on ``r^(eps-1)`` over geometric
nodes). The ``r = 0`` node is the pathwise limit: on each time cell the
cell slope of ``W`` multiplies the linear interpolant of ``w``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .core import (NumericalError, SpaceTimeField, UniformGrid, ValidationError, eigenvalues,
                   sine_analyze_array, sine_synthesize_array, unit_grid)
from .mild import SolverConfig

POSITIVITY_FLOOR = 1e-10
R_NODES = 64
R_MIN = 1e-6
PROBE_POINTS = 16
DEFAULT_EPS = (0.2, 0.1, 0.05, 0.025)


@dataclass
class TestFunction:
    """Smooth bump ``exp(1 - 1/(1 - y^2))`` with ``y = (x - center)/width``.

    Supported in ``(center - width, center + width)``, which must lie inside
    (0, 1). Peak value 1.
    """

    __test__ = False  # not a pytest class

    center: float
    width: float

    def __post_init__(self):
        if not (self.width > 0 and self.center - self.width > 0 and self.center + self.width < 1):
            raise ValidationError("test function support must lie strictly inside (0, 1)")

    def _parts(self, x):
        y = (np.asarray(x, dtype=float) - self.center) / self.width
        inside = np.abs(y) < 1
        q = np.where(inside, 1 - y * y, 1.0)
        val = np.where(inside, np.exp(1 - 1 / q), 0.0)
        return y, q, val, inside

    def __call__(self, x):
        return self._parts(x)[2]

    def d1(self, x):
        y, q, val, inside = self._parts(x)
        return np.where(inside, val * (-2 * y / q ** 2) / self.width, 0.0)

    def d2(self, x):
        y, q, val, inside = self._parts(x)
        g = -2 * y / q ** 2
        dg = (-2 * q ** 2 - 8 * y * y * q) / q ** 4  # d/dy of -2y/q^2, with q' = -2y
        return np.where(inside, val * (g * g + dg) / self.width ** 2, 0.0)


@dataclass
class BurgersProblem:
    """Data of the Burgers problem.

    Parameters
    ----------
    U0 : callable
        Potential; ``u0 = -U0'`` and ``w0 = exp(U0 / 2)``.
    B : SpaceTimeField or None
        Sheet in grid representation on ``[0, >= t0 + 1] x [0, 1]``. ``None``
        means ``B = 0``.
    H, K : float, optional
        Hurst indices of ``B`` (checked against ``0 < K <= 1/2``,
        ``2H + K > 2``, hence ``H > 3/4``).
    b_growth, growth_exponent : float
        Growth hypothesis on ``U0``; recorded only (vacuous on (0, 1)).
    """

    U0: Callable
    B: Optional[SpaceTimeField] = None
    H: Optional[float] = None
    K: Optional[float] = None
    eps_seq: Sequence[float] = DEFAULT_EPS
    t0: float = 1.0
    b_growth: float = 1.0
    growth_exponent: float = 1.0
    scale_constant: float = -2.0

    def __post_init__(self):
        eps = list(self.eps_seq)
        if not eps or any(e <= 0 or e > 1 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValidationError("eps_seq must be strictly decreasing values in (0, 1]")
        if self.scale_constant == 0:
            raise ValidationError("scale_constant must be nonzero")
        if self.B is not None:
            if self.H is None or self.K is None:
                raise ValidationError("a noise sheet needs its Hurst indices H and K")
            hyp = hypothesis_report(self.H, self.K)
            if not hyp["ok"]:
                raise ValidationError("noise indices violate " + "; ".join(
                    c["condition"] for c in hyp["checks"] if not c["holds"]))
            if self.B.representation != "grid" or self.B.x_grid is None:
                raise ValidationError("the sheet must be a grid field")
            if self.B.t_grid.b < self.t0 + 1 - 1e-12:
                raise ValidationError("the sheet must extend to t0 + 1 (forward lags up to r = 1)")
        if self.K is not None and not 2 * self.K <= self.growth_exponent <= 1:
            raise ValidationError("growth_exponent must lie in [2K, 1]")

    def w0(self, x):
        return np.exp(0.5 * np.asarray(self.U0(x), dtype=float))


def hypothesis_report(H: float, K: float) -> dict:
    checks = [
        {"condition": "0 < K", "lhs": 0.0, "rhs": K, "holds": 0 < K},
        {"condition": "K <= 1/2", "lhs": K, "rhs": 0.5, "holds": K <= 0.5},
        {"condition": "2 < 2H + K", "lhs": 2.0, "rhs": 2 * H + K, "holds": 2 < 2 * H + K},
        {"condition": "H < 1", "lhs": H, "rhs": 1.0, "holds": H < 1},
        {"condition": "3/4 < H", "lhs": 0.75, "rhs": H, "holds": H > 0.75},
    ]
    return {"ok": all(c["holds"] for c in checks), "checks": checks}


# --------------------------------------------------------------------------
# regularised noise rate
# --------------------------------------------------------------------------

def lag_nodes(n: int = R_NODES, r_min: float = R_MIN) -> np.ndarray:
    """``0`` followed by ``n - 1`` geometric nodes from ``r_min`` to 1."""
    return np.concatenate([[0.0], np.geomspace(r_min, 1.0, n - 1)])


def lag_weights(eps: float, r: np.ndarray) -> np.ndarray:
    """Weights of ``eps int_0^1 r^(eps-1) f(r) dr`` for piecewise-linear ``f``.

    Exact for ``f`` linear between consecutive nodes; they sum to 1.
    """
    a, b = r[:-1], r[1:]
    I0 = (b ** eps - a ** eps) / eps
    I1 = (b ** (eps + 1) - a ** (eps + 1)) / (eps + 1)
    left = (b * I0 - I1) / (b - a)
    right = (I1 - a * I0) / (b - a)
    w = np.zeros(r.size)
    w[:-1] += left
    w[1:] += right
    return eps * w


def _sheet_on(B: SpaceTimeField, xg: UniformGrid, tmax: float, h: float):
    """Sheet samples on ``xg`` and on the time grid of step ``h`` up to ``tmax``."""
    bx = B.x_grid
    ratio = bx.n / xg.n
    if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
        raise ValidationError(f"sheet spatial grid ({bx.n}) must refine the product grid ({xg.n})")
    step_t = h / B.t_grid.h
    if abs(step_t - round(step_t)) > 1e-9 or step_t < 1:
        raise ValidationError("sheet time step must divide the solver time step")
    n_keep = int(round(tmax / h))
    data = B.data[:: int(round(step_t)), :: int(round(ratio))]
    if data.shape[0] < n_keep + 1:
        raise ValidationError("sheet does not extend far enough in time")
    return data[: n_keep + 1]


@dataclass
class NoiseRate:
    """Regularised rate of ``W`` on the solver grid.

    ``cell_weight * cell_slope[j]`` is the ``r = 0`` part on cell ``j``;
    ``nodal[i]`` is the ``r > 0`` part at node ``i``.
    """

    cell_weight: float
    cell_slope: np.ndarray
    nodal: np.ndarray

    def cumulative(self, h: float) -> np.ndarray:
        """``int_0^{t_i}`` of the rate (trapezoid on the nodal part)."""
        n1 = self.nodal.shape[0]
        out = np.zeros_like(self.nodal)
        inc = self.cell_weight * self.cell_slope * h + 0.5 * h * (self.nodal[1:] + self.nodal[:-1])
        out[1:] = np.cumsum(inc, axis=0)
        assert out.shape[0] == n1
        return out


def noise_rate(W: np.ndarray, h: float, n_t: int, eps: float, r_nodes=None) -> NoiseRate:
    """Rate of the sheet ``W`` (rows: times ``0, h, 2h, ...``) for ``eps``."""
    r = lag_nodes() if r_nodes is None else np.asarray(r_nodes, dtype=float)
    wts = lag_weights(eps, r)
    s = np.arange(n_t + 1) * h
    base = W[: n_t + 1]
    nodal = np.zeros_like(base)
    for rk, wk in zip(r[1:], wts[1:]):
        pos = (s + rk) / h
        i0 = np.minimum(np.floor(pos).astype(int), W.shape[0] - 2)
        fr = (pos - i0)[:, None]
        shifted = (1 - fr) * W[i0] + fr * W[i0 + 1]
        nodal += wk * (shifted - base) / rk
    slope = np.diff(base, axis=0) / h
    return NoiseRate(float(wts[0]), slope, nodal)


# --------------------------------------------------------------------------
# half-noise heat equation
# --------------------------------------------------------------------------

def _moment_weights(lam: np.ndarray, h: float) -> np.ndarray:
    """``int_0^h exp(-lam (h - s)) b_k(s / h) ds`` for the quadratic Bernstein basis.

    Rows ``k = 0, 1, 2`` for ``(1-q)^2, q(1-q), q^2``. A power series is used
    for small ``lam h`` where the closed forms cancel.
    """
    x = lam * h
    I = np.empty((3, x.size))
    small = x < 0.5
    xs = x[small]
    m = np.arange(25)[:, None]
    fact = np.cumprod(np.r_[1.0, np.arange(1, 30)])
    for k in range(3):
        # sum_m (-x)^m k! / (m + k + 1)!
        I[k, small] = np.sum((-xs[None, :]) ** m * fact[k] / fact[m + k + 1], axis=0)
    xl = x[~small]
    e = np.exp(-xl)
    I[0, ~small] = -np.expm1(-xl) / xl
    I[1, ~small] = (xl - 1 + e) / xl ** 2
    I[2, ~small] = (xl * xl - 2 * xl + 2 - 2 * e) / xl ** 3
    return h * np.stack([I[0] - 2 * I[1] + I[2], I[1] - I[2], I[2]])


def half_noise_engine(v0: np.ndarray, lift: np.ndarray, rate: Optional[NoiseRate], t_grid: UniformGrid,
                      xg: UniformGrid, max_iter: int = 100, tol: float = 1e-12):
    """Picard iteration for ``v = T v0 + int T(t-s) P[(l + v(s)) dW_eps(s)]``.

    On each cell ``w`` and the rate are linear in time, so their product is
    quadratic; it is integrated exactly against the semigroup (quadratic
    Bernstein weights of :func:`_moment_weights`).

    Parameters
    ----------
    v0 : array (M,)
        Sine coefficients of the Dirichlet part of the initial value.
    lift : array (xg.n + 1,)
        Time-independent lift on the product grid (zero for a pure
        Dirichlet problem).
    rate : NoiseRate or None
        Sampled on ``xg``; ``None`` means no noise.

    Returns
    -------
    V : array (n_t + 1, M)
    deltas : list of float
        Sup over time of the ``L2`` distance of successive iterates.
    """
    M = v0.size
    lam = eigenvalues(M)
    TV = np.exp(-np.outer(t_grid.nodes, lam)) * v0
    if rate is None:
        return TV, [0.0]
    h = t_grid.h
    decay = np.exp(-lam * h)
    W0, W1, W2 = _moment_weights(lam, h)
    cell = rate.cell_weight * rate.cell_slope
    a = rate.nodal[:-1] + cell  # rate at the left end of each cell
    b = rate.nodal[1:] + cell   # and at the right end
    V = TV.copy()
    deltas = []
    for _ in range(max_iter):
        w = lift + sine_synthesize_array(V, xg)
        wl, wr = w[:-1], w[1:]
        X0 = sine_analyze_array(wl * a, M, check_boundary=False)
        X1 = sine_analyze_array(wl * b + wr * a, M, check_boundary=False)
        X2 = sine_analyze_array(wr * b, M, check_boundary=False)
        inc = W0 * X0 + W1 * X1 + W2 * X2
        Vn = TV.copy()
        S = np.zeros(M)
        for j in range(t_grid.n):
            S = decay * S + inc[j]
            Vn[j + 1] += S
        m = float(np.max(np.abs(Vn)))
        if not np.isfinite(m) or m > 1e12:
            raise NumericalError("half-noise Picard iterate diverged", {"deltas": deltas})
        d = float(np.max(np.sqrt(0.5 * np.sum((Vn - V) ** 2, axis=1))))
        deltas.append(d)
        V = Vn
        if d < tol * max(1.0, m):
            return V, deltas
    raise NumericalError(f"half-noise Picard did not converge in {max_iter} iterations",
                         {"deltas": deltas})


def _positivity(w: np.ndarray, t_grid, xg, what="w"):
    wmax = float(np.max(np.abs(w)))
    floor = POSITIVITY_FLOOR * wmax
    bad = np.argwhere(w <= floor)
    if bad.size:
        i, k = bad[0]
        raise NumericalError(
            f"{what} is not strictly positive: value {w[i, k]:.3e} at t={t_grid.nodes[i]:.6g}, "
            f"x={xg.nodes[k]:.6g} (node {int(i)}, {int(k)})",
            {"t_index": int(i), "x_index": int(k), "value": float(w[i, k]), "floor": floor})
    return float(w.min())


def solve_half_noise_heat(p: BurgersProblem, cfg: SolverConfig):
    """Solve the regularised half-noise heat equation for every ``eps``.

    Returns
    -------
    w : SpaceTimeField
        Grid field on ``cfg.product_grid`` for the last (smallest) ``eps``.
    record : dict
        Per-``eps`` probe values at ``t0`` (16 interior points), Picard
        deltas and minima of ``w``; ``B_effective`` (SpaceTimeField) is the
        time integral of the rate of ``B`` itself for the smallest ``eps``,
        the forcing ``u`` actually responds to.
    """
    if abs(cfg.t0 - p.t0) > 1e-12:
        raise ValidationError("cfg.t0 and problem t0 differ")
    tg, xg = cfg.t_grid, cfg.product_grid
    x = xg.nodes
    wv = p.w0(x)
    if np.any(wv <= 0) or not np.all(np.isfinite(wv)):
        raise ValidationError("w0 = exp(U0/2) must be finite and positive")
    lift = wv[0] + (wv[-1] - wv[0]) * x
    v0 = sine_analyze_array(wv - lift, cfg.M, check_boundary=False)
    probes_x = np.linspace(0, 1, PROBE_POINTS + 2)[1:-1]
    record = {"eps": [], "probe_x": probes_x.tolist(), "scale_constant": p.scale_constant,
              "hypotheses": None if p.H is None else hypothesis_report(p.H, p.K),
              "growth_metadata": {"b": p.b_growth, "exponent": p.growth_exponent}}
    start = time.perf_counter()
    if p.B is None:
        V, deltas = half_noise_engine(v0, lift, None, tg, xg)
        w = lift + sine_synthesize_array(V, xg)
        w[0] = wv  # the initial value itself, not its truncation
        wmin = _positivity(w, tg, xg)
        for e in p.eps_seq:
            record["eps"].append({"eps": e, "probes": _probe(w[-1], x, probes_x),
                                  "deltas": deltas, "min_w": wmin})
        record["B_effective"] = SpaceTimeField(tg, np.zeros((tg.n + 1, xg.n + 1)), "grid", xg)
    else:
        Wfull = _sheet_on(p.B, xg, p.t0 + 1.0, tg.h) / p.scale_constant
        for e in p.eps_seq:
            rate = noise_rate(Wfull, tg.h, tg.n, e)
            V, deltas = half_noise_engine(v0, lift, rate, tg, xg, cfg.max_iter)
            w = lift + sine_synthesize_array(V, xg)
            w[0] = wv
            wmin = _positivity(w, tg, xg)
            record["eps"].append({"eps": e, "probes": _probe(w[-1], x, probes_x),
                                  "deltas": deltas, "min_w": wmin})
        record["B_effective"] = SpaceTimeField(tg, rate.cumulative(tg.h) * p.scale_constant, "grid", xg)
    diffs = [float(np.max(np.abs(np.subtract(b["probes"], a["probes"]))))
             for a, b in zip(record["eps"], record["eps"][1:])]
    record["eps_differences"] = diffs
    record["min_w"] = min(r["min_w"] for r in record["eps"])
    record["wall_time"] = time.perf_counter() - start
    fld = SpaceTimeField(tg, w, "grid", xg, meta={"lift": lift, "M": cfg.M})
    return fld, record


def _probe(row, x, px):
    return np.interp(px, x, row).tolist()


# --------------------------------------------------------------------------
# transform and residual
# --------------------------------------------------------------------------

END_STENCIL = 9


def _one_sided_weights(order: int, npts: int, h: float) -> np.ndarray:
    """Weights of the ``order``-th derivative at node 0 from nodes ``0..npts-1``."""
    k = np.arange(npts, dtype=float)
    rhs = np.zeros(npts)
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(np.vander(k, npts, increasing=True).T, rhs) / h ** order


def _grid_derivative(vals: np.ndarray, xg: UniformGrid) -> np.ndarray:
    """``d/dx`` of grid rows on [0, 1], spectrally.

    The linear interpolant of the end values is removed, then a cubic with
    zero end values matching the end curvature of the remainder (one-sided
    9-point estimates). What is left vanishes with its second derivative at
    both ends, so its sine series decays like ``k^-5``; it is analyzed with
    every resolvable mode and differentiated as a cosine series. The
    derivatives of both polynomials are added back exactly.
    """
    N = xg.n
    x = xg.nodes
    lin_slope = vals[..., -1] - vals[..., 0]
    rem = vals - vals[..., :1] - lin_slope[..., None] * x
    npts = min(END_STENCIL, N + 1)
    w2 = _one_sided_weights(2, npts, xg.h)
    c0 = rem[..., :npts] @ w2
    c1 = rem[..., ::-1][..., :npts] @ w2
    # p = a x^3 + b x^2 + c x with p(0) = p(1) = 0, p''(0) = c0, p''(1) = c1
    a = ((c1 - c0) / 6)[..., None]
    b = (c0 / 2)[..., None]
    c = -(a + b)
    rem = rem - (a * x ** 3 + b * x ** 2 + c * x)
    Mz = N // 2
    s = sine_analyze_array(rem, Mz, check_boundary=False)
    k = np.arange(1, Mz + 1)
    return (lin_slope[..., None] + 3 * a * x ** 2 + 2 * b * x + c
            + (s * np.pi * k) @ np.cos(np.pi * np.outer(k, x)))


def cole_hopf(w: SpaceTimeField, scale_constant: float = -2.0) -> SpaceTimeField:
    """``u = scale_constant * d/dx log w`` on the grid of ``w``.

    Evaluated as ``scale_constant * w_x / w`` with ``w_x`` from the spectral
    derivative of ``w`` (the remainder ``w - lift`` satisfies the Dirichlet
    compatibility that ``log w - lift`` lacks, so its sine series converges
    faster).
    """
    if w.representation != "grid" or w.x_grid is None:
        raise ValidationError("cole_hopf needs a grid field")
    W = w.data
    if np.any(W <= POSITIVITY_FLOOR * np.max(np.abs(W))):
        _positivity(W, w.t_grid, w.x_grid)
    wx = _grid_derivative(W, w.x_grid)
    return SpaceTimeField(w.t_grid, scale_constant * wx / W, "grid", w.x_grid,
                          meta={"scale_constant": scale_constant})


def _trap(y, h, axis=-1):
    y = np.moveaxis(np.asarray(y), axis, -1)
    return h * (np.sum(y, axis=-1) - 0.5 * (y[..., 0] + y[..., -1]))


def _time_integral(y, h):
    """Composite Simpson rule (trapezoid when fewer than three nodes)."""
    if y.size < 3:
        return _trap(y, h)
    return float(simpson(y, dx=h))


def weak_residual(u: SpaceTimeField, B: Optional[SpaceTimeField], phi: TestFunction, t: float) -> float:
    """Residual of the distributional Burgers identity at time ``t``.

    ``(u(t), phi) - (u(0), phi) - int_0^t (u, phi'') ds
    - 1/2 int_0^t (u^2, phi') ds + (B(t), phi')``, i.e. the identity for
    ``u_t = u_xx - u u_x + d/dx dB/dt`` after moving all derivatives onto
    ``phi``. ``t`` must be a node of ``u.t_grid``; ``B = None`` is ``B = 0``.
    """
    tg, xg = u.t_grid, u.x_grid
    i = int(round((t - tg.a) / tg.h))
    if abs(tg.a + i * tg.h - t) > 1e-9 * max(1.0, abs(t)) or not 0 <= i <= tg.n:
        raise ValidationError(f"t={t} is not a node of the solution grid")
    x, hx = xg.nodes, xg.h
    U = u.data[: i + 1]
    p0, p1, p2 = phi(x), phi.d1(x), phi.d2(x)
    lhs = _trap(U[-1] * p0, hx) - _trap(U[0] * p0, hx)
    if i > 0:
        lap = _trap(U * p2, hx)
        nonlin = _trap(U * U * p1, hx)
        lhs -= _time_integral(lap, tg.h) + 0.5 * _time_integral(nonlin, tg.h)
    if B is not None:
        bt = B.t_grid
        j = int(round((t - bt.a) / bt.h))
        if abs(bt.a + j * bt.h - t) > 1e-9 * max(1.0, abs(t)):
            raise ValidationError(f"t={t} is not a node of the sheet grid")
        bx = B.x_grid
        lhs += _trap(B.data[j] * phi.d1(bx.nodes), bx.h)
    return float(lhs)


def weak_residual_profile(u: SpaceTimeField, B: Optional[SpaceTimeField], phi: TestFunction,
                          times) -> np.ndarray:
    """:func:`weak_residual` at several node times, sharing the quadratures.

    Time integrals are cumulative Simpson sums.
    """
    tg, xg = u.t_grid, u.x_grid
    x, hx = xg.nodes, xg.h
    U = u.data
    p0, p1, p2 = phi(x), phi.d1(x), phi.d2(x)
    pair = _trap(U * p0, hx)
    integrand = _trap(U * p2, hx) + 0.5 * _trap(U * U * p1, hx)
    cum = cumulative_simpson(integrand, dx=tg.h, initial=0.0)
    out = []
    for t in times:
        i = int(round((t - tg.a) / tg.h))
        if abs(tg.a + i * tg.h - t) > 1e-9 * max(1.0, abs(t)) or not 0 <= i <= tg.n:
            raise ValidationError(f"t={t} is not a node of the solution grid")
        r = pair[i] - pair[0] - cum[i]
        if B is not None:
            j = int(round((t - B.t_grid.a) / B.t_grid.h))
            r += _trap(B.data[j] * phi.d1(B.x_grid.nodes), B.x_grid.h)
        out.append(r)
    return np.array(out)
