"""Spectral Dirichlet heat semigroup on (0,1) and its functional calculus.

Every operator here is diagonal in the sine basis, so operator norms are
exact maxima over modes. The spectral gap ``pi^2`` lets the shift ``omega``
of the smoothing and continuity bounds be zero; the argument is kept for the
general form.

Norm convention: ``sin(k pi x)`` has L2 norm ``1/sqrt(2)``, so
``||u||_{L2}^2 = (1/2) sum c_k^2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gamma

from .core import SpectralVector, UniformGrid, ValidationError, eigenvalues, sine_synthesize_array

D_S = 1.0


@dataclass(frozen=True)
class GeneratorSpec:
    """Dirichlet Laplacian truncated to ``M`` modes."""

    M: int

    def __post_init__(self):
        if self.M < 1:
            raise ValidationError("M must be >= 1")

    @property
    def eigenvalues(self) -> np.ndarray:
        return eigenvalues(self.M)


def l2_norm(coeffs) -> float:
    c = np.asarray(coeffs, dtype=float)
    return float(np.sqrt(0.5 * np.sum(c * c, axis=-1)))


def inner(u: SpectralVector, v: SpectralVector) -> float:
    """L2(0,1) inner product of two spectral vectors."""
    return float(0.5 * np.dot(u.coeffs, v.coeffs))


def heat_apply(u: SpectralVector, t: float) -> SpectralVector:
    """``T(t) u``: coefficients times ``exp(-lambda_k t)``; order tag kept."""
    if t < 0:
        raise ValidationError("time must be nonnegative")
    if t == 0:
        return u
    return u.with_coeffs(u.coeffs * np.exp(-eigenvalues(u.M) * t))


def frac_power_apply(u: SpectralVector, alpha: float) -> SpectralVector:
    """``A^alpha u`` for any real alpha (coefficients times ``lambda_k^alpha``)."""
    if alpha == 0:
        return u
    return u.with_coeffs(u.coeffs * eigenvalues(u.M) ** alpha)


def frac_power_quadrature(u: SpectralVector, alpha: float) -> SpectralVector:
    """``A^alpha u`` through the semigroup integral representations.

    For ``alpha < 0`` the Bochner integral
    ``Gamma(-alpha)^-1 int_0^inf t^{-alpha-1} T(t) u dt``; for
    ``0 < alpha < 1`` the Balakrishnan form
    ``Gamma(-alpha)^-1 int_0^inf t^{-alpha-1} (T(t) u - u) dt``. Each mode is
    integrated by adaptive quadrature, which makes this an independent check
    of :func:`frac_power_apply`.
    """
    if alpha == 0:
        return u
    if not (alpha < 0 or 0 < alpha < 1):
        raise ValidationError("quadrature form covers alpha < 0 and 0 < alpha < 1")
    lam = eigenvalues(u.M)
    out = np.zeros(u.M)
    for k, (c, lk) in enumerate(zip(u.coeffs, lam)):
        if c == 0.0:
            continue
        val = _negpow_mode(-alpha, lk) if alpha < 0 else _pospow_mode(alpha, lk)
        out[k] = c * val
    return u.with_coeffs(out)


def _negpow_mode(a: float, lam: float) -> float:
    # int_0^inf t^{a-1} e^{-lam t} dt / Gamma(a), split at t = 1/lam
    f = lambda t: t ** (a - 1) * np.exp(-lam * t)
    c = 1.0 / lam
    v1, _ = integrate.quad(lambda t: np.exp(-lam * t), 0, c, weight="alg", wvar=(a - 1, 0),
                           epsabs=0, epsrel=1e-12)
    v2, _ = integrate.quad(f, c, np.inf, epsabs=0, epsrel=1e-12, limit=200)
    return (v1 + v2) / gamma(a)


def _pospow_mode(alpha: float, lam: float) -> float:
    # Gamma(-alpha)^-1 int_0^inf t^{-alpha-1} (e^{-lam t} - 1) dt
    c = 1.0 / lam
    g = lambda t: np.expm1(-lam * t) / t if t > 0 else -lam
    v1, _ = integrate.quad(g, 0, c, weight="alg", wvar=(-alpha, 0), epsabs=0, epsrel=1e-12)
    v2, _ = integrate.quad(lambda t: t ** (-alpha - 1) * np.expm1(-lam * t), c, np.inf,
                           epsabs=0, epsrel=1e-12, limit=200)
    return (v1 + v2) / gamma(-alpha)


def bessel_potential(u: SpectralVector, sigma: float) -> SpectralVector:
    """``J^sigma u = (A + I)^{-sigma/2} u``; raises the order tag by sigma."""
    if sigma < 0:
        raise ValidationError("bessel_potential needs sigma >= 0; use bessel_inverse")
    if sigma == 0:
        return u
    return SpectralVector(u.coeffs * (eigenvalues(u.M) + 1.0) ** (-sigma / 2), u.order + sigma)


def bessel_inverse(u: SpectralVector, sigma: float) -> SpectralVector:
    """``(A + I)^{sigma/2} u``; lowers the order tag by sigma."""
    if sigma == 0:
        return u
    return SpectralVector(u.coeffs * (eigenvalues(u.M) + 1.0) ** (sigma / 2), u.order - sigma)


def sobolev_norm_array(coeffs, sigma: float) -> np.ndarray:
    """Vectorised :func:`sobolev_norm` over the leading axes of ``coeffs``."""
    c = np.asarray(coeffs, dtype=float)
    lam = eigenvalues(c.shape[-1])
    if sigma == 0:
        return np.sqrt(0.5 * np.sum(c * c, axis=-1))
    if sigma > 0:
        base = np.sqrt(0.5 * np.sum(c * c, axis=-1))
        top = np.sqrt(0.5 * np.sum(c * c * lam ** sigma, axis=-1))
        return base + top
    return np.sqrt(0.5 * np.sum(c * c * (lam + 1.0) ** sigma, axis=-1))


def sobolev_norm(u, sigma: float) -> float:
    """Norm on the potential scale ``H^sigma``.

    ``sigma >= 0``: ``||u||_{L2} + ||A^{sigma/2} u||_{L2}``.
    ``sigma < 0``: ``||(A + I)^{sigma/2} u||_{L2}`` (dual Bessel scale).
    Both use the L2 convention of this module.
    """
    c = u.coeffs if isinstance(u, SpectralVector) else u
    return float(sobolev_norm_array(c, sigma))


def smoothing_constant(alpha: float, M: int = 4096, t_samples=None) -> float:
    """Empirical ``sup_t t^alpha ||A^alpha T(t)||``.

    The operator norm is ``max_k lambda_k^alpha exp(-lambda_k t)``. By
    default ``t`` is sampled log-uniformly over ``[1e-7, 10]``.
    """
    if alpha < 0:
        raise ValidationError("alpha must be >= 0")
    if t_samples is None:
        t_samples = np.logspace(-7, 1, 801)
    t = np.asarray(t_samples, dtype=float)
    if np.any(t <= 0):
        raise ValidationError("t samples must be positive")
    if alpha == 0:
        return 1.0  # contraction: the sup is the t -> 0 limit
    lam = eigenvalues(M)
    # evaluated as exp(alpha log(lam t) - lam t) to avoid 0 * inf
    x = np.multiply.outer(t, lam)
    vals = np.exp(alpha * np.log(x) - x)
    return float(np.max(vals))


def smoothing_bound_check(alpha: float, t_samples=None, M: int = 4096) -> float:
    """Constant of ``||A^alpha T(t)|| <= c t^-alpha``, measured (``omega = 0``)."""
    return smoothing_constant(alpha, M, t_samples)


def continuity_constant(alpha: float) -> float:
    """Constant with ``||T(t)u - u|| <= c t^alpha ||A^alpha u||``.

    From ``T(t)u - u = -int_0^t A^{1-alpha} T(s) A^alpha u ds`` and the
    smoothing bound: ``c = c_{1-alpha} / alpha``. At ``alpha = 0`` the
    estimate is the contraction bound ``||T(t)u - u|| <= 2||u||``.
    """
    if not 0 <= alpha < 1:
        raise ValidationError("alpha must lie in [0, 1)")
    if alpha == 0:
        return 2.0
    return smoothing_constant(1.0 - alpha) / alpha


def continuity_estimate_check(u: SpectralVector, alpha: float, t: float, omega: float = 0.0):
    """Both sides of the continuity estimate.

    ``lhs = ||T(t)u - u||``,
    ``rhs = c t^alpha ||(omega + A)^alpha u|| + (1 - exp(-omega t)) ||u||``.

    Returns
    -------
    (lhs, rhs, ok) : (float, float, bool)
        ``ok`` is ``lhs <= rhs * (1 + 1e-9)``.
    """
    lhs = l2_norm(heat_apply(u, t).coeffs - u.coeffs)
    lam = eigenvalues(u.M)
    Au = u.coeffs * (omega + lam) ** alpha
    rhs = continuity_constant(alpha) * t ** alpha * l2_norm(Au) + (1 - np.exp(-omega * t)) * l2_norm(u.coeffs)
    if alpha == 0:
        rhs = continuity_constant(0.0) * l2_norm(u.coeffs)
        if t == 0:
            rhs = 0.0
    return lhs, float(rhs), bool(lhs <= rhs * (1 + 1e-9))


def dual_bound_constant(sigma: float) -> float:
    """Constant in ``||T(t) z||_{L2} <= c (t^{-sigma/2} + t^{-1/4}) ||z||_{H^-sigma}``.

    Since ``lambda_k >= pi^2 > 1`` one has ``(lambda + 1)^{sigma/2} <=
    (2 lambda)^{sigma/2}`` and ``lambda^{sigma/2} exp(-lambda t) <=
    c_{sigma/2} t^{-sigma/2}``, so ``c = 2^{sigma/2} c_{sigma/2}`` suffices.
    """
    return 2.0 ** (sigma / 2) * smoothing_constant(sigma / 2)


def dual_apply(z: SpectralVector, t: float, sigma: float = None, return_report: bool = False):
    """``T(t) z`` for a (possibly negative order) element ``z``.

    Same coefficient map as :func:`heat_apply`; additionally compares the L2
    norm of the result with the dual bound for ``H^{-sigma}``
    (``sigma = -z.order`` by default) and reports the ratio.
    """
    sig = -z.order if sigma is None else sigma
    if t <= 0:
        if sig > 0:
            raise ValidationError("T(0) of a negative-order element has no function trace")
        return (z, {"ratio": 0.0, "ok": True}) if return_report else z
    out = heat_apply(z, t)
    res = SpectralVector(out.coeffs, 0.0)
    if not return_report:
        return res
    sig_eff = max(sig, 0.0)
    bound = dual_bound_constant(sig_eff) * (t ** (-sig_eff / 2) + t ** (-D_S / 4)) * sobolev_norm(z, -sig_eff)
    lhs = l2_norm(res.coeffs)
    return res, {"lhs": lhs, "bound": float(bound), "ratio": lhs / bound if bound > 0 else 0.0,
                 "ok": bool(lhs <= bound * (1 + 1e-9))}


def ultracontractivity_norm(t: float, M: int, x_points: int = None) -> float:
    """``||T(t)||_{L2 -> Linf}`` at finite ``M``.

    Equals ``max_x (sum_k exp(-2 lambda_k t) e_k(x)^2)^{1/2}`` with
    orthonormal ``e_k = sqrt(2) sin(k pi x)``: the L2 norm of the heat
    kernel row at the worst point.
    """
    n = x_points or max(8 * M, 256)
    x = np.linspace(0.0, 1.0, n + 1)
    lam = eigenvalues(M)
    k = np.arange(1, M + 1)
    rows = 2.0 * np.sin(np.pi * np.outer(x, k)) ** 2 @ np.exp(-2 * lam * t)
    return float(np.sqrt(rows.max()))


def ultracontractivity_exponent(t_values, M: int) -> float:
    """Log-log slope of :func:`ultracontractivity_norm` over ``t_values``."""
    t = np.asarray(t_values, dtype=float)
    vals = np.array([ultracontractivity_norm(ti, M) for ti in t])
    return float(np.polyfit(np.log(t), np.log(vals), 1)[0])


def synthesized_range(u: SpectralVector, t: float, x_grid: UniformGrid):
    """(min, max) of the synthesized ``T(t) u`` on a spatial grid."""
    v = sine_synthesize_array(heat_apply(u, t).coeffs, x_grid)
    return float(v.min()), float(v.max())
