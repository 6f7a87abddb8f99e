"""Gaussian noise generators with exact covariance, and regularity estimators.

* fBm in time and in space: cumulative sums of fractional Gaussian noise,
  generated by circulant embedding with a dense Cholesky fallback.
* Fractional Brownian sheet: separable covariance ``R_H(t,s) R_K(x,y)``.
  Both increment factors are applied to an i.i.d. normal array, one axis
  each, before the double cumulative sum (Kronecker structure).
* Hölder estimates from the log-log slope of mean absolute increments.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from .core import (NumericalError, SampledPath, SpaceTimeField, SpectralVector,
                   UniformGrid, ValidationError, _check_resolution)

JITTER = 1e-12
VARIOGRAM_SCALES = tuple(2 ** j for j in range(1, 7))


@dataclass(frozen=True)
class NoiseSpec:
    """Parameters and seed of a Gaussian field.

    ``H`` is the temporal Hurst index (also used as the spatial index by
    :func:`fbm_field_1d`). ``K`` is the spatial Hurst index of the sheet.
    ``scale`` is the constant ``c`` in ``E|B(t)-B(s)|^2 = c |t-s|^{2H}``.
    """

    H: float
    t_grid: Optional[UniformGrid] = None
    x_grid: Optional[UniformGrid] = None
    K: Optional[float] = None
    seed: int = 0
    scale: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.H < 1.0:
            raise ValidationError(f"H must lie in (0, 1), got {self.H}")
        if self.K is not None and not 0.0 < self.K <= 1.0:
            raise ValidationError(f"K must lie in (0, 1], got {self.K}")
        if not self.scale > 0:
            raise ValidationError("scale must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")

    def as_dict(self):
        return {
            "H": self.H, "K": self.K, "scale": self.scale, "seed": int(self.seed),
            "t_grid": None if self.t_grid is None else self.t_grid.as_dict(),
            "x_grid": None if self.x_grid is None else self.x_grid.as_dict(),
        }


@dataclass(frozen=True)
class RegularityEstimate:
    exponent: float
    ci_low: float
    ci_high: float
    method: str = "variogram"


# --------------------------------------------------------------------------
# fractional Gaussian noise
# --------------------------------------------------------------------------

def fgn_autocovariance(n: int, H: float) -> np.ndarray:
    """Autocovariance of unit-step fractional Gaussian noise at lags 0..n-1."""
    k = np.arange(n, dtype=float)
    return 0.5 * ((k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))


class IncrementFactor:
    """Square root of the ``n x n`` fGn covariance, applied along one axis.

    Uses the circulant embedding of size ``2n`` when its eigenvalues are
    nonnegative, otherwise a Cholesky factor with diagonal jitter.
    """

    def __init__(self, n: int, H: float):
        self.n = n
        r = fgn_autocovariance(n, H)
        row = np.concatenate([r, [0.0], r[:0:-1]])
        lam = np.fft.fft(row).real
        tol = 1e-10 * lam.max()
        if lam.min() >= -tol:
            self.method = "circulant"
            self.sqrt_lam = np.sqrt(np.clip(lam, 0.0, None))
            self.m = row.size
        else:
            self.method = "cholesky"
            C = r[np.abs(np.subtract.outer(np.arange(n), np.arange(n)))]
            try:
                self.L = np.linalg.cholesky(C + JITTER * np.eye(n))
            except np.linalg.LinAlgError as exc:
                raise NumericalError(
                    "circulant embedding has negative eigenvalues and the dense "
                    "covariance is not positive definite after jitter",
                    {"n": n, "H": H, "min_eigenvalue": float(lam.min())}) from exc

    @property
    def draws(self) -> int:
        """Normal draws consumed per application."""
        return self.m if self.method == "circulant" else self.n

    def apply(self, Z: np.ndarray, axis: int) -> np.ndarray:
        """Map i.i.d. normals (``draws`` along ``axis``) to correlated ones."""
        Z = np.moveaxis(Z, axis, -1)
        if self.method == "circulant":
            # symmetric real square root F^-1 diag(sqrt(lam)) F of the circulant
            Y = np.fft.ifft(np.fft.fft(Z, axis=-1) * self.sqrt_lam, axis=-1).real
            Y = Y[..., : self.n]
        else:
            Y = Z @ self.L.T
        return np.moveaxis(Y, -1, axis)


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed))


def _fbm_values(n: int, H: float, h: float, scale: float, rng) -> tuple:
    fac = IncrementFactor(n, H)
    inc = fac.apply(rng.standard_normal(fac.draws), axis=0)
    inc *= np.sqrt(scale) * h ** H
    vals = np.concatenate([[0.0], np.cumsum(inc)])
    return vals, fac.method


def fbm_path(spec: NoiseSpec) -> SampledPath:
    """One fBm sample on ``spec.t_grid``, anchored at ``B(a) = 0``.

    ``E[B(t) - B(s)]^2 = scale |t - s|^{2H}``.
    """
    if spec.t_grid is None:
        raise ValidationError("fbm_path needs a time grid")
    g = spec.t_grid
    vals, _ = _fbm_values(g.n, spec.H, g.h, spec.scale, _rng(spec.seed))
    return SampledPath(g, vals)


def fbm_field_1d(spec: NoiseSpec) -> np.ndarray:
    """Fractional Brownian field over ``spec.x_grid`` with index ``spec.H``."""
    if spec.x_grid is None:
        raise ValidationError("fbm_field_1d needs a spatial grid")
    g = spec.x_grid
    vals, _ = _fbm_values(g.n, spec.H, g.h, spec.scale, _rng(spec.seed))
    return vals


def fbs_sheet(spec: NoiseSpec) -> SpaceTimeField:
    """Fractional Brownian sheet on ``t_grid x x_grid``.

    Covariance ``scale * R_H(t,s) * R_K(x,y)``; anchored on ``t = t_grid.a``
    and on ``x = 0``. Returned in grid representation.
    """
    if spec.t_grid is None or spec.x_grid is None or spec.K is None:
        raise ValidationError("fbs_sheet needs t_grid, x_grid and K")
    tg, xg = spec.t_grid, spec.x_grid
    ft = IncrementFactor(tg.n, spec.H)
    fx = IncrementFactor(xg.n, spec.K)
    Z = _rng(spec.seed).standard_normal((ft.draws, fx.draws))
    Y = fx.apply(ft.apply(Z, axis=0), axis=1)
    Y *= np.sqrt(spec.scale) * tg.h ** spec.H * xg.h ** spec.K
    B = np.zeros((tg.n + 1, xg.n + 1))
    B[1:, 1:] = np.cumsum(np.cumsum(Y, axis=0), axis=1)
    meta = {"noise": spec.as_dict(), "anchoring": "B(t0,x)=0 and B(t,0)=0",
            "method": {"time": ft.method, "space": fx.method}}
    return SpaceTimeField(tg, B, "grid", xg, 0.0, meta)


# --------------------------------------------------------------------------
# regularity estimators
# --------------------------------------------------------------------------

def estimate_holder(path, method: str = "variogram", scales=VARIOGRAM_SCALES) -> RegularityEstimate:
    """Hölder exponent from dyadic-scale increments.

    ``variogram``: slope of ``log2 mean |x(t+s) - x(t)|`` against ``log2 s``.
    ``oscillation``: same with the mean over disjoint blocks of the block
    range ``max - min``.

    Parameters
    ----------
    path : SampledPath or array_like
        At least 256 samples.
    """
    v = path.values if isinstance(path, SampledPath) else np.asarray(path, dtype=float)
    if v.size < 256:
        raise ValidationError("estimate_holder needs at least 256 nodes")
    spread = np.ptp(v)
    if spread == 0.0 or spread < 1e-14 * max(1.0, np.max(np.abs(v))):
        raise NumericalError("constant path: Hölder estimate undefined", {"degenerate": True})
    s = np.asarray(scales, dtype=int)
    m = []
    for lag in s:
        if method == "variogram":
            m.append(np.mean(np.abs(v[lag:] - v[:-lag])))
        elif method == "oscillation":
            nb = (v.size - 1) // lag
            blocks = np.lib.stride_tricks.sliding_window_view(v, lag + 1)[::lag][:nb]
            m.append(np.mean(blocks.max(axis=1) - blocks.min(axis=1)))
        else:
            raise ValidationError(f"unknown method {method!r}")
    m = np.asarray(m)
    if np.any(m <= 0):
        raise NumericalError("zero increments at some scale", {"degenerate": True})
    fit = stats.linregress(np.log2(s), np.log2(m))
    half = 1.96 * fit.stderr
    return RegularityEstimate(float(fit.slope), float(fit.slope - half),
                              float(fit.slope + half), method)


# --------------------------------------------------------------------------
# spatial derivative of a slice
# --------------------------------------------------------------------------

def spatial_derivative_array(values, M: int) -> np.ndarray:
    """Sine coefficients of ``d/dx`` of grid slices (last axis).

    The derivative of the piecewise-linear interpolant is paired with each
    ``sin(j pi x)``: ``e_j = 2 int v' sin(j pi x) dx``, exact cell by cell.
    Integrating by parts this equals ``-2 j pi int v cos(j pi x) dx``, so
    the slice need not vanish at the endpoints: the sine modes vanish there
    and absorb the boundary terms. For slices that do vanish it coincides
    with differentiating the sine series term by term and re-projecting the
    cosine series onto the sine modes.
    """
    v = np.asarray(values, dtype=float)
    N = v.shape[-1] - 1
    _check_resolution(N, M)
    x = np.linspace(0.0, 1.0, N + 1)
    j = np.arange(1, M + 1)
    cosx = np.cos(np.pi * np.multiply.outer(x, j))  # (N+1, M)
    slopes = np.diff(v, axis=-1) * N  # per cell
    W = 2.0 * (cosx[:-1] - cosx[1:]) / (np.pi * j)  # (N, M)
    return slopes @ W


def spatial_derivative_spectral(values, M: int, order: float = 0.0) -> SpectralVector:
    """``d/dx`` of a grid slice on [0, 1] as ``M`` sine coefficients.

    The order tag of the result is ``order - 1``.
    """
    return SpectralVector(spatial_derivative_array(values, M), order - 1.0)


# --------------------------------------------------------------------------
# deterministic rough paths
# --------------------------------------------------------------------------

def weierstrass_path(grid: UniformGrid, holder: float = 0.7, amplitude: float = 0.3,
                     base: float = 2 ** 0.25, seed: int = 7, drift: float = 1.0) -> SampledPath:
    """``drift*t + amplitude * sum_k base^(-holder k) sin(pi base^k t + phase_k)``.

    A deterministic path of exact Hölder order ``holder``. Phases are
    uniform draws from ``seed``; the series is cut where the frequency
    exceeds ``2^21`` (far beyond any grid used here).
    """
    if not 0 < holder < 1 or base <= 1:
        raise ValidationError("need 0 < holder < 1 and base > 1")
    n_terms = int(np.ceil(21 / np.log2(base)))
    phase = _rng(seed).uniform(0.0, 2 * np.pi, n_terms)
    t = grid.nodes
    v = drift * t
    for k in range(n_terms):
        v = v + amplitude * base ** (-holder * k) * np.sin(np.pi * base ** k * t + phase[k])
    return SampledPath(grid, v)
