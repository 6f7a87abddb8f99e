"""Mild solutions on (0,1): semigroup convolutions, admissibility checks,
weighted Hölder norms and Picard solvers.

The problems are

* semilinear heat ``du = (Delta u + F(u)) dt + G(u) dz`` with ``z`` an
  ``H^-beta``-valued path (for instance ``z = d/dx B`` of a fractional
  Brownian sheet), and
* transport-diffusion ``du = (Delta u + u' z') dt`` with a rough spatial
  field ``z``.

Two evaluations of the noise convolution ``int_0^t T(t-s) G(u(s)) dz(s)``
are provided.

``stochastic_convolution`` is the fractional route. It pairs
``D^eta_{0+} U(t; .)`` (semigroup representation of the Marchaud derivative
of ``s -> T(t-s) G(u(s))``) with ``D^{1-eta}_{t-} z_t``, both taken on the
time interpolants of ``u`` and ``z``. It costs ``O(n_t^2)`` grid products per
target time.

``stochastic_convolution_path`` integrates the same interpolants exactly
in time with an exponential integrator, for all target times in
``O(n_t)`` products. For Lipschitz (piecewise-linear) drivers the two
integrals coincide, so the fast path is what the solvers use and the
fractional route is its cross-check (η-independence included).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import gamma, gammainc, gammaincc

from .core import (NumericalError, SpaceTimeField, SpectralVector, UniformGrid,
                   ValidationError, eigenvalues, sine_analyze_array, sine_synthesize_array,
                   unit_grid)
from .fraccalc import FracOrder
from .semigroup import D_S, sobolev_norm_array

OVERFLOW_GUARD = 1e12
RHO_CONTRACTION_TARGET = 0.9
RHO_MAX_QUADRUPLINGS = 4


# --------------------------------------------------------------------------
# admissibility
# --------------------------------------------------------------------------

VARIANTS = ("general", "hke", "linear", "example_i", "transport")


@dataclass(frozen=True)
class AdmissibilityParams:
    """Exponents of the solvability conditions.

    Unused exponents may be ``None`` (``example_i`` needs only ``H, K``;
    ``transport`` needs ``beta, gamma, delta``). ``q_metadata`` is recorded
    and never enforced.
    """

    variant: str = "general"
    alpha: Optional[float] = None
    beta: Optional[float] = None
    gamma: Optional[float] = None
    delta: Optional[float] = None
    epsilon: Optional[float] = None
    d_S: float = D_S
    H: Optional[float] = None
    K: Optional[float] = None
    q_metadata: Optional[float] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        for name in ("alpha", "beta", "gamma", "delta", "epsilon"):
            v = getattr(self, name)
            if v is not None and not 0.0 < v < 1.0:
                raise ValidationError(f"{name} must lie in (0, 1), got {v}")

    def as_dict(self):
        return {k: getattr(self, k) for k in
                ("variant", "alpha", "beta", "gamma", "delta", "epsilon", "d_S", "H", "K",
                 "q_metadata")}


@dataclass
class AdmissibilityReport:
    ok: bool
    checks: list = field(default_factory=list)

    def __bool__(self):
        return self.ok

    def as_dict(self):
        return {"ok": self.ok, "checks": self.checks}


def _need(p, *names):
    missing = [n for n in names if getattr(p, n) is None]
    if missing:
        raise ValidationError(f"variant {p.variant!r} needs {', '.join(missing)}")


def check_admissible(p: AdmissibilityParams) -> AdmissibilityReport:
    """Evaluate every hypothesis of the selected variant.

    Each entry of ``report.checks`` records the inequality, its two sides
    and whether it holds.

    Examples
    --------
    >>> check_admissible(AdmissibilityParams("example_i", H=0.8, K=0.5)).ok
    True
    >>> check_admissible(AdmissibilityParams("example_i", H=0.6, K=0.7)).ok
    False
    """
    checks = []

    def lt(name, lhs, rhs):
        checks.append({"condition": name, "lhs": float(lhs), "rhs": float(rhs),
                       "holds": bool(lhs < rhs)})

    def le(name, lhs, rhs):
        checks.append({"condition": name, "lhs": float(lhs), "rhs": float(rhs),
                       "holds": bool(lhs <= rhs)})

    v = p.variant
    half = p.d_S / 2.0
    if v == "example_i":
        _need(p, "H", "K")
        lt("1/2 < H", 0.5, p.H)
        lt("H < 1", p.H, 1.0)
        lt("2 < 2H + K", 2.0, 2 * p.H + p.K)
    elif v == "transport":
        _need(p, "beta", "gamma", "delta")
        lt("beta < delta", p.beta, p.delta)
        lt("delta < 1/2", p.delta, 0.5)
        lt("0 < 2 gamma", 0.0, 2 * p.gamma)
        lt("2 gamma < 1 - beta - delta", 2 * p.gamma, 1 - p.beta - p.delta)
    else:
        _need(p, "alpha", "beta", "gamma", "delta")
        lt("alpha < gamma", p.alpha, p.gamma)
        lt("gamma < 1 - alpha", p.gamma, 1 - p.alpha)
        if v == "general":
            le("beta <= delta", p.beta, p.delta)
            lt("2 gamma + max(delta, d_S/2) < 2 - 2 alpha - max(beta, d_S/2)",
               2 * p.gamma + max(p.delta, half), 2 - 2 * p.alpha - max(p.beta, half))
        else:
            lt("beta < delta", p.beta, p.delta)
            lt("delta < d_S/2", p.delta, half)
            if v == "hke":
                lt("2 gamma + d_S/2 < 2 - 2 alpha - beta",
                   2 * p.gamma + half, 2 - 2 * p.alpha - p.beta)
            else:
                lt("2 gamma + delta < 2 - 2 alpha - beta",
                   2 * p.gamma + p.delta, 2 - 2 * p.alpha - p.beta)
    return AdmissibilityReport(all(c["holds"] for c in checks), checks)


def sheet_exponents(H: float, K: float, variant: str = "hke", margin: float = 0.01,
                    epsilon: float = 0.05) -> AdmissibilityParams:
    """Exponents for the heat equation driven by ``d/dx B^{H,K}``.

    The noise lies in ``C^{1-alpha}(H^{-beta})`` for ``alpha > 1 - H`` and
    ``beta > 1 - K``, so ``alpha = 1 - H + margin`` and ``beta = 1 - K +
    margin``. ``delta`` is the midpoint of ``(beta, d_S/2)`` and ``gamma``
    the midpoint of the window left by the variant's main inequality.
    """
    alpha = 1.0 - H + margin
    beta = 1.0 - K + margin
    half = D_S / 2
    delta = 0.5 * (beta + half) if beta < half else min(beta + margin, 0.99)
    if variant == "hke":
        g_hi = 0.5 * (2 - 2 * alpha - beta - half)
    elif variant == "linear":
        g_hi = 0.5 * (2 - 2 * alpha - beta - delta)
    else:
        g_hi = 0.5 * (2 - 2 * alpha - max(beta, half) - max(delta, half))
    g_hi = min(g_hi, 1 - alpha)
    gam = 0.5 * (alpha + g_hi) if g_hi > alpha else alpha + margin
    gam = float(np.clip(gam, 1e-3, 0.999))
    return AdmissibilityParams(variant, alpha, beta, gam, delta, epsilon, D_S, H, K)


def eta_window(p: AdmissibilityParams):
    """Window for the splitting order of the noise convolution.

    Lower end ``alpha`` (the driver is ``C^{1-alpha}``); upper end from
    ``max(delta, d_S/2) < 2 - 2 eta - max(beta, d_S/2)``.
    """
    half = p.d_S / 2
    hi = 0.5 * (2 - max(p.delta, half) - max(p.beta, half))
    return float(p.alpha), float(min(hi, 1.0))


def default_eta(p: AdmissibilityParams) -> float:
    lo, hi = eta_window(p)
    if hi <= lo:
        raise ValidationError(f"empty eta window ({lo:.3f}, {hi:.3f})")
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# nonlinearities and configuration
# --------------------------------------------------------------------------

@dataclass
class NonlinearitySpec:
    """Pointwise drift ``F`` and noise coefficient ``G`` (vectorised callables).

    ``linear`` flags ``F`` and ``G`` as linear maps, which selects the
    linear-case admissibility conditions and allows superposition checks.
    """

    F: Optional[Callable] = None
    G: Optional[Callable] = None
    dF: Optional[Callable] = None
    dG: Optional[Callable] = None
    d2G: Optional[Callable] = None
    lip_F: float = 1.0
    lip_G: float = 1.0
    linear: bool = False

    def __post_init__(self):
        for name in ("F", "G"):
            fn = getattr(self, name)
            if fn is not None:
                v0 = float(np.asarray(fn(np.zeros(1)))[0])
                if abs(v0) > 1e-14:
                    raise ValidationError(f"{name}(0) must be 0, got {v0}")
        if self.lip_F <= 0 or self.lip_G <= 0:
            raise ValidationError("Lipschitz constants must be positive")

    @classmethod
    def linear_map(cls, f_coef: float = 0.0, g_coef: float = 1.0):
        F = None if f_coef == 0 else (lambda u, c=f_coef: c * u)
        G = None if g_coef == 0 else (lambda u, c=g_coef: c * u)
        return cls(F, G, lip_F=max(abs(f_coef), 1e-300) if f_coef else 1.0,
                   lip_G=max(abs(g_coef), 1e-300) if g_coef else 1.0, linear=True)


@dataclass(frozen=True)
class SolverConfig:
    """Discretisation and iteration settings.

    ``oversample`` is the factor of the product grid over the minimal
    ``2M`` (products of two M-mode functions alias otherwise).
    """

    M: int = 64
    n_t: int = 512
    t0: float = 1.0
    eta: Optional[float] = None
    rho: float = 1.0
    auto_rho: bool = True
    max_iter: int = 60
    tol: float = 1e-8
    oversample: int = 2
    refinement_levels: tuple = (1, 2)
    override_admissibility: bool = False

    def __post_init__(self):
        if self.rho < 1:
            raise ValidationError("rho must be >= 1")
        if not self.tol > 0:
            raise ValidationError("tol must be > 0")
        if self.M < 1 or self.n_t < 2:
            raise ValidationError("need M >= 1 and n_t >= 2")
        if self.eta is not None:
            FracOrder(self.eta)

    @property
    def t_grid(self) -> UniformGrid:
        return UniformGrid(0.0, self.t0, self.n_t)

    @property
    def product_grid(self) -> UniformGrid:
        return unit_grid(2 * self.M * self.oversample)


# --------------------------------------------------------------------------
# grid-level products
# --------------------------------------------------------------------------

def _apply_pointwise(fn, coeffs, xg):
    """``P[fn(u)]`` for spectral rows ``coeffs`` via the grid ``xg``."""
    M = coeffs.shape[-1]
    vals = fn(sine_synthesize_array(coeffs, xg))
    vals[..., 0] = 0.0
    vals[..., -1] = 0.0
    return sine_analyze_array(vals, M, check_boundary=False)


def _product(a_grid, b_coeffs, xg, M):
    """``P[a * b]`` with ``a`` on the grid and ``b`` spectral."""
    vals = a_grid * sine_synthesize_array(b_coeffs, xg)
    return sine_analyze_array(vals, M, check_boundary=False)


def _as_coeffs(x):
    if isinstance(x, SpaceTimeField):
        if x.representation != "spectral":
            raise ValidationError("expected a spectral field")
        return x.data
    if isinstance(x, SpectralVector):
        return x.coeffs
    return np.asarray(x, dtype=float)


# --------------------------------------------------------------------------
# weighted norms
# --------------------------------------------------------------------------

def _space_norms(V, sigma, linf, xg):
    n = sobolev_norm_array(V, sigma)
    if linf:
        n = n + np.max(np.abs(sine_synthesize_array(V, xg)), axis=-1)
    return n


def pairwise_space_distances(V, sigma: float, linf: bool = False, xg=None) -> np.ndarray:
    """Matrix ``D[i, k] = ||v_i - v_k||_E`` for ``k <= i`` (lower triangle)."""
    n1, M = V.shape
    lam = eigenvalues(M)
    out = np.zeros((n1, n1))
    if xg is None:
        xg = unit_grid(8 * M)
    vals = sine_synthesize_array(V, xg) if linf else None
    for i in range(1, n1):
        diff = V[i] - V[:i]
        out[i, :i] = _norm_rows(diff, lam, sigma)
        if linf:
            out[i, :i] += np.max(np.abs(vals[i] - vals[:i]), axis=-1)
    return out


def _norm_rows(diff, lam, sigma):
    sq = diff * diff
    if sigma == 0:
        return np.sqrt(0.5 * sq.sum(-1))
    if sigma > 0:
        return np.sqrt(0.5 * sq.sum(-1)) + np.sqrt(0.5 * (sq * lam ** sigma).sum(-1))
    return np.sqrt(0.5 * (sq * (lam + 1.0) ** sigma).sum(-1))


def _w_seminorm(D, h, gam):
    """``int_0^{t_i} ||v(t_i)-v(tau)|| (t_i-tau)^{-gam-1} dtau`` for every i.

    ``tau -> ||v(t_i) - v(tau)||`` is interpolated linearly between nodes
    and the kernel is integrated exactly; on the last cell the distance
    starts from 0, which keeps the singular part finite.
    """
    n1 = D.shape[0]
    out = np.zeros(n1)
    g = gam
    for i in range(1, n1):
        d = D[i, :i][::-1]  # distances at lags 1..i
        lag = np.arange(1, i + 1, dtype=float)
        tot = d[0] * h ** (-g) / (1 - g)  # last cell: d grows linearly from 0
        if i > 1:
            a, b = lag[:-1] * h, lag[1:] * h
            m0 = (a ** (-g) - b ** (-g)) / g          # int r^{-g-1}
            m1 = (b ** (1 - g) - a ** (1 - g)) / (1 - g)  # int r^{-g}
            da, db = d[:-1], d[1:]
            slope = (db - da) / h
            tot += np.sum((da - slope * a) * m0 + slope * m1)
        out[i] = tot
    return out


def weighted_norm(path, t_grid: UniformGrid, gamma_: float, rho: float, flavor: str = "W",
                  sigma: float = 0.0, linf: bool = False, return_profile: bool = False):
    """ρ-weighted ``W^gamma`` or ``C^gamma`` norm of a spectral path.

    Parameters
    ----------
    path : array (n_t+1, M) or SpaceTimeField
    t_grid : UniformGrid
    gamma_ : float
        Hölder order in (0, 1).
    rho : float
        Weight ``exp(-rho t)``, ``rho >= 1``.
    flavor : {"W", "C"}
        ``W``: integral seminorm; ``C``: sup of difference quotients.
    sigma : float
        Sobolev order of the space norm.
    linf : bool
        Add the sup of the synthesized values (``H^sigma_inf`` surrogate on a
        4x oversampled grid).
    """
    if rho < 1:
        raise ValidationError("rho must be >= 1")
    V = _as_coeffs(path)
    xg = unit_grid(8 * V.shape[1])
    base = _space_norms(V, sigma, linf, xg)
    D = pairwise_space_distances(V, sigma, linf, xg)
    t = t_grid.nodes
    if flavor == "W":
        semi = _w_seminorm(D, t_grid.h, gamma_)
    elif flavor == "C":
        lags = np.subtract.outer(t, t)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(lags > 0, D / np.abs(lags) ** gamma_, 0.0)
        semi = q.max(axis=1)
    else:
        raise ValidationError("flavor must be 'W' or 'C'")
    if not np.all(np.isfinite(semi)):
        raise NumericalError("divergent seminorm integral", {"flavor": flavor})
    prof = np.exp(-rho * t) * (base + semi)
    val = float(prof.max())
    return (val, prof) if return_profile else val


# --------------------------------------------------------------------------
# drift convolution
# --------------------------------------------------------------------------

def _expint_weights(lam, h):
    """Exact weights of ``int_0^h exp(-lam (h - s)) (linear in s) ds``.

    Returns ``(decay, w_left, w_right)`` for the values at the cell ends.
    """
    x = lam * h
    decay = np.exp(-x)
    phi0 = -np.expm1(-x) / lam
    w_left = (-np.expm1(-x) - x * decay) / (lam * lam * h)
    w_right = phi0 - w_left
    return decay, w_left, w_right


def drift_convolution(u, F, t_index: int, t_grid: UniformGrid, scheme: str = "trapezoid",
                      oversample: int = 2) -> SpectralVector:
    """``int_0^t T(t-s) F(u(s)) ds`` at ``t = t_grid.nodes[t_index]``.

    ``scheme="trapezoid"`` is the half-weight endpoint rule on the integrand
    ``s -> T(t-s) P[F(u(s))]``; ``scheme="exponential"`` integrates the
    semigroup exactly against the linear interpolant of ``P[F(u(s))]``.
    """
    U = _as_coeffs(u)
    M = U.shape[1]
    if F is None or t_index == 0:
        return SpectralVector(np.zeros(M))
    xg = unit_grid(2 * M * oversample)
    Fs = _apply_pointwise(F, U[: t_index + 1], xg)
    lam = eigenvalues(M)
    t = t_grid.nodes
    h = t_grid.h
    if scheme == "trapezoid":
        w = np.full(t_index + 1, h)
        w[0] = w[-1] = 0.5 * h
        E = np.exp(-np.outer(t[t_index] - t[: t_index + 1], lam))
        return SpectralVector(np.sum(w[:, None] * E * Fs, axis=0))
    if scheme == "exponential":
        return SpectralVector(_expint_path(Fs, lam, h)[-1])
    raise ValidationError(f"unknown scheme {scheme!r}")


def _expint_path(X, lam, h, Xright=None):
    """All-times exponential integrator for ``int T(t-s) X(s) ds``.

    ``X[j]`` holds the left-end values of cell ``j``; ``Xright[j]`` the
    right-end values (defaults to ``X[j+1]``).
    """
    n1 = X.shape[0] if Xright is None else X.shape[0] + 1
    decay, wl, wr = _expint_weights(lam, h)
    out = np.zeros((n1, lam.size))
    left = X if Xright is None else X
    right = X[1:] if Xright is None else Xright
    for j in range(n1 - 1):
        out[j + 1] = decay * out[j] + wl * left[j] + wr * right[j]
    return out


def drift_convolution_path(U, F, t_grid: UniformGrid, oversample: int = 2) -> np.ndarray:
    """``int_0^t T(t-s) F(u(s)) ds`` at every node (exponential integrator)."""
    M = U.shape[1]
    if F is None:
        return np.zeros_like(U)
    xg = unit_grid(2 * M * oversample)
    return _expint_path(_apply_pointwise(F, U, xg), eigenvalues(M), t_grid.h)


# --------------------------------------------------------------------------
# noise convolution: exact-in-time evaluation for all target times
# --------------------------------------------------------------------------

def stochastic_convolution_path(U, G, Z, t_grid: UniformGrid, oversample: int = 2) -> np.ndarray:
    """``int_0^t T(t-s) G(u(s)) dz(s)`` at every node.

    ``u`` and ``z`` enter through their piecewise-linear time interpolants;
    on each cell ``dz = (dz_j / h) ds`` and ``G(u(s))`` runs linearly
    between its end values. The semigroup is integrated exactly, so stiff
    modes are handled without step restrictions.
    """
    U = _as_coeffs(U)
    Z = _as_coeffs(Z)
    M = U.shape[1]
    if G is None:
        return np.zeros_like(U)
    xg = unit_grid(2 * M * oversample)
    Gg = G(sine_synthesize_array(U, xg))
    dz = np.diff(Z[:, :M], axis=0) / t_grid.h
    dzg = sine_synthesize_array(dz, xg)
    XL = sine_analyze_array(Gg[:-1] * dzg, M, check_boundary=False)
    XR = sine_analyze_array(Gg[1:] * dzg, M, check_boundary=False)
    return _expint_path(XL, eigenvalues(M), t_grid.h, XR)


# --------------------------------------------------------------------------
# noise convolution: fractional route at one target time
# --------------------------------------------------------------------------

def _upper_gamma_neg(a, x):
    """``Gamma(a, x)`` for ``-1 < a < 0`` and ``x > 0`` (upper incomplete)."""
    return (gammaincc(a + 1, x) * gamma(a + 1) - x ** a * np.exp(-x)) / a


def _marchaud_multiplier(lam, s, eta):
    """Marchaud derivative of ``s -> exp(-lam (t - s))``, divided by that function.

    Closed form ``lam^eta P(1-eta, lam s) + s^-eta exp(-lam s) / Gamma(1-eta)``
    (``P`` the regularised lower incomplete gamma function). It bundles the
    first two terms of the semigroup representation.
    """
    return lam ** eta * gammainc(1 - eta, lam * s) + s ** (-eta) * np.exp(-lam * s) / gamma(1 - eta)


def _moment_table(lam, eta, h, theta, n):
    """Exact moments of ``r^{-eta-1} e^{-lam r}`` and ``r^{-eta} e^{-lam r}``.

    Rows are the lag pieces ``[a_p, a_p + h]``, ``a_p = (theta + p) h``.
    """
    a = (theta + np.arange(n + 1, dtype=float)) * h
    X = np.multiply.outer(a, lam)
    Gneg = _upper_gamma_neg(-eta, X) * lam ** eta
    Gpos = gammaincc(1 - eta, X) * gamma(1 - eta) * lam ** (eta - 1)
    m0 = Gneg[:-1] - Gneg[1:]
    m1 = Gpos[:-1] - Gpos[1:]
    return a[:-1], m0, m1


def _cell_quadrature_weights(lam, eta, h, theta, kind):
    """Weights ``int_0^h W(s) l_q(s) ds`` for the Lagrange basis on ``theta``.

    ``kind="plain"``: ``W = exp(-lam (h - s))``;
    ``kind="kink"``: ``W = exp(-lam (h - s)) (h - s)^eta``.
    Evaluated by a composite Gauss rule graded towards ``s = h``.
    """
    q = theta.size
    edges = h * (1 - np.concatenate([[1.0], 0.8 ** np.arange(1, 90), [0.0]]))
    edges = np.unique(np.clip(edges, 0, h))
    xg, wg = np.polynomial.legendre.leggauss(12)
    a, b = edges[:-1], edges[1:]
    s = (0.5 * (b - a)[:, None] * (xg + 1) + a[:, None]).ravel()
    w = (0.5 * (b - a)[:, None] * wg).ravel()
    # Lagrange basis on theta*h evaluated at s
    nodes = theta * h
    L = np.ones((q, s.size))
    for i in range(q):
        for j in range(q):
            if i != j:
                L[i] *= (s - nodes[j]) / (nodes[i] - nodes[j])
    v = h - s
    E = np.exp(-np.multiply.outer(lam, v))
    if kind == "kink":
        E = E * v ** eta
    return (E * w) @ L.T  # (M, q)


def stochastic_convolution(u, G, z, cfg: SolverConfig, t_index: int, t_grid: UniformGrid = None,
                           eta: Optional[float] = None, q: int = 4) -> SpectralVector:
    """Noise convolution at one time through fractional derivatives.

    Evaluates ``-int_0^t D^eta_{0+}U(t;s) D^{1-eta}_{t-}z_t(s) ds`` with
    ``U(t;s) = T(t-s) G(u(s))``. The Marchaud derivative is expanded as
    ``T(t-s) [m(s) G(u(s)) + c_eta int_0^s r^{-eta-1} T(r) (G(u(s)) -
    G(u(s-r))) dr]``, where ``m`` (:func:`_marchaud_multiplier`) combines
    the fractional power and the tail integral of the semigroup
    representation. All time interpolation is piecewise linear.

    Quadrature: ``q`` Gauss points per cell, with the semigroup factor and
    the ``(t_{m+1}-s)^eta`` kinks of ``D^{1-eta}_{t-} z_t`` integrated
    exactly. The ``r``-integral uses exact incomplete-gamma moments.

    Parameters
    ----------
    u, z : arrays (n_t+1, M) of spectral coefficients
    G : callable or None
    cfg : SolverConfig
        ``cfg.eta`` (or ``eta``) is the splitting order in (0, 1).
    t_index : int
        Target node.
    """
    U = _as_coeffs(u)
    Zc = _as_coeffs(z)
    M = U.shape[1]
    if G is None or t_index == 0:
        return SpectralVector(np.zeros(M))
    tg = t_grid or cfg.t_grid
    e = eta if eta is not None else cfg.eta
    if e is None or not 0 < e < 1:
        raise ValidationError("the fractional route needs 0 < eta < 1")
    h = tg.h
    i = t_index
    lam = eigenvalues(M)
    xg = unit_grid(2 * M * cfg.oversample)
    Gg = G(sine_synthesize_array(U[: i + 1], xg))  # (i+1, N+1)
    zdot = np.diff(Zc[: i + 1, :M], axis=0) / h  # (i, M)
    J = zdot - np.vstack([zdot[1:], np.zeros((1, M))])  # jumps of zdot at t_{j+1}
    c_eta = e / gamma(1 - e)
    x, _ = np.polynomial.legendre.leggauss(q)
    theta = 0.5 * (x + 1)
    W_plain = _cell_quadrature_weights(lam, e, h, theta, "plain")
    W_kink = _cell_quadrature_weights(lam, e, h, theta, "kink")
    tables = [_moment_table(lam, e, h, th, i) for th in theta]
    gfac = 1.0 / gamma(1 + e)
    total = np.zeros(M)
    tnodes = tg.nodes
    for m in range(i):
        # Pi_k(v) = P[G_k v] on nodes k = 0..m+1, for the two directions v
        later = np.arange(m + 1, i)
        for qi, th in enumerate(theta):
            s = (m + th) * h
            v_kink = -gfac * J[m]
            if later.size:
                wts = (tnodes[later + 1] - s) ** e
                v_smooth = -gfac * (wts @ J[later])
            else:
                v_smooth = np.zeros(M)
            for v, Wt in ((v_kink, W_kink), (v_smooth, W_plain)):
                if not np.any(v):
                    continue
                Pi = _product(Gg[: m + 2], v, xg, M)  # (m+2, M)
                Pi_s = (1 - th) * Pi[m] + th * Pi[m + 1]
                slope = (Pi[m + 1] - Pi[m]) / h
                Y = _marchaud_multiplier(lam, s, e) * Pi_s
                # r in (0, theta h): G(s) - G(s - r) = r * slope
                B = lam ** (e - 1) * gammainc(1 - e, lam * th * h) * gamma(1 - e) * slope
                if m > 0:
                    a, m0, m1 = tables[qi]
                    p = np.arange(m)  # pieces behind s: k = m-1-p
                    k = m - 1 - p
                    dPi = Pi[k + 1] - Pi[k]
                    base = Pi_s - Pi[k] - ((a[p] + h) / h)[:, None] * dPi
                    B = B + np.sum(m0[p] * base + m1[p] * dPi / h, axis=0)
                Y = Y + c_eta * B
                total += np.exp(-lam * (tnodes[i] - tnodes[m + 1])) * Wt[:, qi] * Y
    return SpectralVector(-total)


# --------------------------------------------------------------------------
# semilinear heat solver
# --------------------------------------------------------------------------

@dataclass
class SolveResult:
    """Solution field plus the iteration transcript."""

    field: SpaceTimeField
    transcript: dict

    @property
    def coeffs(self) -> np.ndarray:
        return self.field.data


def _select_rho(diffs, t_grid, gam, sigma, rho0, auto):
    """Distances of successive iterates under the first acceptable weight.

    Starting at ``rho0`` the weight is quadrupled (at most four times) while
    the worst successive ratio exceeds the contraction target.
    """
    rho = rho0
    tried = []
    for ntry in range(RHO_MAX_QUADRUPLINGS + 1):
        d = [weighted_norm(D, t_grid, gam, rho, "W", sigma) for D in diffs]
        ratios = [d[k] / d[k - 1] for k in range(1, len(d)) if d[k - 1] > 0]
        factor = max(ratios) if ratios else 0.0
        tried.append({"rho": rho, "distances": d, "factor": factor})
        if factor <= RHO_CONTRACTION_TARGET or not auto or ntry == RHO_MAX_QUADRUPLINGS:
            break
        rho *= 4.0
    return rho, tried


def _check_finite(U, what):
    m = float(np.max(np.abs(U)))
    if not np.isfinite(m) or m > OVERFLOW_GUARD:
        raise NumericalError(f"{what} diverged (max |coeff| = {m:.3e})", {"max_abs": m})


def _picard(Tu0, image, t_grid, gam, sigma, cfg, extra):
    """Shared Picard loop; ``image(U)`` returns the integral terms."""
    U = Tu0.copy()
    diffs = []
    dist_hist = []
    converged = False
    start_t = time.perf_counter()
    for k in range(cfg.max_iter):
        Un = Tu0 + image(U)
        _check_finite(Un, "Picard iterate")
        D = Un - U
        diffs.append(D)
        d = weighted_norm(D, t_grid, gam, cfg.rho, "W", sigma)
        dist_hist.append(d)
        U = Un
        if d < cfg.tol:
            converged = True
            break
    rho, tried = _select_rho(diffs, t_grid, gam, sigma, cfg.rho, cfg.auto_rho)
    residual = weighted_norm(Tu0 + image(U) - U, t_grid, gam, rho, "W", sigma)
    transcript = {
        "iterations": len(dist_hist),
        "distances": dist_hist,
        "converged": converged,
        "rho": rho,
        "rho_search": [{"rho": r["rho"], "factor": r["factor"]} for r in tried],
        "contraction_factor": tried[-1]["factor"],
        "distances_at_rho": tried[-1]["distances"],
        "mild_residual": residual,
        "wall_time": time.perf_counter() - start_t,
    }
    transcript.update(extra)
    if not converged:
        raise NumericalError(f"Picard iteration did not reach tol={cfg.tol} in "
                             f"{cfg.max_iter} iterations", transcript)
    return U, transcript


def heat_flow_path(u0: SpectralVector, t_grid: UniformGrid) -> np.ndarray:
    """``T(t_i) u0`` for every node."""
    lam = eigenvalues(u0.M)
    return np.exp(-np.outer(t_grid.nodes, lam)) * u0.coeffs


def solve_semilinear_heat(u0: SpectralVector, spec: NonlinearitySpec, z, p: AdmissibilityParams,
                          cfg: SolverConfig) -> SolveResult:
    """Picard iteration for ``u = T u0 + int T F(u) ds + int T G(u) dz``.

    Parameters
    ----------
    u0 : SpectralVector with ``cfg.M`` modes
    spec : NonlinearitySpec
    z : array (n_t+1, >=M), spectral SpaceTimeField or None
        Driver on ``cfg.t_grid``; ``None`` only when ``spec.G`` is absent.
    p : AdmissibilityParams
        Checked before any computation unless ``cfg.override_admissibility``.
    cfg : SolverConfig

    Returns
    -------
    SolveResult
        Transcript with the admissibility report, distances of successive
        iterates, the selected weight ``rho`` and the contraction factor.
    """
    report = check_admissible(p)
    if not report.ok and not cfg.override_admissibility:
        raise ValidationError("admissibility check failed: " + "; ".join(
            c["condition"] for c in report.checks if not c["holds"]))
    if u0.M != cfg.M:
        raise ValidationError(f"u0 has {u0.M} modes, config expects {cfg.M}")
    tg = cfg.t_grid
    if z is None:
        if spec.G is not None:
            raise ValidationError("a noise coefficient G needs a driver z")
        Z = np.zeros((tg.n + 1, cfg.M))
    else:
        Z = _as_coeffs(z)
    if Z.shape[0] != tg.n + 1 or Z.shape[1] < cfg.M:
        raise ValidationError(f"driver needs shape ({tg.n + 1}, >= {cfg.M}), got {Z.shape}")
    Z = Z[:, : cfg.M]
    gam = p.gamma if p.gamma is not None else 0.5
    sigma = p.delta if p.delta is not None else 0.0
    eta = cfg.eta
    if eta is None and p.alpha is not None and p.delta is not None:
        try:
            eta = default_eta(p)
        except ValidationError:
            eta = None
    Tu0 = heat_flow_path(u0, tg)

    def image(U):
        out = drift_convolution_path(U, spec.F, tg, cfg.oversample)
        if spec.G is not None:
            out = out + stochastic_convolution_path(U, spec.G, Z, tg, cfg.oversample)
        return out

    init_order = 2 * gam + sigma + (p.epsilon or 0.0)
    extra = {
        "problem": "semilinear_heat",
        "params": p.as_dict(),
        "admissibility": report.as_dict(),
        "override_admissibility": bool(cfg.override_admissibility and not report.ok),
        "eta": eta,
        "M": cfg.M, "n_t": cfg.n_t, "t0": cfg.t0,
        "initial_norm_order": init_order,
        "initial_norm": float(sobolev_norm_array(u0.coeffs, init_order)),
        "start": "u_0(t) = T(t) u0",
        "stopping": "rho-weighted W^gamma distance of successive iterates < tol",
    }
    if spec.F is None and spec.G is None:
        fld = SpaceTimeField(tg, Tu0, "spectral", order=u0.order)
        extra.update({"iterations": 1, "distances": [0.0], "converged": True, "rho": cfg.rho,
                      "contraction_factor": 0.0, "mild_residual": 0.0})
        return SolveResult(fld, extra)
    U, tr = _picard(Tu0, image, tg, gam, sigma, cfg, extra)
    return SolveResult(SpaceTimeField(tg, U, "spectral", order=u0.order), tr)


# --------------------------------------------------------------------------
# transport solver
# --------------------------------------------------------------------------

def _gradient_of_field(zvals, xg_out):
    """``z'`` on ``xg_out`` from samples of ``z`` on [0, 1].

    The linear interpolant of the end values is removed; the remainder is
    sine-analyzed with all resolvable modes, differentiated term by term
    (a cosine series) and the constant slope added back.
    """
    zv = np.asarray(zvals, dtype=float)
    N = zv.size - 1
    x = np.linspace(0.0, 1.0, N + 1)
    slope = zv[-1] - zv[0]
    rem = zv - zv[0] - slope * x
    Mz = N // 2
    c = sine_analyze_array(rem, Mz, check_boundary=False)
    k = np.arange(1, Mz + 1)
    xo = xg_out.nodes
    return slope + np.cos(np.pi * np.outer(xo, k)) @ (c * np.pi * k)


def _gradient_of_coeffs(U, xg):
    """``d/dx`` of sine series rows, evaluated on ``xg`` (cosine series)."""
    M = U.shape[-1]
    k = np.arange(1, M + 1)
    return (U * (np.pi * k)) @ np.cos(np.pi * np.outer(xg.nodes, k)).T


@dataclass
class TransportProblem:
    """Transport-diffusion problem on (0,1) with a time-constant field ``z``.

    ``z_values`` are samples of ``z`` on a uniform grid of [0, 1], or
    ``z_grad`` may be given directly as a callable ``x -> z'(x)``.
    """

    u0: SpectralVector
    z_values: Optional[np.ndarray] = None
    z_grad: Optional[Callable] = None

    def grad_on(self, xg: UniformGrid, M: int) -> np.ndarray:
        if self.z_grad is not None:
            return np.asarray(self.z_grad(xg.nodes), dtype=float)
        if self.z_values is None:
            return np.zeros(xg.n + 1)
        zv = np.asarray(self.z_values, dtype=float)
        # truncate the field to M-mode resolution before differentiating
        N = zv.size - 1
        step = max(1, N // (2 * M))
        return _gradient_of_field(zv[::step], xg)


def transport_image_path(U, zgrad_grid, t_grid, xg):
    """``int_0^t T(t-r) P[u'(r) z'] dr`` at every node."""
    M = U.shape[1]
    prod = _gradient_of_coeffs(U, xg) * zgrad_grid
    X = sine_analyze_array(prod, M, check_boundary=False)
    return _expint_path(X, eigenvalues(M), t_grid.h)


def solve_transport(u0: SpectralVector, z, p: AdmissibilityParams, cfg: SolverConfig) -> SolveResult:
    """Picard iteration for ``u = T u0 + int_0^t T(t-r) (u'(r) z') dr``.

    ``z`` is a :class:`TransportProblem`, an array of samples of the field
    on [0, 1], or ``None`` (pure heat flow). Distances are measured in the
    ρ-weighted ``C^gamma`` norm over ``H^{1+delta}``.
    """
    if p.variant != "transport":
        raise ValidationError("solve_transport needs variant='transport'")
    report = check_admissible(p)
    if not report.ok and not cfg.override_admissibility:
        raise ValidationError("admissibility check failed: " + "; ".join(
            c["condition"] for c in report.checks if not c["holds"]))
    if u0.M != cfg.M:
        raise ValidationError(f"u0 has {u0.M} modes, config expects {cfg.M}")
    prob = z if isinstance(z, TransportProblem) else TransportProblem(u0, None if z is None else np.asarray(z))
    tg = cfg.t_grid
    xg = cfg.product_grid
    zg = prob.grad_on(xg, cfg.M)
    Tu0 = heat_flow_path(u0, tg)
    sigma = 1.0 + p.delta
    gam = p.gamma
    extra = {"problem": "transport", "params": p.as_dict(), "admissibility": report.as_dict(),
             "M": cfg.M, "n_t": cfg.n_t, "t0": cfg.t0,
             "initial_norm_order": 1 + p.delta + 2 * p.gamma,
             "initial_norm": float(sobolev_norm_array(u0.coeffs, 1 + p.delta + 2 * p.gamma))}
    if not np.any(zg):
        extra.update({"iterations": 1, "distances": [0.0], "converged": True, "rho": cfg.rho,
                      "contraction_factor": 0.0, "mild_residual": 0.0})
        return SolveResult(SpaceTimeField(tg, Tu0, "spectral", order=u0.order), extra)

    def image(U):
        return transport_image_path(U, zg, tg, xg)

    U, tr = _picard_c(Tu0, image, tg, gam, sigma, cfg, extra)
    return SolveResult(SpaceTimeField(tg, U, "spectral", order=u0.order), tr)


def _picard_c(Tu0, image, t_grid, gam, sigma, cfg, extra):
    """Picard loop measured in the C^gamma weighted norm."""
    U = Tu0.copy()
    diffs, dist = [], []
    converged = False
    for _ in range(cfg.max_iter):
        Un = Tu0 + image(U)
        _check_finite(Un, "Picard iterate")
        D = Un - U
        diffs.append(D)
        dist.append(weighted_norm(D, t_grid, gam, cfg.rho, "C", sigma))
        U = Un
        if dist[-1] < cfg.tol:
            converged = True
            break
    rho = cfg.rho
    tried = []
    for ntry in range(RHO_MAX_QUADRUPLINGS + 1):
        d = [weighted_norm(D, t_grid, gam, rho, "C", sigma) for D in diffs]
        ratios = [d[k] / d[k - 1] for k in range(1, len(d)) if d[k - 1] > 0]
        factor = max(ratios) if ratios else 0.0
        tried.append({"rho": rho, "factor": factor})
        if factor <= RHO_CONTRACTION_TARGET or not cfg.auto_rho or ntry == RHO_MAX_QUADRUPLINGS:
            break
        rho *= 4.0
    residual = weighted_norm(Tu0 + image(U) - U, t_grid, gam, rho, "C", sigma)
    tr = {"iterations": len(dist), "distances": dist, "converged": converged, "rho": rho,
          "rho_search": tried, "contraction_factor": tried[-1]["factor"],
          "mild_residual": residual}
    tr.update(extra)
    if not converged:
        raise NumericalError(f"Picard iteration did not reach tol={cfg.tol}", tr)
    return U, tr


# --------------------------------------------------------------------------
# contraction profile and ball invariance
# --------------------------------------------------------------------------

@dataclass
class IntegralOperator:
    """The integral part of a mild-solution map, with its norm settings.

    ``apply(U)`` returns the integral terms at every node; ``affine`` is the
    free term (``T(t) u0``); ``flavor``/``gamma``/``sigma`` define the norm.
    """

    apply: Callable
    t_grid: UniformGrid
    gamma: float
    sigma: float
    flavor: str = "W"
    affine: Optional[np.ndarray] = None

    def norm(self, V, rho):
        return weighted_norm(V, self.t_grid, self.gamma, rho, self.flavor, self.sigma)


def heat_operator(spec: NonlinearitySpec, z, p: AdmissibilityParams, cfg: SolverConfig,
                  u0: Optional[SpectralVector] = None) -> IntegralOperator:
    Z = _as_coeffs(z)[:, : cfg.M]
    tg = cfg.t_grid

    def apply(U):
        out = drift_convolution_path(U, spec.F, tg, cfg.oversample)
        if spec.G is not None:
            out = out + stochastic_convolution_path(U, spec.G, Z, tg, cfg.oversample)
        return out

    aff = None if u0 is None else heat_flow_path(u0, tg)
    return IntegralOperator(apply, tg, p.gamma, p.delta, "W", aff)


def transport_operator(prob: TransportProblem, p: AdmissibilityParams, cfg: SolverConfig) -> IntegralOperator:
    tg, xg = cfg.t_grid, cfg.product_grid
    zg = prob.grad_on(xg, cfg.M)
    return IntegralOperator(lambda U: transport_image_path(U, zg, tg, xg), tg, p.gamma,
                            1.0 + p.delta, "C", heat_flow_path(prob.u0, tg))


def probe_pair(base: np.ndarray, radius: float, seed: int, modes: int = 4):
    """Two probe fields ``u = base`` and ``v = base + radius * psi``.

    ``psi`` is constant in time, a random combination of the first
    ``modes`` sine modes with unit ``L2`` norm.
    """
    rng = np.random.default_rng(seed)
    M = base.shape[1]
    c = np.zeros(M)
    c[: min(modes, M)] = rng.standard_normal(min(modes, M)) / (1 + np.arange(min(modes, M)))
    c /= np.sqrt(0.5 * np.sum(c * c))
    return base, base + radius * c[None, :]


def contraction_profile(op: IntegralOperator, rho_list, probes):
    """Empirical contraction constants ``C(rho)``.

    Parameters
    ----------
    op : IntegralOperator
    rho_list : sequence of float
    probes : list of (U, V) pairs of spectral paths

    Returns
    -------
    dict
        ``"C"``: per rho the mean ratio over probe pairs (``nan`` when a pair
        has zero input distance); ``"ratios"``: all individual ratios.
    """
    ratios = []
    for U, V in probes:
        din = V - U
        dout = op.apply(V) - op.apply(U)
        row = []
        for rho in rho_list:
            a = op.norm(din, rho)
            row.append(float("nan") if a == 0 else op.norm(dout, rho) / a)
        ratios.append(row)
    R = np.array(ratios)
    with np.errstate(invalid="ignore"):
        C = [float(np.nan) if np.all(np.isnan(R[:, j])) else float(np.nanmean(R[:, j]))
             for j in range(len(rho_list))]
    return {"rho": list(rho_list), "C": C, "ratios": R.tolist()}


def ball_invariance(op: IntegralOperator, rho: float, radius: float, probes) -> dict:
    """Check ``||T u0 + I(u)||_rho <= radius`` for probes inside the ball."""
    if op.affine is None:
        raise ValidationError("ball invariance needs the free term T(t) u0")
    out = []
    for V in probes:
        nin = op.norm(V, rho)
        if nin > radius * (1 + 1e-12):
            raise ValidationError("probe lies outside the ball")
        out.append(op.norm(op.affine + op.apply(V), rho))
    return {"rho": rho, "radius": radius, "image_norms": out,
            "invariant": bool(max(out) <= radius)}


def refinement_table(solve: Callable, levels, norm: Callable):
    """Run ``solve(level)`` for each level and tabulate ``norm`` of the result."""
    rows = []
    prev = None
    for lv in levels:
        res = solve(lv)
        val = norm(res)
        rows.append({"level": lv, "norm": val,
                     "rel_change": None if prev is None else abs(val - prev) / abs(prev)})
        prev = val
    return rows
