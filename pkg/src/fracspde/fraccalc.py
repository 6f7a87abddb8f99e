"""Riemann-Liouville integrals and Weyl-Marchaud derivatives of sampled paths.

Both operators are product-integration rules: the singular kernels are
integrated exactly against the piecewise-linear interpolant of the data, and
every discrete convolution is evaluated by FFT.

Conventions (real arithmetic only)::

    I^eta_{a+} phi(t) = 1/Gamma(eta) int_a^t phi(s) (t-s)^(eta-1) ds
    D^eta_{a+} f(t)   = 1/Gamma(1-eta) [f(t)/(t-a)^eta
                        + eta int_a^t (f(t)-f(s)) (t-s)^(-eta-1) ds]

Right-sided operators are the left ones conjugated by time reversal, which
makes ``D^1_{b-} = -d/dt``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import gamma

from .core import NumericalError, SampledPath, ValidationError

OVERFLOW_GUARD = 1e12


@dataclass(frozen=True)
class FracOrder:
    """Fractional order ``eta`` in [0, 1]."""

    eta: float

    def __post_init__(self):
        e = float(self.eta)
        if not (0.0 <= e <= 1.0):
            raise ValidationError(f"fractional order must lie in [0, 1], got {e}")
        object.__setattr__(self, "eta", e)

    @property
    def c_eta(self) -> float:
        """The constant ``eta / Gamma(1 - eta)`` (zero at eta = 1)."""
        if self.eta == 1.0:
            return 0.0
        return self.eta / gamma(1.0 - self.eta)


def _eta(eta) -> float:
    return eta.eta if isinstance(eta, FracOrder) else FracOrder(eta).eta


def _guard(values, what):
    m = float(np.max(np.abs(values))) if values.size else 0.0
    if not np.isfinite(m) or m > OVERFLOW_GUARD:
        raise NumericalError(
            f"{what}: magnitude {m:.3e} exceeds overflow guard {OVERFLOW_GUARD:.0e}; "
            "the fractional derivative does not converge for this path",
            {"factor": what, "max_abs": m})


# --------------------------------------------------------------------------
# Riemann-Liouville integrals
# --------------------------------------------------------------------------

def _rl_left_values(phi: np.ndarray, h: float, eta: float) -> np.ndarray:
    n = phi.size - 1
    out = np.zeros(n + 1)
    if n == 0:
        return out
    e1 = eta + 1.0
    m = np.arange(n + 1, dtype=float)
    # weights of the product trapezoid rule, by distance i-j between nodes
    w = np.empty(n + 1)
    w[0] = 1.0
    w[1:] = (m[1:] + 1) ** e1 - 2 * m[1:] ** e1 + (m[1:] - 1) ** e1
    body = phi.copy()
    body[0] = 0.0
    conv = fftconvolve(body, w)[: n + 1]
    i = m[1:]
    out[1:] = conv[1:] + ((i - 1) ** e1 - (i - 1 - eta) * i ** eta) * phi[0]
    return out * h ** eta / gamma(eta + 2.0)


def riemann_liouville_left(phi: SampledPath, eta) -> SampledPath:
    """Left Riemann-Liouville integral ``I^eta_{a+} phi`` at the grid nodes.

    Parameters
    ----------
    phi : SampledPath
    eta : float or FracOrder
        Order in (0, 1].

    Returns
    -------
    SampledPath
        Exact for piecewise-linear ``phi``; second order for smooth data.
    """
    e = _eta(eta)
    if e == 0.0:
        raise ValidationError("integral of order 0 is not defined here; use eta in (0, 1]")
    vals = _rl_left_values(phi.values, phi.grid.h, e)
    return SampledPath(phi.grid, vals)


def riemann_liouville_right(phi: SampledPath, eta) -> SampledPath:
    """Right Riemann-Liouville integral ``I^eta_{b-} phi`` (reflected left rule)."""
    return riemann_liouville_left(phi.reversed(), eta).reversed()


# --------------------------------------------------------------------------
# Weyl-Marchaud derivatives
# --------------------------------------------------------------------------

def marchaud_piecewise_linear(f: np.ndarray, h: float, eta: float, theta: float) -> np.ndarray:
    """Left Marchaud derivative of the piecewise-linear interpolant of ``f``.

    Evaluated at the points ``t_m + theta*h`` for cells ``m = 0..n-1``;
    ``theta = 1`` returns the values at nodes ``1..n``. The formula comes
    from integrating the Marchaud integral by parts cell by cell:
    ``D f(t) = [f_0 t^-eta + 1/(1-eta) sum_j d_j K(t)] / Gamma(1-eta)``
    with ``d_j`` the increments and ``K`` the exact kernel moments.
    """
    f = np.asarray(f, dtype=float)
    n = f.size - 1
    d = np.diff(f)
    if eta == 0.0:
        return f[:-1] + theta * d
    if eta == 1.0:
        return d / h
    p = np.arange(n, dtype=float)
    a = 1.0 - eta
    K = np.empty(n)
    K[0] = theta ** a
    K[1:] = (p[1:] + theta) ** a - (p[1:] - 1.0 + theta) ** a
    conv = fftconvolve(d, K)[:n]
    out = conv / a
    if f[0] != 0.0:
        out = out + f[0] * (p + theta) ** (-eta)
    return out * h ** (-eta) / gamma(a)


def _start_exponent(f: np.ndarray, eta: float) -> float:
    """Power ``nu`` in ``f(t) - f(0) ~ kappa t^nu`` fitted on the first nodes."""
    d1 = f[1] - f[0]
    d2 = f[2] - f[0]
    if d1 == 0.0 or d2 / d1 <= 0.0:
        return 1.0
    return float(np.clip(np.log2(d2 / d1), eta, 1.0))


def weyl_marchaud_left(f: SampledPath, eta, start: str = "auto", return_info: bool = False):
    """Left Weyl-Marchaud derivative ``D^eta_{a+} f`` at the grid nodes.

    Parameters
    ----------
    f : SampledPath
    eta : float or FracOrder
        Order in [0, 1]. ``eta = 0`` returns ``f`` unchanged and ``eta = 1``
        returns ``df/dt`` by second-order differences.
    start : {"auto", "singular", "linear"}
        Treatment of the first cell. Paths produced by a fractional integral
        behave like ``t^eta`` near ``a``, which a piecewise-linear rule misses
        at the first nodes. ``"singular"`` removes ``kappa*t^eta`` and
        differentiates it exactly; ``"auto"`` fits the start exponent from the
        first three samples (so linear starts stay exact); ``"linear"`` uses
        the plain rule.
    return_info : bool
        Also return a dict with the first-node handling.

    Notes
    -----
    The value at ``t_0 = a`` is 0 for regulated input (``f(a+) = 0``). For
    other input the exact value is infinite; the first interior value is
    repeated there and the dict reports it.
    """
    e = _eta(eta)
    v = f.values
    h = f.grid.h
    info = {"eta": e, "start": start}
    if e == 0.0:
        out = v.copy()
    elif e == 1.0:
        out = np.gradient(v, h, edge_order=2)
    else:
        out = np.zeros_like(v)
        if start == "linear" or v.size < 4:
            nu = 1.0
        elif start == "singular":
            nu = e
        elif start == "auto":
            nu = _start_exponent(v, e)
        else:
            raise ValidationError(f"unknown start treatment {start!r}")
        t = f.t - f.grid.a
        kappa = 0.0 if nu == 1.0 else (v[1] - v[0]) / h ** nu
        rest = v - kappa * t ** nu if kappa else v
        out[1:] = marchaud_piecewise_linear(rest, h, e, 1.0)
        if kappa:
            out[1:] += kappa * gamma(1 + nu) / gamma(1 + nu - e) * t[1:] ** (nu - e)
        info["start_exponent"] = nu
        regulated = bool(v[0] == 0.0)
        info["regulated"] = regulated
        info["first_node"] = 0.0 if regulated else float("inf")
        out[0] = 0.0 if regulated else out[1]
    _guard(out, "weyl_marchaud_left")
    res = SampledPath(f.grid, out)
    return (res, info) if return_info else res


def weyl_marchaud_right(f: SampledPath, eta, start: str = "auto", return_info: bool = False):
    """Right Weyl-Marchaud derivative ``D^eta_{b-} f`` (reflected left rule).

    With the real convention used here ``D^1_{b-} f = -df/dt``.
    """
    res = weyl_marchaud_left(f.reversed(), eta, start=start, return_info=return_info)
    if return_info:
        return res[0].reversed(), res[1]
    return res.reversed()


def regulate(f: SampledPath, side: str) -> SampledPath:
    """Subtract the one-sided boundary limit: ``f - f(a+)`` or ``f - f(b-)``."""
    if side == "left":
        c = f.left_limit
        lim = (0.0, f.right_limit - c)
    elif side == "right":
        c = f.right_limit
        lim = (f.left_limit - c, 0.0)
    else:
        raise ValidationError(f"side must be 'left' or 'right', got {side!r}")
    return SampledPath(f.grid, f.values - c, lim)
