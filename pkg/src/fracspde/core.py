"""Grids, sampled paths, spectral vectors and sine transforms on (0,1).

The spatial representation throughout the package is the Dirichlet sine
basis ``sin(k*pi*x)``, ``k = 1..M``, whose eigenvalues under ``-d^2/dx^2``
are ``lambda_k = (k*pi)**2``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import fft as sfft


class FracSpdeError(Exception):
    """Base class for all package errors."""


class ValidationError(FracSpdeError, ValueError):
    """Input violates a documented precondition."""


class ResolutionError(ValidationError):
    """Grid too coarse for the requested number of modes."""


class NumericalError(FracSpdeError, RuntimeError):
    """A computation failed to converge or overflowed.

    Parameters
    ----------
    message : str
        Human readable explanation.
    diagnostics : dict, optional
        Machine readable details (delta histories, offending factor, ...).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


@dataclass(frozen=True)
class UniformGrid:
    """Uniform grid with ``n`` subintervals on ``[a, b]``."""

    a: float
    b: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)) or not self.a < self.b:
            raise ValidationError(f"grid needs a < b, got a={self.a}, b={self.b}")
        if int(self.n) != self.n or self.n < 2:
            raise ValidationError(f"grid needs n >= 2 subintervals, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n

    @property
    def nodes(self) -> np.ndarray:
        return self.a + self.h * np.arange(self.n + 1)

    def __len__(self):
        return self.n + 1

    def refine(self, factor: int = 2) -> "UniformGrid":
        return UniformGrid(self.a, self.b, self.n * factor)

    def as_dict(self):
        return {"a": self.a, "b": self.b, "n": self.n}


def unit_grid(n: int) -> UniformGrid:
    """Uniform spatial grid on [0, 1] with ``n`` subintervals."""
    return UniformGrid(0.0, 1.0, n)


@dataclass(frozen=True)
class SampledPath:
    """A real function sampled at the nodes of a uniform grid.

    ``boundary_limits`` holds the one-sided limits ``(f(a+), f(b-))``; when
    absent the first and last samples stand in for them.
    """

    grid: UniformGrid
    values: np.ndarray
    boundary_limits: Optional[tuple] = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size != self.grid.n + 1:
            raise ValidationError(
                f"path needs {self.grid.n + 1} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("path values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.boundary_limits is not None:
            lo, hi = self.boundary_limits
            object.__setattr__(self, "boundary_limits", (float(lo), float(hi)))

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def left_limit(self) -> float:
        return self.values[0] if self.boundary_limits is None else self.boundary_limits[0]

    @property
    def right_limit(self) -> float:
        return self.values[-1] if self.boundary_limits is None else self.boundary_limits[1]

    def reversed(self) -> "SampledPath":
        """Time reversal ``t -> a + b - t`` on the same grid."""
        lim = None
        if self.boundary_limits is not None:
            lim = (self.boundary_limits[1], self.boundary_limits[0])
        return SampledPath(self.grid, self.values[::-1], lim)

    def with_values(self, values, boundary_limits=None) -> "SampledPath":
        return SampledPath(self.grid, values, boundary_limits)

    @classmethod
    def from_function(cls, fn, grid: UniformGrid) -> "SampledPath":
        return cls(grid, np.asarray(fn(grid.nodes), dtype=float))


@dataclass(frozen=True)
class SpectralVector:
    """Coefficients of ``sum_k c_k sin(k pi x)`` with a Sobolev order tag."""

    coeffs: np.ndarray
    order: float = 0.0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size < 1:
            raise ValidationError("spectral vector needs a 1-d array with M >= 1")
        if not np.all(np.isfinite(c)):
            raise ValidationError("spectral coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "order", float(self.order))

    @property
    def M(self) -> int:
        return self.coeffs.size

    def with_coeffs(self, coeffs, order=None) -> "SpectralVector":
        return SpectralVector(coeffs, self.order if order is None else order)

    def __add__(self, other):
        return self.with_coeffs(self.coeffs + _coeffs_of(other))

    def __sub__(self, other):
        return self.with_coeffs(self.coeffs - _coeffs_of(other))

    def __mul__(self, scalar):
        return self.with_coeffs(self.coeffs * float(scalar))

    __rmul__ = __mul__

    @classmethod
    def mode(cls, k: int, M: int, amplitude: float = 1.0, order: float = 0.0):
        c = np.zeros(M)
        c[k - 1] = amplitude
        return cls(c, order)


def _coeffs_of(obj):
    return obj.coeffs if isinstance(obj, SpectralVector) else np.asarray(obj, dtype=float)


@dataclass(frozen=True)
class SpaceTimeField:
    """Time-indexed family of spatial slices.

    ``data`` has shape ``(n_t + 1, M)`` for the spectral representation and
    ``(n_t + 1, N + 1)`` (values on ``x_grid`` nodes) for the grid one.
    """

    t_grid: UniformGrid
    data: np.ndarray
    representation: str = "spectral"
    x_grid: Optional[UniformGrid] = None
    order: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        d = np.array(self.data, dtype=float)
        if d.ndim != 2 or d.shape[0] != self.t_grid.n + 1:
            raise ValidationError(
                f"field needs one slice per time node ({self.t_grid.n + 1}), got {d.shape}")
        if self.representation not in ("spectral", "grid"):
            raise ValidationError(f"unknown representation {self.representation!r}")
        if self.representation == "grid":
            if self.x_grid is None or d.shape[1] != self.x_grid.n + 1:
                raise ValidationError("grid representation needs a matching x_grid")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def slices(self):
        return list(self.data)

    def slice(self, i: int) -> SpectralVector:
        if self.representation != "spectral":
            raise ValidationError("slice() returns spectral vectors; field is on a grid")
        return SpectralVector(self.data[i], self.order)

    def to_spectral(self, M: int) -> "SpaceTimeField":
        if self.representation == "spectral":
            return self
        return SpaceTimeField(self.t_grid, sine_analyze_array(self.data, M),
                              "spectral", None, self.order, dict(self.meta))

    def to_grid(self, x_grid: UniformGrid) -> "SpaceTimeField":
        if self.representation == "grid":
            return self
        vals = sine_synthesize_array(self.data, x_grid)
        return SpaceTimeField(self.t_grid, vals, "grid", x_grid, self.order, dict(self.meta))


# --------------------------------------------------------------------------
# sine transforms
# --------------------------------------------------------------------------

def _check_resolution(N: int, M: int):
    if M < 1:
        raise ValidationError(f"need M >= 1 modes, got {M}")
    if N < 2 * M:
        raise ResolutionError(
            f"spatial grid with {N} subintervals cannot resolve {M} modes (need >= {2 * M})")


def sine_analyze_array(values, M: int, check_boundary: bool = True) -> np.ndarray:
    """First ``M`` sine coefficients of samples on a uniform grid of [0, 1].

    Works along the last axis. The samples include both endpoints, so the
    last axis has length ``N + 1``. The type-I discrete sine transform of the
    interior samples gives ``c_k = (2/N) sum_j y_j sin(k pi j / N)``, which is
    exact for band-limited input with fewer than ``N`` modes.
    """
    y = np.asarray(values, dtype=float)
    N = y.shape[-1] - 1
    _check_resolution(N, M)
    if check_boundary:
        scale = max(1.0, float(np.max(np.abs(y))) if y.size else 1.0)
        ends = np.maximum(np.abs(y[..., 0]), np.abs(y[..., -1]))
        if np.any(ends > 1e-9 * scale):
            raise ValidationError("values must vanish at x=0 and x=1 (Dirichlet)")
    c = sfft.dst(y[..., 1:-1], type=1, axis=-1) / N
    return c[..., :M]


def sine_analyze(values, M: int) -> SpectralVector:
    """Sine coefficients of a grid function vanishing at both endpoints.

    Parameters
    ----------
    values : array_like
        Samples at ``x_j = j/N``, ``j = 0..N``.
    M : int
        Number of modes; requires ``N >= 2M``.

    Returns
    -------
    SpectralVector
        Order tag 0.

    Examples
    --------
    >>> x = unit_grid(256).nodes
    >>> sine_analyze(np.sin(np.pi * x), 4).coeffs.round(12)
    array([ 1.,  0., -0.,  0.])
    """
    return SpectralVector(sine_analyze_array(values, M), 0.0)


def sine_synthesize_array(coeffs, x) -> np.ndarray:
    """Evaluate ``sum_k c_k sin(k pi x)`` along the last axis of ``coeffs``.

    ``x`` may be a :class:`UniformGrid` on [0, 1] (fast transform path) or an
    array of points (direct summation).
    """
    c = np.asarray(coeffs, dtype=float)
    M = c.shape[-1]
    if isinstance(x, UniformGrid):
        if x.a != 0.0 or x.b != 1.0:
            raise ValidationError("synthesis grid must span [0, 1]")
        N = x.n
        if N - 1 >= M:
            pad = np.zeros(c.shape[:-1] + (N - 1,))
            pad[..., :M] = c
            inner = sfft.dst(pad, type=1, axis=-1) / 2.0
            out = np.zeros(c.shape[:-1] + (N + 1,))
            out[..., 1:-1] = inner
            return out
        x = x.nodes
    x = np.asarray(x, dtype=float)
    k = np.arange(1, M + 1)
    basis = np.sin(np.pi * np.multiply.outer(x, k))
    return c @ basis.T


def sine_synthesize(v: SpectralVector, x) -> np.ndarray:
    """Pointwise values of a spectral vector on a grid or on points."""
    return sine_synthesize_array(v.coeffs, x)


def eigenvalues(M: int) -> np.ndarray:
    """Dirichlet eigenvalues ``(k pi)^2`` for ``k = 1..M``."""
    k = np.arange(1, M + 1, dtype=float)
    return (np.pi * k) ** 2


# --------------------------------------------------------------------------
# seeds and CSV output
# --------------------------------------------------------------------------

def child_seed(seed: int, index: int) -> int:
    """Derive the 64-bit seed of replicate ``index`` from a root seed.

    Rule: the first 64-bit word of ``numpy.random.SeedSequence(seed,
    spawn_key=(index,))``, i.e. numpy's documented hash-based spawning.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_path_csv(path, sp: SampledPath):
    """Write ``t,value`` rows with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "value"])
        for t, v in zip(sp.t, sp.values):
            w.writerow([_fmt(t), _fmt(v)])


def read_path_csv(path) -> SampledPath:
    """Read a ``t,value`` file written by :func:`write_path_csv`."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t, v = data[:, 0], data[:, 1]
    return SampledPath(UniformGrid(float(t[0]), float(t[-1]), len(t) - 1), v)


def write_field_csv(path, fld: SpaceTimeField):
    """Write ``t,x,value`` (grid) or ``t,k,coeff`` (spectral) rows."""
    t = fld.t_grid.nodes
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if fld.representation == "grid":
            x = fld.x_grid.nodes
            w.writerow(["t", "x", "value"])
            for i, ti in enumerate(t):
                for xj, v in zip(x, fld.data[i]):
                    w.writerow([_fmt(ti), _fmt(xj), _fmt(v)])
        else:
            w.writerow(["t", "k", "coeff"])
            for i, ti in enumerate(t):
                for k, v in enumerate(fld.data[i], start=1):
                    w.writerow([_fmt(ti), k, _fmt(v)])


def as_float_array(x: Sequence[float]) -> np.ndarray:
    return np.asarray(x, dtype=float)
