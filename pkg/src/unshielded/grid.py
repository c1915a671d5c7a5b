"""Periodic computational box, spectral derivatives and discrete norms."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError, ReportIOError, ShapeError

MAGIC = b"NSGF"
# magic, n, N, L, component count, flags, pad
_HEADER = struct.Struct("<4siidii4x")
assert _HEADER.size == 32


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on ``[-L, L)^n``.

    Parameters
    ----------
    n : int
        Spatial dimension, 1 to 3.
    N : int
        Points per axis; even and at least 16.
    L : float
        Box half-width.
    offset : bool
        Shift all points by ``h/2`` so the origin is never a sample.
    """

    n: int
    N: int
    L: float = 1.0
    offset: bool = True

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ConfigurationError(f"dimension must be 1, 2 or 3, got {self.n}", path="grid.n")
        if self.N < 16 or self.N % 2:
            raise ConfigurationError(f"N must be even and >= 16, got {self.N}", path="grid.N")
        if not self.L > 0:
            raise ConfigurationError(f"L must be positive, got {self.L}", path="grid.L")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.n

    @property
    def cell_volume(self) -> float:
        return self.h ** self.n

    @cached_property
    def axis(self) -> np.ndarray:
        x = -self.L + self.h * np.arange(self.N)
        if self.offset:
            x = x + 0.5 * self.h
        return x

    @cached_property
    def coords(self) -> tuple:
        """Coordinate arrays, one per axis, broadcast to the full grid."""
        return tuple(np.meshgrid(*([self.axis] * self.n), indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c ** 2 for c in self.coords))

    @cached_property
    def wavenumbers(self) -> tuple:
        """Angular wavenumbers per axis, broadcast for full complex FFTs."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.N, d=self.h)
        return tuple(np.meshgrid(*([k] * self.n), indexing="ij"))

    @cached_property
    def rwavenumbers(self) -> tuple:
        """Angular wavenumbers for ``rfftn`` layouts (last axis halved)."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.N, d=self.h)
        kr = 2.0 * np.pi * np.fft.rfftfreq(self.N, d=self.h)
        axes = [k] * (self.n - 1) + [kr]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def rk2(self) -> np.ndarray:
        return sum(k ** 2 for k in self.rwavenumbers)

    def displacement_grid(self) -> "GridSpec":
        """The lattice of point differences, which always contains 0."""
        return GridSpec(self.n, self.N, self.L, offset=False)

    def same_lattice(self, other: "GridSpec") -> bool:
        return (self.n, self.N, self.L) == (other.n, other.N, other.L)


def make_grid(n: int, N: int, L: float = 1.0, offset_origin: bool = True) -> GridSpec:
    return GridSpec(int(n), int(N), float(L), bool(offset_origin))


@dataclass(frozen=True)
class TimeGrid:
    """``M`` steps of size ``T/M`` on ``[0, T]``; ``M + 1`` stored slices."""

    T: float
    M: int

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigurationError(f"T must be positive, got {self.T}", path="time.T")
        if self.M < 2:
            raise ConfigurationError(f"M must be >= 2, got {self.M}", path="time.M")

    @property
    def dt(self) -> float:
        return self.T / self.M

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.M + 1)


@dataclass(frozen=True)
class ScalarGridField:
    grid: GridSpec
    values: np.ndarray
    blowup: bool = field(default=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ShapeError(f"field shape {values.shape} does not match grid {self.grid.shape}")
        if not self.blowup and not np.all(np.isfinite(values)):
            raise ValueError("non-finite values in a field not flagged as blow-up")
        object.__setattr__(self, "values", values)

    def __add__(self, other):
        return ScalarGridField(self.grid, self.values + _values(other, self.grid))

    def __sub__(self, other):
        return ScalarGridField(self.grid, self.values - _values(other, self.grid))

    def __mul__(self, a):
        return ScalarGridField(self.grid, self.values * a)

    __rmul__ = __mul__


def _values(other, grid):
    if isinstance(other, ScalarGridField):
        if not other.grid.same_lattice(grid):
            raise ShapeError("fields live on different grids")
        return other.values
    return other


def _spatial_axes(grid, values):
    lead = np.ndim(values) - grid.n
    if lead < 0 or np.shape(values)[lead:] != grid.shape:
        raise ShapeError(f"trailing shape {np.shape(values)} does not match grid {grid.shape}")
    return lead, tuple(range(lead, lead + grid.n))


def spectral_derivative(values: np.ndarray, grid: GridSpec, axis: int, order: int = 1) -> np.ndarray:
    """Fourier derivative along a spatial axis of an array whose trailing
    dimensions are the grid.  Leading dimensions are batched."""
    lead, axes = _spatial_axes(grid, values)
    if not 0 <= axis < grid.n:
        raise ValueError(f"axis {axis} out of range for n={grid.n}")
    fhat = np.fft.rfftn(values, axes=axes)
    k = grid.rwavenumbers[axis].copy()
    if order % 2 == 1:
        # Nyquist mode carries no odd-derivative information
        nyq = np.isclose(np.abs(k), np.pi / grid.h)
        k[nyq] = 0.0
    fhat = fhat * (1j * k) ** order
    return np.fft.irfftn(fhat, s=grid.shape, axes=axes)


def spatial_derivative(f: ScalarGridField, axis: int) -> ScalarGridField:
    return ScalarGridField(f.grid, spectral_derivative(f.values, f.grid, axis))


def fd4_derivative(f: ScalarGridField, axis: int) -> ScalarGridField:
    """Periodic fourth-order central difference; cross-check backend."""
    v = f.values
    h = f.grid.h
    d = (-np.roll(v, -2, axis) + 8 * np.roll(v, -1, axis) - 8 * np.roll(v, 1, axis) + np.roll(v, 2, axis)) / (12 * h)
    return ScalarGridField(f.grid, d)


def _fourier_coefficients(f: ScalarGridField) -> np.ndarray:
    g = f.grid
    # scaled so that sum |c_k|^2 equals the discrete L2 norm squared
    return np.fft.fftn(f.values) * np.sqrt(g.cell_volume) / np.sqrt(g.N ** g.n)


def sobolev_norm(f: ScalarGridField, s: float) -> float:
    """Discrete ``H^s`` norm ``(sum_k (1+|k|^2)^s |c_k|^2)^(1/2)``.

    The coefficients are normalised so ``s = 0`` reproduces the discrete
    ``L^2`` norm ``(h^n sum |f|^2)^(1/2)`` (Parseval).
    """
    if s < 0:
        raise ValueError("s must be non-negative")
    c = _fourier_coefficients(f)
    k2 = sum(k ** 2 for k in f.grid.wavenumbers)
    return float(np.sqrt(np.sum((1.0 + k2) ** s * np.abs(c) ** 2)))


def l2_norm(f: ScalarGridField) -> float:
    return float(np.sqrt(f.grid.cell_volume * np.sum(f.values ** 2)))


def holder_norm_proxy(f: ScalarGridField, delta: float, stencil: int = 4) -> float:
    """Discrete stand-in for ``|f|_{1,delta}``.

    ``sup|f| + sup|grad f| + max |grad f(z) - grad f(y)| / |z - y|^delta``
    with the quotient taken over axis-aligned pairs up to ``stencil`` points
    apart.  Gradients are second-order differences without wrap-around, so
    a plain ramp has an exactly constant gradient.
    """
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    grid = f.grid
    v = f.values
    grads = np.gradient(v, grid.h, edge_order=2) if grid.n > 1 else [np.gradient(v, grid.h, edge_order=2)]
    grads = np.stack(grads)
    gnorm = np.sqrt(np.sum(grads ** 2, axis=0))
    quotient = 0.0
    for ax in range(grid.n):
        for o in range(1, stencil + 1):
            a = np.take(grads, np.arange(o, grid.N), axis=ax + 1)
            b = np.take(grads, np.arange(0, grid.N - o), axis=ax + 1)
            diff = np.sqrt(np.sum((a - b) ** 2, axis=0))
            quotient = max(quotient, float(diff.max()) / (o * grid.h) ** delta)
    return float(np.abs(v).max() + gnorm.max() + quotient)


# ---------------------------------------------------------------- raw dumps


def write_raw(path, grid: GridSpec, components: np.ndarray) -> Path:
    """Write ``components`` (shape ``(K, *grid.shape)`` or ``grid.shape``)."""
    path = Path(path)
    arr = np.asarray(components, dtype="<f8")
    if arr.shape == grid.shape:
        arr = arr[None]
    arr = arr.reshape((-1,) + grid.shape)
    header = _HEADER.pack(MAGIC, grid.n, grid.N, grid.L, arr.shape[0], int(grid.offset))
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(arr).tobytes(order="C"))
    except OSError as exc:
        raise ReportIOError(str(exc), path=path) from exc
    return path


def read_raw(path):
    """Return ``(grid, components)`` from a raw dump."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise ReportIOError(str(exc), path=path) from exc
    magic, n, N, L, count, flags = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ReportIOError("not a grid dump (bad magic)", path=path)
    grid = GridSpec(n, N, L, offset=bool(flags & 1))
    data = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
    return grid, data.reshape((count,) + grid.shape).copy()


def write_csv(path, grid: GridSpec, components: np.ndarray, names=None) -> Path:
    if grid.n > 2:
        raise ValueError("CSV export is limited to n <= 2")
    arr = np.asarray(components, dtype=float)
    if arr.shape == grid.shape:
        arr = arr[None]
    arr = arr.reshape((-1,) + grid.shape)
    names = list(names) if names is not None else [f"c{i}" for i in range(arr.shape[0])]
    coords = [c.ravel() for c in grid.coords]
    cols = [a.ravel() for a in arr]
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(grid.n)] + names)
            for row in zip(*coords, *cols):
                w.writerow([repr(float(v)) for v in row])
    except OSError as exc:
        raise ReportIOError(str(exc), path=path) from exc
    return path
