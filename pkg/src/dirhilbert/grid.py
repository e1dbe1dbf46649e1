"""Discrete torus grids, grid functions, transforms and norms.

Functions live on the unit torus [0,1)^n sampled at the G^n cell centres
x = (i + 1/2)/G, with G a power of two.  Frequencies are the integer
lattice points xi in [-G/2, G/2)^n.  The forward transform is the Riemann
sum discretisation of the continuum integral against e(-xi . x),

    F(xi) = G^{-n} sum_x f(x) e(-xi . x),        e(t) = exp(2 pi i t),

so that Parseval reads  sum_x |f(x)|^2 / G^n = sum_xi |F(xi)|^2  and the
lattice character e(pbar . x) has a single unit spike at xi = pbar.

Because samples sit at half-integer multiples of 1/G, the spectrum is
anti-periodic under xi -> xi + G along any axis.  All operators in this
package keep their spectral content inside the centred lattice, so the
wrap sign never enters; it only matters if you shift a spectrum past the
Nyquist row by hand.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ResourceGuardError

DEFAULT_MEMORY_BUDGET = 2 * 1024**3  # bytes for a single complex array


class TorusGrid:
    """An n-dimensional discrete torus with G cells per axis.

    Parameters
    ----------
    n : int
        Dimension, n >= 1.
    size : int
        Cells per axis; a power of two, at least 4.
    memory_budget : int
        Maximum bytes a single complex128 array over the grid may take.
        Exceeding it raises ResourceGuardError instead of thrashing.
    """

    def __init__(self, n: int, size: int, memory_budget: int = DEFAULT_MEMORY_BUDGET):
        if n < 1:
            raise ValueError(f"dimension must be >= 1, got {n}")
        if size < 4 or size & (size - 1) != 0:
            raise ValueError(f"size must be a power of two >= 4, got {size}")
        cells = size**n
        if 16 * cells > memory_budget:
            raise ResourceGuardError(
                f"grid {size}^{n} needs {16 * cells} bytes per complex array, "
                f"budget is {memory_budget}"
            )
        self.n = n
        self.size = size
        self.shape = (size,) * n
        self.cell_count = cells
        self._axis_coords = (np.arange(size) + 0.5) / size
        self._freqs = np.arange(size) - size // 2
        self._half_phase = np.exp(-1j * np.pi * self._freqs / size)

    def __repr__(self):
        return f"TorusGrid(n={self.n}, size={self.size})"

    def __eq__(self, other):
        return (
            isinstance(other, TorusGrid)
            and self.n == other.n
            and self.size == other.size
        )

    def __hash__(self):
        return hash((self.n, self.size))

    @property
    def freqs(self) -> np.ndarray:
        """Signed frequencies per axis, the integers of [-G/2, G/2)."""
        return self._freqs

    def axis_coords(self, axis: int) -> np.ndarray:
        """Cell-centre coordinates along one axis, broadcastable over the grid."""
        shape = [1] * self.n
        shape[axis] = self.size
        return self._axis_coords.reshape(shape)

    def axis_freqs(self, axis: int) -> np.ndarray:
        """Signed frequencies along one axis, broadcastable over the lattice."""
        shape = [1] * self.n
        shape[axis] = self.size
        return self._freqs.reshape(shape)

    def phase(self, freq) -> np.ndarray:
        """The array x . freq over all cell centres."""
        freq = np.asarray(freq)
        out = np.zeros(self.shape)
        for a in range(self.n):
            if freq[a]:
                out = out + freq[a] * self.axis_coords(a)
        return out

    def freq_dot(self, vector) -> np.ndarray:
        """The array xi . vector over all lattice frequencies."""
        vector = np.asarray(vector, dtype=float)
        out = np.zeros(self.shape)
        for a in range(self.n):
            out = out + vector[a] * self.axis_freqs(a)
        return out

    def forward(self, values: np.ndarray) -> np.ndarray:
        """Forward transform of cell-centre samples; fftshift layout."""
        spec = np.fft.fftshift(np.fft.fftn(values)) / self.cell_count
        for a in range(self.n):
            shape = [1] * self.n
            shape[a] = self.size
            spec *= self._half_phase.reshape(shape)
        return spec

    def inverse(self, spectrum: np.ndarray) -> np.ndarray:
        """Inverse transform back to cell-centre samples."""
        spec = spectrum.astype(np.complex128, copy=True)
        for a in range(self.n):
            shape = [1] * self.n
            shape[a] = self.size
            spec *= np.conj(self._half_phase).reshape(shape)
        return np.fft.ifftn(np.fft.ifftshift(spec)) * self.cell_count


class GridFunction:
    """A function on a torus grid, with an optionally cached spectrum.

    The cached spectrum always equals grid.forward(values); callers must
    treat both arrays as read-only.
    """

    __slots__ = ("grid", "values", "_spectrum")

    def __init__(self, grid: TorusGrid, values: np.ndarray, spectrum: np.ndarray | None = None):
        values = np.asarray(values)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {grid.shape}")
        self.grid = grid
        self.values = values
        self._spectrum = spectrum

    @classmethod
    def from_spectrum(cls, grid: TorusGrid, spectrum: np.ndarray) -> "GridFunction":
        if spectrum.shape != grid.shape:
            raise ValueError(f"spectrum shape {spectrum.shape} does not match grid {grid.shape}")
        return cls(grid, grid.inverse(spectrum), spectrum=np.asarray(spectrum))

    def spectrum(self) -> np.ndarray:
        if self._spectrum is None:
            self._spectrum = self.grid.forward(self.values)
        return self._spectrum


def dft(f: GridFunction) -> np.ndarray:
    """Spectrum of f on the centred lattice (see module docstring)."""
    return f.spectrum()


def idft(grid: TorusGrid, spectrum: np.ndarray) -> GridFunction:
    """Grid function whose spectrum is the given array."""
    return GridFunction.from_spectrum(grid, spectrum)


def lp_norm(f, p) -> float:
    """Normalised L^p norm (sum |f|^p / G^n)^{1/p}; p = inf gives the max.

    Accepts a GridFunction or a bare ndarray of grid values.
    """
    values = f.values if isinstance(f, GridFunction) else np.asarray(f)
    mags = np.abs(values)
    if p == np.inf or p == float("inf"):
        return float(mags.max())
    p = float(p)
    if p < 1:
        raise ValueError(f"p must be >= 1 or inf, got {p}")
    return float(np.mean(mags**p) ** (1.0 / p))


def superlevel_fraction(f, level: float) -> float:
    """Fraction of grid cells where the (real or magnitude) value is >= level."""
    values = f.values if isinstance(f, GridFunction) else np.asarray(f)
    if np.iscomplexobj(values):
        values = np.abs(values)
    return float(np.count_nonzero(values >= level) / values.size)


def character(grid: TorusGrid, freq) -> GridFunction:
    """The lattice character e(freq . x)."""
    return GridFunction(grid, np.exp(2j * np.pi * grid.phase(freq)))


def cosine_wave(grid: TorusGrid, freq) -> GridFunction:
    """The real wave cos(2 pi freq . x)."""
    return GridFunction(grid, np.cos(2 * np.pi * grid.phase(freq)))


_MAGIC = b"TGF1"
_DTYPE_FLAGS = {0: np.float64, 1: np.complex128, 2: np.complex64}
_FLAG_BY_DTYPE = {np.dtype(v): k for k, v in _DTYPE_FLAGS.items()}


def save_grid_function(f: GridFunction, path) -> None:
    """Binary dump: magic, n, G, dtype flag, then row-major values."""
    dtype = np.dtype(f.values.dtype)
    if dtype not in _FLAG_BY_DTYPE:
        raise ValueError(f"unsupported dtype for dump: {dtype}")
    header = _MAGIC + struct.pack("<BIB", f.grid.n, f.grid.size, _FLAG_BY_DTYPE[dtype])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.values).tobytes())


def load_grid_function(path, memory_budget: int = DEFAULT_MEMORY_BUDGET) -> GridFunction:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"not a grid function dump: bad magic {magic!r}")
        n, size, flag = struct.unpack("<BIB", fh.read(6))
        if flag not in _DTYPE_FLAGS:
            raise ValueError(f"unknown dtype flag {flag}")
        grid = TorusGrid(n, size, memory_budget=memory_budget)
        data = np.frombuffer(fh.read(), dtype=_DTYPE_FLAGS[flag]).reshape(grid.shape)
    return GridFunction(grid, data.copy())
