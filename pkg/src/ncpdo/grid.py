"""Sampling grids and operator-valued functions on the d-torus.

Everything downstream works with matrix-valued trigonometric polynomials
sampled on a uniform grid of the unit torus [0,1)^d.  This module fixes the
conventions once:

* sample points are s = k / n_points, k in {0..n_points-1}^d;
* frequencies live on the centered integer box [-N/2, N/2)^d where
  N = n_points, stored with index 0 corresponding to -N/2 along each axis;
* the forward transform carries the 1/N^d factor, so the coefficient of a
  pure character e^{2pi i s.m} is exactly 1;
* integrals over the torus are Riemann sums with volume element 1/N^d.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GridSpec",
    "OpValuedFunction",
    "fft_forward",
    "fft_inverse",
    "plancherel_check",
    "cauchy_schwarz_check",
    "dump_opvalued",
    "load_opvalued",
    "load_opvalued_all",
]

_MAGIC = b"NCPF"


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on [0,1)^d with a centered frequency box.

    Parameters
    ----------
    d : int
        Torus dimension (>= 1).
    n_points : int
        Samples per axis; a power of two, at least 8.
    q : int
        Matrix fiber dimension; values are q x q complex matrices.
    """

    d: int = 2
    n_points: int = 16
    q: int = 1

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.n_points < 8 or not _is_pow2(self.n_points):
            raise ValueError(
                f"n_points must be a power of two >= 8, got {self.n_points}"
            )
        if self.q < 1:
            raise ValueError(f"q must be >= 1, got {self.q}")

    @property
    def spatial_shape(self) -> tuple:
        return (self.n_points,) * self.d

    @property
    def n_sites(self) -> int:
        return self.n_points**self.d

    @property
    def volume_element(self) -> float:
        """Riemann weight of one sample, 1/N^d."""
        return 1.0 / self.n_sites

    def points_1d(self) -> np.ndarray:
        """Sample coordinates k/N along one axis."""
        return np.arange(self.n_points) / self.n_points

    def coords(self) -> list:
        """Meshgrid (indexing='ij') of sample coordinates, one array per axis."""
        ax = self.points_1d()
        return list(np.meshgrid(*([ax] * self.d), indexing="ij"))

    def freqs_1d(self) -> np.ndarray:
        """Centered integer frequencies [-N/2, N/2) along one axis."""
        n = self.n_points
        return np.arange(-n // 2, n // 2)

    def freq_mesh(self) -> list:
        """Meshgrid (indexing='ij') of centered frequencies, one array per axis."""
        fr = self.freqs_1d()
        return list(np.meshgrid(*([fr] * self.d), indexing="ij"))

    def freq_radius(self) -> np.ndarray:
        """Euclidean magnitude |m| on the centered frequency box."""
        mesh = self.freq_mesh()
        return np.sqrt(sum(m.astype(float) ** 2 for m in mesh))


def fft_forward(samples: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Samples -> centered Fourier coefficients.

    coeffs(m) = (1/N^d) sum_s f(s) e^{-2pi i s.m}, m on the centered box.
    """
    axes = tuple(range(grid.d))
    out = np.fft.fftn(samples, axes=axes) / grid.n_sites
    return np.fft.fftshift(out, axes=axes)


def fft_inverse(coeffs: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Centered Fourier coefficients -> samples (inverse of `fft_forward`)."""
    axes = tuple(range(grid.d))
    out = np.fft.ifftshift(coeffs, axes=axes)
    return np.fft.ifftn(out, axes=axes) * grid.n_sites


def _as_grid_array(grid: GridSpec, arr: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=complex)
    full = grid.spatial_shape + (grid.q, grid.q)
    flat = (grid.n_sites, grid.q, grid.q)
    if arr.shape == full:
        return arr
    if arr.shape == flat:
        return arr.reshape(full)
    if grid.q == 1 and arr.shape == grid.spatial_shape:
        return arr.reshape(full)
    raise ValueError(f"{name} has shape {arr.shape}, expected {full} or {flat}")


class OpValuedFunction:
    """A q x q matrix-valued function on the grid, with lazily synced views.

    The two views are point samples f(s) and centered Fourier coefficients
    f^(m); whichever is absent is computed on demand and cached.  Use
    `from_samples` / `from_coeffs` to construct.  Public `samples` and
    `coeffs` are flattened to shape (N^d, q, q) in C order over the spatial
    axes; `samples_grid` / `coeffs_grid` expose the full (N,...,N,q,q) shape.
    """

    def __init__(self, grid: GridSpec, samples=None, coeffs=None):
        if samples is None and coeffs is None:
            raise ValueError("need samples or coeffs")
        self.grid = grid
        self._samples = None if samples is None else _as_grid_array(grid, samples, "samples")
        self._coeffs = None if coeffs is None else _as_grid_array(grid, coeffs, "coeffs")

    @classmethod
    def from_samples(cls, grid: GridSpec, samples) -> "OpValuedFunction":
        return cls(grid, samples=samples)

    @classmethod
    def from_coeffs(cls, grid: GridSpec, coeffs) -> "OpValuedFunction":
        return cls(grid, coeffs=coeffs)

    @property
    def samples_grid(self) -> np.ndarray:
        if self._samples is None:
            self._samples = fft_inverse(self._coeffs, self.grid)
        return self._samples

    @property
    def coeffs_grid(self) -> np.ndarray:
        if self._coeffs is None:
            self._coeffs = fft_forward(self._samples, self.grid)
        return self._coeffs

    @property
    def samples(self) -> np.ndarray:
        g = self.grid
        return self.samples_grid.reshape(g.n_sites, g.q, g.q)

    @property
    def coeffs(self) -> np.ndarray:
        g = self.grid
        return self.coeffs_grid.reshape(g.n_sites, g.q, g.q)

    def adjoint(self) -> "OpValuedFunction":
        """Pointwise conjugate transpose f*.

        On coefficients this is f*(m) = f^(-m)^H, up to the usual aliasing of
        the unpaired -N/2 row.
        """
        samp = self.samples_grid
        return OpValuedFunction.from_samples(self.grid, np.conj(samp).swapaxes(-1, -2))

    def coeff_at(self, m) -> np.ndarray:
        """Coefficient matrix at integer frequency m (tuple of length d)."""
        n = self.grid.n_points
        idx = tuple(int(mi) + n // 2 for mi in m)
        for i in idx:
            if not 0 <= i < n:
                raise ValueError(f"frequency {m} outside centered box")
        return self.coeffs_grid[idx]

    def scaled(self, c: complex) -> "OpValuedFunction":
        if self._samples is not None:
            return OpValuedFunction(self.grid, samples=c * self._samples)
        return OpValuedFunction(self.grid, coeffs=c * self._coeffs)

    def __add__(self, other: "OpValuedFunction") -> "OpValuedFunction":
        if other.grid != self.grid:
            raise ValueError("grid mismatch")
        return OpValuedFunction.from_samples(
            self.grid, self.samples_grid + other.samples_grid
        )

    def __sub__(self, other: "OpValuedFunction") -> "OpValuedFunction":
        return self + other.scaled(-1.0)

    def view_agreement(self) -> float:
        """Max abs difference between the stored views after a round trip."""
        if self._samples is None or self._coeffs is None:
            return 0.0
        back = fft_inverse(self._coeffs, self.grid)
        return float(np.max(np.abs(back - self._samples)))


def op_abs_sq(field: np.ndarray) -> np.ndarray:
    """Pointwise |f|^2 = f* f for a stacked (..., q, q) array."""
    return np.conj(field).swapaxes(-1, -2) @ field


def integrate(field: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Riemann integral over the torus of a (spatial..., q, q) field."""
    flat = field.reshape(grid.n_sites, grid.q, grid.q)
    return flat.sum(axis=0) * grid.volume_element


def plancherel_check(f: OpValuedFunction) -> float:
    """Operator norm of  sum_s |f(s)|^2 ds  -  sum_m |f^(m)|^2 ."""
    g = f.grid
    lhs = integrate(op_abs_sq(f.samples_grid), g)
    rhs = op_abs_sq(f.coeffs).sum(axis=0)
    return float(np.linalg.norm(lhs - rhs, ord=2))


def cauchy_schwarz_check(phi: np.ndarray, f: OpValuedFunction) -> float:
    """Most negative eigenvalue of the operator Cauchy-Schwarz gap.

    For scalar phi and matrix-valued f,
        G = (int |phi|^2)(int f* f) - (int phi f)* (int phi f)
    is positive semidefinite; returns min eig(G) (0 means clean PSD).
    """
    g = f.grid
    phi = np.asarray(phi, dtype=complex).reshape(g.spatial_shape)
    w = float(np.sum(np.abs(phi) ** 2)) * g.volume_element
    ff = integrate(op_abs_sq(f.samples_grid), g)
    pf = integrate(phi[..., None, None] * f.samples_grid, g)
    gap = w * ff - np.conj(pf).T @ pf
    gap = 0.5 * (gap + np.conj(gap).T)
    return float(np.linalg.eigvalsh(gap).min())


# ---------------------------------------------------------------------------
# binary round trip (see docs/formats.md)
# ---------------------------------------------------------------------------

def _write_record(fh, f: OpValuedFunction, view: str) -> None:
    if view not in ("samples", "coeffs"):
        raise ValueError(f"view must be 'samples' or 'coeffs', got {view!r}")
    g = f.grid
    header = {"d": g.d, "n_points": g.n_points, "q": g.q, "view": view}
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    data = (f.samples if view == "samples" else f.coeffs).astype("<c8")
    fh.write(_MAGIC)
    fh.write(len(hbytes).to_bytes(4, "little"))
    fh.write(hbytes)
    fh.write(data.tobytes(order="C"))


def dump_opvalued(f, path, view: str = "samples") -> None:
    """Write one function (or a list, concatenated) to `path` (complex64)."""
    fns = f if isinstance(f, (list, tuple)) else [f]
    with open(path, "wb") as fh:
        for fn in fns:
            _write_record(fh, fn, view)


def _read_record(fh, path):
    magic = fh.read(4)
    if not magic:
        return None
    if magic != _MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
    hlen = int.from_bytes(fh.read(4), "little")
    header = json.loads(fh.read(hlen).decode())
    grid = GridSpec(d=header["d"], n_points=header["n_points"], q=header["q"])
    nbytes = grid.n_sites * grid.q * grid.q * 8
    raw = fh.read(nbytes)
    if len(raw) != nbytes:
        raise ValueError(f"{path}: truncated payload")
    arr = np.frombuffer(raw, dtype="<c8").reshape(grid.n_sites, grid.q, grid.q)
    arr = arr.astype(complex)
    if header["view"] == "samples":
        return OpValuedFunction.from_samples(grid, arr)
    return OpValuedFunction.from_coeffs(grid, arr)


def load_opvalued(path) -> OpValuedFunction:
    """Read a single-record file written by `dump_opvalued`."""
    with open(path, "rb") as fh:
        f = _read_record(fh, path)
        if f is None:
            raise ValueError(f"{path}: empty file")
        if fh.read(1):
            raise ValueError(
                f"{path}: trailing records; use load_opvalued_all"
            )
    return f


def load_opvalued_all(path) -> list:
    """Read every record of a concatenated container file, in order."""
    out = []
    with open(path, "rb") as fh:
        while True:
            f = _read_record(fh, path)
            if f is None:
                return out
            out.append(f)
