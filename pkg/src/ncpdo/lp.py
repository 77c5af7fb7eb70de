"""Dyadic band families and smooth unit resolutions on the torus.

The band profile phi is a smooth radial window supported exactly on the
annulus 1/2 <= r <= 2, positive inside, built so that the dyadic dilates
sum to 1 away from the origin.  The construction divides a fixed bump by
its own two-term dyadic sum, which makes the telescoping identity hold to
rounding error (the overlapping pair shares one denominator), and keeps
the compact supports bit-exact: the bump returns literal 0.0 outside its
annulus.

Levels are indexed j = 0..J with J the largest j such that 2^(j+1) is at
most n_points/2.  Level 0 is the low-pass complement 1 - sum_{j>=1}; on
the integer lattice it coincides with phi itself away from the origin,
so the torus multiplier family (the lattice restriction of the dilates,
used by the periodic function-space norms) reuses the same tables with
the origin cell zeroed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec, OpValuedFunction, fft_forward, fft_inverse

__all__ = [
    "LPFamily",
    "UnitResolution",
    "PROFILES",
    "DEFAULT_PROFILE",
    "phi_radial",
    "build_lp_family",
    "torus_multipliers",
    "band_apply",
    "band_decompose",
    "build_unit_resolution",
]

# Named radial profiles: sharper bumps concentrate the window.
PROFILES = {"bump-v1": 1.0, "bump-narrow": 2.0}

# Module-wide default; the CLI rebinds this when NCPDO_PROFILE is set so
# that every family built without an explicit profile picks it up.
DEFAULT_PROFILE = "bump-v1"


def _bump(x: np.ndarray, a: float) -> np.ndarray:
    """exp(-a/(1-x^2)) on |x| < 1, literal zero outside."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    with np.errstate(over="ignore", under="ignore"):
        out[inside] = np.exp(-a / (1.0 - x[inside] ** 2))
    return out


def _window(r: np.ndarray, a: float) -> np.ndarray:
    """Octave window h(r): the bump in log2(r), support exactly [1/2, 2]."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    pos = r > 0
    out[pos] = _bump(np.log2(r[pos]), a)
    return out


def phi_radial(r, profile: str = "bump-v1") -> np.ndarray:
    """The normalized band profile phi(r).

    supp phi = [1/2, 2], phi > 0 on the open annulus, and
    sum_k phi(2^-k r) = 1 for every r > 0.  At any r at most two dyadic
    dilates of the window overlap, and the normalization gives the
    overlapping pair a common denominator, so the partition identity is
    exact up to one rounding each.
    """
    a = PROFILES[profile]
    r = np.asarray(r, dtype=float)
    h0 = _window(r, a)
    den = h0 + _window(2.0 * r, a) + _window(0.5 * r, a)
    out = np.zeros_like(h0)
    nz = h0 > 0
    out[nz] = h0[nz] / den[nz]
    return out


@dataclass
class LPFamily:
    """Lattice band tables for one grid.

    hat_phi[j] is the level-j multiplier on the centered frequency box;
    level 0 is the low-pass complement and the top level J absorbs every
    dilate from J up, so the J+1 tables resolve identity exactly on the
    whole box, corners included.  base_profile is a 4096-point radial
    reference table of phi, and profile_id hashes it so reports can name
    the exact profile they used.
    """

    grid: GridSpec
    J: int
    hat_phi: list
    profile: str
    profile_id: str
    base_profile: tuple = field(repr=False, default=None)

    def band_support_ok(self) -> bool:
        """Bit-exact supports: level j < J vanishes off 2^(j-1) < |m| < 2^(j+1),
        the top level vanishes on |m| <= 2^(J-1), the low-pass off |m| < 2."""
        r = self.grid.freq_radius()
        for j in range(1, self.J):
            tab = self.hat_phi[j]
            outside = (r <= 2.0 ** (j - 1)) | (r >= 2.0 ** (j + 1))
            if np.any(tab[outside] != 0.0):
                return False
        if np.any(self.hat_phi[self.J][r <= 2.0 ** (self.J - 1)] != 0.0):
            return False
        if np.any(self.hat_phi[0][r >= 2.0] != 0.0):
            return False
        return True

    def partition_defect(self) -> float:
        """max |sum_j hat_phi[j](m) - 1| over the whole frequency box."""
        total = sum(self.hat_phi)
        return float(np.max(np.abs(total - 1.0)))


def build_lp_family(grid: GridSpec, profile: str = None) -> LPFamily:
    if profile is None:
        profile = DEFAULT_PROFILE
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; have {sorted(PROFILES)}")
    n = grid.n_points
    J = 0
    while 2 ** (J + 2) <= n // 2:
        J += 1
    # J is the largest j with 2^(j+1) <= n/2
    r = grid.freq_radius()
    hat = []
    # low-pass complement: 1 - sum of all dilates that meet the box
    jmax = int(np.ceil(np.log2(max(2.0, r.max())))) + 1
    acc = np.zeros_like(r)
    for j in range(1, jmax + 1):
        acc = acc + phi_radial(r / 2.0**j, profile)
    low = 1.0 - acc
    # off |m| < 2 the dilates telescope to 1 exactly; snap the rounding dust
    # so the compact support is bit-exact like the other levels
    low[r >= 2.0] = 0.0
    hat.append(low)
    for j in range(1, J):
        hat.append(phi_radial(r / 2.0**j, profile))
    # the top level absorbs the whole lattice tail (all dilates j >= J), so
    # the family resolves identity on the full box, corners included
    top = 1.0 - low - sum(hat[1:J])
    # below 2^(J-1) the lower levels already sum to 1; snap the dust
    top[r <= 2.0 ** (J - 1)] = 0.0
    hat.append(top)

    rt = np.linspace(0.0, 2.5, 4096)
    table = phi_radial(rt, profile)
    pid = hashlib.sha256(table.tobytes()).hexdigest()[:12]
    return LPFamily(
        grid=grid,
        J=J,
        hat_phi=hat,
        profile=profile,
        profile_id=f"{profile}-{pid}",
        base_profile=(rt, table),
    )


def torus_multipliers(fam: LPFamily) -> list:
    """Periodic-convolution multiplier tables m -> phi(2^-j m), j = 0..J.

    Identical to the lattice tables except that the origin cell of level 0
    is zeroed: on the torus the mean mode is carried by a separate term in
    the function-space norms.
    """
    grid = fam.grid
    out = [t.copy() for t in fam.hat_phi]
    origin = (grid.n_points // 2,) * grid.d
    out[0][origin] = 0.0
    return out


def band_apply(fam: LPFamily, f: OpValuedFunction, j: int, torus: bool = False):
    """Convolution with the level-j window, i.e. the diagonal multiplier action."""
    grid = fam.grid
    tab = fam.hat_phi[j]
    if torus and j == 0:
        tab = torus_multipliers(fam)[0]
    coeffs = f.coeffs_grid * tab[..., None, None]
    return OpValuedFunction.from_coeffs(grid, coeffs)


def band_decompose(fam: LPFamily, f: OpValuedFunction, torus: bool = False) -> list:
    """All band pieces [phi_j * f] as sample arrays, one FFT round trip total."""
    grid = fam.grid
    tabs = torus_multipliers(fam) if torus else fam.hat_phi
    coeffs = f.coeffs_grid
    return [
        fft_inverse(coeffs * t[..., None, None], grid) for t in tabs
    ]


# ---------------------------------------------------------------------------
# smooth unit resolution
# ---------------------------------------------------------------------------

def _beta_1d(t: np.ndarray, a: float = 1.0) -> np.ndarray:
    """Smooth 1-periodic partition profile: supp (-1,1), sum_k beta(t-k) = 1."""
    b0 = _bump(t, a)
    den = b0 + _bump(t - 1.0, a) + _bump(t + 1.0, a)
    out = np.zeros_like(b0)
    nz = b0 > 0
    out[nz] = b0[nz] / den[nz]
    return out


@dataclass
class UnitResolution:
    """Scaled smooth partition of unity subordinate to dyadic cubes.

    chi0 holds samples of chi_{mu,0}(s) = chi(2^mu s) on the grid (support
    in the doubled cube of side 2^(1-mu) around 0, wrapped); the shift by
    2^-mu m is an exact grid roll of n_points/2^mu samples per unit of m.
    """

    grid: GridSpec
    mu: int
    chi0: np.ndarray

    @property
    def step(self) -> int:
        return self.grid.n_points // 2**self.mu

    def shifted(self, m) -> np.ndarray:
        """Samples of chi_{mu,m}."""
        m = tuple(int(v) for v in m)
        if len(m) != self.grid.d:
            raise ValueError(f"shift index needs {self.grid.d} entries")
        out = self.chi0
        for axis, mi in enumerate(m):
            out = np.roll(out, mi * self.step, axis=axis)
        return out

    def partition_defect(self) -> float:
        total = np.zeros(self.grid.spatial_shape)
        for flat in range(2 ** (self.mu * self.grid.d)):
            idx = []
            v = flat
            for _ in range(self.grid.d):
                idx.append(v % 2**self.mu)
                v //= 2**self.mu
            total = total + self.shifted(tuple(idx))
        return float(np.max(np.abs(total - 1.0)))


def build_unit_resolution(grid: GridSpec, mu: int = 0) -> UnitResolution:
    if mu < 0:
        raise ValueError("mu must be >= 0")
    if 2**mu > grid.n_points // 4:
        raise ValueError(
            f"resolution scale 2^{mu} too fine for n_points={grid.n_points}"
        )
    pts = grid.points_1d()
    centered = np.where(pts < 0.5, pts, pts - 1.0)  # wrap to [-1/2, 1/2)
    # periodize over unit wraps; only mu = 0 actually picks up neighbors
    prof = sum(_beta_1d((centered + k) * 2**mu) for k in (-1, 0, 1))
    chi = prof
    for _ in range(grid.d - 1):
        chi = np.multiply.outer(chi, prof)
    return UnitResolution(grid=grid, mu=mu, chi0=chi)
