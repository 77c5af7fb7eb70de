"""Operator-valued symbols sigma(s, xi) and their calculus.

A symbol assigns a q x q matrix to every (sample point, lattice frequency)
pair.  Two storage layouts are supported and most operations accept both:

* separable-sum: sigma = sum_i b_i(s) M_i(xi) with scalar spatial factors
  b_i and matrix frequency tables M_i.  All shipped exemplars have this
  shape; it keeps n_points = 64 workloads in megabytes.
* dense: a full (spatial x frequency x q x q) table, memory-guarded.

Symbol class membership S^n_{rho,delta} is *measured*, not assumed: the
checker forms mixed spatial-derivative / frequency-difference arrays and
reports the smallest admissible constants against the claimed order.
Spatial derivatives are spectral (the samples are trigonometric
polynomials); frequency differences are unit-step central differences for
lattice-sampled symbols and forward differences for the toroidal
difference calculus.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec, OpValuedFunction, fft_forward, fft_inverse
from .lp import LPFamily, phi_radial

__all__ = [
    "Symbol",
    "ToroidalSymbol",
    "ClassReport",
    "MemoryBudgetError",
    "check_symbol_class",
    "kernel_from_symbol",
    "kernel_row",
    "kernel_decay_report",
    "dyadic_pieces",
    "dyadic_kernel_report",
    "compose_symbols_asymptotic",
    "composition_remainder_report",
    "adjoint_symbol_asymptotic",
    "adjoint_remainder_report",
    "extend_toroidal_symbol",
    "symbol_from_config",
    "multi_indices",
]


class MemoryBudgetError(MemoryError):
    """Raised when a dense materialization would exceed the byte budget."""


# Process-wide default for dense tables; the CLI rebinds this from
# --budget-mb.  Refusal is always hard, never a silent shrink.
DEFAULT_BUDGET_MB = 512.0


def multi_indices(d: int, max_total: int, strict: bool = False):
    """All multi-indices in N_0^d with |gamma|_1 <= max_total (< if strict)."""
    top = max_total - 1 if strict else max_total
    out = []
    for total in range(top + 1):
        for combo in itertools.product(range(total + 1), repeat=d):
            if sum(combo) == total:
                out.append(combo)
    return out


def _factorial_multi(gamma) -> float:
    out = 1.0
    for g in gamma:
        out *= math.factorial(g)
    return out


@dataclass
class Symbol:
    """One symbol table; see the module docstring for layouts.

    claim is the asserted class (n, rho, delta).  terms is a list of
    (s_factor, xi_factor) pairs with s_factor a scalar complex field over
    the sample grid (None meaning the constant 1) and xi_factor a
    (freq..., q, q) table.  values, when present, is the dense layout.
    xi_closure, for symbols that extend off the integer lattice, maps an
    (..., d) float array of frequencies to (..., q, q) values at a fixed
    spatial slice index.
    """

    grid: GridSpec
    claim: tuple
    terms: list = None
    values: np.ndarray = None
    name: str = ""
    calculus: str = "euclidean"
    xi_closure: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.terms is None and self.values is None:
            raise ValueError("symbol needs terms or values")
        if self.values is not None:
            g = self.grid
            want = g.spatial_shape + g.spatial_shape + (g.q, g.q)
            if self.values.shape != want:
                raise ValueError(
                    f"dense symbol shape {self.values.shape}, expected {want}"
                )

    @property
    def is_separable(self) -> bool:
        return self.values is None

    def dense_bytes(self) -> int:
        g = self.grid
        return 16 * g.n_sites**2 * g.q * g.q

    def materialize(self, budget_mb: float = None) -> np.ndarray:
        """Dense (spatial..., freq..., q, q) table; refuses above the budget."""
        if budget_mb is None:
            budget_mb = DEFAULT_BUDGET_MB
        if self.values is not None:
            return self.values
        if self.dense_bytes() > budget_mb * 2**20:
            raise MemoryBudgetError(
                f"dense symbol needs {self.dense_bytes() / 2**20:.0f} MiB, "
                f"budget is {budget_mb:.0f} MiB"
            )
        g = self.grid
        out = np.zeros(g.spatial_shape + g.spatial_shape + (g.q, g.q), dtype=complex)
        sdim = (slice(None),) * g.d
        for b, m in self.terms:
            if b is None:
                out += m[(None,) * g.d]
            else:
                out += b[sdim + (None,) * (g.d + 2)] * m[(None,) * g.d]
        return out

    def xi_slice(self, idx: tuple) -> np.ndarray:
        """sigma(., m) for one frequency index: a (spatial..., q, q) field."""
        g = self.grid
        if self.values is not None:
            return self.values[(slice(None),) * g.d + tuple(idx)]
        out = np.zeros(g.spatial_shape + (g.q, g.q), dtype=complex)
        for b, m in self.terms:
            block = m[tuple(idx)]
            if b is None:
                out += block
            else:
                out += b[..., None, None] * block
        return out

    def s_slice(self, idx: tuple) -> np.ndarray:
        """sigma(s, .) for one sample index: a (freq..., q, q) table."""
        g = self.grid
        if self.values is not None:
            return self.values[tuple(idx)]
        out = np.zeros(g.spatial_shape + (g.q, g.q), dtype=complex)
        for b, m in self.terms:
            out += m if b is None else b[tuple(idx)] * m
        return out

    def conj_transpose(self) -> "Symbol":
        """Pointwise adjoint sigma*(s, xi) = sigma(s, xi)^H."""
        if self.values is not None:
            vals = np.conj(self.values).swapaxes(-1, -2)
            return Symbol(self.grid, self.claim, values=vals, name=self.name + "*")
        terms = [
            (None if b is None else np.conj(b), np.conj(m).swapaxes(-1, -2))
            for b, m in self.terms
        ]
        return Symbol(self.grid, self.claim, terms=terms, name=self.name + "*")

    def scaled(self, c: complex) -> "Symbol":
        if self.values is not None:
            return Symbol(self.grid, self.claim, values=c * self.values, name=self.name)
        terms = [(b, c * m) for b, m in self.terms]
        return Symbol(self.grid, self.claim, terms=terms, name=self.name)

    def __add__(self, other: "Symbol") -> "Symbol":
        if self.grid != other.grid:
            raise ValueError("grid mismatch")
        if self.is_separable and other.is_separable:
            return Symbol(
                self.grid, self.claim, terms=self.terms + other.terms, name=self.name
            )
        return Symbol(
            self.grid,
            self.claim,
            values=self.materialize() + other.materialize(),
            name=self.name,
        )

    def __sub__(self, other: "Symbol") -> "Symbol":
        return self + other.scaled(-1.0)


class ToroidalSymbol(Symbol):
    """Symbol handled with the forward-difference calculus on the lattice."""

    def __post_init__(self):
        super().__post_init__()
        self.calculus = "toroidal"


# ---------------------------------------------------------------------------
# derivatives and differences
# ---------------------------------------------------------------------------

def s_derivative(sym: Symbol, gamma) -> Symbol:
    """Spectral derivative D_s^gamma in the sample slot."""
    g = sym.grid
    if all(c == 0 for c in gamma):
        return sym
    mesh = g.freq_mesh()
    mult = np.ones(g.spatial_shape, dtype=complex)
    for axis, power in enumerate(gamma):
        if power:
            mult = mult * (2j * np.pi * mesh[axis]) ** power

    def d_field(b):
        coeffs = np.fft.fftshift(np.fft.fftn(b), axes=tuple(range(g.d)))
        coeffs *= mult
        return np.fft.ifftn(np.fft.ifftshift(coeffs, axes=tuple(range(g.d))))

    if sym.is_separable:
        terms = []
        for b, m in sym.terms:
            if b is None:
                continue  # constant in s: derivative drops the term
            terms.append((d_field(b), m))
        if not terms:
            zero = np.zeros(g.spatial_shape + (g.q, g.q), dtype=complex)
            terms = [(None, zero)]
        return Symbol(g, sym.claim, terms=terms, name=sym.name, calculus=sym.calculus)

    vals = sym.values
    axes = tuple(range(g.d))
    coeffs = np.fft.fftshift(np.fft.fftn(vals, axes=axes), axes=axes)
    coeffs *= mult[(...,) + (None,) * (g.d + 2)]
    vals = np.fft.ifftn(np.fft.ifftshift(coeffs, axes=axes), axes=axes)
    return Symbol(g, sym.claim, values=vals, name=sym.name, calculus=sym.calculus)


def _central_diff(table: np.ndarray, axis: int) -> np.ndarray:
    """Unit-step central difference, one-sided at the box edges."""
    return np.gradient(table, axis=axis, edge_order=1)


def _forward_diff(table: np.ndarray, axis: int) -> np.ndarray:
    """Forward difference Delta along one axis; the top edge repeats."""
    shifted = np.roll(table, -1, axis=axis)
    out = shifted - table
    idx = [slice(None)] * table.ndim
    idx[axis] = -1
    idx2 = list(idx)
    idx2[axis] = -2
    out[tuple(idx)] = out[tuple(idx2)]
    return out


def xi_difference(sym: Symbol, beta, scheme: str = None) -> Symbol:
    """Frequency difference of order beta (central or forward per calculus)."""
    g = sym.grid
    if all(c == 0 for c in beta):
        return sym
    if scheme is None:
        scheme = "forward" if sym.calculus == "toroidal" else "central"
    op = _forward_diff if scheme == "forward" else _central_diff

    def diff_table(m, freq_axis_offset):
        out = m
        for axis, power in enumerate(beta):
            for _ in range(power):
                out = op(out, axis=axis + freq_axis_offset)
        return out

    if sym.is_separable:
        terms = [(b, diff_table(m, 0)) for b, m in sym.terms]
        return Symbol(g, sym.claim, terms=terms, name=sym.name, calculus=sym.calculus)
    vals = diff_table(sym.values, g.d)
    return Symbol(g, sym.claim, values=vals, name=sym.name, calculus=sym.calculus)


def _edge_margin_mask(grid: GridSpec, order: int) -> np.ndarray:
    """Frequency-box mask excluding cells whose differences touched an edge."""
    n = grid.n_points
    good_1d = np.zeros(n, dtype=bool)
    lo = order
    hi = n - order
    good_1d[lo:hi] = True
    mask = good_1d
    for _ in range(grid.d - 1):
        mask = np.logical_and.outer(mask, good_1d)
    return mask


# ---------------------------------------------------------------------------
# class membership
# ---------------------------------------------------------------------------

@dataclass
class ClassReport:
    claim: tuple
    orders: tuple
    calculus: str
    constants: dict
    max_constant: float
    bound: float = None
    name: str = ""

    @property
    def passed(self) -> bool:
        return self.bound is None or self.max_constant <= self.bound

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "claim": list(self.claim),
            "orders": list(self.orders),
            "calculus": self.calculus,
            "constants": {k: float(v) for k, v in self.constants.items()},
            "max_constant": float(self.max_constant),
            "bound": self.bound,
            "passed": bool(self.passed),
            "method": "sup of weighted mixed difference arrays",
        }


def _op_norms(stack: np.ndarray) -> np.ndarray:
    """Largest singular value per matrix of a (..., q, q) stack."""
    q = stack.shape[-1]
    if q == 1:
        return np.abs(stack[..., 0, 0])
    return np.linalg.svd(stack, compute_uv=False)[..., 0]


def check_symbol_class(
    sym: Symbol, claim: tuple = None, orders: tuple = (2, 2), bound: float = None
) -> ClassReport:
    """Measure the smallest class constants of `sym` against a claim.

    For each |gamma|_1 <= orders[0], |beta|_1 <= orders[1] the constant is
        C = sup_{s, xi} ||D_s^gamma Delta_xi^beta sigma|| (1+|xi|)^(-(n + delta|gamma| - rho|beta|)),
    with the sup over frequencies whose difference stencils stay inside the
    box.  Orders above 4 are refused (the stencils would eat the box).
    """
    if orders[0] > 4 or orders[1] > 4:
        raise ValueError("derivative/difference orders above 4 are not supported")
    n, rho, delta = claim if claim is not None else sym.claim
    g = sym.grid
    radius = g.freq_radius()
    constants = {}
    for gamma in multi_indices(g.d, orders[0]):
        dsym = s_derivative(sym, gamma)
        for beta in multi_indices(g.d, orders[1]):
            work = xi_difference(dsym, beta)
            mask = _edge_margin_mask(g, sum(beta))
            expo = n + delta * sum(gamma) - rho * sum(beta)
            weight = (1.0 + radius) ** (-expo)
            if work.is_separable:
                best = 0.0
                flat_idx = np.argwhere(mask)
                # chunked over frequencies: forming the full dense array at
                # n_points = 64 would cost gigabytes
                chunk = max(1, 2**22 // (16 * g.n_sites * g.q * g.q))
                for lo in range(0, len(flat_idx), chunk):
                    idxs = tuple(flat_idx[lo : lo + chunk].T)
                    combined = np.zeros(
                        (len(idxs[0]),) + g.spatial_shape + (g.q, g.q), dtype=complex
                    )
                    for b, m in work.terms:
                        block = m[idxs].reshape(
                            (len(idxs[0]),) + (1,) * g.d + (g.q, g.q)
                        )
                        if b is None:
                            combined += block
                        else:
                            combined += b[None, ..., None, None] * block
                    sup_s = _op_norms(combined).reshape(len(idxs[0]), -1).max(axis=1)
                    val = float((sup_s * weight[idxs]).max())
                    best = max(best, val)
            else:
                norms = _op_norms(work.values)  # (spatial..., freq...)
                sup_s = norms.reshape(g.n_sites, *g.spatial_shape).max(axis=0)
                best = float((sup_s * weight)[mask].max())
            constants[f"g{''.join(map(str, gamma))}b{''.join(map(str, beta))}"] = best
    max_c = max(constants.values())
    return ClassReport(
        claim=(n, rho, delta),
        orders=orders,
        calculus=sym.calculus,
        constants=constants,
        max_constant=max_c,
        bound=bound,
        name=sym.name,
    )


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def kernel_row(sym: Symbol, s_idx: tuple, gamma=None, beta=None) -> np.ndarray:
    """D_s^gamma D_t^beta K(s, t) over t, at one sample point s.

    K(s, t) = sum_xi sigma(s, xi) e^{2 pi i t.xi}; the t-derivative turns
    into the polynomial weight (2 pi i xi)^beta under the sum.
    """
    g = sym.grid
    gamma = gamma or (0,) * g.d
    beta = beta or (0,) * g.d
    work = s_derivative(sym, gamma)
    fld = work.s_slice(s_idx).copy()
    if any(beta):
        mesh = g.freq_mesh()
        for axis, power in enumerate(beta):
            if power:
                fld *= ((2j * np.pi * mesh[axis]) ** power)[..., None, None]
    return fft_inverse(fld, g)


def kernel_from_symbol(sym: Symbol, budget_mb: float = None) -> np.ndarray:
    """Full kernel table K[s, t], shape (spatial_s..., spatial_t..., q, q)."""
    if budget_mb is None:
        budget_mb = DEFAULT_BUDGET_MB
    g = sym.grid
    need = 16 * g.n_sites**2 * g.q * g.q
    if need > budget_mb * 2**20:
        raise MemoryBudgetError(
            f"kernel table needs {need / 2**20:.0f} MiB, budget {budget_mb:.0f} MiB"
        )
    out = np.zeros(g.spatial_shape + g.spatial_shape + (g.q, g.q), dtype=complex)
    for s_idx in itertools.product(range(g.n_points), repeat=g.d):
        out[s_idx] = kernel_row(sym, s_idx)
    return out


def _torus_dist(grid: GridSpec) -> np.ndarray:
    """Euclidean distance from 0 on the torus, sampled on the grid."""
    pts = grid.points_1d()
    centered = np.where(pts < 0.5, pts, pts - 1.0)
    mesh = np.meshgrid(*([centered] * grid.d), indexing="ij")
    return np.sqrt(sum(m**2 for m in mesh))


@dataclass
class KernelDecayReport:
    entries: list
    s_index: tuple
    tolerance: float
    note: str = (
        "the |t| > 1 super-polynomial regime is not observable on the unit torus"
    )

    @property
    def passed(self) -> bool:
        return all(e["passed"] for e in self.entries)

    def to_dict(self) -> dict:
        return {
            "entries": self.entries,
            "s_index": list(self.s_index),
            "tolerance": self.tolerance,
            "note": self.note,
            "passed": bool(self.passed),
            "method": "dyadic-shell sup + least-squares log-log slope",
        }


def kernel_decay_report(
    sym: Symbol,
    pairs=((None, None),),
    s_idx: tuple = None,
    tolerance: float = 0.15,
) -> KernelDecayReport:
    """Fit || D^gamma D^beta K(s, .) || against |t| on dyadic shells.

    Shells run from 2/N to 1/4.  The fitted log-log slope is compared to
    -(|gamma| + |beta| + d + n) with the claimed order n; pass means the
    relative deviation stays within `tolerance`.  Fewer than 4 shells is a
    configuration error.
    """
    g = sym.grid
    if s_idx is None:
        s_idx = (0,) * g.d
    kmin = 2  # |t| <= 1/4
    kmax = int(np.log2(g.n_points)) - 1  # |t| >= 2/N
    if kmax - kmin + 1 < 4:
        raise ValueError("need at least 4 dyadic shells: raise n_points")
    dist = _torus_dist(g)
    n_order = sym.claim[0]
    entries = []
    for gamma, beta in pairs:
        gamma = gamma or (0,) * g.d
        beta = beta or (0,) * g.d
        row = kernel_row(sym, s_idx, gamma, beta)
        mags = _op_norms(row)
        xs, ys, shells = [], [], []
        for k in range(kmin, kmax + 1):
            sel = (dist > 2.0 ** (-k - 1)) & (dist <= 2.0**-k)
            if not np.any(sel):
                continue
            v = float(mags[sel].max())
            r = float(dist[sel][np.argmax(mags[sel])])
            xs.append(np.log2(r))
            ys.append(np.log2(v))
            shells.append({"radius": r, "sup": v})
        slope = float(np.polyfit(xs, ys, 1)[0])
        predicted = -(sum(gamma) + sum(beta) + g.d + n_order)
        rel = abs(slope - predicted) / abs(predicted)
        entries.append(
            {
                "gamma": list(gamma),
                "beta": list(beta),
                "slope": slope,
                "predicted": predicted,
                "rel_err": rel,
                "passed": bool(rel <= tolerance),
                "shells": shells,
            }
        )
    return KernelDecayReport(entries=entries, s_index=s_idx, tolerance=tolerance)


def dyadic_pieces(sym: Symbol, fam: LPFamily) -> list:
    """Band-cut symbols sigma_k = sigma(s, xi) hat_phi_k(xi), k = 0..J."""
    g = sym.grid
    out = []
    for j in range(fam.J + 1):
        tab = fam.hat_phi[j]
        if sym.is_separable:
            terms = [(b, m * tab[..., None, None]) for b, m in sym.terms]
            out.append(
                Symbol(g, sym.claim, terms=terms, name=f"{sym.name}|band{j}")
            )
        else:
            vals = sym.values * tab[(None,) * g.d + (...,) + (None, None)]
            out.append(Symbol(g, sym.claim, values=vals, name=f"{sym.name}|band{j}"))
    return out


def dyadic_kernel_report(
    sym: Symbol, fam: LPFamily, Ms=None, s_idx: tuple = None
) -> dict:
    """Measured constants for the band-kernel weight bound.

    For each band k and weight order M the reported constant is
        C_{k,M} = sup_{t != 0} |t|^{2M} ||K_k(t)|| 2^{-k(d - 2M + n)},
    which the dyadic kernel estimate says is bounded in k.
    """
    g = sym.grid
    if s_idx is None:
        s_idx = (0,) * g.d
    if Ms is None:
        Ms = (0, (g.d + 1) // 2 + 1)
    dist = _torus_dist(g)
    nz = dist > 0
    n_order = sym.claim[0]
    pieces = dyadic_pieces(sym, fam)
    rows = {}
    for M in Ms:
        consts = []
        for k, piece in enumerate(pieces):
            mags = _op_norms(kernel_row(piece, s_idx))
            lhs = float((mags[nz] * dist[nz] ** (2 * M)).max())
            consts.append(lhs * 2.0 ** (-k * (g.d - 2 * M + n_order)))
        rows[M] = consts
    return {
        "s_index": list(s_idx),
        "constants": {str(m): [float(c) for c in v] for m, v in rows.items()},
        "bands": fam.J + 1,
        "method": "sup over t of weighted band kernels",
    }


# ---------------------------------------------------------------------------
# composition and adjoint expansions
# ---------------------------------------------------------------------------

def _prefactor(gamma) -> complex:
    return (2j * np.pi) ** (-sum(gamma)) / _factorial_multi(gamma)


def compose_symbols_asymptotic(sym1: Symbol, sym2: Symbol, n0: int) -> Symbol:
    """Truncated composition expansion of T_sym1 T_sym2.

    sigma3 = sum_{|gamma|_1 < n0} (2 pi i)^(-|gamma|_1) / gamma! *
             (D_xi^gamma sigma1)(D_s^gamma sigma2),
    with the frequency derivative on the left factor and the matrix product
    in that order.  n0 above 6 is refused.
    """
    if not 1 <= n0 <= 6:
        raise ValueError("expansion order n0 must be in 1..6")
    if sym1.grid != sym2.grid:
        raise ValueError("grid mismatch")
    g = sym1.grid
    gammas = multi_indices(g.d, n0, strict=True)
    n_out = (sym1.claim[0] + sym2.claim[0], 1.0, max(sym1.claim[2], sym2.claim[2]))

    if sym1.is_separable and sym2.is_separable:
        terms = []
        for gamma in gammas:
            c = _prefactor(gamma)
            left = xi_difference(sym1, gamma, scheme="central")
            right = s_derivative(sym2, gamma)
            for b1, m1 in left.terms:
                for b2, m2 in right.terms:
                    if b1 is None and b2 is None:
                        bfac = None
                    elif b1 is None:
                        bfac = b2.copy()
                    elif b2 is None:
                        bfac = b1.copy()
                    else:
                        bfac = b1 * b2
                    terms.append((bfac, c * np.einsum("...ab,...bc->...ac", m1, m2)))
        return Symbol(g, n_out, terms=terms, name=f"({sym1.name})#({sym2.name})")

    v1 = sym1.materialize()
    v2 = sym2.materialize()
    out = np.zeros_like(v1)
    for gamma in gammas:
        c = _prefactor(gamma)
        left = xi_difference(Symbol(g, sym1.claim, values=v1), gamma, scheme="central")
        right = s_derivative(Symbol(g, sym2.claim, values=v2), gamma)
        out += c * np.einsum("...ab,...bc->...ac", left.values, right.values)
    return Symbol(g, n_out, values=out, name=f"({sym1.name})#({sym2.name})")


def adjoint_symbol_asymptotic(sym: Symbol, n0: int) -> Symbol:
    """Truncated adjoint expansion: sum (2 pi i)^(-|g|)/g! D_xi^g D_s^g sigma*."""
    if not 1 <= n0 <= 6:
        raise ValueError("expansion order n0 must be in 1..6")
    g = sym.grid
    star = sym.conj_transpose()
    parts = None
    for gamma in multi_indices(g.d, n0, strict=True):
        c = _prefactor(gamma)
        term = xi_difference(s_derivative(star, gamma), gamma, scheme="central").scaled(c)
        parts = term if parts is None else parts + term
    parts.name = f"adj({sym.name})"
    parts.claim = (sym.claim[0], 1.0, sym.claim[2])
    return parts


def _band_limited_panel(grid: GridSpec, rng, count: int, max_freq: int = None):
    """Random functions with coefficients in the middle of the box."""
    if max_freq is None:
        max_freq = max(1, grid.n_points // 4)
    out = []
    fr = grid.freqs_1d()
    keep_1d = np.abs(fr) <= max_freq
    keep = keep_1d
    for _ in range(grid.d - 1):
        keep = np.logical_and.outer(keep, keep_1d)
    for _ in range(count):
        shape = grid.spatial_shape + (grid.q, grid.q)
        coeffs = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        coeffs *= keep[(...,) + (None, None)]
        out.append(OpValuedFunction.from_coeffs(grid, coeffs))
    return out


def composition_remainder_report(
    sym1: Symbol, sym2: Symbol, n0_list=(1, 2, 3), panel: int = 6, seed: int = 0
) -> dict:
    """Operator error of the truncated composition on a band-limited panel.

    For each n0 the reported error is
    max_f ||T_sigma3 f - T_sym1 T_sym2 f||_2 / ||f||_2 over the panel.
    """
    from .pdo import apply_pdo
    from .norms import lp_norm

    g = sym1.grid
    rng = np.random.default_rng(seed)
    fns = _band_limited_panel(g, rng, panel)
    errors = {}
    for n0 in n0_list:
        sig3 = compose_symbols_asymptotic(sym1, sym2, n0)
        worst = 0.0
        for f in fns:
            truth = apply_pdo(sym1, apply_pdo(sym2, f))
            approx = apply_pdo(sig3, f)
            err = lp_norm(truth - approx, 2) / lp_norm(f, 2)
            worst = max(worst, err)
        errors[n0] = worst
    return {
        "errors": {str(k): float(v) for k, v in errors.items()},
        "panel": panel,
        "seed": seed,
        "monotone": bool(
            all(
                errors[a] >= errors[b] - 1e-12
                for a, b in zip(n0_list, n0_list[1:])
            )
        ),
        "method": "worst relative L2 operator error over band-limited panel",
    }


def adjoint_remainder_report(
    sym: Symbol, n0_list=(1, 2, 3), trials: int = 6, seed: int = 0
) -> dict:
    """Pairing residual |<T_adj f, g> - <f, T_sym g>| of the truncated adjoint."""
    from .pdo import apply_pdo, pairing
    from .norms import lp_norm

    g = sym.grid
    rng = np.random.default_rng(seed)
    fs = _band_limited_panel(g, rng, trials)
    gs = _band_limited_panel(g, rng, trials)
    residuals = {}
    for n0 in n0_list:
        adj = adjoint_symbol_asymptotic(sym, n0)
        worst = 0.0
        for f, gg in zip(fs, gs):
            lhs = pairing(apply_pdo(adj, f), gg)
            rhs = pairing(f, apply_pdo(sym, gg))
            worst = max(
                worst, abs(lhs - rhs) / (lp_norm(f, 2) * lp_norm(gg, 2))
            )
        residuals[n0] = worst
    return {
        "residuals": {str(k): float(v) for k, v in residuals.items()},
        "trials": trials,
        "seed": seed,
        "method": "normalized pairing residual over random band-limited pairs",
    }


# ---------------------------------------------------------------------------
# toroidal extension
# ---------------------------------------------------------------------------

def _zeta_raw(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    with np.errstate(over="ignore", under="ignore"):
        u = x[inside] ** 2
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - u))
    return out


def _zeta_hat_1d(x: np.ndarray) -> np.ndarray:
    """Smooth interpolation window: supp (-1,1), zeta(0) = 1, zeta(k) = 0 at
    other integers, and sum_k zeta(x - k) = 1 (neighbor-normalized bump)."""
    x = np.asarray(x, dtype=float)
    num = _zeta_raw(x)
    den = num + _zeta_raw(x - 1.0) + _zeta_raw(x + 1.0)
    out = np.zeros_like(num)
    nz = num > 0
    out[nz] = num[nz] / den[nz]
    return out


def extend_toroidal_symbol(sym: ToroidalSymbol) -> Symbol:
    """Interpolate lattice data to continuous frequencies.

    sigma~(s, xi) = sum_m zeta^(xi - m) sigma(s, m) with a window that is 1
    at 0 and vanishes at every other integer, so restriction back to the
    lattice reproduces the input bit-exactly.  The returned symbol carries
    the same lattice tables plus an xi_closure for off-lattice evaluation.
    """
    g = sym.grid
    fr = g.freqs_1d()

    def closure(s_idx: tuple, xi: np.ndarray) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        base = sym.s_slice(s_idx)  # (freq..., q, q)
        out = np.zeros(xi.shape[:-1] + (g.q, g.q), dtype=complex)
        for point, slot in zip(xi, out.reshape(-1, g.q, g.q)):
            lo = np.floor(point).astype(int)
            acc = np.zeros((g.q, g.q), dtype=complex)
            for corner in itertools.product((0, 1), repeat=g.d):
                m = lo + np.array(corner)
                if np.any(m < fr[0]) or np.any(m > fr[-1]):
                    continue
                w = float(np.prod(_zeta_hat_1d(point - m)))
                if w != 0.0:
                    idx = tuple(int(mi) + g.n_points // 2 for mi in m)
                    acc += w * base[idx]
            slot[...] = acc
        return out

    if sym.is_separable:
        ext = Symbol(
            g,
            sym.claim,
            terms=[(b, m.copy()) for b, m in sym.terms],
            name=f"ext({sym.name})",
        )
    else:
        ext = Symbol(g, sym.claim, values=sym.values.copy(), name=f"ext({sym.name})")
    ext.xi_closure = closure
    return ext


# ---------------------------------------------------------------------------
# exemplar factory
# ---------------------------------------------------------------------------

def _smoothstep(x: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, dtype=float)

    def half(u):
        out = np.zeros_like(u)
        pos = u > 0
        with np.errstate(over="ignore", under="ignore"):
            out[pos] = np.exp(-1.0 / u[pos])
        return out

    a = half(x)
    b = half(1.0 - x)
    return a / (a + b)


def _matrix_factor(cfg: dict, q: int) -> np.ndarray:
    mat = cfg.get("matrix")
    if mat is None:
        return np.eye(q, dtype=complex)
    arr = np.array(mat, dtype=complex)
    if arr.shape != (q, q):
        raise ValueError(f"matrix factor shape {arr.shape}, expected {(q, q)}")
    return arr


def _xi_profile(grid: GridSpec, cfg: dict) -> np.ndarray:
    kind = cfg.get("profile", "one")
    r = grid.freq_radius()
    mesh = grid.freq_mesh()
    if kind == "one":
        prof = np.ones_like(r)
    elif kind == "bessel":
        prof = (1.0 + r**2) ** (cfg.get("alpha", 0.0) / 2.0)
    elif kind == "riesz":
        c = cfg.get("c", 1.0)
        prof = mesh[0] / np.sqrt(c**2 + r**2)
    elif kind == "inverse_sqrt":
        c = cfg.get("c", 1.0)
        prof = 1.0 / np.sqrt(c**2 + r**2)
    elif kind == "angular":
        c = cfg.get("c", 1.0)
        prof = (mesh[0] ** 2 - mesh[min(1, grid.d - 1)] ** 2) / (c**2 + r**2)
    else:
        raise ValueError(f"unknown frequency profile {kind!r}")
    if cfg.get("taper", False):
        nhalf = grid.n_points / 2.0
        prof = prof * (1.0 - _smoothstep(2.0 * (r / nhalf) - 1.0))
    return prof


def _s_profile(grid: GridSpec, cfg: dict) -> np.ndarray:
    kind = cfg.get("s_profile", "one")
    coords = grid.coords()
    if kind == "one":
        return None
    if kind == "cosine":
        amp = cfg.get("amp", 0.5)
        k = cfg.get("k", [1] + [0] * (grid.d - 1))
        phase = sum(2.0 * np.pi * ki * c for ki, c in zip(k, coords))
        return 1.0 + amp * np.cos(phase)
    if kind == "modulation":
        k = cfg.get("k", [1] + [0] * (grid.d - 1))
        phase = sum(2.0 * np.pi * ki * c for ki, c in zip(k, coords))
        return np.exp(1j * phase)
    raise ValueError(f"unknown spatial profile {kind!r}")


def symbol_from_config(grid: GridSpec, cfg: dict) -> Symbol:
    """Build a shipped exemplar from a plain config mapping.

    kinds: multiplier | pointwise | bessel | band | exotic | custom-table.
    Every exemplar carries its claimed class; see configs/ for samples.
    """
    kind = cfg["kind"]
    name = cfg.get("name", kind)
    claim = tuple(cfg.get("claim", (0.0, 1.0, 0.0)))
    mat = _matrix_factor(cfg, grid.q)

    if kind == "multiplier":
        prof = _xi_profile(grid, cfg)
        sfac = _s_profile(grid, cfg)
        term = (sfac, prof[..., None, None] * mat)
        return Symbol(grid, claim, terms=[term], name=name)

    if kind == "pointwise":
        sfac = _s_profile(grid, {"s_profile": cfg.get("s_profile", "cosine"), **cfg})
        ones = np.ones(grid.spatial_shape)[..., None, None] * mat
        return Symbol(grid, claim, terms=[(sfac, ones)], name=name)

    if kind == "bessel":
        alpha = cfg.get("alpha", 0.0)
        prof = (1.0 + grid.freq_radius() ** 2) ** (alpha / 2.0)
        return Symbol(
            grid, (alpha, 1.0, 0.0), terms=[(None, prof[..., None, None] * mat)],
            name=name or f"bessel{alpha}",
        )

    if kind == "band":
        fam = build_family_cached(grid, cfg.get("lp_profile"))
        j = cfg.get("j", 1)
        tab = fam.hat_phi[j]
        sfac = _s_profile(grid, cfg)
        return Symbol(
            grid, claim, terms=[(sfac, tab[..., None, None] * mat)], name=name
        )

    if kind == "exotic":
        fam = build_family_cached(grid, cfg.get("lp_profile"))
        delta = cfg.get("delta", 1.0)
        coords = grid.coords()
        terms = []
        for j in range(1, fam.J + 1):
            hj = int(round(2.0 ** (j * delta)))
            mod = np.exp(2j * np.pi * hj * coords[0])
            terms.append((mod, fam.hat_phi[j][..., None, None] * mat))
        return Symbol(grid, (0.0, 1.0, delta), terms=terms, name=name)

    if kind == "custom-table":
        vals = np.asarray(cfg["values"], dtype=complex)
        return Symbol(grid, claim, values=vals, name=name)

    raise ValueError(f"unknown symbol kind {kind!r}")


_family_cache = {}


def build_family_cached(grid: GridSpec, profile: str = None) -> LPFamily:
    from . import lp as _lp
    from .lp import build_lp_family

    if profile is None:
        profile = _lp.DEFAULT_PROFILE
    key = (grid.d, grid.n_points, profile)
    if key not in _family_cache:
        _family_cache[key] = build_lp_family(GridSpec(grid.d, grid.n_points, 1), profile)
    return _family_cache[key]
