"""Norms for operator-valued functions on the torus.

All integrals are uniform Riemann sums (weight 1/n^d per sample) and the
trace on the matrix fiber is the unnormalized Tr.  Littlewood-Paley based
norms take a band family; by default the cached "bump-v1" family for the
function's grid is used.

Convention for the inhomogeneous Triebel-Lizorkin and Besov scales: the
mean f^(0) contributes through a separate Schatten term and the level-0
band has its origin cell removed, so every band sees only nonzero
frequencies.  The exception is p = infinity, where the level-0 band keeps
the mean and the tail is measured by averages over dyadic cubes.
"""

from __future__ import annotations

import numpy as np

from .grid import GridSpec, OpValuedFunction
from .lp import LPFamily, torus_multipliers
from .symbol import build_family_cached

__all__ = [
    "schatten_norm",
    "lp_norm",
    "l1_l2c_norm",
    "sobolev_h2_norm",
    "bessel_potential",
    "triebel_lizorkin_norm",
    "hardy_h1c_norm",
    "besov_norm",
    "parse_space",
    "evaluate_norm",
    "SPACE_GRAMMAR",
]

def _psd_eigs(mats: np.ndarray) -> np.ndarray:
    """Eigenvalues of a stack of (numerically) PSD matrices, clipped at 0.

    Rounding leaves eigenvalue dust of relative size ~1e-14; anything more
    negative than 1e-10 relative means the input was not PSD.
    """
    vals = np.linalg.eigvalsh(mats)
    lo = float(vals.min(initial=0.0))
    hi = float(vals.max(initial=0.0))
    if lo < -1e-10 * max(1.0, hi):
        raise ValueError("matrix stack is not positive semidefinite")
    return np.clip(vals, 0.0, None)


def schatten_norm(mat: np.ndarray, p) -> float:
    """Schatten-p norm of a single matrix (p = inf gives the operator norm)."""
    s = np.linalg.svd(np.atleast_2d(mat), compute_uv=False)
    if np.isinf(p):
        return float(s.max())
    return float((s**p).sum() ** (1.0 / p))


def lp_norm(f: OpValuedFunction, p) -> float:
    """L_p norm with the Schatten-p fiber norm.

    finite p: ( integral Tr[(f* f)^(p/2)] ds )^(1/p); p = inf: sup of the
    pointwise operator norm.
    """
    samples = f.samples_grid
    sing = np.linalg.svd(samples, compute_uv=False)
    if np.isinf(p):
        return float(sing[..., 0].max())
    if p <= 0:
        raise ValueError("p must be positive")
    g = f.grid
    return float(((sing**p).sum() * g.volume_element) ** (1.0 / p))


def l1_l2c_norm(f: OpValuedFunction) -> float:
    """Mixed column norm: Tr of the square root of the Gram integral.

    ||f|| = Tr[( integral f(s)* f(s) ds )^(1/2)], the L_1(L_2^c) norm.
    """
    g = f.grid
    samples = f.samples
    gram = np.einsum("sab,sac->sbc", np.conj(samples), samples).sum(axis=0)
    gram *= g.volume_element
    eigs = _psd_eigs(gram[None])[0]
    return float(np.sqrt(eigs).sum())


def sobolev_h2_norm(f: OpValuedFunction, alpha: float) -> float:
    """( sum_m (1+|m|^2)^alpha Tr |f^(m)|^2 )^(1/2)."""
    g = f.grid
    coeffs = f.coeffs_grid
    weight = (1.0 + g.freq_radius() ** 2) ** alpha
    energy = np.abs(coeffs) ** 2
    energy = energy.sum(axis=(-1, -2))
    return float(np.sqrt((weight * energy).sum()))


def bessel_potential(f: OpValuedFunction, alpha: float) -> OpValuedFunction:
    """Coefficient multiplier (1+|m|^2)^(alpha/2)."""
    g = f.grid
    weight = (1.0 + g.freq_radius() ** 2) ** (alpha / 2.0)
    coeffs = f.coeffs_grid * weight[(...,) + (None, None)]
    return OpValuedFunction.from_coeffs(g, coeffs)


def _band_fields(f: OpValuedFunction, fam: LPFamily, torus: bool) -> list:
    """phi_j * f for j = 0..J as sample-grid fields."""
    tables = torus_multipliers(fam) if torus else fam.hat_phi
    coeffs = f.coeffs_grid
    g = f.grid
    out = []
    for tab in tables:
        piece = coeffs * tab[(...,) + (None, None)]
        out.append(
            np.fft.ifftn(
                np.fft.ifftshift(piece, axes=tuple(range(g.d))),
                axes=tuple(range(g.d)),
            )
            * g.n_sites
        )
    return out


def _fam_for(f: OpValuedFunction, fam: LPFamily | None) -> LPFamily:
    if fam is not None:
        if fam.grid.n_points != f.grid.n_points or fam.grid.d != f.grid.d:
            raise ValueError("band family was built for a different grid")
        return fam
    return build_family_cached(f.grid)


def triebel_lizorkin_norm(
    f: OpValuedFunction, alpha: float, p, fam: LPFamily = None
) -> float:
    """Column Triebel-Lizorkin norm F_p^alpha, p in {1, 2, inf} or other finite p.

    finite p:  ||f^(0)||_{S_p} + || ( sum_j 4^{j alpha} |phi_j*f|^2 )^(1/2) ||_{L_p}
    with |g|^2 = g* g (column square function) and the level-0 band taken
    without the mean.

    p = inf:   sup-norm of the level-0 band (mean kept) plus the max over
    dyadic cubes Q of side 2^(-k), 1 <= k <= J, of
        || |Q|^(-1) integral_Q sum_{j >= k} 4^{j alpha} |phi_j*f|^2 ds ||^(1/2).
    """
    g = f.grid
    fam = _fam_for(f, fam)
    if np.isinf(p):
        fields = _band_fields(f, fam, torus=False)
        head = float(np.linalg.svd(fields[0], compute_uv=False)[..., 0].max())
        best = 0.0
        sq = [
            np.einsum("...ab,...ac->...bc", np.conj(fl), fl) * 4.0 ** (j * alpha)
            for j, fl in enumerate(fields)
        ]
        for k in range(1, fam.J + 1):
            tail = sum(sq[k:])
            side = g.n_points // 2**k
            shape = sum(([2**k, side] for _ in range(g.d)), []) + [g.q, g.q]
            blocks = tail.reshape(shape)
            avg_axes = tuple(2 * i + 1 for i in range(g.d))
            means = blocks.mean(axis=avg_axes)  # (2^k,)*d + (q,q)
            ops = np.linalg.svd(means, compute_uv=False)[..., 0]
            best = max(best, float(np.sqrt(ops.max())))
        return head + best

    head = schatten_norm(f.coeff_at((0,) * g.d), p)
    fields = _band_fields(f, fam, torus=True)
    sq = sum(
        np.einsum("...ab,...ac->...bc", np.conj(fl), fl) * 4.0 ** (j * alpha)
        for j, fl in enumerate(fields)
    )
    eigs = _psd_eigs(sq)
    tail = float(((eigs ** (p / 2.0)).sum() * g.volume_element) ** (1.0 / p))
    return head + tail


def hardy_h1c_norm(f: OpValuedFunction, fam: LPFamily = None) -> float:
    """Column Hardy space norm h_1^c = F_1^0."""
    return triebel_lizorkin_norm(f, 0.0, 1, fam)


def besov_norm(
    f: OpValuedFunction, alpha: float, p, q, fam: LPFamily = None
) -> float:
    """Besov norm: ||f^(0)||_{S_p} + ( sum_j 2^{j q alpha} ||phi_j*f||_p^q )^(1/q)."""
    g = f.grid
    fam = _fam_for(f, fam)
    head = schatten_norm(f.coeff_at((0,) * g.d), p)
    fields = _band_fields(f, fam, torus=True)
    band_norms = []
    for fl in fields:
        sing = np.linalg.svd(fl, compute_uv=False)
        if np.isinf(p):
            band_norms.append(float(sing[..., 0].max()))
        else:
            band_norms.append(float(((sing**p).sum() * g.volume_element) ** (1.0 / p)))
    weights = [2.0 ** (j * alpha) for j in range(len(band_norms))]
    if np.isinf(q):
        tail = max(w * b for w, b in zip(weights, band_norms))
    else:
        tail = sum((w * b) ** q for w, b in zip(weights, band_norms)) ** (1.0 / q)
    return head + tail


# ---------------------------------------------------------------------------
# space tokens
# ---------------------------------------------------------------------------

SPACE_GRAMMAR = (
    "L1 | L2 | Linf | L1L2c | h1c | H2:alpha | F{1,2,inf}:alpha | "
    "B{p},{q}:alpha  (p, q in {1, 2, inf})"
)


def _parse_p(tok: str):
    if tok == "inf":
        return np.inf
    return float(tok) if "." in tok else int(tok)


def parse_space(token: str) -> dict:
    """Parse a norm-space token; see SPACE_GRAMMAR for the accepted forms."""
    token = token.strip()
    base, _, alpha_part = token.partition(":")
    alpha = float(alpha_part) if alpha_part else 0.0
    if base in ("L1", "L2", "Linf"):
        if alpha_part:
            raise ValueError(f"{base} takes no smoothness parameter")
        return {"family": "lebesgue", "p": _parse_p(base[1:]), "token": token}
    if base == "L1L2c":
        return {"family": "mixed-column", "token": token}
    if base == "h1c":
        return {"family": "hardy-column", "token": token}
    if base == "H2":
        return {"family": "sobolev", "alpha": alpha, "token": token}
    if base.startswith("F"):
        return {
            "family": "triebel-lizorkin",
            "p": _parse_p(base[1:]),
            "alpha": alpha,
            "token": token,
        }
    if base.startswith("B"):
        p_tok, _, q_tok = base[1:].partition(",")
        if not q_tok:
            raise ValueError(f"Besov token needs p,q: {token!r}")
        return {
            "family": "besov",
            "p": _parse_p(p_tok),
            "q": _parse_p(q_tok),
            "alpha": alpha,
            "token": token,
        }
    raise ValueError(f"unknown space token {token!r}; grammar: {SPACE_GRAMMAR}")


def evaluate_norm(f: OpValuedFunction, space, fam: LPFamily = None) -> float:
    """Evaluate the norm named by a token (or parsed token dict) on f."""
    spec = parse_space(space) if isinstance(space, str) else space
    fam_kind = spec["family"]
    if fam_kind == "lebesgue":
        return lp_norm(f, spec["p"])
    if fam_kind == "mixed-column":
        return l1_l2c_norm(f)
    if fam_kind == "hardy-column":
        return hardy_h1c_norm(f, fam)
    if fam_kind == "sobolev":
        return sobolev_h2_norm(f, spec["alpha"])
    if fam_kind == "triebel-lizorkin":
        return triebel_lizorkin_norm(f, spec["alpha"], spec["p"], fam)
    if fam_kind == "besov":
        return besov_norm(f, spec["alpha"], spec["p"], spec["q"], fam)
    raise ValueError(f"unknown family {fam_kind!r}")
