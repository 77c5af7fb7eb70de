"""Quantum torus: twisted coefficient algebra, clock-and-shift
representation for rational deformation, traces and L_p norms,
transference to matrix-valued torus functions, and square-function norms.

Elements are finite Fourier series x = sum_m xhat(m) U^m over the centered
frequency box, with complex scalar coefficients and the generator ordering
U^m = U_1^{m_1} ... U_d^{m_d}.  Under that ordering

    U^{m'} U^{m''} = c(m', m'') U^{m' + m''},
    c(m', m'') = exp(2 pi i sum_{k > j} theta_{kj} m'_k m''_j),

and the adjoint picks up (U^m)* = exp(2 pi i phi(m)) U^{-m} with
phi(m) = sum_{k > j} theta_{kj} m_k m_j.  Both phases are verified against
the d = 2 clock-and-shift matrices in the test suite; the representation
satisfies rep(U^m) = rep(U^{m mod q}) exactly, which the transference and
recovery routines rely on.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec, OpValuedFunction
from .lp import build_lp_family, torus_multipliers

__all__ = [
    "ThetaMatrix",
    "QTElement",
    "QTRepresentation",
    "qt_multiply",
    "qt_adjoint",
    "qt_trace",
    "qt_lp_norm",
    "transference_embed",
    "transference_recover",
    "conditional_expectation",
    "qt_pdo_apply",
    "qt_tl_norm",
    "qt_boundedness_sweep",
    "dump_qtelement",
    "load_qtelement",
]


@dataclass(frozen=True)
class ThetaMatrix:
    """Skew-symmetric deformation matrix, optionally tagged as rational.

    A rational tag stores integer numerators over a common denominator;
    matrix values are exactly numerators / denominator in that case.
    """

    matrix: tuple  # d x d floats, row tuples
    numerators: tuple = None  # d x d ints, row tuples, or None
    denominator: int = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("theta must be a square matrix")
        if np.abs(m + m.T).max() != 0.0:
            raise ValueError("theta must be exactly skew-symmetric")
        if (self.numerators is None) != (self.denominator is None):
            raise ValueError("rational tag needs both numerators and denominator")
        if self.numerators is not None:
            num = np.asarray(self.numerators, dtype=float)
            if not np.array_equal(num / self.denominator, m):
                raise ValueError("rational tag disagrees with matrix values")

    @property
    def d(self) -> int:
        return len(self.matrix)

    @property
    def is_rational(self) -> bool:
        return self.numerators is not None

    def values(self) -> np.ndarray:
        return np.asarray(self.matrix, dtype=float)

    @classmethod
    def zero(cls, d: int) -> "ThetaMatrix":
        zrow = tuple(0.0 for _ in range(d))
        irow = tuple(0 for _ in range(d))
        return cls(tuple(zrow for _ in range(d)),
                   tuple(irow for _ in range(d)), 1)

    @classmethod
    def standard_2d(cls, p: int, q: int) -> "ThetaMatrix":
        """theta_12 = p/q, the clock-and-shift pair."""
        if q <= 0:
            raise ValueError("denominator must be positive")
        return cls(((0.0, p / q), (-p / q, 0.0)), ((0, p), (-p, 0)), q)


def _cocycle(theta: np.ndarray, m1: np.ndarray, m2: np.ndarray) -> complex:
    """Phase normal-ordering U^{m1} U^{m2} into U^{m1+m2}."""
    acc = 0.0
    d = theta.shape[0]
    for k in range(d):
        for j in range(k):
            acc += theta[k, j] * m1[..., k] * m2[..., j]
    return np.exp(2j * np.pi * acc)


def _adjoint_phase(theta: np.ndarray, m: np.ndarray) -> complex:
    acc = 0.0
    d = theta.shape[0]
    for k in range(d):
        for j in range(k):
            acc += theta[k, j] * m[..., k] * m[..., j]
    return np.exp(2j * np.pi * acc)


@dataclass
class QTElement:
    """Finite Fourier series on the quantum torus.

    coeffs is indexed like a coefficient grid: axis index 0 is frequency
    -n/2, matching the frequency layout used everywhere else.
    """

    theta: ThetaMatrix
    coeffs: np.ndarray
    dropped_mass: float = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        d = self.theta.d
        if self.coeffs.ndim != d:
            raise ValueError(f"coefficient array must have {d} axes")
        n = self.coeffs.shape[0]
        if any(s != n for s in self.coeffs.shape):
            raise ValueError("coefficient box must be square")
        if n % 2:
            raise ValueError("box side must be even")

    @property
    def n_points(self) -> int:
        return self.coeffs.shape[0]

    @property
    def grid(self) -> GridSpec:
        return GridSpec(d=self.theta.d, n_points=self.n_points, q=1)

    def coeff_at(self, m) -> complex:
        n = self.n_points
        idx = tuple(int(mi) + n // 2 for mi in m)
        if any(not 0 <= i < n for i in idx):
            raise ValueError(f"frequency {tuple(m)} outside the box")
        return complex(self.coeffs[idx])

    @classmethod
    def monomial(cls, theta: ThetaMatrix, n_points: int, m, value=1.0) -> "QTElement":
        co = np.zeros((n_points,) * theta.d, dtype=complex)
        idx = tuple(int(mi) + n_points // 2 for mi in m)
        co[idx] = value
        return cls(theta, co)

    @classmethod
    def from_function(cls, f: OpValuedFunction, theta: ThetaMatrix) -> "QTElement":
        if f.grid.q != 1:
            raise ValueError("only scalar-fiber functions embed coefficientwise")
        return cls(theta, f.coeffs_grid[..., 0, 0].copy())

    def __add__(self, other):
        _check_compat(self, other)
        return QTElement(self.theta, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_compat(self, other)
        return QTElement(self.theta, self.coeffs - other.coeffs)

    def scaled(self, c) -> "QTElement":
        return QTElement(self.theta, c * self.coeffs)


def _check_compat(x: QTElement, y: QTElement):
    if x.theta != y.theta:
        raise ValueError("theta matrices differ")
    if x.n_points != y.n_points:
        raise ValueError("coefficient boxes differ")


class QTRepresentation:
    """Clock-and-shift matrices for rational theta in d = 2.

    U_1 = diag(1, omega, ..., omega^{q-1}) and U_2 the cyclic shift with
    omega = exp(2 pi i p / q) satisfy U_2 U_1 = exp(2 pi i theta_21) U_1 U_2
    and rep(U^m) = rep(U^{m mod q}) exactly.
    """

    def __init__(self, theta: ThetaMatrix):
        if not theta.is_rational:
            raise ValueError("matrix representation needs a rational tag")
        if theta.d != 2:
            raise ValueError("only d = 2 has a built-in matrix representation")
        self.theta = theta
        self.q = int(theta.denominator)
        p = int(theta.numerators[0][1])
        q = self.q
        omega = np.exp(2j * np.pi * p / q)
        self.unitaries = [
            np.diag(omega ** np.arange(q)).astype(complex),
            np.roll(np.eye(q, dtype=complex), 1, axis=0),
        ]

    def of_residue(self, r) -> np.ndarray:
        """rep(U^r) for r with components in [0, q)."""
        U1, U2 = self.unitaries
        return np.linalg.matrix_power(U1, int(r[0])) @ np.linalg.matrix_power(
            U2, int(r[1])
        )

    def of(self, m) -> np.ndarray:
        return self.of_residue(np.asarray(m, dtype=int) % self.q)

    def residues(self):
        return list(itertools.product(range(self.q), repeat=2))


def qt_multiply(x: QTElement, y: QTElement) -> QTElement:
    """Twisted convolution; products leaving the box are dropped and the
    dropped coefficient mass is recorded on the result."""
    _check_compat(x, y)
    theta = x.theta.values()
    n = x.n_points
    d = x.theta.d
    half = n // 2
    out = np.zeros_like(x.coeffs)
    dropped = 0.0
    freqs = np.arange(-half, half)
    mesh = np.stack(np.meshgrid(*([freqs] * d), indexing="ij"), axis=-1)
    nz = np.argwhere(x.coeffs != 0)
    for idx in nz:
        m1 = idx - half
        val = x.coeffs[tuple(idx)]
        phase = val * _cocycle(theta, m1.astype(float), mesh.astype(float))
        contrib = phase * y.coeffs
        # shift by m1: target m = m1 + m'', clipped to the box
        src = [slice(max(0, -m1[a]), min(n, n - m1[a])) for a in range(d)]
        dst = [slice(max(0, m1[a]), min(n, n + m1[a])) for a in range(d)]
        out[tuple(dst)] += contrib[tuple(src)]
        lost = np.abs(contrib).sum() - np.abs(contrib[tuple(src)]).sum()
        dropped += max(lost, 0.0)
    return QTElement(x.theta, out, dropped_mass=float(dropped))


def qt_adjoint(x: QTElement) -> QTElement:
    """x* with coefficients conj(xhat(-m)) exp(2 pi i phi(m)).

    The -n/2 rows have no mirror in the centered box; their mass is
    dropped and recorded.
    """
    theta = x.theta.values()
    n = x.n_points
    d = x.theta.d
    interior = tuple(slice(1, n) for _ in range(d))
    flipped = np.zeros_like(x.coeffs)
    flipped[interior] = np.flip(x.coeffs[interior], axis=tuple(range(d)))
    freqs = np.arange(-(n // 2), n // 2)
    mesh = np.stack(np.meshgrid(*([freqs] * d), indexing="ij"), axis=-1)
    out = np.conj(flipped) * _adjoint_phase(theta, mesh.astype(float))
    dropped = float(np.abs(x.coeffs).sum() - np.abs(flipped).sum())
    return QTElement(x.theta, out, dropped_mass=max(dropped, 0.0))


def qt_trace(x: QTElement) -> complex:
    """tau(x) = the coefficient at frequency 0 (faithful tracial state)."""
    return x.coeff_at((0,) * x.theta.d)


def transference_embed(x: QTElement, rep: QTRepresentation = None) -> OpValuedFunction:
    """x~(z) = sum_m xhat(m) z^m rep(U^m), a matrix-valued torus function.

    Assembled residue class by residue class: rep(U^m) depends only on
    m mod q, so each class contributes an ordinary Fourier sum times a
    fixed unitary.
    """
    rep = rep or QTRepresentation(x.theta)
    n = x.n_points
    grid1 = x.grid
    gq = GridSpec(d=x.theta.d, n_points=n, q=rep.q)
    half = n // 2
    freqs = np.arange(-half, half)
    mesh = np.stack(np.meshgrid(*([freqs] * x.theta.d), indexing="ij"), axis=-1)
    res = mesh % rep.q
    samples = np.zeros(gq.spatial_shape + (rep.q, rep.q), dtype=complex)
    for r in rep.residues():
        mask = np.all(res == np.asarray(r), axis=-1)
        if not mask.any():
            continue
        co = np.where(mask, x.coeffs, 0.0)[..., None, None]
        fld = OpValuedFunction.from_coeffs(grid1, co).samples_grid[..., 0, 0]
        samples += fld[..., None, None] * rep.of_residue(r)
    return OpValuedFunction.from_samples(gq, samples)


def transference_recover(f: OpValuedFunction, theta: ThetaMatrix,
                         rep: QTRepresentation = None, tol: float = 1e-8) -> QTElement:
    """Invert transference_embed on its image.

    Expands f(z) pointwise in the orthonormal basis rep(U^r) under the
    normalized trace, Fourier-transforms each coefficient field in z, and
    reads off xhat(k) from the residue class r = k mod q.  Components with
    r != k mod q vanish on embedded elements; their mass is reported via
    dropped_mass and a warning-level check against tol.
    """
    rep = rep or QTRepresentation(theta)
    n = f.grid.n_points
    grid1 = GridSpec(d=theta.d, n_points=n, q=1)
    half = n // 2
    freqs = np.arange(-half, half)
    mesh = np.stack(np.meshgrid(*([freqs] * theta.d), indexing="ij"), axis=-1)
    res = mesh % rep.q
    out = np.zeros((n,) * theta.d, dtype=complex)
    off_mass = 0.0
    for r in rep.residues():
        ur = rep.of_residue(r)
        fr = np.einsum("ba,...ba->...", ur.conj(), f.samples_grid) / rep.q
        co = OpValuedFunction.from_samples(
            grid1, fr[..., None, None]
        ).coeffs_grid[..., 0, 0]
        mask = np.all(res == np.asarray(r), axis=-1)
        out[mask] = co[mask]
        off_mass += float(np.abs(np.where(mask, 0.0, co)).sum())
    x = QTElement(theta, out, dropped_mass=off_mass)
    if off_mass > tol * max(np.abs(out).sum(), 1e-300):
        x.dropped_mass = off_mass
    return x


def qt_lp_norm(x: QTElement, p, rep: QTRepresentation = None) -> float:
    """L_p norm with the normalized trace: tau tensor tr/q on fibers.

    p = 2 is the plain coefficient l2 norm; p in {1, inf} go through the
    transferred matrix field (rational theta only).
    """
    if p == 2:
        return float(np.sqrt((np.abs(x.coeffs) ** 2).sum()))
    if p not in (1, np.inf, "inf"):
        raise ValueError("p must be 1, 2, or inf")
    if not x.theta.is_rational:
        raise ValueError("p != 2 norms need a rational theta")
    rep = rep or QTRepresentation(x.theta)
    tilde = transference_embed(x, rep)
    sv = np.linalg.svd(tilde.samples_grid, compute_uv=False)
    if p == 1:
        return float((sv.sum(axis=-1) / rep.q).mean())
    return float(sv[..., 0].max())


def conditional_expectation(f: OpValuedFunction, theta: ThetaMatrix,
                            rep: QTRepresentation = None) -> OpValuedFunction:
    """Projection of a matrix-valued torus function onto the embedded image.

    In the joint decomposition f(z) = sum_{r,k} fhat_r(k) z^k rep(U^r) the
    embedded elements are exactly the components with k = r mod q; the
    expectation keeps those and kills the rest.  It is idempotent, trace
    preserving, and an L2 contraction (orthogonal projection).
    """
    rep = rep or QTRepresentation(theta)
    if f.grid.q != rep.q:
        raise ValueError("fiber size does not match the representation")
    n = f.grid.n_points
    grid1 = GridSpec(d=theta.d, n_points=n, q=1)
    half = n // 2
    freqs = np.arange(-half, half)
    mesh = np.stack(np.meshgrid(*([freqs] * theta.d), indexing="ij"), axis=-1)
    res = mesh % rep.q
    samples = np.zeros_like(f.samples_grid)
    for r in rep.residues():
        ur = rep.of_residue(r)
        fr = np.einsum("ba,...ba->...", ur.conj(), f.samples_grid) / rep.q
        co = OpValuedFunction.from_samples(
            grid1, fr[..., None, None]
        ).coeffs_grid[..., 0, 0]
        mask = np.all(res == np.asarray(r), axis=-1)
        kept = OpValuedFunction.from_coeffs(
            grid1, np.where(mask, co, 0.0)[..., None, None]
        ).samples_grid[..., 0, 0]
        samples += kept[..., None, None] * ur
    return OpValuedFunction.from_samples(f.grid, samples)


def qt_pdo_apply(sigma, x: QTElement) -> QTElement:
    """Column operator T_sigma x = sum_m sigma(m) xhat(m) U^m.

    sigma maps a frequency tuple to either a complex scalar (Fourier
    multiplier, acting diagonally) or a QTElement (operator coefficient,
    expanded through the twisted product).
    """
    n = x.n_points
    d = x.theta.d
    half = n // 2
    probe = sigma(tuple(0 for _ in range(d)))
    if np.isscalar(probe) or isinstance(probe, complex):
        out = np.zeros_like(x.coeffs)
        for idx in itertools.product(range(n), repeat=d):
            if x.coeffs[idx] == 0:
                continue
            m = tuple(i - half for i in idx)
            out[idx] = complex(sigma(m)) * x.coeffs[idx]
        return QTElement(x.theta, out)
    acc = np.zeros_like(x.coeffs)
    dropped = 0.0
    for idx in itertools.product(range(n), repeat=d):
        if x.coeffs[idx] == 0:
            continue
        m = tuple(i - half for i in idx)
        mono = QTElement.monomial(x.theta, n, m, value=x.coeffs[idx])
        term = qt_multiply(sigma(m), mono)
        acc += term.coeffs
        dropped += term.dropped_mass
    return QTElement(x.theta, acc, dropped_mass=dropped)


def _qt_band_fields(x: QTElement, fam, torus: bool):
    tables = torus_multipliers(fam) if torus else fam.hat_phi
    return [QTElement(x.theta, t * x.coeffs) for t in tables]


def qt_tl_norm(x: QTElement, alpha: float, p, fam=None,
               rep: QTRepresentation = None) -> float:
    """Quantum column Triebel-Lizorkin norm, matching the commutative
    construction fiberwise.

    finite p: |xhat(0)| plus the L_p norm (normalized trace) of the dyadic
    square function over the torus-restricted bands.  p = 2 reduces to
    weighted coefficients; p = 1 assembles the square function pointwise
    in the transferred picture.

    p = inf: sup operator norm of the transferred level-0 band (mean
    kept), plus the max over dyadic cubes of side 2^-k of the operator
    norm of the cube-averaged tail square function, mirroring the
    commutative branch.
    """
    grid1 = x.grid
    fam = fam or build_lp_family(grid1)
    if fam.grid.n_points != grid1.n_points or fam.grid.d != grid1.d:
        raise ValueError("family grid does not match the element box")
    if p == 2:
        bands = _qt_band_fields(x, fam, torus=True)
        body_sq = sum(
            4.0 ** (alpha * j) * (np.abs(b.coeffs) ** 2).sum()
            for j, b in enumerate(bands)
        )
        return abs(qt_trace(x)) + float(np.sqrt(body_sq))
    if p not in (1, np.inf, "inf"):
        raise ValueError("p must be 1, 2, or inf")
    if not x.theta.is_rational:
        raise ValueError("p != 2 norms need a rational theta")
    rep = rep or QTRepresentation(x.theta)

    if p == 1:
        bands = _qt_band_fields(x, fam, torus=True)
        sq = None
        for j, b in enumerate(bands):
            fld = transference_embed(b, rep).samples_grid
            term = 4.0 ** (alpha * j) * np.einsum(
                "...ba,...bc->...ac", fld.conj(), fld
            )
            sq = term if sq is None else sq + term
        eigs = np.clip(np.linalg.eigvalsh(sq), 0.0, None)
        body = float((np.sqrt(eigs).sum(axis=-1) / rep.q).mean())
        return abs(qt_trace(x)) + body

    # p = inf: Euclidean bands, mean kept in the level-0 head
    bands = _qt_band_fields(x, fam, torus=False)
    fields = [transference_embed(b, rep).samples_grid for b in bands]
    head = float(np.linalg.svd(fields[0], compute_uv=False)[..., 0].max())
    sq = [
        4.0 ** (alpha * j) * np.einsum("...ba,...bc->...ac", fl.conj(), fl)
        for j, fl in enumerate(fields)
    ]
    n, d, qd = grid1.n_points, grid1.d, rep.q
    best = 0.0
    for k in range(1, fam.J + 1):
        tail = sum(sq[k:])
        side = n // 2**k
        shape = sum(([2**k, side] for _ in range(d)), []) + [qd, qd]
        blocks = tail.reshape(shape)
        avg_axes = tuple(2 * i + 1 for i in range(d))
        means = blocks.mean(axis=avg_axes)
        ops = np.linalg.svd(means, compute_uv=False)[..., 0]
        best = max(best, float(np.sqrt(ops.max())))
    return head + best


def qt_boundedness_sweep(symbol_cfg: dict, alpha: float, p, sizes,
                         theta_pq=(1, 3), trials: int = 4, seed: int = 0) -> dict:
    """Norm-ratio lower bounds for a scalar multiplier acting on the
    quantum torus, across growing coefficient boxes.

    Random band-limited polynomials (support |m|_inf <= n/4) probe the
    ratio qt_tl_norm(T x) / qt_tl_norm(x); the per-size maxima and their
    overall growth are reported.
    """
    from .symbol import symbol_from_config

    theta = ThetaMatrix.standard_2d(*theta_pq)
    rows = []
    rng = np.random.default_rng(seed)
    for n in sizes:
        grid1 = GridSpec(d=2, n_points=int(n), q=1)
        sym = symbol_from_config(grid1, symbol_cfg)
        table = sym.s_slice((0,) * 2)[..., 0, 0]
        fam = build_lp_family(grid1)
        rep = QTRepresentation(theta)
        half, quarter = n // 2, max(n // 4, 1)
        best = 0.0
        for _ in range(trials):
            co = np.zeros((n,) * 2, dtype=complex)
            lo, hi = half - quarter, half + quarter
            block = rng.standard_normal((hi - lo,) * 2) + 1j * rng.standard_normal(
                (hi - lo,) * 2
            )
            co[lo:hi, lo:hi] = block
            x = QTElement(theta, co)
            tx = QTElement(theta, table * co)
            den = qt_tl_norm(x, alpha, p, fam=fam, rep=rep)
            num = qt_tl_norm(tx, alpha, p, fam=fam, rep=rep)
            if den > 0:
                best = max(best, num / den)
        rows.append({"size": int(n), "alpha": float(alpha), "p": str(p),
                     "ratio": float(best), "seed": seed})
    ratios = [r["ratio"] for r in rows]
    growth = max(ratios) / max(min(ratios), 1e-300)
    return {
        "rows": rows,
        "growth": float(growth),
        "passed": bool(growth <= 2.0),
        "theta": {"p": theta_pq[0], "q": theta_pq[1]},
        "method": "random band-limited polynomials, ratio lower bounds",
    }


# ---------------------------------------------------------------------------
# element container
# ---------------------------------------------------------------------------

def dump_qtelement(x: QTElement, path) -> None:
    """Write one element: JSON header {d, box, theta}, then the complex64
    coefficient array.  Same framing as the function container."""
    import json
    from . import grid as _grid

    if not x.theta.is_rational:
        raise ValueError("element dumps need a rational theta tag")
    header = {
        "kind": "qtelement",
        "d": x.theta.d,
        "box": x.n_points,
        "theta_numerators": [list(row) for row in x.theta.numerators],
        "theta_denominator": x.theta.denominator,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(_grid._MAGIC)
        fh.write(len(hbytes).to_bytes(4, "little"))
        fh.write(hbytes)
        fh.write(np.ascontiguousarray(x.coeffs).astype("<c8").tobytes())


def load_qtelement(path) -> QTElement:
    """Read an element written by `dump_qtelement`."""
    import json
    from . import grid as _grid

    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _grid._MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        hlen = int.from_bytes(fh.read(4), "little")
        header = json.loads(fh.read(hlen).decode())
        if header.get("kind") != "qtelement":
            raise ValueError(f"{path}: not an element record")
        d, n = header["d"], header["box"]
        nums = tuple(tuple(int(v) for v in row)
                     for row in header["theta_numerators"])
        den = int(header["theta_denominator"])
        mat = tuple(tuple(v / den for v in row) for row in nums)
        theta = ThetaMatrix(mat, nums, den)
        raw = fh.read(n**d * 8)
        if len(raw) != n**d * 8 or fh.read(1):
            raise ValueError(f"{path}: payload size does not match header")
    co = np.frombuffer(raw, dtype="<c8").reshape((n,) * d).astype(complex)
    return QTElement(theta, co)
