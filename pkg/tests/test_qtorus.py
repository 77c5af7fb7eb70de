"""Quantum torus: representation calibration, twisted product, traces,
transference, conditional expectation, and square-function norms."""

import numpy as np
import pytest

from ncpdo.grid import GridSpec, OpValuedFunction
from ncpdo.lp import build_lp_family
from ncpdo.norms import lp_norm, triebel_lizorkin_norm
from ncpdo.pdo import apply_pdo
from ncpdo.qtorus import (
    QTElement,
    QTRepresentation,
    ThetaMatrix,
    conditional_expectation,
    qt_adjoint,
    qt_boundedness_sweep,
    qt_lp_norm,
    qt_multiply,
    qt_pdo_apply,
    qt_tl_norm,
    qt_trace,
    transference_embed,
    transference_recover,
)
from ncpdo.symbol import Symbol

THETA = ThetaMatrix.standard_2d(1, 3)
N = 16


@pytest.fixture(scope="module")
def rep():
    return QTRepresentation(THETA)


def rand_element(rng, width=3, n=N, theta=THETA):
    co = np.zeros((n,) * theta.d, dtype=complex)
    h = n // 2
    sl = slice(h - width, h + width + 1)
    w = 2 * width + 1
    co[sl, sl] = rng.standard_normal((w, w)) + 1j * rng.standard_normal((w, w))
    return QTElement(theta, co)


def honest_rep_matrix(rep, m):
    """rep(U^m) by raw ordered matrix powers, negatives via adjoints."""

    def mpow(U, k):
        if k >= 0:
            return np.linalg.matrix_power(U, k)
        return np.linalg.matrix_power(U.conj().T, -k)

    U1, U2 = rep.unitaries
    return mpow(U1, int(m[0])) @ mpow(U2, int(m[1]))


class TestThetaMatrix:
    def test_standard_values(self):
        assert THETA.values()[0, 1] == pytest.approx(1.0 / 3.0)
        assert THETA.is_rational and THETA.denominator == 3

    def test_skew_enforced(self):
        with pytest.raises(ValueError):
            ThetaMatrix(((0.0, 0.5), (0.5, 0.0)))

    def test_rational_tag_consistency(self):
        with pytest.raises(ValueError):
            ThetaMatrix(((0.0, 0.5), (-0.5, 0.0)), ((0, 1), (-1, 0)), 3)

    def test_zero(self):
        z = ThetaMatrix.zero(2)
        assert z.is_rational and np.all(z.values() == 0.0)


class TestRepresentation:
    def test_commutation_identity(self, rep):
        U1, U2 = rep.unitaries
        phase = np.exp(2j * np.pi * THETA.values()[1, 0])
        assert np.abs(U2 @ U1 - phase * U1 @ U2).max() < 1e-12

    def test_unitarity(self, rep):
        for U in rep.unitaries:
            assert np.abs(U @ U.conj().T - np.eye(rep.q)).max() < 1e-12

    def test_periodicity_exact(self, rep):
        rng = np.random.default_rng(3)
        for _ in range(20):
            m = rng.integers(-9, 10, size=2)
            lhs = honest_rep_matrix(rep, m)
            assert np.abs(lhs - rep.of(m)).max() < 1e-12

    def test_requires_rational_and_2d(self):
        irr = ThetaMatrix(((0.0, 0.1234), (-0.1234, 0.0)))
        with pytest.raises(ValueError):
            QTRepresentation(irr)
        with pytest.raises(ValueError):
            QTRepresentation(ThetaMatrix.zero(3))


class TestTwistedProduct:
    def test_cocycle_matches_representation(self, rep):
        # the matrix representation is the oracle for the cocycle phase
        rng = np.random.default_rng(1)
        x, y = rand_element(rng), rand_element(rng)
        z = qt_multiply(x, y)
        X, Y = transference_embed(x, rep), transference_embed(y, rep)
        prod = np.einsum("...ab,...bc->...ac", X.samples_grid, Y.samples_grid)
        z2 = transference_recover(
            OpValuedFunction.from_samples(X.grid, prod), THETA, rep
        )
        assert np.abs(z.coeffs - z2.coeffs).max() < 1e-10
        assert z2.dropped_mass < 1e-9

    def test_generator_swap_phase(self):
        u1 = QTElement.monomial(THETA, N, (1, 0))
        u2 = QTElement.monomial(THETA, N, (0, 1))
        fwd = qt_multiply(u1, u2).coeff_at((1, 1))
        rev = qt_multiply(u2, u1).coeff_at((1, 1))
        phase = np.exp(2j * np.pi * THETA.values()[1, 0])
        assert abs(rev - phase * fwd) < 1e-12

    def test_scalar_factor(self):
        rng = np.random.default_rng(2)
        x = rand_element(rng)
        one = QTElement.monomial(THETA, N, (0, 0), value=2.5)
        z = qt_multiply(one, x)
        assert np.abs(z.coeffs - 2.5 * x.coeffs).max() < 1e-14
        z = qt_multiply(x, one)
        assert np.abs(z.coeffs - 2.5 * x.coeffs).max() < 1e-14

    def test_unitarity_in_algebra(self):
        for m in ((2, 1), (-3, 2), (5, -4)):
            um = QTElement.monomial(THETA, N, m)
            pr = qt_multiply(qt_adjoint(um), um)
            assert abs(qt_trace(pr) - 1.0) < 1e-12
            off = np.abs(pr.coeffs).sum() - abs(qt_trace(pr))
            assert off < 1e-12

    def test_truncation_recorded(self):
        um = QTElement.monomial(THETA, N, (7, 0))
        z = qt_multiply(um, um)  # lands at (14, 0), outside the box
        assert np.abs(z.coeffs).max() == 0.0
        assert z.dropped_mass == pytest.approx(1.0)

    def test_theta_mismatch(self):
        x = QTElement.monomial(THETA, N, (1, 0))
        y = QTElement.monomial(ThetaMatrix.zero(2), N, (1, 0))
        with pytest.raises(ValueError):
            qt_multiply(x, y)


class TestAdjointAndTrace:
    def test_adjoint_matches_representation(self, rep):
        rng = np.random.default_rng(4)
        x = rand_element(rng)
        lhs = transference_embed(qt_adjoint(x), rep).samples_grid
        rhs = transference_embed(x, rep).samples_grid.conj().swapaxes(-1, -2)
        assert np.abs(lhs - rhs).max() < 1e-12

    def test_trace_values(self):
        one = QTElement.monomial(THETA, N, (0, 0))
        assert qt_trace(one) == 1.0
        um = QTElement.monomial(THETA, N, (3, -2))
        assert qt_trace(um) == 0.0
        assert qt_lp_norm(um, 2) == pytest.approx(1.0)

    def test_trace_compatibility(self, rep):
        # integral of tr_q over the transferred field recovers tau
        rng = np.random.default_rng(5)
        x = rand_element(rng)
        tilde = transference_embed(x, rep)
        val = np.einsum("...aa->...", tilde.samples_grid).mean() / rep.q
        assert abs(val - qt_trace(x)) < 1e-10

    def test_clock_plus_shift_l2(self, rep):
        x = QTElement.monomial(THETA, N, (1, 0)) + QTElement.monomial(
            THETA, N, (0, 1)
        )
        assert qt_lp_norm(x, 2) == pytest.approx(np.sqrt(2.0), abs=1e-10)
        prod = qt_multiply(qt_adjoint(x), x)
        assert qt_trace(prod) == pytest.approx(2.0, abs=1e-12)
        # representation path
        tilde = transference_embed(x, rep)
        sv = np.linalg.svd(tilde.samples_grid, compute_uv=False)
        rep_l2 = float(np.sqrt(((sv**2).sum(axis=-1) / rep.q).mean()))
        assert abs(rep_l2 - np.sqrt(2.0)) < 1e-10


class TestTransference:
    @pytest.mark.parametrize("p,factor", [(1, 3.0**-1), (2, 3.0**-0.5), (np.inf, 1.0)])
    def test_lp_isometry(self, rep, p, factor):
        rng = np.random.default_rng(6)
        x = rand_element(rng)
        lhs = qt_lp_norm(x, p, rep)
        rhs = factor * lp_norm(transference_embed(x, rep), p)
        assert abs(lhs - rhs) < 1e-9 * max(1.0, rhs)

    def test_monomial_norms_one(self, rep):
        um = QTElement.monomial(THETA, N, (2, -1))
        for p in (1, 2, np.inf):
            assert qt_lp_norm(um, p, rep) == pytest.approx(1.0, abs=1e-10)

    def test_recover_roundtrip(self, rep):
        rng = np.random.default_rng(7)
        x = rand_element(rng)
        back = transference_recover(transference_embed(x, rep), THETA, rep)
        assert np.abs(back.coeffs - x.coeffs).max() < 1e-12
        assert back.dropped_mass < 1e-10

    def test_lp_requires_rational(self):
        irr = ThetaMatrix(((0.0, 0.1234), (-0.1234, 0.0)))
        x = QTElement.monomial(irr, N, (1, 0))
        assert qt_lp_norm(x, 2) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            qt_lp_norm(x, 1)


class TestConditionalExpectation:
    def test_identity_on_embedded(self, rep):
        rng = np.random.default_rng(8)
        x = rand_element(rng)
        tilde = transference_embed(x, rep)
        out = conditional_expectation(tilde, THETA, rep)
        assert np.abs(out.samples_grid - tilde.samples_grid).max() < 1e-10

    def test_idempotent_and_contractive(self, rep):
        rng = np.random.default_rng(9)
        g = GridSpec(d=2, n_points=N, q=rep.q)
        raw = rng.standard_normal(g.spatial_shape + (rep.q, rep.q))
        f = OpValuedFunction.from_samples(
            g, raw + 1j * rng.standard_normal(raw.shape)
        )
        ef = conditional_expectation(f, THETA, rep)
        eef = conditional_expectation(ef, THETA, rep)
        assert np.abs(eef.samples_grid - ef.samples_grid).max() < 1e-10
        assert lp_norm(ef, 2) <= lp_norm(f, 2) * (1.0 + 1e-12)
        # the image is embedded: recovery leaves no off-pattern mass
        rec = transference_recover(ef, THETA, rep)
        assert rec.dropped_mass < 1e-9

    def test_trace_preserving(self, rep):
        rng = np.random.default_rng(10)
        g = GridSpec(d=2, n_points=N, q=rep.q)
        f = OpValuedFunction.from_samples(
            g,
            rng.standard_normal(g.spatial_shape + (rep.q, rep.q))
            + 1j * rng.standard_normal(g.spatial_shape + (rep.q, rep.q)),
        )
        ef = conditional_expectation(f, THETA, rep)
        t1 = np.einsum("...aa->...", f.samples_grid).mean() / rep.q
        t2 = np.einsum("...aa->...", ef.samples_grid).mean() / rep.q
        assert abs(t1 - t2) < 1e-10

    def test_zero(self, rep):
        g = GridSpec(d=2, n_points=N, q=rep.q)
        f = OpValuedFunction.from_samples(
            g, np.zeros(g.spatial_shape + (rep.q, rep.q), dtype=complex)
        )
        out = conditional_expectation(f, THETA, rep)
        assert np.abs(out.samples_grid).max() == 0.0


class TestQtPdo:
    def test_identity_multiplier(self):
        rng = np.random.default_rng(11)
        x = rand_element(rng)
        out = qt_pdo_apply(lambda m: 1.0, x)
        assert np.abs(out.coeffs - x.coeffs).max() == 0.0

    def test_band_projection(self):
        rng = np.random.default_rng(12)
        x = rand_element(rng)
        fam = build_lp_family(x.grid)
        j = 1
        table = fam.hat_phi[j]
        h = N // 2
        out = qt_pdo_apply(lambda m: complex(table[m[0] + h, m[1] + h]), x)
        assert np.abs(out.coeffs - table * x.coeffs).max() < 1e-14

    def test_element_sigma_intertwines(self, rep):
        # pi_z(T_sigma x) equals the matrix-symbol operator on the
        # transferred side with sigma~(z, m) = pi_z(sigma(m))
        rng = np.random.default_rng(13)
        n = 8
        x = rand_element(rng, width=2, n=n)
        sig_elts = {}

        def sigma(m):
            if m not in sig_elts:
                r = np.random.default_rng(hash(m) % 2**31)
                co = np.zeros((n, n), dtype=complex)
                h = n // 2
                co[h - 1 : h + 2, h - 1 : h + 2] = r.standard_normal((3, 3))
                sig_elts[m] = QTElement(THETA, co / (1.0 + m[0] ** 2 + m[1] ** 2))
            return sig_elts[m]

        out = qt_pdo_apply(sigma, x)
        assert out.dropped_mass < 1e-12
        lhs = transference_embed(out, rep).samples_grid

        gq = GridSpec(d=2, n_points=n, q=rep.q)
        vals = np.zeros(gq.spatial_shape + gq.spatial_shape + (rep.q, rep.q),
                        dtype=complex)
        h = n // 2
        for i in range(n):
            for j in range(n):
                vals[:, :, i, j] = transference_embed(
                    sigma((i - h, j - h)), rep
                ).samples_grid
        sym = Symbol(gq, (0, 1, 0), values=vals)
        tilde_x = transference_embed(x, rep)
        rhs = apply_pdo(sym, tilde_x).samples_grid
        assert np.abs(lhs - rhs).max() < 1e-10


class TestQtTriebelLizorkin:
    def test_unit_element(self, rep):
        one = QTElement.monomial(THETA, N, (0, 0))
        for p in (1, 2, np.inf):
            assert qt_tl_norm(one, 0.5, p, rep=rep) == pytest.approx(1.0, abs=1e-10)

    def test_single_band_closed_form(self):
        # at box 16 the family has levels 0..2 and |m| = 4 lies where only
        # the top window is active with value exactly 1
        um = QTElement.monomial(THETA, N, (4, 0))
        alpha = 0.7
        assert qt_tl_norm(um, alpha, 2) == pytest.approx(
            2.0 ** (2 * alpha), abs=1e-12
        )

    @pytest.mark.parametrize("p,factor", [(1, 3.0**-1), (2, 3.0**-0.5), (np.inf, 1.0)])
    def test_cross_check_vs_transferred(self, rep, p, factor):
        rng = np.random.default_rng(14)
        x = rand_element(rng)
        fam1 = build_lp_family(x.grid)
        famq = build_lp_family(GridSpec(d=2, n_points=N, q=rep.q))
        lhs = qt_tl_norm(x, 0.5, p, fam=fam1, rep=rep)
        rhs = factor * triebel_lizorkin_norm(
            transference_embed(x, rep), 0.5, p, fam=famq
        )
        assert abs(lhs - rhs) < 1e-9 * max(1.0, rhs)

    def test_theta_zero_degeneration(self):
        rng = np.random.default_rng(15)
        t0 = ThetaMatrix.zero(2)
        x = rand_element(rng, theta=t0)
        g1 = GridSpec(d=2, n_points=N, q=1)
        f = OpValuedFunction.from_coeffs(g1, x.coeffs[..., None, None])
        for p in (1, 2, np.inf):
            lhs = qt_lp_norm(x, p)
            rhs = lp_norm(f, p)
            assert abs(lhs - rhs) < 1e-10 * max(1.0, rhs)
        fam = build_lp_family(g1)
        lhs = qt_tl_norm(x, 0.5, 1, fam=fam)
        rhs = triebel_lizorkin_norm(f, 0.5, 1, fam=fam)
        assert abs(lhs - rhs) < 1e-10 * max(1.0, rhs)


class TestSweep:
    def test_identity_ratios(self):
        out = qt_boundedness_sweep(
            {"kind": "multiplier", "profile": "one"}, 0.5, 2, (8, 16),
            trials=2, seed=0,
        )
        for row in out["rows"]:
            assert row["ratio"] == pytest.approx(1.0, abs=1e-10)
        assert out["passed"]

    @pytest.mark.slow
    def test_order_zero_bounded(self):
        out = qt_boundedness_sweep(
            {"kind": "multiplier", "profile": "bessel", "order": 0.0},
            0.5, 2, (8, 16, 32), trials=3, seed=1,
        )
        assert out["growth"] <= 2.0, out


class TestElementBasics:
    def test_coeff_guards(self):
        with pytest.raises(ValueError):
            QTElement(THETA, np.zeros((4, 4, 4), dtype=complex))
        with pytest.raises(ValueError):
            QTElement(THETA, np.zeros((5, 5), dtype=complex))
        x = QTElement.monomial(THETA, N, (1, 0))
        with pytest.raises(ValueError):
            x.coeff_at((N, 0))

    def test_from_function_roundtrip(self):
        g = GridSpec(d=2, n_points=N, q=1)
        rng = np.random.default_rng(16)
        co = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
        f = OpValuedFunction.from_coeffs(g, co[..., None, None])
        x = QTElement.from_function(f, THETA)
        assert np.abs(x.coeffs - co).max() < 1e-14

    def test_arithmetic(self):
        a = QTElement.monomial(THETA, N, (1, 0))
        b = QTElement.monomial(THETA, N, (0, 1))
        c = (a + b).scaled(2.0) - a
        assert c.coeff_at((1, 0)) == pytest.approx(1.0)
        assert c.coeff_at((0, 1)) == pytest.approx(2.0)
