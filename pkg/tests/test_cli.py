"""CLI contract: experiment dispatch, deterministic reports, exit codes,
container round trips, and the global flag plumbing."""

import json
import os

import numpy as np
import pytest

import ncpdo.lp as lpmod
import ncpdo.symbol as symmod
from ncpdo.cli import main
from ncpdo.grid import (
    GridSpec,
    OpValuedFunction,
    dump_opvalued,
    load_opvalued,
    load_opvalued_all,
)
from ncpdo.norms import evaluate_norm
from ncpdo.pdo import apply_pdo
from ncpdo.qtorus import QTElement, ThetaMatrix, dump_qtelement, load_qtelement
from ncpdo.symbol import symbol_from_config

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


def cfg_path(name):
    return os.path.join(CONFIGS, name)


@pytest.fixture(autouse=True)
def _restore_globals():
    profiles = dict(lpmod.PROFILES)
    default = lpmod.DEFAULT_PROFILE
    budget = symmod.DEFAULT_BUDGET_MB
    env = os.environ.get("NCPDO_PROFILE")
    yield
    lpmod.PROFILES.clear()
    lpmod.PROFILES.update(profiles)
    lpmod.DEFAULT_PROFILE = default
    symmod.DEFAULT_BUDGET_MB = budget
    if env is None:
        os.environ.pop("NCPDO_PROFILE", None)
    else:
        os.environ["NCPDO_PROFILE"] = env


def write_fn(path, n=16, q=1, seed=0, zero=False):
    g = GridSpec(d=2, n_points=n, q=q)
    if zero:
        arr = np.zeros(g.spatial_shape + (q, q), dtype=complex)
    else:
        rng = np.random.default_rng(seed)
        arr = rng.standard_normal(g.spatial_shape + (q, q)) + 1j * (
            rng.standard_normal(g.spatial_shape + (q, q))
        )
    f = OpValuedFunction.from_samples(g, arr)
    dump_opvalued(f, str(path))
    return f


class TestContainer:
    @pytest.mark.parametrize("view", ["samples", "coeffs"])
    def test_roundtrip(self, tmp_path, view):
        g = GridSpec(d=2, n_points=8, q=2)
        rng = np.random.default_rng(3)
        f = OpValuedFunction.from_samples(
            g,
            rng.standard_normal(g.spatial_shape + (2, 2))
            + 1j * rng.standard_normal(g.spatial_shape + (2, 2)),
        )
        p = tmp_path / "f.bin"
        dump_opvalued(f, str(p), view=view)
        back = load_opvalued(str(p))
        assert back.grid == g
        # complex64 payload: single precision round trip
        assert np.abs(back.samples_grid - f.samples_grid).max() < 1e-6

    def test_multi_record(self, tmp_path):
        g = GridSpec(d=1, n_points=8, q=1)
        fns = [
            OpValuedFunction.from_samples(
                g, np.full((8, 1, 1), k, dtype=complex)
            )
            for k in range(3)
        ]
        p = tmp_path / "many.bin"
        dump_opvalued(fns, str(p))
        back = load_opvalued_all(str(p))
        assert len(back) == 3
        assert all(
            abs(b.samples_grid[0, 0, 0] - k) < 1e-12
            for k, b in enumerate(back)
        )
        with pytest.raises(ValueError, match="trailing"):
            load_opvalued(str(p))

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "junk.bin"
        p.write_bytes(b"XXXX" + b"\x00" * 16)
        with pytest.raises(ValueError, match="magic"):
            load_opvalued(str(p))

    def test_qtelement_roundtrip(self, tmp_path):
        theta = ThetaMatrix.standard_2d(1, 3)
        rng = np.random.default_rng(4)
        co = (rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8)))
        x = QTElement(theta, co.astype(complex))
        p = tmp_path / "x.qte"
        dump_qtelement(x, str(p))
        back = load_qtelement(str(p))
        assert back.theta.denominator == 3
        assert back.theta.values()[0, 1] == pytest.approx(1.0 / 3.0)
        assert np.abs(back.coeffs - x.coeffs).max() < 1e-6

    def test_qtelement_needs_rational(self, tmp_path):
        irr = ThetaMatrix(((0.0, 0.123), (-0.123, 0.0)))
        x = QTElement.monomial(irr, 8, (1, 0))
        with pytest.raises(ValueError, match="rational"):
            dump_qtelement(x, str(tmp_path / "x.qte"))


class TestLpBuild:
    def test_report_and_dump(self, tmp_path):
        out = tmp_path / "lp.json"
        dump = tmp_path / "lp.bin"
        code = main(
            ["lp-build", "--n", "16", "--d", "2", "--dump", str(dump),
             "--out", str(out)]
        )
        assert code == 0
        rep = json.loads(out.read_text())
        assert rep["experiment"] == "lp-build"
        assert rep["passed"] is True
        assert rep["results"]["partition_defect"]["value"] <= 1e-10
        assert rep["results"]["partition_defect"]["tolerance"] == 1e-10
        assert rep["profile_id"].startswith("bump-v1")
        levels = load_opvalued_all(str(dump))
        assert len(levels) == rep["results"]["levels"] == 3

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for out in (a, b):
            assert main(["lp-build", "--n", "16", "--out", str(out)]) == 0
        assert a.read_bytes() == b.read_bytes()


class TestNorm:
    def test_zero_function(self, tmp_path, capsys):
        p = tmp_path / "zero.bin"
        write_fn(p, zero=True)
        assert main(["norm", "--input", str(p), "--space", "L2"]) == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["value"] == 0.0
        assert set(rep) == {"space", "params", "value", "profile_id"}

    def test_space_alpha_binding(self, tmp_path, capsys):
        p = tmp_path / "f.bin"
        f = write_fn(p, seed=1)
        code = main(
            ["norm", "--input", str(p), "--space", "F1a", "--alpha", "0.5"]
        )
        assert code == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["params"]["token"] == "F1:0.5"
        direct = evaluate_norm(f, "F1:0.5")
        # complex64 container: agreement at single precision
        assert rep["value"] == pytest.approx(direct, rel=1e-5)

    def test_bad_token(self, tmp_path):
        p = tmp_path / "f.bin"
        write_fn(p)
        assert main(["norm", "--input", str(p), "--space", "Zq"]) == 1


class TestPdoApply:
    def test_matches_library(self, tmp_path):
        src = tmp_path / "f.bin"
        f = write_fn(src, n=32, seed=2)
        dst = tmp_path / "g.bin"
        code = main(
            ["pdo-apply", "--symbol", cfg_path("bessel_order1.toml"),
             "--input", str(src), "--side", "c", "--out", str(dst)]
        )
        assert code == 0
        got = load_opvalued(str(dst))
        sym = symbol_from_config(f.grid, {"kind": "bessel", "alpha": 1.0})
        want = apply_pdo(sym, load_opvalued(str(src)))
        assert np.abs(got.samples_grid - want.samples_grid).max() < 1e-4

    def test_grid_mismatch(self, tmp_path):
        src = tmp_path / "f.bin"
        write_fn(src, n=16)
        code = main(
            ["pdo-apply", "--symbol", cfg_path("bessel_order1.toml"),
             "--input", str(src), "--out", str(tmp_path / "g.bin")]
        )
        assert code == 1

    def test_kernel_path_budget(self, tmp_path):
        src = tmp_path / "f.bin"
        write_fn(src, n=32, seed=2)
        code = main(
            ["pdo-apply", "--symbol", cfg_path("bessel_order1.toml"),
             "--input", str(src), "--via-kernel", "--budget-mb", "0.5",
             "--out", str(tmp_path / "g.bin")]
        )
        assert code == 1

    def test_kernel_path_agrees(self, tmp_path):
        src = tmp_path / "f.bin"
        write_fn(src, n=16, seed=5)
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        assert main(
            ["pdo-apply", "--symbol", cfg_path("multiplier_order0.toml"),
             "--input", str(src), "--out", str(a)]
        ) == 1  # config pins n = 32, input is 16
        src32 = tmp_path / "f32.bin"
        write_fn(src32, n=32, seed=5)
        assert main(
            ["pdo-apply", "--symbol", cfg_path("multiplier_order0.toml"),
             "--input", str(src32), "--out", str(a)]
        ) == 0
        assert main(
            ["pdo-apply", "--symbol", cfg_path("multiplier_order0.toml"),
             "--input", str(src32), "--via-kernel", "--out", str(b)]
        ) == 0
        fa, fb = load_opvalued(str(a)), load_opvalued(str(b))
        assert np.abs(fa.samples_grid - fb.samples_grid).max() < 1e-5


class TestSymbolCheck:
    def test_passes(self, tmp_path):
        out = tmp_path / "r.json"
        code = main(
            ["symbol-check", "--config", cfg_path("bessel_order1.toml"),
             "--n", "16", "--out", str(out)]
        )
        assert code == 0
        rep = json.loads(out.read_text())
        assert rep["results"]["class_report"]["passed"] is True

    def test_failing_bound_exits_2(self, tmp_path):
        bad = tmp_path / "tight.toml"
        bad.write_text(
            'kind = "bessel"\nalpha = 1.0\nn = 16\nbound = 1e-8\n'
        )
        assert main(["symbol-check", "--config", str(bad),
                     "--out", str(tmp_path / "r.json")]) == 2

    def test_missing_config(self, tmp_path):
        assert main(["symbol-check", "--config", str(tmp_path / "no.toml")]) == 1


class TestChecks:
    def test_compose(self, tmp_path):
        out = tmp_path / "c.json"
        code = main(
            ["compose-check", "--symbol", cfg_path("multiplier_order0.toml"),
             "--n", "16", "--terms", "1,2", "--panel", "2", "--out", str(out)]
        )
        assert code == 0
        assert json.loads(out.read_text())["passed"] is True

    def test_adjoint(self, tmp_path):
        out = tmp_path / "a.json"
        code = main(
            ["adjoint-check", "--symbol", cfg_path("pointwise_cosine.toml"),
             "--n", "16", "--terms", "1,2", "--trials", "2",
             "--out", str(out)]
        )
        assert code == 0

    def test_cotlar(self, tmp_path):
        out = tmp_path / "ct.json"
        code = main(
            ["cotlar", "--symbol", cfg_path("multiplier_order0.toml"),
             "--n", "32", "--out", str(out)]
        )
        assert code == 0
        rep = json.loads(out.read_text())
        assert rep["results"]["tt_star_off"]["value"] <= 1e-10

    def test_kernel_decay_too_small(self, tmp_path):
        code = main(
            ["kernel-decay", "--symbol", cfg_path("multiplier_order0.toml"),
             "--n", "16", "--out", str(tmp_path / "k.json")]
        )
        assert code == 1

    @pytest.mark.slow
    def test_kernel_decay(self, tmp_path):
        out = tmp_path / "k.json"
        code = main(
            ["kernel-decay", "--symbol", cfg_path("multiplier_order0.toml"),
             "--n", "64", "--pair", "none", "--pair", ":1,0",
             "--out", str(out)]
        )
        assert code == 0
        rep = json.loads(out.read_text())
        assert all(e["passed"] for e in rep["results"]["decay"]["entries"])


class TestAtomsCommands:
    @pytest.mark.slow
    def test_validate_manifest(self, tmp_path):
        out = tmp_path / "av.json"
        code = main(
            ["atoms-validate", "--manifest", cfg_path("atoms_demo.toml"),
             "--out", str(out)]
        )
        assert code == 0
        rep = json.loads(out.read_text())
        assert len(rep["results"]["atoms"]) == 4
        assert all(a["passed"] for a in rep["results"]["atoms"])

    def test_schema_violation(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("n = 64\nd = 2\n\n[[atoms]]\nmu = 1\n")
        assert main(["atoms-validate", "--manifest", str(bad)]) == 1

    @pytest.mark.slow
    def test_atom_image(self, tmp_path):
        out = tmp_path / "ai.json"
        code = main(
            ["atom-image", "--symbol", cfg_path("multiplier_order0.toml"),
             "--kind", "h1c_atom", "--n", "64", "--out", str(out)]
        )
        assert code == 0
        rep = json.loads(out.read_text())
        assert rep["results"]["ratio"]["value"] <= 4.0


class TestSweeps:
    def test_bound_sweep_csv(self, tmp_path):
        out = tmp_path / "s.csv"
        code = main(
            ["bound-sweep", "--symbol", cfg_path("multiplier_order0.toml"),
             "--space", "F2a", "--alpha", "0.5", "--sizes", "8,16",
             "--out", str(out)]
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "size,space,alpha,estimate,method,seed"
        assert len(lines) == 3
        assert lines[1].startswith("8,F2:0.5,0.5,")

    def test_bound_sweep_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            main(
                ["bound-sweep", "--symbol", cfg_path("multiplier_order0.toml"),
                 "--space", "L2", "--sizes", "8,16", "--out", str(out)]
            )
        assert a.read_bytes() == b.read_bytes()

    def test_forbidden(self, tmp_path):
        out = tmp_path / "f.csv"
        code = main(
            ["forbidden", "--alphas", "0,0.5", "--sizes", "16,32",
             "--out", str(out)]
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 5
        assert {r.split(",")[1] for r in lines[1:]} == {"L2", "H2:0.5"}

    def test_qt_sweep_identity(self, tmp_path):
        out = tmp_path / "q.csv"
        code = main(["qt-sweep", "--sizes", "8,16", "--trials", "2",
                     "--out", str(out)])
        assert code == 0
        for line in out.read_text().splitlines()[1:]:
            assert float(line.split(",")[3]) == pytest.approx(1.0, abs=1e-10)


class TestQtDemo:
    def test_gates(self, tmp_path):
        out = tmp_path / "qt.json"
        dump = tmp_path / "probe.qte"
        code = main(
            ["qt-demo", "--theta", "1/3", "--box", "8", "--dump", str(dump),
             "--out", str(out)]
        )
        assert code == 0
        rep = json.loads(out.read_text())
        res = rep["results"]
        assert res["commutation"]["value"] <= 1e-12
        assert res["product_vs_representation"]["value"] <= 1e-10
        assert res["transference_isometry"]["value"] <= 1e-9
        assert res["expectation_idempotent"]["value"] <= 1e-10
        assert res["tl_vs_transferred"]["value"] <= 1e-9
        assert res["theta_zero_degeneration"]["value"] <= 1e-10
        assert load_qtelement(str(dump)).n_points == 8

    def test_bad_theta_or_box(self, tmp_path):
        assert main(["qt-demo", "--theta", "x/y",
                     "--out", str(tmp_path / "y.json")]) == 1
        assert main(["qt-demo", "--box", "5",
                     "--out", str(tmp_path / "z.json")]) == 1


class TestGlobals:
    def test_unknown_experiment(self):
        assert main(["no-such-kind"]) == 1

    def test_no_experiment(self):
        assert main([]) == 1

    def test_profile_env_override(self, tmp_path, capsys):
        os.environ["NCPDO_PROFILE"] = "bump-narrow"
        assert main(["lp-build", "--n", "16"]) == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["config"]["profile"] == "bump-narrow"
        assert rep["profile_id"].startswith("bump-narrow")

    def test_profile_table_file(self, tmp_path, capsys):
        tab = tmp_path / "prof.toml"
        tab.write_text('name = "custom-x"\nsharpness = 1.5\n')
        assert main(["lp-build", "--n", "16", "--profile", str(tab)]) == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["config"]["profile"] == "custom-x"
        assert rep["results"]["partition_defect"]["value"] <= 1e-10

    def test_profile_unknown(self):
        assert main(["lp-build", "--n", "16", "--profile", "nope"]) == 1

    def test_threads_flag(self):
        assert main(["--threads", "0", "lp-build", "--n", "16"]) == 1
        before = os.environ.get("OMP_NUM_THREADS")
        try:
            assert main(["--threads", "2", "lp-build", "--n", "16",
                         "--out", os.devnull]) == 0
            assert os.environ["OMP_NUM_THREADS"] == "2"
        finally:
            if before is None:
                os.environ.pop("OMP_NUM_THREADS", None)
            else:
                os.environ["OMP_NUM_THREADS"] = before

    def test_flags_both_sides(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert main(["--seed", "7", "lp-build", "--n", "16",
                     "--out", str(a)]) == 0
        assert main(["lp-build", "--n", "16", "--seed", "7",
                     "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
