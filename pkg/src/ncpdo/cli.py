"""Command line front end: one experiment per process invocation.

Reports are deterministic given (config, seed).  Single runs emit JSON
with sorted keys; sweeps emit CSV with the fixed column order
(size, space, alpha, estimate, method, seed).  Every JSON report embeds
the resolved configuration and the LP profile identifier, and every
gated number carries its tolerance and a method tag.

Exit status: 0 when all property checks pass, 2 when a check fails but
the run itself was sound, 1 on usage, schema, or resource-budget errors.

NCPDO_PROFILE (overridden by --profile) names the band profile used by
every family built in the process; it accepts a built-in profile name or
the path of a TOML table with `name` and `sharpness` keys.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # 3.10
    import tomli as tomllib

from . import lp as _lp
from . import symbol as _symbol
from .atoms import (
    ATOM_KINDS,
    atom_image_report,
    far_support_image_norm,
    make_atom,
    validate_atom,
)
from .grid import GridSpec, OpValuedFunction, dump_opvalued, load_opvalued
from .lp import PROFILES, build_lp_family
from .norms import evaluate_norm, lp_norm, parse_space, triebel_lizorkin_norm
from .pdo import (
    apply_pdo,
    boundedness_sweep,
    cotlar_stein_report,
    forbidden_symbol_experiment,
)
from .qtorus import (
    QTElement,
    QTRepresentation,
    ThetaMatrix,
    conditional_expectation,
    dump_qtelement,
    qt_boundedness_sweep,
    qt_lp_norm,
    qt_multiply,
    qt_tl_norm,
    transference_embed,
    transference_recover,
)
from .symbol import (
    MemoryBudgetError,
    adjoint_remainder_report,
    check_symbol_class,
    composition_remainder_report,
    kernel_decay_report,
    symbol_from_config,
)

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2
CSV_COLUMNS = ("size", "space", "alpha", "estimate", "method", "seed")


class CliError(Exception):
    """Usage, schema, or budget problem; mapped to exit status 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; the report contract
    # reserves 2 for failed property checks, so route through CliError.
    def error(self, message):
        raise CliError(message)


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------

def _read_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise CliError(f"config not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise CliError(f"schema violation in {path}: {exc}")


def _jsonable(obj):
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)!r}")


def _write_text(text: str, out: str) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _emit_json(report: dict, out: str) -> None:
    _write_text(
        json.dumps(report, sort_keys=True, indent=2, default=_jsonable) + "\n",
        out,
    )


def _emit_csv(rows, out: str) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(
            [
                int(r["size"]),
                r["space"],
                repr(float(r["alpha"])),
                repr(float(r["estimate"])),
                r["method"],
                int(r["seed"]),
            ]
        )
    _write_text(buf.getvalue(), out)


def _report(kind: str, config: dict, profile_id: str, results: dict,
            passed: bool, seed: int) -> dict:
    return {
        "experiment": kind,
        "config": config,
        "profile_id": profile_id,
        "seed": seed,
        "results": results,
        "passed": bool(passed),
    }


def _gated(value, tolerance, method: str) -> dict:
    return {
        "value": value,
        "tolerance": tolerance,
        "method": method,
    }


def _ints(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v != "")
    except ValueError:
        raise CliError(f"expected comma-separated integers, got {text!r}")


def _parse_p(text: str):
    table = {"1": 1, "2": 2, "inf": np.inf}
    if str(text) not in table:
        raise CliError(f"p must be one of 1, 2, inf; got {text!r}")
    return table[str(text)]


def _parse_theta(text: str) -> tuple:
    """'1/3' -> (1, 3); plain integers mean a whole deformation."""
    num, _, den = text.partition("/")
    try:
        p = int(num)
        q = int(den) if den else 1
    except ValueError:
        raise CliError(f"theta must be a fraction p/q, got {text!r}")
    if q <= 0:
        raise CliError("theta denominator must be positive")
    return p, q


def _space_token(space: str, alpha: float) -> str:
    """Spec-style space names: a trailing 'a' on F/B/H tokens binds the
    --alpha flag, so F1a + alpha 0.5 means F1:0.5."""
    if ":" not in space and len(space) > 1 and space.endswith("a"):
        if space[0] in "FBH" and space != "Ba":
            return f"{space[:-1]}:{alpha!r}"
    return space


def _grid_from(cfg: dict, args, default_n=None, q=None) -> GridSpec:
    n = getattr(args, "n", None) or cfg.get("n") or default_n
    d = getattr(args, "d", None) or cfg.get("d") or 2
    if n is None:
        raise CliError("grid size missing: pass --n or put n in the config")
    try:
        return GridSpec(d=int(d), n_points=int(n), q=int(q or cfg.get("q", 1)))
    except ValueError as exc:
        raise CliError(f"schema violation: {exc}")


def _profile_id_for(d: int, n: int) -> str:
    return build_lp_family(GridSpec(d=d, n_points=n, q=1)).profile_id


def _build_symbol(grid: GridSpec, cfg: dict):
    try:
        return symbol_from_config(grid, cfg)
    except (KeyError, ValueError) as exc:
        raise CliError(f"schema violation in symbol config: {exc}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_lp_build(args) -> int:
    grid = GridSpec(d=args.d, n_points=args.n, q=1)
    fam = build_lp_family(grid)
    defect = fam.partition_defect()
    supports = fam.band_support_ok()
    passed = defect <= args.tolerance and supports
    if args.dump:
        levels = [
            OpValuedFunction.from_coeffs(
                grid, tab.astype(complex)[..., None, None]
            )
            for tab in fam.hat_phi
        ]
        dump_opvalued(levels, args.dump, view="coeffs")
    report = _report(
        "lp-build",
        {"n": args.n, "d": args.d, "profile": fam.profile, "dump": args.dump},
        fam.profile_id,
        {
            "levels": fam.J + 1,
            "partition_defect": _gated(
                defect, args.tolerance, "sup |sum_j phi_j - 1| over the box"
            ),
            "supports_exact": _gated(
                supports, True, "bit-exact zero outside each annulus"
            ),
        },
        passed,
        args.seed,
    )
    _emit_json(report, args.out)
    return EXIT_OK if passed else EXIT_FAILED


def cmd_symbol_check(args) -> int:
    cfg = _read_toml(args.config)
    grid = _grid_from(cfg, args, default_n=32)
    sym = _build_symbol(grid, cfg)
    orders = _ints(args.orders)
    if len(orders) != 2:
        raise CliError("--orders wants two integers, e.g. 2,2")
    try:
        rep = check_symbol_class(sym, orders=orders, bound=cfg.get("bound"))
    except ValueError as exc:
        raise CliError(str(exc))
    report = _report(
        "symbol-check",
        {**cfg, "orders": list(orders)},
        _profile_id_for(grid.d, grid.n_points),
        {"class_report": rep.to_dict()},
        rep.passed,
        args.seed,
    )
    _emit_json(report, args.out)
    return EXIT_OK if rep.passed else EXIT_FAILED


def cmd_pdo_apply(args) -> int:
    f = load_opvalued(args.input)
    cfg = _read_toml(args.symbol)
    if "n" in cfg and int(cfg["n"]) != f.grid.n_points:
        raise CliError(
            f"symbol config n = {cfg['n']} does not match input grid "
            f"n = {f.grid.n_points}"
        )
    sym = _build_symbol(f.grid, cfg)
    mode = {"c": "column", "r": "row"}[args.side]
    if args.via_kernel:
        if mode != "column":
            raise CliError("--via-kernel only implements the column path")
        from .pdo import apply_via_kernel

        out = apply_via_kernel(sym, f)
    else:
        out = apply_pdo(sym, f, mode=mode)
    dump_opvalued(out, args.out, view="samples")
    return EXIT_OK


def cmd_norm(args) -> int:
    f = load_opvalued(args.input)
    token = _space_token(args.space, args.alpha)
    try:
        spec = parse_space(token)
        value = evaluate_norm(f, spec)
    except ValueError as exc:
        raise CliError(str(exc))
    report = {
        "space": args.space,
        "params": {
            "token": token,
            "alpha": spec.get("alpha"),
            "p": str(spec.get("p")),
            "input": args.input,
            "tolerance": None,
            "method": spec["family"],
        },
        "value": float(value),
        "profile_id": _profile_id_for(f.grid.d, f.grid.n_points),
    }
    _emit_json(report, args.out)
    return EXIT_OK


def cmd_compose_check(args) -> int:
    cfg1 = _read_toml(args.symbol)
    cfg2 = _read_toml(args.symbol2) if args.symbol2 else cfg1
    grid = _grid_from(cfg1, args, default_n=16)
    sym1 = _build_symbol(grid, cfg1)
    sym2 = _build_symbol(grid, cfg2)
    terms = _ints(args.terms)
    rep = composition_remainder_report(
        sym1, sym2, n0_list=terms, panel=args.panel, seed=args.seed
    )
    passed = rep["monotone"]
    report = _report(
        "compose-check",
        {"first": cfg1, "second": cfg2, "terms": list(terms),
         "panel": args.panel, "n": grid.n_points, "d": grid.d},
        _profile_id_for(grid.d, grid.n_points),
        {"remainders": rep,
         "monotone": _gated(passed, True, "errors nonincreasing in n0")},
        passed,
        args.seed,
    )
    _emit_json(report, args.out)
    return EXIT_OK if passed else EXIT_FAILED


def cmd_adjoint_check(args) -> int:
    cfg = _read_toml(args.symbol)
    grid = _grid_from(cfg, args, default_n=16)
    sym = _build_symbol(grid, cfg)
    terms = _ints(args.terms)
    rep = adjoint_remainder_report(
        sym, n0_list=terms, trials=args.trials, seed=args.seed
    )
    vals = [rep["residuals"][str(k)] for k in terms]
    passed = all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))
    report = _report(
        "adjoint-check",
        {**cfg, "terms": list(terms), "trials": args.trials,
         "n": grid.n_points, "d": grid.d},
        _profile_id_for(grid.d, grid.n_points),
        {"remainders": rep,
         "monotone": _gated(passed, True, "residuals nonincreasing in n0")},
        passed,
        args.seed,
    )
    _emit_json(report, args.out)
    return EXIT_OK if passed else EXIT_FAILED


def _parse_pairs(specs, d: int):
    if not specs:
        return ((None, None),)
    pairs = []
    for spec in specs:
        if spec == "none":
            pairs.append((None, None))
            continue
        g, _, b = spec.partition(":")
        gamma = _ints(g) if g else None
        beta = _ints(b) if b else None
        for part in (gamma, beta):
            if part is not None and len(part) != d:
                raise CliError(f"pair {spec!r} needs {d} entries per index")
        pairs.append((gamma, beta))
    return tuple(pairs)


def cmd_kernel_decay(args) -> int:
    cfg = _read_toml(args.symbol)
    grid = _grid_from(cfg, args, default_n=64)
    sym = _build_symbol(grid, cfg)
    pairs = _parse_pairs(args.pair, grid.d)
    try:
        rep = kernel_decay_report(sym, pairs=pairs, tolerance=args.tolerance)
    except ValueError as exc:
        raise CliError(str(exc))
    report = _report(
        "kernel-decay",
        {**cfg, "pairs": [list(map(list, p)) if p[0] else list(p)
                          for p in pairs],
         "n": grid.n_points, "d": grid.d},
        _profile_id_for(grid.d, grid.n_points),
        {"decay": rep.to_dict()},
        rep.passed,
        args.seed,
    )
    _emit_json(report, args.out)
    return EXIT_OK if rep.passed else EXIT_FAILED


def cmd_cotlar(args) -> int:
    cfg = _read_toml(args.symbol)
    grid = _grid_from(cfg, args, default_n=32)
    sym = _build_symbol(grid, cfg)
    try:
        rep = cotlar_stein_report(sym, seed=args.seed)
    except ValueError as exc:
        raise CliError(str(exc))
    off_ok = rep["tt_star_off_max"] <= args.tolerance * rep["tt_star_scale"]
    if rep["delta"] < 1.0:
        # a None slope means the off-diagonal entries are all below the
        # fitting floor, which is decay, not a failure
        slope_ok = rep["separation_slope"] is None or rep["separation_slope"] < 0.0
    else:
        slope_ok = True
    passed = off_ok and slope_ok
    report = _report(
        "cotlar",
        {**cfg, "n": grid.n_points, "d": grid.d},
        _profile_id_for(grid.d, grid.n_points),
        {
            "tables": rep,
            "tt_star_off": _gated(
                rep["tt_star_off_max"] / rep["tt_star_scale"],
                args.tolerance,
                "max ||T_j T_k*|| over |j-k| >= 2, relative to the peak",
            ),
            "t_star_t_slope": _gated(
                rep["separation_slope"],
                "negative when delta < 1",
                "log2 fit of max ||T_j* T_k|| against |j-k|",
            ),
        },
        passed,
        args.seed,
    )
    _emit_json(report, args.out)
    return EXIT_OK if passed else EXIT_FAILED


def cmd_atoms_validate(args) -> int:
    man = _read_toml(args.manifest)
    entries = man.get("atoms")
    if not isinstance(entries, list) or not entries:
        raise CliError("manifest needs a nonempty [[atoms]] array")
    grid = _grid_from(man, args, default_n=64, q=man.get("q", 1))
    alpha_default = args.alpha if args.alpha is not None else man.get("alpha", 0.0)
    rows = []
    for i, ent in enumerate(entries):
        if not isinstance(ent, dict) or "kind" not in ent:
            raise CliError(f"atoms[{i}] needs a 'kind' key")
        if ent["kind"] not in ATOM_KINDS:
            raise CliError(
                f"atoms[{i}]: unknown kind {ent['kind']!r}; have {ATOM_KINDS}"
            )
        try:
            atom = make_atom(
                grid,
                kind=ent["kind"],
                alpha=float(ent.get("alpha", alpha_default)),
                mu=int(ent.get("mu", 1)),
                corner=tuple(ent["corner"]) if "corner" in ent else None,
                K=ent.get("K"),
                L=ent.get("L"),
                seed=int(ent.get("seed", args.seed)),
            )
        except ValueError as exc:
            raise CliError(f"atoms[{i}]: {exc}")
        rows.append(validate_atom(atom).to_dict())
    passed = all(r["passed"] for r in rows)
    report = _report(
        "atoms-validate",
        {**man, "alpha": alpha_default},
        _profile_id_for(grid.d, grid.n_points),
        {"atoms": rows},
        passed,
        args.seed,
    )
    _emit_json(report, args.out)
    return EXIT_OK if passed else EXIT_FAILED


def cmd_atom_image(args) -> int:
    cfg = _read_toml(args.symbol)
    grid = _grid_from(cfg, args, default_n=64)
    sym = _build_symbol(grid, cfg)
    apply_fn = lambda a: apply_pdo(sym, a)
    if args.kind not in ATOM_KINDS:
        raise CliError(f"unknown atom kind {args.kind!r}; have {ATOM_KINDS}")
    img = atom_image_report(
        apply_fn, grid, kind=args.kind, alpha=args.alpha, seed=args.seed
    )
    far = far_support_image_norm(
        apply_fn, grid, kind=args.kind, alpha=args.alpha, seed=args.seed
    )
    ratio_ok = img["ratio"] <= args.ratio_bound
    decay_ok = far["decay_exponent"] >= grid.d / 2.0
    passed = ratio_ok and decay_ok
    report = _report(
        "atom-image",
        {**cfg, "kind": args.kind, "alpha": args.alpha,
         "n": grid.n_points, "d": grid.d},
        _profile_id_for(grid.d, grid.n_points),
        {
            "scale_stability": img,
            "far_field": far,
            "ratio": _gated(img["ratio"], args.ratio_bound, img["method"]),
            "decay_exponent": _gated(
                far["decay_exponent"], grid.d / 2.0, far["method"]
            ),
        },
        passed,
        args.seed,
    )
    _emit_json(report, args.out)
    return EXIT_OK if passed else EXIT_FAILED


def cmd_bound_sweep(args) -> int:
    cfg = _read_toml(args.symbol)
    token = _space_token(args.space, args.alpha)
    try:
        parse_space(token)
    except ValueError as exc:
        raise CliError(str(exc))
    sizes = _ints(args.sizes)
    if not sizes:
        raise CliError("--sizes must name at least one grid size")
    rows = boundedness_sweep(
        cfg, spaces=(token,), sizes=sizes, d=args.d, seed=args.seed
    )
    ests = [r["estimate"] for r in rows]
    growth = max(ests) / max(min(ests), 1e-300)
    _emit_csv(rows, args.out)
    return EXIT_OK if growth <= args.growth_bound else EXIT_FAILED


def cmd_forbidden(args) -> int:
    alphas = tuple(float(a) for a in args.alphas.split(","))
    sizes = _ints(args.sizes)
    rep = forbidden_symbol_experiment(
        alphas=alphas, sizes=sizes, d=args.d, delta=args.delta, seed=args.seed
    )
    rows = []
    for a in alphas:
        tok = "L2" if a == 0.0 else f"H2:{a}"
        for n, est in zip(sizes, rep["norms"][str(a)]):
            rows.append(
                {
                    "size": n,
                    "space": tok,
                    "alpha": a,
                    "estimate": est,
                    "method": rep["method"],
                    "seed": args.seed,
                }
            )
    increasing = rep.get("alpha0_strictly_increasing", True)
    bounded = all(g <= args.growth_bound for g in rep["alpha_pos_growth"].values())
    _emit_csv(rows, args.out)
    return EXIT_OK if increasing and bounded else EXIT_FAILED


def cmd_qt_demo(args) -> int:
    pq = _parse_theta(args.theta)
    n = args.box
    if n < 8 or n % 2:
        raise CliError("--box must be even and at least 8")
    theta = ThetaMatrix.standard_2d(*pq)
    try:
        rep = QTRepresentation(theta)
    except ValueError as exc:
        raise CliError(str(exc))
    p = _parse_p(args.p)
    rng = np.random.default_rng(args.seed)
    results = {}

    U1, U2 = rep.unitaries
    phase = np.exp(2j * np.pi * theta.values()[1, 0])
    results["commutation"] = _gated(
        float(np.abs(U2 @ U1 - phase * U1 @ U2).max()),
        1e-12,
        "max |U2 U1 - e^{2 pi i theta} U1 U2| over entries",
    )

    w = max(n // 4, 1)
    co = np.zeros((n, n), dtype=complex)
    h = n // 2
    blk = rng.standard_normal((2 * w + 1,) * 2) + 1j * rng.standard_normal(
        (2 * w + 1,) * 2
    )
    co[h - w : h + w + 1, h - w : h + w + 1] = blk
    x = QTElement(theta, co)
    co2 = np.zeros_like(co)
    co2[h - w : h + w + 1, h - w : h + w + 1] = rng.standard_normal(
        (2 * w + 1,) * 2
    ) + 1j * rng.standard_normal((2 * w + 1,) * 2)
    y = QTElement(theta, co2)

    z = qt_multiply(x, y)
    tx, ty = transference_embed(x, rep), transference_embed(y, rep)
    prod = np.einsum("...ab,...bc->...ac", tx.samples_grid, ty.samples_grid)
    z2 = transference_recover(
        OpValuedFunction.from_samples(tx.grid, prod), theta, rep
    )
    results["product_vs_representation"] = _gated(
        float(np.abs(z.coeffs - z2.coeffs).max()),
        1e-10,
        "coefficient product against pointwise matrix product",
    )

    iso = 0.0
    for pp, fac in ((1, 1.0 / rep.q), (2, rep.q**-0.5), (np.inf, 1.0)):
        lhs = qt_lp_norm(x, pp, rep)
        rhs = fac * lp_norm(transference_embed(x, rep), pp)
        iso = max(iso, abs(lhs - rhs) / max(1.0, rhs))
    results["transference_isometry"] = _gated(
        float(iso), 1e-9, "relative gap of the L_p norms, p in {1, 2, inf}"
    )

    gq = GridSpec(d=2, n_points=n, q=rep.q)
    raw = rng.standard_normal(gq.spatial_shape + (rep.q, rep.q))
    f = OpValuedFunction.from_samples(
        gq, raw + 1j * rng.standard_normal(raw.shape)
    )
    ef = conditional_expectation(f, theta, rep)
    eef = conditional_expectation(ef, theta, rep)
    results["expectation_idempotent"] = _gated(
        float(np.abs(eef.samples_grid - ef.samples_grid).max()),
        1e-10,
        "max |E(E f) - E f|",
    )
    results["expectation_contractive"] = _gated(
        float(lp_norm(ef, 2) / max(lp_norm(f, 2), 1e-300)),
        1.0 + 1e-12,
        "||E f||_2 / ||f||_2",
    )

    fam1 = build_lp_family(x.grid)
    famq = build_lp_family(gq)
    fac = {1: 1.0 / rep.q, 2: rep.q**-0.5}.get(p, 1.0)
    lhs = qt_tl_norm(x, args.alpha, p, fam=fam1, rep=rep)
    rhs = fac * triebel_lizorkin_norm(
        transference_embed(x, rep), args.alpha, p, fam=famq
    )
    results["tl_vs_transferred"] = _gated(
        float(abs(lhs - rhs) / max(1.0, rhs)),
        1e-9,
        "relative gap of the square-function norms",
    )
    results["tl_value"] = _gated(float(lhs), None, "quantum column norm")

    x0 = QTElement(ThetaMatrix.zero(2), co)
    g1 = GridSpec(d=2, n_points=n, q=1)
    f0 = OpValuedFunction.from_coeffs(g1, co[..., None, None])
    deg = 0.0
    for pp in (1, 2, np.inf):
        a0 = qt_lp_norm(x0, pp)
        b0 = lp_norm(f0, pp)
        deg = max(deg, abs(a0 - b0) / max(1.0, b0))
    results["theta_zero_degeneration"] = _gated(
        float(deg), 1e-10, "qt norms against commutative norms at theta = 0"
    )

    if args.dump:
        dump_qtelement(x, args.dump)

    tol_keys = [
        "commutation",
        "product_vs_representation",
        "transference_isometry",
        "expectation_idempotent",
        "tl_vs_transferred",
        "theta_zero_degeneration",
    ]
    passed = all(
        results[k]["value"] <= results[k]["tolerance"] for k in tol_keys
    ) and results["expectation_contractive"]["value"] <= 1.0 + 1e-12
    report = _report(
        "qt-demo",
        {"theta": args.theta, "box": n, "alpha": args.alpha, "p": args.p,
         "dump": args.dump},
        _profile_id_for(2, n),
        results,
        passed,
        args.seed,
    )
    _emit_json(report, args.out)
    return EXIT_OK if passed else EXIT_FAILED


def cmd_qt_sweep(args) -> int:
    cfg = _read_toml(args.symbol) if args.symbol else {
        "kind": "multiplier", "profile": "one"
    }
    if cfg.get("kind", "multiplier") not in ("multiplier", "band", "bessel"):
        raise CliError("qt-sweep needs a frequency-only (scalar) symbol")
    pq = _parse_theta(args.theta)
    sizes = _ints(args.sizes)
    p = _parse_p(args.p)
    rep = qt_boundedness_sweep(
        cfg, args.alpha, p, sizes, theta_pq=pq,
        trials=args.trials, seed=args.seed,
    )
    rows = [
        {
            "size": r["size"],
            "space": f"qtF{args.p}:{args.alpha!r}",
            "alpha": r["alpha"],
            "estimate": r["ratio"],
            "method": rep["method"],
            "seed": r["seed"],
        }
        for r in rep["rows"]
    ]
    _emit_csv(rows, args.out)
    return EXIT_OK if rep["passed"] else EXIT_FAILED


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(sp, out_default="-"):
    sp.add_argument("--out", default=out_default,
                    help="output path, '-' for stdout")


def _global_flags(target, suppress: bool) -> None:
    # the same flags live on the root parser and on every subparser so
    # they are accepted on either side of the experiment name; the
    # subparser copies must not clobber values parsed by the root
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    target.add_argument("--seed", type=int, default=d(0), help="RNG seed")
    target.add_argument("--threads", type=int, default=d(None),
                        help="cap BLAS/OpenMP threads (best effort)")
    target.add_argument("--budget-mb", type=float, default=d(512.0),
                        help="dense table budget; exceeding it is a hard error")
    target.add_argument("--profile", default=d(None),
                        help="LP profile name or TOML table path "
                             "(default: NCPDO_PROFILE or bump-v1)")


def build_parser() -> _Parser:
    ap = _Parser(prog="ncpdo", description=__doc__.splitlines()[0])
    _global_flags(ap, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = ap.add_subparsers(dest="experiment", metavar="experiment")

    def add_parser(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    sp = add_parser("lp-build", help="band family partition report")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--tolerance", type=float, default=1e-10)
    sp.add_argument("--dump", default=None,
                    help="write the multiplier tables (one record per level)")
    _add_common(sp)
    sp.set_defaults(func=cmd_lp_build)

    sp = add_parser("symbol-check", help="measure class constants")
    sp.add_argument("--config", required=True)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--d", type=int, default=None)
    sp.add_argument("--orders", default="2,2")
    _add_common(sp)
    sp.set_defaults(func=cmd_symbol_check)

    sp = add_parser("pdo-apply", help="apply an operator to a dump file")
    sp.add_argument("--symbol", required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--side", choices=("c", "r"), default="c",
                    help="c: column (symbol right of the coefficient), r: row")
    sp.add_argument("--via-kernel", action="store_true",
                    help="independent real-space path; assembles the full "
                         "kernel table (budget-guarded)")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_pdo_apply)

    sp = add_parser("norm", help="evaluate one function-space norm")
    sp.add_argument("--input", required=True)
    sp.add_argument("--space", required=True)
    sp.add_argument("--alpha", type=float, default=0.0)
    _add_common(sp)
    sp.set_defaults(func=cmd_norm)

    sp = add_parser("compose-check", help="composition remainder decay")
    sp.add_argument("--symbol", required=True)
    sp.add_argument("--symbol2", default=None)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--d", type=int, default=None)
    sp.add_argument("--terms", default="1,2,3")
    sp.add_argument("--panel", type=int, default=6)
    _add_common(sp)
    sp.set_defaults(func=cmd_compose_check)

    sp = add_parser("adjoint-check", help="adjoint remainder decay")
    sp.add_argument("--symbol", required=True)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--d", type=int, default=None)
    sp.add_argument("--terms", default="1,2,3")
    sp.add_argument("--trials", type=int, default=6)
    _add_common(sp)
    sp.set_defaults(func=cmd_adjoint_check)

    sp = add_parser("kernel-decay", help="off-diagonal kernel slopes")
    sp.add_argument("--symbol", required=True)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--d", type=int, default=None)
    sp.add_argument("--pair", action="append", default=None,
                    help="gamma:beta per index, e.g. 1,0:0,0; repeatable")
    sp.add_argument("--tolerance", type=float, default=0.15)
    _add_common(sp)
    sp.set_defaults(func=cmd_kernel_decay)

    sp = add_parser("cotlar", help="almost-orthogonality tables")
    sp.add_argument("--symbol", required=True)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--d", type=int, default=None)
    sp.add_argument("--tolerance", type=float, default=1e-10)
    _add_common(sp)
    sp.set_defaults(func=cmd_cotlar)

    sp = add_parser("atoms-validate", help="validate a manifest of atoms")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--d", type=int, default=None)
    _add_common(sp)
    sp.set_defaults(func=cmd_atoms_validate)

    sp = add_parser("atom-image", help="scale stability of atom images")
    sp.add_argument("--symbol", required=True)
    sp.add_argument("--kind", default="h1c_atom")
    sp.add_argument("--alpha", type=float, default=0.0)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--d", type=int, default=None)
    sp.add_argument("--ratio-bound", type=float, default=4.0)
    _add_common(sp)
    sp.set_defaults(func=cmd_atom_image)

    sp = add_parser("bound-sweep", help="operator norms across sizes")
    sp.add_argument("--symbol", required=True)
    sp.add_argument("--space", required=True)
    sp.add_argument("--alpha", type=float, default=0.0)
    sp.add_argument("--sizes", required=True)
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--growth-bound", type=float, default=2.0)
    _add_common(sp)
    sp.set_defaults(func=cmd_bound_sweep)

    sp = add_parser("forbidden", help="lacunary delta = 1 experiment")
    sp.add_argument("--alphas", default="0,0.25,0.5,1")
    sp.add_argument("--sizes", default="16,32,64")
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--delta", type=float, default=1.0)
    sp.add_argument("--growth-bound", type=float, default=2.0)
    _add_common(sp)
    sp.set_defaults(func=cmd_forbidden)

    sp = add_parser("qt-demo", help="quantum torus calibration report")
    sp.add_argument("--theta", default="1/3")
    sp.add_argument("--box", type=int, default=8)
    sp.add_argument("--alpha", type=float, default=0.5)
    sp.add_argument("--p", default="2")
    sp.add_argument("--dump", default=None, help="write the probe element")
    _add_common(sp)
    sp.set_defaults(func=cmd_qt_demo)

    sp = add_parser("qt-sweep", help="quantum norm ratios across boxes")
    sp.add_argument("--symbol", default=None)
    sp.add_argument("--theta", default="1/3")
    sp.add_argument("--alpha", type=float, default=0.5)
    sp.add_argument("--p", default="2")
    sp.add_argument("--sizes", default="8,16")
    sp.add_argument("--trials", type=int, default=4)
    _add_common(sp)
    sp.set_defaults(func=cmd_qt_sweep)

    return ap


def _resolve_profile(args) -> None:
    prof = args.profile or os.environ.get("NCPDO_PROFILE")
    if not prof:
        return
    if prof not in PROFILES:
        if not os.path.exists(prof):
            raise CliError(
                f"unknown LP profile {prof!r} and no such table file"
            )
        tab = _read_toml(prof)
        name, sharp = tab.get("name"), tab.get("sharpness")
        if not isinstance(name, str) or not isinstance(sharp, (int, float)):
            raise CliError(
                f"profile table {prof} needs a string 'name' and a numeric "
                "'sharpness'"
            )
        PROFILES[name] = float(sharp)
        prof = name
    _lp.DEFAULT_PROFILE = prof


def _apply_globals(args) -> None:
    if args.threads is not None:
        if args.threads < 1:
            raise CliError("--threads must be at least 1")
        # effective for pools spun up after this point
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    if args.budget_mb <= 0:
        raise CliError("--budget-mb must be positive")
    _symbol.DEFAULT_BUDGET_MB = float(args.budget_mb)
    _resolve_profile(args)


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        if getattr(args, "func", None) is None:
            raise CliError("missing experiment kind; see ncpdo --help")
        _apply_globals(args)
        return args.func(args)
    except CliError as exc:
        print(f"ncpdo: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except MemoryBudgetError as exc:
        print(f"ncpdo: resource budget exceeded: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"ncpdo: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
