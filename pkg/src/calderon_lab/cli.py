"""Command line entry point: ``calderon-lab {sweep,check,residue,smoothing}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .calderon_core import orthogonalize_projector
from .cylinder_flow import spectral_data_for
from .experiments import (
    ConfigError,
    ResonanceError,
    emit_report,
    fit_rate,
    load_config,
    prepare_sweep,
    run_sweep,
    smoothing_scan,
)
from .operator_model import assemble, lift_fiber_matrix, spectral_projectors
from .subspaces import check_projector, lagrangian_residual
from .symbol_calculus import MatPoly, RationalSymbolTerm, residue_term


def _fmt_complex(z: complex) -> str:
    re, im = format(z.real, ".17g"), format(abs(z.imag), ".17g")
    return f"{re}{'-' if z.imag < 0 or (z.imag == 0 and np.signbit(z.imag)) else '+'}{im}j"


def _parse_numerator(text: str) -> MatPoly:
    coeffs = json.loads(text)
    if not isinstance(coeffs, list) or not coeffs:
        raise ValueError("numerator must be a non-empty JSON list of coefficients (index = power of tau)")

    def conv(v):
        if isinstance(v, list):
            return [conv(u) for u in v]
        return complex(v.replace(" ", "")) if isinstance(v, str) else complex(v)

    mats = [np.atleast_2d(np.array(conv(c), dtype=complex)) for c in coeffs]
    return MatPoly(mats, mats[0].shape[0])


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    ctx = prepare_sweep(cfg)
    try:
        samples = run_sweep(cfg, ctx)
    except ResonanceError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        emit_report([], None, args.out, resonance=exc.report, config=cfg.raw)
        return 2
    try:
        fit = fit_rate(samples, cfg.error_floor)
    except ValueError as exc:
        print(f"no rate fit: {exc}", file=sys.stderr)
        fit = None
    csv_path, json_path = emit_report(samples, fit, args.out, resonance=ctx.resonance, config=cfg.raw)
    if fit is not None:
        flag = "" if fit.reliable else "  (r^2 < 0.9: no rate claimed)"
        print(f"epsilon_hat = {fit.epsilon_hat:.6g}  r^2 = {fit.r_squared:.6g}  n_used = {fit.n_used}{flag}")
    print(f"wrote {csv_path} and {json_path}")
    return 0


def cmd_check(args) -> int:
    cfg = load_config(args.config)
    ctx = prepare_sweep(cfg)
    spec, N = ctx.spec, ctx.N
    results: list[tuple[str, bool, str]] = []

    def record(name, ok, detail=""):
        results.append((name, bool(ok), detail))

    worst = 0.0
    for x in (0.0, 0.25, 0.5, 0.75, 1.0):
        A = assemble(spec, N, x).entries
        worst = max(worst, np.linalg.norm(A - A.conj().T, 2) / max(np.linalg.norm(A, 2), 1.0))
    record("hermitian assembly", worst <= 1e-12, f"max relative asymmetry {worst:.2e}")

    if spec.symplectic:
        Gf = lift_fiber_matrix(spec.G, N)
        worst = 0.0
        for x in (0.0, 0.25, 0.5, 0.75, 1.0):
            A = assemble(spec, N, x).entries
            worst = max(worst, np.linalg.norm(Gf @ A + A @ Gf, 2) / max(np.linalg.norm(A, 2), 1.0))
        record("G anticommutes with D0(x)", worst <= 1e-12, f"{worst:.2e}")

    S = spectral_data_for(spec.product_part(), N)
    projs = spectral_projectors(S)
    total = np.linalg.norm(sum(projs) - np.eye(S.dim), 2)
    cross = max(np.linalg.norm(a @ b, 2) for i, a in enumerate(projs) for b in projs[i + 1:])
    record("spectral projectors", total <= 1e-12 and cross <= 1e-12, f"completeness {total:.1e}, cross {cross:.1e}")

    if ctx.G_full is not None:
        lag = lagrangian_residual(ctx.H0, ctx.G_full)
        record("H0 Lagrangian", lag <= 1e-9, f"residual {lag:.2e}")

    rep = ctx.resonance
    record("nonresonance gate", not rep.resonant, f"min angle {rep.min_angle:.3e} (threshold {rep.threshold:.1e})")

    C = orthogonalize_projector(np.array([[1.0, 1.0], [0.0, 0.0]]))
    record("orthogonalization regression", np.abs(C - np.diag([1.0, 0.0])).max() <= 1e-12)

    try:
        check_projector(ctx.aps.pi_aps, idem_tol=1e-12, herm_tol=1e-12)
        record("APS projector", True, f"rank {np.trace(ctx.aps.pi_aps).real:.0f}")
    except ValueError as exc:
        record("APS projector", False, str(exc))

    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else ""))
    return 0 if all(ok for _, ok, _ in results) else 1


def cmd_residue(args) -> int:
    term = RationalSymbolTerm(_parse_numerator(args.numerator), args.rho, args.power)
    R = residue_term(term)
    for row in R:
        print(" ".join(_fmt_complex(z) for z in row))
    return 0


def cmd_smoothing(args) -> int:
    cfg = load_config(args.config)
    ctx = prepare_sweep(cfg)
    if ctx.resonance.resonant:
        print(f"aborted: {ResonanceError(ctx.resonance)}", file=sys.stderr)
        return 2
    table = smoothing_scan(ctx.spec, ctx.N, ctx.H0, args.x, cfg.flow, aps=ctx.aps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "smoothing.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["K", "block_error"])
        for K, err in table:
            w.writerow([K, format(err, ".17g")])
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="calderon-lab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep", help="convergence sweep of ||C(x) - Pi_APS|| with rate fit")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="output directory for sweep.csv / summary.json")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("check", help="invariant suite and nonresonance gate (exit 0/1)")
    c.add_argument("--config", required=True)
    c.set_defaults(func=cmd_check)

    r = sub.add_parser("residue", help="residue of p(tau) / (tau^2 + rho^2)^j")
    r.add_argument("--numerator", required=True,
                   help="JSON list of coefficients by power of tau; scalars or matrices, "
                        "complex entries as strings like \"-1j\"")
    r.add_argument("--rho", type=float, required=True)
    r.add_argument("--power", type=int, required=True)
    r.set_defaults(func=cmd_residue)

    m = sub.add_parser("smoothing", help="mode-block errors of C(x) - Pi_APS (product models)")
    m.add_argument("--config", required=True)
    m.add_argument("--x", type=float, required=True)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_smoothing)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
