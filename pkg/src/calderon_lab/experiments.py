"""Configuration-driven convergence sweeps of ``||C(x) - Pi_APS||``."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .calderon_core import (
    APSData,
    ResonanceReport,
    aps_projector,
    calderon_projectors,
    check_nonresonance,
    lagrangian_graph_frame,
    random_frame,
    scattering_lagrangian,
)
from .cylinder_flow import FlowConfig, spectral_data_for
from .operator_model import BoundarySymbolSpec, SpectralData, lift_fiber_matrix, mode_rows
from .subspaces import Frame, lagrangian_residual, orthonormalize

__all__ = [
    "ConfigError",
    "ResonanceError",
    "SweepConfig",
    "SweepContext",
    "ConvergenceSample",
    "RateFit",
    "load_config",
    "parse_config",
    "config_hash",
    "spec_from_descriptor",
    "build_H0",
    "prepare_sweep",
    "run_sweep",
    "fit_rate",
    "smoothing_scan",
    "emit_report",
    "read_sweep_csv",
    "CSV_HEADER",
]

CSV_HEADER = ["x", "err_op", "err_fro", "idempotency_residual", "lagrangian_residual"]
TOP_KEYS = {"model", "H0", "sweep", "flow"}
MODEL_KEYS = {"rank", "N", "G", "symplectic", "max_x_power", "derivative", "potential"}
TERM_KEYS = {"harmonic", "x_power", "matrix"}
H0_KEYS = {"kind", "columns", "seed", "U", "dim"}
SWEEP_KEYS = {"x_min", "x_max", "points", "geometric", "error_floor", "resonance_threshold"}
FLOW_KEYS = {"rel_tol", "abs_tol", "renorm_every", "max_step", "growth_limit"}


class ConfigError(ValueError):
    pass


class ResonanceError(RuntimeError):
    """Cauchy data meets the negative spectral space; the sweep is not started."""

    def __init__(self, report: ResonanceReport):
        super().__init__(
            f"resonant Cauchy data: smallest angle to L_< is {report.min_angle:.3e} "
            f"(threshold {report.threshold:.1e})"
        )
        self.report = report


# -- configuration ---------------------------------------------------------------

def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: expected an object")
    extra = set(section) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")


def _complex(v) -> complex:
    if isinstance(v, str):
        return complex(v.replace(" ", ""))
    if isinstance(v, (int, float)):
        return complex(v)
    raise ConfigError(f"cannot read {v!r} as a complex number (use a number or a string like '1-2j')")


def _matrix(obj, where: str) -> np.ndarray:
    try:
        rows = obj if isinstance(obj, list) else [[obj]]
        rows = [r if isinstance(r, list) else [r] for r in rows]
        return np.array([[_complex(v) for v in r] for r in rows], dtype=complex)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def spec_from_descriptor(model: dict) -> tuple[BoundarySymbolSpec, int]:
    """``(spec, N)`` from the ``model`` section of a configuration."""
    _reject_unknown(model, MODEL_KEYS, "model")
    if "rank" not in model or "N" not in model:
        raise ConfigError("model: 'rank' and 'N' are required")
    coeffs: dict[str, dict] = {"derivative": {}, "potential": {}}
    for kind in coeffs:
        for i, term in enumerate(model.get(kind, [])):
            _reject_unknown(term, TERM_KEYS, f"model.{kind}[{i}]")
            key = (int(term.get("harmonic", 0)), int(term.get("x_power", 0)))
            mat = _matrix(term["matrix"], f"model.{kind}[{i}].matrix")
            coeffs[kind][key] = coeffs[kind].get(key, 0) + mat
    G = _matrix(model["G"], "model.G") if "G" in model else None
    spec = BoundarySymbolSpec(
        rank=int(model["rank"]),
        derivative_coeffs=coeffs["derivative"],
        potential_coeffs=coeffs["potential"],
        G=G,
        max_x_power=model.get("max_x_power"),
        symplectic=bool(model.get("symplectic", False)),
    )
    return spec, int(model["N"])


@dataclass(frozen=True)
class SweepConfig:
    model: dict
    H0: dict
    x_min: float = 1e-3
    x_max: float = 1e-1
    points: int = 12
    geometric: bool = True
    error_floor: float = 1e-12
    resonance_threshold: float = 1e-7
    flow: FlowConfig = field(default_factory=FlowConfig)
    raw: dict | None = None

    def __post_init__(self):
        if not 0 < self.x_min < self.x_max <= 1:
            raise ConfigError(f"sweep grid needs 0 < x_min < x_max <= 1, got {self.x_min}, {self.x_max}")
        if self.points < 4:
            raise ConfigError(f"sweep needs at least 4 points, got {self.points}")

    def x_grid(self) -> np.ndarray:
        """Grid points in descending order."""
        if self.geometric:
            xs = np.geomspace(self.x_max, self.x_min, self.points)
        else:
            xs = np.linspace(self.x_max, self.x_min, self.points)
        xs[0], xs[-1] = self.x_max, self.x_min
        return xs


def parse_config(raw: dict) -> SweepConfig:
    _reject_unknown(raw, TOP_KEYS, "config")
    for key in ("model", "H0"):
        if key not in raw:
            raise ConfigError(f"config: missing '{key}'")
    _reject_unknown(raw["H0"], H0_KEYS, "H0")
    sweep = raw.get("sweep", {})
    _reject_unknown(sweep, SWEEP_KEYS, "sweep")
    flow = raw.get("flow", {})
    _reject_unknown(flow, FLOW_KEYS, "flow")
    spec_from_descriptor(raw["model"])  # validate early
    return SweepConfig(model=raw["model"], H0=raw["H0"], flow=FlowConfig(**flow), raw=raw,
                       **{k: v for k, v in sweep.items()})


def load_config(path: str | Path) -> SweepConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(raw)


def config_hash(raw: dict) -> str:
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(canon.encode()).hexdigest()


def build_H0(desc: dict, spec: BoundarySymbolSpec, N: int) -> Frame:
    """Cauchy data at ``u = 0`` from an ``explicit`` / ``graph`` / ``random`` descriptor."""
    _reject_unknown(desc, H0_KEYS, "H0")
    n = spec.dim(N)
    kind = desc.get("kind")
    if kind == "explicit":
        cols = [[_complex(v) for v in c] for c in desc["columns"]]
        A = np.array(cols, dtype=complex).T
        if A.shape[0] != n:
            raise ConfigError(f"H0 columns have length {A.shape[0]}, truncation dimension is {n}")
        return orthonormalize(A)
    if kind == "graph":
        U = _matrix(desc["U"], "H0.U") if "U" in desc else None
        return lagrangian_graph_frame(lift_fiber_matrix(spec.G, N), U=U, seed=int(desc.get("seed", 0)))
    if kind == "random":
        return random_frame(n, desc.get("dim"), seed=int(desc.get("seed", 0)))
    raise ConfigError(f"H0.kind must be 'explicit', 'graph' or 'random', got {kind!r}")


# -- sweeps ----------------------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceSample:
    x: float
    err_op: float
    err_fro: float
    idempotency_residual: float
    lagrangian_residual: float | None = None


@dataclass(frozen=True)
class RateFit:
    epsilon_hat: float
    log_C: float
    r_squared: float
    n_used: int
    excluded_below_floor: int

    @property
    def reliable(self) -> bool:
        """No rate is claimed when the log-log fit explains less than 90% of the variance."""
        return self.r_squared >= 0.9


@dataclass(frozen=True, eq=False)
class SweepContext:
    spec: BoundarySymbolSpec
    N: int
    S: SpectralData
    H0: Frame
    resonance: ResonanceReport
    aps: APSData
    G_full: np.ndarray | None


def prepare_sweep(cfg: SweepConfig) -> SweepContext:
    """Model, Cauchy data, nonresonance gate and the APS limit for a sweep."""
    spec, N = spec_from_descriptor(cfg.model)
    H0 = build_H0(cfg.H0, spec, N)
    S = spectral_data_for(spec.product_part(), N)
    report = check_nonresonance(S, H0, cfg.resonance_threshold)
    aps = aps_projector(S, scattering_lagrangian(S, H0))
    G_full = None
    if spec.symplectic and 2 * H0.k == H0.n:
        G_full = lift_fiber_matrix(spec.G, N)
    return SweepContext(spec, N, S, H0, report, aps, G_full)


def run_sweep(cfg: SweepConfig, ctx: SweepContext | None = None) -> list[ConvergenceSample]:
    """One sample per grid point, in descending ``x``."""
    ctx = ctx or prepare_sweep(cfg)
    if ctx.resonance.resonant:
        raise ResonanceError(ctx.resonance)
    xs = cfg.x_grid()
    projectors = calderon_projectors(ctx.spec, ctx.N, ctx.H0, xs, cfg.flow, S=ctx.S)
    samples = []
    for x, C in zip(xs, projectors):
        D = C - ctx.aps.pi_aps
        lag = None
        if ctx.G_full is not None:
            w, V = np.linalg.eigh(C)
            lag = lagrangian_residual(V[:, w > 0.5], ctx.G_full)
        samples.append(ConvergenceSample(
            x=float(x),
            err_op=float(np.linalg.norm(D, 2)),
            err_fro=float(np.linalg.norm(D, "fro")),
            idempotency_residual=float(np.linalg.norm(C @ C - C, 2)),
            lagrangian_residual=lag,
        ))
    return samples


def fit_rate(samples: Sequence[ConvergenceSample], error_floor: float = 1e-12) -> RateFit:
    """Least-squares slope of ``log err_op`` against ``log x`` above ``error_floor``."""
    usable = [s for s in samples if s.err_op > error_floor]
    excluded = len(samples) - len(usable)
    if len(usable) < 3:
        raise ValueError(f"rate fit needs at least 3 samples above the error floor, got {len(usable)}")
    lx = np.log([s.x for s in usable])
    le = np.log([s.err_op for s in usable])
    slope, intercept = np.polyfit(lx, le, 1)
    resid = le - (slope * lx + intercept)
    ss_tot = float(np.sum((le - le.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), float(min(1.0, max(0.0, r2))), len(usable), excluded)


def smoothing_scan(spec: BoundarySymbolSpec, N: int, H0, x: float, cfg: FlowConfig | None = None,
                   aps: APSData | None = None) -> list[tuple[int, float]]:
    """Norm of the mode-``±K`` rows of ``C(x) - Pi_APS`` for ``K = 0..N``.

    Only meaningful for product models, where the difference is smoothing.
    """
    if not spec.is_product:
        raise ValueError("smoothing scan applies to product (x-independent) models only")
    if not 0 < x < 1:
        raise ValueError(f"x must lie in (0, 1), got {x}")
    S = spectral_data_for(spec, N)
    if aps is None:
        aps = aps_projector(S, scattering_lagrangian(S, H0))
    C = calderon_projectors(spec, N, H0, [x], cfg, S=S)[0]
    D = C - aps.pi_aps
    table = []
    for K in range(N + 1):
        rows = mode_rows(N, spec.rank, K) if K == 0 else np.concatenate(
            [mode_rows(N, spec.rank, -K), mode_rows(N, spec.rank, K)])
        table.append((K, float(np.linalg.norm(D[rows], 2))))
    return table


# -- reports -----------------------------------------------------------------------

def _fmt(v: float | None) -> str:
    return "" if v is None else format(float(v), ".17g")


def emit_report(samples: Sequence[ConvergenceSample], fit: RateFit | None, out_dir: str | Path,
                resonance: ResonanceReport | None = None, config: dict | None = None) -> tuple[Path, Path]:
    """Write ``sweep.csv`` and ``summary.json`` into ``out_dir`` (overwriting)."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "sweep.csv"
        with csv_path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for s in sorted(samples, key=lambda s: -s.x):
                w.writerow([_fmt(s.x), _fmt(s.err_op), _fmt(s.err_fro),
                            _fmt(s.idempotency_residual), _fmt(s.lagrangian_residual)])
        summary: dict[str, Any] = {
            "epsilon_hat": fit.epsilon_hat if fit else None,
            "log_C": fit.log_C if fit else None,
            "r_squared": fit.r_squared if fit else None,
            "n_used": fit.n_used if fit else None,
            "excluded_below_floor": fit.excluded_below_floor if fit else None,
            "resonance": resonance.as_dict() if resonance else None,
            "config_hash": config_hash(config) if config is not None else None,
        }
        json_path = out / "summary.json"
        json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write report into {out}: {exc}") from exc
    return csv_path, json_path


def read_sweep_csv(path: str | Path) -> list[ConvergenceSample]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        return [ConvergenceSample(
            x=float(r["x"]), err_op=float(r["err_op"]), err_fro=float(r["err_fro"]),
            idempotency_residual=float(r["idempotency_residual"]),
            lagrangian_residual=float(r["lagrangian_residual"]) if r["lagrangian_residual"] else None,
        ) for r in reader]
