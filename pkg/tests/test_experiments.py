import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from calderon_lab.cli import main
from calderon_lab.experiments import (
    CSV_HEADER,
    ConfigError,
    ConvergenceSample,
    ResonanceError,
    SweepConfig,
    config_hash,
    emit_report,
    fit_rate,
    parse_config,
    prepare_sweep,
    read_sweep_csv,
    run_sweep,
    smoothing_scan,
    spec_from_descriptor,
)
from calderon_lab.operator_model import lift_fiber_matrix
from calderon_lab.calderon_core import lagrangian_graph_frame
from calderon_lab.subspaces import gap_distance, projector_from_frame

from helpers import dirac_model, mode_pair_frame, scalar_model


def two_mode_raw(columns=((1.0, 1.0),), **sweep):
    return {
        "model": {"rank": 2, "N": 0, "potential": [{"matrix": [[1, 0], [0, -1]]}]},
        "H0": {"kind": "explicit", "columns": [list(c) for c in columns]},
        "sweep": {"x_min": 1e-3, "x_max": 1e-1, "points": 12, **sweep},
    }


def model_descriptor(spec, N):
    """Config ``model`` section reproducing ``spec``."""
    d = {"rank": spec.rank, "N": N, "symplectic": spec.symplectic, "derivative": [], "potential": []}
    for kind, coeffs in (("derivative", spec.derivative_coeffs), ("potential", spec.potential_coeffs)):
        for (l, p), M in sorted(coeffs.items()):
            d[kind].append({"harmonic": l, "x_power": p,
                            "matrix": [[str(complex(v)) for v in row] for row in M]})
    return d


def samples_from(xs, errs):
    return [ConvergenceSample(x=float(x), err_op=float(e), err_fro=float(e), idempotency_residual=0.0)
            for x, e in zip(xs, errs)]


# -- rate fitting --------------------------------------------------------------

def test_fit_exact_square():
    xs = np.geomspace(1e-1, 1e-3, 10)
    fit = fit_rate(samples_from(xs, xs**2))
    assert fit.epsilon_hat == pytest.approx(2.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.reliable


def test_fit_prefactor():
    xs = np.geomspace(1e-1, 1e-3, 10)
    fit = fit_rate(samples_from(xs, 3 * xs**0.5))
    assert fit.epsilon_hat == pytest.approx(0.5, abs=1e-12)
    assert fit.log_C == pytest.approx(math.log(3), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0.1, 4.0), c=st.floats(0.01, 100.0))
def test_fit_recovers_any_exponent(a, c):
    xs = np.geomspace(0.3, 1e-3, 12)
    fit = fit_rate(samples_from(xs, c * xs**a))
    assert abs(fit.epsilon_hat - a) < 1e-10
    assert fit.n_used + fit.excluded_below_floor == 12


def test_fit_excludes_floor_and_needs_three_points():
    xs = np.geomspace(1e-1, 1e-6, 6)
    errs = xs**3
    fit = fit_rate(samples_from(xs, errs), error_floor=1e-12)
    assert fit.excluded_below_floor == 2 and fit.n_used == 4
    with pytest.raises(ValueError, match="at least 3"):
        fit_rate(samples_from(xs, errs), error_floor=1e-7)


def test_fit_flags_poor_fits():
    xs = np.geomspace(1e-1, 1e-3, 8)
    errs = np.where(np.arange(8) % 2, 1e-2, 1e-4)
    assert not fit_rate(samples_from(xs, errs)).reliable


# -- sweeps ----------------------------------------------------------------------

def test_two_mode_sweep_closed_form():
    cfg = parse_config(two_mode_raw())
    samples = run_sweep(cfg)
    xs = [s.x for s in samples]
    assert xs == sorted(xs, reverse=True) and len(xs) == 12
    for s in samples:
        assert s.err_op == pytest.approx(s.x**2 / math.sqrt(1 + s.x**4), abs=1e-9)
        assert s.err_op <= s.err_fro + 1e-15
        assert s.idempotency_residual < 1e-12
        assert s.lagrangian_residual is None
    assert samples[-1].x == 1e-3
    assert samples[-1].err_op == pytest.approx(1e-6, abs=1e-9)
    fit = fit_rate(samples)
    assert fit.epsilon_hat == pytest.approx(2.0, abs=0.02)


def test_sweep_at_x_one_is_initial_gap():
    raw = two_mode_raw(x_max=1.0)
    samples = run_sweep(parse_config(raw))
    ctx = prepare_sweep(parse_config(raw))
    expected = gap_distance(projector_from_frame(ctx.H0), ctx.aps.pi_aps)
    assert samples[0].x == 1.0
    assert samples[0].err_op == pytest.approx(expected, abs=1e-15)


def test_resonant_sweep_aborts():
    cfg = parse_config(two_mode_raw(columns=((0.0, 1.0),)))
    with pytest.raises(ResonanceError) as info:
        run_sweep(cfg)
    assert info.value.report.resonant
    assert info.value.report.min_angle < 1e-7


def test_product_sweep_strictly_decreasing():
    spec = dirac_model()
    raw = {"model": model_descriptor(spec, 8), "H0": {"kind": "graph", "seed": 0},
           "sweep": {"x_min": 1e-3, "x_max": 0.5, "points": 10}}
    samples = run_sweep(parse_config(raw))
    errs = np.array([s.err_op for s in samples])
    small = errs[errs < 0.1]
    assert small.size >= 5
    assert np.all(np.diff(small) < 0)
    assert all(s.lagrangian_residual < 1e-9 for s in samples)


def test_sweep_is_deterministic(tmp_path):
    raw = {"model": model_descriptor(dirac_model(perturbation=0.1), 3), "H0": {"kind": "graph", "seed": 4},
           "sweep": {"x_min": 1e-2, "x_max": 0.5, "points": 5}}
    outputs = []
    for run in range(2):
        cfg = parse_config(json.loads(json.dumps(raw)))
        samples = run_sweep(cfg)
        csv_path, _ = emit_report(samples, fit_rate(samples), tmp_path / str(run), config=raw)
        outputs.append(csv_path.read_bytes())
    assert outputs[0] == outputs[1]


def test_perturbation_continuity():
    # epsilon_hat of the perturbed model approaches the product value as the perturbation shrinks
    N = 8

    def eps(p):
        raw = {"model": model_descriptor(dirac_model(perturbation=p), N), "H0": {"kind": "graph", "seed": 0},
               "sweep": {"x_min": 1e-3, "x_max": 0.3, "points": 12}}
        return fit_rate(run_sweep(parse_config(raw))).epsilon_hat

    base = eps(0.0)
    gaps = [abs(eps(p) - base) for p in (0.1, 0.01, 0.001)]
    assert gaps[0] > gaps[1] > gaps[2]


# -- smoothing scan ----------------------------------------------------------------

def test_smoothing_scan_scalar_closed_form():
    N, x = 12, 0.5
    table = smoothing_scan(scalar_model(), N, mode_pair_frame(N), x)
    assert [K for K, _ in table] == list(range(N + 1))
    assert table[0][1] < 1e-15  # kernel mode: constant, already in the limit
    for K, err in table[1:]:
        # the (e_K, e_-K) plane rotates to tan(theta) = x^{2K}
        assert err == pytest.approx(math.sin(math.atan(x ** (2 * K))), rel=1e-9)


def test_smoothing_scan_super_polynomial_with_potential():
    spec = dirac_model()
    N = 24
    H0 = lagrangian_graph_frame(lift_fiber_matrix(spec.G, N), seed=0)
    err = np.array([e for _, e in smoothing_scan(spec, N, H0, 0.5)])
    K = np.arange(N + 1)
    assert np.polyfit(K[4:17], np.log(err[4:17]), 1)[0] < 0
    early = np.polyfit(np.log(K[4:11]), np.log(err[4:11]), 1)[0]
    late = np.polyfit(np.log(K[10:17]), np.log(err[10:17]), 1)[0]
    assert late < early < 0


def test_smoothing_scan_rejects_perturbed_model():
    spec = dirac_model(perturbation=0.1)
    with pytest.raises(ValueError, match="product"):
        smoothing_scan(spec, 4, np.eye(spec.dim(4))[:, :9], 0.5)
    with pytest.raises(ValueError, match="x must"):
        smoothing_scan(scalar_model(), 2, mode_pair_frame(2), 1.0)


# -- reports ---------------------------------------------------------------------

def test_report_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    samples = [ConvergenceSample(x=float(x), err_op=float(rng.random()), err_fro=float(rng.random() + 1),
                                 idempotency_residual=float(rng.random() * 1e-14),
                                 lagrangian_residual=float(rng.random()) if i % 2 else None)
               for i, x in enumerate(np.geomspace(1e-1, 1e-3, 7)[::-1])]
    csv_path, json_path = emit_report(samples, None, tmp_path)
    back = read_sweep_csv(csv_path)
    assert back == sorted(samples, key=lambda s: -s.x)
    with csv_path.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == CSV_HEADER
    assert len(rows) == 8


def test_two_sample_report(tmp_path):
    csv_path, _ = emit_report(samples_from([0.1, 0.01], [1e-2, 1e-4]), None, tmp_path)
    assert len(csv_path.read_text().splitlines()) == 3


def test_empty_report(tmp_path):
    csv_path, json_path = emit_report([], None, tmp_path)
    assert csv_path.read_text() == ",".join(CSV_HEADER) + "\n"
    summary = json.loads(json_path.read_text())
    assert set(summary) == {"epsilon_hat", "log_C", "r_squared", "n_used", "excluded_below_floor",
                            "resonance", "config_hash"}
    assert summary["epsilon_hat"] is None


def test_report_overwrites_and_summarizes(tmp_path):
    raw = two_mode_raw()
    cfg = parse_config(raw)
    ctx = prepare_sweep(cfg)
    samples = run_sweep(cfg, ctx)
    fit = fit_rate(samples)
    emit_report(samples_from([0.5], [0.1]), None, tmp_path)
    csv_path, json_path = emit_report(samples, fit, tmp_path, resonance=ctx.resonance, config=raw)
    assert len(read_sweep_csv(csv_path)) == 12
    summary = json.loads(json_path.read_text())
    assert summary["epsilon_hat"] == fit.epsilon_hat
    assert summary["n_used"] == 12 and summary["excluded_below_floor"] == 0
    assert summary["resonance"]["resonant"] is False
    assert summary["config_hash"] == config_hash(raw)


def test_config_hash_ignores_key_order():
    a = {"model": {"rank": 1, "N": 2}, "H0": {"kind": "random"}}
    b = {"H0": {"kind": "random"}, "model": {"N": 2, "rank": 1}}
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash({**a, "sweep": {"points": 5}})


# -- configuration -------------------------------------------------------------------

@pytest.mark.parametrize("mutate", [
    lambda r: r.update(extra=1),
    lambda r: r["model"].update(mass=1.0),
    lambda r: r["sweep"].update(step=2),
    lambda r: r["H0"].update(colour="red"),
    lambda r: r.update(flow={"tolerance": 1e-3}),
    lambda r: r["model"]["potential"][0].update(power=1),
])
def test_unknown_keys_rejected(mutate):
    raw = two_mode_raw()
    mutate(raw)
    with pytest.raises(ConfigError, match="unknown keys"):
        parse_config(raw)


def test_invalid_grids_rejected():
    with pytest.raises(ConfigError):
        parse_config(two_mode_raw(x_min=0.5, x_max=0.1))
    with pytest.raises(ConfigError):
        parse_config(two_mode_raw(points=3))


def test_descriptor_reproduces_spec():
    spec = dirac_model(perturbation=0.1)
    rebuilt, N = spec_from_descriptor(model_descriptor(spec, 5))
    assert N == 5 and rebuilt.symplectic
    for key, M in spec.potential_coeffs.items():
        np.testing.assert_array_equal(rebuilt.potential_coeffs[key], M)


def test_geometric_grid_endpoints():
    xs = SweepConfig(model={}, H0={}, x_min=1e-4, x_max=0.1, points=4).x_grid()
    np.testing.assert_allclose(xs, [1e-1, 1e-2, 1e-3, 1e-4], rtol=1e-12)
    assert xs[0] == 0.1 and xs[-1] == 1e-4


# -- command line ----------------------------------------------------------------------

def write_config(tmp_path, raw, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return str(path)


def test_cli_sweep(tmp_path, capsys):
    cfg = write_config(tmp_path, two_mode_raw())
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "out")]) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["epsilon_hat"] == pytest.approx(2.0, abs=0.02)
    assert "epsilon_hat" in capsys.readouterr().out


def test_cli_sweep_resonant(tmp_path):
    cfg = write_config(tmp_path, two_mode_raw(columns=((0.0, 1.0),)))
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "out")]) == 2
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["resonance"]["resonant"] is True
    assert read_sweep_csv(tmp_path / "out" / "sweep.csv") == []


def test_cli_check(tmp_path, capsys):
    raw = {"model": model_descriptor(dirac_model(perturbation=0.1), 4), "H0": {"kind": "graph", "seed": 0}}
    assert main(["check", "--config", write_config(tmp_path, raw)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "PASS  nonresonance gate" in out
    bad = two_mode_raw(columns=((0.0, 1.0),))
    assert main(["check", "--config", write_config(tmp_path, bad, "bad.json")]) == 1
    assert "FAIL  nonresonance gate" in capsys.readouterr().out


def test_cli_residue(capsys):
    num = json.dumps([[[1, 0], [0, -1]], [["-1j", 0], [0, "-1j"]]])
    assert main(["residue", "--numerator", num, "--rho", "1", "--power", "1"]) == 0
    rows = [[complex(v) for v in line.split()] for line in capsys.readouterr().out.splitlines()]
    np.testing.assert_allclose(rows, np.diag([1.0, 0.0]), atol=1e-15)


def test_cli_residue_scalar_prints_17_digits(capsys):
    assert main(["residue", "--numerator", "[1]", "--rho", "3", "--power", "1"]) == 0
    value = capsys.readouterr().out.strip()
    assert complex(value) == complex(1 / 6)
    assert value.startswith(format(1 / 6, ".17g"))


def test_cli_smoothing(tmp_path):
    raw = {"model": {"rank": 1, "N": 6, "derivative": [{"matrix": [[1]]}]},
           "H0": {"kind": "explicit", "columns": mode_pair_frame(6).T.real.tolist()}}
    assert main(["smoothing", "--config", write_config(tmp_path, raw), "--x", "0.5",
                 "--out", str(tmp_path / "sm")]) == 0
    with (tmp_path / "sm" / "smoothing.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["K", "block_error"]
    assert float(rows[3][1]) == pytest.approx(math.sin(math.atan(0.5**4)), rel=1e-9)


def test_cli_reports_config_errors(tmp_path, capsys):
    raw = two_mode_raw()
    raw["bogus"] = True
    assert main(["check", "--config", write_config(tmp_path, raw)]) == 1
    assert "unknown keys" in capsys.readouterr().err
    assert main(["check", "--config", str(tmp_path / "missing.json")]) == 1
