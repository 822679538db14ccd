"""Experiment drivers: benchmark tables, gap curves, bound checks, scaling sweeps."""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import mpmath
import numpy as np

from ._version import __version__
from .adversary import (
    construct_adversary,
    fourier_gap,
    random_cluster_signal,
    table_signals,
)
from .decimation import (
    DEFAULT_NOISE_CONSTANT,
    DecimationConfig,
    decimated_prony,
    error_scaling_sweep,
    make_random_oracle,
)
from .errors import BoundViolationError, ConstructionError, ToolkitError
from .signals import (
    TWO_PI,
    SpikeSignal,
    _fmt17,
    fourier_eval_grid,
    signal_from_json,
)

__all__ = [
    "ExperimentSpec",
    "RunManifest",
    "run_tables",
    "run_figure1",
    "run_gap_bound",
    "run_scaling",
    "run_adversary_demo",
    "run_decimate",
    "gap_bound_trial",
]

EXPERIMENT_KINDS = ("tables", "figure1", "gap_bound", "scaling", "adversary_demo", "decimate")


@dataclass(frozen=True)
class ExperimentSpec:
    """What to run: an experiment kind, its parameters, and where outputs go."""

    kind: str
    parameters: dict
    output_dir: str

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "parameters": self.parameters, "output_dir": self.output_dir}


@dataclass(frozen=True)
class RunManifest:
    """Record of a run: spec, toolkit version, wall time, and output digests."""

    spec: ExperimentSpec
    toolkit_version: str
    wall_time: float
    outputs: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "toolkit_version": self.toolkit_version,
            "wall_time": self.wall_time,
            "outputs": [{"path": p, "sha256": d} for p, d in self.outputs],
        }

    def write(self, out_dir: Path) -> Path:
        path = Path(out_dir) / "manifest.json"
        with open(path, "w", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _cell(value) -> str:
    if isinstance(value, float):
        return _fmt17(value)
    return str(value)


def _write_csv(path: Path, header: list, rows: list) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _finish(spec: ExperimentSpec, out: Path, files: list, t0: float) -> RunManifest:
    outputs = [(f.name, _sha256(f)) for f in files]
    manifest = RunManifest(
        spec=spec,
        toolkit_version=__version__,
        wall_time=time.perf_counter() - t0,
        outputs=outputs,
    )
    manifest.write(out)
    return manifest


def _loglog_slope(xs, ys) -> tuple[float, float]:
    """OLS slope of log y against log x with its standard error."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    n = lx.size
    slope, intercept = np.polyfit(lx, ly, 1)
    if n <= 2:
        return float(slope), float("nan")
    resid = ly - (slope * lx + intercept)
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    stderr = math.sqrt(float(np.sum(resid**2)) / (n - 2) / sxx)
    return float(slope), stderr


# ---------------------------------------------------------------------------
# tables


def _table2_entries_mp(family: str, h: float, eta: float, dps: int = 40):
    """Moment differences m_k(f0) - m_k(f1), k = 0..4, built symbolically from
    (h, eta) in extended precision so matched entries cancel exactly."""
    with mpmath.workdps(dps):
        hh = mpmath.mpf(h)
        ee = mpmath.mpf(eta)
        if family == "F1":
            a0 = a1 = [mpmath.mpf(1)] * 3
            x0 = [-hh - ee, -ee, hh + ee]
            x1 = [-hh - ee, ee, hh + ee]
        elif family == "F3":
            a0 = a1 = [mpmath.mpf(1)] * 3
            x0 = [-hh - ee, -ee, hh + 2 * ee]
            x1 = [-hh - 2 * ee, ee, hh + ee]
        elif family == "F5":
            et = ee / hh
            a0 = [-1 - 3 * et, 2 + 3 * et, mpmath.mpf(-1)]
            a1 = [mpmath.mpf(-1), 2 + 3 * et, -1 - 3 * et]
            x0 = [-hh - ee, -ee, hh + 2 * ee]
            x1 = [-hh - 2 * ee, ee, hh + ee]
        else:
            raise ValueError(f"unknown family {family!r}")
        diffs = []
        for k in range(5):
            m0 = mpmath.fsum(a * x**k for a, x in zip(a0, x0))
            m1 = mpmath.fsum(a * x**k for a, x in zip(a1, x1))
            diffs.append(m0 - m1)
        return diffs


def _table2_symbolic_mp(family: str, h: float, eta: float, dps: int = 40):
    """Closed-form expected differences for k = 0..4 (magnitude conventions)."""
    with mpmath.workdps(dps):
        hh = mpmath.mpf(h)
        ee = mpmath.mpf(eta)
        zero = mpmath.mpf(0)
        if family == "F1":
            return [zero, 2 * ee, zero, 2 * ee**3, zero]
        if family == "F3":
            dm3 = 2 * ((hh + 2 * ee) ** 3 - (hh + ee) ** 3 - ee**3)
            return [zero, zero, zero, dm3, zero]
        if family == "F5":
            return [zero] * 5
        raise ValueError(f"unknown family {family!r}")


def run_tables(h: float, eta: float, out) -> RunManifest:
    """Emit the benchmark pair parameters (table1.csv) and their moment
    differences in extended precision with a symbolic cross-check (table2.csv)."""
    if not (0.0 < eta <= 0.5 * h):
        raise ValueError("need 0 < eta <= h/2")
    t0 = time.perf_counter()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)

    rows1 = []
    for fam in ("F1", "F3", "F5"):
        pair = table_signals(fam, h, eta)
        for variant, sig in (("0", pair.f0), ("1", pair.f1)):
            rows1.append(
                [fam, variant]
                + [float(a) for a in sig.amplitudes.tolist()]
                + [float(x) for x in sig.nodes.tolist()]
            )
    t1 = out / "table1.csv"
    _write_csv(t1, ["family", "variant", "a1", "a2", "a3", "x1", "x2", "x3"], rows1)

    rows2 = []
    for fam in ("F1", "F3", "F5"):
        numeric = _table2_entries_mp(fam, h, eta)
        symbolic = _table2_symbolic_mp(fam, h, eta)
        for k, (nv, sv) in enumerate(zip(numeric, symbolic)):
            rows2.append([fam, k, float(nv), float(sv), float(abs(abs(nv) - abs(sv)))])
    t2 = out / "table2.csv"
    _write_csv(
        t2,
        ["family", "k", "delta_numeric", "delta_symbolic", "abs_discrepancy"],
        rows2,
    )

    spec = ExperimentSpec("tables", {"h": h, "eta": eta}, str(out))
    return _finish(spec, out, [t1, t2], t0)


# ---------------------------------------------------------------------------
# figure1


def run_figure1(h: float, eta: float, s_max: float, samples: int, out) -> RunManifest:
    """Emit the normalized gap curves |F(f0) - F(f1)| / h of the three benchmark
    pairs on [0, s_max] plus their fitted vanishing orders."""
    if samples < 16:
        raise ValueError("samples must be >= 16")
    if s_max <= 0.0:
        raise ValueError("s_max must be positive")
    t0 = time.perf_counter()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)

    grid = np.linspace(0.0, s_max, samples)
    curves = {}
    orders = {}
    for fam in ("F1", "F3", "F5"):
        pair = table_signals(fam, h, eta)
        gap = fourier_eval_grid(pair.f0, grid) - fourier_eval_grid(pair.f1, grid)
        curves[fam] = np.abs(gap) / h
        orders[fam] = fourier_gap(pair, s_max, max(samples, 256)).fitted_order

    rows = [
        [float(s), float(curves["F1"][i]), float(curves["F3"][i]), float(curves["F5"][i])]
        for i, s in enumerate(grid.tolist())
    ]
    csv_path = out / "figure1.csv"
    _write_csv(csv_path, ["s", "DF1_over_h", "DF3_over_h", "DF5_over_h"], rows)

    orders_path = out / "figure1_orders.json"
    _write_json(orders_path, {k: float(_fmt17(v)) for k, v in orders.items()})

    spec = ExperimentSpec(
        "figure1", {"h": h, "eta": eta, "s_max": s_max, "samples": samples}, str(out)
    )
    return _finish(spec, out, [csv_path, orders_path], t0)


# ---------------------------------------------------------------------------
# gap bound


def gap_bound_trial(l: int, h: float, rng: np.random.Generator, eta: float | None = None):
    """One random adversarial pair and its worst ratio |gap| / (C2 (h s)^(2l-1)).

    C2 = 2 * (4 l M) * (2 pi)^(2l-1) / (2l-1)! with M the base signal's
    amplitude bound; the grid covers the envelope's validity band
    |s| <= 1/(2 pi h). Returns (pair, max_ratio, C2).
    """
    if eta is None:
        eta = 0.1 if l <= 2 else 0.02
    center = float(rng.uniform(-0.5, 0.5))
    f0, spec = random_cluster_signal(l, h, rng, center=center)
    pair = None
    e = eta
    for _ in range(4):
        try:
            pair = construct_adversary(f0, spec, e)
            break
        except (ConstructionError, BoundViolationError):
            e *= 0.5
    if pair is None:
        raise ConstructionError("no feasible pair for the gap-bound trial")
    M = float(np.max(np.abs(f0.amplitudes)))
    c2 = 2.0 * (4.0 * l * M) * TWO_PI ** (2 * l - 1) / math.factorial(2 * l - 1)
    s_hi = 1.0 / (TWO_PI * h)
    grid = np.linspace(0.0, s_hi, 512)[1:]
    gap = np.abs(fourier_eval_grid(pair.f0, grid) - fourier_eval_grid(pair.f1, grid))
    envelope = c2 * (h * grid) ** (2 * l - 1)
    # additive allowance for the finite construction precision of the pair
    floor = 1e-11 * float(np.sum(np.abs(f0.amplitudes)))
    ratio = float(np.max(gap / (envelope + floor)))
    return pair, ratio, c2


def run_gap_bound(l_values, trials: int, h: float, seed: int, out) -> RunManifest:
    """Check the gap envelope on random adversarial pairs; emit per-pair ratios."""
    t0 = time.perf_counter()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for l in l_values:
        for t in range(trials):
            rng = np.random.default_rng([seed, l, t])
            try:
                pair, ratio, c2 = gap_bound_trial(l, h, rng)
                rows.append([int(l), t, h, pair.eta, c2, ratio, int(ratio <= 1.0)])
            except ToolkitError as exc:
                rows.append([int(l), t, h, float("nan"), float("nan"), float("nan"), 0])
    csv_path = out / "gap_bound.csv"
    _write_csv(csv_path, ["l", "trial", "h", "eta", "C2", "max_ratio", "ok"], rows)
    summary = {
        "pairs": len(rows),
        "all_ok": all(r[-1] == 1 for r in rows),
        "worst_ratio": max((r[5] for r in rows if math.isfinite(r[5])), default=float("nan")),
    }
    json_path = out / "gap_bound_summary.json"
    _write_json(json_path, summary)
    spec = ExperimentSpec(
        "gap_bound",
        {"l_values": list(l_values), "trials": trials, "h": h, "seed": seed},
        str(out),
    )
    return _finish(spec, out, [csv_path, json_path], t0)


# ---------------------------------------------------------------------------
# scaling


def run_scaling(
    l: int,
    bandwidth: float,
    epsilon_ladder,
    trials: int,
    seed: int,
    out,
    jobs: int = 1,
) -> RunManifest:
    """Run the worst-case error sweep and emit per-cell rows plus a slope fit."""
    if l not in (1, 2, 3):
        raise ValueError("l must be 1, 2 or 3")
    eps = [float(e) for e in epsilon_ladder]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilon ladder must be strictly descending")
    t0 = time.perf_counter()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)

    result = error_scaling_sweep(l, bandwidth, eps, trials, seed, jobs=jobs)
    rows = [
        [r.l, r.bandwidth, r.epsilon, r.h_epsilon, r.trial, r.node_error, r.residual,
         r.stride_used, r.note]
        for r in result.rows
    ]
    csv_path = out / "scaling.csv"
    _write_csv(
        csv_path,
        ["l", "N", "epsilon", "h_epsilon", "trial", "node_error", "residual",
         "stride_used", "note"],
        rows,
    )

    pts = [(e, w) for e, w in result.summary if math.isfinite(w) and w > 0.0]
    if len(pts) >= 2:
        slope, stderr = _loglog_slope([p[0] for p in pts], [p[1] for p in pts])
    else:
        slope, stderr = float("nan"), float("nan")
    fit = {
        "l": l,
        "bandwidth": bandwidth,
        "slope": slope,
        "stderr": stderr,
        "ci95": [slope - 1.96 * stderr, slope + 1.96 * stderr]
        if math.isfinite(stderr)
        else [float("nan"), float("nan")],
        "expected_slope": 1.0 / (2 * l - 1),
        "cells_used": len(pts),
    }
    fit_path = out / "scaling_fit.json"
    _write_json(fit_path, fit)
    spec = ExperimentSpec(
        "scaling",
        {
            "l": l,
            "bandwidth": bandwidth,
            "epsilon_ladder": eps,
            "trials": trials,
            "seed": seed,
        },
        str(out),
    )
    return _finish(spec, out, [csv_path, fit_path], t0)


# ---------------------------------------------------------------------------
# adversary demo


def run_adversary_demo(
    l: int,
    h: float,
    eta: float,
    seed: int,
    out,
    family: str | None = None,
    s_max: float | None = None,
    samples: int = 512,
) -> RunManifest:
    """Construct one adversarial pair (random cluster or a stock family) and
    emit the pair JSON plus its gap profile CSV."""
    t0 = time.perf_counter()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if family is not None:
        pair = table_signals(family, h, eta)
    else:
        rng = np.random.default_rng(seed)
        f0, spec_cluster = random_cluster_signal(l, h, rng)
        pair = construct_adversary(f0, spec_cluster, eta)
    pair_path = out / "pair.json"
    with open(pair_path, "w", newline="\n") as fh:
        fh.write(pair.to_json() + "\n")
    if s_max is None:
        s_max = 1.0 / (TWO_PI * pair.cluster.h)
    profile = fourier_gap(pair, s_max, samples)
    gap_path = out / "gap.csv"
    profile.write_csv(gap_path)
    info_path = out / "adversary_summary.json"
    _write_json(
        info_path,
        {
            "eta": pair.eta,
            "order": pair.order,
            "node_displacement": pair.node_displacement,
            "moment_residual": pair.moment_residual,
            "fitted_order": profile.fitted_order,
            "fitted_constant": profile.fitted_constant,
        },
    )
    spec = ExperimentSpec(
        "adversary_demo",
        {"l": l, "h": h, "eta": eta, "seed": seed, "family": family,
         "s_max": s_max, "samples": samples},
        str(out),
    )
    return _finish(spec, out, [pair_path, gap_path, info_path], t0)


# ---------------------------------------------------------------------------
# decimate


def run_decimate(
    signal_path,
    epsilon: float,
    bandwidth: float,
    model_order: int,
    node_bound: float,
    levels: int,
    seed: int,
    out,
) -> RunManifest:
    """Reconstruct a signal (JSON file) from a random-noise oracle; emit the report."""
    t0 = time.perf_counter()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(signal_path) as fh:
        truth = signal_from_json(fh.read())
    oracle = make_random_oracle(truth, epsilon, bandwidth, seed)
    config = DecimationConfig(
        model_order=model_order, node_bound=node_bound, levels=levels, seed=seed
    )
    report = decimated_prony(oracle, config)
    report_path = out / "report.json"
    with open(report_path, "w", newline="\n") as fh:
        fh.write(report.to_json() + "\n")
    spec = ExperimentSpec(
        "decimate",
        {
            "signal": str(signal_path),
            "epsilon": epsilon,
            "bandwidth": bandwidth,
            "model_order": model_order,
            "node_bound": node_bound,
            "levels": levels,
            "seed": seed,
        },
        str(out),
    )
    return _finish(spec, out, [report_path], t0)
