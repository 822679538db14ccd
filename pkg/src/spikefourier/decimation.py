"""Noisy band-limited Fourier oracles and decimated-Prony reconstruction."""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .adversary import AdversaryPair, construct_adversary, random_cluster_signal
from .errors import (
    BoundViolationError,
    ConstructionError,
    ModelOrderError,
    NoiseBoundError,
    OutOfBandError,
    ReconstructionError,
    ToolkitError,
    ValidityRangeError,
)
from .signals import (
    TWO_PI,
    SpikeSignal,
    fourier_eval,
    fourier_eval_grid,
    node_distance,
    _fmt17,
    signal_to_json,
)

__all__ = [
    "FourierOracle",
    "DecimationConfig",
    "ReconstructionReport",
    "make_adversarial_oracle",
    "make_random_oracle",
    "decimated_prony",
    "error_scaling_sweep",
    "SweepRow",
    "SweepResult",
    "calibrate_noise_constant",
    "DEFAULT_NOISE_CONSTANT",
]

# Frozen prefactor for the guaranteed-recovery noise regime eps = c * (hN)^(2l).
# Chosen from the calibration sweep in scripts/calibrate_noise_constant.py:
# the l=2 reference tolerates far more noise, but the three-node initialization
# cliff sits near 0.01, so 0.005 keeps a 2x margin while staying at the scale
# of the classical (hN)^(2l)/100 regime.
DEFAULT_NOISE_CONSTANT = 0.005


@dataclass(frozen=True, eq=False)
class FourierOracle:
    """Measurement model Phi(s) = F(base)(s) + noise(s) on the band |s| <= bandwidth.

    The uniform bound |noise| <= epsilon is asserted on every sample drawn.
    When `measured` is set it overrides the clean-plus-noise path; this is how
    the adversarial oracle guarantees bit-identical data for both signals of a
    pair.
    """

    base_signal: SpikeSignal
    noise: Callable[[float], complex]
    epsilon: float
    bandwidth: float
    measured: Callable[[float], complex] | None = None

    def __post_init__(self):
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be nonnegative")
        if self.bandwidth <= 0.0:
            raise ValueError("bandwidth must be positive")

    def sample(self, s: float) -> complex:
        if abs(s) > self.bandwidth:
            raise OutOfBandError(f"|s|={abs(s):g} exceeds bandwidth {self.bandwidth:g}")
        n = self.noise(s)
        if abs(n) > self.epsilon * (1.0 + 1e-9) + 1e-300:
            raise NoiseBoundError(
                f"noise magnitude {abs(n):.3e} exceeds declared bound {self.epsilon:.3e}"
            )
        if self.measured is not None:
            return self.measured(s)
        return fourier_eval(self.base_signal, s) + n

    def sample_many(self, s_values) -> np.ndarray:
        return np.array([self.sample(float(s)) for s in np.asarray(s_values).reshape(-1)])


def _zero_noise(_s: float) -> complex:
    return 0j


def make_random_oracle(
    signal: SpikeSignal, epsilon: float, bandwidth: float, seed: int
) -> FourierOracle:
    """Oracle with hash-derived noise, uniform on the radius-epsilon disc.

    The draw depends only on (seed, s), never on query order, so repeated
    queries are reproducible and sweeps can parallelize freely.
    """
    if epsilon < 0.0:
        raise ValueError("epsilon must be nonnegative")

    def noise(s: float) -> complex:
        if epsilon == 0.0:
            return 0j
        base = struct.pack("<qd", seed, float(s))
        counter = 0
        while True:
            digest = hashlib.blake2b(
                base + struct.pack("<q", counter), digest_size=16
            ).digest()
            u = int.from_bytes(digest[:8], "little") / 2.0**64
            v = int.from_bytes(digest[8:], "little") / 2.0**64
            xx = 2.0 * u - 1.0
            yy = 2.0 * v - 1.0
            if xx * xx + yy * yy <= 1.0:
                return complex(epsilon * xx, epsilon * yy)
            counter += 1

    return FourierOracle(signal, noise, epsilon, bandwidth)


def make_adversarial_oracle(pair: AdversaryPair, which: str, bandwidth: float) -> FourierOracle:
    """Worst-case oracle: both signals of the pair produce the same data.

    The adversary cancels the transform difference, so the measured function
    is F(f0) whichever signal is "true"; epsilon is the grid maximum of the
    gap magnitude over the band. The bandwidth must stay within 1/(2*pi*h)
    for the pair's cluster scale h, where the gap envelope is controlled.
    """
    if which not in ("f0", "f1"):
        raise ValueError("which must be 'f0' or 'f1'")
    limit = 1.0 / (TWO_PI * pair.cluster.h)
    if bandwidth > limit * (1.0 + 1e-12):
        raise ValidityRangeError(
            f"bandwidth {bandwidth:g} exceeds the gap-bound range {limit:g}"
        )
    f0, f1 = pair.f0, pair.f1
    grid = np.linspace(-bandwidth, bandwidth, 1024)
    gap_mags = np.abs(fourier_eval_grid(f0, grid) - fourier_eval_grid(f1, grid))
    eps = float(gap_mags.max()) * (1.0 + 1e-6)

    def measured(s: float) -> complex:
        return fourier_eval(f0, s)

    if which == "f0":
        return FourierOracle(f0, _zero_noise, eps, bandwidth, measured=measured)

    def gap(s: float) -> complex:
        return fourier_eval(f0, s) - fourier_eval(f1, s)

    return FourierOracle(f1, gap, eps, bandwidth, measured=measured)


@dataclass(frozen=True)
class DecimationConfig:
    """Settings for the decimated-Prony solver.

    node_bound T must honestly bound the true node magnitudes; every stride
    Delta used satisfies the anti-aliasing condition 2 * Delta * T < 1 so the
    phase-to-node map stays injective on [-T, T].
    """

    model_order: int
    node_bound: float
    levels: int = 3
    refine_tol: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if self.model_order < 1:
            raise ValueError("model_order must be >= 1")
        if self.node_bound <= 0.0:
            raise ValueError("node_bound must be positive")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.refine_tol < 0.0:
            raise ValueError("refine_tol must be nonnegative")

    def to_json(self) -> str:
        return json.dumps(
            {
                "model_order": self.model_order,
                "node_bound": self.node_bound,
                "levels": self.levels,
                "refine_tol": self.refine_tol,
                "seed": self.seed,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "DecimationConfig":
        obj = json.loads(text)
        return cls(
            model_order=int(obj["model_order"]),
            node_bound=float(obj["node_bound"]),
            levels=int(obj.get("levels", 3)),
            refine_tol=float(obj.get("refine_tol", 1e-12)),
            seed=int(obj.get("seed", 0)),
        )


@dataclass(frozen=True, eq=False)
class ReconstructionReport:
    """Outcome of a reconstruction run.

    node_error and amplitude_error are filled against the oracle's base signal
    when its spike count matches the model order; residual is the max-norm
    data misfit over every sample the solver used.
    """

    recovered: SpikeSignal
    node_error: float | None
    amplitude_error: float | None
    residual: float
    stride_used: float
    refinement_iterations: int
    sample_points: tuple[float, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "recovered": json.loads(signal_to_json(self.recovered)),
            "node_error": self.node_error,
            "amplitude_error": self.amplitude_error,
            "residual": self.residual,
            "stride_used": self.stride_used,
            "refinement_iterations": self.refinement_iterations,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _model_eval(amps: np.ndarray, nodes: np.ndarray, s: np.ndarray) -> np.ndarray:
    phases = np.exp((-2j * np.pi) * s[:, None] * nodes[None, :])
    return np.sum(amps[None, :] * phases, axis=1)


def _residual_stack(params: np.ndarray, d: int, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    c = _model_eval(params[:d], params[d:], s) - v
    return np.concatenate([c.real, c.imag])


def _jac_stack(params: np.ndarray, d: int, s: np.ndarray) -> np.ndarray:
    amps, nodes = params[:d], params[d:]
    E = np.exp((-2j * np.pi) * s[:, None] * nodes[None, :])
    dA = E
    dX = amps[None, :] * (-2j * np.pi) * s[:, None] * E
    J = np.empty((2 * s.size, 2 * d))
    J[: s.size, :d] = dA.real
    J[s.size :, :d] = dA.imag
    J[: s.size, d:] = dX.real
    J[s.size :, d:] = dX.imag
    return J


def _gauss_newton(
    s: np.ndarray,
    v: np.ndarray,
    amps: np.ndarray,
    nodes: np.ndarray,
    tol: float,
    max_iter: int = 60,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Damped Gauss-Newton on the full sample set; steps halve until the
    residual 2-norm decreases, and only decreasing steps are accepted."""
    d = amps.size
    params = np.concatenate([amps, nodes])
    r = _residual_stack(params, d, s, v)
    rn = float(np.linalg.norm(r))
    iters = 0
    for _ in range(max_iter):
        if rn <= tol * math.sqrt(r.size):
            break
        J = _jac_stack(params, d, s)
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        lam = 1.0
        accepted = None
        for _ in range(31):
            cand = params + lam * step
            rc = _residual_stack(cand, d, s, v)
            rcn = float(np.linalg.norm(rc))
            if rcn < rn:
                accepted = (cand, rc, rcn)
                break
            lam *= 0.5
        if accepted is None:
            break
        params, r, rn = accepted
        iters += 1
        if float(np.max(np.abs(lam * step))) <= 1e-15 * (1.0 + float(np.max(np.abs(params)))):
            break
    return params[:d], params[d:], iters


def _hankel_nodes(vals: np.ndarray, d: int, stride: float) -> np.ndarray:
    """Nodes from 2d oracle samples treated as a Prony system in z = exp(-2*pi*i*stride*x)."""
    H = np.empty((d, d), dtype=complex)
    for i in range(d):
        H[i] = vals[i : i + d]
    sv = np.linalg.svd(H, compute_uv=False)
    # genuine order deficiency collapses sigma_min to roundoff level; merely
    # ill-conditioned tight clusters sit orders of magnitude above it
    if sv[0] == 0.0 or sv[-1] <= 1e-13 * sv[0]:
        raise ModelOrderError("decimated Hankel matrix is rank-deficient")
    coeffs = np.linalg.solve(H, -vals[d : 2 * d])
    roots = np.roots(np.concatenate(([1.0 + 0j], coeffs[::-1])))
    return np.sort(-np.angle(roots) / (TWO_PI * stride))


def _amplitude_lsq(s: np.ndarray, v: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    E = np.exp((-2j * np.pi) * s[:, None] * nodes[None, :])
    A = np.vstack([E.real, E.imag])
    b = np.concatenate([v.real, v.imag])
    return np.linalg.lstsq(A, b, rcond=None)[0]


def decimated_prony(oracle: FourierOracle, config: DecimationConfig) -> ReconstructionReport:
    """Reconstruct a spike train from band-limited noisy Fourier data.

    For each stride on a geometric ladder (largest anti-aliasing-safe stride,
    then halvings), 4d samples Phi(k * stride / 2) are drawn; the even-index
    samples form the decimated Prony system in z = exp(-2*pi*i*stride*x)
    solved through a Hankel system and companion roots, while the full set
    stabilizes the amplitude least squares. Every candidate is refined by
    damped Gauss-Newton against the union of all samples drawn, and the
    candidate with the smallest max-norm misfit wins.

    Raises ModelOrderError when every stride level is rank-deficient and
    ReconstructionError (with the best candidate attached) when no candidate
    explains the data within 10 * epsilon * sqrt(n) plus a roundoff floor.
    """
    d = config.model_order
    n_samp = 4 * d
    stride0 = min(0.45 / config.node_bound, 2.0 * oracle.bandwidth / (n_samp - 1))
    if stride0 <= 0.0:
        raise ValueError("no admissible stride: check node_bound and bandwidth")

    cache: dict[float, complex] = {}

    def query(sv: float) -> complex:
        if sv not in cache:
            cache[sv] = oracle.sample(sv)
        return cache[sv]

    levels = []
    for i in range(config.levels):
        stride = stride0 * 0.5**i
        svals = np.array([k * 0.5 * stride for k in range(n_samp)])
        vals = np.array([query(float(sv)) for sv in svals])
        levels.append((stride, svals, vals))

    union_s = np.array(sorted(cache.keys()))
    union_v = np.array([cache[sv] for sv in union_s.tolist()])

    candidates = []
    for stride, svals, vals in levels:
        try:
            nodes = _hankel_nodes(vals[0 : 4 * d : 2], d, stride)
        except ModelOrderError:
            continue
        amps = _amplitude_lsq(svals, vals, nodes)
        ra, rx, iters = _gauss_newton(union_s, union_v, amps, nodes, config.refine_tol)
        misfit = float(np.max(np.abs(_model_eval(ra, rx, union_s) - union_v)))
        candidates.append((misfit, stride, ra, rx, iters))

    if not candidates:
        raise ModelOrderError("Hankel matrix rank-deficient at every stride level")

    misfit, stride, ra, rx, iters = min(candidates, key=lambda c: c[0])
    try:
        recovered = SpikeSignal(ra, rx)
    except ValueError as exc:
        raise ReconstructionError(f"degenerate candidate: {exc}") from exc

    truth = oracle.base_signal
    node_err = None
    amp_err = None
    if truth.d == d:
        node_err = node_distance(truth.nodes, recovered.nodes)
        amp_err = float(np.max(np.abs(truth.amplitudes - recovered.amplitudes)))

    report = ReconstructionReport(
        recovered=recovered,
        node_error=node_err,
        amplitude_error=amp_err,
        residual=misfit,
        stride_used=stride,
        refinement_iterations=iters,
        sample_points=tuple(union_s.tolist()),
    )
    scale = 1.0 + float(np.sum(np.abs(ra)))
    threshold = 10.0 * oracle.epsilon * math.sqrt(len(union_s)) + 1e-9 * scale
    if misfit > threshold:
        raise ReconstructionError(
            f"best residual {misfit:.3e} exceeds acceptance threshold {threshold:.3e}",
            report=report,
        )
    return report


@dataclass(frozen=True)
class SweepRow:
    """One (epsilon, trial) cell of an error-scaling sweep."""

    l: int
    bandwidth: float
    epsilon: float
    h_epsilon: float
    trial: int
    node_error: float
    residual: float
    stride_used: float
    note: str = ""


@dataclass(frozen=True)
class SweepResult:
    rows: list
    summary: list

    def worst_errors(self) -> list:
        return list(self.summary)


def _unit_cluster(l: int, rng: np.random.Generator):
    """Trial geometry in unit scale: nodes spanning [-1/2, 1/2], amplitudes in [1, 2]."""
    amps = rng.uniform(1.0, 2.0, size=l)
    if l == 1:
        return amps, np.array([0.0])
    unit = np.linspace(-0.5, 0.5, l)
    if l > 2:
        unit[1:-1] += 0.1 / (l - 1) * rng.uniform(-1.0, 1.0, size=l - 2)
    return amps, unit


def _sweep_cell(
    l: int,
    bandwidth: float,
    epsilon: float,
    h: float,
    amps: np.ndarray,
    unit_nodes: np.ndarray,
    eta: float = 0.1,
) -> tuple[float, float, float]:
    """Worst-over-pair node error of the decimated reconstruction under the
    indistinguishable-data adversary; returns (error, residual, stride)."""
    from .signals import ClusterSpec

    nodes = h * unit_nodes
    if l >= 2:
        min_gap = float(np.diff(np.sort(nodes)).min())
        rho = min_gap / h
    else:
        rho = 1.0
    spec = ClusterSpec(l=l, h=h, rho=rho, interval_start=float(nodes.min()) if l >= 2 else -0.5 * h, kappa=0)
    f0 = SpikeSignal(amps, nodes)

    pair = None
    e = eta
    for _ in range(4):
        try:
            pair = construct_adversary(f0, spec, e)
            break
        except (ConstructionError, BoundViolationError):
            e *= 0.5
    if pair is None:
        raise ConstructionError("adversary construction failed for the sweep cell")

    n_eff = min(bandwidth, 0.999 / (TWO_PI * h))
    oracle = make_adversarial_oracle(pair, "f0", n_eff)
    config = DecimationConfig(model_order=l, node_bound=2.0 * h, levels=3)
    rep = decimated_prony(oracle, config)
    err = max(
        node_distance(pair.cluster_nodes("f0"), rep.recovered.nodes),
        node_distance(pair.cluster_nodes("f1"), rep.recovered.nodes),
    )
    return err, rep.residual, rep.stride_used


def error_scaling_sweep(
    l: int,
    bandwidth: float,
    epsilons,
    trials: int,
    seed: int,
    jobs: int = 1,
) -> SweepResult:
    """Worst-case node error versus noise level under adversarial data.

    For each epsilon the cluster scale is h = epsilon^(1/(2l-1)) / bandwidth;
    an adversarial pair is built on that cluster and the reconstruction error
    is scored against whichever of the two indistinguishable truths it missed
    more. Trial geometries are drawn once (in unit scale) and reused across
    the ladder so slopes are not polluted by geometry resampling.
    """
    eps_list = [float(e) for e in epsilons]
    if not eps_list or any(e <= 0.0 for e in eps_list):
        raise ValueError("epsilons must be positive")
    if any(b <= a for a, b in zip(eps_list, eps_list[1:])):
        pass  # ladder is typically descending; order is not enforced
    if trials < 1:
        raise ValueError("trials must be >= 1")

    geoms = [_unit_cluster(l, np.random.default_rng([seed, l, t])) for t in range(trials)]

    def run_cell(args):
        i, eps, t = args
        h = eps ** (1.0 / (2 * l - 1)) / bandwidth
        amps, unit_nodes = geoms[t]
        try:
            err, resid, stride = _sweep_cell(l, bandwidth, eps, h, amps, unit_nodes)
            return SweepRow(l, bandwidth, eps, h, t, err, resid, stride)
        except ToolkitError as exc:
            return SweepRow(
                l, bandwidth, eps, h, t, float("nan"), float("nan"), float("nan"),
                note=type(exc).__name__,
            )

    cells = [(i, eps, t) for i, eps in enumerate(eps_list) for t in range(trials)]
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(c) for c in cells]

    summary = []
    for i, eps in enumerate(eps_list):
        cell_rows = rows[i * trials : (i + 1) * trials]
        errs = [r.node_error for r in cell_rows if math.isfinite(r.node_error)]
        summary.append((eps, max(errs) if errs else float("nan")))
    return SweepResult(rows=rows, summary=summary)


def calibrate_noise_constant(
    bandwidth: float = 10.0,
    hN: float = 0.2,
    trials: int = 40,
    seed: int = 20240,
    success_rate: float = 0.95,
    margin: float = 0.35,
    steps: int = 16,
) -> float:
    """Calibrate the noise prefactor for the guaranteed-recovery regime.

    On the reference two-node cluster (nodes +-h/2, unit amplitudes,
    separation fraction 1), find by log-bisection the largest c such that
    random noise at epsilon = c * (hN)^4 still leaves the reconstructed nodes
    within margin * (rho h / 10) in at least success_rate of the trials. The
    margin keeps headroom so the same constant transfers to larger clusters.
    """
    l = 2
    h = hN / bandwidth
    truth = SpikeSignal(np.array([1.0, 1.0]), np.array([-0.5 * h, 0.5 * h]))
    target = margin * h / 10.0
    config = DecimationConfig(model_order=l, node_bound=2.0 * h, levels=3)
    need = math.ceil(success_rate * trials)

    def passes(c: float) -> bool:
        eps = c * hN ** (2 * l)
        good = 0
        for t in range(trials):
            oracle = make_random_oracle(truth, eps, bandwidth, seed=seed * 1000 + t)
            try:
                rep = decimated_prony(oracle, config)
            except ToolkitError:
                continue
            if rep.node_error is not None and rep.node_error <= target:
                good += 1
        return good >= need

    lo, hi = 1e-8, 10.0
    if not passes(lo):
        raise ToolkitError("reference instance fails even at negligible noise")
    if passes(hi):
        return hi
    for _ in range(steps):
        mid = math.sqrt(lo * hi)
        if passes(mid):
            lo = mid
        else:
            hi = mid
    return lo
