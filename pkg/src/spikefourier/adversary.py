"""Moment-matched adversarial signal pairs on clustered nodes and their Fourier gaps."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import mpmath
import numpy as np

from .errors import (
    BoundViolationError,
    ConditioningError,
    ConstructionError,
    GapUnderflowError,
    NoConvergenceError,
)
from .signals import (
    TWO_PI,
    ClusterSpec,
    SpikeSignal,
    cluster_affine,
    fourier_eval_grid,
    moments,
    moments_mp,
    node_distance,
    signal_to_json,
    _fmt17,
)
from .prony import newton_invert

__all__ = [
    "AdversaryPair",
    "FourierGapProfile",
    "MomentMatchReport",
    "construct_adversary",
    "find_max_eta",
    "verify_moment_match",
    "fourier_gap",
    "table_signals",
    "random_cluster_signal",
    "two_node_match",
]


@dataclass(frozen=True, eq=False)
class AdversaryPair:
    """Two signals whose moments m_0..m_{order-1} coincide while m_order differs.

    `eta` is the last-moment perturbation in cluster-normalized coordinates
    (cluster window mapped onto [-1/2, 1/2]); `node_displacement` is the
    max-norm distance between the two cluster node sets.
    """

    f0: SpikeSignal
    f1: SpikeSignal
    cluster: ClusterSpec
    eta: float
    order: int
    node_displacement: float
    moment_residual: float

    def cluster_nodes(self, which: str) -> np.ndarray:
        sig = self.f0 if which == "f0" else self.f1
        return np.sort(sig.nodes[self.cluster.kappa : self.cluster.kappa + self.cluster.l])

    def to_json(self) -> str:
        payload = {
            "f0": json.loads(signal_to_json(self.f0)),
            "f1": json.loads(signal_to_json(self.f1)),
            "cluster": {
                "l": self.cluster.l,
                "h": float(_fmt17(self.cluster.h)),
                "rho": float(_fmt17(self.cluster.rho)),
                "interval_start": float(_fmt17(self.cluster.interval_start)),
                "kappa": self.cluster.kappa,
            },
            "eta": float(_fmt17(self.eta)),
            "order": self.order,
            "node_displacement": float(_fmt17(self.node_displacement)),
            "moment_residual": float(_fmt17(self.moment_residual)),
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def _check_feasible(cluster_signal: SpikeSignal, bounds) -> None:
    """Admissibility of a normalized displaced cluster: nodes within the doubled
    host interval [-1, 1] and amplitude magnitudes inside the relaxed box."""
    if float(np.max(np.abs(cluster_signal.nodes))) > 1.0 + 1e-9:
        raise BoundViolationError(
            "displaced cluster nodes leave the doubled host interval; reduce eta"
        )
    mags = np.abs(cluster_signal.amplitudes)
    if float(mags.min()) < bounds.m * (1.0 - 1e-12) or float(mags.max()) > bounds.M * (
        1.0 + 1e-12
    ):
        raise BoundViolationError(
            "displaced cluster amplitudes leave the relaxed bounds; reduce eta"
        )


def _matched_residual_mp(f0: SpikeSignal, f1: SpikeSignal, order: int, dps: int = 40) -> float:
    """max |m_k(f0) - m_k(f1)| over k < order, in extended precision."""
    if order < 1:
        return 0.0
    m0 = moments_mp(f0, order, dps=dps)
    m1 = moments_mp(f1, order, dps=dps)
    return float(max(abs(p - q) for p, q in zip(m0, m1)))


def construct_adversary(
    f0: SpikeSignal,
    cluster: ClusterSpec,
    eta: float,
    newton_tol: float | None = None,
    max_iter: int = 60,
) -> AdversaryPair:
    """Displace a cluster while pinning its moments m_0..m_{2l-2}.

    The cluster is mapped onto [-1/2, 1/2]; the full 2l-moment image of the
    normalized cluster is then driven to mu0 + (0, ..., 0, eta) by damped
    Newton continuation (adaptive sub-steps in eta, halved on failure, floored
    at 1e-8 * |eta|). The perturbed cluster is mapped back and spliced into
    the untouched non-cluster spikes.

    Raises ConstructionError when continuation stalls (carrying the largest
    achieved eta) and BoundViolationError when the result leaves the relaxed
    amplitude box or the doubled node interval.
    """
    if eta == 0.0:
        raise ValueError("eta must be nonzero")
    bounds = f0.tightest_bounds().relaxed(2.0)
    amap = cluster_affine(cluster, 0.0, 0.5)
    idx = cluster.indices
    base = SpikeSignal(f0.amplitudes[idx], amap(f0.nodes[idx]))
    twol = 2 * cluster.l
    mu0 = moments(base, twol)
    if newton_tol is None:
        newton_tol = 1e-13 * max(1.0, float(np.max(np.abs(mu0))), abs(eta))

    current = base
    achieved = 0.0
    step = eta
    floor = 1e-8 * abs(eta)
    attempts = 0
    while achieved != eta:
        attempts += 1
        if attempts > 200:
            raise ConstructionError(
                f"continuation exceeded the sub-step budget at eta={achieved:.3e}",
                eta_achieved=achieved,
            )
        remaining = eta - achieved
        if abs(step) >= abs(remaining) or step * remaining <= 0.0:
            step = remaining
            next_eta = eta
        else:
            next_eta = achieved + step
        target = mu0.copy()
        target[-1] += next_eta
        try:
            current = newton_invert(target, current, newton_tol, max_iter)
        except (NoConvergenceError, ConditioningError):
            step *= 0.5
            if abs(step) < floor:
                raise ConstructionError(
                    f"continuation stalled at eta={achieved:.3e} of {eta:.3e}",
                    eta_achieved=achieved,
                )
            continue
        achieved = next_eta
        _check_feasible(current, bounds)
        step *= 2.0

    inv = amap.inverse()
    new_nodes = inv(current.nodes)
    f1 = f0.with_spikes_replaced(idx, current.amplitudes, new_nodes)
    displacement = node_distance(np.sort(f0.nodes[idx]), np.sort(new_nodes))
    residual = _matched_residual_mp(f0, f1, twol - 1)
    return AdversaryPair(
        f0=f0,
        f1=f1,
        cluster=cluster,
        eta=eta,
        order=twol - 1,
        node_displacement=displacement,
        moment_residual=residual,
    )


def find_max_eta(
    f0: SpikeSignal,
    cluster: ClusterSpec,
    eta_hi: float = 0.8,
    refine: int = 8,
) -> AdversaryPair:
    """Largest feasible last-moment perturbation, by bisection over |eta|.

    Both signs are tried; feasibility means the continuation converges and the
    relaxed amplitude/node bounds hold. Returns the feasible pair with the
    larger node displacement.
    """
    best = None
    for sign in (1.0, -1.0):
        lo_pair = None
        lo = None
        hi = sign * eta_hi
        mag = abs(eta_hi)
        while mag > 1e-6:
            try:
                lo_pair = construct_adversary(f0, cluster, sign * mag)
                lo = sign * mag
                break
            except (ConstructionError, BoundViolationError):
                mag *= 0.5
        if lo_pair is None:
            continue
        if abs(lo) < abs(hi):
            for _ in range(refine):
                mid = 0.5 * (lo + hi)
                try:
                    lo_pair = construct_adversary(f0, cluster, mid)
                    lo = mid
                except (ConstructionError, BoundViolationError):
                    hi = mid
        if best is None or lo_pair.node_displacement > best.node_displacement:
            best = lo_pair
    if best is None:
        raise ConstructionError("no feasible eta found down to 1e-6", eta_achieved=0.0)
    return best


@dataclass(frozen=True)
class MomentMatchReport:
    """Result of checking an adversarial pair's matched and mismatched moments."""

    residual: float
    mismatch: float
    threshold: float
    degenerate: bool


def verify_moment_match(pair: AdversaryPair, dps: int = 40) -> MomentMatchReport:
    """Extended-precision check of the pair's moment pattern.

    residual is max |m_k(f0) - m_k(f1)| over the matched range k < order;
    mismatch is |m_order(f0) - m_order(f1)| and must clear |eta|/2 rescaled by
    the cluster length scale, otherwise the pair is flagged degenerate.
    """
    q = pair.order
    m0 = moments_mp(pair.f0, q + 1, dps=dps)
    m1 = moments_mp(pair.f1, q + 1, dps=dps)
    residual = float(max(abs(p - r) for p, r in zip(m0[:q], m1[:q]))) if q >= 1 else 0.0
    mismatch = float(abs(m0[q] - m1[q]))
    threshold = 0.5 * abs(pair.eta) * pair.cluster.h**q
    return MomentMatchReport(
        residual=residual,
        mismatch=mismatch,
        threshold=threshold,
        degenerate=mismatch < threshold,
    )


@dataclass(frozen=True, eq=False)
class FourierGapProfile:
    """Sampled transform difference of a pair with a fitted vanishing order.

    fitted_order is the log-log slope of |gap| vs s over the low decade
    [s_max/100, s_max/10]; fitted_constant scales the envelope |gap| <=
    fitted_constant * (h s)^fitted_order over the tabulated grid.
    """

    s: np.ndarray
    gap: np.ndarray
    fitted_order: float
    fitted_constant: float

    def to_csv_text(self) -> str:
        lines = ["s,re_gap,im_gap,abs_gap"]
        for sv, gv in zip(self.s.tolist(), self.gap.tolist()):
            lines.append(
                f"{_fmt17(sv)},{_fmt17(gv.real)},{_fmt17(gv.imag)},{_fmt17(abs(gv))}"
            )
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_csv_text())


def fourier_gap(pair: AdversaryPair, s_max: float, samples: int) -> FourierGapProfile:
    """Tabulate F(f0) - F(f1) on [0, s_max] and fit its vanishing order at 0."""
    if samples < 2:
        raise ValueError("samples must be >= 2")
    if s_max <= 0.0:
        raise ValueError("s_max must be positive")
    grid = np.linspace(0.0, s_max, samples)
    gap = fourier_eval_grid(pair.f0, grid) - fourier_eval_grid(pair.f1, grid)
    mags = np.abs(gap)
    if float(mags.max()) < 1e-15:
        raise GapUnderflowError("pair is numerically identical on the requested grid")

    lo, hi = s_max / 100.0, s_max / 10.0
    mask = (grid >= lo) & (grid <= hi) & (mags > 0.0)
    if int(mask.sum()) >= 8:
        fit_s = grid[mask]
        fit_g = mags[mask]
    else:
        fit_s = np.exp(np.linspace(math.log(lo), math.log(hi), 33))
        fit_g = np.abs(
            fourier_eval_grid(pair.f0, fit_s) - fourier_eval_grid(pair.f1, fit_s)
        )
        keep = fit_g > 0.0
        fit_s, fit_g = fit_s[keep], fit_g[keep]
    order = float(np.polyfit(np.log(fit_s), np.log(fit_g), 1)[0])

    pos = (grid > 0.0) & (mags > 0.0)
    ratios = mags[pos] / (pair.cluster.h * grid[pos]) ** order
    constant = float(ratios.max()) if ratios.size else 0.0
    return FourierGapProfile(s=grid, gap=gap, fitted_order=order, fitted_constant=constant)


def _span_cluster(nodes: np.ndarray, l: int, kappa: int = 0) -> ClusterSpec:
    """Cluster spec whose window is the actual node span (used by the stock pairs)."""
    run = np.sort(nodes)[kappa : kappa + l]
    span = float(run[-1] - run[0])
    min_gap = float(np.diff(run).min()) if l >= 2 else span
    return ClusterSpec(
        l=l,
        h=span,
        rho=min_gap / span,
        interval_start=float(run[0]),
        kappa=kappa,
    )


def table_signals(family: str, h: float, eta: float) -> AdversaryPair:
    """The stock three-node benchmark pairs with gap vanishing order 1, 3 or 5.

    family "F1" differs already in m_1, "F3" matches m_0..m_2, and "F5"
    (with its sign-alternating amplitude pattern) matches m_0..m_4. In every
    family the two node sets are 2*eta apart.
    """
    if h <= 0.0:
        raise ValueError("h must be positive")
    if not (0.0 < eta <= 0.5 * h):
        raise ValueError("need 0 < eta <= h/2")
    if family == "F1":
        a0 = a1 = np.array([1.0, 1.0, 1.0])
        x0 = np.array([-h - eta, -eta, h + eta])
        x1 = np.array([-h - eta, eta, h + eta])
        order = 1
    elif family == "F3":
        a0 = a1 = np.array([1.0, 1.0, 1.0])
        x0 = np.array([-h - eta, -eta, h + 2 * eta])
        x1 = np.array([-h - 2 * eta, eta, h + eta])
        order = 3
    elif family == "F5":
        eta_t = eta / h
        a0 = np.array([-1.0 - 3.0 * eta_t, 2.0 + 3.0 * eta_t, -1.0])
        a1 = np.array([-1.0, 2.0 + 3.0 * eta_t, -1.0 - 3.0 * eta_t])
        x0 = np.array([-h - eta, -eta, h + 2 * eta])
        x1 = np.array([-h - 2 * eta, eta, h + eta])
        order = 5
    else:
        raise ValueError(f"unknown family {family!r}; expected F1, F3 or F5")
    f0 = SpikeSignal(a0, x0)
    f1 = SpikeSignal(a1, x1)
    cluster = _span_cluster(f0.nodes, 3)
    return AdversaryPair(
        f0=f0,
        f1=f1,
        cluster=cluster,
        eta=eta,
        order=order,
        node_displacement=node_distance(f0.nodes, f1.nodes),
        moment_residual=_matched_residual_mp(f0, f1, order),
    )


def random_cluster_signal(
    l: int,
    h: float,
    rng: np.random.Generator,
    center: float = 0.0,
    amp_range: tuple[float, float] = (1.0, 2.0),
    jitter: float = 0.1,
) -> tuple[SpikeSignal, ClusterSpec]:
    """Random cluster-only signal: l nodes spanning a length-h window.

    End nodes are pinned to the window ends; interior nodes sit near the
    uniform grid with relative jitter, so the separation fraction stays close
    to 1/(l-1). Amplitudes are drawn from amp_range (positive).
    """
    if l < 1:
        raise ValueError("l must be >= 1")
    amps = rng.uniform(amp_range[0], amp_range[1], size=l)
    if l == 1:
        nodes = np.array([center])
        spec = ClusterSpec(l=1, h=h, rho=1.0, interval_start=center - 0.5 * h, kappa=0)
        return SpikeSignal(amps, nodes), spec
    gap = 1.0 / (l - 1)
    unit = np.linspace(-0.5, 0.5, l)
    if l > 2:
        unit[1:-1] += jitter * gap * rng.uniform(-1.0, 1.0, size=l - 2)
    nodes = center + h * unit
    min_gap = float(np.diff(np.sort(nodes)).min())
    spec = ClusterSpec(
        l=l,
        h=h,
        rho=min_gap / h,
        interval_start=float(nodes.min()),
        kappa=0,
    )
    return SpikeSignal(amps, nodes), spec


def two_node_match(mu3: np.ndarray, x2: float) -> tuple[float, float, float]:
    """Closed-form (a1, a2, x1) matching moments (m0, m1, m2) given the node x2.

    Eliminating a1 and x1 from the three moment equations leaves a linear
    equation for a2: a2 = (m0 m2 - m1^2) / (m0 x2^2 - 2 m1 x2 + m2).
    """
    m0, m1, m2 = float(mu3[0]), float(mu3[1]), float(mu3[2])
    a2 = (m0 * m2 - m1 * m1) / (m0 * x2 * x2 - 2.0 * m1 * x2 + m2)
    a1 = m0 - a2
    x1 = (m1 - a2 * x2) / a1
    return a1, a2, x1
