"""Spike-train signals, power moments, Fourier evaluation, and cluster geometry."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import mpmath
import numpy as np

TWO_PI = 2.0 * math.pi

__all__ = [
    "AmplitudeBounds",
    "SpikeSignal",
    "ClusterSpec",
    "MomentVector",
    "AffineMap",
    "moments",
    "moments_mp",
    "fourier_eval",
    "fourier_eval_grid",
    "fourier_series_eval",
    "node_distance",
    "detect_cluster",
    "cluster_affine",
    "rescale_cluster",
    "signal_to_json",
    "signal_from_json",
]


def _neumaier(terms):
    """Compensated summation; keeps cancellation error near one ulp of the result."""
    total = 0.0
    comp = 0.0
    for t in terms:
        t = float(t)
        s = total + t
        if abs(total) >= abs(t):
            comp += (total - s) + t
        else:
            comp += (t - s) + total
        total = s
    return total + comp


@dataclass(frozen=True)
class AmplitudeBounds:
    """Two-sided magnitude bounds 0 < m <= |a_j| <= M on signal amplitudes."""

    m: float
    M: float

    def __post_init__(self):
        if not (0.0 < self.m <= self.M < math.inf):
            raise ValueError(f"need 0 < m <= M < inf, got m={self.m}, M={self.M}")

    def satisfied_by(self, signal: "SpikeSignal") -> bool:
        mags = np.abs(signal.amplitudes)
        return bool(np.all(mags >= self.m) and np.all(mags <= self.M))

    def relaxed(self, factor: float = 2.0) -> "AmplitudeBounds":
        """Bounds widened to (m/factor, factor*M)."""
        if factor < 1.0:
            raise ValueError("factor must be >= 1")
        return AmplitudeBounds(self.m / factor, self.M * factor)


@dataclass(frozen=True, eq=False)
class SpikeSignal:
    """Finite sum of weighted point masses sum_j a_j * delta(x - x_j).

    Nodes are sorted at construction (amplitudes travel with their node) and
    both arrays are frozen, so instances are safe to share across threads.
    """

    amplitudes: np.ndarray
    nodes: np.ndarray

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=float, copy=True).reshape(-1)
        x = np.array(self.nodes, dtype=float, copy=True).reshape(-1)
        if a.size != x.size or a.size == 0:
            raise ValueError("amplitudes and nodes must have equal length d >= 1")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(x))):
            raise ValueError("amplitudes and nodes must be finite")
        order = np.argsort(x, kind="stable")
        a = a[order]
        x = x[order]
        a.flags.writeable = False
        x.flags.writeable = False
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "nodes", x)

    @property
    def d(self) -> int:
        return int(self.nodes.size)

    def tightest_bounds(self) -> AmplitudeBounds:
        mags = np.abs(self.amplitudes)
        if np.any(mags == 0.0):
            raise ValueError("zero amplitude admits no positive lower bound")
        return AmplitudeBounds(float(mags.min()), float(mags.max()))

    def take(self, indices) -> "SpikeSignal":
        idx = np.asarray(indices, dtype=int)
        return SpikeSignal(self.amplitudes[idx], self.nodes[idx])

    def with_spikes_replaced(self, indices, amplitudes, nodes) -> "SpikeSignal":
        """New signal with the given spikes swapped out; the rest is copied bit-for-bit."""
        idx = np.asarray(indices, dtype=int)
        a = np.array(self.amplitudes, copy=True)
        x = np.array(self.nodes, copy=True)
        a[idx] = amplitudes
        x[idx] = nodes
        return SpikeSignal(a, x)


@dataclass(frozen=True, eq=False)
class MomentVector:
    """Even-length vector (m_0, ..., m_{2d-1}) of power moments of a d-spike signal."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if v.size < 2 or v.size % 2 != 0:
            raise ValueError("moment vector must have even length 2d >= 2")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        return self.values.size // 2

    @classmethod
    def of_signal(cls, signal: SpikeSignal) -> "MomentVector":
        return cls(moments(signal, 2 * signal.d))


def moments(signal: SpikeSignal, count: int) -> np.ndarray:
    """First `count` moments m_k = sum_j a_j x_j^k, compensated summation per k.

    Powers are built by iterated multiplication so that mirrored nodes cancel
    exactly; clustered configurations lose all significance otherwise.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    a = signal.amplitudes
    x = signal.nodes
    out = np.empty(count, dtype=float)
    xpow = np.ones_like(x)
    for k in range(count):
        out[k] = _neumaier(a * xpow)
        xpow = xpow * x
    return out


def moments_mp(signal: SpikeSignal, count: int, dps: int = 40):
    """Extended-precision moments (list of mpf); binary doubles enter exactly."""
    if count < 1:
        raise ValueError("count must be >= 1")
    with mpmath.workdps(dps):
        a = [mpmath.mpf(v) for v in signal.amplitudes.tolist()]
        x = [mpmath.mpf(v) for v in signal.nodes.tolist()]
        xpow = [mpmath.mpf(1)] * len(x)
        out = []
        for _ in range(count):
            out.append(mpmath.fsum(ai * p for ai, p in zip(a, xpow)))
            xpow = [p * xi for p, xi in zip(xpow, x)]
        return out


def fourier_eval(signal: SpikeSignal, s: float) -> complex:
    """Closed-form transform sum_j a_j exp(-2*pi*i*s*x_j); no series truncation."""
    re_terms = []
    im_terms = []
    for aj, xj in zip(signal.amplitudes.tolist(), signal.nodes.tolist()):
        ang = -TWO_PI * s * xj
        re_terms.append(aj * math.cos(ang))
        im_terms.append(aj * math.sin(ang))
    return complex(_neumaier(re_terms), _neumaier(im_terms))


def fourier_eval_grid(signal: SpikeSignal, s_values) -> np.ndarray:
    """Vectorized transform on a frequency grid (throughput path for profiles)."""
    s = np.asarray(s_values, dtype=float).reshape(-1)
    phases = np.exp((-2j * np.pi) * s[:, None] * signal.nodes[None, :])
    return np.sum(signal.amplitudes[None, :] * phases, axis=1)


def fourier_series_eval(signal: SpikeSignal, s: float, terms: int) -> complex:
    """Truncated Taylor evaluation sum_{k<terms} m_k / k! * (-2*pi*i*s)^k."""
    if terms < 1:
        raise ValueError("terms must be >= 1")
    m = moments(signal, terms)
    w = complex(0.0, -TWO_PI * s)
    re_terms = []
    im_terms = []
    p = complex(1.0, 0.0)
    for k in range(terms):
        t = m[k] * p
        re_terms.append(t.real)
        im_terms.append(t.imag)
        p = p * w / (k + 1)
    return complex(_neumaier(re_terms), _neumaier(im_terms))


def node_distance(v, w) -> float:
    """Max-norm distance between two equally sized ordered node sets."""
    v = np.asarray(v, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(-1)
    if v.size != w.size:
        raise ValueError(f"node sets differ in size: {v.size} vs {w.size}")
    return float(np.max(np.abs(v - w)))


@dataclass(frozen=True)
class ClusterSpec:
    """Geometry of l consecutive nodes confined to a window of length h.

    `interval_start` is the left end of the host window, `kappa` the index of
    the first cluster node in the parent signal, and `rho` the minimal pairwise
    node distance as a fraction of h.
    """

    l: int
    h: float
    rho: float
    interval_start: float
    kappa: int

    def __post_init__(self):
        if self.l < 1:
            raise ValueError("cluster must contain at least one node")
        if self.h <= 0.0:
            raise ValueError("cluster window length h must be positive")
        if self.rho <= 0.0:
            raise ValueError("rho must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be a valid node index")

    @property
    def interval_end(self) -> float:
        return self.interval_start + self.h

    @property
    def center(self) -> float:
        return self.interval_start + 0.5 * self.h

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.kappa, self.kappa + self.l)

    def nodes_of(self, signal: SpikeSignal) -> np.ndarray:
        return signal.nodes[self.kappa : self.kappa + self.l]

    def amplitudes_of(self, signal: SpikeSignal) -> np.ndarray:
        return signal.amplitudes[self.kappa : self.kappa + self.l]

    def validate_against(self, signal: SpikeSignal, slack: float = 1e-9):
        """Check the defining window/count/separation conditions (with FP slack)."""
        inside = np.sum(
            (signal.nodes >= self.interval_start - slack * self.h)
            & (signal.nodes <= self.interval_end + slack * self.h)
        )
        if int(inside) != self.l:
            raise ValueError(f"window holds {inside} nodes, expected {self.l}")
        if self.l >= 2:
            gaps = np.diff(self.nodes_of(signal))
            if gaps.min() < self.rho * self.h * (1.0 - 1e-9):
                raise ValueError("cluster separation below rho * h")


def detect_cluster(signal: SpikeSignal, h: float):
    """Leftmost longest run of >= 2 consecutive nodes that fits in a length-h window.

    Returns a ClusterSpec whose window is centered on the run's span, or None
    when no two nodes are within h of each other.
    """
    if h <= 0.0:
        raise ValueError("window length h must be positive")
    x = signal.nodes
    best_len = 1
    best_i = 0
    best_j = 0
    j = 0
    for i in range(x.size):
        if j < i:
            j = i
        while j + 1 < x.size and x[j + 1] - x[i] <= h:
            j += 1
        if j - i + 1 > best_len:
            best_len = j - i + 1
            best_i, best_j = i, j
    if best_len < 2:
        return None
    run = x[best_i : best_j + 1]
    center = 0.5 * (run[0] + run[-1])
    return ClusterSpec(
        l=best_len,
        h=float(h),
        rho=float(np.diff(run).min() / h),
        interval_start=float(center - 0.5 * h),
        kappa=best_i,
    )


@dataclass(frozen=True)
class AffineMap:
    """x -> scale * x + offset, with the exact functional inverse available."""

    scale: float
    offset: float

    def __call__(self, x):
        return self.scale * np.asarray(x, dtype=float) + self.offset

    def apply_scalar(self, x: float) -> float:
        return self.scale * float(x) + self.offset

    def inverse(self) -> "AffineMap":
        return AffineMap(1.0 / self.scale, -self.offset / self.scale)


def cluster_affine(spec: ClusterSpec, target_center: float, target_halfwidth: float) -> AffineMap:
    """Affine map carrying the host interval onto [center - w, center + w]."""
    if target_halfwidth <= 0.0:
        raise ValueError("target_halfwidth must be positive")
    scale = 2.0 * target_halfwidth / spec.h
    return AffineMap(scale, target_center - scale * spec.center)


def rescale_cluster(
    signal: SpikeSignal,
    spec: ClusterSpec,
    target_center: float,
    target_halfwidth: float,
) -> SpikeSignal:
    """The cluster alone, nodes remapped onto the target interval, amplitudes kept."""
    amap = cluster_affine(spec, target_center, target_halfwidth)
    idx = spec.indices
    return SpikeSignal(signal.amplitudes[idx], amap(signal.nodes[idx]))


def _fmt17(x: float) -> str:
    return format(float(x), ".17g")


def signal_to_json(signal: SpikeSignal) -> str:
    """Interchange form {"amplitudes": [...], "nodes": [...]} at 17 significant digits."""
    amps = ", ".join(_fmt17(a) for a in signal.amplitudes.tolist())
    xs = ", ".join(_fmt17(x) for x in signal.nodes.tolist())
    return '{"amplitudes": [%s], "nodes": [%s]}' % (amps, xs)


def signal_from_json(text: str) -> SpikeSignal:
    obj = json.loads(text)
    return SpikeSignal(
        np.asarray(obj["amplitudes"], dtype=float),
        np.asarray(obj["nodes"], dtype=float),
    )
