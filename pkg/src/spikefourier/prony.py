"""The Prony mapping: forward moments, analytic Jacobian, classical solve, Newton inversion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConditioningError,
    InconsistencyError,
    ModelOrderError,
    NoConvergenceError,
)
from .signals import SpikeSignal, moments

__all__ = [
    "PronyImage",
    "PronyJacobian",
    "ConditioningReport",
    "prony_forward",
    "prony_jacobian",
    "conditioning",
    "prony_solve",
    "newton_invert",
]


@dataclass(frozen=True, eq=False)
class PronyImage:
    """A point (m_0, ..., m_{2d-1}) in the codomain of the Prony mapping."""

    mu: np.ndarray

    def __post_init__(self):
        v = np.array(self.mu, dtype=float, copy=True).reshape(-1)
        if v.size < 2 or v.size % 2 != 0:
            raise ValueError("mu must have even length 2d >= 2")
        v.flags.writeable = False
        object.__setattr__(self, "mu", v)

    @property
    def d(self) -> int:
        return self.mu.size // 2

    def shifted_from(self, base) -> np.ndarray:
        """Coordinates relative to a base image (mu_k = m_k - m0_k)."""
        return self.mu - _as_mu(base)


def _as_mu(target) -> np.ndarray:
    if isinstance(target, PronyImage):
        return target.mu
    return np.asarray(target, dtype=float).reshape(-1)


def prony_forward(signal: SpikeSignal) -> PronyImage:
    """Map signal parameters (A, X) to their first 2d moments."""
    return PronyImage(moments(signal, 2 * signal.d))


def _power_table(x: np.ndarray, rows: int) -> np.ndarray:
    """P[k, j] = x_j^k for k = 0..rows-1, built by iterated multiplication."""
    P = np.ones((rows, x.size), dtype=float)
    for k in range(1, rows):
        P[k] = P[k - 1] * x
    return P


@dataclass(frozen=True, eq=False)
class PronyJacobian:
    """Analytic 2d x 2d Jacobian of the Prony mapping at a base signal.

    Row k (the moment m_k) differentiates to x_j^k in the amplitude columns
    and to k * a_j * x_j^(k-1) in the node columns; the matrix is singular
    exactly when nodes coincide or an amplitude vanishes.
    """

    matrix: np.ndarray
    base_point: SpikeSignal

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float, copy=True)
        if m.shape != (2 * self.base_point.d, 2 * self.base_point.d):
            raise ValueError("Jacobian must be 2d x 2d")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)


def prony_jacobian(signal: SpikeSignal) -> PronyJacobian:
    d = signal.d
    twod = 2 * d
    P = _power_table(signal.nodes, twod)
    J = np.empty((twod, twod), dtype=float)
    J[:, :d] = P
    J[0, d:] = 0.0
    ks = np.arange(1, twod, dtype=float)[:, None]
    J[1:, d:] = ks * signal.amplitudes[None, :] * P[:-1]
    return PronyJacobian(J, signal)


@dataclass(frozen=True)
class ConditioningReport:
    """Per-instance sensitivity figures for the Prony mapping.

    inverse_norm: operator norm of the inverse Jacobian (worst error gain);
    lower_gain: smallest gain of the inverse over unit moment perturbations;
    node_projection_gain: norm of the node components of the preimage of the
    last moment axis, i.e. how strongly a last-moment change moves the nodes.
    """

    inverse_norm: float
    lower_gain: float
    node_projection_gain: float

    def to_dict(self) -> dict:
        return {
            "inverse_norm": self.inverse_norm,
            "lower_gain": self.lower_gain,
            "node_projection_gain": self.node_projection_gain,
        }


def conditioning(signal: SpikeSignal) -> ConditioningReport:
    J = prony_jacobian(signal).matrix
    sv = np.linalg.svd(J, compute_uv=False)
    twod = J.shape[0]
    if sv[0] == 0.0 or sv[-1] <= twod * np.finfo(float).eps * sv[0]:
        raise ConditioningError("Prony Jacobian is numerically singular")
    e_last = np.zeros(twod)
    e_last[-1] = 1.0
    v = np.linalg.solve(J, e_last)
    return ConditioningReport(
        inverse_norm=float(1.0 / sv[-1]),
        lower_gain=float(1.0 / sv[0]),
        node_projection_gain=float(np.linalg.norm(v[signal.d :])),
    )


def prony_solve(mu, d: int, imag_tol: float = 1e-8) -> SpikeSignal:
    """Classical solve of the Prony system from moments m_0..m_{2d-1}.

    Builds the d x d Hankel system for the node polynomial, extracts nodes as
    companion-matrix eigenvalues, recovers amplitudes from the leading square
    Vandermonde system, then applies one guarded Newton polish on all 2d
    moment equations.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    m = _as_mu(mu)
    if m.size < 2 * d:
        raise ValueError(f"need at least {2 * d} moments, got {m.size}")
    m = m[: 2 * d]
    H = np.empty((d, d), dtype=float)
    for i in range(d):
        H[i] = m[i : i + d]
    sv = np.linalg.svd(H, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] <= 1e-12 * sv[0]:
        raise ModelOrderError("Hankel matrix is rank-deficient: fewer than d spikes present")
    coeffs = np.linalg.solve(H, -m[d : 2 * d])
    roots = np.roots(np.concatenate(([1.0], coeffs[::-1])))
    scale = max(1.0, float(np.max(np.abs(roots))))
    if float(np.max(np.abs(roots.imag))) > imag_tol * scale:
        raise InconsistencyError(
            "node candidates have imaginary parts beyond tolerance; "
            "moments are not those of a real spike train"
        )
    x = np.sort(roots.real)
    V = _power_table(x, d)
    try:
        a = np.linalg.solve(V, m[:d])
    except np.linalg.LinAlgError as exc:
        raise ModelOrderError("coincident node candidates in the Prony polynomial") from exc
    return _polish(SpikeSignal(a, x), m)


def _polish(sig: SpikeSignal, m: np.ndarray) -> SpikeSignal:
    """One full-system Newton step, kept only if it reduces the moment residual."""
    r = moments(sig, m.size) - m
    rnorm = float(np.max(np.abs(r)))
    if rnorm == 0.0:
        return sig
    try:
        step = np.linalg.solve(prony_jacobian(sig).matrix, r)
    except np.linalg.LinAlgError:
        return sig
    d = sig.d
    try:
        cand = SpikeSignal(sig.amplitudes - step[:d], sig.nodes - step[d:])
    except ValueError:
        return sig
    if float(np.max(np.abs(moments(cand, m.size) - m))) < rnorm:
        return cand
    return sig


def newton_invert(
    target,
    initial: SpikeSignal,
    tol: float,
    max_iter: int,
    trace: list | None = None,
) -> SpikeSignal:
    """Damped Newton iteration solving PM(A, X) = target in the max norm.

    Each step is halved until the residual strictly decreases (at most 30
    halvings); a step with no decrease raises NoConvergenceError carrying the
    last iterate and residual. A singular Jacobian raises ConditioningError.
    """
    t = _as_mu(target)
    if t.size != 2 * initial.d:
        raise ValueError(f"target must have length {2 * initial.d}, got {t.size}")
    if tol < 0.0:
        raise ValueError("tol must be nonnegative")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    cur = initial
    rnorm = float(np.max(np.abs(moments(cur, t.size) - t)))
    if trace is not None:
        trace.append(rnorm)
    for _ in range(max_iter):
        if rnorm <= tol:
            return cur
        r = moments(cur, t.size) - t
        try:
            full = np.linalg.solve(prony_jacobian(cur).matrix, r)
        except np.linalg.LinAlgError as exc:
            raise ConditioningError("singular Jacobian during Newton iteration") from exc
        d = cur.d
        lam = 1.0
        accepted = None
        for _ in range(31):
            cand = SpikeSignal(cur.amplitudes - lam * full[:d], cur.nodes - lam * full[d:])
            cnorm = float(np.max(np.abs(moments(cand, t.size) - t)))
            if cnorm < rnorm:
                accepted = (cand, cnorm)
                break
            lam *= 0.5
        if accepted is None:
            raise NoConvergenceError(
                "Newton step produced no residual decrease", last=cur, residual=rnorm
            )
        cur, rnorm = accepted
        if trace is not None:
            trace.append(rnorm)
    if rnorm <= tol:
        return cur
    raise NoConvergenceError(
        f"no convergence within {max_iter} iterations", last=cur, residual=rnorm
    )
