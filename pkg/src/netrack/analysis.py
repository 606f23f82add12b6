"""
Error-system analysis: the stacked error recursion ``e_t = Q e_{t-1} + u_t``,
step-size limits and tuning, exact regret, and the regret bounds.
"""

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from .linalg import jacobi_eigh
from .sensing import DimensionError
from .topology import MixingMatrix

log = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-13
ALPHA_FLOOR = 1e-12
SETTLE_WINDOW = 0.1
SETTLE_RTOL = 1e-3


class InfeasibleStepSize(ValueError):
    def __init__(self, message, spectrum=None):
        super().__init__(message)
        self.spectrum = spectrum


class BoundInapplicable(ValueError):
    """The error matrix is not a contraction, so the regret bound says nothing."""


def _P(P):
    return P.entries if isinstance(P, MixingMatrix) else np.asarray(P, dtype=float)


def gram_blocks(system):
    return [mdl.H.T @ mdl.H for mdl in system.models]


@dataclass(frozen=True, eq=False)
class ErrorSystem:
    Q: np.ndarray
    eigenvalues: np.ndarray
    alpha: float

    @property
    def q_norm(self):
        return float(np.max(np.abs(self.eigenvalues)))

    @property
    def stable(self):
        return self.q_norm < 1.0


def error_matrix(P, system, alpha):
    """``P (x) I_d - alpha * blockdiag(H_i^T H_i)``."""
    P = _P(P)
    n, d = system.n, system.d
    if P.shape != (n, n):
        raise DimensionError(f"P is {P.shape}, sensing system has {n} agents")
    Q = np.kron(P, np.eye(d))
    for i, G in enumerate(gram_blocks(system)):
        Q[i * d:(i + 1) * d, i * d:(i + 1) * d] -= alpha * G
    # kron and the symmetric blocks keep Q symmetric; force it bitwise
    return 0.5 * (Q + Q.T)


def build_error_system(P, system, alpha):
    if alpha < 0:
        raise ValueError(f"step size must be >= 0, got {alpha}")
    Q = error_matrix(P, system, alpha)
    return ErrorSystem(Q, jacobi_eigh(Q), float(alpha))


def error_input(theta_prev, theta_cur, noises, system, alpha):
    """
    Stacked input ``1_n (x) (theta_{t-1} - theta_t) + alpha [H_i^T w_{i,t-1}]``.

    ``noises`` is a sequence of per-agent noise vectors, or None for zero noise.
    """
    theta_prev = np.asarray(theta_prev, dtype=float)
    theta_cur = np.asarray(theta_cur, dtype=float)
    n, d = system.n, system.d
    if theta_prev.shape != (d,) or theta_cur.shape != (d,):
        raise DimensionError("targets must be d-vectors")
    u = np.tile(theta_prev - theta_cur, n)
    if noises is None:
        return u
    if len(noises) != n:
        raise DimensionError(f"expected {n} noise vectors, got {len(noises)}")
    for i, (mdl, w) in enumerate(zip(system.models, noises)):
        w = np.asarray(w, dtype=float)[: mdl.m]
        u[i * d:(i + 1) * d] += alpha * (mdl.H.T @ w)
    return u


def recurse_error(es, e_prev, u):
    Q = es.Q if isinstance(es, ErrorSystem) else np.asarray(es)
    e_prev, u = np.asarray(e_prev, dtype=float), np.asarray(u, dtype=float)
    if e_prev.shape != (Q.shape[0],) or u.shape != (Q.shape[0],):
        raise DimensionError(f"vectors must have length {Q.shape[0]}")
    return Q @ e_prev + u


def replay_errors(es, e1, traj, noise, system):
    """
    Run the recursion from ``e_1`` using a trace's retained noise.

    ``noise[t-2]`` holds the per-agent draws of round ``t-1`` (shape
    ``(n, m_max)``, zero-padded). Returns the ``(T, nd)`` error sequence.
    """
    T = traj.T
    out = np.empty((T, es.Q.shape[0]))
    out[0] = e1
    for t in range(2, T + 1):
        w = None if noise is None else noise[t - 2]
        u = error_input(traj.points[t - 2], traj.points[t - 1], w, system, es.alpha)
        out[t - 1] = recurse_error(es, out[t - 2], u)
    return out


# step size -------------------------------------------------------------------

def alpha_closed_form(P, system):
    """Weyl-based candidate ``(1 + lambda_n(P)) / (max_i ||H_i||^2 + lambda_n(H_bar))``."""
    lam_n_P = float(jacobi_eigh(_P(P))[-1])
    lam1_D = float(np.max(system.H_norm_sq))
    return (1.0 + lam_n_P) / (lam1_D + system.lambda_min_H)


def contraction_certified(P, system, alpha, tol=FEASIBILITY_TOL):
    """True when ``||Q(alpha)|| <= 1 - alpha lambda_n(H_bar)`` and ``||Q|| < 1``."""
    q = build_error_system(P, system, alpha).q_norm
    return q < 1.0 and q <= 1.0 - alpha * system.lambda_min_H + tol


def alpha_max(P, system, grid=64, tol=FEASIBILITY_TOL):
    """
    Largest step size for which the contraction bound is certified.

    Scans a linear grid on ``(0, alpha_closed]`` plus halvings down to
    1e-12, then bisects between the largest certified point and the next
    grid point above it.

    Raises
    ------
    InfeasibleStepSize
        If no certified step size exists above 1e-12, e.g. when ``H_bar``
        is singular.
    """
    if system.lambda_min_H <= 0 or not system.identifiable:
        raise InfeasibleStepSize("H_bar is singular; no contraction from identifiability",
                                 spectrum={"lambda_min_H_bar": system.lambda_min_H})
    a_closed = alpha_closed_form(P, system)
    ok = lambda a: contraction_certified(P, system, a, tol)
    if ok(a_closed):
        return float(a_closed)

    cands = sorted(set(np.linspace(a_closed / grid, a_closed, grid).tolist()))
    a = a_closed / 2
    while a >= ALPHA_FLOOR:
        cands.append(a)
        a /= 2
    cands = sorted(set(cands), reverse=True)
    lo = next((c for c in cands if ok(c)), None)
    if lo is None:
        es = build_error_system(P, system, ALPHA_FLOOR)
        raise InfeasibleStepSize(
            f"no certified step size above {ALPHA_FLOOR:g}",
            spectrum={"lambda_min_H_bar": system.lambda_min_H,
                      "alpha_closed": a_closed,
                      "Q_eigenvalues_at_floor": es.eigenvalues[[0, -1]].tolist()})
    hi = min(c for c in cands + [a_closed] if c > lo)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if ok(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    if lo < 1e-6 * a_closed:
        log.warning("alpha_max = %.3e is tiny relative to the Weyl candidate %.3e: the "
                    "observation Gram blocks do not share the weakest direction of H_bar",
                    lo, a_closed)
    return float(lo)


def alpha_scan(P, system, alphas):
    """Rows ``(alpha, ||Q(alpha)||, 1 - alpha lambda_n(H_bar))``."""
    return [(float(a), build_error_system(P, system, a).q_norm,
             1.0 - float(a) * system.lambda_min_H) for a in alphas]


TUNING_POLICIES = ("static", "noiseless", "general")


def tune_alpha(policy, C_T, T, alpha_max):
    """
    Step size for a tuning regime.

    ``static``: ``min(1/T, alpha_max)``; ``noiseless``: ``min(1, alpha_max)``;
    ``general``: ``min(C_T^(1/3) T^(-1/3), alpha_max)``, falling back to
    ``static`` when ``C_T == 0``.
    """
    if T < 1:
        raise ValueError(f"horizon T must be >= 1, got {T}")
    if policy == "static":
        return min(1.0 / T, alpha_max)
    if policy == "noiseless":
        return min(1.0, alpha_max)
    if policy == "general":
        if C_T <= 0:
            return min(1.0 / T, alpha_max)
        return min((C_T / T) ** (1.0 / 3.0), alpha_max)
    raise ValueError(f"unknown tuning policy {policy!r}")


# regret ----------------------------------------------------------------------

def instantaneous_regret(estimates, theta, system):
    """
    ``(1/n) sum_j sum_i ||H_i (theta_hat_j - theta)||^2``.

    This is the expected regret of the round given the estimates; the
    fresh noise of the round only adds ``sum_i W_i`` to both losses.
    """
    X = np.asarray(estimates, dtype=float)
    theta = np.asarray(theta, dtype=float)
    n, d = system.n, system.d
    if X.shape != (n, d) or theta.shape != (d,):
        raise DimensionError(f"estimates must be ({n}, {d}) and theta ({d},)")
    E = X - theta
    return float(np.sum((E @ system.H_stack.T) ** 2) / n)


def cumulative_regret(r_series, T=None):
    r = np.asarray(r_series, dtype=float)
    if T is not None and len(r) != T:
        raise ValueError(f"expected {T} rounds, got {len(r)}")
    return float(np.mean(r)) if len(r) else 0.0


def lemma2_bound(e_sq_series, system, T=None):
    """``(1/(nT)) (sum_i ||H_i||^2) sum_t E||e_t||^2``."""
    e2 = np.asarray(e_sq_series, dtype=float)
    T = len(e2) if T is None else T
    return float(system.sum_HnormSq * np.sum(e2) / (system.n * T))


@dataclass
class BoundReport:
    noise_term: float
    path_term: float
    total: float
    simplified_order: float
    beta_used: float
    lemma2_rhs: float = None

    def to_dict(self):
        return asdict(self)


def theorem1_bound(alpha, q_norm, system, C_T, T):
    """
    Path-length regret bound for a contracting error matrix.

    noise: ``(1/n) S * alpha^2 sum_i ||H_i||^2 W_i / (1 - q)``
    path: ``(1/T) S * C_T / (1 - q)^2``, with ``S = sum_i ||H_i||^2``.
    """
    if not q_norm < 1.0:
        raise BoundInapplicable(f"||Q|| = {q_norm:.6g} >= 1")
    S = system.sum_HnormSq
    gap = 1.0 - q_norm
    noise = S / system.n * alpha ** 2 * system.sum_HnormSq_W / gap
    path = S * C_T / (T * gap ** 2)
    if alpha > 0:
        simple = alpha * system.sum_W + C_T / (T * alpha ** 2)
    else:
        simple = 0.0 if C_T == 0 else math.inf
    beta = 1.0 / q_norm - 1.0 if q_norm > 0 else math.inf
    return BoundReport(noise, path, noise + path, simple, beta)


def simplified_order(alpha, sum_W, C_T, T):
    return alpha * sum_W + C_T / (T * alpha ** 2)


# stability -------------------------------------------------------------------

def stability_diagnostics(msd, q_norm=None, stderr=None, window=SETTLE_WINDOW,
                          rtol=SETTLE_RTOL):
    """
    Windowed settling test on a mean-square-deviation series.

    The last ``window`` fraction of rounds is split in halves; the series
    counts as settled when the change between half means is within
    ``rtol`` of the level, an absolute floor of ``1e-10 * max(msd)``, or
    three standard errors of the change when ``stderr`` is given.
    """
    msd = np.asarray(msd, dtype=float)
    spectral = None if q_norm is None else bool(q_norm < 1.0)
    k = int(len(msd) * window)
    report = {"settled": False, "sigma": None, "relative_change": None,
              "inconclusive": False, "spectral_stable": spectral,
              "window": k}
    if k < 2:
        report["inconclusive"] = True
        return report
    if not np.all(np.isfinite(msd)):
        return report
    tail = msd[-k:]
    h = k // 2
    first, second = tail[:h], tail[h:]
    level = float(np.mean(tail))
    change = float(np.mean(second) - np.mean(first))
    slack = rtol * abs(level) + 1e-10 * float(np.max(msd))
    if stderr is not None:
        se = np.asarray(stderr, dtype=float)[-k:]
        # rounds are strongly correlated; do not divide by the window length
        se_change = math.sqrt(np.mean(se[h:] ** 2) + np.mean(se[:h] ** 2))
        slack += 3.0 * se_change
    report["sigma"] = level
    report["relative_change"] = abs(change) / abs(level) if level else 0.0
    report["settled"] = bool(abs(change) <= slack)
    return report
