"""
Consensus+innovation simulation and Monte Carlo replication.

Each agent mixes its neighbours' previous estimates through ``P`` and
corrects with its own previous observation:

    theta_hat_{i,t} = sum_j P_ij theta_hat_{j,t-1}
                      + alpha H_i^T (y_{i,t-1} - H_i theta_hat_{i,t-1})
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import cumulative_regret, instantaneous_regret
from .sensing import DimensionError
from .topology import MixingMatrix

DIVERGENCE_THRESHOLD = 1e12

# spawn-key namespaces under the master seed
KEY_TRAJECTORY = 0
KEY_REPLICA = 1
KEY_SENSING = 2
KEY_TOPOLOGY = 3


def derive_seed(master_seed, *key):
    return np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))


@dataclass(frozen=True, eq=False)
class EstimateState:
    t: int
    estimates: np.ndarray


@dataclass(frozen=True, eq=False)
class SimulationSetup:
    """Immutable inputs shared by every replica."""

    P: MixingMatrix
    system: object
    alpha: float
    init: dict = field(default_factory=lambda: {"kind": "zero"})
    divergence_threshold: float = DIVERGENCE_THRESHOLD

    def __post_init__(self):
        if self.P.n != self.system.n:
            raise DimensionError(f"P has {self.P.n} agents, sensing has {self.system.n}")
        if self.alpha < 0:
            raise ValueError(f"step size must be >= 0, got {self.alpha}")
        mmax = max(mdl.m for mdl in self.system.models)
        Hp = np.zeros((self.system.n, mmax, self.system.d))
        for i, mdl in enumerate(self.system.models):
            Hp[i, : mdl.m] = mdl.H
        Hp.setflags(write=False)
        object.__setattr__(self, "H_padded", Hp)


@dataclass(eq=False)
class SimulationTrace:
    replica_id: int
    seed: tuple
    errors: np.ndarray          # (T', n*d) stacked e_t
    regret: np.ndarray          # (T',) exact conditional r_t
    msd: np.ndarray             # (T',) (1/n) sum_i ||e_{i,t}||^2
    agent_error_norms: np.ndarray  # (T', n)
    estimates: np.ndarray = None   # (T', n, d)
    noise: np.ndarray = None       # (T-1, n, m_max), zero padded
    diverged_at: int = None

    @property
    def rounds(self):
        return len(self.regret)

    @property
    def diverged(self):
        return self.diverged_at is not None

    @property
    def err_sq(self):
        return self.msd * self.agent_error_norms.shape[1]

    @property
    def reg_T(self):
        return cumulative_regret(self.regret)


def step_estimates(P, system, alpha, prev, prev_obs):
    """
    One round of the update from ``prev`` (round t-1) and the round-(t-1)
    observations ``prev_obs`` (one vector per agent).
    """
    Pm = P.entries if isinstance(P, MixingMatrix) else np.asarray(P, dtype=float)
    X = np.asarray(prev.estimates, dtype=float)
    n, d = system.n, system.d
    if X.shape != (n, d) or Pm.shape != (n, n) or len(prev_obs) != n:
        raise DimensionError("estimates, P and observations must match the sensing system")
    new = Pm @ X
    for i, (mdl, y) in enumerate(zip(system.models, prev_obs)):
        y = np.asarray(y, dtype=float)
        if y.shape != (mdl.m,):
            raise DimensionError(f"agent {i}: observation shape {y.shape}, expected ({mdl.m},)")
        new[i] += alpha * (mdl.H.T @ (y - mdl.H @ X[i]))
    return EstimateState(prev.t + 1, new)


def initial_estimates(init, traj, n, d, rng):
    kind = init.get("kind", "zero")
    if kind == "zero":
        return np.zeros((n, d))
    if kind == "exact":
        return np.tile(traj.points[0], (n, 1))
    if kind == "explicit":
        X = np.array(init["values"], dtype=float)
        if X.shape == (d,):
            X = np.tile(X, (n, 1))
        if X.shape != (n, d):
            raise DimensionError(f"explicit init must be ({n}, {d}) or ({d},), got {X.shape}")
        return X
    if kind == "gaussian":
        mean = np.asarray(init.get("mean", 0.0), dtype=float)
        return mean + float(init.get("std", 1.0)) * rng.standard_normal((n, d))
    raise ValueError(f"unknown init kind {kind!r}")


def run_replica(setup, traj, master_seed, replica_id, retain_noise=False,
                keep_estimates=False):
    """
    Simulate one replica over the whole trajectory.

    Agent ``i`` draws its noise from its own stream keyed by
    ``(replica_id, i)``, so a replica is reproducible in isolation.
    A replica whose error norm exceeds the divergence threshold is
    truncated just before that round.
    """
    system, P = setup.system, setup.P.entries
    n, d, T = system.n, system.d, traj.T
    if traj.d != d:
        raise DimensionError(f"trajectory has d={traj.d}, sensing has d={d}")
    alpha = setup.alpha
    Hp = setup.H_padded
    mmax = Hp.shape[1]

    noise = np.zeros((max(T - 1, 0), n, mmax))
    for i, mdl in enumerate(system.models):
        rng_i = np.random.default_rng(derive_seed(master_seed, KEY_REPLICA, replica_id, 0, i))
        noise[:, i, : mdl.m] = mdl.draw_noise(rng_i, size=T - 1)
    init_rng = np.random.default_rng(derive_seed(master_seed, KEY_REPLICA, replica_id, 1))
    X = initial_estimates(setup.init, traj, n, d, init_rng)

    # clean observations of every round at once: (T, n, m_max)
    Y = np.einsum("imd,td->tim", Hp, traj.points)

    errors = np.empty((T, n * d))
    regret = np.empty(T)
    norms = np.empty((T, n))
    est = np.empty((T, n, d)) if keep_estimates else None
    diverged_at = None
    for t in range(1, T + 1):
        if t > 1:
            y = Y[t - 2] + noise[t - 2]
            resid = y - np.einsum("imd,id->im", Hp, X)
            X = P @ X + alpha * np.einsum("imd,im->id", Hp, resid)
        E = X - traj.points[t - 1]
        norms_t = np.sqrt(np.sum(E * E, axis=1))
        total = np.sqrt(np.sum(norms_t ** 2))
        if not np.isfinite(total) or total > setup.divergence_threshold:
            diverged_at = t
            break
        errors[t - 1] = E.reshape(-1)
        norms[t - 1] = norms_t
        regret[t - 1] = instantaneous_regret(X, traj.points[t - 1], system)
        if keep_estimates:
            est[t - 1] = X

    k = T if diverged_at is None else diverged_at - 1
    return SimulationTrace(
        replica_id=replica_id,
        seed=(int(master_seed), KEY_REPLICA, int(replica_id)),
        errors=errors[:k],
        regret=regret[:k],
        msd=np.sum(norms[:k] ** 2, axis=1) / n,
        agent_error_norms=norms[:k],
        estimates=None if est is None else est[:k],
        noise=noise if retain_noise else None,
        diverged_at=diverged_at,
    )


@dataclass
class MonteCarloReport:
    R: int
    reg_T: np.ndarray            # per replica, in replica order
    reg_mean: float
    reg_stderr: float
    r_mean: np.ndarray
    r_stderr: np.ndarray
    msd_mean: np.ndarray
    msd_stderr: np.ndarray
    esq_mean: np.ndarray         # mean of ||e_t||^2
    esq_stderr: np.ndarray
    lemma2_per_replica: np.ndarray
    diverged: list
    excluded: list

    @property
    def unstable(self):
        return bool(self.diverged)

    def summary(self):
        return {
            "R": self.R,
            "reg_T_mean": self.reg_mean,
            "reg_T_stderr": self.reg_stderr,
            "diverged_replicas": list(self.diverged),
            "excluded_replicas": list(self.excluded),
            "unstable": self.unstable,
        }


def _mean_se(A):
    # A: (R, T) with NaN for rounds after truncation
    cnt = np.sum(np.isfinite(A), axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.nansum(A, axis=0) / cnt
        if A.shape[0] > 1:
            dev = np.where(np.isfinite(A), A - mean, 0.0)
            var = np.sum(dev ** 2, axis=0) / np.maximum(cnt - 1, 1)
            se = np.where(cnt > 1, np.sqrt(var / cnt), 0.0)
        else:
            se = np.zeros(A.shape[1])
    return mean, se


def run_monte_carlo(setup, traj, R, master_seed, threads=1, exclude_diverged=False,
                    on_trace=None):
    """
    Run ``R`` replicas and aggregate in replica order.

    ``on_trace(trace)`` is called once per replica (possibly from a worker
    thread) before the trace is dropped. Results do not depend on
    ``threads``.
    """
    if R < 1:
        raise ValueError(f"replica count must be >= 1, got {R}")
    T = traj.T
    S = setup.system.sum_HnormSq
    n = setup.system.n

    def one(r):
        tr = run_replica(setup, traj, master_seed, r)
        if on_trace is not None:
            on_trace(tr)
        pad = lambda x: np.concatenate([x, np.full(T - len(x), np.nan)])
        return (tr.reg_T, pad(tr.regret), pad(tr.msd), pad(tr.err_sq), tr.diverged)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(R)))
    else:
        results = [one(r) for r in range(R)]

    diverged = [r for r, res in enumerate(results) if res[4]]
    excluded = diverged if exclude_diverged else []
    keep = [res for r, res in enumerate(results) if r not in set(excluded)]
    if not keep:
        raise RuntimeError("every replica diverged and exclusion was requested")

    reg = np.array([res[0] for res in keep])
    Rk = len(reg)
    r_mean, r_se = _mean_se(np.array([res[1] for res in keep]))
    m_mean, m_se = _mean_se(np.array([res[2] for res in keep]))
    e_all = np.array([res[3] for res in keep])
    e_mean, e_se = _mean_se(e_all)
    l2 = S * np.nanmean(e_all, axis=1) / n
    return MonteCarloReport(
        R=Rk,
        reg_T=reg,
        reg_mean=float(np.mean(reg)),
        reg_stderr=float(np.std(reg, ddof=1) / np.sqrt(Rk)) if Rk > 1 else 0.0,
        r_mean=r_mean, r_stderr=r_se,
        msd_mean=m_mean, msd_stderr=m_se,
        esq_mean=e_mean, esq_stderr=e_se,
        lemma2_per_replica=l2,
        diverged=diverged,
        excluded=excluded,
    )
