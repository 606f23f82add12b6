"""
Per-agent linear observation models ``y = H theta + w`` and the network
sensing system they form.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import jacobi_eigh

IDENTIFIABILITY_RTOL = 1e-10
NOISE_FAMILIES = ("gaussian", "uniform")


class DimensionError(ValueError):
    pass


class IdentifiabilityError(ValueError):
    """The averaged Gram matrix is (numerically) singular."""

    def __init__(self, message, system=None):
        super().__init__(message)
        self.system = system


@dataclass(frozen=True, eq=False)
class ObservationModel:
    """
    One agent's sensor.

    Noise is iid per coordinate, zero mean, standard deviation ``sigma``,
    so the scalar second moment is ``W = m * sigma**2``.
    """

    agent_id: int
    H: np.ndarray
    sigma: float = 0.0
    family: str = "gaussian"

    def __post_init__(self):
        H = np.atleast_2d(np.array(self.H, dtype=float))
        if H.ndim != 2 or H.shape[0] < 1 or H.shape[1] < 1:
            raise DimensionError(f"agent {self.agent_id}: H must be m x d with m, d >= 1")
        if self.sigma < 0:
            raise ValueError(f"agent {self.agent_id}: noise std must be >= 0")
        if self.family not in NOISE_FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}")
        H.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def m(self):
        return self.H.shape[0]

    @property
    def d(self):
        return self.H.shape[1]

    @property
    def W(self):
        return self.m * self.sigma ** 2

    @property
    def H_norm_sq(self):
        return float(jacobi_eigh(self.H.T @ self.H)[0])

    def draw_noise(self, rng, size=None):
        """Noise draws, shape ``size + (m,)``."""
        shape = (self.m,) if size is None else tuple(np.atleast_1d(size)) + (self.m,)
        if self.sigma == 0.0:
            return np.zeros(shape)
        if self.family == "gaussian":
            return self.sigma * rng.standard_normal(shape)
        # uniform on [-a, a] has variance a^2/3
        a = self.sigma * np.sqrt(3.0)
        return rng.uniform(-a, a, shape)


@dataclass(frozen=True, eq=False)
class NetworkSensingSystem:
    models: tuple
    H_bar: np.ndarray
    lambda_min_H: float
    lambda_max_H: float
    H_norm_sq: np.ndarray
    W: np.ndarray
    identifiable: bool

    @property
    def n(self):
        return len(self.models)

    @property
    def d(self):
        return self.models[0].d

    @property
    def sum_HnormSq(self):
        return float(np.sum(self.H_norm_sq))

    @property
    def sum_HnormSq_W(self):
        return float(np.sum(self.H_norm_sq * self.W))

    @property
    def sum_W(self):
        return float(np.sum(self.W))

    @property
    def H_stack(self):
        """All observation rows stacked, shape ``(sum m_i, d)``."""
        return np.vstack([mdl.H for mdl in self.models])

    def diagnostics(self):
        return {
            "lambda_min_H_bar": self.lambda_min_H,
            "lambda_max_H_bar": self.lambda_max_H,
            "identifiable": self.identifiable,
            "H_norm_sq": self.H_norm_sq.tolist(),
            "W": self.W.tolist(),
        }


def assemble_system(models, require_identifiable=True):
    """
    Stack agent models and compute ``H_bar = (1/n) sum H_i^T H_i``.

    Raises
    ------
    IdentifiabilityError
        If ``lambda_min(H_bar) <= 1e-10 * lambda_max(H_bar)`` and
        ``require_identifiable`` is set. The assembled system is attached to
        the exception as ``.system``.
    """
    models = tuple(models)
    if not models:
        raise ValueError("need at least one observation model")
    d = models[0].d
    for mdl in models:
        if mdl.d != d:
            raise DimensionError(f"agent {mdl.agent_id} has d={mdl.d}, expected {d}")
    n = len(models)
    H_bar = sum(mdl.H.T @ mdl.H for mdl in models) / n
    H_bar = 0.5 * (H_bar + H_bar.T)
    w = jacobi_eigh(H_bar)
    lam_max, lam_min = float(w[0]), float(w[-1])
    ident = lam_max > 0 and lam_min > IDENTIFIABILITY_RTOL * lam_max
    system = NetworkSensingSystem(
        models=models,
        H_bar=H_bar,
        lambda_min_H=lam_min,
        lambda_max_H=lam_max,
        H_norm_sq=np.array([mdl.H_norm_sq for mdl in models]),
        W=np.array([mdl.W for mdl in models]),
        identifiable=ident,
    )
    if require_identifiable and not ident:
        raise IdentifiabilityError(
            f"not globally identifiable: lambda_min(H_bar) = {lam_min:.3e}", system)
    return system


def sample_observation(model, theta, rng):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.d,):
        raise DimensionError(f"theta has shape {theta.shape}, expected ({model.d},)")
    return model.H @ theta + model.draw_noise(rng)


def expected_network_loss(system, theta_hat, theta_true):
    """Closed-form ``sum_i E||y_i - H_i theta_hat||^2`` under the model."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    theta_true = np.asarray(theta_true, dtype=float)
    if theta_hat.shape != (system.d,) or theta_true.shape != (system.d,):
        raise DimensionError("estimate and target must be d-vectors")
    e = theta_hat - theta_true
    return float(sum(np.sum((mdl.H @ e) ** 2) for mdl in system.models) + system.sum_W)


# generators ---------------------------------------------------------------

def coordinate_selectors(n, d, m, rng):
    """
    Each agent observes ``m`` distinct coordinates. Coordinates are dealt
    round-robin first so that every coordinate is seen by somebody.
    """
    m = min(m, d)
    Hs = []
    order = rng.permutation(d)
    for i in range(n):
        first = order[i % d]
        rest = rng.permutation([c for c in range(d) if c != first])[: m - 1]
        rows = np.zeros((m, d))
        for r, c in enumerate([first, *rest]):
            rows[r, c] = 1.0
        Hs.append(rows)
    return Hs


def gaussian_matrices(n, d, m, rng, scale=1.0):
    return [scale * rng.standard_normal((m, d)) / np.sqrt(d) for _ in range(n)]


def anchored_matrices(n, d, m, rng, gain=1.0):
    """
    Partial observations that share one weakest direction.

    Every agent measures a common unit direction ``v`` with gain ``gain``
    and ``m - 1`` further directions from an orthonormal complement of
    ``v``, with gains large enough that ``v`` is the minimal eigenvector of
    ``H_bar``. Then ``1 (x) v`` is an exact eigenvector of the error
    matrix, which is what makes ``||Q|| <= 1 - alpha lambda_min(H_bar)``
    attainable.
    """
    if d == 1:
        return [np.full((1, 1), gain) for _ in range(n)]
    m = max(2, min(m, d))
    basis, _ = np.linalg.qr(rng.standard_normal((d, d)))
    v, comp = basis[:, 0], basis[:, 1:]
    # complement slots dealt round-robin so every direction is covered
    k = min(d - 1, max(m - 1, -(-(d - 1) // n)))
    counts = np.zeros(d - 1, dtype=int)
    picks = []
    for i in range(n):
        sel = sorted({(i * k + s) % (d - 1) for s in range(k)})
        counts[sel] += 1
        picks.append(sel)
    # complement eigenvalues are g1^2 * count / n; keep them >= 2 gain^2
    g1 = gain * np.sqrt(2.0 * n / counts.min())
    return [np.vstack([gain * v, g1 * comp[:, sel].T]) for sel in picks]
