"""
Target trajectories with no imposed dynamics, and their path length.
"""

import csv
from dataclasses import dataclass

import numpy as np


class TrajectoryError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Trajectory:
    """``points[t-1]`` is the target at round ``t``; theta_0 is taken as theta_1."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise TrajectoryError(f"trajectory must be T x d with T, d >= 1, got {pts.shape}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def T(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    def previous(self, t):
        """theta_{t-1} for 1-based round t."""
        return self.points[max(t - 2, 0)]


@dataclass(frozen=True)
class PathLength:
    value: float
    increments: np.ndarray


def path_length(traj):
    """Sum of squared consecutive displacements; the t=1 increment is 0."""
    pts = traj.points
    inc = np.zeros(traj.T)
    if traj.T > 1:
        inc[1:] = np.sum(np.diff(pts, axis=0) ** 2, axis=1)
    return PathLength(float(np.sum(inc)), inc)


def _vec(x, d, name):
    v = np.atleast_1d(np.array(x, dtype=float))
    if v.size == 1 and d > 1:
        v = np.full(d, float(v[0]))
    if v.shape != (d,):
        raise TrajectoryError(f"{name} must have dimension {d}, got {v.shape}")
    return v


def generate_trajectory(spec, d, T, seed=None):
    """
    Build a trajectory from a descriptor dict.

    ``spec["kind"]`` selects the generator:

    - ``static``: ``theta``
    - ``linear_drift``: ``start``, ``velocity``
    - ``sinusoid``: ``center``, ``amplitude``, ``period`` (per-coordinate
      phase offsets ``2 pi k / d``)
    - ``random_walk``: ``start``, ``step_std``
    - ``decaying_walk``: ``start``, ``step_std``, ``decay``; step t is
      scaled by ``t**-decay``
    - ``piecewise_constant``: ``values`` (list of d-vectors) and ``switch``
      (1-based rounds at which the next value takes over)
    - ``file``: ``path`` to a headerless CSV with one row per round

    An optional ``scale`` multiplies every point (path length scales by
    ``scale**2``).
    """
    T = int(T)
    if T < 1:
        raise TrajectoryError(f"horizon T must be >= 1, got {T}")
    kind = spec.get("kind")
    rng = np.random.default_rng(seed)
    t = np.arange(T, dtype=float)

    if kind == "static":
        pts = np.tile(_vec(spec.get("theta", 0.0), d, "theta"), (T, 1))
    elif kind == "linear_drift":
        start = _vec(spec.get("start", 0.0), d, "start")
        vel = _vec(spec["velocity"], d, "velocity")
        pts = start + t[:, None] * vel
    elif kind == "sinusoid":
        center = _vec(spec.get("center", 0.0), d, "center")
        amp = _vec(spec.get("amplitude", 1.0), d, "amplitude")
        period = float(spec["period"])
        phase = 2 * np.pi * np.arange(d) / d
        pts = center + amp * np.sin(2 * np.pi * t[:, None] / period + phase)
    elif kind in ("random_walk", "decaying_walk"):
        start = _vec(spec.get("start", 0.0), d, "start")
        steps = float(spec.get("step_std", 1.0)) * rng.standard_normal((T - 1, d))
        if kind == "decaying_walk":
            decay = float(spec.get("decay", 1.0))
            steps = steps * (np.arange(1, T, dtype=float) ** -decay)[:, None]
        pts = np.vstack([start, start + np.cumsum(steps, axis=0)])
    elif kind == "piecewise_constant":
        values = [_vec(v, d, "values[]") for v in spec["values"]]
        switch = [int(s) for s in spec.get("switch", [])]
        if len(switch) != len(values) - 1 or sorted(switch) != switch:
            raise TrajectoryError("piecewise_constant needs len(values)-1 increasing switch rounds")
        seg = np.searchsorted(np.array(switch), np.arange(1, T + 1), side="right")
        pts = np.array([values[k] for k in seg])
    elif kind == "file":
        pts = load_csv(spec["path"], d=d, T=T)
    else:
        raise TrajectoryError(f"unknown trajectory kind {kind!r}")

    scale = float(spec.get("scale", 1.0))
    return Trajectory(scale * pts if scale != 1.0 else pts)


def load_csv(path, d=None, T=None):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        pts = np.array([[float(x) for x in r] for r in rows])
    except ValueError as exc:
        raise TrajectoryError(f"{path}: non-numeric entry ({exc})") from None
    if pts.ndim != 2 or (len(rows) and len({len(r) for r in rows}) != 1):
        raise TrajectoryError(f"{path}: ragged rows")
    if d is not None and pts.shape[1] != d:
        raise TrajectoryError(f"{path}: rows have {pts.shape[1]} values, expected d={d}")
    if T is not None and pts.shape[0] != T:
        raise TrajectoryError(f"{path}: {pts.shape[0]} rows, expected T={T}")
    return pts


def write_csv(traj, path):
    with open(path, "w", newline="") as fh:
        for row in traj.points:
            fh.write(",".join(format(x, ".17g") for x in row) + "\n")
