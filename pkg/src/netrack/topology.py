"""
Agent-interaction graphs and symmetric doubly stochastic mixing matrices.
"""

from dataclasses import dataclass, field

import numpy as np

from .linalg import jacobi_eigh

SUPPORT_THRESHOLD = 1e-15
STOCHASTIC_TOL = 1e-12


class TopologyError(ValueError):
    """Invalid graph or mixing matrix."""


class GraphGenerationError(RuntimeError):
    """Random graph generation gave up before producing a connected graph."""


@dataclass(frozen=True)
class Graph:
    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n < 1:
            raise TopologyError(f"agent count must be positive, got {self.n}")
        norm = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise TopologyError(f"self-loop ({i}, {j}) not allowed")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise TopologyError(f"edge ({i}, {j}) out of range for n={self.n}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))

    def degrees(self):
        deg = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def adjacency(self):
        A = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            A[i, j] = A[j, i] = True
        return A

    def is_connected(self):
        return _connected(self.adjacency())


def _connected(adj):
    n = adj.shape[0]
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    stack = [0]
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(adj[i] & ~seen):
            seen[j] = True
            stack.append(int(j))
    return bool(seen.all())


def build_graph(kind, n, seed=None, p=None, edges=None, max_retries=1000):
    """
    Build a connected undirected graph.

    Parameters
    ----------
    kind : str
        One of ``complete``, ``ring``, ``star`` (center 0), ``path``,
        ``erdos_renyi`` (needs ``p``) or ``explicit`` (needs ``edges``).
    n : int
        Number of agents.
    seed : int or numpy.random.SeedSequence, optional
        Only used by ``erdos_renyi``.
    """
    n = int(n)
    if n < 1:
        raise TopologyError(f"agent count must be positive, got {n}")
    if kind == "complete":
        E = [(i, j) for i in range(n) for j in range(i + 1, n)]
    elif kind == "ring":
        E = [(i, (i + 1) % n) for i in range(n)] if n > 1 else []
        E = [e for e in E if e[0] != e[1]]
    elif kind == "star":
        E = [(0, j) for j in range(1, n)]
    elif kind == "path":
        E = [(i, i + 1) for i in range(n - 1)]
    elif kind == "explicit":
        if edges is None:
            raise TopologyError("explicit topology needs an edge list")
        E = [tuple(e) for e in edges]
    elif kind == "erdos_renyi":
        if p is None or not 0.0 < p <= 1.0:
            raise TopologyError(f"erdos_renyi needs edge probability p in (0, 1], got {p}")
        rng = np.random.default_rng(seed)
        iu = np.triu_indices(n, k=1)
        for _ in range(max_retries):
            keep = rng.random(len(iu[0])) < p
            g = Graph(n, frozenset(zip(iu[0][keep].tolist(), iu[1][keep].tolist())))
            if g.is_connected():
                return g
        raise GraphGenerationError(
            f"no connected Erdos-Renyi graph (n={n}, p={p}) after {max_retries} draws")
    else:
        raise TopologyError(f"unknown topology kind {kind!r}")

    g = Graph(n, frozenset(E))
    if not g.is_connected():
        raise TopologyError(f"{kind} graph on {n} agents is disconnected")
    return g


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    """Validated symmetric, stochastic, irreducible, aperiodic matrix."""

    entries: np.ndarray
    lambda_2: float
    lambda_n: float

    @property
    def n(self):
        return self.entries.shape[0]

    @classmethod
    def from_array(cls, P):
        P = np.array(P, dtype=float)
        report = validate_mixing(P)
        if not report["valid"]:
            failed = [k for k, v in report["checks"].items() if not v["pass"]]
            raise TopologyError(f"matrix violates mixing assumptions: {', '.join(failed)}")
        P.setflags(write=False)
        lam2, lamn = _spectrum(P)
        return cls(P, lam2, lamn)


def build_mixing_matrix(g, scheme="metropolis"):
    """
    Weights on a connected graph.

    ``metropolis``: ``1/(1+max(deg_i, deg_j))`` per edge.
    ``lazy_max_degree``: ``1/(2 deg_max)`` per edge.
    The diagonal takes whatever is left of each row.
    """
    if not g.is_connected():
        raise TopologyError("mixing matrix needs a connected graph")
    n = g.n
    deg = g.degrees()
    P = np.zeros((n, n))
    if scheme == "metropolis":
        for i, j in g.edges:
            P[i, j] = P[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    elif scheme == "lazy_max_degree":
        dmax = deg.max() if n > 1 else 1
        for i, j in g.edges:
            P[i, j] = P[j, i] = 1.0 / (2.0 * dmax)
    else:
        raise TopologyError(f"unknown weight scheme {scheme!r}")
    np.fill_diagonal(P, 0.0)
    P[np.diag_indices(n)] = 1.0 - P.sum(axis=1)
    return MixingMatrix.from_array(P)


def validate_mixing(P):
    """
    Check a candidate mixing matrix without raising.

    Returns a JSON-ready dict: ``{"valid": bool, "checks": {name: {"pass",
    "detail"}}}``.
    """
    P = np.asarray(P, dtype=float)
    checks = {}

    def put(name, ok, detail):
        checks[name] = {"pass": bool(ok), "detail": detail}

    square = P.ndim == 2 and P.shape[0] == P.shape[1] and P.shape[0] >= 1
    put("square", square, f"shape {list(P.shape)}")
    if not square or not np.all(np.isfinite(P)):
        if square:
            put("finite", False, "non-finite entries")
        return {"valid": False, "checks": checks}

    asym = float(np.max(np.abs(P - P.T)))
    put("symmetric", asym == 0.0, f"max |P - P^T| = {asym:.3e}")
    rowdev = float(np.max(np.abs(P.sum(axis=1) - 1.0)))
    put("stochastic", rowdev <= STOCHASTIC_TOL, f"max |row sum - 1| = {rowdev:.3e}")
    put("nonnegative", bool(np.all(P >= 0.0)), f"min entry = {float(P.min()):.3e}")
    dmin = float(np.min(np.diag(P)))
    put("positive_diagonal", dmin > 0.0, f"min diagonal = {dmin:.3e}")
    support = (np.abs(P) > SUPPORT_THRESHOLD) | (np.abs(P.T) > SUPPORT_THRESHOLD)
    np.fill_diagonal(support, False)
    conn = _connected(support)
    put("connected", conn, "support graph connected" if conn else "support graph disconnected")
    aper = conn and bool(np.any(np.diag(P) > SUPPORT_THRESHOLD))
    put("aperiodic", aper, "positive self-weight on connected support" if aper
        else "no positive self-weight on a connected support")

    if checks["symmetric"]["pass"]:
        w = jacobi_eigh(P)
        top_ok = abs(w[0] - 1.0) <= 1e-10
        rest_ok = bool(np.all(np.abs(w[1:]) < 1.0 - 1e-14)) if len(w) > 1 else True
        put("eigenvalue_range", top_ok and rest_ok,
            f"lambda_1 = {w[0]:.17g}, lambda_n = {w[-1]:.17g}")
    else:
        put("eigenvalue_range", False, "skipped: matrix not symmetric")

    return {"valid": all(c["pass"] for c in checks.values()), "checks": checks}


def _spectrum(P):
    w = jacobi_eigh(P)
    lam2 = float(w[1]) if len(w) > 1 else float(w[0])
    return lam2, float(w[-1])


def mixing_spectrum(P):
    """Return ``(lambda_2, lambda_n)``; for one agent both equal 1."""
    if isinstance(P, MixingMatrix):
        P = P.entries
    return _spectrum(P)
