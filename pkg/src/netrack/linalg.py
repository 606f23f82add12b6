"""
Symmetric eigenvalue kernel.

Cyclic Jacobi with round-robin (tournament) pair ordering: each round
applies n/2 disjoint Givens rotations at once, so one sweep is n-1
vectorized rounds instead of n(n-1)/2 scalar ones.
"""

import numpy as np

MAX_JACOBI_SIZE = 2048


class NumericalError(RuntimeError):
    """Raised when an iterative kernel fails to converge."""

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


def _tournament_rounds(n):
    # circle method; index n (if n odd) is a bye
    m = n if n % 2 == 0 else n + 1
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[k], players[m - 1 - k]) for k in range(m // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p < n and q < n]
        rounds.append((np.array([p for p, _ in pairs], dtype=int),
                       np.array([q for _, q in pairs], dtype=int)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(A, tol=1e-14, max_sweeps=100, vectors=False):
    """
    Eigen-decomposition of a real symmetric matrix by cyclic Jacobi.

    Parameters
    ----------
    A : array_like, shape (n, n)
        Symmetric matrix. Only the symmetric part is used.
    tol : float
        Stop once the off-diagonal Frobenius norm falls below
        ``tol * ||A||_F``.
    max_sweeps : int
        Sweep budget before giving up.
    vectors : bool
        Also return the orthogonal eigenvector matrix.

    Returns
    -------
    w : ndarray
        Eigenvalues in descending order.
    V : ndarray, optional
        Columns are the matching eigenvectors.

    Raises
    ------
    NumericalError
        If the off-diagonal mass has not vanished after ``max_sweeps``.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    if n > MAX_JACOBI_SIZE:
        raise ValueError(f"matrix size {n} exceeds the Jacobi limit {MAX_JACOBI_SIZE}")
    A = 0.5 * (A + A.T)
    V = np.eye(n) if vectors else None

    scale = np.linalg.norm(A)
    if n < 2 or scale == 0.0:
        return _sorted(np.diag(A).copy(), V)

    rounds = _tournament_rounds(n)
    off_mask = ~np.eye(n, dtype=bool)
    for sweep in range(1, max_sweeps + 1):
        for p, q in rounds:
            apq = A[p, q]
            active = np.abs(apq) > 0.0
            if not active.any():
                continue
            p, q, apq = p[active], q[active], apq[active]
            app, aqq = A[p, p], A[q, q]
            with np.errstate(over="ignore"):
                theta = (aqq - app) / (2.0 * apq)
            big = np.abs(theta) > 1e150
            safe = np.where(big, 1.0, theta)
            t = np.where(big, 0.5 / np.where(big, theta, 1.0),
                         np.sign(safe) / (np.abs(safe) + np.sqrt(safe * safe + 1.0)))
            t = np.where(theta == 0.0, 1.0, t)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c

            Ap, Aq = A[p, :].copy(), A[q, :].copy()
            A[p, :] = c[:, None] * Ap - s[:, None] * Aq
            A[q, :] = s[:, None] * Ap + c[:, None] * Aq
            Ap, Aq = A[:, p].copy(), A[:, q].copy()
            A[:, p] = Ap * c - Aq * s
            A[:, q] = Ap * s + Aq * c
            A[p, q] = 0.0
            A[q, p] = 0.0
            if vectors:
                Vp, Vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = Vp * c - Vq * s
                V[:, q] = Vp * s + Vq * c

        off = np.sqrt(np.sum(A[off_mask] ** 2))
        if off <= tol * scale:
            return _sorted(np.diag(A).copy(), V)

    raise NumericalError(
        f"Jacobi did not converge after {max_sweeps} sweeps "
        f"(off-diagonal norm {off:.3e})", iterations=max_sweeps)


def _sorted(w, V):
    order = np.argsort(w)[::-1]
    if V is None:
        return w[order]
    return w[order], V[:, order]


def spectral_norm_sym(A):
    """Spectral norm of a symmetric matrix, i.e. its largest |eigenvalue|."""
    w = jacobi_eigh(A)
    return float(np.max(np.abs(w)))
