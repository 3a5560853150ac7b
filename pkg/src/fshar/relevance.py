"""Cross-domain relevance between source and target samples and classes.

Sample-wise relevance is computed from embeddings, either as exponentiated
cosine similarity or as the magnitude of l2,1-regularised reconstruction
coefficients. It is then summed within each (source class, target class) pair
and normalised column-wise into transfer weights.
"""

from collections import namedtuple

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import DegenerateEmbeddingError, InvalidConfigurationError, InvalidInputError
from .nn import l_rp_norm
from .validation import check_embeddings, check_labels, check_nonnegative_matrix


def unit_rows(F, name):
    norms = np.linalg.norm(F, axis=1, keepdims=True)
    if np.any(norms == 0):
        bad = int(np.flatnonzero(norms[:, 0] == 0)[0])
        raise DegenerateEmbeddingError(f"{name} row {bad} has zero norm")
    return F / norms


def cosine_relevance(src_emb, trg_emb):
    """``A[i, j] = exp(cos(src_i, trg_j))``, every entry in ``[1/e, e]``."""
    F_src = check_embeddings(src_emb, "source embeddings")
    F_trg = check_embeddings(trg_emb, "target embeddings")
    if F_src.shape[1] != F_trg.shape[1]:
        raise InvalidConfigurationError(
            f"embedding dims differ: {F_src.shape[1]} vs {F_trg.shape[1]}"
        )
    cos = unit_rows(F_src, "source embedding") @ unit_rows(F_trg, "target embedding").T
    return np.exp(np.clip(cos, -1.0, 1.0))


# --------------------------------------------------------------------------
# l2,1 sparse reconstruction
# --------------------------------------------------------------------------

ReconstructionResult = namedtuple("ReconstructionResult", ["A", "trace", "converged"])


def reconstruction_objective(A, F_src, F_trg, lam):
    """``||A^T F_src - F_trg||_F^2 / (2 n_trg) + lam * ||A||_{2,1}``."""
    R = A.T @ F_src - F_trg
    return 0.5 * float(np.sum(R * R)) / F_trg.shape[0] + lam * l_rp_norm(A, 2, 1)


def group_soft_threshold(V, threshold):
    """Proximal operator of ``threshold * ||.||_{2,1}``: shrink each row's l2 norm."""
    norms = np.linalg.norm(V, axis=1, keepdims=True)
    scale = np.maximum(0.0, 1.0 - threshold / np.maximum(norms, np.finfo(float).tiny))
    return V * scale


class L21Reconstruction(BaseEstimator):
    """Reconstruct target embeddings from source embeddings with row-sparse coefficients.

    Solves ``min_A ||A^T F_src - F_trg||_F^2 / (2 n_trg) + lam ||A||_{2,1}``
    by accelerated proximal gradient descent (monotone FISTA) with
    backtracking line search, so the objective never increases. Rows of
    ``A`` (one per source sample) are driven to exactly zero when that
    sample does not help reconstruct the targets.

    Parameters
    ----------
    lam : float
        Weight of the l2,1 penalty, must be positive.
    tol : float
        Stop once the duality gap, which bounds the distance of the
        objective to its minimum, falls below ``tol`` times the objective.
    max_iter : int
        Iteration budget. ``converged_`` is False if it is exhausted.

    Attributes
    ----------
    coef_ : ndarray of shape (n_src, n_trg)
    objective_trace_ : list of float
        Best objective so far, at the start and after every iteration.
    converged_ : bool
    n_iter_ : int
    """

    def __init__(self, lam=1e-2, tol=1e-6, max_iter=1000):
        self.lam = lam
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, F_src, F_trg):
        F_src = check_embeddings(F_src, "source embeddings")
        F_trg = check_embeddings(F_trg, "target embeddings")
        if F_src.shape[1] != F_trg.shape[1]:
            raise InvalidConfigurationError(
                f"embedding dims differ: {F_src.shape[1]} vs {F_trg.shape[1]}"
            )
        if not self.lam > 0:
            raise InvalidConfigurationError(f"lam must be > 0, got {self.lam}")
        if F_trg.shape[0] == 0:
            raise InvalidInputError("no target samples to reconstruct")
        lam, n_trg = float(self.lam), F_trg.shape[0]

        def residual(A):
            return A.T @ F_src - F_trg

        def smooth(R):
            return 0.5 * float(np.sum(R * R)) / n_trg

        A = np.zeros((F_src.shape[0], n_trg))
        R_A = residual(A)
        obj = smooth(R_A)
        trace = [obj]
        # momentum point Y; A is always the best iterate so far
        Y, R_Y, t = A, R_A, 1.0
        L = max(float(np.linalg.norm(F_src, 2)) ** 2 / n_trg, 1e-12)
        converged = self._gap(R_A, obj, F_src, F_trg, lam) <= self.tol * max(obj, 1e-300)
        n_iter = 0
        while not converged and n_iter < self.max_iter:
            n_iter += 1
            f_Y = smooth(R_Y)
            grad = F_src @ R_Y.T / n_trg
            while True:
                Z = group_soft_threshold(Y - grad / L, lam / L)
                D = Z - Y
                R_Z = residual(Z)
                f_Z = smooth(R_Z)
                if f_Z <= f_Y + float(np.sum(grad * D)) + 0.5 * L * float(np.sum(D * D)) + 1e-15:
                    break
                L *= 2.0
            obj_Z = f_Z + lam * l_rp_norm(Z, 2, 1)
            if obj_Z <= obj:
                t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
                beta = (t - 1.0) / t_new
                Y = Z + beta * (Z - A)
                R_Y = R_Z + beta * (R_Z - R_A)
                A, R_A, obj, t = Z, R_Z, obj_Z, t_new
            else:
                # momentum overshot: restart from the best iterate
                Y, R_Y, t = A, R_A, 1.0
            trace.append(obj)
            converged = self._gap(R_A, obj, F_src, F_trg, lam) <= self.tol * max(obj, 1e-300)

        self.coef_ = A
        self.objective_trace_ = trace
        self.converged_ = converged
        self.n_iter_ = n_iter
        return self

    @staticmethod
    def _gap(R, obj, F_src, F_trg, lam):
        """Duality gap for residual ``R = A^T F_src - F_trg``; bounds ``obj - optimum``.

        The dual point is the scaled residual ``-R / n_trg``, shrunk until
        every row of ``F_src @ U.T`` has l2 norm at most ``lam``.
        """
        n_trg = F_trg.shape[0]
        U = -R / n_trg
        worst = float(np.max(np.linalg.norm(F_src @ U.T, axis=1), initial=0.0))
        if worst > lam:
            U = U * (lam / worst)
        dual = -0.5 * n_trg * float(np.sum(U * U)) + float(np.sum(U * F_trg))
        return obj - dual


def sparse_reconstruction(src_emb, trg_emb, lam=1e-2, tol=1e-6, max_iter=1000):
    """Functional form of :class:`L21Reconstruction`; returns ``(A, trace, converged)``."""
    est = L21Reconstruction(lam=lam, tol=tol, max_iter=max_iter).fit(src_emb, trg_emb)
    return ReconstructionResult(est.coef_, est.objective_trace_, est.converged_)


def sparse_relevance(A, granularity="entry"):
    """Sample-wise relevance from reconstruction coefficients.

    ``granularity="entry"`` gives ``|A_ij|``. ``"row"`` assigns every target
    sample the l2 norm of the source sample's row, i.e. the source-sample
    level importance that the l2,1 penalty acts on.
    """
    A = np.asarray(A, dtype=np.float64)
    if granularity == "entry":
        return np.abs(A)
    if granularity == "row":
        rows = np.linalg.norm(A, axis=1, keepdims=True)
        return np.broadcast_to(rows, A.shape).copy()
    raise InvalidConfigurationError(f"unknown granularity {granularity!r}")


def row_relevance(A):
    """l2 norm of each row of ``A``: one importance score per source sample."""
    return np.linalg.norm(np.asarray(A, dtype=np.float64), axis=1)


# --------------------------------------------------------------------------
# Class-wise aggregation and normalisation
# --------------------------------------------------------------------------

def aggregate_classwise(A, src_labels, trg_labels, n_src_classes=None, n_trg_classes=None):
    """``O[p, q] = sum of A[i, j]`` over source samples i of class p and target samples j of class q."""
    A = check_nonnegative_matrix(A, "sample relevance")
    ys = check_labels(src_labels, A.shape[0], n_src_classes)
    yt = check_labels(trg_labels, A.shape[1], n_trg_classes)
    c_src = n_src_classes if n_src_classes is not None else (int(ys.max()) + 1 if ys.size else 0)
    c_trg = n_trg_classes if n_trg_classes is not None else (int(yt.max()) + 1 if yt.size else 0)
    S = np.zeros((c_src, A.shape[0]))
    S[ys, np.arange(A.shape[0])] = 1.0
    T = np.zeros((A.shape[1], c_trg))
    T[np.arange(A.shape[1]), yt] = 1.0
    return S @ A @ T


def normalize_soft(O):
    """Scale each column of ``O`` to sum to one. All-zero columns become uniform."""
    O = check_nonnegative_matrix(O)
    totals = O.sum(axis=0)
    W = np.full(O.shape, 1.0 / O.shape[0]) if O.shape[0] else O.copy()
    nz = totals > 0
    W[:, nz] = O[:, nz] / totals[nz]
    return W


def normalize_hard(O):
    """One-hot each column at its argmax; ties go to the smallest row index."""
    O = check_nonnegative_matrix(O)
    W = np.zeros_like(O)
    if O.size:
        W[np.argmax(O, axis=0), np.arange(O.shape[1])] = 1.0
    return W


def normalize(O, scheme):
    if scheme == "soft":
        return normalize_soft(O)
    if scheme == "hard":
        return normalize_hard(O)
    raise InvalidConfigurationError(f"unknown normalization {scheme!r}")
