"""Sparse SPD solves and spectral condition numbers.

Two direct backends: CHOLMOD (through cvxopt) and SciPy's SuperLU in
symmetric mode with diagonal pivots.  Both refuse matrices that are not
positive definite.  Jacobi-preconditioned CG is available on request.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from scipy.linalg import eigh

try:
    from cvxopt import cholmod as _cholmod
    from cvxopt import matrix as _cvx_matrix
    from cvxopt import spmatrix as _cvx_spmatrix
except ImportError:  # pragma: no cover
    _cholmod = None

BACKENDS = ("auto", "cholmod", "superlu", "cg")


class SolverError(RuntimeError):
    pass


class _SuperLU:
    """Symmetric-mode sparse LU without pivoting.

    With diagonal pivots a positive diagonal of ``U`` certifies that ``K`` is
    positive definite (the factorisation is then ``L D L^T``).
    """

    def __init__(self, K):
        lu = spla.splu(sps.csc_matrix(K), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
        d = lu.U.diagonal()
        if not np.array_equal(lu.perm_r, lu.perm_c) or np.min(d) <= 0:
            raise SolverError(f"matrix is not SPD: min pivot {np.min(d):.3e}")
        self.min_pivot = float(np.min(d))
        self._lu = lu

    def solve(self, b):
        return self._lu.solve(np.asarray(b, float))


class _Cholmod:
    """Supernodal Cholesky ``P K P^T = L L^T`` from CHOLMOD."""

    def __init__(self, K):
        L = sps.tril(sps.coo_matrix(K)).tocoo()
        A = _cvx_spmatrix(L.data.astype(float), L.row.astype(int), L.col.astype(int), K.shape)
        opts = _cholmod.options
        old = dict(opts)
        opts["supernodal"] = 2
        opts["postorder"] = True
        try:
            F = _cholmod.symbolic(A, uplo="L")
            _cholmod.numeric(A, F)
        except ArithmeticError as exc:
            raise SolverError(f"matrix is not SPD: Cholesky breakdown at column {exc}") from None
        finally:
            opts.clear()
            opts.update(old)
        self._F = F
        self.min_pivot = None

    def solve(self, b):
        x = _cvx_matrix(np.array(b, float, copy=True))
        _cholmod.solve(self._F, x)
        return np.array(x).ravel()


def factorize(K, backend="auto"):
    """Direct SPD factorisation object with a ``solve`` method."""
    if backend == "auto":
        backend = "cholmod" if _cholmod is not None else "superlu"
    if backend == "cholmod":
        if _cholmod is None:
            raise SolverError("cvxopt is not installed; use backend='superlu'")
        return _Cholmod(K)
    if backend == "superlu":
        return _SuperLU(K)
    raise ValueError(f"unknown direct backend {backend!r}")


def _pcg(K, F, rtol, maxiter):
    d = K.diagonal()
    if np.min(d) <= 0:
        raise SolverError(f"non-positive diagonal entry {np.min(d):.3e}")
    M = sps.diags(1.0 / d)
    it = [0]

    def count(_):
        it[0] += 1

    u, info = spla.cg(K, F, rtol=rtol, maxiter=maxiter, M=M, callback=count)
    if info != 0:
        res = np.linalg.norm(K @ u - F) / np.linalg.norm(F)
        raise SolverError(f"CG did not converge after {it[0]} iterations (relative residual {res:.3e})")
    return u


def solve_spd(K, F, backend="auto", rtol=1e-10, refine=4, maxiter=None):
    """Solve ``K u = F`` for SPD ``K``.

    Direct backends are followed by up to ``refine`` steps of iterative
    refinement until ``|K u - F| <= rtol |F|``; the factorisation is reused,
    so the extra cost is a few triangular solves.  A matrix that is not
    positive definite raises :class:`SolverError`.
    """
    F = np.asarray(F, float)
    if K.shape[0] == 0:
        return np.zeros(0)
    K = sps.csr_matrix(K)
    nf = np.linalg.norm(F)
    if nf == 0:
        return np.zeros_like(F)
    if backend == "cg":
        return _pcg(K, F, rtol, maxiter or 20 * K.shape[0])
    fac = factorize(K, backend)
    u = fac.solve(F)
    for _ in range(refine):
        r = F - K @ u
        if np.linalg.norm(r) <= rtol * nf:
            break
        u = u + fac.solve(r)
    return u


def is_spd(K, backend="auto"):
    try:
        factorize(K, backend)
        return True
    except SolverError:
        return False


def estimate_condition(K, dense_limit=8000, tol=1e-3, maxiter=5000, backend="auto"):
    """Spectral condition number ``lambda_max / lambda_min`` of SPD ``K``.

    Dense eigenvalues up to ``dense_limit`` unknowns; above that Lanczos for
    ``lambda_max`` and Lanczos on the factorised inverse for ``lambda_min``.
    """
    n = K.shape[0]
    if n <= dense_limit:
        A = K.toarray() if sps.issparse(K) else np.asarray(K, float)
        ev = eigh(0.5 * (A + A.T), eigvals_only=True)
        if ev[0] <= 0:
            raise SolverError(f"matrix is not positive definite: min eig {ev[0]:.3e}")
        return float(ev[-1] / ev[0])
    K = sps.csr_matrix(K)
    fac = factorize(K, backend)
    inv = spla.LinearOperator(K.shape, matvec=fac.solve, dtype=float)
    v0 = np.ones(n) / np.sqrt(n)
    try:
        lmax = spla.eigsh(K, k=1, which="LA", tol=tol, maxiter=maxiter, v0=v0,
                          return_eigenvectors=False)[0]
        mu = spla.eigsh(inv, k=1, which="LA", tol=tol, maxiter=maxiter, v0=v0,
                        return_eigenvectors=False)[0]
    except spla.ArpackNoConvergence as exc:
        raise SolverError(f"eigenvalue iteration did not converge: {exc}") from None
    return float(lmax * mu)
