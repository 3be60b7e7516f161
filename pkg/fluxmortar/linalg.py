"""
Sparse/dense linear algebra kernels: cached direct factorizations, small dense
decompositions and callback-driven Krylov drivers for the interface problem.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, gmres as scipy_gmres, splu

from .exceptions import BreakdownError, ConvergenceError, LinearSolverError

logger = logging.getLogger(__name__)

FACTORIZATION_KINDS = ('general', 'augmented')


def as_csr(matrix):
    """Compressed row copy with sorted, duplicate-free column indices."""
    A = sp.csr_matrix(matrix, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    if not np.all(np.isfinite(A.data)):
        raise LinearSolverError('Matrix has non-finite entries.', {'shape': list(A.shape)})
    return A


class Factorization:
    """
    Immutable LU factorization of a square sparse matrix.

    `kind` records whether the matrix is a plain cell system ('general') or a
    bordered system carrying the nullspace multiplier ('augmented'). Solves
    allocate their own output, so one handle may serve several threads.
    """

    def __init__(self, matrix, kind='general'):
        if kind not in FACTORIZATION_KINDS:
            raise LinearSolverError(f'Unknown factorization kind {kind!r}.')
        A = sp.csc_matrix(matrix, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise LinearSolverError('Cannot factorize a non-square matrix.', {'shape': list(A.shape)})
        self.kind = kind
        self.shape = A.shape
        self._norm = float(abs(A).sum(axis=1).max()) if A.nnz else 0.0
        try:
            self._lu = splu(A, permc_spec='COLAMD')
        except RuntimeError as exc:
            raise LinearSolverError(
                f'Singular {kind} matrix: {exc}', {'shape': list(A.shape), **_structural_defect(A)}
            ) from exc

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.shape[0]:
            raise LinearSolverError(
                'Right-hand side does not match the factorization.',
                {'expected': self.shape[0], 'found': rhs.shape[0]},
            )
        x = self._lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise LinearSolverError('Direct solve produced non-finite values.', {'kind': self.kind})
        return x


def _structural_defect(A):
    """Locate empty rows/columns, the usual cause of a structurally singular pivot."""
    A = sp.csr_matrix(A)
    empty_rows = np.flatnonzero(np.diff(A.indptr) == 0)
    empty_cols = np.flatnonzero(np.diff(sp.csc_matrix(A).indptr) == 0)
    return {'empty_rows': empty_rows[:10].tolist(), 'empty_cols': empty_cols[:10].tolist()}


def factorize(matrix, kind='general'):
    return Factorization(matrix, kind)


def solve(factorization, rhs):
    return factorization.solve(rhs)


def dense_svd(matrix):
    """Thin SVD returning (U, sigma, V) with matrix = U diag(sigma) V^T."""
    M = np.atleast_2d(np.asarray(matrix, dtype=float))
    if M.size == 0:
        return np.zeros((M.shape[0], 0)), np.zeros(0), np.zeros((M.shape[1], 0))
    U, sigma, Vt = scipy.linalg.svd(M, full_matrices=False)
    return U, sigma, Vt.T


def cholesky(matrix, error=LinearSolverError, message='Matrix is not positive definite.'):
    try:
        return scipy.linalg.cho_factor(np.asarray(matrix, dtype=float), lower=True)
    except np.linalg.LinAlgError as exc:
        raise error(message, {'shape': list(np.shape(matrix))}) from exc


def cholesky_solve(factor, rhs):
    return scipy.linalg.cho_solve(factor, rhs)


@dataclass
class KrylovReport:
    method: str = 'cg'
    iterations: int = 0
    converged: bool = False
    # residual norms in the preconditioned norm sqrt(r . z), starting with the initial one
    residuals: list = field(default_factory=list)

    @property
    def relative_residual(self):
        if not self.residuals or self.residuals[0] == 0.0:
            return 0.0
        return self.residuals[-1] / self.residuals[0]

    def as_dict(self):
        return {
            'method': self.method,
            'iterations': self.iterations,
            'converged': self.converged,
            'relative_residual': self.relative_residual,
            'residuals': list(self.residuals),
        }


def cg(apply_A, apply_Minv, b, tol=1e-10, max_it=500, x0=None, callback=None):
    """
    Preconditioned conjugate gradients with operator callbacks.

    Stops once sqrt(r.z) <= tol * sqrt(r0.z0). A non-positive curvature d.Ad
    raises BreakdownError carrying the offending direction.
    """
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    report = KrylovReport('cg')
    r = b - apply_A(x) if x0 is not None else b.copy()
    z = apply_Minv(r)
    rz = float(r @ z)
    if rz < 0.0:
        raise BreakdownError('Preconditioner is not positive definite.', report, iterate=r,
                             details={'r.z': rz})
    norm0 = np.sqrt(rz)
    report.residuals.append(norm0)
    if norm0 == 0.0:
        report.converged = True
        return x, report

    d = z.copy()
    for k in range(1, max_it + 1):
        q = apply_A(d)
        curvature = float(d @ q)
        if curvature <= 0.0:
            raise BreakdownError(
                f'Non-positive curvature {curvature:.3e} at iteration {k}.',
                report, iterate=d, details={'iteration': k, 'curvature': curvature},
            )
        alpha = rz / curvature
        x += alpha * d
        r -= alpha * q
        z = apply_Minv(r)
        rz_new = float(r @ z)
        report.iterations = k
        report.residuals.append(np.sqrt(max(rz_new, 0.0)))
        logger.debug('cg iteration %d: preconditioned residual %.3e', k, report.residuals[-1])
        if callback is not None:
            callback(x)
        if report.residuals[-1] <= tol * norm0:
            report.converged = True
            return x, report
        d = z + (rz_new / rz) * d
        rz = rz_new

    raise ConvergenceError(
        f'CG did not converge in {max_it} iterations (relative residual {report.relative_residual:.3e}).',
        report, details={'max_it': max_it, 'tol': tol},
    )


def gmres(apply_A, apply_Minv, b, tol=1e-10, max_it=500, callback=None):
    """Restarted GMRES fallback through scipy, with the same report type as `cg`."""
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    report = KrylovReport('gmres')
    if not np.any(b):
        report.converged = True
        report.residuals.append(0.0)
        return np.zeros_like(b), report

    A = LinearOperator((n, n), matvec=apply_A, dtype=float)
    M = LinearOperator((n, n), matvec=apply_Minv, dtype=float)
    report.residuals.append(1.0)

    def record(residual_norm):
        report.iterations += 1
        report.residuals.append(float(residual_norm))
        if callback is not None:
            callback(residual_norm)

    x, info = scipy_gmres(A, b, M=M, rtol=tol, atol=0.0, restart=min(n, 50), maxiter=max_it,
                          callback=record, callback_type='pr_norm')
    if info != 0:
        raise ConvergenceError(
            f'GMRES did not converge (info={info}).', report, details={'max_it': max_it, 'tol': tol}
        )
    report.converged = True
    return x, report
