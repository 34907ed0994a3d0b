"""Sparse symmetric/Hermitian operators, PCG and a smallest-eigenpair solver."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InputError, NumericalError, StructuralError

SYMMETRIC = "symmetric"
HERMITIAN = "hermitian"


@dataclass(frozen=True, eq=False)
class SparseSymOp:
    """Compressed-row operator with a declared symmetry.

    The CSR storage itself is a :class:`scipy.sparse.csr_matrix`.
    """

    matrix: sp.csr_matrix
    kind: str = SYMMETRIC

    def __post_init__(self):
        if self.kind not in (SYMMETRIC, HERMITIAN):
            raise InputError(f"unknown symmetry kind {self.kind!r}")
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise StructuralError("operator must be square")

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, x):
        return spmv(self, x)

    def diagonal(self):
        return self.matrix.diagonal()

    def asymmetry(self) -> float:
        """``max |A - A^T|`` (or ``A^H`` for Hermitian operators)."""
        A = self.matrix
        At = A.conj().T if self.kind == HERMITIAN else A.T
        diff = (A - At).tocoo()
        return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0

    def toarray(self):
        return self.matrix.toarray()


def as_matrix(A):
    return A.matrix if isinstance(A, SparseSymOp) else A


def spmv(A, x):
    M = as_matrix(A)
    x = np.asarray(x)
    if x.shape[0] != M.shape[1]:
        raise StructuralError(f"dimension mismatch: operator {M.shape}, vector {x.shape}")
    return M @ x


@dataclass
class SolveInfo:
    iterations: int
    residual: float


def solve_spd(A, b, rel_tol=1e-12, max_iter=None, x0=None, preconditioner=None,
              return_info=False):
    """Preconditioned conjugate gradients for SPD or Hermitian positive definite ``A``.

    The default preconditioner is the inverse diagonal.  ``preconditioner``
    may be any callable ``r -> M^{-1} r``.  The returned ``x`` satisfies
    ``||b - A x|| <= rel_tol ||b||`` (checked on the true residual).
    """
    M = as_matrix(A)
    b = np.asarray(b)
    n = M.shape[0]
    if b.shape[0] != n:
        raise StructuralError(f"dimension mismatch: operator {M.shape}, rhs {b.shape}")
    if not 0 < rel_tol <= 1e-6:
        raise InputError("rel_tol must lie in (0, 1e-6]")
    max_iter = max_iter or 10 * n + 100
    dtype = np.result_type(M.dtype, b.dtype, float)
    bnorm = np.linalg.norm(b)
    if not np.isfinite(bnorm):
        raise NumericalError("NaN or inf in the right-hand side", residual=bnorm)
    if bnorm == 0.0:
        x = np.zeros(n, dtype=dtype)
        return (x, SolveInfo(0, 0.0)) if return_info else x
    if preconditioner is None:
        dinv = 1.0 / M.diagonal().real
        preconditioner = lambda r: dinv * r  # noqa: E731

    x = np.zeros(n, dtype=dtype) if x0 is None else np.array(x0, dtype=dtype)
    r = b - M @ x if x0 is not None else b.astype(dtype, copy=True)
    target = rel_tol * bnorm
    rnorm = np.linalg.norm(r)
    it = 0
    while rnorm > target:
        if it >= max_iter:
            raise NumericalError(
                f"PCG did not converge in {max_iter} iterations "
                f"(relative residual {rnorm / bnorm:.3e})",
                residual=rnorm / bnorm,
            )
        z = preconditioner(r)
        rz = np.vdot(r, z).real
        if it == 0:
            p = z
        else:
            p = z + (rz / rz_old) * p
        Ap = M @ p
        pAp = np.vdot(p, Ap).real
        if not np.isfinite(pAp) or pAp <= 0:
            raise NumericalError(
                "PCG breakdown: operator not positive definite or NaN encountered",
                residual=rnorm / bnorm,
            )
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rz_old = rz
        it += 1
        rnorm = np.linalg.norm(r)
        if it % 50 == 0 or rnorm <= target:
            # refresh against drift of the recursive residual
            r = b - M @ x
            rnorm = np.linalg.norm(r)
    if not np.all(np.isfinite(x)):
        raise NumericalError("NaN in PCG solution")
    info = SolveInfo(it, rnorm / bnorm)
    return (x, info) if return_info else x


@dataclass
class EigenReport:
    """Smallest eigenpairs of ``H x = lambda M x``."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, M-orthonormal
    residual_norms: np.ndarray

    def __len__(self):
        return len(self.eigenvalues)


def _splu(A):
    return spla.splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A")


DENSE_LIMIT = 400


def smallest_eigenpairs(H, M, k=2, tol=1e-8, shift=None, deflate=None, seed=0,
                        method="auto"):
    """``k`` smallest eigenpairs of the symmetric pencil ``(H, M)``.

    Shift-and-invert Lanczos around ``shift``, which must lie strictly
    below the spectrum so that ``H - shift M`` is positive definite and the
    largest inverted eigenvalues are the smallest original ones.  If no
    shift is given a lower bound is estimated from the extreme eigenvalue
    of the unshifted pencil.

    Parameters
    ----------
    deflate : array (n,) or (n, m), optional
        Directions ``t``.  The problem is restricted to the subspace
        ``{x : (M t)^T x = 0}`` (M-orthogonal complement) by a bordered
        solve, so the result is the constrained minimum, not a post-hoc
        filter.
    method : {"auto", "dense", "sparse"}
        ``"auto"`` uses a dense decomposition up to ``DENSE_LIMIT`` unknowns.
    """
    Hm = sp.csr_matrix(as_matrix(H))
    Mm = sp.csr_matrix(as_matrix(M))
    n = Hm.shape[0]
    if Mm.shape != Hm.shape:
        raise StructuralError("H and M must have the same shape")
    if not 1 <= k <= 10:
        raise InputError("k must lie in 1..10")

    if method not in ("auto", "dense", "sparse"):
        raise InputError(f"unknown method {method!r}")
    if method == "dense" or (method == "auto" and n <= DENSE_LIMIT):
        return _dense_smallest(Hm.toarray(), Mm.toarray(), k, tol, deflate)

    if shift is None:
        lam = spla.eigsh(Hm, k=1, M=Mm, which="SA", tol=1e-3, maxiter=20 * n,
                         return_eigenvectors=False)[0]
        shift = lam - 0.1 * max(1.0, abs(lam))
    lu = _splu(Hm - shift * Mm)

    if deflate is None:
        def solve(rhs):
            return lu.solve(rhs)
    else:
        T = np.asarray(deflate, dtype=float).reshape(n, -1)
        C = Mm @ T
        FC = lu.solve(C)
        schur = C.T @ FC

        def solve(rhs):
            y = lu.solve(rhs)
            mu = np.linalg.solve(schur, C.T @ y)
            return y - FC @ mu

    op = spla.LinearOperator((n, n), matvec=solve, dtype=float)
    rng = np.random.default_rng(seed)
    v0 = solve(Mm @ rng.standard_normal(n))
    ncv = min(n - 1, max(2 * k + 1, 40))
    try:
        lam, X = spla.eigsh(Hm, k=k, M=Mm, sigma=shift, which="LM", OPinv=op,
                            v0=v0, ncv=ncv, tol=0.0, maxiter=max(1000, n))
    except spla.ArpackNoConvergence as exc:
        raise NumericalError("eigensolver did not converge",
                             residual=getattr(exc, "eigenvalues", None)) from exc
    order = np.argsort(lam)
    return _finish_report(Hm, Mm, lam[order], X[:, order], tol, deflate)


def _finish_report(Hm, Mm, lam, X, tol, deflate=None):
    # M-normalise and refine eigenvalues by Rayleigh quotients
    MX = Mm @ X
    X = X / np.sqrt(np.einsum("ij,ij->j", X, MX))
    lam = np.einsum("ij,ij->j", X, Hm @ X)
    order = np.argsort(lam)
    lam, X = lam[order], X[:, order]
    res = constrained_residuals(Hm, Mm, X, lam, deflate)
    if np.any(res > tol):
        raise NumericalError(
            f"eigen residuals {res} exceed tolerance {tol}", residual=res
        )
    return EigenReport(lam, X, res)


def _dense_smallest(H, M, k, tol, deflate):
    import scipy.linalg as sla

    n = H.shape[0]
    Hs, Ms = sp.csr_matrix(H), sp.csr_matrix(M)
    if deflate is None:
        lam, X = sla.eigh(H, M)
        return _finish_report(Hs, Ms, lam[:k], X[:, :k], tol)
    T = np.asarray(deflate, dtype=float).reshape(n, -1)
    Z = sla.null_space((M @ T).T)
    lam, Y = sla.eigh(Z.T @ H @ Z, Z.T @ M @ Z)
    return _finish_report(Hs, Ms, lam[:k], Z @ Y[:, :k], tol, deflate)


def constrained_residuals(H, M, X, lam, deflate):
    """Residual norms of a deflated eigenproblem (Lagrange term removed)."""
    Hm, Mm = as_matrix(H), as_matrix(M)
    R = Hm @ X - (Mm @ X) * lam
    if deflate is None:
        return np.linalg.norm(R, axis=0)
    C = Mm @ np.asarray(deflate, dtype=float).reshape(Hm.shape[0], -1)
    coef = np.linalg.lstsq(C, R, rcond=None)[0]
    return np.linalg.norm(R - C @ coef, axis=0)


def write_coo(A, path) -> None:
    """Coordinate text export: one ``i j re [im]`` line per stored entry."""
    coo = sp.coo_matrix(as_matrix(A))
    cplx = np.iscomplexobj(coo.data)
    with open(path, "w") as fh:
        for i, j, v in zip(coo.row, coo.col, coo.data):
            if cplx:
                fh.write(f"{i} {j} {v.real:.17g} {v.imag:.17g}\n")
            else:
                fh.write(f"{i} {j} {v:.17g}\n")
