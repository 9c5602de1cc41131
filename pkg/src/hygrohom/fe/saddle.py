"""Factorise-once solver for constrained (saddle-point) systems.

Solves ``K u - C^T lam = 0, C u = r`` for many right-hand sides ``r``.
With this sign convention ``lam`` are the generalised reaction forces that
the constraints exert on the body, so a homogenised response is
``D^T lam / V``.

Two strategies give the same solution:

``"eliminate"`` (default)
    Rows of the form ``a u_i = r`` or ``a (u_i - u_j) = r`` are removed by
    exact substitution, leaving a reduced symmetric positive (semi-)definite
    operator.  The remaining general rows (few and dense: averages, rigid
    modes) enter through a small bordered Schur complement, and any
    kernel of the reduced operator is pinned using the supplied
    ``null_space``.  The reduced operator is factorised once with a sparse
    Cholesky (CHOLMOD via cvxopt when available, SuperLU otherwise).
``"block"``
    The symmetric indefinite block ``[[K, C^T], [C, 0]]`` is factorised with
    SuperLU.  Simple but suffers heavy fill on periodic problems.

Both follow the solve with iterative refinement on the full block system.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from hygrohom.errors import SolverError

try:  # optional sparse Cholesky backend
    from cvxopt import cholmod as _cholmod
    from cvxopt import matrix as _cvx_matrix
    from cvxopt import spmatrix as _cvx_spmatrix
except ImportError:  # pragma: no cover - exercised via the fallback flag
    _cholmod = None

__all__ = ["SaddleSystem", "SaddleResult", "solve_saddle", "SpdFactor", "nested_dissection"]

log = logging.getLogger(__name__)

USE_CHOLMOD = _cholmod is not None
# below this size the minimum-degree ordering is as good and cheaper to get
_ND_THRESHOLD = 2000


@dataclass
class SaddleResult:
    u: np.ndarray
    lam: np.ndarray
    equilibrium_residual: float  # ||K u - C^T lam|| / ||r||
    constraint_residual: float  # ||C u - r|| / ||r||

    def __iter__(self):
        # allows ``u, lam = result``
        return iter((self.u, self.lam))


def nested_dissection(A: sp.spmatrix, coordinates: np.ndarray, leaf_size: int = 64) -> np.ndarray:
    """Fill-reducing elimination order from recursive coordinate bisection.

    Each level splits the rows at the median coordinate along the widest
    extent; the rows on the low side that couple to the high side form the
    separator and are eliminated after both halves.  Couplings that wrap
    around a periodic cell are caught by the same test, so the separator
    automatically includes the wrap plane.

    Parameters
    ----------
    A : sparse (n, n)
        Symmetric sparsity pattern.
    coordinates : (n, 3)
        A point for each row.
    leaf_size : int
        Blocks at most this large are not split further.

    Returns
    -------
    (n,) permutation; ``A[p][:, p]`` is eliminated in natural order.
    """
    G = sp.csr_matrix(A, copy=True)
    G.data[:] = 1.0
    X = np.asarray(coordinates, dtype=float)
    blocks: list[np.ndarray] = []

    def split(idx: np.ndarray):
        if len(idx) <= leaf_size:
            blocks.append(idx)
            return
        P = X[idx]
        axis = int(np.argmax(np.ptp(P, axis=0)))
        low = P[:, axis] < np.median(P[:, axis])
        if low.all() or not low.any():
            blocks.append(idx)
            return
        sub = G[idx][:, idx]
        touches = sub[low][:, ~low].getnnz(axis=1) > 0
        sep = np.zeros(len(idx), dtype=bool)
        sep[np.where(low)[0][touches]] = True
        split(idx[low & ~sep])
        split(idx[~low])
        blocks.append(idx[sep])

    split(np.arange(G.shape[0]))
    return np.concatenate(blocks) if blocks else np.zeros(0, dtype=np.int64)


class SpdFactor:
    """Sparse Cholesky of a symmetric positive definite matrix.

    ``ordering`` is an optional fill-reducing permutation (see
    :func:`nested_dissection`); CHOLMOD picks its own when it is omitted.
    """

    def __init__(self, A: sp.spmatrix, ordering: np.ndarray | None = None):
        A = sp.csc_matrix(A)
        self.n = A.shape[0]
        if USE_CHOLMOD:
            L = sp.tril(A).tocoo()
            self._A = _cvx_spmatrix(
                _cvx_matrix(L.data.astype(float)),
                _cvx_matrix(L.row.astype(np.int64)),
                _cvx_matrix(L.col.astype(np.int64)),
                (self.n, self.n),
            )
            extra = {} if ordering is None else {"p": _cvx_matrix(np.asarray(ordering).tolist(), tc="i")}
            try:
                self._F = _cholmod.symbolic(self._A, **extra)
                _cholmod.numeric(self._A, self._F)
            except ArithmeticError as exc:
                raise SolverError(f"operator is not positive definite (pivot {exc})") from None
            self._lu = None
        else:
            try:
                self._lu = spla.splu(
                    A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options=dict(SymmetricMode=True)
                )
            except RuntimeError as exc:
                raise SolverError(f"operator is singular ({exc})") from None

    def solve(self, B: np.ndarray) -> np.ndarray:
        B = np.asarray(B, dtype=float)
        if B.size == 0:
            return B.copy()
        if self._lu is not None:
            return self._lu.solve(B)
        X = _cvx_matrix(np.asfortranarray(B.reshape(self.n, -1)))
        _cholmod.solve(self._F, X)
        return np.array(X).reshape(B.shape)


def _classify_rows(C: sp.csr_matrix) -> tuple[np.ndarray, np.ndarray]:
    """Boolean masks of selector rows (one entry) and pair rows (a, -a)."""
    nnz = np.diff(C.indptr)
    selector = nnz == 1
    pair = np.zeros_like(selector)
    two = np.where(nnz == 2)[0]
    if len(two):
        v = C.data[C.indptr[two][:, None] + np.arange(2)]
        pair[two] = np.abs(v[:, 0] + v[:, 1]) <= 1e-14 * np.abs(v[:, 0])
    return selector, pair


class _Eliminated:
    """Factorisation of a saddle system by substitution plus a small border."""

    def __init__(
        self,
        K: sp.csr_matrix,
        C: sp.csr_matrix,
        null_space: np.ndarray | None,
        coordinates: np.ndarray | None = None,
    ):
        n = K.shape[0]
        selector, pair = _classify_rows(C)
        simple = selector | pair
        self.simple_rows = np.where(simple)[0]
        self.dense_rows = np.where(~simple)[0]
        Cs = C[self.simple_rows]
        Cd = C[self.dense_rows]
        self.Cs, self.Cd = Cs, Cd

        # dof classes joined by pair rows; classes hit by a selector are fixed
        parent = np.arange(n)

        def find(a):
            root = a
            while parent[root] != root:
                root = parent[root]
            while parent[a] != root:
                parent[a], a = root, parent[a]
            return root

        nnz = np.diff(Cs.indptr)
        first = Cs.indices[Cs.indptr[:-1]]
        redundant = []
        for r in np.where(nnz == 2)[0].tolist():
            i, j = Cs.indices[Cs.indptr[r]], Cs.indices[Cs.indptr[r] + 1]
            a, b = find(int(i)), find(int(j))
            if a == b:
                redundant.append(int(self.simple_rows[r]))
            else:
                parent[max(a, b)] = min(a, b)
        roots = np.array([find(i) for i in range(n)])
        fixed = np.zeros(n, dtype=bool)
        sel_roots = roots[first[nnz == 1]]
        fixed[sel_roots] = True
        _, first_hit = np.unique(sel_roots, return_index=True)
        duplicate = np.setdiff1d(np.arange(len(sel_roots)), first_hit)
        redundant += self.simple_rows[nnz == 1][duplicate].tolist()
        if redundant:
            raise SolverError(
                f"{len(redundant)} redundant constraint row(s) (first: {sorted(redundant)[:5]}); "
                "the constraint operator must have full row rank"
            )
        free_roots = np.unique(roots[~fixed[roots]])
        col_of_root = np.full(n, -1)
        col_of_root[free_roots] = np.arange(len(free_roots))
        cols = col_of_root[roots]
        live = cols >= 0
        self.T = sp.csr_matrix(
            (np.ones(int(live.sum())), (np.where(live)[0], cols[live])), shape=(n, len(free_roots))
        )
        self.masters = free_roots
        self.G = SpdFactor(Cs @ Cs.T) if Cs.shape[0] else None

        Kr = (self.T.T @ K @ self.T).tocsr()
        B = (Cd @ self.T).toarray() if Cd.shape[0] else np.zeros((0, Kr.shape[0]))

        # kernel of the reduced operator (modes compatible with simple rows)
        nr = Kr.shape[0]
        N = np.zeros((nr, 0))
        if null_space is not None and len(null_space):
            Nf = np.asarray(null_space, dtype=float).reshape(n, -1)
            if Cs.shape[0]:
                M = Cs @ Nf
                _, s, vt = np.linalg.svd(M, full_matrices=M.shape[0] < M.shape[1])
                tol = 1e-10 * max(np.abs(M).max(), 1.0) if M.size else 0.0
                rank = int(np.sum(s > tol))
                Nf = Nf @ vt[rank:].T
            N = Nf[self.masters]
        self.q = N.shape[1]
        if self.q:
            _, _, piv = scipy.linalg.qr(N.T, pivoting=True, mode="economic")
            pins = np.sort(piv[: self.q])
        else:
            pins = np.zeros(0, dtype=np.int64)
        free = np.setdiff1d(np.arange(nr), pins)
        self.pins, self.free = pins, free
        self.N = N
        self.Kr = Kr
        self.B = B
        KFF = Kr[free][:, free]
        ordering = None
        if coordinates is not None and KFF.shape[0] > _ND_THRESHOLD:
            ordering = nested_dissection(KFF, np.asarray(coordinates, dtype=float)[self.masters[free]])
        self.KFF = SpdFactor(KFF, ordering)
        self.KPF = Kr[pins][:, free]
        BF, BP = B[:, free], B[:, pins]
        self.Y = self.KFF.solve(BF.T) if len(self.dense_rows) else np.zeros((len(free), 0))
        kd = len(self.dense_rows)
        S = np.zeros((self.q + kd, kd + self.q))
        S[: self.q, :kd] = self.KPF @ self.Y - BP.T
        S[self.q:, :kd] = BF @ self.Y
        S[self.q:, kd:] = B @ N
        self.kd = kd
        if S.size:
            # equilibrate before judging singularity: rows mix force and length scales
            Se = S / np.maximum(np.abs(S).max(axis=1, keepdims=True), np.finfo(float).tiny)
            Se /= np.maximum(np.abs(Se).max(axis=0, keepdims=True), np.finfo(float).tiny)
            cond = np.linalg.cond(Se)
            if not np.isfinite(cond) or cond > 1e14:
                raise SolverError(
                    f"bordered constraint system is singular (condition {cond:.2e}); "
                    "general constraint rows are redundant or do not remove the operator kernel"
                )
            self.S = scipy.linalg.lu_factor(S)
        else:
            self.S = None

    def solve(self, K: sp.csr_matrix, f: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Solve ``K u - C^T lam = f, C u = r`` for column blocks f (n,k), r (m,k)."""
        k = f.shape[1]
        rs = r[self.simple_rows]
        rd = r[self.dense_rows]
        g = self.Cs.T @ self.G.solve(rs) if self.G is not None else np.zeros_like(f)
        fr = self.T.T @ (f - K @ g)
        gd = rd - self.Cd @ g
        fF, fP = fr[self.free], fr[self.pins]
        y0 = self.KFF.solve(fF)
        if self.S is not None:
            rhs = np.vstack([fP - self.KPF @ y0, gd - self.B[:, self.free] @ y0])
            sol = scipy.linalg.lu_solve(self.S, rhs)
            mu, a = sol[: self.kd], sol[self.kd:]
        else:
            mu, a = np.zeros((0, k)), np.zeros((0, k))
        z = np.zeros((self.Kr.shape[0], k))
        z[self.free] = y0 + self.Y @ mu
        z += self.N @ a
        u = self.T @ z + g
        lam = np.zeros((len(r), k))
        lam[self.dense_rows] = mu
        if self.G is not None:
            resid = K @ u - self.Cd.T @ mu - f
            lam[self.simple_rows] = self.G.solve(self.Cs @ resid)
        return u, lam


@dataclass(eq=False)
class SaddleSystem:
    """Constrained operator with a cached factorisation.

    ``null_space`` (n x q) lists kernel vectors of ``K`` (rigid-body modes,
    constants); it lets the eliminating strategy pin the kernel left by the
    substitution rows.  It is not needed when the substitution rows alone
    make the operator definite.  ``coordinates`` (n x 3, a point per
    unknown) switches the reduced Cholesky to a nested dissection ordering.
    """

    K: sp.spmatrix
    C: sp.spmatrix
    D: np.ndarray | None = None
    refine_steps: int = 2
    fail_tolerance: float = 1e-6
    strategy: str = "eliminate"
    null_space: np.ndarray | None = None
    coordinates: np.ndarray | None = None
    factorisations: int = field(default=0, init=False)
    _fact: object = field(default=None, init=False, repr=False)
    _A: object = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.K = sp.csr_matrix(self.K)
        self.C = sp.csr_matrix(self.C)
        n = self.K.shape[0]
        if self.K.shape != (n, n):
            raise ValueError("K must be square")
        if self.C.shape[1] != n:
            raise ValueError(f"C has {self.C.shape[1]} columns, K has {n}")
        if self.strategy not in ("eliminate", "block"):
            raise ValueError(f"unknown strategy {self.strategy!r}")

    @property
    def n(self) -> int:
        return self.K.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[0]

    @property
    def block(self) -> sp.csc_matrix:
        return sp.bmat([[self.K, self.C.T], [self.C, None]], format="csc")

    def factorise(self):
        if self._fact is not None:
            return self._fact
        try:
            if self.strategy == "block":
                self._A = self.block
                self._fact = spla.splu(self._A, permc_spec="COLAMD")
            else:
                self._fact = _Eliminated(self.K, self.C, self.null_space, self.coordinates)
        except (RuntimeError, SolverError) as exc:
            raise SolverError(self._deficiency_report(str(exc))) from None
        self.factorisations += 1
        log.debug("factorised saddle system n=%d m=%d (%s)", self.n, self.m, self.strategy)
        return self._fact

    def _deficiency_report(self, reason: str) -> str:
        row_nnz = np.diff(self.C.indptr)
        empty = int(np.sum(row_nnz == 0))
        msg = f"saddle system singular ({reason}): {self.n} unknowns, {self.m} constraints"
        if empty:
            msg += f", {empty} empty constraint row(s)"
        if 0 < self.m <= 2000 and self.n <= 40000:
            # rank of C via the Gram matrix is cheap at these sizes
            G = (self.C @ self.C.T).toarray()
            rank = np.linalg.matrix_rank(G)
            if rank < self.m:
                msg += f"; constraint rank {rank} < {self.m} rows (redundant constraints)"
        msg += "; check for unconstrained rigid modes or duplicated constraints"
        return msg

    def _raw_solve(self, f: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        fact = self.factorise()
        if self.strategy == "block":
            x = fact.solve(np.vstack([f, r]))
            return x[: self.n], -x[self.n:]
        return fact.solve(self.K, f, r)

    def solve(self, rhs) -> list[SaddleResult]:
        """Solve for each column of ``rhs`` (shape (m,) or (m, k))."""
        R = np.asarray(rhs, dtype=float)
        if R.ndim == 1:
            R = R[:, None]
        if R.shape[0] != self.m:
            raise ValueError(f"right-hand side has {R.shape[0]} rows, expected {self.m}")
        zeros = np.zeros((self.n, R.shape[1]))
        u, lam = self._raw_solve(zeros, R)
        for _ in range(self.refine_steps):
            du, dlam = self._raw_solve(-(self.K @ u - self.C.T @ lam), R - self.C @ u)
            u, lam = u + du, lam + dlam
        out = []
        for j in range(R.shape[1]):
            uj, lj = u[:, j].copy(), lam[:, j].copy()
            scale = max(np.linalg.norm(R[:, j]), np.finfo(float).tiny)
            eq = np.linalg.norm(self.K @ uj - self.C.T @ lj) / scale
            cr = np.linalg.norm(self.C @ uj - R[:, j]) / scale
            if not (np.all(np.isfinite(uj)) and np.all(np.isfinite(lj))):
                raise SolverError(self._deficiency_report("non-finite solution"))
            if max(eq, cr) > self.fail_tolerance:
                raise SolverError(self._deficiency_report(f"residual {max(eq, cr):.2e} after refinement"))
            out.append(SaddleResult(uj, lj, eq, cr))
        return out


def solve_saddle(system: SaddleSystem, rhs) -> list[SaddleResult]:
    """Solve ``system`` for a sequence of m-vectors, reusing one factorisation."""
    R = np.atleast_2d(np.asarray(rhs, dtype=float))
    return system.solve(R.T)
