"""Sparse open-system linear algebra.

Conventions used throughout the package:

* Tensor products are ordered as the factors of a :class:`HilbertSpec`, the
  first factor being the most significant index (``numpy.kron`` order).
* Density operators are vectorized by **column stacking**,
  ``vec(rho)[c*d + r] = rho[r, c]``, so that ``vec(A rho B) = (B^T kron A)
  vec(rho)``.  Nothing in the package uses row stacking.
* Each factor may carry an integer charge weight.  Basis state ``n`` of a
  factor with weight ``w`` has charge ``w*n``; total charges add.  When every
  term of a Liouvillian is charge covariant the superoperator is block diagonal
  in ``k = Q(row) - Q(col)`` and can be assembled one sector at a time.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from ._kernels import kron_sector_coo


class SpaceMismatchError(ValueError):
    """Operators or states live on different Hilbert spaces."""


class SolverError(RuntimeError):
    """A linear-algebra or ODE solve failed."""


class DegenerateSteadyStateError(SolverError):
    """The Liouvillian kernel is not one dimensional."""


class ConvergenceError(SolverError):
    """An iterative method ran out of steps or tolerance."""


class PositivityWarning(UserWarning):
    """A density matrix has an eigenvalue below the truncation noise floor.

    The most negative eigenvalue is available as ``worst_eigenvalue``.
    """

    def __init__(self, message, worst_eigenvalue):
        super().__init__(message)
        self.worst_eigenvalue = worst_eigenvalue


# -- spaces and operators ----------------------------------------------------


@dataclass(frozen=True)
class Factor:
    label: str
    dim: int
    charge: int = 0


@dataclass(frozen=True)
class HilbertSpec:
    """Ordered tensor-product structure, e.g. ``(a1, a2, q1, q2)``."""

    factors: tuple[Factor, ...]

    def __post_init__(self):
        labels = [f.label for f in self.factors]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate factor labels in {labels}")
        for f in self.factors:
            if f.dim < 1:
                raise ValueError(f"factor {f.label!r} has dimension {f.dim} < 1")

    @classmethod
    def of(cls, *factors) -> "HilbertSpec":
        """Build from ``(label, dim)`` or ``(label, dim, charge)`` tuples."""
        return cls(tuple(f if isinstance(f, Factor) else Factor(*f) for f in factors))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(f.label for f in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown factor label {label!r}; have {self.labels}") from None

    def subspace(self, keep: Iterable[str]) -> "HilbertSpec":
        keep = set(keep)
        for lab in keep:
            self.index(lab)
        return HilbertSpec(tuple(f for f in self.factors if f.label in keep))

    @cached_property
    def charges(self) -> np.ndarray:
        """Total charge of every product basis state."""
        q = np.zeros(1, dtype=np.int64)
        for f in self.factors:
            q = (q[:, None] + f.charge * np.arange(f.dim, dtype=np.int64)[None, :]).ravel()
        return q


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Sparse operator bound to a :class:`HilbertSpec`."""

    data: sp.csr_matrix
    space: HilbertSpec

    def __post_init__(self):
        data = sp.csr_matrix(self.data, dtype=np.complex128)
        if data.shape != (self.space.dim, self.space.dim):
            raise SpaceMismatchError(
                f"operator shape {data.shape} does not match space dimension {self.space.dim}")
        object.__setattr__(self, "data", data)

    def _check(self, other: "OperatorMatrix"):
        if other.space != self.space:
            raise SpaceMismatchError("operators act on different spaces")

    def __add__(self, other):
        self._check(other)
        return OperatorMatrix(self.data + other.data, self.space)

    def __sub__(self, other):
        self._check(other)
        return OperatorMatrix(self.data - other.data, self.space)

    def __neg__(self):
        return OperatorMatrix(-self.data, self.space)

    def __mul__(self, scalar):
        return OperatorMatrix(self.data * scalar, self.space)

    __rmul__ = __mul__

    def __matmul__(self, other):
        self._check(other)
        return OperatorMatrix(self.data @ other.data, self.space)

    def dag(self) -> "OperatorMatrix":
        return OperatorMatrix(self.data.conj().T, self.space)

    def toarray(self) -> np.ndarray:
        return self.data.toarray()


def embed_operator(local, factor_label: str, space: HilbertSpec) -> OperatorMatrix:
    """Return ``1 x ... x local x ... x 1`` on ``space``.

    ``local`` may be an array, a sparse matrix or an :class:`OperatorMatrix`
    on a single-factor space.
    """
    i = space.index(factor_label)
    mat = local.data if isinstance(local, OperatorMatrix) else local
    mat = sp.csr_matrix(mat, dtype=np.complex128)
    d = space.dims[i]
    if mat.shape != (d, d):
        raise SpaceMismatchError(
            f"local operator of shape {mat.shape} cannot act on factor {factor_label!r} (dim {d})")
    left = int(np.prod(space.dims[:i]))
    right = int(np.prod(space.dims[i + 1:]))
    out = sp.kron(sp.kron(sp.identity(left, format="csr"), mat), sp.identity(right, format="csr"))
    return OperatorMatrix(out.tocsr(), space)


def identity(space: HilbertSpec) -> OperatorMatrix:
    return OperatorMatrix(sp.identity(space.dim, dtype=np.complex128, format="csr"), space)


# -- density matrices --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Dense density operator on ``space``.

    Construction checks Hermiticity and unit trace to ``atol``; positivity is
    checked on demand by :meth:`check_positivity` since it needs a full
    eigendecomposition.
    """

    data: np.ndarray
    space: HilbertSpec
    atol: float = field(default=1e-10, repr=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        if data.shape != (self.space.dim, self.space.dim):
            raise SpaceMismatchError(
                f"density matrix shape {data.shape} does not match space dimension {self.space.dim}")
        herm = np.max(np.abs(data - data.conj().T)) if data.size else 0.0
        if herm > self.atol:
            raise ValueError(f"density matrix not Hermitian (deviation {herm:.3e})")
        tr = np.trace(data)
        if abs(tr - 1.0) > self.atol:
            raise ValueError(f"density matrix trace {tr:.12g} != 1")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_ket(cls, psi, space: HilbertSpec) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=np.complex128).ravel()
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()), space)

    @classmethod
    def hermitized(cls, data, space: HilbertSpec, atol=1e-10) -> "DensityMatrix":
        """Symmetrize ``(rho + rho^H)/2`` and renormalize before validating."""
        data = np.asarray(data, dtype=np.complex128)
        data = 0.5 * (data + data.conj().T)
        data = data / np.trace(data).real
        return cls(data, space, atol)

    def expect(self, op) -> complex:
        mat = op.data if isinstance(op, OperatorMatrix) else op
        if sp.issparse(mat):
            return complex((mat.multiply(self.data.T)).sum())
        return complex(np.einsum("ij,ji->", np.asarray(mat), self.data))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.data)

    def check_positivity(self, floor: float = -1e-8) -> float:
        """Return the smallest eigenvalue; warn with :class:`PositivityWarning` below ``floor``."""
        worst = float(self.eigenvalues()[0])
        if worst < floor:
            warnings.warn(PositivityWarning(
                f"density matrix eigenvalue {worst:.3e} below {floor:.0e}", worst), stacklevel=2)
        return worst

    def kron(self, other: "DensityMatrix") -> "DensityMatrix":
        return DensityMatrix(np.kron(self.data, other.data),
                             HilbertSpec(self.space.factors + other.space.factors))


def partial_trace(rho: DensityMatrix, keep: Sequence[str]) -> DensityMatrix:
    """Reduced state on the factors in ``keep`` (kept in space order)."""
    space = rho.space
    keep_idx = sorted(space.index(lab) for lab in keep)
    dims = list(space.dims)
    t = rho.data.reshape(dims + dims)
    n = len(dims)
    # trace out from the back so axis numbers stay valid
    for i in reversed(range(n)):
        if i in keep_idx:
            continue
        nleft = t.ndim // 2
        t = np.trace(t, axis1=i, axis2=i + nleft)
    dk = int(np.prod([dims[i] for i in keep_idx])) if keep_idx else 1
    sub = HilbertSpec(tuple(space.factors[i] for i in keep_idx))
    return DensityMatrix(t.reshape(dk, dk), sub, atol=max(rho.atol, 1e-10))


# -- superoperators ----------------------------------------------------------


def sector_indices(space: HilbertSpec, k: int | None) -> np.ndarray:
    """Column-stacked vec indices ``c*d + r`` with ``Q[r] - Q[c] == k`` (all if ``k`` is None)."""
    d = space.dim
    if k is None:
        return np.arange(d * d, dtype=np.int64)
    q = space.charges
    diff = q[None, :] - q[:, None]  # diff[c, r] = Q[r] - Q[c]
    return np.flatnonzero(diff.ravel() == k).astype(np.int64)


@dataclass(frozen=True, eq=False)
class Superoperator:
    """Sparse linear map on column-stacked density vectors.

    ``sector`` is None for the full space, otherwise the map is restricted to
    the vec indices returned by :func:`sector_indices`.
    """

    matrix: sp.csr_matrix
    space: HilbertSpec
    sector: int | None = None

    @cached_property
    def indices(self) -> np.ndarray:
        return sector_indices(self.space, self.sector)

    @property
    def dim2(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def trace_row(self) -> np.ndarray:
        """Positions (within this sector) of diagonal elements ``rho[r, r]``."""
        d = self.space.dim
        idx = self.indices
        return np.flatnonzero(idx // d == idx % d)

    def vectorize(self, rho) -> np.ndarray:
        data = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho)
        full = data.T.ravel().astype(np.complex128)
        if self.sector is None:
            return full
        vec = full[self.indices]
        rest = full.copy()
        rest[self.indices] = 0
        outside = np.linalg.norm(rest)
        if outside > 1e-14 * max(1.0, np.linalg.norm(full)):
            raise ValueError(f"operator has weight outside charge sector {self.sector}")
        return vec

    def unvectorize(self, vec) -> np.ndarray:
        d = self.space.dim
        full = np.zeros(d * d, dtype=np.complex128)
        full[self.indices] = vec
        return full.reshape(d, d).T

    def trace(self, vec) -> complex:
        return complex(np.sum(np.asarray(vec)[self.trace_row]))

    def __add__(self, other: "Superoperator") -> "Superoperator":
        if other.space != self.space or other.sector != self.sector:
            raise SpaceMismatchError("superoperators act on different spaces or sectors")
        return Superoperator((self.matrix + other.matrix).tocsr(), self.space, self.sector)


def _sandwich_matrix(terms, space: HilbertSpec, sector: int | None) -> sp.csr_matrix:
    """Sum of ``coef * L rho R`` over ``terms`` as a (sector) superoperator."""
    d = space.dim
    ident = sp.identity(d, dtype=np.complex128, format="csr")
    # fold all one-sided terms into a single left and a single right operator
    left_only = sp.csr_matrix((d, d), dtype=np.complex128)
    right_only = sp.csr_matrix((d, d), dtype=np.complex128)
    pairs = []
    for coef, left, right in terms:
        if coef == 0:
            continue
        if right is None and left is None:
            left_only = left_only + coef * ident
        elif right is None:
            left_only = left_only + coef * left
        elif left is None:
            right_only = right_only + coef * right
        else:
            pairs.append((coef, left, right))
    if left_only.nnz:
        pairs.append((1.0, left_only, None))
    if right_only.nnz:
        pairs.append((1.0, None, right_only))
    if sector is None:
        n = d * d
        out = sp.csr_matrix((n, n), dtype=np.complex128)
        for coef, left, right in pairs:
            left = ident if left is None else left
            rt = ident if right is None else right.T
            out = out + coef * sp.kron(rt, left, format="csr")
        return out.tocsr()
    idx = sector_indices(space, sector)
    pos = np.full(d * d, -1, dtype=np.int64)
    pos[idx] = np.arange(idx.size)
    rows, cols, vals = [], [], []
    for coef, left, right in pairs:
        left = ident if left is None else sp.csr_matrix(left)
        rt = ident if right is None else sp.csr_matrix(right.T)
        left.sort_indices()
        rt.sort_indices()
        r, c, v = kron_sector_coo(left, rt, pos, coef)
        rows.append(r)
        cols.append(c)
        vals.append(v)
    n = idx.size
    if not rows:
        return sp.csr_matrix((n, n), dtype=np.complex128)
    out = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(n, n)).tocsr()
    out.sum_duplicates()
    out.eliminate_zeros()
    return out


def _raw(op, space):
    if op is None:
        return None
    if isinstance(op, OperatorMatrix):
        if op.space != space:
            raise SpaceMismatchError("operator lives on a different space")
        return op.data
    return sp.csr_matrix(op, dtype=np.complex128)


def _liouvillian_terms(H, terms, space):
    out = []
    if H is not None:
        h = _raw(H, space)
        out += [(-1j, h, None), (1j, None, h)]
    for rate, A, B in terms:
        a, b = _raw(A, space), _raw(B, space)
        ba = b @ a
        out += [(rate, a, b), (-0.5 * rate, ba, None), (-0.5 * rate, None, ba)]
    return out


def _space_of(H, terms, space):
    if space is not None:
        return space
    for op in [H] + [x for t in terms for x in t[1:]]:
        if isinstance(op, OperatorMatrix):
            return op.space
    raise ValueError("cannot infer the Hilbert space; pass space=")


def dissipator(A: OperatorMatrix, B: OperatorMatrix, sector: int | None = None) -> Superoperator:
    """``D[A,B] rho = A rho B - (B A rho + rho B A)/2`` as a superoperator."""
    if A.space != B.space:
        raise SpaceMismatchError("A and B act on different spaces")
    return assemble_liouvillian(None, [(1.0, A, B)], space=A.space, sector=sector)


def assemble_liouvillian(H: OperatorMatrix | None, terms, space: HilbertSpec | None = None,
                         sector: int | None = None) -> Superoperator:
    """Build ``-i[H, .] + sum_j rate_j D[A_j, B_j]``.

    Parameters
    ----------
    H : OperatorMatrix or None
        Hamiltonian.
    terms : iterable of (rate, A, B)
        Real rates and operator pairs for :func:`dissipator`.
    space : HilbertSpec, optional
        Needed only when no operator is given.
    sector : int, optional
        Restrict to one charge sector; every term must be charge covariant.
    """
    terms = list(terms)
    space = _space_of(H, terms, space)
    for rate, _, _ in terms:
        if np.iscomplexobj(rate) and np.imag(rate) != 0:
            raise ValueError("dissipator rates must be real")
    mat = _sandwich_matrix(_liouvillian_terms(H, terms, space), space, sector)
    return Superoperator(mat, space, sector)


class SectoredLiouvillian:
    """Lazily assembled charge sectors of one Liouvillian.

    Holds the Hamiltonian and dissipators and builds ``sector(k)`` on first
    request.  ``full()`` assembles the unrestricted superoperator.
    """

    def __init__(self, H, terms, space: HilbertSpec | None = None, extra=()):
        self.terms = list(terms)
        self.space = _space_of(H, self.terms, space)
        self.H = H
        # extra raw sandwich terms (coef, left, right) that are not in D-form
        self.extra = list(extra)
        self._cache: dict = {}

    def _sandwiches(self):
        return _liouvillian_terms(self.H, self.terms, self.space) + self.extra

    def sector(self, k: int | None) -> Superoperator:
        if k not in self._cache:
            mat = _sandwich_matrix(self._sandwiches(), self.space, k)
            self._cache[k] = Superoperator(mat, self.space, k)
        return self._cache[k]

    def full(self) -> Superoperator:
        return self.sector(None)


# -- solvers -----------------------------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    """Numerical settings shared by the steady-state and time-domain solvers.

    ``method`` is ``"auto"``, ``"direct"`` or ``"iterative"``; ``auto`` picks the
    direct sparse LU below ``iterative_threshold`` rows.  ``ode`` is ``"rk"``
    (adaptive Dormand-Prince) or ``"krylov"`` (Arnoldi exponential action).
    ``ordering`` picks the fill-reducing ordering of the direct solver:
    ``"metis"`` nested dissection, ``"mmd"`` SuperLU's minimum degree, or
    ``"auto"`` (METIS when pymetis is importable).
    """

    method: str = "auto"
    ode: str = "krylov"
    abs_tol: float = 1e-9
    rel_tol: float = 1e-8
    max_steps: int = 100_000
    krylov_dim: int = 30
    iterative_threshold: int = 400_000
    ordering: str = "auto"

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.method not in ("auto", "direct", "iterative"):
            raise ValueError(f"unknown steady-state method {self.method!r}")
        if self.ordering not in ("auto", "metis", "mmd"):
            raise ValueError(f"unknown ordering {self.ordering!r}")
        if self.ode not in ("rk", "krylov"):
            raise ValueError(f"unknown ode method {self.ode!r}")


def _as_superop(L) -> Superoperator:
    if isinstance(L, SectoredLiouvillian):
        return L.sector(0)
    return L


def steady_state(L, cfg: SolverConfig | None = None, return_residual=False):
    """Unit-trace null vector of ``L`` as a :class:`DensityMatrix`.

    ``L`` is a :class:`Superoperator` (full or sector 0) or a
    :class:`SectoredLiouvillian`, in which case sector 0 is used.
    """
    cfg = cfg or SolverConfig()
    L = _as_superop(L)
    if L.sector not in (None, 0):
        raise ValueError("steady states live in charge sector 0")
    A = L.matrix.tocsr()
    n = A.shape[0]
    method = cfg.method
    if method == "auto":
        method = "direct" if n <= cfg.iterative_threshold else "iterative"
    if method == "direct":
        x = _steady_direct(L, A, cfg.ordering)
    else:
        x = _steady_iterative(L, A, cfg)
    residual = float(np.max(np.abs(A @ x))) if n else 0.0
    if not np.isfinite(residual) or residual > cfg.abs_tol:
        raise DegenerateSteadyStateError(
            f"steady-state residual {residual:.3e} exceeds abs_tol {cfg.abs_tol:.1e}")
    rho = DensityMatrix.hermitized(L.unvectorize(x), L.space)
    return (rho, residual) if return_residual else rho


def fill_reducing_order(A: sp.spmatrix):
    """Nested-dissection ordering of the pattern of ``A + A^T`` (METIS), or None.

    Returns None when pymetis is not installed.
    """
    try:
        import pymetis
    except ImportError:
        return None
    S = (abs(A) + abs(A).T).tocsr()
    S.setdiag(0)
    S.eliminate_zeros()
    S.sort_indices()
    if hasattr(pymetis, "CSRAdjacency"):
        perm, _ = pymetis.nested_dissection(pymetis.CSRAdjacency(S.indptr, S.indices))
    else:
        perm, _ = pymetis.nested_dissection(xadj=S.indptr, adjncy=S.indices)
    return np.asarray(perm, dtype=np.int64)


def _steady_direct(L: Superoperator, A: sp.csr_matrix, ordering: str = "auto") -> np.ndarray:
    n = A.shape[0]
    # Only the population rows are linearly dependent (trace preservation), so
    # the trace constraint replaces the population row with the largest |diag|.
    tr = L.trace_row
    i0 = int(tr[np.argmax(np.abs(A.diagonal()[tr]))])
    keep = np.ones(n)
    keep[i0] = 0.0
    B = sp.diags(keep) @ A + sp.csr_matrix(
        (np.ones(tr.size, dtype=np.complex128), (np.full(tr.size, i0), tr)), shape=(n, n))
    b = np.zeros(n, dtype=np.complex128)
    b[i0] = 1.0
    perm = fill_reducing_order(B) if ordering in ("auto", "metis") else None
    if perm is None and ordering == "metis":
        raise ImportError("ordering='metis' needs the pymetis package")
    try:
        if perm is None:
            # minimum degree on A^T + A keeps fill-in far below COLAMD for Liouvillians
            lu = spla.splu(B.tocsc(), permc_spec="MMD_AT_PLUS_A", options=dict(SymmetricMode=True))
            x = lu.solve(b)
        else:
            lu = spla.splu(B[perm][:, perm].tocsc(), permc_spec="NATURAL",
                           options=dict(SymmetricMode=True))
            x = np.empty_like(b)
            x[perm] = lu.solve(b[perm])
    except RuntimeError as exc:
        raise DegenerateSteadyStateError(f"Liouvillian kernel is degenerate ({exc})") from exc
    if not np.all(np.isfinite(x)):
        raise DegenerateSteadyStateError("singular trace-augmented system")
    return x


def _steady_iterative(L: Superoperator, A: sp.csr_matrix, cfg: SolverConfig) -> np.ndarray:
    """Inverse iteration on ``L - s`` with ILU-preconditioned GMRES."""
    n = A.shape[0]
    scale = max(1.0, float(np.max(np.abs(A.diagonal()))))
    shift = -1e-6 * scale
    As = (A - shift * sp.identity(n, format="csr")).tocsc()
    ilu = spla.spilu(As, drop_tol=1e-6, fill_factor=20)
    M = spla.LinearOperator((n, n), ilu.solve, dtype=np.complex128)
    x = np.zeros(n, dtype=np.complex128)
    x[L.trace_row] = 1.0
    x /= L.trace(x)
    for _ in range(cfg.max_steps):
        y, info = spla.gmres(As, x, M=M, rtol=1e-12, atol=0.0, restart=50, maxiter=200)
        if info < 0:
            raise ConvergenceError("GMRES breakdown in inverse iteration")
        tr = L.trace(y)
        if tr == 0:
            raise DegenerateSteadyStateError("inverse iterate has vanishing trace")
        x = y / tr
        if np.max(np.abs(A @ x)) <= cfg.abs_tol:
            return x
    raise ConvergenceError(f"inverse iteration did not converge in {cfg.max_steps} steps")


def expv(t: float, A, v: np.ndarray, m: int = 30, tol: float = 1e-10,
         max_steps: int = 100_000) -> np.ndarray:
    """``exp(t A) v`` by an adaptive Arnoldi (Krylov) method.

    Step-size control and error estimate follow Sidje's Expokit ``expv``.
    """
    v = np.asarray(v, dtype=np.complex128)
    n = v.shape[0]
    beta = np.linalg.norm(v)
    if t == 0 or beta == 0:
        return v.copy()
    m = max(1, min(m, n - 1)) if n > 1 else 1
    anorm = float(abs(A).sum(axis=1).max()) if sp.issparse(A) else float(np.abs(A).sum(axis=1).max())
    if anorm == 0:
        return v.copy()
    gamma, delta = 0.9, 1.2
    btol = 1e-12 * anorm
    sgn = math.copysign(1.0, t)
    t_out = abs(t)
    t_now = 0.0
    fact = (((m + 1) / math.e) ** (m + 1)) * math.sqrt(2 * math.pi * (m + 1))
    t_new = (1.0 / anorm) * ((fact * tol) / (4 * beta * anorm)) ** (1.0 / m)
    t_new = _round_step(t_new)
    w = v.copy()
    nstep = 0
    while t_now < t_out:
        nstep += 1
        if nstep > max_steps:
            raise ConvergenceError(f"Krylov propagation exceeded {max_steps} steps")
        t_step = min(t_out - t_now, t_new)
        V = np.zeros((n, m + 1), dtype=np.complex128)
        H = np.zeros((m + 2, m + 2), dtype=np.complex128)
        V[:, 0] = w / beta
        mb, k1 = m, 2
        for j in range(m):
            p = A @ V[:, j]
            for i in range(j + 1):
                H[i, j] = np.vdot(V[:, i], p)
                p = p - H[i, j] * V[:, i]
            s = np.linalg.norm(p)
            if s < btol:
                k1, mb = 0, j + 1
                t_step = t_out - t_now
                break
            H[j + 1, j] = s
            V[:, j + 1] = p / s
        if k1 != 0:
            H[m + 1, m] = 1.0
            avnorm = np.linalg.norm(A @ V[:, m])
        xm = 1.0 / m
        err_loc = btol
        for _ in range(50):
            mx = mb + k1
            F = scipy.linalg.expm(sgn * t_step * H[:mx, :mx])
            if k1 == 0:
                break
            p1 = abs(F[m, 0]) * beta
            p2 = abs(F[m + 1, 0]) * beta * avnorm
            if p1 > 10 * p2:
                err_loc, xm = p2, 1.0 / m
            elif p1 > p2:
                err_loc, xm = p1 * p2 / (p1 - p2), 1.0 / m
            else:
                err_loc, xm = p1, 1.0 / max(1, m - 1)
            if err_loc <= delta * t_step * tol:
                break
            t_step = _round_step(gamma * t_step * (t_step * tol / err_loc) ** xm)
            if t_step < 1e-14 * t_out:
                raise SolverError("Krylov step size underflow")
        else:
            raise ConvergenceError("Krylov step rejected too often")
        mx = mb + max(0, k1 - 1)
        w = V[:, :mx] @ (beta * F[:mx, 0])
        beta = np.linalg.norm(w)
        t_now += t_step
        if err_loc > 0:
            t_new = _round_step(gamma * t_step * (t_step * tol / err_loc) ** xm)
        else:
            t_new = t_out
        if beta == 0:
            break
    return w


def _round_step(t):
    if not np.isfinite(t) or t <= 0:
        return t
    s = 10.0 ** (math.floor(math.log10(t)) - 1)
    return math.ceil(t / s) * s


def propagate(L, vec0: np.ndarray, times, cfg: SolverConfig | None = None) -> np.ndarray:
    """Vectors ``exp(L t) vec0`` for every ``t`` in ``times`` (increasing, from 0).

    Returns an array of shape ``(len(times), len(vec0))``.
    """
    cfg = cfg or SolverConfig()
    L = _as_superop(L) if isinstance(L, SectoredLiouvillian) else L
    A = L.matrix if isinstance(L, Superoperator) else L
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return np.empty((0, len(vec0)), dtype=np.complex128)
    if times[0] < 0 or np.any(np.diff(times) < 0):
        raise ValueError("times must be non-negative and increasing")
    vec0 = np.asarray(vec0, dtype=np.complex128)
    out = np.empty((times.size, vec0.size), dtype=np.complex128)
    if cfg.ode == "krylov":
        w, t_prev = vec0, 0.0
        for i, t in enumerate(times):
            if t > t_prev:
                w = expv(t - t_prev, A, w, m=cfg.krylov_dim, tol=cfg.abs_tol * 1e-2,
                         max_steps=cfg.max_steps)
            out[i] = w if t > 0 else vec0
            t_prev = t
    else:
        out[times == 0] = vec0
        pos = times > 0
        if np.any(pos):
            sol = solve_ivp(lambda _t, y: A @ y, (0.0, float(times[-1])), vec0,
                            method="RK45", t_eval=times[pos], rtol=cfg.rel_tol * 1e-2,
                            atol=cfg.abs_tol * 1e-2)
            if not sol.success:
                raise SolverError(f"Runge-Kutta integration failed: {sol.message}")
            out[pos] = sol.y.T
    if isinstance(L, Superoperator) and L.sector in (None, 0):
        tr0 = L.trace(vec0)
        drift = np.max(np.abs(out[:, L.trace_row].sum(axis=1) - tr0))
        if drift > cfg.rel_tol * max(1.0, abs(tr0)):
            raise SolverError(f"trace drift {drift:.3e} exceeds rel_tol {cfg.rel_tol:.1e}")
    return out


def evolve(L, rho0: DensityMatrix, times, cfg: SolverConfig | None = None) -> list[DensityMatrix]:
    """Trajectory ``exp(L t) rho0`` as density matrices."""
    L = _as_superop(L)
    vecs = propagate(L, L.vectorize(rho0), times, cfg)
    out = []
    for t, v in zip(np.asarray(times, float), vecs):
        if t == 0:
            out.append(rho0)
            continue
        out.append(DensityMatrix(L.unvectorize(v), L.space, atol=1e-7))
    return out
