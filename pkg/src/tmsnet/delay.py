"""Steady-state qubit tomography for networks with unequal propagation delays.

With delays the joint state no longer follows a time-local master equation,
but equal-time qubit correlations of the delayed network equal two-time
correlations of the delay-free cascaded network:

    <S1 S2>_delayed = Tr{ S1 exp(L tau) (S2 rho_ss) },   tau = tau2 - tau1.

The later qubit's operator is propagated, the earlier one is applied to the
steady state.  All sixteen Pauli correlators follow from the four elementary
operators ``|a><b|`` of each qubit, so one delay point costs four
propagations (one per charge sector component of ``|c><d| rho_ss``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .entanglement import concurrence
from .network import (
    QUBITS,
    NetworkParams,
    TruncationConfig,
    cascaded_liouvillian,
    network_steady_state,
)
from .quantum_core import (
    DensityMatrix,
    OperatorMatrix,
    SectoredLiouvillian,
    SolverConfig,
    SolverError,
    Superoperator,
    embed_operator,
    propagate,
    sector_indices,
)
from .reservoir import QUBIT_SPACE

PAULIS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


class PositivityError(SolverError):
    def __init__(self, message, worst_eigenvalue):
        super().__init__(message)
        self.worst_eigenvalue = worst_eigenvalue


def _dense(op) -> np.ndarray:
    if isinstance(op, OperatorMatrix):
        return op.toarray()
    return np.asarray(op.toarray() if hasattr(op, "toarray") else op, dtype=complex)


def _split_by_sector(X: np.ndarray, space) -> dict:
    """Charge-sector components ``{k: vec}`` of the operator ``X`` (column stacked)."""
    q = space.charges
    full = X.T.ravel()
    out = {}
    for k in np.unique(q[:, None] - q[None, :]):
        idx = sector_indices(space, int(k))
        v = full[idx]
        if np.any(v != 0):
            out[int(k)] = v
    return out


def _as_sectored(L):
    if isinstance(L, SectoredLiouvillian):
        return L.sector, L.space
    if isinstance(L, Superoperator) and L.sector is None:
        return (lambda k: L), L.space
    raise TypeError("L must be a SectoredLiouvillian or a full-space Superoperator")


def _weights(O1: np.ndarray, idx: np.ndarray) -> np.ndarray:
    # Tr{O1 Y} = sum_{r,c} O1[c, r] Y[r, c] and vec(Y)[c*d + r] = Y[r, c]
    return O1.ravel()[idx]


def two_time_correlator(L, rho_ss: DensityMatrix, O1, O2, tau, cfg: SolverConfig | None = None,
                        stationarity_tol: float = 1e-7):
    """``Tr{O1 exp(L tau) (O2 rho_ss)}`` for scalar or increasing array ``tau >= 0``.

    ``L`` is a :class:`SectoredLiouvillian` (each charge component of
    ``O2 rho_ss`` is propagated in its own sector) or a full-space
    :class:`Superoperator`.
    """
    cfg = cfg or SolverConfig()
    sector, space = _as_sectored(L)
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(taus < 0):
        raise ValueError("tau must be >= 0")
    L0 = sector(0)
    res = np.max(np.abs(L0.matrix @ L0.vectorize(rho_ss)))
    if res > stationarity_tol:
        raise ValueError(f"rho_ss is not stationary (residual {res:.3e})")
    order = np.argsort(taus, kind="stable")
    o1 = _dense(O1)
    total = np.zeros(taus.size, dtype=complex)
    for k, v in _split_by_sector(_dense(O2) @ rho_ss.data, space).items():
        Lk = sector(k)
        traj = propagate(Lk, v, taus[order], cfg)
        total[order] += traj @ _weights(o1, Lk.indices)
    return complex(total[0]) if np.ndim(tau) == 0 else total


@dataclass(frozen=True)
class DelayedCorrelatorSet:
    """``c[mu][nu] = <sigma_1^mu(tau) sigma_2^nu>`` for ``mu, nu`` in ``(0, x, y, z)``."""

    c: np.ndarray
    tau: float

    def __post_init__(self):
        if abs(self.c[0, 0] - 1) > 1e-9:
            raise ValueError(f"c[0][0] = {self.c[0, 0]} != 1")

    def state_matrix(self) -> np.ndarray:
        """``(1/4) sum c_{mu nu} sigma^mu x sigma^nu`` before Hermitization."""
        rho = np.zeros((4, 4), dtype=complex)
        for mu in range(4):
            for nu in range(4):
                rho += self.c[mu, nu] * np.kron(PAULIS[mu], PAULIS[nu])
        return 0.25 * rho


@dataclass(frozen=True)
class TomographyResult:
    rho: DensityMatrix
    correlators: DelayedCorrelatorSet
    hermiticity_defect: float
    worst_eigenvalue: float


class DelayTomography:
    """Regression tomography of the delayed two-qubit steady state.

    Builds the cascaded Liouvillian and its steady state once; every delay
    evaluation then only propagates the four elementary operator
    applications of the earlier qubit.
    """

    def __init__(self, p: NetworkParams, trunc: TruncationConfig,
                 cfg: SolverConfig | None = None, positivity_floor: float = -1e-6):
        self.p, self.trunc = p, trunc
        self.cfg = cfg or SolverConfig()
        self.floor = positivity_floor
        self.L = cascaded_liouvillian(p, trunc)
        self.steady = network_steady_state(p, trunc, self.cfg, liouvillian=self.L)
        space = self.L.space
        self.space = space

        def elementary(label):
            ops = {}
            for a in range(2):
                for b in range(2):
                    e = np.zeros((2, 2))
                    e[a, b] = 1.0
                    ops[a, b] = embed_operator(e, label, space).toarray()
            return ops

        self._elem = {lab: elementary(lab) for lab in QUBITS}
        self._early_cache: dict = {}

    def _early(self, early: str):
        """Sector components of ``|c><d|_early rho_ss`` for each ``(c, d)``."""
        if early not in self._early_cache:
            rho = self.steady.rho.data
            self._early_cache[early] = {
                cd: _split_by_sector(E @ rho, self.space) for cd, E in self._elem[early].items()}
        return self._early_cache[early]

    def _table(self, taus: np.ndarray, late: str, early: str) -> np.ndarray:
        """``G[t, (a,b), (c,d)] = Tr{|a><b|_late exp(L t)(|c><d|_early rho_ss)}``."""
        G = np.zeros((taus.size, 4, 4), dtype=complex)
        for j, (cd, parts) in enumerate(sorted(self._early(early).items())):
            for k, v in parts.items():
                Lk = self.L.sector(k)
                traj = propagate(Lk, v, taus, self.cfg)
                for i, (ab, E) in enumerate(sorted(self._elem[late].items())):
                    G[:, i, j] += traj @ _weights(E, Lk.indices)
        return G

    def correlators(self, taus) -> list[DelayedCorrelatorSet]:
        """Pauli correlator tables on an increasing grid of ``tau = tau2 - tau1`` (signed)."""
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        out = [None] * taus.size
        for sign, late, early in ((1, "q1", "q2"), (-1, "q2", "q1")):
            sel = np.flatnonzero(taus >= 0) if sign > 0 else np.flatnonzero(taus < 0)
            if sel.size == 0:
                continue
            mag = np.abs(taus[sel])
            order = np.argsort(mag, kind="stable")
            G = self._table(mag[order], late, early)
            basis = [(a, b) for a in range(2) for b in range(2)]
            for n, g in zip(sel[order], G):
                c = np.zeros((4, 4), dtype=complex)
                for mu in range(4):
                    for nu in range(4):
                        s_late = np.array([PAULIS[mu][ab] for ab in basis])
                        s_early = np.array([PAULIS[nu][cd] for cd in basis])
                        val = s_late @ g @ s_early
                        # c is indexed (qubit-1 Pauli, qubit-2 Pauli)
                        if sign > 0:
                            c[mu, nu] = val
                        else:
                            c[nu, mu] = val
                out[n] = DelayedCorrelatorSet(c, float(taus[n]))
        return out

    def _finish(self, cs: DelayedCorrelatorSet) -> TomographyResult:
        raw = cs.state_matrix()
        defect = float(np.linalg.norm(raw - raw.conj().T) / np.linalg.norm(raw))
        rho = DensityMatrix.hermitized(raw, QUBIT_SPACE, atol=1e-9)
        worst = float(rho.eigenvalues()[0])
        if worst < self.floor:
            raise PositivityError(
                f"delayed qubit state has eigenvalue {worst:.3e} < {self.floor:.0e}", worst)
        return TomographyResult(rho, cs, defect, worst)

    def states(self, taus) -> list[TomographyResult]:
        return [self._finish(cs) for cs in self.correlators(taus)]

    def state(self, tau: float) -> TomographyResult:
        return self.states([tau])[0]


def delayed_two_qubit_state(p: NetworkParams, trunc: TruncationConfig, tau: float | None = None,
                            cfg: SolverConfig | None = None) -> DensityMatrix:
    """Steady two-qubit state of the network with delay ``tau = tau2 - tau1``.

    ``tau`` defaults to ``p.tau``; negative delays swap the roles of the qubits.
    """
    tau = p.tau if tau is None else tau
    return DelayTomography(p, trunc, cfg).state(tau).rho


@dataclass(frozen=True)
class EntanglementTime:
    """Delay (in units of ``1/gamma``) at which the concurrence reaches zero.

    ``gamma_tau`` is ``inf`` when the concurrence stays positive up to the
    end of the search range (``beyond_range``).
    """

    gamma_tau: float
    beyond_range: bool
    bracket: tuple
    c_bracket: tuple


def entanglement_time(p: NetworkParams, trunc: TruncationConfig, cfg: SolverConfig | None = None,
                      gamma_tau_max: float = 20.0, tol: float = 1e-3, n_grid: int = 41,
                      tomography: DelayTomography | None = None) -> EntanglementTime:
    """First zero of ``C(tau)``: grid bracketing followed by bisection to ``gamma dtau = tol``.

    The signed concurrence (``raw=True``) is used so the root is a sign change.
    """
    tomo = tomography or DelayTomography(p, trunc, cfg)
    g = p.gamma

    def craw(x):
        return concurrence(tomo.state(x / g).rho, raw=True)

    grid = np.linspace(0.0, gamma_tau_max, n_grid)
    cs = [concurrence(r.rho, raw=True) for r in tomo.states(grid / g)]
    if cs[0] <= 0:
        raise ValueError("no entanglement at zero delay")
    hit = next((i for i, c in enumerate(cs) if c <= 0), None)
    if hit is None:
        return EntanglementTime(math.inf, True, (grid[-1], math.inf), (cs[-1], math.nan))
    lo, hi, clo, chi = grid[hit - 1], grid[hit], cs[hit - 1], cs[hit]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        cm = craw(mid)
        if cm > 0:
            lo, clo = mid, cm
        else:
            hi, chi = mid, cm
    # linear interpolation inside the final bracket
    root = lo + (hi - lo) * clo / (clo - chi) if clo != chi else 0.5 * (lo + hi)
    return EntanglementTime(float(root), False, (float(lo), float(hi)), (float(clo), float(chi)))
