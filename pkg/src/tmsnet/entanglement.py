"""Figures of merit for a two-qubit state in the basis ``|00>, |01>, |10>, |11>``."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quantum_core import DensityMatrix

PHI_PLUS = np.array([1.0, 0.0, 0.0, 1.0]) / math.sqrt(2.0)
SIGMA_Y2 = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))


def _matrix(rho) -> np.ndarray:
    data = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho)
    data = np.asarray(data, dtype=complex)
    if data.shape != (4, 4):
        raise ValueError(f"expected a 4x4 two-qubit state, got {data.shape}")
    return data


def bell_fidelity(rho) -> float:
    """Overlap ``<Phi+|rho|Phi+>`` with ``|Phi+> = (|00> + |11>)/sqrt(2)``.

    The overlap itself is returned, not its square; it is the quantity that
    saturates the pure-state bound :func:`fidelity_bound` and equals 1/2 for
    the ground state.
    """
    r = _matrix(rho)
    return float(np.real(PHI_PLUS @ r @ PHI_PLUS))


def fidelity_bound(epsilon) -> float:
    """Upper bound ``(1+e)^4 / (2 (1 + 6 e^2 + e^4))`` reached by an ideal broadband amplifier."""
    e2 = epsilon * epsilon
    return (1 + epsilon) ** 4 / (2 * (1 + 6 * e2 + e2 * e2))


def concurrence(rho, floor: float = 0.0, raw: bool = False) -> float:
    """Wootters concurrence.

    The decreasing square-root eigenvalues of ``rho (Y x Y) rho* (Y x Y)``
    are taken as the singular values of ``sqrt(rho) (Y x Y) sqrt(rho)* (Y x Y)``,
    which stays accurate for nearly pure states.  Eigenvalues of ``rho`` below
    ``floor`` (slightly negative ones from truncation, say) are set to zero
    first.  With ``raw=True`` the signed ``l1 - l2 - l3 - l4`` is returned
    without the ``max(0, .)``, which gives root finders a continuous function
    through the entanglement boundary.
    """
    r = _matrix(rho)
    w, v = np.linalg.eigh(0.5 * (r + r.conj().T))
    w = np.where(w > floor, w, 0.0)
    s = (v * np.sqrt(w)) @ v.conj().T
    lam = np.linalg.svd(s @ SIGMA_Y2 @ s.conj() @ SIGMA_Y2, compute_uv=False)
    c = float(lam[0] - lam[1:].sum())
    return c if raw else max(0.0, c)


def binary_entropy(p) -> float:
    """Shannon entropy ``h(p)`` in bits with ``h(0) = h(1) = 0``."""
    if p <= 0 or p >= 1:
        return 0.0
    return float(-p * math.log2(p) - (1 - p) * math.log2(1 - p))


def eof_from_concurrence(c: float) -> float:
    c = min(max(c, 0.0), 1.0)
    return binary_entropy(0.5 * (1 + math.sqrt(1 - c * c)))


def entanglement_of_formation(rho) -> float:
    """``h((1 + sqrt(1 - C^2)) / 2)`` for the concurrence ``C`` of ``rho``."""
    return eof_from_concurrence(concurrence(rho))


def rate(E_F: float, T: float, gamma: float = 1.0) -> float:
    """Normalized distribution rate ``E_F / (gamma T)``."""
    if T <= 0:
        raise ValueError("T must be positive")
    return E_F / (gamma * T)


def _imperfection(beta, eta, Gamma_phi):
    return 1 / (2 * beta) + Gamma_phi + (1 - eta)


def analytic_fidelity_estimates(epsilon, beta, eta=1.0, Gamma_phi=0.0) -> dict:
    """Closed-form fidelity approximations.

    Returns
    -------
    dict with keys
        ``weak_driving`` (linear in ``epsilon``), ``near_threshold`` (leading
        corrections close to ``epsilon = 1``) and ``optimal`` (the
        near-threshold form maximized over ``epsilon``).
    """
    x = _imperfection(beta, eta, Gamma_phi)
    weak = 0.5 + 2 * beta * eta * epsilon / ((1 + beta) * (1 + 2 * Gamma_phi))
    near = 1 - (1 - epsilon) ** 4 / 16 - 3 / (1 - epsilon) ** 2 * x
    opt = 1 - 3 * 9 ** (1 / 3) / 4 * x ** (2 / 3)
    return {"weak_driving": weak, "near_threshold": near, "optimal": opt}


@dataclass(frozen=True)
class EntanglementReport:
    fidelity: float
    concurrence: float
    eof: float
    rate: float | None = None

    @classmethod
    def from_state(cls, rho, T: float | None = None, gamma: float = 1.0) -> "EntanglementReport":
        c = concurrence(rho)
        e = eof_from_concurrence(c)
        return cls(bell_fidelity(rho), c, e, None if T is None else rate(e, T, gamma))

    def as_dict(self) -> dict:
        return {"F": self.fidelity, "C": self.concurrence, "E_F": self.eof, "R": self.rate}
