"""Gaussian analytics of the linear parametric amplifier.

Everything is phrased in the operator vector ``v = (a1, a2+, a2, a1+)`` whose
Langevin drift matrix is block diagonal with two 2x2 blocks.  ``V0 = <v v+>``
is the steady covariance and ``I(w) = (i w - M)^-1 V0`` the one-sided
correlation spectrum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import resolvent_block
from .network import NetworkParams


class InstabilityError(ValueError):
    """The amplifier is at or beyond its parametric threshold."""


@dataclass(frozen=True)
class DriftModel:
    """Drift matrix ``M4`` and noise matrix ``R4 = diag(kappa1, 0, kappa2, 0)``."""

    M4: np.ndarray
    R4: np.ndarray
    params: NetworkParams

    @classmethod
    def from_params(cls, p: NetworkParams) -> "DriftModel":
        g = 0.5 * p.epsilon * math.sqrt(p.kappa1 * p.kappa2)
        M = np.zeros((4, 4), dtype=complex)
        M[0, 0] = -1j * p.delta1 - 0.5 * p.kappa1
        M[1, 1] = 1j * p.delta2 - 0.5 * p.kappa2
        M[2, 2] = -1j * p.delta2 - 0.5 * p.kappa2
        M[3, 3] = 1j * p.delta1 - 0.5 * p.kappa1
        M[0, 1] = M[1, 0] = M[2, 3] = M[3, 2] = g
        R = np.diag([p.kappa1, 0.0, p.kappa2, 0.0]).astype(complex)
        return cls(M, R, p)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.M4)

    @property
    def stability_margin(self) -> float:
        """``-max Re eig(M4)``; positive below threshold."""
        return -float(np.max(self.eigenvalues.real))

    def check_stable(self):
        margin = self.stability_margin
        if not margin > 0:
            raise InstabilityError(
                f"amplifier unstable: max Re eig(M) = {-margin:.3e} >= 0")

    @property
    def blocks(self):
        return self.M4[:2, :2], self.M4[2:, 2:]


@dataclass(frozen=True)
class GaussianMoments:
    n1: float
    n2: float
    a1a2: complex
    a1dag_a2: complex
    a1_sq: complex
    a2_sq: complex


def lyapunov_solve(M: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Solve ``M V + V M^+ = -R`` as a dense linear system in ``vec(V)``."""
    n = M.shape[0]
    eye = np.eye(n)
    # column stacking: vec(M V) = (1 x M) vec V,  vec(V M^+) = (conj(M) x 1) vec V
    K = np.kron(eye, M) + np.kron(M.conj(), eye)
    v = np.linalg.solve(K, -R.reshape(-1, order="F"))
    return v.reshape(n, n, order="F")


def steady_covariance(p: NetworkParams):
    """Steady covariance ``V0 = <v v+>`` and the normally ordered moments it contains.

    Returns
    -------
    V0 : ndarray, shape (4, 4)
    moments : GaussianMoments
    """
    drift = DriftModel.from_params(p)
    drift.check_stable()
    V = lyapunov_solve(drift.M4, drift.R4)
    # V = <v v+>: V[0,0] = <a1 a1+>, V[3,3] = <a1+ a1>, V[1,1] = <a2+ a2>
    # V[0,1] = <a1 a2>, V[0,2] = <a1 a2+>, V[0,3] = <a1 a1>, V[2,1] = <a2 a2>
    moments = GaussianMoments(
        n1=float(V[3, 3].real),
        n2=float(V[1, 1].real),
        a1a2=complex(V[0, 1]),
        a1dag_a2=complex(np.conj(V[0, 2])),
        a1_sq=complex(V[0, 3]),
        a2_sq=complex(V[2, 1]),
    )
    return V, moments


def closed_form_moments(p: NetworkParams):
    """``(<a1+ a1>, <a2+ a2>, <a1 a2>)`` from the closed-form Gaussian solution."""
    kb = p.kappa1 + p.kappa2
    db = p.delta1 + p.delta2
    den = 4 * db ** 2 + (1 - p.epsilon ** 2) * kb ** 2
    n1 = (kb - p.kappa1) * kb * p.epsilon ** 2 / den
    n2 = (kb - p.kappa2) * kb * p.epsilon ** 2 / den
    m = math.sqrt(p.kappa1 * p.kappa2) * (-2j * db + kb) * p.epsilon / den
    return n1, n2, m


@dataclass(frozen=True)
class CorrelationSpectrum:
    """One-sided spectra on a frequency grid.

    ``full`` holds the two nonzero diagonal blocks of ``I(w)`` stacked as
    ``(I11, I12, I21, I22, I33, I34, I43, I44)`` along axis 0.
    """

    omega: np.ndarray
    full: np.ndarray
    kappa1: float
    kappa2: float

    @property
    def a1dag_a1(self):
        return self.kappa1 * self.full[7]

    @property
    def a2dag_a2(self):
        return self.kappa2 * self.full[3]

    @property
    def a1a2(self):
        return math.sqrt(self.kappa1 * self.kappa2) * self.full[1]

    @property
    def a2a1(self):
        return math.sqrt(self.kappa1 * self.kappa2) * self.full[5]


def spectra(p: NetworkParams, omega, V0: np.ndarray | None = None) -> CorrelationSpectrum:
    """Correlation spectra ``I(w) = (i w - M)^-1 V0`` at real ``omega`` (scalar or array).

    Each 2x2 block of the drift matrix is inverted in closed form per
    frequency, so grids cost one pass of the resolvent kernel per block.
    """
    drift = DriftModel.from_params(p)
    if V0 is None:
        V0, _ = steady_covariance(p)
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    b1, b2 = drift.blocks
    top = resolvent_block(w, b1, V0[:2, :2])
    bottom = resolvent_block(w, b2, V0[2:, 2:])
    full = np.concatenate([top, bottom])
    if np.ndim(omega) == 0:
        full = full[:, 0]
        w = w[0]
    return CorrelationSpectrum(w, full, p.kappa1, p.kappa2)


def lorentzians(epsilon, kappa, omega):
    """``Gamma_-(w), Gamma_+(w) = kappa^2 / (kappa^2 (1 -/+ eps)^2 + 4 w^2)``."""
    omega = np.asarray(omega, dtype=float)
    gm = kappa ** 2 / (kappa ** 2 * (1 - epsilon) ** 2 + 4 * omega ** 2)
    gp = kappa ** 2 / (kappa ** 2 * (1 + epsilon) ** 2 + 4 * omega ** 2)
    return gm, gp


def symmetric_resonant_spectra(epsilon, kappa, omega):
    """``2 Re I_{a+a}(w)`` and ``I_{a1a2}(w) + I_{a2a1}(-w)`` for equal, resonant modes."""
    gm, gp = lorentzians(epsilon, kappa, omega)
    return epsilon * (gm - gp), epsilon * (gm + gp)


def symmetric_spectra(epsilon, kappa, delta, omega):
    """Closed-form ``I_{a_i+ a_i}(w)`` and ``I_{a1 a2}(w)`` for equal modes with common detuning."""
    w = np.asarray(omega, dtype=float)
    d2 = epsilon ** 2 * kappa ** 2 - 4 * delta ** 2
    den = (kappa ** 2 - d2) * (kappa ** 2 - d2 + 4j * kappa * w - 4 * w ** 2)
    i_nn = 2 * epsilon ** 2 * kappa ** 3 * (kappa + 1j * w) / den
    i_12 = epsilon * kappa ** 2 * (d2 + kappa ** 2 - 4j * delta * (kappa + 1j * w)
                                   + 2j * w * kappa) / den
    return i_nn, i_12
