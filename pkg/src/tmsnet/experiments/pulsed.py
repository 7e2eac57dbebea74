"""Pulsed protocol: qubits start in ``|00>`` while the amplifier is already stationary."""
from __future__ import annotations

import numpy as np

from ..entanglement import EntanglementReport
from ..network import (
    QUBITS,
    NetworkParams,
    TruncationConfig,
    amplifier_steady_state,
    cascaded_liouvillian,
)
from ..quantum_core import DensityMatrix, SolverConfig, expv, partial_trace, propagate


class PulsedRun:
    """Trajectory of the reduced qubit state after switching on the coupling at ``T = 0``.

    Times are given as ``gamma T``.
    """

    def __init__(self, p: NetworkParams, trunc: TruncationConfig, cfg: SolverConfig | None = None):
        self.p, self.trunc = p, trunc
        self.cfg = cfg or SolverConfig()
        self.L = cascaded_liouvillian(p, trunc).sector(0)
        amp = amplifier_steady_state(p, trunc, self.cfg)
        ground = np.zeros((4, 4))
        ground[0, 0] = 1.0
        rho0 = np.kron(amp.rho.data, ground)
        self.v0 = self.L.vectorize(rho0)

    def qubit_state(self, vec) -> DensityMatrix:
        full = DensityMatrix.hermitized(self.L.unvectorize(vec), self.L.space, atol=1e-7)
        return partial_trace(full, QUBITS)

    def vectors(self, gamma_T) -> np.ndarray:
        return propagate(self.L, self.v0, np.asarray(gamma_T, dtype=float) / self.p.gamma, self.cfg)

    def step(self, vec, gamma_dT: float) -> np.ndarray:
        """Advance a stored vector by ``gamma_dT``."""
        if gamma_dT == 0:
            return vec
        return expv(gamma_dT / self.p.gamma, self.L.matrix, vec, m=self.cfg.krylov_dim,
                    tol=self.cfg.abs_tol * 1e-2, max_steps=self.cfg.max_steps)

    def reports(self, gamma_T):
        gamma_T = np.asarray(gamma_T, dtype=float)
        vecs = self.vectors(gamma_T)
        out = []
        for t, v in zip(gamma_T, vecs):
            rho = self.qubit_state(v)
            out.append(EntanglementReport.from_state(rho, T=t if t > 0 else None, gamma=1.0))
        return out, vecs


def pulsed_reports(p: NetworkParams, trunc: TruncationConfig, gamma_T, cfg: SolverConfig | None = None):
    """``EntanglementReport`` per ``gamma T``; the rate is ``E_F / (gamma T)`` (None at ``T = 0``)."""
    return PulsedRun(p, trunc, cfg).reports(gamma_T)[0]
