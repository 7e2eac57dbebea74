"""Per-point evaluation of the qubit steady state with one of three backends.

``exact``  full cascaded master equation (regression tomography when tau != 0)
``fma``    filtered-mode bath parameters in the effective qubit master equation
``markov`` zero-frequency bath parameters in the effective qubit master equation
"""
from __future__ import annotations

import logging
import math
import warnings

import numpy as np

from ..delay import DelayTomography
from ..entanglement import EntanglementReport
from ..network import NetworkParams, TruncationConfig, network_space, network_steady_state
from ..quantum_core import SolverConfig
from ..reservoir import (
    effective_steady_state,
    filtered_moments,
    fma_symmetric_closed_form,
    markov_moments_general,
)
from .spec import EXACT_BETA_CAP, EXACT_EPSILON_CAP

log = logging.getLogger(__name__)


class ResourceGuardError(RuntimeError):
    """Requested problem exceeds the configured size ceiling (CLI exit code 4)."""


class RoutingWarning(UserWarning):
    """An exact-backend request fell outside the supported regime and was rerouted."""


def sector_rows(n_trunc: int) -> int:
    """Number of unknowns in the charge-0 sector of the cascaded Liouvillian."""
    q = network_space(TruncationConfig(n_trunc)).charges
    _, counts = np.unique(q, return_counts=True)
    return int((counts.astype(np.int64) ** 2).sum())


def guard_size(n_trunc: int, max_rows: int):
    rows = sector_rows(n_trunc)
    if rows > max_rows:
        raise ResourceGuardError(
            f"n_trunc={n_trunc} needs {rows} unknowns, above the ceiling of {max_rows}; "
            "lower n_trunc or raise limits.max_sector_rows (--max-rows)")
    return rows


def route_backend(backend: str, p: NetworkParams) -> str:
    """Exact runs beyond the truncation-safe regime go to the FMA backend."""
    if backend == "exact" and (p.epsilon > EXACT_EPSILON_CAP + 1e-12 or p.beta > EXACT_BETA_CAP * (1 + 1e-12)):
        warnings.warn(RoutingWarning(
            f"exact backend capped at epsilon <= {EXACT_EPSILON_CAP}, beta <= {EXACT_BETA_CAP:g}; "
            f"using fma for epsilon={p.epsilon:g}, beta={p.beta:g}"), stacklevel=2)
        return "fma"
    return backend


def reservoir_moments(backend: str, p: NetworkParams):
    if backend == "markov":
        if p.tau != 0:
            raise ValueError("the markov backend is a zero-delay limit; use fma or exact for tau != 0")
        return markov_moments_general(p)
    if p.is_symmetric and p.delta1 == 0 and p.tau == 0 and p.gamma1 == p.gamma2:
        return fma_symmetric_closed_form(p.epsilon, p.beta, p.eta)
    return filtered_moments(p)


def qubit_state(backend: str, p: NetworkParams, trunc: TruncationConfig, cfg: SolverConfig,
                max_rows: int = 90_000):
    """Two-qubit steady state and diagnostics for one parameter point.

    Returns
    -------
    rho : DensityMatrix
    diag : dict
        ``backend`` actually used plus backend-specific convergence data.
    """
    used = route_backend(backend, p)
    diag = {"backend": used}
    if used == "exact":
        guard_size(trunc.n_trunc, max_rows)
        if p.tau != 0:
            tomo = DelayTomography(p, trunc, cfg)
            res = tomo.state(p.tau)
            st = tomo.steady
            rho = res.rho
            diag["hermiticity_defect"] = res.hermiticity_defect
        else:
            st = network_steady_state(p, trunc, cfg)
            rho = st.rho_q
        diag.update(residual=st.residual, top_population=st.top_population, n_photon=st.n1)
        return rho, diag
    m = reservoir_moments(used, p)
    diag.update(N=m.N, M_abs=abs(m.M), provenance=m.provenance)
    rho = effective_steady_state(m, p.Gamma_phi, p.gamma1, p.gamma2, cfg=None)
    return rho, diag


def evaluate(backend: str, p: NetworkParams, trunc: TruncationConfig, cfg: SolverConfig,
             max_rows: int = 90_000) -> dict:
    """``F, C, E_F`` plus diagnostics for one point; ``nan`` for the exact-only fields otherwise."""
    rho, diag = qubit_state(backend, p, trunc, cfg, max_rows)
    rep = EntanglementReport.from_state(rho)
    out = {"F": rep.fidelity, "C": rep.concurrence, "E_F": rep.eof}
    out.update(diag)
    return out


def nan_row(columns):
    return {c: math.nan for c in columns}
