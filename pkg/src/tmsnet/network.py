"""Two qubits driven by the outputs of a non-degenerate parametric amplifier.

The full system lives on ``(a1, a2, q1, q2)`` with ``n_trunc`` Fock states per
amplifier mode.  Qubit basis index 0 is the ground state ``|0>``, so
``sigma^- = |0><1|`` and ``sigma^z = |1><1| - |0><0|``.

The factors carry charges ``(+1, -1, +1, -1)``: ``Q = (n1 + s1) - (n2 + s2)`` is
conserved by the pump, the decay channels and the cascaded coupling, so every
Liouvillian here is block diagonal in ``Q(row) - Q(col)`` and steady states
live in sector 0.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .quantum_core import (
    DensityMatrix,
    HilbertSpec,
    SectoredLiouvillian,
    SolverConfig,
    Superoperator,
    embed_operator,
    partial_trace,
    steady_state,
)

PARTS = frozenset({"qubits", "amplifier", "cascade"})
QUBITS = ("q1", "q2")
MODES = ("a1", "a2")


class TruncationWarning(UserWarning):
    """The top Fock level of an amplifier mode carries noticeable population."""


@dataclass(frozen=True)
class NetworkParams:
    """Rates and knobs of the amplifier-waveguide-qubit network.

    All rates share one (arbitrary) unit; ``delta_i = omega_i - omega_qi``.
    ``tau1, tau2`` are propagation delays and only enter through
    ``tau2 - tau1``.
    """

    kappa1: float = 1.0
    kappa2: float = 1.0
    gamma1: float = 1.0
    gamma2: float = 1.0
    gamma_phi: float = 0.0
    delta1: float = 0.0
    delta2: float = 0.0
    epsilon: float = 0.0
    eta: float = 1.0
    tau1: float = 0.0
    tau2: float = 0.0

    def __post_init__(self):
        for name in ("kappa1", "kappa2", "gamma1", "gamma2", "gamma_phi"):
            v = getattr(self, name)
            if not v >= 0:
                raise ValueError(f"{name} must be >= 0, got {v}")
        if not 0 <= self.epsilon < 1:
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if not 0 <= self.eta <= 1:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")

    @classmethod
    def symmetric(cls, epsilon, beta, eta=1.0, Gamma_phi=0.0, gamma=1.0, delta=0.0, tau=0.0):
        """Equal qubits and modes with ``kappa = beta*gamma``, ``gamma_phi = Gamma_phi*gamma``."""
        return cls(kappa1=beta * gamma, kappa2=beta * gamma, gamma1=gamma, gamma2=gamma,
                   gamma_phi=Gamma_phi * gamma, delta1=delta, delta2=delta,
                   epsilon=epsilon, eta=eta, tau1=0.0, tau2=tau)

    @property
    def gamma(self) -> float:
        return 0.5 * (self.gamma1 + self.gamma2)

    @property
    def beta(self) -> float:
        """Bandwidth ratio ``kappa/gamma`` (averaged for asymmetric networks)."""
        return 0.5 * (self.kappa1 + self.kappa2) / self.gamma

    @property
    def Gamma_phi(self) -> float:
        return self.gamma_phi / self.gamma

    @property
    def tau(self) -> float:
        return self.tau2 - self.tau1

    @property
    def is_symmetric(self) -> bool:
        return (self.kappa1 == self.kappa2 and self.gamma1 == self.gamma2
                and self.delta1 == self.delta2)

    def replace(self, **changes) -> "NetworkParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class TruncationConfig:
    n_trunc: int = 10

    def __post_init__(self):
        if self.n_trunc < 2:
            raise ValueError(f"n_trunc must be >= 2, got {self.n_trunc}")


def destroy(n: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, n, dtype=float)), 1, shape=(n, n), format="csr")


SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]])
SIGMA_Z = np.diag([-1.0, 1.0])


def network_space(trunc: TruncationConfig, parts=PARTS) -> HilbertSpec:
    parts = frozenset(parts)
    factors = []
    if parts & {"amplifier", "cascade"}:
        factors += [("a1", trunc.n_trunc, 1), ("a2", trunc.n_trunc, -1)]
    if parts & {"qubits", "cascade"}:
        factors += [("q1", 2, 1), ("q2", 2, -1)]
    return HilbertSpec.of(*factors)


class NetworkOperators:
    """Embedded ``a_i``, ``sigma_i^-``, ``sigma_i^z`` on a network space."""

    def __init__(self, space: HilbertSpec):
        self.space = space
        labels = space.labels
        if "a1" in labels:
            n = space.dims[space.index("a1")]
            self.a = [embed_operator(destroy(n), lab, space) for lab in MODES]
        if "q1" in labels:
            self.sm = [embed_operator(SIGMA_MINUS, lab, space) for lab in QUBITS]
            self.sz = [embed_operator(SIGMA_Z, lab, space) for lab in QUBITS]


def cascaded_liouvillian(p: NetworkParams, trunc: TruncationConfig,
                         parts=PARTS) -> SectoredLiouvillian:
    """Cascaded network Liouvillian as a lazily assembled family of charge sectors.

    ``parts`` selects any of ``qubits`` (decay and dephasing), ``amplifier``
    (pumped modes with output coupling) and ``cascade`` (unidirectional
    amplifier-to-qubit coupling with amplitude ``sqrt(eta gamma_i kappa_i)``).
    """
    parts = frozenset(parts)
    if not parts:
        raise ValueError("parts must not be empty")
    unknown = parts - PARTS
    if unknown:
        raise ValueError(f"unknown parts {sorted(unknown)}")
    if p.epsilon >= 1:
        raise ValueError("epsilon must be < 1")
    space = network_space(trunc, parts)
    ops = NetworkOperators(space)
    H = None
    terms = []
    if "qubits" in parts:
        for sm, sz, g in zip(ops.sm, ops.sz, (p.gamma1, p.gamma2)):
            terms.append((g, sm, sm.dag()))
            terms.append((0.5 * p.gamma_phi, sz, sz))
    if "amplifier" in parts:
        a1, a2 = ops.a
        pump = 0.5 * math.sqrt(p.kappa1 * p.kappa2) * p.epsilon
        H = (p.delta1 * (a1.dag() @ a1) + p.delta2 * (a2.dag() @ a2)
             + 1j * pump * (a1.dag() @ a2.dag() - a1 @ a2))
        for a, k in zip(ops.a, (p.kappa1, p.kappa2)):
            terms.append((k, a, a.dag()))
    if "cascade" in parts:
        # c([a rho, s+] + [s-, rho a+]) = c(D[a, s+] + D[s-, a+]) - i[H_c, rho]
        # with H_c = (i c / 2)(a+ s- - s+ a)
        for a, sm, g, k in zip(ops.a, ops.sm, (p.gamma1, p.gamma2), (p.kappa1, p.kappa2)):
            c = math.sqrt(p.eta * g * k)
            if c == 0:
                continue
            sp_ = sm.dag()
            terms.append((c, a, sp_))
            terms.append((c, sm, a.dag()))
            hc = (0.5j * c) * (a.dag() @ sm - sp_ @ a)
            H = hc if H is None else H + hc
    return SectoredLiouvillian(H, terms, space=space)


def build_cascaded_liouvillian(p: NetworkParams, trunc: TruncationConfig, parts=PARTS,
                               sector: int | None = 0) -> Superoperator:
    """Single charge sector (default 0, ``None`` for the full space) of the network Liouvillian."""
    return cascaded_liouvillian(p, trunc, parts).sector(sector)


def top_level_population(rho: DensityMatrix) -> float:
    """Largest population of the highest Fock level over both amplifier modes."""
    worst = 0.0
    for lab in MODES:
        if lab not in rho.space.labels:
            continue
        marg = partial_trace(rho, [lab]).data
        worst = max(worst, float(marg[-1, -1].real))
    return worst


def _leakage_guard(top: float, n_trunc: int, threshold: float = 1e-6):
    if top > threshold:
        warnings.warn(TruncationWarning(
            f"top Fock level population {top:.2e} > {threshold:.0e} at n_trunc={n_trunc}; "
            "increase n_trunc"), stacklevel=3)


@dataclass(frozen=True)
class AmplifierState:
    rho: DensityMatrix
    n1: float
    n2: float
    a1a2: complex
    a1dag_a2: complex
    a1_sq: complex
    a2_sq: complex
    top_population: float


def amplifier_moments(rho: DensityMatrix) -> dict:
    """Second moments of the amplifier modes of ``rho`` (any space containing a1, a2)."""
    red = partial_trace(rho, MODES) if len(rho.space.labels) > 2 else rho
    ops = NetworkOperators(red.space)
    a1, a2 = ops.a
    return dict(
        n1=red.expect(a1.dag() @ a1).real,
        n2=red.expect(a2.dag() @ a2).real,
        a1a2=red.expect(a1 @ a2),
        a1dag_a2=red.expect(a1.dag() @ a2),
        a1_sq=red.expect(a1 @ a1),
        a2_sq=red.expect(a2 @ a2),
    )


def amplifier_steady_state(p: NetworkParams, trunc: TruncationConfig,
                           cfg: SolverConfig | None = None, moment_atol: float = 1e-9) -> AmplifierState:
    """Truncated steady state of the pumped amplifier alone, with its second moments."""
    L = build_cascaded_liouvillian(p, trunc, parts={"amplifier"})
    rho = steady_state(L, cfg)
    m = amplifier_moments(rho)
    for key in ("a1dag_a2", "a1_sq", "a2_sq"):
        if abs(m[key]) > moment_atol:
            raise AssertionError(f"<{key}> = {m[key]:.3e} should vanish")
    top = top_level_population(rho)
    _leakage_guard(top, trunc.n_trunc)
    return AmplifierState(rho=rho, top_population=top, **m)


@dataclass(frozen=True)
class NetworkSteadyState:
    rho: DensityMatrix
    rho_q: DensityMatrix
    residual: float
    top_population: float
    n1: float
    n2: float


def network_steady_state(p: NetworkParams, trunc: TruncationConfig,
                         cfg: SolverConfig | None = None,
                         liouvillian: SectoredLiouvillian | None = None) -> NetworkSteadyState:
    """Exact steady state of the full cascaded network and its reduced qubit state."""
    L = liouvillian or cascaded_liouvillian(p, trunc)
    rho, residual = steady_state(L.sector(0), cfg, return_residual=True)
    rho_q = partial_trace(rho, QUBITS)
    rho_q.check_positivity()
    top = top_level_population(rho)
    _leakage_guard(top, trunc.n_trunc)
    m = amplifier_moments(rho)
    return NetworkSteadyState(rho=rho, rho_q=rho_q, residual=residual, top_population=top,
                              n1=m["n1"], n2=m["n2"])


def tms_state(x: float, n: int, ambient: int | None = None) -> np.ndarray:
    """Truncated two-mode squeezed vacuum ``sqrt(1-x^2) sum_{k<n} x^k |k,k>``.

    The ket is laid out on ``ambient x ambient`` levels (default ``n``).
    """
    ambient = ambient or n
    psi = np.zeros((ambient, ambient))
    k = np.arange(n)
    psi[k, k] = math.sqrt(1 - x * x) * x ** k
    return psi.ravel()


def tms_dark_state_residual(x: float, trunc: TruncationConfig):
    """Residuals of the two-mode-squeezed dark-state relations.

    The state keeps ``n_trunc`` Fock levels but the ladder operators act on
    ``n_trunc + 1`` levels, so the residuals measure the truncation tail
    instead of vanishing identically.  The interaction is
    ``H_int = i(s1- a1+ - s1+ a1 + s2- a2+ - s2+ a2)`` with unit coupling;
    the first residual scales linearly with any other coupling.

    Returns
    -------
    (res_hint, res_a1, res_a2) : tuple of float
        ``||H_int (|00> + x|11>)|TMS>||``, ``||a1|TMS> - x a2+|TMS>||`` and
        ``||a2|TMS> - x a1+|TMS>||``.
    """
    if not 0 <= x < 1:
        raise ValueError("x must lie in [0, 1)")
    n = trunc.n_trunc
    amb = n + 1
    psi = tms_state(x, n, amb)
    a = destroy(amb)
    eye = sp.identity(amb, format="csr")
    a1, a2 = sp.kron(a, eye, format="csr"), sp.kron(eye, a, format="csr")
    res1 = float(np.linalg.norm(a1 @ psi - x * (a2.T @ psi)))
    res2 = float(np.linalg.norm(a2 @ psi - x * (a1.T @ psi)))

    # full ket on (a1, a2, q1, q2) with qubit states |00> + x|11>
    space = HilbertSpec.of(("a1", amb), ("a2", amb), ("q1", 2), ("q2", 2))
    ops = NetworkOperators(space)
    A1, A2 = ops.a
    S1, S2 = ops.sm
    H = 1j * (S1 @ A1.dag() - S1.dag() @ A1 + S2 @ A2.dag() - S2.dag() @ A2)
    qubits = np.zeros(4)
    qubits[0], qubits[3] = 1.0, x
    state = np.kron(psi, qubits)
    res_h = float(np.linalg.norm(H.data @ state))
    return res_h, res1, res2
