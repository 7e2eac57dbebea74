"""Effective squeezed-reservoir description of the two qubits.

Tracing out the amplifier leaves the qubits coupled to a broadband two-mode
squeezed bath with occupations ``N1, N2`` and correlation ``M``.  These can be
taken from the output spectra at zero frequency (Markov limit) or from
spectra filtered by the qubit response (filtered-mode approximation, FMA).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad, quad_vec

from .amplifier import spectra, steady_covariance
from .network import QUBITS, SIGMA_MINUS, SIGMA_Z, NetworkParams
from .quantum_core import (
    DensityMatrix,
    HilbertSpec,
    SolverConfig,
    Superoperator,
    assemble_liouvillian,
    embed_operator,
    steady_state,
)

PROVENANCES = ("markov", "fma_closed", "filtered_numeric")


class PhysicalityWarning(UserWarning):
    """Reservoir moments violate ``|M|^2 <= N(N+1)`` (quadrature or truncation error)."""


class NonPhysicalMomentsError(ValueError):
    pass


@dataclass(frozen=True)
class ReservoirMoments:
    """Bath parameters ``(N1, N2, M)`` with their origin.

    ``shift1, shift2`` are the Lamb-shift frequencies of ``H' = sum_i shift_i sigma_i^z``;
    they vanish for symmetric amplifiers.  ``deficit`` optionally carries
    ``N (N + 1) - |M|^2`` from a closed form.  Near a pure bath this
    difference is far smaller than ``N^2``, and recomputing it from the
    rounded ``N`` and ``M`` costs about ``2 N`` ulp.
    """

    N1: float
    N2: float
    M: complex
    provenance: str = "markov"
    shift1: float = 0.0
    shift2: float = 0.0
    deficit: float | None = None

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.N1 < -1e-12 or self.N2 < -1e-12:
            raise NonPhysicalMomentsError(f"negative occupation ({self.N1}, {self.N2})")
        excess = self.physicality_excess
        if excess > 1e-9 * max(1.0, abs(self.M) ** 2):
            warnings.warn(PhysicalityWarning(
                f"|M|^2 exceeds N(N+1) by {excess:.3e} ({self.provenance})"), stacklevel=3)

    @property
    def symmetric(self) -> bool:
        return math.isclose(self.N1, self.N2, rel_tol=1e-12, abs_tol=1e-15)

    @property
    def N(self) -> float:
        """Common occupation (mean of ``N1, N2``)."""
        return 0.5 * (self.N1 + self.N2)

    @property
    def purity_deficit(self) -> float:
        """``N (N + 1) - |M|^2`` for symmetric moments, from the closed form when known."""
        return self.deficit if self.deficit is not None else _deficit(self.N, self.M)

    @property
    def physicality_excess(self) -> float:
        """``|M|^2 - min(N1 (N2 + 1), N2 (N1 + 1))``; positive means unphysical."""
        if self.deficit is not None:
            return -self.deficit
        bound = min(self.N1 * (self.N2 + 1), self.N2 * (self.N1 + 1))
        return abs(self.M) ** 2 - bound


def _deficit(n: float, m: complex) -> float:
    # N + (N - |M|)(N + |M|) avoids squaring two nearly equal large numbers
    a = abs(m)
    return n + (n - a) * (n + a)


def _check_epsilon(epsilon):
    if not 0 <= epsilon < 1:
        raise ValueError(f"epsilon must lie in [0, 1), got {epsilon}")


def markov_moments(epsilon: float, eta: float = 1.0) -> ReservoirMoments:
    """Zero-frequency bath parameters of a symmetric resonant amplifier."""
    _check_epsilon(epsilon)
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")
    a, b = (1 - epsilon) ** -2, (1 + epsilon) ** -2
    deficit = 4 * epsilon ** 2 * eta * (1 - eta) / (1 - epsilon ** 2) ** 2
    return ReservoirMoments(epsilon * eta * (a - b), epsilon * eta * (a - b),
                            complex(epsilon * eta * (a + b)), "markov", deficit=deficit)


def markov_moments_general(p: NetworkParams) -> ReservoirMoments:
    """Zero-frequency bath parameters for arbitrary amplifier parameters.

    ``N_i = 2 eta Re I_{a_i+ a_i}(0)``, ``M = eta (I_{a1a2}(0) + I_{a2a1}(0))``;
    the Lamb shift is ``-eta gamma_i Im I_{a_i+ a_i}(0)``.
    """
    s = spectra(p, 0.0)
    i1, i2 = complex(s.a1dag_a1), complex(s.a2dag_a2)
    return ReservoirMoments(
        2 * p.eta * i1.real, 2 * p.eta * i2.real, p.eta * complex(s.a1a2 + s.a2a1), "markov",
        shift1=-p.eta * p.gamma1 * i1.imag, shift2=-p.eta * p.gamma2 * i2.imag)


def filtered_moments(p: NetworkParams, epsrel: float = 1e-9, epsabs: float = 1e-13,
                     limit: int = 2000) -> ReservoirMoments:
    """Bath parameters seen through the qubits' Lorentzian response.

    The integrals over ``w`` are mapped to ``u in (-pi/2, pi/2)`` by
    ``w = (gamma_bar/2) tan u`` and evaluated by adaptive Gauss-Kronrod
    quadrature.  The real part of each filtered occupation is ``N_i``; its
    imaginary part is returned as the Lamb shift ``-(gamma_i/2) Im N_i``.
    The correlation depends on the delays only through ``tau2 - tau1``.
    """
    _check_epsilon(p.epsilon)
    V0, _ = steady_covariance(p)
    g1, g2 = p.gamma1, p.gamma2
    if g1 <= 0 or g2 <= 0:
        raise ValueError("filtered moments need gamma1, gamma2 > 0")
    scale = 0.25 * (g1 + g2)
    tau = p.tau
    sq = math.sqrt(g1 * g2)

    # the mapped integrand oscillates without bound for long delays; those use
    # QUADPACK's Fourier rule on the half line instead
    short_delay = abs(tau) * scale < 0.05

    def m_kernel(w):
        s = spectra(p, np.array([w, -w]), V0)
        return (sq * p.eta * (s.a1a2[0] + s.a2a1[1])
                / ((0.5 * g1 + 1j * w) * (0.5 * g2 - 1j * w)))

    def integrand(u):
        c = math.cos(u)
        w = scale * math.tan(u)
        jac = scale / (c * c) / (2 * math.pi)
        s = spectra(p, np.array([w]), V0)
        n1 = 2 * p.eta * g1 * s.a1dag_a1[0] / (0.25 * g1 * g1 + w * w)
        n2 = 2 * p.eta * g2 * s.a2dag_a2[0] / (0.25 * g2 * g2 + w * w)
        m = m_kernel(w) * np.exp(1j * w * tau) if short_delay else 0.0
        vals = np.array([n1, n2, m]) * jac
        return np.concatenate([vals.real, vals.imag])

    half = 0.5 * math.pi
    out, err = quad_vec(integrand, -half, half, epsabs=epsabs, epsrel=epsrel, limit=limit,
                        norm="max")
    if not np.all(np.isfinite(out)) or err > max(epsabs, epsrel * np.max(np.abs(out))) * 10:
        raise ArithmeticError(f"filtered-moment quadrature did not converge (err={err:.2e})")
    n1, n2, m = out[:3] + 1j * out[3:]
    if not short_delay:
        m = _fourier_integral(m_kernel, tau, epsabs, limit) / (2 * math.pi)
    return ReservoirMoments(float(n1.real), float(n2.real), complex(m), "filtered_numeric",
                            shift1=-0.5 * g1 * float(n1.imag), shift2=-0.5 * g2 * float(n2.imag))


def _fourier_integral(g, tau, epsabs, limit):
    """``int g(w) exp(i w tau) dw`` over the real line via QUADPACK's Fourier rule."""
    t = abs(tau)
    even = [lambda w, f=f: f(g(w) + g(-w)) for f in (np.real, np.imag)]
    odd = [lambda w, f=f: f(g(w) - g(-w)) for f in (np.real, np.imag)]
    parts = []
    for fn, weight in ((even[0], "cos"), (even[1], "cos"), (odd[0], "sin"), (odd[1], "sin")):
        with warnings.catch_warnings():
            # cycle-level warnings at large bandwidth ratios; the sum still converges
            warnings.simplefilter("ignore", IntegrationWarning)
            val, _ = quad(fn, 0, np.inf, weight=weight, wvar=t, epsabs=epsabs, limit=limit,
                          limlst=200)
        parts.append(val)
    re_c, im_c, re_s, im_s = parts
    sign = 1.0 if tau > 0 else -1.0
    # exp(i w tau) = cos(w t) + i sign sin(w t)
    return complex(re_c - sign * im_s, im_c + sign * re_s)


def fma_symmetric_closed_form(epsilon: float, beta: float, eta: float = 1.0) -> ReservoirMoments:
    """Filtered bath parameters for equal, resonant qubits and modes with ``beta = kappa/gamma``."""
    _check_epsilon(epsilon)
    if beta <= 0:
        raise ValueError("beta must be positive")
    e2 = epsilon * epsilon
    den = ((beta + 1) ** 2 - beta ** 2 * e2) * (1 - e2)
    n = 2 * e2 * beta * (1 + 2 * beta) * eta / den
    m = 2 * epsilon * beta * (e2 * beta + beta + 1) * eta / den
    return ReservoirMoments(n, n, complex(m), "fma_closed")


def beta_expansion(epsilon: float, beta: float):
    """First-order large-bandwidth corrections ``(r_eff, mu_eff)``.

    Valid for ``beta (1 - epsilon)^2 >> 1``.
    """
    _check_epsilon(epsilon)
    if beta <= 0:
        raise ValueError("beta must be positive")
    q = (1 - epsilon ** 2) ** 2
    r = 2 * math.atanh(epsilon) - 2 * epsilon / q / beta
    mu = 1 - 4 * epsilon ** 2 / q / beta
    return r, mu


@dataclass(frozen=True)
class EffectiveSqueezing:
    r_eff: float
    mu_eff: float

    @property
    def nbar_eff(self) -> float:
        return 0.5 * (1 / self.mu_eff - 1)

    @property
    def S_dB(self) -> float:
        """Squeezing factor ``exp(2 r)`` in decibel."""
        return 10 * math.log10(math.e) * 2 * self.r_eff


def effective_squeezing(m: ReservoirMoments) -> EffectiveSqueezing:
    """Map symmetric ``(N, M)`` to squeezing ``r`` and purity ``mu`` of an equivalent state."""
    if not m.symmetric:
        raise ValueError("effective squeezing needs N1 == N2")
    a = 2 * m.N + 1
    b = 2 * abs(m.M)
    if b >= a:
        raise NonPhysicalMomentsError(f"2|M| = {b:.6g} >= 2N + 1 = {a:.6g}")
    # (a - b)(a + b) keeps precision for nearly pure states; rounding may
    # push a pure state's purity a few ulp above one
    mu = min(1.0, 1 / math.sqrt((a - b) * (a + b)))
    return EffectiveSqueezing(0.5 * math.atanh(b / a), mu)


def moments_from(r_eff: float, mu_eff: float, theta: float = 0.0,
                 provenance: str = "markov") -> ReservoirMoments:
    """Inverse of :func:`effective_squeezing`; ``theta`` is the phase of ``M``."""
    if not 0 < mu_eff <= 1:
        raise ValueError("mu_eff must lie in (0, 1]")
    if r_eff < 0:
        raise ValueError("r_eff must be >= 0")
    n = 0.5 * (math.cosh(2 * r_eff) / mu_eff - 1)
    m = math.sinh(2 * r_eff) / (2 * mu_eff) * np.exp(1j * theta)
    return ReservoirMoments(n, n, complex(m), provenance, deficit=0.25 * (mu_eff ** -2 - 1))


# -- effective qubit master equation -----------------------------------------

QUBIT_SPACE = HilbertSpec.of(("q1", 2, 1), ("q2", 2, -1))


def _qubit_ops():
    sm = [embed_operator(SIGMA_MINUS, lab, QUBIT_SPACE) for lab in QUBITS]
    sz = [embed_operator(SIGMA_Z, lab, QUBIT_SPACE) for lab in QUBITS]
    return sm, sz


def effective_liouvillian(m: ReservoirMoments, Gamma_phi: float = 0.0, gamma1: float = 1.0,
                          gamma2: float = 1.0, lamb_shift: bool = False) -> Superoperator:
    """Qubit Liouvillian with a two-mode squeezed bath, on the full 16-dim space.

    ``gamma_phi = Gamma_phi * (gamma1 + gamma2)/2``.  With ``lamb_shift`` the
    Hamiltonian ``sum_i shift_i sigma_i^z`` is included.
    """
    (s1, s2), (z1, z2) = _qubit_ops()
    p1, p2 = s1.dag(), s2.dag()
    gphi = Gamma_phi * 0.5 * (gamma1 + gamma2)
    g12 = math.sqrt(gamma1 * gamma2)
    terms = []
    for s, z, g, n in ((s1, z1, gamma1, m.N1), (s2, z2, gamma2, m.N2)):
        terms += [(g * (1 + n), s, s.dag()), (g * n, s.dag(), s), (0.5 * gphi, z, z)]
    # D is bilinear, so the complex M rides on the left operator with a real rate
    mc = complex(m.M)
    terms += [
        (-g12, mc * p1, p2), (-g12, mc * p2, p1),
        (-g12, mc.conjugate() * s2, s1), (-g12, mc.conjugate() * s1, s2),
    ]
    H = None
    if lamb_shift and (m.shift1 or m.shift2):
        H = m.shift1 * z1 + m.shift2 * z2
    return assemble_liouvillian(H, terms, space=QUBIT_SPACE)


def analytic_steady_elements(N: float, M: complex, Gamma_phi: float = 0.0,
                             deficit: float | None = None) -> dict:
    """Six nonzero elements of the symmetric steady state, keyed by ``(row, col)`` basis labels.

    The elements are written in terms of ``D = N (N + 1) - |M|^2`` (``deficit``,
    computed from ``N`` and ``M`` when not given), which vanishes for a pure
    bath and keeps the numerators free of cancellations between ``O(N^3)`` terms.
    """
    if deficit is None:
        deficit = _deficit(N, M)
    D, g = deficit, Gamma_phi
    lam = (1 + 2 * N) * (1 + 2 * g + 4 * (D + g * N))
    odd = (2 * g * N * (N + 1) + (2 * N + 1) * D) / lam
    return {
        ("00", "00"): ((N + 1) + D * (3 + 2 * N) + 2 * g * (1 + N) ** 2) / lam,
        ("10", "10"): odd,
        ("01", "01"): odd,
        ("11", "11"): (N + 2 * g * N * N + D * (2 * N - 1)) / lam,
        ("11", "00"): M / lam,
        ("00", "11"): np.conj(M) / lam,
    }


def _basis_index(label: str) -> int:
    return int(label, 2)


def effective_steady_state(m: ReservoirMoments, Gamma_phi: float = 0.0, gamma1: float = 1.0,
                           gamma2: float = 1.0, method: str = "auto", lamb_shift: bool = False,
                           cfg: SolverConfig | None = None) -> DensityMatrix:
    """Steady state of the effective qubit master equation.

    ``method="analytic"`` uses the closed-form six-element state (requires
    ``N1 == N2`` and ``gamma1 == gamma2``); ``"numeric"`` solves the 16-dim
    Liouvillian; ``"auto"`` picks analytic whenever it applies.
    """
    if m.physicality_excess > 1e-9 * max(1.0, abs(m.M) ** 2):
        raise NonPhysicalMomentsError(f"|M|^2 exceeds N(N+1) by {m.physicality_excess:.3e}")
    shifted = lamb_shift and (m.shift1 or m.shift2)
    can_analytic = m.symmetric and gamma1 == gamma2 and not shifted
    if method == "auto":
        method = "analytic" if can_analytic else "numeric"
    if method == "analytic":
        if not can_analytic:
            raise ValueError("analytic steady state needs symmetric moments and rates")
        rho = np.zeros((4, 4), dtype=complex)
        for (r, c), v in analytic_steady_elements(m.N, m.M, Gamma_phi, m.purity_deficit).items():
            rho[_basis_index(r), _basis_index(c)] = v
        return DensityMatrix(rho, QUBIT_SPACE)
    if method != "numeric":
        raise ValueError(f"unknown method {method!r}")
    L = effective_liouvillian(m, Gamma_phi, gamma1, gamma2, lamb_shift)
    return steady_state(L, cfg or SolverConfig(abs_tol=1e-11))
