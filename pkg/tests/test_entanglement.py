import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tmsnet.entanglement import (
    PHI_PLUS,
    EntanglementReport,
    analytic_fidelity_estimates,
    bell_fidelity,
    binary_entropy,
    concurrence,
    entanglement_of_formation,
    eof_from_concurrence,
    fidelity_bound,
    rate,
)
from tmsnet.reservoir import effective_steady_state, markov_moments, moments_from


def ket(*amps):
    v = np.asarray(amps, dtype=complex)
    v /= np.linalg.norm(v)
    return np.outer(v, v.conj())


def random_qubit_state(rng):
    g = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    r = g @ g.conj().T
    return r / np.trace(r)


def test_fidelity_extremes():
    assert bell_fidelity(np.outer(PHI_PLUS, PHI_PLUS.conj())) == pytest.approx(1, abs=1e-15)
    assert bell_fidelity(ket(1, 0, 0, 0)) == pytest.approx(0.5, abs=1e-15)
    assert fidelity_bound(0) == 0.5


def test_fidelity_bound_value():
    assert fidelity_bound(0.5) == pytest.approx(5.0625 / 5.125, abs=1e-15)
    assert fidelity_bound(0.5) == pytest.approx(0.98780, abs=5e-6)


@pytest.mark.parametrize("eps", np.linspace(0, 0.9, 19))
def test_markov_state_saturates_bound(eps):
    F = bell_fidelity(effective_steady_state(markov_moments(eps)))
    assert F == pytest.approx(fidelity_bound(eps), abs=1e-12)


def test_concurrence_bell_and_product():
    assert concurrence(ket(1, 0, 0, 1)) == pytest.approx(1, abs=1e-12)
    assert concurrence(ket(1, 0, 0, 0)) == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_concurrence_of_product_states_vanishes(seed):
    rng = np.random.default_rng(seed)
    rho = np.kron(random_qubit_state(rng), random_qubit_state(rng))
    assert concurrence(rho) < 1e-7


def test_pure_state_concurrence_from_markov():
    m = markov_moments(0.5)
    C = concurrence(effective_steady_state(m))
    assert C == pytest.approx(2 * math.sqrt(m.N * (m.N + 1)) / (2 * m.N + 1), abs=1e-12)
    assert C == pytest.approx(0.97561, abs=5e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi))
def test_concurrence_local_phase_invariance(seed, a, b):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = g @ g.conj().T
    rho /= np.trace(rho)
    U = np.kron(np.diag([1, np.exp(1j * a)]), np.diag([1, np.exp(1j * b)]))
    assert concurrence(U @ rho @ U.conj().T) == pytest.approx(concurrence(rho), abs=1e-12)


def test_eof_values():
    assert eof_from_concurrence(1.0) == pytest.approx(1, abs=1e-15)
    assert eof_from_concurrence(0.0) == 0
    assert eof_from_concurrence(0.97561) == pytest.approx(0.96497, abs=5e-5)
    assert entanglement_of_formation(ket(1, 0, 0, 1)) == pytest.approx(1, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_eof_monotone_in_concurrence(c1, c2):
    lo, hi = sorted((c1, c2))
    assert eof_from_concurrence(lo) <= eof_from_concurrence(hi) + 1e-15
    if lo > 1e-6:
        assert eof_from_concurrence(lo) > 0


def test_binary_entropy_edges():
    assert binary_entropy(0) == 0 and binary_entropy(1) == 0
    assert binary_entropy(0.5) == pytest.approx(1)


def test_rate():
    assert rate(1.0, 10.0) == pytest.approx(0.1)
    assert rate(0.5, 2.0, gamma=0.5) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        rate(1.0, 0.0)


def test_weak_driving_estimate():
    est = analytic_fidelity_estimates(0.05, 10, 1.0, 0.0)
    assert est["weak_driving"] == pytest.approx(0.5 + 20 / 11 * 0.05, abs=1e-15)
    assert est["weak_driving"] == pytest.approx(0.59091, abs=5e-6)
    slope = (analytic_fidelity_estimates(1e-3, 1e9)["weak_driving"] - 0.5) / 1e-3
    assert slope == pytest.approx(2, rel=1e-8)


def test_optimal_estimate():
    est = analytic_fidelity_estimates(0.3, 100, 1.0, 0.0)
    assert est["optimal"] == pytest.approx(1 - 3 * 9 ** (1 / 3) / 4 * 0.005 ** (2 / 3), abs=1e-15)
    assert est["optimal"] == pytest.approx(0.9544, abs=1e-4)


def test_near_threshold_estimate_peaks_near_optimal():
    beta = 1e3
    eps = np.linspace(0.3, 0.99, 2000)
    near = np.array([analytic_fidelity_estimates(e, beta)["near_threshold"] for e in eps])
    opt = analytic_fidelity_estimates(0.5, beta)["optimal"]
    assert near.max() == pytest.approx(opt, abs=1e-5)


def test_entanglement_iff_fidelity_above_half():
    for r in np.linspace(0.05, 3, 15):
        for mu in np.linspace(0.3, 1, 15):
            rep = EntanglementReport.from_state(effective_steady_state(moments_from(r, mu)))
            if abs(rep.fidelity - 0.5) < 1e-9:
                continue
            assert (rep.concurrence > 0) == (rep.fidelity > 0.5)


def test_report_fields():
    rep = EntanglementReport.from_state(ket(1, 0, 0, 1), T=4.0)
    assert rep.as_dict() == pytest.approx({"F": 1, "C": 1, "E_F": 1, "R": 0.25})
    assert EntanglementReport.from_state(ket(1, 0, 0, 1)).rate is None
