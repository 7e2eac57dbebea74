import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tmsnet.entanglement import bell_fidelity, concurrence
from tmsnet.network import NetworkParams
from tmsnet.reservoir import (
    _deficit,
    NonPhysicalMomentsError,
    PhysicalityWarning,
    ReservoirMoments,
    analytic_steady_elements,
    beta_expansion,
    effective_squeezing,
    effective_steady_state,
    filtered_moments,
    fma_symmetric_closed_form,
    markov_moments,
    markov_moments_general,
    moments_from,
)

# (N, M) pairs with |M|^2 <= N(N+1)
physical = st.builds(
    lambda n, frac, phase: (n, math.sqrt(frac * n * (n + 1)) * np.exp(1j * phase)),
    st.floats(0, 5), st.floats(0, 1), st.floats(-math.pi, math.pi))


# -- Markov ------------------------------------------------------------------


def test_markov_zero_drive():
    m = markov_moments(0.0)
    assert m.N == 0 and m.M == 0


def test_markov_values():
    m = markov_moments(0.5)
    assert m.N == pytest.approx(16 / 9, abs=1e-14)
    assert m.M.real == pytest.approx(20 / 9, abs=1e-14)
    # the two printed forms agree
    assert m.N == pytest.approx(4 * 0.25 / 0.75 ** 2, abs=1e-14)
    assert m.M.real == pytest.approx(2 * 0.5 * 1.25 / 0.75 ** 2, abs=1e-14)


@pytest.mark.parametrize("eta", [0.5, 1.0])
@pytest.mark.parametrize("eps", np.arange(1, 10) / 10)
def test_markov_identity(eps, eta):
    m = markov_moments(eps, eta)
    assert abs(abs(m.M) ** 2 - m.N * (m.N + eta)) < 1e-12 * max(1, abs(m.M) ** 2)


def test_markov_range_checks():
    with pytest.raises(ValueError):
        markov_moments(1.0)
    with pytest.raises(ValueError):
        markov_moments(0.5, 1.2)


def test_markov_general_matches_symmetric():
    p = NetworkParams.symmetric(0.4, 7.0, eta=0.8)
    a, b = markov_moments_general(p), markov_moments(0.4, 0.8)
    assert a.N1 == pytest.approx(b.N, rel=1e-12) and abs(a.M - b.M) < 1e-12
    assert a.shift1 == 0 and a.shift2 == 0


def test_markov_lamb_shift_for_detuned_modes():
    m = markov_moments_general(NetworkParams(kappa1=2, kappa2=1, delta1=0.7, delta2=0.1, epsilon=0.4))
    assert m.shift1 != 0


# -- filtered moments -------------------------------------------------------


def test_fma_closed_form_value():
    m = fma_symmetric_closed_form(0.5, 10.0)
    assert m.N == pytest.approx(105 / 72, abs=1e-14)
    assert m.M.real == pytest.approx(135 / 72, abs=1e-14)


def test_fma_quadrature_matches_closed_form():
    m = filtered_moments(NetworkParams.symmetric(0.5, 10.0))
    assert m.provenance == "filtered_numeric"
    assert m.N1 == pytest.approx(105 / 72, abs=1e-8)
    assert abs(m.M - 135 / 72) < 1e-8


def test_fma_approaches_markov_at_large_bandwidth():
    f = filtered_moments(NetworkParams.symmetric(0.5, 1e6))
    m = markov_moments(0.5)
    assert f.N1 == pytest.approx(m.N, rel=1e-4)
    assert abs(f.M) == pytest.approx(abs(m.M), rel=1e-4)


def test_fma_closed_form_large_beta_limit():
    eps = 0.3
    assert fma_symmetric_closed_form(eps, 1e9).N == pytest.approx(4 * eps ** 2 / (1 - eps ** 2) ** 2,
                                                                   rel=1e-8)


def test_delay_decays_correlation():
    p0 = NetworkParams.symmetric(0.5, 1e3)
    m0 = abs(filtered_moments(p0).M)
    m1 = abs(filtered_moments(p0.replace(tau2=1.0)).M)
    assert m1 / m0 == pytest.approx(math.exp(-0.5), rel=0.05)


def test_delay_sign_only_conjugates_for_symmetric():
    p = NetworkParams.symmetric(0.4, 5.0)
    a = filtered_moments(p.replace(tau2=0.7)).M
    b = filtered_moments(p.replace(tau1=0.7)).M
    assert abs(a - np.conj(b)) < 1e-9


def test_delay_routes_are_continuous():
    # the short-delay and long-delay integration routes meet at |tau| gamma/2 = 0.05
    p = NetworkParams.symmetric(0.5, 4.0)
    lo = filtered_moments(p.replace(tau2=0.1 - 1e-9)).M
    hi = filtered_moments(p.replace(tau2=0.1 + 1e-9)).M
    assert abs(lo - hi) < 1e-8


def test_fma_asymmetric_lamb_shift_reported():
    p = NetworkParams(kappa1=5, kappa2=3, gamma1=1, gamma2=0.6, delta1=1.0, epsilon=0.4)
    m = filtered_moments(p)
    assert m.shift1 != 0 and np.isfinite(m.shift1)


def test_fma_filtered_below_markov():
    for eps in (0.2, 0.5, 0.8):
        assert fma_symmetric_closed_form(eps, 10).N < markov_moments(eps).N


def test_beta_expansion_value():
    r, mu = beta_expansion(0.2, 100)
    assert r == pytest.approx(0.40546 - 0.00434, abs=5e-5)
    assert mu < 1


def test_beta_expansion_tracks_closed_form():
    sq = effective_squeezing(fma_symmetric_closed_form(0.2, 1e4))
    r, mu = beta_expansion(0.2, 1e4)
    assert sq.r_eff == pytest.approx(r, abs=1e-6)
    assert sq.mu_eff == pytest.approx(mu, abs=1e-6)


# -- squeezing calculus -------------------------------------------------------


def test_squeezing_of_vacuum():
    sq = effective_squeezing(ReservoirMoments(0, 0, 0j))
    assert sq.r_eff == 0 and sq.mu_eff == 1 and sq.nbar_eff == 0 and sq.S_dB == 0


def test_markov_squeezing_is_pure():
    sq = effective_squeezing(markov_moments(0.5))
    assert sq.r_eff == pytest.approx(1.0986122886681098, abs=1e-10)
    assert sq.mu_eff == pytest.approx(1, abs=1e-12)


def test_fma_squeezing_values():
    sq = effective_squeezing(fma_symmetric_closed_form(0.5, 10))
    assert sq.mu_eff == pytest.approx(0.8847, abs=5e-5)
    assert sq.r_eff == pytest.approx(0.9572, abs=5e-5)
    assert sq.mu_eff == pytest.approx(1 / (2 * sq.nbar_eff + 1), abs=1e-14)
    assert sq.S_dB == pytest.approx(10 * math.log10(math.exp(2 * sq.r_eff)), abs=1e-12)


# beyond r ~ 2 near purity, 2N + 1 - 2|M| cancels and the round trip is
# limited by the conditioning of (N, M) itself rather than by the formulas
@settings(max_examples=60, deadline=None)
@given(st.floats(0, 2), st.floats(0.05, 1), st.floats(-3, 3))
def test_squeezing_round_trip(r, mu, theta):
    m = moments_from(r, mu, theta)
    sq = effective_squeezing(m)
    back = moments_from(sq.r_eff, sq.mu_eff, theta)
    assert back.N == pytest.approx(m.N, abs=1e-12 * max(1, m.N))
    assert abs(back.M - m.M) < 1e-12 * max(1, abs(m.M))


def test_nonphysical_moments():
    with pytest.warns(PhysicalityWarning):
        bad = ReservoirMoments(1.0, 1.0, 1.6 + 0j)
    with pytest.raises(NonPhysicalMomentsError):
        effective_squeezing(bad)
    with pytest.raises(NonPhysicalMomentsError):
        effective_steady_state(bad)
    with pytest.raises(NonPhysicalMomentsError):
        ReservoirMoments(-1.0, 0.0, 0j)


# -- effective steady state ----------------------------------------------------


def test_vacuum_bath_gives_ground_state():
    rho = effective_steady_state(ReservoirMoments(0, 0, 0j)).data
    expect = np.zeros((4, 4))
    expect[0, 0] = 1
    assert np.allclose(rho, expect, atol=1e-15)


def test_ideal_markov_state_is_pure():
    rho = effective_steady_state(markov_moments(0.5))
    assert abs(rho.data[2, 2]) < 1e-14 and abs(rho.data[1, 1]) < 1e-14
    assert np.trace(rho.data @ rho.data).real == pytest.approx(1, abs=1e-12)
    assert bell_fidelity(rho) == pytest.approx(0.98780, abs=5e-6)


@settings(max_examples=40, deadline=None)
@given(physical, st.floats(0, 2))
def test_analytic_and_numeric_paths_agree(nm, gphi):
    n, M = nm
    m = ReservoirMoments(n, n, complex(M))
    a = effective_steady_state(m, gphi, method="analytic").data
    b = effective_steady_state(m, gphi, method="numeric").data
    assert np.max(np.abs(a - b)) < 1e-10


def test_six_elements_only():
    rho = effective_steady_state(moments_from(0.8, 0.9), 0.2).data
    mask = np.zeros((4, 4), bool)
    for i, j in [(0, 0), (1, 1), (2, 2), (3, 3), (3, 0), (0, 3)]:
        mask[i, j] = True
    assert np.max(np.abs(rho[~mask])) == 0
    el = analytic_steady_elements(1.0, 1.2, 0.2)
    assert el[("10", "10")] == el[("01", "01")]


@settings(max_examples=30, deadline=None)
@given(physical, st.floats(-math.pi, math.pi))
def test_phase_of_M_rotates_coherence(nm, theta):
    n, M = nm
    a = effective_steady_state(ReservoirMoments(n, n, complex(M))).data
    b = effective_steady_state(ReservoirMoments(n, n, complex(M) * np.exp(1j * theta))).data
    assert np.allclose(np.diag(a), np.diag(b), atol=1e-14)
    assert abs(b[3, 0] - a[3, 0] * np.exp(1j * theta)) < 1e-13


def test_asymmetric_bath_uses_numeric_path():
    m = ReservoirMoments(0.5, 0.8, 0.4 + 0.1j)
    rho = effective_steady_state(m, 0.1, gamma1=1.0, gamma2=0.6)
    with pytest.raises(ValueError):
        effective_steady_state(m, method="analytic")
    # swap-asymmetric populations
    assert abs(rho.data[1, 1] - rho.data[2, 2]) > 1e-6


def test_plateau_law_for_impure_reservoirs():
    for mu in (0.6, 0.75, 0.9):
        for r in (1.5, 2.0, 3.0):
            F = bell_fidelity(effective_steady_state(moments_from(r, mu)))
            assert abs(F - 0.25 * (1 + 3 * mu ** 2)) < 0.01


def test_entanglement_boundary_purity():
    r = 3.0

    def c(mu):
        return concurrence(effective_steady_state(moments_from(r, mu)), raw=True)

    lo, hi = 0.3, 0.9
    assert c(lo) < 0 < c(hi)
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if c(mid) > 0 else (mid, hi)
    assert abs(lo - 1 / math.sqrt(3)) < 0.02


@pytest.mark.parametrize("eps", [0.5, 0.9, 0.97])
def test_closed_form_deficit_matches_recomputed(eps):
    m = markov_moments(eps)
    assert m.deficit == 0
    # the recomputed value is only good to about 2N ulp
    assert abs(_deficit(m.N, m.M)) < 8 * m.N * np.finfo(float).eps * m.N


def test_deficit_form_matches_numeric_state_near_purity():
    m = moments_from(1.5, 0.999)
    a = effective_steady_state(m, 0.2, method="analytic").data
    b = effective_steady_state(m, 0.2, method="numeric").data
    assert np.allclose(a, b, atol=1e-9)
    assert m.deficit == pytest.approx(0.25 * (0.999 ** -2 - 1))
