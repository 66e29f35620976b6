import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from dppintensity.countdist import (CountPmf, approx_constants, check_condition_amed,
                                    d0_d1_check, default_m_max, jittered_median, omega,
                                    poisson_binomial_pmf, poisson_pmf, s_n_diagnostic)
from dppintensity.sampler import SpectralModel, Window, build_spectral_model


# ---------------------------------------------------------------- Poisson

def test_poisson_unit_mean():
    p = poisson_pmf(1.0)
    assert p[0] == pytest.approx(math.exp(-1), rel=1e-14)


def test_poisson_mode_and_stirling_peak():
    p = poisson_pmf(200.0)
    assert p.mode() in (199, 200)
    assert p[200] == pytest.approx((2 * math.pi * 200) ** -0.5, rel=0.005)


def test_poisson_mass_and_tail():
    p = poisson_pmf(200.0, 220)
    assert p.probs.sum() + p.tail == pytest.approx(1.0, abs=1e-12)
    assert p.tail == pytest.approx(stats.poisson.sf(220, 200.0), rel=1e-12)
    np.testing.assert_allclose(p.probs, stats.poisson.pmf(np.arange(221), 200.0), rtol=1e-11)


def test_poisson_large_mean_no_underflow():
    p = poisson_pmf(800.0)
    assert np.isfinite(p.probs).all()
    assert p.probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_poisson_rejects_nonpositive():
    with pytest.raises(ValueError):
        poisson_pmf(0.0)


@pytest.mark.parametrize("lc", [400.0, 900.0])
@pytest.mark.parametrize("w", [-1.0, 0.5, 2.0])
def test_stirling_asymptotics(lc, w):
    # v = lam c + w sqrt(c): the Gaussian factor is exp(-w^2 / (2 lam))
    lam = 50.0
    c = lc / lam
    v = lc + w * math.sqrt(c)
    p = poisson_pmf(lc)
    assert p[int(math.floor(v))] * math.sqrt(2 * math.pi * lc) == pytest.approx(
        math.exp(-w * w / (2 * lam)), rel=0.02)


# ---------------------------------------------------------------- Poisson-Binomial

def test_poisson_binomial_two_fair_coins():
    np.testing.assert_allclose(poisson_binomial_pmf([0.5, 0.5], 2).probs, [0.25, 0.5, 0.25])


@pytest.mark.parametrize("n,p", [(20, 0.3), (200, 0.05), (1000, 0.7)])
def test_poisson_binomial_binomial_case(n, p):
    pb = poisson_binomial_pmf([p] * n)
    m = np.arange(pb.m_max + 1)
    assert np.max(np.abs(pb.probs - stats.binom.pmf(m, n, p))) < 1e-12


def test_poisson_binomial_truncation_tail():
    pb = poisson_binomial_pmf([0.3] * 20, 5)
    assert pb.tail == pytest.approx(stats.binom.sf(5, 20, 0.3), abs=1e-15)
    np.testing.assert_allclose(pb.probs, stats.binom.pmf(np.arange(6), 20, 0.3), atol=1e-15)


def test_poisson_binomial_rejects_bad_probabilities():
    with pytest.raises(ValueError):
        poisson_binomial_pmf([0.2, 1.0])
    with pytest.raises(ValueError):
        poisson_binomial_pmf([-0.1])


def test_poisson_binomial_of_dpp_model(model1_n1):
    e = model1_n1.eigenvalues
    pb = poisson_binomial_pmf(e)
    assert pb.probs.sum() + pb.tail == pytest.approx(1.0, abs=1e-12)
    assert pb.mean() == pytest.approx(e.sum(), abs=1e-9)
    assert pb.variance() == pytest.approx(np.sum(e * (1 - e)), abs=1e-9)
    assert abs(pb.mean() - 200) < 2.0
    assert pb.variance() < pb.mean()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 0.999), min_size=1, max_size=40))
def test_poisson_binomial_matches_convolution(probs):
    ref = np.array([1.0])
    for q in probs:
        ref = np.convolve(ref, [1 - q, q])
    pb = poisson_binomial_pmf(probs, len(probs))
    np.testing.assert_allclose(pb.probs, ref, atol=1e-13)
    assert pb.tail == 0.0


def test_default_m_max():
    assert default_m_max(200.0, 100.0) == 320
    assert default_m_max(0.5, 0.0) == 13


def test_count_pmf_helpers():
    p = CountPmf(np.array([0.2, 0.5, 0.3]), 0.0)
    assert p.m_max == 2 and p.mode() == 1
    np.testing.assert_allclose(p.cdf(), [0.2, 0.7, 1.0])
    assert p.mean() == pytest.approx(1.1)
    assert p.variance() == pytest.approx(0.2 * 1.21 + 0.5 * 0.01 + 0.3 * 0.81)


# ---------------------------------------------------------------- omega and constants

def test_omega_examples():
    assert omega(7, 7.0) == pytest.approx(-1 / 7)
    assert omega(0, 3.5) == 1.0
    assert omega(110, 100.0) == pytest.approx(-0.001, abs=1e-15)
    with pytest.raises(ValueError):
        omega(1, 0.0)


@settings(max_examples=200)
@given(m=st.integers(0, 10**6), ell=st.integers(1, 10**6))
def test_omega_identity(m, ell):
    assert ell**2 * omega(m, float(ell)) + m == pytest.approx((m - ell) ** 2, rel=1e-12, abs=1e-6)


def test_omega_vectorised():
    out = omega(np.array([0, 10]), 10.0)
    np.testing.assert_allclose(out, [1.0, -0.1])


def test_constants_poisson_limit():
    k = approx_constants(50.0, 0.0)
    assert k.kappa0 == 0.0 and k.kappa1 == 0.0
    k = approx_constants(50.0, 1e-9)
    assert 0 < k.kappa0 < 1e-9 and 0 < k.kappa1 < 1e-15


def test_constants_dpp1(dpp1):
    k = approx_constants(50.0, dpp1.C0)
    # frozen from the closed forms with C0 from the kernel module
    assert k.kappa0 == pytest.approx(0.0056140, rel=1e-4)
    assert k.kappa1 == pytest.approx(0.00021442, rel=1e-4)


@pytest.mark.parametrize("c", [0.5, 4.0, 100.0])
def test_constants_homogeneity(c):
    a, b = approx_constants(50.0, 10.0), approx_constants(50.0 * c, 10.0 * c)
    assert b.kappa0 == pytest.approx(a.kappa0 / math.sqrt(c), rel=1e-12)
    assert b.kappa1 == pytest.approx(a.kappa1 / math.sqrt(c), rel=1e-12)


@pytest.mark.parametrize("C0", [50.0, 60.0, -1.0])
def test_constants_reject_vacuous(C0):
    with pytest.raises(ValueError):
        approx_constants(50.0, C0)


# ---------------------------------------------------------------- condition

def test_condition_dpp1(dpp1):
    value, ok = check_condition_amed(50.0, dpp1.C0)
    assert ok
    assert value == pytest.approx(0.057, abs=0.005)
    assert value == pytest.approx(0.0571364, rel=1e-5)


def test_condition_dpp2(dpp2):
    value, ok = check_condition_amed(50.0, dpp2.C0)
    assert ok
    assert value == pytest.approx(0.021, abs=0.005)
    assert value == pytest.approx(0.0195479, rel=1e-5)


def test_condition_poisson_limit():
    value, ok = check_condition_amed(50.0, 1e-12)
    assert ok and value == pytest.approx((2 * math.pi * 50) ** -0.5, rel=1e-9)


def test_condition_closed_form():
    # recomputed from the two approximation constants written out by hand
    e1 = math.exp(0.5) - 1.0
    for lam, c0 in [(50.0, 1.651696), (50.0, 14.865263), (10.0, 3.0), (200.0, 20.0)]:
        base = (2 * math.pi * lam) ** -0.5
        k0 = math.sqrt(3) * e1 * c0 * math.sqrt(lam) / (lam - c0) ** 2
        k1 = 0.5 * math.sqrt(15) * e1 * c0**2 * math.sqrt(lam) / (lam - c0) ** 3
        ref = max(base - k0, base * (1 + c0 / (2 * lam)) - k1)
        assert check_condition_amed(lam, c0)[0] == pytest.approx(ref, rel=1e-12)


def test_condition_fails_for_strong_repulsion():
    value, ok = check_condition_amed(50.0, 40.0)
    assert value < 0 and not ok


# ---------------------------------------------------------------- bounds

def test_d0_bound_dpp1_unit_window(dpp1, model1_n1):
    rep = d0_d1_check(model1_n1, 50.0, dpp1.C0)
    assert rep.bound_ok
    assert rep.sup_d0 <= approx_constants(50.0, dpp1.C0).kappa0 / 2
    assert set(rep.to_dict()) >= {"S_volume", "kappa0", "sup_d0", "bound_ok", "sup_d1",
                                  "residual"}


def test_d0_bound_after_doubling_volume(dpp1):
    s = math.sqrt(2.0)
    m = build_spectral_model(dpp1, Window((-s, -s), (s, s)))
    rep = d0_d1_check(m, 50.0, dpp1.C0)
    assert rep.S_volume == pytest.approx(8.0)
    assert rep.bound_d0 == pytest.approx(approx_constants(50.0, dpp1.C0).kappa0 / math.sqrt(8))
    assert rep.bound_ok


def test_d0_le_cam_regime():
    # 10^5 equal tiny eigenvalues summing to lam |S| behave like a Poisson law
    w = Window.square(1)
    m = SpectralModel.from_eigenvalues(np.full(100_000, 200.0 / 100_000), w)
    rep = d0_d1_check(m, 50.0, 1e-6)
    assert rep.sup_d0 < 1e-4


def test_d0_without_tail_completion(dpp1, model1_n1):
    full = d0_d1_check(model1_n1, 50.0, dpp1.C0)
    raw = d0_d1_check(model1_n1, 50.0, dpp1.C0, complete_tail=False)
    # dropping the truncated mass only shifts the mean slightly
    assert raw.sup_d0 > full.sup_d0
    assert raw.sup_d0 <= raw.bound_d0 + 1e-3


# ---------------------------------------------------------------- jittered median and s_n

def test_jittered_median_closed_form():
    p = CountPmf(np.array([0.2, 0.5, 0.3]), 0.0)
    # F_Z(t) = 0.2 + 0.5 (t - 1) on [1, 2]
    assert jittered_median(p) == pytest.approx(1.6)


def test_jittered_median_monte_carlo(rng):
    pb = poisson_binomial_pmf(rng.random(30) * 0.9)
    n = rng.choice(pb.m_max + 1, size=400_000, p=pb.probs / pb.probs.sum())
    z = n + rng.random(n.size)
    assert np.median(z) == pytest.approx(jittered_median(pb), abs=0.02)


def test_s_n_poisson_profile():
    # tiny equal eigenvalues make the count Poisson(lam c) with lam c = 100
    c, lam = 2.0, 50.0
    m = SpectralModel.from_eigenvalues(np.full(200_000, lam * c / 200_000), Window((0, 0), (1, 2)))
    s = s_n_diagnostic(m, c)
    assert s == pytest.approx((2 * math.pi * lam) ** -0.5, rel=0.02)


def test_s_n_dpp1_cell(dpp1):
    side = 2.0 / 3.0
    cell = build_spectral_model(dpp1, Window((0, 0), (side, side)))
    s = s_n_diagnostic(cell)
    value, _ = check_condition_amed(50.0, dpp1.C0)
    assert s > value > 0


def test_s_n_stable_under_doubling(dpp1):
    side = 2.0 / 3.0
    a = s_n_diagnostic(build_spectral_model(dpp1, Window((0, 0), (side, side))))
    b = s_n_diagnostic(build_spectral_model(dpp1, Window((0, 0), (side * math.sqrt(2),) * 2)))
    assert b == pytest.approx(a, rel=0.2)
