"""Measures, moments, oscillatory kernels and discretization.

Reference values come from routes independent of the panel meshes used by the
package: adaptive ``scipy.integrate.quad``, closed-form Beta integrals and a
rotation of the Fourier contour onto the negative imaginary axis.
"""
import numpy as np
import pytest
from scipy import integrate, special

from divesim import formfactor as ff
from divesim.errors import ConfigError, DivergenceError, DomainError

FAMILIES = [
    ff.PowerLaw(nu=1, p=4.0),
    ff.PowerLaw(nu=2, p=6.5),
    ff.PowerLaw(nu=7, p=10.0),
    ff.ExpFlat(scale=1.0, p=4.0),
    ff.IRCutoff(base=ff.PowerLaw(), delta=0.5),
    ff.IRCutoff(base=ff.PowerLaw(), delta=1.0),
    ff.Tabulated(nodes=(0.0, 0.5, 2.0, 3.0), values=(0.0, 1.0, 0.4, 0.0)),
]


def quad_half_line(f, lower=0.0):
    """Adaptive quadrature over ``[lower, inf)`` split at a few scales."""
    pts = [lower, lower + 1e-3, lower + 0.1, lower + 1.0, lower + 10.0, lower + 1e3]
    total = sum(integrate.quad(f, a, b, limit=400, epsabs=0, epsrel=1e-13)[0]
                for a, b in zip(pts, pts[1:]))
    return total + integrate.quad(f, pts[-1], np.inf, limit=400, epsabs=1e-15)[0]


def rotated_fourier(m, t, weight=lambda lam: 1.0):
    """``int mu(lam) w(lam) e^{-i lam t}`` for PowerLaw via ``lam = -i s`` (valid for t > 0)."""
    a, p, c = m.nu + 0.5, m.p, m.norm_constant

    def g(s, part):
        lam = -1j * s
        val = c * (s**a * np.exp(-1j * np.pi * a / 2)) * (1 + lam) ** (-p) * weight(lam)
        val = -1j * val * np.exp(-s * t)
        return val.real if part == 0 else val.imag

    pts = [0, 0.1 / t, 1 / t, 10 / t, 100 / t, np.inf]
    out = 0j
    for lo, hi in zip(pts, pts[1:]):
        out += integrate.quad(g, lo, hi, args=(0,), limit=400, epsabs=1e-16)[0]
        out += 1j * integrate.quad(g, lo, hi, args=(1,), limit=400, epsabs=1e-16)[0]
    return out


@pytest.mark.parametrize("m", FAMILIES, ids=lambda m: type(m).__name__)
def test_normalization_every_family(m):
    assert abs(ff.moment(m, 0) - 1.0) <= 1e-8


@pytest.mark.parametrize("m", FAMILIES[:4], ids=lambda m: type(m).__name__)
def test_normalization_against_quad(m):
    assert abs(quad_half_line(lambda x: ff.mu(m, x)) - 1.0) < 1e-8


def test_powerlaw_norm_constant_is_beta():
    m = ff.PowerLaw(nu=1, p=4.0)
    assert m.norm_constant == pytest.approx(1.0 / special.beta(2.5, 1.5), rel=1e-14)


def test_mu_rejects_negative_energy():
    with pytest.raises(DomainError):
        ff.mu(ff.PowerLaw(), -1e-3)


def test_mu_vanishes_below_cutoff():
    assert ff.mu(ff.IRCutoff(delta=0.5), 0.2) == 0.0
    lam = np.linspace(0, 0.25, 50)
    assert np.all(ff.mu(ff.IRCutoff(delta=0.5), lam) == 0.0)


def test_mu_threshold_order():
    m = ff.PowerLaw(nu=1, p=4.0)
    lam = np.array([1e-4, 1e-5, 1e-6])
    ratio = ff.mu(m, lam) / lam**1.5
    assert np.ptp(ratio) / ratio.max() < 1e-2
    assert ratio[-1] == pytest.approx(m.norm_constant, rel=1e-5)


@pytest.mark.parametrize("nu", [1, 2, 7])
def test_ir_order_invariant(nu):
    m = ff.PowerLaw(nu=nu, p=nu + 3.0)
    lam = np.array([1e-4, 1e-5, 1e-6])
    ratio = ff.mu(m, lam) / lam ** (nu + 0.5)
    assert ratio.min() > 0 and np.ptp(ratio) / ratio.max() < 1e-2


def test_mu_nonnegative():
    lam = np.geomspace(1e-10, 1e6, 400)
    for m in FAMILIES:
        assert np.all(ff.mu(m, lam) >= 0)


def test_moments_closed_form():
    m = ff.PowerLaw(nu=1, p=4.0)
    # m_k(0) = B(a + 1 - k, p - a - 1 + k) / B(a + 1, p - a - 1) with a = 3/2
    assert ff.moment(m, 1) == pytest.approx(1.0, rel=1e-12)
    assert ff.moment(m, 2) == pytest.approx(5.0, rel=1e-12)


@pytest.mark.parametrize("shift", [-1e-3, -0.1, -1.0, -7.5])
@pytest.mark.parametrize("k", [1, 2])
def test_moments_against_quad(k, shift):
    m = ff.PowerLaw(nu=1, p=4.0)
    ref = quad_half_line(lambda x: ff.mu(m, x) / (x - shift) ** k)
    assert ff.moment(m, k, shift) == pytest.approx(ref, rel=1e-10)


def test_moment_monotone_in_shift():
    for m in FAMILIES[:6]:
        assert ff.moment(m, 1, -1.0) < ff.moment(m, 1, 0.0)


def test_cutoff_moment_bound():
    for d in (0.5, 1.0, 2.0):
        assert ff.moment(ff.IRCutoff(delta=d), 1) <= d**-2


def test_moment_divergence_and_domain():
    m = ff.PowerLaw(nu=1, p=4.0)
    with pytest.raises(DivergenceError):
        ff.moment(m, 3, 0.0)
    with pytest.raises(DomainError):
        ff.moment(m, 1, 0.1)


def test_m2_continuous_at_threshold():
    m = ff.PowerLaw(nu=1, p=4.0)
    # m_2(x) - m_2(0) ~ sqrt(|x|); |x| = 1e-15 puts it below 1e-6
    assert abs(ff.moment(m, 2, -1e-15) - ff.moment(m, 2, 0.0)) < 1e-6
    xs = -np.array([1e-6, 1e-8, 1e-10])
    gaps = np.array([ff.moment(m, 2, 0.0) - ff.moment(m, 2, x) for x in xs])
    assert np.all(gaps > 0)
    slope = np.polyfit(np.log(-xs), np.log(gaps), 1)[0]
    assert slope == pytest.approx(0.5, abs=0.02)


def test_kernel_basic_properties(measure):
    t = np.array([0.3, 2.0, 17.0, 400.0])
    K = ff.kernel_K(measure, t)
    assert ff.kernel_K(measure, 0.0) == 1.0
    assert np.allclose(ff.kernel_K(measure, -t), np.conj(K), atol=1e-14)
    assert np.all(np.abs(K) <= 1.0)


@pytest.mark.parametrize("t", [0.5, 5.0, 50.0, 1e3, 1e4])
def test_kernel_against_contour_rotation(measure, t):
    ref = rotated_fourier(measure, t)
    assert abs(ff.kernel_K(measure, t) - ref) <= 1e-8 + 6e-3 * abs(ref)


def test_kernel_decay_slope(measure):
    t = np.geomspace(1e2, 1e4, 30)
    K = np.abs(ff.kernel_K(measure, t))
    slope = np.polyfit(np.log(t), np.log(K), 1)[0]
    assert slope == pytest.approx(-2.5, abs=0.15)
    scaled = K * t**2.5
    assert scaled.max() / scaled.min() < 2.0


def test_driving_h_static_values(measure):
    assert ff.driving_h(measure, 0.0, -0.3) == pytest.approx(ff.moment(measure, 1, -0.3))
    assert ff.driving_h2(measure, 0.0, 0.0, 0.0) == pytest.approx(5.0, rel=1e-12)
    with pytest.raises(DomainError):
        ff.driving_h(measure, 1.0, 0.2)


def test_driving_h_against_contour_rotation(measure):
    x0 = -0.1
    ref = rotated_fourier(measure, 50.0, lambda lam: 1.0 / (lam - x0))
    assert abs(ff.driving_h(measure, 50.0, x0) - ref) < 1e-6


def test_driving_h2_against_contour_rotation(measure):
    x0, x1 = -0.2, 0.0
    ref = rotated_fourier(measure, 20.0, lambda lam: 1.0 / ((lam - x0) * (lam - x1)))
    assert abs(ff.driving_h2(measure, 20.0, x0, x1) - ref) < 1e-6


def test_driving_h_conjugate_symmetry_and_continuity(measure):
    t = np.array([1e-6, 1e-3, 0.7])
    h = ff.driving_h(measure, t, -0.5)
    assert np.allclose(ff.driving_h(measure, -t, -0.5), np.conj(h), atol=1e-14)
    assert abs(h[0] - ff.moment(measure, 1, -0.5)) < 1e-5


@pytest.mark.parametrize("N", [2, 7, 64, 500, 2000])
@pytest.mark.parametrize("m", FAMILIES, ids=lambda m: type(m).__name__)
def test_discretize_normalization_and_order(m, N):
    lam, w = ff.discretize(m, N)
    assert lam.size == N
    assert np.all(np.diff(lam) > 0)
    assert lam[0] > 0 and lam[-1] <= m.cutoff
    assert abs(np.sum(w * ff.mu(m, lam)) - 1.0) <= 1e-6


def test_discretize_respects_cutoff_support():
    m = ff.IRCutoff(delta=0.8)
    for N in (2, 50):
        lam, _ = ff.discretize(m, N)
        assert np.all(lam >= 0.64)


def test_discretize_grid_refinement(measure):
    m1 = []
    for N in (500, 2000):
        lam, w = ff.discretize(measure, N)
        m1.append(np.sum(w * ff.mu(measure, lam) / lam))
    assert abs(m1[0] - m1[1]) < 1e-4
    assert abs(m1[1] - 1.0) < 1e-4


def test_discretize_is_graded_near_threshold(measure):
    lam, _ = ff.discretize(measure, 400)
    assert lam[0] < 1e-6
    assert np.sum(lam < 1e-2) > 40


def test_config_roundtrip_and_rejection():
    m = ff.measure_from_config({"family": "ir_cutoff", "delta": 0.5, "nu": 2, "p": 6.0})
    assert isinstance(m, ff.IRCutoff) and m.support_lower == 0.25
    assert isinstance(ff.measure_from_config({"family": "power_law"}), ff.PowerLaw)
    with pytest.raises(ConfigError):
        ff.measure_from_config({"family": "power_law", "nuu": 1})
    with pytest.raises(ConfigError):
        ff.measure_from_config({"family": "lorentzian"})
    with pytest.raises(ConfigError):
        ff.PowerLaw(nu=1, p=3.5)


def test_measures_are_immutable(measure):
    with pytest.raises(Exception):
        measure.nu = 3
