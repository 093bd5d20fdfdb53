import math

import numpy as np
import pytest

from loggas.equilibrium import arcsine_measure, semicircle_measure
from loggas.errors import DuplicatePositions, QuadratureFailure
from loggas.measure import Measure1D
from loggas.model import (
    EnsembleSpec, MixtureGaussianParams, QuadratureSpec, energy_statistic, field_from_config,
    gaussian_kernel, interaction_energy_direct, interaction_energy_fourier, kernel_from_config,
    log_density_h, log_density_invariant, pair_energy, psi_lower, quadratic_field, quadratic_kernel,
    quartic_field, shifted_field, zero_kernel,
)

RNG = np.random.default_rng(1234)


def spec(n, Q, h=None):
    return EnsembleSpec(n, Q, h or zero_kernel())


def test_log_density_two_points_no_interaction():
    assert log_density_h(spec(2, quadratic_field(1.0)), np.array([0.0, 1.0])) == pytest.approx(-2.0)


def test_log_density_two_points_quadratic_interaction():
    s = spec(2, quadratic_field(1.0), quadratic_kernel(1.0))
    assert log_density_h(s, np.array([0.0, 1.0])) == pytest.approx(-3.0)


def test_zero_interaction_reduces_to_invariant_density():
    Q = quartic_field(0.5)
    for _ in range(20):
        x = RNG.normal(size=7)
        assert log_density_h(spec(7, Q), x) == log_density_invariant(Q, 7, x)


def test_invariant_density_hand_value_and_sign_flip():
    V = quadratic_field(1.0)
    assert log_density_invariant(V, 2, np.array([-1.0, 1.0])) == pytest.approx(2 * math.log(2) - 4)
    x = RNG.normal(size=6)
    assert log_density_invariant(V, 6, x) == pytest.approx(log_density_invariant(V, 6, -x), abs=1e-12)


def test_log_density_symmetries():
    s = spec(6, quartic_field(0.2), gaussian_kernel(0.3))
    x = RNG.normal(size=6)
    base = log_density_h(s, x)
    assert log_density_h(s, -x) == pytest.approx(base, abs=1e-12)
    assert log_density_h(s, RNG.permutation(x)) == pytest.approx(base, abs=1e-12)


def test_duplicate_positions_rejected():
    with pytest.raises(DuplicatePositions):
        log_density_h(spec(3, quadratic_field(1.0)), np.array([0.1, 0.1, 0.5]))
    with pytest.raises(DuplicatePositions):
        energy_statistic(quadratic_field(1.0), np.array([1.0, 1.0 + 1e-14]))


def test_field_invariants():
    for Q in (quadratic_field(1.5), quartic_field(0.0), quartic_field(1.0)):
        assert Q.check_invariants(np.linspace(-3, 3, 101))


def test_kernel_even_real_transform_and_split():
    h = gaussian_kernel(0.7, 1.3)
    t = np.linspace(-4, 4, 81)
    assert np.allclose(h(t), h(-t))
    assert np.all(np.isreal(h.fourier(t)))
    assert np.allclose(h.pos_part(t) - h.neg_part(t), h(t), atol=1e-12)
    assert h.is_positive_definite()
    # a difference of bumps has both parts
    from loggas.model import sum_kernel
    d = sum_kernel(gaussian_kernel(1.0, 1.0), gaussian_kernel(-0.8, 0.5))
    assert np.allclose(d.pos_part(t) - d.neg_part(t), d(t), atol=1e-10)
    assert np.max(d.neg_part(t)) > 1e-3


def test_gaussian_fourier_matches_numeric_transform():
    from scipy.integrate import quad
    h = gaussian_kernel(0.4, 0.8)
    for t in (0.0, 0.7, 2.5):
        num = quad(lambda s: math.cos(t * s) * float(h(s)), -np.inf, np.inf)[0] / math.sqrt(2 * math.pi)
        assert h.fourier(np.array(t)) == pytest.approx(num, rel=1e-10, abs=1e-14)


def test_shifted_field_zero_kernel_is_identity():
    Q = quadratic_field(1.0)
    assert shifted_field(Q, zero_kernel(), arcsine_measure(1.0)) is Q


def test_shifted_field_quadratic_kernel():
    g = 0.7
    mu = semicircle_measure(1.3)
    m2 = mu.moment(2)
    Q = quartic_field(0.1)
    V = shifted_field(Q, quadratic_kernel(g), mu)
    t = np.linspace(-2, 2, 17)
    assert np.allclose(V(t), Q(t) + g * (t ** 2 + m2), atol=1e-12)
    assert np.allclose(V.deriv1(t), Q.deriv1(t) + 2 * g * t, atol=1e-12)
    assert np.allclose(V.deriv2(t), Q.deriv2(t) + 2 * g, atol=1e-12)


def test_shifted_field_gaussian_bump_against_adaptive_quadrature():
    from scipy.integrate import quad
    from scipy.special import i0
    h = gaussian_kernel(1.0, math.sqrt(0.5))  # e^{-t^2}
    V = shifted_field(quadratic_field(1.0), h, arcsine_measure(1.0))
    # algebraic-weight QAWS rule and the Bessel closed form e^{-1/2} I_0(1/2)
    ref = quad(lambda s: math.exp(-s * s) / math.pi, -1, 1, weight="alg", wvar=(-0.5, -0.5), epsabs=1e-14)[0]
    assert ref == pytest.approx(math.exp(-0.5) * i0(0.5), abs=1e-13)
    assert float(V(np.array(0.0))) == pytest.approx(ref, abs=1e-10)


def test_shifted_field_needs_quadrature_nodes():
    empty = Measure1D((-1.0, 1.0), np.array([]), np.array([]), np.array([]))
    with pytest.raises(QuadratureFailure):
        shifted_field(quadratic_field(1.0), gaussian_kernel(1.0), empty)


def test_interaction_energy_zero_kernel_and_single_particle():
    mu = semicircle_measure(1.0)
    assert interaction_energy_direct(zero_kernel(), mu, RNG.normal(size=5)) == 0.0
    h = gaussian_kernel(0.6)
    x1 = 0.3
    hmu = float(mu.masses @ h(x1 - mu.nodes))
    hmumu = float(mu.masses @ (h(np.subtract.outer(mu.nodes, mu.nodes)) @ mu.masses))
    expect = -0.5 * (float(h(0.0)) - 2 * hmu + hmumu)
    assert interaction_energy_direct(h, mu, np.array([x1])) == pytest.approx(expect, abs=1e-14)


def test_fourier_energy_zero_kernel():
    assert interaction_energy_fourier(zero_kernel(), arcsine_measure(1.0), RNG.normal(size=3)).value == 0.0


def test_fourier_matches_direct_unit_gaussian():
    h = gaussian_kernel(1.0, 1.0)
    mu = semicircle_measure(1.0)
    for _ in range(10):
        x = RNG.uniform(-1.2, 1.2, 8)
        d = interaction_energy_direct(h, mu, x)
        f = interaction_energy_fourier(h, mu, x)
        assert abs(d - f.value) <= 1e-8 + f.error


def test_fourier_single_particle_against_narrow_measure():
    h = gaussian_kernel(1.0)
    mu = Measure1D.point_mass(0.25, width=1e-6)
    f = interaction_energy_fourier(h, mu, np.array([0.25]))
    assert abs(f.value) < 1e-10


def test_fourier_refinement_reported():
    h = gaussian_kernel(1.0)
    res = interaction_energy_fourier(h, semicircle_measure(1.0), RNG.normal(size=4), QuadratureSpec(n_nodes=16))
    assert res.error >= 0


def test_fourier_needs_transform():
    with pytest.raises(QuadratureFailure):
        interaction_energy_fourier(quadratic_kernel(1.0), semicircle_measure(1.0), np.array([0.1, 0.2]))


def test_energy_statistic_hand_value_and_permutation():
    Q = quadratic_field(1.0)
    assert energy_statistic(Q, np.array([0.0, 1.0])) == pytest.approx(1.0)
    x = RNG.normal(size=9)
    assert energy_statistic(Q, x) == pytest.approx(energy_statistic(Q, RNG.permutation(x)), abs=1e-12)


def test_pair_energy_lower_bound():
    Q = quadratic_field(1.0)
    t, s = RNG.normal(scale=3, size=(2, 500))
    assert np.all(pair_energy(Q, t, s) >= 0.5 * psi_lower(Q, t) + 0.5 * psi_lower(Q, s) - 1e-12)


def test_mixture_params_derived_constants():
    p = MixtureGaussianParams(1.0, 3.0)
    assert p.omega_prime == pytest.approx(math.sqrt(3) / 4)
    assert p.omega_dblprime == pytest.approx(p.omega_prime ** 2 / 4)
    assert p.omega == pytest.approx(0.5)
    assert p.support_radius == pytest.approx(math.sqrt(2) * p.omega)


def test_config_round_trip():
    for Q in (quadratic_field(2.0), quartic_field(0.5)):
        assert field_from_config(Q.to_config()).to_config() == Q.to_config()
    for h in (quadratic_kernel(1.0), gaussian_kernel(0.4, 2.0), zero_kernel()):
        assert kernel_from_config(h.to_config()).to_config() == h.to_config()
    with pytest.raises(KeyError):
        field_from_config({"kind": "nope"})


def test_truncation_margin():
    s = EnsembleSpec(4, quadratic_field(1.0), zero_kernel(), 2.0)
    assert s.check_truncation(1.4142)
    assert not s.check_truncation(1.9)
