import math

import numpy as np
import pytest

from oracles import monomial_christoffel

from loggas.equilibrium import solve_equilibrium
from loggas.errors import EdgeTooClose, PrecisionLoss
from loggas.model import MixtureGaussianParams, quadratic_field, quartic_field
from loggas.orthopoly import (
    KernelEvaluator, WeightSpec, cd_kernel, christoffel_function, correlation_from_kernel, evaluator_for_field,
    gaussian_evaluator, gaussian_table, hadamard_bound, printed_shift_factor, rescaled_kernel_error,
    shifted_hermite_kernel, sine_det, sine_kernel, stieltjes_recurrence, unweighted_shift_factor,
)

RNG = np.random.default_rng(99)


def hermite_weight(L=12.0):
    return WeightSpec(lambda t: -np.square(t), (-L, L))


# ---- recurrence ---------------------------------------------------------
def test_hermite_recurrence():
    tab = stieltjes_recurrence(hermite_weight(), 40)
    k = np.arange(40)
    assert np.max(np.abs(tab.a - np.sqrt((k + 1) / 2))) < 1e-10
    assert np.max(np.abs(tab.b)) < 1e-10
    assert tab.norm0 == pytest.approx(math.pi ** -0.25, rel=1e-12)
    assert tab.drift <= 1e-10
    assert np.all(tab.a > 0)


def test_closed_form_gaussian_table_matches_stieltjes():
    c, n = 2.0, 16
    w = WeightSpec(lambda t: -c * n * np.square(t), (-1.5, 1.5), n)
    tab = stieltjes_recurrence(w, n)
    ref = gaussian_table(c, n, n)
    assert np.max(np.abs(tab.a - ref.a)) < 1e-12
    assert tab.log_norm0 == pytest.approx(ref.log_norm0, abs=1e-12)


def test_shifted_weight_recurrence_is_translation():
    p, n, eta = MixtureGaussianParams(1.0, 1.0), 16, 1.0
    c = p.alpha + p.gamma
    delta = p.shift(eta, n)
    L = 1.5 * p.support_radius
    base = stieltjes_recurrence(WeightSpec(lambda t: -c * n * t * t, (-L, L), n), n)
    shifted = stieltjes_recurrence(
        WeightSpec(lambda t: -c * n * t * t + eta * math.sqrt(p.gamma) * t, (-L + delta, L + delta), n), n)
    assert np.max(np.abs(shifted.a - base.a)) < 1e-10
    assert np.max(np.abs(shifted.b - delta)) < 1e-10


def test_degree_ceiling_needs_extended_precision():
    w = WeightSpec(lambda t: -201 * np.square(t), (-1.5, 1.5), 201)
    with pytest.raises(PrecisionLoss) as exc:
        stieltjes_recurrence(w, 201)
    assert exc.value.achievable_degree == 200


def test_extended_precision_matches_double():
    w = WeightSpec(lambda t: -20 * np.square(t), (-3.0, 3.0), 20, extended=True)
    tab = stieltjes_recurrence(w, 20)
    ref = gaussian_table(1.0, 20, 20)
    assert np.max(np.abs(np.asarray(tab.a, dtype=float) - ref.a)) < 1e-12


# ---- kernel -------------------------------------------------------------
@pytest.mark.parametrize("V,n", [(quadratic_field(1.0), 16), (quartic_field(0.0), 32)])
def test_projection_trace(V, n):
    b = solve_equilibrium(V).endpoint
    ev = evaluator_for_field(V, n, 1.5 * b)
    x, w = np.polynomial.legendre.leggauss(400)
    L = 1.5 * b
    assert float(L * w @ cd_kernel(ev, L * x, L * x)) == pytest.approx(n, abs=1e-6)


def test_kernel_symmetry_and_forms():
    ev = gaussian_evaluator(1.0, 20)
    t, s = RNG.uniform(-1.2, 1.2, (2, 50))
    assert np.array_equal(cd_kernel(ev, t, s), cd_kernel(ev, s, t))
    assert np.allclose(cd_kernel(ev, t, s), np.diag(ev.cross(t, s)), atol=1e-13)
    assert np.allclose(cd_kernel(ev, t, t), ev.diag(t), atol=1e-12)
    # nearly coincident arguments switch to the direct sum without a jump
    assert cd_kernel(ev, 0.3, 0.3 + 1e-9) == pytest.approx(cd_kernel(ev, 0.3, 0.3), rel=1e-8)


def test_reproducing_property():
    ev = gaussian_evaluator(1.0, 12)
    L = ev.weight.domain[1]
    x, w = np.polynomial.legendre.leggauss(300)
    s = L * x
    for t, u in RNG.uniform(-1, 1, (5, 2)):
        lhs = float(L * w @ (cd_kernel(ev, t, s) * cd_kernel(ev, s, u)))
        assert lhs == pytest.approx(cd_kernel(ev, t, u), abs=1e-10)


def test_single_term_hermite_kernel():
    ev = KernelEvaluator(stieltjes_recurrence(hermite_weight(), 1), hermite_weight(), 1)
    t, s = RNG.normal(size=(2, 10))
    assert np.allclose(cd_kernel(ev, t, s), math.pi ** -0.5 * np.exp(-(t * t + s * s) / 2), atol=1e-14)


# ---- correlations -------------------------------------------------------
def test_one_point_correlation_and_coincidence():
    ev = gaussian_evaluator(2.0, 16)
    for t in (-0.5, 0.0, 0.8):
        assert correlation_from_kernel(ev, [t]) == pytest.approx(cd_kernel(ev, t, t) / 16, rel=1e-12)
    assert abs(correlation_from_kernel(ev, [0.2, 0.2])) < 1e-10
    assert abs(correlation_from_kernel(ev, [0.1, 0.4, 0.1])) < 1e-10


def test_hadamard_two_point():
    ev = gaussian_evaluator(1.0, 16)
    C = 16 / 14
    for t, s in RNG.uniform(-1.3, 1.3, (200, 2)):
        r2 = correlation_from_kernel(ev, [t, s])
        assert r2 <= C ** 2 * ev.rho1(np.array(t)) * ev.rho1(np.array(s)) + 1e-12
        assert r2 <= hadamard_bound(ev, [t, s]) + 1e-12


# ---- Christoffel function -----------------------------------------------
def test_christoffel_against_monomial_minimisation():
    for _ in range(10):
        n = int(RNG.integers(1, 9))
        c = RNG.uniform(0.5, 3)
        w = WeightSpec(lambda t, c=c: -c * t ** 4 + 0.3 * t, (-2.0, 2.0))
        t = RNG.uniform(-1.5, 1.5)
        got = christoffel_function(w, n, t)
        ref = monomial_christoffel(w.log_weight, w.domain, n, t)[0]
        assert got == pytest.approx(ref, rel=1e-8)


def test_christoffel_trivial_cases():
    w = hermite_weight(8.0)
    assert christoffel_function(w, 1, 0.7) == pytest.approx(math.sqrt(math.pi), rel=1e-12)
    t = np.linspace(-2, 2, 9)
    assert np.allclose(christoffel_function(w.scaled(2.0), 5, t), 2 * christoffel_function(w, 5, t), rtol=1e-12)
    # W1 <= W2 pointwise gives lambda(W1) <= lambda(W2)
    w1 = WeightSpec(lambda u: -2 * u * u, (-8.0, 8.0))
    assert np.all(christoffel_function(w1, 5, t) <= christoffel_function(w, 5, t) * (1 + 1e-12))


# ---- shifted Hermite ----------------------------------------------------
def test_shifted_hermite_zero_shift():
    p = MixtureGaussianParams(1.0, 1.0)
    ev = gaussian_evaluator(2.0, 16)
    t, s = RNG.uniform(-1, 1, (2, 20))
    assert np.allclose(shifted_hermite_kernel(p, 0.0, 16, t, s), cd_kernel(ev, t, s), atol=1e-14)


def test_shifted_hermite_against_stieltjes():
    p, n, eta = MixtureGaussianParams(1.0, 1.0), 16, 1.0
    c = p.alpha + p.gamma
    L = 1.5 * p.support_radius
    w = WeightSpec(lambda t: -c * n * t * t + eta * math.sqrt(p.gamma) * t, (-L, L), n)
    ev = KernelEvaluator(stieltjes_recurrence(w, n), w, n)
    t, s = RNG.uniform(-0.9, 0.9, (2, 30))
    ref = cd_kernel(ev, t, s)
    got = shifted_hermite_kernel(p, eta, n, t, s)
    big = np.abs(ref) > 1e-3 * np.max(np.abs(ref))
    assert np.max(np.abs(got - ref)[big] / np.abs(ref[big])) < 1e-6
    # unweighted kernels differ from the translated ones by a constant
    lw = w.log_weight
    unw = ref * np.exp(-0.5 * (lw(t) + lw(s)))
    assert np.allclose(shifted_hermite_kernel(p, eta, n, t, s, weighted=False), unw, rtol=1e-6)
    assert unweighted_shift_factor(p, eta, n) != pytest.approx(printed_shift_factor(p, eta, n), rel=1e-3)


def test_shifted_density_peak_moves_by_delta():
    p, n, eta = MixtureGaussianParams(1.0, 1.0), 4, 3.0
    grid = np.linspace(-1, 1, 200001)
    base = shifted_hermite_kernel(p, 0.0, n, grid, grid)
    moved = shifted_hermite_kernel(p, eta, n, grid, grid)
    step = grid[1] - grid[0]
    assert abs(grid[np.argmax(moved)] - grid[np.argmax(base)] - p.shift(eta, n)) <= step


# ---- sine kernel --------------------------------------------------------
def test_sine_kernel_values():
    assert sine_kernel(0.0) == 1.0
    assert np.allclose(sine_kernel(np.array([1.0, -2.0, 3.0])), 0.0, atol=1e-15)
    assert sine_kernel(0.5) == pytest.approx(2 / math.pi)


def test_sine_det_values():
    assert sine_det([0.3]) == 1.0
    assert sine_det([0.0, 1.0]) == pytest.approx(1.0)
    assert abs(sine_det([0.2, 0.2])) < 1e-15
    pts = RNG.uniform(-3, 3, (100, 3))
    vals = [sine_det(p) for p in pts]
    assert min(vals) >= -1e-12 and max(vals) <= 1 + 1e-12


# ---- rescaled kernel ----------------------------------------------------
def test_rescaled_error_gaussian_and_degenerate_box():
    V = quadratic_field(1.0)
    mu = solve_equilibrium(V).measure
    ev = gaussian_evaluator(1.0, 100)
    assert rescaled_kernel_error(ev, mu, 0.0, 2.0, 21) < 0.05
    e0 = rescaled_kernel_error(ev, mu, 0.0, 0.0, 1)
    assert e0 == pytest.approx(abs(ev.diag(np.array(0.0)) / (100 * mu.density_at(0.0)) - 1), abs=1e-14)


def test_rescaled_error_decreases_quartic():
    V = quartic_field(0.0)
    sol = solve_equilibrium(V)
    errs = [rescaled_kernel_error(evaluator_for_field(V, n, 1.5 * sol.endpoint), sol.measure, 0.0, 2.0, 21)
            for n in (25, 50, 100)]
    assert errs[0] > errs[1] > errs[2]


def test_rescaled_error_edge():
    sol = solve_equilibrium(quadratic_field(1.0))
    ev = gaussian_evaluator(1.0, 25)
    with pytest.raises(EdgeTooClose):
        rescaled_kernel_error(ev, sol.measure, 1.35, 2.0, 11)
    with pytest.raises(EdgeTooClose):
        rescaled_kernel_error(ev, sol.measure, 2.0, 2.0, 11)
