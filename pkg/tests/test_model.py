import numpy as np
import pytest

import mckeanflow as mk
from mckeanflow import Interaction, ModelConfig, ModelError, Potential


def test_double_well_values():
    p = Potential.double_well()
    assert p.value(0.0) == 0.0
    assert p.value(1.0) == pytest.approx(-0.25)
    assert p.grad(1.0) == pytest.approx(0.0, abs=1e-15)
    assert p.hess(0.0) == pytest.approx(-1.0)
    assert p.hess(1.0) == pytest.approx(2.0)


def test_potential_gradient_matches_finite_differences():
    h = 1e-6
    xs = np.linspace(-3.0, 3.0, 61)
    for p in (Potential.double_well(), Potential.quadratic(),
              Potential.polynomial([0.0, 0.3, -0.5, 0.0, 0.25])):
        fd = (p.value(xs + h) - p.value(xs - h)) / (2 * h)
        scale = np.maximum(1.0, np.abs(p.grad(xs)))
        assert np.max(np.abs(p.grad(xs) - fd) / scale) <= 1e-6


def test_hess_inf_refines_to_stable_value():
    # the reported infimum is a lower bound, tight to the refinement tol
    p = Potential.double_well()
    # 3x^2 - 1 has minimum -1 at 0
    b = p.hess_inf(-2.0, 2.0)
    assert -1.0 - 5e-6 <= b <= -1.0 + 1e-12
    assert p.hess_inf(0.5, 2.0) == pytest.approx(3 * 0.25 - 1, abs=5e-6)
    assert p.hess_inf_global() == pytest.approx(-1.0, abs=5e-6)


def test_multi_well_is_sum_of_shifted_quartics():
    # one well pair ((x-a)^2 - r^2)^2 centered at 0: minima at +-r
    p = Potential.multi_well([(1.0, 0.0, 1.5)])
    xs = np.linspace(-3, 3, 41)
    assert np.allclose(p.value(xs), p.value(-xs), atol=1e-12)
    assert p.hess_inf_global() < 0  # barrier between the minima
    assert p.grad(1.5) == pytest.approx(0.0, abs=1e-12)
    assert p.grad(-1.5) == pytest.approx(0.0, abs=1e-12)
    # shifted pair keeps its critical points at center +- radius
    q = Potential.multi_well([(0.5, 0.7, 1.0)])
    assert q.grad(1.7) == pytest.approx(0.0, abs=1e-12)
    assert q.grad(-0.3) == pytest.approx(0.0, abs=1e-12)


def test_polynomial_rejects_bad_leading_term():
    with pytest.raises(ModelError):
        Potential.polynomial([0.0, 0.0, 0.0, 1.0])  # odd leading power
    with pytest.raises(ModelError):
        Potential.polynomial([0.0, 0.0, 0.0, 0.0, -1.0])  # negative leading


def test_interaction_kernel_symmetric():
    w = Interaction(theta=0.7)
    rng = np.random.default_rng(5)
    for _ in range(20):
        x, y = rng.normal(size=2)
        assert w.kernel(x, y) == w.kernel(y, x)
        assert w.kernel(x, y) == pytest.approx(0.7 * (x - y) ** 2)


def test_model_config_validation():
    with pytest.raises(ModelError):
        mk.standard_model(1.0, -0.1)
    with pytest.raises(ModelError):
        mk.standard_model(1.0, 0.0)
    m = mk.standard_model(1.0, 0.5)
    assert m.theta == 1.0
    assert m.with_sigma2(0.25).sigma2 == 0.25
    assert m.with_sigma2(0.25).theta == m.theta


# ---- drift -------------------------------------------------------------------


def test_drift_at_origin_is_zero():
    m = mk.standard_model(1.0, 0.3)
    assert mk.drift(m, 0.0, 0.0) == 0.0


def test_drift_double_well_at_one():
    # V'(1) = 0, so the interaction term is everything
    m = mk.standard_model(1.0, 0.3)
    assert mk.drift(m, 1.0, 0.0) == pytest.approx(-2.0)


def test_drift_pure_confinement():
    m = mk.standard_model(0.0, 1.0, potential=Potential.quadratic())
    # mean is irrelevant at theta=0
    assert mk.drift(m, 2.0, 5.0) == pytest.approx(-2.0)


def test_drift_odd_about_zero_mean(dw03):
    xs = np.linspace(-3, 3, 101)
    d = mk.drift(dw03, xs, 0.0)
    d_neg = mk.drift(dw03, -xs, 0.0)
    assert np.max(np.abs(d + d_neg)) == 0.0


# ---- per-measure potential ---------------------------------------------------


def test_mean_field_potential_no_interaction():
    m = mk.standard_model(0.0, 1.0)
    assert mk.mean_field_potential(m, 1.0, 3.0, 10.0) == pytest.approx(-0.25)


def test_mean_field_potential_with_interaction(dw03):
    v = mk.mean_field_potential(dw03, 0.0, 0.0, 1.0)
    assert v == pytest.approx(1.0)


def test_mean_field_potential_rejects_bad_moments(dw03):
    with pytest.raises(ModelError):
        mk.mean_field_potential(dw03, 0.0, mean=2.0, second_moment=1.0)


def test_mean_field_potential_slope_is_minus_drift(dw03):
    h = 1e-6
    xs = np.linspace(-3, 3, 121)
    mean, m2 = 0.4, 1.1
    fd = (mk.mean_field_potential(dw03, xs + h, mean, m2)
          - mk.mean_field_potential(dw03, xs - h, mean, m2)) / (2 * h)
    target = -mk.drift(dw03, xs, mean)
    assert np.max(np.abs(fd - target) / np.maximum(1, np.abs(target))) <= 1e-6


# ---- mean-field energy -------------------------------------------------------


def test_mean_field_energy_gaussian_quadratic():
    m = mk.standard_model(0.0, 1.0, potential=Potential.quadratic())
    rho = mk.DensityGrid1D.gaussian(-8, 8, 2048, 0.0, 1.0)
    assert mk.mean_field_energy(m, rho) == pytest.approx(0.5, abs=1e-3)


def test_mean_field_energy_narrow_bump_limit(dw03):
    vals = []
    for std in (0.1, 0.05, 0.025):
        rho = mk.DensityGrid1D.gaussian(-4, 4, 4096, 0.0, std)
        vals.append(abs(mk.mean_field_energy(dw03, rho)))
    # approaches V(0) = 0 as the bump narrows
    assert vals[2] < vals[0]
    assert vals[2] < 2e-3


def test_interaction_energy_equals_theta_times_variance(dw03):
    rho = mk.DensityGrid1D.gaussian_mixture(
        -5, 5, 2048, [(0.5, -1.2, 0.4), (0.5, 1.2, 0.4)])
    e_full = mk.mean_field_energy(dw03, rho)
    e_conf = mk.mean_field_energy(dw03.with_sigma2(dw03.sigma2), rho)
    zero_theta = mk.standard_model(0.0, 0.3)
    e_v = mk.mean_field_energy(zero_theta, rho)
    assert e_full - e_v == pytest.approx(dw03.theta * rho.variance(), rel=1e-10)
    assert e_full == pytest.approx(e_conf)


def test_mean_field_energy_rejects_unnormalized(dw03):
    rho = mk.DensityGrid1D.gaussian(-4, 4, 256, 0.0, 0.5)
    bad = mk.DensityGrid1D(-4, 4, 256, rho.values * 2.0)
    with pytest.raises(ValueError):
        mk.mean_field_energy(dw03, bad)


def test_one_sided_lipschitz_bound(dw03):
    # 2(E'(x) - E'(y))(x - y) >= -kappa1 |x-y|^2 with
    # kappa1 = 2 max(0, -(inf V'' + 2 theta)) = 0 for theta=1
    L, lam, kappa1 = mk.structural_constants(dw03)
    rng = np.random.default_rng(11)
    xs = rng.uniform(-3, 3, size=400)
    ys = rng.uniform(-3, 3, size=400)
    mean, m2 = 0.3, 1.0
    ex = -mk.drift(dw03, xs, mean)
    ey = -mk.drift(dw03, ys, mean)
    lhs = 2 * (ex - ey) * (xs - ys)
    assert np.min(lhs + kappa1 * (xs - ys) ** 2) >= -1e-12
