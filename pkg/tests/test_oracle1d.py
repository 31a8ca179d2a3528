import math

import numpy as np
import pytest

from helmsense import oracle1d as o
from helmsense.errors import ConfigError, DomainError

CFG = o.Oracle1DConfig(2.0, 0.1)


def outside(r, n=100):
    x = np.linspace(r, 1.0, n // 2)
    return np.concatenate([-x, x])


def test_singular_wavenumbers_rejected():
    for k in (math.pi / 2, math.pi, -1.0):
        with pytest.raises(ConfigError):
            o.Oracle1DConfig(k)
    with pytest.raises(ConfigError):
        o.Oracle1DConfig(2.0, 1.5)
    with pytest.raises(ConfigError):
        o.Oracle1DConfig(2.0, tracking="none")


@pytest.mark.parametrize("tracking", ["matched", "linear"])
def test_ode_residuals(tracking):
    cfg = o.Oracle1DConfig(2.0, 0.1, tracking)
    assert o.ode_residual(cfg, "eta0", np.linspace(-1, 1, 100)).max() <= 1e-10
    assert o.ode_residual(cfg, "eta_r", outside(cfg.r)).max() <= 1e-10
    assert o.ode_residual(cfg, "extension", np.linspace(-cfg.r, cfg.r, 100)).max() <= 1e-10
    assert o.adjoint_residual(cfg, np.linspace(-1, 1, 100)).max() <= 1e-10


def test_boundary_conditions():
    ends = np.array([-1.0, 1.0])
    hole = np.array([-CFG.r, CFG.r])
    assert np.abs(o.eta0_exact(CFG, ends)).max() <= 1e-12
    assert np.abs(o.eta_r_exact(CFG, ends)).max() <= 1e-12
    assert np.abs(o.eta_r_exact(CFG, hole)).max() <= 1e-12
    assert np.abs(o.extension_exact(CFG, hole)).max() <= 1e-12
    assert np.abs(o.p0_exact(CFG, ends)[0]).max() <= 1e-12


def test_derivatives_match_finite_differences():
    x = outside(CFG.r, 20) * 0.9 + np.sign(outside(CFG.r, 20)) * 0.05
    h = 1e-6
    fd = (o.eta_r_exact(CFG, x + h) - o.eta_r_exact(CFG, x - h)) / (2 * h)
    assert np.allclose(fd, o.eta_r_prime(CFG, x), atol=1e-8)
    fd = (o.p0_exact(CFG, x + h)[0] - o.p0_exact(CFG, x - h)[0]) / (2 * h)
    assert np.allclose(fd, o.p0_exact(CFG, x)[1], atol=1e-8)
    xi = np.linspace(-0.09, 0.09, 7)
    fd = (o.w_exact(CFG, xi + h) - o.w_exact(CFG, xi - h)) / (2 * h)
    assert np.allclose(fd, o.w_prime(CFG, xi), atol=1e-8)


def test_hole_state_is_undefined_inside_the_hole():
    with pytest.raises(DomainError):
        o.eta_r_exact(CFG, np.array([0.0]))


def test_corrector_is_continuous_and_vanishes_outside_limit():
    x = np.array([-CFG.r, CFG.r])
    assert np.allclose(o.w_exact(CFG, x), o.extension_exact(CFG, x) - o.eta0_exact(CFG, x), atol=1e-14)


def test_corrector_norms_against_dense_trapezoid():
    l2, h1, inner = o.corrector_norms(CFG)
    x = np.concatenate([np.linspace(-1, -CFG.r, 200001), np.linspace(CFG.r, 1, 200001)])
    half = len(x) // 2
    trap = lambda y: np.trapezoid(y[:half], x[:half]) + np.trapezoid(y[half:], x[half:])
    assert l2 == pytest.approx(trap(o.w_exact(CFG, x) ** 2), rel=1e-8)
    assert h1 == pytest.approx(trap(o.w_prime(CFG, x) ** 2), rel=1e-8)
    xi = np.linspace(-CFG.r, CFG.r, 200001)
    assert inner == pytest.approx(np.trapezoid(o.w_exact(CFG, xi) ** 2, xi), rel=1e-8)


def test_printed_l1_chain_is_zero():
    for r in (0.2, 0.1, 0.05, 0.025):
        assert o.printed_l1(o.Oracle1DConfig(2.0, r)) == 0.0


def test_endpoint_l1_tends_to_minus_product_of_slopes():
    # w(+-r) = -eta0(+-r), eta0 odd and p0' even, so l1 -> -p0'(0) eta0'(0)
    k = 2.0
    a = CFG.amplitude
    deta = -1 / (k * math.sin(k)) + 1 / k ** 2
    dp = a / (2 * k) - a / (2 * math.tan(k))
    limit = -dp * deta
    assert o.l1_exact(o.Oracle1DConfig(k, 1e-3)) == pytest.approx(limit, rel=1e-4)
    assert limit != 0.0


def test_series_report_flags_disagreements():
    rep = o.remainder_series_exact(CFG, [0.2, 0.1, 0.05, 0.025])
    assert [row.r for row in rep.rows] == [0.2, 0.1, 0.05, 0.025]
    assert all(row.R == row.l0 + row.l1 for row in rep.rows)
    assert rep.claims_divergence
    assert rep.trend == "converged" and not rep.agrees_with_divergence_claim
    assert rep.limit == pytest.approx(0.2354, abs=5e-3)
    assert rep.display_disagreement and rep.l1_disagreement
    # the norm part of R vanishes with r
    assert rep.rows[-1].l0 < rep.rows[0].l0
