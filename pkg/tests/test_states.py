import math

import numpy as np
import pytest

from helmsense import fem, oracle1d, states
from helmsense.errors import ConfigError, MeshError
from helmsense.geometry import Domain, RectifiableSet, TransportMap, rotation_field
from helmsense.mesh import generate_mesh, hole_meshes

I1 = Domain.interval(-1, 1)
UNIT = Domain.rectangle((0, 0), (1, 1))


def _eta0_err(cfg, h):
    m = generate_mesh(I1, h)
    eta = states.solve_direct(m, states.example_1d(cfg.k, tracking=cfg.tracking))
    return fem.error_norms(eta, lambda X: oracle1d.eta0_exact(cfg, X[:, 0]),
                           lambda X: oracle1d.eta0_prime(cfg, X[:, 0])[:, None])


@pytest.mark.parametrize("fn", [
    states.quadratic([[1.0, 0.3], [0.3, -0.5]], [0.2, -0.1], 1.0),
    states.sine_product(2, 2.0, 0.4, shift=0.1),
    states.linear([1.0, -2.0], 0.5),
], ids=lambda f: f.name)
def test_preset_gradients(fn):
    pts = np.random.default_rng(0).uniform(0, 1, size=(10, 2))
    assert fn.check_gradient(pts) < 1e-6


def test_1d_presets():
    x = np.linspace(-1, 1, 7)[:, None]
    assert np.allclose(states.ramp_source_1d()(x), -x[:, 0])
    assert np.allclose(states.eta_d_linear(2.0)(x), x[:, 0] / 4)
    for fn in (states.eta_d_matched(2.0), states.sine_1d(0.3, 2.0)):
        assert fn.check_gradient(x) < 1e-6


def test_data_validation():
    with pytest.raises(ConfigError):
        states.ProblemData(-1.0, states.zero(1), states.zero(1), states.zero(1))
    with pytest.raises(ConfigError):
        states.ProblemData(1.0, states.zero(1), states.zero(2), states.zero(1))
    d = states.example_1d(2.0)
    assert d.with_gamma(0.5).gamma == 0.5 and d.gamma == 1.0
    assert d.check(I1) < 1e-6


def test_direct_state_converges_to_closed_form():
    cfg = oracle1d.Oracle1DConfig(2.0)
    e = [_eta0_err(cfg, h) for h in (2.0 ** -4, 2.0 ** -6)]
    # 16x smaller in L2, 4x smaller in H1 over two halvings
    assert e[0][0] / e[1][0] == pytest.approx(16, rel=0.1)
    assert e[0][1] / e[1][1] == pytest.approx(4, rel=0.1)
    assert e[1][0] < 2e-4


@pytest.mark.parametrize("tracking", ["matched", "linear"])
def test_adjoint_converges_to_closed_form(tracking):
    cfg = oracle1d.Oracle1DConfig(2.0, tracking=tracking)
    data = states.example_1d(2.0, tracking=tracking)
    m = generate_mesh(I1, 2.0 ** -8)
    p = states.solve_adjoint(m, data, states.solve_direct(m, data))
    l2, h1 = fem.error_norms(p, lambda X: oracle1d.p0_exact(cfg, X[:, 0])[0],
                             lambda X: oracle1d.p0_exact(cfg, X[:, 0])[1][:, None])
    scale = fem.norms(p)
    assert l2 < 1e-3 * scale[0] and h1 < 2e-2 * scale[1]


def test_pullback_at_zero_is_the_direct_solve():
    m = generate_mesh(UNIT, 0.1)
    data = states.ProblemData(2.0, states.constant(1.0, 2), states.zero(2), states.zero(2))
    tm = TransportMap(rotation_field((0.4, 0.3), 1.0))
    a = states.solve_direct(m, data)
    b = states.solve_direct_pullback(m, data, tm, 0.0)
    assert np.array_equal(a.values, b.values)


def test_trivial_data_gives_zero_states():
    m = generate_mesh(UNIT, 0.2)
    data = states.trivial_data(2, 2.0)
    eta = states.solve_direct(m, data)
    assert np.all(eta.values == 0)
    assert np.all(states.solve_adjoint(m, data, eta).values == 0)


def test_perfect_match_has_zero_adjoint():
    m = generate_mesh(I1, 2.0 ** -6)
    data = states.example_1d(2.0)
    eta = states.solve_direct(m, data)
    f = states.from_field(eta)
    matched = states.ProblemData(2.0, data.f, f, f)
    p = states.solve_adjoint(m, matched, eta)
    assert np.max(np.abs(p.values)) < 1e-10


def test_indicator_load_integrates_dilation():
    m = generate_mesh(I1, 0.1)
    one = lambda P: np.ones(len(P))
    # E_r = (0.33, 0.57): clipped exactly inside the cut elements
    assert states.indicator_load(m, one, RectifiableSet.point([0.45]), 0.12).sum() == pytest.approx(0.24, abs=1e-14)
    m2 = generate_mesh(UNIT, 0.05)
    area = states.indicator_load(m2, one, RectifiableSet.point([0.52, 0.47]), 0.15).sum()
    assert area == pytest.approx(math.pi * 0.15 ** 2, rel=1e-2)


def test_source_perturbation_with_gamma_one_is_unperturbed():
    m = generate_mesh(I1, 2.0 ** -6)
    data = states.example_1d(2.0, A=0.5)
    a = states.solve_direct(m, data)
    b = states.solve_source_perturbed(m, data, RectifiableSet.point([0.5]), 0.1)
    assert np.allclose(a.values, b.values, atol=1e-14)


def test_hole_state_matches_closed_form():
    cfg = oracle1d.Oracle1DConfig(2.0, r=0.25)
    outer = hole_meshes(I1, 2.0 ** -8, RectifiableSet.point([0.0]), 0.25)[0]
    eta = states.solve_hole(outer, states.example_1d(2.0))
    exact = oracle1d.eta_r_exact(cfg, outer.nodes[:, 0])
    assert np.max(np.abs(eta.values - exact)) < 1e-4
    with pytest.raises(ConfigError):
        states.solve_hole(outer, states.example_1d(2.0), bc="robin")
    with pytest.raises(MeshError):
        states.solve_hole(generate_mesh(I1, 0.1), states.example_1d(2.0))


def test_extension_into_hole_matches_closed_form():
    cfg = oracle1d.Oracle1DConfig(2.0, r=0.25)
    data = states.example_1d(2.0)
    outer, inner, full = hole_meshes(I1, 2.0 ** -8, RectifiableSet.point([0.0]), 0.25)
    ext = states.extend_into_hole(states.solve_hole(outer, data), inner, data, full)
    x = full.nodes[:, 0]
    inside = np.abs(x) <= 0.25
    exact = np.where(inside, oracle1d.extension_exact(cfg, x), oracle1d.eta_r_exact(cfg, np.where(inside, 1.0, x)))
    assert np.max(np.abs(ext.values - exact)) < 1e-4


def test_transfer_by_matching_nodes_is_exact():
    outer, _, full = hole_meshes(I1, 2.0 ** -5, RectifiableSet.point([0.0]), 0.25)
    f = fem.interpolate(full, lambda X: np.cos(3 * X[:, 0]))
    g = states.transfer(f, outer)
    assert np.array_equal(g.values, np.cos(3 * outer.nodes[:, 0]))
