import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from hypscalar.bubbles import (DEFAULT_SCHEDULE, BubbleEstimate, BubbleSpec, Kind, S_half, boundary_exponent,
                               bubble_integrals, cutoff, energy_threshold_check, estimate, fit_order,
                               level_scalar_model, lifted_fibering, make_bubble, smoothstep, smoothstep_d,
                               sobolev_constant, sobolev_constant_closed_form, talenti, talenti_d, zeta_choice)


def interior(N=5, eps=1e-2, q=0.5, lam=0.0):
    return BubbleSpec(Kind.Interior, N, eps, q, lam)


def test_bubble_center_value():
    for N in (3, 4, 5):
        eps = 0.01
        v = make_bubble(interior(N, eps))
        assert v(np.zeros(N)) == pytest.approx((N * (N - 2)) ** ((N - 2) / 4) * eps ** (-(N - 2) / 2), rel=1e-14)


def test_interior_support():
    spec = interior()
    v = make_bubble(spec)
    x = np.zeros((3, 5))
    x[:, 0] = [2 * spec.rho_cutoff, 0.7, 0.99]
    assert np.all(v(x) == 0)


def test_boundary_geometry():
    spec = BubbleSpec.boundary_default(5, 1e-3, 0.3, 6.0)
    v = make_bubble(spec)
    # outer edge of the support sits eps^gamma from the sphere
    assert 1 - (spec.center_radius + v.support_radius) == pytest.approx(spec.epsilon ** 0.5, rel=1e-12)
    x = np.zeros(5)
    x[0] = spec.center_radius + v.support_radius * 1.0001
    assert v(x) == 0


def test_spec_rejects():
    with pytest.raises(ValueError):
        interior(eps=0.0)
    with pytest.raises(ValueError):
        BubbleSpec(Kind.Boundary, 5, 1e-2, 0.3, 0.0)
    with pytest.raises(ValueError):
        BubbleSpec.boundary_default(5, 0.5, 0.3, 0.0)


def test_profile_derivative():
    s = np.linspace(0.0, 0.5, 11)
    h = 1e-7
    fd = (talenti(s + h, 0.05, 5) - talenti(s - h, 0.05, 5)) / (2 * h)
    assert np.allclose(fd[1:], talenti_d(s, 0.05, 5)[1:], rtol=1e-6)
    t = np.linspace(-0.5, 1.5, 41)
    fd = (smoothstep(t + 1e-7) - smoothstep(t - 1e-7)) / 2e-7
    assert np.allclose(fd, smoothstep_d(t), atol=1e-6)
    assert cutoff(0.1, 0.1) == 1.0 and cutoff(0.2, 0.1) == 0.0


def test_sobolev_closed_form_and_truncation():
    for N in (3, 4, 5, 6):
        S = sobolev_constant(N)
        assert S == pytest.approx(sobolev_constant_closed_form(N), rel=1e-10)
        assert sobolev_constant(N, R=2e4) == pytest.approx(S, rel=1e-6)
    assert sobolev_constant(3) != sobolev_constant(4) and sobolev_constant(3) > 0


@pytest.mark.parametrize("N", [3, 5])
def test_sobolev_equality_case(N):
    """||grad U||^2 / ||U||_{2*}^2 = S for the unit bubble, both sides by scipy quad."""
    ps = 2 * N / (N - 2)
    w = 2 * math.pi ** (N / 2) / math.gamma(N / 2)
    g, _ = quad(lambda s: talenti_d(s, 1.0, N) ** 2 * s ** (N - 1), 0, np.inf, epsrel=1e-12, limit=500)
    l, _ = quad(lambda s: talenti(s, 1.0, N) ** ps * s ** (N - 1), 0, np.inf, epsrel=1e-12, limit=500)
    assert g * w / (l * w) ** (2 / ps) == pytest.approx(sobolev_constant(N), rel=1e-6)
    assert g * w == pytest.approx(S_half(N), rel=1e-6)


def test_interior_grad2_near_limit():
    vals = bubble_integrals(interior(5, 1e-2))
    assert abs(vals["grad2"] / S_half(5) - 1) < 1e-2
    assert abs(vals["lp2star"] / S_half(5) - 1) < 1e-2


def test_n4_log_growth():
    est = estimate(interior(4))
    eps = np.array(est.epsilon_schedule)
    ratio = np.array(est.column("l2")) / (eps ** 2 * np.abs(np.log(eps)))
    # approaches a positive constant: successive changes shrink
    d = np.abs(np.diff(ratio))
    assert ratio.min() > 0 and d[-1] < d[0]
    assert fit_order(est, "l2")[1]


def test_limits_approached_monotonically():
    est = estimate(interior(5))
    for name in ("grad2", "lp2star"):
        dev = np.abs(np.array(est.column(name)) - S_half(5))
        assert np.all(np.diff(dev) < 0)


def test_interior_orders():
    est = estimate(interior(5))
    assert fit_order(est, "grad2")[0] == pytest.approx(3.0, rel=0.15)
    assert fit_order(est, "l2")[0] == pytest.approx(2.0, rel=0.10)
    assert fit_order(est, "weighted_lq")[0] == pytest.approx(2.25, rel=0.10)


def test_boundary_grad2_order():
    spec = BubbleSpec.boundary_default(5, 1e-2, 0.3, 6.0)
    est = estimate(spec)
    target = 3 * (1 - zeta_choice(0.3))
    assert fit_order(est, "grad2")[0] == pytest.approx(target, rel=0.15)


def test_schedule_validation():
    with pytest.raises(ValueError):
        estimate(interior(), schedule=(1e-1, 5e-2, 2e-2))
    with pytest.raises(ValueError):
        estimate(interior(), schedule=(1e-2, 5e-2, 2e-2, 1e-3, 5e-4, 2e-4))


def test_estimate_serialization(tmp_path):
    est = estimate(interior())
    est.to_csv(tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().strip().splitlines()
    assert len(lines) == len(DEFAULT_SCHEDULE) + 1
    back = np.loadtxt(tmp_path / "e.csv", delimiter=",", skiprows=1)
    assert np.array_equal(back[:, 1], est.column("grad2"))
    import json
    summ = json.loads(est.to_json())
    assert summ["fitted_order"]["grad2"] == est.fitted_order["grad2"]
    assert summ["spec"]["kind"] == "Interior"


def test_zeta_and_exponent_identity():
    assert zeta_choice(1 / 3) == pytest.approx(7 / 12, abs=1e-15)
    for q in np.linspace(0.01, 1 / 3, 40):
        assert abs(boundary_exponent(q) - (3 * q + 25) / 24) < 1e-12


def test_exponent_inequalities():
    g = 0.5
    for q in np.linspace(0.01, 1 / 3, 60):
        z = zeta_choice(q)
        assert 2 - 2 * g < 3 * (1 - z)
        assert 2 - 2 * g < (3 * q + 25) / 24


def test_scalar_model():
    assert level_scalar_model(5) == pytest.approx(1 / 5, abs=1e-15)
    t = np.linspace(0.5, 1.5, 10001)
    ps = 10 / 3
    assert np.max(t ** 2 / 2 - t ** ps / ps) == pytest.approx(1 / 5, abs=1e-8)


def test_threshold_check_gates():
    with pytest.raises(ValueError):
        energy_threshold_check(interior(5, q=0.3, lam=6.0))
    with pytest.raises(ValueError):
        energy_threshold_check(BubbleSpec.boundary_default(5, 1e-3, 1.5, 6.0))


def test_fibering_root_unique():
    spec = BubbleSpec.boundary_default(5, 1e-2, 0.3, 6.0)
    vals = bubble_integrals(spec)
    phi, dphi_over_t = lifted_fibering(vals, 5, 0.3, 6.0)
    t = np.logspace(-3, 3, 2000)
    s = np.sign([dphi_over_t(x) for x in t])
    assert np.count_nonzero(np.diff(s)) == 1


@given(st.floats(0.02, 0.33))
def test_prop_zeta_window(q):
    z = zeta_choice(q)
    assert 0.5 < z < 1
