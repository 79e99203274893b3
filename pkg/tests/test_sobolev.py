import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soblab import DegenerateInputError
from soblab.constants import eucl_constant, unit_sphere_volume
from soblab.grids import build_custom_grid, build_sphere_model, dirichlet_energy, lp_norm
from soblab.sobolev import (
    SobolevConstantEstimator,
    TruncationError,
    alpha_p_value,
    avr_lower_bound_from_sobolev,
    bliss_quotient,
    linearization_check,
    optimize_aopt,
    sobolev_quotient,
    tight_sobolev_check,
)
from soblab.spectral import spectral_gap

I4 = build_sphere_model(4, 1024)


def test_quotient_of_constant_is_degenerate():
    with pytest.raises(DegenerateInputError):
        sobolev_quotient(I4.function(np.full(1024, 2.0)), 3)


def test_quotient_at_q_equal_two_vanishes():
    assert sobolev_quotient(I4.evaluate(np.cos), 2) == 0.0


def test_quotient_requires_unit_mass():
    x = np.linspace(0, 1, 50)
    g = build_custom_grid(x, np.full_like(x, 2.0))
    with pytest.raises(ValueError):
        sobolev_quotient(g.evaluate(lambda t: t), 3)


def test_near_constant_limit_is_linearised_value():
    # Q(1 + eps cos) -> (q - 2) ||cos||^2 / ||cos'||^2 = (q - 2) / N
    for q in (2.5, 3.0, 4.0):
        val = sobolev_quotient(I4.evaluate(lambda t: 1 + 1e-6 * np.cos(t)), q)
        assert val == pytest.approx((q - 2) / 4, rel=1e-4)


@settings(max_examples=40, deadline=None)
@given(c=st.floats(1e-3, 1e3), q=st.floats(2.1, 4.0), a=st.floats(0.05, 2.0))
def test_quotient_is_scale_invariant(c, q, a):
    u = I4.evaluate(lambda t: 1 + a * np.cos(t) + 0.3 * a * np.sin(2 * t))
    assert sobolev_quotient(u * c, q) == pytest.approx(sobolev_quotient(u, q), rel=1e-9)


def test_optimizer_value_is_reevaluated_argmax_and_above_gap_bound():
    g = build_sphere_model(4, 512)
    rep = optimize_aopt(g, 3.0, n_restarts=2, max_iter=1500, seed=1)
    assert rep.value == pytest.approx(sobolev_quotient(rep.argmax, 3.0), rel=1e-12)
    assert rep.value >= (3.0 - 2) / spectral_gap(g).lam * (1 - 1e-6)
    assert rep.value <= 0.25 * 1.001 + 1e-4
    assert len(rep.restart_values) == 2


def test_optimizer_rejects_bad_exponents():
    with pytest.raises(ValueError):
        optimize_aopt(I4, 2.0)
    with pytest.raises(ValueError):
        optimize_aopt(I4, 4.5)  # 2* = 4 on I_4


def test_estimator_wrapper():
    g = build_sphere_model(3, 256)
    est = SobolevConstantEstimator(q=3.0, n_restarts=1, max_iter=500).fit(g)
    assert est.value_ > 0
    assert est.score(est.maximizer_) == pytest.approx(est.value_, rel=1e-12)


def test_bliss_quotient_matches_sharp_constant():
    val = bliss_quotient(1.0, 3, 2, R_max=200, n_nodes=20000)
    assert val == pytest.approx(eucl_constant(3, 2), rel=1e-4)


def test_bliss_quotient_N4_and_b_invariance():
    ref = eucl_constant(4, 2)
    vals = [bliss_quotient(b, 4, 2, R_max=400, n_nodes=40000) for b in (0.5, 1.0, 2.0)]
    for v in vals:
        assert v == pytest.approx(ref, rel=1e-4)


def test_bliss_truncation_error():
    with pytest.raises(TruncationError) as info:
        bliss_quotient(1.0, 3, 2, R_max=5, n_nodes=2000)
    assert info.value.suggested_R_max > 5


def test_alpha_p_examples():
    N = 4
    assert alpha_p_value(1 / unit_sphere_volume(N + 1), N, 2) == pytest.approx(
        (4 - 2) / N, rel=1e-10
    )
    assert alpha_p_value(math.inf, 3, 2) == 0.0
    with pytest.raises(ValueError):
        alpha_p_value(0.0, 3, 2)


def test_avr_lower_bound_examples():
    A = eucl_constant(3, 2)
    assert avr_lower_bound_from_sobolev(A, 3, 2) == pytest.approx(1.0, rel=1e-14)
    assert avr_lower_bound_from_sobolev(2 * A, 3, 2) == pytest.approx(1 / 8, rel=1e-14)
    with pytest.raises(ValueError):
        avr_lower_bound_from_sobolev(0.0, 3, 2)


def test_linearization_order_and_limit():
    g = build_sphere_model(4, 2048)
    rep = linearization_check(g, g.evaluate(np.cos), 3.0, [1e-1, 1e-2, 1e-3, 1e-4])
    assert rep["rhs"] == pytest.approx(0.25, rel=1e-5)
    assert rep["order"] >= 0.8 * rep["predicted_order"]
    assert rep["defect"][-1] < rep["defect"][0]


def test_linearization_rejects_bad_input():
    g = build_sphere_model(4, 256)
    with pytest.raises(ValueError):
        linearization_check(g, g.evaluate(lambda t: 1 + np.cos(t)), 3.0, [1e-2])
    with pytest.raises(ValueError):
        linearization_check(g, g.evaluate(np.cos), 3.0, [10.0])
    with pytest.raises(DegenerateInputError):
        linearization_check(g, g.function(np.zeros(256)), 3.0, [1e-2])


def test_tight_check_passes_above_and_fails_below_optimal_constant():
    g = build_sphere_model(4, 256)
    ok = tight_sobolev_check(g, 4.0, 0.5 * 1.01, trials=50, optimizer_restarts=1)
    assert ok["passed"] and ok["violations"] == 0
    bad = tight_sobolev_check(g, 4.0, 0.45, trials=50, optimizer_restarts=1)
    assert not bad["passed"]
    u = bad["witness"]
    assert lp_norm(u, 4) ** 2 > 0.45 * dirichlet_energy(u) + lp_norm(u, 2) ** 2
