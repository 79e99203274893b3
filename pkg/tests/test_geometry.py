import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soblab.constants import unit_ball_volume, unit_sphere_volume
from soblab.geometry import (
    DiscreteMMS,
    ModelViolationError,
    avr_estimate,
    ball_mass,
    brunn_minkowski_check,
    density_profile,
    isoperimetric_constant,
    local_sobolev_check,
    minkowski_content,
    perimeter_superlevel,
)
from soblab.grids import build_cone_model, build_custom_grid, build_sphere_model


def path_space(n=5):
    return DiscreteMMS.from_dict({"n": n, "edges": [[i, i + 1, 1.0] for i in range(n - 1)], "mass": [1.0] * n})


def test_mms_from_edges_completes_distances():
    sp = path_space()
    assert sp.distance[0, 4] == 4.0
    assert sp.total_mass == 5.0


def test_mms_validation():
    with pytest.raises(ValueError):
        DiscreteMMS(np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0]], float), [1, 1, 1])
    with pytest.raises(ValueError):
        DiscreteMMS(np.array([[0, 1], [2, 0]], float), [1, 1])
    with pytest.raises(ValueError):
        DiscreteMMS(np.zeros((2, 2)), [1, 0])
    with pytest.raises(ValueError):
        DiscreteMMS.from_dict({"n": 3, "edges": [[0, 1, 1.0]], "mass": [1, 1, 1]})
    # validation can be skipped for trusted input
    DiscreteMMS(np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0]], float), [1, 1, 1], validate=False)


def test_mms_json(tmp_path):
    path = tmp_path / "mms.json"
    path.write_text(json.dumps({"distance": [[0, 2], [2, 0]], "mass": [0.5, 0.5]}))
    assert DiscreteMMS.from_json(path).distance[0, 1] == 2.0


def test_ball_mass_is_open_ball():
    sp = path_space()
    assert ball_mass(sp, 2, 1.0) == 1.0
    assert ball_mass(sp, 2, 1.0 + 1e-12) == 3.0
    assert np.allclose(ball_mass(sp, 0, np.array([0.5, 2.5, 10])), [1, 3, 5])
    with pytest.raises(ValueError):
        ball_mass(sp, 7, 1.0)
    with pytest.raises(ValueError):
        ball_mass(sp, 0, -1.0)


def test_ball_mass_on_grid():
    g = build_cone_model(3, 2.0, 200)
    assert ball_mass(g, 0.0, 1.0) == pytest.approx(unit_ball_volume(3), rel=1e-12)
    g = build_sphere_model(3, 1024)
    assert ball_mass(g, math.pi / 2, 10.0) == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("N", [2, 3, 4.5])
def test_density_at_model_tip(N):
    prof = density_profile(build_sphere_model(N, 4096), 0.0, N)
    assert prof.theta_0_estimate * unit_sphere_volume(N + 1) == pytest.approx(1.0, rel=1e-3)


def test_density_is_infinite_at_interior_point():
    prof = density_profile(build_sphere_model(3, 4096), math.pi / 2, 3)
    assert math.isinf(prof.theta_0_estimate)
    assert prof.to_dict()["theta_0_estimate"] == "infinite"


def test_density_profile_rejects_bad_radii():
    g = build_sphere_model(3, 256)
    with pytest.raises(ValueError):
        density_profile(g, 0.0, 3, radii=[0.2, 0.1])


def test_avr_on_cone_and_custom_weight():
    assert avr_estimate(build_cone_model(3, 50.0, 2000))["avr"] == pytest.approx(1.0, rel=1e-9)
    x = np.linspace(0, 4000, 40001)
    a = 0.3
    sig = unit_sphere_volume(3)
    w = sig * x**2 * (a + (1 - a) * np.exp(-x))
    g = build_custom_grid(x, lambda t: sig * t**2 * (a + (1 - a) * np.exp(-t)), endpoint_powers=(2.0, 0.0), N=3, unbounded=True)
    assert avr_estimate(g, N=3)["avr"] == pytest.approx(a, rel=1e-4)
    del w


def test_avr_flags_growing_ratio():
    x = np.linspace(0, 10, 2001)
    g = build_custom_grid(x, lambda t: t**3, endpoint_powers=(3.0, 0.0), unbounded=True)
    with pytest.raises(ModelViolationError):
        avr_estimate(g, N=3)


def test_avr_needs_unbounded_model():
    with pytest.raises(ValueError):
        avr_estimate(build_sphere_model(3, 128), N=3)


def test_perimeter_of_superlevel_sets():
    g = build_sphere_model(3, 2048)
    u = g.evaluate(np.cos)
    c = math.pi / 2
    # {cos > 0} = [0, pi/2): one boundary point with density sin^2(pi/2)/c_3
    assert perimeter_superlevel(g, u, 0.0) == pytest.approx(1 / c, rel=1e-9)
    cone = build_cone_model(3, 1.0, 100)
    assert perimeter_superlevel(cone, cone.function(np.ones(100)), 0.5) == pytest.approx(4 * math.pi, rel=1e-12)
    with pytest.raises(ValueError):
        perimeter_superlevel(g, g.function(np.zeros(2048)), 0.0)


def test_minkowski_content_of_interval():
    g = build_sphere_model(3, 4096)
    rep = minkowski_content(g, (1.0, 2.0), [1e-2, 1e-3, 1e-4])
    exact = (math.sin(1.0) ** 2 + math.sin(2.0) ** 2) / (math.pi / 2)
    assert rep["estimates"][-1] == pytest.approx(exact, rel=1e-3)
    with pytest.raises(ValueError):
        minkowski_content(g, (1.0, 2.0), [1e-3, 1e-2])


def test_minkowski_content_on_mms():
    rep = minkowski_content(path_space(), [0], [1.5, 1.0 + 1e-9])
    assert rep["mass"] == 1.0
    assert rep["estimates"][0] == pytest.approx(1 / 1.5)


def test_isoperimetric_constant_of_euclidean_cone():
    rep = isoperimetric_constant(build_cone_model(3, 5.0, 2000), N=3)
    assert rep["C_isop"] == pytest.approx(3 * unit_ball_volume(3) ** (1 / 3), rel=1e-6)
    assert rep["two_interval_upper_bound"] <= rep["C_isop"] * (1 + 1e-12)


def test_brunn_minkowski_on_model_and_failure_on_bad_weight():
    g = build_sphere_model(3, 2048)
    rng = np.random.default_rng(0)
    for _ in range(50):
        a0, a1 = np.sort(rng.uniform(0, math.pi, 2)), np.sort(rng.uniform(0, math.pi, 2))
        rep = brunn_minkowski_check(g, a0, a1, rng.uniform(), 2.0, 3)
        assert rep["passed"]
    x = np.linspace(0, 1, 4001)
    bad = build_custom_grid(x, lambda t: 1 - 0.99 * np.exp(-(((t - 0.5) / 0.05) ** 2)))
    rep = brunn_minkowski_check(bad, (0.0, 0.1), (0.9, 1.0), 0.5, 0.0, 2)
    assert not rep["passed"] and rep["status"] == "fail"


def test_brunn_minkowski_vacuous_beyond_diameter():
    g = build_sphere_model(3, 512)
    rep = brunn_minkowski_check(build_cone_model(3, 10.0, 512), (0, 0.5), (9.5, 10), 0.5, 2.0, 3)
    assert rep["vacuous"] and rep["passed"]
    del g


def test_local_sobolev_on_cone():
    g = build_cone_model(3, 4.0, 4000)
    rep = local_sobolev_check(g, 0.0, 1.0, 2.0, 3, trials=100)
    assert rep["passed"] and 0.5 < rep["tightness"] <= 1 + 1e-9
    assert rep["regime"] == "inside theorem regime"
    rep = local_sobolev_check(g, 0.0, 1.0, 2.0, 3, trials=10, delta=0.1)
    assert rep["regime"] == "outside theorem regime"
    with pytest.raises(ValueError):
        local_sobolev_check(g, 0.0, 2.0, 1.0, 3)


@settings(max_examples=30, deadline=None)
@given(x=st.floats(0.0, math.pi), r1=st.floats(0.01, 2.0), r2=st.floats(0.01, 2.0))
def test_bishop_gromov_monotonicity_on_model(x, r1, r2):
    # m(B_r(x)) / v_{N-1,N}(r) is non-increasing on the model space
    from soblab.constants import comparison_volume

    g = build_sphere_model(3, 1024)
    lo, hi = sorted((r1, r2))
    if hi - lo < 1e-3:
        return
    f = [ball_mass(g, x, r) / comparison_volume(2.0, 3, r) for r in (lo, hi)]
    assert f[1] <= f[0] * (1 + 1e-6)
