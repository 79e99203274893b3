import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soblab.grids import build_custom_grid, build_sphere_model, dirichlet_energy, lp_norm
from soblab.spectral import SpectralGap, spectral_gap, sturm_count


@pytest.mark.parametrize("N", [2, 3, 5.5])
def test_model_gap_is_dimension(N):
    res = spectral_gap(build_sphere_model(N, 2048))
    assert res.lam == pytest.approx(N, rel=2e-3)
    # eigenfunction is cos t up to scale
    f = res.eigenfunction
    g = f.grid
    c = g.evaluate(np.cos)
    scale = lp_norm(f, 2) / lp_norm(c, 2)
    assert lp_norm(f.with_values(f.values - scale * c.values), 2) <= 1e-3 * lp_norm(f, 2)


def test_gap_on_uniform_interval():
    # weight 1/pi on [0, pi]: Neumann eigenvalues k^2, gap 1
    x = np.linspace(0, math.pi, 2001)
    res = spectral_gap(build_custom_grid(x, np.full_like(x, 1 / math.pi)))
    assert res.lam == pytest.approx(1.0, rel=1e-5)


def test_gap_refinement_converges_quadratically():
    errs = [abs(spectral_gap(build_sphere_model(3, n)).lam - 3) for n in (256, 512, 1024)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.8)


def test_rayleigh_quotient_of_eigenfunction():
    res = spectral_gap(build_sphere_model(4, 512))
    f = res.eigenfunction
    assert dirichlet_energy(f) / lp_norm(f, 2) ** 2 == pytest.approx(res.lam, rel=1e-10)
    assert abs(f.mean()) < 1e-12


def test_sturm_count_brackets_gap():
    g = build_sphere_model(3, 512)
    lam = spectral_gap(g).lam
    kd, ko = g.stiffness_bands()
    md, mo = g.mass_bands()
    assert sturm_count(kd, ko, md, mo, lam * (1 - 1e-6)) == 1
    assert sturm_count(kd, ko, md, mo, lam * (1 + 1e-6)) == 2


def test_requires_unit_mass_unless_normalizing():
    x = np.linspace(0, 1, 101)
    g = build_custom_grid(x, np.full_like(x, 3.0))
    with pytest.raises(ValueError):
        spectral_gap(g)
    # scaling the measure leaves the gap unchanged: uniform [0,1] has gap pi^2
    assert spectral_gap(g, normalize=True).lam == pytest.approx(math.pi**2, rel=1e-4)


def test_estimator_wrapper():
    est = SpectralGap().fit(build_sphere_model(3, 512))
    assert est.lambda_ == pytest.approx(3, rel=1e-3)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(0.1, 3.0), b=st.floats(0.1, 3.0))
def test_gap_is_positive_and_scale_invariant(a, b):
    x = np.linspace(0, 2, 257)
    w = 1 + a * np.sin(b * x) ** 2
    g1 = build_custom_grid(x, w, normalize=True)
    g2 = build_custom_grid(x, 7.0 * w, normalize=True)
    l1, l2 = spectral_gap(g1).lam, spectral_gap(g2).lam
    assert l1 > 0
    assert l1 == pytest.approx(l2, rel=1e-9)
