import math

import numpy as np
import pytest

from darcy_bayes.fields import Field, GridSpec
from darcy_bayes.truncation import (
    dirichlet_integral,
    dirichlet_kernel,
    dn_l1_norm,
    fit_rate,
    truncation_sup_error,
    weierstrass_field,
    weierstrass_levels,
    weierstrass_tail,
    write_rate_csv,
)


def test_kernel_examples():
    assert dirichlet_kernel(1, 0.0) == pytest.approx(1.5, abs=1e-15)
    assert dirichlet_kernel(1, math.pi) == pytest.approx(-0.5, abs=1e-15)
    assert dirichlet_kernel(0, 0.7) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(ValueError):
        dirichlet_kernel(-1, 0.0)


@pytest.mark.parametrize("N", [0, 1, 3, 10])
def test_kernel_matches_cosine_sum(N):
    x = np.linspace(-7.0, 7.0, 301)
    series = 0.5 + sum(np.cos(n * x) for n in range(1, N + 1))
    assert np.allclose(dirichlet_kernel(N, x), series, atol=1e-12)


def test_kernel_near_singularity_is_smooth():
    N = 5
    for x in (0.0, 1e-9, -1e-9, 2 * math.pi, 2 * math.pi + 1e-10):
        assert dirichlet_kernel(N, x) == pytest.approx(N + 0.5, rel=1e-12)


def test_kernel_even_and_periodic():
    x = np.linspace(0.01, 3.0, 50)
    assert np.allclose(dirichlet_kernel(7, x), dirichlet_kernel(7, -x), atol=1e-13)
    assert np.allclose(dirichlet_kernel(7, x), dirichlet_kernel(7, x + 2 * math.pi), atol=1e-11)


@pytest.mark.parametrize("N", [1, 4, 16, 64])
def test_kernel_integral_is_pi(N):
    assert abs(dirichlet_integral(N) - math.pi) <= 1e-12


def test_l1_norm_grows_logarithmically():
    Ns = [8, 16, 32, 64, 128, 256, 512]
    vals = [dn_l1_norm(N) for N in Ns]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert all(v >= math.pi for v in vals)
    ratios = [v / math.log(N) for v, N in zip(vals, Ns)]
    assert all(1.0 <= r <= 4.0 for r in ratios)
    # ||D_N||_1 = (4/pi) log N + O(1), so doubling N adds (4/pi) log 2
    assert vals[-1] - vals[-2] == pytest.approx(4 / math.pi * math.log(2), rel=5e-3)
    with pytest.raises(ValueError):
        dn_l1_norm(1)


def test_band_limited_has_zero_truncation_error():
    g = GridSpec(2, 32)
    u = Field.from_function(g, lambda x, y: np.cos(3 * x) + np.sin(2 * x - 3 * y))
    assert truncation_sup_error(u, 3) < 1e-12
    assert truncation_sup_error(u, 2) > 0.5
    with pytest.raises(ValueError):
        truncation_sup_error(u, 16)


def test_weierstrass_error_is_tail_sum():
    g = GridSpec(1, 1024)
    t = 0.5
    J = weierstrass_levels(g)
    assert 2**J < g.n // 2 <= 2 ** (J + 1)
    u = weierstrass_field(g, t)
    for N in (4, 8, 16, 32, 64):
        assert truncation_sup_error(u, N) == pytest.approx(weierstrass_tail(t, N, J), abs=1e-12)


def test_weierstrass_doubling_ratio():
    J = 40
    for N in (2**5, 2**8, 2**12):
        assert weierstrass_tail(0.5, 2 * N, J) / weierstrass_tail(0.5, N, J) == pytest.approx(2**-0.5, rel=1e-3)


def test_weierstrass_rejects_unresolved_level():
    with pytest.raises(ValueError):
        weierstrass_field(GridSpec(1, 16), 0.5, J=3)


def test_fit_rate_examples():
    Ns = np.array([4, 8, 16, 32, 64])
    fit = fit_rate(Ns, 3.0 * Ns**-2.0)
    assert fit.slope == pytest.approx(-2.0, abs=1e-10)
    assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-10)
    assert fit.residual < 1e-12
    assert -1.0 < fit_rate(Ns, np.log(Ns) / Ns).slope < -0.6
    assert fit_rate(Ns, np.ones(5)).slope == pytest.approx(0.0, abs=1e-12)


def test_fit_rate_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_rate([1, 2], [1.0, 0.5])
    with pytest.raises(ValueError):
        fit_rate([1, 2, 4], [1.0, 0.0, 0.5])
    with pytest.raises(ValueError):
        fit_rate([1, 2, 4], [1.0, 0.5])


def test_rate_csv_format(tmp_path):
    fit = fit_rate([2, 4, 8], [0.25, 0.0625, 0.015625])
    write_rate_csv(tmp_path / "r.csv", "err", [2, 4, 8], [0.25, 0.0625, 0.015625], fit)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "N,err"
    assert lines[1] == "2,0.25"
    assert lines[-1].startswith("# slope=")
    assert float(lines[-1].split()[1].split("=")[1]) == pytest.approx(-2.0)
