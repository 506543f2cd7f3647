import numpy as np
import pytest
from scipy.linalg import eig

from zigzag_ldp.potential import Potential, SwitchingRate, stationary_density
from zigzag_ldp.ratefn import DensityPair
from zigzag_ldp.spectral import (
    NumericalFailure,
    build_generator,
    duality_check,
    dv_minimize,
    dv_rate_density_scale,
    dv_rate_discrete,
    legendre,
    principal_eigenvalue,
    stationary_vector,
    tilted_measure,
)


def test_generator_structure():
    n = 16
    g = build_generator(SwitchingRate(Potential.zero(), 1.0), n)
    Q = g.Q.toarray()
    assert np.allclose(Q.sum(axis=1), 0.0, atol=1e-12)
    for row in Q:
        off = np.sort(row[row > 0])
        assert np.allclose(off, [1.0, n])
    assert np.allclose(g.diagonal, -(n + 1))
    assert g.is_irreducible()
    # +1 moves right, -1 moves left
    assert Q[0, 2] == n and Q[1, 2 * (n - 1) + 1] == n and Q[0, 1] == 1.0


def test_generator_without_refreshment_is_irreducible():
    g = build_generator(SwitchingRate(Potential.cosine(1.0), 0.0), 32)
    assert g.is_irreducible()
    assert np.all(g.off_diagonal()[2] > 0)


def test_generator_dump(tmp_path):
    g = build_generator(SwitchingRate(Potential.zero(), 1.0), 4)
    g.dump(tmp_path / "q.csv")
    lines = (tmp_path / "q.csv").read_text().splitlines()
    assert lines[0] == "row,col,value" and len(lines) == 1 + 3 * 8


def test_stationary_vector_converges_to_gibbs():
    pot = Potential.cosine(1.0)
    errs = []
    for n in (64, 128, 256):
        pi = stationary_vector(build_generator(SwitchingRate(pot, 1.0), n)).reshape(n, 2)
        rho = stationary_density(pot, n) / n
        errs.append(np.max(np.abs(pi.sum(axis=1) - rho) * n))
        assert np.allclose(pi[:, 0], pi[:, 1], atol=0.1 / n)
    # first-order upwind scheme
    assert errs[-1] <= 2e-2
    assert all(0.4 < b / a < 0.6 for a, b in zip(errs, errs[1:]))


def test_dv_zero_at_stationarity_and_positive_elsewhere():
    g = build_generator(SwitchingRate(Potential.cosine(1.0), 0.5), 32)
    pi = stationary_vector(g)
    assert abs(dv_rate_discrete(g, pi)) <= 1e-10
    rng = np.random.default_rng(0)
    mu = rng.uniform(0.5, 1.5, g.size)
    mu /= mu.sum()
    res = dv_minimize(g, mu)
    assert res.value > 0 and res.grad_norm <= 1e-10 and res.phi[0] == 0


def test_dv_convex_in_mu():
    g = build_generator(SwitchingRate(Potential.cosine(1.0), 0.5), 16)
    rng = np.random.default_rng(1)
    a, b = rng.uniform(0.5, 1.5, (2, g.size))
    a, b = a / a.sum(), b / b.sum()
    mid = dv_rate_discrete(g, 0.5 * (a + b))
    assert mid <= 0.5 * (dv_rate_discrete(g, a) + dv_rate_discrete(g, b)) + 1e-12


def test_dv_rejects_non_probability():
    g = build_generator(SwitchingRate(Potential.zero(), 1.0), 4)
    with pytest.raises(ValueError):
        dv_rate_discrete(g, np.ones(8))
    with pytest.raises(ValueError):
        dv_rate_discrete(g, np.ones(4) / 4)


def test_principal_eigenvalue_matches_dense_solver():
    rng = np.random.default_rng(3)
    g = build_generator(SwitchingRate(Potential.cosine(0.7, 2), 0.3), 24)
    V = rng.normal(size=g.size)
    e = principal_eigenvalue(g, V)
    w = eig(g.Q.toarray() + np.diag(V), right=False)
    assert e.beta == pytest.approx(np.max(w.real), abs=1e-9)
    assert np.all(e.right > 0) and np.all(e.left > 0)
    assert e.residual <= 1e-9


def test_beta_of_constant():
    g = build_generator(SwitchingRate(Potential.cosine(1.0), 1.0), 32)
    for c in (-1.5, 0.0, 2.25):
        assert principal_eigenvalue(g, np.full(g.size, c)).beta == pytest.approx(c, abs=1e-12)


def test_beta_monotone_and_convex():
    g = build_generator(SwitchingRate(Potential.cosine(1.0), 1.0), 32)
    V = np.cos(2 * np.pi * (np.arange(g.size) // 2 + 0.5) / 32)
    thetas = np.linspace(-2, 2, 9)
    b = np.array([principal_eigenvalue(g, t * V).beta for t in thetas])
    assert np.all(np.diff(b, 2) >= -1e-10)
    assert principal_eigenvalue(g, V + 0.1).beta > principal_eigenvalue(g, V).beta
    assert principal_eigenvalue(g, np.maximum(V, 0)).beta >= principal_eigenvalue(g, V).beta


def test_duality_gap():
    rng = np.random.default_rng(4)
    for _ in range(3):
        g = build_generator(SwitchingRate(Potential.cosine(rng.uniform(0, 2)), rng.uniform(0.1, 2)), 32)
        assert duality_check(g, rng.normal(size=g.size)) <= 1e-8


def test_tilted_measure_is_probability():
    g = build_generator(SwitchingRate(Potential.zero(), 1.0), 8)
    mu = tilted_measure(principal_eigenvalue(g, np.linspace(0, 1, 16)))
    assert mu.sum() == pytest.approx(1.0) and np.all(mu > 0)


def test_legendre_zero_at_mean_and_positive_off_mean():
    rate = SwitchingRate(Potential.cosine(1.0), 1.0)
    g = build_generator(rate, 32)
    V = np.cos(2 * np.pi * (np.arange(64) // 2 + 0.5) / 32)
    mean = float(stationary_vector(g) @ V)
    assert legendre(g, V, mean).value == pytest.approx(0.0, abs=1e-9)
    hi = legendre(g, V, mean + 0.1)
    assert hi.value > 0 and hi.theta > 0
    with pytest.raises(ValueError):
        legendre(g, V, mean, thetas=[])


def test_density_scale_matches_explicit_at_stationarity():
    pot = Potential.cosine(1.0)
    rate = SwitchingRate(pot, 1.0)
    # the continuum stationary density is O(1/N) away from the discrete one
    vals = [dv_rate_density_scale(build_generator(rate, n), DensityPair.stationary(pot, n)) for n in (64, 128, 256)]
    assert all(v >= 0 for v in vals)
    assert all(0.45 < b / a < 0.55 for a, b in zip(vals, vals[1:]))


def test_power_iteration_failure_is_reported():
    g = build_generator(SwitchingRate(Potential.cosine(1.0), 1.0), 16)
    with pytest.raises(NumericalFailure):
        principal_eigenvalue(g, np.linspace(-1, 1, 32), max_iter=3)


def test_uniformized_matrix_nonnegative():
    g = build_generator(SwitchingRate(Potential.cosine(1.5), 0.2), 32)
    h = 1.0 / np.max(-g.diagonal)
    assert np.all((np.eye(g.size) + h * g.Q.toarray()) >= 0)
    assert np.allclose(np.asarray(g.Q.sum(axis=1)).ravel(), 0.0, atol=1e-12)


def test_dv_nonnegative_on_random_simplex_points():
    g = build_generator(SwitchingRate(Potential.cosine(1.0), 0.5), 16)
    rng = np.random.default_rng(8)
    for _ in range(30):
        mu = rng.dirichlet(np.full(g.size, 2.0))
        assert dv_rate_discrete(g, mu) >= -1e-9
