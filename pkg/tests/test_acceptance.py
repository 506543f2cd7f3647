"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line."""

import hashlib
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from zigzag_ldp import cli, harness, spectral
from zigzag_ldp.empirical import Observable, accumulate, tv_distance
from zigzag_ldp.potential import Potential, SwitchingRate, cell_centers, stationary_density
from zigzag_ldp.ratefn import (
    DensityPair,
    WForm,
    constant_integrand,
    gamma_derivative,
    general_integrand,
    optimal_tilt,
    rate_explicit,
    rate_gamma_zero,
    rate_w_form,
    scan_velocity_asymmetry,
    tilt_objective,
)
from zigzag_ldp.sampler import SimConfig, State, simulate

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def fourier_density(rng, modes=3, scale=0.4):
    """Random smooth positive density exp(trig polynomial) and its derivative."""
    k = np.arange(1, modes + 1)
    a, b = rng.normal(scale=scale, size=modes), rng.normal(scale=scale, size=modes)
    w = 2 * np.pi * k

    def rho(x):
        x = np.asarray(x)[..., None]
        return np.exp(np.sum(a * np.cos(w * x) + b * np.sin(w * x), axis=-1))

    def drho(x):
        xx = np.asarray(x)[..., None]
        return rho(x) * np.sum(w * (-a * np.sin(w * xx) + b * np.cos(w * xx)), axis=-1)

    return rho, drho


def sine(a, k=1, ph=0.0):
    w = 2 * np.pi * k
    return (lambda x: 1 + a * np.sin(w * x + ph)), (lambda x: a * w * np.cos(w * x + ph))


def test_01_stationarity_zero(criterion):
    t0 = time.perf_counter()
    worst = 0.0
    for pot in (Potential.zero(), Potential.cosine(1.0), Potential.cosine(0.5, 2)):
        for g in (0.1, 1.0):
            worst = max(worst, abs(rate_explicit(DensityPair.stationary(pot, 512), SwitchingRate(pot, g)).value))
    dt = time.perf_counter() - t0
    criterion(1, "stationarity zero", worst <= 1e-8 and dt < 1, f"max |I| = {worst:.2e}, {dt:.2f}s")


def test_02_tilt_sandwich(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_eq, worst_violation = 0.0, -math.inf
    for _ in range(20):
        rho, drho = fourier_density(rng)
        base = DensityPair.common(rho, drho, 256)
        c = rng.uniform(-0.5, 0.5) * float(np.min(base.rho_plus))
        d = DensityPair.common(rho, drho, 256, c)
        rate = SwitchingRate(Potential.cosine(rng.uniform(0.2, 2), int(rng.integers(1, 3)), rng.uniform(0, 6)),
                             rng.uniform(0.1, 2))
        val = rate_explicit(d, rate).value
        eta = optimal_tilt(d, rate)
        worst_eq = max(worst_eq, abs(-tilt_objective(d, rate, eta) - val))
        for _ in range(100):
            k = int(rng.integers(1, 5))
            pert = eta + rng.normal(scale=0.3) * np.cos(2 * np.pi * k * d.x + rng.uniform(0, 6)) + rng.normal(scale=0.1)
            worst_violation = max(worst_violation, -tilt_objective(d, rate, pert) - val)
    dt = time.perf_counter() - t0
    ok = worst_eq <= 1e-10 and worst_violation <= 0 and dt < 10
    criterion(2, "tilt sandwich", ok, f"|J*+I| = {worst_eq:.1e}, max(-J-I) = {worst_violation:.2e}, {dt:.2f}s")


def test_03_constant_branch(criterion):
    t0 = time.perf_counter()
    worst = 0.0
    x = cell_centers(256)
    for pot in (Potential.zero(), Potential.cosine(1.0), Potential.cosine(0.5, 2, 1.0)):
        for rp, g in ((1.2, 1.0), (1.5, 0.3), (1.0, 2.0)):
            rate = SwitchingRate(pot, g)
            a, b = rate.lam_plus(x) * rp, rate.lam_minus(x) * (2 - rp)
            worst = max(worst, float(np.max(np.abs(general_integrand(a, b, 0.0) - constant_integrand(a, b)))))
            d = DensityPair(np.full(256, rp), np.full(256, 2 - rp), np.zeros(256), np.zeros(256))
            ref = np.mean((np.sqrt(a) - np.sqrt(b)) ** 2)
            worst = max(worst, abs(rate_explicit(d, rate).value - ref))
    d = DensityPair(np.full(64, 1.2), np.full(64, 0.8), np.zeros(64), np.zeros(64))
    worked = rate_explicit(d, SwitchingRate(Potential.zero(), 1.0)).value
    ref = (math.sqrt(1.2) - math.sqrt(0.8)) ** 2
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and abs(worked - ref) <= 1e-12 and abs(worked - 0.0404082) < 1e-7 and dt < 1
    criterion(3, "constant-density branch", ok, f"max diff {worst:.1e}, worked value {worked:.7f}, {dt:.2f}s")


def test_04_infinite_branch(criterion):
    t0 = time.perf_counter()
    n = 128
    x = cell_centers(n)
    rate = SwitchingRate(Potential.cosine(1.0), 1.0)
    values = []
    for amp in (0.3, 1e-3):
        s, c = np.sin(2 * np.pi * x), np.cos(2 * np.pi * x)
        d = DensityPair(1 + amp * s, 1 - amp * s, 2 * np.pi * amp * c, -2 * np.pi * amp * c)
        values.append(rate_explicit(d, rate).value)
    tab = DensityPair.from_values(1 + 0.2 * np.cos(2 * np.pi * x), np.ones(n), normalize=True)
    values.append(rate_explicit(tab, rate).value)
    dt = time.perf_counter() - t0
    criterion(4, "infinite branch", all(v == math.inf for v in values) and dt < 1, f"{values}, {dt:.2f}s")


def _sweep_targets():
    c1, c2 = Potential.cosine(1.0), Potential.cosine(0.5, 2, 0.3)
    out = [(WForm.from_potential(c1, 256, s), c1) for s in (-1.0, 0.0, 0.5, 2.0)]
    out += [(WForm.from_potential(c2, 256, s), c2) for s in (0.0, -0.5, 3.0)]
    for a, k, ph in ((0.5, 1, 0.0), (0.8, 1, 2.0), (0.3, 2, 1.0)):
        rho, drho = sine(a, k, ph)
        out.append((WForm.from_density(rho, drho, 256), c1))
    return out


def test_05_gamma_monotonicity(criterion):
    t0 = time.perf_counter()
    gammas = [0.25, 0.5, 1.0, 2.0, 4.0]
    strict, max_cell, worst_fd = True, -math.inf, 0.0
    for w, pot in _sweep_targets():
        sw = harness.gamma_sweep(w, pot, gammas)
        strict &= sw.verdict == harness.OK and all(b < a for a, b in zip(sw.values, sw.values[1:]))
        for g in gammas:
            der = gamma_derivative(w, SwitchingRate(pot, g))
            max_cell = max(max_cell, float(np.max(der.per_cell)))
            e = 1e-4
            fd = (rate_w_form(w, SwitchingRate(pot, g + e)).value - rate_w_form(w, SwitchingRate(pot, g - e)).value) / (2 * e)
            worst_fd = max(worst_fd, abs(fd - der.integral) / abs(der.integral))
    dt = time.perf_counter() - t0
    ok = strict and max_cell <= 0 and worst_fd <= 0.01 and dt < 5
    criterion(5, "gamma monotonicity", ok, f"max cell {max_cell:.2e}, fd rel err {worst_fd:.1e}, {dt:.2f}s")


def test_06_c_scan(criterion):
    t0 = time.perf_counter()
    cs = np.round(np.linspace(-0.2, 0.2, 21), 12)
    cases = [(sine(0.5), Potential.cosine(1.0), 1.0), (sine(0.3, 2, 1.0), Potential.cosine(1.0), 0.5),
             (sine(0.6, 1, 2.0), Potential.zero(), 1.0), (sine(0.4), Potential.cosine(0.5, 2), 2.0),
             ((lambda x: np.ones_like(x), lambda x: np.zeros_like(x)), Potential.cosine(1.0), 0.3)]
    argmins = []
    for (rho, drho), pot, g in cases:
        argmins.append(scan_velocity_asymmetry(rho, drho, SwitchingRate(pot, g), cs).argmin)
    dt = time.perf_counter() - t0
    criterion(6, "c-scan minimum", all(a == 0.0 for a in argmins) and dt < 5, f"argmins {argmins}, {dt:.2f}s")


def test_07_gamma_zero_limit(criterion):
    t0 = time.perf_counter()
    pot = Potential.cosine(1.0)
    w = WForm.from_potential(pot, 512, 2.0)
    lim = rate_gamma_zero(w, pot).value
    near = rate_w_form(w, SwitchingRate(pot, 1e-6)).value
    bad = rate_gamma_zero(WForm.from_potential(pot, 512, -1.0), pot).value
    dt = time.perf_counter() - t0
    ok = abs(lim - near) <= 1e-3 and bad == math.inf and dt < 1
    criterion(7, "gamma -> 0 limit", ok, f"|diff| = {abs(lim - near):.1e}, mismatched -> {bad}, {dt:.2f}s")


def test_08_explicit_vs_variational(criterion):
    t0 = time.perf_counter()
    rate = SwitchingRate(Potential.cosine(1.0), 1.0)
    shapes = [(0.5, 0.0, 0.0), (0.8, 0.0, 0.0), (0.5, 1.0, 0.0), (0.3, 0.0, 0.0), (0.5, 0.0, 0.1)]
    errs, decreasing = [], True
    for a, ph, c in shapes:
        rho, drho = sine(a, 1, ph)
        cmp_ = harness.dv_compare(lambda n: DensityPair.common(rho, drho, n, c), rate, (64, 128, 256, 512))
        decreasing &= cmp_.decreasing
        errs.append(cmp_.relative_error(256))
    dt = time.perf_counter() - t0
    ok = max(errs) < 0.02 and decreasing and dt < 120
    criterion(8, "explicit vs variational", ok,
              f"rel err at N=256 {[round(e, 4) for e in errs]}, {dt:.1f}s")


def test_09_eigen_duality(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(20):
        pot = Potential.cosine(rng.uniform(0, 2), int(rng.integers(1, 3)), rng.uniform(0, 6))
        g = spectral.build_generator(SwitchingRate(pot, rng.uniform(0.05, 2)), 64)
        worst = max(worst, spectral.duality_check(g, rng.normal(scale=0.5, size=g.size)))
    g = spectral.build_generator(SwitchingRate(Potential.cosine(1.0), 1.0), 64)
    const = [spectral.principal_eigenvalue(g, np.full(g.size, c)).beta - c for c in (-1.0, 0.0, 0.75)]
    dt = time.perf_counter() - t0
    ok = worst <= 1e-8 and max(abs(v) for v in const) <= 1e-12 and dt < 60
    criterion(9, "eigen duality", ok, f"max gap {worst:.1e}, beta(c)-c {max(map(abs, const)):.1e}, {dt:.1f}s")


def test_10_sampler_law(criterion):
    t0 = time.perf_counter()
    sk = simulate(SwitchingRate(Potential.zero(), 1.0), State(0.0, 1), SimConfig(2e4, seed=10))
    gaps = np.diff(np.concatenate(([0.0], sk.times)))
    p = stats.kstest(gaps, "expon").pvalue
    pot = Potential.cosine(1.0)
    sk = simulate(SwitchingRate(pot, 0.1), State(0.0, 1), SimConfig(1e5, seed=10))
    m = accumulate(sk, 64)
    tv = tv_distance(m, stationary_density(pot, 64))
    plus = m.plus_fraction
    dt = time.perf_counter() - t0
    ok = p > 0.01 and tv <= 0.01 and abs(plus - 0.5) <= 0.005 and dt < 120
    criterion(10, "sampler law", ok, f"KS p = {p:.3f}, TV = {tv:.4f}, plus fraction = {plus:.4f}, {dt:.1f}s")


def test_11_scgf(criterion):
    t0 = time.perf_counter()
    rate = SwitchingRate(Potential.cosine(1.0), 1.0)
    f = Observable.cosine(0.5)
    est = harness.scgf_mc(harness.ExperimentPlan(rate, f, horizons=(200.0,), ensemble=10_000, seed=11))
    beta, betas = cli.extrapolated_beta(rate, f, [256, 512])
    z = (est.estimate - beta) / est.stderr
    dt = time.perf_counter() - t0
    ok = abs(z) <= 3 and dt < 300
    criterion(11, "SCGF cross-check", ok,
              f"MC {est.estimate:.5f} +- {est.stderr:.5f}, beta {beta:.5f} (grids {betas[0]:.5f}, {betas[1]:.5f}), "
              f"z = {z:.2f}, ESS {est.ess:.0f}, {dt:.1f}s")


@pytest.mark.slow
def test_12_ldp_decay(criterion):
    t0 = time.perf_counter()
    rate = SwitchingRate(Potential.cosine(1.0), 1.0)
    f = Observable.cosine()
    grids = (256, 512)
    gens = [spectral.build_generator(rate, n) for n in grids]
    means = [float(spectral.stationary_vector(g) @ f.grid_values(n).ravel()) for g, n in zip(gens, grids)]
    mean = 2 * means[1] - means[0]
    level = mean + 0.15
    rates = [spectral.legendre_rate(g, f.grid_values(n).ravel(), level) for g, n in zip(gens, grids)]
    pred = 2 * rates[1] - rates[0]
    plan = harness.ExperimentPlan(rate, f, horizons=(25.0, 50.0, 100.0, 200.0), ensemble=100_000, seed=7)
    fit = harness.ldp_decay(plan, level, predicted=pred)
    dt = time.perf_counter() - t0
    ok = fit.relative_error <= 0.25 and dt < 900
    criterion(12, "LDP decay slope", ok,
              f"slope {fit.slope:.4f} CI ({fit.ci[0]:.4f}, {fit.ci[1]:.4f}), rate {pred:.4f}, "
              f"rel err {fit.relative_error:.3f}, hits {fit.hits}, {dt:.0f}s")


def _artifact_hashes(out: Path) -> dict:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(out.iterdir())}


def test_13_determinism(criterion, tmp_path):
    t0 = time.perf_counter()
    mismatched = []
    configs = sorted(CONFIGS.glob("*.json"))
    for cfg in configs:
        cmd = cfg.stem.split("_")[0]
        cmd = next(c for c in cli.COMMANDS if c.split("-")[0] == cmd)
        hashes = []
        for run, threads in enumerate((1, 1, 8)):
            out = tmp_path / f"{cfg.stem}_{run}"
            code, _ = cli.run(cmd, cfg, out, threads=threads)
            assert code == 0, (cfg.name, code)
            hashes.append(_artifact_hashes(out))
        if not (hashes[0] == hashes[1] == hashes[2]):
            mismatched.append(cfg.name)
    dt = time.perf_counter() - t0
    criterion(13, "determinism", not mismatched,
              f"{len(configs)} configs, mismatched {mismatched or 'none'}, {dt:.1f}s")
