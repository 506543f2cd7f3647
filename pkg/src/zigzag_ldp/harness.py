"""Ensemble experiments that confront simulation with the rate-function predictions."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import ratefn, spectral
from .empirical import Observable, path_integral
from .potential import SwitchingRate
from .sampler import SimConfig, State, simulate_many

OK = "ok"
ESS_COLLAPSE = "ess-collapse"
CENSORED = "censored"
MONOTONE_FAIL = "monotonicity-violation"


@dataclass
class ExperimentPlan:
    rate: SwitchingRate
    observable: Observable
    horizons: Sequence[float] = (100.0,)
    ensemble: int = 1000
    seed: int = 0
    grid: int = 128
    gammas: Sequence[float] = ()
    x0: float = 0.0
    v0: int = 1
    threads: int = 1
    h: float | None = None

    def __post_init__(self):
        if self.ensemble < 1:
            raise ValueError("ensemble size must be at least 1")
        hs = list(self.horizons)
        if not hs or any(t <= 0 for t in hs) or any(b <= a for a, b in zip(hs, hs[1:])):
            raise ValueError("horizons must be positive and increasing")
        if not self.rate.potential.is_torus:
            raise ValueError("LDP experiments run on the torus")

    def path_integrals(self, horizons=None) -> np.ndarray:
        """Array (ensemble, len(horizons)) of integrals of the observable over [0, t]."""
        hs = list(self.horizons if horizons is None else horizons)
        cfg = SimConfig(t_max=hs[-1], seed=self.seed, h=self.h)
        f = self.observable

        def reduce(sk):
            return [path_integral(sk, f, t) for t in hs]

        out = simulate_many(self.rate, State(self.x0, self.v0), cfg, range(self.ensemble),
                            threads=self.threads, reduce=reduce)
        return np.asarray(out, dtype=float).reshape(self.ensemble, len(hs))


def inputs_hash(inputs: dict) -> str:
    return hashlib.sha256(json.dumps(inputs, sort_keys=True, default=str).encode()).hexdigest()


def write_summary(path, inputs: dict, seed, estimates: dict, oracles: dict, verdict: str) -> dict:
    out = {"inputs_hash": inputs_hash(inputs), "inputs": inputs, "seed": seed,
           "estimates": estimates, "oracles": oracles, "verdict": verdict}
    with open(path, "w") as fh:
        json.dump(_jsonable(out), fh, sort_keys=True, indent=1)
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else ("-inf" if v < 0 else "nan"))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _cell(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return v


# -- SCGF -------------------------------------------------------------------------


@dataclass
class SCGFEstimate:
    t: float
    estimate: float
    stderr: float
    ess: float
    ensemble: int
    status: str


def log_mean_exp(a: np.ndarray, t: float) -> SCGFEstimate:
    """(1/t) log mean exp(a) with a delta-method standard error."""
    a = np.asarray(a, dtype=float)
    m = a.size
    if np.ptp(a) == 0.0:
        return SCGFEstimate(t, float(a[0]) / t, 0.0, float(m), m, OK)
    top = float(np.max(a))
    w = np.exp(a - top)
    mean = float(w.mean())
    est = (top + math.log(mean)) / t
    se = float(w.std(ddof=1)) / (mean * math.sqrt(m) * t) if m > 1 else math.inf
    ess = float(w.sum() ** 2 / np.sum(w * w))
    status = ESS_COLLAPSE if ess < 0.01 * m else OK
    return SCGFEstimate(t, est, se, ess, m, status)


def scgf_mc(plan: ExperimentPlan, t: float | None = None) -> SCGFEstimate:
    """Monte Carlo estimate of (1/t) log E exp(integral of V over [0, t])."""
    t = float(plan.horizons[-1] if t is None else t)
    a = plan.path_integrals([t])[:, 0]
    return log_mean_exp(a, t)


def spectral_beta(rate: SwitchingRate, f: Observable, n: int) -> spectral.EigenResult:
    g = spectral.build_generator(rate, n)
    return spectral.principal_eigenvalue(g, f.grid_values(n).ravel())


# -- tail decay ---------------------------------------------------------------------


@dataclass
class DecayFit:
    level: float
    horizons: list
    probabilities: list
    hits: list
    status: list
    slope: float
    ci: tuple
    predicted: float | None = None
    verdict: str = OK

    @property
    def relative_error(self) -> float:
        if self.predicted is None or self.predicted == 0:
            return math.nan
        return abs(self.slope + self.predicted) / self.predicted


def fit_decay(horizons, hits, m: int, level: float) -> DecayFit:
    """Weighted least-squares fit of log p_t against t, ignoring censored horizons.

    Weights are the inverse binomial variances (1 - p) / (m p) of log p.
    """
    hs = np.asarray(horizons, dtype=float)
    k = np.asarray(hits, dtype=float)
    p = k / m
    status = [CENSORED if kk == 0 else OK for kk in k]
    use = k > 0
    if np.all(p[use] == 1.0) and np.any(use):
        return DecayFit(level, hs.tolist(), p.tolist(), k.astype(int).tolist(), status, 0.0, (0.0, 0.0))
    if use.sum() < 2:
        return DecayFit(level, hs.tolist(), p.tolist(), k.astype(int).tolist(), status,
                        math.nan, (math.nan, math.nan), verdict=CENSORED)
    x, y = hs[use], np.log(p[use])
    var = np.where(p[use] < 1.0, (1.0 - p[use]) / (m * p[use]), 1.0 / m**2)
    wts = 1.0 / var
    X = np.stack([np.ones_like(x), x], axis=1)
    cov = np.linalg.inv(X.T @ (X * wts[:, None]))
    beta = cov @ (X.T @ (wts * y))
    slope, se = float(beta[1]), float(math.sqrt(cov[1, 1]))
    return DecayFit(level, hs.tolist(), p.tolist(), k.astype(int).tolist(), status,
                    slope, (slope - 1.96 * se, slope + 1.96 * se))


def ldp_decay(plan: ExperimentPlan, level: float, integrals: np.ndarray | None = None,
              predicted: float | None = None) -> DecayFit:
    """Ensemble estimate of the decay of P(time average of V >= level) in t."""
    hs = np.asarray(plan.horizons, dtype=float)
    if hs[-1] < 4 * hs[0]:
        raise ValueError("horizons should span at least a factor 4")
    a = plan.path_integrals() if integrals is None else integrals
    hits = np.sum(a / hs[None, :] >= level, axis=0)
    fit = fit_decay(hs, hits, plan.ensemble, level)
    fit.predicted = predicted
    return fit


# -- gamma sweep ---------------------------------------------------------------------


@dataclass
class GammaSweep:
    gammas: list
    values: list
    verdict: str
    offending: tuple | None = None
    derivative: list | None = None


def gamma_sweep(target, potential, gammas) -> GammaSweep:
    """Rate of a fixed target (WForm or DensityPair) across refreshment rates.

    Values must strictly decrease in gamma unless the target is stationary.
    """
    gs = [float(g) for g in gammas]
    if any(g <= 0 for g in gs) or any(b <= a for a, b in zip(gs, gs[1:])):
        raise ValueError("gammas must be positive and increasing")
    vals, derivs = [], []
    for g in gs:
        rate = SwitchingRate(potential, g)
        if isinstance(target, ratefn.WForm):
            vals.append(ratefn.rate_w_form(target, rate).value)
            derivs.append(ratefn.gamma_derivative(target, rate).integral)
        else:
            vals.append(ratefn.rate_explicit(target, rate).value)
    if max(abs(v) for v in vals) <= 1e-8:
        return GammaSweep(gs, vals, OK, None, derivs or None)
    for i in range(len(gs) - 1):
        if not vals[i + 1] < vals[i]:
            return GammaSweep(gs, vals, MONOTONE_FAIL, (gs[i], gs[i + 1]), derivs or None)
    return GammaSweep(gs, vals, OK, None, derivs or None)


# -- explicit vs variational -----------------------------------------------------------


@dataclass
class DVCompare:
    n: list
    explicit: list
    variational: list
    errors: list
    ratios: list

    @property
    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.errors, self.errors[1:]))

    def relative_error(self, n: int) -> float:
        i = self.n.index(n)
        return self.errors[i] / abs(self.explicit[i]) if self.explicit[i] else self.errors[i]


def dv_compare(make_pair: Callable[[int], ratefn.DensityPair], rate: SwitchingRate,
               ns=(64, 128, 256, 512)) -> DVCompare:
    """Discrete DV value (on the explicit scale) against the explicit rate for each grid size."""
    ex, var, err = [], [], []
    for n in ns:
        d = make_pair(n)
        g = spectral.build_generator(rate, n)
        e = ratefn.rate_explicit(d, rate).value
        v = spectral.dv_rate_density_scale(g, d)
        ex.append(e)
        var.append(v)
        err.append(abs(v - e))
    ratios = [b / a if a > 0 else math.nan for a, b in zip(err, err[1:])]
    return DVCompare(list(ns), ex, var, err, ratios)


def stationary_mean(rate: SwitchingRate, f: Observable, n: int) -> float:
    g = spectral.build_generator(rate, n)
    return float(spectral.stationary_vector(g) @ f.grid_values(n).ravel())

