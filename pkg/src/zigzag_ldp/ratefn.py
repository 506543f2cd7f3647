"""Explicit rate functions for the empirical measure of the zig-zag process on the torus.

All integrals are periodic trapezoid sums over the cell centers of a uniform grid.
A candidate measure is mu(dx, dv) = rho(x, v) dx Unif(dv), given by its two
velocity sheets rho_plus, rho_minus; the value reported here is the integral of
the pointwise rate density over both sheets against Lebesgue measure.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .potential import Potential, SwitchingRate, cell_centers, spectral_derivative, trapezoid

DERIV_RTOL = 1e-8
NORM_TOL = 1e-8


class DomainError(ValueError):
    """Input density outside the domain of the requested formula."""


class PositivityError(ValueError):
    """Switching rates vanish somewhere; the explicit formula needs lambda+ lambda- > 0."""


def quadrature(values, dx: float | None = None) -> float:
    """Periodic trapezoid rule on a uniform grid of the unit torus."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("empty grid")
    return trapezoid(values, 1.0 / values.size if dx is None else dx)


def stable_arcsinh(xi):
    """arcsinh that stays finite for huge arguments (log(2|x|) beyond 1e8)."""
    xi = np.asarray(xi, dtype=float)
    big = np.abs(xi) > 1e8
    small = np.arcsinh(np.where(big, 0.0, xi))
    with np.errstate(divide="ignore"):
        large = np.sign(xi) * np.log(2.0 * np.abs(np.where(big, xi, 1.0)))
    out = np.where(big, large, small)
    return out if out.ndim else float(out)


@dataclass(eq=False)
class DensityPair:
    """Densities rho_plus, rho_minus (w.r.t. Lebesgue x uniform velocity) with derivatives."""

    rho_plus: np.ndarray
    rho_minus: np.ndarray
    drho_plus: np.ndarray
    drho_minus: np.ndarray
    provenance: str = "analytic"

    def __post_init__(self):
        arrs = [np.asarray(a, dtype=float) for a in
                (self.rho_plus, self.rho_minus, self.drho_plus, self.drho_minus)]
        if len({a.shape for a in arrs}) != 1 or arrs[0].ndim != 1 or arrs[0].size < 2:
            raise ValueError("density arrays must be 1-D of equal length >= 2")
        self.rho_plus, self.rho_minus, self.drho_plus, self.drho_minus = arrs
        if np.any(self.rho_plus < 0) or np.any(self.rho_minus < 0):
            raise DomainError("densities must be nonnegative")
        mass = 0.5 * quadrature(self.rho_plus + self.rho_minus)
        if abs(mass - 1.0) > NORM_TOL:
            raise DomainError(f"density pair not normalized: mass {mass!r}")

    @property
    def n(self) -> int:
        return self.rho_plus.size

    @property
    def x(self) -> np.ndarray:
        return cell_centers(self.n)

    @property
    def is_constant(self) -> bool:
        flat = all(np.ptp(r) <= 1e-14 * max(1.0, np.max(np.abs(r))) for r in (self.rho_plus, self.rho_minus))
        return flat and not np.any(self.drho_plus) and not np.any(self.drho_minus)

    @property
    def strictly_positive(self) -> bool:
        return bool(np.all(self.rho_plus > 0) and np.all(self.rho_minus > 0))

    @classmethod
    def from_functions(cls, rho_plus: Callable, rho_minus: Callable, drho_plus: Callable,
                       drho_minus: Callable, n: int, normalize: bool = False) -> "DensityPair":
        x = cell_centers(n)
        rp, rm = np.asarray(rho_plus(x), float) * np.ones(n), np.asarray(rho_minus(x), float) * np.ones(n)
        dp, dm = np.asarray(drho_plus(x), float) * np.ones(n), np.asarray(drho_minus(x), float) * np.ones(n)
        if normalize:
            z = 0.5 * quadrature(rp + rm)
            rp, rm, dp, dm = rp / z, rm / z, dp / z, dm / z
        return cls(rp, rm, dp, dm, "analytic")

    @classmethod
    def from_values(cls, rho_plus, rho_minus, normalize: bool = False) -> "DensityPair":
        """Tabulated densities at the cell centers; derivatives are spectral."""
        rp, rm = np.asarray(rho_plus, float), np.asarray(rho_minus, float)
        if normalize:
            z = 0.5 * quadrature(rp + rm)
            rp, rm = rp / z, rm / z
        return cls(rp, rm, spectral_derivative(rp), spectral_derivative(rm), "tabulated")

    @classmethod
    def common(cls, rho: Callable, drho: Callable, n: int, c: float = 0.0,
               normalize: bool = True) -> "DensityPair":
        """rho_plus = rho + c, rho_minus = rho - c with rho a probability density on the torus.

        With ``normalize`` the density ``rho`` is normalized before the shift.
        """
        x = cell_centers(n)
        r, d = np.asarray(rho(x), float) * np.ones(n), np.asarray(drho(x), float) * np.ones(n)
        if normalize:
            z = quadrature(r)
            r, d = r / z, d / z
        return cls(r + c, r - c, d.copy(), d.copy(), "analytic")

    @classmethod
    def stationary(cls, pot: Potential, n: int) -> "DensityPair":
        """rho_plus = rho_minus = exp(-U)/Z."""
        x = cell_centers(n)
        w = np.exp(-pot.U(x))
        z = quadrature(w)
        r = w / z
        d = -pot.dU(x) * r
        return cls(r, r.copy(), d, d.copy(), "analytic")

    def to_probability_vector(self) -> np.ndarray:
        """Cell masses on the 2n states ordered (cell, v) with v=+1 first, summing to 1."""
        p = np.stack([self.rho_plus, self.rho_minus], axis=1) * (0.5 / self.n)
        return (p / p.sum()).ravel()


@dataclass(eq=False)
class WForm:
    """rho = exp(-W) for both velocity sheets, with W absorbing the normalization."""

    W: np.ndarray
    dW: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.dW = np.asarray(self.dW, dtype=float)
        if self.W.shape != self.dW.shape or self.W.ndim != 1 or self.W.size < 2:
            raise ValueError("W and W' must be 1-D of equal length >= 2")

    @property
    def n(self) -> int:
        return self.W.size

    @property
    def mass(self) -> float:
        return quadrature(np.exp(-self.W))

    def check_normalized(self) -> None:
        if abs(self.mass - 1.0) > NORM_TOL:
            raise DomainError(f"exp(-W) not normalized: integral {self.mass!r}")

    @classmethod
    def from_functions(cls, W: Callable, dW: Callable, n: int, normalize: bool = True) -> "WForm":
        x = cell_centers(n)
        w = np.asarray(W(x), float) * np.ones(n)
        dw = np.asarray(dW(x), float) * np.ones(n)
        if normalize:
            w = w + math.log(quadrature(np.exp(-w)))
        return cls(w, dw)

    @classmethod
    def from_potential(cls, pot: Potential, n: int, scale: float = 1.0) -> "WForm":
        """W = scale * U + log Z; scale=1 is the stationary measure."""
        return cls.from_functions(lambda x: scale * pot.U(x), lambda x: scale * pot.dU(x), n)

    @classmethod
    def from_density(cls, rho: Callable, drho: Callable, n: int) -> "WForm":
        """W = -log(rho / Z) for a positive density rho."""
        return cls.from_functions(lambda x: -np.log(rho(x)), lambda x: -drho(x) / rho(x), n)

    def to_density_pair(self) -> DensityPair:
        r = np.exp(-self.W)
        d = -self.dW * r
        return DensityPair(r, r.copy(), d, d.copy(), "analytic")


@dataclass(eq=False)
class RateReport:
    value: float
    branch: str
    integrand: np.ndarray
    n: int
    gamma: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)

    def summary(self) -> dict:
        val = self.value if self.finite else "inf"
        return {"value": val, "branch": self.branch, "N": self.n, "gamma": self.gamma, **self.extra}

    def write(self, csv_path, json_path, columns: dict | None = None) -> None:
        """Per-cell CSV (x, integrand, plus any ``columns``) and summary JSON."""
        cols = {"x": cell_centers(self.n), "integrand": self.integrand}
        cols.update(columns or {})
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(cols))
            for row in zip(*cols.values()):
                w.writerow([_fmt(v) for v in row])
        with open(json_path, "w") as fh:
            json.dump(self.summary(), fh, sort_keys=True)


def _fmt(v) -> str:
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


# -- helpers ------------------------------------------------------------------------


def _rates(rate: SwitchingRate, n: int):
    x = cell_centers(n)
    return rate.lam_plus(x) * np.ones(n), rate.lam_minus(x) * np.ones(n)


def _derivatives_equal(d: DensityPair) -> bool:
    scale = 1.0 + np.max(np.abs(d.drho_plus))
    return bool(np.max(np.abs(d.drho_plus - d.drho_minus)) <= DERIV_RTOL * scale)


def _general_inputs(d: DensityPair, rate: SwitchingRate):
    if not _derivatives_equal(d):
        raise DomainError("velocity sheets have different derivatives; rate is infinite")
    lp, lm = _rates(rate, d.n)
    if np.any(lp * lm <= 0):
        raise PositivityError("lambda+ lambda- vanishes on the grid; use rate_gamma_zero for gamma -> 0")
    if not d.strictly_positive:
        raise DomainError("general formula needs strictly positive densities")
    return lp * d.rho_plus, lm * d.rho_minus, d.drho_plus, lp, lm


def general_integrand(a, b, drho):
    """Pointwise rate density for lambda+ rho+ = a, lambda- rho- = b and common slope drho."""
    s = np.sqrt(a * b)
    return (0.5 * drho * np.log(a / b) + drho * stable_arcsinh(drho / (2.0 * s))
            - np.sqrt(4.0 * a * b + drho**2) + a + b)


def constant_integrand(a, b):
    return (np.sqrt(a) - np.sqrt(b)) ** 2


# -- operations -------------------------------------------------------------------------


def rate_explicit(d: DensityPair, rate: SwitchingRate) -> RateReport:
    """Explicit rate function of a density pair, with the infinite and constant branches."""
    n = d.n
    if not _derivatives_equal(d):
        integ = np.full(n, np.inf)
        return RateReport(math.inf, "infinite", integ, n, rate.gamma)
    lp, lm = _rates(rate, n)
    if np.any(lp * lm <= 0):
        raise PositivityError("lambda+ lambda- vanishes on the grid; use rate_gamma_zero for gamma -> 0")
    a, b = lp * d.rho_plus, lm * d.rho_minus
    if d.is_constant:
        integ = constant_integrand(a, b)
        return RateReport(quadrature(integ), "constant", integ, n, rate.gamma)
    if not d.strictly_positive:
        raise DomainError("general formula needs strictly positive densities")
    integ = general_integrand(a, b, d.drho_plus)
    return RateReport(quadrature(integ), "general", integ, n, rate.gamma)


def optimal_tilt(d: DensityPair, rate: SwitchingRate) -> np.ndarray:
    """Pointwise minimizer of the tilt objective."""
    a, b, drho, _, _ = _general_inputs(d, rate)
    return 0.5 * np.log(a / b) + stable_arcsinh(drho / (2.0 * np.sqrt(a * b)))


def tilt_integrand(d: DensityPair, rate: SwitchingRate, tilt) -> np.ndarray:
    a, b, drho, _, _ = _general_inputs(d, rate)
    eta = np.asarray(tilt, dtype=float) * np.ones(d.n)
    return -drho * eta + a * np.expm1(-eta) + b * np.expm1(eta)


def tilt_objective(d: DensityPair, rate: SwitchingRate, tilt) -> float:
    """J(tilt); -J is a lower bound on the rate for every tilt."""
    return quadrature(tilt_integrand(d, rate, tilt))


def rate_w_form(w: WForm, rate: SwitchingRate) -> RateReport:
    w.check_normalized()
    lp, lm = _rates(rate, w.n)
    prod = lp * lm
    if np.any(prod <= 0):
        raise PositivityError("lambda+ lambda- vanishes on the grid; use rate_gamma_zero for gamma -> 0")
    dw = w.dW
    integ = (-0.5 * dw * np.log(lp / lm) + dw * stable_arcsinh(dw / (2.0 * np.sqrt(prod)))
             - np.sqrt(4.0 * prod + dw**2) + lp + lm) * np.exp(-w.W)
    return RateReport(quadrature(integ), "w-form", integ, w.n, rate.gamma)


@dataclass
class GammaDerivative:
    per_cell: np.ndarray
    integral: float


def gamma_derivative_literal(w: WForm, rate: SwitchingRate) -> np.ndarray:
    """The gamma-derivative of the W-form integrand, evaluated term by term."""
    lp, lm = _rates(rate, w.n)
    prod = lp * lm
    dw = w.dW
    num = 4.0 * prod + (lp - lm) * dw - (lp + lm) * np.sqrt(4.0 * prod + dw**2)
    return num / (2.0 * prod) * np.exp(-w.W)


def gamma_derivative(w: WForm, rate: SwitchingRate) -> GammaDerivative:
    """d/dgamma of the W-form rate, per cell and integrated.

    Uses the equivalent form -2 (W' - (l+ - l-))^2 / D with
    D = 4 l+ l- + (l+ - l-) W' + (l+ + l-) sqrt(4 l+ l- + W'^2) >= 8 l+ l-,
    which avoids the cancellation in the direct expression.
    """
    if not rate.gamma > 0:
        raise ZeroDivisionError("gamma derivative needs gamma > 0")
    lp, lm = _rates(rate, w.n)
    prod = lp * lm
    dw = w.dW
    diff = lp - lm
    den = 4.0 * prod + diff * dw + (lp + lm) * np.sqrt(4.0 * prod + dw**2)
    per_cell = -2.0 * (dw - diff) ** 2 / den * np.exp(-w.W)
    assert np.all(per_cell <= 1e-12), "gamma derivative must be non-positive"
    return GammaDerivative(per_cell, quadrature(per_cell))


def rate_gamma_zero(w: WForm, pot: Potential, flat_tol: float = 1e-12) -> RateReport:
    """Formal gamma -> 0 limit of the W-form rate.

    Cells where U' vanishes (|U'| <= flat_tol * max|U'|) are excluded and listed
    in ``extra['flagged_cells']``. A cell with W' = 0 contributes |U'| exp(-W).
    """
    w.check_normalized()
    x = cell_centers(w.n)
    du = pot.dU(x) * np.ones(w.n)
    scale = np.max(np.abs(du))
    flagged = np.abs(du) <= flat_tol * scale
    if scale == 0 or np.all(flagged):
        raise ValueError("U' vanishes on the whole grid; the gamma -> 0 limit needs isolated zeros")
    dw = w.dW
    ok = ~flagged
    mismatch = ok & (dw * du < 0)
    extra = {"flagged_cells": np.flatnonzero(flagged).tolist()}
    if np.any(mismatch):
        integ = np.where(mismatch, np.inf, 0.0)
        extra["mismatch_cells"] = np.flatnonzero(mismatch).tolist()
        return RateReport(math.inf, "infinite", integ, w.n, 0.0, extra)
    integ = np.zeros(w.n)
    au, aw = np.abs(du[ok]), np.abs(dw[ok])
    with np.errstate(divide="ignore", invalid="ignore"):
        xlogx = np.where(aw > 0, aw * np.log(aw / au), 0.0)
    integ[ok] = (xlogx - aw + au) * np.exp(-w.W[ok])
    return RateReport(quadrature(integ), "gamma-zero", integ, w.n, 0.0, extra)


@dataclass
class AsymmetryScan:
    c: np.ndarray
    values: np.ndarray

    @property
    def argmin(self) -> float:
        return float(self.c[int(np.argmin(self.values))])


def scan_velocity_asymmetry(rho: Callable, drho: Callable, rate: SwitchingRate, cs, n: int = 256) -> AsymmetryScan:
    """Rate of mu_c with rho_plus = rho + c, rho_minus = rho - c for each c.

    ``rho`` is normalized to a probability density on the torus first.
    """
    base = DensityPair.common(rho, drho, n)
    k = float(np.min(base.rho_plus))
    cs = np.asarray(cs, dtype=float)
    if np.any(np.abs(cs) >= k):
        raise PositivityError(f"|c| must stay below min rho = {k}")
    vals = np.array([rate_explicit(DensityPair.common(rho, drho, n, c), rate).value for c in cs])
    return AsymmetryScan(cs, vals)


def report_columns(d: DensityPair, rate: SwitchingRate) -> dict:
    """Per-cell CSV columns for a general-branch report."""
    lp, lm = _rates(rate, d.n)
    try:
        eta = optimal_tilt(d, rate)
    except (DomainError, PositivityError):
        eta = np.full(d.n, np.nan)
    return {"lambda_plus": lp, "lambda_minus": lm, "rho_plus": d.rho_plus,
            "rho_minus": d.rho_minus, "eta_star": eta}
