"""Potentials, switching rates and stationary densities for the 1D zig-zag process.

Torus potentials are 1-periodic on [0, 1) and are stored internally as a real
trigonometric series

    U(x) = a_0 + sum_k a_k cos(2 pi k x) + b_k sin(2 pi k x),

which covers the zero, cosine and tabulated (band-limited interpolant) kinds with
one evaluator. Line potentials are of power type, U(x) = c |x|^p / p.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TORUS = "torus"
LINE = "line"

TORUS_KINDS = ("zero", "cosine", "tabulated")
LINE_KINDS = ("zero", "quadratic", "power")


class UnsupportedDomainError(ValueError):
    """Operation is not defined on the requested domain."""


def wrap(x):
    """Reduce torus coordinates to [0, 1)."""
    y = np.mod(x, 1.0)
    # np.mod can return exactly 1.0 for tiny negative inputs
    if np.ndim(y) == 0:
        return 0.0 if y >= 1.0 else float(y)
    return np.where(y >= 1.0, 0.0, y)


def cell_centers(n: int) -> np.ndarray:
    """Centers of the half-open cells [i/n, (i+1)/n)."""
    if n < 2:
        raise ValueError(f"grid needs at least 2 cells, got {n}")
    return (np.arange(n) + 0.5) / n


@dataclass(frozen=True, eq=False)
class Potential:
    """A potential U with first and second derivatives.

    Use the constructors (:meth:`zero`, :meth:`cosine`, :meth:`quadratic`,
    :meth:`power`, :meth:`tabulated`, :meth:`from_config`) rather than the
    raw fields.
    """

    kind: str
    domain: str
    freqs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cos_coef: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sin_coef: np.ndarray = field(default_factory=lambda: np.zeros(0))
    offset: float = 0.0
    scale: float = 0.0
    exponent: float = 2.0
    params: dict = field(default_factory=dict)

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, domain: str = TORUS) -> "Potential":
        if domain not in (TORUS, LINE):
            raise ValueError(f"unknown domain {domain!r}")
        return cls(kind="zero", domain=domain, params={"kind": "zero"})

    @classmethod
    def cosine(cls, amplitude: float, frequency: int = 1, phase: float = 0.0) -> "Potential":
        """U(x) = A cos(2 pi k x + phase) on the torus."""
        if int(frequency) != frequency or frequency < 1:
            raise ValueError("cosine frequency must be a positive integer")
        k = int(frequency)
        return cls(
            kind="cosine",
            domain=TORUS,
            freqs=np.array([k], dtype=float),
            cos_coef=np.array([amplitude * np.cos(phase)]),
            sin_coef=np.array([-amplitude * np.sin(phase)]),
            params={"kind": "cosine", "amplitude": amplitude, "frequency": k, "phase": phase},
        )

    @classmethod
    def quadratic(cls, scale: float = 1.0) -> "Potential":
        """U(x) = a x^2 / 2 on the real line."""
        return cls(kind="quadratic", domain=LINE, scale=float(scale), exponent=2.0,
                   params={"kind": "quadratic", "scale": scale})

    @classmethod
    def power(cls, scale: float, exponent: float) -> "Potential":
        """U(x) = c |x|^p / p on the real line, p > 1."""
        if exponent <= 1.0:
            raise ValueError("power potential needs exponent > 1")
        return cls(kind="power", domain=LINE, scale=float(scale), exponent=float(exponent),
                   params={"kind": "power", "scale": scale, "exponent": exponent})

    @classmethod
    def tabulated(cls, values) -> "Potential":
        """Band-limited periodic interpolant of U sampled at the cell centers.

        ``values[j]`` is U((j + 1/2)/n). Derivatives are spectral.
        """
        u = np.asarray(values, dtype=float)
        n = u.size
        if n < 4:
            raise ValueError("tabulated potential needs at least 4 values")
        c = np.fft.rfft(u) / n
        k = np.arange(c.size, dtype=float)
        # undo the half-cell shift of the sample points
        c = c * np.exp(-1j * np.pi * k / n)
        a = 2.0 * c.real
        b = -2.0 * c.imag
        if n % 2 == 0:
            # Nyquist mode is a pure cosine with half weight
            a[-1] = 0.5 * a[-1]
            b[-1] = 0.0
        return cls(
            kind="tabulated",
            domain=TORUS,
            freqs=k[1:],
            cos_coef=a[1:],
            sin_coef=b[1:],
            offset=float(c[0].real),
            params={"kind": "tabulated", "values": u.tolist()},
        )

    @classmethod
    def from_config(cls, cfg: dict, domain: str | None = None) -> "Potential":
        kind = cfg.get("kind")
        if kind == "zero":
            return cls.zero(domain or TORUS)
        if kind == "cosine":
            return cls.cosine(cfg.get("amplitude", 1.0), cfg.get("frequency", 1), cfg.get("phase", 0.0))
        if kind == "quadratic":
            return cls.quadratic(cfg.get("scale", 1.0))
        if kind == "power":
            return cls.power(cfg.get("scale", 1.0), cfg["exponent"])
        if kind == "tabulated":
            return cls.tabulated(cfg["values"])
        raise ValueError(f"unknown potential kind {kind!r}")

    # -- evaluation ---------------------------------------------------------

    @property
    def is_torus(self) -> bool:
        return self.domain == TORUS

    def _trig(self, x, order: int):
        x = np.asarray(x, dtype=float)
        if self.freqs.size == 0:
            base = self.offset if order == 0 else 0.0
            return np.full(x.shape, base) if x.shape else base
        w = 2.0 * np.pi * self.freqs
        ph = np.multiply.outer(x, w)
        c, s = np.cos(ph), np.sin(ph)
        if order == 0:
            out = c @ self.cos_coef + s @ self.sin_coef + self.offset
        elif order == 1:
            out = (-s) @ (w * self.cos_coef) + c @ (w * self.sin_coef)
        else:
            out = -(c @ (w**2 * self.cos_coef) + s @ (w**2 * self.sin_coef))
        return out if x.shape else float(out)

    def _power(self, x, order: int):
        x = np.asarray(x, dtype=float)
        c, p = self.scale, self.exponent
        ax = np.abs(x)
        if order == 0:
            out = c * ax**p / p
        elif order == 1:
            out = c * np.sign(x) * ax ** (p - 1.0)
        else:
            with np.errstate(divide="ignore"):
                out = c * (p - 1.0) * ax ** (p - 2.0)
        return out if x.shape else float(out)

    def U(self, x):
        return self._trig(x, 0) if self.is_torus else self._power(x, 0)

    def dU(self, x):
        return self._trig(x, 1) if self.is_torus else self._power(x, 1)

    def d2U(self, x):
        return self._trig(x, 2) if self.is_torus else self._power(x, 2)

    def sup_abs_d2U(self) -> float:
        """Global bound on |U''| for torus potentials (sum of mode bounds)."""
        if not self.is_torus:
            raise UnsupportedDomainError("global U'' bound only exists on the torus")
        w2 = (2.0 * np.pi * self.freqs) ** 2
        return float(np.sum(w2 * np.hypot(self.cos_coef, self.sin_coef)))

    def sup_abs_d2U_segment(self, a: float, b: float) -> float:
        """Bound on sup |U''| over the segment between a and b."""
        if self.is_torus:
            return self.sup_abs_d2U()
        lo, hi = min(a, b), max(a, b)
        c, p = abs(self.scale), self.exponent
        if p >= 2.0:
            return c * (p - 1.0) * max(abs(lo), abs(hi)) ** (p - 2.0)
        nearest = 0.0 if lo <= 0.0 <= hi else min(abs(lo), abs(hi))
        if nearest == 0.0:
            return np.inf
        return c * (p - 1.0) * nearest ** (p - 2.0)

    def to_config(self) -> dict:
        return dict(self.params)


@dataclass(frozen=True, eq=False)
class SwitchingRate:
    """lambda(x, v) = max(0, v U'(x)) + gamma with constant refreshment gamma."""

    potential: Potential
    gamma: float

    def __post_init__(self):
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ValueError(f"gamma must be a nonnegative real, got {self.gamma}")

    def lam(self, x, v):
        return np.maximum(0.0, np.asarray(v) * self.potential.dU(x)) + self.gamma

    def lam_plus(self, x):
        return self.gamma + np.maximum(0.0, self.potential.dU(x))

    def lam_minus(self, x):
        return self.gamma + np.maximum(0.0, -self.potential.dU(x))


def eval_lambda(rate: SwitchingRate, x, v):
    """Switching intensity at (x, v)."""
    out = rate.lam(x, v)
    return float(out) if np.ndim(out) == 0 else out


def trapezoid(values, dx: float) -> float:
    """Periodic trapezoid rule: dx * sum(values)."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("empty grid")
    return float(dx * values.sum())


def partition_function(pot: Potential, n: int = 4096) -> float:
    if not pot.is_torus:
        raise UnsupportedDomainError("normalization needs the torus")
    return trapezoid(np.exp(-pot.U(cell_centers(n))), 1.0 / n)


def stationary_density(pot: Potential, n: int) -> np.ndarray:
    """exp(-U)/Z at the n cell centers, normalized so that dx * sum = 1."""
    if not pot.is_torus:
        raise UnsupportedDomainError("stationary density is only normalizable on the torus")
    x = cell_centers(n)
    w = np.exp(-pot.U(x))
    return w / trapezoid(w, 1.0 / n)


def local_rate_bound(rate: SwitchingRate, x: float, v: int, h: float, n_refine: int = 16) -> float:
    """Upper bound on lambda(x + v s, v) for 0 <= s <= h.

    Maximum over a refinement grid of the segment plus the Lipschitz margin
    h * sup |U''| on the segment.
    """
    if h <= 0:
        raise ValueError("horizon must be positive")
    pot = rate.potential
    if pot.kind == "zero":
        return float(rate.gamma)
    s = np.linspace(0.0, h, n_refine + 1)
    grid_max = float(np.max(np.maximum(0.0, v * pot.dU(x + v * s))))
    margin = h * pot.sup_abs_d2U_segment(x, x + v * h)
    return rate.gamma + grid_max + margin


# -- growth-condition diagnostics ------------------------------------------------


@dataclass
class ConditionResult:
    name: str
    passed: bool
    detail: dict


@dataclass
class GrowthReport:
    radii: list
    conditions: list
    heuristic: bool = True
    note: str = ("heuristic trend check over finitely many radii; "
                 "asymptotic conditions cannot be verified by finite evaluation")

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def __getitem__(self, name: str) -> ConditionResult:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "heuristic": self.heuristic,
            "note": self.note,
            "radii": list(self.radii),
            "conditions": {c.name: {"passed": c.passed, **c.detail} for c in self.conditions},
        }


def _decreasing_to_zero(seq: np.ndarray) -> bool:
    m = np.abs(seq)
    return bool(np.all(np.isfinite(m)) and np.all(m[1:] < m[:-1] * (1.0 - 1e-9)))


def _increasing_to_inf(seq: np.ndarray) -> bool:
    return bool(np.all(np.isfinite(seq)) and np.all(seq[1:] > seq[:-1] * (1.0 + 1e-9)) and seq[-1] > 0)


def check_growth_conditions(U: Potential, Vaux: Potential, radii) -> GrowthReport:
    """Trend diagnostics for the line-domain growth conditions on U and Vaux.

    B.1: U and sign(x) U' grow. B.2: U'/U -> 0. B.3: U''/U' -> 0.
    C.1: Vaux and sign(x) Vaux' grow. C.2: Vaux/U, U'/Vaux, Vaux'/U' -> 0.
    C.3: U''/Vaux' -> 0. Each is checked at +r and -r.
    """
    if U.is_torus or Vaux.is_torus:
        raise UnsupportedDomainError("growth conditions concern the real line")
    r = np.asarray(radii, dtype=float)
    if r.size < 3 or np.any(np.diff(r) <= 0) or r[0] <= 0:
        raise ValueError("radii must be positive, increasing, at least 3 entries")

    conds = []

    def both(fn):
        return {"+": fn(r), "-": fn(-r)}

    def ratio(num, den):
        return lambda x: num(x) / den(x)

    spec = {
        "B.1": [("U", U.U, "inf"), ("sign*U'", lambda x: np.sign(x) * U.dU(x), "inf")],
        "B.2": [("U'/U", ratio(U.dU, U.U), "zero")],
        "B.3": [("U''/U'", ratio(U.d2U, U.dU), "zero")],
        "C.1": [("Vaux", Vaux.U, "inf"), ("sign*Vaux'", lambda x: np.sign(x) * Vaux.dU(x), "inf")],
        "C.2": [("Vaux/U", ratio(Vaux.U, U.U), "zero"),
                ("U'/Vaux", ratio(U.dU, Vaux.U), "zero"),
                ("Vaux'/U'", ratio(Vaux.dU, U.dU), "zero")],
        "C.3": [("U''/Vaux'", ratio(U.d2U, Vaux.dU), "zero")],
    }
    for name, checks in spec.items():
        detail, ok = {}, True
        for label, fn, target in checks:
            vals = both(fn)
            test = _increasing_to_inf if target == "inf" else _decreasing_to_zero
            passed = test(vals["+"]) and test(vals["-"])
            ok = ok and passed
            detail[label] = {"+": vals["+"].tolist(), "-": vals["-"].tolist(), "trend_ok": passed}
        conds.append(ConditionResult(name, ok, detail))
    return GrowthReport(radii=r.tolist(), conditions=conds)


def spectral_derivative(values) -> np.ndarray:
    """Derivative of the periodic band-limited interpolant at the sample points."""
    u = np.asarray(values, dtype=float)
    n = u.size
    c = np.fft.rfft(u)
    k = np.arange(c.size)
    if n % 2 == 0:
        c[-1] = 0.0
    return np.fft.irfft(2j * np.pi * k * c, n)
