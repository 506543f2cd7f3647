"""Empirical occupation measures and time averages along zig-zag skeletons."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .potential import TORUS, UnsupportedDomainError, cell_centers
from .sampler import Skeleton

# Gauss-Legendre order 8 on [0, 1]
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS
_MAX_PIECE = 0.125


@dataclass(eq=False)
class EmpiricalMeasure:
    """Time spent per (cell, velocity); column 0 is v=+1, column 1 is v=-1."""

    n: int
    occupancy: np.ndarray
    t_total: float

    @property
    def probabilities(self) -> np.ndarray:
        return self.occupancy / self.t_total

    @property
    def x_marginal(self) -> np.ndarray:
        return self.probabilities.sum(axis=1)

    @property
    def plus_fraction(self) -> float:
        return float(self.occupancy[:, 0].sum() / self.t_total)

    def merge(self, other: "EmpiricalMeasure") -> "EmpiricalMeasure":
        if other.n != self.n:
            raise ValueError("cannot merge measures on different grids")
        return EmpiricalMeasure(self.n, self.occupancy + other.occupancy, self.t_total + other.t_total)

    __add__ = merge

    def to_csv(self, path, normalized: bool = False) -> None:
        xc = cell_centers(self.n)
        header = ["cell", "x_center", "occ_plus", "occ_minus"]
        if normalized:
            header += ["p_plus", "p_minus"]
            p = self.probabilities
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(self.n):
                row = [i, repr(float(xc[i])), repr(float(self.occupancy[i, 0])),
                       repr(float(self.occupancy[i, 1]))]
                if normalized:
                    row += [repr(float(p[i, 0])), repr(float(p[i, 1]))]
                w.writerow(row)


def merge_all(measures) -> EmpiricalMeasure:
    """Sum measures in the given order."""
    it = iter(measures)
    total = next(it)
    for m in it:
        total = total.merge(m)
    return total


def _covered(lo_cells: np.ndarray, hi_cells: np.ndarray, n: int) -> np.ndarray:
    """Per-cell length (in cell units) of the union of [lo, hi) intervals wrapped mod n."""
    out = np.zeros(n + 1)
    full = np.floor(hi_cells / n) - np.floor(lo_cells / n)
    total_full = float(full.sum())
    for sign, y in ((1.0, hi_cells), (-1.0, lo_cells)):
        ym = y - n * np.floor(y / n)
        ym = np.where(ym >= n, 0.0, ym)
        k = np.floor(ym).astype(np.int64)
        frac = ym - k
        # [0, k) fully covered plus a fraction of cell k
        np.add.at(out, 0, sign * y.size)
        np.add.at(out, k, -sign)
        np.add.at(out, k, sign * frac)
        np.add.at(out, np.minimum(k + 1, n), -sign * frac)
    occ = np.cumsum(out)[:n]
    return occ + total_full


def accumulate(sk: Skeleton, n: int) -> EmpiricalMeasure:
    """Exact occupation times of the cells [i/n, (i+1)/n) for each velocity."""
    if sk.domain != TORUS:
        raise UnsupportedDomainError("occupation histogram needs the torus")
    if n < 2:
        raise ValueError("need at least 2 cells")
    _, x0, v, dur = sk.segments()
    keep = dur > 0
    x0, v, dur = x0[keep], v[keep], dur[keep]
    occ = np.zeros((n, 2))
    for col, sgn in ((0, 1.0), (1, -1.0)):
        m = v == sgn
        if not np.any(m):
            continue
        a = x0[m] * n
        b = (x0[m] + sgn * dur[m]) * n
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        occ[:, col] = _covered(lo, hi, n) / n
    np.maximum(occ, 0.0, out=occ)
    return EmpiricalMeasure(n, occ, float(sk.t_final))


@dataclass(frozen=True)
class Observable:
    """A function f(x, v) evaluated elementwise on numpy arrays."""

    f: Callable
    v_dependent: bool = False
    name: str = "f"
    const: float | None = None

    def __call__(self, x, v):
        return np.broadcast_to(self.f(x, v), np.broadcast(x, v).shape)

    def check_bounded(self, n: int = 1024) -> float:
        """Sup-norm of f over a torus grid; raises if not finite."""
        x = cell_centers(n)
        s = max(np.max(np.abs(self(x, np.ones(n)))), np.max(np.abs(self(x, -np.ones(n)))))
        if not np.isfinite(s):
            raise ValueError(f"observable {self.name} is unbounded on the torus")
        return float(s)

    @classmethod
    def constant(cls, c: float) -> "Observable":
        return cls(lambda x, v: np.full(np.shape(x), float(c)), name=f"const({c})", const=float(c))

    @classmethod
    def cosine(cls, amplitude: float = 1.0, frequency: int = 1, phase: float = 0.0) -> "Observable":
        return cls(lambda x, v: amplitude * np.cos(2 * np.pi * frequency * x + phase),
                   name=f"{amplitude}cos(2pi{frequency}x+{phase})")

    @classmethod
    def velocity(cls) -> "Observable":
        return cls(lambda x, v: np.asarray(v, dtype=float), v_dependent=True, name="v")

    @classmethod
    def from_config(cls, cfg: dict) -> "Observable":
        kind = cfg.get("kind")
        if kind == "constant":
            return cls.constant(cfg["value"])
        if kind == "cosine":
            return cls.cosine(cfg.get("amplitude", 1.0), cfg.get("frequency", 1), cfg.get("phase", 0.0))
        if kind == "velocity":
            return cls.velocity()
        raise ValueError(f"unknown observable kind {kind!r}")

    def grid_values(self, n: int) -> np.ndarray:
        """Values at the 2n states (cells, then velocity +1 / -1), shape (n, 2)."""
        x = cell_centers(n)
        return np.stack([self(x, np.ones(n)), self(x, -np.ones(n))], axis=1)


def path_integral(sk: Skeleton, f: Observable, t: float | None = None) -> float:
    """Integral of f(X_s, V_s) over [0, t] by Gauss-Legendre on each linear piece.

    Segments longer than 1/8 are split so the quadrature stays accurate for
    smooth periodic observables.
    """
    if t is not None and t < sk.t_final:
        sk = sk.truncate(t)
    if f.const is not None:
        return f.const * sk.t_final
    _, x0, v, dur = sk.segments()
    keep = dur > 0
    x0, v, dur = x0[keep], v[keep], dur[keep]
    pieces = np.maximum(1, np.ceil(dur / _MAX_PIECE)).astype(np.int64)
    idx = np.repeat(np.arange(dur.size), pieces)
    offs = np.arange(idx.size) - np.repeat(np.cumsum(pieces) - pieces, pieces)
    plen = dur[idx] / pieces[idx]
    start = x0[idx] + v[idx] * offs * plen
    xs = start[:, None] + v[idx][:, None] * plen[:, None] * _GL_NODES[None, :]
    if sk.domain == TORUS:
        xs = np.mod(xs, 1.0)
    vals = f(xs, np.broadcast_to(v[idx][:, None], xs.shape))
    return float(np.sum((vals @ _GL_WEIGHTS) * plen))


def time_average(sk: Skeleton, f: Observable, t: float | None = None) -> float:
    """(1/t) times the path integral of f; t defaults to the full horizon."""
    tt = sk.t_final if t is None else t
    if not tt > 0:
        raise ValueError("time average needs positive total time")
    return path_integral(sk, f, t) / tt


def tv_distance(m, p) -> float:
    """Total variation between an empirical x-marginal and a density vector.

    ``m`` is an EmpiricalMeasure or a nonnegative vector (normalized here);
    ``p`` is a density on the same grid with dx * sum(p) = 1.
    """
    mv = m.x_marginal if isinstance(m, EmpiricalMeasure) else np.asarray(m, dtype=float)
    p = np.asarray(p, dtype=float)
    if mv.shape != p.shape:
        raise ValueError(f"shape mismatch {mv.shape} vs {p.shape}")
    mv = mv / mv.sum()
    return float(0.5 * np.abs(mv - p / p.size).sum())
