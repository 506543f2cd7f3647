"""Exact simulation of zig-zag skeletons by Poisson thinning.

Between events the path is x + v t. Candidate event times come from a local
envelope rate (see :func:`zigzag_ldp.potential.local_rate_bound`) and are
accepted with probability lambda / envelope. Every accepted event flips v.

Randomness is drawn from Philox streams keyed by ``(seed, stream)`` so each
trajectory is reproducible independently of how an ensemble is scheduled.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .potential import LINE, TORUS, Potential, SwitchingRate, wrap

_CHUNK = 4096
_OK, _NEED_UNIFORMS, _BUFFER_FULL, _BOUND_VIOLATION = 0, 1, 2, 3
_N_REFINE = 16


class ConfigError(ValueError):
    pass


class BoundViolationError(RuntimeError):
    """The thinning envelope was exceeded by the true rate."""


@dataclass(frozen=True)
class State:
    x: float
    v: int

    def __post_init__(self):
        if self.v not in (1, -1):
            raise ValueError(f"velocity must be +1 or -1, got {self.v}")


@dataclass(frozen=True)
class SimConfig:
    t_max: float
    seed: int = 0
    h: float | None = None
    domain: str = TORUS

    def __post_init__(self):
        if not (self.t_max > 0):
            raise ConfigError(f"t_max must be positive, got {self.t_max}")
        if self.h is not None and not (self.h > 0):
            raise ConfigError(f"thinning horizon h must be positive, got {self.h}")
        if self.domain not in (TORUS, LINE):
            raise ConfigError(f"unknown domain {self.domain!r}")


@dataclass(eq=False)
class Skeleton:
    """Event record of one trajectory.

    ``times[i]``, ``xs[i]`` are the i-th event time and position and
    ``vs[i]`` the velocity right after it.
    """

    x0: float
    v0: int
    times: np.ndarray
    xs: np.ndarray
    vs: np.ndarray
    t_final: float
    domain: str = TORUS
    meta: dict = field(default_factory=dict)

    @property
    def n_events(self) -> int:
        return int(self.times.size)

    @property
    def initial(self) -> State:
        return State(self.x0, self.v0)

    def segments(self):
        """Arrays (start_time, start_x, velocity, duration) of the linear pieces."""
        t0 = np.concatenate(([0.0], self.times))
        x0 = np.concatenate(([self.x0], self.xs))
        v = np.concatenate(([self.v0], self.vs)).astype(float)
        dur = np.diff(np.concatenate((t0, [self.t_final])))
        return t0, x0, v, dur

    def truncate(self, t: float) -> "Skeleton":
        """The same path restricted to [0, t]."""
        if not 0 < t <= self.t_final:
            raise ValueError("truncation time outside (0, t_final]")
        k = int(np.searchsorted(self.times, t, side="right"))
        return Skeleton(self.x0, self.v0, self.times[:k], self.xs[:k], self.vs[:k], float(t),
                        self.domain, dict(self.meta))

    def to_csv(self, path) -> None:
        end = position_at(self, self.t_final)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "v"])
            w.writerow([repr(0.0), repr(float(self.x0)), self.v0])
            for t, x, v in zip(self.times, self.xs, self.vs):
                w.writerow([repr(float(t)), repr(float(x)), int(v)])
            w.writerow([repr(float(self.t_final)), repr(float(end.x)), end.v])

    def write(self, csv_path) -> None:
        """CSV of the skeleton plus a JSON metadata sidecar next to it."""
        csv_path = Path(csv_path)
        self.to_csv(csv_path)
        side = {k: self.meta.get(k) for k in ("seed", "stream", "proposals", "acceptances")}
        side["t_max"] = self.t_final
        csv_path.with_suffix(".json").write_text(json.dumps(side, sort_keys=True))


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent counter-based generator for trajectory ``stream``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def next_event_constant_rate(lam0: float, rng) -> float:
    """Exact event time for a constant rate by inversion.

    ``rng`` is a Generator or a uniform in (0, 1).
    """
    if not lam0 > 0:
        raise ValueError(f"rate must be positive, got {lam0}")
    u = rng if isinstance(rng, float) else 1.0 - rng.random()
    return -math.log(u) / lam0


# -- numba kernel -----------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _dU(code, w, a, b, scale, p, x):
    if code == 0:
        s = 0.0
        for k in range(w.size):
            ph = w[k] * x
            s += w[k] * (b[k] * math.cos(ph) - a[k] * math.sin(ph))
        return s
    ax = abs(x)
    if ax == 0.0:
        return 0.0
    g = scale * ax ** (p - 1.0)
    return g if x > 0 else -g


@numba.njit(cache=True, nogil=True)
def _d2sup(code, scale, p, sup_torus, xa, xb):
    if code == 0:
        return sup_torus
    lo = min(xa, xb)
    hi = max(xa, xb)
    c = abs(scale)
    if p >= 2.0:
        return c * (p - 1.0) * max(abs(lo), abs(hi)) ** (p - 2.0)
    if lo <= 0.0 <= hi:
        return np.inf
    return c * (p - 1.0) * min(abs(lo), abs(hi)) ** (p - 2.0)


@numba.njit(cache=True, nogil=True)
def _bound(code, w, a, b, scale, p, sup_torus, gamma, x, v, h, n_refine):
    if code == 1 and scale == 0.0:
        return gamma
    if code == 0 and w.size == 0:
        return gamma
    m = 0.0
    for j in range(n_refine + 1):
        r = v * _dU(code, w, a, b, scale, p, x + v * h * j / n_refine)
        if r > m:
            m = r
    return gamma + m + h * _d2sup(code, scale, p, sup_torus, x, x + v * h)


@numba.njit(cache=True, nogil=True)
def _advance(code, w, a, b, scale, p, sup_torus, gamma, torus, h_cfg, n_refine,
             x, v, t, t_max, u, ev_t, ev_x, ev_v, n_ev, counts):
    """Run thinning until t_max, uniforms run out, or the event buffer fills."""
    i = 0
    nu = u.size
    cap = ev_t.size
    while t < t_max:
        if i + 2 > nu:
            return x, v, t, n_ev, _NEED_UNIFORMS, i
        if n_ev >= cap:
            return x, v, t, n_ev, _BUFFER_FULL, i
        h = h_cfg
        if h <= 0.0:
            h = min(1.0, 1.0 / (1.0 + _d2sup(code, scale, p, sup_torus, x, x + v)))
        t_end = min(t + h, t_max)
        lb = _bound(code, w, a, b, scale, p, sup_torus, gamma, x, v, h, n_refine)
        if lb <= 0.0:
            x = x + v * (t_end - t)
            if torus:
                x = x - math.floor(x)
                if x >= 1.0:
                    x = 0.0
            t = t_end
            continue
        while True:
            if i + 2 > nu:
                return x, v, t, n_ev, _NEED_UNIFORMS, i
            tau = -math.log(1.0 - u[i]) / lb
            i += 1
            if t + tau >= t_end:
                x = x + v * (t_end - t)
                t = t_end
                if torus:
                    x = x - math.floor(x)
                    if x >= 1.0:
                        x = 0.0
                break
            t += tau
            x = x + v * tau
            if torus:
                x = x - math.floor(x)
                if x >= 1.0:
                    x = 0.0
            counts[0] += 1
            r = v * _dU(code, w, a, b, scale, p, x)
            lam = gamma + (r if r > 0.0 else 0.0)
            if lam > lb * (1.0 + 1e-12):
                return x, v, t, n_ev, _BOUND_VIOLATION, i
            acc = u[i] * lb < lam
            i += 1
            if acc:
                counts[1] += 1
                v = -v
                ev_t[n_ev] = t
                ev_x[n_ev] = x
                ev_v[n_ev] = v
                n_ev += 1
                break
    return x, v, t, n_ev, _OK, i


def _kernel_args(rate: SwitchingRate, domain: str):
    pot = rate.potential
    if pot.domain != domain:
        raise ConfigError(f"potential domain {pot.domain!r} does not match simulation domain {domain!r}")
    if pot.is_torus:
        return (0, 2.0 * np.pi * pot.freqs, pot.cos_coef.astype(float), pot.sin_coef.astype(float),
                0.0, 2.0, pot.sup_abs_d2U())
    if pot.kind == "power" and pot.exponent < 2.0:
        raise ConfigError("thinning bound needs U'' bounded on segments (power exponent >= 2)")
    empty = np.zeros(0)
    return (1, empty, empty, empty, pot.scale, pot.exponent, 0.0)


def simulate(rate: SwitchingRate, s0: State, cfg: SimConfig, stream: int = 0) -> Skeleton:
    """Simulate one zig-zag trajectory on [0, cfg.t_max]."""
    code, w, a, b, scale, p, sup_t = _kernel_args(rate, cfg.domain)
    torus = cfg.domain == TORUS
    h = cfg.h if cfg.h is not None else (0.1 if torus else -1.0)
    x = wrap(float(s0.x)) if torus else float(s0.x)
    v = int(s0.v)
    rng = stream_rng(cfg.seed, stream)
    cap = 1024
    ev_t, ev_x = np.empty(cap), np.empty(cap)
    ev_v = np.empty(cap, dtype=np.int64)
    n_ev = 0
    counts = np.zeros(2, dtype=np.int64)
    t = 0.0
    status = _NEED_UNIFORMS
    while True:
        if status == _NEED_UNIFORMS:
            u = rng.random(_CHUNK)
        elif status == _BUFFER_FULL:
            cap *= 2
            ev_t = np.resize(ev_t, cap)
            ev_x = np.resize(ev_x, cap)
            ev_v = np.resize(ev_v, cap)
            u = u_rest
        x, v, t, n_ev, status, used = _advance(
            code, w, a, b, scale, p, sup_t, float(rate.gamma), torus, float(h), _N_REFINE,
            x, v, t, float(cfg.t_max), u, ev_t, ev_x, ev_v, n_ev, counts)
        if status == _OK:
            break
        if status == _BOUND_VIOLATION:
            raise BoundViolationError(f"switching rate exceeded thinning bound at x={x}, v={v}, t={t}")
        u_rest = u[used:]
    meta = {"seed": int(cfg.seed), "stream": int(stream),
            "proposals": int(counts[0]), "acceptances": int(counts[1]), "t_max": float(cfg.t_max)}
    return Skeleton(float(s0.x) if not torus else wrap(float(s0.x)), int(s0.v),
                    ev_t[:n_ev].copy(), ev_x[:n_ev].copy(), ev_v[:n_ev].copy(),
                    float(cfg.t_max), cfg.domain, meta)


def simulate_many(rate: SwitchingRate, s0: State, cfg: SimConfig, streams, threads: int = 1,
                  reduce=None):
    """Simulate one trajectory per stream id, optionally mapping each through ``reduce``.

    Output order follows ``streams`` regardless of ``threads``.
    """
    streams = list(streams)

    def one(sid):
        sk = simulate(rate, s0, cfg, sid)
        return reduce(sk) if reduce is not None else sk

    if threads == 1 or len(streams) < 2:
        return [one(s) for s in streams]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, streams))


def position_at(sk: Skeleton, t: float) -> State:
    """State of the trajectory at time t (right-continuous in v)."""
    if not 0.0 <= t <= sk.t_final:
        raise ValueError(f"time {t} outside [0, {sk.t_final}]")
    k = int(np.searchsorted(sk.times, t, side="right"))
    if k == 0:
        t0, x0, v = 0.0, sk.x0, sk.v0
    else:
        t0, x0, v = sk.times[k - 1], sk.xs[k - 1], int(sk.vs[k - 1])
    x = x0 + v * (t - t0)
    if sk.domain == TORUS:
        x = wrap(x)
    return State(float(x), int(v))


def positions_at(sk: Skeleton, ts) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`position_at` for an array of times."""
    ts = np.asarray(ts, dtype=float)
    if ts.size and (ts.min() < 0 or ts.max() > sk.t_final):
        raise ValueError("times outside [0, t_final]")
    t0, x0, v, _ = sk.segments()
    k = np.searchsorted(sk.times, ts, side="right")
    x = x0[k] + v[k] * (ts - t0[k])
    if sk.domain == TORUS:
        x = wrap(x)
    return x, v[k].astype(int)
