"""Finite-state oracles built on an upwind discretization of the zig-zag generator.

States are ordered (cell, velocity) with index 2*i for v=+1 and 2*i+1 for v=-1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from .potential import SwitchingRate, cell_centers


class NumericalFailure(RuntimeError):
    pass


@dataclass(eq=False)
class GridGenerator:
    n: int
    Q: sp.csr_matrix
    gamma: float

    @property
    def size(self) -> int:
        return 2 * self.n

    @property
    def diagonal(self) -> np.ndarray:
        return self.Q.diagonal()

    def is_irreducible(self) -> bool:
        ncomp, _ = connected_components(self.Q, directed=True, connection="strong")
        return ncomp == 1

    def off_diagonal(self):
        """(rows, cols, rates) of the strictly positive off-diagonal entries."""
        coo = self.Q.tocoo()
        m = (coo.row != coo.col) & (coo.data > 0)
        return coo.row[m], coo.col[m], coo.data[m]

    def dump(self, path) -> None:
        coo = self.Q.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "col", "value"])
            for k in order:
                w.writerow([int(coo.row[k]), int(coo.col[k]), repr(float(coo.data[k]))])


def build_generator(rate: SwitchingRate, n: int) -> GridGenerator:
    """Upwind rate matrix for v d/dx + lambda(x, v) [f(x, -v) - f(x, v)] on n cells."""
    if n < 2:
        raise ValueError("need at least 2 cells")
    if not rate.potential.is_torus:
        raise ValueError("grid generator is defined on the torus")
    x = cell_centers(n)
    lp = rate.lam_plus(x) * np.ones(n)
    lm = rate.lam_minus(x) * np.ones(n)
    i = np.arange(n)
    plus, minus = 2 * i, 2 * i + 1
    rows = np.concatenate([plus, minus, plus, minus])
    cols = np.concatenate([2 * ((i + 1) % n), 2 * ((i - 1) % n) + 1, minus, plus])
    vals = np.concatenate([np.full(n, float(n)), np.full(n, float(n)), lp, lm])
    keep = vals > 0
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    off = sp.csr_matrix((vals, (rows, cols)), shape=(2 * n, 2 * n))
    out_rate = np.asarray(off.sum(axis=1)).ravel()
    Q = (off - sp.diags(out_rate)).tocsr()
    Q.sort_indices()
    return GridGenerator(n, Q, float(rate.gamma))


def stationary_vector(g: GridGenerator) -> np.ndarray:
    """Probability vector pi with pi Q = 0."""
    A = g.Q.T.tolil()
    A[0, :] = np.ones(g.size)
    b = np.zeros(g.size)
    b[0] = 1.0
    pi = spsolve(A.tocsc(), b)
    return pi / pi.sum()


@dataclass
class DVResult:
    value: float
    phi: np.ndarray
    iterations: int
    grad_norm: float


def _check_simplex(mu: np.ndarray, size: int) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (size,):
        raise ValueError(f"measure has shape {mu.shape}, expected ({size},)")
    if np.any(mu < 0) or abs(mu.sum() - 1.0) > 1e-9:
        raise ValueError("measure is not in the probability simplex")
    return mu


def dv_minimize(g: GridGenerator, mu, tol: float = 1e-10, max_iter: int = 10_000) -> DVResult:
    """Minimize sum_i mu_i sum_j Q_ij (exp(phi_j - phi_i) - 1) over phi with phi_0 = 0.

    Damped Newton with Armijo backtracking; the objective is convex and its
    Hessian is a weighted graph Laplacian.
    """
    mu = _check_simplex(mu, g.size)
    r, c, q = g.off_diagonal()
    wq = mu[r] * q
    total = float(np.sum(wq))
    m = g.size

    def parts(phi):
        e = np.exp(phi[c] - phi[r])
        w = wq * e
        f = float(np.sum(w) - np.sum(wq))
        grad = np.bincount(c, w, m) - np.bincount(r, w, m)
        return f, grad, w

    phi = np.zeros(m)
    f, grad, w = parts(phi)
    for it in range(max_iter):
        gn = float(np.max(np.abs(grad[1:])))
        if gn <= tol:
            return DVResult(-f, phi, it, gn)
        H = sp.csr_matrix(
            (np.concatenate([w, w, -w, -w]),
             (np.concatenate([r, c, r, c]), np.concatenate([r, c, c, r]))),
            shape=(m, m))
        H = H[1:, 1:].tocsc()
        step = np.zeros(m)
        step[1:] = -spsolve(H, grad[1:])
        slope = float(grad @ step)
        if not slope < 0:
            step = -grad.copy()
            step[0] = 0.0
            slope = float(grad @ step)
        t = 1.0
        # below this predicted decrease, f cannot resolve the Armijo test
        flat = -slope <= 1e-13 * (abs(f) + total)
        while True:
            f_new, g_new, w_new = parts(phi + t * step)
            if flat or f_new <= f + 1e-4 * t * slope or t < 1e-12:
                break
            t *= 0.5
        phi = phi + t * step
        f, grad, w = f_new, g_new, w_new
    gn = float(np.max(np.abs(grad[1:])))
    raise NumericalFailure(f"DV minimization did not converge in {max_iter} iterations (gradient {gn:.3e})")


def dv_rate_discrete(g: GridGenerator, mu) -> float:
    """-inf over positive u of sum_i mu_i (Q u)_i / u_i."""
    return dv_minimize(g, mu).value


@dataclass
class EigenResult:
    beta: float
    right: np.ndarray
    left: np.ndarray
    iterations: int
    residual: float

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["beta", "iterations", "residual"])
            w.writerow([repr(self.beta), self.iterations, repr(self.residual)])


def _perron(apply, diag_shifted, h, x0, tol, max_iter, residual):
    """Power iteration for x -> x + h * apply(x) - h * shift * x, normalized in sup norm."""
    x = x0 / np.max(x0)
    for it in range(1, max_iter + 1):
        y = x + h * (apply(x) - diag_shifted * x)
        y /= np.max(y)
        change = float(np.max(np.abs(y - x)))
        x = y
        if change <= tol and (it % 16 == 0 or change == 0.0):
            if residual(x) <= 0.1:
                return x, it
    raise NumericalFailure(f"power iteration did not converge in {max_iter} iterations")


def principal_eigenvalue(g: GridGenerator, V, tol: float = 1e-12, max_iter: int = 2_000_000,
                         r0=None, l0=None) -> EigenResult:
    """Perron eigenvalue and positive eigenvectors of Q + diag(V).

    Power iteration on I + h (Q + diag(V) - c I), with c the smallest diagonal
    entry of Q + diag(V) so the iteration matrix is nonnegative.
    """
    V = np.asarray(V, dtype=float).ravel() * np.ones(g.size)
    A = (g.Q + sp.diags(V)).tocsr()
    AT = A.T.tocsr()
    d = A.diagonal()
    c = float(np.min(d))
    spread = float(np.max(np.abs(d - c)))
    h = 0.5 / spread if spread > 0 else 0.5 / max(1.0, float(np.max(np.abs(d))))
    x0 = np.ones(g.size) if r0 is None else np.asarray(r0, float)
    y0 = np.ones(g.size) if l0 is None else np.asarray(l0, float)

    def rayleigh(r):
        return float(np.min(A @ r / r)), float(np.max(A @ r / r))

    def res_right(r):
        lo, hi = rayleigh(r)
        beta = 0.5 * (lo + hi)
        return float(np.max(np.abs(A @ r - beta * r))) / (1e-10 * np.max(np.abs(r)))

    def res_left(l):
        q = AT @ l / l
        beta = 0.5 * (np.min(q) + np.max(q))
        return float(np.max(np.abs(AT @ l - beta * l))) / (1e-10 * np.max(np.abs(l)))

    r, it_r = _perron(lambda x: A @ x, c, h, x0, tol, max_iter, res_right)
    l, it_l = _perron(lambda x: AT @ x, c, h, y0, tol, max_iter, res_left)
    if np.any(r <= 0) or np.any(l <= 0):
        raise NumericalFailure("Perron vectors are not strictly positive")
    beta = float(l @ (A @ r) / (l @ r))
    l = l / (l @ r)
    resid = float(np.max(np.abs(A @ r - beta * r)) / np.max(np.abs(r)))
    return EigenResult(beta, r, l, it_r + it_l, resid)


def tilted_measure(eig: EigenResult) -> np.ndarray:
    mu = eig.left * eig.right
    return mu / mu.sum()


def duality_check(g: GridGenerator, V) -> float:
    """|beta - (<V, mu*> - I(mu*))| with mu* the product of the Perron vectors."""
    V = np.asarray(V, dtype=float).ravel() * np.ones(g.size)
    eig = principal_eigenvalue(g, V)
    mu = tilted_measure(eig)
    return abs(eig.beta - (float(mu @ V) - dv_rate_discrete(g, mu)))


DEFAULT_THETAS = np.round(np.arange(-20, 21) * 0.1, 10)


@dataclass
class LegendreResult:
    value: float
    theta: float


def legendre(g: GridGenerator, V, a: float, thetas=None) -> LegendreResult:
    """sup over theta of theta*a - beta(theta V): grid search then golden-section refinement."""
    thetas = DEFAULT_THETAS if thetas is None else np.asarray(thetas, dtype=float)
    if thetas.size == 0:
        raise ValueError("empty theta grid")
    V = np.asarray(V, dtype=float).ravel() * np.ones(g.size)
    thetas = np.sort(thetas)
    cache: dict[float, float] = {}
    warm = {"r": None, "l": None}

    def objective(th: float) -> float:
        if th not in cache:
            e = principal_eigenvalue(g, th * V, r0=warm["r"], l0=warm["l"])
            warm["r"], warm["l"] = e.right, e.left
            cache[th] = th * a - e.beta
        return cache[th]

    vals = np.array([objective(float(t)) for t in thetas])
    k = int(np.argmax(vals))
    if thetas.size < 3:
        return LegendreResult(float(vals[k]), float(thetas[k]))
    lo = float(thetas[max(k - 1, 0)])
    hi = float(thetas[min(k + 1, thetas.size - 1)])
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    x1, x2 = hi - invphi * (hi - lo), lo + invphi * (hi - lo)
    f1, f2 = objective(x1), objective(x2)
    while hi - lo > 1e-7:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = objective(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = objective(x1)
    best = max(cache.items(), key=lambda kv: kv[1])
    return LegendreResult(float(best[1]), float(best[0]))


def legendre_rate(g: GridGenerator, V, a: float, thetas=None) -> float:
    return legendre(g, V, a, thetas).value


def dv_rate_density_scale(g: GridGenerator, d) -> float:
    """Discrete DV value of a DensityPair on the scale of the explicit formulas.

    The explicit rate integrates over both velocity sheets against Lebesgue
    measure, which is twice the DV value of the probability measure.
    """
    return 2.0 * dv_rate_discrete(g, d.to_probability_vector())
