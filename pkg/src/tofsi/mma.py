"""Method of moving asymptotes (Svanberg 1987), standard ``mmasub``/``subsolv``.

The subproblem is written in the usual form::

    min  f0~(x) + a0 z + sum_i (c_i y_i + d_i y_i^2 / 2)
    s.t. f_i~(x) - a_i z - y_i <= 0,  alpha <= x <= beta,  y, z >= 0

which gives the min-max form when f0 = 0, a0 = 1, a_i = 1 for the objectives
and large c_i.  The primal-dual interior point solver follows the published
reference implementation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import logging

import numpy as np

from .errors import ConfigError, TofsiError

log = logging.getLogger(__name__)


class SubproblemError(TofsiError):
    """MMA subproblem infeasible or the interior point iteration broke down."""

    exit_code = 3


@dataclass
class MmaSettings:
    move: float = 0.1
    offset: float = 1.0
    asyinit: float = 0.5
    asydecr: float = 0.7
    asyincr: float = 1.2
    albefa: float = 0.1
    c: float = 1000.0
    d: float = 1.0
    raa0: float = 1e-5
    epsimin: float = 1e-9
    infeasible_tol: float = 1e-6   # artificial variable y_i above this flags infeasibility
    infeasible_patience: int = 5   # consecutive infeasible steps tolerated before giving up

    def validate(self) -> None:
        if not 0 < self.move <= 1:
            raise ConfigError("optimizer.move must lie in (0, 1]")
        if self.offset < 0:
            raise ConfigError("optimizer.offset must be >= 0")
        if not (0 < self.asydecr < 1 < self.asyincr and self.asyinit > 0):
            raise ConfigError("need asyinit > 0 and 0 < asydecr < 1 < asyincr")


@dataclass
class MmaState:
    """Iteration memory: previous two iterates and the current asymptotes."""

    iteration: int = 0
    xold1: np.ndarray = None
    xold2: np.ndarray = None
    low: np.ndarray = None
    upp: np.ndarray = None
    infeasible_streak: int = 0


@dataclass
class Subproblem:
    """The convex separable approximation built at ``xval``."""

    low: np.ndarray
    upp: np.ndarray
    alfa: np.ndarray
    beta: np.ndarray
    p0: np.ndarray
    q0: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    b: np.ndarray
    r0: float = 0.0
    extras: dict = field(default_factory=dict)

    def evaluate(self, x):
        """Approximate (f0~, f_i~) at points ``x`` of shape (..., n)."""
        x = np.asarray(x, dtype=float)
        ux, xl = 1.0 / (self.upp - x), 1.0 / (x - self.low)
        f0 = self.r0 + ux @ self.p0 + xl @ self.q0
        fi = ux @ self.P.T + xl @ self.Q.T - self.b
        return f0, fi


def _asymptotes(state: MmaState, x, xmin, xmax, s: MmaSettings):
    span = xmax - xmin
    if state.iteration <= 2 or state.low is None:
        return x - s.asyinit * span, x + s.asyinit * span
    trend = (x - state.xold1) * (state.xold1 - state.xold2)
    factor = np.ones_like(x)
    factor[trend > 0] = s.asyincr
    factor[trend < 0] = s.asydecr
    low = x - factor * (state.xold1 - state.low)
    upp = x + factor * (state.upp - state.xold1)
    low = np.clip(low, x - 10 * span, x - 0.01 * span)
    upp = np.clip(upp, x + 0.01 * span, x + 10 * span)
    return low, upp


def _approx_terms(df, ux2, xl2, raa0_term):
    p = np.maximum(df, 0.0)
    q = np.maximum(-df, 0.0)
    pq = 0.001 * (p + q) + raa0_term
    return (p + pq) * ux2, (q + pq) * xl2


def build_subproblem(state: MmaState, x, xmin, xmax, f0val, df0dx, fval, dfdx, s: MmaSettings) -> Subproblem:
    """Moving asymptotes, move-limited box and the approximation coefficients."""
    x = np.asarray(x, dtype=float)
    low, upp = _asymptotes(state, x, xmin, xmax, s)
    span = xmax - xmin
    alfa = np.maximum.reduce([low + s.albefa * (x - low), x - s.move * span, xmin])
    beta = np.minimum.reduce([upp - s.albefa * (upp - x), x + s.move * span, xmax])
    ux1, xl1 = upp - x, x - low
    raa0_term = s.raa0 / np.maximum(span, 1e-5)
    p0, q0 = _approx_terms(np.asarray(df0dx, dtype=float), ux1**2, xl1**2, raa0_term)
    P, Q = _approx_terms(np.atleast_2d(dfdx), ux1**2, xl1**2, raa0_term)
    b = P @ (1.0 / ux1) + Q @ (1.0 / xl1) - np.atleast_1d(fval)
    r0 = float(f0val) - p0 @ (1.0 / ux1) - q0 @ (1.0 / xl1)
    return Subproblem(low, upp, alfa, beta, p0, q0, P, Q, b, r0)


def subsolv(sub: Subproblem, a0, a, c, d, epsimin=1e-9, max_inner=200):
    """Primal-dual Newton solution of the MMA subproblem.

    Returns ``(x, y, z, lam)``.
    """
    low, upp, alfa, beta = sub.low, sub.upp, sub.alfa, sub.beta
    p0, q0, P, Q, b = sub.p0, sub.q0, sub.P, sub.Q, sub.b
    m, n = P.shape
    een, eem = np.ones(n), np.ones(m)
    epsi = 1.0
    x = 0.5 * (alfa + beta)
    y, z, lam = eem.copy(), 1.0, eem.copy()
    xsi = np.maximum(1.0 / (x - alfa), een)
    eta = np.maximum(1.0 / (beta - x), een)
    mu = np.maximum(eem, 0.5 * c)
    zet, s = 1.0, eem.copy()

    def residual(x, y, z, lam, xsi, eta, mu, zet, s, epsi):
        ux1, xl1 = upp - x, x - low
        plam, qlam = p0 + P.T @ lam, q0 + Q.T @ lam
        gvec = P @ (1 / ux1) + Q @ (1 / xl1)
        rex = plam / ux1**2 - qlam / xl1**2 - xsi + eta
        rey = c + d * y - mu - lam
        rez = a0 - zet - a @ lam
        relam = gvec - a * z - y + s - b
        rexsi = xsi * (x - alfa) - epsi
        reeta = eta * (beta - x) - epsi
        remu = mu * y - epsi
        rezet = zet * z - epsi
        res = lam * s - epsi
        return np.concatenate([rex, rey, [rez], relam, rexsi, reeta, remu, [rezet], res])

    while epsi > epsimin:
        r = residual(x, y, z, lam, xsi, eta, mu, zet, s, epsi)
        resnorm, resmax = np.linalg.norm(r), np.max(np.abs(r))
        it = 0
        while resmax > 0.9 * epsi and it < max_inner:
            it += 1
            ux1, xl1 = upp - x, x - low
            ux2, xl2 = ux1**2, xl1**2
            plam, qlam = p0 + P.T @ lam, q0 + Q.T @ lam
            gvec = P @ (1 / ux1) + Q @ (1 / xl1)
            GG = P / ux2 - Q / xl2
            delx = plam / ux2 - qlam / xl2 - epsi / (x - alfa) + epsi / (beta - x)
            dely = c + d * y - lam - epsi / y
            delz = a0 - a @ lam - epsi / z
            dellam = gvec - a * z - y - b + epsi / lam
            diagx = 2 * (plam / (ux2 * ux1) + qlam / (xl2 * xl1)) + xsi / (x - alfa) + eta / (beta - x)
            diagy = d + mu / y
            diaglamyi = s / lam + 1.0 / diagy
            if m < n:
                blam = dellam + dely / diagy - GG @ (delx / diagx)
                AA = np.zeros((m + 1, m + 1))
                AA[:m, :m] = np.diag(diaglamyi) + (GG / diagx) @ GG.T
                AA[:m, m] = AA[m, :m] = a
                AA[m, m] = -zet / z
                sol = np.linalg.solve(AA, np.concatenate([blam, [delz]]))
                dlam, dz = sol[:m], sol[m]
                dx = -delx / diagx - (GG.T @ dlam) / diagx
            else:
                dellamyi = dellam + dely / diagy
                Axx = np.diag(diagx) + (GG.T / diaglamyi) @ GG
                azz = zet / z + a @ (a / diaglamyi)
                axz = -GG.T @ (a / diaglamyi)
                AA = np.zeros((n + 1, n + 1))
                AA[:n, :n] = Axx
                AA[:n, n] = AA[n, :n] = axz
                AA[n, n] = azz
                bx = delx + GG.T @ (dellamyi / diaglamyi)
                bz = delz - a @ (dellamyi / diaglamyi)
                sol = np.linalg.solve(AA, -np.concatenate([bx, [bz]]))
                dx, dz = sol[:n], sol[n]
                dlam = (GG @ dx) / diaglamyi - dz * (a / diaglamyi) + dellamyi / diaglamyi
            dy = -dely / diagy + dlam / diagy
            dxsi = -xsi + epsi / (x - alfa) - xsi * dx / (x - alfa)
            deta = -eta + epsi / (beta - x) + eta * dx / (beta - x)
            dmu = -mu + epsi / y - mu * dy / y
            dzet = -zet + epsi / z - zet * dz / z
            ds = -s + epsi / lam - s * dlam / lam

            xx = np.concatenate([y, [z], lam, xsi, eta, mu, [zet], s])
            dxx = np.concatenate([dy, [dz], dlam, dxsi, deta, dmu, [dzet], ds])
            stmxx = np.max(-1.01 * dxx / xx)
            stmalbe = max(np.max(-1.01 * dx / (x - alfa)), np.max(1.01 * dx / (beta - x)))
            steg = 1.0 / max(stmalbe, stmxx, 1.0)

            old = (x, y, z, lam, xsi, eta, mu, zet, s)
            steps = (dx, dy, dz, dlam, dxsi, deta, dmu, dzet, ds)
            resnew = 2 * resnorm
            for _ in range(50):
                cand = tuple(o + steg * dd for o, dd in zip(old, steps))
                rnew = residual(*cand, epsi)
                resnew = np.linalg.norm(rnew)
                steg /= 2
                if resnew <= resnorm:
                    break
            x, y, z, lam, xsi, eta, mu, zet, s = cand
            resnorm, resmax = resnew, np.max(np.abs(rnew))
        if not np.all(np.isfinite(x)):
            raise SubproblemError("MMA interior point iteration produced non-finite values")
        epsi *= 0.1
    return x, y, z, lam


def mma_update(state: MmaState, x, xmin, xmax, f0val, df0dx, fval, dfdx, a0, a, settings: MmaSettings):
    """One MMA step; updates ``state`` in place and returns ``(x_new, subproblem, y, lam)``."""
    s = settings
    state.iteration += 1
    x = np.asarray(x, dtype=float)
    xmin = np.broadcast_to(np.asarray(xmin, dtype=float), x.shape)
    xmax = np.broadcast_to(np.asarray(xmax, dtype=float), x.shape)
    sub = build_subproblem(state, x, xmin, xmax, f0val, df0dx, fval, dfdx, s)
    m = sub.P.shape[0]
    c = np.broadcast_to(np.asarray(s.c, dtype=float), (m,))
    d = np.broadcast_to(np.asarray(s.d, dtype=float), (m,))
    xnew, y, z, lam = subsolv(sub, float(a0), np.asarray(a, dtype=float), c, d, s.epsimin)
    # y > 0 relaxes a constraint the move limit cannot reach yet (typical after a
    # continuation step); only a persistent relaxation counts as infeasible
    if np.any(y > s.infeasible_tol):
        state.infeasible_streak += 1
        if state.infeasible_streak > s.infeasible_patience:
            raise SubproblemError(f"MMA subproblem infeasible for {state.infeasible_streak} consecutive steps: "
                                  f"artificial variables y={y}, multipliers {lam}")
        log.warning("MMA step %d relaxes constraints: y=%s", state.iteration, y)
    else:
        state.infeasible_streak = 0
    xnew = np.clip(xnew, sub.alfa, sub.beta)
    state.xold2 = state.xold1 if state.xold1 is not None else x.copy()
    state.xold1 = x.copy()
    state.low, state.upp = sub.low, sub.upp
    sub.extras.update(z=z)
    return xnew, sub, y, lam


def minmax_update(state: MmaState, x, objectives, objective_grads, constraints, constraint_grads,
                  settings: MmaSettings):
    """Min-max design update over offset objectives subject to constraints <= 0, x in [0, 1]."""
    objectives = np.asarray(objectives, dtype=float) + settings.offset
    constraints = np.atleast_1d(np.asarray(constraints, dtype=float))
    fval = np.concatenate([objectives, constraints])
    dfdx = np.vstack([np.atleast_2d(objective_grads), np.atleast_2d(constraint_grads)])
    a = np.concatenate([np.ones(len(objectives)), np.zeros(len(constraints))])
    n = len(x)
    xnew, _, _, _ = mma_update(state, x, 0.0, 1.0, 0.0, np.zeros(n), fval, dfdx, 1.0, a, settings)
    return xnew
