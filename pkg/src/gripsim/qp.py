"""Dense active-set solver for strictly convex quadratic programs.

Solves  min_x  0.5 x'Hx + g'x   subject to   G x <= h
with H symmetric positive definite, by a dual active-set iteration:
start at the unconstrained minimum (dual feasible), repeatedly pick the
most violated constraint and step toward it along the manifold of the
current active set, dropping constraints whose multipliers would turn
negative.  Finite termination for nondegenerate PD problems; iteration
caps guard the degenerate corners.

Steps are computed through a Schur complement on a precomputed H^-1 so
that repeated solves against a fixed (H, G) pair stay cheap; the final
iterate is polished with one refined KKT solve, so reported residuals
are at machine-precision level.  A warm-start active set (e.g. from the
previous tick of a receding-horizon loop) cuts the iteration count to a
handful.

The solver is deterministic: identical inputs give identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True)
class QpResult:
    x: np.ndarray
    duals: np.ndarray  # one multiplier per row of G, zero for inactive rows
    status: str
    iterations: int
    kkt_residual: float
    active: tuple[int, ...] = ()


class QpWorkspace:
    """Precomputed factors for repeated solves with fixed H and G."""

    def __init__(self, H, G=None):
        self.H = np.asarray(H, dtype=float)
        self.H_inv = np.linalg.inv(self.H)
        self.G = None if G is None or len(G) == 0 else np.asarray(G, dtype=float)
        if self.G is not None:
            self.HinvGT = self.H_inv @ self.G.T  # columns H^-1 c_i


def kkt_residual(H, g, G, h, x, duals) -> float:
    """Scaled max KKT residual: stationarity, primal/dual feasibility, complementarity."""
    scale = 1.0 + max(np.max(np.abs(g), initial=0.0), np.max(np.abs(H @ x), initial=0.0))
    stat = np.max(np.abs(H @ x + g + G.T @ duals), initial=0.0) / scale
    slack = G @ x - h
    h_scale = 1.0 + np.max(np.abs(h), initial=0.0)
    primal = max(0.0, np.max(slack, initial=0.0)) / h_scale
    dual = max(0.0, -np.min(duals, initial=0.0))
    lam_scale = 1.0 + np.max(np.abs(duals), initial=0.0)
    comp = np.max(np.abs(duals * slack), initial=0.0) / (h_scale * lam_scale)
    return max(stat, primal, dual, comp)


def _eqp(H, g, G, h, active):
    """Equality-constrained solve over the given active rows, with one
    step of iterative refinement (active sets can be poorly conditioned)."""
    n = g.shape[0]
    q = len(active)
    if q == 0:
        return np.linalg.solve(H, -g), np.zeros(0)
    N = G[active]
    kkt = np.zeros((n + q, n + q))
    kkt[:n, :n] = H
    kkt[:n, n:] = N.T
    kkt[n:, :n] = N
    rhs = np.concatenate([-g, h[active]])
    sol = np.linalg.solve(kkt, rhs)
    sol += np.linalg.solve(kkt, rhs - kkt @ sol)
    return sol[:n], sol[n:]


def solve_qp(H, g, G=None, h=None, max_iter: int | None = None,
             workspace: QpWorkspace | None = None,
             warm_active: tuple[int, ...] = ()) -> QpResult:
    """Minimize 0.5 x'Hx + g'x subject to G x <= h.

    G may be None (unconstrained).  Returns status INFEASIBLE when the
    constraint polyhedron is empty; x then holds the last iterate.
    Pass a QpWorkspace to amortize factorizations across calls sharing
    (H, G), and warm_active to seed the active set.
    """
    ws = workspace if workspace is not None else QpWorkspace(H, G)
    H = ws.H
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    if ws.G is None:
        x = -(ws.H_inv @ g)
        duals = np.zeros(0)
        res = kkt_residual(H, g, np.zeros((0, n)), np.zeros(0), x, duals)
        return QpResult(x, duals, OPTIMAL, 0, res)

    G = ws.G
    h = np.asarray(h, dtype=float)
    m = G.shape[0]
    if max_iter is None:
        max_iter = 20 * (n + m)
    viol_tol = 1e-10 * (1.0 + np.max(np.abs(h)))

    # establish the dual-feasible starting invariant: x optimal for the
    # warm active set with nonnegative multipliers
    active = [i for i in warm_active if 0 <= i < m][:n]
    lam: list[float] = []
    while True:
        try:
            x, lam_arr = _eqp(H, g, G, h, active)
        except np.linalg.LinAlgError:
            active = []
            x = -(ws.H_inv @ g)
            lam_arr = np.zeros(0)
        if not np.all(np.isfinite(x)):
            active = []
            x = -(ws.H_inv @ g)
            lam_arr = np.zeros(0)
        lam = list(lam_arr)
        if not lam or min(lam) >= 0.0:
            break
        del active[int(np.argmin(lam_arr))]

    iters = 0

    def finish(status, extra=None):
        if status == OPTIMAL:
            xf, lam_f = _eqp(H, g, G, h, active)
        else:
            xf, lam_f = x, np.array(lam)
        duals = np.zeros(m)
        if len(active):
            duals[active] = lam_f
        if extra is not None:
            duals[extra[0]] = extra[1]
        res = kkt_residual(H, g, G, h, xf, duals)
        return QpResult(xf, duals, status, iters, res, tuple(active))

    while True:
        slack = G @ x - h
        p = int(np.argmax(slack))
        if slack[p] <= viol_tol:
            return finish(OPTIMAL)

        lam_p = 0.0
        while True:
            iters += 1
            if iters > max_iter:
                return finish(ITERATION_LIMIT, (p, lam_p))

            c_p = G[p]
            q = len(active)
            # step direction: H z + N' r = -c_p, N z = 0, via Schur complement
            hc = ws.HinvGT[:, p]
            if q:
                N = G[active]
                S = N @ ws.HinvGT[:, active]
                r = -np.linalg.solve(S, N @ hc)
                z = -hc - ws.HinvGT[:, active] @ r
            else:
                r = np.zeros(0)
                z = -hc

            zHz = float(z @ H @ z)
            z_zero = zHz <= 1e-13 * (1.0 + abs(float(c_p @ hc)))

            # dual blocking step: keep lam + t*r >= 0
            t_dual = np.inf
            blocker = -1
            for idx in range(q):
                if r[idx] < -1e-14:
                    t = lam[idx] / (-r[idx])
                    if t < t_dual:
                        t_dual = t
                        blocker = idx
            t_full = np.inf if z_zero else (G[p] @ x - h[p]) / zHz

            t = min(t_full, t_dual)
            if not np.isfinite(t):
                # cannot reduce the violation in any direction: empty polyhedron
                return finish(INFEASIBLE, (p, lam_p))

            if not z_zero:
                x = x + t * z
            for idx in range(q):
                lam[idx] += t * r[idx]
            lam_p += t

            if t == t_full and not z_zero:
                active.append(p)
                lam.append(lam_p)
                break
            # drop the blocking constraint and retry the same violated row
            del active[blocker]
            del lam[blocker]
