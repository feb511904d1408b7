"""Tactile-reactive grasp controller: receding-horizon regulation of the
contact area by gripper acceleration.

Model: one linear prediction of (area, opening, speed) per tick,
    area'    = area - area_slope * dt * speed
    opening' = opening + dt * speed + dt^2/2 * accel
    speed'   = speed + dt * accel
with a quadratic cost on (area error, speed, accel) over the horizon and
an amplified terminal term.  The minimization condenses to a box- and
state-constrained strictly convex QP in the acceleration sequence, solved
by the active-set solver in gripsim.qp.

Units: opening in mm, speed mm/s, accel mm/s^2; area in px; positive
speed opens the gripper, which is why the area row carries a negative
slope coefficient.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from . import qp
from .gel import ContactPlant

TRACE_CSV_HEADER = "tick,t_s,c_px,p_mm,v_mms,a_mms2,cost,kkt"


@dataclass(frozen=True)
class MpcParams:
    """Controller parameters; defaults are the canonical tuning.

    area_slope is the controller's assumed px-per-mm contact gain (the
    raw gain times the harness scale knob; see config.mpc.k_c_raw).
    """

    area_target: float = 5500.0    # px
    weight_accel: float = 1.0
    weight_area: float = 1.0
    weight_speed: float = 2.0
    terminal_factor: float = 10.0
    horizon: int = 30
    area_slope: float = 250.0      # px/mm
    dt: float = 1.0 / 60.0
    freq: float = 60.0

    def __post_init__(self):
        for name in ("weight_accel", "weight_area", "weight_speed"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.terminal_factor < 1:
            raise ValueError("terminal_factor must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if abs(self.dt * self.freq - 1.0) > 1e-9:
            raise ValueError("dt and freq must satisfy dt * freq = 1")


@dataclass(frozen=True)
class Limits:
    """Box limits on opening, speed, and acceleration (speed and accel
    bounds are symmetric)."""

    opening_min: float = 0.0
    opening_max: float = 55.0
    speed_max: float = 20.0
    accel_max: float = 200.0

    def __post_init__(self):
        if self.opening_min >= self.opening_max:
            raise ValueError("opening_min must be < opening_max")
        if self.speed_max <= 0 or self.accel_max <= 0:
            raise ValueError("speed_max and accel_max must be positive")


@dataclass(frozen=True)
class GraspState:
    """Measured contact area plus commanded opening and speed at one tick."""

    area: float
    opening: float
    speed: float
    tick: int = 0

    def __post_init__(self):
        if self.area < 0:
            raise ValueError("area must be nonnegative")


@dataclass(frozen=True)
class ControlPlan:
    """Optimized acceleration sequence with its cost and KKT certificate.

    feasible is False when the state constraints had to be dropped to
    produce a best-effort plan (the input box is always enforced)."""

    accel: np.ndarray
    cost: float
    kkt_residual: float
    feasible: bool = True


def _dynamics(params: MpcParams):
    dt = params.dt
    A = np.array([[1.0, 0.0, -params.area_slope * dt],
                  [0.0, 1.0, dt],
                  [0.0, 0.0, 1.0]])
    B = np.array([0.0, 0.5 * dt * dt, dt])
    return A, B


def predict(state: GraspState, accel, params: MpcParams) -> np.ndarray:
    """Roll the prediction model forward one step per acceleration.

    Returns a (len(accel) + 1, 3) array of (area, opening, speed) rows,
    the first row being `state` itself.  Predicted areas may go negative:
    the prediction model is deliberately unbounded-linear.
    """
    accel = np.atleast_1d(np.asarray(accel, dtype=float))
    if accel.ndim != 1 or len(accel) < 1:
        raise ValueError("accel must be a nonempty 1-D sequence")
    A, B = _dynamics(params)
    out = np.empty((len(accel) + 1, 3))
    out[0] = (state.area, state.opening, state.speed)
    for k, a in enumerate(accel):
        out[k + 1] = A @ out[k] + B * a
    return out


def cost(state: GraspState, accel, params: MpcParams) -> float:
    """Quadratic cost of an acceleration sequence from `state`.

    Stage terms run over the current state and the first horizon-1
    successors; the final state carries the terminal_factor-amplified
    weight.  accel must have exactly `horizon` entries.
    """
    accel = np.asarray(accel, dtype=float)
    if accel.shape != (params.horizon,):
        raise ValueError(
            f"accel must have length {params.horizon}, got {accel.shape}")
    A, B = _dynamics(params)
    x = np.array([state.area, state.opening, state.speed])
    J = 0.0
    for a in accel:
        err = x[0] - params.area_target
        J += params.weight_area * err * err + params.weight_speed * x[2] * x[2]
        J += params.weight_accel * a * a
        x = A @ x + B * a
    err = x[0] - params.area_target
    J += params.terminal_factor * (
        params.weight_area * err * err + params.weight_speed * x[2] * x[2])
    return float(J)


class GraspController:
    """Condensed-QP solver for one (params, limits) pair.

    All state-independent matrices (Hessian, constraint rows, their
    factorizations) are built once; each solve only refreshes the linear
    term and constraint offsets.  Warm starts carry the active set from
    call to call, which an optional reset clears.
    """

    def __init__(self, params: MpcParams, limits: Limits):
        self.params = params
        self.limits = limits
        N = params.horizon
        A, B = _dynamics(params)
        F = [np.eye(3)]
        for _ in range(N):
            F.append(A @ F[-1])
        G_dyn = np.zeros((N + 1, 3, N))
        for k in range(1, N + 1):
            for i in range(k):
                G_dyn[k][:, i] = F[k - 1 - i] @ B

        C = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])  # (area, speed) rows
        Theta = np.zeros((2 * N, N))
        Phi = np.zeros((2 * N, 3))
        w = np.zeros(2 * N)
        for k in range(1, N + 1):
            Theta[2 * k - 2: 2 * k] = C @ G_dyn[k]
            Phi[2 * k - 2: 2 * k] = C @ F[k]
            amp = params.terminal_factor if k == N else 1.0
            w[2 * k - 2] = amp * params.weight_area
            w[2 * k - 1] = amp * params.weight_speed
        WTheta = Theta * w[:, None]
        ridge = params.weight_accel if params.weight_accel > 0 else 1e-9
        self._H = 2.0 * (Theta.T @ WTheta + ridge * np.eye(N))
        self._H = 0.5 * (self._H + self._H.T)
        self._r_stack = np.zeros(2 * N)
        self._r_stack[0::2] = params.area_target
        self._w = w
        self._Theta = Theta
        self._Phi = Phi

        self._rows_p = np.array([F[k][1] for k in range(1, N + 1)])
        self._rows_v = np.array([F[k][2] for k in range(1, N + 1)])
        G_p = np.array([G_dyn[k][1] for k in range(1, N + 1)])
        G_v = np.array([G_dyn[k][2] for k in range(1, N + 1)])
        eye = np.eye(N)
        self._G = np.vstack([eye, -eye, G_p, -G_p, G_v, -G_v])
        self._ws = qp.QpWorkspace(self._H, self._G)
        self._G_box = np.vstack([eye, -eye])
        self._ws_box = qp.QpWorkspace(self._H, self._G_box)
        self._h_box = np.full(2 * N, limits.accel_max)
        self._warm: tuple[int, ...] = ()

    def reset(self) -> None:
        self._warm = ()

    def _tracking_error(self, x):
        """Stacked (area error, speed) over steps 1..N for zero input."""
        return self._Phi @ x - self._r_stack

    def _linear_term(self, x):
        # formed from the tracking error so that a zero-error state yields
        # an exactly zero gradient (and an exactly zero plan)
        return 2.0 * self._Theta.T @ (self._w * self._tracking_error(x))

    def _offsets(self, x):
        N = self.params.horizon
        lm = self.limits
        p0 = self._rows_p @ x
        v0 = self._rows_v @ x
        return np.concatenate([
            np.full(N, lm.accel_max), np.full(N, lm.accel_max),
            np.full(N, lm.opening_max) - p0, p0 - np.full(N, lm.opening_min),
            np.full(N, lm.speed_max) - v0, np.full(N, lm.speed_max) + v0,
        ])

    def quadratic_cost(self, x, accel) -> float:
        """Cost via the condensed quadratic form (equals cost() literally)."""
        g = self._linear_term(x)
        z0 = self._tracking_error(x)
        const = float(z0 @ (self._w * z0))
        err = x[0] - self.params.area_target
        const += self.params.weight_area * err * err \
            + self.params.weight_speed * x[2] * x[2]
        return float(0.5 * accel @ self._H @ accel + g @ accel + const)

    def solve(self, state: GraspState) -> ControlPlan:
        x = np.array([state.area, state.opening, state.speed])
        g = self._linear_term(x)
        h = self._offsets(x)
        res = qp.solve_qp(self._H, g, self._G, h,
                          workspace=self._ws, warm_active=self._warm)
        if res.status == qp.OPTIMAL:
            self._warm = res.active
            return ControlPlan(res.x, self.quadratic_cost(x, res.x),
                               res.kkt_residual, feasible=True)
        # state constraints unreachable: report a best-effort plan that
        # respects the input box only
        self._warm = ()
        res = qp.solve_qp(self._H, g, self._G_box, self._h_box,
                          workspace=self._ws_box)
        return ControlPlan(res.x, self.quadratic_cost(x, res.x),
                           res.kkt_residual, feasible=False)


@functools.lru_cache(maxsize=32)
def _controller(params: MpcParams, limits: Limits) -> GraspController:
    return GraspController(params, limits)


def solve(state: GraspState, params: MpcParams, limits: Limits) -> ControlPlan:
    """Optimize the acceleration sequence for one state (pure function of
    its inputs; controllers are cached per (params, limits))."""
    ctl = _controller(params, limits)
    ctl.reset()
    return ctl.solve(state)


@dataclass
class Trace:
    """Closed-loop record: one row per tick."""

    tick: np.ndarray
    t_s: np.ndarray
    c_px: np.ndarray
    p_mm: np.ndarray
    v_mms: np.ndarray
    a_mms2: np.ndarray
    cost: np.ndarray
    kkt: np.ndarray

    def csv_lines(self):
        yield TRACE_CSV_HEADER
        for k in range(len(self.tick)):
            vals = (self.t_s[k], self.c_px[k], self.p_mm[k], self.v_mms[k],
                    self.a_mms2[k], self.cost[k], self.kkt[k])
            yield f"{int(self.tick[k])}," + ",".join(repr(float(v)) for v in vals)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            for line in self.csv_lines():
                f.write(line + "\n")

    def settling_time(self, target: float, band_frac: float = 0.02,
                      speed_tol: float = 0.05) -> float:
        """First time after which the area stays within band_frac of the
        target and |speed| stays below speed_tol; inf if never."""
        ok = (np.abs(self.c_px - target) <= band_frac * target) \
            & (np.abs(self.v_mms) < speed_tol)
        if not ok[-1]:
            return float("inf")
        idx = len(ok) - 1
        while idx > 0 and ok[idx - 1]:
            idx -= 1
        return float(self.t_s[idx])


def run_closed_loop(plant: ContactPlant, params: MpcParams, limits: Limits,
                    initial: GraspState, duration: float,
                    width_fn=None) -> Trace:
    """Run the controller against a contact plant at params.freq.

    Each tick reads the plant area at the current opening, solves, and
    applies the first planned acceleration through the exact opening/speed
    kinematics.  Speed is the commanded integration, not a differentiated
    measurement.  width_fn(t) optionally drives plant.object_width.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    ctl = GraspController(params, limits)
    n = int(round(duration * params.freq))
    dt = params.dt
    p, v = initial.opening, initial.speed
    cols = {k: np.empty(n) for k in
            ("t_s", "c_px", "p_mm", "v_mms", "a_mms2", "cost", "kkt")}
    ticks = np.arange(n)
    for k in range(n):
        t = k * dt
        if width_fn is not None:
            plant.object_width = float(width_fn(t))
        c = plant.area(p)
        plan = ctl.solve(GraspState(c, p, v, tick=k))
        a0 = float(plan.accel[0])
        cols["t_s"][k] = t
        cols["c_px"][k] = c
        cols["p_mm"][k] = p
        cols["v_mms"][k] = v
        cols["a_mms2"][k] = a0
        cols["cost"][k] = plan.cost
        cols["kkt"][k] = plan.kkt_residual
        p = p + dt * v + 0.5 * dt * dt * a0
        v = v + dt * a0
    return Trace(tick=ticks, **cols)
