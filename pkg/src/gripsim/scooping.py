"""Quasi-static model of scooping a thin card off a table with a fingernail.

Free-body setup (planar cross-section, counterclockwise moments positive,
x rightward toward the nail, y up): the card of length `length` and
thickness `thickness` keeps three contacts while being lifted: the nail
presses horizontally on the right edge at height `nail_height` above the
bottom face, the table supports the left bottom corner, and the left
finger pushes with force `push_force` directed (cos a, -sin a) at angle
`push_angle` below the horizontal, applied at the left top corner.
Coulomb friction acts at the nail (friction_nail) and the table
(friction_table); gravity acts at the center of mass, so it contributes
no direct moment there but enters through the support force.

The net moment about the center of mass is affine in the nail pressure:
M = moment_slope * nail_normal + moment_offset.  A positive M with a
physically valid contact set (nonnegative nail pressure and table
support) means the card flips counterclockwise over the nail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

STANDARD_GRAVITY = 9.81  # m/s^2

# the reduced moment expression divides by cos-like terms that blow up as
# the push angle approaches vertical; beyond this the model is not used
PUSH_ANGLE_CAP = math.radians(89.0)

FLIPS_CCW = "flips_ccw"
NO_FLIP = "no_flip"
INFEASIBLE = "infeasible"
OUT_OF_MODEL = "out_of_model"

SWEEP_CSV_HEADER = "theta_rad,mu1,mu2,F_L_N,F_Rx_N,F_By_N,M_all_Nmm,K1_mm,K2_Nmm,verdict"


@dataclass(frozen=True)
class ScoopProblem:
    """Geometry, friction pair, and load of one scooping configuration.

    Lengths in mm, mass in kg, force in N; moments come out in N*mm.
    """

    thickness: float = 0.8        # card thickness at the nail contact, mm
    length: float = 85.5          # card length in the section, mm
    nail_height: float = 0.4      # nail contact height on the right edge, mm
    push_angle: float = math.radians(30.0)  # finger force angle below ground
    friction_nail: float = 0.3
    friction_table: float = 0.4
    mass: float = 0.005           # kg
    gravity: float = STANDARD_GRAVITY
    push_force: float = 1.0       # N

    def __post_init__(self):
        if self.thickness <= 0 or self.length <= 0:
            raise ValueError("thickness and length must be positive")
        if not 0.0 <= self.nail_height <= self.thickness:
            raise ValueError("nail_height must lie within [0, thickness]")
        if not 0.0 < self.push_angle < math.pi / 2:
            raise ValueError("push_angle must lie in (0, pi/2)")
        if self.friction_nail < 0 or self.friction_table < 0:
            raise ValueError("friction coefficients must be nonnegative")
        if self.mass < 0:
            raise ValueError("mass must be nonnegative")
        if self.push_force < 0:
            raise ValueError("push_force must be nonnegative")


@dataclass(frozen=True)
class ScoopSolution:
    """Contact forces (N), net moment (N*mm), and its affine coefficients.

    moment_slope / moment_offset are NaN when push_angle exceeds
    PUSH_ANGLE_CAP; the moment itself is always the direct evaluation.
    feasible means the three-contact model applies: nonnegative nail
    pressure and table support.
    """

    nail_normal: float    # horizontal nail pressure on the card edge
    nail_friction: float  # vertical friction at the nail contact
    table_friction: float
    table_normal: float
    moment: float
    moment_slope: float   # mm: d(moment)/d(nail_normal)
    moment_offset: float  # N*mm
    feasible: bool


def _forces(h, l, d, theta, mu1, mu2, m, g, f_push):
    """Vectorized force balance; returns (nail_normal, nail_friction,
    table_friction, table_normal)."""
    weight = m * g
    f_rx = (f_push * (mu2 * np.sin(theta) + np.cos(theta)) + mu2 * weight) \
        / (1.0 + mu1 * mu2)
    f_ry = mu1 * f_rx
    f_by = f_push * np.sin(theta) - f_ry + weight
    f_bx = mu2 * f_by
    return f_rx, f_ry, f_bx, f_by


def _moment_direct(h, l, d, theta, f_rx, f_ry, f_bx, f_by, f_push):
    """Net moment about the center of mass from the four contact forces
    and the inclined push."""
    return 0.5 * (-(h - 2.0 * d) * f_rx + l * f_ry) \
        + 0.5 * (h * f_bx - l * f_by) \
        + 0.5 * (l * np.tan(theta) - h) * f_push * np.cos(theta)


def _reduced_coeffs(h, l, d, theta, mu1, mu2, m, g):
    """Affine coefficients (slope, offset) of the moment in nail_normal.

    Derived by eliminating the push and support forces through the force
    balance.  The offset keeps the support-force gravity contribution
    0.5*weight*(h*mu2 - l), without which the affine form does not match
    the direct moment for a massive card.
    """
    denom = mu2 * np.sin(theta) + np.cos(theta)
    s_term = np.sin(theta) * (h * mu2 - l) + np.cos(theta) * (l * np.tan(theta) - h)
    slope = 0.5 * (2.0 * d - h + 2.0 * l * mu1 - mu1 * mu2 * h
                   + (1.0 + mu1 * mu2) * s_term / denom)
    weight = m * g
    offset = 0.5 * weight * ((h * mu2 - l) - mu2 * s_term / denom)
    return slope, offset


def solve_forces(prob: ScoopProblem) -> ScoopSolution:
    """Solve the three-contact force balance and the net moment.

    The friction relations (nail_friction = friction_nail * nail_normal,
    table_friction = friction_table * table_normal) hold exactly by
    construction; both balance equations are satisfied to round-off.
    """
    f_rx, f_ry, f_bx, f_by = _forces(
        prob.thickness, prob.length, prob.nail_height, prob.push_angle,
        prob.friction_nail, prob.friction_table, prob.mass, prob.gravity,
        prob.push_force)
    moment = float(_moment_direct(
        prob.thickness, prob.length, prob.nail_height, prob.push_angle,
        f_rx, f_ry, f_bx, f_by, prob.push_force))
    if prob.push_angle < PUSH_ANGLE_CAP:
        slope, offset = _reduced_coeffs(
            prob.thickness, prob.length, prob.nail_height, prob.push_angle,
            prob.friction_nail, prob.friction_table, prob.mass, prob.gravity)
        slope, offset = float(slope), float(offset)
    else:
        slope, offset = float("nan"), float("nan")
    return ScoopSolution(
        nail_normal=float(f_rx), nail_friction=float(f_ry),
        table_friction=float(f_bx), table_normal=float(f_by),
        moment=moment, moment_slope=slope, moment_offset=offset,
        feasible=bool(f_by >= 0.0 and f_rx >= 0.0))


def moment_direct(prob: ScoopProblem, sol: ScoopSolution) -> float:
    """Literal moment sum over the solved contact forces (N*mm)."""
    return float(_moment_direct(
        prob.thickness, prob.length, prob.nail_height, prob.push_angle,
        sol.nail_normal, sol.nail_friction, sol.table_friction,
        sol.table_normal, prob.push_force))


def moment_reduced(prob: ScoopProblem, sol: ScoopSolution):
    """Moment through the reduced affine form: (moment, slope, offset).

    Rejects push angles at or beyond PUSH_ANGLE_CAP, where the tan term
    in the reduction leaves the model's range.
    """
    if prob.push_angle >= PUSH_ANGLE_CAP:
        raise ValueError("push_angle at or beyond the 89 degree model cap")
    slope, offset = _reduced_coeffs(
        prob.thickness, prob.length, prob.nail_height, prob.push_angle,
        prob.friction_nail, prob.friction_table, prob.mass, prob.gravity)
    slope, offset = float(slope), float(offset)
    return slope * sol.nail_normal + offset, slope, offset


def flip_predicate(prob: ScoopProblem) -> str:
    """FLIPS_CCW when the contact set is valid and the net moment is
    positive; NO_FLIP when valid with nonpositive moment; INFEASIBLE when
    the table support would have to pull down (the finger lifts the card
    off the table, leaving the three-contact model)."""
    sol = solve_forces(prob)
    if not sol.feasible:
        return INFEASIBLE
    return FLIPS_CCW if sol.moment > 0.0 else NO_FLIP


@dataclass(frozen=True)
class SweepResult:
    """Flattened grid sweep over (push_angle, friction_nail,
    friction_table, push_force) at fixed geometry."""

    theta: np.ndarray
    mu1: np.ndarray
    mu2: np.ndarray
    push_force: np.ndarray
    nail_normal: np.ndarray
    table_normal: np.ndarray
    moment: np.ndarray
    moment_slope: np.ndarray
    moment_offset: np.ndarray
    verdict: list[str]

    def __len__(self):
        return len(self.theta)

    def csv_lines(self):
        yield SWEEP_CSV_HEADER
        for k in range(len(self.theta)):
            vals = (self.theta[k], self.mu1[k], self.mu2[k],
                    self.push_force[k], self.nail_normal[k],
                    self.table_normal[k], self.moment[k],
                    self.moment_slope[k], self.moment_offset[k])
            yield ",".join(repr(float(v)) for v in vals) + f",{self.verdict[k]}"

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            for line in self.csv_lines():
                f.write(line + "\n")


def sweep(template: ScoopProblem, theta, mu1, mu2, push_force) -> SweepResult:
    """Evaluate the flip map over the cartesian grid of the four axes.

    Grid points that violate the model preconditions (angle outside
    (0, cap), negative frictions or force) are emitted with verdict
    OUT_OF_MODEL and NaN numeric columns.  Row count is the product of
    the axis sizes, in C order (theta outermost).
    """
    axes = [np.atleast_1d(np.asarray(a, dtype=float))
            for a in (theta, mu1, mu2, push_force)]
    if any(len(a) < 1 for a in axes):
        raise ValueError("each sweep axis needs at least one point")
    th, m1, m2, fl = (g.ravel() for g in np.meshgrid(*axes, indexing="ij"))

    valid = (th > 0.0) & (th < PUSH_ANGLE_CAP) & (m1 >= 0.0) & (m2 >= 0.0) \
        & (fl >= 0.0)
    h, l, d = template.thickness, template.length, template.nail_height
    m, g = template.mass, template.gravity

    f_rx = np.full(th.shape, np.nan)
    f_by = np.full(th.shape, np.nan)
    moment = np.full(th.shape, np.nan)
    slope = np.full(th.shape, np.nan)
    offset = np.full(th.shape, np.nan)
    if np.any(valid):
        rx, ry, bx, by = _forces(h, l, d, th[valid], m1[valid], m2[valid], m, g, fl[valid])
        f_rx[valid] = rx
        f_by[valid] = by
        moment[valid] = _moment_direct(h, l, d, th[valid], rx, ry, bx, by, fl[valid])
        sl, of = _reduced_coeffs(h, l, d, th[valid], m1[valid], m2[valid], m, g)
        slope[valid] = sl
        offset[valid] = of

    verdict = []
    for k in range(len(th)):
        if not valid[k]:
            verdict.append(OUT_OF_MODEL)
        elif f_by[k] < 0.0 or f_rx[k] < 0.0:
            verdict.append(INFEASIBLE)
        elif moment[k] > 0.0:
            verdict.append(FLIPS_CCW)
        else:
            verdict.append(NO_FLIP)
    return SweepResult(th, m1, m2, fl, f_rx, f_by, moment, slope, offset, verdict)
