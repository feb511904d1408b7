"""Rub singulation: opposed fingertip strokes shed grains adhered between
the pads and a grasped object while the grasp controller holds contact.

A trial closes on the object until the controller settles, sizes the
stroke range from the settled opening through a linear law, then runs
sinusoidal strokes.  Stroking rolls the object between the pads (pure
rolling, no slip), so non-circular objects present a changing width to
the plant; adhered grains shed stochastically with stroke motion and
inflate the measured contact area until gone.  The object counts as
dropped when the measured area stays below a floor for a dwell time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gel import ContactPlant
from .mpc import GraspController, GraspState, Limits, MpcParams
from .seeding import derive_seed

SERVO_RANGE = math.radians(45.0)  # rotation servo working range during contact

RUB_TRACE_CSV_HEADER = ("tick,t_s,c_px,p_mm,v_mms,a_mms2,cost,kkt,"
                        "phi_rad,w_mm,n_grains")
BATCH_CSV_HEADER = "label,seed,retained,residual_grains,min_area_px,strokes"


@dataclass(frozen=True)
class ObjectProfile:
    """Effective width an object presents to parallel fingers as it rolls.

    Width is periodic with period pi (two-finger symmetry).  kind is one
    of 'sphere' (constant width), 'ellipse' (two-axis width law), or
    'irregular' (tabulated, linearly interpolated).
    """

    kind: str
    nominal_width: float  # largest width presented over a full roll, mm
    label: str = ""
    major: float = 0.0    # ellipse diameters, mm
    minor: float = 0.0
    table_angles: tuple[float, ...] = ()   # irregular: angles in [0, pi)
    table_widths: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("sphere", "ellipse", "irregular"):
            raise ValueError(f"unknown object kind {self.kind!r}")
        if self.nominal_width <= 0:
            raise ValueError("nominal_width must be positive")
        if self.kind == "ellipse" and not 0 < self.minor <= self.major:
            raise ValueError("ellipse needs 0 < minor <= major")
        if self.kind == "irregular":
            if len(self.table_angles) != len(self.table_widths) or len(self.table_widths) < 2:
                raise ValueError("irregular profile needs matching angle/width tables")
            if min(self.table_widths) <= 0:
                raise ValueError("irregular widths must be positive")

    @staticmethod
    def sphere(diameter: float, label: str = "sphere") -> "ObjectProfile":
        return ObjectProfile("sphere", diameter, label)

    @staticmethod
    def ellipse(major: float, minor: float, label: str = "ellipse") -> "ObjectProfile":
        return ObjectProfile("ellipse", major, label, major=major, minor=minor)

    @staticmethod
    def irregular(angles, widths, label: str = "irregular") -> "ObjectProfile":
        return ObjectProfile("irregular", max(widths), label,
                             table_angles=tuple(float(a) for a in angles),
                             table_widths=tuple(float(w) for w in widths))

    def width(self, phi: float) -> float:
        """Effective width (mm) at roll angle phi (rad)."""
        if self.kind == "sphere":
            return self.nominal_width
        phi = phi % math.pi
        if self.kind == "ellipse":
            a, b = 0.5 * self.major, 0.5 * self.minor
            s, c = math.sin(phi), math.cos(phi)
            return 2.0 * math.sqrt(a * a * s * s + b * b * c * c)
        angles = np.asarray(self.table_angles + (self.table_angles[0] + math.pi,))
        widths = np.asarray(self.table_widths + (self.table_widths[0],))
        return float(np.interp(phi, angles, widths))


@dataclass(frozen=True)
class RubConfig:
    """Stroke-range law, servo retract rule, stroke schedule, and the
    drop detector."""

    range_gain: float = 0.5          # stroke range per mm of settled opening
    range_offset: float = 2.0        # mm
    retract_threshold: float = 15.0  # objects narrower than this retract, mm
    retract_angle: float = math.radians(20.0)
    stroke_freq: float = 1.0         # Hz
    n_strokes: int = 6
    drop_area_floor: float = 2200.0  # px; 40% of the default area target
    drop_dwell: float = 0.25         # s below the floor before declaring a drop
    travel_max: float = 30.0         # linear actuator travel, mm
    grain_area_px: float = 12.0      # measured-area bias per adhered grain
    settle_timeout: float = 3.0      # s allowed for the initial grasp to settle

    def __post_init__(self):
        if self.stroke_freq <= 0:
            raise ValueError("stroke_freq must be positive")
        if self.n_strokes < 0:
            raise ValueError("n_strokes must be nonnegative")
        if self.drop_area_floor <= 0:
            raise ValueError("drop_area_floor must be positive")
        if abs(self.retract_angle) > SERVO_RANGE + 1e-12:
            raise ValueError("retract_angle outside the +/-45 degree servo range")
        if self.travel_max <= 0 or self.drop_dwell < 0 or self.grain_area_px < 0:
            raise ValueError("invalid rub configuration")


class GrainField:
    """Count of grains adhered in the finger-object interface.

    Removal draws come from a seeded stream; steps with zero removal
    probability do not consume randomness, so a no-op stroke leaves the
    field bitwise unchanged.
    """

    def __init__(self, n_grains: int = 40, removal_rate: float = 0.02, seed: int = 0):
        if n_grains < 0:
            raise ValueError("n_grains must be nonnegative")
        if removal_rate < 0:
            raise ValueError("removal_rate must be nonnegative")
        self.n_grains = int(n_grains)
        self.removal_rate = float(removal_rate)
        self.seed = int(seed)
        self._rng = np.random.default_rng(seed)

    def _evolved(self, n_grains: int) -> "GrainField":
        child = GrainField.__new__(GrainField)
        child.n_grains = n_grains
        child.removal_rate = self.removal_rate
        child.seed = self.seed
        child._rng = self._rng  # the stream continues across steps
        return child


def stroke_range(p_stable: float, cfg: RubConfig) -> float:
    """Linear stroke-range law, clamped to [0, actuator travel]."""
    if p_stable < 0:
        raise ValueError("p_stable must be nonnegative")
    return min(max(0.0, cfg.range_gain * p_stable + cfg.range_offset),
               cfg.travel_max)


def servo_policy(nominal_width: float, cfg: RubConfig) -> float:
    """Retract angle for the rotation servos: objects strictly narrower
    than the threshold retract inward by the configured angle, others
    stay at zero.  Always within the +/-45 degree servo range."""
    if nominal_width <= 0:
        raise ValueError("nominal_width must be positive")
    angle = cfg.retract_angle if nominal_width < cfg.retract_threshold else 0.0
    if abs(angle) > SERVO_RANGE + 1e-12:
        raise ValueError("retract angle outside the servo working range")
    return angle


def rub_step(phi: float, stroke_delta: float, profile: ObjectProfile):
    """Roll the object by one stroke increment: opposed pad motion of
    stroke_delta rotates it by stroke_delta / (width/2) (pure rolling).

    Returns (new angle, new effective width)."""
    if not math.isfinite(stroke_delta):
        raise ValueError("stroke_delta must be finite")
    w = profile.width(phi)
    phi2 = phi + stroke_delta / (0.5 * w)
    return phi2, profile.width(phi2)


def grain_step(field: GrainField, stroke_delta: float, contact_area: float,
               area_target: float) -> GrainField:
    """Shed grains: each survives the increment independently with removal
    probability min(1, removal_rate * |stroke_delta| * area / target)."""
    if contact_area < 0:
        raise ValueError("contact_area must be nonnegative")
    prob = min(1.0, field.removal_rate * abs(stroke_delta)
               * contact_area / area_target)
    if prob <= 0.0 or field.n_grains == 0:
        return field
    removed = int(field._rng.binomial(field.n_grains, prob))
    return field._evolved(field.n_grains - removed)


@dataclass
class RubTrace:
    """Per-tick singulation record: controller columns plus roll state."""

    tick: np.ndarray
    t_s: np.ndarray
    c_px: np.ndarray
    p_mm: np.ndarray
    v_mms: np.ndarray
    a_mms2: np.ndarray
    cost: np.ndarray
    kkt: np.ndarray
    phi_rad: np.ndarray
    w_mm: np.ndarray
    n_grains: np.ndarray

    def csv_lines(self):
        yield RUB_TRACE_CSV_HEADER
        for k in range(len(self.tick)):
            vals = (self.t_s[k], self.c_px[k], self.p_mm[k], self.v_mms[k],
                    self.a_mms2[k], self.cost[k], self.kkt[k],
                    self.phi_rad[k], self.w_mm[k])
            yield (f"{int(self.tick[k])},"
                   + ",".join(repr(float(v)) for v in vals)
                   + f",{int(self.n_grains[k])}")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            for line in self.csv_lines():
                f.write(line + "\n")


@dataclass
class TrialOutcome:
    """Result of one singulation trial."""

    retained: bool
    residual_grains: int
    min_area: float          # px, lowest measured area once stroking starts
    strokes_executed: int
    trace_path: str = ""
    aborted_infeasible: bool = False
    retract_angle: float = 0.0
    p_stable: float = 0.0
    trace: RubTrace | None = None


def batch_csv_row(label: str, seed: int, outcome: TrialOutcome) -> str:
    return (f"{label},{seed},{str(outcome.retained).lower()},"
            f"{outcome.residual_grains},{outcome.min_area!r},"
            f"{outcome.strokes_executed}")


def run_singulation_trial(profile: ObjectProfile, mpc: MpcParams,
                          cfg: RubConfig, grains: GrainField, seed: int,
                          *, limits: Limits | None = None,
                          area_max: float = 8000.0, squeeze_range: float = 8.0,
                          noise_sigma: float = 0.0,
                          out_dir=None) -> TrialOutcome:
    """Run one seeded singulation trial.

    Phases: (1) close from an open start until the controller settles
    (2% area band, |speed| < 0.05 mm/s, held 0.25 s) or the settle
    timeout elapses; (2) size the stroke range from the settled opening;
    (3) stroke sinusoidally, each tick rolling the object, shedding
    grains against the true object contact, and stepping the controller
    on the measured area (object contact plus grain bias).

    `grains` supplies the count and removal rate; its random stream and
    the plant's noise stream are both derived from `seed`, so the whole
    trial is a function of its arguments.  A controller infeasibility
    aborts the trial with a distinct flag.
    """
    if limits is None:
        limits = Limits()
    if not 0 < cfg.drop_area_floor < mpc.area_target:
        raise ValueError("drop_area_floor must lie in (0, area_target)")
    plant = ContactPlant(object_width=profile.width(0.0), area_max=area_max,
                         squeeze_range=squeeze_range, noise_sigma=noise_sigma,
                         seed=derive_seed(seed, 1))
    gfield = GrainField(grains.n_grains, grains.removal_rate,
                        seed=derive_seed(seed, 2))
    ctl = GraspController(mpc, limits)
    retract = servo_policy(profile.nominal_width, cfg)

    dt = mpc.dt
    rows = []  # (tick, t, c, p, v, a, cost, kkt, phi, w, n_grains)
    phi = 0.0
    w = profile.width(phi)
    p = min(profile.width(0.0) + 5.0, limits.opening_max)
    v = 0.0
    tick = 0
    aborted = False

    def step_controller(c_meas, t):
        nonlocal p, v, tick, aborted
        plan = ctl.solve(GraspState(c_meas, p, v, tick=tick))
        if not plan.feasible:
            aborted = True
        a0 = float(plan.accel[0])
        rows.append((tick, t, c_meas, p, v, a0, plan.cost, plan.kkt_residual,
                     phi, w, gfield.n_grains))
        p = p + dt * v + 0.5 * dt * dt * a0
        v = v + dt * a0
        tick += 1

    # phase 1: settle the grasp
    dwell_needed = int(round(0.25 * mpc.freq))
    dwell = 0
    for k in range(int(round(cfg.settle_timeout * mpc.freq))):
        c_meas = plant.area(p) + gfield.n_grains * cfg.grain_area_px
        in_band = (abs(c_meas - mpc.area_target) <= 0.02 * mpc.area_target
                   and abs(v) < 0.05)
        dwell = dwell + 1 if in_band else 0
        step_controller(c_meas, tick * dt)
        if aborted or dwell >= dwell_needed:
            break
    p_stable = p

    reach = stroke_range(p_stable, cfg)
    min_area = math.inf
    retained = True
    strokes_executed = 0
    if not aborted and cfg.n_strokes > 0:
        n_ticks = int(round(cfg.n_strokes / cfg.stroke_freq * mpc.freq))
        stroke_prev = 0.0
        below_run = 0
        t0 = tick * dt
        for k in range(n_ticks):
            t = (k + 1) * dt
            stroke = 0.5 * reach * math.sin(2.0 * math.pi * cfg.stroke_freq * t)
            delta = stroke - stroke_prev
            stroke_prev = stroke
            phi, w = rub_step(phi, delta, profile)
            plant.object_width = w
            c_obj = plant.area(p)
            gfield = grain_step(gfield, delta, c_obj, mpc.area_target)
            c_meas = c_obj + gfield.n_grains * cfg.grain_area_px
            min_area = min(min_area, c_meas)
            step_controller(c_meas, t0 + t)
            strokes_executed = min(int(t * cfg.stroke_freq), cfg.n_strokes)
            if aborted:
                break
            below_run = below_run + 1 if c_meas < cfg.drop_area_floor else 0
            if below_run * dt >= cfg.drop_dwell:
                retained = False
                break
        else:
            strokes_executed = cfg.n_strokes
    if aborted:
        retained = False
    if not math.isfinite(min_area):
        min_area = rows[-1][2] if rows else 0.0

    arr = np.array(rows, dtype=float)
    trace = RubTrace(
        tick=arr[:, 0].astype(int), t_s=arr[:, 1], c_px=arr[:, 2],
        p_mm=arr[:, 3], v_mms=arr[:, 4], a_mms2=arr[:, 5], cost=arr[:, 6],
        kkt=arr[:, 7], phi_rad=arr[:, 8], w_mm=arr[:, 9],
        n_grains=arr[:, 10].astype(int))
    trace_path = ""
    if out_dir is not None:
        import os
        label = profile.label or profile.kind
        trace_path = os.path.join(str(out_dir), f"singulate_{label}_{seed}.csv")
        trace.to_csv(trace_path)
    return TrialOutcome(
        retained=retained, residual_grains=gfield.n_grains,
        min_area=float(min_area), strokes_executed=strokes_executed,
        trace_path=trace_path, aborted_infeasible=aborted,
        retract_angle=retract, p_stable=p_stable, trace=trace)
