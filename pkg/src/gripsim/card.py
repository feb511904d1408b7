"""Tactile card exploration and insertion as a finite-state machine.

A flat card is scooped off the table (statics checked by the scooping
model), its orientation verified from the embossed digit band, explored
along its long edge with fixed regrasp steps until a target grasp is
reached, rotated to vertical by gravity about the near-end grasp,
explored along the short edge the same way, and finally inserted into a
reader slot on a pure clearance check.

Exploration frame convention: the rig holds the sensor pad so that the
tracked card edge projects onto the pad center exactly when the grasp
reaches its target coordinate; a tactile edge reading is therefore the
signed remaining gap in mm.  Readings exist only while the edge is over
the pad; farther out the policy takes its largest step blind.  Regrasps
are instantaneous and slip-free, and the parallel fingers self-center
the card in the thickness direction, so the lateral insertion offset is
the rig's (zero here) and the axial offset is the final sensing
residual.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .gel import GelPadSpec, TactileFrame, extract_patch, render_card_face, \
    render_edge_contact
from .scooping import FLIPS_CCW, ScoopProblem, flip_predicate

DIGITS_PRESENT = "digits_present"
DIGITS_ABSENT = "digits_absent"

TRIAL_CSV_HEADER = "step,phase,grasp_x_mm,grasp_y_mm,edge_mm,action,step_mm,verdict"

SENSE_INDENT = 0.3   # mm card press used for exploration frames
SENSE_THRESHOLD = 0.05


class Phase(Enum):
    SCOOP = "Scoop"
    ORIENT_CHECK = "OrientCheck"
    FLIP_IN_HAND = "FlipInHand"
    EXPLORE_X = "ExploreX"
    ROTATE_VERTICAL = "RotateVertical"
    EXPLORE_Y = "ExploreY"
    INSERT = "Insert"
    DONE = "Done"
    FAIL = "Fail"


TRANSITIONS: dict[Phase, frozenset[Phase]] = {
    Phase.SCOOP: frozenset({Phase.ORIENT_CHECK, Phase.FAIL}),
    Phase.ORIENT_CHECK: frozenset({Phase.EXPLORE_X, Phase.FLIP_IN_HAND, Phase.FAIL}),
    Phase.FLIP_IN_HAND: frozenset({Phase.ORIENT_CHECK, Phase.FAIL}),
    Phase.EXPLORE_X: frozenset({Phase.EXPLORE_X, Phase.ROTATE_VERTICAL, Phase.FAIL}),
    Phase.ROTATE_VERTICAL: frozenset({Phase.EXPLORE_Y, Phase.FAIL}),
    Phase.EXPLORE_Y: frozenset({Phase.EXPLORE_Y, Phase.INSERT, Phase.FAIL}),
    Phase.INSERT: frozenset({Phase.DONE, Phase.FAIL}),
    Phase.DONE: frozenset(),
    Phase.FAIL: frozenset(),
}


def render_fsm_diagram() -> str:
    """Static text rendering of the legal transition graph."""
    lines = ["Card exploration state machine", ""]
    for phase in Phase:
        targets = TRANSITIONS[phase]
        if targets:
            names = " | ".join(sorted(t.value for t in targets))
            lines.append(f"{phase.value:>14} -> {names}")
        else:
            lines.append(f"{phase.value:>14} -> (terminal)")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CardSpec:
    """Credit-card geometry: body thickness plus a raised digit band."""

    length: float = 85.5
    width: float = 54.0
    base_thickness: float = 0.8
    digit_thickness: float = 1.2
    digit_band: tuple[float, float] = (15.0, 70.0)  # interval along the long edge
    digit_row: tuple[float, float] = (18.0, 26.0)   # interval along the short edge
    side_with_digits: str = "front"

    def __post_init__(self):
        if not (0 <= self.digit_band[0] < self.digit_band[1] <= self.length):
            raise ValueError("digit_band must be an interval within [0, length]")
        if not (0 <= self.digit_row[0] < self.digit_row[1] <= self.width):
            raise ValueError("digit_row must be an interval within [0, width]")
        if not 0 < self.base_thickness <= self.digit_thickness:
            raise ValueError("need 0 < base_thickness <= digit_thickness")
        if self.side_with_digits not in ("front", "back"):
            raise ValueError("side_with_digits must be 'front' or 'back'")


@dataclass(frozen=True)
class ReaderSpec:
    """Insertion slot geometry and its (predetermined) planar pose."""

    slot_length: float = 56.0
    slot_width: float = 1.5
    pose_x: float = 0.0
    pose_y: float = 0.0
    pose_angle: float = 0.0

    def __post_init__(self):
        if self.slot_length <= 0 or self.slot_width <= 0:
            raise ValueError("slot dimensions must be positive")


@dataclass(frozen=True)
class ExploreConfig:
    """Step menu, grasp targets, and termination bounds for exploration.

    x_d / y_d are the target standoffs of the tracked card edge from the
    grasp axis along the long/short edge (the pad is rigged to read zero
    there).  edge_tolerance should be at least half the smallest step so
    the no-overshoot rule always terminates."""

    steps: tuple[float, ...] = (-2.0, -4.0, -8.0)
    x_d: float = 5.0
    y_d: float = 6.0
    edge_tolerance: float = 1.0
    max_steps: int = 64
    rotate_margin: float = 10.0

    def __post_init__(self):
        if not self.steps or any(s >= 0 for s in self.steps):
            raise ValueError("steps must be negative")
        if self.x_d <= 0 or self.y_d <= 0:
            raise ValueError("grasp targets must be positive standoffs")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        if self.edge_tolerance < 0.5 * min(abs(s) for s in self.steps):
            raise ValueError(
                "edge_tolerance below half the smallest step cannot converge")


@dataclass(frozen=True)
class InitialPose:
    """Card pose under the gripper at trial start, within the assumed
    randomization range."""

    offset_x: float    # initial long-edge gap to the grasp target, mm
    offset_y: float    # initial short-edge gap, mm
    side_up: str = "front"

    RANGE_X = (10.0, 28.0)
    RANGE_Y = (8.0, 20.0)

    def validate(self) -> None:
        if not self.RANGE_X[0] <= self.offset_x <= self.RANGE_X[1]:
            raise ValueError(f"offset_x outside the assumed range {self.RANGE_X}")
        if not self.RANGE_Y[0] <= self.offset_y <= self.RANGE_Y[1]:
            raise ValueError(f"offset_y outside the assumed range {self.RANGE_Y}")
        if self.side_up not in ("front", "back"):
            raise ValueError("side_up must be 'front' or 'back'")


def sample_pose(seed: int) -> InitialPose:
    rng = np.random.default_rng(seed)
    return InitialPose(
        offset_x=float(rng.uniform(*InitialPose.RANGE_X)),
        offset_y=float(rng.uniform(*InitialPose.RANGE_Y)),
        side_up="front" if rng.integers(2) == 0 else "back")


@dataclass
class TrialTrace:
    """Phase-step log of one insertion trial."""

    rows: list[tuple] = field(default_factory=list)

    def add(self, step, phase, grasp_x, grasp_y, edge, action, step_mm, verdict):
        self.rows.append((step, phase, grasp_x, grasp_y, edge, action,
                          step_mm, verdict))

    def csv_lines(self):
        yield TRIAL_CSV_HEADER
        for (step, phase, gx, gy, edge, action, smm, verdict) in self.rows:
            edge_s = "" if edge is None else repr(float(edge))
            smm_s = "" if smm is None else repr(float(smm))
            yield (f"{step},{phase},{gx!r},{gy!r},{edge_s},{action},"
                   f"{smm_s},{verdict}")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            for line in self.csv_lines():
                f.write(line + "\n")

    def phase_edges(self):
        """(from, to) phase pairs recorded in the trace."""
        return [(Phase(row[1]), Phase(row[7].split(":")[0])) for row in self.rows]


@dataclass
class ExplorationState:
    """Card pose, grasp point, sensing, and FSM bookkeeping for one trial."""

    card: CardSpec
    cfg: ExploreConfig
    pad: GelPadSpec
    phase: Phase = Phase.SCOOP
    grasp_x: float = 0.0
    grasp_y: float = 0.0
    side_up: str = "front"         # which card side faces the sensor pad
    vertical: bool = False         # short edge on the table after rotation
    gap_x: float = 0.0             # true remaining long-edge gap, mm
    gap_y: float = 0.0
    last_edge_reading: float | None = None
    steps_taken: int = 0
    consecutive_flips: int = 0
    insert_lateral_offset: float = 0.0
    insert_axial_offset: float = 0.0
    fail_reason: str | None = None
    trace: TrialTrace = field(default_factory=TrialTrace)

    def _record(self, action, *, edge=None, step_mm=None, verdict=None):
        self.trace.add(self.steps_taken, self.phase.value,
                       round(self.grasp_x, 9), round(self.grasp_y, 9),
                       edge, action, step_mm,
                       verdict if verdict is not None else self.phase.value)

    def _transition(self, new_phase: Phase, action: str, *, edge=None,
                    step_mm=None, reason: str | None = None) -> None:
        if new_phase not in TRANSITIONS[self.phase]:
            raise RuntimeError(
                f"illegal transition {self.phase.value} -> {new_phase.value}")
        verdict = new_phase.value if reason is None else f"{new_phase.value}:{reason}"
        self._record(action, edge=edge, step_mm=step_mm, verdict=verdict)
        self.phase = new_phase
        if reason is not None:
            self.fail_reason = reason

    def _update_grasp(self) -> None:
        self.grasp_x = self.card.length - self.cfg.x_d - self.gap_x
        if self.vertical:
            self.grasp_y = self.card.width - self.cfg.y_d - self.gap_y


def scoop_card(card: CardSpec, frictions: tuple[float, float],
               geom: ScoopProblem | None = None,
               pose: InitialPose | None = None,
               cfg: ExploreConfig | None = None,
               pad: GelPadSpec | None = None) -> ExplorationState:
    """Scoop the card off the table and grasp it.

    The scooping statics (card geometry, the given nail/table friction
    pair, and the push from `geom`) must predict a counterclockwise flip;
    otherwise the trial fails immediately with reason scoop_infeasible.
    On success the grasp lands where the card was first contacted, given
    by the initial pose.
    """
    cfg = cfg if cfg is not None else ExploreConfig()
    pad = pad if pad is not None else GelPadSpec()
    pose = pose if pose is not None else InitialPose(18.0, 12.0)
    pose.validate()
    if cfg.x_d >= card.length or cfg.y_d >= card.width:
        raise ValueError("grasp targets must lie within the card")
    base = geom if geom is not None else ScoopProblem()
    problem = replace(
        base, thickness=card.base_thickness, length=card.length,
        nail_height=min(base.nail_height, card.base_thickness),
        friction_nail=frictions[0], friction_table=frictions[1])

    state = ExplorationState(card=card, cfg=cfg, pad=pad,
                             side_up=pose.side_up,
                             gap_x=pose.offset_x, gap_y=pose.offset_y)
    state._update_grasp()
    verdict = flip_predicate(problem)
    if verdict is FLIPS_CCW:
        state._transition(Phase.ORIENT_CHECK, "scoop")
    else:
        state._transition(Phase.FAIL, "scoop", reason="scoop_infeasible")
    return state


def detect_orientation(frame: TactileFrame) -> str:
    """Classify a grasped-card frame: DIGITS_PRESENT when an embossed
    band stands off the face contact, DIGITS_ABSENT for a flat face or
    no contact.  The band is recognized as a proper nonempty subset of
    the contact raised by about the emboss relief."""
    peak = float(frame.depth.max())
    if peak < SENSE_THRESHOLD:
        return DIGITS_ABSENT
    contact = int(np.count_nonzero(frame.depth >= SENSE_THRESHOLD))
    deep = int(np.count_nonzero(frame.depth >= peak - 0.2))
    return DIGITS_PRESENT if 0 < deep < contact else DIGITS_ABSENT


def _render_face(state: ExplorationState) -> TactileFrame:
    """Frame of the grasped card face currently touching the pad.

    The pad view is centered on the grasp along the length and on the
    card's middle across the width; the embossed digit rectangle appears
    only where it intersects the view and only on the digit side."""
    card, pad = state.card, state.pad
    if state.side_up != card.side_with_digits:
        return render_card_face(pad, SENSE_INDENT)
    x_lo = max(card.digit_band[0], state.grasp_x - pad.half_width_mm)
    x_hi = min(card.digit_band[1], state.grasp_x + pad.half_width_mm)
    y_center = 0.5 * card.width
    y_lo = max(card.digit_row[0], y_center - pad.half_height_mm)
    y_hi = min(card.digit_row[1], y_center + pad.half_height_mm)
    if x_lo >= x_hi or y_lo >= y_hi:
        return render_card_face(pad, SENSE_INDENT)
    return render_card_face(pad, SENSE_INDENT,
                            band_x=(x_lo - state.grasp_x, x_hi - state.grasp_x),
                            band_y=(y_lo - y_center, y_hi - y_center))


def orient_check(state: ExplorationState) -> ExplorationState:
    """Read the card face and route to exploration or an in-hand flip."""
    if state.phase is not Phase.ORIENT_CHECK:
        raise ValueError(f"orient_check requires OrientCheck, got {state.phase.value}")
    verdict = detect_orientation(_render_face(state))
    if verdict == DIGITS_PRESENT:
        state.consecutive_flips = 0
        state._transition(Phase.EXPLORE_X, "orient_check")
    elif state.consecutive_flips >= 1:
        state._transition(Phase.FAIL, "orient_check", reason="sensor_inconsistent")
    else:
        state._transition(Phase.FLIP_IN_HAND, "orient_check")
    return state


def flip_in_hand(state: ExplorationState) -> ExplorationState:
    """Flip the grasped card so the other side faces the sensor; the step
    budget is not charged."""
    if state.phase is not Phase.FLIP_IN_HAND:
        raise ValueError(f"flip_in_hand requires FlipInHand, got {state.phase.value}")
    state.side_up = "back" if state.side_up == "front" else "front"
    state.consecutive_flips += 1
    state._transition(Phase.ORIENT_CHECK, "flip")
    return state


def _sense_edge(state: ExplorationState, gap: float) -> float | None:
    """Tactile reading of the tracked edge: its signed offset from the
    pad center, or None when the edge lies off the pad."""
    pad = state.pad
    if abs(gap) > pad.half_height_mm - 0.5:
        return None
    patch = extract_patch(
        render_edge_contact(pad, offset=float(gap), angle=0.0,
                            indent=SENSE_INDENT), SENSE_THRESHOLD)
    return patch.edge_offset


def _select_step(reading: float, cfg: ExploreConfig) -> float:
    """Largest-magnitude step that does not overshoot the target; when
    even the smallest step overshoots, take the smallest (the residual is
    then within the tolerance because tolerance >= half that step)."""
    candidates = [s for s in cfg.steps if reading + s >= 0.0]
    return min(candidates) if candidates else max(cfg.steps)


def _step_explore(state: ExplorationState, cfg: ExploreConfig, axis: str,
                  done_phase: Phase, action: str) -> ExplorationState:
    gap = state.gap_x if axis == "x" else state.gap_y
    reading = _sense_edge(state, gap)
    state.last_edge_reading = reading
    if reading is not None and abs(reading) <= cfg.edge_tolerance:
        if axis == "y":
            # the arm nulls the measured gap before lifting; what remains
            # is the sensing residual
            state.insert_axial_offset = gap - reading
            state.gap_y = gap - reading
        state._update_grasp()
        state._transition(done_phase, action, edge=reading)
        return state
    if state.steps_taken >= cfg.max_steps:
        state._transition(Phase.FAIL, action, edge=reading,
                          reason="budget_exhausted")
        return state
    step = _select_step(reading, cfg) if reading is not None else min(cfg.steps)
    if axis == "x":
        state.gap_x = gap + step
    else:
        state.gap_y = gap + step
    state.steps_taken += 1
    state._update_grasp()
    state._transition(state.phase, action if reading is not None
                      else action + "_blind", edge=reading, step_mm=step)
    return state


def step_explore_x(state: ExplorationState, cfg: ExploreConfig | None = None) -> ExplorationState:
    """One long-edge exploration move: sense the edge, regrasp by the
    selected step, or advance to the rotation when within tolerance."""
    if state.phase is not Phase.EXPLORE_X:
        raise ValueError(f"step_explore_x requires ExploreX, got {state.phase.value}")
    cfg = cfg if cfg is not None else state.cfg
    return _step_explore(state, cfg, "x", Phase.ROTATE_VERTICAL, "step_x")


def step_explore_y(state: ExplorationState, cfg: ExploreConfig | None = None) -> ExplorationState:
    """One short-edge exploration move; converging advances to insertion."""
    if state.phase is not Phase.EXPLORE_Y:
        raise ValueError(f"step_explore_y requires ExploreY, got {state.phase.value}")
    cfg = cfg if cfg is not None else state.cfg
    return _step_explore(state, cfg, "y", Phase.INSERT, "step_y")


def rotate_vertical(state: ExplorationState, cfg: ExploreConfig | None = None) -> ExplorationState:
    """Gravity-assisted rotation onto the short edge, pivoting about the
    near-end grasp; unsafe (grasp too far from the card end) fails."""
    if state.phase is not Phase.ROTATE_VERTICAL:
        raise ValueError(f"rotate_vertical requires RotateVertical, got {state.phase.value}")
    cfg = cfg if cfg is not None else state.cfg
    overhang = state.card.length - state.grasp_x
    if overhang > cfg.rotate_margin:
        state._transition(Phase.FAIL, "rotate", reason="rotation_unsafe")
        return state
    state.vertical = True
    state._update_grasp()
    state._transition(Phase.EXPLORE_Y, "rotate")
    return state


def insert(state: ExplorationState, reader: ReaderSpec,
           insert_depth: float = 12.0) -> ExplorationState:
    """Clearance-only insertion check.

    Lateral clearance is (slot_width - leading thickness)/2, with the
    digit thickness applying when the digit band reaches into the leading
    insert_depth of the card; axial clearance is
    (slot_length - card width)/2.  Any miss fails with the signed miss
    distance in the fail reason."""
    if state.phase is not Phase.INSERT:
        raise ValueError(f"insert requires Insert, got {state.phase.value}")
    card = state.card
    if reader.slot_length <= card.width:
        raise ValueError("slot shorter than the card width; insertion not intended")
    leading = card.digit_thickness if card.digit_band[0] < insert_depth \
        else card.base_thickness
    lat_clear = 0.5 * (reader.slot_width - leading)
    ax_clear = 0.5 * (reader.slot_length - card.width)
    lat_miss = state.insert_lateral_offset
    ax_miss = state.insert_axial_offset
    if abs(lat_miss) <= lat_clear and abs(ax_miss) <= ax_clear:
        state._transition(Phase.DONE, "insert", edge=state.last_edge_reading)
    else:
        worst = lat_miss if abs(lat_miss) - lat_clear >= abs(ax_miss) - ax_clear \
            else ax_miss
        state._transition(Phase.FAIL, "insert",
                          reason=f"misaligned={worst:+.4f}mm")
    return state


@dataclass
class InsertionResult:
    done: bool
    fail_reason: str | None
    steps_taken: int
    state: ExplorationState
    trace: TrialTrace
    trace_path: str = ""


def run_insertion_trial(initial_pose: InitialPose | None = None, seed: int = 0,
                        *, card: CardSpec | None = None,
                        reader: ReaderSpec | None = None,
                        cfg: ExploreConfig | None = None,
                        scoop_geom: ScoopProblem | None = None,
                        frictions: tuple[float, float] = (0.3, 0.4),
                        pad: GelPadSpec | None = None,
                        out_dir=None) -> InsertionResult:
    """Run the full scoop-explore-insert state machine for one trial.

    The initial pose is sampled from `seed` when not given and must lie
    within the assumed randomization range.  Deterministic per
    (pose, seed, configs); every phase transition and tactile reading
    lands in the trace.
    """
    card = card if card is not None else CardSpec()
    reader = reader if reader is not None else ReaderSpec()
    cfg = cfg if cfg is not None else ExploreConfig()
    pad = pad if pad is not None else GelPadSpec()
    pose = initial_pose if initial_pose is not None else sample_pose(seed)
    pose.validate()

    state = scoop_card(card, frictions, geom=scoop_geom, pose=pose, cfg=cfg,
                       pad=pad)
    guard = cfg.max_steps + 16
    while state.phase not in (Phase.DONE, Phase.FAIL) and guard > 0:
        guard -= 1
        if state.phase is Phase.ORIENT_CHECK:
            orient_check(state)
        elif state.phase is Phase.FLIP_IN_HAND:
            flip_in_hand(state)
        elif state.phase is Phase.EXPLORE_X:
            step_explore_x(state, cfg)
        elif state.phase is Phase.ROTATE_VERTICAL:
            rotate_vertical(state, cfg)
        elif state.phase is Phase.EXPLORE_Y:
            step_explore_y(state, cfg)
        elif state.phase is Phase.INSERT:
            insert(state, reader)
    if guard == 0 and state.phase not in (Phase.DONE, Phase.FAIL):
        state._transition(Phase.FAIL, "guard", reason="budget_exhausted")

    trace_path = ""
    if out_dir is not None:
        trace_path = os.path.join(str(out_dir), f"insertion_{seed}.csv")
        state.trace.to_csv(trace_path)
    return InsertionResult(done=state.phase is Phase.DONE,
                           fail_reason=state.fail_reason,
                           steps_taken=state.steps_taken, state=state,
                           trace=state.trace, trace_path=trace_path)
