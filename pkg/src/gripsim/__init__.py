"""Desk-scale simulation and control suite for a two-finger tactile
gripper: contact-area MPC grasping, rub singulation with a granular
adhesion model, quasi-static scoop analysis, and a tactile card
exploration/insertion state machine."""

from .card import (CardSpec, ExploreConfig, ExplorationState, InitialPose,
                   InsertionResult, Phase, ReaderSpec, detect_orientation,
                   flip_in_hand, insert, rotate_vertical, run_insertion_trial,
                   scoop_card, step_explore_x, step_explore_y)
from .config import (ConfigError, PlantConfig, ScenarioConfig, SimConfig,
                     load_config, parse_config)
from .gel import (ContactPatch, ContactPlant, GelPadSpec, TactileFrame,
                  extract_patch, plant_step, render_card_face,
                  render_edge_contact, render_sphere_contact, write_pgm)
from .harness import RunReport, reproduce, run
from .mpc import (ControlPlan, GraspController, GraspState, Limits, MpcParams,
                  Trace, cost, predict, run_closed_loop, solve)
from .rubbing import (GrainField, ObjectProfile, RubConfig, TrialOutcome,
                      grain_step, rub_step, run_singulation_trial,
                      servo_policy, stroke_range)
from .scooping import (FLIPS_CCW, INFEASIBLE, NO_FLIP, OUT_OF_MODEL,
                       ScoopProblem, ScoopSolution, flip_predicate,
                       moment_direct, moment_reduced, solve_forces, sweep)

__version__ = "0.1.0"
