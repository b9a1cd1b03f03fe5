"""Planning, simulation and serving for human-robot mutual adaptation.

A robot and a human jointly rotate a table toward one of two goals. The robot
plans against latent human adaptability and compliance, and may talk: issue a
verbal command, or convey that it knows a better way. Subpackages cover the
domain model, the bounded-memory human, belief tracking, the policy solver,
parameter learning from traces, episode simulation, an HTTP service and a CLI.
"""

from .belief import update_belief
from .calibration import default_model
from .humans import HumanParams
from .model import HumanAction, MomdpModel, ObservableState, RobotAction
from .sim import InteractionTrace, run_episode, run_population, verify_trace
from .solver import Policy, solve

__all__ = [
    "MomdpModel",
    "ObservableState",
    "RobotAction",
    "HumanAction",
    "HumanParams",
    "update_belief",
    "Policy",
    "solve",
    "InteractionTrace",
    "run_episode",
    "run_population",
    "verify_trace",
    "default_model",
]
__version__ = "0.1.0"
