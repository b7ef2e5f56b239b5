"""Symmetry teleportation: moving parameters along loss level sets to speed up descent."""
from .errors import ConvergenceError, DegenerateActivationError, HypothesisViolated
from .experiments import ExperimentConfig, preset
from .mlp import Mode, MlpModel, MlpParams
from .optim import OptimizerState, train, train_sgd
from .quadratic import QuadForm, QuadraticModel
from .teleport import TeleportConfig, TeleportReport, teleport
from .testfns import RotationModel

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError", "DegenerateActivationError", "HypothesisViolated",
    "ExperimentConfig", "preset", "Mode", "MlpModel", "MlpParams",
    "OptimizerState", "train", "train_sgd", "QuadForm", "QuadraticModel",
    "TeleportConfig", "TeleportReport", "teleport", "RotationModel",
]
