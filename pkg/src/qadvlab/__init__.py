"""Quantum adversarial machine-learning workbench.

Exact state-vector simulation, variational classifier training with
parameter-shift gradients, adversarial example generation and training,
quantum-dataset generation from Aubry-Andre dynamics, and cross-entropy
benchmarking.
"""

from .circuits import ArchitectureSpec, CircuitTemplate, Preset, build_template
from .grad import Classifier, LossKind
from .optim import Schedule, ScheduleKind, TrainConfig, train
from .sim import Gate, GateKind, NoiseSpec, StateVector

__version__ = "0.1.0"

__all__ = [
    "ArchitectureSpec",
    "CircuitTemplate",
    "Preset",
    "build_template",
    "Classifier",
    "LossKind",
    "Schedule",
    "ScheduleKind",
    "TrainConfig",
    "train",
    "Gate",
    "GateKind",
    "NoiseSpec",
    "StateVector",
    "__version__",
]
