"""Variational (multi-D2) dynamics of a driven, dissipative Rabi dimer."""

__version__ = "0.1.0"

from .ansatz import MultiD2State, initial_state
from .dynamics import propagate, rk4_step
from .model import BathSpec, DiscretizedBath, DrivingField, ModelSpec, discretize_bath
from .observables import ObservableRecord, observe

__all__ = [
    "BathSpec", "DiscretizedBath", "DrivingField", "ModelSpec", "MultiD2State",
    "ObservableRecord", "discretize_bath", "initial_state", "observe", "propagate", "rk4_step",
]
