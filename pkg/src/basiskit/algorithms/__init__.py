from .bl1 import BL1, BL1State
from .bl2 import BL2, BL2State
from .bl3 import BL3, BL3State
from .common import DivergenceError, RoundStats, default_alpha, default_eta
from .firstorder import GD, Diana, DianaState, GDState
from .newton import NewtonMethod, NewtonState, fednl_adapter

__all__ = [
    "BL1", "BL1State", "BL2", "BL2State", "BL3", "BL3State",
    "GD", "GDState", "Diana", "DianaState",
    "NewtonMethod", "NewtonState", "fednl_adapter",
    "DivergenceError", "RoundStats", "default_alpha", "default_eta",
]
