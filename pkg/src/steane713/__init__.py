"""Noisy fault-tolerant simulation of the [[7,1,3]] code.

Compares the four syndrome-measurement orders (XZXZ, XZZX, ZXXZ, ZXZX) and
the two ancilla styles (Shor cat states vs. encoded Steane blocks) by the
fidelity of the final state after a postselected logical gate sequence under
a nonequiprobable Pauli error model.
"""

from .noise import ErrorPattern, ErrorProbabilities, FaultSite, TruncationConfig
from .sim import PureState, apply_gate, discard, overlap_sq, project, tensor

__all__ = [
    "ErrorPattern",
    "ErrorProbabilities",
    "FaultSite",
    "TruncationConfig",
    "PureState",
    "apply_gate",
    "discard",
    "overlap_sq",
    "project",
    "tensor",
]

__version__ = "0.1.0"
