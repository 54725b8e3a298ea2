"""
Invariant groups run by the selftest.
"""

from .anchoring import AlignmentCheck, RedundancyCheck, SurrogateCheck
from .base import BaseCheck
from .losses import LossCheck
from .views import MemoryOrderingCheck, StitchCheck
from .voxels import ContainmentCheck, MaskRecoveryCheck, OracleEquivalenceCheck

__all__ = [
    "BaseCheck",
    "ContainmentCheck",
    "MaskRecoveryCheck",
    "RedundancyCheck",
    "OracleEquivalenceCheck",
    "AlignmentCheck",
    "StitchCheck",
    "MemoryOrderingCheck",
    "LossCheck",
    "SurrogateCheck",
]
