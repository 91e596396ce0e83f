"""Simulation toolkit for a falling weight coupled to a fast rotor."""
from .model import (DimensionlessParams, DomainError, PhysicalParams, UnsupportedModeError,
                    classify_regime, l_to_L_over_hbar, nondimensionalize, reference_params)

__all__ = ["DimensionlessParams", "DomainError", "PhysicalParams", "UnsupportedModeError",
           "classify_regime", "l_to_L_over_hbar", "nondimensionalize", "reference_params"]
