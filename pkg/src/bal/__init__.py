"""Simulation laboratory for the bosonic avalanche laser.

Subpackages: :mod:`bal.model` (types and rates), :mod:`bal.meanfield`,
:mod:`bal.stochastic`, :mod:`bal.analysis`, :mod:`bal.circuit`, and the
command-line front end :mod:`bal.cli`.
"""

__version__ = "0.1.0"

from .model import (EventKind, FockConfig, JumpEvent, MeanFieldState, PumpSpec,  # noqa: E402
                    SystemParams)

__all__ = ["__version__", "EventKind", "FockConfig", "JumpEvent", "MeanFieldState",
           "PumpSpec", "SystemParams"]
