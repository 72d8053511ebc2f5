"""Failure types shared across the solvers and simulators.

Every raise carries a short message with the offending quantity so CLI
error reports stay machine readable.
"""

from __future__ import annotations


class LineageLabError(Exception):
    """Base class for all package specific failures."""


class NoConvergence(LineageLabError):
    """An iterative solve hit its iteration budget before its tolerance."""


class StabilityViolation(LineageLabError):
    """A requested explicit time step exceeds the scheme's stability bound."""


class DegenerateWeight(LineageLabError):
    """A weight function or window is too small to divide by."""


class WindowExit(LineageLabError):
    """A trajectory spent too much time clipped at the positivity window."""


class BranchInversionFailure(LineageLabError):
    """The Hamiltonian branch equation has no root on the requested branch."""


class Extinction(LineageLabError):
    """A simulated population died out. Reported, never fatal to a batch."""

    def __init__(self, t: float):
        super().__init__(f"population extinct at t={t:.6g}")
        self.t = t


class OrphanChain(LineageLabError):
    """A lineage walk met a parent id that is not in the table."""
