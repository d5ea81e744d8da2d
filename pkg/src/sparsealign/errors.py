"""Exception types shared across the package.

Every failure mode that callers are expected to catch gets its own class so
that the CLI can map errors to exit codes without string matching.
"""

from __future__ import annotations


class SparseAlignError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SparseAlignError):
    """Invalid configuration value, malformed region, or mismatched manifests."""


class SchemaError(ConfigError):
    """Scenario file violates the expected schema (unknown key, bad type, ...)."""


class KernelContractError(SparseAlignError):
    """Interaction kernel returned a negative or non-finite value, or broke
    its declared Lipschitz bound during validation."""


class DivergenceError(SparseAlignError):
    """State became non-finite during time integration."""

    def __init__(self, message: str, t: float | None = None):
        super().__init__(message)
        self.t = t


class DegenerateSupportError(SparseAlignError):
    """Support box is degenerate along an axis that must have positive width."""


class DegenerateConcentrationError(SparseAlignError):
    """Mass is so concentrated that no positive slab widening exists."""


class InfeasiblePartitionError(SparseAlignError):
    """Requested slab masses cannot fit inside a probability distribution."""


class FrameError(SparseAlignError):
    """Measure is not in the canonical frame required by a construction."""


class SlotError(SparseAlignError):
    """Control queried outside its active time window."""


class ConstraintBreachError(SparseAlignError):
    """A runtime constraint (control-region mass budget) was violated."""

    def __init__(self, message: str, t: float | None = None, value: float | None = None):
        super().__init__(message)
        self.t = t
        self.value = value


class StepSizeError(SparseAlignError):
    """Grid step size violates the stability (CFL) precondition."""


class SchemeError(SparseAlignError):
    """Grid scheme produced an invalid state (negative density, mass drift)."""


class BoundaryError(SparseAlignError):
    """Grid support reached the protective boundary margin."""
