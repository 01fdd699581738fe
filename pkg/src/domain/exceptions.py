from typing import TYPE_CHECKING, List, Optional

if TYPE_CHECKING:
    from src.domain.models import Diagnostic


class SewerCcMpcError(Exception):
    """Base exception class for the sewer CC-MPC application."""
    pass

class ConfigParseError(SewerCcMpcError):
    """Raised when a network or manifest document cannot be parsed."""
    pass

class TopologyValidationError(SewerCcMpcError):
    """Raised when a parsed topology violates one or more network rules."""

    def __init__(self, diagnostics: List["Diagnostic"]):
        self.diagnostics = diagnostics
        lines = "; ".join(str(d) for d in diagnostics)
        super().__init__(f"Topologi tidak valid ({len(diagnostics)} diagnostik): {lines}")

class DimensionMismatchError(SewerCcMpcError):
    """Raised when vector or matrix sizes do not match the network."""
    pass

class DistributionError(SewerCcMpcError):
    """Raised for invalid probabilities or degenerate truncated Gaussians."""
    pass

class QpInputError(SewerCcMpcError):
    """Raised when a QP is malformed (non-PSD H, NaN, inconsistent shapes)."""
    pass

class ScenarioError(SewerCcMpcError):
    """Raised for invalid rain scenarios or rain vectors."""
    pass

class ReportSchemaError(SewerCcMpcError):
    """Raised when a sweep CSV does not match the expected columns."""

    def __init__(self, path: str, missing: Optional[List[str]] = None):
        self.path = path
        self.missing = missing or []
        super().__init__(f"Skema CSV tidak sesuai ({path}); kolom hilang: {', '.join(self.missing)}")

class StateBoundsError(SewerCcMpcError):
    """Raised when measured volumes lie outside [0, max_volume]."""
    pass
