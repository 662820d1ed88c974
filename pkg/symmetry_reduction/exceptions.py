"""Error types raised across the symmetry-reduction engine."""

from typing import Any, Dict, Optional


class SymmetryReductionError(Exception):
    """Base class for all engine errors."""


class ExprSyntaxError(SymmetryReductionError):
    """Malformed expression text."""

    def __init__(self, message: str, offset: int, text: str = ""):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at byte {offset}" + (f" in {text!r}" if text else ""))


class UnknownSymbol(SymmetryReductionError):
    """Identifier that is neither a declared variable, parameter nor definition."""

    def __init__(self, name: str, offset: Optional[int] = None):
        self.name = name
        self.offset = offset
        where = f" at byte {offset}" if offset is not None else ""
        super().__init__(f"Unknown symbol {name!r}{where}")


class JetOrderExceeded(SymmetryReductionError):
    """A derivative order above the declared maximum."""

    def __init__(self, order: int, q_max: int):
        self.order = order
        self.q_max = q_max
        super().__init__(f"Jet order {order} exceeds q_max={q_max}")


class PoleError(SymmetryReductionError):
    """Evaluation hit a (near) zero denominator."""

    def __init__(
        self,
        message: str,
        assignment: Optional[Dict[Any, float]] = None,
        subexpression: Any = None,
        time: Optional[float] = None,
    ):
        self.assignment = assignment or {}
        self.subexpression = subexpression
        self.time = time
        super().__init__(message)


class DomainError(SymmetryReductionError):
    """Elementary function evaluated outside its real domain."""


class DimensionMismatch(SymmetryReductionError):
    """Objects of incompatible dimensions were combined."""


class VerticalFieldRequired(SymmetryReductionError):
    """Operation only supports fields with tau identically zero."""


class NotInvariant(SymmetryReductionError):
    """A claimed invariant is not annihilated by some field."""

    def __init__(self, which: str, field_index: int, witness: Any = None):
        self.which = which
        self.field_index = field_index
        self.witness = witness
        super().__init__(f"{which} is not invariant under field {field_index + 1}")


class ConstantRankViolation(SymmetryReductionError):
    """Rank of a field set varies across sample points."""


class NoSolvedForm(SymmetryReductionError):
    """An ODE system lacks the solved form needed for restriction."""


class NotStandardSymmetry(SymmetryReductionError):
    """Base system is not standardly symmetric under the given fields."""


class ZeroScaling(SymmetryReductionError):
    """Orbital scaling factor is identically zero."""


class WrongCount(SymmetryReductionError):
    """Invariant set sizes disagree with n - r and r."""


class NotFound(SymmetryReductionError):
    """Ansatz search produced no verified solution."""


class NotExpressible(SymmetryReductionError):
    """Quantity cannot be rewritten in the invariant variables within the ansatz."""

    def __init__(self, message: str, residual: Optional[float] = None, witness: Any = None):
        self.residual = residual
        self.witness = witness
        super().__init__(message)


class NoCommonFactor(SymmetryReductionError):
    """Reduced right-hand sides share no common scalar factor."""

    def __init__(self, message: str, witness: Any = None):
        self.witness = witness
        super().__init__(message)


class RankDeficientChain(SymmetryReductionError):
    """Chain map of a DS-to-ODE conversion is not a local diffeomorphism."""


class NewtonDivergence(SymmetryReductionError):
    """Newton inversion of the chain map did not converge."""


class StepTooLarge(SymmetryReductionError):
    """Halved-step RK4 rerun disagrees beyond tolerance."""

    def __init__(self, message: str, discrepancy: float):
        self.discrepancy = discrepancy
        super().__init__(message)


class ProblemFileError(SymmetryReductionError):
    """Problem file has a missing section, bad shape or unparsable entry."""

    def __init__(self, message: str, path: Any = None, key: Optional[str] = None):
        self.path = path
        self.key = key
        prefix = f"{path}: " if path else ""
        suffix = f" [{key}]" if key else ""
        super().__init__(f"{prefix}{message}{suffix}")
