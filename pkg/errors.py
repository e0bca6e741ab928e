"""Exception hierarchy shared by the toolkit and mapped to CLI exit codes."""
from typing import Optional, Sequence


class TensorizingFlowError(Exception):
    """Base class for every error raised by the toolkit."""


class ConfigError(TensorizingFlowError):
    """Experiment or environment configuration is invalid."""


class DomainError(TensorizingFlowError, ValueError):
    """A point lies outside the domain a function is defined on."""


class BoundsError(TensorizingFlowError, IndexError):
    """A multi-index component is out of range for its mode."""


class SerializationError(TensorizingFlowError):
    """A binary artifact has the wrong magic string or is truncated."""


class DegeneracyError(TensorizingFlowError):
    """Maxvol was handed a (numerically) rank-deficient matrix."""

    def __init__(self, message: str, sweep: Optional[int] = None):
        if sweep is not None:
            message = f"{message} (sweep {sweep})"
        super().__init__(message)
        self.sweep = sweep


class OracleDataError(TensorizingFlowError):
    """The black-box oracle returned a non-finite value."""

    def __init__(self, index: Sequence[int], value: float):
        super().__init__(f"Oracle returned {value} at grid index {tuple(int(i) for i in index)}")
        self.index = tuple(int(i) for i in index)
        self.value = value


class DegenerateDensityError(TensorizingFlowError):
    """The coefficient tensor has zero norm, so no density can be formed."""


class DegenerateConditionalError(TensorizingFlowError):
    """A univariate conditional has (numerically) zero mass."""

    def __init__(self, message: str, sample_index: Optional[int] = None):
        if sample_index is not None:
            message = f"{message} (sample {sample_index})"
        super().__init__(message)
        self.sample_index = sample_index


class NumericError(TensorizingFlowError):
    """Non-finite activations, energies or losses."""

    def __init__(self, message: str, layer: Optional[int] = None,
                 sample_index: Optional[int] = None, step: Optional[int] = None):
        parts = [message]
        if layer is not None:
            parts.append(f"layer {layer}")
        if sample_index is not None:
            parts.append(f"sample {sample_index}")
        if step is not None:
            parts.append(f"step {step}")
        super().__init__(" | ".join(parts))
        self.layer = layer
        self.sample_index = sample_index
        self.step = step


class SingularityError(TensorizingFlowError):
    """A residual layer Jacobian I + DG is singular."""


class OrderingViolation(TensorizingFlowError):
    """Error ratio inputs are not ordered as logZ_TF, logZ_NF <= logZ_true."""

    def __init__(self, numerator: float, denominator: float):
        super().__init__(
            f"Error ratio undefined: numerator {numerator:+.6g}, denominator {denominator:+.6g} "
            "(both must be positive)"
        )
        self.numerator = numerator
        self.denominator = denominator
