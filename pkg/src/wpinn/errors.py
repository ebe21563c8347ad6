"""Exception types raised across the package."""


class WPINNError(Exception):
    pass


class ConfigurationError(WPINNError, ValueError):
    """Invalid widths, presets, hyperparameters or config-file keys."""


class ContractViolation(WPINNError, ValueError):
    """A point or argument lies outside the domain an operation accepts."""


class TrainingDiverged(WPINNError, FloatingPointError):
    def __init__(self, epoch, message="non-finite value encountered"):
        super().__init__(f"training diverged at epoch {epoch}: {message}")
        self.epoch = epoch


class SequenceExhausted(WPINNError, IndexError):
    pass


class OracleFailure(WPINNError, RuntimeError):
    pass


class EnsembleFailed(WPINNError, RuntimeError):
    pass
