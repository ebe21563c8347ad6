"""Weak physics-informed networks with Kruzkhov entropy residuals for 1D conservation laws."""

from .autodiff_net import (Jet, NetworkParams, OptimizerState, backprop, evaluate, forward, forward_jet,
                           init_params, load_params, optimizer_step, save_params)
from .errors import (ConfigurationError, ContractViolation, EnsembleFailed, OracleFailure, SequenceExhausted,
                     TrainingDiverged, WPINNError)
from .oracles import PRESET_IDS, Reference, exact_solution, fv_solve, get_preset, relative_errors, sine_solution
from .training import TrainingConfig, average_predict, run_ensemble, train_one

__version__ = "0.1.0"
