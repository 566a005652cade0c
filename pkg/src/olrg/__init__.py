"""Operator learning renormalization group: grow a small spin chain toward a
target size while learning operator maps that keep real-time observables
consistent."""

from .dynamics import Checkpoints, SolverConfig, evolve_time_dependent, expm, heisenberg_evolve
from .errors import ConfigError, NumericError, ResourceError
from .hem import ConstantPulses, DeviceHamiltonian, Pulses, hem_apply
from .model import ModelSpec, RelevantSet, boundary_set, grow_set, initial_set, tfim_hamiltonian, two_point_observable
from .omm import OMM, IdentityMap, omm_apply
from .qops import adjoint_apply, kron, pauli, thin_qr_isometry
from .tobc import TOBCIndex, eval_tobc, loss_step, sample_indices, total_loss
from .train import TrainConfig, adam_step, grad, predict, select_best_epoch, train, transfer_schedule
from .verify import check_dyson_truncation, check_rt_bound, check_telescoping, exact_expectation

__version__ = "0.1.0"
