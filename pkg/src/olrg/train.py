"""Gradients, Adam, the OLRG training loop, transfer across time points and
best-epoch selection.

One epoch: start from the real S_{n0}; at each size n = n0, n0+l, ..., N map the
current set, add the batch TOBC loss between the set and its image, then grow
the image by l sites. Index batches and ensemble noise are re-drawn every epoch
from seeds derived from (seed, epoch, step).
"""

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import torch

from .dynamics import Checkpoints, SolverConfig, propagators
from .errors import ConfigError, NumericError
from .hem import ConstantPulses, DeviceHamiltonian, Pulses, hem_apply
from .model import ModelSpec, initial_set, to_torch, grow_set
from .tobc import batch_loss, sample_mixed, tobc_values
from . import _array as xp

INDEX_STREAM, NOISE_STREAM = 0, 1
PREDICT_EPOCH = 2**31 - 1


@dataclass(frozen=True)
class TrainConfig:
    order_cutoff: int = 2
    tobc_batch: int = 32
    checkpoints: int = 20
    grow_l: int = 1
    start_n: int = 4
    target_N: int = 6
    epochs: int = 300
    learning_rate: float = 1e-3
    seed: int = 0
    window: int = 10
    mode: str = "omm"
    T: float = 2.0
    transfer_times: tuple = ()
    transfer_epochs: tuple = ()
    grad_method: str = "adjoint"
    fd_eps: float = 1e-5
    snapshot_every: int = 0
    solver: SolverConfig = SolverConfig(method="expm")

    def __post_init__(self):
        if self.grow_l < 1 or self.start_n < 1 or self.target_N < self.start_n:
            raise ConfigError("need grow_l >= 1 and 1 <= start_n <= target_N")
        if (self.target_N - self.start_n) % self.grow_l:
            raise ConfigError("target_N - start_n must be a multiple of grow_l")
        if self.epochs < 1 or self.window < 1:
            raise ConfigError("epochs and window must be >= 1")
        if self.mode not in ("omm", "hem"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.grad_method not in ("adjoint", "finite_diff"):
            raise ConfigError(f"unknown gradient method {self.grad_method!r}")
        if self.order_cutoff < 0 or self.tobc_batch < 1 or self.checkpoints < 1:
            raise ConfigError("need order >= 0, tobc_batch >= 1, checkpoints >= 1")
        if len(self.transfer_times) != len(self.transfer_epochs):
            raise ConfigError("transfer_times and transfer_epochs differ in length")
        if list(self.transfer_times) != sorted(self.transfer_times):
            raise ConfigError("transfer times must be ascending")

    @property
    def sizes(self):
        return list(range(self.start_n, self.target_N + 1, self.grow_l))


@dataclass
class EpochRecord:
    epoch: int
    total_loss: float
    per_step_losses: list
    wall_ms: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    best_epoch: int = None
    best_theta: torch.Tensor = None
    final_theta: torch.Tensor = None
    snapshots: dict = field(default_factory=dict)
    T: float = None

    @property
    def losses(self):
        return [r.total_loss for r in self.records]


def map_set(layout, theta, s, seed):
    """Apply the operator map described by ``layout``."""
    if isinstance(layout, (Pulses, ConstantPulses)):
        return hem_apply(s, DeviceHamiltonian(s.n_sites, layout, theta))
    return layout.apply(theta, s, layout.draw_noise(list(seed) + [NOISE_STREAM]))


def run_chain(config: TrainConfig, spec: ModelSpec, layout, theta, seed, with_loss=True):
    """Per-step losses (tensors) and the real set at the target size."""
    grid = Checkpoints(config.T, config.checkpoints)
    real = to_torch(initial_set(spec, config.start_n))
    losses, target = [], None
    for q, n in enumerate(config.sizes):
        step_seed = list(seed) + [q]
        if n == config.target_N:
            target = real
            if not with_loss:
                break
        virtual = map_set(layout, theta, real, step_seed)
        if with_loss:
            batches = sample_mixed(step_seed + [INDEX_STREAM], config.order_cutoff, config.tobc_batch, grid, len(real.boundary))
            value, _ = batch_loss(tobc_values(real, batches, grid, config.solver), tobc_values(virtual, batches, grid, config.solver))
            losses.append(value)
        if n < config.target_N:
            real = grow_set(spec, virtual, config.grow_l)
    return losses, target


def expectation(s, T: float, cfg: SolverConfig = SolverConfig(method="expm")) -> float:
    """tr(ρ O(T)), averaged over any leading ensemble axis."""
    U = propagators(s.H, [T], cfg)[..., 0, :, :]
    val = xp.trace(s.rho @ xp.dagger(U) @ s.obs @ U)
    return float(np.mean(xp.to_numpy(val).real))


def predict(config: TrainConfig, spec: ModelSpec, layout, theta) -> float:
    """⟨O(T)⟩ at the target size from the chain built with ``theta``."""
    with torch.no_grad():
        _, target = run_chain(config, spec, layout, theta, [config.seed, PREDICT_EPOCH], with_loss=False)
        return expectation(target, config.T, config.solver)


def grad(loss_closure, params, method="adjoint", fd_eps=1e-5):
    """Gradient of ``loss_closure`` at ``params`` (flat tensor).

    ``adjoint`` is reverse-mode automatic differentiation; ``finite_diff`` is
    central differences. The closure must be deterministic.
    """
    params = torch.as_tensor(params, dtype=torch.float64)
    if method == "adjoint":
        theta = params.detach().clone().requires_grad_(True)
        loss = loss_closure(theta)
        if not torch.isfinite(torch.as_tensor(loss)).all():
            raise NumericError(f"non-finite loss {float(loss)}")
        if not torch.is_tensor(loss) or not loss.requires_grad:
            return torch.zeros_like(params)
        (g,) = torch.autograd.grad(loss, theta, allow_unused=True)
        return torch.zeros_like(params) if g is None else g
    if method != "finite_diff":
        raise ConfigError(f"unknown gradient method {method!r}")
    g = torch.zeros_like(params)
    with torch.no_grad():
        for i in range(params.numel()):
            e = torch.zeros_like(params)
            e[i] = fd_eps
            hi, lo = float(loss_closure(params + e)), float(loss_closure(params - e))
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise NumericError(f"non-finite loss while perturbing parameter {i}")
            g[i] = (hi - lo) / (2 * fd_eps)
    return g


@dataclass
class AdamState:
    m: object
    v: object
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls(params * 0, params * 0, 0)


def adam_step(params, g, state: AdamState, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns the new params and state."""
    if tuple(params.shape) != tuple(g.shape):
        raise ConfigError("params and gradient shapes differ")
    t = state.t + 1
    m = beta1 * state.m + (1 - beta1) * g
    v = beta2 * state.v + (1 - beta2) * g * g
    m_hat = m / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    return params - lr * m_hat / (v_hat**0.5 + eps), AdamState(m, v, t)


def select_best_epoch(losses, window=10) -> int:
    """Epoch whose trailing moving average of the loss is smallest (earliest on ties)."""
    if isinstance(losses, TrainHistory):
        losses = losses.losses
    losses = np.asarray(losses, dtype=float)
    if window < 1 or len(losses) < window:
        raise ConfigError(f"need at least {window} epochs, got {len(losses)}")
    ma = np.convolve(losses, np.ones(window) / window, mode="valid")
    return int(np.argmin(ma)) + window - 1


def train(config: TrainConfig, model: ModelSpec, layout, theta=None, record_time=True) -> TrainHistory:
    """Run the OLRG loop for ``config.epochs`` epochs.

    The best-epoch parameters are tracked online with the trailing moving
    average (window capped at the number of epochs). On a non-finite loss a
    ``NumericError`` is raised carrying the history so far as ``.history``.
    """
    theta = (layout.init_params(config.seed) if theta is None else torch.as_tensor(theta)).detach().clone()
    state = AdamState.zeros_like(theta)
    window = min(config.window, config.epochs)
    recent = deque(maxlen=window)
    history = TrainHistory(T=config.T)
    best_ma = np.inf
    for epoch in range(config.epochs):
        start = time.perf_counter()
        seed = [config.seed, epoch]
        per_step = []

        def closure(th):
            losses, _ = run_chain(config, model, layout, th, seed)
            per_step[:] = [float(x.detach()) if torch.is_tensor(x) else float(x) for x in losses]
            return sum(losses)

        try:
            g = grad(closure, theta, config.grad_method, config.fd_eps)
            if config.grad_method == "finite_diff":
                with torch.no_grad():
                    closure(theta)
        except NumericError as exc:
            exc.history = history
            raise
        total = float(sum(per_step))
        if not np.isfinite(total) or not torch.isfinite(g).all():
            err = NumericError(f"non-finite loss or gradient at epoch {epoch}")
            err.history = history
            raise err
        wall = (time.perf_counter() - start) * 1e3 if record_time else None
        history.records.append(EpochRecord(epoch, total, per_step, wall))
        recent.append(total)
        if len(recent) == window:
            ma = sum(recent) / window
            if ma < best_ma:
                best_ma, history.best_epoch, history.best_theta = ma, epoch, theta.clone()
        if config.snapshot_every and epoch % config.snapshot_every == 0:
            history.snapshots[epoch] = theta.clone()
        theta, state = adam_step(theta, g, state, config.learning_rate)
    history.final_theta = theta
    return history


def transfer_schedule(config: TrainConfig, model: ModelSpec, layout, times, epochs_per_point, theta=None, record_time=True):
    """Train at each time in turn, warm-starting from the previous best-epoch parameters."""
    if list(times) != sorted(times):
        raise ConfigError("transfer times must be ascending")
    if len(times) != len(epochs_per_point):
        raise ConfigError("need one epoch count per time point")
    from dataclasses import replace

    histories = []
    current = layout.init_params(config.seed) if theta is None else torch.as_tensor(theta)
    for T, epochs in zip(times, epochs_per_point):
        if epochs == 0:
            h = TrainHistory(best_theta=current.clone(), final_theta=current.clone(), T=T)
        else:
            h = train(replace(config, T=T, epochs=epochs), model, layout, current, record_time)
        histories.append(h)
        current = h.best_theta
    return histories
