"""Hamiltonian Expression Map: swap the problem Hamiltonian for a two-level
Rydberg device driven by neural pulse functions.

    H_ryd(τ) = Σ_i V_i n_i n_{i+1} + Ω(τ) Σ_i X_i - Δ(τ) Σ_i n_i,    n = |1⟩⟨1|

A learnable positive ``t_scale`` s maps problem time to device time: evolving
the device for sτ is the same as evolving for t under H(t) = s·H_ryd(s t).
"""

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError
from .model import GrownHamiltonian, ModelSpec, RelevantSet, TimeDependentHamiltonian, growth_terms, to_torch
from .nets import MLP, load_checkpoint, save_checkpoint
from .qops import embed, kron2, pauli

_N = (pauli("I") - pauli("Z")) / 2


def _device_terms(n: int):
    """(bond projectors n_i n_{i+1}, Σ X_i, Σ n_i) as complex tensors."""
    bonds = [embed(_N, i, n) @ embed(_N, i + 1, n) for i in range(n - 1)]
    xsum = sum(embed(pauli("X"), i, n) for i in range(n))
    nsum = sum(embed(_N, i, n) for i in range(n))
    t = lambda a: torch.as_tensor(np.asarray(a), dtype=torch.complex128)  # noqa: E731
    return t(np.stack(bonds)) if bonds else torch.zeros((0, 2**n, 2**n), dtype=torch.complex128), t(xsum), t(nsum)


@dataclass(frozen=True)
class Pulses:
    """Layout of the three pulse networks (scalar in, scalar out) and t_scale.

    ``v_net`` reads the bond index and returns that bond's coupling.
    """

    depth: int = 2
    width: int = 16

    @property
    def net(self) -> MLP:
        return MLP((1,) + (self.width,) * self.depth + (1,), "tanh")

    @property
    def n_params(self) -> int:
        return 3 * self.net.n_params + 1

    def init_params(self, seed) -> torch.Tensor:
        rng = np.random.default_rng(seed)
        parts = [self.net.init(rng) for _ in range(3)] + [np.zeros(1)]  # log t_scale = 0
        return torch.as_tensor(np.concatenate(parts))

    def split(self, theta):
        k = self.net.n_params
        return theta[:k], theta[k : 2 * k], theta[2 * k : 3 * k], theta[3 * k]

    def t_scale(self, theta):
        return torch.exp(self.split(theta)[3])

    def omega(self, theta, tau):
        return self.net(self.split(theta)[0], tau[:, None])[:, 0]

    def delta(self, theta, tau):
        return self.net(self.split(theta)[1], tau[:, None])[:, 0]

    def couplings(self, theta, n_bonds: int):
        idx = torch.arange(n_bonds, dtype=torch.float64)[:, None]
        return self.net(self.split(theta)[2], idx)[:, 0]

    def config(self) -> dict:
        return {"depth": self.depth, "width": self.width}

    def save(self, path, theta):
        omega, delta, v, log_s = (p.detach().numpy() for p in self.split(theta))
        tensors = {}
        for name, flat in (("omega", omega), ("delta", delta), ("v", v)):
            for j, (w, b) in enumerate(self.net.unflatten(flat)):
                tensors[f"{name}.layer{j}.weight"] = w
                tensors[f"{name}.layer{j}.bias"] = b
        tensors["log_t_scale"] = np.atleast_1d(log_s)
        save_checkpoint(path, "hem", self.config(), tensors)

    @classmethod
    def load(cls, path):
        kind, config, tensors = load_checkpoint(path)
        if kind != "hem":
            raise ConfigError(f"{path} holds a {kind!r} checkpoint, not 'hem'")
        layout = cls(**config)
        theta = np.concatenate([t.ravel() for t in tensors.values()])
        if theta.size != layout.n_params:
            raise ConfigError("checkpoint tensors do not match the declared layout")
        return layout, torch.as_tensor(theta)


@dataclass(frozen=True)
class ConstantPulses:
    """Fixed Ω, Δ, uniform V and t_scale; no trainable parameters."""

    omega_value: float
    delta_value: float
    v_value: float
    scale: float = 1.0
    n_params: int = 0

    def init_params(self, seed=None):
        return torch.zeros(0, dtype=torch.float64)

    def t_scale(self, theta):
        return torch.tensor(self.scale, dtype=torch.float64)

    def omega(self, theta, tau):
        return torch.full_like(tau, self.omega_value)

    def delta(self, theta, tau):
        return torch.full_like(tau, self.delta_value)

    def couplings(self, theta, n_bonds):
        return torch.full((n_bonds,), self.v_value, dtype=torch.float64)

    def config(self):
        return {}


class DeviceHamiltonian(TimeDependentHamiltonian):
    """Nearest-neighbour Rydberg chain of ``n_sites`` driven by ``pulses``."""

    uses_torch = True

    def __init__(self, n_sites: int, pulses, theta):
        if n_sites < 1:
            raise ConfigError("device needs at least one site")
        self.n_sites = n_sites
        self.dim = 2**n_sites
        self.pulses = pulses
        self.theta = theta
        self._bonds, self._x, self._n = _device_terms(n_sites)

    def at(self, times):
        t = torch.as_tensor(np.asarray(times, dtype=float))
        s = self.pulses.t_scale(self.theta)
        tau = s * t
        omega = self.pulses.omega(self.theta, tau).to(torch.complex128)[:, None, None]
        delta = self.pulses.delta(self.theta, tau).to(torch.complex128)[:, None, None]
        v = self.pulses.couplings(self.theta, self.n_sites - 1).to(torch.complex128)
        static = torch.einsum("b,bij->ij", v, self._bonds)
        return s.to(torch.complex128) * (static + omega * self._x - delta * self._n)


def rydberg_hamiltonian(dev: DeviceHamiltonian, t: float):
    return dev(t)


def hem_apply(s: RelevantSet, dev: DeviceHamiltonian) -> RelevantSet:
    """Replace H by the device Hamiltonian; the other members are left alone."""
    if dev.n_sites != s.n_sites:
        raise ConfigError(f"device has {dev.n_sites} sites, set has {s.n_sites}")
    return replace(to_torch(s), H=dev, virtual=True)


def grow_device(dev_H: TimeDependentHamiltonian, spec: ModelSpec, l: int = 1) -> GrownHamiltonian:
    """G_l(H_dev): device⊗I plus the problem model's boundary coupling and new-site terms."""
    if l < 1:
        raise ConfigError(f"grow step must be >= 1, got {l}")
    eye = torch.eye(dev_H.dim // 2, dtype=torch.complex128)
    boundary = [kron2(eye, torch.as_tensor(pauli(b))) for b, _ in spec.connecting_pairs]
    return GrownHamiltonian(dev_H, growth_terms(spec, boundary, dev_H.dim, l), l)


def pulse_duration_estimate(k: int, M: int, T: float, boundary_norm: float = 1.0, C_theta: float = 1.0) -> float:
    """Average analog evolution time per order-k correlator on hardware."""
    if M < 1 or k < 1:
        raise ConfigError("need M >= 1 and k >= 1")
    return C_theta * boundary_norm * (2 + (k - 1) * (1 + M) / M) * T


def pulse_duration_bruteforce(k: int, M: int, T: float) -> float:
    """Exhaustive average of 2T + 2(t_1 + ... + t_{k-1}) over all checkpoint tuples."""
    grid = np.arange(1, M + 1) * T / M
    sums = np.zeros(())
    for _ in range(k - 1):
        sums = np.add.outer(sums, grid)  # every tuple's t_1 + ... + t_j
    return float(np.mean(2 * T + 2 * sums))


def shot_count(batch: int, steps: int, shots_per_expectation: int, device_params: int, k: int) -> int:
    """Shots for one finite-difference gradient: b·L·E·P·2^(k+1)."""
    return batch * steps * shots_per_expectation * device_params * 2 ** (k + 1)


def export_pulse_schedule(pulses, theta, n_sites: int, T: float, samples: int, directory):
    """Write ``pulse_schedule.csv`` (device time t, omega, delta) and
    ``couplings.csv`` (i, j, V) into ``directory``; returns both paths.

    Device time runs over [0, t_scale·T].
    """
    with torch.no_grad():
        s = float(pulses.t_scale(theta))
        tau = torch.linspace(0.0, s * T, samples, dtype=torch.float64)
        omega = pulses.omega(theta, tau).numpy()
        delta = pulses.delta(theta, tau).numpy()
        v = pulses.couplings(theta, n_sites - 1).numpy()
    paths = (Path(directory) / "pulse_schedule.csv", Path(directory) / "couplings.csv")
    with open(paths[0], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "omega", "delta"])
        w.writerows((repr(float(a)), repr(float(b)), repr(float(c))) for a, b, c in zip(tau.numpy(), omega, delta))
    with open(paths[1], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "V"])
        w.writerows((i, i + 1, repr(float(x))) for i, x in enumerate(v))
    return paths
