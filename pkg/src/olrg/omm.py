"""Operator Matrix Map: a noise-conditioned network that outputs an isometry V,
applied to every member of a relevant set as X -> V†XV."""

from dataclasses import dataclass, replace

import numpy as np
import torch

from . import _array as xp
from .errors import ConfigError
from .model import RelevantSet, to_torch
from .nets import MLP, load_checkpoint, save_checkpoint
from .qops import thin_qr_isometry


def conjugate(s: RelevantSet, V) -> RelevantSet:
    """V†XV on every member; the result is virtual."""
    if s.time_dependent:
        raise ConfigError("matrix maps need a static Hamiltonian")
    Vd = xp.dagger(V)

    def c(a):
        return Vd @ a @ V

    return replace(s, rho=c(s.rho), H=c(s.H), boundary=tuple(c(b) for b in s.boundary), obs=c(s.obs), virtual=True)


@dataclass(frozen=True)
class OMM:
    """Network layout. Parameters live in a separate flat tensor ``theta``."""

    d_big: int
    d_small: int
    noise_dim: int = 8
    depth: int = 8
    width: int = 0  # 0 means "same as the input width"
    ensemble_size: int = 10

    def __post_init__(self):
        if not 1 <= self.d_small <= self.d_big:
            raise ConfigError(f"need 1 <= d_small <= d_big, got {self.d_small}, {self.d_big}")
        if self.depth < 0 or self.noise_dim < 0 or self.ensemble_size < 1:
            raise ConfigError("depth and noise_dim must be >= 0, ensemble_size >= 1")

    @property
    def in_dim(self) -> int:
        return 2 * self.d_big**2 + self.noise_dim

    @property
    def net(self) -> MLP:
        w = self.width or self.in_dim
        return MLP((self.in_dim,) + (w,) * self.depth + (2 * self.d_big * self.d_small,), "relu")

    @property
    def n_params(self) -> int:
        return self.net.n_params

    def init_params(self, seed) -> torch.Tensor:
        return torch.as_tensor(self.net.init(np.random.default_rng(seed)))

    def draw_noise(self, seed, copies=None) -> torch.Tensor:
        z = self.ensemble_size if copies is None else copies
        return torch.as_tensor(np.random.default_rng(seed).standard_normal((z, self.noise_dim)))

    def isometry(self, theta, X, noise):
        X = torch.as_tensor(np.asarray(X)) if not xp.is_torch(X) else X
        if tuple(X.shape[-2:]) != (self.d_big, self.d_big):
            raise ConfigError(f"operator of shape {tuple(X.shape[-2:])} does not match d_big={self.d_big}")
        noise = torch.as_tensor(noise, dtype=torch.float64)
        if noise.shape[-1] != self.noise_dim:
            raise ConfigError(f"noise has length {noise.shape[-1]}, expected {self.noise_dim}")
        feat = torch.cat([X.real.flatten(-2), X.imag.flatten(-2)], dim=-1)
        lead = torch.broadcast_shapes(feat.shape[:-1], noise.shape[:-1])
        x = torch.cat([feat.expand(*lead, -1), noise.expand(*lead, -1)], dim=-1)
        out = self.net(theta, x).reshape(*lead, 2, self.d_big, self.d_small)
        return thin_qr_isometry(torch.complex(out[..., 0, :, :], out[..., 1, :, :]))

    def apply(self, theta, s: RelevantSet, noise) -> RelevantSet:
        s = to_torch(s)
        return conjugate(s, self.isometry(theta, s.H, noise))

    def config(self) -> dict:
        return {
            "d_big": self.d_big, "d_small": self.d_small, "noise_dim": self.noise_dim,
            "depth": self.depth, "width": self.width, "ensemble_size": self.ensemble_size,
        }

    def save(self, path, theta):
        tensors = {}
        for j, (w, b) in enumerate(self.net.unflatten(theta.detach().numpy())):
            tensors[f"layer{j}.weight"] = w
            tensors[f"layer{j}.bias"] = b
        save_checkpoint(path, "omm", self.config(), tensors)

    @classmethod
    def load(cls, path):
        kind, config, tensors = load_checkpoint(path)
        if kind != "omm":
            raise ConfigError(f"{path} holds a {kind!r} checkpoint, not 'omm'")
        layout = cls(**config)
        theta = np.concatenate([t.ravel() for t in tensors.values()])
        if theta.size != layout.n_params:
            raise ConfigError("checkpoint tensors do not match the declared layout")
        return layout, torch.as_tensor(theta)


@dataclass(frozen=True)
class IdentityMap:
    """Exact embedding V = I at whatever dimension the set has. No parameters."""

    noise_dim: int = 0
    ensemble_size: int = 1
    n_params: int = 0

    def init_params(self, seed=None):
        return torch.zeros(0, dtype=torch.float64)

    def draw_noise(self, seed, copies=None):
        return torch.zeros((self.ensemble_size if copies is None else copies, 0), dtype=torch.float64)

    def isometry(self, theta, X, noise):
        return torch.eye(X.shape[-1], dtype=torch.complex128)

    def apply(self, theta, s, noise):
        return replace(to_torch(s), virtual=True)

    def config(self):
        return {}


@dataclass
class OMMParams:
    layout: OMM
    theta: torch.Tensor


def omm_forward(params: OMMParams, X, noise):
    return params.layout.isometry(params.theta, X, noise)


def omm_apply(params: OMMParams, s: RelevantSet, noise) -> RelevantSet:
    return params.layout.apply(params.theta, s, noise)


def ensemble_apply(params: OMMParams, s: RelevantSet, rng: np.random.Generator) -> list:
    """One virtual set per ensemble copy, each with its own noise draw."""
    layout = params.layout
    noise = torch.as_tensor(rng.standard_normal((layout.ensemble_size, layout.noise_dim)))
    return [omm_apply(params, s, noise[c]) for c in range(layout.ensemble_size)]
