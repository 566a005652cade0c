"""The open-boundary transverse-field Ising chain as a growable system.

A relevant set holds exactly what is needed to evaluate a real-time observable
at some size: the initial state, the Hamiltonian, the boundary operators that
couple to newly added sites, and the observable. ``grow_set`` appends sites on
the right.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import _array as xp
from .errors import ConfigError
from .qops import kron2, pauli


@dataclass(frozen=True)
class ModelSpec:
    """TFIM growth rule. Each connecting pair is (label on the last system
    site, label on the first environment site)."""

    h: float = 1.0
    locality_w: int = 2
    connecting_pairs: tuple = (("Z", "Z"),)

    def __post_init__(self):
        if not self.connecting_pairs:
            raise ConfigError("connecting_pairs must be non-empty")
        if self.locality_w < 2:
            raise ConfigError("locality_w must be at least 2")


class TimeDependentHamiltonian:
    """Base class for H(t). Subclasses implement ``at`` for a 1-D array of times
    and return an array of shape ``(len(times), d, d)``."""

    dim: int
    uses_torch = False

    def at(self, times):
        raise NotImplementedError

    def __call__(self, t):
        return self.at(np.atleast_1d(np.asarray(t, dtype=float)))[0]


class GrownHamiltonian(TimeDependentHamiltonian):
    """G_l applied to a time-dependent Hamiltonian: H(t)⊗I plus a static part."""

    def __init__(self, inner: TimeDependentHamiltonian, static, l: int):
        self.inner = inner
        self.static = static
        self.l = l
        self.dim = inner.dim * 2**l
        self.uses_torch = inner.uses_torch

    def at(self, times):
        h = self.inner.at(times)
        return kron2(h, xp.eye(2**self.l, like=h)) + xp.as_like(self.static, [h])


@dataclass(frozen=True)
class RelevantSet:
    n_sites: int
    rho: object
    H: object  # array, or TimeDependentHamiltonian
    boundary: tuple
    obs: object
    virtual: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def dim(self) -> int:
        return int(self.rho.shape[-1])

    @property
    def time_dependent(self) -> bool:
        return isinstance(self.H, TimeDependentHamiltonian)

    def validate(self, tol=1e-10):
        """Raise ``ConfigError`` if the set breaks its invariants."""
        d = self.dim
        members = [self.rho, self.obs, *self.boundary]
        if not self.time_dependent:
            members.append(self.H)
        elif self.H.dim != d:
            raise ConfigError(f"time-dependent H has dim {self.H.dim}, expected {d}")
        for m in members:
            if tuple(m.shape[-2:]) != (d, d):
                raise ConfigError(f"member of shape {tuple(m.shape)} does not match dim {d}")
        if self.virtual:
            return self
        rho = xp.to_numpy(self.rho)
        if abs(np.trace(rho) - 1) > tol:
            raise ConfigError("real state must have unit trace")
        if np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() < -tol:
            raise ConfigError("real state must be positive semidefinite")
        for name, m in (("H", None if self.time_dependent else self.H), ("obs", self.obs)):
            if m is not None and np.abs(xp.to_numpy(m) - xp.to_numpy(m).conj().T).max() > tol:
                raise ConfigError(f"real {name} must be Hermitian")
        return self


def _bits(n):
    idx = np.arange(2**n)
    return (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1


def tfim_hamiltonian(n: int, h: float) -> np.ndarray:
    """Open chain Σ Z_i Z_{i+1} + h Σ X_i on ``n`` sites (site 0 is the leftmost tensor factor)."""
    if n < 1:
        raise ConfigError(f"need at least one site, got {n}")
    d = 2**n
    z = 1 - 2 * _bits(n)
    H = np.diag((z[:, :-1] * z[:, 1:]).sum(axis=1).astype(complex))
    idx = np.arange(d)
    for site in range(n):
        H[idx ^ (1 << (n - 1 - site)), idx] += h
    return H


def two_point_observable(n: int, a: int, b: int) -> np.ndarray:
    """Z_a Z_b on ``n`` sites, with 1-based sites as in the physics notation."""
    if not 1 <= a < b <= n:
        raise ConfigError(f"need 1 <= a < b <= n, got a={a}, b={b}, n={n}")
    z = 1 - 2 * _bits(n)
    return np.diag((z[:, a - 1] * z[:, b - 1]).astype(complex))


def zero_state(n: int) -> np.ndarray:
    rho = np.zeros((2**n, 2**n), dtype=complex)
    rho[0, 0] = 1
    return rho


def boundary_set(spec: ModelSpec, s: RelevantSet) -> list:
    """The saturated boundary list at the set's working dimension: one
    operator per connecting pair, acting on the last site."""
    if s.dim % 2:
        raise ConfigError(f"working dimension {s.dim} has no last qubit")
    eye = xp.eye(s.dim // 2, like=s.rho)
    return [kron2(eye, xp.as_like(pauli(b), [s.rho])) for b, _ in spec.connecting_pairs]


def connecting_operator(label: str, l: int) -> np.ndarray:
    """R_l: the partner label on the first of ``l`` new sites."""
    return kron2(pauli(label), np.eye(2 ** (l - 1), dtype=complex))


def initial_set(spec: ModelSpec, n: int, obs=None) -> RelevantSet:
    """Real S_n for the zero state; the observable defaults to Z_1 Z_2 (Z_1 when n=1)."""
    if obs is None:
        obs = two_point_observable(n, 1, 2) if n >= 2 else pauli("Z")
    eye = np.eye(2 ** (n - 1), dtype=complex)
    boundary = tuple(kron2(eye, pauli(b)) for b, _ in spec.connecting_pairs)
    return RelevantSet(n, zero_state(n), tfim_hamiltonian(n, spec.h), boundary, obs)


def growth_terms(spec: ModelSpec, boundary, dim: int, l: int, like=None):
    """Σ_i B_i⊗R_l(B_i) + I_dim⊗K, the part of G_l(H) that does not involve H."""
    refs = [like] if like is not None else list(boundary)
    env = xp.as_like(tfim_hamiltonian(l, spec.h), refs)
    total = kron2(xp.eye(dim, like=refs[0]), env)
    for b, (_, r) in zip(boundary, spec.connecting_pairs):
        total = total + kron2(b, xp.as_like(connecting_operator(r, l), refs))
    return total


def grow_set(spec: ModelSpec, s: RelevantSet, l: int = 1) -> RelevantSet:
    """G_l on every member; the boundary is rebuilt on the new last site."""
    if l < 1:
        raise ConfigError(f"grow step must be >= 1, got {l}")
    if len(s.boundary) != len(spec.connecting_pairs):
        raise ConfigError("boundary list does not match the model's connecting pairs")
    like = [s.rho]
    pad = xp.eye(2**l, like=s.rho)
    vac = xp.as_like(zero_state(l), like)
    static = growth_terms(spec, s.boundary, s.dim, l, like=s.rho)
    if s.time_dependent:
        H = GrownHamiltonian(s.H, static, l)
    else:
        H = kron2(s.H, pad) + static
    eye = xp.eye(s.dim * 2 ** (l - 1), like=s.rho)
    boundary = tuple(kron2(eye, xp.as_like(pauli(b), like)) for b, _ in spec.connecting_pairs)
    return replace(
        s,
        n_sites=s.n_sites + l,
        rho=kron2(s.rho, vac),
        H=H,
        boundary=boundary,
        obs=kron2(s.obs, pad),
    )


def to_torch(s: RelevantSet) -> RelevantSet:
    """Same set with array members as complex128 tensors."""
    import torch

    def conv(a):
        return a if xp.is_torch(a) else torch.as_tensor(np.asarray(a), dtype=torch.complex128)

    H = s.H if s.time_dependent else conv(s.H)
    return replace(s, rho=conv(s.rho), H=H, boundary=tuple(conv(b) for b in s.boundary), obs=conv(s.obs))
