"""Time-ordered boundary correlators and the per-step OLRG loss.

    χ = tr(ρ ad_{B_{i1}(t1),σ1} ... ad_{B_{ik}(tk),σk}[O(T)])

The innermost adjoint is the last listed one. Times are drawn from the
checkpoint grid without sorting.
"""

from dataclasses import dataclass
from itertools import product

import numpy as np

from . import _array as xp
from .dynamics import Checkpoints, SolverConfig, propagators
from .errors import ConfigError
from .model import RelevantSet
from .qops import adjoint_apply


@dataclass(frozen=True)
class TOBCIndex:
    boundary_ids: tuple = ()
    times: tuple = ()
    signs: tuple = ()

    def __post_init__(self):
        if not len(self.boundary_ids) == len(self.times) == len(self.signs):
            raise ConfigError("boundary_ids, times and signs must have equal length")

    @property
    def order(self) -> int:
        return len(self.signs)


@dataclass(frozen=True)
class IndexBatch:
    """``b`` indices of one order as integer arrays of shape (b, k).
    ``steps`` are 1-based checkpoint numbers."""

    ids: np.ndarray
    steps: np.ndarray
    signs: np.ndarray

    @property
    def order(self) -> int:
        return self.ids.shape[1]

    def __len__(self):
        return self.ids.shape[0]

    def to_indices(self, grid: Checkpoints) -> list:
        return [
            TOBCIndex(tuple(map(int, i)), tuple(grid.time(int(m)) for m in s), tuple(map(int, g)))
            for i, s, g in zip(self.ids, self.steps, self.signs)
        ]

    @classmethod
    def from_indices(cls, indices, grid: Checkpoints):
        orders = {ix.order for ix in indices}
        if len(orders) != 1:
            raise ConfigError("an IndexBatch holds a single order")
        steps = [[int(round(t * grid.M / grid.T)) if grid.T else grid.M for t in ix.times] for ix in indices]
        k = orders.pop()
        shape = (len(indices), k)
        return cls(
            np.array([ix.boundary_ids for ix in indices], dtype=int).reshape(shape),
            np.array(steps, dtype=int).reshape(shape),
            np.array([ix.signs for ix in indices], dtype=int).reshape(shape),
        )


@dataclass(frozen=True)
class LossReport:
    per_step: tuple
    total: float
    sample_count: int


def sample_batch(rng_seed, order: int, batch: int, grid: Checkpoints, n_boundary: int) -> IndexBatch:
    if batch < 1 or order < 0:
        raise ConfigError(f"need batch >= 1 and order >= 0, got batch={batch}, order={order}")
    rng = np.random.default_rng(rng_seed)
    shape = (batch, order)
    ids = rng.integers(0, n_boundary, shape)
    steps = rng.integers(1, grid.M + 1, shape)
    signs = 1 - 2 * rng.integers(0, 2, shape)
    return IndexBatch(ids, steps, signs)


def sample_indices(rng_seed, order: int, batch: int, grid: Checkpoints, n_boundary: int) -> list:
    """Uniform boundary ids (0-based), grid times and signs; deterministic in ``rng_seed``."""
    return sample_batch(rng_seed, order, batch, grid, n_boundary).to_indices(grid)


def order_shares(order_cutoff: int, batch: int) -> list:
    """Equal split of ``batch`` over orders 0..order_cutoff; lower orders take the remainder."""
    q, r = divmod(batch, order_cutoff + 1)
    return [q + (k < r) for k in range(order_cutoff + 1)]


def sample_mixed(rng_seed, order_cutoff: int, batch: int, grid: Checkpoints, n_boundary: int) -> list:
    """One IndexBatch per order 0..order_cutoff (empty shares dropped)."""
    seed = list(np.atleast_1d(rng_seed))
    return [
        sample_batch(seed + [k], k, share, grid, n_boundary)
        for k, share in enumerate(order_shares(order_cutoff, batch))
        if share
    ]


def checkpoint_operators(s: RelevantSet, grid: Checkpoints, cfg: SolverConfig = SolverConfig()):
    """Heisenberg boundary operators on the grid, shape (..., n_boundary, M, d, d), and O(T)."""
    U = propagators(s.H, grid.times, cfg)
    Ud = xp.dagger(U)
    bt = xp.stack([Ud @ b[..., None, :, :] @ U for b in s.boundary], axis=-4)
    ot = Ud[..., -1, :, :] @ s.obs @ U[..., -1, :, :]
    return bt, ot


def evaluate_batch(rho, bt, ot, batch: IndexBatch):
    """χ for each index of ``batch``; result shape (..., b)."""
    if batch.order == 0:
        chi = xp.einsum("...ij,...ji->...", rho, ot)
        return chi[..., None] * xp.as_like(np.ones(len(batch), dtype=complex), [chi])
    x = ot[..., None, :, :]
    for j in reversed(range(batch.order)):
        b = bt[..., batch.ids[:, j], batch.steps[:, j] - 1, :, :]
        sigma = xp.as_like(batch.signs[:, j].astype(complex), [x])[:, None, None]
        x = b @ x + sigma * (x @ b)
    return xp.einsum("...ij,...bji->...b", rho, x)


def tobc_values(s: RelevantSet, batches, grid: Checkpoints, cfg: SolverConfig = SolverConfig()):
    """χ for each batch in ``batches``; returns a list of arrays of shape (..., b)."""
    bt, ot = checkpoint_operators(s, grid, cfg)
    return [evaluate_batch(s.rho, bt, ot, b) for b in batches]


def eval_tobc(s: RelevantSet, idx: TOBCIndex, T: float, cfg: SolverConfig = SolverConfig()) -> complex:
    """Reference single-index evaluation with operators evolved at the exact index times."""
    if any(not 0 <= i < len(s.boundary) for i in idx.boundary_ids):
        raise ConfigError(f"boundary ids {idx.boundary_ids} out of range for {len(s.boundary)} operators")
    for m in (s.obs, *s.boundary):
        if m.shape[-1] != s.dim:
            raise ConfigError("set members have mismatched dimensions")
    times = sorted(set(idx.times) | {T})
    U = propagators(s.H, times, cfg) if times != [0.0] else None

    def at(a, t):
        if U is None or t == 0:
            return a
        u = U[..., times.index(t), :, :]
        return xp.dagger(u) @ a @ u

    x = at(s.obs, T)
    for i, t, sigma in reversed(list(zip(idx.boundary_ids, idx.times, idx.signs))):
        x = adjoint_apply(at(s.boundary[i], t), sigma, x)
    return complex(xp.to_numpy(xp.trace(s.rho @ x)))


def batch_loss(real_values, virtual_values):
    """Mean |χ - χ'| over every sample (and ensemble copy); also returns the sample count."""
    total, count = 0.0, 0
    for r, v in zip(real_values, virtual_values):
        diff = abs(xp.as_like(r, [v]) - xp.as_like(v, [r]))
        total = total + diff.sum()
        count += diff.numel() if xp.is_torch(diff) else diff.size
    return total / max(count, 1), count


def loss_step(real_set, virtual_set, indices, T: float, cfg: SolverConfig = SolverConfig(), M=None) -> float:
    """(1/b) Σ |χ(real) - χ(virtual)| over ``indices``.

    ``indices`` is a list of TOBCIndex or of IndexBatch; for the former, ``M``
    defaults to the finest grid consistent with the listed times.
    """
    if len(real_set.boundary) != len(virtual_set.boundary):
        raise ConfigError("real and virtual sets expose different boundary counts")
    if not indices:
        return 0.0
    if isinstance(indices[0], IndexBatch):
        grid = Checkpoints(T, M)
        batches = indices
    else:
        grid = Checkpoints(T, M or _infer_grid(indices, T))
        by_order = {}
        for ix in indices:
            by_order.setdefault(ix.order, []).append(ix)
        batches = [IndexBatch.from_indices(v, grid) for _, v in sorted(by_order.items())]
    r = tobc_values(real_set, batches, grid, cfg)
    v = tobc_values(virtual_set, batches, grid, cfg)
    loss, _ = batch_loss(r, v)
    return loss


def _infer_grid(indices, T):
    if T == 0:
        return 1
    for M in range(1, 10001):
        if all(abs(t * M / T - round(t * M / T)) < 1e-9 for ix in indices for t in ix.times):
            return M
    raise ConfigError("index times do not lie on a uniform grid")


@dataclass(frozen=True)
class SamplerSettings:
    order: int
    batch: int
    M: int
    seed: int = 0


def total_loss(chain, sampler: SamplerSettings, T: float, cfg: SolverConfig = SolverConfig()) -> LossReport:
    """Sum of per-step losses along a chain of (real, virtual) pairs with independent samples per step."""
    grid = Checkpoints(T, sampler.M)
    per_step, count = [], 0
    for q, (real, virtual) in enumerate(chain):
        batches = sample_mixed([sampler.seed, q], sampler.order, sampler.batch, grid, len(real.boundary))
        value, n = batch_loss(tobc_values(real, batches, grid, cfg), tobc_values(virtual, batches, grid, cfg))
        per_step.append(float(value))
        count += n
    return LossReport(tuple(per_step), float(sum(per_step)), count)


def full_grid(order: int, grid: Checkpoints, n_boundary: int) -> IndexBatch:
    """Every index of the given order, in lexicographic (ids, steps, signs) order per slot."""
    slots = list(product(range(n_boundary), range(1, grid.M + 1), (1, -1)))
    combos = list(product(slots, repeat=order))
    shape = (len(combos), order)
    ids = np.array([[c[0] for c in combo] for combo in combos], dtype=int).reshape(shape)
    steps = np.array([[c[1] for c in combo] for combo in combos], dtype=int).reshape(shape)
    signs = np.array([[c[2] for c in combo] for combo in combos], dtype=int).reshape(shape)
    return IndexBatch(ids, steps, signs)
