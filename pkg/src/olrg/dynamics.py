"""Time evolution: dense exponentials, checkpointed Heisenberg evolution,
time-dependent propagators and a first-order product formula.

Sign convention: A(t) = e^{iHt} A e^{-iHt}.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from . import _array as xp
from .errors import ConfigError, NumericError
from .model import TimeDependentHamiltonian
from .qops import kron2

EXPM_MAX_DIM = 2**6


@dataclass(frozen=True)
class Checkpoints:
    """Uniform grid t_m = m T / M, m = 1..M (t=0 is not a checkpoint)."""

    T: float
    M: int

    def __post_init__(self):
        if self.M < 1:
            raise ConfigError(f"need at least one checkpoint, got M={self.M}")
        if not np.isfinite(self.T) or self.T < 0:
            raise ConfigError(f"total time must be finite and non-negative, got {self.T}")

    @property
    def times(self) -> np.ndarray:
        return np.arange(1, self.M + 1) * (self.T / self.M)

    def time(self, step: int) -> float:
        return step * self.T / self.M


@dataclass(frozen=True)
class SolverConfig:
    """``method`` is "auto" (expm up to dim 64, Runge-Kutta above), "expm" or "rk".
    ``substeps`` sets the exponential-midpoint slices per checkpoint interval
    used for time-dependent Hamiltonians on the exponential path."""

    method: str = "auto"
    rel_tol: float = 1e-9
    abs_tol: float = 1e-9
    max_step: float = np.inf
    substeps: int = 8

    def __post_init__(self):
        if self.method not in ("auto", "expm", "rk"):
            raise ConfigError(f"unknown solver method {self.method!r}")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ConfigError("solver tolerances must be positive")
        if self.substeps < 1:
            raise ConfigError("substeps must be >= 1")

    def use_expm(self, dim: int) -> bool:
        return self.method == "expm" or (self.method == "auto" and dim <= EXPM_MAX_DIM)


def _check_finite(x, what):
    if not xp.isfinite_all(x):
        raise NumericError(f"non-finite entries in {what}")
    return x


def expm(H, t: float):
    """U = exp(-iHt)."""
    _check_finite(H, "Hamiltonian")
    return _check_finite(xp.expm(-1j * t * H), "propagator")


def _times(pts):
    return pts.times if isinstance(pts, Checkpoints) else np.asarray(pts, dtype=float)


def _static_propagators(H, times):
    t = xp.as_like(np.asarray(times, dtype=complex), [H])
    return xp.expm(-1j * t[:, None, None] * H[..., None, :, :])


def _midpoint_propagators(H: TimeDependentHamiltonian, times, substeps: int):
    """Exponential-midpoint product U(t_m) for each t in ``times`` (ascending, from 0)."""
    edges = np.concatenate([[0.0], times])
    mids, widths = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        dt = (b - a) / substeps
        mids.extend(a + (np.arange(substeps) + 0.5) * dt)
        widths.extend([dt] * substeps)
    hs = H.at(np.asarray(mids))
    w = xp.as_like(np.asarray(widths, dtype=complex), [hs])
    slices = xp.expm(-1j * w.reshape((-1,) + (1,) * (hs.ndim - 1)) * hs)
    out, u = [], None
    for j in range(len(mids)):
        u = slices[j] if u is None else slices[j] @ u
        if (j + 1) % substeps == 0:
            out.append(u)
    return xp.stack(out, axis=-3)


def _rk_propagators(H, times, cfg):
    times = np.asarray(times, dtype=float)
    if isinstance(H, TimeDependentHamiltonian):
        d = H.dim
        h_of_t = lambda t: xp.to_numpy(H(t))  # noqa: E731
    else:
        H = xp.to_numpy(H)
        d = H.shape[-1]
        h_of_t = lambda t: H  # noqa: E731

    def rhs(t, y):
        return (-1j * (h_of_t(t) @ y.reshape(d, d))).ravel()

    sol = solve_ivp(
        rhs,
        (0.0, float(times[-1]) if len(times) else 0.0),
        np.eye(d, dtype=complex).ravel(),
        method="DOP853",
        t_eval=times,
        rtol=cfg.rel_tol,
        atol=cfg.abs_tol,
        max_step=cfg.max_step,
    )
    if not sol.success:
        raise NumericError(f"ODE solver failed: {sol.message}")
    return _check_finite(sol.y.T.reshape(len(times), d, d), "propagator")


def propagators(H, times, cfg: SolverConfig = SolverConfig()):
    """Stack of U(t) = T exp(-i ∫_0^t H) over ``times``, time axis third from last."""
    times = _times(times)
    if isinstance(H, TimeDependentHamiltonian):
        if cfg.method == "expm" or (cfg.method == "auto" and (H.uses_torch or H.dim <= EXPM_MAX_DIM)):
            return _check_finite(_midpoint_propagators(H, times, cfg.substeps), "propagator")
        return _rk_propagators(H, times, cfg)
    _check_finite(H, "Hamiltonian")
    if xp.is_torch(H) or cfg.use_expm(H.shape[-1]):
        return _check_finite(_static_propagators(H, times), "propagator")
    return _rk_propagators(H, times, cfg)


def heisenberg_evolve(H, A, pts, cfg: SolverConfig = SolverConfig()) -> list:
    """A(t_m) for every checkpoint, via the exponential or by integrating dA/dt = i[H, A]."""
    if tuple(H.shape[-2:]) != tuple(A.shape[-2:]):
        raise ConfigError("H and A dimensions differ")
    times = _times(pts)
    if xp.is_torch(H) or cfg.use_expm(H.shape[-1]):
        U = propagators(H, times, SolverConfig(method="expm"))
        return list(xp.dagger(U) @ A @ U)
    d = H.shape[-1]
    H = np.asarray(H)
    A = np.asarray(A)

    def rhs(t, y):
        a = y.reshape(d, d)
        return (1j * (H @ a - a @ H)).ravel()

    sol = solve_ivp(
        rhs, (0.0, float(times[-1])), A.astype(complex).ravel(), method="DOP853",
        t_eval=times, rtol=cfg.rel_tol, atol=cfg.abs_tol, max_step=cfg.max_step,
    )
    if not sol.success:
        raise NumericError(f"ODE solver failed: {sol.message}")
    return list(_check_finite(sol.y.T.reshape(len(times), d, d), "evolved operator"))


def evolve_time_dependent(H_of_t, A, pts, cfg: SolverConfig = SolverConfig(), picture="heisenberg") -> list:
    """Checkpointed U†AU (Heisenberg) or UAU† (Schrodinger) for a time-dependent H.

    ``H_of_t`` is a ``TimeDependentHamiltonian`` or any callable ``t -> (d, d)``.
    """
    if picture not in ("heisenberg", "schrodinger"):
        raise ConfigError(f"unknown picture {picture!r}")
    if not isinstance(H_of_t, TimeDependentHamiltonian):
        H_of_t = CallbackHamiltonian(H_of_t, A.shape[-1])
    U = propagators(H_of_t, _times(pts), cfg)
    A = xp.as_like(A, [U])
    out = xp.dagger(U) @ A @ U if picture == "heisenberg" else U @ A @ xp.dagger(U)
    return list(out)


class CallbackHamiltonian(TimeDependentHamiltonian):
    """Wrap a scalar-time callback."""

    def __init__(self, fn, dim: int):
        self.fn = fn
        self.dim = dim

    def at(self, times):
        return xp.stack([self.fn(float(t)) for t in times])


def trotter_step(sys_U, boundary_terms, env_term, delta: float):
    """[sys_U⊗I] Π_i exp(-iδ B_i⊗R_i) exp(-iδ I⊗K), one first-order step of the grown dynamics."""
    d_env = env_term.shape[-1]
    step = kron2(sys_U, xp.eye(d_env, like=sys_U))
    for b, r in boundary_terms:
        step = step @ xp.expm(-1j * delta * kron2(b, r))
    return step @ xp.expm(-1j * delta * kron2(xp.eye(sys_U.shape[-1], like=sys_U), env_term))


def trotter_evolve(H_dev, boundary_terms, env_term, T: float, delta: float):
    """Product of first-order steps up to time T; the device factor uses the slice midpoint."""
    steps = int(round(T / delta))
    if steps < 1 or abs(steps * delta - T) > 1e-9 * max(1.0, T):
        raise ConfigError(f"T={T} is not a whole number of steps of {delta}")
    U = None
    for j in range(steps):
        if isinstance(H_dev, TimeDependentHamiltonian):
            h = H_dev((j + 0.5) * delta)
        else:
            h = H_dev
        step = trotter_step(xp.expm(-1j * delta * h), boundary_terms, env_term, delta)
        U = step if U is None else step @ U
    return U
