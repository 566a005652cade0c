"""Exact oracles and numerical checks of the scaling-error inequalities."""

from dataclasses import asdict, dataclass, field, replace
from math import factorial

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from .dynamics import Checkpoints, SolverConfig, propagators
from .errors import ConfigError, ResourceError
from .model import ModelSpec, RelevantSet, connecting_operator, grow_set, initial_set, tfim_hamiltonian, two_point_observable, zero_state
from .omm import conjugate
from .qops import adjoint_apply, haar_isometry, kron, op_norm, pauli, random_hermitian
from .tobc import evaluate_batch, full_grid, tobc_values

MAX_EXACT_SITES = 12


@dataclass
class BoundReport:
    lhs: float
    rhs: float
    satisfied: bool
    instance: dict = field(default_factory=dict)
    notes: str = ""

    @classmethod
    def make(cls, lhs, rhs, notes="", **instance):
        return cls(float(lhs), float(rhs), bool(lhs <= rhs + 1e-12), instance, notes)

    def to_dict(self):
        return asdict(self)


def _observable(N, obs):
    if obs is None:
        return two_point_observable(N, 1, 2)
    if isinstance(obs, tuple):
        return two_point_observable(N, *obs)
    return np.asarray(obs, dtype=complex)


def exact_expectation(N: int, h: float, obs=None, T: float = 0.0, method="expm") -> float:
    """⟨0…0| O(T) |0…0⟩ for the N-site chain. ``obs`` is an (a, b) pair for
    Z_a Z_b (default Z_1 Z_2) or an explicit matrix."""
    if N > MAX_EXACT_SITES:
        raise ResourceError(f"{N} sites exceeds the dense limit of {MAX_EXACT_SITES}")
    H = tfim_hamiltonian(N, h)
    O = _observable(N, obs)
    psi0 = np.zeros(2**N, dtype=complex)
    psi0[0] = 1
    if method == "expm":
        if N <= 10:
            psi = scipy.linalg.expm(-1j * T * H) @ psi0
        else:
            w, v = np.linalg.eigh(H)
            psi = v @ (np.exp(-1j * T * w) * (v.conj().T @ psi0))
    elif method == "ode":
        sol = solve_ivp(lambda t, y: -1j * (H @ y), (0.0, T), psi0, method="DOP853", rtol=1e-12, atol=1e-12)
        psi = sol.y[:, -1]
    else:
        raise ConfigError(f"unknown method {method!r}")
    return float(np.real(psi.conj() @ O @ psi))


def set_expectation(s: RelevantSet, T: float) -> float:
    U = propagators(s.H, [T], SolverConfig(method="expm"))[0]
    return float(np.real(np.trace(s.rho @ U.conj().T @ s.obs @ U)))


def check_telescoping(n: int, l: int, q: int, T: float, seed: int, h: float = 1.0, identity=False) -> BoundReport:
    """|p(G^q S) - p(D^q S)| against the sum of neighbouring differences, with
    D = G∘f and f a fixed random isometry 2^n -> 2^(n-l)."""
    if n + q * l > 10:
        raise ResourceError("n + q*l must be at most 10")
    if l > n - 1 and not identity:
        raise ConfigError("compression by l sites needs n > l")
    spec = ModelSpec(h=h)
    s = initial_set(spec, n)
    d = 2**n
    V = None if identity else haar_isometry(d, d // 2**l, np.random.default_rng(seed))

    def D(x):
        return grow_set(spec, conjugate(x, np.eye(x.dim, dtype=complex) if V is None else V), l)

    eta = []
    for j in range(q + 1):
        x = s
        for _ in range(j):
            x = D(x)
        for _ in range(q - j):
            x = grow_set(spec, x, l)
        eta.append(set_expectation(x, T))
    lhs = abs(eta[0] - eta[-1])
    rhs = sum(abs(a - b) for a, b in zip(eta[:-1], eta[1:]))
    return BoundReport.make(lhs, rhs, n=n, l=l, q=q, T=T, seed=seed)


def check_rt_bound(n: int, l: int, T: float, scale: float, seed: int, q: int = 1, h: float = 1.0,
                   k_probe: int = 3, M_probe: int = 8, obs=None, kind: str = "hermitian") -> BoundReport:
    """One grow step after a perturbed map f: H -> H + scale·P, B -> B + scale·P'.

    ε is the largest TOBC deviation between S and f(S) over every index of
    order <= k_probe on the grid {0, T/M, ..., T}; it under-estimates the
    supremum in the bound, which the report notes. kind="diagonal" draws
    P diagonal in the computational basis, which keeps Z-conserving sets
    Z-conserving.
    """
    if kind not in ("hermitian", "diagonal"):
        raise ConfigError(f"unknown perturbation kind {kind!r}")
    if q != 1:
        raise ConfigError("only a single growing step is supported")
    if n + l > 8:
        raise ResourceError("n + l must be at most 8")
    spec = ModelSpec(h=h)
    s = initial_set(spec, n) if obs is None else replace(initial_set(spec, n), obs=np.asarray(obs, dtype=complex))
    rng = np.random.default_rng(seed)
    d = s.dim

    def unit_herm():
        p = random_hermitian(d, rng)
        if kind == "diagonal":
            p = np.diag(np.diag(p).real).astype(complex)
        return p / op_norm(p)

    f = replace(s, H=s.H + scale * unit_herm(), boundary=tuple(b + scale * unit_herm() for b in s.boundary), virtual=True)
    lhs = abs(set_expectation(grow_set(spec, s, l), T) - set_expectation(grow_set(spec, f, l), T))

    eps = 0.0
    if T > 0:
        grid = Checkpoints(T, M_probe)
        for k in range(k_probe + 1):
            batch = full_grid(k, Checkpoints(T, M_probe + 1), len(s.boundary))
            batch = replace(batch, steps=batch.steps - 1)  # steps 0..M_probe
            for a, b in zip(_tobc_with_zero(s, batch, grid), _tobc_with_zero(f, batch, grid)):
                eps = max(eps, float(np.abs(a - b).max()))
    else:
        eps = abs(np.trace(s.rho @ s.obs) - np.trace(f.rho @ f.obs))
    C = max(max(op_norm(connecting_operator(r, l)) for _, r in spec.connecting_pairs), 1.0)  # ‖O_E‖ = ‖I‖ = 1
    rhs = eps * C * np.exp(T * len(s.boundary) * C / 2)
    return BoundReport.make(lhs, rhs, notes=f"epsilon={eps:.6e} measured on a finite probe grid (lower estimate)",
                            n=n, l=l, q=q, T=T, seed=seed, scale=scale, k_probe=k_probe, M_probe=M_probe)


def _tobc_with_zero(s, batch, grid):
    """TOBCs on the grid extended by t=0; step m of ``batch`` lands on time m·T/M."""
    U = propagators(s.H, np.concatenate([[0.0], grid.times]), SolverConfig(method="expm"))
    Ud = U.conj().swapaxes(-1, -2)
    bt = np.stack([Ud @ b @ U for b in s.boundary], axis=0)
    ot = Ud[-1] @ s.obs @ U[-1]
    return [evaluate_batch(s.rho, bt, ot, replace(batch, steps=batch.steps + 1))]


@dataclass
class DysonTable:
    T: float
    exact: float
    rows: list  # (M, k, value, error)

    def errors(self, M: int) -> list:
        return [e for m, _, _, e in self.rows if m == M]

    def monotone(self, M: int) -> bool:
        e = self.errors(M)
        return all(a > b for a, b in zip(e[:-1], e[1:]))


def _growth_adjoint(b, r, y):
    """Σ_σ (ad_{B,σ}⊗ad_{R,-σ}) applied to a two-party operator y."""
    eye_s, eye_e = np.eye(b.shape[0]), np.eye(r.shape[0])
    br, bi, ir = np.kron(b, r), np.kron(b, eye_e), np.kron(eye_s, r)
    return sum(br @ y - s * bi @ y @ ir + s * ir @ y @ bi - y @ br for s in (1, -1))


def check_dyson_truncation(T: float = 0.5, k_max: int = 3, Ms=(32, 64, 128, 256), h: float = 1.0,
                           coupling: float = 1.0, O_S=None, O_E=None, rho=None) -> DysonTable:
    """Truncated growing Dyson series for one system site plus one environment site.

    The k-th term is (iδ/2)^k/k! times the time-ordered product of growth
    adjoints at left-point times mδ, applied to O_S(T)⊗O_E(T). The reported
    value is tr(ρ ·) of the partial sum through order k.
    """
    Z = pauli("Z")
    O_S = Z if O_S is None else O_S
    O_E = Z if O_E is None else O_E
    rho = zero_state(2) if rho is None else rho
    HS = h * pauli("X")
    K = h * pauli("X")
    B, R = coupling * Z, Z
    G = np.kron(HS, np.eye(2)) + np.kron(B, R) + np.kron(np.eye(2), K)
    U = scipy.linalg.expm(-1j * T * G)
    exact = complex(np.trace(rho @ U.conj().T @ np.kron(O_S, O_E) @ U))

    def ev(H, A, t):
        u = scipy.linalg.expm(-1j * t * H)
        return u.conj().T @ A @ u

    rows = []
    for M in Ms:
        d = T / M
        terms = [np.kron(ev(HS, O_S, T), ev(K, O_E, T))] + [np.zeros((4, 4), complex)] * k_max
        for m in range(M - 1, -1, -1):
            bt, rt = ev(HS, B, m * d), ev(K, R, m * d)
            powers = [terms]
            for _ in range(k_max):
                powers.append([_growth_adjoint(bt, rt, y) for y in powers[-1]])
            terms = [
                sum((1j * d / 2) ** a / factorial(a) * powers[a][j - a] for a in range(j + 1))
                for j in range(k_max + 1)
            ]
        partial = np.zeros((4, 4), complex)
        for k, y in enumerate(terms):
            partial = partial + y
            value = complex(np.trace(rho @ partial))
            rows.append((M, k, value, abs(value - exact)))
    return DysonTable(T, exact.real, rows)


def tensor_adjoint_deviation(A, B, X, Y, sigma: int) -> float:
    """Max deviation of ad_{A⊗B,σ}(X⊗Y) = ½ Σ_s ad_{A,s}(X)⊗ad_{B,σs}(Y)."""
    lhs = adjoint_apply(np.kron(A, B), sigma, np.kron(X, Y))
    rhs = 0.5 * sum(np.kron(adjoint_apply(A, s, X), adjoint_apply(B, sigma * s, Y)) for s in (1, -1))
    return float(np.abs(lhs - rhs).max())


def tensor_adjoint_deviation_k2(A1, B1, A2, B2, X, Y, s1: int, s2: int) -> float:
    """The iterated form: two nested tensor adjoints against the four-term product expansion."""
    lhs = adjoint_apply(np.kron(A1, B1), s1, adjoint_apply(np.kron(A2, B2), s2, np.kron(X, Y)))
    rhs = 0.25 * sum(
        np.kron(adjoint_apply(A1, a, adjoint_apply(A2, b, X)), adjoint_apply(B1, s1 * a, adjoint_apply(B2, s2 * b, Y)))
        for a in (1, -1)
        for b in (1, -1)
    )
    return float(np.abs(lhs - rhs).max())


def adjoint_power_deviation(A1, A2, B, sigma: int) -> float:
    """ad_{A1+A2,σ}² (B) against its four-term expansion."""
    lhs = adjoint_apply(A1 + A2, sigma, adjoint_apply(A1 + A2, sigma, B))
    rhs = sum(adjoint_apply(a, sigma, adjoint_apply(b, sigma, B)) for a in (A1, A2) for b in (A1, A2))
    return float(np.abs(lhs - rhs).max())


def channel_maxima(n: int = 5, h: float = 1.0, T: float = 5.0, M: int = 25, boundary_site=None) -> dict:
    """Max |χ| over the M×M grid for each sign pair of the second-order TOBC
    tr(ρ ad_{B(t1),σ1} ad_{B(t2),σ2}[O(T)]) with B = Z on the last site."""
    s = initial_set(ModelSpec(h=h), n)
    grid = Checkpoints(T, M)
    batch = full_grid(2, grid, 1)
    (chi,) = tobc_values(s, [batch], grid, SolverConfig(method="expm"))
    out = {}
    for s1 in (1, -1):
        for s2 in (1, -1):
            mask = (batch.signs[:, 0] == s1) & (batch.signs[:, 1] == s2)
            vals = chi[mask]
            out[(s1, s2)] = {
                "max_abs": float(np.abs(vals).max()),
                "max_abs_real": float(np.abs(vals.real).max()),
                "max_abs_imag": float(np.abs(vals.imag).max()),
            }
    return out
