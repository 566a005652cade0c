"""Dense complex operator algebra.

Operators are plain complex square arrays (numpy ``ndarray`` or torch
``Tensor``). Functions accept optional leading batch axes wherever that is
cheap, which lets the trainer push a whole ensemble through one call.
"""

from functools import reduce

import numpy as np

from . import _array as xp
from .errors import ConfigError, NumericError

_PAULI = {
    "I": np.array([[1, 0], [0, 1]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# relative threshold on |R_jj| below which a QR column counts as degenerate
RANK_TOL = 1e-10


def pauli(name: str) -> np.ndarray:
    try:
        return _PAULI[name].copy()
    except KeyError:
        raise ConfigError(f"unknown Pauli label {name!r}; expected one of I, X, Y, Z") from None


def kron2(a, b):
    """Kronecker product over the last two axes, broadcasting leading axes."""
    out = xp.einsum("...ij,...kl->...ikjl", a, b)
    shape = tuple(out.shape[:-4]) + (a.shape[-2] * b.shape[-2], a.shape[-1] * b.shape[-1])
    return out.reshape(shape)


def kron(ops):
    """Tensor product of ``ops`` in list order."""
    ops = list(ops)
    if not ops:
        raise ConfigError("kron needs at least one operator")
    return reduce(kron2, ops)


def pauli_string(labels: str):
    """``pauli_string("IZ")`` is I⊗Z."""
    return kron(pauli(c) for c in labels)


def embed(op, site: int, n: int):
    """Place a one-site operator on ``site`` (0-based) of an ``n``-site chain."""
    if not 0 <= site < n:
        raise ConfigError(f"site {site} outside chain of {n} sites")
    eye = pauli("I")
    return kron([op if j == site else eye for j in range(n)])


def adjoint_apply(a, sigma: int, b):
    """ad_{A,σ}(B) = AB + σBA. σ=-1 is the commutator, σ=+1 the anticommutator."""
    if a.shape[-2:] != b.shape[-2:]:
        raise ConfigError(f"dimension mismatch: {tuple(a.shape[-2:])} vs {tuple(b.shape[-2:])}")
    if sigma not in (1, -1):
        raise ConfigError(f"sigma must be +1 or -1, got {sigma}")
    return a @ b + sigma * (b @ a)


def is_hermitian(a, tol=1e-12) -> bool:
    return float(abs(a - xp.dagger(a)).max()) <= tol


def _complete(q, keep):
    """Replace columns of ``q`` not flagged in ``keep`` by Gram-Schmidt on canonical vectors."""
    d_in, d_out = q.shape
    cols = {j: q[:, j] for j in range(d_out) if keep[j]}
    basis = list(cols.values())
    candidates = iter(range(d_in))
    for j in range(d_out):
        if keep[j]:
            continue
        for c in candidates:
            v = xp.zeros((d_in,), like=q)
            v[c] = 1.0
            for u in basis:
                v = v - u * (u.conj() @ v)
            for u in basis:  # second pass for numerical orthogonality
                v = v - u * (u.conj() @ v)
            norm = float((abs(v) ** 2).sum() ** 0.5)
            if norm > 1e-8:
                v = v / norm
                cols[j] = v
                basis.append(v)
                break
    return xp.stack([cols[j] for j in range(d_out)], axis=1)


def thin_qr_isometry(m):
    """Orthonormal basis of the column span of ``m`` (shape ``(..., d_in, d_out)``).

    R is normalized to a non-negative real diagonal so the result is unique.
    Degenerate columns are filled in from canonical basis vectors.
    """
    d_in, d_out = m.shape[-2:]
    if d_out > d_in:
        raise ConfigError(f"cannot build a {d_in}x{d_out} isometry with more columns than rows")
    if not xp.isfinite_all(m):
        raise NumericError("non-finite entries in isometry input")
    if xp.is_torch(m):
        import torch

        q, r = torch.linalg.qr(m, mode="reduced")
        diag = torch.diagonal(r, dim1=-2, dim2=-1)
        mag = diag.abs()
        scale = mag.amax(dim=-1, keepdim=True)
    else:
        q, r = np.linalg.qr(m, mode="reduced")
        diag = np.diagonal(r, axis1=-2, axis2=-1)
        mag = np.abs(diag)
        scale = mag.max(axis=-1, keepdims=True)
    # Q R = (Q P)(P* R) with P = diag(r_jj / |r_jj|) makes diag(R) real and >= 0
    phase = diag / (mag + (mag == 0))
    q = q * phase[..., None, :]
    keep = (mag > RANK_TOL * scale) & (scale > 0)
    keep_np = xp.to_numpy(keep)
    if keep_np.all():
        return q
    flat_q = q.reshape((-1, d_in, d_out))
    flat_keep = keep_np.reshape((-1, d_out))
    fixed = [_complete(flat_q[i], flat_keep[i]) if not flat_keep[i].all() else flat_q[i] for i in range(flat_q.shape[0])]
    return xp.stack(fixed).reshape(q.shape)


def haar_isometry(d_in: int, d_out: int, rng: np.random.Generator) -> np.ndarray:
    """Random isometry from QR of a complex Gaussian matrix."""
    g = rng.standard_normal((d_in, d_out)) + 1j * rng.standard_normal((d_in, d_out))
    return thin_qr_isometry(g)


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (g + g.conj().T) / 2


def op_norm(a) -> float:
    """Spectral norm."""
    return float(np.linalg.norm(xp.to_numpy(a), 2))
