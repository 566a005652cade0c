"""Backend shim so the numeric kernels run on numpy arrays and torch tensors alike.

Only the handful of calls whose spelling differs between the two libraries live
here. Everything else (``@``, ``einsum``, ``.conj()``, ``.mT``, fancy indexing)
is shared syntax.
"""

import numpy as np
import scipy.linalg

try:
    import torch
except ImportError:  # pragma: no cover - torch is a declared dependency
    torch = None


def is_torch(x) -> bool:
    return torch is not None and isinstance(x, torch.Tensor)


def einsum(spec, *ops):
    if any(is_torch(o) for o in ops):
        return torch.einsum(spec, *[as_like(o, ops) for o in ops])
    return np.einsum(spec, *ops)


def as_like(x, refs):
    """Promote ``x`` to a complex tensor when any of ``refs`` is a tensor."""
    if is_torch(x):
        return x
    ref = next((r for r in refs if is_torch(r)), None)
    if ref is None:
        return x
    return torch.as_tensor(np.asarray(x), dtype=ref.dtype, device=ref.device)


def eye(d, like=None):
    if is_torch(like):
        return torch.eye(d, dtype=like.dtype, device=like.device)
    return np.eye(d, dtype=complex)


def zeros(shape, like=None):
    if is_torch(like):
        return torch.zeros(shape, dtype=like.dtype, device=like.device)
    return np.zeros(shape, dtype=complex)


def dagger(x):
    return x.conj().mT


def trace(x):
    """Trace over the last two axes."""
    return einsum("...ii->...", x)


def expm(a):
    """Matrix exponential over the last two axes."""
    if is_torch(a):
        return torch.linalg.matrix_exp(a)
    return scipy.linalg.expm(a)


def stack(xs, axis=0):
    if any(is_torch(x) for x in xs):
        return torch.stack([as_like(x, xs) for x in xs], dim=axis)
    return np.stack(xs, axis=axis)


def isfinite_all(x) -> bool:
    if is_torch(x):
        return bool(torch.isfinite(x).all())
    return bool(np.isfinite(x).all())


def to_numpy(x):
    if is_torch(x):
        return x.detach().cpu().resolve_conj().numpy()
    return np.asarray(x)


