import numpy as np
import pytest
import torch
from dataclasses import replace

from olrg.dynamics import Checkpoints
from olrg.errors import ConfigError
from olrg.model import ModelSpec, grow_set, initial_set
from olrg.omm import OMM, IdentityMap, OMMParams, conjugate, ensemble_apply, omm_apply, omm_forward
from olrg.tobc import loss_step, sample_mixed

SPEC = ModelSpec(h=1.0)


@pytest.fixture(scope="module")
def small():
    layout = OMM(16, 8, noise_dim=4, depth=2, width=32, ensemble_size=3)
    return OMMParams(layout, layout.init_params(0))


def test_default_layout_sizes():
    layout = OMM(16, 8)
    assert layout.in_dim == 2 * 256 + 8
    assert layout.net.sizes == (520,) * 9 + (256,)
    assert layout.depth == 8 and layout.ensemble_size == 10


def test_zero_weights_give_canonical_columns():
    layout = OMM(16, 8, depth=2)
    v = omm_forward(OMMParams(layout, torch.zeros(layout.n_params, dtype=torch.float64)),
                    initial_set(SPEC, 4).H, torch.zeros(8))
    assert torch.equal(v, torch.eye(16, 8, dtype=torch.complex128))


def test_isometry_contract_and_determinism(small):
    H = initial_set(SPEC, 4).H
    noise = torch.randn(4, dtype=torch.float64, generator=torch.Generator().manual_seed(1))
    a = omm_forward(small, H, noise)
    b = omm_forward(small, H, noise)
    assert torch.equal(a, b)
    assert (a.mH @ a - torch.eye(8)).abs().max() < 1e-10


def test_shape_mismatch(small):
    with pytest.raises(ConfigError):
        omm_forward(small, np.eye(8), torch.zeros(4))
    with pytest.raises(ConfigError):
        omm_forward(small, np.eye(16), torch.zeros(3))


def test_apply_members(small):
    s = initial_set(SPEC, 4)
    v = omm_apply(small, s, torch.zeros(4))
    assert v.virtual and v.dim == 8 and v.n_sites == 4
    assert (v.H - v.H.mH).abs().max() < 1e-10
    V = omm_forward(small, s.H, torch.zeros(4))
    assert torch.allclose(V.mH @ V, torch.eye(8, dtype=torch.complex128), atol=1e-10)
    assert torch.allclose(v.obs, V.mH @ torch.as_tensor(s.obs) @ V)


def test_spectrum_containment(small):
    s = initial_set(SPEC, 4)
    v = omm_apply(small, s, torch.ones(4))
    e, E = np.linalg.eigvalsh(v.H.numpy()), np.linalg.eigvalsh(s.H)
    assert e.min() >= E.min() - 1e-10 and e.max() <= E.max() + 1e-10


def test_square_unitary_preserves_loss():
    s = initial_set(SPEC, 3)
    rng = np.random.default_rng(0)
    u, _ = np.linalg.qr(rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8)))
    v = conjugate(s, u)
    g = Checkpoints(1.0, 5)
    assert loss_step(s, v, sample_mixed(0, 3, 40, g, 1), 1.0, M=5) < 1e-8


def test_ensemble(small):
    s = initial_set(SPEC, 4)
    sets = ensemble_apply(small, s, np.random.default_rng(0))
    assert len(sets) == 3
    assert not torch.equal(sets[0].H, sets[1].H)
    layout = replace(small.layout, noise_dim=0)
    p = OMMParams(layout, layout.init_params(0))
    same = ensemble_apply(p, s, np.random.default_rng(0))
    assert all(torch.equal(same[0].H, x.H) for x in same)
    one = OMMParams(replace(small.layout, ensemble_size=1), small.theta)
    (only,) = ensemble_apply(one, s, np.random.default_rng(5))
    noise = torch.as_tensor(np.random.default_rng(5).standard_normal((1, 4)))[0]
    assert torch.equal(only.H, omm_apply(one, s, noise).H)


def test_batched_apply_matches_per_copy(small):
    s = initial_set(SPEC, 4)
    noise = small.layout.draw_noise(3)
    batched = small.layout.apply(small.theta, s, noise)
    for c in range(3):
        assert torch.allclose(batched.H[c], omm_apply(small, s, noise[c]).H)


def test_chain_keeps_dimension(small):
    s = initial_set(SPEC, 4)
    for _ in range(3):
        s = grow_set(SPEC, omm_apply(small, s, torch.zeros(4)), 1) if s.dim == 16 else s
        assert s.dim == 16
    assert s.n_sites == 7


def test_identity_map_exact():
    s = initial_set(SPEC, 3)
    v = IdentityMap().apply(torch.zeros(0), s, torch.zeros(1, 0))
    assert v.virtual and np.allclose(v.H.numpy(), s.H)


def test_checkpoint_round_trip(tmp_path, small):
    path = tmp_path / "omm.olrg"
    small.layout.save(path, small.theta)
    layout, theta = OMM.load(path)
    assert layout == small.layout and torch.equal(theta, small.theta)
    small.layout.save(tmp_path / "again.olrg", small.theta)
    assert path.read_bytes() == (tmp_path / "again.olrg").read_bytes()
