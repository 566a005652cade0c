import numpy as np
import pytest
import torch
from dataclasses import replace

from olrg.errors import ConfigError, NumericError
from olrg.hem import ConstantPulses, Pulses
from olrg.model import ModelSpec
from olrg.omm import OMM, IdentityMap
from olrg.train import (AdamState, TrainConfig, adam_step, grad, predict, run_chain, select_best_epoch,
                        train, transfer_schedule)
from olrg.verify import exact_expectation

SPEC = ModelSpec(h=1.0)


def sub_closure(config, layout, theta, idx, seed=(0, 0)):
    """Chain loss as a function of the coordinates ``idx`` only."""

    def f(u):
        th = theta.detach().clone().index_put((torch.as_tensor(idx),), u)
        losses, _ = run_chain(config, SPEC, layout, th, list(seed))
        return sum(losses)

    return f


def gradient_relative_error(config, layout, theta, n_coords=50, seed=0):
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(layout.n_params, size=min(n_coords, layout.n_params), replace=False))
    f = sub_closure(config, layout, theta, idx)
    u = theta[idx].clone()
    g_adj = grad(f, u, "adjoint")
    g_fd = grad(f, u, "finite_diff", fd_eps=1e-5)
    return float((g_adj - g_fd).norm() / g_fd.norm()), g_fd


def omm_fixture(seed=0):
    layout = OMM(4, 2, noise_dim=2, depth=2, width=8, ensemble_size=2)
    config = TrainConfig(start_n=2, target_N=3, order_cutoff=2, tobc_batch=8, checkpoints=5, T=1.0, epochs=1)
    return config, layout, layout.init_params(seed)


def hem_fixture(seed=0):
    layout = Pulses(depth=1, width=4)
    config = TrainConfig(mode="hem", start_n=2, target_N=3, order_cutoff=2, tobc_batch=8, checkpoints=5, T=1.0, epochs=1)
    return config, layout, layout.init_params(seed)


def test_quadratic_gradient():
    theta = torch.tensor([1.0, -2.0, 0.5], dtype=torch.float64)
    f = lambda th: (th**2).sum()
    assert torch.equal(grad(f, theta, "adjoint"), 2 * theta)
    assert (grad(f, theta, "finite_diff") - 2 * theta).abs().max() < 1e-8


def test_constant_loss_zero_gradient():
    theta = torch.ones(4, dtype=torch.float64)
    f = lambda th: torch.tensor(3.0, dtype=torch.float64)
    assert torch.equal(grad(f, theta, "adjoint"), torch.zeros(4, dtype=torch.float64))
    assert torch.equal(grad(f, theta, "finite_diff"), torch.zeros(4, dtype=torch.float64))


def test_non_finite_loss_reports_index():
    f = lambda th: th.sum() if float(th[1]) == 1.0 else th[1] / 0.0
    with pytest.raises(NumericError, match="parameter 1"):
        grad(f, torch.ones(3, dtype=torch.float64), "finite_diff")
    with pytest.raises(ConfigError):
        grad(f, torch.ones(3, dtype=torch.float64), "newton")


def test_omm_gradient_matches_finite_differences():
    config, layout, theta = omm_fixture()
    err, g = gradient_relative_error(config, layout, theta)
    assert g.norm() > 0 and err < 1e-3


def test_hem_gradient_matches_finite_differences():
    config, layout, theta = hem_fixture()
    err, g = gradient_relative_error(config, layout, theta, n_coords=layout.n_params)
    assert g.norm() > 0 and err < 1e-3


def test_adam_zero_gradient():
    theta = torch.tensor([0.3, -1.0], dtype=torch.float64)
    new, state = adam_step(theta, torch.zeros(2, dtype=torch.float64), AdamState.zeros_like(theta))
    assert torch.equal(new, theta) and state.t == 1


def test_adam_first_step_is_signed_lr():
    theta = torch.zeros(3, dtype=torch.float64)
    g = torch.tensor([2.0, -0.01, 5e3], dtype=torch.float64)
    new, _ = adam_step(theta, g, AdamState.zeros_like(theta), lr=0.1)
    assert torch.allclose(new, -0.1 * torch.sign(g), atol=1e-6)


def test_adam_quadratic_converges():
    theta = torch.tensor([1.0], dtype=torch.float64)
    state = AdamState.zeros_like(theta)
    for _ in range(200):
        theta, state = adam_step(theta, 2 * theta, state, lr=0.05)
    assert abs(float(theta)) < 1e-2


def test_adam_shape_mismatch():
    with pytest.raises(ConfigError):
        adam_step(torch.zeros(2), torch.zeros(3), AdamState.zeros_like(torch.zeros(2)))


def test_select_best_epoch_examples():
    assert select_best_epoch([5, 4, 3, 10, 10, 10, 10], window=2) == 2
    assert select_best_epoch([1.0] * 12, window=10) == 9
    assert select_best_epoch(list(range(20, 0, -1)), window=10) == 19
    with pytest.raises(ConfigError):
        select_best_epoch([1, 2, 3], window=10)


def test_identity_map_zero_loss():
    config = TrainConfig(start_n=3, target_N=5, epochs=3, T=1.0)
    h = train(config, SPEC, IdentityMap(), record_time=False)
    assert h.losses[0] < 1e-10
    assert max(h.losses) < 1e-9
    assert all(x >= 0 for x in h.losses)


def test_hem_exact_pulses_zero_first_step_loss():
    config = TrainConfig(mode="hem", start_n=2, target_N=3, epochs=1, T=1.0, checkpoints=10)
    layout = ConstantPulses(1.0, 2.0, 4.0)
    h = train(config, SPEC, layout, record_time=False)
    assert h.records[0].per_step_losses[0] < 1e-8
    assert h.records[0].per_step_losses[1] > 1e-3  # 3-site device has a mid-chain field


def test_training_is_deterministic():
    config, layout, _ = omm_fixture()
    config = replace(config, epochs=4, window=2, learning_rate=1e-2)
    a = train(config, SPEC, layout, record_time=False)
    b = train(config, SPEC, layout, record_time=False)
    assert a.losses == b.losses
    assert [r.per_step_losses for r in a.records] == [r.per_step_losses for r in b.records]
    assert torch.equal(a.final_theta, b.final_theta) and a.best_epoch == b.best_epoch


def test_history_shape_and_best_epoch():
    config, layout, _ = omm_fixture()
    h = train(replace(config, epochs=1), SPEC, layout)
    assert len(h.records) == 1 and h.best_epoch == 0
    assert len(h.records[0].per_step_losses) == 2 and h.records[0].wall_ms >= 0


def test_numeric_failure_keeps_history():
    config, layout, _ = omm_fixture()
    theta = layout.init_params(0)
    theta[0] = float("nan")
    with pytest.raises(NumericError) as info:
        train(replace(config, epochs=2), SPEC, layout, theta)
    assert info.value.history.records == []


def test_transfer_single_point_matches_train():
    config, layout, _ = omm_fixture()
    config = replace(config, epochs=3, window=2)
    [h] = transfer_schedule(config, SPEC, layout, [config.T], [3], record_time=False)
    ref = train(config, SPEC, layout, record_time=False)
    assert h.losses == ref.losses and torch.equal(h.best_theta, ref.best_theta)


def test_transfer_zero_epoch_leg_copies_warm_start():
    config, layout, _ = omm_fixture()
    config = replace(config, epochs=3, window=2)
    a, b = transfer_schedule(config, SPEC, layout, [0.5, 1.0], [3, 0], record_time=False)
    assert b.records == [] and b.T == 1.0
    assert torch.equal(b.best_theta, a.best_theta)
    with pytest.raises(ConfigError):
        transfer_schedule(config, SPEC, layout, [1.0, 0.5], [1, 1])


def test_identity_prediction_matches_oracle():
    config = TrainConfig(start_n=3, target_N=5, T=1.0)
    assert abs(predict(config, SPEC, IdentityMap(), None) - exact_expectation(5, 1.0, (1, 2), 1.0)) < 1e-8


def test_omm_smoke_loss_decreases():
    layout = OMM(16, 8)
    config = TrainConfig(start_n=4, target_N=6, order_cutoff=2, epochs=300, seed=7)
    h = train(config, SPEC, layout, record_time=False)
    ma = np.convolve(h.losses, np.ones(10) / 10, mode="valid")
    assert ma[-1] < ma[0]  # ma[0] is the trailing average at epoch 10 (index 9)
