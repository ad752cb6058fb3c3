import math

import numpy as np
import pytest

from phaserx import autodiff as ad
from phaserx import groups, phy
from phaserx import receiver as rx
from phaserx.autodiff import Parameter, Tensor
from phaserx.training import (DivergenceError, GridConfig, NonFiniteGradientError, TrainConfig, Trainer,
                              adamw_step, generate_batch, lr_at, receiver_loss, simulate_blocks)

SMALL = GridConfig(num_subcarriers=8)


# --------------------------------------------------------------- schedule


def test_lr_schedule_examples():
    cfg = TrainConfig(steps=150)
    assert cfg.resolved_milestones() == (100, 125)
    assert lr_at(50, cfg) == pytest.approx(1e-3)
    assert lr_at(110, cfg) == pytest.approx(1e-4)
    assert lr_at(130, cfg) == pytest.approx(1e-5)
    assert lr_at(0, cfg) == pytest.approx(1e-3)
    with pytest.raises(ValueError):
        lr_at(-1, cfg)


def test_lr_schedule_piecewise_constant():
    cfg = TrainConfig(steps=5000)
    lrs = [lr_at(s, cfg) for s in range(5000)]
    assert len(set(lrs)) == 3
    assert all(b <= a for a, b in zip(lrs, lrs[1:]))


@pytest.mark.parametrize("kw", [dict(lr=0), dict(lr_factor=1.0), dict(lr_factor=0.0),
                                dict(milestones=(10, 10)), dict(milestones=(20, 10)), dict(precision="f16"),
                                dict(ebno_min_db=5, ebno_max_db=1), dict(batch_size=0)])
def test_train_config_invariants(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


# ---------------------------------------------------------------- optimiser


def _param(value, grad):
    p = Parameter("w", Tensor(np.array([value], dtype=np.float64)))
    p.tensor.grad = None if grad is None else np.array([grad], dtype=np.float64)
    return p


def test_adamw_first_step():
    p = _param(0.0, 1.0)
    adamw_step([p], 1e-3, 1)
    assert abs(p.tensor.data[0] + 0.001) <= 1e-9


def test_adamw_zero_grad_no_decay():
    p = _param(0.7, 0.0)
    adamw_step([p], 1e-3, 1)
    assert p.tensor.data[0] == 0.7
    q = _param(0.7, None)
    adamw_step([q], 1e-3, 1)
    assert q.tensor.data[0] == 0.7


def test_adamw_pure_decay():
    p = _param(1.0, 0.0)
    adamw_step([p], 1e-3, 1, weight_decay=0.01)
    assert p.tensor.data[0] == pytest.approx(0.99999, abs=1e-15)


def test_adamw_rejects_non_finite():
    good, bad = _param(1.0, 1.0), _param(2.0, np.nan)
    bad.name = "bad"
    with pytest.raises(NonFiniteGradientError) as err:
        adamw_step([good, bad], 1e-3, 1)
    assert err.value.names == ["bad"]
    assert good.tensor.data[0] == 1.0 and good.m[0] == 0.0
    with pytest.raises(ValueError):
        adamw_step([good], 1e-3, 0)


def test_adamw_moments(rng):
    p = Parameter("w", Tensor(rng.standard_normal(5)))
    for step in range(1, 20):
        p.tensor.grad = rng.standard_normal(5)
        adamw_step([p], 1e-3, step, weight_decay=0.01)
        assert np.all(p.v >= 0) and np.all(np.isfinite(p.tensor.data))


# ------------------------------------------------------------------- batches


def test_batch_is_deterministic():
    spec = SMALL.spec()
    a = generate_batch(np.random.default_rng(7), phy.ChannelModel("rayleigh"), spec, np.full(4, 5.0), True, 4)
    b = generate_batch(np.random.default_rng(7), phy.ChannelModel("rayleigh"), spec, np.full(4, 5.0), True, 4)
    np.testing.assert_array_equal(a.features.data, b.features.data)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert a.mask.shape == (8, 14) and a.mask.sum() == 8 * 12
    assert a.labels.shape == (4, 8, 12, 2)


def test_noiseless_awgn_pipeline_round_trip(rng):
    spec = phy.make_grid_spec("qam16", num_subcarriers=8)
    batch = generate_batch(rng, phy.ChannelModel("awgn"), spec, np.full(3, 300.0), False, 3)
    blk = batch.blocks
    x_hat, _ = phy.mrc_equalize(blk.y, phy.ls_estimate(blk.y, spec), blk.noise_var[:, None, None])
    data = x_hat[..., spec.data_symbols]
    np.testing.assert_array_equal(phy.hard_demap(data, spec.constellation), batch.labels.reshape(3, 8, -1))


def test_global_phase_is_uniform():
    spec = phy.make_grid_spec("qpsk", num_subcarriers=2, num_symbols=3, pilot_symbols=(1,), rx_antennas=1)
    rng = np.random.default_rng(2024)
    offsets = np.empty(10_000)
    for i in range(offsets.size):
        blk = simulate_blocks(rng, phy.ChannelModel("awgn"), spec, [300.0], random_global_phase=True)
        pilots = blk.y[0, 0, :, 1] * np.conj(spec.pilot_values[:, 0])
        offsets[i] = np.angle(pilots.mean())
    assert abs(offsets.mean()) <= 0.05
    assert abs(np.mean(np.exp(1j * offsets))) <= 0.05


def test_global_phase_off_leaves_pilots_aligned(rng):
    spec = phy.make_grid_spec("qpsk", num_subcarriers=2, num_symbols=3, pilot_symbols=(1,), rx_antennas=1)
    blk = simulate_blocks(rng, phy.ChannelModel("awgn"), spec, [300.0] * 5)
    np.testing.assert_allclose(blk.y[:, 0, :, 1], np.broadcast_to(spec.pilot_values[:, 0], (5, 2)), atol=1e-12)


# ---------------------------------------------------------------------- loss


def test_step0_loss_is_ln2_and_shared_by_group_orders():
    cfg = TrainConfig(steps=10, grid=SMALL, channel=phy.ChannelModel("rayleigh"))
    losses = []
    for n in (1, 4):
        tr = Trainer(rx.tiny_config(n), cfg)
        losses.append(tr.train_step())
    assert losses[0] == pytest.approx(math.log(2), abs=1e-6)
    assert losses[0] == losses[1]


def test_loss_invariant_to_group_rotation(rng):
    spec = SMALL.spec()
    cfg = rx.tiny_config(4)
    params = rx.init_params(cfg, rng)
    rx.randomize_params(params, rng, 0.3)
    g = groups.roots_of_unity(4)
    batch = generate_batch(rng, phy.ChannelModel("rayleigh"), spec, np.full(4, 8.0), True, 4, g)
    with ad.no_grad():
        base = float(receiver_loss(batch.features, batch.labels, params, cfg, spec).data)
        for z in g.roots[1:]:
            f = rx.received_features(batch.blocks.y * z, spec, g)
            assert abs(float(receiver_loss(f, batch.labels, params, cfg, spec).data) - base) <= 1e-4


def test_trainer_checks_grid_compatibility():
    with pytest.raises(ValueError):
        Trainer(rx.tiny_config(1, input_channels=6), TrainConfig(grid=SMALL))
    with pytest.raises(ValueError):
        Trainer(rx.tiny_config(1), TrainConfig(grid=GridConfig(constellation="qam16", num_subcarriers=8)))


# ------------------------------------------------------------------ training


def test_awgn_sanity_run():
    # lr 1e-2: with a zero-initialised head Adam cannot grow the LLRs fast
    # enough at 1e-3 to get below a tenth of ln 2 inside 200 steps
    cfg = TrainConfig(steps=200, lr=1e-2, grid=SMALL, channel=phy.ChannelModel("awgn"),
                      ebno_min_db=15, ebno_max_db=20, random_global_phase=False)
    res = Trainer(rx.tiny_config(1), cfg).run()
    assert res.steps == 200 and len(res.losses) == 200
    assert res.losses[-1] < 0.1 * res.losses[0]


def test_seed_determinism_f64():
    cfg = TrainConfig(steps=5, grid=SMALL, precision="f64", channel=phy.ChannelModel("rayleigh"))
    a = Trainer(rx.tiny_config(2), cfg).run()
    b = Trainer(rx.tiny_config(2), cfg).run()
    assert a.losses == b.losses
    for name, p in a.params.items():
        assert p.tensor.dtype == np.float64
        np.testing.assert_array_equal(p.tensor.data, b.params[name].tensor.data)


def test_params_stay_finite():
    cfg = TrainConfig(steps=5, grid=SMALL, channel=phy.ChannelModel("rayleigh"))
    tr = Trainer(rx.tiny_config(3), cfg)
    tr.run()
    for p in tr.params.values():
        assert np.all(np.isfinite(p.tensor.data)) and np.all(p.v >= 0)


def test_run_callback_and_resume_count():
    cfg = TrainConfig(steps=4, grid=SMALL, channel=phy.ChannelModel("awgn"))
    seen = []
    tr = Trainer(rx.tiny_config(1), cfg)
    tr.run(steps=2, callback=lambda s, v: seen.append(s))
    tr.run(callback=lambda s, v: seen.append(s))
    assert seen == [1, 2, 3, 4] and tr.step == 4


def test_divergence_detector():
    cfg = TrainConfig(steps=1, grid=SMALL, divergence_patience=3)
    tr = Trainer(rx.tiny_config(1), cfg)
    tr._watch(1.0)
    tr._watch(11.0)
    tr._watch(11.0)
    tr._watch(0.5)  # a good step resets the counter
    tr._watch(11.0)
    tr._watch(11.0)
    with pytest.raises(DivergenceError, match="3 consecutive"):
        tr._watch(11.0)


def test_non_finite_gradient_aborts_training(monkeypatch):
    cfg = TrainConfig(steps=2, grid=SMALL)
    tr = Trainer(rx.tiny_config(1), cfg)
    before = {k: p.tensor.data.copy() for k, p in tr.params.items()}
    real_backward = ad.backward

    def poisoned(loss):
        tape = real_backward(loss)
        tr.params["output.linear.bias"].tensor.grad[:] = np.nan
        return tape

    monkeypatch.setattr(ad, "backward", poisoned)
    with pytest.raises(DivergenceError, match="output.linear.bias"):
        tr.train_step()
    for k, p in tr.params.items():
        np.testing.assert_array_equal(p.tensor.data, before[k])
