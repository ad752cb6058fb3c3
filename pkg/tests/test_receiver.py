import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phaserx import autodiff as ad
from phaserx import groups, phy
from phaserx import receiver as rx
from phaserx import verification as V


def _y(rng, spec, batch=2):
    return phy.complex_normal(rng, (batch, spec.rx_antennas, spec.num_subcarriers, spec.num_symbols))


# ------------------------------------------------------------------ invariance


@pytest.mark.parametrize("n,kg", list(V.config_matrix()))
def test_forward_invariance_matrix(n, kg, rng):
    spec = V.verification_grid()
    cfg = rx.tiny_config(n, kg)
    y = _y(rng, spec)
    p64 = V.random_model(cfg, rng, np.float64)
    assert V.invariance_errors(cfg, p64, spec, y, np.float64).max() <= 1e-9
    p32 = V.random_model(cfg, rng, np.float32)
    assert V.invariance_errors(cfg, p32, spec, y, np.float32).max() <= 1e-4


@settings(max_examples=15)
@given(st.integers(1, 9), st.integers(0, 2 ** 32 - 1))
def test_invariance_property(n, seed):
    r = np.random.default_rng(seed)
    spec = V.verification_grid(rx_antennas=1)
    cfg = rx.ReceiverConfig(group_order=n, stages=(rx.StageConfig(1, 4), rx.StageConfig(1, 3, (2, 1))),
                            ft_kernel=(3, 3), input_channels=6)
    params = V.random_model(cfg, r)
    assert V.invariance_errors(cfg, params, spec, _y(r, spec, 1)).max() <= 1e-9


def test_lifting_permutation(rng):
    ok, worst, tol, _ = V.check_lifting_permutation(rng)
    assert ok, worst


def test_block_equivariance(rng):
    ok, worst, tol, detail = V.check_block_equivariance(rng)
    assert ok, detail


def test_midpoint_rotation_breaks_invariance(rng):
    ok, _, _, detail = V.check_midpoint_gap(rng)
    assert ok, detail


def test_n1_is_not_phase_invariant(rng):
    spec = V.verification_grid()
    cfg = rx.tiny_config(1)
    params = V.random_model(cfg, rng)
    err = V.invariance_errors(cfg, params, spec, _y(rng, spec), rotations=[1j])
    assert err[0] > 1e-3


# ------------------------------------------------- identity group-kernel init


def _copy_shared(src, dst):
    for name, p in dst.items():
        if name in src:
            p.tensor.data[...] = src[name].tensor.data


def test_identity_kernel_equals_group_average_of_plain_model(rng):
    spec = V.verification_grid()
    n = 5
    c1, c5 = rx.tiny_config(1), rx.tiny_config(n)
    p1 = V.random_model(c1, rng)
    p5 = rx.init_params(c5, rng, np.float64)
    _copy_shared(p1, p5)
    y = _y(rng, spec)
    g = groups.roots_of_unity(n)
    with ad.no_grad():
        out5 = rx.forward(rx.received_features(y, spec, g, np.float64), p5, c5).data
        plain = [rx.forward(rx.received_features(y * z, spec, groups.roots_of_unity(1), np.float64), p1, c1).data
                 for z in g.roots]
    assert np.abs(out5 - np.mean(plain, axis=0)).max() <= 1e-12


def test_fresh_models_output_zero(rng):
    spec = V.verification_grid()
    y = _y(rng, spec)
    for n in (1, 5):
        r = rx.Receiver(rx.tiny_config(n), spec, rx.init_params(rx.tiny_config(n), rng))
        assert np.all(r.llrs(y).data == 0)


def test_same_seed_same_shared_init():
    a = rx.init_params(rx.tiny_config(1), np.random.default_rng(3))
    b = rx.init_params(rx.tiny_config(4), np.random.default_rng(3))
    for name, p in a.items():
        np.testing.assert_array_equal(p.tensor.data, b[name].tensor.data)
    assert np.all(b["stage1.block0.gconv.weight"].tensor.data[:, 0] == 1)
    assert np.all(b["stage1.block0.gconv.weight"].tensor.data[:, 1:] == 0)


# ---------------------------------------------------------------------- shapes


def test_output_shape_default_grid(rng):
    spec = phy.make_grid_spec()
    cfg = rx.tiny_config(2)
    r = rx.Receiver(cfg, spec, V.random_model(cfg, rng, np.float32))
    out = r.llrs(_y(rng, spec, 1)[0]).data
    assert out.shape == (64, 12, 2) and out.dtype == np.float32


def test_forward_rejects_mismatch(rng):
    spec = V.verification_grid()
    cfg = rx.tiny_config(3)
    params = rx.init_params(cfg, rng)
    feats = rx.received_features(_y(rng, spec), spec, groups.roots_of_unity(2))
    with pytest.raises(ValueError, match="group axis"):
        rx.forward(feats, params, cfg)
    feats = rx.received_features(_y(rng, spec), spec, groups.roots_of_unity(3))
    with pytest.raises(ValueError, match="params"):
        rx.forward(feats, rx.init_params(rx.tiny_config(1), rng), cfg)
    bad = rx.ReceiverConfig(group_order=3, input_channels=6)
    with pytest.raises(ValueError, match="channels"):
        rx.forward(feats, params, bad)


def test_feature_layout(rng):
    spec = V.verification_grid(rx_antennas=1)
    y = _y(rng, spec, 1)
    ls = phy.ls_estimate(y, spec)
    f = rx.build_input_features(y, ls, spec, groups.roots_of_unity(4), np.float64).data
    assert f.shape == (1, 4, 6, 8, 6)
    np.testing.assert_allclose(f[0, 1, ..., 0] + 1j * f[0, 1, ..., 1], 1j * y[0, 0])
    np.testing.assert_allclose(f[0, 1, ..., 2] + 1j * f[0, 1, ..., 3], 1j * ls[0, 0])
    pg = spec.pilot_grid()
    for k in range(4):
        np.testing.assert_allclose(f[0, k, ..., 4] + 1j * f[0, k, ..., 5], pg)


def test_config_validation():
    with pytest.raises(ValueError):
        rx.ReceiverConfig(group_order=0)
    with pytest.raises(ValueError):
        rx.ReceiverConfig(group_order=3, group_kernel=4)
    with pytest.raises(ValueError):
        rx.ReceiverConfig(ft_kernel=(4, 9))


# ------------------------------------------------------------ parameter counts


def test_param_counts():
    assert rx.param_count(rx.ReceiverConfig(group_order=1)) == 166_418
    assert rx.param_count(rx.ReceiverConfig(group_order=5)) == 168_658
    assert rx.param_count(rx.tiny_config(1)) == 14_918
    assert rx.param_count(rx.tiny_config(4)) == 15_366
    ok, dev, tol, detail = V.check_param_counts()
    assert ok, detail


def test_half_width_is_about_a_quarter():
    full = rx.param_count(rx.ReceiverConfig())
    half = rx.param_count(rx.ReceiverConfig().scaled(0.5))
    assert 0.2 <= half / full <= 0.3


@given(st.integers(1, 9), st.data())
def test_closed_form_matches_table(n, data):
    kg = data.draw(st.integers(1, n))
    a = data.draw(st.integers(1, 4))
    cfg = rx.ReceiverConfig(group_order=n, group_kernel=kg, input_channels=rx.input_channels_for(a),
                            bits_per_symbol=data.draw(st.sampled_from([2, 4, 6, 8])))
    cfg = cfg.scaled(data.draw(st.sampled_from([0.25, 0.5, 1.0])))
    brute = sum(int(np.prod(s)) for _, s, _ in rx.param_table(cfg))
    assert rx.param_count(cfg) == brute
    assert rx.param_count(cfg) - rx.param_count(rx.ReceiverConfig(group_order=1, input_channels=cfg.input_channels,
                                                                  bits_per_symbol=cfg.bits_per_symbol,
                                                                  stages=cfg.stages)) \
        == rx.group_kernel_param_count(cfg)


def test_receiver_gradients(rng):
    ok, worst, tol, detail = V.check_receiver_gradients(rng)
    assert ok, (worst, detail)
