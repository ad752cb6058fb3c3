import pytest
from hypothesis import given, strategies as st

from phaserx import config as C
from phaserx.receiver import DEFAULT_STAGES, StageConfig, tiny_config


def test_defaults():
    cfg = C.default_config()
    assert cfg.receiver.group_order == 1 and cfg.receiver.stages == DEFAULT_STAGES
    assert cfg.receiver.input_channels == 10 and cfg.receiver.bits_per_symbol == 2
    assert cfg.train.steps == 5000 and cfg.train.batch_size == 16 and cfg.train.lr == 1e-3
    assert cfg.grid.pilot_symbols == (2, 11) and cfg.grid.rx_antennas == 2
    assert cfg.sweep.max_blocks == 2000 and cfg.sweep.target_error_blocks == 200


def test_round_trip_default():
    cfg = C.default_config()
    assert C.loads(C.dumps(cfg)) == cfg
    assert C.dumps(C.loads(C.dumps(cfg))) == C.dumps(cfg)


def test_parse_example_file():
    text = """
    [receiver]
    group_order = 4
    group_kernel = 1
    width = 0.25
    [grid]
    constellation = qam16
    num_subcarriers = 8
    [channel]
    kind = rician   ; with a comment
    los_magnitude = 0.5
    [training]
    precision = f64
    milestones = 10,20
    random_global_phase = no
    [sweep]
    ebno = 0, 5, 10
    """
    cfg = C.loads("\n".join(line.strip() for line in text.splitlines()))
    assert cfg.receiver.stages == tiny_config(4).stages
    assert cfg.receiver.group_kernel == 1
    assert cfg.receiver.bits_per_symbol == 4
    assert cfg.channel.kind == "rician" and cfg.channel.los_magnitude == 0.5
    assert cfg.train.precision == "f64" and cfg.train.milestones == (10, 20)
    assert cfg.train.random_global_phase is False
    assert cfg.sweep.ebno == (0.0, 5.0, 10.0)
    assert C.loads(C.dumps(cfg)) == cfg


@pytest.mark.parametrize("text", [
    "[receiver]\ncolour = red\n",
    "[extras]\na = 1\n",
    "[training]\nprecision = f16\n",
    "[grid]\nconstellation = qam32\n",
    "[channel]\nkind = fog\n",
    "[receiver]\ngroup_order = 3\ngroup_kernel = 5\n",
    "[receiver]\nstages = 5y32\n",
    "[training]\nlr = -1\n",
    "[training]\nsteps = many\n",
    "not an ini file",
])
def test_bad_configs_rejected(text):
    with pytest.raises(C.ConfigError):
        C.loads(text)


def test_stage_format_round_trip():
    stages = (StageConfig(2, 8, (1, 1)), StageConfig(1, 12, (2, 3)))
    assert C.parse_stages(C.format_stages(stages)) == stages
    assert C.parse_stages("5x32") == (StageConfig(5, 32, (1, 1)),)


@given(st.integers(1, 9), st.sampled_from(["awgn", "rayleigh", "rician", "tdl"]),
       st.sampled_from(["qpsk", "qam16", "qam64", "qam256"]), st.sampled_from(["f32", "f64"]),
       st.integers(0, 2 ** 31), st.lists(st.floats(-10, 30, allow_nan=False), min_size=1, max_size=5))
def test_overrides_round_trip(n, channel, constellation, precision, seed, ebno):
    cfg = C.default_config().with_overrides(group_order=n, channel=channel, constellation=constellation,
                                            precision=precision, seed=seed, ebno=ebno)
    assert cfg.receiver.group_order == n and cfg.receiver.group_kernel is None
    assert cfg.channel.kind == channel and cfg.grid.constellation == constellation
    assert cfg.receiver.bits_per_symbol == {"qpsk": 2, "qam16": 4, "qam64": 6, "qam256": 8}[constellation]
    assert cfg.train.seed == seed and cfg.train.precision == precision
    assert C.loads(C.dumps(cfg)) == cfg


def test_group_kernel_override():
    cfg = C.default_config().with_overrides(group_order=4, group_kernel=2)
    assert cfg.receiver.kernel_size == 2
    with pytest.raises(ValueError):
        C.default_config().with_overrides(group_order=2, group_kernel=3)


def test_load_from_file(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[training]\nsteps = 7\n")
    assert C.load(p).train.steps == 7
    with pytest.raises(OSError):
        C.load(tmp_path / "missing.ini")
