from dataclasses import fields

import pytest
from hypothesis import given, settings, strategies as st

from meshchan.config import ScenarioConfig, load_config, parse_config, serialize_config
from meshchan.topology import ConfigError


def test_roundtrip_defaults():
    cfg = ScenarioConfig()
    assert parse_config(serialize_config(cfg)) == cfg


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), horizon=st.floats(5, 500), radios=st.integers(2, 6),
       channels=st.sampled_from((3, 12)), w1=st.floats(0, 1), mac=st.booleans(),
       policy=st.sampled_from(("arachne", "single", "tree")))
def test_roundtrip(seed, horizon, radios, channels, w1, mac, policy):
    cfg = ScenarioConfig(seed=seed, horizon=horizon, warmup=horizon / 4, radios=radios,
                         channels=channels, w1=w1, w2=1 - w1, measure_after_convergence=mac,
                         policy=policy).validate()
    back = parse_config(serialize_config(cfg))
    assert back == cfg
    assert serialize_config(back) == serialize_config(cfg)


def test_every_field_serialized():
    text = serialize_config(ScenarioConfig())
    for f in fields(ScenarioConfig):
        assert f"{f.name} = " in text


@pytest.mark.parametrize("text", [
    "[topology]\nchannels = 5\n",
    "[scenario]\npolicy = magic\n",
    "[scenario]\nbogus = 1\n",
    "[topology]\nseed = 3\n",
    "[topology]\nn_aps = many\n",
    "[protocol]\nw1 = 0.9\n",
    "not an ini",
])
def test_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")


def test_overrides_validate():
    cfg = ScenarioConfig().with_overrides(seed=7, radios=None)
    assert cfg.seed == 7 and cfg.radios == 2
    with pytest.raises(ConfigError):
        ScenarioConfig().with_overrides(radios=1)
