import json

import pytest
from hypothesis import given, strategies as st

from treefabric.config import ConfigError, MachineConfig, load_config, parse_config


def test_defaults():
    cfg = MachineConfig()
    assert (cfg.tree_depth, cfg.banks, cfg.regs_per_bank, cfg.pe_count) == (3, 64, 32, 12)
    assert cfg.interval == 4 and cfg.leaves_per_pe == 8 and cfg.nodes_per_pe == 15


@pytest.mark.parametrize("kw", [{"tree_depth": 0}, {"banks": 15}, {"regs_per_bank": 1},
                                {"pe_count": -1}, {"fifo_depth": 1.5}, {"dma_latency": True}])
def test_rejects_bad_values(kw):
    with pytest.raises(ConfigError):
        MachineConfig(**kw)


def test_bank_floor_tracks_depth():
    MachineConfig(tree_depth=4, banks=32)
    with pytest.raises(ConfigError):
        MachineConfig(tree_depth=4, banks=31)


def test_key_value_and_json_agree():
    a = parse_config("# small\ntree_depth = 2\nbanks = 8\n")
    b = parse_config(json.dumps({"tree_depth": 2, "banks": 8}))
    assert a == b == MachineConfig(tree_depth=2, banks=8)


@pytest.mark.parametrize("text", ["banks: 8", "banks = eight", '{"bogus": 1}', "{not json"])
def test_malformed(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_explicit_interval_is_kept():
    assert MachineConfig(pipeline_interval=6).to_dict()["pipeline_interval"] == 6


@given(st.integers(1, 6), st.integers(2, 64), st.integers(1, 32))
def test_dict_round_trip(D, R, pes):
    cfg = MachineConfig(tree_depth=D, banks=2 << D, regs_per_bank=R, pe_count=pes)
    d = cfg.to_dict()
    assert MachineConfig.from_dict(d) == cfg.replace(pipeline_interval=cfg.interval)


def test_load_from_file(tmp_path):
    p = tmp_path / "m.cfg"
    p.write_text("pe_count = 3\n")
    assert load_config(p).pe_count == 3
    assert load_config(None) == MachineConfig()
