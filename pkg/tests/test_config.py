import pytest
from hypothesis import given
from hypothesis import strategies as st

from graphfi.config import (ConfigError, FaultType, FIConfig, InjectMode, dump_config, effective_probability,
                            load_config, parse_config, resolve_seed)
from graphfi.fixtures import SAMPLE_CONFIG, data_dir
from graphfi.ops import OpKind

SAMPLE = FIConfig(InjectMode.ErrorRate, FaultType.BitFlipElement, FaultType.BitFlipElement,
                (("ALL", 1.0),), skip_count=1, seed=1000)


def test_sample_document():
    cfg = parse_config(SAMPLE_CONFIG)
    assert cfg == SAMPLE
    assert load_config(data_dir() / "sample-config.yaml") == SAMPLE


def test_probability_out_of_range():
    with pytest.raises(ConfigError) as e:
        parse_config("InjectMode: errorRate\nOps:\n  - ALL = 1.5\n")
    assert any("1.5" in d for d in e.value.diagnostics)


def test_empty_document():
    with pytest.raises(ConfigError, match="InjectMode missing"):
        parse_config("")


def test_all_problems_reported_together():
    with pytest.raises(ConfigError) as e:
        parse_config("Bogus: 1\nTensorFaultType: flip\nSkipCount: -2\nSeed: x\n")
    d = e.value.diagnostics
    assert len(d) == 5  # unknown key, mode, fault type, SkipCount, Seed


@pytest.mark.parametrize("ops,diag", [
    (["Conv9 = 0.1"], "unknown operator"),
    (["ALL = 0.1", "ReLU = 0.2"], "ALL cannot be combined"),
    (["ReLU = 0.1", "relu = 0.2"], "duplicate"),
    (["ReLU = lots"], "not a number"),
])
def test_bad_ops(ops, diag):
    text = "InjectMode: errorRate\nOps:\n" + "".join(f"  - {o}\n" for o in ops)
    with pytest.raises(ConfigError, match=diag):
        parse_config(text)


def test_spellings_and_defaults():
    cfg = parse_config("InjectMode: ONEFAULTPERRUN\nTensorFaultType: bitflip_tensor\nOps: [ArgMax]\n")
    assert cfg.mode is InjectMode.OneFaultPerRun
    assert cfg.tensor_fault_type is FaultType.BitFlipTensor
    assert cfg.scalar_fault_type is FaultType.None_
    assert cfg.ops == (("ArgMax", 1.0),) and cfg.skip_count == 0 and cfg.seed is None


def test_probabilities_outside_error_rate_warn():
    cfg = parse_config("InjectMode: dynamicInstance\nOps:\n  - ReLU = 0.3\n")
    assert cfg.warnings and "ignored" in cfg.warnings[0]


def test_effective_probability():
    cfg = parse_config("InjectMode: errorRate\nOps:\n  - ReLU = 0.25\n  - MatMul: 0.5\n")
    assert effective_probability(cfg, OpKind.ReLU) == 0.25
    assert effective_probability(cfg, OpKind.MatMul) == 0.5
    assert effective_probability(cfg, OpKind.Softmax) == 0.0
    assert effective_probability(SAMPLE, OpKind.Softmax) == 1.0
    with pytest.raises(ValueError):
        effective_probability(SAMPLE.with_(mode=InjectMode.OneFaultPerRun), OpKind.ReLU)


def test_selects():
    assert SAMPLE.selects(OpKind.ArgMax)
    only = SAMPLE.with_(ops=(("ArgMax", 1.0),))
    assert only.selects(OpKind.ArgMax) and not only.selects(OpKind.ReLU)
    assert FIConfig(InjectMode.OneFaultPerRun).selects(OpKind.Equal)


def test_rank_dispatch():
    cfg = FIConfig(InjectMode.ErrorRate, FaultType.Zero, FaultType.Rand)
    assert cfg.fault_type_for(0) is FaultType.Zero and cfg.fault_type_for(2) is FaultType.Rand


def test_resolve_seed():
    assert resolve_seed(SAMPLE) == 1000 and resolve_seed(SAMPLE, 5) == 5
    s = resolve_seed(SAMPLE.with_(seed=None))
    assert isinstance(s, int) and s >= 0


kinds = st.sampled_from([k.value for k in OpKind if k not in (OpKind.Const, OpKind.Placeholder)])
configs = st.builds(
    FIConfig,
    mode=st.sampled_from(InjectMode),
    scalar_fault_type=st.sampled_from(FaultType),
    tensor_fault_type=st.sampled_from(FaultType),
    ops=st.one_of(st.just(()), st.tuples(st.tuples(st.just("ALL"), st.floats(0, 1))),
                  st.lists(st.tuples(kinds, st.floats(0, 1)), max_size=4, unique_by=lambda t: t[0]).map(tuple)),
    skip_count=st.integers(0, 5),
    seed=st.one_of(st.none(), st.integers(0, 2**40)),
)


@given(configs)
def test_dump_parse_roundtrip(cfg):
    assert parse_config(dump_config(cfg)) == cfg
