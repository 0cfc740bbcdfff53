import json
import struct
import zlib

import numpy as np
import pytest

from graphfi import fixtures
from graphfi.graph import GraphError
from graphfi.modelio import (ModelFormatError, decode_bundle, encode_bundle, load_bundle, load_model,
                             save_bundle, save_model)
from graphfi.ops import OpKind
from graphfi.tensor import DType, Tensor


def entry(name, code, shape, raw):
    b = name.encode()
    return struct.pack("<H", len(b)) + b + struct.pack("<BB", code, len(shape)) \
        + struct.pack(f"<{len(shape)}I", *shape) + raw


def blob(*entries, version=1):
    body = b"GFIW" + struct.pack("<HI", version, len(entries)) + b"".join(entries)
    return body + struct.pack("<I", zlib.crc32(body))


def test_little_endian_float():
    t = decode_bundle(blob(entry("w", 1, [1], bytes([0x00, 0x00, 0x80, 0x3F]))))
    assert t["w"].tolist() == [1.0] and t["w"].dtype is DType.F32
    be = decode_bundle(blob(entry("w", 1, [1], bytes([0x3F, 0x80, 0x00, 0x00]))))
    assert be["w"].tolist() != [1.0]


def test_empty_bundle():
    assert decode_bundle(blob()) == {}
    assert encode_bundle({}) == blob()


def test_encoding_matches_hand_built_blob():
    t = {"a": Tensor([1.5, -2.0], DType.F64), "b": Tensor([[True, False]], DType.Bool),
         "c": Tensor(np.int64(7), DType.I64)}
    want = blob(entry("a", 2, [2], np.array([1.5, -2.0], "<f8").tobytes()),
                entry("b", 4, [1, 2], bytes([1, 0])),
                entry("c", 3, [], struct.pack("<q", 7)))
    assert encode_bundle(t) == want
    back = decode_bundle(want)
    assert list(back) == ["a", "b", "c"] and all(back[k].bit_equal(t[k]) for k in t)


@pytest.mark.parametrize("mutate,msg", [
    (lambda b: b[:-5] + bytes([b[-5] ^ 1]) + b[-4:], "checksum"),
    (lambda b: b"XXXX" + b[4:], "magic"),
    (lambda b: b[:20], None),
])
def test_corruption_is_rejected(mutate, msg):
    good = encode_bundle({"w": Tensor(np.arange(4, dtype=np.float32))})
    with pytest.raises(ModelFormatError, match=msg):
        decode_bundle(mutate(good))


def test_bad_version_and_dtype():
    with pytest.raises(ModelFormatError):
        decode_bundle(blob(version=9))
    with pytest.raises(ModelFormatError):
        decode_bundle(blob(entry("w", 9, [1], b"\0" * 4)))
    with pytest.raises(ModelFormatError):
        decode_bundle(blob(entry("w", 1, [1], b"\0" * 4), entry("w", 1, [1], b"\0" * 4)))


@pytest.mark.parametrize("name", fixtures.NAMES)
def test_fixture_roundtrip_is_byte_identical(name, tmp_path):
    gp, wp, _ = fixtures.paths(name)
    g = load_model(gp, wp)
    save_model(g, tmp_path / "m.gfi", tmp_path / "m.gfiw")
    assert (tmp_path / "m.gfiw").read_bytes() == wp.read_bytes()
    assert (tmp_path / "m.gfi").read_text() == gp.read_text()


def test_shipped_fixtures_match_builders(tmp_path):
    fixtures.write_all(tmp_path)
    for p in fixtures.data_dir().rglob("*"):
        if p.is_file() and p.suffix in (".gfi", ".gfiw", ".yaml"):
            assert (tmp_path / p.relative_to(fixtures.data_dir())).read_bytes() == p.read_bytes(), p


def test_tiny_mlp_structure():
    gp, wp, _ = fixtures.paths("tiny-mlp")
    g = load_model(gp, wp)
    assert g.constants["w1"].shape == (8, 16) and g.constants["w1"].dtype is DType.F32
    assert g.kinds()[OpKind.MatMul] == 2 and g.outputs == ("label",)


def test_missing_and_extra_weights(tmp_path):
    gp, wp, _ = fixtures.paths("tiny-mlp")
    w = load_bundle(wp)
    del w["w1"]
    save_bundle(w, tmp_path / "short.gfiw")
    with pytest.raises(ModelFormatError, match="w1"):
        load_model(gp, tmp_path / "short.gfiw")
    w = load_bundle(wp)
    w["stray"] = Tensor([1.0], DType.F32)
    save_bundle(w, tmp_path / "long.gfiw")
    with pytest.raises(ModelFormatError, match="stray"):
        load_model(gp, tmp_path / "long.gfiw")


def test_const_shape_cross_check(tmp_path):
    gp, wp, _ = fixtures.paths("tiny-mlp")
    w = load_bundle(wp)
    w["w1"] = Tensor(np.zeros((16, 8), np.float32))
    save_bundle(w, tmp_path / "w.gfiw")
    with pytest.raises(ModelFormatError, match="w1"):
        load_model(gp, tmp_path / "w.gfiw")


def test_json_parse_error_has_position(tmp_path):
    (tmp_path / "g.gfi").write_text('{"format": "graphfi-graph",\n  "nodes": [,]}')
    _, wp, _ = fixtures.paths("tiny-mlp")
    with pytest.raises(ModelFormatError, match="line 2"):
        load_model(tmp_path / "g.gfi", wp)


def test_invalid_graph_document(tmp_path):
    gp, wp, _ = fixtures.paths("tiny-mlp")
    doc = json.loads(gp.read_text())
    doc["nodes"] = [n for n in doc["nodes"] if n["id"] != "relu1"]
    (tmp_path / "g.gfi").write_text(json.dumps(doc))
    with pytest.raises(GraphError, match="relu1"):
        load_model(tmp_path / "g.gfi", wp)


def test_atomic_overwrite(tmp_path):
    p = tmp_path / "b.gfiw"
    save_bundle({"a": Tensor([1.0], DType.F32)}, p)
    save_bundle({"b": Tensor([2.0], DType.F32)}, p)
    assert list(load_bundle(p)) == ["b"]
    assert [x.name for x in tmp_path.iterdir()] == ["b.gfiw"]
