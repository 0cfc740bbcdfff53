import threading

import numpy as np
import pytest

from graphfi.graph import (ContractViolation, Graph, GraphError, Node, check, count_instances, execute,
                           infer_shapes, validate)
from graphfi.ops import OpKind
from graphfi.tensor import DType, Tensor

from helpers import single_op


def ph(name, shape, dtype="f32"):
    return Node(name, OpKind.Placeholder, attrs={"shape": shape, "dtype": dtype})


def const(name, arr):
    return Node(name, OpKind.Const), Tensor(arr)


def test_dangling_input_is_reported_by_name():
    g = Graph([ph("x", [1, 8]), Node("fc", OpKind.MatMul, ["x", "w1"])], ["fc"])
    diags = validate(g)
    assert diags and any("w1" in d for d in diags)
    with pytest.raises(GraphError):
        check(g)


def test_cycle_is_reported():
    g = Graph([Node("a", OpKind.ReLU, ["b"]), Node("b", OpKind.ReLU, ["a"])], ["a"])
    assert any("cycle" in d for d in validate(g))


def test_duplicate_ids_rejected():
    with pytest.raises(GraphError):
        Graph([ph("x", [1]), ph("x", [2])], ["x"])


def test_matmul_shape_mismatch():
    g, _ = single_op(OpKind.MatMul, [np.zeros((2, 3), np.float32)] * 2)
    diags = validate(g)
    assert diags and "[2, 3]" in diags[0]


@pytest.mark.parametrize("node,diag", [
    (Node("m", OpKind.Mean, ["x"]), "axis"),
    (Node("m", OpKind.Add, ["x"]), "expects 2 inputs"),
])
def test_attr_and_arity_checks(node, diag):
    g = Graph([ph("x", [2, 2]), node], ["m"])
    assert any(diag in d for d in validate(g))


def test_missing_output_and_orphan_constant():
    n, t = const("c", np.ones(2, np.float32))
    g = Graph([ph("x", [2])], ["y"], {"c": t})
    diags = validate(g)
    assert any("'y'" in d for d in diags) and any(d.startswith("c:") for d in diags)


def test_shape_examples():
    conv = Graph([ph("x", [1, 4, 4, 1]), ph("k", [2, 2, 1, 1]),
                  Node("c", OpKind.Conv2D, ["x", "k"], {"padding": "VALID"})], ["c"])
    assert infer_shapes(conv)["c"] == (1, 3, 3, 1)
    am = Graph([ph("x", [5, 10]), Node("a", OpKind.ArgMax, ["x"], {"axis": 1})], ["a"])
    assert infer_shapes(am)["a"] == (5,)


def test_fixture_shapes(mlp):
    g, _ = mlp
    s = infer_shapes(g)
    assert s["fc1"] == (1, 16) and s["probs"] == (1, 4) and s["label"] == (1,)


def test_execute_rejects_bad_feeds(mlp):
    g, inputs = mlp
    with pytest.raises(KeyError, match="missing feed for placeholder 'x'"):
        execute(g, {})
    with pytest.raises(ValueError):
        execute(g, {"x": Tensor(np.zeros((2, 8), np.float32))})


def test_execute_is_deterministic_and_trace_complete(mlp):
    g, inputs = mlp
    a, ta = execute(g, inputs[0])
    b, tb = execute(g, inputs[0])
    assert all(x.bit_equal(y) for x, y in zip(a, b))
    assert [e.node for e in ta.entries] == list(g.topo_order)
    assert ta.entries == tb.entries


def test_count_instances(mlp, rnn):
    _, tr = execute(mlp[0], mlp[1][0])
    c = count_instances(tr)
    assert c == {OpKind.MatMul: 2, OpKind.BiasAdd: 2, OpKind.ReLU: 1, OpKind.Softmax: 1, OpKind.ArgMax: 1}
    _, tr = execute(rnn[0], rnn[1][0])
    c = count_instances(tr)
    assert c[OpKind.MatMul] == 9 and c[OpKind.Sigmoid] == 4 and c[OpKind.Add] == 4


def test_preprocessing_nodes_are_not_injectable(cnn):
    g, inputs = cnn
    assert not g.nodes["center"].injectable
    seen = []
    execute(g, inputs[0], lambda n, i, o: seen.append(n.id))
    assert "center" not in seen and "conv1" in seen


def test_interceptor_contract():
    g, feeds = single_op(OpKind.ReLU, [np.ones((2, 2), np.float32)])
    out, _ = execute(g, feeds, lambda n, i, o: Tensor(np.full((2, 2), 7.0, np.float32)))
    assert out[0].tolist() == [[7.0, 7.0], [7.0, 7.0]]
    with pytest.raises(ContractViolation):
        execute(g, feeds, lambda n, i, o: Tensor(np.ones(3, np.float32)))
    with pytest.raises(ContractViolation):
        execute(g, feeds, lambda n, i, o: Tensor(np.ones((2, 2), np.float64)))


def test_instance_indices_per_kind(rnn):
    g, inputs = rnn
    got = {}
    execute(g, inputs[0], lambda n, i, o: got.setdefault(n.kind, []).append(i))
    for idx in got.values():
        assert idx == list(range(len(idx)))


def test_concurrent_execution_is_safe(cnn):
    g, inputs = cnn
    want = [execute(g, f)[0][0].tolist() for f in inputs]
    results = [None] * 8

    def work(k):
        results[k] = [execute(g, f)[0][0].tolist() for f in inputs]

    threads = [threading.Thread(target=work, args=(k,)) for k in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(r == want for r in results)


def test_nan_propagates_without_raising():
    g, feeds = single_op(OpKind.Sigmoid, [np.array([np.nan, 1e30], np.float32)])
    out = execute(g, feeds)[0][0]
    assert np.isnan(out.array[0]) and out.array[1] == 1.0


def test_golden_labels_are_stable(mlp, cnn):
    assert [int(execute(mlp[0], f)[0][0].item(0)) for f in mlp[1]] == [3, 3, 3, 0, 3, 3, 3, 1, 1, 1]
    assert [int(execute(cnn[0], f)[0][0].item(0)) for f in cnn[1]] == list(range(10))


def test_regressor_output_is_rank0(regressor):
    g, inputs = regressor
    out = execute(g, inputs[0])[0][0]
    assert out.rank == 0 and out.dtype is DType.F32
