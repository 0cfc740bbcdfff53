"""Small fixture networks with fixed, seeded weights and synthetic inputs.

The shipped bundles under ``graphfi/data`` were written by ``write_all``;
``python -m graphfi.fixtures DIR`` regenerates them byte-for-byte.
"""

from __future__ import annotations

import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .graph import Graph, Node, OpKind as K, execute
from .modelio import load_bundle, load_model, save_bundle, save_model
from .tensor import DType, Tensor

NAMES = ("tiny-mlp", "tiny-cnn", "tiny-regressor", "rnn4")
N_INPUTS = 10

SAMPLE_CONFIG = """\
# Example campaign config: one bit flip in every operator output.

# root seed; each run derives its own stream from it
Seed: 1000

# fault for rank-0 outputs and for everything else
# None, Rand, Zero, Rand-element, bitFlip-element, bitFlip-tensor
ScalarFaultType: bitFlip-element
TensorFaultType: bitFlip-element

# operator kinds and per-invocation probabilities
Ops:
  - ALL = 1.0

# invocations of each node to let through untouched first
SkipCount: 1

# errorRate, dynamicInstance or oneFaultPerRun
InjectMode: "errorRate"
"""


def _f32(a) -> Tensor:
    return Tensor(np.asarray(a, dtype=np.float32), DType.F32)


def _he(rng, *shape, fan_in=None):
    fan_in = fan_in or shape[0]
    return _f32(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape))


def _ph(name, shape):
    return Node(name, K.Placeholder, attrs={"shape": list(shape), "dtype": "f32"})


def tiny_mlp() -> Graph:
    rng = np.random.default_rng(101)
    c = {"w1": _he(rng, 8, 16), "b1": _f32(rng.normal(0, 0.1, 16)),
         "w2": _he(rng, 16, 4), "b2": _f32(rng.normal(0, 0.1, 4))}
    nodes = [
        _ph("x", (1, 8)),
        *(Node(k, K.Const) for k in c),
        Node("fc1", K.MatMul, ["x", "w1"]),
        Node("fc1_bias", K.BiasAdd, ["fc1", "b1"]),
        Node("relu1", K.ReLU, ["fc1_bias"]),
        Node("fc2", K.MatMul, ["relu1", "w2"]),
        Node("fc2_bias", K.BiasAdd, ["fc2", "b2"]),
        Node("probs", K.Softmax, ["fc2_bias"]),
        Node("label", K.ArgMax, ["probs"], {"axis": 1}),
    ]
    return Graph(nodes, ["label"], c, name="tiny-mlp")


def _fit_readout(features: np.ndarray, labels: np.ndarray, n_classes: int, ridge: float = 1e-2,
                 scale: float = 10.0):
    """Closed-form ridge readout mapping features to centred one-hot targets."""
    x = np.hstack([features, np.ones((len(features), 1))]).astype(np.float64)
    y = scale * (np.eye(n_classes)[labels] - 1.0 / n_classes)
    w = np.linalg.solve(x.T @ x + ridge * np.eye(x.shape[1]), x.T @ y)
    return _f32(w[:-1]), _f32(w[-1])


def _templates(seed: int, n_classes: int, shape) -> np.ndarray:
    return np.random.default_rng(seed).random((n_classes, *shape))


def _class_samples(templates: np.ndarray, count: int, noise: float, rng, labels=None):
    if labels is None:
        labels = rng.integers(len(templates), size=count)
    x = templates[labels] + rng.normal(0, noise, (count, *templates.shape[1:]))
    return x, np.asarray(labels)


def _features(g: Graph, feed: str, node: str, xs) -> np.ndarray:
    sub = Graph(g.nodes.values(), [node], g.constants, name=g.name)
    return np.stack([execute(sub, {feed: _f32(x[None])})[0][0].flat() for x in xs])


CNN_NOISE = 0.15
CNN_RIDGE = 1.0


def tiny_cnn() -> Graph:
    rng = np.random.default_rng(202)
    c = {
        "pixel_mean": _f32(0.5),
        "k1": _he(rng, 3, 3, 1, 4, fan_in=9), "cb1": _f32(rng.normal(0, 0.05, 4)),
        "k2": _he(rng, 3, 3, 4, 8, fan_in=36), "cb2": _f32(rng.normal(0, 0.05, 8)),
        "w3": _f32(np.zeros((128, 10))), "b3": _f32(np.zeros(10)),
    }
    g = _tiny_cnn_graph(c)
    xs, ys = _class_samples(_templates(2020, 10, (8, 8, 1)), 400, CNN_NOISE, rng)
    c["w3"], c["b3"] = _fit_readout(_features(g, "image", "flatten", xs), ys, 10, ridge=CNN_RIDGE)
    return _tiny_cnn_graph(c)


def _tiny_cnn_graph(c) -> Graph:
    nodes = [
        _ph("image", (1, 8, 8, 1)),
        *(Node(k, K.Const) for k in c),
        # input normalisation is not a fault site
        Node("center", K.Sub, ["image", "pixel_mean"], {"preprocessing": True}, injectable=False),
        Node("conv1", K.Conv2D, ["center", "k1"], {"strides": [1, 1], "padding": "SAME"}),
        Node("conv1_bias", K.BiasAdd, ["conv1", "cb1"]),
        Node("relu1", K.ReLU, ["conv1_bias"]),
        Node("pool1", K.MaxPool, ["relu1"], {"window": [2, 2], "strides": [2, 2], "padding": "VALID"}),
        Node("conv2", K.Conv2D, ["pool1", "k2"], {"strides": [1, 1], "padding": "SAME"}),
        Node("conv2_bias", K.BiasAdd, ["conv2", "cb2"]),
        Node("relu2", K.ReLU, ["conv2_bias"]),
        Node("flatten", K.Reshape, ["relu2"], {"shape": [1, -1]}),
        Node("fc", K.MatMul, ["flatten", "w3"]),
        Node("fc_bias", K.BiasAdd, ["fc", "b3"]),
        Node("probs", K.Softmax, ["fc_bias"]),
        Node("label", K.ArgMax, ["probs"], {"axis": 1}),
    ]
    return Graph(nodes, ["label"], c, name="tiny-cnn")


def tiny_regressor() -> Graph:
    """Steering-angle stand-in: a scalar output in degrees."""
    rng = np.random.default_rng(303)
    c = {"w1": _he(rng, 6, 12), "b1": _f32(rng.normal(0, 0.1, 12)),
         "w2": _f32(rng.normal(0, 0.5, (12, 1))), "b2": _f32([0.0]),
         "degrees": _f32(30.0)}
    nodes = [
        _ph("features", (1, 6)),
        *(Node(k, K.Const) for k in c),
        Node("fc1", K.MatMul, ["features", "w1"]),
        Node("fc1_bias", K.BiasAdd, ["fc1", "b1"]),
        Node("act1", K.Sigmoid, ["fc1_bias"]),
        Node("fc2", K.MatMul, ["act1", "w2"]),
        Node("fc2_bias", K.BiasAdd, ["fc2", "b2"]),
        Node("scaled", K.Mul, ["fc2_bias", "degrees"]),
        Node("angle", K.Reshape, ["scaled"], {"shape": []}),
    ]
    return Graph(nodes, ["angle"], c, name="tiny-regressor")


RNN_NOISE = 0.3


def rnn4(steps: int = 4) -> Graph:
    """Elman RNN unrolled over ``steps`` inputs, shared weights."""
    rng = np.random.default_rng(404)
    c = {"wx": _he(rng, 3, 8), "wh": _f32(rng.normal(0, 0.3, (8, 8))),
         "bh": _f32(rng.normal(0, 0.1, 8)), "h0": _f32(np.zeros((1, 8))),
         "wo": _f32(np.zeros((8, 5))), "bo": _f32(np.zeros(5))}
    g = _rnn_graph(c, steps)
    xs, ys = _class_samples(_templates(4040, 5, (steps, 3)) * 2 - 1, 400, RNN_NOISE, rng)
    sub = Graph(g.nodes.values(), [f"h{steps}"], g.constants, name=g.name)
    feats = np.stack([execute(sub, {f"x{t}": _f32(x[t][None]) for t in range(steps)})[0][0].flat() for x in xs])
    c["wo"], c["bo"] = _fit_readout(feats, ys, 5)
    return _rnn_graph(c, steps)


def _rnn_graph(c, steps) -> Graph:
    nodes = [_ph(f"x{t}", (1, 3)) for t in range(steps)]
    nodes += [Node(k, K.Const) for k in c]
    h = "h0"
    for t in range(steps):
        nodes += [
            Node(f"xw{t}", K.MatMul, [f"x{t}", "wx"]),
            Node(f"hw{t}", K.MatMul, [h, "wh"]),
            Node(f"pre{t}", K.Add, [f"xw{t}", f"hw{t}"]),
            Node(f"z{t}", K.BiasAdd, [f"pre{t}", "bh"]),
            Node(f"h{t + 1}", K.Sigmoid, [f"z{t}"]),
        ]
        h = f"h{t + 1}"
    nodes += [
        Node("logits", K.MatMul, [h, "wo"]),
        Node("logits_bias", K.BiasAdd, ["logits", "bo"]),
        Node("probs", K.Softmax, ["logits_bias"]),
        Node("label", K.ArgMax, ["probs"], {"axis": 1}),
    ]
    return Graph(nodes, ["label"], c, name="rnn4")


BUILDERS = {"tiny-mlp": tiny_mlp, "tiny-cnn": tiny_cnn, "tiny-regressor": tiny_regressor, "rnn4": rnn4}


def make_inputs(g: Graph, count: int = N_INPUTS, seed: int = 7) -> list[dict[str, Tensor]]:
    """Synthetic inputs; classifier inputs cycle through the classes."""
    rng = np.random.default_rng([seed, sum(map(ord, g.name))])
    if g.name == "tiny-cnn":
        xs, _ = _class_samples(_templates(2020, 10, (8, 8, 1)), count, CNN_NOISE, rng,
                               labels=np.arange(count) % 10)
        return [{"image": _f32(x[None])} for x in xs]
    if g.name == "rnn4":
        xs, _ = _class_samples(_templates(4040, 5, (4, 3)) * 2 - 1, count, RNN_NOISE, rng,
                               labels=np.arange(count) % 5)
        return [{f"x{t}": _f32(x[t][None]) for t in range(4)} for x in xs]
    return [{p: _f32(rng.normal(0, 1, g.nodes[p].attrs["shape"])) for p in g.placeholders}
            for _ in range(count)]


def write_all(root) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for name, build in BUILDERS.items():
        g = build()
        save_model(g, root / f"{name}.gfi", root / f"{name}.gfiw")
        d = root / f"{name}-inputs"
        d.mkdir(exist_ok=True)
        for i, feeds in enumerate(make_inputs(g)):
            save_bundle(feeds, d / f"in{i}.gfiw")
    (root / "sample-config.yaml").write_text(SAMPLE_CONFIG)


def data_dir() -> Path:
    return Path(str(resources.files("graphfi") / "data"))


def paths(name: str) -> tuple[Path, Path, list[Path]]:
    """(graph document, weights bundle, input bundles) of a shipped fixture."""
    d = data_dir()
    return d / f"{name}.gfi", d / f"{name}.gfiw", [d / f"{name}-inputs" / f"in{i}.gfiw" for i in range(N_INPUTS)]


def load(name: str) -> tuple[Graph, list[dict[str, Tensor]]]:
    g, w, ins = paths(name)
    return load_model(g, w), [load_bundle(p) for p in ins]


if __name__ == "__main__":
    write_all(sys.argv[1] if len(sys.argv) > 1 else data_dir())
