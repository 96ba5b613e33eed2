# Network checkpoints as .npz key-value archives

import io
from pathlib import Path

import numpy as np

from core.nn.net import Activation, FeedForwardNet
from core.utils.errors import ParseError


def save_net(net: FeedForwardNet, path) -> Path:
    path = Path(path)
    arrays = {
        "layer_dims": np.asarray(net.layer_dims, dtype=np.int64),
        "activation": np.asarray(net.activation.name),
        "slope": np.asarray(net.activation.slope, dtype=np.float64),
    }
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"W{i}"] = np.ascontiguousarray(w, dtype=np.float64)
        arrays[f"b{i}"] = np.ascontiguousarray(b, dtype=np.float64)
    buffer = io.BytesIO()
    np.savez(buffer, **arrays)
    path.write_bytes(buffer.getvalue())
    return path


def load_net(path) -> FeedForwardNet:
    with np.load(Path(path), allow_pickle=False) as data:
        if "layer_dims" not in data:
            raise ParseError("checkpoint is missing layer_dims", row=None, column="layer_dims")
        dims = [int(d) for d in data["layer_dims"]]
        activation = Activation(str(data["activation"]), float(data["slope"]))
        weights = [np.array(data[f"W{i}"]) for i in range(len(dims) - 1)]
        biases = [np.array(data[f"b{i}"]) for i in range(len(dims) - 1)]
    return FeedForwardNet(dims, weights, biases, activation)
