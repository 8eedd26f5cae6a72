"""Feed-forward network parameters with exact reverse-mode gradients.

Networks are fixed-topology MLPs: relu hidden layers and a tanh, sigmoid
or linear output head. All parameters of a network live in one flat
float64 buffer; per-layer weight matrices and bias vectors are views into
it, so optimizer and target updates are single fused passes.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from gcrl.errors import NumericError, ShapeError
from gcrl.nn.backend import kernels

HEAD_CODES = {"tanh": 0, "sigmoid": 1, "linear": 2}

DEFAULT_HIDDEN = (256, 256)

_CHECKPOINT_MAGIC = b"GCRL-CHECKPOINT-v1\n"


def _param_count(layer_sizes) -> int:
    return sum(
        layer_sizes[i] * layer_sizes[i + 1] + layer_sizes[i + 1]
        for i in range(len(layer_sizes) - 1)
    )


def _build_views(layer_sizes, flat):
    weights, biases = [], []
    offset = 0
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        weights.append(flat[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out))
        offset += fan_in * fan_out
        biases.append(flat[offset : offset + fan_out])
        offset += fan_out
    return weights, biases


@dataclass
class NetworkParams:
    """All weights and biases of one MLP (``weights``/``biases`` are views
    into ``flat``). Also used as the container for gradients of the same
    shape."""

    layer_sizes: list
    head: str
    flat: np.ndarray
    weights: list = field(repr=False)
    biases: list = field(repr=False)

    @classmethod
    def create(cls, layer_sizes, head, flat=None):
        layer_sizes = [int(s) for s in layer_sizes]
        if len(layer_sizes) < 2 or any(s < 1 for s in layer_sizes):
            raise ShapeError(f"invalid layer sizes {layer_sizes}")
        if head not in HEAD_CODES:
            raise ValueError(f"unknown head {head!r}, expected one of {sorted(HEAD_CODES)}")
        if flat is None:
            flat = np.zeros(_param_count(layer_sizes))
        elif flat.shape != (_param_count(layer_sizes),):
            raise ShapeError(
                f"flat buffer has {flat.shape[0]} entries, "
                f"layer sizes {layer_sizes} need {_param_count(layer_sizes)}"
            )
        weights, biases = _build_views(layer_sizes, flat)
        return cls(layer_sizes, head, flat, weights, biases)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "NetworkParams":
        return NetworkParams.create(self.layer_sizes, self.head, self.flat.copy())

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams.create(self.layer_sizes, self.head)


def init_network(layer_sizes, head, rng) -> NetworkParams:
    """Seeded uniform fan-in initialization: each layer's weights and bias
    are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    params = NetworkParams.create(layer_sizes, head)
    for w, b in zip(params.weights, params.biases):
        bound = 1.0 / np.sqrt(w.shape[0])
        w[...] = rng.uniform(-bound, bound, size=w.shape)
        b[...] = rng.uniform(-bound, bound, size=b.shape)
    return params


def _as_batch(x, dim, what):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != dim:
        raise ShapeError(f"{what} has shape {x.shape}, expected (n, {dim})")
    return x


def forward(params: NetworkParams, x) -> np.ndarray:
    """Apply the network. Accepts a single vector or an (n, in) batch and
    returns the matching shape."""
    single = np.ndim(x) == 1
    xb = _as_batch(x, params.input_dim, "input")
    y, _ = kernels.mlp_forward(
        params.weights, params.biases, xb, HEAD_CODES[params.head], False
    )
    return y[0] if single else y


def forward_cache(params: NetworkParams, x):
    """Batch forward keeping per-layer activations for ``backward``."""
    xb = _as_batch(x, params.input_dim, "input")
    return kernels.mlp_forward(
        params.weights, params.biases, xb, HEAD_CODES[params.head], True
    )


def backward(params: NetworkParams, cache, gy):
    """Exact gradient of <output, gy> for the forward pass that produced
    ``cache``. Returns ``(grad, gx)``: a parameter-shaped container and the
    gradient with respect to the input batch."""
    single = np.ndim(gy) == 1
    gyb = _as_batch(gy, params.output_dim, "upstream gradient")
    if gyb.shape[0] != cache[0].shape[0]:
        raise ShapeError(
            f"upstream gradient batch {gyb.shape[0]} != forward batch {cache[0].shape[0]}"
        )
    grad = params.zeros_like()
    gx = kernels.mlp_backward(
        params.weights, cache, gyb, HEAD_CODES[params.head], grad.weights, grad.biases
    )
    return grad, (gx[0] if single else gx)


def backward_input(params: NetworkParams, cache, gy) -> np.ndarray:
    """Input gradient only; cheaper than ``backward`` when parameter
    gradients are not needed."""
    gyb = _as_batch(gy, params.output_dim, "upstream gradient")
    return kernels.mlp_input_grad(params.weights, cache, gyb, HEAD_CODES[params.head])


@dataclass
class AdamState:
    """Adaptive-moment accumulators tracking one network's flat buffer."""

    step_count: int
    m: np.ndarray
    v: np.ndarray
    learning_rate: float
    beta1: float
    beta2: float
    epsilon: float


def adam_init(params: NetworkParams, learning_rate=1e-3, beta1=0.9, beta2=0.999,
              epsilon=1e-8) -> AdamState:
    return AdamState(
        step_count=0,
        m=np.zeros_like(params.flat),
        v=np.zeros_like(params.flat),
        learning_rate=float(learning_rate),
        beta1=float(beta1),
        beta2=float(beta2),
        epsilon=float(epsilon),
    )


def adam_step(params: NetworkParams, grad: NetworkParams, state: AdamState):
    """One optimizer step, in place. Returns ``(params, state)``."""
    if grad.layer_sizes != params.layer_sizes:
        raise ShapeError(
            f"gradient layers {grad.layer_sizes} != parameter layers {params.layer_sizes}"
        )
    if state.m.shape != params.flat.shape:
        raise ShapeError("optimizer state does not match parameter buffer")
    if not np.isfinite(grad.flat).all():
        for idx, (w, b) in enumerate(zip(grad.weights, grad.biases)):
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise NumericError(f"non-finite gradient in layer {idx}")
        raise NumericError("non-finite gradient")
    state.step_count += 1
    kernels.adam_step(
        params.flat, grad.flat, state.m, state.v, state.step_count,
        state.learning_rate, state.beta1, state.beta2, state.epsilon,
    )
    return params, state


@dataclass
class TargetParams:
    """Slowly moving shadow copy of a network for bootstrap targets."""

    params: NetworkParams
    polyak_rate: float

    @classmethod
    def create(cls, source: NetworkParams, polyak_rate=0.005):
        return cls(source.copy(), float(polyak_rate))


def polyak_update(target: TargetParams, source: NetworkParams) -> TargetParams:
    """target <- (1 - rate) * target + rate * source, in place."""
    if target.params.layer_sizes != source.layer_sizes:
        raise ShapeError(
            f"target layers {target.params.layer_sizes} != source layers {source.layer_sizes}"
        )
    kernels.polyak(target.params.flat, source.flat, target.polyak_rate)
    return target


def save_checkpoint(path, networks, meta=None) -> None:
    """Write named networks to a versioned binary container.

    Layout: magic line, one JSON header line (layer sizes, head tags, byte
    offsets, user metadata), then the raw row-major float64 buffers. Output
    bytes depend only on the contents, so identical networks produce
    identical files.
    """
    entries = {}
    offset = 0
    names = sorted(networks)
    for name in names:
        net = networks[name]
        entries[name] = {
            "layer_sizes": list(net.layer_sizes),
            "head": net.head,
            "dtype": "<f8",
            "offset": offset,
            "size": int(net.flat.shape[0]),
        }
        offset += net.flat.shape[0]
    header = json.dumps(
        {"meta": meta or {}, "networks": entries}, sort_keys=True,
        separators=(",", ":"),
    )
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(header.encode("utf-8"))
        fh.write(b"\n")
        for name in names:
            fh.write(networks[name].flat.astype("<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint written by ``save_checkpoint``.

    Returns ``(networks, meta)``.
    """
    with open(path, "rb") as fh:
        magic = fh.readline()
        if magic != _CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not a gcrl checkpoint")
        header = json.loads(fh.readline().decode("utf-8"))
        blob = fh.read()
    networks = {}
    for name, entry in header["networks"].items():
        start = entry["offset"] * 8
        stop = start + entry["size"] * 8
        flat = np.frombuffer(blob[start:stop], dtype="<f8").astype(np.float64)
        if not np.isfinite(flat).all():
            raise NumericError(f"checkpoint network {name!r} has non-finite values")
        networks[name] = NetworkParams.create(entry["layer_sizes"], entry["head"], flat)
    return networks, header["meta"]
