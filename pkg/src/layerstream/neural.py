"""Small dense networks over a flat float64 parameter vector.

Layout of the flat vector: for each layer, the ``(fan_in, fan_out)`` weight
matrix in row-major order followed by the ``fan_out`` biases. Hidden layers
use tanh; the output is either a masked softmax over two actions (``policy``)
or a single linear unit (``value``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .rng import XorShift64Star

HEADS = ("policy", "value")


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class NetSpec:
    layer_sizes: tuple[int, ...]
    head: str = "policy"
    hidden_activation: str = "tanh"

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise DimensionError("layer_sizes needs at least an input and an output size")
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}")
        if self.hidden_activation != "tanh":
            raise ValueError("only tanh hidden units are supported")
        if self.head == "value" and sizes[-1] != 1:
            raise DimensionError("value head has one output")
        if self.head == "policy" and sizes[-1] != 2:
            raise DimensionError("policy head has two outputs")

    @property
    def num_params(self) -> int:
        s = self.layer_sizes
        return sum(a * b + b for a, b in zip(s[:-1], s[1:]))

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    def to_dict(self) -> dict:
        return {"layer_sizes": list(self.layer_sizes), "head": self.head,
                "hidden_activation": self.hidden_activation}

    @classmethod
    def from_dict(cls, d: dict) -> "NetSpec":
        return cls(tuple(d["layer_sizes"]), d.get("head", "policy"), d.get("hidden_activation", "tanh"))


class Network:
    """Parameters plus spec. ``params`` is owned; use ``clone`` before mutating a shared copy."""

    def __init__(self, spec: NetSpec, params: np.ndarray):
        params = np.ascontiguousarray(params, dtype=np.float64)
        if params.shape != (spec.num_params,):
            raise DimensionError(f"expected {spec.num_params} parameters, got {params.shape}")
        self.spec = spec
        self.params = params
        self._sizes = np.array(spec.layer_sizes, dtype=np.int64)

    @classmethod
    def init(cls, spec: NetSpec, seed: int, output_scale: float = 0.01) -> "Network":
        """Fan-in scaled uniform init: W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases.

        The output layer is further multiplied by ``output_scale`` so a fresh
        policy is close to uniform. Weights are drawn in flat-vector order.
        """
        rng = XorShift64Star(seed)
        chunks = []
        sizes = spec.layer_sizes
        for li, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / np.sqrt(a)
            if li == len(sizes) - 2:
                bound *= output_scale
            chunks.append(np.array([rng.uniform(-bound, bound) for _ in range(a * b)]))
            chunks.append(np.zeros(b))
        return cls(spec, np.concatenate(chunks))

    def clone(self) -> "Network":
        return Network(self.spec, self.params.copy())

    def axpy(self, alpha: float, direction: np.ndarray) -> None:
        self.params += alpha * direction

    def layers(self, params: np.ndarray | None = None):
        """Yield ``(W, b)`` views into the flat vector."""
        p = self.params if params is None else params
        off = 0
        s = self.spec.layer_sizes
        for a, b in zip(s[:-1], s[1:]):
            yield p[off:off + a * b].reshape(a, b), p[off + a * b:off + a * b + b]
            off += a * b + b

    # --------------------------------------------------------------- forward

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.spec.input_size:
            raise DimensionError(f"input has {x.shape[-1]} features, network expects {self.spec.input_size}")
        return x

    def raw(self, x: np.ndarray) -> np.ndarray:
        """Output-layer pre-activations for one sample (fast path)."""
        x = self._check_input(x)
        return kernels.mlp_forward(self.params, self._sizes, x)

    def forward_batch(self, X: np.ndarray):
        """Batched forward returning ``(outputs, cache)`` for :meth:`backward`."""
        X = np.atleast_2d(self._check_input(X))
        acts = [X]
        h = X
        layers = list(self.layers())
        for li, (W, b) in enumerate(layers):
            h = h @ W + b
            if li < len(layers) - 1:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def backward(self, acts: list[np.ndarray], upstream: np.ndarray) -> np.ndarray:
        """Parameter gradient of ``sum(upstream * outputs)`` for the batch in ``acts``."""
        grad = np.empty_like(self.params)
        layers = list(self.layers())
        g = np.asarray(upstream, dtype=np.float64).reshape(acts[-1].shape)
        off_end = self.params.size
        for li in range(len(layers) - 1, -1, -1):
            W, b = layers[li]
            a_in = acts[li]
            nw, nb = W.size, b.size
            grad[off_end - nb:off_end] = g.sum(axis=0)
            grad[off_end - nb - nw:off_end - nb] = (a_in.T @ g).ravel()
            off_end -= nw + nb
            if li > 0:
                g = (g @ W.T) * (1.0 - a_in * a_in)
        return grad

    # ----------------------------------------------------------------- I/O

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "params": [float(v) for v in self.params]}

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        return cls(NetSpec.from_dict(d["spec"]), np.array(d["params"], dtype=np.float64))


def masked_softmax(logits: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(net: Network, x: np.ndarray, mask: np.ndarray | None = None):
    """Action probabilities (policy head) or a scalar value (value head)."""
    out = net.raw(x)
    if net.spec.head == "value":
        return float(out[0])
    return masked_softmax(out, mask)


def backward(net: Network, x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. parameters of ``upstream . raw_output(x)``.

    For the policy head the raw output is the logit vector, so callers chain
    through the softmax themselves (see :func:`log_prob_grad_logits`).
    """
    _, acts = net.forward_batch(x)
    return net.backward(acts, upstream)


def log_prob_grad_logits(probs: np.ndarray, action: int) -> np.ndarray:
    """d log p(action) / d logits = onehot(action) - p."""
    g = -np.asarray(probs, dtype=np.float64).copy()
    g[..., action] += 1.0
    return g


def save_network(net: Network, path: str | Path, extra: dict | None = None) -> None:
    payload = net.to_dict()
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=None, separators=(",", ":")) + "\n", encoding="utf-8")


def load_network(path: str | Path) -> tuple[Network, dict]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    extra = {k: v for k, v in data.items() if k not in ("spec", "params")}
    return Network.from_dict(data), extra
