"""Deterministic dense-network training kernel.

A model is a stack of V dense blocks: block j maps width dim_{j-1} to
dim_j, applies ReLU except on the final block, whose linear output feeds
softmax cross-entropy. Parameters live in a single flat float64 vector
so that segment views (weak / aggregator / server block ranges) are
cheap, contiguous, and non-aliasing, and so that averaging and SGD are
bit-reproducible elementwise operations.

The auxiliary local-loss head is a single dense block from the cut
layer's width to the class count, represented as a one-block ParamSet.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

_MAGIC = b"CSFP"
_HEADER = struct.Struct("<4sIQ")  # magic, block count, flat length


@dataclass(frozen=True)
class NetSpec:
    """Architecture: input width, per-block output widths, init seed.

    layer_dims holds the input width followed by each block's output
    width, so a spec with V blocks has V+1 entries and layer_dims[-1]
    must equal num_classes.
    """

    layer_dims: tuple[int, ...]
    num_classes: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        if len(self.layer_dims) < 2:
            raise ValueError("layer_dims needs an input width and at least one block")
        if any(d < 1 for d in self.layer_dims):
            raise ValueError(f"layer widths must be positive, got {self.layer_dims}")
        if self.layer_dims[-1] != self.num_classes:
            raise ValueError(
                f"last width {self.layer_dims[-1]} must equal num_classes {self.num_classes}"
            )

    @property
    def num_blocks(self) -> int:
        return len(self.layer_dims) - 1


@dataclass(frozen=True)
class Batch:
    """One minibatch: inputs (samples x input width), integer class labels."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.inputs.ndim != 2:
            raise ValueError(f"inputs must be 2-D, got shape {self.inputs.shape}")
        if self.labels.shape != (self.inputs.shape[0],):
            raise ValueError(
                f"labels shape {self.labels.shape} does not match "
                f"{self.inputs.shape[0]} samples"
            )
        if self.inputs.shape[0] and self.labels.min() < 0:
            raise ValueError("labels must be non-negative class indices")


class ParamSet:
    """Flat float64 parameter vector for a stack of dense blocks.

    Blocks are stored consecutively (weights row-major, then biases), so
    the blocks lo..hi occupy one contiguous slice and segment() returns a
    writable view into it. Disjoint block ranges never alias.
    """

    __slots__ = ("dims", "flat", "_offsets")

    def __init__(self, dims, flat: np.ndarray | None = None):
        self.dims = tuple(int(d) for d in dims)
        if len(self.dims) < 2:
            raise ValueError("need an input width and at least one block")
        offsets = [0]
        for fan_in, fan_out in zip(self.dims[:-1], self.dims[1:]):
            offsets.append(offsets[-1] + fan_in * fan_out + fan_out)
        self._offsets = tuple(offsets)
        if flat is None:
            flat = np.zeros(offsets[-1], dtype=np.float64)
        else:
            flat = np.asarray(flat, dtype=np.float64)
            if flat.shape != (offsets[-1],):
                raise ValueError(
                    f"flat length {flat.shape} does not match expected ({offsets[-1]},)"
                )
        self.flat = flat

    @property
    def num_blocks(self) -> int:
        return len(self.dims) - 1

    @property
    def size(self) -> int:
        return self._offsets[-1]

    def weights(self, block: int) -> np.ndarray:
        """Weight matrix view of block (1-based), shape (fan_in, fan_out)."""
        self._check_block(block)
        fan_in, fan_out = self.dims[block - 1], self.dims[block]
        start = self._offsets[block - 1]
        return self.flat[start : start + fan_in * fan_out].reshape(fan_in, fan_out)

    def biases(self, block: int) -> np.ndarray:
        """Bias vector view of block (1-based), shape (fan_out,)."""
        self._check_block(block)
        fan_in, fan_out = self.dims[block - 1], self.dims[block]
        start = self._offsets[block - 1] + fan_in * fan_out
        return self.flat[start : start + fan_out]

    def segment(self, lo: int, hi: int) -> np.ndarray:
        """Writable flat view covering blocks lo..hi (1-based, inclusive)."""
        if not (1 <= lo <= hi <= self.num_blocks):
            raise ValueError(
                f"block range [{lo}, {hi}] invalid for {self.num_blocks} blocks"
            )
        return self.flat[self._offsets[lo - 1] : self._offsets[hi]]

    def copy(self) -> "ParamSet":
        return ParamSet(self.dims, self.flat.copy())

    def _check_block(self, block: int) -> None:
        if not (1 <= block <= self.num_blocks):
            raise ValueError(f"block {block} out of range 1..{self.num_blocks}")


# The local-loss head is structurally a one-block ParamSet (cut width -> classes).
AuxHead = ParamSet


def init_params(spec: NetSpec) -> ParamSet:
    """Seeded init: weights uniform in +-1/sqrt(fan_in) per block, biases zero."""
    rng = np.random.default_rng(spec.seed)
    params = ParamSet(spec.layer_dims)
    for j in range(1, params.num_blocks + 1):
        fan_in = spec.layer_dims[j - 1]
        bound = 1.0 / np.sqrt(fan_in)
        params.weights(j)[...] = rng.uniform(-bound, bound, size=params.weights(j).shape)
    return params


def init_aux_head(spec: NetSpec, cut: int, seed) -> AuxHead:
    """Seeded init of the local-loss head above block `cut`."""
    if not (1 <= cut <= spec.num_blocks - 1):
        raise ValueError(f"cut {cut} must leave the net at least one block above it")
    head = ParamSet((spec.layer_dims[cut], spec.num_classes))
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(spec.layer_dims[cut])
    head.weights(1)[...] = rng.uniform(-bound, bound, size=head.weights(1).shape)
    return head


def forward(params: ParamSet, inputs: np.ndarray, upto: int, lo: int = 1) -> np.ndarray:
    """Activations after running blocks lo..upto on `inputs`.

    `inputs` must be the activations entering block lo (the raw batch for
    lo=1). ReLU follows every block except the final one, which stays
    linear (logits).
    """
    if not (1 <= lo <= upto <= params.num_blocks):
        raise ValueError(
            f"block range [{lo}, {upto}] invalid for {params.num_blocks} blocks"
        )
    a = np.asarray(inputs, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != params.dims[lo - 1]:
        raise ValueError(
            f"inputs shape {a.shape} does not match block {lo} fan-in {params.dims[lo - 1]}"
        )
    for j in range(lo, upto + 1):
        z = a @ params.weights(j) + params.biases(j)
        a = z if j == params.num_blocks else np.maximum(z, 0.0)
    return a


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilized by the row max."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _cross_entropy_and_delta(
    logits: np.ndarray, labels: np.ndarray, num_classes: int
) -> tuple[float, np.ndarray]:
    """Mean CE loss and d(loss)/d(logits) for integer labels."""
    if labels.size and labels.max() >= num_classes:
        raise ValueError(
            f"label {labels.max()} out of range for {num_classes} classes"
        )
    probs = softmax(logits)
    n = logits.shape[0]
    loss = float(-np.mean(np.log(probs[np.arange(n), labels])))
    delta = probs
    delta[np.arange(n), labels] -= 1.0
    return loss, delta / n


def _forward_cache(
    params: ParamSet, inputs: np.ndarray, upto: int
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per-block pre-activations and activations for blocks 1..upto."""
    a = np.asarray(inputs, dtype=np.float64)
    acts = [a]
    pres = []
    for j in range(1, upto + 1):
        z = a @ params.weights(j) + params.biases(j)
        pres.append(z)
        a = z if j == params.num_blocks else np.maximum(z, 0.0)
        acts.append(a)
    return pres, acts


def _backprop(
    params: ParamSet,
    grads: ParamSet,
    pres: list[np.ndarray],
    acts: list[np.ndarray],
    delta: np.ndarray,
    top: int,
) -> None:
    """Accumulate gradients for blocks top..1 given d(loss)/d(act_top).

    `delta` is the gradient at block `top`'s output; when that output went
    through ReLU the mask is applied here before the weight gradients.
    """
    for j in range(top, 0, -1):
        if j != params.num_blocks:
            delta = delta * (pres[j - 1] > 0)
        grads.weights(j)[...] = acts[j - 1].T @ delta
        grads.biases(j)[...] = delta.sum(axis=0)
        if j > 1:
            delta = delta @ params.weights(j).T


def global_loss_and_grads(params: ParamSet, batch: Batch) -> tuple[float, ParamSet]:
    """Mean softmax cross-entropy at the output layer plus full backprop."""
    num_classes = params.dims[-1]
    pres, acts = _forward_cache(params, batch.inputs, params.num_blocks)
    loss, delta = _cross_entropy_and_delta(acts[-1], batch.labels, num_classes)
    grads = ParamSet(params.dims)
    # Final block is linear: seed backprop below it, no ReLU mask at the top.
    grads.weights(params.num_blocks)[...] = acts[-2].T @ delta
    grads.biases(params.num_blocks)[...] = delta.sum(axis=0)
    if params.num_blocks > 1:
        _backprop(
            params,
            grads,
            pres,
            acts,
            delta @ params.weights(params.num_blocks).T,
            params.num_blocks - 1,
        )
    return loss, grads


def local_loss_and_grads(
    params: ParamSet, aux: AuxHead, batch: Batch, cut: int
) -> tuple[float, ParamSet, ParamSet]:
    """Cross-entropy of the aux head on cut-layer activations.

    Gradients flow through blocks 1..cut and the aux head only; blocks
    above the cut stay at zero gradient. Returns (loss, block gradients,
    aux gradients).
    """
    if not (1 <= cut <= params.num_blocks - 1):
        raise ValueError(f"cut {cut} out of range 1..{params.num_blocks - 1}")
    if aux.dims != (params.dims[cut], params.dims[-1]):
        raise ValueError(
            f"aux head dims {aux.dims} do not match cut width {params.dims[cut]} "
            f"and {params.dims[-1]} classes"
        )
    pres, acts = _forward_cache(params, batch.inputs, cut)
    logits = acts[-1] @ aux.weights(1) + aux.biases(1)
    loss, delta = _cross_entropy_and_delta(logits, batch.labels, params.dims[-1])

    aux_grads = ParamSet(aux.dims)
    aux_grads.weights(1)[...] = acts[-1].T @ delta
    aux_grads.biases(1)[...] = delta.sum(axis=0)

    grads = ParamSet(params.dims)
    _backprop(params, grads, pres, acts, delta @ aux.weights(1).T, cut)
    return loss, grads, aux_grads


def sgd_step(params: ParamSet, grads: ParamSet, lr: float) -> ParamSet:
    """One gradient-descent step: params - lr * grads, as a new ParamSet."""
    if grads.dims != params.dims:
        raise ValueError(f"gradient dims {grads.dims} do not match {params.dims}")
    if lr < 0:
        raise ValueError(f"learning rate must be >= 0, got {lr}")
    return ParamSet(params.dims, params.flat - lr * grads.flat)


def average_params(param_sets) -> ParamSet:
    """Elementwise mean, accumulated in the given order for bit determinism."""
    param_sets = list(param_sets)
    if not param_sets:
        raise ValueError("cannot average an empty list of parameter sets")
    dims = param_sets[0].dims
    total = np.zeros_like(param_sets[0].flat)
    for p in param_sets:
        if p.dims != dims:
            raise ValueError(f"parameter dims {p.dims} do not match {dims}")
        total += p.flat
    return ParamSet(dims, total / len(param_sets))


def to_bytes(params: ParamSet) -> bytes:
    """Serialize: 16-byte header (magic, block count, flat length), then LE float64."""
    header = _HEADER.pack(_MAGIC, params.num_blocks, params.size)
    return header + params.flat.astype("<f8").tobytes()


def from_bytes(blob: bytes, dims) -> ParamSet:
    """Deserialize a blob produced by to_bytes; dims must match the header."""
    if len(blob) < _HEADER.size:
        raise ValueError("parameter blob shorter than its header")
    magic, num_blocks, length = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise ValueError(f"bad parameter-blob magic {magic!r}")
    expected = ParamSet(dims)
    if num_blocks != expected.num_blocks or length != expected.size:
        raise ValueError(
            f"blob header ({num_blocks} blocks, {length} values) does not match "
            f"dims {tuple(dims)}"
        )
    payload = blob[_HEADER.size :]
    if len(payload) != 8 * length:
        raise ValueError(
            f"parameter blob truncated: expected {8 * length} payload bytes, "
            f"got {len(payload)}"
        )
    return ParamSet(dims, np.frombuffer(payload, dtype="<f8").astype(np.float64))
