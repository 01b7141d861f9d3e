"""The full network: per-modality input projections, a stack of cross-attention
blocks and a classifier head shared by both modalities; plus the training
objective and the checkpoint container."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .attention import AttentionBlockParams, cross_attention_block, stream_only
from .errors import FormatError, ParameterError, ShapeError
from .fileutil import atomic_write
from .kernels import KernelSpec, check_one_hot, class_weights, lmmd
from .tensor import Tensor

CHECKPOINT_MAGIC = b"FDAN"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Architecture:
    d_in_v: int
    d_in_a: int
    classes: int
    dim: int = 64
    hidden: int = 128
    layers: int = 2
    shared_classifier: bool = True

    def __post_init__(self):
        for name in ("d_in_v", "d_in_a", "classes", "dim", "hidden", "layers"):
            if getattr(self, name) < 1:
                raise ParameterError(f"architecture field {name} must be >= 1")
        if self.dim < 2:
            raise ParameterError("dim must be >= 2 (layer norm needs two columns)")


@dataclass
class ModelParams:
    arch: Architecture
    proj_v_w: Tensor
    proj_v_b: Tensor
    proj_a_w: Tensor
    proj_a_b: Tensor
    layers: list[AttentionBlockParams]
    cls_w: Tensor
    cls_b: Tensor
    # only used when arch.shared_classifier is False
    cls_a_w: Tensor | None = None
    cls_a_b: Tensor | None = None

    @classmethod
    def init(cls, arch: Architecture, seed: int = 0) -> ModelParams:
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, unit gains, zero biases."""
        rng = np.random.default_rng(seed)

        def u(fan_in, shape):
            bound = 1.0 / math.sqrt(fan_in)
            return T.param(rng.uniform(-bound, bound, size=shape))

        d, C = arch.dim, arch.classes
        proj_v_w = u(arch.d_in_v, (arch.d_in_v, d))
        proj_a_w = u(arch.d_in_a, (arch.d_in_a, d))
        layers = [AttentionBlockParams.init(d, arch.hidden, rng) for _ in range(arch.layers)]
        cls_w = u(d, (d, C))
        extra = {}
        if not arch.shared_classifier:
            extra = dict(cls_a_w=u(d, (d, C)), cls_a_b=T.param(np.zeros((1, C))))
        return cls(arch, proj_v_w, T.param(np.zeros((1, d))), proj_a_w,
                   T.param(np.zeros((1, d))), layers, cls_w,
                   T.param(np.zeros((1, C))), **extra)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        """All trainable leaves in declaration order."""
        out = [("proj_v_w", self.proj_v_w), ("proj_v_b", self.proj_v_b),
               ("proj_a_w", self.proj_a_w), ("proj_a_b", self.proj_a_b)]
        for i, block in enumerate(self.layers):
            out += block.named(f"layer{i}.")
        out += [("cls_w", self.cls_w), ("cls_b", self.cls_b)]
        if self.cls_a_w is not None:
            out += [("cls_a_w", self.cls_a_w), ("cls_a_b", self.cls_a_b)]
        return out

    def parameter_dict(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, t in self.named_parameters():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.shape:
                raise ShapeError(f"parameter {name}: expected {t.shape}, got {arr.shape}")
            t.data = arr.copy()

    def copy(self) -> ModelParams:
        twin = ModelParams.init(self.arch, 0)
        twin.load_state(self.state())
        return twin

    def classifier(self, modality: str) -> tuple[Tensor, Tensor]:
        if modality == "a" and self.cls_a_w is not None:
            return self.cls_a_w, self.cls_a_b
        return self.cls_w, self.cls_b


@dataclass
class ForwardTrace:
    activations: list[tuple[Tensor, Tensor]] = field(default_factory=list)
    logits_v: Tensor | None = None
    logits_a: Tensor | None = None


def _input(params: ModelParams, X, modality: str) -> Tensor:
    X = T._wrap(X)
    w, b = ((params.proj_v_w, params.proj_v_b) if modality == "v"
            else (params.proj_a_w, params.proj_a_b))
    if X.shape[1] != w.shape[0]:
        raise ShapeError(
            f"{modality} features have width {X.shape[1]}, model expects {w.shape[0]}")
    return T.add(T.matmul(X, w), b)


def forward(params: ModelParams, Xv, Xa, cross: bool = True) -> ForwardTrace:
    """Run both modalities through the coupled stack.

    ``cross=False`` removes the propagated terms from every block, which is
    the no-attention ablation.
    """
    zv, za = _input(params, Xv, "v"), _input(params, Xa, "a")
    trace = ForwardTrace()
    for block in params.layers:
        zv, za = cross_attention_block(zv, za, block, cross=cross)
        trace.activations.append((zv, za))
    wv, bv = params.classifier("v")
    wa, ba = params.classifier("a")
    trace.logits_v = T.add(T.matmul(zv, wv), bv)
    trace.logits_a = T.add(T.matmul(za, wa), ba)
    return trace


def forward_stream(params: ModelParams, X, modality: str) -> tuple[list[Tensor], Tensor]:
    """One modality alone: every block runs with its propagated term omitted.

    Returns the per-layer activations and the logits.
    """
    if modality not in ("v", "a"):
        raise ParameterError(f"modality must be 'v' or 'a', got {modality!r}")
    z = _input(params, X, modality)
    acts = []
    for block in params.layers:
        z = stream_only(z, block.visual if modality == "v" else block.acoustic)
        acts.append(z)
    w, b = params.classifier(modality)
    return acts, T.add(T.matmul(z, w), b)


def cross_entropy(logits: Tensor, Y) -> Tensor:
    """Mean negative log-likelihood of the true classes."""
    Y = check_one_hot(Y.data if isinstance(Y, Tensor) else Y)
    if Y.shape != logits.shape:
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs labels {Y.shape}")
    logp = T.log_softmax_rows(logits)
    return T.scale(T.total(T.mul(logp, T.Tensor(Y))), -1.0 / Y.shape[0])


@dataclass
class LossBreakdown:
    total: Tensor
    ce_v: Tensor
    ce_a: Tensor
    lmmd_sum: Tensor
    lmmd_layers: list[Tensor]
    alpha: float

    def values(self) -> dict[str, float]:
        return {"ce_v": self.ce_v.item(), "ce_a": self.ce_a.item(),
                "lmmd_sum": self.lmmd_sum.item(), "total": self.total.item()}


def total_loss(trace: ForwardTrace, Yv, Ya, alpha: float,
               spec: KernelSpec | None = None) -> LossBreakdown:
    """``ce_a + ce_v + alpha * sum_i lmmd_i`` with equal layer weights."""
    if alpha < 0:
        raise ParameterError(f"alpha must be nonnegative, got {alpha}")
    Yv, Ya = check_one_hot(Yv), check_one_hot(Ya)
    if Yv.shape[1] != Ya.shape[1]:
        raise ParameterError(f"class counts differ: {Yv.shape[1]} vs {Ya.shape[1]}")
    ce_v = cross_entropy(trace.logits_v, Yv)
    ce_a = cross_entropy(trace.logits_a, Ya)
    Wv, Wa = class_weights(Yv), class_weights(Ya)
    per_layer = [lmmd(zv, za, Wv, Wa, spec) for zv, za in trace.activations]
    lmmd_sum = per_layer[0]
    for term in per_layer[1:]:
        lmmd_sum = T.add(lmmd_sum, term)
    total = T.add(ce_a, ce_v)
    if alpha != 0:
        total = T.add(total, T.scale(lmmd_sum, alpha))
    return LossBreakdown(total, ce_v, ce_a, lmmd_sum, per_layer, alpha)


# -- checkpoint --------------------------------------------------------------

def checkpoint_bytes(params: ModelParams) -> bytes:
    a = params.arch
    if not a.shared_classifier:
        raise ParameterError("checkpoints only hold models with a shared classifier")
    parts = [CHECKPOINT_MAGIC,
             struct.pack("<I", CHECKPOINT_VERSION),
             struct.pack("<6I", a.d_in_v, a.d_in_a, a.dim, a.hidden, a.layers, a.classes)]
    for _, t in params.named_parameters():
        parts.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(params: ModelParams, path) -> None:
    atomic_write(path, checkpoint_bytes(params))


def parse_checkpoint(blob: bytes) -> ModelParams:
    if len(blob) < 32 or blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError("not a model checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    d_in_v, d_in_a, dim, hidden, layers, classes = struct.unpack_from("<6I", blob, 8)
    try:
        arch = Architecture(d_in_v=d_in_v, d_in_a=d_in_a, classes=classes, dim=dim,
                            hidden=hidden, layers=layers)
    except ParameterError as exc:
        raise FormatError(f"bad checkpoint header: {exc}") from exc
    params = ModelParams.init(arch, 0)
    offset = 32
    for name, t in params.named_parameters():
        nbytes = t.data.size * 8
        if offset + nbytes > len(blob):
            raise FormatError(f"checkpoint truncated while reading {name}")
        t.data = np.frombuffer(blob, dtype="<f8", count=t.data.size,
                               offset=offset).astype(np.float64).reshape(t.shape)
        offset += nbytes
    if offset != len(blob):
        raise FormatError(f"checkpoint has {len(blob) - offset} trailing bytes")
    return params


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        return parse_checkpoint(fh.read())
