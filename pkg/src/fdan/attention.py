"""Single-head cross-modal attention block.

Each modality projects its activations to query/key/value (stored d x n, i.e.
``W @ Z.T``), receives the other modality's values weighted by
``softmax(Q_self.T @ K_other / sqrt(d))`` and is then updated by two
residual + layer-norm stages, the second one around a feed-forward net.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .tensor import Tensor

LN_EPS = 1e-5


@dataclass
class StreamParams:
    """Parameters of one modality's stream inside a block."""

    wq: Tensor
    wk: Tensor
    wv: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ffn_w1: Tensor
    ffn_b1: Tensor
    ffn_w2: Tensor
    ffn_b2: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor

    @property
    def dim(self) -> int:
        return self.wq.shape[0]

    def named(self, prefix: str = ""):
        return [(prefix + f.name, getattr(self, f.name)) for f in fields(self)]

    @classmethod
    def init(cls, d: int, h: int, rng: np.random.Generator) -> StreamParams:
        def u(fan_in, shape):
            bound = 1.0 / math.sqrt(fan_in)
            return T.param(rng.uniform(-bound, bound, size=shape))

        return cls(
            wq=u(d, (d, d)), wk=u(d, (d, d)), wv=u(d, (d, d)),
            ln1_gain=T.param(np.ones((1, d))), ln1_bias=T.param(np.zeros((1, d))),
            ffn_w1=u(d, (d, h)), ffn_b1=T.param(np.zeros((1, h))),
            ffn_w2=u(h, (h, d)), ffn_b2=T.param(np.zeros((1, d))),
            ln2_gain=T.param(np.ones((1, d))), ln2_bias=T.param(np.zeros((1, d))),
        )


@dataclass
class AttentionBlockParams:
    visual: StreamParams
    acoustic: StreamParams

    def named(self, prefix: str = ""):
        return self.visual.named(prefix + "v.") + self.acoustic.named(prefix + "a.")

    @classmethod
    def init(cls, d: int, h: int, rng: np.random.Generator) -> AttentionBlockParams:
        return cls(StreamParams.init(d, h, rng), StreamParams.init(d, h, rng))


def project_qkv(Z: Tensor, p: StreamParams) -> tuple[Tensor, Tensor, Tensor]:
    """Query, key and value of one modality, each of shape d x n."""
    if Z.shape[1] != p.dim:
        raise ShapeError(f"project_qkv: input {Z.shape} does not have width {p.dim}")
    Zt = T.transpose(Z)
    return T.matmul(p.wq, Zt), T.matmul(p.wk, Zt), T.matmul(p.wv, Zt)


def attention_weights(q_target: Tensor, k_source: Tensor) -> Tensor:
    """Row-stochastic n_target x n_source matrix."""
    d = q_target.shape[0]
    if k_source.shape[0] != d:
        raise ShapeError(
            f"attention: query {q_target.shape} and key {k_source.shape} disagree on d")
    scores = T.matmul(T.transpose(q_target), k_source)
    return T.softmax_rows(T.scale(scores, 1.0 / math.sqrt(d)))


def cross_propagate(q_target: Tensor, k_source: Tensor, v_source: Tensor) -> Tensor:
    """Information carried from the source modality to each target sample
    (n_target x d)."""
    if v_source.shape != k_source.shape:
        raise ShapeError(
            f"cross_propagate: key {k_source.shape} and value {v_source.shape} differ")
    return T.matmul(attention_weights(q_target, k_source), T.transpose(v_source))


def ffn(Z: Tensor, p: StreamParams) -> Tensor:
    hidden = T.relu(T.add(T.matmul(Z, p.ffn_w1), p.ffn_b1))
    return T.add(T.matmul(hidden, p.ffn_w2), p.ffn_b2)


def fuse_update(Z: Tensor, dZ: Tensor | None, p: StreamParams) -> Tensor:
    """``Z <- LN(Z + dZ)`` then ``Z <- LN(Z + FFN(Z))``.

    ``dZ=None`` skips the propagated term (the single-modality path).
    """
    if dZ is not None:
        if dZ.shape != Z.shape:
            raise ShapeError(f"fuse_update: Z {Z.shape} and dZ {dZ.shape} differ")
        Z = T.add(Z, dZ)
    Z = T.layer_norm(Z, p.ln1_gain, p.ln1_bias, LN_EPS)
    return T.layer_norm(T.add(Z, ffn(Z, p)), p.ln2_gain, p.ln2_bias, LN_EPS)


def cross_attention_block(Zv: Tensor, Za: Tensor, params: AttentionBlockParams,
                          cross: bool = True) -> tuple[Tensor, Tensor]:
    """Update both modalities with each other's propagated information.

    With ``cross=False`` the propagated terms are dropped and each stream goes
    through its own residual/FFN path only.
    """
    pv, pa = params.visual, params.acoustic
    if Zv.shape[1] != pv.dim or Za.shape[1] != pa.dim:
        raise ShapeError(
            f"cross_attention_block: inputs {Zv.shape}, {Za.shape} need width {pv.dim}")
    if not cross:
        return fuse_update(Zv, None, pv), fuse_update(Za, None, pa)
    qv, kv, vv = project_qkv(Zv, pv)
    qa, ka, va = project_qkv(Za, pa)
    d_v2a = cross_propagate(qa, kv, vv)
    d_a2v = cross_propagate(qv, ka, va)
    return fuse_update(Zv, d_a2v, pv), fuse_update(Za, d_v2a, pa)


def stream_only(Z: Tensor, p: StreamParams) -> Tensor:
    """One modality through a block without the other modality present."""
    if Z.shape[1] != p.dim:
        raise ShapeError(f"stream_only: input {Z.shape} does not have width {p.dim}")
    return fuse_update(Z, None, p)
