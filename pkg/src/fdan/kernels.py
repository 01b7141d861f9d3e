"""Kernels, per-class sample weights and the (local) maximum mean discrepancy.

The class-conditional discrepancy compares the weighted kernel mean
embeddings of the two domains class by class::

    (1/C') * sum_c [ wv_c' Kvv wv_c + wa_c' Kaa wa_c - 2 wv_c' Kva wa_c ]

where ``wv_c`` / ``wa_c`` are the columns of :func:`class_weights` and ``C'``
counts the classes present in both batches.  Absent classes are skipped so a
mini-batch that happens to miss a class contributes no 0/0 term.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence, Union

import numpy as np
from scipy.spatial.distance import pdist

from . import tensor as T
from .errors import LabelError, ParameterError, ShapeError
from .tensor import Tensor

DEFAULT_LADDER = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and bandwidth settings.

    ``bandwidth`` is the base squared length scale (sigma^2) or ``"median"``
    to pick it per call with :func:`median_heuristic_bandwidth`.  The gaussian
    kernel is the mean over ``ladder`` of ``exp(-||x - y||^2 / (tau * sigma^2))``.
    The linear family ignores both bandwidth and ladder.
    """

    family: Literal["gaussian", "linear"] = "gaussian"
    bandwidth: Union[float, Literal["median"]] = "median"
    ladder: Sequence[float] = DEFAULT_LADDER

    def __post_init__(self):
        if self.family not in ("gaussian", "linear"):
            raise ParameterError(f"unknown kernel family {self.family!r}")
        if len(self.ladder) == 0:
            raise ParameterError("kernel ladder must be nonempty")
        if any(not (t > 0) for t in self.ladder):
            raise ParameterError(f"ladder multipliers must be positive: {self.ladder}")
        if self.bandwidth != "median" and not float(self.bandwidth) > 0:
            raise ParameterError(f"bandwidth must be positive, got {self.bandwidth}")
        object.__setattr__(self, "ladder", tuple(float(t) for t in self.ladder))


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def median_heuristic_bandwidth(X, Y) -> float:
    """Median squared distance over all distinct-row pairs of the pooled set.

    Falls back to the mean of the nonzero squared distances when the median
    is zero, and to 1.0 when every distance is zero.
    """
    pooled = np.vstack([_as_array(X), _as_array(Y)])
    if pooled.shape[0] < 2:
        return 1.0
    d2 = pdist(pooled, "sqeuclidean")
    med = float(np.median(d2))
    if med > 0:
        return med
    nonzero = d2[d2 > 0]
    if nonzero.size:
        return float(nonzero.mean())
    return 1.0


def resolve_bandwidth(X, Y, spec: KernelSpec) -> float:
    if spec.bandwidth == "median":
        sigma2 = median_heuristic_bandwidth(X, Y)
    else:
        sigma2 = float(spec.bandwidth)
    if not sigma2 > 0:
        raise ParameterError(f"resolved bandwidth must be positive, got {sigma2}")
    return sigma2


def gaussian_kernel_matrix(X: Tensor, Y: Tensor, spec: KernelSpec,
                           sigma2: float | None = None) -> Tensor:
    """Multi-bandwidth gaussian kernel between the rows of X and Y.

    The bandwidth is a constant of the graph: no gradient flows through the
    median heuristic.
    """
    X, Y = T._wrap(X), T._wrap(Y)
    if X.shape[1] != Y.shape[1]:
        raise ShapeError(f"kernel: feature widths differ, {X.shape} vs {Y.shape}")
    if sigma2 is None:
        sigma2 = resolve_bandwidth(X, Y, spec)
    elif not sigma2 > 0:
        raise ParameterError(f"bandwidth must be positive, got {sigma2}")
    d2 = T.sq_dist(X, Y)
    terms = [T.exp(T.scale(d2, -1.0 / (tau * sigma2))) for tau in spec.ladder]
    acc = terms[0]
    for t in terms[1:]:
        acc = T.add(acc, t)
    return T.scale(acc, 1.0 / len(terms))


def linear_kernel_matrix(X: Tensor, Y: Tensor) -> Tensor:
    X, Y = T._wrap(X), T._wrap(Y)
    if X.shape[1] != Y.shape[1]:
        raise ShapeError(f"kernel: feature widths differ, {X.shape} vs {Y.shape}")
    return T.matmul(X, T.transpose(Y))


def kernel_matrix(X, Y, spec: KernelSpec, sigma2: float | None = None) -> Tensor:
    if spec.family == "linear":
        return linear_kernel_matrix(X, Y)
    return gaussian_kernel_matrix(X, Y, spec, sigma2)


def check_one_hot(Y) -> np.ndarray:
    """Return Y as float64, raising LabelError at the first row that is not one-hot."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise ShapeError(f"labels must be a 2-D one-hot matrix, got shape {Y.shape}")
    ok = np.all((Y == 0) | (Y == 1), axis=1) & (Y.sum(axis=1) == 1)
    if not ok.all():
        i = int(np.flatnonzero(~ok)[0])
        raise LabelError(f"label row {i} is not one-hot: {Y[i].tolist()}")
    return Y


def class_weights(Y) -> np.ndarray:
    """Per-sample per-class weights: each present class's column sums to one.

    >>> class_weights(np.array([[1, 0], [1, 0], [0, 1]]))
    array([[0.5, 0. ],
           [0.5, 0. ],
           [0. , 1. ]])
    """
    Y = check_one_hot(_as_array(Y))
    counts = Y.sum(axis=0)
    return np.divide(Y, counts, out=np.zeros_like(Y), where=counts > 0)


def _shared_classes(Wv: np.ndarray, Wa: np.ndarray) -> np.ndarray:
    if Wv.shape[1] != Wa.shape[1]:
        raise ParameterError(
            f"class counts differ between domains: {Wv.shape[1]} vs {Wa.shape[1]}")
    return np.flatnonzero((Wv.sum(axis=0) > 0) & (Wa.sum(axis=0) > 0))


def lmmd(Zv: Tensor, Za: Tensor, Wv, Wa, spec: KernelSpec | None = None,
         return_overlap: bool = False):
    """Class-weighted MMD between two activation batches.

    ``Wv`` and ``Wa`` are :func:`class_weights` outputs.  With
    ``return_overlap=True`` the result is ``(value, n_shared_classes)``; a
    count of zero means no class appears in both batches and the value is 0.
    """
    spec = spec or KernelSpec()
    Zv, Za = T._wrap(Zv), T._wrap(Za)
    Wv, Wa = _as_array(Wv), _as_array(Wa)
    if Zv.shape[1] != Za.shape[1]:
        raise ShapeError(f"lmmd: feature widths differ, {Zv.shape} vs {Za.shape}")
    if Wv.shape[0] != Zv.shape[0] or Wa.shape[0] != Za.shape[0]:
        raise ShapeError(
            f"lmmd: weights {Wv.shape}/{Wa.shape} do not match samples "
            f"{Zv.shape[0]}/{Za.shape[0]}")
    shared = _shared_classes(Wv, Wa)
    if shared.size == 0:
        value = T.scale(T.total(T.scale(Zv, 0.0)), 0.0)
        return (value, 0) if return_overlap else value

    wv = T.Tensor(Wv[:, shared])
    wa = T.Tensor(Wa[:, shared])
    sigma2 = resolve_bandwidth(Zv, Za, spec) if spec.family == "gaussian" else None
    k_vv = kernel_matrix(Zv, Zv, spec, sigma2)
    k_aa = kernel_matrix(Za, Za, spec, sigma2)
    k_va = kernel_matrix(Zv, Za, spec, sigma2)
    # sum_c w_c' K w_c == sum(W * (K @ W))
    vv = T.total(T.mul(wv, T.matmul(k_vv, wv)))
    aa = T.total(T.mul(wa, T.matmul(k_aa, wa)))
    va = T.total(T.mul(wv, T.matmul(k_va, wa)))
    value = T.scale(T.add(T.add(vv, aa), T.scale(va, -2.0)), 1.0 / shared.size)
    return (value, int(shared.size)) if return_overlap else value


def mmd(Zv: Tensor, Za: Tensor, spec: KernelSpec | None = None) -> Tensor:
    """Biased (V-statistic) MMD^2: mean(Kvv) + mean(Kaa) - 2 mean(Kva)."""
    spec = spec or KernelSpec()
    Zv, Za = T._wrap(Zv), T._wrap(Za)
    if Zv.shape[0] == 0 or Za.shape[0] == 0:
        raise ParameterError("mmd needs nonempty inputs")
    if Zv.shape[1] != Za.shape[1]:
        raise ShapeError(f"mmd: feature widths differ, {Zv.shape} vs {Za.shape}")
    sigma2 = resolve_bandwidth(Zv, Za, spec) if spec.family == "gaussian" else None
    k_vv = kernel_matrix(Zv, Zv, spec, sigma2)
    k_aa = kernel_matrix(Za, Za, spec, sigma2)
    k_va = kernel_matrix(Zv, Za, spec, sigma2)
    return T.add(T.add(T.mean(k_vv), T.mean(k_aa)), T.scale(T.mean(k_va), -2.0))
