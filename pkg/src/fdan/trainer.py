"""Mini-batch SGD with momentum over paired visual/acoustic batches."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import tensor as T
from .data import FeatureDomain, SynthSpec, stratified_split, synth_domains
from .errors import ConfigError, DivergenceError, ShapeError
from .kernels import KernelSpec
from .metrics import MetricsReport, metrics
from .model import Architecture, ModelParams, forward, forward_stream, total_loss

log = logging.getLogger(__name__)

ABLATIONS = ("full", "no-attention", "no-lmmd")


@dataclass
class TrainConfig:
    alpha: float = 1e-3
    momentum: float = 0.99
    weight_decay: float = 1e-4
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 300
    seed: int = 0
    ablation: str = "full"
    kernel: KernelSpec = field(default_factory=KernelSpec)

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigError(f"alpha must be nonnegative, got {self.alpha}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError("weight decay must be nonnegative")
        if self.lr < 0:
            raise ConfigError("learning rate must be nonnegative")
        if self.batch_size < 2:
            raise ConfigError("batch size must be at least 2")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")

    @property
    def effective_alpha(self) -> float:
        return 0.0 if self.ablation == "no-lmmd" else self.alpha


@dataclass
class EpochRecord:
    epoch: int
    ce_v: float
    ce_a: float
    lmmd_sum: float
    total: float
    war: float | None = None
    uar: float | None = None
    w_f1: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


TrainHistory = list  # list[EpochRecord]


def sgd_momentum_step(param: np.ndarray, grad: np.ndarray, velocity: np.ndarray,
                      lr: float, momentum: float, decay: float):
    """Classical momentum with L2 decay folded into the gradient.

    Returns ``(new_param, new_velocity)``.
    """
    if not (param.shape == grad.shape == velocity.shape):
        raise ShapeError(
            f"sgd step: param {param.shape}, grad {grad.shape}, velocity {velocity.shape}")
    g = grad + decay * param
    v = momentum * velocity + g
    return param - lr * v, v


def _batch_plan(rng: np.random.Generator, n: int, steps: int, batch: int) -> np.ndarray:
    """``steps`` batches of indices drawn from back-to-back fresh permutations."""
    need = steps * batch
    perms = [rng.permutation(n) for _ in range(math.ceil(need / n))]
    return np.concatenate(perms)[:need].reshape(steps, batch)


def evaluate(params: ModelParams, domain: FeatureDomain, modality: str) -> MetricsReport:
    """Classify ``domain`` through one modality's own stream."""
    expected = params.arch.d_in_v if modality == "v" else params.arch.d_in_a
    if domain.d_in != expected:
        raise ShapeError(f"data width {domain.d_in} does not match model input {expected}")
    _, logits = forward_stream(params, domain.features, modality)
    pred = logits.data.argmax(axis=1)
    return metrics(pred, domain.label_indices, params.arch.classes)


def train(config: TrainConfig, source: FeatureDomain, target_train: FeatureDomain,
          target_test: FeatureDomain | None = None, dim: int = 64, hidden: int = 128,
          layers: int = 2, params: ModelParams | None = None):
    """Train on all source samples plus the target training split.

    Returns ``(params, history)``; history holds one :class:`EpochRecord`
    per epoch, with target-test metrics when ``target_test`` is given.
    """
    C = source.classes
    if target_train.classes != C or (target_test is not None and target_test.classes != C):
        raise ConfigError("source and target domains disagree on the class count")
    if params is None:
        arch = Architecture(d_in_v=source.d_in, d_in_a=target_train.d_in, classes=C,
                            dim=dim, hidden=hidden, layers=layers)
        params = ModelParams.init(arch, config.seed)
    named = params.parameter_dict()
    velocity = {k: np.zeros(t.shape) for k, t in named.items()}
    rng = np.random.default_rng([config.seed, 1])
    cross = config.ablation != "no-attention"
    alpha = config.effective_alpha

    steps = math.ceil(max(source.n, target_train.n) / config.batch_size)
    history: list[EpochRecord] = []
    for epoch in range(1, config.epochs + 1):
        plan_v = _batch_plan(rng, source.n, steps, config.batch_size)
        plan_a = _batch_plan(rng, target_train.n, steps, config.batch_size)
        sums = np.zeros(4)
        for step in range(steps):
            bv, ba = plan_v[step], plan_a[step]
            trace = forward(params, source.features[bv], target_train.features[ba], cross)
            parts = total_loss(trace, source.labels[bv], target_train.labels[ba],
                               alpha, config.kernel)
            value = parts.total.item()
            if not math.isfinite(value):
                raise DivergenceError(epoch, step, value)
            grads = T.backward(parts.total, named)
            for k, t in named.items():
                t.data, velocity[k] = sgd_momentum_step(
                    t.data, grads[k], velocity[k], config.lr, config.momentum,
                    config.weight_decay)
            v = parts.values()
            sums += (v["ce_v"], v["ce_a"], v["lmmd_sum"], value)
        means = sums / steps
        rec = EpochRecord(epoch, *(float(x) for x in means))
        if target_test is not None and target_test.n:
            rep = evaluate(params, target_test, "a")
            rec.war, rec.uar, rec.w_f1 = rep.war, rep.uar, rep.w_f1
        history.append(rec)
        log.debug("epoch %d total %.5f war %s", epoch, rec.total, rec.war)
    return params, history


def ablation_study(synth: SynthSpec, seeds, config: TrainConfig, arms=ABLATIONS,
                   split: float = 0.8, **arch) -> dict[str, list[float]]:
    """Final target-test WAR per seed for each ablation arm.

    Every seed regenerates the synthetic pair, re-splits the acoustic
    domain and reseeds initialization, so the arms of one seed share data.
    """
    results: dict[str, list[float]] = {arm: [] for arm in arms}
    for seed in seeds:
        visual, acoustic = synth_domains(replace(synth, seed=seed))
        a_train, a_test = stratified_split(acoustic, split, seed)
        for arm in arms:
            cfg = replace(config, seed=seed, ablation=arm)
            params, _ = train(cfg, visual, a_train, **arch)
            results[arm].append(evaluate(params, a_test, "a").war)
            log.info("seed %d %s war %.4f", seed, arm, results[arm][-1])
    return results
