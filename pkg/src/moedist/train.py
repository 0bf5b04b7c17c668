"""Gradient-based fitting: exact gradients, first-order optimizers, early stopping."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import distributions as dist
from .exceptions import DataError, NonFiniteLossError, SpecError
from .mixture import MixtureModel, forward_pass, penalized_nll

logger = logging.getLogger(__name__)


def loss_and_grad(model: MixtureModel, rows=None):
    """Penalized mean NLL over ``rows`` and its gradient with respect to ``theta``.

    The gradient chains through response transforms, design matrices, the
    gate softmax, the mixture log-sum-exp and network backprop.  L1 terms
    use the subgradient ``sign(0) = 0``.
    """
    fp = forward_pass(model, rows, keep_cache=True)
    n = fp.ll.shape[0]
    if n == 0:
        raise DataError("empty batch")
    if not np.all(np.isfinite(fp.ll)):
        _clear_caches(model)
        raise NonFiniteLossError("non-finite log-likelihood")
    loss = float(-fp.ll.mean() + model.penalty())
    resp = np.exp(fp.log_pi + fp.log_dens - fp.ll[:, None])
    grad = np.zeros_like(model.theta)
    scale = -1.0 / n
    i = 0
    for m, comp in enumerate(model.spec.components):
        dl = dist.logpdf_grad(comp.family, fp.params[m], fp.y)
        w = scale * resp[:, m]
        for j, tr in enumerate(comp.transforms):
            g_eta = w * dl[j] * tr.derivative(fp.etas[i + j])
            _accumulate(model, i + j, g_eta, fp, grad)
        i += comp.family.n_params
    pi = np.exp(fp.log_pi)
    for m in range(1, model.n_components):
        g_eta = scale * (resp[:, m] - pi[:, m])
        _accumulate(model, i + m - 1, g_eta, fp, grad)
    theta = model.theta
    for sl, P in model._smooth_pen:
        grad[sl] += 2.0 * (P @ theta[sl])
    if model._l1_idx.size:
        grad[model._l1_idx] += model._l1_w * np.sign(theta[model._l1_idx])
    return loss, grad


def _accumulate(model, k, g_eta, fp, grad):
    p = model.predictors[k]
    if p.coef.stop > p.coef.start:
        grad[p.coef] += fp.designs[k].T @ g_eta
    for t, net, sl in p.nets:
        grad[sl] += net.backward(g_eta).flat


def _clear_caches(model):
    for _, _, net, _ in model.networks():
        net._cache = None


def grad_nll(model: MixtureModel, rows=None) -> np.ndarray:
    """Gradient of :func:`~moedist.mixture.penalized_nll` aligned with ``theta``."""
    return loss_and_grad(model, rows)[1]


class SGD:
    def __init__(self, lr: float):
        if not lr > 0:
            raise SpecError("learning rate must be positive")
        self.lr = float(lr)

    def step(self, theta, grad):
        theta -= self.lr * grad
        return theta


class RMSprop:
    """``v <- rho v + (1 - rho) g^2;  theta <- theta - lr g / (sqrt(v) + eps)``."""

    def __init__(self, lr: float, rho: float = 0.9, eps: float = 1e-7):
        if not lr > 0:
            raise SpecError("learning rate must be positive")
        self.lr, self.rho, self.eps = float(lr), float(rho), float(eps)
        self.v = None

    def step(self, theta, grad):
        if self.v is None:
            self.v = np.zeros_like(theta)
        self.v *= self.rho
        self.v += (1.0 - self.rho) * grad * grad
        theta -= self.lr * grad / (np.sqrt(self.v) + self.eps)
        return theta


class Adam:
    """Adam with bias-corrected first and second moments."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-7):
        if not lr > 0:
            raise SpecError("learning rate must be positive")
        self.lr, self.beta1, self.beta2, self.eps = float(lr), float(beta1), float(beta2), float(eps)
        self.m = self.v = None
        self.t = 0

    def step(self, theta, grad):
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        theta -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return theta


@dataclass(frozen=True)
class OptimizerConfig:
    name: str = "rmsprop"
    lr: float = 0.01
    rho: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7

    def __post_init__(self):
        object.__setattr__(self, "name", str(self.name).lower())
        if self.name not in ("sgd", "rmsprop", "adam"):
            raise SpecError(f"unknown optimizer {self.name!r}")
        if not self.lr > 0:
            raise SpecError("learning rate must be positive")

    def build(self):
        if self.name == "sgd":
            return SGD(self.lr)
        if self.name == "rmsprop":
            return RMSprop(self.lr, self.rho, self.eps)
        return Adam(self.lr, self.beta1, self.beta2, self.eps)

    def to_json(self) -> dict:
        out = {"name": self.name, "lr": self.lr}
        if self.name == "rmsprop":
            out.update(rho=self.rho, eps=self.eps)
        elif self.name == "adam":
            out.update(beta1=self.beta1, beta2=self.beta2, eps=self.eps)
        return out


@dataclass(frozen=True)
class TrainConfig:
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    epochs: int = 1000
    batch_size: int = 32
    validation_split: float = 0.1
    patience: int = 100
    early_stopping: bool = True
    seed: int = 42

    def __post_init__(self):
        opt = self.optimizer
        if isinstance(opt, dict):
            opt = OptimizerConfig(**opt)
        object.__setattr__(self, "optimizer", opt)
        if int(self.epochs) < 1:
            raise SpecError("epochs must be >= 1")
        if int(self.batch_size) < 1:
            raise SpecError("batch_size must be >= 1")
        if not 0 <= self.validation_split < 1:
            raise SpecError("validation_split must lie in [0, 1)")
        if int(self.patience) < 0:
            raise SpecError("patience must be >= 0")

    def to_json(self) -> dict:
        out = asdict(self)
        out["optimizer"] = self.optimizer.to_json()
        return out

    @classmethod
    def from_json(cls, obj) -> "TrainConfig":
        obj = dict(obj or {})
        if "optimizer" in obj:
            obj["optimizer"] = OptimizerConfig(**obj["optimizer"])
        return cls(**obj)


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj) -> "History":
        return cls(**obj)


def split_validation(n: int, fraction: float, seed: int):
    """Shuffled ``(train_rows, val_rows)`` with ``floor(fraction * n)`` validation rows."""
    if not 0 <= fraction < 1:
        raise SpecError("validation fraction must lie in [0, 1)")
    n_val = int(math.floor(fraction * n))
    if n - n_val < 1:
        raise DataError("validation split leaves no training rows")
    perm = np.random.default_rng([int(seed), 0]).permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


class EarlyStopping:
    """Tracks the best monitored loss; signals a stop after ``patience`` bad epochs."""

    def __init__(self, patience: int, enabled: bool = True):
        self.patience = int(patience)
        self.enabled = enabled
        self.best = math.inf
        self.best_epoch = 0
        self.best_theta = None
        self.wait = 0

    def update(self, epoch: int, loss: float, theta=None) -> bool:
        if loss < self.best:
            self.best = loss
            self.best_epoch = epoch
            self.best_theta = None if theta is None else theta.copy()
            self.wait = 0
            return False
        self.wait += 1
        return self.enabled and self.wait >= self.patience


def train(model: MixtureModel, config: TrainConfig | None = None, data=None):
    """Fit ``model`` in place by mini-batch descent on the penalized NLL.

    Each epoch reshuffles the training rows, steps the optimizer on every
    mini-batch (the last one may be smaller), then evaluates the full
    training and validation losses.  The parameters of the epoch with the
    lowest validation loss (training loss if there is no validation set)
    are restored at the end.

    Returns
    -------
    (MixtureModel, History)
    """
    config = config or TrainConfig()
    if data is not None:
        model = model.bind(data)
    if model.design is None:
        raise DataError("model is not bound to data")
    n = model.design.n_rows
    train_rows, val_rows = split_validation(n, config.validation_split, config.seed)
    rng = np.random.default_rng([int(config.seed), 1])
    opt = config.optimizer.build()
    stopper = EarlyStopping(config.patience, config.early_stopping)
    history = History(metadata={
        "optimizer": config.optimizer.to_json(),
        "batch_size": config.batch_size,
        "n_train": int(train_rows.size),
        "n_val": int(val_rows.size),
        "monitor": "val_loss" if val_rows.size else "train_loss",
    })
    bs = int(config.batch_size)
    theta = model.theta
    for epoch in range(1, int(config.epochs) + 1):
        perm = train_rows[rng.permutation(train_rows.size)]
        for b, start in enumerate(range(0, perm.size, bs)):
            try:
                _, grad = loss_and_grad(model, perm[start:start + bs])
            except NonFiniteLossError:
                raise NonFiniteLossError("non-finite training loss", epoch, b + 1) from None
            if not np.all(np.isfinite(grad)):
                raise NonFiniteLossError("non-finite gradient", epoch, b + 1)
            opt.step(theta, grad)
        train_loss = penalized_nll(model, train_rows)
        val_loss = penalized_nll(model, val_rows) if val_rows.size else train_loss
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise NonFiniteLossError("non-finite epoch loss", epoch, None)
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.stopped_epoch = epoch
        logger.debug("epoch %d: train %.6f val %.6f", epoch, train_loss, val_loss)
        if stopper.update(epoch, val_loss, theta):
            break
    theta[:] = stopper.best_theta
    history.best_epoch = stopper.best_epoch
    return model, history
