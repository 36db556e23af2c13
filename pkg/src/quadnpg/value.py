"""Value-network regression on Monte-Carlo targets with a Huber loss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from quadnpg.mlp import HuberSpec, loss_and_gradient
from quadnpg.sim import DivergenceError


@dataclass(frozen=True)
class ValueFitConfig:
    max_iterations: int = 200
    loss_threshold: float = 1e-4
    step_size: float = 1e-3
    huber_delta: float = 1.0
    max_samples: int | None = 200_000  # uniform subsample cap; None uses every sample
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.max_iterations < 1 or self.loss_threshold <= 0 or self.step_size <= 0:
            raise ValueError("need max_iterations >= 1, loss_threshold > 0 and step_size > 0")


@dataclass
class ValueFitResult:
    value: object
    loss: float
    iterations: int
    history: list


def fit_value(value, obs, targets, cfg=ValueFitConfig(), rng=None):
    """Full-batch Adam on the mean Huber loss.

    A step that raises the loss is rejected, the first moment cleared and the
    step size halved (it recovers on accepted steps), so the recorded loss
    sequence never increases. At least one step is taken; the
    loop stops after ``max_iterations`` steps or once the loss drops below
    ``loss_threshold``.
    """
    obs = np.asarray(obs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if len(obs) == 0:
        raise ValueError("fit_value needs at least one sample")
    if cfg.max_samples is not None and len(obs) > cfg.max_samples:
        rng = rng if rng is not None else np.random.default_rng(0)
        idx = np.sort(rng.choice(len(obs), cfg.max_samples, replace=False))
        obs, targets = obs[idx], targets[idx]

    huber = HuberSpec(cfg.huber_delta)
    net = value.copy()
    theta = net.params()
    loss, grad = loss_and_gradient(net, obs, targets, huber)
    if not np.isfinite(loss):
        raise DivergenceError("non-finite value loss")
    history = [loss]
    m = np.zeros_like(theta)
    s = np.zeros_like(theta)
    lr = cfg.step_size
    t = 0
    it = 0
    while it == 0 or (it < cfg.max_iterations and loss >= cfg.loss_threshold):
        it += 1
        m_new = cfg.beta1 * m + (1 - cfg.beta1) * grad
        s_new = cfg.beta2 * s + (1 - cfg.beta2) * grad**2
        m_hat = m_new / (1 - cfg.beta1 ** (t + 1))
        s_hat = s_new / (1 - cfg.beta2 ** (t + 1))
        cand = theta - lr * m_hat / (np.sqrt(s_hat) + cfg.eps)
        net.set_params(cand)
        new_loss, new_grad = loss_and_gradient(net, obs, targets, huber)
        if not np.isfinite(new_loss):
            raise DivergenceError("non-finite value loss")
        if new_loss <= loss:
            theta, loss, grad, m, s = cand, new_loss, new_grad, m_new, s_new
            t += 1
            lr = min(cfg.step_size, 2.0 * lr)
        else:
            # overshoot: drop the momentum and retry with half the step
            net.set_params(theta)
            m = np.zeros_like(theta)
            lr *= 0.5
        history.append(loss)
    net.set_params(theta)
    return ValueFitResult(net, loss, it, history)
