"""
FirmCast - Optimizer Module

Adam with decoupled weight decay over a dictionary of numpy parameter arrays.

    m_t = beta1 * m_{t-1} + (1 - beta1) * g_t
    v_t = beta2 * v_{t-1} + (1 - beta2) * g_t^2
    m_hat = m_t / (1 - beta1^t),  v_hat = v_t / (1 - beta2^t)
    theta_t = theta_{t-1} - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta_{t-1})
"""

import logging
from typing import Dict, Mapping

import numpy as np

from utils.exceptions import ConfigurationError

logger = logging.getLogger(__name__)


class AdamW:
    """
    Adam with weight decay applied directly to the parameters.

    Parameters are updated in place, so the arrays handed in must be the ones
    the model reads from.
    """

    def __init__(
        self,
        parameters: Mapping[str, np.ndarray],
        lr: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.005,
    ):
        """
        Initialize optimizer state.

        Args:
            parameters: name -> array (updated in place by step())
            lr: Learning rate
            beta1: First-moment decay
            beta2: Second-moment decay
            eps: Denominator guard
            weight_decay: Decoupled decay coefficient

        Raises:
            ConfigurationError: If a hyperparameter is out of range
        """
        if not lr >= 0.0:
            raise ConfigurationError(f"Invalid learning rate: {lr}")
        if not 0.0 <= beta1 < 1.0:
            raise ConfigurationError(f"Invalid beta1: {beta1}")
        if not 0.0 <= beta2 < 1.0:
            raise ConfigurationError(f"Invalid beta2: {beta2}")
        if not eps >= 0.0:
            raise ConfigurationError(f"Invalid epsilon: {eps}")
        if not weight_decay >= 0.0:
            raise ConfigurationError(f"Invalid weight decay: {weight_decay}")

        self.parameters = dict(parameters)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.state: Dict[str, Dict[str, np.ndarray]] = {
            name: {
                "exp_avg": np.zeros_like(param, dtype=np.float64),
                "exp_avg_sq": np.zeros_like(param, dtype=np.float64),
            }
            for name, param in self.parameters.items()
        }
        logger.debug(f"AdamW: lr={lr}, beta1={beta1}, beta2={beta2}, weight_decay={weight_decay}")

    def step(self, gradients: Mapping[str, np.ndarray]) -> None:
        """
        Apply one update.

        Args:
            gradients: name -> gradient array, same shapes as the parameters

        Raises:
            ConfigurationError: On an unknown name or shape mismatch
        """
        self.step_count += 1
        bias1 = 1.0 - self.beta1 ** self.step_count
        bias2 = 1.0 - self.beta2 ** self.step_count

        for name, param in self.parameters.items():
            if name not in gradients:
                raise ConfigurationError(f"No gradient for parameter {name}")
            grad = gradients[name]
            if grad.shape != param.shape:
                raise ConfigurationError(f"Gradient shape {grad.shape} != parameter shape {param.shape} for {name}")

            state = self.state[name]
            exp_avg, exp_avg_sq = state["exp_avg"], state["exp_avg_sq"]
            exp_avg *= self.beta1
            exp_avg += (1.0 - self.beta1) * grad
            exp_avg_sq *= self.beta2
            exp_avg_sq += (1.0 - self.beta2) * grad * grad

            update = (exp_avg / bias1) / (np.sqrt(exp_avg_sq / bias2) + self.eps)
            param -= self.lr * (update + self.weight_decay * param)
