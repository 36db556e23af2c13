"""Scalar linear system with quadratic cost, used to check the junction-pair gradient estimate.

Dynamics ``s' = a s + b u``, cost ``q s^2 + rho u^2``. For a linear policy
``u = k s`` the value is ``V(s) = P s^2`` with
``P = (q + rho k^2) / (1 - gamma (a + b k)^2)``, so the action derivative of
``Q`` on-policy is ``2 rho k s + 2 gamma P b (a + b k) s``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LinearQuadraticTask:
    a: float = 1.0
    b: float = 0.5
    q: float = 1.0
    rho: float = 0.1
    gamma: float = 0.99
    init_bound: float = 1.0

    obs_dim = 1
    act_dim = 1

    def initial_state(self, rng):
        return rng.uniform(-self.init_bound, self.init_bound, 1)

    def observe(self, x):
        return np.asarray(x, dtype=np.float64)

    def transition(self, x, actions):
        c = self.q * x[:, 0] ** 2 + self.rho * actions[:, 0] ** 2
        return self.a * x + self.b * actions, c, np.ones(len(x), dtype=bool)

    def value_coefficient(self, k):
        closed = self.a + self.b * k
        if self.gamma * closed**2 >= 1:
            raise ValueError("policy does not stabilize the discounted system")
        return (self.q + self.rho * k * k) / (1 - self.gamma * closed**2)

    def q_action_derivative(self, k, s):
        P = self.value_coefficient(k)
        return 2 * self.rho * k * s + 2 * self.gamma * P * self.b * (self.a + self.b * k) * s

    def policy_gradient(self, k, states):
        """Sample mean of ``d pi / d (k, bias) * dQ/da`` over ``states`` for ``u = k s + 0``."""
        s = np.asarray(states, dtype=np.float64).ravel()
        qa = self.q_action_derivative(k, s)
        return np.array([np.mean(s * qa), np.mean(qa)])
