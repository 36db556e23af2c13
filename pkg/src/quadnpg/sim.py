"""Rigid-body quadrotor simulator.

Rotor layout ("+" configuration), positions in the body frame::

    rotor 0: (+l, 0, 0)    spin sign +1
    rotor 1: (0, +l, 0)    spin sign -1
    rotor 2: (-l, 0, 0)    spin sign +1
    rotor 3: (0, -l, 0)    spin sign -1

Each rotor pushes along body +z, so ``tau = sum r_i x (0, 0, T_i)`` gives
``tau_x = l (T1 - T3)`` and ``tau_y = l (T2 - T0)``. Yaw comes from rotor
reaction torque ``tau_z = kappa * (T0 - T1 + T2 - T3)``.

States are batched: every array may carry leading batch dimensions. The flat
array layout used by the rollout code is ``[p(3), R row-major(9), v(3), w(3)]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from quadnpg import so3

STATE_DIM = 18


class DivergenceError(FloatingPointError):
    """Raised when the integrated state is non-finite or spins too fast."""


@dataclass(frozen=True)
class QuadParams:
    mass: float = 0.665
    inertia: tuple = (0.007, 0.007, 0.012)
    arm_length: float = 0.17
    kappa: float = 0.016
    gravity: float = 9.81
    dt: float = 0.01
    max_omega: float = 100.0

    def __post_init__(self):
        if self.mass <= 0 or self.dt <= 0 or self.arm_length <= 0 or self.kappa < 0:
            raise ValueError("mass, dt and arm_length must be positive and kappa non-negative")
        if len(self.inertia) != 3 or min(self.inertia) <= 0:
            raise ValueError("inertia must be three positive diagonal entries")

    @property
    def hover_thrust(self):
        return self.mass * self.gravity / 4.0

    def allocation_matrix(self):
        """Maps rotor thrusts to (total force, tau_x, tau_y, tau_z)."""
        l, k = self.arm_length, self.kappa
        return np.array(
            [
                [1.0, 1.0, 1.0, 1.0],
                [0.0, l, 0.0, -l],
                [-l, 0.0, l, 0.0],
                [k, -k, k, -k],
            ]
        )


@dataclass
class QuadState:
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    w: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def to_array(self):
        batch = np.shape(self.p)[:-1]
        R = np.reshape(self.R, batch + (9,))
        return np.concatenate([self.p, R, self.v, self.w], axis=-1)

    @classmethod
    def from_array(cls, x):
        x = np.asarray(x, dtype=np.float64)
        batch = x.shape[:-1]
        return cls(
            p=x[..., 0:3],
            R=x[..., 3:12].reshape(batch + (3, 3)),
            v=x[..., 12:15],
            w=x[..., 15:18],
        )

    def is_finite(self):
        return bool(np.all(np.isfinite(self.to_array())))


def threshold(T):
    T = np.asarray(T, dtype=np.float64)
    if not np.all(np.isfinite(T)):
        raise DivergenceError("non-finite thrust command")
    return np.maximum(T, 0.0)


def allocate(T, params):
    """Total body-z force and body torque produced by rotor thrusts ``T``."""
    wrench = np.asarray(T, dtype=np.float64) @ params.allocation_matrix().T
    return wrench[..., 0], wrench[..., 1:]


def torque_to_thrust(tau, params):
    """Rotor thrust deltas with zero net force that realize body torque ``tau``."""
    tau = np.asarray(tau, dtype=np.float64)
    wrench = np.concatenate([np.zeros(tau.shape[:-1] + (1,)), tau], axis=-1)
    return wrench @ np.linalg.inv(params.allocation_matrix()).T


def step_batch(state, T, params):
    """One semi-implicit Euler step with exponential-map attitude update.

    Returns ``(next_state, ok)`` where ``ok`` flags lanes that stayed finite and
    below the angular-velocity cap.
    """
    force, tau = allocate(T, params)
    m, dt = params.mass, params.dt
    inertia = np.asarray(params.inertia, dtype=np.float64)

    acc = state.R[..., :, 2] * (force / m)[..., None]
    acc = acc + np.array([0.0, 0.0, -params.gravity])
    v = state.v + acc * dt
    p = state.p + v * dt

    w = state.w
    w_dot = (tau - np.cross(w, w * inertia)) / inertia
    w = w + w_dot * dt
    R = state.R @ so3.exp(w * dt)

    drift = so3.orthonormality_error(R)
    if np.any(drift > 1e-9):
        bad = drift > 1e-9
        R = R.copy()
        R[bad] = so3.orthonormalize(R[bad])

    nxt = QuadState(p=p, R=R, v=v, w=w)
    flat = nxt.to_array()
    ok = np.all(np.isfinite(flat), axis=-1) & (np.linalg.norm(np.nan_to_num(w, nan=np.inf), axis=-1) <= params.max_omega)
    return nxt, ok


def step(state, T, params):
    nxt, ok = step_batch(state, T, params)
    if not np.all(ok):
        raise DivergenceError("simulation diverged (non-finite state or angular velocity above cap)")
    return nxt


@dataclass(frozen=True)
class PDGains:
    kp: tuple = (-0.2, -0.2, -0.2 / 6.0)
    kd: tuple = (-0.06, -0.06, -0.06 / 6.0)


def pd_attitude(state, gains=PDGains()):
    """Body torque ``kp * R^T q + kd * w_body`` with ``q`` the Euler vector of ``R``.

    The state stores angular velocity in the body frame, which is already
    ``R^T`` applied to the world-frame rate.
    """
    q = so3.log(state.R)
    q_body = np.einsum("...ji,...j->...i", state.R, q)
    return np.asarray(gains.kp) * q_body + np.asarray(gains.kd) * state.w
