"""Rotation-group helpers: hat/vee, exponential and logarithm maps, uniform sampling.

All functions accept arbitrary leading batch dimensions, i.e. vectors of shape
``(..., 3)`` and matrices of shape ``(..., 3, 3)``.
"""
from __future__ import annotations

import numpy as np

_SMALL_ANGLE = 1e-6


def hat(w):
    w = np.asarray(w, dtype=np.float64)
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def vee(S):
    S = np.asarray(S, dtype=np.float64)
    return np.stack([S[..., 2, 1], S[..., 0, 2], S[..., 1, 0]], axis=-1)


def exp(w):
    """Rodrigues formula. ``w`` is an Euler vector (axis times angle)."""
    w = np.asarray(w, dtype=np.float64)
    theta = np.linalg.norm(w, axis=-1)
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    # Taylor series below the threshold keeps the coefficients accurate.
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    K = hat(w)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + a[..., None, None] * K + b[..., None, None] * (K @ K)


def log(R):
    """Euler vector of a rotation matrix.

    At an angle of exactly pi the axis sign is ambiguous. The axis is then read
    from the column of ``(R + I) / 2`` with the largest diagonal entry, and its
    sign is chosen so that the first nonzero component is positive.
    """
    R = np.asarray(R, dtype=np.float64)
    cos_t = np.clip((np.trace(R, axis1=-2, axis2=-1) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_t)
    skew_part = vee(R - np.swapaxes(R, -1, -2)) / 2.0  # = sin(theta) * axis
    sin_t = np.sin(theta)

    small = theta < _SMALL_ANGLE
    near_pi = np.pi - theta < 1e-4
    regular = ~(small | near_pi)

    out = np.zeros(R.shape[:-2] + (3,))
    scale = np.where(small, 1.0 + theta**2 / 6.0, theta / np.where(regular, sin_t, 1.0))
    out = np.where((small | regular)[..., None], skew_part * scale[..., None], out)

    if np.any(near_pi):
        Rp = R[near_pi]
        c = cos_t[near_pi][..., None, None]
        # symmetric part is cos*I + (1 - cos) a a^T
        B = ((Rp + np.swapaxes(Rp, -1, -2)) / 2.0 - c * np.eye(3)) / (1.0 - c)
        idx = np.argmax(np.diagonal(B, axis1=-2, axis2=-1), axis=-1)
        cols = B[np.arange(len(Rp)), :, idx]
        axis = cols / np.linalg.norm(cols, axis=-1, keepdims=True)
        sp = skew_part[near_pi]
        dots = np.einsum("...i,...i->...", axis, sp)
        # Off pi the skew part fixes the sign; exactly at pi use the canonical sign.
        exact = np.abs(dots) < 1e-15
        first = axis[np.arange(len(axis)), np.argmax(np.abs(axis) > 1e-12, axis=-1)]
        sign = np.where(exact, np.sign(first), np.sign(dots))
        out[near_pi] = axis * (sign * theta[near_pi])[..., None]
    return out


def orthonormality_error(R):
    R = np.asarray(R, dtype=np.float64)
    E = np.swapaxes(R, -1, -2) @ R - np.eye(3)
    return np.max(np.abs(E), axis=(-2, -1))


def orthonormalize(R):
    """Closest rotation matrix (polar factor) via SVD."""
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    flip = np.linalg.det(Q) < 0
    if np.any(flip):
        U = U.copy()
        U[flip, :, -1] *= -1
        Q = U @ Vt
    return Q


def quat_to_matrix(q):
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
            np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
            np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
        ],
        axis=-2,
    )


def random_rotation(rng, size=None):
    """Haar-uniform rotations from normalized 4-D Gaussian quaternions."""
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    q = rng.standard_normal(shape + (4,))
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    return quat_to_matrix(q)


def rot_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
