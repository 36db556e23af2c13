"""Per-sample deterministic natural gradient and the trust-region policy update.

For a junction pair with advantage ``A`` and action difference ``d = a_f - a_p``
the action-space gradient is ``g_a = A d / |d|^2``. It is pulled back through
the policy Jacobian ``J`` (4 x P) to ``g = J^T g_a`` and preconditioned by the
pseudoinverse of ``H = J^T D J`` where ``D`` is the inverse exploration
covariance. With ``L`` the Cholesky factor of ``D`` and the thin SVD
``L^T J = U S Vt``, ``H^+ = Vt^T S^-2 Vt``, so ``H`` is never formed.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from quadnpg.mlp import batch_output_jacobian

log = logging.getLogger(__name__)

RANK_RTOL = 1e-12
DEGENERATE_NOISE = 1e-12
TRUST_MARGIN = 1e-6


class RankDeficiencyWarning(RuntimeWarning):
    pass


class NoUpdateError(RuntimeError):
    """Every junction pair was discarded, so no policy step can be taken."""


@dataclass(frozen=True)
class PolicyOptConfig:
    step_size: float = 0.05
    trust_region: float = 0.1
    solver: str = "svd"
    cg_iterations: int = 10
    jacobian_chunk: int = 128

    def __post_init__(self):
        if self.step_size <= 0 or self.trust_region <= 0:
            raise ValueError("step_size and trust_region must be positive")
        if self.solver not in ("svd", "cg"):
            raise ValueError(f"unknown solver {self.solver!r} (use 'svd' or 'cg')")


@dataclass
class NaturalGradientResult:
    n: np.ndarray  # natural gradient, (..., P)
    g: np.ndarray  # raw parameter gradient, (..., P)
    mahalanobis_sq: np.ndarray  # n^T H n = n^T g
    rank: np.ndarray


@dataclass
class UpdateStats:
    mean_advantage: float
    alpha: float
    max_mahalanobis: float
    n_pairs: int
    n_filtered: int


def advantage(pair, gamma):
    return pair.r_f + gamma * pair.v_f_next - pair.v_p


def action_gradient(pair, A):
    """Two-point linear model of the advantage in action space: ``A d / |d|^2``."""
    d = np.asarray(pair.a_f, dtype=np.float64) - np.asarray(pair.a_p, dtype=np.float64)
    sq = np.sum(d * d, axis=-1)
    if np.any(np.sqrt(sq) < DEGENERATE_NOISE):
        raise ValueError("degenerate junction pair: perturbed and on-policy actions coincide")
    return np.asarray(A)[..., None] * d / sq[..., None]


def natural_gradient_svd(J, D_aa, g_a):
    """Exact minimum-norm solution of ``(J^T D J) n = J^T g_a``; ``J`` may be batched ``(K, a, P)``."""
    J = np.asarray(J, dtype=np.float64)
    g_a = np.asarray(g_a, dtype=np.float64)
    L = np.linalg.cholesky(np.asarray(D_aa, dtype=np.float64))
    M = np.swapaxes(L, -1, -2) @ J
    _, S, Vt = np.linalg.svd(M, full_matrices=False)
    cutoff = RANK_RTOL * S[..., :1]
    keep = S > cutoff
    rank = keep.sum(axis=-1)
    if np.any(rank < J.shape[-2]):
        warnings.warn(f"Jacobian rank below action dimension (min rank {rank.min()})", RankDeficiencyWarning)
    inv_sq = np.where(keep, 1.0 / np.where(keep, S, 1.0) ** 2, 0.0)
    g = np.einsum("...ap,...a->...p", J, g_a)
    coeff = np.einsum("...rp,...p->...r", Vt, g) * inv_sq
    n = np.einsum("...rp,...r->...p", Vt, coeff)
    return NaturalGradientResult(n, g, np.einsum("...p,...p->...", n, g), rank)


def natural_gradient_cg(J, D_aa, g_a, iters=10):
    """Conjugate gradient on ``(J^T D J) n = g`` with matrix-free Hessian-vector products."""
    J = np.asarray(J, dtype=np.float64)
    D = np.asarray(D_aa, dtype=np.float64)
    g_a = np.asarray(g_a, dtype=np.float64)
    if J.ndim == 3:
        parts = [natural_gradient_cg(J[k], D, g_a[k], iters) for k in range(len(J))]
        return NaturalGradientResult(*(np.stack([getattr(r, f) for r in parts]) for f in ("n", "g", "mahalanobis_sq", "rank")))

    def hvp(x):
        return J.T @ (D @ (J @ x))

    g = J.T @ g_a
    n = np.zeros_like(g)
    r = g.copy()
    p = r.copy()
    rr = r @ r
    stop = (1e-30 * rr) if rr > 0 else 0.0
    for _ in range(iters):
        if rr <= stop:
            break
        Hp = hvp(p)
        pHp = p @ Hp
        if pHp <= 0:
            break
        a = rr / pHp
        n = n + a * p
        r = r - a * Hp
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
    return NaturalGradientResult(n, g, np.asarray(n @ g), np.asarray(min(J.shape)))


def trust_region_step(alpha, delta, mahalanobis_sq):
    """Largest step ``<= alpha`` with ``step^2 * max_k m_k < delta`` (strict, via a small margin)."""
    worst = float(np.max(mahalanobis_sq)) if np.size(mahalanobis_sq) else 0.0
    if worst <= 0 or alpha * alpha * worst < delta * (1 - TRUST_MARGIN) ** 2:
        return alpha
    return min(alpha, np.sqrt(delta / worst) * (1 - TRUST_MARGIN))


def natural_gradients(policy, pairs, D_aa, A, cfg=PolicyOptConfig()):
    """Per-pair natural gradients, computed in Jacobian chunks to bound memory."""
    g_a = action_gradient(pairs, A)
    results = []
    for lo in range(0, len(pairs), cfg.jacobian_chunk):
        sl = slice(lo, lo + cfg.jacobian_chunk)
        J = batch_output_jacobian(policy, pairs.obs[sl])
        if cfg.solver == "svd":
            results.append(natural_gradient_svd(J, D_aa, g_a[sl]))
        else:
            results.append(natural_gradient_cg(J, D_aa, g_a[sl], cfg.cg_iterations))
    return NaturalGradientResult(*(np.concatenate([getattr(r, f) for r in results]) for f in ("n", "g", "mahalanobis_sq", "rank")))


def update_policy(policy, pairs, gamma, noise_cov, cfg=PolicyOptConfig()):
    """One trust-region natural-gradient step ``theta <- theta - (alpha'/K) sum_k n_k``.

    Pairs whose perturbation is numerically zero or whose natural gradient is
    non-finite are discarded.
    """
    D_aa = np.linalg.inv(np.asarray(noise_cov, dtype=np.float64))
    D_aa = (D_aa + D_aa.T) / 2
    d = pairs.a_f - pairs.a_p
    ok = np.linalg.norm(d, axis=-1) >= DEGENERATE_NOISE
    A = advantage(pairs, gamma)
    ok &= np.isfinite(A)
    n_filtered = int((~ok).sum())
    if not np.any(ok):
        raise NoUpdateError("all junction pairs are degenerate")
    kept = pairs[ok]
    A = A[ok]
    res = natural_gradients(policy, kept, D_aa, A, cfg)
    finite = np.all(np.isfinite(res.n), axis=-1) & np.isfinite(res.mahalanobis_sq)
    if not np.all(finite):
        warnings.warn(f"discarding {int((~finite).sum())} pairs with non-finite natural gradient", RuntimeWarning)
        n_filtered += int((~finite).sum())
        if not np.any(finite):
            raise NoUpdateError("no pair produced a finite natural gradient")
    n = res.n[finite]
    maha = res.mahalanobis_sq[finite]
    K = len(n)
    alpha = trust_region_step(cfg.step_size, cfg.trust_region, maha)
    theta = policy.params() - (alpha / K) * n.sum(axis=0)
    stats = UpdateStats(
        mean_advantage=float(np.mean(A[finite])),
        alpha=float(alpha),
        max_mahalanobis=float(np.max(maha)),
        n_pairs=K,
        n_filtered=n_filtered,
    )
    return policy.with_params(theta), stats
