"""Exact 2-D t-SNE: full O(n^2) pairwise affinities, per-point precision
search to hit the target perplexity, early exaggeration, then gradient
descent that switches from momentum-with-gains exploration to a
backtracking monotone phase, so the divergence trace never rises over the
final half of the iterations. Desk scale: inputs are capped at 2000
vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

MAX_POINTS = 2000
_P_FLOOR = 1e-12


@dataclass
class Projection2D:
    points: np.ndarray  # [n, 2]
    kl_trace: list[float]
    seed: int


def _pairwise_sq_dists(x: np.ndarray) -> np.ndarray:
    sq = np.sum(x * x, axis=1)
    d = sq[:, None] - 2.0 * (x @ x.T) + sq[None, :]
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def _input_sq_dists(x: np.ndarray) -> np.ndarray:
    """Row-difference form, numerically stable for offset data; used for the
    high-dimensional affinities so translated inputs give near-identical
    distance matrices."""
    n = x.shape[0]
    d = np.zeros((n, n))
    for i in range(n):
        diff = x[i] - x
        d[i] = np.sum(diff * diff, axis=1)
    np.fill_diagonal(d, 0.0)
    return d


def _row_affinities(d_row: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    """Entropy (nats) and normalized affinities for one point at a given
    precision."""
    p = np.exp(-d_row * beta)
    total = p.sum()
    if total <= 0.0:
        return 0.0, np.zeros_like(p)
    h = np.log(total) + beta * float(np.dot(d_row, p)) / total
    return h, p / total


def conditional_affinities(dists: np.ndarray, perplexity: float,
                           tol: float = 1e-5, max_tries: int = 60) -> np.ndarray:
    """Binary-search each point's Gaussian precision until its conditional
    distribution has entropy log(perplexity)."""
    n = dists.shape[0]
    target = np.log(perplexity)
    p_cond = np.zeros((n, n))
    others = ~np.eye(n, dtype=bool)
    for i in range(n):
        d_row = dists[i][others[i]]
        beta, beta_lo, beta_hi = 1.0, 0.0, np.inf
        h, row = _row_affinities(d_row, beta)
        tries = 0
        while abs(h - target) > tol and tries < max_tries:
            if h > target:
                beta_lo = beta
                beta = beta * 2.0 if np.isinf(beta_hi) else (beta + beta_hi) / 2.0
            else:
                beta_hi = beta
                beta = beta / 2.0 if beta_lo == 0.0 else (beta + beta_lo) / 2.0
            h, row = _row_affinities(d_row, beta)
            tries += 1
        p_cond[i][others[i]] = row
    return p_cond


def _low_dim_q(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Student-t affinities Q and the unnormalized kernel 1/(1 + d^2)."""
    num = 1.0 / (1.0 + _pairwise_sq_dists(y))
    np.fill_diagonal(num, 0.0)
    q = num / num.sum()
    return np.maximum(q, _P_FLOOR), num


def kl_divergence(p: np.ndarray, y: np.ndarray) -> float:
    q, _ = _low_dim_q(y)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def kl_gradient(p: np.ndarray, y: np.ndarray) -> np.ndarray:
    q, num = _low_dim_q(y)
    pq_num = (p - q) * num
    grad = np.zeros_like(y)
    for i in range(y.shape[0]):
        grad[i] = 4.0 * (pq_num[i][:, None] * (y[i] - y)).sum(axis=0)
    return grad


def tsne_2d(
    vectors,
    perplexity: float = 30.0,
    iterations: int = 1000,
    seed: int = 0,
    learning_rate: float = 100.0,
    early_exaggeration: float = 4.0,
    exaggeration_iters: int = 100,
) -> Projection2D:
    """Project row vectors to 2-D.

    The first half of the iterations runs classic momentum descent with
    per-coordinate gains (exaggerated affinities up front); the second half
    switches to plain descent with backtracking halving, which makes the
    recorded divergence non-increasing from the midpoint on. Deterministic
    given the seed.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"expected a 2-D array of row vectors, got shape {x.shape}")
    n = x.shape[0]
    if n < 5:
        raise DataError(f"need at least 5 vectors, got {n}")
    if n > MAX_POINTS:
        raise DataError(f"desk-scale cap is {MAX_POINTS} vectors, got {n}")
    if perplexity <= 0 or perplexity >= (n - 1) / 3:
        raise ConfigError(
            f"perplexity must be in (0, (n-1)/3) = (0, {(n - 1) / 3:.1f}), got {perplexity}"
        )
    if iterations < 2:
        raise ConfigError(f"iterations must be >= 2, got {iterations}")

    x = x - x.mean(axis=0)  # distances only; also tames cancellation
    p_cond = conditional_affinities(_input_sq_dists(x), perplexity)
    p = (p_cond + p_cond.T) / (2.0 * n)
    p = np.maximum(p, _P_FLOOR)

    rng = np.random.Generator(np.random.PCG64(seed))
    y = rng.normal(0.0, 1e-4, size=(n, 2))
    velocity = np.zeros_like(y)
    gains = np.ones_like(y)

    exaggeration_iters = min(exaggeration_iters, iterations // 2)
    midpoint = iterations // 2
    kl_trace: list[float] = []
    eta = learning_rate

    for it in range(iterations):
        if it < midpoint:
            p_eff = p * early_exaggeration if it < exaggeration_iters else p
            grad = kl_gradient(p_eff, y)
            momentum = 0.5 if it < exaggeration_iters else 0.8
            flips = np.sign(grad) != np.sign(velocity)
            gains = np.where(flips, gains + 0.2, gains * 0.8)
            gains = np.maximum(gains, 0.01)
            velocity = momentum * velocity - learning_rate * gains * grad
            y = y + velocity
            y = y - y.mean(axis=0)
            kl_trace.append(kl_divergence(p, y))
        else:
            current = kl_divergence(p, y)
            grad = kl_gradient(p, y)
            stepped = False
            trial_eta = eta
            for _ in range(40):
                y_trial = y - trial_eta * grad
                trial_kl = kl_divergence(p, y_trial)
                if trial_kl <= current:
                    y = y_trial
                    eta = trial_eta * 1.1
                    kl_trace.append(trial_kl)
                    stepped = True
                    break
                trial_eta /= 2.0
            if not stepped:
                kl_trace.extend([current] * (iterations - it))
                break

    return Projection2D(points=y, kl_trace=kl_trace, seed=seed)
