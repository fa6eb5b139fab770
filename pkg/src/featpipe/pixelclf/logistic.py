"""Multinomial logistic regression with an L2 penalty.

Optimized with gradient descent under Armijo backtracking, which makes the
recorded loss sequence non-increasing by construction. Features are
standardized per dimension with statistics from the labeled pixels; the bias
is not penalized, so degenerate problems (all training points identical)
recover the empirical class frequencies exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class LogisticFit:
    weights: np.ndarray  # (K, D)
    bias: np.ndarray  # (K,)
    mean: np.ndarray  # (D,)
    scale: np.ndarray  # (D,)
    classes: np.ndarray  # (K,) original label values, ascending
    c_reg: float
    n_iter: int
    converged: bool
    grad_norm: float
    loss_history: list[float] = field(default_factory=list)


def _logsumexp(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=1, keepdims=True)
    return m + np.log(np.exp(z - m).sum(axis=1, keepdims=True))


def loss_and_grad(
    weights: np.ndarray,
    bias: np.ndarray,
    x: np.ndarray,
    y_idx: np.ndarray,
    l2: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy plus 0.5*l2*||W||^2 / N (bias unpenalized), with
    its analytic gradient."""
    n = x.shape[0]
    z = x @ weights.T + bias
    lse = _logsumexp(z)
    loss = float((lse[np.arange(n), 0] - z[np.arange(n), y_idx]).mean())
    loss += 0.5 * l2 * float((weights**2).sum()) / n

    p = np.exp(z - lse)
    p[np.arange(n), y_idx] -= 1.0
    p /= n
    g_w = p.T @ x + (l2 / n) * weights
    g_b = p.sum(axis=0)
    return loss, g_w, g_b


def fit_logistic(
    x: np.ndarray,
    y: np.ndarray,
    c_reg: float = 1.0,
    tol: float = 1e-4,
    max_iter: int = 500,
) -> LogisticFit:
    """Fit on (N, D) features and integer labels; returns the standardizing
    statistics alongside the weights."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("need >=2 classes to train a classifier")
    y_idx = np.searchsorted(classes, y)

    mean = x.mean(axis=0)
    std = x.std(axis=0)
    scale = np.where(std < 1e-12, 1.0, std)
    xs = (x - mean) / scale

    k, d = classes.size, x.shape[1]
    l2 = 1.0 / c_reg
    w = np.zeros((k, d))
    b = np.zeros(k)

    loss, g_w, g_b = loss_and_grad(w, b, xs, y_idx, l2)
    history = [loss]
    step = 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g_sq = float((g_w**2).sum() + (g_b**2).sum())
        g_norm = np.sqrt(g_sq)
        if g_norm <= tol:
            converged = True
            break
        while True:
            w_new = w - step * g_w
            b_new = b - step * g_b
            loss_new, gw_new, gb_new = loss_and_grad(w_new, b_new, xs, y_idx, l2)
            if loss_new <= loss - 1e-4 * step * g_sq:
                break
            step *= 0.5
            if step < 1e-20:
                # Cannot make progress at float precision; treat as converged.
                loss_new, gw_new, gb_new = loss, g_w, g_b
                w_new, b_new = w, b
                converged = True
                break
        w, b, loss, g_w, g_b = w_new, b_new, loss_new, gw_new, gb_new
        history.append(loss)
        if converged:
            break
        step = min(step * 2.0, 1e3)

    g_norm = float(np.sqrt((g_w**2).sum() + (g_b**2).sum()))
    return LogisticFit(
        weights=w,
        bias=b,
        mean=mean,
        scale=scale,
        classes=classes,
        c_reg=c_reg,
        n_iter=it,
        converged=converged or g_norm <= tol,
        grad_norm=g_norm,
        loss_history=history,
    )


def predict_proba(fit: LogisticFit, x: np.ndarray) -> np.ndarray:
    xs = (np.asarray(x, dtype=np.float64) - fit.mean) / fit.scale
    z = xs @ fit.weights.T + fit.bias
    return np.exp(z - _logsumexp(z))
