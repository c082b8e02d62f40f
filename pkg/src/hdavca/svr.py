"""Epsilon-insensitive support vector regression with an RBF kernel.

The dual problem is solved by sequential minimal optimization with
deterministic max-violating-pair working-set selection; feature vectors are
min-max scaled to [-1, 1] per active dimension before entering the kernel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

DEFAULT_C = 256.0
DEFAULT_GAMMA = 1.0 / 72.0
DEFAULT_EPSILON = 0.1

KKT_TOL = 1e-3
MAX_ITER = 1_000_000

MODEL_FORMAT = "hdavca-svr-v1"


@dataclass(frozen=True)
class FeatureScaler:
    """Per-dimension min-max map to [-1, 1] fitted on training data.

    Constant and masked-out dimensions map to 0.
    """

    lo: np.ndarray
    hi: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if not (self.lo.shape == self.hi.shape == self.mask.shape):
            raise ValueError("scaler fields must share one shape")
        if np.any(self.lo > self.hi):
            raise ValueError("scaler min exceeds max")

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.lo.shape[0]:
            raise ValueError(f"length mismatch: expected {self.lo.shape[0]} dims, got {x.shape[1]}")
        span = self.hi - self.lo
        out = np.zeros_like(x)
        active = self.mask & (span > 0)
        out[:, active] = -1.0 + 2.0 * (x[:, active] - self.lo[active]) / span[active]
        return out[0] if single else out


def scale_features(x: np.ndarray, mask: np.ndarray | None = None):
    """Fit a min-max scaler on the rows of x and return (scaled x, scaler)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError(f"expected a non-empty 2-D sample matrix, got shape {x.shape}")
    if mask is None:
        mask = np.ones(x.shape[1], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    scaler = FeatureScaler(lo=x.min(axis=0), hi=x.max(axis=0), mask=mask)
    return scaler.apply(x), scaler


@dataclass(frozen=True)
class SvrModel:
    """Trained regressor: kernel expansion over support vectors plus a bias."""

    support_vectors: np.ndarray = field(repr=False)  # scaled space
    coefficients: np.ndarray = field(repr=False)
    bias: float
    gamma: float
    C: float
    epsilon: float
    scaler: FeatureScaler
    n_iterations: int = 0

    def __post_init__(self):
        if np.any(np.abs(self.coefficients) > self.C * (1 + 1e-9)):
            raise ValueError("dual coefficients exceed the box constraint")


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """exp(-gamma * squared distance) for all row pairs of a and b."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


def svr_train(
    x: np.ndarray,
    y: np.ndarray,
    c: float = DEFAULT_C,
    gamma: float = DEFAULT_GAMMA,
    epsilon: float = DEFAULT_EPSILON,
    mask: np.ndarray | None = None,
    tol: float = KKT_TOL,
    max_iter: int = MAX_ITER,
) -> SvrModel:
    """Fit an epsilon-SVR on raw feature rows (the scaler is fitted here)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError(f"sample/label mismatch: {x.shape} vs {y.shape}")
    if x.shape[0] < 2:
        raise ValueError("need at least 2 training samples")
    if not np.all(np.isfinite(y)):
        raise ValueError("labels must be finite")

    xs, scaler = scale_features(x, mask)
    kernel = rbf_kernel(xs, xs, gamma)
    beta, bias, n_iter = _solve_smo(kernel, y, c, epsilon, tol, max_iter)

    sv = np.abs(beta) > 1e-12
    return SvrModel(
        support_vectors=xs[sv],
        coefficients=beta[sv],
        bias=bias,
        gamma=gamma,
        C=c,
        epsilon=epsilon,
        scaler=scaler,
        n_iterations=n_iter,
    )


def _solve_smo(kernel, y, c, epsilon, tol, max_iter):
    """SMO on the 2n-variable dual with max-violating-pair selection.

    Variables are stacked (alpha_plus, alpha_minus) with signs
    u = (+1..., -1...); the equality constraint sum(beta) = 0 is preserved by
    every pairwise step. Returns (beta, bias, iterations).
    """
    n = len(y)
    u = np.concatenate([np.ones(n), -np.ones(n)])
    u_pos = u > 0
    # Track -u*gradient directly; the pairwise update only shifts it by the
    # kernel-column difference (u_t^2 = 1).
    minus_ug = np.concatenate([y - epsilon, y + epsilon])
    alpha = np.zeros(2 * n)
    bound_eps = 1e-12 * max(c, 1.0)
    diag = np.diag(kernel)

    it = 0
    while it < max_iter:
        at_upper = alpha >= c - bound_eps
        at_lower = alpha <= bound_eps
        up = np.where(u_pos, ~at_upper, ~at_lower)
        low = np.where(u_pos, ~at_lower, ~at_upper)
        cand_up = np.where(up, minus_ug, -np.inf)
        cand_low = np.where(low, minus_ug, np.inf)
        i = int(np.argmax(cand_up))
        j = int(np.argmin(cand_low))
        m_val = cand_up[i]
        big_m_val = cand_low[j]
        if not np.isfinite(m_val) or not np.isfinite(big_m_val):
            break
        if m_val - big_m_val < tol:
            break

        ki, kj = i % n, j % n
        kappa = diag[ki] + diag[kj] - 2.0 * kernel[ki, kj]
        delta = (m_val - big_m_val) / max(kappa, 1e-12)
        lim_i = (c - alpha[i]) if u_pos[i] else alpha[i]
        lim_j = alpha[j] if u_pos[j] else (c - alpha[j])
        delta = min(delta, lim_i, lim_j)

        alpha[i] += u[i] * delta
        alpha[j] -= u[j] * delta
        kcol = delta * (kernel[:, ki] - kernel[:, kj])
        minus_ug[:n] -= kcol
        minus_ug[n:] -= kcol
        it += 1

    free = (alpha > bound_eps) & (alpha < c - bound_eps)
    if free.any():
        bias = float(np.mean(minus_ug[free]))
    else:
        at_upper = alpha >= c - bound_eps
        at_lower = alpha <= bound_eps
        up = np.where(u > 0, ~at_upper, ~at_lower)
        low = np.where(u > 0, ~at_lower, ~at_upper)
        hi = minus_ug[up].max() if up.any() else -np.inf
        lo = minus_ug[low].min() if low.any() else np.inf
        if np.isfinite(hi) and np.isfinite(lo):
            bias = float((hi + lo) / 2.0)
        else:
            bias = float(np.mean(y))
    beta = alpha[:n] - alpha[n:]
    return beta, bias, it


def kkt_violation(model: SvrModel, x: np.ndarray, y: np.ndarray) -> float:
    """Recompute the max KKT violation of a model on its training set."""
    xs = model.scaler.apply(np.asarray(x, dtype=np.float64))
    f = _expand(model, xs) - model.bias  # sum of beta*K without the bias
    n = len(y)
    beta_full = np.zeros(n)
    # Recover beta per training point by matching support vectors.
    sv_index = _match_rows(xs, model.support_vectors)
    beta_full[sv_index] = model.coefficients
    eps = model.epsilon
    grad_plus = f + eps - y
    grad_minus = -f + eps + y
    alpha_plus = np.maximum(beta_full, 0.0)
    alpha_minus = np.maximum(-beta_full, 0.0)
    c = model.C
    minus_ug = np.concatenate([-grad_plus, grad_minus])
    alpha = np.concatenate([alpha_plus, alpha_minus])
    u = np.concatenate([np.ones(n), -np.ones(n)])
    tolb = 1e-9 * max(c, 1.0)
    up = np.where(u > 0, alpha < c - tolb, alpha > tolb)
    low = np.where(u > 0, alpha > tolb, alpha < c - tolb)
    if not up.any() or not low.any():
        return 0.0
    return float(minus_ug[up].max() - minus_ug[low].min())


def _match_rows(xs: np.ndarray, rows: np.ndarray) -> np.ndarray:
    idx = []
    used = set()
    for r in rows:
        cand = np.flatnonzero(np.all(xs == r, axis=1))
        pick = next(int(cc) for cc in cand if int(cc) not in used)
        used.add(pick)
        idx.append(pick)
    return np.array(idx, dtype=np.int64)


def dual_objective(kernel: np.ndarray, y: np.ndarray, epsilon: float, beta: np.ndarray) -> float:
    """Dual objective in beta form: 0.5 b'Kb + eps*sum|b| - y'b (minimized)."""
    beta = np.asarray(beta, dtype=np.float64)
    return float(
        0.5 * beta @ kernel @ beta + epsilon * np.sum(np.abs(beta)) - y @ beta
    )


def _expand(model: SvrModel, xs: np.ndarray) -> np.ndarray:
    if len(model.coefficients) == 0:
        return np.full(len(np.atleast_2d(xs)), model.bias)
    k = rbf_kernel(np.atleast_2d(xs), model.support_vectors, model.gamma)
    return k @ model.coefficients + model.bias


def svr_predict(model: SvrModel, x: np.ndarray) -> float:
    """Predict one raw feature vector."""
    xs = model.scaler.apply(np.asarray(x, dtype=np.float64))
    return float(_expand(model, xs[None, :])[0])


def svr_predict_batch(model: SvrModel, x: np.ndarray) -> np.ndarray:
    xs = model.scaler.apply(np.asarray(x, dtype=np.float64))
    return _expand(model, xs)


def save_model(model: SvrModel, path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "support_vectors": model.support_vectors.tolist(),
        "coefficients": model.coefficients.tolist(),
        "bias": model.bias,
        "gamma": model.gamma,
        "C": model.C,
        "epsilon": model.epsilon,
        "scaler": {
            "lo": model.scaler.lo.tolist(),
            "hi": model.scaler.hi.tolist(),
            "mask": model.scaler.mask.astype(int).tolist(),
        },
        "n_iterations": model.n_iterations,
    }
    with open(str(path), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)


def load_model(path) -> SvrModel:
    try:
        with open(str(path), "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"malformed model file: {path}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"model format mismatch in {path}: {doc.get('format')!r}")
    try:
        scaler = FeatureScaler(
            lo=np.array(doc["scaler"]["lo"], dtype=np.float64),
            hi=np.array(doc["scaler"]["hi"], dtype=np.float64),
            mask=np.array(doc["scaler"]["mask"], dtype=bool),
        )
        dim = scaler.lo.shape[0]
        sv = np.array(doc["support_vectors"], dtype=np.float64).reshape(-1, dim)
        return SvrModel(
            support_vectors=sv,
            coefficients=np.array(doc["coefficients"], dtype=np.float64),
            bias=float(doc["bias"]),
            gamma=float(doc["gamma"]),
            C=float(doc["C"]),
            epsilon=float(doc["epsilon"]),
            scaler=scaler,
            n_iterations=int(doc.get("n_iterations", 0)),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed model file: {path}") from exc


def grid_search(
    x: np.ndarray,
    y: np.ndarray,
    epsilon: float = DEFAULT_EPSILON,
    c_grid=tuple(2.0**k for k in range(0, 13, 2)),
    gamma_grid=tuple(2.0**k for k in range(-10, 3, 2)),
    n_folds: int = 3,
    seed: int = 0,
    mask: np.ndarray | None = None,
) -> tuple[float, float]:
    """Pick (C, gamma) by k-fold RMSE on the given (training) data only."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    folds = np.array_split(order, n_folds)

    best = (np.inf, DEFAULT_C, DEFAULT_GAMMA)
    for c in c_grid:
        for gamma in gamma_grid:
            errs = []
            for k in range(n_folds):
                test_idx = folds[k]
                train_idx = np.concatenate([folds[m] for m in range(n_folds) if m != k])
                if len(train_idx) < 2 or len(test_idx) == 0:
                    continue
                model = svr_train(x[train_idx], y[train_idx], c, gamma, epsilon, mask=mask)
                pred = svr_predict_batch(model, x[test_idx])
                errs.append(np.sqrt(np.mean((pred - y[test_idx]) ** 2)))
            score = float(np.mean(errs)) if errs else np.inf
            if score < best[0]:
                best = (score, c, gamma)
    return best[1], best[2]
