"""Correlation metrics and the repeated random-split evaluation protocol."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import svr
from .features import ABLATION_MASKS, build_mask, mask_families

METRIC_NAMES = ("plcc", "srcc", "krcc", "rmse")


def _check_pair(pred, mos, min_len=2):
    p = np.asarray(pred, dtype=np.float64).ravel()
    m = np.asarray(mos, dtype=np.float64).ravel()
    if p.shape != m.shape:
        raise ValueError(f"length mismatch: {p.shape[0]} vs {m.shape[0]}")
    if p.shape[0] < min_len:
        raise ValueError(f"need at least {min_len} points, got {p.shape[0]}")
    return p, m


def plcc(pred, mos) -> float:
    """Pearson linear correlation coefficient."""
    p, m = _check_pair(pred, mos)
    dp = p - p.mean()
    dm = m - m.mean()
    np_ = np.sqrt(np.sum(dp * dp))
    nm = np.sqrt(np.sum(dm * dm))
    if np_ == 0.0 or nm == 0.0:
        raise ValueError("constant input has no linear correlation")
    return float(np.sum(dp * dm) / (np_ * nm))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing their average rank."""
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def srcc(pred, mos) -> float:
    """Spearman rank correlation: Pearson on average ranks."""
    p, m = _check_pair(pred, mos)
    rp = _average_ranks(p)
    rm = _average_ranks(m)
    if np.all(rp == rp[0]) or np.all(rm == rm[0]):
        raise ValueError("constant ranks")
    return plcc(rp, rm)


def krcc(pred, mos) -> float:
    """Kendall rank correlation, tie-corrected (tau-b)."""
    p, m = _check_pair(pred, mos)
    sp = np.sign(p[:, None] - p[None, :])
    sm = np.sign(m[:, None] - m[None, :])
    iu = np.triu_indices(len(p), k=1)
    concordance = float(np.sum(sp[iu] * sm[iu]))
    n0 = len(iu[0])
    n1 = n0 - float(np.sum(np.abs(sp[iu])))  # tied pairs in pred
    n2 = n0 - float(np.sum(np.abs(sm[iu])))
    denom = np.sqrt((n0 - n1) * (n0 - n2))
    if denom == 0.0:
        raise ValueError("constant ranks")
    return float(concordance / denom)


def rmse(pred, mos) -> float:
    p, m = _check_pair(pred, mos, min_len=1)
    return float(np.sqrt(np.mean((p - m) ** 2)))


def fit_logistic(pred, mos):
    """Optional 4-parameter logistic remap of predictions before PLCC/RMSE."""
    from scipy.optimize import curve_fit

    p, m = _check_pair(pred, mos)

    def f(x, a, b, c, d):
        return (a - d) / (1.0 + np.exp(-(x - c) / max(abs(b), 1e-9))) + d

    p0 = [m.max(), (p.max() - p.min()) / 4 + 1e-6, p.mean(), m.min()]
    try:
        popt, _ = curve_fit(f, p, m, p0=p0, maxfev=20000)
        return f(p, *popt)
    except Exception:
        return p


def compute_metrics(pred, mos, logistic: bool = False) -> dict[str, float]:
    p = np.asarray(pred, dtype=np.float64)
    mapped = fit_logistic(p, mos) if logistic else p
    return {
        "plcc": plcc(mapped, mos),
        "srcc": srcc(p, mos),
        "krcc": krcc(p, mos),
        "rmse": rmse(mapped, mos),
    }


# ---------------------------------------------------------------------------
# repeated random-split protocol


@dataclass(frozen=True)
class EvalReport:
    n_splits: int
    train_frac: float
    seed: int
    group_by_content: bool
    mask_families: tuple[str, ...]
    per_split: list[dict] = field(repr=False)
    aggregate: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_splits": self.n_splits,
            "train_frac": self.train_frac,
            "seed": self.seed,
            "group_by_content": self.group_by_content,
            "mask": list(self.mask_families),
            "per_split": self.per_split,
            "aggregate": self.aggregate,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _aggregate(per_split: list[dict]) -> dict:
    agg = {"mean": {}, "median": {}}
    for name in METRIC_NAMES:
        vals = np.array([s[name] for s in per_split])
        agg["mean"][name] = float(vals.mean())
        agg["median"][name] = float(np.median(vals))
    return agg


def split_indices(rng, n: int, train_frac: float, content_ids=None, grouped: bool = True):
    """One train/test split; grouped mode keeps a content id on one side only."""
    if n < 2:
        raise ValueError("too few items to split")
    if not grouped or content_ids is None:
        order = rng.permutation(n)
        n_train = int(round(train_frac * n))
        n_train = min(max(n_train, 1), n - 1)
        return np.sort(order[:n_train]), np.sort(order[n_train:])

    content_ids = np.asarray(content_ids)
    groups = np.unique(content_ids)
    if len(groups) < 2:
        raise ValueError("need at least 2 content groups for grouped splitting")
    perm = rng.permutation(len(groups))
    counts = np.array([np.sum(content_ids == groups[g]) for g in perm])
    cum = np.cumsum(counts)
    target = train_frac * n
    # Cut after the group whose cumulative count lands nearest the target,
    # keeping at least one group on each side.
    cuts = np.arange(len(groups) - 1)
    best_cut = cuts[np.argmin(np.abs(cum[cuts] - target))]
    train_groups = set(groups[perm[: best_cut + 1]])
    train_mask = np.array([cid in train_groups for cid in content_ids])
    train_idx = np.flatnonzero(train_mask)
    test_idx = np.flatnonzero(~train_mask)
    if len(test_idx) == 0 or len(train_idx) == 0:
        raise ValueError("empty split side")
    return train_idx, test_idx


def cross_validate(
    x: np.ndarray,
    mos: np.ndarray,
    content_ids=None,
    n_splits: int = 100,
    train_frac: float = 0.8,
    seed: int = 0,
    group_by_content: bool = True,
    mask: np.ndarray | None = None,
    svr_c: float = svr.DEFAULT_C,
    svr_gamma: float = svr.DEFAULT_GAMMA,
    svr_epsilon: float = svr.DEFAULT_EPSILON,
    grid_search: bool = False,
    logistic: bool = False,
    on_split=None,
) -> EvalReport:
    """Repeated random 80/20-style evaluation, reproducible from the seed.

    Each split trains (scaler included) on the training side only, predicts
    the held-out side and scores all four metrics. on_split, when given, is
    called with (split_index, train_idx, test_idx, model) after each split.
    """
    x = np.asarray(x, dtype=np.float64)
    mos = np.asarray(mos, dtype=np.float64)
    if len(x) != len(mos):
        raise ValueError(f"feature/label mismatch: {len(x)} vs {len(mos)}")
    if len(x) < 5:
        raise ValueError(f"too few items for cross validation: {len(x)}")
    if not np.all(np.isfinite(mos)):
        raise ValueError("labels must be finite (missing mos?)")
    if mask is None:
        mask = np.ones(x.shape[1], dtype=bool)

    per_split = []
    for split in range(n_splits):
        rng = np.random.default_rng([seed, split])
        train_idx, test_idx = split_indices(
            rng, len(x), train_frac, content_ids=content_ids, grouped=group_by_content
        )
        c, gamma = svr_c, svr_gamma
        if grid_search:
            c, gamma = svr.grid_search(
                x[train_idx], mos[train_idx], epsilon=svr_epsilon,
                seed=seed + split, mask=mask,
            )
        model = svr.svr_train(
            x[train_idx], mos[train_idx], c, gamma, svr_epsilon, mask=mask
        )
        pred = svr.svr_predict_batch(model, x[test_idx])
        metrics = compute_metrics(pred, mos[test_idx], logistic=logistic)
        metrics["split"] = split
        per_split.append(metrics)
        if on_split is not None:
            on_split(split, train_idx, test_idx, model)

    return EvalReport(
        n_splits=n_splits,
        train_frac=train_frac,
        seed=seed,
        group_by_content=bool(group_by_content and content_ids is not None),
        mask_families=mask_families(mask),
        per_split=per_split,
        aggregate=_aggregate(per_split),
    )


def ablate(x, mos, content_ids=None, **cv_kwargs) -> dict[str, EvalReport]:
    """Evaluate every ablation mask (leave-one-out set plus NR combination)."""
    reports = {}
    for name, families in ABLATION_MASKS.items():
        reports[name] = cross_validate(
            x, mos, content_ids=content_ids, mask=build_mask(families), **cv_kwargs
        )
    return reports


def format_report_table(reports: dict[str, EvalReport]) -> str:
    """Human-readable comparison of aggregate metrics across masks."""
    lines = []
    header = f"{'mask':24s} " + " ".join(f"{m:>8s}" for m in METRIC_NAMES)
    lines.append(header + "   (mean / median)")
    for name, rep in reports.items():
        mean = rep.aggregate["mean"]
        med = rep.aggregate["median"]
        row = f"{name:24s} " + " ".join(f"{mean[m]:8.4f}" for m in METRIC_NAMES)
        row += "   " + " ".join(f"{med[m]:8.4f}" for m in METRIC_NAMES)
        lines.append(row)
    return "\n".join(lines)
