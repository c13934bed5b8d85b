"""Performance indicators computed from session logs.

Discrete indicators (macro one-vs-all accuracy and F-score, latency, error
blocks) follow the confusion-matrix conventions used for asynchronous state
decoding: true negatives of a state include all samples of all other states,
latency windows are excluded from the sample-based indicators, and an error
block is a maximal run of consecutive misclassified ticks.  Continuous
decoding quality is the mean normalized dot product between predicted and
optimal movement vectors; reaching quality is the percentage of targets hit
(SR) and the path-over-straight-line ratio (R-ratio, computed on hit trials).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import stats as sstats

from .features import KIND_TRANSLATION, ControlLayout
from .sessionlog import SessionLog


# ---------------------------------------------------------------------------
# confusion matrix, accuracy, F-score
# ---------------------------------------------------------------------------

def confusion_matrix(instructed, decoded, n_states: int, included=None) -> np.ndarray:
    """(n_states, n_states) counts, rows = instructed state, cols = decoded."""
    instructed = np.asarray(instructed, dtype=np.intp)
    decoded = np.asarray(decoded, dtype=np.intp)
    if included is not None:
        keep = np.asarray(included, dtype=bool)
        instructed = instructed[keep]
        decoded = decoded[keep]
    cm = np.zeros((n_states, n_states), dtype=np.int64)
    np.add.at(cm, (instructed, decoded), 1)
    return cm


def _counts(cm: np.ndarray):
    cm = np.asarray(cm, dtype=np.float64)
    total = cm.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    tp = np.diag(cm)
    fn = cm.sum(axis=1) - tp
    fp = cm.sum(axis=0) - tp
    tn = total - tp - fn - fp
    return tp, fn, fp, tn, total


def accuracy_fscore(cm: np.ndarray, beta: float = 1.0) -> tuple[float, float]:
    """Macro one-vs-all accuracy and F-score.

    acc = mean_k (tp_k + tn_k) / (tp_k + tn_k + fp_k + fn_k); the F-score term
    of a class with zero precision and recall contributes 0.
    """
    tp, fn, fp, tn, _ = _counts(cm)
    acc = float(np.mean((tp + tn) / (tp + tn + fp + fn)))
    precision = np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), 0.0)
    recall = np.where(tp + fn > 0, tp / np.maximum(tp + fn, 1), 0.0)
    b2 = beta * beta
    denom = b2 * precision + recall
    terms = np.where(denom > 0, (b2 + 1.0) * precision * recall / np.maximum(denom, 1e-300), 0.0)
    return acc, float(np.mean(terms))


def precision_recall(cm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    tp, fn, fp, _, _ = _counts(cm)
    precision = np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), 0.0)
    recall = np.where(tp + fn > 0, tp / np.maximum(tp + fn, 1), 0.0)
    return precision, recall


def sample_accuracy(cm: np.ndarray) -> float:
    """Plain fraction of correctly decoded samples (not the macro average)."""
    tp, _, _, _, total = _counts(cm)
    return float(tp.sum() / total)


# ---------------------------------------------------------------------------
# latency and error blocks
# ---------------------------------------------------------------------------

@dataclass
class LatencyStats:
    latencies_s: list          # one entry per achieved transition
    n_failed: int              # transitions never stable within the window
    excluded: np.ndarray       # per-tick mask of latency-period samples

    @property
    def mean_s(self) -> float:
        return float(np.mean(self.latencies_s)) if self.latencies_s else float("nan")


def latency_analysis(
    instructed,
    decoded,
    tick_s: float,
    window_s: float = 5.0,
    stability_s: float = 1.0,
) -> LatencyStats:
    """Per instructed transition, the delay until the decode settles.

    A transition is achieved by the first decoded switch to the new state that
    stays stable for ``stability_s`` (window inclusive of the switch tick) and
    starts within ``window_s`` of the instruction.  Samples between the
    instruction and that switch are marked excluded; transitions with no valid
    switch are failed and keep their samples included.
    """
    instructed = np.asarray(instructed, dtype=np.intp)
    decoded = np.asarray(decoded, dtype=np.intp)
    n = instructed.size
    stab = max(1, int(round(stability_s / tick_s)))
    win = int(round(window_s / tick_s))
    excluded = np.zeros(n, dtype=bool)
    latencies: list[float] = []
    n_failed = 0

    change_points = [i for i in range(1, n) if instructed[i] != instructed[i - 1]]
    for idx, start in enumerate(change_points):
        target = instructed[start]
        end = change_points[idx + 1] if idx + 1 < len(change_points) else n
        found = None
        last_start = min(start + win, end - stab, n - stab)
        for j in range(start, last_start + 1):
            if np.all(decoded[j : j + stab] == target):
                found = j
                break
        if found is None:
            n_failed += 1
        else:
            latencies.append((found - start) * tick_s)
            excluded[start:found] = True
    return LatencyStats(latencies_s=latencies, n_failed=n_failed, excluded=excluded)


@dataclass
class ErrorBlockStats:
    rate_per_min: float
    mean_duration_s: float  # 0.0 when there are no blocks (see n_blocks)
    n_blocks: int
    included_s: float


def error_blocks(instructed, decoded, tick_s: float, excluded=None) -> ErrorBlockStats:
    """Maximal runs of consecutive misclassified, non-excluded ticks."""
    instructed = np.asarray(instructed, dtype=np.intp)
    decoded = np.asarray(decoded, dtype=np.intp)
    if excluded is None:
        excluded = np.zeros(instructed.size, dtype=bool)
    excluded = np.asarray(excluded, dtype=bool)
    err = (instructed != decoded) & ~excluded
    padded = np.concatenate([[False], err, [False]])
    starts = np.flatnonzero(~padded[:-1] & padded[1:])
    ends = np.flatnonzero(padded[:-1] & ~padded[1:])
    lengths = ends - starts
    included_s = float(np.count_nonzero(~excluded) * tick_s)
    minutes = included_s / 60.0
    rate = len(lengths) / minutes if minutes > 0 else 0.0
    mean_dur = float(np.mean(lengths) * tick_s) if len(lengths) else 0.0
    return ErrorBlockStats(
        rate_per_min=float(rate),
        mean_duration_s=mean_dur,
        n_blocks=int(len(lengths)),
        included_s=included_s,
    )


# ---------------------------------------------------------------------------
# continuous and reaching indicators
# ---------------------------------------------------------------------------

@dataclass
class CosSimStats:
    value: float
    n_samples: int
    n_skipped: int  # zero-norm samples left out


def cos_sim(log: SessionLog, state: int, layout: ControlLayout) -> CosSimStats:
    """Mean normalized dot product of optimal and predicted movement for one
    limb state, over its instructed samples; zero-norm samples are skipped."""
    mask = list(layout.masks[state])
    rows = log.instructed() == state
    if not rows.any():
        raise ValueError(f"no samples instructed as state {state}")
    u = log.y_opt()[rows][:, mask]
    v = log.y_hat()[rows][:, mask]
    nu = np.linalg.norm(u, axis=1)
    nv = np.linalg.norm(v, axis=1)
    keep = (nu > 0) & (nv > 0)
    if not keep.any():
        raise ValueError("no samples with nonzero optimal and predicted movement")
    sims = np.sum(u[keep] * v[keep], axis=1) / (nu[keep] * nv[keep])
    return CosSimStats(
        value=float(np.mean(sims)),
        n_samples=int(keep.sum()),
        n_skipped=int((~keep).sum()),
    )


@dataclass
class ReachStats:
    sr_percent: float
    n_trials: int
    n_hits: int
    r_ratios: np.ndarray       # per hit trial with nonzero straight distance
    n_zero_straight: int

    @property
    def r_ratio_mean(self) -> float:
        return float(np.mean(self.r_ratios)) if self.r_ratios.size else float("nan")

    @property
    def r_ratio_sd(self) -> float:
        return float(np.std(self.r_ratios)) if self.r_ratios.size else float("nan")


def reach_metrics(log: SessionLog) -> dict:
    """Per task type (state name): success rate and R-ratio over hit trials."""
    out: dict = {}
    for trial in log.trials:
        out.setdefault(trial.state_name, []).append(trial)
    stats = {}
    for name, trials in out.items():
        hits = [t for t in trials if t.hit]
        ratios = [t.r_ratio for t in hits if t.r_ratio is not None]
        stats[name] = ReachStats(
            sr_percent=100.0 * len(hits) / len(trials),
            n_trials=len(trials),
            n_hits=len(hits),
            r_ratios=np.array(ratios, dtype=np.float64),
            n_zero_straight=sum(1 for t in hits if t.r_ratio is None),
        )
    return stats


# ---------------------------------------------------------------------------
# stability slope
# ---------------------------------------------------------------------------

@dataclass
class SlopeFit:
    slope: float
    ci_low: float
    ci_high: float

    @property
    def stable(self) -> bool:
        """True when the 95% CI retains the zero-slope hypothesis."""
        return self.ci_low <= 0.0 <= self.ci_high


def slope_fit(x, y) -> SlopeFit:
    """Ordinary least squares slope with a t-based 95% confidence interval."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.size
    if n < 3:
        raise ValueError("slope fit needs at least 3 points")
    sxx = float(np.sum((x - x.mean()) ** 2))
    if sxx == 0.0:
        raise ValueError("all x values identical")
    slope = float(np.sum((x - x.mean()) * (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (slope * x + intercept)
    sse = max(float(np.sum(resid**2)), 0.0)
    se = np.sqrt(sse / (n - 2) / sxx)
    tcrit = float(sstats.t.ppf(0.975, n - 2))
    return SlopeFit(slope=slope, ci_low=slope - tcrit * se, ci_high=slope + tcrit * se)


# ---------------------------------------------------------------------------
# full report
# ---------------------------------------------------------------------------

def indicator_report(
    log: SessionLog,
    layout: ControlLayout,
    window_s: float = 5.0,
    stability_s: float = 1.0,
) -> dict:
    """Assemble every indicator for one session into a JSON-ready dict."""
    instructed = log.instructed()
    decoded = log.decoded()
    lat = latency_analysis(instructed, decoded, log.tick_s, window_s, stability_s)
    cm = confusion_matrix(instructed, decoded, layout.n_states, included=~lat.excluded)
    acc, fsc = accuracy_fscore(cm)
    precision, recall = precision_recall(cm)
    blocks = error_blocks(instructed, decoded, log.tick_s, excluded=lat.excluded)

    cos = {}
    for state, kind in enumerate(layout.kinds):
        if kind != KIND_TRANSLATION or not np.any(instructed == state):
            continue
        try:
            cos[layout.state_names[state]] = cos_sim(log, state, layout).value
        except ValueError:
            cos[layout.state_names[state]] = None

    reach = {
        name: {
            "sr_percent": r.sr_percent,
            "n_trials": r.n_trials,
            "n_hits": r.n_hits,
            "r_ratio_mean": r.r_ratio_mean,
            "r_ratio_sd": r.r_ratio_sd,
        }
        for name, r in reach_metrics(log).items()
    }
    return {
        "n_ticks": len(log.ticks),
        "duration_s": log.duration_s,
        "confusion": cm.tolist(),
        "accuracy": acc,
        "f_score": fsc,
        "sample_accuracy": sample_accuracy(cm),
        "per_state": {
            layout.state_names[k]: {"precision": float(precision[k]), "recall": float(recall[k])}
            for k in range(layout.n_states)
        },
        "latency": {
            "mean_s": None if not lat.latencies_s else lat.mean_s,
            "n": len(lat.latencies_s),
            "n_failed": lat.n_failed,
            "values_s": lat.latencies_s,
        },
        "error_blocks": {
            "rate_per_min": blocks.rate_per_min,
            "mean_duration_s": blocks.mean_duration_s,
            "count": blocks.n_blocks,
        },
        "cos_sim": cos,
        "reach": reach,
    }


def save_report_json(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")


def report_csv_row(report: dict) -> dict:
    """Flatten a report to scalar columns for cross-session slope analysis."""
    row = {
        "n_ticks": report["n_ticks"],
        "duration_s": report["duration_s"],
        "accuracy": report["accuracy"],
        "f_score": report["f_score"],
        "sample_accuracy": report["sample_accuracy"],
        "latency_mean_s": report["latency"]["mean_s"],
        "latency_failed": report["latency"]["n_failed"],
        "error_block_rate_per_min": report["error_blocks"]["rate_per_min"],
        "error_block_mean_s": report["error_blocks"]["mean_duration_s"],
    }
    for name, value in report["cos_sim"].items():
        row[f"cos_sim_{name}"] = value
    for name, reach in report["reach"].items():
        row[f"sr_{name}"] = reach["sr_percent"]
        row[f"r_ratio_{name}"] = reach["r_ratio_mean"]
    return row


def mannwhitney_pvalue(sample_a, sample_b) -> float:
    """Two-sided Mann-Whitney U p-value (chance-separation testing)."""
    result = sstats.mannwhitneyu(sample_a, sample_b, alternative="two-sided")
    return float(result.pvalue)
