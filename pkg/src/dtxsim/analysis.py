"""Statistics and reporting over paired profit observations.

The Wilcoxon signed-rank test here drops zero differences, uses average
ranks for ties, and computes the exact two-sided p by enumerating all 2^n
sign assignments when n <= 25 (via a rank-sum counting recurrence over
half-tick ranks, which is exact); larger samples use the normal
approximation with tie-corrected variance and a continuity correction.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from statistics import NormalDist

EXACT = "EXACT"
NORMAL_APPROX = "NORMAL_APPROX"
EXACT_LIMIT = 25

ALPHA = 0.05


class ReportError(ValueError):
    """Raised for malformed analysis inputs."""


@dataclass
class WilcoxonResult:
    w_statistic: float
    p_value: float
    n_effective: int
    method: str


def _average_ranks(values) -> list[float]:
    """Ranks of |values| with average ranks over ties."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def _exact_two_sided_p(ranks: list[float], w_plus: float) -> float:
    """P over all 2^n equally likely sign assignments, via counting.

    Ranks are multiples of 0.5 (average ranks), so doubling them gives
    integers and the distribution of 2*W+ is a convolution with integer
    support -- identical to full enumeration, computed in polynomial time.
    """
    doubled = [int(round(2 * r)) for r in ranks]
    total = sum(doubled)
    counts = [0] * (total + 1)
    counts[0] = 1
    for d in doubled:
        for s in range(total - d, -1, -1):
            if counts[s]:
                counts[s + d] += counts[s]
    threshold = int(round(2 * w_plus))
    below = sum(counts[: threshold + 1])
    above = sum(counts[threshold:])
    n_assignments = 2 ** len(ranks)
    p = 2.0 * min(below, above) / n_assignments
    return min(p, 1.0)


def wilcoxon_signed_rank(pairs) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired observations.

    ``pairs`` is a sequence of (a, b); differences a-b of zero are dropped.
    W is min(W+, W-). All differences zero is an undefined test and raises.
    """
    diffs = [a - b for a, b in pairs if a != b]
    n = len(diffs)
    if n == 0:
        raise ValueError("all differences are zero: test undefined")
    ranks = _average_ranks([abs(d) for d in diffs])
    w_plus = sum(r for r, d in zip(ranks, diffs) if d > 0)
    w_minus = sum(r for r, d in zip(ranks, diffs) if d < 0)
    w = min(w_plus, w_minus)
    if n <= EXACT_LIMIT:
        p = _exact_two_sided_p(ranks, w_plus)
        return WilcoxonResult(w, p, n, EXACT)
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    # tie correction: subtract sum(t^3 - t)/48 over tie groups
    seen: dict[float, int] = {}
    for d in diffs:
        seen[abs(d)] = seen.get(abs(d), 0) + 1
    var -= sum(t ** 3 - t for t in seen.values()) / 48.0
    if var <= 0:
        return WilcoxonResult(w, 1.0, n, NORMAL_APPROX)
    z = (w - mean + 0.5) / math.sqrt(var)  # continuity-corrected, w <= mean
    p = min(2.0 * NormalDist().cdf(z), 1.0)
    return WilcoxonResult(w, p, n, NORMAL_APPROX)


@dataclass
class BoxStats:
    q1: float
    median: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: list[float] = field(default_factory=list)


def _quantile(sorted_values, q: float) -> float:
    """Linear interpolation between order statistics (numpy's default)."""
    n = len(sorted_values)
    if n == 1:
        return float(sorted_values[0])
    pos = q * (n - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, n - 1)
    w = pos - lo
    return sorted_values[lo] * (1.0 - w) + sorted_values[hi] * w


def box_stats(series) -> BoxStats:
    """Quartiles plus whiskers at the most extreme data within 1.5 IQR."""
    if len(series) == 0:
        raise ValueError("empty series")
    data = sorted(float(v) for v in series)
    q1 = _quantile(data, 0.25)
    median = _quantile(data, 0.5)
    q3 = _quantile(data, 0.75)
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = [v for v in data if lo_fence <= v <= hi_fence]
    outliers = [v for v in data if v < lo_fence or v > hi_fence]
    if not inside:
        inside = [q1, q3]
    return BoxStats(q1, median, q3, inside[0], inside[-1], outliers)


def _write_box_csv(stats: BoxStats, path):
    with open(path, "w") as f:
        f.write("q1,median,q3,whisker_low,whisker_high,outliers\n")
        f.write("%s,%s,%s,%s,%s,%s\n" % (
            repr(stats.q1), repr(stats.median), repr(stats.q3),
            repr(stats.whisker_low), repr(stats.whisker_high),
            ";".join(repr(v) for v in stats.outliers)))


def report(trials_path, out_dir, label_a: str = "A", label_b: str = "B") -> dict:
    """Emit box plot data, scatter data, and a statistics summary.

    Writes box_a.csv, box_b.csv, scatter.csv (paired points plus the y=x
    reference value) and summary.txt into ``out_dir``. Returns the summary
    values as a dict.
    """
    from .experiments import read_trials_csv

    try:
        obs = read_trials_csv(trials_path)
    except ValueError as e:
        raise ReportError(str(e)) from None
    if not obs.pairs:
        raise ReportError("%s: no trial rows" % trials_path)
    os.makedirs(out_dir, exist_ok=True)
    a = [p[0] for p in obs.pairs]
    b = [p[1] for p in obs.pairs]
    _write_box_csv(box_stats(a), os.path.join(out_dir, "box_a.csv"))
    _write_box_csv(box_stats(b), os.path.join(out_dir, "box_b.csv"))
    with open(os.path.join(out_dir, "scatter.csv"), "w") as f:
        f.write("trial,ppt_a,ppt_b,diagonal\n")
        for i, (x, y) in enumerate(obs.pairs):
            f.write("%d,%s,%s,%s\n" % (i, repr(x), repr(y), repr(x)))

    mean_a = sum(a) / len(a)
    mean_b = sum(b) / len(b)
    try:
        test = wilcoxon_signed_rank(obs.pairs)
        if test.p_value < ALPHA:
            verdict = "%s dominates" % (label_a if mean_a > mean_b else label_b)
        else:
            verdict = "no significant difference"
        w_text = "%.6g" % test.w_statistic
        p_text = "%.6g" % test.p_value
        method = test.method
        n_eff = test.n_effective
    except ValueError:
        verdict = "no significant difference"
        w_text = p_text = "nan"
        method = "UNDEFINED"
        n_eff = 0

    summary = {
        "n": len(obs.pairs),
        "mean_a": mean_a,
        "mean_b": mean_b,
        "w": w_text,
        "p": p_text,
        "method": method,
        "n_effective": n_eff,
        "verdict": verdict,
    }
    with open(os.path.join(out_dir, "summary.txt"), "w") as f:
        f.write("n %d\n" % summary["n"])
        f.write("mean_a %.6g\n" % mean_a)
        f.write("mean_b %.6g\n" % mean_b)
        f.write("w %s\n" % w_text)
        f.write("p %s\n" % p_text)
        f.write("method %s\n" % method)
        f.write("n_effective %d\n" % n_eff)
        f.write("verdict %s\n" % verdict)
    return summary
