"""Cohort summaries and Welch's two-sample t-test for pre/post-QA comparisons."""

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

from .errors import InvalidInputError

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.05

_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAX_ITER = 10000


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf2(t: float, df: float) -> float:
    """Two-sided tail probability P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if t == 0:
        return 1.0
    x = df / (df + t * t)
    return min(1.0, max(0.0, regularized_incomplete_beta(x, 0.5 * df, 0.5)))


def _mean_var(xs: Sequence[float]) -> Tuple[float, float]:
    n = len(xs)
    m = math.fsum(xs) / n
    v = math.fsum((x - m) ** 2 for x in xs) / (n - 1) if n > 1 else 0.0
    return m, v


@dataclass(frozen=True)
class WelchResult:
    t: float
    df: float
    p_two_sided: float
    alpha: float
    significant: bool
    mean_a: float
    mean_b: float

    def as_dict(self) -> dict:
        return {
            "t": self.t,
            "df": self.df,
            "p_two_sided": self.p_two_sided,
            "alpha": self.alpha,
            "significant": self.significant,
            "mean_a": self.mean_a,
            "mean_b": self.mean_b,
        }


def welch_t_test(a: Sequence[float], b: Sequence[float], alpha: float = DEFAULT_ALPHA) -> WelchResult:
    """Two-sided Welch t-test of ``mean(a) == mean(b)`` with unbiased variances."""
    a = [float(x) for x in a]
    b = [float(x) for x in b]
    if len(a) < 2 or len(b) < 2:
        raise InvalidInputError(f"each sample needs at least 2 values (got {len(a)} and {len(b)})")
    if not 0 < alpha < 1:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")
    ma, va = _mean_var(a)
    mb, vb = _mean_var(b)
    sa = va / len(a)
    sb = vb / len(b)
    if sa + sb == 0:
        raise InvalidInputError("both samples have zero variance; the t statistic is undefined")
    t = (ma - mb) / math.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa * sa / (len(a) - 1) + sb * sb / (len(b) - 1))
    p = student_t_sf2(t, df)
    return WelchResult(t, df, p, alpha, p < alpha, ma, mb)


@dataclass(frozen=True)
class ImageSummary:
    sample_id: str
    mean: float
    std: float
    n_raters: int


@dataclass(frozen=True)
class CohortSummary:
    phase: str
    per_image: Tuple[ImageSummary, ...]
    grand_mean: float
    grand_std: float  # over pooled per-rater values
    image_mean_std: float  # std of the per-image means
    n_values: int
    warnings: Tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "phase": self.phase,
            "grand_mean": self.grand_mean,
            "grand_std": self.grand_std,
            "image_mean_std": self.image_mean_std,
            "n_values": self.n_values,
            "per_image": [
                {"sample_id": s.sample_id, "db_mean": s.mean, "db_std": s.std, "n_raters": s.n_raters}
                for s in self.per_image
            ],
        }


Record = Tuple[str, str, float]  # (sample_id, rater_id, d_B)


def _group(records: Iterable[Record]) -> "OrderedDict[str, List[float]]":
    groups: "OrderedDict[str, List[float]]" = OrderedDict()
    for sample_id, _rater, value in records:
        groups.setdefault(str(sample_id), []).append(float(value))
    return groups


def summarize_cohort(records: Iterable[Record], phase: str = "",
                     sample_ids: Optional[Sequence[str]] = None) -> CohortSummary:
    """Per-image mean/std over raters plus grand statistics of the pooled values.

    Images listed in ``sample_ids`` without any record are skipped with a warning.
    """
    groups = _group(records)
    warnings = []
    for sid in sample_ids or ():
        if str(sid) not in groups:
            msg = f"image {sid!r} has no rater values and is omitted"
            warnings.append(msg)
            log.warning(msg)
    if not groups:
        raise InvalidInputError("cannot summarize an empty cohort")
    per_image = []
    for sid in sorted(groups):
        m, v = _mean_var(groups[sid])
        per_image.append(ImageSummary(sid, m, math.sqrt(v), len(groups[sid])))
    pooled = [x for sid in sorted(groups) for x in sorted(groups[sid])]
    gm, gv = _mean_var(pooled)
    _, iv = _mean_var(sorted(s.mean for s in per_image))
    return CohortSummary(phase, tuple(per_image), gm, math.sqrt(gv), math.sqrt(iv), len(pooled), tuple(warnings))


@dataclass(frozen=True)
class ComparisonReport:
    pre: CohortSummary
    post: CohortSummary
    welch: WelchResult
    unit: str  # "pooled_rater_values" or "per_image_means"
    deltas: Tuple[Tuple[str, float], ...] = field(default=())  # post - pre per image
    direction: str = "none"

    def as_dict(self) -> dict:
        return {
            "unit": self.unit,
            "direction": self.direction,
            "welch": self.welch.as_dict(),
            "pre_qa": self.pre.as_dict(),
            "post_qa": self.post.as_dict(),
            "deltas": [{"sample_id": sid, "db_mean_delta": d} for sid, d in self.deltas],
        }


def compare_phases(pre: Iterable[Record], post: Iterable[Record], alpha: float = DEFAULT_ALPHA,
                   per_image_means: bool = False) -> ComparisonReport:
    """Welch test between phases plus per-image shifts of the mean distance (post - pre)."""
    pre = list(pre)
    post = list(post)
    if not pre or not post:
        raise InvalidInputError("both phases need at least one value")
    pre_s = summarize_cohort(pre, "pre_qa")
    post_s = summarize_cohort(post, "post_qa")
    if per_image_means:
        a = [s.mean for s in pre_s.per_image]
        b = [s.mean for s in post_s.per_image]
        unit = "per_image_means"
    else:
        a = [x for _, _, x in sorted(pre, key=lambda r: (str(r[0]), str(r[1])))]
        b = [x for _, _, x in sorted(post, key=lambda r: (str(r[0]), str(r[1])))]
        unit = "pooled_rater_values"
    welch = welch_t_test(b, a, alpha)
    pre_means = {s.sample_id: s.mean for s in pre_s.per_image}
    deltas = tuple(
        (s.sample_id, s.mean - pre_means[s.sample_id]) for s in post_s.per_image if s.sample_id in pre_means
    )
    if welch.t < 0:
        direction = "decrease"
    elif welch.t > 0:
        direction = "increase"
    else:
        direction = "none"
    return ComparisonReport(pre_s, post_s, welch, unit, deltas, direction)
