"""
stats.py
========

Small statistical toolkit for the cohort report:

- mann_whitney_u(): two-sided rank test. Exact by enumeration for small
  tie-free samples, otherwise normal approximation with tie and continuity
  correction.
- pearson(): product-moment correlation from the centered closed form.
- cluster_groups(): splits two-person groups into balanced (0) and
  dominated (1) by their largest LOC share.
- describe(): mean / sample standard deviation / count.
"""

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.stats import distributions, rankdata, tiecorrect

from .exceptions import DegenerateInput, EmptySampleError, ShapeError, ShareError

AUTO = "auto"
EXACT = "exact"
NORMAL = "normal-approximation"
PEARSON = "pearson"

EXACT_MAX_N = 12
DEFAULT_CLUSTER_THRESHOLD = 0.70
SHARE_TOLERANCE = 1e-6


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest test class

    statistic: float
    p_value: float | None
    n1: int
    n2: int
    method: str

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "n1": self.n1,
            "n2": self.n2,
            "method": self.method,
        }


def _exact_p(ranks: np.ndarray, n1: int, u: float) -> float:
    """Two-sided p of U by enumerating every assignment of ranks to the first sample."""
    offset = n1 * (n1 + 1) / 2.0
    below = above = 0
    total = 0
    for chosen in itertools.combinations(ranks, n1):
        candidate = sum(chosen) - offset
        total += 1
        if candidate <= u:
            below += 1
        if candidate >= u:
            above += 1
    return min(1.0, 2.0 * min(below, above) / total)


def mann_whitney_u(a: Sequence[float], b: Sequence[float], method: str = AUTO) -> TestResult:
    """
    Mann-Whitney U test of `a` against `b`.

    Args:
        a (Sequence[float]): First sample.
        b (Sequence[float]): Second sample.
        method (str): AUTO picks EXACT for tie-free samples with
            n1 + n2 <= 12 and NORMAL otherwise. NORMAL forces the
            approximation; EXACT is only honoured when it applies.

    Returns:
        TestResult: U of the first sample (rank sum minus n1(n1+1)/2), the
        two-sided p-value and the method used.

    Raises:
        EmptySampleError: Either sample is empty.
    """
    if method not in (AUTO, EXACT, NORMAL):
        raise ValueError(f"Unknown method '{method}'")
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    n1, n2 = len(x), len(y)
    if n1 == 0 or n2 == 0:
        raise EmptySampleError(f"Mann-Whitney U needs two non-empty samples (got {n1} and {n2})")

    ranked = rankdata(np.concatenate((x, y)))
    u = float(np.sum(ranked[:n1]) - n1 * (n1 + 1) / 2.0)
    has_ties = len(np.unique(ranked)) < len(ranked)

    if method != NORMAL and n1 + n2 <= EXACT_MAX_N and not has_ties:
        return TestResult(u, _exact_p(ranked, n1, u), n1, n2, EXACT)

    mean = n1 * n2 / 2.0
    sd = math.sqrt(tiecorrect(ranked) * n1 * n2 * (n1 + n2 + 1) / 12.0)
    if sd == 0:
        return TestResult(u, 1.0, n1, n2, NORMAL)
    z = max(0.0, abs(u - mean) - 0.5) / sd
    p = min(1.0, float(2.0 * distributions.norm.sf(z)))
    return TestResult(u, p, n1, n2, NORMAL)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """
    Pearson correlation coefficient, clipped to [-1, 1].

    Raises:
        ShapeError: `x` and `y` differ in length.
        DegenerateInput: Fewer than two points, or a variable is constant.
    """
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    if xs.shape != ys.shape:
        raise ShapeError(f"Pearson needs paired samples (got {len(xs)} and {len(ys)})")
    if len(xs) < 2:
        raise DegenerateInput("Pearson needs at least two points")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0 or syy == 0:
        raise DegenerateInput("Pearson is undefined for a constant variable")
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def pearson_test(x: Sequence[float], y: Sequence[float]) -> TestResult:
    """pearson() plus its two-sided p-value from the t distribution."""
    r = pearson(x, y)
    n = len(x)
    if n <= 2:
        p = 1.0
    elif abs(r) >= 1.0:
        p = 0.0
    else:
        t = r * math.sqrt((n - 2) / (1.0 - r * r))
        p = float(2.0 * distributions.t.sf(abs(t), n - 2))
    return TestResult(r, p, n, n, PEARSON)


@dataclass(frozen=True)
class Summary:
    n: int
    mean: float | None
    sd: float | None

    def to_dict(self) -> dict:
        return {"n": self.n, "mean": self.mean, "sd": self.sd}


def describe(values: Sequence[float]) -> Summary:
    data = np.asarray(values, dtype=float)
    if len(data) == 0:
        return Summary(0, None, None)
    sd = float(np.std(data, ddof=1)) if len(data) > 1 else None
    return Summary(len(data), float(np.mean(data)), sd)


@dataclass(frozen=True)
class GroupProfile:
    group_id: str
    members: tuple[str, ...]
    loc_shares: dict[str, float] = field(default_factory=dict)
    cluster: int | None = None
    issue_occurrence_count: int = 0
    issue_total_count: int = 0
    member_issue_counts: dict[str, int] = field(default_factory=dict)
    member_lab_issues: dict[str, float] | None = None
    grade: float | None = None

    @property
    def dominant_member(self) -> str | None:
        shares = {member: self.loc_shares.get(member, 0.0) for member in self.members}
        if not shares:
            return None
        return max(sorted(shares), key=lambda member: shares[member])

    @property
    def minor_member(self) -> str | None:
        dominant = self.dominant_member
        others = [member for member in self.members if member != dominant]
        return others[0] if others else None


def cluster_groups(
    profiles: Sequence[GroupProfile], threshold: float = DEFAULT_CLUSTER_THRESHOLD
) -> list[GroupProfile]:
    """
    Labels each group: cluster 1 when its largest LOC share is strictly above
    `threshold`, cluster 0 otherwise (a share of exactly 0.70 is balanced).

    Raises:
        ShareError: A group does not have two members, or its shares do not
            sum to 1.
    """
    labelled = []
    for profile in profiles:
        if len(profile.members) != 2:
            raise ShareError(f"Group '{profile.group_id}' must have exactly 2 members")
        total = sum(profile.loc_shares.values())
        if abs(total - 1.0) > SHARE_TOLERANCE:
            raise ShareError(f"LOC shares of group '{profile.group_id}' sum to {total:.6f}, not 1")
        cluster = 1 if max(profile.loc_shares.values()) > threshold else 0
        labelled.append(replace(profile, cluster=cluster))
    return labelled
