"""pass@k estimators."""

from __future__ import annotations

from .errors import InvalidCounts


def _check(n: int, c: int, k: int) -> None:
    if not (0 <= c <= n and 1 <= k <= n):
        raise InvalidCounts(f"need 0 <= c <= n and 1 <= k <= n, got n={n} c={c} k={k}")


def pass_at_k(n: int, c: int, k: int) -> float:
    """Unbiased estimator 1 - C(n-c, k) / C(n, k) in stable product form.

    Probability that a uniform without-replacement draw of k samples from n
    (of which c are correct) contains at least one correct sample.
    """
    _check(n, c, k)
    if c == 0:
        return 0.0
    if n - c < k:
        return 1.0
    prob_all_wrong = 1.0
    for i in range(k):
        prob_all_wrong *= (n - c - i) / (n - i)
    return 1.0 - prob_all_wrong


def pass_at_k_naive(n: int, c: int, k: int) -> float:
    """Independent-draw approximation 1 - (1 - c/n)^k (raw best-of-k)."""
    _check(n, c, k)
    return 1.0 - (1.0 - c / n) ** k
