"""Reference enumerator used as an independent check on the detector.

Plain Python, no numpy: every candidate interval ``[i, j]`` is tested for
monotonicity and maximality directly.  For a fixed start the scan stops at
the first interval that is not monotonic, since no longer interval with the
same start can be monotonic either.  Used by the test-suite and by the
synthetic generator's self-check.
"""

from __future__ import annotations


def _step_ok(a: float, b: float, sign: int, strict: bool) -> bool:
    """True if moving from price ``a`` to ``b`` keeps a run of direction ``sign``."""
    if sign < 0:
        return b < a if strict else b <= a
    return b > a if strict else b >= a


def enumerate_runs(prices, strict: bool = False) -> list[tuple[int, int, int]]:
    """All maximal monotonic intervals with nonzero net change, as (first, last, sign)."""
    p = [float(x) for x in prices]
    n = len(p)
    runs = []
    for i in range(n):
        for sign in (-1, 1):
            # left-maximal: the interval cannot be extended to i-1
            if i > 0 and _step_ok(p[i - 1], p[i], sign, strict):
                continue
            j = i
            while j + 1 < n and _step_ok(p[j], p[j + 1], sign, strict):
                j += 1
            # [i, j] is monotonic and j + 1 breaks it (or is past the end)
            if j > i and p[j] != p[i]:
                runs.append((i, j, sign))
    runs.sort(key=lambda r: (r[0], r[2]))
    return runs


def enumerate_events(timestamps, prices, threshold=0.008, min_trades=11,
                     max_duration=1_500_000_000, strict=False) -> list[tuple[int, int, int, int]]:
    """Events as ``(start, change, end, sign)`` tuples, ordered by start.

    For each maximal run the trades are scanned from the start and the first
    one meeting all three conditions becomes the change trade.
    """
    t = [int(x) for x in timestamps]
    p = [float(x) for x in prices]
    events = []
    for i, j, sign in enumerate_runs(p, strict):
        if not t[j] - t[i] < max_duration:
            continue
        change = None
        for k in range(i, j + 1):
            count = k - i + 1
            moved = abs(p[k] - p[i]) / p[i]
            if moved > threshold and count >= min_trades and t[k] - t[i] < max_duration:
                change = k
                break
        if change is not None:
            events.append((i, change, j, sign))
    return events


def enumerate_stream(stream, criteria) -> list[tuple[int, int, int, int]]:
    return enumerate_events(
        stream.timestamp.tolist(), stream.price.tolist(), criteria.threshold,
        criteria.min_trades, criteria.max_duration, criteria.strict,
    )
