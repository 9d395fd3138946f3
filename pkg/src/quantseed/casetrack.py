"""Registry of degenerate-input special cases with hit counting.

Every zero-divisor or sign special case in the feature formulas registers
a stable id here and reports when it fires.  The synthetic-data audit uses
the registry to prove that generated inputs exercise every branch.
Single-threaded by design: the feature sweep is a sequential coordinator.
"""

from __future__ import annotations

from collections import Counter
from contextlib import contextmanager

DECLARED: set = set()
_ACTIVE: list = []


def declare(*names: str) -> None:
    DECLARED.update(names)


def hit(name: str) -> None:
    if name not in DECLARED:
        raise KeyError(f"special case {name!r} was never declared")
    for counter in _ACTIVE:
        counter[name] += 1


@contextmanager
def recording():
    """Collect case hits for the duration of the block."""
    counter: Counter = Counter()
    _ACTIVE.append(counter)
    try:
        yield counter
    finally:
        _ACTIVE.remove(counter)


def coverage(counter) -> tuple[set, set]:
    """(hit, missed) case ids relative to everything declared."""
    hit_set = {name for name in DECLARED if counter.get(name, 0) > 0}
    return hit_set, DECLARED - hit_set
