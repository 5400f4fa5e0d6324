from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Generic, Optional, TypeVar

from app.core.errors import InvalidParameterError

T = TypeVar("T")


@dataclass(frozen=True)
class RefinementResult(Generic[T]):
    value: T
    resolution: int
    change: float
    converged: bool
    levels_used: int


def refine_until_stable(
    fn: Callable[[int], T],
    start: int,
    distance: Callable[[T, T], float],
    levels: int = 3,
    tol: float = 1e-9,
    on_refine: Optional[Callable[[int, int, float], None]] = None,
) -> RefinementResult[T]:
    """Evaluate ``fn`` at doubling resolutions until two successive values agree.

    The returned value is always the finest one computed; ``change`` is the
    distance between the last two evaluations.
    """
    if start < 1 or levels < 1:
        raise InvalidParameterError("refinement needs start >= 1 and levels >= 1")
    resolution = start
    previous = fn(resolution)
    change = float("inf")
    for level in range(1, levels + 1):
        resolution *= 2
        current = fn(resolution)
        change = float(distance(previous, current))
        if on_refine:
            on_refine(level, resolution, change)
        previous = current
        if change <= tol:
            return RefinementResult(previous, resolution, change, True, level)
    return RefinementResult(previous, resolution, change, False, levels)
