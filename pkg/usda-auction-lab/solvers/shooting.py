"""
Forward shooting for ODE systems with an unknown starting point.

A "shot" integrates the system upward from a trial start with an adaptive
Runge-Kutta 4(5) stepper. The caller classifies each shot as starting too
high or too low, and ``bisect_start`` narrows the start down to a bracket of
width ``xtol``.

Usage:
    shot_at = lambda start: fire(rhs, start, y0, t_end, events=(ceiling,))
    bracket = bisect_start(shot_at, lambda s: s.reached_end, low, high)
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

logger = logging.getLogger(__name__)


class BracketFailure(Exception):
    def __init__(self, low: float, high: float, reason: str):
        super().__init__(f"no sign change on [{low!r}, {high!r}]: {reason}")
        self.low = low
        self.high = high


@dataclass(frozen=True, eq=False)
class Shot:
    start: float
    reached_end: bool
    event: str | None
    t: np.ndarray
    y: np.ndarray
    dense: Callable[[np.ndarray], np.ndarray] | None
    message: str = ""

    @property
    def end(self) -> float:
        return float(self.t[-1])


@dataclass(frozen=True, eq=False)
class Bracket:
    low: float
    high: float
    high_shot: Shot
    iterations: int


def terminal_event(name: str, fn: Callable[[float, np.ndarray], float], direction: float = -1.0):
    """Mark ``fn`` as a terminal event for solve_ivp under a readable name."""

    def event(t, y):
        return fn(t, y)

    event.terminal = True
    event.direction = direction
    event.__name__ = name
    return event


def fire(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    start: float,
    y0: Sequence[float],
    t_end: float,
    events: Sequence[Callable] = (),
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> Shot:
    """Integrate from ``start`` to ``t_end`` or until a terminal event fires."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        try:
            sol = solve_ivp(
                rhs,
                (start, t_end),
                np.asarray(y0, dtype=float),
                method="RK45",
                dense_output=True,
                events=list(events) or None,
                rtol=rtol,
                atol=atol,
            )
        except (ValueError, ZeroDivisionError, FloatingPointError) as e:
            return Shot(start, False, None, np.array([start]), np.array([y0]).T, None, str(e))

    event = None
    if sol.status == 1:
        for fn, hits in zip(events, sol.t_events):
            if len(hits):
                event = fn.__name__
                break
    return Shot(
        start=start,
        reached_end=sol.status == 0,
        event=event,
        t=sol.t,
        y=sol.y,
        dense=sol.sol,
        message=sol.message,
    )


def bisect_start(
    shot_at: Callable[[float], Shot],
    too_high: Callable[[Shot], bool],
    low: float,
    high: float,
    xtol: float = 1e-12,
    max_iter: int = 200,
) -> Bracket:
    """Bisect the starting point between a too-low and a too-high shot."""
    low_shot = shot_at(low)
    if too_high(low_shot):
        raise BracketFailure(low, high, "lower end already overshoots")
    high_shot = shot_at(high)
    if not too_high(high_shot):
        raise BracketFailure(low, high, "upper end does not overshoot")

    iterations = 0
    while high - low > xtol and iterations < max_iter:
        mid = 0.5 * (low + high)
        if not low < mid < high:
            break
        iterations += 1
        shot = shot_at(mid)
        if too_high(shot):
            high, high_shot = mid, shot
        else:
            low = mid
        logger.debug(
            "bisection %d: [%.15f, %.15f] stopped by %s at %.6f",
            iterations,
            low,
            high,
            shot.event or ("end" if shot.reached_end else "failure"),
            shot.end,
        )
    return Bracket(low=low, high=high, high_shot=high_shot, iterations=iterations)
