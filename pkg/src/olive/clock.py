"""Clock abstraction shared by every timestamp consumer.

The pipeline never calls ``time`` directly: live sessions run on a
monotonic wall clock, replay runs on a virtual clock the harness advances
explicitly, which is what makes trace replays bit-for-bit reproducible.
"""

from __future__ import annotations

import time


class Clock:
    def now_ms(self) -> float:
        raise NotImplementedError

    def sleep_until_ms(self, t_ms: float) -> None:
        raise NotImplementedError


class RealClock(Clock):
    """Monotonic wall clock, origin at construction."""

    def __init__(self) -> None:
        self._t0 = time.monotonic()

    def now_ms(self) -> float:
        return (time.monotonic() - self._t0) * 1000.0

    def sleep_until_ms(self, t_ms: float) -> None:
        delta = t_ms - self.now_ms()
        if delta > 0:
            time.sleep(delta / 1000.0)


class VirtualClock(Clock):
    """Manually advanced clock. Time moves only via set_ms/advance_ms."""

    def __init__(self, start_ms: float = 0.0) -> None:
        self._t = float(start_ms)

    def now_ms(self) -> float:
        return self._t

    def set_ms(self, t_ms: float) -> None:
        if t_ms < self._t:
            raise ValueError(f"virtual clock cannot move backwards: {t_ms} < {self._t}")
        self._t = float(t_ms)

    def advance_ms(self, delta_ms: float) -> None:
        self.set_ms(self._t + delta_ms)

    def sleep_until_ms(self, t_ms: float) -> None:
        if t_ms > self._t:
            self._t = float(t_ms)
