"""Time sources for the node runtime.

Everything downstream schedules work against a clock object with three
methods: ``now()`` returning an aware UTC datetime, ``sleep(seconds)``, and
``sleep_until(when)``. The accelerated clock maps virtual time onto scaled
real time so an hour-long run can execute in under a second while keeping
all recorded timestamps in virtual time.
"""
from __future__ import annotations

import time
from datetime import datetime, timedelta

from .series import UTC, as_utc


class SystemClock:
    """Real wall-clock time."""

    def now(self) -> datetime:
        return datetime.now(tz=UTC)

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)

    def sleep_until(self, when: datetime) -> None:
        self.sleep((when - self.now()).total_seconds())


class AcceleratedClock:
    """Virtual clock running ``accel`` times faster than real time.

    Virtual time starts at ``start`` when the clock is constructed and
    advances with the real monotonic clock. Sleeps are shortened by the
    acceleration factor; a sleep target already in the past returns
    immediately, so a loop that falls behind simply catches up.
    """

    def __init__(self, start: datetime, accel: float = 1.0):
        if accel <= 0:
            raise ValueError(f"accel={accel} must be positive")
        self.start = as_utc(start)
        self.accel = float(accel)
        self._mono0 = time.monotonic()

    def now(self) -> datetime:
        elapsed = (time.monotonic() - self._mono0) * self.accel
        return self.start + timedelta(seconds=elapsed)

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds / self.accel)

    def sleep_until(self, when: datetime) -> None:
        remaining = (when - self.now()).total_seconds()
        self.sleep(remaining)
