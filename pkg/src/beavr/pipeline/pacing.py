"""Fixed-rate loop pacing with absolute deadlines.

The next deadline is always previous + period (never now + period), so a
late tick shortens the following wait instead of letting the schedule
drift. The wait itself sleeps coarsely and spins the final stretch for
sub-millisecond release accuracy. The spin yields the CPU each pass:
several paced loops share one machine, and a hard busy-wait would steal
exactly the cycles a neighboring control loop needs to hit its own tick.
"""
from __future__ import annotations

import time

SPIN_WINDOW_NS = 400_000


class RateLoop:
    def __init__(self, rate_hz: float):
        if rate_hz <= 0:
            raise ValueError("rate must be positive")
        self.period_ns = round(1e9 / rate_hz)
        self._deadline: int | None = None

    def reset(self):
        self._deadline = None

    def wait(self) -> int:
        """Block until the next tick deadline; returns the release time (ns)."""
        now = time.monotonic_ns()
        if self._deadline is None:
            self._deadline = now + self.period_ns
            return now
        deadline = self._deadline
        self._deadline = deadline + self.period_ns
        spin = min(SPIN_WINDOW_NS, self.period_ns // 8)
        while True:
            now = time.monotonic_ns()
            remaining = deadline - now
            if remaining <= 0:
                return now
            if remaining > spin:
                time.sleep((remaining - spin) / 1e9)
            else:
                time.sleep(0)  # yield; re-check the clock next pass
