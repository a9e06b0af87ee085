from __future__ import annotations

from typing import Callable, Optional

from .base import CongestionControl, RateSample

UNLIMITED_CWND = 1e9


class FixedRate(CongestionControl):
    """Constant pacing rate with optional piecewise-constant rate jitter.

    Not a congestion controller: used to drive schedulers with a known,
    steady sending rate.  ``nominal_rate`` is what an exact-telemetry
    scheduler sees; ``pacing_rate`` is what the pacer actually uses.
    """

    name = "fixed"
    paced = True
    loss_based = False

    def __init__(self, rate: float, jitter: float = 0.0, epoch: int = 100_000_000,
                 draw: Optional[Callable[[], float]] = None):
        super().__init__()
        if rate <= 0:
            raise ValueError("fixed rate must be positive")
        self.nominal_rate = float(rate)
        self.pacing_rate = float(rate)
        self.jitter = jitter
        self.epoch = epoch
        self._draw = draw
        self._epoch_id = -1
        self.cwnd = UNLIMITED_CWND

    @property
    def bw(self) -> float:
        return self.nominal_rate

    @property
    def in_slow_start(self) -> bool:
        return False

    def on_ack(self, rs: RateSample, now: int) -> None:
        pass

    def on_rto(self, now: int) -> None:
        pass

    def next_send_time(self, size: int, now: int) -> int:
        if self.jitter and self._draw is not None:
            e = now // self.epoch
            if e != self._epoch_id:
                self._epoch_id = e
                self.pacing_rate = self.nominal_rate * (1.0 + self.jitter * (2.0 * self._draw() - 1.0))
        return now + int(size * 8e9 / self.pacing_rate + 0.5)
