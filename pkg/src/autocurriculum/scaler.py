"""Quantile reward scaling over a reservoir sample of reward history.

Raw learning-progress values have unknown, drifting magnitude.  The scaler
keeps a fixed-capacity uniform reservoir of everything observed so far,
reads two nearest-rank percentiles off it, and maps new values into [-1, 1]
by clipping to the percentile interval and stretching it linearly.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ScalerConfig:
    capacity: int = 1000
    q_lo_pct: float = 20.0
    q_hi_pct: float = 80.0

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {self.capacity}")
        if not 0.0 <= self.q_lo_pct < self.q_hi_pct <= 100.0:
            raise ValueError(
                f"need 0 <= q_lo < q_hi <= 100, got {self.q_lo_pct}, {self.q_hi_pct}")


def nearest_rank(sorted_values, pct: float) -> float:
    """Nearest-rank percentile: element ceil(pct/100 * n) of the sorted list, 1-based."""
    n = len(sorted_values)
    k = min(max(math.ceil(pct / 100.0 * n), 1), n)
    return sorted_values[k - 1]


class RewardScaler:
    """Reservoir sample plus the [-1, 1] mapping.  Single-writer."""

    def __init__(self, config: ScalerConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.reservoir: list[float] = []
        self._sorted: list[float] = []  # mirror of reservoir, kept ordered
        self.seen_count = 0

    def observe(self, raw: float) -> None:
        """Standard reservoir sampling: item i survives with probability R/i."""
        raw = float(raw)
        if not math.isfinite(raw):
            raise ValueError(f"non-finite raw reward {raw}: training step diverged?")
        self.seen_count += 1
        cap = self.config.capacity
        if len(self.reservoir) < cap:
            self.reservoir.append(raw)
            bisect.insort(self._sorted, raw)
            return
        j = int(self.rng.integers(0, self.seen_count))
        if j < cap:
            old = self.reservoir[j]
            self.reservoir[j] = raw
            del self._sorted[bisect.bisect_left(self._sorted, old)]
            bisect.insort(self._sorted, raw)

    def scale(self, raw: float) -> float:
        """Map a raw reward into [-1, 1] against the current reservoir.

        Does not insert `raw`; callers observe() first.  With fewer than two
        observations there is no scale information yet, so the reward is
        neutral.  A degenerate percentile interval keeps only the sign.
        """
        n = len(self._sorted)
        if n < 2:
            return 0.0
        q_lo = nearest_rank(self._sorted, self.config.q_lo_pct)
        q_hi = nearest_rank(self._sorted, self.config.q_hi_pct)
        if raw < q_lo:
            return -1.0
        if raw > q_hi:
            return 1.0
        if q_hi == q_lo:
            return 0.0
        return 2.0 * (raw - q_lo) / (q_hi - q_lo) - 1.0

    def snapshot(self) -> dict:
        return {"reservoir": list(self.reservoir), "seen_count": self.seen_count,
                "rng_state": self.rng.bit_generator.state}

    def restore(self, snap: dict) -> None:
        self.reservoir = [float(v) for v in snap["reservoir"]]
        self._sorted = sorted(self.reservoir)
        self.seen_count = int(snap["seen_count"])
        self.rng.bit_generator.state = snap["rng_state"]
