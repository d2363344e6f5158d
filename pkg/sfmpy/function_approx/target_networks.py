from dataclasses import dataclass

import numpy as np

TARGET_MODES = ['hard', 'polyak']


@dataclass
class TargetCopy:
    """
    Delayed copy of a tracked parameter vector.

    hard: refreshed to the tracked parameters once every `interval` updates.
    polyak: params <- alpha * params + (1 - alpha) * tracked on every update.
    """
    params: np.ndarray
    mode: str = 'hard'
    interval: int = 250
    alpha: float = 0.995
    updates_since_refresh: int = 0

    def __post_init__(self):
        if self.mode not in TARGET_MODES:
            raise ValueError(f'Unknown target mode: {self.mode}')
        if self.interval < 1:
            raise ValueError(f'Hard target interval must be positive, got {self.interval}')
        if not 0 <= self.alpha < 1:
            raise ValueError(f'Polyak factor must lie in [0, 1), got {self.alpha}')
        self.params = np.array(self.params, dtype=np.float64)

    def update(self, tracked: np.ndarray):
        if tracked.shape != self.params.shape:
            raise ValueError(f'Tracked parameters have shape {tracked.shape}, target has {self.params.shape}')
        if self.mode == 'polyak':
            self.params = self.alpha * self.params + (1 - self.alpha) * tracked
            return
        self.updates_since_refresh += 1
        if self.updates_since_refresh >= self.interval:
            self.params = np.array(tracked, dtype=np.float64)
            self.updates_since_refresh = 0


def make_target(params: np.ndarray, mode: str, interval: int = 250, alpha: float = 0.995) -> TargetCopy:
    return TargetCopy(params=np.array(params, dtype=np.float64), mode=mode, interval=interval, alpha=alpha)
