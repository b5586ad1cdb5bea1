"""Containers for sampled port signals."""
from dataclasses import dataclass, field

import numpy as np


@dataclass
class PortRecord:
    """Known port signals sampled every ``dt`` seconds from t = 0.

    Arrays are (samples, channels): ``v1`` source voltage, ``i2`` dummy-port
    current, ``v3``/``i3`` sensor voltage and current (into the network).
    """

    dt: float
    v1: np.ndarray
    i2: np.ndarray
    v3: np.ndarray
    i3: np.ndarray

    def __post_init__(self):
        for k in ("v1", "i2", "v3", "i3"):
            a = np.asarray(getattr(self, k), dtype=float)
            if a.ndim == 1:
                a = a[:, None]
            setattr(self, k, a)
        n = {getattr(self, k).shape[0] for k in ("v1", "i2", "v3", "i3")}
        if len(n) != 1:
            raise ValueError("all channels must have the same number of samples")
        if self.v3.shape[1] != self.i3.shape[1]:
            raise ValueError("v3 and i3 must have the same width")

    @property
    def n_samples(self):
        return self.v1.shape[0]

    @property
    def t(self):
        return self.dt * np.arange(self.n_samples)

    @property
    def duration(self):
        return self.dt * (self.n_samples - 1)

    def stacked(self):
        """(samples, n1 + n2 + 2 n3) in the order v1, i2, v3, i3."""
        return np.hstack([self.v1, self.i2, self.v3, self.i3])

    def with_prefix(self, n_zero):
        """Copy with ``n_zero`` zero samples prepended (shifts the time origin)."""
        pad = lambda a: np.vstack([np.zeros((n_zero, a.shape[1])), a])
        return PortRecord(self.dt, pad(self.v1), pad(self.i2), pad(self.v3), pad(self.i3))


@dataclass
class GroundTruth:
    """Fault-port signals that the estimator is supposed to recover."""

    dt: float
    v4: np.ndarray
    i4: np.ndarray
    vf: np.ndarray
    meta: dict = field(default_factory=dict)
