"""Uniform time grid shared by all pipeline stages."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class TimeGrid:
    """Grid t_n = n * dt for n = 0..n_steps."""

    dt: float
    n_steps: int

    def __post_init__(self):
        if self.dt <= 0:
            raise DomainError("dt must be > 0")
        if self.n_steps < 1:
            raise DomainError("n_steps must be >= 1")

    @property
    def t_max(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def n_points(self) -> int:
        return self.n_steps + 1

    def to_dict(self) -> dict:
        return {"dt": self.dt, "n_steps": self.n_steps}

    @classmethod
    def from_dict(cls, d: dict) -> "TimeGrid":
        return cls(float(d["dt"]), int(d["n_steps"]))
