"""Occupancy configurations on a ring."""

from __future__ import annotations

import numpy as np


class Configuration:
    """Particle counts ``eta(x)`` on a ring of ``L`` sites.

    ``total_particles`` and ``occupied_count`` are maintained by the engine
    as jumps are applied; :meth:`validate` recomputes both from scratch.
    """

    __slots__ = ("occupancies", "total_particles", "occupied_count")

    def __init__(self, occupancies):
        eta = np.ascontiguousarray(occupancies, dtype=np.int64)
        if eta.ndim != 1 or eta.size < 2:
            raise ValueError("occupancies must be a 1-d array of at least two sites")
        if (eta < 0).any():
            raise ValueError("occupancies must be nonnegative")
        self.occupancies = eta.copy()
        self.total_particles = int(eta.sum())
        self.occupied_count = int(np.count_nonzero(eta))

    @property
    def L(self) -> int:
        return self.occupancies.size

    def __len__(self) -> int:
        return self.occupancies.size

    def __getitem__(self, x):
        return self.occupancies[x]

    def copy(self) -> "Configuration":
        return Configuration(self.occupancies)

    def validate(self) -> None:
        eta = self.occupancies
        if (eta < 0).any():
            raise AssertionError("negative occupancy")
        if int(eta.sum()) != self.total_particles:
            raise AssertionError("particle count drifted")
        if int(np.count_nonzero(eta)) != self.occupied_count:
            raise AssertionError("occupied-site count drifted")

    def __repr__(self) -> str:
        return f"Configuration(L={self.L}, particles={self.total_particles})"
