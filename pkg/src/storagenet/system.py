"""Container tying storages, cost models and the network together."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import CostModel, check_convexity
from .network import PowerNetwork, single_bus_network
from .storage import StorageSpec, validate_storage


@dataclass(frozen=True, eq=False)
class StorageSystem:
    """One storage and one cost model per bus, plus the network joining them.

    ``delta_bounds`` bounds ``|delta_v|`` per bus; it only sizes LP boxes.
    """

    storages: tuple
    costs: tuple
    network: PowerNetwork
    delta_bounds: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "storages", tuple(self.storages))
        object.__setattr__(self, "costs", tuple(self.costs))
        if not self.delta_bounds:
            object.__setattr__(self, "delta_bounds", (1.0,) * len(self.storages))
        if not (len(self.storages) == len(self.costs) == self.network.n
                == len(self.delta_bounds)):
            raise ValueError(
                f"{len(self.storages)} storages, {len(self.costs)} cost models and "
                f"{len(self.delta_bounds)} imbalance bounds for {self.network.n} buses")

    @classmethod
    def single(cls, storage: StorageSpec, cost: CostModel, delta_bound=1.0):
        return cls((storage,), (cost,), single_bus_network(), (delta_bound,))

    @property
    def n(self):
        return self.network.n

    @property
    def is_single_bus(self):
        return self.network.n == 1 and self.network.m == 0

    def validate(self):
        for storage, cost in zip(self.storages, self.costs):
            validate_storage(storage)
            check_convexity(cost, storage)
        return self

    def bounds(self):
        """Arrays ``(s_min, s_max, u_min, u_max, lam)`` over buses."""
        cols = zip(*((s.s_min, s.s_max, s.u_min, s.u_max, s.lam) for s in self.storages))
        return tuple(np.array(c, dtype=float) for c in cols)
