"""Generalized storage model: parameters, consistency checks and dynamics.

A generalized storage covers batteries (levels in ``[0, S]``), storage of
demand (non-positive levels) and aggregated thermostatic loads (levels
symmetric around zero).  All quantities are energies per period.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .exceptions import (
    BoundOrderError,
    LevelBoundViolation,
    RampRangeError,
    RampViolation,
    UnrecoverableMaximumError,
    UnrecoverableMinimumError,
)

#: absolute slack on level-bound assertions
LEVEL_TOL = 1e-9


@dataclass(frozen=True)
class StorageSpec:
    """Seven-parameter generalized storage.

    Parameters
    ----------
    s_min, s_max : float
        Level bounds.
    u_min, u_max : float
        Per-period discharge (``u_min <= 0``) and charge (``u_max >= 0``)
        limits.
    mu_c, mu_d : float
        Charging and discharging efficiencies in ``(0, 1]``.
    lam : float
        Fraction of the stored energy retained over one idle period.
    """

    s_min: float
    s_max: float
    u_min: float
    u_max: float
    mu_c: float = 1.0
    mu_d: float = 1.0
    lam: float = 1.0

    def scaled(self, s_max, ramp_ratio):
        """Copy with a new capacity and ramps ``+-ramp_ratio * s_max``."""
        return StorageSpec(self.s_min, s_max, -ramp_ratio * s_max,
                           ramp_ratio * s_max, self.mu_c, self.mu_d, self.lam)


def validate_storage(spec: StorageSpec) -> StorageSpec:
    """Check every consistency condition of ``spec`` and return it.

    Raises a distinct :class:`~storagenet.exceptions.StorageAssumptionError`
    subclass per violated condition.
    """
    values = (spec.s_min, spec.s_max, spec.u_min, spec.u_max,
              spec.mu_c, spec.mu_d, spec.lam)
    if not all(math.isfinite(v) for v in values):
        raise BoundOrderError(f"non-finite storage parameter in {spec}")
    if spec.s_min > spec.s_max:
        raise BoundOrderError(f"s_min={spec.s_min} exceeds s_max={spec.s_max}")
    if spec.u_min > 0 or spec.u_max < 0:
        raise BoundOrderError(f"ramp limits [{spec.u_min}, {spec.u_max}] do not bracket 0")
    for name in ("mu_c", "mu_d", "lam"):
        v = getattr(spec, name)
        if not 0 < v <= 1:
            raise BoundOrderError(f"{name}={v} outside (0, 1]")
    if spec.lam * spec.s_min + spec.u_max < spec.s_min:
        raise UnrecoverableMinimumError(
            f"{spec.lam}*{spec.s_min} + {spec.u_max} < {spec.s_min}")
    if spec.lam * spec.s_max + spec.u_min > spec.s_max:
        raise UnrecoverableMaximumError(
            f"{spec.lam}*{spec.s_max} + {spec.u_min} > {spec.s_max}")
    if not spec.u_max - spec.u_min < spec.s_max - spec.s_min:
        raise RampRangeError(
            f"u_max - u_min = {spec.u_max - spec.u_min} is not below "
            f"s_max - s_min = {spec.s_max - spec.s_min}")
    return spec


def step(spec: StorageSpec, level: float, u: float) -> float:
    """Advance one period: ``lam * level + u``.

    Out-of-range results are errors, never clamped.
    """
    if u < spec.u_min - LEVEL_TOL or u > spec.u_max + LEVEL_TOL:
        raise RampViolation(f"u={u} outside [{spec.u_min}, {spec.u_max}]")
    nxt = spec.lam * level + u
    if nxt < spec.s_min - LEVEL_TOL or nxt > spec.s_max + LEVEL_TOL:
        raise LevelBoundViolation(
            f"level {nxt} outside [{spec.s_min}, {spec.s_max}]")
    return nxt


def net_injection(spec: StorageSpec, u: float) -> float:
    """Energy delivered to the bus by operation ``u`` (negative when charging)."""
    return spec.mu_d * max(-u, 0.0) - max(u, 0.0) / spec.mu_c
