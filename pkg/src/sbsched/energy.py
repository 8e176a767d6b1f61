"""Energy side: BS power model, Poisson harvesting, bounded storage dynamics.

Harvesting happens every slot regardless of the ON/OFF state; consumption is
charged only while ON. Depletion uses a strict test on whether the next slot
can be funded out of stored plus freshly harvested energy.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .network import BsParams


@dataclass(frozen=True)
class PowerModelParams:
    """Weight between fixed and utilization-proportional power consumption."""

    q: float = 0.9

    def __post_init__(self) -> None:
        if not (0.0 <= self.q <= 1.0):
            raise ValueError("q must lie in [0, 1]")


@dataclass(frozen=True)
class HarvestParams:
    """Poisson energy arrivals: `rate` arrivals/second of `quantum` joules."""

    rate: float = 20.0
    quantum: float = 0.2

    def __post_init__(self) -> None:
        if self.rate < 0 or self.quantum < 0:
            raise ValueError("harvest rate and quantum must be non-negative")


@dataclass
class EnergyState:
    """Per-SBS stored energy, capacity, and first-depletion bookkeeping."""

    stored: np.ndarray  # joules per SBS
    capacity: float
    initial: float
    depleted_at: np.ndarray = field(default=None)  # seconds, NaN if never

    def __post_init__(self) -> None:
        self.stored = np.asarray(self.stored, dtype=float)
        if self.depleted_at is None:
            self.depleted_at = np.full(self.stored.shape, np.nan)
        if np.any(self.stored < 0) or np.any(self.stored > self.capacity + 1e-12):
            raise ValueError("stored energy out of [0, capacity]")

    @classmethod
    def fresh(cls, n_sbs: int, initial: float, capacity: float) -> "EnergyState":
        if not (0.0 <= initial <= capacity):
            raise ValueError("initial energy must lie in [0, capacity]")
        return cls(stored=np.full(n_sbs, float(initial)), capacity=float(capacity),
                   initial=float(initial))

    def reset_depletion(self) -> None:
        """Clear depletion flags at a period boundary; energy carries over."""
        self.depleted_at = np.full(self.stored.shape, np.nan)


def bs_power(params: BsParams, n_users: int, q: float) -> float:
    """Instantaneous power draw of an ON BS with `n_users` attached (watts)."""
    if n_users < 0:
        raise ValueError("n_users must be non-negative")
    if n_users > params.max_users:
        warnings.warn(
            f"BS {params.id}: {n_users} users exceed max {params.max_users}; "
            "clamping the proportional term",
            stacklevel=2,
        )
        n_users = params.max_users
    p = params.op_power_max
    return (n_users / params.max_users) * (1.0 - q) * p + q * p


def step_harvest(params: HarvestParams, dt: float, rng: np.random.Generator) -> float:
    """Energy harvested in one slot of length dt (joules)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if params.rate == 0.0 or params.quantum == 0.0:
        return 0.0
    return params.quantum * float(rng.poisson(params.rate * dt))


def harvest_trace(
    params: HarvestParams, dt: float, n_steps: int, n_sbs: int, rng: np.random.Generator
) -> np.ndarray:
    """Pre-sampled (n_steps, n_sbs) arrival trace for one period."""
    if params.rate == 0.0 or params.quantum == 0.0:
        return np.zeros((n_steps, n_sbs))
    return params.quantum * rng.poisson(params.rate * dt, size=(n_steps, n_sbs)).astype(float)


def update_storage(e: float, harvested: float, consumed: float, cap: float) -> float:
    """One storage step: credit the arrivals, charge the slot, clamp at cap."""
    if min(e, harvested, consumed, cap) < 0:
        raise ValueError("energy quantities must be non-negative")
    if consumed > e + harvested + 1e-9:
        raise RuntimeError(
            "consumption exceeds available energy; depletion check was skipped"
        )
    return min(e + harvested - consumed, cap)


def check_depletion(e: float, power: float, dt: float, harvested: float) -> bool:
    """True iff stored plus freshly harvested energy cannot fund the next slot."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return e + harvested < power * dt


def load_harvest_trace(path: str, n_sbs: int, dt: float, n_steps: int) -> np.ndarray:
    """Read a recorded arrival trace (CSV: time, sbs_id, joules) onto the slot grid.

    Arrivals are credited to the slot containing their timestamp; SBS ids are
    1-based (matching BS indices). Rows beyond the horizon are ignored.
    """
    trace = np.zeros((n_steps, n_sbs))
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [c.strip().lower() for c in header] != ["time", "sbs_id", "joules"]:
            raise ValueError(f"{path}: expected header 'time,sbs_id,joules'")
        for row in reader:
            if not row:
                continue
            t, sbs_id, joules = float(row[0]), int(row[1]), float(row[2])
            if not (1 <= sbs_id <= n_sbs):
                raise ValueError(f"{path}: sbs_id {sbs_id} out of range")
            k = int(math.floor(t / dt + 1e-9))
            if 0 <= k < n_steps:
                trace[k, sbs_id - 1] += joules
    return trace
