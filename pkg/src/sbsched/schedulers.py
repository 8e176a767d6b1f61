"""OFF-time policies: deterministic (DOA), randomized (ROA), the adaptive
rule for piecewise-decreasing rent, and the fixed-time / storage-threshold
baselines. Pure decision functions live at module level; the Policy classes
adapt them to the step-driven engine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pricing import PriceTag

E = math.e


def doa_off_time(rent: float, buy: float, period: float) -> float:
    """Deterministic OFF time b/r, clamped to the period.

    Zero rent degenerates to never switching OFF voluntarily.
    """
    if rent < 0 or buy < 0 or period <= 0:
        raise ValueError("prices must be non-negative and the period positive")
    if rent == 0.0:
        return period
    return min(max(buy / rent, 0.0), period)


def roa_off_cdf(rent: float, buy: float, t: float) -> float:
    """Probability that the randomized policy has switched OFF by time t."""
    if rent <= 0 or buy <= 0:
        raise ValueError("rent and buy must be positive")
    if t < 0:
        raise ValueError("t must be non-negative")
    ratio = rent / buy
    if t >= buy / rent:
        return 1.0
    return (math.exp(ratio * t) - 1.0) / (E - 1.0)


def roa_off_time(rent: float, buy: float, mu: float) -> float:
    """Inverse-CDF draw of the randomized OFF time; always in [0, b/r]."""
    if rent <= 0:
        raise ValueError("rent must be positive")
    if buy < 0:
        raise ValueError("buy must be non-negative")
    if not (0.0 <= mu <= 1.0):
        raise ValueError("mu must lie in [0, 1]")
    if buy == 0.0:
        return 0.0
    return buy / rent * math.log1p(mu * (E - 1.0))


@dataclass(frozen=True)
class RentHistory:
    """Strictly decreasing rent levels with the times they took effect.

    steps[v] = (time, rent); the first time must be 0 and rents must strictly
    decrease, which is the regime the adaptive update rule is valid for.
    """

    steps: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not self.steps:
            raise ValueError("history must contain at least one rent level")
        if self.steps[0][0] != 0.0:
            raise ValueError("the first rent level must start at time 0")
        for (t0, r0), (t1, r1) in zip(self.steps, self.steps[1:]):
            if t1 <= t0:
                raise ValueError("rent-change times must strictly increase")
            if r1 >= r0:
                raise ValueError("rents must strictly decrease")
        if any(r <= 0 for _, r in self.steps):
            raise ValueError("rents must be positive")

    def extended(self, t: float, rent: float) -> "RentHistory":
        return RentHistory(self.steps + ((t, rent),))


def adaptive_off_time(history: RentHistory, buy: float) -> float:
    """Scheduled OFF time that keeps the accumulated rent equal to the buy price.

    With a single rent level this is b/r; each further (strictly lower) level
    pushes the OFF time strictly later.
    """
    if buy < 0:
        raise ValueError("buy must be non-negative")
    steps = history.steps
    r_last = steps[-1][1]
    correction = 0.0
    for v in range(1, len(steps)):
        t_change = steps[v][0]
        correction += t_change * (steps[v - 1][1] - steps[v][1])
    return buy / r_last - correction / r_last


def accumulated_rent(history: RentHistory, t: float) -> float:
    """Rent paid on [0, t] when the rent follows the history (last level held)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    total = 0.0
    steps = history.steps
    for v, (t_start, r) in enumerate(steps):
        t_end = steps[v + 1][0] if v + 1 < len(steps) else math.inf
        if t <= t_start:
            break
        total += r * (min(t, t_end) - t_start)
    return total


def adaptive_realized_off_time(history: RentHistory, buy: float, period: float) -> float:
    """OFF time actually realized when the schedule is re-derived at each rent change.

    The SBS switches OFF as soon as the clock reaches the currently scheduled
    time, so a schedule that lands before the next rent change is final.
    """
    steps = history.steps
    for v in range(len(steps)):
        t_bar = adaptive_off_time(RentHistory(steps[: v + 1]), buy)
        next_change = steps[v + 1][0] if v + 1 < len(steps) else math.inf
        if t_bar <= next_change:
            return min(t_bar, period)
    return min(t_bar, period)


def baseline_fixed(t_fix: float, period: float) -> float:
    """Fixed OFF time shared by all SBSs."""
    if not (0.0 <= t_fix <= period):
        raise ValueError("fixed OFF time must lie in [0, period]")
    return t_fix


def baseline_threshold(e: float, cap: float, k_percent: float) -> bool:
    """ON iff the storage charge percentage strictly exceeds the threshold."""
    if cap <= 0:
        raise ValueError("storage capacity must be positive")
    if not (0.0 <= k_percent <= 100.0):
        raise ValueError("threshold must lie in [0, 100]")
    return 100.0 * e / cap > k_percent


# ---------------------------------------------------------------------------
# Step-driven policy objects used by the engine.


class Policy:
    """One scheduling policy instance; reset per period, queried per slot."""

    name = "policy"
    switches_back_on = False
    needs_rent = False

    def reset(self, tags: list[PriceTag], period: float,
              rngs: list[np.random.Generator]) -> None:
        raise NotImplementedError

    def desired_on(self, j: int, t: float, stored: float, cap: float,
                   rent_now: float | None) -> bool:
        raise NotImplementedError


class _ScheduledPolicy(Policy):
    """Common base: decide one OFF time per SBS at the period start."""

    def __init__(self) -> None:
        self.off_times: dict[int, float] = {}

    def desired_on(self, j, t, stored, cap, rent_now):
        return t < self.off_times[j]


class DoaPolicy(_ScheduledPolicy):
    name = "doa"

    def reset(self, tags, period, rngs):
        self.off_times = {tag.sbs: doa_off_time(tag.rent, tag.buy, period) for tag in tags}


class RoaPolicy(_ScheduledPolicy):
    name = "roa"

    def reset(self, tags, period, rngs):
        self.off_times = {}
        for tag in tags:
            mu = float(rngs[tag.sbs - 1].uniform())
            if tag.rent == 0.0:
                self.off_times[tag.sbs] = period
            else:
                self.off_times[tag.sbs] = roa_off_time(tag.rent, tag.buy, mu)


class FixedPolicy(_ScheduledPolicy):
    def __init__(self, t_fix: float) -> None:
        super().__init__()
        self.t_fix = t_fix
        self.name = f"fixed:{t_fix:g}"

    def reset(self, tags, period, rngs):
        self.off_times = {tag.sbs: baseline_fixed(min(self.t_fix, period), period)
                          for tag in tags}


class ThresholdPolicy(Policy):
    """Storage-threshold baseline; may switch ON and OFF every slot."""

    switches_back_on = True

    def __init__(self, k_percent: float) -> None:
        self.k_percent = k_percent
        self.name = f"threshold:{k_percent:g}"

    def reset(self, tags, period, rngs):
        pass

    def desired_on(self, j, t, stored, cap, rent_now):
        return baseline_threshold(stored, cap, self.k_percent)


class AdaptivePolicy(_ScheduledPolicy):
    """Re-derives the OFF time whenever the observed rent strictly decreases.

    A rent increase is outside the rule's validity; the previous schedule is
    held (`on_increase="hold"`) or the run aborts (`on_increase="error"`).
    """

    name = "adaptive"
    needs_rent = True

    def __init__(self, rtol: float = 1e-9, on_increase: str = "hold") -> None:
        super().__init__()
        if on_increase not in ("hold", "error"):
            raise ValueError("on_increase must be 'hold' or 'error'")
        self.rtol = rtol
        self.on_increase = on_increase
        self.histories: dict[int, RentHistory] = {}
        self.buys: dict[int, float] = {}

    def reset(self, tags, period, rngs):
        self.period = period
        self.histories = {}
        self.buys = {tag.sbs: tag.buy for tag in tags}
        self.off_times = {}
        for tag in tags:
            if tag.rent > 0.0:
                self.histories[tag.sbs] = RentHistory(((0.0, tag.rent),))
                self.off_times[tag.sbs] = adaptive_off_time(
                    self.histories[tag.sbs], tag.buy)
            else:
                self.off_times[tag.sbs] = period

    def desired_on(self, j, t, stored, cap, rent_now):
        if rent_now is not None and j in self.histories:
            last = self.histories[j].steps[-1][1]
            if abs(rent_now - last) > self.rtol * last:
                if rent_now < last:
                    self.histories[j] = self.histories[j].extended(t, rent_now)
                    self.off_times[j] = adaptive_off_time(self.histories[j], self.buys[j])
                elif self.on_increase == "error":
                    raise ValueError(
                        f"SBS {j}: rent increased at t={t}; the adaptive rule "
                        "requires decreasing rent")
        return t < self.off_times[j]


def make_policy(spec: str) -> Policy:
    """Parse a policy string: doa | roa | adaptive | fixed:<t> | threshold:<K>."""
    kind, _, arg = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "doa":
        return DoaPolicy()
    if kind == "roa":
        return RoaPolicy()
    if kind == "adaptive":
        return AdaptivePolicy()
    if kind == "fixed":
        if not arg:
            raise ValueError("fixed policy needs a time, e.g. fixed:7")
        return FixedPolicy(float(arg))
    if kind == "threshold":
        if not arg:
            raise ValueError("threshold policy needs a percentage, e.g. threshold:50")
        return ThresholdPolicy(float(arg))
    raise ValueError(f"unknown policy {spec!r}")
