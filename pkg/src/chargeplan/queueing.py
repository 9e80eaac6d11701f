"""Steady-state M/M/s delay computations and affine underestimators.

Everything here is a pure function of (arrival rate, service rate, server
count). Rates are per minute and waits are minutes to match the rest of the
package, although the math itself is unit-agnostic.

The delay probability is evaluated through the Erlang-B recurrence

    B(0) = 1,    B(n) = a B(n-1) / (n + a B(n-1)),    a = arrival/service,

followed by the conversion C = B / (1 - rho (1 - B)). This is algebraically
identical to the textbook factorial expression but stays in [0, 1] at every
step, so it is overflow-free for hundreds of servers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import UnstableQueueError

# Utilization step for the tangent slope estimate; evaluation points are
# clamped inside (0, 1) so anchors next to either end remain usable.
_FD_STEP = 1e-6
_RHO_EDGE = 1e-12


@dataclass(frozen=True)
class QueueModel:
    """One charger pool: Poisson arrivals into ``servers`` identical
    exponential servers drawing from a single FIFO queue."""

    arrival_rate: float
    service_rate: float
    servers: int

    def __post_init__(self) -> None:
        if self.servers < 0:
            raise ValueError("servers must be nonnegative")
        if self.arrival_rate < 0:
            raise ValueError("arrival_rate must be nonnegative")
        if self.servers > 0 and self.service_rate <= 0:
            raise ValueError("service_rate must be positive when servers > 0")

    @property
    def offered_load(self) -> float:
        return self.arrival_rate / self.service_rate

    @property
    def utilization(self) -> float:
        if self.servers == 0:
            return math.inf if self.arrival_rate > 0 else 0.0
        return self.arrival_rate / (self.service_rate * self.servers)


def _erlang_b(offered_load: float, servers: int) -> float:
    b = 1.0
    for n in range(1, servers + 1):
        ab = offered_load * b
        b = ab / (n + ab)
    return b


def erlang_c(model: QueueModel) -> float:
    """Probability that every server is busy (an arrival must queue).

    A pool with zero servers is treated as carrying no delay mass, so the
    probability is defined to be 0 for ``servers == 0``.
    """
    if model.servers == 0:
        return 0.0
    rho = model.utilization
    if rho >= 1.0:
        raise UnstableQueueError(
            f"utilization {rho:.6g} >= 1 for servers={model.servers}"
        )
    if model.arrival_rate == 0.0:
        return 0.0
    b = _erlang_b(model.offered_load, model.servers)
    return b / (1.0 - rho * (1.0 - b))


def expected_wait(model: QueueModel) -> float:
    """Expected minutes in the system: queueing delay plus one service."""
    if model.servers < 1:
        raise UnstableQueueError("expected_wait needs at least one server")
    rho = model.utilization
    if rho >= 1.0:
        raise UnstableQueueError(
            f"utilization {rho:.6g} >= 1 for servers={model.servers}"
        )
    p = erlang_c(model)
    return p / (model.service_rate * model.servers * (1.0 - rho)) + 1.0 / model.service_rate


def delay_factor(rho: float, servers: int, service_rate: float) -> float:
    """Dimensionless congestion term: delay probability over (1 - rho).

    ``expected_wait == delay_factor / (mu s) + 1 / mu``, which makes this the
    convex piece that the tangent cuts support. The value depends only on
    (rho, servers); service_rate is accepted to mirror the cut interface.
    """
    if servers < 1:
        raise ValueError("delay_factor needs at least one server")
    if not 0.0 < rho < 1.0:
        raise UnstableQueueError(f"utilization {rho:.6g} outside (0, 1)")
    mu = service_rate if service_rate > 0 else 1.0
    model = QueueModel(arrival_rate=rho * servers * mu, service_rate=mu, servers=servers)
    return erlang_c(model) / (1.0 - rho)


@dataclass(frozen=True)
class TangentCut:
    """Affine support line of :func:`delay_factor` at a chosen utilization.

    ``value(rho) <= delay_factor(rho, servers, ...)`` for every stable rho
    (up to finite-difference error), with equality at ``anchor_rho``.
    """

    intercept: float
    slope: float
    anchor_rho: float
    servers: int
    service_rate: float

    def value(self, rho: float) -> float:
        return self.intercept + self.slope * rho


def tangent_cut(anchor_rho: float, servers: int, service_rate: float) -> TangentCut:
    """Support line of the delay factor at ``anchor_rho`` for fixed servers.

    The slope is a central finite difference; since the delay factor is
    increasing and convex on (0, 1), the resulting line underestimates it
    everywhere up to O(step^2) curvature error.
    """
    if not 0.0 < anchor_rho < 1.0:
        raise UnstableQueueError(f"anchor {anchor_rho:.6g} outside (0, 1)")
    lo = max(anchor_rho - _FD_STEP, _RHO_EDGE)
    hi = min(anchor_rho + _FD_STEP, 1.0 - _RHO_EDGE)
    f_anchor = delay_factor(anchor_rho, servers, service_rate)
    slope = (delay_factor(hi, servers, service_rate) - delay_factor(lo, servers, service_rate)) / (hi - lo)
    slope = max(slope, 0.0)
    return TangentCut(
        intercept=f_anchor - slope * anchor_rho,
        slope=slope,
        anchor_rho=anchor_rho,
        servers=servers,
        service_rate=service_rate,
    )
