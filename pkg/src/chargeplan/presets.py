"""Baseline parameterization and the benchmark time-limit schedule.

All lifetime purchase costs are amortized to currency per minute using
365.25-day years. The slow/fast charger pair, battery size, state-of-charge
window, and the travel/wait cost rates form the `baseline` preset used by the
CLI when no explicit config is given.
"""

from __future__ import annotations

from .model import MINUTES_PER_YEAR, ChargerType, derive_service_rates

BATTERY_KWH = 440.0
SOC_START_PCT = 10.0
SOC_END_PCT = 80.0

CHARGER_LIFETIME_YEARS = 10.0
STATION_LIFETIME_YEARS = 30.0

SLOW_POWER_KW = 125.0
FAST_POWER_KW = 450.0
SLOW_COST_USD = 55_500.0
FAST_COST_USD = 200_000.0
STATION_COST_USD = 208_000.0

TRAVEL_COST_PER_MIN = 2.67
WAIT_COST_PER_MIN = 3.46


def per_minute(purchase_usd: float, lifetime_years: float) -> float:
    return purchase_usd / (lifetime_years * MINUTES_PER_YEAR)


def station_cost_rate() -> float:
    return per_minute(STATION_COST_USD, STATION_LIFETIME_YEARS)


def baseline_charger_types() -> tuple[ChargerType, ...]:
    """Slow and fast charger catalog with service rates derived from the
    battery size and the 10-80% state-of-charge window."""
    raw = (
        ChargerType(
            id=0,
            power_kw=SLOW_POWER_KW,
            unit_cost_rate=per_minute(SLOW_COST_USD, CHARGER_LIFETIME_YEARS),
            recharge_time_min=1.0,  # placeholder, derived below
        ),
        ChargerType(
            id=1,
            power_kw=FAST_POWER_KW,
            unit_cost_rate=per_minute(FAST_COST_USD, CHARGER_LIFETIME_YEARS),
            recharge_time_min=1.0,
        ),
    )
    return derive_service_rates(BATTERY_KWH, SOC_START_PCT, SOC_END_PCT, raw)


def auto_time_limit(n_demand: int, n_station: int) -> float:
    """Benchmark schedule: tighter budgets for smaller instances, bucketed by
    the combined point count."""
    m = n_demand + n_station
    if m < 10:
        return 30.0
    if m < 20:
        return 60.0
    if m < 50:
        return 120.0
    if m < 60:
        return 300.0
    return 420.0
