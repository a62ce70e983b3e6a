"""Flag parsing shared by the bench_* management commands.

Exit codes: 0 success, 1 validation failure, 2 usage error.
"""
from __future__ import annotations

from decouple import Csv
from django.core.management.base import CommandError

from apps.dags.graph import ms_to_us
from apps.scheduling.scheduler import DropPolicy, Policy, SyncPolicy

VALIDATION_FAILED = 1
USAGE_ERROR = 2

_words = Csv()
_numbers = Csv(cast=float)


def usage_error(message: str) -> CommandError:
    return CommandError(message, returncode=USAGE_ERROR)


def validation_error(message: str) -> CommandError:
    return CommandError(message, returncode=VALIDATION_FAILED)


def parse_policies(value: str) -> tuple[Policy, ...]:
    policies = []
    for name in _words(value):
        try:
            policies.append(Policy(name.upper()))
        except ValueError:
            valid = ", ".join(p.value for p in Policy)
            raise usage_error(f"unknown policy {name!r}; expected one of {valid}") from None
    if not policies:
        raise usage_error("at least one policy is required")
    return tuple(dict.fromkeys(policies))


def parse_seeds(value: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(seed) for seed in _words(value))
    except ValueError:
        raise usage_error(f"seeds must be integers, got {value!r}") from None
    if not seeds:
        raise usage_error("at least one seed is required")
    if any(seed < 0 for seed in seeds):
        raise usage_error("seeds must be >= 0")
    return seeds


def parse_numbers(value: str, flag: str, *, minimum: float = 0.0) -> tuple[float, ...]:
    try:
        numbers = tuple(_numbers(value))
    except ValueError:
        raise usage_error(f"{flag} expects comma-separated numbers, got {value!r}") from None
    if any(number < minimum for number in numbers):
        raise usage_error(f"{flag} values must be >= {minimum:g}")
    return numbers


def parse_formats(value: str, valid) -> tuple[str, ...]:
    formats = tuple(_words(value))
    unknown = [fmt for fmt in formats if fmt not in valid]
    if unknown or not formats:
        raise usage_error(f"unknown format {', '.join(unknown) or value!r}; expected {', '.join(valid)}")
    return formats


def parse_sync(mode: str | None, interval_ms: float | None, default_interval_us: int) -> SyncPolicy | None:
    """None keeps each policy's own default synchronization."""
    if mode is None:
        return None
    interval_us = ms_to_us(interval_ms) if interval_ms is not None else default_interval_us
    try:
        if mode == "periodic":
            return SyncPolicy.periodic(interval_us)
        if mode == "on_demand":
            return SyncPolicy.on_demand()
    except ValueError as exc:
        raise usage_error(str(exc)) from None
    raise usage_error(f"unknown sync mode {mode!r}; expected periodic or on_demand")


def parse_drop_policy(value: str | None) -> DropPolicy | None:
    if value is None:
        return None
    try:
        return DropPolicy(value)
    except ValueError:
        valid = ", ".join(p.value for p in DropPolicy)
        raise usage_error(f"unknown drop policy {value!r}; expected one of {valid}") from None


def non_negative_ms(value: float | None, flag: str) -> int | None:
    if value is None:
        return None
    if value < 0:
        raise usage_error(f"{flag} must be >= 0")
    return ms_to_us(value)
