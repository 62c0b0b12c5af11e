"""Small argument checks shared by the config dataclasses and estimators."""

from __future__ import annotations

import numbers

from .exceptions import InvalidInputError


def check_positive_int(name, value, minimum=1):
    if not isinstance(value, numbers.Integral) or isinstance(value, bool) or value < minimum:
        raise InvalidInputError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_fraction(name, value, low=0.0, high=1.0, low_open=False, high_open=False):
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise InvalidInputError(f"{name} must be a real number, got {value!r}")
    ok_low = value > low if low_open else value >= low
    ok_high = value < high if high_open else value <= high
    if not (ok_low and ok_high):
        lb = "(" if low_open else "["
        rb = ")" if high_open else "]"
        raise InvalidInputError(f"{name} must be in {lb}{low}, {high}{rb}, got {value!r}")
    return float(value)


def check_same_length(**named):
    lengths = {k: len(v) for k, v in named.items()}
    if len(set(lengths.values())) > 1:
        desc = ", ".join(f"{k}={n}" for k, n in lengths.items())
        raise InvalidInputError(f"length mismatch: {desc}")
