"""Parsing and formatting of dimensioned quantities ("0.8 V", "20 fF", "5 ns").

Every voltage, time, capacitance, current, temperature and power in the
run-configuration document must carry an explicit unit.  Values are stored
internally in SI base units (volts, seconds, farads, amperes, kelvin, watts).
"""
from __future__ import annotations

import re

SI_PREFIXES = {
    "y": 1e-24, "z": 1e-21, "a": 1e-18, "f": 1e-15, "p": 1e-12,
    "n": 1e-9, "u": 1e-6, "µ": 1e-6, "m": 1e-3, "": 1.0,
    "k": 1e3, "M": 1e6, "G": 1e9, "T": 1e12,
}

# base symbol per dimension accepted in config files
UNIT_SYMBOLS = {
    "voltage": "V",
    "time": "s",
    "capacitance": "F",
    "current": "A",
    "temperature": "K",
    "power": "W",
    "voltage_per_decade": "V/dec",
}

_QUANTITY_RE = re.compile(r"^\s*([+-]?[0-9.]+(?:[eE][+-]?[0-9]+)?)\s*([^\s]+)\s*$")


class UnitError(ValueError):
    """A quantity string is malformed or carries the wrong unit."""


def parse_quantity(text: str | float, dimension: str) -> float:
    """Parse a quantity string like ``"-0.45 V"`` or ``"20 fF"`` into SI units.

    Bare numbers are rejected: units are mandatory so config files stay
    self-describing.  ``dimension`` is one of the keys of ``UNIT_SYMBOLS``.
    """
    symbol = UNIT_SYMBOLS[dimension]
    if isinstance(text, (int, float)):
        raise UnitError(
            f"bare number {text!r} is not allowed; write an explicit unit, e.g. '1.0 {symbol}'"
        )
    m = _QUANTITY_RE.match(text)
    if not m:
        raise UnitError(f"cannot parse quantity {text!r}")
    value = float(m.group(1))
    unit = m.group(2)
    if dimension == "voltage_per_decade":
        # accept "mV/dec" style; split off the "/dec" suffix
        if not unit.endswith("/dec"):
            raise UnitError(f"{text!r}: expected a '<prefix>V/dec' unit")
        unit = unit[: -len("/dec")]
        symbol = "V"
    if not unit.endswith(symbol):
        raise UnitError(f"{text!r}: expected a {symbol} unit for {dimension}")
    prefix = unit[: -len(symbol)]
    if prefix not in SI_PREFIXES:
        raise UnitError(f"{text!r}: unknown SI prefix {prefix!r}")
    return value * SI_PREFIXES[prefix]


def format_quantity(value: float, dimension: str) -> str:
    """Format an SI value back to a canonical unit string (12 significant digits)."""
    symbol = UNIT_SYMBOLS[dimension]
    return f"{value:.12g} {symbol}"
