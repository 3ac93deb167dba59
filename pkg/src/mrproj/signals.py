"""Donoho-Johnstone benchmark signals on [0, 1]."""
from dataclasses import dataclass

import numpy as np

__all__ = ["SignalSpec", "benchmark_signal", "SIGNALS", "doppler", "heavisine", "bumps", "blocks"]

_POS = np.array([0.1, 0.13, 0.15, 0.23, 0.25, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81])
_BUMP_HGT = np.array([4, 5, 3, 4, 5, 4.2, 2.1, 4.3, 3.1, 5.1, 4.2])
_BUMP_WTH = np.array([0.005, 0.005, 0.006, 0.01, 0.01, 0.03, 0.01, 0.01, 0.005, 0.008, 0.005])
_BLOCK_HGT = np.array([4, -5, 3, -4, 5, -4.2, 2.1, 4.3, -3.1, 2.1, -4.2])


def doppler(t):
    t = np.asarray(t, dtype=float)
    return np.sqrt(t * (1 - t)) * np.sin(2 * np.pi * 1.05 / (t + 0.05))


def heavisine(t):
    t = np.asarray(t, dtype=float)
    return 4 * np.sin(4 * np.pi * t) - np.sign(t - 0.3) - np.sign(0.72 - t)


def bumps(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for p, h, w in zip(_POS, _BUMP_HGT, _BUMP_WTH):
        out += h / (1 + np.abs((t - p) / w)) ** 4
    return out


def blocks(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for p, h in zip(_POS, _BLOCK_HGT):
        out += (1 + np.sign(t - p)) * h / 2
    return out


SIGNALS = {"doppler": doppler, "heavisine": heavisine, "bumps": bumps, "blocks": blocks}


@dataclass(frozen=True)
class SignalSpec:
    """A closed-form signal on [0, 1] times an amplitude factor."""

    name: str
    func: object
    scale: float = 1.0

    def __call__(self, t):
        return self.scale * self.func(t)

    def rescaled(self, factor):
        return SignalSpec(self.name, self.func, self.scale * factor)


def benchmark_signal(name, func=None):
    """
    Look up a benchmark signal by name (case-insensitive).

    ``name='custom'`` wraps ``func``.
    """
    key = name.lower()
    if key == "custom":
        if func is None:
            raise ValueError("custom signal needs a callable")
        return SignalSpec("custom", func)
    if key not in SIGNALS:
        raise ValueError(f"unknown signal {name!r}; known: {sorted(SIGNALS)} or 'custom'")
    return SignalSpec(key, SIGNALS[key])
