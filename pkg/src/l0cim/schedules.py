"""Pump-rate and threshold schedules, and the amplitude-to-support map."""

import math

import numpy as np


def pump_schedule(t, p_thr: float = 1.0, d: float = 0.4):
    """Sigmoid pump ramp from ``p_thr - d`` to ``p_thr + d``, centred at ``t = 4``."""
    if isinstance(t, (float, int)):
        z = -(t - 4.0) / 2.0
        return (p_thr - d) + 2.0 * d / (1.0 + math.exp(z)) if z < 700 else p_thr - d
    return (p_thr - d) + 2.0 * d / (1.0 + np.exp(-(np.asarray(t, dtype=np.float64) - 4.0) / 2.0))


def eta_schedule(i, eta_init: float, eta_end: float, velo: int):
    """Threshold for alternation ``i``: linear decay from ``eta_init``, floored at ``eta_end``."""
    if velo < 1:
        raise ValueError("velo must be >= 1")
    return np.maximum(eta_init * (1.0 - np.asarray(i, dtype=np.float64) / velo), eta_end)


def extract_support(amplitudes) -> np.ndarray:
    """Heaviside map; an amplitude of exactly zero is off."""
    return (np.asarray(amplitudes) > 0).astype(np.float64)
