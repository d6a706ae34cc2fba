"""Mean-field CIM with chaotic amplitude control and a Zeeman term.

Deterministic forward-Euler integration of

    dc/dt = (-1 + p - c^2) c + K j e (R h - sqrt(tau) eta^2 / 4)
    de/dt = -beta (c^2 - tau) e

with either the continuous local field (neighbour amplitudes enter through
``(c + sqrt(tau)) / 4``) or the binarized one (neighbours enter through
``sigma = H(c)``).
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DivergenceError
from .model import CouplingForm, HyperParams
from .schedules import extract_support, pump_schedule

INIT_VARIANCE = 1e-4
MAX_TRACE_SAMPLES = 500


class LocalFieldMode(enum.Enum):
    CONTINUOUS = "cn"
    BINARIZED = "bn"


@dataclass(frozen=True)
class MfzState:
    c: np.ndarray
    e: np.ndarray
    t: float = 0.0


def init_mfz(N: int, rng: np.random.Generator) -> MfzState:
    if N < 1:
        raise ValueError("N must be >= 1")
    c = rng.normal(0.0, np.sqrt(INIT_VARIANCE), size=N)
    return MfzState(c=c, e=np.ones(N), t=0.0)


def local_field_continuous(coupling: CouplingForm, R, c, tau: float) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if R.shape != (coupling.N,) or c.shape != (coupling.N,):
        raise ValueError("R and c must have length N")
    sq = np.sqrt(tau)
    return coupling.couple(R * 0.25 * (c + sq)) + 0.5 * sq * coupling.hz


def local_field_binarized(coupling: CouplingForm, R, sigma, tau: float) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if R.shape != (coupling.N,) or sigma.shape != (coupling.N,):
        raise ValueError("R and sigma must have length N")
    return 0.5 * np.sqrt(tau) * (coupling.couple(R * sigma) + coupling.hz)


def injection(coupling: CouplingForm, R, state: MfzState, eta: float, params: HyperParams,
              mode: LocalFieldMode = LocalFieldMode.CONTINUOUS, sigma=None) -> np.ndarray:
    """``j e (R h - sqrt(tau) eta^2 / 4)``, the coupling drive before the ``K`` factor."""
    if mode is LocalFieldMode.BINARIZED:
        if sigma is None:
            sigma = extract_support(state.c)
        h = local_field_binarized(coupling, R, sigma, params.tau)
    else:
        h = local_field_continuous(coupling, R, state.c, params.tau)
    return params.j * state.e * (R * h - 0.25 * np.sqrt(params.tau) * eta**2)


def _drift(coupling: CouplingForm, R, c, e, p, eta, params: HyperParams, mode, sigma=None):
    sq = np.sqrt(params.tau)
    if mode is LocalFieldMode.BINARIZED:
        if sigma is None:
            sigma = c > 0
        h = 0.5 * sq * (coupling.couple(R * sigma) + coupling.hz)
    else:
        h = coupling.couple(R * (0.25 * (c + sq))) + 0.5 * sq * coupling.hz
    loss = -1.0 + p - (params.j if params.loss_includes_j else 0.0)
    dc = (loss - c * c) * c + params.K * params.j * e * (R * h - 0.25 * sq * eta * eta)
    de = -params.beta * (c * c - params.tau) * e
    return dc, de


def mfz_step(state: MfzState, coupling: CouplingForm, R, p: float, eta: float,
             params: HyperParams, mode: LocalFieldMode = LocalFieldMode.CONTINUOUS,
             sigma=None) -> MfzState:
    """One Euler step of size ``params.dt`` at pump rate ``p``.

    In binarized mode ``sigma`` defaults to ``H(c)`` of the incoming state.
    """
    if not np.isfinite(p):
        raise ValueError("pump rate must be finite")
    R = np.asarray(R, dtype=np.float64)
    dc, de = _drift(coupling, R, state.c, state.e, p, eta, params, mode, sigma)
    c_new = state.c + params.dt * dc
    e_new = state.e + params.dt * de
    _check_finite(c_new, e_new)
    return MfzState(c=c_new, e=e_new, t=state.t + params.dt)


def _check_finite(*arrays):
    ok = np.ones(arrays[0].shape, dtype=bool)
    for a in arrays:
        ok &= np.isfinite(a)
    if not ok.all():
        idx = int(np.flatnonzero(~ok)[0])
        raise DivergenceError(f"non-finite state at spin {idx}", index=idx)


@dataclass
class AmplitudeTrace:
    steps: np.ndarray
    t: np.ndarray
    values: dict

    def to_csv(self, path, columns=None) -> Path:
        """Long format: one row per (step, spin)."""
        path = Path(path)
        columns = list(columns or self.values)
        n_spins = next(iter(self.values.values())).shape[1]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "t", "spin_index", *columns])
            for k, (step, t) in enumerate(zip(self.steps, self.t)):
                for r in range(n_spins):
                    w.writerow([int(step), repr(float(t)), r,
                                *(repr(float(self.values[col][k, r])) for col in columns)])
        return path


class _TraceRecorder:
    def __init__(self, n_steps: int, full: bool):
        stride = 1 if full else max(1, -(-(n_steps + 1) // MAX_TRACE_SAMPLES))
        self.keep = set(range(0, n_steps + 1, stride)) | {n_steps}
        self.steps, self.t = [], []
        self.values: dict[str, list] = {}

    def record(self, step: int, t: float, **arrays):
        if step not in self.keep:
            return
        self.steps.append(step)
        self.t.append(t)
        for k, v in arrays.items():
            self.values.setdefault(k, []).append(np.array(v, copy=True))

    def finish(self) -> AmplitudeTrace:
        return AmplitudeTrace(np.array(self.steps), np.array(self.t),
                              {k: np.vstack(v) for k, v in self.values.items()})


@dataclass
class MfzResult:
    state: MfzState
    sigma: np.ndarray
    trace: AmplitudeTrace | None = None
    min_e: float = np.inf


def run_mfz(coupling: CouplingForm, R, params: HyperParams, eta: float,
            mode: LocalFieldMode, rng: np.random.Generator, trace: bool | str = False) -> MfzResult:
    """One CIM invocation: fresh initial state, ``n_steps`` steps, support from ``c > 0``.

    ``trace`` may be ``False``, ``True`` (at most 500 samples) or ``"full"``.
    """
    R = np.asarray(R, dtype=np.float64)
    state = init_mfz(coupling.N, rng)
    rec = _TraceRecorder(params.n_steps, trace == "full") if trace else None
    if rec:
        rec.record(0, 0.0, c=state.c, e=state.e)
    c, e, t = state.c, state.e, 0.0
    min_e = float(e.min())
    dt, limit = params.dt, params.divergence_limit
    for step in range(1, params.n_steps + 1):
        p = pump_schedule(t, params.p_thr, params.d)
        dc, de = _drift(coupling, R, c, e, p, eta, params, mode)
        c = c + dt * dc
        e = e + dt * de
        t += dt
        peak = np.abs(c).max()
        if not peak <= limit:
            _check_finite(c, e)
            idx = int(np.argmax(np.abs(c)))
            raise DivergenceError(f"|c| exceeded {limit} at spin {idx}", index=idx, step=step)
        min_e = min(min_e, float(e.min()))
        if rec:
            rec.record(step, t, c=c, e=e)
    state = MfzState(c=c, e=e, t=t)
    return MfzResult(state=state, sigma=extract_support(state.c),
                     trace=rec.finish() if rec else None, min_e=min_e)
