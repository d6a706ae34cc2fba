"""Positive-P CIM with chaotic amplitude control (g-normalised SDEs).

Each step draws one standard-normal vector ``w``.  The same draw enters the
mean-amplitude SDE as ``sqrt(dt) * w`` and the measured amplitude as
``w / sqrt(dt)``; the error feedback and local field both read the measured
amplitude.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DivergenceError
from .mfz import AmplitudeTrace, _TraceRecorder
from .model import CouplingForm, HyperParams
from .schedules import extract_support, pump_schedule


@dataclass(frozen=True)
class PpState:
    mu: np.ndarray
    n: np.ndarray
    m: np.ndarray
    e: np.ndarray
    t: float = 0.0


def init_pp(N: int) -> PpState:
    if N < 1:
        raise ValueError("N must be >= 1")
    return PpState(mu=np.zeros(N), n=np.zeros(N), m=np.zeros(N), e=np.ones(N), t=0.0)


def measured_amplitude(state: PpState, w, params: HyperParams) -> np.ndarray:
    if params.j <= 0:
        raise ValueError("out-coupling rate j must be positive for homodyne measurement")
    return state.mu + np.sqrt(params.g2 / (4.0 * params.j * params.dt)) * np.asarray(w)


def local_field_pp(coupling: CouplingForm, R, mu_tilde, tau: float) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    mu_tilde = np.asarray(mu_tilde, dtype=np.float64)
    if R.shape != (coupling.N,) or mu_tilde.shape != (coupling.N,):
        raise ValueError("R and mu_tilde must have length N")
    sq = np.sqrt(tau)
    return coupling.couple(R * 0.5 * (mu_tilde + sq)) + sq * coupling.hz


def pp_step(state: PpState, coupling: CouplingForm, R, p: float, eta: float,
            params: HyperParams, w) -> tuple[PpState, np.ndarray]:
    """One Euler-Maruyama step; returns the new state and the measured amplitude used."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != state.mu.shape:
        raise ValueError("noise draw must have one entry per spin")
    mu, n, m, e = state.mu, state.n, state.m, state.e
    g2, j, dt, tau = params.g2, params.j, params.dt, params.tau
    mu_t = measured_amplitude(state, w, params)
    h = local_field_pp(coupling, R, mu_t, tau)
    inj = j * e * (R * h - 0.25 * np.sqrt(tau) * eta**2)

    mu2 = mu * mu
    fluct = (m + n) ** 2
    dmu = -(1.0 - p + j) * mu - mu * (mu2 + 2.0 * g2 * n + g2 * m) + params.K * inj
    dn = -2.0 * (1.0 + j) * n + 2.0 * p * m - 2.0 * mu2 * (2.0 * n + m) - j * fluct
    dm = (-2.0 * (1.0 + j) * m + 2.0 * p * n - 2.0 * mu2 * (2.0 * m + n) + p
          - (mu2 + g2 * m) - j * fluct)
    de = -params.beta * (mu_t * mu_t - tau) * e

    new = PpState(
        mu=mu + dt * dmu + np.sqrt(dt) * np.sqrt(j * g2) * (m + n) * w,
        n=n + dt * dn,
        m=m + dt * dm,
        e=e + dt * de,
        t=state.t + dt,
    )
    bad = ~(np.isfinite(new.mu) & np.isfinite(new.n) & np.isfinite(new.m) & np.isfinite(new.e))
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise DivergenceError(f"non-finite Positive-P state at spin {idx}", index=idx)
    return new, mu_t


@dataclass
class PpResult:
    state: PpState
    sigma: np.ndarray
    mu_tilde: np.ndarray
    trace: AmplitudeTrace | None = None


def run_pp(coupling: CouplingForm, R, params: HyperParams, eta: float,
           rng: np.random.Generator, trace: bool | str = False, e_init=None) -> PpResult:
    """One CIM invocation; the support is read from the last measured amplitude.

    ``e_init`` overrides the unit initial error amplitudes (used to carry the
    feedback state across alternations).
    """
    R = np.asarray(R, dtype=np.float64)
    N = coupling.N
    state = init_pp(N)
    if e_init is not None:
        state = PpState(state.mu, state.n, state.m, np.array(e_init, dtype=np.float64), 0.0)
    rec = _TraceRecorder(params.n_steps, trace == "full") if trace else None
    mu_t = state.mu
    for step in range(1, params.n_steps + 1):
        p = pump_schedule(float(state.t), params.p_thr, params.d)
        w = rng.standard_normal(N)
        prev = state
        state, mu_t = pp_step(state, coupling, R, p, eta, params, w)
        if np.abs(state.mu).max() > params.divergence_limit:
            idx = int(np.argmax(np.abs(state.mu)))
            raise DivergenceError(f"|mu| exceeded {params.divergence_limit} at spin {idx}",
                                  index=idx, step=step)
        if rec:
            # mu_tilde belongs to the state the step started from
            rec.record(step - 1, prev.t, mu=prev.mu, mu_tilde=mu_t, n=prev.n, m=prev.m, e=prev.e)
    return PpResult(state=state, sigma=extract_support(mu_t), mu_tilde=mu_t,
                    trace=rec.finish() if rec else None)
