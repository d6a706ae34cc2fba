"""Alternating minimisation: CIM support step, then CDP signal step."""

from __future__ import annotations

import csv
import enum
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cdp import cdp_minimize
from .exceptions import DivergenceError
from .mfz import LocalFieldMode, run_mfz
from .model import CouplingForm, HyperParams, hamming_loss, lam_from_eta, rmse
from .positive_p import run_pp
from .schedules import eta_schedule, extract_support, pump_schedule

__all__ = [
    "Backend",
    "HistoryEntry",
    "RunHistory",
    "AlternationResult",
    "alternating_minimize",
    "pump_schedule",
    "eta_schedule",
    "extract_support",
]

HISTORY_COLUMNS = ("trial", "i", "eta", "hamiltonian", "objective", "rmse", "hamming", "seconds")


class Backend(enum.Enum):
    MFZ_CN = "mfz-cn"
    MFZ_BN = "mfz-bn"
    PP = "pp"

    @property
    def is_mfz(self) -> bool:
        return self is not Backend.PP


@dataclass
class HistoryEntry:
    i: int
    eta: float
    sigma: np.ndarray
    R: np.ndarray
    hamiltonian: float
    objective: float
    rmse: float | None
    hamming: float | None
    seconds: float
    objective_before_cdp: float = float("nan")


@dataclass
class RunHistory:
    entries: list = field(default_factory=list)
    failed: str | None = None
    traces: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, k) -> HistoryEntry:
        return self.entries[k]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(e, name) for e in self.entries], dtype=np.float64)

    def rows(self, trial: int = 0):
        for e in self.entries:
            yield (trial, e.i, repr(e.eta), repr(e.hamiltonian), repr(e.objective),
                   "" if e.rmse is None else repr(e.rmse),
                   "" if e.hamming is None else repr(e.hamming), f"{e.seconds:.6f}")

    def to_csv(self, path, trial: int = 0, header: bool = True) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            if header:
                w.writerow(HISTORY_COLUMNS)
            w.writerows(self.rows(trial))
        return path


@dataclass
class AlternationResult:
    R: np.ndarray
    sigma: np.ndarray
    history: RunHistory

    @property
    def coef(self) -> np.ndarray:
        return self.R * self.sigma

    @property
    def failed(self) -> bool:
        return self.history.failed is not None


def alternating_minimize(coupling: CouplingForm, backend: Backend | str, params: HyperParams,
                         R_init=None, rng: np.random.Generator | int | None = None, *,
                         method: str = "jacobi", x_true=None, xi_true=None,
                         keep_best: bool = False, trace_alternations=(),
                         carry_error: bool = False) -> AlternationResult:
    """Run alternations ``i = 0 .. velo`` inclusive.

    Parameters
    ----------
    coupling : CouplingForm
    backend : Backend or its string value
    params : HyperParams
    R_init : array, optional
        Starting signal; zeros when omitted.
    rng : Generator or seed
    method : {"jacobi", "cg"}
        CDP solver.
    x_true, xi_true : array, optional
        Ground truth for per-alternation RMSE and Hamming loss.
    keep_best : bool
        Return the alternation with the lowest objective, all scored at the
        final threshold ``eta_end``, instead of the last alternation.
    trace_alternations : iterable of int
        Alternations whose amplitude traces are stored in ``history.traces``.
    carry_error : bool
        Positive-P only: start each CIM call from the previous call's final
        error amplitudes instead of ones.

    A divergence inside a CIM call stops the run and sets ``history.failed``;
    the result then holds the last completed alternation.
    """
    backend = Backend(backend)
    rng = np.random.default_rng(rng)
    N = coupling.N
    R = np.zeros(N) if R_init is None else np.array(R_init, dtype=np.float64)
    if R.shape != (N,):
        raise ValueError(f"R_init must have length {N}")
    sigma = np.zeros(N)
    truth = x_true is not None and xi_true is not None
    history = RunHistory()
    trace_set = set(trace_alternations)
    e_carry = None
    best, best_score = None, np.inf
    lam_end = lam_from_eta(params.eta_end)
    for i in range(params.velo + 1):
        t0 = time.perf_counter()
        eta = float(eta_schedule(i, params.eta_init, params.eta_end, params.velo))
        lam = lam_from_eta(eta)
        want_trace = i in trace_set
        try:
            if backend.is_mfz:
                mode = LocalFieldMode.BINARIZED if backend is Backend.MFZ_BN else LocalFieldMode.CONTINUOUS
                res = run_mfz(coupling, R, params, eta, mode, rng, trace=want_trace)
            else:
                res = run_pp(coupling, R, params, eta, rng, trace=want_trace, e_init=e_carry)
                if carry_error:
                    e_carry = res.state.e
        except DivergenceError as exc:
            history.failed = f"alternation {i}: {exc}"
            break
        if want_trace:
            history.traces[i] = res.trace
        sigma = res.sigma
        before = coupling.energy(R, sigma, lam, include_self=True)
        R = cdp_minimize(coupling, sigma, R, method, params, refresh_inactive=params.refresh_inactive)
        entry = HistoryEntry(
            i=i, eta=eta, sigma=sigma.copy(), R=R.copy(),
            hamiltonian=coupling.energy(R, sigma, lam),
            objective=coupling.energy(R, sigma, lam, include_self=True),
            rmse=rmse(R, sigma, x_true, xi_true) if truth else None,
            hamming=hamming_loss(sigma, xi_true) if truth else None,
            seconds=time.perf_counter() - t0,
            objective_before_cdp=before,
        )
        history.entries.append(entry)
        if keep_best:
            score = coupling.energy(R, sigma, lam_end, include_self=True)
            if score < best_score:
                best, best_score = entry, score
    if keep_best and best is not None:
        return AlternationResult(R=best.R.copy(), sigma=best.sigma.copy(), history=history)
    return AlternationResult(R=R, sigma=sigma, history=history)
