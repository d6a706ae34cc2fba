"""Command-line experiment harness.

Every subcommand reads one JSON config with the sections ``instance``,
``solver``, ``schedule``, ``mri`` and ``output``.  Result CSVs start with a
``#`` line carrying the config hash and the seed list; data rows hold no
timings, so equal configs give byte-identical files.  Wall-clock times go to
a separate ``timing.csv``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .alternating import Backend, alternating_minimize
from .exceptions import ConfigError
from .datagen import GENERATOR, GENERATOR_VERSION, gen_instance
from .model import HyperParams, coupling_from_observation, load_instance, save_instance

log = logging.getLogger("l0cim")

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 1, 2
BACKEND_CODES = {b.value: k for k, b in enumerate(Backend)}

# Positive-P target amplitude per observation-noise level
PP_TAU_BY_NU = {0.05: 0.21, 0.1: 0.15}
MRI_K = {"mfz": 0.1, "pp": 0.01}

SOLVER_KEYS = {"backends", "tau", "K", "g2", "j", "beta", "dt", "n_steps", "dt_c",
               "jacobi_iters", "cg_max_iters", "cg_tol", "loss_includes_j",
               "refresh_inactive", "divergence_limit", "cdp", "keep_best", "carry_error",
               "g2_list", "tau_list"}
SCHEDULE_KEYS = {"p_thr", "d", "eta_init", "eta_end", "velo"}
INSTANCE_KEYS = {"N", "alpha", "a", "nu", "seeds", "dir"}
MRI_KEYS = {"image", "size", "sparseness", "M", "compression", "gamma", "eta_grid",
            "lambda_grid", "n_masks", "d", "velo", "K"}
OUTPUT_KEYS = {"dir", "history", "trace_alternations", "images"}
SECTIONS = {"instance": INSTANCE_KEYS, "solver": SOLVER_KEYS, "schedule": SCHEDULE_KEYS,
            "mri": MRI_KEYS, "output": OUTPUT_KEYS}

DEFAULT_CONFIG = {
    "instance": {"N": 500, "alpha": 0.6, "a": 0.1, "nu": 0.05, "seeds": 10},
    "solver": {"backends": ["mfz-bn", "mfz-cn", "pp"], "cdp": "jacobi"},
    "schedule": {},
    "mri": {"size": 64, "sparseness": 0.212, "compression": 0.4, "gamma": 1e-4,
            "eta_grid": [0.045, 0.05, 0.06, 0.07], "lambda_grid": [1e-5, 1e-4, 1e-3],
            "n_masks": 5, "d": 0.6, "velo": 11},
    "output": {"dir": "results", "history": True, "trace_alternations": [2, 20]},
}


# --- config ------------------------------------------------------------------

def load_config(path) -> dict:
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))
    if path is None:
        return cfg
    try:
        user = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: top level must be an object")
    for section, body in user.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be an object")
        unknown = set(body) - SECTIONS[section]
        if unknown:
            raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
        cfg[section].update(body)
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _as_list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


def seed_list(cfg: dict, seed_base: int) -> list[int]:
    seeds = cfg["instance"].get("seeds", 1)
    if isinstance(seeds, int):
        if seeds < 1:
            raise ConfigError("instance.seeds must be >= 1")
        return [seed_base + k for k in range(seeds)]
    return [int(s) for s in seeds]


def backends(cfg: dict, override: str | None) -> list[str]:
    names = [override] if override else _as_list(cfg["solver"]["backends"])
    for b in names:
        if b not in BACKEND_CODES:
            raise ConfigError(f"unknown backend {b!r}")
    return names


def hyperparams(cfg: dict, backend: str, nu: float | None = None, preset: bool = False,
                mri: bool = False) -> HyperParams:
    """Resolve the solver/schedule sections into :class:`HyperParams` for one backend."""
    solver = {k: v for k, v in cfg["solver"].items()
              if k in SOLVER_KEYS - {"backends", "cdp", "keep_best", "carry_error", "g2_list",
                                     "tau_list"}}
    fields = {**solver, **cfg["schedule"]}
    if preset and backend == "pp" and "tau" not in cfg["solver"] and nu is not None:
        match = [tau for level, tau in PP_TAU_BY_NU.items() if np.isclose(level, nu)]
        if match:
            fields["tau"] = match[0]
    if mri:
        m = cfg["mri"]
        fields["velo"] = int(m.get("velo", 11))
        fields["d"] = float(m.get("d", fields.get("d", 0.4)))
        fields["gamma"] = float(m.get("gamma", 1e-4))
        if "K" in m:
            fields["K"] = float(m["K"])
        elif preset or "K" not in cfg["solver"]:
            fields["K"] = MRI_K["pp" if backend == "pp" else "mfz"]
    try:
        return HyperParams(**fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid solver parameters: {exc}") from exc


# --- output helpers ------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: list, rows, chash: str, seeds, extra: str = "") -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        meta = f"# config_hash={chash} seeds={','.join(map(str, seeds))}"
        fh.write(meta + (f" {extra}" if extra else "") + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path: Path) -> list[dict]:
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def solver_rng(seed: int, backend: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), BACKEND_CODES[backend], *extra])


# --- instances -----------------------------------------------------------------

def instance_grid(cfg: dict, seeds) -> list[dict]:
    inst = cfg["instance"]
    grid = []
    for alpha in _as_list(inst["alpha"]):
        for a in _as_list(inst["a"]):
            for nu in _as_list(inst["nu"]):
                for s in seeds:
                    grid.append({"N": int(inst["N"]), "alpha": float(alpha), "a": float(a),
                                 "nu": float(nu), "seed": int(s)})
    return grid


def bundle_name(point: dict) -> str:
    return f"N{point['N']}_alpha{point['alpha']:g}_a{point['a']:g}_nu{point['nu']:g}_seed{point['seed']}"


def cmd_gen(cfg, args) -> int:
    seeds = seed_list(cfg, args.seed_base)
    root = Path(args.out or cfg["output"]["dir"]) / "instances"
    grid = instance_grid(cfg, seeds)
    for point in grid:
        try:
            inst = gen_instance(point["N"], point["alpha"], point["a"], point["nu"], point["seed"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        save_instance(inst, root / bundle_name(point))
    (root / "generator.json").write_text(json.dumps(
        {"generator": GENERATOR, "version": GENERATOR_VERSION, "config_hash": config_hash(cfg)},
        indent=2, sort_keys=True) + "\n")
    log.info("wrote %d instance bundles to %s", len(grid), root)
    return EXIT_OK


def _instances(cfg, seeds):
    src = cfg["instance"].get("dir")
    if src:
        dirs = sorted(p for p in Path(src).iterdir() if (p / "meta.json").exists())
        if not dirs:
            raise ConfigError(f"no instance bundles under {src}")
        return [load_instance(d) for d in dirs]
    out = []
    for point in instance_grid(cfg, seeds):
        try:
            out.append(gen_instance(point["N"], point["alpha"], point["a"], point["nu"], point["seed"]))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return out


# --- run -----------------------------------------------------------------------

def _run_trial(job):
    inst, backend, params, method, keep_best, carry, trace_at = job
    t0 = time.perf_counter()
    res = alternating_minimize(
        coupling_from_observation(inst.A, inst.y), backend, params, rng=solver_rng(inst.seed, backend),
        method=method, x_true=inst.x_true, xi_true=inst.xi_true, keep_best=keep_best,
        carry_error=carry, trace_alternations=trace_at)
    return res, time.perf_counter() - t0


SUMMARY_HEADER = ["backend", "N", "a", "alpha", "nu", "seed", "tau", "final_rmse",
                  "final_hamming", "min_hamiltonian", "alternations", "failed", "reason"]


def _summary_row(inst, backend, params, res):
    h = res.history
    last = h[-1] if len(h) else None
    return [backend, inst.N, inst.a, inst.alpha, inst.nu, inst.seed, params.tau,
            None if last is None else last.rmse, None if last is None else last.hamming,
            float(np.min(h.column("hamiltonian"))) if len(h) else None, len(h),
            res.failed, h.failed or ""]


def cmd_run(cfg, args) -> int:
    seeds = seed_list(cfg, args.seed_base)
    names = backends(cfg, args.backend)
    out = Path(args.out or cfg["output"]["dir"])
    chash = config_hash(cfg)
    insts = _instances(cfg, seeds)
    solver = cfg["solver"]
    jobs, meta = [], []
    for b in names:
        for inst in insts:
            params = hyperparams(cfg, b, inst.nu, args.paper_params)
            jobs.append((inst, b, params, solver.get("cdp", "jacobi"), bool(solver.get("keep_best")),
                         bool(solver.get("carry_error")), ()))
            meta.append((inst, b, params))
    results = _map(_run_trial, jobs, args.workers)
    rows, timing = [], []
    for (inst, b, params), (res, secs) in zip(meta, results):
        rows.append(_summary_row(inst, b, params, res))
        timing.append([b, inst.a, inst.alpha, inst.nu, inst.seed, f"{secs:.3f}"])
        if cfg["output"].get("history", True):
            name = f"{b}_a{inst.a:g}_alpha{inst.alpha:g}_nu{inst.nu:g}_seed{inst.seed}.csv"
            hist_rows = [row[:-1] for row in res.history.rows(inst.seed)]
            write_csv(out / "history" / name,
                      ["trial", "i", "eta", "hamiltonian", "objective", "rmse", "hamming"],
                      hist_rows, chash, [inst.seed])
    write_csv(out / "summary.csv", SUMMARY_HEADER, rows, chash, sorted({i.seed for i in insts}))
    write_csv(out / "timing.csv", ["backend", "a", "alpha", "nu", "seed", "seconds"], timing,
              chash, sorted({i.seed for i in insts}))
    failed = sum(r[-2] for r in rows)
    log.info("%d trials, %d failed; summary in %s", len(rows), failed, out / "summary.csv")
    return EXIT_FAILED if failed and args.strict else EXIT_OK


# --- MRI -----------------------------------------------------------------------

def _mri_trial(job):
    prob, backend, params, R0, seed = job
    res = alternating_minimize(prob.ops.coupling, backend, params, R_init=R0,
                               rng=solver_rng(seed, backend), method="cg")
    return res


def cmd_mri(cfg, args) -> int:
    from .mri import lasso_init, prepare_problem, read_pgm, write_pgm

    m = cfg["mri"]
    if not m.get("image"):
        raise ConfigError("mri.image must name a portable graymap file")
    try:
        img = read_pgm(m["image"])
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read image {m['image']}: {exc}") from exc
    size = int(m["size"])
    M = int(m["M"]) if "M" in m else int(np.floor(float(m["compression"]) * size * size + 0.5))
    n_masks = int(m.get("n_masks", 5))
    seeds = [args.seed_base + k for k in range(n_masks)]
    out = Path(args.out or cfg["output"]["dir"])
    chash = config_hash(cfg)
    names = backends(cfg, args.backend)
    probs = [prepare_problem(img, size, float(m["sparseness"]), M, s, float(m.get("gamma", 1e-4)))
             for s in seeds]
    (out / "masks").mkdir(parents=True, exist_ok=True)
    for s, p in zip(seeds, probs):
        p.mask.to_csv(out / "masks" / f"mask_{s}.csv")
    rows = []
    lasso = {}
    for lam in _as_list(m["lambda_grid"]):
        lasso[lam] = [lasso_init(p.ops, p.y, float(lam)) for p in probs]
        rows += [["lasso", lam, s, p.rmse(x)] for s, p, x in zip(seeds, probs, lasso[lam])]
    best_lam = min(lasso, key=lambda lam: np.mean([p.rmse(x) for p, x in zip(probs, lasso[lam])]))
    jobs, keys = [], []
    for b in names:
        for eta in _as_list(m["eta_grid"]):
            params = hyperparams(cfg, b, None, args.paper_params, mri=True)
            params = params.replace(eta_init=float(eta), eta_end=float(eta))
            for s, p, R0 in zip(seeds, probs, lasso[best_lam]):
                jobs.append((p, b, params, R0, s))
                keys.append((b, eta, s, p))
    results = _map(_mri_trial, jobs, args.workers)
    best = {}
    n_failed = 0
    for (b, eta, s, p), res in zip(keys, results):
        err = p.rmse(res.coef) if not res.failed else None
        n_failed += res.failed
        rows.append([b, eta, s, err])
        if err is not None and (b not in best or err < best[b][0]):
            best[b] = (err, res.coef, p)
    write_csv(out / "mri_rmse.csv", ["method", "eta", "trial", "rmse"], rows, chash, seeds,
              f"best_lambda={best_lam!r}")
    if cfg["output"].get("images", True):
        img_dir = out / "images"
        img_dir.mkdir(parents=True, exist_ok=True)
        write_pgm(img_dir / "target.pgm", probs[0].target)
        write_pgm(img_dir / "lasso.pgm", probs[0].image_of(lasso[best_lam][0]))
        for b, (_, coef, p) in best.items():
            write_pgm(img_dir / f"{b}.pgm", p.image_of(coef))
    log.info("MRI sweep done; best LASSO lambda %g", best_lam)
    return EXIT_FAILED if n_failed and args.strict else EXIT_OK


# --- supplementary sweeps ----------------------------------------------------

def cmd_sweep_g2(cfg, args) -> int:
    seeds = seed_list(cfg, args.seed_base)[:1]
    inst = _instances(cfg, seeds)[0]
    out = Path(args.out or cfg["output"]["dir"])
    chash = config_hash(cfg)
    g2_list = [float(g) for g in _as_list(cfg["solver"].get("g2_list", [1e-7, 1e-1]))]
    base = hyperparams(cfg, "pp", inst.nu, args.paper_params)
    wanted = [int(a) for a in _as_list(cfg["output"].get("trace_alternations", [2, 20]))]
    alts = tuple(a for a in wanted if 0 <= a <= base.velo)
    trace_rows, summary, n_failed = [], [], 0
    for g2 in g2_list:
        res, _ = _run_trial((inst, "pp", base.replace(g2=g2), cfg["solver"].get("cdp", "jacobi"),
                             False, bool(cfg["solver"].get("carry_error")), alts))
        n_failed += res.failed
        for alt in alts:
            tr = res.history.traces.get(alt)
            if tr is None:
                continue
            e = tr.values["e"]
            for k, (step, t) in enumerate(zip(tr.steps, tr.t)):
                for r in range(e.shape[1]):
                    trace_rows.append([g2, alt, int(step), float(t), r, float(e[k, r])])
            final = e[-1]
            summary.append([g2, alt, float(np.median(final)),
                            float(np.mean(np.log10(np.maximum(final, 1e-300)))),
                            float(np.min(final))])
    write_csv(out / "g2_traces.csv", ["g2", "alternation", "step", "t", "spin_index", "e"],
              trace_rows, chash, [inst.seed])
    write_csv(out / "g2_summary.csv", ["g2", "alternation", "median_final_e", "mean_log10_e",
                                       "min_final_e"], summary, chash, [inst.seed])
    return EXIT_FAILED if n_failed and args.strict else EXIT_OK


def cmd_sweep_tau(cfg, args) -> int:
    seeds = seed_list(cfg, args.seed_base)
    out = Path(args.out or cfg["output"]["dir"])
    chash = config_hash(cfg)
    names = backends(cfg, args.backend)
    taus = [float(t) for t in _as_list(cfg["solver"].get("tau_list", [1.0, 0.15]))]
    insts = _instances(cfg, seeds)
    jobs, keys = [], []
    for b in names:
        for tau in taus:
            for inst in insts:
                params = hyperparams(cfg, b, inst.nu, False).replace(
                    tau=tau, loss_includes_j=Backend(b).is_mfz)
                jobs.append((inst, b, params, cfg["solver"].get("cdp", "jacobi"), False, False, ()))
                keys.append((b, tau, inst, params))
    results = _map(_run_trial, jobs, args.workers)
    rows, n_failed = [], 0
    for (b, tau, inst, params), (res, _) in zip(keys, results):
        last = res.history[-1] if len(res.history) else None
        n_failed += res.failed
        rows.append([b, tau, inst.a, inst.alpha, inst.nu, inst.seed,
                     None if last is None else last.rmse, None if last is None else last.hamming,
                     params.loss_includes_j, res.failed])
    write_csv(out / "tau_sweep.csv", ["backend", "tau", "a", "alpha", "nu", "seed", "final_rmse",
                                      "final_hamming", "loss_includes_j", "failed"],
              rows, chash, seeds, "mfz_loss_variant=-1+p-j-c^2")
    return EXIT_FAILED if n_failed and args.strict else EXIT_OK


def cmd_report(cfg, args) -> int:
    out = Path(args.out or cfg["output"]["dir"])
    src = out / "summary.csv"
    if not src.exists():
        raise ConfigError(f"no summary at {src}; run the 'run' subcommand first")
    groups: dict[tuple, list] = {}
    for row in read_csv(src):
        key = (row["backend"], row["N"], row["a"], row["alpha"], row["nu"], row["tau"])
        groups.setdefault(key, []).append(row)
    rows = []
    for key in sorted(groups):
        ok = [r for r in groups[key] if r["failed"] == "0" and r["final_rmse"]]
        rm = [float(r["final_rmse"]) for r in ok]
        hm = [float(r["final_hamming"]) for r in ok]
        rows.append([*key, len(ok), len(groups[key]) - len(ok),
                     float(np.mean(rm)) if rm else None, float(np.std(rm)) if rm else None,
                     float(np.mean(hm)) if hm else None])
    with src.open() as fh:
        first = fh.readline().strip()
    seeds = first.split("seeds=")[-1].split()[0].split(",") if "seeds=" in first else []
    write_csv(out / "report.csv", ["backend", "N", "a", "alpha", "nu", "tau", "trials", "failures",
                                   "mean_rmse", "std_rmse", "mean_hamming"],
              rows, config_hash(cfg), seeds)
    for r in rows:
        print(",".join(_fmt(v) for v in r))
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "mri": cmd_mri, "sweep-g2": cmd_sweep_g2,
            "sweep-tau": cmd_sweep_tau, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="l0cim", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", type=Path, help="JSON config file")
    ap.add_argument("--seed-base", type=int, default=0, help="first seed when seeds is a count")
    ap.add_argument("--workers", type=int, default=1, help="trial-level worker processes")
    ap.add_argument("--paper-params", action="store_true",
                    help="per-noise Positive-P tau and per-backend MRI feedback strength")
    ap.add_argument("--backend", choices=sorted(BACKEND_CODES))
    ap.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    ap.add_argument("--strict", action="store_true", help="exit 2 when any trial failed")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.seed_base < 0:
        print("error: --seed-base must be non-negative", file=sys.stderr)
        return EXIT_CONFIG
    if args.workers < 1:
        args.workers = os.cpu_count() or 1
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
