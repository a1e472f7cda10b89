"""Command-line driver: ``zextavg <subcommand> [--config PATH] [--seed N] ...``.

Subcommands write CSV (or JSON with ``--format json``) files into the output
directory.  Work is split into chunks of ``chunk`` orbits or paths; chunk
``c`` draws from ``generator(seed, task, ..., c)``, so ``--threads`` only
changes wall time, never the numbers.

Exit codes: 0 success, 2 config error, 3 geometry or horizon validation
failure, 4 acceptance failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import acceptance
from .billiard import (BilliardSystem, GeometryError, GrazingCollision, HorizonViolation,
                       validate_finite_horizon)
from .greenkubo import estimate_a, estimate_sigma, psd_sqrt_batch
from .io import (ConfigError, billiard_geometry, build_field, load_config, write_json, write_table)
from .limitproc import limit_y
from .rng import generator, task_id
from .shift import ShiftToy
from .slowfast import (averaged_for, birkhoff_pair, error_process, scaled_error, solve_averaged,
                       solve_perturbed)
from .stats import empirical_moments, ks_distance
from .zext import lift

EXIT_OK, EXIT_CONFIG, EXIT_GEOMETRY, EXIT_ACCEPTANCE = 0, 2, 3, 4


def default_config_path() -> Path:
    return Path(str(resources.files("zextavg") / "configs" / "default.json"))


class Run:
    """Resolved config, seed, output directory and worker pool for one invocation."""

    def __init__(self, cfg: dict, seed: int, out: Path, threads: int, fmt: str):
        self.cfg, self.seed, self.out, self.threads, self.fmt = cfg, seed, out, threads, fmt

    def map(self, fn, items):
        items = list(items)
        if self.threads <= 1:
            return [fn(i) for i in items]
        with ThreadPoolExecutor(self.threads) as pool:
            return list(pool.map(fn, items))

    def chunks(self, n: int):
        c = self.cfg["chunk"]
        return [(k, s, min(c, n - s)) for k, s in enumerate(range(0, n, c))]

    def table(self, name: str, header, rows) -> Path:
        return write_table(self.out / name, header, rows, self.cfg, self.seed, self.fmt)

    def json(self, name: str, payload: dict) -> Path:
        return write_json(self.out / name, payload, self.cfg, self.seed)


def _cols(prefix: str, d: int) -> list[str]:
    return [f"{prefix}{i + 1}" for i in range(d)]


def _system(run: Run, kind: str, *ids):
    """A fresh base system per task so that resampling state is never shared."""
    if kind == "toy":
        return ShiftToy()
    return BilliardSystem(billiard_geometry(run.cfg), generator(run.seed, task_id("resample"), *ids))


def _check_compatible(cfg: dict, kind: str):
    f = cfg["field"]
    wants_billiard = f.get("name") == "billiard" or f.get("h") == "cos_theta"
    if wants_billiard != (kind == "billiard"):
        raise ConfigError(f"field {f} cannot be driven by the {kind} system")


def _validate_geometry(run: Run) -> int:
    try:
        geom = billiard_geometry(run.cfg)
    except GeometryError as exc:
        run.json("geometry_report", {"ok": False, "error": str(exc)})
        print(f"geometry error: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    rep = validate_finite_horizon(geom, 2_000, 5, generator(run.seed, task_id("horizon")))
    if not rep.ok:
        run.json("geometry_report", {"ok": False, "horizon": json.loads(rep.to_json())})
        print("horizon validation failed; see geometry_report.json", file=sys.stderr)
        return EXIT_GEOMETRY
    return EXIT_OK


# ------------------------------------------------------------------ ensembles

def _ensemble_chunk(run: Run, kind: str, field, ei: int, eps: float, chunk):
    cfg = run.cfg
    c, start, m = chunk
    tid = task_id(f"{kind}-run")
    system = _system(run, kind, ei, c)
    omega = lift(system, system.sample_invariant(m, generator(run.seed, tid, ei, c)))
    x0, T, sub, rec = cfg["x0"], cfg["T"], cfg["substeps"], cfg["record_every"]
    x = solve_perturbed(x0, field, omega, system, eps, T, sub, rec)
    w = averaged_for(x0, field, eps, T, sub, rec)
    e = error_process(x, w)
    sums = birkhoff_pair(x0, field, omega, system, eps, T, record_every=rec)
    d = field.d
    rows = []
    for i in range(m):
        for k, t in enumerate(x.times):
            rows.append([start + i, t, *x.states[k, i], *w.states[k], *e.states[k, i],
                         *sums.v.states[k, i], *sums.vtilde.states[k, i]])
    final = e.states[-1] * eps ** -0.75
    resampled = getattr(system, "resampled", 0)
    return rows, final.reshape(m, d), sums.gap_sup, resampled


def cmd_ensemble(run: Run, kind: str) -> int:
    _check_compatible(run.cfg, kind)
    if kind == "billiard":
        status = _validate_geometry(run)
        if status:
            return status
    field = build_field(run.cfg)
    d = field.d
    header = ["path_id", "t", *_cols("x", d), *_cols("w", d), *_cols("e", d),
              *_cols("v", d), *_cols("vtilde", d)]
    summary = []
    n = run.cfg["n_orbits"]
    for ei, eps in enumerate(run.cfg["eps"]):
        parts = run.map(lambda ch: _ensemble_chunk(run, kind, field, ei, eps, ch), run.chunks(n))
        rows = [r for p in parts for r in p[0]]
        finals = np.concatenate([p[1] for p in parts])
        gaps = np.concatenate([p[2] for p in parts])
        path = run.table(f"trajectories_eps{ei}", header, rows)
        mom = empirical_moments(finals[:, 0], up_to=4).as_dict() if n > 1 else {}
        summary.append({"eps": eps, "file": path.name, "n_orbits": n,
                        "scaled_error_moments": mom, "max_gap": float(gaps.max()),
                        "resampled": int(sum(p[3] for p in parts))})
    run.json("summary", {"subcommand": f"{kind}-run", "field": field.name, "runs": summary})
    return EXIT_OK


# ------------------------------------------------------------------ green-kubo

def _base_kind(cfg: dict) -> str:
    return cfg["system"]["type"]


def _sigma(run: Run, kind: str) -> tuple[float, float]:
    if "sigma" in run.cfg:
        return float(run.cfg["sigma"]), 0.0
    gk = run.cfg["greenkubo"]
    if kind == "toy":
        return ShiftToy().exact_sigma(gk["k_max"]), 0.0
    val, se = estimate_sigma(_system(run, kind, 0), gk["k_max"], gk["n_samples"],
                             generator(run.seed, task_id("sigma")), return_stderr=True)
    return val, se


def cmd_greenkubo(run: Run) -> int:
    kind = _base_kind(run.cfg)
    _check_compatible(run.cfg, kind)
    if kind == "billiard" and (status := _validate_geometry(run)):
        return status
    field = build_field(run.cfg)
    gk = run.cfg["greenkubo"]
    xs = [np.asarray(x, dtype=float) for x in gk["x_grid"]]
    if any(x.size != field.d for x in xs):
        raise ConfigError(f"greenkubo.x_grid rows must have {field.d} entries")
    method = gk.get("method", "symmetrized")

    def one(i):
        return estimate_a(field, xs[i], _system(run, kind, i), gk["l_max"], gk["n_samples"],
                          generator(run.seed, task_id("greenkubo"), i), method=method)

    ests = run.map(one, range(len(xs)))
    d = field.d
    pairs = [(i, j) for i in range(d) for j in range(d)]
    header = [*_cols("x", d), *[f"a{i + 1}{j + 1}" for i, j in pairs],
              *[f"se{i + 1}{j + 1}" for i, j in pairs]]
    rows = [[*x, *[e.entries[i, j] for i, j in pairs], *[e.stderr[i, j] for i, j in pairs]]
            for x, e in zip(xs, ests)]
    path = run.table("a_table", header, rows)
    sigma, se = _sigma(run, kind)
    run.json("sigma", {"sigma": sigma, "stderr": se, "k_max": gk["k_max"], "a_table": path.name,
                       "method": method})
    return EXIT_OK


# ------------------------------------------------------------------ limit process

def _a_along(field, w, run: Run, kind: str) -> np.ndarray:
    """``a(w_k)`` on the averaged grid: exact when known, else interpolated from estimates."""
    if field.a_exact is not None:
        return np.stack([np.atleast_2d(field.a_exact(x[None, :])[0]) for x in w.states])
    if field.d != 1:
        raise ConfigError("estimated a(x) along the path is supported for d = 1 only")
    gk = run.cfg["greenkubo"]
    lo, hi = float(w.states.min()), float(w.states.max())
    nodes = np.linspace(lo, hi, 9) if hi > lo else np.array([lo])
    vals = run.map(lambda i: estimate_a(field, nodes[i:i + 1], _system(run, kind, i), gk["l_max"],
                                        gk["n_samples"], generator(run.seed, task_id("a-node"), i)
                                        ).entries[0, 0], range(len(nodes)))
    a = np.interp(w.states[:, 0], nodes, np.asarray(vals)) if len(nodes) > 1 else np.full(len(w.states), vals[0])
    return a[:, None, None]


def _limit_setup(run: Run, kind: str, field):
    cfg = run.cfg
    dt = cfg["dt"]
    w = solve_averaged(cfg["x0"], field.Fbar, cfg["T"], dt, cfg["substeps"])
    a = _a_along(field, w, run, kind)
    sa = psd_sqrt_batch(a)
    df = np.stack([np.atleast_2d(field.DFbar(x[None, :])[0]) for x in w.states])
    sigma, _ = _sigma(run, kind)
    return w, sa, df, sigma


def _limit_samples(run: Run, sa, df, sigma: float, tag: str):
    cfg = run.cfg

    def one(ch):
        c, start, m = ch
        return start, limit_y(sa, df, sigma, cfg["T"], cfg["dt"],
                              generator(run.seed, task_id(tag), c), m)

    return run.map(one, run.chunks(cfg["n_paths"]))


def cmd_limit_sim(run: Run) -> int:
    kind = _base_kind(run.cfg)
    _check_compatible(run.cfg, kind)
    field = build_field(run.cfg)
    if field.DFbar is None:
        raise ConfigError("the limit process needs the Jacobian of Fbar")
    w, sa, df, sigma = _limit_setup(run, kind, field)
    parts = _limit_samples(run, sa, df, sigma, "limit-sim")
    d = field.d
    rec = run.cfg["record_every"]
    header = ["path_id", "t", *_cols("y", d), *_cols("y_closed", d), *_cols("BL", d), "L"]
    rows = []
    for start, lp in parts:
        idx = np.arange(0, len(lp.times), rec)
        if idx[-1] != len(lp.times) - 1:
            idx = np.append(idx, len(lp.times) - 1)
        for i in range(lp.y.shape[0]):
            for k in idx:
                rows.append([start + i, lp.times[k], *lp.y[i, k], *lp.y_closed[i, k],
                             *lp.martingale[i, k], lp.local_time[i, k]])
    path = run.table("limit_paths", header, rows)
    yT = np.concatenate([lp.y[:, -1, 0] for _, lp in parts])
    gap = max(float(np.abs(lp.y - lp.y_closed).max()) for _, lp in parts)
    run.json("limit_summary", {"file": path.name, "sigma": sigma, "n_paths": len(yT),
                               "y_T_moments": empirical_moments(yT, 4).as_dict() if len(yT) > 1 else {},
                               "max_construction_gap": gap})
    return EXIT_OK


# ------------------------------------------------------------------ convergence

def cmd_convergence(run: Run) -> int:
    kind = _base_kind(run.cfg)
    _check_compatible(run.cfg, kind)
    if kind == "billiard" and (status := _validate_geometry(run)):
        return status
    if min(run.cfg["n_orbits"], run.cfg["n_paths"]) < 30:
        raise ConfigError("convergence needs n_orbits and n_paths of at least 30 for the KS distance")
    field = build_field(run.cfg)
    cfg = run.cfg
    _, sa, df, sigma = _limit_setup(run, kind, field)
    yT = np.concatenate([lp.y[:, -1, 0] for _, lp in _limit_samples(run, sa, df, sigma, "convergence-limit")])
    lim = empirical_moments(yT, 4)
    rows, moments = [], []
    for ei, eps in enumerate(cfg["eps"]):
        def one(ch, ei=ei, eps=eps):
            c, _, m = ch
            system = _system(run, kind, ei, c)
            omega = lift(system, system.sample_invariant(m, generator(run.seed, task_id("convergence"), ei, c)))
            return scaled_error(cfg["x0"], field, omega, system, eps, cfg["T"], cfg["substeps"])[:, 0]
        s = np.concatenate(run.map(one, run.chunks(cfg["n_orbits"])))
        ks = ks_distance(s, yT)
        mom = empirical_moments(s, 4)
        rows.append([eps, len(s), ks, mom.values[0], mom.values[1], lim.values[0], lim.values[1]])
        moments.append({"eps": eps, "ks": ks, "scaled_error": mom.as_dict()})
    path = run.table("convergence", ["eps", "n", "ks", "mean", "var", "limit_mean", "limit_var"], rows)
    run.json("moments", {"file": path.name, "sigma": sigma, "limit_y_T": lim.as_dict(), "sweep": moments})
    return EXIT_OK


# ------------------------------------------------------------------ verify

def cmd_verify(run: Run) -> int:
    only = run.cfg.get("criteria")
    results = acceptance.run_all(run.seed, only=only, sizes=run.cfg.get("sizes"), echo=print)
    rep = acceptance.report(results, run.seed, timings=False)
    path = run.json("verify_report", rep)
    print(f"report: {path}")
    return EXIT_OK if rep["all_passed"] else EXIT_ACCEPTANCE


COMMANDS = {
    "toy-run": lambda run: cmd_ensemble(run, "toy"),
    "billiard-run": lambda run: cmd_ensemble(run, "billiard"),
    "greenkubo": cmd_greenkubo,
    "limit-sim": cmd_limit_sim,
    "convergence": cmd_convergence,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zextavg", description="Averaging experiments for Z-extension driven ODEs.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, default=None, help="JSON config (default: the shipped one)")
        s.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
        s.add_argument("--out", type=Path, default=None, help="output directory")
        s.add_argument("--threads", type=int, default=1, help="worker threads")
        s.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config or default_config_path())
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        seed = args.seed if args.seed is not None else cfg.get("seed", acceptance.MASTER_SEED)
        if seed < 0:
            raise ConfigError("--seed must be non-negative")
        out = args.out or Path(cfg.get("output_dir", "out"))
        run = Run(cfg, int(seed), out, args.threads, args.format)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GeometryError, HorizonViolation, GrazingCollision) as exc:
        print(f"geometry error: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY


if __name__ == "__main__":
    sys.exit(main())
