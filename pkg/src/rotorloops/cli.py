"""Experiment orchestration: config parsing, subcommands, deterministic output.

Configs are YAML key trees (schema in the README); every artifact starts
with a provenance header carrying the config hash, seed, and package
version, and no timestamps, so identical config + seed reproduces
byte-identical files.  Chains execute sequentially in chain order; the
--threads flag is validated and recorded but does not change scheduling.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .dumpio import DumpError, load_dump, save_dump
from .energy import InteractionProfile, PotentialSpec
from .gauge import decay_sweep
from .gibbs import ModelSpec, dlr_check, mcmc_run
from .graph import build_lattice, verify_bidimensional, write_edge_csv
from .rdm import estimate_rdmk, free_kernel_values, kernel_matrix, trace_norm_distance
from .stats import stream
from .symbreak import BoundarySpec, arc_probability, build_boundary


class ConfigError(ValueError):
    pass


_DEFAULTS = {
    "model": {
        "graph": {"kind": "square_box", "n": 2, "metric": "graph"},
        "d": 1,
        "beta": 1.0,
        "slices": 16,
        "potential": {"kind": "cosine", "theta_hc": 0.2},
        "interaction": {"kind": "nearest_neighbor", "strength": 1.0},
        "boundary": {"kind": "free", "x_star": 0.0, "eta": 0.0, "theta_hc": 0.2},
    },
    "run": {"sweeps": 2000, "burn_in": None, "chains": 1, "seed": 1, "thin": 1},
    "task": {"name": "simulate"},
    "output": {"dir": "out", "dump": False},
}

_TASKS = ("validate-graph", "simulate", "rdm", "dlr-check", "gauge-sweep",
          "break-sym", "lemma11")


def _merge(defaults, override, path="") -> dict:
    out = dict(defaults)
    for key, val in (override or {}).items():
        if key not in defaults and path in ("model", "run", "output"):
            raise ConfigError(f"unknown key {path}.{key}")
        if isinstance(val, dict) and isinstance(defaults.get(key), dict):
            out[key] = _merge(defaults[key], val, f"{path}.{key}" if path else key)
        else:
            out[key] = val
    return out


def load_config(path) -> dict:
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    cfg = _merge(_DEFAULTS, raw)
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    m = cfg["model"]
    if m["graph"]["kind"] not in ("square_box", "ring", "square", "triangular"):
        raise ConfigError(f"unknown graph kind {m['graph']['kind']!r}")
    if m["graph"]["metric"] not in ("graph", "sup"):
        raise ConfigError(f"unknown metric {m['graph']['metric']!r}")
    if m["beta"] <= 0:
        raise ConfigError("model.beta must be positive")
    if int(m["slices"]) < 1:
        raise ConfigError("model.slices must be >= 1")
    if m["potential"]["kind"] not in ("zero", "cosine", "singular_cosine"):
        raise ConfigError(f"unknown potential {m['potential']['kind']!r}")
    if m["boundary"]["kind"] not in ("free", "cooled", "tilted"):
        raise ConfigError(f"unknown boundary {m['boundary']['kind']!r}")
    r = cfg["run"]
    if int(r["sweeps"]) < 10:
        raise ConfigError("run.sweeps must be >= 10")
    if r["burn_in"] is not None and int(r["burn_in"]) >= int(r["sweeps"]):
        raise ConfigError("run.burn_in must be below run.sweeps")
    if int(r["chains"]) < 1:
        raise ConfigError("run.chains must be >= 1")
    name = cfg["task"].get("name")
    if name not in _TASKS:
        raise ConfigError(f"unknown task {name!r}; choose from {_TASKS}")


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()[:16]


# -- model construction ------------------------------------------------------

def build_model(cfg: dict) -> ModelSpec:
    m = cfg["model"]
    g = build_lattice(m["graph"]["kind"], m["graph"].get("n"),
                      metric=m["graph"]["metric"])
    pot = _potential(m["potential"])
    inter = InteractionProfile.nearest_neighbor(float(m["interaction"]["strength"]))
    beta, L = float(m["beta"]), int(m["slices"])
    bc_cfg = m["boundary"]
    bc = None
    if bc_cfg["kind"] in ("cooled", "tilted"):
        if not g.boundary:
            raise ConfigError("cooled/tilted boundary needs a graph with an annulus")
        spec = BoundarySpec(kind=bc_cfg["kind"], x_star=float(bc_cfg["x_star"]),
                            eta=float(bc_cfg.get("eta", 0.0)),
                            theta_hc=float(bc_cfg.get("theta_hc", 0.2)))
        bc = build_boundary(spec, g, beta, L)
    return ModelSpec(graph=g, beta=beta, L=L, potential=pot, interaction=inter,
                     boundary=bc, d=int(m["d"]))


def _potential(pcfg: dict) -> PotentialSpec:
    kind = pcfg["kind"]
    if kind == "zero":
        return PotentialSpec.zero()
    if kind == "cosine":
        return PotentialSpec.cosine()
    return PotentialSpec.singular_cosine(float(pcfg["theta_hc"]))


# -- artifact writers --------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _vertex_label(v) -> str:
    """Comma-free vertex id for CSV cells, e.g. (1, -2) -> '1;-2'."""
    return ";".join(str(c) for c in v)


def provenance_lines(cfg: dict, task: str) -> list[str]:
    return [
        f"# artifact: rotorloops v{__version__}",
        f"# task: {task}",
        f"# config_hash: {config_hash(cfg)}",
        f"# seed: {cfg['run']['seed']}",
    ]


def write_csv(path, cfg, task, columns, rows) -> None:
    with open(path, "w") as fh:
        for line in provenance_lines(cfg, task):
            fh.write(line + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_json(path, cfg, task, payload: dict) -> None:
    doc = {"artifact": f"rotorloops v{__version__}", "task": task,
           "config_hash": config_hash(cfg), "seed": cfg["run"]["seed"]}
    doc.update(payload)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


# -- task handlers -----------------------------------------------------------

def _task_validate_graph(cfg, out_dir: Path) -> int:
    t = cfg["task"]
    g = build_lattice(cfg["model"]["graph"]["kind"], cfg["model"]["graph"].get("n"),
                      metric=cfg["model"]["graph"]["metric"])
    rep = verify_bidimensional(g, int(t.get("n_max", 16)),
                               degree_bound=int(t.get("degree_bound", 12)),
                               ratio_ceiling=float(t.get("ratio_ceiling", 12.0)))
    write_json(out_dir / "bidim_report.json", cfg, "validate-graph", {
        "max_degree": rep.max_degree,
        "sphere_ratio_sup": rep.sphere_ratio_sup,
        "n_tested": rep.n_tested,
        "pass": rep.passed,
    })
    if g.is_finite:
        write_edge_csv(g, out_dir / "edges.csv")
    print(f"validate-graph: pass={rep.passed} "
          f"(max_degree={rep.max_degree}, ratio_sup={rep.sphere_ratio_sup:.3f})")
    return 0 if rep.passed else 1


def _singular_init(model):
    from .symbreak import _default_singular_start

    return None if model.potential.smooth else _default_singular_start(model)


def _task_simulate(cfg, out_dir: Path) -> int:
    model = build_model(cfg)
    r = cfg["run"]
    rows = []
    dump_requested = bool(cfg["output"]["dump"])
    for chain_id in range(int(r["chains"])):
        run = mcmc_run(model, int(r["sweeps"]), stream(int(r["seed"]), chain_id),
                       burn_in=None if r["burn_in"] is None else int(r["burn_in"]),
                       thin=int(r["thin"]), record_paths=dump_requested,
                       init=_singular_init(model))
        for k, sweep in enumerate(run.sweep_index):
            for i, v in enumerate(run.sites):
                coords = run.base_points[k, i]
                rows.append((chain_id, int(sweep), _vertex_label(v),
                             *[float(c) for c in coords],
                             float(run.energies[k])))
        if dump_requested:
            save_dump(out_dir / f"configs_chain{chain_id}.rldump",
                      {"config_hash": config_hash(cfg), "chain": chain_id,
                       "beta": model.beta, "L": model.L, "d": model.d,
                       "sites": [list(s) for s in run.sites],
                       "package": __version__},
                      {"paths": run.paths, "sweeps": run.sweep_index,
                       "energies": run.energies,
                       "base_points": run.base_points})
    d = model.d
    cols = ["chain", "sweep", "vertex"] + [f"x{i}" for i in range(d)] + ["energy"]
    write_csv(out_dir / "samples.csv", cfg, "simulate", cols, rows)
    print(f"simulate: wrote {len(rows)} rows")
    return 0


def _task_rdm(cfg, out_dir: Path) -> int:
    model = build_model(cfg)
    t = cfg["task"]
    window = tuple(tuple(v) for v in t.get("window", [list(model.sites[0])]))
    m = int(t.get("grid_m", 8))
    mode = t.get("mode", "direct")
    from .torus import grid_points

    gpts = grid_points(m)
    pairs = np.empty((m * m, 2, 1, model.d))
    k = 0
    for a in range(m):
        for b in range(m):
            pairs[k, 0, 0, :] = gpts[a]
            pairs[k, 1, 0, :] = gpts[b]
            k += 1
    est = estimate_rdmk(model, window, pairs, int(t.get("samples", 20000)),
                        stream(int(cfg["run"]["seed"]), 0), mode=mode)
    rows = [(float(pairs[i, 0, 0, 0]), float(pairs[i, 1, 0, 0]),
             float(est.mean[i]), float(est.stderr[i]))
            for i in range(pairs.shape[0])]
    write_csv(out_dir / "rdm.csv", cfg, "rdm", ["x", "y", "mean", "stderr"], rows)
    print(f"rdm: wrote {len(rows)} kernel values (mode={mode})")
    return 0


def _task_dlr_check(cfg, out_dir: Path) -> int:
    model = build_model(cfg)
    t = cfg["task"]
    sites = model.sites
    inner = [tuple(v) for v in t.get("inner", [list(sites[0])])]
    mid = [tuple(v) for v in t.get("mid", [list(s) for s in sites[:3]])]
    rep = dlr_check(model, inner, mid, int(cfg["run"]["seed"]),
                    sweeps=int(t.get("sweeps", cfg["run"]["sweeps"])),
                    cond_sweeps=int(t.get("cond_sweeps", 40)))
    write_json(out_dir / "dlr_report.json", cfg, "dlr-check", {
        "tv": rep.tv.tv, "null_mean": rep.tv.null_mean, "null_sd": rep.tv.null_sd,
        "z": rep.tv.z, "pass": rep.passed,
        "inner": [list(v) for v in rep.inner], "mid": [list(v) for v in rep.mid],
    })
    print(f"dlr-check: tv={rep.tv.tv:.4f} z={rep.tv.z:.2f} pass={rep.passed}")
    return 0 if rep.passed else 1


def _task_gauge_sweep(cfg, out_dir: Path) -> int:
    t = cfg["task"]
    n_values = [int(n) for n in t.get("n_values", [8, 16, 32, 64])]
    r_bar = int(t.get("r_bar", 2))
    theta = float(t.get("theta_norm", 1.0))
    inter = InteractionProfile.nearest_neighbor(
        float(cfg["model"]["interaction"]["strength"]))
    rows = decay_sweep(inter, r_bar, theta, n_values,
                       metric=cfg["model"]["graph"]["metric"])
    write_csv(out_dir / "gauge_sweep.csv", cfg, "gauge-sweep",
              ["n", "Q", "psi", "psi_times_Q"], rows)
    print("gauge-sweep: " + "; ".join(
        f"n={r[0]} psi*Q={r[3]:.4f}" for r in rows))
    return 0


def _task_break_sym(cfg, out_dir: Path) -> int:
    model = build_model(cfg)
    t = cfg["task"]
    bc_cfg = cfg["model"]["boundary"]
    n = int(cfg["model"]["graph"]["n"])
    center = float(t.get("arc_center", bc_cfg["x_star"]))
    half = float(t.get("arc_half_width", 0.005))
    sweeps = int(t.get("sweeps", cfg["run"]["sweeps"]))
    obs = arc_probability(model, center, half, sweeps,
                          stream(int(cfg["run"]["seed"]), 0),
                          init=_singular_init(model))
    rows = [(n, float(bc_cfg.get("eta", 0.0)), center, half,
             obs.probability, obs.stderr)]
    write_csv(out_dir / "breaksym.csv", cfg, "break-sym",
              ["n", "eta", "arc_center", "half_width", "p", "stderr"], rows)
    print(f"break-sym: P(arc)={obs.probability:.4f} +- {obs.stderr:.4f}")
    return 0


def _task_lemma11(cfg, out_dir: Path) -> int:
    t = cfg["task"]
    m = int(t.get("grid_m", 64))
    beta = float(cfg["model"]["beta"])
    trunc_values = [int(v) for v in t.get("trunc_values", [1, 2, 3, 4, 5, 6, 7, 8])]
    ref_trunc = max(trunc_values) + 6
    ref = kernel_matrix(free_kernel_values(m, beta, trunc=ref_trunc))
    rows = []
    for n in trunc_values:
        approx = kernel_matrix(free_kernel_values(m, beta, trunc=n))
        rows.append((n, trace_norm_distance(approx, ref)))
    write_csv(out_dir / "lemma11.csv", cfg, "lemma11",
              ["trunc", "trace_norm_distance"], rows)
    final = rows[-1][1]
    print(f"lemma11: final trace-norm distance {final:.3e}")
    return 0 if final < 1e-10 else 1


_HANDLERS = {
    "validate-graph": _task_validate_graph,
    "simulate": _task_simulate,
    "rdm": _task_rdm,
    "dlr-check": _task_dlr_check,
    "gauge-sweep": _task_gauge_sweep,
    "break-sym": _task_break_sym,
    "lemma11": _task_lemma11,
}


def run(config_path, *, seed=None, out_dir=None, chains=None, threads=None) -> int:
    """Execute the configured task; returns a process exit status."""
    cfg = load_config(config_path)
    if seed is not None:
        cfg["run"]["seed"] = int(seed)
    if chains is not None:
        cfg["run"]["chains"] = int(chains)
    if threads is not None and int(threads) < 1:
        raise ConfigError("--threads must be >= 1")
    out = Path(out_dir if out_dir is not None else cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    task = cfg["task"]["name"]
    return _HANDLERS[task](cfg, out)


# -- replay -------------------------------------------------------------------

def replay(dump_path, observable: dict, out_path=None):
    """Recompute an observable from a configuration dump.

    observable kinds: {'kind': 'energy_trace'} or
    {'kind': 'arc_probability', 'center': c, 'half_width': w, 'site': [i, j]}.
    Estimates are bit-identical to the original run for the same samples.
    """
    meta, arrays = load_dump(dump_path)
    kind = observable.get("kind")
    if kind == "energy_trace":
        rows = [(int(s), float(e))
                for s, e in zip(arrays["sweeps"], arrays["energies"])]
        cols = ["sweep", "energy"]
    elif kind == "arc_probability":
        from .stats import mean_with_autocorr_error
        from .symbreak import arc_membership

        sites = [tuple(s) for s in meta["sites"]]
        site = tuple(observable["site"]) if "site" in observable else sites[0]
        i = sites.index(site)
        hits = arc_membership(arrays["base_points"][:, i, 0],
                              float(observable["center"]),
                              float(observable["half_width"])).astype(float)
        p, err = mean_with_autocorr_error(hits)
        rows = [(_vertex_label(site), float(observable["center"]),
                 float(observable["half_width"]), p, err)]
        cols = ["site", "center", "half_width", "p", "stderr"]
    else:
        raise ValueError(f"unknown observable kind {kind!r}")
    if out_path is not None:
        with open(out_path, "w") as fh:
            fh.write(f"# artifact: rotorloops v{__version__}\n")
            fh.write(f"# task: replay:{kind}\n")
            fh.write(f"# config_hash: {meta.get('config_hash', '')}\n")
            fh.write(f"# seed: replay\n")
            fh.write(",".join(cols) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
    return cols, rows


# -- entry point ---------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rotorloops",
        description="Loop-ensemble experiments for lattice quantum rotators")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute the task named in the config")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--out-dir", default=None)
    run_p.add_argument("--chains", type=int, default=None)
    run_p.add_argument("--threads", type=int, default=None)

    for name in _TASKS:
        p = sub.add_parser(name, help=f"run the {name} task")
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", default=None)
        p.add_argument("--chains", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)

    rep = sub.add_parser("replay", help="recompute observables from a dump")
    rep.add_argument("--dump", required=True)
    rep.add_argument("--observable", required=True,
                     help="JSON observable spec, e.g. '{\"kind\": \"energy_trace\"}'")
    rep.add_argument("--out", default=None)

    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            cols, rows = replay(args.dump, json.loads(args.observable), args.out)
            if args.out is None:
                print(",".join(cols))
                for row in rows:
                    print(",".join(_fmt(v) for v in row))
            return 0
        cfg_path = args.config
        if args.command != "run":
            cfg = load_config(cfg_path)
            if cfg["task"]["name"] != args.command:
                raise ConfigError(
                    f"config task {cfg['task']['name']!r} does not match "
                    f"subcommand {args.command!r}")
        return run(cfg_path, seed=args.seed, out_dir=args.out_dir,
                   chains=args.chains, threads=args.threads)
    except (ConfigError, DumpError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
