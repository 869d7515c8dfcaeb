"""Command-line experiment runner.

Subcommands: ``validate``, ``exact``, ``simulate``, ``sidebranch``, ``sweep``.
Options may also come from a JSON file given with ``--config``; explicit
flags take precedence. Exit status is 0 on success and 1 on any error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .ctmc import load_model, qprocess_generator, qsd
from .errors import FvSpineError
from .experiments import (
    aggregate_spine,
    harvest_side_trees,
    parse_init,
    replicate_run,
    sidebranch_comparison,
    summarize_spine,
    sweep,
)
from .fv import write_bundle
from .genealogy import extract_spine
from .pairchain import fixed_n_gap_report

SCHEMA_VERSION = 1

DEFAULTS = {
    "particles": [2],
    "horizon": [100.0],
    "replicates": 1,
    "seed": 0,
    "init": "qsd",
    "out": ".",
    "burn_in": None,
    "trajectories": True,
    "v_trees": None,
    "node_cap": 10_000,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _floats(text):
    return [float(v) for v in str(text).split(",")]


def _ints(text):
    return [int(v) for v in str(text).split(",")]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fvspine", description="Fleming-Viot spine experiments on finite absorbed chains.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("validate", help="check a model file")
    v.add_argument("--model", required=True)

    e = sub.add_parser("exact", help="exact two-particle, QSD and Q-process report")
    e.add_argument("--model", required=True)
    e.add_argument("--out", default=None)

    for name, helptext in (
        ("simulate", "replicate Fleming-Viot runs with spine summaries"),
        ("sidebranch", "compare side-branch trees with the limiting branching process"),
        ("sweep", "spine occupancy over several particle numbers"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--model")
        s.add_argument("--config", help="JSON file with default option values")
        s.add_argument("--particles", type=_ints, help="particle number (comma list for sweep)")
        s.add_argument("--horizon", type=_floats, help="time horizon (comma list for sweep, one per N)")
        s.add_argument("--replicates", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--init", help="delta:x | qsd | comma-separated probabilities")
        s.add_argument("--out")
        s.add_argument("--burn-in", dest="burn_in", type=float)
        if name == "simulate":
            s.add_argument("--no-trajectories", dest="trajectories", action="store_false", default=None)
        if name == "sidebranch":
            s.add_argument("--v-trees", dest="v_trees", type=int, help="number of V-trees (default: match)")
            s.add_argument("--node-cap", dest="node_cap", type=int)
    return p


def _resolve(args) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise FvSpineError(f"cannot read config {args.config}: {exc}") from None
        for k, val in loaded.items():
            key = k.replace("-", "_")
            if key in ("particles", "horizon") and not isinstance(val, list):
                val = [val]
            cfg[key] = val
    for k, val in vars(args).items():
        if val is not None and k not in ("command", "config"):
            cfg[k] = val
    if not cfg.get("model"):
        raise FvSpineError("no model given (use --model or the config file)")
    if int(cfg["replicates"]) < 1:
        raise FvSpineError("replicates must be at least 1")
    seed = int(cfg["seed"])
    if not 0 <= seed < 2**64:
        raise FvSpineError("seed must be an unsigned 64-bit integer")
    if any(int(N) < 2 for N in cfg["particles"]):
        raise FvSpineError("particle numbers must be at least 2")
    if any(float(h) <= 0 for h in cfg["horizon"]):
        raise FvSpineError("horizons must be positive")
    return cfg


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _manifest(out: Path, command: str, cfg: dict, outputs, complete: bool, started: float) -> None:
    files = {str(p.relative_to(out)): _sha256(p) for p in sorted(outputs)}
    _write_json(
        out / "manifest.json",
        {
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "version": __version__,
            "config": cfg,
            "complete": complete,
            "outputs": files,
            "volatile": {"started": started, "finished": time.time()},
        },
    )


# ----------------------------------------------------------------------------


def cmd_validate(args) -> int:
    model = load_model(args.model)
    print(f"n={model.n}, communicating, cemetery reachable")
    print(f"fingerprint {model.fingerprint()}")
    return 0


def cmd_exact(args) -> int:
    model = load_model(args.model)
    report = fixed_n_gap_report(model)
    report["schema_version"] = SCHEMA_VERSION
    report["model_hash"] = model.fingerprint()
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "exact_report.json").write_text(text)
    sys.stdout.write(text)
    return 0


def _write_spine(run, d: Path) -> list[Path]:
    spine = extract_spine(run)
    p1, p2 = d / "spine.csv", d / "branch_times.csv"
    with open(p1, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["entry_time", "state", "particle"])
        if spine.path is not None:
            for t, x in zip(spine.path.times, spine.path.states):
                w.writerow([repr(float(t)), int(x), spine.chi(float(t))])
    with open(p2, "w", newline="") as fh:
        fh.write("k,time\n")
        for k, t in enumerate(spine.branch_times, start=1):
            fh.write(f"{k},{float(t)!r}\n")
    return [p1, p2]


def cmd_simulate(cfg: dict) -> int:
    started = time.time()
    model = load_model(cfg["model"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    N, H = int(cfg["particles"][0]), float(cfg["horizon"][0])
    dist = parse_init(cfg["init"], model)
    outputs, summaries = [], []
    complete = False
    try:
        for r in range(int(cfg["replicates"])):
            run = replicate_run(model, N, H, dist, int(cfg["seed"]), r)
            d = out / f"replicate_{r:04d}"
            write_bundle(run, d, trajectories=bool(cfg["trajectories"]))
            outputs += [p for p in d.iterdir() if p.suffix in (".csv", ".json")]
            outputs += _write_spine(run, d)
            s = summarize_spine(run, r, cfg["burn_in"])
            summaries.append(s)
            del run
        agg = aggregate_spine(summaries)
        summary = {
            "schema_version": SCHEMA_VERSION,
            "model_hash": model.fingerprint(),
            "replicates": [s.as_row() for s in summaries],
            "aggregate": {
                "branch_events": agg.events,
                "exposure": agg.exposure,
                "branch_rate": agg.rate,
                "branch_rate_ci": [float(agg.rate_low), float(agg.rate_high)],
                "occupancy": list(agg.occupancy),
                "occupancy_se": list(agg.occupancy_se),
                "mrca_times": list(agg.mrca_times),
                "lambda_inf": qsd(model).lambda_inf,
                "qprocess_stationary": qprocess_generator(model).stationary.tolist(),
            },
        }
        _write_json(out / "summary.json", summary)
        outputs.append(out / "summary.json")
        complete = True
    finally:
        _manifest(out, "simulate", cfg, set(outputs), complete, started)
    print(f"{len(summaries)} replicate(s) written to {out}")
    return 0


def cmd_sidebranch(cfg: dict) -> int:
    started = time.time()
    model = load_model(cfg["model"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    N, H = int(cfg["particles"][0]), float(cfg["horizon"][0])
    dist = parse_init(cfg["init"], model)
    sizes, trunc, lives = [], [], []
    for r in range(int(cfg["replicates"])):
        run = replicate_run(model, N, H, dist, int(cfg["seed"]), r)
        s, t, life = harvest_side_trees(run, cfg["burn_in"])
        sizes.append(s)
        trunc.append(t)
        lives.append(life)
        del run
    z = np.concatenate(sizes)
    zt = np.concatenate(trunc)
    v_count = int(cfg["v_trees"]) if cfg["v_trees"] else int(z.size)
    try:
        report = sidebranch_comparison(
            z, zt, model, v_count, int(cfg["node_cap"]), int(cfg["seed"]), z_lifetimes=np.concatenate(lives)
        )
    except FvSpineError:
        _manifest(out, "sidebranch", cfg, [], False, started)
        raise
    report["schema_version"] = SCHEMA_VERSION
    report["model_hash"] = model.fingerprint()
    _write_json(out / "sidebranch_report.json", report)
    _manifest(out, "sidebranch", cfg, [out / "sidebranch_report.json"], True, started)
    print(json.dumps(report["homogeneity"]))
    return 0


def cmd_sweep(cfg: dict) -> int:
    started = time.time()
    model = load_model(cfg["model"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    Ns = [int(v) for v in cfg["particles"]]
    H = [float(v) for v in cfg["horizon"]]
    if len(H) == 1:
        H = H * len(Ns)
    if len(H) != len(Ns):
        raise FvSpineError("give one horizon or one per particle number")
    rows = sweep(model, Ns, H, int(cfg["replicates"]), int(cfg["seed"]), cfg["init"], cfg["burn_in"])
    path = out / "sweep.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["schema_version", "N", "horizon", "replicates", "exposure", "estimate", "se", "ci_low", "ci_high", "branch_rate", "tv_to_qprocess_stationary"])
        for row in rows:
            w.writerow([SCHEMA_VERSION] + [repr(row[k]) if isinstance(row[k], float) else row[k] for k in ("N", "horizon", "replicates", "exposure", "estimate", "se", "ci_low", "ci_high", "branch_rate", "tv_to_qprocess_stationary")])
    _manifest(out, "sweep", cfg, [path], True, started)
    sys.stdout.write(path.read_text())
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "exact":
            return cmd_exact(args)
        cfg = _resolve(args)
        return {"simulate": cmd_simulate, "sidebranch": cmd_sidebranch, "sweep": cmd_sweep}[args.command](cfg)
    except (FvSpineError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
