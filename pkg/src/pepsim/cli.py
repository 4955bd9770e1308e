"""Command line entry point.

Every subcommand reads a JSON config (``"schema": 1``) and writes a JSON
result document::

    {"schema": 1, "command": ..., "config": {...}, "results": {...},
     "instrumentation": {...}, "versions": {...}, "timing": {...}}

Only the ``timing`` block differs between repeated runs with the same
config and seed.

Exit codes: 0 success, 2 usage or config error, 3 resource error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import contraction as ct
from . import drivers as D
from . import observables as O
from . import peps as P
from . import tensor as tc

SCHEMA = 1
CSV_COLUMNS = ("family", "n", "r", "m", "flops", "peak_elements", "rel_error", "seconds")

EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE = 0, 2, 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config helpers

def load_config(path) -> dict:
    text = Path(path).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    if cfg.get("schema", SCHEMA) != SCHEMA:
        raise ConfigError(f"{path}: unsupported schema {cfg.get('schema')!r}")
    return cfg


def _take(cfg: dict, allowed: dict) -> dict:
    unknown = set(cfg) - set(allowed) - {"schema"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    out = dict(allowed)
    out.update({k: v for k, v in cfg.items() if k != "schema"})
    missing = [k for k, v in out.items() if v is _REQUIRED]
    if missing:
        raise ConfigError(f"missing config keys: {missing}")
    return out


_REQUIRED = object()


def build_hamiltonian(spec, nrow: int, ncol: int) -> O.Observable:
    """``{"model": "j1j2", "j1": [..], "j2": [..], "h": [..]}``, ``{"text": ...}`` or ``{"file": ...}``."""
    if not isinstance(spec, dict):
        raise ConfigError("hamiltonian must be an object")
    if spec.get("model") == "j1j2":
        try:
            return O.build_j1j2(nrow, ncol, tuple(spec.get("j1", (1, 1, 1))),
                                tuple(spec.get("j2", (0, 0, 0))), tuple(spec.get("h", (0, 0, 0))))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad j1j2 parameters: {exc}") from None
    if "text" in spec or "file" in spec:
        text = spec["text"] if "text" in spec else Path(spec["file"]).read_text()
        try:
            obs = O.parse_observable(text)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        obs.check_grid(nrow, ncol)
        return obs
    raise ConfigError("hamiltonian needs model=j1j2, text or file")


def _grid(cfg) -> tuple[int, int]:
    g = cfg["grid"]
    if isinstance(g, int):
        g = [g, g]
    if not (isinstance(g, list) and len(g) == 2 and all(isinstance(x, int) and x > 0 for x in g)):
        raise ConfigError("grid must be a positive integer or [rows, cols]")
    return g[0], g[1]


def versions() -> dict:
    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"pepsim": own, "numpy": np.__version__, "scipy": scipy.__version__, "schema": SCHEMA}


# ---------------------------------------------------------------------------
# subcommands

def cmd_ite(cfg: dict, seed: int):
    c = _take(cfg, {"grid": _REQUIRED, "hamiltonian": _REQUIRED, "tau": 0.05, "steps": 150,
                    "r": 2, "m": 4, "family": "two-layer-ibmps", "record_every": 1,
                    "strategy": "qr-svd-gram", "update": "weighted"})
    nrow, ncol = _grid(c)
    icfg = D.IteConfig(nrow, ncol, build_hamiltonian(c["hamiltonian"], nrow, ncol), float(c["tau"]),
                       int(c["steps"]), int(c["r"]), int(c["m"]), c["family"], seed,
                       int(c["record_every"]), c["strategy"], c["update"])
    with tc.counting() as counter:
        res = D.run_ite(icfg)
    results = {"steps": res.steps, "energies": res.energies, "final_energy": res.final_energy,
               "max_bond": res.state.max_bond()}
    return c, results, counter


def cmd_vqe(cfg: dict, seed: int):
    c = _take(cfg, {"grid": _REQUIRED, "hamiltonian": _REQUIRED, "layers": 1, "theta": None,
                    "optimizer": "COBYLA", "max_evals": 200, "tol": 1e-4, "r": 2, "m": 4,
                    "family": "two-layer-ibmps"})
    nrow, ncol = _grid(c)
    vcfg = D.VqeConfig(nrow, ncol, build_hamiltonian(c["hamiltonian"], nrow, ncol), int(c["layers"]),
                       c["theta"], c["optimizer"], int(c["max_evals"]), float(c["tol"]),
                       int(c["r"]), int(c["m"]), c["family"], seed)
    with tc.counting() as counter:
        res = D.run_vqe(vcfg)
    results = {"best_energy": res.best_energy, "best_theta": res.best_theta, "energies": res.energies,
               "best_so_far": res.best_so_far, "message": res.message}
    return c, results, counter


def cmd_rqc(cfg: dict, seed: int):
    c = _take(cfg, {"grid": _REQUIRED, "depth": 8, "m": [4, 8, 16, 32, 64, 128, 256],
                    "families": ["bmps", "ibmps"], "bits": None})
    nrow, ncol = _grid(c)
    rcfg = D.RqcConfig(nrow, ncol, int(c["depth"]), seed)
    with tc.counting() as counter:
        sweep = D.rqc_error_sweep(rcfg, [int(m) for m in c["m"]], c["bits"], tuple(c["families"]))
    return c, sweep, counter


def _random_grid(n: int, r: int, seed: int):
    out = []
    for i in range(n):
        row = []
        for j in range(n):
            shape = (1 if i == 0 else r, 1 if j == 0 else r, 1 if i == n - 1 else r, 1 if j == n - 1 else r)
            row.append(tc.random_tensor(shape, tc.derive_seed(seed, "bench", i, j)))
        out.append(row)
    return out


def cmd_contract_bench(cfg: dict, seed: int):
    c = _take(cfg, {"n": [4], "r": [2], "m": [4, 8], "families": ["bmps", "ibmps"], "exact": True})
    rows = []
    for n in c["n"]:
        for r in c["r"]:
            grid = _random_grid(int(n), int(r), seed)
            exact = None
            if c["exact"]:
                exact = ct.contract_exact(grid)
            for fam in c["families"]:
                for m in c["m"]:
                    opt = ct.ContractOption(family=fam, max_rank=int(m)).with_seed(seed)
                    t0 = time.perf_counter()
                    with tc.counting() as counter:
                        val = ct.contract_one_layer(grid, opt)
                    dt = time.perf_counter() - t0
                    err = abs(val - exact) / abs(exact) if exact is not None else float("nan")
                    rows.append({"family": fam, "n": int(n), "r": int(r), "m": int(m),
                                 "flops": counter.flops, "peak_elements": counter.peak_elements,
                                 "rel_error": err, "seconds": dt})
    return c, {"rows": rows}, None


def cmd_expect(cfg: dict, seed: int):
    c = _take(cfg, {"grid": None, "state": _REQUIRED, "hamiltonian": _REQUIRED,
                    "family": "two-layer-ibmps", "m": 16, "use_cache": True})
    st = c["state"]
    if isinstance(st, str):
        state = P.load(st)
    elif isinstance(st, dict) and "random" in st:
        rnd = st["random"]
        state = P.random_peps(int(rnd["nrow"]), int(rnd["ncol"]), int(rnd.get("bond", 2)), seed)
    elif isinstance(st, dict) and "zeros" in st:
        state = P.computational_zeros(*[int(x) for x in st["zeros"]])
    else:
        raise ConfigError("state must be a file path, {random: {...}} or {zeros: [rows, cols]}")
    obs = build_hamiltonian(c["hamiltonian"], state.nrow, state.ncol)
    opt = ct.ContractOption(family=c["family"], max_rank=int(c["m"])).with_seed(seed)
    with tc.counting() as counter:
        val = O.expectation(state, obs, opt, use_cache=bool(c["use_cache"]), allow_complex=True)
    results = {"energy_re": val.real, "energy_im": val.imag,
               "counts": dict(zip(("full_sweeps", "band_contractions"),
                                  O.gate_count_with_cache(state.nrow, obs, bool(c["use_cache"]))))}
    return c, results, counter


COMMANDS = {"ite": cmd_ite, "vqe": cmd_vqe, "rqc-bench": cmd_rqc,
            "contract-bench": cmd_contract_bench, "expect": cmd_expect}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pepsim", description="PEPS simulation drivers")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON config file")
        s.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        s.add_argument("--out", help="result JSON path (default: stdout)")
        s.add_argument("--threads", type=int, default=None, help="BLAS thread cap")
        s.add_argument("--strict-deterministic", action="store_true",
                       help="single-threaded kernels for bitwise reproducibility")
        if name == "contract-bench":
            s.add_argument("--csv", help="CSV output path (default: stdout)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else int(cfg.pop("seed", 0))
        cfg.pop("seed", None)
    except (OSError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    backend = tc.Backend(threads=args.threads, strict_deterministic=args.strict_deterministic)
    tc.set_backend(backend)
    t0 = time.perf_counter()
    try:
        with backend.activate():
            echo, results, counter = COMMANDS[args.command](cfg, seed)
    except (ConfigError, D.ConfigError, tc.ValidationError, KeyError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ct.ResourceError, MemoryError) as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    elapsed = time.perf_counter() - t0

    timing = {"seconds": elapsed}
    if args.command == "contract-bench":
        timing["per_row_seconds"] = [r.pop("seconds") for r in results["rows"]]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r, sec in zip(results["rows"], timing["per_row_seconds"]):
            w.writerow({**r, "seconds": f"{sec:.6f}"})
        if args.csv:
            Path(args.csv).write_text(buf.getvalue())
        else:
            sys.stdout.write(buf.getvalue())

    doc = {"schema": SCHEMA, "command": args.command, "config": {**echo, "seed": seed},
           "results": results,
           "instrumentation": {"flops": counter.flops, "peak_elements": counter.peak_elements,
                               "calls": dict(sorted(counter.calls.items()))} if counter else {},
           "versions": versions(), "timing": timing}
    text = json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    elif args.command != "contract-bench" or args.csv:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
