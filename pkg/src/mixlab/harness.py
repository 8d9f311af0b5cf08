"""Command line harness: config validation, experiment dispatch and result persistence.

    mixlab run <config.json> [--out DIR] [--seed U64] [--threads N]
    mixlab list [--json]

Results go to <out>/<experiment>/<hash>/ where the hash is taken over the
canonical (sorted-key) JSON of the merged config, so it does not depend on
key order in the input file.  CSV tables are written with repr-exact floats,
hence reruns with the same config and seed give byte-identical CSVs.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigInvalid, MixlabError
from .experiments import CATALOGUE, _jsonable

U64_MAX = 2**64 - 1

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int_pos = {"type": "integer", "minimum": 1}
_samples = {"type": "integer", "minimum": 1024, "maximum": 10**9}
_num_list = {"type": "array", "items": _num, "minItems": 1}
_pos_list = {"type": "array", "items": _pos, "minItems": 1}
_profile = {"enum": ["cos", "linear", "centered", "one", "two_minus"]}

MAP_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["lsv", "doubling", "linear"]},
        "gamma": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "J": {"type": "integer", "minimum": 2, "maximum": 100000},
        "k": {"type": "integer", "minimum": 2, "maximum": 64},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

ROOF_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["induced", "constant", "branch_constant"]},
        "h": {"oneOf": [_pos, {"type": "array", "items": _num, "minItems": 1}]},
        "c": _pos,
        "values": _pos_list,
        "N": {"oneOf": [_pos, {"type": "null"}]},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

PARAM_SCHEMAS = {
    "lsv-decay": {
        "n_samples": _samples, "t_min": _pos, "t_max": _pos, "n_t": {"type": "integer", "minimum": 3},
        "observable": _profile, "tolerance": _pos},
    "mt-asymptotics": {
        "n_samples": _samples, "t_grid": _pos_list, "band": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
        "u_cut": _pos, "v_profile": _profile, "w_profile": _profile},
    "spectrum": {
        "grid_size": {"type": "integer", "minimum": 256, "maximum": 16384}, "b_grid": _num_list,
        "n_eig": {"type": "integer", "minimum": 2, "maximum": 64}},
    "eigen-derivative": {
        "grid_size": {"type": "integer", "minimum": 256, "maximum": 16384},
        "h": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.1}, "tolerance": _pos},
    "resolvent-sweep": {
        "b_grid": _pos_list, "grids": {"type": "array", "items": {"type": "integer", "minimum": 128, "maximum": 8192},
                                       "minItems": 2},
        "n_trial": {"type": "integer", "minimum": 8, "maximum": 512}, "slope_rtol": _pos},
    "truncation": {
        "N_grid": _pos_list, "t_grid": _pos_list, "n_samples": _samples, "observable": _profile, "C_max": _pos},
    "pollicott-recon": {
        "eps": _pos, "B": _pos, "h_div": {"type": "integer", "minimum": 8}, "t_max": {"type": "integer", "minimum": 1},
        "n_samples": _samples, "nodes_per_branch": {"type": "integer", "minimum": 4, "maximum": 128}},
    "periods-diophantine": {"depth": {"type": "integer", "minimum": 8, "maximum": 10000}},
    "good-asymptotics": {"n_terms": {"type": "integer", "minimum": 12, "maximum": 50}},
    "temporal-distance": {
        "pair": {"type": "object", "properties": {k: {"type": "array", "items": {"enum": [0, 1]}, "minItems": 1}
                                                  for k in ("past1", "fut1", "past4", "fut4")},
                 "required": ["past1", "fut1", "past4", "fut4"], "additionalProperties": False},
        "depth": {"type": "integer", "minimum": 4, "maximum": 12}, "threshold": _pos},
    "approx-eig-scan": {
        "b_grid": {"type": "array", "items": {"type": "number", "minimum": 2}, "minItems": 2},
        "xi": _pos, "alphabet": {"type": "array", "items": {"enum": [0, 1]}, "minItems": 1},
        "word_length": {"type": "integer", "minimum": 1, "maximum": 10}, "trials": {"type": "integer", "minimum": 0}},
    "clt": {"n_time": _int_pos, "n_samples": _samples, "n_sigma": _pos},
}


def config_schema():
    """JSON schema of an experiment config; params are checked per experiment."""
    branches = []
    for name, props in PARAM_SCHEMAS.items():
        branches.append({
            "if": {"properties": {"experiment": {"const": name}}, "required": ["experiment"]},
            "then": {"properties": {"params": {"type": "object", "properties": props, "additionalProperties": False}}},
        })
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "type": "object",
        "properties": {
            "experiment": {"enum": sorted(CATALOGUE)},
            "seed": {"type": "integer", "minimum": 0, "maximum": U64_MAX},
            "map": MAP_SCHEMA,
            "roof": ROOF_SCHEMA,
            "params": {"type": "object"},
        },
        "required": ["experiment"],
        "additionalProperties": False,
        "allOf": branches,
    }


def _offending_key(err: jsonschema.ValidationError):
    path = [str(p) for p in err.absolute_path]
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        path.append(extra[0] if extra else "?")
    elif err.validator == "required":
        missing = [k for k in err.validator_value if k not in err.instance]
        path.append(missing[0] if missing else "?")
    return ".".join(path) or "<root>"


def validate_config(cfg):
    """Raise ConfigInvalid naming the first offending key."""
    if not isinstance(cfg, dict):
        raise ConfigInvalid("<root>: config must be a JSON object")
    validator = jsonschema.Draft202012Validator(config_schema())
    errs = sorted(validator.iter_errors(cfg), key=lambda e: (len(list(e.absolute_path)), str(e.message)))
    if errs:
        # prefer the most specific error (deepest path)
        err = max(errs, key=lambda e: len(list(e.absolute_path)))
        key = _offending_key(err)
        raise ConfigInvalid(f"{key}: {err.message}", ) from None
    p = cfg.get("params", {})
    if "t_min" in p and "t_max" in p and p["t_min"] >= p["t_max"]:
        raise ConfigInvalid("params.t_min: must be below params.t_max")


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "pair":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def default_config(name):
    e = CATALOGUE[name]
    return {"experiment": name, "seed": 0, "map": copy.deepcopy(e["map"]), "roof": copy.deepcopy(e["roof"]),
            "params": copy.deepcopy(e["params"])}


def resolve_config(cfg, seed=None):
    """Validate, merge over experiment defaults, validate again."""
    validate_config(cfg)
    merged = _merge(default_config(cfg["experiment"]), cfg)
    if seed is not None:
        merged["seed"] = int(seed)
    validate_config(merged)
    return merged


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(cfg):
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()[:16]


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    if isinstance(x, (complex, np.complexfloating)):
        return f"{float(x.real)!r}{float(x.imag):+}j"
    return str(x)


def write_table(directory: Path, name, header, columns):
    """CSV with header row plus a whitespace-separated .dat twin for gnuplot."""
    n = len(columns[0]) if columns else 0
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for i in range(n):
        wr.writerow([_fmt(c[i]) for c in columns])
    (directory / f"{name}.csv").write_text(buf.getvalue(), encoding="utf-8")
    lines = ["# " + " ".join(header)] + [" ".join(_fmt(c[i]) for c in columns) for i in range(n)]
    (directory / f"{name}.dat").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return [f"{name}.csv", f"{name}.dat"]


@dataclass
class ExperimentResult:
    experiment: str
    config_hash: str
    directory: Path
    files: list
    checks: list
    timings: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c["verdict"] != "FAIL" for c in self.checks)


def run(config, out_dir="out", seed=None, threads=None) -> ExperimentResult:
    """Run one experiment from a config dict or a path to a JSON file."""
    if isinstance(config, (str, Path)):
        try:
            config = json.loads(Path(config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigInvalid(f"<root>: not valid JSON ({e})") from None
    cfg = resolve_config(config, seed)
    if threads is not None:
        set_threads(threads)
    h = config_hash(cfg)
    name = cfg["experiment"]
    directory = Path(out_dir) / name / h
    directory.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        outcome = CATALOGUE[name]["fn"](cfg)
    except MixlabError as e:
        raise type(e)(f"experiment {name}: {e}") from e
    elapsed = time.perf_counter() - t0
    files = []
    for tname, (header, cols) in outcome.tables.items():
        files += write_table(directory, tname, header, cols)
    summary = _jsonable(outcome.summary)
    (directory / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    files.append("summary.json")
    (directory / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    files.append("config.json")
    checks = [c.as_dict() for c in outcome.checks]
    manifest = {
        "experiment": name,
        "anchor": CATALOGUE[name]["anchor"],
        "config_hash": h,
        "seed": cfg["seed"],
        "files": {f: hashlib.sha256((directory / f).read_bytes()).hexdigest() for f in sorted(files)},
        "checks": checks,
        "timings": {"total_s": round(elapsed, 3)},
        "random_streams": "numpy Philox, SeedSequence(seed).spawn(n) per Monte Carlo batch",
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return ExperimentResult(name, h, directory, sorted(files) + ["manifest.json"], checks, manifest["timings"])


def set_threads(n):
    if n < 1:
        raise ConfigInvalid("--threads: must be at least 1")
    import numba
    numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))


def catalogue():
    return [{"name": k, "description": v["description"], "anchor": v["anchor"], "config": default_config(k)}
            for k, v in CATALOGUE.items()]


def _u64(text):
    v = int(text)
    if not 0 <= v <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def main(argv=None):
    ap = argparse.ArgumentParser(prog="mixlab", description="Mixing-rate experiments for suspension semiflows")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run one experiment from a JSON config")
    r.add_argument("config")
    r.add_argument("--out", default="out")
    r.add_argument("--seed", type=_u64, default=None)
    r.add_argument("--threads", type=int, default=None)
    ls = sub.add_parser("list", help="list experiments")
    ls.add_argument("--json", action="store_true")
    args = ap.parse_args(argv)
    if args.cmd == "list":
        cat = catalogue()
        if args.json:
            print(json.dumps(cat, indent=2))
        else:
            for e in cat:
                print(f"{e['name']:<20} {e['description']}  [{e['anchor']}]")
        return 0
    try:
        res = run(args.config, args.out, args.seed, args.threads)
    except ConfigInvalid as e:
        print(f"ConfigInvalid: {e}", file=sys.stderr)
        return 2
    except MixlabError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 1
    for c in res.checks:
        print(f"{c['verdict']:<8} {c['name']}  measured={json.dumps(c['measured'])}  tol={json.dumps(c['tolerance'])}")
    print(f"results: {res.directory}")
    return 0 if res.passed else 1


if __name__ == "__main__":
    sys.exit(main())
