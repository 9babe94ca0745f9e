"""Command-line runner for the sheet experiments.

Every command reads an optional JSON config, merges it over its defaults,
and writes its artifacts to ``--out``.  Each artifact carries the master
seed, the SHA-256 hash of the resolved config and the package version.
CSV tables start with one ``#`` metadata line followed by a header row and
have an adjacent ``<name>.schema.json`` describing columns and units.

Exit codes: 0 success, 1 invalid config or spec, 2 failure while running.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Callable

import numpy as np

from . import __version__
from .bayes import PosteriorSpec, SpecError, mcmc_increments, mcmc_lepage, probe_wellposedness, tv_distance_weighted
from .experiments import (
    WEAK_DEFAULTS,
    converge_posterior_tv,
    converge_posterior_weak,
    converge_prior,
    reference_spec,
)
from .lepage import Box, draw_lepage_state
from .rng import stream
from .sheet import discretize_lepage, sample_increments, write_sheets

log = logging.getLogger("stablesheets")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


DEFAULTS = {
    "sample": {
        "alpha": 1.0,
        "d": 1,
        "resolution": 256,
        "representation": "increments",
        "truncation": 10_000,
        "replicates": 1,
    },
    "converge-prior": {
        "alpha": 1.0,
        "d": 1,
        "p": 1.0,
        "resolutions": [8, 16, 32, 64, 128, 256],
        "truncation": 10_000,
        "replicates": 20,
        "eval_resolution": None,
        "min_ratio": 10.0,
    },
    "posterior": {
        "spec": "reference",
        "prior": {},
        "iters": 10_000,
        "thin": 10,
        "burn_in": 1_000,
        "step_scale": WEAK_DEFAULTS["step_scale"],
        "block_size": None,
        "refresh_prob": 0.1,
        "grid_resolution": 256,
    },
    "converge-posterior": {
        "spec": "reference",
        "prior": {},
        "weak": {"resolutions": [32, 256], "p": 1.0, "n_se": 3.0, **WEAK_DEFAULTS},
        "tv": {"truncations": [100, 1_000, 10_000], "prior_samples": 10_000, "tolerance": 0.05, "tolerance_level": 1_000},
    },
    "probe": {
        "spec": "reference",
        "prior": {},
        "perturbations": None,
        "radius": 10.0,
        "samples": 2_000,
        "p": 2.0,
    },
    "tv": {
        "spec_a": "reference",
        "prior_a": {"representation": "lepage", "truncation": 1_000},
        "spec_b": "reference",
        "prior_b": {"representation": "lepage", "truncation": 10_000},
        "prior_samples": 10_000,
    },
}


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def load_config(command: str, path: str | None, seed: int | None) -> dict:
    cfg = copy.deepcopy(DEFAULTS[command])
    user = {}
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError([f"cannot read config {path}: {exc.strerror}"]) from exc
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config {path} is not valid JSON: {exc}"]) from exc
        if not isinstance(user, dict):
            raise ConfigError([f"config {path} must hold a JSON object"])
    unknown = sorted(set(user) - set(cfg) - {"seed"})
    if unknown:
        raise ConfigError([f"unknown config keys for {command}: {', '.join(unknown)}"])
    cfg = _merge(cfg, user)
    cfg["seed"] = int(seed if seed is not None else user.get("seed", 0))
    if not 0 <= cfg["seed"] < 2**64:
        raise ConfigError(["seed must be an unsigned 64-bit integer"])
    _validate(command, cfg)
    return cfg


def _validate(command: str, cfg: dict) -> None:
    errs = []

    def ladder(name, levels):
        if not isinstance(levels, list) or len(levels) < 1 or not all(isinstance(v, int) and v > 0 for v in levels):
            errs.append(f"{name} must be a list of positive integers")
        elif any(b <= a for a, b in zip(levels, levels[1:])):
            errs.append(f"{name} must be strictly increasing")

    def positive(name, val):
        if not isinstance(val, (int, float)) or isinstance(val, bool) or val <= 0:
            errs.append(f"{name} must be a positive number")

    if command in ("sample", "converge-prior"):
        if not 0 < cfg["alpha"] <= 2:
            errs.append("alpha must lie in (0, 2]")
        if cfg["d"] not in (1, 2, 3):
            errs.append("d must be 1, 2 or 3")
        if cfg.get("replicates", 1) < 1:
            errs.append("replicates must be at least 1")
    if command == "sample":
        positive("resolution", cfg["resolution"])
        if cfg["representation"] not in ("increments", "lepage"):
            errs.append("representation must be 'increments' or 'lepage'")
        if cfg["representation"] == "lepage" and cfg["alpha"] >= 2:
            errs.append("lepage representation needs alpha < 2")
    if command == "converge-prior":
        ladder("resolutions", cfg["resolutions"])
        positive("truncation", cfg["truncation"])
        if cfg["alpha"] >= 2:
            errs.append("converge-prior uses LePage states and needs alpha < 2")
        if cfg["p"] < 1:
            errs.append("p must be >= 1")
    if command == "posterior":
        for key in ("iters", "thin", "grid_resolution"):
            positive(key, cfg[key])
        if not errs and cfg["iters"] % cfg["thin"]:
            errs.append("iters must be a multiple of thin")
    if command == "converge-posterior":
        weak, tv = cfg["weak"], cfg["tv"]
        if weak is not None:
            ladder("weak.resolutions", weak["resolutions"])
            if isinstance(weak["resolutions"], list) and len(weak["resolutions"]) < 2:
                errs.append("weak.resolutions needs at least two levels")
        if tv is not None:
            ladder("tv.truncations", tv["truncations"])
            if isinstance(tv["truncations"], list) and len(tv["truncations"]) < 2:
                errs.append("tv.truncations needs at least two levels")
    if command == "probe":
        positive("radius", cfg["radius"])
        positive("samples", cfg["samples"])
    if errs:
        raise ConfigError(errs)


def _load_spec(value, prior_over: dict | None) -> PosteriorSpec:
    prior_over = dict(prior_over or {})
    if value == "reference":
        if "resolution" not in prior_over and "truncation" not in prior_over:
            prior_over.setdefault("resolution", 64)
        return reference_spec(
            representation=prior_over.get("representation", "increments"),
            resolution=prior_over.get("resolution"),
            truncation=prior_over.get("truncation"),
            alpha=float(prior_over.get("alpha", 1.0)),
        )
    if isinstance(value, dict):
        spec = PosteriorSpec.from_dict(value)
    elif isinstance(value, str):
        try:
            spec = PosteriorSpec.from_json(value)
        except OSError as exc:
            raise ConfigError([f"cannot read spec {value}: {exc.strerror}"]) from exc
    else:
        raise ConfigError(["spec must be 'reference', a path or an inline object"])
    return spec.with_prior(**prior_over) if prior_over else spec


def config_hash(command: str, cfg: dict) -> str:
    blob = json.dumps({"command": command, "config": cfg}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# artifact writing
# ---------------------------------------------------------------------------


class Writer:
    def __init__(self, out: str, fmt: str, command: str, cfg: dict):
        self.out = out
        self.fmt = fmt
        self.meta = {"seed": cfg["seed"], "config_hash": config_hash(command, cfg), "version": __version__}
        os.makedirs(out, exist_ok=True)
        self.write_json("metadata", {"command": command, "config": cfg})

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)

    def write_json(self, name: str, obj: dict) -> str:
        path = self.path(f"{name}.json")
        with open(path, "w") as fh:
            json.dump({**self.meta, **obj}, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")
        return path

    def write_table(self, name: str, columns: list, rows, fmt: str | None = None) -> str:
        """``columns`` holds (name, unit, description) triples."""
        fmt = fmt or self.fmt
        names = [c[0] for c in columns]
        rows = [list(r) for r in rows]
        if fmt == "json":
            return self.write_json(name, {"columns": names, "rows": rows})
        buf = io.StringIO()
        buf.write("# " + " ".join(f"{k}={v}" for k, v in self.meta.items()) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
        path = self.path(f"{name}.csv")
        with open(path, "w") as fh:
            fh.write(buf.getvalue())
        self.write_json(
            f"{name}.schema",
            {"table": f"{name}.csv", "columns": [{"name": n, "unit": u, "description": d} for n, u, d in columns]},
        )
        return path


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _mapper(threads: int) -> tuple[Callable, object]:
    if threads <= 1:
        return map, None
    pool = ProcessPoolExecutor(max_workers=threads)
    return pool.map, pool


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_sample(cfg: dict, w: Writer, threads: int) -> dict:
    seed, n, d = cfg["seed"], cfg["resolution"], cfg["d"]
    sheets = []
    for i in range(cfg["replicates"]):
        rng = stream(seed, "sample", i)
        if cfg["representation"] == "lepage":
            state = draw_lepage_state(cfg["alpha"], Box.unit(d), cfg["truncation"], rng, seed=seed)
            state.to_json(w.path(f"lepage_state_{i:03d}.json"))
            sheets.append(discretize_lepage(state, n))
        else:
            sheets.append(sample_increments(cfg["alpha"], n, d, rng, seed=seed))
    write_sheets(w.path("sheets.bin"), sheets)
    rows = []
    for i, s in enumerate(sheets):
        for m in np.ndindex(*s.values.shape):
            rows.append([i, *m, *(mi / n for mi in m), float(s.values[m])])
    cols = (
        [("replicate", "index", "replicate number")]
        + [(f"m{j + 1}", "index", f"gridpoint index along axis {j + 1}") for j in range(d)]
        + [(f"x{j + 1}", "unit length", f"gridpoint coordinate m/N along axis {j + 1}") for j in range(d)]
        + [("value", "sheet units", "U at the gridpoint (cumulative sum of increments)")]
    )
    w.write_table("sheet", cols, rows)
    return {"sheets": len(sheets)}


def cmd_converge_prior(cfg: dict, w: Writer, threads: int) -> dict:
    mapper, pool = _mapper(threads)
    try:
        res = converge_prior(
            cfg["alpha"], cfg["d"], cfg["p"], cfg["resolutions"], cfg["truncation"],
            cfg["replicates"], cfg["seed"], cfg["eval_resolution"], mapper=mapper,
        )
    finally:
        if pool is not None:
            pool.shutdown()
    w.write_table(
        "distances",
        [("replicate", "index", "replicate number"), ("N", "cells per axis", "grid resolution"),
         ("distance", "sheet units", "coupled L^p distance between U^N and U")],
        res.rows,
    )
    summary = res.summary()
    summary["passed"] = bool(res.median_ratio <= 1.0 / cfg["min_ratio"])
    w.write_json("summary", summary)
    return summary


def _sheet_samples(chain, grid_resolution: int):
    out = []
    for s in chain.samples:
        out.append(discretize_lepage(s, grid_resolution) if hasattr(s, "arrivals") else s)
    return out


def cmd_posterior(cfg: dict, w: Writer, threads: int) -> dict:
    spec = _load_spec(cfg["spec"], cfg["prior"])
    prior = spec.prior
    if not prior.is_lepage and prior.alpha not in (1.0, 2.0):
        raise ConfigError([f"increment sampler needs alpha in {{1, 2}} (got {prior.alpha}); use a lepage prior"])
    return _run_posterior(spec, cfg, w)


def _run_posterior(spec, cfg, w) -> dict:
    rng = stream(cfg["seed"], "posterior")
    if spec.prior.is_lepage:
        chain = mcmc_lepage(spec, cfg["iters"], cfg["block_size"], rng, cfg["refresh_prob"], cfg["thin"], cfg["burn_in"])
    else:
        chain = mcmc_increments(spec, cfg["iters"], cfg["step_scale"], rng, cfg["thin"], cfg["burn_in"])
    write_sheets(w.path("chain.bin"), _sheet_samples(chain, cfg["grid_resolution"]))
    w.write_table(
        "trace",
        [("iteration", "count", "iteration after burn-in"), ("loglik", "nats", "Phi(u, y) at the stored sample"),
         ("acceptance", "fraction", "running acceptance rate over all moves")],
        chain.trace_rows(),
    )
    means = [chain.observable_mean(j) for j in range(spec.k)]
    diag = {
        "acceptance": chain.acceptance,
        "ess": chain.ess,
        "posterior_mean_Lu": [m for m, _ in means],
        "posterior_mean_Lu_se": [s for _, s in means],
        "samples": len(chain),
        "spec": spec.to_dict(),
    }
    w.write_json("diagnostics", diag)
    return {"acceptance": chain.acceptance, "min_ess": min(chain.ess.values())}


def cmd_converge_posterior(cfg: dict, w: Writer, threads: int) -> dict:
    spec = _load_spec(cfg["spec"], cfg["prior"])
    report = {}
    weak, tv = cfg["weak"], cfg["tv"]
    if weak is not None:
        rep, _ = converge_posterior_weak(
            spec, weak["resolutions"], cfg["seed"], p=weak["p"], samples=weak["samples"],
            step_scale=weak["step_scale"], thin=weak["thin"], burn_in=weak["burn_in"],
        )
        rows = []
        for (a, b), gaps, ses in zip(rep.pairs, rep.gaps, rep.pooled_se):
            for j, (g, s) in enumerate(zip(gaps, ses)):
                rows.append([weak["resolutions"][a], weak["resolutions"][b], j, float(g), float(s)])
        w.write_table(
            "weak",
            [("N_a", "cells", "first resolution"), ("N_b", "cells", "second resolution"),
             ("anchor", "index", "BL functional index"), ("gap", "dimensionless", "|mean g_j(a) - mean g_j(b)|"),
             ("pooled_se", "dimensionless", "sqrt(se_a^2 + se_b^2)")],
            rows,
        )
        report["weak"] = {**rep.to_dict(), "passed": rep.within(weak["n_se"])}
    if tv is not None:
        rows = converge_posterior_tv(spec, tv["truncations"], cfg["seed"], tv["prior_samples"])
        w.write_table(
            "tv",
            [("N", "terms", "truncation"), ("reference", "terms", "reference truncation"),
             ("tv", "probability", "TV estimate"), ("se", "probability", "standard error")],
            rows,
        )
        vals = [r[2] for r in rows]
        decreasing = all(b < a for a, b in zip(vals, vals[1:]))
        at = {r[0]: r[2] for r in rows}.get(tv["tolerance_level"])
        report["tv"] = {
            "rows": [list(r) for r in rows],
            "decreasing": decreasing,
            "passed": bool(decreasing and (at is None or at < tv["tolerance"])),
        }
    w.write_json("report", report)
    return {k: v["passed"] for k, v in report.items()}


def cmd_probe(cfg: dict, w: Writer, threads: int) -> dict:
    spec = _load_spec(cfg["spec"], cfg["prior"])
    pert = cfg["perturbations"]
    if pert is None:
        unit = spec.obs.y / np.linalg.norm(spec.obs.y)
        pert = [0.0 * unit, 0.05 * unit, 0.1 * unit]
    bad = [i for i, p in enumerate(pert) if len(np.atleast_1d(p)) != spec.k]
    if bad:
        raise ConfigError([f"perturbation {i} does not have length k={spec.k}" for i in bad])
    rep = probe_wellposedness(spec, pert, cfg["radius"], cfg["samples"], stream(cfg["seed"], "probe"), p=cfg["p"])
    w.write_json("probe", rep.to_dict())
    return {"wd2_finite": rep.wd2_finite, "wp3_bound_ok": all(rep.wp3_bound_ok)}


def cmd_tv(cfg: dict, w: Writer, threads: int) -> dict:
    a = _load_spec(cfg["spec_a"], cfg["prior_a"])
    b = _load_spec(cfg["spec_b"], cfg["prior_b"])
    tv, se = tv_distance_weighted(a, b, cfg["prior_samples"], stream(cfg["seed"], "tv"))
    w.write_table(
        "tv",
        [("tv", "probability", "TV estimate"), ("se", "probability", "standard error")],
        [[tv, se]],
    )
    return {"tv": tv, "se": se}


COMMANDS = {
    "sample": cmd_sample,
    "converge-prior": cmd_converge_prior,
    "posterior": cmd_posterior,
    "converge-posterior": cmd_converge_posterior,
    "probe": cmd_probe,
    "tv": cmd_tv,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stablesheets", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config merged over the command defaults")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker processes for replicate loops")
        p.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.command, args.config, args.seed)
        if args.threads < 1:
            raise ConfigError(["--threads must be at least 1"])
    except (ConfigError, SpecError) as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    try:
        writer = Writer(args.out, args.format, args.command, cfg)
        result = COMMANDS[args.command](cfg, writer, args.threads)
    except (ConfigError, SpecError) as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to exit 2
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(result, sort_keys=True, default=_jsonable))
    return EXIT_OK


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
