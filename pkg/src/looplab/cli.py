"""Config-driven experiment runner.

Configs are line-based ``key = value`` text with # comments.  Parsing
reports every violation at once, with line numbers, and unknown or
duplicated keys are errors rather than warnings.  A run writes three
artifacts next to each other under the configured output stem: a
JSON-lines results file (one record per scale and channel), a CSV
mirror of the same numbers, and a checkpoint that makes interrupted
sweeps resumable from the last completed chunk.  Records from a rerun
with the same config and seed are byte-identical apart from the
wall_time_seconds field.

The only environment variable consulted is LOOPLAB_OUT, an optional
directory that relative output paths are placed under.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, Optional, Tuple

from . import __version__
from .experiments import (
    EXPERIMENT_KINDS,
    run_experiment_scale,
    scale_memory_bytes,
)
from .graphcore import GraphError
from .lattice import GeometryError
from .mc import McError, Tally, estimate_pc
from .oracle import OracleError
from .registry import load_registry, verify_instance

RESULTS_VERSION = "looplab-results-1"
CHECKPOINT_VERSION = "looplab-checkpoint-1"
PC_VERSION = "looplab-pc-1"

META_KINDS = ("diagrams", "pc-estimate", "oracle-suite", "fit")
ALL_KINDS = EXPERIMENT_KINDS + META_KINDS

DEFAULT_MASTER_SEED = 20260816
DEFAULT_ORACLE_REPLICAS = 100_000
# fraction of replicas allowed to stay unresolved before a scale is flagged
INDETERMINATE_LIMIT = 1e-3

_CSV_COLUMNS = (
    "experiment",
    "d",
    "p",
    "scale",
    "channel",
    "point",
    "se",
    "trials",
    "indeterminate",
    "successes",
    "seed",
    "replica_range",
    "wall_time_seconds",
    "artifact_version",
)


class ConfigError(ValueError):
    """Carries the full list of configuration violations."""

    def __init__(self, violations):
        self.violations = tuple(violations)
        super().__init__(
            "invalid configuration:\n" + "\n".join(self.violations)
        )


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    d: Optional[int] = None
    scales: Tuple[int, ...] = ()
    replicas: Tuple[int, ...] = ()
    seed: Optional[int] = None
    p: Optional[float] = None
    pc_file: Optional[str] = None
    params: Dict[str, object] = field(default_factory=dict)
    memory_cap: Optional[int] = None
    out: Optional[str] = None
    input: Optional[str] = None


# --------------------------------------------------------------- parsing

_EVENT_KEYS = ("a", "alpha", "beta", "m", "eps", "K", "l", "c_work")
_CONFIG_KEYS = (
    ("experiment", "d", "p", "pc_file", "scales", "replicas", "seed")
    + _EVENT_KEYS
    + ("memory_cap", "out", "input")
)

# keys each meta kind accepts beyond "experiment" and "out"
_META_ALLOWED = {
    "diagrams": {"d", "p", "pc_file", "scales", "l"},
    "pc-estimate": {"d", "seed", "scales"},
    "oracle-suite": {"replicas", "seed"},
    "fit": {"input"},
}
_META_REQUIRED = {
    "diagrams": ("d", "scales"),
    "pc-estimate": ("d",),
    "oracle-suite": (),
    "fit": ("input",),
}


def _fraction_or_none(raw):
    try:
        return Fraction(raw)
    except (ValueError, ZeroDivisionError):
        return None


def parse_config(text) -> ExperimentConfig:
    """Parse and fully validate a config, reporting every violation."""
    entries = {}
    violations = []
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            violations.append("line %d: expected key = value, got %r" % (ln, line))
            continue
        key, val = line.split("=", 1)
        key = key.strip()
        val = val.strip()
        if not key:
            violations.append("line %d: empty key" % ln)
            continue
        if key not in _CONFIG_KEYS:
            violations.append("line %d: unknown key %r" % (ln, key))
            continue
        if key in entries:
            violations.append(
                "line %d: duplicate key %r (first set on line %d)"
                % (ln, key, entries[key][1])
            )
            continue
        if not val:
            violations.append("line %d: key %r has no value" % (ln, key))
            continue
        entries[key] = (val, ln)

    def complain(key, msg):
        violations.append("line %d: %s" % (entries[key][1], msg))

    def take_int(key, minimum=None):
        if key not in entries:
            return None
        raw = entries[key][0]
        try:
            v = int(raw)
        except ValueError:
            complain(key, "%s must be an integer, got %r" % (key, raw))
            return None
        if minimum is not None and v < minimum:
            complain(key, "%s must be >= %d, got %d" % (key, minimum, v))
            return None
        return v

    def take_float(key, lo=None, hi=None, open_ends=False):
        if key not in entries:
            return None
        raw = entries[key][0]
        try:
            v = float(raw)
        except ValueError:
            complain(key, "%s must be a number, got %r" % (key, raw))
            return None
        if lo is not None:
            bad = (v <= lo or v >= hi) if open_ends else (v < lo or v > hi)
            if bad:
                shape = "(%g, %g)" if open_ends else "[%g, %g]"
                complain(key, ("%s must lie in " + shape) % (key, lo, hi))
                return None
        return v

    def take_int_list(key):
        if key not in entries:
            return None
        raw = entries[key][0]
        out = []
        for part in raw.split(","):
            part = part.strip()
            try:
                v = int(part)
            except ValueError:
                complain(key, "%s entries must be integers, got %r" % (key, part))
                return None
            if v < 1:
                complain(key, "%s entries must be >= 1, got %d" % (key, v))
                return None
            out.append(v)
        return tuple(out)

    def take_exact(key, integral=False):
        # exact rational parameters keep their spelling so that configs
        # round-trip; integral ones (separations, leg counts) become ints
        if key not in entries:
            return None
        raw = entries[key][0]
        f = _fraction_or_none(raw)
        if f is None:
            complain(key, "%s must be a number or fraction, got %r" % (key, raw))
            return None
        if integral:
            if f.denominator != 1:
                complain(key, "%s must be an integer, got %r" % (key, raw))
                return None
            return int(f)
        return raw

    kind = entries["experiment"][0] if "experiment" in entries else None
    if kind is None:
        violations.append("config: experiment is required")
    elif kind not in ALL_KINDS:
        complain(
            "experiment",
            "unknown experiment %r (expected one of %s)"
            % (kind, ", ".join(ALL_KINDS)),
        )
        kind = None

    d = take_int("d", minimum=1)
    seed = take_int("seed", minimum=0)
    p = take_float("p", 0.0, 1.0)
    scales = take_int_list("scales")
    replicas = take_int_list("replicas")
    memory_cap = take_int("memory_cap", minimum=1)
    pc_file = entries["pc_file"][0] if "pc_file" in entries else None
    out = entries["out"][0] if "out" in entries else None
    input_path = entries["input"][0] if "input" in entries else None

    params = {}
    for key, integral in (
        ("a", False),
        ("m", False),
        ("K", False),
        ("c_work", False),
        ("l", True),
    ):
        if key in entries:
            v = take_exact(key, integral=integral)
            if v is not None:
                params[key] = v
    # m is an integer separation for some kinds and a box factor for
    # others; keep integral spellings as ints so both readings work
    if isinstance(params.get("m"), str):
        f = Fraction(params["m"])
        if f.denominator == 1:
            params["m"] = int(f)
    for key in ("alpha", "beta", "eps"):
        v = take_float(key, 0.0, 1.0, open_ends=True)
        if v is not None:
            params[key] = v

    if "a" in params:
        f = Fraction(params["a"])
        if not 0 < f < 1:
            complain("a", "a must lie in (0, 1), got %s" % params["a"])
    if "K" in params and Fraction(params["K"]) <= 1:
        complain("K", "K must exceed 1, got %s" % params["K"])
    if "c_work" in params and Fraction(params["c_work"]) <= 1:
        complain("c_work", "c_work must exceed 1, got %s" % params["c_work"])
    if "m" in params and Fraction(str(params["m"])) < 0:
        complain("m", "m must be >= 0, got %s" % params["m"])
    if "l" in params and params["l"] < 1:
        complain("l", "l must be >= 1, got %d" % params["l"])
    if "beta" in params:
        if "alpha" not in params:
            complain("beta", "beta needs alpha")
        elif not params["beta"] < params["alpha"]:
            complain("beta", "beta must lie below alpha")

    if scales is not None and len(set(scales)) != len(scales):
        complain("scales", "scales must be distinct")

    if kind in EXPERIMENT_KINDS:
        for key in ("d", "scales", "replicas", "seed"):
            if key not in entries:
                violations.append(
                    "config: experiment = %s requires key %r" % (kind, key)
                )
        if "p" in entries and "pc_file" in entries:
            violations.append("config: give either p or pc_file, not both")
        if "p" not in entries and "pc_file" not in entries:
            violations.append(
                "config: experiment = %s needs p or pc_file" % kind
            )
        if "input" in entries:
            complain("input", "input only applies to experiment = fit")
        if kind == "bubble" and d == 1:
            violations.append("config: experiment = bubble needs d >= 2")
        if scales and replicas and len(replicas) not in (1, len(scales)):
            complain(
                "replicas",
                "replicas lists one count or one per scale (%d scales, %d counts)"
                % (len(scales), len(replicas)),
            )
    elif kind in META_KINDS:
        allowed = _META_ALLOWED[kind] | {"out"}
        for key, (_, ln) in sorted(entries.items(), key=lambda kv: kv[1][1]):
            if key != "experiment" and key not in allowed:
                violations.append(
                    "line %d: key %r does not apply to experiment = %s"
                    % (ln, key, kind)
                )
        for key in _META_REQUIRED[kind]:
            if key not in entries:
                violations.append(
                    "config: experiment = %s requires key %r" % (kind, key)
                )
        if kind == "diagrams":
            if "p" in entries and "pc_file" in entries:
                violations.append("config: give either p or pc_file, not both")
            if "p" not in entries and "pc_file" not in entries:
                violations.append("config: experiment = diagrams needs p or pc_file")
        if kind == "pc-estimate" and scales is not None and len(scales) != 2:
            complain("scales", "pc-estimate takes exactly two scales (small, large)")
        if kind == "oracle-suite" and replicas is not None and len(replicas) != 1:
            complain("replicas", "oracle-suite takes a single replica count")

    if violations:
        raise ConfigError(violations)

    if scales and replicas and len(replicas) == 1 and kind in EXPERIMENT_KINDS:
        replicas = replicas * len(scales)
    return ExperimentConfig(
        experiment=kind,
        d=d,
        scales=scales or (),
        replicas=replicas or (),
        seed=seed,
        p=p,
        pc_file=pc_file,
        params=params,
        memory_cap=memory_cap,
        out=out,
        input=input_path,
    )


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; parse_config(serialize_config(c)) == c."""
    lines = ["experiment = %s" % cfg.experiment]
    if cfg.d is not None:
        lines.append("d = %d" % cfg.d)
    if cfg.p is not None:
        lines.append("p = %r" % cfg.p)
    if cfg.pc_file is not None:
        lines.append("pc_file = %s" % cfg.pc_file)
    if cfg.scales:
        lines.append("scales = %s" % ",".join(str(s) for s in cfg.scales))
    if cfg.replicas:
        lines.append("replicas = %s" % ",".join(str(r) for r in cfg.replicas))
    if cfg.seed is not None:
        lines.append("seed = %d" % cfg.seed)
    for key in _EVENT_KEYS:
        if key in cfg.params:
            lines.append("%s = %s" % (key, cfg.params[key]))
    if cfg.memory_cap is not None:
        lines.append("memory_cap = %d" % cfg.memory_cap)
    if cfg.input is not None:
        lines.append("input = %s" % cfg.input)
    if cfg.out is not None:
        lines.append("out = %s" % cfg.out)
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------- serialization


def _clean_float(x):
    if x is None or not math.isfinite(x):
        return None
    return float(x)


def _tally_to_json(t: Tally):
    return {
        "trials": t.trials,
        "successes": t.successes,
        "indeterminate": t.indeterminate,
        "value_sum": t.value_sum,
        "value_sumsq": t.value_sumsq,
        "master_seed": t.master_seed,
        "replica_range": [list(seg) for seg in t.replica_range],
    }


def _tally_from_json(obj) -> Tally:
    return Tally(
        trials=int(obj["trials"]),
        successes=int(obj["successes"]),
        indeterminate=int(obj["indeterminate"]),
        value_sum=float(obj["value_sum"]),
        value_sumsq=float(obj["value_sumsq"]),
        master_seed=int(obj["master_seed"]),
        replica_range=tuple((int(a), int(b)) for a, b in obj["replica_range"]),
    )


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def save_checkpoint(path: Path, state):
    _atomic_write(path, json.dumps(state, sort_keys=True, allow_nan=False))


def load_checkpoint(path: Path, config_text: str):
    data = json.loads(path.read_text(encoding="utf-8"))
    if data.get("artifact_version") != CHECKPOINT_VERSION:
        raise ConfigError(
            [
                "checkpoint %s has version %r, this build writes %r"
                % (path, data.get("artifact_version"), CHECKPOINT_VERSION)
            ]
        )
    if data.get("config") != config_text:
        raise ConfigError(
            ["checkpoint %s belongs to a different configuration" % path]
        )
    return data


def _record_lines(records):
    return "".join(
        json.dumps(rec, sort_keys=True, allow_nan=False) + "\n"
        for rec in records
    )


def _csv_text(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_CSV_COLUMNS)
    for rec in records:
        params = rec["params"]
        segs = ";".join("%d:%d" % (a, b) for a, b in rec["replica_range"])
        row = []
        for col in _CSV_COLUMNS:
            if col == "channel":
                v = params.get("channel", "")
            elif col == "successes":
                v = params.get("successes", "")
            elif col == "replica_range":
                v = segs
            else:
                v = rec[col]
            row.append("" if v is None else v)
        w.writerow(row)
    return buf.getvalue()


def _resolve_out(name: str) -> Path:
    base = Path(name)
    if not base.is_absolute():
        base = Path(os.environ.get("LOOPLAB_OUT", ".")) / base
    if base.suffix == ".jsonl":
        base = base.with_suffix("")
    return base


def _write_results(base: Path, records):
    os.makedirs(base.parent, exist_ok=True)
    _atomic_write(base.with_suffix(".jsonl"), _record_lines(records))
    _atomic_write(base.with_suffix(".csv"), _csv_text(records))


# ------------------------------------------------------------------- run


def _load_pc_point(path_str: str, d: int) -> float:
    data = json.loads(Path(path_str).read_text(encoding="utf-8"))
    if data.get("artifact_version") != PC_VERSION:
        raise ConfigError(
            [
                "pc file %s has version %r, expected %r"
                % (path_str, data.get("artifact_version"), PC_VERSION)
            ]
        )
    if data.get("d") != d:
        raise ConfigError(
            [
                "pc file %s was estimated for d=%s, the config says d=%d"
                % (path_str, data.get("d"), d)
            ]
        )
    return float(data["point"])


def _scale_record(cfg, p, run, elapsed):
    params = dict(run.params)
    params["channel"] = run.channel
    params["successes"] = run.tally.successes
    return {
        "experiment": cfg.experiment,
        "d": cfg.d,
        "p": p,
        "scale": run.scale,
        "params": params,
        "point": None if run.estimate is None else _clean_float(run.estimate.point),
        "se": None if run.estimate is None else _clean_float(run.estimate.se),
        "trials": run.tally.trials,
        "indeterminate": run.tally.indeterminate,
        "seed": run.tally.master_seed,
        "replica_range": [list(seg) for seg in run.tally.replica_range],
        "wall_time_seconds": round(elapsed, 3),
        "artifact_version": RESULTS_VERSION,
    }


def _skip_record(cfg, p, scale, reason, extra):
    params = {"error": reason}
    params.update(extra)
    return {
        "experiment": cfg.experiment,
        "d": cfg.d,
        "p": p,
        "scale": scale,
        "params": params,
        "point": None,
        "se": None,
        "trials": 0,
        "indeterminate": 0,
        "seed": cfg.seed,
        "replica_range": [],
        "wall_time_seconds": 0.0,
        "artifact_version": RESULTS_VERSION,
    }


def _run_experiment(cfg: ExperimentConfig) -> int:
    base = _resolve_out(cfg.out or "%s-d%d" % (cfg.experiment, cfg.d))
    os.makedirs(base.parent, exist_ok=True)
    ckpt_path = base.with_suffix(".ckpt.json")
    canon = serialize_config(cfg)
    if ckpt_path.exists():
        state = load_checkpoint(ckpt_path, canon)
    else:
        state = {
            "artifact_version": CHECKPOINT_VERSION,
            "config": canon,
            "scales": {},
        }
    p = cfg.p if cfg.p is not None else _load_pc_point(cfg.pc_file, cfg.d)

    records = []
    flagged = []
    for idx, scale in enumerate(cfg.scales):
        target = cfg.replicas[idx]
        need = scale_memory_bytes(cfg.experiment, cfg.d, scale, cfg.params)
        if cfg.memory_cap is not None and need > cfg.memory_cap:
            flagged.append(
                "scale %d skipped: needs ~%d bytes, cap is %d"
                % (scale, need, cfg.memory_cap)
            )
            records.append(
                _skip_record(
                    cfg,
                    p,
                    scale,
                    "memory cap exceeded",
                    {"estimated_bytes": need, "memory_cap": cfg.memory_cap},
                )
            )
            continue
        entry = state["scales"].get(str(scale))
        start = 0
        base_tallies = None
        spent = 0.0
        if entry is not None:
            start = int(entry["done"])
            spent = float(entry["seconds"])
            base_tallies = {
                ch: _tally_from_json(obj) for ch, obj in entry["tallies"].items()
            }
            if start > target:
                raise ConfigError(
                    [
                        "checkpoint covers %d replicas at scale %d, config asks for %d"
                        % (start, scale, target)
                    ]
                )
        t0 = time.monotonic()

        def on_chunk(tallies, done, _scale=scale, _t0=t0, _spent=spent):
            state["scales"][str(_scale)] = {
                "done": done,
                "seconds": _spent + (time.monotonic() - _t0),
                "tallies": {
                    ch: _tally_to_json(t) for ch, t in tallies.items()
                },
            }
            save_checkpoint(ckpt_path, state)

        runs = run_experiment_scale(
            cfg.experiment,
            cfg.d,
            p,
            scale,
            cfg.params,
            replicas=target,
            master_seed=cfg.seed,
            start=start,
            base=base_tallies,
            checkpoint=on_chunk,
        )
        elapsed = spent + (time.monotonic() - t0)
        state["scales"][str(scale)] = {
            "done": target,
            "seconds": elapsed,
            "tallies": {r.channel: _tally_to_json(r.tally) for r in runs},
        }
        save_checkpoint(ckpt_path, state)
        for run in runs:
            records.append(_scale_record(cfg, p, run, elapsed))
            frac = run.tally.indeterminate / run.tally.trials
            if frac >= INDETERMINATE_LIMIT:
                flagged.append(
                    "scale %d channel %s: indeterminate fraction %.2e"
                    % (scale, run.channel, frac)
                )

    _write_results(base, records)
    for rec in records:
        point = rec["point"]
        print(
            "%s d=%d scale=%d channel=%s point=%s trials=%d"
            % (
                rec["experiment"],
                rec["d"],
                rec["scale"],
                rec["params"].get("channel", "-"),
                "n/a" if point is None else repr(point),
                rec["trials"],
            )
        )
    for line in flagged:
        print("warning: " + line, file=sys.stderr)
    return 3 if flagged else 0


# ------------------------------------------------------------- meta kinds


def _pc_payload(interval):
    return {
        "artifact_version": PC_VERSION,
        "d": interval.d,
        "lo": interval.lo,
        "hi": interval.hi,
        "point": interval.point,
        "width": interval.width,
        "scale_small": interval.scale_small,
        "scale_large": interval.scale_large,
        "tolerance": interval.tolerance,
        "master_seed": interval.master_seed,
        "evaluations": [
            {
                "p": ev.p,
                "delta": ev.delta,
                "se": ev.se,
                "replicas": ev.replicas,
                "reach_small": ev.reach_small,
                "reach_large": ev.reach_large,
            }
            for ev in interval.evaluations
        ],
    }


def _run_pc_estimate(d, seed, tolerance, scales, out) -> int:
    small, large = scales
    interval = estimate_pc(
        d,
        scale_small=small,
        scale_large=large,
        tolerance=tolerance,
        master_seed=seed,
    )
    payload = _pc_payload(interval)
    base = _resolve_out(out or "pc-d%d" % d)
    os.makedirs(base.parent, exist_ok=True)
    _atomic_write(base.with_suffix(".json"), json.dumps(payload, sort_keys=True))
    record = {
        "experiment": "pc-estimate",
        "d": d,
        "p": interval.point,
        "scale": large,
        "params": {
            "lo": interval.lo,
            "hi": interval.hi,
            "scale_small": small,
            "scale_large": large,
            "tolerance": tolerance,
            "evaluations": len(interval.evaluations),
            "successes": sum(ev.replicas for ev in interval.evaluations),
        },
        "point": interval.point,
        "se": interval.width / 2.0,
        "trials": sum(ev.replicas for ev in interval.evaluations),
        "indeterminate": 0,
        "seed": seed,
        "replica_range": [],
        "wall_time_seconds": 0.0,
        "artifact_version": RESULTS_VERSION,
    }
    _write_results(base, [record])
    print(
        "pc-estimate d=%d interval=[%r, %r] width=%r evaluations=%d"
        % (d, interval.lo, interval.hi, interval.width, len(interval.evaluations))
    )
    return 0


def _run_oracle_suite(replicas, seed, out) -> int:
    records = []
    failures = 0
    for idx, entry in enumerate(load_registry(), 1):
        check = verify_instance(entry, replicas=replicas, base_seed=seed)
        exact = float(check.exact)
        if check.se > 0:
            z = (check.estimate - exact) / check.se
            ok = abs(z) <= 3.0
        else:
            z = 0.0
            ok = check.estimate == exact
        if not ok:
            failures += 1
        print(
            "%s %-38s estimate=%.6f exact=%.6f z=%+.2f"
            % ("PASS" if ok else "FAIL", check.name, check.estimate, exact, z)
        )
        records.append(
            {
                "experiment": "oracle-suite",
                "d": entry["d"],
                "p": float(Fraction(entry["p"])),
                "scale": idx,
                "params": {
                    "name": check.name,
                    "expected": entry["expected"],
                    "z": z,
                    "pass": ok,
                    "successes": check.trials,
                },
                "point": check.estimate,
                "se": check.se,
                "trials": check.trials,
                "indeterminate": check.indeterminate,
                "seed": seed,
                "replica_range": [[0, replicas]],
                "wall_time_seconds": 0.0,
                "artifact_version": RESULTS_VERSION,
            }
        )
    base = _resolve_out(out or "oracle-suite")
    _write_results(base, records)
    print("oracle-suite: %d instances, %d failures" % (len(records), failures))
    return 1 if failures else 0


def _run_fit(results_path, out) -> int:
    from . import analysis

    records = []
    with open(results_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    reports, lines, all_ok = analysis.fit_records(records)
    for line in lines:
        print(line)
    base = _resolve_out(out or (Path(results_path).stem + "-fit"))
    os.makedirs(base.parent, exist_ok=True)
    _atomic_write(
        base.with_suffix(".jsonl"),
        "".join(json.dumps(r, sort_keys=True, allow_nan=False) + "\n" for r in reports),
    )
    return 0 if all_ok else 1


def _run_diagrams(cfg: ExperimentConfig) -> int:
    from . import diagrams

    p = cfg.p if cfg.p is not None else _load_pc_point(cfg.pc_file, cfg.d)
    legs = cfg.params.get("l")
    records = []
    for name, scale, value in diagrams.diagram_table(
        cfg.d, p, cfg.scales, legs=legs
    ):
        records.append(
            {
                "experiment": "diagrams",
                "d": cfg.d,
                "p": p,
                "scale": scale,
                "params": {"channel": name, "successes": 0},
                "point": _clean_float(value),
                "se": 0.0,
                "trials": 0,
                "indeterminate": 0,
                "seed": 0,
                "replica_range": [],
                "wall_time_seconds": 0.0,
                "artifact_version": RESULTS_VERSION,
            }
        )
    base = _resolve_out(cfg.out or "diagrams-d%d" % cfg.d)
    _write_results(base, records)
    for rec in records:
        print(
            "diagrams d=%d %s scale=%d value=%r"
            % (cfg.d, rec["params"]["channel"], rec["scale"], rec["point"])
        )
    return 0


def run_config(cfg: ExperimentConfig) -> int:
    if cfg.experiment == "oracle-suite":
        return _run_oracle_suite(
            cfg.replicas[0] if cfg.replicas else DEFAULT_ORACLE_REPLICAS,
            cfg.seed if cfg.seed is not None else DEFAULT_MASTER_SEED,
            cfg.out,
        )
    if cfg.experiment == "pc-estimate":
        return _run_pc_estimate(
            cfg.d,
            cfg.seed if cfg.seed is not None else DEFAULT_MASTER_SEED,
            1e-3,
            cfg.scales or (6, 12),
            cfg.out,
        )
    if cfg.experiment == "fit":
        return _run_fit(cfg.input, cfg.out)
    if cfg.experiment == "diagrams":
        return _run_diagrams(cfg)
    return _run_experiment(cfg)


# ------------------------------------------------------------------ main


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="looplab",
        description="critical loop-cluster experiment runner",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a config file")
    p_run.add_argument("config", help="path to a key = value config file")

    p_oracle = sub.add_parser(
        "oracle-suite", help="Monte Carlo check of every registered tiny instance"
    )
    p_oracle.add_argument("--replicas", type=int, default=DEFAULT_ORACLE_REPLICAS)
    p_oracle.add_argument("--seed", type=int, default=DEFAULT_MASTER_SEED)
    p_oracle.add_argument("--out", default=None)

    p_pc = sub.add_parser(
        "pc-estimate", help="bracket the critical probability by bisection"
    )
    p_pc.add_argument("--d", type=int, required=True)
    p_pc.add_argument("--seed", type=int, default=DEFAULT_MASTER_SEED)
    p_pc.add_argument("--tolerance", type=float, default=1e-3)
    p_pc.add_argument("--scales", default="6,12", help="small,large shell radii")
    p_pc.add_argument("--out", default=None)

    p_fit = sub.add_parser("fit", help="log-log exponent fits of a results file")
    p_fit.add_argument("results", help="JSON-lines results file")
    p_fit.add_argument("--out", default=None)

    sub.add_parser("version", help="print version and artifact format names")

    args = ap.parse_args(argv)
    try:
        if args.command == "run":
            cfg = parse_config(Path(args.config).read_text(encoding="utf-8"))
            return run_config(cfg)
        if args.command == "oracle-suite":
            return _run_oracle_suite(args.replicas, args.seed, args.out)
        if args.command == "pc-estimate":
            scales = tuple(int(s) for s in args.scales.split(","))
            if len(scales) != 2:
                raise ConfigError(["--scales takes two entries: small,large"])
            return _run_pc_estimate(
                args.d, args.seed, args.tolerance, scales, args.out
            )
        if args.command == "fit":
            return _run_fit(args.results, args.out)
        if args.command == "version":
            print("looplab %s" % __version__)
            print("results format %s" % RESULTS_VERSION)
            print("checkpoint format %s" % CHECKPOINT_VERSION)
            print("pc format %s" % PC_VERSION)
            return 0
        raise AssertionError("unreachable subcommand")
    except ConfigError as err:
        print(str(err), file=sys.stderr)
        return 2
    except (GeometryError, GraphError, McError, OracleError) as err:
        print("error: %s" % err, file=sys.stderr)
        return 2
    except OSError as err:
        print("error: %s" % err, file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
