"""Experiment configuration, result persistence and run records."""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

COMMANDS = ("rotation-map", "rotation-flow", "periodic-norm", "past-future", "alignment-ensemble",
            "magnetic", "warped-demo", "semiconj", "geometry-suite")

RUN_KEYS = {"command", "model", "rng_seed", "horizon", "tolerance", "format"}
FORMATS = ("csv", "jsonl")

# parameter keys each command understands
PARAM_KEYS = {
    "rotation-map": {"system", "a", "b", "eps", "matrix", "shift", "start"},
    "rotation-flow": {"system", "a", "b", "return_time", "start", "direction", "dt"},
    "periodic-norm": {"matrix", "periods", "radius", "grid"},
    "past-future": {"system", "a", "b", "eps", "matrix", "shift", "start"},
    "alignment-ensemble": {"generator", "seeds", "delta", "min_fraction", "matrix"},
    "magnetic": {"speed", "start", "angle", "dt"},
    "warped-demo": {"sizes"},
    "semiconj": {"flow", "speed", "dt"},
    "geometry-suite": {"instances", "cone_instances", "busemann_instances"},
}
INPUT_KEYS = {"orbit"}


# ---------------------------------------------------------------------------
# plain values for JSON

def plain(x):
    """Convert numpy scalars, arrays and non-finite floats to JSON-safe values."""
    if isinstance(x, dict):
        return {str(k): plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return plain(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        f = float(x)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if x is None or isinstance(x, str):
        return x
    return str(x)


def _cell(v) -> str:
    v = plain(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, list):
        return " ".join(_cell(u) for u in v)
    return "" if v is None else str(v)


# ---------------------------------------------------------------------------
# atomic writers

def atomic_write(path: str, data: str | bytes) -> None:
    """Write via a temporary file in the target directory, then rename."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode("utf-8") if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(rows: list, columns: list | None = None) -> str:
    """RFC-4180 style: CRLF line ends, minimal quoting, a header row."""
    if columns is None:
        columns = sorted({k for r in rows for k in r})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def jsonl_text(rows: list) -> str:
    return "".join(json.dumps(plain(r), sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"
                   for r in rows)


def write_rows(path_stem: str, rows: list, fmt: str, columns: list | None = None) -> str:
    """Write rows as ``stem.csv`` or ``stem.jsonl``; returns the path."""
    if fmt == "csv":
        path = path_stem + ".csv"
        atomic_write(path, csv_text(rows, columns))
    elif fmt == "jsonl":
        path = path_stem + ".jsonl"
        atomic_write(path, jsonl_text(rows))
    else:
        raise ConfigError(f"unknown format {fmt!r}")
    return path


def read_rows(path: str) -> list:
    """Rows of a CSV or JSON-lines results file, as dicts of strings/values."""
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    if path.endswith(".jsonl"):
        return [json.loads(line) for line in text.splitlines() if line.strip()]
    return list(csv.DictReader(io.StringIO(text)))


# ---------------------------------------------------------------------------
# configuration

@dataclass
class ExperimentConfig:
    command: str
    model: str = ""
    rng_seed: int = 0
    horizon: float | None = None
    tolerance: float | None = None
    format: str = "jsonl"
    params: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}")
        unknown = set(self.params) - PARAM_KEYS[self.command]
        if unknown:
            raise ConfigError(f"unknown keys for {self.command}: {', '.join(sorted(unknown))}")
        unknown = set(self.inputs) - INPUT_KEYS
        if unknown:
            raise ConfigError(f"unknown input keys: {', '.join(sorted(unknown))}")
        for k, p in self.inputs.items():
            if not os.path.isfile(p):
                raise ConfigError(f"input {k} = {p} does not exist")
        if self.horizon is not None and not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        if self.tolerance is not None and not self.tolerance > 0:
            raise ConfigError("tolerance must be positive")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}")

    def sections(self) -> dict:
        """Canonical nested mapping; the basis of the digest."""
        run = {"command": self.command, "rng_seed": str(self.rng_seed), "format": self.format}
        if self.model:
            run["model"] = self.model
        if self.horizon is not None:
            run["horizon"] = repr(float(self.horizon))
        if self.tolerance is not None:
            run["tolerance"] = repr(float(self.tolerance))
        out = {"run": run}
        if self.params:
            out["params"] = {k: str(v) for k, v in self.params.items()}
        if self.inputs:
            out["inputs"] = {k: str(v) for k, v in self.inputs.items()}
        return out

    def digest(self) -> str:
        blob = json.dumps(self.sections(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def text(self) -> str:
        """Config file text with sorted sections and keys."""
        lines = []
        for sec, kv in sorted(self.sections().items()):
            lines.append(f"[{sec}]")
            lines += [f"{k} = {v}" for k, v in sorted(kv.items())]
            lines.append("")
        return "\n".join(lines)

    # typed parameter access
    def get_float(self, key: str, default: float) -> float:
        try:
            return float(self.params.get(key, default))
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {self.params[key]!r}")

    def get_int(self, key: str, default: int) -> int:
        v = self.get_float(key, default)
        if v != int(v):
            raise ConfigError(f"{key} must be an integer")
        return int(v)

    def get_floats(self, key: str, default) -> list:
        raw = self.params.get(key)
        if raw is None:
            return list(default)
        try:
            return [float(t) for t in str(raw).replace(",", " ").split()]
        except ValueError:
            raise ConfigError(f"{key} must be a list of numbers, got {raw!r}")

    def get_str(self, key: str, default: str) -> str:
        return str(self.params.get(key, default)).strip()


def _num(s: str, key: str, kind=float):
    try:
        return kind(s)
    except ValueError:
        raise ConfigError(f"{key} must be {'an integer' if kind is int else 'a number'}, got {s!r}")


def config_from_mapping(data: dict) -> ExperimentConfig:
    """Build a config from {section: {key: value}}; unknown sections or keys are errors."""
    unknown = set(data) - {"run", "params", "inputs"}
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(sorted(unknown))}")
    run = dict(data.get("run", {}))
    bad = set(run) - RUN_KEYS
    if bad:
        raise ConfigError(f"unknown keys in [run]: {', '.join(sorted(bad))}")
    if "command" not in run:
        raise ConfigError("[run] command is required")
    kw = {"command": run["command"].strip(), "model": run.get("model", "").strip(),
          "rng_seed": _num(run.get("rng_seed", "0"), "rng_seed", int),
          "format": run.get("format", "jsonl").strip(),
          "params": dict(data.get("params", {})), "inputs": dict(data.get("inputs", {}))}
    if "horizon" in run:
        kw["horizon"] = _num(run["horizon"], "horizon")
    if "tolerance" in run:
        kw["tolerance"] = _num(run["tolerance"], "tolerance")
    return ExperimentConfig(**kw)


def parse_config_text(text: str, base_dir: str = ".") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}")
    data = {s: dict(cp[s]) for s in cp.sections()}
    for k, p in data.get("inputs", {}).items():
        if not os.path.isabs(p):
            data["inputs"][k] = os.path.normpath(os.path.join(base_dir, p))
    return config_from_mapping(data)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    return parse_config_text(text, os.path.dirname(os.path.abspath(path)))


# ---------------------------------------------------------------------------
# run record

def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunRecord:
    digest: str
    version: str
    wall_time: float
    outputs: list
    config: dict
    exit_status: int = 0
    message: str = ""

    def to_json(self) -> str:
        return json.dumps(plain(self.__dict__), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        try:
            d = json.loads(text)
            return cls(**d)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"not a run record: {exc}")

    def experiment(self) -> ExperimentConfig:
        return config_from_mapping(self.config)
