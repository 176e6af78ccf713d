"""Run manifests, atomic file output and solution directories."""

from __future__ import annotations

import json
import math
import os
import platform
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .grid import (GridSpec, StructureError, build_equal_measure_grids, build_grids, field_from_csv,
                   field_to_csv, grid_manifest_csv)
from .params import InequalityParams, SystemParams

OUTPUT_ENV = "STEINWEISS_OUTPUT_DIR"


class ArtifactError(RuntimeError):
    """A required run artifact is missing or inconsistent."""


def default_output_dir(command: str) -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "steinweiss-runs")) / command


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def jsonable(x):
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if x is None or isinstance(x, str):
        return x
    return str(x)


def _flatten(prefix, x, out):
    if isinstance(x, dict):
        for k, v in x.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(x, (list, tuple)) and x and isinstance(x[0], dict):
        for i, v in enumerate(x):
            _flatten(f"{prefix}.{i}", v, out)
    elif isinstance(x, (list, tuple)):
        out.append((prefix, ",".join(str(jsonable(v)) for v in x)))
    else:
        out.append((prefix, jsonable(x)))


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    value: object = None
    tolerance: object = None
    note: str = ""

    def as_record(self):
        return {"pass": self.passed, "value": self.value, "tolerance": self.tolerance, "note": self.note}


@dataclass
class RunManifest:
    command: str
    params: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    seed: int = 0
    results: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    version: str = __version__

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def as_record(self) -> dict:
        return jsonable({
            "command": self.command, "version": self.version, "python": platform.python_version(),
            "params": self.params, "grid": self.grid, "options": self.options, "seed": self.seed,
            "results": self.results, "verdicts": {v.name: v.as_record() for v in self.verdicts},
            "passed": self.passed, "artifacts": self.artifacts, "wall_clock_s": self.wall_clock,
        })

    def report_lines(self) -> list:
        rec = self.as_record()
        out = [("command", rec["command"]), ("version", rec["version"]), ("seed", rec["seed"])]
        for key in ("params", "grid", "options", "results"):
            _flatten(key, rec[key], out)
        for v in self.verdicts:
            out.append((f"verdict.{v.name}", "pass" if v.passed else "fail"))
            if v.value is not None:
                out.append((f"verdict.{v.name}.value", jsonable(v.value)))
            if v.tolerance is not None:
                out.append((f"verdict.{v.name}.tolerance", jsonable(v.tolerance)))
            if v.note:
                out.append((f"verdict.{v.name}.note", v.note))
        out.append(("passed", str(self.passed).lower()))
        out.append(("wall_clock_s", f"{self.wall_clock:.3f}"))
        return [f"{k}={v}" for k, v in out]

    def write(self, out_dir):
        out_dir = Path(out_dir)
        atomic_write(out_dir / "report.txt", "\n".join(self.report_lines()) + "\n")
        atomic_write(out_dir / "manifest.json", json.dumps(self.as_record(), indent=2, sort_keys=True) + "\n")


# --- grids and solution directories -----------------------------------------

def make_grids(spec: GridSpec, full=False, layout="standard"):
    if layout == "equal_measure":
        return build_equal_measure_grids(spec, full)
    return build_grids(spec, full)


def grid_record(spec: GridSpec, bg, hg, full, layout) -> dict:
    return {"spec": spec.as_dict(), "full": bool(full), "layout": layout,
            "boundary_nodes": bg.size, "half_nodes": hg.size,
            "boundary_digest": bg.digest(), "half_digest": hg.digest()}


def params_record(obj) -> dict:
    if obj is None:
        return {}
    kind = "inequality" if isinstance(obj, InequalityParams) else "system"
    keys = ("n", "p", "q_prime", "alpha", "beta", "lam", "mu") if kind == "inequality" \
        else ("n", "p0", "q0", "alpha", "beta", "lam", "mu")
    return {"kind": kind, **{k: str(getattr(obj, k)) for k in keys}}


def params_from_record(rec: dict):
    kind = rec.get("kind")
    body = {k: v for k, v in rec.items() if k != "kind"}
    if kind == "inequality":
        return InequalityParams(**body)
    if kind == "system":
        return SystemParams(**body)
    raise ArtifactError(f"unknown parameter kind {kind!r}")


def save_solution(out_dir, manifest: RunManifest, fields: dict, bg, hg, tables: dict | None = None):
    """Write fields (name -> Field), grid node tables, extra CSVs and the manifest."""
    out_dir = Path(out_dir)
    entries = {}
    for name, f in fields.items():
        fname = f"{name}.csv"
        atomic_write(out_dir / fname, field_to_csv(f))
        entries[name] = {"file": fname, "grid": f.grid.kind}
    atomic_write(out_dir / "grid_boundary.csv", grid_manifest_csv(bg))
    atomic_write(out_dir / "grid_half.csv", grid_manifest_csv(hg))
    for name, text in (tables or {}).items():
        atomic_write(out_dir / name, text)
    manifest.artifacts = {"fields": entries, "grid_boundary": "grid_boundary.csv",
                          "grid_half": "grid_half.csv", "tables": sorted(tables or {})}
    manifest.write(out_dir)


@dataclass
class LoadedSolution:
    path: Path
    manifest: dict
    params: object
    bg: object
    hg: object
    fields: dict


def load_solution(path) -> LoadedSolution:
    path = Path(path)
    mf = path / "manifest.json"
    if not mf.is_file():
        raise ArtifactError(f"{path}: no manifest.json")
    rec = json.loads(mf.read_text())
    try:
        g = rec["grid"]
        spec = GridSpec(**g["spec"])
        entries = rec["artifacts"]["fields"]
    except KeyError as exc:
        raise ArtifactError(f"{mf}: missing entry {exc}") from exc
    bg, hg = make_grids(spec, g.get("full", False), g.get("layout", "standard"))
    if bg.digest() != g.get("boundary_digest") or hg.digest() != g.get("half_digest"):
        raise ArtifactError(f"{mf}: rebuilt grids do not match the recorded digests")
    fields = {}
    for name, e in entries.items():
        f = path / e["file"]
        if not f.is_file():
            raise ArtifactError(f"{path}: missing field file {e['file']}")
        grid = bg if e["grid"] == "boundary" else hg
        try:
            fields[name] = field_from_csv(f.read_text(), grid)
        except (StructureError, ValueError) as exc:
            raise ArtifactError(f"{f}: {exc}") from exc
    params = params_from_record(rec["params"]) if rec.get("params") else None
    return LoadedSolution(path, rec, params, bg, hg, fields)
