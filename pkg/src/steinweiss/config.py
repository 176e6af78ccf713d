"""Sectioned key = value run configuration.

Numbers may be written as decimals or as rationals ``a/b``; rationals and
integers become Fractions so that constraint boundaries are tested exactly.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from .extremal import SolveOptions
from .grid import GridError, GridSpec
from .params import InequalityParams, ParameterDomainError, SystemParams, as_number
from .system import SystemOptions


class ConfigError(ValueError):
    """Malformed or inconsistent configuration; names the line and field."""

    def __init__(self, message, path="<config>", line=None, key=None):
        where = f"{path}:{line}" if line is not None else str(path)
        tag = f" [{key}]" if key else ""
        super().__init__(f"{where}{tag}: {message}")
        self.path, self.line, self.key = path, line, key


INEQUALITY_KEYS = ("n", "p", "q_prime", "alpha", "beta", "lam", "mu")
SYSTEM_KEYS = ("n", "p0", "q0", "alpha", "beta", "lam", "mu")
GRID_KEYS = {"n": int, "r_min": float, "r_max": float, "n_radial": int, "n_height": int,
             "n_angular": int, "spacing": str}
GRID_EXTRA = {"full": bool, "layout": str}
SOLVER_KEYS = {"max_iters": int, "tol_rel": float, "damping": float, "symmetrize_each_step": bool,
               "seed": int, "anderson": int, "tol_field": float, "tol": float}
ALIASES = {"lambda": "lam", "q'": "q_prime", "qprime": "q_prime"}
SECTIONS = ("inequality", "system", "grid", "solver")


@dataclass
class RunConfig:
    path: str = "<config>"
    inequality: InequalityParams | None = None
    system: SystemParams | None = None
    grid: GridSpec = field(default_factory=GridSpec)
    full: bool = False
    layout: str = "standard"
    solver: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def extremal_options(self, **override) -> SolveOptions:
        keys = SolveOptions.__dataclass_fields__
        kw = {k: v for k, v in self.solver.items() if k in keys}
        kw.update({k: v for k, v in override.items() if v is not None})
        return SolveOptions(**kw)

    def system_options(self, **override) -> SystemOptions:
        kw = {}
        s = self.solver
        if "max_iters" in s:
            kw["max_iters"] = s["max_iters"]
        if "tol" in s:
            kw["tol"] = s["tol"]
        if "damping" in s:
            kw["damping"] = s["damping"]
        if "anderson" in s:
            kw["anderson"] = s["anderson"]
        kw.update({k: v for k, v in override.items() if v is not None})
        return SystemOptions(**kw)

    @property
    def seed(self) -> int:
        return int(self.solver.get("seed", 0))


def _key_lines(text: str) -> dict:
    """(section, key) -> 1-based line number, following configparser's syntax."""
    out = {}
    section = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip().lower()
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", s)
        if m and section is not None:
            out.setdefault((section, m.group(1).strip().lower()), i)
    return out


def _typed(kind, text):
    if kind is bool:
        t = text.strip().lower()
        if t in ("1", "true", "yes", "on"):
            return True
        if t in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind is int:
        v = as_number(text)
        if int(v) != v:
            raise ValueError(f"expected an integer, got {text!r}")
        return int(v)
    if kind is float:
        return float(as_number(text))
    return text.strip()


def parse_config(text: str, path: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(str(exc).splitlines()[0], path, line) from exc
    lines = _key_lines(text)
    cfg = RunConfig(path=path)

    def err(msg, sec, key=None):
        return ConfigError(msg, path, lines.get((sec, key)) if key else None,
                           f"{sec}.{key}" if key else sec)

    for sec in parser.sections():
        if sec.lower() not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]; expected one of {', '.join(SECTIONS)}", path)
    raw = {}
    for sec in parser.sections():
        items = {}
        for key, value in parser.items(sec):
            items[ALIASES.get(key, key)] = value
        raw[sec.lower()] = items
    cfg.raw = raw

    for sec, keys, cls in (("inequality", INEQUALITY_KEYS, InequalityParams),
                           ("system", SYSTEM_KEYS, SystemParams)):
        if sec not in raw:
            continue
        items = raw[sec]
        unknown = set(items) - set(keys)
        if unknown:
            key = sorted(unknown)[0]
            raise err(f"unknown field {key!r}", sec, key)
        values = {}
        for key, text in items.items():
            try:
                values[key] = as_number(text)
            except ParameterDomainError as exc:
                raise err(str(exc), sec, key) from exc
        required = keys[:3]
        for key in required:
            if key not in values:
                raise err(f"missing required field {key!r}", sec)
        try:
            obj = cls(**values)
        except ParameterDomainError as exc:
            bad = next((k for k in keys if k in str(exc).split()[0]), None)
            raise err(str(exc), sec, bad if bad in items else None) from exc
        setattr(cfg, sec, obj)

    if "grid" in raw:
        items = raw["grid"]
        kw = {}
        for key, text in items.items():
            kind = GRID_KEYS.get(key) or GRID_EXTRA.get(key)
            if kind is None:
                raise err(f"unknown field {key!r}", "grid", key)
            try:
                val = _typed(kind, text)
            except (ValueError, ParameterDomainError) as exc:
                raise err(str(exc), "grid", key) from exc
            if key in GRID_KEYS:
                kw[key] = val
            else:
                setattr(cfg, key, val)
        if cfg.layout not in ("standard", "equal_measure"):
            raise err(f"layout must be standard or equal_measure, got {cfg.layout!r}", "grid", "layout")
        try:
            cfg.grid = GridSpec(**kw)
        except GridError as exc:
            raise err(str(exc), "grid") from exc
    for obj in (cfg.inequality, cfg.system):
        if obj is not None and "grid" in raw and "n" not in raw["grid"]:
            cfg.grid = cfg.grid.replace(n=obj.n)

    if "solver" in raw:
        for key, text in raw["solver"].items():
            kind = SOLVER_KEYS.get(key)
            if kind is None:
                raise err(f"unknown field {key!r}", "solver", key)
            try:
                cfg.solver[key] = _typed(kind, text)
            except (ValueError, ParameterDomainError) as exc:
                raise err(str(exc), "solver", key) from exc
    return cfg


def load_config(path, grid_path=None) -> RunConfig:
    """Read a run file; an optional second file supplies [grid] (and [solver])."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read: {exc.strerror}", str(p)) from exc
    cfg = parse_config(text, str(p))
    if grid_path is not None:
        g = load_config(grid_path)
        if "grid" not in g.raw:
            raise ConfigError("grid file has no [grid] section", str(grid_path))
        n = (cfg.inequality or cfg.system).n if (cfg.inequality or cfg.system) else g.grid.n
        cfg.grid = g.grid if "n" in g.raw["grid"] else g.grid.replace(n=n)
        cfg.full, cfg.layout = g.full, g.layout
        cfg.solver = {**cfg.solver, **g.solver}
    return cfg


def format_config(inequality=None, system=None, grid: GridSpec | None = None, full=False,
                  layout="standard", solver=None) -> str:
    """Inverse of parse_config for the fields it understands."""
    out = []
    for name, obj, keys in (("inequality", inequality, INEQUALITY_KEYS), ("system", system, SYSTEM_KEYS)):
        if obj is None:
            continue
        out.append(f"[{name}]")
        out += [f"{k} = {getattr(obj, k)}" for k in keys]
        out.append("")
    if grid is not None:
        out.append("[grid]")
        out += [f"{k} = {v}" for k, v in grid.as_dict().items()]
        out += [f"full = {str(bool(full)).lower()}", f"layout = {layout}", ""]
    if solver:
        out.append("[solver]")
        out += [f"{k} = {v}" for k, v in solver.items()]
        out.append("")
    return "\n".join(out)
