"""Strict key-value run configuration.

A document is a sequence of ``key = value`` entries separated by newlines or
commas.  ``#`` starts a comment, values may be double-quoted, unknown keys
are rejected.  Example::

    command = simulate
    domain = torus 1
    kernel = coulomb
    grid = 256
    init = cosine mode=1 amp=0.5
    target = cosine mode=2 amp=0.5
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from .errors import ParseError, ValidationError

COMMANDS = ("simulate", "jko", "probe", "diagnose", "green")
KERNELS = ("coulomb", "energy_distance", "riesz", "log")
MEASURE_KINDS = {
    "uniform": ("lo", "hi"),
    "gaussian": ("mean", "std"),
    "cosine": ("mode", "amp"),
    "file": (),
}


@dataclass(frozen=True)
class MeasureSpec:
    """Initial or target measure: ``kind key=value ...`` or ``file=path``."""

    kind: str
    params: tuple = ()
    path: str | None = None

    def get(self, key, default):
        return dict(self.params).get(key, default)

    def to_text(self) -> str:
        if self.kind == "file":
            return f"file={self.path}"
        parts = [self.kind] + [f"{k}={_fmt(v)}" for k, v in self.params]
        return " ".join(parts)

    @classmethod
    def parse(cls, text: str, fieldname: str, line=None) -> "MeasureSpec":
        words = text.split()
        if not words:
            raise ValidationError(fieldname, "empty measure description", line)
        if words[0].startswith("file="):
            if len(words) > 1:
                raise ValidationError(fieldname, "file= takes a single path", line)
            return cls("file", (), words[0][len("file=") :])
        kind = words[0]
        if kind not in MEASURE_KINDS:
            raise ValidationError(fieldname, f"unknown measure kind {kind!r}", line)
        params = {}
        for w in words[1:]:
            if "=" not in w:
                raise ValidationError(fieldname, f"expected key=value, got {w!r}", line)
            key, val = w.split("=", 1)
            if key not in MEASURE_KINDS[kind]:
                raise ValidationError(fieldname, f"{kind} takes no parameter {key!r}", line)
            params[key] = _number(val, fieldname, line)
        if kind == "cosine":
            if abs(params.get("amp", 0.5)) >= 1:
                raise ValidationError(fieldname, "cosine amplitude must satisfy |amp| < 1", line)
            if params.get("mode", 1) != int(params.get("mode", 1)) or params.get("mode", 1) < 1:
                raise ValidationError(fieldname, "cosine mode must be a positive integer", line)
        if kind == "gaussian" and params.get("std", 1.0) <= 0:
            raise ValidationError(fieldname, "std must be positive", line)
        return cls(kind, tuple(sorted(params.items())))


def _fmt(v) -> str:
    if isinstance(v, float) and v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _number(text, fieldname, line):
    try:
        v = float(text)
    except ValueError:
        raise ValidationError(fieldname, f"not a number: {text!r}", line) from None
    if not math.isfinite(v):
        raise ValidationError(fieldname, "must be finite", line)
    return v


@dataclass(frozen=True)
class RunConfig:
    command: str = "simulate"
    domain: str = "torus"
    dim: int = 1
    kernel: str = "coulomb"
    kernel_s: float | None = None
    scheme: str = "lagrangian"
    n_particles: int = 256
    grid: tuple = (256,)
    dt: float | None = None  # None: chosen from the CFL bound at start-up
    t_end: float = 1.0
    record_every: int = 10
    gamma: float = 0.5
    seed: int = 0
    init: MeasureSpec | None = None  # None: domain default, filled in by parse_config
    target: MeasureSpec | None = None
    output_dir: str = "out"
    tau: float = 0.01
    steps: int = 10
    solver: str = "exact"
    epsilon: float = 0.01
    mode: str = "scan"
    t_min: float = 1e-4
    t_max: float = 1e-1
    t_points: int = 9
    order: int = 1
    rows: int = 11
    heat_t: float = 0.01

    def to_text(self) -> str:
        """Serialize to a document that ``parse_config`` maps back to an equal config."""
        lines = []
        for f in fields(self):
            name = f.name
            if name == "kernel_s":
                continue
            v = getattr(self, name)
            if name == "domain":
                lines.append(f"domain = {v} {self.dim}")
            elif name == "dim":
                continue
            elif name == "kernel":
                lines.append(f"kernel = riesz {_fmt(self.kernel_s)}" if v == "riesz" else f"kernel = {v}")
            elif name == "grid":
                lines.append("grid = " + "x".join(str(n) for n in v))
            elif name == "dt":
                lines.append("dt = auto" if v is None else f"dt = {_fmt(v)}")
            elif isinstance(v, MeasureSpec):
                lines.append(f"{name} = {v.to_text()}")
            elif isinstance(v, float):
                lines.append(f"{name} = {_fmt(v)}")
            else:
                lines.append(f"{name} = {v}")
        return "\n".join(lines) + "\n"


DEFAULT_MEASURES = {
    "torus": (MeasureSpec("cosine", (("amp", 0.5), ("mode", 1.0))), MeasureSpec("cosine", (("amp", 0.5), ("mode", 2.0)))),
    "euclidean": (MeasureSpec("gaussian", (("mean", 0.0), ("std", 1.0))), MeasureSpec("gaussian", (("mean", 2.0), ("std", 1.0)))),
}

KEYS = tuple(f.name for f in fields(RunConfig) if f.name not in ("dim", "kernel_s"))
ALIASES = {"grid_shape": "grid"}


def _split_entries(text: str):
    """Yield ``(key, value, line, column)`` with 1-based positions."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw
        if "#" in line:
            line = line[: line.index("#")]
        col = 0
        for chunk in line.split(","):
            start = col
            col += len(chunk) + 1
            if not chunk.strip():
                continue
            lead = len(chunk) - len(chunk.lstrip())
            if "=" not in chunk:
                raise ParseError(f"expected 'key = value', got {chunk.strip()!r}", lineno, start + lead + 1)
            key, value = chunk.split("=", 1)
            key = key.strip()
            if not key:
                raise ParseError("missing key before '='", lineno, start + lead + 1)
            if not all(c.isalnum() or c in "_-" for c in key):
                raise ParseError(f"invalid key {key!r}", lineno, start + lead + 1)
            value = value.strip()
            if value.startswith('"'):
                if len(value) < 2 or not value.endswith('"'):
                    raise ParseError("unterminated string", lineno, start + chunk.index('"') + 1)
                value = value[1:-1]
            yield key.replace("-", "_"), value, lineno, start + lead + 1


def _int(v, name, line, minimum=None):
    try:
        out = int(v)
    except ValueError:
        raise ValidationError(name, f"not an integer: {v!r}", line) from None
    if minimum is not None and out < minimum:
        raise ValidationError(name, f"must be >= {minimum}", line)
    return out


def _pos(v, name, line):
    out = _number(v, name, line)
    if out <= 0:
        raise ValidationError(name, "must be positive", line)
    return out


def _choice(v, name, line, options):
    if v not in options:
        raise ValidationError(name, f"expected one of {', '.join(options)}; got {v!r}", line)
    return v


def _apply(cfg: RunConfig, key: str, value: str, line=None) -> RunConfig:
    key = ALIASES.get(key, key)
    if key not in KEYS:
        raise ValidationError(key, "unknown key", line)
    if key == "command":
        return replace(cfg, command=_choice(value, key, line, COMMANDS))
    if key == "domain":
        parts = value.split()
        if len(parts) != 2 or parts[0] not in ("torus", "euclidean"):
            raise ValidationError(key, "expected 'torus d' or 'euclidean d'", line)
        return replace(cfg, domain=parts[0], dim=_int(parts[1], key, line, 1))
    if key == "kernel":
        parts = value.split()
        name = _choice(parts[0] if parts else "", key, line, KERNELS)
        if name == "riesz":
            if len(parts) != 2:
                raise ValidationError(key, "riesz needs an exponent: 'riesz s'", line)
            return replace(cfg, kernel=name, kernel_s=_number(parts[1], key, line))
        if len(parts) != 1:
            raise ValidationError(key, f"{name} takes no argument", line)
        return replace(cfg, kernel=name, kernel_s=None)
    if key == "grid":
        try:
            shape = tuple(int(p) for p in value.lower().split("x"))
        except ValueError:
            raise ValidationError(key, "expected N or N1xN2[x...]", line) from None
        if any(n < 2 for n in shape):
            raise ValidationError(key, "each axis needs at least 2 cells", line)
        return replace(cfg, grid=shape)
    if key == "dt":
        return replace(cfg, dt=None if value == "auto" else _pos(value, key, line))
    if key in ("init", "target"):
        return replace(cfg, **{key: MeasureSpec.parse(value, key, line)})
    if key == "scheme":
        return replace(cfg, scheme=_choice(value, key, line, ("lagrangian", "eulerian")))
    if key == "solver":
        return replace(cfg, solver=_choice(value, key, line, ("exact", "entropic")))
    if key == "mode":
        return replace(cfg, mode=_choice(value, key, line, ("scan", "exponent", "critical")))
    if key in ("n_particles", "record_every", "steps", "t_points", "rows"):
        return replace(cfg, **{key: _int(value, key, line, 1)})
    if key == "seed":
        return replace(cfg, seed=_int(value, key, line, 0))
    if key == "order":
        return replace(cfg, order=int(_choice(value, key, line, ("1", "3"))))
    if key == "gamma":
        g = _pos(value, key, line)
        if g > 1:
            raise ValidationError(key, "must lie in (0, 1]", line)
        return replace(cfg, gamma=g)
    if key == "output_dir":
        if not value:
            raise ValidationError(key, "empty path", line)
        return replace(cfg, output_dir=value)
    return replace(cfg, **{key: _pos(value, key, line)})


def validate(cfg: RunConfig) -> RunConfig:
    """Cross-field checks."""
    if cfg.domain == "torus" and cfg.kernel != "coulomb":
        raise ValidationError("kernel", "the torus supports only the coulomb (Green) kernel")
    if cfg.kernel == "riesz" and not (-1 <= cfg.kernel_s <= cfg.dim - 2 and cfg.kernel_s != 0):
        raise ValidationError("kernel", f"riesz exponent must lie in [-1, {cfg.dim - 2}] without 0")
    if cfg.kernel == "coulomb" and cfg.domain == "euclidean" and cfg.dim < 1:
        raise ValidationError("domain", "dimension must be >= 1")
    if cfg.scheme == "eulerian" and cfg.domain != "torus":
        raise ValidationError("scheme", "the eulerian scheme runs on the torus only")
    if len(cfg.grid) not in (1, cfg.dim):
        raise ValidationError("grid", f"give 1 or {cfg.dim} axis sizes")
    for name in ("init", "target"):
        spec = getattr(cfg, name)
        if spec.kind == "cosine" and cfg.domain != "torus":
            raise ValidationError(name, "cosine profiles live on the torus")
    if cfg.t_min >= cfg.t_max:
        raise ValidationError("t_min", "must be smaller than t_max")
    return cfg


def parse_config(text: str = "", overrides=None) -> RunConfig:
    """Parse a document, then apply ``overrides`` (``(key, value)`` pairs, e.g. CLI flags)."""
    cfg = RunConfig()
    seen = {}
    for key, value, line, col in _split_entries(text):
        canon = ALIASES.get(key, key)
        if canon in seen:
            raise ParseError(f"duplicate key {key!r} (first on line {seen[canon]})", line, col)
        seen[canon] = line
        cfg = _apply(cfg, key, value, line)
    for key, value in overrides or ():
        cfg = _apply(cfg, key.replace("-", "_"), str(value))
    if len(cfg.grid) == 1 and cfg.dim > 1:
        cfg = replace(cfg, grid=cfg.grid * cfg.dim)
    if cfg.init is None:
        cfg = replace(cfg, init=DEFAULT_MEASURES[cfg.domain][0])
    if cfg.target is None:
        cfg = replace(cfg, target=DEFAULT_MEASURES[cfg.domain][1])
    return validate(cfg)


def serialize(cfg: RunConfig) -> str:
    return cfg.to_text()
