"""Run configuration: sectioned ``key = value`` text <-> :class:`RunConfig`."""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields, replace

from .errors import ParseError, ValidationError
from .geometry import KINDS, InterfaceDescriptor
from .mesh.mesher import Rectangle

TAU_RULES = ("fixed", "hk", "h2")

# section -> {key: type}
SCHEMA = {
    "domain": {"xmin": float, "xmax": float, "ymin": float, "ymax": float},
    "interface": {"kind": str, "center": "point", "R": float, "a": float, "b": float,
                  "r0": float, "amplitude": float, "lobes": int},
    "discretization": {"k": int, "h": float, "tau_rule": str, "tau_c": float, "tau": float,
                       "mesh_file": str},
    "physics": {"T": float, "nu_minus": float, "nu_plus": float, "gamma0": float, "force": float},
    "output": {"output_dir": str, "snapshot_every": int},
}


@dataclass(frozen=True)
class RunConfig:
    interface: InterfaceDescriptor
    domain: Rectangle = field(default_factory=Rectangle)
    k: int = 2
    h: float = 0.1
    tau_rule: str = "hk"
    tau_c: float = 1.0
    tau: float | None = None
    T: float = 0.0
    nu_minus: float = 1.0
    nu_plus: float = 1.0
    gamma0: float = 1.0
    force: float = 0.0
    output_dir: str = "out"
    snapshot_every: int = 10
    mesh_file: str | None = None

    def time_step(self, h=None):
        h = self.h if h is None else h
        if self.tau_rule == "fixed":
            return float(self.tau)
        if self.tau_rule == "hk":
            return self.tau_c * h**self.k
        return self.tau_c * h**2

    def n_steps(self):
        return max(0, math.ceil(self.T / self.time_step() - 1e-9))

    def refined(self, level):
        """Config with h halved ``level`` times (time step follows the tau rule)."""
        return replace(self, h=self.h / 2**level)


def _keyline(text, key):
    for i, line in enumerate(text.splitlines(), 1):
        if re.match(rf"\s*{re.escape(key)}\s*[=:]", line):
            return i
    return None


def _convert(kind, raw, key, text):
    try:
        if kind is float:
            return float(raw)
        if kind is int:
            return int(raw)
        if kind == "point":
            parts = [float(v) for v in raw.replace("(", "").replace(")", "").split(",")]
            if len(parts) != 2:
                raise ValueError("need two coordinates")
            return tuple(parts)
        return raw.strip()
    except ValueError as exc:
        raise ParseError(f"bad value for {key!r}: {raw!r} ({exc})", _keyline(text, key)) from None


def _read(text):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("expected a [section] header", exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ParseError("malformed line (expected key = value)", lineno) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ParseError(str(exc).split(":")[0], exc.lineno) from None
    return cp


def apply_overrides(cp, overrides, text=""):
    for item in overrides or ():
        if "=" not in item:
            raise ParseError(f"override {item!r} is not key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        if "." in key:
            section, key = key.split(".", 1)
        else:
            owners = [s for s, keys in SCHEMA.items() if key in keys]
            if len(owners) != 1:
                raise ParseError(f"unknown override key {key!r}")
            section = owners[0]
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ParseError(f"unknown override key {section}.{key}")
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, value)


def parse_config(text: str, overrides=()) -> RunConfig:
    """Parse and validate configuration text; ``overrides`` are ``key=value`` strings."""
    cp = _read(text)
    apply_overrides(cp, overrides, text)
    values = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ParseError(f"unknown section [{section}]", _keyline(text, f"[{section}]") or
                             next((i for i, l in enumerate(text.splitlines(), 1) if l.strip() == f"[{section}]"), None))
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ParseError(f"unknown key {key!r} in [{section}]", _keyline(text, key))
            values[(section, key)] = _convert(SCHEMA[section][key], raw, key, text)
    return _build(values)


def _build(values):
    problems = []
    get = values.get
    kind = get(("interface", "kind"))
    desc = None
    if kind is None:
        problems.append("[interface] kind is required")
    elif kind not in KINDS:
        problems.append(f"interface kind must be one of {KINDS}")
    else:
        center = get(("interface", "center"), (0.0, 0.0))
        try:
            if kind == "circle":
                desc = InterfaceDescriptor.circle(get(("interface", "R"), 0.0), center)
            elif kind == "ellipse":
                desc = InterfaceDescriptor.ellipse(get(("interface", "a"), 0.0), get(("interface", "b"), 0.0), center)
            else:
                desc = InterfaceDescriptor.star(get(("interface", "r0"), 0.0), get(("interface", "amplitude"), 0.0),
                                                get(("interface", "lobes"), 0), center)
        except Exception as exc:  # descriptor invariants
            problems.append(f"interface: {exc}")
    dom = Rectangle(*(get(("domain", key), default) for key, default in
                      (("xmin", -1.0), ("xmax", 1.0), ("ymin", -1.0), ("ymax", 1.0))))
    kw = dict(
        k=get(("discretization", "k"), 2),
        h=get(("discretization", "h"), 0.1),
        tau_rule=get(("discretization", "tau_rule"), "hk"),
        tau_c=get(("discretization", "tau_c"), 1.0),
        tau=get(("discretization", "tau")),
        mesh_file=get(("discretization", "mesh_file")),
        T=get(("physics", "T"), 0.0),
        nu_minus=get(("physics", "nu_minus"), 1.0),
        nu_plus=get(("physics", "nu_plus"), 1.0),
        gamma0=get(("physics", "gamma0"), 1.0),
        force=get(("physics", "force"), 0.0),
        output_dir=get(("output", "output_dir"), "out"),
        snapshot_every=get(("output", "snapshot_every"), 10),
    )
    if kw["k"] < 2:
        problems.append("k must be ≥ 2 (inf-sup)")
    if not kw["h"] > 0:
        problems.append("h must be > 0")
    if kw["T"] < 0:
        problems.append("T must be ≥ 0")
    for nu in ("nu_minus", "nu_plus"):
        if not kw[nu] > 0:
            problems.append(f"{nu} must be > 0")
    if kw["tau_rule"] not in TAU_RULES:
        problems.append(f"tau_rule must be one of {TAU_RULES}")
    elif kw["tau_rule"] == "fixed":
        if kw["tau"] is None or not kw["tau"] > 0:
            problems.append("tau_rule = fixed needs tau > 0")
    elif not kw["tau_c"] > 0:
        problems.append("tau_c must be > 0")
    if kw["gamma0"] != 1.0:
        problems.append("gamma0 is fixed to 1")
    if kw["force"] != 0.0:
        problems.append("external force is fixed to 0")
    if kw["snapshot_every"] < 1:
        problems.append("snapshot_every must be ≥ 1")
    if not (dom.xmax > dom.xmin and dom.ymax > dom.ymin):
        problems.append("domain must have xmax > xmin and ymax > ymin")
    if problems:
        raise ValidationError(problems)
    return RunConfig(interface=desc, domain=dom, **kw)


def serialize_config(cfg: RunConfig) -> str:
    d = cfg.interface
    lines = ["[domain]"]
    for key in ("xmin", "xmax", "ymin", "ymax"):
        lines.append(f"{key} = {getattr(cfg.domain, key)!r}")
    lines += ["", "[interface]", f"kind = {d.kind}", f"center = {d.center[0]!r}, {d.center[1]!r}"]
    lines += [f"{key} = {val!r}" for key, val in d.params().items()]
    lines += ["", "[discretization]", f"k = {cfg.k}", f"h = {cfg.h!r}", f"tau_rule = {cfg.tau_rule}",
              f"tau_c = {cfg.tau_c!r}"]
    if cfg.tau is not None:
        lines.append(f"tau = {cfg.tau!r}")
    if cfg.mesh_file is not None:
        lines.append(f"mesh_file = {cfg.mesh_file}")
    lines += ["", "[physics]", f"T = {cfg.T!r}", f"nu_minus = {cfg.nu_minus!r}", f"nu_plus = {cfg.nu_plus!r}",
              f"gamma0 = {cfg.gamma0!r}", f"force = {cfg.force!r}"]
    lines += ["", "[output]", f"output_dir = {cfg.output_dir}", f"snapshot_every = {cfg.snapshot_every}", ""]
    return "\n".join(lines)


def config_fields():
    return [f.name for f in fields(RunConfig)]
