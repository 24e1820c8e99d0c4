"""Run configuration: flat ``section.key = value`` text files merged over defaults.

Example::

    # comments start with '#'
    physics.mu = 1.0
    interpolation.p_alpha = 18e-7
    toggles.mesh_deformation = off

Unknown keys, unparsable values and invariant violations raise
:class:`~tofsi.errors.ConfigError` naming the offending key.
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .coupling import CouplerConfig
from .elastic import SolidProperties
from .errors import ConfigError
from .fluid import FluidProperties
from .grid import GeometryConfig
from .materials import InterpolationParams, ProjectionParams
from .optimize import OptimizerConfig

_TRUE = {"on", "true", "yes", "1"}
_FALSE = {"off", "false", "no", "0"}


@dataclass
class PhysicsConfig:
    rho_f: float = 1.0
    mu: float = 1.0
    v_max: float = 1.0
    E_max: float = 1e4
    E_min: float = 1e-6
    nu: float = 0.3
    alpha_max: float = 1e7
    alpha_min: float = 0.0
    E_mesh: float = 1.0
    nu_mesh: float = 0.3

    def fluid(self) -> FluidProperties:
        return FluidProperties(self.rho_f, self.mu, self.v_max)

    def solid(self) -> SolidProperties:
        return SolidProperties(self.nu, self.E_mesh, self.nu_mesh)

    def validate(self) -> None:
        self.fluid().validate()
        self.solid().validate()


@dataclass
class InterpolationConfig:
    p_alpha: float = 18e-7
    delta: float = 1.0      # p_E increments are delta times those of p_U


@dataclass
class TogglesConfig:
    mesh_deformation: bool = True


@dataclass
class OutputConfig:
    dir: str = "out"
    snapshot_every: int = 10   # 0 disables periodic snapshots
    vtk: bool = True

    def validate(self) -> None:
        if self.snapshot_every < 0:
            raise ConfigError("output.snapshot_every must be >= 0")


@dataclass
class VerifyConfig:
    elements: tuple = ()       # empty: 2 x 4 lattice over the design box
    step: float = 1e-10

    def validate(self) -> None:
        if self.step == 0:
            raise ConfigError("verify.step must be nonzero")


@dataclass
class RunConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    interpolation: InterpolationConfig = field(default_factory=InterpolationConfig)
    projection: ProjectionParams = field(default_factory=ProjectionParams)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    solver: CouplerConfig = field(default_factory=CouplerConfig)
    toggles: TogglesConfig = field(default_factory=TogglesConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)

    # --------------------------------------------------------- derived objects
    def fluid_properties(self) -> FluidProperties:
        return self.physics.fluid()

    def solid_properties(self) -> SolidProperties:
        return self.physics.solid()

    def interpolation_params(self) -> InterpolationParams:
        p = self.physics
        return InterpolationParams(alpha_max=p.alpha_max, alpha_min=p.alpha_min, p_alpha=self.interpolation.p_alpha,
                                   E_max=p.E_max, E_min=p.E_min, delta=self.interpolation.delta)

    def validate(self) -> "RunConfig":
        for f in dataclasses.fields(self):
            section = getattr(self, f.name)
            if hasattr(section, "validate"):
                try:
                    section.validate()
                except ConfigError as exc:
                    raise ConfigError(f"[{f.name}] {exc}") from None
        self.interpolation_params().validate()
        return self


def _convert(key: str, raw: str, typ):
    text = raw.strip()
    try:
        if typ is bool:
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if typ is int:
            return int(text)
        if typ is float:
            return float(text)
        if typ is str:
            return text
        if typ is tuple:
            return tuple(int(t) for t in text.replace(",", " ").split())
    except ValueError:
        pass
    else:
        raise ConfigError(f"{key}: unsupported field type {typ}")
    name = getattr(typ, "__name__", str(typ))
    raise ConfigError(f"{key}: cannot parse {raw.strip()!r} as {name}")


def _format(value) -> str:
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def apply_overrides(cfg: RunConfig, items: dict) -> RunConfig:
    """Apply ``{'section.key': 'text'}`` overrides in place; returns ``cfg``."""
    for key, raw in items.items():
        if key.count(".") != 1:
            raise ConfigError(f"{key}: keys must have the form section.name")
        section_name, name = key.split(".")
        section = getattr(cfg, section_name, None)
        if section is None or not dataclasses.is_dataclass(section):
            raise ConfigError(f"{key}: unknown section {section_name!r}")
        hints = typing.get_type_hints(type(section))
        if name not in {f.name for f in dataclasses.fields(section)}:
            raise ConfigError(f"{key}: unknown key")
        # sections may be frozen, so replace rather than mutate
        setattr(cfg, section_name, dataclasses.replace(section, **{name: _convert(key, raw, hints[name])}))
    return cfg


def parse_config_text(text: str, source: str = "<string>") -> RunConfig:
    items = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in items:
            raise ConfigError(f"{key}: given twice ({source}:{lineno})")
        items[key] = value
    return apply_overrides(RunConfig(), items).validate()


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, str(path))


def format_config(cfg: RunConfig) -> str:
    """Every key with its resolved value; parsing the result reproduces ``cfg``."""
    lines = []
    for f in dataclasses.fields(cfg):
        section = getattr(cfg, f.name)
        for g in dataclasses.fields(section):
            lines.append(f"{f.name}.{g.name} = {_format(getattr(section, g.name))}")
    return "\n".join(lines) + "\n"


def write_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(format_config(cfg))
