"""YAML scenario configuration, validated strictly (unknown keys are errors)."""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .exceptions import InputError
from .solver import MERGE, RegionSpec, normalise_mode
from .terrain import CostZone, Manifold, apply_cost_model, build_manifold, read_raster

log = logging.getLogger(__name__)

CACHE_ENV = "CABLEPLAN_CACHE_DIR"

__all__ = ["ScenarioConfig", "parse_scenario", "load_scenario", "build_scenario", "CACHE_ENV"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class TerrainSection(_Strict):
    path: str
    format: Literal["esri", "xyz"] = "esri"
    cell_size: Optional[float] = Field(default=None, gt=0)


class ZoneSection(_Strict):
    polygon: List[Tuple[float, float]]
    bu_cost: float = Field(ge=0)
    cable_cost: Optional[float] = Field(default=None, ge=0)


class CostModelSection(_Strict):
    base_cable_cost: float = Field(default=1.0, ge=0)
    base_bu_cost: float = Field(default=0.0, ge=0)
    zones: List[ZoneSection] = []
    land_penalty: float = Field(default=1e3, ge=0)


class CandidateSection(_Strict):
    xy: Optional[Tuple[float, float]] = None
    vertex: Optional[Tuple[int, int]] = None  # (row, col)
    station_cost: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _one_location(self):
        if (self.xy is None) == (self.vertex is None):
            raise ValueError("candidate needs exactly one of 'xy' or 'vertex'")
        return self


class RegionSection(_Strict):
    name: str
    candidates: List[CandidateSection] = Field(min_length=1)


class LimitsSection(_Strict):
    max_vertices: int = Field(default=5000, gt=0)
    max_oracle_evals: int = Field(default=10_000_000, gt=0)


class OutputSection(_Strict):
    geojson: str = "solution.geojson"
    report: str = "report.txt"
    cache_dir: Optional[str] = None


class SweepSection(_Strict):
    bu_costs: List[float] = Field(min_length=1)

    @field_validator("bu_costs")
    @classmethod
    def _non_negative(cls, v):
        if any(b < 0 for b in v):
            raise ValueError("sweep BU costs must be non-negative")
        return v


class ScenarioConfig(_Strict):
    terrain: TerrainSection
    cost_model: CostModelSection = CostModelSection()
    regions: List[RegionSection] = Field(min_length=2)
    mode: Literal["merge_allowed", "three_branch_only"] = MERGE
    limits: LimitsSection = LimitsSection()
    output: OutputSection = OutputSection()
    sweep: Optional[SweepSection] = None
    base_dir: str = "."

    @field_validator("mode", mode="before")
    @classmethod
    def _alias(cls, v):
        return normalise_mode(v) if isinstance(v, str) else v

    def resolve(self, p: Optional[str]) -> Optional[Path]:
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def cache_dir(self) -> Optional[Path]:
        env = os.environ.get(CACHE_ENV)
        if env:
            return Path(env)
        return self.resolve(self.output.cache_dir)


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        where = ".".join(str(x) for x in e["loc"]) or "<root>"
        if e["type"] == "extra_forbidden":
            lines.append(f"unknown key '{e['loc'][-1]}' at {where}")
        elif e["type"] == "missing":
            lines.append(f"missing required key '{where}'")
        else:
            lines.append(f"{where}: {e['msg']}")
    return "; ".join(lines)


def parse_scenario(text: str, base_dir=".") -> ScenarioConfig:
    """Parse YAML text into a validated :class:`ScenarioConfig`."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InputError(f"config is not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise InputError("config must be a mapping at the top level")
    if "base_dir" in data:
        raise InputError("unknown key 'base_dir' at base_dir")
    try:
        cfg = ScenarioConfig(**data, base_dir=str(base_dir))
    except ValidationError as exc:
        raise InputError(f"invalid config: {_format_errors(exc)}") from None
    path = cfg.resolve(cfg.terrain.path)
    if not path.exists():
        raise InputError(f"terrain file not found: {path}")
    return cfg


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise InputError(f"config file not found: {path}")
    return parse_scenario(path.read_text(), base_dir=path.parent)


def build_manifold_from_config(cfg: ScenarioConfig, bu_cost: Optional[float] = None) -> Manifold:
    raster, cs, origin = read_raster(cfg.resolve(cfg.terrain.path), cfg.terrain.format)
    if cfg.terrain.cell_size is not None:
        cs = cfg.terrain.cell_size
    m = build_manifold(raster, cs, origin)
    cmod = cfg.cost_model
    zones = [CostZone(tuple(z.polygon), z.bu_cost, z.cable_cost) for z in cmod.zones]
    base_bu = cmod.base_bu_cost if bu_cost is None else bu_cost
    return apply_cost_model(m, cmod.base_cable_cost, base_bu, zones, cmod.land_penalty)


def _snap(m: Manifold, region: RegionSection, c: CandidateSection) -> int:
    if c.vertex is not None:
        r, col = c.vertex
        if not (0 <= r < m.rows and 0 <= col < m.cols):
            raise InputError(f"region '{region.name}': vertex {list(c.vertex)} outside {m.rows}x{m.cols} grid")
        return m.vertex_index(r, col)
    v, off = m.nearest_vertex(*c.xy)
    if off > 0.5 * m.cell_size:
        log.warning(
            "region '%s': candidate %s snapped %.3g m to vertex %d (more than half a cell)",
            region.name,
            list(c.xy),
            off,
            v,
        )
    return v


def build_regions(cfg: ScenarioConfig, m: Manifold) -> list:
    return [
        RegionSpec(tuple((_snap(m, r, c), c.station_cost) for c in r.candidates), r.name) for r in cfg.regions
    ]


def build_scenario(cfg: ScenarioConfig, bu_cost: Optional[float] = None):
    """Manifold and region specs for ``cfg`` (optionally with a uniform BU cost override)."""
    m = build_manifold_from_config(cfg, bu_cost)
    return m, build_regions(cfg, m)
