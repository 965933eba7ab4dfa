"""Scenario files: JSON schema, validation and conversion into runtime objects."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ScenarioError
from .guidance import ComfortProfile, DegradationReport, TacticalParameters
from .mpc import MpcConfig
from .vehicle import PRESETS, VehicleParams
from .world import PolygonalWorld, Pose2, grid_to_polygons, read_pgm

SCHEMA_VERSION = 1

_pose = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 3}
_point = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_polyline = {"type": "array", "items": _point, "minItems": 2}

SCHEMA = {
    "type": "object",
    "required": ["schema_version", "name", "world", "start", "goal", "duration"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "regions": {"type": "object", "additionalProperties": {"type": "array", "items": _point, "minItems": 3}},
        "seed": {"type": "integer"},
        "world": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "bounds": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
                "obstacles": {"type": "array", "items": {"type": "array", "items": _point, "minItems": 3}},
                "legal_lines": {"type": "array", "items": _polyline},
                "pgm": {"type": "string"},
                "resolution": {"type": "number", "exclusiveMinimum": 0},
                "origin": _pose,
                "min_area": {"type": "number", "minimum": 0},
                "threshold": {"type": "integer", "minimum": 0, "maximum": 255},
                "random": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "count": {"type": "integer", "minimum": 0},
                        "size": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                        "region": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
                        "clearance": {"type": "number", "minimum": 0},
                    },
                },
            },
        },
        "start": _pose,
        "goal": _pose,
        "reference": _polyline,
        "vehicle": {
            "oneOf": [
                {"type": "string", "enum": sorted(PRESETS)},
                {"type": "object", "properties": {"preset": {"type": "string", "enum": sorted(PRESETS)}}},
            ]
        },
        "mpc": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "horizon": {"type": "integer", "minimum": 2},
                "Ts": {"type": "number", "exclusiveMinimum": 0},
                "slack_weight": {"type": "number", "minimum": 0},
                "max_solve_iterations": {"type": "integer", "minimum": 1},
                "kkt_tolerance": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "tactical": {"type": "object"},
        "guidance": {"type": "object"},
        "speed": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "profile": {"type": "array", "items": _point, "minItems": 1},
                "stop_at_goal": {"type": "boolean"},
                "decel": {"type": "number", "exclusiveMinimum": 0},
                "gain": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "events": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["time", "type"],
                "properties": {
                    "time": {"type": "number", "minimum": 0},
                    "type": {"enum": ["degradation", "infeasible"]},
                    "actuator": {"enum": ["FrontSteer", "RearSteer"]},
                    "angle_scale": {"type": "number", "minimum": 0, "maximum": 1},
                    "rate_scale": {"type": "number", "minimum": 0, "maximum": 1},
                    "source": {"enum": ["Guidance", "Stabilization"]},
                    "cycles": {"type": "integer", "minimum": 1},
                },
            },
        },
        "duration": {"type": "number", "exclusiveMinimum": 0},
        "plant_dt": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.002},
    },
}


@dataclass(frozen=True)
class GuidanceConfig:
    inflation_margin: float = 0.1
    w_start: float = 1.0
    w_end: float = 1.0
    e_default_min: float = -1.0
    e_default_max: float = 1.0
    margin: float = 0.05  # added to the vehicle half width for obstacle bounds
    legal_margin: float = 0.0  # added to the vehicle half width for legal lines
    emergency_e_min: float = -3.0
    emergency_e_max: float = 3.0
    goal_extension: float = 1.0
    goal_align_distance: float = 0.0  # within this distance of the goal the heading target becomes the goal heading
    comfort_profile: ComfortProfile = ComfortProfile.EMPTY

    def __post_init__(self):
        object.__setattr__(self, "comfort_profile", ComfortProfile(self.comfort_profile))


@dataclass(frozen=True)
class SpeedProfile:
    """Piecewise-constant target speed with optional braking to stop at the goal."""

    profile: tuple[tuple[float, float], ...] = ((0.0, 1.0),)
    stop_at_goal: bool = False
    decel: float = 0.5
    gain: float = 2.0

    def target(self, t: float) -> float:
        v = self.profile[0][1]
        for ti, vi in self.profile:
            if t + 1e-12 >= ti:
                v = vi
        return v

    def limited(self, t: float, remaining: float) -> float:
        v = self.target(t)
        if self.stop_at_goal:
            v = min(v, math.sqrt(2.0 * self.decel * max(remaining, 0.0)))
        return v


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    report: DegradationReport | None = None
    cycles: int = 0


@dataclass(frozen=True)
class Scenario:
    name: str
    world: PolygonalWorld
    start: Pose2
    goal: Pose2
    vehicle: VehicleParams
    mpc: MpcConfig
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    speed: SpeedProfile = field(default_factory=SpeedProfile)
    events: tuple[Event, ...] = ()
    duration: float = 10.0
    plant_dt: float = 0.002
    reference: tuple | None = None
    seed: int = 0
    regions: dict = field(default_factory=dict)  # named annotation polygons used for scoring

    def __post_init__(self):
        if self.duration <= 0:
            raise ScenarioError("duration must be positive")
        if self.plant_dt > self.mpc.Ts:
            raise ScenarioError("plant dt must not exceed Ts")
        ratio = self.mpc.Ts / self.plant_dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ScenarioError("Ts must be an integer multiple of the plant dt")
        times = [e.time for e in self.events]
        if times != sorted(times):
            raise ScenarioError("events must be sorted by time")

    @property
    def substeps(self) -> int:
        return int(round(self.mpc.Ts / self.plant_dt))

    @property
    def cycles(self) -> int:
        return int(math.floor(self.duration / self.mpc.Ts + 1e-9))

    @property
    def plant_steps(self) -> int:
        return int(math.floor(self.duration / self.plant_dt + 1e-9))


def _pose(v) -> Pose2:
    return Pose2(float(v[0]), float(v[1]), float(v[2]) if len(v) > 2 else 0.0)


def _known(cls, data: dict, where: str) -> dict:
    names = {f.name for f in fields(cls)}
    extra = set(data) - names
    if extra:
        raise ScenarioError(f"unknown {where} keys: {sorted(extra)}")
    return data


def random_world(seed: int, count: int, region, size=(0.3, 1.0), clearance: float = 0.5,
                 keep_clear=(), bounds=None) -> PolygonalWorld:
    """Seeded random rectangles inside ``region`` kept ``clearance`` away from given points."""
    rng = np.random.default_rng(seed)
    x0, y0, x1, y1 = region
    polys = []
    attempts = 0
    while len(polys) < count and attempts < 1000 * max(count, 1):
        attempts += 1
        c = rng.uniform([x0, y0], [x1, y1])
        w, h = rng.uniform(size[0], size[1], size=2)
        a = rng.uniform(-math.pi, math.pi)
        R = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
        poly = np.array([[-w, -h], [w, -h], [w, h], [-w, h]]) * 0.5 @ R.T + c
        if poly[:, 0].min() < x0 or poly[:, 0].max() > x1 or poly[:, 1].min() < y0 or poly[:, 1].max() > y1:
            continue
        if any(np.hypot(*(c - np.asarray(q))) < clearance + 0.5 * math.hypot(w, h) for q in keep_clear):
            continue
        polys.append(poly)
    return PolygonalWorld(tuple(polys), tuple(bounds) if bounds is not None else (x0, y0, x1, y1))


def _build_world(data: dict, base_dir: Path, seed: int, start: Pose2, goal: Pose2) -> PolygonalWorld:
    legal = tuple(tuple(map(tuple, line)) for line in data.get("legal_lines", []))
    if "pgm" in data:
        origin = _pose(data.get("origin", [0.0, 0.0, 0.0]))
        grid = read_pgm(base_dir / data["pgm"], origin, data.get("resolution", 0.05), data.get("threshold", 128))
        world = grid_to_polygons(grid, data.get("min_area", 0.0), data.get("bounds"))
        return replace(world, legal_lines=legal) if legal else world
    if "random" in data:
        r = data["random"]
        bounds = data.get("bounds", [-10, -10, 10, 10])
        w = random_world(seed, r.get("count", 3), r.get("region", bounds), r.get("size", [0.3, 1.0]),
                         r.get("clearance", 0.5), (start.xy, goal.xy), bounds)
        extra = tuple(np.asarray(p, float) for p in data.get("obstacles", []))
        return PolygonalWorld(w.obstacles + extra, w.bounds, legal)
    return PolygonalWorld(tuple(np.asarray(p, float) for p in data.get("obstacles", [])),
                          tuple(data.get("bounds", [-50, -50, 50, 50])), legal)


def _vehicle(entry) -> VehicleParams:
    if entry is None:
        return PRESETS["MAX"]
    if isinstance(entry, str):
        return PRESETS[entry]
    entry = dict(entry)
    preset = entry.pop("preset", None)
    if preset is not None:
        return replace(PRESETS[preset], **_known(VehicleParams, entry, "vehicle"))
    return VehicleParams(**_known(VehicleParams, entry, "vehicle"))


def validate(data: dict) -> None:
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise ScenarioError(f"{path or '<root>'}: {exc.message}") from None


def scenario_from_dict(data: dict, base_dir=".", seed: int | None = None) -> Scenario:
    validate(data)
    base_dir = Path(base_dir)
    seed = int(data.get("seed", 0) if seed is None else seed)
    start, goal = _pose(data["start"]), _pose(data["goal"])
    try:
        world = _build_world(data["world"], base_dir, seed, start, goal)
        tactical = TacticalParameters(**_known(TacticalParameters, dict(data.get("tactical", {})), "tactical"))
        mpc = MpcConfig(tactical=tactical, **data.get("mpc", {}))
        guidance = GuidanceConfig(**_known(GuidanceConfig, dict(data.get("guidance", {})), "guidance"))
        sp = dict(data.get("speed", {}))
        if "profile" in sp:
            sp["profile"] = tuple((float(t), float(v)) for t, v in sp["profile"])
        speed = SpeedProfile(**sp)
        events = []
        for ev in data.get("events", []):
            if ev["type"] == "degradation":
                rep = DegradationReport(ev.get("actuator", "FrontSteer"), ev.get("angle_scale", 1.0),
                                        ev.get("rate_scale", 1.0), ev.get("source", "Guidance"))
                events.append(Event(float(ev["time"]), "degradation", report=rep))
            else:
                events.append(Event(float(ev["time"]), "infeasible", cycles=int(ev.get("cycles", 1))))
        reference = tuple(map(tuple, data["reference"])) if "reference" in data else None
        return Scenario(
            name=data["name"], world=world, start=start, goal=goal, vehicle=_vehicle(data.get("vehicle")),
            mpc=mpc, guidance=guidance, speed=speed, events=tuple(events), duration=float(data["duration"]),
            plant_dt=float(data.get("plant_dt", 0.002)), reference=reference, seed=seed,
            regions={k: np.asarray(v, float) for k, v in data.get("regions", {}).items()},
        )
    except ScenarioError:
        raise
    except (TypeError, ValueError, OSError) as exc:
        raise ScenarioError(str(exc)) from exc


def load_scenario(path, seed: int | None = None) -> Scenario:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return scenario_from_dict(data, path.parent, seed)


def load_profiles(path) -> list[tuple[str, dict]]:
    """Profiles file: JSON list of ``{"name": ..., "tactical": {...}}`` overrides."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list) or len(data) < 2:
        raise ScenarioError("profiles file must list at least two profiles")
    out = []
    for i, item in enumerate(data):
        out.append((str(item.get("name", f"profile{i}")), dict(item.get("tactical", {}))))
    return out
